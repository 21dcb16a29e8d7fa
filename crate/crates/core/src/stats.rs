//! Sample autocovariances, the normalising sequence `c_n`, regular-variation
//! index regression and the two-sample Kolmogorov-Smirnov distance.

use std::f64::consts::FRAC_PI_2;
use std::io::Write;

use serde::Serialize;
use statrs::function::gamma::gamma;

use crate::error::{Error, Result};
use crate::levy::LevyTail;
use crate::markov::{ReturnTable, VisitSampler};
use crate::samplers::{ml_moment, RngStream};

/// Uncentered sample autocovariances `gamma[h] = (1/n) sum_{k=1}^n X_k X_{k+h}`
/// and autocorrelations `rho[h] = gamma[h] / gamma[0]`.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct AcfEstimate {
    pub n: usize,
    pub gamma: Vec<f64>,
    /// `None` when `gamma[0] = 0` (all-zero sample).
    pub rho: Option<Vec<f64>>,
}

impl AcfEstimate {
    pub fn is_degenerate(&self) -> bool {
        self.rho.is_none()
    }
}

/// `x[0]` holds `X_1`; `x` must contain at least `n + max_lag` values.
pub fn acf(x: &[f64], n: usize, max_lag: usize) -> Result<AcfEstimate> {
    if n == 0 {
        return Err(Error::domain("acf requires n >= 1"));
    }
    if x.len() < n + max_lag {
        return Err(Error::domain(format!(
            "acf needs {} values, got {}",
            n + max_lag,
            x.len()
        )));
    }
    let gamma: Vec<f64> = (0..=max_lag)
        .map(|h| x[..n].iter().zip(&x[h..h + n]).map(|(a, b)| a * b).sum::<f64>() / n as f64)
        .collect();
    let rho = if gamma[0] > 0.0 {
        Some(gamma.iter().map(|g| g / gamma[0]).collect())
    } else {
        None
    };
    Ok(AcfEstimate { n, gamma, rho })
}

/// Tail constant of a `q`-stable law: `(1 - q) / (Gamma(2 - q) cos(pi q / 2))`,
/// equivalently `(int_0^inf x^(-q) sin x dx)^(-1)`.
pub fn stable_tail_constant(q: f64) -> Result<f64> {
    if !(q > 0.0 && q < 2.0) {
        return Err(Error::domain(format!(
            "stable_tail_constant requires q in (0,2), got {q}"
        )));
    }
    if q == 1.0 {
        return Err(Error::domain("stable_tail_constant: q = 1 is not supported"));
    }
    Ok((1.0 - q) / (gamma(2.0 - q) * (FRAC_PI_2 * q).cos()))
}

/// `C_{alpha,beta} = Gamma(1 + beta) (E M_beta(1 - V_beta)^(alpha/2))^(2/alpha)`.
pub fn c_alpha_beta(alpha: f64, beta: f64) -> Result<f64> {
    let moment = ml_moment(beta, 0.5 * alpha)?;
    Ok(gamma(1.0 + beta) * moment.powf(2.0 / alpha))
}

/// Growth exponent of `c_n`: `beta + 2 (1 - beta) / alpha`.
pub fn cn_index(alpha: f64, beta: f64) -> f64 {
    beta + 2.0 * (1.0 - beta) / alpha
}

/// `c_n = 2^(2/alpha) C_{alpha,beta} C_{alpha/2}^(-2/alpha) a_n (U^{<-}(1/w_n))^2`.
pub fn c_n(levy: &LevyTail, beta: f64, a_n: f64, w_n: f64) -> Result<f64> {
    let alpha = levy.alpha();
    if !(a_n > 0.0 && w_n > 0.0) {
        return Err(Error::domain("c_n requires positive a_n and w_n"));
    }
    let c_ab = c_alpha_beta(alpha, beta)?;
    let c_half = stable_tail_constant(0.5 * alpha)?;
    let u = levy.inverse_tail(1.0 / w_n)?;
    Ok(2f64.powf(2.0 / alpha) * c_ab * c_half.powf(-2.0 / alpha) * a_n * u * u)
}

/// `c_n` over an `n`-grid, with the constants used to build it.
#[derive(Debug, Clone, Serialize)]
pub struct CnSchedule {
    pub alpha: f64,
    pub beta: f64,
    pub c_ab: f64,
    pub c_half: f64,
    pub grid: Vec<usize>,
    pub a: Vec<f64>,
    pub w: Vec<f64>,
    pub c: Vec<f64>,
}

impl CnSchedule {
    pub fn new(
        levy: &LevyTail,
        beta: f64,
        grid: &[usize],
        a_n: impl Fn(usize) -> f64,
        w_n: impl Fn(usize) -> f64,
    ) -> Result<Self> {
        let a: Vec<f64> = grid.iter().map(|&n| a_n(n)).collect();
        let w: Vec<f64> = grid.iter().map(|&n| w_n(n)).collect();
        let c = a
            .iter()
            .zip(&w)
            .map(|(&a, &w)| c_n(levy, beta, a, w))
            .collect::<Result<Vec<_>>>()?;
        Ok(CnSchedule {
            alpha: levy.alpha(),
            beta,
            c_ab: c_alpha_beta(levy.alpha(), beta)?,
            c_half: stable_tail_constant(0.5 * levy.alpha())?,
            grid: grid.to_vec(),
            a,
            w,
            c,
        })
    }

    /// Schedule from exact `a_n`, `w_n` of a return table.
    pub fn from_table(levy: &LevyTail, beta: f64, table: &ReturnTable, grid: &[usize]) -> Result<Self> {
        if let Some(&n) = grid.iter().find(|&&n| n == 0 || n > table.horizon()) {
            return Err(Error::domain(format!(
                "grid point {n} outside 1..={}",
                table.horizon()
            )));
        }
        Self::new(levy, beta, grid, |n| table.a_n(n), |n| table.wandering_rate(n))
    }

    pub fn value(&self, n: usize) -> Option<f64> {
        self.grid.iter().position(|&g| g == n).map(|i| self.c[i])
    }

    pub fn index_fit(&self) -> Result<RvFit> {
        let x: Vec<f64> = self.grid.iter().map(|&n| n as f64).collect();
        rv_index(&x, &self.c)
    }

    pub fn write_csv<W: Write>(&self, writer: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(writer);
        w.write_record(["n", "a_n", "w_n", "c_n"])?;
        for i in 0..self.grid.len() {
            w.write_record([
                self.grid[i].to_string(),
                self.a[i].to_string(),
                self.w[i].to_string(),
                self.c[i].to_string(),
            ])?;
        }
        w.flush()?;
        Ok(())
    }
}

/// Least-squares fit of `log value` against `log n`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct RvFit {
    pub slope: f64,
    pub stderr: f64,
    pub intercept: f64,
}

pub fn rv_index(n: &[f64], values: &[f64]) -> Result<RvFit> {
    if n.len() != values.len() {
        return Err(Error::domain("rv_index: grid and values differ in length"));
    }
    if n.len() < 4 {
        return Err(Error::domain("rv_index needs at least 4 grid points"));
    }
    if n.iter().chain(values).any(|v| !(*v > 0.0)) {
        return Err(Error::domain("rv_index requires positive grid and values"));
    }
    let x: Vec<f64> = n.iter().map(|v| v.ln()).collect();
    let y: Vec<f64> = values.iter().map(|v| v.ln()).collect();
    let k = x.len() as f64;
    let mx = x.iter().sum::<f64>() / k;
    let my = y.iter().sum::<f64>() / k;
    let sxx: f64 = x.iter().map(|v| (v - mx).powi(2)).sum();
    let sxy: f64 = x.iter().zip(&y).map(|(a, b)| (a - mx) * (b - my)).sum();
    let slope = sxy / sxx;
    let intercept = my - slope * mx;
    let rss: f64 = x
        .iter()
        .zip(&y)
        .map(|(a, b)| (b - intercept - slope * a).powi(2))
        .sum();
    let stderr = (rss / (k - 2.0) / sxx).sqrt();
    Ok(RvFit {
        slope,
        stderr,
        intercept,
    })
}

/// Sup-distance between the empirical distribution functions of `a` and `b`.
pub fn ks_two_sample(a: &[f64], b: &[f64]) -> Result<f64> {
    if a.is_empty() || b.is_empty() {
        return Err(Error::domain("ks_two_sample requires nonempty samples"));
    }
    if a.iter().chain(b).any(|v| v.is_nan()) {
        return Err(Error::domain("ks_two_sample: NaN in sample"));
    }
    let mut a = a.to_vec();
    let mut b = b.to_vec();
    a.sort_by(f64::total_cmp);
    b.sort_by(f64::total_cmp);
    let (na, nb) = (a.len() as f64, b.len() as f64);
    let (mut i, mut j) = (0, 0);
    let mut d: f64 = 0.0;
    while i < a.len() && j < b.len() {
        let x = a[i].min(b[j]);
        while i < a.len() && a[i] <= x {
            i += 1;
        }
        while j < b.len() && b[j] <= x {
            j += 1;
        }
        d = d.max((i as f64 / na - j as f64 / nb).abs());
    }
    Ok(d)
}

/// Linear-interpolation quantile (type 7) of an unsorted sample.
pub fn quantile(values: &[f64], p: f64) -> f64 {
    let mut v = values.to_vec();
    v.sort_by(f64::total_cmp);
    quantile_sorted(&v, p)
}

pub fn quantile_sorted(sorted: &[f64], p: f64) -> f64 {
    if sorted.is_empty() {
        return f64::NAN;
    }
    let h = (sorted.len() - 1) as f64 * p.clamp(0.0, 1.0);
    let lo = h.floor() as usize;
    let hi = h.ceil() as usize;
    sorted[lo] + (h - lo as f64) * (sorted[hi] - sorted[lo])
}

pub fn median(values: &[f64]) -> f64 {
    quantile(values, 0.5)
}

pub fn mean(values: &[f64]) -> f64 {
    values.iter().sum::<f64>() / values.len() as f64
}

/// Monte Carlo estimate of `int |S_n(1_A)|^s dmu` over the Markov shift,
/// using `mu = mu(phi <= n) * mu_n` on the support of `S_n(1_A)` and exact
/// draws of the visit count under `mu_n`.
#[derive(Debug, Clone, Copy, Serialize)]
pub struct OccupationMoment {
    pub n: usize,
    pub s: f64,
    /// `E_{mu_n} S_n^s`.
    pub restricted_mean: f64,
    /// `mu(phi <= n)`.
    pub mass: f64,
    pub samples: usize,
}

impl OccupationMoment {
    /// `int |S_n|^s dmu`.
    pub fn integral(&self) -> f64 {
        self.mass * self.restricted_mean
    }
}

pub fn occupation_moment(
    table: &ReturnTable,
    n: usize,
    s: f64,
    samples: usize,
    rng: &mut RngStream,
) -> Result<OccupationMoment> {
    if samples == 0 {
        return Err(Error::domain("occupation_moment needs samples >= 1"));
    }
    let sampler = VisitSampler::new(table, n)?;
    let total: f64 = (0..samples)
        .map(|_| (sampler.sample_count(rng) as f64).powf(s))
        .sum();
    Ok(OccupationMoment {
        n,
        s,
        restricted_mean: total / samples as f64,
        mass: sampler.restricted_mass(),
        samples,
    })
}

/// `(int |S_n(f^2)|^(alpha/2) dmu)^(2/alpha) / (mu(f^2) C_{alpha,beta} a_n w_n^(2/alpha))`
/// for `f = 1_A`; tends to one.
pub fn growth_ratio(moment: &OccupationMoment, table: &ReturnTable, alpha: f64, beta: f64) -> Result<f64> {
    let n = moment.n;
    let lhs = moment.integral().powf(2.0 / alpha);
    let rhs = c_alpha_beta(alpha, beta)? * table.a_n(n) * table.wandering_rate(n).powf(2.0 / alpha);
    Ok(lhs / rhs)
}

/// Ratio of the two sides of the `c_n` tail relation
/// `U((c_n / a_n)^(1/2)) ~ (1/2) C_{alpha/2} (mu(f^2) a_n)^(alpha/2) / int |S_n(f^2)|^(alpha/2) dmu`.
pub fn cn_tail_ratio(
    moment: &OccupationMoment,
    table: &ReturnTable,
    levy: &LevyTail,
    beta: f64,
) -> Result<f64> {
    let n = moment.n;
    let alpha = levy.alpha();
    let a = table.a_n(n);
    let c = c_n(levy, beta, a, table.wandering_rate(n))?;
    let lhs = levy.tail((c / a).sqrt())?;
    let rhs = 0.5 * stable_tail_constant(0.5 * alpha)? * a.powf(0.5 * alpha) / moment.integral();
    Ok(lhs / rhs)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::markov::{return_probs, LazyWalkChain};

    #[test]
    fn acf_examples() {
        let ones = vec![1.0; 10];
        let e = acf(&ones, 6, 3).unwrap();
        assert!(e.gamma.iter().all(|&g| g == 1.0));
        assert!(e.rho.unwrap().iter().all(|&r| r == 1.0));

        let alt = [1.0, -1.0, 1.0, -1.0, 1.0];
        let e = acf(&alt, 4, 1).unwrap();
        assert_eq!(e.gamma, vec![1.0, -1.0]);
        assert_eq!(e.rho.unwrap()[1], -1.0);

        let x = [2.0, 0.0, 1.0, 0.0, 2.0, 0.0];
        let e = acf(&x, 4, 2).unwrap();
        assert_eq!(e.gamma[0], 1.25);
        assert_eq!(e.gamma[2], 1.0);
        assert!((e.rho.unwrap()[2] - 0.8).abs() < 1e-15);
    }

    #[test]
    fn acf_degenerate_and_short() {
        let e = acf(&[0.0; 8], 5, 2).unwrap();
        assert!(e.is_degenerate());
        assert_eq!(e.gamma[0], 0.0);
        assert!(acf(&[1.0; 4], 4, 1).is_err());
        assert!(acf(&[1.0; 4], 0, 1).is_err());
    }

    #[test]
    fn tail_constant_values() {
        let c = stable_tail_constant(0.5).unwrap();
        assert!((c - 0.797_884_560_802_865_4).abs() < 1e-12);
        let c = stable_tail_constant(0.01).unwrap();
        assert!((0.98..=1.0).contains(&c));
        assert!(stable_tail_constant(1.0).is_err());
        assert!(stable_tail_constant(0.0).is_err());
        assert!(stable_tail_constant(2.0).is_err());
    }

    #[test]
    fn cn_index_and_beta_zero_case() {
        let levy = LevyTail::with_default_p0(1.5, 1.0).unwrap();
        assert!((cn_index(1.5, 0.5) - 7.0 / 6.0).abs() < 1e-15);
        // beta = 0 with a_n = n, w_n constant: c_n is exactly proportional to n
        let grid: Vec<usize> = (10..=17).map(|k| 1usize << k).collect();
        let sched = CnSchedule::new(&levy, 0.0, &grid, |n| n as f64, |_| 3.0).unwrap();
        let fit = sched.index_fit().unwrap();
        assert!((fit.slope - 1.0).abs() < 1e-12);
        // and with w_n = n: index 2/alpha
        let sched = CnSchedule::new(&levy, 0.0, &grid, |_| 1.0, |n| n as f64).unwrap();
        let fit = sched.index_fit().unwrap();
        assert!((fit.slope - 2.0 / 1.5).abs() < 1e-12);
    }

    #[test]
    fn cn_schedule_from_exact_sequences() {
        let grid: Vec<usize> = (10..=17).map(|k| 1usize << k).collect();
        let chain = LazyWalkChain::lazy_half(1 << 17);
        let table = return_probs(&chain, 1 << 17).unwrap();
        let levy = LevyTail::with_default_p0(1.5, 1.0).unwrap();
        let sched = CnSchedule::from_table(&levy, 0.5, &table, &grid).unwrap();
        assert!(sched.c.iter().all(|&c| c > 0.0));
        assert!(sched.c.windows(2).all(|w| w[1] > w[0]));
        let fit = sched.index_fit().unwrap();
        assert!((fit.slope - 7.0 / 6.0).abs() <= 0.03, "slope {}", fit.slope);
        let last = grid.len() - 1;
        let pair = (sched.c[last] / sched.c[last - 1]).log2();
        assert!((pair - 7.0 / 6.0).abs() <= 0.05);

        let a: Vec<f64> = grid.iter().map(|&n| table.a_n(n)).collect();
        let w: Vec<f64> = grid.iter().map(|&n| table.wandering_rate(n)).collect();
        let x: Vec<f64> = grid.iter().map(|&n| n as f64).collect();
        let fa = rv_index(&x, &a).unwrap();
        let fw = rv_index(&x, &w).unwrap();
        assert!((0.48..=0.52).contains(&fa.slope));
        assert!((0.48..=0.52).contains(&fw.slope));

        let mut buf = Vec::new();
        sched.write_csv(&mut buf).unwrap();
        let text = String::from_utf8(buf).unwrap();
        assert!(text.starts_with("n,a_n,w_n,c_n\n"));
        assert_eq!(text.lines().count(), grid.len() + 1);
    }

    #[test]
    fn rv_index_exact_power() {
        let x: Vec<f64> = (0..8).map(|k| 2f64.powi(k)).collect();
        let y: Vec<f64> = x.iter().map(|v| v * v).collect();
        let fit = rv_index(&x, &y).unwrap();
        assert!((fit.slope - 2.0).abs() < 1e-12);
        assert!(fit.stderr < 1e-10);
        assert!(rv_index(&x[..3], &y[..3]).is_err());
        let mut bad = y.clone();
        bad[2] = 0.0;
        assert!(rv_index(&x, &bad).is_err());
    }

    #[test]
    fn ks_examples() {
        let a: Vec<f64> = (0..100).map(|i| i as f64 * 0.37).collect();
        assert_eq!(ks_two_sample(&a, &a).unwrap(), 0.0);
        assert_eq!(ks_two_sample(&[0.0; 100], &[1.0; 100]).unwrap(), 1.0);
        assert!(ks_two_sample(&[], &[1.0]).is_err());
        // hand example: {1,2,3} vs {2.5}: F_a(2)=2/3, F_b(2)=0
        let d = ks_two_sample(&[1.0, 2.0, 3.0], &[2.5]).unwrap();
        assert!((d - 2.0 / 3.0).abs() < 1e-15);
    }

    #[test]
    fn quantiles() {
        let v = [3.0, 1.0, 2.0, 4.0];
        assert_eq!(median(&v), 2.5);
        assert_eq!(quantile(&v, 0.0), 1.0);
        assert_eq!(quantile(&v, 1.0), 4.0);
        assert!(quantile(&[], 0.5).is_nan());
    }
}
