//! Seeded random streams and the variates used by the simulations.
//!
//! Stable variates use the Chambers-Mallows-Stuck construction (Kanter's
//! form for the one-sided case). The Mittag-Leffler value `M_beta(1)` is
//! drawn as `S^(-beta)` for a standard positive `beta`-stable `S`.

use rand::{Rng, RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Exp1};
use statrs::function::gamma::gamma;
use std::f64::consts::{FRAC_PI_2, PI};

use crate::error::{Error, Result};

/// A reproducible random stream identified by `(master_seed, stream_id)`.
///
/// Streams with the same pair yield identical sequences; distinct stream
/// ids select disjoint ChaCha streams under the same key.
#[derive(Debug, Clone)]
pub struct RngStream {
    master_seed: u64,
    stream_id: u64,
    rng: ChaCha8Rng,
}

impl RngStream {
    pub fn new(master_seed: u64, stream_id: u64) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(master_seed);
        rng.set_stream(stream_id);
        RngStream {
            master_seed,
            stream_id,
            rng,
        }
    }

    pub fn master_seed(&self) -> u64 {
        self.master_seed
    }

    pub fn stream_id(&self) -> u64 {
        self.stream_id
    }

    /// Uniform on the open interval `(0, 1)`.
    #[inline]
    pub fn open01(&mut self) -> f64 {
        ((self.rng.next_u64() >> 11) as f64 + 0.5) * (1.0 / (1u64 << 53) as f64)
    }

    /// Uniform on `[0, 1)`.
    #[inline]
    pub fn uniform(&mut self) -> f64 {
        self.rng.random::<f64>()
    }

    #[inline]
    pub fn exp1(&mut self) -> f64 {
        Exp1.sample(&mut self.rng)
    }
}

impl RngCore for RngStream {
    fn next_u32(&mut self) -> u32 {
        self.rng.next_u32()
    }

    fn next_u64(&mut self) -> u64 {
        self.rng.next_u64()
    }

    fn fill_bytes(&mut self, dst: &mut [u8]) {
        self.rng.fill_bytes(dst)
    }
}

/// SplitMix64 finaliser; used to derive per-experiment seeds from a master
/// seed and a tag without correlating the resulting ChaCha keys.
pub fn mix_seed(master: u64, tag: u64) -> u64 {
    let mut z = master ^ tag.wrapping_mul(0x9E37_79B9_7F4A_7C15);
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// First `count` arrival times of a unit-rate Poisson process.
pub fn poisson_arrivals(rng: &mut RngStream, count: usize) -> Result<Vec<f64>> {
    if count == 0 {
        return Err(Error::domain("poisson_arrivals requires count >= 1"));
    }
    let mut t = 0.0;
    Ok((0..count)
        .map(|_| {
            t += rng.exp1();
            t
        })
        .collect())
}

/// A fair random sign, `+1.0` or `-1.0`.
#[inline]
pub fn rademacher(rng: &mut RngStream) -> f64 {
    if rng.next_u32() & 1 == 0 {
        1.0
    } else {
        -1.0
    }
}

/// Symmetric alpha-stable variate with characteristic function
/// `exp(-sigma^alpha |t|^alpha)`.
pub fn sas_cms(rng: &mut RngStream, alpha: f64, sigma: f64) -> Result<f64> {
    if !(alpha > 0.0 && alpha < 2.0) {
        return Err(Error::domain(format!(
            "sas_cms requires alpha in (0,2), got {alpha}"
        )));
    }
    if !(sigma > 0.0) {
        return Err(Error::domain(format!("sas_cms requires sigma > 0, got {sigma}")));
    }
    Ok(sigma * sas_unit(rng, alpha))
}

#[inline]
fn sas_unit(rng: &mut RngStream, alpha: f64) -> f64 {
    let u = PI * (rng.open01() - 0.5);
    let e = rng.exp1();
    if (alpha - 1.0).abs() < 1e-12 {
        return u.tan();
    }
    (alpha * u).sin() / u.cos().powf(1.0 / alpha)
        * (((1.0 - alpha) * u).cos() / e).powf((1.0 - alpha) / alpha)
}

/// Standard positive `p`-stable variate, `E exp(-theta S) = exp(-theta^p)`,
/// for `0 < p < 1` (Kanter's representation).
#[inline]
pub(crate) fn positive_stable_unit(rng: &mut RngStream, p: f64) -> f64 {
    let u = PI * rng.open01();
    let e = rng.exp1();
    let a = (p * u).sin() / u.sin().powf(1.0 / p);
    let b = (((1.0 - p) * u).sin() / e).powf((1.0 - p) / p);
    a * b
}

/// Positive strictly `alpha/2`-stable variate `W` with Lévy measure
/// `(alpha/2) C_{alpha/2} x^(-1-alpha/2) dx`.
///
/// Its Laplace transform is `exp(-theta^(alpha/2) / cos(pi alpha / 4))`.
pub fn positive_stable_w(rng: &mut RngStream, alpha: f64) -> Result<f64> {
    if !(alpha > 0.0 && alpha < 2.0) {
        return Err(Error::domain(format!(
            "positive_stable_w requires alpha in (0,2), got {alpha}"
        )));
    }
    Ok(w_scale(alpha) * positive_stable_unit(rng, 0.5 * alpha))
}

#[inline]
fn w_scale(alpha: f64) -> f64 {
    let p = 0.5 * alpha;
    (FRAC_PI_2 * p).cos().powf(-1.0 / p)
}

/// Laplace transform of `W` at `theta`.
pub fn w_laplace(alpha: f64, theta: f64) -> f64 {
    (-theta.powf(0.5 * alpha) / (PI * alpha / 4.0).cos()).exp()
}

/// Value at time one of the Mittag-Leffler process of index `beta`.
///
/// `beta = 1` is the straight line (always 1); `beta = 0` is the
/// unit exponential limit.
pub fn mittag_leffler(rng: &mut RngStream, beta: f64) -> Result<f64> {
    if !(0.0..=1.0).contains(&beta) {
        return Err(Error::domain(format!(
            "mittag_leffler requires beta in [0,1], got {beta}"
        )));
    }
    if beta == 1.0 {
        return Ok(1.0);
    }
    if beta == 0.0 {
        return Ok(rng.exp1());
    }
    Ok(positive_stable_unit(rng, beta).powf(-beta))
}

/// Draw from the density `(1-beta) x^(-beta)` on `(0, 1]`.
pub fn v_beta(rng: &mut RngStream, beta: f64) -> Result<f64> {
    if !(0.0..1.0).contains(&beta) {
        return Err(Error::domain(format!(
            "v_beta requires beta in [0,1), got {beta}"
        )));
    }
    let u = 1.0 - rng.uniform();
    Ok(u.powf(1.0 / (1.0 - beta)))
}

/// `M_beta(1 - V_beta)`, sampled through self-similarity
/// `M_beta(t) = t^beta M_beta(1)` in law.
pub fn ml_at_one_minus_v(rng: &mut RngStream, beta: f64) -> Result<f64> {
    let v = v_beta(rng, beta)?;
    let m = mittag_leffler(rng, beta)?;
    Ok((1.0 - v).powf(beta) * m)
}

/// `E M_beta(1 - V_beta)^s = Gamma(2-beta) Gamma(1+s) / Gamma(s beta + 2 - beta)`.
pub fn ml_moment(beta: f64, s: f64) -> Result<f64> {
    if !(0.0..1.0).contains(&beta) {
        return Err(Error::domain(format!(
            "ml_moment requires beta in [0,1), got {beta}"
        )));
    }
    if !(s > 0.0) {
        return Err(Error::domain(format!("ml_moment requires s > 0, got {s}")));
    }
    Ok(gamma(2.0 - beta) * gamma(1.0 + s) / gamma(s * beta + 2.0 - beta))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn streams_are_reproducible() {
        let mut a = RngStream::new(7, 3);
        let mut b = RngStream::new(7, 3);
        let mut c = RngStream::new(7, 4);
        let xa: Vec<u64> = (0..16).map(|_| a.next_u64()).collect();
        let xb: Vec<u64> = (0..16).map(|_| b.next_u64()).collect();
        let xc: Vec<u64> = (0..16).map(|_| c.next_u64()).collect();
        assert_eq!(xa, xb);
        assert_ne!(xa, xc);
    }

    #[test]
    fn samplers_bitwise_reproducible() {
        let draw = |seed| {
            let mut r = RngStream::new(seed, 11);
            vec![
                sas_cms(&mut r, 1.3, 2.0).unwrap(),
                positive_stable_w(&mut r, 1.5).unwrap(),
                mittag_leffler(&mut r, 0.4).unwrap(),
                v_beta(&mut r, 0.5).unwrap(),
                rademacher(&mut r),
                poisson_arrivals(&mut r, 3).unwrap()[2],
            ]
        };
        let a = draw(99);
        let b = draw(99);
        assert_eq!(
            a.iter().map(|v| v.to_bits()).collect::<Vec<_>>(),
            b.iter().map(|v| v.to_bits()).collect::<Vec<_>>()
        );
    }

    #[test]
    fn domain_errors() {
        let mut r = RngStream::new(1, 1);
        assert!(poisson_arrivals(&mut r, 0).is_err());
        assert!(sas_cms(&mut r, 2.0, 1.0).is_err());
        assert!(sas_cms(&mut r, 0.0, 1.0).is_err());
        assert!(sas_cms(&mut r, 1.5, 0.0).is_err());
        assert!(positive_stable_w(&mut r, 2.0).is_err());
        assert!(mittag_leffler(&mut r, 1.2).is_err());
        assert!(mittag_leffler(&mut r, -0.1).is_err());
        assert!(v_beta(&mut r, 1.0).is_err());
        assert!(ml_moment(1.0, 1.0).is_err());
        assert!(ml_moment(0.5, 0.0).is_err());
    }

    #[test]
    fn arrivals_strictly_increase() {
        let mut r = RngStream::new(5, 0);
        for _ in 0..20 {
            let g = poisson_arrivals(&mut r, 500).unwrap();
            assert!(g[0] > 0.0);
            assert!(g.windows(2).all(|w| w[1] > w[0]));
        }
    }

    #[test]
    fn ml_degenerate_cases() {
        let mut r = RngStream::new(5, 0);
        for _ in 0..100 {
            assert_eq!(mittag_leffler(&mut r, 1.0).unwrap(), 1.0);
        }
    }

    #[test]
    fn ml_moment_closed_form_values() {
        let sqrt_pi = PI.sqrt();
        assert!((ml_moment(0.5, 1.0).unwrap() - sqrt_pi / 2.0).abs() < 1e-13);
        assert!((ml_moment(0.5, 2.0).unwrap() - 4.0 / 3.0).abs() < 1e-13);
        // integer r: r! Gamma(2-beta) / Gamma(r beta + 2 - beta)
        for &beta in &[0.0, 0.3, 0.5, 0.7, 0.95] {
            for r in 1..=5u32 {
                let fact: f64 = (1..=r).map(f64::from).product();
                let rf = f64::from(r);
                let expect = fact * gamma(2.0 - beta) / gamma(rf * beta + 2.0 - beta);
                let got = ml_moment(beta, rf).unwrap();
                assert!(((got - expect) / expect).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn v_beta_support() {
        let mut r = RngStream::new(8, 8);
        for _ in 0..10_000 {
            let v = v_beta(&mut r, 0.7).unwrap();
            assert!(v > 0.0 && v <= 1.0);
        }
    }

    #[test]
    fn w_is_positive() {
        let mut r = RngStream::new(8, 9);
        for _ in 0..10_000 {
            assert!(positive_stable_w(&mut r, 1.2).unwrap() > 0.0);
        }
    }
}
