//! The lazy simple random walk on the integers as a null-recurrent Markov
//! shift.
//!
//! The flow is the left shift on paths `(x_0, x_1, ...)` under the infinite
//! measure `mu = sum_i pi_i P_i` with counting invariant measure `pi_i = 1`.
//! The reference set is `A = {x_0 = 0}` and `phi` is the first entrance time
//! to `A` at a time `>= 1`.
//!
//! Return quantities are exact: `P_0(x_k = 0)` and the first-return law come
//! from the three-term recurrences satisfied by the coefficients of
//! `(1 - 2sz + (2s-1)z^2)^(-1/2)` and of its square root, where `s` is the
//! holding probability. A banded forward DP gives the same table by a second
//! route for moderate horizons.

use std::fmt;
use std::io::{Read, Write};

use rand_distr::weighted::WeightedAliasIndex;
use rand_distr::Distribution;
use statrs::function::gamma::gamma;

use crate::error::{Error, Result};
use crate::samplers::RngStream;

/// Nearest-neighbour symmetric walk: hold with `stay_prob`, otherwise step
/// `+1` or `-1` with probability `(1 - stay_prob) / 2` each.
///
/// `band` is the truncation half-width for banded computations; anything
/// that needs `k` steps of exact mass requires `band >= k`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LazyWalkChain {
    stay_prob: f64,
    band: usize,
}

impl LazyWalkChain {
    pub fn new(stay_prob: f64, band: usize) -> Result<Self> {
        if !(stay_prob > 0.0 && stay_prob < 1.0) {
            return Err(Error::domain(format!(
                "stay_prob must lie in (0,1), got {stay_prob}"
            )));
        }
        if band == 0 {
            return Err(Error::config("band must be positive"));
        }
        Ok(LazyWalkChain { stay_prob, band })
    }

    /// The default chain: hold 1/2, step 1/4 each way.
    pub fn lazy_half(band: usize) -> Self {
        LazyWalkChain {
            stay_prob: 0.5,
            band: band.max(1),
        }
    }

    pub fn stay_prob(&self) -> f64 {
        self.stay_prob
    }

    pub fn step_prob(&self) -> f64 {
        0.5 * (1.0 - self.stay_prob)
    }

    pub fn band(&self) -> usize {
        self.band
    }

    /// Regular-variation index of `a_n`; 1/2 for any zero-drift walk with
    /// finite variance.
    pub fn beta(&self) -> f64 {
        0.5
    }

    /// Invariant measure, normalised so that `pi_0 = 1`.
    pub fn invariant(&self, _state: i64) -> f64 {
        1.0
    }

    pub fn transition(&self, from: i64, to: i64) -> f64 {
        match to - from {
            0 => self.stay_prob,
            1 | -1 => self.step_prob(),
            _ => 0.0,
        }
    }

    /// Nonzero entries of the transition row of `from`.
    pub fn row(&self, from: i64) -> [(i64, f64); 3] {
        let r = self.step_prob();
        [(from - 1, r), (from, self.stay_prob), (from + 1, r)]
    }

    /// `k`-step transition probability by direct convolution.
    pub fn k_step(&self, from: i64, to: i64, k: usize) -> f64 {
        let width = k as i64;
        let size = (2 * width + 1) as usize;
        let mut dist = vec![0.0; size];
        dist[width as usize] = 1.0;
        let mut next = vec![0.0; size];
        for _ in 0..k {
            self.convolve(&dist, &mut next);
            std::mem::swap(&mut dist, &mut next);
        }
        let offset = to - from + width;
        if offset < 0 || offset >= size as i64 {
            0.0
        } else {
            dist[offset as usize]
        }
    }

    #[inline]
    pub fn step(&self, from: i64, rng: &mut RngStream) -> i64 {
        let u = rng.uniform();
        if u < self.stay_prob {
            from
        } else if u < self.stay_prob + self.step_prob() {
            from - 1
        } else {
            from + 1
        }
    }

    fn convolve(&self, src: &[f64], dst: &mut [f64]) {
        let (s, r) = (self.stay_prob, self.step_prob());
        let n = src.len();
        for i in 0..n {
            let left = if i > 0 { src[i - 1] } else { 0.0 };
            let right = if i + 1 < n { src[i + 1] } else { 0.0 };
            dst[i] = s * src[i] + r * (left + right);
        }
    }
}

/// Exact return quantities of the walk started at 0, up to a horizon `n`.
///
/// `p0[k] = P_0(x_k = 0)` and `fret[k] = P_0(first return at time k)` for
/// `k = 0..=n` (`fret[0] = 0`).
#[derive(Debug, Clone, PartialEq)]
pub struct ReturnTable {
    p0: Vec<f64>,
    fret: Vec<f64>,
    cum_p0: Vec<f64>,
    survival: Vec<f64>,
    cum_survival: Vec<f64>,
}

/// Exact `P_0(x_k = 0)` and first-return probabilities for `k <= n`.
pub fn return_probs(chain: &LazyWalkChain, n: usize) -> Result<ReturnTable> {
    ReturnTable::compute(chain, n)
}

impl ReturnTable {
    pub fn compute(chain: &LazyWalkChain, n: usize) -> Result<Self> {
        check_horizon(chain, n)?;
        let s = chain.stay_prob();
        let b = 2.0 * s - 1.0;

        let mut p0 = Vec::with_capacity(n + 1);
        p0.push(1.0);
        p0.push(s);
        for k in 2..=n {
            let kf = k as f64;
            let v = ((2.0 * kf - 1.0) * s * p0[k - 1] - (kf - 1.0) * b * p0[k - 2]) / kf;
            p0.push(v);
        }
        p0.truncate(n + 1);

        // coefficients u_k of sqrt(1 - 2sz + bz^2); fret[k] = -u_k for k >= 1
        let mut u = Vec::with_capacity(n + 1);
        u.push(1.0);
        u.push(-s);
        for k in 2..=n {
            let kf = k as f64;
            let v = (s * (2.0 * kf - 3.0) * u[k - 1] - b * (kf - 3.0) * u[k - 2]) / kf;
            u.push(v);
        }
        u.truncate(n + 1);
        let mut fret: Vec<f64> = u.iter().map(|v| -v).collect();
        fret[0] = 0.0;

        Ok(Self::from_parts(p0, fret))
    }

    /// Same table by banded forward DP (`O(n^2)`): the law of `x_k` from 0
    /// for `p0`, and the walk killed on its first return for `fret`.
    pub fn banded_dp(chain: &LazyWalkChain, n: usize) -> Result<Self> {
        check_horizon(chain, n)?;
        let width = n + 1;
        let size = 2 * width + 1;
        let centre = width;
        let mut free = vec![0.0; size];
        let mut taboo = vec![0.0; size];
        let mut scratch = vec![0.0; size];
        free[centre] = 1.0;
        taboo[centre] = 1.0;
        let mut p0 = vec![1.0];
        let mut fret = vec![0.0];
        for _ in 1..=n {
            chain.convolve(&free, &mut scratch);
            std::mem::swap(&mut free, &mut scratch);
            p0.push(free[centre]);

            chain.convolve(&taboo, &mut scratch);
            std::mem::swap(&mut taboo, &mut scratch);
            fret.push(taboo[centre]);
            taboo[centre] = 0.0;
        }
        Ok(Self::from_parts(p0, fret))
    }

    fn from_parts(p0: Vec<f64>, fret: Vec<f64>) -> Self {
        let n = p0.len() - 1;
        let mut cum_p0 = vec![0.0; n + 1];
        for k in 1..=n {
            cum_p0[k] = cum_p0[k - 1] + p0[k];
        }
        let mut survival = vec![1.0; n + 1];
        for k in 1..=n {
            survival[k] = survival[k - 1] - fret[k];
        }
        let mut cum_survival = vec![0.0; n + 1];
        for k in 1..=n {
            cum_survival[k] = cum_survival[k - 1] + survival[k - 1];
        }
        ReturnTable {
            p0,
            fret,
            cum_p0,
            survival,
            cum_survival,
        }
    }

    pub fn horizon(&self) -> usize {
        self.p0.len() - 1
    }

    pub fn p0(&self) -> &[f64] {
        &self.p0
    }

    pub fn fret(&self) -> &[f64] {
        &self.fret
    }

    /// `P_0(phi > k)` for the return time `phi`.
    pub fn survival(&self, k: usize) -> f64 {
        self.survival[k]
    }

    /// `a_n = sum_{k=1}^n P_0(x_k = 0)`.
    pub fn a_n(&self, n: usize) -> f64 {
        self.cum_p0[n]
    }

    /// `w_n = sum_{k=0}^{n-1} mu(A ∩ {phi > k})`.
    pub fn wandering_rate(&self, n: usize) -> f64 {
        self.cum_survival[n]
    }

    /// `mu(phi = k) = P_0(phi >= k)` for `k >= 1`.
    pub fn mu_phi_eq(&self, k: usize) -> f64 {
        self.survival[k - 1]
    }

    /// `mu(phi <= n) = sum_{k=1}^n P_0(phi >= k)`.
    pub fn mu_phi_le(&self, n: usize) -> f64 {
        (1..=n).map(|k| self.mu_phi_eq(k)).sum()
    }

    /// Largest violation of `p0[k] = sum_{j=1}^k fret[j] p0[k-j]` over
    /// `1 <= k <= kmax`.
    pub fn renewal_discrepancy(&self, kmax: usize) -> f64 {
        let kmax = kmax.min(self.horizon());
        (1..=kmax)
            .map(|k| {
                let conv: f64 = (1..=k).map(|j| self.fret[j] * self.p0[k - j]).sum();
                (conv - self.p0[k]).abs()
            })
            .fold(0.0, f64::max)
    }

    pub fn write_csv<W: Write>(&self, writer: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(writer);
        w.write_record(["k", "p0", "fret"])?;
        for k in 0..=self.horizon() {
            w.write_record([k.to_string(), self.p0[k].to_string(), self.fret[k].to_string()])?;
        }
        w.flush()?;
        Ok(())
    }

    pub fn read_csv<R: Read>(reader: R) -> Result<Self> {
        let mut r = csv::Reader::from_reader(reader);
        let headers = r.headers()?.clone();
        if headers.iter().collect::<Vec<_>>() != ["k", "p0", "fret"] {
            return Err(Error::Parse(format!(
                "expected header k,p0,fret, got {}",
                headers.iter().collect::<Vec<_>>().join(",")
            )));
        }
        let mut p0 = Vec::new();
        let mut fret = Vec::new();
        for (row, rec) in r.records().enumerate() {
            let rec = rec?;
            let parse = |i: usize| -> Result<f64> {
                rec.get(i)
                    .ok_or_else(|| Error::Parse(format!("row {row}: missing column {i}")))?
                    .parse::<f64>()
                    .map_err(|e| Error::Parse(format!("row {row}: {e}")))
            };
            let k = parse(0)? as usize;
            if k != row {
                return Err(Error::Parse(format!("row {row}: expected k={row}, got {k}")));
            }
            p0.push(parse(1)?);
            fret.push(parse(2)?);
        }
        if p0.len() < 2 {
            return Err(Error::Parse("return table needs at least k=0,1".into()));
        }
        Ok(Self::from_parts(p0, fret))
    }
}

fn check_horizon(chain: &LazyWalkChain, n: usize) -> Result<()> {
    if n == 0 {
        return Err(Error::domain("return table horizon must be >= 1"));
    }
    if chain.band() < n {
        return Err(Error::config(format!(
            "band {} is smaller than the horizon {n}; probability mass would be truncated",
            chain.band()
        )));
    }
    Ok(())
}

/// Both sides of `mu(A ∩ {phi > k}) = mu(A^c ∩ {phi = k})` for `k = 1..=kmax`.
#[derive(Debug, Clone)]
pub struct IdentityReport {
    /// `P_0(phi > k)`, index `k - 1`.
    pub lhs: Vec<f64>,
    /// `sum_{j != 0} pi_j P_j(first entrance to 0 at time k)`, index `k - 1`.
    pub rhs: Vec<f64>,
    pub max_discrepancy: f64,
}

impl IdentityReport {
    pub fn holds(&self, tol: f64) -> bool {
        self.max_discrepancy <= tol
    }
}

/// Compares the two sides of the first-entrance identity. The right side is
/// computed by a taboo DP over starting states `j != 0`, independent of the
/// return table.
pub fn identity_check(chain: &LazyWalkChain, table: &ReturnTable, kmax: usize) -> Result<IdentityReport> {
    if kmax > table.horizon() {
        return Err(Error::domain(format!(
            "kmax {kmax} exceeds table horizon {}",
            table.horizon()
        )));
    }
    if chain.band() < kmax {
        return Err(Error::config("band smaller than kmax"));
    }
    let rhs = outside_entrance_law(chain, kmax);
    let lhs: Vec<f64> = (1..=kmax).map(|k| table.survival(k)).collect();
    let max_discrepancy = lhs
        .iter()
        .zip(&rhs)
        .map(|(a, b)| (a - b).abs())
        .fold(0.0, f64::max);
    Ok(IdentityReport {
        lhs,
        rhs,
        max_discrepancy,
    })
}

/// `sum_{j != 0} pi_j P_j(x_1..x_{k-1} != 0, x_k = 0)` for `k = 1..=kmax`.
///
/// Starting mass beyond `|j| = kmax` cannot reach 0 within `kmax` steps, so
/// the window `|i| <= kmax` is exact.
fn outside_entrance_law(chain: &LazyWalkChain, kmax: usize) -> Vec<f64> {
    let width = kmax;
    let size = 2 * width + 1;
    let centre = width;
    let r = chain.step_prob();
    let mut mass: Vec<f64> = (0..size)
        .map(|i| {
            if i == centre {
                0.0
            } else {
                chain.invariant(i as i64 - centre as i64)
            }
        })
        .collect();
    let mut next = vec![0.0; size];
    let mut out = Vec::with_capacity(kmax);
    for _ in 1..=kmax {
        out.push(r * (mass[centre - 1] + mass[centre + 1]));
        chain.convolve(&mass, &mut next);
        next[centre] = 0.0;
        std::mem::swap(&mut mass, &mut next);
    }
    out
}

/// `(1 / mu(phi <= n)) * sum_{k=1}^n mu(A^c ∩ {phi = k})`.
///
/// For the Markov shift the dual-operator sum is constant on `A`, so this is
/// the uniform bound itself.
pub fn dual_sum_bound(table: &ReturnTable, n: usize) -> f64 {
    let num: f64 = (1..=n).map(|k| table.survival(k)).sum();
    num / table.mu_phi_le(n)
}

/// `b_n P_0(x_n = 0)` with `b_n = Gamma(beta) Gamma(2 - beta) w_n`; tends to
/// `mu(A) = 1` when `A` is uniformly returning.
pub fn uniformly_returning_check(table: &ReturnTable, n: usize, beta: f64) -> f64 {
    let b_n = gamma(beta) * gamma(2.0 - beta) * table.wandering_rate(n);
    b_n * table.p0()[n]
}

/// `g_r(i) = P_i(x_t = 0 for some 1 <= t <= r)` for `r <= m`, `|i| <= m + 1`.
///
/// Stored by `|i|` (the walk is symmetric). Memory is `O(m^2)`.
#[derive(Debug, Clone)]
pub struct HitTable {
    m: usize,
    stride: usize,
    g: Vec<f64>,
}

impl HitTable {
    pub fn new(chain: &LazyWalkChain, m: usize) -> Result<Self> {
        if m == 0 {
            return Err(Error::domain("hit table depth must be >= 1"));
        }
        if m > chain.band() {
            return Err(Error::config(format!(
                "restriction depth {m} exceeds band {}",
                chain.band()
            )));
        }
        let stride = m + 2;
        let (s, r) = (chain.stay_prob(), chain.step_prob());
        let mut g = vec![0.0; (m + 1) * stride];
        for depth in 1..=m {
            let (prev_rows, cur_rows) = g.split_at_mut(depth * stride);
            let prev = &prev_rows[(depth - 1) * stride..];
            let cur = &mut cur_rows[..stride];
            cur[0] = s + 2.0 * r * prev[1];
            for a in 1..=(m + 1).min(depth) {
                let inward = if a == 1 { 1.0 } else { prev[a - 1] };
                let outward = if a + 1 < stride { prev[a + 1] } else { 0.0 };
                cur[a] = s * prev[a] + r * (inward + outward);
            }
        }
        Ok(HitTable { m, stride, g })
    }

    pub fn depth(&self) -> usize {
        self.m
    }

    /// `P_i(hit 0 within r steps)`.
    #[inline]
    pub fn hit(&self, i: i64, r: usize) -> f64 {
        let a = i.unsigned_abs() as usize;
        if a >= self.stride || r == 0 {
            return 0.0;
        }
        self.g[r * self.stride + a]
    }

    /// Probability that the conditioning event holds from state `i` with `r`
    /// steps still to go, counting the current position as a visit.
    #[inline]
    fn event_from(&self, i: i64, r: usize) -> f64 {
        if i == 0 {
            1.0
        } else {
            self.hit(i, r)
        }
    }

    /// `mu(phi <= m) = sum_j pi_j P_j(hit 0 within m)`.
    pub fn restricted_mass(&self) -> f64 {
        let m = self.m;
        self.hit(0, m) + 2.0 * (1..=m).map(|a| self.hit(a as i64, m)).sum::<f64>()
    }
}

/// Sampler of paths `x_0..x_horizon` under `mu(. ∩ {phi <= m}) / mu(phi <= m)`.
///
/// The start is drawn with weight `pi_j P_j(phi <= m)`; until the first visit
/// to 0 the walk moves by the Doob transform
/// `p(i,i') h_{k+1}(i') / h_k(i)` with `h_k(i) = P_i(hit 0 within m - k)`,
/// and after it the kernel is unconditioned.
#[derive(Debug, Clone)]
pub struct RestrictedPathSampler {
    chain: LazyWalkChain,
    hits: HitTable,
    start: WeightedAliasIndex<f64>,
    start_weights: Vec<f64>,
}

impl RestrictedPathSampler {
    pub fn new(chain: &LazyWalkChain, m: usize) -> Result<Self> {
        let hits = HitTable::new(chain, m)?;
        let mi = m as i64;
        let start_weights: Vec<f64> = (-mi..=mi).map(|j| chain.invariant(j) * hits.hit(j, m)).collect();
        let start = WeightedAliasIndex::new(start_weights.clone())
            .map_err(|e| Error::domain(format!("start weights: {e}")))?;
        Ok(RestrictedPathSampler {
            chain: *chain,
            hits,
            start,
            start_weights,
        })
    }

    pub fn depth(&self) -> usize {
        self.hits.depth()
    }

    pub fn hits(&self) -> &HitTable {
        &self.hits
    }

    /// Start-state probabilities for `j = -m..=m`.
    pub fn start_law(&self) -> Vec<(i64, f64)> {
        let m = self.depth() as i64;
        let total: f64 = self.start_weights.iter().sum();
        (-m..=m)
            .zip(&self.start_weights)
            .map(|(j, w)| (j, w / total))
            .collect()
    }

    /// Conditioned transition row at time `k` from state `i`, before the
    /// first visit to 0.
    pub fn conditional_row(&self, k: usize, i: i64) -> [(i64, f64); 3] {
        let r = self.depth() - k;
        let h = self.hits.hit(i, r);
        let mut row = self.chain.row(i);
        for (next, p) in row.iter_mut() {
            *p *= self.hits.event_from(*next, r - 1) / h;
        }
        row
    }

    pub fn sample(&self, rng: &mut RngStream, horizon: usize) -> Result<Vec<i64>> {
        let m = self.depth();
        if horizon > m {
            return Err(Error::domain(format!(
                "horizon {horizon} exceeds restriction depth {m}"
            )));
        }
        let mut state = self.start.sample(rng) as i64 - m as i64;
        let mut path = Vec::with_capacity(horizon + 1);
        path.push(state);
        let mut visited = false;
        for k in 0..horizon {
            state = if visited {
                self.chain.step(state, rng)
            } else {
                let row = self.conditional_row(k, state);
                let u = rng.uniform();
                if u < row[0].1 {
                    row[0].0
                } else if u < row[0].1 + row[1].1 {
                    row[1].0
                } else {
                    row[2].0
                }
            };
            visited |= state == 0;
            path.push(state);
        }
        Ok(path)
    }
}

/// Convenience wrapper: one path of length `horizon` under the measure
/// restricted to `{phi <= m}`.
pub fn sample_restricted_path(
    chain: &LazyWalkChain,
    rng: &mut RngStream,
    m: usize,
    horizon: usize,
) -> Result<Vec<i64>> {
    RestrictedPathSampler::new(chain, m)?.sample(rng, horizon)
}

/// Samples only the visit times `{1 <= k <= m : x_k = 0}` of a path drawn
/// from the restricted measure.
///
/// The first entrance time has law `mu(phi = k) / mu(phi <= m)`; after it
/// the path restarts from 0, so later visits form a renewal sequence with
/// the first-return law. Cost is proportional to the number of visits.
#[derive(Debug, Clone)]
pub struct VisitSampler {
    m: usize,
    first: WeightedAliasIndex<f64>,
    ret: WeightedAliasIndex<f64>,
    mass: f64,
}

impl VisitSampler {
    pub fn new(table: &ReturnTable, m: usize) -> Result<Self> {
        if m == 0 || m > table.horizon() {
            return Err(Error::config(format!(
                "visit depth {m} must lie in 1..={}",
                table.horizon()
            )));
        }
        let first_w: Vec<f64> = (1..=m).map(|k| table.mu_phi_eq(k)).collect();
        let mass = first_w.iter().sum();
        let mut ret_w: Vec<f64> = table.fret()[1..=m].to_vec();
        ret_w.push(table.survival(m).max(0.0));
        let first = WeightedAliasIndex::new(first_w)
            .map_err(|e| Error::domain(format!("first-entrance weights: {e}")))?;
        let ret =
            WeightedAliasIndex::new(ret_w).map_err(|e| Error::domain(format!("return weights: {e}")))?;
        Ok(VisitSampler { m, first, ret, mass })
    }

    pub fn depth(&self) -> usize {
        self.m
    }

    /// `mu(phi <= m)`, the normaliser of the restricted measure.
    pub fn restricted_mass(&self) -> f64 {
        self.mass
    }

    /// Clears `out` and fills it with the increasing visit times.
    #[inline]
    pub fn sample_into(&self, rng: &mut RngStream, out: &mut Vec<usize>) {
        out.clear();
        let mut t = self.first.sample(rng) + 1;
        loop {
            out.push(t);
            let gap = self.ret.sample(rng) + 1;
            if gap > self.m {
                break;
            }
            t += gap;
            if t > self.m {
                break;
            }
        }
    }

    /// Number of visits only, `S_m(1_A)`.
    pub fn sample_count(&self, rng: &mut RngStream) -> usize {
        let mut t = self.first.sample(rng) + 1;
        let mut count = 1;
        loop {
            let gap = self.ret.sample(rng) + 1;
            if gap > self.m {
                return count;
            }
            t += gap;
            if t > self.m {
                return count;
            }
            count += 1;
        }
    }
}

impl fmt::Display for LazyWalkChain {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(
            f,
            "lazy walk (stay {}, step {} each way, band {})",
            self.stay_prob,
            self.step_prob(),
            self.band
        )
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    const EPS: f64 = 1e-15;

    #[test]
    fn rows_sum_to_one_and_chain_is_irreducible() {
        for &s in &[0.1, 0.5, 0.9] {
            let c = LazyWalkChain::new(s, 10).unwrap();
            let total: f64 = c.row(3).iter().map(|(_, p)| p).sum();
            assert_eq!(total, 1.0);
            assert!(c.k_step(0, 1, 1) > 0.0);
            assert!(c.k_step(0, -1, 1) > 0.0);
            assert!(c.k_step(0, 0, 1) > 0.0);
            assert!(c.k_step(1, -1, 2) > 0.0);
            assert!(c.k_step(-1, 1, 2) > 0.0);
        }
        assert!(LazyWalkChain::new(0.0, 10).is_err());
        assert!(LazyWalkChain::new(1.0, 10).is_err());
    }

    #[test]
    fn small_horizon_values() {
        let c = LazyWalkChain::lazy_half(10);
        let t = return_probs(&c, 10).unwrap();
        assert_eq!(t.p0()[0], 1.0);
        assert!((t.p0()[1] - 0.5).abs() < EPS);
        assert!((t.p0()[2] - 0.375).abs() < EPS);
        assert!((t.fret()[1] - 0.5).abs() < EPS);
        assert!((t.fret()[2] - 0.125).abs() < EPS);
        assert!((t.fret()[3] - 0.0625).abs() < EPS);
        assert!((t.a_n(1) - 0.5).abs() < EPS);
        assert!((t.a_n(2) - 0.875).abs() < EPS);
        assert_eq!(t.wandering_rate(1), 1.0);
        assert!((t.wandering_rate(2) - 1.5).abs() < EPS);
    }

    #[test]
    fn band_smaller_than_horizon_is_rejected() {
        let c = LazyWalkChain::lazy_half(5);
        assert!(matches!(return_probs(&c, 6), Err(Error::Config(_))));
        assert!(matches!(HitTable::new(&c, 6), Err(Error::Config(_))));
        assert!(return_probs(&c, 5).is_ok());
    }

    #[test]
    fn recurrences_match_banded_dp() {
        for &s in &[0.2, 0.5, 0.8] {
            let c = LazyWalkChain::new(s, 1500).unwrap();
            let fast = return_probs(&c, 1500).unwrap();
            let slow = ReturnTable::banded_dp(&c, 1500).unwrap();
            for k in 0..=1500 {
                assert!((fast.p0()[k] - slow.p0()[k]).abs() < 1e-13, "p0 k={k} s={s}");
                assert!(
                    (fast.fret()[k] - slow.fret()[k]).abs() < 1e-13,
                    "fret k={k} s={s}"
                );
            }
        }
    }

    #[test]
    fn renewal_identity_and_recurrence() {
        let c = LazyWalkChain::lazy_half(1000);
        let t = return_probs(&c, 1000).unwrap();
        assert!(t.renewal_discrepancy(1000) <= 1e-12);
        let total: f64 = t.fret().iter().sum();
        assert!(total <= 1.0 + 1e-12);
        // recurrence: mass still missing decays like k^(-1/2)
        assert!(1.0 - total < 0.03);
    }

    #[test]
    fn identity_small_k() {
        let c = LazyWalkChain::lazy_half(50);
        let t = return_probs(&c, 50).unwrap();
        let rep = identity_check(&c, &t, 50).unwrap();
        assert!((rep.lhs[0] - 0.5).abs() < EPS);
        assert!((rep.rhs[0] - 0.5).abs() < EPS);
        assert!((rep.lhs[1] - 0.375).abs() < EPS);
        assert!((rep.rhs[1] - 0.375).abs() < EPS);
        assert!(rep.holds(1e-13));
    }

    #[test]
    fn dual_sum_examples() {
        let c = LazyWalkChain::lazy_half(100);
        let t = return_probs(&c, 100).unwrap();
        assert!((dual_sum_bound(&t, 1) - 0.5).abs() < EPS);
        assert!((t.mu_phi_le(1) - 1.0).abs() < EPS);
        for n in 1..=100 {
            assert!(dual_sum_bound(&t, n) <= 1.0);
            assert!((t.mu_phi_le(n) - t.wandering_rate(n)).abs() < 1e-12);
        }
    }

    #[test]
    fn hit_table_matches_restricted_mass() {
        let c = LazyWalkChain::lazy_half(64);
        let t = return_probs(&c, 64).unwrap();
        let h = HitTable::new(&c, 64).unwrap();
        assert!((h.restricted_mass() - t.mu_phi_le(64)).abs() < 1e-12);
        assert!((h.hit(0, 64) - (1.0 - t.survival(64))).abs() < 1e-12);
        for a in 0..=65i64 {
            let mut prev = 0.0;
            for r in 0..=64 {
                let v = h.hit(a, r);
                assert!((0.0..=1.0).contains(&v));
                assert!(v >= prev);
                prev = v;
            }
        }
        // one step from +-1: reach 0 with probability 1/4
        assert!((h.hit(1, 1) - 0.25).abs() < EPS);
        assert_eq!(h.hit(2, 1), 0.0);
    }

    #[test]
    fn conditional_rows_sum_to_one() {
        let c = LazyWalkChain::lazy_half(40);
        let s = RestrictedPathSampler::new(&c, 40).unwrap();
        for k in 0..40 {
            let reach = (40 - k) as i64;
            for i in -reach..=reach {
                if s.hits().hit(i, 40 - k) == 0.0 {
                    continue;
                }
                let total: f64 = s.conditional_row(k, i).iter().map(|(_, p)| p).sum();
                assert!((total - 1.0).abs() < 1e-12, "k={k} i={i} total={total}");
            }
        }
    }

    #[test]
    fn restricted_paths_visit_zero() {
        let c = LazyWalkChain::lazy_half(32);
        let s = RestrictedPathSampler::new(&c, 32).unwrap();
        let mut rng = RngStream::new(3, 0);
        for _ in 0..2000 {
            let p = s.sample(&mut rng, 32).unwrap();
            assert_eq!(p.len(), 33);
            assert!(p[1..].contains(&0));
            assert!(p.windows(2).all(|w| (w[1] - w[0]).abs() <= 1));
        }
        assert!(s.sample(&mut rng, 33).is_err());
    }

    #[test]
    fn visit_sampler_respects_depth() {
        let c = LazyWalkChain::lazy_half(200);
        let t = return_probs(&c, 200).unwrap();
        let v = VisitSampler::new(&t, 100).unwrap();
        let mut rng = RngStream::new(4, 0);
        let mut out = Vec::new();
        for _ in 0..2000 {
            v.sample_into(&mut rng, &mut out);
            assert!(!out.is_empty());
            assert!(out.windows(2).all(|w| w[1] > w[0]));
            assert!(*out.last().unwrap() <= 100 && out[0] >= 1);
        }
        assert!(VisitSampler::new(&t, 201).is_err());
    }

    #[test]
    fn csv_round_trip() {
        let c = LazyWalkChain::lazy_half(300);
        let t = return_probs(&c, 300).unwrap();
        let mut buf = Vec::new();
        t.write_csv(&mut buf).unwrap();
        let back = ReturnTable::read_csv(buf.as_slice()).unwrap();
        assert_eq!(back, t);
        assert!(ReturnTable::read_csv("a,b,c\n0,1,0\n".as_bytes()).is_err());
    }
}
