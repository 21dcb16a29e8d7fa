//! Boole's transformation on `E = (0, 1/2) ∪ (1/2, 1)`:
//!
//! ```text
//! T(x) = x(1 - x) / (1 - x - x^2)   on (0, 1/2),
//! T(x) = 1 - T(1 - x)              on (1/2, 1).
//! ```
//!
//! `T` preserves the infinite measure with density `h(x) = 1/x^2 + 1/(1-x)^2`
//! and has indifferent fixed points at 0 and 1. Orbits are iterated in a
//! mirrored form (side plus distance to the nearest endpoint) so that the
//! slow escape from either fixed point keeps full relative precision and
//! the orbits of `x` and `1 - x` are exact mirror images.

use std::io::Write;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::samplers::RngStream;
use crate::stats::{median, quantile, rv_index, RvFit};

/// Beyond this distance from the nearer endpoint the left branch lands in
/// the right half: `T((3 - sqrt 5)/2) = 1/2`.
const CROSSOVER: f64 = 0.381_966_011_250_105_1;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Side {
    Left,
    Right,
}

/// A point of `E` stored as the side of 1/2 it lies on and its distance
/// `z ∈ (0, 1/2]` to the nearer endpoint.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BoolePoint {
    pub side: Side,
    pub z: f64,
}

impl BoolePoint {
    pub fn from_x(x: f64) -> Result<Self> {
        if !(x > 0.0 && x < 1.0) || x == 0.5 {
            return Err(Error::domain(format!(
                "point must lie in (0,1/2)∪(1/2,1), got {x}"
            )));
        }
        Ok(if x < 0.5 {
            BoolePoint {
                side: Side::Left,
                z: x,
            }
        } else {
            BoolePoint {
                side: Side::Right,
                z: 1.0 - x,
            }
        })
    }

    pub fn x(&self) -> f64 {
        match self.side {
            Side::Left => self.z,
            Side::Right => 1.0 - self.z,
        }
    }

    pub fn mirror(&self) -> Self {
        let side = match self.side {
            Side::Left => Side::Right,
            Side::Right => Side::Left,
        };
        BoolePoint { side, z: self.z }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum OrbitStatus {
    Complete,
    /// The orbit landed on 1/2 (up to rounding) at the given step.
    HitHalf(usize),
    /// Rounding pushed the orbit onto an endpoint or produced a non-finite value.
    LeftDomain(usize),
}

impl OrbitStatus {
    pub fn is_flagged(&self) -> bool {
        !matches!(self, OrbitStatus::Complete)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Orbit {
    pub points: Vec<f64>,
    pub status: OrbitStatus,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BooleMap {
    epsilon: f64,
}

pub const DEFAULT_EPSILON: f64 = 0.1;

impl Default for BooleMap {
    fn default() -> Self {
        BooleMap {
            epsilon: DEFAULT_EPSILON,
        }
    }
}

/// Left-branch formula on `(0, 1/2)`.
fn left_branch(x: f64) -> f64 {
    x * (1.0 - x) / (1.0 - x - x * x)
}

fn left_derivative(x: f64) -> f64 {
    let d = 1.0 - x - x * x;
    (1.0 - 2.0 * x + 2.0 * x * x) / (d * d)
}

impl BooleMap {
    pub fn new(epsilon: f64) -> Result<Self> {
        if !(epsilon > 0.0 && epsilon < 0.5) {
            return Err(Error::domain(format!(
                "boole epsilon must lie in (0,1/2), got {epsilon}"
            )));
        }
        Ok(BooleMap { epsilon })
    }

    pub fn epsilon(&self) -> f64 {
        self.epsilon
    }

    /// `T(x)` by the defining formula.
    pub fn map(&self, x: f64) -> f64 {
        if x < 0.5 {
            left_branch(x)
        } else {
            1.0 - left_branch(1.0 - x)
        }
    }

    /// `|T'(x)|`; symmetric about 1/2.
    pub fn derivative(&self, x: f64) -> f64 {
        if x < 0.5 {
            left_derivative(x)
        } else {
            left_derivative(1.0 - x)
        }
    }

    /// Invariant density `1/x^2 + 1/(1-x)^2`.
    pub fn density(&self, x: f64) -> f64 {
        1.0 / (x * x) + 1.0 / ((1.0 - x) * (1.0 - x))
    }

    /// `(T(x) - x) / x^3`, which tends to 1 as `x -> 0`.
    pub fn local_cubic_ratio(&self, x: f64) -> f64 {
        1.0 / (1.0 - x - x * x)
    }

    pub fn in_a(&self, p: &BoolePoint) -> bool {
        p.z >= self.epsilon
    }

    /// One step in mirrored coordinates. `None` when the image is 1/2 or
    /// falls outside `(0, 1)`.
    #[inline]
    pub fn step(&self, p: BoolePoint) -> Option<BoolePoint> {
        let z = p.z;
        let d = 1.0 - z - z * z;
        let next = if z < CROSSOVER {
            BoolePoint {
                side: p.side,
                z: z + z * z * z / d,
            }
        } else {
            // crosses 1/2; the distance to the far endpoint is 1 - T(z)
            BoolePoint {
                side: p.mirror().side,
                z: (1.0 - 2.0 * z) / d,
            }
        };
        if next.z > 0.0 && next.z < 0.5 {
            Some(next)
        } else {
            None
        }
    }

    fn failure(&self, p: &BoolePoint, step: usize) -> OrbitStatus {
        let z = p.z;
        let d = 1.0 - z - z * z;
        let next = if z < CROSSOVER {
            z + z * z * z / d
        } else {
            (1.0 - 2.0 * z) / d
        };
        if next >= 0.5 && next.is_finite() {
            OrbitStatus::HitHalf(step)
        } else {
            OrbitStatus::LeftDomain(step)
        }
    }

    /// Orbit `x, T(x), ..., T^n(x)`, truncated at the first bad step.
    pub fn iterate(&self, x: f64, n: usize) -> Result<Orbit> {
        let mut p = BoolePoint::from_x(x)?;
        let mut points = Vec::with_capacity(n + 1);
        points.push(x);
        for k in 1..=n {
            match self.step(p) {
                Some(q) => {
                    p = q;
                    points.push(q.x());
                }
                None => {
                    return Ok(Orbit {
                        points,
                        status: self.failure(&p, k),
                    });
                }
            }
        }
        Ok(Orbit {
            points,
            status: OrbitStatus::Complete,
        })
    }

    /// Iterates in mirrored coordinates, calling `visit(k, point)` for
    /// `k = 1..=n` (the Birkhoff sums here start at `T x`).
    pub fn walk<F: FnMut(usize, &BoolePoint)>(&self, x: f64, n: usize, mut visit: F) -> Result<OrbitStatus> {
        let mut p = BoolePoint::from_x(x)?;
        for k in 1..=n {
            match self.step(p) {
                Some(q) => {
                    p = q;
                    visit(k, &p);
                }
                None => return Ok(self.failure(&p, k)),
            }
        }
        Ok(OrbitStatus::Complete)
    }

    /// The two preimages of `x ∈ (0,1)`, one per monotone branch, by bisection.
    pub fn preimages(&self, x: f64) -> Result<[f64; 2]> {
        if !(x > 0.0 && x < 1.0) {
            return Err(Error::domain(format!("preimages need x in (0,1), got {x}")));
        }
        let left = bisect(|y| self.map(y), x, 0.0, 0.5);
        let right = bisect(|y| self.map(y), x, 0.5, 1.0);
        Ok([left, right])
    }

    /// `sum_{T y = x} h(y) / |T'(y)|`.
    pub fn transfer_density(&self, x: f64) -> Result<f64> {
        let pre = self.preimages(x)?;
        Ok(pre.iter().map(|&y| self.density(y) / self.derivative(y)).sum())
    }

    /// Largest relative deviation of the transfer operator applied to `h`
    /// from `h` on a midpoint grid of `points` points.
    pub fn transfer_residual(&self, points: usize) -> Result<f64> {
        if points == 0 {
            return Err(Error::domain("transfer_residual needs at least one grid point"));
        }
        let mut worst: f64 = 0.0;
        for i in 0..points {
            let x = (i as f64 + 0.5) / points as f64;
            let h = self.density(x);
            let ph = self.transfer_density(x)?;
            worst = worst.max(((ph - h) / h).abs());
        }
        Ok(worst)
    }

    /// `mu(g) = int g h dx` over `[lo, hi] ⊂ (0, 1)`.
    pub fn measure<G: Fn(f64) -> f64>(&self, g: G, lo: f64, hi: f64, tol: f64) -> Result<f64> {
        if !(lo > 0.0 && hi < 1.0 && lo < hi) {
            return Err(Error::domain(format!(
                "measure needs 0 < lo < hi < 1, got [{lo},{hi}]"
            )));
        }
        Ok(adaptive_simpson(&|x| g(x) * self.density(x), lo, hi, tol))
    }

    /// `mu(A)` by quadrature.
    pub fn measure_a(&self) -> Result<f64> {
        let e = self.epsilon;
        Ok(self.measure(|_| 1.0, e, 0.5, 1e-12)? + self.measure(|_| 1.0, 0.5, 1.0 - e, 1e-12)?)
    }

    /// Uniform draw from `A` (Lebesgue), avoiding 1/2.
    pub fn sample_start(&self, rng: &mut RngStream) -> f64 {
        let e = self.epsilon;
        loop {
            let x = e + (1.0 - 2.0 * e) * rng.uniform();
            if x != 0.5 {
                return x;
            }
        }
    }

    pub fn hopf_ratio_check<F>(&self, f: F, n: usize, starts: usize, seed: u64) -> Result<HopfReport>
    where
        F: Fn(f64) -> f64 + Sync,
    {
        if starts == 0 || n == 0 {
            return Err(Error::domain("hopf_ratio_check needs n >= 1 and starts >= 1"));
        }
        let e = self.epsilon;
        let in_a = |x: f64| {
            if x >= e && x <= 1.0 - e && x != 0.5 {
                1.0
            } else {
                0.0
            }
        };
        let num = self.measure(|x| f(x) * in_a(x), e, 0.5, 1e-12)?
            + self.measure(|x| f(x) * in_a(x), 0.5, 1.0 - e, 1e-12)?;
        let target = num / self.measure_a()?;
        let rows: Vec<StartRow> = (0..starts)
            .into_par_iter()
            .map(|s| {
                let mut rng = RngStream::new(seed, s as u64);
                let x0 = self.sample_start(&mut rng);
                let mut sf = 0.0;
                let mut occ = 0u64;
                let status = self.walk(x0, n, |_, p| {
                    if self.in_a(p) {
                        occ += 1;
                        sf += f(p.x());
                    }
                })?;
                let ratio = if occ > 0 { sf / occ as f64 } else { f64::NAN };
                Ok(StartRow {
                    start: s,
                    x0,
                    occupation: occ,
                    ratio,
                    status,
                })
            })
            .collect::<Result<_>>()?;
        let used: Vec<f64> = rows
            .iter()
            .filter(|r| !r.status.is_flagged() && r.ratio.is_finite())
            .map(|r| r.ratio)
            .collect();
        let included = used.len();
        let (med, q25, q75) = if used.is_empty() {
            (f64::NAN, f64::NAN, f64::NAN)
        } else {
            (median(&used), quantile(&used, 0.25), quantile(&used, 0.75))
        };
        Ok(HopfReport {
            n,
            target,
            median: med,
            q25,
            q75,
            rel_error: ((med - target) / target).abs(),
            included,
            excluded: starts - included,
            rows,
        })
    }

    /// Medians over `starts` orbits of `S_n(1_A)` at each `n` of the grid,
    /// with the log-log slope.
    pub fn occupation_scaling(&self, n_grid: &[usize], starts: usize, seed: u64) -> Result<OccupationReport> {
        if n_grid.len() < 4 || n_grid.windows(2).any(|w| w[0] >= w[1]) || n_grid[0] == 0 {
            return Err(Error::domain(
                "occupation_scaling needs >= 4 strictly increasing positive grid points",
            ));
        }
        if starts == 0 {
            return Err(Error::domain("occupation_scaling needs starts >= 1"));
        }
        let n_max = *n_grid.last().unwrap();
        let runs: Vec<(Vec<u64>, OrbitStatus)> = (0..starts)
            .into_par_iter()
            .map(|s| {
                let mut rng = RngStream::new(seed, s as u64);
                let x0 = self.sample_start(&mut rng);
                let mut counts = Vec::with_capacity(n_grid.len());
                let mut occ = 0u64;
                let mut next = 0;
                let status = self.walk(x0, n_max, |k, p| {
                    if self.in_a(p) {
                        occ += 1;
                    }
                    if k == n_grid[next] {
                        counts.push(occ);
                        next += 1;
                    }
                })?;
                Ok((counts, status))
            })
            .collect::<Result<_>>()?;
        let good: Vec<&Vec<u64>> = runs
            .iter()
            .filter(|(_, st)| !st.is_flagged())
            .map(|(c, _)| c)
            .collect();
        if good.is_empty() {
            return Err(Error::domain("every orbit was flagged"));
        }
        let medians: Vec<f64> = (0..n_grid.len())
            .map(|j| median(&good.iter().map(|c| c[j] as f64).collect::<Vec<_>>()))
            .collect();
        let ns: Vec<f64> = n_grid.iter().map(|&n| n as f64).collect();
        let fit = rv_index(&ns, &medians)?;
        Ok(OccupationReport {
            n_grid: n_grid.to_vec(),
            medians,
            fit,
            included: good.len(),
            excluded: starts - good.len(),
        })
    }
}

fn bisect<F: Fn(f64) -> f64>(g: F, target: f64, mut lo: f64, mut hi: f64) -> f64 {
    // g is increasing on (lo, hi); run until the midpoint stops moving
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if mid <= lo || mid >= hi {
            break;
        }
        if g(mid) < target {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    0.5 * (lo + hi)
}

fn adaptive_simpson<G: Fn(f64) -> f64>(g: &G, a: f64, b: f64, tol: f64) -> f64 {
    let fa = g(a);
    let fb = g(b);
    let m = 0.5 * (a + b);
    let fm = g(m);
    let whole = (b - a) / 6.0 * (fa + 4.0 * fm + fb);
    simpson_step(g, a, b, fa, fm, fb, whole, tol, 50)
}

#[allow(clippy::too_many_arguments)]
fn simpson_step<G: Fn(f64) -> f64>(
    g: &G,
    a: f64,
    b: f64,
    fa: f64,
    fm: f64,
    fb: f64,
    whole: f64,
    tol: f64,
    depth: u32,
) -> f64 {
    let m = 0.5 * (a + b);
    let lm = 0.5 * (a + m);
    let rm = 0.5 * (m + b);
    let flm = g(lm);
    let frm = g(rm);
    let left = (m - a) / 6.0 * (fa + 4.0 * flm + fm);
    let right = (b - m) / 6.0 * (fm + 4.0 * frm + fb);
    let diff = left + right - whole;
    if depth == 0 || diff.abs() <= 15.0 * tol {
        return left + right + diff / 15.0;
    }
    simpson_step(g, a, m, fa, flm, fm, left, 0.5 * tol, depth - 1)
        + simpson_step(g, m, b, fm, frm, fb, right, 0.5 * tol, depth - 1)
}

#[derive(Debug, Clone, Serialize)]
pub struct StartRow {
    pub start: usize,
    pub x0: f64,
    pub occupation: u64,
    pub ratio: f64,
    pub status: OrbitStatus,
}

#[derive(Debug, Clone)]
pub struct HopfReport {
    pub n: usize,
    pub target: f64,
    pub median: f64,
    pub q25: f64,
    pub q75: f64,
    pub rel_error: f64,
    pub included: usize,
    pub excluded: usize,
    pub rows: Vec<StartRow>,
}

impl HopfReport {
    /// Per-start CSV: `start,x0,occupation,hopf_ratio,status`.
    pub fn write_csv<W: Write>(&self, writer: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(writer);
        w.write_record(["start", "x0", "occupation", "hopf_ratio", "status"])?;
        for r in &self.rows {
            let status = match r.status {
                OrbitStatus::Complete => "complete".to_string(),
                OrbitStatus::HitHalf(k) => format!("hit_half@{k}"),
                OrbitStatus::LeftDomain(k) => format!("left_domain@{k}"),
            };
            w.write_record([
                r.start.to_string(),
                format!("{:.17e}", r.x0),
                r.occupation.to_string(),
                format!("{:.17e}", r.ratio),
                status,
            ])?;
        }
        w.flush()?;
        Ok(())
    }
}

#[derive(Debug, Clone)]
pub struct OccupationReport {
    pub n_grid: Vec<usize>,
    pub medians: Vec<f64>,
    pub fit: RvFit,
    pub included: usize,
    pub excluded: usize,
}

impl OccupationReport {
    /// `median S_{2n} / median S_n` for consecutive grid points that double.
    pub fn doubling_ratios(&self) -> Vec<f64> {
        self.n_grid
            .windows(2)
            .zip(self.medians.windows(2))
            .filter(|(n, _)| n[1] == 2 * n[0])
            .map(|(_, m)| m[1] / m[0])
            .collect()
    }
}
