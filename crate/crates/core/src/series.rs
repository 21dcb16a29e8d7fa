//! Truncated series simulation of `X_n = int f(T^n x) M(dx)` over the lazy
//! walk shift.
//!
//! With `V_i` i.i.d. from the restricted probability `mu_0 = mu(. ∩ {phi <= m}) / mu(phi <= m)`
//! (constant density `q = 1 / mu(phi <= m)` on its support), unit-rate
//! Poisson arrivals `Gamma_i` and random signs `eps_i`,
//!
//! ```text
//! X_n = sum_i eps_i U^{<-}(Gamma_i q / 2) f(T^n V_i),   n = 1..m.
//! ```
//!
//! Points outside `{phi <= m}` contribute nothing to `X_1..X_m`, so the
//! restriction leaves the joint law of the simulated window unchanged. The
//! sum is cut after a fixed number of terms.

use std::fmt;
use std::sync::Arc;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::levy::LevyTail;
use crate::markov::{LazyWalkChain, RestrictedPathSampler, ReturnTable, VisitSampler};
use crate::samplers::{rademacher, RngStream};
use crate::stats::{ks_two_sample, stable_tail_constant};

pub const MIN_TERMS: usize = 1000;
/// Flag threshold for the doubling diagnostic.
pub const TRUNCATION_KS_LIMIT: f64 = 0.01;

/// Sample length `n`, maximum lag, number of series terms and the Lévy tail.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SeriesConfig {
    pub n: usize,
    pub max_lag: usize,
    pub terms: usize,
    pub levy: LevyTail,
}

impl SeriesConfig {
    /// Restriction depth `m = n + max_lag`.
    pub fn depth(&self) -> usize {
        self.n + self.max_lag
    }

    pub fn validate(&self, chain: &LazyWalkChain) -> Result<()> {
        self.levy.validate()?;
        if self.n == 0 {
            return Err(Error::config("series.n must be >= 1"));
        }
        if self.terms < MIN_TERMS {
            return Err(Error::config(format!(
                "series.terms must be >= {MIN_TERMS}, got {}",
                self.terms
            )));
        }
        if self.depth() > chain.band() {
            return Err(Error::config(format!(
                "n + max_lag = {} exceeds chain band {}",
                self.depth(),
                chain.band()
            )));
        }
        Ok(())
    }
}

/// The integrand `f`, supported on `A = {x_0 = 0}`.
#[derive(Clone, Default)]
pub enum Integrand {
    /// `f = 1_A`; only the visit times to 0 are simulated.
    #[default]
    Indicator,
    /// A bounded path functional, evaluated on the path suffix `(x_k, x_{k+1}, ...)`
    /// up to the restriction depth whenever `x_k = 0`. Requires full paths.
    PathFunctional(Arc<dyn Fn(&[i64]) -> f64 + Send + Sync>),
}

impl fmt::Debug for Integrand {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Integrand::Indicator => write!(f, "Indicator"),
            Integrand::PathFunctional(_) => write!(f, "PathFunctional(..)"),
        }
    }
}

/// One simulated window `X_1..X_{n+max_lag}` (`x[k-1] = X_k`).
#[derive(Debug, Clone, PartialEq)]
pub struct PathSample {
    pub x: Vec<f64>,
    pub terms_used: usize,
    pub truncation_flag: bool,
}

/// Diagonal and off-diagonal parts of `sum_{k=1}^n X_k X_{k+h}`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct QuadraticParts {
    pub lag: usize,
    /// `sum_i U^{<-}(Gamma_i q/2)^2 sum_k f_k(V_i) f_{k+h}(V_i)`.
    pub diagonal: f64,
    /// Sum over pairs `i != j`.
    pub off_diagonal: f64,
    /// `sum_k X_k X_{k+h}` from the same draws.
    pub direct: f64,
}

impl QuadraticParts {
    pub fn reconstruction_error(&self) -> f64 {
        (self.diagonal + self.off_diagonal - self.direct).abs()
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct TruncationReport {
    pub pilot: usize,
    pub base_terms: usize,
    pub doubled_terms: usize,
    pub ks: f64,
    pub flagged: bool,
    #[serde(skip)]
    pub base_x1: Vec<f64>,
    #[serde(skip)]
    pub doubled_x1: Vec<f64>,
}

/// Scale of the symmetric stable marginal of `X_n` for a pure power tail:
/// the Lévy tail of `X_n` is `scale * mu(|f|^alpha) * x^(-alpha)`, matched
/// against `C_alpha sigma^alpha / 2`.
pub fn marginal_scale(levy: &LevyTail, f_alpha_mass: f64) -> Result<f64> {
    let alpha = levy.alpha();
    let c = stable_tail_constant(alpha)?;
    Ok((2.0 * levy.scale() * f_alpha_mass / c).powf(1.0 / alpha))
}

pub struct SeriesSimulator {
    cfg: SeriesConfig,
    q: f64,
    visits: VisitSampler,
    paths: Option<RestrictedPathSampler>,
    integrand: Integrand,
}

impl SeriesSimulator {
    pub fn new(cfg: SeriesConfig, chain: &LazyWalkChain, table: &ReturnTable) -> Result<Self> {
        Self::with_integrand(cfg, chain, table, Integrand::Indicator)
    }

    pub fn with_integrand(
        cfg: SeriesConfig,
        chain: &LazyWalkChain,
        table: &ReturnTable,
        integrand: Integrand,
    ) -> Result<Self> {
        cfg.validate(chain)?;
        let m = cfg.depth();
        if table.horizon() < m {
            return Err(Error::config(format!(
                "return table horizon {} is shorter than n + max_lag = {m}",
                table.horizon()
            )));
        }
        let visits = VisitSampler::new(table, m)?;
        let q = 1.0 / visits.restricted_mass();
        if !(q > 0.0 && q.is_finite()) {
            return Err(Error::config("restricted measure has no mass"));
        }
        let paths = match integrand {
            Integrand::Indicator => None,
            Integrand::PathFunctional(_) => Some(RestrictedPathSampler::new(chain, m)?),
        };
        Ok(SeriesSimulator {
            cfg,
            q,
            visits,
            paths,
            integrand,
        })
    }

    pub fn config(&self) -> &SeriesConfig {
        &self.cfg
    }

    /// Density of `mu_0` against `mu` on `{phi <= m}`.
    pub fn density(&self) -> f64 {
        self.q
    }

    #[inline]
    fn magnitude(&self, gamma: f64) -> f64 {
        self.cfg.levy.inverse_tail_unchecked(0.5 * gamma * self.q)
    }

    /// Draws `count` further terms, continuing the arrival clock `gamma`, and
    /// hands each to `sink(term index, eps * magnitude, times, values)`.
    /// `values` is empty for the indicator integrand (all ones).
    fn run_terms<F>(
        &self,
        rng: &mut RngStream,
        first_index: usize,
        count: usize,
        gamma: &mut f64,
        mut sink: F,
    ) -> Result<()>
    where
        F: FnMut(usize, f64, &[usize], &[f64]),
    {
        let m = self.cfg.depth();
        let mut times = Vec::new();
        let mut values = Vec::new();
        for i in first_index..first_index + count {
            *gamma += rng.exp1();
            let c = rademacher(rng) * self.magnitude(*gamma);
            match (&self.integrand, &self.paths) {
                (Integrand::PathFunctional(f), Some(paths)) => {
                    let path = paths.sample(rng, m)?;
                    times.clear();
                    values.clear();
                    for k in 1..=m {
                        if path[k] == 0 {
                            let v = f(&path[k..]);
                            if v != 0.0 {
                                times.push(k);
                                values.push(v);
                            }
                        }
                    }
                    sink(i, c, &times, &values);
                }
                _ => {
                    self.visits.sample_into(rng, &mut times);
                    debug_assert!(!times.is_empty(), "restricted path without a visit");
                    sink(i, c, &times, &[]);
                }
            }
        }
        Ok(())
    }

    pub fn simulate_path(&self, rng: &mut RngStream) -> Result<PathSample> {
        let m = self.cfg.depth();
        let mut x = vec![0.0; m];
        let mut gamma = 0.0;
        self.run_terms(rng, 0, self.cfg.terms, &mut gamma, |_, c, times, values| {
            accumulate(&mut x, c, times, values)
        })?;
        Ok(PathSample {
            x,
            terms_used: self.cfg.terms,
            truncation_flag: false,
        })
    }

    /// Diagonal/off-diagonal split of `sum_{k=1}^n X_k X_{k+h}`; the
    /// off-diagonal part is summed pair by pair, independently of `X`.
    pub fn simulate_quadratic_parts(&self, rng: &mut RngStream, lag: usize) -> Result<QuadraticParts> {
        let n = self.cfg.n;
        if lag > self.cfg.max_lag {
            return Err(Error::domain(format!(
                "lag {lag} exceeds max_lag {}",
                self.cfg.max_lag
            )));
        }
        let m = self.cfg.depth();
        let mut x = vec![0.0; m];
        let mut buckets: Vec<Vec<(u32, f64)>> = vec![Vec::new(); n + lag + 1];
        let mut gamma = 0.0;
        self.run_terms(rng, 0, self.cfg.terms, &mut gamma, |i, c, times, values| {
            accumulate(&mut x, c, times, values);
            for (j, &k) in times.iter().enumerate() {
                if k <= n + lag {
                    let v = if values.is_empty() { c } else { c * values[j] };
                    buckets[k].push((i as u32, v));
                }
            }
        })?;
        let mut diagonal = 0.0;
        let mut off_diagonal = 0.0;
        for k in 1..=n {
            for &(i, a) in &buckets[k] {
                for &(j, b) in &buckets[k + lag] {
                    if i == j {
                        diagonal += a * b;
                    } else {
                        off_diagonal += a * b;
                    }
                }
            }
        }
        let direct = (0..n).map(|k| x[k] * x[k + lag]).sum();
        Ok(QuadraticParts {
            lag,
            diagonal,
            off_diagonal,
            direct,
        })
    }

    /// Reruns `pilot` paths with the term count doubled, sharing the first
    /// `terms` draws, and compares the two empirical laws of `X_1`.
    pub fn truncation_diagnostic(&self, master_seed: u64, pilot: usize) -> Result<TruncationReport> {
        if pilot == 0 {
            return Err(Error::domain("truncation_diagnostic needs pilot >= 1"));
        }
        let base = self.cfg.terms;
        let pairs: Vec<(f64, f64)> = (0..pilot)
            .into_par_iter()
            .map(|p| {
                let mut rng = RngStream::new(master_seed, p as u64);
                let mut gamma = 0.0;
                let mut base_x1 = 0.0;
                self.run_terms(&mut rng, 0, base, &mut gamma, |_, c, times, values| {
                    base_x1 += first_value(c, times, values)
                })?;
                let mut x1 = base_x1;
                self.run_terms(&mut rng, base, base, &mut gamma, |_, c, times, values| {
                    x1 += first_value(c, times, values)
                })?;
                Ok((base_x1, x1))
            })
            .collect::<Result<_>>()?;
        let (base_x1, doubled_x1): (Vec<f64>, Vec<f64>) = pairs.into_iter().unzip();
        let ks = ks_two_sample(&base_x1, &doubled_x1)?;
        Ok(TruncationReport {
            pilot,
            base_terms: base,
            doubled_terms: 2 * base,
            ks,
            flagged: ks > TRUNCATION_KS_LIMIT,
            base_x1,
            doubled_x1,
        })
    }
}

#[inline]
fn accumulate(x: &mut [f64], c: f64, times: &[usize], values: &[f64]) {
    if values.is_empty() {
        for &k in times {
            x[k - 1] += c;
        }
    } else {
        for (&k, &v) in times.iter().zip(values) {
            x[k - 1] += c * v;
        }
    }
}

#[inline]
fn first_value(c: f64, times: &[usize], values: &[f64]) -> f64 {
    match times.first() {
        Some(1) => {
            if values.is_empty() {
                c
            } else {
                c * values[0]
            }
        }
        _ => 0.0,
    }
}
