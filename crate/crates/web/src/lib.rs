//! WebAssembly bindings for the demo page in `www/`.
//!
//! Three operations are exported: a simulated path of the process, median
//! sample autocorrelations over replicates next to their limits, and the
//! occupation time of Boole's map along one orbit. Each has a plain Rust
//! counterpart so it can be tested off the browser.

use wasm_bindgen::prelude::*;

use cflow_core::boole::BooleMap;
use cflow_core::levy::LevyTail;
use cflow_core::markov::{return_probs, LazyWalkChain};
use cflow_core::samplers::RngStream;
use cflow_core::series::{SeriesConfig, SeriesSimulator};
use cflow_core::stats::{acf, median};

fn simulator(
    alpha: f64,
    n: usize,
    max_lag: usize,
    terms: usize,
) -> Result<(SeriesSimulator, Vec<f64>), String> {
    let levy = LevyTail::with_default_p0(alpha, 1.0).map_err(|e| e.to_string())?;
    let depth = n + max_lag;
    let chain = LazyWalkChain::lazy_half(depth);
    let table = return_probs(&chain, depth).map_err(|e| e.to_string())?;
    let cfg = SeriesConfig {
        n,
        max_lag,
        terms,
        levy,
    };
    let sim = SeriesSimulator::new(cfg, &chain, &table).map_err(|e| e.to_string())?;
    Ok((sim, table.p0().to_vec()))
}

/// `X_1..X_n` of one path.
pub fn path(alpha: f64, n: usize, terms: usize, seed: u32) -> Result<Vec<f64>, String> {
    let (sim, _) = simulator(alpha, n, 0, terms)?;
    let sample = sim
        .simulate_path(&mut RngStream::new(seed as u64, 0))
        .map_err(|e| e.to_string())?;
    Ok(sample.x)
}

/// For `h = 1..=max_lag`, the pair (median sample autocorrelation, limit
/// `P_0(x_h = 0)`), flattened.
pub fn autocorrelation(
    alpha: f64,
    n: usize,
    max_lag: usize,
    replicates: usize,
    terms: usize,
    seed: u32,
) -> Result<Vec<f64>, String> {
    if max_lag == 0 || replicates == 0 {
        return Err("max_lag and replicates must be positive".into());
    }
    let (sim, p0) = simulator(alpha, n, max_lag, terms)?;
    let mut rho: Vec<Vec<f64>> = vec![Vec::with_capacity(replicates); max_lag + 1];
    for r in 0..replicates {
        let x = sim
            .simulate_path(&mut RngStream::new(seed as u64, r as u64))
            .map_err(|e| e.to_string())?
            .x;
        let est = acf(&x, n, max_lag).map_err(|e| e.to_string())?;
        if let Some(values) = est.rho {
            for h in 1..=max_lag {
                rho[h].push(values[h]);
            }
        }
    }
    if rho[1].is_empty() {
        return Err("every replicate was all zero".into());
    }
    Ok((1..=max_lag).flat_map(|h| [median(&rho[h]), p0[h]]).collect())
}

/// Pairs `(k, S_k(1_A))` at about `points` geometrically spaced `k <= n`
/// along the orbit of `x0`; stops early if the orbit is flagged.
pub fn boole_occupation(epsilon: f64, x0: f64, n: usize, points: usize) -> Result<Vec<f64>, String> {
    let map = BooleMap::new(epsilon).map_err(|e| e.to_string())?;
    let points = points.max(2);
    let mut marks: Vec<usize> = (0..points)
        .map(|i| (n as f64).powf(i as f64 / (points - 1) as f64).round() as usize)
        .collect();
    marks.dedup();
    let mut out = Vec::with_capacity(2 * marks.len());
    let mut occ = 0u64;
    let mut next = 0;
    map.walk(x0, n, |k, p| {
        if map.in_a(p) {
            occ += 1;
        }
        while next < marks.len() && marks[next] == k {
            out.push(k as f64);
            out.push(occ as f64);
            next += 1;
        }
    })
    .map_err(|e| e.to_string())?;
    Ok(out)
}

#[wasm_bindgen]
pub fn simulate_path(alpha: f64, n: usize, terms: usize, seed: u32) -> Result<Vec<f64>, JsError> {
    path(alpha, n, terms, seed).map_err(|e| JsError::new(&e))
}

#[wasm_bindgen]
pub fn sample_autocorrelation(
    alpha: f64,
    n: usize,
    max_lag: usize,
    replicates: usize,
    terms: usize,
    seed: u32,
) -> Result<Vec<f64>, JsError> {
    autocorrelation(alpha, n, max_lag, replicates, terms, seed).map_err(|e| JsError::new(&e))
}

#[wasm_bindgen]
pub fn boole_orbit_occupation(epsilon: f64, x0: f64, n: usize, points: usize) -> Result<Vec<f64>, JsError> {
    boole_occupation(epsilon, x0, n, points).map_err(|e| JsError::new(&e))
}
