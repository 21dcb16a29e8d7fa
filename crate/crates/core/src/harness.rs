//! Multi-replicate experiments with reproducible seeding.
//!
//! Replicate `r` at sample length `n` draws from
//! `RngStream::new(mix_seed(master_seed, tag(kind, n)), r)`, so any single
//! replicate can be rerun in isolation. Replicates run on a rayon pool whose
//! size can be capped with the `CFLOW_WORKERS` environment variable; results
//! are put back in replicate order before any statistic is computed, which
//! makes every report independent of scheduling.
//!
//! Each experiment returns a [`Report`] holding per-replicate rows, the
//! acceptance checks (target, estimate, band, pass) and plot series.
//! [`Report::write`] lays them out as
//!
//! ```text
//! <out>/results.csv            replicate,n,statistic,lag,value,flagged
//! <out>/summary.json           checks and counts, with "schema_version"
//! <out>/plotdata/<name>.csv    two named columns
//! <out>/effective_config.toml
//! ```

use std::collections::BTreeMap;
use std::fs;
use std::path::Path;

use rayon::prelude::*;
use serde::Serialize;
use statrs::function::gamma::gamma;

use crate::boole::BooleMap;
use crate::config::{Config, Kind};
use crate::error::{Error, Result};
use crate::markov::{
    dual_sum_bound, identity_check, uniformly_returning_check, LazyWalkChain, ReturnTable, VisitSampler,
};
use crate::samplers::{mix_seed, ml_at_one_minus_v, positive_stable_w, sas_cms, RngStream};
use crate::series::{marginal_scale, SeriesConfig, SeriesSimulator, TruncationReport};
use crate::stats::{
    acf, cn_index, cn_tail_ratio, growth_ratio, ks_two_sample, mean, median, occupation_moment, quantile,
    quantile_sorted, rv_index, AcfEstimate, CnSchedule,
};

pub const SCHEMA_VERSION: u32 = 1;
pub const WORKERS_ENV: &str = "CFLOW_WORKERS";

const REFERENCE_TAG: u64 = 1 << 40;
const PILOT_TAG: u64 = 1 << 41;
const SCALING_TAG: u64 = 1 << 42;

/// One acceptance check. `pass` requires `lo <= estimate <= hi` plus any
/// extra condition attached by the experiment.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Check {
    pub name: String,
    pub target: f64,
    pub estimate: f64,
    pub lo: f64,
    pub hi: f64,
    pub pass: bool,
}

impl Check {
    pub fn band(name: &str, target: f64, estimate: f64, lo: f64, hi: f64) -> Self {
        Check {
            name: name.to_string(),
            target,
            estimate,
            lo,
            hi,
            pass: estimate >= lo && estimate <= hi,
        }
    }

    pub fn around(name: &str, target: f64, estimate: f64, half_width: f64) -> Self {
        Self::band(name, target, estimate, target - half_width, target + half_width)
    }

    pub fn relative(name: &str, target: f64, estimate: f64, rel: f64) -> Self {
        Self::band(name, target, estimate, target * (1.0 - rel), target * (1.0 + rel))
    }

    /// Nonnegative statistic with target 0 and upper limit `limit`.
    pub fn at_most(name: &str, estimate: f64, limit: f64) -> Self {
        Self::band(name, 0.0, estimate, 0.0, limit)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ResultRow {
    pub replicate: usize,
    pub n: usize,
    pub statistic: String,
    pub lag: Option<usize>,
    pub value: f64,
    pub flagged: bool,
}

impl ResultRow {
    fn new(
        replicate: usize,
        n: usize,
        statistic: &str,
        lag: Option<usize>,
        value: f64,
        flagged: bool,
    ) -> Self {
        ResultRow {
            replicate,
            n,
            statistic: statistic.to_string(),
            lag,
            value,
            flagged,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct PlotSeries {
    pub name: String,
    pub columns: [String; 2],
    pub points: Vec<(f64, f64)>,
}

impl PlotSeries {
    fn new(name: &str, x: &str, y: &str, points: Vec<(f64, f64)>) -> Self {
        PlotSeries {
            name: name.to_string(),
            columns: [x.to_string(), y.to_string()],
            points,
        }
    }
}

#[derive(Debug, Clone)]
pub struct Report {
    pub experiment: String,
    pub master_seed: u64,
    pub checks: Vec<Check>,
    pub rows: Vec<ResultRow>,
    pub plots: Vec<PlotSeries>,
    pub total: usize,
    pub included: usize,
    pub excluded: usize,
    pub diagnostics: BTreeMap<String, f64>,
    /// Additional CSV files (name, contents).
    pub files: Vec<(String, String)>,
    /// Raw paths for `paths.csv` (simulate with `dump_paths`).
    pub paths: Option<Vec<Vec<f64>>>,
}

impl Report {
    fn new(experiment: &str, master_seed: u64) -> Self {
        Report {
            experiment: experiment.to_string(),
            master_seed,
            checks: Vec::new(),
            rows: Vec::new(),
            plots: Vec::new(),
            total: 0,
            included: 0,
            excluded: 0,
            diagnostics: BTreeMap::new(),
            files: Vec::new(),
            paths: None,
        }
    }

    pub fn passed(&self) -> bool {
        self.checks.iter().all(|c| c.pass)
    }

    pub fn check(&self, name: &str) -> Option<&Check> {
        self.checks.iter().find(|c| c.name == name)
    }

    fn count(&mut self, included: usize, excluded: usize) {
        self.total += included + excluded;
        self.included += included;
        self.excluded += excluded;
    }

    pub fn summary_json(&self) -> serde_json::Value {
        serde_json::json!({
            "schema_version": SCHEMA_VERSION,
            "experiment": self.experiment,
            "master_seed": self.master_seed,
            "passed": self.passed(),
            "replicates": {
                "total": self.total,
                "included": self.included,
                "excluded": self.excluded,
            },
            "checks": self.checks,
            "diagnostics": self.diagnostics,
            "tolerance_policy": "finite-n bands are configurable acceptance policy; the limit theorems give no convergence rates",
        })
    }

    /// One line per check: `PASS name estimate=.. band=[..,..] target=..`.
    pub fn check_lines(&self) -> Vec<String> {
        self.checks
            .iter()
            .map(|c| {
                format!(
                    "{} {} estimate={} band=[{},{}] target={}",
                    if c.pass { "PASS" } else { "FAIL" },
                    c.name,
                    short(c.estimate),
                    short(c.lo),
                    short(c.hi),
                    short(c.target)
                )
            })
            .collect()
    }

    pub fn write(&self, dir: &Path, cfg: Option<&Config>) -> Result<()> {
        fs::create_dir_all(dir.join("plotdata"))?;
        let mut w = csv::Writer::from_path(dir.join("results.csv"))?;
        w.write_record(["replicate", "n", "statistic", "lag", "value", "flagged"])?;
        for r in &self.rows {
            w.write_record([
                r.replicate.to_string(),
                r.n.to_string(),
                r.statistic.clone(),
                r.lag.map(|l| l.to_string()).unwrap_or_default(),
                fmt_f64(r.value),
                r.flagged.to_string(),
            ])?;
        }
        w.flush()?;
        let summary = serde_json::to_string_pretty(&self.summary_json())?;
        fs::write(dir.join("summary.json"), summary + "\n")?;
        for p in &self.plots {
            let mut w = csv::Writer::from_path(dir.join("plotdata").join(format!("{}.csv", p.name)))?;
            w.write_record(&p.columns)?;
            for (x, y) in &p.points {
                w.write_record([fmt_f64(*x), fmt_f64(*y)])?;
            }
            w.flush()?;
        }
        for (name, body) in &self.files {
            fs::write(dir.join(name), body)?;
        }
        if let Some(paths) = &self.paths {
            let mut w = csv::Writer::from_path(dir.join("paths.csv"))?;
            w.write_record(["replicate", "k", "x_k"])?;
            for (r, x) in paths.iter().enumerate() {
                for (k, v) in x.iter().enumerate() {
                    w.write_record([r.to_string(), (k + 1).to_string(), fmt_f64(*v)])?;
                }
            }
            w.flush()?;
        }
        if let Some(cfg) = cfg {
            fs::write(dir.join("effective_config.toml"), cfg.to_toml_string()?)?;
        }
        Ok(())
    }
}

fn short(v: f64) -> String {
    if v == 0.0 || (v.abs() >= 1e-3 && v.abs() < 1e6) {
        format!("{v:.6}")
    } else {
        format!("{v:.3e}")
    }
}

fn fmt_f64(v: f64) -> String {
    format!("{v:.17e}")
}

/// Rayon pool sized by `CFLOW_WORKERS` when set, else rayon's default.
pub fn worker_pool() -> Result<rayon::ThreadPool> {
    let mut builder = rayon::ThreadPoolBuilder::new();
    if let Ok(v) = std::env::var(WORKERS_ENV) {
        let k: usize =
            v.trim().parse().ok().filter(|&k| k >= 1).ok_or_else(|| {
                Error::config(format!("{WORKERS_ENV} must be a positive integer, got '{v}'"))
            })?;
        builder = builder.num_threads(k);
    }
    builder
        .build()
        .map_err(|e| Error::config(format!("cannot start worker pool: {e}")))
}

/// Runs the experiment named by `cfg.experiment.kind` on the worker pool.
pub fn run(cfg: &Config) -> Result<Report> {
    let pool = worker_pool()?;
    pool.install(|| match cfg.kind() {
        Kind::LimitLaw => run_limit_law(cfg),
        Kind::Acorr => run_acorr(cfg),
        Kind::Rate => run_rate(cfg),
        Kind::Dk => run_dk(cfg),
        Kind::BooleDiag => run_boole_diag(cfg),
        Kind::MarkovDiag => run_markov_diag(cfg),
        Kind::Simulate => run_simulate(cfg),
    })
}

fn grid_seed(cfg: &Config, n: usize, extra: u64) -> u64 {
    mix_seed(
        cfg.experiment.master_seed,
        (cfg.kind().tag() << 48) ^ extra ^ n as u64,
    )
}

/// The random stream of replicate `r` at sample length `n`.
pub fn replicate_stream(cfg: &Config, n: usize, r: usize) -> RngStream {
    RngStream::new(grid_seed(cfg, n, 0), r as u64)
}

fn reference_stream(cfg: &Config, n: usize) -> RngStream {
    RngStream::new(grid_seed(cfg, n, REFERENCE_TAG), 0)
}

fn flow(cfg: &Config, depth: usize) -> Result<(LazyWalkChain, ReturnTable)> {
    let chain = cfg.chain_for(depth)?;
    let table = ReturnTable::compute(&chain, depth)?;
    Ok((chain, table))
}

/// Per-replicate sample autocovariances for one grid point.
#[derive(Debug, Clone)]
pub struct GridRun {
    pub n: usize,
    pub c_n: f64,
    pub terms: usize,
    /// Indexed by replicate id.
    pub estimates: Vec<AcfEstimate>,
    pub truncation: Option<TruncationReport>,
}

impl GridRun {
    fn flagged(&self, r: usize) -> bool {
        let e = &self.estimates[r];
        e.is_degenerate() || e.gamma.iter().any(|g| !g.is_finite())
    }

    fn included(&self) -> Vec<&AcfEstimate> {
        (0..self.estimates.len())
            .filter(|&r| !self.flagged(r))
            .map(|r| &self.estimates[r])
            .collect()
    }
}

pub fn simulator_for(
    cfg: &Config,
    chain: &LazyWalkChain,
    table: &ReturnTable,
    n: usize,
) -> Result<SeriesSimulator> {
    let sc = SeriesConfig {
        n,
        max_lag: cfg.experiment.max_lag,
        terms: cfg.terms_for(n),
        levy: cfg.levy_tail()?,
    };
    SeriesSimulator::new(sc, chain, table)
}

/// Sample autocovariances of replicate `r` at sample length `n`.
pub fn series_replicate(cfg: &Config, sim: &SeriesSimulator, n: usize, r: usize) -> Result<AcfEstimate> {
    let mut rng = replicate_stream(cfg, n, r);
    let path = sim.simulate_path(&mut rng)?;
    acf(&path.x, n, cfg.experiment.max_lag)
}

fn simulate_grid(cfg: &Config) -> Result<(ReturnTable, Vec<GridRun>)> {
    let e = &cfg.experiment;
    let depth = e.n_grid.last().unwrap() + e.max_lag;
    let (chain, table) = flow(cfg, depth)?;
    let levy = cfg.levy_tail()?;
    let beta = chain.beta();
    let mut runs = Vec::with_capacity(e.n_grid.len());
    for &n in &e.n_grid {
        let sim = simulator_for(cfg, &chain, &table, n)?;
        let c = crate::stats::c_n(&levy, beta, table.a_n(n), table.wandering_rate(n))?;
        let estimates = (0..e.replicates)
            .into_par_iter()
            .map(|r| series_replicate(cfg, &sim, n, r))
            .collect::<Result<Vec<_>>>()?;
        let truncation = if cfg.series.pilot > 0 {
            Some(sim.truncation_diagnostic(grid_seed(cfg, n, PILOT_TAG), cfg.series.pilot)?)
        } else {
            None
        };
        runs.push(GridRun {
            n,
            c_n: c,
            terms: sim.config().terms,
            estimates,
            truncation,
        });
    }
    Ok((table, runs))
}

fn note_truncation(report: &mut Report, run: &GridRun) {
    report.diagnostics.insert(format!("c_n_{}", run.n), run.c_n);
    report
        .diagnostics
        .insert(format!("terms_n{}", run.n), run.terms as f64);
    if let Some(t) = &run.truncation {
        report
            .diagnostics
            .insert(format!("truncation_ks_n{}", run.n), t.ks);
        report.diagnostics.insert(
            format!("truncation_flag_n{}", run.n),
            if t.flagged { 1.0 } else { 0.0 },
        );
    }
}

fn qq_points(sample: &[f64], reference: &[f64]) -> Vec<(f64, f64)> {
    let mut s = sample.to_vec();
    let mut r = reference.to_vec();
    s.sort_by(f64::total_cmp);
    r.sort_by(f64::total_cmp);
    (1..100)
        .map(|i| {
            let p = i as f64 / 100.0;
            (quantile_sorted(&r, p), quantile_sorted(&s, p))
        })
        .collect()
}

/// Weak limit of `(n/c_n) gamma_n(0)`: KS distance to draws of `W` per
/// grid point, its trend, and the lag-one to lag-zero median ratio.
pub fn run_limit_law(cfg: &Config) -> Result<Report> {
    let tol = &cfg.tolerance;
    let (table, runs) = simulate_grid(cfg)?;
    let alpha = cfg.levy.alpha;
    let mut report = Report::new(Kind::LimitLaw.as_str(), cfg.experiment.master_seed);
    let last_n = *cfg.experiment.n_grid.last().unwrap();
    let mut rng = reference_stream(cfg, last_n);
    let w: Vec<f64> = (0..cfg.experiment.reference_draws)
        .map(|_| positive_stable_w(&mut rng, alpha))
        .collect::<Result<_>>()?;

    let mut ks_by_n = Vec::new();
    let mut min_scaled = f64::INFINITY;
    let mut lag_ratio = None;
    for run in &runs {
        let n = run.n;
        let mut scaled: Vec<Vec<f64>> = vec![Vec::new(); cfg.experiment.max_lag + 1];
        for (r, e) in run.estimates.iter().enumerate() {
            let flagged = run.flagged(r);
            for (h, g) in e.gamma.iter().enumerate() {
                let v = n as f64 / run.c_n * g;
                report
                    .rows
                    .push(ResultRow::new(r, n, "scaled_gamma", Some(h), v, flagged));
                if !flagged {
                    scaled[h].push(v);
                }
            }
        }
        let included = scaled[0].len();
        report.count(included, run.estimates.len() - included);
        if included == 0 {
            return Err(Error::domain(format!("every replicate at n={n} was flagged")));
        }
        min_scaled = min_scaled.min(scaled[0].iter().copied().fold(f64::INFINITY, f64::min));
        let ks = ks_two_sample(&scaled[0], &w)?;
        ks_by_n.push((n as f64, ks));
        report.diagnostics.insert(format!("ks_n{n}"), ks);
        report
            .diagnostics
            .insert(format!("median_scaled_gamma0_n{n}"), median(&scaled[0]));
        if scaled.len() > 1 {
            let ratio = median(&scaled[1]) / median(&scaled[0]);
            report.diagnostics.insert(format!("lag_ratio_n{n}"), ratio);
            lag_ratio = Some(ratio);
        }
        note_truncation(&mut report, run);
        report.plots.push(PlotSeries::new(
            &format!("qq_n{n}"),
            "w_quantile",
            "scaled_gamma0_quantile",
            qq_points(&scaled[0], &w),
        ));
    }
    let increases: Vec<f64> = ks_by_n
        .windows(2)
        .map(|p| p[1].1 - p[0].1)
        .filter(|&d| d > 0.0)
        .collect();
    report.checks.push(Check::band(
        "ks_inversions",
        0.0,
        increases.len() as f64,
        0.0,
        1.0,
    ));
    report.checks.push(Check::at_most(
        "ks_max_inversion",
        increases.iter().copied().fold(0.0, f64::max),
        tol.ks_inversion,
    ));
    report.checks.push(Check::at_most(
        "ks_final",
        ks_by_n.last().unwrap().1,
        tol.ks_final,
    ));
    report
        .checks
        .push(Check::band("nonnegative", 0.0, min_scaled, 0.0, f64::MAX));
    if let Some(ratio) = lag_ratio {
        report
            .checks
            .push(Check::around("lag_ratio", table.p0()[1], ratio, tol.ratio_band));
    }
    report.plots.push(PlotSeries::new("ks_by_n", "n", "ks", ks_by_n));
    Ok(report)
}

/// Concentration of the sample autocorrelations at `P_0(x_h = 0)`.
pub fn run_acorr(cfg: &Config) -> Result<Report> {
    let tol = &cfg.tolerance;
    let max_lag = cfg.experiment.max_lag;
    if max_lag == 0 {
        return Err(Error::config("acorr needs experiment.max_lag >= 1"));
    }
    let (table, runs) = simulate_grid(cfg)?;
    let mut report = Report::new(Kind::Acorr.as_str(), cfg.experiment.master_seed);
    let mut medians: Vec<Vec<(f64, f64)>> = vec![Vec::new(); max_lag + 1];
    let mut iqr1 = Vec::new();
    let mut final_medians = vec![f64::NAN; max_lag + 1];
    for run in &runs {
        let n = run.n;
        for (r, e) in run.estimates.iter().enumerate() {
            let flagged = run.flagged(r);
            for h in 1..=max_lag {
                let v = e.rho.as_ref().map_or(f64::NAN, |rho| rho[h]);
                report.rows.push(ResultRow::new(r, n, "rho", Some(h), v, flagged));
            }
        }
        let kept = run.included();
        report.count(kept.len(), run.estimates.len() - kept.len());
        if kept.is_empty() {
            return Err(Error::domain(format!("every replicate at n={n} was flagged")));
        }
        for h in 1..=max_lag {
            let rho: Vec<f64> = kept.iter().map(|e| e.rho.as_ref().unwrap()[h]).collect();
            let med = median(&rho);
            medians[h].push((n as f64, med));
            final_medians[h] = med;
            report.diagnostics.insert(format!("rho_median_lag{h}_n{n}"), med);
            if h == 1 {
                let iqr = quantile(&rho, 0.75) - quantile(&rho, 0.25);
                iqr1.push((n as f64, iqr));
                report.diagnostics.insert(format!("rho_iqr_lag1_n{n}"), iqr);
            }
        }
        note_truncation(&mut report, run);
    }
    for h in 1..=max_lag.min(2) {
        report.checks.push(Check::around(
            &format!("rho_lag{h}"),
            table.p0()[h],
            final_medians[h],
            tol.ratio_band,
        ));
    }
    let not_shrinking = iqr1.windows(2).filter(|p| p[1].1 >= p[0].1).count();
    report.checks.push(Check::band(
        "iqr_lag1_decreasing",
        0.0,
        not_shrinking as f64,
        0.0,
        0.0,
    ));
    for (h, series) in medians.into_iter().enumerate().skip(1) {
        report.plots.push(PlotSeries::new(
            &format!("rho_median_lag{h}"),
            "n",
            "median_rho",
            series,
        ));
    }
    report
        .plots
        .push(PlotSeries::new("rho_iqr_lag1", "n", "iqr", iqr1));
    Ok(report)
}

/// Growth exponent of `median[n gamma_n(0)]` against that of `c_n`.
pub fn run_rate(cfg: &Config) -> Result<Report> {
    let tol = &cfg.tolerance;
    if cfg.experiment.n_grid.len() < 4 {
        return Err(Error::config("rate needs at least 4 grid points"));
    }
    let (table, runs) = simulate_grid(cfg)?;
    let levy = cfg.levy_tail()?;
    let beta = 0.5;
    let target = cn_index(levy.alpha(), beta);
    let mut report = Report::new(Kind::Rate.as_str(), cfg.experiment.master_seed);
    let mut med = Vec::new();
    for run in &runs {
        let n = run.n;
        let mut vals = Vec::new();
        for (r, e) in run.estimates.iter().enumerate() {
            let flagged = run.flagged(r);
            let v = n as f64 * e.gamma[0];
            report
                .rows
                .push(ResultRow::new(r, n, "n_gamma0", Some(0), v, flagged));
            if !flagged {
                vals.push(v);
            }
        }
        report.count(vals.len(), run.estimates.len() - vals.len());
        if vals.is_empty() {
            return Err(Error::domain(format!("every replicate at n={n} was flagged")));
        }
        med.push(median(&vals));
        note_truncation(&mut report, run);
    }
    let grid: Vec<f64> = cfg.experiment.n_grid.iter().map(|&n| n as f64).collect();
    let fit = rv_index(&grid, &med)?;
    report
        .diagnostics
        .insert("growth_slope_stderr".into(), fit.stderr);
    report
        .checks
        .push(Check::around("growth_slope", target, fit.slope, tol.slope_band));
    let schedule = CnSchedule::from_table(&levy, beta, &table, &cfg.experiment.n_grid)?;
    let cn_fit = schedule.index_fit()?;
    report
        .checks
        .push(Check::around("cn_slope", target, cn_fit.slope, tol.cn_slope_band));
    report.plots.push(PlotSeries::new(
        "median_n_gamma0",
        "n",
        "median_n_gamma0",
        grid.iter().copied().zip(med).collect(),
    ));
    report.plots.push(PlotSeries::new(
        "c_n",
        "n",
        "c_n",
        grid.iter().copied().zip(schedule.c.iter().copied()).collect(),
    ));
    let mut buf = Vec::new();
    schedule.write_csv(&mut buf)?;
    report.files.push((
        "cn_schedule.csv".into(),
        String::from_utf8_lossy(&buf).into_owned(),
    ));
    Ok(report)
}

/// Limit moments of `S_n(1_A) / a_n` under `mu_n`:
/// `(mu(A) Gamma(1+beta))^r r! Gamma(2-beta) / Gamma(r beta + 2 - beta)`.
pub fn dk_moment(beta: f64, r: u32, mass: f64) -> f64 {
    let rf = r as f64;
    (mass * gamma(1.0 + beta)).powi(r as i32) * gamma(1.0 + rf) * gamma(2.0 - beta)
        / gamma(rf * beta + 2.0 - beta)
}

/// Occupation time of `A` under the restricted measure, normalised by `a_n`.
pub fn run_dk(cfg: &Config) -> Result<Report> {
    let tol = &cfg.tolerance;
    let n = *cfg.experiment.n_grid.last().unwrap();
    let (chain, table) = flow(cfg, n)?;
    let beta = chain.beta();
    let sampler = VisitSampler::new(&table, n)?;
    let a = table.a_n(n);
    let values: Vec<f64> = (0..cfg.experiment.replicates)
        .into_par_iter()
        .map(|r| sampler.sample_count(&mut replicate_stream(cfg, n, r)) as f64 / a)
        .collect();
    let mut report = Report::new(Kind::Dk.as_str(), cfg.experiment.master_seed);
    for (r, &v) in values.iter().enumerate() {
        report
            .rows
            .push(ResultRow::new(r, n, "occupation_over_a_n", None, v, false));
    }
    report.count(values.len(), 0);
    let mass = chain.invariant(0);
    let m1 = mean(&values);
    let m2 = mean(&values.iter().map(|v| v * v).collect::<Vec<_>>());
    report.checks.push(Check::relative(
        "moment_r1",
        dk_moment(beta, 1, mass),
        m1,
        tol.moment1_rel,
    ));
    report.checks.push(Check::relative(
        "moment_r2",
        dk_moment(beta, 2, mass),
        m2,
        tol.moment2_rel,
    ));
    let mut rng = reference_stream(cfg, n);
    let scale = mass * gamma(1.0 + beta);
    let reference: Vec<f64> = (0..cfg.experiment.reference_draws)
        .map(|_| ml_at_one_minus_v(&mut rng, beta).map(|m| scale * m))
        .collect::<Result<_>>()?;
    let ks = ks_two_sample(&values, &reference)?;
    report.checks.push(Check::at_most("dk_ks", ks, tol.dk_ks));
    report.diagnostics.insert("a_n".into(), a);
    report.plots.push(PlotSeries::new(
        "qq",
        "limit_quantile",
        "sample_quantile",
        qq_points(&values, &reference),
    ));
    Ok(report)
}

/// Marginal law of `X_1`, symmetry, stationarity and the truncation
/// doubling diagnostic.
pub fn run_simulate(cfg: &Config) -> Result<Report> {
    let tol = &cfg.tolerance;
    let n = *cfg.experiment.n_grid.last().unwrap();
    let depth = n + cfg.experiment.max_lag;
    let (chain, table) = flow(cfg, depth)?;
    let sim = simulator_for(cfg, &chain, &table, n)?;
    let levy = cfg.levy_tail()?;
    let paths: Vec<Vec<f64>> = (0..cfg.experiment.replicates)
        .into_par_iter()
        .map(|r| sim.simulate_path(&mut replicate_stream(cfg, n, r)).map(|p| p.x))
        .collect::<Result<_>>()?;
    let mut report = Report::new(Kind::Simulate.as_str(), cfg.experiment.master_seed);
    let k_far = n.min(10);
    let x1: Vec<f64> = paths.iter().map(|x| x[0]).collect();
    let xk: Vec<f64> = paths.iter().map(|x| x[k_far - 1]).collect();
    for (r, x) in paths.iter().enumerate() {
        let flagged = x.iter().any(|v| !v.is_finite());
        report.rows.push(ResultRow::new(r, n, "x_1", None, x[0], flagged));
        report.rows.push(ResultRow::new(
            r,
            n,
            &format!("x_{k_far}"),
            None,
            x[k_far - 1],
            flagged,
        ));
    }
    let bad = paths.iter().filter(|x| x.iter().any(|v| !v.is_finite())).count();
    report.count(paths.len() - bad, bad);

    let sigma = marginal_scale(&levy, chain.invariant(0))?;
    report.diagnostics.insert("sigma".into(), sigma);
    let mut rng = reference_stream(cfg, n);
    let reference: Vec<f64> = (0..cfg.experiment.reference_draws)
        .map(|_| sas_cms(&mut rng, levy.alpha(), sigma))
        .collect::<Result<_>>()?;
    report.checks.push(Check::at_most(
        "marginal_ks",
        ks_two_sample(&x1, &reference)?,
        tol.marginal_ks,
    ));
    let sign_mean = x1.iter().map(|v| v.signum()).sum::<f64>() / x1.len() as f64;
    report.checks.push(Check::around(
        "sign_symmetry",
        0.0,
        sign_mean,
        4.0 / (x1.len() as f64).sqrt(),
    ));
    if k_far > 1 {
        report.checks.push(Check::at_most(
            &format!("stationarity_ks_x1_x{k_far}"),
            ks_two_sample(&x1, &xk)?,
            tol.marginal_ks,
        ));
    }
    if cfg.series.pilot > 0 {
        let t = sim.truncation_diagnostic(grid_seed(cfg, n, PILOT_TAG), cfg.series.pilot)?;
        report
            .checks
            .push(Check::at_most("truncation_ks", t.ks, tol.truncation_ks));
    }
    report.plots.push(PlotSeries::new(
        "qq_x1",
        "sas_quantile",
        "x1_quantile",
        qq_points(&x1, &reference),
    ));
    if cfg.output.dump_paths {
        report.paths = Some(paths);
    }
    Ok(report)
}

/// Transfer-operator residual, Hopf ratio and occupation scaling for
/// Boole's map.
pub fn run_boole_diag(cfg: &Config) -> Result<Report> {
    let tol = &cfg.tolerance;
    let b = &cfg.boole;
    let map = BooleMap::new(b.epsilon).map_err(|e| Error::config(e.to_string()))?;
    let mut report = Report::new(Kind::BooleDiag.as_str(), cfg.experiment.master_seed);

    let residual = map.transfer_residual(b.residual_points)?;
    report
        .checks
        .push(Check::at_most("transfer_residual", residual, tol.residual));

    let left = |x: f64| if x < 0.5 { 1.0 } else { 0.0 };
    let hopf = map.hopf_ratio_check(left, b.orbit_length, b.starts, grid_seed(cfg, b.orbit_length, 0))?;
    for row in &hopf.rows {
        let flagged = row.status.is_flagged();
        report.rows.push(ResultRow::new(
            row.start,
            b.orbit_length,
            "hopf_ratio",
            None,
            row.ratio,
            flagged,
        ));
        report.rows.push(ResultRow::new(
            row.start,
            b.orbit_length,
            "occupation",
            None,
            row.occupation as f64,
            flagged,
        ));
    }
    report.count(hopf.included, hopf.excluded);
    report.checks.push(Check::relative(
        "hopf_ratio",
        hopf.target,
        hopf.median,
        tol.hopf_rel,
    ));
    report.diagnostics.insert("hopf_q25".into(), hopf.q25);
    report.diagnostics.insert("hopf_q75".into(), hopf.q75);
    let mut buf = Vec::new();
    hopf.write_csv(&mut buf)?;
    report.files.push((
        "boole_starts.csv".into(),
        String::from_utf8_lossy(&buf).into_owned(),
    ));

    let occ = map.occupation_scaling(
        &b.scaling_grid,
        b.scaling_starts,
        grid_seed(cfg, b.orbit_length, SCALING_TAG),
    )?;
    report.count(occ.included, occ.excluded);
    report.checks.push(Check::around(
        "occupation_slope",
        0.5,
        occ.fit.slope,
        tol.occupation_slope_band,
    ));
    let doubling = occ.doubling_ratios();
    if !doubling.is_empty() {
        let geo = (doubling.iter().map(|r| r.ln()).sum::<f64>() / doubling.len() as f64).exp();
        report.checks.push(Check::band(
            "doubling_ratio",
            2f64.sqrt(),
            geo,
            tol.doubling_lo,
            tol.doubling_hi,
        ));
    }
    let x = 1e-4;
    report
        .diagnostics
        .insert("cubic_ratio_at_1e-4".into(), map.local_cubic_ratio(x));
    report.plots.push(PlotSeries::new(
        "occupation_median",
        "n",
        "median_occupation",
        occ.n_grid
            .iter()
            .map(|&n| n as f64)
            .zip(occ.medians.iter().copied())
            .collect(),
    ));
    Ok(report)
}

/// Exact return-time identities and asymptotics of the lazy walk, the
/// `c_n` index, and the two growth-ratio checks.
pub fn run_markov_diag(cfg: &Config) -> Result<Report> {
    let tol = &cfg.tolerance;
    let m = &cfg.markov;
    let depth = m
        .identity_kmax
        .max(m.asymptotic_n)
        .max(*m.rv_grid.last().unwrap())
        .max(m.ratio_n);
    let (chain, table) = flow(cfg, depth)?;
    let levy = cfg.levy_tail()?;
    let beta = chain.beta();
    let mut report = Report::new(Kind::MarkovDiag.as_str(), cfg.experiment.master_seed);
    deterministic_checks(
        &mut report,
        &chain,
        &table,
        m.identity_kmax,
        m.asymptotic_n,
        tol.identity,
        tol.asymptotic_band,
    )?;

    let grid: Vec<f64> = m.rv_grid.iter().map(|&n| n as f64).collect();
    let a: Vec<f64> = m.rv_grid.iter().map(|&n| table.a_n(n)).collect();
    let w: Vec<f64> = m.rv_grid.iter().map(|&n| table.wandering_rate(n)).collect();
    report.checks.push(Check::around(
        "rv_index_a_n",
        beta,
        rv_index(&grid, &a)?.slope,
        tol.rv_band,
    ));
    report.checks.push(Check::around(
        "rv_index_w_n",
        1.0 - beta,
        rv_index(&grid, &w)?.slope,
        tol.rv_band,
    ));
    let schedule = CnSchedule::from_table(&levy, beta, &table, &m.rv_grid)?;
    report.checks.push(Check::around(
        "cn_slope",
        cn_index(levy.alpha(), beta),
        schedule.index_fit()?.slope,
        tol.cn_slope_band,
    ));
    for (i, &n) in m.rv_grid.iter().enumerate() {
        report.rows.push(ResultRow::new(0, n, "a_n", None, a[i], false));
        report.rows.push(ResultRow::new(0, n, "w_n", None, w[i], false));
        report
            .rows
            .push(ResultRow::new(0, n, "c_n", None, schedule.c[i], false));
    }

    let mut rng = RngStream::new(grid_seed(cfg, m.ratio_n, 0), 0);
    let moment = occupation_moment(&table, m.ratio_n, 0.5 * levy.alpha(), m.ratio_samples, &mut rng)?;
    report.count(m.ratio_samples, 0);
    report.checks.push(Check::band(
        "growth_ratio",
        1.0,
        growth_ratio(&moment, &table, levy.alpha(), beta)?,
        tol.growth_lo,
        tol.growth_hi,
    ));
    report.checks.push(Check::band(
        "cn_tail_ratio",
        1.0,
        cn_tail_ratio(&moment, &table, &levy, beta)?,
        tol.growth_lo,
        tol.growth_hi,
    ));
    report.plots.push(PlotSeries::new(
        "a_n",
        "n",
        "a_n",
        grid.iter().copied().zip(a).collect(),
    ));
    report.plots.push(PlotSeries::new(
        "w_n",
        "n",
        "w_n",
        grid.iter().copied().zip(w).collect(),
    ));
    let mut buf = Vec::new();
    schedule.write_csv(&mut buf)?;
    report.files.push((
        "cn_schedule.csv".into(),
        String::from_utf8_lossy(&buf).into_owned(),
    ));
    Ok(report)
}

/// First-entrance and renewal identities, the asymptotic constants of
/// `a_n` and `w_n`, and the uniform-return product `b_n P_0(x_n = 0)`.
fn deterministic_checks(
    report: &mut Report,
    chain: &LazyWalkChain,
    table: &ReturnTable,
    kmax: usize,
    n: usize,
    identity_tol: f64,
    band: f64,
) -> Result<()> {
    let id = identity_check(chain, table, kmax)?;
    report.checks.push(Check::at_most(
        "first_entrance_identity",
        id.max_discrepancy,
        identity_tol,
    ));
    report.checks.push(Check::at_most(
        "renewal_identity",
        table.renewal_discrepancy(kmax),
        identity_tol,
    ));
    // step variance 1 - stay_prob sets both constants
    let var = 1.0 - chain.stay_prob();
    let nf = n as f64;
    let a_ref = 2.0 * (nf / (2.0 * std::f64::consts::PI * var)).sqrt();
    let w_ref = 2.0 * (2.0 * var * nf / std::f64::consts::PI).sqrt();
    report
        .checks
        .push(Check::around("a_n_constant", 1.0, table.a_n(n) / a_ref, band));
    report.checks.push(Check::around(
        "w_n_constant",
        1.0,
        table.wandering_rate(n) / w_ref,
        band,
    ));
    report.checks.push(Check::around(
        "uniform_return",
        1.0,
        uniformly_returning_check(table, n, chain.beta()),
        band,
    ));
    report
        .diagnostics
        .insert("dual_sum_bound".into(), dual_sum_bound(table, n));
    Ok(())
}

/// Fast deterministic suite: identities, an independent DP route for the
/// return table, the asymptotic constants and the Boole transfer residual.
pub fn selftest() -> Result<Report> {
    let mut report = Report::new("selftest", 0);
    let n = 100_000;
    let chain = LazyWalkChain::lazy_half(n);
    let table = ReturnTable::compute(&chain, n)?;
    deterministic_checks(&mut report, &chain, &table, 1000, n, 1e-12, 0.03)?;
    let small = LazyWalkChain::lazy_half(2000);
    let fast = ReturnTable::compute(&small, 2000)?;
    let dp = ReturnTable::banded_dp(&small, 2000)?;
    let gap = fast
        .p0()
        .iter()
        .zip(dp.p0())
        .chain(fast.fret().iter().zip(dp.fret()))
        .map(|(a, b)| (a - b).abs())
        .fold(0.0, f64::max);
    report.checks.push(Check::at_most("recurrence_vs_dp", gap, 1e-12));
    let residual = BooleMap::default().transfer_residual(1000)?;
    report
        .checks
        .push(Check::at_most("boole_transfer_residual", residual, 1e-8));
    Ok(report)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn small(kind: Kind, extra: &[&str]) -> Config {
        let mut o: Vec<String> = vec![
            "R=50".into(),
            "I_max=1000".into(),
            "reference_draws=2000".into(),
            "pilot=20".into(),
        ];
        o.extend(extra.iter().map(|s| s.to_string()));
        Config::from_toml_str("", Some(kind), &o).unwrap()
    }

    #[test]
    fn check_bands() {
        assert!(Check::around("a", 0.5, 0.54, 0.05).pass);
        assert!(!Check::around("a", 0.5, 0.56, 0.05).pass);
        assert!(!Check::at_most("k", f64::NAN, 1.0).pass);
        assert!(Check::relative("m", 2.0, 2.09, 0.05).pass);
    }

    #[test]
    fn dk_moment_values() {
        let pi = std::f64::consts::PI;
        assert!((dk_moment(0.5, 1, 1.0) - pi / 4.0).abs() < 1e-12);
        assert!((dk_moment(0.5, 2, 1.0) - pi / 3.0).abs() < 1e-12);
    }

    #[test]
    fn replicate_rerun_is_bitwise() {
        let cfg = small(Kind::Acorr, &["n_grid=[32,64]", "H=2"]);
        let (table, runs) = simulate_grid(&cfg).unwrap();
        let chain = cfg.chain_for(66).unwrap();
        let sim = simulator_for(&cfg, &chain, &table, 64).unwrap();
        for r in [0, 17, 49] {
            let again = series_replicate(&cfg, &sim, 64, r).unwrap();
            assert_eq!(again, runs[1].estimates[r]);
        }
    }

    #[test]
    fn reports_are_deterministic_and_accounted() {
        let cfg = small(Kind::LimitLaw, &["n_grid=[64,128]"]);
        let a = run_limit_law(&cfg).unwrap();
        let b = run_limit_law(&cfg).unwrap();
        assert_eq!(a.checks, b.checks);
        assert_eq!(a.rows, b.rows);
        assert_eq!(a.included + a.excluded, a.total);
        assert_eq!(a.total, 100);
    }

    #[test]
    fn independent_of_worker_count() {
        let cfg = small(Kind::Rate, &["n_grid=[16,32,64,128]"]);
        let one = rayon::ThreadPoolBuilder::new().num_threads(1).build().unwrap();
        let three = rayon::ThreadPoolBuilder::new().num_threads(3).build().unwrap();
        let a = one.install(|| run_rate(&cfg)).unwrap();
        let b = three.install(|| run_rate(&cfg)).unwrap();
        assert_eq!(a.rows, b.rows);
        assert_eq!(a.checks, b.checks);
    }

    #[test]
    fn writes_output_files() {
        let cfg = small(Kind::Dk, &["n_grid=[256]"]);
        let rep = run_dk(&cfg).unwrap();
        let dir = tempfile::tempdir().unwrap();
        rep.write(dir.path(), Some(&cfg)).unwrap();
        let summary: serde_json::Value =
            serde_json::from_str(&fs::read_to_string(dir.path().join("summary.json")).unwrap()).unwrap();
        assert_eq!(summary["schema_version"], 1);
        assert_eq!(summary["replicates"]["total"], 50);
        let csv = fs::read_to_string(dir.path().join("results.csv")).unwrap();
        assert_eq!(csv.lines().count(), 51);
        assert!(dir.path().join("plotdata/qq.csv").exists());
        let echoed = fs::read_to_string(dir.path().join("effective_config.toml")).unwrap();
        assert_eq!(Config::from_toml_str(&echoed, None, &[]).unwrap(), cfg);
    }

    #[test]
    fn selftest_passes() {
        let rep = selftest().unwrap();
        assert!(rep.passed(), "{:?}", rep.check_lines());
    }
}
