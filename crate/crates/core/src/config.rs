//! Experiment configuration files.
//!
//! A configuration is a TOML document with the sections `experiment`,
//! `levy`, `chain`, `series`, `markov`, `boole`, `tolerance` and `output`.
//! Every key has a default that depends on the experiment kind; a file only
//! lists what it changes. Unknown sections or keys are rejected.
//!
//! ```toml
//! [experiment]
//! kind = "rate"
//! n_grid = [1024, 2048, 4096, 8192]
//! replicates = 200
//! master_seed = 7
//!
//! [levy]
//! alpha = 1.5
//! ```
//!
//! Overrides are `key=value` strings applied after the file. The key is
//! either `section.key` or a bare key that occurs in exactly one section
//! (`alpha`, `replicates`, ...). A few short aliases are accepted: `seed`,
//! `R`, `H` and `I_max`.

use std::fmt;
use std::path::Path;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::levy::{default_p0, LevyTail};
use crate::markov::LazyWalkChain;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Kind {
    LimitLaw,
    Acorr,
    Rate,
    Dk,
    BooleDiag,
    MarkovDiag,
    Simulate,
}

impl Kind {
    pub const ALL: [Kind; 7] = [
        Kind::LimitLaw,
        Kind::Acorr,
        Kind::Rate,
        Kind::Dk,
        Kind::BooleDiag,
        Kind::MarkovDiag,
        Kind::Simulate,
    ];

    pub fn as_str(&self) -> &'static str {
        match self {
            Kind::LimitLaw => "limit-law",
            Kind::Acorr => "acorr",
            Kind::Rate => "rate",
            Kind::Dk => "dk",
            Kind::BooleDiag => "boole-diag",
            Kind::MarkovDiag => "markov-diag",
            Kind::Simulate => "simulate",
        }
    }

    pub(crate) fn tag(&self) -> u64 {
        Kind::ALL.iter().position(|k| k == self).unwrap() as u64 + 1
    }
}

impl fmt::Display for Kind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Kind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Kind::ALL
            .iter()
            .copied()
            .find(|k| k.as_str() == s)
            .ok_or_else(|| Error::config(format!("unknown experiment kind '{s}'")))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentSection {
    pub kind: Kind,
    /// Sample lengths `n`, strictly increasing.
    pub n_grid: Vec<usize>,
    /// Largest lag `H`.
    pub max_lag: usize,
    /// Replicates `R` per grid point.
    pub replicates: usize,
    pub master_seed: u64,
    /// Draws from the limit law used as the comparison sample.
    pub reference_draws: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LevySection {
    pub alpha: f64,
    pub scale: f64,
    /// Lower-tail exponent; midpoint of `(alpha, 2)` when absent.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub p0: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ChainSection {
    /// Holding probability of the lazy walk.
    pub stay_prob: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SeriesSection {
    /// Series terms kept per path (`I_max`) at the first grid point.
    pub terms: usize,
    /// Terms grow as `terms * (n / n_grid[0])^terms_growth` along the grid.
    /// The truncation error of `gamma(0)` relative to `c_n` grows with `n`
    /// at a fixed term count.
    #[serde(default)]
    pub terms_growth: f64,
    /// Pilot paths for the doubling diagnostic; 0 skips it.
    pub pilot: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MarkovSection {
    pub identity_kmax: usize,
    pub asymptotic_n: usize,
    pub rv_grid: Vec<usize>,
    pub ratio_n: usize,
    pub ratio_samples: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BooleSection {
    pub epsilon: f64,
    pub orbit_length: usize,
    pub starts: usize,
    pub scaling_grid: Vec<usize>,
    pub scaling_starts: usize,
    pub residual_points: usize,
}

/// Acceptance bands. Finite-`n` bands are policy: the limit theorems give
/// no rates.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ToleranceSection {
    pub ks_final: f64,
    pub ks_inversion: f64,
    pub ratio_band: f64,
    pub slope_band: f64,
    pub cn_slope_band: f64,
    pub moment1_rel: f64,
    pub moment2_rel: f64,
    pub dk_ks: f64,
    pub identity: f64,
    pub asymptotic_band: f64,
    pub rv_band: f64,
    pub growth_lo: f64,
    pub growth_hi: f64,
    pub residual: f64,
    pub hopf_rel: f64,
    pub occupation_slope_band: f64,
    pub doubling_lo: f64,
    pub doubling_hi: f64,
    pub marginal_ks: f64,
    pub truncation_ks: f64,
}

impl Default for ToleranceSection {
    fn default() -> Self {
        ToleranceSection {
            ks_final: 0.15,
            ks_inversion: 0.02,
            ratio_band: 0.05,
            slope_band: 0.1,
            cn_slope_band: 0.03,
            moment1_rel: 0.05,
            moment2_rel: 0.07,
            dk_ks: 0.1,
            identity: 1e-12,
            asymptotic_band: 0.03,
            rv_band: 0.02,
            growth_lo: 0.8,
            growth_hi: 1.25,
            residual: 1e-8,
            hopf_rel: 0.05,
            occupation_slope_band: 0.05,
            doubling_lo: 1.35,
            doubling_hi: 1.48,
            marginal_ks: 0.02,
            truncation_ks: 0.01,
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OutputSection {
    /// Write every simulated path to `paths.csv` (simulate only).
    pub dump_paths: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Config {
    pub experiment: ExperimentSection,
    pub levy: LevySection,
    pub chain: ChainSection,
    pub series: SeriesSection,
    pub markov: MarkovSection,
    pub boole: BooleSection,
    pub tolerance: ToleranceSection,
    pub output: OutputSection,
}

fn pow2(exps: std::ops::RangeInclusive<u32>) -> Vec<usize> {
    exps.map(|e| 1usize << e).collect()
}

impl Config {
    /// Defaults for one experiment kind.
    pub fn for_kind(kind: Kind) -> Self {
        let (n_grid, max_lag, replicates) = match kind {
            Kind::LimitLaw => (vec![1 << 12, 1 << 14, 1 << 16], 1, 2000),
            Kind::Acorr => (vec![1 << 10, 1 << 12, 1 << 14], 4, 200),
            Kind::Rate => (pow2(10..=17), 0, 200),
            Kind::Dk => (vec![1 << 14], 0, 10_000),
            Kind::Simulate => (vec![16], 0, 100_000),
            Kind::BooleDiag | Kind::MarkovDiag => (vec![1 << 14], 0, 200),
        };
        let terms_growth = if kind == Kind::LimitLaw { 1.0 } else { 0.0 };
        let (reference_draws, pilot) = match kind {
            Kind::Simulate => (100_000, 10_000),
            _ => (20_000, 200),
        };
        Config {
            experiment: ExperimentSection {
                kind,
                n_grid,
                max_lag,
                replicates,
                master_seed: 20_240_601,
                reference_draws,
            },
            levy: LevySection {
                alpha: 1.5,
                scale: 1.0,
                p0: None,
            },
            chain: ChainSection { stay_prob: 0.5 },
            series: SeriesSection {
                terms: 10_000,
                terms_growth,
                pilot,
            },
            markov: MarkovSection {
                identity_kmax: 1000,
                asymptotic_n: 100_000,
                rv_grid: pow2(10..=17),
                ratio_n: 1 << 14,
                ratio_samples: 1_000_000,
            },
            boole: BooleSection {
                epsilon: 0.1,
                orbit_length: 10_000_000,
                starts: 100,
                scaling_grid: pow2(10..=24),
                scaling_starts: 200,
                residual_points: 1000,
            },
            tolerance: ToleranceSection::default(),
            output: OutputSection::default(),
        }
    }

    /// Builds the effective configuration: kind defaults, then the file,
    /// then the overrides. `kind` comes from the caller when given, else
    /// from the file.
    pub fn load(path: Option<&Path>, kind: Option<Kind>, overrides: &[String]) -> Result<Self> {
        let file = match path {
            Some(p) => {
                let text = std::fs::read_to_string(p)
                    .map_err(|e| Error::config(format!("cannot read config {}: {e}", p.display())))?;
                Self::parse_table(&text)?
            }
            None => toml::Table::new(),
        };
        Self::from_table(file, kind, overrides)
    }

    pub fn from_toml_str(text: &str, kind: Option<Kind>, overrides: &[String]) -> Result<Self> {
        Self::from_table(Self::parse_table(text)?, kind, overrides)
    }

    fn parse_table(text: &str) -> Result<toml::Table> {
        text.parse::<toml::Table>()
            .map_err(|e| Error::config(format!("invalid config: {}", one_line(&e.to_string()))))
    }

    fn from_table(file: toml::Table, kind: Option<Kind>, overrides: &[String]) -> Result<Self> {
        let file_kind = match file.get("experiment").and_then(|e| e.get("kind")) {
            Some(toml::Value::String(s)) => Some(s.parse::<Kind>()?),
            Some(other) => {
                return Err(Error::config(format!(
                    "experiment.kind must be a string, got {other}"
                )))
            }
            None => None,
        };
        let kind = match (kind, file_kind) {
            (Some(a), Some(b)) if a != b => {
                return Err(Error::config(format!(
                    "config is for '{b}' but '{a}' was requested"
                )))
            }
            (Some(a), _) => a,
            (None, Some(b)) => b,
            (None, None) => return Err(Error::config("experiment.kind is missing")),
        };
        let mut table = to_table(&Config::for_kind(kind))?;
        merge(&mut table, file);
        for o in overrides {
            apply_override(&mut table, o)?;
        }
        let cfg: Config = toml::Value::Table(table)
            .try_into()
            .map_err(|e: toml::de::Error| Error::config(one_line(&e.to_string())))?;
        if cfg.experiment.kind != kind {
            return Err(Error::config("experiment.kind cannot be overridden"));
        }
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<()> {
        let e = &self.experiment;
        if e.n_grid.is_empty() || e.n_grid[0] == 0 {
            return Err(Error::config(
                "experiment.n_grid must be nonempty with positive entries",
            ));
        }
        if e.n_grid.windows(2).any(|w| w[0] >= w[1]) {
            return Err(Error::config("experiment.n_grid must be strictly increasing"));
        }
        if e.replicates < 50 {
            return Err(Error::config(format!(
                "experiment.replicates must be >= 50, got {}",
                e.replicates
            )));
        }
        if e.reference_draws == 0 {
            return Err(Error::config("experiment.reference_draws must be >= 1"));
        }
        self.levy_tail()?;
        self.chain_for(1)?;
        if self.series.terms < crate::series::MIN_TERMS {
            return Err(Error::config(format!(
                "series.terms must be >= {}, got {}",
                crate::series::MIN_TERMS,
                self.series.terms
            )));
        }
        if !(0.0..=2.0).contains(&self.series.terms_growth) {
            return Err(Error::config(format!(
                "series.terms_growth must lie in [0,2], got {}",
                self.series.terms_growth
            )));
        }
        let m = &self.markov;
        if m.rv_grid.len() < 4 || m.rv_grid.windows(2).any(|w| w[0] >= w[1]) || m.rv_grid[0] == 0 {
            return Err(Error::config(
                "markov.rv_grid needs >= 4 strictly increasing positive entries",
            ));
        }
        if m.identity_kmax == 0 || m.asymptotic_n == 0 || m.ratio_n == 0 || m.ratio_samples == 0 {
            return Err(Error::config("markov section entries must be positive"));
        }
        let b = &self.boole;
        if !(b.epsilon > 0.0 && b.epsilon < 0.5) {
            return Err(Error::config(format!(
                "boole.epsilon must lie in (0,1/2), got {}",
                b.epsilon
            )));
        }
        if b.orbit_length == 0 || b.starts == 0 || b.scaling_starts == 0 || b.residual_points == 0 {
            return Err(Error::config("boole section entries must be positive"));
        }
        if b.scaling_grid.len() < 4
            || b.scaling_grid.windows(2).any(|w| w[0] >= w[1])
            || b.scaling_grid[0] == 0
        {
            return Err(Error::config(
                "boole.scaling_grid needs >= 4 strictly increasing positive entries",
            ));
        }
        Ok(())
    }

    /// `I_max` used at sample length `n`.
    pub fn terms_for(&self, n: usize) -> usize {
        let n0 = self.experiment.n_grid.first().copied().unwrap_or(n).max(1);
        let factor = (n as f64 / n0 as f64).powf(self.series.terms_growth);
        ((self.series.terms as f64 * factor).ceil() as usize).max(crate::series::MIN_TERMS)
    }

    pub fn levy_tail(&self) -> Result<LevyTail> {
        let l = &self.levy;
        let p0 = l.p0.unwrap_or_else(|| default_p0(l.alpha));
        LevyTail::new(l.alpha, l.scale, p0).map_err(|e| Error::config(e.to_string()))
    }

    /// Lazy walk whose band covers `n` steps.
    pub fn chain_for(&self, n: usize) -> Result<LazyWalkChain> {
        LazyWalkChain::new(self.chain.stay_prob, n).map_err(|e| Error::config(e.to_string()))
    }

    pub fn kind(&self) -> Kind {
        self.experiment.kind
    }

    /// The effective configuration as TOML; loading it back gives an equal
    /// configuration.
    pub fn to_toml_string(&self) -> Result<String> {
        toml::to_string(self).map_err(|e| Error::config(e.to_string()))
    }
}

fn one_line(s: &str) -> String {
    s.split_whitespace().collect::<Vec<_>>().join(" ")
}

fn to_table(cfg: &Config) -> Result<toml::Table> {
    match toml::Value::try_from(cfg).map_err(|e| Error::config(e.to_string()))? {
        toml::Value::Table(t) => Ok(t),
        _ => Err(Error::config("configuration did not serialize to a table")),
    }
}

fn merge(base: &mut toml::Table, over: toml::Table) {
    for (k, v) in over {
        match (base.get_mut(&k), v) {
            (Some(toml::Value::Table(b)), toml::Value::Table(o)) => merge(b, o),
            (_, v) => {
                base.insert(k, v);
            }
        }
    }
}

const ALIASES: [(&str, &str); 4] = [
    ("seed", "experiment.master_seed"),
    ("R", "experiment.replicates"),
    ("H", "experiment.max_lag"),
    ("I_max", "series.terms"),
];

/// Section names that carry `key`, including optional keys absent from the
/// serialized defaults.
fn sections_with(table: &toml::Table, key: &str) -> Vec<String> {
    let mut found: Vec<String> = table
        .iter()
        .filter(|(_, v)| v.as_table().is_some_and(|t| t.contains_key(key)))
        .map(|(s, _)| s.clone())
        .collect();
    if key == "p0" && !found.iter().any(|s| s == "levy") {
        found.push("levy".into());
    }
    found
}

fn apply_override(table: &mut toml::Table, spec: &str) -> Result<()> {
    let (key, raw) = spec
        .split_once('=')
        .ok_or_else(|| Error::config(format!("override '{spec}' is not key=value")))?;
    let key = key.trim();
    let raw = raw.trim();
    let key = ALIASES
        .iter()
        .find(|(a, _)| *a == key)
        .map(|(_, full)| full.to_string())
        .unwrap_or_else(|| key.to_string());
    let (section, field) = match key.split_once('.') {
        Some((s, f)) => (s.to_string(), f.to_string()),
        None => {
            let found = sections_with(table, &key);
            match found.len() {
                1 => (found[0].clone(), key.clone()),
                0 => return Err(Error::config(format!("unknown config key '{key}'"))),
                _ => {
                    return Err(Error::config(format!(
                        "ambiguous config key '{key}' (sections: {})",
                        found.join(", ")
                    )))
                }
            }
        }
    };
    let value = parse_value(raw);
    let sec = table
        .get_mut(&section)
        .and_then(|v| v.as_table_mut())
        .ok_or_else(|| Error::config(format!("unknown config section '{section}'")))?;
    // integer keys given as floats like 1e4 are converted when exact
    let value = match (sec.get(&field), value) {
        (Some(toml::Value::Integer(_)), toml::Value::Float(f)) if f.fract() == 0.0 && f.abs() < 9.0e18 => {
            toml::Value::Integer(f as i64)
        }
        (Some(toml::Value::Float(_)), toml::Value::Integer(i)) => toml::Value::Float(i as f64),
        (_, v) => v,
    };
    sec.insert(field, value);
    Ok(())
}

fn parse_value(raw: &str) -> toml::Value {
    let doc = format!("v = {raw}");
    match doc.parse::<toml::Table>() {
        Ok(mut t) => t
            .remove("v")
            .unwrap_or_else(|| toml::Value::String(raw.to_string())),
        Err(_) => toml::Value::String(raw.to_string()),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn terms_grow_along_the_grid() {
        let cfg = Config::for_kind(Kind::LimitLaw);
        assert_eq!(cfg.terms_for(1 << 12), 10_000);
        assert_eq!(cfg.terms_for(1 << 16), 160_000);
        let flat = Config::for_kind(Kind::Rate);
        assert_eq!(flat.terms_for(1 << 17), 10_000);
        let bad = Config::from_toml_str("[series]\nterms_growth = 3.0", Some(Kind::Rate), &[]);
        assert!(bad.is_err());
    }

    #[test]
    fn defaults_are_valid_for_every_kind() {
        for kind in Kind::ALL {
            let cfg = Config::for_kind(kind);
            cfg.validate().unwrap();
            assert_eq!(kind.as_str().parse::<Kind>().unwrap(), kind);
        }
    }

    #[test]
    fn file_then_overrides() {
        let text = "[experiment]\nkind = \"rate\"\nreplicates = 60\n[levy]\nalpha = 1.2\n";
        let cfg = Config::from_toml_str(text, None, &["alpha=1.0".into(), "seed=9".into()]).unwrap();
        assert_eq!(cfg.kind(), Kind::Rate);
        assert_eq!(cfg.experiment.replicates, 60);
        assert_eq!(cfg.levy.alpha, 1.0);
        assert_eq!(cfg.experiment.master_seed, 9);
        let cfg = Config::from_toml_str(
            "",
            Some(Kind::Dk),
            &["experiment.n_grid=[512]".into(), "I_max=1e4".into()],
        )
        .unwrap();
        assert_eq!(cfg.experiment.n_grid, vec![512]);
        assert_eq!(cfg.series.terms, 10_000);
        let cfg = Config::from_toml_str("", Some(Kind::Rate), &["p0=1.9".into(), "scale=2".into()]).unwrap();
        assert_eq!(cfg.levy.p0, Some(1.9));
        assert_eq!(cfg.levy.scale, 2.0);
    }

    #[test]
    fn rejects_unknown_and_bad_values() {
        assert!(matches!(
            Config::from_toml_str("[experiment]\nkind=\"rate\"\nbogus=1\n", None, &[]),
            Err(Error::Config(_))
        ));
        assert!(Config::from_toml_str("[nonsense]\nx=1\n", Some(Kind::Rate), &[]).is_err());
        assert!(Config::from_toml_str("", Some(Kind::Rate), &["bogus=1".into()]).is_err());
        assert!(Config::from_toml_str("", Some(Kind::Rate), &["alpha".into()]).is_err());
        assert!(Config::from_toml_str("", Some(Kind::Rate), &["alpha=2.5".into()]).is_err());
        assert!(Config::from_toml_str("", Some(Kind::Rate), &["R=10".into()]).is_err());
        assert!(Config::from_toml_str("", Some(Kind::Rate), &["n_grid=[4,2,8,16]".into()]).is_err());
        assert!(Config::from_toml_str("", None, &[]).is_err());
        assert!(Config::from_toml_str("[experiment]\nkind=\"dk\"\n", Some(Kind::Rate), &[]).is_err());
        assert!(Config::from_toml_str("", Some(Kind::Rate), &["kind=dk".into()]).is_err());
        assert!(Config::from_toml_str("not toml [", Some(Kind::Rate), &[]).is_err());
    }

    #[test]
    fn echo_round_trips() {
        let cfg =
            Config::from_toml_str("", Some(Kind::Acorr), &["alpha=1.25".into(), "p0=1.5".into()]).unwrap();
        let text = cfg.to_toml_string().unwrap();
        let back = Config::from_toml_str(&text, None, &[]).unwrap();
        assert_eq!(cfg, back);
    }

    #[test]
    fn missing_file_is_config_error() {
        let err = Config::load(Some(Path::new("/nonexistent/cfg.toml")), Some(Kind::Rate), &[]).unwrap_err();
        assert!(matches!(err, Error::Config(_)));
        assert!(!err.to_string().contains('\n'));
    }
}
