//! Experiment configuration.
//!
//! A config file is TOML:
//!
//! ```toml
//! experiment = "exp-geometric"
//! seed_base = 7
//!
//! [params]
//! nu = [0.5]
//! levels = [5]
//!
//! [thresholds.geometric]
//! alpha = 0.05
//! ```
//!
//! Every `params` key is optional and defaults to the acceptance-scale value.
//! Random draws are fully determined by `seed_base` and the stream index
//! each experiment assigns (see [`crate::experiments`]).

use std::fmt;
use std::path::Path;
use std::str::FromStr;

use nnwalk::classtest::TestId;
use nnwalk::localtime::log_grid;
use serde::{Deserialize, Serialize};

use crate::error::{LabError, Result};
use crate::thresholds::Thresholds;

pub const DEFAULT_SEED: u64 = 20_240_601;

/// Smallest sample the goodness-of-fit tests and regressions accept.
const MIN_SAMPLE: usize = 30;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize, clap::ValueEnum)]
pub enum ExperimentId {
    #[serde(rename = "exp-geometric")]
    #[value(name = "exp-geometric")]
    Geometric,
    #[serde(rename = "exp-exponential")]
    #[value(name = "exp-exponential")]
    Exponential,
    #[serde(rename = "exp-embed")]
    #[value(name = "exp-embed")]
    Embed,
    #[serde(rename = "exp-localtime")]
    #[value(name = "exp-localtime")]
    LocalTime,
    #[serde(rename = "exp-couple")]
    #[value(name = "exp-couple")]
    Couple,
    #[serde(rename = "exp-escape")]
    #[value(name = "exp-escape")]
    Escape,
    #[serde(rename = "exp-limitlaw")]
    #[value(name = "exp-limitlaw")]
    LimitLaw,
    #[serde(rename = "exp-classtable")]
    #[value(name = "exp-classtable")]
    ClassTable,
}

impl ExperimentId {
    pub const ALL: [ExperimentId; 8] = [
        ExperimentId::Geometric,
        ExperimentId::Exponential,
        ExperimentId::Embed,
        ExperimentId::LocalTime,
        ExperimentId::Couple,
        ExperimentId::Escape,
        ExperimentId::LimitLaw,
        ExperimentId::ClassTable,
    ];

    pub fn as_str(&self) -> &'static str {
        match self {
            ExperimentId::Geometric => "exp-geometric",
            ExperimentId::Exponential => "exp-exponential",
            ExperimentId::Embed => "exp-embed",
            ExperimentId::LocalTime => "exp-localtime",
            ExperimentId::Couple => "exp-couple",
            ExperimentId::Escape => "exp-escape",
            ExperimentId::LimitLaw => "exp-limitlaw",
            ExperimentId::ClassTable => "exp-classtable",
        }
    }
}

impl fmt::Display for ExperimentId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for ExperimentId {
    type Err = LabError;
    fn from_str(s: &str) -> Result<Self> {
        Self::ALL
            .into_iter()
            .find(|e| e.as_str() == s)
            .ok_or_else(|| LabError::Config(format!("unknown experiment '{s}'")))
    }
}

/// Roughly `per_decade` integer points per decade from `min` to `max`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Grid {
    pub min: u64,
    pub max: u64,
    pub per_decade: usize,
}

impl Grid {
    pub fn points(&self) -> Vec<u64> {
        log_grid(self.min, self.max, self.per_decade)
    }

    fn validate(&self, what: &str) -> Result<()> {
        if self.min == 0 || self.min >= self.max || self.per_decade == 0 {
            return Err(LabError::Config(format!("{what}: need 0 < min < max and per_decade > 0")));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct GeometricParams {
    pub nu: Vec<f64>,
    pub levels: Vec<u64>,
    /// Walks per repetition.
    pub walks: usize,
    pub repetitions: usize,
}

impl Default for GeometricParams {
    fn default() -> Self {
        Self { nu: vec![0.5, 1.0], levels: vec![5, 20], walks: 100_000, repetitions: 100 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ExponentialParams {
    pub nu: Vec<f64>,
    pub levels: Vec<u64>,
    pub exact_draws: usize,
    pub occupation_draws: usize,
    /// Half-width of the occupation band around the level.
    pub band: f64,
}

impl Default for ExponentialParams {
    fn default() -> Self {
        Self { nu: vec![0.5, 1.0], levels: vec![5], exact_draws: 10_000, occupation_draws: 1000, band: 0.02 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EmbedParams {
    pub nu: f64,
    pub n_grid: Grid,
    pub seeds: usize,
}

impl Default for EmbedParams {
    fn default() -> Self {
        Self { nu: 0.5, n_grid: Grid { min: 1000, max: 1_000_000, per_decade: 3 }, seeds: 30 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct LocalTimeParams {
    pub nu: Vec<f64>,
    pub r_grid: Grid,
    pub draws: usize,
}

impl Default for LocalTimeParams {
    fn default() -> Self {
        Self { nu: vec![0.5, 1.0], r_grid: Grid { min: 100, max: 10_000, per_decade: 4 }, draws: 100_000 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct CoupleParams {
    /// Drift constant `B` shared by both laws.
    pub drift: f64,
    pub gamma: Vec<f64>,
    /// Perturbation size of the first law; the second is unperturbed.
    pub c: f64,
    pub n_grid: Grid,
    pub seeds: usize,
}

impl Default for CoupleParams {
    fn default() -> Self {
        Self {
            drift: 2.0,
            gamma: vec![2.0, 1.5],
            c: 1.0,
            n_grid: Grid { min: 1000, max: 1_000_000, per_decade: 3 },
            seeds: 30,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EscapeParams {
    pub nu: f64,
    /// Levels `rmin..=rmax` enter the running maximum.
    pub rmin: u64,
    pub rmax: u64,
    /// Extra certified levels above `rmax`.
    pub margin: u64,
    pub seeds: usize,
}

impl Default for EscapeParams {
    fn default() -> Self {
        Self { nu: 0.5, rmin: 16, rmax: 10_000, margin: 100, seeds: 100 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct LimitLawParams {
    pub drift: f64,
    pub steps: u64,
    pub seeds: usize,
}

impl Default for LimitLawParams {
    fn default() -> Self {
        Self { drift: 2.0, steps: 100_000, seeds: 10_000 }
    }
}

/// One boundary family and the parameter values to tabulate.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FamilyGrid {
    /// `sqrt_loglog`, `power_log`, `loglog`, `inverse_loglog`,
    /// `inverse_log_pow`, or an expression (see [`crate::experiments::family`]).
    pub family: String,
    pub params: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ClassTableParams {
    pub tests: Vec<TestId>,
    pub families: Vec<FamilyGrid>,
    /// Bessel orders; walk tests use `B = 2 nu + 1`.
    pub nu: Vec<f64>,
}

impl Default for ClassTableParams {
    fn default() -> Self {
        Self {
            tests: vec![TestId::BesselUpper, TestId::WalkUpper, TestId::BesselLower, TestId::WalkLower],
            families: vec![
                FamilyGrid { family: "sqrt_loglog".into(), params: vec![1.0, 1.5, 1.9, 2.1, 2.5, 3.0] },
                FamilyGrid { family: "power_log".into(), params: vec![0.25, 0.5, 0.75, 1.0, 1.5, 2.0] },
            ],
            nu: vec![0.5, 1.0],
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum Params {
    Geometric(GeometricParams),
    Exponential(ExponentialParams),
    Embed(EmbedParams),
    LocalTime(LocalTimeParams),
    Couple(CoupleParams),
    Escape(EscapeParams),
    LimitLaw(LimitLawParams),
    ClassTable(ClassTableParams),
}

impl Params {
    pub fn defaults(id: ExperimentId) -> Self {
        match id {
            ExperimentId::Geometric => Params::Geometric(Default::default()),
            ExperimentId::Exponential => Params::Exponential(Default::default()),
            ExperimentId::Embed => Params::Embed(Default::default()),
            ExperimentId::LocalTime => Params::LocalTime(Default::default()),
            ExperimentId::Couple => Params::Couple(Default::default()),
            ExperimentId::Escape => Params::Escape(Default::default()),
            ExperimentId::LimitLaw => Params::LimitLaw(Default::default()),
            ExperimentId::ClassTable => Params::ClassTable(Default::default()),
        }
    }

    fn parse(id: ExperimentId, table: toml::Table) -> Result<Self> {
        let err = |e: toml::de::Error| LabError::Config(format!("[params] for {id}: {e}"));
        Ok(match id {
            ExperimentId::Geometric => Params::Geometric(table.try_into().map_err(err)?),
            ExperimentId::Exponential => Params::Exponential(table.try_into().map_err(err)?),
            ExperimentId::Embed => Params::Embed(table.try_into().map_err(err)?),
            ExperimentId::LocalTime => Params::LocalTime(table.try_into().map_err(err)?),
            ExperimentId::Couple => Params::Couple(table.try_into().map_err(err)?),
            ExperimentId::Escape => Params::Escape(table.try_into().map_err(err)?),
            ExperimentId::LimitLaw => Params::LimitLaw(table.try_into().map_err(err)?),
            ExperimentId::ClassTable => Params::ClassTable(table.try_into().map_err(err)?),
        })
    }

    fn validate(&self) -> Result<()> {
        let bad = |m: &str| Err(LabError::Config(m.to_string()));
        let positive = |v: &[f64]| !v.is_empty() && v.iter().all(|&x| x > 0.0 && x.is_finite());
        match self {
            Params::Geometric(p) => {
                if p.walks < MIN_SAMPLE || p.repetitions == 0 {
                    return bad("need walks >= 30 and repetitions > 0");
                }
                if !positive(&p.nu) || p.levels.is_empty() || p.levels.iter().any(|&r| r < 2) {
                    return bad("need nu > 0 and levels >= 2");
                }
            }
            Params::Exponential(p) => {
                if p.exact_draws < MIN_SAMPLE || p.occupation_draws < MIN_SAMPLE {
                    return bad("draw counts must be at least 30");
                }
                if !positive(&p.nu) || p.levels.is_empty() || p.levels.iter().any(|&r| r < 2) {
                    return bad("need nu > 0 and levels >= 2");
                }
                if !(p.band > 0.0 && p.band < 0.5) {
                    return bad("band must lie in (0, 0.5)");
                }
            }
            Params::Embed(p) => {
                p.n_grid.validate("n_grid")?;
                if p.seeds < MIN_SAMPLE || !(p.nu > 0.0) {
                    return bad("need seeds >= 30 and nu > 0");
                }
                if p.n_grid.max < 1000 * p.n_grid.min {
                    return bad("n_grid must span at least three decades");
                }
            }
            Params::LocalTime(p) => {
                p.r_grid.validate("r_grid")?;
                if p.draws < MIN_SAMPLE || !positive(&p.nu) || p.r_grid.min < 2 {
                    return bad("need draws >= 30, nu > 0 and levels >= 2");
                }
            }
            Params::Couple(p) => {
                p.n_grid.validate("n_grid")?;
                if p.seeds < MIN_SAMPLE || p.gamma.is_empty() {
                    return bad("need seeds >= 30 and at least one gamma");
                }
            }
            Params::Escape(p) => {
                if p.seeds == 0 || !(p.nu > 0.0) || p.rmin < 3 || p.rmin > p.rmax {
                    return bad("need seeds > 0, nu > 0 and 3 <= rmin <= rmax");
                }
            }
            Params::LimitLaw(p) => {
                if p.seeds < MIN_SAMPLE || p.steps == 0 || !(p.drift > 1.0) {
                    return bad("need seeds >= 30, steps > 0 and drift > 1");
                }
            }
            Params::ClassTable(p) => {
                if p.tests.is_empty() || p.families.is_empty() || !positive(&p.nu) {
                    return bad("need tests, families and nu > 0");
                }
                if p.families.iter().any(|f| f.params.is_empty()) {
                    return bad("every family needs at least one parameter");
                }
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExperimentConfig {
    pub experiment: ExperimentId,
    pub seed_base: u64,
    pub params: Params,
    pub thresholds: Thresholds,
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct ConfigFile {
    experiment: ExperimentId,
    seed_base: Option<u64>,
    params: Option<toml::Table>,
    thresholds: Option<toml::Table>,
}

impl ExperimentConfig {
    pub fn defaults(id: ExperimentId) -> Self {
        Self { experiment: id, seed_base: DEFAULT_SEED, params: Params::defaults(id), thresholds: Thresholds::default() }
    }

    pub fn from_toml_str(text: &str) -> Result<Self> {
        let f: ConfigFile = toml::from_str(text).map_err(|e| LabError::Config(e.to_string()))?;
        let params = Params::parse(f.experiment, f.params.unwrap_or_default())?;
        let thresholds = Thresholds::with_overrides(&f.thresholds.unwrap_or_default())?;
        let cfg = Self { experiment: f.experiment, seed_base: f.seed_base.unwrap_or(DEFAULT_SEED), params, thresholds };
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|source| LabError::Io { path: path.into(), source })?;
        Self::from_toml_str(&text)
    }

    pub fn validate(&self) -> Result<()> {
        if std::mem::discriminant(&self.params) != std::mem::discriminant(&Params::defaults(self.experiment)) {
            return Err(LabError::Config(format!("parameters do not belong to {}", self.experiment)));
        }
        self.thresholds.validate()?;
        self.params.validate()
    }
}
