//! Acceptance thresholds. Defaults ship in `defaults/thresholds.toml`;
//! overrides are deep-merged over them key by key.

use serde::{Deserialize, Serialize};

use crate::error::{LabError, Result};

pub const DEFAULTS: &str = include_str!("../defaults/thresholds.toml");

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Thresholds {
    pub version: String,
    pub oracle: Tolerance,
    pub geometric: Geometric,
    pub exponential: Alpha,
    pub embed: Embed,
    pub localtime: SlopeMax,
    pub couple: Couple,
    pub limitlaw: Alpha,
    pub escape: Escape,
    pub chain: Tolerance,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Tolerance {
    pub tolerance: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Alpha {
    pub alpha: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Geometric {
    pub alpha: f64,
    pub min_pass_rate: f64,
    pub mean_sigmas: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Embed {
    pub slope_min: f64,
    pub slope_max: f64,
    pub level: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SlopeMax {
    pub slope_max: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Couple {
    pub level: f64,
    pub slope_max: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Escape {
    pub lower: f64,
    pub upper: f64,
    pub min_fraction: f64,
}

/// Recursively overlays `over` onto `base`.
pub(crate) fn merge(base: &mut toml::Table, over: &toml::Table) {
    for (k, v) in over {
        match (base.get_mut(k), v) {
            (Some(toml::Value::Table(b)), toml::Value::Table(o)) => merge(b, o),
            _ => {
                base.insert(k.clone(), v.clone());
            }
        }
    }
}

impl Default for Thresholds {
    fn default() -> Self {
        toml::from_str(DEFAULTS).expect("shipped thresholds parse")
    }
}

impl Thresholds {
    /// Defaults with `over` merged on top.
    pub fn with_overrides(over: &toml::Table) -> Result<Self> {
        let mut base: toml::Table = toml::from_str(DEFAULTS).expect("shipped thresholds parse");
        merge(&mut base, over);
        let t: Thresholds = base.try_into().map_err(|e: toml::de::Error| LabError::Config(format!("thresholds: {e}")))?;
        t.validate()?;
        Ok(t)
    }

    pub fn from_toml_str(text: &str) -> Result<Self> {
        let over: toml::Table = toml::from_str(text).map_err(|e| LabError::Config(format!("thresholds: {e}")))?;
        Self::with_overrides(&over)
    }

    pub fn validate(&self) -> Result<()> {
        let prob = |x: f64| x > 0.0 && x < 1.0;
        let ok = prob(self.geometric.alpha)
            && prob(self.exponential.alpha)
            && prob(self.limitlaw.alpha)
            && prob(self.embed.level)
            && prob(self.couple.level)
            && (0.0..=1.0).contains(&self.geometric.min_pass_rate)
            && (0.0..=1.0).contains(&self.escape.min_fraction)
            && self.embed.slope_min <= self.embed.slope_max
            && self.escape.lower <= self.escape.upper
            && self.oracle.tolerance > 0.0
            && self.chain.tolerance > 0.0;
        if ok {
            Ok(())
        } else {
            Err(LabError::Config("threshold values out of range".into()))
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn defaults_parse_and_override() {
        let t = Thresholds::default();
        assert_eq!(t.embed.slope_max, 0.40);
        let o = Thresholds::from_toml_str("[couple]\nslope_max = 0.3\n").unwrap();
        assert_eq!(o.couple.slope_max, 0.3);
        assert_eq!(o.couple.level, 0.95);
        assert!(Thresholds::from_toml_str("[couple]\nslope = 0.3\n").is_err());
        assert!(Thresholds::from_toml_str("[geometric]\nalpha = 2.0\n").is_err());
    }
}
