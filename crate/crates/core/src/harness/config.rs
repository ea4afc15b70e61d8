//! TOML sweep configurations.

use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{LabError, Limits, Result};
use crate::sharpness::{MaincorConfig, SweepConfig, DEFAULT_TOLERANCE};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum SweepKind {
    Mainexp,
    Maincor,
    Synthetic,
}

/// A known power law `constant · x^exponent`, for exercising the fit and output path.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SyntheticConfig {
    pub x: Vec<f64>,
    pub exponent: f64,
    #[serde(default = "one")]
    pub constant: f64,
    #[serde(default = "default_tolerance")]
    pub tolerance: f64,
}

fn one() -> f64 {
    1.0
}

fn default_tolerance() -> f64 {
    DEFAULT_TOLERANCE
}

impl SyntheticConfig {
    pub fn validate(&self) -> Result<()> {
        if self.x.len() < 3 || self.x.windows(2).any(|w| w[0] >= w[1]) || self.x[0] <= 0.0 {
            return Err(LabError::invalid(
                "synthetic sweep needs >= 3 increasing positive x values",
            ));
        }
        if !(self.constant > 0.0 && self.exponent.is_finite()) {
            return Err(LabError::invalid(
                "synthetic sweep needs a positive constant and finite exponent",
            ));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SweepFile {
    pub kind: SweepKind,
    #[serde(default)]
    pub budget: Limits,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub mainexp: Option<SweepConfig>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub maincor: Option<MaincorConfig>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub synthetic: Option<SyntheticConfig>,
}

impl SweepFile {
    pub fn parse(text: &str) -> Result<Self> {
        let file: SweepFile =
            toml::from_str(text).map_err(|e| LabError::invalid(format!("config: {e}")))?;
        file.validate()?;
        Ok(file)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| {
            LabError::invalid(format!("cannot read config {}: {e}", path.display()))
        })?;
        Self::parse(&text)
    }

    pub fn validate(&self) -> Result<()> {
        let missing = || {
            LabError::invalid(format!(
                "config kind {:?} needs a matching section",
                self.kind
            ))
        };
        match self.kind {
            SweepKind::Mainexp => self.mainexp.as_ref().ok_or_else(missing)?.validate(),
            SweepKind::Maincor => self.maincor.as_ref().ok_or_else(missing)?.validate(),
            SweepKind::Synthetic => self.synthetic.as_ref().ok_or_else(missing)?.validate(),
        }
    }

    pub fn seeds(&self) -> Vec<u64> {
        match self.kind {
            SweepKind::Mainexp => self.mainexp.as_ref().map(|c| c.seeds.clone()),
            SweepKind::Maincor => self.maincor.as_ref().map(|c| c.seeds.clone()),
            SweepKind::Synthetic => None,
        }
        .unwrap_or_default()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::sharpness::CoeffFamily;

    #[test]
    fn parses_mainexp_with_defaults() {
        let f = SweepFile::parse(
            "kind = \"mainexp\"\n[mainexp]\nn_values = [32, 48, 64]\nsigma = 1.0\ns = 4\nfamily = \"constant\"\n",
        )
        .unwrap();
        let c = f.mainexp.unwrap();
        assert_eq!(c.family, CoeffFamily::Constant);
        assert_eq!(c.tolerance, DEFAULT_TOLERANCE);
        assert_eq!(f.budget, Limits::default());
    }

    #[test]
    fn rejects_bad_configs() {
        assert!(SweepFile::parse("kind = \"mainexp\"\n").is_err());
        assert!(SweepFile::parse("kind = \"nope\"\n").is_err());
        assert!(SweepFile::parse(
            "kind = \"synthetic\"\n[synthetic]\nx = [1.0, 2.0]\nexponent = 1.0\n"
        )
        .is_err());
        assert!(SweepFile::parse(
            "kind = \"synthetic\"\nbogus = 1\n[synthetic]\nx = [1.0, 2.0, 3.0]\nexponent = 1.0\n"
        )
        .is_err());
        let budget = SweepFile::parse(
            "kind = \"synthetic\"\n[budget]\ntuples = 10\n[synthetic]\nx = [1.0, 2.0, 3.0]\nexponent = 1.0\n",
        )
        .unwrap()
        .budget;
        assert_eq!(budget.tuples, 10);
        assert_eq!(budget.cell_ops, Limits::default().cell_ops);
    }
}
