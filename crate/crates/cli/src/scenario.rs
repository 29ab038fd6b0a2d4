//! Scenario files: a design plus one analysis block.

use std::path::{Path, PathBuf};

use mixendpoint::endpoint::{DesignConfig, LatentDesign};
use mixendpoint::error::{Error, Result};
use mixendpoint::sample_size::EndpointType;
use serde::Deserialize;

#[derive(Debug, Clone, Deserialize)]
#[serde(untagged)]
pub enum DesignSource {
    /// Path to a design file, relative to the scenario file.
    File(String),
    Inline(Box<DesignConfig>),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Sidedness {
    #[default]
    OneSided,
    TwoSided,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Analysis {
    #[serde(default = "default_endpoints")]
    pub endpoint_types: Vec<EndpointType>,
    #[serde(default = "default_alpha")]
    pub alpha: f64,
    #[serde(default)]
    pub sidedness: Sidedness,
    pub target_power: Option<f64>,
    pub n: Option<u64>,
    pub n_grid: Option<Vec<u64>>,
    pub replications: Option<usize>,
    pub seed: Option<u64>,
    /// Per-arm variance scale of the composite risk difference.
    pub sigma_sq: Option<f64>,
    /// Composite risk difference; taken from the design when absent.
    pub delta_star: Option<f64>,
    /// Pilot size for estimating `sigma_sq` by simulation when it is absent.
    pub pilot_n: Option<usize>,
    /// `[p_T, p_C]` for the standard binary comparator.
    pub proportions: Option<[f64; 2]>,
    /// Dataset for `fit`, relative to the scenario file.
    pub dataset: Option<String>,
    pub accuracy: Option<f64>,
}

fn default_endpoints() -> Vec<EndpointType> {
    vec![EndpointType::Coprimary, EndpointType::Multiprimary]
}

fn default_alpha() -> f64 {
    0.025
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
struct ScenarioFile {
    design: DesignSource,
    analysis: Analysis,
}

/// What an analysis asks for at the sample-size level.
#[derive(Debug, Clone, PartialEq)]
pub enum Target {
    N(u64),
    Grid(Vec<u64>),
    Power(f64),
}

#[derive(Debug, Clone)]
pub struct Scenario {
    pub design: LatentDesign,
    pub config: DesignConfig,
    pub analysis: Analysis,
    pub target: Target,
    pub base: PathBuf,
}

impl Scenario {
    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| Error::Config(format!("cannot read scenario {}: {e}", path.display())))?;
        let base = path.parent().map(Path::to_path_buf).unwrap_or_default();
        Self::parse(&text, &base)
    }

    pub fn parse(text: &str, base: &Path) -> Result<Self> {
        let file: ScenarioFile = serde_json::from_str(text).map_err(|e| Error::Config(format!("scenario: {e}")))?;
        let config = match file.design {
            DesignSource::Inline(c) => *c,
            DesignSource::File(p) => DesignConfig::load(&base.join(p))?,
        };
        let design = config.build()?;
        design.ensure_valid()?;
        let a = file.analysis;
        let target = match (a.n, &a.n_grid, a.target_power) {
            (Some(n), None, None) => Target::N(n),
            (None, Some(g), None) => {
                if g.is_empty() {
                    return Err(Error::Config("n_grid is empty".into()));
                }
                Target::Grid(g.clone())
            }
            (None, None, Some(p)) => Target::Power(p),
            _ => return Err(Error::Config("analysis needs exactly one of n, n_grid, target_power".into())),
        };
        if a.endpoint_types.is_empty() {
            return Err(Error::Config("analysis lists no endpoint types".into()));
        }
        if !(a.alpha > 0.0 && a.alpha < 1.0) {
            return Err(Error::Config(format!("alpha must lie in (0, 1), got {}", a.alpha)));
        }
        Ok(Scenario { design, config, analysis: a, target, base: base.to_path_buf() })
    }

    /// One-sided level after applying the stated sidedness.
    pub fn one_sided_alpha(&self, alpha: Option<f64>, two_sided: bool) -> f64 {
        let a = alpha.unwrap_or(self.analysis.alpha);
        if two_sided || self.analysis.sidedness == Sidedness::TwoSided {
            a / 2.0
        } else {
            a
        }
    }

    pub fn sizes(&self) -> Result<Vec<u64>> {
        match &self.target {
            Target::N(n) => Ok(vec![*n]),
            Target::Grid(g) => Ok(g.clone()),
            Target::Power(_) => Err(Error::Config("analysis gives a target power, not a sample size".into())),
        }
    }

    pub fn single_n(&self) -> Result<u64> {
        match &self.target {
            Target::N(n) => Ok(*n),
            _ => Err(Error::Config("analysis needs a single n".into())),
        }
    }

    pub fn target_power(&self) -> Result<f64> {
        match self.target {
            Target::Power(p) => Ok(p),
            _ => Err(Error::Config("analysis gives no target_power".into())),
        }
    }

    pub fn resolve(&self, rel: &str) -> PathBuf {
        self.base.join(rel)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    const DESIGN: &str = r#"{ "outcomes": [
        { "name": "a", "kind": "continuous", "sd": 1.0, "mean_treatment": 0.5, "mean_control": 0.0 },
        { "name": "b", "kind": "binary", "mean_treatment": 0.3, "mean_control": 0.0 } ],
        "correlations": [0.2] }"#;

    fn scenario(analysis: &str) -> Result<Scenario> {
        Scenario::parse(&format!(r#"{{ "design": {DESIGN}, "analysis": {analysis} }}"#), Path::new("."))
    }

    #[test]
    fn exactly_one_target() {
        assert!(matches!(scenario(r#"{ "n": 10 }"#).unwrap().target, Target::N(10)));
        assert!(scenario(r#"{ "n": 10, "target_power": 0.8 }"#).is_err());
        assert!(scenario(r#"{ }"#).is_err());
        assert!(scenario(r#"{ "n_grid": [] }"#).is_err());
    }

    #[test]
    fn two_sided_halves_alpha() {
        let s = scenario(r#"{ "n": 10, "alpha": 0.05, "sidedness": "two-sided" }"#).unwrap();
        assert_eq!(s.one_sided_alpha(None, false), 0.025);
        assert_eq!(s.one_sided_alpha(Some(0.1), false), 0.05);
    }

    #[test]
    fn unknown_fields_rejected() {
        assert!(scenario(r#"{ "n": 10, "nn": 3 }"#).is_err());
    }
}
