//! Experiment configuration files (TOML).

use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::density::{DensitySpec, TrigTerm};
use crate::error::{Error, Result};
use crate::functional::{IntegralKind, SplitRule};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ExperimentKind {
    Selftest,
    Spectrum,
    DensityRate,
    EigenspaceRate,
    EigenvalueRate,
    Efficiency,
    PerturbationBound,
}

impl ExperimentKind {
    pub fn as_str(self) -> &'static str {
        match self {
            ExperimentKind::Selftest => "selftest",
            ExperimentKind::Spectrum => "spectrum",
            ExperimentKind::DensityRate => "density-rate",
            ExperimentKind::EigenspaceRate => "eigenspace-rate",
            ExperimentKind::EigenvalueRate => "eigenvalue-rate",
            ExperimentKind::Efficiency => "efficiency",
            ExperimentKind::PerturbationBound => "perturbation-bound",
        }
    }
}

fn one() -> usize {
    1
}
fn two() -> f64 {
    2.0
}
fn unit_alpha() -> f64 {
    1.0
}
fn default_floor() -> f64 {
    0.1
}
fn default_oversample() -> usize {
    4
}
fn default_q() -> Vec<f64> {
    vec![4.0]
}
fn default_tolerance() -> f64 {
    1e-10
}

/// Target cluster and Galerkin discretization.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SpectralSection {
    pub target: usize,
    pub gap: f64,
    pub cutoff: usize,
    #[serde(default = "default_oversample")]
    pub oversample: usize,
    /// Exponents of the reported angles besides q = 2; `inf` is allowed.
    #[serde(default = "default_q")]
    pub q: Vec<f64>,
    #[serde(default)]
    pub angle_grid: Option<usize>,
    #[serde(default)]
    pub correction_cutoff: Option<usize>,
    /// Relative tolerance for grouping tied eigenvalues in the spectrum export.
    #[serde(default = "default_tolerance")]
    pub tie_tolerance: f64,
}

/// Constants `c` of `D = ⌈c n^e⌉`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BandwidthSection {
    pub density: f64,
    #[serde(default = "two")]
    pub quadratic: f64,
}

impl Default for BandwidthSection {
    fn default() -> Self {
        Self {
            density: 2.0,
            quadratic: 2.0,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum EstimatorKind {
    /// Full sample-split pipeline.
    #[default]
    Debiased,
    /// Order-2 U-statistic of `∫ π_Dδ_x π_Dδ_y w`.
    Quadratic,
    /// Multiscale order-3 U-statistic of `∫ uvw`.
    Cubic,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FunctionalName {
    Eigenvalue,
    Square,
    Cube,
    Entropy,
}

impl FunctionalName {
    pub fn integral(self) -> Option<IntegralKind> {
        match self {
            FunctionalName::Eigenvalue => None,
            FunctionalName::Square => Some(IntegralKind::Square),
            FunctionalName::Cube => Some(IntegralKind::Cube),
            FunctionalName::Entropy => Some(IntegralKind::Entropy),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FunctionalSection {
    pub functional: FunctionalName,
    #[serde(default)]
    pub estimator: EstimatorKind,
    #[serde(default)]
    pub split: SplitRule,
    #[serde(default)]
    pub cross_fit: bool,
}

/// Subset of the invariant suite; empty means all checks.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, Default)]
pub struct SelftestSection {
    #[serde(default)]
    pub checks: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PerturbationSection {
    pub epsilons: Vec<f64>,
    /// Smooth direction `w` in `h_ε ∝ f(1 + εw)`.
    pub direction: Vec<TrigTerm>,
}

/// Pass/fail thresholds reported alongside the results.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize, Default)]
pub struct ExpectSection {
    #[serde(default)]
    pub slope: Option<f64>,
    #[serde(default)]
    pub slope_tolerance: Option<f64>,
    /// Minimal rank-recovery fraction at `n ≥ rank_min_n`.
    #[serde(default)]
    pub rank_recovery: Option<f64>,
    #[serde(default)]
    pub rank_min_n: Option<usize>,
    /// Target value of an efficiency run.
    #[serde(default)]
    pub target: Option<f64>,
    /// Efficient variance `Var ψ(X)` of an efficiency run.
    #[serde(default)]
    pub efficient_variance: Option<f64>,
    #[serde(default)]
    pub variance_tolerance: Option<f64>,
    #[serde(default)]
    pub ratio_spread: Option<f64>,
    #[serde(default)]
    pub linear_tolerance: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExperimentConfig {
    pub kind: ExperimentKind,
    pub name: String,
    pub seed: u64,
    #[serde(default = "one")]
    pub replications: usize,
    #[serde(default)]
    pub n_grid: Vec<usize>,
    #[serde(default = "two")]
    pub smoothness: f64,
    #[serde(default = "unit_alpha")]
    pub alpha: f64,
    #[serde(default = "default_floor")]
    pub floor: f64,
    #[serde(default)]
    pub density: Option<DensitySpec>,
    #[serde(default)]
    pub selftest: Option<SelftestSection>,
    #[serde(default)]
    pub spectral: Option<SpectralSection>,
    #[serde(default)]
    pub bandwidth: BandwidthSection,
    #[serde(default)]
    pub functional: Option<FunctionalSection>,
    #[serde(default)]
    pub perturbation: Option<PerturbationSection>,
    #[serde(default)]
    pub expect: ExpectSection,
}

impl ExperimentConfig {
    pub fn from_toml(text: &str) -> Result<Self> {
        let cfg: Self = toml::from_str(text).map_err(|e| Error::Parse(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::Io(format!("{}: {e}", path.display())))?;
        Self::from_toml(&text)
    }

    /// The `[density]` section; validated configs of every kind but selftest carry one.
    pub fn density_spec(&self) -> Result<&DensitySpec> {
        self.density
            .as_ref()
            .ok_or_else(|| Error::Config(format!("{} needs a [density] section", self.kind.as_str())))
    }

    pub fn to_toml(&self) -> Result<String> {
        toml::to_string(self).map_err(|e| Error::Parse(e.to_string()))
    }

    pub fn validate(&self) -> Result<()> {
        if self.replications == 0 {
            return Err(Error::Config("replications must be at least 1".into()));
        }
        if self.n_grid.windows(2).any(|w| w[0] >= w[1]) {
            return Err(Error::Config(format!("n grid {:?} must be strictly increasing", self.n_grid)));
        }
        if self.name.is_empty() || self.name.contains(['/', '\\']) {
            return Err(Error::Config(format!("experiment name {:?} is not a plain file stem", self.name)));
        }
        if self.kind != ExperimentKind::Selftest && self.density.is_none() {
            return Err(Error::Config(format!("{} needs a [density] section", self.kind.as_str())));
        }
        let needs_grid = matches!(
            self.kind,
            ExperimentKind::DensityRate | ExperimentKind::EigenspaceRate | ExperimentKind::EigenvalueRate | ExperimentKind::Efficiency
        );
        if needs_grid && self.n_grid.is_empty() {
            return Err(Error::Config(format!("{} needs a non-empty n grid", self.kind.as_str())));
        }
        let needs_spectral = matches!(
            self.kind,
            ExperimentKind::Spectrum | ExperimentKind::EigenspaceRate | ExperimentKind::EigenvalueRate | ExperimentKind::PerturbationBound
        );
        if needs_spectral && self.spectral.is_none() {
            return Err(Error::Config(format!("{} needs a [spectral] section", self.kind.as_str())));
        }
        if matches!(self.kind, ExperimentKind::EigenvalueRate | ExperimentKind::Efficiency) && self.functional.is_none() {
            return Err(Error::Config(format!("{} needs a [functional] section", self.kind.as_str())));
        }
        if self.kind == ExperimentKind::PerturbationBound && self.perturbation.as_ref().is_none_or(|p| p.epsilons.is_empty()) {
            return Err(Error::Config("perturbation-bound needs a non-empty epsilon list".into()));
        }
        if let Some(s) = &self.spectral {
            if s.q.iter().any(|q| !(*q >= 2.0)) {
                return Err(Error::Config(format!("angle exponents {:?} must lie in [2, ∞]", s.q)));
            }
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    const SAMPLE: &str = r#"
kind = "eigenspace-rate"
name = "demo"
seed = 3
replications = 4
n_grid = [256, 512]

[density]
side_lengths = [1.0]
kind = "trig"
terms = [{ k = [1], cos = 0.5, sin = 0.0 }]

[spectral]
target = 1
gap = 30.0
cutoff = 8
q = [4.0, inf]
"#;

    #[test]
    fn round_trip() {
        let cfg = ExperimentConfig::from_toml(SAMPLE).unwrap();
        assert_eq!(cfg.kind, ExperimentKind::EigenspaceRate);
        assert!(cfg.spectral.as_ref().unwrap().q[1].is_infinite());
        let back = ExperimentConfig::from_toml(&cfg.to_toml().unwrap()).unwrap();
        assert_eq!(cfg, back);
    }

    #[test]
    fn rejects_bad_grids() {
        let bad = SAMPLE.replace("[256, 512]", "[512, 256]");
        assert!(matches!(ExperimentConfig::from_toml(&bad), Err(Error::Config(_))));
        let zero = SAMPLE.replace("replications = 4", "replications = 0");
        assert!(ExperimentConfig::from_toml(&zero).is_err());
        assert!(matches!(ExperimentConfig::from_toml("kind = 1"), Err(Error::Parse(_))));
    }
}
