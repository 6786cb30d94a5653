//! Sample-split debiased estimation of `μ` and of integral functionals.

use std::sync::Arc;

use serde::{Deserialize, Serialize};

use super::derivatives::{mu_first_derivative, mu_second_form, InfluenceField};
use super::integral::{derivative_kernel, influence_moments, integral_functional, integral_influence, IntegralKind};
use super::ustat::{estimate_cubic_form, estimate_quadratic_form, tree_sum, Form};
use crate::density::{bandwidth, estimate_density, BandwidthRule, ModelConstants, SampleSet};
use crate::error::{Error, Result};
use crate::laplacian::{solve_spectrum, EigenSystem, SpectralPencil, DEFAULT_OVERSAMPLE};
use crate::spectral::{cluster_mean, cluster_of, select_contour};
use crate::torus::{FourierField, ProjectionFamily};

/// Which functional is estimated.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum FunctionalSpec {
    Integral {
        functional: IntegralKind,
    },
    /// Cluster mean of `λ_target` under a gap `δ`, on a pencil of cutoff `cutoff`.
    Eigenvalue {
        target: usize,
        gap: f64,
        cutoff: usize,
        #[serde(default)]
        correction_cutoff: Option<usize>,
    },
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize, Default)]
#[serde(tag = "rule", rename_all = "snake_case")]
pub enum SplitRule {
    /// `n₂ = ⌊n/2⌋`.
    #[default]
    Half,
    /// `n₂ = ⌊n^e⌋`.
    Power { exponent: f64 },
}

impl SplitRule {
    /// `(n₁, n₂)`.
    pub fn sizes(self, n: usize) -> Result<(usize, usize)> {
        let n2 = match self {
            SplitRule::Half => n / 2,
            SplitRule::Power { exponent } => {
                if !(exponent > 0.0 && exponent < 1.0) {
                    return Err(Error::Config(format!("split exponent {exponent} must lie in (0, 1)")));
                }
                (n as f64).powf(exponent).floor() as usize
            }
        };
        if n2 < 4 || n < n2 + 4 {
            return Err(Error::InsufficientSamples { needed: 8, got: n });
        }
        Ok((n - n2, n2))
    }
}

fn default_alpha() -> f64 {
    1.0
}
fn default_floor() -> f64 {
    0.1
}
fn default_oversample() -> usize {
    DEFAULT_OVERSAMPLE
}
fn default_fallback_band() -> usize {
    16
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DebiasConfig {
    pub smoothness: f64,
    #[serde(default = "default_alpha")]
    pub alpha: f64,
    /// Constant of the pilot bandwidth `D = ⌈c n₂^{1/(2s+d)}⌉`.
    pub density_constant: f64,
    /// Constant of the correction bandwidths.
    pub quadratic_constant: f64,
    #[serde(default = "default_floor")]
    pub floor: f64,
    #[serde(default)]
    pub split: SplitRule,
    /// Average the two role assignments of the split, weighted by fold size.
    #[serde(default)]
    pub cross_fit: bool,
    #[serde(default = "default_oversample")]
    pub oversample: usize,
    /// Truncation band of non-polynomial derivative kernels.
    #[serde(default = "default_fallback_band")]
    pub fallback_band: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EstimateReport {
    pub estimate: f64,
    pub plugin: f64,
    pub corr1: f64,
    pub corr2: f64,
    pub corr3: Option<f64>,
    pub n1: usize,
    pub n2: usize,
    #[serde(rename = "D_density")]
    pub d_density: f64,
    #[serde(rename = "D_quadratic")]
    pub d_quadratic: f64,
    pub seed: u64,
    pub flags: Vec<String>,
    /// Sample variance of `ψ_{f̂}` over the correction fold divided by its size.
    #[serde(skip)]
    pub variance_proxy: f64,
}

impl EstimateReport {
    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("report serializes")
    }

    /// Distance between the estimate and the sum of its components.
    pub fn component_defect(&self) -> f64 {
        (self.estimate - (self.plugin + self.corr1 + self.corr2 + self.corr3.unwrap_or(0.0))).abs()
    }

    fn flag(&mut self, name: &str) {
        if !self.flags.iter().any(|f| f == name) {
            self.flags.push(name.to_string());
        }
    }
}

pub const FLAG_RANK: &str = "rank_instability";
pub const FLAG_FD: &str = "fd_inconsistent";
pub const FLAG_ORDER3: &str = "order3_unavailable";
pub const FLAG_CLIP: &str = "pilot_clipped";

/// `Var_f(ψ(X)) = ∫ψ²f − (∫ψf)²`.
pub fn efficiency_variance(influence: &FourierField, density: &FourierField) -> Result<f64> {
    Ok(influence_moments(influence, density)?.1)
}

/// `Var_f(ψ_f(X))` for the cluster-mean influence field at its own density.
pub fn influence_variance(influence: &InfluenceField) -> Result<f64> {
    efficiency_variance(&influence.field, &influence.density)
}

/// `T̂ = T(f̂) + Â₁ + Â₂ (+ Â₃)` with `f̂` built from the last `n₂` points.
pub fn debiased_estimate(functional: &FunctionalSpec, samples: &SampleSet, config: &DebiasConfig) -> Result<EstimateReport> {
    let n = samples.len();
    if n < 8 {
        return Err(Error::InsufficientSamples { needed: 8, got: n });
    }
    if !(config.smoothness > 0.0) {
        return Err(Error::Config(format!("smoothness s = {} must be positive", config.smoothness)));
    }
    let (n1, n2) = config.split.sizes(n)?;
    let (first, second) = samples.split_at(n1);
    let mut report = one_fold(functional, &first, &second, config)?;
    if config.cross_fit {
        let (front, back) = samples.split_at(n2);
        let swapped = one_fold(functional, &back, &front, config)?;
        let (w1, w2) = (n1 as f64 / n as f64, n2 as f64 / n as f64);
        let mix = |a: f64, b: f64| w1 * a + w2 * b;
        report.plugin = mix(report.plugin, swapped.plugin);
        report.corr1 = mix(report.corr1, swapped.corr1);
        report.corr2 = mix(report.corr2, swapped.corr2);
        report.corr3 = match (report.corr3, swapped.corr3) {
            (Some(a), Some(b)) => Some(mix(a, b)),
            _ => None,
        };
        report.variance_proxy = w1 * w1 * report.variance_proxy + w2 * w2 * swapped.variance_proxy;
        for f in swapped.flags {
            report.flag(&f);
        }
    }
    report.n1 = n1;
    report.n2 = n2;
    report.seed = samples.seed();
    report.estimate = report.plugin + report.corr1 + report.corr2 + report.corr3.unwrap_or(0.0);
    Ok(report)
}

/// Corrections computed on `corr`, pilot built from `pilot`.
fn one_fold(functional: &FunctionalSpec, corr: &SampleSet, pilot: &SampleSet, config: &DebiasConfig) -> Result<EstimateReport> {
    let d = corr.geometry().dim();
    let s = config.smoothness;
    let family = ProjectionFamily::default();
    let d_density = bandwidth(pilot.len(), s, d, BandwidthRule::Density, config.density_constant)? as f64;
    let d_quadratic = bandwidth(corr.len(), s, d, BandwidthRule::Quadratic, config.quadratic_constant)? as f64;
    let constants = ModelConstants {
        alpha: config.alpha,
        ..ModelConstants::default()
    };
    let pilot_est = estimate_density(pilot, &family, d_density, config.floor, constants)?;
    let fhat = pilot_est.model.field().clone();
    let mut report = EstimateReport {
        estimate: 0.0,
        plugin: 0.0,
        corr1: 0.0,
        corr2: 0.0,
        corr3: None,
        n1: corr.len(),
        n2: pilot.len(),
        d_density,
        d_quadratic,
        seed: corr.seed(),
        flags: Vec::new(),
        variance_proxy: 0.0,
    };
    if pilot_est.clipped {
        report.flag(FLAG_CLIP);
    }
    let order3 = s <= d as f64 / 4.0;
    match functional {
        FunctionalSpec::Integral { functional: kind } => {
            report.plugin = integral_functional(*kind, &fhat)?;
            let psi = integral_influence(*kind, &fhat, config.fallback_band)?;
            first_order(&mut report, &psi, &fhat, corr)?;
            let w2 = derivative_kernel(*kind, 2, &fhat, config.fallback_band)?;
            report.corr2 = estimate_quadratic_form(Form::Product { order: 2, weight: w2 }, corr, d_quadratic, family, Some(&fhat))?;
            if order3 {
                let levels = [BandwidthRule::Cubic1, BandwidthRule::Cubic2, BandwidthRule::Cubic3]
                    .map(|r| bandwidth(corr.len(), s, d, r, config.quadratic_constant).map(|v| v as f64));
                let levels = [levels[0].clone()?, levels[1].clone()?, levels[2].clone()?];
                let w3 = derivative_kernel(*kind, 3, &fhat, config.fallback_band)?;
                report.corr3 = Some(estimate_cubic_form(Form::Product { order: 3, weight: w3 }, corr, levels, family, Some(&fhat))?);
            }
        }
        FunctionalSpec::Eigenvalue {
            target,
            gap,
            cutoff,
            correction_cutoff,
        } => {
            if order3 {
                report.flag(FLAG_ORDER3);
            }
            let pencil = Arc::new(SpectralPencil::from_field(&fhat, config.alpha, *cutoff, config.oversample)?);
            let eig = solve_spectrum(&pencil)?;
            let contour = match select_contour(&eig, *target, *gap) {
                Ok(c) => c,
                Err(Error::GapViolation(_)) | Err(Error::IllPosedContour { .. }) => {
                    report.flag(FLAG_RANK);
                    report.plugin = fallback_mean(&eig, *target, *gap)?;
                    return Ok(report);
                }
                Err(e) => return Err(e),
            };
            report.plugin = cluster_mean(&eig, &contour)?;
            let psi = match mu_first_derivative(&eig, &contour) {
                Ok(p) => p,
                Err(Error::Instability(_)) => {
                    report.flag(FLAG_RANK);
                    return Ok(report);
                }
                Err(e) => return Err(e),
            };
            if psi.fd.is_some_and(|c| !c.consistent) {
                report.flag(FLAG_FD);
            }
            first_order(&mut report, &psi.field, &fhat, corr)?;
            let q = mu_second_form(&eig, &contour, correction_cutoff.unwrap_or(*cutoff))?;
            let form = Form::Matrix {
                lattice: Arc::clone(&q.lattice),
                matrix: q.matrix.clone(),
            };
            report.corr2 = estimate_quadratic_form(form, corr, d_quadratic, family, Some(&fhat))?;
        }
    }
    report.estimate = report.plugin + report.corr1 + report.corr2 + report.corr3.unwrap_or(0.0);
    Ok(report)
}

fn fallback_mean(eig: &EigenSystem, target: usize, gap: f64) -> Result<f64> {
    let r = cluster_of(eig, target, gap)?;
    Ok(eig.values()[r.clone()].iter().sum::<f64>() / r.len() as f64)
}

/// `Â₁ = mean ψ(X_i) − ∫ψ f̂`, with the variance proxy.
fn first_order(report: &mut EstimateReport, psi: &FourierField, fhat: &FourierField, corr: &SampleSet) -> Result<()> {
    let (center, _) = influence_moments(psi, fhat)?;
    let vals: Vec<f64> = corr.iter().map(|x| psi.evaluate_real(x)).collect();
    let m = vals.len() as f64;
    let mean = tree_sum(&vals) / m;
    let var = tree_sum(&vals.iter().map(|v| (v - mean) * (v - mean)).collect::<Vec<_>>()) / (m - 1.0).max(1.0);
    report.corr1 = mean - center;
    report.variance_proxy = var / m;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::density::{make_density, sample, DensityShape, DensitySpec};

    fn config() -> DebiasConfig {
        DebiasConfig {
            smoothness: 2.0,
            alpha: 1.0,
            density_constant: 12.0,
            quadratic_constant: 8.0,
            floor: 0.1,
            split: SplitRule::Half,
            cross_fit: false,
            oversample: 4,
            fallback_band: 16,
        }
    }

    #[test]
    fn split_sizes() {
        assert_eq!(SplitRule::Half.sizes(100).unwrap(), (50, 50));
        assert_eq!(SplitRule::Power { exponent: 0.9 }.sizes(4096).unwrap(), (4096 - 1782, 1782));
        assert!(SplitRule::Half.sizes(6).is_err());
    }

    #[test]
    fn small_sample_report_is_structural() {
        let f = make_density(&DensitySpec::cosine_1d(1, 0.5)).unwrap();
        let s = sample(&f, 8, 11).unwrap();
        let r = debiased_estimate(&FunctionalSpec::Integral { functional: IntegralKind::Square }, &s, &config()).unwrap();
        assert!(r.estimate.is_finite() && r.plugin.is_finite() && r.corr1.is_finite() && r.corr2.is_finite());
        assert!(r.component_defect() < 1e-12);
        assert_eq!((r.n1, r.n2, r.seed), (4, 4, 11));
        let json: serde_json::Value = serde_json::from_str(&r.to_json()).unwrap();
        let mut keys: Vec<&str> = json.as_object().unwrap().keys().map(|k| k.as_str()).collect();
        keys.sort();
        assert_eq!(
            keys,
            ["D_density", "D_quadratic", "corr1", "corr2", "corr3", "estimate", "flags", "n1", "n2", "plugin", "seed"]
        );
    }

    #[test]
    fn eigenvalue_pipeline_runs_at_uniform() {
        let f = make_density(&DensitySpec::unit_1d(DensityShape::Uniform)).unwrap();
        let s = sample(&f, 1024, 3).unwrap();
        let spec = FunctionalSpec::Eigenvalue {
            target: 1,
            gap: 10.0,
            cutoff: 8,
            correction_cutoff: None,
        };
        let r = debiased_estimate(&spec, &s, &config()).unwrap();
        let truth = 4.0 * std::f64::consts::PI.powi(2);
        assert!((r.estimate - truth).abs() < 0.1 * truth, "{r:?}");
        assert!(r.component_defect() < 1e-9);
    }

    #[test]
    fn square_efficiency_variance() {
        let f = make_density(&DensitySpec::cosine_1d(1, 0.5)).unwrap();
        let psi = integral_influence(IntegralKind::Square, f.field(), 8).unwrap();
        assert!((efficiency_variance(&psi, f.field()).unwrap() - 0.4375).abs() < 1e-12);
        let c = FourierField::constant(Arc::clone(f.freqs()), 3.0);
        assert!(efficiency_variance(&c, f.field()).unwrap() < 1e-14);
    }
}
