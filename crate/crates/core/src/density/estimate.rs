//! Projection density estimator `π_D μ_n` with clip-and-renormalize, and bandwidth rules.

use std::sync::Arc;

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use super::model::{DensityModel, ModelConstants, CHECK_OVERSAMPLE};
use super::sampling::SampleSet;
use crate::error::{Error, Result};
use crate::torus::{analyze_into, check_level, synthesize, FourierField, FrequencySet, ProjectionFamily};

/// Pre-clip coefficients `ψ(|ω_k|/D) · n⁻¹ Σ_i e^{-iω_k·X_i}` on `freqs`.
pub fn empirical_projection(samples: &SampleSet, family: &ProjectionFamily, freqs: &Arc<FrequencySet>, level: f64) -> Result<FourierField> {
    check_level(level)?;
    if samples.is_empty() {
        return Err(Error::InsufficientSamples { needed: 1, got: 0 });
    }
    let mult = family.multipliers(freqs, level);
    let n = samples.len() as f64;
    let mut coeffs = vec![Complex64::new(0.0, 0.0); freqs.len()];
    for x in samples.iter() {
        for (i, c) in coeffs.iter_mut().enumerate() {
            if mult[i] == 0.0 {
                continue;
            }
            let phase: f64 = freqs.omega(i).iter().zip(x).map(|(w, xi)| w * xi).sum();
            *c += Complex64::from_polar(1.0, -phase);
        }
    }
    for (c, m) in coeffs.iter_mut().zip(&mult) {
        *c *= m / n;
    }
    FourierField::from_coeffs(Arc::clone(freqs), coeffs, true)
}

/// Result of [`estimate_density`], with the pre-clip field kept for diagnostics.
#[derive(Debug, Clone)]
pub struct DensityEstimate {
    pub model: DensityModel,
    pub pre_clip: FourierField,
    pub clipped: bool,
}

/// `f̂ = max(π_D μ_n, δ) / mass`, evaluated on the synthesis grid.
///
/// The clipped function is re-analyzed on twice the band cutoff. The stored
/// model floor is `min(δ, min f̂)`; the clip level is only raised when Gibbs
/// undershoot drops the re-analyzed field below `δ/2`.
pub fn estimate_density(
    samples: &SampleSet,
    family: &ProjectionFamily,
    level: f64,
    floor: f64,
    constants: ModelConstants,
) -> Result<DensityEstimate> {
    check_level(level)?;
    if !(floor > 0.0) {
        return Err(Error::Config(format!("floor δ = {floor} must be positive")));
    }
    let geometry = samples.geometry();
    let band = family.band(geometry, level);
    let pre = empirical_projection(samples, family, &band, level)?;
    let points = (CHECK_OVERSAMPLE * (2 * band.cutoff() + 1)).max(16);
    let grid = synthesize(&pre, points)?;
    let pre_min = grid.values().iter().map(|v| v.re).fold(f64::INFINITY, f64::min);
    let constants = ModelConstants { floor, ..constants };
    if pre_min >= floor {
        let model = DensityModel::new(pre.clone(), constants)?;
        return Ok(DensityEstimate {
            model,
            pre_clip: pre,
            clipped: false,
        });
    }
    let wide = FrequencySet::new(geometry.clone(), 2 * band.cutoff().max(1));
    let wide_points = (CHECK_OVERSAMPLE * (2 * wide.cutoff() + 1)).max(16);
    let fine = synthesize(&pre.resample(Arc::clone(&wide))?, wide_points)?;
    let mut clip = floor;
    let mut last_min = f64::NEG_INFINITY;
    for _ in 0..8 {
        let clipped = fine.map(|v| Complex64::new(v.re.max(clip), 0.0));
        let mass = clipped.integrate().re;
        let field = analyze_into(&clipped, Arc::clone(&wide))?.scale(1.0 / mass);
        let check = synthesize(&field, wide_points)?;
        last_min = check.values().iter().map(|v| v.re).fold(f64::INFINITY, f64::min);
        if last_min >= 0.5 * floor {
            let model = DensityModel::new(field, ModelConstants { floor: floor.min(last_min) * (1.0 - 1e-9), ..constants })?;
            return Ok(DensityEstimate {
                model,
                pre_clip: pre,
                clipped: true,
            });
        }
        clip += floor - last_min;
    }
    Err(Error::ModelClass { min: last_min, floor })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BandwidthRule {
    Density,
    Quadratic,
    #[serde(rename = "cubic_1")]
    Cubic1,
    #[serde(rename = "cubic_2")]
    Cubic2,
    #[serde(rename = "cubic_3")]
    Cubic3,
}

impl BandwidthRule {
    pub fn exponent(self, s: f64, d: usize) -> f64 {
        let d = d as f64;
        match self {
            BandwidthRule::Density => 1.0 / (2.0 * s + d),
            BandwidthRule::Quadratic | BandwidthRule::Cubic3 => 2.0 / (4.0 * s + d),
            BandwidthRule::Cubic1 => 1.0 / (4.0 * s + d),
            BandwidthRule::Cubic2 => 1.5 / (4.0 * s + d),
        }
    }
}

impl std::str::FromStr for BandwidthRule {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "density" => Ok(Self::Density),
            "quadratic" => Ok(Self::Quadratic),
            "cubic_1" => Ok(Self::Cubic1),
            "cubic_2" => Ok(Self::Cubic2),
            "cubic_3" => Ok(Self::Cubic3),
            other => Err(Error::Config(format!("unknown bandwidth rule {other:?}"))),
        }
    }
}

/// `D = max(1, ⌈c n^e⌉)`; values within 1e-9 of an integer are not bumped up.
pub fn bandwidth(n: usize, s: f64, d: usize, rule: BandwidthRule, c: f64) -> Result<u32> {
    if n == 0 {
        return Err(Error::InsufficientSamples { needed: 1, got: 0 });
    }
    if !(s > 0.0) || !(c > 0.0) {
        return Err(Error::Config(format!("bandwidth needs s > 0 and c > 0 (s = {s}, c = {c})")));
    }
    let raw = c * (n as f64).powf(rule.exponent(s, d));
    Ok(((raw - 1e-9).ceil() as u32).max(1))
}
