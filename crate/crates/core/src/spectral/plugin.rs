//! Plug-in eigenspace estimator and its risk against a known truth.

use std::sync::Arc;

use nalgebra::DVector;
use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use super::angle::{angle_dq, AngleReport};
use super::{select_contour, spectral_projector};
use crate::density::{bandwidth, estimate_density, BandwidthRule, DensityEstimate, DensityModel, SampleSet};
use crate::error::Result;
use crate::laplacian::{solve_spectrum, CMatrix, Contour, EigenSystem, ProjectorRep, SpectralPencil, DEFAULT_OVERSAMPLE};
use crate::torus::{FrequencySet, ProjectionFamily};

pub const RISK_CSV_HEADER: &str = "n,replication,rank_true,rank_est,D2,Dq,q,emp_l2_loss,seed";

fn default_oversample() -> usize {
    DEFAULT_OVERSAMPLE
}

fn default_q() -> f64 {
    4.0
}

fn default_floor() -> f64 {
    0.1
}

/// Knobs of the plug-in pipeline.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EigenspaceSettings {
    /// Galerkin cutoff `K` of the pencil.
    pub cutoff: usize,
    pub alpha: f64,
    #[serde(default = "default_oversample")]
    pub oversample: usize,
    /// Smoothness `s` fed to the bandwidth rule.
    pub smoothness: f64,
    /// Constant `c` in `D = ⌈c n^e⌉`.
    pub bandwidth_constant: f64,
    #[serde(default = "default_floor")]
    pub floor: f64,
    /// Exponent of the second reported angle.
    #[serde(default = "default_q")]
    pub q: f64,
    #[serde(default)]
    pub angle_grid: Option<usize>,
}

/// Everything the experiments need to know about the true density.
#[derive(Debug, Clone)]
pub struct SpectralTruth {
    pub density: DensityModel,
    pub eig: EigenSystem,
    pub contour: Contour,
    pub projector: ProjectorRep,
}

impl SpectralTruth {
    pub fn new(density: DensityModel, settings: &EigenspaceSettings, target: usize, gap: f64) -> Result<Self> {
        let pencil = Arc::new(SpectralPencil::from_field(
            density.field(),
            settings.alpha,
            settings.cutoff,
            settings.oversample,
        )?);
        let eig = solve_spectrum(&pencil)?;
        let contour = select_contour(&eig, target, gap)?;
        let projector = spectral_projector(&eig, &contour)?;
        Ok(Self {
            density,
            eig,
            contour,
            projector,
        })
    }
}

#[derive(Debug, Clone)]
pub struct EigenspaceRisk {
    pub rank_true: usize,
    pub rank_est: usize,
    pub rank_mismatch: bool,
    pub d2: AngleReport,
    pub dq: AngleReport,
    pub emp_l2_loss: f64,
}

impl EigenspaceRisk {
    /// One row of the risk table (see [`RISK_CSV_HEADER`]).
    pub fn csv_row(&self, n: usize, replication: usize, seed: u64) -> String {
        format!(
            "{n},{replication},{},{},{:.12e},{:.12e},{},{:.12e},{seed}",
            self.rank_true,
            self.rank_est,
            self.d2.value,
            self.dq.value,
            if self.dq.q.is_infinite() { "inf".to_string() } else { self.dq.q.to_string() },
            self.emp_l2_loss
        )
    }
}

#[derive(Debug, Clone)]
pub struct PluginOutcome {
    pub level: f64,
    pub estimate: DensityEstimate,
    pub eig: EigenSystem,
    pub contour: Contour,
    pub projector: ProjectorRep,
    pub risk: Option<EigenspaceRisk>,
}

/// Estimate `f̂`, assemble its pencil, select the contour around `λ̂_target`, project.
pub fn plugin_eigenspace(
    samples: &SampleSet,
    target: usize,
    gap: f64,
    settings: &EigenspaceSettings,
    truth: Option<&SpectralTruth>,
) -> Result<PluginOutcome> {
    let d = samples.geometry().dim();
    let level = bandwidth(samples.len(), settings.smoothness, d, BandwidthRule::Density, settings.bandwidth_constant)? as f64;
    let family = ProjectionFamily::default();
    let constants = truth.map(|t| t.density.constants()).unwrap_or_default();
    let estimate = estimate_density(samples, &family, level, settings.floor, constants)?;
    let pencil = Arc::new(SpectralPencil::from_field(
        estimate.model.field(),
        settings.alpha,
        settings.cutoff,
        settings.oversample,
    )?);
    let eig = solve_spectrum(&pencil)?;
    let contour = select_contour(&eig, target, gap)?;
    let projector = spectral_projector(&eig, &contour)?;
    let risk = match truth {
        None => None,
        Some(t) => {
            let d2 = angle_dq(&projector, &t.projector, 2.0, settings.angle_grid)?;
            let dq = angle_dq(&projector, &t.projector, settings.q, settings.angle_grid)?;
            let loss = procrustes_loss(projector.primal(), t.projector.primal(), t.eig.pencil().mass(), pencil.freqs(), samples);
            Some(EigenspaceRisk {
                rank_true: t.projector.rank(),
                rank_est: projector.rank(),
                rank_mismatch: t.projector.rank() != projector.rank(),
                d2,
                dq,
                emp_l2_loss: loss,
            })
        }
    };
    Ok(PluginOutcome {
        level,
        estimate,
        eig,
        contour,
        projector,
        risk,
    })
}

/// `Σ_k a_k e^{iω_k·x}` for each column of `coords`.
pub fn evaluate_coords(freqs: &FrequencySet, coords: &CMatrix, x: &[f64]) -> DVector<Complex64> {
    let waves = DVector::from_iterator(
        freqs.len(),
        (0..freqs.len()).map(|k| {
            let phase: f64 = freqs.omega(k).iter().zip(x).map(|(w, xi)| w * xi).sum();
            Complex64::from_polar(1.0, phase)
        }),
    );
    coords.transpose() * waves
}

/// Empirical L² loss `(1/n) Σ_i Σ_j |(Ĝ U)_j(X_i) − G_j(X_i)|²` after
/// Procrustes alignment `U = W Vᴴ` of `Ĝᴴ M G = W Σ Vᴴ`.
pub fn procrustes_loss(est: &CMatrix, truth: &CMatrix, mass: &CMatrix, freqs: &FrequencySet, samples: &SampleSet) -> f64 {
    let c = est.adjoint() * mass * truth;
    let svd = c.svd(true, true);
    let u = svd.u.expect("left factors") * svd.v_t.expect("right factors");
    let aligned = est * u;
    let diff = aligned - truth;
    let n = samples.len().max(1) as f64;
    samples
        .iter()
        .map(|x| evaluate_coords(freqs, &diff, x).norm_squared())
        .sum::<f64>()
        / n
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::density::{make_density, sample, DensityShape, DensitySpec};
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn settings() -> EigenspaceSettings {
        EigenspaceSettings {
            cutoff: 8,
            alpha: 1.0,
            oversample: 4,
            smoothness: 2.0,
            bandwidth_constant: 12.0,
            floor: 0.1,
            q: 4.0,
            angle_grid: None,
        }
    }

    #[test]
    fn truth_fed_back_has_zero_risk() {
        let f = make_density(&DensitySpec::cosine_1d(1, 0.3)).unwrap();
        let truth = SpectralTruth::new(f, &settings(), 1, 10.0).unwrap();
        let s = sample(&truth.density, 200, 3).unwrap();
        let r = angle_dq(&truth.projector, &truth.projector, 4.0, None).unwrap();
        assert!(r.value < 1e-12);
        let loss = procrustes_loss(
            truth.projector.primal(),
            truth.projector.primal(),
            truth.eig.pencil().mass(),
            truth.eig.pencil().freqs(),
            &s,
        );
        assert!(loss < 1e-20);
    }

    #[test]
    fn plugin_runs_with_truth() {
        let f = make_density(&DensitySpec::unit_1d(DensityShape::Uniform)).unwrap();
        let truth = SpectralTruth::new(f, &settings(), 1, 10.0).unwrap();
        let s = sample(&truth.density, 2048, 5).unwrap();
        let out = plugin_eigenspace(&s, 1, 10.0, &settings(), Some(&truth)).unwrap();
        let risk = out.risk.unwrap();
        assert_eq!((risk.rank_true, risk.rank_est), (2, 2));
        assert!(risk.d2.value > 0.0 && risk.d2.value < 0.5);
        assert!(risk.d2.value <= risk.dq.value + 1e-12);
        assert!(risk.emp_l2_loss.is_finite());
    }

    #[test]
    fn loss_invariant_under_cluster_remixing() {
        let f = make_density(&DensitySpec::unit_1d(DensityShape::Uniform)).unwrap();
        let truth = SpectralTruth::new(f, &settings(), 1, 10.0).unwrap();
        let s = sample(&truth.density, 1024, 8).unwrap();
        let out = plugin_eigenspace(&s, 1, 10.0, &settings(), Some(&truth)).unwrap();
        let mass = truth.eig.pencil().mass();
        let freqs = truth.eig.pencil().freqs();
        let base = procrustes_loss(out.projector.primal(), truth.projector.primal(), mass, freqs, &s);
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let mut unitary = || {
            let a = CMatrix::from_fn(2, 2, |_, _| Complex64::new(rng.random::<f64>() - 0.5, rng.random::<f64>() - 0.5));
            a.qr().q()
        };
        let est = out.projector.primal() * unitary();
        let tru = truth.projector.primal() * unitary();
        let mixed = procrustes_loss(&est, &tru, mass, freqs, &s);
        assert!((base - mixed).abs() <= 1e-9 * base.max(1e-12));
    }
}
