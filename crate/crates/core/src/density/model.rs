use std::sync::Arc;

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::torus::{synthesize, FourierField, FrequencySet, GridField, TorusGeometry};

use super::bump::BumpLatticeSpec;

/// Oversampling factor of the positivity / envelope check grid.
pub const CHECK_OVERSAMPLE: usize = 8;

/// A positive, mass-one density in the model class, with the operator hyperparameter.
#[derive(Debug, Clone, PartialEq)]
pub struct DensityModel {
    field: FourierField,
    smoothness: f64,
    floor: f64,
    norm_bound: f64,
    alpha: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ModelConstants {
    pub smoothness: f64,
    pub floor: f64,
    pub norm_bound: f64,
    pub alpha: f64,
}

impl Default for ModelConstants {
    fn default() -> Self {
        Self {
            smoothness: 2.0,
            floor: 0.1,
            norm_bound: 100.0,
            alpha: 1.0,
        }
    }
}

impl DensityModel {
    /// Validate positivity on the check grid; the zero mode is forced to 1.
    pub fn new(field: FourierField, constants: ModelConstants) -> Result<Self> {
        let ModelConstants {
            smoothness,
            floor,
            norm_bound,
            alpha,
        } = constants;
        if !(smoothness >= 2.0) {
            return Err(Error::Config(format!("smoothness s = {smoothness} must be >= 2")));
        }
        if !(floor > 0.0) || !(norm_bound > 0.0) {
            return Err(Error::Config("floor δ and norm bound L must be positive".into()));
        }
        if !alpha.is_finite() {
            return Err(Error::Config(format!("alpha = {alpha} is not finite")));
        }
        let mut coeffs = field.coeffs().to_vec();
        coeffs[field.freqs().zero_index()] = Complex64::new(1.0, 0.0);
        let field = FourierField::from_coeffs(Arc::clone(field.freqs()), coeffs, true)?;
        let model = Self {
            field,
            smoothness,
            floor,
            norm_bound,
            alpha,
        };
        let min = model.grid_min();
        if min < floor {
            return Err(Error::ModelClass { min, floor });
        }
        Ok(model)
    }

    pub fn uniform(geometry: TorusGeometry, constants: ModelConstants) -> Result<Self> {
        let vol = geometry.volume();
        let fs = FrequencySet::new(geometry, 0);
        let f = FourierField::constant(fs, 1.0 / vol);
        Self::new(f, constants)
    }

    pub fn field(&self) -> &FourierField {
        &self.field
    }

    pub fn freqs(&self) -> &Arc<FrequencySet> {
        self.field.freqs()
    }

    pub fn geometry(&self) -> &TorusGeometry {
        self.field.geometry()
    }

    pub fn cutoff(&self) -> usize {
        self.field.cutoff()
    }

    pub fn smoothness(&self) -> f64 {
        self.smoothness
    }

    pub fn floor(&self) -> f64 {
        self.floor
    }

    pub fn norm_bound(&self) -> f64 {
        self.norm_bound
    }

    pub fn alpha(&self) -> f64 {
        self.alpha
    }

    pub fn constants(&self) -> ModelConstants {
        ModelConstants {
            smoothness: self.smoothness,
            floor: self.floor,
            norm_bound: self.norm_bound,
            alpha: self.alpha,
        }
    }

    pub fn with_alpha(&self, alpha: f64) -> Self {
        let mut m = self.clone();
        m.alpha = alpha;
        m
    }

    pub fn evaluate(&self, x: &[f64]) -> f64 {
        self.field.evaluate_real(x)
    }

    /// True when every nonzero mode vanishes.
    pub fn is_constant(&self) -> bool {
        let z = self.freqs().zero_index();
        self.field
            .coeffs()
            .iter()
            .enumerate()
            .all(|(i, c)| i == z || c.norm() == 0.0)
    }

    pub fn check_points(&self) -> usize {
        (CHECK_OVERSAMPLE * (2 * self.cutoff() + 1)).max(16)
    }

    pub fn check_grid(&self) -> GridField {
        synthesize(&self.field, self.check_points()).expect("check grid resolves the field")
    }

    pub fn grid_min(&self) -> f64 {
        self.check_grid()
            .values()
            .iter()
            .map(|v| v.re)
            .fold(f64::INFINITY, f64::min)
    }

    pub fn grid_max(&self) -> f64 {
        self.check_grid()
            .values()
            .iter()
            .map(|v| v.re)
            .fold(f64::NEG_INFINITY, f64::max)
    }

    /// Rigorous upper bound on `sup f`: the check-grid max plus the Taylor slack
    /// `d h²/8 · sup|∇²f|` around an interior maximum, capped by `Σ|c_k|/vol`.
    pub fn sup_bound(&self) -> f64 {
        let fs = self.field.freqs();
        let vol = self.geometry().volume();
        let wiener: f64 = self.field.coeffs().iter().map(|c| c.norm()).sum::<f64>() / vol;
        let curvature: f64 = self
            .field
            .coeffs()
            .iter()
            .enumerate()
            .map(|(i, c)| fs.lambda(i) * c.norm())
            .sum::<f64>()
            / vol;
        let h = self
            .geometry()
            .side_lengths()
            .iter()
            .fold(0.0f64, |m, &l| m.max(l / self.check_points() as f64));
        let d = self.geometry().dim() as f64;
        (self.grid_max() + d * h * h / 8.0 * curvature).min(wiener)
    }

    /// Values of `f` on a `points^d` grid (real parts).
    pub fn grid_values(&self, points: usize) -> Result<Vec<f64>> {
        Ok(synthesize(&self.field, points)?.values().iter().map(|v| v.re).collect())
    }
}

/// One trigonometric term `a cos(ω_k·x) + b sin(ω_k·x)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrigTerm {
    pub k: Vec<i64>,
    #[serde(default)]
    pub cos: f64,
    #[serde(default)]
    pub sin: f64,
}

/// Periodized isotropic Gaussian component.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GaussComponent {
    pub center: Vec<f64>,
    pub width: f64,
    pub weight: f64,
}

/// Density catalog.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum DensityShape {
    Uniform,
    /// `1/vol + Σ terms`.
    Trig { terms: Vec<TrigTerm> },
    BumpLattice(BumpLatticeSpec),
    /// `(1 - Σ w_i)/vol + Σ w_i G_{σ_i}(x - c_i)`, periodized.
    GaussBump { components: Vec<GaussComponent> },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DensitySpec {
    pub side_lengths: Vec<f64>,
    #[serde(flatten)]
    pub shape: DensityShape,
    /// Fourier cutoff of the representation; trig densities use their own reach.
    #[serde(default = "default_cutoff")]
    pub cutoff: usize,
    #[serde(default)]
    pub constants: ModelConstants,
}

fn default_cutoff() -> usize {
    32
}

impl DensitySpec {
    pub fn unit_1d(shape: DensityShape) -> Self {
        Self {
            side_lengths: vec![1.0],
            shape,
            cutoff: default_cutoff(),
            constants: ModelConstants::default(),
        }
    }

    /// `1 + a cos(2π k x)` on the unit circle.
    pub fn cosine_1d(k: i64, a: f64) -> Self {
        Self::unit_1d(DensityShape::Trig {
            terms: vec![TrigTerm {
                k: vec![k],
                cos: a,
                sin: 0.0,
            }],
        })
    }
}

pub fn make_density(spec: &DensitySpec) -> Result<DensityModel> {
    let geometry = TorusGeometry::new(spec.side_lengths.clone())?;
    let d = geometry.dim();
    let vol = geometry.volume();
    match &spec.shape {
        DensityShape::Uniform => DensityModel::uniform(geometry, spec.constants),
        DensityShape::Trig { terms } => {
            let reach = terms
                .iter()
                .flat_map(|t| t.k.iter().map(|k| k.unsigned_abs() as usize))
                .max()
                .unwrap_or(0);
            let fs = FrequencySet::new(geometry, reach);
            let mut coeffs = vec![Complex64::new(0.0, 0.0); fs.len()];
            for t in terms {
                if t.k.len() != d {
                    return Err(Error::Config(format!("trig term {:?} has wrong dimension", t.k)));
                }
                let i = fs.index_of(&t.k).expect("reach covers every term");
                let j = fs.neg_index(i);
                if i == j {
                    coeffs[i] += Complex64::new(t.cos * vol, 0.0);
                    continue;
                }
                // a cos + b sin = (a - i b)/2 e^{iωx} + (a + i b)/2 e^{-iωx}
                coeffs[i] += Complex64::new(t.cos, -t.sin) * (vol / 2.0);
                coeffs[j] += Complex64::new(t.cos, t.sin) * (vol / 2.0);
            }
            let field = FourierField::from_coeffs(fs, coeffs, true)?;
            DensityModel::new(field, spec.constants)
        }
        DensityShape::BumpLattice(b) => {
            let field = b.field(&geometry, spec.cutoff)?;
            DensityModel::new(field, spec.constants)
        }
        DensityShape::GaussBump { components } => {
            let fs = FrequencySet::new(geometry, spec.cutoff);
            let mut coeffs = vec![Complex64::new(0.0, 0.0); fs.len()];
            let total: f64 = components.iter().map(|c| c.weight).sum();
            coeffs[fs.zero_index()] = Complex64::new(1.0 - total, 0.0);
            for c in components {
                if c.center.len() != d || !(c.width > 0.0) {
                    return Err(Error::Config(format!("bad gaussian component {c:?}")));
                }
                for (i, coeff) in coeffs.iter_mut().enumerate() {
                    let w = fs.omega(i);
                    let lam = fs.lambda(i);
                    let phase: f64 = w.iter().zip(&c.center).map(|(a, b)| a * b).sum();
                    *coeff += Complex64::from_polar(c.weight * (-0.5 * c.width * c.width * lam).exp(), -phase);
                }
            }
            let field = FourierField::from_coeffs(fs, coeffs, true)?;
            DensityModel::new(field, spec.constants)
        }
    }
}
