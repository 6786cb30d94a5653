//! Galerkin pencil `(S, M)` of `-Δ_f` in the Fourier basis with weight `f^α`.
//!
//! With `φ_k = e^{iω_k·x}` and `W = f^α`:
//! `S_{kl} = ∫ ∇φ_l·∇φ̄_k W = (ω_k·ω_l) Ŵ_{k-l}` and `M_{kl} = ∫ φ_l φ̄_k W = Ŵ_{k-l}`.

use std::sync::Arc;

use nalgebra::{Cholesky, DMatrix};
use num_complex::Complex64;

use crate::density::DensityModel;
use crate::error::{Error, Result};
use crate::torus::{analyze_into, synthesize, FourierField, FrequencySet};

pub const DEFAULT_OVERSAMPLE: usize = 4;

pub type CMatrix = DMatrix<Complex64>;

/// Coefficients up to `band` of `scale · g^exponent` for a positive real field `g`.
pub fn power_weight(g: &FourierField, exponent: f64, scale: f64, band: usize, oversample: usize) -> Result<FourierField> {
    let reach = band.max(g.cutoff());
    let points = (oversample.max(2) * (2 * reach + 1)).max(2 * band + 2);
    let grid = synthesize(g, points)?;
    if exponent != 0.0 && exponent.fract() != 0.0 || exponent < 0.0 {
        if let Some(v) = grid.values().iter().find(|v| !(v.re > 0.0)) {
            return Err(Error::Domain(format!(
                "density value {} is not positive; cannot raise to power {exponent}",
                v.re
            )));
        }
    }
    let powered = grid.map(|v| Complex64::new(scale * v.re.powf(exponent), 0.0));
    let freqs = FrequencySet::new(g.geometry().clone(), band);
    analyze_into(&powered, freqs)
}

/// Coefficients up to `band` of `scale · g^exponent · h` for real fields `g`, `h`.
pub fn power_times(
    g: &FourierField,
    exponent: f64,
    h: &FourierField,
    scale: f64,
    band: usize,
    oversample: usize,
) -> Result<FourierField> {
    let reach = band.max(g.cutoff()).max(h.cutoff());
    let points = (oversample.max(2) * (2 * reach + 1)).max(2 * band + 2);
    let gg = synthesize(g, points)?;
    let hh = synthesize(h, points)?;
    let prod = gg.zip_map(&hh, |a, b| Complex64::new(scale * a.re.powf(exponent), 0.0) * b)?;
    let freqs = FrequencySet::new(g.geometry().clone(), band);
    analyze_into(&prod, freqs)
}

/// Build `(S, M)` on `freqs` for a weight given by its coefficients (band ≥ 2K).
pub fn weighted_forms(freqs: &Arc<FrequencySet>, weight: &FourierField) -> Result<(CMatrix, CMatrix)> {
    let wf = weight.freqs();
    if wf.cutoff() < 2 * freqs.cutoff() {
        return Err(Error::Incompatible(format!(
            "weight band {} cannot couple modes of cutoff {}",
            wf.cutoff(),
            freqs.cutoff()
        )));
    }
    let n = freqs.len();
    let d = freqs.dim();
    let mut s = CMatrix::zeros(n, n);
    let mut m = CMatrix::zeros(n, n);
    let mut diff = vec![0i64; d];
    for k in 0..n {
        for l in 0..n {
            for (a, (x, y)) in diff.iter_mut().zip(freqs.k(k).iter().zip(freqs.k(l))) {
                *a = x - y;
            }
            let w = weight.coeff(wf.index_of(&diff).expect("difference within band"));
            m[(k, l)] = w;
            s[(k, l)] = w * freqs.dot_omega(k, l);
        }
    }
    Ok((s, m))
}

#[derive(Debug, Clone)]
pub struct SpectralPencil {
    freqs: Arc<FrequencySet>,
    stiffness: CMatrix,
    mass: CMatrix,
    alpha: f64,
    weight: FourierField,
    density: FourierField,
    oversample: usize,
}

impl SpectralPencil {
    /// Assemble for a positive real density field `f` (not necessarily normalized).
    pub fn from_field(density: &FourierField, alpha: f64, cutoff: usize, oversample: usize) -> Result<Self> {
        if oversample < 2 {
            return Err(Error::Config(format!("oversample factor {oversample} must be >= 2")));
        }
        let freqs = FrequencySet::new(density.geometry().clone(), cutoff);
        let weight = power_weight(density, alpha, 1.0, 2 * cutoff, oversample)?;
        let (stiffness, mass) = weighted_forms(&freqs, &weight)?;
        let pencil = Self {
            freqs,
            stiffness,
            mass,
            alpha,
            weight,
            density: density.clone(),
            oversample,
        };
        pencil.check_mass()?;
        Ok(pencil)
    }

    fn check_mass(&self) -> Result<()> {
        if Cholesky::new(self.mass.clone()).is_none() {
            return Err(Error::Discretization(
                "weighted mass matrix is not positive definite; increase the oversample factor".into(),
            ));
        }
        Ok(())
    }

    pub fn freqs(&self) -> &Arc<FrequencySet> {
        &self.freqs
    }

    pub fn cutoff(&self) -> usize {
        self.freqs.cutoff()
    }

    pub fn dim(&self) -> usize {
        self.freqs.len()
    }

    pub fn stiffness(&self) -> &CMatrix {
        &self.stiffness
    }

    pub fn mass(&self) -> &CMatrix {
        &self.mass
    }

    pub fn alpha(&self) -> f64 {
        self.alpha
    }

    /// Coefficients of `f^α` up to twice the cutoff.
    pub fn weight(&self) -> &FourierField {
        &self.weight
    }

    pub fn density(&self) -> &FourierField {
        &self.density
    }

    pub fn oversample(&self) -> usize {
        self.oversample
    }

    pub fn volume(&self) -> f64 {
        self.freqs.geometry().volume()
    }

    /// Largest relative deviation from Hermitian symmetry of `S` and `M`.
    pub fn hermitian_defect(&self) -> f64 {
        let defect = |a: &CMatrix| {
            let scale = a.norm().max(f64::MIN_POSITIVE);
            (a - a.adjoint()).norm() / scale
        };
        defect(&self.stiffness).max(defect(&self.mass))
    }

    /// Coefficient vector (in the `φ_k` basis) of a field, resampled onto the pencil lattice.
    pub fn basis_coords(&self, field: &FourierField) -> Result<nalgebra::DVector<Complex64>> {
        let f = field.resample(Arc::clone(&self.freqs))?;
        let vol = self.volume();
        Ok(nalgebra::DVector::from_iterator(
            f.coeffs().len(),
            f.coeffs().iter().map(|c| c / vol),
        ))
    }

    /// Field with the given `φ_k`-basis coordinates.
    pub fn field_from_coords(&self, coords: &[Complex64], real: bool) -> Result<FourierField> {
        let vol = self.volume();
        FourierField::from_coeffs(
            Arc::clone(&self.freqs),
            coords.iter().map(|c| c * vol).collect(),
            real,
        )
    }
}

pub fn assemble_pencil(density: &DensityModel, alpha: f64, cutoff: usize, oversample: usize) -> Result<SpectralPencil> {
    SpectralPencil::from_field(density.field(), alpha, cutoff, oversample)
}
