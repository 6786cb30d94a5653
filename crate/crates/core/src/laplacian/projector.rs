//! Finite-rank projector `Π c = G Hᴴ c` in `φ_k` coordinates.

use std::sync::Arc;

use nalgebra::{DVector, SymmetricEigen};
use num_complex::Complex64;

use super::pencil::CMatrix;
use crate::error::{Error, Result};
use crate::torus::{FourierField, FrequencySet};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ProjectorSource {
    Eigen,
    Contour,
}

/// Rank-N projector with primal factors `G` and dual factors `H = M G`.
///
/// For a field with coordinates `a` (`u = Σ a_k φ_k`), `Π u` has coordinates
/// `G (Hᴴ a)`. The primal columns are weighted-orthonormal: `Gᴴ M G = I`.
#[derive(Debug, Clone)]
pub struct ProjectorRep {
    freqs: Arc<FrequencySet>,
    primal: CMatrix,
    dual: CMatrix,
    source: ProjectorSource,
    raw: Option<CMatrix>,
}

impl ProjectorRep {
    /// Projector onto the span of weighted-orthonormal columns `basis`.
    pub fn from_basis(freqs: Arc<FrequencySet>, mass: &CMatrix, basis: CMatrix, source: ProjectorSource) -> Self {
        let dual = mass * &basis;
        Self {
            freqs,
            primal: basis,
            dual,
            source,
            raw: None,
        }
    }

    /// Factor an (approximate) `M`-orthogonal projector matrix `raw`.
    ///
    /// `mass_factor` is the lower Cholesky factor `L` of `M`. The whitened
    /// matrix `Lᴴ raw L⁻ᴴ` is Hermitized and its eigenvectors with eigenvalue
    /// above 1/2 span the range.
    pub fn from_matrix(freqs: Arc<FrequencySet>, mass_factor: &CMatrix, raw: CMatrix, source: ProjectorSource) -> Result<Self> {
        let lh = mass_factor.adjoint();
        // W = Lᴴ raw L⁻ᴴ, via Wᴴ = L⁻¹ (Lᴴ raw)ᴴ
        let t = &lh * &raw;
        let wh = mass_factor
            .solve_lower_triangular(&t.adjoint())
            .ok_or_else(|| Error::Numerical("singular mass factor".into()))?;
        let w = wh.adjoint();
        let herm = (&w + w.adjoint()) * Complex64::new(0.5, 0.0);
        let eig = SymmetricEigen::new(herm);
        let mut keep: Vec<usize> = (0..eig.eigenvalues.len()).filter(|&i| eig.eigenvalues[i] > 0.5).collect();
        keep.sort_by(|&a, &b| eig.eigenvalues[b].total_cmp(&eig.eigenvalues[a]));
        let p = raw.nrows();
        let mut y = CMatrix::zeros(p, keep.len());
        for (j, &i) in keep.iter().enumerate() {
            y.set_column(j, &eig.eigenvectors.column(i));
        }
        let primal = lh
            .solve_upper_triangular(&y)
            .ok_or_else(|| Error::Numerical("singular mass factor".into()))?;
        let dual = mass_factor * &y;
        Ok(Self {
            freqs,
            primal,
            dual,
            source,
            raw: Some(raw),
        })
    }

    pub fn freqs(&self) -> &Arc<FrequencySet> {
        &self.freqs
    }

    pub fn rank(&self) -> usize {
        self.primal.ncols()
    }

    pub fn source(&self) -> ProjectorSource {
        self.source
    }

    pub fn primal(&self) -> &CMatrix {
        &self.primal
    }

    pub fn dual(&self) -> &CMatrix {
        &self.dual
    }

    /// Unfactored quadrature matrix, for contour-built projectors.
    pub fn raw(&self) -> Option<&CMatrix> {
        self.raw.as_ref()
    }

    /// Full matrix `G Hᴴ` acting on `φ_k` coordinates.
    pub fn matrix(&self) -> CMatrix {
        &self.primal * self.dual.adjoint()
    }

    pub fn apply_coords(&self, a: &DVector<Complex64>) -> DVector<Complex64> {
        &self.primal * (self.dual.adjoint() * a)
    }

    pub fn apply(&self, field: &FourierField) -> Result<FourierField> {
        let u = field.resample(Arc::clone(&self.freqs))?;
        let vol = self.freqs.geometry().volume();
        let a = DVector::from_iterator(u.coeffs().len(), u.coeffs().iter().map(|c| c / vol));
        let out = self.apply_coords(&a);
        FourierField::from_coeffs(Arc::clone(&self.freqs), out.iter().map(|c| c * vol).collect(), false)
    }

    pub fn primal_field(&self, i: usize) -> Result<FourierField> {
        let vol = self.freqs.geometry().volume();
        FourierField::from_coeffs(Arc::clone(&self.freqs), self.primal.column(i).iter().map(|c| c * vol).collect(), false)
    }

    /// Field `h_i` with `⟨u, h_i⟩ = (Hᴴ a)_i`.
    pub fn dual_field(&self, i: usize) -> Result<FourierField> {
        FourierField::from_coeffs(Arc::clone(&self.freqs), self.dual.column(i).iter().copied().collect(), false)
    }

    /// `‖Π² − Π‖₂ / max(1, ‖Π‖₂)`.
    pub fn idempotency_defect(&self) -> f64 {
        let p = self.matrix();
        let d = &p * &p - &p;
        spectral_norm(&d) / spectral_norm(&p).max(1.0)
    }

    /// `‖M Π − (M Π)ᴴ‖₂` for the supplied mass matrix.
    pub fn self_adjoint_defect(&self, mass: &CMatrix) -> f64 {
        let mp = mass * self.matrix();
        spectral_norm(&(&mp - mp.adjoint()))
    }

    /// `‖Π − Π′‖_{L²→L²}`, the spectral norm in coordinates.
    pub fn distance(&self, other: &ProjectorRep) -> Result<f64> {
        if !self.freqs.same_lattice(&other.freqs) {
            return Err(Error::Incompatible("projectors live on different lattices".into()));
        }
        Ok(spectral_norm(&(self.matrix() - other.matrix())))
    }
}

pub(crate) fn spectral_norm(a: &CMatrix) -> f64 {
    if a.nrows() == 0 || a.ncols() == 0 {
        return 0.0;
    }
    a.clone().singular_values().iter().fold(0.0, |m: f64, &s| m.max(s))
}
