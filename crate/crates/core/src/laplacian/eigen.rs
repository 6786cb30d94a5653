//! Generalized Hermitian eigensolve of the pencil `(S, M)`.

use std::ops::Range;
use std::sync::Arc;

use nalgebra::{Cholesky, DVector, SymmetricEigen};
use num_complex::Complex64;

use super::pencil::{CMatrix, SpectralPencil};
use crate::error::{Error, Result};
use crate::torus::FourierField;

/// Eigenpairs `S g = λ M g`, with `G^H M G = I`.
///
/// Values ascend except inside runs closer than `TIE_TOL` (relative), which are
/// ordered by the lattice index of each vector's dominant coefficient.
#[derive(Debug, Clone)]
pub struct EigenSystem {
    pencil: Arc<SpectralPencil>,
    values: Vec<f64>,
    vectors: CMatrix,
    chol: CMatrix,
}

/// Relative tolerance under which two eigenvalues count as tied for ordering.
const TIE_TOL: f64 = 1e-9;

pub fn solve_spectrum(pencil: &Arc<SpectralPencil>) -> Result<EigenSystem> {
    let m = pencil.mass().clone();
    let chol = match Cholesky::new(m.clone()) {
        Some(c) => c,
        None => {
            let ev = SymmetricEigen::new(m).eigenvalues;
            let (lo, hi) = ev.iter().fold((f64::INFINITY, 0.0f64), |(a, b), &v| (a.min(v), b.max(v.abs())));
            return Err(Error::Numerical(format!(
                "Cholesky factorization of the mass matrix failed (eigenvalue range [{lo:.3e}, {hi:.3e}])"
            )));
        }
    };
    let l = chol.l();
    // A = L⁻¹ S L⁻ᴴ = L⁻¹ (L⁻¹ S)ᴴ since S is Hermitian
    let x = l
        .solve_lower_triangular(pencil.stiffness())
        .ok_or_else(|| Error::Numerical("singular Cholesky factor".into()))?;
    let mut a = l
        .solve_lower_triangular(&x.adjoint())
        .ok_or_else(|| Error::Numerical("singular Cholesky factor".into()))?;
    a = (&a + a.adjoint()) * Complex64::new(0.5, 0.0);
    let eig = SymmetricEigen::new(a);
    let g = l
        .adjoint()
        .solve_upper_triangular(&eig.eigenvectors)
        .ok_or_else(|| Error::Numerical("singular Cholesky factor".into()))?;

    let n = g.ncols();
    let dominant: Vec<usize> = (0..n).map(|j| dominant_index(&g.column(j).into_owned())).collect();
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&i, &j| eig.eigenvalues[i].total_cmp(&eig.eigenvalues[j]));
    // reorder runs of tied eigenvalues by lattice index of the dominant coefficient
    let mut start = 0;
    while start < n {
        let mut end = start + 1;
        while end < n {
            let a = eig.eigenvalues[order[end - 1]];
            let b = eig.eigenvalues[order[end]];
            if b - a > TIE_TOL * (1.0 + a.abs()) {
                break;
            }
            end += 1;
        }
        order[start..end].sort_by_key(|&i| dominant[i]);
        start = end;
    }

    let values: Vec<f64> = order.iter().map(|&i| eig.eigenvalues[i]).collect();
    let mut vectors = CMatrix::zeros(n, n);
    for (dst, &src) in order.iter().enumerate() {
        let col = g.column(src);
        let lead = col[dominant[src]];
        let phase = if lead.norm() > 0.0 { lead.conj() / lead.norm() } else { Complex64::new(1.0, 0.0) };
        vectors.set_column(dst, &(col * phase));
    }
    let sys = EigenSystem {
        pencil: Arc::clone(pencil),
        values,
        vectors,
        chol: l,
    };
    let res = sys.max_residual();
    if res > 1e-8 {
        return Err(Error::Numerical(format!("eigenpair residual {res:.3e} exceeds 1e-8")));
    }
    Ok(sys)
}

fn dominant_index(v: &DVector<Complex64>) -> usize {
    let peak = v.iter().map(|c| c.norm()).fold(0.0, f64::max);
    v.iter().position(|c| c.norm() >= peak * (1.0 - 1e-12)).unwrap_or(0)
}

impl EigenSystem {
    pub fn pencil(&self) -> &Arc<SpectralPencil> {
        &self.pencil
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn value(&self, idx: usize) -> f64 {
        self.values[idx]
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    /// Columns are the weighted-orthonormal eigenvectors in `φ_k` coordinates.
    pub fn vectors(&self) -> &CMatrix {
        &self.vectors
    }

    pub fn vector(&self, idx: usize) -> DVector<Complex64> {
        self.vectors.column(idx).into_owned()
    }

    /// Lower Cholesky factor `L` of the mass matrix.
    pub fn mass_factor(&self) -> &CMatrix {
        &self.chol
    }

    pub fn eigenfunction(&self, idx: usize) -> Result<FourierField> {
        let v = self.vector(idx);
        self.pencil.field_from_coords(v.as_slice(), false)
    }

    /// Max over ℓ of `‖S g − λ M g‖ / ((1 + |λ|) ‖g‖_M)`.
    pub fn max_residual(&self) -> f64 {
        let s = self.pencil.stiffness();
        let m = self.pencil.mass();
        let mut worst = 0.0f64;
        for (j, &lam) in self.values.iter().enumerate() {
            let g = self.vectors.column(j);
            let mg = m * g;
            let r = s * g - &mg * Complex64::new(lam, 0.0);
            let gm = g.dotc(&mg).re.max(0.0).sqrt();
            worst = worst.max(r.norm() / ((1.0 + lam.abs()) * gm.max(f64::MIN_POSITIVE)));
        }
        worst
    }

    /// `max |G^H M G − I|`.
    pub fn orthonormality_defect(&self) -> f64 {
        let gram = self.vectors.adjoint() * self.pencil.mass() * &self.vectors;
        let n = gram.nrows();
        let mut worst = 0.0f64;
        for i in 0..n {
            for j in 0..n {
                let target = if i == j { 1.0 } else { 0.0 };
                worst = worst.max((gram[(i, j)] - target).norm());
            }
        }
        worst
    }

    /// Copy with the columns in `range` replaced by `G[range] · U` for a unitary `U`.
    pub fn remix(&self, range: Range<usize>, unitary: &CMatrix) -> Result<EigenSystem> {
        let m = range.len();
        if range.end > self.len() || unitary.nrows() != m || unitary.ncols() != m {
            return Err(Error::Incompatible(format!(
                "remix of columns {range:?} needs a {m}×{m} matrix, got {}×{}",
                unitary.nrows(),
                unitary.ncols()
            )));
        }
        let lo = self.values[range.start];
        let hi = self.values[range.end - 1];
        if hi - lo > TIE_TOL * (1.0 + lo.abs()) * 1e3 {
            return Err(Error::Incompatible(format!("columns {range:?} span distinct eigenvalues [{lo}, {hi}]")));
        }
        let defect = (unitary.adjoint() * unitary - CMatrix::identity(m, m)).iter().map(|z| z.norm()).fold(0.0, f64::max);
        if defect > 1e-12 {
            return Err(Error::Incompatible(format!("remix matrix is not unitary (defect {defect:.3e})")));
        }
        let mut out = self.clone();
        let block = self.vectors.columns(range.start, m) * unitary;
        out.vectors.columns_mut(range.start, m).copy_from(&block);
        Ok(out)
    }

    /// Maximal runs of eigenvalues with consecutive gaps below `gap`.
    pub fn clusters(&self, gap: f64) -> Vec<Range<usize>> {
        group_clusters(&self.values, gap)
    }

    /// CSV with header `index,eigenvalue,cluster_id`; ties grouped at relative tolerance `tol`.
    pub fn spectrum_csv(&self, tol: f64) -> String {
        let mut out = String::from("index,eigenvalue,cluster_id\n");
        let mut cluster = 0usize;
        for (i, &v) in self.values.iter().enumerate() {
            if i > 0 {
                let prev = self.values[i - 1];
                if v - prev > tol * (1.0 + prev.abs()) {
                    cluster += 1;
                }
            }
            out.push_str(&format!("{i},{v:.15e},{cluster}\n"));
        }
        out
    }
}

pub fn group_clusters(values: &[f64], gap: f64) -> Vec<Range<usize>> {
    let mut out = Vec::new();
    let mut start = 0;
    for i in 1..=values.len() {
        if i == values.len() || values[i] - values[i - 1] >= gap {
            if i > start {
                out.push(start..i);
            }
            start = i;
        }
    }
    out
}
