//! Resolvent `(z + Δ_f)⁻¹` and trapezoid contour projectors.

use std::f64::consts::PI;
use std::sync::Arc;

use nalgebra::DVector;
use num_complex::Complex64;

use super::eigen::EigenSystem;
use super::pencil::CMatrix;
use super::projector::{ProjectorRep, ProjectorSource};
use crate::error::{Error, Result};
use crate::torus::FourierField;

pub const DEFAULT_NODES: usize = 64;
/// Eigenvalues closer than this fraction of the radius to the circle are rejected.
pub const CONTOUR_MARGIN: f64 = 1e-3;
/// Minimal distance of a resolvent point from the spectrum.
pub const RESOLVENT_MARGIN: f64 = 1e-8;

/// Counterclockwise circle with a trapezoid rule of `nodes` points.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Contour {
    center: Complex64,
    radius: f64,
    nodes: usize,
}

impl Contour {
    pub fn new(center: Complex64, radius: f64, nodes: usize) -> Result<Self> {
        if !(radius > 0.0) || !radius.is_finite() {
            return Err(Error::Config(format!("contour radius {radius} must be positive")));
        }
        if nodes == 0 {
            return Err(Error::Config("contour needs at least one node".into()));
        }
        Ok(Self { center, radius, nodes })
    }

    pub fn circle(center: f64, radius: f64) -> Result<Self> {
        Self::new(Complex64::new(center, 0.0), radius, DEFAULT_NODES)
    }

    pub fn with_nodes(self, nodes: usize) -> Result<Self> {
        Self::new(self.center, self.radius, nodes)
    }

    pub fn center(&self) -> Complex64 {
        self.center
    }

    pub fn radius(&self) -> f64 {
        self.radius
    }

    pub fn nodes(&self) -> usize {
        self.nodes
    }

    pub fn encloses(&self, lambda: f64) -> bool {
        (Complex64::new(lambda, 0.0) - self.center).norm() < self.radius
    }

    /// Distance from the circle to a real point.
    pub fn distance_to(&self, lambda: f64) -> f64 {
        ((Complex64::new(lambda, 0.0) - self.center).norm() - self.radius).abs()
    }

    /// Smallest distance to `values`, with the eigenvalue attaining it.
    pub fn spectral_distance(&self, values: &[f64]) -> Option<(f64, f64)> {
        values
            .iter()
            .map(|&v| (self.distance_to(v), v))
            .min_by(|a, b| a.0.total_cmp(&b.0))
    }

    /// Indices of enclosed eigenvalues after enforcing the margin policy.
    pub fn enclosed(&self, values: &[f64], margin: f64) -> Result<Vec<usize>> {
        if let Some((dist, eigenvalue)) = self.spectral_distance(values) {
            if dist < margin * self.radius {
                return Err(Error::IllPosedContour {
                    eigenvalue,
                    distance: dist,
                });
            }
        }
        Ok((0..values.len()).filter(|&i| self.encloses(values[i])).collect())
    }

    /// Quadrature nodes `z_j` and weights `w_j` with `(1/2πi)∮ g ≈ Σ w_j g(z_j)`.
    pub fn quadrature(&self) -> Vec<(Complex64, Complex64)> {
        (0..self.nodes)
            .map(|j| {
                let theta = 2.0 * PI * (j as f64 + 0.5) / self.nodes as f64;
                let e = Complex64::from_polar(1.0, theta);
                (self.center + e * self.radius, e * self.radius / self.nodes as f64)
            })
            .collect()
    }
}

fn shifted(eig: &EigenSystem, z: Complex64) -> CMatrix {
    let p = eig.pencil();
    p.mass() * z - p.stiffness()
}

/// Solve `(zM − S) c = M a` for the coordinates `a` of `rhs`.
pub fn resolvent_apply(eig: &EigenSystem, z: Complex64, rhs: &FourierField) -> Result<FourierField> {
    if let Some((distance, eigenvalue)) = eig
        .values()
        .iter()
        .map(|&v| ((z - v).norm(), v))
        .min_by(|a, b| a.0.total_cmp(&b.0))
    {
        if distance <= RESOLVENT_MARGIN * (1.0 + eigenvalue.abs()) {
            return Err(Error::NearSingular {
                z: z.to_string(),
                eigenvalue,
                distance,
            });
        }
    }
    let pencil = eig.pencil();
    let a = pencil.basis_coords(rhs)?;
    let b = pencil.mass() * a;
    let c = shifted(eig, z)
        .lu()
        .solve(&b)
        .ok_or_else(|| Error::Numerical(format!("resolvent system at z = {z} is singular")))?;
    pencil.field_from_coords(c.as_slice(), rhs.is_real() && z.im == 0.0)
}

/// Apply `(z + Δ_f)` in the weak sense: coordinates `M⁻¹ (zM − S) c`.
pub fn shifted_operator_apply(eig: &EigenSystem, z: Complex64, u: &FourierField) -> Result<FourierField> {
    let pencil = eig.pencil();
    let c = pencil.basis_coords(u)?;
    let b = shifted(eig, z) * c;
    let out = pencil
        .mass()
        .clone()
        .cholesky()
        .ok_or_else(|| Error::Numerical("mass matrix lost definiteness".into()))?
        .solve(&b);
    pencil.field_from_coords(out.as_slice(), u.is_real() && z.im == 0.0)
}

/// `(1/2πi)∮ (zM − S)⁻¹ M dz` by the trapezoid rule, factored into a [`ProjectorRep`].
pub fn contour_projector(eig: &EigenSystem, contour: &Contour) -> Result<ProjectorRep> {
    let inside = contour.enclosed(eig.values(), CONTOUR_MARGIN)?;
    if inside.is_empty() {
        return Err(Error::EmptyContour);
    }
    let pencil = eig.pencil();
    let n = pencil.dim();
    let mut acc = CMatrix::zeros(n, n);
    for (z, w) in contour.quadrature() {
        let sol = shifted(eig, z)
            .lu()
            .solve(pencil.mass())
            .ok_or_else(|| Error::Numerical(format!("resolvent system at z = {z} is singular")))?;
        acc += sol * w;
    }
    ProjectorRep::from_matrix(Arc::clone(pencil.freqs()), eig.mass_factor(), acc, ProjectorSource::Contour)
}

/// Coordinates of a field as a column vector (for tests and diagnostics).
pub fn coords_of(eig: &EigenSystem, u: &FourierField) -> Result<DVector<Complex64>> {
    eig.pencil().basis_coords(u)
}
