//! Torus geometry and the truncated frequency lattice.

use std::f64::consts::PI;
use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Flat torus `R^d / (κ_1 Z × … × κ_d Z)` with `d ∈ {1, 2, 3}`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TorusGeometry {
    side_lengths: Vec<f64>,
}

impl TorusGeometry {
    pub fn new(side_lengths: Vec<f64>) -> Result<Self> {
        if side_lengths.is_empty() || side_lengths.len() > 3 {
            return Err(Error::InvalidGeometry(format!(
                "dimension must be 1, 2 or 3 (got {})",
                side_lengths.len()
            )));
        }
        if let Some(bad) = side_lengths.iter().find(|&&k| !(k > 0.0) || !k.is_finite()) {
            return Err(Error::InvalidGeometry(format!(
                "side length {bad} is not a positive finite number"
            )));
        }
        Ok(Self { side_lengths })
    }

    /// Unit-volume cube torus of the given dimension.
    pub fn unit(dim: usize) -> Result<Self> {
        Self::new(vec![1.0; dim])
    }

    pub fn dim(&self) -> usize {
        self.side_lengths.len()
    }

    pub fn side_lengths(&self) -> &[f64] {
        &self.side_lengths
    }

    pub fn volume(&self) -> f64 {
        self.side_lengths.iter().product()
    }

    /// `ω_k = 2π (k_1/κ_1, …, k_d/κ_d)`.
    pub fn omega(&self, k: &[i64]) -> Vec<f64> {
        k.iter()
            .zip(&self.side_lengths)
            .map(|(&ki, &kappa)| 2.0 * PI * ki as f64 / kappa)
            .collect()
    }

    /// Wrap a point into the fundamental domain `[0, κ_1) × … × [0, κ_d)`.
    pub fn wrap(&self, x: &mut [f64]) {
        for (xi, &kappa) in x.iter_mut().zip(&self.side_lengths) {
            *xi = xi.rem_euclid(kappa);
            if *xi >= kappa {
                *xi = 0.0;
            }
        }
    }
}

/// Box lattice `{k ∈ Z^d : |k_i| ≤ K}` in lexicographic order, last axis fastest.
///
/// With this ordering the index of `-k` is `len - 1 - index(k)` and the zero
/// mode sits at the center index.
#[derive(Debug, Clone, PartialEq)]
pub struct FrequencySet {
    geometry: TorusGeometry,
    cutoff: usize,
    ks: Vec<i64>,
    omegas: Vec<f64>,
    lambdas: Vec<f64>,
}

impl FrequencySet {
    pub fn new(geometry: TorusGeometry, cutoff: usize) -> Arc<Self> {
        let d = geometry.dim();
        let side = 2 * cutoff + 1;
        let len = side.pow(d as u32);
        let mut ks = Vec::with_capacity(len * d);
        let mut omegas = Vec::with_capacity(len * d);
        let mut lambdas = Vec::with_capacity(len);
        let mut k = vec![0i64; d];
        for idx in 0..len {
            let mut rem = idx;
            for axis in (0..d).rev() {
                k[axis] = (rem % side) as i64 - cutoff as i64;
                rem /= side;
            }
            let w = geometry.omega(&k);
            lambdas.push(w.iter().map(|x| x * x).sum());
            ks.extend_from_slice(&k);
            omegas.extend_from_slice(&w);
        }
        Arc::new(Self {
            geometry,
            cutoff,
            ks,
            omegas,
            lambdas,
        })
    }

    pub fn geometry(&self) -> &TorusGeometry {
        &self.geometry
    }

    pub fn dim(&self) -> usize {
        self.geometry.dim()
    }

    pub fn cutoff(&self) -> usize {
        self.cutoff
    }

    pub fn len(&self) -> usize {
        self.lambdas.len()
    }

    pub fn is_empty(&self) -> bool {
        self.lambdas.is_empty()
    }

    pub fn k(&self, idx: usize) -> &[i64] {
        let d = self.dim();
        &self.ks[idx * d..(idx + 1) * d]
    }

    pub fn omega(&self, idx: usize) -> &[f64] {
        let d = self.dim();
        &self.omegas[idx * d..(idx + 1) * d]
    }

    /// `λ_k = |ω_k|²`.
    pub fn lambda(&self, idx: usize) -> f64 {
        self.lambdas[idx]
    }

    pub fn lambdas(&self) -> &[f64] {
        &self.lambdas
    }

    pub fn zero_index(&self) -> usize {
        (self.len() - 1) / 2
    }

    pub fn neg_index(&self, idx: usize) -> usize {
        self.len() - 1 - idx
    }

    /// Index of `k`, or `None` when `k` falls outside the box.
    pub fn index_of(&self, k: &[i64]) -> Option<usize> {
        let side = (2 * self.cutoff + 1) as i64;
        let c = self.cutoff as i64;
        let mut idx = 0i64;
        for &ki in k {
            if ki.abs() > c {
                return None;
            }
            idx = idx * side + (ki + c);
        }
        Some(idx as usize)
    }

    pub fn dot_omega(&self, a: usize, b: usize) -> f64 {
        self.omega(a)
            .iter()
            .zip(self.omega(b))
            .map(|(x, y)| x * y)
            .sum()
    }

    pub fn same_lattice(&self, other: &FrequencySet) -> bool {
        self.cutoff == other.cutoff && self.geometry == other.geometry
    }
}

/// Enumerate the box lattice of the given cutoff, validating the geometry.
pub fn frequency_lattice(side_lengths: &[f64], cutoff: usize) -> Result<Arc<FrequencySet>> {
    let geometry = TorusGeometry::new(side_lengths.to_vec())?;
    Ok(FrequencySet::new(geometry, cutoff))
}
