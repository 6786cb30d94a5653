//! Bump-lattice perturbations `f_τ = 1 + t Σ_j τ_j ε^s χ((x - x_j)/ε)` of the uniform density.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::torus::{FourierField, FrequencySet, TorusGeometry};

/// Radial profile supported in the unit ball with vanishing moments up to `order`.
///
/// Built from `b_m(r) = r^{2m} ((1 + cos πr)/2)²`, `m = 0..=M`, with the top
/// element orthogonalized against the moment functionals `r ↦ r^{2j}`,
/// `2j ≤ order`, and scaled to `‖χ‖_∞ = 1/2`.
#[derive(Debug, Clone, PartialEq)]
pub struct BumpProfile {
    coeffs: Vec<f64>,
    scale: f64,
}

const QUAD_NODES: usize = 4000;

fn basis(m: usize, r: f64) -> f64 {
    if r >= 1.0 {
        return 0.0;
    }
    let c = 0.5 * (1.0 + (std::f64::consts::PI * r).cos());
    r.powi(2 * m as i32) * c * c
}

/// `∫_0^1 g(r) r^{d-1} dr` by composite Simpson.
fn radial_integral<F: Fn(f64) -> f64>(g: F, dim: usize) -> f64 {
    let h = 1.0 / QUAD_NODES as f64;
    let mut s = 0.0;
    for i in 0..=QUAD_NODES {
        let r = i as f64 * h;
        let w = if i == 0 || i == QUAD_NODES {
            1.0
        } else if i % 2 == 1 {
            4.0
        } else {
            2.0
        };
        s += w * g(r) * r.powi(dim as i32 - 1);
    }
    s * h / 3.0
}

impl BumpProfile {
    pub fn new(dim: usize, order: usize) -> Self {
        let constraints = order / 2 + 1;
        let top = constraints;
        // Solve Σ_{m<top} c_m ∫ b_m r^{2j} = -∫ b_top r^{2j} for j < constraints.
        let mut a = vec![vec![0.0; constraints]; constraints];
        let mut rhs = vec![0.0; constraints];
        for j in 0..constraints {
            for (m, a_jm) in a[j].iter_mut().enumerate() {
                *a_jm = radial_integral(|r| basis(m, r) * r.powi(2 * j as i32), dim);
            }
            rhs[j] = -radial_integral(|r| basis(top, r) * r.powi(2 * j as i32), dim);
        }
        let mut coeffs = solve_dense(a, rhs);
        coeffs.push(1.0);
        let mut profile = Self { coeffs, scale: 1.0 };
        let peak = (0..=2000)
            .map(|i| profile.eval(i as f64 / 2000.0).abs())
            .fold(0.0, f64::max);
        profile.scale = 0.5 / peak;
        profile
    }

    pub fn eval(&self, r: f64) -> f64 {
        self.scale
            * self
                .coeffs
                .iter()
                .enumerate()
                .map(|(m, c)| c * basis(m, r))
                .sum::<f64>()
    }

    /// `∫_0^1 χ(r) r^{2j} r^{d-1} dr`.
    pub fn radial_moment(&self, j: usize, dim: usize) -> f64 {
        radial_integral(|r| self.eval(r) * r.powi(2 * j as i32), dim)
    }
}

fn solve_dense(mut a: Vec<Vec<f64>>, mut b: Vec<f64>) -> Vec<f64> {
    let n = b.len();
    for col in 0..n {
        let piv = (col..n)
            .max_by(|&i, &j| a[i][col].abs().total_cmp(&a[j][col].abs()))
            .unwrap();
        a.swap(col, piv);
        b.swap(col, piv);
        for row in col + 1..n {
            let f = a[row][col] / a[col][col];
            let pivot_row = a[col].clone();
            for (x, p) in a[row][col..].iter_mut().zip(&pivot_row[col..]) {
                *x -= f * p;
            }
            b[row] -= f * b[col];
        }
    }
    let mut x = vec![0.0; n];
    for row in (0..n).rev() {
        let s: f64 = (row + 1..n).map(|k| a[row][k] * x[k]).sum();
        x[row] = (b[row] - s) / a[row][row];
    }
    x
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BumpLatticeSpec {
    /// Bumps per axis.
    pub per_axis: usize,
    pub epsilon: f64,
    /// Amplitude exponent: bumps have height `t ε^s ‖χ‖_∞`.
    pub amplitude_exponent: f64,
    /// Signs `τ_j ∈ {-1, 0, +1}`, one per lattice cell, row-major.
    pub signs: Vec<i8>,
    #[serde(default = "one")]
    pub amplitude: f64,
    /// Support radius of `χ` before scaling by `ε`.
    #[serde(default = "one")]
    pub radius: f64,
    #[serde(default = "two")]
    pub vanishing_moments: usize,
    /// Grid resolution used to analyze the bump sum.
    #[serde(default)]
    pub analysis_points: Option<usize>,
}

fn one() -> f64 {
    1.0
}

fn two() -> usize {
    2
}

impl BumpLatticeSpec {
    pub fn profile(&self, dim: usize) -> BumpProfile {
        BumpProfile::new(dim, self.vanishing_moments)
    }

    fn validate(&self, geometry: &TorusGeometry) -> Result<()> {
        let cells = self.per_axis.pow(geometry.dim() as u32);
        if self.per_axis == 0 || self.signs.len() != cells {
            return Err(Error::Config(format!(
                "bump lattice needs {cells} signs, got {}",
                self.signs.len()
            )));
        }
        if self.signs.iter().any(|s| s.abs() > 1) {
            return Err(Error::Config("bump signs must lie in {-1, 0, 1}".into()));
        }
        let half_spacing = geometry
            .side_lengths()
            .iter()
            .fold(f64::INFINITY, |m, &k| m.min(k / (2.0 * self.per_axis as f64)));
        if !(self.epsilon > 0.0) || self.epsilon * self.radius > half_spacing {
            return Err(Error::Config(format!(
                "bump support ε·ρ = {} exceeds half the lattice spacing {half_spacing}",
                self.epsilon * self.radius
            )));
        }
        Ok(())
    }

    /// Pointwise value of `1/vol + t Σ τ_j ε^s χ(|x - x_j|/(ερ))`.
    pub fn evaluate(&self, geometry: &TorusGeometry, profile: &BumpProfile, x: &[f64]) -> f64 {
        let d = geometry.dim();
        let n = self.per_axis;
        let height = self.amplitude * self.epsilon.powf(self.amplitude_exponent);
        let support = self.epsilon * self.radius;
        let mut total = 1.0 / geometry.volume();
        for (cell, &tau) in self.signs.iter().enumerate() {
            if tau == 0 {
                continue;
            }
            let mut rem = cell;
            let mut r2 = 0.0;
            for axis in (0..d).rev() {
                let j = rem % n;
                rem /= n;
                let kappa = geometry.side_lengths()[axis];
                let center = j as f64 * kappa / n as f64;
                let mut dx = (x[axis] - center).rem_euclid(kappa);
                if dx > kappa / 2.0 {
                    dx -= kappa;
                }
                r2 += dx * dx;
            }
            let r = r2.sqrt() / support;
            if r < 1.0 {
                total += tau as f64 * height * profile.eval(r);
            }
        }
        total
    }

    pub fn field(&self, geometry: &TorusGeometry, cutoff: usize) -> Result<FourierField> {
        self.validate(geometry)?;
        let profile = self.profile(geometry.dim());
        let points = self
            .analysis_points
            .unwrap_or_else(|| (8 * (2 * cutoff + 1)).max(256 / geometry.dim()));
        let fs = FrequencySet::new(geometry.clone(), cutoff);
        FourierField::from_real_fn(fs, points, |x| self.evaluate(geometry, &profile, x))
    }
}
