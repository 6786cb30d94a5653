//! Smooth radial Fourier tapers: the projection family `π_D`.

use std::f64::consts::PI;
use std::sync::Arc;

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use super::field::FourierField;
use super::lattice::{FrequencySet, TorusGeometry};
use crate::error::{Error, Result};

/// Cutoff profile `ψ` with `ψ = 1` on `[0, 1]` and `ψ = 0` on `[2, ∞)`.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub enum Taper {
    /// `½(1 + cos(π σ(t-1)))` with the cubic smoothstep `σ(x) = 3x² - 2x³`; C².
    #[default]
    RaisedCosine,
}

impl Taper {
    pub fn eval(&self, t: f64) -> f64 {
        match self {
            Taper::RaisedCosine => {
                if t <= 1.0 {
                    1.0
                } else if t >= 2.0 {
                    0.0
                } else {
                    let x = t - 1.0;
                    let s = x * x * (3.0 - 2.0 * x);
                    0.5 * (1.0 + (PI * s).cos())
                }
            }
        }
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct ProjectionFamily {
    pub taper: Taper,
}

impl ProjectionFamily {
    /// Multiplier `ψ(|ω_k| / D)` of `π_D` at mode `idx`.
    pub fn multiplier(&self, freqs: &FrequencySet, idx: usize, level: f64) -> f64 {
        self.taper.eval(freqs.lambda(idx).sqrt() / level)
    }

    /// Smallest cutoff containing every mode with a nonzero multiplier at `level`.
    pub fn band_cutoff(&self, geometry: &TorusGeometry, level: f64) -> usize {
        geometry
            .side_lengths()
            .iter()
            .map(|&kappa| (2.0 * level * kappa / (2.0 * PI)).floor() as usize)
            .max()
            .unwrap_or(0)
    }

    /// Lattice carrying `π_D δ_x` exactly.
    pub fn band(&self, geometry: &TorusGeometry, level: f64) -> Arc<FrequencySet> {
        FrequencySet::new(geometry.clone(), self.band_cutoff(geometry, level))
    }

    pub fn multipliers(&self, freqs: &FrequencySet, level: f64) -> Vec<f64> {
        (0..freqs.len())
            .map(|i| self.multiplier(freqs, i, level))
            .collect()
    }

    /// `π_D u`.
    pub fn apply(&self, field: &FourierField, level: f64) -> Result<FourierField> {
        check_level(level)?;
        let fs = Arc::clone(field.freqs());
        Ok(field.map_modes(
            |i| Complex64::new(self.multiplier(&fs, i, level), 0.0),
            true,
        ))
    }

    /// `π_D δ_x`, i.e. the kernel section `K_D(x, ·)`, on the given lattice.
    pub fn point_mass(&self, freqs: &Arc<FrequencySet>, x: &[f64], level: f64) -> Result<FourierField> {
        check_level(level)?;
        let coeffs = (0..freqs.len())
            .map(|i| {
                let m = self.multiplier(freqs, i, level);
                if m == 0.0 {
                    return Complex64::new(0.0, 0.0);
                }
                let phase: f64 = freqs.omega(i).iter().zip(x).map(|(w, xi)| w * xi).sum();
                Complex64::from_polar(m, -phase)
            })
            .collect();
        FourierField::from_coeffs(Arc::clone(freqs), coeffs, true)
    }

    /// `sup_x ‖K_D(x,·)‖_{L²}`; translation invariance makes it independent of `x`.
    pub fn kernel_l2_norm(&self, geometry: &TorusGeometry, level: f64) -> f64 {
        let fs = self.band(geometry, level);
        let s: f64 = self.multipliers(&fs, level).iter().map(|m| m * m).sum();
        (s / geometry.volume()).sqrt()
    }
}

pub fn check_level(level: f64) -> Result<()> {
    if level >= 1.0 && level.is_finite() {
        Ok(())
    } else {
        Err(Error::InvalidLevel(level))
    }
}

/// Apply `π_D` at an integer level.
pub fn taper_projection(field: &FourierField, family: &ProjectionFamily, level: u32) -> Result<FourierField> {
    family.apply(field, level as f64)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn taper_profile() {
        let t = Taper::RaisedCosine;
        assert_eq!(t.eval(0.0), 1.0);
        assert_eq!(t.eval(1.0), 1.0);
        assert_eq!(t.eval(2.0), 0.0);
        assert_eq!(t.eval(7.0), 0.0);
        assert!((t.eval(1.5) - 0.5).abs() < 1e-15);
        let mut prev = 1.0;
        for i in 0..=200 {
            let v = t.eval(1.0 + i as f64 / 200.0);
            assert!((0.0..=1.0).contains(&v));
            assert!(v <= prev + 1e-15);
            prev = v;
        }
    }

    #[test]
    fn taper_is_c2_at_the_joins() {
        let t = Taper::RaisedCosine;
        let h = 1e-4;
        for &x in &[1.0, 2.0] {
            let d2_left = (t.eval(x - 2.0 * h) - 2.0 * t.eval(x - h) + t.eval(x)) / (h * h);
            let d2_right = (t.eval(x) - 2.0 * t.eval(x + h) + t.eval(x + 2.0 * h)) / (h * h);
            assert!(d2_left.abs() < 1e-2 && d2_right.abs() < 1e-2, "{d2_left} {d2_right}");
        }
    }

    #[test]
    fn large_level_is_identity() {
        let fs = FrequencySet::new(TorusGeometry::unit(1).unwrap(), 3);
        let coeffs = (0..fs.len()).map(|i| Complex64::new(i as f64, 1.0)).collect();
        let u = FourierField::from_coeffs(fs, coeffs, false).unwrap();
        let p = ProjectionFamily::default().apply(&u, 1000.0).unwrap();
        assert_eq!(p.coeffs(), u.coeffs());
    }

    #[test]
    fn point_mass_has_unit_mass() {
        let g = TorusGeometry::unit(2).unwrap();
        let fam = ProjectionFamily::default();
        let fs = fam.band(&g, 9.0);
        let k = fam.point_mass(&fs, &[0.3, 0.8], 9.0).unwrap();
        assert!((k.mass().re - 1.0).abs() < 1e-15);
        assert_eq!(k.mass().im, 0.0);
    }

    #[test]
    fn band_holds_support() {
        let g = TorusGeometry::new(vec![1.0, 2.5]).unwrap();
        let fam = ProjectionFamily::default();
        for level in [1.0, 4.0, 13.0] {
            let fs = fam.band(&g, level);
            let big = FrequencySet::new(g.clone(), fs.cutoff() + 3);
            for i in 0..big.len() {
                if fam.multiplier(&big, i, level) > 0.0 {
                    assert!(fs.index_of(big.k(i)).is_some());
                }
            }
        }
    }

    #[test]
    fn level_below_one_is_rejected() {
        let fs = FrequencySet::new(TorusGeometry::unit(1).unwrap(), 1);
        let u = FourierField::zeros(fs, true);
        assert!(matches!(
            ProjectionFamily::default().apply(&u, 0.5),
            Err(Error::InvalidLevel(_))
        ));
    }
}
