//! Lebesgue, Bessel-potential Sobolev and dyadic Besov norms of Fourier fields.

use serde::{Deserialize, Serialize};

use super::field::{synthesize, FourierField};
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub enum NormSpec {
    Lp(f64),
    /// `‖Λ^t u‖_{L^p}` with `Λ = (1 - Δ)^{1/2}`.
    Sobolev { t: f64, p: f64 },
    /// Dyadic shells `2^j ≤ (1+|ω|²)^{1/2} < 2^{j+1}`.
    Besov { s: f64, p: f64, q: f64 },
}

impl NormSpec {
    fn validate(&self) -> Result<()> {
        let check = |name: &str, v: f64| {
            if v >= 1.0 && !v.is_nan() {
                Ok(())
            } else {
                Err(Error::InvalidSpec(format!("{name} = {v} must lie in [1, ∞]")))
            }
        };
        match *self {
            NormSpec::Lp(p) => check("p", p),
            NormSpec::Sobolev { t, p } => {
                if !t.is_finite() {
                    return Err(Error::InvalidSpec(format!("smoothness {t} is not finite")));
                }
                check("p", p)
            }
            NormSpec::Besov { s, p, q } => {
                if !s.is_finite() {
                    return Err(Error::InvalidSpec(format!("smoothness {s} is not finite")));
                }
                check("p", p)?;
                check("q", q)
            }
        }
    }
}

/// Quadrature `L^p` norm on a `points^d` grid.
pub fn grid_lp_norm(field: &FourierField, p: f64, points: usize) -> Result<f64> {
    let g = synthesize(field, points)?;
    if p.is_infinite() {
        return Ok(g.values().iter().map(|v| v.norm()).fold(0.0, f64::max));
    }
    let w = g.weight();
    let s: f64 = g.values().iter().map(|v| v.norm().powf(p)).sum();
    Ok((s * w).powf(1.0 / p))
}

/// Exact `H^t` norm `(vol⁻¹ Σ (1+λ_k)^t |u_k|²)^{1/2}`.
pub fn sobolev2_norm(field: &FourierField, t: f64) -> f64 {
    let fs = field.freqs();
    let s: f64 = field
        .coeffs()
        .iter()
        .enumerate()
        .map(|(i, c)| (1.0 + fs.lambda(i)).powf(t) * c.norm_sqr())
        .sum();
    (s / field.geometry().volume()).sqrt()
}

/// Shell index of a mode with `λ_k`; boundary ties go to the lower shell.
pub fn besov_shell(lambda: f64) -> usize {
    let m = (1.0 + lambda).sqrt();
    let l = m.log2();
    let j = l.floor();
    if j >= 1.0 && (l - j).abs() < 1e-12 {
        (j - 1.0) as usize
    } else {
        j.max(0.0) as usize
    }
}

pub fn compute_norm(field: &FourierField, spec: NormSpec, grid_resolution: usize) -> Result<f64> {
    spec.validate()?;
    if field.coeffs().iter().any(|c| !c.re.is_finite() || !c.im.is_finite()) {
        return Err(Error::InvalidSpec("field has non-finite coefficients".into()));
    }
    match spec {
        NormSpec::Lp(2.0) => Ok(field.l2_norm()),
        NormSpec::Lp(p) => grid_lp_norm(field, p, grid_resolution),
        NormSpec::Sobolev { t, p: 2.0 } => Ok(sobolev2_norm(field, t)),
        NormSpec::Sobolev { t, p } => {
            let fs = field.freqs().clone();
            let lifted = field.map_modes(
                |i| num_complex::Complex64::new((1.0 + fs.lambda(i)).powf(t / 2.0), 0.0),
                true,
            );
            grid_lp_norm(&lifted, p, grid_resolution)
        }
        NormSpec::Besov { s, p, q } => {
            let fs = field.freqs().clone();
            let max_shell = fs.lambdas().iter().map(|&l| besov_shell(l)).max().unwrap_or(0);
            let mut total = 0.0f64;
            for j in 0..=max_shell {
                let block = field.map_modes(
                    |i| {
                        let inside = besov_shell(fs.lambda(i)) == j;
                        num_complex::Complex64::new(if inside { 1.0 } else { 0.0 }, 0.0)
                    },
                    true,
                );
                let bn = if p == 2.0 {
                    block.l2_norm()
                } else {
                    grid_lp_norm(&block, p, grid_resolution)?
                };
                let term = 2f64.powf(j as f64 * s) * bn;
                if q.is_infinite() {
                    total = total.max(term);
                } else {
                    total += term.powf(q);
                }
            }
            Ok(if q.is_infinite() { total } else { total.powf(1.0 / q) })
        }
    }
}

/// `H^{-1}` norm, used for density-perturbation sizes.
pub fn h_minus_one_norm(field: &FourierField) -> f64 {
    sobolev2_norm(field, -1.0)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::torus::{FrequencySet, TorusGeometry};
    use std::f64::consts::PI;
    use std::sync::Arc;

    fn cos_field() -> FourierField {
        let fs = FrequencySet::new(TorusGeometry::unit(1).unwrap(), 3);
        FourierField::from_real_fn(fs, 16, |x| (2.0 * PI * x[0]).cos()).unwrap()
    }

    #[test]
    fn cosine_l2_and_h1() {
        let u = cos_field();
        let h0 = compute_norm(&u, NormSpec::Sobolev { t: 0.0, p: 2.0 }, 16).unwrap();
        assert!((h0 - 0.5f64.sqrt()).abs() < 1e-12);
        let h1 = compute_norm(&u, NormSpec::Sobolev { t: 1.0, p: 2.0 }, 16).unwrap();
        let expect = ((1.0 + 4.0 * PI * PI) / 2.0).sqrt();
        assert!((h1 - expect).abs() < 1e-12);
        assert!((h1 - 4.4988).abs() < 1e-4);
    }

    #[test]
    fn zero_field_has_zero_norms() {
        let fs = FrequencySet::new(TorusGeometry::unit(2).unwrap(), 2);
        let u = FourierField::zeros(Arc::clone(&fs), true);
        for spec in [
            NormSpec::Lp(1.0),
            NormSpec::Lp(f64::INFINITY),
            NormSpec::Sobolev { t: 1.5, p: 4.0 },
            NormSpec::Besov { s: 1.0, p: 2.0, q: 1.0 },
            NormSpec::Besov { s: 2.0, p: f64::INFINITY, q: f64::INFINITY },
        ] {
            assert_eq!(compute_norm(&u, spec, 8).unwrap(), 0.0);
        }
    }

    #[test]
    fn invalid_exponent() {
        let u = cos_field();
        assert!(matches!(compute_norm(&u, NormSpec::Lp(0.5), 16), Err(Error::InvalidSpec(_))));
        assert!(matches!(
            compute_norm(&u, NormSpec::Besov { s: 1.0, p: 2.0, q: 0.9 }, 16),
            Err(Error::InvalidSpec(_))
        ));
    }

    #[test]
    fn grid_sobolev_matches_exact_at_p2() {
        let u = cos_field();
        let exact = sobolev2_norm(&u, 1.0);
        let fs = u.freqs().clone();
        let lifted = u.map_modes(
            |i| num_complex::Complex64::new((1.0 + fs.lambda(i)).sqrt(), 0.0),
            true,
        );
        let grid = grid_lp_norm(&lifted, 2.0, 16).unwrap();
        assert!((exact - grid).abs() < 1e-12);
    }

    #[test]
    fn shells() {
        assert_eq!(besov_shell(0.0), 0);
        assert_eq!(besov_shell(2.0), 0); // modulus √3
        assert_eq!(besov_shell(3.0), 0); // modulus exactly 2 → lower shell
        assert_eq!(besov_shell(4.0 * PI * PI), 2); // modulus ≈ 6.36
    }

    #[test]
    fn besov_2_2_is_comparable_to_sobolev() {
        let u = cos_field();
        let b = compute_norm(&u, NormSpec::Besov { s: 1.0, p: 2.0, q: 2.0 }, 16).unwrap();
        let h = sobolev2_norm(&u, 1.0);
        assert!(b / h > 0.5 && b / h < 2.0);
    }
}
