//! Integral functionals `T(f) = ∫ φ(f)` and their derivative kernels.

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::laplacian::DEFAULT_OVERSAMPLE;
use crate::torus::{analyze_into, synthesize, FourierField, FrequencySet};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum IntegralKind {
    /// `∫ f²`.
    Square,
    /// `∫ f³`.
    Cube,
    /// `−∫ f log f`.
    Entropy,
}

impl IntegralKind {
    pub fn phi(self, t: f64) -> f64 {
        match self {
            IntegralKind::Square => t * t,
            IntegralKind::Cube => t * t * t,
            IntegralKind::Entropy => -t * t.ln(),
        }
    }

    /// `φ^{(j)}(t) / j!` for `j = 1, 2, 3`.
    pub fn taylor(self, j: usize, t: f64) -> f64 {
        match (self, j) {
            (IntegralKind::Square, 1) => 2.0 * t,
            (IntegralKind::Square, 2) => 1.0,
            (IntegralKind::Square, _) => 0.0,
            (IntegralKind::Cube, 1) => 3.0 * t * t,
            (IntegralKind::Cube, 2) => 3.0 * t,
            (IntegralKind::Cube, _) => 1.0,
            (IntegralKind::Entropy, 1) => -t.ln() - 1.0,
            (IntegralKind::Entropy, 2) => -0.5 / t,
            (IntegralKind::Entropy, _) => 1.0 / (6.0 * t * t),
        }
    }

    /// Exact band of `φ^{(j)}(f)` for a field of cutoff `b`, if polynomial.
    fn exact_band(self, j: usize, b: usize) -> Option<usize> {
        match self {
            IntegralKind::Square => Some(if j == 1 { b } else { 0 }),
            IntegralKind::Cube => Some(match j {
                1 => 2 * b,
                2 => b,
                _ => 0,
            }),
            IntegralKind::Entropy => None,
        }
    }

    fn needs_positive(self) -> bool {
        matches!(self, IntegralKind::Entropy)
    }
}

impl std::str::FromStr for IntegralKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "square" => Ok(Self::Square),
            "cube" => Ok(Self::Cube),
            "entropy" => Ok(Self::Entropy),
            other => Err(Error::Config(format!("unknown integral functional {other:?}"))),
        }
    }
}

fn grid_points(cutoff: usize, band: usize) -> usize {
    (DEFAULT_OVERSAMPLE * (2 * cutoff.max(band) + 1)).max(2 * band + 2).max(16)
}

fn check_positive(kind: IntegralKind, values: &[Complex64]) -> Result<()> {
    if kind.needs_positive() {
        if let Some(v) = values.iter().find(|v| !(v.re > 0.0)) {
            return Err(Error::Domain(format!("entropy needs a positive density, found value {}", v.re)));
        }
    }
    Ok(())
}

/// `∫ φ(f)` by quadrature on an oversampled grid (exact for the polynomial kinds).
pub fn integral_functional(kind: IntegralKind, density: &FourierField) -> Result<f64> {
    let points = grid_points(density.cutoff(), 3 * density.cutoff());
    let grid = synthesize(density, points)?;
    check_positive(kind, grid.values())?;
    Ok(grid.values().iter().map(|v| kind.phi(v.re)).sum::<f64>() * grid.weight())
}

/// Kernel `φ^{(j)}(f)/j!` as a field; polynomial kinds are exact, entropy is truncated at `fallback_band`.
pub fn derivative_kernel(kind: IntegralKind, j: usize, density: &FourierField, fallback_band: usize) -> Result<FourierField> {
    if !(1..=3).contains(&j) {
        return Err(Error::Config(format!("derivative order {j} outside 1..=3")));
    }
    let b = density.cutoff();
    let band = kind.exact_band(j, b).unwrap_or(fallback_band);
    let points = grid_points(b, band.max(b));
    let grid = synthesize(density, points)?;
    check_positive(kind, grid.values())?;
    let mapped = grid.map(|v| Complex64::new(kind.taylor(j, v.re), 0.0));
    analyze_into(&mapped, FrequencySet::new(density.geometry().clone(), band))
}

/// `ψ_f = φ′(f)`, the influence function of `∫φ(f)`.
pub fn integral_influence(kind: IntegralKind, density: &FourierField, fallback_band: usize) -> Result<FourierField> {
    derivative_kernel(kind, 1, density, fallback_band)
}

/// `∫ ψ f` and `∫ ψ² f − (∫ ψ f)²` on a joint grid.
pub fn influence_moments(psi: &FourierField, density: &FourierField) -> Result<(f64, f64)> {
    let reach = psi.cutoff().max(density.cutoff());
    let points = (DEFAULT_OVERSAMPLE * (2 * reach + 1)).max(16);
    let p = synthesize(&psi.resample(FrequencySet::new(psi.geometry().clone(), psi.cutoff()))?, points)?;
    let f = synthesize(density, points)?;
    let w = f.weight();
    let mass = f.integrate().re;
    let (mut m1, mut m2) = (0.0, 0.0);
    for (a, b) in p.values().iter().zip(f.values()) {
        m1 += a.re * b.re;
        m2 += a.re * a.re * b.re;
    }
    let m1 = m1 * w / mass;
    let m2 = m2 * w / mass;
    Ok((m1, (m2 - m1 * m1).max(0.0)))
}
