//! The `D_q` angle between two finite-rank projectors.

use nalgebra::DVector;
use num_complex::Complex64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::laplacian::{CMatrix, ProjectorRep};
use crate::torus::{synthesize, FourierField, FrequencySet};

const RESTARTS: usize = 8;
const TOLERANCE: f64 = 1e-8;
const MAX_ITER: usize = 500;
/// Relative width of the certified bracket above which a finite-q term is flagged.
const BRACKET_FLAG: f64 = 0.05;

/// Value of one term `‖(1 − Π′) Π‖_{L²→L^q}` with its certificate.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AngleTerm {
    pub value: f64,
    /// Upper bound (equals `value` for q = 2 and q = ∞).
    pub upper: f64,
    pub restarts: usize,
    pub converged: bool,
}

#[derive(Debug, Clone, PartialEq)]
pub struct AngleReport {
    /// Exponent; `f64::INFINITY` encodes q = ∞.
    pub q: f64,
    pub value: f64,
    pub forward: AngleTerm,
    pub backward: AngleTerm,
    /// Set when a finite-q bracket is wider than 5%.
    pub flagged: bool,
}

/// Grid resolution per axis used for L^q and L^∞ norms on a lattice.
pub fn angle_grid_points(freqs: &FrequencySet) -> usize {
    (4 * (2 * freqs.cutoff() + 1)).max(32)
}

/// `D_q(Π, Π′)` for `q ∈ [2, ∞]`, with L^q norms taken on a `points^d` grid.
pub fn angle_dq(p: &ProjectorRep, p_prime: &ProjectorRep, q: f64, points: Option<usize>) -> Result<AngleReport> {
    if !p.freqs().same_lattice(p_prime.freqs()) {
        return Err(Error::Incompatible("projectors live on different lattices".into()));
    }
    if !(q >= 2.0) {
        return Err(Error::Config(format!("angle exponent q = {q} must lie in [2, ∞]")));
    }
    let points = points.unwrap_or_else(|| angle_grid_points(p.freqs()));
    let forward = term(p, p_prime, q, points)?;
    let backward = term(p_prime, p, q, points)?;
    let wide = |t: &AngleTerm| t.upper > t.value * (1.0 + BRACKET_FLAG) && t.upper > 1e-12;
    Ok(AngleReport {
        q,
        value: forward.value + backward.value,
        flagged: q.is_finite() && q > 2.0 && (wide(&forward) || wide(&backward) || !forward.converged || !backward.converged),
        forward,
        backward,
    })
}

/// `‖(1 − Π₂) Π₁‖_{L²→L^q}`.
///
/// With `Π₁ = G₁H₁ᴴ` and `H₁ = QR`, the operator is `X Rᴴ Qᴴ` where
/// `X = G₁ − G₂ (H₂ᴴ G₁)`, so the norm is a sup over unit `y ∈ C^N` of the
/// L^q norm of the field with coordinates `X Rᴴ y / √vol`.
fn term(p1: &ProjectorRep, p2: &ProjectorRep, q: f64, points: usize) -> Result<AngleTerm> {
    let n = p1.rank();
    if n == 0 {
        return Ok(AngleTerm { value: 0.0, upper: 0.0, restarts: 0, converged: true });
    }
    let x = p1.primal() - p2.primal() * (p2.dual().adjoint() * p1.primal());
    let r = p1.dual().clone().qr().r();
    let b = &x * r.adjoint();
    let svd = b.clone().svd(false, true);
    let (top, top_idx) = svd
        .singular_values
        .iter()
        .enumerate()
        .fold((0.0f64, 0usize), |(m, mi), (i, &s)| if s > m { (s, i) } else { (m, mi) });
    if q == 2.0 {
        return Ok(AngleTerm { value: top, upper: top, restarts: 0, converged: true });
    }
    let freqs = p1.freqs();
    let vol = freqs.geometry().volume();
    let cols = column_values(freqs, &b, points, vol)?;
    let weight = vol / cols.first().map_or(1, |c| c.len()) as f64;
    let sup = sup_section(&cols);
    if q.is_infinite() {
        return Ok(AngleTerm { value: sup, upper: sup, restarts: 0, converged: true });
    }
    let upper = sup.powf(1.0 - 2.0 / q) * top.powf(2.0 / q);
    let v_t = svd.v_t.expect("requested right singular vectors");
    let warm: DVector<Complex64> = v_t.row(top_idx).adjoint();
    let mut rng = ChaCha8Rng::seed_from_u64(0x5eed_a9e1);
    let mut best = 0.0f64;
    let mut all_converged = true;
    for restart in 0..RESTARTS {
        let start = if restart == 0 {
            warm.clone()
        } else {
            DVector::from_fn(b.ncols(), |_, _| Complex64::new(rng.random::<f64>() - 0.5, rng.random::<f64>() - 0.5))
        };
        let (val, ok) = maximize_lq(&cols, weight, q, start);
        best = best.max(val);
        all_converged &= ok;
    }
    Ok(AngleTerm {
        value: best,
        upper: upper.max(best),
        restarts: RESTARTS,
        converged: all_converged,
    })
}

/// Grid values `v_i(x)` of each column of `b`, as `cols[i][x]`.
fn column_values(freqs: &std::sync::Arc<FrequencySet>, b: &CMatrix, points: usize, vol: f64) -> Result<Vec<Vec<Complex64>>> {
    (0..b.ncols())
        .map(|i| {
            let f = FourierField::from_coeffs(freqs.clone(), b.column(i).iter().map(|c| c * vol.sqrt()).collect(), false)?;
            Ok(synthesize(&f, points)?.values().to_vec())
        })
        .collect()
}

fn sup_section(cols: &[Vec<Complex64>]) -> f64 {
    let g = cols[0].len();
    (0..g)
        .map(|x| cols.iter().map(|c| c[x].norm_sqr()).sum::<f64>())
        .fold(0.0, f64::max)
        .sqrt()
}

/// Fixed-point ascent of `y ↦ ‖Σ y_i v_i‖_q` on the unit sphere.
fn maximize_lq(cols: &[Vec<Complex64>], weight: f64, q: f64, start: DVector<Complex64>) -> (f64, bool) {
    let g = cols[0].len();
    let mut y = start.normalize();
    let mut prev = 0.0f64;
    for _ in 0..MAX_ITER {
        let mut grad = DVector::<Complex64>::zeros(y.len());
        let mut total = 0.0;
        for x in 0..g {
            let s: Complex64 = cols.iter().zip(y.iter()).map(|(c, yi)| c[x] * yi).sum();
            let a = s.norm();
            if a == 0.0 {
                continue;
            }
            total += a.powf(q);
            let scale = a.powf(q - 2.0) * s;
            for (gi, c) in grad.iter_mut().zip(cols) {
                *gi += scale * c[x].conj();
            }
        }
        let val = (weight * total).powf(1.0 / q);
        let gn = grad.norm();
        if gn == 0.0 {
            return (val, true);
        }
        y = grad / Complex64::new(gn, 0.0);
        if (val - prev).abs() <= TOLERANCE * val.max(f64::MIN_POSITIVE) {
            return (val, true);
        }
        prev = val;
    }
    (prev, false)
}
