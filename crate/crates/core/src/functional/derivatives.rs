//! First and second derivatives of the cluster mean `μ` via pencil perturbation theory.

use std::sync::Arc;

use nalgebra::DVector;
use num_complex::Complex64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::laplacian::{power_weight, solve_spectrum, CMatrix, Contour, EigenSystem, SpectralPencil, CONTOUR_MARGIN};
use crate::torus::{analyze_into, synthesize, FourierField, FrequencySet, GridField, TorusGeometry};

const C0: Complex64 = Complex64::new(0.0, 0.0);
/// Probe steps of the internal finite-difference check.
pub const FD_STEPS: [f64; 2] = [1e-3, 5e-4];
const FD_SEED: u64 = 0xfd_c4ec;

/// Outcome of the internal first-order finite-difference check.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FdCheck {
    /// `|μ(f+εu) − μ(f) − ε⟨ψ,u⟩|` at the two probe steps.
    pub remainders: [f64; 2],
    /// `log₂` ratio of the remainders; 2 for a clean second-order remainder.
    pub slope: f64,
    /// Remainders at round-off level, in which case the slope carries no information.
    pub negligible: bool,
    pub consistent: bool,
}

/// Riesz representer `ψ_f` of the first derivative of `μ` at `f`.
#[derive(Debug, Clone)]
pub struct InfluenceField {
    pub field: FourierField,
    /// `∫ ψ_f f`.
    pub centering: f64,
    pub density: FourierField,
    pub contour: Contour,
    pub rank: usize,
    pub fd: Option<FdCheck>,
}

impl InfluenceField {
    /// `⟨ψ, u⟩ = ∫ ψ u`.
    pub fn pairing(&self, u: &FourierField) -> Result<f64> {
        Ok(u.resample(Arc::clone(self.field.freqs()))?.inner(&self.field)?.re)
    }

    /// `ψ(x)`.
    pub fn value(&self, x: &[f64]) -> f64 {
        self.field.evaluate_real(x)
    }

    /// `ψ − ∫ψf`.
    pub fn centered(&self) -> FourierField {
        let c = FourierField::constant(Arc::clone(self.field.freqs()), self.centering);
        self.field.sub(&c).expect("same lattice")
    }
}

/// Cluster indices of the enclosed eigenvalues.
fn cluster(eig: &EigenSystem, contour: &Contour) -> Result<Vec<usize>> {
    let inside = contour.enclosed(eig.values(), CONTOUR_MARGIN)?;
    if inside.is_empty() {
        return Err(Error::EmptyContour);
    }
    Ok(inside)
}

/// Grid resolution used for products of eigenfunctions with powers of `f`.
fn product_points(pencil: &SpectralPencil, band: usize) -> usize {
    let reach = band.max(pencil.density().cutoff());
    (pencil.oversample().max(2) * (2 * reach + 1)).max(2 * band + 2)
}

/// `μ` for a (not necessarily normalized) positive density field, requiring `expected` enclosed eigenvalues.
pub fn mu_at(density: &FourierField, alpha: f64, cutoff: usize, oversample: usize, contour: &Contour, expected: usize) -> Result<f64> {
    let pencil = Arc::new(SpectralPencil::from_field(density, alpha, cutoff, oversample)?);
    let eig = solve_spectrum(&pencil)?;
    let inside: Vec<usize> = (0..eig.len()).filter(|&i| contour.encloses(eig.value(i))).collect();
    if inside.len() != expected {
        return Err(Error::Instability(format!(
            "cluster rank changed from {expected} to {} under perturbation",
            inside.len()
        )));
    }
    Ok(inside.iter().map(|&i| eig.value(i)).sum::<f64>() / expected as f64)
}

/// Band-limited, mean-zero, real probe direction with `sup |u| = scale`.
pub fn probe_direction(geometry: &TorusGeometry, band: usize, scale: f64, seed: u64) -> Result<FourierField> {
    let freqs = FrequencySet::new(geometry.clone(), band);
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let coeffs: Vec<Complex64> = (0..freqs.len())
        .map(|_| Complex64::new(rng.random::<f64>() - 0.5, rng.random::<f64>() - 0.5))
        .collect();
    let mut u = FourierField::from_coeffs(Arc::clone(&freqs), coeffs, true)?;
    let z = freqs.zero_index();
    u = u.map_modes(|k| if k == z { C0 } else { Complex64::new(1.0, 0.0) }, true);
    let sup = synthesize(&u, 8 * (2 * band + 1))?.values().iter().map(|v| v.re.abs()).fold(0.0, f64::max);
    Ok(u.scale(scale / sup))
}

fn perturbed(f: &FourierField, u: &FourierField, eps: f64) -> Result<FourierField> {
    let reach = f.cutoff().max(u.cutoff());
    let fs = FrequencySet::new(f.geometry().clone(), reach);
    f.resample(Arc::clone(&fs))?.add(&u.resample(fs)?.scale(eps))
}

/// `ψ_f = (α/N) Σ_{i∈cluster} f^{α−1}(|∇g_i|² − λ_i|g_i|²)` with the internal FD check.
pub fn mu_first_derivative(eig: &EigenSystem, contour: &Contour) -> Result<InfluenceField> {
    let mut out = influence_unchecked(eig, contour)?;
    out.fd = Some(fd_check(eig, contour, &out)?);
    Ok(out)
}

/// As [`mu_first_derivative`] without the finite-difference probe.
pub fn influence_unchecked(eig: &EigenSystem, contour: &Contour) -> Result<InfluenceField> {
    let inside = cluster(eig, contour)?;
    let pencil = eig.pencil();
    let f = pencil.density();
    let alpha = pencil.alpha();
    let k = pencil.cutoff();
    let band = if alpha == 1.0 { 2 * k } else { 2 * k + f.cutoff() };
    let points = product_points(pencil, band);
    let d = pencil.freqs().dim();
    let n_grid = points.pow(d as u32);
    let mut sum = vec![0.0; n_grid];
    for &i in &inside {
        let lam = eig.value(i);
        let g = eig.eigenfunction(i)?;
        let gv = synthesize(&g, points)?;
        for (s, v) in sum.iter_mut().zip(gv.values()) {
            *s -= lam * v.norm_sqr();
        }
        for axis in 0..d {
            let fs = Arc::clone(g.freqs());
            let dg = g.map_modes(|m| Complex64::new(0.0, fs.omega(m)[axis]), false);
            for (s, v) in sum.iter_mut().zip(synthesize(&dg, points)?.values()) {
                *s += v.norm_sqr();
            }
        }
    }
    let scale = alpha / inside.len() as f64;
    let fgrid = synthesize(f, points)?;
    let values: Vec<Complex64> = sum
        .iter()
        .zip(fgrid.values())
        .map(|(s, fv)| {
            let w = if alpha == 1.0 { 1.0 } else { fv.re.powf(alpha - 1.0) };
            Complex64::new(scale * w * s, 0.0)
        })
        .collect();
    let grid = GridField::new(f.geometry().clone(), points, values)?;
    let field = analyze_into(&grid, FrequencySet::new(f.geometry().clone(), band))?;
    let psi_grid = synthesize(&field, points)?;
    let fg = synthesize(&f.resample(FrequencySet::new(f.geometry().clone(), f.cutoff()))?, points)?;
    let weight = fg.weight();
    let mass = fg.integrate().re;
    let centering = psi_grid.values().iter().zip(fg.values()).map(|(a, b)| a.re * b.re).sum::<f64>() * weight / mass;
    Ok(InfluenceField {
        field,
        centering,
        density: f.clone(),
        contour: *contour,
        rank: inside.len(),
        fd: None,
    })
}

fn fd_check(eig: &EigenSystem, contour: &Contour, psi: &InfluenceField) -> Result<FdCheck> {
    let pencil = eig.pencil();
    let f = pencil.density();
    let fmin = synthesize(f, product_points(pencil, f.cutoff()))?
        .values()
        .iter()
        .map(|v| v.re)
        .fold(f64::INFINITY, f64::min);
    let band = pencil.cutoff().clamp(1, 3);
    let u = probe_direction(f.geometry(), band, 0.5 * fmin.max(1e-3), FD_SEED)?;
    let mu0 = crate::spectral::cluster_mean(eig, contour)?;
    let slope_term = psi.pairing(&u)?;
    let mut remainders = [0.0; 2];
    for (r, &eps) in remainders.iter_mut().zip(&FD_STEPS) {
        let mu = mu_at(&perturbed(f, &u, eps)?, pencil.alpha(), pencil.cutoff(), pencil.oversample(), contour, psi.rank)?;
        *r = (mu - mu0 - eps * slope_term).abs();
    }
    let negligible = remainders[0] <= 1e-11 * mu0.abs().max(1.0);
    let slope = (remainders[0] / remainders[1]).log2();
    Ok(FdCheck {
        remainders,
        slope,
        negligible,
        consistent: negligible || (1.9..=2.1).contains(&slope),
    })
}

/// Hermitian matrix of `μ''` on the Fourier coefficients of a correction band.
#[derive(Debug, Clone)]
pub struct QuadraticForm {
    pub lattice: Arc<FrequencySet>,
    pub matrix: CMatrix,
}

impl QuadraticForm {
    pub fn cutoff(&self) -> usize {
        self.lattice.cutoff()
    }

    fn coeffs(&self, u: &FourierField) -> Result<DVector<Complex64>> {
        let r = u.resample(Arc::clone(&self.lattice))?;
        Ok(DVector::from_column_slice(r.coeffs()))
    }

    /// `Q[u, u] = uᴴ Q u` on the coefficients of `u`.
    pub fn evaluate(&self, u: &FourierField) -> Result<f64> {
        self.bilinear(u, u)
    }

    /// `Re(uᴴ Q v)`.
    pub fn bilinear(&self, u: &FourierField, v: &FourierField) -> Result<f64> {
        let (a, b) = (self.coeffs(u)?, self.coeffs(v)?);
        Ok((a.adjoint() * &self.matrix * b)[(0, 0)].re)
    }

    pub fn hermitian_defect(&self) -> f64 {
        let scale = self.matrix.norm().max(f64::MIN_POSITIVE);
        (&self.matrix - self.matrix.adjoint()).norm() / scale
    }
}

/// Matrices `(Gcᴴ X G)` for `X` with entries `(ω_k·ω_l)^p w_{k−l−m}`, for `p ∈ {1, 0}`.
fn shifted_blocks(freqs: &FrequencySet, w: &FourierField, shift: &[i64], gc: &CMatrix, g: &CMatrix) -> (CMatrix, CMatrix) {
    let p = freqs.len();
    let wf = w.freqs();
    let mut s = CMatrix::zeros(p, p);
    let mut m = CMatrix::zeros(p, p);
    let mut diff = vec![0i64; freqs.dim()];
    for k in 0..p {
        for l in 0..p {
            for (a, ((x, y), z)) in diff.iter_mut().zip(freqs.k(k).iter().zip(freqs.k(l)).zip(shift)) {
                *a = x - y - z;
            }
            if let Some(j) = wf.index_of(&diff) {
                let c = w.coeff(j);
                m[(k, l)] = c;
                s[(k, l)] = c * freqs.dot_omega(k, l);
            }
        }
    }
    let gh = gc.adjoint();
    (&gh * s * g, &gh * m * g)
}

/// `Q` with `Q[u,u] = lim (μ(f+εu) + μ(f−εu) − 2μ(f)) / (2ε²)` for `u` in the correction band.
pub fn mu_second_form(eig: &EigenSystem, contour: &Contour, correction_cutoff: usize) -> Result<QuadraticForm> {
    let pencil = eig.pencil();
    let k = pencil.cutoff();
    if correction_cutoff > k {
        return Err(Error::Config(format!(
            "correction cutoff {correction_cutoff} exceeds pencil cutoff {k}"
        )));
    }
    let inside = cluster(eig, contour)?;
    let n = inside.len();
    let p = eig.len();
    let lam = eig.values();
    let outside: Vec<usize> = (0..p).filter(|j| !inside.contains(j)).collect();
    for &i in &inside {
        for &j in &outside {
            if (lam[i] - lam[j]).abs() <= 1e-8 * (1.0 + lam[i].abs()) {
                return Err(Error::Conditioning(format!(
                    "cluster eigenvalue {} is degenerate with exterior eigenvalue {}",
                    lam[i], lam[j]
                )));
            }
        }
    }
    let f = pencil.density();
    let alpha = pencil.alpha();
    let os = pencil.oversample();
    let freqs = pencil.freqs();
    let lattice = FrequencySet::new(freqs.geometry().clone(), correction_cutoff);
    let pc = lattice.len();
    let w1 = power_weight(f, alpha - 1.0, alpha, 2 * k + correction_cutoff, os)?;
    let second = alpha * (alpha - 1.0) / 2.0;
    let w2 = if second != 0.0 {
        Some(power_weight(f, alpha - 2.0, second, 2 * k + 2 * correction_cutoff, os)?)
    } else {
        None
    };
    let g = eig.vectors();
    let mut gc = CMatrix::zeros(p, n);
    for (c, &i) in inside.iter().enumerate() {
        gc.set_column(c, &g.column(i));
    }

    // rows i ∈ cluster of Gᴴ S₁⁽ᵐ⁾ G and Gᴴ M₁⁽ᵐ⁾ G
    let blocks: Vec<(CMatrix, CMatrix)> = (0..pc).map(|m| shifted_blocks(freqs, &w1, lattice.k(m), &gc, g)).collect();
    // entries (j, i) for i ∈ cluster via conjugation of the −m blocks
    let neg = |m: usize| lattice.neg_index(m);
    let hvec = |a: &CMatrix, b: &CMatrix| -> CMatrix {
        CMatrix::from_fn(n, p, |r, j| a[(r, j)] - b[(r, j)] * ((lam[inside[r]] + lam[j]) / 2.0))
    };
    let h: Vec<CMatrix> = blocks.iter().map(|(a, b)| hvec(a, b)).collect();
    let at: Vec<CMatrix> = (0..pc).map(|m| blocks[neg(m)].0.map(|c| c.conj())).collect();
    let bt: Vec<CMatrix> = (0..pc).map(|m| blocks[neg(m)].1.map(|c| c.conj())).collect();
    let ht: Vec<CMatrix> = (0..pc).map(|m| hvec(&at[m], &bt[m])).collect();

    // diagonal second-order weight terms depend on m+n only
    let sum_lattice = FrequencySet::new(freqs.geometry().clone(), 2 * correction_cutoff);
    let t2: Vec<Complex64> = match &w2 {
        None => vec![C0; sum_lattice.len()],
        Some(w2) => (0..sum_lattice.len())
            .map(|t| {
                let (s2, m2) = shifted_blocks(freqs, w2, sum_lattice.k(t), &gc, &gc);
                (0..n).map(|r| s2[(r, r)] - m2[(r, r)] * lam[inside[r]]).sum()
            })
            .collect(),
    };

    let mut bil = CMatrix::zeros(pc, pc);
    let mut sum_k = vec![0i64; lattice.dim()];
    for mi in 0..pc {
        for ni in mi..pc {
            let (am, bm) = (&blocks[mi].0, &blocks[mi].1);
            let (an, bn) = (&blocks[ni].0, &blocks[ni].1);
            let mut total = C0;
            for r in 0..n {
                let li = lam[inside[r]];
                for j in 0..p {
                    let lj = lam[j];
                    total += -0.25
                        * (am[(r, j)] * bt[ni][(r, j)]
                            + an[(r, j)] * bt[mi][(r, j)]
                            + bm[(r, j)] * at[ni][(r, j)]
                            + bn[(r, j)] * at[mi][(r, j)]);
                    total += (0.25 * lj + 0.75 * li) * 0.5 * (bm[(r, j)] * bt[ni][(r, j)] + bn[(r, j)] * bt[mi][(r, j)]);
                }
                for &j in &outside {
                    total += 0.5 * (h[mi][(r, j)] * ht[ni][(r, j)] + h[ni][(r, j)] * ht[mi][(r, j)]) / (li - lam[j]);
                }
            }
            for (s, (a, b)) in sum_k.iter_mut().zip(lattice.k(mi).iter().zip(lattice.k(ni))) {
                *s = a + b;
            }
            total += t2[sum_lattice.index_of(&sum_k).expect("sum within doubled band")];
            bil[(mi, ni)] = total;
            bil[(ni, mi)] = total;
        }
    }
    let vol = freqs.geometry().volume();
    let z = lattice.zero_index();
    let scale = 1.0 / (n as f64 * vol * vol);
    let mut q = CMatrix::from_fn(pc, pc, |a, b| {
        if a == z || b == z {
            C0
        } else {
            bil[(b, neg(a))] * scale
        }
    });
    let form = QuadraticForm {
        lattice: Arc::clone(&lattice),
        matrix: q.clone(),
    };
    let defect = form.hermitian_defect();
    if defect > 1e-10 {
        return Err(Error::Numerical(format!("second-derivative matrix Hermitian defect {defect:.3e}")));
    }
    q = (&q + q.adjoint()) * Complex64::new(0.5, 0.0);
    Ok(QuadraticForm { lattice, matrix: q })
}

/// Diagonal second-derivative matrix at the uniform density (α = 1) for the cluster of `k_star`.
pub fn closed_form_second_uniform(k_star: &[i64], cutoff: usize, geometry: &TorusGeometry) -> Result<QuadraticForm> {
    if k_star.len() != geometry.dim() || k_star.iter().all(|&k| k == 0) {
        return Err(Error::Config(format!("k⋆ = {k_star:?} must be a nonzero mode of dimension {}", geometry.dim())));
    }
    let lattice = FrequencySet::new(geometry.clone(), cutoff);
    let w_star = geometry.omega(k_star);
    let norm2 = |w: &[f64]| w.iter().map(|x| x * x).sum::<f64>();
    let dot = |a: &[f64], b: &[f64]| a.iter().zip(b).map(|(x, y)| x * y).sum::<f64>();
    let star2 = norm2(&w_star);
    let mut q = CMatrix::zeros(lattice.len(), lattice.len());
    for idx in 0..lattice.len() {
        let k = lattice.k(idx);
        if k.iter().all(|&x| x == 0) || k.iter().zip(k_star).all(|(a, b)| *a == -2 * b) {
            continue;
        }
        let shifted: Vec<i64> = k.iter().zip(k_star).map(|(a, b)| a + b).collect();
        let w_k = lattice.omega(idx);
        let w_s = geometry.omega(&shifted);
        let denom = norm2(&w_s) - star2;
        if denom.abs() < 1e-12 * star2 {
            continue;
        }
        let gamma = dot(w_k, &w_star) * dot(w_k, &w_s) / denom;
        q[(idx, idx)] = Complex64::new(gamma, 0.0);
    }
    Ok(QuadraticForm { lattice, matrix: q })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::density::{make_density, DensityShape, DensitySpec};
    use crate::laplacian::assemble_pencil;
    use crate::spectral::select_contour;
    use std::f64::consts::PI;

    fn system(spec: &DensitySpec, cutoff: usize) -> (EigenSystem, Contour) {
        let f = make_density(spec).unwrap();
        let p = Arc::new(assemble_pencil(&f, 1.0, cutoff, 4).unwrap());
        let e = solve_spectrum(&p).unwrap();
        let c = select_contour(&e, 1, 10.0).unwrap();
        (e, c)
    }

    fn cosine(k: i64, a: f64) -> FourierField {
        let fs = FrequencySet::new(TorusGeometry::unit(1).unwrap(), k as usize);
        FourierField::from_real_fn(fs, 64, |x| a * (2.0 * PI * k as f64 * x[0]).cos()).unwrap()
    }

    fn second_difference(e: &EigenSystem, c: &Contour, u: &FourierField, eps: f64) -> f64 {
        let p = e.pencil();
        let mu = |s: f64| mu_at(&perturbed(p.density(), u, s).unwrap(), p.alpha(), p.cutoff(), p.oversample(), c, 2).unwrap();
        (mu(eps) + mu(-eps) - 2.0 * mu(0.0)) / (eps * eps)
    }

    #[test]
    fn uniform_influence_vanishes_after_centering() {
        let (e, c) = system(&DensitySpec::unit_1d(DensityShape::Uniform), 8);
        let psi = mu_first_derivative(&e, &c).unwrap();
        let centered = psi.centered();
        assert!(centered.coeffs().iter().all(|z| z.norm() < 1e-10), "{:?}", centered.coeffs());
    }

    #[test]
    fn influence_matches_central_difference() {
        let (e, c) = system(&DensitySpec::cosine_1d(1, 0.5), 16);
        let psi = mu_first_derivative(&e, &c).unwrap();
        let fd = psi.fd.unwrap();
        assert!(fd.consistent, "{fd:?}");
        let u = cosine(2, 1.0);
        let p = e.pencil();
        let eps = 1e-3;
        let mu = |s: f64| mu_at(&perturbed(p.density(), &u, s).unwrap(), 1.0, 16, 4, &c, 2).unwrap();
        let fd_value = (mu(eps) - mu(-eps)) / (2.0 * eps);
        let exact = psi.pairing(&u).unwrap();
        assert!((fd_value - exact).abs() <= 1e-4 * exact.abs(), "{fd_value} vs {exact}");
    }

    #[test]
    fn uniform_second_derivative_cross_oracle() {
        let (e, c) = system(&DensitySpec::unit_1d(DensityShape::Uniform), 16);
        let u = cosine(1, 1.0);
        let q = mu_second_form(&e, &c, 8).unwrap();
        assert!(q.hermitian_defect() < 1e-10);
        let pencil_value = q.evaluate(&u).unwrap();
        let closed = closed_form_second_uniform(&[1], 8, e.pencil().freqs().geometry()).unwrap();
        let closed_value = closed.evaluate(&u).unwrap();
        let fd = second_difference(&e, &c, &u, 1e-3) / 2.0;
        let target = 2.0 * PI * PI / 3.0;
        for v in [pencil_value, closed_value, fd] {
            assert!((v - target).abs() <= 1e-4 * target, "{pencil_value} {closed_value} {fd}");
        }
        let k1 = closed.lattice.index_of(&[1]).unwrap();
        assert!((closed.matrix[(k1, k1)].re - 8.0 * PI * PI / 3.0).abs() < 1e-10);
        let km = closed.lattice.index_of(&[-1]).unwrap();
        assert_eq!(closed.matrix[(km, km)].re, 0.0);
    }

    #[test]
    fn closed_form_matches_pencil_on_random_directions() {
        for kappa in [1.0, 2.0] {
            let spec = DensitySpec {
                side_lengths: vec![kappa],
                ..DensitySpec::unit_1d(DensityShape::Uniform)
            };
            let f = make_density(&spec).unwrap();
            let p = Arc::new(assemble_pencil(&f, 1.0, 12, 4).unwrap());
            let e = solve_spectrum(&p).unwrap();
            let c = select_contour(&e, 1, 0.5 * e.value(1)).unwrap();
            let q = mu_second_form(&e, &c, 5).unwrap();
            let closed = closed_form_second_uniform(&[1], 5, f.geometry()).unwrap();
            for seed in 0..5 {
                let u = probe_direction(f.geometry(), 5, 0.1, seed).unwrap();
                let a = q.evaluate(&u).unwrap();
                let b = closed.evaluate(&u).unwrap();
                assert!((a - b).abs() <= 1e-6 * b.abs(), "kappa {kappa}: {a} vs {b}");
            }
        }
    }

    #[test]
    fn second_form_matches_fd_off_uniform() {
        let (e, c) = system(&DensitySpec::cosine_1d(1, 0.5), 16);
        let q = mu_second_form(&e, &c, 4).unwrap();
        for seed in 0..3 {
            let u = probe_direction(e.pencil().freqs().geometry(), 4, 0.2, seed).unwrap();
            let a = q.evaluate(&u).unwrap();
            let fd = second_difference(&e, &c, &u, 2e-3) / 2.0;
            assert!((a - fd).abs() <= 1e-4 * a.abs().max(1e-3), "{a} vs {fd}");
        }
    }

    #[test]
    fn second_form_for_general_alpha() {
        let f = make_density(&DensitySpec::cosine_1d(1, 0.4)).unwrap();
        let p = Arc::new(assemble_pencil(&f, 0.5, 16, 4).unwrap());
        let e = solve_spectrum(&p).unwrap();
        let c = select_contour(&e, 1, 10.0).unwrap();
        let q = mu_second_form(&e, &c, 3).unwrap();
        let psi = mu_first_derivative(&e, &c).unwrap();
        assert!(psi.fd.unwrap().consistent, "{:?}", psi.fd);
        let u = probe_direction(f.geometry(), 3, 0.2, 9).unwrap();
        let fd = second_difference(&e, &c, &u, 2e-3) / 2.0;
        let a = q.evaluate(&u).unwrap();
        assert!((a - fd).abs() <= 1e-4 * a.abs().max(1e-3), "{a} vs {fd}");
    }

    #[test]
    fn rejects_oversized_correction_band() {
        let (e, c) = system(&DensitySpec::unit_1d(DensityShape::Uniform), 4);
        assert!(matches!(mu_second_form(&e, &c, 5), Err(Error::Config(_))));
    }

    #[test]
    fn derivatives_ignore_basis_rotation_inside_ties() {
        let spec = DensitySpec {
            side_lengths: vec![1.0, 1.0],
            ..DensitySpec::cosine_1d(1, 0.0)
        };
        let spec = DensitySpec {
            shape: DensityShape::Trig {
                terms: vec![crate::density::TrigTerm {
                    k: vec![1, 0],
                    cos: 0.5,
                    sin: 0.0,
                }],
            },
            ..spec
        };
        let f = make_density(&spec).unwrap();
        let p = Arc::new(assemble_pencil(&f, 1.0, 4, 4).unwrap());
        let e = solve_spectrum(&p).unwrap();
        let v = e.values();
        // first exactly tied pair above the constant mode
        let start = (1..v.len() - 1).find(|&i| (v[i + 1] - v[i]).abs() < 1e-9 * v[i]).unwrap();
        let c = select_contour(&e, start, 0.5 * (v[start] - v[start - 1]).min(v[start + 2] - v[start + 1])).unwrap();
        let theta: f64 = 0.7;
        let phase = Complex64::from_polar(1.0, 1.3);
        let u = CMatrix::from_row_slice(
            2,
            2,
            &[
                Complex64::new(theta.cos(), 0.0),
                -phase.conj() * theta.sin(),
                phase * theta.sin(),
                Complex64::new(theta.cos(), 0.0),
            ],
        );
        let r = e.remix(start..start + 2, &u).unwrap();
        assert!(r.orthonormality_defect() < 1e-12);
        let psi_a = influence_unchecked(&e, &c).unwrap();
        let psi_b = influence_unchecked(&r, &c).unwrap();
        let diff = psi_a.field.coeffs().iter().zip(psi_b.field.coeffs()).map(|(a, b)| (a - b).norm()).fold(0.0, f64::max);
        assert!(diff <= 1e-9, "ψ moved by {diff}");
        let qa = mu_second_form(&e, &c, 2).unwrap();
        let qb = mu_second_form(&r, &c, 2).unwrap();
        for seed in 0..4 {
            let w = probe_direction(f.geometry(), 2, 0.2, seed).unwrap();
            let (a, b) = (qa.evaluate(&w).unwrap(), qb.evaluate(&w).unwrap());
            assert!((a - b).abs() <= 1e-9 * a.abs().max(1.0), "{a} vs {b}");
        }
        assert!(e.remix(0..2, &u).is_err());
    }
}
