use std::f64::consts::PI;
use std::sync::Arc;

use num_complex::Complex64;
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use wlap_core::density::{make_density, sample, DensityModel, DensityShape, DensitySpec, TrigTerm};
use wlap_core::functional::{
    derivative_kernel, hoeffding_terms, influence_unchecked, integral_functional, mu_at, mu_first_derivative,
    mu_second_form, probe_direction, ustat, Form, IntegralKind, UStatKernel, UStatMode,
};
use wlap_core::harness::fit_points;
use wlap_core::laplacian::{assemble_pencil, solve_spectrum, CMatrix, EigenSystem};
use wlap_core::spectral::select_contour;
use wlap_core::torus::{synthesize, FourierField, FrequencySet, ProjectionFamily, TorusGeometry};

const STEPS: [f64; 3] = [1e-2, 5e-3, 2.5e-3];

fn cosine() -> DensityModel {
    make_density(&DensitySpec::cosine_1d(1, 0.5)).unwrap()
}

fn on_common_lattice(a: &FourierField, b: &FourierField) -> (FourierField, FourierField) {
    let fs = FrequencySet::new(a.geometry().clone(), a.cutoff().max(b.cutoff()));
    (a.resample(Arc::clone(&fs)).unwrap(), b.resample(fs).unwrap())
}

/// `∫ k u²` by quadrature on a grid fine enough to be exact for the band-limited factors.
fn weighted_square(k: &FourierField, u: &FourierField) -> f64 {
    let points = 4 * (k.cutoff() + 2 * u.cutoff() + 1);
    let kg = synthesize(k, points).unwrap();
    let ug = synthesize(u, points).unwrap();
    kg.values().iter().zip(ug.values()).map(|(a, b)| a.re * b.re * b.re).sum::<f64>() * kg.weight()
}

fn remainder_slope(remainder: impl Fn(f64) -> f64) -> (f64, Vec<f64>) {
    let r: Vec<f64> = STEPS.iter().map(|&e| remainder(e).abs()).collect();
    let points: Vec<(f64, f64)> = STEPS.iter().copied().zip(r.iter().copied()).collect();
    (fit_points(&points).unwrap().slope, r)
}

#[test]
fn integral_functionals_have_cubic_taylor_remainder() {
    let f = cosine();
    for kind in [IntegralKind::Cube, IntegralKind::Entropy] {
        for seed in 0..3 {
            let u = probe_direction(f.geometry(), 3, 0.3, seed).unwrap();
            let t0 = integral_functional(kind, f.field()).unwrap();
            let k1 = derivative_kernel(kind, 1, f.field(), 16).unwrap();
            let k2 = derivative_kernel(kind, 2, f.field(), 16).unwrap();
            let (k1c, uc) = on_common_lattice(&k1, &u);
            let first = k1c.inner(&uc).unwrap().re;
            let second = weighted_square(&k2, &u);
            let (slope, r) = remainder_slope(|e| {
                let (fc, uc) = on_common_lattice(f.field(), &u);
                let moved = fc.add(&uc.scale(e)).unwrap();
                integral_functional(kind, &moved).unwrap() - t0 - e * first - e * e * second
            });
            assert!((2.7..=3.3).contains(&slope), "{kind:?} seed {seed}: slope {slope}, remainders {r:?}");
        }
    }
}

#[test]
fn eigenvalue_functional_has_cubic_taylor_remainder() {
    let f = cosine();
    let eig = solve_spectrum(&Arc::new(assemble_pencil(&f, 1.0, 16, 4).unwrap())).unwrap();
    let contour = select_contour(&eig, 1, 30.0).unwrap();
    let mu0 = mu_at(f.field(), 1.0, 16, 4, &contour, 2).unwrap();
    let psi = mu_first_derivative(&eig, &contour).unwrap();
    let q = mu_second_form(&eig, &contour, 4).unwrap();
    for seed in 0..3 {
        let u = probe_direction(f.geometry(), 4, 0.3, seed).unwrap();
        let first = psi.pairing(&u).unwrap();
        let second = q.evaluate(&u).unwrap();
        let (slope, r) = remainder_slope(|e| {
            let (fc, uc) = on_common_lattice(f.field(), &u);
            let moved = fc.add(&uc.scale(e)).unwrap();
            mu_at(&moved, 1.0, 16, 4, &contour, 2).unwrap() - mu0 - e * first - e * e * second
        });
        assert!((2.7..=3.3).contains(&slope), "seed {seed}: slope {slope}, remainders {r:?}");
    }
}

fn random_hermitian(p: usize, rng: &mut ChaCha8Rng) -> CMatrix {
    let a = CMatrix::from_fn(p, p, |_, _| Complex64::new(rng.random::<f64>() - 0.5, rng.random::<f64>() - 0.5));
    (&a + a.adjoint()) * Complex64::new(0.5, 0.0)
}

fn random_symmetric_tensor(p: usize, rng: &mut ChaCha8Rng) -> Vec<Complex64> {
    let raw: Vec<Complex64> = (0..p * p * p).map(|_| Complex64::new(rng.random::<f64>() - 0.5, rng.random::<f64>() - 0.5)).collect();
    let at = |a: usize, b: usize, c: usize| raw[(a * p + b) * p + c];
    let mut t = Vec::with_capacity(p * p * p);
    for a in 0..p {
        for b in 0..p {
            for c in 0..p {
                let s = at(a, b, c) + at(a, c, b) + at(b, a, c) + at(b, c, a) + at(c, a, b) + at(c, b, a);
                t.push(s / 6.0);
            }
        }
    }
    t
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(16))]

    #[test]
    fn fast_and_naive_ustats_agree(seed in any::<u64>(), cubic in any::<bool>(), large in any::<bool>(), centered in any::<bool>(), level in 7.0f64..20.0) {
        let f = cosine();
        let g = f.geometry().clone();
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let lattice = FrequencySet::new(g.clone(), 3);
        let form = if cubic {
            Form::Tensor3 { data: random_symmetric_tensor(lattice.len(), &mut rng), lattice }
        } else {
            Form::Matrix { matrix: random_hermitian(lattice.len(), &mut rng), lattice }
        };
        let mut kernel = UStatKernel::single(form, level, ProjectionFamily::default(), &g).unwrap();
        if centered {
            kernel = kernel.centered(f.field()).unwrap();
        }
        let n = if large { 30 } else { 10 };
        let x = sample(&f, n, seed).unwrap();
        let fast = ustat(&kernel, &x, UStatMode::Fast).unwrap();
        let naive = ustat(&kernel, &x, UStatMode::Naive).unwrap();
        prop_assert!((fast - naive).abs() <= 1e-10 * naive.abs().max(1.0), "{fast} vs {naive}");
    }

    #[test]
    fn influence_and_hessian_ignore_rotations_inside_a_tie(theta in 0.0f64..PI, phase in 0.0f64..(2.0 * PI)) {
        let spec = DensitySpec {
            side_lengths: vec![1.0, 1.0],
            ..DensitySpec::unit_1d(DensityShape::Trig { terms: vec![TrigTerm { k: vec![1, 0], cos: 0.5, sin: 0.0 }] })
        };
        let f = make_density(&spec).unwrap();
        let e: EigenSystem = solve_spectrum(&Arc::new(assemble_pencil(&f, 1.0, 4, 4).unwrap())).unwrap();
        let v = e.values();
        let start = (1..v.len() - 1).find(|&i| (v[i + 1] - v[i]).abs() < 1e-9 * v[i]).unwrap();
        let gap = 0.5 * (v[start] - v[start - 1]).min(v[start + 2] - v[start + 1]);
        let c = select_contour(&e, start, gap).unwrap();
        let z = Complex64::from_polar(1.0, phase);
        let u = CMatrix::from_row_slice(2, 2, &[
            Complex64::new(theta.cos(), 0.0), -z.conj() * theta.sin(),
            z * theta.sin(), Complex64::new(theta.cos(), 0.0),
        ]);
        let r = e.remix(start..start + 2, &u).unwrap();
        let a = influence_unchecked(&e, &c).unwrap();
        let b = influence_unchecked(&r, &c).unwrap();
        let moved = a.field.coeffs().iter().zip(b.field.coeffs()).map(|(x, y)| (x - y).norm()).fold(0.0, f64::max);
        prop_assert!(moved <= 1e-9, "ψ moved by {moved}");
        let qa = mu_second_form(&e, &c, 2).unwrap();
        let qb = mu_second_form(&r, &c, 2).unwrap();
        let w = probe_direction(f.geometry(), 2, 0.2, (theta * 1e6) as u64).unwrap();
        let (x, y) = (qa.evaluate(&w).unwrap(), qb.evaluate(&w).unwrap());
        prop_assert!((x - y).abs() <= 1e-9 * x.abs().max(1.0), "{x} vs {y}");
    }
}

/// `E b_1²` and `E b_2²` for `∫ π_D δ_x π_D δ_y` centered at `f = 1 + a cos 2πx`, by grid quadrature.
fn hoeffding_second_moments(a: f64, level: f64) -> (f64, f64) {
    let g = TorusGeometry::unit(1).unwrap();
    let fam = ProjectionFamily::default();
    let fs = fam.band(&g, level);
    let sq: Vec<(f64, f64)> = (0..fs.len()).map(|i| (fs.k(i)[0] as f64, fam.multiplier(&fs, i, level).powi(2))).collect();
    let kernel = |t: f64| sq.iter().map(|&(k, m)| m * (2.0 * PI * k * t).cos()).sum::<f64>();
    let coeff = |k: f64| if k == 0.0 { 1.0 } else if k.abs() == 1.0 { a / 2.0 } else { 0.0 };
    let smooth = |x: f64| sq.iter().map(|&(k, m)| m * coeff(k) * (2.0 * PI * k * x).cos()).sum::<f64>();
    let m = 256;
    let xs: Vec<f64> = (0..m).map(|i| i as f64 / m as f64).collect();
    let dens: Vec<f64> = xs.iter().map(|x| 1.0 + a * (2.0 * PI * x).cos()).collect();
    let gv: Vec<f64> = xs.iter().map(|&x| smooth(x)).collect();
    let c: f64 = gv.iter().zip(&dens).map(|(g, f)| g * f).sum::<f64>() / m as f64;
    let e1 = gv.iter().zip(&dens).map(|(g, f)| (g - c).powi(2) * f).sum::<f64>() / m as f64;
    let mut e2 = 0.0;
    for i in 0..m {
        for j in 0..m {
            let b = kernel(xs[i] - xs[j]) - gv[i] - gv[j] + c;
            e2 += b * b * dens[i] * dens[j];
        }
    }
    (e1, e2 / (m * m) as f64)
}

#[test]
fn hoeffding_components_have_the_predicted_variance() {
    let f = cosine();
    let level = 15.0;
    let n = 10;
    let reps = 2000;
    let one = FourierField::constant(FrequencySet::new(f.geometry().clone(), 0), 1.0);
    let kernel = UStatKernel::single(Form::Product { order: 2, weight: one }, level, ProjectionFamily::default(), f.geometry()).unwrap();
    let (mut first, mut second) = (Vec::with_capacity(reps), Vec::with_capacity(reps));
    for r in 0..reps {
        let x = sample(&f, n, 1000 + r as u64).unwrap();
        let h = hoeffding_terms(&kernel, &x, f.field()).unwrap();
        assert!(h.residual() <= 1e-10);
        first.push(h.components[0]);
        second.push(h.components[1]);
    }
    let (e1, e2) = hoeffding_second_moments(0.5, level);
    let predicted = [e1 / n as f64, e2 / (n * (n - 1) / 2) as f64];
    for (j, v) in [first, second].iter().enumerate() {
        let mean = v.iter().sum::<f64>() / reps as f64;
        let var = v.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (reps - 1) as f64;
        let ratio = var / predicted[j];
        assert!((ratio - 1.0).abs() <= 0.25, "order {}: empirical {var:.5e} vs {:.5e} (ratio {ratio:.3})", j + 1, predicted[j]);
    }
}
