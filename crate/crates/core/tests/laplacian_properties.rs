use std::sync::Arc;

use nalgebra::DMatrix;
use num_complex::Complex64;
use proptest::prelude::*;
use wlap_core::density::{make_density, DensityModel, DensityShape, DensitySpec, TrigTerm};
use wlap_core::laplacian::{
    assemble_pencil, contour_projector, resolvent_apply, solve_spectrum, Contour, EigenSystem, SpectralPencil,
};
use wlap_core::spectral::spectral_projector;
use wlap_core::torus::{FourierField, FrequencySet};

const CUTOFF: usize = 10;

fn density() -> impl Strategy<Value = DensityModel> {
    let term = (1i64..4, -1.0f64..1.0, -1.0f64..1.0);
    prop::collection::vec(term, 1..4).prop_map(|terms| {
        let share = 0.7 / terms.len() as f64;
        let terms = terms
            .into_iter()
            .map(|(k, c, s)| TrigTerm {
                k: vec![k],
                cos: 0.5 * share * c,
                sin: 0.5 * share * s,
            })
            .collect();
        make_density(&DensitySpec::unit_1d(DensityShape::Trig { terms })).unwrap()
    })
}

fn system(f: &DensityModel, alpha: f64) -> EigenSystem {
    solve_spectrum(&Arc::new(assemble_pencil(f, alpha, CUTOFF, 4).unwrap())).unwrap()
}

fn min_eigenvalue(a: &DMatrix<Complex64>) -> f64 {
    a.clone().symmetric_eigenvalues().iter().copied().fold(f64::INFINITY, f64::min)
}

/// Circles about the mean of `values[range]` that stay clear of every other eigenvalue.
fn contours_around(values: &[f64], range: std::ops::Range<usize>) -> Option<(Contour, Contour)> {
    let inner = &values[range.clone()];
    let center = inner.iter().sum::<f64>() / inner.len() as f64;
    let half = inner.iter().map(|v| (v - center).abs()).fold(0.0, f64::max);
    let outside = values
        .iter()
        .enumerate()
        .filter(|(i, _)| !range.contains(i))
        .map(|(_, v)| (v - center).abs())
        .fold(f64::INFINITY, f64::min);
    let room = outside - half;
    if room < 1.0 {
        return None;
    }
    let a = Contour::circle(center, half + 0.35 * room).ok()?;
    let b = Contour::new(Complex64::new(center + 0.1 * room, 0.0), half + 0.5 * room, 96).ok()?;
    Some((a, b))
}

fn test_field(fs: Arc<FrequencySet>, seed: u64) -> FourierField {
    let coeffs = (0..fs.len())
        .map(|i| {
            let t = (seed as f64 + 1.0) * (i as f64 + 0.5);
            Complex64::new(t.sin(), (1.7 * t).cos()) / (1.0 + i.abs_diff(fs.zero_index()) as f64)
        })
        .collect();
    FourierField::from_coeffs(fs, coeffs, false).unwrap()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(24))]

    #[test]
    fn pencil_is_hermitian_and_semidefinite(f in density(), alpha in 0.25f64..2.0) {
        let p = assemble_pencil(&f, alpha, CUTOFF, 4).unwrap();
        prop_assert!(p.hermitian_defect() <= 1e-12);
        let m = p.mass();
        prop_assert!(min_eigenvalue(&((m + m.adjoint()) * Complex64::new(0.5, 0.0))) > 0.0);
        let s = p.stiffness();
        let s_min = min_eigenvalue(&((s + s.adjoint()) * Complex64::new(0.5, 0.0)));
        prop_assert!(s_min >= -1e-10 * s.norm(), "stiffness eigenvalue {s_min}");
    }

    #[test]
    fn eigenvectors_are_mass_orthonormal(f in density(), alpha in 0.25f64..2.0) {
        let eig = system(&f, alpha);
        prop_assert!(eig.orthonormality_defect() <= 1e-10);
        prop_assert!(eig.max_residual() <= 1e-8);
    }

    #[test]
    fn spectrum_ignores_weight_scale(f in density(), alpha in 0.25f64..2.0, c in 0.2f64..5.0) {
        let a = system(&f, alpha);
        let scaled = SpectralPencil::from_field(&f.field().scale(c), alpha, CUTOFF, 4).unwrap();
        let b = solve_spectrum(&Arc::new(scaled)).unwrap();
        // near-ties are ordered by lattice index, so compare sorted spectra
        let sorted = |e: &EigenSystem| {
            let mut v = e.values().to_vec();
            v.sort_by(f64::total_cmp);
            v
        };
        for (x, y) in sorted(&a).iter().zip(&sorted(&b)) {
            prop_assert!((x - y).abs() <= 1e-10 * x.abs().max(1.0), "{x} vs {y}");
        }
    }

    #[test]
    fn resolvent_identity(f in density(), seed in 0u64..1000, re1 in -20.0f64..400.0, re2 in -20.0f64..400.0, im in 1.0f64..30.0) {
        let eig = system(&f, 1.0);
        let (z1, z2) = (Complex64::new(re1, im), Complex64::new(re2, -im));
        let u = test_field(Arc::clone(eig.pencil().freqs()), seed);
        let left = resolvent_apply(&eig, z1, &u).unwrap().sub(&resolvent_apply(&eig, z2, &u).unwrap()).unwrap();
        let right = resolvent_apply(&eig, z1, &resolvent_apply(&eig, z2, &u).unwrap()).unwrap();
        let right = right.map_modes(|_| z2 - z1, false);
        let err = left.sub(&right).unwrap().l2_norm();
        prop_assert!(err <= 1e-8 * left.l2_norm().max(u.l2_norm() / im), "{err}");
    }

    #[test]
    fn projectors_are_idempotent_self_adjoint_and_contour_free(f in density(), alpha in 0.5f64..1.5, lo in 1usize..4, width in 1usize..3) {
        let eig = system(&f, alpha);
        let range = lo..(lo + width).min(eig.len());
        let contours = contours_around(eig.values(), range);
        prop_assume!(contours.is_some());
        let (a, b) = contours.unwrap();
        let mass = eig.pencil().mass();
        let eigen = spectral_projector(&eig, &a).unwrap();
        let pa = contour_projector(&eig, &a).unwrap();
        let pb = contour_projector(&eig, &b).unwrap();
        for p in [&eigen, &pa, &pb] {
            prop_assert!(p.idempotency_defect() <= 1e-9);
            prop_assert!(p.self_adjoint_defect(mass) <= 1e-9 * mass.norm());
        }
        prop_assert!(pa.distance(&pb).unwrap() <= 1e-9);
        prop_assert!(eigen.distance(&pa).unwrap() <= 1e-9);
    }
}
