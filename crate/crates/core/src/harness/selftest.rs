//! Invariant suite behind `wlap selftest`.

use std::f64::consts::PI;
use std::sync::Arc;
use std::time::Instant;

use num_complex::Complex64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::fit::{fit_points, fit_rate, RiskRow, RiskTable};
use crate::density::{make_density, sample, BumpLatticeSpec, DensityShape, DensitySpec, GaussComponent, ModelConstants};
use crate::error::Result;
use crate::functional::{
    closed_form_second_uniform, hoeffding_terms, integral_functional, mu_at, mu_first_derivative, mu_second_form, ustat,
    Form, IntegralKind, UStatKernel, UStatMode,
};
use crate::laplacian::{assemble_pencil, contour_projector, solve_spectrum, CMatrix, EigenSystem};
use crate::spectral::{angle_dq, cluster_mean, select_contour, spectral_projector, trace_mean, Contour};
use crate::torus::{FourierField, FrequencySet, ProjectionFamily, TorusGeometry};

/// Names accepted by [`run_selftest`], in execution order.
pub const SELFTEST_CHECKS: &[&str] = &[
    "uniform-spectrum",
    "projector-equivalence",
    "first-derivative",
    "second-derivative",
    "ustat",
    "integral-targets",
    "cluster-mean-trace",
    "angle-basics",
    "rate-fit",
];

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CheckResult {
    pub name: String,
    pub passed: bool,
    pub detail: String,
    pub seconds: f64,
}

/// Run the named checks (all of them when `only` is empty).
pub fn run_selftest(only: &[String]) -> Result<Vec<CheckResult>> {
    for name in only {
        if !SELFTEST_CHECKS.contains(&name.as_str()) {
            return Err(crate::Error::Config(format!(
                "unknown selftest check {name:?}; known: {}",
                SELFTEST_CHECKS.join(", ")
            )));
        }
    }
    Ok(SELFTEST_CHECKS
        .iter()
        .filter(|c| only.is_empty() || only.iter().any(|o| o == *c))
        .map(|&name| run_one(name))
        .collect())
}

fn run_one(name: &str) -> CheckResult {
    let start = Instant::now();
    let outcome = match name {
        "uniform-spectrum" => uniform_spectrum(),
        "projector-equivalence" => projector_equivalence(),
        "first-derivative" => first_derivative(),
        "second-derivative" => second_derivative(),
        "ustat" => ustat_identities(),
        "integral-targets" => integral_targets(),
        "cluster-mean-trace" => cluster_mean_trace(),
        "angle-basics" => angle_basics(),
        "rate-fit" => rate_fit(),
        _ => unreachable!("names are validated"),
    };
    let (passed, detail) = match outcome {
        Ok(v) => v,
        Err(e) => (false, format!("error: {e}")),
    };
    CheckResult {
        name: name.to_string(),
        passed,
        detail,
        seconds: start.elapsed().as_secs_f64(),
    }
}

type Outcome = Result<(bool, String)>;

fn rel(a: f64, b: f64) -> f64 {
    (a - b).abs() / b.abs().max(1e-300)
}

fn system(spec: &DensitySpec, cutoff: usize) -> Result<EigenSystem> {
    let f = make_density(spec)?;
    solve_spectrum(&Arc::new(assemble_pencil(&f, 1.0, cutoff, 4)?))
}

fn cosine_direction(k: i64) -> Result<FourierField> {
    let fs = FrequencySet::new(TorusGeometry::unit(1)?, k.unsigned_abs() as usize);
    FourierField::from_real_fn(fs, 64, |x| (2.0 * PI * k as f64 * x[0]).cos())
}

/// Eigenvalues at uniform density are `|ω_k|²`.
fn uniform_spectrum() -> Outcome {
    let eig = system(&DensitySpec::unit_1d(DensityShape::Uniform), 16)?;
    let mut expected: Vec<f64> = (-16i64..=16).map(|k| 4.0 * PI * PI * (k * k) as f64).collect();
    expected.sort_by(f64::total_cmp);
    let worst = eig
        .values()
        .iter()
        .zip(&expected)
        .map(|(a, b)| (a - b).abs() / b.max(1.0))
        .fold(0.0, f64::max);
    Ok((
        worst <= 1e-10 && eig.len() == expected.len(),
        format!("{} eigenvalues, max relative error {worst:.2e}", eig.len()),
    ))
}

fn catalog() -> Vec<(&'static str, DensitySpec)> {
    let bump = DensitySpec::unit_1d(DensityShape::BumpLattice(BumpLatticeSpec {
        per_axis: 4,
        epsilon: 0.1,
        amplitude_exponent: 2.0,
        signs: vec![1, -1, 1, -1],
        amplitude: 20.0,
        radius: 1.0,
        vanishing_moments: 2,
        analysis_points: None,
    }));
    let gauss = DensitySpec::unit_1d(DensityShape::GaussBump {
        components: vec![GaussComponent {
            center: vec![0.3],
            width: 0.08,
            weight: 0.3,
        }],
    });
    vec![("cosine", DensitySpec::cosine_1d(1, 0.5)), ("gauss-bump", gauss), ("bump-lattice", bump)]
}

/// Contour quadrature and eigendecomposition give the same projector.
fn projector_equivalence() -> Outcome {
    let mut worst = 0.0f64;
    let mut parts = Vec::new();
    for (name, mut spec) in catalog() {
        spec.cutoff = 24;
        spec.constants = ModelConstants::default();
        let eig = system(&spec, 16)?;
        let contour = select_contour(&eig, 1, 10.0)?;
        let a = spectral_projector(&eig, &contour)?;
        let b = contour_projector(&eig, &contour)?;
        let d = a.distance(&b)?;
        worst = worst.max(d);
        parts.push(format!("{name}: rank {} diff {d:.2e}", a.rank()));
    }
    Ok((worst <= 1e-8, parts.join("; ")))
}

/// Influence function: zero at uniform, matches central differences off uniform.
fn first_derivative() -> Outcome {
    let uni = system(&DensitySpec::unit_1d(DensityShape::Uniform), 16)?;
    let c = select_contour(&uni, 1, 10.0)?;
    let psi0 = mu_first_derivative(&uni, &c)?;
    let flat = psi0.centered().coeffs().iter().map(|z| z.norm()).fold(0.0, f64::max);

    let eig = system(&DensitySpec::cosine_1d(1, 0.5), 16)?;
    let c = select_contour(&eig, 1, 10.0)?;
    let psi = mu_first_derivative(&eig, &c)?;
    let fd = psi.fd.expect("checked influence carries its FD record");
    let u = cosine_direction(2)?;
    let p = eig.pencil();
    let eps = 1e-3;
    let mu = |s: f64| -> Result<f64> {
        let shifted = p.density().resample(u.freqs().clone())?.add(&u.scale(s))?;
        mu_at(&shifted, 1.0, 16, 4, &c, 2)
    };
    let central = (mu(eps)? - mu(-eps)?) / (2.0 * eps);
    let exact = psi.pairing(&u)?;
    let r = rel(central, exact);
    let slope_ok = (1.9..=2.1).contains(&fd.slope) || fd.negligible;
    Ok((
        flat <= 1e-10 && r <= 1e-4 && slope_ok,
        format!("uniform |ψ−mean| {flat:.2e}; pairing {exact:.8} vs FD {central:.8} (rel {r:.2e}); remainder slope {:.3}", fd.slope),
    ))
}

/// Pencil perturbation, closed form and FD second difference agree at uniform density.
fn second_derivative() -> Outcome {
    let eig = system(&DensitySpec::unit_1d(DensityShape::Uniform), 16)?;
    let c = select_contour(&eig, 1, 10.0)?;
    let u = cosine_direction(1)?;
    let q = mu_second_form(&eig, &c, 8)?.evaluate(&u)?;
    let closed = closed_form_second_uniform(&[1], 8, eig.pencil().freqs().geometry())?.evaluate(&u)?;
    let p = eig.pencil();
    let eps = 1e-3;
    let mu = |s: f64| -> Result<f64> {
        let shifted = p.density().resample(u.freqs().clone())?.add(&u.scale(s))?;
        mu_at(&shifted, 1.0, 16, 4, &c, 2)
    };
    let second = (mu(eps)? + mu(-eps)? - 2.0 * mu(0.0)?) / (eps * eps);
    let target = 2.0 * PI * PI / 3.0;
    let pairs = [rel(q, closed), rel(q, second / 2.0), rel(closed, second / 2.0)];
    let worst = pairs.iter().fold(0.0f64, |m, &v| m.max(v));
    Ok((
        worst <= 1e-4 && rel(q, target) <= 1e-4,
        format!("Q[u,u] {q:.8}, closed form {closed:.8}, FD {second:.8} (= 2Q), target 2π²/3 = {target:.8}; worst pair {worst:.2e}"),
    ))
}

fn random_hermitian(p: usize, rng: &mut ChaCha8Rng) -> CMatrix {
    let a = CMatrix::from_fn(p, p, |_, _| Complex64::new(rng.random::<f64>() - 0.5, rng.random::<f64>() - 0.5));
    (&a + a.adjoint()) * Complex64::new(0.5, 0.0)
}

fn random_sym_tensor(p: usize, rng: &mut ChaCha8Rng) -> Vec<Complex64> {
    let raw: Vec<Complex64> = (0..p * p * p)
        .map(|_| Complex64::new(rng.random::<f64>() - 0.5, rng.random::<f64>() - 0.5))
        .collect();
    let mut t = vec![Complex64::new(0.0, 0.0); p * p * p];
    for a in 0..p {
        for b in 0..p {
            for c in 0..p {
                let perms = [(a, b, c), (a, c, b), (b, a, c), (b, c, a), (c, a, b), (c, b, a)];
                t[(a * p + b) * p + c] = perms.iter().map(|&(x, y, z)| raw[(x * p + y) * p + z]).sum::<Complex64>() / 6.0;
            }
        }
    }
    t
}

/// Fast = naive, Hoeffding reconstruction, multiscale level collapse.
fn ustat_identities() -> Outcome {
    let g = TorusGeometry::unit(1)?;
    let f = make_density(&DensitySpec::cosine_1d(1, 0.5))?;
    let fam = ProjectionFamily::default();
    let mut rng = ChaCha8Rng::seed_from_u64(0x5e1f);
    let lattice = FrequencySet::new(g.clone(), 3);
    let mut fast_naive = 0.0f64;
    for n in [10usize, 30] {
        let s = sample(&f, n, 100 + n as u64)?;
        let forms = [
            Form::Matrix {
                lattice: lattice.clone(),
                matrix: random_hermitian(lattice.len(), &mut rng),
            },
            Form::Tensor3 {
                lattice: lattice.clone(),
                data: random_sym_tensor(lattice.len(), &mut rng),
            },
        ];
        for form in forms {
            let k = UStatKernel::single(form, 3.0, fam, &g)?;
            let a = ustat(&k, &s, UStatMode::Fast)?;
            let b = ustat(&k, &s, UStatMode::Naive)?;
            fast_naive = fast_naive.max((a - b).abs() / b.abs().max(1e-3));
        }
    }
    let s7 = sample(&f, 7, 7)?;
    let one = FourierField::constant(f.freqs().clone(), 1.0);
    let mut hoeffding = 0.0f64;
    for order in [1, 2, 3] {
        let k = UStatKernel::single(Form::Product { order, weight: one.clone() }, 4.0, fam, &g)?;
        hoeffding = hoeffding.max(hoeffding_terms(&k, &s7, f.field())?.residual());
    }
    let cube = Form::Product { order: 3, weight: one };
    let s12 = sample(&f, 12, 12)?;
    let equal = ustat(&UStatKernel::multiscale(cube.clone(), [9.0; 3], fam, &g)?, &s12, UStatMode::Fast)?;
    let single = ustat(&UStatKernel::single(cube, 9.0, fam, &g)?, &s12, UStatMode::Fast)?;
    let collapse = (equal - single).abs() / single.abs().max(1e-3);
    Ok((
        fast_naive <= 1e-10 && hoeffding <= 1e-10 && collapse <= 1e-10,
        format!("fast vs naive {fast_naive:.2e}; Hoeffding residual {hoeffding:.2e}; level collapse {collapse:.2e}"),
    ))
}

fn integral_targets() -> Outcome {
    let f = make_density(&DensitySpec::cosine_1d(1, 0.5))?;
    let sq = integral_functional(IntegralKind::Square, f.field())?;
    let cu = integral_functional(IntegralKind::Cube, f.field())?;
    Ok((
        (sq - 1.125).abs() < 1e-12 && (cu - 1.375).abs() < 1e-12,
        format!("∫f² = {sq:.15}, ∫f³ = {cu:.15}"),
    ))
}

fn cluster_mean_trace() -> Outcome {
    let uni = system(&DensitySpec::unit_1d(DensityShape::Uniform), 16)?;
    let c = select_contour(&uni, 1, 10.0)?;
    let mu_uni = cluster_mean(&uni, &c)?;
    let eig = system(&DensitySpec::cosine_1d(1, 0.5), 16)?;
    let c = select_contour(&eig, 1, 10.0)?;
    let p = spectral_projector(&eig, &c)?;
    let (a, b) = (cluster_mean(&eig, &c)?, trace_mean(&eig, &p)?);
    Ok((
        rel(mu_uni, 4.0 * PI * PI) <= 1e-10 && (a - b).abs() <= 1e-9 * a.abs() && p.idempotency_defect() <= 1e-9,
        format!("uniform μ {mu_uni:.10}; mean {a:.10} vs trace {b:.10}; idempotency {:.2e}", p.idempotency_defect()),
    ))
}

fn angle_basics() -> Outcome {
    let eig = system(&DensitySpec::unit_1d(DensityShape::Uniform), 8)?;
    let p0 = spectral_projector(&eig, &Contour::circle(0.0, 0.5)?)?;
    let c1 = select_contour(&eig, 1, 10.0)?;
    let p1 = spectral_projector(&eig, &c1)?;
    let same = angle_dq(&p1, &p1, 4.0, None)?.value;
    let d2 = angle_dq(&p0, &p1, 2.0, None)?.value;
    Ok((
        same.abs() <= 1e-9 && (d2 - 2.0).abs() <= 1e-9,
        format!("D_4(Π, Π) = {same:.2e}; D_2 of orthogonal ranges = {d2:.12}"),
    ))
}

fn rate_fit() -> Outcome {
    let pts: Vec<(f64, f64)> = [256.0, 1024.0, 4096.0, 16384.0].iter().map(|&n: &f64| (n, 3.0 * n.powf(-0.5))).collect();
    let exact = fit_points(&pts)?;
    let mut rng = ChaCha8Rng::seed_from_u64(0x4a7e);
    let mut t = RiskTable::new("synthetic");
    for n in [256usize, 512, 1024, 2048, 4096, 8192] {
        for r in 0..100 {
            let noise = (rng.random::<f64>() - 0.5) * 0.6;
            t.push(RiskRow {
                n,
                replication: r,
                value: 2.0 * (n as f64).powf(-0.4) * f64::exp(noise),
                seed: 0,
            });
        }
    }
    let noisy = fit_rate(&t)?;
    Ok((
        (exact.slope + 0.5).abs() <= 1e-12 && (noisy.slope + 0.4).abs() <= 2.0 * noisy.std_error,
        format!("exact slope {:.3e} off; noisy slope {:.4} ± {:.4}", exact.slope + 0.5, noisy.slope, noisy.std_error),
    ))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn rejects_unknown_checks() {
        assert!(run_selftest(&["nope".into()]).is_err());
    }

    #[test]
    fn cheap_checks_pass() {
        let picks: Vec<String> = ["uniform-spectrum", "integral-targets", "angle-basics", "rate-fit"].iter().map(|s| s.to_string()).collect();
        for r in run_selftest(&picks).unwrap() {
            assert!(r.passed, "{r:?}");
        }
    }
}
