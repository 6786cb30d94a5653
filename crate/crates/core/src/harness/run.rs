//! Monte Carlo driver: replications, risk tables, checks and output files.

use std::fmt::Write as _;
use std::path::{Path, PathBuf};
use std::sync::Arc;
use std::time::Instant;

use rayon::prelude::*;
use serde::Serialize;
use serde_json::{json, Value};

use super::config::{EstimatorKind, ExperimentConfig, ExperimentKind, FunctionalName, SpectralSection};
use super::fit::{fit_rate, RateFit, RiskRow, RiskTable};
use super::plot::{plot_csv, plot_svg, PlotSeries};
use super::selftest::run_selftest;
use crate::density::{
    bandwidth, derive_seed, estimate_density, make_density, sample, BandwidthRule, DensityModel, DensityShape, SampleSet,
};
use crate::error::{Error, Result};
use crate::functional::{
    debiased_estimate, efficiency_variance, estimate_cubic_form, estimate_quadratic_form, integral_functional,
    integral_influence, tree_sum, DebiasConfig, EstimateReport, Form, FunctionalSpec,
};
use crate::laplacian::{assemble_pencil, contour_projector, solve_spectrum, EigenSystem};
use crate::spectral::{
    angle_dq, cluster_mean, plugin_eigenspace, select_contour, spectral_projector, EigenspaceSettings, SpectralTruth,
    RISK_CSV_HEADER,
};
use crate::torus::{h_minus_one_norm, FourierField, FrequencySet, ProjectionFamily};

/// Share of failed replications above which a run is declared failed.
pub const ERROR_BUDGET: f64 = 0.2;

/// One named pass/fail verdict.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Check {
    pub name: String,
    pub passed: bool,
    pub detail: String,
}

impl Check {
    fn new(name: &str, passed: bool, detail: String) -> Self {
        Self {
            name: name.to_string(),
            passed,
            detail,
        }
    }
}

/// Everything a run writes. Only `timing` depends on the clock.
#[derive(Debug, Clone)]
pub struct ExperimentOutput {
    pub name: String,
    pub kind: ExperimentKind,
    pub risk_csv: String,
    pub report: Value,
    pub plot_csv: String,
    pub plot_svg: String,
    pub timing: Value,
    pub checks: Vec<Check>,
}

impl ExperimentOutput {
    pub fn passed(&self) -> bool {
        self.checks.iter().all(|c| c.passed)
    }

    /// Write `<name>.{risk.csv, report.json, plot.csv, plot.svg, timing.json}` into `dir`.
    pub fn write(&self, dir: &Path) -> Result<Vec<PathBuf>> {
        std::fs::create_dir_all(dir)?;
        let files = [
            ("risk.csv", self.risk_csv.clone()),
            ("report.json", pretty(&self.report)),
            ("plot.csv", self.plot_csv.clone()),
            ("plot.svg", self.plot_svg.clone()),
            ("timing.json", pretty(&self.timing)),
        ];
        let mut paths = Vec::new();
        for (suffix, body) in files {
            let path = dir.join(format!("{}.{suffix}", self.name));
            std::fs::write(&path, body)?;
            paths.push(path);
        }
        Ok(paths)
    }
}

fn pretty(v: &Value) -> String {
    let mut s = serde_json::to_string_pretty(v).expect("json values serialize");
    s.push('\n');
    s
}

/// Stage timings in seconds, kept out of every deterministic output.
#[derive(Default)]
struct Timer {
    stages: Vec<(String, f64)>,
    start: Option<Instant>,
}

impl Timer {
    fn started() -> Self {
        Self {
            stages: Vec::new(),
            start: Some(Instant::now()),
        }
    }

    fn stage<T>(&mut self, name: &str, f: impl FnOnce() -> T) -> T {
        let t = Instant::now();
        let out = f();
        self.stages.push((name.to_string(), t.elapsed().as_secs_f64()));
        out
    }

    fn finish(self, cfg: &ExperimentConfig) -> Value {
        let total = self.start.map(|s| s.elapsed().as_secs_f64()).unwrap_or(0.0);
        let stages: serde_json::Map<String, Value> = self.stages.into_iter().map(|(k, v)| (k, json!(v))).collect();
        json!({
            "name": cfg.name,
            "kind": cfg.kind.as_str(),
            "threads": rayon::current_num_threads(),
            "wall_seconds": total,
            "stages": stages,
        })
    }
}

/// Replication `r` at grid position `i`.
pub fn replication_seed(seed: u64, i: usize, r: usize) -> u64 {
    derive_seed(seed, ((i as u64) << 32) | r as u64)
}

struct Rep<T> {
    n: usize,
    replication: usize,
    seed: u64,
    outcome: Result<T>,
}

/// Run `job(n, seed)` for every `(n, r)` in parallel; results keep grid-then-replication order.
fn replicate<T: Send>(cfg: &ExperimentConfig, job: impl Fn(usize, u64) -> Result<T> + Sync) -> Vec<Rep<T>> {
    let pairs: Vec<(usize, usize, usize)> = cfg
        .n_grid
        .iter()
        .enumerate()
        .flat_map(|(i, &n)| (0..cfg.replications).map(move |r| (i, n, r)))
        .collect();
    pairs
        .into_par_iter()
        .map(|(i, n, r)| {
            let seed = replication_seed(cfg.seed, i, r);
            Rep {
                n,
                replication: r,
                seed,
                outcome: job(n, seed),
            }
        })
        .collect()
}

fn error_entries<T>(reps: &[Rep<T>]) -> Vec<Value> {
    reps.iter()
        .filter_map(|r| {
            r.outcome.as_ref().err().map(|e| {
                json!({"n": r.n, "replication": r.replication, "seed": r.seed, "error": e.to_string()})
            })
        })
        .collect()
}

fn budget_check<T>(reps: &[Rep<T>]) -> Check {
    let failed = reps.iter().filter(|r| r.outcome.is_err()).count();
    let share = failed as f64 / reps.len().max(1) as f64;
    Check::new(
        "error-budget",
        share <= ERROR_BUDGET,
        format!("{failed} of {} replications errored ({:.1}%, budget {:.0}%)", reps.len(), 100.0 * share, 100.0 * ERROR_BUDGET),
    )
}

/// Mean, sample standard deviation and standard error of the mean.
fn moments(v: &[f64]) -> (f64, f64, f64) {
    let m = v.len();
    if m == 0 {
        return (f64::NAN, f64::NAN, f64::NAN);
    }
    let mean = tree_sum(v) / m as f64;
    if m < 2 {
        return (mean, f64::NAN, f64::NAN);
    }
    let dev: Vec<f64> = v.iter().map(|x| (x - mean) * (x - mean)).collect();
    let sd = (tree_sum(&dev) / (m - 1) as f64).sqrt();
    (mean, sd, sd / (m as f64).sqrt())
}

fn fmt_q(q: f64) -> String {
    if q.is_infinite() {
        "inf".into()
    } else {
        q.to_string()
    }
}

fn slope_check(name: &str, fit: &Result<RateFit>, cfg: &ExperimentConfig) -> Option<Check> {
    let slope = cfg.expect.slope?;
    let tol = cfg.expect.slope_tolerance.unwrap_or(0.15);
    Some(match fit {
        Ok(f) => Check::new(
            name,
            f.within(slope, tol),
            format!("slope {:.4} ± {:.4} (R² {:.3}); expected {slope} ± {tol}", f.slope, f.std_error, f.r_squared),
        ),
        Err(e) => Check::new(name, false, format!("fit failed: {e}")),
    })
}

fn fit_json(fit: &Result<RateFit>) -> Value {
    match fit {
        Ok(f) => json!({"slope": f.slope, "intercept": f.intercept, "std_error": f.std_error, "r_squared": f.r_squared}),
        Err(e) => json!({"error": e.to_string()}),
    }
}

fn per_n_summary(table: &RiskTable, reps_per_n: usize) -> Vec<Value> {
    let medians = table.median_by_n();
    table
        .mean_by_n()
        .into_iter()
        .zip(medians)
        .map(|((n, mean), (_, median))| {
            let v = table.values_at(n);
            let (_, sd, se) = moments(&v);
            json!({"n": n, "mean": mean, "median": median, "sd": sd, "se": se, "completed": v.len(), "replications": reps_per_n})
        })
        .collect()
}

struct Parts {
    risk_csv: String,
    report: Value,
    series: Vec<PlotSeries>,
    x_label: &'static str,
    y_label: &'static str,
    checks: Vec<Check>,
}

/// Run one experiment. Module errors inside replications are recorded, not raised.
pub fn run_experiment(cfg: &ExperimentConfig) -> Result<ExperimentOutput> {
    cfg.validate()?;
    let mut timer = Timer::started();
    let parts = match cfg.kind {
        ExperimentKind::Selftest => selftest(cfg, &mut timer)?,
        ExperimentKind::Spectrum => spectrum(cfg, &mut timer)?,
        ExperimentKind::DensityRate => density_rate(cfg, &mut timer)?,
        ExperimentKind::EigenspaceRate => eigenspace_rate(cfg, &mut timer)?,
        ExperimentKind::EigenvalueRate => eigenvalue_rate(cfg, &mut timer)?,
        ExperimentKind::Efficiency => efficiency(cfg, &mut timer)?,
        ExperimentKind::PerturbationBound => perturbation_bound(cfg, &mut timer)?,
    };
    let Parts {
        risk_csv,
        mut report,
        series,
        x_label,
        y_label,
        checks,
    } = parts;
    let obj = report.as_object_mut().expect("reports are objects");
    obj.insert("name".into(), json!(cfg.name));
    obj.insert("kind".into(), json!(cfg.kind.as_str()));
    obj.insert("seed".into(), json!(cfg.seed));
    obj.insert("replications".into(), json!(cfg.replications));
    obj.insert("checks".into(), serde_json::to_value(&checks).expect("checks serialize"));
    obj.insert("passed".into(), json!(checks.iter().all(|c| c.passed)));
    obj.insert("config".into(), serde_json::to_value(cfg).expect("config serializes"));
    let title = format!("{} ({})", cfg.name, cfg.kind.as_str());
    Ok(ExperimentOutput {
        name: cfg.name.clone(),
        kind: cfg.kind,
        plot_csv: plot_csv(&series),
        plot_svg: plot_svg(&title, x_label, y_label, &series),
        risk_csv,
        report,
        timing: timer.finish(cfg),
        checks,
    })
}

fn selftest(cfg: &ExperimentConfig, timer: &mut Timer) -> Result<Parts> {
    let only = cfg.selftest.as_ref().map(|s| s.checks.clone()).unwrap_or_default();
    let results = run_selftest(&only)?;
    let mut csv = String::from("check,passed\n");
    for r in &results {
        let _ = writeln!(csv, "{},{}", r.name, r.passed);
        timer.stages.push((r.name.clone(), r.seconds));
    }
    let checks: Vec<Check> = results.iter().map(|r| Check::new(&r.name, r.passed, r.detail.clone())).collect();
    Ok(Parts {
        risk_csv: csv,
        report: json!({}),
        series: Vec::new(),
        x_label: "",
        y_label: "",
        checks,
    })
}

fn spectral_section(cfg: &ExperimentConfig) -> Result<&SpectralSection> {
    cfg.spectral
        .as_ref()
        .ok_or_else(|| Error::Config(format!("{} needs a [spectral] section", cfg.kind.as_str())))
}

fn truth_system(f: &DensityModel, cfg: &ExperimentConfig, sp: &SpectralSection) -> Result<EigenSystem> {
    solve_spectrum(&Arc::new(assemble_pencil(f, cfg.alpha, sp.cutoff, sp.oversample)?))
}

fn spectrum(cfg: &ExperimentConfig, timer: &mut Timer) -> Result<Parts> {
    let sp = spectral_section(cfg)?;
    let spec = cfg.density_spec()?;
    let f = make_density(spec)?;
    let eig = timer.stage("eigensolve", || truth_system(&f, cfg, sp))?;
    let mut checks = Vec::new();
    if matches!(spec.shape, DensityShape::Uniform) {
        let fs = eig.pencil().freqs();
        let mut expected: Vec<f64> = fs.lambdas().to_vec();
        expected.sort_by(f64::total_cmp);
        let worst = eig
            .values()
            .iter()
            .zip(&expected)
            .map(|(a, b)| (a - b).abs() / b.max(1.0))
            .fold(0.0, f64::max);
        checks.push(Check::new(
            "uniform-eigenvalues",
            worst <= 1e-10,
            format!("max relative deviation from |ω_k|² is {worst:.2e} over {} eigenvalues", eig.len()),
        ));
    }
    checks.push(Check::new(
        "eigen-residual",
        eig.max_residual() <= 1e-8,
        format!("max residual {:.2e}, orthonormality defect {:.2e}", eig.max_residual(), eig.orthonormality_defect()),
    ));
    let mut cluster = json!(null);
    match timer.stage("projectors", || -> Result<_> {
        let contour = select_contour(&eig, sp.target, sp.gap)?;
        let a = spectral_projector(&eig, &contour)?;
        let b = contour_projector(&eig, &contour)?;
        Ok((contour.center().re, contour.radius(), a.rank(), a.distance(&b)?, cluster_mean(&eig, &contour)?))
    }) {
        Ok((center, radius, rank, diff, mu)) => {
            cluster = json!({"center": center, "radius": radius, "rank": rank, "mean": mu, "projector_difference": diff});
            checks.push(Check::new(
                "projector-equivalence",
                diff <= 1e-8,
                format!("‖Π_eigen − Π_contour‖ = {diff:.2e} for the rank-{rank} cluster of λ_{}", sp.target),
            ));
        }
        Err(e) => checks.push(Check::new("projector-equivalence", false, format!("error: {e}"))),
    }
    let points: Vec<(f64, f64)> = eig.values().iter().enumerate().skip(1).map(|(i, &v)| (i as f64, v)).collect();
    Ok(Parts {
        risk_csv: eig.spectrum_csv(sp.tie_tolerance),
        report: json!({"eigenvalues": eig.values(), "cluster": cluster, "pencil_dim": eig.len()}),
        series: vec![PlotSeries::new("eigenvalue", points)],
        x_label: "index",
        y_label: "eigenvalue",
        checks,
    })
}

fn l2_distance(a: &FourierField, b: &FourierField) -> Result<f64> {
    let reach = a.cutoff().max(b.cutoff());
    let fs = FrequencySet::new(a.geometry().clone(), reach);
    Ok(a.resample(fs.clone())?.sub(&b.resample(fs)?)?.l2_norm())
}

fn density_rate(cfg: &ExperimentConfig, timer: &mut Timer) -> Result<Parts> {
    let f = make_density(cfg.density_spec()?)?;
    let d = f.geometry().dim();
    let family = ProjectionFamily::default();
    let constants = f.constants();
    let reps = timer.stage("replications", || {
        replicate(cfg, |n, seed| {
            let s = sample(&f, n, seed)?;
            let level = bandwidth(n, cfg.smoothness, d, BandwidthRule::Density, cfg.bandwidth.density)? as f64;
            let est = estimate_density(&s, &family, level, cfg.floor, constants)?;
            Ok((l2_distance(est.model.field(), f.field())?, level, est.clipped))
        })
    });
    let mut csv = String::from("n,replication,l2_error,level,clipped,seed\n");
    let mut table = RiskTable::new("l2_error");
    for r in &reps {
        if let Ok((err, level, clipped)) = &r.outcome {
            let _ = writeln!(csv, "{},{},{err:.12e},{level},{clipped},{}", r.n, r.replication, r.seed);
            table.push(RiskRow {
                n: r.n,
                replication: r.replication,
                value: *err,
                seed: r.seed,
            });
        }
    }
    let fit = fit_rate(&table);
    let mut checks = vec![budget_check(&reps)];
    checks.extend(slope_check("l2-slope", &fit, cfg));
    Ok(Parts {
        risk_csv: csv,
        report: json!({
            "metric": "l2_error",
            "summary": per_n_summary(&table, cfg.replications),
            "fit": fit_json(&fit),
            "errors": error_entries(&reps),
        }),
        series: vec![PlotSeries::new("mean L2 error", table.mean_by_n().into_iter().map(|(n, m)| (n as f64, m)).collect())],
        x_label: "n",
        y_label: "L2 risk",
        checks,
    })
}

fn eigenspace_settings(cfg: &ExperimentConfig, sp: &SpectralSection, q: f64) -> EigenspaceSettings {
    EigenspaceSettings {
        cutoff: sp.cutoff,
        alpha: cfg.alpha,
        oversample: sp.oversample,
        smoothness: cfg.smoothness,
        bandwidth_constant: cfg.bandwidth.density,
        floor: cfg.floor,
        q,
        angle_grid: sp.angle_grid,
    }
}

fn eigenspace_rate(cfg: &ExperimentConfig, timer: &mut Timer) -> Result<Parts> {
    let sp = spectral_section(cfg)?;
    let f = make_density(cfg.density_spec()?)?.with_alpha(cfg.alpha);
    let qs: Vec<f64> = sp.q.clone();
    let first_q = qs.first().copied().unwrap_or(2.0);
    let settings = eigenspace_settings(cfg, sp, first_q);
    let truth = timer.stage("truth", || SpectralTruth::new(f.clone(), &settings, sp.target, sp.gap))?;
    let reps = timer.stage("replications", || {
        replicate(cfg, |n, seed| {
            let s = sample(&truth.density, n, seed)?;
            let out = plugin_eigenspace(&s, sp.target, sp.gap, &settings, Some(&truth))?;
            let risk = out.risk.expect("truth was supplied");
            let mut extra = Vec::new();
            for &q in qs.iter().skip(1) {
                extra.push(angle_dq(&out.projector, &truth.projector, q, sp.angle_grid)?);
            }
            Ok((risk, extra))
        })
    });
    let mut csv = format!("{RISK_CSV_HEADER}\n");
    let mut d2 = RiskTable::new("D2");
    let mut dq = RiskTable::new("Dq");
    let mut loss = RiskTable::new("emp_l2_loss");
    let mut flagged = 0usize;
    for r in &reps {
        if let Ok((risk, extra)) = &r.outcome {
            csv.push_str(&risk.csv_row(r.n, r.replication, r.seed));
            csv.push('\n');
            for a in extra {
                let _ = writeln!(
                    csv,
                    "{},{},{},{},{:.12e},{:.12e},{},{:.12e},{}",
                    r.n,
                    r.replication,
                    risk.rank_true,
                    risk.rank_est,
                    risk.d2.value,
                    a.value,
                    fmt_q(a.q),
                    risk.emp_l2_loss,
                    r.seed
                );
            }
            flagged += usize::from(risk.dq.flagged) + extra.iter().filter(|a| a.flagged).count();
            let row = |value| RiskRow {
                n: r.n,
                replication: r.replication,
                value,
                seed: r.seed,
            };
            d2.push(row(risk.d2.value));
            dq.push(row(risk.dq.value));
            loss.push(row(risk.emp_l2_loss));
        }
    }
    let fit = fit_rate(&d2);
    let mut checks = vec![budget_check(&reps)];
    checks.extend(slope_check("d2-slope", &fit, cfg));
    if let Some(min_share) = cfg.expect.rank_recovery {
        let from = cfg.expect.rank_min_n.unwrap_or(0);
        let pool: Vec<&Rep<_>> = reps.iter().filter(|r| r.n >= from).collect();
        let good = pool
            .iter()
            .filter(|r| matches!(&r.outcome, Ok((risk, _)) if !risk.rank_mismatch))
            .count();
        let share = good as f64 / pool.len().max(1) as f64;
        checks.push(Check::new(
            "rank-recovery",
            !pool.is_empty() && share >= min_share,
            format!("rank recovered in {good} of {} replications at n ≥ {from} ({:.1}%, need {:.0}%)", pool.len(), 100.0 * share, 100.0 * min_share),
        ));
    }
    let mean_series = |t: &RiskTable, label: &str| PlotSeries::new(label, t.mean_by_n().into_iter().map(|(n, m)| (n as f64, m)).collect());
    Ok(Parts {
        risk_csv: csv,
        report: json!({
            "metric": "D2",
            "q": qs.iter().map(|&q| fmt_q(q)).collect::<Vec<_>>(),
            "rank_true": truth.projector.rank(),
            "truth_cluster_mean": cluster_mean(&truth.eig, &truth.contour)?,
            "summary": per_n_summary(&d2, cfg.replications),
            "summary_dq": per_n_summary(&dq, cfg.replications),
            "summary_emp_l2_loss": per_n_summary(&loss, cfg.replications),
            "fit": fit_json(&fit),
            "fit_dq": fit_json(&fit_rate(&dq)),
            "fit_emp_l2_loss": fit_json(&fit_rate(&loss)),
            "bracket_flags": flagged,
            "errors": error_entries(&reps),
        }),
        series: vec![mean_series(&d2, "mean D2"), mean_series(&dq, &format!("mean D{}", fmt_q(first_q))), mean_series(&loss, "mean empirical L2 loss")],
        x_label: "n",
        y_label: "risk",
        checks,
    })
}

fn debias_config(cfg: &ExperimentConfig, split: crate::functional::SplitRule, cross_fit: bool, oversample: usize) -> DebiasConfig {
    DebiasConfig {
        smoothness: cfg.smoothness,
        alpha: cfg.alpha,
        density_constant: cfg.bandwidth.density,
        quadratic_constant: cfg.bandwidth.quadratic,
        floor: cfg.floor,
        split,
        cross_fit,
        oversample,
        fallback_band: 16,
    }
}

fn eigenvalue_rate(cfg: &ExperimentConfig, timer: &mut Timer) -> Result<Parts> {
    let sp = spectral_section(cfg)?;
    let fun = cfg.functional.as_ref().ok_or_else(|| Error::Config("eigenvalue-rate needs [functional]".into()))?;
    if fun.functional != FunctionalName::Eigenvalue {
        return Err(Error::Config("eigenvalue-rate estimates the eigenvalue functional".into()));
    }
    let f = make_density(cfg.density_spec()?)?.with_alpha(cfg.alpha);
    let (mu, rank) = timer.stage("truth", || -> Result<(f64, usize)> {
        let eig = truth_system(&f, cfg, sp)?;
        let contour = select_contour(&eig, sp.target, sp.gap)?;
        Ok((cluster_mean(&eig, &contour)?, spectral_projector(&eig, &contour)?.rank()))
    })?;
    let spec = FunctionalSpec::Eigenvalue {
        target: sp.target,
        gap: sp.gap,
        cutoff: sp.cutoff,
        correction_cutoff: sp.correction_cutoff,
    };
    let dc = debias_config(cfg, fun.split, fun.cross_fit, sp.oversample);
    let reps = timer.stage("replications", || {
        replicate(cfg, |n, seed| debiased_estimate(&spec, &sample(&f, n, seed)?, &dc))
    });
    let mut csv = String::from("n,replication,estimate,plugin,corr1,corr2,plugin_error,debiased_error,flags,seed\n");
    let mut deb = RiskTable::new("abs_debiased_error");
    let mut plug = RiskTable::new("abs_plugin_error");
    for r in &reps {
        if let Ok(rep) = &r.outcome {
            let (ep, ed) = (rep.plugin - mu, rep.estimate - mu);
            let _ = writeln!(
                csv,
                "{},{},{:.12e},{:.12e},{:.12e},{:.12e},{ep:.12e},{ed:.12e},{},{}",
                r.n,
                r.replication,
                rep.estimate,
                rep.plugin,
                rep.corr1,
                rep.corr2,
                rep.flags.join("|"),
                r.seed
            );
            let row = |value| RiskRow {
                n: r.n,
                replication: r.replication,
                value,
                seed: r.seed,
            };
            deb.push(row(ed.abs()));
            plug.push(row(ep.abs()));
        }
    }
    let fit = fit_rate(&deb);
    let mut checks = vec![budget_check(&reps)];
    checks.extend(slope_check("debiased-slope", &fit, cfg));

    let n_max = *cfg.n_grid.last().expect("validated grid");
    let paired: Vec<(f64, f64)> = reps
        .iter()
        .filter(|r| r.n == n_max)
        .filter_map(|r| r.outcome.as_ref().ok().map(|rep| (rep.plugin - mu, rep.estimate - mu)))
        .collect();
    let ep: Vec<f64> = paired.iter().map(|p| p.0).collect();
    let ed: Vec<f64> = paired.iter().map(|p| p.1).collect();
    let (bias_p, _, _) = moments(&ep);
    let (bias_d, _, _) = moments(&ed);
    let rmse = |v: &[f64]| (tree_sum(&v.iter().map(|x| x * x).collect::<Vec<_>>()) / v.len().max(1) as f64).sqrt();
    let (rmse_p, rmse_d) = (rmse(&ep), rmse(&ed));
    // paired differences of signed errors, oriented along the plug-in bias
    let sign = if bias_p >= 0.0 { 1.0 } else { -1.0 };
    let diffs: Vec<f64> = paired.iter().map(|(p, d)| sign * (p - d)).collect();
    let (gain, _, se_gain) = moments(&diffs);
    let z = gain / se_gain;
    checks.push(Check::new(
        "rmse-at-largest-n",
        rmse_d <= rmse_p,
        format!("n = {n_max}: debiased RMSE {rmse_d:.5} vs plug-in {rmse_p:.5}"),
    ));
    // one-sided: the paired shift toward zero must exceed three standard errors
    checks.push(Check::new(
        "bias-reduction",
        z >= 3.0 && bias_d.abs() < bias_p.abs(),
        format!(
            "n = {n_max}: bias plug-in {bias_p:.5}, debiased {bias_d:.5}; paired shift toward zero {gain:.5} ± {se_gain:.5} (z = {z:.2}, need 3)"
        ),
    ));
    let mean_series = |t: &RiskTable, label: &str| PlotSeries::new(label, t.mean_by_n().into_iter().map(|(n, m)| (n as f64, m)).collect());
    Ok(Parts {
        risk_csv: csv,
        report: json!({
            "metric": "abs_debiased_error",
            "truth": mu,
            "rank_true": rank,
            "summary": per_n_summary(&deb, cfg.replications),
            "summary_plugin": per_n_summary(&plug, cfg.replications),
            "fit": fit_json(&fit),
            "fit_plugin": fit_json(&fit_rate(&plug)),
            "largest_n": {"n": n_max, "bias_plugin": bias_p, "bias_debiased": bias_d, "rmse_plugin": rmse_p,
                          "rmse_debiased": rmse_d, "paired_shift": gain, "paired_se": se_gain, "paired_z": z},
            "errors": error_entries(&reps),
        }),
        series: vec![mean_series(&deb, "mean |debiased error|"), mean_series(&plug, "mean |plug-in error|")],
        x_label: "n",
        y_label: "absolute error",
        checks,
    })
}

enum Estimator {
    Debiased(FunctionalSpec, DebiasConfig),
    Quadratic(Form),
    Cubic(Form),
}

fn efficiency(cfg: &ExperimentConfig, timer: &mut Timer) -> Result<Parts> {
    let fun = cfg.functional.as_ref().ok_or_else(|| Error::Config("efficiency needs [functional]".into()))?;
    let kind = fun
        .functional
        .integral()
        .ok_or_else(|| Error::Config("efficiency runs take an integral functional".into()))?;
    let f = make_density(cfg.density_spec()?)?.with_alpha(cfg.alpha);
    let d = f.geometry().dim();
    let target = match cfg.expect.target {
        Some(t) => t,
        None => integral_functional(kind, f.field())?,
    };
    let eff_var = match cfg.expect.efficient_variance {
        Some(v) => v,
        None => efficiency_variance(&integral_influence(kind, f.field(), 16)?, f.field())?,
    };
    let one = FourierField::constant(FrequencySet::new(f.geometry().clone(), 0), 1.0);
    let estimator = match (fun.estimator, fun.functional) {
        (EstimatorKind::Debiased, _) => Estimator::Debiased(
            FunctionalSpec::Integral { functional: kind },
            debias_config(cfg, fun.split, fun.cross_fit, crate::laplacian::DEFAULT_OVERSAMPLE),
        ),
        (EstimatorKind::Quadratic, FunctionalName::Square) => Estimator::Quadratic(Form::Product { order: 2, weight: one }),
        (EstimatorKind::Cubic, FunctionalName::Cube) => Estimator::Cubic(Form::Product { order: 3, weight: one }),
        (e, k) => return Err(Error::Config(format!("estimator {e:?} does not target {k:?}"))),
    };
    let family = ProjectionFamily::default();
    let c = cfg.bandwidth.quadratic;
    let s = cfg.smoothness;
    let reps = timer.stage("replications", || {
        replicate(cfg, |n, seed| -> Result<(f64, Option<EstimateReport>)> {
            let x: SampleSet = sample(&f, n, seed)?;
            match &estimator {
                Estimator::Debiased(spec, dc) => {
                    let rep = debiased_estimate(spec, &x, dc)?;
                    Ok((rep.estimate, Some(rep)))
                }
                Estimator::Quadratic(form) => {
                    let level = bandwidth(n, s, d, BandwidthRule::Quadratic, c)? as f64;
                    Ok((estimate_quadratic_form(form.clone(), &x, level, family, None)?, None))
                }
                Estimator::Cubic(form) => {
                    let levels = [BandwidthRule::Cubic1, BandwidthRule::Cubic2, BandwidthRule::Cubic3]
                        .map(|rule| bandwidth(n, s, d, rule, c).map(|v| v as f64));
                    let levels = [levels[0].clone()?, levels[1].clone()?, levels[2].clone()?];
                    Ok((estimate_cubic_form(form.clone(), &x, levels, family, None)?, None))
                }
            }
        })
    });
    let mut csv = String::from("n,replication,estimate,error,plugin,corr1,corr2,corr3,seed\n");
    let mut table = RiskTable::new("estimate");
    let opt = |v: Option<f64>| v.map(|x| format!("{x:.12e}")).unwrap_or_default();
    for r in &reps {
        if let Ok((est, rep)) = &r.outcome {
            let _ = writeln!(
                csv,
                "{},{},{est:.12e},{:.12e},{},{},{},{},{}",
                r.n,
                r.replication,
                est - target,
                opt(rep.as_ref().map(|x| x.plugin)),
                opt(rep.as_ref().map(|x| x.corr1)),
                opt(rep.as_ref().map(|x| x.corr2)),
                opt(rep.as_ref().and_then(|x| x.corr3)),
                r.seed
            );
            table.push(RiskRow {
                n: r.n,
                replication: r.replication,
                value: *est,
                seed: r.seed,
            });
        }
    }
    let mut checks = vec![budget_check(&reps)];
    let tol = cfg.expect.variance_tolerance.unwrap_or(0.25);
    let mut summary = Vec::new();
    let mut var_points = Vec::new();
    for n in table.sizes() {
        let v = table.values_at(n);
        let (mean, sd, se) = moments(&v);
        let var = sd * sd;
        let bound = eff_var / n as f64;
        let ratio = var / bound;
        var_points.push((n as f64, var));
        summary.push(json!({"n": n, "mean": mean, "sd": sd, "se": se, "variance": var, "efficient_variance_over_n": bound,
                            "variance_ratio": ratio, "completed": v.len()}));
        checks.push(Check::new(
            &format!("target-within-3se-n{n}"),
            (mean - target).abs() <= 3.0 * se,
            format!("mean {mean:.6} vs target {target:.6}: {:.2} standard errors ({se:.2e})", (mean - target).abs() / se),
        ));
        if matches!(estimator, Estimator::Debiased(..)) {
            checks.push(Check::new(
                &format!("efficient-variance-n{n}"),
                (ratio - 1.0).abs() <= tol,
                format!("n·Var = {:.5} vs Var ψ = {eff_var:.5}: ratio {ratio:.3} (tolerance {tol})", var * n as f64),
            ));
        }
    }
    let bound_points: Vec<(f64, f64)> = table.sizes().iter().map(|&n| (n as f64, eff_var / n as f64)).collect();
    Ok(Parts {
        risk_csv: csv,
        report: json!({
            "metric": "estimate",
            "target": target,
            "efficient_variance": eff_var,
            "estimator": format!("{:?}", fun.estimator).to_lowercase(),
            "summary": summary,
            "errors": error_entries(&reps),
        }),
        series: vec![PlotSeries::new("empirical variance", var_points), PlotSeries::new("Var ψ / n", bound_points)],
        x_label: "n",
        y_label: "variance",
        checks,
    })
}

fn perturbation_bound(cfg: &ExperimentConfig, timer: &mut Timer) -> Result<Parts> {
    let sp = spectral_section(cfg)?;
    let pert = cfg.perturbation.as_ref().ok_or_else(|| Error::Config("perturbation-bound needs [perturbation]".into()))?;
    let f = make_density(cfg.density_spec()?)?.with_alpha(cfg.alpha);
    let g = f.geometry().clone();
    let reach = pert
        .direction
        .iter()
        .flat_map(|t| t.k.iter().map(|k| k.unsigned_abs() as usize))
        .max()
        .unwrap_or(0);
    let w = |x: &[f64]| -> f64 {
        pert.direction
            .iter()
            .map(|t| {
                let phase: f64 = g.omega(&t.k).iter().zip(x).map(|(a, b)| a * b).sum();
                t.cos * phase.cos() + t.sin * phase.sin()
            })
            .sum()
    };
    let truth = timer.stage("truth", || -> Result<_> {
        let eig = truth_system(&f, cfg, sp)?;
        let contour = select_contour(&eig, sp.target, sp.gap)?;
        spectral_projector(&eig, &contour)
    })?;
    let lattice = FrequencySet::new(g.clone(), f.cutoff() + reach);
    let points = (4 * (2 * lattice.cutoff() + 1)).max(16);
    let mut eps: Vec<f64> = pert.epsilons.clone();
    eps.sort_by(|a, b| b.total_cmp(a));
    let rows = timer.stage("perturbations", || -> Result<Vec<(f64, f64, f64)>> {
        eps.par_iter()
            .map(|&e| {
                let raw = FourierField::from_real_fn(lattice.clone(), points, |x| f.evaluate(x) * (1.0 + e * w(x)))?;
                let mass = raw.mass().re;
                let h = DensityModel::new(raw.scale(1.0 / mass), f.constants())?;
                let eig = solve_spectrum(&Arc::new(assemble_pencil(&h, cfg.alpha, sp.cutoff, sp.oversample)?))?;
                let contour = select_contour(&eig, sp.target, sp.gap)?;
                let p = spectral_projector(&eig, &contour)?;
                let d2 = angle_dq(&truth, &p, 2.0, sp.angle_grid)?.value;
                let diff = f.field().resample(lattice.clone())?.sub(h.field())?;
                Ok((e, d2, h_minus_one_norm(&diff)))
            })
            .collect()
    })?;
    let mut csv = String::from("epsilon,D2,h_minus_one,ratio,D2_over_eps\n");
    for &(e, d2, hm) in &rows {
        let _ = writeln!(csv, "{e},{d2:.12e},{hm:.12e},{:.12e},{:.12e}", d2 / hm, d2 / e);
    }
    let ratios: Vec<f64> = rows.iter().map(|r| r.1 / r.2).collect();
    let (lo, hi) = ratios.iter().fold((f64::INFINITY, 0.0f64), |(a, b), &r| (a.min(r), b.max(r)));
    let spread = cfg.expect.ratio_spread.unwrap_or(3.0);
    let lin_tol = cfg.expect.linear_tolerance.unwrap_or(0.1);
    let mut checks = vec![Check::new(
        "ratio-bounded",
        lo > 0.0 && hi / lo <= spread,
        format!("D2/‖f − h_ε‖_H⁻¹ in [{lo:.5}, {hi:.5}]: max/min {:.4} (limit {spread})", hi / lo),
    )];
    if rows.len() >= 2 {
        let a = &rows[rows.len() - 2];
        let b = &rows[rows.len() - 1];
        let (sa, sb) = (a.1 / a.0, b.1 / b.0);
        let change = (sa - sb).abs() / sb;
        checks.push(Check::new(
            "linear-in-epsilon",
            change <= lin_tol,
            format!("D2/ε = {sa:.6} at ε = {}, {sb:.6} at ε = {}: relative change {change:.4} (limit {lin_tol})", a.0, b.0),
        ));
    }
    Ok(Parts {
        risk_csv: csv,
        report: json!({
            "rows": rows.iter().map(|&(e, d2, hm)| json!({"epsilon": e, "D2": d2, "h_minus_one": hm, "ratio": d2 / hm})).collect::<Vec<_>>(),
            "rank": truth.rank(),
        }),
        series: vec![
            PlotSeries::new("D2", rows.iter().map(|r| (r.0, r.1)).collect()),
            PlotSeries::new("H^-1 distance", rows.iter().map(|r| (r.0, r.2)).collect()),
        ],
        x_label: "epsilon",
        y_label: "size",
        checks,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn tiny(kind: &str, extra: &str) -> ExperimentConfig {
        ExperimentConfig::from_toml(&format!(
            r#"
kind = "{kind}"
name = "tiny"
seed = 11
replications = 3
n_grid = [128, 256, 512]
{extra}

[density]
side_lengths = [1.0]
kind = "trig"
terms = [{{ k = [1], cos = 0.5, sin = 0.0 }}]
"#
        ))
        .unwrap()
    }

    #[test]
    fn density_rate_is_reproducible() {
        let cfg = tiny("density-rate", "");
        let a = run_experiment(&cfg).unwrap();
        let b = run_experiment(&cfg).unwrap();
        assert_eq!(a.risk_csv, b.risk_csv);
        assert_eq!(a.report, b.report);
        assert_eq!(a.risk_csv.lines().count(), 1 + 9);
        assert!(a.checks.iter().any(|c| c.name == "error-budget" && c.passed));
    }

    #[test]
    fn seeds_are_distinct_per_cell() {
        let mut seen = std::collections::BTreeSet::new();
        for i in 0..4 {
            for r in 0..50 {
                assert!(seen.insert(replication_seed(7, i, r)));
            }
        }
    }

    #[test]
    fn errors_count_against_the_budget() {
        // a floor above the density makes every pilot fail
        let mut cfg = tiny("density-rate", "floor = 5.0");
        cfg.replications = 2;
        let out = run_experiment(&cfg).unwrap();
        assert!(!out.passed());
        assert_eq!(out.report["errors"].as_array().unwrap().len(), 6);
    }
}
