//! Spectral projectors, the `D_q` angle, cluster means and the plug-in eigenspace estimator.

mod angle;
mod plugin;

use std::ops::Range;

use crate::error::{Error, Result};
use crate::laplacian::{group_clusters, CMatrix, EigenSystem, CONTOUR_MARGIN};

pub use angle::{angle_dq, angle_grid_points, AngleReport, AngleTerm};
pub use crate::laplacian::{contour_projector, Contour, ProjectorRep, ProjectorSource};
pub use plugin::{
    evaluate_coords, plugin_eigenspace, procrustes_loss, EigenspaceRisk, EigenspaceSettings, PluginOutcome,
    SpectralTruth, RISK_CSV_HEADER,
};

/// Index range of the cluster (consecutive gaps below `gap`) holding `target`.
pub fn cluster_of(eig: &EigenSystem, target: usize, gap: f64) -> Result<Range<usize>> {
    if target >= eig.len() {
        return Err(Error::Config(format!("target index {target} outside spectrum of size {}", eig.len())));
    }
    if !(gap > 0.0) {
        return Err(Error::Config(format!("gap δ = {gap} must be positive")));
    }
    Ok(group_clusters(eig.values(), gap)
        .into_iter()
        .find(|r| r.contains(&target))
        .expect("clusters cover the spectrum"))
}

/// Circle of radius `δ/2` about the mean of the cluster holding `λ_target`.
pub fn select_contour(eig: &EigenSystem, target: usize, gap: f64) -> Result<Contour> {
    let cluster = cluster_of(eig, target, gap)?;
    let values = eig.values();
    let mean = values[cluster.clone()].iter().sum::<f64>() / cluster.len() as f64;
    let radius = gap / 2.0;
    let slack = CONTOUR_MARGIN * radius;
    for (i, &v) in values.iter().enumerate() {
        let d = (v - mean).abs();
        let bad = if cluster.contains(&i) { d >= radius - slack } else { d <= radius + slack };
        if bad {
            let below = cluster.start.checked_sub(1).map(|j| values[j]);
            let above = values.get(cluster.end).copied();
            return Err(Error::GapViolation(format!(
                "cluster {:?} of λ_{target} (mean {mean:.6}) is not isolated by δ = {gap}: offending eigenvalue {v:.6}, \
                 neighbours {below:?} and {above:?}",
                &values[cluster.clone()]
            )));
        }
    }
    Contour::circle(mean, radius)
}

/// `Σ g_i ⟨·, g_i⟩_f` over the enclosed eigenpairs.
pub fn spectral_projector(eig: &EigenSystem, contour: &Contour) -> Result<ProjectorRep> {
    let inside = contour.enclosed(eig.values(), CONTOUR_MARGIN)?;
    if inside.is_empty() {
        return Err(Error::EmptyContour);
    }
    let p = eig.len();
    let mut basis = CMatrix::zeros(p, inside.len());
    for (j, &i) in inside.iter().enumerate() {
        basis.set_column(j, &eig.vectors().column(i));
    }
    let pencil = eig.pencil();
    Ok(ProjectorRep::from_basis(pencil.freqs().clone(), pencil.mass(), basis, ProjectorSource::Eigen))
}

/// Average of the enclosed eigenvalues.
pub fn cluster_mean(eig: &EigenSystem, contour: &Contour) -> Result<f64> {
    let inside = contour.enclosed(eig.values(), CONTOUR_MARGIN)?;
    if inside.is_empty() {
        return Err(Error::EmptyContour);
    }
    Ok(inside.iter().map(|&i| eig.value(i)).sum::<f64>() / inside.len() as f64)
}

/// `−tr(Δ_f Π)/N`, computed as `tr(M⁻¹ S Π)/N` from the pencil and the projector matrix.
pub fn trace_mean(eig: &EigenSystem, projector: &ProjectorRep) -> Result<f64> {
    let pencil = eig.pencil();
    let sp = pencil.stiffness() * projector.matrix();
    let op = pencil
        .mass()
        .clone()
        .lu()
        .solve(&sp)
        .ok_or_else(|| Error::Numerical("mass matrix is singular".into()))?;
    if projector.rank() == 0 {
        return Err(Error::EmptyContour);
    }
    Ok(op.trace().re / projector.rank() as f64)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::density::{make_density, DensityShape, DensitySpec};
    use crate::laplacian::{assemble_pencil, solve_spectrum};
    use crate::torus::FourierField;
    use std::f64::consts::PI;
    use std::sync::Arc;

    fn system(spec: &DensitySpec, cutoff: usize) -> EigenSystem {
        let f = make_density(spec).unwrap();
        let p = Arc::new(assemble_pencil(&f, 1.0, cutoff, 4).unwrap());
        solve_spectrum(&p).unwrap()
    }

    #[test]
    fn contour_selection_examples() {
        let e = system(&DensitySpec::unit_1d(DensityShape::Uniform), 6);
        let c = select_contour(&e, 1, 10.0).unwrap();
        assert!((c.center().re - 4.0 * PI * PI).abs() < 1e-9);
        assert_eq!(c.radius(), 5.0);
        assert_eq!(spectral_projector(&e, &c).unwrap().rank(), 2);
        let c0 = select_contour(&e, 0, 1.0).unwrap();
        assert_eq!((c0.center().re.abs() < 1e-8, c0.radius()), (true, 0.5));
        assert!(matches!(select_contour(&e, 1, 300.0), Err(Error::GapViolation(_))));
    }

    #[test]
    fn uniform_pair_projector_action() {
        let e = system(&DensitySpec::unit_1d(DensityShape::Uniform), 4);
        let c = select_contour(&e, 1, 10.0).unwrap();
        let p = spectral_projector(&e, &c).unwrap();
        let freqs = e.pencil().freqs().clone();
        let one = FourierField::plane_wave(freqs.clone(), freqs.index_of(&[1]).unwrap());
        let two = FourierField::plane_wave(freqs.clone(), freqs.index_of(&[2]).unwrap());
        assert!(p.apply(&one).unwrap().sub(&one).unwrap().l2_norm() < 1e-12);
        assert!(p.apply(&two).unwrap().l2_norm() < 1e-12);
        assert!((cluster_mean(&e, &c).unwrap() - 39.478_417_6).abs() < 1e-6);
        let c0 = select_contour(&e, 0, 1.0).unwrap();
        assert!(cluster_mean(&e, &c0).unwrap().abs() < 1e-8);
    }

    #[test]
    fn trace_identity() {
        let e = system(&DensitySpec::cosine_1d(1, 0.5), 12);
        for target in [1, 3] {
            let c = select_contour(&e, target, 10.0).unwrap();
            let p = spectral_projector(&e, &c).unwrap();
            let a = cluster_mean(&e, &c).unwrap();
            let b = trace_mean(&e, &p).unwrap();
            assert!((a - b).abs() <= 1e-9 * a.abs().max(1.0), "{a} vs {b}");
        }
    }

    #[test]
    fn orthogonal_rank_one_angle() {
        let e = system(&DensitySpec::unit_1d(DensityShape::Uniform), 3);
        let p0 = spectral_projector(&e, &select_contour(&e, 0, 1.0).unwrap()).unwrap();
        // projector onto span{φ_1}
        let freqs = e.pencil().freqs().clone();
        let mut basis = CMatrix::zeros(e.len(), 1);
        basis[(freqs.index_of(&[1]).unwrap(), 0)] = num_complex::Complex64::new(1.0, 0.0);
        let p1 = ProjectorRep::from_basis(freqs, e.pencil().mass(), basis, ProjectorSource::Eigen);
        let r = angle_dq(&p0, &p1, 2.0, None).unwrap();
        assert!((r.forward.value - 1.0).abs() < 1e-12 && (r.backward.value - 1.0).abs() < 1e-12);
        assert!((r.value - 2.0).abs() < 1e-12);
        for q in [2.0, 4.0, f64::INFINITY] {
            assert!(angle_dq(&p0, &p0, q, None).unwrap().value < 1e-12);
        }
    }
}
