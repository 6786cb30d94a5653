//! Weighted Laplacian `-Δ_f` as a Hermitian pencil in `L²(f^α)`.

mod eigen;
mod pencil;
mod projector;
mod resolvent;

pub use eigen::{group_clusters, solve_spectrum, EigenSystem};
pub use pencil::{assemble_pencil, power_times, power_weight, weighted_forms, CMatrix, SpectralPencil, DEFAULT_OVERSAMPLE};
pub use projector::{ProjectorRep, ProjectorSource};
pub use resolvent::{
    contour_projector, coords_of, resolvent_apply, shifted_operator_apply, Contour, CONTOUR_MARGIN, DEFAULT_NODES,
    RESOLVENT_MARGIN,
};
