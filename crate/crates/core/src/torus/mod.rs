//! Flat-torus geometry, Fourier representation, norms and the projection family.

mod fft;
mod field;
mod lattice;
mod norm;
mod taper;

pub use fft::fft_nd;
pub use field::{analyze, analyze_into, synthesize, FourierField, GridField};
pub use lattice::{frequency_lattice, FrequencySet, TorusGeometry};
pub use norm::{besov_shell, compute_norm, grid_lp_norm, h_minus_one_norm, sobolev2_norm, NormSpec};
pub use taper::{check_level, taper_projection, ProjectionFamily, Taper};
