//! Test densities, exact sampling and the projection density estimator.

mod bump;
mod estimate;
mod model;
mod sampling;

pub use bump::{BumpLatticeSpec, BumpProfile};
pub use estimate::{bandwidth, empirical_projection, estimate_density, BandwidthRule, DensityEstimate};
pub use model::{
    make_density, DensityModel, DensityShape, DensitySpec, GaussComponent, ModelConstants, TrigTerm,
    CHECK_OVERSAMPLE,
};
pub use sampling::{derive_seed, mix64, sample, SampleSet, ENVELOPE_MARGIN};
