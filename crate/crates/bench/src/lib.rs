//! Shared fixtures for the criterion benches in `benches/`.

use wlap_core::density::{make_density, sample, DensityModel, DensitySpec, SampleSet};
use wlap_core::functional::Form;
use wlap_core::torus::{FourierField, FrequencySet};

/// `1 + 0.5 cos(2πx)` on the unit circle.
pub fn cosine_density() -> DensityModel {
    make_density(&DensitySpec::cosine_1d(1, 0.5)).expect("catalog density")
}

pub fn draw(f: &DensityModel, n: usize) -> SampleSet {
    sample(f, n, 7).expect("sampler")
}

/// `∫ v_1 ⋯ v_J` against the constant weight.
pub fn product_form(f: &DensityModel, order: usize) -> Form {
    let one = FourierField::constant(FrequencySet::new(f.geometry().clone(), 0), 1.0);
    Form::Product { order, weight: one }
}
