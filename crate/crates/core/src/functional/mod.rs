//! U-statistics, derivatives of spectral and integral functionals, and debiased estimation.

mod debias;
mod derivatives;
mod integral;
mod ustat;

pub use debias::{
    debiased_estimate, efficiency_variance, influence_variance, DebiasConfig, EstimateReport, FunctionalSpec, SplitRule,
    FLAG_CLIP, FLAG_FD, FLAG_ORDER3, FLAG_RANK,
};
pub use derivatives::{
    closed_form_second_uniform, influence_unchecked, mu_at, mu_first_derivative, mu_second_form, probe_direction,
    FdCheck, InfluenceField, QuadraticForm, FD_STEPS,
};
pub use integral::{derivative_kernel, influence_moments, integral_functional, integral_influence, IntegralKind};
pub use ustat::{
    estimate_cubic_form, estimate_quadratic_form, hoeffding_terms, tree_sum, ustat, Form, HoeffdingTerms, Levels,
    UStatKernel, UStatMode,
};
