//! Experiment configuration, Monte Carlo driver, rate fits and report emission.

mod config;
mod fit;
mod plot;
mod run;
mod selftest;

pub use config::{
    BandwidthSection, EstimatorKind, ExpectSection, ExperimentConfig, ExperimentKind, FunctionalName, FunctionalSection,
    PerturbationSection, SelftestSection, SpectralSection,
};
pub use fit::{fit_points, fit_rate, RateFit, RiskRow, RiskTable};
pub use plot::{plot_csv, plot_svg, PlotSeries};
pub use run::{replication_seed, run_experiment, Check, ExperimentOutput, ERROR_BUDGET};
pub use selftest::{run_selftest, CheckResult, SELFTEST_CHECKS};
