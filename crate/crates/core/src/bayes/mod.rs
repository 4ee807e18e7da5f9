//! Bayesian equivalence testing with Gaussian-process priors.
//!
//! The model is specified by a [`PriorSpec`]; [`run_mwg`] samples the
//! posterior and [`posterior_equivalence_prob`] and
//! [`simultaneous_bands`] summarize it. Prior scales can be chosen with
//! [`calibrate_prior_scale`] so that the prior probability of equivalence
//! matches a target.

pub mod bessel;
pub mod calibrate;
pub mod geweke;
pub mod kernel;
pub mod model;
pub mod mvn;
pub mod mwg;
pub mod posterior;

pub use calibrate::{calibrate_prior_scale, prior_equivalence_prob, Calibration};
pub use kernel::{log_gp_prior_logdensity, matern_corr, GpPrior, MaternKernel, SimplifiedCorr};
pub use model::{
    sample_prior_state, simulate_data_given_state, BandSide, CurvePrior, HyperPrior, ModelState, PriorSpec,
};
pub use mvn::{mvn_rectangle_prob, MvnAccuracy, MvnEstimate};
pub use mwg::{run_mwg, MwgConfig, MwgSampler};
pub use posterior::{
    metric_simultaneous_bands, posterior_equivalence_prob, simultaneous_bands, simultaneous_bands_for,
    EquivalenceProbabilities, PosteriorDraws, SimultaneousBand,
};
