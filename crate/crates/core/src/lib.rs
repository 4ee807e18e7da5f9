//! Equivalence testing for functional data.
//!
//! Two engines share one data model:
//!
//! - [`tost`]: a frequentist Two One-Sided Test driven by the nonparametric
//!   bootstrap under independent, matched-pair and random-effects designs.
//! - [`bayes`]: a Gaussian-process model with Log-GP variance curves, sampled
//!   by Metropolis-within-Gibbs, that reports posterior probabilities of
//!   equivalence and simultaneous credible bands.
//!
//! [`simlab`] generates synthetic studies and measures empirical size and
//! power; [`io`], [`report`] and [`cli`] handle files and the `feqt` binary.

pub mod bayes;
pub mod cli;
pub mod error;
pub mod estimators;
pub mod fdata;
pub mod io;
pub mod report;
pub mod rng;
pub mod simlab;
pub mod stats;
pub mod tost;

pub use error::{Error, Result};
pub use fdata::{
    make_cosine_bands, BandKind, BandPair, CurveMatrix, FunctionalSample, Grid, GroupedPairedSample,
    PairedFunctionalSample,
};
