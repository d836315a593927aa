//! h*: a test statistic for evaluating global outliers without assuming
//! normality of the data.
//!
//! The statistic is the ratio of the rms distance from the candidate
//! outlier to the rms pairwise distance among the ordinary data. This crate
//! provides its exact computation ([`stat`]), simulated null distributions
//! and critical-value tables for arbitrary priors ([`montecarlo`]), the
//! intersection-union identification procedure ([`iut`]), power and
//! sample-size studies ([`power`]), a Bayesian posterior pipeline
//! ([`bayes`]), a paired-samples treatment-effect test ([`paired`]), and
//! the I-index uniqueness metric ([`unique`]).

pub mod bayes;
pub mod dist;
pub mod iut;
pub mod montecarlo;
pub mod paired;
pub mod power;
pub mod stat;
pub mod unique;

pub use dist::{DistributionSpec, FitDiagnostics, FitKind, GofTest, Seed};
pub use montecarlo::{CriticalValueTable, NullDistribution, NullStore};
pub use stat::{
    difference_space, h_star_algebraic, h_star_definitional, h_star_generalized,
    h_star_weighted, h_star_with_candidate, HStarOutcome, Sample, Side, WeightSpec,
};
