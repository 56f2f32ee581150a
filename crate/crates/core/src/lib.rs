//! Evaluation and search of crossover designs for multivariate trials under
//! proportional and generalized Markov-type error covariance.
//!
//! The model for response k of subject j in period i is
//! `Y = μ_k + α_{i,k} + β_{j,k} + τ_{d(i,j),k} + ρ_{d(i−1,j),k} + ε`.
//! The crate computes the direct-effect information matrix, its trace bound,
//! relative differences and efficiencies.

pub mod covmodels;
pub mod designs;
pub mod efficiency;
pub mod error;
pub mod fixtures;
pub mod infomat;
pub mod matlib;
pub mod search;

pub use covmodels::{
    markov_case, parse_scenario, CovSpec, Family, Kernel, MarkovScenario, ProportionalScenario, Scenario,
    ScenarioConfig,
};
pub use designs::{classify, Design, DesignClassFlags};
pub use efficiency::{
    attains_bound, efficiency_proportional, relative_difference, sweep, upper_bound_u, CaseSpec, SweepResult,
    SweepSpec, TraceComponents,
};
pub use error::{Error, Result};
pub use infomat::{InfoMatrix, Method, Representation, Structure};
pub use matlib::{Matrix, Tolerance};
pub use search::{RankOptions, SearchReport};
