//! Mean-field model of conspicuous consumption with network and status
//! effects: two goods, income heterogeneity, a social term built from the
//! population's consumption distribution, and a damped best-response solver
//! for the symmetric equilibrium.
//!
//! Consumption of good x is public; the social term
//! S = c_n·N + c_b·A − c_a·D combines a network benefit N that grows with
//! own and mean population consumption, a status advantage A over agents
//! consuming less, and a status disadvantage D against agents consuming
//! more. Upward comparisons weigh at least as much as downward ones
//! (c_a ≥ c_b). The population is a finite weighted income grid; the
//! continuum model's F becomes the weighted empirical CDF with ties
//! counting as weakly below.

mod population;
mod solve;
mod utility;

use thiserror::Error;

pub use population::{social_terms, social_terms_shifted, AgentPopulation, SocialState};
pub use solve::{
    best_response, complementarity_probe, equilibrium, foc_residual, private_optimum,
    ComplementarityReport, EquilibriumOptions, EquilibriumState, ProfileShift, SocialChannelShares,
};
pub use utility::{
    assumption_check, default_grids, AssumptionCheck, AssumptionReport, ModelParams,
    UtilityPartials, Violation,
};

/// Consumption floor inside every logarithm, and the edge margin for the
/// best-response search interval.
pub const CONSUMPTION_FLOOR: f64 = 1e-6;
/// Default sup-norm tolerance for equilibrium convergence.
pub const DEFAULT_EQ_TOL: f64 = 1e-8;
/// Default damping factor for the best-response iteration.
pub const DEFAULT_DAMPING: f64 = 0.5;
/// Default number of income grid points.
pub const DEFAULT_GRID_POINTS: usize = 101;

#[derive(Debug, Error, PartialEq)]
pub enum SimError {
    #[error("invalid parameters: {0}")]
    InvalidParams(String),
    #[error("population is empty")]
    EmptyPopulation,
    #[error("incomes must be finite, positive, and distinct")]
    BadIncomes,
    #[error("weights must be positive and sum to 1, found sum {found}")]
    BadWeights { found: f64 },
    #[error("profile length {found} does not match {expected} incomes")]
    ProfileLength { expected: usize, found: usize },
    #[error("consumption {x} outside [0, {z}] for income {z}")]
    ProfileOutOfBounds { x: f64, z: f64 },
    #[error("consumption {x} outside (0, {z})")]
    ConsumptionOutOfRange { x: f64, z: f64 },
    #[error("social term {s} leaves ln(1+S) undefined")]
    SocialTermUndefined { s: f64 },
    #[error("equilibrium did not converge")]
    NotConverged,
}
