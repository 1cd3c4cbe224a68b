//! Quantum-like modeling of destructive interference between causes.
//!
//! Two commuting "cause" projectors `A`, `B` (and optionally `C`) each raise
//! the probability of an effect `D`, yet conditioning on their conjunction
//! lowers it. The [`models`] module builds the 6- and 12-dimensional models,
//! [`quantum`] supplies Born and Lüders probabilities, [`classical`] is a
//! Kolmogorovian oracle showing the same pattern is impossible under
//! independence assumptions, and [`fit`] tunes model parameters to target
//! probabilities.

pub mod classical;
pub mod cli;
pub mod fit;
pub mod linalg;
pub mod models;
pub mod optim;
pub mod quantum;
pub mod targets;

pub use linalg::{ComplexMatrix, ComplexScalar, ComplexVector, LinalgError};
pub use models::{
    build_three_cause, build_toy_witness, build_two_cause, evaluate_report, solve_independence_a1,
    sweep_r, ModelInstance, ModelSpec, ProbabilityReport, RootChoice, ThreeCauseParams,
    TwoCauseParams,
};
pub use quantum::{
    born_probability, conditional_on_complement, conditional_probability, ltp_interference,
    luders_condition, DensityOperator, ProjectorObservable, PureState, QuantumError,
};
