//! Core algorithms for factor-based worker modeling: linear task-completion
//! models, naive-Bayes outcome probabilities, expected-error bootstrapping of
//! new workers, elicitation question selection (k-ExFactor), and preference
//! aggregation with constrained refits.
//!
//! The crate is `no_std` + `alloc` so the numerical kernels can run inside
//! embedded or wasm hosts; everything IO-shaped lives in the companion
//! `exfactor` binary crate.

#![no_std]
#![forbid(unsafe_code)]

extern crate alloc;

#[cfg(test)]
extern crate std;

pub mod aggregator;
pub mod bootstrap;
pub mod error;
pub mod linalg;
pub mod model;
pub mod outcome;
pub mod seed;
pub mod selector;

pub use aggregator::{
    constrained_fit, ranking_to_constraints, ConstraintStore, HistoryMode, PreferenceConstraint,
    StampedConstraint, DEFAULT_MARGIN,
};
pub use bootstrap::{
    default_mc_samples, expected_reconstruction_error, greedy_bootstrap, random_bootstrap,
    uniform_model, BootstrapPlan, EvalMode, MAX_EXACT_BUDGET,
};
pub use error::{Error, Result};
pub use linalg::{gram, ridge_solve, trace_inverse_gram, Matrix, INFINITE_OBJECTIVE};
pub use model::{select_alpha_gcv, LabeledTasks, WorkerModel, DEFAULT_ALPHA_GRID};
pub use outcome::OutcomeProbabilityModel;
pub use seed::mix_seed;
pub use selector::{brute_force_selector, k_exfactor, k_random, QuestionSet};
