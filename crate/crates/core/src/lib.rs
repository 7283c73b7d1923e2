//! Bayesian optimization of expensive black-box functions over mixed
//! discrete/continuous domains with known linear and quadratic constraints on
//! the discrete variables.
//!
//! The surrogate is a Bayesian linear model over a fixed feature map that
//! combines a quadratic pseudo-Boolean expansion of the binary inputs, random
//! Fourier features of the continuous inputs, and all pairwise products of the
//! two. Queries are chosen by Thompson sampling: a weight vector is drawn from
//! the posterior and the resulting acquisition is minimized by alternating
//! between an exact binary quadratic program solver and a multi-start
//! projected-gradient continuous solver.
//!
//! Module map:
//! * [`domain`]: search space, variable encodings, constraint sets
//! * [`features`]: the frozen feature expansion
//! * [`blr`]: conjugate posterior and weight sampling
//! * [`discrete_opt`]: constrained binary quadratic minimization
//! * [`continuous_opt`]: box-constrained multi-start descent
//! * [`acquisition`]: conditioning reductions, alternation, the BO loop
//! * [`dual_decomp`]: Lagrangian dual decomposition acquisition optimizer
//! * [`benchmarks`]: objectives, baselines, metrics
//! * [`experiment`]: declarative experiment configs and the seeded runner
//! * [`trace`]: per-iteration trace records and their CSV form

pub mod acquisition;
pub mod benchmarks;
pub mod blr;
pub mod continuous_opt;
pub mod discrete_opt;
pub mod domain;
pub mod dual_decomp;
mod error;
pub mod experiment;
pub mod features;
pub mod rng;
pub mod trace;

pub use error::{Error, Result};
