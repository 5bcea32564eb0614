//! Learning treatment policies that generalize from selection-biased trial
//! data to a target population.
//!
//! Training data collected under an unknown selection mechanism is modeled as
//! draws from `P(· | S = 1)` for a latent selection indicator `S`. The density
//! ratio between target and training distributions is then
//! `R = P(S=1) / P(S=1 | X, T, Y)`, and bounding the selection odds ratio by a
//! factor `Γ` confines `R` to a box `[l, u]`. This crate maximizes the
//! self-normalized (Hajek) policy-value estimate over that box in closed form
//! and minimizes the resulting worst-case value over a parameterized policy
//! class with a tailored convex-concave procedure.
//!
//! Modules follow the pipeline:
//!
//! - [`dataset`]: trial data containers, CSV ingestion, and the synthetic
//!   benchmark generator with oracle selection probabilities.
//! - [`policy`]: logistic and linear policy classes with their
//!   difference-of-convex decompositions.
//! - [`nuisance`]: outcome/behavior-model fitting and the DM / NIPW / DR
//!   per-sample scores in affine-in-π form.
//! - [`worstcase`]: odds-ratio bounds, Hajek estimator, and the closed-form
//!   worst-case policy value.
//! - [`dcopt`]: DC surrogate construction and the minimax convex-concave
//!   optimizer over a box-constrained parameter space.
//! - [`calibrate`]: data-driven calibration of `Γ` and `P(S=1)` from one
//!   shared covariate.
//! - [`cli`]: command implementations backing the `oplgen` binary.

pub mod calibrate;
pub mod cli;
pub mod dataset;
pub mod dcopt;
pub mod nuisance;
pub mod policy;
pub mod worstcase;

pub use dataset::{SimulatedSample, SimulationConfig, TrialDataset};
pub use dcopt::{DcObjective, MmccpConfig, MmccpResult};
pub use nuisance::{NuisanceModels, ScoreMethod, ScoreVector};
pub use policy::{PolicyKind, PolicyParams, PolicySpec};
pub use worstcase::{UncertaintySet, WorstCaseSolution};
