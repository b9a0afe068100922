//! Win-probability forecasting for B2B sales opportunities.
//!
//! The crate turns a CRM export of closed sales opportunities into a scoring
//! model for open ones:
//!
//! 1. [`ingest`] parses and validates opportunity CSV files and performs the
//!    deterministic train/test split.
//! 2. [`enhance`] builds per-category lookup tables on the training split
//!    (win rates, contract-value moments, a 1-D Mahalanobis distance) and
//!    expands records into a dense numeric feature matrix.
//! 3. [`gbdt`] is a from-scratch second-order gradient-boosted tree learner
//!    with level-wise and leaf-wise growth.
//! 4. [`ensemble`] trains a fixed 34-member hyperparameter schedule, weighs
//!    members by cross-validated accuracy and soft-votes their probabilities.
//! 5. [`calibrate`] picks per-(segment × value-quartile) decision boundaries
//!    that maximize correct classifications.
//! 6. [`metrics`] reports statistical and monetary performance plus ROC/AUC.
//! 7. [`pipeline`] wires the stages together, persists model artifacts and
//!    serves a scoring endpoint ([`serve`]).
//!
//! [`synth`] generates seeded synthetic opportunity histories with a planted,
//! tunable signal so every stage can be exercised end to end without CRM data.
//!
//! All stages are deterministic: fixed seeds and inputs reproduce artifacts
//! and prediction reports byte for byte.

pub mod calibrate;
pub mod enhance;
pub mod ensemble;
mod error;
pub mod gbdt;
pub mod ingest;
pub mod metrics;
pub mod pipeline;
pub mod serve;
pub mod synth;

pub use error::{Error, Result};
