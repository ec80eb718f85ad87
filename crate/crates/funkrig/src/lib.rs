//! Kriging for functional responses from computer experiments.
//!
//! Each experimental run produces a whole response profile over an index
//! (depth, time, distance). This crate fits a universal kriging model to
//! such data with a separable product correlation, exploiting the Kronecker
//! factorization `R_X ⊗ R_t` on regular grids so that likelihood evaluation
//! costs O(n³ + m³) instead of O(n³m³). Profiles observed on run-specific
//! (irregular) grids are completed onto the union grid by a Gibbs-style EM
//! algorithm that conditions each run on its own observations and on the
//! other runs' completed profiles, after which the fast regular-grid path
//! applies.
//!
//! The pipeline:
//! 1. optional decay transform of the raw profiles ([`stage1`]),
//! 2. marginal mean models in `t` and `x` with forward basis selection and
//!    initial correlation rates ([`stage1`]),
//! 3. regular-grid fit ([`kriging`]) or EM completion ([`em`]),
//! 4. prediction with confidence intervals, min-max optimization over the
//!    design space, main-effect sensitivity curves, and cross-validation
//!    ([`kriging`], [`analysis`]).
//!
//! Deliberately naive dense reference implementations live in [`oracle`];
//! they exist to validate the structured paths and to quantify the speedup.
//!
//! See the crate examples for runnable end-to-end walkthroughs of each
//! capability, and the `funkrig` binary for the file-driven CLI.

pub mod analysis;
pub mod basis;
pub mod cli;
pub mod config;
pub mod corr;
pub mod dataset;
pub mod design;
pub mod em;
pub mod error;
pub mod generate;
pub mod io;
pub mod kriging;
pub mod model_file;
pub mod oracle;
pub mod pipeline;
pub mod stage1;
pub mod util;

pub use basis::BasisSpec;
pub use corr::{CorrParams, PowerExponent};
pub use dataset::{FunctionalDataset, Profile};
pub use design::{Design, VarKind};
pub use error::{Error, Result};
pub use kriging::{FitOpts, KrigingModel};
