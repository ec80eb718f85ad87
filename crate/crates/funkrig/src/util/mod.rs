//! Small numeric utilities shared across modules.

pub mod linalg;
pub mod optim;
pub mod quasi;
pub mod stats;
