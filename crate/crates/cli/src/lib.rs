//! Experiment harness behind the `meanfield` binary.

pub mod config;
pub mod run;
pub mod svg;
pub mod verify;
