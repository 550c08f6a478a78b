//! Experiment harness behind the `jfsce` binary: configuration, the Monte
//! Carlo runners, and CSV emission. Exposed as a library so the acceptance
//! suite can drive the same code paths the CLI does.

pub mod config;
pub mod csv;
pub mod experiments;
