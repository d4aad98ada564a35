//! Command-line front end: configuration parsing and command runners.

pub mod config;
pub mod run;
