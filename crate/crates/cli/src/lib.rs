//! Experiment plumbing for the `oddmoments` command: configuration files,
//! the experiment registry, result writers and the verification suites.

pub mod config;
pub mod experiments;
pub mod output;
pub mod verify;
