//! Simulation harness and file formats behind the `exfactor` binary.
//!
//! [`sim`] supplies synthetic workers and task pools, [`experiment`] runs the
//! elicitation comparison loop, [`formats`] covers the CSV/JSON files the
//! binary reads and writes, and [`commands`] holds the subcommand bodies.

pub mod commands;
pub mod experiment;
pub mod formats;
pub mod sim;
