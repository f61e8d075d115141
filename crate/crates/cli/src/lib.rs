//! Command-line driver: dataset container I/O, config files and the
//! `simulate`, `reconstruct` and `inspect` commands.

pub mod args;
pub mod commands;
pub mod config;
pub mod container;
