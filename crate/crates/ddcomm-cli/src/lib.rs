//! Configuration-driven experiment runner for the `ddcomm` library.
//!
//! [`config`] loads and validates experiment files, [`link`] and
//! [`spectrum`] run the Monte Carlo and PSD experiments, [`commands`] maps
//! subcommands to output tables and [`output`] writes them with a manifest.

pub mod commands;
pub mod config;
pub mod link;
pub mod output;
pub mod spectrum;
