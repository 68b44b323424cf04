//! Configuration-driven front end for `hte-core`: benchmark runs, fits on a
//! user dataset and overlap diagnostics.

pub mod commands;
pub mod config;
