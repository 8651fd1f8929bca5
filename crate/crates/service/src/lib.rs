//! Command-line tools and the HTTP API over the analysis engine.

pub mod api;
pub mod cli;
pub mod state;
