//! Command-line front end and HTTP service around `bokeh-core`.
//!
//! The binary is `bokeh`; [`cli`] holds its argument definitions and command
//! implementations, [`service`] the axum router behind `bokeh serve`.

pub mod cli;
pub mod focus;
pub mod service;
