//! Library surface of the `pat` binary: experiment configuration, dataset
//! generation, and tensor-file helpers, shared with the integration tests.

pub mod config;
pub mod dataset;
pub mod io;
