//! Dataset directories, checkpoints, cross-validated experiments and the
//! `vesselgnn` command line, built on [`vesselgnn_core`].

pub mod checkpoint;
pub mod cli;
pub mod error;
pub mod experiments;
pub mod io;
pub mod report;

pub use error::{Error, Result};
pub use vesselgnn_core as core;
