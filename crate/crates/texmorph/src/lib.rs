//! File formats, synthetic experiments and the command-line front end for
//! the `texmorph-core` engine.

pub mod cli;
pub mod config;
pub mod error;
pub mod experiments;
pub mod io;

pub use error::{Error, Result};
pub use texmorph_core as engine;
