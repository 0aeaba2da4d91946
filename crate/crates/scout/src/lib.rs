//! File formats, configuration and command implementations around
//! [`scout_core`].

pub mod checkpoint;
pub mod commands;
pub mod config;
pub mod data;
pub mod error;
pub mod export;
pub mod manifest;

pub use error::{Error, Result};
