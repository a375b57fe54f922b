//! File formats, the multi-threaded driver and the commands behind the
//! `pstf` binary.

pub mod commands;
pub mod config;
pub mod driver;
pub mod error;
pub mod image;
pub mod scene_format;
pub mod sidecar;
pub mod snapshot;

pub use error::Error;
pub use pstf_core as core;
