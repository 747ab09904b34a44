//! File formats, checkpoint loading and experiment drivers around
//! `straighten-core`.

pub mod checkpoint;
pub mod error;
pub mod formats;
pub mod harness;
pub mod manifest;
pub mod prep;
pub mod vocab;

pub use error::{Error, Result};
