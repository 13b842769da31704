//! File formats, reports and the training pipeline behind the `duc-hdc`
//! command line tool.

pub mod error;
pub mod formats;
pub mod pipeline;
pub mod report;

pub use error::{Error, Result};
