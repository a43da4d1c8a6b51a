//! Flow-adapted distances on discretized vector fields.

pub mod error;
pub mod extension;
pub mod fields;
pub mod flow;
pub mod metric;
pub mod sobolev;
pub mod transport;
pub mod grid;

pub use error::{Error, Result};
