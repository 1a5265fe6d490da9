pub mod cli;
pub mod consistency;
pub mod error;
pub mod flow;
pub mod frame;
pub mod imgio;
pub mod metrics;
pub mod service;
pub mod synthetic;

pub use error::{Error, Result};
pub use frame::{Frame, Mask, WeightMap};
