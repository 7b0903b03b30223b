pub mod corpus;
pub mod error;
pub mod eval;
pub mod features;
pub mod network;
pub mod pipeline;
pub mod synthetic;
pub mod textproc;
pub mod training;

pub use error::{Error, Result};
