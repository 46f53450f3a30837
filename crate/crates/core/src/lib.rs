pub mod cellspace;
pub mod cli;
pub mod corpus;
pub mod error;
pub mod hypersearch;
pub mod eval;
pub mod metrics;
pub mod models;
pub mod nncore;
pub mod synthworld;

pub use error::{Error, Result};
