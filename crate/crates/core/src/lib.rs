pub mod checker;
pub mod config;
pub mod error;
pub mod harness;
pub mod ids;
pub mod lang;
pub mod llm;
pub mod pipeline;
pub mod project;
pub mod registry;
pub mod review;
pub mod server;
pub mod store;
pub mod testgen;
pub mod trace;

pub use error::{Error, Result};
