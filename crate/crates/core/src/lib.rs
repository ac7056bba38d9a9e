pub mod commands;
pub mod config;
pub mod corpus;
pub mod curation;
pub mod datamodel;
pub mod detector;
pub mod error;
pub mod gateways;
pub mod index;
pub mod jsonl;
pub mod metrics;
pub mod retrieval;

pub use error::{Error, Result};
