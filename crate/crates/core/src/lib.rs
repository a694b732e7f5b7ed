//! Deep-learning methodology extraction from scientific publications with
//! an ensemble of chat-completion endpoints.

pub mod categorize;
pub mod cli;
pub mod config;
pub mod corpus;
pub mod error;
pub mod extraction;
pub mod footprint;
pub mod gateway;
pub mod keywords;
pub mod metrics;
pub mod pipeline;
pub mod prompts;
pub mod report;
pub mod retrieve;
pub mod store;
pub mod tfidf;

pub use error::{Error, Result};
