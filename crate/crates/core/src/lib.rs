//! User-story quality scoring trained on a project's own backlog.
//!
//! The pipeline imports a CSV backlog, fits TF-IDF, topic and glossary
//! artifacts into a versioned [`pipeline::ModelBundle`], and scores stories
//! on eight metrics with percentile bands.

pub mod cli;
pub mod corpus;
pub mod evalstats;
pub mod glossary;
pub mod interpret;
pub mod metrics;
pub mod models;
pub mod pipeline;
pub mod server;
pub mod textproc;
