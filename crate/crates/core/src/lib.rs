//! Inherent and active nodality of actors in topic-labelled interaction
//! networks.
//!
//! The pipeline runs event ingestion, weak topic labelling, topic/null
//! network construction, centrality, PCA-based nodality scoring, transfer
//! entropy influence estimates and a group-level regression.

pub mod centrality;
pub mod error;
pub mod graph;
pub mod influence;
pub mod ingest;
pub mod nodality;
pub mod par;
pub mod pipeline;
pub mod regress;
pub mod synth;
pub mod types;
pub mod weaklabel;

pub use error::{Error, Result};
