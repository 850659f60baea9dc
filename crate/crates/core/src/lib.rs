//! Synthesizes instruction-style information-extraction datasets from a text
//! corpus aligned with a knowledge-graph subset, and scores model predictions.

pub mod backend;
pub mod config;
pub mod corpus;
pub mod domain;
pub mod eval;
pub mod kg;
pub mod linker;
pub mod matcher;
pub mod nli;
pub mod pipeline;
pub mod render;
pub mod sampler;
pub mod schema;
pub mod supplement;
pub mod text;
pub mod triple;
