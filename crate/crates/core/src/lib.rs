//! Rectified high-order proximity for sparse graphs.
//!
//! The pipeline reads an edge list into a [`graph::Graph`], computes the
//! shortest-path proximity orders with [`proximity::compute_stack`],
//! assembles a decay-weighted similarity with
//! [`similarity::assemble_similarity`], trains node embeddings on it with
//! [`embedding::train`] and scores them with the protocols in
//! [`evaluation`].

pub mod alias;
pub mod embedding;
pub mod error;
pub mod evaluation;
pub mod generators;
pub mod graph;
pub mod io;
pub mod oracle;
pub mod pipeline;
pub mod proximity;
pub mod similarity;
pub mod sparse;

pub use error::{Error, Result};
