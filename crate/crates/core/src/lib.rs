//! Reranking the unordered inputs of symmetric LLM tasks.
//!
//! A symmetric task asks a query over a bag of elements whose order cannot
//! change the correct answer — yet LLMs forget content at some positions of
//! a long prompt more than at others. This crate learns a per-position
//! exposure profile of a target model (once, as pre-processing), estimates
//! how relevant each element is to a query with a cheap helper model, and
//! arranges high-relevance elements into high-exposure positions before the
//! prompt is sent.
//!
//! The numeric kernels (utility, ranking, bias solving, least squares) are
//! generic over the scalar type via [`scalar::Real`]; the pipeline uses the
//! [`Scalar`] alias.

pub mod backend;
pub mod error;
pub mod exposure;
pub mod harness;
pub mod linalg;
pub mod rank;
pub mod relevance;
pub mod scalar;
pub mod seed;
pub mod tasks;
pub mod types;

/// Scalar type of the concrete pipeline.
pub type Scalar = f64;

/// Exposure profile at pipeline precision.
pub type Profile = types::ExposureProfile<Scalar>;
/// Relevance vector at pipeline precision.
pub type Relevance = types::RelevanceVector<Scalar>;

pub use error::{Error, ErrorKind, Result};
pub use rank::{optimal_ranking, proximity, utility};
pub use types::{Answer, Element, ExposureProfile, Oracle, Ranking, RelevanceMethod,
    RelevanceVector, Task};
