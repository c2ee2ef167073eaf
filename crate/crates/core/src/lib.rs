//! Static-analysis toolkit for studying fingerprinting-like data collection
//! in SDK bytecode.
//!
//! The crate is organized around a small textual intermediate representation
//! ([`ir`]) and a handful of analyses layered on top of it:
//!
//! * [`depgraph`] — SDK manifest ingestion and nearest-wins dependency
//!   resolution, producing the bundle of code an SDK ships with.
//! * [`taint`] — interprocedural, field-sensitive taint propagation from
//!   configured source APIs to network/encryption sinks.
//! * [`coflow`] — grouping of taint flows that converge on a shared sink and
//!   classification of SDKs by how many distinct signals they exfiltrate.
//! * [`vecmath`] / [`sdkmatch`] — hashed sparse feature vectors over method
//!   bodies, inverse-document-frequency weighting, and an inverted-index
//!   matcher that recovers which SDKs are embedded in an app.
//! * [`ingest`] — corpus hygiene: pre-release version filtering, audience
//!   thresholds, label and signal-class taxonomies.
//! * [`stats`] — corpus statistics: prevalence, co-occurrence, sensitive
//!   signal shares, inter-rater agreement, one-hot signal embeddings.
//! * [`fixtures`] — a small, fully deterministic demo corpus used by the
//!   command-line pipeline and the test suite.
//!
//! The numeric core ([`vecmath`] and the weighting half of [`sdkmatch`]) is
//! generic over the scalar type via [`num_traits::Float`]; the aliases below
//! pin the `f64` instantiations used everywhere else.

pub mod coflow;
pub mod depgraph;
pub mod fixtures;
pub mod ingest;
pub mod ir;
pub mod sdkmatch;
pub mod stats;
pub mod taint;
pub mod vecmath;

/// Sparse feature vector over hashed 64-bit dimensions, `f64` weights.
pub type FeatureVector = vecmath::SparseVec<f64>;

/// Corpus-derived per-dimension weights, `f64` instantiation.
pub type WeightTable = sdkmatch::WeightTableOf<f64>;
