//! Lorentz-equivariant knowledge-enhanced collaborative filtering.
//!
//! The crate is `no_std` (with `alloc`) and splits into:
//!
//! - [`manifold`]: Lorentz-model geometry kernels (inner product, distance,
//!   hyperboloid projection, boosts/rotations).
//! - [`hsam`]: hyperbolic sparse attention — distance-based coefficients,
//!   entropy-based neighbor importance, top-t selection.
//! - [`iag`]: item attribute generation via hyperbolic-centroid message
//!   passing over the knowledge graph.
//! - [`tape`]: a small vector-valued reverse-mode autodiff tape used by the
//!   training forward pass.
//! - [`lecf`]: the collaborative-filtering layer — edge messages, the learned
//!   Lorentz map, joint attribute/hyperbolic updates.
//! - [`model`]: parameters, forward pass, margin loss, negative sampling,
//!   Riemannian SGD and the training loop.
//! - [`graph`]: the preprocessed graph bundle and pure transforms on it
//!   (frequency filtering, k-hop extraction, splits, degree stats).
//! - [`eval`]: Recall@K / NDCG@K, transformation and sparsity probes.
//! - [`synth`]: deterministic synthetic datasets for smoke testing.
//!
//! File parsing, serialization to disk and the CLI live in the companion
//! `lecf-cli` crate.

#![no_std]
#![forbid(unsafe_code)]

extern crate alloc;

pub mod error;
pub mod eval;
pub mod graph;
pub mod hsam;
pub mod iag;
pub mod lecf;
pub mod manifold;
pub mod math;
pub mod model;
pub mod rng;
pub mod synth;
pub mod tape;

pub use error::Error;
