//! Approximate r-nets for high-dimensional point sets, and the distance
//! problems that reduce to them.
//!
//! An r-net of a point set is a subset of centers that is packed (centers
//! pairwise at distance at least r) and covering (every point has a center
//! within a small slack of r). This crate builds (1+eps)-approximate r-nets
//! in Hamming space in subquadratic time via randomized sparsification plus
//! a polynomial-threshold indicator matrix, lifts l1 and l2 inputs into
//! Hamming space with randomized embeddings, and then uses the net builder
//! as the engine for distance selection problems: k-th smallest nearest
//! neighbor distance, Min-Max clustering under sketchable families, and
//! k-center in both decider and greedy-permutation flavors.
//!
//! Randomness is fully seeded. Guarantees are Monte Carlo at heart, so at
//! desk scale (n up to a few thousand) every net and clustering is
//! re-verified, and where cheap repaired, against exact distances before it
//! is returned; verification results travel with the output.
//!
//! Layout:
//! - [`dataset`]: point sets, bit sets, seeding, CSV and packed formats
//! - [`embed`]: l1 -> Hamming and l2 -> l1 randomized embeddings
//! - [`indicator`]: OR-of-thresholds polynomials and the block indicator matrix
//! - [`hamming_net`]: sparsification and net assembly in Hamming space
//! - [`rnet`]: the metric-facing net API (l1, l2)
//! - [`netprune`]: decider-driven search for unknown scales
//! - [`apps`]: k-th NN distance, Min-Max clustering, k-center
//! - [`oracle`]: exact brute-force references and verification

pub mod apps;
pub mod dataset;
pub mod embed;
pub mod error;
pub mod hamming_net;
pub mod indicator;
pub mod netprune;
pub mod oracle;
pub mod rnet;

pub use dataset::{BitPointSet, FileFormat, Metric, PointSet, Seed};
pub use error::{Error, Result};
pub use indicator::Backend;
