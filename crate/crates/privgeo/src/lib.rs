//! Differentially private geometric clustering toolkit: lattice covers of
//! the unit ball, sparse selection mechanisms, densest-ball search,
//! coreset-based k-clustering, and downstream applications (1-cluster,
//! sample-and-aggregate, halfspace learning), plus an exact dynamic
//! closest-pair sketch.
//!
//! All randomized paths draw from a caller-seeded generator threaded
//! through [`Ctx`], so runs are reproducible bit-for-bit; data-parallel
//! sections are order-preserving and never consume generator state.

pub mod apps;
pub mod closestpair;
pub mod clustering;
pub mod config;
pub mod cover;
pub mod densestball;
pub mod dpcore;
pub mod error;
pub mod exec;
pub mod geom;
pub mod lattice;
pub mod trie;

pub use config::{Ctx, Tunables};
pub use error::{Error, Result};
