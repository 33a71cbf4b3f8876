//! Allocation-only analytics for image-ad corpora.
//!
//! The crate is `no_std` and needs only `alloc`. It covers the whole
//! analysis path over an in-memory [`corpus::Corpus`]:
//!
//! * [`objstats`]: top-5 object presence frequencies, stop-object detection
//!   and per-category rankings.
//! * [`catgraph`]: the category/object bipartite graph, modularity and
//!   greedy community detection.
//! * [`cluster`]: k-means++ with Lloyd refinement, the mean-WCSS k sweep and
//!   per-cluster profiles.
//! * [`predict`]: ad filtering, Pearson correlations and the three CTR
//!   regressors (least squares, random forest, gradient boosting).
//! * [`synth`]: seeded corpora with planted ground truth.
//!
//! File formats, reports and the command line live in the `adscope` crate.

#![no_std]
#![forbid(unsafe_code)]

extern crate alloc;

pub mod catgraph;
pub mod cluster;
pub mod corpus;
pub mod exec;
pub mod numeric;
pub mod objstats;
pub mod predict;
pub mod rng;
pub mod synth;
pub mod tree;

pub use corpus::{AdRecord, Corpus, ObjectLabel};
pub use exec::{Executor, Sequential};
pub use rng::SplitMix64;
