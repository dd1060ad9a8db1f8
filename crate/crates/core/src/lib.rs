//! Exact Bayesian network structure learning under the MDL score.
//!
//! The learner scores every admissible parent set with one depth-limited
//! AD-tree sweep, then runs a frontier breadth-first branch and bound over
//! the order graph. Parent graphs and the order graph are advanced one layer
//! at a time through sorted files on disk, with in-RAM duplicate detection
//! that spills to sorted runs, so memory stays bounded by a couple of
//! layers regardless of problem size.
//!
//! ```no_run
//! use bnsl::{dataset, learn, LearnConfig};
//!
//! let raw = dataset::load_csv("data.csv".as_ref(), b',', "?", true)?;
//! let (data, _meta) = dataset::preprocess(&raw, dataset::DEFAULT_MAX_STATES)?;
//! let out = learn(&data, &LearnConfig::new("work"))?;
//! println!("optimal score {}", out.score);
//! # Ok::<(), bnsl::Error>(())
//! ```

pub mod bounds;
pub mod cli;
pub mod dataset;
pub mod error;
pub mod oracle;
pub mod order_graph;
pub mod parent_graph;
pub mod scorer;
pub mod storage;
pub mod synth;
pub mod varset;

pub use bounds::{network_score, GreedyConfig, Network};
pub use dataset::Dataset;
pub use error::{Error, Result};
pub use order_graph::{learn, LearnConfig, LearnOutcome, SearchStats};
pub use varset::VarSet;
