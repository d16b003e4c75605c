//! Markov models of sequence evolution on complete binary trees: simulation,
//! ancestral state reconstruction with diluted-tree root estimators, and
//! distance-based topology reconstruction that works beyond the
//! Kesten-Stigum bound for the symmetric model with many states.

// Negated comparisons reject NaN on purpose; experiment entry points take
// many scalar parameters.
#![allow(clippy::neg_cmp_op_on_partial_ord, clippy::too_many_arguments)]

pub mod asr;
pub mod error;
pub mod experiments;
pub mod metric;
pub mod model;
pub mod par;
pub mod reconstruct;
pub mod rng;
pub mod simulate;
pub mod stats;
pub mod tree;
pub mod verify;

pub use error::{Error, ModelDiagnostic, Result};
pub use model::{potts_rate_matrix, RateModel, Thresholds};
pub use par::Execution;
pub use tree::{Phylogeny, Topology};
