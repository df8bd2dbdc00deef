//! Filter pruning for convolutional networks built on hybrid pyramids.
//!
//! Each filter is summarised by a hierarchy of mean-reduced matrices whose
//! levels give progressively tighter lower bounds on the squared distance
//! between two filters. Those bounds drive an exact closest-filter search,
//! which in turn drives median-root clustering, which drives a backward
//! layer-by-layer pruning loop guarded by an external accuracy evaluator.

pub mod cli;
pub mod cluster;
pub mod cost;
pub mod driver;
pub mod error;
pub mod evaluator;
pub mod model;
pub mod pyramid;
pub mod report;
pub mod search;

pub use cluster::{cluster, ClusterSet, InitStrategy};
pub use cost::{count, CostReport};
pub use driver::{run, DriverConfig, PruneOutcome};
pub use error::{Error, EvaluatorError, Result};
pub use evaluator::{
    serve, EvaluationRequest, EvaluationResult, Evaluator, SubprocessEvaluator, SyntheticEvaluator,
    SyntheticSpec,
};
pub use model::{load_model, FilterTensor, LayerSpec, Model, ModelManifest};
pub use pyramid::{
    build_index, decompose_channels, level_factor, HybridPyramid, Level, PyramidIndex, PyramidShape,
};
pub use report::{read_report, write_report, PruneReport};
pub use search::{find_closest, CandidateSet, SearchResult, SearchStats};
