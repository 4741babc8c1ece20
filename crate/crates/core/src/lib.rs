//! Inductive relation prediction on knowledge graphs.
//!
//! The pipeline: load a triplet graph ([`graph`]), extract the directed
//! enclosing subgraph around a candidate with an undirected fallback
//! ([`subgraph`]), score it with a communicative node-edge message-passing
//! network ([`model`]) trained end-to-end on margin ranking loss
//! ([`trainer`]) through a small reverse-mode autodiff engine ([`autodiff`]),
//! and evaluate with AUC-PR / AUC-ROC / Hits@K protocols ([`eval`]).
//! [`datatools`] post-processes datasets (empty-subgraph filtering,
//! materialized non-empty negatives) and [`cache`] holds the optional
//! extraction cache.

pub mod autodiff;
pub mod cache;
pub mod datatools;
pub mod eval;
pub mod graph;
pub mod model;
pub mod subgraph;
pub mod trainer;

pub use autodiff::{AdamState, Matrix, ParamStore, Tape, TensorError, Var};
pub use cache::SubgraphCache;
pub use eval::{EvalOptions, EvalReport, LabeledScore, Protocol, Scorer};
pub use graph::{load_graph, EntityId, Graph, GraphError, RelationId, Triplet, Vocab, VocabMode};
pub use model::{
    Ablation, Activation, ModelConfig, ModelError, ModelParams, EMPTY_SUBGRAPH_SCORE,
};
pub use subgraph::{
    build_incidence, extract_directed, extract_undirected, extract_with_fallback, ExtractError,
    ExtractOutcome, Incidence, Subgraph, DEFAULT_MAX_NODES,
};
pub use trainer::{fit, margin_loss, sample_negative, FitOutcome, TrainConfig, TrainError};
