//! The scoring network: communicative node-edge message passing over a
//! directed enclosing subgraph with an enhanced edge attention, a
//! GRU-finished node update, and a translation-style scoring head.

mod forward;

pub use forward::{
    edge_attention, edge_update, forward, forward_traced, init_edge_embeddings,
    init_node_embeddings, node_aggregate, node_update, node_update_final, project,
    score_candidate, score_head, score_subgraph, CandidateOutcome, IncidenceMaps, Phase,
    ScoredCandidate, Stage, TwoLayerVars,
};

use std::path::Path;

use rand::Rng;
use thiserror::Error;

use crate::autodiff::checkpoint::{self, CheckpointHeader};
use crate::autodiff::{normal_init, xavier_uniform, Matrix, ParamId, ParamStore, TensorError};
use crate::subgraph::ExtractError;

/// Sentinel score assigned to candidates with an empty enclosing subgraph,
/// so they rank last deterministically.
pub const EMPTY_SUBGRAPH_SCORE: f64 = -1.0e4;

#[derive(Debug, Error)]
pub enum ModelError {
    #[error("config error: {0}")]
    Config(String),
    #[error("node label {label} out of range 0..={max} for hop count")]
    LabelOutOfRange { label: u32, max: u32 },
    #[error("relation id {0} outside the model's relation table")]
    RelationOutOfRange(usize),
    #[error("forward pass needs a non-empty subgraph")]
    EmptySubgraph,
    #[error(transparent)]
    Tensor(#[from] TensorError),
    #[error(transparent)]
    Extract(#[from] ExtractError),
}

/// Activation tags for the two nonlinearities used throughout the network.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum Activation {
    #[default]
    Relu,
    Tanh,
}

impl Activation {
    pub fn name(self) -> &'static str {
        match self {
            Activation::Relu => "relu",
            Activation::Tanh => "tanh",
        }
    }

    pub fn from_name(name: &str) -> Result<Self, ModelError> {
        match name {
            "relu" => Ok(Activation::Relu),
            "tanh" => Ok(Activation::Tanh),
            other => Err(ModelError::Config(format!("unknown activation {other:?}"))),
        }
    }
}

/// Switches reproducing the published ablations.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct Ablation {
    /// Force undirected extraction everywhere.
    pub undirected: bool,
    /// Drop edge attention (edges enter aggregation unweighted).
    pub no_attention: bool,
    /// Attention conditioned on the target relation only.
    pub grail_attention: bool,
    /// Never update edge embeddings after projection.
    pub no_edge_update: bool,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ModelConfig {
    /// Neighborhood hop count `h`.
    pub hop: usize,
    /// Message-passing iterations `l`; edge updates run `l - 1` times.
    pub iters: usize,
    /// Embedding width `d`.
    pub dim: usize,
    /// Hidden width of the two-layer scoring head.
    pub score_hidden: usize,
    /// Dropout probability applied to updated edge embeddings in training.
    pub edge_dropout: f64,
    pub f1: Activation,
    pub f2: Activation,
    pub ablation: Ablation,
}

impl Default for ModelConfig {
    fn default() -> Self {
        Self {
            hop: 3,
            iters: 3,
            dim: 32,
            score_hidden: 16,
            edge_dropout: 0.5,
            f1: Activation::Relu,
            f2: Activation::Tanh,
            ablation: Ablation::default(),
        }
    }
}

impl ModelConfig {
    pub fn validate(&self) -> Result<(), ModelError> {
        if self.hop < 1 {
            return Err(ModelError::Config("hop must be at least 1".into()));
        }
        if self.iters < 2 {
            return Err(ModelError::Config(
                "iters must be at least 2 so edge updates run at least once".into(),
            ));
        }
        if self.dim < 1 || self.score_hidden < 1 {
            return Err(ModelError::Config("dim and score_hidden must be positive".into()));
        }
        if !(0.0..1.0).contains(&self.edge_dropout) {
            return Err(ModelError::Config(format!(
                "edge_dropout {} outside [0, 1)",
                self.edge_dropout
            )));
        }
        Ok(())
    }

    /// Width of the one-hot distance vocabulary, `h + 2`.
    pub fn label_width(&self) -> usize {
        self.hop + 2
    }

    /// Width of the initial node embedding, `2 (h + 2)`.
    pub fn node_init_width(&self) -> usize {
        2 * self.label_width()
    }

    /// Width of the initial edge embedding, `4 (h + 2) + d`.
    pub fn edge_init_width(&self) -> usize {
        4 * self.label_width() + self.dim
    }
}

#[derive(Debug, Clone)]
pub(crate) struct GruIds {
    pub w_xr: ParamId,
    pub w_hr: ParamId,
    pub b_r: ParamId,
    pub w_xz: ParamId,
    pub w_hz: ParamId,
    pub b_z: ParamId,
    pub w_xn: ParamId,
    pub w_hn: ParamId,
    pub b_n: ParamId,
}

#[derive(Debug, Clone)]
pub(crate) struct ParamIds {
    pub rel_table: ParamId,
    pub proj_node: ParamId,
    pub proj_edge: ParamId,
    /// Node-update matrices for the non-final iterations, `l - 1` of them.
    pub node_w: Vec<ParamId>,
    /// Edge-update matrices, `l - 1` of them.
    pub edge_w: Vec<ParamId>,
    /// Per-iteration attention weights, `l` pairs.
    pub att1: Vec<ParamId>,
    pub att2: Vec<ParamId>,
    pub mlp_w1: ParamId,
    pub mlp_b1: ParamId,
    pub mlp_w2: ParamId,
    pub mlp_b2: ParamId,
    pub gru: GruIds,
    pub score_w1: ParamId,
    pub score_b1: ParamId,
    pub score_w2: ParamId,
    pub score_b2: ParamId,
}

/// All learnable state plus the configuration it was built for. The relation
/// table is shared across train and test graphs: test-time graphs never add
/// relation rows.
#[derive(Debug, Clone)]
pub struct ModelParams {
    pub config: ModelConfig,
    num_relations: usize,
    store: ParamStore,
    pub(crate) ids: ParamIds,
}

impl ModelParams {
    /// Fresh parameters: Xavier-uniform weights, zero biases, and a
    /// normal(0, 1/sqrt(d)) relation table.
    pub fn init(
        config: ModelConfig,
        num_relations: usize,
        rng: &mut impl Rng,
    ) -> Result<Self, ModelError> {
        config.validate()?;
        if num_relations == 0 {
            return Err(ModelError::Config("relation vocabulary is empty".into()));
        }
        let d = config.dim;
        let mut store = ParamStore::new();
        let rel_table = store.add(
            "rel_table",
            normal_init(num_relations, d, 1.0 / (d as f64).sqrt(), rng),
        );
        let proj_node = store.add(
            "proj_node",
            xavier_uniform(config.node_init_width(), d, rng),
        );
        let proj_edge = store.add(
            "proj_edge",
            xavier_uniform(config.edge_init_width(), d, rng),
        );
        let node_w = (1..config.iters)
            .map(|k| store.add(&format!("node_w_{k}"), xavier_uniform(d, d, rng)))
            .collect();
        let edge_w = (1..config.iters)
            .map(|k| store.add(&format!("edge_w_{k}"), xavier_uniform(d, d, rng)))
            .collect();
        let att1 = (0..config.iters)
            .map(|k| store.add(&format!("att1_{k}"), xavier_uniform(2 * d, d, rng)))
            .collect();
        let att2 = (0..config.iters)
            .map(|k| store.add(&format!("att2_{k}"), xavier_uniform(d, 1, rng)))
            .collect();
        let mlp_w1 = store.add("mlp_w1", xavier_uniform(3 * d, d, rng));
        let mlp_b1 = store.add("mlp_b1", Matrix::zeros(1, d));
        let mlp_w2 = store.add("mlp_w2", xavier_uniform(d, d, rng));
        let mlp_b2 = store.add("mlp_b2", Matrix::zeros(1, d));
        let gru = GruIds {
            w_xr: store.add("gru_w_xr", xavier_uniform(d, d, rng)),
            w_hr: store.add("gru_w_hr", xavier_uniform(d, d, rng)),
            b_r: store.add("gru_b_r", Matrix::zeros(1, d)),
            w_xz: store.add("gru_w_xz", xavier_uniform(d, d, rng)),
            w_hz: store.add("gru_w_hz", xavier_uniform(d, d, rng)),
            b_z: store.add("gru_b_z", Matrix::zeros(1, d)),
            w_xn: store.add("gru_w_xn", xavier_uniform(d, d, rng)),
            w_hn: store.add("gru_w_hn", xavier_uniform(d, d, rng)),
            b_n: store.add("gru_b_n", Matrix::zeros(1, d)),
        };
        let score_w1 = store.add("score_w1", xavier_uniform(d, config.score_hidden, rng));
        let score_b1 = store.add("score_b1", Matrix::zeros(1, config.score_hidden));
        let score_w2 = store.add("score_w2", xavier_uniform(config.score_hidden, 1, rng));
        let score_b2 = store.add("score_b2", Matrix::zeros(1, 1));

        Ok(Self {
            config,
            num_relations,
            store,
            ids: ParamIds {
                rel_table,
                proj_node,
                proj_edge,
                node_w,
                edge_w,
                att1,
                att2,
                mlp_w1,
                mlp_b1,
                mlp_w2,
                mlp_b2,
                gru,
                score_w1,
                score_b1,
                score_w2,
                score_b2,
            },
        })
    }

    pub fn num_relations(&self) -> usize {
        self.num_relations
    }

    /// Total number of learnable scalars.
    pub fn num_parameters(&self) -> usize {
        self.store.num_values()
    }

    pub fn store(&self) -> &ParamStore {
        &self.store
    }

    pub fn store_mut(&mut self) -> &mut ParamStore {
        &mut self.store
    }

    /// Writes a checkpoint with the config echoed into the header and the
    /// relation vocabulary the table rows correspond to.
    pub fn save(&self, path: &Path, relation_names: &[String]) -> Result<(), ModelError> {
        if relation_names.len() != self.num_relations {
            return Err(ModelError::Config(format!(
                "{} relation names for a table of {}",
                relation_names.len(),
                self.num_relations
            )));
        }
        let c = &self.config;
        let header = CheckpointHeader {
            meta: vec![
                ("hop".into(), c.hop.to_string()),
                ("iters".into(), c.iters.to_string()),
                ("dim".into(), c.dim.to_string()),
                ("score_hidden".into(), c.score_hidden.to_string()),
                ("edge_dropout".into(), format!("{:?}", c.edge_dropout)),
                ("f1".into(), c.f1.name().into()),
                ("f2".into(), c.f2.name().into()),
                ("undirected".into(), c.ablation.undirected.to_string()),
                ("no_attention".into(), c.ablation.no_attention.to_string()),
                ("grail_attention".into(), c.ablation.grail_attention.to_string()),
                ("no_edge_update".into(), c.ablation.no_edge_update.to_string()),
                ("num_relations".into(), self.num_relations.to_string()),
            ],
            relation_names: relation_names.to_vec(),
        };
        checkpoint::save(path, &header, &self.store)?;
        Ok(())
    }

    /// Loads a checkpoint, returning the parameters and the relation
    /// vocabulary they were trained with.
    pub fn load(path: &Path) -> Result<(Self, Vec<String>), ModelError> {
        let (header, store) = checkpoint::load(path)?;
        let get = |key: &str| -> Result<&str, ModelError> {
            header
                .get(key)
                .ok_or_else(|| ModelError::Config(format!("checkpoint missing {key:?}")))
        };
        let parse_usize = |key: &str| -> Result<usize, ModelError> {
            get(key)?
                .parse()
                .map_err(|_| ModelError::Config(format!("bad {key:?} in checkpoint")))
        };
        let parse_bool = |key: &str| -> Result<bool, ModelError> {
            get(key)?
                .parse()
                .map_err(|_| ModelError::Config(format!("bad {key:?} in checkpoint")))
        };
        let config = ModelConfig {
            hop: parse_usize("hop")?,
            iters: parse_usize("iters")?,
            dim: parse_usize("dim")?,
            score_hidden: parse_usize("score_hidden")?,
            edge_dropout: get("edge_dropout")?
                .parse()
                .map_err(|_| ModelError::Config("bad edge_dropout in checkpoint".into()))?,
            f1: Activation::from_name(get("f1")?)?,
            f2: Activation::from_name(get("f2")?)?,
            ablation: Ablation {
                undirected: parse_bool("undirected")?,
                no_attention: parse_bool("no_attention")?,
                grail_attention: parse_bool("grail_attention")?,
                no_edge_update: parse_bool("no_edge_update")?,
            },
        };
        config.validate()?;
        let num_relations = parse_usize("num_relations")?;
        if header.relation_names.len() != num_relations {
            return Err(ModelError::Config(
                "checkpoint relation vocabulary does not match its table".into(),
            ));
        }

        let find = |name: &str| -> Result<ParamId, ModelError> {
            store
                .by_name(name)
                .ok_or_else(|| ModelError::Config(format!("checkpoint missing parameter {name:?}")))
        };
        let ids = ParamIds {
            rel_table: find("rel_table")?,
            proj_node: find("proj_node")?,
            proj_edge: find("proj_edge")?,
            node_w: (1..config.iters)
                .map(|k| find(&format!("node_w_{k}")))
                .collect::<Result<_, _>>()?,
            edge_w: (1..config.iters)
                .map(|k| find(&format!("edge_w_{k}")))
                .collect::<Result<_, _>>()?,
            att1: (0..config.iters)
                .map(|k| find(&format!("att1_{k}")))
                .collect::<Result<_, _>>()?,
            att2: (0..config.iters)
                .map(|k| find(&format!("att2_{k}")))
                .collect::<Result<_, _>>()?,
            mlp_w1: find("mlp_w1")?,
            mlp_b1: find("mlp_b1")?,
            mlp_w2: find("mlp_w2")?,
            mlp_b2: find("mlp_b2")?,
            gru: GruIds {
                w_xr: find("gru_w_xr")?,
                w_hr: find("gru_w_hr")?,
                b_r: find("gru_b_r")?,
                w_xz: find("gru_w_xz")?,
                w_hz: find("gru_w_hz")?,
                b_z: find("gru_b_z")?,
                w_xn: find("gru_w_xn")?,
                w_hn: find("gru_w_hn")?,
                b_n: find("gru_b_n")?,
            },
            score_w1: find("score_w1")?,
            score_b1: find("score_b1")?,
            score_w2: find("score_w2")?,
            score_b2: find("score_b2")?,
        };
        let relation_names = header.relation_names;
        Ok((
            Self {
                config,
                num_relations,
                store,
                ids,
            },
            relation_names,
        ))
    }
}
