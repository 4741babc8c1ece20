//! Forward pass: embedding initialization, iterated node/edge updates with
//! enhanced edge attention, and the translation-style scoring head.

use rand::rngs::StdRng;

use crate::autodiff::{gru_cell, ColumnMap, GruCellVars, Matrix, Tape, TensorError, Var};
use crate::graph::{Graph, Triplet};
use crate::subgraph::{
    build_incidence, extract_undirected, extract_with_fallback, ExtractOutcome, LocalEdge,
    Subgraph,
};

use super::{Activation, ModelConfig, ModelError, ModelParams, EMPTY_SUBGRAPH_SCORE};

/// Whether a pass is for training (dropout active, driven by the given rng)
/// or evaluation (dropout inert, fully deterministic).
pub enum Phase<'a> {
    Eval,
    Train { rng: &'a mut StdRng },
}

/// Stages executed by [`forward_traced`], for control-flow assertions.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Stage {
    Attention(usize),
    NodeUpdate(usize),
    NodeUpdateLast(usize),
    EdgeUpdate(usize),
    Score,
}

/// Tape handles for a two-layer affine block.
#[derive(Debug, Clone, Copy)]
pub struct TwoLayerVars {
    pub w1: Var,
    pub b1: Var,
    pub w2: Var,
    pub b2: Var,
}

/// The three incidence structures as sparse column maps.
pub struct IncidenceMaps {
    pub head_to_edge: ColumnMap,
    pub rel_to_edge: ColumnMap,
    pub tail_to_edge: ColumnMap,
}

struct Leased {
    rel: Var,
    proj_node: Var,
    proj_edge: Var,
    node_w: Vec<Var>,
    edge_w: Vec<Var>,
    att1: Vec<Var>,
    att2: Vec<Var>,
    mlp: TwoLayerVars,
    gru: GruCellVars,
    score: TwoLayerVars,
}

impl ModelParams {
    fn lease(&self, tape: &mut Tape) -> Result<Leased, TensorError> {
        let s = self.store();
        let ids = &self.ids;
        let lease_all = |tape: &mut Tape, list: &[crate::autodiff::ParamId]| {
            list.iter()
                .map(|&id| tape.param(id, s.value(id)))
                .collect::<Result<Vec<_>, _>>()
        };
        Ok(Leased {
            rel: tape.param(ids.rel_table, s.value(ids.rel_table))?,
            proj_node: tape.param(ids.proj_node, s.value(ids.proj_node))?,
            proj_edge: tape.param(ids.proj_edge, s.value(ids.proj_edge))?,
            node_w: lease_all(tape, &ids.node_w)?,
            edge_w: lease_all(tape, &ids.edge_w)?,
            att1: lease_all(tape, &ids.att1)?,
            att2: lease_all(tape, &ids.att2)?,
            mlp: TwoLayerVars {
                w1: tape.param(ids.mlp_w1, s.value(ids.mlp_w1))?,
                b1: tape.param(ids.mlp_b1, s.value(ids.mlp_b1))?,
                w2: tape.param(ids.mlp_w2, s.value(ids.mlp_w2))?,
                b2: tape.param(ids.mlp_b2, s.value(ids.mlp_b2))?,
            },
            gru: GruCellVars {
                w_xr: tape.param(ids.gru.w_xr, s.value(ids.gru.w_xr))?,
                w_hr: tape.param(ids.gru.w_hr, s.value(ids.gru.w_hr))?,
                b_r: tape.param(ids.gru.b_r, s.value(ids.gru.b_r))?,
                w_xz: tape.param(ids.gru.w_xz, s.value(ids.gru.w_xz))?,
                w_hz: tape.param(ids.gru.w_hz, s.value(ids.gru.w_hz))?,
                b_z: tape.param(ids.gru.b_z, s.value(ids.gru.b_z))?,
                w_xn: tape.param(ids.gru.w_xn, s.value(ids.gru.w_xn))?,
                w_hn: tape.param(ids.gru.w_hn, s.value(ids.gru.w_hn))?,
                b_n: tape.param(ids.gru.b_n, s.value(ids.gru.b_n))?,
            },
            score: TwoLayerVars {
                w1: tape.param(ids.score_w1, s.value(ids.score_w1))?,
                b1: tape.param(ids.score_b1, s.value(ids.score_b1))?,
                w2: tape.param(ids.score_w2, s.value(ids.score_w2))?,
                b2: tape.param(ids.score_b2, s.value(ids.score_b2))?,
            },
        })
    }
}

fn act(tape: &mut Tape, x: Var, a: Activation) -> Result<Var, TensorError> {
    match a {
        Activation::Relu => tape.relu(x),
        Activation::Tanh => tape.tanh(x),
    }
}

/// One-hot distance labels: row i is one-hot(d_head) concatenated with
/// one-hot(d_tail), each of width `h + 2`. Every row sums to exactly 2.
pub fn init_node_embeddings(sub: &Subgraph, hop: usize) -> Result<Matrix, ModelError> {
    let width = hop + 2;
    let mut m = Matrix::zeros(sub.num_nodes(), 2 * width);
    for (i, &(dh, dt)) in sub.node_labels.iter().enumerate() {
        for (offset, d) in [(0usize, dh), (width, dt)] {
            if d as usize >= width {
                return Err(ModelError::LabelOutOfRange {
                    label: d,
                    max: (hop + 1) as u32,
                });
            }
            m.set(i, offset + d as usize, 1.0);
        }
    }
    Ok(m)
}

/// Initial edge embeddings: per edge, head-node init (+) relation row (+)
/// tail-node init, built on-tape so gradients reach the relation table.
pub fn init_edge_embeddings(
    tape: &mut Tape,
    sub: &Subgraph,
    node_init: Var,
    rel_table: Var,
) -> Result<Var, ModelError> {
    let heads: Vec<usize> = sub.edges.iter().map(|e| e.head).collect();
    let rels: Vec<usize> = sub.edges.iter().map(|e| e.relation).collect();
    let tails: Vec<usize> = sub.edges.iter().map(|e| e.tail).collect();
    let h = tape.row_select(node_init, &heads)?;
    let r = tape.row_select(rel_table, &rels)?;
    let t = tape.row_select(node_init, &tails)?;
    Ok(tape.concat_cols(&[h, r, t])?)
}

/// Projects both embedding families to width `d`.
pub fn project(
    tape: &mut Tape,
    node_init: Var,
    edge_init: Var,
    proj_node: Var,
    proj_edge: Var,
    f1: Activation,
) -> Result<(Var, Var), ModelError> {
    let n = tape.matmul(node_init, proj_node)?;
    let n0 = act(tape, n, f1)?;
    let e = tape.matmul(edge_init, proj_edge)?;
    let e0 = act(tape, e, f1)?;
    Ok((n0, e0))
}

/// TransE-style composite `N_head + R_rel - N_tail` for a list of edges.
fn triple_vectors(
    tape: &mut Tape,
    nodes: Var,
    rel_table: Var,
    heads: &[usize],
    rels: &[usize],
    tails: &[usize],
) -> Result<Var, TensorError> {
    let h = tape.row_select(nodes, heads)?;
    let r = tape.row_select(rel_table, rels)?;
    let t = tape.row_select(nodes, tails)?;
    let hr = tape.add(h, r)?;
    tape.sub(hr, t)
}

/// Enhanced edge attention: a per-edge scalar in (0, 1) conditioned on both
/// the edge's composite vector and the target triplet's, scaling the edge
/// embedding. With the `grail_attention` ablation the condition is the
/// target relation row alone; with `no_attention` edges pass through
/// unweighted.
#[allow(clippy::too_many_arguments)]
pub fn edge_attention(
    tape: &mut Tape,
    sub: &Subgraph,
    nodes_prev: Var,
    edges_prev: Var,
    rel_table: Var,
    att1: Var,
    att2: Var,
    config: &ModelConfig,
) -> Result<Var, ModelError> {
    if config.ablation.no_attention {
        return Ok(edges_prev);
    }
    let heads: Vec<usize> = sub.edges.iter().map(|e| e.head).collect();
    let rels: Vec<usize> = sub.edges.iter().map(|e| e.relation).collect();
    let tails: Vec<usize> = sub.edges.iter().map(|e| e.tail).collect();
    let per_edge = triple_vectors(tape, nodes_prev, rel_table, &heads, &rels, &tails)?;
    let target = if config.ablation.grail_attention {
        tape.row_select(rel_table, &[sub.target.relation])?
    } else {
        triple_vectors(
            tape,
            nodes_prev,
            rel_table,
            &[sub.target.head],
            &[sub.target.relation],
            &[sub.target.tail],
        )?
    };
    let tiled = tape.tile_rows(target, sub.num_edges())?;
    let cat = tape.concat_cols(&[per_edge, tiled])?;
    let hidden = tape.matmul(cat, att1)?;
    let hidden = act(tape, hidden, config.f1)?;
    let logits = tape.matmul(hidden, att2)?;
    let weights = tape.sigmoid(logits)?;
    Ok(tape.scale_rows(edges_prev, weights)?)
}

/// Aggregation feeding every node update: each node sums the attentive
/// embeddings of the edges for which it is the tail, so information flows
/// strictly head -> tail.
pub fn node_aggregate(
    tape: &mut Tape,
    tail_to_edge: &ColumnMap,
    edges_att: Var,
) -> Result<Var, ModelError> {
    Ok(tape.sparse_matmul(tail_to_edge, edges_att)?)
}

/// Non-final node update: activation of a linear map over aggregation plus
/// previous state.
pub fn node_update(
    tape: &mut Tape,
    tail_to_edge: &ColumnMap,
    nodes_prev: Var,
    edges_att: Var,
    weight: Var,
    f1: Activation,
) -> Result<Var, ModelError> {
    let agg = node_aggregate(tape, tail_to_edge, edges_att)?;
    let sum = tape.add(agg, nodes_prev)?;
    let lin = tape.matmul(sum, weight)?;
    Ok(act(tape, lin, f1)?)
}

/// Final node update: the communication MLP over (aggregation, previous
/// state, initial state) followed by a GRU scan over the stored node order.
/// The hidden state after consuming node i's row is node i's final
/// embedding; the scan starts from a zero hidden state.
#[allow(clippy::too_many_arguments)]
pub fn node_update_final(
    tape: &mut Tape,
    tail_to_edge: &ColumnMap,
    nodes_prev: Var,
    edges_att: Var,
    nodes_initial: Var,
    mlp: &TwoLayerVars,
    gru: &GruCellVars,
    config: &ModelConfig,
) -> Result<Var, ModelError> {
    let agg = node_aggregate(tape, tail_to_edge, edges_att)?;
    let n = tape.value(nodes_prev).rows();
    let cat = tape.concat_cols(&[agg, nodes_prev, nodes_initial])?;
    let b1 = tape.tile_rows(mlp.b1, n)?;
    let lin1 = tape.matmul(cat, mlp.w1)?;
    let lin1 = tape.add(lin1, b1)?;
    let hidden = act(tape, lin1, config.f1)?;
    let b2 = tape.tile_rows(mlp.b2, n)?;
    let lin2 = tape.matmul(hidden, mlp.w2)?;
    let communicated = tape.add(lin2, b2)?;

    let mut state = tape.constant(Matrix::zeros(1, config.dim))?;
    let mut rows = Vec::with_capacity(n);
    for i in 0..n {
        let x = tape.row_select(communicated, &[i])?;
        state = gru_cell(tape, x, state, gru)?;
        rows.push(state);
    }
    Ok(tape.concat_rows(&rows)?)
}

/// Edge update: per edge, gather `N_head + R_rel - N_tail` from the current
/// node embeddings, apply the bounded residual update, and (in training)
/// edge dropout.
#[allow(clippy::too_many_arguments)]
pub fn edge_update(
    tape: &mut Tape,
    maps: &IncidenceMaps,
    edges_prev: Var,
    edges_initial: Var,
    nodes_k: Var,
    rel_table: Var,
    edge_w: Var,
    config: &ModelConfig,
    phase: &mut Phase<'_>,
) -> Result<Var, ModelError> {
    if config.ablation.no_edge_update {
        return Ok(edges_prev);
    }
    let from_heads = tape.sparse_matmul_t(&maps.head_to_edge, nodes_k)?;
    let from_rels = tape.sparse_matmul_t(&maps.rel_to_edge, rel_table)?;
    let from_tails = tape.sparse_matmul_t(&maps.tail_to_edge, nodes_k)?;
    let sum = tape.add(from_heads, from_rels)?;
    let agg = tape.sub(sum, from_tails)?;

    let bounded = act(tape, agg, config.f2)?;
    let residual = tape.add(edges_prev, bounded)?;
    let updated = act(tape, residual, config.f1)?;
    let lin = tape.matmul(updated, edge_w)?;
    let with_init = tape.add(lin, edges_initial)?;
    let out = act(tape, with_init, config.f1)?;
    match phase {
        Phase::Eval => Ok(out),
        Phase::Train { rng } => Ok(tape.dropout(out, config.edge_dropout, true, rng)?),
    }
}

/// Scores a completed pass: `f2(N_head + R_target - N_tail)` through a
/// two-layer head. Unbounded real output.
pub fn score_head(
    tape: &mut Tape,
    sub: &Subgraph,
    nodes_final: Var,
    rel_table: Var,
    head: &TwoLayerVars,
    config: &ModelConfig,
) -> Result<Var, ModelError> {
    let composite = triple_vectors(
        tape,
        nodes_final,
        rel_table,
        &[sub.target.head],
        &[sub.target.relation],
        &[sub.target.tail],
    )?;
    let s = act(tape, composite, config.f2)?;
    let lin1 = tape.matmul(s, head.w1)?;
    let lin1 = tape.add(lin1, head.b1)?;
    let hidden = act(tape, lin1, config.f1)?;
    let lin2 = tape.matmul(hidden, head.w2)?;
    Ok(tape.add(lin2, head.b2)?)
}

/// Full forward pass over one subgraph; returns the scalar score node.
pub fn forward(
    tape: &mut Tape,
    sub: &Subgraph,
    params: &ModelParams,
    phase: &mut Phase<'_>,
) -> Result<Var, ModelError> {
    forward_traced(tape, sub, params, phase, None)
}

/// [`forward`] with an optional stage trace for control-flow tests.
pub fn forward_traced(
    tape: &mut Tape,
    sub: &Subgraph,
    params: &ModelParams,
    phase: &mut Phase<'_>,
    mut trace: Option<&mut Vec<Stage>>,
) -> Result<Var, ModelError> {
    let config = &params.config;
    config.validate()?;
    if sub.edges.is_empty() {
        return Err(ModelError::EmptySubgraph);
    }
    if sub.target.relation >= params.num_relations()
        || sub
            .edges
            .iter()
            .any(|e| e.relation >= params.num_relations())
    {
        return Err(ModelError::RelationOutOfRange(params.num_relations()));
    }

    // Scores must not depend on the caller's node/edge ordering beyond the
    // canonical one, so normalize before building anything.
    let canon = canonical_order(sub);
    let sub = canon.as_ref().unwrap_or(sub);

    let incidence = build_incidence(sub, params.num_relations())?;
    let maps = IncidenceMaps {
        head_to_edge: incidence.head_to_edge(),
        rel_to_edge: incidence.rel_to_edge(),
        tail_to_edge: incidence.tail_to_edge(),
    };

    let lease = params.lease(tape)?;
    let node_init = tape.constant(init_node_embeddings(sub, config.hop)?)?;
    let edge_init = init_edge_embeddings(tape, sub, node_init, lease.rel)?;
    let (n0, e0) = project(
        tape,
        node_init,
        edge_init,
        lease.proj_node,
        lease.proj_edge,
        config.f1,
    )?;

    let mut nodes = n0;
    let mut edges = e0;
    for k in 1..=config.iters {
        if let Some(t) = trace.as_mut() {
            t.push(Stage::Attention(k));
        }
        let attentive = edge_attention(
            tape,
            sub,
            nodes,
            edges,
            lease.rel,
            lease.att1[k - 1],
            lease.att2[k - 1],
            config,
        )?;
        let is_last = k == config.iters;
        if is_last {
            if let Some(t) = trace.as_mut() {
                t.push(Stage::NodeUpdateLast(k));
            }
            nodes = node_update_final(
                tape,
                &maps.tail_to_edge,
                nodes,
                attentive,
                n0,
                &lease.mlp,
                &lease.gru,
                config,
            )?;
        } else {
            if let Some(t) = trace.as_mut() {
                t.push(Stage::NodeUpdate(k));
            }
            nodes = node_update(
                tape,
                &maps.tail_to_edge,
                nodes,
                attentive,
                lease.node_w[k - 1],
                config.f1,
            )?;
            if let Some(t) = trace.as_mut() {
                t.push(Stage::EdgeUpdate(k));
            }
            edges = edge_update(
                tape,
                &maps,
                edges,
                e0,
                nodes,
                lease.rel,
                lease.edge_w[k - 1],
                config,
                phase,
            )?;
        }
    }
    if let Some(t) = trace.as_mut() {
        t.push(Stage::Score);
    }
    score_head(tape, sub, nodes, lease.rel, &lease.score, config)
}

/// Returns a re-sorted copy when the subgraph is not already in canonical
/// order (nodes by label/entity id, edges by local triple).
fn canonical_order(sub: &Subgraph) -> Option<Subgraph> {
    let nodes_sorted = (1..sub.num_nodes()).all(|i| {
        (sub.node_labels[i - 1].0, sub.nodes[i - 1]) <= (sub.node_labels[i].0, sub.nodes[i])
    });
    let edges_sorted = sub.edges.windows(2).all(|e| e[0] <= e[1]);
    if nodes_sorted && edges_sorted {
        return None;
    }
    let mut order: Vec<usize> = (0..sub.num_nodes()).collect();
    order.sort_by_key(|&i| (sub.node_labels[i].0, sub.nodes[i]));
    let mut new_index = vec![0usize; sub.num_nodes()];
    for (new, &old) in order.iter().enumerate() {
        new_index[old] = new;
    }
    let mut edges: Vec<LocalEdge> = sub
        .edges
        .iter()
        .map(|e| LocalEdge {
            head: new_index[e.head],
            relation: e.relation,
            tail: new_index[e.tail],
        })
        .collect();
    edges.sort_unstable();
    Some(Subgraph {
        nodes: order.iter().map(|&i| sub.nodes[i]).collect(),
        node_labels: order.iter().map(|&i| sub.node_labels[i]).collect(),
        edges,
        target: LocalEdge {
            head: new_index[sub.target.head],
            relation: sub.target.relation,
            tail: new_index[sub.target.tail],
        },
        directed: sub.directed,
    })
}

/// Evaluation-mode score of an already extracted subgraph.
pub fn score_subgraph(sub: &Subgraph, params: &ModelParams) -> Result<f64, ModelError> {
    let mut tape = Tape::new();
    let var = forward(&mut tape, sub, params, &mut Phase::Eval)?;
    Ok(tape.scalar(var))
}

/// How a candidate's subgraph was obtained (or not).
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum CandidateOutcome {
    Directed,
    UndirectedFallback,
    Empty,
}

#[derive(Debug, Clone, Copy)]
pub struct ScoredCandidate {
    pub score: f64,
    pub outcome: CandidateOutcome,
}

/// Extracts (directed with undirected fallback, or forced-undirected when
/// the ablation is on) and scores a candidate in evaluation mode. Empty
/// subgraphs receive the sentinel score.
pub fn score_candidate(
    g: &Graph,
    candidate: Triplet,
    params: &ModelParams,
    max_nodes: usize,
) -> Result<ScoredCandidate, ModelError> {
    let hop = params.config.hop;
    let (outcome, sub) = if params.config.ablation.undirected {
        match extract_undirected(g, candidate, hop, max_nodes)? {
            Some(sub) => (CandidateOutcome::UndirectedFallback, Some(sub)),
            None => (CandidateOutcome::Empty, None),
        }
    } else {
        match extract_with_fallback(g, candidate, hop, max_nodes)? {
            ExtractOutcome::Directed(sub) => (CandidateOutcome::Directed, Some(sub)),
            ExtractOutcome::Fallback(sub) => (CandidateOutcome::UndirectedFallback, Some(sub)),
            ExtractOutcome::Empty => (CandidateOutcome::Empty, None),
        }
    };
    match sub {
        Some(sub) => Ok(ScoredCandidate {
            score: score_subgraph(&sub, params)?,
            outcome,
        }),
        None => Ok(ScoredCandidate {
            score: EMPTY_SUBGRAPH_SCORE,
            outcome: CandidateOutcome::Empty,
        }),
    }
}
