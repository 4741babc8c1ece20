//! Enclosing-subgraph extraction around a candidate triplet.
//!
//! The directed extractor takes the intersection of the h-hop outgoing
//! neighborhood of the candidate head with the h-hop incoming neighborhood
//! of the candidate tail, so information can only flow head -> tail. When no
//! directed subgraph exists the undirected extractor (intersection of h-hop
//! neighborhoods ignoring edge direction) serves as a fallback; edge
//! direction is still preserved inside the returned edge list.
//!
//! Nodes are labeled with (distance from head, distance to tail) pairs
//! computed inside the induced subgraph; nodes unreachable on either side
//! are pruned iteratively, and remaining distances are clamped to `h + 1`.

use std::collections::HashSet;

use thiserror::Error;

use crate::autodiff::ColumnMap;
use crate::graph::{EntityId, Graph, RelationId, Triplet};

/// Default cap on extracted subgraph size. When exceeded, the nodes with the
/// smallest `d_head + d_tail` are kept (ties by entity id), head and tail
/// always included.
pub const DEFAULT_MAX_NODES: usize = 500;

const UNREACHED: u32 = u32::MAX;

/// An edge expressed in subgraph-local node indices.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord)]
pub struct LocalEdge {
    pub head: usize,
    pub relation: RelationId,
    pub tail: usize,
}

/// An extracted enclosing subgraph.
///
/// Invariants:
/// - `nodes` is sorted by `d_head` ascending with ties broken by global
///   entity id ascending; this is also the GRU sequence order.
/// - labels lie in `0..=h+1`; the candidate head is `(0, d)` and the
///   candidate tail `(d', 0)` with `d, d' >= 1`.
/// - the candidate triplet itself never appears in `edges`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Subgraph {
    /// Global entity ids, in label order.
    pub nodes: Vec<EntityId>,
    /// Per-node (distance from head, distance to tail), clamped to `h + 1`.
    pub node_labels: Vec<(u32, u32)>,
    /// Edges in local indices, sorted by (head, relation, tail).
    pub edges: Vec<LocalEdge>,
    /// The candidate triplet in local indices.
    pub target: LocalEdge,
    /// False when the undirected fallback produced this subgraph.
    pub directed: bool,
}

impl Subgraph {
    pub fn num_nodes(&self) -> usize {
        self.nodes.len()
    }

    pub fn num_edges(&self) -> usize {
        self.edges.len()
    }

    /// Local index of the candidate head.
    pub fn head_local(&self) -> usize {
        self.target.head
    }

    /// Local index of the candidate tail.
    pub fn tail_local(&self) -> usize {
        self.target.tail
    }
}

/// The three one-nonzero-per-column incidence structures tying nodes and
/// relations to edges.
#[derive(Debug, Clone)]
pub struct Incidence {
    pub num_nodes: usize,
    pub num_edges: usize,
    pub num_relations: usize,
    /// Row (node) of each edge's head: `head_to_edge` has its column j
    /// nonzero at this row.
    pub edge_heads: Vec<usize>,
    pub edge_relations: Vec<usize>,
    pub edge_tails: Vec<usize>,
}

impl Incidence {
    pub fn head_to_edge(&self) -> ColumnMap {
        ColumnMap::new(self.num_nodes, self.edge_heads.clone()).expect("validated on build")
    }

    pub fn rel_to_edge(&self) -> ColumnMap {
        ColumnMap::new(self.num_relations, self.edge_relations.clone()).expect("validated on build")
    }

    pub fn tail_to_edge(&self) -> ColumnMap {
        ColumnMap::new(self.num_nodes, self.edge_tails.clone()).expect("validated on build")
    }
}

#[derive(Debug, Error)]
pub enum ExtractError {
    #[error("degenerate candidate: head equals tail (entity {0})")]
    DegenerateCandidate(EntityId),
    #[error("entity {0} out of range")]
    EntityOutOfRange(EntityId),
    #[error("hop count must be at least 1")]
    ZeroHops,
    #[error("empty subgraph: incidence structures need at least one edge")]
    EmptyEdgeList,
}

/// Directed enclosing-subgraph extraction. Returns `Ok(None)` when no
/// directed subgraph exists for the candidate.
pub fn extract_directed(
    g: &Graph,
    candidate: Triplet,
    h: usize,
    max_nodes: usize,
) -> Result<Option<Subgraph>, ExtractError> {
    check_candidate(g, candidate, h)?;
    let outgoing = g.k_hop_outgoing(candidate.head, h);
    let one_hop_in = g.k_hop_incoming(candidate.tail, 1);
    // Existence test: the h-hop outgoing neighbors of the head must meet the
    // 1-hop incoming neighbors of the tail. This is a necessary condition;
    // pruning below re-checks that a head->tail path survives.
    if outgoing.is_disjoint(&one_hop_in) {
        return Ok(None);
    }
    let incoming = g.k_hop_incoming(candidate.tail, h);
    let mut nodes: HashSet<EntityId> = outgoing.intersection(&incoming).copied().collect();
    nodes.insert(candidate.head);
    nodes.insert(candidate.tail);
    Ok(assemble(g, candidate, nodes, h, max_nodes, true))
}

/// Undirected enclosing-subgraph extraction (the fallback): intersection of
/// the h-hop neighborhoods ignoring edge direction. Returns `Ok(None)` when
/// the induced edge list is empty.
pub fn extract_undirected(
    g: &Graph,
    candidate: Triplet,
    h: usize,
    max_nodes: usize,
) -> Result<Option<Subgraph>, ExtractError> {
    check_candidate(g, candidate, h)?;
    let around_head = undirected_k_hop(g, candidate.head, h);
    let around_tail = undirected_k_hop(g, candidate.tail, h);
    let mut nodes: HashSet<EntityId> = around_head.intersection(&around_tail).copied().collect();
    nodes.insert(candidate.head);
    nodes.insert(candidate.tail);
    Ok(assemble(g, candidate, nodes, h, max_nodes, false))
}

/// Directed extraction with undirected fallback: the standard inference
/// pipeline. The second member of the pair tells which route produced the
/// subgraph.
pub fn extract_with_fallback(
    g: &Graph,
    candidate: Triplet,
    h: usize,
    max_nodes: usize,
) -> Result<ExtractOutcome, ExtractError> {
    if let Some(sub) = extract_directed(g, candidate, h, max_nodes)? {
        return Ok(ExtractOutcome::Directed(sub));
    }
    match extract_undirected(g, candidate, h, max_nodes)? {
        Some(sub) => Ok(ExtractOutcome::Fallback(sub)),
        None => Ok(ExtractOutcome::Empty),
    }
}

#[derive(Debug, Clone)]
pub enum ExtractOutcome {
    Directed(Subgraph),
    Fallback(Subgraph),
    Empty,
}

impl ExtractOutcome {
    pub fn subgraph(&self) -> Option<&Subgraph> {
        match self {
            ExtractOutcome::Directed(s) | ExtractOutcome::Fallback(s) => Some(s),
            ExtractOutcome::Empty => None,
        }
    }

    pub fn is_empty(&self) -> bool {
        matches!(self, ExtractOutcome::Empty)
    }
}

fn check_candidate(g: &Graph, candidate: Triplet, h: usize) -> Result<(), ExtractError> {
    if h == 0 {
        return Err(ExtractError::ZeroHops);
    }
    if candidate.head == candidate.tail {
        return Err(ExtractError::DegenerateCandidate(candidate.head));
    }
    for e in [candidate.head, candidate.tail] {
        if e >= g.num_entities() {
            return Err(ExtractError::EntityOutOfRange(e));
        }
    }
    Ok(())
}

// A proper undirected BFS: the union of outgoing and incoming k-hop sets is
// not the undirected neighborhood, since undirected paths may alternate
// directions.
fn undirected_k_hop(g: &Graph, start: EntityId, k: usize) -> HashSet<EntityId> {
    let mut reached = HashSet::new();
    let mut visited = HashSet::from([start]);
    let mut frontier = vec![start];
    for _ in 0..k {
        let mut next = Vec::new();
        for &node in &frontier {
            let neighbors = g
                .out_edges(node)
                .iter()
                .map(|&e| g.triplet(e).tail)
                .chain(g.in_edges(node).iter().map(|&e| g.triplet(e).head));
            for nb in neighbors {
                if visited.insert(nb) {
                    reached.insert(nb);
                    next.push(nb);
                }
            }
        }
        frontier = next;
    }
    reached
}

/// Shared tail of both extractors: induce edges, label, prune, cap, sort.
fn assemble(
    g: &Graph,
    candidate: Triplet,
    nodes: HashSet<EntityId>,
    h: usize,
    max_nodes: usize,
    directed: bool,
) -> Option<Subgraph> {
    let mut node_list: Vec<EntityId> = nodes.iter().copied().collect();
    node_list.sort_unstable();
    let mut edges: Vec<Triplet> = g
        .induced_edges(&nodes, Some(candidate))
        .into_iter()
        .map(|e| g.triplet(e))
        .collect();

    let mut labeled = label_and_prune(&node_list, &edges, candidate, directed)?;

    if labeled.order.len() > max_nodes.max(2) {
        let keep = cap_nodes(&labeled, candidate, max_nodes);
        node_list = keep.iter().copied().collect::<Vec<_>>();
        node_list.sort_unstable();
        edges.retain(|t| keep.contains(&t.head) && keep.contains(&t.tail));
        labeled = label_and_prune(&node_list, &edges, candidate, directed)?;
    }

    finish(labeled, candidate, h, directed)
}

/// Distance labels for the surviving nodes, still in global ids and
/// unclamped.
struct Labeled {
    /// Surviving nodes sorted by global id.
    order: Vec<EntityId>,
    d_head: Vec<u32>,
    d_tail: Vec<u32>,
    edges: Vec<Triplet>,
}

/// Computes shortest distances head->node and node->tail within the induced
/// edge set (“->” meaning undirected steps when `directed` is false), then
/// removes non-candidate nodes with an unreachable side, iterating until
/// stable. Returns `None` when no head-tail path survives or no edge is
/// left.
fn label_and_prune(
    nodes: &[EntityId],
    edges: &[Triplet],
    candidate: Triplet,
    directed: bool,
) -> Option<Labeled> {
    let mut alive: Vec<EntityId> = nodes.to_vec();
    let mut edge_set: Vec<Triplet> = edges.to_vec();
    loop {
        let index: std::collections::HashMap<EntityId, usize> = alive
            .iter()
            .copied()
            .enumerate()
            .map(|(i, e)| (e, i))
            .collect();
        let n = alive.len();
        let mut fwd = vec![Vec::new(); n];
        let mut rev = vec![Vec::new(); n];
        for t in &edge_set {
            let (Some(&a), Some(&b)) = (index.get(&t.head), index.get(&t.tail)) else {
                continue;
            };
            fwd[a].push(b);
            rev[b].push(a);
            if !directed {
                fwd[b].push(a);
                rev[a].push(b);
            }
        }
        let head_idx = index[&candidate.head];
        let tail_idx = index[&candidate.tail];
        let d_head = bfs(&fwd, head_idx, n);
        let d_tail = bfs(&rev, tail_idx, n);

        let removable: Vec<EntityId> = alive
            .iter()
            .copied()
            .enumerate()
            .filter(|&(i, e)| {
                e != candidate.head
                    && e != candidate.tail
                    && (d_head[i] == UNREACHED || d_tail[i] == UNREACHED)
            })
            .map(|(_, e)| e)
            .collect();

        if removable.is_empty() {
            // Candidate endpoints must still connect and edges must remain.
            if edge_set.is_empty() || d_head[tail_idx] == UNREACHED {
                return None;
            }
            return Some(Labeled {
                order: alive,
                d_head,
                d_tail,
                edges: edge_set,
            });
        }
        let gone: HashSet<EntityId> = removable.into_iter().collect();
        alive.retain(|e| !gone.contains(e));
        edge_set.retain(|t| !gone.contains(&t.head) && !gone.contains(&t.tail));
    }
}

fn bfs(adj: &[Vec<usize>], start: usize, n: usize) -> Vec<u32> {
    let mut dist = vec![UNREACHED; n];
    dist[start] = 0;
    let mut queue = std::collections::VecDeque::from([start]);
    while let Some(u) = queue.pop_front() {
        for &v in &adj[u] {
            if dist[v] == UNREACHED {
                dist[v] = dist[u] + 1;
                queue.push_back(v);
            }
        }
    }
    dist
}

/// Keeps the `max_nodes` best nodes by (d_head + d_tail, entity id), always
/// retaining the candidate endpoints.
fn cap_nodes(labeled: &Labeled, candidate: Triplet, max_nodes: usize) -> HashSet<EntityId> {
    let mut ranked: Vec<(u64, EntityId)> = labeled
        .order
        .iter()
        .enumerate()
        .map(|(i, &e)| {
            (
                labeled.d_head[i] as u64 + labeled.d_tail[i] as u64,
                e,
            )
        })
        .collect();
    ranked.sort_unstable();
    let mut keep: HashSet<EntityId> = HashSet::from([candidate.head, candidate.tail]);
    for &(_, e) in ranked.iter() {
        if keep.len() >= max_nodes {
            break;
        }
        keep.insert(e);
    }
    keep
}

/// Clamps labels, establishes the canonical node order, and remaps edges to
/// local indices.
fn finish(labeled: Labeled, candidate: Triplet, h: usize, directed: bool) -> Option<Subgraph> {
    let clamp = (h + 1) as u32;
    let mut order: Vec<usize> = (0..labeled.order.len()).collect();
    let label =
        |i: usize| -> (u32, u32) { (labeled.d_head[i].min(clamp), labeled.d_tail[i].min(clamp)) };
    order.sort_by_key(|&i| (label(i).0, labeled.order[i]));

    let nodes: Vec<EntityId> = order.iter().map(|&i| labeled.order[i]).collect();
    let node_labels: Vec<(u32, u32)> = order.iter().map(|&i| label(i)).collect();
    let local: std::collections::HashMap<EntityId, usize> = nodes
        .iter()
        .copied()
        .enumerate()
        .map(|(i, e)| (e, i))
        .collect();

    let mut edges: Vec<LocalEdge> = labeled
        .edges
        .iter()
        .map(|t| LocalEdge {
            head: local[&t.head],
            relation: t.relation,
            tail: local[&t.tail],
        })
        .collect();
    edges.sort_unstable();
    if edges.is_empty() {
        return None;
    }

    Some(Subgraph {
        target: LocalEdge {
            head: local[&candidate.head],
            relation: candidate.relation,
            tail: local[&candidate.tail],
        },
        nodes,
        node_labels,
        edges,
        directed,
    })
}

/// Builds the head/relation/tail-to-edge incidence structures. Each column
/// (edge) carries exactly one 1 in each matrix.
pub fn build_incidence(sub: &Subgraph, num_relations: usize) -> Result<Incidence, ExtractError> {
    if sub.edges.is_empty() {
        return Err(ExtractError::EmptyEdgeList);
    }
    Ok(Incidence {
        num_nodes: sub.num_nodes(),
        num_edges: sub.num_edges(),
        num_relations,
        edge_heads: sub.edges.iter().map(|e| e.head).collect(),
        edge_relations: sub.edges.iter().map(|e| e.relation).collect(),
        edge_tails: sub.edges.iter().map(|e| e.tail).collect(),
    })
}
