//! Knowledge graph storage: triplet loading, vocabularies, and directed
//! adjacency queries.
//!
//! A [`Graph`] is immutable after construction. Entity and relation ids are
//! dense integers assigned in first-seen order; the original strings are
//! kept for reporting. Duplicate triplets in the input are dropped (with a
//! count) rather than rejected.

use std::collections::{HashMap, HashSet, VecDeque};
use std::fs::File;
use std::io::{BufRead, BufReader};
use std::path::Path;

use thiserror::Error;

pub type EntityId = usize;
pub type RelationId = usize;
pub type EdgeId = usize;

/// A directed (head, relation, tail) edge. Direction is semantic:
/// `(h, r, t)` and `(t, r, h)` are distinct triplets.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct Triplet {
    pub head: EntityId,
    pub relation: RelationId,
    pub tail: EntityId,
}

impl Triplet {
    pub fn new(head: EntityId, relation: RelationId, tail: EntityId) -> Self {
        Self {
            head,
            relation,
            tail,
        }
    }

    /// The head-tail exchanged counterpart.
    pub fn exchanged(&self) -> Self {
        Self {
            head: self.tail,
            relation: self.relation,
            tail: self.head,
        }
    }
}

#[derive(Debug, Error)]
pub enum GraphError {
    #[error("io error reading {path}: {source}")]
    Io {
        path: String,
        source: std::io::Error,
    },
    #[error("parse error at {path}:{line}: expected head<TAB>relation<TAB>tail, got {got:?}")]
    Parse {
        path: String,
        line: usize,
        got: String,
    },
    #[error("vocabulary error at {path}:{line}: unknown relation {name:?}")]
    UnknownRelation {
        path: String,
        line: usize,
        name: String,
    },
    #[error("unknown entity id {0}")]
    EntityOutOfRange(EntityId),
}

/// Bidirectional string <-> dense-id map.
#[derive(Debug, Clone, Default)]
pub struct Vocab {
    names: Vec<String>,
    ids: HashMap<String, usize>,
}

impl Vocab {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn from_names(names: impl IntoIterator<Item = String>) -> Self {
        let mut v = Self::new();
        for n in names {
            v.get_or_insert(&n);
        }
        v
    }

    pub fn get_or_insert(&mut self, name: &str) -> usize {
        if let Some(&id) = self.ids.get(name) {
            return id;
        }
        let id = self.names.len();
        self.names.push(name.to_string());
        self.ids.insert(name.to_string(), id);
        id
    }

    pub fn id(&self, name: &str) -> Option<usize> {
        self.ids.get(name).copied()
    }

    pub fn name(&self, id: usize) -> Option<&str> {
        self.names.get(id).map(|s| s.as_str())
    }

    pub fn len(&self) -> usize {
        self.names.len()
    }

    pub fn is_empty(&self) -> bool {
        self.names.is_empty()
    }

    pub fn names(&self) -> &[String] {
        &self.names
    }
}

/// Whether loading builds fresh vocabularies or extends existing ones.
/// In `Reuse` mode unseen entities are appended (inductive test graphs bring
/// new entities) while relations must already be known.
pub enum VocabMode {
    Build,
    Reuse {
        entities: Vocab,
        relations: Vocab,
    },
}

/// Immutable directed multigraph over dense entity/relation ids.
#[derive(Debug, Clone)]
pub struct Graph {
    triplets: Vec<Triplet>,
    out_index: Vec<Vec<EdgeId>>,
    in_index: Vec<Vec<EdgeId>>,
    triplet_set: HashSet<Triplet>,
    entity_vocab: Vocab,
    relation_vocab: Vocab,
    duplicates_dropped: usize,
}

impl Graph {
    /// Builds a graph from raw string triples. Duplicates are dropped and
    /// counted; indices are constructed eagerly.
    pub fn from_string_triples<I>(triples: I, mode: VocabMode) -> Result<Self, GraphError>
    where
        I: IntoIterator<Item = (String, String, String)>,
    {
        let (mut entity_vocab, mut relation_vocab, reuse_relations) = match mode {
            VocabMode::Build => (Vocab::new(), Vocab::new(), false),
            VocabMode::Reuse {
                entities,
                relations,
            } => (entities, relations, true),
        };

        let mut triplets = Vec::new();
        let mut triplet_set = HashSet::new();
        let mut duplicates = 0usize;
        for (line_no, (h, r, t)) in triples.into_iter().enumerate() {
            let head = entity_vocab.get_or_insert(&h);
            let relation = if reuse_relations {
                relation_vocab
                    .id(&r)
                    .ok_or_else(|| GraphError::UnknownRelation {
                        path: "<memory>".into(),
                        line: line_no + 1,
                        name: r.clone(),
                    })?
            } else {
                relation_vocab.get_or_insert(&r)
            };
            let tail = entity_vocab.get_or_insert(&t);
            let triplet = Triplet::new(head, relation, tail);
            if triplet_set.insert(triplet) {
                triplets.push(triplet);
            } else {
                duplicates += 1;
            }
        }

        let mut out_index = vec![Vec::new(); entity_vocab.len()];
        let mut in_index = vec![Vec::new(); entity_vocab.len()];
        for (edge, t) in triplets.iter().enumerate() {
            out_index[t.head].push(edge);
            in_index[t.tail].push(edge);
        }

        Ok(Self {
            triplets,
            out_index,
            in_index,
            triplet_set,
            entity_vocab,
            relation_vocab,
            duplicates_dropped: duplicates,
        })
    }

    /// Test/tooling helper: builds a graph over synthetic names `e{i}`,
    /// `r{i}` from id triples.
    pub fn from_ids(
        num_entities: usize,
        num_relations: usize,
        triples: &[(usize, usize, usize)],
    ) -> Self {
        let mut entities = Vocab::new();
        for i in 0..num_entities {
            entities.get_or_insert(&format!("e{i}"));
        }
        let mut relations = Vocab::new();
        for i in 0..num_relations {
            relations.get_or_insert(&format!("r{i}"));
        }
        let strings: Vec<(String, String, String)> = triples
            .iter()
            .map(|&(h, r, t)| {
                assert!(h < num_entities && t < num_entities && r < num_relations);
                (format!("e{h}"), format!("r{r}"), format!("e{t}"))
            })
            .collect();
        Self::from_string_triples(
            strings,
            VocabMode::Reuse {
                entities,
                relations,
            },
        )
        .expect("ids validated above")
    }

    pub fn num_entities(&self) -> usize {
        self.entity_vocab.len()
    }

    pub fn num_relations(&self) -> usize {
        self.relation_vocab.len()
    }

    pub fn num_triplets(&self) -> usize {
        self.triplets.len()
    }

    pub fn triplets(&self) -> &[Triplet] {
        &self.triplets
    }

    pub fn triplet(&self, edge: EdgeId) -> Triplet {
        self.triplets[edge]
    }

    pub fn contains(&self, t: Triplet) -> bool {
        self.triplet_set.contains(&t)
    }

    pub fn out_edges(&self, e: EntityId) -> &[EdgeId] {
        &self.out_index[e]
    }

    pub fn in_edges(&self, e: EntityId) -> &[EdgeId] {
        &self.in_index[e]
    }

    pub fn entity_vocab(&self) -> &Vocab {
        &self.entity_vocab
    }

    pub fn relation_vocab(&self) -> &Vocab {
        &self.relation_vocab
    }

    pub fn duplicates_dropped(&self) -> usize {
        self.duplicates_dropped
    }

    /// Entities reachable from `start` by following 1..k edges head->tail.
    /// `start` itself is included only when it lies on a directed cycle of
    /// length <= k.
    pub fn k_hop_outgoing(&self, start: EntityId, k: usize) -> HashSet<EntityId> {
        self.k_hop(start, k, Direction::Outgoing)
    }

    /// Mirror of [`Graph::k_hop_outgoing`] with edge direction reversed.
    pub fn k_hop_incoming(&self, start: EntityId, k: usize) -> HashSet<EntityId> {
        self.k_hop(start, k, Direction::Incoming)
    }

    fn k_hop(&self, start: EntityId, k: usize, dir: Direction) -> HashSet<EntityId> {
        let mut reached = HashSet::new();
        if k == 0 || start >= self.num_entities() {
            return reached;
        }
        let mut visited = HashSet::from([start]);
        let mut queue = VecDeque::from([(start, 0usize)]);
        while let Some((node, depth)) = queue.pop_front() {
            if depth == k {
                continue;
            }
            let edges = match dir {
                Direction::Outgoing => &self.out_index[node],
                Direction::Incoming => &self.in_index[node],
            };
            for &edge in edges {
                let next = match dir {
                    Direction::Outgoing => self.triplets[edge].tail,
                    Direction::Incoming => self.triplets[edge].head,
                };
                if next == start {
                    // Re-reaching the start closes a cycle of length depth+1.
                    reached.insert(start);
                    continue;
                }
                if visited.insert(next) {
                    reached.insert(next);
                    queue.push_back((next, depth + 1));
                }
            }
        }
        reached
    }

    /// All edges whose head and tail both lie in `nodes`, excluding the
    /// `exclude` triplet when given. Returned edge ids are sorted.
    pub fn induced_edges(
        &self,
        nodes: &HashSet<EntityId>,
        exclude: Option<Triplet>,
    ) -> Vec<EdgeId> {
        let mut sorted_nodes: Vec<EntityId> = nodes.iter().copied().collect();
        sorted_nodes.sort_unstable();
        let mut edges = Vec::new();
        for &n in &sorted_nodes {
            if n >= self.num_entities() {
                continue;
            }
            for &edge in &self.out_index[n] {
                let t = self.triplets[edge];
                if nodes.contains(&t.tail) && exclude != Some(t) {
                    edges.push(edge);
                }
            }
        }
        edges.sort_unstable();
        edges
    }
}

enum Direction {
    Outgoing,
    Incoming,
}

/// Reads a triplet file: UTF-8 text, one `head<TAB>relation<TAB>tail` per
/// line, `\r\n` tolerated, empty lines skipped.
pub fn read_triplet_lines(path: &Path) -> Result<Vec<(String, String, String)>, GraphError> {
    let display = path.display().to_string();
    let file = File::open(path).map_err(|source| GraphError::Io {
        path: display.clone(),
        source,
    })?;
    let reader = BufReader::new(file);
    let mut out = Vec::new();
    for (idx, line) in reader.lines().enumerate() {
        let line = line.map_err(|source| GraphError::Io {
            path: display.clone(),
            source,
        })?;
        let line = line.strip_suffix('\r').unwrap_or(&line);
        if line.is_empty() {
            continue;
        }
        let mut fields = line.split('\t');
        match (fields.next(), fields.next(), fields.next(), fields.next()) {
            (Some(h), Some(r), Some(t), None) if !h.is_empty() && !r.is_empty() && !t.is_empty() => {
                out.push((h.to_string(), r.to_string(), t.to_string()));
            }
            _ => {
                return Err(GraphError::Parse {
                    path: display,
                    line: idx + 1,
                    got: line.to_string(),
                })
            }
        }
    }
    Ok(out)
}

/// Loads a graph from a triplet file.
pub fn load_graph(path: &Path, mode: VocabMode) -> Result<Graph, GraphError> {
    let lines = read_triplet_lines(path)?;
    Graph::from_string_triples(lines, mode).map_err(|e| match e {
        GraphError::UnknownRelation { line, name, .. } => GraphError::UnknownRelation {
            path: path.display().to_string(),
            line,
            name,
        },
        other => other,
    })
}

/// Query triplets resolved against a graph's vocabularies. Lines mentioning
/// entities absent from the graph are skipped and counted: such candidates
/// have no enclosing subgraph by definition. Unknown relations are hard
/// errors, since relations are shared between train and test graphs.
#[derive(Debug, Clone)]
pub struct ResolvedTriplets {
    pub triplets: Vec<Triplet>,
    pub skipped_unknown_entity: usize,
}

pub fn resolve_triplets(path: &Path, graph: &Graph) -> Result<ResolvedTriplets, GraphError> {
    let display = path.display().to_string();
    let lines = read_triplet_lines(path)?;
    let mut triplets = Vec::with_capacity(lines.len());
    let mut skipped = 0usize;
    for (idx, (h, r, t)) in lines.into_iter().enumerate() {
        let relation =
            graph
                .relation_vocab()
                .id(&r)
                .ok_or_else(|| GraphError::UnknownRelation {
                    path: display.clone(),
                    line: idx + 1,
                    name: r.clone(),
                })?;
        match (graph.entity_vocab().id(&h), graph.entity_vocab().id(&t)) {
            (Some(head), Some(tail)) => triplets.push(Triplet::new(head, relation, tail)),
            _ => skipped += 1,
        }
    }
    Ok(ResolvedTriplets {
        triplets,
        skipped_unknown_entity: skipped,
    })
}
