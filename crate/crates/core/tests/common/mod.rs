//! Shared test oracles: brute-force reimplementations kept deliberately
//! independent of the library's algorithms, plus dataset generators.

#![allow(dead_code)]

pub mod gradients;

use std::collections::BTreeMap;
use std::collections::HashSet;

use rand::rngs::StdRng;
use rand::{Rng, SeedableRng};

use relpred_core::graph::{Graph, Triplet};
use relpred_core::subgraph::Subgraph;

pub const INF: u32 = u32::MAX;

/// Floyd-Warshall all-pairs shortest hop counts over an explicit edge list.
pub fn floyd_warshall(n: usize, edges: &[(usize, usize)], undirected: bool) -> Vec<Vec<u32>> {
    let mut dist = vec![vec![INF; n]; n];
    for (v, row) in dist.iter_mut().enumerate() {
        row[v] = 0;
    }
    for &(a, b) in edges {
        dist[a][b] = dist[a][b].min(1);
        if undirected {
            dist[b][a] = dist[b][a].min(1);
        }
    }
    for k in 0..n {
        for i in 0..n {
            if dist[i][k] == INF {
                continue;
            }
            for j in 0..n {
                if dist[k][j] == INF {
                    continue;
                }
                let through = dist[i][k] + dist[k][j];
                if through < dist[i][j] {
                    dist[i][j] = through;
                }
            }
        }
    }
    dist
}

/// Exhaustive k-hop reachability by breadth-first layers, with the
/// start-on-cycle rule (start belongs to its own neighborhood only when a
/// directed cycle of length <= k returns to it).
pub fn oracle_k_hop(g: &Graph, start: usize, k: usize, incoming: bool) -> Vec<usize> {
    let edges: Vec<(usize, usize)> = g
        .triplets()
        .iter()
        .map(|t| if incoming { (t.tail, t.head) } else { (t.head, t.tail) })
        .collect();
    let dist = floyd_warshall(g.num_entities(), &edges, false);
    let mut out = Vec::new();
    for v in 0..g.num_entities() {
        if v == start {
            // cycle through start: one step to some u, then u -> ... -> start
            let cycle = edges
                .iter()
                .filter(|&&(a, _)| a == start)
                .map(|&(_, u)| {
                    if u == start {
                        1
                    } else if dist[u][start] == INF {
                        INF
                    } else {
                        dist[u][start] + 1
                    }
                })
                .min()
                .unwrap_or(INF);
            if cycle as usize <= k {
                out.push(v);
            }
        } else if dist[start][v] != INF && dist[start][v] as usize <= k {
            out.push(v);
        }
    }
    out
}

/// The subgraph as plain comparable data, keyed by global ids.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct OracleSubgraph {
    /// entity id -> (d_head, d_tail), clamped to h + 1
    pub labels: BTreeMap<usize, (u32, u32)>,
    /// global (head, relation, tail) triples, sorted
    pub edges: Vec<(usize, usize, usize)>,
}

pub fn as_oracle_view(sub: &Subgraph) -> OracleSubgraph {
    let labels = sub
        .nodes
        .iter()
        .zip(&sub.node_labels)
        .map(|(&n, &l)| (n, l))
        .collect();
    let mut edges: Vec<(usize, usize, usize)> = sub
        .edges
        .iter()
        .map(|e| (sub.nodes[e.head], e.relation, sub.nodes[e.tail]))
        .collect();
    edges.sort_unstable();
    OracleSubgraph { labels, edges }
}

/// Brute-force reimplementation of the whole extraction pipeline using
/// Floyd-Warshall everywhere: neighborhood intersection, induced edges with
/// target exclusion, iterated pruning, clamping.
pub fn oracle_extract(
    g: &Graph,
    candidate: Triplet,
    h: usize,
    directed: bool,
) -> Option<OracleSubgraph> {
    assert_ne!(candidate.head, candidate.tail);
    let n = g.num_entities();
    let all_edges: Vec<(usize, usize, usize)> = g
        .triplets()
        .iter()
        .map(|t| (t.head, t.relation, t.tail))
        .collect();
    let hops: Vec<(usize, usize)> = all_edges.iter().map(|&(a, _, b)| (a, b)).collect();
    let dist = floyd_warshall(n, &hops, !directed);

    if directed {
        // Existence test: h-hop outgoing of head vs 1-hop incoming of tail.
        let outgoing = oracle_k_hop(g, candidate.head, h, false);
        let one_in = oracle_k_hop(g, candidate.tail, 1, true);
        if !outgoing.iter().any(|v| one_in.contains(v)) {
            return None;
        }
    }

    // V = {v : d(head, v) <= h and d(v, tail) <= h} + endpoints.
    let mut nodes: Vec<usize> = (0..n)
        .filter(|&v| {
            v != candidate.head
                && v != candidate.tail
                && dist[candidate.head][v] != INF
                && dist[candidate.head][v] as usize <= h
                && dist[v][candidate.tail] != INF
                && dist[v][candidate.tail] as usize <= h
        })
        .collect();
    nodes.push(candidate.head);
    nodes.push(candidate.tail);
    nodes.sort_unstable();

    let mut edges: Vec<(usize, usize, usize)> = all_edges
        .iter()
        .filter(|&&(a, r, b)| {
            nodes.contains(&a)
                && nodes.contains(&b)
                && (a, r, b) != (candidate.head, candidate.relation, candidate.tail)
        })
        .copied()
        .collect();

    // Iterated pruning with distances recomputed inside the induced
    // subgraph each round.
    loop {
        let local: BTreeMap<usize, usize> =
            nodes.iter().enumerate().map(|(i, &v)| (v, i)).collect();
        let local_edges: Vec<(usize, usize)> = edges
            .iter()
            .map(|&(a, _, b)| (local[&a], local[&b]))
            .collect();
        let d = floyd_warshall(nodes.len(), &local_edges, !directed);
        let hi = local[&candidate.head];
        let ti = local[&candidate.tail];
        let doomed: Vec<usize> = nodes
            .iter()
            .filter(|&&v| {
                v != candidate.head
                    && v != candidate.tail
                    && (d[hi][local[&v]] == INF || d[local[&v]][ti] == INF)
            })
            .copied()
            .collect();
        if doomed.is_empty() {
            if edges.is_empty() || d[hi][ti] == INF {
                return None;
            }
            let clamp = (h + 1) as u32;
            let labels = nodes
                .iter()
                .map(|&v| (v, (d[hi][local[&v]].min(clamp), d[local[&v]][ti].min(clamp))))
                .collect();
            edges.sort_unstable();
            return Some(OracleSubgraph { labels, edges });
        }
        nodes.retain(|v| !doomed.contains(v));
        edges.retain(|&(a, _, b)| !doomed.contains(&a) && !doomed.contains(&b));
    }
}

/// Quadratic-time AUC-PR reference: precision/recall recounted from scratch
/// at every distinct threshold.
pub fn oracle_auc_pr(scores: &[(f64, bool)]) -> f64 {
    let total_pos = scores.iter().filter(|(_, p)| *p).count();
    let mut thresholds: Vec<f64> = scores.iter().map(|(s, _)| *s).collect();
    thresholds.sort_by(|a, b| b.total_cmp(a));
    thresholds.dedup();
    let mut area = 0.0;
    let mut prev_recall = 0.0;
    for &th in &thresholds {
        let tp = scores.iter().filter(|(s, p)| *p && *s >= th).count();
        let fp = scores.iter().filter(|(s, p)| !*p && *s >= th).count();
        let precision = tp as f64 / (tp + fp) as f64;
        let recall = tp as f64 / total_pos as f64;
        area += (recall - prev_recall) * precision;
        prev_recall = recall;
    }
    area
}

/// Pairwise AUC-ROC reference: every positive compared with every negative,
/// ties worth one half.
pub fn oracle_auc_roc(scores: &[(f64, bool)]) -> f64 {
    let positives: Vec<f64> = scores.iter().filter(|(_, p)| *p).map(|(s, _)| *s).collect();
    let negatives: Vec<f64> = scores.iter().filter(|(_, p)| !*p).map(|(s, _)| *s).collect();
    let mut doubled = 0u64;
    for &p in &positives {
        for &n in &negatives {
            if p > n {
                doubled += 2;
            } else if p == n {
                doubled += 1;
            }
        }
    }
    doubled as f64 / (2 * positives.len() as u64 * negatives.len() as u64) as f64
}

/// Sort-based hits@k reference under the pessimistic tie rule: on equal
/// scores the negative sorts ahead of the positive.
pub fn oracle_hits_at_k(pos: f64, negs: &[f64], k: usize) -> bool {
    let mut all: Vec<(f64, bool)> = negs.iter().map(|&s| (s, false)).collect();
    all.push((pos, true));
    all.sort_by(|a, b| b.0.total_cmp(&a.0).then(a.1.cmp(&b.1)));
    let rank = all.iter().position(|&(_, p)| p).expect("positive present") + 1;
    rank <= k
}

/// Random directed multigraph without duplicate triplets.
pub fn random_graph(rng: &mut StdRng, max_nodes: usize, max_relations: usize) -> Graph {
    let n = rng.gen_range(4..=max_nodes);
    let r = rng.gen_range(1..=max_relations);
    let target_edges = rng.gen_range(n..=(3 * n));
    let mut triples = Vec::new();
    for _ in 0..target_edges {
        triples.push((rng.gen_range(0..n), rng.gen_range(0..r), rng.gen_range(0..n)));
    }
    Graph::from_ids(n, r, &triples)
}

/// A candidate pair suitable for extraction (distinct endpoints).
pub fn random_candidate(rng: &mut StdRng, g: &Graph) -> Triplet {
    loop {
        let head = rng.gen_range(0..g.num_entities());
        let tail = rng.gen_range(0..g.num_entities());
        if head != tail {
            let relation = rng.gen_range(0..g.num_relations());
            return Triplet::new(head, relation, tail);
        }
    }
}

pub type StringTriples = Vec<(String, String, String)>;

/// The committed toy dataset: a 24-entity ring with two-step chords and
/// sparse three-step jumps, split deterministically into a train graph plus
/// held-out valid/test queries.
pub fn toy_dataset() -> (StringTriples, StringTriples, StringTriples) {
    const N: usize = 24;
    let ent = |i: usize| format!("n{:02}", i % N);
    let mut all: Vec<(String, String, String)> = Vec::new();
    for i in 0..N {
        all.push((ent(i), "rel_a".into(), ent(i + 1)));
        all.push((ent(i), "rel_b".into(), ent(i + 2)));
        if i % 2 == 0 {
            all.push((ent(i), "rel_c".into(), ent(i + 3)));
        }
    }
    let test_keys: Vec<(String, String, String)> = [
        (1, "rel_a", 2),
        (5, "rel_a", 6),
        (9, "rel_a", 10),
        (13, "rel_a", 14),
        (2, "rel_b", 4),
        (8, "rel_b", 10),
        (14, "rel_b", 16),
        (20, "rel_b", 22),
    ]
    .into_iter()
    .map(|(a, r, b)| (ent(a), r.to_string(), ent(b)))
    .collect();
    let valid_keys: Vec<(String, String, String)> = [
        (3, "rel_a", 4),
        (11, "rel_a", 12),
        (6, "rel_b", 8),
        (18, "rel_b", 20),
    ]
    .into_iter()
    .map(|(a, r, b)| (ent(a), r.to_string(), ent(b)))
    .collect();
    let train: Vec<(String, String, String)> = all
        .into_iter()
        .filter(|t| !test_keys.contains(t) && !valid_keys.contains(t))
        .collect();
    (train, valid_keys, test_keys)
}

pub fn write_triplet_file(path: &std::path::Path, rows: &[(String, String, String)]) {
    let mut out = String::new();
    for (h, r, t) in rows {
        out.push_str(&format!("{h}\t{r}\t{t}\n"));
    }
    std::fs::write(path, out).unwrap();
}

/// Writes the toy dataset into `dir` as train/valid/test files.
pub fn write_toy_dataset(dir: &std::path::Path) {
    let (train, valid, test) = toy_dataset();
    write_triplet_file(&dir.join("train.txt"), &train);
    write_triplet_file(&dir.join("valid.txt"), &valid);
    write_triplet_file(&dir.join("test.txt"), &test);
}

/// Synthetic asymmetry benchmark built around a chain of anchor pairs.
///
/// Relation 0 ("direct") never appears in the graph; it links consecutive
/// anchors a_i -> a_{i+1} and is what the model must score. Every anchor
/// pair is supported by one forward two-step scaffold a_i -> m_i -> a_{i+1}
/// over relation 1 ("step"). Each pair also receives source confusers
/// (u -> a_i, u -> a_{i+1}) and sink confusers (a_i -> v, a_{i+1} -> v):
/// they sit inside the undirected neighborhood intersection of the pair but
/// never create a directed through-path, so the directed subgraph of a true
/// query stays a three-node motif while the exchanged query has no directed
/// subgraph at all and both fall into the same confuser-heavy undirected
/// blob when extraction is forced undirected.
pub struct AsymmetryData {
    pub graph: Graph,
    pub train_queries: Vec<Triplet>,
    pub test_queries: Vec<Triplet>,
}

pub fn asymmetry_dataset(
    links: usize,
    confusers_min: usize,
    confusers_max: usize,
    seed: u64,
) -> AsymmetryData {
    let mut rng = StdRng::seed_from_u64(seed);
    let anchors = links + 1;
    let mut next_id = anchors;
    let mut fresh = || {
        let id = next_id;
        next_id += 1;
        id
    };

    let mut triples = Vec::new();
    // support edges draw one of two scaffold relations at random so every
    // (label, relation, label) signature count carries sampling noise
    let mut rel = {
        let mut r = StdRng::seed_from_u64(seed ^ 0xabcd_ef01);
        move || 1 + r.gen_range(0..2usize)
    };
    for i in 0..links {
        let (a, b) = (i, i + 1);
        // the defining forward scaffold: a -> m -> b
        let m = fresh();
        triples.push((a, rel(), m));
        triples.push((m, rel(), b));
        // A forward three-step path a -> f1 -> f2 -> b and a backward one
        // b -> w1 -> w2 -> a. Under an undirected view with swapped labels
        // these two trade places exactly, so three-step structure carries no
        // orientation information; under directed extraction the forward
        // query keeps its two-step motif while the exchanged query sees only
        // the longer return chain.
        let f1 = fresh();
        let f2 = fresh();
        triples.push((a, rel(), f1));
        triples.push((f1, rel(), f2));
        triples.push((f2, rel(), b));
        let w1 = fresh();
        let w2 = fresh();
        triples.push((b, rel(), w1));
        triples.push((w1, rel(), w2));
        triples.push((w2, rel(), a));
        // Source and sink confusers adjacent to both anchors: they populate
        // the undirected neighborhood with every single-edge label signature
        // the scaffold produces, without creating directed through-paths.
        let sources = rng.gen_range(confusers_min..=confusers_max);
        for _ in 0..sources {
            let u = fresh();
            triples.push((u, rel(), a));
            triples.push((u, rel(), b));
        }
        let sinks = rng.gen_range(confusers_min..=confusers_max);
        for _ in 0..sinks {
            let v = fresh();
            triples.push((a, rel(), v));
            triples.push((b, rel(), v));
        }
    }
    let graph = Graph::from_ids(next_id, 3, &triples);

    let mut train_queries = Vec::new();
    let mut test_queries = Vec::new();
    for i in 0..links {
        let q = Triplet::new(i, 0, i + 1);
        if i % 3 == 0 {
            test_queries.push(q);
        } else {
            train_queries.push(q);
        }
    }
    AsymmetryData {
        graph,
        train_queries,
        test_queries,
    }
}

/// The toy dataset as an in-memory graph plus resolved valid/test queries.
pub fn toy_graph() -> (Graph, Vec<Triplet>, Vec<Triplet>) {
    let (train, valid, test) = toy_dataset();
    let graph =
        Graph::from_string_triples(train, relpred_core::VocabMode::Build).expect("well formed");
    let resolve = |rows: &[(String, String, String)]| -> Vec<Triplet> {
        rows.iter()
            .map(|(h, r, t)| {
                Triplet::new(
                    graph.entity_vocab().id(h).expect("toy entity known"),
                    graph.relation_vocab().id(r).expect("toy relation known"),
                    graph.entity_vocab().id(t).expect("toy entity known"),
                )
            })
            .collect()
    };
    let valid = resolve(&valid);
    let test = resolve(&test);
    (graph, valid, test)
}

/// Parses `key=value` tokens out of a training-log line.
pub fn log_field(line: &str, key: &str) -> Option<String> {
    line.split_whitespace()
        .find_map(|tok| tok.strip_prefix(&format!("{key}=")).map(str::to_string))
}

/// Mean batch loss per epoch, parsed from a training log.
pub fn epoch_mean_losses(log: &str) -> Vec<f64> {
    let mut sums: BTreeMap<usize, (f64, usize)> = BTreeMap::new();
    for line in log.lines() {
        if let (Some(epoch), Some(loss)) = (log_field(line, "epoch"), log_field(line, "loss")) {
            let epoch: usize = epoch.parse().unwrap();
            let loss: f64 = loss.parse().unwrap();
            let entry = sums.entry(epoch).or_insert((0.0, 0));
            entry.0 += loss;
            entry.1 += 1;
        }
    }
    sums.values().map(|&(s, n)| s / n as f64).collect()
}

/// Structural invariants every returned subgraph must satisfy.
pub fn check_subgraph_invariants(sub: &Subgraph, candidate: Triplet, h: usize) {
    for w in 0..sub.num_nodes().saturating_sub(1) {
        let a = (sub.node_labels[w].0, sub.nodes[w]);
        let b = (sub.node_labels[w + 1].0, sub.nodes[w + 1]);
        assert!(a <= b, "node order violated: {a:?} vs {b:?}");
    }
    let head_local = sub.head_local();
    let tail_local = sub.tail_local();
    assert_eq!(sub.nodes[head_local], candidate.head);
    assert_eq!(sub.nodes[tail_local], candidate.tail);
    assert_eq!(sub.node_labels[head_local].0, 0);
    assert_eq!(sub.node_labels[tail_local].1, 0);
    assert!(sub.node_labels[head_local].1 >= 1);
    assert!(sub.node_labels[tail_local].0 >= 1);
    let clamp = (h + 1) as u32;
    for &(dh, dt) in &sub.node_labels {
        assert!(dh <= clamp && dt <= clamp);
    }
    for e in &sub.edges {
        assert!(e.head < sub.num_nodes() && e.tail < sub.num_nodes());
        assert!(
            (sub.nodes[e.head], e.relation, sub.nodes[e.tail])
                != (candidate.head, candidate.relation, candidate.tail),
            "target edge leaked into the subgraph"
        );
    }
}

/// Directed and undirected extraction against the Floyd-Warshall oracle over
/// random graphs. Panics on any disagreement; returns (directed hits,
/// undirected hits) so callers can assert both code paths were exercised.
pub fn extraction_battery(rounds: usize, seed: u64) -> (usize, usize) {
    use relpred_core::subgraph::{extract_directed, extract_undirected};
    const NO_CAP: usize = 100_000;
    let mut rng = StdRng::seed_from_u64(seed);
    let mut directed_found = 0usize;
    let mut undirected_found = 0usize;
    for round in 0..rounds {
        let g = random_graph(&mut rng, 100, 3);
        let h = rng.gen_range(1..=3);
        for _ in 0..3 {
            let candidate = random_candidate(&mut rng, &g);

            let dir = extract_directed(&g, candidate, h, NO_CAP).unwrap();
            let dir_oracle = oracle_extract(&g, candidate, h, true);
            match (&dir, &dir_oracle) {
                (Some(sub), Some(oracle)) => {
                    assert_eq!(&as_oracle_view(sub), oracle, "round {round} directed");
                    check_subgraph_invariants(sub, candidate, h);
                    assert!(sub.directed);
                    directed_found += 1;
                }
                (None, None) => {}
                other => panic!("round {round}: directed disagreement {other:?}"),
            }

            let und = extract_undirected(&g, candidate, h, NO_CAP).unwrap();
            let und_oracle = oracle_extract(&g, candidate, h, false);
            match (&und, &und_oracle) {
                (Some(sub), Some(oracle)) => {
                    assert_eq!(&as_oracle_view(sub), oracle, "round {round} undirected");
                    check_subgraph_invariants(sub, candidate, h);
                    assert!(!sub.directed);
                    undirected_found += 1;
                }
                (None, None) => {}
                other => panic!("round {round}: undirected disagreement {other:?}"),
            }

            if let (Some(d), Some(u)) = (&dir, &und) {
                let d_nodes: HashSet<usize> = d.nodes.iter().copied().collect();
                let u_nodes: HashSet<usize> = u.nodes.iter().copied().collect();
                assert!(
                    d_nodes.is_subset(&u_nodes),
                    "directed nodes must be a subset of undirected nodes"
                );
            }
            if dir.is_some() {
                assert!(und.is_some(), "directed subgraph without undirected one");
            }
        }
    }
    (directed_found, undirected_found)
}

/// All three ranking metrics against their quadratic references on random
/// score sets. Panics on any mismatch.
pub fn metrics_battery(sets: usize, seed: u64) {
    use relpred_core::eval::{auc_pr, auc_roc, hits_at_k, LabeledScore};
    let mut rng = StdRng::seed_from_u64(seed);
    for round in 0..sets {
        let n = rng.gen_range(2..60);
        let quantize = rng.gen::<bool>();
        let mut raw = Vec::with_capacity(n);
        for i in 0..n {
            let mut s: f64 = rng.gen_range(-3.0..3.0);
            if quantize {
                s = (s * 2.0).round() / 2.0;
            }
            let label = match i {
                0 => true,
                1 => false,
                _ => rng.gen::<bool>(),
            };
            raw.push((s, label));
        }
        let scores: Vec<LabeledScore> = raw
            .iter()
            .map(|&(s, p)| LabeledScore::new(s, p))
            .collect();
        assert_eq!(
            auc_pr(&scores).unwrap(),
            oracle_auc_pr(&raw),
            "auc_pr differs in round {round}"
        );
        assert_eq!(
            auc_roc(&scores).unwrap(),
            oracle_auc_roc(&raw),
            "auc_roc differs in round {round}"
        );

        let pos: f64 = rng.gen_range(-2.0..2.0);
        let negs: Vec<f64> = (0..rng.gen_range(1..50))
            .map(|_| {
                let v: f64 = rng.gen_range(-2.0..2.0);
                if quantize {
                    (v * 2.0).round() / 2.0
                } else {
                    v
                }
            })
            .collect();
        let k = rng.gen_range(1..=12);
        assert_eq!(
            hits_at_k(pos, &negs, k),
            oracle_hits_at_k(pos, &negs, k),
            "hits differs in round {round}"
        );
    }
}

/// Trains on the asymmetry benchmark with standard uniform-replacement
/// negatives and returns the exchange-protocol AUC-ROC on held-out pairs.
pub fn asymmetry_exchange_auc(undirected: bool, seed: u64) -> f64 {
    use relpred_core::eval::{run_protocol, CorruptionSide, EvalOptions, ModelScorer, Protocol};
    use relpred_core::model::{Ablation, ModelConfig};
    use relpred_core::trainer::{fit, NegativePolicy, TrainConfig};

    let data = asymmetry_dataset(60, 3, 7, 1000 + seed);
    let mc = ModelConfig {
        hop: 2,
        iters: 2,
        dim: 12,
        score_hidden: 8,
        edge_dropout: 0.1,
        ablation: Ablation {
            undirected,
            ..Ablation::default()
        },
        ..ModelConfig::default()
    };
    let tc = TrainConfig {
        lr: 0.01,
        epochs: 10,
        batch_size: 8,
        seed,
        negative_policy: NegativePolicy::ReplaceUniform,
        max_nodes: 60,
        patience: 100,
        ..TrainConfig::default()
    };
    let mut log = Vec::new();
    let outcome = fit(
        &data.graph,
        &data.train_queries,
        &[],
        &mc,
        &tc,
        None,
        &mut log,
    )
    .unwrap();
    let report = run_protocol(
        &data.graph,
        &data.test_queries,
        &ModelScorer {
            params: &outcome.params,
            max_nodes: 60,
        },
        Protocol::ExchangeHeadTail,
        &EvalOptions {
            require_subgraph: false,
            corruption: CorruptionSide::Mixed,
            seed: 7,
            hop: 2,
            max_nodes: 60,
        },
    )
    .unwrap();
    report.auc_roc.expect("exchange protocol has both classes")
}

pub fn median3(mut v: [f64; 3]) -> f64 {
    v.sort_by(f64::total_cmp);
    v[1]
}
