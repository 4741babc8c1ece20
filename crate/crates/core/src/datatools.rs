//! Dataset post-processing: empty-subgraph filtering, materialized
//! non-empty negatives, and dataset statistics.

use std::io::Write;
use std::path::Path;

use rand::rngs::StdRng;
use rand::{Rng, SeedableRng};
use rayon::prelude::*;
use thiserror::Error;

use crate::graph::{Graph, Triplet};
use crate::subgraph::{
    extract_directed, extract_undirected, ExtractError,
};
use crate::trainer::{sample_negative, NegativeMode, SampleError};

#[derive(Debug, Error)]
pub enum DataError {
    #[error(transparent)]
    Extract(#[from] ExtractError),
    #[error("io error: {0}")]
    Io(#[from] std::io::Error),
}

/// Result of [`filter_nonempty`].
#[derive(Debug, Clone)]
pub struct Filtered {
    pub kept: Vec<Triplet>,
    pub dropped: usize,
}

/// Keeps exactly the triplets whose undirected enclosing subgraph has at
/// least one edge after target-edge exclusion. Degenerate candidates
/// (head == tail) count as dropped.
pub fn filter_nonempty(
    g: &Graph,
    triplets: &[Triplet],
    h: usize,
    max_nodes: usize,
) -> Result<Filtered, DataError> {
    let checks: Vec<bool> = triplets
        .par_iter()
        .map(|&t| {
            t.head != t.tail
                && matches!(extract_undirected(g, t, h, max_nodes), Ok(Some(_)))
        })
        .collect();
    let kept: Vec<Triplet> = triplets
        .iter()
        .zip(&checks)
        .filter(|(_, &keep)| keep)
        .map(|(&t, _)| t)
        .collect();
    let dropped = triplets.len() - kept.len();
    Ok(Filtered { kept, dropped })
}

/// A positive's materialized negatives. `obtained < requested` is a
/// shortfall (reported, not fatal).
#[derive(Debug, Clone)]
pub struct NegativeGroup {
    pub positive_index: usize,
    pub negatives: Vec<Triplet>,
}

#[derive(Debug, Clone, Default)]
pub struct NegativeReport {
    pub groups: Vec<NegativeGroup>,
    /// (positive index, negatives obtained) for positives that fell short.
    pub shortfalls: Vec<(usize, usize)>,
}

/// Draws `n_per_pos` negatives per positive, each absent from the graph and
/// each with a non-empty undirected enclosing subgraph. Deterministic for a
/// fixed seed. Call after [`filter_nonempty`].
pub fn materialize_negatives(
    g: &Graph,
    positives: &[Triplet],
    n_per_pos: usize,
    h: usize,
    max_nodes: usize,
    seed: u64,
) -> NegativeReport {
    let mut rng = StdRng::seed_from_u64(seed);
    let mut report = NegativeReport::default();
    for (idx, &pos) in positives.iter().enumerate() {
        let mut negatives = Vec::with_capacity(n_per_pos);
        for _ in 0..n_per_pos {
            let mode = if rng.gen::<bool>() {
                NegativeMode::ReplaceHead
            } else {
                NegativeMode::ReplaceTail
            };
            match sample_negative(g, pos, mode, true, h, max_nodes, &mut rng) {
                Ok(neg) => negatives.push(neg),
                Err(SampleError::Exhausted { .. }) | Err(SampleError::NoValidCorruption) => {}
            }
        }
        if negatives.len() < n_per_pos {
            report.shortfalls.push((idx, negatives.len()));
        }
        report.groups.push(NegativeGroup {
            positive_index: idx,
            negatives,
        });
    }
    report
}

/// Writes negatives in the triplet TSV format, groups of consecutive lines
/// per positive, plus a sidecar index mapping line groups to positives:
/// `group<TAB>positive_index<TAB>count` per group.
pub fn write_negative_files(
    g: &Graph,
    report: &NegativeReport,
    negatives_path: &Path,
    index_path: &Path,
) -> Result<(), DataError> {
    let mut neg_out = std::fs::File::create(negatives_path)?;
    let mut idx_out = std::fs::File::create(index_path)?;
    for (group_no, group) in report.groups.iter().enumerate() {
        for neg in &group.negatives {
            writeln!(
                neg_out,
                "{}\t{}\t{}",
                g.entity_vocab().name(neg.head).unwrap_or("?"),
                g.relation_vocab().name(neg.relation).unwrap_or("?"),
                g.entity_vocab().name(neg.tail).unwrap_or("?"),
            )?;
        }
        writeln!(
            idx_out,
            "{group_no}\t{}\t{}",
            group.positive_index,
            group.negatives.len()
        )?;
    }
    Ok(())
}

/// Counting report over a triplet set at hop `h`.
#[derive(Debug, Clone, PartialEq)]
pub struct DatasetStats {
    pub entities: usize,
    pub relations: usize,
    pub graph_triplets: usize,
    pub query_triplets: usize,
    pub empty_subgraphs: usize,
    pub directed_subgraphs: usize,
}

impl DatasetStats {
    pub fn empty_rate(&self) -> f64 {
        if self.query_triplets == 0 {
            0.0
        } else {
            self.empty_subgraphs as f64 / self.query_triplets as f64
        }
    }

    pub fn directed_rate(&self) -> f64 {
        if self.query_triplets == 0 {
            0.0
        } else {
            self.directed_subgraphs as f64 / self.query_triplets as f64
        }
    }

    pub fn write(&self, w: &mut dyn Write) -> std::io::Result<()> {
        writeln!(w, "entities={}", self.entities)?;
        writeln!(w, "relations={}", self.relations)?;
        writeln!(w, "graph_triplets={}", self.graph_triplets)?;
        writeln!(w, "query_triplets={}", self.query_triplets)?;
        writeln!(w, "empty_subgraphs={}", self.empty_subgraphs)?;
        writeln!(w, "empty_rate={:.6}", self.empty_rate())?;
        writeln!(w, "directed_subgraphs={}", self.directed_subgraphs)?;
        writeln!(w, "directed_rate={:.6}", self.directed_rate())
    }
}

/// Counts entities, relations, triplets, the empty-undirected-subgraph rate
/// and the directed-subgraph existence rate for the given queries.
pub fn dataset_stats(
    g: &Graph,
    queries: &[Triplet],
    h: usize,
    max_nodes: usize,
) -> Result<DatasetStats, DataError> {
    let flags: Vec<(bool, bool)> = queries
        .par_iter()
        .map(|&t| {
            if t.head == t.tail {
                return (true, false);
            }
            let empty = !matches!(extract_undirected(g, t, h, max_nodes), Ok(Some(_)));
            let directed = matches!(extract_directed(g, t, h, max_nodes), Ok(Some(_)));
            (empty, directed)
        })
        .collect();
    Ok(DatasetStats {
        entities: g.num_entities(),
        relations: g.num_relations(),
        graph_triplets: g.num_triplets(),
        query_triplets: queries.len(),
        empty_subgraphs: flags.iter().filter(|(e, _)| *e).count(),
        directed_subgraphs: flags.iter().filter(|(_, d)| *d).count(),
    })
}
