pub mod eval;
pub mod preprocess;
pub mod score;
pub mod stats;
pub mod train;

use std::path::{Path, PathBuf};

use anyhow::{Context, Result};
use relpred_core::graph::{resolve_triplets, Graph, Triplet, Vocab, VocabMode};

/// A dataset directory: train.txt is the graph, valid.txt/test.txt hold
/// queries against it.
pub struct Dataset {
    pub graph: Graph,
    pub valid: Vec<Triplet>,
    pub test: Vec<Triplet>,
    pub skipped_unknown: usize,
}

/// Loads a dataset directory. With `merge_valid` the validation triplets are
/// added to the extraction graph, mirroring the convention switch for final
/// testing.
pub fn load_dataset(dir: &Path, merge_valid: bool) -> Result<Dataset> {
    load_dataset_with_relations(dir, merge_valid, None)
}

/// Like [`load_dataset`], but when a relation vocabulary is given (from a
/// checkpoint) the graph is indexed against it, so relation ids line up with
/// the model's relation table no matter the file's ordering. Entities are
/// always assigned fresh; relations must all be known.
pub fn load_dataset_with_relations(
    dir: &Path,
    merge_valid: bool,
    relations: Option<Vocab>,
) -> Result<Dataset> {
    let train_path = dir.join("train.txt");
    let mode = match relations {
        Some(relations) => VocabMode::Reuse {
            entities: Vocab::new(),
            relations,
        },
        None => VocabMode::Build,
    };
    let mut lines = relpred_core::graph::read_triplet_lines(&train_path)
        .with_context(|| format!("data error: {}", train_path.display()))?;
    if merge_valid && dir.join("valid.txt").exists() {
        lines.extend(
            relpred_core::graph::read_triplet_lines(&dir.join("valid.txt"))
                .with_context(|| format!("data error: {}", dir.join("valid.txt").display()))?,
        );
    }
    let graph = Graph::from_string_triples(lines, mode)
        .with_context(|| format!("data error: {}", train_path.display()))?;

    let mut skipped = 0usize;
    let mut load_queries = |name: &str| -> Result<Vec<Triplet>> {
        let path = dir.join(name);
        if !path.exists() {
            return Ok(Vec::new());
        }
        let resolved = resolve_triplets(&path, &graph)
            .with_context(|| format!("data error: {}", path.display()))?;
        skipped += resolved.skipped_unknown_entity;
        Ok(resolved.triplets)
    };
    let valid = load_queries("valid.txt")?;
    let test = load_queries("test.txt")?;
    Ok(Dataset {
        graph,
        valid,
        test,
        skipped_unknown: skipped,
    })
}

/// Accepts either a triplet file or a dataset directory containing
/// train.txt.
pub fn graph_file(path: &Path) -> PathBuf {
    if path.is_dir() {
        path.join("train.txt")
    } else {
        path.to_path_buf()
    }
}
