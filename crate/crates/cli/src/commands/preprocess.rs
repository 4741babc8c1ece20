//! Dataset post-processing: keep only queries with non-empty undirected
//! subgraphs and materialize non-empty negatives for them.

use std::io::Write;
use std::path::Path;

use anyhow::{Context, Result};
use relpred_core::datatools::{
    dataset_stats, filter_nonempty, materialize_negatives, write_negative_files,
};
use relpred_core::graph::{Graph, Triplet};

use crate::PreprocessArgs;

pub fn run(args: PreprocessArgs) -> Result<()> {
    let dataset = super::load_dataset(&args.data, false)?;
    std::fs::create_dir_all(&args.out)
        .with_context(|| format!("cannot create {}", args.out.display()))?;

    // The graph file is the dataset itself; it passes through unchanged.
    std::fs::copy(args.data.join("train.txt"), args.out.join("train.txt"))
        .context("copying train.txt")?;

    if dataset.skipped_unknown > 0 {
        println!(
            "preprocess: dropped {} query lines naming entities outside the graph",
            dataset.skipped_unknown
        );
    }

    for (name, queries) in [("valid", &dataset.valid), ("test", &dataset.test)] {
        if queries.is_empty() {
            continue;
        }
        let filtered = filter_nonempty(&dataset.graph, queries, args.hop, args.max_nodes)
            .context("filtering queries")?;
        write_triplets(
            &dataset.graph,
            &filtered.kept,
            &args.out.join(format!("{name}.txt")),
        )?;
        let negatives = materialize_negatives(
            &dataset.graph,
            &filtered.kept,
            args.neg,
            args.hop,
            args.max_nodes,
            args.seed,
        );
        write_negative_files(
            &dataset.graph,
            &negatives,
            &args.out.join(format!("{name}_neg.txt")),
            &args.out.join(format!("{name}_neg.idx")),
        )
        .context("writing negatives")?;
        println!(
            "preprocess {name}: kept {} of {} queries, dropped {}, negatives {}, shortfalls {}",
            filtered.kept.len(),
            queries.len(),
            filtered.dropped,
            negatives
                .groups
                .iter()
                .map(|g| g.negatives.len())
                .sum::<usize>(),
            negatives.shortfalls.len()
        );
        for (idx, got) in &negatives.shortfalls {
            println!(
                "preprocess {name}: positive {idx} only produced {got} of {} negatives",
                args.neg
            );
        }
    }

    let all_queries: Vec<Triplet> = dataset
        .valid
        .iter()
        .chain(dataset.test.iter())
        .copied()
        .collect();
    let stats = dataset_stats(&dataset.graph, &all_queries, args.hop, args.max_nodes)
        .context("computing statistics")?;
    let mut stats_file =
        std::fs::File::create(args.out.join("stats.txt")).context("writing stats.txt")?;
    writeln!(stats_file, "hop={}", args.hop)?;
    writeln!(stats_file, "seed={}", args.seed)?;
    writeln!(stats_file, "neg={}", args.neg)?;
    writeln!(stats_file, "max_nodes={}", args.max_nodes)?;
    stats.write(&mut stats_file)?;
    println!(
        "preprocess: wrote {} (entities={}, relations={}, graph_triplets={})",
        args.out.display(),
        stats.entities,
        stats.relations,
        stats.graph_triplets
    );
    Ok(())
}

fn write_triplets(g: &Graph, triplets: &[Triplet], path: &Path) -> Result<()> {
    let mut out = std::fs::File::create(path)
        .with_context(|| format!("cannot create {}", path.display()))?;
    for t in triplets {
        writeln!(
            out,
            "{}\t{}\t{}",
            g.entity_vocab().name(t.head).unwrap_or("?"),
            g.relation_vocab().name(t.relation).unwrap_or("?"),
            g.entity_vocab().name(t.tail).unwrap_or("?"),
        )?;
    }
    Ok(())
}
