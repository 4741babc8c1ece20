//! Single-triplet scoring with a subgraph summary.

use anyhow::{bail, Context, Result};
use relpred_core::graph::{load_graph, Triplet, Vocab, VocabMode};
use relpred_core::model::{score_subgraph, ModelParams, EMPTY_SUBGRAPH_SCORE};
use relpred_core::subgraph::{extract_undirected, extract_with_fallback, ExtractOutcome};

use crate::ScoreArgs;

pub fn run(args: ScoreArgs) -> Result<()> {
    let (params, relations) = ModelParams::load(&args.checkpoint)
        .map_err(|e| anyhow::anyhow!("checkpoint error: {e}"))?;
    let graph_path = super::graph_file(&args.graph);
    // index the graph against the checkpoint's relation vocabulary so edge
    // relation ids select the right table rows
    let graph = load_graph(
        &graph_path,
        VocabMode::Reuse {
            entities: Vocab::new(),
            relations: Vocab::from_names(relations),
        },
    )
    .with_context(|| format!("data error: {}", graph_path.display()))?;

    let fields: Vec<&str> = if args.triplet.contains('\t') {
        args.triplet.split('\t').collect()
    } else {
        args.triplet.split_whitespace().collect()
    };
    let [head, relation, tail] = fields.as_slice() else {
        bail!("config error: --triplet expects head<TAB>relation<TAB>tail, got {:?}", args.triplet);
    };

    let Some(relation) = graph.relation_vocab().id(relation) else {
        bail!("data error: unknown relation {relation:?}");
    };
    let (Some(h), Some(t)) = (
        graph.entity_vocab().id(head),
        graph.entity_vocab().id(tail),
    ) else {
        // an entity outside the graph cannot have an enclosing subgraph
        println!("NOSUBGRAPH entity outside the graph; sentinel score {EMPTY_SUBGRAPH_SCORE}");
        return Ok(());
    };
    let candidate = Triplet::new(h, relation, t);
    if h == t {
        bail!("config error: degenerate candidate (head equals tail)");
    }

    let max_nodes = args.max_nodes.unwrap_or(relpred_core::DEFAULT_MAX_NODES);
    let outcome = if params.config.ablation.undirected {
        match extract_undirected(&graph, candidate, params.config.hop, max_nodes)
            .map_err(|e| anyhow::anyhow!("extraction error: {e}"))?
        {
            Some(sub) => ExtractOutcome::Fallback(sub),
            None => ExtractOutcome::Empty,
        }
    } else {
        extract_with_fallback(&graph, candidate, params.config.hop, max_nodes)
            .map_err(|e| anyhow::anyhow!("extraction error: {e}"))?
    };

    match outcome.subgraph() {
        None => {
            // empty subgraphs rank last by policy
            println!(
                "NOSUBGRAPH no enclosing subgraph at hop {}; sentinel score {EMPTY_SUBGRAPH_SCORE}",
                params.config.hop
            );
        }
        Some(sub) => {
            let score =
                score_subgraph(sub, &params).map_err(|e| anyhow::anyhow!("model error: {e}"))?;
            let route = if sub.directed {
                "directed"
            } else {
                "undirected-fallback"
            };
            println!("score={score:.6}");
            println!(
                "subgraph route={route} nodes={} edges={} head_distance_to_tail={}",
                sub.num_nodes(),
                sub.num_edges(),
                sub.node_labels[sub.head_local()].1
            );
        }
    }
    Ok(())
}
