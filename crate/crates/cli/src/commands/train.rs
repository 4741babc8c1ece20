//! Training runs: one fit per seed, checkpoints and logs per run.

use anyhow::{bail, Context, Result};
use relpred_core::cache::SubgraphCache;
use relpred_core::trainer::fit;

use crate::config::RunSettings;
use crate::TrainArgs;

pub fn run(args: TrainArgs) -> Result<()> {
    let mut settings = RunSettings::from_file(&args.config)?;
    apply_overrides(&mut settings, &args)?;
    settings
        .model
        .validate()
        .map_err(|e| anyhow::anyhow!("config error: {e}"))?;
    settings
        .train
        .validate()
        .map_err(|e| anyhow::anyhow!("config error: {e}"))?;

    let Some(data) = settings.data.clone() else {
        bail!("config error: no dataset directory (set data= in the config or pass --data)");
    };
    let Some(out) = settings.out.clone() else {
        bail!("config error: no output directory (set out= in the config or pass --out)");
    };
    std::fs::create_dir_all(&out).with_context(|| format!("cannot create {}", out.display()))?;

    let dataset = super::load_dataset(&data, false)?;
    let positives = dataset.graph.triplets().to_vec();
    let cache = match &settings.cache {
        Some(path) => Some(
            SubgraphCache::load(path, settings.model.hop, settings.train.max_nodes)
                .with_context(|| format!("cache error: {}", path.display()))?,
        ),
        None => None,
    };

    // Several runs average over seeds 1..=runs; a single run uses the
    // configured seed.
    let seeds: Vec<u64> = if settings.train.runs > 1 {
        (1..=settings.train.runs as u64).collect()
    } else {
        vec![settings.train.seed]
    };

    for &seed in &seeds {
        let mut tc = settings.train;
        tc.seed = seed;
        let log_path = out.join(format!("train_seed{seed}.log"));
        let mut log = std::fs::File::create(&log_path)
            .with_context(|| format!("cannot create {}", log_path.display()))?;
        let outcome = fit(
            &dataset.graph,
            &positives,
            &dataset.valid,
            &settings.model,
            &tc,
            cache.as_ref(),
            &mut log,
        )
        .with_context(|| format!("training seed {seed}"))?;

        let ckpt_path = out.join(format!("checkpoint_seed{seed}.ckpt"));
        outcome
            .params
            .save(&ckpt_path, dataset.graph.relation_vocab().names())
            .map_err(|e| anyhow::anyhow!("checkpoint error: {e}"))?;
        println!(
            "train seed={seed} epochs={} best_epoch={} best_valid_auc_pr={} trained={} \
             empty_skipped={} fallback={} -> {}",
            outcome.epochs_run,
            outcome.best_epoch,
            outcome
                .best_valid_auc_pr
                .map_or("none".into(), |v| format!("{v:.6}")),
            outcome.counts.trained_positives,
            outcome.counts.skipped_empty_positives,
            outcome.counts.fallback_positives,
            ckpt_path.display()
        );
    }
    Ok(())
}

fn apply_overrides(settings: &mut RunSettings, args: &TrainArgs) -> Result<()> {
    if let Some(v) = &args.data {
        settings.data = Some(v.clone());
    }
    if let Some(v) = &args.out {
        settings.out = Some(v.clone());
    }
    if let Some(v) = args.hop {
        settings.model.hop = v;
    }
    if let Some(v) = args.iters {
        settings.model.iters = v;
    }
    if let Some(v) = args.dim {
        settings.model.dim = v;
    }
    if let Some(v) = args.score_hidden {
        settings.model.score_hidden = v;
    }
    if let Some(v) = args.edge_dropout {
        settings.model.edge_dropout = v;
    }
    if let Some(v) = args.lr {
        settings.train.lr = v;
    }
    if let Some(v) = args.epochs {
        settings.train.epochs = v;
    }
    if let Some(v) = args.batch {
        settings.train.batch_size = v;
    }
    if let Some(v) = args.margin {
        settings.train.margin = v;
    }
    if let Some(v) = args.neg {
        settings.train.negatives_per_positive = v;
    }
    if let Some(v) = args.seed {
        settings.train.seed = v;
    }
    if let Some(v) = args.patience {
        settings.train.patience = v;
    }
    if let Some(v) = args.runs {
        settings.train.runs = v;
    }
    if let Some(v) = args.max_nodes {
        settings.train.max_nodes = v;
    }
    if args.require_subgraph {
        settings.train.require_subgraph_negatives = true;
    }
    if args.undirected {
        settings.model.ablation.undirected = true;
    }
    if args.no_attention {
        settings.model.ablation.no_attention = true;
    }
    if args.grail_attention {
        settings.model.ablation.grail_attention = true;
    }
    if args.no_edge_update {
        settings.model.ablation.no_edge_update = true;
    }
    if args.timestamps {
        settings.train.log_timestamps = true;
    }
    if let Some(v) = &args.cache {
        settings.cache = Some(v.clone());
    }
    Ok(())
}
