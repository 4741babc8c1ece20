//! Checkpoint evaluation under the ranking protocols.

use std::io::Write;
use std::path::Path;

use anyhow::{bail, Context, Result};
use relpred_core::eval::{
    run_protocol, CorruptionSide, EvalOptions, EvalReport, ModelScorer, Protocol,
};
use relpred_core::model::ModelParams;

use crate::EvalArgs;

pub fn run(args: EvalArgs) -> Result<()> {
    let protocol = match args.protocol.as_str() {
        "auc-one-negative" => Protocol::AucOneNegative,
        "hits-k" => Protocol::HitsAtK {
            num_negatives: args.neg,
            k: args.hits_k,
        },
        "exchange-ht" => Protocol::ExchangeHeadTail,
        other => bail!(
            "config error: unknown protocol {other:?} \
             (expected auc-one-negative, hits-k or exchange-ht)"
        ),
    };
    let corruption = match args.corrupt.as_deref() {
        None => CorruptionSide::Mixed,
        Some("head") => CorruptionSide::HeadOnly,
        Some("tail") => CorruptionSide::TailOnly,
        Some(other) => bail!("config error: --corrupt expects head or tail, got {other:?}"),
    };

    // Load all checkpoints first: the dataset is indexed against their
    // relation vocabulary so table rows and graph relation ids agree.
    let mut checkpoints = Vec::new();
    for ckpt_path in &args.checkpoint {
        let loaded = ModelParams::load(ckpt_path)
            .map_err(|e| anyhow::anyhow!("checkpoint error: {}: {e}", ckpt_path.display()))?;
        checkpoints.push((ckpt_path, loaded));
    }
    let relation_names = checkpoints[0].1 .1.clone();
    for (path, (_, names)) in &checkpoints {
        if names != &relation_names {
            bail!(
                "checkpoint error: {} was trained with a different relation vocabulary",
                path.display()
            );
        }
    }
    let dataset = super::load_dataset_with_relations(
        &args.data,
        args.merge_valid,
        Some(relpred_core::Vocab::from_names(relation_names)),
    )?;
    if dataset.test.is_empty() {
        bail!("data error: {} has no test.txt queries", args.data.display());
    }
    if dataset.skipped_unknown > 0 {
        println!(
            "eval: skipped {} query lines naming entities outside the graph",
            dataset.skipped_unknown
        );
    }
    let out_dir = args.out.clone().unwrap_or_else(|| args.data.clone());
    std::fs::create_dir_all(&out_dir)
        .with_context(|| format!("cannot create {}", out_dir.display()))?;

    let mut summaries: Vec<(String, EvalReport)> = Vec::new();
    for (ckpt_path, (params, _)) in &checkpoints {
        let max_nodes = args.max_nodes.unwrap_or(relpred_core::DEFAULT_MAX_NODES);
        let report = run_protocol(
            &dataset.graph,
            &dataset.test,
            &ModelScorer { params, max_nodes },
            protocol,
            &EvalOptions {
                require_subgraph: args.require_subgraph,
                corruption,
                seed: args.seed,
                hop: params.config.hop,
                max_nodes,
            },
        )
        .map_err(|e| anyhow::anyhow!("eval error: {e}"))?;

        let stem = ckpt_path
            .file_stem()
            .map(|s| s.to_string_lossy().into_owned())
            .unwrap_or_else(|| "checkpoint".into());
        write_report(&out_dir, &stem, &args, params, &report, &dataset.graph)?;
        print_line(&stem, &report);
        summaries.push((stem, report));
    }

    if summaries.len() > 1 {
        let mean = |f: &dyn Fn(&EvalReport) -> Option<f64>| -> Option<f64> {
            let values: Vec<f64> = summaries.iter().filter_map(|(_, r)| f(r)).collect();
            (values.len() == summaries.len())
                .then(|| values.iter().sum::<f64>() / values.len() as f64)
        };
        let mean_pr = mean(&|r| r.auc_pr);
        let mean_roc = mean(&|r| r.auc_roc);
        let mean_hits = mean(&|r| r.hits_at_k.map(|(_, v)| v));
        let mut line = format!("eval mean over {} checkpoints:", summaries.len());
        if let Some(v) = mean_pr {
            line += &format!(" auc_pr={v:.6}");
        }
        if let Some(v) = mean_roc {
            line += &format!(" auc_roc={v:.6}");
        }
        if let Some(v) = mean_hits {
            line += &format!(" hits={v:.6}");
        }
        println!("{line}");
        let mut mean_file = std::fs::File::create(out_dir.join("eval_mean.txt"))?;
        writeln!(mean_file, "{line}")?;
    }
    Ok(())
}

fn print_line(stem: &str, report: &EvalReport) {
    let mut line = format!(
        "eval {stem} protocol={} positives={} negatives={}",
        report.protocol, report.counts.positives, report.counts.negatives
    );
    if let Some(v) = report.auc_pr {
        line += &format!(" auc_pr={v:.6}");
    }
    if let Some(v) = report.auc_roc {
        line += &format!(" auc_roc={v:.6}");
    }
    if let Some((k, v)) = report.hits_at_k {
        line += &format!(" hits_at_{k}={v:.6}");
    }
    line += &format!(
        " empty_pos={} empty_neg={} fallback_pos={} fallback_neg={}",
        report.counts.empty_positives,
        report.counts.empty_negatives,
        report.counts.fallback_positives,
        report.counts.fallback_negatives
    );
    println!("{line}");
}

fn write_report(
    out_dir: &Path,
    stem: &str,
    args: &EvalArgs,
    params: &ModelParams,
    report: &EvalReport,
    graph: &relpred_core::Graph,
) -> Result<()> {
    let report_path = out_dir.join(format!("{stem}.report.txt"));
    let mut out = std::fs::File::create(&report_path)
        .with_context(|| format!("cannot create {}", report_path.display()))?;
    // echo the run configuration so reports are reproducible on their own
    writeln!(out, "config checkpoint={stem}")?;
    writeln!(out, "config data={}", args.data.display())?;
    writeln!(out, "config seed={}", args.seed)?;
    writeln!(out, "config require_subgraph={}", args.require_subgraph)?;
    writeln!(out, "config merge_valid={}", args.merge_valid)?;
    writeln!(out, "config hop={}", params.config.hop)?;
    writeln!(out, "config iters={}", params.config.iters)?;
    writeln!(out, "config dim={}", params.config.dim)?;
    writeln!(out, "config undirected={}", params.config.ablation.undirected)?;
    report.write_summary(&mut out)?;

    let tsv_path = out_dir.join(format!("{stem}.scores.tsv"));
    let mut tsv = std::fs::File::create(&tsv_path)
        .with_context(|| format!("cannot create {}", tsv_path.display()))?;
    report.write_tsv(graph, &mut tsv)?;
    Ok(())
}
