//! Training: negative sampling, margin ranking loss, and the epoch loop
//! with validation-based early stopping.

use std::io::Write;

use rand::rngs::StdRng;
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rayon::prelude::*;
use thiserror::Error;

use crate::autodiff::{AdamState, Matrix, Tape, TensorError, Var};
use crate::cache::SubgraphCache;
use crate::eval::{
    run_protocol, CorruptionSide, EvalError, EvalOptions, ModelScorer, Protocol,
};
use crate::graph::{Graph, Triplet};
use crate::model::{
    forward, ModelConfig, ModelError, ModelParams, Phase, EMPTY_SUBGRAPH_SCORE,
};
use crate::subgraph::{
    extract_undirected, extract_with_fallback, ExtractError, ExtractOutcome,
};

/// Bounded retries for corruption draws.
pub const NEGATIVE_RETRY_BUDGET: usize = 200;

#[derive(Debug, Error)]
pub enum TrainError {
    #[error("config error: {0}")]
    Config(String),
    #[error("configuration error: no training positive has a non-empty subgraph")]
    NoTrainableSubgraphs,
    #[error("sampling error: {0}")]
    Sampling(String),
    #[error(transparent)]
    Model(#[from] ModelError),
    #[error(transparent)]
    Tensor(#[from] TensorError),
    #[error(transparent)]
    Extract(#[from] ExtractError),
    #[error(transparent)]
    Eval(#[from] EvalError),
    #[error("io error: {0}")]
    Io(#[from] std::io::Error),
}

/// How a corrupted triplet is derived from a positive.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum NegativeMode {
    ReplaceHead,
    ReplaceTail,
    ExchangeHeadTail,
}

#[derive(Debug, Error)]
pub enum SampleError {
    /// The non-empty-subgraph requirement could not be met within the
    /// budget; `fallback` is an unconstrained but otherwise valid negative.
    #[error("retry budget exhausted while sampling a non-empty negative")]
    Exhausted { fallback: Triplet },
    /// Not even an unconstrained corruption could be found.
    #[error("no valid corruption found within the retry budget")]
    NoValidCorruption,
}

/// Draws one corrupted triplet: absent from the graph, non-degenerate, and
/// different from the positive. Replace modes draw the substitute entity
/// uniformly; with `require_subgraph` the draw is repeated until the
/// corrupted pair has a non-empty undirected enclosing subgraph. Exchange
/// mode is deterministic.
pub fn sample_negative(
    g: &Graph,
    pos: Triplet,
    mode: NegativeMode,
    require_subgraph: bool,
    hop: usize,
    max_nodes: usize,
    rng: &mut StdRng,
) -> Result<Triplet, SampleError> {
    if mode == NegativeMode::ExchangeHeadTail {
        return Ok(pos.exchanged());
    }
    let mut fallback = None;
    for _ in 0..NEGATIVE_RETRY_BUDGET {
        let substitute = rng.gen_range(0..g.num_entities());
        let candidate = match mode {
            NegativeMode::ReplaceHead => Triplet::new(substitute, pos.relation, pos.tail),
            NegativeMode::ReplaceTail => Triplet::new(pos.head, pos.relation, substitute),
            NegativeMode::ExchangeHeadTail => unreachable!(),
        };
        if candidate == pos || candidate.head == candidate.tail || g.contains(candidate) {
            continue;
        }
        if !require_subgraph {
            return Ok(candidate);
        }
        if fallback.is_none() {
            fallback = Some(candidate);
        }
        if matches!(
            extract_undirected(g, candidate, hop, max_nodes),
            Ok(Some(_))
        ) {
            return Ok(candidate);
        }
    }
    match fallback {
        Some(fallback) => Err(SampleError::Exhausted { fallback }),
        None => Err(SampleError::NoValidCorruption),
    }
}

/// Mean over negatives of `max(0, margin - pos + neg)`, built on-tape.
pub fn margin_loss(
    tape: &mut Tape,
    pos: Var,
    negs: &[Var],
    margin: f64,
) -> Result<Var, TensorError> {
    if negs.is_empty() {
        return Err(TensorError::Shape("margin_loss: no negatives".into()));
    }
    let mut sum = None;
    for &neg in negs {
        let diff = tape.sub(neg, pos)?;
        let shifted = tape.add_scalar(diff, margin)?;
        let hinge = tape.relu(shifted)?;
        sum = Some(match sum {
            None => hinge,
            Some(s) => tape.add(s, hinge)?,
        });
    }
    tape.scale(sum.expect("at least one negative"), 1.0 / negs.len() as f64)
}

/// Negative sampling policy during training.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum NegativePolicy {
    /// Uniform head-or-tail replacement (the published convention).
    #[default]
    ReplaceUniform,
    /// Head-tail exchange, for asymmetry-focused experiments.
    ExchangeHeadTail,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TrainConfig {
    pub lr: f64,
    pub epochs: usize,
    pub batch_size: usize,
    pub margin: f64,
    pub negatives_per_positive: usize,
    pub seed: u64,
    /// Epochs without validation improvement before stopping.
    pub patience: usize,
    /// Seeds {1..runs} trained and averaged by the command-line driver.
    pub runs: usize,
    /// Re-draw training negatives until their undirected subgraph is
    /// non-empty.
    pub require_subgraph_negatives: bool,
    pub negative_policy: NegativePolicy,
    pub max_nodes: usize,
    pub grad_clip: f64,
    /// Append wall-clock timestamps to log records. Off by default so runs
    /// with the same seed produce byte-identical logs.
    pub log_timestamps: bool,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            lr: 0.001,
            epochs: 50,
            batch_size: 16,
            margin: 10.0,
            negatives_per_positive: 1,
            seed: 1,
            patience: 10,
            runs: 4,
            require_subgraph_negatives: true,
            negative_policy: NegativePolicy::default(),
            max_nodes: crate::subgraph::DEFAULT_MAX_NODES,
            grad_clip: 10.0,
            log_timestamps: false,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<(), TrainError> {
        if !self.lr.is_finite() || self.lr <= 0.0 {
            return Err(TrainError::Config("lr must be positive".into()));
        }
        if !self.margin.is_finite() || self.margin <= 0.0 {
            return Err(TrainError::Config("margin must be positive".into()));
        }
        if self.batch_size < 1 || self.epochs < 1 || self.negatives_per_positive < 1 {
            return Err(TrainError::Config(
                "epochs, batch_size and negatives_per_positive must be at least 1".into(),
            ));
        }
        if self.runs < 1 {
            return Err(TrainError::Config("runs must be at least 1".into()));
        }
        Ok(())
    }
}

/// Per-fit diagnostic counters.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct TrainCounts {
    pub trained_positives: usize,
    pub skipped_empty_positives: usize,
    pub skipped_degenerate_positives: usize,
    pub fallback_positives: usize,
    pub empty_negatives: usize,
    pub sampling_shortfalls: usize,
}

#[derive(Debug)]
pub struct FitOutcome {
    pub params: ModelParams,
    pub epochs_run: usize,
    pub best_epoch: usize,
    pub best_valid_auc_pr: Option<f64>,
    pub counts: TrainCounts,
}

/// Seed for the validation protocol of a given epoch, derived so reruns are
/// reproducible and reloadable checkpoints can be re-validated exactly.
pub fn valid_eval_seed(seed: u64, epoch: usize) -> u64 {
    (seed ^ 0x9e37_79b9_7f4a_7c15).wrapping_mul(0x2545_f491_4f6c_dd1d) ^ (epoch as u64)
}

fn log_line(
    w: &mut dyn Write,
    timestamps: bool,
    body: std::fmt::Arguments<'_>,
) -> std::io::Result<()> {
    if timestamps {
        let ts = std::time::SystemTime::now()
            .duration_since(std::time::UNIX_EPOCH)
            .map(|d| d.as_millis())
            .unwrap_or(0);
        writeln!(w, "{body} ts={ts}")
    } else {
        writeln!(w, "{body}")
    }
}

fn extract_for_candidate(
    g: &Graph,
    t: Triplet,
    mc: &ModelConfig,
    max_nodes: usize,
    cache: Option<&SubgraphCache>,
) -> Result<ExtractOutcome, ExtractError> {
    if mc.ablation.undirected {
        let sub = match cache {
            Some(c) => c.undirected(g, t)?,
            None => extract_undirected(g, t, mc.hop, max_nodes)?,
        };
        return Ok(match sub {
            Some(s) => ExtractOutcome::Fallback(s),
            None => ExtractOutcome::Empty,
        });
    }
    match cache {
        Some(c) => c.with_fallback(g, t),
        None => extract_with_fallback(g, t, mc.hop, max_nodes),
    }
}

/// Trains on the given positives over the graph. Per epoch: shuffle
/// positives (seeded), extract subgraphs (directed with undirected
/// fallback), sample negatives, one Adam step per batch of mean margin
/// losses; after each epoch the validation AUC-PR is computed and the best
/// parameters are kept. Stops early after `patience` epochs without
/// improvement. Deterministic for a fixed seed and platform.
pub fn fit(
    g: &Graph,
    positives: &[Triplet],
    valid: &[Triplet],
    mc: &ModelConfig,
    tc: &TrainConfig,
    cache: Option<&SubgraphCache>,
    log: &mut dyn Write,
) -> Result<FitOutcome, TrainError> {
    mc.validate()?;
    tc.validate()?;
    if positives.is_empty() {
        return Err(TrainError::Config("no training positives".into()));
    }

    for (key, value) in echo_config(mc, tc) {
        log_line(log, false, format_args!("config {key}={value}"))?;
    }

    let mut rng = StdRng::seed_from_u64(tc.seed);
    let mut params = ModelParams::init(*mc, g.num_relations(), &mut rng)?;
    let mut adam = AdamState::new(params.store(), tc.lr);
    let mut counts = TrainCounts::default();

    let mut best: Option<(f64, usize, ModelParams)> = None;
    let mut stale_epochs = 0usize;
    let mut epochs_run = 0usize;

    for epoch in 1..=tc.epochs {
        epochs_run = epoch;
        let mut order: Vec<usize> = (0..positives.len()).collect();
        order.shuffle(&mut rng);
        let mut epoch_trained = 0usize;
        let fallback_before = counts.fallback_positives;
        let empty_before = counts.skipped_empty_positives;

        for (batch_idx, chunk) in order.chunks(tc.batch_size).enumerate() {
            // Draw all negatives serially so parallel extraction cannot
            // perturb the rng stream.
            let mut items: Vec<(Triplet, Vec<Triplet>)> = Vec::with_capacity(chunk.len());
            for &pi in chunk {
                let pos = positives[pi];
                if pos.head == pos.tail {
                    counts.skipped_degenerate_positives += 1;
                    continue;
                }
                let mut negs = Vec::with_capacity(tc.negatives_per_positive);
                for _ in 0..tc.negatives_per_positive {
                    let mode = match tc.negative_policy {
                        NegativePolicy::ExchangeHeadTail => NegativeMode::ExchangeHeadTail,
                        NegativePolicy::ReplaceUniform => {
                            if rng.gen::<bool>() {
                                NegativeMode::ReplaceHead
                            } else {
                                NegativeMode::ReplaceTail
                            }
                        }
                    };
                    let neg = match sample_negative(
                        g,
                        pos,
                        mode,
                        tc.require_subgraph_negatives,
                        mc.hop,
                        tc.max_nodes,
                        &mut rng,
                    ) {
                        Ok(n) => n,
                        Err(SampleError::Exhausted { fallback }) => {
                            counts.sampling_shortfalls += 1;
                            fallback
                        }
                        Err(SampleError::NoValidCorruption) => {
                            return Err(TrainError::Sampling(format!(
                                "no valid corruption for positive {pos:?}"
                            )))
                        }
                    };
                    negs.push(neg);
                }
                items.push((pos, negs));
            }
            if items.is_empty() {
                continue;
            }

            // Pure extraction, parallel over the whole batch.
            let candidates: Vec<Triplet> = items
                .iter()
                .flat_map(|(p, ns)| std::iter::once(*p).chain(ns.iter().copied()))
                .collect();
            let extracted: Vec<Result<ExtractOutcome, ExtractError>> = candidates
                .par_iter()
                .map(|&t| extract_for_candidate(g, t, mc, tc.max_nodes, cache))
                .collect();
            let mut extracted = extracted.into_iter();

            let mut tape = Tape::new();
            let mut losses = Vec::new();
            for (_, negs) in &items {
                let pos_outcome = extracted.next().expect("one per candidate")?;
                let neg_outcomes: Vec<ExtractOutcome> = negs
                    .iter()
                    .map(|_| extracted.next().expect("one per candidate"))
                    .collect::<Result<_, _>>()?;

                let pos_sub = match &pos_outcome {
                    ExtractOutcome::Directed(s) => s,
                    ExtractOutcome::Fallback(s) => {
                        counts.fallback_positives += 1;
                        s
                    }
                    ExtractOutcome::Empty => {
                        counts.skipped_empty_positives += 1;
                        continue;
                    }
                };
                let pos_var = forward(&mut tape, pos_sub, &params, &mut Phase::Train {
                    rng: &mut rng,
                })?;
                let mut neg_vars = Vec::with_capacity(neg_outcomes.len());
                for outcome in &neg_outcomes {
                    let var = match outcome.subgraph() {
                        Some(sub) => forward(&mut tape, sub, &params, &mut Phase::Train {
                            rng: &mut rng,
                        })?,
                        None => {
                            counts.empty_negatives += 1;
                            tape.constant(Matrix::filled(1, 1, EMPTY_SUBGRAPH_SCORE))?
                        }
                    };
                    neg_vars.push(var);
                }
                losses.push(margin_loss(&mut tape, pos_var, &neg_vars, tc.margin)?);
                epoch_trained += 1;
            }
            if losses.is_empty() {
                continue;
            }

            let mut total = losses[0];
            for &l in &losses[1..] {
                total = tape.add(total, l)?;
            }
            let batch_loss = tape.scale(total, 1.0 / losses.len() as f64)?;
            let loss_value = tape.scalar(batch_loss);
            tape.backward(batch_loss, params.store_mut())?;
            params.store_mut().clip_grad_norm(tc.grad_clip);
            adam.step(params.store_mut())?;

            log_line(
                log,
                tc.log_timestamps,
                format_args!(
                    "epoch={epoch} batch={batch_idx} loss={loss_value:.6} pairs={}",
                    losses.len()
                ),
            )?;
        }

        counts.trained_positives += epoch_trained;
        if epoch == 1 && epoch_trained == 0 {
            return Err(TrainError::NoTrainableSubgraphs);
        }

        let epoch_fallback = counts.fallback_positives - fallback_before;
        let epoch_empty = counts.skipped_empty_positives - empty_before;
        if valid.is_empty() {
            log_line(
                log,
                tc.log_timestamps,
                format_args!(
                    "epoch={epoch} trained={epoch_trained} fallback={epoch_fallback}                      empty_skipped={epoch_empty}"
                ),
            )?;
            continue;
        }

        let report = run_protocol(
            g,
            valid,
            &ModelScorer {
                params: &params,
                max_nodes: tc.max_nodes,
            },
            Protocol::AucOneNegative,
            &EvalOptions {
                require_subgraph: tc.require_subgraph_negatives,
                corruption: CorruptionSide::Mixed,
                seed: valid_eval_seed(tc.seed, epoch),
                hop: mc.hop,
                max_nodes: tc.max_nodes,
            },
        )?;
        let auc = report.auc_pr.unwrap_or(0.0);
        let improved = best.as_ref().is_none_or(|(b, _, _)| auc > *b);
        log_line(
            log,
            tc.log_timestamps,
            format_args!(
                "epoch={epoch} trained={epoch_trained} fallback={epoch_fallback}                  empty_skipped={epoch_empty} valid_auc_pr={auc:.6} best={}",
                u8::from(improved)
            ),
        )?;
        if improved {
            best = Some((auc, epoch, params.clone()));
            stale_epochs = 0;
        } else {
            stale_epochs += 1;
            if stale_epochs >= tc.patience {
                log_line(
                    log,
                    tc.log_timestamps,
                    format_args!("early_stop epoch={epoch} patience={}", tc.patience),
                )?;
                break;
            }
        }
    }

    let (best_valid, best_epoch, final_params) = match best {
        Some((auc, epoch, p)) => (Some(auc), epoch, p),
        None => (None, epochs_run, params),
    };
    log_line(
        log,
        tc.log_timestamps,
        format_args!(
            "done epochs={epochs_run} best_epoch={best_epoch} best_valid_auc_pr={}",
            best_valid.map(|v| format!("{v:.6}")).unwrap_or_else(|| "none".into())
        ),
    )?;
    Ok(FitOutcome {
        params: final_params,
        epochs_run,
        best_epoch,
        best_valid_auc_pr: best_valid,
        counts,
    })
}

/// Key=value pairs describing a run, echoed into logs and reports.
pub fn echo_config(mc: &ModelConfig, tc: &TrainConfig) -> Vec<(String, String)> {
    vec![
        ("hop".into(), mc.hop.to_string()),
        ("iters".into(), mc.iters.to_string()),
        ("dim".into(), mc.dim.to_string()),
        ("score_hidden".into(), mc.score_hidden.to_string()),
        ("edge_dropout".into(), format!("{:?}", mc.edge_dropout)),
        ("f1".into(), mc.f1.name().into()),
        ("f2".into(), mc.f2.name().into()),
        ("undirected".into(), mc.ablation.undirected.to_string()),
        ("no_attention".into(), mc.ablation.no_attention.to_string()),
        (
            "grail_attention".into(),
            mc.ablation.grail_attention.to_string(),
        ),
        (
            "no_edge_update".into(),
            mc.ablation.no_edge_update.to_string(),
        ),
        ("lr".into(), format!("{:?}", tc.lr)),
        ("epochs".into(), tc.epochs.to_string()),
        ("batch".into(), tc.batch_size.to_string()),
        ("margin".into(), format!("{:?}", tc.margin)),
        ("neg".into(), tc.negatives_per_positive.to_string()),
        ("seed".into(), tc.seed.to_string()),
        ("patience".into(), tc.patience.to_string()),
        ("runs".into(), tc.runs.to_string()),
        (
            "require_subgraph".into(),
            tc.require_subgraph_negatives.to_string(),
        ),
        ("max_nodes".into(), tc.max_nodes.to_string()),
        ("grad_clip".into(), format!("{:?}", tc.grad_clip)),
    ]
}
