//! Ranking evaluation: AUC-PR, AUC-ROC, Hits@K, and the negative-sampling
//! protocols they are computed under.

use std::io::Write;

use rand::rngs::StdRng;
use rand::SeedableRng;
use rayon::prelude::*;
use thiserror::Error;

use crate::graph::{Graph, Triplet};
use crate::model::{CandidateOutcome, ModelError, ModelParams, ScoredCandidate};
use crate::trainer::{sample_negative, NegativeMode, SampleError};

#[derive(Debug, Error)]
pub enum EvalError {
    #[error("undefined metric: need at least one positive and one negative")]
    SingleClass,
    #[error("empty test set")]
    EmptyTestSet,
    #[error("sampling error: {0}")]
    Sampling(String),
    #[error(transparent)]
    Model(#[from] ModelError),
    #[error("io error: {0}")]
    Io(#[from] std::io::Error),
}

/// One scored example with its ground-truth label.
#[derive(Debug, Clone, Copy)]
pub struct LabeledScore {
    pub score: f64,
    pub positive: bool,
}

impl LabeledScore {
    pub fn new(score: f64, positive: bool) -> Self {
        Self { score, positive }
    }
}

/// Area under the precision-recall curve: scores sorted descending, tied
/// scores consumed as one group, step integration of precision over recall.
pub fn auc_pr(scores: &[LabeledScore]) -> Result<f64, EvalError> {
    let groups = tie_groups(scores)?;
    let total_pos = scores.iter().filter(|s| s.positive).count() as f64;
    let mut tp = 0u64;
    let mut fp = 0u64;
    let mut area = 0.0;
    let mut prev_recall = 0.0;
    for (pos, neg) in groups {
        tp += pos;
        fp += neg;
        let precision = tp as f64 / (tp + fp) as f64;
        let recall = tp as f64 / total_pos;
        area += (recall - prev_recall) * precision;
        prev_recall = recall;
    }
    Ok(area)
}

/// Area under the ROC curve in its rank-sum form: the probability that a
/// random positive outscores a random negative, ties counted one half.
pub fn auc_roc(scores: &[LabeledScore]) -> Result<f64, EvalError> {
    let groups = tie_groups(scores)?;
    let total_pos: u64 = scores.iter().filter(|s| s.positive).count() as u64;
    let total_neg = scores.len() as u64 - total_pos;
    // Twice (wins + ties/2), kept in integers until the final division.
    let mut doubled_wins = 0u64;
    let mut negatives_below = total_neg;
    for (pos, neg) in groups {
        negatives_below -= neg;
        doubled_wins += pos * (2 * negatives_below + neg);
    }
    Ok(doubled_wins as f64 / (2 * total_pos * total_neg) as f64)
}

/// Descending tie groups as (positive count, negative count) pairs.
fn tie_groups(scores: &[LabeledScore]) -> Result<Vec<(u64, u64)>, EvalError> {
    let pos = scores.iter().filter(|s| s.positive).count();
    if pos == 0 || pos == scores.len() {
        return Err(EvalError::SingleClass);
    }
    let mut sorted: Vec<&LabeledScore> = scores.iter().collect();
    sorted.sort_by(|a, b| b.score.total_cmp(&a.score));
    let mut groups: Vec<(u64, u64)> = Vec::new();
    let mut current: Option<f64> = None;
    for s in sorted {
        if current != Some(s.score) {
            groups.push((0, 0));
            current = Some(s.score);
        }
        let last = groups.last_mut().expect("pushed above");
        if s.positive {
            last.0 += 1;
        } else {
            last.1 += 1;
        }
    }
    Ok(groups)
}

/// Pessimistic competition rank of the positive among its negatives: tied
/// negatives rank ahead of it.
pub fn rank_pessimistic(pos_score: f64, neg_scores: &[f64]) -> usize {
    1 + neg_scores.iter().filter(|&&n| n >= pos_score).count()
}

/// Whether the positive ranks within the top k of {positive} + negatives.
pub fn hits_at_k(pos_score: f64, neg_scores: &[f64], k: usize) -> bool {
    rank_pessimistic(pos_score, neg_scores) <= k
}

/// The supported evaluation protocols.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Protocol {
    /// One sampled negative per positive; reports AUC-PR and AUC-ROC over
    /// the pooled scores.
    AucOneNegative,
    /// `num_negatives` sampled negatives per positive; reports the Hits@K
    /// fraction (plus pooled AUCs).
    HitsAtK { num_negatives: usize, k: usize },
    /// The head-tail-exchanged triplet as the single negative.
    ExchangeHeadTail,
}

impl Protocol {
    pub fn tag(&self) -> String {
        match self {
            Protocol::AucOneNegative => "auc-one-negative".into(),
            Protocol::HitsAtK { num_negatives, k } => format!("hits-{k}(neg={num_negatives})"),
            Protocol::ExchangeHeadTail => "exchange-ht".into(),
        }
    }
}

/// How replace-mode negatives corrupt positives.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum CorruptionSide {
    /// Seeded 50/50 head/tail mix.
    #[default]
    Mixed,
    HeadOnly,
    TailOnly,
}

#[derive(Debug, Clone, Copy)]
pub struct EvalOptions {
    /// Re-draw sampled negatives until they have a non-empty undirected
    /// enclosing subgraph (bounded retries, shortfalls counted).
    pub require_subgraph: bool,
    pub corruption: CorruptionSide,
    pub seed: u64,
    pub hop: usize,
    pub max_nodes: usize,
}

impl Default for EvalOptions {
    fn default() -> Self {
        Self {
            require_subgraph: false,
            corruption: CorruptionSide::Mixed,
            seed: 0,
            hop: 3,
            max_nodes: crate::subgraph::DEFAULT_MAX_NODES,
        }
    }
}

/// Anything that can score a candidate triplet against a graph.
pub trait Scorer: Sync {
    fn score(&self, g: &Graph, candidate: Triplet) -> Result<ScoredCandidate, ModelError>;
}

/// The trained model as a scorer.
pub struct ModelScorer<'a> {
    pub params: &'a ModelParams,
    pub max_nodes: usize,
}

impl Scorer for ModelScorer<'_> {
    fn score(&self, g: &Graph, candidate: Triplet) -> Result<ScoredCandidate, ModelError> {
        crate::model::score_candidate(g, candidate, self.params, self.max_nodes)
    }
}

/// Subgraph bookkeeping for one protocol run.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct EvalCounts {
    pub positives: usize,
    pub negatives: usize,
    pub empty_positives: usize,
    pub empty_negatives: usize,
    pub fallback_positives: usize,
    pub fallback_negatives: usize,
    /// Negatives for which the non-empty requirement could not be met
    /// within the retry budget.
    pub sampling_shortfalls: usize,
}

/// One row of the per-triplet dump.
#[derive(Debug, Clone)]
pub struct ScoreRow {
    pub triplet: Triplet,
    pub positive: bool,
    pub score: f64,
    /// Pessimistic rank within the triplet's group for positives;
    /// competition rank for negatives.
    pub rank: usize,
}

/// Per-protocol metric bundle plus the per-triplet score dump.
#[derive(Debug, Clone)]
pub struct EvalReport {
    pub protocol: String,
    pub auc_pr: Option<f64>,
    pub auc_roc: Option<f64>,
    pub hits_at_k: Option<(usize, f64)>,
    pub rows: Vec<ScoreRow>,
    pub counts: EvalCounts,
}

impl EvalReport {
    /// Plain-text summary, one `key=value` per line.
    pub fn write_summary(&self, w: &mut dyn Write) -> std::io::Result<()> {
        writeln!(w, "protocol={}", self.protocol)?;
        if let Some(v) = self.auc_pr {
            writeln!(w, "auc_pr={v:.6}")?;
        }
        if let Some(v) = self.auc_roc {
            writeln!(w, "auc_roc={v:.6}")?;
        }
        if let Some((k, v)) = self.hits_at_k {
            writeln!(w, "hits_at_{k}={v:.6}")?;
        }
        let c = &self.counts;
        writeln!(w, "positives={}", c.positives)?;
        writeln!(w, "negatives={}", c.negatives)?;
        writeln!(w, "empty_positives={}", c.empty_positives)?;
        writeln!(w, "empty_negatives={}", c.empty_negatives)?;
        writeln!(w, "fallback_positives={}", c.fallback_positives)?;
        writeln!(w, "fallback_negatives={}", c.fallback_negatives)?;
        writeln!(w, "sampling_shortfalls={}", c.sampling_shortfalls)
    }

    /// Per-triplet TSV dump: head relation tail label score rank.
    pub fn write_tsv(&self, g: &Graph, w: &mut dyn Write) -> std::io::Result<()> {
        for row in &self.rows {
            let t = row.triplet;
            writeln!(
                w,
                "{}\t{}\t{}\t{}\t{:.6}\t{}",
                g.entity_vocab().name(t.head).unwrap_or("?"),
                g.relation_vocab().name(t.relation).unwrap_or("?"),
                g.entity_vocab().name(t.tail).unwrap_or("?"),
                row.positive as u8,
                row.score,
                row.rank
            )?;
        }
        Ok(())
    }
}

/// Runs one evaluation protocol: samples negatives per positive, scores
/// everything (positives with directed extraction and undirected fallback),
/// and aggregates the metrics. Empty-subgraph candidates keep the sentinel
/// score and are reported in the counts.
pub fn run_protocol(
    g: &Graph,
    test: &[Triplet],
    scorer: &dyn Scorer,
    protocol: Protocol,
    opts: &EvalOptions,
) -> Result<EvalReport, EvalError> {
    if test.is_empty() {
        return Err(EvalError::EmptyTestSet);
    }
    let mut rng = StdRng::seed_from_u64(opts.seed);
    let per_positive = match protocol {
        Protocol::AucOneNegative => 1,
        Protocol::HitsAtK { num_negatives, .. } => num_negatives,
        Protocol::ExchangeHeadTail => 1,
    };

    // Negatives are drawn serially up front so scoring order cannot affect
    // the draws.
    let mut shortfalls = 0usize;
    let mut groups: Vec<(Triplet, Vec<Triplet>)> = Vec::with_capacity(test.len());
    for &pos in test {
        let mut negs = Vec::with_capacity(per_positive);
        for _ in 0..per_positive {
            let neg = match protocol {
                Protocol::ExchangeHeadTail => {
                    sample_negative(g, pos, NegativeMode::ExchangeHeadTail, false, 0, 0, &mut rng)
                        .expect("exchange mode cannot exhaust")
                }
                _ => {
                    let mode = pick_mode(opts.corruption, &mut rng);
                    match sample_negative(
                        g,
                        pos,
                        mode,
                        opts.require_subgraph,
                        opts.hop,
                        opts.max_nodes,
                        &mut rng,
                    ) {
                        Ok(n) => n,
                        Err(SampleError::Exhausted { fallback }) => {
                            shortfalls += 1;
                            fallback
                        }
                        Err(SampleError::NoValidCorruption) => {
                            return Err(EvalError::Sampling(format!(
                                "no valid corruption for positive {pos:?}"
                            )))
                        }
                    }
                }
            };
            negs.push(neg);
        }
        groups.push((pos, negs));
    }

    // Scoring is read-only and embarrassingly parallel.
    let scored: Vec<Result<(ScoredCandidate, Vec<ScoredCandidate>), ModelError>> = groups
        .par_iter()
        .map(|(pos, negs)| {
            let ps = scorer.score(g, *pos)?;
            let ns = negs
                .iter()
                .map(|&n| scorer.score(g, n))
                .collect::<Result<Vec<_>, _>>()?;
            Ok((ps, ns))
        })
        .collect();

    let mut counts = EvalCounts {
        positives: test.len(),
        sampling_shortfalls: shortfalls,
        ..EvalCounts::default()
    };
    let mut pooled = Vec::new();
    let mut rows = Vec::new();
    let mut hit_count = 0usize;
    let hits_k = match protocol {
        Protocol::HitsAtK { k, .. } => Some(k),
        _ => None,
    };

    for ((pos, negs), result) in groups.iter().zip(scored) {
        let (ps, ns) = result?;
        tally(&mut counts, ps.outcome, true);
        pooled.push(LabeledScore::new(ps.score, true));
        let neg_scores: Vec<f64> = ns.iter().map(|s| s.score).collect();
        for (n, s) in negs.iter().zip(&ns) {
            tally(&mut counts, s.outcome, false);
            pooled.push(LabeledScore::new(s.score, false));
            // competition rank of this negative within its group
            let mut greater = neg_scores.iter().filter(|&&v| v > s.score).count();
            if ps.score > s.score {
                greater += 1;
            }
            rows.push(ScoreRow {
                triplet: *n,
                positive: false,
                score: s.score,
                rank: 1 + greater,
            });
        }
        let rank = rank_pessimistic(ps.score, &neg_scores);
        if let Some(k) = hits_k {
            if rank <= k {
                hit_count += 1;
            }
        }
        rows.push(ScoreRow {
            triplet: *pos,
            positive: true,
            score: ps.score,
            rank,
        });
        counts.negatives += negs.len();
    }

    let auc_pr_value = auc_pr(&pooled).ok();
    let auc_roc_value = auc_roc(&pooled).ok();
    Ok(EvalReport {
        protocol: protocol.tag(),
        auc_pr: auc_pr_value,
        auc_roc: auc_roc_value,
        hits_at_k: hits_k.map(|k| (k, hit_count as f64 / test.len() as f64)),
        rows,
        counts,
    })
}

fn pick_mode(side: CorruptionSide, rng: &mut StdRng) -> NegativeMode {
    use rand::Rng;
    match side {
        CorruptionSide::HeadOnly => NegativeMode::ReplaceHead,
        CorruptionSide::TailOnly => NegativeMode::ReplaceTail,
        CorruptionSide::Mixed => {
            if rng.gen::<bool>() {
                NegativeMode::ReplaceHead
            } else {
                NegativeMode::ReplaceTail
            }
        }
    }
}

fn tally(counts: &mut EvalCounts, outcome: CandidateOutcome, positive: bool) {
    match (outcome, positive) {
        (CandidateOutcome::Empty, true) => counts.empty_positives += 1,
        (CandidateOutcome::Empty, false) => counts.empty_negatives += 1,
        (CandidateOutcome::UndirectedFallback, true) => counts.fallback_positives += 1,
        (CandidateOutcome::UndirectedFallback, false) => counts.fallback_negatives += 1,
        (CandidateOutcome::Directed, _) => {}
    }
}
