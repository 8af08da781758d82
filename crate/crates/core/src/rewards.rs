//! Clinical reward analogs and the composite training reward.
//!
//! - `radgraph_like`: F1 over exact (finding, presence) pairs.
//! - `chexbert_like`: F1 over 14-bit label vectors, micro or macro, over all
//!   labels or the five-label subset.
//! - `rate_like`: F1 with embedding-cosine credit between label-agreeing
//!   entities; greedy max-similarity matching, no type weighting.
//! - `inverse_frequency`: share of the reference's positive labels recovered,
//!   weighted by inverse prevalence.
//!
//! Entity multisets are deduplicated before scoring.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::extract::{labels_of_mentions, sentence_mentions, Labels, Mention};
use crate::ontology::{segment_report, FindingId, Ontology, Presence, NUM_FINDINGS};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RewardComponent {
    RadgraphLike,
    ChexbertMicro14,
    RateLike,
    InverseFrequency,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum LabelScope {
    All14,
    Subset5,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum Averaging {
    Micro,
    Macro,
}

/// How macro averaging treats labels absent from both prediction and reference.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum MacroEmpty {
    #[default]
    Skip,
    One,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RewardParams {
    pub components: Vec<RewardComponent>,
    pub tau_match: f64,
    pub macro_empty: MacroEmpty,
    /// Per-label prevalence for the inverse-frequency component.
    pub prevalence: Option<Vec<f64>>,
}

impl Default for RewardParams {
    fn default() -> Self {
        RewardParams {
            components: vec![
                RewardComponent::RadgraphLike,
                RewardComponent::ChexbertMicro14,
                RewardComponent::RateLike,
            ],
            tau_match: 0.6,
            macro_empty: MacroEmpty::Skip,
            prevalence: None,
        }
    }
}

impl RewardParams {
    pub fn validate(&self) -> Result<()> {
        if self.components.is_empty() {
            return Err(Error::InvalidConfig(
                "reward components must be non-empty".into(),
            ));
        }
        if !(0.0..=1.0).contains(&self.tau_match) {
            return Err(Error::InvalidConfig("tau_match outside [0, 1]".into()));
        }
        if self.components.contains(&RewardComponent::InverseFrequency) {
            match &self.prevalence {
                Some(p) if p.len() == NUM_FINDINGS && p.iter().all(|&v| v > 0.0 && v <= 1.0) => {}
                _ => {
                    return Err(Error::InvalidConfig(
                        "inverse_frequency needs 14 prevalence values in (0, 1]".into(),
                    ))
                }
            }
        }
        Ok(())
    }

    pub fn has(&self, c: RewardComponent) -> bool {
        self.components.contains(&c)
    }
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct RewardBreakdown {
    pub radgraph_like: f64,
    pub chexbert_micro_14: f64,
    pub rate_like: f64,
    pub inverse_freq: Option<f64>,
    pub composite: f64,
}

fn f1(tp: usize, fp: usize, fn_: usize) -> f64 {
    if tp + fp + fn_ == 0 {
        1.0
    } else {
        2.0 * tp as f64 / (2 * tp + fp + fn_) as f64
    }
}

fn mentions_of(text: &str, ontology: &Ontology) -> Vec<Mention> {
    segment_report(text)
        .iter()
        .flat_map(|s| sentence_mentions(s, ontology))
        .collect()
}

fn dedup_pairs(ms: &[Mention]) -> Vec<(FindingId, Presence)> {
    let mut v: Vec<_> = ms.iter().map(|m| (m.finding, m.presence)).collect();
    v.sort_unstable();
    v.dedup();
    v
}

pub fn radgraph_f1_mentions(pred: &[Mention], reference: &[Mention]) -> f64 {
    let p = dedup_pairs(pred);
    let r = dedup_pairs(reference);
    let tp = p.iter().filter(|x| r.contains(x)).count();
    f1(tp, p.len() - tp, r.len() - tp)
}

pub fn radgraph_like_f1(pred: &str, reference: &str, ontology: &Ontology) -> f64 {
    radgraph_f1_mentions(
        &mentions_of(pred, ontology),
        &mentions_of(reference, ontology),
    )
}

fn scope_labels(scope: LabelScope, ontology: &Ontology) -> Vec<usize> {
    match scope {
        LabelScope::All14 => (0..NUM_FINDINGS).collect(),
        LabelScope::Subset5 => ontology
            .five_subset()
            .iter()
            .map(|&f| ontology.label_index(f))
            .collect(),
    }
}

/// Per-label confusion counts, accumulable over a corpus.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub struct LabelCounts {
    pub tp: [usize; NUM_FINDINGS],
    pub fp: [usize; NUM_FINDINGS],
    pub fn_: [usize; NUM_FINDINGS],
}

impl LabelCounts {
    pub fn add(&mut self, pred: &Labels, reference: &Labels) {
        for k in 0..NUM_FINDINGS {
            match (pred[k], reference[k]) {
                (true, true) => self.tp[k] += 1,
                (true, false) => self.fp[k] += 1,
                (false, true) => self.fn_[k] += 1,
                (false, false) => {}
            }
        }
    }

    pub fn of(pred: &Labels, reference: &Labels) -> Self {
        let mut c = LabelCounts::default();
        c.add(pred, reference);
        c
    }

    pub fn f1(&self, labels: &[usize], averaging: Averaging, empty: MacroEmpty) -> f64 {
        match averaging {
            Averaging::Micro => {
                let (tp, fp, fn_) = labels.iter().fold((0, 0, 0), |(a, b, c), &k| {
                    (a + self.tp[k], b + self.fp[k], c + self.fn_[k])
                });
                f1(tp, fp, fn_)
            }
            Averaging::Macro => {
                let scores: Vec<f64> = labels
                    .iter()
                    .filter_map(|&k| {
                        let support = self.tp[k] + self.fp[k] + self.fn_[k] > 0;
                        match (support, empty) {
                            (true, _) => Some(f1(self.tp[k], self.fp[k], self.fn_[k])),
                            (false, MacroEmpty::One) => Some(1.0),
                            (false, MacroEmpty::Skip) => None,
                        }
                    })
                    .collect();
                if scores.is_empty() {
                    1.0
                } else {
                    scores.iter().sum::<f64>() / scores.len() as f64
                }
            }
        }
    }

    pub fn scoped_f1(
        &self,
        ontology: &Ontology,
        scope: LabelScope,
        averaging: Averaging,
        empty: MacroEmpty,
    ) -> f64 {
        self.f1(&scope_labels(scope, ontology), averaging, empty)
    }
}

pub fn chexbert_f1_labels(
    pred: &Labels,
    reference: &Labels,
    ontology: &Ontology,
    scope: LabelScope,
    averaging: Averaging,
    empty: MacroEmpty,
) -> f64 {
    LabelCounts::of(pred, reference).scoped_f1(ontology, scope, averaging, empty)
}

pub fn chexbert_like_f1(
    pred: &str,
    reference: &str,
    ontology: &Ontology,
    scope: LabelScope,
    averaging: Averaging,
    empty: MacroEmpty,
) -> f64 {
    let p = labels_of_mentions(&mentions_of(pred, ontology), ontology);
    let r = labels_of_mentions(&mentions_of(reference, ontology), ontology);
    chexbert_f1_labels(&p, &r, ontology, scope, averaging, empty)
}

fn dedup_entities(ms: &[Mention]) -> Vec<Mention> {
    let mut v = ms.to_vec();
    v.sort_unstable();
    v.dedup_by(|a, b| a.lexeme == b.lexeme && a.presence == b.presence);
    v
}

fn soft_credit(from: &[Mention], to: &[Mention], ontology: &Ontology, tau_match: f64) -> f64 {
    let total: f64 = from
        .iter()
        .map(|e| {
            let best = to
                .iter()
                .filter(|r| r.presence == e.presence)
                .map(|r| ontology.similarity(e.lexeme, r.lexeme))
                .fold(f64::NEG_INFINITY, f64::max);
            if best >= tau_match {
                best
            } else {
                0.0
            }
        })
        .sum();
    total / from.len() as f64
}

pub fn rate_f1_mentions(
    pred: &[Mention],
    reference: &[Mention],
    ontology: &Ontology,
    tau_match: f64,
) -> f64 {
    let p = dedup_entities(pred);
    let r = dedup_entities(reference);
    match (p.is_empty(), r.is_empty()) {
        (true, true) => return 1.0,
        (true, false) | (false, true) => return 0.0,
        _ => {}
    }
    let precision = soft_credit(&p, &r, ontology, tau_match);
    let recall = soft_credit(&r, &p, ontology, tau_match);
    if precision + recall == 0.0 {
        0.0
    } else {
        2.0 * precision * recall / (precision + recall)
    }
}

pub fn rate_like_f1(pred: &str, reference: &str, ontology: &Ontology, tau_match: f64) -> f64 {
    rate_f1_mentions(
        &mentions_of(pred, ontology),
        &mentions_of(reference, ontology),
        ontology,
        tau_match,
    )
}

pub fn inverse_frequency_labels(pred: &Labels, reference: &Labels, prevalence: &[f64]) -> f64 {
    let weight = |k: usize| 1.0 / prevalence[k];
    let denom: f64 = (0..NUM_FINDINGS)
        .filter(|&k| reference[k])
        .map(weight)
        .sum();
    if denom == 0.0 {
        return if pred.iter().any(|&b| b) { 0.0 } else { 1.0 };
    }
    let hit: f64 = (0..NUM_FINDINGS)
        .filter(|&k| reference[k] && pred[k])
        .map(weight)
        .sum();
    hit / denom
}

pub fn inverse_frequency_reward(
    pred: &str,
    reference: &str,
    ontology: &Ontology,
    prevalence: &[f64],
) -> f64 {
    let p = labels_of_mentions(&mentions_of(pred, ontology), ontology);
    let r = labels_of_mentions(&mentions_of(reference, ontology), ontology);
    inverse_frequency_labels(&p, &r, prevalence)
}

/// Scores pre-extracted mentions; the hot path during training.
pub fn score_mentions(
    pred: &[Mention],
    reference: &[Mention],
    ontology: &Ontology,
    params: &RewardParams,
) -> RewardBreakdown {
    let radgraph_like = radgraph_f1_mentions(pred, reference);
    let pl = labels_of_mentions(pred, ontology);
    let rl = labels_of_mentions(reference, ontology);
    let chexbert_micro_14 = chexbert_f1_labels(
        &pl,
        &rl,
        ontology,
        LabelScope::All14,
        Averaging::Micro,
        params.macro_empty,
    );
    let rate_like = rate_f1_mentions(pred, reference, ontology, params.tau_match);
    let inverse_freq = if params.has(RewardComponent::InverseFrequency) {
        params
            .prevalence
            .as_deref()
            .map(|p| inverse_frequency_labels(&pl, &rl, p))
    } else {
        None
    };
    let composite = params
        .components
        .iter()
        .map(|c| match c {
            RewardComponent::RadgraphLike => radgraph_like,
            RewardComponent::ChexbertMicro14 => chexbert_micro_14,
            RewardComponent::RateLike => rate_like,
            RewardComponent::InverseFrequency => inverse_freq.unwrap_or(0.0),
        })
        .sum();
    RewardBreakdown {
        radgraph_like,
        chexbert_micro_14,
        rate_like,
        inverse_freq,
        composite,
    }
}

pub fn composite_reward(
    pred: &str,
    reference: &str,
    ontology: &Ontology,
    params: &RewardParams,
) -> RewardBreakdown {
    score_mentions(
        &mentions_of(pred, ontology),
        &mentions_of(reference, ontology),
        ontology,
        params,
    )
}
