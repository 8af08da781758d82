//! Synthetic cases with controllable class imbalance.
//!
//! A case is a set of true findings, a noisy feature view of them and a
//! reference report rendered from templates. Every case draws from its own
//! stream keyed by `(seed, case_id)`, so corpora can be generated in any order.

use rand::seq::IndexedRandom;
use rand::Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::extract::Labels;
use crate::ontology::{FindingId, Ontology, Presence, NUM_FINDINGS};
use crate::rng;

/// Probability that the combined "No pleural effusion or pneumothorax." is
/// used when both always-commented findings are absent.
const COMBINED_ABSENCE_PROB: f64 = 1.0 / 3.0;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct WorldConfig {
    pub normal_fraction: f64,
    /// Conditional prevalence of the 13 abnormal findings, in label order.
    pub prevalence: Vec<f64>,
    pub feature_noise_sigma: f64,
    pub max_findings_per_case: usize,
    pub seed: u64,
    /// Corpus size; odd case ids form the evaluation split.
    pub n_cases: usize,
}

impl Default for WorldConfig {
    fn default() -> Self {
        WorldConfig {
            normal_fraction: 0.7,
            prevalence: vec![
                0.08, // enlarged cardiomediastinum
                0.40, // cardiomegaly
                0.35, // lung opacity
                0.02, // lung lesion
                0.25, // edema
                0.10, // consolidation
                0.08, // pneumonia
                0.30, // atelectasis
                0.06, // pneumothorax
                0.40, // pleural effusion
                0.04, // pleural other
                0.02, // fracture
                0.30, // support devices
            ],
            feature_noise_sigma: 0.3,
            max_findings_per_case: 3,
            seed: 0,
            n_cases: 2000,
        }
    }
}

impl WorldConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |m: &str| Err(Error::InvalidConfig(format!("world: {m}")));
        if !(0.0..=1.0).contains(&self.normal_fraction) {
            return bad("normal_fraction outside [0, 1]");
        }
        if self.prevalence.len() != NUM_FINDINGS - 1 {
            return bad("prevalence needs 13 entries");
        }
        if self.prevalence.iter().any(|p| !(0.0..=1.0).contains(p)) {
            return bad("prevalence outside [0, 1]");
        }
        if self.normal_fraction < 1.0 && self.prevalence.iter().all(|&p| p == 0.0) {
            return bad("abnormal cases need some positive prevalence");
        }
        if !(self.feature_noise_sigma >= 0.0 && self.feature_noise_sigma.is_finite()) {
            return bad("feature_noise_sigma must be finite and >= 0");
        }
        if self.max_findings_per_case == 0 {
            return bad("max_findings_per_case must be positive");
        }
        Ok(())
    }

    /// Marginal prevalence per label (14 entries), for inverse-frequency rewards.
    /// Approximates the without-replacement draw by its first-pick share.
    pub fn label_prevalence(&self) -> Vec<f64> {
        let total: f64 = self.prevalence.iter().sum();
        let abnormal = 1.0 - self.normal_fraction;
        let mean_k = (1 + self.max_findings_per_case) as f64 / 2.0;
        let mut out: Vec<f64> = self
            .prevalence
            .iter()
            .map(|p| (abnormal * (mean_k * p / total).min(1.0)).max(1e-3))
            .collect();
        out.push(self.normal_fraction.max(1e-3));
        out
    }

    pub fn feature_dim(&self) -> usize {
        NUM_FINDINGS + 1
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Case {
    pub case_id: u64,
    pub true_findings: Labels,
    /// 14 noisy finding bits followed by a constant bias of 1.
    pub features: Vec<f64>,
    #[serde(rename = "reference_template_ids")]
    pub reference_ids: Vec<usize>,
    pub reference_text: String,
}

impl Case {
    pub fn is_eval(&self) -> bool {
        self.case_id % 2 == 1
    }

    pub fn is_normal(&self) -> bool {
        self.true_findings[FindingId::NO_FINDING.index()]
    }
}

fn pick<R: Rng + ?Sized>(ids: &[usize], rng: &mut R) -> usize {
    *ids.choose(rng)
        .expect("every (finding, presence) pair has a template")
}

fn reference_ids<R: Rng + ?Sized>(
    present: &[FindingId],
    ontology: &Ontology,
    rng: &mut R,
) -> Vec<usize> {
    let mut ids = Vec::new();
    if present.is_empty() {
        ids.push(pick(
            &ontology.single_templates(FindingId::NO_FINDING, Presence::Present),
            rng,
        ));
    }
    for &f in present {
        ids.push(pick(&ontology.single_templates(f, Presence::Present), rng));
    }
    let absent: Vec<FindingId> = ontology
        .always_commented()
        .iter()
        .copied()
        .filter(|f| !present.contains(f))
        .collect();
    let combined = ontology.template_by_text("No pleural effusion or pneumothorax.");
    let use_combined =
        absent.len() == 2 && combined.is_some() && rng.random_bool(COMBINED_ABSENCE_PROB);
    if use_combined {
        ids.extend(combined);
    } else {
        for f in absent {
            ids.push(pick(&ontology.single_templates(f, Presence::Absent), rng));
        }
    }
    ids
}

/// Draws case `case_id` of the world.
pub fn sample_case(cfg: &WorldConfig, ontology: &Ontology, case_id: u64) -> Case {
    let mut rng = rng::stream(cfg.seed, &[rng::tag::CASE, case_id]);
    let normal = rng.random_bool(cfg.normal_fraction);
    let mut present: Vec<FindingId> = Vec::new();
    if !normal {
        let candidates: Vec<(FindingId, f64)> = FindingId::abnormal()
            .zip(cfg.prevalence.iter().copied())
            .filter(|&(_, p)| p > 0.0)
            .collect();
        let k = rng.random_range(1..=cfg.max_findings_per_case.min(candidates.len()));
        present = candidates
            .choose_multiple_weighted(&mut rng, k, |c| c.1)
            .expect("validated positive weights")
            .map(|c| c.0)
            .collect();
        present.sort_unstable();
    }
    let mut true_findings = [false; NUM_FINDINGS];
    for &f in &present {
        true_findings[ontology.label_index(f)] = true;
    }
    true_findings[ontology.label_index(FindingId::NO_FINDING)] = present.is_empty();

    let noise = Normal::new(0.0, cfg.feature_noise_sigma).expect("validated sigma");
    let mut features: Vec<f64> = true_findings
        .iter()
        .map(|&b| {
            let x = if b { 1.0 } else { 0.0 };
            if cfg.feature_noise_sigma > 0.0 {
                x + noise.sample(&mut rng)
            } else {
                x
            }
        })
        .collect();
    features.push(1.0);

    let reference_ids = reference_ids(&present, ontology, &mut rng);
    Case {
        case_id,
        true_findings,
        features,
        reference_text: ontology.render(&reference_ids),
        reference_ids,
    }
}

/// `n` cases with ids `0..n`.
pub fn make_corpus(cfg: &WorldConfig, ontology: &Ontology, n: usize) -> Result<Vec<Case>> {
    if n == 0 {
        return Err(Error::InvalidConfig("corpus size must be positive".into()));
    }
    cfg.validate()?;
    Ok((0..n as u64)
        .map(|id| sample_case(cfg, ontology, id))
        .collect())
}

/// (train, eval) split by case-id parity.
pub fn split(corpus: Vec<Case>) -> (Vec<Case>, Vec<Case>) {
    corpus.into_iter().partition(|c| !c.is_eval())
}
