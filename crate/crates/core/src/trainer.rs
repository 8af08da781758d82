//! Two-stage training: maximum-likelihood SFT, then the GRPO family.
//!
//! An RL step samples `batch_cases` training cases, builds one rollout group
//! per case against the parameter snapshot taken at step start, and takes a
//! single ascent step on the clipped surrogate. Edited group members are
//! scored under the snapshot, so all importance ratios equal 1 at the update.
//!
//! Every random decision draws from a stream keyed by (seed, step, slot, ...),
//! which makes the parallel and sequential paths produce identical results.

use rand::seq::SliceRandom;
use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::config::RunConfig;
use crate::edit::{run_cascade, EditConfig, EditTrace, SentenceRef};
use crate::error::{Error, Result};
use crate::extract::{labels_of_mentions, Mention};
use crate::io::MetricRow;
use crate::ontology::{FindingId, Ontology};
use crate::policy::{encode_report, PolicyParams, Trajectory, TrajectoryOrigin};
use crate::rewards::{
    score_mentions, Averaging, LabelCounts, LabelScope, MacroEmpty, RewardBreakdown, RewardParams,
};
use crate::rng::{self, tag};
use crate::world::{make_corpus, split, Case, WorldConfig};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Variant {
    Sft,
    Grpo,
    DrGrpo,
    EditGrpo,
    EditGrpoNorm,
    EditGrpoPara,
}

impl Variant {
    pub const ALL: [Variant; 6] = [
        Variant::Sft,
        Variant::Grpo,
        Variant::DrGrpo,
        Variant::EditGrpo,
        Variant::EditGrpoNorm,
        Variant::EditGrpoPara,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Variant::Sft => "sft",
            Variant::Grpo => "grpo",
            Variant::DrGrpo => "dr_grpo",
            Variant::EditGrpo => "edit_grpo",
            Variant::EditGrpoNorm => "edit_grpo_norm",
            Variant::EditGrpoPara => "edit_grpo_para",
        }
    }

    pub fn is_edit(self) -> bool {
        matches!(
            self,
            Variant::EditGrpo | Variant::EditGrpoNorm | Variant::EditGrpoPara
        )
    }

    pub fn default_advantage_norm(self) -> AdvantageNorm {
        match self {
            Variant::Grpo | Variant::EditGrpoNorm => AdvantageNorm::MeanStd,
            _ => AdvantageNorm::MeanOnly,
        }
    }

    pub fn default_length_norm(self) -> LengthNorm {
        match self {
            Variant::Sft | Variant::Grpo => LengthNorm::PerToken,
            _ => LengthNorm::Constant,
        }
    }
}

impl std::str::FromStr for Variant {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        Variant::ALL
            .into_iter()
            .find(|v| v.name() == s)
            .ok_or_else(|| Error::InvalidConfig(format!("unknown variant {s:?}")))
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum AdvantageNorm {
    MeanOnly,
    MeanStd,
}

/// `Constant` divides by `max_len + 1`, the longest possible trajectory.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum LengthNorm {
    PerToken,
    Constant,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrainerConfig {
    pub variant: Variant,
    pub group_size: usize,
    pub epsilon: f64,
    pub beta: f64,
    pub temperature: f64,
    pub learning_rate: f64,
    pub batch_cases: usize,
    pub steps: usize,
    pub max_len: usize,
    /// `None` takes the variant's default.
    pub advantage_norm: Option<AdvantageNorm>,
    pub length_norm: Option<LengthNorm>,
    pub sft_epochs: usize,
    pub sft_learning_rate: f64,
    pub sft_batch_size: usize,
    pub seed: u64,
    pub threads: usize,
    /// Per-sample traces every this many steps; 0 disables them.
    pub trace_every: usize,
    /// Checkpoints every this many steps (the final step is always kept); 0
    /// keeps only the final one.
    pub checkpoint_every: usize,
    pub eval_cases: usize,
}

impl Default for TrainerConfig {
    fn default() -> Self {
        TrainerConfig {
            variant: Variant::EditGrpo,
            group_size: 10,
            epsilon: 0.2,
            beta: 0.0,
            temperature: 1.0,
            learning_rate: 0.05,
            batch_cases: 32,
            steps: 300,
            max_len: 6,
            advantage_norm: None,
            length_norm: None,
            sft_epochs: 1,
            sft_learning_rate: 0.3,
            sft_batch_size: 8,
            seed: 0,
            threads: 1,
            trace_every: 50,
            checkpoint_every: 100,
            eval_cases: 500,
        }
    }
}

impl TrainerConfig {
    pub fn advantage_norm(&self) -> AdvantageNorm {
        self.advantage_norm
            .unwrap_or(self.variant.default_advantage_norm())
    }

    pub fn length_norm(&self) -> LengthNorm {
        self.length_norm
            .unwrap_or(self.variant.default_length_norm())
    }

    pub fn l_max(&self) -> usize {
        self.max_len + 1
    }

    fn norm(&self, len: usize) -> f64 {
        match self.length_norm() {
            LengthNorm::PerToken => 1.0 / len as f64,
            LengthNorm::Constant => 1.0 / self.l_max() as f64,
        }
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: &str| Err(Error::InvalidConfig(format!("trainer: {m}")));
        if self.group_size < 2 || !self.group_size.is_multiple_of(2) {
            return bad("group_size must be even and >= 2");
        }
        if self.epsilon.is_nan() || self.epsilon <= 0.0 {
            return bad("epsilon must be positive");
        }
        if self.beta.is_nan() || self.beta < 0.0 {
            return bad("beta must be >= 0");
        }
        if self.temperature.is_nan() || self.temperature <= 0.0 {
            return bad("temperature must be positive");
        }
        if !(self.learning_rate >= 0.0 && self.sft_learning_rate >= 0.0) {
            return bad("learning rates must be >= 0");
        }
        if self.batch_cases == 0 || self.sft_batch_size == 0 {
            return bad("batch sizes must be positive");
        }
        if self.max_len == 0 {
            return bad("max_len must be positive");
        }
        if self.threads == 0 {
            return bad("threads must be positive");
        }
        if self.eval_cases == 0 {
            return bad("eval_cases must be positive");
        }
        Ok(())
    }
}

/// Group-relative advantages. `MeanStd` falls back to `MeanOnly` when the
/// population std is below 1e-8.
pub fn grpo_advantages(rewards: &[f64], mode: AdvantageNorm) -> Vec<f64> {
    if rewards.windows(2).all(|w| w[0] == w[1]) {
        return vec![0.0; rewards.len()];
    }
    let n = rewards.len() as f64;
    let mean = rewards.iter().sum::<f64>() / n;
    let centered: Vec<f64> = rewards.iter().map(|r| r - mean).collect();
    match mode {
        AdvantageNorm::MeanOnly => centered,
        AdvantageNorm::MeanStd => {
            let std = (centered.iter().map(|c| c * c).sum::<f64>() / n).sqrt();
            if std < 1e-8 {
                centered
            } else {
                centered.iter().map(|c| c / std).collect()
            }
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct RolloutGroup {
    pub case: Case,
    pub trajectories: Vec<Trajectory>,
    pub rewards: Vec<RewardBreakdown>,
    pub advantages: Vec<f64>,
    pub edit_traces: Vec<Option<EditTrace>>,
}

fn mentions_of_tokens(tokens: &[usize], ontology: &Ontology) -> Vec<Mention> {
    tokens
        .iter()
        .filter(|&&t| t < ontology.vocab_size())
        .flat_map(|&t| ontology.template_mentions(t).iter().copied())
        .collect()
}

fn refs_of<'a>(ids: &[usize], ontology: &'a Ontology) -> Vec<SentenceRef<'a>> {
    ids.iter()
        .map(|&t| SentenceRef {
            text: &ontology.template(t).text,
            mentions: ontology.template_mentions(t),
        })
        .collect()
}

/// Everything `build_group` needs besides the case and its streams.
#[derive(Clone, Copy)]
pub struct GroupContext<'a> {
    pub ontology: &'a Ontology,
    pub trainer: &'a TrainerConfig,
    pub edit: &'a EditConfig,
    pub rewards: &'a RewardParams,
}

/// Builds the rollout group of one case. `stream_path` keys the rollout and
/// edit streams, e.g. `[step, slot]`.
pub fn build_group(
    params_old: &PolicyParams,
    case: &Case,
    ctx: GroupContext,
    stream_path: &[u64],
) -> Result<RolloutGroup> {
    let cfg = ctx.trainer;
    let o = ctx.ontology;
    let g = cfg.group_size;
    let n_sampled = if cfg.variant.is_edit() { g / 2 } else { g };
    let path = |t: u64, i: usize| {
        let mut p = vec![t];
        p.extend_from_slice(stream_path);
        p.push(i as u64);
        p
    };
    let mut trajectories = Vec::with_capacity(g);
    for i in 0..n_sampled {
        let mut r = rng::stream(cfg.seed, &path(tag::ROLLOUT, i));
        trajectories.push(params_old.sample_trajectory(
            case.case_id,
            &case.features,
            cfg.temperature,
            cfg.max_len,
            o,
            &mut r,
        )?);
    }
    let mut edit_traces: Vec<Option<EditTrace>> = vec![None; n_sampled];
    if cfg.variant.is_edit() {
        let y = refs_of(&case.reference_ids, o);
        for i in 0..n_sampled {
            let raw = &trajectories[i];
            let (text, trace) = if cfg.variant == Variant::EditGrpoPara {
                (case.reference_text.clone(), EditTrace::default())
            } else {
                let x = refs_of(raw.body(), o);
                let mut r = rng::stream(cfg.seed, &path(tag::EDIT, i));
                let cascade = run_cascade(&x, &y, ctx.edit, o, &mut r);
                (cascade.texts(&x, &y).join(" "), cascade.trace)
            };
            let tokens = encode_report(&text, o)?;
            let lp = params_old.sequence_logprob(&case.features, &tokens)?;
            trajectories.push(Trajectory {
                case_id: case.case_id,
                tokens,
                token_logprobs: lp.per_token,
                text,
                origin: TrajectoryOrigin::Edited,
            });
            edit_traces.push(Some(trace));
        }
    }
    let reference = mentions_of_tokens(&case.reference_ids, o);
    let rewards: Vec<RewardBreakdown> = trajectories
        .iter()
        .map(|t| {
            score_mentions(
                &mentions_of_tokens(&t.tokens, o),
                &reference,
                o,
                ctx.rewards,
            )
        })
        .collect();
    let composite: Vec<f64> = rewards.iter().map(|r| r.composite).collect();
    let advantages = grpo_advantages(&composite, cfg.advantage_norm());
    Ok(RolloutGroup {
        case: case.clone(),
        trajectories,
        rewards,
        advantages,
        edit_traces,
    })
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize)]
pub struct Diagnostics {
    pub mean_ratio: f64,
    pub clip_fraction: f64,
    pub kl_estimate: f64,
    pub surrogate_value: f64,
    pub tokens: usize,
}

#[derive(Clone, Debug, PartialEq)]
pub struct ObjectiveGrad {
    pub gradient: Vec<f64>,
    /// `surrogate_value - beta * kl_estimate`.
    pub objective: f64,
    pub diagnostics: Diagnostics,
}

/// Gradient of
/// `J = (1/G) Σ_i norm_i Σ_t min(r·A, clip(r)·A) − β·(1/G) Σ_i norm_i Σ_t k̂`
/// with respect to the weights of `params_new`.
pub fn clipped_objective_grad(
    params_new: &PolicyParams,
    params_old: &PolicyParams,
    params_ref: Option<&PolicyParams>,
    group: &RolloutGroup,
    cfg: &TrainerConfig,
) -> Result<ObjectiveGrad> {
    let g = group.trajectories.len() as f64;
    let same_old = params_new == params_old;
    let features = &group.case.features;
    let eps = cfg.epsilon;
    let mut gradient = vec![0.0; params_new.weights().len()];
    let mut ratio_sum = 0.0;
    let mut clipped = 0usize;
    let mut tokens = 0usize;
    let mut surrogate = 0.0;
    let mut kl = 0.0;
    for (traj, &adv) in group.trajectories.iter().zip(&group.advantages) {
        let norm = cfg.norm(traj.tokens.len());
        let lp_old = if same_old {
            None
        } else {
            Some(
                params_old
                    .sequence_logprob(features, &traj.tokens)?
                    .per_token,
            )
        };
        let lp_ref = match params_ref {
            Some(p) => Some(p.sequence_logprob(features, &traj.tokens)?.per_token),
            None => None,
        };
        params_new.accumulate_grad(features, &traj.tokens, &mut gradient, |t, lp_new| {
            let old = lp_old.as_ref().map_or(lp_new, |v| v[t]);
            let r = (lp_new - old).exp();
            let unclipped = r * adv;
            let clipped_term = r.clamp(1.0 - eps, 1.0 + eps) * adv;
            let active = unclipped <= clipped_term;
            surrogate += norm * unclipped.min(clipped_term) / g;
            ratio_sum += r;
            tokens += 1;
            if !active {
                clipped += 1;
            }
            let mut w = if active { norm * r * adv / g } else { 0.0 };
            if let Some(lr) = &lp_ref {
                let d = lr[t] - lp_new;
                kl += norm * (d.exp() - d - 1.0) / g;
                w -= cfg.beta * norm * (1.0 - d.exp()) / g;
            }
            w
        })?;
    }
    let diagnostics = Diagnostics {
        mean_ratio: ratio_sum / tokens as f64,
        clip_fraction: clipped as f64 / tokens as f64,
        kl_estimate: kl,
        surrogate_value: surrogate,
        tokens,
    };
    Ok(ObjectiveGrad {
        gradient,
        objective: surrogate - cfg.beta * kl,
        diagnostics,
    })
}

fn reference_tokens(case: &Case, end: usize) -> Vec<usize> {
    let mut t = case.reference_ids.clone();
    t.push(end);
    t
}

/// One pass of minibatch gradient ascent on the reference log-likelihood.
/// Returns the mean per-case negative log-likelihood seen during the pass.
pub fn sft_epoch<R: Rng + ?Sized>(
    params: &mut PolicyParams,
    corpus: &[Case],
    learning_rate: f64,
    batch_size: usize,
    rng: &mut R,
) -> Result<f64> {
    if corpus.is_empty() {
        return Err(Error::EmptyEvaluationSet);
    }
    let mut order: Vec<usize> = (0..corpus.len()).collect();
    order.shuffle(rng);
    let mut total_nll = 0.0;
    let mut grad = vec![0.0; params.weights().len()];
    for batch in order.chunks(batch_size.max(1)) {
        grad.iter_mut().for_each(|g| *g = 0.0);
        for &k in batch {
            let case = &corpus[k];
            let lps = params.accumulate_grad(
                &case.features,
                &reference_tokens(case, params.end()),
                &mut grad,
                |_, _| 1.0,
            )?;
            total_nll -= lps.iter().sum::<f64>();
        }
        if learning_rate != 0.0 {
            params.add_scaled(&grad, learning_rate / batch.len() as f64);
        }
    }
    Ok(total_nll / corpus.len() as f64)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CaseEval {
    pub case_id: u64,
    pub text: String,
    pub reference_text: String,
    pub reward: RewardBreakdown,
    pub no_finding: bool,
    pub abnormal_reference: bool,
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct EvalMetrics {
    pub n_cases: usize,
    pub composite: f64,
    pub radgraph_like: f64,
    pub rate_like: f64,
    pub chexbert_micro_14: f64,
    pub chexbert_micro_5: f64,
    pub chexbert_macro_14: f64,
    pub chexbert_macro_5: f64,
    /// Share of generated reports whose labels read as No Finding.
    pub no_finding_frac: f64,
    /// The same share restricted to cases with an abnormal reference.
    pub collapse_rate: f64,
    pub mean_len: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub metrics: EvalMetrics,
    pub per_case: Vec<CaseEval>,
}

impl EvalReport {
    pub fn composites(&self) -> Vec<f64> {
        self.per_case.iter().map(|c| c.reward.composite).collect()
    }
}

/// Scores given report bodies (template ids, no END) against the cases.
pub fn evaluate_outputs(
    outputs: &[Vec<usize>],
    cases: &[Case],
    ontology: &Ontology,
    rewards: &RewardParams,
) -> Result<EvalReport> {
    if cases.is_empty() {
        return Err(Error::EmptyEvaluationSet);
    }
    if outputs.len() != cases.len() {
        return Err(Error::ContractViolation("one output per case".into()));
    }
    let nf = ontology.label_index(FindingId::NO_FINDING);
    let mut counts = LabelCounts::default();
    let mut per_case = Vec::with_capacity(cases.len());
    let (mut len_sum, mut abnormal, mut collapsed) = (0usize, 0usize, 0usize);
    for (body, case) in outputs.iter().zip(cases) {
        let pred = mentions_of_tokens(body, ontology);
        let reference = mentions_of_tokens(&case.reference_ids, ontology);
        let pl = labels_of_mentions(&pred, ontology);
        let rl = labels_of_mentions(&reference, ontology);
        counts.add(&pl, &rl);
        let abnormal_reference = !rl[nf];
        if abnormal_reference {
            abnormal += 1;
            collapsed += pl[nf] as usize;
        }
        len_sum += body.len();
        per_case.push(CaseEval {
            case_id: case.case_id,
            text: ontology.render(body),
            reference_text: case.reference_text.clone(),
            reward: score_mentions(&pred, &reference, ontology, rewards),
            no_finding: pl[nf],
            abnormal_reference,
        });
    }
    let n = cases.len() as f64;
    let mean = |f: &dyn Fn(&CaseEval) -> f64| per_case.iter().map(f).sum::<f64>() / n;
    let f1 = |scope, avg| counts.scoped_f1(ontology, scope, avg, MacroEmpty::Skip);
    let metrics = EvalMetrics {
        n_cases: cases.len(),
        composite: mean(&|c| c.reward.composite),
        radgraph_like: mean(&|c| c.reward.radgraph_like),
        rate_like: mean(&|c| c.reward.rate_like),
        chexbert_micro_14: f1(LabelScope::All14, Averaging::Micro),
        chexbert_micro_5: f1(LabelScope::Subset5, Averaging::Micro),
        chexbert_macro_14: f1(LabelScope::All14, Averaging::Macro),
        chexbert_macro_5: f1(LabelScope::Subset5, Averaging::Macro),
        no_finding_frac: mean(&|c| c.no_finding as u8 as f64),
        collapse_rate: if abnormal == 0 {
            0.0
        } else {
            collapsed as f64 / abnormal as f64
        },
        mean_len: len_sum as f64 / n,
    };
    Ok(EvalReport { metrics, per_case })
}

/// Greedy decoding on every case, then [`evaluate_outputs`].
pub fn evaluate(
    params: &PolicyParams,
    cases: &[Case],
    ontology: &Ontology,
    max_len: usize,
    rewards: &RewardParams,
) -> Result<EvalReport> {
    let outputs = cases
        .iter()
        .map(|c| {
            params
                .greedy(c.case_id, &c.features, max_len, ontology)
                .map(|t| t.body().to_vec())
        })
        .collect::<Result<Vec<_>>>()?;
    evaluate_outputs(&outputs, cases, ontology, rewards)
}

/// One per-sample trace line.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct TraceRecord {
    pub step: usize,
    pub case_id: u64,
    pub origin: TrajectoryOrigin,
    pub text: String,
    pub reward: RewardBreakdown,
    pub advantage: f64,
    pub edit_trace: Option<EditTrace>,
}

#[derive(Clone, Debug)]
pub struct TrainOutcome {
    pub params: PolicyParams,
    pub sft_losses: Vec<f64>,
    pub metrics: Vec<MetricRow>,
    pub traces: Vec<TraceRecord>,
    pub checkpoints: Vec<(usize, PolicyParams)>,
    pub eval: EvalReport,
}

fn step_row(
    step: usize,
    variant: Variant,
    groups: &[RolloutGroup],
    diag: &[Diagnostics],
    ontology: &Ontology,
) -> MetricRow {
    let nf = ontology.label_index(FindingId::NO_FINDING);
    let mut n = 0usize;
    let mut sums = [0.0; 4];
    let (mut nf_count, mut len_sum) = (0usize, 0usize);
    let mut edits = [0usize; 5];
    for g in groups {
        for (t, r) in g.trajectories.iter().zip(&g.rewards) {
            if t.origin != TrajectoryOrigin::Sampled {
                continue;
            }
            n += 1;
            sums[0] += r.composite;
            sums[1] += r.radgraph_like;
            sums[2] += r.chexbert_micro_14;
            sums[3] += r.rate_like;
            nf_count +=
                labels_of_mentions(&mentions_of_tokens(&t.tokens, ontology), ontology)[nf] as usize;
            len_sum += t.tokens.len() - 1;
        }
        for tr in g.edit_traces.iter().flatten() {
            for (e, h) in edits.iter_mut().zip(tr.histogram()) {
                *e += h;
            }
        }
    }
    let tokens: usize = diag.iter().map(|d| d.tokens).sum();
    let clip = diag
        .iter()
        .map(|d| d.clip_fraction * d.tokens as f64)
        .sum::<f64>()
        / tokens.max(1) as f64;
    let kl = diag.iter().map(|d| d.kl_estimate).sum::<f64>() / diag.len().max(1) as f64;
    let nf64 = n.max(1) as f64;
    MetricRow {
        step,
        variant: variant.name().to_string(),
        mean_reward: sums[0] / nf64,
        radgraph_like: sums[1] / nf64,
        chexbert_micro14: sums[2] / nf64,
        rate_like: sums[3] / nf64,
        no_finding_frac: nf_count as f64 / nf64,
        clip_frac: clip,
        kl,
        edits,
        mean_len: len_sum as f64 / nf64,
    }
}

fn map_slots<T: Send, F>(threads: usize, n: usize, f: F) -> Result<Vec<T>>
where
    F: Fn(usize) -> Result<T> + Sync + Send,
{
    if threads <= 1 {
        (0..n).map(f).collect()
    } else {
        let pool = rayon::ThreadPoolBuilder::new()
            .num_threads(threads)
            .build()
            .map_err(|e| Error::InvalidConfig(format!("thread pool: {e}")))?;
        pool.install(|| (0..n).into_par_iter().map(f).collect())
    }
}

/// One RL update. Returns the groups and per-group diagnostics.
pub fn rl_step(
    params: &mut PolicyParams,
    params_ref: Option<&PolicyParams>,
    train_cases: &[Case],
    ctx: GroupContext,
    step: usize,
) -> Result<(Vec<RolloutGroup>, Vec<Diagnostics>)> {
    let cfg = ctx.trainer;
    let mut batch_rng = rng::stream(cfg.seed, &[tag::RL_BATCH, step as u64]);
    let batch: Vec<usize> = (0..cfg.batch_cases)
        .map(|_| batch_rng.random_range(0..train_cases.len()))
        .collect();
    let snapshot = &*params;
    let results = map_slots(cfg.threads, batch.len(), |slot| {
        let group = build_group(
            snapshot,
            &train_cases[batch[slot]],
            ctx,
            &[step as u64, slot as u64],
        )?;
        let og = clipped_objective_grad(snapshot, snapshot, params_ref, &group, cfg)?;
        Ok((group, og))
    })?;
    let mut total = vec![0.0; params.weights().len()];
    let mut groups = Vec::with_capacity(results.len());
    let mut diags = Vec::with_capacity(results.len());
    for (group, og) in results {
        for (t, g) in total.iter_mut().zip(&og.gradient) {
            *t += g;
        }
        groups.push(group);
        diags.push(og.diagnostics);
    }
    if cfg.learning_rate != 0.0 {
        params.add_scaled(&total, cfg.learning_rate / batch.len() as f64);
    }
    if params.weights().iter().any(|w| !w.is_finite()) {
        return Err(Error::Numeric {
            step,
            detail: "non-finite weights after update".into(),
        });
    }
    Ok((groups, diags))
}

/// Train and eval splits of the configured world.
pub fn corpus_splits(
    world: &WorldConfig,
    trainer: &TrainerConfig,
    ontology: &Ontology,
) -> Result<(Vec<Case>, Vec<Case>)> {
    let (train, mut eval) = split(make_corpus(world, ontology, world.n_cases)?);
    eval.truncate(trainer.eval_cases);
    if train.is_empty() || eval.is_empty() {
        return Err(Error::InvalidConfig(
            "world.n_cases too small for a train/eval split".into(),
        ));
    }
    Ok((train, eval))
}

/// Runs SFT and/or RL as configured, starting from `init` (zeros if absent).
pub fn train(
    run: &RunConfig,
    ontology: &Ontology,
    init: Option<PolicyParams>,
) -> Result<TrainOutcome> {
    run.validate()?;
    let cfg = &run.trainer;
    let (train_cases, eval_cases) = corpus_splits(&run.world, cfg, ontology)?;
    let mut params =
        init.unwrap_or_else(|| PolicyParams::for_ontology(ontology, run.world.feature_dim()));
    if params.vocab_size() != ontology.vocab_size()
        || params.feature_dim() != run.world.feature_dim()
    {
        return Err(Error::ContractViolation(
            "checkpoint shape does not match the world".into(),
        ));
    }
    let rewards = run.effective_rewards();
    let ctx = GroupContext {
        ontology,
        trainer: cfg,
        edit: &run.edit,
        rewards: &rewards,
    };
    let mut sft_losses = Vec::new();
    let mut metrics = Vec::new();
    for epoch in 0..cfg.sft_epochs {
        let mut r = rng::stream(cfg.seed, &[tag::SFT, epoch as u64]);
        sft_losses.push(sft_epoch(
            &mut params,
            &train_cases,
            cfg.sft_learning_rate,
            cfg.sft_batch_size,
            &mut r,
        )?);
        if cfg.variant == Variant::Sft {
            let probe = &train_cases[..cfg.batch_cases.min(train_cases.len())];
            let ev = evaluate(&params, probe, ontology, cfg.max_len, &rewards)?;
            metrics.push(MetricRow {
                step: epoch + 1,
                variant: cfg.variant.name().to_string(),
                mean_reward: ev.metrics.composite,
                radgraph_like: ev.metrics.radgraph_like,
                chexbert_micro14: ev
                    .per_case
                    .iter()
                    .map(|c| c.reward.chexbert_micro_14)
                    .sum::<f64>()
                    / probe.len() as f64,
                rate_like: ev.metrics.rate_like,
                no_finding_frac: ev.metrics.no_finding_frac,
                clip_frac: 0.0,
                kl: 0.0,
                edits: [0; 5],
                mean_len: ev.metrics.mean_len,
            });
        }
    }
    let params_ref = params.clone();
    let mut traces = Vec::new();
    let mut checkpoints = vec![(0, params.clone())];
    let rl_steps = if cfg.variant == Variant::Sft {
        0
    } else {
        cfg.steps
    };
    for step in 1..=rl_steps {
        let reference = (cfg.beta > 0.0).then_some(&params_ref);
        let (groups, diags) = rl_step(&mut params, reference, &train_cases, ctx, step)?;
        metrics.push(step_row(step, cfg.variant, &groups, &diags, ontology));
        if cfg.trace_every > 0 && step % cfg.trace_every == 0 {
            for g in &groups {
                for (k, t) in g.trajectories.iter().enumerate() {
                    traces.push(TraceRecord {
                        step,
                        case_id: t.case_id,
                        origin: t.origin,
                        text: t.text.clone(),
                        reward: g.rewards[k].clone(),
                        advantage: g.advantages[k],
                        edit_trace: g.edit_traces[k].clone(),
                    });
                }
            }
        }
        if step == rl_steps || (cfg.checkpoint_every > 0 && step % cfg.checkpoint_every == 0) {
            checkpoints.push((step, params.clone()));
        }
    }
    let eval = evaluate(&params, &eval_cases, ontology, cfg.max_len, &rewards)?;
    Ok(TrainOutcome {
        params,
        sft_losses,
        metrics,
        traces,
        checkpoints,
        eval,
    })
}
