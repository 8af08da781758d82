// Central finite-difference probes of the policy and surrogate gradients.

use editgrpo_core::policy::PolicyParams;
use editgrpo_core::rng;
use editgrpo_core::trainer::{build_group, clipped_objective_grad, GroupContext, RolloutGroup};
use editgrpo_core::world::{sample_case, Case, WorldConfig};
use editgrpo_core::{EditConfig, Ontology, RewardParams, TrainerConfig, Variant};
use rand::seq::IndexedRandom;
use rand::Rng;
use rand_distr::{Distribution, Normal};

const H: f64 = 1e-5;

pub fn random_params(o: &Ontology, scale: f64, r: &mut rng::StreamRng) -> PolicyParams {
    let mut p = PolicyParams::for_ontology(o, 15);
    let n = Normal::new(0.0, scale).unwrap();
    for w in p.weights_mut() {
        *w = n.sample(r);
    }
    p
}

fn random_tokens(p: &PolicyParams, r: &mut rng::StreamRng) -> Vec<usize> {
    let len = r.random_range(0..=6);
    let mut t: Vec<usize> = (0..len)
        .map(|_| r.random_range(0..p.vocab_size()))
        .collect();
    if len > 2 && r.random_bool(0.5) {
        t[len - 1] = t[0];
    }
    t.push(p.end());
    t
}

pub fn rel_err(a: &[f64], b: &[f64]) -> f64 {
    let diff = a
        .iter()
        .zip(b)
        .map(|(x, y)| (x - y).abs())
        .fold(0.0, f64::max);
    let scale = a.iter().chain(b).map(|x| x.abs()).fold(0.0, f64::max);
    if scale == 0.0 {
        diff
    } else {
        diff / scale
    }
}

/// Central differences at `coords`, paired with the analytic entries there.
fn central_diff(p: &PolicyParams, coords: &[usize], f: impl Fn(&PolicyParams) -> f64) -> Vec<f64> {
    let mut q = p.clone();
    coords
        .iter()
        .map(|&k| {
            let w = q.weights()[k];
            q.weights_mut()[k] = w + H;
            let up = f(&q);
            q.weights_mut()[k] = w - H;
            let down = f(&q);
            q.weights_mut()[k] = w;
            (up - down) / (2.0 * H)
        })
        .collect()
}

/// Up to 48 coordinates with a nonzero analytic gradient plus 16 arbitrary ones.
fn probe_coords(analytic: &[f64], r: &mut rng::StreamRng) -> Vec<usize> {
    let live: Vec<usize> = (0..analytic.len())
        .filter(|&k| analytic[k] != 0.0)
        .collect();
    let mut out: Vec<usize> = live.choose_multiple(r, 48).copied().collect();
    out.extend((0..16).map(|_| r.random_range(0..analytic.len())));
    out
}

fn pick(v: &[f64], coords: &[usize]) -> Vec<f64> {
    coords.iter().map(|&k| v[k]).collect()
}

/// Worst relative error of `grad_logprob` over `probes` random probes.
pub fn grad_logprob_worst(o: &Ontology, probes: u64) -> f64 {
    let mut worst: f64 = 0.0;
    for k in 0..probes {
        let mut r = rng::stream(k, &[1]);
        let p = random_params(o, 0.5, &mut r);
        let features: Vec<f64> = (0..15).map(|_| r.random_range(-1.5..1.5)).collect();
        let tokens = random_tokens(&p, &mut r);
        let analytic = p.grad_logprob(&features, &tokens).unwrap();
        let coords = probe_coords(&analytic, &mut r);
        let numeric = central_diff(&p, &coords, |q| {
            q.sequence_logprob(&features, &tokens).unwrap().total
        });
        worst = worst.max(rel_err(&pick(&analytic, &coords), &numeric));
    }
    worst
}

pub fn probe_group(
    o: &Ontology,
    old: &PolicyParams,
    k: u64,
    variant: Variant,
) -> (Case, RolloutGroup, TrainerConfig) {
    let case = sample_case(&WorldConfig::default(), o, k);
    let cfg = TrainerConfig {
        variant,
        beta: 0.1,
        ..TrainerConfig::default()
    };
    let ctx = GroupContext {
        ontology: o,
        trainer: &cfg,
        edit: &EditConfig::default(),
        rewards: &RewardParams::default(),
    };
    let mut group = build_group(old, &case, ctx, &[k]).unwrap();
    let mut r = rng::stream(k, &[3]);
    for a in &mut group.advantages {
        *a = r.random_range(-2.0..2.0);
    }
    (case, group, cfg)
}

/// Worst relative error of the clipped surrogate gradient over `probes`
/// probes, and how many probes mixed clipped with unclipped tokens.
pub fn clipped_objective_worst(o: &Ontology, probes: u64) -> (f64, usize) {
    let mut worst: f64 = 0.0;
    let mut clipped_seen = 0;
    for k in 0..probes {
        let mut r = rng::stream(k, &[2]);
        let old = random_params(o, 0.3, &mut r);
        let reference = random_params(o, 0.3, &mut r);
        let mut new = old.clone();
        let n = Normal::new(0.0, 0.15).unwrap();
        for w in new.weights_mut() {
            *w += n.sample(&mut r);
        }
        let variant = [Variant::Grpo, Variant::DrGrpo, Variant::EditGrpo][k as usize % 3];
        let (_, group, cfg) = probe_group(o, &old, k, variant);
        let og = clipped_objective_grad(&new, &old, Some(&reference), &group, &cfg).unwrap();
        if og.diagnostics.clip_fraction > 0.0 && og.diagnostics.clip_fraction < 1.0 {
            clipped_seen += 1;
        }
        let coords = probe_coords(&og.gradient, &mut r);
        let numeric = central_diff(&new, &coords, |q| {
            clipped_objective_grad(q, &old, Some(&reference), &group, &cfg)
                .unwrap()
                .objective
        });
        worst = worst.max(rel_err(&pick(&og.gradient, &coords), &numeric));
    }
    (worst, clipped_seen)
}
