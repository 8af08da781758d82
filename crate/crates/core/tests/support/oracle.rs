// Brute-force edit cascade: plain string vectors, entities re-extracted from
// text at every scan, every rule evaluated by nested loops over (i, j, e, e').

#![allow(clippy::needless_range_loop)]

use editgrpo_core::extract::{extract_sentence_entities, Entity};
use editgrpo_core::ontology::{segment_report, Ontology};
use editgrpo_core::{EditConfig, EditRule, EditStep, EditTrace};
use rand::Rng;

fn cos(o: &Ontology, cfg: &EditConfig, a: &Entity, b: &Entity) -> f64 {
    cfg.mode.similarity(o, a.lexeme, b.lexeme)
}

fn near(o: &Ontology, cfg: &EditConfig, a: &Entity, b: &Entity) -> bool {
    a.surface == b.surface || cos(o, cfg, a, b) > cfg.tau
}

fn step<R: Rng + ?Sized>(
    x: &mut Vec<String>,
    y: &[String],
    cfg: &EditConfig,
    o: &Ontology,
    rng: &mut R,
) -> Option<EditStep> {
    let ex: Vec<Vec<Entity>> = x.iter().map(|s| extract_sentence_entities(s, o)).collect();
    let ey: Vec<Vec<Entity>> = y.iter().map(|s| extract_sentence_entities(s, o)).collect();

    let mut conflicts = Vec::new();
    for i in 0..x.len() {
        for j in 0..y.len() {
            let mut hit = false;
            for e in &ex[i] {
                for f in &ey[j] {
                    if e.surface == f.surface && e.presence != f.presence {
                        hit = true;
                    }
                }
            }
            if hit {
                conflicts.push((i, j));
            }
        }
    }
    if !conflicts.is_empty() {
        let (i, j) = conflicts[rng.random_range(0..conflicts.len())];
        let removed = std::mem::replace(&mut x[i], y[j].clone());
        return Some(EditStep {
            rule: EditRule::MislabelReplace,
            sentence_index: i,
            inserted_text: Some(y[j].clone()),
            removed_text: Some(removed),
        });
    }

    // E[y_j] as (universe entity, witness entity) pairs over universe = x ∪ y
    let universe: Vec<&Entity> = ex.iter().chain(ey.iter()).flatten().collect();
    let hood: Vec<Vec<(&Entity, &Entity)>> = ey
        .iter()
        .map(|ys| {
            let mut v = Vec::new();
            for u in &universe {
                for w in ys {
                    if near(o, cfg, u, w) {
                        v.push((*u, w));
                    }
                }
            }
            v
        })
        .collect();
    let is_spurious = |e: &Entity| {
        !hood.iter().any(|h| {
            h.iter()
                .any(|(u, w)| u.surface == e.surface && w.presence == e.presence)
        })
    };
    let fp: Vec<Vec<&Entity>> = ex
        .iter()
        .map(|es| {
            let mut v: Vec<&Entity> = Vec::new();
            for e in es {
                if is_spurious(e)
                    && !v
                        .iter()
                        .any(|d| d.surface == e.surface && d.presence == e.presence)
                {
                    v.push(e);
                }
            }
            v
        })
        .collect();

    for i in 0..x.len() {
        if fp[i].is_empty() {
            continue;
        }
        let mut best_j = None;
        let mut best = f64::NEG_INFINITY;
        for j in 0..y.len() {
            if y[j] == x[i] {
                continue;
            }
            let mut total = 0.0;
            for e in &fp[i] {
                let mut m = f64::NEG_INFINITY;
                for (u, _) in &hood[j] {
                    m = m.max(cos(o, cfg, e, u));
                }
                total += if m == f64::NEG_INFINITY { 0.0 } else { m };
            }
            let score = total / fp[i].len() as f64;
            if score > best {
                best = score;
                best_j = Some(j);
            }
        }
        if let Some(j) = best_j {
            if best >= cfg.tau {
                let removed = std::mem::replace(&mut x[i], y[j].clone());
                return Some(EditStep {
                    rule: EditRule::FpReplace,
                    sentence_index: i,
                    inserted_text: Some(y[j].clone()),
                    removed_text: Some(removed),
                });
            }
        }
    }
    if let Some(i) = (0..x.len()).find(|&i| !fp[i].is_empty()) {
        let removed = x.remove(i);
        return Some(EditStep {
            rule: EditRule::FpDelete,
            sentence_index: i,
            inserted_text: None,
            removed_text: Some(removed),
        });
    }

    for j in 0..y.len() {
        for f in &ey[j] {
            let covered = ex
                .iter()
                .flatten()
                .any(|e| e.finding == f.finding && e.presence == f.presence);
            if !covered {
                x.push(y[j].clone());
                return Some(EditStep {
                    rule: EditRule::FnAppend,
                    sentence_index: x.len() - 1,
                    inserted_text: Some(y[j].clone()),
                    removed_text: None,
                });
            }
        }
    }
    None
}

/// Returns the edited sentences and trace.
pub fn brute_force_edit<R: Rng + ?Sized>(
    x_text: &str,
    y_text: &str,
    cfg: &EditConfig,
    o: &Ontology,
    rng: &mut R,
) -> (Vec<String>, EditTrace) {
    let mut x = segment_report(x_text);
    let y = segment_report(y_text);
    let mut trace = EditTrace::default();
    while cfg.max_edits.is_none_or(|m| trace.steps.len() < m) && trace.steps.len() < 500 {
        match step(&mut x, &y, cfg, o, rng) {
            Some(s) => trace.steps.push(s),
            None => break,
        }
    }
    if x.is_empty() && !y.is_empty() {
        x.push(y[0].clone());
        trace.steps.push(EditStep {
            rule: EditRule::EmptyReplace,
            sentence_index: 0,
            inserted_text: Some(y[0].clone()),
            removed_text: None,
        });
    }
    (x, trace)
}
