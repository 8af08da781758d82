//! Seeded edit instances for property checks, the tau sweep and benches.
//!
//! Sentences are either ontology templates or composed from lexicon forms
//! ("There is X and Y.", "No X or Y.", "There is X but no Y."), which reaches
//! synonym surfaces and mixed-presence sentences that no template has.

use rand::seq::IndexedRandom;
use rand::Rng;

use crate::extract::sentence_mentions;
use crate::ontology::{FindingId, LexemeId, Ontology, Presence};
use crate::rng;

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct EditInstance {
    pub x: String,
    pub y: String,
}

fn form(o: &Ontology, l: LexemeId) -> &str {
    &o.lexeme(l).forms[0]
}

fn abnormal_lexemes(o: &Ontology) -> Vec<LexemeId> {
    (0..o.lexicon().len())
        .map(|i| LexemeId(i as u16))
        .filter(|&l| o.lexeme(l).finding.is_abnormal())
        .collect()
}

fn capitalize(s: &str) -> String {
    let mut c = s.chars();
    match c.next() {
        Some(f) => f.to_uppercase().chain(c).collect(),
        None => String::new(),
    }
}

fn composed<R: Rng + ?Sized>(o: &Ontology, lexemes: &[LexemeId], rng: &mut R) -> String {
    let a = *lexemes.choose(rng).expect("lexicon has abnormal entries");
    let b = *lexemes.choose(rng).expect("lexicon has abnormal entries");
    match rng.random_range(0..5) {
        0 => format!("There is {}.", form(o, a)),
        1 => format!("No {}.", form(o, a)),
        2 => format!("There is {} and {}.", form(o, a), form(o, b)),
        3 => format!("No {} or {}.", form(o, a), form(o, b)),
        _ => format!("There is {} but no {}.", form(o, a), form(o, b)),
    }
}

fn random_sentence<R: Rng + ?Sized>(o: &Ontology, lexemes: &[LexemeId], rng: &mut R) -> String {
    if rng.random_bool(0.6) {
        o.templates()
            .choose(rng)
            .expect("ontology has templates")
            .text
            .clone()
    } else {
        capitalize(&composed(o, lexemes, rng))
    }
}

/// A report of up to `max_sentences` sentences and `max_entities` mentions.
/// With `consistent`, no finding is mentioned under both presences.
pub fn random_report<R: Rng + ?Sized>(
    o: &Ontology,
    rng: &mut R,
    min_sentences: usize,
    max_sentences: usize,
    max_entities: usize,
    consistent: bool,
) -> Vec<String> {
    let lexemes = abnormal_lexemes(o);
    let n = rng.random_range(min_sentences..=max_sentences);
    let mut out: Vec<String> = Vec::with_capacity(n);
    let mut seen: Vec<(FindingId, Presence)> = Vec::new();
    let mut entities = 0;
    let mut attempts = 0;
    while out.len() < n && attempts < 200 {
        attempts += 1;
        let s = random_sentence(o, &lexemes, rng);
        let ms = sentence_mentions(&s, o);
        if entities + ms.len() > max_entities {
            continue;
        }
        if consistent {
            let mut next = seen.clone();
            next.extend(ms.iter().map(|m| (m.finding, m.presence)));
            if next
                .iter()
                .any(|&(f, p)| next.iter().any(|&(g, q)| f == g && p != q))
            {
                continue;
            }
            seen = next;
        }
        entities += ms.len();
        out.push(s);
    }
    out
}

/// Instance `index` of the stream seeded by `seed`: `x` is unconstrained,
/// `y` is a consistent non-empty reference.
pub fn random_instance(
    o: &Ontology,
    seed: u64,
    index: u64,
    max_sentences: usize,
    max_entities: usize,
) -> EditInstance {
    let mut r = rng::stream(seed, &[rng::tag::PROBE, index]);
    let y = random_report(o, &mut r, 1, max_sentences, max_entities, true);
    let x = random_report(o, &mut r, 0, max_sentences, max_entities, false);
    EditInstance {
        x: x.join(" "),
        y: y.join(" "),
    }
}

/// `n` instances where `x` is `y` with one or two sentences perturbed toward
/// a synonym under the opposite presence (cosine 0.9), a related finding
/// (0.7) or an unrelated one (0), so the outcome of the replacement test
/// depends on tau.
pub fn tau_probe_set(o: &Ontology, n: usize, seed: u64) -> Vec<EditInstance> {
    let lexemes = abnormal_lexemes(o);
    (0..n as u64)
        .map(|k| {
            let mut r = rng::stream(seed, &[rng::tag::PROBE, u64::MAX, k]);
            let y = random_report(o, &mut r, 1, 4, 6, true);
            let mut x = y.clone();
            let edits = r.random_range(1..=2);
            for _ in 0..edits {
                let i = r.random_range(0..x.len());
                let Some(m) = sentence_mentions(&x[i], o).first().copied() else {
                    continue;
                };
                let src = m.lexeme;
                let pick = |pred: &dyn Fn(LexemeId) -> bool, r: &mut rng::StreamRng| {
                    let c: Vec<LexemeId> = lexemes.iter().copied().filter(|&l| pred(l)).collect();
                    c.choose(r).copied()
                };
                let flip = |p: Presence| {
                    if p == Presence::Present {
                        Presence::Absent
                    } else {
                        Presence::Present
                    }
                };
                let (lex, presence) = match r.random_range(0..3) {
                    0 => match pick(&|l| l != src && o.similarity(l, src) >= 0.85, &mut r) {
                        Some(l) => (l, flip(m.presence)),
                        None => (src, m.presence),
                    },
                    1 => match pick(&|l| (0.5..0.85).contains(&o.similarity(l, src)), &mut r) {
                        Some(l) => (l, m.presence),
                        None => (src, m.presence),
                    },
                    _ => (
                        pick(&|l| o.similarity(l, src) == 0.0, &mut r)
                            .expect("some lexeme is unrelated"),
                        m.presence,
                    ),
                };
                x[i] = match presence {
                    Presence::Present => format!("There is {}.", form(o, lex)),
                    Presence::Absent => format!("No {}.", form(o, lex)),
                };
            }
            EditInstance {
                x: x.join(" "),
                y: y.join(" "),
            }
        })
        .collect()
}
