//! Post-rollout sentence-level editing.
//!
//! A sampled report `x` is moved toward a reference `y` one rule at a time,
//! re-extracting after every step, in priority order:
//!
//! - (a) a sentence of `x` shares an entity surface with a sentence of `y`
//!   under the opposite presence label: one such (x_i, y_j) conflict is drawn
//!   uniformly at random and x_i becomes y_j;
//! - (b) the lowest-index sentence with spurious entities whose best
//!   replacement y_{s*} scores at least `tau` is replaced by it;
//! - (c) otherwise the lowest-index sentence with spurious entities is deleted;
//! - (d) otherwise the first reference sentence carrying a missing
//!   (finding, presence) pair is appended;
//! - (e) when nothing applies and the result is empty, the first unused
//!   reference sentence is substituted.
//!
//! An entity is spurious when no reference entity with the same presence is
//! within its neighborhood. Neighborhood membership is identity of surface or
//! cosine strictly above `tau`; the (b) acceptance test is `>= tau`.

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::extract::{sentence_mentions, ExtractionMode, Mention};
use crate::ontology::{segment_report, FindingId, LexemeId, Ontology, Presence};
use crate::rng;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EditConfig {
    pub tau: f64,
    /// `None` edits until no rule applies.
    pub max_edits: Option<usize>,
    pub mode: ExtractionMode,
    pub rng_seed: u64,
}

impl Default for EditConfig {
    fn default() -> Self {
        EditConfig {
            tau: 0.6,
            max_edits: None,
            mode: ExtractionMode::EmbeddingMatch,
            rng_seed: 0,
        }
    }
}

impl EditConfig {
    pub fn validate(&self) -> crate::Result<()> {
        if !(0.0..=1.0).contains(&self.tau) {
            return Err(crate::Error::InvalidConfig(format!(
                "tau {} outside [0, 1]",
                self.tau
            )));
        }
        if self.max_edits == Some(0) {
            return Err(crate::Error::InvalidConfig(
                "max_edits must be positive".into(),
            ));
        }
        Ok(())
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum EditRule {
    #[serde(rename = "A_MislabelReplace")]
    MislabelReplace,
    #[serde(rename = "B_FpReplace")]
    FpReplace,
    #[serde(rename = "C_FpDelete")]
    FpDelete,
    #[serde(rename = "D_FnAppend")]
    FnAppend,
    #[serde(rename = "E_EmptyReplace")]
    EmptyReplace,
}

impl EditRule {
    pub const ALL: [EditRule; 5] = [
        EditRule::MislabelReplace,
        EditRule::FpReplace,
        EditRule::FpDelete,
        EditRule::FnAppend,
        EditRule::EmptyReplace,
    ];

    pub fn slot(self) -> usize {
        self as usize
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct EditStep {
    pub rule: EditRule,
    pub sentence_index: usize,
    pub inserted_text: Option<String>,
    pub removed_text: Option<String>,
}

#[derive(Clone, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct EditTrace {
    pub steps: Vec<EditStep>,
}

impl EditTrace {
    pub fn is_empty(&self) -> bool {
        self.steps.is_empty()
    }

    /// Step counts per rule, in (a)..(e) order.
    pub fn histogram(&self) -> [usize; 5] {
        let mut h = [0; 5];
        for s in &self.steps {
            h[s.rule.slot()] += 1;
        }
        h
    }

    /// Re-applies the recorded steps to the original sentences.
    pub fn replay<S: AsRef<str>>(&self, x: &[S]) -> Vec<String> {
        let mut out: Vec<String> = x.iter().map(|s| s.as_ref().to_string()).collect();
        for s in &self.steps {
            let inserted = || s.inserted_text.clone().unwrap_or_default();
            match s.rule {
                EditRule::MislabelReplace | EditRule::FpReplace => {
                    out[s.sentence_index] = inserted()
                }
                EditRule::FpDelete => {
                    out.remove(s.sentence_index);
                }
                EditRule::FnAppend => out.push(inserted()),
                EditRule::EmptyReplace => out.insert(s.sentence_index, inserted()),
            }
        }
        out
    }
}

/// A sentence with its extracted mentions.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct AnnotatedSentence {
    pub text: String,
    pub mentions: Vec<Mention>,
}

impl AnnotatedSentence {
    pub fn new(text: &str, ontology: &Ontology) -> Self {
        AnnotatedSentence {
            text: text.to_string(),
            mentions: sentence_mentions(text, ontology),
        }
    }

    pub fn as_ref(&self) -> SentenceRef<'_> {
        SentenceRef {
            text: &self.text,
            mentions: &self.mentions,
        }
    }
}

pub fn annotate(text: &str, ontology: &Ontology) -> Vec<AnnotatedSentence> {
    segment_report(text)
        .iter()
        .map(|s| AnnotatedSentence::new(s, ontology))
        .collect()
}

/// Borrowed view of an annotated sentence.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct SentenceRef<'a> {
    pub text: &'a str,
    pub mentions: &'a [Mention],
}

/// One member of a reference neighborhood E[y_j].
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct NeighborMember {
    pub lexeme: LexemeId,
    /// Presence of the reference entity that admitted this lexeme.
    pub witness: Presence,
}

/// E[y_j] for every reference sentence j.
#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct NeighborhoodIndex {
    pub sentences: Vec<Vec<NeighborMember>>,
}

impl NeighborhoodIndex {
    pub fn contains(&self, j: usize, lexeme: LexemeId) -> bool {
        self.sentences[j].iter().any(|m| m.lexeme == lexeme)
    }
}

struct Sim<'a> {
    ontology: &'a Ontology,
    mode: ExtractionMode,
    tau: f64,
}

impl Sim<'_> {
    #[inline]
    fn cos(&self, a: LexemeId, b: LexemeId) -> f64 {
        self.mode.similarity(self.ontology, a, b)
    }

    #[inline]
    fn near(&self, a: LexemeId, b: LexemeId) -> bool {
        a == b || self.cos(a, b) > self.tau
    }

    fn supported(&self, m: &Mention, y: &[SentenceRef]) -> bool {
        y.iter()
            .flat_map(|s| s.mentions)
            .any(|r| r.presence == m.presence && self.near(m.lexeme, r.lexeme))
    }

    fn spurious(&self, sentence: &SentenceRef, y: &[SentenceRef]) -> Vec<Mention> {
        let mut out: Vec<Mention> = Vec::new();
        for m in sentence.mentions {
            if !self.supported(m, y)
                && !out
                    .iter()
                    .any(|o| o.lexeme == m.lexeme && o.presence == m.presence)
            {
                out.push(*m);
            }
        }
        out
    }
}

/// E[y_j] over `universe`: every universe lexeme that is identical to, or
/// cosine-above-`tau` from, an entity of y_j, tagged with that entity's presence.
pub fn reference_neighborhoods(
    y: &[SentenceRef],
    universe: &[Mention],
    cfg: &EditConfig,
    ontology: &Ontology,
) -> NeighborhoodIndex {
    let sim = Sim {
        ontology,
        mode: cfg.mode,
        tau: cfg.tau,
    };
    let sentences = y
        .iter()
        .map(|s| {
            let mut members: Vec<NeighborMember> = Vec::new();
            for u in universe {
                for r in s.mentions {
                    if sim.near(u.lexeme, r.lexeme) {
                        let m = NeighborMember {
                            lexeme: u.lexeme,
                            witness: r.presence,
                        };
                        if !members.contains(&m) {
                            members.push(m);
                        }
                    }
                }
            }
            members
        })
        .collect();
    NeighborhoodIndex { sentences }
}

/// Entities of `x` that sit in no neighborhood under a matching presence label.
pub fn spurious_set(x_entities: &[Mention], index: &NeighborhoodIndex) -> Vec<Mention> {
    x_entities
        .iter()
        .filter(|e| {
            !index.sentences.iter().any(|members| {
                members
                    .iter()
                    .any(|m| m.lexeme == e.lexeme && m.witness == e.presence)
            })
        })
        .copied()
        .collect()
}

/// The lexicographic termination potential: (sentences in surface conflict,
/// sentences with spurious entities, missing reference (finding, presence) pairs).
pub fn potential(
    x: &[SentenceRef],
    y: &[SentenceRef],
    cfg: &EditConfig,
    ontology: &Ontology,
) -> (usize, usize, usize) {
    let sim = Sim {
        ontology,
        mode: cfg.mode,
        tau: cfg.tau,
    };
    let conflicts = x
        .iter()
        .filter(|s| y.iter().any(|r| in_conflict(s, r)))
        .count();
    let spurious = x.iter().filter(|s| !sim.spurious(s, y).is_empty()).count();
    let missing = missing_pairs(x, y).len();
    (conflicts, spurious, missing)
}

fn in_conflict(a: &SentenceRef, b: &SentenceRef) -> bool {
    a.mentions.iter().any(|m| {
        b.mentions
            .iter()
            .any(|r| r.lexeme == m.lexeme && r.presence != m.presence)
    })
}

fn missing_pairs(x: &[SentenceRef], y: &[SentenceRef]) -> Vec<(FindingId, Presence)> {
    let mut out = Vec::new();
    for r in y.iter().flat_map(|s| s.mentions) {
        let pair = (r.finding, r.presence);
        let covered = x
            .iter()
            .flat_map(|s| s.mentions)
            .any(|m| (m.finding, m.presence) == pair);
        if !covered && !out.contains(&pair) {
            out.push(pair);
        }
    }
    out
}

/// A single rule application, indices into the current `x` and into `y`.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
enum Action {
    Replace { rule: EditRule, i: usize, j: usize },
    Delete { i: usize },
    Append { j: usize },
}

fn next_action<R: Rng + ?Sized>(
    x: &[SentenceRef],
    y: &[SentenceRef],
    sim: &Sim,
    rng: &mut R,
) -> Option<Action> {
    // (a) identical surface, conflicting presence
    let conflicts: Vec<(usize, usize)> = x
        .iter()
        .enumerate()
        .flat_map(|(i, s)| {
            y.iter()
                .enumerate()
                .filter(move |(_, r)| in_conflict(s, r))
                .map(move |(j, _)| (i, j))
        })
        .collect();
    if !conflicts.is_empty() {
        let (i, j) = conflicts[rng.random_range(0..conflicts.len())];
        return Some(Action::Replace {
            rule: EditRule::MislabelReplace,
            i,
            j,
        });
    }

    let spurious: Vec<(usize, Vec<Mention>)> = x
        .iter()
        .enumerate()
        .map(|(i, s)| (i, sim.spurious(s, y)))
        .filter(|(_, fp)| !fp.is_empty())
        .collect();

    if !spurious.is_empty() {
        // (b) best replacement by mean max-cosine into E[y_j]
        let mut universe: Vec<LexemeId> = Vec::new();
        for m in x.iter().chain(y).flat_map(|s| s.mentions) {
            if !universe.contains(&m.lexeme) {
                universe.push(m.lexeme);
            }
        }
        let neighborhoods: Vec<Vec<LexemeId>> = y
            .iter()
            .map(|s| {
                universe
                    .iter()
                    .copied()
                    .filter(|&u| s.mentions.iter().any(|r| sim.near(u, r.lexeme)))
                    .collect()
            })
            .collect();
        for (i, fp) in &spurious {
            let mut best: Option<(usize, f64)> = None;
            for (j, r) in y.iter().enumerate() {
                if r.text == x[*i].text {
                    continue;
                }
                let total: f64 = fp
                    .iter()
                    .map(|e| {
                        neighborhoods[j]
                            .iter()
                            .map(|&u| sim.cos(e.lexeme, u))
                            .fold(None, |acc: Option<f64>, c| {
                                Some(acc.map_or(c, |a| a.max(c)))
                            })
                            .unwrap_or(0.0)
                    })
                    .sum();
                let score = total / fp.len() as f64;
                if best.is_none_or(|(_, b)| score > b) {
                    best = Some((j, score));
                }
            }
            if let Some((j, score)) = best {
                if score >= sim.tau {
                    return Some(Action::Replace {
                        rule: EditRule::FpReplace,
                        i: *i,
                        j,
                    });
                }
            }
        }
        // (c)
        return Some(Action::Delete { i: spurious[0].0 });
    }

    // (d)
    let missing = missing_pairs(x, y);
    if !missing.is_empty() {
        let j = y
            .iter()
            .position(|s| {
                s.mentions
                    .iter()
                    .any(|m| missing.contains(&(m.finding, m.presence)))
            })
            .expect("a missing pair comes from some reference sentence");
        return Some(Action::Append { j });
    }
    None
}

/// Pool-index form of an edited report: indices below `x_len` name original
/// sentences of `x`, the rest name `y[idx - x_len]`.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Cascade {
    pub sentences: Vec<usize>,
    pub trace: EditTrace,
    pub x_len: usize,
}

impl Cascade {
    pub fn texts<'a>(&self, x: &[SentenceRef<'a>], y: &[SentenceRef<'a>]) -> Vec<&'a str> {
        self.sentences
            .iter()
            .map(|&p| {
                if p < self.x_len {
                    x[p].text
                } else {
                    y[p - self.x_len].text
                }
            })
            .collect()
    }
}

/// Runs the full cascade over borrowed sentences; the allocation-light path
/// used during training.
pub fn run_cascade<R: Rng + ?Sized>(
    x: &[SentenceRef],
    y: &[SentenceRef],
    cfg: &EditConfig,
    ontology: &Ontology,
    rng: &mut R,
) -> Cascade {
    let sim = Sim {
        ontology,
        mode: cfg.mode,
        tau: cfg.tau,
    };
    let x_len = x.len();
    let resolve = |p: usize| if p < x_len { x[p] } else { y[p - x_len] };
    let mut pool: Vec<usize> = (0..x_len).collect();
    let mut trace = EditTrace::default();
    let budget = cfg.max_edits.unwrap_or(usize::MAX);
    // a consistent reference needs at most |x| + |y mentions| steps
    let guard = 2 * (x_len + y.len() + y.iter().map(|s| s.mentions.len()).sum::<usize>()) + 4;
    let mut current: Vec<SentenceRef> = Vec::with_capacity(x_len + y.len());
    while trace.steps.len() < budget.min(guard) {
        current.clear();
        current.extend(pool.iter().map(|&p| resolve(p)));
        let Some(action) = next_action(&current, y, &sim, rng) else {
            break;
        };
        let step = match action {
            Action::Replace { rule, i, j } => {
                let removed = current[i].text.to_string();
                pool[i] = x_len + j;
                EditStep {
                    rule,
                    sentence_index: i,
                    inserted_text: Some(y[j].text.to_string()),
                    removed_text: Some(removed),
                }
            }
            Action::Delete { i } => {
                pool.remove(i);
                EditStep {
                    rule: EditRule::FpDelete,
                    sentence_index: i,
                    inserted_text: None,
                    removed_text: Some(current[i].text.to_string()),
                }
            }
            Action::Append { j } => {
                pool.push(x_len + j);
                EditStep {
                    rule: EditRule::FnAppend,
                    sentence_index: pool.len() - 1,
                    inserted_text: Some(y[j].text.to_string()),
                    removed_text: None,
                }
            }
        };
        trace.steps.push(step);
    }
    // (e)
    if pool.is_empty() && !y.is_empty() {
        pool.push(x_len);
        trace.steps.push(EditStep {
            rule: EditRule::EmptyReplace,
            sentence_index: 0,
            inserted_text: Some(y[0].text.to_string()),
            removed_text: None,
        });
    }
    Cascade {
        sentences: pool,
        trace,
        x_len,
    }
}

/// Applies the first applicable rule among (a)..(d) once.
pub fn edit_step<R: Rng + ?Sized>(
    x: &[AnnotatedSentence],
    y: &[AnnotatedSentence],
    cfg: &EditConfig,
    ontology: &Ontology,
    rng: &mut R,
) -> (Vec<AnnotatedSentence>, Option<EditStep>) {
    let single = EditConfig {
        max_edits: Some(1),
        ..cfg.clone()
    };
    let xr: Vec<SentenceRef> = x.iter().map(AnnotatedSentence::as_ref).collect();
    let yr: Vec<SentenceRef> = y.iter().map(AnnotatedSentence::as_ref).collect();
    let sim = Sim {
        ontology,
        mode: single.mode,
        tau: single.tau,
    };
    let Some(action) = next_action(&xr, &yr, &sim, rng) else {
        return (x.to_vec(), None);
    };
    let mut out = x.to_vec();
    let step = match action {
        Action::Replace { rule, i, j } => {
            let removed = std::mem::replace(&mut out[i], y[j].clone());
            EditStep {
                rule,
                sentence_index: i,
                inserted_text: Some(y[j].text.clone()),
                removed_text: Some(removed.text),
            }
        }
        Action::Delete { i } => {
            let removed = out.remove(i);
            EditStep {
                rule: EditRule::FpDelete,
                sentence_index: i,
                inserted_text: None,
                removed_text: Some(removed.text),
            }
        }
        Action::Append { j } => {
            out.push(y[j].clone());
            EditStep {
                rule: EditRule::FnAppend,
                sentence_index: out.len() - 1,
                inserted_text: Some(y[j].text.clone()),
                removed_text: None,
            }
        }
    };
    (out, Some(step))
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize)]
pub struct EditOutcome {
    pub edited_text: String,
    pub sentences: Vec<String>,
    pub trace: EditTrace,
}

/// Edits report text `x_text` toward `y_text`.
pub fn edit<R: Rng + ?Sized>(
    x_text: &str,
    y_text: &str,
    cfg: &EditConfig,
    ontology: &Ontology,
    rng: &mut R,
) -> EditOutcome {
    let x = annotate(x_text, ontology);
    let y = annotate(y_text, ontology);
    let xr: Vec<SentenceRef> = x.iter().map(AnnotatedSentence::as_ref).collect();
    let yr: Vec<SentenceRef> = y.iter().map(AnnotatedSentence::as_ref).collect();
    let cascade = run_cascade(&xr, &yr, cfg, ontology, rng);
    let sentences: Vec<String> = cascade
        .texts(&xr, &yr)
        .into_iter()
        .map(str::to_string)
        .collect();
    EditOutcome {
        edited_text: sentences.join(" "),
        sentences,
        trace: cascade.trace,
    }
}

/// [`edit`] with the random stream taken from `cfg.rng_seed`.
pub fn edit_seeded(
    x_text: &str,
    y_text: &str,
    cfg: &EditConfig,
    ontology: &Ontology,
) -> EditOutcome {
    let mut r = rng::stream(cfg.rng_seed, &[rng::tag::EDIT]);
    edit(x_text, y_text, cfg, ontology, &mut r)
}

/// Whole-report replacement by the reference.
pub fn paragraph_edit(_x_text: &str, y_text: &str) -> String {
    y_text.to_string()
}
