//! Lexicon entity extraction with sentence-scoped negation cues.
//!
//! Matching is over lower-cased word sequences: at each word position the
//! longest lexicon form wins and the scan resumes after it. A mention is
//! `Absent` iff some negation cue occurs among the words preceding it in the
//! same sentence.

use serde::{Deserialize, Serialize};

use crate::ontology::{FindingId, LexemeId, Ontology, Presence, NUM_FINDINGS};

/// Which similarity the edit cascade uses between entities.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ExtractionMode {
    /// Embedding cosine between lexemes.
    #[default]
    EmbeddingMatch,
    /// 1 for identical surfaces, 0 otherwise.
    ExactMatch,
}

impl ExtractionMode {
    #[inline]
    pub fn similarity(self, ontology: &Ontology, a: LexemeId, b: LexemeId) -> f64 {
        match self {
            ExtractionMode::EmbeddingMatch => ontology.similarity(a, b),
            ExtractionMode::ExactMatch => {
                if a == b {
                    1.0
                } else {
                    0.0
                }
            }
        }
    }
}

/// A mention inside one sentence.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct Mention {
    pub lexeme: LexemeId,
    pub finding: FindingId,
    pub presence: Presence,
}

/// A mention placed in a report.
#[derive(Clone, Debug, PartialEq, Eq, Hash, Serialize)]
pub struct Entity {
    pub surface: String,
    #[serde(skip)]
    pub lexeme: LexemeId,
    pub finding: FindingId,
    pub presence: Presence,
    pub sentence_index: usize,
}

impl Entity {
    fn from_mention(m: Mention, sentence_index: usize, ontology: &Ontology) -> Self {
        Entity {
            surface: ontology.lexeme(m.lexeme).surface.clone(),
            lexeme: m.lexeme,
            finding: m.finding,
            presence: m.presence,
            sentence_index,
        }
    }

    pub fn mention(&self) -> Mention {
        Mention {
            lexeme: self.lexeme,
            finding: self.finding,
            presence: self.presence,
        }
    }
}

pub(crate) fn words(s: &str) -> Vec<String> {
    s.split(|c: char| !c.is_alphanumeric())
        .filter(|w| !w.is_empty())
        .map(str::to_lowercase)
        .collect()
}

fn contains_seq(hay: &[String], needle: &[String]) -> bool {
    !needle.is_empty() && hay.windows(needle.len()).any(|w| w == needle)
}

pub(crate) fn sentence_mentions(sentence: &str, ontology: &Ontology) -> Vec<Mention> {
    let ws = words(sentence);
    let mut out = Vec::new();
    let mut i = 0;
    while i < ws.len() {
        let hit = ontology
            .forms()
            .iter()
            .find(|f| ws.len() - i >= f.words.len() && ws[i..i + f.words.len()] == f.words[..]);
        match hit {
            Some(f) => {
                let negated = ontology
                    .cue_words()
                    .iter()
                    .any(|c| contains_seq(&ws[..i], c));
                out.push(Mention {
                    lexeme: f.lexeme,
                    finding: ontology.lexeme(f.lexeme).finding,
                    presence: if negated {
                        Presence::Absent
                    } else {
                        Presence::Present
                    },
                });
                i += f.words.len();
            }
            None => i += 1,
        }
    }
    out
}

pub fn extract_sentence_entities(sentence: &str, ontology: &Ontology) -> Vec<Entity> {
    sentence_mentions(sentence, ontology)
        .into_iter()
        .map(|m| Entity::from_mention(m, 0, ontology))
        .collect()
}

pub fn extract_report<S: AsRef<str>>(report: &[S], ontology: &Ontology) -> Vec<Entity> {
    report
        .iter()
        .enumerate()
        .flat_map(|(i, s)| {
            sentence_mentions(s.as_ref(), ontology)
                .into_iter()
                .map(move |m| Entity::from_mention(m, i, ontology))
        })
        .collect()
}

pub type Labels = [bool; NUM_FINDINGS];

/// Label vector from (finding, presence) pairs.
///
/// Any positive mention of a finding sets its bit, so a positive mention wins
/// over a conflicting absence. No Finding is set iff no abnormal bit is set:
/// silence, explicit normal statements and bare absences all read as normal.
pub fn labels_from_pairs<I>(pairs: I, ontology: &Ontology) -> Labels
where
    I: IntoIterator<Item = (FindingId, Presence)>,
{
    let mut bits = [false; NUM_FINDINGS];
    for (f, p) in pairs {
        if p == Presence::Present && f.is_abnormal() {
            bits[ontology.label_index(f)] = true;
        }
    }
    let abnormal = FindingId::abnormal().any(|f| bits[ontology.label_index(f)]);
    bits[ontology.label_index(FindingId::NO_FINDING)] = !abnormal;
    bits
}

pub fn labels_14(entities: &[Entity], ontology: &Ontology) -> Labels {
    labels_from_pairs(entities.iter().map(|e| (e.finding, e.presence)), ontology)
}

pub fn labels_of_mentions<'a, I>(mentions: I, ontology: &Ontology) -> Labels
where
    I: IntoIterator<Item = &'a Mention>,
{
    labels_from_pairs(
        mentions.into_iter().map(|m| (m.finding, m.presence)),
        ontology,
    )
}
