//! The closed report world: findings, entity lexemes with embeddings, sentence
//! templates and negation cues.
//!
//! Embedding geometry is constructed, not learned. Each canonical lexeme sits
//! on its own axis of a 16-dimensional basis, synonyms lean 0.9 onto their
//! canonical axis with the remainder in the two spare dimensions, and the
//! second member of each related finding pair is tilted so its cosine with the
//! first is exactly [`RELATED_COSINE`]. All similarity thresholds are therefore
//! analytically predictable.

use std::collections::HashMap;

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::extract::{self, Mention};
use crate::rng;

pub const NUM_FINDINGS: usize = 14;
pub const EMBED_DIM: usize = 16;
pub const SYNONYM_COSINE: f64 = 0.9;
pub const RELATED_COSINE: f64 = 0.7;

const FINDING_NAMES: [&str; NUM_FINDINGS] = [
    "Enlarged Cardiomediastinum",
    "Cardiomegaly",
    "Lung Opacity",
    "Lung Lesion",
    "Edema",
    "Consolidation",
    "Pneumonia",
    "Atelectasis",
    "Pneumothorax",
    "Pleural Effusion",
    "Pleural Other",
    "Fracture",
    "Support Devices",
    "No Finding",
];

/// One of the 14 label classes; index 13 is "No Finding".
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(try_from = "u8", into = "u8")]
pub struct FindingId(u8);

impl FindingId {
    pub const ENLARGED_CARDIOMEDIASTINUM: FindingId = FindingId(0);
    pub const CARDIOMEGALY: FindingId = FindingId(1);
    pub const LUNG_OPACITY: FindingId = FindingId(2);
    pub const LUNG_LESION: FindingId = FindingId(3);
    pub const EDEMA: FindingId = FindingId(4);
    pub const CONSOLIDATION: FindingId = FindingId(5);
    pub const PNEUMONIA: FindingId = FindingId(6);
    pub const ATELECTASIS: FindingId = FindingId(7);
    pub const PNEUMOTHORAX: FindingId = FindingId(8);
    pub const PLEURAL_EFFUSION: FindingId = FindingId(9);
    pub const PLEURAL_OTHER: FindingId = FindingId(10);
    pub const FRACTURE: FindingId = FindingId(11);
    pub const SUPPORT_DEVICES: FindingId = FindingId(12);
    pub const NO_FINDING: FindingId = FindingId(13);

    pub fn new(index: usize) -> Option<Self> {
        (index < NUM_FINDINGS).then_some(FindingId(index as u8))
    }

    #[inline]
    pub fn index(self) -> usize {
        self.0 as usize
    }

    #[inline]
    pub fn is_abnormal(self) -> bool {
        self != Self::NO_FINDING
    }

    pub fn all() -> impl Iterator<Item = FindingId> {
        (0..NUM_FINDINGS as u8).map(FindingId)
    }

    pub fn abnormal() -> impl Iterator<Item = FindingId> {
        (0..Self::NO_FINDING.0).map(FindingId)
    }

    pub fn name(self) -> &'static str {
        FINDING_NAMES[self.index()]
    }
}

impl TryFrom<u8> for FindingId {
    type Error = String;

    fn try_from(v: u8) -> std::result::Result<Self, String> {
        FindingId::new(v as usize).ok_or_else(|| format!("finding index {v} out of range"))
    }
}

impl From<FindingId> for u8 {
    fn from(f: FindingId) -> u8 {
        f.0
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Presence {
    Present,
    Absent,
}

/// Index of a lexeme in [`Ontology::lexicon`].
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct LexemeId(pub u16);

impl LexemeId {
    #[inline]
    pub fn index(self) -> usize {
        self.0 as usize
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EntityLexeme {
    /// Normalized surface; the identity used by exact matching.
    pub surface: String,
    /// Lower-case word sequences that realize this lexeme in text.
    pub forms: Vec<String>,
    pub finding: FindingId,
    pub embedding: Vec<f64>,
    pub synonym_of: Option<String>,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct GoldEntity {
    pub surface: String,
    pub finding: FindingId,
    pub presence: Presence,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct SentenceTemplate {
    pub id: usize,
    pub text: String,
    pub entities: Vec<GoldEntity>,
}

impl SentenceTemplate {
    /// `Some((finding, presence))` when the template mentions exactly one entity.
    pub fn single(&self) -> Option<(FindingId, Presence)> {
        match self.entities.as_slice() {
            [e] => Some((e.finding, e.presence)),
            _ => None,
        }
    }
}

/// The serialized form. Field order is the on-disk order.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct OntologyDoc {
    seed: u64,
    findings: Vec<String>,
    lexicon: Vec<EntityLexeme>,
    templates: Vec<SentenceTemplate>,
    negation_cues: Vec<String>,
    label_map: Vec<usize>,
    five_subset: Vec<FindingId>,
    related_pairs: Vec<(FindingId, FindingId)>,
    always_commented: Vec<FindingId>,
}

#[derive(Clone, Debug)]
pub(crate) struct FormEntry {
    pub words: Vec<String>,
    pub lexeme: LexemeId,
}

#[derive(Clone, Debug)]
struct Indices {
    by_surface: HashMap<String, LexemeId>,
    by_text: HashMap<String, usize>,
    forms: Vec<FormEntry>,
    cues: Vec<Vec<String>>,
    similarity: Vec<f64>,
    template_mentions: Vec<Vec<Mention>>,
}

/// Immutable after construction; share freely across threads.
#[derive(Clone, Debug)]
pub struct Ontology {
    doc: OntologyDoc,
    idx: Indices,
}

impl PartialEq for Ontology {
    fn eq(&self, other: &Self) -> bool {
        self.doc == other.doc
    }
}

impl Serialize for Ontology {
    fn serialize<S: serde::Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        self.doc.serialize(s)
    }
}

impl<'de> Deserialize<'de> for Ontology {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        let doc = OntologyDoc::deserialize(d)?;
        Ontology::from_doc(doc).map_err(serde::de::Error::custom)
    }
}

impl Ontology {
    pub fn seed(&self) -> u64 {
        self.doc.seed
    }

    pub fn findings(&self) -> &[String] {
        &self.doc.findings
    }

    pub fn lexicon(&self) -> &[EntityLexeme] {
        &self.doc.lexicon
    }

    pub fn lexeme(&self, id: LexemeId) -> &EntityLexeme {
        &self.doc.lexicon[id.index()]
    }

    pub fn lexeme_by_surface(&self, surface: &str) -> Option<LexemeId> {
        self.idx.by_surface.get(surface).copied()
    }

    pub fn templates(&self) -> &[SentenceTemplate] {
        &self.doc.templates
    }

    pub fn template(&self, id: usize) -> &SentenceTemplate {
        &self.doc.templates[id]
    }

    pub fn template_by_text(&self, text: &str) -> Option<usize> {
        self.idx.by_text.get(text).copied()
    }

    /// Cached extraction of a template's text.
    pub fn template_mentions(&self, id: usize) -> &[Mention] {
        &self.idx.template_mentions[id]
    }

    pub fn vocab_size(&self) -> usize {
        self.doc.templates.len()
    }

    pub fn negation_cues(&self) -> &[String] {
        &self.doc.negation_cues
    }

    pub fn label_map(&self) -> &[usize] {
        &self.doc.label_map
    }

    pub fn label_index(&self, f: FindingId) -> usize {
        self.doc.label_map[f.index()]
    }

    pub fn five_subset(&self) -> &[FindingId] {
        &self.doc.five_subset
    }

    pub fn related_pairs(&self) -> &[(FindingId, FindingId)] {
        &self.doc.related_pairs
    }

    /// Findings whose absence every reference report states explicitly.
    pub fn always_commented(&self) -> &[FindingId] {
        &self.doc.always_commented
    }

    pub(crate) fn forms(&self) -> &[FormEntry] {
        &self.idx.forms
    }

    pub(crate) fn cue_words(&self) -> &[Vec<String>] {
        &self.idx.cues
    }

    /// Embedding cosine between two lexemes (precomputed dot product).
    #[inline]
    pub fn similarity(&self, a: LexemeId, b: LexemeId) -> f64 {
        self.idx.similarity[a.index() * self.doc.lexicon.len() + b.index()]
    }

    /// Templates mentioning exactly one entity with this finding and presence.
    pub fn single_templates(&self, finding: FindingId, presence: Presence) -> Vec<usize> {
        self.doc
            .templates
            .iter()
            .filter(|t| t.single() == Some((finding, presence)))
            .map(|t| t.id)
            .collect()
    }

    /// Space-joined rendering of a template-id sequence.
    pub fn render(&self, ids: &[usize]) -> String {
        let mut out = String::new();
        for (k, &id) in ids.iter().enumerate() {
            if k > 0 {
                out.push(' ');
            }
            out.push_str(&self.doc.templates[id].text);
        }
        out
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(&self.doc)?)
    }

    pub fn from_json(s: &str) -> Result<Self> {
        let doc: OntologyDoc = serde_json::from_str(s)?;
        Self::from_doc(doc)
    }

    fn from_doc(doc: OntologyDoc) -> Result<Self> {
        let by_surface = doc
            .lexicon
            .iter()
            .enumerate()
            .map(|(i, l)| (l.surface.clone(), LexemeId(i as u16)))
            .collect::<HashMap<_, _>>();
        let by_text = doc
            .templates
            .iter()
            .map(|t| (t.text.clone(), t.id))
            .collect::<HashMap<_, _>>();
        let mut forms: Vec<FormEntry> = doc
            .lexicon
            .iter()
            .enumerate()
            .flat_map(|(i, l)| {
                l.forms.iter().map(move |f| FormEntry {
                    words: extract::words(f),
                    lexeme: LexemeId(i as u16),
                })
            })
            .collect();
        // longest form first so the first hit at a position is the longest match
        forms.sort_by_key(|f| std::cmp::Reverse(f.words.len()));
        let cues = doc
            .negation_cues
            .iter()
            .map(|c| extract::words(c))
            .collect();
        let n = doc.lexicon.len();
        let mut similarity = vec![0.0; n * n];
        for i in 0..n {
            for j in 0..n {
                similarity[i * n + j] = dot(&doc.lexicon[i].embedding, &doc.lexicon[j].embedding);
            }
        }
        let mut ontology = Ontology {
            doc,
            idx: Indices {
                by_surface,
                by_text,
                forms,
                cues,
                similarity,
                template_mentions: Vec::new(),
            },
        };
        ontology.idx.template_mentions = ontology
            .doc
            .templates
            .iter()
            .map(|t| extract::sentence_mentions(&t.text, &ontology))
            .collect();
        ontology.validate()?;
        Ok(ontology)
    }

    /// Checks every structural and geometric invariant exhaustively.
    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::ContractViolation(m));
        let d = &self.doc;
        if d.findings.len() != NUM_FINDINGS {
            return bad(format!(
                "expected {NUM_FINDINGS} findings, got {}",
                d.findings.len()
            ));
        }
        let mut seen = [false; NUM_FINDINGS];
        for &l in &d.label_map {
            if l >= NUM_FINDINGS || std::mem::replace(&mut seen[l], true) {
                return bad("label_map is not a bijection onto [0, 13]".into());
            }
        }
        if d.label_map.len() != NUM_FINDINGS {
            return bad("label_map must cover all findings".into());
        }
        if d.five_subset.len() != 5
            || d.five_subset.iter().any(|f| !f.is_abnormal())
            || (1..5).any(|i| d.five_subset[..i].contains(&d.five_subset[i]))
        {
            return bad("five_subset must be 5 distinct abnormal findings".into());
        }
        if self.idx.by_surface.len() != d.lexicon.len() {
            return bad("duplicate lexeme surface".into());
        }
        for w in self.idx.forms.windows(2) {
            if w[0].words == w[1].words {
                return bad(format!("duplicate form {:?}", w[0].words));
            }
        }
        for l in &d.lexicon {
            if l.embedding.len() != EMBED_DIM {
                return bad(format!("embedding of {:?} has wrong dimension", l.surface));
            }
            let norm = dot(&l.embedding, &l.embedding).sqrt();
            if (norm - 1.0).abs() > 1e-9 {
                return bad(format!("embedding of {:?} has norm {norm}", l.surface));
            }
            if let Some(c) = &l.synonym_of {
                match self.lexeme_by_surface(c) {
                    Some(id) if self.lexeme(id).finding == l.finding => {}
                    _ => return bad(format!("bad synonym link {:?} -> {c:?}", l.surface)),
                }
            }
        }
        let n = d.lexicon.len();
        for i in 0..n {
            for j in (i + 1)..n {
                let (a, b) = (&d.lexicon[i], &d.lexicon[j]);
                let c = self.similarity(LexemeId(i as u16), LexemeId(j as u16));
                let related = d.related_pairs.iter().any(|&(p, q)| {
                    (p, q) == (a.finding, b.finding) || (q, p) == (a.finding, b.finding)
                });
                let ok = if a.finding == b.finding {
                    c >= 0.85
                } else if related {
                    (0.65..=0.75).contains(&c)
                } else {
                    c <= 0.30
                };
                if !ok {
                    return bad(format!(
                        "similarity {c} between {:?} and {:?}",
                        a.surface, b.surface
                    ));
                }
            }
        }
        if self.idx.by_text.len() != d.templates.len() {
            return bad("template texts must be pairwise distinct".into());
        }
        for (k, t) in d.templates.iter().enumerate() {
            if t.id != k {
                return bad(format!("template {k} carries id {}", t.id));
            }
            let body = t.text.strip_suffix('.').unwrap_or("");
            if body.is_empty() || body.contains('.') {
                return bad(format!("template {:?} must end in a single '.'", t.text));
            }
            let got: Vec<GoldEntity> = self.idx.template_mentions[k]
                .iter()
                .map(|m| GoldEntity {
                    surface: self.lexeme(m.lexeme).surface.clone(),
                    finding: m.finding,
                    presence: m.presence,
                })
                .collect();
            if got != t.entities {
                return bad(format!(
                    "template {:?} extracts {got:?}, gold {:?}",
                    t.text, t.entities
                ));
            }
        }
        for f in FindingId::abnormal() {
            for p in [Presence::Present, Presence::Absent] {
                if self.single_templates(f, p).len() < 2 {
                    return bad(format!("fewer than two templates for {} {p:?}", f.name()));
                }
            }
        }
        if self
            .single_templates(FindingId::NO_FINDING, Presence::Present)
            .len()
            < 2
        {
            return bad("fewer than two No Finding templates".into());
        }
        Ok(())
    }
}

#[inline]
pub(crate) fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

/// Dot product of two unit vectors, checked.
pub fn cosine(a: &[f64], b: &[f64]) -> Result<f64> {
    if a.len() != b.len() {
        return Err(Error::ContractViolation(format!(
            "cosine of vectors with dimensions {} and {}",
            a.len(),
            b.len()
        )));
    }
    for v in [a, b] {
        let norm = dot(v, v).sqrt();
        if (norm - 1.0).abs() > 1e-6 {
            return Err(Error::ContractViolation(format!(
                "cosine of non-unit vector (norm {norm})"
            )));
        }
    }
    Ok(dot(a, b))
}

/// Splits report text into '.'-terminated sentences.
pub fn segment_report(text: &str) -> Vec<String> {
    text.split('.')
        .map(str::trim)
        .filter(|s| !s.is_empty())
        .map(|s| format!("{s}."))
        .collect()
}

// (surface, forms, finding, canonical surface for synonyms)
const LEXICON: &[(&str, &[&str], FindingId, Option<&str>)] = &[
    (
        "enlarged cardiomediastinum",
        &[
            "enlarged cardiomediastinum",
            "cardiomediastinal silhouette is enlarged",
        ],
        FindingId::ENLARGED_CARDIOMEDIASTINUM,
        None,
    ),
    (
        "widened mediastinum",
        &["widened mediastinum"],
        FindingId::ENLARGED_CARDIOMEDIASTINUM,
        Some("enlarged cardiomediastinum"),
    ),
    (
        "cardiomegaly",
        &["cardiomegaly"],
        FindingId::CARDIOMEGALY,
        None,
    ),
    (
        "enlarged heart",
        &["enlarged heart", "heart is enlarged"],
        FindingId::CARDIOMEGALY,
        Some("cardiomegaly"),
    ),
    (
        "lung opacity",
        &["lung opacity"],
        FindingId::LUNG_OPACITY,
        None,
    ),
    (
        "lung lesion",
        &["lung lesion"],
        FindingId::LUNG_LESION,
        None,
    ),
    (
        "pulmonary nodule",
        &["pulmonary nodule"],
        FindingId::LUNG_LESION,
        Some("lung lesion"),
    ),
    (
        "edema",
        &["edema", "pulmonary edema"],
        FindingId::EDEMA,
        None,
    ),
    (
        "vascular congestion",
        &["vascular congestion"],
        FindingId::EDEMA,
        Some("edema"),
    ),
    (
        "consolidation",
        &["consolidation"],
        FindingId::CONSOLIDATION,
        None,
    ),
    ("pneumonia", &["pneumonia"], FindingId::PNEUMONIA, None),
    (
        "infectious process",
        &["infectious process"],
        FindingId::PNEUMONIA,
        Some("pneumonia"),
    ),
    (
        "atelectasis",
        &["atelectasis"],
        FindingId::ATELECTASIS,
        None,
    ),
    (
        "volume loss",
        &["volume loss"],
        FindingId::ATELECTASIS,
        Some("atelectasis"),
    ),
    (
        "pneumothorax",
        &["pneumothorax"],
        FindingId::PNEUMOTHORAX,
        None,
    ),
    (
        "pleural effusion",
        &["pleural effusion", "pleural effusions"],
        FindingId::PLEURAL_EFFUSION,
        None,
    ),
    (
        "pleural thickening",
        &["pleural thickening"],
        FindingId::PLEURAL_OTHER,
        None,
    ),
    (
        "fracture",
        &["fracture", "fractures"],
        FindingId::FRACTURE,
        None,
    ),
    (
        "support device",
        &["support device", "support devices"],
        FindingId::SUPPORT_DEVICES,
        None,
    ),
    (
        "pacemaker",
        &["pacemaker"],
        FindingId::SUPPORT_DEVICES,
        Some("support device"),
    ),
    (
        "no acute cardiopulmonary abnormality",
        &["no acute cardiopulmonary abnormality"],
        FindingId::NO_FINDING,
        None,
    ),
    (
        "unremarkable chest radiograph",
        &["unremarkable chest radiograph"],
        FindingId::NO_FINDING,
        Some("no acute cardiopulmonary abnormality"),
    ),
];

use Presence::{Absent as A, Present as P};

const TEMPLATES: &[(&str, &[(&str, Presence)])] = &[
    (
        "There is an enlarged cardiomediastinum.",
        &[("enlarged cardiomediastinum", P)],
    ),
    (
        "The cardiomediastinal silhouette is enlarged.",
        &[("enlarged cardiomediastinum", P)],
    ),
    (
        "A widened mediastinum is noted.",
        &[("widened mediastinum", P)],
    ),
    (
        "No enlarged cardiomediastinum.",
        &[("enlarged cardiomediastinum", A)],
    ),
    (
        "There is no widened mediastinum.",
        &[("widened mediastinum", A)],
    ),
    ("Moderate cardiomegaly is present.", &[("cardiomegaly", P)]),
    ("Moderate cardiomegaly.", &[("cardiomegaly", P)]),
    ("The heart is enlarged.", &[("enlarged heart", P)]),
    ("No cardiomegaly.", &[("cardiomegaly", A)]),
    ("There is no cardiomegaly.", &[("cardiomegaly", A)]),
    (
        "There is a lung opacity in the right base.",
        &[("lung opacity", P)],
    ),
    ("Patchy lung opacity is seen.", &[("lung opacity", P)]),
    ("No focal lung opacity.", &[("lung opacity", A)]),
    ("There is no lung opacity.", &[("lung opacity", A)]),
    (
        "A lung lesion is present in the left upper lobe.",
        &[("lung lesion", P)],
    ),
    ("A pulmonary nodule is seen.", &[("pulmonary nodule", P)]),
    ("No lung lesion.", &[("lung lesion", A)]),
    ("There is no pulmonary nodule.", &[("pulmonary nodule", A)]),
    ("There is mild pulmonary edema.", &[("edema", P)]),
    (
        "Findings are consistent with vascular congestion.",
        &[("vascular congestion", P)],
    ),
    ("No pulmonary edema.", &[("edema", A)]),
    (
        "There is no vascular congestion.",
        &[("vascular congestion", A)],
    ),
    (
        "There is focal consolidation in the left lower lobe.",
        &[("consolidation", P)],
    ),
    (
        "Right basilar consolidation is present.",
        &[("consolidation", P)],
    ),
    ("No focal consolidation.", &[("consolidation", A)]),
    (
        "The lungs are free of consolidation.",
        &[("consolidation", A)],
    ),
    (
        "Findings are concerning for pneumonia.",
        &[("pneumonia", P)],
    ),
    (
        "There is an infectious process in the right lung.",
        &[("infectious process", P)],
    ),
    ("No evidence of pneumonia.", &[("pneumonia", A)]),
    (
        "There is no infectious process.",
        &[("infectious process", A)],
    ),
    ("There is bibasilar atelectasis.", &[("atelectasis", P)]),
    (
        "Mild volume loss is seen at the left base.",
        &[("volume loss", P)],
    ),
    ("No atelectasis.", &[("atelectasis", A)]),
    ("There is no volume loss.", &[("volume loss", A)]),
    (
        "There is a small right pneumothorax.",
        &[("pneumothorax", P)],
    ),
    (
        "A left apical pneumothorax is present.",
        &[("pneumothorax", P)],
    ),
    ("No pneumothorax.", &[("pneumothorax", A)]),
    ("There is no pneumothorax.", &[("pneumothorax", A)]),
    ("Small left pleural effusion.", &[("pleural effusion", P)]),
    ("Small pleural effusion.", &[("pleural effusion", P)]),
    (
        "There is a moderate right pleural effusion.",
        &[("pleural effusion", P)],
    ),
    ("No pleural effusion.", &[("pleural effusion", A)]),
    ("There is no pleural effusion.", &[("pleural effusion", A)]),
    (
        "There is pleural thickening at the right apex.",
        &[("pleural thickening", P)],
    ),
    (
        "Mild pleural thickening is noted.",
        &[("pleural thickening", P)],
    ),
    ("No pleural thickening.", &[("pleural thickening", A)]),
    (
        "There is no pleural thickening.",
        &[("pleural thickening", A)],
    ),
    ("There is a rib fracture.", &[("fracture", P)]),
    (
        "An old healed fracture of the clavicle is seen.",
        &[("fracture", P)],
    ),
    ("No fracture.", &[("fracture", A)]),
    ("There is no acute fracture.", &[("fracture", A)]),
    ("A support device is in place.", &[("support device", P)]),
    ("A pacemaker is in place.", &[("pacemaker", P)]),
    ("No support devices.", &[("support device", A)]),
    ("There is no pacemaker.", &[("pacemaker", A)]),
    (
        "No acute cardiopulmonary abnormality.",
        &[("no acute cardiopulmonary abnormality", P)],
    ),
    (
        "Unremarkable chest radiograph.",
        &[("unremarkable chest radiograph", P)],
    ),
    (
        "No pleural effusion or pneumothorax.",
        &[("pleural effusion", A), ("pneumothorax", A)],
    ),
    (
        "No focal consolidation, pleural effusion, or pneumothorax.",
        &[
            ("consolidation", A),
            ("pleural effusion", A),
            ("pneumothorax", A),
        ],
    ),
    (
        "Cardiomegaly with mild pulmonary edema.",
        &[("cardiomegaly", P), ("edema", P)],
    ),
    ("Frontal and lateral views of the chest were obtained.", &[]),
    ("Comparison is made to the prior study.", &[]),
];

const NEGATION_CUES: &[&str] = &[
    "no",
    "without",
    "free of",
    "within normal limits",
    "resolved",
];

fn axis(k: usize) -> Vec<f64> {
    let mut v = vec![0.0; EMBED_DIM];
    v[k] = 1.0;
    v
}

/// Builds the default world. A pure function of `seed`, which only moves the
/// synonym directions inside the two spare embedding dimensions.
pub fn build_default_ontology(seed: u64) -> Ontology {
    let related_pairs = vec![
        (FindingId::LUNG_OPACITY, FindingId::CONSOLIDATION),
        (FindingId::PLEURAL_EFFUSION, FindingId::PLEURAL_OTHER),
    ];
    let mut canonical: HashMap<FindingId, Vec<f64>> =
        FindingId::all().map(|f| (f, axis(f.index()))).collect();
    let tilt = (1.0 - RELATED_COSINE * RELATED_COSINE).sqrt();
    for &(anchor, tilted) in &related_pairs {
        let mut v = vec![0.0; EMBED_DIM];
        v[anchor.index()] = RELATED_COSINE;
        v[tilted.index()] = tilt;
        canonical.insert(tilted, v);
    }

    let mut rng = rng::stream(seed, &[rng::tag::ONTOLOGY]);
    let spare = (1.0 - SYNONYM_COSINE * SYNONYM_COSINE).sqrt();
    let lexicon = LEXICON
        .iter()
        .map(|&(surface, forms, finding, synonym_of)| {
            let embedding = match synonym_of {
                None => canonical[&finding].clone(),
                Some(_) => {
                    // direction within a 60-degree arc of the spare plane keeps
                    // synonym-synonym cosines of one finding above 0.9
                    let theta = rng.random_range(0.0..std::f64::consts::FRAC_PI_3);
                    let mut v: Vec<f64> = canonical[&finding]
                        .iter()
                        .map(|x| SYNONYM_COSINE * x)
                        .collect();
                    v[NUM_FINDINGS] = spare * theta.cos();
                    v[NUM_FINDINGS + 1] = spare * theta.sin();
                    v
                }
            };
            EntityLexeme {
                surface: surface.to_string(),
                forms: forms.iter().map(|s| s.to_string()).collect(),
                finding,
                embedding,
                synonym_of: synonym_of.map(str::to_string),
            }
        })
        .collect::<Vec<_>>();
    let finding_of = |s: &str| {
        lexicon
            .iter()
            .find(|l| l.surface == s)
            .map(|l| l.finding)
            .expect("gold surface in lexicon")
    };
    let templates = TEMPLATES
        .iter()
        .enumerate()
        .map(|(id, &(text, gold))| SentenceTemplate {
            id,
            text: text.to_string(),
            entities: gold
                .iter()
                .map(|&(surface, presence)| GoldEntity {
                    surface: surface.to_string(),
                    finding: finding_of(surface),
                    presence,
                })
                .collect(),
        })
        .collect();
    let doc = OntologyDoc {
        seed,
        findings: FINDING_NAMES.iter().map(|s| s.to_string()).collect(),
        lexicon,
        templates,
        negation_cues: NEGATION_CUES.iter().map(|s| s.to_string()).collect(),
        label_map: (0..NUM_FINDINGS).collect(),
        five_subset: vec![
            FindingId::CARDIOMEGALY,
            FindingId::EDEMA,
            FindingId::CONSOLIDATION,
            FindingId::ATELECTASIS,
            FindingId::PLEURAL_EFFUSION,
        ],
        related_pairs,
        always_commented: vec![FindingId::PLEURAL_EFFUSION, FindingId::PNEUMOTHORAX],
    };
    Ontology::from_doc(doc).expect("default ontology satisfies its invariants")
}
