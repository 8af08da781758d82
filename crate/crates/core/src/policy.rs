//! A linear autoregressive sentence policy.
//!
//! Tokens are template ids plus an END marker (`vocab_size`). The logits at
//! each step are `W · [features ; emitted]`, where `emitted` indicates which
//! templates have already been produced. Since `emitted` is sparse, the
//! products only touch the feature columns and the columns of emitted tokens.

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::ontology::{segment_report, Ontology};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum TrajectoryOrigin {
    Sampled,
    Edited,
    Reference,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Trajectory {
    pub case_id: u64,
    /// Template ids terminated by END.
    pub tokens: Vec<usize>,
    pub token_logprobs: Vec<f64>,
    pub text: String,
    pub origin: TrajectoryOrigin,
}

impl Trajectory {
    /// Template ids without the END marker.
    pub fn body(&self) -> &[usize] {
        &self.tokens[..self.tokens.len() - 1]
    }

    pub fn total_logprob(&self) -> f64 {
        self.token_logprobs.iter().sum()
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct SequenceLogprob {
    pub total: f64,
    pub per_token: Vec<f64>,
}

/// Weights of shape `(vocab_size + 1) × (feature_dim + vocab_size)`, row-major.
#[derive(Clone, Debug, PartialEq)]
pub struct PolicyParams {
    vocab_size: usize,
    feature_dim: usize,
    weights: Vec<f64>,
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct ParamsDoc {
    shape: [usize; 2],
    vocab_size: usize,
    feature_dim: usize,
    weights: Vec<f64>,
}

impl Serialize for PolicyParams {
    fn serialize<S: serde::Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        ParamsDoc {
            shape: [self.rows(), self.cols()],
            vocab_size: self.vocab_size,
            feature_dim: self.feature_dim,
            weights: self.weights.clone(),
        }
        .serialize(s)
    }
}

impl<'de> Deserialize<'de> for PolicyParams {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        let doc = ParamsDoc::deserialize(d)?;
        let p = PolicyParams::from_weights(doc.vocab_size, doc.feature_dim, doc.weights)
            .map_err(serde::de::Error::custom)?;
        if doc.shape != [p.rows(), p.cols()] {
            return Err(serde::de::Error::custom(
                "shape header does not match dimensions",
            ));
        }
        Ok(p)
    }
}

fn log_softmax_at(logits: &[f64], k: usize) -> f64 {
    let max = logits.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let lse = max + logits.iter().map(|z| (z - max).exp()).sum::<f64>().ln();
    logits[k] - lse
}

/// In-place softmax; returns the log-normalizer.
fn softmax_in_place(z: &mut [f64]) -> f64 {
    let max = z.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let mut sum = 0.0;
    for v in z.iter_mut() {
        *v = (*v - max).exp();
        sum += *v;
    }
    for v in z.iter_mut() {
        *v /= sum;
    }
    max + sum.ln()
}

fn argmax(z: &[f64]) -> usize {
    let mut best = 0;
    for (k, &v) in z.iter().enumerate() {
        if v > z[best] {
            best = k;
        }
    }
    best
}

impl PolicyParams {
    pub fn zeros(vocab_size: usize, feature_dim: usize) -> Self {
        PolicyParams {
            vocab_size,
            feature_dim,
            weights: vec![0.0; (vocab_size + 1) * (feature_dim + vocab_size)],
        }
    }

    pub fn from_weights(vocab_size: usize, feature_dim: usize, weights: Vec<f64>) -> Result<Self> {
        let p = PolicyParams {
            vocab_size,
            feature_dim,
            weights,
        };
        if p.weights.len() != p.rows() * p.cols() {
            return Err(Error::ContractViolation(format!(
                "weights length {} != {} x {}",
                p.weights.len(),
                p.rows(),
                p.cols()
            )));
        }
        if p.weights.iter().any(|w| !w.is_finite()) {
            return Err(Error::ContractViolation("non-finite weight".into()));
        }
        Ok(p)
    }

    pub fn for_ontology(ontology: &Ontology, feature_dim: usize) -> Self {
        Self::zeros(ontology.vocab_size(), feature_dim)
    }

    #[inline]
    pub fn end(&self) -> usize {
        self.vocab_size
    }

    pub fn vocab_size(&self) -> usize {
        self.vocab_size
    }

    pub fn feature_dim(&self) -> usize {
        self.feature_dim
    }

    pub fn rows(&self) -> usize {
        self.vocab_size + 1
    }

    pub fn cols(&self) -> usize {
        self.feature_dim + self.vocab_size
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    pub fn weights_mut(&mut self) -> &mut [f64] {
        &mut self.weights
    }

    #[inline]
    pub fn get(&self, row: usize, col: usize) -> f64 {
        self.weights[row * self.cols() + col]
    }

    #[inline]
    pub fn set(&mut self, row: usize, col: usize, v: f64) {
        let c = self.cols();
        self.weights[row * c + col] = v;
    }

    /// `self += scale · direction`.
    pub fn add_scaled(&mut self, direction: &[f64], scale: f64) {
        assert_eq!(direction.len(), self.weights.len(), "direction shape");
        for (w, d) in self.weights.iter_mut().zip(direction) {
            *w += scale * d;
        }
    }

    fn check_features(&self, features: &[f64]) -> Result<()> {
        if features.len() != self.feature_dim {
            return Err(Error::ContractViolation(format!(
                "feature length {} != {}",
                features.len(),
                self.feature_dim
            )));
        }
        Ok(())
    }

    fn check_tokens(&self, tokens: &[usize]) -> Result<()> {
        match tokens.split_last() {
            Some((&last, body))
                if last == self.end() && body.iter().all(|&t| t < self.vocab_size) =>
            {
                Ok(())
            }
            _ => Err(Error::ContractViolation(
                "token sequence must be END-terminated template ids".into(),
            )),
        }
    }

    /// Logits over `[features ; emitted-columns]` into `out`.
    fn logits_sparse(&self, features: &[f64], emitted: &[usize], out: &mut [f64]) {
        let cols = self.cols();
        for (r, o) in out.iter_mut().enumerate() {
            let row = &self.weights[r * cols..(r + 1) * cols];
            let mut z = 0.0;
            for (w, x) in row[..self.feature_dim].iter().zip(features) {
                z += w * x;
            }
            for &e in emitted {
                z += row[self.feature_dim + e];
            }
            *o = z;
        }
    }

    /// Dense form: `emitted[k]` is the indicator of template k.
    pub fn logits(&self, features: &[f64], emitted: &[bool]) -> Result<Vec<f64>> {
        self.check_features(features)?;
        if emitted.len() != self.vocab_size {
            return Err(Error::ContractViolation(format!(
                "emitted length {} != {}",
                emitted.len(),
                self.vocab_size
            )));
        }
        let on: Vec<usize> = (0..self.vocab_size).filter(|&k| emitted[k]).collect();
        let mut out = vec![0.0; self.rows()];
        self.logits_sparse(features, &on, &mut out);
        Ok(out)
    }

    fn numeric_guard(z: &[f64], step: usize) -> Result<()> {
        if z.iter().all(|v| v.is_finite()) {
            Ok(())
        } else {
            Err(Error::Numeric {
                step,
                detail: format!(
                    "non-finite logits {:?}",
                    z.iter().take(8).collect::<Vec<_>>()
                ),
            })
        }
    }

    fn push_emitted(emitted: &mut Vec<usize>, t: usize) {
        if !emitted.contains(&t) {
            emitted.push(t);
        }
    }

    /// Samples at `temperature`; records log-probabilities at temperature 1.
    /// END is forced after `max_len` templates.
    pub fn sample_trajectory<R: Rng + ?Sized>(
        &self,
        case_id: u64,
        features: &[f64],
        temperature: f64,
        max_len: usize,
        ontology: &Ontology,
        rng: &mut R,
    ) -> Result<Trajectory> {
        if temperature.is_nan() || temperature <= 0.0 {
            return Err(Error::ContractViolation(
                "temperature must be positive".into(),
            ));
        }
        self.check_features(features)?;
        let mut z = vec![0.0; self.rows()];
        let mut p = vec![0.0; self.rows()];
        let mut emitted = Vec::new();
        let mut tokens = Vec::new();
        let mut lps = Vec::new();
        loop {
            self.logits_sparse(features, &emitted, &mut z);
            Self::numeric_guard(&z, tokens.len())?;
            let t = if tokens.len() == max_len {
                self.end()
            } else {
                for (pk, zk) in p.iter_mut().zip(&z) {
                    *pk = zk / temperature;
                }
                softmax_in_place(&mut p);
                let u: f64 = rng.random();
                let mut acc = 0.0;
                let mut pick = argmax(&p);
                for (k, pk) in p.iter().enumerate() {
                    acc += pk;
                    if u < acc {
                        pick = k;
                        break;
                    }
                }
                pick
            };
            lps.push(log_softmax_at(&z, t));
            tokens.push(t);
            if t == self.end() {
                break;
            }
            Self::push_emitted(&mut emitted, t);
        }
        Ok(Trajectory {
            case_id,
            text: ontology.render(&tokens[..tokens.len() - 1]),
            tokens,
            token_logprobs: lps,
            origin: TrajectoryOrigin::Sampled,
        })
    }

    /// Argmax decoding, the zero-temperature limit of sampling.
    pub fn greedy(
        &self,
        case_id: u64,
        features: &[f64],
        max_len: usize,
        ontology: &Ontology,
    ) -> Result<Trajectory> {
        self.check_features(features)?;
        let mut z = vec![0.0; self.rows()];
        let mut emitted = Vec::new();
        let mut tokens = Vec::new();
        let mut lps = Vec::new();
        loop {
            self.logits_sparse(features, &emitted, &mut z);
            Self::numeric_guard(&z, tokens.len())?;
            let t = if tokens.len() == max_len {
                self.end()
            } else {
                argmax(&z)
            };
            lps.push(log_softmax_at(&z, t));
            tokens.push(t);
            if t == self.end() {
                break;
            }
            Self::push_emitted(&mut emitted, t);
        }
        Ok(Trajectory {
            case_id,
            text: ontology.render(&tokens[..tokens.len() - 1]),
            tokens,
            token_logprobs: lps,
            origin: TrajectoryOrigin::Sampled,
        })
    }

    /// Teacher-forced log-probabilities of an END-terminated sequence.
    pub fn sequence_logprob(&self, features: &[f64], tokens: &[usize]) -> Result<SequenceLogprob> {
        self.check_features(features)?;
        self.check_tokens(tokens)?;
        let mut z = vec![0.0; self.rows()];
        let mut emitted = Vec::new();
        let mut per_token = Vec::with_capacity(tokens.len());
        for (step, &t) in tokens.iter().enumerate() {
            self.logits_sparse(features, &emitted, &mut z);
            Self::numeric_guard(&z, step)?;
            per_token.push(log_softmax_at(&z, t));
            Self::push_emitted(&mut emitted, t);
        }
        Ok(SequenceLogprob {
            total: per_token.iter().sum(),
            per_token,
        })
    }

    /// Adds `Σ_t weight_t · ∇ log π(token_t)` into `grad` and returns the
    /// per-token log-probabilities. `weight` maps (step, logprob) to the
    /// coefficient of that token's score function.
    pub fn accumulate_grad<F>(
        &self,
        features: &[f64],
        tokens: &[usize],
        grad: &mut [f64],
        mut weight: F,
    ) -> Result<Vec<f64>>
    where
        F: FnMut(usize, f64) -> f64,
    {
        self.check_features(features)?;
        self.check_tokens(tokens)?;
        if grad.len() != self.weights.len() {
            return Err(Error::ContractViolation("gradient buffer shape".into()));
        }
        let cols = self.cols();
        let mut z = vec![0.0; self.rows()];
        let mut p = vec![0.0; self.rows()];
        let mut emitted = Vec::new();
        let mut lps = Vec::with_capacity(tokens.len());
        for (step, &t) in tokens.iter().enumerate() {
            self.logits_sparse(features, &emitted, &mut z);
            Self::numeric_guard(&z, step)?;
            let lp = log_softmax_at(&z, t);
            p.copy_from_slice(&z);
            softmax_in_place(&mut p);
            lps.push(lp);
            let w = weight(step, lp);
            if w != 0.0 {
                for (r, pr) in p.iter().enumerate() {
                    let coef = w * (if r == t { 1.0 } else { 0.0 } - pr);
                    if coef == 0.0 {
                        continue;
                    }
                    let row = &mut grad[r * cols..(r + 1) * cols];
                    for (g, x) in row[..self.feature_dim].iter_mut().zip(features) {
                        *g += coef * x;
                    }
                    for &e in &emitted {
                        row[self.feature_dim + e] += coef;
                    }
                }
            }
            Self::push_emitted(&mut emitted, t);
        }
        Ok(lps)
    }

    /// Gradient of the total log-probability, same shape as the weights.
    pub fn grad_logprob(&self, features: &[f64], tokens: &[usize]) -> Result<Vec<f64>> {
        let mut g = vec![0.0; self.weights.len()];
        self.accumulate_grad(features, tokens, &mut g, |_, _| 1.0)?;
        Ok(g)
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string(self)?)
    }

    pub fn from_json(s: &str) -> Result<Self> {
        Ok(serde_json::from_str(s)?)
    }
}

/// Inverse of rendering: template ids of each sentence, then END.
pub fn encode_report(text: &str, ontology: &Ontology) -> Result<Vec<usize>> {
    let mut ids = segment_report(text)
        .iter()
        .map(|s| {
            ontology
                .template_by_text(s)
                .ok_or_else(|| Error::UnknownSentence(s.clone()))
        })
        .collect::<Result<Vec<_>>>()?;
    ids.push(ontology.vocab_size());
    Ok(ids)
}
