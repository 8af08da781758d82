//! On-disk formats: the per-step metric CSV, JSONL helpers and corpus files.

use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use serde::{de::DeserializeOwned, Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::world::Case;

pub const METRIC_HEADER: &str = "step,variant,mean_reward,radgraph_like,chexbert_micro14,rate_like,no_finding_frac,clip_frac,kl,edits_a,edits_b,edits_c,edits_d,edits_e,mean_len";

/// Numeric columns of the metric CSV, in order, after `step` and `variant`.
pub const METRIC_COLUMNS: [&str; 13] = [
    "mean_reward",
    "radgraph_like",
    "chexbert_micro14",
    "rate_like",
    "no_finding_frac",
    "clip_frac",
    "kl",
    "edits_a",
    "edits_b",
    "edits_c",
    "edits_d",
    "edits_e",
    "mean_len",
];

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MetricRow {
    pub step: usize,
    pub variant: String,
    pub mean_reward: f64,
    pub radgraph_like: f64,
    pub chexbert_micro14: f64,
    pub rate_like: f64,
    pub no_finding_frac: f64,
    pub clip_frac: f64,
    pub kl: f64,
    pub edits: [usize; 5],
    pub mean_len: f64,
}

impl MetricRow {
    pub fn values(&self) -> [f64; 13] {
        [
            self.mean_reward,
            self.radgraph_like,
            self.chexbert_micro14,
            self.rate_like,
            self.no_finding_frac,
            self.clip_frac,
            self.kl,
            self.edits[0] as f64,
            self.edits[1] as f64,
            self.edits[2] as f64,
            self.edits[3] as f64,
            self.edits[4] as f64,
            self.mean_len,
        ]
    }

    pub fn value(&self, column: &str) -> Option<f64> {
        METRIC_COLUMNS
            .iter()
            .position(|c| *c == column)
            .map(|k| self.values()[k])
    }

    pub fn csv_line(&self) -> String {
        let mut s = format!("{},{}", self.step, self.variant);
        for v in [
            self.mean_reward,
            self.radgraph_like,
            self.chexbert_micro14,
            self.rate_like,
            self.no_finding_frac,
            self.clip_frac,
            self.kl,
        ] {
            let _ = write!(s, ",{v}");
        }
        for e in self.edits {
            let _ = write!(s, ",{e}");
        }
        let _ = write!(s, ",{}", self.mean_len);
        s
    }
}

pub fn metric_csv(rows: &[MetricRow]) -> String {
    let mut out = String::from(METRIC_HEADER);
    out.push('\n');
    for r in rows {
        out.push_str(&r.csv_line());
        out.push('\n');
    }
    out
}

pub fn parse_metric_csv(text: &str) -> Result<Vec<MetricRow>> {
    let mut lines = text.lines();
    let header = lines.next().unwrap_or("").trim_end();
    if header != METRIC_HEADER {
        return Err(Error::HeaderMismatch {
            expected: METRIC_HEADER.to_string(),
            found: header.to_string(),
        });
    }
    lines
        .enumerate()
        .filter(|(_, l)| !l.trim().is_empty())
        .map(|(n, line)| {
            let f: Vec<&str> = line.trim_end().split(',').collect();
            if f.len() != 15 {
                return Err(Error::Parse(format!(
                    "line {}: expected 15 fields, got {}",
                    n + 2,
                    f.len()
                )));
            }
            let num = |k: usize| -> Result<f64> {
                f[k].parse()
                    .map_err(|_| Error::Parse(format!("line {}: bad number {:?}", n + 2, f[k])))
            };
            let int = |k: usize| -> Result<usize> {
                f[k].parse()
                    .map_err(|_| Error::Parse(format!("line {}: bad integer {:?}", n + 2, f[k])))
            };
            Ok(MetricRow {
                step: int(0)?,
                variant: f[1].to_string(),
                mean_reward: num(2)?,
                radgraph_like: num(3)?,
                chexbert_micro14: num(4)?,
                rate_like: num(5)?,
                no_finding_frac: num(6)?,
                clip_frac: num(7)?,
                kl: num(8)?,
                edits: [int(9)?, int(10)?, int(11)?, int(12)?, int(13)?],
                mean_len: num(14)?,
            })
        })
        .collect()
}

pub fn to_jsonl<T: Serialize>(items: &[T]) -> Result<String> {
    let mut out = String::new();
    for it in items {
        out.push_str(&serde_json::to_string(it)?);
        out.push('\n');
    }
    Ok(out)
}

pub fn from_jsonl<T: DeserializeOwned>(text: &str) -> Result<Vec<T>> {
    text.lines()
        .filter(|l| !l.trim().is_empty())
        .map(|l| Ok(serde_json::from_str(l)?))
        .collect()
}

pub fn write_corpus(path: &Path, corpus: &[Case]) -> Result<()> {
    fs::write(path, to_jsonl(corpus)?)?;
    Ok(())
}

pub fn read_corpus(path: &Path) -> Result<Vec<Case>> {
    from_jsonl(&fs::read_to_string(path)?)
}
