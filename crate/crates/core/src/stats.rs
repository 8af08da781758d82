//! Paired significance testing and aggregation of multi-seed runs.

use std::collections::BTreeMap;

use serde::Serialize;
use statrs::distribution::{ContinuousCDF, Normal};

use crate::error::{Error, Result};
use crate::io::{parse_metric_csv, MetricRow, METRIC_COLUMNS};

/// Largest effective sample size for the exact null distribution.
pub const EXACT_MAX_N: usize = 20;

#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct WilcoxonResult {
    /// Sum of ranks of positive differences `a - b`.
    pub w: f64,
    pub p_two_sided: f64,
    pub n_effective: usize,
    pub exact: bool,
}

/// Nonzero differences and their average ranks by magnitude.
fn signed_ranks(a: &[f64], b: &[f64]) -> (Vec<f64>, Vec<f64>) {
    let mut d: Vec<f64> = a
        .iter()
        .zip(b)
        .map(|(x, y)| x - y)
        .filter(|d| *d != 0.0)
        .collect();
    d.sort_by(|x, y| x.abs().total_cmp(&y.abs()));
    let mut ranks = vec![0.0; d.len()];
    let mut i = 0;
    while i < d.len() {
        let mut j = i;
        while j + 1 < d.len() && d[j + 1].abs() == d[i].abs() {
            j += 1;
        }
        let avg = (i + j) as f64 / 2.0 + 1.0;
        ranks[i..=j].fill(avg);
        i = j + 1;
    }
    (d, ranks)
}

/// Two-sided p by exact enumeration of the 2^n sign assignments, done as a
/// subset-sum count over doubled (hence integral) ranks.
fn exact_p(ranks: &[f64], w_plus: f64) -> f64 {
    let doubled: Vec<usize> = ranks.iter().map(|r| (2.0 * r).round() as usize).collect();
    let total: usize = doubled.iter().sum();
    let mut counts = vec![0.0f64; total + 1];
    counts[0] = 1.0;
    for &r in &doubled {
        for s in (r..=total).rev() {
            counts[s] += counts[s - r];
        }
    }
    let all = 2f64.powi(ranks.len() as i32);
    let w2 = (2.0 * w_plus).round() as usize;
    let lower: f64 = counts[..=w2].iter().sum::<f64>() / all;
    let upper: f64 = counts[w2..].iter().sum::<f64>() / all;
    (2.0 * lower.min(upper)).min(1.0)
}

fn normal_p(ranks: &[f64], w_plus: f64) -> f64 {
    let n = ranks.len() as f64;
    let mean = n * (n + 1.0) / 4.0;
    let mut ties = 0.0;
    let mut i = 0;
    while i < ranks.len() {
        let j = ranks[i..].iter().take_while(|r| **r == ranks[i]).count();
        let t = j as f64;
        ties += t * t * t - t;
        i += j;
    }
    let var = n * (n + 1.0) * (2.0 * n + 1.0) / 24.0 - ties / 48.0;
    if var <= 0.0 {
        return 1.0;
    }
    let z = ((w_plus - mean).abs() - 0.5).max(0.0) / var.sqrt();
    let std = Normal::standard();
    (2.0 * (1.0 - std.cdf(z))).min(1.0)
}

pub fn wilcoxon_signed_rank(a: &[f64], b: &[f64]) -> Result<WilcoxonResult> {
    if a.len() != b.len() || a.is_empty() {
        return Err(Error::ContractViolation(format!(
            "paired samples need equal nonzero lengths, got {} and {}",
            a.len(),
            b.len()
        )));
    }
    wilcoxon_with(a, b, EXACT_MAX_N)
}

/// [`wilcoxon_signed_rank`] with an explicit exact/normal cutoff.
pub fn wilcoxon_with(a: &[f64], b: &[f64], exact_max_n: usize) -> Result<WilcoxonResult> {
    if a.iter().chain(b).any(|v| !v.is_finite()) {
        return Err(Error::ContractViolation("non-finite sample".into()));
    }
    let (d, ranks) = signed_ranks(a, b);
    let n = d.len();
    if n == 0 {
        return Ok(WilcoxonResult {
            w: 0.0,
            p_two_sided: 1.0,
            n_effective: 0,
            exact: true,
        });
    }
    let w: f64 = d
        .iter()
        .zip(&ranks)
        .filter(|(d, _)| **d > 0.0)
        .map(|(_, r)| r)
        .sum();
    let exact = n <= exact_max_n;
    let p = if exact {
        exact_p(&ranks, w)
    } else {
        normal_p(&ranks, w)
    };
    Ok(WilcoxonResult {
        w,
        p_two_sided: p,
        n_effective: n,
        exact,
    })
}

/// Normal-approximation p regardless of sample size.
pub fn wilcoxon_normal(a: &[f64], b: &[f64]) -> Result<WilcoxonResult> {
    wilcoxon_with(a, b, 0)
}

/// Linear-interpolation quantile of sorted data.
pub fn quantile(sorted: &[f64], q: f64) -> f64 {
    assert!(!sorted.is_empty());
    let h = (sorted.len() - 1) as f64 * q;
    let lo = h.floor() as usize;
    let hi = h.ceil() as usize;
    sorted[lo] + (h - lo as f64) * (sorted[hi] - sorted[lo])
}

pub fn median(values: &[f64]) -> f64 {
    let mut v = values.to_vec();
    v.sort_by(f64::total_cmp);
    quantile(&v, 0.5)
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct SummaryRow {
    pub variant: String,
    pub step: usize,
    pub n_runs: usize,
    /// Per metric column, aligned with [`METRIC_COLUMNS`].
    pub median: Vec<f64>,
    pub iqr: Vec<f64>,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct ComparisonRow {
    pub metric: String,
    pub variant_a: String,
    pub variant_b: String,
    pub median_a: f64,
    pub median_b: f64,
    pub wilcoxon: WilcoxonResult,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct RunSummary {
    pub rows: Vec<SummaryRow>,
    pub comparisons: Vec<ComparisonRow>,
}

impl RunSummary {
    pub fn to_csv(&self) -> String {
        let mut out = String::from("variant,step,n_runs");
        for c in METRIC_COLUMNS {
            out.push_str(&format!(",{c}_median,{c}_iqr"));
        }
        out.push('\n');
        for r in &self.rows {
            out.push_str(&format!("{},{},{}", r.variant, r.step, r.n_runs));
            for (m, q) in r.median.iter().zip(&r.iqr) {
                out.push_str(&format!(",{m},{q}"));
            }
            out.push('\n');
        }
        out
    }
}

/// Aggregates metric logs: per variant and step, median and IQR over runs;
/// final-step `mean_reward` comparisons between every pair of variants,
/// pairing runs by their position among that variant's logs.
pub fn summarize_runs(logs: &[&str]) -> Result<RunSummary> {
    let parsed: Vec<Vec<MetricRow>> = logs
        .iter()
        .map(|t| parse_metric_csv(t))
        .collect::<Result<_>>()?;
    let mut cells: BTreeMap<(String, usize), Vec<[f64; 13]>> = BTreeMap::new();
    let mut finals: BTreeMap<String, Vec<f64>> = BTreeMap::new();
    for log in &parsed {
        for r in log {
            cells
                .entry((r.variant.clone(), r.step))
                .or_default()
                .push(r.values());
        }
        if let Some(last) = log.last() {
            finals
                .entry(last.variant.clone())
                .or_default()
                .push(last.mean_reward);
        }
    }
    let rows = cells
        .into_iter()
        .map(|((variant, step), runs)| {
            let (median, iqr) = (0..METRIC_COLUMNS.len())
                .map(|k| {
                    let mut v: Vec<f64> = runs.iter().map(|r| r[k]).collect();
                    v.sort_by(f64::total_cmp);
                    (quantile(&v, 0.5), quantile(&v, 0.75) - quantile(&v, 0.25))
                })
                .unzip();
            SummaryRow {
                variant,
                step,
                n_runs: runs.len(),
                median,
                iqr,
            }
        })
        .collect();
    let names: Vec<&String> = finals.keys().collect();
    let mut comparisons = Vec::new();
    for (i, a) in names.iter().enumerate() {
        for b in &names[i + 1..] {
            let n = finals[*a].len().min(finals[*b].len());
            let (xa, xb) = (&finals[*a][..n], &finals[*b][..n]);
            comparisons.push(ComparisonRow {
                metric: "mean_reward".into(),
                variant_a: (*a).clone(),
                variant_b: (*b).clone(),
                median_a: median(xa),
                median_b: median(xb),
                wilcoxon: wilcoxon_signed_rank(xa, xb)?,
            });
        }
    }
    Ok(RunSummary { rows, comparisons })
}
