//! Two-stage filter feature selection: drop low-variance columns of the
//! min-max scaled matrix, then drop the later column of each highly
//! correlated pair.
//!
//! Column statistics are summed over sorted values, so every result is
//! exactly invariant to row order.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::record::PacketRecord;

pub const DEFAULT_VARIANCE_THRESHOLD: f64 = 0.25;
pub const DEFAULT_CORRELATION_THRESHOLD: f64 = 0.98;
/// Largest population variance of a variable confined to `[0, 1]`.
pub const MAX_SCALED_VARIANCE: f64 = 0.25;

#[derive(Debug, Error, PartialEq)]
pub enum FeatselError {
    #[error("no features survive selection")]
    NothingSurvives,
    #[error("matrix has {values} values, expected {rows} x {cols}")]
    Shape { values: usize, rows: usize, cols: usize },
    #[error("non-finite value in column {0:?}")]
    NonFinite(String),
    #[error("records disagree on feature names")]
    Inconsistent,
}

/// Row-major matrix of named feature columns.
#[derive(Debug, Clone, PartialEq)]
pub struct FeatureMatrix {
    column_names: Vec<String>,
    values: Vec<f64>,
    n_rows: usize,
}

impl FeatureMatrix {
    pub fn new(column_names: Vec<String>, values: Vec<f64>, n_rows: usize) -> Result<Self, FeatselError> {
        let cols = column_names.len();
        if values.len() != n_rows * cols {
            return Err(FeatselError::Shape {
                values: values.len(),
                rows: n_rows,
                cols,
            });
        }
        if let Some(i) = values.iter().position(|v| !v.is_finite()) {
            return Err(FeatselError::NonFinite(column_names[i % cols].clone()));
        }
        Ok(Self {
            column_names,
            values,
            n_rows,
        })
    }

    pub fn from_records(records: &[PacketRecord]) -> Result<Self, FeatselError> {
        let names: Vec<String> = records
            .first()
            .map(|r| r.feature_names().map(str::to_string).collect())
            .unwrap_or_default();
        let mut values = Vec::with_capacity(records.len() * names.len());
        for r in records {
            if !r.feature_names().eq(names.iter().map(String::as_str)) {
                return Err(FeatselError::Inconsistent);
            }
            values.extend(r.values());
        }
        Self::new(names, values, records.len())
    }

    pub fn column_names(&self) -> &[String] {
        &self.column_names
    }

    pub fn n_rows(&self) -> usize {
        self.n_rows
    }

    pub fn n_cols(&self) -> usize {
        self.column_names.len()
    }

    pub fn get(&self, row: usize, col: usize) -> f64 {
        self.values[row * self.n_cols() + col]
    }

    pub fn row(&self, row: usize) -> &[f64] {
        let c = self.n_cols();
        &self.values[row * c..(row + 1) * c]
    }

    pub fn column(&self, col: usize) -> Vec<f64> {
        (0..self.n_rows).map(|r| self.get(r, col)).collect()
    }

    pub fn column_index(&self, name: &str) -> Option<usize> {
        self.column_names.iter().position(|n| n == name)
    }

    /// The named columns, in the order given.
    pub fn select(&self, names: &[String]) -> FeatureMatrix {
        let idx: Vec<usize> = names
            .iter()
            .map(|n| self.column_index(n).expect("selected column exists"))
            .collect();
        let mut values = Vec::with_capacity(self.n_rows * idx.len());
        for r in 0..self.n_rows {
            values.extend(idx.iter().map(|&c| self.get(r, c)));
        }
        FeatureMatrix {
            column_names: names.to_vec(),
            values,
            n_rows: self.n_rows,
        }
    }
}

/// Outcome of one or both filters. The thresholds and the variance cutoff
/// actually applied are recorded alongside the column lists.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct SelectionReport {
    pub kept: Vec<String>,
    pub dropped_low_variance: Vec<(String, f64)>,
    pub dropped_correlated: Vec<(String, String, f64)>,
    pub variance_threshold: Option<f64>,
    pub variance_cutoff: Option<f64>,
    pub correlation_threshold: Option<f64>,
    pub interpretation: String,
}

impl SelectionReport {
    /// Plain-text table of every column's fate.
    pub fn table(&self) -> String {
        let mut out = String::new();
        out.push_str(&format!("{:<32} {:<14} {}\n", "feature", "status", "detail"));
        for k in &self.kept {
            out.push_str(&format!("{k:<32} {:<14}\n", "kept"));
        }
        for (n, v) in &self.dropped_low_variance {
            out.push_str(&format!("{n:<32} {:<14} variance {v:.6}\n", "low-variance"));
        }
        for (n, p, r) in &self.dropped_correlated {
            out.push_str(&format!("{n:<32} {:<14} r = {r:.6} with {p}\n", "correlated"));
        }
        out.push_str(&format!(
            "kept {} of {} columns; {}\n",
            self.kept.len(),
            self.kept.len() + self.dropped_low_variance.len() + self.dropped_correlated.len(),
            self.interpretation
        ));
        out
    }
}

/// Compensated sum of `xs` after sorting, so the result ignores input order.
fn ordered_sum(mut xs: Vec<f64>) -> f64 {
    xs.sort_by(f64::total_cmp);
    let (mut sum, mut comp) = (0.0f64, 0.0f64);
    for x in xs {
        let y = x - comp;
        let t = sum + y;
        comp = (t - sum) - y;
        sum = t;
    }
    sum
}

fn mean(col: &[f64]) -> f64 {
    ordered_sum(col.to_vec()) / col.len() as f64
}

/// Population (1/n) variance.
pub fn population_variance(col: &[f64]) -> f64 {
    if col.is_empty() {
        return 0.0;
    }
    let m = mean(col);
    ordered_sum(col.iter().map(|x| (x - m) * (x - m)).collect()) / col.len() as f64
}

/// Sample Pearson correlation; 0 when either column is constant.
pub fn pearson(x: &[f64], y: &[f64]) -> f64 {
    assert_eq!(x.len(), y.len());
    if x.len() < 2 {
        return 0.0;
    }
    let (mx, my) = (mean(x), mean(y));
    let sxy = ordered_sum(x.iter().zip(y).map(|(a, b)| (a - mx) * (b - my)).collect());
    let sxx = ordered_sum(x.iter().map(|a| (a - mx) * (a - mx)).collect());
    let syy = ordered_sum(y.iter().map(|b| (b - my) * (b - my)).collect());
    if sxx == 0.0 || syy == 0.0 {
        return 0.0;
    }
    (sxy / (sxx.sqrt() * syy.sqrt())).clamp(-1.0, 1.0)
}

/// Maps each column to `[0, 1]` by `(x − min)/(max − min)`; constant columns
/// become all zeros.
pub fn min_max_scale(m: &FeatureMatrix) -> FeatureMatrix {
    let mut out = m.clone();
    let cols = m.n_cols();
    for c in 0..cols {
        let col = m.column(c);
        let lo = col.iter().copied().fold(f64::INFINITY, f64::min);
        let hi = col.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        let range = hi - lo;
        for (r, &x) in col.iter().enumerate() {
            out.values[r * cols + c] = if range > 0.0 { ((x - lo) / range).clamp(0.0, 1.0) } else { 0.0 };
        }
    }
    out
}

/// Absolute cutoff applied to scaled variances for a relative threshold.
pub fn variance_cutoff(threshold: f64) -> f64 {
    threshold * MAX_SCALED_VARIANCE
}

/// Drops every column of a scaled matrix whose population variance is below
/// `threshold · 0.25`.
pub fn variance_filter(m: &FeatureMatrix, threshold: f64) -> SelectionReport {
    let cutoff = variance_cutoff(threshold);
    let mut report = SelectionReport {
        variance_threshold: Some(threshold),
        variance_cutoff: Some(cutoff),
        interpretation: format!(
            "variance threshold {threshold} taken relative to the maximum scaled variance 0.25: \
             columns with min-max scaled population variance < {cutoff} dropped"
        ),
        ..Default::default()
    };
    for (c, name) in m.column_names().iter().enumerate() {
        let v = population_variance(&m.column(c));
        if v < cutoff {
            report.dropped_low_variance.push((name.clone(), v));
        } else {
            report.kept.push(name.clone());
        }
    }
    report
}

/// Scans pairs `(i, j)`, `i < j`, in column order and drops `j` when
/// `|r(i, j)| > threshold` and neither column is already dropped.
pub fn pearson_filter(m: &FeatureMatrix, threshold: f64) -> SelectionReport {
    let n = m.n_cols();
    let cols: Vec<Vec<f64>> = (0..n).map(|c| m.column(c)).collect();
    let mut dropped: Vec<Option<(usize, f64)>> = vec![None; n];
    for i in 0..n {
        if dropped[i].is_some() {
            continue;
        }
        for j in i + 1..n {
            if dropped[j].is_some() {
                continue;
            }
            let r = pearson(&cols[i], &cols[j]);
            if r.abs() > threshold {
                dropped[j] = Some((i, r));
            }
        }
    }
    let names = m.column_names();
    let mut report = SelectionReport {
        correlation_threshold: Some(threshold),
        interpretation: format!("pairs with |r| > {threshold} lose their later column"),
        ..Default::default()
    };
    for (j, d) in dropped.into_iter().enumerate() {
        match d {
            Some((i, r)) => report.dropped_correlated.push((names[j].clone(), names[i].clone(), r)),
            None => report.kept.push(names[j].clone()),
        }
    }
    report
}

/// Scale, variance filter, correlation filter. The returned matrix holds the
/// kept columns with their original (unscaled) values.
pub fn select_features(
    m: &FeatureMatrix,
    var_threshold: f64,
    corr_threshold: f64,
) -> Result<(FeatureMatrix, SelectionReport), FeatselError> {
    let scaled = min_max_scale(m);
    let var = variance_filter(&scaled, var_threshold);
    let corr = pearson_filter(&scaled.select(&var.kept), corr_threshold);
    if corr.kept.is_empty() {
        return Err(FeatselError::NothingSurvives);
    }
    let report = SelectionReport {
        kept: corr.kept,
        dropped_low_variance: var.dropped_low_variance,
        dropped_correlated: corr.dropped_correlated,
        variance_threshold: var.variance_threshold,
        variance_cutoff: var.variance_cutoff,
        correlation_threshold: corr.correlation_threshold,
        interpretation: format!("{}; {}", var.interpretation, corr.interpretation),
    };
    Ok((m.select(&report.kept), report))
}

/// Restricts each record to the kept features, in kept order.
pub fn project_records(records: &[PacketRecord], kept: &[String]) -> Vec<PacketRecord> {
    records
        .iter()
        .map(|r| PacketRecord {
            features: kept
                .iter()
                .map(|k| (k.clone(), r.feature(k).unwrap_or(0.0)))
                .collect(),
            ..r.clone()
        })
        .collect()
}
