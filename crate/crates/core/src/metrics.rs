//! Binary evaluation reports: confusion matrix, per-class precision, recall
//! and F1, accuracy, ROC points and trapezoidal AUC.
//!
//! Class 1 is the positive class and `score` is its probability. The
//! predicted label is 1 exactly when `score > 0.5`, so ties go to class 0.

use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClassMetrics {
    pub name: String,
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
    pub support: u64,
}

/// One point of the ROC curve: predicting positive when `score ≥ threshold`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RocPoint {
    pub fpr: f64,
    pub tpr: f64,
    pub threshold: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    /// Rows are true classes, columns predicted classes.
    pub confusion: [[u64; 2]; 2],
    pub accuracy: f64,
    pub per_class: Vec<ClassMetrics>,
    pub roc_points: Vec<RocPoint>,
    pub auc: f64,
}

fn ratio(num: u64, den: u64) -> f64 {
    if den == 0 {
        0.0
    } else {
        num as f64 / den as f64
    }
}

pub fn f1(precision: f64, recall: f64) -> f64 {
    if precision + recall == 0.0 {
        0.0
    } else {
        2.0 * precision * recall / (precision + recall)
    }
}

/// ROC over every distinct score, highest first. The curve always starts
/// at (0, 0) with threshold 1 (just above 1 if some score equals 1) and ends
/// at (1, 1) with threshold 0.
pub fn roc_curve(truth: &[usize], scores: &[f64]) -> Vec<RocPoint> {
    assert_eq!(truth.len(), scores.len());
    let pos = truth.iter().filter(|&&t| t == 1).count() as u64;
    let neg = truth.len() as u64 - pos;
    let mut order: Vec<usize> = (0..scores.len()).collect();
    order.sort_by(|&a, &b| scores[b].total_cmp(&scores[a]));

    let top = scores.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let start = if top < 1.0 { 1.0 } else { top.next_up() };
    let mut points = vec![RocPoint {
        fpr: 0.0,
        tpr: 0.0,
        threshold: start,
    }];
    let (mut tp, mut fp) = (0u64, 0u64);
    let mut i = 0;
    while i < order.len() {
        let s = scores[order[i]];
        while i < order.len() && scores[order[i]] == s {
            if truth[order[i]] == 1 {
                tp += 1;
            } else {
                fp += 1;
            }
            i += 1;
        }
        points.push(RocPoint {
            fpr: ratio(fp, neg),
            tpr: ratio(tp, pos),
            threshold: s,
        });
    }
    if points.last().is_none_or(|p| p.threshold > 0.0) {
        points.push(RocPoint {
            fpr: ratio(fp, neg),
            tpr: ratio(tp, pos),
            threshold: 0.0,
        });
    }
    points
}

/// Trapezoidal area under the given points.
pub fn auc_trapezoid(points: &[RocPoint]) -> f64 {
    points
        .windows(2)
        .map(|w| (w[1].fpr - w[0].fpr) * (w[1].tpr + w[0].tpr) / 2.0)
        .sum()
}

impl EvalReport {
    /// Builds the report from true classes and positive-class scores. With
    /// only one class present the ROC is degenerate and the AUC is set to 0.5.
    pub fn from_scores(class_names: [&str; 2], truth: &[usize], scores: &[f64]) -> Self {
        assert_eq!(truth.len(), scores.len(), "one score per example");
        let mut confusion = [[0u64; 2]; 2];
        for (&t, &s) in truth.iter().zip(scores) {
            confusion[t.min(1)][usize::from(s > 0.5)] += 1;
        }
        let total = truth.len() as u64;
        let accuracy = ratio(confusion[0][0] + confusion[1][1], total);
        let per_class = (0..2)
            .map(|c| {
                let row = confusion[c][0] + confusion[c][1];
                let col = confusion[0][c] + confusion[1][c];
                let precision = ratio(confusion[c][c], col);
                let recall = ratio(confusion[c][c], row);
                ClassMetrics {
                    name: class_names[c].to_string(),
                    precision,
                    recall,
                    f1: f1(precision, recall),
                    support: row,
                }
            })
            .collect();
        let roc_points = roc_curve(truth, scores);
        let both = per_class_support(&confusion).iter().all(|&s| s > 0);
        let auc = if both { auc_trapezoid(&roc_points) } else { 0.5 };
        Self {
            confusion,
            accuracy,
            per_class,
            roc_points,
            auc,
        }
    }

    pub fn total(&self) -> u64 {
        self.confusion.iter().flatten().sum()
    }

    /// Plain-text table: per-class precision, recall, F1 and support, then
    /// accuracy, AUC and the confusion matrix.
    pub fn table(&self) -> String {
        let mut out = format!(
            "{:<16}{:>10}{:>10}{:>10}{:>10}\n",
            "", "precision", "recall", "f1-score", "support"
        );
        for c in &self.per_class {
            out.push_str(&format!(
                "{:<16}{:>10.4}{:>10.4}{:>10.4}{:>10}\n",
                c.name, c.precision, c.recall, c.f1, c.support
            ));
        }
        out.push_str(&format!("\n{:<16}{:>30.4}{:>10}\n", "accuracy", self.accuracy, self.total()));
        out.push_str(&format!("{:<16}{:>30.4}\n", "auc", self.auc));
        out.push_str("\nconfusion (rows true, columns predicted)\n");
        let names: Vec<&str> = self.per_class.iter().map(|c| c.name.as_str()).collect();
        out.push_str(&format!("{:<16}{:>14}{:>14}\n", "", names[0], names[1]));
        for (r, name) in names.iter().enumerate() {
            out.push_str(&format!(
                "{:<16}{:>14}{:>14}\n",
                name, self.confusion[r][0], self.confusion[r][1]
            ));
        }
        out
    }

    /// Two-column-plus-threshold CSV of the ROC curve.
    pub fn roc_csv(&self) -> String {
        let mut out = String::from("fpr,tpr,threshold\n");
        for p in &self.roc_points {
            out.push_str(&format!("{},{},{}\n", p.fpr, p.tpr, p.threshold));
        }
        out
    }
}

fn per_class_support(confusion: &[[u64; 2]; 2]) -> [u64; 2] {
    [confusion[0][0] + confusion[0][1], confusion[1][0] + confusion[1][1]]
}
