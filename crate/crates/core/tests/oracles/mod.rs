//! Independent reference implementations shared by the integration suites
//! and the acceptance run. Each restates a definition directly rather than
//! following the library's algorithm.
#![allow(dead_code)]

use std::collections::BTreeSet;

use pktseer_core::featsel::FeatureMatrix;
use pktseer_core::metrics::EvalReport;
use pktseer_core::tokenizer::MIN_VOCAB_SIZE;
use rand::Rng;
use rand_chacha::ChaCha8Rng;

pub fn matrix(cols: &[Vec<f64>]) -> FeatureMatrix {
    let n_rows = cols[0].len();
    let names = (0..cols.len()).map(|c| format!("c{c}")).collect();
    let values = (0..n_rows).flat_map(|r| cols.iter().map(move |c| c[r])).collect();
    FeatureMatrix::new(names, values, n_rows).unwrap()
}

// Oracles written from the pairwise definitions, independent of the
// mean-centred formulas in the library.

/// `Var = (1/n²) Σ_{a<b} (x_a − x_b)²`.
pub fn variance_oracle(x: &[f64]) -> f64 {
    let n = x.len() as f64;
    let mut s = 0.0;
    for a in 0..x.len() {
        for b in a + 1..x.len() {
            s += (x[a] - x[b]).powi(2);
        }
    }
    s / (n * n)
}

/// `r = Σ_{a<b} dx·dy / sqrt(Σ dx² · Σ dy²)` over all pairs of rows.
pub fn pearson_oracle(x: &[f64], y: &[f64]) -> f64 {
    let (mut sxy, mut sxx, mut syy) = (0.0, 0.0, 0.0);
    for a in 0..x.len() {
        for b in a + 1..x.len() {
            let (dx, dy) = (x[a] - x[b], y[a] - y[b]);
            sxy += dx * dy;
            sxx += dx * dx;
            syy += dy * dy;
        }
    }
    if sxx == 0.0 || syy == 0.0 {
        0.0
    } else {
        sxy / (sxx * syy).sqrt()
    }
}

pub fn scale_oracle(x: &[f64]) -> Vec<f64> {
    let lo = x.iter().cloned().fold(f64::MAX, f64::min);
    let hi = x.iter().cloned().fold(f64::MIN, f64::max);
    x.iter().map(|v| if hi > lo { (v - lo) / (hi - lo) } else { 0.0 }).collect()
}

/// Both filters from scratch: returns the kept column indices.
pub fn select_oracle(cols: &[Vec<f64>], var_thr: f64, corr_thr: f64) -> Vec<usize> {
    let scaled: Vec<Vec<f64>> = cols.iter().map(|c| scale_oracle(c)).collect();
    let after_var: Vec<usize> = (0..cols.len())
        .filter(|&c| variance_oracle(&scaled[c]) >= var_thr * 0.25)
        .collect();
    let mut kept: Vec<usize> = Vec::new();
    for &j in &after_var {
        if kept
            .iter()
            .all(|&i| pearson_oracle(&scaled[i], &scaled[j]).abs() <= corr_thr)
        {
            kept.push(j);
        }
    }
    kept
}

/// A random matrix mixing the column kinds the filters care about.
pub fn random_columns(rng: &mut ChaCha8Rng) -> Vec<Vec<f64>> {
    let n_rows = rng.random_range(8..60);
    let n_cols = rng.random_range(1..=10);
    let mut cols: Vec<Vec<f64>> = Vec::new();
    for _ in 0..n_cols {
        let kind = rng.random_range(0..5);
        let col: Vec<f64> = match kind {
            0 => (0..n_rows).map(|_| rng.random_range(-50.0..50.0)).collect(),
            1 => {
                let base = rng.random_range(-5.0..5.0);
                (0..n_rows)
                    .map(|_| if rng.random_bool(0.05) { base + 1.0 } else { base })
                    .collect()
            }
            2 if !cols.is_empty() => {
                let src = cols[rng.random_range(0..cols.len())].clone();
                let noise = [0.0, 0.01, 0.1, 1.0][rng.random_range(0..4)];
                let a = rng.random_range(-3.0..3.0);
                src.iter().map(|x| a * x + noise * rng.random_range(-10.0..10.0)).collect()
            }
            3 => (0..n_rows).map(|_| f64::from(rng.random_range(0..3u8))).collect(),
            _ => (0..n_rows).map(|_| rng.random_range(0.0f64..1.0).powi(4) * 100.0).collect(),
        };
        cols.push(col);
    }
    cols
}

// Oracle: a direct restatement of the training rule on byte strings. Every
// line is kept separately (duplicates included), all adjacent pairs are
// recounted from scratch after every merge, the most frequent pair wins and
// ties go to the smallest (left, right) byte strings.

pub type Segmentation = Vec<Vec<u8>>;

pub fn oracle_bpe(corpus: &[String], vocab_size: usize, min_count: u64) -> (Vec<(Vec<u8>, Vec<u8>)>, Vec<Segmentation>) {
    let mut lines: Vec<Segmentation> = corpus
        .iter()
        .map(|l| l.bytes().map(|b| vec![b]).collect())
        .collect();
    let mut learned: BTreeSet<Vec<u8>> = BTreeSet::new();
    let mut merges = Vec::new();
    while MIN_VOCAB_SIZE + learned.len() < vocab_size {
        let mut counts: Vec<((Vec<u8>, Vec<u8>), u64)> = Vec::new();
        for line in &lines {
            for w in line.windows(2) {
                let key = (w[0].clone(), w[1].clone());
                match counts.iter_mut().find(|(k, _)| *k == key) {
                    Some((_, c)) => *c += 1,
                    None => counts.push((key, 1)),
                }
            }
        }
        let mut best: Option<((Vec<u8>, Vec<u8>), u64)> = None;
        for (key, c) in counts {
            if c < min_count.max(1) {
                continue;
            }
            let better = match &best {
                None => true,
                Some((bk, bc)) => c > *bc || (c == *bc && key < *bk),
            };
            if better {
                best = Some((key, c));
            }
        }
        let Some(((l, r), _)) = best else { break };
        let joined: Vec<u8> = l.iter().chain(&r).copied().collect();
        for line in &mut lines {
            let mut out = Vec::new();
            let mut i = 0;
            while i < line.len() {
                if i + 1 < line.len() && line[i] == l && line[i + 1] == r {
                    out.push(joined.clone());
                    i += 2;
                } else {
                    out.push(line[i].clone());
                    i += 1;
                }
            }
            *line = out;
        }
        learned.insert(joined);
        merges.push((l, r));
    }
    (merges, lines)
}

/// Probability that a random positive outscores a random negative, ties
/// counting one half, by enumerating every positive/negative pair.
pub fn mann_whitney(truth: &[usize], scores: &[f64]) -> f64 {
    let mut wins = 0.0;
    let mut pairs = 0.0;
    for (i, &ti) in truth.iter().enumerate() {
        for (j, &tj) in truth.iter().enumerate() {
            if ti == 1 && tj == 0 {
                pairs += 1.0;
                if scores[i] > scores[j] {
                    wins += 1.0;
                } else if scores[i] == scores[j] {
                    wins += 0.5;
                }
            }
        }
    }
    wins / pairs
}

/// Score set with both classes present; `levels` > 0 quantizes scores to
/// force ties.
pub fn score_set(rng: &mut ChaCha8Rng, n: usize, levels: u32) -> (Vec<usize>, Vec<f64>) {
    loop {
        let truth: Vec<usize> = (0..n).map(|_| usize::from(rng.random_bool(0.4))).collect();
        if truth.contains(&0) && truth.contains(&1) {
            let scores = truth
                .iter()
                .map(|&t| {
                    let s: f64 = (rng.random::<f64>() + 0.3 * t as f64).min(1.0);
                    if levels > 0 {
                        (s * levels as f64).round() / levels as f64
                    } else {
                        s
                    }
                })
                .collect();
            return (truth, scores);
        }
    }
}

pub fn check_identities(truth: &[usize], scores: &[f64]) {
    let r = EvalReport::from_scores(["neg", "pos"], truth, scores);
    let n = truth.len() as f64;
    let pred: Vec<usize> = scores.iter().map(|&s| usize::from(s > 0.5)).collect();
    let count = |t: usize, p: usize| truth.iter().zip(&pred).filter(|&(&a, &b)| a == t && b == p).count() as f64;
    let (tn, fp, fn_, tp) = (count(0, 0), count(0, 1), count(1, 0), count(1, 1));
    assert_eq!(r.total() as f64, n);
    assert!((r.accuracy - (tp + tn) / n).abs() < 1e-12);

    // Accuracy equals the support-weighted mean recall.
    let weighted: f64 = r.per_class.iter().map(|c| c.recall * c.support as f64).sum::<f64>() / n;
    assert!((r.accuracy - weighted).abs() < 1e-12);

    let pos = &r.per_class[1];
    if tp + fp > 0.0 {
        assert!((pos.precision - tp / (tp + fp)).abs() < 1e-12);
    }
    if tp + fn_ > 0.0 {
        assert!((pos.recall - tp / (tp + fn_)).abs() < 1e-12);
    }
    if tp > 0.0 {
        assert!((pos.f1 - 2.0 * tp / (2.0 * tp + fp + fn_)).abs() < 1e-12);
    }
    let neg = &r.per_class[0];
    if tn > 0.0 {
        assert!((neg.f1 - 2.0 * tn / (2.0 * tn + fn_ + fp)).abs() < 1e-12);
    }
    for c in &r.per_class {
        assert!(c.f1 <= c.precision.max(c.recall) + 1e-12);
        assert!(c.f1 >= c.precision.min(c.recall) - 1e-12);
    }
}

