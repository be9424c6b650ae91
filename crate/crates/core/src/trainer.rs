//! Training loops, splitting, early stopping and evaluation.
//!
//! Every loop is deterministic for a given seed: each epoch reshuffles with
//! `seed ^ epoch`, dropout and corruption seeds derive from the epoch and
//! example index, and per-batch gradients are summed in batch order.

use std::collections::BTreeMap;
use std::time::Instant;

use pktseer_nn::loss::{classification_loss, mlm_loss};
use pktseer_nn::{Adam, AdamConfig, Graph, ModelConfig, ModelParams, NnError, Var};
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::metrics::EvalReport;
use crate::models::{
    strip_padding, teacher_forcing, AssessorModel, ClassifierModel, ModelError, ModelMeta, PredictorModel,
};
use crate::record::{PacketRecord, PairExample};
use crate::tokenizer::{
    make_denoising_corruption, make_mlm_corruption, make_pair_input, serialize_packet, BpeVocab, DenoiseConfig,
    MlmConfig, TokenSequence, TokenizerError, BOS, EOS,
};

#[derive(Debug, Error)]
pub enum TrainError {
    #[error("no training data")]
    EmptyData,
    #[error("training data holds only class {0}; both classes are required")]
    SingleClass(usize),
    #[error("class {class} has {count} example(s); stratified splitting needs at least 2")]
    ClassTooSmall { class: usize, count: usize },
    #[error("invalid training configuration: {0}")]
    Config(String),
    #[error("non-finite loss {loss} at step {step} (batch example ids {batch:?})")]
    Diverged { step: usize, batch: Vec<usize>, loss: f64 },
    #[error("sequence of {len} tokens exceeds max_seq_len {max} (example {index})")]
    TooLong { index: usize, len: usize, max: usize },
    #[error(transparent)]
    Model(#[from] ModelError),
    #[error(transparent)]
    Nn(#[from] NnError),
    #[error(transparent)]
    Tokenizer(#[from] TokenizerError),
    #[error(transparent)]
    Text(#[from] crate::tokenizer::TextError),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum StopMetric {
    ValLoss,
    ValAccuracy,
}

impl StopMetric {
    pub fn parse(s: &str) -> Option<Self> {
        match s {
            "val_loss" => Some(StopMetric::ValLoss),
            "val_accuracy" => Some(StopMetric::ValAccuracy),
            _ => None,
        }
    }

    pub fn as_str(self) -> &'static str {
        match self {
            StopMetric::ValLoss => "val_loss",
            StopMetric::ValAccuracy => "val_accuracy",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainConfig {
    pub epochs: usize,
    pub batch_size: usize,
    pub learning_rate: f32,
    pub seed: u64,
    pub patience: usize,
    pub metric: StopMetric,
    pub min_delta: f64,
    /// Longest token sequence accepted; longer examples are an error.
    pub max_seq_len: usize,
    pub val_fraction: f64,
    /// Share of predictor steps spent on denoising instead.
    pub denoise_fraction: f64,
    /// Masked-token epochs before assessor pair training.
    pub mlm_warmup_epochs: usize,
    pub mask_prob: f64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self::assessor()
    }
}

impl TrainConfig {
    /// 15 epochs, learning rate 5e-5, batch 128, early stop on validation loss.
    pub fn assessor() -> Self {
        Self {
            epochs: 15,
            batch_size: 128,
            learning_rate: 5e-5,
            seed: 0,
            patience: 3,
            metric: StopMetric::ValLoss,
            min_delta: 1e-4,
            max_seq_len: 192,
            val_fraction: 0.2,
            denoise_fraction: 0.2,
            mlm_warmup_epochs: 3,
            mask_prob: 0.15,
        }
    }

    /// Mirrors the assessor defaults.
    pub fn predictor() -> Self {
        Self::assessor()
    }

    /// 4 epochs at batch 2, keeping the best validation accuracy.
    pub fn classifier() -> Self {
        Self {
            epochs: 4,
            batch_size: 2,
            metric: StopMetric::ValAccuracy,
            ..Self::assessor()
        }
    }

    pub fn validate(&self) -> Result<(), TrainError> {
        let bad = |m: String| Err(TrainError::Config(m));
        if self.epochs == 0 {
            return bad("epochs must be at least 1".into());
        }
        if self.batch_size == 0 {
            return bad("batch_size must be at least 1".into());
        }
        if !(self.learning_rate.is_finite() && self.learning_rate > 0.0) {
            return bad(format!("learning_rate must be positive, got {}", self.learning_rate));
        }
        if !(self.val_fraction > 0.0 && self.val_fraction < 1.0) {
            return bad(format!("val_fraction must lie in (0, 1), got {}", self.val_fraction));
        }
        if !(0.0..=1.0).contains(&self.denoise_fraction) {
            return bad(format!("denoise_fraction must lie in [0, 1], got {}", self.denoise_fraction));
        }
        if !(self.min_delta >= 0.0) {
            return bad(format!("min_delta must be non-negative, got {}", self.min_delta));
        }
        if !(self.mask_prob > 0.0 && self.mask_prob <= 1.0) {
            return bad(format!("mask_prob must lie in (0, 1], got {}", self.mask_prob));
        }
        Ok(())
    }
}

/// One line of the training history.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpochRecord {
    pub epoch: usize,
    pub phase: String,
    pub train_loss: f64,
    /// Absent for warm-up phases without validation.
    pub val_loss: Option<f64>,
    pub val_accuracy: Option<f64>,
    pub wall_ms: u64,
}

/// JSON lines, one per epoch.
pub fn history_jsonl(history: &[EpochRecord]) -> String {
    history
        .iter()
        .map(|r| serde_json::to_string(r).expect("history serializes") + "\n")
        .collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum StopDecision {
    Improved,
    Continue,
    Stop,
}

/// Patience-based early stopping on one monitored value.
#[derive(Debug, Clone)]
pub struct EarlyStopper {
    metric: StopMetric,
    patience: usize,
    min_delta: f64,
    best: Option<f64>,
    best_epoch: usize,
    stale: usize,
}

impl EarlyStopper {
    pub fn new(metric: StopMetric, patience: usize, min_delta: f64) -> Self {
        Self {
            metric,
            patience,
            min_delta,
            best: None,
            best_epoch: 0,
            stale: 0,
        }
    }

    /// Records an epoch's value. An improvement must beat the best by more
    /// than `min_delta`; after `patience` epochs without one, stop.
    pub fn observe(&mut self, epoch: usize, value: f64) -> StopDecision {
        let better = match (self.best, self.metric) {
            (None, _) => true,
            (Some(b), StopMetric::ValLoss) => value < b - self.min_delta,
            (Some(b), StopMetric::ValAccuracy) => value > b + self.min_delta,
        };
        if better {
            self.best = Some(value);
            self.best_epoch = epoch;
            self.stale = 0;
            StopDecision::Improved
        } else {
            self.stale += 1;
            if self.stale > self.patience {
                StopDecision::Stop
            } else {
                StopDecision::Continue
            }
        }
    }

    pub fn best(&self) -> Option<f64> {
        self.best
    }

    pub fn best_epoch(&self) -> usize {
        self.best_epoch
    }
}

fn shuffled_indices(n: usize, seed: u64) -> Vec<usize> {
    let mut idx: Vec<usize> = (0..n).collect();
    idx.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));
    idx
}

/// `round(n · val_fraction)` validation items, at least one on each side.
pub fn split<T: Clone>(items: &[T], val_fraction: f64, seed: u64) -> Result<(Vec<T>, Vec<T>), TrainError> {
    if !(val_fraction > 0.0 && val_fraction < 1.0) {
        return Err(TrainError::Config(format!("val_fraction must lie in (0, 1), got {val_fraction}")));
    }
    if items.len() < 2 {
        return Err(TrainError::EmptyData);
    }
    let n_val = ((items.len() as f64 * val_fraction).round() as usize).clamp(1, items.len() - 1);
    let idx = shuffled_indices(items.len(), seed);
    let val = idx[..n_val].iter().map(|&i| items[i].clone()).collect();
    let train = idx[n_val..].iter().map(|&i| items[i].clone()).collect();
    Ok((train, val))
}

/// Per class, `round(n_c · val_fraction)` items (clamped to `1..n_c`) go to
/// validation. Both sides keep their original relative order.
pub fn stratified_split<T: Clone>(
    items: &[T],
    class_of: impl Fn(&T) -> usize,
    val_fraction: f64,
    seed: u64,
) -> Result<(Vec<T>, Vec<T>), TrainError> {
    if !(val_fraction > 0.0 && val_fraction < 1.0) {
        return Err(TrainError::Config(format!("val_fraction must lie in (0, 1), got {val_fraction}")));
    }
    if items.is_empty() {
        return Err(TrainError::EmptyData);
    }
    let mut by_class: BTreeMap<usize, Vec<usize>> = BTreeMap::new();
    for (i, it) in items.iter().enumerate() {
        by_class.entry(class_of(it)).or_default().push(i);
    }
    let mut is_val = vec![false; items.len()];
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    for (&class, idx) in &mut by_class {
        if idx.len() < 2 {
            return Err(TrainError::ClassTooSmall {
                class,
                count: idx.len(),
            });
        }
        let n_val = ((idx.len() as f64 * val_fraction).round() as usize).clamp(1, idx.len() - 1);
        idx.shuffle(&mut rng);
        for &i in &idx[..n_val] {
            is_val[i] = true;
        }
    }
    let mut train = Vec::new();
    let mut val = Vec::new();
    for (i, it) in items.iter().enumerate() {
        if is_val[i] {
            val.push(it.clone());
        } else {
            train.push(it.clone());
        }
    }
    Ok((train, val))
}

/// Inverse-frequency weights `n / (2 · n_c)`, so both classes carry equal
/// total weight.
pub fn class_weights(labels: &[usize]) -> Result<[f64; 2], TrainError> {
    let mut counts = [0usize; 2];
    for &l in labels {
        counts[l.min(1)] += 1;
    }
    if labels.is_empty() {
        return Err(TrainError::EmptyData);
    }
    for c in 0..2 {
        if counts[c] == 0 {
            return Err(TrainError::SingleClass(1 - c));
        }
    }
    let n = labels.len() as f64;
    Ok([n / (2.0 * counts[0] as f64), n / (2.0 * counts[1] as f64)])
}

/// Mixes a base seed with two counters.
fn sub_seed(seed: u64, a: u64, b: u64) -> u64 {
    let mut x = seed ^ a.wrapping_mul(0x9E37_79B9_7F4A_7C15) ^ b.wrapping_mul(0xC2B2_AE3D_27D4_EB4F);
    x ^= x >> 31;
    x = x.wrapping_mul(0xBF58_476D_1CE4_E5B9);
    x ^ (x >> 29)
}

/// One epoch of minibatch training. `step_loss` builds the loss of one
/// example from its per-step seed; the batch gradient is the mean over its examples.
fn train_epoch<E>(
    params: &mut ModelParams,
    adam: &mut Adam,
    data: &[E],
    cfg: &TrainConfig,
    epoch: usize,
    step_base: &mut usize,
    step_loss: &impl Fn(&mut Graph<'_>, &E, u64) -> Result<Var, TrainError>,
) -> Result<f64, TrainError> {
    let order = shuffled_indices(data.len(), cfg.seed ^ epoch as u64);
    let dropout = params.config().dropout_prob;
    let mut total = 0.0;
    for batch in order.chunks(cfg.batch_size) {
        params.zero_grads();
        let scale = 1.0 / batch.len() as f32;
        for &i in batch {
            let seed = sub_seed(cfg.seed, epoch as u64, i as u64);
            let grads = {
                let mut g = Graph::training(params, dropout, seed);
                let loss = step_loss(&mut g, &data[i], seed)?;
                let v = g.scalar(loss)?;
                if !v.is_finite() {
                    return Err(TrainError::Diverged {
                        step: *step_base,
                        batch: batch.to_vec(),
                        loss: v,
                    });
                }
                total += v;
                g.backward(loss)?
            };
            params.accumulate_grads(&grads, scale);
        }
        adam.step(params, cfg.learning_rate);
        *step_base += 1;
    }
    Ok(total / data.len() as f64)
}

fn check_len(index: usize, len: usize, max: usize) -> Result<(), TrainError> {
    if len > max {
        return Err(TrainError::TooLong { index, len, max });
    }
    Ok(())
}

/// Keeps the parameters of the best monitored epoch and decides when to
/// stop.
struct Supervisor {
    stopper: EarlyStopper,
    best: Option<ModelParams>,
    history: Vec<EpochRecord>,
}

impl Supervisor {
    fn new(cfg: &TrainConfig, metric: StopMetric) -> Self {
        Self {
            stopper: EarlyStopper::new(metric, cfg.patience, cfg.min_delta),
            best: None,
            history: Vec::new(),
        }
    }

    /// Returns true when training should stop.
    fn end_epoch(&mut self, params: &ModelParams, record: EpochRecord) -> bool {
        let value = match self.stopper.metric {
            StopMetric::ValLoss => record.val_loss.unwrap_or(f64::NAN),
            StopMetric::ValAccuracy => record.val_accuracy.unwrap_or(f64::NAN),
        };
        let decision = self.stopper.observe(record.epoch, value);
        self.history.push(record);
        if decision == StopDecision::Improved {
            self.best = Some(params.clone());
        }
        decision == StopDecision::Stop
    }
}

fn elapsed_ms(t: Instant) -> u64 {
    t.elapsed().as_millis() as u64
}

/// Trained model plus per-epoch history.
#[derive(Debug, Clone)]
pub struct Trained<M> {
    pub model: M,
    pub history: Vec<EpochRecord>,
}

/// Encoder input and decoder target tokens of one next-packet pair.
#[derive(Debug, Clone, PartialEq)]
pub struct Seq2SeqExample {
    pub source: Vec<u32>,
    pub target_body: Vec<u32>,
}

/// Tokens for each `(current, next)` pair: the current packet with BOS/EOS
/// and the next packet's bare body.
pub fn encode_next_packet_pairs(
    pairs: &[(PacketRecord, PacketRecord)],
    vocab: &BpeVocab,
    features: &[String],
) -> Result<Vec<Seq2SeqExample>, TrainError> {
    pairs
        .iter()
        .map(|(cur, next)| {
            Ok(Seq2SeqExample {
                source: vocab.encode(&serialize_packet(cur, features)?, true).ids,
                target_body: vocab.encode(&serialize_packet(next, features)?, false).ids,
            })
        })
        .collect()
}

fn predictor_val_loss(params: &ModelParams, data: &[Seq2SeqExample]) -> Result<f64, TrainError> {
    let mut total = 0.0;
    for ex in data {
        let mut g = Graph::new(params);
        let (inp, tgt) = teacher_forcing(&ex.target_body);
        let src: Vec<usize> = ex.source.iter().map(|&i| i as usize).collect();
        let loss = PredictorModel::loss(&mut g, &src, &inp, &tgt)?;
        total += g.scalar(loss)?;
    }
    Ok(total / data.len().max(1) as f64)
}

/// Seq2seq training on next-packet pairs, mixing in denoising steps that
/// reconstruct the current packet from a span-masked copy. `val` may be
/// empty, in which case the training loss is monitored instead.
pub fn train_predictor(
    train: &[Seq2SeqExample],
    val: &[Seq2SeqExample],
    model_cfg: ModelConfig,
    meta: ModelMeta,
    cfg: &TrainConfig,
) -> Result<Trained<PredictorModel>, TrainError> {
    cfg.validate()?;
    if train.is_empty() {
        return Err(TrainError::EmptyData);
    }
    let max = model_cfg.max_seq_len.min(cfg.max_seq_len);
    for (i, ex) in train.iter().chain(val).enumerate() {
        check_len(i, ex.source.len(), max)?;
        check_len(i, ex.target_body.len() + 1, max)?;
    }
    let mut model = PredictorModel::new(model_cfg, meta, cfg.seed)?;
    let mut adam = Adam::new(&model.params, AdamConfig::default());
    let mut sup = Supervisor::new(cfg, StopMetric::ValLoss);
    let denoise = DenoiseConfig::default();
    let mut step = 0;

    let step_loss = |g: &mut Graph<'_>, ex: &Seq2SeqExample, seed: u64| -> Result<Var, TrainError> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let (src, body) = if cfg.denoise_fraction > 0.0 && rng.random_bool(cfg.denoise_fraction) {
            let (corrupt, original) =
                make_denoising_corruption(&TokenSequence::new(ex.source.clone()), &denoise, rng.random())?;
            let ids = &original.ids;
            let body = ids.strip_prefix(&[BOS]).unwrap_or(ids);
            let body = body.strip_suffix(&[EOS]).unwrap_or(body);
            (corrupt.ids, body.to_vec())
        } else {
            (ex.source.clone(), ex.target_body.clone())
        };
        let (inp, tgt) = teacher_forcing(&body);
        let src: Vec<usize> = src.iter().map(|&i| i as usize).collect();
        Ok(PredictorModel::loss(g, &src, &inp, &tgt)?)
    };

    for epoch in 1..=cfg.epochs {
        let t = Instant::now();
        let train_loss = train_epoch(&mut model.params, &mut adam, train, cfg, epoch, &mut step, &step_loss)?;
        let val_loss = if val.is_empty() {
            train_loss
        } else {
            predictor_val_loss(&model.params, val)?
        };
        let record = EpochRecord {
            epoch,
            phase: "seq2seq".into(),
            train_loss,
            val_loss: Some(val_loss),
            val_accuracy: None,
            wall_ms: elapsed_ms(t),
        };
        if sup.end_epoch(&model.params, record) {
            break;
        }
    }
    if let Some(best) = sup.best {
        model.params = best;
    }
    Ok(Trained {
        model,
        history: sup.history,
    })
}

/// A tokenized binary example: ids (trailing PAD removed) and class.
#[derive(Debug, Clone, PartialEq)]
pub struct LabeledSequence {
    pub ids: Vec<u32>,
    pub class: usize,
}

pub fn encode_pairs(
    pairs: &[PairExample],
    vocab: &BpeVocab,
    features: &[String],
    max_len: usize,
) -> Result<Vec<LabeledSequence>, TrainError> {
    pairs
        .iter()
        .map(|p| {
            let a = serialize_packet(&p.first, features)?;
            let b = serialize_packet(&p.second, features)?;
            let seq = make_pair_input(&a, &b, vocab, max_len)?;
            Ok(LabeledSequence {
                ids: strip_padding(&seq.ids).to_vec(),
                class: p.label.class(),
            })
        })
        .collect()
}

/// Labeled packets as BOS/EOS-wrapped token sequences. Unlabeled records are
/// skipped.
pub fn encode_packets(
    records: &[PacketRecord],
    vocab: &BpeVocab,
    features: &[String],
) -> Result<Vec<LabeledSequence>, TrainError> {
    let mut out = Vec::with_capacity(records.len());
    for r in records {
        if let Some(label) = &r.label {
            out.push(LabeledSequence {
                ids: vocab.encode(&serialize_packet(r, features)?, true).ids,
                class: label.class(),
            });
        }
    }
    Ok(out)
}

fn both_classes(data: &[LabeledSequence]) -> Result<(), TrainError> {
    if data.is_empty() {
        return Err(TrainError::EmptyData);
    }
    let first = data[0].class;
    if data.iter().all(|e| e.class == first) {
        return Err(TrainError::SingleClass(first));
    }
    Ok(())
}

fn as_usize(ids: &[u32]) -> Vec<usize> {
    ids.iter().map(|&i| i as usize).collect()
}

/// Mean loss and accuracy of a two-class head over `data`.
fn binary_val(
    params: &ModelParams,
    data: &[LabeledSequence],
    logits: impl Fn(&mut Graph<'_>, &[usize]) -> Result<Var, NnError>,
) -> Result<(f64, f64), TrainError> {
    let mut loss = 0.0;
    let mut correct = 0usize;
    for ex in data {
        let mut g = Graph::new(params);
        let l = logits(&mut g, &as_usize(&ex.ids))?;
        let pred = usize::from(crate::models::positive_probability(g.value(l)) > 0.5);
        correct += usize::from(pred == ex.class);
        let ce = classification_loss(&mut g, l, ex.class, 1.0)?;
        loss += g.scalar(ce)?;
    }
    let n = data.len().max(1) as f64;
    Ok((loss / n, correct as f64 / n))
}

/// Masked-token warm-up, then pair classification on the CLS head.
pub fn train_assessor(
    train: &[LabeledSequence],
    val: &[LabeledSequence],
    vocab: &BpeVocab,
    model_cfg: ModelConfig,
    meta: ModelMeta,
    cfg: &TrainConfig,
) -> Result<Trained<AssessorModel>, TrainError> {
    cfg.validate()?;
    both_classes(train)?;
    let max = model_cfg.max_seq_len.min(cfg.max_seq_len);
    for (i, ex) in train.iter().chain(val).enumerate() {
        check_len(i, ex.ids.len(), max)?;
    }
    let mut model = AssessorModel::new(model_cfg, meta, cfg.seed)?;
    let mut history = Vec::new();
    let mut step = 0;

    if cfg.mlm_warmup_epochs > 0 {
        let mlm = MlmConfig {
            mask_prob: cfg.mask_prob,
            ..MlmConfig::default()
        };
        let mut adam = Adam::new(&model.params, AdamConfig::default());
        let mlm_step = |g: &mut Graph<'_>, ex: &LabeledSequence, seed: u64| -> Result<Var, TrainError> {
            let batch = make_mlm_corruption(&TokenSequence::new(ex.ids.clone()), &mlm, vocab, seed)?;
            let h = AssessorModel::hidden(g, &batch.corrupted_ids.as_usize())?;
            let w_v = g.param("mlm.Wv")?;
            Ok(mlm_loss(g, h, w_v, &batch.masked_positions, &as_usize(&batch.target_ids))?.loss)
        };
        for epoch in 1..=cfg.mlm_warmup_epochs {
            let t = Instant::now();
            let train_loss = train_epoch(&mut model.params, &mut adam, train, cfg, epoch, &mut step, &mlm_step)?;
            history.push(EpochRecord {
                epoch,
                phase: "mlm".into(),
                train_loss,
                val_loss: None,
                val_accuracy: None,
                wall_ms: elapsed_ms(t),
            });
        }
    }

    let weight = 1.0;
    let pair_step = |g: &mut Graph<'_>, ex: &LabeledSequence, _: u64| -> Result<Var, TrainError> {
        let logits = AssessorModel::pair_logits(g, &as_usize(&ex.ids))?;
        Ok(classification_loss(g, logits, ex.class, weight)?)
    };
    let mut adam = Adam::new(&model.params, AdamConfig::default());
    let mut sup = Supervisor::new(cfg, cfg.metric);
    for epoch in 1..=cfg.epochs {
        let t = Instant::now();
        let train_loss = train_epoch(
            &mut model.params,
            &mut adam,
            train,
            cfg,
            epoch + cfg.mlm_warmup_epochs,
            &mut step,
            &pair_step,
        )?;
        let (val_loss, val_acc) = if val.is_empty() {
            binary_val(&model.params, train, AssessorModel::pair_logits)?
        } else {
            binary_val(&model.params, val, AssessorModel::pair_logits)?
        };
        let record = EpochRecord {
            epoch,
            phase: "pair".into(),
            train_loss,
            val_loss: Some(val_loss),
            val_accuracy: Some(val_acc),
            wall_ms: elapsed_ms(t),
        };
        if sup.end_epoch(&model.params, record) {
            break;
        }
    }
    if let Some(best) = sup.best {
        model.params = best;
    }
    history.extend(sup.history);
    Ok(Trained { model, history })
}

/// Supervised classification with inverse-frequency class weights.
pub fn train_classifier(
    train: &[LabeledSequence],
    val: &[LabeledSequence],
    model_cfg: ModelConfig,
    meta: ModelMeta,
    cfg: &TrainConfig,
) -> Result<Trained<ClassifierModel>, TrainError> {
    cfg.validate()?;
    both_classes(train)?;
    let max = model_cfg.max_seq_len.min(cfg.max_seq_len);
    for (i, ex) in train.iter().chain(val).enumerate() {
        check_len(i, ex.ids.len(), max)?;
    }
    let labels: Vec<usize> = train.iter().map(|e| e.class).collect();
    let weights = class_weights(&labels)?;
    let mut model = ClassifierModel::new(model_cfg, meta, cfg.seed)?;
    let mut adam = Adam::new(&model.params, AdamConfig::default());
    let mut sup = Supervisor::new(cfg, cfg.metric);
    let mut step = 0;
    let step_loss = |g: &mut Graph<'_>, ex: &LabeledSequence, _: u64| -> Result<Var, TrainError> {
        let logits = ClassifierModel::logits(g, &as_usize(&ex.ids))?;
        Ok(classification_loss(g, logits, ex.class, weights[ex.class] as f32)?)
    };
    for epoch in 1..=cfg.epochs {
        let t = Instant::now();
        let train_loss = train_epoch(&mut model.params, &mut adam, train, cfg, epoch, &mut step, &step_loss)?;
        let (val_loss, val_acc) = if val.is_empty() {
            binary_val(&model.params, train, ClassifierModel::logits)?
        } else {
            binary_val(&model.params, val, ClassifierModel::logits)?
        };
        let record = EpochRecord {
            epoch,
            phase: "classify".into(),
            train_loss,
            val_loss: Some(val_loss),
            val_accuracy: Some(val_acc),
            wall_ms: elapsed_ms(t),
        };
        if sup.end_epoch(&model.params, record) {
            break;
        }
    }
    if let Some(best) = sup.best {
        model.params = best;
    }
    Ok(Trained {
        model,
        history: sup.history,
    })
}

pub fn evaluate_classifier(m: &ClassifierModel, data: &[LabeledSequence]) -> Result<EvalReport, TrainError> {
    let mut truth = Vec::with_capacity(data.len());
    let mut scores = Vec::with_capacity(data.len());
    for ex in data {
        truth.push(ex.class);
        scores.push(m.score(&TokenSequence::new(ex.ids.clone()))?);
    }
    Ok(EvalReport::from_scores(["Normal", "Malicious"], &truth, &scores))
}

pub fn evaluate_assessor(m: &AssessorModel, data: &[LabeledSequence]) -> Result<EvalReport, TrainError> {
    let mut truth = Vec::with_capacity(data.len());
    let mut scores = Vec::with_capacity(data.len());
    for ex in data {
        truth.push(ex.class);
        scores.push(m.non_successive_probability(&TokenSequence::new(ex.ids.clone()))?);
    }
    Ok(EvalReport::from_scores(["Successive", "NonSuccessive"], &truth, &scores))
}
