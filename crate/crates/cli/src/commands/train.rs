//! Model training and evaluation commands.

use std::path::Path;

use pktseer_core::ingest::{assemble_flows, make_next_packet_pairs, make_pair_dataset};
use pktseer_core::metrics::EvalReport;
use pktseer_core::models::{checkpoint_kind, AssessorModel, ClassifierModel, ModelError, ModelKind, ModelMeta, PredictorModel};
use pktseer_core::tokenizer::BpeVocab;
use pktseer_core::trainer::{
    encode_next_packet_pairs, encode_packets, encode_pairs, evaluate_assessor, evaluate_classifier, history_jsonl,
    split, stratified_split, train_assessor, train_classifier, train_predictor, EpochRecord, LabeledSequence,
    StopMetric, TrainConfig,
};
use pktseer_core::PacketRecord;
use pktseer_nn::ModelConfig;

use super::{beside, columns, read_input, read_table, read_vocab, write_artifact};
use crate::args::{EvalArgs, MetricChoice, ModelChoice, Subset, TrainArgs};
use crate::error::CliError;
use crate::manifest::write_file;
use crate::settings::Settings;
use crate::Run;

const DEFAULT_NEGATIVE_RATIO: f64 = 1.0;

fn base_config(model: ModelChoice) -> TrainConfig {
    match model {
        ModelChoice::Predictor => TrainConfig::predictor(),
        ModelChoice::Assessor => TrainConfig::assessor(),
        ModelChoice::Classifier => TrainConfig::classifier(),
    }
}

fn train_config(a: &TrainArgs, s: &mut Settings, sec: &[&str]) -> Result<TrainConfig, CliError> {
    let d = base_config(a.model);
    let metric = match s.get_opt(a.metric, sec, "metric")? {
        Some(MetricChoice::ValLoss) => StopMetric::ValLoss,
        Some(MetricChoice::ValAccuracy) => StopMetric::ValAccuracy,
        None => d.metric,
    };
    s.record("metric", &metric.as_str());
    Ok(TrainConfig {
        epochs: s.get(a.epochs, sec, "epochs", d.epochs)?,
        batch_size: s.get(a.batch_size, sec, "batch_size", d.batch_size)?,
        learning_rate: s.get(a.learning_rate, sec, "learning_rate", d.learning_rate)?,
        seed: s.seed(a.seed, sec)?,
        patience: s.get(a.patience, sec, "patience", d.patience)?,
        metric,
        min_delta: s.get(a.min_delta, sec, "min_delta", d.min_delta)?,
        max_seq_len: d.max_seq_len,
        val_fraction: s.get(a.val_fraction, sec, "val_fraction", d.val_fraction)?,
        denoise_fraction: s.get(a.denoise_fraction, sec, "denoise_fraction", d.denoise_fraction)?,
        mlm_warmup_epochs: s.get(a.warmup_epochs, sec, "warmup_epochs", d.mlm_warmup_epochs)?,
        mask_prob: s.get(a.mask_prob, sec, "mask_prob", d.mask_prob)?,
    })
}

fn model_config(a: &TrainArgs, s: &mut Settings, sec: &[&str], vocab: &BpeVocab) -> Result<ModelConfig, CliError> {
    let d = ModelConfig::default();
    Ok(ModelConfig {
        vocab_size: vocab.len(),
        d_model: s.get(a.d_model, sec, "d_model", d.d_model)?,
        n_heads: s.get(a.n_heads, sec, "n_heads", d.n_heads)?,
        n_enc_layers: s.get(a.enc_layers, sec, "enc_layers", d.n_enc_layers)?,
        n_dec_layers: s.get(a.dec_layers, sec, "dec_layers", d.n_dec_layers)?,
        d_ff: s.get(a.d_ff, sec, "d_ff", d.d_ff)?,
        max_seq_len: s.get(a.max_seq_len, sec, "max_seq_len", d.max_seq_len)?,
        dropout_prob: s.get(a.dropout, sec, "dropout", d.dropout_prob)?,
    })
}

/// Labeled sequences for a two-class model, built the same way by `train`
/// and `evaluate` so that a seed reproduces the validation split.
fn labeled_data(
    kind: ModelKind,
    records: &[PacketRecord],
    vocab: &BpeVocab,
    features: &[String],
    max_len: usize,
    negative_ratio: f64,
    seed: u64,
) -> Result<Vec<LabeledSequence>, CliError> {
    match kind {
        ModelKind::Assessor => {
            let flows = assemble_flows(records.iter().cloned());
            let pairs = make_pair_dataset(&flows, negative_ratio, seed)?;
            Ok(encode_pairs(&pairs, vocab, features, max_len)?)
        }
        ModelKind::Classifier => Ok(encode_packets(records, vocab, features)?),
        ModelKind::Predictor => Err(CliError::usage("predictor checkpoints have no classification report")),
    }
}

fn write_history(run: &mut Run, path: &Path, history: &[EpochRecord]) -> Result<(), CliError> {
    write_file(path, history_jsonl(history).as_bytes())?;
    let m = &mut run.manifest;
    m.log(path);
    m.count("epochs_run", history.len());
    if let Some(last) = history.last() {
        m.count("final_train_loss", last.train_loss);
    }
    let best_loss = history.iter().filter_map(|h| h.val_loss).fold(f64::INFINITY, f64::min);
    if best_loss.is_finite() {
        m.count("best_val_loss", best_loss);
    }
    if let Some(acc) = history.iter().filter_map(|h| h.val_accuracy).reduce(f64::max) {
        m.count("best_val_accuracy", acc);
    }
    Ok(())
}

fn save_bytes(f: impl FnOnce(&mut Vec<u8>) -> Result<(), ModelError>) -> Result<Vec<u8>, CliError> {
    let mut buf = Vec::new();
    f(&mut buf)?;
    Ok(buf)
}

pub(crate) fn train(a: &TrainArgs, run: &mut Run) -> Result<(), CliError> {
    let m = a.model.as_str();
    let train_sec = [format!("train.{m}"), "train".to_string()];
    let train_sec: Vec<&str> = train_sec.iter().map(String::as_str).collect();
    let model_sec = [format!("model.{m}"), "model".to_string()];
    let model_sec: Vec<&str> = model_sec.iter().map(String::as_str).collect();

    let cols = columns(run, &a.columns)?;
    let vocab = read_vocab(run, &a.vocab)?;
    let mut cfg = train_config(a, &mut run.settings, &train_sec)?;
    let model_cfg = model_config(a, &mut run.settings, &model_sec, &vocab)?;
    cfg.max_seq_len = model_cfg.max_seq_len;
    run.manifest.seed = Some(cfg.seed);

    let table = read_table(run, &a.data, &cols)?;
    let features = table.features.clone();
    let meta = ModelMeta::new(&vocab, &features);
    run.manifest.count("rows", table.records.len());

    let (bytes, history) = match a.model {
        ModelChoice::Predictor => {
            let flows = assemble_flows(table.records.iter().cloned());
            let pairs = make_next_packet_pairs(&flows);
            let data = encode_next_packet_pairs(&pairs, &vocab, &features)?;
            let (tr, val) = split(&data, cfg.val_fraction, cfg.seed)?;
            run.manifest.count("examples", data.len());
            run.manifest.count("train_examples", tr.len());
            run.manifest.count("val_examples", val.len());
            let t = train_predictor(&tr, &val, model_cfg, meta, &cfg)?;
            (save_bytes(|b| t.model.save(b))?, t.history)
        }
        ModelChoice::Assessor | ModelChoice::Classifier => {
            let kind = if a.model == ModelChoice::Assessor {
                ModelKind::Assessor
            } else {
                ModelKind::Classifier
            };
            let ratio = match kind {
                ModelKind::Assessor => {
                    run.settings
                        .get(a.negative_ratio, &train_sec, "negative_ratio", DEFAULT_NEGATIVE_RATIO)?
                }
                _ => DEFAULT_NEGATIVE_RATIO,
            };
            let data = labeled_data(kind, &table.records, &vocab, &features, cfg.max_seq_len, ratio, cfg.seed)?;
            let (tr, val) = stratified_split(&data, |e| e.class, cfg.val_fraction, cfg.seed)?;
            run.manifest.count("examples", data.len());
            run.manifest.count("train_examples", tr.len());
            run.manifest.count("val_examples", val.len());
            if kind == ModelKind::Assessor {
                let t = train_assessor(&tr, &val, &vocab, model_cfg, meta, &cfg)?;
                (save_bytes(|b| t.model.save(b))?, t.history)
            } else {
                let t = train_classifier(&tr, &val, model_cfg, meta, &cfg)?;
                (save_bytes(|b| t.model.save(b))?, t.history)
            }
        }
    };
    write_artifact(run, &a.out, &bytes)?;
    let history_path = a.history.clone().unwrap_or_else(|| beside(&a.out, ".history.jsonl"));
    write_history(run, &history_path, &history)?;
    for h in &history {
        let val = match (h.val_loss, h.val_accuracy) {
            (Some(l), Some(acc)) => format!(" val_loss {l:.4} val_acc {acc:.4}"),
            (Some(l), None) => format!(" val_loss {l:.4}"),
            _ => String::new(),
        };
        eprintln!("epoch {} [{}] train_loss {:.4}{val}", h.epoch, h.phase, h.train_loss);
    }
    Ok(())
}

enum Evaluable {
    Assessor(AssessorModel),
    Classifier(ClassifierModel),
}

impl Evaluable {
    fn meta(&self) -> &ModelMeta {
        match self {
            Evaluable::Assessor(m) => &m.meta,
            Evaluable::Classifier(m) => &m.meta,
        }
    }

    fn kind(&self) -> ModelKind {
        match self {
            Evaluable::Assessor(_) => ModelKind::Assessor,
            Evaluable::Classifier(_) => ModelKind::Classifier,
        }
    }

    fn max_seq_len(&self) -> usize {
        match self {
            Evaluable::Assessor(m) => m.params.config().max_seq_len,
            Evaluable::Classifier(m) => m.params.config().max_seq_len,
        }
    }

    fn evaluate(&self, data: &[LabeledSequence]) -> Result<EvalReport, CliError> {
        Ok(match self {
            Evaluable::Assessor(m) => evaluate_assessor(m, data)?,
            Evaluable::Classifier(m) => evaluate_classifier(m, data)?,
        })
    }
}

fn load_evaluable(run: &mut Run, path: &Path) -> Result<Evaluable, CliError> {
    let bytes = read_input(run, path)?;
    let ctx = |e: ModelError| CliError::from(e).context(path);
    match checkpoint_kind(bytes.as_slice()).map_err(ctx)? {
        ModelKind::Assessor => Ok(Evaluable::Assessor(AssessorModel::load(bytes.as_slice()).map_err(ctx)?)),
        ModelKind::Classifier => Ok(Evaluable::Classifier(ClassifierModel::load(bytes.as_slice()).map_err(ctx)?)),
        ModelKind::Predictor => {
            // Loading validates the file before the usage error is raised.
            PredictorModel::load(bytes.as_slice()).map_err(ctx)?;
            Err(CliError::usage(format!(
                "{}: predictor checkpoints are judged through `predict`, not `evaluate`",
                path.display()
            )))
        }
    }
}

pub(crate) fn evaluate(a: &EvalArgs, run: &mut Run) -> Result<(), CliError> {
    let cols = columns(run, &a.columns)?;
    let vocab = read_vocab(run, &a.vocab)?;
    let model = load_evaluable(run, &a.checkpoint)?;
    let meta = model.meta().clone();
    let digest = vocab.digest();
    if meta.vocab_digest != digest {
        return Err(ModelError::VocabMismatch {
            model: model.kind().as_str(),
            got: meta.vocab_digest,
            want: digest,
        }
        .into());
    }

    // The split settings fall back to the training sections so that one
    // config file reproduces the training split.
    let kind = model.kind().as_str();
    let sec_names = ["evaluate".to_string(), format!("train.{kind}"), "train".to_string()];
    let sec: Vec<&str> = sec_names.iter().map(String::as_str).collect();
    let s = &mut run.settings;
    let subset = s.get(a.subset, &sec[..1], "subset", Subset::All)?;
    let base = match model.kind() {
        ModelKind::Classifier => TrainConfig::classifier(),
        _ => TrainConfig::assessor(),
    };
    let val_fraction = s.get(a.val_fraction, &sec, "val_fraction", base.val_fraction)?;
    let seed = s.seed(a.seed, &sec)?;
    let ratio = match model.kind() {
        ModelKind::Assessor => s.get(a.negative_ratio, &sec, "negative_ratio", DEFAULT_NEGATIVE_RATIO)?,
        _ => DEFAULT_NEGATIVE_RATIO,
    };
    run.manifest.seed = Some(seed);

    let table = read_table(run, &a.data, &cols)?;
    let data = labeled_data(
        model.kind(),
        &table.records,
        &vocab,
        &meta.features,
        model.max_seq_len(),
        ratio,
        seed,
    )?;
    let data = match subset {
        Subset::All => data,
        Subset::Val => stratified_split(&data, |e| e.class, val_fraction, seed)?.1,
    };
    if data.is_empty() {
        return Err(CliError::data("no labeled examples to evaluate"));
    }
    let report = model.evaluate(&data)?;
    let table_text = report.table();
    print!("{table_text}");

    let dir = &a.out_dir;
    write_artifact(run, &dir.join("report.txt"), table_text.as_bytes())?;
    let mut json = serde_json::to_string_pretty(&report).map_err(|e| CliError::data(e.to_string()))?;
    json.push('\n');
    write_artifact(run, &dir.join("report.json"), json.as_bytes())?;
    write_artifact(run, &dir.join("roc.csv"), report.roc_csv().as_bytes())?;

    let m = &mut run.manifest;
    m.count("model", kind);
    m.count("subset", subset.as_str());
    m.count("examples", data.len());
    m.count("accuracy", report.accuracy);
    m.count("auc", report.auc);
    Ok(())
}
