//! The three task models and the predict, assess, classify pipeline.
//!
//! - [`PredictorModel`]: encoder-decoder with a language-model head. The
//!   encoder reads the current packet, the decoder writes the next one.
//! - [`AssessorModel`]: bidirectional encoder with a masked-token head and a
//!   two-class head on the CLS position, judging whether the second packet of
//!   a pair directly follows the first.
//! - [`ClassifierModel`]: encoder-decoder that reads the same packet on both
//!   sides and classifies from the final decoder position.
//!
//! Two-class probabilities are computed in `f64` from the logit difference,
//! so they sum to one up to a single rounding.

use std::collections::BTreeMap;
use std::io::{Read, Write};

use pktseer_nn::layers::{self, INIT_STD};
use pktseer_nn::loss::{autoregressive_nll, lm_logits};
use pktseer_nn::{read_checkpoint, write_checkpoint, Graph, ModelConfig, ModelParams, NnError, ParamInit, Var};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::Serialize;
use thiserror::Error;

use crate::record::{Label, PacketRecord, PairLabel};
use crate::tokenizer::{
    make_pair_input, parse_packet_text, serialize_packet, BpeVocab, TextError, TokenSequence, TokenizerError, BOS,
    CLS, EOS, PAD,
};

#[derive(Debug, Error)]
pub enum ModelError {
    #[error(transparent)]
    Nn(#[from] NnError),
    #[error(transparent)]
    Tokenizer(#[from] TokenizerError),
    #[error(transparent)]
    Text(#[from] TextError),
    #[error("pair input must start with CLS")]
    MissingCls,
    #[error("empty input sequence")]
    EmptyInput,
    #[error("checkpoint holds a {got} model, expected {want}")]
    WrongKind { got: String, want: String },
    #[error("checkpoint is missing metadata {0:?}")]
    MissingMetadata(&'static str),
    #[error("{model} was trained with vocabulary {got}, pipeline uses {want}")]
    VocabMismatch { model: &'static str, got: String, want: String },
    #[error("models disagree on the feature list: {0}")]
    FeatureMismatch(String),
    #[error("model vocabulary size {model} is smaller than tokenizer size {vocab}")]
    VocabSize { model: usize, vocab: usize },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum ModelKind {
    Predictor,
    Assessor,
    Classifier,
}

impl ModelKind {
    pub fn as_str(self) -> &'static str {
        match self {
            ModelKind::Predictor => "predictor",
            ModelKind::Assessor => "assessor",
            ModelKind::Classifier => "classifier",
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        match s {
            "predictor" => Some(ModelKind::Predictor),
            "assessor" => Some(ModelKind::Assessor),
            "classifier" => Some(ModelKind::Classifier),
            _ => None,
        }
    }
}

/// What a model was trained against: the vocabulary digest and the ordered
/// feature list of its packet texts.
#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct ModelMeta {
    pub vocab_digest: String,
    pub features: Vec<String>,
}

impl ModelMeta {
    pub fn new(vocab: &BpeVocab, features: &[String]) -> Self {
        Self {
            vocab_digest: vocab.digest(),
            features: features.to_vec(),
        }
    }
}

fn save_params<W: Write>(w: W, kind: ModelKind, params: &ModelParams, meta: &ModelMeta) -> Result<(), ModelError> {
    let mut md = BTreeMap::new();
    md.insert("kind".to_string(), kind.as_str().to_string());
    md.insert("vocab_digest".to_string(), meta.vocab_digest.clone());
    md.insert("features".to_string(), meta.features.join(","));
    write_checkpoint(w, params, &md)?;
    Ok(())
}

/// The model kind recorded in a checkpoint.
pub fn checkpoint_kind<R: Read>(r: R) -> Result<ModelKind, ModelError> {
    let ck = read_checkpoint(r)?;
    let got = ck.metadata.get("kind").ok_or(ModelError::MissingMetadata("kind"))?;
    ModelKind::parse(got).ok_or_else(|| ModelError::WrongKind {
        got: got.clone(),
        want: "predictor, assessor or classifier".into(),
    })
}

fn load_params<R: Read>(r: R, kind: ModelKind) -> Result<(ModelParams, ModelMeta), ModelError> {
    let ck = read_checkpoint(r)?;
    let got = ck.metadata.get("kind").ok_or(ModelError::MissingMetadata("kind"))?;
    if got != kind.as_str() {
        return Err(ModelError::WrongKind {
            got: got.clone(),
            want: kind.as_str().to_string(),
        });
    }
    let vocab_digest = ck
        .metadata
        .get("vocab_digest")
        .ok_or(ModelError::MissingMetadata("vocab_digest"))?
        .clone();
    let features = ck.metadata.get("features").ok_or(ModelError::MissingMetadata("features"))?;
    let features = if features.is_empty() {
        Vec::new()
    } else {
        features.split(',').map(str::to_string).collect()
    };
    Ok((ck.params, ModelMeta { vocab_digest, features }))
}

fn check_vocab(cfg: &ModelConfig, vocab: &BpeVocab) -> Result<(), ModelError> {
    if cfg.vocab_size < vocab.len() {
        return Err(ModelError::VocabSize {
            model: cfg.vocab_size,
            vocab: vocab.len(),
        });
    }
    Ok(())
}

/// `P(class 1)` from two logits, `1 / (1 + exp(l0 − l1))`.
pub fn positive_probability(logits: &[f32]) -> f64 {
    let diff = logits[0] as f64 - logits[1] as f64;
    1.0 / (1.0 + diff.exp())
}

fn ids_usize(ids: &[u32]) -> Vec<usize> {
    ids.iter().map(|&i| i as usize).collect()
}

/// Index of the largest value; the first one wins ties.
fn argmax(xs: &[f32]) -> usize {
    let mut best = 0;
    for (i, &x) in xs.iter().enumerate() {
        if x > xs[best] {
            best = i;
        }
    }
    best
}

fn init_two_class_head(params: &mut ModelParams, rng: &mut ChaCha8Rng, prefix: &str) -> Result<(), NnError> {
    let d = params.config().d_model;
    layers::init_linear(params, rng, &format!("{prefix}.W"), &format!("{prefix}.b"), d, 2)
}

/// Zeroes a two-class head so every input scores 0.5 / 0.5.
fn zero_head(params: &mut ModelParams, prefix: &str) {
    for p in ["W", "b"] {
        if let Some(t) = params.get_mut(&format!("{prefix}.{p}")) {
            t.data_mut().fill(0.0);
        }
    }
}

/// Decoder inputs and targets for teacher forcing: `[BOS] body` predicts
/// `body [EOS]`.
pub fn teacher_forcing(body: &[u32]) -> (Vec<usize>, Vec<usize>) {
    let mut input = vec![BOS as usize];
    input.extend(body.iter().map(|&i| i as usize));
    let mut target: Vec<usize> = body.iter().map(|&i| i as usize).collect();
    target.push(EOS as usize);
    (input, target)
}

#[derive(Debug, Clone, PartialEq)]
pub struct PredictorModel {
    pub params: ModelParams,
    pub meta: ModelMeta,
}

impl PredictorModel {
    pub fn new(cfg: ModelConfig, meta: ModelMeta, seed: u64) -> Result<Self, ModelError> {
        cfg.validate()?;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut params = ModelParams::new(cfg.clone());
        layers::init_token_embedding(&mut params, &mut rng)?;
        layers::init_encoder(&mut params, &mut rng)?;
        layers::init_decoder(&mut params, &mut rng)?;
        params.create("lm.Wv", vec![cfg.d_model, cfg.vocab_size], ParamInit::Normal { std: INIT_STD }, &mut rng)?;
        Ok(Self { params, meta })
    }

    pub fn save<W: Write>(&self, w: W) -> Result<(), ModelError> {
        save_params(w, ModelKind::Predictor, &self.params, &self.meta)
    }

    pub fn load<R: Read>(r: R) -> Result<Self, ModelError> {
        let (params, meta) = load_params(r, ModelKind::Predictor)?;
        Ok(Self { params, meta })
    }

    /// Mean teacher-forced NLL of `target` given `source`, on any graph built
    /// over these parameters.
    pub fn loss(g: &mut Graph<'_>, source: &[usize], dec_input: &[usize], target: &[usize]) -> Result<Var, NnError> {
        let enc = layers::encoder_forward(g, source)?;
        let enc = layers::final_norm(g, enc, "enc")?;
        let dec = layers::decoder_forward(g, dec_input, enc)?;
        let dec = layers::final_norm(g, dec, "dec")?;
        let w_v = g.param("lm.Wv")?;
        let logits = lm_logits(g, dec, w_v)?;
        autoregressive_nll(g, logits, target)
    }

    /// Greedy decoding. Stops at EOS, after `max_new` tokens, or when the
    /// decoder positions run out. The returned ids exclude BOS and EOS.
    pub fn generate_ids(&self, current: &TokenSequence, max_new: usize) -> Result<Vec<u32>, ModelError> {
        if current.is_empty() {
            return Err(ModelError::EmptyInput);
        }
        let cfg = self.params.config();
        let (enc_vals, rows) = {
            let mut g = Graph::new(&self.params);
            let enc = layers::encoder_forward(&mut g, &current.as_usize())?;
            let enc = layers::final_norm(&mut g, enc, "enc")?;
            (g.value(enc).to_vec(), g.shape(enc).0)
        };
        let mut prefix = vec![BOS as usize];
        let mut out = Vec::new();
        while out.len() < max_new && prefix.len() <= cfg.max_seq_len {
            let mut g = Graph::new(&self.params);
            let enc = g.input(enc_vals.clone(), rows, cfg.d_model, false)?;
            let dec = layers::decoder_forward(&mut g, &prefix, enc)?;
            let last = g.gather(dec, &[prefix.len() - 1])?;
            let last = layers::final_norm(&mut g, last, "dec")?;
            let w_v = g.param("lm.Wv")?;
            let logits = lm_logits(&mut g, last, w_v)?;
            let next = argmax(g.value(logits)) as u32;
            if next == EOS {
                break;
            }
            out.push(next);
            prefix.push(next as usize);
        }
        Ok(out)
    }
}

/// Greedy next-packet text for the tokens of the current packet.
pub fn generate_next_packet(
    m: &PredictorModel,
    current: &TokenSequence,
    vocab: &BpeVocab,
    max_new: usize,
) -> Result<String, ModelError> {
    let ids = m.generate_ids(current, max_new)?;
    Ok(vocab.decode(&ids)?)
}

#[derive(Debug, Clone, PartialEq)]
pub struct AssessorModel {
    pub params: ModelParams,
    pub meta: ModelMeta,
}

/// Drops trailing PAD. With no other padding in a packed pair this gives
/// every real position the same output as a key-padding mask would.
pub fn strip_padding(ids: &[u32]) -> &[u32] {
    let end = ids.iter().rposition(|&i| i != PAD).map_or(0, |p| p + 1);
    &ids[..end]
}

impl AssessorModel {
    pub fn new(cfg: ModelConfig, meta: ModelMeta, seed: u64) -> Result<Self, ModelError> {
        cfg.validate()?;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut params = ModelParams::new(cfg.clone());
        layers::init_token_embedding(&mut params, &mut rng)?;
        layers::init_encoder(&mut params, &mut rng)?;
        params.create("mlm.Wv", vec![cfg.d_model, cfg.vocab_size], ParamInit::Normal { std: INIT_STD }, &mut rng)?;
        init_two_class_head(&mut params, &mut rng, "pair")?;
        Ok(Self { params, meta })
    }

    pub fn save<W: Write>(&self, w: W) -> Result<(), ModelError> {
        save_params(w, ModelKind::Assessor, &self.params, &self.meta)
    }

    pub fn load<R: Read>(r: R) -> Result<Self, ModelError> {
        let (params, meta) = load_params(r, ModelKind::Assessor)?;
        Ok(Self { params, meta })
    }

    pub fn zero_head(&mut self) {
        zero_head(&mut self.params, "pair");
    }

    /// Final-norm encoder states for an unpadded pair input.
    pub fn hidden(g: &mut Graph<'_>, ids: &[usize]) -> Result<Var, NnError> {
        let h = layers::encoder_forward(g, ids)?;
        layers::final_norm(g, h, "enc")
    }

    /// `[1, 2]` logits from the CLS position.
    pub fn pair_logits(g: &mut Graph<'_>, ids: &[usize]) -> Result<Var, NnError> {
        let h = Self::hidden(g, ids)?;
        let cls = g.gather(h, &[0])?;
        layers::linear(g, cls, "pair.W", "pair.b")
    }

    /// `P(NonSuccessive)` for a packed pair input.
    pub fn non_successive_probability(&self, pair_seq: &TokenSequence) -> Result<f64, ModelError> {
        let ids = strip_padding(&pair_seq.ids);
        if ids.first() != Some(&CLS) {
            return Err(ModelError::MissingCls);
        }
        let mut g = Graph::new(&self.params);
        let logits = Self::pair_logits(&mut g, &ids_usize(ids))?;
        Ok(positive_probability(g.value(logits)))
    }
}

/// Verdict and its probability. Ties go to Successive.
pub fn assess_pair(m: &AssessorModel, pair_seq: &TokenSequence) -> Result<(PairLabel, f64), ModelError> {
    let p = m.non_successive_probability(pair_seq)?;
    Ok(if p > 0.5 {
        (PairLabel::NonSuccessive, p)
    } else {
        (PairLabel::Successive, 1.0 - p)
    })
}

#[derive(Debug, Clone, PartialEq)]
pub struct ClassifierModel {
    pub params: ModelParams,
    pub meta: ModelMeta,
}

impl ClassifierModel {
    pub fn new(cfg: ModelConfig, meta: ModelMeta, seed: u64) -> Result<Self, ModelError> {
        cfg.validate()?;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut params = ModelParams::new(cfg);
        layers::init_token_embedding(&mut params, &mut rng)?;
        layers::init_encoder(&mut params, &mut rng)?;
        layers::init_decoder(&mut params, &mut rng)?;
        init_two_class_head(&mut params, &mut rng, "cls")?;
        Ok(Self { params, meta })
    }

    pub fn save<W: Write>(&self, w: W) -> Result<(), ModelError> {
        save_params(w, ModelKind::Classifier, &self.params, &self.meta)
    }

    pub fn load<R: Read>(r: R) -> Result<Self, ModelError> {
        let (params, meta) = load_params(r, ModelKind::Classifier)?;
        Ok(Self { params, meta })
    }

    pub fn zero_head(&mut self) {
        zero_head(&mut self.params, "cls");
    }

    /// `[1, 2]` logits: the packet feeds both stacks and the head reads the
    /// last decoder position.
    pub fn logits(g: &mut Graph<'_>, ids: &[usize]) -> Result<Var, NnError> {
        let enc = layers::encoder_forward(g, ids)?;
        let enc = layers::final_norm(g, enc, "enc")?;
        let dec = layers::decoder_forward(g, ids, enc)?;
        let last = g.gather(dec, &[ids.len() - 1])?;
        let last = layers::final_norm(g, last, "dec")?;
        layers::linear(g, last, "cls.W", "cls.b")
    }

    /// `P(Malicious)`.
    pub fn score(&self, packet_seq: &TokenSequence) -> Result<f64, ModelError> {
        if packet_seq.is_empty() {
            return Err(ModelError::EmptyInput);
        }
        let mut g = Graph::new(&self.params);
        let logits = Self::logits(&mut g, &packet_seq.as_usize())?;
        Ok(positive_probability(g.value(logits)))
    }
}

/// Class 0 is Normal, class 1 Malicious.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub enum Verdict {
    Normal,
    Malicious,
}

/// Label, its probability and the malicious score. Ties go to Normal.
pub fn classify_packet(m: &ClassifierModel, packet_seq: &TokenSequence) -> Result<(Verdict, f64, f64), ModelError> {
    let score = m.score(packet_seq)?;
    Ok(if score > 0.5 {
        (Verdict::Malicious, score, score)
    } else {
        (Verdict::Normal, 1.0 - score, score)
    })
}

impl From<&Label> for Verdict {
    fn from(l: &Label) -> Self {
        match l {
            Label::Normal => Verdict::Normal,
            Label::Malicious(_) => Verdict::Malicious,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct AssessorVerdict {
    pub verdict: PairLabel,
    pub probability: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ClassifierVerdict {
    pub verdict: Verdict,
    pub probability: f64,
    pub score: f64,
}

/// Everything the pipeline learned about one packet. Serializes to one JSON
/// object per packet.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct PredictionOutcome {
    pub current: PacketRecord,
    pub current_text: String,
    pub predicted_text: String,
    pub predicted_record: Option<PacketRecord>,
    pub malformed: bool,
    pub assessor: AssessorVerdict,
    pub classifier: ClassifierVerdict,
}

/// Predict, assess and classify with one shared vocabulary.
#[derive(Debug)]
pub struct Pipeline<'m> {
    pub predictor: &'m PredictorModel,
    pub assessor: &'m AssessorModel,
    pub classifier: &'m ClassifierModel,
    pub vocab: &'m BpeVocab,
    pub features: Vec<String>,
    /// Generation budget in tokens.
    pub max_new: usize,
}

/// Keeps at most `max` ids, ending on EOS when the input did.
fn fit(mut ids: Vec<u32>, max: usize) -> Vec<u32> {
    if ids.len() > max {
        let ends = ids.last() == Some(&EOS);
        ids.truncate(max);
        if ends {
            ids[max - 1] = EOS;
        }
    }
    ids
}

impl<'m> Pipeline<'m> {
    /// Fails unless all three models were trained on this vocabulary and the
    /// same feature list.
    pub fn new(
        predictor: &'m PredictorModel,
        assessor: &'m AssessorModel,
        classifier: &'m ClassifierModel,
        vocab: &'m BpeVocab,
    ) -> Result<Self, ModelError> {
        let digest = vocab.digest();
        let metas = [
            ("predictor", &predictor.meta, predictor.params.config()),
            ("assessor", &assessor.meta, assessor.params.config()),
            ("classifier", &classifier.meta, classifier.params.config()),
        ];
        for (model, meta, cfg) in metas {
            if meta.vocab_digest != digest {
                return Err(ModelError::VocabMismatch {
                    model,
                    got: meta.vocab_digest.clone(),
                    want: digest,
                });
            }
            check_vocab(cfg, vocab)?;
        }
        if assessor.meta.features != predictor.meta.features || classifier.meta.features != predictor.meta.features {
            return Err(ModelError::FeatureMismatch(format!(
                "predictor {:?}, assessor {:?}, classifier {:?}",
                predictor.meta.features, assessor.meta.features, classifier.meta.features
            )));
        }
        Ok(Self {
            predictor,
            assessor,
            classifier,
            vocab,
            features: predictor.meta.features.clone(),
            max_new: predictor.params.config().max_seq_len - 1,
        })
    }

    /// Runs all three stages. Only a current packet lacking one of the
    /// features is an error; bad generations are reported as malformed.
    pub fn predict(&self, current: &PacketRecord) -> Result<PredictionOutcome, ModelError> {
        let current_text = serialize_packet(current, &self.features)?;
        let enc_max = self.predictor.params.config().max_seq_len;
        let source = TokenSequence::new(fit(self.vocab.encode(&current_text, true).ids, enc_max));
        let mut generated = self.predictor.generate_ids(&source, self.max_new)?;
        // A predictor with a larger embedding table than the vocabulary can
        // emit ids with no text; they are dropped and mark the output bad.
        let n_vocab = self.vocab.len() as u32;
        let all_known = generated.iter().all(|&id| id < n_vocab);
        generated.retain(|&id| id < n_vocab);
        let predicted_text = self.vocab.decode(&generated)?;
        let predicted_record = parse_packet_text(&predicted_text, &self.features)
            .ok()
            .filter(|_| all_known);

        let pair_len = self.assessor.params.config().max_seq_len;
        let pair = make_pair_input(&current_text, &predicted_text, self.vocab, pair_len)?;
        let (verdict, probability) = assess_pair(self.assessor, &pair)?;

        let mut ids = vec![BOS];
        ids.extend(&generated);
        ids.push(EOS);
        let packet = TokenSequence::new(fit(ids, self.classifier.params.config().max_seq_len));
        let (cv, cp, score) = classify_packet(self.classifier, &packet)?;

        Ok(PredictionOutcome {
            current: current.clone(),
            current_text,
            malformed: predicted_record.is_none(),
            predicted_text,
            predicted_record,
            assessor: AssessorVerdict { verdict, probability },
            classifier: ClassifierVerdict {
                verdict: cv,
                probability: cp,
                score,
            },
        })
    }
}

/// Fraction of outcomes the assessor judged successive.
pub fn validity_rate(outcomes: &[PredictionOutcome]) -> f64 {
    if outcomes.is_empty() {
        return 0.0;
    }
    let ok = outcomes
        .iter()
        .filter(|o| o.assessor.verdict == PairLabel::Successive)
        .count();
    ok as f64 / outcomes.len() as f64
}

#[cfg(test)]
mod tests {
    use super::*;

    fn tiny() -> ModelConfig {
        ModelConfig {
            vocab_size: 262,
            d_model: 16,
            n_heads: 2,
            n_enc_layers: 1,
            n_dec_layers: 1,
            d_ff: 32,
            max_seq_len: 40,
            dropout_prob: 0.0,
        }
    }

    #[test]
    fn zero_heads_tie_to_the_first_class() {
        let v = BpeVocab::base();
        let mut a = AssessorModel::new(tiny(), ModelMeta::new(&v, &[]), 1).unwrap();
        a.zero_head();
        let pair = make_pair_input("x=1", "x=2", &v, 16).unwrap();
        assert_eq!(assess_pair(&a, &pair).unwrap(), (PairLabel::Successive, 0.5));

        let mut c = ClassifierModel::new(tiny(), ModelMeta::new(&v, &[]), 1).unwrap();
        c.zero_head();
        let (verdict, p, score) = classify_packet(&c, &v.encode("x=1", true)).unwrap();
        assert_eq!((verdict, p, score), (Verdict::Normal, 0.5, 0.5));
    }

    #[test]
    fn pair_input_needs_cls() {
        let v = BpeVocab::base();
        let a = AssessorModel::new(tiny(), ModelMeta::new(&v, &[]), 1).unwrap();
        assert!(matches!(
            assess_pair(&a, &v.encode("x=1", true)),
            Err(ModelError::MissingCls)
        ));
    }

    #[test]
    fn empty_budget_generates_nothing() {
        let v = BpeVocab::base();
        let p = PredictorModel::new(tiny(), ModelMeta::new(&v, &[]), 1).unwrap();
        assert_eq!(generate_next_packet(&p, &v.encode("x=1", true), &v, 0).unwrap(), "");
    }

    #[test]
    fn checkpoints_round_trip_and_check_kind() {
        let v = BpeVocab::base();
        let feats = vec!["a".to_string(), "b".to_string()];
        let c = ClassifierModel::new(tiny(), ModelMeta::new(&v, &feats), 3).unwrap();
        let mut buf = Vec::new();
        c.save(&mut buf).unwrap();
        assert_eq!(ClassifierModel::load(&buf[..]).unwrap(), c);
        assert!(matches!(
            AssessorModel::load(&buf[..]),
            Err(ModelError::WrongKind { .. })
        ));
    }
}
