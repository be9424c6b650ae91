//! Packet text, byte-level BPE, and the corruptions used by the training
//! objectives.

mod bpe;
mod corrupt;
mod text;

pub use self::bpe::{train_bpe, train_bpe_with, BpeVocab, MIN_VOCAB_SIZE, VOCAB_MAGIC};
pub use self::corrupt::{
    make_denoising_corruption, make_mlm_corruption, make_pair_input, DenoiseConfig, MaskedBatch, MlmConfig,
    MIN_PAIR_LEN,
};
pub use self::text::{format_value, parse_packet_text, serialize_packet};

use thiserror::Error;

pub const PAD: u32 = 0;
pub const BOS: u32 = 1;
pub const EOS: u32 = 2;
pub const SEP: u32 = 3;
pub const CLS: u32 = 4;
pub const MASK: u32 = 5;
pub const SPECIAL_NAMES: [&str; 6] = ["[PAD]", "[BOS]", "[EOS]", "[SEP]", "[CLS]", "[MASK]"];
pub const N_SPECIAL: u32 = 6;

pub fn is_special(id: u32) -> bool {
    id < N_SPECIAL
}

/// Why a packet text did not parse. Exactly one kind is reported.
#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum TextError {
    #[error("expected {want} fields, got {got}")]
    WrongFieldCount { got: usize, want: usize },
    #[error("field {position}: expected {want:?}, got {got:?}")]
    UnknownName { position: usize, got: String, want: String },
    #[error("field {name:?}: unparseable value {value:?}")]
    UnparseableValue { name: String, value: String },
    #[error("record has no feature {0:?}")]
    MissingFeature(String),
}

#[derive(Debug, Error, PartialEq, Eq)]
pub enum TokenizerError {
    #[error("empty corpus")]
    EmptyCorpus,
    #[error("vocab_size must exceed {min}, got {got}")]
    VocabTooSmall { got: usize, min: usize },
    #[error("token id {id} out of range for vocabulary of {len}")]
    IdOutOfRange { id: u32, len: usize },
    #[error("max_len must be at least {min}, got {got}")]
    MaxLenTooSmall { got: usize, min: usize },
    #[error("empty sequence")]
    EmptySequence,
    #[error("invalid argument: {0}")]
    InvalidArgument(String),
    #[error("vocabulary file line {line}: {reason}")]
    Format { line: usize, reason: String },
}

/// Token ids plus the positions of the special tokens among them.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Default)]
pub struct TokenSequence {
    pub ids: Vec<u32>,
    pub segment_marks: Vec<usize>,
}

impl TokenSequence {
    pub fn new(ids: Vec<u32>) -> Self {
        let segment_marks = ids
            .iter()
            .enumerate()
            .filter(|&(_, &id)| is_special(id) && id != PAD)
            .map(|(i, _)| i)
            .collect();
        Self { ids, segment_marks }
    }

    pub fn len(&self) -> usize {
        self.ids.len()
    }

    pub fn is_empty(&self) -> bool {
        self.ids.is_empty()
    }

    pub fn as_usize(&self) -> Vec<usize> {
        self.ids.iter().map(|&i| i as usize).collect()
    }
}
