//! Packet next-step prediction pipeline: ingestion, feature selection,
//! tokenization, the three task models, their training loops, evaluation
//! metrics and a synthetic traffic generator.

pub mod featsel;
pub mod ingest;
pub mod metrics;
pub mod models;
pub mod record;
pub mod synth;
pub mod tokenizer;
pub mod trainer;

pub use record::{FlowKey, Label, PacketRecord, PairExample, PairLabel};
