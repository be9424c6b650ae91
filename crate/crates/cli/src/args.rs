//! Command-line grammar.

use std::path::PathBuf;

use clap::{Args, Parser, Subcommand, ValueEnum};

#[derive(Debug, Parser)]
#[command(
    name = "pktseer",
    version,
    about = "Next-packet prediction, packet-pair assessment and attack classification over packet feature tables",
    after_help = "Exit codes: 0 success, 2 usage or configuration error, 3 data error, 4 training divergence.\n\
                  Every run writes a JSON manifest (see --manifest)."
)]
pub struct Cli {
    /// INI settings file; command-line flags override its values
    #[arg(long, global = true, value_name = "FILE")]
    pub config: Option<PathBuf>,

    /// Where to write the run manifest [default: next to the main output]
    #[arg(long, global = true, value_name = "FILE")]
    pub manifest: Option<PathBuf>,

    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Generate a labeled synthetic feature table
    Synth(SynthArgs),
    /// Convert feature CSVs or raw captures into a feature table
    Ingest(IngestArgs),
    /// Drop low-variance and highly correlated feature columns
    SelectFeatures(SelectArgs),
    /// Learn a byte-pair vocabulary from packet texts
    TrainTokenizer(TokenizerArgs),
    /// Train the predictor, assessor or classifier
    Train(Box<TrainArgs>),
    /// Score an assessor or classifier checkpoint on a feature table
    Evaluate(EvalArgs),
    /// Predict next packets and judge them with the assessor and classifier
    Predict(PredictArgs),
}

impl Command {
    pub fn name(&self) -> &'static str {
        match self {
            Command::Synth(_) => "synth",
            Command::Ingest(_) => "ingest",
            Command::SelectFeatures(_) => "select-features",
            Command::TrainTokenizer(_) => "train-tokenizer",
            Command::Train(_) => "train",
            Command::Evaluate(_) => "evaluate",
            Command::Predict(_) => "predict",
        }
    }
}

/// Column names of the key, timestamp and label fields. Also settable in
/// the `[columns]` config section.
#[derive(Debug, Args, Default, Clone)]
pub struct ColumnArgs {
    /// Source address column [default: srcIP]
    #[arg(long, value_name = "NAME")]
    pub src_ip_col: Option<String>,
    /// Destination address column [default: dstIP]
    #[arg(long, value_name = "NAME")]
    pub dst_ip_col: Option<String>,
    /// Source port column [default: srcPort]
    #[arg(long, value_name = "NAME")]
    pub src_port_col: Option<String>,
    /// Destination port column [default: dstPort]
    #[arg(long, value_name = "NAME")]
    pub dst_port_col: Option<String>,
    /// Protocol number column [default: proto]
    #[arg(long, value_name = "NAME")]
    pub proto_col: Option<String>,
    /// Timestamp column, microseconds [default: ts]
    #[arg(long, value_name = "NAME")]
    pub timestamp_col: Option<String>,
    /// Label column, optional in the data [default: label]
    #[arg(long, value_name = "NAME")]
    pub label_col: Option<String>,
}

#[derive(Debug, Args)]
pub struct SynthArgs {
    /// Output feature table
    #[arg(long, value_name = "FILE")]
    pub out: PathBuf,
    /// Number of flows [default: 250]
    #[arg(long)]
    pub n_flows: Option<usize>,
    /// Exact total packet count; 0 draws lengths from the flow length range [default: 5000]
    #[arg(long)]
    pub n_packets: Option<usize>,
    /// Shortest flow [default: 10]
    #[arg(long)]
    pub min_flow_len: Option<usize>,
    /// Longest flow [default: 30]
    #[arg(long)]
    pub max_flow_len: Option<usize>,
    /// Share of malicious packets in [0, 1] [default: 0.3]
    #[arg(long)]
    pub malicious_fraction: Option<f64>,
    /// Share of fully malicious flows that are SYN floods [default: 0.5]
    #[arg(long)]
    pub flood_share: Option<f64>,
    /// Random seed [default: config, then PKTSEER_SEED, then 0]
    #[arg(long)]
    pub seed: Option<u64>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum InputFormat {
    /// Feature table with flow key, timestamp and optional label columns
    Csv,
    /// Raw packet capture (classic libpcap format)
    Capture,
}

/// Config-file parsing and manifest snapshots for the value enums.
macro_rules! config_value {
    ($($t:ty),*) => {$(
        impl std::str::FromStr for $t {
            type Err = String;
            fn from_str(s: &str) -> Result<Self, String> {
                <Self as ValueEnum>::from_str(&s.replace('_', "-"), true)
            }
        }

        impl serde::Serialize for $t {
            fn serialize<S: serde::Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
                let v = self.to_possible_value().expect("no skipped variants");
                s.serialize_str(v.get_name())
            }
        }
    )*};
}

config_value!(InputFormat, MetricChoice, Subset);

#[derive(Debug, Args)]
pub struct IngestArgs {
    /// Input files, concatenated in order
    #[arg(required = true, value_name = "INPUT")]
    pub inputs: Vec<PathBuf>,
    /// Input format [default: csv]
    #[arg(long, value_enum)]
    pub format: Option<InputFormat>,
    /// Output feature table
    #[arg(long, value_name = "FILE")]
    pub out: PathBuf,
    /// Label given to every captured packet (captures carry none)
    #[arg(long, value_name = "LABEL")]
    pub label: Option<String>,
    #[command(flatten)]
    pub columns: ColumnArgs,
}

#[derive(Debug, Args)]
pub struct SelectArgs {
    /// Input feature table
    #[arg(long = "in", value_name = "FILE")]
    pub input: PathBuf,
    /// Output table holding the kept features
    #[arg(long, value_name = "FILE")]
    pub out: PathBuf,
    /// Selection report (JSON) [default: <out>.selection.json]
    #[arg(long, value_name = "FILE")]
    pub report: Option<PathBuf>,
    /// Relative variance threshold; drops scaled variance below threshold x 0.25 [default: 0.25]
    #[arg(long)]
    pub variance_threshold: Option<f64>,
    /// Absolute Pearson correlation above which the later column is dropped [default: 0.98]
    #[arg(long)]
    pub correlation_threshold: Option<f64>,
    #[command(flatten)]
    pub columns: ColumnArgs,
}

#[derive(Debug, Args)]
pub struct TokenizerArgs {
    /// Input feature table; every packet's text is one corpus line
    #[arg(long = "in", value_name = "FILE")]
    pub input: PathBuf,
    /// Output vocabulary file
    #[arg(long, value_name = "FILE")]
    pub out: PathBuf,
    /// Target vocabulary size including specials and bytes [default: 512]
    #[arg(long)]
    pub vocab_size: Option<usize>,
    /// Stop when no pair occurs this often [default: 2]
    #[arg(long)]
    pub min_pair_count: Option<u64>,
    #[command(flatten)]
    pub columns: ColumnArgs,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum ModelChoice {
    /// Encoder-decoder generating the next packet's text
    Predictor,
    /// Encoder judging whether a packet pair is successive
    Assessor,
    /// Encoder-decoder labeling a packet normal or malicious
    Classifier,
}

impl ModelChoice {
    pub fn as_str(self) -> &'static str {
        match self {
            ModelChoice::Predictor => "predictor",
            ModelChoice::Assessor => "assessor",
            ModelChoice::Classifier => "classifier",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum MetricChoice {
    ValLoss,
    ValAccuracy,
}

#[derive(Debug, Args)]
pub struct TrainArgs {
    /// Which model to train
    #[arg(long, value_enum)]
    pub model: ModelChoice,
    /// Training feature table
    #[arg(long, value_name = "FILE")]
    pub data: PathBuf,
    /// Vocabulary file
    #[arg(long, value_name = "FILE")]
    pub vocab: PathBuf,
    /// Output checkpoint
    #[arg(long, value_name = "FILE")]
    pub out: PathBuf,
    /// Per-epoch history, one JSON object per line [default: <out>.history.jsonl]
    #[arg(long, value_name = "FILE")]
    pub history: Option<PathBuf>,
    /// Random seed for initialization, splits, shuffling and corruption
    #[arg(long)]
    pub seed: Option<u64>,
    /// Maximum epochs [default: 15, classifier 4]
    #[arg(long)]
    pub epochs: Option<usize>,
    /// Examples per optimizer step [default: 128, classifier 2]
    #[arg(long)]
    pub batch_size: Option<usize>,
    /// Adam learning rate [default: 5e-5]
    #[arg(long, visible_alias = "lr")]
    pub learning_rate: Option<f32>,
    /// Epochs without improvement tolerated before stopping [default: 3]
    #[arg(long)]
    pub patience: Option<usize>,
    /// Monitored value for early stopping [default: val-loss, classifier val-accuracy]
    #[arg(long, value_enum)]
    pub metric: Option<MetricChoice>,
    /// Smallest change that counts as an improvement [default: 1e-4]
    #[arg(long)]
    pub min_delta: Option<f64>,
    /// Share of the data held out for validation [default: 0.2]
    #[arg(long)]
    pub val_fraction: Option<f64>,
    /// Predictor: share of steps on the denoising objective [default: 0.2]
    #[arg(long)]
    pub denoise_fraction: Option<f64>,
    /// Assessor: masked-token warm-up epochs [default: 3]
    #[arg(long)]
    pub warmup_epochs: Option<usize>,
    /// Assessor: masking probability during warm-up [default: 0.15]
    #[arg(long)]
    pub mask_prob: Option<f64>,
    /// Assessor: negative pairs per positive pair [default: 1.0]
    #[arg(long)]
    pub negative_ratio: Option<f64>,
    /// Model width [default: 64]
    #[arg(long)]
    pub d_model: Option<usize>,
    /// Attention heads [default: 4]
    #[arg(long)]
    pub n_heads: Option<usize>,
    /// Encoder layers [default: 2]
    #[arg(long)]
    pub enc_layers: Option<usize>,
    /// Decoder layers, unused by the assessor [default: 2]
    #[arg(long)]
    pub dec_layers: Option<usize>,
    /// Feed-forward width [default: 256]
    #[arg(long)]
    pub d_ff: Option<usize>,
    /// Longest token sequence [default: 192]
    #[arg(long)]
    pub max_seq_len: Option<usize>,
    /// Dropout probability [default: 0.1]
    #[arg(long)]
    pub dropout: Option<f32>,
    #[command(flatten)]
    pub columns: ColumnArgs,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum Subset {
    /// Every example in the table
    All,
    /// Only the validation split that `train` held out with the same seed and fraction
    Val,
}

impl Subset {
    pub fn as_str(self) -> &'static str {
        match self {
            Subset::All => "all",
            Subset::Val => "val",
        }
    }
}

#[derive(Debug, Args)]
pub struct EvalArgs {
    /// Assessor or classifier checkpoint
    #[arg(long, value_name = "FILE")]
    pub checkpoint: PathBuf,
    /// Feature table to score
    #[arg(long, value_name = "FILE")]
    pub data: PathBuf,
    /// Vocabulary the checkpoint was trained with
    #[arg(long, value_name = "FILE")]
    pub vocab: PathBuf,
    /// Directory for report.txt, report.json and roc.csv
    #[arg(long, value_name = "DIR")]
    pub out_dir: PathBuf,
    /// Which examples to score [default: all]
    #[arg(long, value_enum)]
    pub subset: Option<Subset>,
    /// Validation share used by `train`, for --subset val [default: 0.2]
    #[arg(long)]
    pub val_fraction: Option<f64>,
    /// Seed used by `train`, for --subset val and assessor pair sampling
    #[arg(long)]
    pub seed: Option<u64>,
    /// Assessor: negative pairs per positive pair [default: 1.0]
    #[arg(long)]
    pub negative_ratio: Option<f64>,
    #[command(flatten)]
    pub columns: ColumnArgs,
}

#[derive(Debug, Args)]
pub struct PredictArgs {
    /// Predictor checkpoint
    #[arg(long, value_name = "FILE")]
    pub predictor: PathBuf,
    /// Assessor checkpoint
    #[arg(long, value_name = "FILE")]
    pub assessor: PathBuf,
    /// Classifier checkpoint
    #[arg(long, value_name = "FILE")]
    pub classifier: PathBuf,
    /// Vocabulary shared by the three models
    #[arg(long, value_name = "FILE")]
    pub vocab: PathBuf,
    /// Current packets as a feature table; - reads standard input
    #[arg(long = "in", value_name = "FILE")]
    pub input: PathBuf,
    /// Prediction records, one JSON object per line; - is standard output
    #[arg(long, value_name = "FILE", default_value = "-")]
    pub out: PathBuf,
    /// Process packets as they arrive and flush each record immediately
    #[arg(long)]
    pub stream: bool,
    /// Stop after this many packets
    #[arg(long)]
    pub limit: Option<usize>,
    /// Generation budget in tokens [default: predictor max_seq_len - 1]
    #[arg(long)]
    pub max_new: Option<usize>,
    #[command(flatten)]
    pub columns: ColumnArgs,
}
