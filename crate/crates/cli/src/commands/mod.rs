mod data;
mod predict;
mod train;

use std::path::{Path, PathBuf};

use pktseer_core::ingest::{CsvColumns, FeatureCsvReader};
use pktseer_core::tokenizer::BpeVocab;
use pktseer_core::PacketRecord;

use crate::args::{ColumnArgs, Command};
use crate::error::CliError;
use crate::manifest::write_file;
use crate::Run;

pub(crate) fn dispatch(cmd: &Command, run: &mut Run) -> Result<(), CliError> {
    let result = match cmd {
        Command::Synth(a) => data::synth(a, run),
        Command::Ingest(a) => data::ingest(a, run),
        Command::SelectFeatures(a) => data::select_features(a, run),
        Command::TrainTokenizer(a) => data::train_tokenizer(a, run),
        Command::Train(a) => train::train(a, run),
        Command::Evaluate(a) => train::evaluate(a, run),
        Command::Predict(a) => predict::predict(a, run),
    };
    let sections = config_sections(cmd);
    let sections: Vec<&str> = sections.iter().map(String::as_str).collect();
    for key in run.settings.unused_keys(&sections) {
        eprintln!("warning: config key {key} is not used by {}", cmd.name());
    }
    result
}

/// Config sections a command consults, for the unused-key warning.
fn config_sections(cmd: &Command) -> Vec<String> {
    let mut s: Vec<String> = match cmd {
        Command::Synth(_) => vec!["synth".into()],
        Command::Ingest(_) => vec!["ingest".into()],
        Command::SelectFeatures(_) => vec!["select".into()],
        Command::TrainTokenizer(_) => vec!["tokenizer".into()],
        Command::Train(a) => {
            let m = a.model.as_str();
            vec![format!("train.{m}"), "train".into(), format!("model.{m}"), "model".into()]
        }
        Command::Evaluate(_) => vec!["evaluate".into()],
        Command::Predict(_) => vec!["predict".into()],
    };
    if !matches!(cmd, Command::Synth(_)) {
        s.push("columns".into());
    }
    s
}

/// `path` with `suffix` appended to its file name.
pub(crate) fn beside(path: &Path, suffix: &str) -> PathBuf {
    let mut s = path.as_os_str().to_owned();
    s.push(suffix);
    PathBuf::from(s)
}

pub(crate) fn columns(run: &mut Run, a: &ColumnArgs) -> Result<CsvColumns, CliError> {
    let d = CsvColumns::default();
    let sec = ["columns"];
    let s = &mut run.settings;
    Ok(CsvColumns {
        src_ip: s.get(a.src_ip_col.clone(), &sec, "src_ip", d.src_ip)?,
        dst_ip: s.get(a.dst_ip_col.clone(), &sec, "dst_ip", d.dst_ip)?,
        src_port: s.get(a.src_port_col.clone(), &sec, "src_port", d.src_port)?,
        dst_port: s.get(a.dst_port_col.clone(), &sec, "dst_port", d.dst_port)?,
        proto: s.get(a.proto_col.clone(), &sec, "proto", d.proto)?,
        timestamp: s.get(a.timestamp_col.clone(), &sec, "timestamp", d.timestamp)?,
        label: s.get(a.label_col.clone(), &sec, "label", d.label)?,
    })
}

/// Reads a whole input file and records its digest.
pub(crate) fn read_input(run: &mut Run, path: &Path) -> Result<Vec<u8>, CliError> {
    let bytes = std::fs::read(path).map_err(|e| CliError::read(path, e))?;
    run.manifest.input(path, &bytes);
    Ok(bytes)
}

/// A feature table: records and feature names in column order.
pub(crate) struct Table {
    pub records: Vec<PacketRecord>,
    pub features: Vec<String>,
}

pub(crate) fn read_table(run: &mut Run, path: &Path, cols: &CsvColumns) -> Result<Table, CliError> {
    let bytes = read_input(run, path)?;
    let mut reader = FeatureCsvReader::new(bytes.as_slice(), cols)
        .map_err(|e| CliError::from(e).context(path))?;
    let features = reader.feature_names();
    let mut records = Vec::new();
    while let Some(r) = reader.next_record()? {
        records.push(r);
    }
    let report = reader.report();
    if report.skipped > 0 {
        eprintln!("{}: {}", path.display(), report.summary());
    }
    run.manifest.count("rows_skipped", report.skipped);
    Ok(Table { records, features })
}

pub(crate) fn read_vocab(run: &mut Run, path: &Path) -> Result<BpeVocab, CliError> {
    let bytes = read_input(run, path)?;
    let text = String::from_utf8(bytes).map_err(|_| CliError::data(format!("{}: not UTF-8", path.display())))?;
    BpeVocab::from_file_str(&text).map_err(|e| CliError::data(format!("{}: {e}", path.display())))
}

/// Writes an output file and lists it in the manifest.
pub(crate) fn write_artifact(run: &mut Run, path: &Path, bytes: &[u8]) -> Result<(), CliError> {
    write_file(path, bytes)?;
    run.manifest.artifact(path)
}
