//! Data preparation commands: synth, ingest, select-features,
//! train-tokenizer.

use pktseer_core::featsel::{
    project_records, select_features as run_selection, FeatureMatrix, DEFAULT_CORRELATION_THRESHOLD,
    DEFAULT_VARIANCE_THRESHOLD,
};
use pktseer_core::ingest::{
    assemble_flows, parse_feature_csv, parse_raw_capture, write_feature_csv, CsvColumns, IngestReport,
};
use pktseer_core::synth::{generate, SynthScenario};
use pktseer_core::tokenizer::{serialize_packet, train_bpe_with};
use pktseer_core::{Label, PacketRecord};

use super::{beside, columns, read_input, read_table, write_artifact};
use crate::args::{IngestArgs, InputFormat, SelectArgs, SynthArgs, TokenizerArgs};
use crate::error::CliError;
use crate::Run;

fn csv_bytes(records: &[PacketRecord], cols: &CsvColumns) -> Result<Vec<u8>, CliError> {
    let mut out = Vec::new();
    write_feature_csv(records, &mut out, cols)?;
    Ok(out)
}

fn count_labels(run: &mut Run, records: &[PacketRecord]) {
    let malicious = records
        .iter()
        .filter(|r| matches!(r.label, Some(Label::Malicious(_))))
        .count();
    let unlabeled = records.iter().filter(|r| r.label.is_none()).count();
    run.manifest.count("malicious_rows", malicious);
    run.manifest.count("unlabeled_rows", unlabeled);
}

pub(crate) fn synth(a: &SynthArgs, run: &mut Run) -> Result<(), CliError> {
    let d = SynthScenario::default();
    let sec = ["synth"];
    let s = &mut run.settings;
    let n_packets = s.get(a.n_packets, &sec, "n_packets", d.n_packets.unwrap_or(0))?;
    let mut scenario = SynthScenario {
        n_flows: s.get(a.n_flows, &sec, "n_flows", d.n_flows)?,
        flow_len_range: (
            s.get(a.min_flow_len, &sec, "min_flow_len", d.flow_len_range.0)?,
            s.get(a.max_flow_len, &sec, "max_flow_len", d.flow_len_range.1)?,
        ),
        n_packets: (n_packets > 0).then_some(n_packets),
        malicious_fraction: s.get(a.malicious_fraction, &sec, "malicious_fraction", d.malicious_fraction)?,
        seed: s.seed(a.seed, &sec)?,
        ..d
    };
    scenario.malicious.flood_share = s.get(a.flood_share, &sec, "flood_share", scenario.malicious.flood_share)?;
    run.settings.record("scenario", &scenario);
    run.manifest.seed = Some(scenario.seed);

    let records = generate(&scenario)?;
    let bytes = csv_bytes(&records, &CsvColumns::default())?;
    write_artifact(run, &a.out, &bytes)?;
    run.manifest.count("rows", records.len());
    run.manifest.count("flows", scenario.n_flows);
    count_labels(run, &records);
    Ok(())
}

fn add_reports(total: &mut IngestReport, r: &IngestReport) {
    total.rows += r.rows;
    total.records += r.records;
    total.skipped += r.skipped;
    total.missing_cells += r.missing_cells;
    total.non_ip += r.non_ip;
    total.truncated |= r.truncated;
    total.warnings += r.warnings;
    total.skips.extend(r.skips.iter().cloned());
}

pub(crate) fn ingest(a: &IngestArgs, run: &mut Run) -> Result<(), CliError> {
    let cols = columns(run, &a.columns)?;
    let format = run.settings.get(a.format, &["ingest"], "format", InputFormat::Csv)?;
    let label = run.settings.get_opt(a.label.clone(), &["ingest"], "label")?;
    if label.is_some() && format == InputFormat::Csv {
        return Err(CliError::usage("--label applies to captures only; CSV rows carry their own labels"));
    }
    let label = label.map(|l| Label::parse(&l).ok_or_else(|| CliError::usage("--label must not be empty")));
    let label = label.transpose()?;

    let mut records = Vec::new();
    let mut total = IngestReport::default();
    for path in &a.inputs {
        let bytes = read_input(run, path)?;
        let (mut recs, report) = match format {
            InputFormat::Csv => parse_feature_csv(bytes.as_slice(), &cols),
            InputFormat::Capture => parse_raw_capture(bytes.as_slice()),
        }
        .map_err(|e| CliError::from(e).context(path))?;
        if let Some(l) = &label {
            for r in &mut recs {
                r.label = Some(l.clone());
            }
        }
        eprintln!("{}: {}", path.display(), report.summary());
        add_reports(&mut total, &report);
        records.extend(recs);
    }
    if records.is_empty() {
        return Err(CliError::data("no usable packet records in the input"));
    }
    let bytes = csv_bytes(&records, &cols).map_err(|e| match e {
        CliError::Usage(m) => CliError::Data(format!("{m} (inputs with different feature columns cannot be merged)")),
        other => other,
    })?;
    write_artifact(run, &a.out, &bytes)?;

    let flows = assemble_flows(records.iter().cloned());
    let pairs: usize = flows.values().map(|f| f.len().saturating_sub(1)).sum();
    let m = &mut run.manifest;
    m.count("rows_read", total.rows);
    m.count("records", total.records);
    m.count("rows_skipped", total.skipped);
    m.count("missing_cells", total.missing_cells);
    m.count("non_ip_frames", total.non_ip);
    m.count("truncated", total.truncated);
    m.count("flows", flows.len());
    m.count("next_packet_pairs", pairs);
    count_labels(run, &records);
    Ok(())
}

pub(crate) fn select_features(a: &SelectArgs, run: &mut Run) -> Result<(), CliError> {
    let cols = columns(run, &a.columns)?;
    let sec = ["select"];
    let var = run
        .settings
        .get(a.variance_threshold, &sec, "variance_threshold", DEFAULT_VARIANCE_THRESHOLD)?;
    let corr = run
        .settings
        .get(a.correlation_threshold, &sec, "correlation_threshold", DEFAULT_CORRELATION_THRESHOLD)?;
    if !(0.0..=1.0).contains(&var) {
        return Err(CliError::usage(format!("variance threshold {var} outside [0, 1]")));
    }
    if !(0.0..=1.0).contains(&corr) {
        return Err(CliError::usage(format!("correlation threshold {corr} outside [0, 1]")));
    }
    let table = read_table(run, &a.input, &cols)?;
    if table.records.is_empty() {
        return Err(CliError::data(format!("{}: no records", a.input.display())));
    }
    let matrix = FeatureMatrix::from_records(&table.records)?;
    let (_, report) = run_selection(&matrix, var, corr)?;
    eprint!("{}", report.table());

    let reduced = project_records(&table.records, &report.kept);
    let bytes = csv_bytes(&reduced, &cols)?;
    write_artifact(run, &a.out, &bytes)?;
    let report_path = a.report.clone().unwrap_or_else(|| beside(&a.out, ".selection.json"));
    let mut json = serde_json::to_string_pretty(&report).map_err(|e| CliError::data(e.to_string()))?;
    json.push('\n');
    write_artifact(run, &report_path, json.as_bytes())?;

    let m = &mut run.manifest;
    m.count("rows", table.records.len());
    m.count("columns_in", table.features.len());
    m.count("columns_kept", report.kept.len());
    m.count("dropped_low_variance", report.dropped_low_variance.len());
    m.count("dropped_correlated", report.dropped_correlated.len());
    Ok(())
}

pub(crate) fn train_tokenizer(a: &TokenizerArgs, run: &mut Run) -> Result<(), CliError> {
    let cols = columns(run, &a.columns)?;
    let sec = ["tokenizer"];
    let vocab_size = run.settings.get(a.vocab_size, &sec, "vocab_size", 512usize)?;
    let min_count = run.settings.get(a.min_pair_count, &sec, "min_pair_count", 2u64)?;
    let table = read_table(run, &a.input, &cols)?;
    let corpus: Vec<String> = table
        .records
        .iter()
        .map(|r| serialize_packet(r, &table.features))
        .collect::<Result<_, _>>()?;
    let vocab = train_bpe_with(&corpus, vocab_size, min_count).map_err(|e| CliError::from(e).context(&a.input))?;
    write_artifact(run, &a.out, vocab.to_file_string().as_bytes())?;

    let tokens: usize = corpus.iter().map(|t| vocab.encode(t, false).len()).sum();
    let m = &mut run.manifest;
    m.count("corpus_lines", corpus.len());
    m.count("features", &table.features);
    m.count("vocab_size", vocab.len());
    m.count("merges", vocab.merges().len());
    m.count("vocab_digest", vocab.digest());
    m.count("mean_tokens_per_packet", tokens as f64 / corpus.len().max(1) as f64);
    Ok(())
}
