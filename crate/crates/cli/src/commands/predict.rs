//! Streaming predict, assess, classify over a packet CSV.

use std::fs::File;
use std::io::{BufWriter, Read, Write};
use std::path::Path;

use pktseer_core::ingest::FeatureCsvReader;
use pktseer_core::models::{AssessorModel, ClassifierModel, ModelError, Pipeline, PredictorModel, Verdict};
use pktseer_core::PairLabel;

use super::{columns, read_input, read_vocab};
use crate::args::PredictArgs;
use crate::error::CliError;
use crate::manifest::{HashingReader, HashingWriter};
use crate::Run;

fn load<M>(run: &mut Run, path: &Path, f: impl FnOnce(&[u8]) -> Result<M, ModelError>) -> Result<M, CliError> {
    let bytes = read_input(run, path)?;
    f(&bytes).map_err(|e| CliError::from(e).context(path))
}

fn is_stdio(path: &Path) -> bool {
    path.as_os_str() == "-"
}

pub(crate) fn predict(a: &PredictArgs, run: &mut Run) -> Result<(), CliError> {
    let cols = columns(run, &a.columns)?;
    let sec = ["predict"];
    let stream = a.stream || run.settings.get(None, &sec, "stream", false)?;
    let limit = run.settings.get_opt(a.limit, &sec, "limit")?;
    let max_new = run.settings.get_opt(a.max_new, &sec, "max_new")?;

    let vocab = read_vocab(run, &a.vocab)?;
    let predictor = load(run, &a.predictor, |b| PredictorModel::load(b))?;
    let assessor = load(run, &a.assessor, |b| AssessorModel::load(b))?;
    let classifier = load(run, &a.classifier, |b| ClassifierModel::load(b))?;
    let mut pipeline = Pipeline::new(&predictor, &assessor, &classifier, &vocab)?;
    if let Some(n) = max_new {
        if n == 0 {
            return Err(CliError::usage("--max-new must be positive"));
        }
        pipeline.max_new = n;
    }

    let source: Box<dyn Read> = if is_stdio(&a.input) {
        Box::new(std::io::stdin().lock())
    } else {
        Box::new(File::open(&a.input).map_err(|e| CliError::read(&a.input, e))?)
    };
    let mut hashing_in = HashingReader::new(source);
    let sink: Box<dyn Write> = if is_stdio(&a.out) {
        Box::new(std::io::stdout().lock())
    } else {
        if let Some(dir) = a.out.parent().filter(|d| !d.as_os_str().is_empty()) {
            std::fs::create_dir_all(dir).map_err(|e| CliError::write(dir, e))?;
        }
        Box::new(File::create(&a.out).map_err(|e| CliError::write(&a.out, e))?)
    };
    let mut out = HashingWriter::new(BufWriter::new(sink));

    let mut reader = FeatureCsvReader::new(&mut hashing_in, &cols).map_err(|e| CliError::from(e).context(&a.input))?;
    let present = reader.feature_names();
    let missing: Vec<&String> = pipeline.features.iter().filter(|f| !present.contains(f)).collect();
    if !missing.is_empty() {
        return Err(CliError::usage(format!(
            "{}: missing feature columns required by the models: {missing:?}",
            a.input.display()
        )));
    }

    let (mut n, mut successive, mut malformed, mut malicious) = (0usize, 0usize, 0usize, 0usize);
    let write_err = |e: std::io::Error| CliError::write(&a.out, e);
    while limit.is_none_or(|l| n < l) {
        let Some(rec) = reader.next_record().map_err(|e| CliError::from(e).context(&a.input))? else {
            break;
        };
        let outcome = pipeline.predict(&rec)?;
        n += 1;
        successive += usize::from(outcome.assessor.verdict == PairLabel::Successive);
        malformed += usize::from(outcome.malformed);
        malicious += usize::from(outcome.classifier.verdict == Verdict::Malicious);
        let line = serde_json::to_string(&outcome).map_err(|e| CliError::data(e.to_string()))?;
        writeln!(out, "{line}").map_err(write_err)?;
        if stream {
            out.flush().map_err(write_err)?;
        }
    }
    out.flush().map_err(write_err)?;
    let skipped = reader.report().skipped;
    if skipped > 0 {
        eprintln!("{}: {}", a.input.display(), reader.report().summary());
    }
    drop(reader);

    let (in_sha, in_bytes) = hashing_in.finish();
    run.manifest.input_digest(&a.input, in_sha, in_bytes);
    let (out_sha, out_bytes) = out.finish();
    run.manifest.artifact_digest(&a.out, out_sha, out_bytes);

    let validity = if n == 0 { 0.0 } else { successive as f64 / n as f64 };
    eprintln!(
        "validity: {validity:.4} ({successive}/{n} predicted packets judged successive, {malformed} malformed)"
    );
    let m = &mut run.manifest;
    m.count("packets", n);
    m.count("rows_skipped", skipped);
    m.count("judged_successive", successive);
    m.count("malformed", malformed);
    m.count("flagged_malicious", malicious);
    m.count("validity_rate", validity);
    m.count("max_new", pipeline.max_new);
    Ok(())
}
