//! The `pktseer` command line: data preparation, tokenizer and model
//! training, evaluation and streaming prediction, each run leaving a JSON
//! manifest of its inputs, settings and artifacts.

pub mod args;
mod commands;
pub mod error;
pub mod manifest;
pub mod settings;

use std::ffi::OsString;
use std::path::PathBuf;

use clap::Parser;

use crate::args::{Cli, Command};
use crate::error::{EXIT_OK, EXIT_USAGE};
use crate::manifest::RunManifest;
use crate::settings::Settings;

/// Shared state of one command run.
pub(crate) struct Run {
    pub settings: Settings,
    pub manifest: RunManifest,
}

/// Default manifest location: `<output>.manifest.json`, or
/// `<dir>/manifest.json` for directory outputs.
fn default_manifest(cmd: &Command) -> PathBuf {
    let beside = |p: &PathBuf| {
        let mut s = p.clone().into_os_string();
        s.push(".manifest.json");
        PathBuf::from(s)
    };
    match cmd {
        Command::Synth(a) => beside(&a.out),
        Command::Ingest(a) => beside(&a.out),
        Command::SelectFeatures(a) => beside(&a.out),
        Command::TrainTokenizer(a) => beside(&a.out),
        Command::Train(a) => beside(&a.out),
        Command::Evaluate(a) => a.out_dir.join("manifest.json"),
        Command::Predict(a) if a.out.as_os_str() == "-" => PathBuf::from("pktseer-predict.manifest.json"),
        Command::Predict(a) => beside(&a.out),
    }
}

/// Parses `args` (program name first), runs the command and returns the
/// process exit code. Diagnostics go to standard error.
pub fn run<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let argv: Vec<OsString> = args.into_iter().map(Into::into).collect();
    let cli = match Cli::try_parse_from(&argv) {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { EXIT_USAGE } else { EXIT_OK };
        }
    };
    let argv: Vec<String> = argv.iter().map(|a| a.to_string_lossy().into_owned()).collect();
    let manifest_path = cli.manifest.clone().unwrap_or_else(|| default_manifest(&cli.command));
    let mut manifest = RunManifest::new(cli.command.name(), argv);

    let result = match Settings::load(cli.config.as_deref()) {
        Ok(settings) => {
            manifest.config_file = settings.path().map(|p| p.display().to_string());
            if let Some(p) = settings.path() {
                if let Ok(bytes) = std::fs::read(p) {
                    manifest.input(p, &bytes);
                }
            }
            let mut run = Run { settings, manifest };
            let r = commands::dispatch(&cli.command, &mut run);
            run.manifest.settings = run.settings.snapshot().clone();
            manifest = run.manifest;
            r
        }
        Err(e) => Err(e),
    };
    manifest.finish(&result);
    if let Err(e) = manifest.write(&manifest_path) {
        eprintln!("warning: manifest not written: {e}");
    }
    match result {
        Ok(()) => EXIT_OK,
        Err(e) => {
            eprintln!("error: {e}");
            e.exit_code()
        }
    }
}
