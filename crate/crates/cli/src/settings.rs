//! Effective settings: command-line flags over an optional INI file over
//! built-in defaults.
//!
//! The file holds `key = value` lines grouped in sections named after the
//! command (`[synth]`, `[ingest]`, `[select]`, `[tokenizer]`, `[train]`,
//! `[model]`, `[evaluate]`, `[predict]`). Training and model keys may also
//! sit in per-model sections such as `[train.assessor]`, which win over the
//! plain ones. Keys are snake_case; dashes are accepted too. The seed falls
//! back to `[general]`, then to the `PKTSEER_SEED` environment variable.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt::Display;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use ini::Ini;
use serde::Serialize;
use serde_json::Value;

use crate::error::CliError;

pub const SEED_ENV: &str = "PKTSEER_SEED";

pub struct Settings {
    ini: Option<Ini>,
    path: Option<PathBuf>,
    snapshot: BTreeMap<String, Value>,
    used: BTreeSet<(String, String)>,
}

impl Settings {
    pub fn load(path: Option<&Path>) -> Result<Self, CliError> {
        let ini = match path {
            None => None,
            Some(p) => {
                let text = std::fs::read_to_string(p).map_err(|e| CliError::read(p, e))?;
                Some(
                    Ini::load_from_str(&text)
                        .map_err(|e| CliError::usage(format!("config {}: {e}", p.display())))?,
                )
            }
        };
        Ok(Self {
            ini,
            path: path.map(Path::to_path_buf),
            snapshot: BTreeMap::new(),
            used: BTreeSet::new(),
        })
    }

    pub fn path(&self) -> Option<&Path> {
        self.path.as_deref()
    }

    /// Every effective value resolved so far.
    pub fn snapshot(&self) -> &BTreeMap<String, Value> {
        &self.snapshot
    }

    fn lookup(&mut self, sections: &[&str], key: &str) -> Option<(String, String)> {
        let ini = self.ini.as_ref()?;
        let dashed = key.replace('_', "-");
        for &s in sections {
            if let Some(props) = ini.section(Some(s)) {
                for k in [key, dashed.as_str()] {
                    if let Some(v) = props.get(k) {
                        let found = (s.to_string(), v.trim().to_string());
                        self.used.insert((s.to_string(), k.to_string()));
                        return Some(found);
                    }
                }
            }
        }
        None
    }

    fn parse<T: FromStr>(&self, section: &str, key: &str, raw: &str) -> Result<T, CliError>
    where
        T::Err: Display,
    {
        raw.parse::<T>().map_err(|e| {
            CliError::usage(format!(
                "config {}: [{section}] {key} = {raw:?}: {e}",
                self.path.as_deref().unwrap_or(Path::new("?")).display()
            ))
        })
    }

    /// The flag if given, else the first section holding `key`, else
    /// `default`. The result is recorded in the snapshot.
    pub fn get<T>(&mut self, flag: Option<T>, sections: &[&str], key: &str, default: T) -> Result<T, CliError>
    where
        T: FromStr + Serialize,
        T::Err: Display,
    {
        let v = match flag {
            Some(v) => v,
            None => match self.lookup(sections, key) {
                Some((s, raw)) => self.parse(&s, key, &raw)?,
                None => default,
            },
        };
        self.record(key, &v);
        Ok(v)
    }

    /// Like [`Settings::get`] without a default.
    pub fn get_opt<T>(&mut self, flag: Option<T>, sections: &[&str], key: &str) -> Result<Option<T>, CliError>
    where
        T: FromStr + Serialize,
        T::Err: Display,
    {
        let v = match flag {
            Some(v) => Some(v),
            None => match self.lookup(sections, key) {
                Some((s, raw)) => Some(self.parse(&s, key, &raw)?),
                None => None,
            },
        };
        self.record(key, &v);
        Ok(v)
    }

    /// Flag, then the command sections, then `[general]`, then
    /// `PKTSEER_SEED`, then 0.
    pub fn seed(&mut self, flag: Option<u64>, sections: &[&str]) -> Result<u64, CliError> {
        let mut all: Vec<&str> = sections.to_vec();
        all.push("general");
        let from_file = self.get_opt(flag, &all, "seed")?;
        let seed = match from_file {
            Some(s) => s,
            None => match std::env::var(SEED_ENV) {
                Ok(raw) => raw
                    .trim()
                    .parse()
                    .map_err(|e| CliError::usage(format!("{SEED_ENV}={raw:?}: {e}")))?,
                Err(_) => 0,
            },
        };
        self.record("seed", &seed);
        Ok(seed)
    }

    pub fn record<T: Serialize>(&mut self, key: &str, v: &T) {
        // Through text, so an f32 such as 0.1 is kept as written.
        let value = serde_json::to_string(v)
            .ok()
            .and_then(|t| serde_json::from_str(&t).ok())
            .unwrap_or(Value::Null);
        self.snapshot.insert(key.to_string(), value);
    }

    /// Keys present in the given sections that no lookup consumed.
    pub fn unused_keys(&self, sections: &[&str]) -> Vec<String> {
        let Some(ini) = &self.ini else { return Vec::new() };
        let mut out = Vec::new();
        for &s in sections {
            if let Some(props) = ini.section(Some(s)) {
                for (k, _) in props.iter() {
                    if !self.used.contains(&(s.to_string(), k.to_string())) {
                        out.push(format!("[{s}] {k}"));
                    }
                }
            }
        }
        out
    }
}
