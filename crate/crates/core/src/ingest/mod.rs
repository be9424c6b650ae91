//! Turning captured traffic into [`PacketRecord`]s and the three training
//! datasets built from them.

mod capture;
mod csv;
mod flows;

pub use self::capture::{parse_raw_capture, CAPTURE_FEATURES};
pub use self::csv::{parse_feature_csv, write_feature_csv, CsvColumns, FeatureCsvReader};
pub use self::flows::{assemble_flows, make_next_packet_pairs, make_pair_dataset, Flows};

use serde::Serialize;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum IngestError {
    #[error("malformed header: missing column {0:?}")]
    MissingColumn(String),
    #[error("malformed header: {0}")]
    Header(String),
    #[error("capture: {0}")]
    Capture(String),
    #[error("insufficient data: {0}")]
    InsufficientData(String),
    #[error("invalid argument: {0}")]
    InvalidArgument(String),
    #[error(transparent)]
    Csv(#[from] ::csv::Error),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

/// A skipped input row or frame, with its 1-based position.
#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct Skip {
    pub position: u64,
    pub reason: String,
}

/// Counters for one ingest run. For CSV input `rows` counts data rows; for
/// captures it counts packet records.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize)]
pub struct IngestReport {
    pub rows: u64,
    pub records: u64,
    pub skipped: u64,
    pub missing_cells: u64,
    pub non_ip: u64,
    pub truncated: bool,
    pub warnings: u64,
    /// The first few skips, for the human-readable report.
    pub skips: Vec<Skip>,
}

const MAX_LISTED_SKIPS: usize = 20;

impl IngestReport {
    fn skip(&mut self, position: u64, reason: impl Into<String>) {
        self.skipped += 1;
        if self.skips.len() < MAX_LISTED_SKIPS {
            self.skips.push(Skip {
                position,
                reason: reason.into(),
            });
        }
    }

    /// Line-oriented summary for standard error.
    pub fn summary(&self) -> String {
        let mut out = format!(
            "ingest: {} rows read, {} records, {} skipped, {} missing cells filled with 0",
            self.rows, self.records, self.skipped, self.missing_cells
        );
        if self.non_ip > 0 {
            out.push_str(&format!(", {} non-IP/TCP/UDP frames", self.non_ip));
        }
        if self.truncated {
            out.push_str(", capture truncated");
        }
        for s in &self.skips {
            out.push_str(&format!("\n  skipped #{}: {}", s.position, s.reason));
        }
        out
    }
}
