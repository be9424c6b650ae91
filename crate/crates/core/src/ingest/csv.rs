//! Feature-table ingestion: one row per packet, flow key and timestamp
//! columns, any number of numeric feature columns, optional label.

use std::io::{Read, Write};
use std::net::IpAddr;

use serde::{Deserialize, Serialize};

use super::{IngestError, IngestReport};
use crate::record::{FlowKey, Label, PacketRecord};
use crate::tokenizer::format_value;

/// Column names for the key, timestamp and label fields.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct CsvColumns {
    pub src_ip: String,
    pub dst_ip: String,
    pub src_port: String,
    pub dst_port: String,
    pub proto: String,
    pub timestamp: String,
    pub label: String,
}

impl Default for CsvColumns {
    fn default() -> Self {
        Self {
            src_ip: "srcIP".into(),
            dst_ip: "dstIP".into(),
            src_port: "srcPort".into(),
            dst_port: "dstPort".into(),
            proto: "proto".into(),
            timestamp: "ts".into(),
            label: "label".into(),
        }
    }
}

struct Layout {
    key: [usize; 5],
    timestamp: usize,
    label: Option<usize>,
    features: Vec<(usize, String)>,
    width: usize,
}

fn layout(header: &[String], cols: &CsvColumns) -> Result<Layout, IngestError> {
    let find = |name: &str| header.iter().position(|h| h == name);
    let need = |name: &str| find(name).ok_or_else(|| IngestError::MissingColumn(name.to_string()));
    let key = [
        need(&cols.src_ip)?,
        need(&cols.dst_ip)?,
        need(&cols.src_port)?,
        need(&cols.dst_port)?,
        need(&cols.proto)?,
    ];
    let timestamp = need(&cols.timestamp)?;
    let label = find(&cols.label);
    let reserved: Vec<usize> = key.iter().copied().chain([timestamp]).chain(label).collect();
    let features: Vec<(usize, String)> = header
        .iter()
        .enumerate()
        .filter(|(i, _)| !reserved.contains(i))
        .map(|(i, h)| (i, h.clone()))
        .collect();
    if features.is_empty() {
        return Err(IngestError::Header("no feature columns".into()));
    }
    for (n, (_, name)) in features.iter().enumerate() {
        if name.is_empty() {
            return Err(IngestError::Header(format!("feature column {n} has an empty name")));
        }
        if features[..n].iter().any(|(_, other)| other == name) {
            return Err(IngestError::Header(format!("duplicate column {name:?}")));
        }
    }
    Ok(Layout {
        key,
        timestamp,
        label,
        features,
        width: header.len(),
    })
}

fn parse_timestamp(cell: &str) -> Result<i64, String> {
    if let Ok(v) = cell.parse::<i64>() {
        return Ok(v);
    }
    match cell.parse::<f64>() {
        Ok(v) if v.is_finite() && v.abs() < 9.0e18 => Ok(v.round() as i64),
        _ => Err(format!("bad timestamp {cell:?}")),
    }
}

fn parse_row(cells: &[&str], layout: &Layout, report: &mut IngestReport) -> Result<PacketRecord, String> {
    if cells.len() != layout.width {
        return Err(format!("{} cells, header has {}", cells.len(), layout.width));
    }
    let [si, di, sp, dp, pr] = layout.key;
    let addr = |i: usize| {
        cells[i]
            .parse::<IpAddr>()
            .map_err(|_| format!("bad address {:?}", cells[i]))
    };
    let port = |i: usize| cells[i].parse::<u16>().map_err(|_| format!("bad port {:?}", cells[i]));
    let flow_key = FlowKey {
        src_addr: addr(si)?,
        dst_addr: addr(di)?,
        src_port: port(sp)?,
        dst_port: port(dp)?,
        protocol: cells[pr]
            .parse::<u8>()
            .map_err(|_| format!("bad protocol {:?}", cells[pr]))?,
    };
    let timestamp = parse_timestamp(cells[layout.timestamp])?;
    let mut missing = 0;
    let mut features = Vec::with_capacity(layout.features.len());
    for (i, name) in &layout.features {
        let cell = cells[*i];
        let value = if cell.is_empty() {
            missing += 1;
            0.0
        } else {
            match cell.parse::<f64>() {
                Ok(v) if v.is_finite() => v,
                _ => return Err(format!("non-numeric {name} {cell:?}")),
            }
        };
        features.push((name.clone(), value));
    }
    report.missing_cells += missing;
    let label = layout.label.and_then(|i| Label::parse(cells[i]));
    Ok(PacketRecord {
        flow_key,
        timestamp,
        features,
        label,
    })
}

/// Row-at-a-time reader over a feature table, for inputs too long to hold
/// or arriving as a stream.
pub struct FeatureCsvReader<R: Read> {
    reader: ::csv::Reader<R>,
    layout: Layout,
    row: ::csv::ByteRecord,
    report: IngestReport,
}

impl<R: Read> FeatureCsvReader<R> {
    /// Reads and checks the header.
    pub fn new(source: R, columns: &CsvColumns) -> Result<Self, IngestError> {
        let mut reader = ::csv::ReaderBuilder::new()
            .has_headers(true)
            .flexible(true)
            .trim(::csv::Trim::All)
            .from_reader(source);
        let header: Vec<String> = reader
            .byte_headers()?
            .iter()
            .map(|h| {
                std::str::from_utf8(h)
                    .map(str::to_string)
                    .map_err(|_| IngestError::Header("header is not UTF-8".into()))
            })
            .collect::<Result<_, _>>()?;
        let layout = layout(&header, columns)?;
        Ok(Self {
            reader,
            layout,
            row: ::csv::ByteRecord::new(),
            report: IngestReport::default(),
        })
    }

    /// Feature column names in table order.
    pub fn feature_names(&self) -> Vec<String> {
        self.layout.features.iter().map(|(_, n)| n.clone()).collect()
    }

    /// The next readable record, skipping and counting bad rows. `None` at
    /// the end of input.
    pub fn next_record(&mut self) -> Result<Option<PacketRecord>, IngestError> {
        loop {
            match self.reader.read_byte_record(&mut self.row) {
                Ok(false) => return Ok(None),
                Ok(true) => {}
                Err(e) if e.is_io_error() => return Err(e.into()),
                Err(e) => {
                    self.report.rows += 1;
                    let at = self.report.rows;
                    self.report.skip(at, e.to_string());
                    continue;
                }
            }
            self.report.rows += 1;
            let cells: Result<Vec<&str>, _> = self.row.iter().map(std::str::from_utf8).collect();
            let parsed = cells
                .map_err(|_| "row is not UTF-8".to_string())
                .and_then(|cells| parse_row(&cells, &self.layout, &mut self.report));
            match parsed {
                Ok(r) => {
                    self.report.records += 1;
                    return Ok(Some(r));
                }
                Err(reason) => {
                    let at = self.report.rows;
                    self.report.skip(at, reason);
                }
            }
        }
    }

    /// Counters so far.
    pub fn report(&self) -> &IngestReport {
        &self.report
    }
}

/// Parses a feature table. Rows that cannot be read are skipped and counted;
/// empty feature cells become 0.0 and are counted.
pub fn parse_feature_csv<R: Read>(
    source: R,
    columns: &CsvColumns,
) -> Result<(Vec<PacketRecord>, IngestReport), IngestError> {
    let mut reader = FeatureCsvReader::new(source, columns)?;
    let mut records = Vec::new();
    while let Some(r) = reader.next_record()? {
        records.push(r);
    }
    Ok((records, reader.report))
}

/// Writes records as a feature table readable by [`parse_feature_csv`].
/// Values use the shortest round-trip decimal form, so the pair is lossless.
pub fn write_feature_csv<W: Write>(records: &[PacketRecord], sink: W, columns: &CsvColumns) -> Result<(), IngestError> {
    let names: Vec<&str> = records.first().map(|r| r.feature_names().collect()).unwrap_or_default();
    for r in records {
        if !r.feature_names().eq(names.iter().copied()) {
            return Err(IngestError::InvalidArgument(
                "records do not share one feature list".into(),
            ));
        }
    }
    let labeled = records.iter().any(|r| r.label.is_some());
    let mut w = ::csv::WriterBuilder::new().from_writer(sink);
    let mut header: Vec<&str> = vec![
        &columns.src_ip,
        &columns.dst_ip,
        &columns.src_port,
        &columns.dst_port,
        &columns.proto,
        &columns.timestamp,
    ];
    header.extend(&names);
    if labeled {
        header.push(&columns.label);
    }
    w.write_record(&header)?;
    for r in records {
        let k = &r.flow_key;
        let mut row = vec![
            k.src_addr.to_string(),
            k.dst_addr.to_string(),
            k.src_port.to_string(),
            k.dst_port.to_string(),
            k.protocol.to_string(),
            r.timestamp.to_string(),
        ];
        row.extend(r.values().map(format_value));
        if labeled {
            row.push(r.label.as_ref().map(Label::to_string).unwrap_or_default());
        }
        w.write_record(&row)?;
    }
    w.flush()?;
    Ok(())
}
