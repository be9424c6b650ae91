//! Per-packet records and the pair examples built from them.

use std::fmt;
use std::net::{IpAddr, Ipv4Addr};

use serde::{Deserialize, Serialize};

/// Unidirectional 5-tuple. Equality is exact field equality.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct FlowKey {
    pub src_addr: IpAddr,
    pub dst_addr: IpAddr,
    pub src_port: u16,
    pub dst_port: u16,
    pub protocol: u8,
}

impl Default for FlowKey {
    fn default() -> Self {
        Self {
            src_addr: IpAddr::V4(Ipv4Addr::UNSPECIFIED),
            dst_addr: IpAddr::V4(Ipv4Addr::UNSPECIFIED),
            src_port: 0,
            dst_port: 0,
            protocol: 0,
        }
    }
}

impl fmt::Display for FlowKey {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(
            f,
            "{}:{} -> {}:{} proto {}",
            self.src_addr, self.src_port, self.dst_addr, self.dst_port, self.protocol
        )
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Label {
    Normal,
    Malicious(String),
}

impl Label {
    /// Class index used by the models: 0 = normal, 1 = malicious.
    pub fn class(&self) -> usize {
        match self {
            Label::Normal => 0,
            Label::Malicious(_) => 1,
        }
    }

    /// Reads a label cell. `Normal`/`Benign` (any case) are normal, anything
    /// else names an attack; an empty cell means unlabeled.
    pub fn parse(cell: &str) -> Option<Label> {
        let cell = cell.trim();
        if cell.is_empty() {
            None
        } else if cell.eq_ignore_ascii_case("normal") || cell.eq_ignore_ascii_case("benign") {
            Some(Label::Normal)
        } else {
            Some(Label::Malicious(cell.to_string()))
        }
    }
}

impl fmt::Display for Label {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Label::Normal => f.write_str("Normal"),
            Label::Malicious(name) => f.write_str(name),
        }
    }
}

/// One packet's header-derived feature vector.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PacketRecord {
    pub flow_key: FlowKey,
    /// Microseconds since the epoch.
    pub timestamp: i64,
    pub features: Vec<(String, f64)>,
    pub label: Option<Label>,
}

impl PacketRecord {
    pub fn feature(&self, name: &str) -> Option<f64> {
        self.features.iter().find(|(n, _)| n == name).map(|&(_, v)| v)
    }

    pub fn feature_names(&self) -> impl Iterator<Item = &str> {
        self.features.iter().map(|(n, _)| n.as_str())
    }

    pub fn values(&self) -> impl Iterator<Item = f64> + '_ {
        self.features.iter().map(|&(_, v)| v)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum PairLabel {
    Successive,
    NonSuccessive,
}

impl PairLabel {
    /// Class index: 0 = successive, 1 = non-successive.
    pub fn class(self) -> usize {
        match self {
            PairLabel::Successive => 0,
            PairLabel::NonSuccessive => 1,
        }
    }

    pub fn from_class(c: usize) -> Self {
        if c == 0 {
            PairLabel::Successive
        } else {
            PairLabel::NonSuccessive
        }
    }
}

impl fmt::Display for PairLabel {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            PairLabel::Successive => "Successive",
            PairLabel::NonSuccessive => "NonSuccessive",
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PairExample {
    pub first: PacketRecord,
    pub second: PacketRecord,
    pub label: PairLabel,
}
