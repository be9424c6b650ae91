//! Canonical packet text: `name=value` fields joined by single spaces, in
//! kept-feature order.

use super::TextError;
use crate::record::{FlowKey, PacketRecord};

/// Shortest decimal string that parses back to the same `f64`; integral
/// values print without a decimal point.
pub fn format_value(v: f64) -> String {
    format!("{v}")
}

pub fn serialize_packet(p: &PacketRecord, kept: &[String]) -> Result<String, TextError> {
    let mut out = String::new();
    for (i, name) in kept.iter().enumerate() {
        let v = p
            .feature(name)
            .ok_or_else(|| TextError::MissingFeature(name.clone()))?;
        if i > 0 {
            out.push(' ');
        }
        out.push_str(name);
        out.push('=');
        out.push_str(&format_value(v));
    }
    Ok(out)
}

/// Inverse of [`serialize_packet`]. The record gets a default flow key, a
/// zero timestamp and no label.
pub fn parse_packet_text(text: &str, kept: &[String]) -> Result<PacketRecord, TextError> {
    let fields: Vec<&str> = if text.is_empty() { Vec::new() } else { text.split(' ').collect() };
    if fields.len() != kept.len() {
        return Err(TextError::WrongFieldCount {
            got: fields.len(),
            want: kept.len(),
        });
    }
    let mut features = Vec::with_capacity(kept.len());
    for (position, (field, want)) in fields.iter().zip(kept).enumerate() {
        // A bare name reads as that name with an empty (unparseable) value.
        let (name, value) = field.split_once('=').unwrap_or((field, ""));
        if name != want {
            return Err(TextError::UnknownName {
                position,
                got: name.to_string(),
                want: want.clone(),
            });
        }
        let v = value
            .parse::<f64>()
            .ok()
            .filter(|v| v.is_finite())
            .ok_or_else(|| TextError::UnparseableValue {
                name: want.clone(),
                value: value.to_string(),
            })?;
        features.push((want.clone(), v));
    }
    Ok(PacketRecord {
        flow_key: FlowKey::default(),
        timestamp: 0,
        features,
        label: None,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn kept(names: &[&str]) -> Vec<String> {
        names.iter().map(|s| s.to_string()).collect()
    }

    fn record(pairs: &[(&str, f64)]) -> PacketRecord {
        PacketRecord {
            flow_key: FlowKey::default(),
            timestamp: 0,
            features: pairs.iter().map(|&(n, v)| (n.to_string(), v)).collect(),
            label: None,
        }
    }

    #[test]
    fn canonical_rendering() {
        let r = record(&[("ttl", 64.0), ("win", 1024.0), ("x", 3.50)]);
        assert_eq!(serialize_packet(&r, &kept(&["ttl", "win"])).unwrap(), "ttl=64 win=1024");
        assert_eq!(serialize_packet(&r, &kept(&["x"])).unwrap(), "x=3.5");
        assert_eq!(format_value(0.1), "0.1");
        assert_eq!(format_value(-0.0), "-0");
        assert!(matches!(
            serialize_packet(&r, &kept(&["nope"])),
            Err(TextError::MissingFeature(n)) if n == "nope"
        ));
    }

    #[test]
    fn parse_errors_are_distinguished() {
        let k = kept(&["ttl", "win"]);
        let r = parse_packet_text("ttl=64 win=1024", &k).unwrap();
        assert_eq!(r.features, vec![("ttl".into(), 64.0), ("win".into(), 1024.0)]);
        assert_eq!(
            parse_packet_text("ttl=64", &k).unwrap_err(),
            TextError::WrongFieldCount { got: 1, want: 2 }
        );
        assert_eq!(
            parse_packet_text("", &k).unwrap_err(),
            TextError::WrongFieldCount { got: 0, want: 2 }
        );
        assert!(matches!(
            parse_packet_text("ttl=64 wim=1", &k),
            Err(TextError::UnknownName { position: 1, .. })
        ));
        assert!(matches!(
            parse_packet_text("ttl=6x4 win=1", &k),
            Err(TextError::UnparseableValue { .. })
        ));
        assert!(matches!(
            parse_packet_text("ttl win=1", &k),
            Err(TextError::UnparseableValue { .. })
        ));
        assert!(matches!(
            parse_packet_text("ttl=inf win=1", &k),
            Err(TextError::UnparseableValue { .. })
        ));
    }
}
