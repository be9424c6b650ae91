//! Classic packet-capture reader for Ethernet/IPv4/TCP|UDP frames.
//!
//! Only the layer 2-4 headers are decoded. Payload bytes are never read; the
//! payload length is derived from the IP total length and header lengths.

use std::io::Read;
use std::net::{IpAddr, Ipv4Addr};

use super::{IngestError, IngestReport};
use crate::record::{FlowKey, PacketRecord};

/// Feature columns produced for every captured packet, in order.
pub const CAPTURE_FEATURES: [&str; 11] = [
    "frame_len",
    "ip_hdr_len",
    "ip_total_len",
    "ttl",
    "ip_proto",
    "ip_flags",
    "frag_offset",
    "tcp_flags",
    "tcp_window",
    "l4_hdr_len",
    "payload_len",
];

const MAGIC_USEC: u32 = 0xa1b2_c3d4;
const MAGIC_NSEC: u32 = 0xa1b2_3c4d;
const LINKTYPE_ETHERNET: u32 = 1;
const ETHERTYPE_IPV4: u16 = 0x0800;
const ETHERTYPE_VLAN: u16 = 0x8100;
const PROTO_TCP: u8 = 6;
const PROTO_UDP: u8 = 17;

#[derive(Clone, Copy)]
struct Format {
    big_endian: bool,
    nanos: bool,
}

impl Format {
    fn u32(self, b: &[u8]) -> u32 {
        let a = [b[0], b[1], b[2], b[3]];
        if self.big_endian {
            u32::from_be_bytes(a)
        } else {
            u32::from_le_bytes(a)
        }
    }
}

fn be16(b: &[u8], at: usize) -> u16 {
    u16::from_be_bytes([b[at], b[at + 1]])
}

enum Frame {
    Packet(PacketRecord),
    NonIp,
    Unsupported(String),
}

fn decode_frame(frame: &[u8], orig_len: u32, timestamp: i64) -> Frame {
    let mut off = 12;
    if frame.len() < off + 2 {
        return Frame::Unsupported("ethernet header truncated".into());
    }
    let mut ethertype = be16(frame, off);
    off += 2;
    if ethertype == ETHERTYPE_VLAN {
        if frame.len() < off + 4 {
            return Frame::Unsupported("VLAN tag truncated".into());
        }
        ethertype = be16(frame, off + 2);
        off += 4;
    }
    if ethertype != ETHERTYPE_IPV4 {
        return Frame::NonIp;
    }
    let ip = &frame[off..];
    if ip.len() < 20 || ip[0] >> 4 != 4 {
        return Frame::Unsupported("not a complete IPv4 header".into());
    }
    let ihl = usize::from(ip[0] & 0x0f) * 4;
    if ihl < 20 || ip.len() < ihl {
        return Frame::Unsupported(format!("bad IPv4 header length {ihl}"));
    }
    let total_len = be16(ip, 2);
    let flags_frag = be16(ip, 6);
    let (ip_flags, frag_offset) = (flags_frag >> 13, flags_frag & 0x1fff);
    let ttl = ip[8];
    let proto = ip[9];
    let src = Ipv4Addr::new(ip[12], ip[13], ip[14], ip[15]);
    let dst = Ipv4Addr::new(ip[16], ip[17], ip[18], ip[19]);
    if proto != PROTO_TCP && proto != PROTO_UDP {
        return Frame::Unsupported(format!("IP protocol {proto}"));
    }
    if frag_offset != 0 {
        return Frame::Unsupported("non-initial fragment".into());
    }
    let l4 = &ip[ihl..];
    let (src_port, dst_port, tcp_flags, window, l4_len) = if proto == PROTO_TCP {
        if l4.len() < 20 {
            return Frame::Unsupported("TCP header truncated".into());
        }
        let data_off = usize::from(l4[12] >> 4) * 4;
        let flags = u16::from(l4[12] & 0x01) << 8 | u16::from(l4[13]);
        (be16(l4, 0), be16(l4, 2), flags, be16(l4, 14), data_off)
    } else {
        if l4.len() < 8 {
            return Frame::Unsupported("UDP header truncated".into());
        }
        (be16(l4, 0), be16(l4, 2), 0, 0, 8)
    };
    let payload_len = usize::from(total_len).saturating_sub(ihl + l4_len);
    let values = [
        f64::from(orig_len),
        ihl as f64,
        f64::from(total_len),
        f64::from(ttl),
        f64::from(proto),
        f64::from(ip_flags),
        f64::from(frag_offset),
        f64::from(tcp_flags),
        f64::from(window),
        l4_len as f64,
        payload_len as f64,
    ];
    Frame::Packet(PacketRecord {
        flow_key: FlowKey {
            src_addr: IpAddr::V4(src),
            dst_addr: IpAddr::V4(dst),
            src_port,
            dst_port,
            protocol: proto,
        },
        timestamp,
        features: CAPTURE_FEATURES
            .iter()
            .zip(values)
            .map(|(n, v)| (n.to_string(), v))
            .collect(),
        label: None,
    })
}

/// Parses a classic capture file (microsecond or nanosecond variant, either
/// byte order, Ethernet link type). A truncated trailing record stops the
/// scan with the packets read so far and a warning.
pub fn parse_raw_capture<R: Read>(mut source: R) -> Result<(Vec<PacketRecord>, IngestReport), IngestError> {
    let mut buf = Vec::new();
    source.read_to_end(&mut buf)?;
    if buf.len() < 24 {
        return Err(IngestError::Capture("global header truncated".into()));
    }
    let raw_magic = u32::from_le_bytes([buf[0], buf[1], buf[2], buf[3]]);
    let format = match (raw_magic, raw_magic.swap_bytes()) {
        (MAGIC_USEC, _) => Format { big_endian: false, nanos: false },
        (MAGIC_NSEC, _) => Format { big_endian: false, nanos: true },
        (_, MAGIC_USEC) => Format { big_endian: true, nanos: false },
        (_, MAGIC_NSEC) => Format { big_endian: true, nanos: true },
        _ => return Err(IngestError::Capture(format!("unknown magic {raw_magic:#010x}"))),
    };
    let link = format.u32(&buf[20..24]);
    if link != LINKTYPE_ETHERNET {
        return Err(IngestError::Capture(format!("unsupported link type {link}")));
    }

    let mut report = IngestReport::default();
    let mut records = Vec::new();
    let mut pos = 24;
    while pos < buf.len() {
        if buf.len() - pos < 16 {
            report.truncated = true;
            report.warnings += 1;
            break;
        }
        let h = &buf[pos..pos + 16];
        let (sec, frac) = (format.u32(&h[0..4]), format.u32(&h[4..8]));
        let (incl, orig) = (format.u32(&h[8..12]) as usize, format.u32(&h[12..16]));
        if buf.len() - pos - 16 < incl {
            report.truncated = true;
            report.warnings += 1;
            break;
        }
        let frame = &buf[pos + 16..pos + 16 + incl];
        pos += 16 + incl;
        report.rows += 1;
        let micros = if format.nanos { i64::from(frac) / 1000 } else { i64::from(frac) };
        let timestamp = i64::from(sec) * 1_000_000 + micros;
        match decode_frame(frame, orig, timestamp) {
            Frame::Packet(r) => records.push(r),
            Frame::NonIp => {
                report.non_ip += 1;
                report.skip(report.rows, "non-IPv4 frame");
            }
            Frame::Unsupported(reason) => report.skip(report.rows, reason),
        }
    }
    report.records = records.len() as u64;
    Ok((records, report))
}
