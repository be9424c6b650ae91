use std::net::{IpAddr, Ipv4Addr};

use pktseer_core::ingest::*;
use pktseer_core::{FlowKey, Label, PacketRecord, PairLabel};
use proptest::prelude::*;
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn csv(text: &str) -> (Vec<PacketRecord>, IngestReport) {
    parse_feature_csv(text.as_bytes(), &CsvColumns::default()).unwrap()
}

#[test]
fn single_row_maps_fields_directly() {
    let (recs, rep) = csv("srcIP,dstIP,srcPort,dstPort,proto,ts,f1,label\n10.0.0.1,10.0.0.2,50000,80,6,1000,3.5,Normal\n");
    assert_eq!(recs.len(), 1);
    let r = &recs[0];
    assert_eq!(r.features, vec![("f1".to_string(), 3.5)]);
    assert_eq!(r.label, Some(Label::Normal));
    assert_eq!(r.timestamp, 1000);
    assert_eq!(
        r.flow_key,
        FlowKey {
            src_addr: IpAddr::V4(Ipv4Addr::new(10, 0, 0, 1)),
            dst_addr: IpAddr::V4(Ipv4Addr::new(10, 0, 0, 2)),
            src_port: 50000,
            dst_port: 80,
            protocol: 6,
        }
    );
    assert_eq!((rep.rows, rep.skipped), (1, 0));
}

#[test]
fn header_only_is_empty() {
    let (recs, rep) = csv("srcIP,dstIP,srcPort,dstPort,proto,ts,f1\n");
    assert!(recs.is_empty());
    assert_eq!(rep.rows, 0);
}

#[test]
fn hand_counted_six_rows_with_one_bad_cell() {
    let text = "\
srcIP,dstIP,srcPort,dstPort,proto,ts,len,ttl,label
10.0.0.1,10.0.0.9,1000,80,6,1,60,64,Normal
10.0.0.1,10.0.0.9,1000,80,6,2,60,64,Normal
10.0.0.2,10.0.0.9,1001,80,6,3,,64,DDoS-SYN
10.0.0.2,10.0.0.9,1001,80,6,4,sixty,64,DDoS-SYN
10.0.0.3,10.0.0.9,1002,53,17,5,80,128,
10.0.0.3,10.0.0.9,1002,53,17,6,80,128,Benign
";
    let (recs, rep) = csv(text);
    // Rows 1-3, 5 and 6 survive; row 3's empty cell becomes 0.
    assert_eq!(recs.len(), 5);
    assert_eq!((rep.rows, rep.records, rep.skipped, rep.missing_cells), (6, 5, 1, 1));
    assert_eq!(rep.skips[0].position, 4);
    assert_eq!(recs[2].feature("len"), Some(0.0));
    assert_eq!(recs[2].label, Some(Label::Malicious("DDoS-SYN".into())));
    assert_eq!(recs[3].label, None);
    assert_eq!(recs[4].label, Some(Label::Normal));
    assert_eq!(rep.rows, rep.records + rep.skipped);
}

#[test]
fn missing_key_column_is_fatal() {
    let err = parse_feature_csv("srcIP,dstIP,srcPort,proto,ts,f1\n".as_bytes(), &CsvColumns::default()).unwrap_err();
    assert!(matches!(err, IngestError::MissingColumn(c) if c == "dstPort"));
}

#[test]
fn configurable_column_names() {
    let cols = CsvColumns {
        src_ip: "Src IP".into(),
        timestamp: "Timestamp".into(),
        ..CsvColumns::default()
    };
    let (recs, _) = parse_feature_csv(
        "Src IP,dstIP,srcPort,dstPort,proto,Timestamp,x\n1.2.3.4,5.6.7.8,1,2,17,9,0.25\n".as_bytes(),
        &cols,
    )
    .unwrap();
    assert_eq!(recs[0].feature("x"), Some(0.25));
}

fn arb_record(n_features: usize) -> impl Strategy<Value = PacketRecord> {
    (
        any::<[u8; 4]>(),
        any::<[u8; 4]>(),
        any::<u16>(),
        any::<u16>(),
        any::<u8>(),
        -1_000_000_000_000i64..1_000_000_000_000,
        proptest::collection::vec(-1e9f64..1e9, n_features),
        0usize..3,
    )
        .prop_map(move |(s, d, sp, dp, pr, ts, vals, lab)| PacketRecord {
            flow_key: FlowKey {
                src_addr: IpAddr::V4(Ipv4Addr::from(s)),
                dst_addr: IpAddr::V4(Ipv4Addr::from(d)),
                src_port: sp,
                dst_port: dp,
                protocol: pr,
            },
            timestamp: ts,
            features: vals.into_iter().enumerate().map(|(i, v)| (format!("f{i}"), v)).collect(),
            label: [None, Some(Label::Normal), Some(Label::Malicious("DoS".into()))][lab].clone(),
        })
}

proptest! {
    #[test]
    fn csv_write_then_parse_is_lossless(recs in proptest::collection::vec(arb_record(3), 1..20)) {
        let mut buf = Vec::new();
        write_feature_csv(&recs, &mut buf, &CsvColumns::default()).unwrap();
        let (back, rep) = parse_feature_csv(&buf[..], &CsvColumns::default()).unwrap();
        prop_assert_eq!(rep.skipped, 0);
        prop_assert_eq!(back, recs);
    }

    #[test]
    fn rows_are_conserved(cells in proptest::collection::vec(prop_oneof![
        Just("1".to_string()), Just("".to_string()), Just("x".to_string()), Just("2.5".to_string()), Just("inf".to_string())
    ], 0..40)) {
        let mut text = String::from("srcIP,dstIP,srcPort,dstPort,proto,ts,a\n");
        for c in &cells {
            text.push_str(&format!("1.1.1.1,2.2.2.2,1,2,6,7,{c}\n"));
        }
        let (recs, rep) = csv(&text);
        prop_assert_eq!(recs.len() as u64 + rep.skipped, cells.len() as u64);
        prop_assert!(recs.iter().all(|r| r.values().all(f64::is_finite)));
    }
}

// Classic capture files, built byte by byte.

fn capture_header() -> Vec<u8> {
    let mut h = Vec::new();
    h.extend(0xa1b2_c3d4u32.to_le_bytes());
    h.extend(2u16.to_le_bytes());
    h.extend(4u16.to_le_bytes());
    h.extend(0i32.to_le_bytes());
    h.extend(0u32.to_le_bytes());
    h.extend(65535u32.to_le_bytes());
    h.extend(1u32.to_le_bytes());
    h
}

fn record(out: &mut Vec<u8>, sec: u32, usec: u32, frame: &[u8]) {
    out.extend(sec.to_le_bytes());
    out.extend(usec.to_le_bytes());
    out.extend((frame.len() as u32).to_le_bytes());
    out.extend((frame.len() as u32).to_le_bytes());
    out.extend_from_slice(frame);
}

fn ethernet(ethertype: u16, payload: &[u8]) -> Vec<u8> {
    let mut f = vec![0xaa; 6];
    f.extend([0xbb; 6]);
    f.extend(ethertype.to_be_bytes());
    f.extend_from_slice(payload);
    f
}

fn ipv4(proto: u8, ttl: u8, l4: &[u8]) -> Vec<u8> {
    let total = (20 + l4.len()) as u16;
    let mut p = vec![0x45, 0x00];
    p.extend(total.to_be_bytes());
    p.extend([0x12, 0x34]); // identification
    p.extend([0x40, 0x00]); // DF, offset 0
    p.extend([ttl, proto, 0, 0]);
    p.extend([192, 168, 0, 1]);
    p.extend([192, 168, 0, 2]);
    p.extend_from_slice(l4);
    p
}

fn tcp(flags: u8, window: u16, payload: usize) -> Vec<u8> {
    let mut t = Vec::new();
    t.extend(40000u16.to_be_bytes());
    t.extend(443u16.to_be_bytes());
    t.extend([0; 8]); // seq, ack
    t.push(5 << 4); // data offset 5 words
    t.push(flags);
    t.extend(window.to_be_bytes());
    t.extend([0; 4]); // checksum, urgent
    t.extend(vec![0x55; payload]);
    t
}

fn udp(payload: usize) -> Vec<u8> {
    let mut u = Vec::new();
    u.extend(5353u16.to_be_bytes());
    u.extend(53u16.to_be_bytes());
    u.extend(((8 + payload) as u16).to_be_bytes());
    u.extend([0, 0]);
    u.extend(vec![0x11; payload]);
    u
}

fn feature(r: &PacketRecord, name: &str) -> f64 {
    r.feature(name).unwrap()
}

#[test]
fn single_syn_packet() {
    let mut cap = capture_header();
    record(&mut cap, 10, 250, &ethernet(0x0800, &ipv4(6, 64, &tcp(0x02, 29200, 0))));
    let (recs, rep) = parse_raw_capture(&cap[..]).unwrap();
    assert_eq!(recs.len(), 1);
    assert_eq!(rep.skipped, 0);
    let r = &recs[0];
    assert_eq!(feature(r, "tcp_flags"), 2.0);
    assert_eq!(feature(r, "ttl"), 64.0);
    assert_eq!(feature(r, "tcp_window"), 29200.0);
    assert_eq!(feature(r, "ip_flags"), 2.0);
    assert_eq!(feature(r, "frame_len"), 54.0);
    assert_eq!(feature(r, "payload_len"), 0.0);
    assert_eq!(r.timestamp, 10_000_250);
    assert_eq!((r.flow_key.src_port, r.flow_key.dst_port, r.flow_key.protocol), (40000, 443, 6));
    assert_eq!(r.feature_names().collect::<Vec<_>>(), CAPTURE_FEATURES.to_vec());
}

#[test]
fn udp_plus_arp_skips_the_arp() {
    let mut cap = capture_header();
    record(&mut cap, 1, 0, &ethernet(0x0800, &ipv4(17, 128, &udp(12))));
    record(&mut cap, 1, 5, &ethernet(0x0806, &[0u8; 28]));
    let (recs, rep) = parse_raw_capture(&cap[..]).unwrap();
    assert_eq!(recs.len(), 1);
    assert_eq!(rep.skipped, 1);
    assert_eq!(feature(&recs[0], "payload_len"), 12.0);
    assert_eq!(feature(&recs[0], "l4_hdr_len"), 8.0);
}

#[test]
fn empty_capture_is_empty() {
    let (recs, rep) = parse_raw_capture(&capture_header()[..]).unwrap();
    assert!(recs.is_empty());
    assert_eq!(rep.skipped, 0);
}

#[test]
fn truncated_record_keeps_earlier_packets() {
    let mut cap = capture_header();
    record(&mut cap, 1, 0, &ethernet(0x0800, &ipv4(6, 64, &tcp(0x18, 100, 10))));
    record(&mut cap, 2, 0, &ethernet(0x0800, &ipv4(6, 64, &tcp(0x18, 100, 10))));
    cap.truncate(cap.len() - 7);
    let (recs, rep) = parse_raw_capture(&cap[..]).unwrap();
    assert_eq!(recs.len(), 1);
    assert!(rep.truncated);
    assert!(rep.warnings >= 1);
}

#[test]
fn bad_magic_is_an_error() {
    let mut cap = capture_header();
    cap[0] = 0;
    assert!(parse_raw_capture(&cap[..]).is_err());
}

fn packet(flow: u16, ts: i64, tag: f64) -> PacketRecord {
    PacketRecord {
        flow_key: FlowKey {
            src_port: flow,
            ..FlowKey::default()
        },
        timestamp: ts,
        features: vec![("tag".into(), tag)],
        label: None,
    }
}

fn tag(p: &PacketRecord) -> f64 {
    p.features[0].1
}

#[test]
fn grouping_counts() {
    let flows = assemble_flows(vec![packet(1, 5, 0.0), packet(2, 1, 1.0), packet(1, 3, 2.0)]);
    let mut sizes: Vec<usize> = flows.values().map(Vec::len).collect();
    sizes.sort();
    assert_eq!(sizes, vec![1, 2]);
}

#[test]
fn sorted_input_keeps_its_order() {
    let recs: Vec<PacketRecord> = (0..10).map(|i| packet(1, i / 3, i as f64)).collect();
    let flows = assemble_flows(recs.clone());
    assert_eq!(flows.values().next().unwrap(), &recs);
}

#[test]
fn hundred_shuffled_timestamps_sort_like_an_insertion_sort() {
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    let mut recs: Vec<PacketRecord> = (0..100)
        .map(|i| packet(7, rng.random_range(0..40), i as f64))
        .collect();
    recs.shuffle(&mut rng);
    // Independent stable sort: insertion sort on timestamp.
    let mut oracle: Vec<PacketRecord> = Vec::new();
    for r in &recs {
        let at = oracle.iter().rposition(|o| o.timestamp <= r.timestamp).map_or(0, |p| p + 1);
        oracle.insert(at, r.clone());
    }
    let flows = assemble_flows(recs);
    assert_eq!(flows.values().next().unwrap(), &oracle);
}

#[test]
fn adjacent_pairs() {
    let flows = assemble_flows(vec![packet(1, 1, 1.0), packet(1, 2, 2.0), packet(1, 3, 3.0)]);
    let pairs: Vec<(f64, f64)> = make_next_packet_pairs(&flows)
        .iter()
        .map(|(a, b)| (tag(a), tag(b)))
        .collect();
    assert_eq!(pairs, vec![(1.0, 2.0), (2.0, 3.0)]);
    let singles = assemble_flows(vec![packet(1, 0, 0.0), packet(2, 0, 0.0)]);
    assert!(make_next_packet_pairs(&singles).is_empty());
}

fn flows_of(lengths: &[usize]) -> Flows {
    let mut recs = Vec::new();
    let mut t = 0.0;
    for (f, &n) in lengths.iter().enumerate() {
        for i in 0..n {
            recs.push(packet(f as u16, i as i64, t));
            t += 1.0;
        }
    }
    assemble_flows(recs)
}

#[test]
fn pair_count_is_sum_of_lengths_minus_one() {
    assert_eq!(make_next_packet_pairs(&flows_of(&[4, 1, 2, 3, 7])).len(), 12);
}

#[test]
fn three_packets_give_four_examples() {
    let ds = make_pair_dataset(&flows_of(&[3]), 1.0, 0).unwrap();
    assert_eq!(ds.len(), 4);
    assert_eq!(ds.iter().filter(|e| e.label == PairLabel::Successive).count(), 2);
}

#[test]
fn pair_dataset_is_deterministic() {
    let flows = flows_of(&[5, 3, 8]);
    let a = serde_json::to_vec(&make_pair_dataset(&flows, 1.5, 9).unwrap()).unwrap();
    let b = serde_json::to_vec(&make_pair_dataset(&flows, 1.5, 9).unwrap()).unwrap();
    assert_eq!(a, b);
    let c = serde_json::to_vec(&make_pair_dataset(&flows, 1.5, 10).unwrap()).unwrap();
    assert_ne!(a, c);
}

#[test]
fn pair_dataset_preconditions() {
    assert!(matches!(
        make_pair_dataset(&flows_of(&[1]), 1.0, 0),
        Err(IngestError::InsufficientData(_))
    ));
    assert!(matches!(
        make_pair_dataset(&flows_of(&[3]), 0.0, 0),
        Err(IngestError::InvalidArgument(_))
    ));
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn negatives_never_pair_a_packet_with_its_successor(
        lengths in proptest::collection::vec(1usize..8, 1..8),
        ratio in 0.1f64..3.0,
        seed in any::<u64>(),
    ) {
        prop_assume!(lengths.iter().sum::<usize>() >= 2);
        let flows = flows_of(&lengths);
        let ds = make_pair_dataset(&flows, ratio, seed).unwrap();
        let positives = lengths.iter().map(|n| n - 1).sum::<usize>();
        let negatives = (ratio * positives as f64).ceil() as usize;
        prop_assert_eq!(ds.len(), positives + negatives);
        // Brute-force adjacency: tags are globally unique, so scan every flow.
        let adjacent = |a: f64, b: f64| flows.values().any(|f| f.windows(2).any(|w| tag(&w[0]) == a && tag(&w[1]) == b));
        for ex in &ds {
            let is_adj = ex.first.flow_key == ex.second.flow_key && adjacent(tag(&ex.first), tag(&ex.second));
            prop_assert_eq!(is_adj, ex.label == PairLabel::Successive);
        }
    }
}
