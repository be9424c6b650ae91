//! Synthetic labeled traffic and a feature-selection fixture with a known
//! answer.
//!
//! # Traffic generator
//!
//! Every flow is a TCP flow with a unique source port. Per-flow constants are
//! drawn once: `ttl`, `win`, `tcphl` (20 or 32), an initial `ipid` and a base
//! payload size. Packet `i` of a flow then follows one of three regimes.
//!
//! Benign (`Normal`), a smooth progression:
//! - `tcpflags = 2` (SYN) and `pay = 0` for `i = 0`, else `tcpflags = 24`
//!   (PSH|ACK) and `pay = base + 8·(i mod 4)`
//! - `seq_i = Σ_{k<i} pay_k`, `ipid_i = ipid_0 + i`
//! - `iat_0 = 0`, `iat_i = rate · (1 + 0.1·z_i)` with `rate ∈ [1000, 5000]` µs
//!   and `z_i ~ N(0, 1)` clipped to ±3
//! - `ipflags = 2` (don't fragment)
//!
//! `DDoS-SYN_Flood`, a flag anomaly: `tcpflags = 2`, `pay = 0`, `seq` and
//! `ipid` uniform per packet, `iat ∈ [20, 200]` µs, `ipflags = 0`,
//! `win ∈ {512, 1024}`.
//!
//! `DoS-TCP_Burst`, a size burst: `tcpflags = 24`,
//! `pay = 1400 + 8·(i mod 8)`, `seq` and `ipid` progress as in benign flows,
//! `iat ∈ [10, 100]` µs. One flow may switch from the benign regime to this
//! one part-way through, so the malicious row count hits its target exactly.
//!
//! In all regimes `len = 14 + 20 + tcphl + pay`, `iphl = 20`, `frag = 0`,
//! `urg = 0`, and `ecn` is 1 with probability 0.02.

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};
use std::net::{IpAddr, Ipv4Addr};
use thiserror::Error;

use crate::featsel::FeatureMatrix;
use crate::record::{FlowKey, Label, PacketRecord};

pub const SYNTH_FEATURES: [&str; 14] = [
    "len", "iphl", "ttl", "ipflags", "frag", "ecn", "tcpflags", "win", "tcphl", "pay", "seq", "ipid", "iat", "urg",
];
pub const SYN_FLOOD: &str = "DDoS-SYN_Flood";
pub const TCP_BURST: &str = "DoS-TCP_Burst";
const BASE_TIME_US: i64 = 1_700_000_000_000_000;

#[derive(Debug, Error, PartialEq)]
pub enum SynthError {
    #[error("invalid scenario: {0}")]
    Invalid(String),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BenignParams {
    /// Per-flow mean inter-arrival range, µs.
    pub rate_us: (f64, f64),
    /// Candidate per-flow base payload sizes.
    pub payload_sizes: Vec<u32>,
    pub ttl_choices: Vec<u32>,
    pub window_choices: Vec<u32>,
}

impl Default for BenignParams {
    fn default() -> Self {
        Self {
            rate_us: (1000.0, 5000.0),
            payload_sizes: vec![64, 128, 256, 512],
            ttl_choices: vec![32, 64, 128, 255],
            window_choices: (1..=8).map(|k| 2048 * k).collect(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MaliciousParams {
    /// Inter-arrival range of SYN-flood packets, µs.
    pub flood_iat_us: (u32, u32),
    /// Inter-arrival range of burst packets, µs.
    pub burst_iat_us: (u32, u32),
    pub burst_payload: u32,
    /// Share of fully malicious flows that are SYN floods.
    pub flood_share: f64,
}

impl Default for MaliciousParams {
    fn default() -> Self {
        Self {
            flood_iat_us: (20, 200),
            burst_iat_us: (10, 100),
            burst_payload: 1400,
            flood_share: 0.5,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SynthScenario {
    pub n_flows: usize,
    /// Inclusive flow length range.
    pub flow_len_range: (usize, usize),
    /// When set, flow lengths are nudged within the range to sum to this.
    pub n_packets: Option<usize>,
    pub malicious_fraction: f64,
    pub seed: u64,
    pub benign: BenignParams,
    pub malicious: MaliciousParams,
}

impl Default for SynthScenario {
    fn default() -> Self {
        Self {
            n_flows: 250,
            flow_len_range: (10, 30),
            n_packets: Some(5000),
            malicious_fraction: 0.3,
            seed: 7,
            benign: BenignParams::default(),
            malicious: MaliciousParams::default(),
        }
    }
}

#[derive(Clone, Copy, PartialEq)]
enum Regime {
    Benign,
    Flood,
    Burst,
}

fn flow_lengths(s: &SynthScenario, rng: &mut ChaCha8Rng) -> Result<Vec<usize>, SynthError> {
    let (lo, hi) = s.flow_len_range;
    if lo == 0 || lo > hi {
        return Err(SynthError::Invalid(format!("flow_len_range ({lo}, {hi})")));
    }
    let mut lens: Vec<usize> = (0..s.n_flows).map(|_| rng.random_range(lo..=hi)).collect();
    if let Some(n) = s.n_packets {
        if n < lo * s.n_flows || n > hi * s.n_flows {
            return Err(SynthError::Invalid(format!(
                "{n} packets cannot be split into {} flows of {lo}..={hi}",
                s.n_flows
            )));
        }
        let mut total: usize = lens.iter().sum();
        while total != n {
            let f = rng.random_range(0..lens.len());
            if total < n && lens[f] < hi {
                lens[f] += 1;
                total += 1;
            } else if total > n && lens[f] > lo {
                lens[f] -= 1;
                total -= 1;
            }
        }
    }
    Ok(lens)
}

fn pick<T: Copy>(rng: &mut ChaCha8Rng, xs: &[T]) -> T {
    xs[rng.random_range(0..xs.len())]
}

/// Generates the labeled packets of a scenario, ordered by timestamp.
pub fn generate(s: &SynthScenario) -> Result<Vec<PacketRecord>, SynthError> {
    if !(0.0..=1.0).contains(&s.malicious_fraction) {
        return Err(SynthError::Invalid(format!(
            "malicious_fraction {} outside [0, 1]",
            s.malicious_fraction
        )));
    }
    if s.n_flows == 0 || s.n_flows > 40_000 {
        return Err(SynthError::Invalid(format!("n_flows {} outside 1..=40000", s.n_flows)));
    }
    let b = &s.benign;
    if b.payload_sizes.is_empty() || b.ttl_choices.is_empty() || b.window_choices.is_empty() {
        return Err(SynthError::Invalid("benign choice lists must be non-empty".into()));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(s.seed);
    let lens = flow_lengths(s, &mut rng)?;
    let total: usize = lens.iter().sum();

    // Malicious packets per flow: whole flows first, then one benign flow's
    // tail, until the target is met exactly.
    let mut target = (s.malicious_fraction * total as f64).round() as usize;
    let mut order: Vec<usize> = (0..s.n_flows).collect();
    order.shuffle(&mut rng);
    let mut bad_tail = vec![0usize; s.n_flows];
    for &f in &order {
        if target == 0 {
            break;
        }
        bad_tail[f] = lens[f].min(target);
        target -= bad_tail[f];
    }

    let m = &s.malicious;
    let mut rows: Vec<(i64, usize, PacketRecord)> = Vec::with_capacity(total);
    for f in 0..s.n_flows {
        let n = lens[f];
        let fully_bad = bad_tail[f] == n;
        let attack = if fully_bad && rng.random_bool(m.flood_share.clamp(0.0, 1.0)) {
            Regime::Flood
        } else {
            Regime::Burst
        };
        let src = if fully_bad {
            Ipv4Addr::new(172, 16, (f / 250) as u8, (f % 250 + 1) as u8)
        } else {
            Ipv4Addr::new(10, 0, (f / 250) as u8, (f % 250 + 1) as u8)
        };
        let key = FlowKey {
            src_addr: IpAddr::V4(src),
            dst_addr: IpAddr::V4(Ipv4Addr::new(192, 168, 1, 10)),
            src_port: 20_000 + f as u16,
            dst_port: pick(&mut rng, &[80, 443, 8080]),
            protocol: 6,
        };
        let ttl = pick(&mut rng, &b.ttl_choices) as f64;
        let tcphl = pick(&mut rng, &[20.0, 32.0]);
        let base = pick(&mut rng, &b.payload_sizes) as f64;
        let rate = rng.random_range(b.rate_us.0..=b.rate_us.1);
        let ipid0 = rng.random_range(0..65536u32) as f64;
        let benign_win = pick(&mut rng, &b.window_choices) as f64;
        let flood_win = pick(&mut rng, &[512.0, 1024.0]);
        let mut ts = BASE_TIME_US + rng.random_range(0..60_000_000i64);
        let mut seq = 0.0;

        for i in 0..n {
            let regime = if i + bad_tail[f] >= n {
                if fully_bad {
                    attack
                } else {
                    Regime::Burst
                }
            } else {
                Regime::Benign
            };
            let (flags, pay, iat, ipflags, win, seq_v, ipid) = match regime {
                Regime::Benign => {
                    let z: f64 = StandardNormal.sample(&mut rng);
                    let iat = if i == 0 { 0.0 } else { (rate * (1.0 + 0.1 * z.clamp(-3.0, 3.0))).round() };
                    let (flags, pay) = if i == 0 { (2.0, 0.0) } else { (24.0, base + 8.0 * (i % 4) as f64) };
                    (flags, pay, iat, 2.0, benign_win, seq, (ipid0 + i as f64) % 65536.0)
                }
                Regime::Flood => {
                    let iat = rng.random_range(m.flood_iat_us.0..=m.flood_iat_us.1) as f64;
                    let seq_v = rng.random_range(0..1_000_000u32) as f64;
                    let ipid = rng.random_range(0..65536u32) as f64;
                    (2.0, 0.0, if i == 0 { 0.0 } else { iat }, 0.0, flood_win, seq_v, ipid)
                }
                Regime::Burst => {
                    let iat = rng.random_range(m.burst_iat_us.0..=m.burst_iat_us.1) as f64;
                    let pay = (m.burst_payload + 8 * (i % 8) as u32) as f64;
                    let win = if fully_bad { 65535.0 } else { benign_win };
                    (24.0, pay, if i == 0 { 0.0 } else { iat }, 2.0, win, seq, (ipid0 + i as f64) % 65536.0)
                }
            };
            ts += iat as i64;
            let ecn = if rng.random_bool(0.02) { 1.0 } else { 0.0 };
            let values = [
                14.0 + 20.0 + tcphl + pay,
                20.0,
                ttl,
                ipflags,
                0.0,
                ecn,
                flags,
                win,
                tcphl,
                pay,
                seq_v,
                ipid,
                iat,
                0.0,
            ];
            seq += pay;
            let label = match regime {
                Regime::Benign => Label::Normal,
                Regime::Flood => Label::Malicious(SYN_FLOOD.into()),
                Regime::Burst => Label::Malicious(TCP_BURST.into()),
            };
            rows.push((
                ts,
                f,
                PacketRecord {
                    flow_key: key,
                    timestamp: ts,
                    features: SYNTH_FEATURES.iter().zip(values).map(|(n, v)| (n.to_string(), v)).collect(),
                    label: Some(label),
                },
            ));
        }
    }
    rows.sort_by_key(|(ts, f, _)| (*ts, *f));
    Ok(rows.into_iter().map(|(_, _, r)| r).collect())
}

/// A matrix whose correct selection is known by construction.
#[derive(Debug, Clone)]
pub struct SelectionFixture {
    pub matrix: FeatureMatrix,
    pub informative: Vec<String>,
    pub quasi_constant: Vec<String>,
    /// `(duplicate, source)`; the source precedes its duplicate.
    pub duplicates: Vec<(String, String)>,
}

/// 71 columns: 26 independent bimodal columns (scaled variance ≈ 0.13),
/// 30 quasi-constant columns (one value except ~1% spikes, scaled variance
/// < 0.02) and 15 near-exact affine copies of informative columns
/// (|r| > 0.999), interleaved in a seeded order with every copy after its
/// source. Selection at the default thresholds keeps exactly the 26.
pub fn selection_fixture(n_rows: usize, seed: u64) -> SelectionFixture {
    const N_INFO: usize = 26;
    const N_QUASI: usize = 30;
    const N_DUP: usize = 15;
    let n_rows = n_rows.max(100);
    let mut rng = ChaCha8Rng::seed_from_u64(seed);

    enum Kind {
        Info(usize),
        Quasi,
        Dup(usize),
    }
    let mut kinds: Vec<Kind> = (0..N_INFO)
        .map(Kind::Info)
        .chain((0..N_QUASI).map(|_| Kind::Quasi))
        .collect();
    kinds.shuffle(&mut rng);
    // Each copy goes somewhere after its source.
    for _ in 0..N_DUP {
        let src = rng.random_range(0..N_INFO);
        let at = kinds.iter().position(|k| matches!(k, Kind::Info(i) if *i == src)).unwrap();
        let pos = rng.random_range(at + 1..=kinds.len());
        kinds.insert(pos, Kind::Dup(src));
    }

    let info_cols: Vec<Vec<f64>> = (0..N_INFO)
        .map(|_| {
            let (scale, offset) = (rng.random_range(0.5..500.0), rng.random_range(-100.0..100.0));
            (0..n_rows)
                .map(|_| {
                    let x = if rng.random_bool(0.5) {
                        rng.random_range(0.0..0.3)
                    } else {
                        rng.random_range(0.7..1.0)
                    };
                    offset + scale * x
                })
                .collect()
        })
        .collect();

    let names: Vec<String> = (0..kinds.len()).map(|i| format!("f{i:02}")).collect();
    let mut columns: Vec<Vec<f64>> = Vec::with_capacity(kinds.len());
    let mut info_name = vec![String::new(); N_INFO];
    let mut fixture = SelectionFixture {
        matrix: FeatureMatrix::new(Vec::new(), Vec::new(), 0).expect("empty matrix"),
        informative: Vec::new(),
        quasi_constant: Vec::new(),
        duplicates: Vec::new(),
    };
    for (c, kind) in kinds.iter().enumerate() {
        let col = match kind {
            Kind::Info(i) => {
                info_name[*i] = names[c].clone();
                fixture.informative.push(names[c].clone());
                info_cols[*i].clone()
            }
            Kind::Quasi => {
                fixture.quasi_constant.push(names[c].clone());
                let level = rng.random_range(-10.0..10.0);
                let spike = rng.random_range(1.0..50.0);
                let forced = rng.random_range(0..n_rows);
                (0..n_rows)
                    .map(|r| if r == forced || rng.random_bool(0.01) { level + spike } else { level })
                    .collect()
            }
            Kind::Dup(i) => {
                fixture.duplicates.push((names[c].clone(), info_name[*i].clone()));
                let a = if rng.random_bool(0.5) { 1.0 } else { -1.0 } * rng.random_range(0.1..10.0);
                let b = rng.random_range(-50.0..50.0);
                let src = &info_cols[*i];
                let spread = src.iter().copied().fold(f64::NEG_INFINITY, f64::max)
                    - src.iter().copied().fold(f64::INFINITY, f64::min);
                src.iter()
                    .map(|&x| a * x + b + a * spread * 1e-3 * rng.random_range(-1.0..1.0))
                    .collect()
            }
        };
        columns.push(col);
    }
    let values = (0..n_rows).flat_map(|r| columns.iter().map(move |c| c[r])).collect();
    fixture.matrix = FeatureMatrix::new(names, values, n_rows).expect("finite fixture");
    fixture
}
