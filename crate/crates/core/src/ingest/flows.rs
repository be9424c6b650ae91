//! Flow assembly and the pair datasets derived from flows.

use std::collections::BTreeMap;

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::IngestError;
use crate::record::{FlowKey, PacketRecord, PairExample, PairLabel};

/// Packets grouped by flow key, each flow in timestamp order.
pub type Flows = BTreeMap<FlowKey, Vec<PacketRecord>>;

/// Groups records by exact 5-tuple and sorts each flow by timestamp. The sort
/// is stable, so equal timestamps keep their input order.
pub fn assemble_flows(records: impl IntoIterator<Item = PacketRecord>) -> Flows {
    let mut flows = Flows::new();
    for r in records {
        flows.entry(r.flow_key).or_default().push(r);
    }
    for packets in flows.values_mut() {
        packets.sort_by_key(|p| p.timestamp);
    }
    flows
}

/// Adjacent `(current, next)` pairs inside each flow; `n - 1` per flow.
pub fn make_next_packet_pairs(flows: &Flows) -> Vec<(PacketRecord, PacketRecord)> {
    flows
        .values()
        .flat_map(|f| f.windows(2).map(|w| (w[0].clone(), w[1].clone())))
        .collect()
}

/// Every adjacent pair as a positive plus `⌈ratio · positives⌉` negatives.
///
/// A negative pairs a uniformly drawn packet with a uniformly drawn packet
/// from any flow that is neither itself nor its in-flow successor. The result
/// is shuffled; everything is a pure function of `(flows, ratio, seed)`.
pub fn make_pair_dataset(flows: &Flows, negative_ratio: f64, seed: u64) -> Result<Vec<PairExample>, IngestError> {
    if !(negative_ratio > 0.0 && negative_ratio.is_finite()) {
        return Err(IngestError::InvalidArgument(format!(
            "negative_ratio must be positive, got {negative_ratio}"
        )));
    }
    // (flow, position) of every packet, flow-major.
    let index: Vec<(&[PacketRecord], usize)> = flows
        .values()
        .flat_map(|f| (0..f.len()).map(move |i| (f.as_slice(), i)))
        .collect();
    if index.len() < 2 {
        return Err(IngestError::InsufficientData(format!(
            "{} packet(s); pair sampling needs at least 2",
            index.len()
        )));
    }

    let mut out: Vec<PairExample> = make_next_packet_pairs(flows)
        .into_iter()
        .map(|(first, second)| PairExample {
            first,
            second,
            label: PairLabel::Successive,
        })
        .collect();
    let n_neg = (negative_ratio * out.len() as f64).ceil() as usize;

    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let n = index.len();
    let mut negatives = 0;
    while negatives < n_neg {
        let i = rng.random_range(0..n);
        let j = rng.random_range(0..n);
        let (flow, pos) = index[i];
        // Flow-major order puts the in-flow successor at the next index.
        let successor = pos + 1 < flow.len();
        if j == i || (successor && j == i + 1) {
            continue;
        }
        let (flow_j, pos_j) = index[j];
        out.push(PairExample {
            first: flow[pos].clone(),
            second: flow_j[pos_j].clone(),
            label: PairLabel::NonSuccessive,
        });
        negatives += 1;
    }
    out.shuffle(&mut rng);
    Ok(out)
}
