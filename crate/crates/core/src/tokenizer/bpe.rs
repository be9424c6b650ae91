//! Byte-level byte-pair encoding.
//!
//! Ids 0-5 are the special tokens, ids 6-261 the 256 single bytes, and every
//! later id a merged token. Tokens are identified by their byte string, so a
//! merge whose result already exists reuses that id, and the same pair can
//! then be learned more than once. Encoding replays the merges one rank at a
//! time in learned order, exactly like training does.

use std::collections::{BTreeMap, HashMap};
use std::fmt::Write as _;

use sha2::{Digest, Sha256};

use super::{is_special, TokenSequence, TokenizerError, BOS, EOS, N_SPECIAL, SPECIAL_NAMES};

/// Specials plus single bytes; a trained vocabulary must be larger.
pub const MIN_VOCAB_SIZE: usize = N_SPECIAL as usize + 256;
pub const VOCAB_MAGIC: &str = "pktseer-bpe 1";
/// Pairs seen fewer times than this are never merged by [`train_bpe`].
pub const DEFAULT_MIN_PAIR_COUNT: u64 = 2;

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct BpeVocab {
    /// Byte string of every id; empty for specials.
    tokens: Vec<Vec<u8>>,
    token_to_id: HashMap<Vec<u8>, u32>,
    merges: Vec<(u32, u32)>,
    merge_result: Vec<u32>,
    /// Pair → ascending ranks at which it was merged.
    ranks: HashMap<(u32, u32), Vec<u32>>,
}

impl Default for BpeVocab {
    fn default() -> Self {
        Self::base()
    }
}

fn merge_in_place(seq: &mut Vec<u32>, left: u32, right: u32, merged: u32) -> bool {
    let mut out = 0;
    let mut i = 0;
    let mut changed = false;
    while i < seq.len() {
        if i + 1 < seq.len() && seq[i] == left && seq[i + 1] == right {
            seq[out] = merged;
            i += 2;
            changed = true;
        } else {
            seq[out] = seq[i];
            i += 1;
        }
        out += 1;
    }
    seq.truncate(out);
    changed
}

impl BpeVocab {
    /// Specials and single bytes only.
    pub fn base() -> Self {
        let mut tokens = vec![Vec::new(); N_SPECIAL as usize];
        let mut token_to_id = HashMap::new();
        for b in 0..=255u8 {
            token_to_id.insert(vec![b], tokens.len() as u32);
            tokens.push(vec![b]);
        }
        Self {
            tokens,
            token_to_id,
            merges: Vec::new(),
            merge_result: Vec::new(),
            ranks: HashMap::new(),
        }
    }

    /// Number of distinct token ids.
    pub fn len(&self) -> usize {
        self.tokens.len()
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    pub fn merges(&self) -> &[(u32, u32)] {
        &self.merges
    }

    pub fn byte_id(b: u8) -> u32 {
        N_SPECIAL + u32::from(b)
    }

    /// Byte string of a non-special id.
    pub fn token_bytes(&self, id: u32) -> Option<&[u8]> {
        self.tokens.get(id as usize).filter(|_| !is_special(id)).map(Vec::as_slice)
    }

    pub fn id_of(&self, bytes: &[u8]) -> Option<u32> {
        self.token_to_id.get(bytes).copied()
    }

    /// Appends a merge and returns the id of its result.
    fn push_merge(&mut self, left: u32, right: u32) -> u32 {
        let mut bytes = self.tokens[left as usize].clone();
        bytes.extend_from_slice(&self.tokens[right as usize]);
        let id = match self.token_to_id.get(&bytes) {
            Some(&id) => id,
            None => {
                let id = self.tokens.len() as u32;
                self.token_to_id.insert(bytes.clone(), id);
                self.tokens.push(bytes);
                id
            }
        };
        let rank = self.merges.len() as u32;
        self.merges.push((left, right));
        self.merge_result.push(id);
        self.ranks.entry((left, right)).or_default().push(rank);
        id
    }

    fn pair_key(&self, (l, r): (u32, u32)) -> (&[u8], &[u8]) {
        (&self.tokens[l as usize], &self.tokens[r as usize])
    }

    /// Token ids of `text`, optionally wrapped in BOS/EOS.
    pub fn encode(&self, text: &str, add_bos_eos: bool) -> TokenSequence {
        let mut ids: Vec<u32> = text.bytes().map(Self::byte_id).collect();
        let mut last: Option<u32> = None;
        loop {
            // The next merge to replay is the lowest rank after the last one
            // applied among the pairs currently adjacent.
            let mut next: Option<u32> = None;
            for w in ids.windows(2) {
                if let Some(ranks) = self.ranks.get(&(w[0], w[1])) {
                    let k = ranks.partition_point(|&r| last.is_some_and(|l| r <= l));
                    if let Some(&r) = ranks.get(k) {
                        next = Some(next.map_or(r, |n| n.min(r)));
                    }
                }
            }
            let Some(rank) = next else { break };
            let (l, r) = self.merges[rank as usize];
            merge_in_place(&mut ids, l, r, self.merge_result[rank as usize]);
            last = Some(rank);
        }
        if add_bos_eos {
            ids.insert(0, BOS);
            ids.push(EOS);
        }
        TokenSequence::new(ids)
    }

    /// Concatenated bytes of the non-special tokens.
    pub fn decode_bytes(&self, ids: &[u32]) -> Result<Vec<u8>, TokenizerError> {
        let mut out = Vec::new();
        for &id in ids {
            let t = self.tokens.get(id as usize).ok_or(TokenizerError::IdOutOfRange {
                id,
                len: self.tokens.len(),
            })?;
            out.extend_from_slice(t);
        }
        Ok(out)
    }

    /// Text of the non-special tokens. Byte sequences that are not UTF-8
    /// (possible only for generated ids) decode with replacement characters.
    pub fn decode(&self, ids: &[u32]) -> Result<String, TokenizerError> {
        let bytes = self.decode_bytes(ids)?;
        Ok(match String::from_utf8(bytes) {
            Ok(s) => s,
            Err(e) => String::from_utf8_lossy(e.as_bytes()).into_owned(),
        })
    }

    /// Versioned text form: magic line, special table, then one merge per
    /// line as two hex-encoded byte strings.
    pub fn to_file_string(&self) -> String {
        let mut out = String::new();
        out.push_str(VOCAB_MAGIC);
        out.push('\n');
        let _ = writeln!(out, "specials {}", N_SPECIAL);
        for (id, name) in SPECIAL_NAMES.iter().enumerate() {
            let _ = writeln!(out, "{id} {name}");
        }
        let _ = writeln!(out, "merges {}", self.merges.len());
        for &(l, r) in &self.merges {
            let _ = writeln!(
                out,
                "{} {}",
                hex::encode(&self.tokens[l as usize]),
                hex::encode(&self.tokens[r as usize])
            );
        }
        out
    }

    pub fn from_file_str(s: &str) -> Result<Self, TokenizerError> {
        let err = |line: usize, reason: &str| TokenizerError::Format {
            line,
            reason: reason.to_string(),
        };
        let mut lines = s.split('\n').enumerate().map(|(i, l)| (i + 1, l));
        let mut next = |what: &str| lines.next().ok_or_else(|| err(0, &format!("missing {what}")));

        let (n, magic) = next("magic")?;
        if magic != VOCAB_MAGIC {
            return Err(err(n, "bad magic or version"));
        }
        let (n, specials) = next("special table")?;
        if specials != format!("specials {N_SPECIAL}") {
            return Err(err(n, "special table header"));
        }
        for (id, name) in SPECIAL_NAMES.iter().enumerate() {
            let (n, line) = next("special token")?;
            if line != format!("{id} {name}") {
                return Err(err(n, "special token entry"));
            }
        }
        let (n, header) = next("merge count")?;
        let count: usize = header
            .strip_prefix("merges ")
            .and_then(|c| c.parse().ok())
            .ok_or_else(|| err(n, "merge count"))?;
        let mut vocab = Self::base();
        for _ in 0..count {
            let (n, line) = next("merge")?;
            let (l, r) = line.split_once(' ').ok_or_else(|| err(n, "merge needs two tokens"))?;
            let id = |h: &str| {
                hex::decode(h)
                    .ok()
                    .filter(|b| !b.is_empty() && hex::encode(b) == h)
                    .and_then(|b| vocab.id_of(&b))
                    .ok_or_else(|| err(n, &format!("unknown token {h:?}")))
            };
            let (l, r) = (id(l)?, id(r)?);
            vocab.push_merge(l, r);
        }
        let (n, rest) = next("end of file")?;
        if !rest.is_empty() || lines.next().is_some() {
            return Err(err(n, "trailing content"));
        }
        Ok(vocab)
    }

    /// SHA-256 of the file form; identifies a vocabulary across artifacts.
    pub fn digest(&self) -> String {
        hex::encode(Sha256::digest(self.to_file_string().as_bytes()))
    }
}

/// Trains with the default minimum pair count of 2.
pub fn train_bpe<S: AsRef<str>>(corpus: &[S], vocab_size: usize) -> Result<BpeVocab, TokenizerError> {
    train_bpe_with(corpus, vocab_size, DEFAULT_MIN_PAIR_COUNT)
}

/// Repeatedly merges the most frequent adjacent pair (overlapping
/// occurrences counted) until the vocabulary holds `vocab_size` tokens or no
/// pair occurs `min_pair_count` times. Frequency ties go to the
/// lexicographically smallest `(left, right)` byte strings. Each merge is
/// applied left to right, without overlap, to every text.
pub fn train_bpe_with<S: AsRef<str>>(
    corpus: &[S],
    vocab_size: usize,
    min_pair_count: u64,
) -> Result<BpeVocab, TokenizerError> {
    if corpus.is_empty() {
        return Err(TokenizerError::EmptyCorpus);
    }
    if vocab_size <= MIN_VOCAB_SIZE {
        return Err(TokenizerError::VocabTooSmall {
            got: vocab_size,
            min: MIN_VOCAB_SIZE,
        });
    }
    let mut unique: BTreeMap<&str, u64> = BTreeMap::new();
    for text in corpus {
        *unique.entry(text.as_ref()).or_default() += 1;
    }
    let mut seqs: Vec<(Vec<u32>, u64)> = unique
        .into_iter()
        .map(|(t, c)| (t.bytes().map(BpeVocab::byte_id).collect(), c))
        .filter(|(s, _): &(Vec<u32>, u64)| s.len() > 1)
        .collect();

    let mut vocab = BpeVocab::base();
    let mut counts: HashMap<(u32, u32), u64> = HashMap::new();
    while vocab.len() < vocab_size {
        counts.clear();
        for (seq, weight) in &seqs {
            for w in seq.windows(2) {
                *counts.entry((w[0], w[1])).or_default() += weight;
            }
        }
        let best = counts
            .iter()
            .filter(|&(_, &c)| c >= min_pair_count.max(1))
            .max_by(|a, b| {
                a.1.cmp(b.1)
                    .then_with(|| vocab.pair_key(*b.0).cmp(&vocab.pair_key(*a.0)))
            })
            .map(|(&pair, _)| pair);
        let Some((l, r)) = best else { break };
        let merged = vocab.push_merge(l, r);
        for (seq, _) in &mut seqs {
            merge_in_place(seq, l, r, merged);
        }
        seqs.retain(|(s, _)| s.len() > 1);
    }
    Ok(vocab)
}
