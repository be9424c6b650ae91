//! Input corruptions for the masked-token and denoising objectives, and the
//! packed two-segment input of the pair task.

use rand::seq::index::sample;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Poisson};

use super::{is_special, BpeVocab, TokenSequence, TokenizerError, BOS, CLS, EOS, MASK, N_SPECIAL, PAD, SEP};

/// Shortest packed pair input: CLS, SEP, SEP and room for content.
pub const MIN_PAIR_LEN: usize = 8;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MlmConfig {
    /// Probability that a non-special position is selected.
    pub mask_prob: f64,
    /// Share of selected positions replaced by MASK.
    pub mask_token_frac: f64,
    /// Share replaced by a uniformly drawn non-special token; the rest stay.
    pub random_token_frac: f64,
}

impl Default for MlmConfig {
    fn default() -> Self {
        Self {
            mask_prob: 0.15,
            mask_token_frac: 0.8,
            random_token_frac: 0.1,
        }
    }
}

/// Corrupted input plus the original ids at the selected positions.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct MaskedBatch {
    pub corrupted_ids: TokenSequence,
    pub target_ids: Vec<u32>,
    pub masked_positions: Vec<usize>,
}

impl MaskedBatch {
    pub fn is_empty(&self) -> bool {
        self.masked_positions.is_empty()
    }
}

pub fn make_mlm_corruption(
    seq: &TokenSequence,
    cfg: &MlmConfig,
    vocab: &BpeVocab,
    seed: u64,
) -> Result<MaskedBatch, TokenizerError> {
    if !(cfg.mask_prob > 0.0 && cfg.mask_prob <= 1.0) {
        return Err(TokenizerError::InvalidArgument(format!(
            "mask_prob must lie in (0, 1], got {}",
            cfg.mask_prob
        )));
    }
    if !(cfg.mask_token_frac >= 0.0 && cfg.random_token_frac >= 0.0)
        || cfg.mask_token_frac + cfg.random_token_frac > 1.0
    {
        return Err(TokenizerError::InvalidArgument("replacement shares must sum to at most 1".into()));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut ids = seq.ids.clone();
    let mut target_ids = Vec::new();
    let mut masked_positions = Vec::new();
    for (pos, id) in ids.iter_mut().enumerate() {
        if is_special(*id) || rng.random::<f64>() >= cfg.mask_prob {
            continue;
        }
        target_ids.push(*id);
        masked_positions.push(pos);
        let u = rng.random::<f64>();
        if u < cfg.mask_token_frac {
            *id = MASK;
        } else if u < cfg.mask_token_frac + cfg.random_token_frac {
            *id = rng.random_range(N_SPECIAL..vocab.len() as u32);
        }
    }
    Ok(MaskedBatch {
        corrupted_ids: TokenSequence::new(ids),
        target_ids,
        masked_positions,
    })
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DenoiseConfig {
    /// Mean span length.
    pub span_lambda: f64,
    /// Fraction of body tokens covered by spans.
    pub mask_ratio: f64,
}

impl Default for DenoiseConfig {
    fn default() -> Self {
        Self {
            span_lambda: 3.0,
            mask_ratio: 0.3,
        }
    }
}

/// Text infilling. `round(mask_ratio · n)` body tokens (at least one) are
/// covered by spans whose lengths are Poisson(`span_lambda`) draws, floored at
/// one and cut to fit; each span becomes a single MASK. Spans go into
/// distinct gaps between the kept tokens, so two spans never touch; when
/// there are more spans than gaps the surplus is folded into the last span.
/// A leading BOS and trailing EOS are kept in place.
pub fn make_denoising_corruption(
    seq: &TokenSequence,
    cfg: &DenoiseConfig,
    seed: u64,
) -> Result<(TokenSequence, TokenSequence), TokenizerError> {
    if seq.is_empty() {
        return Err(TokenizerError::EmptySequence);
    }
    if !(cfg.mask_ratio > 0.0 && cfg.mask_ratio <= 1.0) {
        return Err(TokenizerError::InvalidArgument(format!(
            "mask_ratio must lie in (0, 1], got {}",
            cfg.mask_ratio
        )));
    }
    let poisson = Poisson::new(cfg.span_lambda)
        .map_err(|e| TokenizerError::InvalidArgument(format!("span_lambda {}: {e}", cfg.span_lambda)))?;

    let ids = &seq.ids;
    let head = usize::from(ids.first() == Some(&BOS));
    let tail = usize::from(ids.len() > head && ids.last() == Some(&EOS));
    let body = &ids[head..ids.len() - tail];
    let n = body.len();
    if n == 0 {
        return Ok((seq.clone(), seq.clone()));
    }

    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let covered = ((cfg.mask_ratio * n as f64).round() as usize).clamp(1, n);
    let mut spans = Vec::new();
    let mut left = covered;
    while left > 0 {
        let draw: f64 = poisson.sample(&mut rng);
        let len = (draw as usize).clamp(1, left);
        spans.push(len);
        left -= len;
    }
    let kept = n - covered;
    let gaps = kept + 1;
    if spans.len() > gaps {
        let surplus: usize = spans.drain(gaps..).sum();
        spans[gaps - 1] += surplus;
    }
    let mut chosen = sample(&mut rng, gaps, spans.len()).into_vec();
    chosen.sort_unstable();
    let mut span_at = vec![0usize; gaps];
    for (g, len) in chosen.into_iter().zip(spans) {
        span_at[g] = len;
    }

    let mut out = Vec::with_capacity(ids.len());
    out.extend_from_slice(&ids[..head]);
    let mut p = 0;
    for (g, &len) in span_at.iter().enumerate() {
        if len > 0 {
            out.push(MASK);
            p += len;
        }
        if g < kept {
            out.push(body[p]);
            p += 1;
        }
    }
    debug_assert_eq!(p, n);
    out.extend_from_slice(&ids[ids.len() - tail..]);
    Ok((TokenSequence::new(out), seq.clone()))
}

/// `[CLS] a [SEP] b [SEP]` padded to `max_len`. While the segments do not
/// fit, the longer one loses its last token (the first on a tie).
pub fn make_pair_input(
    first_text: &str,
    second_text: &str,
    vocab: &BpeVocab,
    max_len: usize,
) -> Result<TokenSequence, TokenizerError> {
    if max_len < MIN_PAIR_LEN {
        return Err(TokenizerError::MaxLenTooSmall {
            got: max_len,
            min: MIN_PAIR_LEN,
        });
    }
    let mut a = vocab.encode(first_text, false).ids;
    let mut b = vocab.encode(second_text, false).ids;
    let budget = max_len - 3;
    while a.len() + b.len() > budget {
        if a.len() >= b.len() {
            a.pop();
        } else {
            b.pop();
        }
    }
    let mut ids = Vec::with_capacity(max_len);
    ids.push(CLS);
    ids.extend(a);
    ids.push(SEP);
    ids.extend(b);
    ids.push(SEP);
    ids.resize(max_len, PAD);
    Ok(TokenSequence::new(ids))
}
