//! Output heads and the three training objectives.

use crate::graph::{Graph, Var};
use crate::NnError;

/// `h · W_v`: next-token logits for every row of `h`.
pub fn lm_logits(g: &mut Graph<'_>, h: Var, w_v: Var) -> Result<Var, NnError> {
    g.matmul(h, w_v)
}

/// Mean next-token negative log-likelihood, `−(1/n)·Σ log softmax(logitsᵢ)[tᵢ]`.
pub fn autoregressive_nll(g: &mut Graph<'_>, logits: Var, targets: &[usize]) -> Result<Var, NnError> {
    g.cross_entropy(logits, targets, None)
}

/// `−w·log softmax(logits)[label]` for a single `[1, n_classes]` row.
pub fn classification_loss(g: &mut Graph<'_>, logits: Var, label: usize, weight: f32) -> Result<Var, NnError> {
    if g.shape(logits).0 != 1 {
        return Err(NnError::Shape(format!(
            "classification logits must be one row, got {:?}",
            g.shape(logits)
        )));
    }
    g.cross_entropy(logits, &[label], Some(&[weight]))
}

/// Masked-token loss. `empty` is set when there were no masked positions, in
/// which case `loss` is a constant zero.
#[derive(Debug, Clone, Copy)]
pub struct MlmLoss {
    pub loss: Var,
    pub empty: bool,
}

/// Mean NLL of the original tokens at `positions` only; other rows of `hidden`
/// never reach the loss.
pub fn mlm_loss(
    g: &mut Graph<'_>,
    hidden: Var,
    w_v: Var,
    positions: &[usize],
    targets: &[usize],
) -> Result<MlmLoss, NnError> {
    if positions.len() != targets.len() {
        return Err(NnError::Shape(format!(
            "{} masked positions but {} targets",
            positions.len(),
            targets.len()
        )));
    }
    if positions.is_empty() {
        let zero = g.input(vec![0.0], 1, 1, false)?;
        return Ok(MlmLoss { loss: zero, empty: true });
    }
    let rows = g.gather(hidden, positions)?;
    let logits = lm_logits(g, rows, w_v)?;
    let loss = g.cross_entropy(logits, targets, None)?;
    Ok(MlmLoss { loss, empty: false })
}
