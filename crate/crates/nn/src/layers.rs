//! Transformer building blocks over a [`Graph`].
//!
//! Parameter naming: `tok_emb` is the token table shared by encoder and
//! decoder; `enc.pos_emb` / `dec.pos_emb` are learned absolute positions;
//! block `l` of a stack lives under `enc.{l}` or `dec.{l}` with sub-prefixes
//! `attn`, `cross`, `ln1`, `ln_cross`, `ln2`, and `ffn`. Blocks are pre-norm.

use rand::Rng;

use crate::graph::{AttnMask, Graph, Var};
use crate::tensor::{ModelConfig, ModelParams, ParamInit, Tensor};
use crate::NnError;

pub const INIT_STD: f32 = 0.02;

/// Scaled dot-product attention: `softmax(Q·Kᵀ/√d_k + mask)·V`.
pub fn attention(g: &mut Graph<'_>, q: Var, k: Var, v: Var, mask: Option<&AttnMask>) -> Result<Var, NnError> {
    let (_, dq) = g.shape(q);
    let (mk, dk) = g.shape(k);
    let (mv, _) = g.shape(v);
    if dq != dk || mk != mv {
        return Err(NnError::Shape(format!(
            "attention Q {:?}, K {:?}, V {:?}",
            g.shape(q),
            g.shape(k),
            g.shape(v)
        )));
    }
    let scores = g.matmul_t(q, k)?;
    let scaled = g.scale(scores, 1.0 / (dk as f32).sqrt());
    let weights = g.softmax(scaled, mask)?;
    g.matmul(weights, v)
}

/// `x·W + b` for the named weight and bias parameters.
pub fn linear(g: &mut Graph<'_>, x: Var, weight: &str, bias: &str) -> Result<Var, NnError> {
    let w = g.param(weight)?;
    let b = g.param(bias)?;
    let y = g.matmul(x, w)?;
    g.add_row(y, b)
}

pub fn multi_head_attention(
    g: &mut Graph<'_>,
    prefix: &str,
    n_heads: usize,
    x_q: Var,
    x_kv: Var,
    mask: Option<&AttnMask>,
) -> Result<Var, NnError> {
    let d = g.shape(x_q).1;
    if n_heads == 0 || d % n_heads != 0 {
        return Err(NnError::Config(format!(
            "d_model {d} is not divisible by {n_heads} heads"
        )));
    }
    if g.shape(x_kv).1 != d {
        return Err(NnError::Shape(format!(
            "query width {d} vs key/value width {}",
            g.shape(x_kv).1
        )));
    }
    let q = linear(g, x_q, &format!("{prefix}.Wq"), &format!("{prefix}.bq"))?;
    let k = linear(g, x_kv, &format!("{prefix}.Wk"), &format!("{prefix}.bk"))?;
    let v = linear(g, x_kv, &format!("{prefix}.Wv"), &format!("{prefix}.bv"))?;
    let dh = d / n_heads;
    let heads = if n_heads == 1 {
        vec![attention(g, q, k, v, mask)?]
    } else {
        let mut heads = Vec::with_capacity(n_heads);
        for h in 0..n_heads {
            let qh = g.slice_cols(q, h * dh, dh)?;
            let kh = g.slice_cols(k, h * dh, dh)?;
            let vh = g.slice_cols(v, h * dh, dh)?;
            heads.push(attention(g, qh, kh, vh, mask)?);
        }
        heads
    };
    let merged = if heads.len() == 1 { heads[0] } else { g.concat_cols(&heads)? };
    linear(g, merged, &format!("{prefix}.Wo"), &format!("{prefix}.bo"))
}

/// `h₀ = T·W_e + W_p`, computed as a row lookup.
pub fn embed(g: &mut Graph<'_>, ids: &[usize], w_e: Var, w_p: Var) -> Result<Var, NnError> {
    let max_pos = g.shape(w_p).0;
    if ids.len() > max_pos {
        return Err(NnError::SequenceTooLong { len: ids.len(), max: max_pos });
    }
    let tok = g.gather(w_e, ids)?;
    let positions: Vec<usize> = (0..ids.len()).collect();
    let pos = g.gather(w_p, &positions)?;
    g.add(tok, pos)
}

pub fn layer_norm(g: &mut Graph<'_>, x: Var, prefix: &str) -> Result<Var, NnError> {
    let gamma = g.param(&format!("{prefix}.g"))?;
    let beta = g.param(&format!("{prefix}.b"))?;
    g.layer_norm(x, gamma, beta)
}

/// Cross-attention source for decoder blocks.
#[derive(Debug, Clone, Copy)]
pub struct CrossContext<'m> {
    pub context: Var,
    pub mask: Option<&'m AttnMask>,
}

/// Pre-norm residual block:
/// `h + MHA(LN(h))`, then `+ cross-MHA(LN(·), ctx)` when given, then `+ FFN(LN(·))`.
pub fn transformer_block(
    g: &mut Graph<'_>,
    prefix: &str,
    n_heads: usize,
    h_prev: Var,
    self_mask: Option<&AttnMask>,
    cross: Option<CrossContext<'_>>,
) -> Result<Var, NnError> {
    let a = layer_norm(g, h_prev, &format!("{prefix}.ln1"))?;
    let att = multi_head_attention(g, &format!("{prefix}.attn"), n_heads, a, a, self_mask)?;
    let att = g.dropout(att);
    let mut h = g.add(h_prev, att)?;

    if let Some(cross) = cross {
        let c = layer_norm(g, h, &format!("{prefix}.ln_cross"))?;
        let ca = multi_head_attention(g, &format!("{prefix}.cross"), n_heads, c, cross.context, cross.mask)?;
        let ca = g.dropout(ca);
        h = g.add(h, ca)?;
    }

    let f = layer_norm(g, h, &format!("{prefix}.ln2"))?;
    let up = linear(g, f, &format!("{prefix}.ffn.W1"), &format!("{prefix}.ffn.b1"))?;
    let act = g.gelu(up);
    let down = linear(g, act, &format!("{prefix}.ffn.W2"), &format!("{prefix}.ffn.b2"))?;
    let down = g.dropout(down);
    g.add(h, down)
}

fn config<'p>(g: &Graph<'p>) -> Result<&'p ModelConfig, NnError> {
    g.params()
        .map(ModelParams::config)
        .ok_or_else(|| NnError::Config("graph has no parameter store".into()))
}

/// Embedding followed by `n_enc_layers` bidirectional blocks. Returns the raw
/// residual stream; callers apply `enc.ln_f` via [`final_norm`].
pub fn encoder_forward(g: &mut Graph<'_>, ids: &[usize]) -> Result<Var, NnError> {
    let cfg = config(g)?;
    let (n_layers, n_heads) = (cfg.n_enc_layers, cfg.n_heads);
    let w_e = g.param("tok_emb")?;
    let w_p = g.param("enc.pos_emb")?;
    let mut h = embed(g, ids, w_e, w_p)?;
    h = g.dropout(h);
    for l in 0..n_layers {
        h = transformer_block(g, &format!("enc.{l}"), n_heads, h, None, None)?;
    }
    Ok(h)
}

/// Embedding followed by `n_dec_layers` causal blocks with cross-attention
/// over `enc_out`.
pub fn decoder_forward(g: &mut Graph<'_>, ids: &[usize], enc_out: Var) -> Result<Var, NnError> {
    let cfg = config(g)?;
    let (n_layers, n_heads) = (cfg.n_dec_layers, cfg.n_heads);
    let w_e = g.param("tok_emb")?;
    let w_p = g.param("dec.pos_emb")?;
    let mut h = embed(g, ids, w_e, w_p)?;
    h = g.dropout(h);
    let causal = AttnMask::Causal;
    for l in 0..n_layers {
        h = transformer_block(
            g,
            &format!("dec.{l}"),
            n_heads,
            h,
            Some(&causal),
            Some(CrossContext {
                context: enc_out,
                mask: None,
            }),
        )?;
    }
    Ok(h)
}

/// Final layer norm of a stack (`enc.ln_f` / `dec.ln_f`).
pub fn final_norm(g: &mut Graph<'_>, h: Var, stack: &str) -> Result<Var, NnError> {
    layer_norm(g, h, &format!("{stack}.ln_f"))
}

pub fn init_layer_norm(params: &mut ModelParams, prefix: &str) -> Result<(), NnError> {
    let d = params.config().d_model;
    params.insert(format!("{prefix}.g"), Tensor::full(vec![d], 1.0))?;
    params.insert(format!("{prefix}.b"), Tensor::zeros(vec![d]))?;
    Ok(())
}

pub fn init_linear<R: Rng>(
    params: &mut ModelParams,
    rng: &mut R,
    weight: &str,
    bias: &str,
    fan_in: usize,
    fan_out: usize,
) -> Result<(), NnError> {
    params.create(weight, vec![fan_in, fan_out], ParamInit::Normal { std: INIT_STD }, rng)?;
    params.create(bias, vec![fan_out], ParamInit::Zeros, rng)?;
    Ok(())
}

pub fn init_attention<R: Rng>(params: &mut ModelParams, rng: &mut R, prefix: &str) -> Result<(), NnError> {
    let d = params.config().d_model;
    for p in ["q", "k", "v", "o"] {
        init_linear(params, rng, &format!("{prefix}.W{p}"), &format!("{prefix}.b{p}"), d, d)?;
    }
    Ok(())
}

pub fn init_block<R: Rng>(params: &mut ModelParams, rng: &mut R, prefix: &str, cross: bool) -> Result<(), NnError> {
    let (d, ff) = (params.config().d_model, params.config().d_ff);
    init_layer_norm(params, &format!("{prefix}.ln1"))?;
    init_attention(params, rng, &format!("{prefix}.attn"))?;
    if cross {
        init_layer_norm(params, &format!("{prefix}.ln_cross"))?;
        init_attention(params, rng, &format!("{prefix}.cross"))?;
    }
    init_layer_norm(params, &format!("{prefix}.ln2"))?;
    init_linear(params, rng, &format!("{prefix}.ffn.W1"), &format!("{prefix}.ffn.b1"), d, ff)?;
    init_linear(params, rng, &format!("{prefix}.ffn.W2"), &format!("{prefix}.ffn.b2"), ff, d)?;
    Ok(())
}

pub fn init_token_embedding<R: Rng>(params: &mut ModelParams, rng: &mut R) -> Result<(), NnError> {
    let (v, d) = (params.config().vocab_size, params.config().d_model);
    params.create("tok_emb", vec![v, d], ParamInit::Normal { std: INIT_STD }, rng)?;
    Ok(())
}

pub fn init_encoder<R: Rng>(params: &mut ModelParams, rng: &mut R) -> Result<(), NnError> {
    let cfg = params.config().clone();
    params.create(
        "enc.pos_emb",
        vec![cfg.max_seq_len, cfg.d_model],
        ParamInit::Normal { std: INIT_STD },
        rng,
    )?;
    for l in 0..cfg.n_enc_layers {
        init_block(params, rng, &format!("enc.{l}"), false)?;
    }
    init_layer_norm(params, "enc.ln_f")
}

pub fn init_decoder<R: Rng>(params: &mut ModelParams, rng: &mut R) -> Result<(), NnError> {
    let cfg = params.config().clone();
    params.create(
        "dec.pos_emb",
        vec![cfg.max_seq_len, cfg.d_model],
        ParamInit::Normal { std: INIT_STD },
        rng,
    )?;
    for l in 0..cfg.n_dec_layers {
        init_block(params, rng, &format!("dec.{l}"), true)?;
    }
    init_layer_norm(params, "dec.ln_f")
}
