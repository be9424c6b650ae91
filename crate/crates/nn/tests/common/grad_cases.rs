//! Per-operation gradient cases. Each draws one random instance from `rng`
//! and returns the finite-difference statistics for it.

use pktseer_nn::{layers, loss, AttnMask, CrossContext, Graph, ModelConfig, ModelParams};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::*;

pub type Case = fn(&mut ChaCha8Rng, u64) -> FdStats;

/// Every case with the operation names it covers.
pub const CASES: &[(&str, Case)] = &[
    ("matmul", matmul_and_transposed_matmul),
    ("add/add_row/mul/scale", elementwise_ops),
    ("gather/slice/concat", gather_slice_concat),
    ("softmax", softmax_with_and_without_masks),
    ("layer_norm/gelu", layer_norm_gelu_sum),
    ("dropout", dropout_with_fixed_mask),
    ("cross_entropy", weighted_cross_entropy),
    ("attention", scaled_dot_product_attention),
    ("multi_head_attention", multi_head_attention_projections_and_inputs),
    ("embed", embedding_lookup),
    ("transformer_block", transformer_block_full),
    ("lm_logits/nll/classification/mlm", heads_and_losses),
];

fn empty_params() -> ModelParams {
    ModelParams::new(ModelConfig::default())
}

pub fn matmul_and_transposed_matmul(rng: &mut ChaCha8Rng, seed: u64) -> FdStats {
    let (n, k, m) = (rng.random_range(1..5), rng.random_range(1..5), rng.random_range(1..5));
    let a = Mat::random(rng, n, k);
    let b = Mat::random(rng, k, m);
    let bt = Mat::random(rng, m, k);
    let mut s = check_leaves(seed, &Graph::detached, &[a.clone(), b], &|g, v| {
        let y = g.matmul(v[0], v[1])?;
        Ok(y)
    });
    s.merge(check_leaves(seed, &Graph::detached, &[a, bt], &|g, v| {
        let y = g.matmul_t(v[0], v[1])?;
        Ok(y)
    }));
    s
}

pub fn elementwise_ops(rng: &mut ChaCha8Rng, seed: u64) -> FdStats {
    let (r, c) = (rng.random_range(1..5), rng.random_range(1..5));
    let inputs = [Mat::random(rng, r, c), Mat::random(rng, r, c), Mat::random(rng, 1, c)];
    check_leaves(seed, &Graph::detached, &inputs, &|g, v| {
        let s = g.add(v[0], v[1])?;
        let p = g.mul(s, v[1])?;
        let q = g.add_row(p, v[2])?;
        let y = g.scale(q, -1.7);
        Ok(y)
    })
}

pub fn gather_slice_concat(rng: &mut ChaCha8Rng, seed: u64) -> FdStats {
    let (rows, c) = (rng.random_range(2..6), rng.random_range(2..6));
    let n_ids = rng.random_range(1..8);
    let ids = random_ids(rng, n_ids, rows);
    let start = rng.random_range(0..c - 1);
    let width = rng.random_range(1..c - start);
    let inputs = [Mat::random(rng, rows, c), Mat::random(rng, ids.len(), 3)];
    check_leaves(seed, &Graph::detached, &inputs, &|g, v| {
        let picked = g.gather(v[0], &ids)?;
        let part = g.slice_cols(picked, start, width)?;
        let y = g.concat_cols(&[part, v[1], part])?;
        Ok(y)
    })
}

pub fn softmax_with_and_without_masks(rng: &mut ChaCha8Rng, seed: u64) -> FdStats {
    let n = rng.random_range(1..6);
    let blocked: Vec<bool> = (0..n * n).map(|_| rng.random_bool(0.3)).collect();
    let dense = AttnMask::dense(n, n, blocked).unwrap();
    let x = Mat::random(rng, n, n);
    let mut s = FdStats::default();
    for mask in [None, Some(AttnMask::Causal), Some(dense.clone())] {
        s.merge(check_leaves(seed, &Graph::detached, std::slice::from_ref(&x), &|g, v| {
            let y = g.softmax(v[0], mask.as_ref())?;
            Ok(y)
        }));
    }
    s
}

pub fn layer_norm_gelu_sum(rng: &mut ChaCha8Rng, seed: u64) -> FdStats {
    // Two-column rows normalize to ±1, a step function at probe scale.
    let (r, c) = (rng.random_range(1..5), rng.random_range(3..8));
    let inputs = [Mat::random(rng, r, c), Mat::random(rng, 1, c), Mat::random(rng, 1, c)];
    check_leaves(seed, &Graph::detached, &inputs, &|g, v| {
        let y = g.layer_norm(v[0], v[1], v[2])?;
        let y = g.gelu(y);
        Ok(y)
    })
}

pub fn dropout_with_fixed_mask(rng: &mut ChaCha8Rng, seed: u64) -> FdStats {
    let params = empty_params();
    let x = Mat::random(rng, 3, 4);
    let make = || Graph::training(&params, 0.4, seed);
    check_leaves(seed, &make, &[x], &|g, v| {
        let y = g.dropout(v[0]);
        Ok(y)
    })
}

pub fn weighted_cross_entropy(rng: &mut ChaCha8Rng, seed: u64) -> FdStats {
    let (r, c) = (rng.random_range(1..6), rng.random_range(2..7));
    let targets = random_ids(rng, r, c);
    let weights: Vec<f32> = (0..r).map(|_| rng.random_range(0.2..3.0)).collect();
    check_leaves(seed, &Graph::detached, &[Mat::random(rng, r, c)], &|g, v| {
        g.cross_entropy(v[0], &targets, Some(&weights))
    })
}

pub fn scaled_dot_product_attention(rng: &mut ChaCha8Rng, seed: u64) -> FdStats {
    let (n, m, dk, dv) = (
        rng.random_range(1..5),
        rng.random_range(1..5),
        rng.random_range(1..5),
        rng.random_range(1..5),
    );
    let causal = rng.random_bool(0.5) && n == m;
    let inputs = [Mat::random(rng, n, dk), Mat::random(rng, m, dk), Mat::random(rng, m, dv)];
    check_leaves(seed, &Graph::detached, &inputs, &|g, v| {
        let mask = causal.then_some(AttnMask::Causal);
        let y = layers::attention(g, v[0], v[1], v[2], mask.as_ref())?;
        Ok(y)
    })
}

pub fn multi_head_attention_projections_and_inputs(rng: &mut ChaCha8Rng, seed: u64) -> FdStats {
    let heads = [1, 2][rng.random_range(0..2)];
    let d = 4;
    let params = attention_params(d, heads, "mha", rng);
    let (n, m) = (rng.random_range(1..5), rng.random_range(1..5));
    let xq = Mat::random(rng, n, d);
    let xkv = Mat::random(rng, m, d);
    let (xq2, xkv2) = (xq.clone(), xkv.clone());
    let mut s = check_params(seed, &params, &|g| {
        let q = g.input(xq2.data.clone(), n, d, false)?;
        let kv = g.input(xkv2.data.clone(), m, d, false)?;
        let y = layers::multi_head_attention(g, "mha", heads, q, kv, None)?;
        Ok(y)
    });
    s.merge(check_leaves(seed, &|| Graph::new(&params), &[xq, xkv], &|g, v| {
        let y = layers::multi_head_attention(g, "mha", heads, v[0], v[1], None)?;
        Ok(y)
    }));
    s
}

pub fn embedding_lookup(rng: &mut ChaCha8Rng, seed: u64) -> FdStats {
    let (vocab, max_pos, d) = (rng.random_range(2..7), 6, rng.random_range(1..5));
    let n_ids = rng.random_range(1..=max_pos);
    let ids = random_ids(rng, n_ids, vocab);
    let inputs = [Mat::random(rng, vocab, d), Mat::random(rng, max_pos, d)];
    check_leaves(seed, &Graph::detached, &inputs, &|g, v| {
        let y = layers::embed(g, &ids, v[0], v[1])?;
        Ok(y)
    })
}

fn block_params(rng: &mut ChaCha8Rng, cross: bool) -> ModelParams {
    let cfg = ModelConfig {
        vocab_size: 8,
        d_model: 8,
        n_heads: 2,
        n_enc_layers: 0,
        n_dec_layers: 0,
        d_ff: 12,
        max_seq_len: 8,
        dropout_prob: 0.0,
    };
    let mut p = ModelParams::new(cfg);
    layers::init_block(&mut p, rng, "blk", cross).unwrap();
    redraw(&mut p, rng);
    p
}

pub fn transformer_block_full(rng: &mut ChaCha8Rng, seed: u64) -> FdStats {
    let cross = rng.random_bool(0.5);
    let params = block_params(rng, cross);
    let n = rng.random_range(1..5);
    let m = rng.random_range(1..5);
    let h = Mat::random(rng, n, 8);
    let ctx = Mat::random(rng, m, 8);
    let (h2, ctx2) = (h.clone(), ctx.clone());
    let forward = move |g: &mut Graph<'_>, h: pktseer_nn::Var, ctx: pktseer_nn::Var| {
        let cross = cross.then_some(CrossContext { context: ctx, mask: None });
        let y = layers::transformer_block(g, "blk", 2, h, Some(&AttnMask::Causal), cross)?;
        Ok(y)
    };
    let mut s = check_params(seed, &params, &|g| {
        let h = g.input(h2.data.clone(), n, 8, false)?;
        let ctx = g.input(ctx2.data.clone(), m, 8, false)?;
        forward(g, h, ctx)
    });
    s.merge(check_leaves(seed, &|| Graph::new(&params), &[h, ctx], &|g, v| forward(g, v[0], v[1])));
    s
}

pub fn heads_and_losses(rng: &mut ChaCha8Rng, seed: u64) -> FdStats {
    let (n, d, vocab) = (rng.random_range(2..6), rng.random_range(2..5), rng.random_range(2..8));
    let targets = random_ids(rng, n, vocab);
    let positions: Vec<usize> = (0..n).filter(|_| rng.random_bool(0.5)).chain([n - 1]).collect();
    let mlm_targets = random_ids(rng, positions.len(), vocab);
    let label = rng.random_range(0..2);
    let weight = rng.random_range(0.5..4.0);
    let inputs = [Mat::random(rng, n, d), Mat::random(rng, d, vocab), Mat::random(rng, 1, 2)];
    check_leaves(seed, &Graph::detached, &inputs, &|g, v| {
        let logits = loss::lm_logits(g, v[0], v[1])?;
        let nll = loss::autoregressive_nll(g, logits, &targets)?;
        let mlm = loss::mlm_loss(g, v[0], v[1], &positions, &mlm_targets)?.loss;
        let cls = loss::classification_loss(g, v[2], label, weight)?;
        let a = g.add(nll, mlm)?;
        g.add(a, cls)
    })
}

/// Every parameter of a 2+2-layer toy seq2seq model on random sequences.
pub fn whole_toy_model(draw: u64) -> FdStats {
    let params = toy_model(toy_config(2, 2), draw);
    let mut rng = ChaCha8Rng::seed_from_u64(draw);
    let (ns, nt) = (rng.random_range(2..=8), rng.random_range(2..=8));
    let src = random_ids(&mut rng, ns, 11);
    let tgt = random_ids(&mut rng, nt, 11);
    let (tgt_in, tgt_out) = (&tgt[..tgt.len() - 1], &tgt[1..]);
    check_params(draw, &params, &|g| seq2seq_loss(g, &src, tgt_in, tgt_out))
}
