#![allow(dead_code)]

pub mod grad_cases;

use pktseer_nn::{layers, Graph, ModelConfig, ModelParams, NnError, ParamInit, Var};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

/// Finite-difference step along a unit direction.
pub const FD_STEP: f64 = 0.05;
/// Random probe directions per tensor, besides the gradient direction.
pub const FD_RANDOM_DIRECTIONS: usize = 3;
/// Denominator floor for the relative error. In `f32` a loss is only known to
/// about 1e-7 of its magnitude, so derivatives below this scale are compared
/// absolutely (to `FD_TOL * FD_FLOOR`).
pub const FD_FLOOR: f64 = 1e-2;
pub const FD_TOL: f64 = 1e-3;

pub fn toy_config(n_enc: usize, n_dec: usize) -> ModelConfig {
    ModelConfig {
        vocab_size: 11,
        d_model: 8,
        n_heads: 2,
        n_enc_layers: n_enc,
        n_dec_layers: n_dec,
        d_ff: 16,
        max_seq_len: 8,
        dropout_prob: 0.0,
    }
}

/// Encoder-decoder with an LM head `lm.Wv`, redrawn by [`redraw`].
pub fn toy_model(cfg: ModelConfig, seed: u64) -> ModelParams {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut p = ModelParams::new(cfg.clone());
    layers::init_token_embedding(&mut p, &mut rng).unwrap();
    layers::init_encoder(&mut p, &mut rng).unwrap();
    layers::init_decoder(&mut p, &mut rng).unwrap();
    p.create("lm.Wv", vec![cfg.d_model, cfg.vocab_size], ParamInit::Zeros, &mut rng)
        .unwrap();
    redraw(&mut p, &mut rng);
    p
}

/// Redraws every tensor so activations stay O(1) and no gradient is
/// degenerate: embeddings `N(0, 0.5²)`, matrices `N(0, 0.09/fan_in)`, biases
/// `N(0, 0.1²)`, gains `N(1, 0.1²)`. Finite differences then see smooth
/// variation at the probe step instead of layer-norm saturation.
pub fn redraw(p: &mut ModelParams, rng: &mut ChaCha8Rng) {
    for id in 0..p.len() {
        let name = p.name(id).to_string();
        let t = p.tensor_mut(id);
        let (mean, std) = if name.ends_with("emb") {
            (0.0, 0.5)
        } else if name.ends_with(".g") {
            (1.0, 0.1)
        } else if t.shape().len() == 2 {
            (0.0, 0.3 / (t.shape()[0] as f32).sqrt())
        } else {
            (0.0, 0.1)
        };
        for x in t.data_mut() {
            let r: f32 = StandardNormal.sample(rng);
            *x = mean + std * r;
        }
    }
}

pub fn normal_vec(rng: &mut ChaCha8Rng, n: usize, std: f32) -> Vec<f32> {
    (0..n)
        .map(|_| {
            let r: f32 = StandardNormal.sample(rng);
            std * r
        })
        .collect()
}

pub fn random_ids(rng: &mut ChaCha8Rng, n: usize, vocab: usize) -> Vec<usize> {
    (0..n).map(|_| rng.random_range(0..vocab)).collect()
}

/// A leaf input for [`check_leaves`].
#[derive(Debug, Clone)]
pub struct Mat {
    pub data: Vec<f32>,
    pub rows: usize,
    pub cols: usize,
}

impl Mat {
    pub fn random(rng: &mut ChaCha8Rng, rows: usize, cols: usize) -> Self {
        Self::random_std(rng, rows, cols, 1.0)
    }

    pub fn random_std(rng: &mut ChaCha8Rng, rows: usize, cols: usize, std: f32) -> Self {
        Mat {
            data: normal_vec(rng, rows * cols, std),
            rows,
            cols,
        }
    }
}

/// Central-difference derivative at 0: 5-point stencils at steps `h`, `2h`
/// and `4h` combined by two rounds of Richardson extrapolation, leaving an
/// `O(h⁸)` truncation error.
pub fn derivative(f: &mut dyn FnMut(f64) -> f64) -> f64 {
    const LEVELS: usize = 3;
    let h = FD_STEP;
    // f(±h·2ᵏ), k = 0..=LEVELS
    let pts: Vec<(f64, f64)> = (0..=LEVELS)
        .map(|k| {
            let t = h * (1u64 << k) as f64;
            (f(t), f(-t))
        })
        .collect();
    let mut row: Vec<f64> = (0..LEVELS)
        .map(|k| {
            let hk = h * (1u64 << k) as f64;
            (-pts[k + 1].0 + 8.0 * pts[k].0 - 8.0 * pts[k].1 + pts[k + 1].1) / (12.0 * hk)
        })
        .collect();
    let mut factor = 16.0;
    while row.len() > 1 {
        row = row.windows(2).map(|w| (factor * w[0] - w[1]) / (factor - 1.0)).collect();
        factor *= 4.0;
    }
    row[0]
}

pub fn rel_err(a: f64, b: f64) -> f64 {
    (a - b).abs() / a.abs().max(b.abs()).max(FD_FLOOR)
}

#[derive(Debug, Default)]
pub struct FdStats {
    pub checked: usize,
    pub max_rel: f64,
    pub worst: String,
}

impl FdStats {
    fn record(&mut self, analytic: f64, numeric: f64, what: impl FnOnce() -> String) {
        let e = rel_err(analytic, numeric);
        self.checked += 1;
        if e > self.max_rel || self.worst.is_empty() {
            self.max_rel = self.max_rel.max(e);
            self.worst = format!("{} analytic {analytic:e} numeric {numeric:e}", what());
        }
    }

    pub fn merge(&mut self, other: FdStats) {
        self.checked += other.checked;
        if other.max_rel > self.max_rel || self.worst.is_empty() {
            self.max_rel = self.max_rel.max(other.max_rel);
            self.worst = other.worst;
        }
    }

    pub fn passes(&self) -> bool {
        self.checked > 0 && self.max_rel < FD_TOL
    }
}

/// Fixed random unit-norm cotangent for an `r×c` output.
fn cotangent(r: usize, c: usize, seed: u64) -> Vec<f32> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0x9e37_79b9);
    let mut cot = normal_vec(&mut rng, r * c, 1.0);
    let norm = cot.iter().map(|&x| x as f64 * x as f64).sum::<f64>().sqrt() as f32;
    cot.iter_mut().for_each(|x| *x /= norm);
    cot
}

/// Non-scalar outputs are reduced by an inner product with a fixed random
/// cotangent, so the check covers the whole Jacobian rather than its row
/// sums. The analytic side differentiates through the graph's `mul`/`sum`;
/// the numeric side forms the same inner product exactly in `f64`.
fn objective_var(g: &mut Graph<'_>, out: Var, seed: u64) -> Var {
    let (r, c) = g.shape(out);
    if r * c == 1 {
        return out;
    }
    let w = g.input(cotangent(r, c, seed), r, c, false).unwrap();
    let prod = g.mul(out, w).unwrap();
    g.sum(prod)
}

fn objective_value(g: &Graph<'_>, out: Var, seed: u64) -> f64 {
    let (r, c) = g.shape(out);
    if r * c == 1 {
        return g.scalar(out).unwrap();
    }
    g.value(out)
        .iter()
        .zip(cotangent(r, c, seed))
        .map(|(&y, w)| y as f64 * w as f64)
        .sum()
}

/// Unit probe directions for one tensor: the analytic gradient direction
/// (when non-zero) followed by `FD_RANDOM_DIRECTIONS` Gaussian directions.
fn directions(grad: &[f32], rng: &mut ChaCha8Rng) -> Vec<Vec<f64>> {
    let unit = |v: Vec<f64>| {
        let n = v.iter().map(|x| x * x).sum::<f64>().sqrt();
        (n > 0.0).then(|| v.into_iter().map(|x| x / n).collect::<Vec<f64>>())
    };
    let mut out = Vec::new();
    if let Some(u) = unit(grad.iter().map(|&x| x as f64).collect()) {
        out.push(u);
    }
    for _ in 0..FD_RANDOM_DIRECTIONS {
        let v = (0..grad.len())
            .map(|_| {
                let r: f64 = StandardNormal.sample(rng);
                r
            })
            .collect();
        out.extend(unit(v));
    }
    out
}

fn directional(grad: &[f32], u: &[f64]) -> f64 {
    grad.iter().zip(u).map(|(&g, &x)| g as f64 * x).sum()
}

fn perturbed(base: &[f32], u: &[f64], t: f64) -> Vec<f32> {
    base.iter().zip(u).map(|(&x, &d)| (x as f64 + t * d) as f32).collect()
}

type LossFn<'a> = dyn Fn(&mut Graph<'_>, &[Var]) -> Result<Var, NnError> + 'a;

/// Checks gradients with respect to leaf inputs. `make_graph` must build an
/// identical graph context on every call (same params, same dropout seed).
pub fn check_leaves<'p>(
    seed: u64,
    make_graph: &dyn Fn() -> Graph<'p>,
    inputs: &[Mat],
    loss_fn: &LossFn<'_>,
) -> FdStats {
    let eval = |inputs: &[Mat]| -> (Graph<'p>, Vec<Var>, Var) {
        let mut g = make_graph();
        let vars: Vec<Var> = inputs
            .iter()
            .map(|m| g.input(m.data.clone(), m.rows, m.cols, true).unwrap())
            .collect();
        let loss = loss_fn(&mut g, &vars).unwrap();
        (g, vars, loss)
    };
    let (mut g, vars, out) = eval(inputs);
    let loss = objective_var(&mut g, out, seed);
    let grads = g.backward(loss).unwrap();
    let analytic: Vec<Vec<f32>> = vars
        .iter()
        .zip(inputs)
        .map(|(&v, m)| grads.wrt(v).map(<[f32]>::to_vec).unwrap_or(vec![0.0; m.data.len()]))
        .collect();

    let mut rng = ChaCha8Rng::seed_from_u64(0xfd);
    let mut work = inputs.to_vec();
    let mut stats = FdStats::default();
    for i in 0..inputs.len() {
        for (k, u) in directions(&analytic[i], &mut rng).iter().enumerate() {
            let mut f = |t: f64| {
                work[i].data = perturbed(&inputs[i].data, u, t);
                let (g, _, out) = eval(&work);
                objective_value(&g, out, seed)
            };
            let numeric = derivative(&mut f);
            work[i].data.clone_from(&inputs[i].data);
            stats.record(directional(&analytic[i], u), numeric, || format!("input {i} direction {k}"));
        }
    }
    stats
}

/// Checks every parameter tensor in `params`.
pub fn check_params(
    seed: u64,
    params: &ModelParams,
    loss_fn: &dyn Fn(&mut Graph<'_>) -> Result<Var, NnError>,
) -> FdStats {
    let analytic = {
        let mut g = Graph::new(params);
        let out = loss_fn(&mut g).unwrap();
        let loss = objective_var(&mut g, out, seed);
        let grads = g.backward(loss).unwrap();
        (0..params.len())
            .map(|id| {
                grads
                    .param(id)
                    .map(<[f32]>::to_vec)
                    .unwrap_or_else(|| vec![0.0; params.tensor(id).numel()])
            })
            .collect::<Vec<_>>()
    };
    let mut rng = ChaCha8Rng::seed_from_u64(0xfd);
    let mut work = params.clone();
    let mut stats = FdStats::default();
    for id in 0..params.len() {
        let base = params.tensor(id).data().to_vec();
        for (k, u) in directions(&analytic[id], &mut rng).iter().enumerate() {
            let mut f = |t: f64| {
                work.tensor_mut(id).data_mut().copy_from_slice(&perturbed(&base, u, t));
                let mut g = Graph::new(&work);
                let out = loss_fn(&mut g).unwrap();
                objective_value(&g, out, seed)
            };
            let numeric = derivative(&mut f);
            work.tensor_mut(id).data_mut().copy_from_slice(&base);
            stats.record(directional(&analytic[id], u), numeric, || {
                format!("{} direction {k}", params.name(id))
            });
        }
    }
    stats
}

/// Sequence-to-sequence NLL through the full encoder, decoder and LM head.
pub fn seq2seq_loss(g: &mut Graph<'_>, src: &[usize], tgt_in: &[usize], tgt_out: &[usize]) -> Result<Var, NnError> {
    let enc = layers::encoder_forward(g, src)?;
    let enc = layers::final_norm(g, enc, "enc")?;
    let dec = layers::decoder_forward(g, tgt_in, enc)?;
    let dec = layers::final_norm(g, dec, "dec")?;
    let wv = g.param("lm.Wv")?;
    let logits = pktseer_nn::loss::lm_logits(g, dec, wv)?;
    pktseer_nn::loss::autoregressive_nll(g, logits, tgt_out)
}

/// Parameter store holding a single attention block's projections under `prefix`.
pub fn attention_params(d: usize, n_heads: usize, prefix: &str, rng: &mut ChaCha8Rng) -> ModelParams {
    let cfg = ModelConfig {
        vocab_size: 8,
        d_model: d,
        n_heads,
        n_enc_layers: 0,
        n_dec_layers: 0,
        d_ff: 2 * d,
        max_seq_len: 8,
        dropout_prob: 0.0,
    };
    let mut p = ModelParams::new(cfg);
    layers::init_attention(&mut p, rng, prefix).unwrap();
    redraw(&mut p, rng);
    p
}
