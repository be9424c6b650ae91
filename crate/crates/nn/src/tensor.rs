//! Parameter tensors, model configuration, and the named parameter store.

use std::collections::HashMap;

use rand::Rng;
use rand_distr::{Distribution, Normal};

use crate::graph::Gradients;
use crate::NnError;

/// Dense row-major `f32` tensor with an optional gradient accumulator.
#[derive(Debug, Clone, PartialEq)]
pub struct Tensor {
    shape: Vec<usize>,
    data: Vec<f32>,
    pub requires_grad: bool,
    pub grad: Option<Vec<f32>>,
}

impl Tensor {
    pub fn new(shape: Vec<usize>, data: Vec<f32>) -> Result<Self, NnError> {
        let numel: usize = shape.iter().product();
        if numel != data.len() {
            return Err(NnError::Shape(format!(
                "shape {shape:?} needs {numel} elements, got {}",
                data.len()
            )));
        }
        Ok(Self {
            shape,
            data,
            requires_grad: true,
            grad: None,
        })
    }

    pub fn zeros(shape: Vec<usize>) -> Self {
        let numel = shape.iter().product();
        Self {
            shape,
            data: vec![0.0; numel],
            requires_grad: true,
            grad: None,
        }
    }

    pub fn full(shape: Vec<usize>, value: f32) -> Self {
        let mut t = Self::zeros(shape);
        t.data.fill(value);
        t
    }

    pub fn shape(&self) -> &[usize] {
        &self.shape
    }

    pub fn numel(&self) -> usize {
        self.data.len()
    }

    pub fn data(&self) -> &[f32] {
        &self.data
    }

    pub fn data_mut(&mut self) -> &mut [f32] {
        &mut self.data
    }

    /// View as a matrix: rank-1 tensors are a single row.
    pub fn matrix_dims(&self) -> (usize, usize) {
        match self.shape.as_slice() {
            [] => (1, 1),
            [n] => (1, *n),
            [r, c] => (*r, *c),
            dims => {
                let c = *dims.last().unwrap();
                (self.data.len() / c.max(1), c)
            }
        }
    }
}

/// Architecture hyperparameters shared by all three task models.
#[derive(Debug, Clone, PartialEq)]
pub struct ModelConfig {
    pub vocab_size: usize,
    pub d_model: usize,
    pub n_heads: usize,
    pub n_enc_layers: usize,
    pub n_dec_layers: usize,
    pub d_ff: usize,
    pub max_seq_len: usize,
    pub dropout_prob: f32,
}

impl Default for ModelConfig {
    fn default() -> Self {
        Self {
            vocab_size: 512,
            d_model: 64,
            n_heads: 4,
            n_enc_layers: 2,
            n_dec_layers: 2,
            d_ff: 256,
            max_seq_len: 192,
            dropout_prob: 0.1,
        }
    }
}

impl ModelConfig {
    pub fn head_dim(&self) -> usize {
        self.d_model / self.n_heads
    }

    pub fn validate(&self) -> Result<(), NnError> {
        if self.n_heads == 0 || self.d_model == 0 || self.d_model % self.n_heads != 0 {
            return Err(NnError::Config(format!(
                "d_model {} must be a positive multiple of n_heads {}",
                self.d_model, self.n_heads
            )));
        }
        if self.max_seq_len < 2 {
            return Err(NnError::Config(format!(
                "max_seq_len must be at least 2, got {}",
                self.max_seq_len
            )));
        }
        if self.vocab_size == 0 || self.d_ff == 0 {
            return Err(NnError::Config("vocab_size and d_ff must be positive".into()));
        }
        if !(0.0..1.0).contains(&self.dropout_prob) {
            return Err(NnError::Config(format!(
                "dropout_prob must lie in [0, 1), got {}",
                self.dropout_prob
            )));
        }
        Ok(())
    }

    /// `key=value` lines, one per field, in a fixed order.
    pub fn to_document(&self) -> String {
        format!(
            "vocab_size={}\nd_model={}\nn_heads={}\nn_enc_layers={}\nn_dec_layers={}\nd_ff={}\nmax_seq_len={}\ndropout_prob={}\n",
            self.vocab_size,
            self.d_model,
            self.n_heads,
            self.n_enc_layers,
            self.n_dec_layers,
            self.d_ff,
            self.max_seq_len,
            self.dropout_prob
        )
    }

    /// Reads the fields written by [`ModelConfig::to_document`]; unknown keys are ignored.
    pub fn from_pairs<'a>(pairs: impl IntoIterator<Item = (&'a str, &'a str)>) -> Result<Self, NnError> {
        let mut cfg = ModelConfig::default();
        let mut seen = 0usize;
        for (k, v) in pairs {
            let parse = |v: &str| {
                v.trim()
                    .parse::<usize>()
                    .map_err(|_| NnError::Config(format!("bad value for {k}: {v:?}")))
            };
            match k.trim() {
                "vocab_size" => cfg.vocab_size = parse(v)?,
                "d_model" => cfg.d_model = parse(v)?,
                "n_heads" => cfg.n_heads = parse(v)?,
                "n_enc_layers" => cfg.n_enc_layers = parse(v)?,
                "n_dec_layers" => cfg.n_dec_layers = parse(v)?,
                "d_ff" => cfg.d_ff = parse(v)?,
                "max_seq_len" => cfg.max_seq_len = parse(v)?,
                "dropout_prob" => {
                    cfg.dropout_prob = v
                        .trim()
                        .parse::<f32>()
                        .map_err(|_| NnError::Config(format!("bad value for {k}: {v:?}")))?
                }
                _ => continue,
            }
            seen += 1;
        }
        if seen < 8 {
            return Err(NnError::Config(format!(
                "model configuration incomplete: {seen} of 8 fields present"
            )));
        }
        cfg.validate()?;
        Ok(cfg)
    }
}

/// How a freshly created parameter is filled.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum ParamInit {
    Normal { std: f32 },
    Zeros,
    Ones,
}

/// Named parameter store for one model. Insertion order is stable and is the
/// order used by the optimizer and the checkpoint writer.
#[derive(Debug, Clone, PartialEq)]
pub struct ModelParams {
    config: ModelConfig,
    names: Vec<String>,
    tensors: Vec<Tensor>,
    index: HashMap<String, usize>,
}

impl ModelParams {
    pub fn new(config: ModelConfig) -> Self {
        Self {
            config,
            names: Vec::new(),
            tensors: Vec::new(),
            index: HashMap::new(),
        }
    }

    pub fn config(&self) -> &ModelConfig {
        &self.config
    }

    pub fn insert(&mut self, name: impl Into<String>, tensor: Tensor) -> Result<usize, NnError> {
        let name = name.into();
        if self.index.contains_key(&name) {
            return Err(NnError::DuplicateParam(name));
        }
        let id = self.tensors.len();
        self.index.insert(name.clone(), id);
        self.names.push(name);
        self.tensors.push(tensor);
        Ok(id)
    }

    pub fn create<R: Rng>(
        &mut self,
        name: impl Into<String>,
        shape: Vec<usize>,
        init: ParamInit,
        rng: &mut R,
    ) -> Result<usize, NnError> {
        let mut t = Tensor::zeros(shape);
        match init {
            ParamInit::Zeros => {}
            ParamInit::Ones => t.data.fill(1.0),
            ParamInit::Normal { std } => {
                let dist = Normal::new(0.0f32, std)
                    .map_err(|e| NnError::Config(format!("bad init std {std}: {e}")))?;
                for x in t.data.iter_mut() {
                    *x = dist.sample(rng);
                }
            }
        }
        self.insert(name, t)
    }

    pub fn id(&self, name: &str) -> Option<usize> {
        self.index.get(name).copied()
    }

    pub fn get(&self, name: &str) -> Option<&Tensor> {
        self.id(name).map(|i| &self.tensors[i])
    }

    pub fn get_mut(&mut self, name: &str) -> Option<&mut Tensor> {
        self.id(name).map(move |i| &mut self.tensors[i])
    }

    pub fn tensor(&self, id: usize) -> &Tensor {
        &self.tensors[id]
    }

    pub fn tensor_mut(&mut self, id: usize) -> &mut Tensor {
        &mut self.tensors[id]
    }

    pub fn name(&self, id: usize) -> &str {
        &self.names[id]
    }

    pub fn len(&self) -> usize {
        self.tensors.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tensors.is_empty()
    }

    pub fn iter(&self) -> impl Iterator<Item = (&str, &Tensor)> {
        self.names.iter().map(String::as_str).zip(self.tensors.iter())
    }

    pub fn names(&self) -> impl Iterator<Item = &str> {
        self.names.iter().map(String::as_str)
    }

    /// Total scalar count across all parameters.
    pub fn num_scalars(&self) -> usize {
        self.tensors.iter().map(Tensor::numel).sum()
    }

    pub fn zero_grads(&mut self) {
        for t in &mut self.tensors {
            t.grad = None;
        }
    }

    /// Adds `scale * grad` into each tensor's accumulator.
    pub fn accumulate_grads(&mut self, grads: &Gradients, scale: f32) {
        for (id, g) in grads.param_grads() {
            let t = &mut self.tensors[id];
            if !t.requires_grad {
                continue;
            }
            let acc = t.grad.get_or_insert_with(|| vec![0.0; g.len()]);
            for (a, &x) in acc.iter_mut().zip(g) {
                *a += scale * x;
            }
        }
    }
}
