use rand::distr::{Distribution, Uniform};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::linalg::Mat;
use crate::error::{Error, Result};

/// Seed used for untrained baselines and as the default training seed.
pub const DEFAULT_SEED: u64 = 42;
pub const DEFAULT_HIDDEN: usize = 128;
pub const DEFAULT_BN_MOMENTUM: f64 = 0.1;
pub const DEFAULT_BN_EPSILON: f64 = 1e-5;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Dims {
    /// Feature channels `n`.
    pub n_channels: usize,
    /// Embedding size `m`.
    pub hidden: usize,
    pub n_classes: usize,
}

/// Gate weights: input maps `W_*` are `m × n`, recurrent maps `U_*` are `m × m`.
#[derive(Debug, Clone, PartialEq)]
pub struct GruParams {
    pub w_r: Mat,
    pub w_u: Mat,
    pub w_c: Mat,
    pub u_r: Mat,
    pub u_u: Mat,
    pub u_c: Mat,
    pub b_r: Vec<f64>,
    pub b_u: Vec<f64>,
    pub b_c: Vec<f64>,
}

impl GruParams {
    pub fn zeros(n: usize, m: usize) -> Self {
        Self {
            w_r: Mat::zeros(m, n),
            w_u: Mat::zeros(m, n),
            w_c: Mat::zeros(m, n),
            u_r: Mat::zeros(m, m),
            u_u: Mat::zeros(m, m),
            u_c: Mat::zeros(m, m),
            b_r: vec![0.0; m],
            b_u: vec![0.0; m],
            b_c: vec![0.0; m],
        }
    }

    pub fn hidden(&self) -> usize {
        self.b_r.len()
    }

    pub fn input_channels(&self) -> usize {
        self.w_r.cols
    }

    fn tensors(&self) -> [(&'static str, &[f64]); 9] {
        [
            ("gru.w_r", &self.w_r.data),
            ("gru.w_u", &self.w_u.data),
            ("gru.w_c", &self.w_c.data),
            ("gru.u_r", &self.u_r.data),
            ("gru.u_u", &self.u_u.data),
            ("gru.u_c", &self.u_c.data),
            ("gru.b_r", &self.b_r),
            ("gru.b_u", &self.b_u),
            ("gru.b_c", &self.b_c),
        ]
    }

    fn tensors_mut(&mut self) -> [(&'static str, &mut [f64]); 9] {
        [
            ("gru.w_r", &mut self.w_r.data),
            ("gru.w_u", &mut self.w_u.data),
            ("gru.w_c", &mut self.w_c.data),
            ("gru.u_r", &mut self.u_r.data),
            ("gru.u_u", &mut self.u_u.data),
            ("gru.u_c", &mut self.u_c.data),
            ("gru.b_r", &mut self.b_r),
            ("gru.b_u", &mut self.b_u),
            ("gru.b_c", &mut self.b_c),
        ]
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct BatchNormParams {
    pub gamma: Vec<f64>,
    pub beta: Vec<f64>,
    pub running_mean: Vec<f64>,
    pub running_var: Vec<f64>,
    pub momentum: f64,
    pub epsilon: f64,
}

impl BatchNormParams {
    /// Identity transform: gamma 1, beta 0, running stats (0, 1).
    pub fn identity(n: usize) -> Self {
        Self {
            gamma: vec![1.0; n],
            beta: vec![0.0; n],
            running_mean: vec![0.0; n],
            running_var: vec![1.0; n],
            momentum: DEFAULT_BN_MOMENTUM,
            epsilon: DEFAULT_BN_EPSILON,
        }
    }
}

/// Linear classifier `logits = W_o h + b_o`, `W_o` is `C × m`.
#[derive(Debug, Clone, PartialEq)]
pub struct HeadParams {
    pub w: Mat,
    pub b: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ModelParams {
    pub dims: Dims,
    pub gru: GruParams,
    pub bn: Option<BatchNormParams>,
    pub head: HeadParams,
}

impl ModelParams {
    pub fn zeros(dims: Dims, batchnorm: bool) -> Self {
        Self {
            dims,
            gru: GruParams::zeros(dims.n_channels, dims.hidden),
            bn: batchnorm.then(|| BatchNormParams::identity(dims.n_channels)),
            head: HeadParams {
                w: Mat::zeros(dims.n_classes, dims.hidden),
                b: vec![0.0; dims.n_classes],
            },
        }
    }

    /// Weights uniform in ±1/√m, zero biases, identity batch-norm; draws
    /// come from a ChaCha8 stream seeded with `seed`, in tensor order.
    pub fn init(dims: Dims, batchnorm: bool, seed: u64) -> Result<Self> {
        if dims.n_channels == 0 || dims.hidden == 0 || dims.n_classes < 2 {
            return Err(Error::Config(format!(
                "need n ≥ 1, m ≥ 1, C ≥ 2; got {dims:?}"
            )));
        }
        let mut p = Self::zeros(dims, batchnorm);
        let bound = 1.0 / (dims.hidden as f64).sqrt();
        let dist = Uniform::new_inclusive(-bound, bound).expect("finite bound");
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        for (name, t) in p.trainable_mut() {
            if name.contains(".w") || name.contains(".u_") {
                t.iter_mut().for_each(|v| *v = dist.sample(&mut rng));
            }
        }
        Ok(p)
    }

    /// Tensors updated by the optimizer, in checkpoint order.
    pub fn trainable(&self) -> Vec<(&'static str, &[f64])> {
        let mut out: Vec<(&'static str, &[f64])> = self.gru.tensors().into_iter().collect();
        if let Some(bn) = &self.bn {
            out.push(("bn.gamma", &bn.gamma));
            out.push(("bn.beta", &bn.beta));
        }
        out.push(("head.w", &self.head.w.data));
        out.push(("head.b", &self.head.b));
        out
    }

    pub fn trainable_mut(&mut self) -> Vec<(&'static str, &mut [f64])> {
        let mut out: Vec<(&'static str, &mut [f64])> = self.gru.tensors_mut().into_iter().collect();
        if let Some(bn) = &mut self.bn {
            out.push(("bn.gamma", &mut bn.gamma));
            out.push(("bn.beta", &mut bn.beta));
        }
        out.push(("head.w", &mut self.head.w.data));
        out.push(("head.b", &mut self.head.b));
        out
    }

    /// Every stored tensor (trainable plus running statistics), in the
    /// fixed checkpoint order: GRU, batch-norm, head.
    pub fn all_tensors(&self) -> Vec<(&'static str, &[f64])> {
        let mut out: Vec<(&'static str, &[f64])> = self.gru.tensors().into_iter().collect();
        if let Some(bn) = &self.bn {
            out.push(("bn.gamma", &bn.gamma));
            out.push(("bn.beta", &bn.beta));
            out.push(("bn.running_mean", &bn.running_mean));
            out.push(("bn.running_var", &bn.running_var));
        }
        out.push(("head.w", &self.head.w.data));
        out.push(("head.b", &self.head.b));
        out
    }

    pub fn all_tensors_mut(&mut self) -> Vec<(&'static str, &mut [f64])> {
        let mut out: Vec<(&'static str, &mut [f64])> = self.gru.tensors_mut().into_iter().collect();
        if let Some(bn) = &mut self.bn {
            out.push(("bn.gamma", &mut bn.gamma));
            out.push(("bn.beta", &mut bn.beta));
            out.push(("bn.running_mean", &mut bn.running_mean));
            out.push(("bn.running_var", &mut bn.running_var));
        }
        out.push(("head.w", &mut self.head.w.data));
        out.push(("head.b", &mut self.head.b));
        out
    }

    pub fn check(&self) -> Result<()> {
        for (name, t) in self.all_tensors() {
            if t.iter().any(|v| !v.is_finite()) {
                return Err(Error::Numeric(format!("non-finite value in {name}")));
            }
        }
        if let Some(bn) = &self.bn {
            if bn.running_var.iter().any(|&v| v < 0.0) || !(bn.epsilon > 0.0) {
                return Err(Error::Numeric("batch-norm variance/epsilon out of range".into()));
            }
        }
        Ok(())
    }

    /// FNV-1a over the bits of every trainable value; ties a forward cache
    /// to the exact parameters it was computed with.
    pub fn fingerprint(&self) -> u64 {
        let mut h: u64 = 0xcbf2_9ce4_8422_2325;
        for (_, t) in self.trainable() {
            for v in t {
                h ^= v.to_bits();
                h = h.wrapping_mul(0x0000_0100_0000_01b3);
            }
        }
        h
    }
}

/// Gradient of a scalar loss with respect to every trainable tensor.
#[derive(Debug, Clone, PartialEq)]
pub struct Gradients {
    pub gru: GruParams,
    pub bn_gamma: Option<Vec<f64>>,
    pub bn_beta: Option<Vec<f64>>,
    pub head: HeadParams,
}

impl Gradients {
    pub fn zeros_like(p: &ModelParams) -> Self {
        let z = ModelParams::zeros(p.dims, p.bn.is_some());
        Self {
            gru: z.gru,
            bn_gamma: z.bn.as_ref().map(|b| vec![0.0; b.gamma.len()]),
            bn_beta: z.bn.as_ref().map(|b| vec![0.0; b.beta.len()]),
            head: z.head,
        }
    }

    /// Same order as [`ModelParams::trainable`].
    pub fn tensors(&self) -> Vec<(&'static str, &[f64])> {
        let mut out: Vec<(&'static str, &[f64])> = self.gru.tensors().into_iter().collect();
        if let (Some(g), Some(b)) = (&self.bn_gamma, &self.bn_beta) {
            out.push(("bn.gamma", g));
            out.push(("bn.beta", b));
        }
        out.push(("head.w", &self.head.w.data));
        out.push(("head.b", &self.head.b));
        out
    }

    pub fn tensors_mut(&mut self) -> Vec<(&'static str, &mut [f64])> {
        let mut out: Vec<(&'static str, &mut [f64])> = self.gru.tensors_mut().into_iter().collect();
        if let (Some(g), Some(b)) = (&mut self.bn_gamma, &mut self.bn_beta) {
            out.push(("bn.gamma", g));
            out.push(("bn.beta", b));
        }
        out.push(("head.w", &mut self.head.w.data));
        out.push(("head.b", &mut self.head.b));
        out
    }

    pub fn scale(&mut self, k: f64) {
        for (_, t) in self.tensors_mut() {
            t.iter_mut().for_each(|v| *v *= k);
        }
    }

    pub fn global_norm(&self) -> f64 {
        self.tensors()
            .iter()
            .flat_map(|(_, t)| t.iter())
            .map(|v| v * v)
            .sum::<f64>()
            .sqrt()
    }
}
