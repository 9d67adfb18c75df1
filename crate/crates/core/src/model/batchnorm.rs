//! Per-channel batch normalization over every (sequence, frame) position.

use super::params::BatchNormParams;
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Mode {
    /// Batch statistics; running statistics are updated by the caller.
    Train,
    /// Running statistics; a fixed affine map per channel.
    Eval,
}

#[derive(Debug, Clone)]
pub struct BnCache {
    pub mode: Mode,
    /// Normalized inputs (before gamma/beta), one buffer per sequence.
    pub xhat: Vec<Vec<f64>>,
    /// Batch mean and biased variance per channel (train mode only).
    pub batch_mean: Vec<f64>,
    pub batch_var: Vec<f64>,
    pub positions: usize,
}

/// Normalizes each time-major `frames × n` buffer in `batch`.
pub fn batchnorm_forward(
    batch: &[&[f64]],
    n: usize,
    bn: &BatchNormParams,
    mode: Mode,
) -> Result<(Vec<Vec<f64>>, BnCache)> {
    if bn.gamma.len() != n {
        return Err(Error::Shape(format!(
            "batch-norm has {} channels, input has {n}",
            bn.gamma.len()
        )));
    }
    if batch.iter().any(|s| s.len() % n != 0) {
        return Err(Error::Shape("sequence length not a multiple of channels".into()));
    }
    let positions: usize = batch.iter().map(|s| s.len() / n).sum();

    let (shift, inv_std, batch_mean, batch_var) = match mode {
        Mode::Train => {
            if positions < 2 {
                return Err(Error::BatchTooSmall(format!(
                    "train-mode batch-norm needs ≥ 2 positions, got {positions}"
                )));
            }
            let mut mean = vec![0.0; n];
            for s in batch {
                for frame in s.chunks_exact(n) {
                    for (m, x) in mean.iter_mut().zip(frame) {
                        *m += x;
                    }
                }
            }
            mean.iter_mut().for_each(|m| *m /= positions as f64);
            let mut var = vec![0.0; n];
            for s in batch {
                for frame in s.chunks_exact(n) {
                    for c in 0..n {
                        let d = frame[c] - mean[c];
                        var[c] += d * d;
                    }
                }
            }
            var.iter_mut().for_each(|v| *v /= positions as f64);
            let inv: Vec<f64> = var.iter().map(|v| 1.0 / (v + bn.epsilon).sqrt()).collect();
            (mean.clone(), inv, mean, var)
        }
        Mode::Eval => {
            let inv = bn
                .running_var
                .iter()
                .map(|v| 1.0 / (v + bn.epsilon).sqrt())
                .collect();
            (bn.running_mean.clone(), inv, Vec::new(), Vec::new())
        }
    };

    let mut xhat = Vec::with_capacity(batch.len());
    let mut out = Vec::with_capacity(batch.len());
    for s in batch {
        let mut xh = Vec::with_capacity(s.len());
        let mut y = Vec::with_capacity(s.len());
        for frame in s.chunks_exact(n) {
            for c in 0..n {
                let v = (frame[c] - shift[c]) * inv_std[c];
                xh.push(v);
                y.push(bn.gamma[c] * v + bn.beta[c]);
            }
        }
        xhat.push(xh);
        out.push(y);
    }
    Ok((
        out,
        BnCache {
            mode,
            xhat,
            batch_mean,
            batch_var,
            positions,
        },
    ))
}

/// Gradients of gamma and beta given the upstream gradient of the output.
pub fn batchnorm_backward(cache: &BnCache, dy: &[Vec<f64>], n: usize) -> (Vec<f64>, Vec<f64>) {
    let mut dgamma = vec![0.0; n];
    let mut dbeta = vec![0.0; n];
    for (xh, g) in cache.xhat.iter().zip(dy) {
        for (fx, fg) in xh.chunks_exact(n).zip(g.chunks_exact(n)) {
            for c in 0..n {
                dgamma[c] += fg[c] * fx[c];
                dbeta[c] += fg[c];
            }
        }
    }
    (dgamma, dbeta)
}

/// Exponential moving average of the batch statistics; the variance is
/// stored unbiased.
pub fn update_running_stats(bn: &mut BatchNormParams, cache: &BnCache) {
    if cache.mode != Mode::Train {
        return;
    }
    let p = cache.positions as f64;
    let k = bn.momentum;
    for c in 0..bn.running_mean.len() {
        bn.running_mean[c] = (1.0 - k) * bn.running_mean[c] + k * cache.batch_mean[c];
        bn.running_var[c] = (1.0 - k) * bn.running_var[c] + k * cache.batch_var[c] * p / (p - 1.0);
    }
}
