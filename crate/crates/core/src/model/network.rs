//! Full encoder-classifier: optional batch-norm → GRU → linear head, with
//! the mean cross-entropy over a batch and its exact gradient.

use super::batchnorm::{batchnorm_backward, batchnorm_forward, update_running_stats, BnCache, Mode};
use super::gru::{add_gru, gru_backward, gru_forward, GruCache};
use super::head::{argmax, cross_entropy, head_forward};
use super::linalg::add_assign;
use super::params::{Gradients, ModelParams};
use crate::error::{Error, Result};
use crate::features::FeatureSequence;
use crate::par;

#[derive(Debug, Clone)]
pub struct BatchOutput {
    /// Mean cross-entropy over the batch.
    pub loss: f64,
    pub logits: Vec<Vec<f64>>,
    pub embeddings: Vec<Vec<f64>>,
}

/// Everything [`backward`] needs from a forward pass.
#[derive(Debug, Clone)]
pub struct BatchCache {
    fingerprint: u64,
    bn: Option<BnCache>,
    gru: Vec<GruCache>,
    /// `softmax - onehot`, already divided by the batch size.
    dlogits: Vec<Vec<f64>>,
}

impl BatchCache {
    pub fn batch_size(&self) -> usize {
        self.gru.len()
    }
}

fn check_inputs(params: &ModelParams, batch: &[&FeatureSequence], labels: &[usize]) -> Result<()> {
    if batch.is_empty() {
        return Err(Error::Argument("empty batch".into()));
    }
    if batch.len() != labels.len() {
        return Err(Error::Shape(format!(
            "{} sequences but {} labels",
            batch.len(),
            labels.len()
        )));
    }
    if let Some(s) = batch.iter().find(|s| s.n_channels != params.dims.n_channels) {
        return Err(Error::Shape(format!(
            "model expects {} channels, sequence has {}",
            params.dims.n_channels, s.n_channels
        )));
    }
    if let Some(&l) = labels.iter().find(|&&l| l >= params.dims.n_classes) {
        return Err(Error::Argument(format!("label {l} ≥ {} classes", params.dims.n_classes)));
    }
    Ok(())
}

/// Forward pass over a batch. In [`Mode::Train`] batch-norm uses batch
/// statistics; call [`apply_running_stats`] afterwards to fold them in.
pub fn forward_batch(
    params: &ModelParams,
    batch: &[&FeatureSequence],
    labels: &[usize],
    mode: Mode,
) -> Result<(BatchOutput, BatchCache)> {
    check_inputs(params, batch, labels)?;
    let n = params.dims.n_channels;
    let raw: Vec<&[f64]> = batch.iter().map(|s| s.data.as_slice()).collect();
    let (normalized, bn_cache) = match &params.bn {
        Some(bn) => {
            let (y, c) = batchnorm_forward(&raw, n, bn, mode)?;
            (Some(y), Some(c))
        }
        None => (None, None),
    };

    let results = par::map_range(batch.len(), |i| -> Result<_> {
        let input = normalized.as_ref().map_or(raw[i], |y| y[i].as_slice());
        let (h, cache) = gru_forward(input, n, &params.gru, None)?;
        let logits = head_forward(&h, &params.head)?;
        let (loss, dlogits) = cross_entropy(&logits, labels[i])?;
        Ok((h, cache, logits, loss, dlogits))
    });

    let scale = 1.0 / batch.len() as f64;
    let mut out = BatchOutput {
        loss: 0.0,
        logits: Vec::with_capacity(batch.len()),
        embeddings: Vec::with_capacity(batch.len()),
    };
    let mut gru = Vec::with_capacity(batch.len());
    let mut dlogits = Vec::with_capacity(batch.len());
    for r in results {
        let (h, cache, logits, loss, mut dl) = r?;
        out.loss += loss;
        dl.iter_mut().for_each(|v| *v *= scale);
        out.logits.push(logits);
        out.embeddings.push(h);
        gru.push(cache);
        dlogits.push(dl);
    }
    out.loss *= scale;
    Ok((
        out,
        BatchCache {
            fingerprint: params.fingerprint(),
            bn: bn_cache,
            gru,
            dlogits,
        },
    ))
}

/// Gradient of `dloss · loss` w.r.t. every trainable tensor.
///
/// Per-sequence BPTT runs in parallel; the per-sequence gradients are then
/// summed in batch order so the result does not depend on thread count.
pub fn backward(params: &ModelParams, cache: &BatchCache, dloss: f64) -> Result<Gradients> {
    if cache.fingerprint != params.fingerprint() {
        return Err(Error::Contract(
            "forward cache was computed with different parameters".into(),
        ));
    }
    if cache.bn.is_some() != params.bn.is_some() {
        return Err(Error::Contract("batch-norm presence differs from forward pass".into()));
    }
    let need_dx = params.bn.is_some();
    let m = params.dims.hidden;

    let per_seq = par::map_range(cache.gru.len(), |i| {
        let dl: Vec<f64> = cache.dlogits[i].iter().map(|v| v * dloss).collect();
        let mut dh = vec![0.0; m];
        params.head.w.tmul_vec_add(&dl, &mut dh);
        let (g, dx) = gru_backward(&params.gru, &cache.gru[i], &dh, need_dx);
        (dl, g, dx)
    });

    let mut grads = Gradients::zeros_like(params);
    let mut dxs = Vec::with_capacity(per_seq.len());
    for (i, (dl, g, dx)) in per_seq.into_iter().enumerate() {
        grads.head.w.add_outer(&dl, cache.gru[i].final_state());
        add_assign(&mut grads.head.b, &dl);
        add_gru(&mut grads.gru, &g);
        if let Some(dx) = dx {
            dxs.push(dx);
        }
    }
    if let Some(bn_cache) = &cache.bn {
        let (dgamma, dbeta) = batchnorm_backward(bn_cache, &dxs, params.dims.n_channels);
        grads.bn_gamma = Some(dgamma);
        grads.bn_beta = Some(dbeta);
    }
    Ok(grads)
}

/// Folds train-mode batch statistics into the running estimates.
pub fn apply_running_stats(params: &mut ModelParams, cache: &BatchCache) {
    if let (Some(bn), Some(c)) = (params.bn.as_mut(), cache.bn.as_ref()) {
        update_running_stats(bn, c);
    }
}

/// Eval-mode embedding `h` (final GRU state) for one sequence.
pub fn embed(params: &ModelParams, seq: &FeatureSequence) -> Result<Vec<f64>> {
    if seq.n_channels != params.dims.n_channels {
        return Err(Error::Shape(format!(
            "model expects {} channels, sequence has {}",
            params.dims.n_channels, seq.n_channels
        )));
    }
    let n = params.dims.n_channels;
    let input = match &params.bn {
        Some(bn) => batchnorm_forward(&[&seq.data], n, bn, Mode::Eval)?.0.remove(0),
        None => seq.data.clone(),
    };
    Ok(gru_forward(&input, n, &params.gru, None)?.0)
}

/// Eval-mode class scores for one sequence.
pub fn predict_logits(params: &ModelParams, seq: &FeatureSequence) -> Result<Vec<f64>> {
    head_forward(&embed(params, seq)?, &params.head)
}

pub fn predict(params: &ModelParams, seq: &FeatureSequence) -> Result<usize> {
    Ok(argmax(&predict_logits(params, seq)?))
}
