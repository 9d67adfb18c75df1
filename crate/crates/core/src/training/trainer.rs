use std::io::Write;
use std::path::Path;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use super::adam::{adam_step, AdamConfig, AdamState};
use super::config::TrainConfig;
use super::data::{check_disjoint, cut, featurize, ChunkPlan, Example, Source};
use crate::corpus::Accent;
use crate::error::{Error, Result};
use crate::features::{FeatureKind, FeatureSequence, MelConfig, MelExtractor};
use crate::model::{apply_running_stats, argmax, backward, forward_batch, Checkpoint, Dims, Mode, ModelParams};
use crate::par;

pub const CHECKPOINT_FILE: &str = "best.sckp";
pub const LOG_FILE: &str = "train_log.csv";
pub const LOG_HEADER: &str = "epoch,train_loss,dev_loss,dev_accuracy";

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EpochLog {
    pub epoch: usize,
    pub train_loss: f64,
    pub dev_loss: f64,
    pub dev_accuracy: f64,
}

#[derive(Debug, Clone)]
pub struct TrainOutcome {
    pub best: Checkpoint,
    pub best_epoch: usize,
    pub log: Vec<EpochLog>,
    /// Epochs at which the checkpoint was (re)written.
    pub saved_epochs: Vec<usize>,
}

pub fn log_csv(log: &[EpochLog]) -> String {
    let mut s = String::from(LOG_HEADER);
    s.push('\n');
    for e in log {
        s.push_str(&format!("{},{},{},{}\n", e.epoch, e.train_loss, e.dev_loss, e.dev_accuracy));
    }
    s
}

/// Seed for the data stream (shuffles and chunk offsets). Kept apart from
/// the initialization stream so changing one never perturbs the other.
fn data_rng(seed: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(1);
    rng
}

fn input_dims(examples: &[Example], mel: Option<&MelExtractor>) -> Result<usize> {
    let mut channels = None;
    for ex in examples {
        let c = match &ex.source {
            Source::Features(s) => s.n_channels,
            Source::Audio(_) => mel.map(|m| m.config().n_mels).ok_or_else(|| {
                Error::Contract("audio example without a mel extractor".into())
            })?,
        };
        match channels {
            None => channels = Some(c),
            Some(prev) if prev != c => {
                return Err(Error::Shape(format!("{}: {c} channels, expected {prev}", ex.id)));
            }
            _ => {}
        }
    }
    channels.ok_or_else(|| Error::Argument("no examples".into()))
}

fn check_frontend(examples: &[Example], frontend: FeatureKind) -> Result<()> {
    for ex in examples {
        let ok = match (&ex.source, frontend) {
            (Source::Audio(_), FeatureKind::Mel) => true,
            (Source::Features(s), k) => s.kind == k,
            (Source::Audio(_), FeatureKind::External) => false,
        };
        if !ok {
            return Err(Error::Argument(format!(
                "{} does not match the {} frontend",
                ex.id,
                frontend.as_str()
            )));
        }
    }
    Ok(())
}

/// Mean loss and accuracy over `examples` cut at offset 0, batched like training.
fn score_dev(
    params: &ModelParams,
    examples: &[Example],
    cfg: &TrainConfig,
    mel: Option<&MelExtractor>,
) -> Result<(f64, f64)> {
    let mut total_loss = 0.0;
    let mut correct = 0usize;
    let mut rng = data_rng(cfg.seed);
    for batch in examples.chunks(cfg.batch_size) {
        let batch: Vec<&Example> = batch.iter().collect();
        let seqs = chunk_batch(&batch, cfg.chunk_seconds, ChunkPlan::Start, &mut rng, mel)?;
        let refs: Vec<&FeatureSequence> = seqs.iter().collect();
        let labels: Vec<usize> = batch.iter().map(|e| e.label).collect();
        let (out, _) = forward_batch(params, &refs, &labels, Mode::Eval)?;
        total_loss += out.loss * batch.len() as f64;
        correct += out
            .logits
            .iter()
            .zip(&labels)
            .filter(|(l, &y)| argmax(l) == y)
            .count();
    }
    let n = examples.len() as f64;
    Ok((total_loss / n, correct as f64 / n))
}

/// Cuts one chunk per example in order (all RNG draws happen here, on one
/// thread), then featurizes the chunks in parallel.
fn chunk_batch(
    batch: &[&Example],
    seconds: f64,
    plan: ChunkPlan,
    rng: &mut ChaCha8Rng,
    mel: Option<&MelExtractor>,
) -> Result<Vec<FeatureSequence>> {
    let raw = batch
        .iter()
        .map(|ex| cut(ex, seconds, plan, rng))
        .collect::<Result<Vec<_>>>()?;
    par::map(&raw, |chunk| featurize(chunk, mel)).into_iter().collect()
}

/// Runs the full optimization schedule and returns the checkpoint with the
/// lowest dev loss. With `out_dir`, the checkpoint is written every time the
/// dev loss strictly improves and the epoch log after every epoch.
pub fn train(
    train_set: &[Example],
    dev_set: &[Example],
    class_set: &[Accent],
    cfg: &TrainConfig,
    out_dir: Option<&Path>,
) -> Result<TrainOutcome> {
    cfg.validate()?;
    if train_set.is_empty() || dev_set.is_empty() {
        return Err(Error::Argument("train and dev sets must be non-empty".into()));
    }
    if class_set.len() < 2 {
        return Err(Error::Argument("training needs at least two classes".into()));
    }
    if let Some(e) = train_set.iter().chain(dev_set).find(|e| e.label >= class_set.len()) {
        return Err(Error::Argument(format!("{}: label {} out of range", e.id, e.label)));
    }
    check_disjoint(train_set, dev_set)?;
    check_frontend(train_set, cfg.frontend)?;
    check_frontend(dev_set, cfg.frontend)?;

    let mel = match cfg.frontend {
        FeatureKind::Mel => Some(MelExtractor::new(MelConfig::default())?),
        FeatureKind::External => None,
    };
    let mel = mel.as_ref();
    let n_channels = input_dims(train_set, mel)?;
    if input_dims(dev_set, mel)? != n_channels {
        return Err(Error::Shape("train and dev feature widths differ".into()));
    }

    let dims = Dims {
        n_channels,
        hidden: cfg.hidden,
        n_classes: class_set.len(),
    };
    let mut params = ModelParams::init(dims, cfg.use_batchnorm, cfg.seed)?;
    if let Some(bn) = params.bn.as_mut() {
        bn.momentum = cfg.bn_momentum;
        bn.epsilon = cfg.bn_epsilon;
    }
    let adam = AdamConfig {
        lr: cfg.lr,
        beta1: cfg.beta1,
        beta2: cfg.beta2,
        epsilon: cfg.adam_epsilon,
    };
    let mut state = AdamState::new(&params);
    let mut rng = data_rng(cfg.seed);
    let mut order: Vec<usize> = (0..train_set.len()).collect();

    if let Some(dir) = out_dir {
        std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    }

    let mut log = Vec::with_capacity(cfg.epochs);
    let mut best: Option<(Checkpoint, usize, f64)> = None;
    let mut saved_epochs = Vec::new();

    for epoch in 1..=cfg.epochs {
        order.shuffle(&mut rng);
        let mut loss_sum = 0.0;
        for idx in order.chunks(cfg.batch_size) {
            let batch: Vec<&Example> = idx.iter().map(|&i| &train_set[i]).collect();
            let seqs = chunk_batch(&batch, cfg.chunk_seconds, ChunkPlan::Random, &mut rng, mel)?;
            let refs: Vec<&FeatureSequence> = seqs.iter().collect();
            let labels: Vec<usize> = batch.iter().map(|e| e.label).collect();
            let (out, cache) = forward_batch(&params, &refs, &labels, Mode::Train)?;
            let mut grads = backward(&params, &cache, 1.0)?;
            if let Some(limit) = cfg.clip_grad_norm {
                let norm = grads.global_norm();
                if norm > limit {
                    grads.scale(limit / norm);
                }
            }
            apply_running_stats(&mut params, &cache);
            adam_step(&mut params, &grads, &mut state, &adam)?;
            loss_sum += out.loss * batch.len() as f64;
        }
        let train_loss = loss_sum / train_set.len() as f64;
        let (dev_loss, dev_accuracy) = score_dev(&params, dev_set, cfg, mel)?;
        if !dev_loss.is_finite() {
            return Err(Error::Numeric(format!("dev loss is {dev_loss} at epoch {epoch}")));
        }
        log::info!("epoch {epoch}: train {train_loss:.4}, dev {dev_loss:.4}, dev acc {dev_accuracy:.4}");
        log.push(EpochLog {
            epoch,
            train_loss,
            dev_loss,
            dev_accuracy,
        });

        if best.as_ref().is_none_or(|(_, _, l)| dev_loss < *l) {
            let mut ckpt = Checkpoint::new(params.clone(), class_set.to_vec(), cfg.frontend, cfg.seed)?;
            ckpt.meta.epoch = Some(epoch);
            ckpt.meta.dev_loss = Some(dev_loss);
            if let Some(dir) = out_dir {
                ckpt.save(&dir.join(CHECKPOINT_FILE))?;
            }
            saved_epochs.push(epoch);
            best = Some((ckpt, epoch, dev_loss));
        }
        if let Some(dir) = out_dir {
            write_log(&dir.join(LOG_FILE), &log)?;
        }
    }

    let (best, best_epoch, _) = best.expect("at least one epoch ran");
    Ok(TrainOutcome {
        best,
        best_epoch,
        log,
        saved_epochs,
    })
}

fn write_log(path: &Path, log: &[EpochLog]) -> Result<()> {
    let mut f = std::fs::File::create(path).map_err(|e| Error::io(path, e))?;
    f.write_all(log_csv(log).as_bytes()).map_err(|e| Error::io(path, e))
}
