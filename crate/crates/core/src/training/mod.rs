//! Adam on mean cross-entropy over random fixed-length chunks, keeping the
//! checkpoint with the lowest dev loss.

mod adam;
mod config;
mod data;
mod trainer;

pub use adam::{adam_step, AdamConfig, AdamState};
pub use config::TrainConfig;
pub use data::{check_disjoint, full_sequence, sample_chunk, ChunkPlan, Example, Source};
pub use trainer::{log_csv, train, EpochLog, TrainOutcome, CHECKPOINT_FILE, LOG_FILE, LOG_HEADER};

#[cfg(test)]
mod tests {
    use super::*;
    use crate::corpus::Accent;
    use crate::error::Error;
    use crate::features::{FeatureKind, FeatureSequence};
    use crate::model::{backward, forward_batch, Dims, Mode, ModelParams};
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    const CLASSES: [Accent; 3] = [Accent::Edo, Accent::Yoruba, Accent::Igbo];

    /// Class k lights up channel k with a constant level plus a little noise.
    fn separable(n_per_class: usize, speaker_prefix: &str, seed: u64) -> Vec<Example> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let (channels, frames) = (4, 12);
        let mut out = Vec::new();
        for label in 0..3 {
            for i in 0..n_per_class {
                let data = (0..frames * channels)
                    .map(|j| {
                        let base = if j % channels == label { 1.0 } else { 0.0 };
                        base + rng.random_range(-0.1..0.1)
                    })
                    .collect();
                out.push(Example {
                    id: format!("{speaker_prefix}{label}_{i}"),
                    speaker_id: format!("{speaker_prefix}{label}_{i}"),
                    label,
                    source: Source::Features(
                        FeatureSequence::new(data, frames, channels, 10.0, FeatureKind::External).unwrap(),
                    ),
                });
            }
        }
        out
    }

    fn small_config() -> TrainConfig {
        TrainConfig {
            frontend: FeatureKind::External,
            hidden: 8,
            batch_size: 8,
            chunk_seconds: 1.0,
            ..TrainConfig::default()
        }
    }

    #[test]
    fn frozen_model_saves_only_first_epoch() {
        let (tr, dev) = (separable(4, "t", 1), separable(2, "d", 2));
        let cfg = TrainConfig {
            lr: 0.0,
            epochs: 4,
            ..small_config()
        };
        let out = train(&tr, &dev, &CLASSES, &cfg, None).unwrap();
        assert_eq!(out.saved_epochs, vec![1]);
        assert!(out.log.iter().all(|e| e.dev_loss == out.log[0].dev_loss));
    }

    #[test]
    fn separable_features_are_learned() {
        let (tr, dev) = (separable(10, "t", 3), separable(4, "d", 4));
        let out = train(&tr, &dev, &CLASSES, &small_config(), None).unwrap();
        let last = out.log.last().unwrap();
        assert!(last.train_loss < 0.1, "train loss {}", last.train_loss);
        let min_dev = out.log.iter().map(|e| e.dev_loss).fold(f64::INFINITY, f64::min);
        assert_eq!(out.best.meta.dev_loss, Some(min_dev));
        assert_eq!(out.best.meta.epoch, Some(out.best_epoch));
    }

    #[test]
    fn same_seed_gives_identical_checkpoints_and_logs() {
        let (tr, dev) = (separable(3, "t", 5), separable(2, "d", 6));
        let cfg = TrainConfig {
            epochs: 3,
            use_batchnorm: true,
            ..small_config()
        };
        let a = train(&tr, &dev, &CLASSES, &cfg, None).unwrap();
        let b = train(&tr, &dev, &CLASSES, &cfg, None).unwrap();
        assert_eq!(a.best.encode(), b.best.encode());
        assert_eq!(log_csv(&a.log), log_csv(&b.log));
        let c = train(&tr, &dev, &CLASSES, &TrainConfig { seed: 7, ..cfg }, None).unwrap();
        assert_ne!(log_csv(&a.log), log_csv(&c.log));
        assert_eq!(log_csv(&c.log).lines().next(), Some(LOG_HEADER));
    }

    #[test]
    fn shared_speaker_and_empty_sets_are_rejected() {
        let tr = separable(2, "s", 1);
        let dev = separable(1, "s", 2);
        assert!(matches!(
            train(&tr, &dev, &CLASSES, &small_config(), None),
            Err(Error::Argument(_))
        ));
        assert!(matches!(
            train(&tr, &[], &CLASSES, &small_config(), None),
            Err(Error::Argument(_))
        ));
    }

    #[test]
    fn one_batch_overfits_in_twenty_steps() {
        let batch = separable(2, "t", 9);
        let seqs: Vec<&FeatureSequence> = batch
            .iter()
            .map(|e| match &e.source {
                Source::Features(s) => s,
                Source::Audio(_) => unreachable!(),
            })
            .collect();
        let labels: Vec<usize> = batch.iter().map(|e| e.label).collect();
        let dims = Dims {
            n_channels: 4,
            hidden: crate::model::params::DEFAULT_HIDDEN,
            n_classes: 3,
        };
        let mut p = ModelParams::init(dims, true, 42).unwrap();
        let mut state = AdamState::new(&p);
        let mut first = None;
        for _ in 0..20 {
            let (out, cache) = forward_batch(&p, &seqs, &labels, Mode::Train).unwrap();
            first.get_or_insert(out.loss);
            let g = backward(&p, &cache, 1.0).unwrap();
            adam_step(&mut p, &g, &mut state, &AdamConfig::default()).unwrap();
        }
        let (out, _) = forward_batch(&p, &seqs, &labels, Mode::Train).unwrap();
        assert!(out.loss < 0.1 * first.unwrap(), "{} → {}", first.unwrap(), out.loss);
    }

    #[test]
    fn writes_checkpoint_and_log() {
        let dir = tempfile::tempdir().unwrap();
        let (tr, dev) = (separable(3, "t", 5), separable(2, "d", 6));
        let cfg = TrainConfig {
            epochs: 2,
            ..small_config()
        };
        let out = train(&tr, &dev, &CLASSES, &cfg, Some(dir.path())).unwrap();
        let saved = crate::model::Checkpoint::load(&dir.path().join(CHECKPOINT_FILE)).unwrap();
        assert_eq!(saved.encode(), out.best.encode());
        let log = std::fs::read_to_string(dir.path().join(LOG_FILE)).unwrap();
        assert_eq!(log, log_csv(&out.log));
        assert_eq!(log.lines().count(), 3);
    }
}
