//! Accuracy, macro F1 and confusion matrices for a checkpoint on a split.

use std::collections::BTreeMap;
use std::path::Path;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::corpus::{Accent, UtteranceRecord};
use crate::dataset::FeatureStore;
use crate::error::{Error, Result};
use crate::features::{FeatureKind, FeatureSequence, MelConfig, MelExtractor};
use crate::model::{argmax, embed, head_forward, Checkpoint, Dims, ModelParams};
use crate::par;
use crate::training::{full_sequence, sample_chunk, ChunkPlan, Example};

/// A record that could not be scored.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Failure {
    pub path: String,
    pub error: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub class_set: Vec<Accent>,
    pub accuracy: f64,
    pub f1_macro: f64,
    /// Classes absent from both truth and predictions have no entry.
    pub per_class_f1: BTreeMap<Accent, f64>,
    /// Rows are true classes, columns predicted, both in `class_set` order.
    pub confusion: Vec<Vec<u64>>,
    pub n_samples: u64,
    #[serde(default)]
    pub failures: Vec<Failure>,
}

impl EvalReport {
    /// Builds a report from class indices into `class_set`.
    pub fn from_predictions(class_set: &[Accent], truth: &[usize], predicted: &[usize]) -> Result<Self> {
        if truth.len() != predicted.len() {
            return Err(Error::Shape(format!(
                "{} labels but {} predictions",
                truth.len(),
                predicted.len()
            )));
        }
        let c = class_set.len();
        let mut confusion = vec![vec![0u64; c]; c];
        for (&t, &p) in truth.iter().zip(predicted) {
            if t >= c || p >= c {
                return Err(Error::Argument(format!("class index out of range for {c} classes")));
            }
            confusion[t][p] += 1;
        }
        Ok(Self::from_confusion(class_set, confusion))
    }

    /// Recomputes every metric from a confusion matrix.
    pub fn from_confusion(class_set: &[Accent], confusion: Vec<Vec<u64>>) -> Self {
        let c = class_set.len();
        let n: u64 = confusion.iter().flatten().sum();
        let trace: u64 = (0..c).map(|k| confusion[k][k]).sum();
        let mut per_class_f1 = BTreeMap::new();
        for k in 0..c {
            let tp = confusion[k][k] as f64;
            let actual: u64 = confusion[k].iter().sum();
            let predicted: u64 = confusion.iter().map(|row| row[k]).sum();
            if actual == 0 && predicted == 0 {
                continue;
            }
            let precision = if predicted == 0 { 0.0 } else { tp / predicted as f64 };
            let recall = if actual == 0 { 0.0 } else { tp / actual as f64 };
            let f1 = if precision + recall == 0.0 {
                0.0
            } else {
                2.0 * precision * recall / (precision + recall)
            };
            per_class_f1.insert(class_set[k], f1);
        }
        let f1_macro = if per_class_f1.is_empty() {
            0.0
        } else {
            per_class_f1.values().sum::<f64>() / per_class_f1.len() as f64
        };
        Self {
            class_set: class_set.to_vec(),
            accuracy: if n == 0 { 0.0 } else { trace as f64 / n as f64 },
            f1_macro,
            per_class_f1,
            confusion,
            n_samples: n,
            failures: Vec::new(),
        }
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("report serializes")
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        std::fs::write(path, self.to_json() + "\n").map_err(|e| Error::io(path, e))
    }
}

/// How each utterance is cropped before scoring.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum EvalCrop {
    /// The whole feature sequence.
    Full,
    /// One random chunk of this many seconds per utterance, drawn in record
    /// order from a stream seeded with `seed`.
    Chunked { seconds: f64, seed: u64 },
}

/// Untrained model drawn from `seed`, packaged like a trained checkpoint.
pub fn base_model(
    seed: u64,
    dims: Dims,
    batchnorm: bool,
    class_set: &[Accent],
    frontend: FeatureKind,
) -> Result<Checkpoint> {
    let params = ModelParams::init(dims, batchnorm, seed)?;
    Checkpoint::new(params, class_set.to_vec(), frontend, seed)
}

fn check_compatible(ckpt: &Checkpoint, class_set: &[Accent], frontend: FeatureKind) -> Result<()> {
    if ckpt.meta.class_set != class_set {
        return Err(Error::Argument(format!(
            "checkpoint classes {:?} differ from manifest classes {:?}",
            ckpt.meta.class_set, class_set
        )));
    }
    if ckpt.meta.frontend != frontend {
        return Err(Error::Argument(format!(
            "checkpoint expects {} features, store provides {}",
            ckpt.meta.frontend.as_str(),
            frontend.as_str()
        )));
    }
    Ok(())
}

/// Model input (label, sequence) for one record, or why it could not be loaded.
pub type LoadedInput = Result<(usize, FeatureSequence)>;

/// Loads the model input for every record. Per-record failures are kept
/// in place so the caller can report them without stopping the run.
pub fn load_inputs(
    records: &[&UtteranceRecord],
    class_set: &[Accent],
    store: &FeatureStore,
    crop: EvalCrop,
) -> Result<Vec<LoadedInput>> {
    let mel = match store.kind() {
        FeatureKind::Mel => Some(MelExtractor::new(MelConfig::default())?),
        FeatureKind::External => None,
    };
    let examples: Vec<Result<Example>> = par::map(records, |r| store.example(r, class_set));
    Ok(match crop {
        EvalCrop::Full => par::map(&examples, |ex| {
            let ex = ex.as_ref().map_err(clone_err)?;
            Ok((ex.label, full_sequence(ex, mel.as_ref())?))
        }),
        EvalCrop::Chunked { seconds, seed } => {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            examples
                .iter()
                .map(|ex| {
                    let ex = ex.as_ref().map_err(clone_err)?;
                    Ok((ex.label, sample_chunk(ex, seconds, ChunkPlan::Random, &mut rng, mel.as_ref())?))
                })
                .collect()
        }
    })
}

fn clone_err(e: &Error) -> Error {
    Error::Format(e.to_string())
}

/// Scores `records` (all labelled with classes from `class_set`) in eval mode.
pub fn evaluate(
    ckpt: &Checkpoint,
    records: &[&UtteranceRecord],
    class_set: &[Accent],
    store: &FeatureStore,
    crop: EvalCrop,
) -> Result<EvalReport> {
    check_compatible(ckpt, class_set, store.kind())?;
    let inputs = load_inputs(records, class_set, store, crop)?;
    evaluate_loaded(ckpt, records, class_set, &inputs)
}

/// [`evaluate`] on inputs from [`load_inputs`], so one load can serve many models.
pub fn evaluate_loaded(
    ckpt: &Checkpoint,
    records: &[&UtteranceRecord],
    class_set: &[Accent],
    inputs: &[LoadedInput],
) -> Result<EvalReport> {
    if ckpt.meta.class_set != class_set {
        return Err(Error::Argument("checkpoint classes differ from manifest classes".into()));
    }
    if records.len() != inputs.len() {
        return Err(Error::Shape("one input per record required".into()));
    }
    let scored = par::map(inputs, |input| -> Result<(usize, usize)> {
        let (label, seq) = input.as_ref().map_err(clone_err)?;
        let h = embed(&ckpt.params, seq)?;
        Ok((*label, argmax(&head_forward(&h, &ckpt.params.head)?)))
    });
    let mut truth = Vec::new();
    let mut predicted = Vec::new();
    let mut failures = Vec::new();
    for (record, result) in records.iter().zip(scored) {
        match result {
            Ok((t, p)) => {
                truth.push(t);
                predicted.push(p);
            }
            Err(e) => failures.push(Failure {
                path: record.path.clone(),
                error: e.to_string(),
            }),
        }
    }
    let mut report = EvalReport::from_predictions(class_set, &truth, &predicted)?;
    report.failures = failures;
    Ok(report)
}
