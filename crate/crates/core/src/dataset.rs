//! Resolving manifest records to audio or feature sequences on disk.

use std::path::{Path, PathBuf};

use crate::audio::{read_wav, resample, AudioClip, FEATURE_RATE_HZ};
use crate::corpus::{Accent, UtteranceRecord};
use crate::error::{Error, Result};
use crate::features::{decode_sft1, FeatureKind, FeatureSequence, MelConfig, MelExtractor};
use crate::par;
use crate::training::{Example, Source};

/// Location of the feature file for a record: the record path under
/// `root`, with its extension replaced by `.sft1`.
pub fn feature_path(root: &Path, record_path: &str) -> PathBuf {
    root.join(record_path).with_extension("sft1")
}

/// Reads a WAV and brings it to the frontend rate.
pub fn load_clip(path: &Path) -> Result<AudioClip> {
    let clip = read_wav(path)?;
    resample(&clip, FEATURE_RATE_HZ)
}

/// Where feature sequences come from.
pub enum FeatureStore {
    /// Log-mel computed on the fly from `<root>/<record.path>`.
    Audio { root: PathBuf, mel: MelExtractor },
    /// Precomputed SFT1 files laid out by [`feature_path`].
    Sft1 { root: PathBuf, kind: FeatureKind },
}

impl FeatureStore {
    pub fn audio(root: impl Into<PathBuf>) -> Result<Self> {
        Ok(FeatureStore::Audio {
            root: root.into(),
            mel: MelExtractor::new(MelConfig::default())?,
        })
    }

    pub fn sft1(root: impl Into<PathBuf>, kind: FeatureKind) -> Self {
        FeatureStore::Sft1 {
            root: root.into(),
            kind,
        }
    }

    pub fn kind(&self) -> FeatureKind {
        match self {
            FeatureStore::Audio { .. } => FeatureKind::Mel,
            FeatureStore::Sft1 { kind, .. } => *kind,
        }
    }

    /// Full-length feature sequence for `record`.
    pub fn load(&self, record: &UtteranceRecord) -> Result<FeatureSequence> {
        match self {
            FeatureStore::Audio { root, mel } => mel.compute(&load_clip(&root.join(&record.path))?),
            FeatureStore::Sft1 { root, kind } => {
                let path = feature_path(root, &record.path);
                let bytes = std::fs::read(&path).map_err(|e| Error::io(&path, e))?;
                decode_sft1(&bytes, *kind)
            }
        }
    }

    /// Training example for `record`: the waveform for the mel frontend (so
    /// chunks are cut before featurization), the stored sequence otherwise.
    pub fn example(&self, record: &UtteranceRecord, class_set: &[Accent]) -> Result<Example> {
        let label = class_set
            .iter()
            .position(|&a| a == record.accent)
            .ok_or_else(|| Error::Argument(format!("{}: accent {} not in class set", record.path, record.accent)))?;
        let source = match self {
            FeatureStore::Audio { root, .. } => Source::Audio(load_clip(&root.join(&record.path))?),
            FeatureStore::Sft1 { .. } => Source::Features(self.load(record)?),
        };
        Ok(Example {
            id: record.path.clone(),
            speaker_id: record.speaker_id.clone(),
            label,
            source,
        })
    }

    /// [`FeatureStore::example`] over many records, loaded in parallel.
    pub fn examples(&self, records: &[&UtteranceRecord], class_set: &[Accent]) -> Result<Vec<Example>> {
        par::map(records, |r| self.example(r, class_set)).into_iter().collect()
    }
}
