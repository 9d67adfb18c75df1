//! Training examples and the chunk sampler that turns them into model input.

use rand::Rng;

use crate::audio::AudioClip;
use crate::error::{Error, Result};
use crate::features::{frame_chunk_at, random_chunk, random_frame_chunk, slice_padded, FeatureSequence, MelExtractor};

/// What an example holds before chunking. Mel examples keep the waveform so
/// chunks are cut in the sample domain and featurized afterwards.
#[derive(Debug, Clone)]
pub enum Source {
    Audio(AudioClip),
    Features(FeatureSequence),
}

#[derive(Debug, Clone)]
pub struct Example {
    pub id: String,
    pub speaker_id: String,
    pub label: usize,
    pub source: Source,
}

/// Where a chunk starts: a fresh draw, or offset 0 for deterministic scoring.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ChunkPlan {
    Random,
    Start,
}

/// A cut of an example that has not been featurized yet.
pub(crate) enum RawChunk {
    Audio(AudioClip),
    Features(FeatureSequence),
}

pub(crate) fn cut<R: Rng + ?Sized>(ex: &Example, seconds: f64, plan: ChunkPlan, rng: &mut R) -> Result<RawChunk> {
    Ok(match (&ex.source, plan) {
        (Source::Audio(clip), ChunkPlan::Random) => RawChunk::Audio(random_chunk(clip, seconds, rng)?),
        (Source::Audio(clip), ChunkPlan::Start) => {
            let len = (seconds * clip.sample_rate_hz as f64).round() as usize;
            RawChunk::Audio(AudioClip {
                samples: slice_padded(&clip.samples, 0, len),
                sample_rate_hz: clip.sample_rate_hz,
            })
        }
        (Source::Features(seq), ChunkPlan::Random) => RawChunk::Features(random_frame_chunk(seq, seconds, rng)?),
        (Source::Features(seq), ChunkPlan::Start) => {
            let len = ((seconds * seq.frame_rate_hz).round() as usize).max(1);
            RawChunk::Features(frame_chunk_at(seq, 0, len))
        }
    })
}

pub(crate) fn featurize(chunk: &RawChunk, mel: Option<&MelExtractor>) -> Result<FeatureSequence> {
    match chunk {
        RawChunk::Features(seq) => Ok(seq.clone()),
        RawChunk::Audio(clip) => match mel {
            Some(m) => m.compute(clip),
            None => Err(Error::Contract("audio example without a mel extractor".into())),
        },
    }
}

/// Full-length model input for an example (no cropping).
pub fn full_sequence(ex: &Example, mel: Option<&MelExtractor>) -> Result<FeatureSequence> {
    match &ex.source {
        Source::Features(seq) => Ok(seq.clone()),
        Source::Audio(clip) => match mel {
            Some(m) => m.compute(clip),
            None => Err(Error::Contract("audio example without a mel extractor".into())),
        },
    }
}

/// Rejects train/dev pairs that share a speaker.
pub fn check_disjoint(train: &[Example], dev: &[Example]) -> Result<()> {
    let train_speakers: std::collections::BTreeSet<&str> = train.iter().map(|e| e.speaker_id.as_str()).collect();
    if let Some(e) = dev.iter().find(|e| train_speakers.contains(e.speaker_id.as_str())) {
        return Err(Error::Argument(format!(
            "speaker {} appears in both train and dev",
            e.speaker_id
        )));
    }
    Ok(())
}

/// One featurized chunk of `ex`, drawing from `rng` only for [`ChunkPlan::Random`].
pub fn sample_chunk<R: Rng + ?Sized>(
    ex: &Example,
    seconds: f64,
    plan: ChunkPlan,
    rng: &mut R,
    mel: Option<&MelExtractor>,
) -> Result<FeatureSequence> {
    featurize(&cut(ex, seconds, plan, rng)?, mel)
}
