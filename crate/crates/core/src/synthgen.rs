//! Synthetic labelled corpora: tone-signature WAVs for the mel path and
//! scale-imbalanced feature sequences for the external-feature path.

use std::path::Path;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::audio::{write_wav, AudioClip, FEATURE_RATE_HZ};
use crate::corpus::{save_manifest, Accent, Gender, Manifest, UtteranceRecord, PROMPT_SET_SIZE};
use crate::error::{Error, Result};
use crate::features::{hz_to_mel, write_sft1, FeatureKind, FeatureSequence};
use crate::par;

pub const MANIFEST_FILE: &str = "manifest.jsonl";

/// Amplitude-modulation rate shared by every tone, roughly syllabic.
const AM_RATE_HZ: f64 = 4.0;
const SNR_DB: f64 = 20.0;
const PEAK: f64 = 0.5;
const MIN_SECONDS: f64 = 2.0;
const MAX_SECONDS: f64 = 5.0;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Tone {
    pub freq_hz: f64,
    /// Amplitude-modulation depth in [0, 1).
    pub depth: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClassSignature {
    pub accent: Accent,
    /// Tones in decreasing loudness: tone `i` has amplitude `1 / (i + 1)`.
    pub tones: Vec<Tone>,
}

/// Built-in signatures, one per accent in canonical order. Every tone sits
/// at least three mel filters away from every tone of another class.
pub fn default_signatures() -> Vec<ClassSignature> {
    let sig = |accent, a: f64, b: f64, depth: f64| ClassSignature {
        accent,
        tones: vec![
            Tone { freq_hz: a, depth },
            Tone {
                freq_hz: b,
                depth: depth / 2.0,
            },
        ],
    };
    vec![
        sig(Accent::Edo, 300.0, 2200.0, 0.3),
        sig(Accent::Yoruba, 700.0, 3300.0, 0.4),
        sig(Accent::Igbo, 1200.0, 4700.0, 0.5),
        sig(Accent::EfikIbibio, 1700.0, 6000.0, 0.35),
        sig(Accent::Igala, 500.0, 2700.0, 0.45),
    ]
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SynthSpec {
    pub n_classes: usize,
    pub speakers_per_class: usize,
    pub utterances_per_speaker: usize,
    pub seed: u64,
    pub class_signatures: Vec<ClassSignature>,
}

impl SynthSpec {
    /// First `n_classes` built-in signatures.
    pub fn new(n_classes: usize, speakers_per_class: usize, utterances_per_speaker: usize, seed: u64) -> Self {
        Self {
            n_classes,
            speakers_per_class,
            utterances_per_speaker,
            seed,
            class_signatures: default_signatures().into_iter().take(n_classes).collect(),
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.n_classes < 2 || self.n_classes != self.class_signatures.len() {
            return Err(Error::Argument(format!(
                "need ≥ 2 classes with one signature each (classes {}, signatures {})",
                self.n_classes,
                self.class_signatures.len()
            )));
        }
        if self.speakers_per_class == 0 || self.utterances_per_speaker == 0 {
            return Err(Error::Argument("speaker and utterance counts must be ≥ 1".into()));
        }
        for (i, a) in self.class_signatures.iter().enumerate() {
            if a.tones.is_empty() {
                return Err(Error::Argument(format!("{} has no tones", a.accent)));
            }
            for t in &a.tones {
                if !(t.freq_hz > 0.0 && t.freq_hz < 8000.0) || !(0.0..1.0).contains(&t.depth) {
                    return Err(Error::Argument(format!(
                        "{}: tone {} Hz / depth {} out of range",
                        a.accent, t.freq_hz, t.depth
                    )));
                }
            }
            for b in &self.class_signatures[..i] {
                if a.accent == b.accent || a.tones == b.tones {
                    return Err(Error::Argument(format!(
                        "signatures for {} and {} are not distinct",
                        b.accent, a.accent
                    )));
                }
            }
        }
        Ok(())
    }
}

/// FNV-1a over the base seed and a name, used to give every file and
/// speaker its own reproducible stream regardless of generation order.
pub fn derive_seed(seed: u64, name: &str) -> u64 {
    let mut h: u64 = 0xcbf2_9ce4_8422_2325;
    for b in seed.to_le_bytes().iter().chain(name.as_bytes()) {
        h ^= *b as u64;
        h = h.wrapping_mul(0x0000_0100_0000_01b3);
    }
    h
}

struct Planned {
    record: UtteranceRecord,
    signature: usize,
    speaker_seed: u64,
}

fn plan(spec_classes: &[Accent], speakers: usize, utts: usize, seed: u64, ext: &str) -> Vec<Planned> {
    let mut out = Vec::new();
    for (k, &accent) in spec_classes.iter().enumerate() {
        for s in 0..speakers {
            let speaker_id = format!("{}_s{:02}", accent.as_str(), s + 1);
            for u in 0..utts {
                let path = format!("{}/{speaker_id}/{speaker_id}_u{:03}.{ext}", accent.as_str(), u + 1);
                out.push(Planned {
                    record: UtteranceRecord {
                        path,
                        speaker_id: speaker_id.clone(),
                        accent,
                        gender: if s % 2 == 0 { Gender::Female } else { Gender::Male },
                        sentence_id: (u % PROMPT_SET_SIZE as usize) as u32 + 1,
                        split: None,
                    },
                    signature: k,
                    speaker_seed: derive_seed(seed, &speaker_id),
                });
            }
        }
    }
    out
}

/// One utterance: the class tones with speaker-specific phases, amplitude
/// modulated, plus white Gaussian noise at 20 dB SNR, scaled to a fixed peak.
pub fn synthesize(signature: &ClassSignature, speaker_seed: u64, file_seed: u64) -> AudioClip {
    let mut speaker = ChaCha8Rng::seed_from_u64(speaker_seed);
    let phases: Vec<(f64, f64)> = signature
        .tones
        .iter()
        .map(|_| {
            (
                speaker.random_range(0.0..std::f64::consts::TAU),
                speaker.random_range(0.0..std::f64::consts::TAU),
            )
        })
        .collect();
    let mut rng = ChaCha8Rng::seed_from_u64(file_seed);
    let seconds = rng.random_range(MIN_SECONDS..=MAX_SECONDS);
    let n = (seconds * FEATURE_RATE_HZ as f64).round() as usize;
    let sr = FEATURE_RATE_HZ as f64;
    let mut x: Vec<f64> = (0..n)
        .map(|i| {
            let t = i as f64 / sr;
            signature
                .tones
                .iter()
                .zip(&phases)
                .enumerate()
                .map(|(j, (tone, (carrier, am)))| {
                    let env = 1.0 + tone.depth * (std::f64::consts::TAU * AM_RATE_HZ * t + am).sin();
                    env * (std::f64::consts::TAU * tone.freq_hz * t + carrier).sin() / (j + 1) as f64
                })
                .sum()
        })
        .collect();
    let power = x.iter().map(|v| v * v).sum::<f64>() / n as f64;
    let noise = Normal::new(0.0, (power / 10f64.powf(SNR_DB / 10.0)).sqrt()).expect("finite std");
    for v in x.iter_mut() {
        *v += noise.sample(&mut rng);
    }
    let peak = x.iter().fold(0.0f64, |m, v| m.max(v.abs()));
    x.iter_mut().for_each(|v| *v *= PEAK / peak);
    AudioClip {
        samples: x,
        sample_rate_hz: FEATURE_RATE_HZ,
    }
}

/// Writes the WAV corpus and `manifest.jsonl` under `out_dir`.
pub fn generate(spec: &SynthSpec, out_dir: &Path) -> Result<Manifest> {
    spec.validate()?;
    let classes: Vec<Accent> = spec.class_signatures.iter().map(|s| s.accent).collect();
    let planned = plan(&classes, spec.speakers_per_class, spec.utterances_per_speaker, spec.seed, "wav");
    par::map(&planned, |p| -> Result<()> {
        let clip = synthesize(
            &spec.class_signatures[p.signature],
            p.speaker_seed,
            derive_seed(spec.seed, &p.record.path),
        );
        let path = out_dir.join(&p.record.path);
        if let Some(parent) = path.parent() {
            std::fs::create_dir_all(parent).map_err(|e| Error::io(parent, e))?;
        }
        write_wav(&path, &clip)
    })
    .into_iter()
    .collect::<Result<Vec<()>>>()?;
    let manifest = Manifest::from_records(planned.into_iter().map(|p| p.record).collect());
    std::fs::create_dir_all(out_dir).map_err(|e| Error::io(out_dir, e))?;
    save_manifest(&manifest, &out_dir.join(MANIFEST_FILE))?;
    Ok(manifest)
}

/// Precomputed-feature corpus whose channels live on wildly different
/// scales, the situation batch-norm in front of the GRU is meant to absorb.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FeatureCorpusSpec {
    pub n_classes: usize,
    pub speakers_per_class: usize,
    pub utterances_per_speaker: usize,
    pub n_channels: usize,
    pub frame_rate_hz: f64,
    /// Channel `c` is multiplied by a scale drawn log-uniformly from this range.
    pub scale_range: (f64, f64),
    /// Standard deviation of per-frame noise relative to the class means.
    pub noise: f64,
    /// Standard deviation of a fixed per-speaker offset.
    pub speaker_spread: f64,
    pub seed: u64,
}

impl Default for FeatureCorpusSpec {
    fn default() -> Self {
        Self {
            n_classes: 3,
            speakers_per_class: 10,
            utterances_per_speaker: 10,
            n_channels: 16,
            frame_rate_hz: 50.0,
            scale_range: (0.01, 100.0),
            noise: 1.0,
            speaker_spread: 0.5,
            seed: 7,
        }
    }
}

/// Per-channel scales, log-uniform over `range`.
pub fn channel_scales(n: usize, range: (f64, f64), seed: u64) -> Vec<f64> {
    let mut rng = ChaCha8Rng::seed_from_u64(derive_seed(seed, "channel_scales"));
    let (lo, hi) = (range.0.ln(), range.1.ln());
    (0..n).map(|_| rng.random_range(lo..=hi).exp()).collect()
}

/// Writes one SFT1 file per utterance plus `manifest.jsonl` under `out_dir`.
/// Record paths point at the `.sft1` files, so `out_dir` doubles as the
/// features directory.
pub fn generate_features(spec: &FeatureCorpusSpec, out_dir: &Path) -> Result<Manifest> {
    if spec.n_classes < 2 || spec.n_classes > Accent::ALL.len() {
        return Err(Error::Argument(format!("n_classes must be in 2..={}", Accent::ALL.len())));
    }
    if spec.n_channels == 0 || spec.speakers_per_class == 0 || spec.utterances_per_speaker == 0 {
        return Err(Error::Argument("channel, speaker and utterance counts must be ≥ 1".into()));
    }
    if !(spec.scale_range.0 > 0.0 && spec.scale_range.1 >= spec.scale_range.0) || !(spec.frame_rate_hz > 0.0) {
        return Err(Error::Argument("invalid scale range or frame rate".into()));
    }
    let classes = &Accent::ALL[..spec.n_classes];
    let scales = channel_scales(spec.n_channels, spec.scale_range, spec.seed);
    let unit = Normal::new(0.0, 1.0).expect("unit normal");
    let mut class_rng = ChaCha8Rng::seed_from_u64(derive_seed(spec.seed, "class_means"));
    let means: Vec<Vec<f64>> = classes
        .iter()
        .map(|_| (0..spec.n_channels).map(|_| unit.sample(&mut class_rng)).collect())
        .collect();

    let planned = plan(classes, spec.speakers_per_class, spec.utterances_per_speaker, spec.seed, "sft1");
    par::map(&planned, |p| -> Result<()> {
        let mut spk = ChaCha8Rng::seed_from_u64(p.speaker_seed);
        let offset: Vec<f64> = (0..spec.n_channels)
            .map(|_| spec.speaker_spread * unit.sample(&mut spk))
            .collect();
        let mut rng = ChaCha8Rng::seed_from_u64(derive_seed(spec.seed, &p.record.path));
        let seconds = rng.random_range(MIN_SECONDS..=MAX_SECONDS);
        let frames = ((seconds * spec.frame_rate_hz).round() as usize).max(1);
        let mut data = Vec::with_capacity(frames * spec.n_channels);
        for _ in 0..frames {
            for c in 0..spec.n_channels {
                let v = means[p.signature][c] + offset[c] + spec.noise * unit.sample(&mut rng);
                data.push(scales[c] * v);
            }
        }
        let seq = FeatureSequence::new(data, frames, spec.n_channels, spec.frame_rate_hz, FeatureKind::External)?;
        let path = out_dir.join(&p.record.path);
        if let Some(parent) = path.parent() {
            std::fs::create_dir_all(parent).map_err(|e| Error::io(parent, e))?;
        }
        write_sft1(&path, &seq)
    })
    .into_iter()
    .collect::<Result<Vec<()>>>()?;
    let manifest = Manifest::from_records(planned.into_iter().map(|p| p.record).collect());
    std::fs::create_dir_all(out_dir).map_err(|e| Error::io(out_dir, e))?;
    save_manifest(&manifest, &out_dir.join(MANIFEST_FILE))?;
    Ok(manifest)
}

/// Smallest distance, in mel, between tones of different classes.
pub fn min_cross_class_mel_gap(signatures: &[ClassSignature]) -> f64 {
    let mut gap = f64::INFINITY;
    for (i, a) in signatures.iter().enumerate() {
        for b in &signatures[i + 1..] {
            for ta in &a.tones {
                for tb in &b.tones {
                    gap = gap.min((hz_to_mel(ta.freq_hz) - hz_to_mel(tb.freq_hz)).abs());
                }
            }
        }
    }
    gap
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::corpus::{load_manifest, speaker_disjoint_split, SplitFractions};
    use crate::dataset::load_clip;
    use crate::features::{mel_centres, MelConfig, MelExtractor};

    #[test]
    fn default_signatures_are_at_least_three_filters_apart() {
        let c = MelConfig::default();
        let centres = mel_centres(c.n_mels, c.f_min, c.f_max);
        let spacing = hz_to_mel(centres[1]) - hz_to_mel(centres[0]);
        assert!(min_cross_class_mel_gap(&default_signatures()) >= 3.0 * spacing);
        SynthSpec::new(5, 1, 1, 0).validate().unwrap();
    }

    #[test]
    fn invalid_specs_are_rejected() {
        let mut s = SynthSpec::new(3, 2, 2, 0);
        s.class_signatures[1].tones = s.class_signatures[0].tones.clone();
        assert!(s.validate().is_err());
        let mut s = SynthSpec::new(3, 2, 2, 0);
        s.class_signatures[0].tones[0].freq_hz = 8000.0;
        assert!(s.validate().is_err());
        assert!(SynthSpec::new(1, 2, 2, 0).validate().is_err());
    }

    #[test]
    fn corpus_counts_determinism_and_validity() {
        let a = tempfile::tempdir().unwrap();
        let b = tempfile::tempdir().unwrap();
        let spec = SynthSpec::new(3, 3, 2, 11);
        let m = generate(&spec, a.path()).unwrap();
        generate(&spec, b.path()).unwrap();
        assert_eq!(m.len(), 18);
        let speakers: std::collections::BTreeSet<_> = m.records.iter().map(|r| &r.speaker_id).collect();
        assert_eq!(speakers.len(), 9);
        for r in &m.records {
            let x = std::fs::read(a.path().join(&r.path)).unwrap();
            let y = std::fs::read(b.path().join(&r.path)).unwrap();
            assert_eq!(x, y);
            let clip = load_clip(&a.path().join(&r.path)).unwrap();
            let secs = clip.duration_secs();
            assert!((MIN_SECONDS..=MAX_SECONDS + 1e-3).contains(&secs));
        }
        let loaded = load_manifest(&a.path().join(MANIFEST_FILE)).unwrap();
        assert_eq!(loaded.records, m.records);
        speaker_disjoint_split(&loaded, SplitFractions::default(), 1).unwrap();
    }

    #[test]
    fn noise_sits_twenty_db_below_the_tones() {
        let sig = &default_signatures()[0];
        let noisy = synthesize(sig, 1, 2);
        // the same tones without noise, rebuilt independently
        let mut speaker = ChaCha8Rng::seed_from_u64(1);
        let phases: Vec<(f64, f64)> = sig
            .tones
            .iter()
            .map(|_| {
                (
                    speaker.random_range(0.0..std::f64::consts::TAU),
                    speaker.random_range(0.0..std::f64::consts::TAU),
                )
            })
            .collect();
        let clean: Vec<f64> = (0..noisy.len())
            .map(|i| {
                let t = i as f64 / 16_000.0;
                sig.tones
                    .iter()
                    .zip(&phases)
                    .enumerate()
                    .map(|(j, (tone, (c, a)))| {
                        (1.0 + tone.depth * (std::f64::consts::TAU * AM_RATE_HZ * t + a).sin())
                            * (std::f64::consts::TAU * tone.freq_hz * t + c).sin()
                            / (j + 1) as f64
                    })
                    .sum()
            })
            .collect();
        // least-squares gain between clean and noisy, then residual power
        let gain = noisy.samples.iter().zip(&clean).map(|(a, b)| a * b).sum::<f64>()
            / clean.iter().map(|b| b * b).sum::<f64>();
        let p_sig = clean.iter().map(|b| (gain * b).powi(2)).sum::<f64>();
        let p_noise = noisy.samples.iter().zip(&clean).map(|(a, b)| (a - gain * b).powi(2)).sum::<f64>();
        let snr = 10.0 * (p_sig / p_noise).log10();
        assert!((snr - 20.0).abs() < 0.5, "snr {snr}");
    }

    #[test]
    fn classes_separate_in_the_mel_argmax() {
        let mel = MelExtractor::new(MelConfig::default()).unwrap();
        let sigs = default_signatures();
        let argmaxes: Vec<Vec<usize>> = sigs
            .iter()
            .enumerate()
            .map(|(k, s)| {
                let seq = mel.compute(&synthesize(s, 100 + k as u64, 200 + k as u64)).unwrap();
                seq.frames()
                    .map(|f| f.iter().enumerate().fold(0, |b, (i, v)| if *v > f[b] { i } else { b }))
                    .collect()
            })
            .collect();
        for i in 0..sigs.len() {
            for j in i + 1..sigs.len() {
                let n = argmaxes[i].len().min(argmaxes[j].len());
                let differ = (0..n).filter(|&t| argmaxes[i][t] != argmaxes[j][t]).count();
                assert!(differ as f64 > 0.9 * n as f64, "{i} vs {j}: {differ}/{n}");
            }
        }
    }

    #[test]
    fn nearest_class_mean_separates_the_corpus() {
        let dir = tempfile::tempdir().unwrap();
        let m = generate(&SynthSpec::new(3, 4, 3, 5), dir.path()).unwrap();
        let mel = MelExtractor::new(MelConfig::default()).unwrap();
        let avg: Vec<(usize, Vec<f64>)> = m
            .records
            .iter()
            .map(|r| {
                let seq = mel.compute(&load_clip(&dir.path().join(&r.path)).unwrap()).unwrap();
                let mut a = vec![0.0; seq.n_channels];
                for f in seq.frames() {
                    for (x, v) in a.iter_mut().zip(f) {
                        *x += v / seq.n_frames as f64;
                    }
                }
                (m.class_index(r.accent).unwrap(), a)
            })
            .collect();
        // class means from the first two speakers, scored on the rest
        let is_fit = |i: usize| (i / 3) % 4 < 2;
        let mut means = vec![vec![0.0; 80]; 3];
        let mut counts = [0.0; 3];
        for (_, (k, a)) in avg.iter().enumerate().filter(|(i, _)| is_fit(*i)) {
            counts[*k] += 1.0;
            for (x, v) in means[*k].iter_mut().zip(a) {
                *x += v;
            }
        }
        for (k, mean) in means.iter_mut().enumerate() {
            mean.iter_mut().for_each(|x| *x /= counts[k]);
        }
        let held: Vec<_> = avg.iter().enumerate().filter(|(i, _)| !is_fit(*i)).collect();
        let correct = held
            .iter()
            .filter(|(_, (k, a))| {
                let d = |mean: &Vec<f64>| mean.iter().zip(a).map(|(x, y)| (x - y).powi(2)).sum::<f64>();
                (0..3).min_by(|&p, &q| d(&means[p]).total_cmp(&d(&means[q]))).unwrap() == *k
            })
            .count();
        assert!(correct as f64 > 0.9 * held.len() as f64);
    }

    #[test]
    fn feature_corpus_has_imbalanced_scales() {
        let dir = tempfile::tempdir().unwrap();
        let spec = FeatureCorpusSpec {
            speakers_per_class: 3,
            utterances_per_speaker: 2,
            ..FeatureCorpusSpec::default()
        };
        let m = generate_features(&spec, dir.path()).unwrap();
        assert_eq!(m.len(), 18);
        let scales = channel_scales(16, (0.01, 100.0), spec.seed);
        assert!(scales.iter().all(|s| (0.01..=100.0).contains(s)));
        let hi = scales.iter().cloned().fold(0.0, f64::max);
        let lo = scales.iter().cloned().fold(f64::INFINITY, f64::min);
        assert!(hi / lo > 100.0);
        let store = crate::dataset::FeatureStore::sft1(dir.path(), FeatureKind::External);
        let seq = store.load(&m.records[0]).unwrap();
        assert_eq!(seq.n_channels, 16);
        assert_eq!(seq.frame_rate_hz, 50.0);
    }
}
