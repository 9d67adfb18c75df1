//! Latent feature sequences: the log-mel frontend, the SFT1 file format for
//! externally computed frontends, and fixed-length chunk sampling.

use std::path::Path;
use std::sync::Arc;

use rand::Rng;
use rustfft::{num_complex::Complex, Fft, FftPlanner};
use serde::{Deserialize, Serialize};

use crate::audio::{AudioClip, FEATURE_RATE_HZ};
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FeatureKind {
    Mel,
    External,
}

impl FeatureKind {
    pub fn as_str(self) -> &'static str {
        match self {
            FeatureKind::Mel => "mel",
            FeatureKind::External => "external",
        }
    }
}

impl std::str::FromStr for FeatureKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "mel" => Ok(FeatureKind::Mel),
            "external" => Ok(FeatureKind::External),
            _ => Err(Error::Argument(format!("unknown frontend {s:?}"))),
        }
    }
}

/// A `frames × channels` matrix stored time-major.
#[derive(Debug, Clone, PartialEq)]
pub struct FeatureSequence {
    pub data: Vec<f64>,
    pub n_frames: usize,
    pub n_channels: usize,
    pub frame_rate_hz: f64,
    pub kind: FeatureKind,
}

impl FeatureSequence {
    pub fn new(
        data: Vec<f64>,
        n_frames: usize,
        n_channels: usize,
        frame_rate_hz: f64,
        kind: FeatureKind,
    ) -> Result<Self> {
        if n_frames == 0 || n_channels == 0 {
            return Err(Error::Shape("feature sequence needs at least one frame and channel".into()));
        }
        if data.len() != n_frames * n_channels {
            return Err(Error::Shape(format!(
                "{} values for {n_frames}×{n_channels}",
                data.len()
            )));
        }
        if data.iter().any(|v| !v.is_finite()) {
            return Err(Error::Numeric("non-finite feature value".into()));
        }
        Ok(Self {
            data,
            n_frames,
            n_channels,
            frame_rate_hz,
            kind,
        })
    }

    pub fn frame(&self, t: usize) -> &[f64] {
        &self.data[t * self.n_channels..(t + 1) * self.n_channels]
    }

    pub fn frames(&self) -> impl Iterator<Item = &[f64]> {
        self.data.chunks_exact(self.n_channels)
    }
}

/// HTK mel scale.
pub fn hz_to_mel(hz: f64) -> f64 {
    2595.0 * (1.0 + hz / 700.0).log10()
}

pub fn mel_to_hz(mel: f64) -> f64 {
    700.0 * (10f64.powf(mel / 2595.0) - 1.0)
}

#[derive(Debug, Clone, PartialEq)]
pub struct MelConfig {
    pub sample_rate: u32,
    pub win_length: usize,
    pub hop_length: usize,
    pub n_fft: usize,
    pub n_mels: usize,
    pub f_min: f64,
    pub f_max: f64,
    /// Floor applied to each power-spectrum bin before the filterbank.
    pub power_floor: f64,
}

impl Default for MelConfig {
    /// 25 ms Hann window, 10 ms hop, 512-point FFT, 80 bands over 0–8 kHz.
    fn default() -> Self {
        Self {
            sample_rate: FEATURE_RATE_HZ,
            win_length: 400,
            hop_length: 160,
            n_fft: 512,
            n_mels: 80,
            f_min: 0.0,
            f_max: 8000.0,
            power_floor: 1e-10,
        }
    }
}

impl MelConfig {
    pub fn frame_rate_hz(&self) -> f64 {
        self.sample_rate as f64 / self.hop_length as f64
    }

    /// Number of frames produced for `n_samples` input samples.
    pub fn n_frames(&self, n_samples: usize) -> usize {
        if n_samples < self.win_length {
            0
        } else {
            1 + (n_samples - self.win_length) / self.hop_length
        }
    }
}

/// Triangular mel filterbank, `n_mels` rows of `n_fft / 2 + 1` weights.
///
/// Peaks sit at `n_mels + 2` points equally spaced on the mel scale between
/// `f_min` and `f_max` (the two outer points are the band edges). Weights
/// are the unnormalized triangle evaluated at each bin's centre frequency.
pub fn mel_filterbank(
    n_fft: usize,
    n_mels: usize,
    f_min: f64,
    f_max: f64,
    sample_rate: u32,
) -> Result<Vec<Vec<f64>>> {
    if n_fft < 2 || n_mels == 0 {
        return Err(Error::Config("n_fft must be ≥ 2 and n_mels ≥ 1".into()));
    }
    if !(f_min >= 0.0 && f_min < f_max && f_max <= sample_rate as f64 / 2.0) {
        return Err(Error::Config(format!(
            "need 0 ≤ f_min < f_max ≤ {}, got {f_min}..{f_max}",
            sample_rate as f64 / 2.0
        )));
    }
    let n_bins = n_fft / 2 + 1;
    let (mel_lo, mel_hi) = (hz_to_mel(f_min), hz_to_mel(f_max));
    let edges: Vec<f64> = (0..n_mels + 2)
        .map(|i| mel_to_hz(mel_lo + (mel_hi - mel_lo) * i as f64 / (n_mels + 1) as f64))
        .collect();
    let bin_hz = sample_rate as f64 / n_fft as f64;

    let mut bank = Vec::with_capacity(n_mels);
    for j in 0..n_mels {
        let (lo, centre, hi) = (edges[j], edges[j + 1], edges[j + 2]);
        let row: Vec<f64> = (0..n_bins)
            .map(|k| {
                let f = k as f64 * bin_hz;
                if f > lo && f <= centre {
                    (f - lo) / (centre - lo)
                } else if f > centre && f < hi {
                    (hi - f) / (hi - centre)
                } else {
                    0.0
                }
            })
            .collect();
        if row.iter().all(|&w| w == 0.0) {
            return Err(Error::Config(format!(
                "mel filter {j} ({lo:.1}–{hi:.1} Hz) covers no FFT bin; lower n_mels or raise n_fft"
            )));
        }
        bank.push(row);
    }
    Ok(bank)
}

/// Centre frequencies (Hz) of the filters built by [`mel_filterbank`].
pub fn mel_centres(n_mels: usize, f_min: f64, f_max: f64) -> Vec<f64> {
    let (lo, hi) = (hz_to_mel(f_min), hz_to_mel(f_max));
    (1..=n_mels)
        .map(|i| mel_to_hz(lo + (hi - lo) * i as f64 / (n_mels + 1) as f64))
        .collect()
}

struct SparseFilter {
    start: usize,
    weights: Vec<f64>,
}

/// Log-mel spectrogram extractor with precomputed window, plan and filters.
pub struct MelExtractor {
    config: MelConfig,
    window: Vec<f64>,
    filters: Vec<SparseFilter>,
    fft: Arc<dyn Fft<f64>>,
}

impl MelExtractor {
    pub fn new(config: MelConfig) -> Result<Self> {
        if config.win_length == 0 || config.win_length > config.n_fft || config.hop_length == 0 {
            return Err(Error::Config(
                "need 0 < win_length ≤ n_fft and hop_length > 0".into(),
            ));
        }
        let bank = mel_filterbank(
            config.n_fft,
            config.n_mels,
            config.f_min,
            config.f_max,
            config.sample_rate,
        )?;
        let filters = bank
            .into_iter()
            .map(|row| {
                let start = row.iter().position(|&w| w > 0.0).unwrap();
                let end = row.iter().rposition(|&w| w > 0.0).unwrap() + 1;
                SparseFilter {
                    start,
                    weights: row[start..end].to_vec(),
                }
            })
            .collect();
        // periodic Hann
        let window = (0..config.win_length)
            .map(|i| {
                0.5 - 0.5
                    * (2.0 * std::f64::consts::PI * i as f64 / config.win_length as f64).cos()
            })
            .collect();
        let fft = FftPlanner::new().plan_fft_forward(config.n_fft);
        Ok(Self {
            config,
            window,
            filters,
            fft,
        })
    }

    pub fn config(&self) -> &MelConfig {
        &self.config
    }

    /// Hann window → power spectrum (floored) → filterbank → natural log.
    pub fn compute(&self, clip: &AudioClip) -> Result<FeatureSequence> {
        let cfg = &self.config;
        if clip.sample_rate_hz != cfg.sample_rate {
            return Err(Error::Argument(format!(
                "mel frontend expects {} Hz audio, got {} Hz",
                cfg.sample_rate, clip.sample_rate_hz
            )));
        }
        let n_frames = cfg.n_frames(clip.len());
        if n_frames == 0 {
            return Err(Error::TooShort(format!(
                "{} samples is shorter than one {}-sample window",
                clip.len(),
                cfg.win_length
            )));
        }
        let n_bins = cfg.n_fft / 2 + 1;
        let mut data = Vec::with_capacity(n_frames * cfg.n_mels);
        let mut buf = vec![Complex::new(0.0, 0.0); cfg.n_fft];
        let mut scratch = vec![Complex::new(0.0, 0.0); self.fft.get_inplace_scratch_len()];
        let mut power = vec![0.0; n_bins];
        for t in 0..n_frames {
            let frame = &clip.samples[t * cfg.hop_length..t * cfg.hop_length + cfg.win_length];
            for (b, (s, w)) in buf.iter_mut().zip(frame.iter().zip(&self.window)) {
                *b = Complex::new(s * w, 0.0);
            }
            buf[cfg.win_length..].fill(Complex::new(0.0, 0.0));
            self.fft.process_with_scratch(&mut buf, &mut scratch);
            for (p, c) in power.iter_mut().zip(&buf) {
                *p = c.norm_sqr().max(cfg.power_floor);
            }
            for f in &self.filters {
                let e: f64 = f
                    .weights
                    .iter()
                    .zip(&power[f.start..])
                    .map(|(w, p)| w * p)
                    .sum();
                data.push(e.ln());
            }
        }
        FeatureSequence::new(
            data,
            n_frames,
            cfg.n_mels,
            cfg.frame_rate_hz(),
            FeatureKind::Mel,
        )
    }
}

/// One-shot log-mel spectrogram with the given configuration.
pub fn mel_spectrogram(clip: &AudioClip, config: &MelConfig) -> Result<FeatureSequence> {
    MelExtractor::new(config.clone())?.compute(clip)
}

pub const SFT1_MAGIC: &[u8; 4] = b"SFT1";

/// Serializes to SFT1: magic, u32 frames, u32 channels, f32 frame rate,
/// then `frames * channels` f32 values, all little-endian.
pub fn encode_sft1(seq: &FeatureSequence) -> Vec<u8> {
    let mut out = Vec::with_capacity(16 + 4 * seq.data.len());
    out.extend_from_slice(SFT1_MAGIC);
    out.extend_from_slice(&(seq.n_frames as u32).to_le_bytes());
    out.extend_from_slice(&(seq.n_channels as u32).to_le_bytes());
    out.extend_from_slice(&(seq.frame_rate_hz as f32).to_le_bytes());
    for v in &seq.data {
        out.extend_from_slice(&(*v as f32).to_le_bytes());
    }
    out
}

pub fn decode_sft1(bytes: &[u8], kind: FeatureKind) -> Result<FeatureSequence> {
    if bytes.len() < 16 || &bytes[0..4] != SFT1_MAGIC {
        return Err(Error::Format("missing SFT1 magic".into()));
    }
    let word = |i: usize| u32::from_le_bytes(bytes[i..i + 4].try_into().unwrap());
    let (n_frames, n_channels) = (word(4) as usize, word(8) as usize);
    let frame_rate = f32::from_le_bytes(bytes[12..16].try_into().unwrap()) as f64;
    let expected = n_frames
        .checked_mul(n_channels)
        .and_then(|n| n.checked_mul(4))
        .ok_or_else(|| Error::Format("SFT1 dimensions overflow".into()))?;
    let payload = &bytes[16..];
    if payload.len() != expected {
        return Err(Error::Format(format!(
            "SFT1 payload is {} bytes, header implies {expected} ({n_frames}×{n_channels} f32)",
            payload.len()
        )));
    }
    if !(frame_rate.is_finite() && frame_rate > 0.0) {
        return Err(Error::Format(format!("bad frame rate {frame_rate}")));
    }
    let data: Vec<f64> = payload
        .chunks_exact(4)
        .map(|c| f32::from_le_bytes(c.try_into().unwrap()) as f64)
        .collect();
    if data.iter().any(|v| !v.is_finite()) {
        return Err(Error::Format("SFT1 payload contains non-finite values".into()));
    }
    FeatureSequence::new(data, n_frames, n_channels, frame_rate, kind)
        .map_err(|e| Error::Format(e.to_string()))
}

pub fn write_sft1(path: &Path, seq: &FeatureSequence) -> Result<()> {
    if let Some(parent) = path.parent() {
        std::fs::create_dir_all(parent).map_err(|e| Error::io(parent, e))?;
    }
    std::fs::write(path, encode_sft1(seq)).map_err(|e| Error::io(path, e))
}

/// Reads precomputed frontend features; the result is tagged `External`.
pub fn load_external_features(path: &Path) -> Result<FeatureSequence> {
    let bytes = std::fs::read(path).map_err(|e| Error::io(path, e))?;
    decode_sft1(&bytes, FeatureKind::External)
}

/// Contiguous `seconds`-long slice with a uniformly drawn start; short clips
/// are zero-padded at the end. Exactly one draw is taken from `rng`.
pub fn random_chunk<R: Rng + ?Sized>(clip: &AudioClip, seconds: f64, rng: &mut R) -> Result<AudioClip> {
    if !(seconds > 0.0) {
        return Err(Error::Argument("chunk length must be positive".into()));
    }
    let len = (seconds * clip.sample_rate_hz as f64).round() as usize;
    let offset = rng.random_range(0..=clip.len().saturating_sub(len));
    Ok(AudioClip {
        samples: slice_padded(&clip.samples, offset, len),
        sample_rate_hz: clip.sample_rate_hz,
    })
}

/// Frame-domain counterpart of [`random_chunk`] for precomputed features.
pub fn random_frame_chunk<R: Rng + ?Sized>(
    seq: &FeatureSequence,
    seconds: f64,
    rng: &mut R,
) -> Result<FeatureSequence> {
    if !(seconds > 0.0) {
        return Err(Error::Argument("chunk length must be positive".into()));
    }
    let len = ((seconds * seq.frame_rate_hz).round() as usize).max(1);
    let offset = rng.random_range(0..=seq.n_frames.saturating_sub(len));
    Ok(frame_chunk_at(seq, offset, len))
}

/// `len` frames starting at `offset`, zero-padded past the end.
pub fn frame_chunk_at(seq: &FeatureSequence, offset: usize, len: usize) -> FeatureSequence {
    let n = seq.n_channels;
    let mut data = vec![0.0; len * n];
    let available = seq.n_frames.saturating_sub(offset).min(len);
    data[..available * n].copy_from_slice(&seq.data[offset * n..(offset + available) * n]);
    FeatureSequence {
        data,
        n_frames: len,
        n_channels: n,
        frame_rate_hz: seq.frame_rate_hz,
        kind: seq.kind,
    }
}

pub(crate) fn slice_padded(samples: &[f64], offset: usize, len: usize) -> Vec<f64> {
    let mut out = vec![0.0; len];
    let available = samples.len().saturating_sub(offset).min(len);
    out[..available].copy_from_slice(&samples[offset..offset + available]);
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn sine(freq: f64, amp: f64, n: usize) -> AudioClip {
        AudioClip {
            samples: (0..n)
                .map(|i| amp * (2.0 * std::f64::consts::PI * freq * i as f64 / 16_000.0).sin())
                .collect(),
            sample_rate_hz: 16_000,
        }
    }

    fn default_bank() -> Vec<Vec<f64>> {
        mel_filterbank(512, 80, 0.0, 8000.0, 16_000).unwrap()
    }

    #[test]
    fn filterbank_is_nonnegative_contiguous_and_unimodal() {
        let bank = default_bank();
        assert_eq!(bank.len(), 80);
        for row in &bank {
            assert_eq!(row.len(), 257);
            assert!(row.iter().all(|&w| w >= 0.0));
            let first = row.iter().position(|&w| w > 0.0).unwrap();
            let last = row.iter().rposition(|&w| w > 0.0).unwrap();
            assert!(row[first..=last].iter().all(|&w| w > 0.0), "gap in support");
            let max = row.iter().cloned().fold(0.0, f64::max);
            assert_eq!(row.iter().filter(|&&w| w == max).count(), 1);
        }
    }

    #[test]
    fn filter_centres_follow_mel_spacing() {
        // Oracle: equally spaced points under mel(f) = 2595 log10(1 + f/700),
        // computed directly rather than through mel_centres.
        let top = 2595.0 * (1.0f64 + 8000.0 / 700.0).log10();
        let bank = default_bank();
        let mut prev = -1.0;
        for (j, row) in bank.iter().enumerate() {
            let m = top * (j + 1) as f64 / 81.0;
            let expected_hz = 700.0 * (10f64.powf(m / 2595.0) - 1.0);
            let argmax = row
                .iter()
                .enumerate()
                .fold((0, 0.0), |a, (k, &w)| if w > a.1 { (k, w) } else { a })
                .0;
            let hz = argmax as f64 * 16_000.0 / 512.0;
            assert!((hz - expected_hz).abs() <= 31.25, "filter {j}: {hz} vs {expected_hz}");
            assert!(hz >= prev);
            prev = hz;
        }
    }

    #[test]
    fn filterbank_rejects_empty_filters_and_bad_ranges() {
        assert!(matches!(
            mel_filterbank(64, 80, 0.0, 8000.0, 16_000),
            Err(Error::Config(_))
        ));
        assert!(matches!(
            mel_filterbank(512, 80, 0.0, 9000.0, 16_000),
            Err(Error::Config(_))
        ));
        assert!(matches!(
            mel_filterbank(512, 80, 500.0, 500.0, 16_000),
            Err(Error::Config(_))
        ));
    }

    #[test]
    fn three_seconds_gives_298_frames() {
        let s = mel_spectrogram(&sine(440.0, 0.5, 48_000), &MelConfig::default()).unwrap();
        assert_eq!(s.n_frames, 298);
        assert_eq!(s.n_channels, 80);
        assert_eq!(s.frame_rate_hz, 100.0);
        assert_eq!(s.kind, FeatureKind::Mel);
    }

    #[test]
    fn silent_input_hits_the_floor_per_channel() {
        let silent = AudioClip {
            samples: vec![0.0; 4000],
            sample_rate_hz: 16_000,
        };
        let s = mel_spectrogram(&silent, &MelConfig::default()).unwrap();
        let bank = default_bank();
        for (c, row) in bank.iter().enumerate() {
            let expected = (1e-10 * row.iter().sum::<f64>()).ln();
            for t in 0..s.n_frames {
                assert!((s.frame(t)[c] - expected).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn tone_peaks_in_nearest_filter() {
        let centres = mel_centres(80, 0.0, 8000.0);
        let nearest = centres
            .iter()
            .enumerate()
            .min_by(|a, b| (a.1 - 1000.0).abs().partial_cmp(&(b.1 - 1000.0).abs()).unwrap())
            .unwrap()
            .0;
        let s = mel_spectrogram(&sine(1000.0, 1.0, 16_000), &MelConfig::default()).unwrap();
        for frame in s.frames() {
            let argmax = frame
                .iter()
                .enumerate()
                .max_by(|a, b| a.1.partial_cmp(b.1).unwrap())
                .unwrap()
                .0;
            assert_eq!(argmax, nearest);
        }
    }

    #[test]
    fn one_hop_shift_moves_one_frame() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let base: Vec<f64> = (0..8000).map(|_| rng.random_range(-0.5..0.5)).collect();
        let a = AudioClip {
            samples: base[160..].to_vec(),
            sample_rate_hz: 16_000,
        };
        let b = AudioClip {
            samples: base,
            sample_rate_hz: 16_000,
        };
        let cfg = MelConfig::default();
        let (sa, sb) = (mel_spectrogram(&a, &cfg).unwrap(), mel_spectrogram(&b, &cfg).unwrap());
        for t in 0..sa.n_frames {
            for (x, y) in sa.frame(t).iter().zip(sb.frame(t + 1)) {
                assert!((x - y).abs() < 1e-6);
            }
        }
    }

    #[test]
    fn white_noise_varies_in_every_channel() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let clip = AudioClip {
            samples: (0..16_000).map(|_| rng.random_range(-0.3..0.3)).collect(),
            sample_rate_hz: 16_000,
        };
        let s = mel_spectrogram(&clip, &MelConfig::default()).unwrap();
        for c in 0..80 {
            let col: Vec<f64> = s.frames().map(|f| f[c]).collect();
            let mean = col.iter().sum::<f64>() / col.len() as f64;
            let var = col.iter().map(|v| (v - mean).powi(2)).sum::<f64>();
            assert!(var > 0.0, "channel {c} constant");
        }
    }

    #[test]
    fn mel_rejects_short_or_wrong_rate() {
        let short = sine(100.0, 0.1, 399);
        assert!(matches!(
            mel_spectrogram(&short, &MelConfig::default()),
            Err(Error::TooShort(_))
        ));
        let wrong = AudioClip {
            samples: vec![0.0; 1000],
            sample_rate_hz: 48_000,
        };
        assert!(mel_spectrogram(&wrong, &MelConfig::default()).is_err());
    }

    #[test]
    fn sft1_layout_and_errors() {
        let mut bytes = SFT1_MAGIC.to_vec();
        bytes.extend(2u32.to_le_bytes());
        bytes.extend(3u32.to_le_bytes());
        bytes.extend(50f32.to_le_bytes());
        for v in 0..6 {
            bytes.extend((v as f32).to_le_bytes());
        }
        let s = decode_sft1(&bytes, FeatureKind::External).unwrap();
        assert_eq!((s.n_frames, s.n_channels), (2, 3));
        assert_eq!(s.frame(1), &[3.0, 4.0, 5.0]);
        assert_eq!(encode_sft1(&s), bytes);

        let truncated = &bytes[..bytes.len() - 4];
        assert!(matches!(decode_sft1(truncated, FeatureKind::External), Err(Error::Format(_))));

        let mut bad_magic = bytes.clone();
        bad_magic[0] = b'X';
        assert!(matches!(decode_sft1(&bad_magic, FeatureKind::External), Err(Error::Format(_))));

        let mut nan = bytes.clone();
        let at = nan.len() - 4;
        nan[at..].copy_from_slice(&f32::NAN.to_le_bytes());
        assert!(matches!(decode_sft1(&nan, FeatureKind::External), Err(Error::Format(_))));
    }

    #[test]
    fn chunk_exact_and_padded() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let exact = sine(200.0, 0.5, 48_000);
        assert_eq!(random_chunk(&exact, 3.0, &mut rng).unwrap(), exact);

        let short = sine(200.0, 0.5, 16_000);
        let c = random_chunk(&short, 3.0, &mut rng).unwrap();
        assert_eq!(c.len(), 48_000);
        assert_eq!(&c.samples[..16_000], &short.samples[..]);
        assert!(c.samples[16_000..].iter().all(|&s| s == 0.0));
    }

    #[test]
    fn chunk_offset_is_seed_deterministic() {
        let long = AudioClip {
            samples: (0..160_000).map(|i| (i as f64 / 160_000.0) - 0.5).collect(),
            sample_rate_hz: 16_000,
        };
        let a = random_chunk(&long, 3.0, &mut ChaCha8Rng::seed_from_u64(77)).unwrap();
        let b = random_chunk(&long, 3.0, &mut ChaCha8Rng::seed_from_u64(77)).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn chunk_offsets_are_uniform() {
        // ramp encodes the offset in the first sample
        let n = 16_000 + 9_999;
        let ramp = AudioClip {
            samples: (0..n).map(|i| i as f64 / n as f64).collect(),
            sample_rate_hz: 16_000,
        };
        let mut rng = ChaCha8Rng::seed_from_u64(2024);
        let mut bins = [0usize; 10];
        let draws = 10_000;
        for _ in 0..draws {
            let c = random_chunk(&ramp, 1.0, &mut rng).unwrap();
            let offset = (c.samples[0] * n as f64).round() as usize;
            bins[offset * 10 / 10_000] += 1;
        }
        let expected = draws as f64 / 10.0;
        let chi2: f64 = bins.iter().map(|&o| (o as f64 - expected).powi(2) / expected).sum();
        // χ²(9) critical value at α = 0.01
        assert!(chi2 < 21.666, "chi2 = {chi2}");
    }

    #[test]
    fn frame_chunk_pads() {
        let seq = FeatureSequence::new(vec![1.0; 20], 10, 2, 100.0, FeatureKind::External).unwrap();
        let c = random_frame_chunk(&seq, 0.3, &mut ChaCha8Rng::seed_from_u64(0)).unwrap();
        assert_eq!(c.n_frames, 30);
        assert!(c.data[..20].iter().all(|&v| v == 1.0));
        assert!(c.data[20..].iter().all(|&v| v == 0.0));
    }
}
