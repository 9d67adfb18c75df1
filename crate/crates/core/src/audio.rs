//! Mono PCM audio: WAV codec and the curation DSP applied to raw recordings
//! (peak normalization, silence trimming, resampling).
//!
//! All processing is done in `f64`; files are 16-bit PCM.

use std::io::Cursor;
use std::path::Path;

use crate::error::{Error, Result};

/// Rate the feature frontend expects.
pub const FEATURE_RATE_HZ: u32 = 16_000;

/// Mono waveform with amplitudes in [-1, 1].
#[derive(Debug, Clone, PartialEq)]
pub struct AudioClip {
    pub samples: Vec<f64>,
    pub sample_rate_hz: u32,
}

impl AudioClip {
    pub fn new(samples: Vec<f64>, sample_rate_hz: u32) -> Result<Self> {
        if sample_rate_hz == 0 {
            return Err(Error::Argument("sample rate must be positive".into()));
        }
        if let Some(s) = samples.iter().find(|s| !(s.abs() <= 1.0)) {
            return Err(Error::Argument(format!("sample {s} outside [-1, 1]")));
        }
        Ok(Self {
            samples,
            sample_rate_hz,
        })
    }

    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }

    pub fn duration_secs(&self) -> f64 {
        self.samples.len() as f64 / self.sample_rate_hz as f64
    }

    pub fn peak(&self) -> f64 {
        self.samples.iter().fold(0.0_f64, |m, s| m.max(s.abs()))
    }
}

fn map_hound(e: hound::Error) -> Error {
    match e {
        hound::Error::Unsupported => Error::UnsupportedFormat("unsupported WAV encoding".into()),
        other => Error::Format(other.to_string()),
    }
}

/// Decodes a mono 16-bit PCM RIFF/WAVE byte stream.
pub fn decode_wav(bytes: &[u8]) -> Result<AudioClip> {
    let mut reader = hound::WavReader::new(Cursor::new(bytes)).map_err(map_hound)?;
    let spec = reader.spec();
    if spec.sample_format != hound::SampleFormat::Int {
        return Err(Error::UnsupportedFormat("only integer PCM is supported".into()));
    }
    if spec.channels != 1 {
        return Err(Error::UnsupportedFormat(format!(
            "expected 1 channel, found {}",
            spec.channels
        )));
    }
    if spec.bits_per_sample != 16 {
        return Err(Error::UnsupportedFormat(format!(
            "expected 16-bit samples, found {}",
            spec.bits_per_sample
        )));
    }
    let samples = reader
        .samples::<i16>()
        .map(|s| s.map(|v| v as f64 / 32768.0))
        .collect::<std::result::Result<Vec<_>, _>>()
        .map_err(map_hound)?;
    if samples.is_empty() {
        return Err(Error::Format("WAV contains no samples".into()));
    }
    if spec.sample_rate == 0 {
        return Err(Error::Format("sample rate of 0 in header".into()));
    }
    Ok(AudioClip {
        samples,
        sample_rate_hz: spec.sample_rate,
    })
}

fn quantize(s: f64) -> i16 {
    (s * 32768.0).round().clamp(-32768.0, 32767.0) as i16
}

/// Encodes as mono 16-bit PCM with the canonical 44-byte header.
pub fn encode_wav(clip: &AudioClip) -> Result<Vec<u8>> {
    let spec = hound::WavSpec {
        channels: 1,
        sample_rate: clip.sample_rate_hz,
        bits_per_sample: 16,
        sample_format: hound::SampleFormat::Int,
    };
    let mut buf = Cursor::new(Vec::with_capacity(44 + 2 * clip.len()));
    {
        let mut writer = hound::WavWriter::new(&mut buf, spec).map_err(map_hound)?;
        let mut w16 = writer.get_i16_writer(clip.len() as u32);
        for &s in &clip.samples {
            w16.write_sample(quantize(s));
        }
        w16.flush().map_err(map_hound)?;
        writer.finalize().map_err(map_hound)?;
    }
    Ok(buf.into_inner())
}

pub fn read_wav(path: &Path) -> Result<AudioClip> {
    let bytes = std::fs::read(path).map_err(|e| Error::io(path, e))?;
    decode_wav(&bytes)
}

pub fn write_wav(path: &Path, clip: &AudioClip) -> Result<()> {
    let bytes = encode_wav(clip)?;
    if let Some(parent) = path.parent() {
        std::fs::create_dir_all(parent).map_err(|e| Error::io(parent, e))?;
    }
    std::fs::write(path, bytes).map_err(|e| Error::io(path, e))
}

pub fn dbfs_to_amplitude(dbfs: f64) -> f64 {
    10f64.powf(dbfs / 20.0)
}

/// Scales the clip so its largest absolute sample sits at `target_dbfs`.
pub fn peak_normalize(clip: &AudioClip, target_dbfs: f64) -> Result<AudioClip> {
    let peak = clip.peak();
    if peak == 0.0 {
        return Err(Error::DegenerateSignal("cannot normalize an all-zero clip".into()));
    }
    let target = dbfs_to_amplitude(target_dbfs);
    if target > 1.0 {
        return Err(Error::Argument(format!(
            "target {target_dbfs} dBFS exceeds full scale"
        )));
    }
    let gain = target / peak;
    Ok(AudioClip {
        samples: clip.samples.iter().map(|s| s * gain).collect(),
        sample_rate_hz: clip.sample_rate_hz,
    })
}

/// Removes leading and trailing frames whose RMS is below `threshold_dbfs`.
///
/// Frames are `frame_ms` long, laid out from sample 0 without overlap; the
/// last frame may be partial. The kept region always starts on a frame
/// boundary, which makes the operation idempotent.
pub fn trim_silence(clip: &AudioClip, threshold_dbfs: f64, frame_ms: f64) -> Result<AudioClip> {
    if !(frame_ms > 0.0) {
        return Err(Error::Argument("frame_ms must be positive".into()));
    }
    let frame_len = ((frame_ms * clip.sample_rate_hz as f64 / 1000.0).round() as usize).max(1);
    let threshold = dbfs_to_amplitude(threshold_dbfs);
    let loud: Vec<bool> = clip
        .samples
        .chunks(frame_len)
        .map(|f| (f.iter().map(|s| s * s).sum::<f64>() / f.len() as f64).sqrt() >= threshold)
        .collect();
    let first = loud.iter().position(|&l| l);
    let last = loud.iter().rposition(|&l| l);
    match (first, last) {
        (Some(a), Some(b)) => {
            let start = a * frame_len;
            let end = ((b + 1) * frame_len).min(clip.len());
            Ok(AudioClip {
                samples: clip.samples[start..end].to_vec(),
                sample_rate_hz: clip.sample_rate_hz,
            })
        }
        _ => Err(Error::DegenerateSignal(format!(
            "every frame is below {threshold_dbfs} dBFS"
        ))),
    }
}

/// Zero crossings of the interpolation kernel on each side, counted at the
/// lower of the two rates. Each polyphase branch therefore has
/// `2 * ceil(RESAMPLE_ZERO_CROSSINGS / min(1, target/source))` taps
/// (64 at equal-or-higher target rate, 192 for 48 kHz → 16 kHz).
pub const RESAMPLE_ZERO_CROSSINGS: usize = 32;
/// Kaiser window shape parameter for the interpolation kernel.
pub const RESAMPLE_KAISER_BETA: f64 = 8.6;

fn gcd(mut a: u64, mut b: u64) -> u64 {
    while b != 0 {
        (a, b) = (b, a % b);
    }
    a
}

// Modified Bessel function of the first kind, order 0 (power series).
fn bessel_i0(x: f64) -> f64 {
    let q = x * x / 4.0;
    let mut term = 1.0;
    let mut sum = 1.0;
    for k in 1..200 {
        term *= q / (k as f64 * k as f64);
        sum += term;
        if term < sum * 1e-17 {
            break;
        }
    }
    sum
}

fn sinc(x: f64) -> f64 {
    if x == 0.0 {
        1.0
    } else {
        let px = std::f64::consts::PI * x;
        px.sin() / px
    }
}

/// Windowed-sinc polyphase resampler.
///
/// The low-pass cutoff is the Nyquist frequency of the lower rate. Output
/// length is `round(len * target / source)`.
pub fn resample(clip: &AudioClip, target_hz: u32) -> Result<AudioClip> {
    if target_hz == 0 {
        return Err(Error::Argument("target rate must be positive".into()));
    }
    let source_hz = clip.sample_rate_hz;
    if source_hz == 0 {
        return Err(Error::Argument("source rate must be positive".into()));
    }
    if source_hz == target_hz {
        return Ok(clip.clone());
    }
    let g = gcd(source_hz as u64, target_hz as u64);
    let up = target_hz as u64 / g;
    let down = source_hz as u64 / g;
    let n_in = clip.len();
    let n_out = ((n_in as u128 * target_hz as u128 + source_hz as u128 / 2) / source_hz as u128)
        as usize;

    let scale = (target_hz as f64 / source_hz as f64).min(1.0);
    let half_width = RESAMPLE_ZERO_CROSSINGS as f64 / scale;
    let taps_half = half_width.ceil() as i64;
    let norm = bessel_i0(RESAMPLE_KAISER_BETA);

    // phases[p][j] is the weight of input sample (base + j - taps_half + 1)
    // for an output sitting p/up of an input sample past `base`.
    let phases: Vec<Vec<f64>> = (0..up)
        .map(|p| {
            let frac = p as f64 / up as f64;
            let mut taps: Vec<f64> = (-taps_half + 1..=taps_half)
                .map(|j| {
                    let x = j as f64 - frac;
                    let r = x / half_width;
                    if r.abs() >= 1.0 {
                        0.0
                    } else {
                        let w = bessel_i0(RESAMPLE_KAISER_BETA * (1.0 - r * r).sqrt()) / norm;
                        scale * sinc(scale * x) * w
                    }
                })
                .collect();
            let sum: f64 = taps.iter().sum();
            taps.iter_mut().for_each(|t| *t /= sum);
            taps
        })
        .collect();

    let samples = (0..n_out)
        .map(|n| {
            let pos = n as u64 * down;
            let base = (pos / up) as i64;
            let taps = &phases[(pos % up) as usize];
            let first = base - taps_half + 1;
            let mut acc = 0.0;
            for (j, w) in taps.iter().enumerate() {
                let idx = first + j as i64;
                if idx >= 0 && (idx as usize) < n_in {
                    acc += w * clip.samples[idx as usize];
                }
            }
            acc.clamp(-1.0, 1.0)
        })
        .collect();
    Ok(AudioClip {
        samples,
        sample_rate_hz: target_hz,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use rustfft::{num_complex::Complex, FftPlanner};

    fn clip(samples: Vec<f64>, rate: u32) -> AudioClip {
        AudioClip::new(samples, rate).unwrap()
    }

    fn sine(freq: f64, amp: f64, rate: u32, n: usize) -> Vec<f64> {
        (0..n)
            .map(|i| amp * (2.0 * std::f64::consts::PI * freq * i as f64 / rate as f64).sin())
            .collect()
    }

    fn wav_bytes(channels: u16, bits: u16, values: &[i32]) -> Vec<u8> {
        let spec = hound::WavSpec {
            channels,
            sample_rate: 48_000,
            bits_per_sample: bits,
            sample_format: hound::SampleFormat::Int,
        };
        let mut buf = Cursor::new(Vec::new());
        {
            let mut w = hound::WavWriter::new(&mut buf, spec).unwrap();
            for &v in values {
                w.write_sample(v).unwrap();
            }
            w.finalize().unwrap();
        }
        buf.into_inner()
    }

    #[test]
    fn decode_scales_by_32768() {
        let bytes = wav_bytes(1, 16, &[0, -32768, 16384, 32767]);
        let c = decode_wav(&bytes).unwrap();
        assert_eq!(c.sample_rate_hz, 48_000);
        assert_eq!(c.samples[0], 0.0);
        assert_eq!(c.samples[1], -1.0);
        assert_eq!(c.samples[2], 0.5);
        assert_eq!(c.samples[3], 32767.0 / 32768.0);
    }

    #[test]
    fn decode_rejects_stereo_and_24bit_as_unsupported() {
        let stereo = wav_bytes(2, 16, &[1, 2, 3, 4]);
        assert!(matches!(decode_wav(&stereo), Err(Error::UnsupportedFormat(_))));
        let deep = wav_bytes(1, 24, &[1, 2, 3]);
        assert!(matches!(decode_wav(&deep), Err(Error::UnsupportedFormat(_))));
    }

    #[test]
    fn decode_rejects_garbage_as_format_error() {
        assert!(matches!(decode_wav(b"RIFF\0\0"), Err(Error::Format(_))));
        assert!(matches!(decode_wav(b"not a wav file at all, sorry"), Err(Error::Format(_))));
    }

    #[test]
    fn encoder_emits_canonical_header() {
        let c = clip(vec![0.0, 0.25, -0.5], 16_000);
        let bytes = encode_wav(&c).unwrap();
        assert_eq!(bytes.len(), 44 + 6);
        assert_eq!(&bytes[0..4], b"RIFF");
        assert_eq!(&bytes[8..16], b"WAVEfmt ");
        assert_eq!(u32::from_le_bytes(bytes[16..20].try_into().unwrap()), 16);
        assert_eq!(u16::from_le_bytes(bytes[20..22].try_into().unwrap()), 1);
        assert_eq!(&bytes[36..40], b"data");
        assert_eq!(decode_wav(&bytes).unwrap(), c);
    }

    #[test]
    fn normalize_examples() {
        let target = 10f64.powf(-0.1 / 20.0);
        let c = clip(vec![0.1, -0.2], 16_000);
        let n = peak_normalize(&c, -0.1).unwrap();
        assert!((n.samples[0] - 0.494_276_6).abs() < 1e-6);
        assert!((n.samples[1] + 0.988_553_1).abs() < 1e-6);

        let half = clip(vec![0.5, -0.25, 0.0], 16_000);
        let n = peak_normalize(&half, -0.1).unwrap();
        assert!((n.peak() - 0.988_553).abs() < 1e-6);
        assert!((n.samples[1] / n.samples[0] + 0.5).abs() < 1e-15);

        let at = clip(vec![target, -0.3], 16_000);
        let n = peak_normalize(&at, -0.1).unwrap();
        for (a, b) in n.samples.iter().zip(&at.samples) {
            assert!((a - b).abs() < 1e-9);
        }
    }

    #[test]
    fn normalize_rejects_silence() {
        let z = clip(vec![0.0; 10], 16_000);
        assert!(matches!(peak_normalize(&z, -0.1), Err(Error::DegenerateSignal(_))));
    }

    #[test]
    fn trim_keeps_only_the_tone() {
        let rate = 16_000;
        let mut s = vec![0.0; rate as usize];
        s.extend(sine(440.0, 1.0, rate, rate as usize));
        s.extend(vec![0.0; rate as usize]);
        let t = trim_silence(&clip(s, rate), -40.0, 10.0).unwrap();
        let frame = 160;
        assert!((t.len() as i64 - rate as i64).abs() <= frame);
    }

    #[test]
    fn trim_identity_when_all_loud() {
        let c = clip(sine(300.0, 0.8, 16_000, 8000), 16_000);
        assert_eq!(trim_silence(&c, -40.0, 10.0).unwrap(), c);
    }

    #[test]
    fn trim_locates_square_wave_onset_within_one_frame() {
        let rate = 16_000;
        let onset = 5_037;
        let mut s = vec![0.0; onset];
        s.extend((0..8000).map(|i| if (i / 20) % 2 == 0 { 0.5 } else { -0.5 }));
        let t = trim_silence(&clip(s.clone(), rate), -40.0, 10.0).unwrap();
        let removed = s.len() - t.len();
        assert!(removed <= onset && onset - removed < 160);
    }

    #[test]
    fn trim_errors() {
        let c = clip(vec![1e-4; 1000], 16_000);
        assert!(matches!(trim_silence(&c, -40.0, 10.0), Err(Error::DegenerateSignal(_))));
        assert!(matches!(trim_silence(&c, -40.0, 0.0), Err(Error::Argument(_))));
    }

    #[test]
    fn resample_identity_and_length() {
        let c = clip(sine(1000.0, 0.5, 48_000, 48_000), 48_000);
        assert_eq!(resample(&c, 48_000).unwrap(), c);
        let r = resample(&c, 16_000).unwrap();
        assert_eq!(r.len(), 16_000);
        assert_eq!(r.sample_rate_hz, 16_000);
        assert_eq!(resample(&clip(vec![0.0; 441], 44_100), 16_000).unwrap().len(), 160);
        assert!(matches!(resample(&c, 0), Err(Error::Argument(_))));
    }

    fn fft_peak(samples: &[f64]) -> (usize, f64) {
        let n = samples.len();
        let mut buf: Vec<Complex<f64>> = samples.iter().map(|&s| Complex::new(s, 0.0)).collect();
        FftPlanner::new().plan_fft_forward(n).process(&mut buf);
        let (bin, mag) = buf[..n / 2]
            .iter()
            .enumerate()
            .map(|(i, c)| (i, c.norm()))
            .fold((0, 0.0), |a, b| if b.1 > a.1 { b } else { a });
        (bin, 2.0 * mag / n as f64)
    }

    #[test]
    fn resample_preserves_tone_and_amplitude() {
        let c = clip(sine(1000.0, 0.5, 48_000, 48_000), 48_000);
        let r = resample(&c, 16_000).unwrap();
        // skip the filter's edge transients
        let body = &r.samples[1000..15_000];
        let (bin, amp) = fft_peak(body);
        let hz = bin as f64 * 16_000.0 / body.len() as f64;
        assert!((hz - 1000.0).abs() <= 16_000.0 / body.len() as f64);
        assert!((amp - 0.5).abs() / 0.5 < 0.01, "amplitude {amp}");
    }
}
