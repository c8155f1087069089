//! Waveform ingestion and log-mel spectrogram extraction.
//!
//! Every utterance is unified to a fixed duration (zero-padded at the end or
//! cropped to its leading part), framed with a periodic Hann window placed at
//! the start of each zero-padded FFT frame (no centering), converted to a
//! power spectrum, projected onto an HTK-scale triangular mel filterbank and
//! log-compressed with a floor. With the defaults a 7.5 s, 16 kHz utterance
//! always yields 747 frames.

use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::Path;
use std::sync::Arc;

use rustfft::num_complex::Complex;
use rustfft::{Fft, FftPlanner};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub const SAMPLE_RATE_HZ: u32 = 16_000;

const FEATURE_MAGIC: &[u8; 8] = b"NNPMFEAT";
const FEATURE_VERSION: u32 = 1;

#[derive(Clone, Debug, PartialEq)]
pub struct Waveform {
    samples: Vec<f64>,
    sample_rate_hz: u32,
}

impl Waveform {
    pub fn new(samples: Vec<f64>, sample_rate_hz: u32) -> Result<Self> {
        if sample_rate_hz != SAMPLE_RATE_HZ {
            return Err(Error::Input(format!(
                "sample rate {sample_rate_hz} Hz is not supported (expected {SAMPLE_RATE_HZ} Hz)"
            )));
        }
        if let Some(bad) = samples.iter().find(|v| !v.is_finite() || v.abs() > 1.0) {
            return Err(Error::Input(format!("sample {bad} outside [-1, 1]")));
        }
        Ok(Waveform {
            samples,
            sample_rate_hz,
        })
    }

    pub fn samples(&self) -> &[f64] {
        &self.samples
    }

    pub fn sample_rate_hz(&self) -> u32 {
        self.sample_rate_hz
    }

    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }

    /// Multiplies every sample by `c`; fails if the result leaves [-1, 1].
    pub fn scaled(&self, c: f64) -> Result<Self> {
        Waveform::new(self.samples.iter().map(|v| v * c).collect(), self.sample_rate_hz)
    }
}

/// Reads a 16-bit PCM mono RIFF file.
pub fn read_wav(path: &Path) -> Result<Waveform> {
    let reader = hound::WavReader::open(path).map_err(|e| match e {
        hound::Error::IoError(io) => Error::io(path, io),
        other => Error::Wav(other),
    })?;
    let spec = reader.spec();
    if spec.channels != 1 || spec.bits_per_sample != 16 || spec.sample_format != hound::SampleFormat::Int {
        return Err(Error::Input(format!(
            "{}: expected 16-bit PCM mono, found {} channel(s), {} bits, {:?}",
            path.display(),
            spec.channels,
            spec.bits_per_sample,
            spec.sample_format
        )));
    }
    let samples = reader
        .into_samples::<i16>()
        .map(|s| s.map(|v| f64::from(v) / 32768.0))
        .collect::<std::result::Result<Vec<_>, _>>()?;
    Waveform::new(samples, spec.sample_rate)
        .map_err(|e| Error::Input(format!("{}: {e}", path.display())))
}

/// Writes 16-bit PCM mono; samples are rounded to the nearest step of 1/32767.
pub fn write_wav(path: &Path, w: &Waveform) -> Result<()> {
    let spec = hound::WavSpec {
        channels: 1,
        sample_rate: w.sample_rate_hz,
        bits_per_sample: 16,
        sample_format: hound::SampleFormat::Int,
    };
    let file = File::create(path).map_err(|e| Error::io(path, e))?;
    let mut writer = hound::WavWriter::new(BufWriter::new(file), spec)?;
    for &s in &w.samples {
        writer.write_sample((s * 32767.0).round().clamp(-32768.0, 32767.0) as i16)?;
    }
    writer.finalize()?;
    Ok(())
}

/// Pads with trailing zeros or keeps the leading `target_seconds`.
pub fn unify_duration(w: &Waveform, target_seconds: f64) -> Result<Waveform> {
    if w.is_empty() {
        return Err(Error::Input("cannot unify an empty waveform".into()));
    }
    let target = (target_seconds * f64::from(w.sample_rate_hz)).round() as usize;
    let mut samples = w.samples.clone();
    samples.resize(target, 0.0);
    Ok(Waveform {
        samples,
        sample_rate_hz: w.sample_rate_hz,
    })
}

/// Periodic Hann window `0.5·(1 − cos(2πi/N))`.
pub fn hann_window(len: usize) -> Vec<f64> {
    (0..len)
        .map(|i| 0.5 * (1.0 - (2.0 * std::f64::consts::PI * i as f64 / len as f64).cos()))
        .collect()
}

/// HTK mel scale.
pub fn hz_to_mel(hz: f64) -> f64 {
    2595.0 * (1.0 + hz / 700.0).log10()
}

pub fn mel_to_hz(mel: f64) -> f64 {
    700.0 * (10f64.powf(mel / 2595.0) - 1.0)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct FeatureConfig {
    pub sample_rate_hz: u32,
    pub duration_seconds: f64,
    pub window_len: usize,
    pub fft_len: usize,
    pub hop: usize,
    pub mel_bins: usize,
    pub fmin_hz: f64,
    pub fmax_hz: f64,
    /// Square magnitudes before the filterbank (otherwise plain magnitudes).
    pub power: bool,
    /// Log-compress mel energies (otherwise linear energies, still floored).
    pub log: bool,
    pub log_floor: f64,
}

impl Default for FeatureConfig {
    fn default() -> Self {
        FeatureConfig {
            sample_rate_hz: SAMPLE_RATE_HZ,
            duration_seconds: 7.5,
            window_len: 400,
            fft_len: 512,
            hop: 160,
            mel_bins: 40,
            fmin_hz: 0.0,
            fmax_hz: 8000.0,
            power: true,
            log: true,
            log_floor: 1e-10,
        }
    }
}

impl FeatureConfig {
    pub fn validate(&self) -> Result<()> {
        if self.sample_rate_hz != SAMPLE_RATE_HZ {
            return Err(Error::Config(format!("sample rate must be {SAMPLE_RATE_HZ} Hz")));
        }
        if self.mel_bins < 1 {
            return Err(Error::Config("mel_bins must be at least 1".into()));
        }
        if self.window_len == 0 || self.window_len > self.fft_len || self.hop == 0 {
            return Err(Error::Config(format!(
                "window {} / fft {} / hop {} is not a valid framing",
                self.window_len, self.fft_len, self.hop
            )));
        }
        if !(self.fmin_hz >= 0.0 && self.fmin_hz < self.fmax_hz && self.fmax_hz <= f64::from(self.sample_rate_hz) / 2.0)
        {
            return Err(Error::Config(format!("mel range {}–{} Hz is invalid", self.fmin_hz, self.fmax_hz)));
        }
        if !(self.log_floor > 0.0) || !(self.duration_seconds > 0.0) {
            return Err(Error::Config("log floor and duration must be positive".into()));
        }
        Ok(())
    }

    pub fn unified_samples(&self) -> usize {
        (self.duration_seconds * f64::from(self.sample_rate_hz)).round() as usize
    }

    pub fn frame_count(&self) -> usize {
        frame_count(self.unified_samples(), self.fft_len, self.hop)
    }

    pub fn spectrum_bins(&self) -> usize {
        self.fft_len / 2 + 1
    }
}

pub fn frame_count(samples: usize, fft_len: usize, hop: usize) -> usize {
    if samples < fft_len {
        0
    } else {
        (samples - fft_len) / hop + 1
    }
}

/// Triangular filters (`mel_bins × (fft_len/2 + 1)`), unnormalized, with
/// band edges equally spaced on the mel scale.
pub fn mel_filterbank(cfg: &FeatureConfig) -> Vec<Vec<f64>> {
    let points: Vec<f64> = {
        let (lo, hi) = (hz_to_mel(cfg.fmin_hz), hz_to_mel(cfg.fmax_hz));
        (0..cfg.mel_bins + 2)
            .map(|i| mel_to_hz(lo + (hi - lo) * i as f64 / (cfg.mel_bins + 1) as f64))
            .collect()
    };
    let bin_hz = f64::from(cfg.sample_rate_hz) / cfg.fft_len as f64;
    (0..cfg.mel_bins)
        .map(|m| {
            let (left, center, right) = (points[m], points[m + 1], points[m + 2]);
            (0..cfg.spectrum_bins())
                .map(|k| {
                    let f = k as f64 * bin_hz;
                    let rise = (f - left) / (center - left);
                    let fall = (right - f) / (right - center);
                    rise.min(fall).max(0.0)
                })
                .collect()
        })
        .collect()
}

/// Center frequency of each mel filter.
pub fn mel_center_frequencies(cfg: &FeatureConfig) -> Vec<f64> {
    let (lo, hi) = (hz_to_mel(cfg.fmin_hz), hz_to_mel(cfg.fmax_hz));
    (1..=cfg.mel_bins)
        .map(|i| mel_to_hz(lo + (hi - lo) * i as f64 / (cfg.mel_bins + 1) as f64))
        .collect()
}

/// Time-major `frame_count × mel_bins` matrix.
#[derive(Clone, Debug, PartialEq)]
pub struct Spectrogram {
    frames: Vec<f64>,
    frame_count: usize,
    mel_bins: usize,
}

impl Spectrogram {
    pub fn new(frames: Vec<f64>, frame_count: usize, mel_bins: usize) -> Result<Self> {
        if frames.len() != frame_count * mel_bins {
            return Err(Error::dim(
                "spectrogram",
                format!("{} values for {frame_count}×{mel_bins}", frames.len()),
            ));
        }
        Ok(Spectrogram {
            frames,
            frame_count,
            mel_bins,
        })
    }

    pub fn frames(&self) -> &[f64] {
        &self.frames
    }

    pub fn frame_count(&self) -> usize {
        self.frame_count
    }

    pub fn mel_bins(&self) -> usize {
        self.mel_bins
    }

    pub fn row(&self, t: usize) -> &[f64] {
        &self.frames[t * self.mel_bins..(t + 1) * self.mel_bins]
    }
}

/// Reusable STFT + mel front-end for one [`FeatureConfig`].
pub struct FeatureExtractor {
    cfg: FeatureConfig,
    window: Vec<f64>,
    filters: Vec<Vec<f64>>,
    fft: Arc<dyn Fft<f64>>,
}

impl std::fmt::Debug for FeatureExtractor {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("FeatureExtractor").field("cfg", &self.cfg).finish()
    }
}

impl FeatureExtractor {
    pub fn new(cfg: FeatureConfig) -> Result<Self> {
        cfg.validate()?;
        let fft = FftPlanner::new().plan_fft_forward(cfg.fft_len);
        Ok(FeatureExtractor {
            window: hann_window(cfg.window_len),
            filters: mel_filterbank(&cfg),
            fft,
            cfg,
        })
    }

    pub fn config(&self) -> &FeatureConfig {
        &self.cfg
    }

    pub fn filterbank(&self) -> &[Vec<f64>] {
        &self.filters
    }

    /// One-sided spectra (`fft_len/2 + 1` bins) of every full frame.
    pub fn stft(&self, w: &Waveform) -> Result<Vec<Vec<Complex<f64>>>> {
        let n = self.cfg.fft_len;
        if w.len() < n {
            return Err(Error::Input(format!(
                "waveform has {} samples, at least {n} are needed for one frame",
                w.len()
            )));
        }
        let frames = frame_count(w.len(), n, self.cfg.hop);
        let mut scratch = vec![Complex::default(); self.fft.get_inplace_scratch_len()];
        let mut out = Vec::with_capacity(frames);
        for f in 0..frames {
            let start = f * self.cfg.hop;
            let mut buf = vec![Complex::default(); n];
            for (i, (b, win)) in buf.iter_mut().zip(&self.window).enumerate() {
                *b = Complex::new(w.samples[start + i] * win, 0.0);
            }
            self.fft.process_with_scratch(&mut buf, &mut scratch);
            buf.truncate(self.cfg.spectrum_bins());
            out.push(buf);
        }
        Ok(out)
    }

    /// Mel spectrogram of `w` as given (no duration unification).
    pub fn mel_spectrogram(&self, w: &Waveform) -> Result<Spectrogram> {
        let spectra = self.stft(w)?;
        let bins = self.cfg.mel_bins;
        let mut frames = Vec::with_capacity(spectra.len() * bins);
        for spectrum in &spectra {
            let energy: Vec<f64> = spectrum
                .iter()
                .map(|c| if self.cfg.power { c.norm_sqr() } else { c.norm() })
                .collect();
            for filter in &self.filters {
                let e: f64 = filter.iter().zip(&energy).map(|(a, b)| a * b).sum();
                let e = e.max(self.cfg.log_floor);
                frames.push(if self.cfg.log { e.ln() } else { e });
            }
        }
        Spectrogram::new(frames, spectra.len(), bins)
    }

    /// Duration unification followed by [`Self::mel_spectrogram`].
    pub fn extract(&self, w: &Waveform) -> Result<Spectrogram> {
        let unified = unify_duration(w, self.cfg.duration_seconds)?;
        self.mel_spectrogram(&unified)
    }
}

/// Per-mel-bin mean and standard deviation.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FeatureStats {
    pub mean: Vec<f64>,
    pub std: Vec<f64>,
}

impl FeatureStats {
    pub const STD_FLOOR: f64 = 1e-8;

    pub fn identity(bins: usize) -> Self {
        FeatureStats {
            mean: vec![0.0; bins],
            std: vec![1.0; bins],
        }
    }

    /// Population statistics over every frame of every spectrogram; standard
    /// deviations are floored at [`Self::STD_FLOOR`].
    pub fn compute<'a>(specs: impl IntoIterator<Item = &'a Spectrogram>) -> Result<Self> {
        let mut sum: Vec<f64> = Vec::new();
        let mut sq: Vec<f64> = Vec::new();
        let mut count = 0usize;
        for s in specs {
            if sum.is_empty() {
                sum = vec![0.0; s.mel_bins];
                sq = vec![0.0; s.mel_bins];
            } else if s.mel_bins != sum.len() {
                return Err(Error::dim("feature stats", format!("{} vs {} mel bins", s.mel_bins, sum.len())));
            }
            for row in s.frames.chunks(s.mel_bins) {
                for (b, v) in row.iter().enumerate() {
                    sum[b] += v;
                    sq[b] += v * v;
                }
            }
            count += s.frame_count;
        }
        if count == 0 {
            return Err(Error::Input("no frames to compute feature statistics".into()));
        }
        let n = count as f64;
        let mean: Vec<f64> = sum.iter().map(|s| s / n).collect();
        let std = sq
            .iter()
            .zip(&mean)
            .map(|(q, m)| (q / n - m * m).max(0.0).sqrt().max(Self::STD_FLOOR))
            .collect();
        Ok(FeatureStats { mean, std })
    }
}

/// Per-bin standardization `(x − mean) / std`.
pub fn normalize_features(s: &Spectrogram, stats: &FeatureStats) -> Result<Spectrogram> {
    if stats.mean.len() != s.mel_bins || stats.std.len() != s.mel_bins {
        return Err(Error::dim(
            "normalize_features",
            format!("stats for {} bins, spectrogram has {}", stats.mean.len(), s.mel_bins),
        ));
    }
    if let Some(bad) = stats.std.iter().find(|v| !(**v > 0.0)) {
        return Err(Error::Config(format!("feature std {bad} must be positive")));
    }
    let frames = s
        .frames
        .chunks(s.mel_bins)
        .flat_map(|row| row.iter().zip(stats.mean.iter().zip(&stats.std)).map(|(v, (m, d))| (v - m) / d))
        .collect();
    Spectrogram::new(frames, s.frame_count, s.mel_bins)
}

/// Binary feature container: `NNPMFEAT`, u32 version, u32 frames, u32 bins,
/// then row-major little-endian f64 values.
pub fn write_features(path: &Path, s: &Spectrogram) -> Result<()> {
    let file = File::create(path).map_err(|e| Error::io(path, e))?;
    let mut out = BufWriter::new(file);
    let mut bytes = Vec::with_capacity(20 + s.frames.len() * 8);
    bytes.extend_from_slice(FEATURE_MAGIC);
    bytes.extend_from_slice(&FEATURE_VERSION.to_le_bytes());
    bytes.extend_from_slice(&(s.frame_count as u32).to_le_bytes());
    bytes.extend_from_slice(&(s.mel_bins as u32).to_le_bytes());
    for v in &s.frames {
        bytes.extend_from_slice(&v.to_le_bytes());
    }
    out.write_all(&bytes).and_then(|_| out.flush()).map_err(|e| Error::io(path, e))
}

pub fn read_features(path: &Path) -> Result<Spectrogram> {
    let file = File::open(path).map_err(|e| Error::io(path, e))?;
    let mut bytes = Vec::new();
    BufReader::new(file).read_to_end(&mut bytes).map_err(|e| Error::io(path, e))?;
    let bad = |detail: &str| Error::Format {
        kind: "feature",
        detail: format!("{}: {detail}", path.display()),
    };
    if bytes.len() < 20 || &bytes[..8] != FEATURE_MAGIC {
        return Err(bad("missing NNPMFEAT header"));
    }
    let word = |at: usize| u32::from_le_bytes(bytes[at..at + 4].try_into().unwrap());
    if word(8) != FEATURE_VERSION {
        return Err(bad(&format!("unsupported version {}", word(8))));
    }
    let (frames, bins) = (word(12) as usize, word(16) as usize);
    let body = &bytes[20..];
    if body.len() != frames * bins * 8 {
        return Err(bad(&format!("{} payload bytes for {frames}×{bins}", body.len())));
    }
    let values = body
        .chunks_exact(8)
        .map(|c| f64::from_le_bytes(c.try_into().unwrap()))
        .collect();
    Spectrogram::new(values, frames, bins)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn tone(freq: f64, samples: usize, amp: f64) -> Waveform {
        let data = (0..samples)
            .map(|i| amp * (2.0 * std::f64::consts::PI * freq * i as f64 / 16000.0).sin())
            .collect();
        Waveform::new(data, SAMPLE_RATE_HZ).unwrap()
    }

    #[test]
    fn rejects_other_sample_rates_and_empty_input() {
        assert!(matches!(Waveform::new(vec![0.0], 8000), Err(Error::Input(_))));
        assert!(Waveform::new(vec![1.5], SAMPLE_RATE_HZ).is_err());
        let empty = Waveform::new(vec![], SAMPLE_RATE_HZ).unwrap();
        assert!(matches!(unify_duration(&empty, 7.5), Err(Error::Input(_))));
    }

    #[test]
    fn unify_pads_keeps_and_crops() {
        let short = tone(440.0, 16_000, 0.5);
        let u = unify_duration(&short, 7.5).unwrap();
        assert_eq!(u.len(), 120_000);
        assert_eq!(&u.samples()[..16_000], short.samples());
        assert!(u.samples()[16_000..].iter().all(|v| *v == 0.0));
        assert_eq!(u.samples()[16_000..].len(), 104_000);

        let exact = tone(440.0, 120_000, 0.5);
        assert_eq!(unify_duration(&exact, 7.5).unwrap(), exact);

        let long = tone(440.0, 200_000, 0.5);
        let u = unify_duration(&long, 7.5).unwrap();
        assert_eq!(u.samples(), &long.samples()[..120_000]);
    }

    #[test]
    fn hann_window_is_periodic_and_symmetric() {
        let w = hann_window(400);
        assert_eq!(w[0], 0.0);
        assert!((w[200] - 1.0).abs() < 1e-15);
        // periodic form: w[i] = w[N - i]
        for i in 1..400 {
            assert!((w[i] - w[400 - i]).abs() < 1e-12);
        }
    }

    #[test]
    fn stft_of_silence_is_zero_and_frame_count_matches() {
        let fx = FeatureExtractor::new(FeatureConfig::default()).unwrap();
        let silent = Waveform::new(vec![0.0; 120_000], SAMPLE_RATE_HZ).unwrap();
        let frames = fx.stft(&silent).unwrap();
        assert_eq!(frames.len(), 747);
        assert_eq!(frames[0].len(), 257);
        assert!(frames.iter().flatten().all(|c| c.norm() == 0.0));
        let short = Waveform::new(vec![0.0; 511], SAMPLE_RATE_HZ).unwrap();
        assert!(matches!(fx.stft(&short), Err(Error::Input(_))));
    }

    #[test]
    fn tone_peaks_at_expected_fft_bin() {
        let fx = FeatureExtractor::new(FeatureConfig::default()).unwrap();
        let frames = fx.stft(&tone(1000.0, 120_000, 0.5)).unwrap();
        for spectrum in &frames {
            let peak = spectrum
                .iter()
                .enumerate()
                .max_by(|a, b| a.1.norm().total_cmp(&b.1.norm()))
                .unwrap()
                .0;
            assert_eq!(peak, 32);
        }
    }

    #[test]
    fn silence_sits_at_log_floor() {
        let fx = FeatureExtractor::new(FeatureConfig::default()).unwrap();
        let s = fx.extract(&Waveform::new(vec![0.0; 1000], SAMPLE_RATE_HZ).unwrap()).unwrap();
        assert_eq!((s.frame_count(), s.mel_bins()), (747, 40));
        assert!(s.frames().iter().all(|v| *v == 1e-10f64.ln()));
    }

    #[test]
    fn mel_bins_must_be_positive() {
        let cfg = FeatureConfig {
            mel_bins: 0,
            ..FeatureConfig::default()
        };
        assert!(matches!(FeatureExtractor::new(cfg), Err(Error::Config(_))));
    }

    #[test]
    fn filterbank_covers_every_interior_bin() {
        let cfg = FeatureConfig::default();
        let bank = mel_filterbank(&cfg);
        let centers = mel_center_frequencies(&cfg);
        let bin_hz = 16000.0 / 512.0;
        for k in 0..257 {
            let f = k as f64 * bin_hz;
            if f > centers[0] && f < centers[centers.len() - 1] {
                let total: f64 = bank.iter().map(|row| row[k]).sum();
                assert!(total > 0.0, "bin {k} ({f} Hz) has no filter weight");
            }
        }
        for (m, c) in centers.iter().enumerate() {
            assert!(c.is_finite() && *c > 0.0 && *c < 8000.0, "center {m}");
        }
    }

    #[test]
    fn normalization_identity_and_constant_input() {
        let s = Spectrogram::new(vec![1.0, 2.0, 3.0, 4.0], 2, 2).unwrap();
        assert_eq!(normalize_features(&s, &FeatureStats::identity(2)).unwrap(), s);
        let c = Spectrogram::new(vec![5.0; 6], 3, 2).unwrap();
        let stats = FeatureStats::compute([&c]).unwrap();
        assert_eq!(stats.std, vec![FeatureStats::STD_FLOOR; 2]);
        assert!(normalize_features(&c, &stats).unwrap().frames().iter().all(|v| *v == 0.0));
        let zero = FeatureStats {
            mean: vec![0.0; 2],
            std: vec![1.0, 0.0],
        };
        assert!(matches!(normalize_features(&s, &zero), Err(Error::Config(_))));
    }

    #[test]
    fn feature_file_round_trip_and_rejection() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("x.feat");
        let s = Spectrogram::new(vec![0.5, -1.25, f64::MIN_POSITIVE, 7.0, 8.0, 9.0], 3, 2).unwrap();
        write_features(&path, &s).unwrap();
        assert_eq!(read_features(&path).unwrap(), s);
        let bytes = std::fs::read(&path).unwrap();
        assert_eq!(&bytes[..8], b"NNPMFEAT");
        std::fs::write(&path, &bytes[..bytes.len() - 1]).unwrap();
        assert!(matches!(read_features(&path), Err(Error::Format { .. })));
    }

    #[test]
    fn wav_round_trip_is_quantized_pcm() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("t.wav");
        let w = tone(300.0, 800, 0.7);
        write_wav(&path, &w).unwrap();
        let back = read_wav(&path).unwrap();
        assert_eq!(back.len(), w.len());
        for (a, b) in back.samples().iter().zip(w.samples()) {
            assert!((a - b).abs() < 1.0 / 16000.0);
        }
    }

    #[test]
    fn wav_with_wrong_encoding_is_rejected() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("stereo.wav");
        let spec = hound::WavSpec {
            channels: 2,
            sample_rate: 16000,
            bits_per_sample: 16,
            sample_format: hound::SampleFormat::Int,
        };
        let mut w = hound::WavWriter::create(&path, spec).unwrap();
        w.write_sample(0i16).unwrap();
        w.write_sample(0i16).unwrap();
        w.finalize().unwrap();
        let err = read_wav(&path).unwrap_err().to_string();
        assert!(err.contains("16-bit PCM mono"), "{err}");
    }
}
