//! Corpus manifests, deterministic splits, featurized corpora and the
//! synthetic two-domain corpus generator.
//!
//! Manifest schema:
//!
//! ```json
//! { "entries": [
//!     { "id": "src-0001", "path": "wav/src-0001.wav", "label": "angry",
//!       "domain": "source", "group": "spk03" }
//! ] }
//! ```
//!
//! `label` is one of `angry`, `happy`, `sad`, `neutral` and may be omitted;
//! `group` is optional. Relative paths resolve against the manifest's
//! directory. A path ending in `.wav` is featurized on load, anything else
//! is read as a feature file.

use std::collections::{BTreeMap, HashSet};
use std::f64::consts::PI;
use std::fmt;
use std::fs;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::dsp::{read_features, read_wav, write_wav, FeatureExtractor, Spectrogram, Waveform, SAMPLE_RATE_HZ};
use crate::error::{Error, Result};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Emotion {
    Angry,
    Happy,
    Sad,
    Neutral,
}

impl Emotion {
    pub const ALL: [Emotion; 4] = [Emotion::Angry, Emotion::Happy, Emotion::Sad, Emotion::Neutral];

    pub fn index(self) -> usize {
        self as usize
    }

    pub fn from_index(i: usize) -> Option<Self> {
        Self::ALL.get(i).copied()
    }

    pub fn as_str(self) -> &'static str {
        match self {
            Emotion::Angry => "angry",
            Emotion::Happy => "happy",
            Emotion::Sad => "sad",
            Emotion::Neutral => "neutral",
        }
    }
}

impl fmt::Display for Emotion {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Emotion {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Emotion::ALL
            .into_iter()
            .find(|e| e.as_str() == s)
            .ok_or_else(|| Error::Input(format!("unknown label `{s}` (expected angry, happy, sad or neutral)")))
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct ManifestEntry {
    pub id: String,
    pub path: PathBuf,
    pub label: Option<Emotion>,
    pub domain: String,
    pub group: Option<String>,
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawEntry {
    id: String,
    path: PathBuf,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    label: Option<String>,
    domain: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    group: Option<String>,
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawManifest {
    entries: Vec<RawEntry>,
}

#[derive(Clone, Debug, Default, PartialEq)]
pub struct Manifest {
    pub entries: Vec<ManifestEntry>,
}

impl Manifest {
    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    /// Parses, resolves paths and validates ids, labels and file presence.
    pub fn load(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let raw: RawManifest = serde_json::from_str(&text)?;
        let base = path.parent().unwrap_or(Path::new(""));
        let mut seen = HashSet::new();
        let mut entries = Vec::with_capacity(raw.entries.len());
        for e in raw.entries {
            if !seen.insert(e.id.clone()) {
                return Err(Error::Input(format!("{}: duplicate id `{}`", path.display(), e.id)));
            }
            let label = e.label.as_deref().map(Emotion::from_str).transpose()?;
            let resolved = if e.path.is_absolute() { e.path } else { base.join(e.path) };
            if !resolved.is_file() {
                return Err(Error::Input(format!("entry `{}`: missing file {}", e.id, resolved.display())));
            }
            entries.push(ManifestEntry {
                id: e.id,
                path: resolved,
                label,
                domain: e.domain,
                group: e.group,
            });
        }
        Ok(Manifest { entries })
    }

    /// Writes the manifest with paths relative to its own directory where
    /// possible.
    pub fn save(&self, path: &Path) -> Result<()> {
        let base = path.parent().unwrap_or(Path::new(""));
        let raw = RawManifest {
            entries: self
                .entries
                .iter()
                .map(|e| RawEntry {
                    id: e.id.clone(),
                    path: e.path.strip_prefix(base).map(Path::to_path_buf).unwrap_or_else(|_| e.path.clone()),
                    label: e.label.map(|l| l.as_str().to_string()),
                    domain: e.domain.clone(),
                    group: e.group.clone(),
                })
                .collect(),
        };
        let text = serde_json::to_string_pretty(&raw)? + "\n";
        fs::write(path, text).map_err(|e| Error::io(path, e))
    }

    /// Copy with every label removed.
    pub fn without_labels(&self) -> Manifest {
        Manifest {
            entries: self
                .entries
                .iter()
                .map(|e| ManifestEntry { label: None, ..e.clone() })
                .collect(),
        }
    }

    fn labels(&self) -> Result<Vec<Emotion>> {
        self.entries
            .iter()
            .map(|e| e.label.ok_or_else(|| Error::Config(format!("entry `{}` has no label", e.id))))
            .collect()
    }

    fn subset(&self, mut keep: Vec<usize>) -> Manifest {
        keep.sort_unstable();
        Manifest {
            entries: keep.into_iter().map(|i| self.entries[i].clone()).collect(),
        }
    }
}

/// Stratified split: `round(fraction · n_c)` entries of every class go to
/// train. Entries keep their manifest order within each half.
pub fn split(manifest: &Manifest, train_fraction: f64, seed: u64) -> Result<(Manifest, Manifest)> {
    if !(train_fraction > 0.0 && train_fraction < 1.0) {
        return Err(Error::Config(format!("train fraction {train_fraction} outside (0, 1)")));
    }
    let labels = manifest.labels()?;
    let mut by_class: BTreeMap<Emotion, Vec<usize>> = BTreeMap::new();
    for (i, l) in labels.iter().enumerate() {
        by_class.entry(*l).or_default().push(i);
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let (mut train, mut test) = (Vec::new(), Vec::new());
    for (class, mut idx) in by_class {
        if idx.len() < 2 {
            return Err(Error::Config(format!("class {class} has {} example(s); need at least 2", idx.len())));
        }
        idx.shuffle(&mut rng);
        let n_train = ((train_fraction * idx.len() as f64).round() as usize).clamp(1, idx.len() - 1);
        test.extend_from_slice(&idx[n_train..]);
        idx.truncate(n_train);
        train.extend(idx);
    }
    Ok((manifest.subset(train), manifest.subset(test)))
}

/// Group-disjoint split: entries whose `group` is in `held_out` form the
/// test half.
pub fn split_by_group(manifest: &Manifest, held_out: &[String]) -> Result<(Manifest, Manifest)> {
    let (mut train, mut test) = (Vec::new(), Vec::new());
    for (i, e) in manifest.entries.iter().enumerate() {
        let g = e
            .group
            .as_ref()
            .ok_or_else(|| Error::Config(format!("entry `{}` has no group", e.id)))?;
        if held_out.contains(g) {
            test.push(i);
        } else {
            train.push(i);
        }
    }
    if train.is_empty() || test.is_empty() {
        return Err(Error::Config("group split leaves one side empty".into()));
    }
    Ok((manifest.subset(train), manifest.subset(test)))
}

fn load_spectrogram(entry: &ManifestEntry, extractor: &FeatureExtractor) -> Result<Spectrogram> {
    let is_wav = entry
        .path
        .extension()
        .is_some_and(|e| e.eq_ignore_ascii_case("wav"));
    let s = if is_wav {
        extractor.extract(&read_wav(&entry.path)?)?
    } else {
        read_features(&entry.path)?
    };
    let cfg = extractor.config();
    if s.frame_count() != cfg.frame_count() || s.mel_bins() != cfg.mel_bins {
        return Err(Error::dim(
            "corpus",
            format!(
                "`{}` has {}×{} features, expected {}×{}",
                entry.id,
                s.frame_count(),
                s.mel_bins(),
                cfg.frame_count(),
                cfg.mel_bins
            ),
        ));
    }
    Ok(s)
}

/// Featurized corpus with ground-truth labels.
#[derive(Clone, Debug)]
pub struct LabeledCorpus {
    pub ids: Vec<String>,
    pub features: Vec<Spectrogram>,
    pub labels: Vec<usize>,
}

/// Featurized corpus without labels; the adaptation trainer only accepts
/// this type for the target domain.
#[derive(Clone, Debug)]
pub struct UnlabeledCorpus {
    pub ids: Vec<String>,
    pub features: Vec<Spectrogram>,
}

impl LabeledCorpus {
    pub fn load(manifest: &Manifest, extractor: &FeatureExtractor) -> Result<Self> {
        let labels = manifest.labels()?;
        let features = manifest
            .entries
            .iter()
            .map(|e| load_spectrogram(e, extractor))
            .collect::<Result<Vec<_>>>()?;
        Ok(LabeledCorpus {
            ids: manifest.entries.iter().map(|e| e.id.clone()).collect(),
            features,
            labels: labels.into_iter().map(Emotion::index).collect(),
        })
    }

    pub fn len(&self) -> usize {
        self.features.len()
    }

    pub fn is_empty(&self) -> bool {
        self.features.is_empty()
    }

    pub fn class_count(&self) -> usize {
        self.labels.iter().collect::<HashSet<_>>().len()
    }

    pub fn without_labels(&self) -> UnlabeledCorpus {
        UnlabeledCorpus {
            ids: self.ids.clone(),
            features: self.features.clone(),
        }
    }
}

impl UnlabeledCorpus {
    /// Loads features only; labels present in the manifest are ignored.
    pub fn load(manifest: &Manifest, extractor: &FeatureExtractor) -> Result<Self> {
        let features = manifest
            .entries
            .iter()
            .map(|e| load_spectrogram(e, extractor))
            .collect::<Result<Vec<_>>>()?;
        Ok(UnlabeledCorpus {
            ids: manifest.entries.iter().map(|e| e.id.clone()).collect(),
            features,
        })
    }

    pub fn len(&self) -> usize {
        self.features.len()
    }

    pub fn is_empty(&self) -> bool {
        self.features.is_empty()
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ClassTone {
    /// Fundamental frequency before any domain pitch offset.
    pub base_hz: f64,
    /// Amplitude-modulation rate of the syllable envelope.
    pub modulation_hz: f64,
    /// White-noise amplitude relative to the harmonic signal.
    pub noise_level: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DomainShift {
    pub pitch_offset_semitones: f64,
    /// FIR channel applied after synthesis; `[1.0]` is transparent.
    pub channel: Vec<f64>,
    /// Additive white-noise amplitude applied after the channel.
    pub noise_floor: f64,
}

impl DomainShift {
    pub fn none() -> Self {
        DomainShift {
            pitch_offset_semitones: 0.0,
            channel: vec![1.0],
            noise_floor: 0.0,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SyntheticSpec {
    /// Indexed by [`Emotion::index`].
    pub classes: [ClassTone; 4],
    pub source: DomainShift,
    pub target: DomainShift,
    pub per_class: usize,
    pub min_seconds: f64,
    pub max_seconds: f64,
    /// Relative per-utterance f0 jitter.
    pub pitch_jitter: f64,
    /// Relative per-utterance modulation-rate jitter.
    pub modulation_jitter: f64,
    pub harmonics: usize,
    pub seed: u64,
}

impl Default for SyntheticSpec {
    fn default() -> Self {
        let tone = |base_hz, modulation_hz, noise_level| ClassTone {
            base_hz,
            modulation_hz,
            noise_level,
        };
        SyntheticSpec {
            classes: [
                tone(260.0, 7.0, 0.10),
                tone(220.0, 5.0, 0.05),
                tone(150.0, 2.0, 0.02),
                tone(180.0, 3.5, 0.04),
            ],
            source: DomainShift::none(),
            // larger pitch offsets move one class onto another's base pitch
            target: DomainShift {
                pitch_offset_semitones: 1.0,
                channel: vec![1.0, -0.6],
                noise_floor: 0.01,
            },
            per_class: 50,
            min_seconds: 3.0,
            max_seconds: 10.0,
            pitch_jitter: 0.06,
            modulation_jitter: 0.15,
            harmonics: 12,
            seed: 7,
        }
    }
}

impl SyntheticSpec {
    pub fn validate(&self) -> Result<()> {
        for i in 0..4 {
            for j in i + 1..4 {
                if self.classes[i] == self.classes[j] {
                    return Err(Error::Config(format!("classes {i} and {j} share tone parameters")));
                }
            }
        }
        if self.per_class < 2 {
            return Err(Error::Config("need at least 2 utterances per class".into()));
        }
        if !(self.min_seconds > 0.0 && self.min_seconds <= self.max_seconds) {
            return Err(Error::Config(format!(
                "duration range [{}, {}] is invalid",
                self.min_seconds, self.max_seconds
            )));
        }
        if self.harmonics == 0 {
            return Err(Error::Config("need at least one harmonic".into()));
        }
        for d in [&self.source, &self.target] {
            if d.channel.is_empty() || d.noise_floor < 0.0 {
                return Err(Error::Config("channel needs at least one tap and noise floor ≥ 0".into()));
            }
        }
        Ok(())
    }
}

/// Paths of a generated corpus: one labeled manifest per domain.
#[derive(Clone, Debug)]
pub struct SyntheticCorpus {
    pub source: Manifest,
    pub target: Manifest,
}

fn synthesize(spec: &SyntheticSpec, tone: &ClassTone, shift: &DomainShift, rng: &mut ChaCha8Rng) -> Result<Waveform> {
    let sr = f64::from(SAMPLE_RATE_HZ);
    let seconds = rng.gen_range(spec.min_seconds..=spec.max_seconds);
    let n = (seconds * sr).round() as usize;
    let f0 = tone.base_hz
        * 2f64.powf(shift.pitch_offset_semitones / 12.0)
        * (1.0 + rng.gen_range(-spec.pitch_jitter..=spec.pitch_jitter));
    let fm = tone.modulation_hz * (1.0 + rng.gen_range(-spec.modulation_jitter..=spec.modulation_jitter));
    let env_phase = rng.gen_range(0.0..2.0 * PI);
    let phases: Vec<f64> = (0..spec.harmonics).map(|_| rng.gen_range(0.0..2.0 * PI)).collect();
    let noise = Normal::new(0.0, 1.0).expect("unit normal");
    let nyquist = sr / 2.0;

    let mut x: Vec<f64> = (0..n)
        .map(|i| {
            let t = i as f64 / sr;
            let env = 0.5 * (1.0 + (2.0 * PI * fm * t + env_phase).sin());
            let mut v = 0.0;
            for (k, ph) in phases.iter().enumerate() {
                let f = f0 * (k + 1) as f64;
                if f < nyquist {
                    v += (2.0 * PI * f * t + ph).sin() / (k + 1) as f64;
                }
            }
            env * v + tone.noise_level * noise.sample(rng)
        })
        .collect();
    if shift.channel != [1.0] {
        let mut y = vec![0.0; n];
        for (i, out) in y.iter_mut().enumerate() {
            for (k, c) in shift.channel.iter().enumerate() {
                if i >= k {
                    *out += c * x[i - k];
                }
            }
        }
        x = y;
    }
    let peak = x.iter().fold(0.0f64, |m, v| m.max(v.abs()));
    let gain = if peak > 0.0 { 0.5 / peak } else { 1.0 };
    let mut samples: Vec<f64> = x
        .iter()
        .map(|v| v * gain + shift.noise_floor * noise.sample(rng))
        .collect();
    samples.iter_mut().for_each(|v| *v = v.clamp(-1.0, 1.0));
    Waveform::new(samples, SAMPLE_RATE_HZ)
}

/// Writes `source/*.wav`, `target/*.wav`, `source.json` and `target.json`
/// (both labeled) under `out`. Output bytes depend only on `spec`.
pub fn generate_synthetic(spec: &SyntheticSpec, out: &Path) -> Result<SyntheticCorpus> {
    spec.validate()?;
    let mut manifests = Vec::new();
    for (d, (domain, shift)) in [("source", &spec.source), ("target", &spec.target)].into_iter().enumerate() {
        let dir = out.join(domain);
        fs::create_dir_all(&dir).map_err(|e| Error::io(&dir, e))?;
        let mut entries = Vec::new();
        for i in 0..spec.per_class {
            for emotion in Emotion::ALL {
                let c = emotion.index();
                let stream = ((d as u64) << 40) | ((c as u64) << 32) | i as u64;
                let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
                rng.set_stream(stream);
                let w = synthesize(spec, &spec.classes[c], shift, &mut rng)?;
                let id = format!("{domain}-{emotion}-{i:04}");
                let path = dir.join(format!("{id}.wav"));
                write_wav(&path, &w)?;
                entries.push(ManifestEntry {
                    id,
                    path,
                    label: Some(emotion),
                    domain: domain.to_string(),
                    group: None,
                });
            }
        }
        let manifest = Manifest { entries };
        manifest.save(&out.join(format!("{domain}.json")))?;
        manifests.push(manifest);
    }
    let target = manifests.pop().expect("two domains");
    let source = manifests.pop().expect("two domains");
    Ok(SyntheticCorpus { source, target })
}
