//! Siamese self-attentive encoder and the emotion classifier head.
//!
//! One parameter set serves both branches: source and target spectrograms
//! are encoded by the same [`SnsaWeights`]. The encoder is
//! `(conv → temporal max-pool → ReLU) × 2 → BLSTM × 2 → structured
//! self-attention`, and its output is the flattened `r × 2u` attention
//! pooling of the top BLSTM states.

use std::path::Path;

use rand::Rng;
use rand_chacha::ChaCha8Rng;
use rand::SeedableRng;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::checkpoint::{self, Block, ConfigHash};
use crate::dsp::{normalize_features, FeatureStats, Spectrogram};
use crate::error::{Error, Result};
use crate::tensor::{Graph, Tensor, Var};

pub const NUM_CLASSES: usize = 4;

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ConvLayerConfig {
    pub channels: usize,
    /// Square, odd kernel; "same" zero padding keeps the frequency extent.
    pub kernel: usize,
    /// Non-overlapping max-pool window along time.
    pub pool: usize,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SnsaConfig {
    pub frames: usize,
    pub mel_bins: usize,
    pub conv: [ConvLayerConfig; 2],
    pub lstm_hidden: usize,
    pub attention_hidden: usize,
    pub attention_heads: usize,
    pub classes: usize,
    pub dropout: f64,
}

impl Default for SnsaConfig {
    fn default() -> Self {
        SnsaConfig {
            frames: 747,
            mel_bins: 40,
            conv: [
                ConvLayerConfig {
                    channels: 16,
                    kernel: 5,
                    pool: 4,
                },
                ConvLayerConfig {
                    channels: 32,
                    kernel: 5,
                    pool: 4,
                },
            ],
            lstm_hidden: 64,
            attention_hidden: 64,
            attention_heads: 4,
            classes: NUM_CLASSES,
            dropout: 0.5,
        }
    }
}

impl SnsaConfig {
    /// Reduced architecture that trains in minutes on one CPU core.
    pub fn desk() -> Self {
        SnsaConfig {
            conv: [
                ConvLayerConfig {
                    channels: 4,
                    kernel: 3,
                    pool: 4,
                },
                ConvLayerConfig {
                    channels: 8,
                    kernel: 3,
                    pool: 4,
                },
            ],
            lstm_hidden: 16,
            attention_hidden: 16,
            attention_heads: 2,
            ..SnsaConfig::default()
        }
    }

    pub fn validate(&self) -> Result<()> {
        let positive = [
            self.frames,
            self.mel_bins,
            self.lstm_hidden,
            self.attention_hidden,
            self.attention_heads,
            self.classes,
        ];
        if positive.contains(&0) {
            return Err(Error::Config("model dimensions must be positive".into()));
        }
        for (i, c) in self.conv.iter().enumerate() {
            if c.channels == 0 || c.pool == 0 || c.kernel % 2 == 0 {
                return Err(Error::Config(format!(
                    "conv{} needs positive channels/pool and an odd kernel, got {c:?}",
                    i + 1
                )));
            }
        }
        if self.encoded_steps() == 0 {
            return Err(Error::Config(format!(
                "{} frames vanish after temporal pools {} and {}",
                self.frames, self.conv[0].pool, self.conv[1].pool
            )));
        }
        if !(0.0..1.0).contains(&self.dropout) {
            return Err(Error::Config(format!("dropout {} must lie in [0, 1)", self.dropout)));
        }
        Ok(())
    }

    /// BLSTM sequence length after both temporal pools.
    pub fn encoded_steps(&self) -> usize {
        self.frames / self.conv[0].pool / self.conv[1].pool
    }

    pub fn lstm_input(&self) -> usize {
        self.conv[1].channels * self.mel_bins
    }

    /// Dimension of the encoder output `h^attn`.
    pub fn feature_dim(&self) -> usize {
        2 * self.lstm_hidden * self.attention_heads
    }

    /// SHA-256 over the architecture (dropout excluded: it does not change
    /// the parameter layout).
    pub fn hash(&self) -> ConfigHash {
        let arch = serde_json::json!({
            "frames": self.frames,
            "mel_bins": self.mel_bins,
            "conv": self.conv,
            "lstm_hidden": self.lstm_hidden,
            "attention_hidden": self.attention_hidden,
            "attention_heads": self.attention_heads,
            "classes": self.classes,
        });
        Sha256::digest(arch.to_string().as_bytes()).into()
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct Param {
    pub name: String,
    pub tensor: Tensor,
    pub trainable: bool,
}

/// All learnable encoder and classifier parameters, plus the per-bin input
/// statistics the encoder standardizes with.
#[derive(Clone, Debug, PartialEq)]
pub struct SnsaWeights {
    params: Vec<Param>,
    input_stats: FeatureStats,
}

// Parameter order; `Bound` indexes into it.
const CONV1_W: usize = 0;
const CONV1_B: usize = 1;
const CONV2_W: usize = 2;
const CONV2_B: usize = 3;
const LSTM_BASE: usize = 4; // layer l, direction d: base + (2l + d) * 3 + {w_ih, w_hh, bias}
const ATTN_W1: usize = 16;
const ATTN_W2: usize = 17;
const CLS_W: usize = 18;
const CLS_B: usize = 19;

fn xavier(rng: &mut impl Rng, shape: &[usize], fan_in: usize, fan_out: usize) -> Tensor {
    let limit = (6.0 / (fan_in + fan_out) as f64).sqrt();
    let n = shape.iter().product();
    let data = (0..n).map(|_| rng.gen_range(-limit..limit)).collect();
    Tensor::new(shape.to_vec(), data).expect("shape matches").with_grad()
}

impl SnsaWeights {
    /// Xavier-uniform matrices, zero biases, LSTM forget-gate bias 1.
    pub fn init(cfg: &SnsaConfig, seed: u64) -> Result<Self> {
        cfg.validate()?;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut params = Vec::new();
        let mut push = |name: String, tensor: Tensor| {
            params.push(Param {
                name,
                tensor,
                trainable: true,
            })
        };
        let mut c_in = 1;
        for (i, c) in cfg.conv.iter().enumerate() {
            let k = c.kernel;
            push(
                format!("conv{}.weight", i + 1),
                xavier(&mut rng, &[c.channels, c_in, k, k], c_in * k * k, c.channels * k * k),
            );
            push(format!("conv{}.bias", i + 1), Tensor::zeros([c.channels]).with_grad());
            c_in = c.channels;
        }
        let u = cfg.lstm_hidden;
        for layer in 0..2 {
            let input = if layer == 0 { cfg.lstm_input() } else { 2 * u };
            for dir in ["fwd", "bwd"] {
                let prefix = format!("lstm{}.{dir}", layer + 1);
                push(format!("{prefix}.w_ih"), xavier(&mut rng, &[input, 4 * u], input, 4 * u));
                push(format!("{prefix}.w_hh"), xavier(&mut rng, &[u, 4 * u], u, 4 * u));
                let mut bias = vec![0.0; 4 * u];
                bias[u..2 * u].iter_mut().for_each(|b| *b = 1.0);
                push(format!("{prefix}.bias"), Tensor::new([4 * u], bias)?.with_grad());
            }
        }
        let (da, r) = (cfg.attention_hidden, cfg.attention_heads);
        push("attn.w1".into(), xavier(&mut rng, &[da, 2 * u], 2 * u, da));
        push("attn.w2".into(), xavier(&mut rng, &[r, da], da, r));
        let d = cfg.feature_dim();
        push("cls.weight".into(), xavier(&mut rng, &[cfg.classes, d], d, cfg.classes));
        push("cls.bias".into(), Tensor::zeros([cfg.classes]).with_grad());
        debug_assert_eq!(params.len(), CLS_B + 1);
        Ok(SnsaWeights {
            params,
            input_stats: FeatureStats::identity(cfg.mel_bins),
        })
    }

    pub fn params(&self) -> &[Param] {
        &self.params
    }

    pub fn params_mut(&mut self) -> &mut [Param] {
        &mut self.params
    }

    pub fn param(&self, name: &str) -> Option<&Param> {
        self.params.iter().find(|p| p.name == name)
    }

    pub fn param_mut(&mut self, name: &str) -> Option<&mut Param> {
        self.params.iter_mut().find(|p| p.name == name)
    }

    pub fn parameter_count(&self) -> usize {
        self.params.iter().map(|p| p.tensor.numel()).sum()
    }

    pub fn input_stats(&self) -> &FeatureStats {
        &self.input_stats
    }

    pub fn set_input_stats(&mut self, stats: FeatureStats) -> Result<()> {
        if stats.mean.len() != self.input_stats.mean.len() || stats.std.len() != self.input_stats.std.len() {
            return Err(Error::dim(
                "input stats",
                format!("{} bins, model expects {}", stats.mean.len(), self.input_stats.mean.len()),
            ));
        }
        self.input_stats = stats;
        Ok(())
    }

    /// Marks the first `n` conv layers non-trainable and everything else
    /// trainable. Frozen tensors also stop requesting gradients.
    pub fn set_frozen(&mut self, n: usize) -> Result<()> {
        if n > 2 {
            return Err(Error::Config(format!("can freeze at most 2 conv layers, got {n}")));
        }
        for (i, p) in self.params.iter_mut().enumerate() {
            let frozen = (n >= 1 && (i == CONV1_W || i == CONV1_B)) || (n >= 2 && (i == CONV2_W || i == CONV2_B));
            p.trainable = !frozen;
            p.tensor.set_requires_grad(!frozen);
        }
        Ok(())
    }

    pub fn zero_grad(&mut self) {
        self.params.iter_mut().for_each(|p| p.tensor.zero_grad());
    }

    pub fn bind<'a>(&'a self, g: &mut Graph<'a>) -> Bound {
        Bound {
            vars: self.params.iter().map(|p| g.leaf(&p.tensor)).collect(),
        }
    }

    fn blocks(&self) -> Vec<Block> {
        let mut blocks: Vec<Block> = self
            .params
            .iter()
            .map(|p| Block {
                name: p.name.clone(),
                shape: p.tensor.shape().to_vec(),
                data: p.tensor.data().to_vec(),
            })
            .collect();
        let bins = self.input_stats.mean.len();
        blocks.push(Block {
            name: "input_norm.mean".into(),
            shape: vec![bins],
            data: self.input_stats.mean.clone(),
        });
        blocks.push(Block {
            name: "input_norm.std".into(),
            shape: vec![bins],
            data: self.input_stats.std.clone(),
        });
        blocks
    }

    pub fn to_bytes(&self, cfg: &SnsaConfig) -> Vec<u8> {
        checkpoint::encode(&cfg.hash(), &self.blocks())
    }

    pub fn save(&self, cfg: &SnsaConfig, path: &Path) -> Result<()> {
        checkpoint::write(path, &cfg.hash(), &self.blocks())
    }

    /// Loads a checkpoint written for an identical architecture.
    pub fn load(cfg: &SnsaConfig, path: &Path) -> Result<Self> {
        let (hash, blocks) = checkpoint::read(path)?;
        if hash != cfg.hash() {
            return Err(Error::Config(format!(
                "{} was written for a different model configuration",
                path.display()
            )));
        }
        let mut weights = SnsaWeights::init(cfg, 0)?;
        let mut seen = vec![false; weights.params.len()];
        let mut mean = None;
        let mut std = None;
        for b in blocks {
            match b.name.as_str() {
                "input_norm.mean" => mean = Some(b.data),
                "input_norm.std" => std = Some(b.data),
                name => {
                    let idx = weights
                        .params
                        .iter()
                        .position(|p| p.name == name)
                        .ok_or_else(|| Error::Format {
                            kind: "checkpoint",
                            detail: format!("unknown block `{name}`"),
                        })?;
                    let p = &mut weights.params[idx];
                    if p.tensor.shape() != b.shape.as_slice() {
                        return Err(Error::Format {
                            kind: "checkpoint",
                            detail: format!("block `{name}` has shape {:?}, expected {:?}", b.shape, p.tensor.shape()),
                        });
                    }
                    p.tensor.data_mut().copy_from_slice(&b.data);
                    seen[idx] = true;
                }
            }
        }
        if let Some(i) = seen.iter().position(|s| !s) {
            return Err(Error::Format {
                kind: "checkpoint",
                detail: format!("missing block `{}`", weights.params[i].name),
            });
        }
        match (mean, std) {
            (Some(mean), Some(std)) => weights.set_input_stats(FeatureStats { mean, std })?,
            _ => {
                return Err(Error::Format {
                    kind: "checkpoint",
                    detail: "missing input normalization blocks".into(),
                })
            }
        }
        Ok(weights)
    }
}

/// Graph handles for one [`SnsaWeights`] binding, in parameter order.
#[derive(Clone, Debug)]
pub struct Bound {
    vars: Vec<Var>,
}

impl Bound {
    pub fn vars(&self) -> &[Var] {
        &self.vars
    }
}

/// Outputs of one encoder pass.
#[derive(Clone, Copy, Debug)]
pub struct Encoded {
    /// `h^attn`, shape `[d]`.
    pub feature: Var,
    /// Attention weights, shape `[r, T']`.
    pub attention: Var,
}

fn dropout(g: &mut Graph<'_>, x: Var, p: f64, rng: Option<&mut ChaCha8Rng>) -> Result<Var> {
    match rng {
        Some(rng) if p > 0.0 => {
            let keep = 1.0 - p;
            let mask = (0..g.value(x).len())
                .map(|_| if rng.gen::<f64>() < keep { 1.0 / keep } else { 0.0 })
                .collect();
            let m = g.constant(g.shape(x).to_vec(), mask)?;
            g.mul(x, m)
        }
        _ => Ok(x),
    }
}

/// One LSTM direction over `x: [T, in]`; returns `[T, u]` in time order.
fn lstm_direction(g: &mut Graph<'_>, x: Var, w_ih: Var, w_hh: Var, bias: Var, u: usize, reverse: bool) -> Result<Var> {
    let steps = g.shape(x)[0];
    let projected = g.matmul(x, w_ih)?;
    let projected = g.add_bias(projected, bias, 1)?;
    let mut state: Option<(Var, Var)> = None;
    let mut outputs = vec![None; steps];
    let order: Box<dyn Iterator<Item = usize>> = if reverse {
        Box::new((0..steps).rev())
    } else {
        Box::new(0..steps)
    };
    for t in order {
        let mut gates = g.slice(projected, 0, t, 1)?;
        if let Some((h, _)) = state {
            let rec = g.matmul(h, w_hh)?;
            gates = g.add(gates, rec)?;
        }
        let i = g.slice(gates, 1, 0, u)?;
        let i = g.sigmoid(i);
        let f = g.slice(gates, 1, u, u)?;
        let f = g.sigmoid(f);
        let cand = g.slice(gates, 1, 2 * u, u)?;
        let cand = g.tanh(cand);
        let o = g.slice(gates, 1, 3 * u, u)?;
        let o = g.sigmoid(o);
        let write = g.mul(i, cand)?;
        let c = match state {
            Some((_, c_prev)) => {
                let keep = g.mul(f, c_prev)?;
                g.add(keep, write)?
            }
            None => write,
        };
        let squashed = g.tanh(c);
        let h = g.mul(o, squashed)?;
        outputs[t] = Some(h);
        state = Some((h, c));
    }
    let outputs: Vec<Var> = outputs.into_iter().map(|h| h.expect("every step visited")).collect();
    g.concat(&outputs, 0)
}

/// Records the encoder on `g`. `dropout_rng` enables train-mode dropout.
pub fn encode<'a>(
    g: &mut Graph<'a>,
    bound: &Bound,
    cfg: &SnsaConfig,
    weights: &SnsaWeights,
    x: &Spectrogram,
    mut dropout_rng: Option<&mut ChaCha8Rng>,
) -> Result<Encoded> {
    if x.frame_count() != cfg.frames || x.mel_bins() != cfg.mel_bins {
        return Err(Error::dim(
            "encode",
            format!(
                "spectrogram {}×{}, model expects {}×{}",
                x.frame_count(),
                x.mel_bins(),
                cfg.frames,
                cfg.mel_bins
            ),
        ));
    }
    let v = &bound.vars;
    let normalized = normalize_features(x, weights.input_stats())?;
    let mut h = g.constant([1, cfg.frames, cfg.mel_bins], normalized.frames().to_vec())?;
    for (layer, c) in cfg.conv.iter().enumerate() {
        let (w, b) = if layer == 0 { (CONV1_W, CONV1_B) } else { (CONV2_W, CONV2_B) };
        h = g.conv2d(h, v[w], 1, c.kernel / 2)?;
        h = g.add_bias(h, v[b], 0)?;
        h = g.maxpool_temporal(h, c.pool)?;
        h = g.relu(h);
    }
    let steps = g.shape(h)[1];
    let seq = g.permute(h, &[1, 0, 2])?;
    let mut seq = g.reshape(seq, [steps, cfg.lstm_input()])?;
    let u = cfg.lstm_hidden;
    for layer in 0..2 {
        let mut dirs = Vec::with_capacity(2);
        for dir in 0..2 {
            let base = LSTM_BASE + (2 * layer + dir) * 3;
            dirs.push(lstm_direction(g, seq, v[base], v[base + 1], v[base + 2], u, dir == 1)?);
        }
        seq = g.concat(&dirs, 1)?;
        seq = dropout(g, seq, cfg.dropout, dropout_rng.as_deref_mut())?;
    }
    // a = softmax(W2 tanh(W1 Hᵀ)) over time; h = a H
    let ht = g.transpose(seq)?;
    let scores = g.matmul(v[ATTN_W1], ht)?;
    let scores = g.tanh(scores);
    let scores = g.matmul(v[ATTN_W2], scores)?;
    let attention = g.softmax(scores, 1)?;
    let pooled = g.matmul(attention, seq)?;
    let feature = g.reshape(pooled, [cfg.feature_dim()])?;
    Ok(Encoded { feature, attention })
}

/// Class probabilities `softmax(W·h + b)`.
pub fn classify(g: &mut Graph<'_>, bound: &Bound, feature: Var) -> Result<Var> {
    let d = g.value(feature).len();
    let column = g.reshape(feature, [d, 1])?;
    let logits = g.matmul(bound.vars[CLS_W], column)?;
    let logits = g.add_bias(logits, bound.vars[CLS_B], 0)?;
    let classes = g.value(logits).len();
    let logits = g.reshape(logits, [classes])?;
    g.softmax(logits, 0)
}

/// Eval-mode feature for one spectrogram.
pub fn encode_feature(weights: &SnsaWeights, cfg: &SnsaConfig, x: &Spectrogram) -> Result<Vec<f64>> {
    let mut g = Graph::new();
    let bound = weights.bind(&mut g);
    let enc = encode(&mut g, &bound, cfg, weights, x, None)?;
    Ok(g.value(enc.feature).to_vec())
}

/// Eval-mode class probabilities for one spectrogram.
pub fn predict(weights: &SnsaWeights, cfg: &SnsaConfig, x: &Spectrogram) -> Result<Vec<f64>> {
    let mut g = Graph::new();
    let bound = weights.bind(&mut g);
    let enc = encode(&mut g, &bound, cfg, weights, x, None)?;
    let p = classify(&mut g, &bound, enc.feature)?;
    Ok(g.value(p).to_vec())
}
