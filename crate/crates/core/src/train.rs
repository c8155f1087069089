//! Source pretraining, unsupervised adaptation, the Adam optimizer and
//! UA/WA evaluation.
//!
//! Every pass is sequential: each example gets its own graph and the
//! per-example gradients are summed in batch order, so a fixed seed gives
//! bit-identical weights and logs.

use std::fmt;
use std::io::Write;
use std::str::FromStr;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::adapt::{graph_source_ce, graph_target_hard, LossBreakdown, NegativeSelection};
use crate::data::{LabeledCorpus, UnlabeledCorpus};
use crate::dsp::FeatureStats;
use crate::error::{Error, Result};
use crate::memory::{beta_schedule, ExternalMemory};
use crate::model::{classify, encode, encode_feature, predict, SnsaConfig, SnsaWeights, NUM_CLASSES};
use crate::tensor::{Graph, Var};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum Variant {
    #[serde(rename = "nnpm")]
    Nnpm,
    #[serde(rename = "snsa-f")]
    SnsaF,
    #[serde(rename = "snsa-wo-sl")]
    SnsaWoSl,
    #[serde(rename = "snsa-wo-hl")]
    SnsaWoHl,
}

impl Variant {
    pub const ALL: [Variant; 4] = [Variant::Nnpm, Variant::SnsaF, Variant::SnsaWoSl, Variant::SnsaWoHl];

    pub fn as_str(self) -> &'static str {
        match self {
            Variant::Nnpm => "nnpm",
            Variant::SnsaF => "snsa-f",
            Variant::SnsaWoSl => "snsa-wo-sl",
            Variant::SnsaWoHl => "snsa-wo-hl",
        }
    }
}

impl fmt::Display for Variant {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Variant {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Variant::ALL
            .into_iter()
            .find(|v| v.as_str() == s)
            .ok_or_else(|| Error::Config(format!("unknown variant `{s}` (nnpm, snsa-f, snsa-wo-sl, snsa-wo-hl)")))
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrainConfig {
    pub variant: Variant,
    pub epochs: usize,
    pub batch_size: usize,
    pub lr: f64,
    pub weight_decay: f64,
    pub dropout: f64,
    pub gamma: f64,
    pub beta_max: f64,
    pub lambda: f64,
    pub freeze_first_n_conv: usize,
    /// Refresh memory slots from each source batch during adaptation.
    pub memory_updates: bool,
    pub seed: u64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            variant: Variant::Nnpm,
            epochs: 50,
            batch_size: 32,
            lr: 1e-4,
            weight_decay: 5e-5,
            dropout: 0.5,
            gamma: 0.9,
            beta_max: 0.4,
            lambda: 0.01,
            freeze_first_n_conv: 2,
            memory_updates: true,
            seed: 0,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if self.epochs == 0 || self.batch_size == 0 {
            return Err(Error::Config("epochs and batch size must be positive".into()));
        }
        if !(self.lr >= 0.0 && self.lr.is_finite()) || !(self.weight_decay >= 0.0 && self.weight_decay.is_finite()) {
            return Err(Error::Config("learning rate and weight decay must be finite and ≥ 0".into()));
        }
        if !(0.0..1.0).contains(&self.dropout) {
            return Err(Error::Config(format!("dropout {} outside [0, 1)", self.dropout)));
        }
        if !(-1.0..=1.0).contains(&self.gamma) {
            return Err(Error::Config(format!("gamma {} outside [-1, 1]", self.gamma)));
        }
        if !(0.0..=1.0).contains(&self.beta_max) {
            return Err(Error::Config(format!("beta_max {} outside [0, 1]", self.beta_max)));
        }
        if !(self.lambda > 0.0 && self.lambda <= 1.0) {
            return Err(Error::Config(format!("lambda {} outside (0, 1]", self.lambda)));
        }
        if self.freeze_first_n_conv > 2 {
            return Err(Error::Config(format!("freeze {} > 2", self.freeze_first_n_conv)));
        }
        Ok(())
    }

    /// Negative slots used by the target loss of this variant.
    pub fn negative_selection(&self) -> NegativeSelection {
        match self.variant {
            Variant::SnsaWoHl => NegativeSelection::All,
            _ => NegativeSelection::Mined { lambda: self.lambda },
        }
    }
}

/// Independent RNG stream per phase and purpose, all derived from one seed.
fn phase_rng(seed: u64, stream: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stream);
    rng
}

const STREAM_INIT: u64 = 1;
const STREAM_PRETRAIN_ORDER: u64 = 2;
const STREAM_PRETRAIN_DROPOUT: u64 = 3;
const STREAM_SOURCE_ORDER: u64 = 4;
const STREAM_TARGET_ORDER: u64 = 5;
const STREAM_ADAPT_DROPOUT: u64 = 6;

#[derive(Clone, Debug)]
pub struct AdamState {
    pub m: Vec<Vec<f64>>,
    pub v: Vec<Vec<f64>>,
    pub step: u64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
}

impl AdamState {
    pub fn new(weights: &SnsaWeights) -> Self {
        let zeros: Vec<Vec<f64>> = weights.params().iter().map(|p| vec![0.0; p.tensor.numel()]).collect();
        AdamState {
            m: zeros.clone(),
            v: zeros,
            step: 0,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
        }
    }
}

/// Bias-corrected Adam with decoupled weight decay,
/// `p ← p − lr·(m̂/(√v̂+ε) + wd·p)`. Non-trainable parameters are skipped.
pub fn adam_step(
    weights: &mut SnsaWeights,
    grads: &[Vec<f64>],
    state: &mut AdamState,
    lr: f64,
    weight_decay: f64,
) -> Result<()> {
    if grads.len() != weights.params().len() {
        return Err(Error::Contract(format!(
            "{} gradient buffers for {} parameters",
            grads.len(),
            weights.params().len()
        )));
    }
    for (p, g) in weights.params().iter().zip(grads) {
        if p.trainable && g.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFiniteGradient(p.name.clone()));
        }
    }
    state.step += 1;
    let t = state.step as i32;
    let c1 = 1.0 - state.beta1.powi(t);
    let c2 = 1.0 - state.beta2.powi(t);
    for (k, p) in weights.params_mut().iter_mut().enumerate() {
        if !p.trainable {
            continue;
        }
        let (m, v) = (&mut state.m[k], &mut state.v[k]);
        for (i, w) in p.tensor.data_mut().iter_mut().enumerate() {
            let gi = grads[k][i];
            m[i] = state.beta1 * m[i] + (1.0 - state.beta1) * gi;
            v[i] = state.beta2 * v[i] + (1.0 - state.beta2) * gi * gi;
            let m_hat = m[i] / c1;
            let v_hat = v[i] / c2;
            *w -= lr * (m_hat / (v_hat.sqrt() + state.eps) + weight_decay * *w);
        }
    }
    Ok(())
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct EvalReport {
    /// `confusion[truth][predicted]`.
    pub confusion: [[u64; NUM_CLASSES]; NUM_CLASSES],
    pub ua: f64,
    pub wa: f64,
    pub class_counts: [u64; NUM_CLASSES],
}

impl EvalReport {
    pub fn from_predictions(truth: &[usize], predicted: &[usize]) -> Result<Self> {
        if truth.is_empty() || truth.len() != predicted.len() {
            return Err(Error::Input(format!(
                "{} labels vs {} predictions",
                truth.len(),
                predicted.len()
            )));
        }
        let mut confusion = [[0u64; NUM_CLASSES]; NUM_CLASSES];
        for (&t, &p) in truth.iter().zip(predicted) {
            if t >= NUM_CLASSES || p >= NUM_CLASSES {
                return Err(Error::Input(format!("class index {} outside 0..4", t.max(p))));
            }
            confusion[t][p] += 1;
        }
        let class_counts = confusion.map(|row| row.iter().sum());
        let correct: u64 = (0..NUM_CLASSES).map(|c| confusion[c][c]).sum();
        let present: Vec<usize> = (0..NUM_CLASSES).filter(|&c| class_counts[c] > 0).collect();
        let ua = present
            .iter()
            .map(|&c| confusion[c][c] as f64 / class_counts[c] as f64)
            .sum::<f64>()
            / present.len() as f64;
        Ok(EvalReport {
            confusion,
            ua,
            wa: correct as f64 / truth.len() as f64,
            class_counts,
        })
    }
}

fn argmax(p: &[f64]) -> usize {
    p.iter()
        .enumerate()
        .fold((0, f64::NEG_INFINITY), |best, (i, &v)| if v > best.1 { (i, v) } else { best })
        .0
}

pub fn evaluate(weights: &SnsaWeights, model: &SnsaConfig, corpus: &LabeledCorpus) -> Result<EvalReport> {
    if corpus.is_empty() {
        return Err(Error::Input("cannot evaluate an empty corpus".into()));
    }
    let predicted = corpus
        .features
        .iter()
        .map(|x| predict(weights, model, x).map(|p| argmax(&p)))
        .collect::<Result<Vec<_>>>()?;
    EvalReport::from_predictions(&corpus.labels, &predicted)
}

/// One JSON-lines metrics record.
#[derive(Clone, Debug, PartialEq, Serialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Record {
    Iteration {
        phase: &'static str,
        epoch: usize,
        iteration: usize,
        beta: f64,
        loss: LossBreakdown,
        mean_positives: f64,
        empty_fraction: f64,
    },
    Epoch {
        phase: &'static str,
        epoch: usize,
        beta: f64,
        loss: LossBreakdown,
        mean_positives: f64,
        empty_fraction: f64,
        class_multilabel_histogram: [u64; NUM_CLASSES],
        #[serde(skip_serializing_if = "Option::is_none")]
        eval: Option<EvalReport>,
    },
}

pub trait MetricsSink {
    fn record(&mut self, r: &Record) -> Result<()>;
}

impl MetricsSink for Vec<Record> {
    fn record(&mut self, r: &Record) -> Result<()> {
        self.push(r.clone());
        Ok(())
    }
}

/// Discards every record.
pub struct NullSink;

impl MetricsSink for NullSink {
    fn record(&mut self, _: &Record) -> Result<()> {
        Ok(())
    }
}

/// Writes each record as one JSON line.
pub struct JsonLines<W: Write>(pub W);

impl<W: Write> MetricsSink for JsonLines<W> {
    fn record(&mut self, r: &Record) -> Result<()> {
        let line = serde_json::to_string(r)?;
        writeln!(self.0, "{line}").map_err(|e| Error::io("metrics log", e))
    }
}

/// Draws fixed-size batches from a corpus, reshuffling on every pass.
struct Cycler {
    order: Vec<usize>,
    at: usize,
    rng: ChaCha8Rng,
}

impl Cycler {
    fn new(n: usize, rng: ChaCha8Rng) -> Self {
        let mut c = Cycler {
            order: (0..n).collect(),
            at: n,
            rng,
        };
        c.refill();
        c
    }

    fn refill(&mut self) {
        self.order.shuffle(&mut self.rng);
        self.at = 0;
    }

    fn take(&mut self, k: usize) -> Vec<usize> {
        let mut out = Vec::with_capacity(k);
        while out.len() < k {
            if self.at == self.order.len() {
                self.refill();
            }
            out.push(self.order[self.at]);
            self.at += 1;
        }
        out
    }
}

fn zero_grads(weights: &SnsaWeights) -> Vec<Vec<f64>> {
    weights.params().iter().map(|p| vec![0.0; p.tensor.numel()]).collect()
}

fn accumulate(acc: &mut [Vec<f64>], vars: &[Var], grads: &crate::tensor::Gradients) {
    for (buf, &v) in acc.iter_mut().zip(vars) {
        if let Some(g) = grads.wrt(v) {
            buf.iter_mut().zip(g).for_each(|(a, b)| *a += b);
        }
    }
}

/// Adds `scale · ∂CE/∂θ` for one labeled example into `acc`; returns the
/// example's CE and its train-mode feature.
fn source_step(
    weights: &SnsaWeights,
    model: &SnsaConfig,
    x: &crate::dsp::Spectrogram,
    label: usize,
    scale: f64,
    rng: &mut ChaCha8Rng,
    acc: Option<&mut [Vec<f64>]>,
) -> Result<(f64, Vec<f64>)> {
    let mut g = Graph::new();
    let bound = weights.bind(&mut g);
    let enc = encode(&mut g, &bound, model, weights, x, Some(rng))?;
    let feature = g.value(enc.feature).to_vec();
    let probs = classify(&mut g, &bound, enc.feature)?;
    let ce = graph_source_ce(&mut g, probs, label)?;
    let value = g.value(ce)[0];
    if let Some(acc) = acc {
        let loss = g.scale(ce, scale);
        accumulate(acc, bound.vars(), &g.backward(loss)?);
    }
    Ok((value, feature))
}

fn check_corpus(name: &str, n: usize) -> Result<()> {
    if n == 0 {
        return Err(Error::Config(format!("{name} corpus is empty")));
    }
    Ok(())
}

#[derive(Clone, Debug)]
pub struct Trained {
    pub weights: SnsaWeights,
    /// Best validation epoch and its weights and report, when a validation
    /// corpus was supplied.
    pub best: Option<(usize, SnsaWeights, EvalReport)>,
}

fn track_best(
    best: &mut Option<(usize, SnsaWeights, EvalReport)>,
    epoch: usize,
    weights: &SnsaWeights,
    report: &EvalReport,
    key: impl Fn(&EvalReport) -> f64,
) {
    if best.as_ref().is_none_or(|(_, _, r)| key(report) > key(r)) {
        *best = Some((epoch, weights.clone(), report.clone()));
    }
}

/// Trains encoder and classifier on the labeled source corpus with
/// cross-entropy only. Input normalization statistics are taken from
/// `corpus`.
pub fn pretrain_source(
    model: &SnsaConfig,
    corpus: &LabeledCorpus,
    cfg: &TrainConfig,
    validation: Option<&LabeledCorpus>,
    sink: &mut dyn MetricsSink,
) -> Result<Trained> {
    cfg.validate()?;
    check_corpus("source", corpus.len())?;
    if corpus.class_count() < 2 {
        return Err(Error::Config("source corpus needs at least two classes".into()));
    }
    let mut model = model.clone();
    model.dropout = cfg.dropout;
    let mut weights = SnsaWeights::init(&model, phase_rng(cfg.seed, STREAM_INIT).next_seed())?;
    weights.set_input_stats(FeatureStats::compute(&corpus.features)?)?;
    let mut adam = AdamState::new(&weights);
    let mut order_rng = phase_rng(cfg.seed, STREAM_PRETRAIN_ORDER);
    let mut dropout_rng = phase_rng(cfg.seed, STREAM_PRETRAIN_DROPOUT);
    let mut best = None;
    let mut iteration = 0;
    for epoch in 0..cfg.epochs {
        let mut order: Vec<usize> = (0..corpus.len()).collect();
        order.shuffle(&mut order_rng);
        let mut epoch_ce = 0.0;
        for batch in order.chunks(cfg.batch_size) {
            let mut acc = zero_grads(&weights);
            let scale = 1.0 / batch.len() as f64;
            let mut ce = 0.0;
            for &i in batch {
                let (v, _) = source_step(
                    &weights,
                    &model,
                    &corpus.features[i],
                    corpus.labels[i],
                    scale,
                    &mut dropout_rng,
                    Some(&mut acc),
                )?;
                ce += v;
            }
            adam_step(&mut weights, &acc, &mut adam, cfg.lr, cfg.weight_decay)?;
            let loss = LossBreakdown::new(ce * scale, 0.0, 0.0);
            epoch_ce += ce;
            sink.record(&Record::Iteration {
                phase: "pretrain",
                epoch,
                iteration,
                beta: 0.0,
                loss,
                mean_positives: 0.0,
                empty_fraction: 0.0,
            })?;
            iteration += 1;
        }
        let eval = validation.map(|v| evaluate(&weights, &model, v)).transpose()?;
        if let Some(report) = &eval {
            track_best(&mut best, epoch, &weights, report, |r| r.ua);
        }
        sink.record(&Record::Epoch {
            phase: "pretrain",
            epoch,
            beta: 0.0,
            loss: LossBreakdown::new(epoch_ce / corpus.len() as f64, 0.0, 0.0),
            mean_positives: 0.0,
            empty_fraction: 0.0,
            class_multilabel_histogram: [0; NUM_CLASSES],
            eval,
        })?;
    }
    Ok(Trained { weights, best })
}

trait NextSeed {
    fn next_seed(&mut self) -> u64;
}

impl NextSeed for ChaCha8Rng {
    fn next_seed(&mut self) -> u64 {
        rand::RngCore::next_u64(self)
    }
}

/// Dropout-off source features, one slot per source example.
pub fn init_memory(weights: &SnsaWeights, model: &SnsaConfig, source: &LabeledCorpus) -> Result<ExternalMemory> {
    let features = source
        .features
        .iter()
        .map(|x| encode_feature(weights, model, x))
        .collect::<Result<Vec<_>>>()?;
    ExternalMemory::init(&features, source.labels.clone())
}

#[derive(Clone, Debug)]
pub struct Adapted {
    pub weights: SnsaWeights,
    pub memory: ExternalMemory,
    pub best: Option<(usize, SnsaWeights, EvalReport)>,
}

/// Unsupervised adaptation of pretrained `weights` to the target corpus.
/// `validation`, when given, is evaluated after every epoch and the
/// best-WA epoch is kept alongside the final weights.
pub fn adapt(
    weights: &SnsaWeights,
    model: &SnsaConfig,
    source: &LabeledCorpus,
    target: &UnlabeledCorpus,
    cfg: &TrainConfig,
    validation: Option<&LabeledCorpus>,
    sink: &mut dyn MetricsSink,
) -> Result<Adapted> {
    cfg.validate()?;
    check_corpus("source", source.len())?;
    check_corpus("target", target.len())?;
    let mut model = model.clone();
    model.dropout = cfg.dropout;
    let mut weights = weights.clone();
    let mut memory = init_memory(&weights, &model, source)?;
    if cfg.variant == Variant::SnsaF {
        return Ok(Adapted {
            weights,
            memory,
            best: None,
        });
    }
    weights.set_frozen(cfg.freeze_first_n_conv)?;
    let mut adam = AdamState::new(&weights);
    let mut source_batches = Cycler::new(source.len(), phase_rng(cfg.seed, STREAM_SOURCE_ORDER));
    let mut target_batches = Cycler::new(target.len(), phase_rng(cfg.seed, STREAM_TARGET_ORDER));
    let mut dropout_rng = phase_rng(cfg.seed, STREAM_ADAPT_DROPOUT);
    let per_epoch = source.len().max(target.len()).div_ceil(cfg.batch_size);
    let use_ce = cfg.variant != Variant::SnsaWoSl;
    let selection = cfg.negative_selection();
    let mut best = None;
    let mut iteration = 0;
    for epoch in 0..cfg.epochs {
        let beta = beta_schedule(epoch, cfg.epochs, cfg.beta_max)?;
        memory.set_beta(beta)?;
        let mut sums = LossBreakdown::default();
        let (mut positives, mut empties, mut seen) = (0usize, 0usize, 0usize);
        let mut histogram = [0u64; NUM_CLASSES];
        for _ in 0..per_epoch {
            let mut acc = zero_grads(&weights);
            let s_idx = source_batches.take(cfg.batch_size);
            let t_idx = target_batches.take(cfg.batch_size);
            let s_scale = 1.0 / s_idx.len() as f64;
            let t_scale = 1.0 / t_idx.len() as f64;

            let mut ce = 0.0;
            let mut fresh = Vec::with_capacity(s_idx.len());
            for &i in &s_idx {
                let (v, f) = source_step(
                    &weights,
                    &model,
                    &source.features[i],
                    source.labels[i],
                    s_scale,
                    &mut dropout_rng,
                    use_ce.then_some(acc.as_mut_slice()),
                )?;
                ce += v;
                fresh.push(f);
            }
            if cfg.memory_updates {
                memory.write(&s_idx, &fresh, beta)?;
            }
            let snapshot = memory.read()?;

            let (mut pos, mut neg) = (0.0, 0.0);
            let (mut it_pos, mut it_empty) = (0usize, 0usize);
            for &i in &t_idx {
                let mut g = Graph::new();
                let bound = weights.bind(&mut g);
                let enc = encode(&mut g, &bound, &model, &weights, &target.features[i], Some(&mut dropout_rng))?;
                let (pseudo, p, n) = graph_target_hard(&mut g, &snapshot, memory.labels(), enc.feature, cfg.gamma, selection)?;
                it_pos += pseudo.positives.len();
                it_empty += usize::from(pseudo.positives.is_empty());
                for (c, on) in pseudo.class_multilabel.iter().enumerate() {
                    histogram[c] += u64::from(*on);
                }
                let terms: Vec<Var> = [p, n].into_iter().flatten().collect();
                pos += p.map_or(0.0, |v| g.value(v)[0]);
                neg += n.map_or(0.0, |v| g.value(v)[0]);
                if let Some(first) = terms.first().copied() {
                    let mut loss = first;
                    for &t in &terms[1..] {
                        loss = g.add(loss, t)?;
                    }
                    let loss = g.scale(loss, t_scale);
                    accumulate(&mut acc, bound.vars(), &g.backward(loss)?);
                }
            }
            adam_step(&mut weights, &acc, &mut adam, cfg.lr, cfg.weight_decay)?;

            let source_ce = if use_ce { ce * s_scale } else { 0.0 };
            let loss = LossBreakdown::new(source_ce, pos * t_scale, neg * t_scale);
            sums.source_ce += loss.source_ce;
            sums.target_pos += loss.target_pos;
            sums.target_neg += loss.target_neg;
            positives += it_pos;
            empties += it_empty;
            seen += t_idx.len();
            sink.record(&Record::Iteration {
                phase: "adapt",
                epoch,
                iteration,
                beta,
                loss,
                mean_positives: it_pos as f64 / t_idx.len() as f64,
                empty_fraction: it_empty as f64 / t_idx.len() as f64,
            })?;
            iteration += 1;
        }
        let eval = validation.map(|v| evaluate(&weights, &model, v)).transpose()?;
        if let Some(report) = &eval {
            track_best(&mut best, epoch, &weights, report, |r| r.wa);
        }
        let n = per_epoch as f64;
        sink.record(&Record::Epoch {
            phase: "adapt",
            epoch,
            beta,
            loss: LossBreakdown::new(sums.source_ce / n, sums.target_pos / n, sums.target_neg / n),
            mean_positives: positives as f64 / seen as f64,
            empty_fraction: empties as f64 / seen as f64,
            class_multilabel_histogram: histogram,
            eval,
        })?;
    }
    weights.set_frozen(0)?;
    Ok(Adapted { weights, memory, best })
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum SweepParam {
    #[serde(rename = "gamma")]
    Gamma,
    #[serde(rename = "freeze")]
    FreezeN,
}

impl SweepParam {
    pub fn as_str(self) -> &'static str {
        match self {
            SweepParam::Gamma => "gamma",
            SweepParam::FreezeN => "freeze",
        }
    }
}

impl FromStr for SweepParam {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "gamma" => Ok(SweepParam::Gamma),
            "freeze" | "freeze_n" | "freeze-n" => Ok(SweepParam::FreezeN),
            _ => Err(Error::Config(format!("unknown sweep parameter `{s}` (gamma, freeze)"))),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct SweepRow {
    pub param: SweepParam,
    pub value: f64,
    pub ua: f64,
    pub wa: f64,
    pub seed: u64,
}

/// Applies one sweep value to a copy of `base`.
pub fn with_sweep_value(base: &TrainConfig, param: SweepParam, value: f64) -> Result<TrainConfig> {
    let mut cfg = base.clone();
    match param {
        SweepParam::Gamma => cfg.gamma = value,
        SweepParam::FreezeN => {
            if value.fract() != 0.0 || !(0.0..=2.0).contains(&value) {
                return Err(Error::Config(format!("freeze value {value} is not one of 0, 1, 2")));
            }
            cfg.freeze_first_n_conv = value as usize;
        }
    }
    cfg.validate()?;
    Ok(cfg)
}

/// One adapt + evaluate run per value, all from the same pretrained weights.
#[allow(clippy::too_many_arguments)]
pub fn sweep(
    pretrained: &SnsaWeights,
    model: &SnsaConfig,
    source: &LabeledCorpus,
    target: &UnlabeledCorpus,
    eval: &LabeledCorpus,
    base: &TrainConfig,
    param: SweepParam,
    values: &[f64],
) -> Result<Vec<SweepRow>> {
    let configs = values
        .iter()
        .map(|&v| with_sweep_value(base, param, v))
        .collect::<Result<Vec<_>>>()?;
    let mut rows = Vec::with_capacity(values.len());
    for (cfg, &value) in configs.iter().zip(values) {
        let adapted = adapt(pretrained, model, source, target, cfg, None, &mut NullSink)?;
        let report = evaluate(&adapted.weights, model, eval)?;
        log::info!("{} = {value}: UA {:.4} WA {:.4}", param.as_str(), report.ua, report.wa);
        rows.push(SweepRow {
            param,
            value,
            ua: report.ua,
            wa: report.wa,
            seed: cfg.seed,
        });
    }
    Ok(rows)
}

pub fn sweep_csv(rows: &[SweepRow]) -> String {
    let mut out = String::from("param,value,ua,wa,seed\n");
    for r in rows {
        out.push_str(&format!("{},{},{},{},{}\n", r.param.as_str(), r.value, r.ua, r.wa, r.seed));
    }
    out
}
