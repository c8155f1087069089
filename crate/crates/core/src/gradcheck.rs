//! Finite-difference gradient checks for the graph ops and for the full
//! adaptation objective.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::adapt::{
    assign_pseudo_multilabel, graph_source_ce, graph_target_hard, mined_count, similarity_scores, NegativeSelection,
};
use crate::dsp::Spectrogram;
use crate::memory::{ExternalMemory, MemorySnapshot};
use crate::model::{classify, encode, encode_feature, ConvLayerConfig, SnsaConfig, SnsaWeights};
use crate::{Graph, Result, Var};

/// Central finite-difference gradient of `f` at `x`.
///
/// Only evaluates `f`; it never touches the backward rules it is used to check.
pub fn central_difference(mut f: impl FnMut(&[f64]) -> f64, x: &[f64], eps: f64) -> Vec<f64> {
    let mut probe = x.to_vec();
    (0..x.len())
        .map(|i| {
            let orig = probe[i];
            probe[i] = orig + eps;
            let plus = f(&probe);
            probe[i] = orig - eps;
            let minus = f(&probe);
            probe[i] = orig;
            (plus - minus) / (2.0 * eps)
        })
        .collect()
}

/// `max_i |a_i − n_i| / (|a_i| + 1e-8)`.
pub fn max_relative_error(analytic: &[f64], numeric: &[f64]) -> f64 {
    assert_eq!(analytic.len(), numeric.len());
    analytic
        .iter()
        .zip(numeric)
        .map(|(a, n)| (a - n).abs() / (a.abs() + 1e-8))
        .fold(0.0, f64::max)
}

pub type OpBuilder = dyn Fn(&mut Graph<'_>, &[Var]) -> Result<Var> + Send + Sync;

/// One op under test: input shapes, the range inputs are drawn from, and
/// the graph fragment applying the op.
pub struct OpCase {
    pub name: &'static str,
    pub shapes: Vec<Vec<usize>>,
    pub range: (f64, f64),
    pub build: Box<OpBuilder>,
}

impl std::fmt::Debug for OpCase {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("OpCase").field("name", &self.name).field("shapes", &self.shapes).finish()
    }
}

fn case(
    name: &'static str,
    shapes: &[&[usize]],
    range: (f64, f64),
    build: impl Fn(&mut Graph<'_>, &[Var]) -> Result<Var> + Send + Sync + 'static,
) -> OpCase {
    OpCase {
        name,
        shapes: shapes.iter().map(|s| s.to_vec()).collect(),
        range,
        build: Box::new(build),
    }
}

/// Every differentiable op of [`Graph`], in the configurations the encoder
/// uses plus a few off-default ones.
pub fn op_cases() -> Vec<OpCase> {
    let u = (-1.0, 1.0);
    vec![
        case("matmul", &[&[3, 4], &[4, 2]], u, |g, v| g.matmul(v[0], v[1])),
        case("transpose", &[&[3, 5]], u, |g, v| g.transpose(v[0])),
        case("conv2d", &[&[2, 6, 5], &[3, 2, 3, 3]], u, |g, v| g.conv2d(v[0], v[1], 1, 1)),
        case("conv2d stride 2", &[&[1, 7, 6], &[2, 1, 3, 2]], u, |g, v| g.conv2d(v[0], v[1], 2, 0)),
        case("add_bias axis 0", &[&[3, 4, 2], &[3]], u, |g, v| g.add_bias(v[0], v[1], 0)),
        case("add_bias axis 1", &[&[3, 4], &[4]], u, |g, v| g.add_bias(v[0], v[1], 1)),
        case("maxpool_temporal", &[&[2, 9, 3]], u, |g, v| g.maxpool_temporal(v[0], 3)),
        case("relu", &[&[4, 5]], u, |g, v| Ok(g.relu(v[0]))),
        case("tanh", &[&[4, 5]], (-2.0, 2.0), |g, v| Ok(g.tanh(v[0]))),
        case("sigmoid", &[&[4, 5]], (-3.0, 3.0), |g, v| Ok(g.sigmoid(v[0]))),
        case("add", &[&[3, 3], &[3, 3]], u, |g, v| g.add(v[0], v[1])),
        case("sub", &[&[3, 3], &[3, 3]], u, |g, v| g.sub(v[0], v[1])),
        case("mul", &[&[3, 3], &[3, 3]], u, |g, v| g.mul(v[0], v[1])),
        case("scale", &[&[6]], u, |g, v| Ok(g.scale(v[0], -1.7))),
        case("add_scalar", &[&[6]], u, |g, v| Ok(g.add_scalar(v[0], 0.3))),
        case("softmax axis 0", &[&[5]], (-2.0, 2.0), |g, v| g.softmax(v[0], 0)),
        case("softmax axis 1", &[&[3, 4]], (-2.0, 2.0), |g, v| g.softmax(v[0], 1)),
        case("softmax middle axis", &[&[2, 3, 2]], (-2.0, 2.0), |g, v| g.softmax(v[0], 1)),
        case("reshape", &[&[2, 6]], u, |g, v| g.reshape(v[0], [3, 4])),
        case("permute", &[&[2, 3, 4]], u, |g, v| g.permute(v[0], &[2, 0, 1])),
        case("slice", &[&[4, 5]], u, |g, v| g.slice(v[0], 1, 1, 3)),
        case("concat", &[&[2, 3], &[2, 2]], u, |g, v| g.concat(&[v[0], v[1]], 1)),
        case("select", &[&[7]], u, |g, v| g.select(v[0], &[6, 0, 3, 3])),
        case("sum", &[&[3, 4]], u, |g, v| Ok(g.sum(v[0]))),
        case("ln", &[&[6]], (0.2, 3.0), |g, v| Ok(g.ln(v[0], 1e-12))),
        case("l2_normalize", &[&[6]], u, |g, v| g.l2_normalize(v[0])),
    ]
}

/// Loss = Σ output ⊙ probe with a fixed random probe, so every output
/// element carries a distinct upstream gradient.
fn probed_loss(op: &OpCase, inputs: &[Vec<f64>], probe_seed: u64, grads: bool) -> Result<(f64, Vec<Vec<f64>>)> {
    let mut g = Graph::new();
    let vars = op
        .shapes
        .iter()
        .zip(inputs)
        .map(|(s, d)| g.variable(s.clone(), d.clone()))
        .collect::<Result<Vec<_>>>()?;
    let out = (op.build)(&mut g, &vars)?;
    let mut rng = ChaCha8Rng::seed_from_u64(probe_seed);
    let probe: Vec<f64> = (0..g.value(out).len()).map(|_| rng.gen_range(-1.0..1.0)).collect();
    let p = g.constant(g.shape(out).to_vec(), probe)?;
    let weighted = g.mul(out, p)?;
    let loss = g.sum(weighted);
    let value = g.value(loss)[0];
    if !grads {
        return Ok((value, Vec::new()));
    }
    let gr = g.backward(loss)?;
    let per_input = vars
        .iter()
        .map(|&v| gr.wrt(v).map(<[f64]>::to_vec).unwrap_or_else(|| vec![0.0; g.value(v).len()]))
        .collect();
    Ok((value, per_input))
}

/// Largest relative error between backward and central differences over
/// all inputs of `op`, for inputs drawn with `seed`.
pub fn op_error(op: &OpCase, seed: u64, eps: f64) -> Result<f64> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed.wrapping_mul(7919).wrapping_add(1));
    let inputs: Vec<Vec<f64>> = op
        .shapes
        .iter()
        .map(|s| (0..s.iter().product()).map(|_| rng.gen_range(op.range.0..op.range.1)).collect())
        .collect();
    let (_, analytic) = probed_loss(op, &inputs, seed, true)?;
    let mut worst: f64 = 0.0;
    for k in 0..inputs.len() {
        let mut perturbed = inputs.clone();
        let numeric = central_difference(
            |x| {
                perturbed[k].copy_from_slice(x);
                probed_loss(op, &perturbed, seed, false).map(|r| r.0).unwrap_or(f64::NAN)
            },
            &inputs[k],
            eps,
        );
        worst = worst.max(max_relative_error(&analytic[k], &numeric));
    }
    Ok(worst)
}

const SLOTS: usize = 10;
const COMPOSED_LAMBDA: f64 = 0.3;
const DECISION_MARGIN: f64 = 1e-3;

/// Small architecture for the composed check.
pub fn tiny_config() -> SnsaConfig {
    let conv = ConvLayerConfig {
        channels: 2,
        kernel: 3,
        pool: 2,
    };
    SnsaConfig {
        frames: 12,
        mel_bins: 4,
        conv: [conv.clone(), conv],
        lstm_hidden: 3,
        attention_hidden: 4,
        attention_heads: 2,
        classes: 4,
        dropout: 0.3,
    }
}

struct Composed {
    cfg: SnsaConfig,
    source: Spectrogram,
    label: usize,
    target: Spectrogram,
    snapshot: MemorySnapshot,
    slot_labels: Vec<usize>,
    gamma: f64,
    dropout_seed: u64,
}

fn spectrogram(rng: &mut ChaCha8Rng, cfg: &SnsaConfig) -> Result<Spectrogram> {
    let data = (0..cfg.frames * cfg.mel_bins).map(|_| rng.gen_range(-1.5..1.5)).collect();
    Spectrogram::new(data, cfg.frames, cfg.mel_bins)
}

/// A case whose threshold and mining decisions sit at least
/// `DECISION_MARGIN` away from any score, or `None`.
fn composed_case(seed: u64, weights: &SnsaWeights) -> Result<Option<Composed>> {
    let cfg = tiny_config();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let source = spectrogram(&mut rng, &cfg)?;
    let target = spectrogram(&mut rng, &cfg)?;
    let h = encode_feature(weights, &cfg, &target)?;
    // even slots are near copies of the target feature, odd ones far
    let rows: Vec<Vec<f64>> = (0..SLOTS)
        .map(|j| {
            let noise = if j % 2 == 0 { 0.3 } else { 3.0 };
            h.iter().map(|v| v + noise * rng.gen_range(-1.0..1.0) * v.abs().max(0.1)).collect()
        })
        .collect();
    let slot_labels: Vec<usize> = (0..SLOTS).map(|j| j % 4).collect();
    let snapshot = ExternalMemory::init(&rows, slot_labels.clone())?.read()?;
    let scores = similarity_scores(&snapshot, &h)?;

    let mut sorted = scores.clone();
    sorted.sort_by(|a, b| b.total_cmp(a));
    let (gap, k) = (1..SLOTS / 2)
        .map(|k| (sorted[k - 1] - sorted[k], k))
        .fold((0.0, 0), |b, x| if x.0 > b.0 { x } else { b });
    if gap < DECISION_MARGIN {
        return Ok(None);
    }
    let gamma = 0.5 * (sorted[k - 1] + sorted[k]);
    let pseudo = assign_pseudo_multilabel(&scores, &slot_labels, gamma)?;
    let mut neg: Vec<f64> = pseudo.negatives().iter().map(|&j| scores[j]).collect();
    neg.sort_by(|a, b| b.total_cmp(a));
    let m = mined_count(COMPOSED_LAMBDA, neg.len());
    if m < neg.len() && neg[m - 1] - neg[m] < DECISION_MARGIN {
        return Ok(None);
    }
    Ok(Some(Composed {
        cfg,
        source,
        label: rng.gen_range(0..4),
        target,
        snapshot,
        slot_labels,
        gamma,
        dropout_seed: seed.wrapping_add(1000),
    }))
}

/// CE on the source example plus pos and neg on the target example, with
/// dropout masks fixed by the case seed.
fn composed_objective(weights: &SnsaWeights, c: &Composed, grads: bool) -> Result<(f64, Vec<Vec<f64>>)> {
    let mut g = Graph::new();
    let bound = weights.bind(&mut g);
    let mut rng = ChaCha8Rng::seed_from_u64(c.dropout_seed);
    let src = encode(&mut g, &bound, &c.cfg, weights, &c.source, Some(&mut rng))?;
    let probs = classify(&mut g, &bound, src.feature)?;
    let ce = graph_source_ce(&mut g, probs, c.label)?;
    let tgt = encode(&mut g, &bound, &c.cfg, weights, &c.target, Some(&mut rng))?;
    let sel = NegativeSelection::Mined {
        lambda: COMPOSED_LAMBDA,
    };
    let (_, pos, neg) = graph_target_hard(&mut g, &c.snapshot, &c.slot_labels, tgt.feature, c.gamma, sel)?;
    let mut total = ce;
    for t in [pos, neg].into_iter().flatten() {
        total = g.add(total, t)?;
    }
    let value = g.value(total)[0];
    if !grads {
        return Ok((value, Vec::new()));
    }
    let gr = g.backward(total)?;
    let per_param = bound
        .vars()
        .iter()
        .zip(weights.params())
        .map(|(&v, p)| gr.wrt(v).map(<[f64]>::to_vec).unwrap_or_else(|| vec![0.0; p.tensor.numel()]))
        .collect();
    Ok((value, per_param))
}

/// Largest relative error, over every parameter of [`tiny_config`] weights
/// initialized with `seed`, between backward and central differences of
/// the full objective. `None` when the seed's random case puts a score too
/// close to a pseudo-label or mining boundary.
pub fn composed_error(seed: u64, eps: f64) -> Result<Option<f64>> {
    let weights = SnsaWeights::init(&tiny_config(), seed)?;
    let Some(c) = composed_case(seed, &weights)? else {
        return Ok(None);
    };
    let (_, analytic) = composed_objective(&weights, &c, true)?;
    let mut probe = weights.clone();
    let mut worst: f64 = 0.0;
    for (k, grad) in analytic.iter().enumerate() {
        let start = weights.params()[k].tensor.data().to_vec();
        let numeric = central_difference(
            |x| {
                probe.params_mut()[k].tensor.data_mut().copy_from_slice(x);
                composed_objective(&probe, &c, false).map(|r| r.0).unwrap_or(f64::NAN)
            },
            &start,
            eps,
        );
        probe.params_mut()[k].tensor.data_mut().copy_from_slice(&start);
        worst = worst.max(max_relative_error(grad, &numeric));
    }
    Ok(Some(worst))
}
