//! Pseudo-multilabel assignment against the memory snapshot and the loss
//! terms of the adaptation objective.
//!
//! The plain `f64` functions are the reference implementations; the
//! `graph_*` variants record the same arithmetic on a [`Graph`] so the
//! encoder can be trained through them.

use serde::Serialize;

use crate::error::{Error, Result};
use crate::memory::MemorySnapshot;
use crate::model::NUM_CLASSES;
use crate::tensor::{Graph, Var};

pub const CE_LOG_FLOOR: f64 = 1e-12;

#[derive(Clone, Debug, PartialEq)]
pub struct PseudoTarget {
    pub slot_scores: Vec<f64>,
    /// Slots with `score ≥ γ`, ascending.
    pub positives: Vec<usize>,
    pub slot_targets: Vec<f64>,
    pub class_multilabel: [bool; NUM_CLASSES],
}

impl PseudoTarget {
    /// Slots not in the positive set, ascending.
    pub fn negatives(&self) -> Vec<usize> {
        (0..self.slot_scores.len()).filter(|&j| self.slot_targets[j] == 0.0).collect()
    }
}

/// How the negative part of the target loss picks its slots.
#[derive(Clone, Copy, Debug, PartialEq)]
pub enum NegativeSelection {
    /// Top `⌈λ·|negatives|⌉` negatives by score.
    Mined { lambda: f64 },
    All,
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize)]
pub struct LossBreakdown {
    pub source_ce: f64,
    pub target_pos: f64,
    pub target_neg: f64,
    pub target_hard: f64,
    pub total: f64,
}

impl LossBreakdown {
    pub fn new(source_ce: f64, target_pos: f64, target_neg: f64) -> Self {
        let target_hard = target_pos + target_neg;
        LossBreakdown {
            source_ce,
            target_pos,
            target_neg,
            target_hard,
            total: total_loss(source_ce, target_hard),
        }
    }
}

fn unit(h: &[f64]) -> Result<Vec<f64>> {
    let norm = h.iter().map(|v| v * v).sum::<f64>().sqrt();
    if norm == 0.0 || !norm.is_finite() {
        return Err(Error::Input("query feature has zero or non-finite norm".into()));
    }
    Ok(h.iter().map(|v| v / norm).collect())
}

/// Cosine similarity of `h` with every memory slot.
pub fn similarity_scores(snapshot: &MemorySnapshot, h: &[f64]) -> Result<Vec<f64>> {
    if h.len() != snapshot.dim() {
        return Err(Error::dim(
            "similarity_scores",
            format!("query dim {} vs memory dim {}", h.len(), snapshot.dim()),
        ));
    }
    let q = unit(h)?;
    Ok((0..snapshot.len())
        .map(|j| snapshot.row(j).iter().zip(&q).map(|(m, x)| m * x).sum())
        .collect())
}

pub fn assign_pseudo_multilabel(scores: &[f64], slot_labels: &[usize], gamma: f64) -> Result<PseudoTarget> {
    if scores.len() != slot_labels.len() {
        return Err(Error::dim(
            "assign_pseudo_multilabel",
            format!("{} scores vs {} labels", scores.len(), slot_labels.len()),
        ));
    }
    let mut positives = Vec::new();
    let mut slot_targets = vec![0.0; scores.len()];
    let mut class_multilabel = [false; NUM_CLASSES];
    for (j, &s) in scores.iter().enumerate() {
        if s >= gamma {
            positives.push(j);
            slot_targets[j] = 1.0;
            let c = slot_labels[j];
            if c >= NUM_CLASSES {
                return Err(Error::Input(format!("slot {j} has label {c}")));
            }
            class_multilabel[c] = true;
        }
    }
    Ok(PseudoTarget {
        slot_scores: scores.to_vec(),
        positives,
        slot_targets,
        class_multilabel,
    })
}

/// Number of negatives kept at ratio `lambda`. The small slack keeps
/// products such as `0.07 · 100` from rounding up past an integer.
pub fn mined_count(lambda: f64, negatives: usize) -> usize {
    if negatives == 0 {
        return 0;
    }
    ((lambda * negatives as f64 - 1e-9).ceil() as usize).clamp(1, negatives)
}

/// The hardest (highest-scoring) negatives, returned in ascending index
/// order. Ties in score keep the lower index.
pub fn hard_negative_mine(scores: &[f64], negatives: &[usize], lambda: f64) -> Result<Vec<usize>> {
    if !(lambda > 0.0 && lambda <= 1.0) {
        return Err(Error::Input(format!("lambda {lambda} outside (0, 1]")));
    }
    if let Some(&j) = negatives.iter().find(|&&j| j >= scores.len()) {
        return Err(Error::Input(format!("negative index {j} out of range")));
    }
    let mut ranked = negatives.to_vec();
    ranked.sort_by(|&a, &b| scores[b].total_cmp(&scores[a]).then(a.cmp(&b)));
    ranked.truncate(mined_count(lambda, negatives.len()));
    ranked.sort_unstable();
    Ok(ranked)
}

pub fn source_ce_loss(probs: &[Vec<f64>], labels: &[usize]) -> Result<f64> {
    if probs.len() != labels.len() || probs.is_empty() {
        return Err(Error::Input(format!("{} probability rows for {} labels", probs.len(), labels.len())));
    }
    let mut total = 0.0;
    for (row, &y) in probs.iter().zip(labels) {
        let p = row
            .get(y)
            .ok_or_else(|| Error::Input(format!("label {y} outside {} classes", row.len())))?;
        total += -p.max(CE_LOG_FLOOR).ln();
    }
    Ok(total / labels.len() as f64)
}

/// Positive-set mean squared error and the per-slot squared error of every
/// negative as `(slot, error)` pairs.
pub fn target_mse_loss(scores: &[f64], targets: &[f64]) -> Result<(f64, Vec<(usize, f64)>)> {
    if scores.len() != targets.len() {
        return Err(Error::dim("target_mse_loss", format!("{} scores vs {} targets", scores.len(), targets.len())));
    }
    let mut pos_sum = 0.0;
    let mut pos_n = 0usize;
    let mut neg = Vec::new();
    for (j, (&s, &t)) in scores.iter().zip(targets).enumerate() {
        let e = (s - t) * (s - t);
        if t == 1.0 {
            pos_sum += e;
            pos_n += 1;
        } else {
            neg.push((j, e));
        }
    }
    let pos = if pos_n == 0 { 0.0 } else { pos_sum / pos_n as f64 };
    Ok((pos, neg))
}

/// `(L_pos, L_neg)` for one target example.
pub fn target_hard_loss(pseudo: &PseudoTarget, selection: NegativeSelection) -> Result<(f64, f64)> {
    let (pos, neg_errors) = target_mse_loss(&pseudo.slot_scores, &pseudo.slot_targets)?;
    let chosen = negative_slots(pseudo, selection)?;
    let neg = if chosen.is_empty() {
        0.0
    } else {
        let mut sum = 0.0;
        for (j, e) in &neg_errors {
            if chosen.binary_search(j).is_ok() {
                sum += e;
            }
        }
        sum / chosen.len() as f64
    };
    Ok((pos, neg))
}

pub fn negative_slots(pseudo: &PseudoTarget, selection: NegativeSelection) -> Result<Vec<usize>> {
    let negatives = pseudo.negatives();
    match selection {
        NegativeSelection::All => Ok(negatives),
        NegativeSelection::Mined { lambda } => hard_negative_mine(&pseudo.slot_scores, &negatives, lambda),
    }
}

pub fn total_loss(source_ce: f64, target_hard: f64) -> f64 {
    source_ce + target_hard
}

/// `−ln p[label]` on the graph, clamped like [`source_ce_loss`].
pub fn graph_source_ce(g: &mut Graph<'_>, probs: Var, label: usize) -> Result<Var> {
    if label >= g.value(probs).len() {
        return Err(Error::Input(format!("label {label} outside {} classes", g.value(probs).len())));
    }
    let p = g.select(probs, &[label])?;
    let lp = g.ln(p, CE_LOG_FLOOR);
    let s = g.sum(lp);
    Ok(g.scale(s, -1.0))
}

/// Scores of a live feature against a detached snapshot, shape `[n]`.
pub fn graph_scores(g: &mut Graph<'_>, snapshot: &MemorySnapshot, feature: Var) -> Result<Var> {
    let d = g.value(feature).len();
    if d != snapshot.dim() {
        return Err(Error::dim("graph_scores", format!("feature dim {d} vs memory dim {}", snapshot.dim())));
    }
    let q = g.l2_normalize(feature)?;
    let q = g.reshape(q, [d, 1])?;
    let m = g.constant([snapshot.len(), d], snapshot.as_slice().to_vec())?;
    let s = g.matmul(m, q)?;
    g.reshape(s, [snapshot.len()])
}

/// Mean of `(scores[j] − target)²` over `slots`, or `None` for an empty set.
fn graph_set_mse(g: &mut Graph<'_>, scores: Var, slots: &[usize], target: f64) -> Result<Option<Var>> {
    if slots.is_empty() {
        return Ok(None);
    }
    let picked = g.select(scores, slots)?;
    let diff = g.add_scalar(picked, -target);
    let sq = g.mul(diff, diff)?;
    let s = g.sum(sq);
    Ok(Some(g.scale(s, 1.0 / slots.len() as f64)))
}

/// Target loss for one example. Returns the pseudo target (computed from the
/// forward scores) and optional `(pos, neg)` graph terms; absent terms are
/// zero with no gradient.
pub fn graph_target_hard(
    g: &mut Graph<'_>,
    snapshot: &MemorySnapshot,
    slot_labels: &[usize],
    feature: Var,
    gamma: f64,
    selection: NegativeSelection,
) -> Result<(PseudoTarget, Option<Var>, Option<Var>)> {
    let scores = graph_scores(g, snapshot, feature)?;
    let pseudo = assign_pseudo_multilabel(g.value(scores), slot_labels, gamma)?;
    let chosen = negative_slots(&pseudo, selection)?;
    let pos = graph_set_mse(g, scores, &pseudo.positives, 1.0)?;
    let neg = graph_set_mse(g, scores, &chosen, 0.0)?;
    Ok((pseudo, pos, neg))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::memory::ExternalMemory;

    fn snapshot(rows: &[Vec<f64>]) -> MemorySnapshot {
        ExternalMemory::init(rows, vec![0; rows.len()]).unwrap().read().unwrap()
    }

    #[test]
    fn orthonormal_scores() {
        let eye: Vec<Vec<f64>> = (0..4).map(|i| (0..4).map(|j| f64::from(u8::from(i == j))).collect()).collect();
        let snap = snapshot(&eye);
        assert_eq!(similarity_scores(&snap, &eye[3]).unwrap(), vec![0.0, 0.0, 0.0, 1.0]);
        let neg0: Vec<f64> = eye[0].iter().map(|v| -v * 2.0).collect();
        assert_eq!(similarity_scores(&snap, &neg0).unwrap()[0], -1.0);
        assert!(matches!(similarity_scores(&snap, &[1.0, 0.0]), Err(Error::Dimension { .. })));
    }

    #[test]
    fn pseudo_label_hand_example() {
        let p = assign_pseudo_multilabel(&[0.95, 0.5, 0.91], &[2, 0, 2], 0.9).unwrap();
        assert_eq!(p.positives, vec![0, 2]);
        assert_eq!(p.class_multilabel, [false, false, true, false]);
        assert_eq!(p.slot_targets, vec![1.0, 0.0, 1.0]);

        let none = assign_pseudo_multilabel(&[0.99, 0.5], &[0, 1], 1.0).unwrap();
        assert!(none.positives.is_empty());
        assert_eq!(none.slot_targets, vec![0.0, 0.0]);
        let all = assign_pseudo_multilabel(&[-1.0, 0.2], &[0, 1], -1.0).unwrap();
        assert_eq!(all.positives, vec![0, 1]);
    }

    #[test]
    fn mining_examples() {
        let s = [0.9, 0.1, 0.5, 0.3];
        assert_eq!(hard_negative_mine(&s, &[0, 1, 2, 3], 0.5).unwrap(), vec![0, 2]);
        assert_eq!(hard_negative_mine(&s, &[0, 1, 2, 3], 1.0).unwrap(), vec![0, 1, 2, 3]);
        let many: Vec<f64> = (0..100).map(|i| ((i * 37) % 100) as f64 / 100.0).collect();
        let idx: Vec<usize> = (0..100).collect();
        let top = hard_negative_mine(&many, &idx, 0.01).unwrap();
        assert_eq!(top.len(), 1);
        assert_eq!(many[top[0]], 0.99);
        assert!(hard_negative_mine(&s, &[], 0.5).unwrap().is_empty());
        assert!(hard_negative_mine(&s, &[0], 0.0).is_err());
        // ties keep the lower index
        assert_eq!(hard_negative_mine(&[0.5, 0.5, 0.5], &[0, 1, 2], 0.34).unwrap(), vec![0, 1]);
        assert_eq!(mined_count(0.07, 100), 7);
    }

    #[test]
    fn cross_entropy_examples() {
        let uniform = vec![vec![0.25; 4]; 3];
        let ce = source_ce_loss(&uniform, &[0, 3, 1]).unwrap();
        assert!((ce - 4f64.ln()).abs() < 1e-10);
        assert_eq!(source_ce_loss(&[vec![0.0, 1.0, 0.0, 0.0]], &[1]).unwrap(), 0.0);
        assert!(source_ce_loss(&uniform[..1], &[4]).is_err());
        let rows = vec![vec![0.1, 0.2, 0.3, 0.4], vec![0.7, 0.1, 0.1, 0.1], vec![0.25, 0.25, 0.4, 0.1]];
        let labels = [3, 0, 2];
        let naive = (-(0.4f64.ln()) - 0.7f64.ln() - 0.4f64.ln()) / 3.0;
        assert!((source_ce_loss(&rows, &labels).unwrap() - naive).abs() < 1e-12);
    }

    #[test]
    fn target_loss_examples() {
        let (pos, neg) = target_mse_loss(&[1.0, 0.0], &[1.0, 0.0]).unwrap();
        assert_eq!(pos, 0.0);
        assert_eq!(neg, vec![(1, 0.0)]);
        let (pos, _) = target_mse_loss(&[0.8], &[1.0]).unwrap();
        assert!((pos - 0.04).abs() < 1e-15);

        let p = assign_pseudo_multilabel(&[0.8, 0.6, 0.1], &[0, 1, 2], 0.7).unwrap();
        let (pos, neg) = target_hard_loss(&p, NegativeSelection::Mined { lambda: 0.5 }).unwrap();
        assert!((pos + neg - 0.40).abs() < 1e-12);

        let zero = assign_pseudo_multilabel(&[0.0; 3], &[0; 3], 0.9).unwrap();
        assert_eq!(target_hard_loss(&zero, NegativeSelection::All).unwrap(), (0.0, 0.0));
    }

    #[test]
    fn all_negatives_equals_mining_at_lambda_one() {
        let p = assign_pseudo_multilabel(&[0.95, -0.2, 0.4, 0.91, 0.3], &[1, 2, 3, 0, 1], 0.9).unwrap();
        assert_eq!(
            target_hard_loss(&p, NegativeSelection::All).unwrap(),
            target_hard_loss(&p, NegativeSelection::Mined { lambda: 1.0 }).unwrap()
        );
    }

    #[test]
    fn breakdown_is_additive() {
        let b = LossBreakdown::new(1.386, 0.04, 0.36);
        assert_eq!(b.target_hard, b.target_pos + b.target_neg);
        assert_eq!(b.total, b.source_ce + b.target_hard);
        assert!((b.total - 1.786).abs() < 1e-12);
        assert_eq!(total_loss(0.0, 0.0), 0.0);
    }

    #[test]
    fn graph_terms_agree_with_reference() {
        let rows = vec![vec![1.0, 0.2, -0.3], vec![0.1, 1.0, 0.0], vec![-0.5, 0.5, 0.5], vec![0.9, 0.1, -0.2]];
        let mem = ExternalMemory::init(&rows, vec![0, 1, 2, 0]).unwrap();
        let snap = mem.read().unwrap();
        let h = vec![0.8, 0.15, -0.25];
        let mut g = Graph::new();
        let x = g.variable([3], h.clone()).unwrap();
        let sel = NegativeSelection::Mined { lambda: 0.5 };
        let (pseudo, pos, neg) = graph_target_hard(&mut g, &snap, mem.labels(), x, 0.95, sel).unwrap();
        let scores = similarity_scores(&snap, &h).unwrap();
        let reference = assign_pseudo_multilabel(&scores, mem.labels(), 0.95).unwrap();
        assert_eq!(pseudo.positives, reference.positives);
        let (rp, rn) = target_hard_loss(&reference, sel).unwrap();
        assert!((g.value(pos.unwrap())[0] - rp).abs() < 1e-12);
        assert!((g.value(neg.unwrap())[0] - rn).abs() < 1e-12);

        let probs = g.constant([4], vec![0.1, 0.2, 0.3, 0.4]).unwrap();
        let ce = graph_source_ce(&mut g, probs, 2).unwrap();
        assert!((g.value(ce)[0] + 0.3f64.ln()).abs() < 1e-15);
    }
}
