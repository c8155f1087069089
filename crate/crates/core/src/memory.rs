//! Dynamic external memory: one ℓ2-normalized feature slot per source
//! training example, refreshed by a decayed moving average.

use std::path::Path;

use crate::checkpoint::{self, Block};
use crate::error::{Error, Result};

#[derive(Clone, Debug, PartialEq)]
pub struct ExternalMemory {
    dim: usize,
    slots: Vec<f64>,
    labels: Vec<usize>,
    initialized: Vec<bool>,
    beta: f64,
}

/// Immutable copy of every slot, `n × d` row-major.
#[derive(Clone, Debug, PartialEq)]
pub struct MemorySnapshot {
    dim: usize,
    rows: Vec<f64>,
}

impl MemorySnapshot {
    pub fn len(&self) -> usize {
        self.rows.len() / self.dim.max(1)
    }

    pub fn is_empty(&self) -> bool {
        self.rows.is_empty()
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn row(&self, j: usize) -> &[f64] {
        &self.rows[j * self.dim..(j + 1) * self.dim]
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.rows
    }
}

fn normalized(v: &[f64]) -> Option<Vec<f64>> {
    let norm = v.iter().map(|x| x * x).sum::<f64>().sqrt();
    (norm > 0.0 && norm.is_finite()).then(|| v.iter().map(|x| x / norm).collect())
}

impl ExternalMemory {
    /// Empty memory of `labels.len()` slots; every slot must be written with
    /// [`ExternalMemory::fill`] before it can be read.
    pub fn with_labels(dim: usize, labels: Vec<usize>) -> Result<Self> {
        if let Some(l) = labels.iter().find(|&&l| l >= crate::model::NUM_CLASSES) {
            return Err(Error::Input(format!("slot label {l} outside 0..4")));
        }
        Ok(ExternalMemory {
            dim,
            slots: vec![0.0; labels.len() * dim],
            initialized: vec![false; labels.len()],
            labels,
            beta: 0.0,
        })
    }

    /// Memory whose slots are the normalized `features` rows.
    pub fn init(features: &[Vec<f64>], labels: Vec<usize>) -> Result<Self> {
        if features.len() != labels.len() {
            return Err(Error::Input(format!(
                "{} features but {} labels",
                features.len(),
                labels.len()
            )));
        }
        let dim = features.first().map_or(0, Vec::len);
        let mut mem = ExternalMemory::with_labels(dim, labels)?;
        for (j, f) in features.iter().enumerate() {
            mem.fill(j, f)?;
        }
        Ok(mem)
    }

    /// Sets slot `j` to the normalized feature, regardless of its state.
    pub fn fill(&mut self, j: usize, feature: &[f64]) -> Result<()> {
        self.check_index(j)?;
        if feature.len() != self.dim {
            return Err(Error::dim("memory fill", format!("feature dim {} vs {}", feature.len(), self.dim)));
        }
        if feature.iter().any(|v| !v.is_finite()) {
            return Err(Error::Input(format!("slot {j}: non-finite feature")));
        }
        let unit = normalized(feature).ok_or_else(|| Error::Input(format!("slot {j}: zero-norm feature")))?;
        self.slots[j * self.dim..(j + 1) * self.dim].copy_from_slice(&unit);
        self.initialized[j] = true;
        Ok(())
    }

    fn check_index(&self, j: usize) -> Result<()> {
        if j >= self.labels.len() {
            return Err(Error::Input(format!("slot {j} out of range for {} slots", self.labels.len())));
        }
        Ok(())
    }

    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn labels(&self) -> &[usize] {
        &self.labels
    }

    pub fn beta(&self) -> f64 {
        self.beta
    }

    pub fn set_beta(&mut self, beta: f64) -> Result<()> {
        if !(0.0..=1.0).contains(&beta) {
            return Err(Error::Input(format!("beta {beta} outside [0, 1]")));
        }
        self.beta = beta;
        Ok(())
    }

    pub fn slot(&self, j: usize) -> &[f64] {
        &self.slots[j * self.dim..(j + 1) * self.dim]
    }

    /// `slot[j] ← normalize(β·fresh + (1−β)·slot[j])` for each `j` in `indices`.
    pub fn write(&mut self, indices: &[usize], features: &[Vec<f64>], beta: f64) -> Result<()> {
        if indices.len() != features.len() {
            return Err(Error::Input(format!(
                "{} indices but {} features",
                indices.len(),
                features.len()
            )));
        }
        if !(0.0..=1.0).contains(&beta) {
            return Err(Error::Input(format!("beta {beta} outside [0, 1]")));
        }
        for (&j, f) in indices.iter().zip(features) {
            self.check_index(j)?;
            if !self.initialized[j] {
                return Err(Error::State(format!("write to uninitialized slot {j}")));
            }
            if f.len() != self.dim {
                return Err(Error::dim("memory write", format!("feature dim {} vs {}", f.len(), self.dim)));
            }
            if beta == 0.0 {
                continue;
            }
            let row = &mut self.slots[j * self.dim..(j + 1) * self.dim];
            let mixed: Vec<f64> = f.iter().zip(row.iter()).map(|(h, m)| beta * h + (1.0 - beta) * m).collect();
            let unit = normalized(&mixed)
                .ok_or_else(|| Error::Input(format!("slot {j}: write cancels to a zero vector")))?;
            row.copy_from_slice(&unit);
        }
        Ok(())
    }

    pub fn read(&self) -> Result<MemorySnapshot> {
        if let Some(j) = self.initialized.iter().position(|i| !i) {
            return Err(Error::State(format!("slot {j} read before initialization")));
        }
        Ok(MemorySnapshot {
            dim: self.dim,
            rows: self.slots.clone(),
        })
    }

    fn blocks(&self) -> Result<Vec<Block>> {
        self.read()?;
        Ok(vec![
            Block {
                name: "memory".into(),
                shape: vec![self.len(), self.dim],
                data: self.slots.clone(),
            },
            Block {
                name: "memory.labels".into(),
                shape: vec![self.len()],
                data: self.labels.iter().map(|&l| l as f64).collect(),
            },
            Block {
                name: "memory.beta".into(),
                shape: vec![1],
                data: vec![self.beta],
            },
        ])
    }

    pub fn save(&self, hash: &checkpoint::ConfigHash, path: &Path) -> Result<()> {
        checkpoint::write(path, hash, &self.blocks()?)
    }

    pub fn load(hash: &checkpoint::ConfigHash, path: &Path) -> Result<Self> {
        let (stored, blocks) = checkpoint::read(path)?;
        if &stored != hash {
            return Err(Error::Config(format!(
                "{} was written for a different model configuration",
                path.display()
            )));
        }
        let find = |name: &str| {
            blocks.iter().find(|b| b.name == name).ok_or_else(|| Error::Format {
                kind: "memory checkpoint",
                detail: format!("missing block `{name}`"),
            })
        };
        let slots = find("memory")?;
        let labels = find("memory.labels")?;
        let beta = find("memory.beta")?;
        if slots.shape.len() != 2 || labels.data.len() != slots.shape[0] || beta.data.len() != 1 {
            return Err(Error::Format {
                kind: "memory checkpoint",
                detail: "inconsistent block shapes".into(),
            });
        }
        let dim = slots.shape[1];
        let mut mem = ExternalMemory::with_labels(dim, labels.data.iter().map(|&l| l as usize).collect())?;
        mem.slots.copy_from_slice(&slots.data);
        mem.initialized.iter_mut().for_each(|i| *i = true);
        mem.set_beta(beta.data[0])?;
        Ok(mem)
    }
}

/// Linear ramp `beta_max · epoch / (epochs − 1)`; a single epoch uses 0.
pub fn beta_schedule(epoch: usize, epochs: usize, beta_max: f64) -> Result<f64> {
    if epoch >= epochs {
        return Err(Error::Input(format!("epoch {epoch} outside 0..{epochs}")));
    }
    if epochs == 1 {
        return Ok(0.0);
    }
    Ok(beta_max * epoch as f64 / (epochs - 1) as f64)
}
