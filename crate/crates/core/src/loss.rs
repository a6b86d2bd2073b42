//! Instances, one-vs-all linear scoring, the multiclass margin, the hinge
//! loss `max{0, 1 - m/rho}` and a subgradient oracle for it.
//!
//! Labels are 0-indexed in memory. Anything user facing (files, messages)
//! shows them 1-indexed.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::matrix::{dot, WeightMatrix};

/// A labeled feature vector.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Instance {
    pub x: Vec<f64>,
    /// 0-indexed class label.
    pub y: usize,
}

impl Instance {
    pub fn new(x: Vec<f64>, y: usize) -> Self {
        Instance { x, y }
    }

    /// Build from a 1-indexed label, as used by all file formats.
    pub fn from_one_indexed(x: Vec<f64>, label: usize) -> Result<Self> {
        if label == 0 {
            return Err(Error::invalid("labels are 1-indexed; got 0"));
        }
        Ok(Instance { x, y: label - 1 })
    }
}

/// Margin scale and optional per-class score multipliers `c`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LossConfig {
    rho: f64,
    class_scale: Option<Vec<f64>>,
}

impl LossConfig {
    pub fn new(rho: f64) -> Result<Self> {
        if !(rho > 0.0 && rho.is_finite()) {
            return Err(Error::invalid(format!("rho must be positive, got {rho}")));
        }
        Ok(LossConfig {
            rho,
            class_scale: None,
        })
    }

    /// Scorers `c_y <x, w_y>`; requires `c_y > 0` and `max c = 1`.
    pub fn with_class_scale(rho: f64, c: Vec<f64>) -> Result<Self> {
        let mut cfg = LossConfig::new(rho)?;
        if c.is_empty() {
            return Err(Error::invalid("class scale must be nonempty"));
        }
        if c.iter().any(|v| !(*v > 0.0 && v.is_finite())) {
            return Err(Error::invalid("class scale entries must be positive"));
        }
        let max = c.iter().cloned().fold(f64::MIN, f64::max);
        if (max - 1.0).abs() > 1e-12 {
            return Err(Error::invalid(format!(
                "class scale must have max entry 1, got {max}"
            )));
        }
        cfg.class_scale = Some(c);
        Ok(cfg)
    }

    pub fn rho(&self) -> f64 {
        self.rho
    }

    pub fn class_scale(&self) -> Option<&[f64]> {
        self.class_scale.as_deref()
    }

    #[inline]
    pub fn scale_of(&self, y: usize) -> f64 {
        self.class_scale.as_ref().map_or(1.0, |c| c[y])
    }

    fn check_k(&self, k: usize) -> Result<()> {
        match &self.class_scale {
            Some(c) if c.len() != k => Err(Error::invalid(format!(
                "class scale has {} entries but w has {k} blocks",
                c.len()
            ))),
            _ => Ok(()),
        }
    }
}

/// Margin of the true class together with the rival achieving the max.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Margin {
    pub value: f64,
    pub competitor: usize,
}

/// A sparse subgradient of the hinge loss in `w`: at most two nonzero rows.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SubgradientResult {
    pub active: bool,
    pub true_class: usize,
    pub competitor: usize,
    /// Loss value at the point where the subgradient was taken.
    pub loss: f64,
    pub block_updates: Vec<(usize, Vec<f64>)>,
}

impl SubgradientResult {
    pub fn is_zero(&self) -> bool {
        self.block_updates.is_empty()
    }

    /// Frobenius inner product with a full matrix.
    pub fn dot(&self, w: &WeightMatrix) -> f64 {
        self.block_updates
            .iter()
            .map(|(y, g)| dot(g, w.block(*y)))
            .sum()
    }

    pub fn to_dense(&self, k: usize, d: usize) -> WeightMatrix {
        let mut g = WeightMatrix::zeros(k, d);
        for (y, row) in &self.block_updates {
            g.block_mut(*y).copy_from_slice(row);
        }
        g
    }

    /// Euclidean norm of each touched block, paired with its label.
    pub fn block_norms(&self) -> impl Iterator<Item = (usize, f64)> + '_ {
        self.block_updates
            .iter()
            .map(|(y, g)| (*y, crate::matrix::norm2(g)))
    }
}

fn check_input(x: &[f64], w: &WeightMatrix, cfg: &LossConfig) -> Result<()> {
    if x.len() != w.d() {
        return Err(Error::invalid(format!(
            "feature vector has length {} but blocks have length {}",
            x.len(),
            w.d()
        )));
    }
    cfg.check_k(w.k())
}

/// Per-class scores `c_y <x, w_y>`.
pub fn score(x: &[f64], w: &WeightMatrix, cfg: &LossConfig) -> Result<Vec<f64>> {
    check_input(x, w, cfg)?;
    Ok(scores_unchecked(x, w, cfg))
}

fn scores_unchecked(x: &[f64], w: &WeightMatrix, cfg: &LossConfig) -> Vec<f64> {
    w.blocks()
        .enumerate()
        .map(|(y, row)| cfg.scale_of(y) * dot(x, row))
        .collect()
}

/// Margin computed from a precomputed score vector. Ties among rivals go to
/// the smallest label.
pub fn margin_from_scores(scores: &[f64], y: usize) -> Result<Margin> {
    if scores.len() < 2 {
        return Err(Error::invalid("margin needs at least two classes"));
    }
    if y >= scores.len() {
        return Err(Error::invalid(format!(
            "label {} out of range 1..={}",
            y + 1,
            scores.len()
        )));
    }
    let mut competitor = usize::MAX;
    let mut best = f64::NEG_INFINITY;
    for (j, &s) in scores.iter().enumerate() {
        if j != y && (competitor == usize::MAX || s > best) {
            best = s;
            competitor = j;
        }
    }
    Ok(Margin {
        value: scores[y] - best,
        competitor,
    })
}

pub fn margin(x: &[f64], y: usize, w: &WeightMatrix, cfg: &LossConfig) -> Result<Margin> {
    let s = score(x, w, cfg)?;
    margin_from_scores(&s, y)
}

#[inline]
pub fn hinge_loss(m: f64, cfg: &LossConfig) -> f64 {
    (1.0 - m / cfg.rho).max(0.0)
}

/// Loss `l(x, y, w)` of a single instance.
pub fn instance_loss(inst: &Instance, w: &WeightMatrix, cfg: &LossConfig) -> Result<f64> {
    let m = margin(&inst.x, inst.y, w, cfg)?;
    Ok(hinge_loss(m.value, cfg))
}

/// A subgradient of `w -> l(x, y, w)`.
///
/// When the hinge is active the loss is `1 - (c_y <x,w_y> - c_j <x,w_j>)/rho`
/// for the selected rival `j`, whose gradient touches only rows `y` and `j`.
/// At the kink `m == rho` the zero subgradient is returned.
pub fn subgradient(
    inst: &Instance,
    w: &WeightMatrix,
    cfg: &LossConfig,
) -> Result<SubgradientResult> {
    check_input(&inst.x, w, cfg)?;
    let s = scores_unchecked(&inst.x, w, cfg);
    let m = margin_from_scores(&s, inst.y)?;
    let loss = hinge_loss(m.value, cfg);
    let active = loss > 0.0;
    let block_updates = if active {
        let cy = cfg.scale_of(inst.y) / cfg.rho;
        let cj = cfg.scale_of(m.competitor) / cfg.rho;
        vec![
            (inst.y, inst.x.iter().map(|v| -cy * v).collect()),
            (m.competitor, inst.x.iter().map(|v| cj * v).collect()),
        ]
    } else {
        Vec::new()
    };
    Ok(SubgradientResult {
        active,
        true_class: inst.y,
        competitor: m.competitor,
        loss,
        block_updates,
    })
}

/// Argmax of the scores, smallest label on ties.
pub fn predict(x: &[f64], w: &WeightMatrix, cfg: &LossConfig) -> Result<usize> {
    let s = score(x, w, cfg)?;
    let mut best = 0;
    for (j, &v) in s.iter().enumerate().skip(1) {
        if v > s[best] {
            best = j;
        }
    }
    Ok(best)
}

/// Mean hinge loss and mean 0-1 error over a sample.
#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct EmpiricalRisk {
    pub hinge: f64,
    pub zero_one: f64,
}

pub fn empirical_risk(
    sample: &[Instance],
    w: &WeightMatrix,
    cfg: &LossConfig,
) -> Result<EmpiricalRisk> {
    if sample.is_empty() {
        return Err(Error::invalid("empirical risk of an empty sample"));
    }
    let mut hinge = 0.0;
    let mut errors = 0usize;
    for inst in sample {
        check_input(&inst.x, w, cfg)?;
        let s = scores_unchecked(&inst.x, w, cfg);
        let m = margin_from_scores(&s, inst.y)?;
        hinge += hinge_loss(m.value, cfg);
        let mut best = 0;
        for (j, &v) in s.iter().enumerate().skip(1) {
            if v > s[best] {
                best = j;
            }
        }
        if best != inst.y {
            errors += 1;
        }
    }
    let n = sample.len() as f64;
    Ok(EmpiricalRisk {
        hinge: hinge / n,
        zero_one: errors as f64 / n,
    })
}
