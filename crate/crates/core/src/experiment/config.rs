//! Run configuration: a TOML file with `[geometry]`, `[task]`, `[loss]`,
//! `[run]` and optional `[deviation]` sections. Unknown keys are rejected.

use serde::{Deserialize, Serialize};

use crate::bounds::{weighted_parameters, ClassPrior};
use crate::error::{Error, Result};
use crate::geometry::{GeometryKind, GeometrySpec};
use crate::loss::LossConfig;
use crate::synth::{power_law_prior, AnchorLayout, TaskParams};

/// Stride between replicate seeds: `seed_r = base_seed + r * SEED_STRIDE`.
pub const SEED_STRIDE: u64 = 10007;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub geometry: GeometrySection,
    pub task: TaskSection,
    #[serde(default)]
    pub loss: LossSection,
    pub run: RunSection,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub deviation: Option<DeviationSection>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GeometrySection {
    pub kind: GeometryKind,
    pub omega: f64,
    /// Explicit weights for `weighted-euclidean`. Derived from the prior
    /// (`b = sqrt(p)`) when omitted.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub block_weights: Option<Vec<f64>>,
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum PriorKind {
    #[default]
    Uniform,
    PowerLaw,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TaskSection {
    pub k: usize,
    pub d: usize,
    pub x_bound: f64,
    pub rho_star: f64,
    #[serde(default)]
    pub prior: PriorKind,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub beta: Option<f64>,
    #[serde(default)]
    pub anchor: AnchorLayout,
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ClassScaleMode {
    #[default]
    None,
    Weighted,
    WeightedEstimated,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LossSection {
    pub rho: f64,
    #[serde(default)]
    pub class_scale: ClassScaleMode,
    /// Prior misspecification for `weighted-estimated`.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub epsilon: Option<f64>,
}

impl Default for LossSection {
    fn default() -> Self {
        LossSection {
            rho: 1.0,
            class_scale: ClassScaleMode::None,
            epsilon: None,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunSection {
    pub n: usize,
    pub replicates: usize,
    pub base_seed: u64,
    pub n_mc: usize,
    #[serde(default)]
    pub audit: bool,
    /// Worker threads for replicates; 0 uses all cores.
    #[serde(default)]
    pub workers: usize,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DeviationSection {
    pub theta: f64,
    /// Defaults to `max(2 G, (2 G)^2)`.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub sigma2: Option<f64>,
}

/// Everything needed to run one configuration, resolved and validated.
#[derive(Clone, Debug, PartialEq)]
pub struct Resolved {
    pub geometry: GeometrySpec,
    pub params: TaskParams,
    pub loss: LossConfig,
    /// Prior used to build the weighting (may carry an estimate).
    pub weighting_prior: ClassPrior,
}

impl ExperimentConfig {
    pub fn from_toml_str(text: &str) -> Result<Self> {
        let cfg: ExperimentConfig =
            toml::from_str(text).map_err(|e| Error::Config(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn from_path(path: &std::path::Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| Error::Config(format!("cannot read {}: {e}", path.display())))?;
        Self::from_toml_str(&text).map_err(|e| match e {
            Error::Config(m) => Error::Config(format!("{}: {m}", path.display())),
            other => other,
        })
    }

    pub fn to_toml_string(&self) -> String {
        toml::to_string(self).expect("config serializes")
    }

    pub fn validate(&self) -> Result<()> {
        let field = |name: &str, msg: String| Error::Config(format!("{name}: {msg}"));
        if self.run.replicates < 1 {
            return Err(field("run.replicates", "must be at least 1".into()));
        }
        if self.run.n_mc < 1 {
            return Err(field("run.n_mc", "must be at least 1".into()));
        }
        if self.task.prior == PriorKind::PowerLaw && self.task.beta.is_none() {
            return Err(field(
                "task.beta",
                "required for prior = \"power-law\"".into(),
            ));
        }
        if self.loss.class_scale == ClassScaleMode::WeightedEstimated && self.loss.epsilon.is_none()
        {
            return Err(field(
                "loss.epsilon",
                "required for class_scale = \"weighted-estimated\"".into(),
            ));
        }
        if self.loss.class_scale != ClassScaleMode::None
            && self.geometry.kind != GeometryKind::WeightedEuclidean
        {
            return Err(field(
                "loss.class_scale",
                "weighted scorers require geometry.kind = \"weighted-euclidean\"".into(),
            ));
        }
        if let Some(dev) = &self.deviation {
            if !(dev.theta >= 0.0) {
                return Err(field("deviation.theta", "must be nonnegative".into()));
            }
        }
        self.resolve_with_k(self.task.k).map(|_| ())
    }

    pub fn seed(&self, replicate: usize) -> u64 {
        self.run
            .base_seed
            .wrapping_add(replicate as u64 * SEED_STRIDE)
    }

    pub fn resolve(&self) -> Result<Resolved> {
        self.resolve_with_k(self.task.k)
    }

    /// Resolve with the class count replaced by `k` (used by sweeps).
    pub fn resolve_with_k(&self, k: usize) -> Result<Resolved> {
        let cfg_err = |e: Error| match e {
            Error::InvalidInput(m) => Error::Config(m),
            other => other,
        };
        let prior = match self.task.prior {
            PriorKind::Uniform => ClassPrior::uniform(k),
            PriorKind::PowerLaw => power_law_prior(k, self.task.beta.unwrap_or(0.0)),
        }
        .map_err(cfg_err)?;

        let weighting_prior = match self.loss.class_scale {
            ClassScaleMode::WeightedEstimated => {
                let eps = self.loss.epsilon.unwrap_or(0.0);
                let p_hat = perturbed_estimate(prior.probabilities(), eps, self.run.base_seed);
                prior.clone().with_estimate(p_hat, eps).map_err(cfg_err)?
            }
            _ => prior.clone(),
        };
        let wp = weighted_parameters(&weighting_prior);

        let block_weights = match self.geometry.kind {
            GeometryKind::WeightedEuclidean => match &self.geometry.block_weights {
                Some(b) => Some(b.clone()),
                None => {
                    if wp.degenerate {
                        return Err(Error::Config(
                            "geometry.block_weights: prior has zero-probability classes, \
                             so b = sqrt(p) is degenerate"
                                .into(),
                        ));
                    }
                    Some(wp.b.clone())
                }
            },
            _ => None,
        };
        let geometry = GeometrySpec::new(
            self.geometry.kind,
            self.geometry.omega,
            k,
            self.task.d,
            block_weights,
        )
        .map_err(cfg_err)?;

        let loss = match self.loss.class_scale {
            ClassScaleMode::None => LossConfig::new(self.loss.rho),
            _ => LossConfig::with_class_scale(self.loss.rho, wp.c.clone()),
        }
        .map_err(cfg_err)?;

        Ok(Resolved {
            geometry,
            params: TaskParams {
                k,
                d: self.task.d,
                x_bound: self.task.x_bound,
                rho_star: self.task.rho_star,
                prior,
                anchor: self.task.anchor,
            },
            loss,
            weighting_prior,
        })
    }
}

/// `p_hat(y) ∝ p(y) (1 + eps z_y)` with `z_y ∈ [0, 1)` drawn from `seed`.
/// The normalizer is at most `1 + eps`, so `p <= (1 + eps) p_hat`.
fn perturbed_estimate(p: &[f64], eps: f64, seed: u64) -> Vec<f64> {
    use rand::{Rng, SeedableRng};
    let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed ^ 0xe571_3a7e);
    let raw: Vec<f64> = p
        .iter()
        .map(|v| v * (1.0 + eps * rng.random::<f64>()))
        .collect();
    let s: f64 = raw.iter().sum();
    let mut out: Vec<f64> = raw.iter().map(|v| v / s).collect();
    // Absorb the rounding of the normalization.
    let t: f64 = out.iter().sum();
    out.iter_mut().for_each(|v| *v /= t);
    out
}
