//! Stochastic mirror descent over a [`GeometrySpec`].
//!
//! The loop starts at `w^1 = argmin_W psi`, pulls one instance per step,
//! takes a subgradient of the hinge loss at the current iterate and moves
//! through the prox-mapping. The returned point is the step-weighted average
//! `sum_{m=1}^n alpha_m w^m / sum_{m=1}^n alpha_m` of the visited iterates.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::GeometrySpec;
use crate::loss::{subgradient, Instance, LossConfig, SubgradientResult};
use crate::matrix::WeightMatrix;

/// Number of probe points used by the per-step audit.
pub const AUDIT_PROBES: usize = 20;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum StepSchedule {
    Constant { alpha: f64, steps: usize },
    Custom { alphas: Vec<f64> },
}

impl StepSchedule {
    pub fn constant(alpha: f64, steps: usize) -> Result<Self> {
        if !(alpha > 0.0 && alpha.is_finite()) {
            return Err(Error::invalid(format!(
                "step size must be positive, got {alpha}"
            )));
        }
        Ok(StepSchedule::Constant { alpha, steps })
    }

    pub fn custom(alphas: Vec<f64>) -> Result<Self> {
        if let Some(a) = alphas.iter().find(|a| !(**a > 0.0 && a.is_finite())) {
            return Err(Error::invalid(format!(
                "step sizes must be positive, got {a}"
            )));
        }
        Ok(StepSchedule::Custom { alphas })
    }

    pub fn len(&self) -> usize {
        match self {
            StepSchedule::Constant { steps, .. } => *steps,
            StepSchedule::Custom { alphas } => alphas.len(),
        }
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// Step size of step `m` (0-based).
    pub fn alpha(&self, m: usize) -> f64 {
        match self {
            StepSchedule::Constant { alpha, .. } => *alpha,
            StepSchedule::Custom { alphas } => alphas[m],
        }
    }

    pub fn alphas(&self) -> impl Iterator<Item = f64> + '_ {
        (0..self.len()).map(|m| self.alpha(m))
    }

    pub fn sum(&self) -> f64 {
        match self {
            StepSchedule::Constant { alpha, steps } => alpha * *steps as f64,
            StepSchedule::Custom { alphas } => alphas.iter().sum(),
        }
    }

    pub fn sum_sq(&self) -> f64 {
        match self {
            StepSchedule::Constant { alpha, steps } => alpha * alpha * *steps as f64,
            StepSchedule::Custom { alphas } => alphas.iter().map(|a| a * a).sum(),
        }
    }
}

/// Constant step `sqrt(2) U / (G sqrt(n))`, which balances the two terms of
/// the oracle inequality.
pub fn constant_step(u: f64, g: f64, n: usize) -> Result<StepSchedule> {
    if !(u > 0.0 && g > 0.0) || n == 0 {
        return Err(Error::invalid(format!(
            "constant step needs U, G > 0 and n >= 1 (got U={u}, G={g}, n={n})"
        )));
    }
    StepSchedule::constant(std::f64::consts::SQRT_2 * u / (g * (n as f64).sqrt()), n)
}

#[derive(Clone, Debug, Default)]
pub struct RunOptions {
    /// Record the step inequality residual at every step.
    pub audit: bool,
    /// Probe points for the audit. Generated from `seed` when empty.
    pub probes: Vec<WeightMatrix>,
    /// Known comparator, placed first among generated probes.
    pub comparator: Option<WeightMatrix>,
    /// Keep every iterate and subgradient (small-n debugging).
    pub keep_trace: bool,
    pub seed: u64,
}

/// Per-run audit summary.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct AuditRecord {
    /// Worst residual over probes at each step.
    pub residuals: Vec<f64>,
}

impl AuditRecord {
    pub fn min_residual(&self) -> f64 {
        self.residuals.iter().cloned().fold(f64::INFINITY, f64::min)
    }
}

/// Full trajectory, kept only on request.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Trace {
    /// `w^1, ..., w^{n+1}`.
    pub iterates: Vec<WeightMatrix>,
    pub subgradients: Vec<SubgradientResult>,
    pub alphas: Vec<f64>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RunRecord {
    pub final_average: WeightMatrix,
    /// `l(x_m, y_m, w^m)`, taken before step `m`.
    pub step_losses: Vec<f64>,
    pub audit: Option<AuditRecord>,
    pub seed: u64,
    pub steps_taken: usize,
    pub trace: Option<Trace>,
}

/// Audit probes: the comparator (when known), the origin, then random
/// feasible points drawn from `seed` until there are [`AUDIT_PROBES`].
pub fn audit_probes(
    spec: &GeometrySpec,
    comparator: Option<&WeightMatrix>,
    seed: u64,
) -> Vec<WeightMatrix> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0x5eed_a0d1_7000_0001);
    let mut probes = Vec::with_capacity(AUDIT_PROBES);
    if let Some(c) = comparator {
        probes.push(c.clone());
    }
    probes.push(spec.initial_point());
    while probes.len() < AUDIT_PROBES {
        probes.push(spec.random_feasible(&mut rng));
    }
    probes
}

/// Worst case over `probes` of
/// `alpha <g, w - w_next> + D(w, w_m) - D(w_next, w_m) - D(w, w_next)`.
/// Nonnegative (up to rounding) whenever `w_next` is the exact prox point.
pub fn audit_step_inequality(
    w_m: &WeightMatrix,
    w_next: &WeightMatrix,
    g: &SubgradientResult,
    alpha: f64,
    probes: &[WeightMatrix],
    spec: &GeometrySpec,
) -> f64 {
    let d_next_m = spec.bregman_unchecked(w_next, w_m);
    let g_next = g.dot(w_next);
    probes
        .iter()
        .map(|w| {
            let rhs = alpha * (g.dot(w) - g_next) + spec.bregman_unchecked(w, w_m) - d_next_m;
            rhs - spec.bregman_unchecked(w, w_next)
        })
        .fold(f64::INFINITY, f64::min)
}

/// Run SMD for `schedule.len()` steps, pulling instances from `stream`.
///
/// Instances are requested lazily, so instance `m` is drawn only after
/// `w^m` is fixed.
pub fn run<I>(
    stream: I,
    geometry: &GeometrySpec,
    schedule: &StepSchedule,
    cfg: &LossConfig,
    opts: &RunOptions,
) -> Result<RunRecord>
where
    I: IntoIterator<Item = Instance>,
{
    let n = schedule.len();
    let mut stream = stream.into_iter();
    let mut w = geometry.initial_point();
    let mut weighted_sum = WeightMatrix::zeros(geometry.k(), geometry.d());
    let mut alpha_sum = 0.0;
    let mut step_losses = Vec::with_capacity(n);

    let probes = if opts.audit {
        if opts.probes.is_empty() {
            audit_probes(geometry, opts.comparator.as_ref(), opts.seed)
        } else {
            opts.probes.clone()
        }
    } else {
        Vec::new()
    };
    let mut residuals = Vec::with_capacity(if opts.audit { n } else { 0 });
    let mut trace = opts.keep_trace.then(|| Trace {
        iterates: vec![w.clone()],
        subgradients: Vec::with_capacity(n),
        alphas: Vec::with_capacity(n),
    });

    for m in 0..n {
        let inst = stream.next().ok_or_else(|| {
            Error::invalid(format!(
                "stream ended after {m} instances, schedule needs {n}"
            ))
        })?;
        let alpha = schedule.alpha(m);
        let g = subgradient(&inst, &w, cfg)?;
        step_losses.push(g.loss);
        weighted_sum.axpy(alpha, &w);
        alpha_sum += alpha;

        let next = if g.is_zero() {
            w.clone()
        } else {
            geometry
                .prox_step(&w, &g, alpha)
                .map_err(|e| e.at_step(m + 1))?
        };
        if opts.audit {
            residuals.push(audit_step_inequality(
                &w, &next, &g, alpha, &probes, geometry,
            ));
        }
        if let Some(t) = trace.as_mut() {
            t.iterates.push(next.clone());
            t.subgradients.push(g);
            t.alphas.push(alpha);
        }
        w = next;
    }

    let final_average = if n == 0 {
        w
    } else {
        weighted_sum.scale(1.0 / alpha_sum)
    };
    Ok(RunRecord {
        final_average,
        step_losses,
        audit: opts.audit.then_some(AuditRecord { residuals }),
        seed: opts.seed,
        steps_taken: n,
        trace,
    })
}

/// Slack of the summed step inequality
/// `sum <alpha_m g^m, w - w^m> + 1/2 sum alpha_m^2 ||g^m||_*^2 + D(w, w^1)`
/// for a recorded trajectory; nonnegative for every feasible `w`.
pub fn summed_inequality_slack(trace: &Trace, w: &WeightMatrix, spec: &GeometrySpec) -> f64 {
    let mut s = spec.bregman_unchecked(w, &trace.iterates[0]);
    for ((g, wm), &a) in trace
        .subgradients
        .iter()
        .zip(&trace.iterates)
        .zip(&trace.alphas)
    {
        let gn = spec.dual_norm_sparse(g);
        s += a * (g.dot(w) - g.dot(wm)) + 0.5 * a * a * gn * gn;
    }
    s
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn constant_step_examples() {
        let a = |u, g, n| constant_step(u, g, n).unwrap().alpha(0);
        assert!((a(1.0, 1.0, 2) - 1.0).abs() < 1e-15);
        assert!((a(2.0, 1.0, 8) - 1.0).abs() < 1e-15);
        assert!((a(1.0, 2.0, 50) - 0.1).abs() < 1e-15);
        assert!(constant_step(0.0, 1.0, 1).is_err());
        assert!(constant_step(1.0, -1.0, 1).is_err());
        assert!(constant_step(1.0, 1.0, 0).is_err());
    }

    #[test]
    fn schedule_validation() {
        assert!(StepSchedule::custom(vec![1.0, 0.0]).is_err());
        let s = StepSchedule::custom(vec![1.0, 2.0]).unwrap();
        assert_eq!((s.len(), s.sum(), s.sum_sq()), (2, 3.0, 5.0));
    }

    #[test]
    fn empty_stream_returns_initial_point() {
        let g = GeometrySpec::euclidean(1.0, 3, 2).unwrap();
        let cfg = LossConfig::new(1.0).unwrap();
        let sched = StepSchedule::custom(vec![]).unwrap();
        let rec = run(Vec::new(), &g, &sched, &cfg, &RunOptions::default()).unwrap();
        assert_eq!(rec.final_average, g.initial_point());
        assert_eq!(rec.steps_taken, 0);
    }

    #[test]
    fn inactive_stream_does_not_move() {
        // Every score is 0 at the origin, so the hinge is never inactive
        // there. Zero features give zero subgradient rows instead.
        let g = GeometrySpec::euclidean(1.0, 2, 2).unwrap();
        let cfg = LossConfig::new(1.0).unwrap();
        let sched = StepSchedule::constant(0.5, 5).unwrap();
        let stream = vec![Instance::new(vec![0.0, 0.0], 0); 5];
        let rec = run(stream, &g, &sched, &cfg, &RunOptions::default()).unwrap();
        assert_eq!(rec.final_average, g.initial_point());
        assert!(rec.step_losses.iter().all(|l| *l == 1.0));
    }

    #[test]
    fn short_stream_is_an_error() {
        let g = GeometrySpec::euclidean(1.0, 2, 1).unwrap();
        let cfg = LossConfig::new(1.0).unwrap();
        let sched = StepSchedule::constant(0.5, 3).unwrap();
        let stream = vec![Instance::new(vec![1.0], 0)];
        assert!(run(stream, &g, &sched, &cfg, &RunOptions::default()).is_err());
    }

    #[test]
    fn identity_probe_residual_is_nonnegative() {
        let g = GeometrySpec::block_power(1.0, 3, 2).unwrap();
        let cfg = LossConfig::new(1.0).unwrap();
        let w = g.initial_point();
        let sg = subgradient(&Instance::new(vec![1.0, 0.5], 2), &w, &cfg).unwrap();
        let next = g.prox_step(&w, &sg, 0.7).unwrap();
        let r = audit_step_inequality(&w, &next, &sg, 0.7, std::slice::from_ref(&next), &g);
        assert!(r >= -1e-12, "{r}");
    }
}
