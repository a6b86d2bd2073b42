//! Replicate execution: build the task, derive step sizes and bounds for the
//! configured geometry, run SMD per replicate and measure the excess risk of
//! the averaged iterate.

use std::f64::consts::E;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::config::{ClassScaleMode, ExperimentConfig, Resolved};
use super::fit::{log_log_slope, LineFit};
use crate::bounds::{
    deviation_bound, deviation_probability, oracle_bound, rate_euclid, rate_l1l2, rate_weighted,
    sqrt_prior_sum, weighted_step, BoundInputs, BoundReport,
};
use crate::error::{Error, Result};
use crate::geometry::{GeometryKind, GeometrySpec};
use crate::loss::{subgradient, LossConfig};
use crate::matrix::WeightMatrix;
use crate::smd::{self, constant_step, RunOptions, StepSchedule};
use crate::synth::{comparator, estimate_excess, make_task, Comparator, ComparatorKind, Task};

/// XOR mask separating the Monte Carlo evaluation stream from the training
/// stream of the same replicate.
const MC_STREAM_MASK: u64 = 0x9e37_79b9_7f4a_7c15;
/// Feasible points (beyond origin and anchor) searched for `g_bar`.
const G_BAR_POINTS: usize = 30;
/// Samples per point when estimating `E l'(w)`.
const G_BAR_SAMPLES: usize = 4000;

/// Step sizes and bound constants for one resolved configuration.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RunConstants {
    pub u: f64,
    pub g: f64,
    pub schedule: StepSchedule,
    pub bound_eq2: f64,
    pub bound_rate: f64,
}

/// `max_{y != j} (c_y^2 / b_y + c_j^2 / b_j)`, the squared dual norm of the
/// worst subgradient in units of `(X / rho)^2`.
fn weighted_dual_factor(b: &[f64], loss: &LossConfig) -> f64 {
    let r: Vec<f64> = (0..b.len())
        .map(|y| loss.scale_of(y).powi(2) / b[y])
        .collect();
    let mut best = 0.0f64;
    for y in 0..r.len() {
        for j in (y + 1)..r.len() {
            best = best.max(r[y] + r[j]);
        }
    }
    best
}

fn bound_inputs(cfg: &ExperimentConfig, k: usize) -> Result<BoundInputs> {
    BoundInputs::new(
        cfg.geometry.omega,
        cfg.task.x_bound,
        cfg.loss.rho,
        k,
        cfg.run.n.max(1),
    )
}

pub fn run_constants(cfg: &ExperimentConfig, res: &Resolved) -> Result<RunConstants> {
    let k = res.geometry.k();
    let n = cfg.run.n;
    let inp = bound_inputs(cfg, k)?;
    let x_over_rho = cfg.task.x_bound / cfg.loss.rho;
    let (u, g, alpha, rate) = match res.geometry.kind() {
        GeometryKind::EuclideanProduct => {
            let u = res.geometry.capacity().sqrt();
            let g = std::f64::consts::SQRT_2 * x_over_rho;
            (u, g, None, rate_euclid(&inp))
        }
        GeometryKind::BlockPower => {
            let u = res.geometry.capacity().sqrt();
            (u, x_over_rho, None, rate_l1l2(&inp)?)
        }
        GeometryKind::WeightedEuclidean => {
            let b = res.geometry.block_weights().unwrap_or(&[]);
            let u = res.geometry.capacity().sqrt();
            let g = x_over_rho * weighted_dual_factor(b, &res.loss).sqrt();
            if cfg.loss.class_scale == ClassScaleMode::None {
                (u, g, None, f64::NAN)
            } else {
                (
                    u,
                    g,
                    Some(weighted_step(&inp)),
                    rate_weighted(&inp, &res.weighting_prior),
                )
            }
        }
    };
    if n == 0 {
        return Ok(RunConstants {
            u,
            g,
            schedule: StepSchedule::custom(Vec::new())?,
            bound_eq2: f64::INFINITY,
            bound_rate: f64::INFINITY,
        });
    }
    let schedule = match alpha {
        Some(a) => StepSchedule::constant(a, n)?,
        None => constant_step(u, g, n)?,
    };
    let bound_eq2 = oracle_bound(u, g, &schedule)?;
    let bound_rate = if rate.is_nan() { bound_eq2 } else { rate };
    Ok(RunConstants {
        u,
        g,
        schedule,
        bound_eq2,
        bound_rate,
    })
}

/// One row of `results.csv`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ResultRow {
    pub k: usize,
    pub n: usize,
    pub geometry: GeometryKind,
    pub replicate: usize,
    pub seed: u64,
    pub empirical_excess: f64,
    pub std_error: f64,
    pub bound_eq2: f64,
    pub bound_rate: f64,
    pub audit_min_residual: Option<f64>,
}

/// A replicate that hit a numerical failure.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Failure {
    pub k: usize,
    pub replicate: usize,
    pub seed: u64,
    pub message: String,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GroupSummary {
    pub k: usize,
    pub geometry: GeometryKind,
    pub replicates: usize,
    pub mean_excess: f64,
    /// Monte Carlo error of `mean_excess`: `sqrt(sum se_r^2) / R`.
    pub pooled_std_error: f64,
    /// Spread of the per-replicate excess divided by `sqrt(R)`.
    pub replicate_std_error: f64,
    pub bound_eq2: f64,
    pub bound_rate: f64,
    pub audit_min_residual: Option<f64>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RunReport {
    /// Point the excess is measured against.
    pub comparator: ComparatorKind,
    pub rows: Vec<ResultRow>,
    pub failures: Vec<Failure>,
    pub summary: Vec<GroupSummary>,
    pub bounds: BoundReport,
}

impl RunReport {
    pub fn ok(&self) -> bool {
        self.failures.is_empty()
    }
}

/// Output of a run on a single replicate, with the averaged iterate.
#[derive(Clone, Debug)]
pub struct ReplicateOutput {
    pub row: ResultRow,
    pub final_average: WeightMatrix,
}

pub fn build_task(cfg: &ExperimentConfig, res: &Resolved) -> Result<Task> {
    make_task(&res.params, &res.geometry, cfg.run.base_seed)
}

/// Run replicate `r` of a resolved configuration on `task`.
pub fn run_replicate(
    cfg: &ExperimentConfig,
    res: &Resolved,
    consts: &RunConstants,
    task: &Task,
    reference: &Comparator,
    replicate: usize,
) -> Result<ReplicateOutput> {
    let seed = cfg.seed(replicate);
    let opts = RunOptions {
        audit: cfg.run.audit,
        comparator: Some(reference.point.clone()),
        seed,
        ..RunOptions::default()
    };
    let rec = smd::run(
        task.stream(seed),
        &res.geometry,
        &consts.schedule,
        &res.loss,
        &opts,
    )?;
    let excess = estimate_excess(
        task,
        &rec.final_average,
        &reference.point,
        &res.loss,
        cfg.run.n_mc,
        seed ^ MC_STREAM_MASK,
    )?;
    Ok(ReplicateOutput {
        row: ResultRow {
            k: res.geometry.k(),
            n: cfg.run.n,
            geometry: res.geometry.kind(),
            replicate,
            seed,
            empirical_excess: excess.mean,
            std_error: excess.std_error,
            bound_eq2: consts.bound_eq2,
            bound_rate: consts.bound_rate,
            audit_min_residual: rec.audit.as_ref().map(|a| a.min_residual()),
        },
        final_average: rec.final_average,
    })
}

fn with_pool<T: Send>(workers: usize, f: impl FnOnce() -> T + Send) -> Result<T> {
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(workers)
        .build()
        .map_err(|e| Error::Config(format!("cannot start {workers} workers: {e}")))?;
    Ok(pool.install(f))
}

/// Rows and failures of one configuration, with the comparator used.
pub struct TaskRuns {
    pub rows: Vec<ResultRow>,
    pub failures: Vec<Failure>,
    pub comparator: ComparatorKind,
}

/// Run every replicate of `cfg` on `task`. Rows come back ordered by
/// replicate index regardless of scheduling.
pub fn run_on_task(cfg: &ExperimentConfig, res: &Resolved, task: &Task) -> Result<TaskRuns> {
    let consts = run_constants(cfg, res)?;
    let reference = comparator(task, &res.geometry, &res.loss)?;
    let outcomes: Vec<(usize, Result<ReplicateOutput>)> = with_pool(cfg.run.workers, || {
        (0..cfg.run.replicates)
            .into_par_iter()
            .map(|r| (r, run_replicate(cfg, res, &consts, task, &reference, r)))
            .collect()
    })?;
    let mut rows = Vec::new();
    let mut failures = Vec::new();
    for (r, out) in outcomes {
        match out {
            Ok(o) => rows.push(o.row),
            Err(e @ Error::Numerical { .. }) => failures.push(Failure {
                k: res.geometry.k(),
                replicate: r,
                seed: cfg.seed(r),
                message: e.to_string(),
            }),
            Err(e) => return Err(e),
        }
    }
    Ok(TaskRuns {
        rows,
        failures,
        comparator: reference.kind,
    })
}

pub fn summarize(rows: &[ResultRow]) -> Vec<GroupSummary> {
    let mut keys: Vec<(usize, GeometryKind)> = rows.iter().map(|r| (r.k, r.geometry)).collect();
    keys.dedup();
    keys.into_iter()
        .map(|(k, geometry)| {
            let g: Vec<&ResultRow> = rows
                .iter()
                .filter(|r| r.k == k && r.geometry == geometry)
                .collect();
            let m = g.len() as f64;
            let mean = g.iter().map(|r| r.empirical_excess).sum::<f64>() / m;
            let pooled = g
                .iter()
                .map(|r| r.std_error * r.std_error)
                .sum::<f64>()
                .sqrt()
                / m;
            let spread = if g.len() > 1 {
                (g.iter()
                    .map(|r| (r.empirical_excess - mean).powi(2))
                    .sum::<f64>()
                    / (m - 1.0)
                    / m)
                    .sqrt()
            } else {
                0.0
            };
            let audit = g
                .iter()
                .filter_map(|r| r.audit_min_residual)
                .reduce(f64::min);
            GroupSummary {
                k,
                geometry,
                replicates: g.len(),
                mean_excess: mean,
                pooled_std_error: pooled,
                replicate_std_error: spread,
                bound_eq2: g[0].bound_eq2,
                bound_rate: g[0].bound_rate,
                audit_min_residual: audit,
            }
        })
        .collect()
}

/// Default sub-Gaussian scale `max(2 G, (2 G)^2)`.
pub fn default_sigma2(g: f64) -> f64 {
    let two_g = 2.0 * g;
    two_g.max(two_g * two_g)
}

/// Every closed-form quantity for `cfg`, without sampling. The deviation
/// threshold uses `g_bar = G`, the worst case.
pub fn bound_report(cfg: &ExperimentConfig) -> Result<BoundReport> {
    let res = cfg.resolve()?;
    bound_report_with(cfg, &res, None)
}

fn bound_report_with(
    cfg: &ExperimentConfig,
    res: &Resolved,
    g_bar: Option<f64>,
) -> Result<BoundReport> {
    let consts = run_constants(cfg, res)?;
    let inp = bound_inputs(cfg, res.geometry.k())?;
    let (deviation_threshold, deviation_prob) = match (&cfg.deviation, cfg.run.n) {
        (Some(dev), n) if n > 0 => {
            let sigma2 = dev.sigma2.unwrap_or_else(|| default_sigma2(consts.g));
            let inp = inp
                .clone()
                .with_deviation(sigma2, dev.theta, g_bar.unwrap_or(consts.g));
            let d = deviation_bound(&inp, consts.u, &consts.schedule)?;
            (Some(d.threshold), Some(d.prob))
        }
        (Some(dev), _) => (None, Some(deviation_probability(dev.theta))),
        (None, _) => (None, None),
    };
    Ok(BoundReport {
        u: consts.u,
        g: consts.g,
        alpha: if consts.schedule.is_empty() {
            f64::NAN
        } else {
            consts.schedule.alpha(0)
        },
        eq2_bound: consts.bound_eq2,
        constant_rate: consts.bound_rate,
        deviation_threshold,
        deviation_prob,
        b: Some(sqrt_prior_sum(&res.weighting_prior)),
        weighted_rate: Some(rate_weighted(&inp, &res.weighting_prior)),
        psi_range: res.geometry.psi_range(),
    })
}

/// Execute all replicates of `cfg`.
pub fn cmd_run(cfg: &ExperimentConfig) -> Result<RunReport> {
    let res = cfg.resolve()?;
    let task = build_task(cfg, &res)?;
    let runs = run_on_task(cfg, &res, &task)?;
    Ok(RunReport {
        comparator: runs.comparator,
        summary: summarize(&runs.rows),
        rows: runs.rows,
        failures: runs.failures,
        bounds: bound_report_with(cfg, &res, None)?,
    })
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SweepResult {
    pub k_grid: Vec<usize>,
    /// Comparator per entry of `k_grid`.
    pub comparators: Vec<ComparatorKind>,
    pub rows: Vec<ResultRow>,
    pub failures: Vec<Failure>,
    pub summary: Vec<GroupSummary>,
    /// Least-squares fit of `ln(mean excess)` on `ln k`; absent when some
    /// mean excess is not positive.
    pub fit: Option<LineFit>,
}

impl SweepResult {
    pub fn ok(&self) -> bool {
        self.failures.is_empty()
    }

    /// Mean excess per k, in grid order.
    pub fn means(&self) -> Vec<f64> {
        self.summary.iter().map(|s| s.mean_excess).collect()
    }

    /// Per-replicate excess at class count `k`, ordered by replicate.
    pub fn excess_at(&self, k: usize) -> Vec<f64> {
        self.rows
            .iter()
            .filter(|r| r.k == k)
            .map(|r| r.empirical_excess)
            .collect()
    }
}

/// Repeat [`cmd_run`] for each `k` in `k_grid` with `n` and `d` held fixed.
pub fn cmd_sweep_k(cfg: &ExperimentConfig, k_grid: &[usize]) -> Result<SweepResult> {
    if k_grid.len() < 3 {
        return Err(Error::invalid(format!(
            "sweep-k needs at least 3 class counts, got {}",
            k_grid.len()
        )));
    }
    if k_grid.windows(2).any(|w| w[0] >= w[1]) {
        return Err(Error::invalid("sweep-k grid must be strictly increasing"));
    }
    let mut rows = Vec::new();
    let mut failures = Vec::new();
    let mut comparators = Vec::new();
    for &k in k_grid {
        let res = cfg.resolve_with_k(k)?;
        let task = build_task(cfg, &res).map_err(|e| match e {
            Error::Construction(m) => Error::Construction(format!("k = {k}: {m}")),
            other => other,
        })?;
        let runs = run_on_task(cfg, &res, &task)?;
        rows.extend(runs.rows);
        failures.extend(runs.failures);
        comparators.push(runs.comparator);
    }
    let summary = summarize(&rows);
    let ks: Vec<usize> = summary.iter().map(|s| s.k).collect();
    let means: Vec<f64> = summary.iter().map(|s| s.mean_excess).collect();
    let fit = if ks.len() == k_grid.len() {
        log_log_slope(&ks, &means)
    } else {
        None
    };
    Ok(SweepResult {
        k_grid: k_grid.to_vec(),
        comparators,
        rows,
        failures,
        summary,
        fit,
    })
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TailReport {
    pub comparator: ComparatorKind,
    pub theta: f64,
    pub threshold: f64,
    pub prob_bound: f64,
    pub sigma2: f64,
    /// Monte Carlo estimate of `max_w ||E l'(w)||_*`; an estimate only.
    pub g_bar_estimate: f64,
    pub replicates: usize,
    pub exceedances: usize,
    pub fraction: f64,
    pub rows: Vec<ResultRow>,
    pub failures: Vec<Failure>,
}

/// Estimate `max_w ||E l'(w)||_*` over the origin, the anchor and random
/// feasible points.
pub fn estimate_g_bar(
    task: &Task,
    spec: &GeometrySpec,
    loss: &LossConfig,
    seed: u64,
) -> Result<f64> {
    use rand::SeedableRng;
    let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed ^ 0x6ba2);
    let mut points = vec![spec.initial_point(), task.anchor.clone()];
    points.extend((0..G_BAR_POINTS).map(|_| spec.random_feasible(&mut rng)));
    let norms: Vec<Result<f64>> = points
        .par_iter()
        .enumerate()
        .map(|(i, w)| {
            let mut mean = WeightMatrix::zeros(spec.k(), spec.d());
            for j in 0..G_BAR_SAMPLES {
                let inst = task.instance(seed ^ (i as u64 + 1), j as u64);
                let g = subgradient(&inst, w, loss)?;
                for (y, row) in &g.block_updates {
                    mean.block_mut(*y)
                        .iter_mut()
                        .zip(row)
                        .for_each(|(a, b)| *a += b);
                }
            }
            Ok(spec.dual_norm(&mean.scale(1.0 / G_BAR_SAMPLES as f64)))
        })
        .collect();
    let mut best = 0.0f64;
    for v in norms {
        best = best.max(v?);
    }
    Ok(best)
}

/// Empirical exceedance of the large-deviation threshold at `theta`.
pub fn cmd_deviation(cfg: &ExperimentConfig, theta: f64, replicates: usize) -> Result<TailReport> {
    if replicates == 0 {
        return Err(Error::invalid("deviation needs at least one replicate"));
    }
    if cfg.run.n == 0 {
        return Err(Error::invalid("deviation needs n >= 1"));
    }
    let mut cfg = cfg.clone();
    cfg.run.replicates = replicates;
    let res = cfg.resolve()?;
    let task = build_task(&cfg, &res)?;
    let consts = run_constants(&cfg, &res)?;
    let sigma2 = cfg
        .deviation
        .as_ref()
        .and_then(|d| d.sigma2)
        .unwrap_or_else(|| default_sigma2(consts.g));
    let g_bar = with_pool(cfg.run.workers, || {
        estimate_g_bar(&task, &res.geometry, &res.loss, cfg.run.base_seed)
    })??;
    let inp = bound_inputs(&cfg, res.geometry.k())?.with_deviation(sigma2, theta, g_bar);
    let dev = deviation_bound(&inp, consts.u, &consts.schedule)?;
    let TaskRuns {
        rows,
        failures,
        comparator,
    } = run_on_task(&cfg, &res, &task)?;
    let exceedances = rows
        .iter()
        .filter(|r| r.empirical_excess > dev.threshold)
        .count();
    Ok(TailReport {
        comparator,
        theta,
        threshold: dev.threshold,
        prob_bound: dev.prob,
        sigma2,
        g_bar_estimate: g_bar,
        replicates: rows.len(),
        exceedances,
        fraction: exceedances as f64 / rows.len().max(1) as f64,
        rows,
        failures,
    })
}

/// Lemma-style audit: one audited run per replicate, reporting the worst
/// per-step residual.
pub fn cmd_audit(cfg: &ExperimentConfig) -> Result<RunReport> {
    let mut cfg = cfg.clone();
    cfg.run.audit = true;
    cmd_run(&cfg)
}

/// `e ln k`, exposed for reports that compare against the l1/l2 capacity.
pub fn l1l2_capacity_coefficient(k: usize) -> f64 {
    E * (k as f64).ln()
}
