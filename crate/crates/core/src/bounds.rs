//! Closed-form theoretical quantities: the oracle inequality, constant-step
//! rates for both geometries, large-deviation thresholds, and the
//! prior-weighted rates for imbalanced classes.

use std::f64::consts::{E, SQRT_2};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::smd::StepSchedule;

/// Scalars shared by the bound formulas.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BoundInputs {
    pub omega: f64,
    pub x_bound: f64,
    pub rho: f64,
    pub k: usize,
    pub n: usize,
    pub sigma2: Option<f64>,
    pub theta: Option<f64>,
    pub g_bar: Option<f64>,
}

impl BoundInputs {
    pub fn new(omega: f64, x_bound: f64, rho: f64, k: usize, n: usize) -> Result<Self> {
        for (name, v) in [("omega", omega), ("x_bound", x_bound), ("rho", rho)] {
            if !(v > 0.0 && v.is_finite()) {
                return Err(Error::invalid(format!("{name} must be positive, got {v}")));
            }
        }
        if k == 0 || n == 0 {
            return Err(Error::invalid("k and n must be positive"));
        }
        Ok(BoundInputs {
            omega,
            x_bound,
            rho,
            k,
            n,
            sigma2: None,
            theta: None,
            g_bar: None,
        })
    }

    pub fn with_deviation(mut self, sigma2: f64, theta: f64, g_bar: f64) -> Self {
        self.sigma2 = Some(sigma2);
        self.theta = Some(theta);
        self.g_bar = Some(g_bar);
        self
    }

    fn ln_k(&self) -> Result<f64> {
        if self.k < 2 {
            return Err(Error::invalid(format!("need k >= 2, got {}", self.k)));
        }
        Ok((self.k as f64).ln())
    }
}

/// Class probabilities, optionally with an estimate `p_hat` satisfying
/// `p <= (1 + eps) p_hat`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ClassPrior {
    p: Vec<f64>,
    estimated: Option<EstimatedPrior>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EstimatedPrior {
    pub p_hat: Vec<f64>,
    pub epsilon: f64,
}

fn check_distribution(p: &[f64], what: &str) -> Result<()> {
    if p.is_empty() {
        return Err(Error::invalid(format!("{what} is empty")));
    }
    if p.iter().any(|v| !(*v >= 0.0 && v.is_finite())) {
        return Err(Error::invalid(format!(
            "{what} has negative or non-finite entries"
        )));
    }
    let s: f64 = p.iter().sum();
    if (s - 1.0).abs() > 1e-12 {
        return Err(Error::invalid(format!("{what} sums to {s}, not 1")));
    }
    Ok(())
}

impl ClassPrior {
    pub fn new(p: Vec<f64>) -> Result<Self> {
        check_distribution(&p, "prior")?;
        Ok(ClassPrior { p, estimated: None })
    }

    pub fn uniform(k: usize) -> Result<Self> {
        if k == 0 {
            return Err(Error::invalid("uniform prior needs k >= 1"));
        }
        // Exact sum for any k.
        let mut p = vec![1.0 / k as f64; k];
        let s: f64 = p.iter().sum();
        p.iter_mut().for_each(|v| *v /= s);
        ClassPrior::new(p)
    }

    pub fn point_mass(k: usize, y: usize) -> Result<Self> {
        if y >= k {
            return Err(Error::invalid("point mass label out of range"));
        }
        let mut p = vec![0.0; k];
        p[y] = 1.0;
        ClassPrior::new(p)
    }

    /// Attach an estimate `p_hat` with `p <= (1 + eps) p_hat` componentwise.
    pub fn with_estimate(mut self, p_hat: Vec<f64>, epsilon: f64) -> Result<Self> {
        check_distribution(&p_hat, "estimated prior")?;
        if p_hat.len() != self.p.len() {
            return Err(Error::invalid("estimated prior has the wrong length"));
        }
        if !(epsilon >= 0.0) {
            return Err(Error::invalid("epsilon must be nonnegative"));
        }
        if let Some(y) = (0..self.p.len()).find(|&y| self.p[y] > (1.0 + epsilon) * p_hat[y] + 1e-15)
        {
            return Err(Error::invalid(format!(
                "p({0}) = {1} exceeds (1 + eps) p_hat({0}) = {2}",
                y + 1,
                self.p[y],
                (1.0 + epsilon) * p_hat[y]
            )));
        }
        self.estimated = Some(EstimatedPrior { p_hat, epsilon });
        Ok(self)
    }

    pub fn k(&self) -> usize {
        self.p.len()
    }

    pub fn probabilities(&self) -> &[f64] {
        &self.p
    }

    pub fn estimated(&self) -> Option<&EstimatedPrior> {
        self.estimated.as_ref()
    }

    /// The probabilities the weighting is built from: `p_hat` when an
    /// estimate is attached, `p` otherwise.
    pub fn working(&self) -> &[f64] {
        self.estimated.as_ref().map_or(&self.p, |e| &e.p_hat)
    }
}

/// Right-hand side of the oracle inequality,
/// `(U^2 + G^2 sum alpha_m^2 / 2) / sum alpha_m`.
pub fn oracle_bound(u: f64, g: f64, schedule: &StepSchedule) -> Result<f64> {
    if schedule.is_empty() {
        return Err(Error::invalid("oracle bound of an empty schedule"));
    }
    if !(u > 0.0 && g > 0.0) {
        return Err(Error::invalid("U and G must be positive"));
    }
    Ok((u * u + 0.5 * g * g * schedule.sum_sq()) / schedule.sum())
}

/// `(U, G)` for the product of Euclidean balls: `U = omega sqrt(k)`,
/// `G = sqrt(2) X / rho`.
pub fn euclid_constants(inp: &BoundInputs) -> (f64, f64) {
    (
        inp.omega * (inp.k as f64).sqrt(),
        SQRT_2 * inp.x_bound / inp.rho,
    )
}

/// `(U, G)` for the l1/l2 ball: `U = sqrt(e ln(k) omega)`, `G = X / rho`.
pub fn l1l2_constants(inp: &BoundInputs) -> Result<(f64, f64)> {
    let ln_k = inp.ln_k()?;
    Ok(((E * ln_k * inp.omega).sqrt(), inp.x_bound / inp.rho))
}

/// `2 omega X / rho * sqrt(k / n)`.
pub fn rate_euclid(inp: &BoundInputs) -> f64 {
    2.0 * inp.omega * inp.x_bound / inp.rho * (inp.k as f64 / inp.n as f64).sqrt()
}

/// `(X / rho) sqrt(2 e omega ln k / n)`.
pub fn rate_l1l2(inp: &BoundInputs) -> Result<f64> {
    let ln_k = inp.ln_k()?;
    Ok(inp.x_bound / inp.rho * (2.0 * E * inp.omega * ln_k / inp.n as f64).sqrt())
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Deviation {
    pub threshold: f64,
    pub prob: f64,
}

/// `e^(1 - theta) + e^(-theta^2 / 4)`.
pub fn deviation_probability(theta: f64) -> f64 {
    (1.0 - theta).exp() + (-theta * theta / 4.0).exp()
}

/// Large-deviation threshold with `gamma_m = alpha_m / sum alpha`:
/// `sum alpha_m gamma_m g^2 + U^2 / sum alpha
///  + theta (sqrt(U sigma^2 sum gamma_m^2) + sum alpha_m gamma_m sigma^2)`,
/// exceeded with probability at most [`deviation_probability`].
pub fn deviation_bound(inp: &BoundInputs, u: f64, schedule: &StepSchedule) -> Result<Deviation> {
    let (sigma2, theta, g_bar) = match (inp.sigma2, inp.theta, inp.g_bar) {
        (Some(s), Some(t), Some(g)) => (s, t, g),
        _ => {
            return Err(Error::invalid(
                "deviation bound needs sigma2, theta and g_bar",
            ))
        }
    };
    if schedule.is_empty() {
        return Err(Error::invalid("deviation bound of an empty schedule"));
    }
    if !(theta >= 0.0) {
        return Err(Error::invalid("theta must be nonnegative"));
    }
    let total = schedule.sum();
    let sum_alpha_gamma = schedule.sum_sq() / total;
    let sum_gamma_sq = schedule.sum_sq() / (total * total);
    let threshold = sum_alpha_gamma * g_bar * g_bar
        + u * u / total
        + theta * ((u * sigma2 * sum_gamma_sq).sqrt() + sum_alpha_gamma * sigma2);
    Ok(Deviation {
        threshold,
        prob: deviation_probability(theta),
    })
}

/// Closed form of [`deviation_bound`] for the constant step
/// `sqrt(2) U / (G sqrt(n))` with `g_bar = G`:
/// `3 U G / sqrt(2n) + theta (sqrt(U sigma^2 / n) + sqrt(2) U sigma^2 / (G sqrt(n)))`.
pub fn deviation_threshold_constant(u: f64, g: f64, n: usize, sigma2: f64, theta: f64) -> f64 {
    let n = n as f64;
    3.0 * u * g / (2.0 * n).sqrt()
        + theta * ((u * sigma2 / n).sqrt() + SQRT_2 * u * sigma2 / (g * n.sqrt()))
}

/// `B = sum_y sqrt(p(y))`, over the working probabilities.
pub fn sqrt_prior_sum(prior: &ClassPrior) -> f64 {
    prior.working().iter().map(|p| p.sqrt()).sum()
}

/// Prior-weighted rate `omega X sqrt(2) / (rho sqrt(n)) * B`, or with an
/// estimated prior `omega X sqrt(2 (1 + eps)) / (rho sqrt(n)) * sum sqrt(p_hat)`.
pub fn rate_weighted(inp: &BoundInputs, prior: &ClassPrior) -> f64 {
    let eps = prior.estimated().map_or(0.0, |e| e.epsilon);
    inp.omega * inp.x_bound * (2.0 * (1.0 + eps)).sqrt() / (inp.rho * (inp.n as f64).sqrt())
        * sqrt_prior_sum(prior)
}

/// Constant step `omega rho / (X sqrt(2n))` of the weighted run.
pub fn weighted_step(inp: &BoundInputs) -> f64 {
    inp.omega * inp.rho / (inp.x_bound * (2.0 * inp.n as f64).sqrt())
}

/// Norm weights `b` and scorer weights `c` for an imbalanced prior.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct WeightedParameters {
    /// `b_y = sqrt(p(y))`.
    pub b: Vec<f64>,
    /// `c_y = p(y)^(1/4) / max_y' p(y')^(1/4)`.
    pub c: Vec<f64>,
    /// Some class has zero probability, so `b` is not a valid weighting.
    pub degenerate: bool,
}

pub fn weighted_parameters(prior: &ClassPrior) -> WeightedParameters {
    let p = prior.working();
    let b: Vec<f64> = p.iter().map(|v| v.sqrt()).collect();
    let raw: Vec<f64> = p.iter().map(|v| v.sqrt().sqrt()).collect();
    let max = raw.iter().cloned().fold(0.0, f64::max);
    let c = raw.iter().map(|v| v / max).collect();
    WeightedParameters {
        degenerate: p.contains(&0.0),
        b,
        c,
    }
}

/// Upper bound on the variance term `A`:
/// `sum_y ( p(y)/gamma(y) + p(y)/alpha(y)^2 * max_y' alpha(y')^2/gamma(y') )`
/// with `gamma = b` and `alpha = c`. The expression is invariant to a
/// rescaling of `c`.
pub fn bound_a(prior: &ClassPrior, b: &[f64], c: &[f64]) -> Result<f64> {
    let p = prior.probabilities();
    if b.len() != p.len() || c.len() != p.len() {
        return Err(Error::invalid("b and c must have one entry per class"));
    }
    let max_ratio = (0..p.len())
        .filter(|&y| b[y] > 0.0)
        .map(|y| c[y] * c[y] / b[y])
        .fold(0.0, f64::max);
    Ok((0..p.len())
        .filter(|&y| p[y] > 0.0)
        .map(|y| p[y] / b[y] + p[y] / (c[y] * c[y]) * max_ratio)
        .sum())
}

/// `2 (1 + eps) sum sqrt(p_hat)`, the closed-form bound on `A` under an
/// estimated prior.
pub fn bound_a_estimated(prior: &ClassPrior) -> f64 {
    let eps = prior.estimated().map_or(0.0, |e| e.epsilon);
    2.0 * (1.0 + eps) * sqrt_prior_sum(prior)
}

/// Everything the `bounds` subcommand reports.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BoundReport {
    #[serde(rename = "U")]
    pub u: f64,
    #[serde(rename = "G")]
    pub g: f64,
    pub alpha: f64,
    pub eq2_bound: f64,
    pub constant_rate: f64,
    pub deviation_threshold: Option<f64>,
    pub deviation_prob: Option<f64>,
    #[serde(rename = "B")]
    pub b: Option<f64>,
    pub weighted_rate: Option<f64>,
    /// Exact range of psi over the feasible set, for comparison with `U^2`.
    pub psi_range: f64,
}
