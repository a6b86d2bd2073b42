//! Distance-generating functions, their Bregman divergences, feasible sets
//! and the constrained prox-mapping
//! `argmin_{w in W} { D(w, w_m) + alpha <g, w - w_m> }`.
//!
//! Three setups are provided:
//!
//! * `euclidean-product`: `psi(w) = 1/2 sum ||w_i||^2` on `max_i ||w_i|| <= omega`.
//! * `block-power`: `psi(w) = kappa sum ||w_i||^q` with `q = 1 + 1/ln k` and
//!   `kappa = e ln k / q`, on `sum_i ||w_i|| <= omega` (l1/l2 geometry).
//! * `weighted-euclidean`: `psi(w) = 1/2 sum b_i ||w_i||^2` on
//!   `max_i ||w_i|| <= omega`.
//!
//! All block norms are Euclidean.

use std::f64::consts::E;
use std::fmt;
use std::str::FromStr;

use rand::Rng;
use rand_distr::{Distribution, Exp1, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::loss::SubgradientResult;
use crate::matrix::{dot, norm2, WeightMatrix};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum GeometryKind {
    EuclideanProduct,
    BlockPower,
    WeightedEuclidean,
}

impl GeometryKind {
    pub const ALL: [GeometryKind; 3] = [
        GeometryKind::EuclideanProduct,
        GeometryKind::BlockPower,
        GeometryKind::WeightedEuclidean,
    ];

    pub fn name(self) -> &'static str {
        match self {
            GeometryKind::EuclideanProduct => "euclidean-product",
            GeometryKind::BlockPower => "block-power",
            GeometryKind::WeightedEuclidean => "weighted-euclidean",
        }
    }
}

impl fmt::Display for GeometryKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for GeometryKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        GeometryKind::ALL
            .into_iter()
            .find(|k| k.name() == s)
            .ok_or_else(|| Error::invalid(format!("unknown geometry kind `{s}`")))
    }
}

/// A feasible set together with its distance-generating function.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GeometrySpec {
    kind: GeometryKind,
    omega: f64,
    k: usize,
    d: usize,
    block_weights: Option<Vec<f64>>,
}

/// Outer iteration cap of the block-power multiplier search.
const BISECTION_MAX_ITER: usize = 200;
/// Relative bracket width accepted for the block-power multiplier.
const MULTIPLIER_TOL: f64 = 1e-10;

impl GeometrySpec {
    pub fn new(
        kind: GeometryKind,
        omega: f64,
        k: usize,
        d: usize,
        block_weights: Option<Vec<f64>>,
    ) -> Result<Self> {
        if !(omega > 0.0 && omega.is_finite()) {
            return Err(Error::invalid(format!(
                "omega must be positive, got {omega}"
            )));
        }
        if k < 2 {
            return Err(Error::invalid(format!("need k >= 2 classes, got {k}")));
        }
        if d < 1 {
            return Err(Error::invalid("need d >= 1"));
        }
        match (kind, &block_weights) {
            (GeometryKind::WeightedEuclidean, None) => {
                return Err(Error::invalid("weighted-euclidean requires block_weights"))
            }
            (GeometryKind::WeightedEuclidean, Some(b)) => {
                if b.len() != k {
                    return Err(Error::invalid(format!(
                        "block_weights has {} entries, expected {k}",
                        b.len()
                    )));
                }
                if let Some(i) = b.iter().position(|v| !(*v > 0.0 && v.is_finite())) {
                    return Err(Error::invalid(format!(
                        "block weight for class {} must be positive, got {}",
                        i + 1,
                        b[i]
                    )));
                }
            }
            (_, Some(_)) => {
                return Err(Error::invalid(format!(
                    "block_weights only apply to weighted-euclidean, not {kind}"
                )))
            }
            (_, None) => {}
        }
        Ok(GeometrySpec {
            kind,
            omega,
            k,
            d,
            block_weights,
        })
    }

    pub fn euclidean(omega: f64, k: usize, d: usize) -> Result<Self> {
        Self::new(GeometryKind::EuclideanProduct, omega, k, d, None)
    }

    pub fn block_power(omega: f64, k: usize, d: usize) -> Result<Self> {
        Self::new(GeometryKind::BlockPower, omega, k, d, None)
    }

    pub fn weighted(omega: f64, b: Vec<f64>, d: usize) -> Result<Self> {
        let k = b.len();
        Self::new(GeometryKind::WeightedEuclidean, omega, k, d, Some(b))
    }

    pub fn kind(&self) -> GeometryKind {
        self.kind
    }

    pub fn omega(&self) -> f64 {
        self.omega
    }

    pub fn k(&self) -> usize {
        self.k
    }

    pub fn d(&self) -> usize {
        self.d
    }

    pub fn block_weights(&self) -> Option<&[f64]> {
        self.block_weights.as_deref()
    }

    /// Exponent `q = 1 + 1/ln k` of the block-power function.
    pub fn exponent(&self) -> f64 {
        1.0 + 1.0 / (self.k as f64).ln()
    }

    /// Coefficient `kappa = e ln k / q` of the block-power function.
    pub fn coefficient(&self) -> f64 {
        E * (self.k as f64).ln() / self.exponent()
    }

    fn weight(&self, y: usize) -> f64 {
        self.block_weights.as_ref().map_or(1.0, |b| b[y])
    }

    fn check(&self, w: &WeightMatrix) -> Result<()> {
        if w.k() != self.k || w.d() != self.d {
            return Err(Error::invalid(format!(
                "matrix is {}x{} but geometry expects {}x{}",
                w.k(),
                w.d(),
                self.k,
                self.d
            )));
        }
        Ok(())
    }

    /// `psi(w)`.
    pub fn dgf_value(&self, w: &WeightMatrix) -> Result<f64> {
        self.check(w)?;
        Ok(self.dgf_value_unchecked(w))
    }

    fn dgf_value_unchecked(&self, w: &WeightMatrix) -> f64 {
        match self.kind {
            GeometryKind::EuclideanProduct => 0.5 * w.as_slice().iter().map(|v| v * v).sum::<f64>(),
            GeometryKind::WeightedEuclidean => {
                0.5 * w
                    .blocks()
                    .enumerate()
                    .map(|(y, b)| self.weight(y) * dot(b, b))
                    .sum::<f64>()
            }
            GeometryKind::BlockPower => {
                let q = self.exponent();
                self.coefficient() * w.blocks().map(|b| norm2(b).powf(q)).sum::<f64>()
            }
        }
    }

    /// `grad psi(w)`, blockwise.
    pub fn dgf_grad(&self, w: &WeightMatrix) -> Result<WeightMatrix> {
        self.check(w)?;
        Ok(self.dgf_grad_unchecked(w))
    }

    fn dgf_grad_unchecked(&self, w: &WeightMatrix) -> WeightMatrix {
        let mut out = w.clone();
        match self.kind {
            GeometryKind::EuclideanProduct => {}
            GeometryKind::WeightedEuclidean => {
                for y in 0..self.k {
                    let b = self.weight(y);
                    out.block_mut(y).iter_mut().for_each(|v| *v *= b);
                }
            }
            GeometryKind::BlockPower => {
                let q = self.exponent();
                let kq = self.coefficient() * q;
                for y in 0..self.k {
                    let r = norm2(w.block(y));
                    // The gradient vanishes at a zero block since q > 1.
                    let s = if r > 0.0 { kq * r.powf(q - 2.0) } else { 0.0 };
                    out.block_mut(y).iter_mut().for_each(|v| *v *= s);
                }
            }
        }
        out
    }

    /// Bregman divergence `psi(w1) - psi(w2) - <grad psi(w2), w1 - w2>`,
    /// evaluated block by block.
    pub fn bregman(&self, w1: &WeightMatrix, w2: &WeightMatrix) -> Result<f64> {
        self.check(w1)?;
        self.check(w2)?;
        Ok(self.bregman_unchecked(w1, w2))
    }

    pub(crate) fn bregman_unchecked(&self, w1: &WeightMatrix, w2: &WeightMatrix) -> f64 {
        let mut total = 0.0;
        match self.kind {
            GeometryKind::EuclideanProduct | GeometryKind::WeightedEuclidean => {
                for y in 0..self.k {
                    let s: f64 = w1
                        .block(y)
                        .iter()
                        .zip(w2.block(y))
                        .map(|(a, b)| (a - b) * (a - b))
                        .sum();
                    total += 0.5 * self.weight(y) * s;
                }
            }
            GeometryKind::BlockPower => {
                let q = self.exponent();
                let kappa = self.coefficient();
                for y in 0..self.k {
                    let a = w1.block(y);
                    let b = w2.block(y);
                    let ra = norm2(a);
                    let rb = norm2(b);
                    let lin = if rb > 0.0 {
                        // <grad at b, a - b> / kappa = q rb^(q-2) (<b,a> - rb^2)
                        q * rb.powf(q - 2.0) * (dot(a, b) - rb * rb)
                    } else {
                        0.0
                    };
                    total += kappa * (ra.powf(q) - rb.powf(q) - lin);
                }
            }
        }
        total.max(0.0)
    }

    /// `argmin_W psi`, the origin for every supported setup.
    pub fn initial_point(&self) -> WeightMatrix {
        WeightMatrix::zeros(self.k, self.d)
    }

    /// Capacity `U^2` as used in bound reporting: `k omega^2`,
    /// `e ln(k) omega` and `1/2 (sum b) omega^2` respectively.
    pub fn capacity(&self) -> f64 {
        let k = self.k as f64;
        match self.kind {
            GeometryKind::EuclideanProduct => k * self.omega * self.omega,
            GeometryKind::BlockPower => E * k.ln() * self.omega,
            GeometryKind::WeightedEuclidean => {
                0.5 * self
                    .block_weights
                    .as_ref()
                    .map_or(0.0, |b| b.iter().sum::<f64>())
                    * self.omega
                    * self.omega
            }
        }
    }

    /// Exact `sup_W psi - inf_W psi`. For block-power this is
    /// `kappa omega^q`, which exceeds `capacity()` once
    /// `omega > q^(ln k)`.
    pub fn psi_range(&self) -> f64 {
        match self.kind {
            GeometryKind::EuclideanProduct => 0.5 * self.k as f64 * self.omega * self.omega,
            GeometryKind::BlockPower => self.coefficient() * self.omega.powf(self.exponent()),
            GeometryKind::WeightedEuclidean => self.capacity(),
        }
    }

    /// Value of the constraint function; `W = { constraint <= omega }`.
    pub fn constraint_value(&self, w: &WeightMatrix) -> f64 {
        let norms = w.block_norms();
        match self.kind {
            GeometryKind::BlockPower => norms.iter().sum(),
            _ => norms.iter().cloned().fold(0.0, f64::max),
        }
    }

    pub fn is_feasible(&self, w: &WeightMatrix, tol: f64) -> bool {
        self.check(w).is_ok() && w.is_finite() && self.constraint_value(w) <= self.omega + tol
    }

    /// Norm with respect to which `psi` is 1-strongly convex.
    pub fn norm(&self, w: &WeightMatrix) -> f64 {
        let norms = w.block_norms();
        match self.kind {
            GeometryKind::EuclideanProduct => norm2(&norms),
            GeometryKind::BlockPower => norms.iter().sum(),
            GeometryKind::WeightedEuclidean => norms
                .iter()
                .enumerate()
                .map(|(y, r)| self.weight(y) * r * r)
                .sum::<f64>()
                .sqrt(),
        }
    }

    /// Dual of [`GeometrySpec::norm`].
    pub fn dual_norm(&self, g: &WeightMatrix) -> f64 {
        let norms = g.block_norms();
        self.dual_norm_of_blocks(norms.into_iter().enumerate())
    }

    /// Dual norm of a sparse subgradient.
    pub fn dual_norm_sparse(&self, g: &SubgradientResult) -> f64 {
        self.dual_norm_of_blocks(g.block_norms())
    }

    fn dual_norm_of_blocks(&self, norms: impl Iterator<Item = (usize, f64)>) -> f64 {
        match self.kind {
            GeometryKind::EuclideanProduct => norms.map(|(_, r)| r * r).sum::<f64>().sqrt(),
            GeometryKind::BlockPower => norms.map(|(_, r)| r).fold(0.0, f64::max),
            GeometryKind::WeightedEuclidean => norms
                .map(|(y, r)| r * r / self.weight(y))
                .sum::<f64>()
                .sqrt(),
        }
    }

    /// One mirror step with a sparse subgradient.
    pub fn prox_step(
        &self,
        w_m: &WeightMatrix,
        g: &SubgradientResult,
        alpha: f64,
    ) -> Result<WeightMatrix> {
        self.check(w_m)?;
        let dense = g.to_dense(self.k, self.d);
        self.prox_step_dense(w_m, &dense, alpha)
    }

    /// Exact minimizer of `D(w, w_m) + alpha <g, w - w_m>` over `W`.
    pub fn prox_step_dense(
        &self,
        w_m: &WeightMatrix,
        g: &WeightMatrix,
        alpha: f64,
    ) -> Result<WeightMatrix> {
        self.check(w_m)?;
        self.check(g)?;
        if !(alpha > 0.0 && alpha.is_finite()) {
            return Err(Error::invalid(format!(
                "step size must be positive, got {alpha}"
            )));
        }
        match self.kind {
            GeometryKind::EuclideanProduct | GeometryKind::WeightedEuclidean => {
                let mut out = w_m.clone();
                for y in 0..self.k {
                    let step = alpha / self.weight(y);
                    let row = out.block_mut(y);
                    for (v, gv) in row.iter_mut().zip(g.block(y)) {
                        *v -= step * gv;
                    }
                    let r = norm2(row);
                    if r > self.omega {
                        let s = self.omega / r;
                        row.iter_mut().for_each(|v| *v *= s);
                    }
                }
                if !out.is_finite() {
                    return Err(Error::Numerical {
                        message: "prox produced non-finite entries".into(),
                        residual: f64::NAN,
                        step: None,
                    });
                }
                Ok(out)
            }
            GeometryKind::BlockPower => self.block_power_prox(w_m, g, alpha),
        }
    }

    /// The minimizer is block-radial: block `i` points along
    /// `z_i = grad psi(w_m)_i - alpha g_i` with length
    /// `t_i(lambda) = ((|z_i| - lambda)_+ / (kappa q))^(1/(q-1))`, where
    /// `lambda >= 0` is the multiplier of `sum t_i <= omega`.
    fn block_power_prox(
        &self,
        w_m: &WeightMatrix,
        g: &WeightMatrix,
        alpha: f64,
    ) -> Result<WeightMatrix> {
        let q = self.exponent();
        let kq = self.coefficient() * q;
        let inv = 1.0 / (q - 1.0);
        let mut z = self.dgf_grad_unchecked(w_m);
        z.axpy(-alpha, g);
        let zn = z.block_norms();
        if zn.iter().any(|v| !v.is_finite()) {
            return Err(Error::Numerical {
                message: "non-finite dual point in block-power prox".into(),
                residual: f64::NAN,
                step: None,
            });
        }
        let lengths = |lambda: f64| -> Vec<f64> {
            zn.iter()
                .map(|&r| {
                    let s = r - lambda;
                    if s > 0.0 {
                        (s / kq).powf(inv)
                    } else {
                        0.0
                    }
                })
                .collect()
        };
        let total = |t: &[f64]| t.iter().sum::<f64>();

        let mut t = lengths(0.0);
        if total(&t) > self.omega {
            let mut lo = 0.0;
            let mut hi = zn.iter().cloned().fold(0.0, f64::max);
            let mut iters = 0;
            while iters < BISECTION_MAX_ITER {
                let mid = 0.5 * (lo + hi);
                if mid <= lo || mid >= hi {
                    break;
                }
                if total(&lengths(mid)) > self.omega {
                    lo = mid;
                } else {
                    hi = mid;
                }
                iters += 1;
            }
            let width = hi - lo;
            if width > MULTIPLIER_TOL * hi.max(1.0) {
                return Err(Error::Numerical {
                    message: format!(
                        "block-power multiplier search stalled after {iters} iterations"
                    ),
                    residual: width,
                    step: None,
                });
            }
            // The upper end of the bracket is always feasible.
            t = lengths(hi);
        }

        let mut out = z;
        for (y, (&ty, &ry)) in t.iter().zip(&zn).enumerate() {
            let row = out.block_mut(y);
            if ty > 0.0 && ry > 0.0 {
                let s = ty / ry;
                row.iter_mut().for_each(|v| *v *= s);
            } else {
                row.iter_mut().for_each(|v| *v = 0.0);
            }
        }
        // Guard against the last ulp of rounding in the renormalization.
        let c = self.constraint_value(&out);
        if c > self.omega {
            let s = self.omega / c;
            out.as_mut_slice().iter_mut().for_each(|v| *v *= s);
        }
        Ok(out)
    }

    /// Draw a point of `W`. Roughly a quarter of the draws land on the
    /// boundary of the set, the rest in its interior.
    pub fn random_feasible<R: Rng + ?Sized>(&self, rng: &mut R) -> WeightMatrix {
        let mut w = WeightMatrix::zeros(self.k, self.d);
        let on_boundary = rng.random_bool(0.25);
        let radii: Vec<f64> = match self.kind {
            GeometryKind::BlockPower => {
                let e: Vec<f64> = (0..self.k)
                    .map(|_| {
                        let v: f64 = Exp1.sample(rng);
                        // Sparse-ish mass: some blocks near zero.
                        if rng.random_bool(0.3) {
                            v * 1e-3
                        } else {
                            v
                        }
                    })
                    .collect();
                let s: f64 = e.iter().sum();
                let scale = if on_boundary {
                    1.0
                } else {
                    rng.random::<f64>()
                };
                e.iter().map(|v| self.omega * scale * v / s).collect()
            }
            _ => (0..self.k)
                .map(|_| {
                    if on_boundary && rng.random_bool(0.5) {
                        self.omega
                    } else {
                        self.omega * rng.random::<f64>()
                    }
                })
                .collect(),
        };
        for (y, r) in radii.into_iter().enumerate() {
            let row = w.block_mut(y);
            for v in row.iter_mut() {
                *v = StandardNormal.sample(rng);
            }
            let n = norm2(row);
            if n > 0.0 {
                row.iter_mut().for_each(|v| *v *= r / n);
            }
        }
        let c = self.constraint_value(&w);
        if c > self.omega {
            let s = self.omega / c;
            w.as_mut_slice().iter_mut().for_each(|v| *v *= s);
        }
        w
    }
}
