//! Synthetic margin-separable tasks with a known zero-risk parameter.
//!
//! Each class `y` owns a unit direction `e_y`. Features of class `y` live in
//! a cap around `X e_y`:
//!
//! `x = X (cos(phi) e_y + sin(phi) v)`, `v` a random unit vector orthogonal
//! to `e_y`, `phi ~ U[0, phi_max(y)]`,
//!
//! and the anchor `w_y = a e_y` separates every draw with margin at least
//! `rho_star`. The block length `a` is chosen so the anchor lies in the
//! experiment's feasible set: `omega` for the ball products and `omega / k`
//! for the l1/l2 ball.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::bounds::ClassPrior;
use crate::error::{Error, Result};
use crate::geometry::{GeometryKind, GeometrySpec};
use crate::loss::{hinge_loss, margin_from_scores, score, Instance, LossConfig};
use crate::matrix::{dot, norm2, WeightMatrix};

/// Relative safety factor applied to `rho_star` when sizing the caps, so
/// that rounding never pushes a margin below it.
const MARGIN_SAFETY: f64 = 1e-9;

/// `p(i) = i^-beta / sum_j j^-beta`, `i = 1..k`.
pub fn power_law_prior(k: usize, beta: f64) -> Result<ClassPrior> {
    if k < 2 {
        return Err(Error::invalid("power-law prior needs k >= 2"));
    }
    if !(beta >= 0.0 && beta.is_finite()) {
        return Err(Error::invalid(format!(
            "beta must be nonnegative, got {beta}"
        )));
    }
    let raw: Vec<f64> = (1..=k).map(|i| (i as f64).powf(-beta)).collect();
    let s: f64 = raw.iter().sum();
    ClassPrior::new(raw.into_iter().map(|v| v / s).collect())
}

/// How the anchor's block lengths are chosen.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum AnchorLayout {
    /// `per-block` for the ball products, `shared-budget` for block-power.
    #[default]
    Auto,
    /// Every block has length `omega`.
    PerBlock,
    /// Every block has length `omega / k`, so the block norms sum to `omega`.
    /// Feasible in every geometry.
    SharedBudget,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TaskParams {
    pub k: usize,
    pub d: usize,
    pub x_bound: f64,
    pub rho_star: f64,
    pub prior: ClassPrior,
    #[serde(default)]
    pub anchor: AnchorLayout,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Task {
    pub k: usize,
    pub d: usize,
    pub x_bound: f64,
    pub rho_star: f64,
    pub prior: ClassPrior,
    pub anchor: WeightMatrix,
    pub seed: u64,
    /// Geometry the anchor was sized for.
    pub geometry: GeometryKind,
    directions: Vec<Vec<f64>>,
    cap_angles: Vec<f64>,
    cumulative: Vec<f64>,
}

/// Monte Carlo estimate with its standard error.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct RiskEstimate {
    pub mean: f64,
    pub std_error: f64,
}

fn gaussian_vec(rng: &mut ChaCha8Rng, d: usize) -> Vec<f64> {
    (0..d).map(|_| StandardNormal.sample(rng)).collect()
}

fn normalize(v: &mut [f64]) -> f64 {
    let n = norm2(v);
    if n > 0.0 {
        v.iter_mut().for_each(|x| *x /= n);
    }
    n
}

/// `k` unit directions in `R^d`. For `d >= k` they are the vertices of a
/// regular simplex spanned by a random orthonormal system, so every pair
/// has inner product `-1/(k-1)`. For `d < k` random directions are spread
/// apart by a repulsion iteration (on a line they simply alternate sign).
fn class_directions(k: usize, d: usize, rng: &mut ChaCha8Rng) -> Result<Vec<Vec<f64>>> {
    if d >= k {
        let mut basis: Vec<Vec<f64>> = Vec::with_capacity(k);
        while basis.len() < k {
            let mut v = gaussian_vec(rng, d);
            for b in &basis {
                let c = dot(&v, b);
                v.iter_mut().zip(b).for_each(|(x, y)| *x -= c * y);
            }
            if normalize(&mut v) > 1e-8 {
                basis.push(v);
            }
        }
        let mean: Vec<f64> = (0..d)
            .map(|i| basis.iter().map(|b| b[i]).sum::<f64>() / k as f64)
            .collect();
        return Ok(basis
            .into_iter()
            .map(|mut b| {
                b.iter_mut().zip(&mean).for_each(|(x, m)| *x -= m);
                normalize(&mut b);
                b
            })
            .collect());
    }

    if d == 1 {
        return Ok((0..k)
            .map(|i| vec![if i % 2 == 0 { 1.0 } else { -1.0 }])
            .collect());
    }
    let mut dirs: Vec<Vec<f64>> = (0..k)
        .map(|_| {
            let mut v = gaussian_vec(rng, d);
            normalize(&mut v);
            v
        })
        .collect();
    // Gradient steps on sum_{i<j} (1 + <e_i, e_j>)^8, projected to the sphere.
    let power = 8.0;
    for _ in 0..2000 {
        let forces: Vec<Vec<f64>> = (0..k)
            .map(|i| {
                let mut f = vec![0.0; d];
                for j in 0..k {
                    if j != i {
                        let c = power * (1.0 + dot(&dirs[i], &dirs[j])).powf(power - 1.0);
                        f.iter_mut().zip(&dirs[j]).for_each(|(a, b)| *a += c * b);
                    }
                }
                f
            })
            .collect();
        let scale = forces.iter().map(|f| norm2(f)).fold(0.0, f64::max);
        if scale == 0.0 {
            break;
        }
        for (e, f) in dirs.iter_mut().zip(&forces) {
            e.iter_mut()
                .zip(f)
                .for_each(|(a, b)| *a -= 0.05 * b / scale);
            normalize(e);
        }
    }
    Ok(dirs)
}

impl Task {
    pub fn directions(&self) -> &[Vec<f64>] {
        &self.directions
    }

    /// Largest cap half-angle per class.
    pub fn cap_angles(&self) -> &[f64] {
        &self.cap_angles
    }

    /// Instance `index` of the stream identified by `seed`. Each index has
    /// its own ChaCha stream, so draws can be produced in any order.
    pub fn instance(&self, seed: u64, index: u64) -> Instance {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        rng.set_stream(index);
        let u: f64 = rng.random();
        let y = self
            .cumulative
            .iter()
            .position(|c| u < *c)
            .unwrap_or_else(|| {
                // u sits above the rounded total; take the last class with mass.
                self.prior
                    .probabilities()
                    .iter()
                    .rposition(|p| *p > 0.0)
                    .unwrap_or(0)
            });
        let e = &self.directions[y];
        let phi = if self.d >= 2 && self.cap_angles[y] > 0.0 {
            rng.random::<f64>() * self.cap_angles[y]
        } else {
            0.0
        };
        let mut x: Vec<f64> = e.iter().map(|v| v * phi.cos()).collect();
        if phi > 0.0 {
            let mut v = gaussian_vec(&mut rng, self.d);
            let c = dot(&v, e);
            v.iter_mut().zip(e).for_each(|(a, b)| *a -= c * b);
            if normalize(&mut v) > 0.0 {
                x.iter_mut().zip(&v).for_each(|(a, b)| *a += phi.sin() * b);
            }
        }
        x.iter_mut().for_each(|v| *v *= self.x_bound);
        let n = norm2(&x);
        if n > self.x_bound {
            let s = self.x_bound / n;
            x.iter_mut().for_each(|v| *v *= s);
            while norm2(&x) > self.x_bound {
                x.iter_mut().for_each(|v| *v *= 1.0 - f64::EPSILON);
            }
        }
        Instance::new(x, y)
    }

    /// Lazily generated i.i.d. stream.
    pub fn stream(&self, seed: u64) -> impl Iterator<Item = Instance> + '_ {
        (0u64..).map(move |i| self.instance(seed, i))
    }
}

/// Build a task whose anchor is feasible in `spec` and separates every
/// sample with margin at least `rho_star`.
pub fn make_task(params: &TaskParams, spec: &GeometrySpec, seed: u64) -> Result<Task> {
    let TaskParams {
        k,
        d,
        x_bound,
        rho_star,
        ref prior,
        anchor: layout,
    } = *params;
    if k < 2 || d < 1 {
        return Err(Error::invalid("task needs k >= 2 and d >= 1"));
    }
    if spec.k() != k || spec.d() != d {
        return Err(Error::invalid(format!(
            "geometry is {}x{} but task is {k}x{d}",
            spec.k(),
            spec.d()
        )));
    }
    if prior.k() != k {
        return Err(Error::invalid("prior length differs from k"));
    }
    if !(x_bound > 0.0 && rho_star > 0.0) {
        return Err(Error::invalid("x_bound and rho_star must be positive"));
    }
    let omega = spec.omega();
    let shared = match layout {
        AnchorLayout::Auto => spec.kind() == GeometryKind::BlockPower,
        AnchorLayout::PerBlock => false,
        AnchorLayout::SharedBudget => true,
    };
    let block = if shared { omega / k as f64 } else { omega };

    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let directions = class_directions(k, d, &mut rng)?;

    // Margin at the anchor for x = X(cos phi e_y + sin phi v) against rival j
    // is at least X a (cos phi (1 - mu) - sin phi sqrt(1 - mu^2)),
    // mu = <e_y, e_j>. At phi = 0 this is X a (1 - mu).
    let target = rho_star * (1.0 + MARGIN_SAFETY) / (x_bound * block);
    let mut cap_angles = Vec::with_capacity(k);
    for y in 0..k {
        let mut phi_max = std::f64::consts::FRAC_PI_2;
        for j in (0..k).filter(|&j| j != y) {
            let mu = dot(&directions[y], &directions[j]).clamp(-1.0, 1.0);
            let c = 1.0 - mu;
            if target > c {
                let ceiling = x_bound * block * c;
                return Err(Error::Construction(format!(
                    "rho_star = {rho_star} exceeds the largest margin {ceiling:.6} the anchor can \
                     reach between classes {} and {} (X = {x_bound}, anchor block norm = {block}); \
                     the margin can never exceed 2 * X * block norm",
                    y + 1,
                    j + 1
                )));
            }
            let s = (1.0 - mu * mu).max(0.0).sqrt();
            let r = (c * c + s * s).sqrt();
            let phi = (target / r).acos() - s.atan2(c);
            phi_max = phi_max.min(phi.max(0.0));
        }
        cap_angles.push(if d >= 2 { phi_max } else { 0.0 });
    }

    let anchor = WeightMatrix::from_rows(
        directions
            .iter()
            .map(|e| e.iter().map(|v| v * block).collect())
            .collect(),
    )?;
    if !spec.is_feasible(&anchor, 1e-12) {
        return Err(Error::Construction(format!(
            "anchor violates the {} constraint: {} > omega = {omega}",
            spec.kind(),
            spec.constraint_value(&anchor)
        )));
    }
    // Pull the anchor exactly inside W.
    let c = spec.constraint_value(&anchor);
    let anchor = if c > omega {
        anchor.scale(omega / c)
    } else {
        anchor
    };

    let mut acc = 0.0;
    let cumulative = prior
        .probabilities()
        .iter()
        .map(|p| {
            acc += p;
            acc
        })
        .collect();

    Ok(Task {
        k,
        d,
        x_bound,
        rho_star,
        prior: prior.clone(),
        anchor,
        seed,
        geometry: spec.kind(),
        directions,
        cap_angles,
        cumulative,
    })
}

/// Draw `n` instances.
pub fn sample(task: &Task, n: usize, seed: u64) -> Vec<Instance> {
    (0..n as u64).map(|i| task.instance(seed, i)).collect()
}

const MC_CHUNK: usize = 4096;

/// Chunked parallel sum of `f(index)` and `f(index)^2`, reduced in index
/// order so the result does not depend on scheduling.
fn mc_moments<F>(n: usize, f: F) -> Result<(f64, f64)>
where
    F: Fn(u64) -> Result<f64> + Sync,
{
    let chunks: Vec<(usize, usize)> = (0..n)
        .step_by(MC_CHUNK)
        .map(|s| (s, (s + MC_CHUNK).min(n)))
        .collect();
    let partial: Vec<Result<(f64, f64)>> = chunks
        .par_iter()
        .map(|&(lo, hi)| {
            let mut s = 0.0;
            let mut s2 = 0.0;
            for i in lo..hi {
                let v = f(i as u64)?;
                s += v;
                s2 += v * v;
            }
            Ok((s, s2))
        })
        .collect();
    let mut s = 0.0;
    let mut s2 = 0.0;
    for p in partial {
        let (a, b) = p?;
        s += a;
        s2 += b;
    }
    Ok((s, s2))
}

fn finish(n: usize, s: f64, s2: f64) -> RiskEstimate {
    let nf = n as f64;
    let mean = s / nf;
    let var = if n > 1 {
        ((s2 - nf * mean * mean) / (nf - 1.0)).max(0.0)
    } else {
        0.0
    };
    RiskEstimate {
        mean,
        std_error: (var / nf).sqrt(),
    }
}

fn loss_at(inst: &Instance, w: &WeightMatrix, cfg: &LossConfig) -> Result<f64> {
    let s = score(&inst.x, w, cfg)?;
    Ok(hinge_loss(margin_from_scores(&s, inst.y)?.value, cfg))
}

/// Monte Carlo estimate of `F(w) = E l(x, y, w)` over fresh draws.
pub fn estimate_risk(
    task: &Task,
    w: &WeightMatrix,
    cfg: &LossConfig,
    n_mc: usize,
    seed: u64,
) -> Result<RiskEstimate> {
    if n_mc == 0 {
        return Err(Error::invalid("n_mc must be at least 1"));
    }
    let (s, s2) = mc_moments(n_mc, |i| loss_at(&task.instance(seed, i), w, cfg))?;
    Ok(finish(n_mc, s, s2))
}

/// Paired estimate of `F(w) - F(reference)` on common draws.
pub fn estimate_excess(
    task: &Task,
    w: &WeightMatrix,
    reference: &WeightMatrix,
    cfg: &LossConfig,
    n_mc: usize,
    seed: u64,
) -> Result<RiskEstimate> {
    if n_mc == 0 {
        return Err(Error::invalid("n_mc must be at least 1"));
    }
    let (s, s2) = mc_moments(n_mc, |i| {
        let inst = task.instance(seed, i);
        Ok(loss_at(&inst, w, cfg)? - loss_at(&inst, reference, cfg)?)
    })?;
    Ok(finish(n_mc, s, s2))
}

/// How the comparator used for excess risk is known to be good.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ComparatorKind {
    /// A minimizer of `F` over `W`, by class-permutation symmetry.
    SymmetricOptimum,
    /// The anchor, whose risk is exactly zero.
    ZeroRiskAnchor,
    /// The anchor as a plain feasible point; `F(anchor)` may exceed `min F`.
    Anchor,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Comparator {
    pub kind: ComparatorKind,
    pub point: WeightMatrix,
}

fn all_equal(v: &[f64]) -> bool {
    let (lo, hi) = v
        .iter()
        .fold((f64::INFINITY, f64::NEG_INFINITY), |(a, b), x| {
            (a.min(*x), b.max(*x))
        });
    hi - lo <= 1e-12 * hi.abs().max(1.0)
}

/// Reference point for excess risk in geometry `spec`.
///
/// With a simplex frame (`d >= k`), a uniform prior, equal class scales and
/// a geometry invariant under permuting blocks, the distribution and `W` are
/// invariant under orthogonal maps that permute the class directions. Since
/// `F` is convex, averaging any minimizer over that group gives a minimizer
/// of the form `w_y = beta e_y`, and `F` does not increase in `beta` because
/// every sample has positive margin along the frame. So the frame scaled to
/// the boundary of `W` minimizes `F` for any `rho`.
pub fn comparator(task: &Task, spec: &GeometrySpec, cfg: &LossConfig) -> Result<Comparator> {
    if spec.k() != task.k || spec.d() != task.d {
        return Err(Error::invalid("geometry and task dimensions differ"));
    }
    let symmetric_geometry = match spec.kind() {
        GeometryKind::EuclideanProduct | GeometryKind::BlockPower => true,
        GeometryKind::WeightedEuclidean => spec.block_weights().is_some_and(all_equal),
    };
    let equal_scales = cfg.class_scale().is_none_or(all_equal);
    if task.d >= task.k
        && symmetric_geometry
        && equal_scales
        && all_equal(task.prior.probabilities())
    {
        let frame = WeightMatrix::from_rows(task.directions.clone())?;
        let mut point = frame.scale(spec.omega() / spec.constraint_value(&frame));
        while spec.constraint_value(&point) > spec.omega() {
            point = point.scale(1.0 - f64::EPSILON);
        }
        return Ok(Comparator {
            kind: ComparatorKind::SymmetricOptimum,
            point,
        });
    }
    let unscaled = cfg
        .class_scale()
        .is_none_or(|c| c.iter().all(|v| *v == 1.0));
    let kind = if unscaled && task.rho_star >= cfg.rho() {
        ComparatorKind::ZeroRiskAnchor
    } else {
        ComparatorKind::Anchor
    };
    let point = task.anchor.clone();
    if !spec.is_feasible(&point, 1e-12) {
        return Err(Error::Construction(format!(
            "task anchor is infeasible for the {} geometry",
            spec.kind()
        )));
    }
    Ok(Comparator { kind, point })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::loss::margin;

    fn params(k: usize, d: usize, rho_star: f64, prior: ClassPrior) -> TaskParams {
        TaskParams {
            k,
            d,
            x_bound: 1.0,
            rho_star,
            prior,
            anchor: AnchorLayout::Auto,
        }
    }

    #[test]
    fn power_law_examples() {
        let p = power_law_prior(2, 1.0).unwrap();
        assert!((p.probabilities()[0] - 2.0 / 3.0).abs() < 1e-15);
        assert!((p.probabilities()[1] - 1.0 / 3.0).abs() < 1e-15);
        let p = power_law_prior(3, 0.0).unwrap();
        assert!(p
            .probabilities()
            .iter()
            .all(|v| (v - 1.0 / 3.0).abs() < 1e-15));
        // Partial-sum oracle: 1 / sum_{j<=100} j^-3.
        let mut s = 0.0;
        for j in (1..=100).rev() {
            s += 1.0 / (j as f64).powi(3);
        }
        let p = power_law_prior(100, 3.0).unwrap();
        assert!((p.probabilities()[0] - 1.0 / s).abs() < 1e-12);
        assert!((p.probabilities()[0] - 0.8319).abs() < 1e-4);
    }

    #[test]
    fn two_class_anchor_is_opposite() {
        let spec = GeometrySpec::euclidean(1.0, 2, 2).unwrap();
        let t = make_task(
            &params(2, 2, 1.0, ClassPrior::uniform(2).unwrap()),
            &spec,
            3,
        )
        .unwrap();
        let a = &t.anchor;
        assert!((dot(a.block(0), a.block(1)) + 1.0).abs() < 1e-12);
        let cfg = LossConfig::new(1.0).unwrap();
        for inst in sample(&t, 100_000, 11) {
            assert!(norm2(&inst.x) <= 1.0);
            let m = margin(&inst.x, inst.y, a, &cfg).unwrap();
            assert!(m.value >= 1.0, "{}", m.value);
        }
    }

    #[test]
    fn margin_ceiling_is_enforced() {
        let spec = GeometrySpec::euclidean(1.0, 2, 2).unwrap();
        let p = params(2, 2, 2.0 + 1e-3, ClassPrior::uniform(2).unwrap());
        assert!(matches!(
            make_task(&p, &spec, 1),
            Err(Error::Construction(_))
        ));
    }

    #[test]
    fn point_mass_prior_gives_one_label() {
        let spec = GeometrySpec::euclidean(1.0, 4, 5).unwrap();
        let t = make_task(
            &params(4, 5, 0.5, ClassPrior::point_mass(4, 2).unwrap()),
            &spec,
            5,
        )
        .unwrap();
        assert!(sample(&t, 2000, 1).iter().all(|i| i.y == 2));
    }

    #[test]
    fn sampling_is_deterministic() {
        let spec = GeometrySpec::euclidean(1.0, 3, 4).unwrap();
        let t = make_task(
            &params(3, 4, 0.8, ClassPrior::uniform(3).unwrap()),
            &spec,
            9,
        )
        .unwrap();
        assert!(sample(&t, 0, 1).is_empty());
        assert_eq!(sample(&t, 50, 4), sample(&t, 50, 4));
        assert_ne!(sample(&t, 50, 4), sample(&t, 50, 5));
        let streamed: Vec<_> = t.stream(4).take(50).collect();
        assert_eq!(streamed, sample(&t, 50, 4));
    }

    #[test]
    fn label_frequency_binomial() {
        let spec = GeometrySpec::euclidean(1.0, 2, 3).unwrap();
        let t = make_task(
            &params(2, 3, 0.5, ClassPrior::uniform(2).unwrap()),
            &spec,
            2,
        )
        .unwrap();
        let n = 100_000;
        let ones = sample(&t, n, 8).iter().filter(|i| i.y == 0).count() as f64;
        let sd = (n as f64 * 0.25).sqrt();
        assert!((ones - 0.5 * n as f64).abs() <= 3.0 * sd);
    }

    #[test]
    fn fewer_dimensions_than_classes() {
        let spec = GeometrySpec::euclidean(1.0, 6, 3).unwrap();
        let t = make_task(
            &params(6, 3, 0.3, ClassPrior::uniform(6).unwrap()),
            &spec,
            4,
        )
        .unwrap();
        let cfg = LossConfig::new(0.3).unwrap();
        for inst in sample(&t, 20_000, 3) {
            assert!(norm2(&inst.x) <= 1.0);
            assert!(margin(&inst.x, inst.y, &t.anchor, &cfg).unwrap().value >= 0.3);
        }
        let d1 = GeometrySpec::euclidean(1.0, 2, 1).unwrap();
        let t = make_task(&params(2, 1, 1.5, ClassPrior::uniform(2).unwrap()), &d1, 4).unwrap();
        assert!((t.directions()[0][0] + t.directions()[1][0]).abs() < 1e-9);
    }

    #[test]
    fn estimate_risk_examples() {
        let spec = GeometrySpec::euclidean(1.0, 4, 6).unwrap();
        let t = make_task(
            &params(4, 6, 1.0, ClassPrior::uniform(4).unwrap()),
            &spec,
            1,
        )
        .unwrap();
        let cfg = LossConfig::new(1.0).unwrap();
        let r = estimate_risk(&t, &t.anchor, &cfg, 20_000, 2).unwrap();
        assert_eq!((r.mean, r.std_error), (0.0, 0.0));
        let r = estimate_risk(&t, &WeightMatrix::zeros(4, 6), &cfg, 5_000, 2).unwrap();
        assert_eq!(r.mean, 1.0);
        let w = spec.random_feasible(&mut ChaCha8Rng::seed_from_u64(3));
        let a = estimate_risk(&t, &w, &cfg, 10_000, 7).unwrap();
        let b = estimate_risk(&t, &w, &cfg, 10_000, 7).unwrap();
        assert_eq!(a.mean.to_bits(), b.mean.to_bits());
        assert!(estimate_risk(&t, &w, &cfg, 0, 7).is_err());
    }

    #[test]
    fn anchors_feasible_for_every_geometry() {
        let k = 5;
        let prior = ClassPrior::uniform(k).unwrap();
        let specs = [
            GeometrySpec::euclidean(2.0, k, 8).unwrap(),
            GeometrySpec::block_power(2.0, k, 8).unwrap(),
            GeometrySpec::weighted(2.0, vec![0.2, 0.4, 0.6, 0.8, 1.0], 8).unwrap(),
        ];
        for spec in specs {
            let t = make_task(&params(k, 8, 0.2, prior.clone()), &spec, 6).unwrap();
            assert!(spec.is_feasible(&t.anchor, 0.0), "{}", spec.kind());
        }
        let bp = GeometrySpec::block_power(1.0, k, 8).unwrap();
        let mut p = params(k, 8, 0.1, prior);
        p.anchor = AnchorLayout::PerBlock;
        assert!(matches!(make_task(&p, &bp, 1), Err(Error::Construction(_))));
        p.anchor = AnchorLayout::SharedBudget;
        let e = GeometrySpec::euclidean(1.0, k, 8).unwrap();
        let t = make_task(&p, &e, 1).unwrap();
        assert!(bp.is_feasible(&t.anchor, 1e-12));
    }

    #[test]
    fn comparator_kinds() {
        let k = 4;
        let uniform = ClassPrior::uniform(k).unwrap();
        let mut p = params(k, 6, 0.2, uniform.clone());
        p.anchor = AnchorLayout::SharedBudget;
        let e = GeometrySpec::euclidean(1.0, k, 6).unwrap();
        let bp = GeometrySpec::block_power(1.0, k, 6).unwrap();
        let t = make_task(&p, &e, 2).unwrap();
        let rho2 = LossConfig::new(2.0).unwrap();
        let c = comparator(&t, &e, &rho2).unwrap();
        assert_eq!(c.kind, ComparatorKind::SymmetricOptimum);
        assert!(c
            .point
            .block_norms()
            .iter()
            .all(|n| (n - 1.0).abs() < 1e-12));
        let c = comparator(&t, &bp, &rho2).unwrap();
        assert!((c.point.block_norms().iter().sum::<f64>() - 1.0).abs() < 1e-12);
        assert!(bp.is_feasible(&c.point, 0.0));

        let skewed = power_law_prior(k, 2.0).unwrap();
        let t = make_task(&params(k, 6, 0.2, skewed), &e, 2).unwrap();
        let small = LossConfig::new(0.1).unwrap();
        assert_eq!(
            comparator(&t, &e, &small).unwrap().kind,
            ComparatorKind::ZeroRiskAnchor
        );
        assert_eq!(
            comparator(&t, &e, &rho2).unwrap().kind,
            ComparatorKind::Anchor
        );
    }

    #[test]
    fn symmetric_comparator_beats_feasible_points() {
        let k = 3;
        let spec = GeometrySpec::euclidean(1.0, k, 3).unwrap();
        let t = make_task(
            &params(k, 3, 0.5, ClassPrior::uniform(k).unwrap()),
            &spec,
            9,
        )
        .unwrap();
        let cfg = LossConfig::new(2.0).unwrap();
        let c = comparator(&t, &spec, &cfg).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        for _ in 0..20 {
            let w = spec.random_feasible(&mut rng);
            let near = c.point.lerp(&w, 0.05);
            for probe in [w, near] {
                let ex = estimate_excess(&t, &probe, &c.point, &cfg, 20_000, 5).unwrap();
                assert!(
                    ex.mean > -3.0 * ex.std_error - 1e-12,
                    "{} +/- {}",
                    ex.mean,
                    ex.std_error
                );
            }
        }
    }
}
