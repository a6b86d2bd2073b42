use msmd::loss::{hinge_loss, instance_loss, margin, predict, subgradient};
use msmd::{Instance, LossConfig, WeightMatrix};
use proptest::prelude::*;

fn matrix(k: usize, d: usize) -> impl Strategy<Value = WeightMatrix> {
    prop::collection::vec(-2.0f64..2.0, k * d)
        .prop_map(move |v| WeightMatrix::from_flat(k, d, v).unwrap())
}

/// Vector with Euclidean norm at most `x_bound`.
fn feature(d: usize, x_bound: f64) -> impl Strategy<Value = Vec<f64>> {
    prop::collection::vec(-1.0f64..1.0, d).prop_map(move |v| {
        let n = v.iter().map(|a| a * a).sum::<f64>().sqrt();
        if n > 1.0 {
            v.iter().map(|a| a / n * x_bound).collect()
        } else {
            v.iter().map(|a| a * x_bound).collect()
        }
    })
}

#[derive(Debug, Clone)]
struct Case {
    inst: Instance,
    w: WeightMatrix,
    v: WeightMatrix,
    rho: f64,
    x_bound: f64,
}

fn case() -> impl Strategy<Value = Case> {
    (2usize..6, 1usize..5, 0.1f64..3.0, 0.1f64..3.0).prop_flat_map(|(k, d, rho, x_bound)| {
        (feature(d, x_bound), 0..k, matrix(k, d), matrix(k, d)).prop_map(move |(x, y, w, v)| Case {
            inst: Instance::new(x, y),
            w,
            v,
            rho,
            x_bound,
        })
    })
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(1000))]

    #[test]
    fn subgradient_inequality(c in case()) {
        let cfg = LossConfig::new(c.rho).unwrap();
        let g = subgradient(&c.inst, &c.w, &cfg).unwrap();
        let lw = instance_loss(&c.inst, &c.w, &cfg).unwrap();
        let lv = instance_loss(&c.inst, &c.v, &cfg).unwrap();
        prop_assert!(lv - lw - g.dot(&c.v.sub(&c.w)) >= -1e-9);
    }

    #[test]
    fn subgradient_norm_bound(c in case()) {
        let cfg = LossConfig::new(c.rho).unwrap();
        let g = subgradient(&c.inst, &c.w, &cfg).unwrap();
        let n = g.to_dense(c.w.k(), c.w.d()).frobenius_norm();
        prop_assert!(n <= 2f64.sqrt() * c.x_bound / c.rho * (1.0 + 1e-12));
    }

    #[test]
    fn loss_is_convex(c in case(), lambda in 0.0f64..1.0) {
        let cfg = LossConfig::new(c.rho).unwrap();
        let mix = c.w.lerp(&c.v, 1.0 - lambda);
        let l = |w: &WeightMatrix| instance_loss(&c.inst, w, &cfg).unwrap();
        prop_assert!(l(&mix) <= lambda * l(&c.w) + (1.0 - lambda) * l(&c.v) + 1e-9);
    }

    #[test]
    fn hinge_upper_bounds_zero_one(c in case()) {
        let cfg = LossConfig::new(c.rho).unwrap();
        let m = margin(&c.inst.x, c.inst.y, &c.w, &cfg).unwrap();
        let l = hinge_loss(m.value, &cfg);
        if m.value <= 0.0 {
            prop_assert!(l >= 1.0);
        }
        if predict(&c.inst.x, &c.w, &cfg).unwrap() != c.inst.y {
            prop_assert!(l >= 1.0);
        }
    }

    #[test]
    fn directional_derivative_matches(c in case(), dir_seed in any::<u64>()) {
        use rand::{Rng, SeedableRng};
        let cfg = LossConfig::new(c.rho).unwrap();
        let s = msmd::loss::score(&c.inst.x, &c.w, &cfg).unwrap();
        let l = instance_loss(&c.inst, &c.w, &cfg).unwrap();
        let mut rivals: Vec<f64> = (0..s.len()).filter(|&j| j != c.inst.y).map(|j| s[j]).collect();
        rivals.sort_by(|a, b| b.partial_cmp(a).unwrap());
        let unique = rivals.len() < 2 || rivals[0] - rivals[1] >= 1e-3;
        prop_assume!(l > 1e-3 && unique);
        let g = subgradient(&c.inst, &c.w, &cfg).unwrap();
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(dir_seed);
        let h = 1e-6;
        for _ in 0..100 {
            let dir = WeightMatrix::from_flat(
                c.w.k(),
                c.w.d(),
                (0..c.w.k() * c.w.d()).map(|_| rng.random_range(-1.0..1.0)).collect(),
            )
            .unwrap();
            let mut p = c.w.clone();
            p.axpy(h, &dir);
            let mut m = c.w.clone();
            m.axpy(-h, &dir);
            let fd = (instance_loss(&c.inst, &p, &cfg).unwrap() - instance_loss(&c.inst, &m, &cfg).unwrap()) / (2.0 * h);
            let an = g.dot(&dir);
            // The loss may leave its linear piece within h only if a gap is
            // tiny; both gaps are at least 1e-3 here and h * |dir| << 1e-3.
            prop_assert!((fd - an).abs() <= 1e-5 * an.abs().max(1.0), "fd {fd} analytic {an}");
        }
    }

    #[test]
    fn class_scaled_subgradient_inequality(c in case(), scale in prop::collection::vec(0.1f64..1.0, 6)) {
        let k = c.w.k();
        let mut s: Vec<f64> = scale[..k].to_vec();
        s[0] = 1.0;
        let cfg = LossConfig::with_class_scale(c.rho, s).unwrap();
        let g = subgradient(&c.inst, &c.w, &cfg).unwrap();
        let lw = instance_loss(&c.inst, &c.w, &cfg).unwrap();
        let lv = instance_loss(&c.inst, &c.v, &cfg).unwrap();
        prop_assert!(lv - lw - g.dot(&c.v.sub(&c.w)) >= -1e-9);
    }
}
