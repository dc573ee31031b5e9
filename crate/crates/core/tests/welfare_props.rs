use approx::assert_relative_eq;
use proptest::prelude::*;

use pmean_fair::instance::{FractionalAllocation, Kind};
use pmean_fair::sample;
use pmean_fair::welfare::{p_mean, surrogate_gradient, surrogate_objective, PMean};

fn pm(v: &[f64], p: f64) -> f64 {
    p_mean(v, PMean::new(p).unwrap()).unwrap()
}

fn positive_vec() -> impl Strategy<Value = Vec<f64>> {
    prop::collection::vec(0.01f64..10.0, 1..8)
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(2000))]

    #[test]
    fn monotone_in_p(v in positive_vec(), p in -20.0f64..20.0, d in 0.0f64..5.0) {
        prop_assert!(pm(&v, p) <= pm(&v, p + d) * (1.0 + 1e-12));
    }

    #[test]
    fn bounded_by_min_and_max(v in positive_vec(), p in -50.0f64..50.0) {
        let lo = v.iter().cloned().fold(f64::INFINITY, f64::min);
        let hi = v.iter().cloned().fold(0.0, f64::max);
        let w = pm(&v, p);
        prop_assert!(w >= lo * (1.0 - 1e-12) && w <= hi * (1.0 + 1e-12));
    }

    #[test]
    fn homogeneous(v in positive_vec(), p in -20.0f64..20.0, c in 0.01f64..100.0) {
        let scaled: Vec<f64> = v.iter().map(|x| c * x).collect();
        let a = pm(&scaled, p);
        let b = c * pm(&v, p);
        prop_assert!((a - b).abs() <= 1e-10 * b);
    }

    #[test]
    fn symmetric(mut v in positive_vec(), p in -10.0f64..10.0) {
        let a = pm(&v, p);
        v.reverse();
        prop_assert!((a - pm(&v, p)).abs() <= 1e-12 * a);
    }
}

#[test]
fn closed_forms() {
    // harmonic, geometric, arithmetic and quadratic means of (1, 2, 4)
    let v = [1.0, 2.0, 4.0];
    assert_relative_eq!(pm(&v, -1.0), 3.0 / 1.75, max_relative = 1e-14);
    assert_relative_eq!(pm(&v, 0.0), 2.0, max_relative = 1e-14);
    assert_relative_eq!(pm(&v, 1.0), 7.0 / 3.0, max_relative = 1e-14);
    assert_relative_eq!(pm(&v, 2.0), 7.0f64.sqrt(), max_relative = 1e-14);
}

#[test]
fn gradient_matches_finite_differences() {
    let mut rng = sample::rng(3);
    for t in 0..200 {
        let kind = if t % 2 == 0 { Kind::Goods } else { Kind::Chores };
        let p = match kind {
            Kind::Goods => [0.0, -0.5, -1.0, -3.0][t / 2 % 4],
            Kind::Chores => [1.0, 1.5, 2.0, 4.0][t / 2 % 4],
        };
        let p = PMean::new(p).unwrap();
        let inst = sample::dense(&mut rng, kind, 2 + t % 3, 2 + t % 4).normalize();
        let (n, m) = (inst.n(), inst.m());
        let mut x = vec![0.0; n * m];
        for j in 0..m {
            let w: Vec<f64> = (0..n).map(|_| rand::Rng::random_range(&mut rng, 0.1..1.0)).collect();
            let s: f64 = w.iter().sum();
            for i in 0..n {
                x[i * m + j] = w[i] / s;
            }
        }
        let alloc = FractionalAllocation::from_flat(n, m, x.clone());
        let g = surrogate_gradient(&inst, &alloc, p).unwrap();
        // The surrogate is defined for any non-negative x, so perturb one entry at a time.
        let f = |x: &[f64]| {
            let (n, m) = (inst.n(), inst.m());
            let u: Vec<f64> = (0..n).map(|i| (0..m).map(|j| x[i * m + j] * inst.value(i, j)).sum()).collect();
            pmean_fair::welfare::Surrogate::new(kind, p).unwrap().eval(&u)
        };
        assert_relative_eq!(
            f(&x),
            surrogate_objective(&inst, &alloc, p).unwrap(),
            max_relative = 1e-14
        );
        for k in 0..n * m {
            let h = 1e-6;
            let (mut a, mut b) = (x.clone(), x.clone());
            a[k] += h;
            b[k] -= h;
            let fd = (f(&a) - f(&b)) / (2.0 * h);
            assert!(
                (fd - g[k]).abs() <= 1e-5 * g[k].abs().max(1e-8),
                "instance {t}, coordinate {k}: fd {fd} vs {}",
                g[k]
            );
        }
    }
}
