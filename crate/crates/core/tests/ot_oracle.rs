use mvx_core::measures::{
    ot_cost, w_truncated, wasserstein_1d, EmpiricalMeasure, GroundCost, OtOptions,
};
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

/// Heap's algorithm over all permutations of `0..n`.
fn permutations(n: usize) -> Vec<Vec<usize>> {
    let mut a: Vec<usize> = (0..n).collect();
    let mut c = vec![0; n];
    let mut out = vec![a.clone()];
    let mut i = 0;
    while i < n {
        if c[i] < i {
            if i % 2 == 0 {
                a.swap(0, i);
            } else {
                a.swap(c[i], i);
            }
            out.push(a.clone());
            c[i] += 1;
            i = 0;
        } else {
            c[i] = 0;
            i += 1;
        }
    }
    out
}

fn brute_force(
    mu: &EmpiricalMeasure,
    nu: &EmpiricalMeasure,
    cost: &GroundCost,
    perms: &[Vec<usize>],
) -> f64 {
    let n = mu.len();
    let best = perms
        .iter()
        .map(|p| {
            (0..n)
                .map(|k| {
                    cost.eval(
                        mu.atom(k),
                        mu.regime(k).unwrap_or(0),
                        nu.atom(p[k]),
                        nu.regime(p[k]).unwrap_or(0),
                    )
                })
                .sum::<f64>()
        })
        .fold(f64::INFINITY, f64::min);
    cost.finish(best / n as f64)
}

fn random_measure(rng: &mut ChaCha8Rng, n: usize, d: usize, m: usize) -> EmpiricalMeasure {
    let atoms: Vec<f64> = (0..n * d).map(|_| rng.random_range(-3.0..3.0)).collect();
    let regimes: Vec<usize> = (0..n).map(|_| rng.random_range(0..m)).collect();
    EmpiricalMeasure::new(d, atoms)
        .unwrap()
        .with_regimes(regimes)
        .unwrap()
}

#[test]
fn exact_solver_matches_factorial_brute_force() {
    let perms = permutations(8);
    assert_eq!(perms.len(), 40320);
    let costs = [
        GroundCost::Euclidean(2),
        GroundCost::lyapunov(|z| z.iter().map(|v| v.abs()).sum::<f64>()),
        GroundCost::product(|z| z.iter().map(|v| v * v).sum::<f64>()),
    ];
    let mut rng = ChaCha8Rng::seed_from_u64(2024);
    for instance in 0..50 {
        let d = 1 + instance % 3;
        let mu = random_measure(&mut rng, 8, d, 3);
        let nu = random_measure(&mut rng, 8, d, 3);
        for cost in &costs {
            let exact = ot_cost(&mu, &nu, cost, &OtOptions::default())
                .unwrap()
                .value;
            let brute = brute_force(&mu, &nu, cost, &perms);
            assert!(
                (exact - brute).abs() <= 1e-10,
                "{cost:?} instance {instance}: {exact} vs {brute}"
            );
        }
    }
}

#[test]
fn exact_solver_matches_quantile_coupling_in_1d() {
    let mut rng = ChaCha8Rng::seed_from_u64(99);
    for instance in 0..50 {
        let n = 5 + instance;
        let a: Vec<f64> = (0..n).map(|_| rng.random_range(-5.0..5.0)).collect();
        let b: Vec<f64> = (0..n).map(|_| rng.random::<f64>() * 4.0).collect();
        let (mu, nu) = (
            EmpiricalMeasure::from_points(&a).unwrap(),
            EmpiricalMeasure::from_points(&b).unwrap(),
        );
        for p in [1u8, 2] {
            let exact = ot_cost(&mu, &nu, &GroundCost::Euclidean(p), &OtOptions::default())
                .unwrap()
                .value;
            let quantile = wasserstein_1d(&mu, &nu, p).unwrap();
            assert!(
                (exact - quantile).abs() <= 1e-10,
                "p={p} n={n}: {exact} vs {quantile}"
            );
        }
    }
}

fn points(n: usize) -> impl Strategy<Value = Vec<f64>> {
    prop::collection::vec(-10.0f64..10.0, n)
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn permutation_invariance(a in points(7), b in points(7), shift in 0usize..7) {
        let mu = EmpiricalMeasure::from_points(&a).unwrap();
        let nu = EmpiricalMeasure::from_points(&b).unwrap();
        let mut rotated = a.clone();
        rotated.rotate_left(shift);
        let mu_r = EmpiricalMeasure::from_points(&rotated).unwrap();
        let cost = GroundCost::Euclidean(2);
        let x = ot_cost(&mu, &nu, &cost, &OtOptions::default()).unwrap().value;
        let y = ot_cost(&mu_r, &nu, &cost, &OtOptions::default()).unwrap().value;
        prop_assert!((x - y).abs() <= 1e-12 * (1.0 + x));
    }

    #[test]
    fn w2_triangle_inequality(a in points(6), b in points(6), c in points(6)) {
        let (a, b, c) = (
            EmpiricalMeasure::from_points(&a).unwrap(),
            EmpiricalMeasure::from_points(&b).unwrap(),
            EmpiricalMeasure::from_points(&c).unwrap(),
        );
        let w = |x: &EmpiricalMeasure, y: &EmpiricalMeasure| {
            ot_cost(x, y, &GroundCost::Euclidean(2), &OtOptions::default()).unwrap().value
        };
        prop_assert!(w(&a, &c) <= w(&a, &b) + w(&b, &c) + 1e-12);
    }

    #[test]
    fn truncated_distance_monotone_in_radius(a in points(6), b in points(6), r in 0.1f64..5.0, extra in 0.0f64..5.0) {
        let (mu, nu) = (EmpiricalMeasure::from_points(&a).unwrap(), EmpiricalMeasure::from_points(&b).unwrap());
        let small = w_truncated(&mu, &nu, r, &OtOptions::default()).unwrap();
        let large = w_truncated(&mu, &nu, r + extra, &OtOptions::default()).unwrap();
        let full = wasserstein_1d(&mu, &nu, 2).unwrap();
        prop_assert!(small <= large + 1e-12);
        prop_assert!(large <= full + 1e-12);
    }
}

#[test]
fn subsampled_distance_is_seeded() {
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let a: Vec<f64> = (0..800).map(|_| rng.random_range(-1.0..1.0)).collect();
    let b: Vec<f64> = (0..700).map(|_| rng.random_range(0.0..2.0)).collect();
    let (mu, nu) = (
        EmpiricalMeasure::from_points(&a).unwrap(),
        EmpiricalMeasure::from_points(&b).unwrap(),
    );
    let cost = GroundCost::Euclidean(1);
    let r1 = ot_cost(&mu, &nu, &cost, &OtOptions::subsampled(3)).unwrap();
    let r2 = ot_cost(&mu, &nu, &cost, &OtOptions::subsampled(3)).unwrap();
    assert!(r1.subsampled);
    assert_eq!(r1.value, r2.value);
    assert!(ot_cost(&mu, &nu, &cost, &OtOptions::default()).is_err());
    // the true W1 is 1; a 512-point subsample stays close
    assert!((r1.value - 1.0).abs() < 0.15, "{}", r1.value);
}
