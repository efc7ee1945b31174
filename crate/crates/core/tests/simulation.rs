use mvx_core::builtin::{
    default_init, example1, example1_lyapunov, example2, example2_lyapunov, Switching,
};
use mvx_core::measures::{ot_cost, GroundCost, OtOptions};
use mvx_core::model::{CoefficientField, Functional, Functionals, ModelSpec, RateMatrix};
use mvx_core::particle::{
    euler_step_with_increments, picard_law_iteration, simulate, simulate_ensemble,
    synchronous_pair_simulate, InitLaw, ParticleEnsemble, ParticleState, RegimeCoupling, SimConfig,
};
use mvx_core::SwitchMode;

fn ou() -> ModelSpec {
    let coefficients = CoefficientField::new(
        1,
        1,
        |_, x, _, _, out| out[0] = -x[0],
        |_, _, _, _, out| out[0] = 1.0,
    )
    .unwrap();
    let functionals =
        Functionals::new(1, vec![Functional::mean(1), Functional::second_moment()]).unwrap();
    ModelSpec::new(
        "ou",
        coefficients,
        RateMatrix::frozen(1).unwrap(),
        functionals,
    )
    .unwrap()
}

fn with_threads<T: Send>(threads: usize, f: impl FnOnce() -> T + Send) -> T {
    rayon::ThreadPoolBuilder::new()
        .num_threads(threads)
        .build()
        .unwrap()
        .install(f)
}

#[test]
fn ou_variance_matches_euler_recursion() {
    let (dt, steps, n) = (1e-3, 1000usize, 20_000);
    let cfg = SimConfig::new(dt, dt * steps as f64, n, 4);
    let ts = simulate(&ou(), None, &InitLaw::point(&[0.0], 0), &cfg).unwrap();
    // Euler for dX = -X dt + dW from 0: v_{k+1} = (1-dt)^2 v_k + dt
    let mut v = 0.0;
    for _ in 0..steps {
        v = (1.0 - dt) * (1.0 - dt) * v + dt;
    }
    let last = ts.records.last().unwrap();
    let var = last.moments[1] - last.moments[0] * last.moments[0];
    let se = v * (2.0 / n as f64).sqrt();
    assert!((var - v).abs() < 4.0 * se, "{var} vs {v}");
    assert!((v - (1.0 - (-2.0f64).exp()) / 2.0).abs() < 1e-3);
}

#[test]
fn seeds_determine_csv_bytes_across_thread_counts() {
    let spec = example2(Switching::Default).unwrap();
    let lyap = example2_lyapunov();
    let init = default_init("example2").unwrap();
    let cfg = SimConfig::new(1e-3, 0.3, 3000, 17).with_record_every(0.05);
    let run = |threads| {
        with_threads(threads, || {
            simulate(&spec, Some(&lyap), &init, &cfg)
                .unwrap()
                .to_csv_string()
        })
    };
    let a = run(1);
    assert_eq!(a, run(1));
    assert_eq!(a, run(4));
    let other = SimConfig {
        seed: 18,
        ..cfg.clone()
    };
    assert_ne!(
        a,
        simulate(&spec, Some(&lyap), &init, &other)
            .unwrap()
            .to_csv_string()
    );
}

#[test]
fn distant_truncation_changes_nothing() {
    let spec = example1(0.5, Switching::Default).unwrap();
    let lyap = example1_lyapunov(0.5);
    let init = default_init("example1").unwrap();
    let cfg = SimConfig::new(1e-3, 0.5, 2000, 5).with_record_every(0.1);
    let plain = simulate_ensemble(&spec, Some(&lyap), &init, &cfg).unwrap();
    let truncated =
        simulate_ensemble(&spec, Some(&lyap), &init, &cfg.clone().with_truncation(1e6)).unwrap();
    assert_eq!(plain.0.to_csv_string(), truncated.0.to_csv_string());
    assert_eq!(plain.1.positions(), truncated.1.positions());
    assert_eq!(truncated.0.first_exit, None);
}

#[test]
fn first_order_and_thinning_agree_on_occupancy() {
    let spec = example1(0.5, Switching::Default).unwrap();
    let init = InitLaw::point(&[0.5], 0);
    let cfg = SimConfig::new(1e-3, 1.0, 20_000, 2);
    let thin = simulate(&spec, None, &init, &cfg).unwrap();
    let first = simulate(
        &spec,
        None,
        &init,
        &cfg.clone().with_mode(SwitchMode::FirstOrder),
    )
    .unwrap();
    // P(α_1 = 2 | α_0 = 1) = (1 - e^{-3}) / 3 for Q = [[-1,1],[2,-2]]
    let p = (1.0 - (-3.0f64).exp()) / 3.0;
    let se = (p * (1.0 - p) / 20_000.0).sqrt();
    for ts in [thin, first] {
        let occ = ts.records.last().unwrap().occupancy[1];
        assert!((occ - p).abs() < 4.0 * se, "{occ} vs {p}");
    }
}

#[test]
fn identical_laws_give_identical_pairs() {
    let spec = example2(Switching::Default).unwrap();
    let lyap = example2_lyapunov();
    let init = default_init("example2").unwrap();
    let cfg = SimConfig::new(1e-3, 0.2, 500, 3).with_record_every(0.1);
    let paired =
        synchronous_pair_simulate(&spec, Some(&lyap), &init, &init, &cfg, RegimeCoupling::Auto)
            .unwrap();
    for r in &paired.pairs {
        assert_eq!(r.vtilde, 0.0);
        assert_eq!(r.agreement, 1.0);
    }
    assert_eq!(paired.first.to_csv_string(), paired.second.to_csv_string());
}

#[test]
fn meet_and_merge_rejects_state_dependent_rates() {
    let spec = example2(Switching::Default).unwrap();
    let init = default_init("example2").unwrap();
    let cfg = SimConfig::new(1e-3, 0.01, 10, 3);
    assert!(synchronous_pair_simulate(
        &spec,
        None,
        &init,
        &init,
        &cfg,
        RegimeCoupling::MeetAndMerge
    )
    .is_err());
}

#[test]
fn picard_distances_shrink() {
    let spec = example1(0.5, Switching::Default).unwrap();
    let init = default_init("example1").unwrap();
    let cfg = SimConfig::new(1e-3, 0.5, 1000, 7).with_record_every(0.1);
    let result = picard_law_iteration(&spec, &init, &cfg, 4).unwrap();
    assert_eq!(result.distances.len(), 4);
    assert!(
        result.distances.windows(2).all(|w| w[1] < w[0]),
        "{:?}",
        result.distances
    );
    assert!(picard_law_iteration(&spec, &init, &cfg, 0).is_err());
}

#[test]
fn euler_step_by_hand() {
    // beta = 0, frozen: b_1(1) = -1 - 2 = -3, b_2(1) = -2
    let spec = example1(0.0, Switching::Frozen).unwrap();
    for (regime, expected) in [(0, 0.97), (1, 0.98)] {
        let mut ens = ParticleEnsemble::new(
            1,
            0,
            vec![ParticleState {
                x: vec![1.0],
                regime,
            }],
        )
        .unwrap();
        euler_step_with_increments(&mut ens, &spec, 0.01, SwitchMode::Thinning, &[0.0]).unwrap();
        assert!(
            (ens.positions()[0] - expected).abs() < 1e-15,
            "{}",
            ens.positions()[0]
        );
        assert_eq!(ens.regimes(), &[regime]);
    }
    // sigma_2(x) = x scales the increment
    let mut ens = ParticleEnsemble::new(
        1,
        0,
        vec![ParticleState {
            x: vec![1.0],
            regime: 1,
        }],
    )
    .unwrap();
    euler_step_with_increments(&mut ens, &spec, 0.01, SwitchMode::Thinning, &[2.0]).unwrap();
    assert!((ens.positions()[0] - 1.18).abs() < 1e-14);
}

#[test]
fn ou_reaches_stationary_variance() {
    let n = 10_000;
    let dt = 0.01;
    let cfg = SimConfig::new(dt, 20.0, n, 21);
    let ts = simulate(&ou(), None, &InitLaw::point(&[0.0], 0), &cfg).unwrap();
    let last = ts.records.last().unwrap();
    let var = last.moments[1] - last.moments[0] * last.moments[0];
    let se = 0.5 * (2.0 / n as f64).sqrt();
    // Euler's stationary variance 1/(2 - dt) sits within half an SE of 1/2
    assert!((var - 0.5).abs() < 3.0 * se, "{var}");
}

#[test]
fn picard_is_exact_without_interaction() {
    let spec = example1(0.0, Switching::Default).unwrap();
    let init = default_init("example1").unwrap();
    let cfg = SimConfig::new(1e-3, 0.3, 300, 9).with_record_every(0.1);
    let result = picard_law_iteration(&spec, &init, &cfg, 3).unwrap();
    assert_eq!(result.distances.len(), 3);
    assert!(
        result.distances[1..].iter().all(|&d| d == 0.0),
        "{:?}",
        result.distances
    );
    assert_eq!(
        picard_law_iteration(&spec, &init, &cfg, 1)
            .unwrap()
            .distances
            .len(),
        1
    );
}

#[test]
fn pair_cost_bounds_transport_distance() {
    let spec = example2(Switching::Symmetric).unwrap();
    let lyap = example2_lyapunov();
    let a = InitLaw::point(&[1.0], 0);
    let b = InitLaw::point(&[-1.0], 1);
    let cfg = SimConfig::new(1e-3, 0.5, 300, 4)
        .with_record_every(0.25)
        .with_snapshots();
    let paired =
        synchronous_pair_simulate(&spec, Some(&lyap), &a, &b, &cfg, RegimeCoupling::Auto).unwrap();
    let cost = GroundCost::product(|z| z[0].abs());
    for ((r1, r2), p) in paired
        .first
        .records
        .iter()
        .zip(&paired.second.records)
        .zip(&paired.pairs)
    {
        let (m1, m2) = (r1.snapshot.as_ref().unwrap(), r2.snapshot.as_ref().unwrap());
        let w = ot_cost(m1, m2, &cost, &OtOptions::default()).unwrap().value;
        assert!(
            w <= p.cost + 1e-12,
            "t={}: W_d {w} > pair cost {}",
            p.t,
            p.cost
        );
    }
}

#[test]
fn halving_dt_moves_the_moments_little() {
    let spec = example1(0.5, Switching::Default).unwrap();
    let lyap = example1_lyapunov(0.5);
    let init = default_init("example1").unwrap();
    let coarse = simulate(
        &spec,
        Some(&lyap),
        &init,
        &SimConfig::new(2e-3, 1.0, 5000, 6),
    )
    .unwrap();
    let fine = simulate(
        &spec,
        Some(&lyap),
        &init,
        &SimConfig::new(1e-3, 1.0, 5000, 6),
    )
    .unwrap();
    let (c, f) = (coarse.records.last().unwrap(), fine.records.last().unwrap());
    // both runs estimate the same E|X_1|^2; allow 4 SE of each plus O(dt)
    let se = (c.moment_se[1].powi(2) + f.moment_se[1].powi(2)).sqrt();
    assert!(
        (c.moments[1] - f.moments[1]).abs() < 4.0 * se + 2e-3 * f.moments[1],
        "{} vs {}",
        c.moments[1],
        f.moments[1]
    );
}
