use super::*;
use proptest::prelude::*;

fn cluster(name: &str, size: u64, arm: Arm, infected: u64, stream: u64) -> ClusterSpec {
    ClusterSpec {
        name: name.into(),
        size,
        arm,
        initial_infected: infected,
        initial_recovered: 0,
        stream,
    }
}

fn params(clusters: Vec<ClusterSpec>, rho: f64, mode: SimMode) -> SimParams {
    let arms: Vec<Arm> = clusters.iter().map(|c| c.arm).collect();
    SimParams {
        mixing: build_mixing_matrix(&arms, rho).unwrap(),
        clusters,
        kappa: 8.0,
        eta_trt: 0.02,
        eta_ctr: 0.04,
        gamma: 0.2,
        horizon: 60.0,
        mode,
        dt: 0.25,
        seed: 17,
        weighting: ArmWeighting::Cluster,
    }
}

fn four(mode: SimMode, rho: f64) -> SimParams {
    params(
        vec![
            cluster("a", 300, Arm::Control, 3, 0),
            cluster("b", 250, Arm::Treated, 2, 1),
            cluster("c", 400, Arm::Control, 4, 2),
            cluster("d", 350, Arm::Treated, 1, 3),
        ],
        rho,
        mode,
    )
}

#[test]
fn mixing_without_contamination_is_block_diagonal() {
    let arms = [Arm::Control, Arm::Treated, Arm::Control, Arm::Treated];
    let m = build_mixing_matrix(&arms, 0.0).unwrap();
    for (j, row) in m.iter().enumerate() {
        for (k, v) in row.iter().enumerate() {
            let want = if arms[j] == arms[k] { 0.5 } else { 0.0 };
            assert_eq!(*v, want);
        }
    }
}

#[test]
fn half_contamination_two_clusters_is_uniform() {
    let m = build_mixing_matrix(&[Arm::Control, Arm::Treated], 0.5).unwrap();
    assert_eq!(m, vec![vec![0.5, 0.5], vec![0.5, 0.5]]);
}

#[test]
fn contamination_needs_an_opposite_arm() {
    assert!(build_mixing_matrix(&[Arm::Control, Arm::Control], 0.1).is_err());
    assert!(build_mixing_matrix(&[Arm::Control, Arm::Control], 0.0).is_ok());
    assert!(build_mixing_matrix(&[Arm::Control, Arm::Treated], 1.5).is_err());
}

#[test]
fn true_exposure_is_treated_share() {
    let p = four(SimMode::DeterministicOde, 0.15);
    let e = p.true_exposures();
    assert!((e.exposure_of(&"a".into()).unwrap() - 0.15).abs() < 1e-15);
    assert!((e.exposure_of(&"b".into()).unwrap() - 0.85).abs() < 1e-15);
    let e0 = four(SimMode::DeterministicOde, 0.0).true_exposures();
    assert_eq!(e0.exposure_of(&"a".into()), Some(0.0));
    assert_eq!(e0.exposure_of(&"b".into()), Some(1.0));
    let half = four(SimMode::DeterministicOde, 0.5).true_exposures();
    assert!(half.rows().iter().all(|r| r.exposure == 0.5));
}

#[test]
fn bad_steps_are_config_errors() {
    let mut p = four(SimMode::StochasticDiscrete, 0.1);
    p.dt = 0.0;
    assert!(matches!(simulate(&p), Err(Error::Config(_))));
    p.dt = 0.25;
    p.horizon = -1.0;
    assert!(matches!(simulate(&p), Err(Error::Config(_))));
}

#[test]
fn no_index_cases_means_nothing_happens() {
    for mode in [SimMode::DeterministicOde, SimMode::StochasticDiscrete] {
        let mut p = four(mode, 0.2);
        for c in p.clusters.iter_mut() {
            c.initial_infected = 0;
        }
        let sim = simulate(&p).unwrap();
        assert!(sim.beta.iter().all(|b| *b == 0.0));
        assert!(sim.states.iter().all(|row| row == &sim.states[0]));
        if mode == SimMode::StochasticDiscrete {
            assert!(sim.observations().unwrap().iter().all(|o| !o.event));
        }
    }
}

/// Classical SIR integrated with its own RK4 loop.
fn lone_sir(n: f64, i0: f64, beta: f64, gamma: f64, dt: f64, steps: usize) -> Vec<(f64, f64, f64)> {
    let f = |s: f64, i: f64| (-beta * s * i / n, beta * s * i / n - gamma * i);
    let (mut s, mut i, mut r) = (n - i0, i0, 0.0);
    let mut out = vec![(s, i, r)];
    for _ in 0..steps {
        let (a1, b1) = f(s, i);
        let (a2, b2) = f(s + dt / 2.0 * a1, i + dt / 2.0 * b1);
        let (a3, b3) = f(s + dt / 2.0 * a2, i + dt / 2.0 * b2);
        let (a4, b4) = f(s + dt * a3, i + dt * b3);
        s += dt / 6.0 * (a1 + 2.0 * a2 + 2.0 * a3 + a4);
        i += dt / 6.0 * (b1 + 2.0 * b2 + 2.0 * b3 + b4);
        r = n - s - i;
        out.push((s, i, r));
    }
    out
}

#[test]
fn isolated_cluster_matches_classical_sir() {
    let mut p = params(vec![cluster("x", 1000, Arm::Control, 10, 0)], 0.0, SimMode::DeterministicOde);
    p.eta_ctr = 0.05;
    let sim = simulate(&p).unwrap();
    let steps = sim.times.len() - 1;
    let want = lone_sir(1000.0, 10.0, p.kappa * p.eta_ctr, p.gamma, p.dt, steps);
    for (row, (s, i, r)) in sim.states.iter().zip(want) {
        let x = row[0];
        assert!((x.s - s).abs() < 1e-8, "{} vs {s}", x.s);
        assert!((x.y - i).abs() < 1e-8);
        assert!((x.r - r).abs() < 1e-8);
    }
    // S + I - (γ/β) ln S is conserved by the exact flow
    let b = p.kappa * p.eta_ctr;
    let inv = |c: &Compartments| c.s + c.y - p.gamma / b * 1000.0 * c.s.ln();
    let first = inv(&sim.states[0][0]);
    for row in &sim.states {
        assert!((inv(&row[0]) - first).abs() < 1e-3 * first.abs());
    }
}

#[test]
fn separate_arms_evolve_as_if_alone() {
    let full = four(SimMode::StochasticDiscrete, 0.0);
    let whole = simulate(&full).unwrap();
    for arm in [Arm::Control, Arm::Treated] {
        let idx: Vec<usize> = (0..4).filter(|&i| full.clusters[i].arm == arm).collect();
        let part = params(idx.iter().map(|&i| full.clusters[i].clone()).collect(), 0.0, SimMode::StochasticDiscrete);
        let alone = simulate(&part).unwrap();
        for (a, w) in alone.states.iter().zip(&whole.states) {
            for (k, &i) in idx.iter().enumerate() {
                assert_eq!(a[k], w[i]);
            }
        }
        let inf_alone = alone.infection_times.unwrap();
        let inf_whole = whole.infection_times.as_ref().unwrap();
        for (k, &i) in idx.iter().enumerate() {
            assert_eq!(inf_alone[k], inf_whole[i]);
        }
    }
}

fn symmetric(rho: f64) -> SimParams {
    let mut p = params(
        (0..6)
            .map(|i| cluster(&format!("k{i}"), 200, if i % 2 == 0 { Arm::Control } else { Arm::Treated }, 2, i as u64))
            .collect(),
        rho,
        SimMode::DeterministicOde,
    );
    p.eta_trt = p.eta_ctr;
    p
}

#[test]
fn equal_transmission_has_no_effect() {
    let sim = simulate(&symmetric(0.0)).unwrap();
    assert!(sim.beta.iter().all(|b| *b == 0.0));
    assert_eq!(sim.true_estimand(60.0).unwrap(), 0.0);
    let sim = simulate(&symmetric(0.2)).unwrap();
    assert!(sim.beta.iter().all(|b| b.abs() < 1e-15));
}

#[test]
fn one_step_truth_by_hand() {
    let mut p = params(
        vec![cluster("c", 100, Arm::Control, 40, 0), cluster("t", 80, Arm::Treated, 20, 1)],
        0.3,
        SimMode::DeterministicOde,
    );
    // nobody left to infect and nobody recovers: Y stays put
    p.clusters[0].initial_recovered = 60;
    p.clusters[1].initial_recovered = 60;
    p.gamma = 0.0;
    p.dt = 0.5;
    p.horizon = 0.5;
    let sim = simulate(&p).unwrap();
    let want = p.kappa * (p.eta_trt * 20.0 / 80.0 - p.eta_ctr * 40.0 / 100.0) * 0.5;
    assert!((sim.true_estimand(0.5).unwrap() - want).abs() < 1e-15);
    assert!(matches!(sim.true_estimand(0.6), Err(Error::HorizonOutOfRange { .. })));
}

#[test]
fn truncated_horizon_interpolates() {
    let sim = simulate(&four(SimMode::DeterministicOde, 0.1)).unwrap();
    let at_grid = sim.true_estimand(10.0).unwrap();
    assert_eq!(sim.cumulative_beta()[40], at_grid);
    let between = sim.true_estimand(10.1).unwrap();
    let next = sim.true_estimand(10.25).unwrap();
    assert!((between - at_grid).abs() <= (next - at_grid).abs());
}

#[test]
fn population_weighting_changes_the_truth() {
    let mut p = four(SimMode::DeterministicOde, 0.1);
    let unweighted = simulate(&p).unwrap().true_estimand(30.0).unwrap();
    p.weighting = ArmWeighting::Population;
    let weighted = simulate(&p).unwrap().true_estimand(30.0).unwrap();
    assert_ne!(unweighted, weighted);
    assert!(unweighted < 0.0 && weighted < 0.0);
}

#[test]
fn same_seed_same_epidemic() {
    let p = four(SimMode::StochasticDiscrete, 0.15);
    assert_eq!(simulate(&p).unwrap(), simulate(&p).unwrap());
    let mut q = p.clone();
    q.seed += 1;
    assert_ne!(simulate(&p).unwrap().infection_times, simulate(&q).unwrap().infection_times);
}

#[test]
fn relabelling_clusters_permutes_the_output() {
    let p = four(SimMode::DeterministicOde, 0.15);
    let perm = [2usize, 0, 3, 1];
    let mut q = p.clone();
    q.clusters = perm.iter().map(|&i| p.clusters[i].clone()).collect();
    q.mixing = perm.iter().map(|&i| perm.iter().map(|&k| p.mixing[i][k]).collect()).collect();
    let a = simulate(&p).unwrap();
    let b = simulate(&q).unwrap();
    for (ra, rb) in a.states.iter().zip(&b.states) {
        for (new, &old) in perm.iter().enumerate() {
            assert!((ra[old].y - rb[new].y).abs() < 1e-9);
            assert!((ra[old].s - rb[new].s).abs() < 1e-9);
        }
    }
    for (x, y) in a.beta.iter().zip(&b.beta) {
        assert!((x - y).abs() < 1e-12);
    }
}

#[test]
fn observations_cover_the_susceptible_cohort() {
    let p = four(SimMode::StochasticDiscrete, 0.15);
    let sim = simulate(&p).unwrap();
    let obs = sim.observations().unwrap();
    let cohort: u64 = p.clusters.iter().map(|c| c.size - c.initial_infected).sum();
    assert_eq!(obs.len() as u64, cohort);
    let last = sim.states.last().unwrap();
    let infected: f64 = p.clusters.iter().zip(last).map(|(c, x)| (c.size - c.initial_infected) as f64 - x.s).sum();
    assert_eq!(obs.iter().filter(|o| o.event).count() as f64, infected);
    assert!(obs.iter().all(|o| o.time > 0.0 && o.time <= p.horizon));
    assert!(simulate(&four(SimMode::DeterministicOde, 0.1)).unwrap().observations().is_err());
}

#[test]
fn scenario_round_trips_through_toml() {
    let s = Scenario::default();
    let text = toml::to_string(&s).unwrap();
    assert_eq!(Scenario::from_toml_str(&text).unwrap(), s);
    let partial = Scenario::from_toml_str("rho = 0.3\nreplicates = 10\n").unwrap();
    assert_eq!(partial.rho, 0.3);
    assert_eq!(partial.n_clusters, 20);
    let p = s.params(5).unwrap();
    assert_eq!(p.clusters.len(), 20);
    assert_eq!(p.clusters[0].name.as_str(), "c01");
    let explicit = toml::to_string(&p).unwrap();
    assert_eq!(SimParams::from_toml_str(&explicit).unwrap(), p);
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(32))]
    #[test]
    fn compartments_are_conserved(
        sizes in proptest::collection::vec((1u64..300, 0u64..10), 2..6),
        rho in 0.0f64..1.0,
        kappa in 0.0f64..20.0,
        eta in (0.0f64..0.1, 0.0f64..0.1),
        gamma in 0.0f64..1.0,
        stochastic in any::<bool>(),
        seed in any::<u64>(),
    ) {
        let clusters: Vec<_> = sizes
            .iter()
            .enumerate()
            .map(|(i, &(n, i0))| cluster(&format!("k{i}"), n, if i % 2 == 0 { Arm::Control } else { Arm::Treated }, i0.min(n), i as u64))
            .collect();
        let mode = if stochastic { SimMode::StochasticDiscrete } else { SimMode::DeterministicOde };
        let mut p = params(clusters, rho, mode);
        p.kappa = kappa;
        p.eta_ctr = eta.0;
        p.eta_trt = eta.1;
        p.gamma = gamma;
        p.seed = seed;
        p.horizon = 30.0;
        let sim = simulate(&p).unwrap();
        for (i, row) in sim.states.iter().enumerate() {
            for (c, x) in p.clusters.iter().zip(row) {
                let n = c.size as f64;
                if stochastic {
                    prop_assert_eq!(x.total(), n);
                } else {
                    prop_assert!((x.total() - n).abs() < 1e-9 * n);
                }
                prop_assert!(x.s >= -1e-9 && x.y >= -1e-9 && x.r >= -1e-9);
            }
            if i > 0 {
                for (x, prev) in row.iter().zip(&sim.states[i - 1]) {
                    prop_assert!(x.s <= prev.s + 1e-9);
                    prop_assert!(x.r >= prev.r - 1e-9);
                }
            }
        }
    }
}
