use super::*;
use crate::c64;
use crate::fast::{build_fast_system, remove_dominant_component, spectrum};
use crate::network::{build_admittance, canon3, reduce, sg_partition, BranchSpec, NetworkModel, NodeKind};
use crate::slow::{build_slow_system, solve_equilibrium};
use std::f64::consts::{FRAC_PI_2, FRAC_PI_4, PI};

const W0: f64 = 100.0 * PI;

fn params(n: usize, eta_pu: f64, alpha: f64) -> Vec<DvocParams> {
    vec![DvocParams::from_per_unit(eta_pu, alpha, 0.005, FRAC_PI_4, W0).unwrap(); n]
}

fn canon3_setpoints() -> Vec<Setpoints> {
    vec![
        Setpoints::new(0.6, 0.4, 1.0).unwrap(),
        Setpoints::new(0.3, -0.2, 1.0).unwrap(),
        Setpoints::new(-0.4, 0.1, 1.0).unwrap(),
    ]
}

fn scenario(model: ModelKind, v0: Vec<C64>, t_end: f64) -> Scenario {
    let y = reduce(&canon3()).unwrap();
    Scenario {
        network: SimNetwork::from_reduced(&y),
        params: params(3, 0.04, 5.0),
        setpoints: canon3_setpoints(),
        model,
        initial: InitialState::voltages(v0),
        events: vec![],
        integrator: IntegratorConfig::for_model(model, t_end),
        exogenous: None,
    }
}

fn two_node_scenario(model: ModelKind, t_end: f64) -> Scenario {
    let m = NetworkModel::new(
        vec![NodeKind::Converter; 2],
        vec![BranchSpec::new(0, 1, 0.0, 0.1)],
        vec![c64(0.0, 0.0); 2],
    )
    .unwrap();
    let y = reduce(&m).unwrap();
    Scenario {
        network: SimNetwork::from_reduced(&y),
        params: vec![DvocParams::new(0.04, 0.0, 0.005, FRAC_PI_2, W0).unwrap(); 2],
        setpoints: vec![Setpoints::new(0.0, 0.0, 1.0).unwrap(); 2],
        model,
        initial: InitialState::voltages(vec![c64(1.0, 0.0), c64(0.2, 0.7)]),
        events: vec![],
        integrator: IntegratorConfig::for_model(model, t_end),
        exogenous: None,
    }
}

#[test]
fn pure_rotation() {
    let mut sc = two_node_scenario(ModelKind::FastLinear, 0.1);
    sc.initial = InitialState::voltages(vec![c64(1.0, 0.0); 2]);
    let traj = simulate(&sc).unwrap();
    assert_eq!(traj.status, Status::Completed);
    for r in traj.records.iter().step_by(97) {
        let exact = C64::from_polar(1.0, W0 * r.t);
        for v in &r.v {
            assert!((v - exact).norm() < 1e-9, "t={} err={}", r.t, (v - exact).norm());
        }
    }
    assert!((traj.terminal.t - 0.1).abs() < 1e-12);
}

fn expm_solution(sc: &Scenario, t: f64) -> DVector<C64> {
    let y = ReducedNetwork::from_laplacian(sc.network.linear_flow_matrix()).unwrap();
    let u_f: Vec<f64> = sc.initial.v.iter().map(|v| v.norm().ln()).collect();
    let sys = build_fast_system(&y, &sc.params, &sc.setpoints, &u_f).unwrap();
    (sys.a * C64::new(t, 0.0)).exp() * DVector::from_column_slice(&sc.initial.v)
}

#[test]
fn two_node_matches_matrix_exponential() {
    let sc = two_node_scenario(ModelKind::FastLinear, 0.2);
    let traj = simulate(&sc).unwrap();
    let exact = expm_solution(&sc, 0.2);
    let got = DVector::from_column_slice(&traj.terminal.v);
    assert!((got - exact).norm() < 1e-7);
}

#[test]
fn rk4_is_fourth_order() {
    let mut sc = scenario(
        ModelKind::FastLinear,
        vec![c64(1.0, 0.1), c64(0.8, -0.3), c64(0.5, 0.5)],
        0.05,
    );
    sc.integrator.record_every = 1000;
    let exact = expm_solution(&sc, 0.05);
    let err = |dt: f64| {
        let mut s = sc.clone();
        s.integrator.dt = dt;
        (DVector::from_column_slice(&simulate(&s).unwrap().terminal.v) - &exact).norm()
    };
    let ratio = err(1e-4) / err(5e-5);
    assert!((15.0..17.5).contains(&ratio), "{ratio}");
}

#[test]
fn fast_model_is_complex_linear() {
    let v0 = vec![c64(1.0, 0.1), c64(0.8, -0.3), c64(0.5, 0.5)];
    let k = C64::from_polar(2.5, 1.1);
    let mut a = scenario(ModelKind::FastLinear, v0.clone(), 0.05);
    a.initial.u_f = Some(vec![0.0; 3]);
    let mut b = a.clone();
    b.initial.v = v0.iter().map(|v| k * v).collect();
    let (ta, tb) = (simulate(&a).unwrap(), simulate(&b).unwrap());
    for (x, y) in ta.terminal.v.iter().zip(&tb.terminal.v) {
        assert!((k * x - y).norm() < 1e-12 * y.norm().max(1.0));
    }
}

#[test]
fn voltage_and_angle_coordinates_agree() {
    let v0 = vec![c64(0.9, 0.1), c64(1.0, -0.2), c64(1.1, 0.0)];
    let a = simulate(&scenario(ModelKind::NonlinearFiltered, v0.clone(), 0.2)).unwrap();
    let b = simulate(&scenario(ModelKind::NonlinearLog, v0, 0.2)).unwrap();
    for (x, y) in a.terminal.v.iter().zip(&b.terminal.v) {
        assert!((x - y).norm() < 1e-8, "{}", (x - y).norm());
    }
    for (x, y) in a.terminal.varpi.iter().zip(&b.terminal.varpi) {
        assert!((x - y).norm() < 1e-6);
    }
}

fn augmented_pair(model: ModelKind, aug: ModelKind) -> (Scenario, Scenario) {
    let plain = scenario(model, vec![c64(1.0, 0.1), c64(0.8, -0.3), c64(0.5, 0.5)], 0.05);
    let mut augmented = plain.clone();
    augmented.model = aug;
    augmented.network = plain.network.with_zero_coupling(2);
    augmented.exogenous = Some(ExogenousInput {
        v_sg: vec![c64(1.0, 0.0), c64(0.9, 0.3)],
        omega: W0,
    });
    (plain, augmented)
}

#[test]
fn zero_coupling_matches_plain_model_bitwise() {
    for (m, a) in [
        (ModelKind::FastLinear, ModelKind::FastAug),
        (ModelKind::SlowLinear, ModelKind::SlowAug),
    ] {
        let (p, q) = augmented_pair(m, a);
        let (tp, tq) = (simulate(&p).unwrap(), simulate(&q).unwrap());
        assert_eq!(tp.records, tq.records);
    }
}

#[test]
fn generator_forcing_enters_currents() {
    let m = NetworkModel::new(
        vec![NodeKind::Converter, NodeKind::Converter, NodeKind::Generator],
        vec![BranchSpec::new(0, 1, 0.02, 0.1), BranchSpec::new(1, 2, 0.02, 0.1)],
        vec![c64(0.0, 0.0); 3],
    )
    .unwrap();
    let part = sg_partition(&build_admittance(&m), m.kinds()).unwrap();
    let sc = Scenario {
        network: SimNetwork::from_partition(&part),
        params: params(2, 0.04, 5.0),
        setpoints: vec![Setpoints::new(0.1, 0.0, 1.0).unwrap(); 2],
        model: ModelKind::FastAug,
        initial: InitialState::voltages(vec![c64(1.0, 0.0); 2]),
        events: vec![],
        integrator: IntegratorConfig::new(1e-5, 0.3).record_every(10),
        exogenous: Some(ExogenousInput {
            v_sg: vec![c64(1.0, 0.0)],
            omega: W0,
        }),
    };
    let traj = simulate(&sc).unwrap();
    // record 0: ς̄ = i_o/v with v = 1 equals the row sums of [Y, Y_G] times 1
    let r0 = &traj.records[0];
    for k in 0..2 {
        let expect: C64 = part.y.row(k).sum() + part.y_g[(k, 0)];
        assert!((r0.sigma_conj[k] - expect).norm() < 1e-12);
    }
    let sync = detect_sync(&traj, &SyncOptions::default()).unwrap();
    assert!(sync.synced);
    assert!((sync.omega_sync.unwrap().im - W0).abs() < 1e-3);
}

#[test]
fn canon3_fast_sync_at_dominant_eigenvalue() {
    let y = reduce(&canon3()).unwrap();
    let sys = build_fast_system(&y, &params(3, 0.04, 5.0), &canon3_setpoints(), &[0.0; 3]).unwrap();
    let spec = spectrum(&sys.a).unwrap();
    let mut sc = scenario(
        ModelKind::FastLinear,
        vec![c64(0.3, -0.4), c64(1.0, 0.2), c64(-0.5, 0.1)],
        0.2,
    );
    sc.initial.u_f = Some(vec![0.0; 3]);
    sc.integrator.record_every = 10;
    let traj = simulate(&sc).unwrap();
    let sync = detect_sync(&traj, &SyncOptions::default()).unwrap();
    assert!(sync.synced);
    assert!((sync.omega_sync.unwrap() - spec.lambda1()).norm() < 1e-6);
    let t_sync = sync.t_sync.unwrap();
    assert!(t_sync < 0.1);

    let inv = invariance_metrics(&traj, t_sync + 0.05).unwrap();
    assert!(inv.max_ratio_drift < 1e-5, "{}", inv.max_ratio_drift);
    let early = invariance_metrics(&traj, 0.0).unwrap();
    assert!(early.max_ratio_drift > 1e-2);
}

#[test]
fn orthogonal_start_collapses() {
    let y = reduce(&canon3()).unwrap();
    let sys = build_fast_system(&y, &params(3, 0.04, 5.0), &canon3_setpoints(), &[0.0; 3]).unwrap();
    let spec = spectrum(&sys.a).unwrap();
    let w = DVector::from_vec(vec![c64(0.3, -0.4), c64(1.0, 0.2), c64(-0.5, 0.1)]);
    let v0 = remove_dominant_component(&spec, &w);
    let mut sc = scenario(ModelKind::FastLinear, v0.iter().copied().collect(), 0.5);
    sc.initial.u_f = Some(vec![0.0; 3]);
    sc.integrator.record_every = 100;
    let traj = simulate(&sc).unwrap();
    let sync = detect_sync(&traj, &SyncOptions::default()).unwrap();
    assert!(!sync.synced && sync.collapsed);
    let norm = |v: &[C64]| v.iter().map(|z| z.norm_sqr()).sum::<f64>().sqrt();
    assert!(norm(&traj.terminal.v) < 1e-3 * v0.norm());
}

#[test]
fn flat_consistent_profile_syncs_immediately() {
    let mut sc = two_node_scenario(ModelKind::NonlinearFiltered, 0.05);
    sc.initial = InitialState::voltages(vec![c64(1.0, 0.0); 2]);
    sc.integrator.record_every = 10;
    let traj = simulate(&sc).unwrap();
    let sync = detect_sync(&traj, &SyncOptions::default()).unwrap();
    assert!(sync.synced);
    assert_eq!(sync.t_sync, Some(0.0));
    assert!((sync.omega_sync.unwrap() - c64(0.0, W0)).norm() < 1e-9);
    let inv = invariance_metrics(&traj, 0.0).unwrap();
    assert_eq!(inv.max_ratio_drift, 0.0);
}

#[test]
fn symmetric_nodes_keep_unit_ratio() {
    let mut sc = two_node_scenario(ModelKind::NonlinearFiltered, 0.05);
    sc.initial = InitialState::voltages(vec![c64(0.7, 0.2); 2]);
    let traj = simulate(&sc).unwrap();
    assert!(traj.records.iter().all(|r| r.v[0] == r.v[1]));
}

#[test]
fn slow_model_reaches_equilibrium() {
    let y = reduce(&canon3()).unwrap();
    let slow = build_slow_system(&y, &params(3, 0.04, 5.0), &canon3_setpoints()).unwrap();
    let eq = solve_equilibrium(&slow).unwrap();
    let mut sc = scenario(ModelKind::SlowLinear, vec![c64(1.0, 0.0); 3], 1.0);
    sc.integrator.record_every = 100;
    let traj = simulate(&sc).unwrap();
    let r = &traj.terminal;
    let (_, delta) = crate::slow::to_center_of_angle(&r.theta);
    for (k, d) in delta.iter().enumerate() {
        assert!((r.log_amplitude(k) - eq.u_s[k]).abs() < 1e-8);
        assert!((d - eq.delta_s[k]).abs() < 1e-8);
        assert!((r.varpi[k].im - eq.theta0_rate).abs() < 1e-8 * eq.theta0_rate);
    }
}

#[test]
fn events_snap_to_grid() {
    let mut sc = scenario(ModelKind::NonlinearFiltered, vec![c64(1.0, 0.0); 3], 0.01);
    sc.integrator.dt = 1e-3;
    sc.events = vec![Event {
        time: 0.00449,
        action: EventAction::SetSetpoint {
            node: 0,
            setpoints: Setpoints::new(-0.1, 0.9, 1.0).unwrap(),
        },
    }];
    let with = simulate(&sc).unwrap();
    let without = simulate(&Scenario {
        events: vec![],
        ..sc.clone()
    })
    .unwrap();
    // the event lands on step 4: records 0..=4 agree, record 5 differs
    for i in 0..4 {
        assert_eq!(with.records[i].v, without.records[i].v);
    }
    assert_eq!(with.records[4].v, without.records[4].v);
    assert_ne!(with.records[4].varpi, without.records[4].varpi);
    assert_ne!(with.records[5].v, without.records[5].v);
}

#[test]
fn divergence_guard_keeps_partial_trajectory() {
    let mut sc = scenario(ModelKind::FastLinear, vec![c64(1.0, 0.0); 3], 1.0);
    sc.setpoints = vec![Setpoints::new(5.0, 0.0, 1.0).unwrap(); 3];
    sc.integrator.divergence_threshold = 10.0;
    sc.integrator.record_every = 100;
    let traj = simulate(&sc).unwrap();
    match traj.status {
        Status::Diverged { t, max_abs_v } => {
            assert!(t < 1.0 && max_abs_v > 10.0);
            assert!(traj.records.last().unwrap().t <= t);
        }
        other => panic!("{other:?}"),
    }
}

#[test]
fn compare_models_zero_drive_and_grid_mismatch() {
    let y = reduce(&canon3()).unwrap();
    let mk = |model| Scenario {
        network: SimNetwork::from_reduced(&y),
        params: params(3, 0.04, 5.0),
        setpoints: vec![Setpoints::new(0.0, 0.0, 1.0).unwrap(); 3],
        model,
        initial: InitialState::voltages(vec![c64(1.0, 0.0); 3]),
        events: vec![],
        integrator: IntegratorConfig::new(1e-5, 0.1).record_every(100),
        exogenous: None,
    };
    let a = simulate(&mk(ModelKind::NonlinearFiltered)).unwrap();
    let b = simulate(&mk(ModelKind::SlowLinear)).unwrap();
    let c = compare_models(&a, &b).unwrap();
    assert!(c.max_u < 1e-10 && c.max_delta < 1e-10, "{c:?}");
    let mut shorter = mk(ModelKind::SlowLinear);
    shorter.integrator.t_end = 0.05;
    let d = simulate(&shorter).unwrap();
    assert!(compare_models(&a, &d).is_err());
}

#[test]
fn validation_errors() {
    let base = scenario(ModelKind::NonlinearFiltered, vec![c64(1.0, 0.0); 3], 0.1);
    let mut s = base.clone();
    s.integrator.dt = 0.0;
    assert!(simulate(&s).is_err());
    let mut s = base.clone();
    s.initial.v[1] = c64(0.0, 0.0);
    assert_eq!(simulate(&s).unwrap_err(), Error::ZeroVoltage { index: 1 });
    let mut s = base.clone();
    s.events = vec![
        Event {
            time: 0.05,
            action: EventAction::EnableVoltageRegulation { alpha: 1.0 },
        },
        Event {
            time: 0.01,
            action: EventAction::EnableVoltageRegulation { alpha: 1.0 },
        },
    ];
    assert!(simulate(&s).is_err());
    let mut s = base.clone();
    s.model = ModelKind::FastAug;
    assert!(simulate(&s).is_err());
    let mut s = base;
    s.exogenous = Some(ExogenousInput {
        v_sg: vec![],
        omega: W0,
    });
    assert!(simulate(&s).is_err());
}

#[test]
fn parallel_batch_matches_sequential() {
    let scs: Vec<Scenario> = (0..4)
        .map(|i| {
            let mut s = scenario(
                ModelKind::FastLinear,
                vec![c64(1.0, 0.1 * i as f64), c64(0.5, 0.0), c64(0.2, 0.3)],
                0.02,
            );
            s.integrator.record_every = 50;
            s
        })
        .collect();
    let a = simulate_many(Execution::Sequential, &scs);
    let b = simulate_many(Execution::Parallel, &scs);
    assert_eq!(a, b);
}

#[test]
fn model_names_roundtrip() {
    for k in ModelKind::ALL {
        assert_eq!(ModelKind::from_name(k.name()), Some(k));
    }
    assert_eq!(ModelKind::from_name("bogus"), None);
}
