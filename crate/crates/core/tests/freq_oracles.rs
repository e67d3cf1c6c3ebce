//! Randomized equivalence between the Nyquist criteria and eigenvalue oracles.

use std::f64::consts::{FRAC_PI_2, PI};

use cfsync::controllers::{DvocParams, Setpoints};
use cfsync::freq::{
    criterion_sync, criterion_voltage, dc_admittance_pair, physical_reference, sync_loop_ratio, sync_oracle,
    BranchDynamics, ContourOptions, DynamicNetwork,
};
use cfsync::network::{reduce, BranchSpec, NetworkModel, NodeKind};
use cfsync::slow::{build_slow_system, error_spectrum};
use cfsync::{c64, Error};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

const W0: f64 = 100.0 * PI;

fn random_network(rng: &mut ChaCha8Rng, n: usize, capacitive_share: f64) -> NetworkModel {
    let mut branches = Vec::new();
    for i in 1..n {
        let j = rng.random_range(0..i);
        branches.push((j, i));
    }
    for _ in 0..rng.random_range(0..n) {
        let (a, b) = (rng.random_range(0..n), rng.random_range(0..n));
        if a != b && !branches.contains(&(a.min(b), a.max(b))) {
            branches.push((a.min(b), a.max(b)));
        }
    }
    let specs = branches
        .into_iter()
        .map(|(a, b)| {
            let r = rng.random_range(0.005..0.1);
            let mut x = rng.random_range(0.03..0.3);
            if rng.random_bool(capacitive_share) {
                x = -x;
            }
            BranchSpec::new(a, b, r, x)
        })
        .collect();
    NetworkModel::new(vec![NodeKind::Converter; n], specs, vec![c64(0.0, 0.0); n]).unwrap()
}

fn random_setpoints(rng: &mut ChaCha8Rng, n: usize) -> Vec<Setpoints> {
    (0..n)
        .map(|_| {
            Setpoints::new(
                rng.random_range(-0.8..0.8),
                rng.random_range(-0.5..0.5),
                rng.random_range(0.95..1.05),
            )
            .unwrap()
        })
        .collect()
}

#[test]
fn sync_criterion_matches_state_space_on_random_rl_networks() {
    let mut rng = ChaCha8Rng::seed_from_u64(0x5eed_0001);
    let opts = ContourOptions::default();
    let (mut compared, mut passes) = (0, 0);
    while compared < 50 {
        let n = rng.random_range(2..=4);
        let model = random_network(&mut rng, n, 0.0);
        let net = DynamicNetwork::new(&model, W0, BranchDynamics::RL).unwrap();
        let p = DvocParams::from_per_unit(
            rng.random_range(0.001..0.05),
            rng.random_range(0.0..10.0),
            0.005,
            rng.random_range(0.0..FRAC_PI_2),
            W0,
        )
        .unwrap();
        let sp = random_setpoints(&mut rng, n);
        let u_f: Vec<f64> = sp.iter().map(|s| s.u_star() + rng.random_range(-0.05..0.05)).collect();
        let reference: Vec<_> = (0..n).map(|i| physical_reference(&p, &sp[i], u_f[i])).collect();
        let oracle = sync_oracle(&net, &p, &reference).unwrap();
        let margin = oracle
            .eigenvalues
            .iter()
            .map(|l| l.re.abs())
            .fold(f64::INFINITY, f64::min);
        if margin < 1e-6 * W0 {
            continue;
        }
        let k = rng.random_range(0..n);
        let c = criterion_sync(&sync_loop_ratio(&net, &p, &reference, k).unwrap(), &opts).unwrap();
        assert_eq!(
            c.z1, oracle.nonnegative as i64,
            "config {compared}: {:?}",
            oracle.eigenvalues
        );
        assert_eq!(c.pass, oracle.pass);
        passes += c.pass as usize;
        compared += 1;
    }
    assert!(
        passes > 0 && passes < compared,
        "both verdicts exercised ({passes}/{compared})"
    );
}

#[test]
fn voltage_criterion_matches_error_spectrum_on_random_configs() {
    let mut rng = ChaCha8Rng::seed_from_u64(0x5eed_0002);
    let opts = ContourOptions::default();
    let (mut compared, mut stable, mut skipped) = (0, 0, 0);
    while compared < 50 {
        let n = rng.random_range(2..=4);
        let model = random_network(&mut rng, n, 0.3);
        let Ok(red) = reduce(&model) else { continue };
        let p = DvocParams::from_per_unit(
            rng.random_range(0.01..0.1),
            rng.random_range(0.5..50.0),
            rng.random_range(0.001..0.05),
            rng.random_range(0.0..FRAC_PI_2),
            W0,
        )
        .unwrap();
        let sys = build_slow_system(&red, &vec![p; n], &random_setpoints(&mut rng, n)).unwrap();
        let es = error_spectrum(&sys).unwrap();
        if es.max_re.abs() < 1e-6 {
            continue;
        }
        let mut verdict = None;
        for k in 0..n {
            match criterion_voltage(&dc_admittance_pair(&sys, k).unwrap(), &opts) {
                Ok(v) => {
                    verdict = Some(v.pass);
                    break;
                }
                Err(Error::Precondition(_)) => continue,
                Err(e) => panic!("config {compared}: {e}"),
            }
        }
        let Some(pass) = verdict else {
            skipped += 1;
            continue;
        };
        assert_eq!(pass, es.stable, "config {compared}: max_re {}", es.max_re);
        stable += pass as usize;
        compared += 1;
    }
    assert!(
        stable > 0 && stable < compared,
        "both verdicts exercised ({stable}/{compared}, skipped {skipped})"
    );
}
