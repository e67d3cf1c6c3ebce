//! Post-processing of trajectories: synchronization, invariance, model error.

use super::Trajectory;
use crate::slow::to_center_of_angle;
use crate::{Error, Result, C64};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SyncOptions {
    /// Trailing window length in seconds.
    pub window: f64,
    /// Allowed deviation from the window mean, per unit of `ω₀`.
    pub tol: f64,
    /// A terminal `max|v|` below this fraction of the initial one counts as
    /// collapse, never as synchronization.
    pub amplitude_floor: f64,
}

impl Default for SyncOptions {
    fn default() -> Self {
        Self {
            window: 0.02,
            tol: 1e-4,
            amplitude_floor: 1e-6,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SyncResult {
    pub synced: bool,
    /// Earliest time after which every sample stays within tolerance.
    pub t_sync: Option<f64>,
    /// Mean complex frequency over the trailing window.
    pub omega_sync: Option<C64>,
    /// Largest deviation from the window mean, rad/s.
    pub max_deviation: f64,
    /// Voltages decayed below the amplitude floor.
    pub collapsed: bool,
}

pub fn detect_sync(traj: &Trajectory, opts: &SyncOptions) -> Result<SyncResult> {
    let recs = &traj.records;
    let end = recs.last().ok_or_else(|| Error::Config("empty trajectory".into()))?.t;
    let start = end - opts.window;
    if recs[0].t > start + 1e-12 || recs.len() < 2 {
        return Err(Error::Config(format!(
            "trajectory of {end} s is shorter than the {} s sync window",
            opts.window
        )));
    }
    let first = recs.partition_point(|r| r.t < start - 1e-12);
    let window = &recs[first..];
    let count = (window.len() * traj.num_nodes()) as f64;
    let mean: C64 = window.iter().flat_map(|r| r.varpi.iter()).sum::<C64>() / count;
    let deviation = |r: &super::Record| r.varpi.iter().map(|w| (w - mean).norm()).fold(0.0, f64::max);
    let max_deviation = window.iter().map(deviation).fold(0.0, f64::max);
    let bound = opts.tol * traj.omega0;

    let initial = recs[0].v.iter().map(|v| v.norm()).fold(0.0, f64::max);
    let terminal = traj.terminal.v.iter().map(|v| v.norm()).fold(0.0, f64::max);
    let collapsed = terminal < opts.amplitude_floor * initial;
    let finite = max_deviation.is_finite();
    let synced = finite && !collapsed && max_deviation < bound;

    let t_sync = synced.then(|| {
        let last_bad = recs.iter().rposition(|r| !(deviation(r) < bound));
        match last_bad {
            Some(i) if i + 1 < recs.len() => recs[i + 1].t,
            Some(_) => end,
            None => recs[0].t,
        }
    });
    Ok(SyncResult {
        synced,
        t_sync,
        omega_sync: synced.then_some(mean),
        max_deviation,
        collapsed,
    })
}

#[derive(Debug, Clone, PartialEq)]
pub struct InvarianceMetrics {
    /// `max_t |v_l/v_k(t) − v_l/v_k(t_from)|` per pair `k < l`.
    pub ratio_drift: Vec<((usize, usize), f64)>,
    /// `max_t |ς̄_k(t) − ς̄_k(t_from)|` per node.
    pub sigma_drift: Vec<f64>,
    pub max_ratio_drift: f64,
    pub max_sigma_drift: f64,
}

pub fn invariance_metrics(traj: &Trajectory, t_from: f64) -> Result<InvarianceMetrics> {
    let recs = &traj.records;
    let i0 = recs.partition_point(|r| r.t < t_from - 1e-12);
    if i0 >= recs.len() {
        return Err(Error::Config(format!("t_from = {t_from} lies beyond the trajectory")));
    }
    let n = traj.num_nodes();
    let base = &recs[i0];
    let mut ratio_drift = Vec::new();
    for k in 0..n {
        for l in k + 1..n {
            let r0 = base.v[l] / base.v[k];
            let d = recs[i0..]
                .iter()
                .map(|r| (r.v[l] / r.v[k] - r0).norm())
                .fold(0.0, f64::max);
            ratio_drift.push(((k, l), d));
        }
    }
    let sigma_drift: Vec<f64> = (0..n)
        .map(|k| {
            recs[i0..]
                .iter()
                .map(|r| (r.sigma_conj[k] - base.sigma_conj[k]).norm())
                .fold(0.0, f64::max)
        })
        .collect();
    Ok(InvarianceMetrics {
        max_ratio_drift: ratio_drift.iter().map(|p| p.1).fold(0.0, f64::max),
        max_sigma_drift: sigma_drift.iter().copied().fold(0.0, f64::max),
        ratio_drift,
        sigma_drift,
    })
}

#[derive(Debug, Clone, PartialEq)]
pub struct ModelComparison {
    pub rms_u: f64,
    pub rms_delta: f64,
    pub max_u: f64,
    pub max_delta: f64,
    /// RMS error over RMS of the reference signal.
    pub rel_rms_u: f64,
    pub rel_rms_delta: f64,
}

/// Errors of `candidate` against `reference` on `u = ln|v|` and `δ = θ − θ₀`.
pub fn compare_models(reference: &Trajectory, candidate: &Trajectory) -> Result<ModelComparison> {
    let (a, b) = (&reference.records, &candidate.records);
    if a.len() != b.len()
        || a.iter()
            .zip(b)
            .any(|(x, y)| (x.t - y.t).abs() > 1e-9 * x.t.abs().max(1.0))
    {
        return Err(Error::Config("trajectories are on different time grids".into()));
    }
    if reference.num_nodes() != candidate.num_nodes() {
        return Err(Error::Config("trajectories have different node counts".into()));
    }
    let n = reference.num_nodes();
    let (mut su, mut sd, mut ru, mut rd) = (0.0, 0.0, 0.0, 0.0);
    let (mut max_u, mut max_delta) = (0.0f64, 0.0f64);
    for (x, y) in a.iter().zip(b) {
        let (_, dx) = to_center_of_angle(&x.theta);
        let (_, dy) = to_center_of_angle(&y.theta);
        for k in 0..n {
            let (ux, uy) = (x.log_amplitude(k), y.log_amplitude(k));
            let eu = ux - uy;
            let ed = dx[k] - dy[k];
            su += eu * eu;
            sd += ed * ed;
            ru += ux * ux;
            rd += dx[k] * dx[k];
            max_u = max_u.max(eu.abs());
            max_delta = max_delta.max(ed.abs());
        }
    }
    let count = (a.len() * n) as f64;
    let rms = |s: f64| (s / count).sqrt();
    let rel = |e: f64, r: f64| {
        if r > 0.0 {
            (e / r).sqrt()
        } else if e == 0.0 {
            0.0
        } else {
            f64::INFINITY
        }
    };
    Ok(ModelComparison {
        rms_u: rms(su),
        rms_delta: rms(sd),
        max_u,
        max_delta,
        rel_rms_u: rel(su, ru),
        rel_rms_delta: rel(sd, rd),
    })
}
