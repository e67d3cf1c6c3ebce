//! Subcommand implementations. Each returns a JSON section plus a verdict.

use std::path::{Path, PathBuf};

use cfsync::fast::{build_fast_system, certify, spectrum};
use cfsync::freq::{
    criterion_sync, criterion_voltage, dc_admittance_pair, physical_reference, sync_loop_ratio, sync_oracle,
    BranchDynamics, DynamicNetwork, NyquistCurve,
};
use cfsync::network::algebraic_connectivity;
use cfsync::sim::{detect_sync, simulate, InitialState, ModelKind, Status, Trajectory};
use cfsync::slow::{build_slow_system, error_spectrum, solve_equilibrium, SlowSystem};
use cfsync::C64;
use serde_json::{json, Value};

use crate::output;
use crate::scenario::LoadedScenario;
use crate::CliError;

/// Horizon of the fast-linear run that `check` cross-validates against.
pub const CHECK_SYNC_HORIZON: f64 = 0.3;
/// Salt separating the `check` initial state from a file-level random draw.
const CHECK_SEED_SALT: u64 = 0x636b;

#[derive(Debug, Clone, Copy, PartialEq, Eq, clap::ValueEnum)]
pub enum DataFormat {
    Csv,
    Json,
}

#[derive(Debug, Clone)]
pub struct OutputOptions {
    pub dir: Option<PathBuf>,
    pub format: DataFormat,
    pub plot: bool,
}

pub struct Section {
    pub value: Value,
    pub pass: bool,
    pub files: Vec<String>,
}

impl Section {
    fn new(value: Value, pass: bool) -> Self {
        Self {
            value,
            pass,
            files: Vec::new(),
        }
    }
}

fn pair(z: C64) -> Value {
    json!([z.re, z.im])
}

fn pairs(zs: &[C64]) -> Value {
    Value::Array(zs.iter().map(|&z| pair(z)).collect())
}

fn file_path(out: &OutputOptions, sc: &LoadedScenario, suffix: &str) -> Option<PathBuf> {
    out.dir.as_ref().map(|d| d.join(format!("{}.{suffix}", sc.name)))
}

fn record_file(files: &mut Vec<String>, path: &Path) {
    files.push(path.display().to_string());
}

pub fn analyze_fast(sc: &LoadedScenario) -> Result<Section, CliError> {
    let red = sc.reduced()?;
    let n = red.len();
    let u_f: Vec<f64> = sc.setpoints.iter().map(|s| s.u_star()).collect();
    let sys = build_fast_system(&red, &vec![sc.params; n], &sc.setpoints, &u_f)?;
    let spec = spectrum(&sys.a)?;
    let v = certify(&red, &sys, &spec, &sc.certify_options());
    let conn = algebraic_connectivity(&red, sc.params.phi);
    let c1 = &v.condition1;
    let c2 = &v.condition2;
    let value = json!({
        "eigenvalues": pairs(&spec.eigenvalues),
        "lambda1": pair(spec.lambda1()),
        "phi1": pairs(spec.phi1.as_slice()),
        "spectral_gap": spec.gap,
        "eigen_residual": spec.residual,
        "growing": v.growing,
        "algebraic_connectivity": conn.lambda2,
        "condition1": {
            "pass": c1.pass,
            "min_entry_ratio": c1.min_entry_ratio,
            "entry_tol": c1.entry_tol,
            "re_lambda2": c1.re_lambda2,
            "gap": c1.gap,
            "simple": c1.simple,
            "reasons": c1.reasons,
        },
        "condition2": {
            "pass": c2.pass,
            "inequality": c2.inequality.as_ref().map(|q| json!({
                "pass": q.pass, "lhs": q.lhs, "rhs": q.rhs, "margin": q.margin,
                "lambda2": q.lambda2, "delta_bar": q.delta_bar, "gamma_bar": q.gamma_bar,
            })),
            "observed_delta": c2.observed_delta,
            "observed_gamma": c2.observed_gamma,
            "posterior_pass": c2.posterior_pass,
            "note": c2.note,
        },
    });
    Ok(Section::new(value, c1.pass))
}

fn slow_system(sc: &LoadedScenario) -> Result<SlowSystem, CliError> {
    let red = sc.reduced()?;
    Ok(build_slow_system(&red, &vec![sc.params; red.len()], &sc.setpoints)?)
}

fn regulation_disabled(sc: &LoadedScenario) -> bool {
    sc.params.alpha == 0.0
}

fn skipped(reason: &str) -> Section {
    Section::new(json!({"skipped": reason}), true)
}

pub fn analyze_slow(sc: &LoadedScenario) -> Result<Section, CliError> {
    if regulation_disabled(sc) {
        return Ok(skipped("voltage regulation disabled (alpha = 0)"));
    }
    let sys = slow_system(sc)?;
    let eq = solve_equilibrium(&sys)?;
    let es = error_spectrum(&sys)?;
    let value = json!({
        "equilibrium": {
            "u": eq.u_s.as_slice(),
            "delta": eq.delta_s.as_slice(),
            "residual": eq.residual,
            "sigma_min": eq.sigma_min,
        },
        "steady_state_frequency": eq.theta0_rate,
        "error_eigenvalues": pairs(&es.eigenvalues),
        "max_re": es.max_re,
        "stable": es.stable,
        "gp_min_eigenvalue": sys.gp_min_eigenvalue,
        "lyapunov_certificate": sys.has_lyapunov_certificate(),
        "warnings": sys.warnings,
    });
    Ok(Section::new(value, es.stable))
}

fn export_curve(
    curve: &NyquistCurve,
    tag: &str,
    title: &str,
    sc: &LoadedScenario,
    out: &OutputOptions,
    files: &mut Vec<String>,
) -> Result<(), CliError> {
    let ext = match out.format {
        DataFormat::Csv => "csv",
        DataFormat::Json => "json",
    };
    if let Some(p) = file_path(out, sc, &format!("{tag}.{ext}")) {
        let text = match out.format {
            DataFormat::Csv => curve.to_csv(),
            DataFormat::Json => output::curve_json(curve).to_string(),
        };
        output::write_text(&p, &text)?;
        record_file(files, &p);
    }
    if out.plot {
        if let Some(p) = file_path(out, sc, &format!("{tag}.svg")) {
            output::plot_nyquist(curve, title, &p)?;
            record_file(files, &p);
        }
    }
    Ok(())
}

fn nyquist_node(sc: &LoadedScenario) -> Result<usize, CliError> {
    let k = sc.file.analysis.nyquist.node;
    if k == 0 || k > sc.num_converters() {
        return Err(CliError::Input(format!(
            "analysis.nyquist.node = {k} is not a converter (1..={})",
            sc.num_converters()
        )));
    }
    Ok(k - 1)
}

/// Synchronization criterion seen from the configured node.
pub fn sync_criterion(
    sc: &LoadedScenario,
    dynamics: BranchDynamics,
    out: Option<&OutputOptions>,
) -> Result<Section, CliError> {
    let k = nyquist_node(sc)?;
    let p = sc.params;
    let net = DynamicNetwork::new(&sc.network, p.omega0, dynamics)?;
    let reference: Vec<C64> = sc
        .setpoints
        .iter()
        .map(|s| physical_reference(&p, s, s.u_star()))
        .collect();
    let l = sync_loop_ratio(&net, &p, &reference, k)?;
    let c = criterion_sync(&l, &sc.contour_options())?;
    let oracle = sync_oracle(&net, &p, &reference)?;
    let mut section = Section::new(
        json!({
            "dynamics": match dynamics { BranchDynamics::Static => "static", BranchDynamics::RL => "rl" },
            "node": k + 1,
            "p1": c.p1,
            "n1": c.n1,
            "z1": c.z1,
            "pass": c.pass,
            "samples": c.curve.len(),
            "state_space": {"nonnegative": oracle.nonnegative, "pass": oracle.pass},
        }),
        c.pass,
    );
    if let Some(out) = out {
        let tag = match dynamics {
            BranchDynamics::Static => "nyquist_sync",
            BranchDynamics::RL => "nyquist_sync_rl",
        };
        export_curve(
            &c.curve,
            tag,
            "sync loop ratio l_k(s), critical point -1",
            sc,
            out,
            &mut section.files,
        )?;
    }
    Ok(section)
}

pub fn voltage_criterion(sc: &LoadedScenario, out: Option<&OutputOptions>) -> Result<Section, CliError> {
    if regulation_disabled(sc) {
        return Ok(skipped("voltage regulation disabled (alpha = 0)"));
    }
    let k = nyquist_node(sc)?;
    let sys = slow_system(sc)?;
    let pair = dc_admittance_pair(&sys, k)?;
    let v = criterion_voltage(&pair, &sc.contour_options())?;
    let mut section = Section::new(
        json!({"node": k + 1, "n2": v.n2, "pass": v.pass, "samples": v.curve.len()}),
        v.pass,
    );
    if let Some(out) = out {
        export_curve(
            &v.curve,
            "nyquist_voltage",
            "det(I + L_k(s)), critical point 0",
            sc,
            out,
            &mut section.files,
        )?;
    }
    Ok(section)
}

pub fn nyquist(sc: &LoadedScenario, out: &OutputOptions) -> Result<Section, CliError> {
    let sync = sync_criterion(sc, sc.branch_dynamics(), Some(out))?;
    let voltage = voltage_criterion(sc, Some(out))?;
    let mut files = sync.files;
    files.extend(voltage.files);
    Ok(Section {
        value: json!({"sync": sync.value, "voltage": voltage.value}),
        pass: sync.pass && voltage.pass,
        files,
    })
}

fn status_value(status: &Status) -> Value {
    match status {
        Status::Completed => json!({"kind": "completed"}),
        Status::Diverged { t, max_abs_v } => json!({"kind": "diverged", "t": t, "max_abs_v": max_abs_v}),
        Status::ZeroVoltage { t, node } => json!({"kind": "zero_voltage", "t": t, "node": node + 1}),
    }
}

fn trajectory_summary(sc: &LoadedScenario, traj: &Trajectory) -> Result<(Value, bool), CliError> {
    let sync = detect_sync(traj, &sc.sync_options())?;
    let term = &traj.terminal;
    let nodes: Vec<Value> = (0..traj.num_nodes())
        .map(|k| {
            json!({
                "node": k + 1,
                "v": pair(term.v[k]),
                "v_abs": term.v[k].norm(),
                "varpi": pair(term.varpi[k]),
                "power": pair(term.power(k)),
            })
        })
        .collect();
    let completed = traj.status == Status::Completed;
    let value = json!({
        "model": traj.model.name(),
        "dt": traj.dt,
        "record_dt": traj.record_dt,
        "records": traj.records.len(),
        "t_end": term.t,
        "status": status_value(&traj.status),
        "sync": {
            "synced": sync.synced,
            "collapsed": sync.collapsed,
            "t_sync": sync.t_sync,
            "omega_sync": sync.omega_sync.map(pair),
        },
        "terminal": nodes,
    });
    Ok((value, completed && sync.synced))
}

pub fn simulate_scenario(sc: &LoadedScenario, out: &OutputOptions) -> Result<Section, CliError> {
    let traj = simulate(&sc.scenario()?)?;
    let (value, pass) = trajectory_summary(sc, &traj)?;
    let mut section = Section::new(value, pass);
    let ext = match out.format {
        DataFormat::Csv => "csv",
        DataFormat::Json => "json",
    };
    if let Some(p) = file_path(out, sc, &format!("trajectory.{ext}")) {
        let text = match out.format {
            DataFormat::Csv => output::trajectory_csv(&traj),
            DataFormat::Json => output::trajectory_json(&traj).to_string(),
        };
        output::write_text(&p, &text)?;
        record_file(&mut section.files, &p);
    }
    if out.plot {
        if let Some(p) = file_path(out, sc, "trajectory.svg") {
            output::plot_trajectory(&traj, &p)?;
            record_file(&mut section.files, &p);
        }
    }
    Ok(section)
}

/// Fast-linear run from a seeded random state with the filter at `u*`.
fn fast_sync_run(sc: &LoadedScenario) -> Result<Section, CliError> {
    let mut scenario = sc.scenario()?;
    scenario.model = ModelKind::FastLinear;
    scenario.events.clear();
    scenario.initial = InitialState {
        v: sc.random_voltages(CHECK_SEED_SALT),
        u_f: Some(sc.setpoints.iter().map(|s| s.u_star()).collect()),
    };
    scenario.integrator = sc.integrator(ModelKind::FastLinear);
    scenario.integrator.t_end = CHECK_SYNC_HORIZON;
    let traj = simulate(&scenario)?;
    let (value, pass) = trajectory_summary(sc, &traj)?;
    Ok(Section::new(value, pass))
}

/// Every applicable analysis plus the cross-validation of the three
/// synchronization verdicts.
pub fn check(sc: &LoadedScenario, out: &OutputOptions) -> Result<Section, CliError> {
    let simulation = simulate_scenario(sc, out)?;
    if sc.has_generators() {
        let value = json!({
            "simulation": simulation.value,
            "note": "network has generator nodes; converter-only analyses not applicable",
        });
        return Ok(Section {
            value,
            pass: simulation.pass,
            files: simulation.files,
        });
    }
    let fast = analyze_fast(sc)?;
    let slow = analyze_slow(sc)?;
    let nyq = nyquist(sc, out)?;
    let static_sync = match sc.branch_dynamics() {
        BranchDynamics::Static => None,
        BranchDynamics::RL => Some(sync_criterion(sc, BranchDynamics::Static, None)?),
    };
    let static_pass = static_sync
        .as_ref()
        .map_or_else(|| nyq.value["sync"]["pass"].as_bool().unwrap_or(false), |s| s.pass);
    let fast_run = fast_sync_run(sc)?;
    let consistent = fast.pass == static_pass && static_pass == fast_run.pass;
    let mut files = simulation.files;
    files.extend(nyq.files);
    let value = json!({
        "fast": fast.value,
        "slow": slow.value,
        "nyquist": nyq.value,
        "static_sync_criterion": static_sync.map(|s| s.value),
        "simulation": simulation.value,
        "fast_sync_run": fast_run.value,
        "consistency": {
            "condition1": fast.pass,
            "criterion_sync_static": static_pass,
            "fast_run_synced": fast_run.pass,
            "consistent": consistent,
        },
    });
    let pass = fast.pass && slow.pass && nyq.pass && simulation.pass && consistent;
    Ok(Section { value, pass, files })
}
