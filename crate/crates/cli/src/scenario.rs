//! Scenario files: TOML schema, validation and conversion to library types.
//!
//! Node numbers in files, reports and CSV output are 1-based.

use std::f64::consts::PI;
use std::path::Path;

use cfsync::controllers::{DvocParams, Setpoints};
use cfsync::fast::CertifyOptions;
use cfsync::freq::{BranchDynamics, ContourOptions};
use cfsync::network::{build_admittance, reduce, sg_partition, BranchSpec, NetworkModel, NodeKind, ReducedNetwork};
use cfsync::sim::{
    Event, EventAction, ExogenousInput, InitialState, IntegratorConfig, ModelKind, Scenario, SimNetwork, SyncOptions,
};
use cfsync::C64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::Deserialize;
use sha2::{Digest, Sha256};
use toml::Spanned;

use crate::CliError;

pub const SCHEMA_VERSION: u32 = 1;

/// Complex number written as `[re, im]`.
pub type Pair = [f64; 2];

fn cx(p: &Pair) -> C64 {
    C64::new(p[0], p[1])
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScenarioFile {
    pub version: u32,
    #[serde(default)]
    pub name: Option<String>,
    pub network: NetworkSection,
    pub converters: ConverterSection,
    pub model: ModelSection,
    #[serde(default)]
    pub events: Vec<Spanned<EventEntry>>,
    #[serde(default)]
    pub analysis: AnalysisSection,
    #[serde(default)]
    pub sg: Option<SgSection>,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct NetworkSection {
    pub nodes: Vec<NodeKindName>,
    pub branches: Vec<Spanned<BranchEntry>>,
    /// Per-node shunt admittance; all zero when omitted.
    #[serde(default)]
    pub shunts: Option<Vec<Pair>>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum NodeKindName {
    Converter,
    Load,
    Generator,
}

impl From<NodeKindName> for NodeKind {
    fn from(k: NodeKindName) -> Self {
        match k {
            NodeKindName::Converter => NodeKind::Converter,
            NodeKindName::Load => NodeKind::Load,
            NodeKindName::Generator => NodeKind::Generator,
        }
    }
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BranchEntry {
    pub from: usize,
    pub to: usize,
    pub r: f64,
    pub x: f64,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ConverterSection {
    /// Per-unit droop gain.
    pub eta: f64,
    pub alpha: f64,
    pub tau: f64,
    pub phi: f64,
    #[serde(default = "default_omega0")]
    pub omega0: f64,
    pub p_star: Vec<f64>,
    pub q_star: Vec<f64>,
    pub v_star: Vec<f64>,
}

fn default_omega0() -> f64 {
    100.0 * PI
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ModelSection {
    pub kind: ModelName,
    #[serde(default)]
    pub dt: Option<f64>,
    pub t_end: f64,
    #[serde(default)]
    pub record_every: Option<usize>,
    #[serde(default)]
    pub divergence_threshold: Option<f64>,
    #[serde(default)]
    pub initial_state: InitialSection,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ModelName {
    NonlinearFiltered,
    NonlinearLog,
    FastLinear,
    SlowLinear,
    FastAug,
    SlowAug,
}

impl From<ModelName> for ModelKind {
    fn from(m: ModelName) -> Self {
        match m {
            ModelName::NonlinearFiltered => ModelKind::NonlinearFiltered,
            ModelName::NonlinearLog => ModelKind::NonlinearLog,
            ModelName::FastLinear => ModelKind::FastLinear,
            ModelName::SlowLinear => ModelKind::SlowLinear,
            ModelName::FastAug => ModelKind::FastAug,
            ModelName::SlowAug => ModelKind::SlowAug,
        }
    }
}

/// Either explicit voltages or a seeded random draw; flat `1 + 0j` otherwise.
#[derive(Debug, Clone, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct InitialSection {
    #[serde(default)]
    pub v: Option<Vec<Pair>>,
    #[serde(default)]
    pub random: bool,
    #[serde(default)]
    pub u_f: Option<Vec<f64>>,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(tag = "action", rename_all = "snake_case", deny_unknown_fields)]
pub enum EventEntry {
    SetSetpoint {
        time: f64,
        node: usize,
        p_star: f64,
        q_star: f64,
        v_star: f64,
    },
    EnableVoltageRegulation {
        time: f64,
        alpha: f64,
    },
    StepExogenous {
        time: f64,
        v_sg: Vec<Pair>,
    },
}

#[derive(Debug, Clone, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AnalysisSection {
    #[serde(default)]
    pub entry_tol: Option<f64>,
    #[serde(default)]
    pub delta_bar: Option<f64>,
    #[serde(default)]
    pub gamma_bar: Option<f64>,
    #[serde(default)]
    pub sync_window: Option<f64>,
    #[serde(default)]
    pub sync_tol: Option<f64>,
    #[serde(default)]
    pub nyquist: NyquistSection,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct NyquistSection {
    #[serde(default = "default_dynamics")]
    pub dynamics: DynamicsName,
    #[serde(default = "default_node")]
    pub node: usize,
    #[serde(default)]
    pub omega_max: Option<f64>,
    #[serde(default)]
    pub indent_radius: Option<f64>,
    #[serde(default)]
    pub max_arg_step: Option<f64>,
}

impl Default for NyquistSection {
    fn default() -> Self {
        Self {
            dynamics: default_dynamics(),
            node: default_node(),
            omega_max: None,
            indent_radius: None,
            max_arg_step: None,
        }
    }
}

fn default_dynamics() -> DynamicsName {
    DynamicsName::Static
}

fn default_node() -> usize {
    1
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DynamicsName {
    Static,
    Rl,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SgSection {
    /// Generator voltages in the rotating frame, one per generator node.
    pub v_sg: Vec<Pair>,
    /// Frame frequency; defaults to `omega0`.
    #[serde(default)]
    pub omega: Option<f64>,
}

/// Command-line overrides applied on top of the file.
#[derive(Debug, Clone, Copy, Default)]
pub struct Overrides {
    pub dt: Option<f64>,
    pub t_end: Option<f64>,
    pub seed: u64,
}

/// A parsed, validated scenario together with its source hash.
#[derive(Debug, Clone)]
pub struct LoadedScenario {
    pub file: ScenarioFile,
    pub name: String,
    pub sha256: String,
    pub network: NetworkModel,
    pub params: DvocParams,
    pub setpoints: Vec<Setpoints>,
    pub overrides: Overrides,
}

fn line_of(src: &str, offset: usize) -> usize {
    src[..offset.min(src.len())].bytes().filter(|&b| b == b'\n').count() + 1
}

pub fn load(path: &Path, overrides: Overrides) -> Result<LoadedScenario, CliError> {
    let src = std::fs::read_to_string(path).map_err(|e| CliError::Io(format!("{}: {e}", path.display())))?;
    let name = path
        .file_stem()
        .map_or_else(|| "scenario".into(), |s| s.to_string_lossy().into_owned());
    parse(&src, &name, overrides).map_err(|e| match e {
        CliError::Input(msg) => CliError::Input(format!("{}: {msg}", path.display())),
        other => other,
    })
}

pub fn parse(src: &str, default_name: &str, overrides: Overrides) -> Result<LoadedScenario, CliError> {
    let file: ScenarioFile = toml::from_str(src).map_err(|e| {
        let line = e
            .span()
            .map(|s| format!("line {}: ", line_of(src, s.start)))
            .unwrap_or_default();
        CliError::Input(format!("{line}{}", e.message()))
    })?;
    let bad = |offset: usize, msg: String| CliError::Input(format!("line {}: {msg}", line_of(src, offset)));
    if file.version != SCHEMA_VERSION {
        return Err(CliError::Input(format!(
            "unsupported schema version {} (expected {SCHEMA_VERSION})",
            file.version
        )));
    }

    let net = &file.network;
    let n_all = net.nodes.len();
    let mut branches = Vec::with_capacity(net.branches.len());
    for (i, b) in net.branches.iter().enumerate() {
        let (span, e) = (b.span(), b.get_ref());
        let label = format!("branch #{} ({}-{})", i + 1, e.from, e.to);
        if e.from == 0 || e.to == 0 || e.from > n_all || e.to > n_all {
            return Err(bad(span.start, format!("{label}: node ids must lie in 1..={n_all}")));
        }
        if e.from == e.to {
            return Err(bad(span.start, format!("{label}: from and to must differ")));
        }
        if e.r.is_nan() || e.r < 0.0 || !e.x.is_finite() {
            return Err(bad(span.start, format!("{label}: r must be non-negative and x finite")));
        }
        if e.r == 0.0 && e.x == 0.0 {
            return Err(bad(span.start, format!("{label}: r and x are both zero")));
        }
        branches.push(BranchSpec::new(e.from - 1, e.to - 1, e.r, e.x));
    }
    let shunts = match &net.shunts {
        Some(s) if s.len() != n_all => {
            return Err(CliError::Input(format!(
                "network.shunts has {} entries for {n_all} nodes",
                s.len()
            )))
        }
        Some(s) => s.iter().map(cx).collect(),
        None => vec![C64::new(0.0, 0.0); n_all],
    };
    let kinds: Vec<NodeKind> = net.nodes.iter().map(|&k| k.into()).collect();
    let network = NetworkModel::new(kinds, branches, shunts).map_err(|e| CliError::Input(format!("network: {e}")))?;
    let n = network.nodes_of(NodeKind::Converter).len();

    let c = &file.converters;
    let params = DvocParams::from_per_unit(c.eta, c.alpha, c.tau, c.phi, c.omega0)
        .map_err(|e| CliError::Input(format!("converters: {e}")))?;
    for (key, len) in [
        ("p_star", c.p_star.len()),
        ("q_star", c.q_star.len()),
        ("v_star", c.v_star.len()),
    ] {
        if len != n {
            return Err(CliError::Input(format!(
                "converters.{key} has {len} entries for {n} converter nodes"
            )));
        }
    }
    let setpoints = (0..n)
        .map(|k| Setpoints::new(c.p_star[k], c.q_star[k], c.v_star[k]))
        .collect::<Result<Vec<_>, _>>()
        .map_err(|e| CliError::Input(format!("converters: {e}")))?;

    let name = file.name.clone().unwrap_or_else(|| default_name.to_string());
    let loaded = LoadedScenario {
        sha256: hex::encode(Sha256::digest(src.as_bytes())),
        name,
        network,
        params,
        setpoints,
        overrides,
        file,
    };
    // Surface simulation-level problems (events, SG inputs) before any work.
    let scenario = loaded.scenario()?;
    if let Err(e) = scenario.validate() {
        return Err(CliError::Input(e.to_string()));
    }
    for ev in &loaded.file.events {
        if let EventEntry::SetSetpoint { node, .. } = ev.get_ref() {
            if *node == 0 || *node > n {
                return Err(bad(
                    ev.span().start,
                    format!("event node {node} is not a converter (1..={n})"),
                ));
            }
        }
    }
    Ok(loaded)
}

impl LoadedScenario {
    pub fn num_converters(&self) -> usize {
        self.setpoints.len()
    }

    pub fn has_generators(&self) -> bool {
        !self.network.nodes_of(NodeKind::Generator).is_empty()
    }

    pub fn model(&self) -> ModelKind {
        self.file.model.kind.into()
    }

    /// Kron-reduced converter network for the analyses.
    pub fn reduced(&self) -> Result<ReducedNetwork, CliError> {
        reduce(&self.network).map_err(CliError::Core)
    }

    pub fn integrator(&self, kind: ModelKind) -> IntegratorConfig {
        let m = &self.file.model;
        let t_end = self.overrides.t_end.unwrap_or(m.t_end);
        let mut cfg = IntegratorConfig::for_model(kind, t_end);
        if let Some(dt) = self.overrides.dt.or(m.dt) {
            cfg.dt = dt;
        }
        if let Some(r) = m.record_every {
            cfg.record_every = r;
        }
        if let Some(d) = m.divergence_threshold {
            cfg.divergence_threshold = d;
        }
        cfg
    }

    pub fn sync_options(&self) -> SyncOptions {
        let a = &self.file.analysis;
        let d = SyncOptions::default();
        SyncOptions {
            window: a.sync_window.unwrap_or(d.window),
            tol: a.sync_tol.unwrap_or(d.tol),
            ..d
        }
    }

    pub fn certify_options(&self) -> CertifyOptions {
        let a = &self.file.analysis;
        let d = CertifyOptions::default();
        CertifyOptions {
            entry_tol: a.entry_tol.unwrap_or(d.entry_tol),
            delta_bar: a.delta_bar,
            gamma_bar: a.gamma_bar,
        }
    }

    pub fn contour_options(&self) -> ContourOptions {
        let ny = &self.file.analysis.nyquist;
        let d = ContourOptions::default();
        ContourOptions {
            omega_max: ny.omega_max.unwrap_or(d.omega_max),
            indent_radius: ny.indent_radius.unwrap_or(d.indent_radius),
            max_arg_step: ny.max_arg_step.unwrap_or(d.max_arg_step),
            ..d
        }
    }

    pub fn branch_dynamics(&self) -> BranchDynamics {
        match self.file.analysis.nyquist.dynamics {
            DynamicsName::Static => BranchDynamics::Static,
            DynamicsName::Rl => BranchDynamics::RL,
        }
    }

    /// Random initial voltages in the unit square, seeded by `--seed`.
    pub fn random_voltages(&self, salt: u64) -> Vec<C64> {
        let mut rng = ChaCha8Rng::seed_from_u64(self.overrides.seed ^ salt);
        (0..self.num_converters())
            .map(|_| C64::new(rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0)))
            .collect()
    }

    fn sim_network(&self) -> Result<SimNetwork, CliError> {
        if self.has_generators() {
            let part = sg_partition(&build_admittance(&self.network), self.network.kinds()).map_err(CliError::Core)?;
            Ok(SimNetwork::from_partition(&part))
        } else {
            Ok(SimNetwork::from_reduced(&self.reduced()?))
        }
    }

    /// The simulation described by the file, with overrides applied.
    pub fn scenario(&self) -> Result<Scenario, CliError> {
        let n = self.num_converters();
        let model = self.model();
        let init = &self.file.model.initial_state;
        let v = match (&init.v, init.random) {
            (Some(_), true) => {
                return Err(CliError::Input(
                    "initial_state: give either v or random, not both".into(),
                ))
            }
            (Some(v), false) => v.iter().map(cx).collect(),
            (None, true) => self.random_voltages(0),
            (None, false) => vec![C64::new(1.0, 0.0); n],
        };
        let events = self
            .file
            .events
            .iter()
            .map(|e| match e.get_ref() {
                EventEntry::SetSetpoint {
                    time,
                    node,
                    p_star,
                    q_star,
                    v_star,
                } => Ok(Event {
                    time: *time,
                    action: EventAction::SetSetpoint {
                        node: node.saturating_sub(1),
                        setpoints: Setpoints::new(*p_star, *q_star, *v_star)
                            .map_err(|e| CliError::Input(format!("event: {e}")))?,
                    },
                }),
                EventEntry::EnableVoltageRegulation { time, alpha } => Ok(Event {
                    time: *time,
                    action: EventAction::EnableVoltageRegulation { alpha: *alpha },
                }),
                EventEntry::StepExogenous { time, v_sg } => Ok(Event {
                    time: *time,
                    action: EventAction::StepExogenous {
                        v_sg: v_sg.iter().map(cx).collect(),
                    },
                }),
            })
            .collect::<Result<Vec<_>, CliError>>()?;
        let exogenous = self.file.sg.as_ref().map(|sg| ExogenousInput {
            v_sg: sg.v_sg.iter().map(cx).collect(),
            omega: sg.omega.unwrap_or(self.params.omega0),
        });
        Ok(Scenario {
            network: self.sim_network()?,
            params: vec![self.params; n],
            setpoints: self.setpoints.clone(),
            model,
            initial: InitialState {
                v,
                u_f: init.u_f.clone(),
            },
            events,
            integrator: self.integrator(model),
            exogenous,
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    const CANON3: &str = include_str!("../../../scenarios/canon3.toml");

    fn parse_err(src: &str) -> String {
        match parse(src, "t", Overrides::default()) {
            Err(CliError::Input(m)) => m,
            Err(e) => panic!("unexpected error kind: {e}"),
            Ok(_) => panic!("expected a schema error"),
        }
    }

    #[test]
    fn shipped_scenario_parses() {
        let sc = parse(CANON3, "t", Overrides::default()).unwrap();
        assert_eq!(sc.name, "canon3");
        assert_eq!(sc.num_converters(), 3);
        assert_eq!(sc.sha256.len(), 64);
        assert!((sc.params.eta - 0.04 * sc.params.omega0).abs() < 1e-12);
        assert_eq!(sc.scenario().unwrap().integrator.record_every, 10);
    }

    #[test]
    fn unknown_key_is_rejected_with_line() {
        let src = CANON3.replace("tau = 0.005", "tau = 0.005\ngain = 1.0");
        let msg = parse_err(&src);
        let line = src.lines().position(|l| l.starts_with("gain")).unwrap() + 1;
        assert!(msg.contains(&format!("line {line}")), "{msg}");
        assert!(msg.contains("gain"), "{msg}");
    }

    #[test]
    fn zero_impedance_branch_is_named() {
        let src = CANON3.replacen("r = 0.05\nx = 0.05", "r = 0.0\nx = 0.0", 1);
        let msg = parse_err(&src);
        assert!(msg.contains("branch #2 (2-3)") && msg.contains("both zero"), "{msg}");
        assert!(msg.starts_with("line "), "{msg}");
    }

    #[test]
    fn version_and_lengths_are_checked() {
        assert!(parse_err(&CANON3.replace("version = 1", "version = 2")).contains("schema version"));
        let msg = parse_err(&CANON3.replace("p_star = [0.6, 0.3, -0.4]", "p_star = [0.6, 0.3]"));
        assert!(msg.contains("p_star"), "{msg}");
    }

    #[test]
    fn hash_tracks_source_bytes() {
        let a = parse(CANON3, "t", Overrides::default()).unwrap();
        let b = parse(&format!("{CANON3}\n# comment\n"), "t", Overrides::default()).unwrap();
        assert_ne!(a.sha256, b.sha256);
        assert_eq!(a.sha256, parse(CANON3, "t", Overrides::default()).unwrap().sha256);
    }

    #[test]
    fn overrides_apply_to_integrator() {
        let o = Overrides {
            dt: Some(2e-5),
            t_end: Some(0.25),
            seed: 3,
        };
        let sc = parse(CANON3, "t", o).unwrap();
        let cfg = sc.scenario().unwrap().integrator;
        assert_eq!((cfg.dt, cfg.t_end), (2e-5, 0.25));
    }

    #[test]
    fn random_initial_state_depends_on_seed() {
        let src = CANON3.replace(
            "record_every = 10",
            "record_every = 10\n\n[model.initial_state]\nrandom = true",
        );
        let draw = |seed| {
            parse(
                &src,
                "t",
                Overrides {
                    seed,
                    ..Default::default()
                },
            )
            .unwrap()
            .scenario()
            .unwrap()
            .initial
            .v
        };
        assert_eq!(draw(1), draw(1));
        assert_ne!(draw(1), draw(2));
    }

    #[test]
    fn event_entries_are_validated() {
        let ev =
            "\n[[events]]\ntime = 0.5\naction = \"set_setpoint\"\nnode = 4\np_star = 0.1\nq_star = 0.0\nv_star = 1.0\n";
        let msg = parse_err(&format!("{CANON3}{ev}"));
        assert!(msg.contains("node 4"), "{msg}");
        let ev = "\n[[events]]\ntime = 0.5\naction = \"enable_voltage_regulation\"\nalpha = 1.0\nextra = 2\n";
        assert!(parse_err(&format!("{CANON3}{ev}")).contains("extra"));
    }
}
