//! Fixed-step time-domain simulation of the closed-loop models.
//!
//! Six model kinds share one RK4 loop. Voltage-coordinate models integrate
//! `(v, u_f)`; angle-coordinate models integrate `(ϑ, u_f)`. All derived
//! record fields (complex frequency, normalized power, p, q) are evaluated
//! from the model right-hand side at the recorded state.

mod analysis;
mod rk4;

pub use analysis::{
    compare_models, detect_sync, invariance_metrics, InvarianceMetrics, ModelComparison, SyncOptions, SyncResult,
};

use nalgebra::{DMatrix, DVector};

use crate::angle::unwrap_near;
use crate::controllers::{converter_rhs_with, ConverterState, DvocParams, Setpoints, Variant};
use crate::fast::eigenspace_distance;
use crate::network::{ReducedNetwork, SgPartition};
use crate::par::{self, Execution};
use crate::{Error, Result, C64};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum ModelKind {
    /// dVOC with filtered log-amplitude feedback, voltage coordinates.
    NonlinearFiltered,
    /// The same closed loop written in complex-angle coordinates.
    NonlinearLog,
    /// `v̇ = Av` with the filter state frozen.
    FastLinear,
    /// Linear complex power flow in complex-angle coordinates.
    SlowLinear,
    /// [`ModelKind::FastLinear`] forced by generator voltages.
    FastAug,
    /// [`ModelKind::SlowLinear`] forced by generator complex angles.
    SlowAug,
}

impl ModelKind {
    pub const ALL: [ModelKind; 6] = [
        ModelKind::NonlinearFiltered,
        ModelKind::NonlinearLog,
        ModelKind::FastLinear,
        ModelKind::SlowLinear,
        ModelKind::FastAug,
        ModelKind::SlowAug,
    ];

    pub fn name(self) -> &'static str {
        match self {
            ModelKind::NonlinearFiltered => "nonlinear_filtered",
            ModelKind::NonlinearLog => "nonlinear_log",
            ModelKind::FastLinear => "fast_linear",
            ModelKind::SlowLinear => "slow_linear",
            ModelKind::FastAug => "fast_aug",
            ModelKind::SlowAug => "slow_aug",
        }
    }

    pub fn from_name(name: &str) -> Option<Self> {
        Self::ALL.into_iter().find(|k| k.name() == name)
    }

    pub fn is_augmented(self) -> bool {
        matches!(self, ModelKind::FastAug | ModelKind::SlowAug)
    }

    /// State holds `ϑ` rather than `v`.
    pub fn angle_coordinates(self) -> bool {
        matches!(
            self,
            ModelKind::NonlinearLog | ModelKind::SlowLinear | ModelKind::SlowAug
        )
    }

    fn is_fast(self) -> bool {
        matches!(self, ModelKind::FastLinear | ModelKind::FastAug)
    }

    fn is_slow(self) -> bool {
        matches!(self, ModelKind::SlowLinear | ModelKind::SlowAug)
    }

    pub fn default_dt(self) -> f64 {
        if self.is_slow() {
            1e-4
        } else {
            1e-5
        }
    }
}

impl std::fmt::Display for ModelKind {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.name())
    }
}

/// Converter-side network blocks: `i_o = Y·v + Y_G·v_SG`.
#[derive(Debug, Clone, PartialEq)]
pub struct SimNetwork {
    /// Physical converter block (shunts included).
    pub y: DMatrix<C64>,
    /// Converter-to-generator coupling, `N × M`.
    pub y_g: DMatrix<C64>,
    /// `−rowsum([Y, Y_G])`, moved into the setpoints by the linear models.
    pub shift: Vec<C64>,
}

impl SimNetwork {
    pub fn from_reduced(y: &ReducedNetwork) -> Self {
        Self {
            y: y.physical_admittance(),
            y_g: DMatrix::zeros(y.len(), 0),
            shift: y.setpoint_shift().to_vec(),
        }
    }

    pub fn from_partition(part: &SgPartition) -> Self {
        Self {
            y: part.y.clone(),
            y_g: part.y_g.clone(),
            shift: part.setpoint_shift(),
        }
    }

    /// Replaces the generator coupling by an `N × m` zero block.
    pub fn with_zero_coupling(&self, m: usize) -> Self {
        Self {
            y: self.y.clone(),
            y_g: DMatrix::zeros(self.y.nrows(), m),
            shift: self.shift.clone(),
        }
    }

    pub fn num_converters(&self) -> usize {
        self.y.nrows()
    }

    pub fn num_generators(&self) -> usize {
        self.y_g.ncols()
    }

    /// `Y + diag(shift)`: the matrix of the linear power flow.
    pub fn linear_flow_matrix(&self) -> DMatrix<C64> {
        let mut y = self.y.clone();
        for (k, s) in self.shift.iter().enumerate() {
            y[(k, k)] += s;
        }
        y
    }
}

/// Generator voltages `v_SG(t) = v_SG,0·e^{jω t}`.
#[derive(Debug, Clone, PartialEq)]
pub struct ExogenousInput {
    pub v_sg: Vec<C64>,
    pub omega: f64,
}

impl ExogenousInput {
    pub fn voltage(&self, t: f64) -> Vec<C64> {
        let rot = C64::from_polar(1.0, self.omega * t);
        self.v_sg.iter().map(|v| v * rot).collect()
    }

    /// `ln v_SG,0 + jωt`.
    pub fn angle(&self, t: f64) -> Vec<C64> {
        self.v_sg
            .iter()
            .map(|v| v.ln() + C64::new(0.0, self.omega * t))
            .collect()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum EventAction {
    /// Node index is 0-based.
    SetSetpoint {
        node: usize,
        setpoints: Setpoints,
    },
    EnableVoltageRegulation {
        alpha: f64,
    },
    StepExogenous {
        v_sg: Vec<C64>,
    },
}

#[derive(Debug, Clone, PartialEq)]
pub struct Event {
    pub time: f64,
    pub action: EventAction,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct IntegratorConfig {
    pub dt: f64,
    pub t_end: f64,
    /// Store every `record_every`-th step.
    pub record_every: usize,
    /// Abort when any `|v_k|` exceeds this.
    pub divergence_threshold: f64,
}

impl IntegratorConfig {
    pub fn new(dt: f64, t_end: f64) -> Self {
        Self {
            dt,
            t_end,
            record_every: 1,
            divergence_threshold: 1e6,
        }
    }

    pub fn for_model(kind: ModelKind, t_end: f64) -> Self {
        Self::new(kind.default_dt(), t_end)
    }

    pub fn record_every(mut self, n: usize) -> Self {
        self.record_every = n.max(1);
        self
    }

    pub fn steps(&self) -> usize {
        (self.t_end / self.dt).round() as usize
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct InitialState {
    pub v: Vec<C64>,
    /// Filter states; defaults to `ln|v_k|` (or `u*_k` where `v_k = 0`).
    pub u_f: Option<Vec<f64>>,
}

impl InitialState {
    pub fn voltages(v: Vec<C64>) -> Self {
        Self { v, u_f: None }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Scenario {
    pub network: SimNetwork,
    pub params: Vec<DvocParams>,
    pub setpoints: Vec<Setpoints>,
    pub model: ModelKind,
    pub initial: InitialState,
    pub events: Vec<Event>,
    pub integrator: IntegratorConfig,
    pub exogenous: Option<ExogenousInput>,
}

impl Scenario {
    pub fn validate(&self) -> Result<()> {
        let n = self.network.num_converters();
        let cfg = &self.integrator;
        if !(cfg.dt > 0.0 && cfg.dt.is_finite()) {
            return Err(Error::Config(format!("dt must be positive, got {}", cfg.dt)));
        }
        if !(cfg.t_end > 0.0 && cfg.t_end.is_finite()) {
            return Err(Error::Config(format!("t_end must be positive, got {}", cfg.t_end)));
        }
        if !(cfg.divergence_threshold > 0.0) {
            return Err(Error::Config("divergence threshold must be positive".into()));
        }
        if self.params.len() != n || self.setpoints.len() != n || self.initial.v.len() != n {
            return Err(Error::Config(format!(
                "network has {n} converters but got {} parameter sets, {} setpoints, {} initial voltages",
                self.params.len(),
                self.setpoints.len(),
                self.initial.v.len()
            )));
        }
        if let Some(u_f) = &self.initial.u_f {
            if u_f.len() != n {
                return Err(Error::Config(format!(
                    "expected {n} initial filter states, got {}",
                    u_f.len()
                )));
            }
        }
        for p in &self.params {
            p.validate()?;
        }
        let mut last = f64::NEG_INFINITY;
        for (i, e) in self.events.iter().enumerate() {
            if e.time < last {
                return Err(Error::Config(format!("event #{} is out of time order", i + 1)));
            }
            if !(0.0..=cfg.t_end).contains(&e.time) {
                return Err(Error::Config(format!(
                    "event #{} at t = {} lies outside [0, {}]",
                    i + 1,
                    e.time,
                    cfg.t_end
                )));
            }
            last = e.time;
            match &e.action {
                EventAction::SetSetpoint { node, .. } if *node >= n => {
                    return Err(Error::Config(format!(
                        "event #{}: node {} out of range",
                        i + 1,
                        node + 1
                    )));
                }
                EventAction::EnableVoltageRegulation { alpha } if !(*alpha >= 0.0) => {
                    return Err(Error::Config(format!("event #{}: alpha must be non-negative", i + 1)));
                }
                EventAction::StepExogenous { v_sg } => {
                    if !self.model.is_augmented() {
                        return Err(Error::Config(format!(
                            "event #{}: exogenous step needs an augmented model",
                            i + 1
                        )));
                    }
                    if v_sg.len() != self.network.num_generators() {
                        return Err(Error::Config(format!(
                            "event #{}: wrong number of generator voltages",
                            i + 1
                        )));
                    }
                }
                _ => {}
            }
        }
        match (&self.exogenous, self.model.is_augmented()) {
            (Some(x), true) => {
                if x.v_sg.len() != self.network.num_generators() {
                    return Err(Error::Config(format!(
                        "expected {} generator voltages, got {}",
                        self.network.num_generators(),
                        x.v_sg.len()
                    )));
                }
                if self.model.is_slow() && x.v_sg.iter().any(|v| v.norm() == 0.0) {
                    return Err(Error::Config(
                        "generator voltages must be nonzero for angle inputs".into(),
                    ));
                }
            }
            (None, true) => return Err(Error::Config(format!("model {} needs exogenous inputs", self.model))),
            (Some(_), false) => return Err(Error::Config(format!("model {} takes no exogenous inputs", self.model))),
            (None, false) => {
                if self.network.num_generators() != 0 {
                    return Err(Error::Config(format!(
                        "model {} cannot use a network with generator nodes",
                        self.model
                    )));
                }
            }
        }
        if !self.model.is_fast() {
            if let Some(index) = self.initial.v.iter().position(|v| v.norm() == 0.0) {
                return Err(Error::ZeroVoltage { index });
            }
        }
        Ok(())
    }
}

/// One stored time point.
#[derive(Debug, Clone, PartialEq)]
pub struct Record {
    pub t: f64,
    pub v: Vec<C64>,
    pub u_f: Vec<f64>,
    /// Unwrapped phase.
    pub theta: Vec<f64>,
    /// Complex frequency `ε + jω` from the right-hand side.
    pub varpi: Vec<C64>,
    /// Conjugate normalized power; the linear flow for slow models.
    pub sigma_conj: Vec<C64>,
}

impl Record {
    /// `p_k + jq_k = conj(ς̄_k)|v_k|²`.
    pub fn power(&self, k: usize) -> C64 {
        self.sigma_conj[k].conj() * self.v[k].norm_sqr()
    }

    /// `u_k = ln|v_k|`.
    pub fn log_amplitude(&self, k: usize) -> f64 {
        self.v[k].norm().ln()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum Status {
    Completed,
    Diverged { t: f64, max_abs_v: f64 },
    ZeroVoltage { t: f64, node: usize },
}

#[derive(Debug, Clone, PartialEq)]
pub struct Trajectory {
    pub model: ModelKind,
    pub dt: f64,
    /// Spacing of stored records.
    pub record_dt: f64,
    pub omega0: f64,
    pub records: Vec<Record>,
    /// State at the last completed step.
    pub terminal: Record,
    pub status: Status,
}

impl Trajectory {
    pub fn num_nodes(&self) -> usize {
        self.terminal.v.len()
    }

    pub fn times(&self) -> Vec<f64> {
        self.records.iter().map(|r| r.t).collect()
    }

    /// `V(t)` for each record.
    pub fn eigenspace_distances(&self, phi1: &DVector<C64>) -> Vec<f64> {
        self.records
            .iter()
            .map(|r| eigenspace_distance(&DVector::from_column_slice(&r.v), phi1))
            .collect()
    }

    /// Pairwise `ϑ_l − ϑ_k` for `k < l` at one record.
    pub fn angle_differences(record: &Record) -> Vec<((usize, usize), C64)> {
        let n = record.v.len();
        let mut out = Vec::with_capacity(n * n.saturating_sub(1) / 2);
        for k in 0..n {
            for l in k + 1..n {
                let d = C64::new(
                    record.v[l].norm().ln() - record.v[k].norm().ln(),
                    record.theta[l] - record.theta[k],
                );
                out.push(((k, l), d));
            }
        }
        out
    }
}

/// Mutable model data updated by events.
struct Dynamics<'a> {
    model: ModelKind,
    net: &'a SimNetwork,
    y_lin: DMatrix<C64>,
    params: Vec<DvocParams>,
    setpoints: Vec<Setpoints>,
    exogenous: Option<ExogenousInput>,
    u_f_frozen: Vec<f64>,
}

impl Dynamics<'_> {
    fn n(&self) -> usize {
        self.net.num_converters()
    }

    fn currents(&self, t: f64, v: &[C64]) -> Vec<C64> {
        let n = self.n();
        let mut i_o = vec![C64::new(0.0, 0.0); n];
        for (k, out) in i_o.iter_mut().enumerate() {
            for (l, vl) in v.iter().enumerate() {
                *out += self.net.y[(k, l)] * vl;
            }
        }
        if let Some(x) = &self.exogenous {
            let v_sg = x.voltage(t);
            for (k, out) in i_o.iter_mut().enumerate() {
                for (g, vg) in v_sg.iter().enumerate() {
                    *out += self.net.y_g[(k, g)] * vg;
                }
            }
        }
        i_o
    }

    /// Writes the derivative and returns `ς̄` per node.
    fn rhs(&self, t: f64, x: &[C64], dx: &mut [C64]) -> Result<Vec<C64>> {
        let n = self.n();
        let (state, filt) = x.split_at(n);
        let (dstate, dfilt) = dx.split_at_mut(n);
        match self.model {
            ModelKind::NonlinearFiltered => {
                let i_o = self.currents(t, state);
                let mut sigma = Vec::with_capacity(n);
                for k in 0..n {
                    let s = ConverterState {
                        v: state[k],
                        u_f: filt[k].re,
                    };
                    let sp = &self.setpoints[k];
                    let (dv, du) = converter_rhs_with(
                        Variant::Filtered,
                        s,
                        i_o[k],
                        &self.params[k],
                        sp.sigma_conj_star(),
                        sp.u_star(),
                    )
                    .map_err(|_| Error::ZeroVoltage { index: k })?;
                    dstate[k] = dv;
                    dfilt[k] = C64::new(du, 0.0);
                    sigma.push(i_o[k] / state[k]);
                }
                Ok(sigma)
            }
            ModelKind::FastLinear | ModelKind::FastAug => {
                let i_o = self.currents(t, state);
                for k in 0..n {
                    let p = &self.params[k];
                    let sp = &self.setpoints[k];
                    let reference = sp.sigma_conj_star()
                        + p.alpha * C64::from_polar(1.0, -p.phi) * (sp.u_star() - self.u_f_frozen[k]);
                    dstate[k] =
                        C64::new(0.0, p.omega0) * state[k] + p.eta * p.rotation() * (reference * state[k] - i_o[k]);
                    dfilt[k] = C64::new(0.0, 0.0);
                }
                Ok((0..n).map(|k| i_o[k] / state[k]).collect())
            }
            ModelKind::NonlinearLog => {
                let sg = self.exogenous.as_ref().map(|x| x.voltage(t));
                let mut sigma = Vec::with_capacity(n);
                for k in 0..n {
                    let mut s = C64::new(0.0, 0.0);
                    for l in 0..n {
                        s += self.net.y[(k, l)] * (state[l] - state[k]).exp();
                    }
                    if let Some(v_sg) = &sg {
                        let inv = (-state[k]).exp();
                        for (g, vg) in v_sg.iter().enumerate() {
                            s += self.net.y_g[(k, g)] * vg * inv;
                        }
                    }
                    let p = &self.params[k];
                    let sp = &self.setpoints[k];
                    let u_f = filt[k].re;
                    dstate[k] = C64::new(0.0, p.omega0)
                        + p.eta * p.rotation() * (sp.sigma_conj_star() - s)
                        + p.eta * p.alpha * (sp.u_star() - u_f);
                    dfilt[k] = C64::new((state[k].re - u_f) / p.tau, 0.0);
                    sigma.push(s);
                }
                Ok(sigma)
            }
            ModelKind::SlowLinear | ModelKind::SlowAug => {
                let sg = self.exogenous.as_ref().map(|x| x.angle(t));
                let mut sigma = Vec::with_capacity(n);
                for k in 0..n {
                    let mut flow = C64::new(0.0, 0.0);
                    for (l, x) in state[..n].iter().enumerate() {
                        flow += self.y_lin[(k, l)] * x;
                    }
                    if let Some(th_sg) = &sg {
                        for (g, th) in th_sg.iter().enumerate() {
                            flow += self.net.y_g[(k, g)] * th;
                        }
                    }
                    let p = &self.params[k];
                    let sp = &self.setpoints[k];
                    let u_f = filt[k].re;
                    dstate[k] = C64::new(0.0, p.omega0)
                        + p.eta * p.rotation() * (sp.sigma_conj_star() + self.net.shift[k] - flow)
                        + p.eta * p.alpha * (sp.u_star() - u_f);
                    dfilt[k] = C64::new((state[k].re - u_f) / p.tau, 0.0);
                    sigma.push(flow - self.net.shift[k]);
                }
                Ok(sigma)
            }
        }
    }

    fn apply(&mut self, action: &EventAction) {
        match action {
            EventAction::SetSetpoint { node, setpoints } => self.setpoints[*node] = *setpoints,
            EventAction::EnableVoltageRegulation { alpha } => {
                for p in &mut self.params {
                    p.alpha = *alpha;
                }
            }
            EventAction::StepExogenous { v_sg } => {
                if let Some(x) = &mut self.exogenous {
                    x.v_sg = v_sg.clone();
                }
            }
        }
    }

    fn voltages(&self, x: &[C64]) -> Vec<C64> {
        let n = self.n();
        if self.model.angle_coordinates() {
            x[..n].iter().map(|z| z.exp()).collect()
        } else {
            x[..n].to_vec()
        }
    }

    fn record(&self, t: f64, x: &[C64], theta: &[f64]) -> Result<Record> {
        let n = self.n();
        let mut dx = vec![C64::new(0.0, 0.0); x.len()];
        let sigma_conj = self.rhs(t, x, &mut dx)?;
        let varpi = if self.model.angle_coordinates() {
            dx[..n].to_vec()
        } else {
            (0..n).map(|k| dx[k] / x[k]).collect()
        };
        Ok(Record {
            t,
            v: self.voltages(x),
            u_f: x[n..].iter().map(|z| z.re).collect(),
            theta: theta.to_vec(),
            varpi,
            sigma_conj,
        })
    }
}

fn phases(model: ModelKind, x: &[C64], n: usize, prev: Option<&[f64]>) -> Vec<f64> {
    (0..n)
        .map(|k| {
            if model.angle_coordinates() {
                x[k].im
            } else {
                let principal = x[k].im.atan2(x[k].re);
                match prev {
                    Some(p) => unwrap_near(principal, p[k]),
                    None => principal,
                }
            }
        })
        .collect()
}

pub fn simulate(scenario: &Scenario) -> Result<Trajectory> {
    scenario.validate()?;
    let n = scenario.network.num_converters();
    let cfg = scenario.integrator;
    let u_f0: Vec<f64> = match &scenario.initial.u_f {
        Some(u) => u.clone(),
        None => (0..n)
            .map(|k| {
                let m = scenario.initial.v[k].norm();
                if m > 0.0 {
                    m.ln()
                } else {
                    scenario.setpoints[k].u_star()
                }
            })
            .collect(),
    };
    let mut dynamics = Dynamics {
        model: scenario.model,
        net: &scenario.network,
        y_lin: scenario.network.linear_flow_matrix(),
        params: scenario.params.clone(),
        setpoints: scenario.setpoints.clone(),
        exogenous: scenario.exogenous.clone(),
        u_f_frozen: u_f0.clone(),
    };
    let mut x: Vec<C64> = Vec::with_capacity(2 * n);
    if scenario.model.angle_coordinates() {
        x.extend(scenario.initial.v.iter().map(|v| v.ln()));
    } else {
        x.extend(scenario.initial.v.iter().copied());
    }
    x.extend(u_f0.iter().map(|&u| C64::new(u, 0.0)));

    let steps = cfg.steps();
    let dt = cfg.dt;
    let mut theta = phases(scenario.model, &x, n, None);
    let mut records = Vec::with_capacity(steps / cfg.record_every + 1);
    let mut next_event = 0;
    let mut work = rk4::Workspace::new(x.len());
    let mut status = Status::Completed;
    let mut last_t = 0.0;

    for step in 0..=steps {
        let t = step as f64 * dt;
        while next_event < scenario.events.len() && (scenario.events[next_event].time / dt).round() as usize <= step {
            dynamics.apply(&scenario.events[next_event].action);
            next_event += 1;
        }
        if step % cfg.record_every == 0 {
            match dynamics.record(t, &x, &theta) {
                Ok(r) => records.push(r),
                Err(Error::ZeroVoltage { index }) => {
                    status = Status::ZeroVoltage { t, node: index };
                    break;
                }
                Err(e) => return Err(e),
            }
        }
        last_t = t;
        if step == steps {
            break;
        }
        let advanced = rk4::step(&mut work, t, dt, &mut x, |t, s, d| dynamics.rhs(t, s, d).map(|_| ()));
        if let Err(e) = advanced {
            match e {
                Error::ZeroVoltage { index } => {
                    status = Status::ZeroVoltage { t, node: index };
                    break;
                }
                other => return Err(other),
            }
        }
        let v = dynamics.voltages(&x);
        let max_abs_v = v.iter().map(|z| z.norm()).fold(0.0, f64::max);
        let finite = x.iter().all(|z| z.re.is_finite() && z.im.is_finite());
        if !finite || max_abs_v > cfg.divergence_threshold {
            last_t = t + dt;
            status = Status::Diverged {
                t: last_t,
                max_abs_v: if finite { max_abs_v } else { f64::INFINITY },
            };
            theta = phases(scenario.model, &x, n, Some(&theta));
            break;
        }
        if let Some(index) = v.iter().position(|z| z.norm() == 0.0) {
            if !scenario.model.is_fast() {
                status = Status::ZeroVoltage { t: t + dt, node: index };
                break;
            }
        }
        theta = phases(scenario.model, &x, n, Some(&theta));
    }

    let terminal = match dynamics.record(last_t, &x, &theta) {
        Ok(r) => r,
        Err(_) => Record {
            t: last_t,
            v: dynamics.voltages(&x),
            u_f: x[n..].iter().map(|z| z.re).collect(),
            theta: theta.clone(),
            varpi: vec![C64::new(f64::NAN, f64::NAN); n],
            sigma_conj: vec![C64::new(f64::NAN, f64::NAN); n],
        },
    };
    Ok(Trajectory {
        model: scenario.model,
        dt,
        record_dt: dt * cfg.record_every as f64,
        omega0: scenario.params[0].omega0,
        records,
        terminal,
        status,
    })
}

/// Runs independent scenarios, in parallel when `exec` allows it.
pub fn simulate_many(exec: Execution, scenarios: &[Scenario]) -> Vec<Result<Trajectory>> {
    par::map(exec, scenarios, simulate)
}

#[cfg(test)]
mod tests;
