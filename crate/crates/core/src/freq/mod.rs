//! Frequency-domain admittance models and the two Nyquist stability criteria.
//!
//! The synchronization criterion works on the complex-coefficient return
//! ratio `l_k = y_agg,k / y_equ,k` of the fast dynamics with optional RL
//! line dynamics. The voltage criterion works on the real 2×2 return ratio
//! `L_k = Y_agg,k Y_equ,k⁻¹` of the slow system.
//!
//! Network-side admittances are formed by eliminating all nodes except `k`
//! exactly: a Schur complement entry is a ratio of two determinants, and each
//! determinant times a known common denominator is a polynomial, recovered by
//! interpolation on a circle in the normalized frequency `s/scale`.

pub mod nyquist;
pub mod poly;
pub mod rational;

use nalgebra::{DMatrix, Matrix2};

pub use nyquist::{nyquist_curve, winding_number, ContourOptions, Indentation, NyquistCurve};
pub use poly::Poly;
pub use rational::{RationalTF, TFMatrix2x2};

use crate::controllers::{DvocParams, Setpoints};
use crate::linalg::complex_eigenvalues;
use crate::network::{BranchSpec, NetworkModel, NodeKind};
use crate::slow::SlowSystem;
use crate::{Error, Result, C64};

/// Relative tolerance (in units of the frequency scale) for classifying a
/// pole as lying on the imaginary axis.
pub const AXIS_TOL: f64 = 1e-9;

/// `y_equ,k(s) = (s − jω₀)e^{−jφ}/η − ς̄^∗_k`.
pub fn converter_admittance_fast(params: &DvocParams, sigma_eff: C64) -> Result<RationalTF> {
    if !(params.eta > 0.0) {
        return Err(Error::Config(format!("eta must be positive, got {}", params.eta)));
    }
    let k = C64::from_polar(1.0 / params.eta, -params.phi);
    let num = [-C64::new(0.0, params.omega0) * k - sigma_eff, k];
    RationalTF::from_s_coeffs(&num, &[C64::new(1.0, 0.0)], params.omega0)
}

/// `ς̄* + αe^{−jφ}(u* − u_f)` for a network whose shunts are kept explicit.
pub fn physical_reference(params: &DvocParams, setpoints: &Setpoints, u_f: f64) -> C64 {
    setpoints.sigma_conj_star() + params.alpha * C64::from_polar(1.0, -params.phi) * (setpoints.u_star() - u_f)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum BranchDynamics {
    /// `1/(r + jx)` at every frequency.
    Static,
    /// `1/(r + ℓs)` with `ℓ = x/ω₀`.
    RL,
}

/// Physical network with frequency-dependent branch admittances.
#[derive(Debug, Clone, PartialEq)]
pub struct DynamicNetwork {
    kinds: Vec<NodeKind>,
    branches: Vec<BranchSpec>,
    shunts: Vec<C64>,
    pub omega0: f64,
    pub dynamics: BranchDynamics,
}

impl DynamicNetwork {
    pub fn new(model: &NetworkModel, omega0: f64, dynamics: BranchDynamics) -> Result<Self> {
        if !(omega0 > 0.0) {
            return Err(Error::Config(format!("omega0 must be positive, got {omega0}")));
        }
        if model.kinds().contains(&NodeKind::Generator) {
            return Err(Error::Unsupported(
                "frequency-domain models do not cover generator nodes".into(),
            ));
        }
        if dynamics == BranchDynamics::RL {
            if let Some((i, b)) = model.branches().iter().enumerate().find(|(_, b)| !(b.x > 0.0)) {
                return Err(Error::Unsupported(format!(
                    "branch #{i} ({}-{}) has x = {}; RL dynamics need inductive branches",
                    b.from, b.to, b.x
                )));
            }
        }
        Ok(Self {
            kinds: model.kinds().to_vec(),
            branches: model.branches().to_vec(),
            shunts: model.shunts().to_vec(),
            omega0,
            dynamics,
        })
    }

    pub fn num_nodes(&self) -> usize {
        self.kinds.len()
    }

    pub fn kinds(&self) -> &[NodeKind] {
        &self.kinds
    }

    pub fn branches(&self) -> &[BranchSpec] {
        &self.branches
    }

    /// Number of branch states.
    pub fn order(&self) -> usize {
        match self.dynamics {
            BranchDynamics::Static => 0,
            BranchDynamics::RL => self.branches.len(),
        }
    }

    fn branch_denominator(&self, b: &BranchSpec, s: C64) -> C64 {
        match self.dynamics {
            BranchDynamics::Static => C64::new(b.r, b.x),
            BranchDynamics::RL => b.r + s * b.inductance(self.omega0),
        }
    }

    /// `Π_b (r_b + ℓ_b s)`, or 1 for static branches.
    fn common_denominator(&self, s: C64) -> C64 {
        match self.dynamics {
            BranchDynamics::Static => C64::new(1.0, 0.0),
            BranchDynamics::RL => self.branches.iter().map(|b| self.branch_denominator(b, s)).product(),
        }
    }

    /// Nodal admittance `Y(s)` including shunts.
    pub fn admittance_at(&self, s: C64) -> DMatrix<C64> {
        let n = self.num_nodes();
        let mut y = DMatrix::from_element(n, n, C64::new(0.0, 0.0));
        for b in &self.branches {
            let yb = self.branch_denominator(b, s).inv();
            y[(b.from, b.from)] += yb;
            y[(b.to, b.to)] += yb;
            y[(b.from, b.to)] -= yb;
            y[(b.to, b.from)] -= yb;
        }
        for (k, sh) in self.shunts.iter().enumerate() {
            y[(k, k)] += sh;
        }
        y
    }
}

fn det(m: &DMatrix<C64>) -> C64 {
    if m.nrows() == 0 {
        C64::new(1.0, 0.0)
    } else {
        m.clone().determinant()
    }
}

fn poly_degree(tf: &RationalTF) -> usize {
    tf.num.degree().unwrap_or(0).max(tf.den.degree().unwrap_or(0))
}

/// Driving-point admittance at node `k` with every other node `i` closed by
/// `closures[i]` (`None` leaves only its shunt). `closures[k]` is ignored.
pub fn aggregated_admittance_fast(
    net: &DynamicNetwork,
    closures: &[Option<RationalTF>],
    k: usize,
) -> Result<RationalTF> {
    let n = net.num_nodes();
    if closures.len() != n || k >= n {
        return Err(Error::Config(format!(
            "need {n} closures and a node below {n}; got {} and {k}",
            closures.len()
        )));
    }
    let scale = net.omega0;
    let others: Vec<usize> = (0..n).filter(|&i| i != k).collect();
    let mut bound = net.order();
    for &i in &others {
        if let Some(c) = &closures[i] {
            if (c.scale - scale).abs() > 1e-12 * scale {
                return Err(Error::Config(format!(
                    "closure at node {i} uses a different frequency scale"
                )));
            }
            bound += poly_degree(c);
        }
    }
    let closed = |s: C64| -> (DMatrix<C64>, C64) {
        let mut m = net.admittance_at(s);
        let mut q = net.common_denominator(s);
        for &i in &others {
            if let Some(c) = &closures[i] {
                let z = s / scale;
                let d = c.den.eval(z);
                m[(i, i)] += c.num.eval(z) / d;
                q *= d;
            }
        }
        (m, q)
    };
    let full = Poly::interpolate(
        |z| {
            let (m, q) = closed(z * scale);
            q * det(&m)
        },
        bound,
        1.0,
    );
    let reduced = Poly::interpolate(
        |z| {
            let (m, q) = closed(z * scale);
            q * det(&m.select_rows(&others).select_columns(&others))
        },
        bound,
        1.0,
    );
    let tol = 1e-12 * full.max_abs().max(reduced.max_abs());
    if reduced.c.iter().all(|c| c.norm() <= tol) {
        return Err(Error::Degenerate(format!(
            "eliminating all nodes but {k} leaves a zero denominator"
        )));
    }
    RationalTF::new(full, reduced, scale)?.reduced()
}

/// `l_k = y_agg,k / y_equ,k` with every converter closed by its fast
/// equivalent admittance. `reference[i]` is `ς̄^∗_i` without shunt shift.
pub fn sync_loop_ratio(net: &DynamicNetwork, params: &DvocParams, reference: &[C64], k: usize) -> Result<RationalTF> {
    let n = net.num_nodes();
    if reference.len() != n {
        return Err(Error::Config(format!(
            "expected {n} references, got {}",
            reference.len()
        )));
    }
    if net.kinds.get(k) != Some(&NodeKind::Converter) {
        return Err(Error::Config(format!("node {k} is not a converter")));
    }
    let closures = (0..n)
        .map(|i| match net.kinds[i] {
            NodeKind::Converter => converter_admittance_fast(params, reference[i]).map(Some),
            _ => Ok(None),
        })
        .collect::<Result<Vec<_>>>()?;
    let y_agg = aggregated_admittance_fast(net, &closures, k)?;
    let y_equ = closures[k].clone().expect("node k is a converter");
    y_agg.div(&y_equ)?.reduced()
}

fn split_axis(poles: &[C64], scale: f64) -> (usize, Vec<f64>) {
    let tol = AXIS_TOL * scale;
    let rhp = poles.iter().filter(|p| p.re > tol).count();
    let axis = poles.iter().filter(|p| p.re.abs() <= tol).map(|p| p.im).collect();
    (rhp, axis)
}

#[derive(Debug, Clone, PartialEq)]
pub struct SyncCriterion {
    pub z1: i64,
    pub p1: usize,
    pub n1: i64,
    pub pass: bool,
    pub curve: NyquistCurve,
}

/// Counts closed-loop right-half-plane poles of `1 + l` as `P1 − N1`.
pub fn criterion_sync(l: &RationalTF, opts: &ContourOptions) -> Result<SyncCriterion> {
    let poles = l.poles()?;
    let (p1, axis) = split_axis(&poles, l.scale);
    let mut critical = poles;
    critical.extend(l.zeros()?);
    let point = C64::new(-1.0, 0.0);
    let curve = nyquist_curve(|s| l.eval(s), &critical, &axis, point, false, opts)?;
    let n1 = winding_number(&curve, point)?;
    let z1 = p1 as i64 - n1;
    Ok(SyncCriterion {
        z1,
        p1,
        n1,
        pass: z1 <= 1,
        curve,
    })
}

/// Combined linear model of converters and branches, states `(v, i_b)`:
///
/// ```text
/// v̇_k   = jω₀v_k + ηe^{jφ}(ς̄^∗_k v_k − i_o,k)
/// ℓ_b i̇_b = v_from − v_to − r_b i_b
/// ```
///
/// With static branches only the `v` states remain.
pub fn sync_state_matrix(net: &DynamicNetwork, params: &DvocParams, reference: &[C64]) -> Result<DMatrix<C64>> {
    let n = net.num_nodes();
    if net.kinds.iter().any(|k| *k != NodeKind::Converter) {
        return Err(Error::Unsupported(
            "the state-space model needs converter nodes only".into(),
        ));
    }
    if reference.len() != n {
        return Err(Error::Config(format!(
            "expected {n} references, got {}",
            reference.len()
        )));
    }
    let g = params.eta * params.rotation();
    let jw = C64::new(0.0, params.omega0);
    if net.dynamics == BranchDynamics::Static {
        let mut a = -net.admittance_at(jw) * g;
        for k in 0..n {
            a[(k, k)] += jw + g * reference[k];
        }
        return Ok(a);
    }
    let m = net.branches.len();
    let mut a = DMatrix::from_element(n + m, n + m, C64::new(0.0, 0.0));
    for k in 0..n {
        a[(k, k)] = jw + g * (reference[k] - net.shunts[k]);
    }
    for (j, b) in net.branches.iter().enumerate() {
        let ib = n + j;
        a[(b.from, ib)] -= g;
        a[(b.to, ib)] += g;
        let l = b.inductance(net.omega0);
        a[(ib, b.from)] += 1.0 / l;
        a[(ib, b.to)] -= 1.0 / l;
        a[(ib, ib)] -= b.r / l;
    }
    Ok(a)
}

/// Eigenvalues with `Re ≥ −tol`.
pub fn count_nonnegative(eigenvalues: &[C64], tol: f64) -> usize {
    eigenvalues.iter().filter(|l| l.re >= -tol).count()
}

#[derive(Debug, Clone, PartialEq)]
pub struct SyncOracle {
    pub eigenvalues: Vec<C64>,
    pub nonnegative: usize,
    pub pass: bool,
}

/// State-space verdict: at most one eigenvalue with `Re ≥ 0`.
pub fn sync_oracle(net: &DynamicNetwork, params: &DvocParams, reference: &[C64]) -> Result<SyncOracle> {
    let a = sync_state_matrix(net, params, reference)?;
    let eigenvalues = complex_eigenvalues(&a)?;
    let nonnegative = count_nonnegative(&eigenvalues, AXIS_TOL * params.omega0);
    Ok(SyncOracle {
        eigenvalues,
        nonnegative,
        pass: nonnegative <= 1,
    })
}

/// `(1/η)·diag((τs² + s + ηα)/(τs + 1), s)`.
pub fn converter_admittance_dc(eta: f64, alpha: f64, tau: f64) -> Result<TFMatrix2x2> {
    if !(eta > 0.0 && alpha > 0.0 && tau > 0.0) {
        return Err(Error::Precondition(format!(
            "eta, alpha and tau must be positive; got {eta}, {alpha}, {tau}"
        )));
    }
    let scale = 1.0 / tau;
    let r = |x: f64| C64::new(x, 0.0);
    let a = RationalTF::from_s_coeffs(&[r(alpha), r(1.0 / eta), r(tau / eta)], &[r(1.0), r(tau)], scale)?;
    let b = RationalTF::from_s_coeffs(&[r(0.0), r(1.0 / eta)], &[r(1.0)], scale)?;
    let zero = RationalTF::constant(r(0.0), scale);
    TFMatrix2x2::new([[a, zero.clone()], [zero, b]])
}

#[derive(Debug, Clone, PartialEq)]
pub struct DcAdmittancePair {
    pub node: usize,
    pub y_equ: TFMatrix2x2,
    pub y_agg: TFMatrix2x2,
}

/// Real 2n×2n network matrix with blocks `[[G′, −B′], [B′, G′]]`, ordered
/// `(u_0, δ_0, u_1, δ_1, …)`.
pub fn dc_network_matrix(sys: &SlowSystem) -> DMatrix<f64> {
    let n = sys.len();
    DMatrix::from_fn(2 * n, 2 * n, |r, c| {
        let (g, b) = (sys.gp[(r / 2, c / 2)], sys.bp[(r / 2, c / 2)]);
        match (r % 2, c % 2) {
            (0, 0) | (1, 1) => g,
            (0, 1) => -b,
            _ => b,
        }
    })
}

pub fn dc_admittance_pair(sys: &SlowSystem, k: usize) -> Result<DcAdmittancePair> {
    let n = sys.len();
    if k >= n {
        return Err(Error::Config(format!("node {k} out of range for {n} nodes")));
    }
    let y_equ = converter_admittance_dc(sys.eta, sys.alpha, sys.tau)?;
    let scale = 1.0 / sys.tau;
    let net = dc_network_matrix(sys).map(|x| C64::new(x, 0.0));
    let (ea, eb) = (&y_equ.entries[0][0], &y_equ.entries[1][1]);
    let others: Vec<usize> = (0..2 * n).filter(|&i| i / 2 != k).collect();
    let closed = |s: C64| -> (DMatrix<C64>, C64) {
        let z = s / scale;
        let (da, a) = (ea.den.eval(z), ea.num.eval(z));
        let b = eb.eval(s);
        let mut m = net.clone();
        for i in (0..n).filter(|&i| i != k) {
            m[(2 * i, 2 * i)] += a / da;
            m[(2 * i + 1, 2 * i + 1)] += b;
        }
        (m, da.powi(n as i32 - 1))
    };
    let bound = 3 * (n - 1);
    let realify = |p: Poly| Poly::new(p.c.iter().map(|c| C64::new(c.re, 0.0)).collect());
    let den = realify(Poly::interpolate(
        |z| {
            let (m, q) = closed(z * scale);
            q * det(&m.select_rows(&others).select_columns(&others))
        },
        bound,
        1.0,
    ));
    if den.trimmed(1e-12).is_zero() {
        return Err(Error::Degenerate(format!(
            "eliminating all nodes but {k} leaves a zero denominator"
        )));
    }
    let entry = |i: usize, j: usize| -> Result<RationalTF> {
        let mut rows = others.clone();
        rows.push(2 * k + i);
        let mut cols = others.clone();
        cols.push(2 * k + j);
        let num = realify(Poly::interpolate(
            |z| {
                let (m, q) = closed(z * scale);
                q * det(&m.select_rows(&rows).select_columns(&cols))
            },
            bound,
            1.0,
        ));
        RationalTF::new(num, den.clone(), scale)?.reduced()
    };
    let y_agg = TFMatrix2x2::new([[entry(0, 0)?, entry(0, 1)?], [entry(1, 0)?, entry(1, 1)?]])?;
    Ok(DcAdmittancePair { node: k, y_equ, y_agg })
}

#[derive(Debug, Clone, PartialEq)]
pub struct VoltageCriterion {
    pub n2: i64,
    pub pass: bool,
    pub curve: NyquistCurve,
}

/// Winding of `det(I + Y_agg Y_equ⁻¹)` about the origin.
pub fn criterion_voltage(pair: &DcAdmittancePair, opts: &ContourOptions) -> Result<VoltageCriterion> {
    let e = &pair.y_equ.entries;
    let scale = e[0][0].scale;
    let det_equ = e[0][0].mul(&e[1][1])?.add(&e[0][1].mul(&e[1][0])?.neg())?.reduced()?;
    let mut poles = pair.y_agg.poles()?;
    poles.extend(pair.y_equ.poles()?);
    poles.extend(det_equ.zeros()?);
    let (rhp, axis) = split_axis(&poles, scale);
    if rhp > 0 {
        let worst = poles.iter().map(|p| p.re).fold(f64::NEG_INFINITY, f64::max);
        return Err(Error::Precondition(format!(
            "L_{} has {rhp} right-half-plane pole(s), largest real part {worst:.6e}",
            pair.node
        )));
    }
    let mut critical = poles;
    for row in pair.y_agg.entries.iter().chain(pair.y_equ.entries.iter()) {
        for tf in row {
            critical.extend(tf.zeros()?);
        }
    }
    let f = |s: C64| -> C64 {
        let inv = pair.y_equ.eval(s).try_inverse();
        match inv {
            Some(inv) => (Matrix2::identity() + pair.y_agg.eval(s) * inv).determinant(),
            None => C64::new(f64::NAN, f64::NAN),
        }
    };
    let origin = C64::new(0.0, 0.0);
    let curve = nyquist_curve(f, &critical, &axis, origin, true, opts)?;
    let n2 = winding_number(&curve, origin)?;
    Ok(VoltageCriterion {
        n2,
        pass: n2 == 0,
        curve,
    })
}
