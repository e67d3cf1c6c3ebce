//! Fast linear system `v̇ = Av`, its spectrum, and the synchronization
//! conditions built on it.

use std::f64::consts::{FRAC_PI_2, PI};

use nalgebra::{DMatrix, DVector};

use crate::controllers::{DvocParams, Setpoints};
use crate::linalg::{complex_eigenvalues, refine_eigenpair, sort_by_real_desc};
use crate::network::{algebraic_connectivity, ReducedNetwork};
use crate::{Error, Result, C64};

/// Relative tolerance used when checking that gains are uniform.
const UNIFORM_TOL: f64 = 1e-12;

/// `A = jω₀I + ηe^{jφ}(diag(ς̄^∗) − Y)`.
#[derive(Debug, Clone, PartialEq)]
pub struct FastSystem {
    pub a: DMatrix<C64>,
    /// `ς̄^∗ = ς̄* + shift + αe^{−jφ}(u* − u_f)` per node.
    pub effective_reference: Vec<C64>,
    pub eta: f64,
    pub phi: f64,
    pub omega0: f64,
}

impl FastSystem {
    /// Assembles `A` from a Laplacian and an already effective reference.
    pub fn from_parts(y: &DMatrix<C64>, effective_reference: Vec<C64>, eta: f64, phi: f64, omega0: f64) -> Self {
        let n = y.nrows();
        let k = eta * C64::from_polar(1.0, phi);
        let mut a = -y * k;
        for i in 0..n {
            a[(i, i)] += C64::new(0.0, omega0) + k * effective_reference[i];
        }
        Self {
            a,
            effective_reference,
            eta,
            phi,
            omega0,
        }
    }

    pub fn len(&self) -> usize {
        self.a.nrows()
    }

    pub fn is_empty(&self) -> bool {
        self.a.nrows() == 0
    }
}

/// Rejects per-node parameter sets whose `η`, `φ` or `ω₀` differ.
pub fn uniform_params(params: &[DvocParams]) -> Result<DvocParams> {
    let first = *params
        .first()
        .ok_or_else(|| Error::Config("no converter parameters given".into()))?;
    let same = |a: f64, b: f64| (a - b).abs() <= UNIFORM_TOL * a.abs().max(b.abs()).max(1.0);
    for (k, p) in params.iter().enumerate() {
        if !same(p.eta, first.eta) || !same(p.phi, first.phi) || !same(p.omega0, first.omega0) {
            return Err(Error::Unsupported(format!(
                "converter {} has eta/phi/omega0 different from converter 1; heterogeneous gains are not supported",
                k + 1
            )));
        }
    }
    Ok(first)
}

/// Effective reference `ς̄* + shift + αe^{−jφ}(u* − u_f)` per node.
pub fn effective_reference(
    y: &ReducedNetwork,
    params: &[DvocParams],
    setpoints: &[Setpoints],
    u_f: &[f64],
) -> Result<Vec<C64>> {
    let n = y.len();
    if params.len() != n || setpoints.len() != n || u_f.len() != n {
        return Err(Error::Config(format!(
            "expected {n} parameter sets, setpoints and filter states; got {}, {}, {}",
            params.len(),
            setpoints.len(),
            u_f.len()
        )));
    }
    Ok((0..n)
        .map(|k| {
            let p = &params[k];
            setpoints[k].sigma_conj_star()
                + y.setpoint_shift()[k]
                + p.alpha * C64::from_polar(1.0, -p.phi) * (setpoints[k].u_star() - u_f[k])
        })
        .collect())
}

pub fn build_fast_system(
    y: &ReducedNetwork,
    params: &[DvocParams],
    setpoints: &[Setpoints],
    u_f: &[f64],
) -> Result<FastSystem> {
    let p = uniform_params(params)?;
    let reference = effective_reference(y, params, setpoints, u_f)?;
    Ok(FastSystem::from_parts(y.y(), reference, p.eta, p.phi, p.omega0))
}

/// Sorted eigenvalues and the refined dominant eigenpair.
#[derive(Debug, Clone, PartialEq)]
pub struct Spectrum {
    /// Descending real part.
    pub eigenvalues: Vec<C64>,
    /// Unit-norm dominant right eigenvector; its largest entry is real positive.
    pub phi1: DVector<C64>,
    /// `Re λ₁ − Re λ₂` (infinite for a single node).
    pub gap: f64,
    /// `‖Aφ₁ − λ₁φ₁‖`.
    pub residual: f64,
    /// `‖Aᵀφ₁ − λ₁φ₁‖`: the left eigenvector equals the right one.
    pub left_residual: f64,
}

impl Spectrum {
    pub fn lambda1(&self) -> C64 {
        self.eigenvalues[0]
    }

    pub fn lambda2(&self) -> Option<C64> {
        self.eigenvalues.get(1).copied()
    }

    /// Left eigenvector scaled so that `ψ₁ᵀφ₁ = 1`.
    pub fn psi1(&self) -> DVector<C64> {
        let s = self.phi1.dot(&self.phi1);
        &self.phi1 / s
    }
}

pub const GAP_TOL: f64 = 1e-9;
pub const REFINE_TOL: f64 = 1e-11;

pub fn spectrum(a: &DMatrix<C64>) -> Result<Spectrum> {
    if a.nrows() == 0 || !a.is_square() {
        return Err(Error::Config("system matrix must be square and non-empty".into()));
    }
    let mut eigenvalues = complex_eigenvalues(a)?;
    sort_by_real_desc(&mut eigenvalues);
    let gap = match eigenvalues.get(1) {
        Some(l2) => eigenvalues[0].re - l2.re,
        None => f64::INFINITY,
    };
    if gap <= GAP_TOL {
        return Err(Error::DominanceAmbiguous { gap });
    }
    let scale = a.norm().max(1.0);
    let (lambda, mut x, residual) = refine_eigenpair(a, eigenvalues[0], REFINE_TOL * scale)?;
    if residual > 1e-9 * scale {
        return Err(Error::Numerical(format!(
            "dominant eigenpair residual {residual:.3e} after refinement"
        )));
    }
    eigenvalues[0] = lambda;
    let (imax, _) = x.iter().enumerate().fold(
        (0, -1.0),
        |best, (i, z)| if z.norm() > best.1 { (i, z.norm()) } else { best },
    );
    let phase = x[imax] / x[imax].norm();
    x /= phase;
    x[imax] = C64::new(x[imax].re, 0.0);
    let left_residual = (a.transpose() * &x - &x * lambda).norm();
    Ok(Spectrum {
        eigenvalues,
        phi1: x,
        gap,
        residual,
        left_residual,
    })
}

/// Outcome of the spectral condition.
#[derive(Debug, Clone, PartialEq)]
pub struct SpectralCheck {
    pub pass: bool,
    /// `min_k |φ₁ₖ| / max_k |φ₁ₖ|`.
    pub min_entry_ratio: f64,
    pub entry_tol: f64,
    pub re_lambda2: f64,
    pub gap: f64,
    /// True when the dominant eigenvalue is simple (gap above tolerance).
    pub simple: bool,
    pub reasons: Vec<String>,
}

pub const DEFAULT_ENTRY_TOL: f64 = 1e-8;

pub fn check_spectral_condition(spec: &Spectrum, entry_tol: f64) -> SpectralCheck {
    let mags: Vec<f64> = spec.phi1.iter().map(|z| z.norm()).collect();
    let max = mags.iter().copied().fold(0.0, f64::max);
    let min = mags.iter().copied().fold(f64::INFINITY, f64::min);
    let min_entry_ratio = if max > 0.0 { min / max } else { 0.0 };
    let re_lambda2 = spec.lambda2().map_or(f64::NEG_INFINITY, |l| l.re);
    let simple = spec.gap > GAP_TOL;
    let mut reasons = Vec::new();
    if min_entry_ratio <= entry_tol {
        reasons.push(format!(
            "zero eigenvector entry (min/max |phi1| = {min_entry_ratio:.3e})"
        ));
    }
    if re_lambda2 >= 0.0 {
        reasons.push(format!("unstable subdominant mode (Re lambda2 = {re_lambda2:.6e})"));
    }
    if !simple {
        reasons.push(format!("dominant eigenvalue not simple (gap {:.3e})", spec.gap));
    }
    SpectralCheck {
        pass: reasons.is_empty(),
        min_entry_ratio,
        entry_tol,
        re_lambda2,
        gap: spec.gap,
        simple,
        reasons,
    }
}

/// Both sides of the parametric inequality.
#[derive(Debug, Clone, PartialEq)]
pub struct ParametricCheck {
    pub pass: bool,
    /// `max_k Re(e^{jφ}ς̄^∗_k)`.
    pub lhs: f64,
    /// `(1 + cos δ̄)/2 · (1 − γ̄)² · λ₂`.
    pub rhs: f64,
    pub margin: f64,
    pub lambda2: f64,
    pub delta_bar: f64,
    pub gamma_bar: f64,
}

pub fn check_parametric_condition(
    y: &ReducedNetwork,
    phi: f64,
    reference: &[C64],
    delta_bar: f64,
    gamma_bar: f64,
) -> Result<ParametricCheck> {
    if !(0.0..FRAC_PI_2).contains(&delta_bar) {
        return Err(Error::Config(format!(
            "delta_bar must lie in [0, pi/2), got {delta_bar}"
        )));
    }
    if !(gamma_bar > 0.0 && gamma_bar < 1.0) {
        return Err(Error::Config(format!("gamma_bar must lie in (0, 1), got {gamma_bar}")));
    }
    let rot = C64::from_polar(1.0, phi);
    let lhs = reference.iter().map(|s| (rot * s).re).fold(f64::NEG_INFINITY, f64::max);
    let lambda2 = algebraic_connectivity(y, phi).lambda2;
    let rhs = 0.5 * (1.0 + delta_bar.cos()) * (1.0 - gamma_bar).powi(2) * lambda2;
    Ok(ParametricCheck {
        pass: lhs < rhs,
        lhs,
        rhs,
        margin: rhs - lhs,
        lambda2,
        delta_bar,
        gamma_bar,
    })
}

/// Largest pairwise phase spread and amplitude-ratio deviation of `φ₁`.
pub fn posterior_bounds(phi1: &DVector<C64>) -> (f64, f64) {
    let n = phi1.len();
    let mut delta: f64 = 0.0;
    let mut gamma: f64 = 0.0;
    for k in 0..n {
        for l in 0..n {
            let d = (phi1[k] / phi1[l]).arg();
            delta = delta.max(d.abs());
            let r = phi1[k].norm() / phi1[l].norm();
            gamma = gamma.max((r - 1.0).abs());
        }
    }
    (delta.min(PI), gamma)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CertifyOptions {
    pub entry_tol: f64,
    /// Phase-spread bound; `None` takes the value observed in `φ₁`.
    pub delta_bar: Option<f64>,
    /// Amplitude-ratio bound; `None` takes the value observed in `φ₁`.
    pub gamma_bar: Option<f64>,
}

impl Default for CertifyOptions {
    fn default() -> Self {
        Self {
            entry_tol: DEFAULT_ENTRY_TOL,
            delta_bar: None,
            gamma_bar: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Condition2 {
    /// Certified: inequality holds and `φ₁` respects the assumed bounds.
    pub pass: bool,
    /// `None` when the assumed bounds are outside the admissible range.
    pub inequality: Option<ParametricCheck>,
    pub observed_delta: f64,
    pub observed_gamma: f64,
    pub posterior_pass: bool,
    pub note: Option<String>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SyncVerdict {
    pub condition1: SpectralCheck,
    pub condition2: Condition2,
    /// Predicted synchronous complex frequency `λ₁`.
    pub omega_sync: C64,
    /// `Re λ₁ > 0` means voltages grow exponentially while synchronized.
    pub growing: bool,
}

/// Evaluates both conditions for a fast system.
pub fn certify(y: &ReducedNetwork, sys: &FastSystem, spec: &Spectrum, opts: &CertifyOptions) -> SyncVerdict {
    let condition1 = check_spectral_condition(spec, opts.entry_tol);
    let (observed_delta, observed_gamma) = posterior_bounds(&spec.phi1);
    let delta_bar = opts.delta_bar.unwrap_or(observed_delta);
    let gamma_bar = opts.gamma_bar.unwrap_or(observed_gamma).max(f64::MIN_POSITIVE);
    let posterior_pass = observed_delta <= delta_bar && observed_gamma <= gamma_bar;
    let (inequality, note) =
        match check_parametric_condition(y, sys.phi, &sys.effective_reference, delta_bar, gamma_bar) {
            Ok(c) => (Some(c), None),
            Err(e) => (None, Some(e.to_string())),
        };
    let pass = posterior_pass && inequality.as_ref().is_some_and(|c| c.pass);
    SyncVerdict {
        condition1,
        condition2: Condition2 {
            pass,
            inequality,
            observed_delta,
            observed_gamma,
            posterior_pass,
            note,
        },
        omega_sync: spec.lambda1(),
        growing: spec.lambda1().re > 0.0,
    }
}

/// Dominant modal component of an initial state.
#[derive(Debug, Clone, PartialEq)]
pub struct ModalPrediction {
    /// `ψ₁ᵀv₀`.
    pub z0: C64,
    pub lambda1: C64,
    pub phi1: DVector<C64>,
    /// No dominant component: the state decays to zero.
    pub degenerate: bool,
}

impl ModalPrediction {
    /// `φ₁ z₀ e^{λ₁t}`.
    pub fn response(&self, t: f64) -> DVector<C64> {
        &self.phi1 * (self.z0 * (self.lambda1 * t).exp())
    }
}

pub fn modal_prediction(spec: &Spectrum, v0: &DVector<C64>) -> ModalPrediction {
    let projection = spec.phi1.dot(v0);
    let z0 = projection / spec.phi1.dot(&spec.phi1);
    ModalPrediction {
        z0,
        lambda1: spec.lambda1(),
        phi1: spec.phi1.clone(),
        degenerate: projection.norm() < 1e-12 * v0.norm(),
    }
}

/// Removes the dominant component: `v − φ₁(φ₁ᵀv)/(φ₁ᵀφ₁)`.
pub fn remove_dominant_component(spec: &Spectrum, v: &DVector<C64>) -> DVector<C64> {
    let z0 = spec.phi1.dot(v) / spec.phi1.dot(&spec.phi1);
    v - &spec.phi1 * z0
}

/// `½‖(I − φ₁φ₁ᴴ/‖φ₁‖²)v‖²`.
pub fn eigenspace_distance(v: &DVector<C64>, phi1: &DVector<C64>) -> f64 {
    let coeff = phi1.dotc(v) / C64::new(phi1.norm_squared(), 0.0);
    0.5 * (v - phi1 * coeff).norm_squared()
}
