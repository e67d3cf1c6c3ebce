//! Linearly approximated slow system in real coordinates.
//!
//! With `G′ + jB′ = e^{jφ}Y` and `σ′* + jρ′* = e^{jφ}ς̄*` the model reads
//!
//! ```text
//! u̇   = ησ′* − ηG′u + ηB′θ + ηα(u* − u_f)
//! θ̇   = ω₀𝟙 + ηρ′* − ηB′u − ηG′θ
//! τu̇_f = u − u_f
//! ```

use nalgebra::{DMatrix, DVector};

use crate::controllers::{DvocParams, Setpoints};
use crate::fast::uniform_params;
use crate::linalg::{neumaier_sum, real_eigenvalues, sort_by_real_desc, symmetric_eigenvalues, zero_sum_basis};
use crate::network::ReducedNetwork;
use crate::{Error, Result, C64};

#[derive(Debug, Clone, PartialEq)]
pub struct SlowSystem {
    pub gp: DMatrix<f64>,
    pub bp: DMatrix<f64>,
    /// `Re(e^{jφ}(ς̄* + shift))`.
    pub sigma_star: DVector<f64>,
    /// `Im(e^{jφ}(ς̄* + shift))`.
    pub rho_star: DVector<f64>,
    pub u_star: DVector<f64>,
    pub eta: f64,
    pub alpha: f64,
    pub tau: f64,
    pub phi: f64,
    pub omega0: f64,
    /// Smallest eigenvalue of `G′`.
    pub gp_min_eigenvalue: f64,
    pub warnings: Vec<String>,
}

/// Real-coordinate derivative `(u̇, θ̇, u̇_f)`.
pub type SlowDerivative = (DVector<f64>, DVector<f64>, DVector<f64>);

impl SlowSystem {
    pub fn len(&self) -> usize {
        self.gp.nrows()
    }

    pub fn is_empty(&self) -> bool {
        self.gp.nrows() == 0
    }

    /// True when `G′` is positive semidefinite, so `W` certifies stability.
    pub fn has_lyapunov_certificate(&self) -> bool {
        self.gp_min_eigenvalue >= -PSD_TOL
    }

    /// Right-hand side; `forcing` adds `(Re f, Im f)` to `(u̇, θ̇)`.
    pub fn derivative(
        &self,
        u: &DVector<f64>,
        theta: &DVector<f64>,
        u_f: &DVector<f64>,
        forcing: Option<&[C64]>,
    ) -> SlowDerivative {
        let eta = self.eta;
        let mut du = (&self.sigma_star - &self.gp * u + &self.bp * theta + (&self.u_star - u_f) * self.alpha) * eta;
        let mut dth = (&self.rho_star - &self.bp * u - &self.gp * theta) * eta;
        dth.add_scalar_mut(self.omega0);
        if let Some(f) = forcing {
            for k in 0..f.len() {
                du[k] += f[k].re;
                dth[k] += f[k].im;
            }
        }
        let duf = (u - u_f) / self.tau;
        (du, dth, duf)
    }
}

const PSD_TOL: f64 = 1e-10;

pub fn build_slow_system(y: &ReducedNetwork, params: &[DvocParams], setpoints: &[Setpoints]) -> Result<SlowSystem> {
    let p = uniform_params(params)?;
    let n = y.len();
    if params.len() != n || setpoints.len() != n {
        return Err(Error::Config(format!(
            "expected {n} parameter sets and setpoints, got {} and {}",
            params.len(),
            setpoints.len()
        )));
    }
    if params.iter().any(|q| q.alpha != p.alpha || q.tau != p.tau) {
        return Err(Error::Unsupported(
            "the slow system requires uniform alpha and tau".into(),
        ));
    }
    let rot = C64::from_polar(1.0, p.phi);
    let rotated = y.y().map(|e| rot * e);
    let gp = rotated.map(|e| e.re);
    let bp = rotated.map(|e| e.im);
    let reference: Vec<C64> = (0..n)
        .map(|k| rot * (setpoints[k].sigma_conj_star() + y.setpoint_shift()[k]))
        .collect();
    let gp_min_eigenvalue = symmetric_eigenvalues(&gp).first().copied().unwrap_or(0.0);
    let mut warnings = Vec::new();
    if gp_min_eigenvalue < -PSD_TOL {
        warnings.push(format!(
            "Lyapunov certificate unavailable for this phi/network: G' has eigenvalue {gp_min_eigenvalue:.3e}"
        ));
    }
    Ok(SlowSystem {
        gp,
        bp,
        sigma_star: DVector::from_iterator(n, reference.iter().map(|z| z.re)),
        rho_star: DVector::from_iterator(n, reference.iter().map(|z| z.im)),
        u_star: DVector::from_iterator(n, setpoints.iter().map(|s| s.u_star())),
        eta: p.eta,
        alpha: p.alpha,
        tau: p.tau,
        phi: p.phi,
        omega0: p.omega0,
        gp_min_eigenvalue,
        warnings,
    })
}

/// Center of angle `θ₀ = 𝟙ᵀθ/N` and deviations `δ = θ − 𝟙θ₀`.
pub fn to_center_of_angle(theta: &[f64]) -> (f64, Vec<f64>) {
    if theta.is_empty() {
        return (0.0, Vec::new());
    }
    let n = theta.len() as f64;
    let theta0 = neumaier_sum(theta.iter().copied()) / n;
    let mut delta: Vec<f64> = theta.iter().map(|t| t - theta0).collect();
    let residual = neumaier_sum(delta.iter().copied()) / n;
    for d in &mut delta {
        *d -= residual;
    }
    (theta0, delta)
}

#[derive(Debug, Clone, PartialEq)]
pub struct Equilibrium {
    pub u_s: DVector<f64>,
    pub delta_s: DVector<f64>,
    /// `θ̇₀ = ω₀ + η·mean(ρ′*)`.
    pub theta0_rate: f64,
    /// Residual norm of the stacked least-squares system.
    pub residual: f64,
    /// Smallest singular value of the stacked matrix.
    pub sigma_min: f64,
}

/// Least-squares solve of
///
/// ```text
/// [G′+αI  −B′] [u_s]   [σ′* + αu*          ]
/// [ B′     G′] [δ_s] = [ρ′* − 𝟙·mean(ρ′*)  ]
/// [ 0ᵀ     𝟙ᵀ]         [0                  ]
/// ```
pub fn solve_equilibrium(sys: &SlowSystem) -> Result<Equilibrium> {
    let n = sys.len();
    let mut m = DMatrix::zeros(2 * n + 1, 2 * n);
    m.view_mut((0, 0), (n, n))
        .copy_from(&(&sys.gp + DMatrix::identity(n, n) * sys.alpha));
    m.view_mut((0, n), (n, n)).copy_from(&(-&sys.bp));
    m.view_mut((n, 0), (n, n)).copy_from(&sys.bp);
    m.view_mut((n, n), (n, n)).copy_from(&sys.gp);
    for k in 0..n {
        m[(2 * n, n + k)] = 1.0;
    }
    let mean_rho = neumaier_sum(sys.rho_star.iter().copied()) / n as f64;
    let mut b = DVector::zeros(2 * n + 1);
    for k in 0..n {
        b[k] = sys.sigma_star[k] + sys.alpha * sys.u_star[k];
        b[n + k] = sys.rho_star[k] - mean_rho;
    }
    let svd = m.clone().svd(true, true);
    let sigma_min = svd.singular_values.min();
    let sigma_max = svd.singular_values.max();
    if sigma_min <= 1e-8 * sigma_max.max(1.0) {
        let cause = if sys.alpha == 0.0 {
            "voltage block G'+alpha*I is singular because alpha = 0"
        } else {
            "angle block is singular; the network is disconnected"
        };
        return Err(Error::RankDeficient(format!(
            "{cause} (smallest singular value {sigma_min:.3e})"
        )));
    }
    let x = svd
        .solve(&b, 0.0)
        .map_err(|e| Error::Numerical(format!("least-squares solve failed: {e}")))?;
    let residual = (&m * &x - &b).norm();
    let scale = b.norm().max(1.0);
    if residual > 1e-10 * scale {
        return Err(Error::Numerical(format!(
            "equilibrium residual {residual:.3e} exceeds tolerance"
        )));
    }
    Ok(Equilibrium {
        u_s: x.rows(0, n).into_owned(),
        delta_s: x.rows(n, n).into_owned(),
        theta0_rate: steady_state_frequency(sys),
        residual,
        sigma_min,
    })
}

/// `ω₀ + η𝟙ᵀρ′*/N`.
pub fn steady_state_frequency(sys: &SlowSystem) -> f64 {
    let n = sys.len().max(1) as f64;
    sys.omega0 + sys.eta * neumaier_sum(sys.rho_star.iter().copied()) / n
}

/// Deviation `(ũ, δ̃, ũ_f)` from the equilibrium.
#[derive(Debug, Clone, PartialEq)]
pub struct ErrorState {
    pub u: DVector<f64>,
    pub delta: DVector<f64>,
    pub u_f: DVector<f64>,
}

impl ErrorState {
    /// Error coordinates of a real-coordinate state; `θ` is moved to COA.
    pub fn from_state(eq: &Equilibrium, u: &[f64], theta: &[f64], u_f: &[f64]) -> Self {
        let (_, delta) = to_center_of_angle(theta);
        Self {
            u: DVector::from_column_slice(u) - &eq.u_s,
            delta: DVector::from_vec(delta) - &eq.delta_s,
            u_f: DVector::from_column_slice(u_f) - &eq.u_s,
        }
    }

    pub fn stacked(&self) -> DVector<f64> {
        let n = self.u.len();
        let mut x = DVector::zeros(3 * n);
        x.rows_mut(0, n).copy_from(&self.u);
        x.rows_mut(n, n).copy_from(&self.delta);
        x.rows_mut(2 * n, n).copy_from(&self.u_f);
        x
    }
}

/// `W = ½|ũ|² + ½|δ̃|² + ½ηατ|ũ_f|²`.
pub fn lyapunov_w(sys: &SlowSystem, e: &ErrorState) -> f64 {
    0.5 * e.u.norm_squared() + 0.5 * e.delta.norm_squared() + 0.5 * sys.eta * sys.alpha * sys.tau * e.u_f.norm_squared()
}

/// `Ẇ = −ηũᵀG′ũ − ηδ̃ᵀG′δ̃ − ηα|ũ_f|²`.
pub fn lyapunov_w_dot(sys: &SlowSystem, e: &ErrorState) -> f64 {
    let quad = |x: &DVector<f64>| x.dot(&(&sys.gp * x));
    -sys.eta * quad(&e.u) - sys.eta * quad(&e.delta) - sys.eta * sys.alpha * e.u_f.norm_squared()
}

#[derive(Debug, Clone, PartialEq)]
pub struct LyapunovReport {
    pub w: Vec<f64>,
    pub w_dot: Vec<f64>,
    /// Largest increase between consecutive samples.
    pub max_increase: f64,
    pub monotone: bool,
}

pub const W_SLACK: f64 = 1e-12;

pub fn lyapunov_w_check(sys: &SlowSystem, trajectory: &[ErrorState]) -> LyapunovReport {
    let w: Vec<f64> = trajectory.iter().map(|e| lyapunov_w(sys, e)).collect();
    let w_dot = trajectory.iter().map(|e| lyapunov_w_dot(sys, e)).collect();
    let max_increase = w.windows(2).map(|p| p[1] - p[0]).fold(f64::NEG_INFINITY, f64::max);
    LyapunovReport {
        monotone: w.windows(2).all(|p| p[1] <= p[0] + W_SLACK),
        max_increase: if w.len() < 2 { 0.0 } else { max_increase },
        w,
        w_dot,
    }
}

/// `3N × 3N` error-dynamics matrix acting on `(ũ, δ̃, ũ_f)`.
pub fn error_matrix(sys: &SlowSystem) -> DMatrix<f64> {
    let n = sys.len();
    let eta = sys.eta;
    let id = DMatrix::<f64>::identity(n, n);
    let mut m = DMatrix::zeros(3 * n, 3 * n);
    m.view_mut((0, 0), (n, n)).copy_from(&(&sys.gp * -eta));
    m.view_mut((0, n), (n, n)).copy_from(&(&sys.bp * eta));
    m.view_mut((0, 2 * n), (n, n)).copy_from(&(&id * (-eta * sys.alpha)));
    m.view_mut((n, 0), (n, n)).copy_from(&(&sys.bp * -eta));
    m.view_mut((n, n), (n, n)).copy_from(&(&sys.gp * -eta));
    m.view_mut((2 * n, 0), (n, n)).copy_from(&(&id / sys.tau));
    m.view_mut((2 * n, 2 * n), (n, n)).copy_from(&(&id * (-1.0 / sys.tau)));
    m
}

#[derive(Debug, Clone, PartialEq)]
pub struct ErrorSpectrum {
    /// Eigenvalues on the zero-sum subspace of `δ̃`, descending real part.
    pub eigenvalues: Vec<C64>,
    pub max_re: f64,
    pub stable: bool,
}

pub const ERROR_SPECTRUM_TOL: f64 = 1e-10;

/// Spectrum of the error dynamics with the common `δ̃` shift removed.
pub fn error_spectrum(sys: &SlowSystem) -> Result<ErrorSpectrum> {
    let n = sys.len();
    let m = error_matrix(sys);
    let q = zero_sum_basis(n);
    let dim = 3 * n - 1;
    let mut p = DMatrix::zeros(3 * n, dim);
    p.view_mut((0, 0), (n, n)).copy_from(&DMatrix::identity(n, n));
    p.view_mut((n, n), (n, n - 1)).copy_from(&q);
    p.view_mut((2 * n, 2 * n - 1), (n, n))
        .copy_from(&DMatrix::identity(n, n));
    let restricted = p.transpose() * m * p;
    let mut eigenvalues = real_eigenvalues(&restricted)?;
    sort_by_real_desc(&mut eigenvalues);
    let max_re = eigenvalues.first().map_or(f64::NEG_INFINITY, |z| z.re);
    Ok(ErrorSpectrum {
        eigenvalues,
        max_re,
        stable: max_re <= ERROR_SPECTRUM_TOL,
    })
}
