//! dVOC vector fields and the complex droop law.

use crate::angle::{angle_from_voltage, ComplexAngle, ComplexFrequency, ComplexVoltage};
use crate::{Error, Result, C64};

/// Controller gains shared by every dVOC variant.
///
/// `eta` is the synchronization gain in rad/s per unit of normalized power;
/// scenario files give it per unit and scale by `omega0` (see
/// [`DvocParams::from_per_unit`]).
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DvocParams {
    pub eta: f64,
    pub alpha: f64,
    pub tau: f64,
    pub phi: f64,
    pub omega0: f64,
}

impl DvocParams {
    pub fn new(eta: f64, alpha: f64, tau: f64, phi: f64, omega0: f64) -> Result<Self> {
        let p = Self {
            eta,
            alpha,
            tau,
            phi,
            omega0,
        };
        p.validate()?;
        Ok(p)
    }

    /// Gains with `eta` given per unit of `omega0`.
    pub fn from_per_unit(eta_pu: f64, alpha: f64, tau: f64, phi: f64, omega0: f64) -> Result<Self> {
        Self::new(eta_pu * omega0, alpha, tau, phi, omega0)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.eta > 0.0 && self.eta.is_finite()) {
            return Err(Error::Config(format!("eta must be positive, got {}", self.eta)));
        }
        if !(self.alpha >= 0.0 && self.alpha.is_finite()) {
            return Err(Error::Config(format!("alpha must be non-negative, got {}", self.alpha)));
        }
        if !(self.tau > 0.0 && self.tau.is_finite()) {
            return Err(Error::Config(format!("tau must be positive, got {}", self.tau)));
        }
        if !(0.0..=std::f64::consts::FRAC_PI_2).contains(&self.phi) {
            return Err(Error::Config(format!("phi must lie in [0, pi/2], got {}", self.phi)));
        }
        if !(self.omega0 > 0.0 && self.omega0.is_finite()) {
            return Err(Error::Config(format!("omega0 must be positive, got {}", self.omega0)));
        }
        Ok(())
    }

    /// `e^{jφ}`.
    pub fn rotation(&self) -> C64 {
        C64::from_polar(1.0, self.phi)
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Setpoints {
    pub p_star: f64,
    pub q_star: f64,
    pub v_star: f64,
}

impl Setpoints {
    pub fn new(p_star: f64, q_star: f64, v_star: f64) -> Result<Self> {
        if !(v_star > 0.0 && v_star.is_finite()) {
            return Err(Error::Config(format!("v_star must be positive, got {v_star}")));
        }
        if !(p_star.is_finite() && q_star.is_finite()) {
            return Err(Error::Config("power setpoints must be finite".into()));
        }
        Ok(Self { p_star, q_star, v_star })
    }

    /// `ς̄* = (p* − jq*)/v*²`.
    pub fn sigma_conj_star(&self) -> C64 {
        C64::new(self.p_star, -self.q_star) / (self.v_star * self.v_star)
    }

    /// `u* = ln v*`.
    pub fn u_star(&self) -> f64 {
        self.v_star.ln()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Variant {
    /// Amplitude term `ηα(v* − |v|)/v* · v`.
    Classic,
    /// Linear core only.
    Core,
    /// Amplitude term `ηα(u* − ln|v|) · v`.
    Log,
    /// Amplitude term `ηα(u* − u_f) · v` with a first-order filter on `ln|v|`.
    Filtered,
}

#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct ConverterState {
    pub v: ComplexVoltage,
    pub u_f: f64,
}

/// Right-hand side `(v̇, u̇_f)` of one converter.
///
/// `sigma_star` is the (possibly shifted) conjugate normalized power setpoint
/// that multiplies `v`; pass `setpoints.sigma_conj_star()` for an isolated
/// converter.
pub fn converter_rhs_with(
    variant: Variant,
    state: ConverterState,
    i_o: C64,
    params: &DvocParams,
    sigma_star: C64,
    u_star: f64,
) -> Result<(C64, f64)> {
    let v = state.v;
    let core = C64::new(0.0, params.omega0) * v + params.eta * params.rotation() * (sigma_star * v - i_o);
    let modulus = v.norm();
    let needs_modulus = !matches!(variant, Variant::Core);
    if needs_modulus && (modulus == 0.0 || !modulus.is_finite()) {
        return Err(Error::Domain("amplitude feedback needs a nonzero voltage".into()));
    }
    let ea = params.eta * params.alpha;
    Ok(match variant {
        Variant::Core => (core, 0.0),
        Variant::Classic => {
            let v_star = u_star.exp();
            (core + ea * (v_star - modulus) / v_star * v, 0.0)
        }
        Variant::Log => (core + ea * (u_star - modulus.ln()) * v, 0.0),
        Variant::Filtered => (
            core + ea * (u_star - state.u_f) * v,
            (modulus.ln() - state.u_f) / params.tau,
        ),
    })
}

pub fn converter_rhs(
    variant: Variant,
    state: ConverterState,
    i_o: C64,
    params: &DvocParams,
    setpoints: &Setpoints,
) -> Result<(C64, f64)> {
    converter_rhs_with(
        variant,
        state,
        i_o,
        params,
        setpoints.sigma_conj_star(),
        setpoints.u_star(),
    )
}

/// `ϑ̇ = jω₀ + ηe^{jφ}(ς̄* − ς̄)`.
pub fn complex_droop_rhs(
    _angle: ComplexAngle,
    sigma_conj: C64,
    params: &DvocParams,
    setpoints: &Setpoints,
) -> ComplexFrequency {
    let z = C64::new(0.0, params.omega0) + params.eta * params.rotation() * (setpoints.sigma_conj_star() - sigma_conj);
    ComplexFrequency::from_complex(z)
}

/// `|v̇_core/v − ϑ̇_droop|` with `ς̄ = i_o/v`.
pub fn verify_droop_equivalence(
    v: ComplexVoltage,
    i_o: C64,
    params: &DvocParams,
    setpoints: &Setpoints,
) -> Result<f64> {
    let angle = angle_from_voltage(v, None)?;
    let state = ConverterState { v, u_f: 0.0 };
    let (v_dot, _) = converter_rhs(Variant::Core, state, i_o, params, setpoints)?;
    let droop = complex_droop_rhs(angle, i_o / v, params, setpoints);
    Ok((v_dot / v - droop.as_complex()).norm())
}
