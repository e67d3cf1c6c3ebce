//! Complex angle `ϑ = ln v + jθ` and complex frequency `ϖ = dϑ/dt = ε + jω`.

use std::f64::consts::PI;

use crate::{Error, Result, C64};

/// Stationary-frame voltage phasor in per unit.
pub type ComplexVoltage = C64;

/// Logarithmic amplitude `u = ln v` and continuous (unwrapped) phase `theta`.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct ComplexAngle {
    pub u: f64,
    pub theta: f64,
}

impl ComplexAngle {
    pub fn new(u: f64, theta: f64) -> Self {
        Self { u, theta }
    }

    pub fn as_complex(self) -> C64 {
        C64::new(self.u, self.theta)
    }

    pub fn from_complex(z: C64) -> Self {
        Self { u: z.re, theta: z.im }
    }
}

/// Rate of change of voltage `eps` (1/s) and angular frequency `omega` (rad/s).
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct ComplexFrequency {
    pub eps: f64,
    pub omega: f64,
}

impl ComplexFrequency {
    pub fn new(eps: f64, omega: f64) -> Self {
        Self { eps, omega }
    }

    pub fn as_complex(self) -> C64 {
        C64::new(self.eps, self.omega)
    }

    pub fn from_complex(z: C64) -> Self {
        Self { eps: z.re, omega: z.im }
    }
}

/// Picks the branch of `principal + 2πk` closest to `reference`.
pub fn unwrap_near(principal: f64, reference: f64) -> f64 {
    let turns = ((reference - principal) / (2.0 * PI)).round();
    principal + 2.0 * PI * turns
}

/// Converts a voltage phasor to its complex angle.
///
/// With `prev` the phase is placed on the branch nearest to `prev.theta`, so
/// a rotating phasor yields a continuous, unbounded phase.
pub fn angle_from_voltage(v: ComplexVoltage, prev: Option<ComplexAngle>) -> Result<ComplexAngle> {
    let modulus = v.norm();
    if modulus == 0.0 || !modulus.is_finite() {
        return Err(Error::ZeroVoltage { index: 0 });
    }
    let principal = v.im.atan2(v.re);
    let theta = match prev {
        Some(p) => unwrap_near(principal, p.theta),
        None => principal,
    };
    Ok(ComplexAngle { u: modulus.ln(), theta })
}

pub fn voltage_from_angle(angle: ComplexAngle) -> ComplexVoltage {
    C64::from_polar(angle.u.exp(), angle.theta)
}

/// Unwrapped complex angles of a sampled voltage sequence.
pub fn unwrap_angles(samples: &[ComplexVoltage]) -> Result<Vec<ComplexAngle>> {
    let mut out = Vec::with_capacity(samples.len());
    let mut prev = None;
    for (index, &v) in samples.iter().enumerate() {
        let a = angle_from_voltage(v, prev).map_err(|_| Error::ZeroVoltage { index })?;
        out.push(a);
        prev = Some(a);
    }
    Ok(out)
}

/// Estimates `ϖ = d(ln v)/dt` for uniformly sampled voltages.
///
/// Interior samples use second-order central differences of the unwrapped
/// complex angle; the endpoints use second-order one-sided stencils.
pub fn estimate_complex_frequency(samples: &[ComplexVoltage], dt: f64) -> Result<Vec<ComplexFrequency>> {
    if samples.len() < 3 {
        return Err(Error::Config(format!(
            "complex-frequency estimation needs at least 3 samples, got {}",
            samples.len()
        )));
    }
    if !(dt > 0.0 && dt.is_finite()) {
        return Err(Error::Config(format!("sample interval must be positive, got {dt}")));
    }
    let z: Vec<C64> = unwrap_angles(samples)?
        .into_iter()
        .map(ComplexAngle::as_complex)
        .collect();
    let n = z.len();
    let h2 = 2.0 * dt;
    let mut out = Vec::with_capacity(n);
    out.push(ComplexFrequency::from_complex((-3.0 * z[0] + 4.0 * z[1] - z[2]) / h2));
    for i in 1..n - 1 {
        out.push(ComplexFrequency::from_complex((z[i + 1] - z[i - 1]) / h2));
    }
    out.push(ComplexFrequency::from_complex(
        (3.0 * z[n - 1] - 4.0 * z[n - 2] + z[n - 3]) / h2,
    ));
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::f64::consts::{E, FRAC_PI_2, FRAC_PI_4};

    #[test]
    fn unit_voltage_has_zero_angle() {
        let a = angle_from_voltage(C64::new(1.0, 0.0), None).unwrap();
        assert_eq!(a, ComplexAngle::new(0.0, 0.0));
    }

    #[test]
    fn log_amplitude_and_phase() {
        let a = angle_from_voltage(C64::from_polar(E, FRAC_PI_4), None).unwrap();
        assert!((a.u - 1.0).abs() < 1e-15);
        assert!((a.theta - FRAC_PI_4).abs() < 1e-15);
    }

    #[test]
    fn unwrap_continues_past_pi() {
        let prev = ComplexAngle::new(0.0, 181f64.to_radians());
        let a = angle_from_voltage(C64::from_polar(1.0, 179f64.to_radians()), Some(prev)).unwrap();
        assert!((a.theta - 179f64.to_radians()).abs() < 1e-12);
        let a = angle_from_voltage(C64::from_polar(1.0, -179f64.to_radians()), Some(prev)).unwrap();
        assert!((a.theta - 181f64.to_radians()).abs() < 1e-12);
    }

    #[test]
    fn zero_voltage_is_rejected() {
        assert_eq!(
            angle_from_voltage(C64::new(0.0, 0.0), None),
            Err(Error::ZeroVoltage { index: 0 })
        );
        let err = estimate_complex_frequency(&[C64::new(1.0, 0.0), C64::new(0.0, 0.0), C64::new(1.0, 0.0)], 1e-3);
        assert_eq!(err, Err(Error::ZeroVoltage { index: 1 }));
    }

    #[test]
    fn voltage_from_angle_examples() {
        let v = voltage_from_angle(ComplexAngle::new(0.0, 0.0));
        assert_eq!(v, C64::new(1.0, 0.0));
        let v = voltage_from_angle(ComplexAngle::new(0.0, FRAC_PI_2));
        assert!((v - C64::new(0.0, 1.0)).norm() < 1e-15);
        let v = voltage_from_angle(ComplexAngle::new(1.0, FRAC_PI_4));
        assert!((v - C64::from_polar(E, FRAC_PI_4)).norm() < 1e-15);
    }

    #[test]
    fn pure_rotation_frequency() {
        let dt = 1e-4;
        let w = 100.0 * PI;
        let v: Vec<C64> = (0..200).map(|i| C64::from_polar(1.0, w * i as f64 * dt)).collect();
        for f in estimate_complex_frequency(&v, dt).unwrap() {
            assert!((f.as_complex() - C64::new(0.0, w)).norm() < 1e-3);
        }
    }

    #[test]
    fn exponential_rocov_recovered() {
        let dt = 1e-4;
        let s = C64::new(0.5, 314.0);
        let v: Vec<C64> = (0..100).map(|i| (s * (i as f64 * dt)).exp()).collect();
        for f in estimate_complex_frequency(&v, dt).unwrap() {
            assert!((f.eps - 0.5).abs() < 1e-3);
            assert!((f.omega - 314.0).abs() < 1e-3);
        }
    }

    #[test]
    fn constant_voltage_has_zero_frequency() {
        let v = vec![C64::new(1.0, 0.0); 5];
        for f in estimate_complex_frequency(&v, 1e-3).unwrap() {
            assert_eq!(f.as_complex(), C64::new(0.0, 0.0));
        }
    }

    #[test]
    fn too_few_samples() {
        assert!(matches!(
            estimate_complex_frequency(&[C64::new(1.0, 0.0); 2], 1e-3),
            Err(Error::Config(_))
        ));
    }

    fn smooth_signal(t: f64) -> C64 {
        C64::from_polar(1.0 + 0.3 * (5.0 * t).sin(), 50.0 * t + 0.2 * (3.0 * t).sin())
    }

    fn smooth_derivative(t: f64) -> C64 {
        let amp = 1.0 + 0.3 * (5.0 * t).sin();
        C64::new(1.5 * (5.0 * t).cos() / amp, 50.0 + 0.6 * (3.0 * t).cos())
    }

    fn interior_error(dt: f64) -> f64 {
        let n = (1.0 / dt).round() as usize + 1;
        let v: Vec<C64> = (0..n).map(|i| smooth_signal(i as f64 * dt)).collect();
        let est = estimate_complex_frequency(&v, dt).unwrap();
        (1..n - 1)
            .map(|i| (est[i].as_complex() - smooth_derivative(i as f64 * dt)).norm())
            .fold(0.0, f64::max)
    }

    #[test]
    fn central_difference_is_second_order() {
        let e1 = interior_error(1e-2);
        let e2 = interior_error(5e-3);
        assert!(e1 / e2 >= 3.5, "ratio {}", e1 / e2);
    }

    mod props {
        use super::*;
        use proptest::prelude::*;

        proptest! {
            #[test]
            fn exp_roundtrip(log_mag in -13.8f64..13.8, phase in -PI..PI) {
                let v = C64::from_polar(log_mag.exp(), phase);
                let back = voltage_from_angle(angle_from_voltage(v, None).unwrap());
                prop_assert!((back - v).norm() <= 1e-12 * v.norm());
            }

            #[test]
            fn unwrap_hint_preserves_theta(u in -3.0f64..3.0, theta in -50.0f64..50.0) {
                let a = ComplexAngle::new(u, theta);
                let hint = ComplexAngle::new(0.0, theta + 0.4);
                let back = angle_from_voltage(voltage_from_angle(a), Some(hint)).unwrap();
                prop_assert!((back.theta - theta).abs() < 1e-12);
                prop_assert!((back.u - u).abs() < 1e-12);
            }

            #[test]
            fn estimator_scale_invariant(kr in 0.1f64..10.0, kp in -PI..PI) {
                let k = C64::from_polar(kr, kp);
                let dt = 1e-3;
                let v: Vec<C64> = (0..40).map(|i| smooth_signal(i as f64 * dt)).collect();
                let kv: Vec<C64> = v.iter().map(|x| k * x).collect();
                let a = estimate_complex_frequency(&v, dt).unwrap();
                let b = estimate_complex_frequency(&kv, dt).unwrap();
                for (x, y) in a.iter().zip(&b) {
                    prop_assert!((x.as_complex() - y.as_complex()).norm() < 1e-9);
                }
            }
        }
    }
}
