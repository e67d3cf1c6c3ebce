//! Rational transfer functions with frequency-scaled coefficients.
//!
//! Coefficients are stored in the normalized variable `z = s/scale` so
//! polynomials whose roots sit near `|s| ≈ scale` stay well conditioned.

use nalgebra::Matrix2;

use super::poly::Poly;
use crate::{Error, Result, C64};

/// Relative distance (in `z`) under which a pole and a zero cancel.
pub const CANCEL_TOL: f64 = 1e-7;

#[derive(Debug, Clone, PartialEq)]
pub struct RationalTF {
    pub num: Poly,
    pub den: Poly,
    pub scale: f64,
}

impl RationalTF {
    pub fn new(num: Poly, den: Poly, scale: f64) -> Result<Self> {
        if den.is_zero() {
            return Err(Error::Degenerate("zero denominator".into()));
        }
        if !(scale.is_finite() && scale > 0.0) {
            return Err(Error::Config(format!("frequency scale must be positive, got {scale}")));
        }
        let all_finite = num.c.iter().chain(&den.c).all(|c| c.re.is_finite() && c.im.is_finite());
        if !all_finite {
            return Err(Error::Numerical("non-finite transfer function coefficient".into()));
        }
        Ok(Self { num, den, scale })
    }

    /// From ascending coefficients in `s`.
    pub fn from_s_coeffs(num: &[C64], den: &[C64], scale: f64) -> Result<Self> {
        let n = Poly::new(num.to_vec()).compose_scale(scale);
        let d = Poly::new(den.to_vec()).compose_scale(scale);
        Self::new(n, d, scale)
    }

    pub fn constant(a: C64, scale: f64) -> Self {
        Self {
            num: Poly::constant(a),
            den: Poly::one(),
            scale,
        }
    }

    pub fn num_s_coeffs(&self) -> Vec<C64> {
        self.num.compose_scale(1.0 / self.scale).c
    }

    pub fn den_s_coeffs(&self) -> Vec<C64> {
        self.den.compose_scale(1.0 / self.scale).c
    }

    pub fn eval(&self, s: C64) -> C64 {
        let z = s / self.scale;
        self.num.eval(z) / self.den.eval(z)
    }

    pub fn poles(&self) -> Result<Vec<C64>> {
        Ok(self.den.roots()?.into_iter().map(|r| r * self.scale).collect())
    }

    pub fn zeros(&self) -> Result<Vec<C64>> {
        if self.num.is_zero() {
            return Ok(Vec::new());
        }
        Ok(self.num.roots()?.into_iter().map(|r| r * self.scale).collect())
    }

    /// `deg den − deg num`; `None` for the zero function.
    pub fn relative_degree(&self) -> Option<isize> {
        Some(self.den.degree()? as isize - self.num.degree()? as isize)
    }

    pub fn is_real(&self, tol: f64) -> bool {
        let real = |p: &Poly| p.c.iter().all(|c| c.im.abs() <= tol * p.max_abs());
        real(&self.num) && real(&self.den)
    }

    fn same_scale(&self, other: &Self) -> Result<()> {
        if (self.scale - other.scale).abs() > 1e-12 * self.scale {
            return Err(Error::Config(format!(
                "transfer functions on different frequency scales ({} vs {})",
                self.scale, other.scale
            )));
        }
        Ok(())
    }

    pub fn mul(&self, other: &Self) -> Result<Self> {
        self.same_scale(other)?;
        Self::new(self.num.mul(&other.num), self.den.mul(&other.den), self.scale)
    }

    pub fn div(&self, other: &Self) -> Result<Self> {
        self.same_scale(other)?;
        if other.num.is_zero() {
            return Err(Error::Degenerate("division by the zero transfer function".into()));
        }
        Self::new(self.num.mul(&other.den), self.den.mul(&other.num), self.scale)
    }

    pub fn add(&self, other: &Self) -> Result<Self> {
        self.same_scale(other)?;
        Self::new(
            self.num.mul(&other.den).add(&other.num.mul(&self.den)),
            self.den.mul(&other.den),
            self.scale,
        )
    }

    pub fn neg(&self) -> Self {
        Self {
            num: self.num.neg(),
            den: self.den.clone(),
            scale: self.scale,
        }
    }

    /// Cancels pole/zero pairs closer than [`CANCEL_TOL`], trims negligible
    /// leading coefficients and makes the denominator monic.
    pub fn reduced(&self) -> Result<Self> {
        let real = self.is_real(1e-12);
        let num = self.num.trimmed(1e-13);
        let den = self.den.trimmed(1e-13);
        if den.is_zero() {
            return Err(Error::Degenerate("denominator vanished after trimming".into()));
        }
        if num.is_zero() {
            return Self::new(Poly::zero(), Poly::one(), self.scale);
        }
        let mut zeros = num.roots()?;
        let mut poles = den.roots()?;
        let mut i = 0;
        while i < zeros.len() {
            let z = zeros[i];
            let hit = poles
                .iter()
                .enumerate()
                .map(|(j, p)| (j, (p - z).norm()))
                .filter(|&(_, d)| d <= CANCEL_TOL * z.norm().max(1.0))
                .min_by(|a, b| a.1.total_cmp(&b.1));
            match hit {
                Some((j, _)) => {
                    poles.swap_remove(j);
                    zeros.swap_remove(i);
                }
                None => i += 1,
            }
        }
        let lead = num.leading() / den.leading();
        let mut n = Poly::from_roots(&zeros, lead);
        let mut d = Poly::from_roots(&poles, C64::new(1.0, 0.0));
        if real {
            n = Poly::new(n.c.iter().map(|c| C64::new(c.re, 0.0)).collect());
            d = Poly::new(d.c.iter().map(|c| C64::new(c.re, 0.0)).collect());
        }
        Self::new(n, d, self.scale)
    }
}

/// 2×2 matrix of real-coefficient transfer functions.
#[derive(Debug, Clone, PartialEq)]
pub struct TFMatrix2x2 {
    pub entries: [[RationalTF; 2]; 2],
}

impl TFMatrix2x2 {
    pub fn new(entries: [[RationalTF; 2]; 2]) -> Result<Self> {
        for (i, row) in entries.iter().enumerate() {
            for (j, e) in row.iter().enumerate() {
                if !e.is_real(1e-9) {
                    return Err(Error::Config(format!("entry ({i},{j}) has complex coefficients")));
                }
            }
        }
        Ok(Self { entries })
    }

    pub fn eval(&self, s: C64) -> Matrix2<C64> {
        let e = &self.entries;
        Matrix2::new(e[0][0].eval(s), e[0][1].eval(s), e[1][0].eval(s), e[1][1].eval(s))
    }

    pub fn poles(&self) -> Result<Vec<C64>> {
        let mut all = Vec::new();
        for row in &self.entries {
            for e in row {
                all.extend(e.poles()?);
            }
        }
        Ok(all)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::c64;

    #[test]
    fn scaled_storage_roundtrip() {
        let tf = RationalTF::from_s_coeffs(
            &[c64(2.0, 0.0), c64(1.0, 0.0)],
            &[c64(100.0, 0.0), c64(0.0, 3.0), c64(1.0, 0.0)],
            50.0,
        )
        .unwrap();
        let s = c64(3.0, 40.0);
        let direct = (c64(2.0, 0.0) + s) / (c64(100.0, 0.0) + c64(0.0, 3.0) * s + s * s);
        assert!((tf.eval(s) - direct).norm() < 1e-15);
        let back = tf.num_s_coeffs();
        assert!((back[1] - c64(1.0, 0.0)).norm() < 1e-15);
        assert_eq!(tf.relative_degree(), Some(1));
    }

    #[test]
    fn cancellation() {
        let num = Poly::from_roots(&[c64(-1.0, 0.0), c64(0.5, 2.0)], c64(3.0, 0.0));
        let den = Poly::from_roots(&[c64(0.5, 2.0), c64(-2.0, 0.0), c64(0.0, 1.0)], c64(1.0, 0.0));
        let tf = RationalTF::new(num, den, 1.0).unwrap();
        let r = tf.reduced().unwrap();
        assert_eq!(r.num.degree(), Some(1));
        assert_eq!(r.den.degree(), Some(2));
        let s = c64(0.3, -0.7);
        assert!((r.eval(s) - tf.eval(s)).norm() < 1e-12);
    }

    #[test]
    fn arithmetic_matches_pointwise() {
        let a = RationalTF::from_s_coeffs(&[c64(1.0, 0.0)], &[c64(1.0, 0.0), c64(1.0, 0.0)], 1.0).unwrap();
        let b = RationalTF::from_s_coeffs(&[c64(0.0, 1.0), c64(2.0, 0.0)], &[c64(3.0, 0.0)], 1.0).unwrap();
        let s = c64(0.2, 1.1);
        assert!((a.add(&b).unwrap().eval(s) - a.eval(s) - b.eval(s)).norm() < 1e-14);
        assert!((a.mul(&b).unwrap().eval(s) - a.eval(s) * b.eval(s)).norm() < 1e-14);
        assert!((a.div(&b).unwrap().eval(s) - a.eval(s) / b.eval(s)).norm() < 1e-14);
        assert!(a.div(&RationalTF::constant(c64(0.0, 0.0), 1.0)).is_err());
        let other_scale = RationalTF::constant(c64(1.0, 0.0), 2.0);
        assert!(a.add(&other_scale).is_err());
    }

    #[test]
    fn zero_denominator_rejected() {
        assert!(RationalTF::new(Poly::one(), Poly::zero(), 1.0).is_err());
    }
}
