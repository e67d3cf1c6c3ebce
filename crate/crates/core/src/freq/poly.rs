//! Dense complex polynomials in ascending-power form.

use std::f64::consts::PI;

use nalgebra::DMatrix;

use crate::linalg::complex_eigenvalues;
use crate::{Error, Result, C64};

#[derive(Debug, Clone, PartialEq)]
pub struct Poly {
    /// `c[i]` multiplies `z^i`.
    pub c: Vec<C64>,
}

impl Poly {
    pub fn new(c: Vec<C64>) -> Self {
        let mut p = Self { c };
        p.strip_exact_zeros();
        p
    }

    pub fn constant(a: C64) -> Self {
        Self::new(vec![a])
    }

    pub fn zero() -> Self {
        Self { c: Vec::new() }
    }

    pub fn one() -> Self {
        Self::constant(C64::new(1.0, 0.0))
    }

    /// `Π (z − r_i)` times `lead`.
    pub fn from_roots(roots: &[C64], lead: C64) -> Self {
        let mut c = vec![lead];
        for r in roots {
            let mut next = vec![C64::new(0.0, 0.0); c.len() + 1];
            for (i, a) in c.iter().enumerate() {
                next[i + 1] += a;
                next[i] -= a * r;
            }
            c = next;
        }
        Self::new(c)
    }

    fn strip_exact_zeros(&mut self) {
        while self.c.last().is_some_and(|x| x.norm() == 0.0) {
            self.c.pop();
        }
    }

    pub fn is_zero(&self) -> bool {
        self.c.is_empty()
    }

    /// Degree; `None` for the zero polynomial.
    pub fn degree(&self) -> Option<usize> {
        self.c.len().checked_sub(1)
    }

    pub fn leading(&self) -> C64 {
        self.c.last().copied().unwrap_or_default()
    }

    pub fn max_abs(&self) -> f64 {
        self.c.iter().map(|x| x.norm()).fold(0.0, f64::max)
    }

    /// Drops leading coefficients below `rel·max|c|`.
    pub fn trimmed(&self, rel: f64) -> Self {
        let cut = rel * self.max_abs();
        let mut c = self.c.clone();
        while c.last().is_some_and(|x| x.norm() <= cut) {
            c.pop();
        }
        Self { c }
    }

    pub fn eval(&self, z: C64) -> C64 {
        self.c.iter().rev().fold(C64::new(0.0, 0.0), |acc, a| acc * z + a)
    }

    pub fn derivative(&self) -> Self {
        Self::new(self.c.iter().enumerate().skip(1).map(|(i, a)| a * i as f64).collect())
    }

    pub fn add(&self, other: &Self) -> Self {
        let n = self.c.len().max(other.c.len());
        let get = |p: &Self, i: usize| p.c.get(i).copied().unwrap_or_default();
        Self::new((0..n).map(|i| get(self, i) + get(other, i)).collect())
    }

    pub fn neg(&self) -> Self {
        Self::new(self.c.iter().map(|a| -a).collect())
    }

    pub fn sub(&self, other: &Self) -> Self {
        self.add(&other.neg())
    }

    pub fn mul(&self, other: &Self) -> Self {
        if self.is_zero() || other.is_zero() {
            return Self::zero();
        }
        let mut c = vec![C64::new(0.0, 0.0); self.c.len() + other.c.len() - 1];
        for (i, a) in self.c.iter().enumerate() {
            for (j, b) in other.c.iter().enumerate() {
                c[i + j] += a * b;
            }
        }
        Self::new(c)
    }

    pub fn scale(&self, k: C64) -> Self {
        Self::new(self.c.iter().map(|a| a * k).collect())
    }

    /// `p(k·z)`.
    pub fn compose_scale(&self, k: f64) -> Self {
        let mut f = 1.0;
        Self::new(
            self.c
                .iter()
                .map(|a| {
                    let r = a * f;
                    f *= k;
                    r
                })
                .collect(),
        )
    }

    /// Coefficients of a polynomial of degree `≤ bound` sampled on the
    /// circle `|z| = radius`. Nodes are rotated off the real axis so that
    /// real-axis singularities of the sampled factors are never hit exactly.
    pub fn interpolate<F: Fn(C64) -> C64>(f: F, bound: usize, radius: f64) -> Self {
        const PHASE: f64 = 0.3;
        let m = bound + 1;
        let node = |j: usize| PHASE + 2.0 * PI * j as f64 / m as f64;
        let samples: Vec<C64> = (0..m).map(|j| f(C64::from_polar(radius, node(j)))).collect();
        let c = (0..m)
            .map(|k| {
                let s: C64 = samples
                    .iter()
                    .enumerate()
                    .map(|(j, v)| v * C64::from_polar(1.0, -2.0 * PI * ((j * k) % m) as f64 / m as f64))
                    .sum();
                s * C64::from_polar(1.0, -PHASE * k as f64) / (m as f64 * radius.powi(k as i32))
            })
            .collect();
        Self::new(c)
    }

    /// All roots, from the companion matrix and polished by Newton steps.
    pub fn roots(&self) -> Result<Vec<C64>> {
        let d = match self.degree() {
            None => return Err(Error::Domain("roots of the zero polynomial".into())),
            Some(0) => return Ok(Vec::new()),
            Some(d) => d,
        };
        let zeros_at_origin = self.c.iter().take_while(|a| a.norm() == 0.0).count();
        let core = &self.c[zeros_at_origin..];
        let m = d - zeros_at_origin;
        let mut roots = vec![C64::new(0.0, 0.0); zeros_at_origin];
        if m == 0 {
            return Ok(roots);
        }
        let lead = core[m];
        let mut comp = DMatrix::from_element(m, m, C64::new(0.0, 0.0));
        for i in 1..m {
            comp[(i, i - 1)] = C64::new(1.0, 0.0);
        }
        for i in 0..m {
            comp[(i, m - 1)] = -core[i] / lead;
        }
        let core_poly = Poly::new(core.to_vec());
        let deriv = core_poly.derivative();
        for mut r in complex_eigenvalues(&comp)? {
            for _ in 0..3 {
                let dp = deriv.eval(r);
                if dp.norm() == 0.0 {
                    break;
                }
                let step = core_poly.eval(r) / dp;
                let candidate = r - step;
                if !(candidate.re.is_finite() && candidate.im.is_finite())
                    || core_poly.eval(candidate).norm() > core_poly.eval(r).norm()
                {
                    break;
                }
                r = candidate;
            }
            roots.push(r);
        }
        Ok(roots)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::c64;

    #[test]
    fn evaluation_and_arithmetic() {
        let p = Poly::new(vec![c64(1.0, 0.0), c64(0.0, 2.0), c64(3.0, 0.0)]);
        let z = c64(0.5, -1.0);
        assert!((p.eval(z) - (c64(1.0, 0.0) + c64(0.0, 2.0) * z + 3.0 * z * z)).norm() < 1e-14);
        let q = Poly::new(vec![c64(-1.0, 0.0), c64(1.0, 0.0)]);
        assert!((p.mul(&q).eval(z) - p.eval(z) * q.eval(z)).norm() < 1e-13);
        assert!((p.add(&q).eval(z) - p.eval(z) - q.eval(z)).norm() < 1e-14);
        assert!(p.sub(&p).is_zero());
        assert!((p.compose_scale(2.0).eval(z) - p.eval(2.0 * z)).norm() < 1e-13);
        assert_eq!(p.derivative().c, vec![c64(0.0, 2.0), c64(6.0, 0.0)]);
    }

    #[test]
    fn roots_roundtrip() {
        let roots = [c64(1.0, 2.0), c64(-0.5, 0.0), c64(0.0, -3.0), c64(0.0, 0.0)];
        let p = Poly::from_roots(&roots, c64(2.0, -1.0));
        let mut found = p.roots().unwrap();
        assert_eq!(found.len(), 4);
        for r in roots {
            let (i, d) = found
                .iter()
                .enumerate()
                .map(|(i, x)| (i, (x - r).norm()))
                .fold((0, f64::INFINITY), |a, b| if b.1 < a.1 { b } else { a });
            assert!(d < 1e-12, "{r}: {d}");
            found.remove(i);
        }
    }

    #[test]
    fn interpolation_recovers_coefficients() {
        let p = Poly::new(vec![c64(1.0, -1.0), c64(0.3, 0.0), c64(0.0, 2.0), c64(-4.0, 0.5)]);
        for bound in [3, 5, 8] {
            let q = Poly::interpolate(|z| p.eval(z), bound, 1.3).trimmed(1e-12);
            assert_eq!(q.degree(), Some(3));
            for (a, b) in p.c.iter().zip(&q.c) {
                assert!((a - b).norm() < 1e-13);
            }
        }
    }

    #[test]
    fn zero_polynomial_has_no_roots() {
        assert!(Poly::zero().roots().is_err());
        assert!(Poly::constant(c64(2.0, 0.0)).roots().unwrap().is_empty());
    }
}
