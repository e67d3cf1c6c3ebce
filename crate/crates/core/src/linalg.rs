//! Dense linear-algebra helpers on top of nalgebra.

use nalgebra::{DMatrix, DVector};

use crate::{Error, Result, C64};

/// Eigenvalues of a general complex matrix from its complex Schur form.
pub fn complex_eigenvalues(a: &DMatrix<C64>) -> Result<Vec<C64>> {
    let n = a.nrows();
    if n == 0 {
        return Ok(Vec::new());
    }
    let schur = a
        .clone()
        .try_schur(f64::EPSILON, 1000 * n.max(1))
        .ok_or_else(|| Error::Numerical("complex Schur iteration did not converge".into()))?;
    let (_, t) = schur.unpack();
    Ok(t.diagonal().iter().copied().collect())
}

/// Eigenvalues of a real matrix as complex numbers.
pub fn real_eigenvalues(a: &DMatrix<f64>) -> Result<Vec<C64>> {
    complex_eigenvalues(&a.map(|x| C64::new(x, 0.0)))
}

/// Sorts by descending real part, then descending imaginary part.
pub fn sort_by_real_desc(values: &mut [C64]) {
    values.sort_by(|a, b| b.re.total_cmp(&a.re).then(b.im.total_cmp(&a.im)));
}

/// Ascending eigenvalues of a real symmetric matrix.
pub fn symmetric_eigenvalues(a: &DMatrix<f64>) -> Vec<f64> {
    if a.nrows() == 0 {
        return Vec::new();
    }
    let sym = (a + a.transpose()) * 0.5;
    let mut ev: Vec<f64> = sym.symmetric_eigenvalues().iter().copied().collect();
    ev.sort_by(f64::total_cmp);
    ev
}

/// Refines an eigenpair estimate by shifted inverse iteration.
///
/// Returns `(λ, x, ‖Ax − λx‖)` with `‖x‖ = 1`; `λ` is the Rayleigh quotient
/// `xᴴAx`, which minimizes the residual for the final vector.
pub fn refine_eigenpair(a: &DMatrix<C64>, estimate: C64, tol: f64) -> Result<(C64, DVector<C64>, f64)> {
    let n = a.nrows();
    let scale = a.norm().max(1.0);
    let shift = estimate + C64::new(1.0, 1.0) * (scale * 1e-13);
    let mut shifted = a.clone();
    for i in 0..n {
        shifted[(i, i)] -= shift;
    }
    let lu = shifted.lu();
    let mut x = DVector::from_fn(n, |i, _| {
        C64::new(1.0 + 0.1 * i as f64 / n as f64, 0.05 * (1.0 + i as f64).sin())
    });
    x /= C64::new(x.norm(), 0.0);
    let mut best = (estimate, x.clone(), f64::INFINITY);
    for _ in 0..100 {
        let y = lu
            .solve(&x)
            .ok_or_else(|| Error::Numerical("inverse iteration hit an exactly singular shift".into()))?;
        let norm = y.norm();
        if !norm.is_finite() || norm == 0.0 {
            return Err(Error::Numerical("inverse iteration diverged".into()));
        }
        x = y / C64::new(norm, 0.0);
        let ax = a * &x;
        let lambda = x.dotc(&ax);
        let residual = (&ax - &x * lambda).norm();
        if residual < best.2 {
            best = (lambda, x.clone(), residual);
        }
        if residual < tol {
            break;
        }
    }
    Ok(best)
}

/// Orthonormal basis (`n × (n−1)`) of the zero-sum subspace `𝟙^⊥`.
pub fn zero_sum_basis(n: usize) -> DMatrix<f64> {
    // Helmert contrasts
    let mut q = DMatrix::zeros(n, n.saturating_sub(1));
    for j in 1..n {
        let norm = ((j * (j + 1)) as f64).sqrt();
        for i in 0..j {
            q[(i, j - 1)] = 1.0 / norm;
        }
        q[(j, j - 1)] = -(j as f64) / norm;
    }
    q
}

/// Compensated (Neumaier) summation.
pub fn neumaier_sum(values: impl IntoIterator<Item = f64>) -> f64 {
    let mut sum = 0.0;
    let mut comp = 0.0;
    for x in values {
        let t = sum + x;
        if sum.abs() >= x.abs() {
            comp += (sum - t) + x;
        } else {
            comp += (x - t) + sum;
        }
        sum = t;
    }
    sum + comp
}

/// Largest entry-wise deviation from symmetry.
pub fn asymmetry(a: &DMatrix<C64>) -> f64 {
    (a - a.transpose()).norm()
}
