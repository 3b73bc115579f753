//! Continuous Lyapunov equations `A_rᵀP + PA_r = −Q` and stability checks.

use nalgebra::DMatrix;

use crate::error::{Error, Result};

/// Largest real part over the eigenvalues of `a`.
pub fn spectral_abscissa(a: &DMatrix<f64>) -> f64 {
    a.complex_eigenvalues()
        .iter()
        .map(|z| z.re)
        .fold(f64::NEG_INFINITY, f64::max)
}

pub fn is_hurwitz(a: &DMatrix<f64>) -> bool {
    a.is_square() && a.nrows() > 0 && spectral_abscissa(a) < 0.0
}

/// Induced 2-norm.
pub fn norm2(a: &DMatrix<f64>) -> f64 {
    a.singular_values().max()
}

pub fn is_symmetric(a: &DMatrix<f64>, tol: f64) -> bool {
    a.is_square() && (a - a.transpose()).amax() <= tol * a.amax().max(1.0)
}

pub fn is_positive_definite(a: &DMatrix<f64>) -> bool {
    is_symmetric(a, 1e-12) && a.clone().cholesky().is_some()
}

/// `‖A_rᵀP + PA_r + Q‖₂`.
pub fn lyapunov_residual(a_r: &DMatrix<f64>, p: &DMatrix<f64>, q: &DMatrix<f64>) -> f64 {
    norm2(&(a_r.transpose() * p + p * a_r + q))
}

/// Solves `A_rᵀP + PA_r = −Q` for the unique symmetric `P ≻ 0`.
///
/// The equation is vectorised as `(I ⊗ A_rᵀ + A_rᵀ ⊗ I) vec P = −vec Q` and
/// solved by LU with one step of iterative refinement.
pub fn solve_lyapunov(a_r: &DMatrix<f64>, q: &DMatrix<f64>) -> Result<DMatrix<f64>> {
    let n = a_r.nrows();
    if !a_r.is_square() || n == 0 {
        return Err(Error::invalid("A_r must be a non-empty square matrix"));
    }
    if q.shape() != (n, n) {
        return Err(Error::invalid(format!("Q is {:?}, expected ({n}, {n})", q.shape())));
    }
    if !is_positive_definite(q) {
        return Err(Error::invalid("Q must be symmetric positive definite"));
    }
    let abscissa = spectral_abscissa(a_r);
    if abscissa >= 0.0 {
        let eig: Vec<String> = a_r
            .complex_eigenvalues()
            .iter()
            .map(|z| format!("{:.6}{:+.6}i", z.re, z.im))
            .collect();
        return Err(Error::invalid(format!(
            "A_r is not Hurwitz: eigenvalues [{}]",
            eig.join(", ")
        )));
    }
    let id = DMatrix::<f64>::identity(n, n);
    let at = a_r.transpose();
    let op = id.kronecker(&at) + at.kronecker(&id);
    let lu = op.clone().lu();
    let rhs = -nalgebra::DVector::from_column_slice(q.as_slice());
    let mut v = lu
        .solve(&rhs)
        .ok_or_else(|| Error::numerical("Lyapunov operator is singular"))?;
    let r = &rhs - &op * &v;
    if let Some(dv) = lu.solve(&r) {
        v += dv;
    }
    let p = DMatrix::from_column_slice(n, n, v.as_slice());
    let p = (&p + p.transpose()) * 0.5;
    if p.clone().cholesky().is_none() {
        return Err(Error::numerical("Lyapunov solution is not positive definite"));
    }
    Ok(p)
}
