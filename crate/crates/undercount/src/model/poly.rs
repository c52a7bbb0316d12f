//! Orthogonal polynomial basis of the reporting proxy.
//!
//! The pogit reporting regression uses a degree-3 polynomial of the centered
//! proxy `w - mean(w)`. Orthonormalizing the centered monomials against each
//! other removes their mutual collinearity, and because every basis function
//! is a combination of positive powers of `w - mean(w)`, the whole basis
//! vanishes exactly at the proxy mean. That pins the reporting intercept to
//! the reporting level of an area with average proxy value.
//!
//! Vanishing at the mean and orthogonality to the constant vector cannot hold
//! at the same time for degree 2 and above, so the columns here are unit-norm
//! and mutually orthogonal but deliberately not mean-centered.

use crate::mat::Matrix;
use crate::{Error, Result};

/// Fitted orthogonal polynomial map. Stores the Gram-Schmidt coefficients so
/// the same basis functions can be evaluated at new proxy values.
#[derive(Debug, Clone, PartialEq)]
pub struct PolyBasis {
    w_mean: f64,
    /// `proj[j]` holds the projections of monomial `j+1` onto the earlier
    /// orthonormal columns (lower-triangular coefficients).
    proj: Vec<Vec<f64>>,
    /// Normalizing constants per column.
    norms: Vec<f64>,
    /// Basis evaluated at the fitting points, one row per area.
    matrix: Matrix,
}

impl PolyBasis {
    pub fn degree(&self) -> usize {
        self.norms.len()
    }

    pub fn w_mean(&self) -> f64 {
        self.w_mean
    }

    /// Basis evaluated at the fitting points (A x degree).
    pub fn matrix(&self) -> &Matrix {
        &self.matrix
    }

    /// Evaluate the fitted basis functions at a new proxy value. Evaluating
    /// at `w_mean` returns exact zeros.
    pub fn evaluate(&self, w: f64) -> Vec<f64> {
        let d = self.degree();
        let c = w - self.w_mean;
        let mut out = vec![0.0; d];
        let mut monomial = 1.0;
        for j in 0..d {
            monomial *= c;
            let mut v = monomial;
            for (l, coef) in self.proj[j].iter().enumerate() {
                v -= coef * out[l];
            }
            out[j] = v / self.norms[j];
        }
        out
    }

    pub fn evaluate_many(&self, w: &[f64]) -> Matrix {
        let mut m = Matrix::zeros(w.len(), self.degree());
        for (i, &wi) in w.iter().enumerate() {
            for (j, v) in self.evaluate(wi).into_iter().enumerate() {
                m.set(i, j, v);
            }
        }
        m
    }
}

/// Build the orthonormal polynomial basis of the given degree from proxy
/// values `w`. Requires at least `degree + 1` distinct values.
///
/// Modified Gram-Schmidt with one re-orthogonalization pass keeps the Gram
/// matrix within machine precision of the identity.
pub fn orthogonal_poly(w: &[f64], degree: usize) -> Result<PolyBasis> {
    let n = w.len();
    if degree == 0 {
        return Err(Error::validation("polynomial degree must be at least 1"));
    }
    if w.iter().any(|v| !v.is_finite()) {
        return Err(Error::validation("proxy values must be finite"));
    }
    let mut distinct: Vec<f64> = w.to_vec();
    distinct.sort_by(|a, b| a.partial_cmp(b).expect("finite values"));
    distinct.dedup();
    if distinct.len() < degree + 1 {
        return Err(Error::validation(format!(
            "orthogonal polynomial of degree {degree} needs at least {} distinct \
             proxy values, found {}",
            degree + 1,
            distinct.len()
        )));
    }

    let w_mean = w.iter().sum::<f64>() / n as f64;
    let centered: Vec<f64> = w.iter().map(|&v| v - w_mean).collect();

    let mut columns: Vec<Vec<f64>> = Vec::with_capacity(degree);
    let mut proj: Vec<Vec<f64>> = Vec::with_capacity(degree);
    let mut norms: Vec<f64> = Vec::with_capacity(degree);
    let mut monomial = vec![1.0; n];
    for j in 0..degree {
        for (m, &c) in monomial.iter_mut().zip(&centered) {
            *m *= c;
        }
        let mut v = monomial.clone();
        let mut coefs = vec![0.0; j];
        for _pass in 0..2 {
            for (l, col) in columns.iter().enumerate() {
                let a: f64 = v.iter().zip(col).map(|(x, y)| x * y).sum();
                for (vi, ci) in v.iter_mut().zip(col) {
                    *vi -= a * ci;
                }
                coefs[l] += a;
            }
        }
        let norm = v.iter().map(|x| x * x).sum::<f64>().sqrt();
        let scale = monomial.iter().map(|x| x * x).sum::<f64>().sqrt();
        if !(norm > 1e-10 * scale.max(f64::MIN_POSITIVE)) {
            return Err(Error::validation(format!(
                "proxy values are numerically degenerate at polynomial degree {}",
                j + 1
            )));
        }
        for vi in &mut v {
            *vi /= norm;
        }
        columns.push(v);
        proj.push(coefs);
        norms.push(norm);
    }

    let mut matrix = Matrix::zeros(n, degree);
    for (j, col) in columns.iter().enumerate() {
        for (i, &v) in col.iter().enumerate() {
            matrix.set(i, j, v);
        }
    }
    Ok(PolyBasis {
        w_mean,
        proj,
        norms,
        matrix,
    })
}
