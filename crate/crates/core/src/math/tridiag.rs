//! Tridiagonal systems via the Thomas algorithm, with a reusable factored
//! form for time-stepping schemes that solve against a fixed matrix.

use crate::{Error, Result};

/// A tridiagonal matrix stored by diagonals: `lower` has length `n - 1`
/// (subdiagonal), `diag` length `n`, `upper` length `n - 1` (superdiagonal).
#[derive(Debug, Clone)]
pub struct Tridiag {
    pub lower: Vec<f64>,
    pub diag: Vec<f64>,
    pub upper: Vec<f64>,
}

impl Tridiag {
    pub fn new(lower: Vec<f64>, diag: Vec<f64>, upper: Vec<f64>) -> Self {
        assert_eq!(lower.len() + 1, diag.len());
        assert_eq!(upper.len() + 1, diag.len());
        Tridiag { lower, diag, upper }
    }

    pub fn len(&self) -> usize {
        self.diag.len()
    }

    pub fn is_empty(&self) -> bool {
        self.diag.is_empty()
    }

    /// `y = A x`.
    pub fn mul_vec(&self, x: &[f64], y: &mut [f64]) {
        let n = self.len();
        debug_assert_eq!(x.len(), n);
        debug_assert_eq!(y.len(), n);
        for i in 0..n {
            let mut acc = self.diag[i] * x[i];
            if i > 0 {
                acc += self.lower[i - 1] * x[i - 1];
            }
            if i + 1 < n {
                acc += self.upper[i] * x[i + 1];
            }
            y[i] = acc;
        }
    }

    /// LU-factor without pivoting (valid for the diagonally dominant matrices
    /// produced by the schemes here). Fails on a vanishing pivot.
    pub fn factor(&self) -> Result<TridiagLU> {
        let n = self.len();
        let mut inv_pivot = vec![0.0; n];
        let mut lower_factor = vec![0.0; n.saturating_sub(1)];
        if self.diag[0].abs() < 1e-300 {
            return Err(Error::numerical("tridiagonal factor: zero pivot at row 0"));
        }
        inv_pivot[0] = 1.0 / self.diag[0];
        for i in 1..n {
            let l = self.lower[i - 1] * inv_pivot[i - 1];
            lower_factor[i - 1] = l;
            let pivot = self.diag[i] - l * self.upper[i - 1];
            if pivot.abs() < 1e-300 {
                return Err(Error::numerical(format!(
                    "tridiagonal factor: zero pivot at row {i}"
                )));
            }
            inv_pivot[i] = 1.0 / pivot;
        }
        Ok(TridiagLU {
            lower_factor,
            inv_pivot,
            upper: self.upper.clone(),
        })
    }
}

/// Factored form of a [`Tridiag`]; supports repeated right-hand sides.
#[derive(Debug, Clone)]
pub struct TridiagLU {
    lower_factor: Vec<f64>,
    inv_pivot: Vec<f64>,
    upper: Vec<f64>,
}

impl TridiagLU {
    /// Solve `A x = b`, overwriting `b` with `x`.
    pub fn solve_in_place(&self, b: &mut [f64]) {
        let n = self.inv_pivot.len();
        debug_assert_eq!(b.len(), n);
        for i in 1..n {
            b[i] -= self.lower_factor[i - 1] * b[i - 1];
        }
        b[n - 1] *= self.inv_pivot[n - 1];
        for i in (0..n - 1).rev() {
            b[i] = (b[i] - self.upper[i] * b[i + 1]) * self.inv_pivot[i];
        }
    }
}

/// One-shot Thomas solve for convenience.
pub fn solve_tridiag(lower: &[f64], diag: &[f64], upper: &[f64], rhs: &[f64]) -> Result<Vec<f64>> {
    let a = Tridiag::new(lower.to_vec(), diag.to_vec(), upper.to_vec());
    let lu = a.factor()?;
    let mut x = rhs.to_vec();
    lu.solve_in_place(&mut x);
    Ok(x)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn solves_small_system() {
        // [[2,1,0],[1,2,1],[0,1,2]] x = [4,8,8] -> x = [1,2,3]
        let x = solve_tridiag(&[1.0, 1.0], &[2.0, 2.0, 2.0], &[1.0, 1.0], &[4.0, 8.0, 8.0])
            .unwrap();
        assert!((x[0] - 1.0).abs() < 1e-14);
        assert!((x[1] - 2.0).abs() < 1e-14);
        assert!((x[2] - 3.0).abs() < 1e-14);
    }

    #[test]
    fn factored_solve_matches_matrix_multiply_roundtrip() {
        let n = 64;
        let lower = vec![-1.0; n - 1];
        let diag: Vec<f64> = (0..n).map(|i| 4.0 + 0.01 * i as f64).collect();
        let upper = vec![-1.5; n - 1];
        let a = Tridiag::new(lower, diag, upper);
        let lu = a.factor().unwrap();
        let x_true: Vec<f64> = (0..n).map(|i| (i as f64 * 0.37).sin()).collect();
        let mut b = vec![0.0; n];
        a.mul_vec(&x_true, &mut b);
        lu.solve_in_place(&mut b);
        for i in 0..n {
            assert!((b[i] - x_true[i]).abs() < 1e-12, "row {i}");
        }
    }

    #[test]
    fn rejects_singular_matrix() {
        assert!(solve_tridiag(&[0.0], &[0.0, 1.0], &[0.0], &[1.0, 1.0]).is_err());
    }
}
