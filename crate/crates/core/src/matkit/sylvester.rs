use crate::error::{Error, Result};
use crate::matkit::{Lu, Matrix};

/// Dimension cap for the dense kernel: the Kronecker system below is
/// (n*m) x (n*m), so this keeps worst-case factorizations around 1024^3.
pub const DIM_CAP: usize = 32;

/// Solve A X + X B + Q = 0 by assembling the Kronecker-product linear
/// system (I (x) A + B^T (x) I) vec(X) = -vec(Q) over column-stacked X.
/// Unique solvability requires spec(A) and spec(-B) disjoint; violations
/// surface as a singular system.
pub fn solve_sylvester(a: &Matrix, b: &Matrix, q: &Matrix) -> Result<Matrix> {
    if !a.is_square() || !b.is_square() {
        return Err(Error::Dimension("sylvester coefficients must be square".into()));
    }
    let n = a.rows();
    let m = b.rows();
    if q.rows() != n || q.cols() != m {
        return Err(Error::Dimension(format!(
            "sylvester rhs is {}x{}, expected {n}x{m}",
            q.rows(),
            q.cols()
        )));
    }
    if n > DIM_CAP || m > DIM_CAP {
        return Err(Error::Dimension(format!(
            "sylvester dimensions {n}x{m} exceed the cap {DIM_CAP}"
        )));
    }
    if n == 0 || m == 0 {
        return Ok(Matrix::zeros(n, m));
    }

    let nm = n * m;
    let mut big = Matrix::zeros(nm, nm);
    // vec index (j, i) -> j * n + i for column j, row i of X.
    for j in 0..m {
        for i in 0..n {
            let row = j * n + i;
            for k in 0..n {
                big[(row, j * n + k)] += a[(i, k)];
            }
            for k in 0..m {
                big[(row, k * n + i)] += b[(k, j)];
            }
        }
    }
    let mut rhs = vec![0.0; nm];
    for j in 0..m {
        for i in 0..n {
            rhs[j * n + i] = -q[(i, j)];
        }
    }
    let lu = Lu::factor(&big)?;
    if lu.is_singular(1e-13) {
        return Err(Error::NoUniqueSolution(
            "sylvester operator is singular (spectra of A and -B intersect)".into(),
        ));
    }
    let x = lu.solve_vec(&rhs)?;
    let mut out = Matrix::zeros(n, m);
    for j in 0..m {
        for i in 0..n {
            out[(i, j)] = x[j * n + i];
        }
    }
    Ok(out)
}

/// Residual norm ||A X + X B + Q|| used by callers and tests.
pub fn sylvester_residual(a: &Matrix, b: &Matrix, q: &Matrix, x: &Matrix) -> f64 {
    (&(&(a * x) + &(x * b)) + q).frobenius_norm()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn scalar_case_by_hand() {
        // -3x - x + 8 = 0  =>  x = 2
        let a = Matrix::diag(&[-3.0]);
        let b = Matrix::diag(&[-1.0]);
        let q = Matrix::diag(&[8.0]);
        let x = solve_sylvester(&a, &b, &q).unwrap();
        assert!((x[(0, 0)] - 2.0).abs() < 1e-14);
    }

    #[test]
    fn identity_coefficients_halve_the_rhs() {
        let a = Matrix::identity(2).scale(-1.0);
        let b = Matrix::identity(2).scale(-1.0);
        let q = Matrix::identity(2);
        let x = solve_sylvester(&a, &b, &q).unwrap();
        assert!((&x - &Matrix::identity(2).scale(0.5)).max_abs() < 1e-14);
    }

    #[test]
    fn mirrored_spectra_are_rejected() {
        // A = 1, B = -1 makes A X + X B singular.
        let a = Matrix::diag(&[1.0]);
        let b = Matrix::diag(&[-1.0]);
        let q = Matrix::diag(&[1.0]);
        assert!(matches!(solve_sylvester(&a, &b, &q), Err(Error::NoUniqueSolution(_))));
    }

    #[test]
    fn dimension_cap_enforced() {
        let a = Matrix::identity(33).scale(-1.0);
        let q = Matrix::identity(33);
        assert!(matches!(solve_sylvester(&a, &a, &q), Err(Error::Dimension(_))));
    }

    #[test]
    fn random_rectangular_residuals() {
        let mut state = 0x6c62272e07bb0142u64;
        let mut next = move || {
            state = state.wrapping_mul(6364136223846793005).wrapping_add(1442695040888963407);
            ((state >> 11) as f64 / (1u64 << 53) as f64) * 2.0 - 1.0
        };
        for (n, m) in [(2usize, 3usize), (4, 4), (5, 2), (8, 8)] {
            // Shifted diagonals keep the spectra of A and -B apart.
            let a = &Matrix::from_fn(n, n, |_, _| 0.3 * next()) - &Matrix::identity(n).scale(2.0);
            let b = &Matrix::from_fn(m, m, |_, _| 0.3 * next()) - &Matrix::identity(m).scale(1.5);
            let q = Matrix::from_fn(n, m, |_, _| next());
            let x = solve_sylvester(&a, &b, &q).unwrap();
            let res = sylvester_residual(&a, &b, &q, &x);
            let bound = 1e-10
                * (a.frobenius_norm() + b.frobenius_norm())
                * x.frobenius_norm()
                + 1e-12;
            assert!(res <= bound, "residual {res:.3e} vs bound {bound:.3e} at {n}x{m}");
        }
    }
}
