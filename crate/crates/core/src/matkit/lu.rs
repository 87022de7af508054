use crate::error::{Error, Result};
use crate::matkit::Matrix;
use num_complex::Complex64;

/// Partial-pivot LU of a square real matrix, kept as a compact factor for
/// repeated right-hand sides (Newton corrections, Kronecker systems,
/// subspace solves).
pub struct Lu {
    n: usize,
    lu: Vec<f64>,
    perm: Vec<usize>,
    /// Smallest pivot magnitude relative to the matrix scale; callers use it
    /// to detect rank deficiency.
    pub min_pivot_rel: f64,
}

impl Lu {
    pub fn factor(a: &Matrix) -> Result<Lu> {
        if !a.is_square() {
            return Err(Error::Dimension("LU needs a square matrix".into()));
        }
        let n = a.rows();
        let mut lu: Vec<f64> = a.data().to_vec();
        let mut perm: Vec<usize> = (0..n).collect();
        let scale = a.max_abs().max(f64::MIN_POSITIVE);
        let mut min_pivot_rel = f64::INFINITY;

        for k in 0..n {
            let mut p = k;
            let mut best = lu[k * n + k].abs();
            for i in (k + 1)..n {
                let v = lu[i * n + k].abs();
                if v > best {
                    best = v;
                    p = i;
                }
            }
            if p != k {
                for j in 0..n {
                    lu.swap(k * n + j, p * n + j);
                }
                perm.swap(k, p);
            }
            let pivot = lu[k * n + k];
            min_pivot_rel = min_pivot_rel.min(pivot.abs() / scale);
            if pivot == 0.0 {
                continue; // exactly singular; recorded via min_pivot_rel = 0
            }
            for i in (k + 1)..n {
                let f = lu[i * n + k] / pivot;
                lu[i * n + k] = f;
                for j in (k + 1)..n {
                    lu[i * n + j] -= f * lu[k * n + j];
                }
            }
        }
        if n == 0 {
            min_pivot_rel = 1.0;
        }
        Ok(Lu { n, lu, perm, min_pivot_rel })
    }

    pub fn is_singular(&self, rel_tol: f64) -> bool {
        !(self.min_pivot_rel > rel_tol)
    }

    pub fn solve_vec(&self, b: &[f64]) -> Result<Vec<f64>> {
        if b.len() != self.n {
            return Err(Error::Dimension("rhs length mismatch in LU solve".into()));
        }
        if self.is_singular(1e-14) {
            return Err(Error::NoUniqueSolution(format!(
                "pivot ratio {:.3e} below tolerance",
                self.min_pivot_rel
            )));
        }
        let n = self.n;
        let mut x: Vec<f64> = self.perm.iter().map(|&p| b[p]).collect();
        for i in 1..n {
            let mut acc = x[i];
            for j in 0..i {
                acc -= self.lu[i * n + j] * x[j];
            }
            x[i] = acc;
        }
        for i in (0..n).rev() {
            let mut acc = x[i];
            for j in (i + 1)..n {
                acc -= self.lu[i * n + j] * x[j];
            }
            x[i] = acc / self.lu[i * n + i];
        }
        Ok(x)
    }

    /// Solve A X = B column by column.
    pub fn solve_mat(&self, b: &Matrix) -> Result<Matrix> {
        if b.rows() != self.n {
            return Err(Error::Dimension("rhs rows mismatch in LU solve".into()));
        }
        let mut x = Matrix::zeros(self.n, b.cols());
        let mut col = vec![0.0; self.n];
        for j in 0..b.cols() {
            for i in 0..self.n {
                col[i] = b[(i, j)];
            }
            let sol = self.solve_vec(&col)?;
            for i in 0..self.n {
                x[(i, j)] = sol[i];
            }
        }
        Ok(x)
    }
}

/// Solve A x = b for complex A, b by partial-pivot elimination. Used for
/// invariant-subspace extraction (complex shifts) and for frequency-response
/// evaluation in the verification tooling.
pub fn complex_solve(a: &[Complex64], n: usize, b: &[Complex64]) -> Result<Vec<Complex64>> {
    if a.len() != n * n || b.len() != n {
        return Err(Error::Dimension("complex solve shape mismatch".into()));
    }
    let mut m = a.to_vec();
    let mut x = b.to_vec();
    let scale = m.iter().map(|z| z.norm()).fold(f64::MIN_POSITIVE, f64::max);

    for k in 0..n {
        let mut p = k;
        let mut best = m[k * n + k].norm();
        for i in (k + 1)..n {
            let v = m[i * n + k].norm();
            if v > best {
                best = v;
                p = i;
            }
        }
        if p != k {
            for j in 0..n {
                m.swap(k * n + j, p * n + j);
            }
            x.swap(k, p);
        }
        let mut pivot = m[k * n + k];
        // Near-singular shifts are expected in inverse iteration: nudge the
        // pivot instead of failing, the normalization step absorbs it.
        if pivot.norm() < 1e-300 + 1e-20 * scale {
            pivot = Complex64::new(1e-20 * scale.max(1e-300), 0.0);
            m[k * n + k] = pivot;
        }
        for i in (k + 1)..n {
            let f = m[i * n + k] / pivot;
            m[i * n + k] = f;
            for j in (k + 1)..n {
                let mkj = m[k * n + j];
                m[i * n + j] -= f * mkj;
            }
            x[i] = x[i] - f * x[k];
        }
    }
    for i in (0..n).rev() {
        let mut acc = x[i];
        for j in (i + 1)..n {
            acc -= m[i * n + j] * x[j];
        }
        x[i] = acc / m[i * n + i];
    }
    Ok(x)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::matkit::Matrix;

    #[test]
    fn solves_known_system() {
        let a = Matrix::from_rows(&[vec![2.0, 1.0], vec![1.0, 3.0]]).unwrap();
        let lu = Lu::factor(&a).unwrap();
        let x = lu.solve_vec(&[5.0, 10.0]).unwrap();
        assert!((x[0] - 1.0).abs() < 1e-14);
        assert!((x[1] - 3.0).abs() < 1e-14);
    }

    #[test]
    fn flags_singular_matrix() {
        let a = Matrix::from_rows(&[vec![1.0, 2.0], vec![2.0, 4.0]]).unwrap();
        let lu = Lu::factor(&a).unwrap();
        assert!(lu.is_singular(1e-12));
        assert!(lu.solve_vec(&[1.0, 1.0]).is_err());
    }

    #[test]
    fn random_residuals_are_small() {
        // Deterministic congruential generator; no need for a crate here.
        let mut state = 0x2545f4914f6cdd1du64;
        let mut next = move || {
            state = state.wrapping_mul(6364136223846793005).wrapping_add(1442695040888963407);
            ((state >> 11) as f64 / (1u64 << 53) as f64) * 2.0 - 1.0
        };
        for n in [1usize, 3, 6, 10] {
            let a = Matrix::from_fn(n, n, |_, _| next());
            let b: Vec<f64> = (0..n).map(|_| next()).collect();
            let lu = Lu::factor(&a).unwrap();
            if lu.is_singular(1e-10) {
                continue;
            }
            let x = lu.solve_vec(&b).unwrap();
            for i in 0..n {
                let mut r = -b[i];
                for j in 0..n {
                    r += a[(i, j)] * x[j];
                }
                assert!(r.abs() < 1e-10, "residual {r:.3e} at n={n}");
            }
        }
    }

    #[test]
    fn complex_solve_matches_real_solve_on_real_data() {
        let a: Vec<Complex64> =
            [2.0, 1.0, 1.0, 3.0].iter().map(|&re| Complex64::new(re, 0.0)).collect();
        let b = vec![Complex64::new(5.0, 0.0), Complex64::new(10.0, 0.0)];
        let x = complex_solve(&a, 2, &b).unwrap();
        assert!((x[0] - Complex64::new(1.0, 0.0)).norm() < 1e-14);
        assert!((x[1] - Complex64::new(3.0, 0.0)).norm() < 1e-14);
    }
}
