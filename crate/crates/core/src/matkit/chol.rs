use crate::error::Result;
use crate::matkit::Matrix;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Definiteness {
    PositiveDefinite,
    PositiveSemidefinite,
    Indefinite,
}

/// Classify a symmetric matrix by diagonally pivoted Cholesky
/// factorization. Pivots below `1e-12 * ||S||` count as zero; a zero pivot
/// with a (numerically) vanishing remaining block means semidefinite, a
/// negative pivot or a non-vanishing remainder means indefinite.
///
/// Inputs are symmetrized at the boundary; asymmetry beyond the kernel
/// tolerance is an error.
pub fn definiteness(s: &Matrix) -> Result<Definiteness> {
    let s = s.clone().into_symmetric("definiteness input")?;
    let n = s.rows();
    if n == 0 {
        return Ok(Definiteness::PositiveDefinite);
    }
    let scale = s.frobenius_norm();
    let pivot_tol = 1e-12 * scale.max(1.0);
    // Work on a copy with a symmetric permutation applied implicitly via an
    // index map.
    let mut w = s.clone();
    let mut idx: Vec<usize> = (0..n).collect();

    for k in 0..n {
        // Largest remaining diagonal entry as pivot.
        let (mut pk, mut pv) = (k, w[(idx[k], idx[k])]);
        for t in k + 1..n {
            let v = w[(idx[t], idx[t])];
            if v > pv {
                pv = v;
                pk = t;
            }
        }
        idx.swap(k, pk);
        let d = w[(idx[k], idx[k])];
        if d > pivot_tol {
            // Elimination step on the trailing block.
            for i in k + 1..n {
                let f = w[(idx[i], idx[k])] / d;
                for j in k + 1..n {
                    let delta = f * w[(idx[k], idx[j])];
                    w[(idx[i], idx[j])] -= delta;
                }
            }
        } else if d < -pivot_tol {
            return Ok(Definiteness::Indefinite);
        } else {
            // Zero pivot: for a semidefinite matrix the whole remaining
            // block must vanish with it.
            let mut rem = 0.0f64;
            for i in k..n {
                for j in k..n {
                    rem = rem.max(w[(idx[i], idx[j])].abs());
                }
            }
            if rem > 1e-10 * scale.max(1.0) {
                return Ok(Definiteness::Indefinite);
            }
            return Ok(Definiteness::PositiveSemidefinite);
        }
    }
    Ok(Definiteness::PositiveDefinite)
}

pub fn is_positive_definite(s: &Matrix) -> Result<bool> {
    Ok(definiteness(s)? == Definiteness::PositiveDefinite)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn identity_is_positive_definite() {
        assert_eq!(definiteness(&Matrix::identity(3)).unwrap(), Definiteness::PositiveDefinite);
    }

    #[test]
    fn rank_one_projector_is_semidefinite() {
        let s = Matrix::from_rows(&[vec![1.0, 1.0], vec![1.0, 1.0]]).unwrap();
        assert_eq!(definiteness(&s).unwrap(), Definiteness::PositiveSemidefinite);
    }

    #[test]
    fn signature_mix_is_indefinite() {
        let s = Matrix::diag(&[1.0, -1.0]);
        assert_eq!(definiteness(&s).unwrap(), Definiteness::Indefinite);
    }

    #[test]
    fn agrees_with_eigenvalue_signs_on_random_symmetric() {
        let mut state = 0x853c49e6748fea9bu64;
        let mut next = move || {
            state = state.wrapping_mul(6364136223846793005).wrapping_add(1442695040888963407);
            ((state >> 11) as f64 / (1u64 << 53) as f64) * 2.0 - 1.0
        };
        for n in [2usize, 3, 5, 7] {
            for _ in 0..20 {
                let g = Matrix::from_fn(n, n, |_, _| next());
                let s = g.symmetric_part();
                let eig = crate::matkit::eigenvalues(&s).unwrap();
                let min_re = eig.iter().map(|z| z.re).fold(f64::INFINITY, f64::min);
                // Skip near-singular samples where the classification is
                // legitimately ambiguous.
                if min_re.abs() < 1e-6 {
                    continue;
                }
                let want = if min_re > 0.0 {
                    Definiteness::PositiveDefinite
                } else {
                    Definiteness::Indefinite
                };
                assert_eq!(definiteness(&s).unwrap(), want, "n={n}, min eig {min_re:.3e}");
            }
        }
    }

    #[test]
    fn semidefinite_gram_matrices_classify_correctly() {
        // L^T L with L 2x4 has rank <= 2, so the 4x4 Gram matrix is PSD.
        let l = Matrix::from_rows(&[vec![1.0, 0.5, -0.25, 2.0], vec![0.0, 1.5, 1.0, -1.0]])
            .unwrap();
        let s = l.transpose().mul_transpose(&l.transpose());
        assert_eq!(definiteness(&s).unwrap(), Definiteness::PositiveSemidefinite);
    }
}
