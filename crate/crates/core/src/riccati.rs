//! Stabilizing solutions of the game-type algebraic Riccati equation
//!
//! ```text
//! -A^T R - R A + R D R - C = 0
//! ```
//!
//! via the stable invariant subspace of the 2n x 2n Hamiltonian
//! [[A, -D], [-C, -A^T]], polished by Newton steps (each step one
//! Lyapunov solve on the current closed loop A - D R). The sign
//! conventions match the averaged equations produced by the vibration
//! transform: D carries the control/disturbance quadratic term, C the
//! output weight.

use crate::error::{Error, Result};
use crate::matkit::{
    self, definiteness, eigenvalues, eigenvector, solve_sylvester, Definiteness, Lu, Matrix,
};
use num_complex::Complex64;

/// Hamiltonian eigenvalues closer than this to the imaginary axis mean the
/// stabilizing solution does not exist (or is about to vanish): declared
/// infeasible rather than solved inaccurately.
pub const ON_AXIS_MARGIN: f64 = 1e-8;

#[derive(Debug, Clone)]
pub struct StabilizingSolution {
    /// Symmetric stabilizing solution R.
    pub r: Matrix,
    /// A - D R, guaranteed Hurwitz.
    pub closed_loop: Matrix,
    /// Frobenius norm of -A^T R - R A + R D R - C at the returned R.
    pub residual_norm: f64,
    /// -max Re eig(A - D R), strictly positive.
    pub stability_margin: f64,
}

#[derive(Debug)]
pub struct FeasibilityReport {
    pub feasible: bool,
    pub certificate: Option<StabilizingSolution>,
    pub reason: Option<String>,
}

/// The Riccati operator -A^T R - R A + R D R - C.
pub fn riccati_residual(a: &Matrix, d: &Matrix, c: &Matrix, r: &Matrix) -> Matrix {
    let at_r = &a.transpose() * r;
    let ra = r * a;
    let rdr = &(r * d) * r;
    &(&(-&at_r) - &ra) + &(&rdr - c)
}

/// Scale for residual tolerances: (1 + ||R||)^2 * max(1, ||A||, ||D||, ||C||).
pub fn residual_scale(a: &Matrix, d: &Matrix, c: &Matrix, r: &Matrix) -> f64 {
    let rn = 1.0 + r.frobenius_norm();
    rn * rn
        * a.frobenius_norm().max(d.frobenius_norm()).max(c.frobenius_norm()).max(1.0)
}

fn validate_inputs(a: &Matrix, d: &Matrix, c: &Matrix) -> Result<(Matrix, Matrix)> {
    if !a.is_square() {
        return Err(Error::Dimension("state matrix must be square".into()));
    }
    let n = a.rows();
    if n == 0 || n > matkit::DIM_CAP {
        return Err(Error::Dimension(format!(
            "state dimension {n} outside supported range 1..={}",
            matkit::DIM_CAP
        )));
    }
    if d.rows() != n || d.cols() != n || c.rows() != n || c.cols() != n {
        return Err(Error::Dimension("quadratic and constant terms must be n x n".into()));
    }
    if !a.all_finite() || !d.all_finite() || !c.all_finite() {
        return Err(Error::Precondition("Riccati data must be finite".into()));
    }
    let d = d.clone().into_symmetric("Riccati quadratic term")?;
    let c = c.clone().into_symmetric("Riccati constant term")?;
    Ok((d, c))
}

fn hamiltonian(a: &Matrix, d: &Matrix, c: &Matrix) -> Matrix {
    let n = a.rows();
    let mut h = Matrix::zeros(2 * n, 2 * n);
    for i in 0..n {
        for j in 0..n {
            h[(i, j)] = a[(i, j)];
            h[(i, n + j)] = -d[(i, j)];
            h[(n + i, j)] = -c[(i, j)];
            h[(n + i, n + j)] = -a[(j, i)];
        }
    }
    h
}

/// Real basis of the stable invariant subspace from eigenvectors; complex
/// conjugate pairs contribute their real and imaginary parts.
fn stable_subspace(h: &Matrix, stable: &[Complex64]) -> Result<Matrix> {
    let dim = h.rows();
    let n = dim / 2;
    let mut basis: Vec<Vec<f64>> = Vec::with_capacity(n);

    let mut sorted = stable.to_vec();
    sorted.sort_by(|a, b| (a.re, a.im).partial_cmp(&(b.re, b.im)).unwrap());

    let imag_tol = |z: &Complex64| 1e-10 * (1.0 + z.norm());
    let mut i = 0;
    while i < sorted.len() {
        let lam = sorted[i];
        if lam.im.abs() <= imag_tol(&lam) {
            // Real eigenvalue: inverse-iterate, rotate the global phase
            // out, keep the real part.
            let v = eigenvector(h, Complex64::new(lam.re, 0.0))?;
            let k = (0..dim)
                .max_by(|&p, &q| v[p].norm().partial_cmp(&v[q].norm()).unwrap())
                .unwrap();
            let phase = v[k] / v[k].norm();
            let rotated: Vec<Complex64> = v.iter().map(|z| z * phase.conj()).collect();
            let imag_mass = rotated.iter().map(|z| z.im * z.im).sum::<f64>().sqrt();
            if imag_mass > 1e-6 {
                return Err(Error::NumericalFailure(format!(
                    "real-eigenvalue vector kept imaginary mass {imag_mass:.3e}"
                )));
            }
            basis.push(rotated.iter().map(|z| z.re).collect());
            i += 1;
        } else {
            // Conjugate pair: the sort placed (re, -|im|) first; one
            // complex vector yields the two-dimensional real subspace.
            let lam_pos = Complex64::new(lam.re, lam.im.abs());
            let v = eigenvector(h, lam_pos)?;
            basis.push(v.iter().map(|z| z.re).collect());
            basis.push(v.iter().map(|z| z.im).collect());
            i += 2;
        }
    }
    if basis.len() != n {
        return Err(Error::NumericalFailure(format!(
            "stable subspace dimension {} != {n}",
            basis.len()
        )));
    }

    // Modified Gram-Schmidt; a collapsing column means the eigenvector set
    // was numerically dependent (defective or tightly clustered spectrum).
    for k in 0..n {
        for prev in 0..k {
            let dot: f64 = (0..dim).map(|t| basis[k][t] * basis[prev][t]).sum();
            for t in 0..dim {
                basis[k][t] -= dot * basis[prev][t];
            }
        }
        let norm: f64 = basis[k].iter().map(|x| x * x).sum::<f64>().sqrt();
        if norm < 1e-8 {
            return Err(Error::NumericalFailure(
                "stable subspace basis is numerically degenerate".into(),
            ));
        }
        for t in 0..dim {
            basis[k][t] /= norm;
        }
    }
    Ok(Matrix::from_fn(dim, n, |i, j| basis[j][i]))
}

pub fn solve_stabilizing_are(a: &Matrix, d: &Matrix, c: &Matrix) -> Result<StabilizingSolution> {
    let (d, c) = validate_inputs(a, d, c)?;
    let n = a.rows();
    let h = hamiltonian(a, &d, &c);
    let eig = eigenvalues(&h)?;

    for z in &eig {
        if z.re.abs() < ON_AXIS_MARGIN {
            return Err(Error::Infeasible(format!(
                "Hamiltonian eigenvalue {z} within {ON_AXIS_MARGIN:.0e} of the imaginary axis"
            )));
        }
    }
    let stable: Vec<Complex64> = eig.iter().copied().filter(|z| z.re < 0.0).collect();
    if stable.len() != n {
        return Err(Error::NumericalFailure(format!(
            "{} stable Hamiltonian eigenvalues, expected {n}",
            stable.len()
        )));
    }

    let basis = stable_subspace(&h, &stable)?;
    let x1 = Matrix::from_fn(n, n, |i, j| basis[(i, j)]);
    let x2 = Matrix::from_fn(n, n, |i, j| basis[(n + i, j)]);
    let lu = Lu::factor(&x1.transpose())?;
    if lu.is_singular(1e-12) {
        return Err(Error::Infeasible(
            "stable subspace projects singularly onto the state space".into(),
        ));
    }
    // R^T = X1^{-T} X2^T, i.e. solve X1^T Y = X2^T.
    let mut r = lu.solve_mat(&x2.transpose())?.transpose().symmetric_part();

    // Newton polish: each step solves the Lyapunov equation on the current
    // closed loop. Quadratic convergence from the subspace solution.
    let coarse = residual_scale(a, &d, &c, &r);
    let mut resnorm = riccati_residual(a, &d, &c, &r).frobenius_norm();
    for _ in 0..30 {
        if resnorm <= 1e-12 * coarse {
            break;
        }
        let acl = a - &(&d * &r);
        let res = riccati_residual(a, &d, &c, &r);
        let delta = match solve_sylvester(&acl.transpose(), &acl, &(-&res)) {
            Ok(x) => x,
            Err(_) => break, // keep the best iterate; the final gate decides
        };
        let next = (&r + &delta).symmetric_part();
        let next_res = riccati_residual(a, &d, &c, &next).frobenius_norm();
        if next_res >= resnorm {
            break;
        }
        r = next;
        resnorm = next_res;
    }

    let scale = residual_scale(a, &d, &c, &r);
    if !(resnorm <= 1e-9 * scale) {
        return Err(Error::NumericalFailure(format!(
            "Riccati residual {resnorm:.3e} above tolerance {:.3e}",
            1e-9 * scale
        )));
    }
    let closed_loop = a - &(&d * &r);
    let rep = matkit::spectrum(&closed_loop)?;
    let stability_margin = -rep.max_real_part;
    if !(stability_margin > 0.0) {
        return Err(Error::Infeasible(format!(
            "closed loop is not Hurwitz (margin {stability_margin:.3e})"
        )));
    }
    Ok(StabilizingSolution { r, closed_loop, residual_norm: resnorm, stability_margin })
}

/// Solve Acl^T R + R Acl + W = 0 for symmetric W and Hurwitz Acl.
pub fn solve_lyapunov(acl: &Matrix, w: &Matrix) -> Result<Matrix> {
    if !acl.is_square() || acl.rows() != w.rows() {
        return Err(Error::Dimension("Lyapunov shapes inconsistent".into()));
    }
    let w = w.clone().into_symmetric("Lyapunov right-hand side")?;
    if !matkit::is_hurwitz(acl, matkit::HURWITZ_MARGIN)? {
        return Err(Error::Precondition(
            "Lyapunov coefficient matrix is not Hurwitz within margin".into(),
        ));
    }
    let x = solve_sylvester(&acl.transpose(), acl, &w)?;
    Ok(x.symmetric_part())
}

/// Feasibility = a stabilizing solution exists and is positive definite.
/// All failures (including numerical ones) map to "not feasible" with the
/// reason preserved; bisection layers re-check consistency separately.
pub fn is_feasible(a: &Matrix, d: &Matrix, c: &Matrix) -> FeasibilityReport {
    match solve_stabilizing_are(a, d, c) {
        Ok(sol) => match definiteness(&sol.r) {
            Ok(Definiteness::PositiveDefinite) => {
                FeasibilityReport { feasible: true, certificate: Some(sol), reason: None }
            }
            Ok(k) => FeasibilityReport {
                feasible: false,
                certificate: Some(sol),
                reason: Some(format!("stabilizing solution exists but is {k:?}")),
            },
            Err(e) => FeasibilityReport {
                feasible: false,
                certificate: None,
                reason: Some(e.to_string()),
            },
        },
        Err(e) => {
            FeasibilityReport { feasible: false, certificate: None, reason: Some(e.to_string()) }
        }
    }
}
