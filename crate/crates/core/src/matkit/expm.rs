use crate::error::{Error, Result};
use crate::matkit::{Lu, Matrix};

/// Numerator coefficients of the degree-13 diagonal Pade approximant to
/// exp(x), b[0]..b[13].
const PADE13: [f64; 14] = [
    64764752532480000.0,
    32382376266240000.0,
    7771770303897600.0,
    1187353796428800.0,
    129060195264000.0,
    10559470521600.0,
    670442572800.0,
    33522128640.0,
    1323241920.0,
    40840800.0,
    960960.0,
    16380.0,
    182.0,
    1.0,
];

/// ||A||_1 bound under which the degree-13 approximant is accurate to
/// double precision without scaling.
const THETA13: f64 = 5.371920351148152;

/// Matrix exponential by scaling-and-squaring with the degree-13 diagonal
/// Pade approximant. Keeps full double accuracy for the operator norms this
/// crate produces (phase matrices exp(K^T(cos t - 1)) and monodromy
/// references).
pub fn mat_exp(m: &Matrix) -> Result<Matrix> {
    if !m.is_square() {
        return Err(Error::Dimension("mat_exp needs a square matrix".into()));
    }
    if !m.all_finite() {
        return Err(Error::NumericalFailure("mat_exp input has non-finite entries".into()));
    }
    let n = m.rows();
    if n == 0 {
        return Ok(Matrix::zeros(0, 0));
    }

    let norm = m.one_norm();
    let squarings = if norm <= THETA13 {
        0
    } else {
        (norm / THETA13).log2().ceil().max(0.0) as u32
    };
    let a = m.scale(0.5f64.powi(squarings as i32));

    // Horner-style assembly of U (odd part) and V (even part):
    // exp(A) ~ (V - U)^{-1} (V + U).
    let a2 = &a * &a;
    let a4 = &a2 * &a2;
    let a6 = &a2 * &a4;
    let id = Matrix::identity(n);

    let w1 = &(&a6.scale(PADE13[13]) + &a4.scale(PADE13[11])) + &a2.scale(PADE13[9]);
    let w2 = &(&(&a6 * &w1) + &a6.scale(PADE13[7])) + &(&a4.scale(PADE13[5]) + &a2.scale(PADE13[3]));
    let u = &a * &(&w2 + &id.scale(PADE13[1]));

    let z1 = &(&a6.scale(PADE13[12]) + &a4.scale(PADE13[10])) + &a2.scale(PADE13[8]);
    let v = &(&(&a6 * &z1) + &a6.scale(PADE13[6]))
        + &(&(&a4.scale(PADE13[4]) + &a2.scale(PADE13[2])) + &id.scale(PADE13[0]));

    let lhs = &v - &u;
    let rhs = &v + &u;
    let lu = Lu::factor(&lhs)?;
    if lu.is_singular(1e-14) {
        return Err(Error::NumericalFailure("Pade denominator singular in mat_exp".into()));
    }
    let mut e = lu.solve_mat(&rhs)?;
    for _ in 0..squarings {
        e = &e * &e;
    }
    Ok(e)
}
