//! Power-series corrector for the periodic game-Riccati solution in the
//! fast time. The slow equation
//!
//! ```text
//! dP/dtau = eps * B(tau, P),
//! B(tau, P) = -Acal^T P - P Acal + P Dcal P - Ccal,
//! ```
//!
//! is solved by the ansatz P = sum_k eps^k (R_k + Pi_k(tau)) with constant
//! R_k and zero-mean periodic ripples Pi_k (Pi_0 = 0). Matching powers of
//! eps gives dPi_{k+1}/dtau = F_k(tau), where F_k is the order-k bracket
//! coefficient; Pi_{k+1} exists iff F_k has zero mean, and that mean
//! condition is exactly a Lyapunov equation fixing R_k. The truncation
//!
//! ```text
//! P_N(tau) = sum_{k<=N} eps^k R_k + sum_{1<=k<=N+1} eps^k Pi_k(tau)
//! ```
//!
//! carries the extra half-step ripple so its defect is one order better
//! than its solution error.

use crate::error::{Error, Result};
use crate::matkit::Matrix;
use crate::periodic::PeriodicMatrix;
use crate::riccati::{solve_lyapunov, solve_stabilizing_are};
use crate::vibration::{psi, AveragedSystem, PhaseConvention};

/// Highest supported truncation order.
pub const ORDER_CAP: usize = 8;

/// Relative ceiling on the mean of each order-k bracket after the
/// Lyapunov solve; a larger mean means the recursion lost solvability.
pub const CONSISTENCY_REL_TOL: f64 = 1e-9;

#[derive(Debug, Clone)]
pub struct ExpansionSeries {
    order: usize,
    /// R_0 ..= R_order.
    constants: Vec<Matrix>,
    /// Pi_1 ..= Pi_{order+1}.
    ripples: Vec<PeriodicMatrix>,
    /// Averaged closed loop Abar - Dbar R_0.
    closed_loop: Matrix,
    /// Max-norm of the mean of each order-k bracket (diagnostic).
    consistency: Vec<f64>,
}

impl ExpansionSeries {
    pub fn order(&self) -> usize {
        self.order
    }

    pub fn n(&self) -> usize {
        self.constants[0].rows()
    }

    /// R_k for k <= order.
    pub fn constant(&self, k: usize) -> &Matrix {
        &self.constants[k]
    }

    /// Pi_k for 1 <= k <= order + 1.
    pub fn ripple(&self, k: usize) -> &PeriodicMatrix {
        assert!(k >= 1 && k <= self.order + 1, "ripple index {k} out of range");
        &self.ripples[k - 1]
    }

    pub fn closed_loop(&self) -> &Matrix {
        &self.closed_loop
    }

    pub fn consistency(&self) -> &[f64] {
        &self.consistency
    }

    /// P_N(tau) by trigonometric interpolation of the ripples.
    pub fn eval_fast(&self, tau: f64, epsilon: f64) -> Matrix {
        let mut p = Matrix::zeros(self.n(), self.n());
        let mut pow = 1.0;
        for k in 0..=self.order {
            p = &p + &self.constants[k].scale(pow);
            pow *= epsilon;
        }
        pow = epsilon;
        for pi in &self.ripples {
            p = &p + &pi.eval(tau).scale(pow);
            pow *= epsilon;
        }
        p.symmetric_part()
    }

    /// P_N sampled on the grid the series was built on (node-exact, no
    /// interpolation).
    pub fn fast_on_grid(&self, epsilon: f64) -> PeriodicMatrix {
        let grid = self.ripples[0].grid_size();
        let period = self.ripples[0].period();
        let mut constant = Matrix::zeros(self.n(), self.n());
        let mut pow = 1.0;
        for k in 0..=self.order {
            constant = &constant + &self.constants[k].scale(pow);
            pow *= epsilon;
        }
        let samples = (0..grid)
            .map(|j| {
                let mut p = constant.clone();
                let mut w = epsilon;
                for pi in &self.ripples {
                    p = &p + &pi.sample(j).scale(w);
                    w *= epsilon;
                }
                p.symmetric_part()
            })
            .collect();
        PeriodicMatrix::from_samples(period, samples).expect("grid already validated")
    }
}

/// Map a fast-coordinate solution value back to original coordinates:
/// R(tau) = Psi(tau) P(tau) Psi(tau)^T.
pub fn original_from_fast(
    p: &Matrix,
    k: &Matrix,
    tau: f64,
    convention: PhaseConvention,
) -> Result<Matrix> {
    let phase = psi(k, tau, convention)?;
    Ok((&(&phase * p) * &phase.transpose()).symmetric_part())
}

/// Build the corrector series to the given truncation order.
///
/// R_0 is the stabilizing solution of the averaged algebraic Riccati
/// equation; each later R_k comes from the zero-mean solvability condition
/// of its bracket, and each ripple is the zero-mean antiderivative of the
/// completed bracket. Every bracket mean is re-checked after its solve and
/// a violation is reported as an inconsistency rather than absorbed.
pub fn build_series(avg: &AveragedSystem, order: usize) -> Result<ExpansionSeries> {
    if order > ORDER_CAP {
        return Err(Error::Precondition(format!(
            "truncation order {order} exceeds cap {ORDER_CAP}"
        )));
    }
    let n = avg.n();
    let grid = avg.a_per.grid_size();
    let period = avg.a_per.period();

    let are = solve_stabilizing_are(&avg.a_bar, &avg.d_bar, &avg.c_bar)?;
    let acl = are.closed_loop.clone();

    let mut constants: Vec<Matrix> = Vec::with_capacity(order + 1);
    let mut ripples: Vec<PeriodicMatrix> = Vec::with_capacity(order + 1);
    let mut s_samples: Vec<Vec<Matrix>> = Vec::with_capacity(order + 1);
    let mut consistency = Vec::with_capacity(order + 1);

    for k in 0..=order {
        // Known part of the bracket: everything except the R_k terms.
        // For k = 0 that is just -Ccal; the quadratic sum over i + j = k
        // with i, j >= 1 involves only earlier orders.
        let known: Vec<Matrix> = (0..grid)
            .map(|j| {
                let a_j = avg.a_per.sample(j);
                let d_j = avg.d_per.sample(j);
                let mut f = if k == 0 {
                    -avg.c_per.sample(j)
                } else {
                    Matrix::zeros(n, n)
                };
                if k >= 1 {
                    let pi_k = ripples[k - 1].sample(j);
                    let h = &a_j.transpose() * pi_k;
                    f = &f - &(&h + &h.transpose());
                    let cross = &(&constants[0] * d_j) * pi_k;
                    f = &f + &(&cross + &cross.transpose());
                }
                let mut i = 1;
                while 2 * i <= k {
                    let j2 = k - i;
                    let prod = &(&s_samples[i][j] * d_j) * &s_samples[j2][j];
                    f = if i == j2 {
                        &f + &prod
                    } else {
                        &f + &(&prod + &prod.transpose())
                    };
                    i += 1;
                }
                f.symmetric_part()
            })
            .collect();

        let r_k = if k == 0 {
            are.r.clone()
        } else {
            let mut m0 = Matrix::zeros(n, n);
            for f in &known {
                m0 = &m0 + f;
            }
            let m0 = m0.scale(1.0 / grid as f64).symmetric_part();
            solve_lyapunov(&acl, &-&m0)?
        };

        // Complete the bracket with the R_k terms and confirm its mean
        // vanishes at the working precision.
        let full: Vec<Matrix> = (0..grid)
            .map(|j| {
                let a_j = avg.a_per.sample(j);
                let d_j = avg.d_per.sample(j);
                let h = &a_j.transpose() * &r_k;
                let mut f = &known[j] - &(&h + &h.transpose());
                if k == 0 {
                    let quad = &(&r_k * d_j) * &r_k;
                    f = &f + &quad.symmetric_part();
                } else {
                    let cross = &(&constants[0] * d_j) * &r_k;
                    f = &f + &(&cross + &cross.transpose());
                }
                f.symmetric_part()
            })
            .collect();

        let f_per = PeriodicMatrix::from_samples(period, full)?;
        let mean_norm = f_per.average().max_abs();
        let scale = (1.0 + r_k.frobenius_norm()) * (1.0 + acl.frobenius_norm())
            + f_per.sup_norm();
        if !(mean_norm <= CONSISTENCY_REL_TOL * scale) {
            return Err(Error::Inconsistent(format!(
                "order-{k} bracket mean {mean_norm:.3e} exceeds {:.3e}",
                CONSISTENCY_REL_TOL * scale
            )));
        }
        consistency.push(mean_norm);

        let pi_next = f_per.detrend().zero_mean_antiderivative()?;
        let s_k: Vec<Matrix> = if k == 0 {
            (0..grid).map(|_| r_k.clone()).collect()
        } else {
            (0..grid).map(|j| &r_k + ripples[k - 1].sample(j)).collect()
        };
        s_samples.push(s_k);
        constants.push(r_k);
        ripples.push(pi_next);
    }

    Ok(ExpansionSeries {
        order,
        constants,
        ripples,
        closed_loop: acl,
        consistency,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::riccati::riccati_residual;
    use crate::vibration::{transform_system, SystemSpec, DEFAULT_GRID};

    fn bench_avg(k: f64, gamma: f64, convention: PhaseConvention) -> AveragedSystem {
        let spec = SystemSpec::new(
            Matrix::from_rows(&[vec![0.0, 1.0], vec![-0.27, -2.8]]).unwrap(),
            Matrix::zeros(2, 0),
            Matrix::from_rows(&[vec![0.0], vec![1.0]]).unwrap(),
            Matrix::identity(2),
            Matrix::from_rows(&[vec![0.0, 0.0], vec![k, 0.0]]).unwrap(),
            gamma,
            0.1,
        )
        .unwrap();
        transform_system(&spec, DEFAULT_GRID, convention).unwrap()
    }

    #[test]
    fn zero_vibration_series_collapses_to_the_averaged_solution() {
        // gamma must exceed the k = 0 attenuation limit 1/0.27.
        let avg = bench_avg(0.0, 4.0, PhaseConvention::Anchored);
        let series = build_series(&avg, 3).unwrap();
        let r0 = series.constant(0);
        let scale = 1.0 + r0.max_abs();
        for k in 1..=3 {
            assert!(
                series.constant(k).max_abs() < 1e-9 * scale,
                "R_{k} should vanish without vibration"
            );
        }
        for k in 1..=4 {
            assert!(series.ripple(k).sup_norm() < 1e-9 * scale);
        }
        // P_N then equals R_0 for any epsilon.
        let p = series.eval_fast(1.3, 0.2);
        assert!((&p - r0).max_abs() < 1e-8 * scale);
    }

    #[test]
    fn leading_constant_solves_the_averaged_equation() {
        let avg = bench_avg(1.0, 3.0, PhaseConvention::Anchored);
        let series = build_series(&avg, 2).unwrap();
        let res = riccati_residual(&avg.a_bar, &avg.d_bar, &avg.c_bar, series.constant(0));
        assert!(res.max_abs() < 1e-10 * (1.0 + series.constant(0).max_abs()));
    }

    #[test]
    fn ripples_are_zero_mean_and_differentiate_to_their_brackets() {
        // dPi_{k+1}/dtau must reproduce the detrended order-k bracket;
        // the spectral derivative gives an independent check.
        let avg = bench_avg(1.0, 3.0, PhaseConvention::Anchored);
        let series = build_series(&avg, 2).unwrap();
        for k in 0..=2usize {
            let pi_next = series.ripple(k + 1);
            assert!(pi_next.average().max_abs() < 1e-12 * (1.0 + pi_next.sup_norm()));

            // Rebuild the bracket from stored data.
            let grid = avg.a_per.grid_size();
            let samples: Vec<Matrix> = (0..grid)
                .map(|j| {
                    let mut s_k = series.constant(k).clone();
                    if k >= 1 {
                        s_k = &s_k + series.ripple(k).sample(j);
                    }
                    let a_j = avg.a_per.sample(j);
                    let d_j = avg.d_per.sample(j);
                    let h = &a_j.transpose() * &s_k;
                    let mut f = -&(&h + &h.transpose());
                    if k == 0 {
                        f = &f - avg.c_per.sample(j);
                    }
                    for i in 0..=k {
                        let mut s_i = series.constant(i).clone();
                        if i >= 1 {
                            s_i = &s_i + series.ripple(i).sample(j);
                        }
                        let mut s_j2 = series.constant(k - i).clone();
                        if k - i >= 1 {
                            s_j2 = &s_j2 + series.ripple(k - i).sample(j);
                        }
                        f = &f + &(&(&s_i * d_j) * &s_j2);
                    }
                    f
                })
                .collect();
            let bracket = PeriodicMatrix::from_samples(avg.a_per.period(), samples).unwrap();
            let diff = pi_next
                .derivative()
                .zip_with(&bracket.detrend(), |a, b| a - b)
                .unwrap();
            assert!(
                diff.sup_norm() < 1e-8 * (1.0 + bracket.sup_norm()),
                "order {k}: derivative mismatch {}",
                diff.sup_norm()
            );
        }
    }

    #[test]
    fn solvability_fixes_each_constant_through_the_closed_loop() {
        // Acl^T R_1 + R_1 Acl must equal the mean of the known order-1
        // terms, rebuilt here from scratch.
        let avg = bench_avg(1.2, 3.0, PhaseConvention::ZeroMean);
        let series = build_series(&avg, 1).unwrap();
        let acl = series.closed_loop();
        let r0 = series.constant(0);
        let r1 = series.constant(1);
        let grid = avg.a_per.grid_size();
        let mut m0 = Matrix::zeros(2, 2);
        for j in 0..grid {
            let pi1 = series.ripple(1).sample(j);
            let h = &avg.a_per.sample(j).transpose() * pi1;
            let cross = &(r0 * avg.d_per.sample(j)) * pi1;
            m0 = &(&m0 - &(&h + &h.transpose())) + &(&cross + &cross.transpose());
        }
        let m0 = m0.scale(1.0 / grid as f64);
        let lhs = &(&acl.transpose() * r1) + &(r1 * acl);
        assert!((&lhs - &m0).max_abs() < 1e-10 * (1.0 + m0.max_abs()));
    }

    #[test]
    fn series_solution_stays_symmetric_and_definite_for_small_epsilon() {
        let avg = bench_avg(1.0, 3.0, PhaseConvention::Anchored);
        let series = build_series(&avg, 2).unwrap();
        let p = series.fast_on_grid(0.1);
        for j in 0..p.grid_size() {
            let s = p.sample(j);
            assert!(s.asymmetry() == 0.0);
            assert!(crate::matkit::is_positive_definite(s).unwrap());
        }
    }

    #[test]
    fn grid_eval_and_interpolated_eval_agree_at_nodes() {
        let avg = bench_avg(0.8, 3.0, PhaseConvention::Anchored);
        let series = build_series(&avg, 1).unwrap();
        let on_grid = series.fast_on_grid(0.05);
        for j in [0usize, 17, 64, 100] {
            let tau = on_grid.node(j);
            let diff = (&series.eval_fast(tau, 0.05) - on_grid.sample(j)).max_abs();
            assert!(diff < 1e-12);
        }
    }

    #[test]
    fn back_transform_restores_symmetry_and_start_of_period_identity() {
        let avg = bench_avg(1.0, 3.0, PhaseConvention::Anchored);
        let series = build_series(&avg, 1).unwrap();
        let k = Matrix::from_rows(&[vec![0.0, 0.0], vec![1.0, 0.0]]).unwrap();
        let p0 = series.eval_fast(0.0, 0.1);
        // Anchored convention: Psi(0) = I, so the back-transform at tau = 0
        // is the identity map.
        let r = original_from_fast(&p0, &k, 0.0, PhaseConvention::Anchored).unwrap();
        assert!((&r - &p0).max_abs() < 1e-13);
        let r_mid = original_from_fast(&p0, &k, 1.0, PhaseConvention::Anchored).unwrap();
        assert!(r_mid.asymmetry() == 0.0);
    }

    #[test]
    fn order_cap_is_enforced() {
        let avg = bench_avg(0.5, 3.0, PhaseConvention::Anchored);
        assert!(matches!(
            build_series(&avg, ORDER_CAP + 1),
            Err(Error::Precondition(_))
        ));
    }
}
