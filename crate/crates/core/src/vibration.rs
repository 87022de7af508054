//! The fast-phase change of variables for plants with a strong
//! zero-average vibrational term, and the period-averaged data it
//! produces. The plant is
//!
//! ```text
//! dx/dt = A x + (1/eps) sin(t/eps) K x + B1 u + B2 w,    z = L x,
//! ```
//!
//! and the phase matrix Psi(tau) = exp(K^T phase(tau)) turns the game
//! Riccati flow into a slow periodic equation in the fast time tau = t/eps
//! with coefficients
//!
//! ```text
//! Acal(tau) = Psi^T A Psi^{-T},
//! Dcal(tau) = Psi^T D Psi,      D = B1 B1^T - gamma^{-2} B2 B2^T,
//! Ccal(tau) = Psi^{-1} C Psi^{-T},  C = L^T L,
//! ```
//!
//! whose period averages feed the algebraic Riccati solve.

use crate::error::{Error, Result};
use crate::matkit::{self, mat_exp, Matrix};
use crate::periodic::PeriodicMatrix;

pub const DEFAULT_GRID: usize = 128;

/// Condition-number ceiling for the phase matrix; beyond this the change
/// of variables loses too many digits to certify anything.
pub const PSI_COND_LIMIT: f64 = 1e12;

const TWO_PI: f64 = 2.0 * std::f64::consts::PI;

/// Normalization of the phase exponent.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum PhaseConvention {
    /// Exponent cos(tau) - 1: the phase matrix is the identity at tau = 0,
    /// so fast-time and original coordinates coincide at the start of each
    /// period. This is the default.
    Anchored,
    /// Exponent cos(tau): zero mean over the period, which centers the
    /// transform but leaves Psi(0) = exp(K^T).
    ZeroMean,
}

impl PhaseConvention {
    /// The token used in config files, CLI flags, and metadata.
    pub fn token(self) -> &'static str {
        match self {
            PhaseConvention::Anchored => "paper",
            PhaseConvention::ZeroMean => "zero_mean",
        }
    }

    pub fn parse(s: &str) -> Result<Self> {
        match s {
            "paper" | "anchored" => Ok(PhaseConvention::Anchored),
            "zero_mean" | "zero-mean" => Ok(PhaseConvention::ZeroMean),
            other => Err(Error::Config(format!(
                "unknown phase convention {other:?}, expected \"paper\" or \"zero_mean\""
            ))),
        }
    }

    fn phase(self, tau: f64) -> f64 {
        match self {
            PhaseConvention::Anchored => tau.cos() - 1.0,
            PhaseConvention::ZeroMean => tau.cos(),
        }
    }
}

impl std::fmt::Display for PhaseConvention {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.token())
    }
}

/// Validated plant data. `b1` may have zero columns (no control input),
/// in which case the state matrix itself must be Hurwitz for any
/// attenuation question to make sense.
#[derive(Debug, Clone)]
pub struct SystemSpec {
    a: Matrix,
    b1: Matrix,
    b2: Matrix,
    l: Matrix,
    k: Matrix,
    pub gamma: f64,
    pub epsilon: f64,
}

impl SystemSpec {
    pub fn new(
        a: Matrix,
        b1: Matrix,
        b2: Matrix,
        l: Matrix,
        k: Matrix,
        gamma: f64,
        epsilon: f64,
    ) -> Result<Self> {
        if !a.is_square() || a.rows() == 0 {
            return Err(Error::Dimension("state matrix must be square and nonempty".into()));
        }
        let n = a.rows();
        if n > matkit::DIM_CAP {
            return Err(Error::Dimension(format!(
                "state dimension {n} exceeds cap {}",
                matkit::DIM_CAP
            )));
        }
        if b1.rows() != n || b2.rows() != n {
            return Err(Error::Dimension("input matrices must have n rows".into()));
        }
        if l.cols() != n || l.rows() == 0 {
            return Err(Error::Dimension("output matrix must have n columns".into()));
        }
        if k.rows() != n || k.cols() != n {
            return Err(Error::Dimension("vibration matrix must be n x n".into()));
        }
        if !(gamma > 0.0) || !gamma.is_finite() {
            return Err(Error::Precondition("gamma must be positive and finite".into()));
        }
        if !(epsilon > 0.0) || !epsilon.is_finite() {
            return Err(Error::Precondition("epsilon must be positive and finite".into()));
        }
        let has_control = b1.cols() > 0 && b1.max_abs() > 0.0;
        if !has_control && !matkit::is_hurwitz(&a, matkit::HURWITZ_MARGIN)? {
            return Err(Error::Precondition(
                "plant has no control input, so the state matrix must be Hurwitz".into(),
            ));
        }
        Ok(SystemSpec { a, b1, b2, l, k, gamma, epsilon })
    }

    pub fn n(&self) -> usize {
        self.a.rows()
    }

    pub fn a(&self) -> &Matrix {
        &self.a
    }

    pub fn b1(&self) -> &Matrix {
        &self.b1
    }

    pub fn b2(&self) -> &Matrix {
        &self.b2
    }

    pub fn l(&self) -> &Matrix {
        &self.l
    }

    pub fn k(&self) -> &Matrix {
        &self.k
    }

    pub fn with_gamma(&self, gamma: f64) -> Result<SystemSpec> {
        SystemSpec::new(
            self.a.clone(),
            self.b1.clone(),
            self.b2.clone(),
            self.l.clone(),
            self.k.clone(),
            gamma,
            self.epsilon,
        )
    }

    /// D = B1 B1^T - gamma^{-2} B2 B2^T at this plant's gamma.
    pub fn d_matrix(&self) -> Matrix {
        self.d_matrix_at(self.gamma)
    }

    pub fn d_matrix_at(&self, gamma: f64) -> Matrix {
        let control = self.b1.mul_transpose(&self.b1);
        let disturbance = self.b2.mul_transpose(&self.b2);
        &control - &disturbance.scale(gamma.powi(-2))
    }

    /// C = L^T L.
    pub fn c_matrix(&self) -> Matrix {
        let lt = self.l.transpose();
        lt.mul_transpose(&lt)
    }
}

/// Phase matrix Psi(tau) = exp(K^T phase(tau)).
pub fn psi(k: &Matrix, tau: f64, convention: PhaseConvention) -> Result<Matrix> {
    mat_exp(&k.transpose().scale(convention.phase(tau)))
}

/// Period-averaged coefficients plus the sampled periodic ones they came
/// from. Everything is in the fast time tau with period 2 pi.
#[derive(Debug, Clone)]
pub struct AveragedSystem {
    pub a_bar: Matrix,
    pub d_bar: Matrix,
    pub c_bar: Matrix,
    pub a_per: PeriodicMatrix,
    pub d_per: PeriodicMatrix,
    pub c_per: PeriodicMatrix,
    pub psi_per: PeriodicMatrix,
    pub convention: PhaseConvention,
    pub gamma: f64,
}

impl AveragedSystem {
    pub fn n(&self) -> usize {
        self.a_bar.rows()
    }
}

/// Sample the transformed coefficients on a uniform grid and average them.
/// The phase matrix inverse is computed as exp(-K^T phase), which is exact
/// up to the exponential itself; the conditioning guard rejects transforms
/// too skewed to trust.
pub fn transform_system(
    spec: &SystemSpec,
    grid_size: usize,
    convention: PhaseConvention,
) -> Result<AveragedSystem> {
    let d = spec.d_matrix();
    let c = spec.c_matrix();
    let kt = spec.k().transpose();

    let mut a_samples = Vec::with_capacity(grid_size);
    let mut d_samples = Vec::with_capacity(grid_size);
    let mut c_samples = Vec::with_capacity(grid_size);
    let mut psi_samples = Vec::with_capacity(grid_size);

    for j in 0..grid_size {
        let tau = TWO_PI * j as f64 / grid_size as f64;
        let phase = convention.phase(tau);
        let psi = mat_exp(&kt.scale(phase))?;
        let psi_inv = mat_exp(&kt.scale(-phase))?;
        let cond = psi.one_norm() * psi_inv.one_norm();
        if !cond.is_finite() || cond > PSI_COND_LIMIT {
            return Err(Error::Transform(format!(
                "phase matrix condition estimate {cond:.3e} exceeds {PSI_COND_LIMIT:.0e} \
                 at tau = {tau:.4}"
            )));
        }
        let psi_t = psi.transpose();
        let psi_inv_t = psi_inv.transpose();
        a_samples.push(&(&psi_t * spec.a()) * &psi_inv_t);
        d_samples.push((&(&psi_t * &d) * &psi).symmetric_part());
        c_samples.push((&(&psi_inv * &c) * &psi_inv_t).symmetric_part());
        psi_samples.push(psi);
    }

    let a_per = PeriodicMatrix::from_samples(TWO_PI, a_samples)?;
    let d_per = PeriodicMatrix::from_samples(TWO_PI, d_samples)?;
    let c_per = PeriodicMatrix::from_samples(TWO_PI, c_samples)?;
    let psi_per = PeriodicMatrix::from_samples(TWO_PI, psi_samples)?;

    Ok(AveragedSystem {
        a_bar: a_per.average(),
        d_bar: d_per.average().symmetric_part(),
        c_bar: c_per.average().symmetric_part(),
        a_per,
        d_per,
        c_per,
        psi_per,
        convention,
        gamma: spec.gamma,
    })
}

/// The (A, D, C) triple for the averaged algebraic Riccati equation.
pub fn averaged_are_input(avg: &AveragedSystem) -> (Matrix, Matrix, Matrix) {
    (avg.a_bar.clone(), avg.d_bar.clone(), avg.c_bar.clone())
}

/// Averages with the two input weights kept apart, so that
/// Dbar(gamma) = control_bar - gamma^{-2} disturbance_bar can be formed
/// for many gamma values after a single pass over the grid.
#[derive(Debug, Clone)]
pub struct SplitAverages {
    pub a_bar: Matrix,
    pub control_bar: Matrix,
    pub disturbance_bar: Matrix,
    pub c_bar: Matrix,
}

impl SplitAverages {
    pub fn d_bar_at(&self, gamma: f64) -> Matrix {
        &self.control_bar - &self.disturbance_bar.scale(gamma.powi(-2))
    }
}

/// Like [`transform_system`], but averaging Psi^T B1 B1^T Psi and
/// Psi^T B2 B2^T Psi separately. Only the averages are kept.
pub fn averaged_split_weights(
    spec: &SystemSpec,
    grid_size: usize,
    convention: PhaseConvention,
) -> Result<SplitAverages> {
    let n = spec.n();
    let m1 = spec.b1().mul_transpose(spec.b1());
    let m2 = spec.b2().mul_transpose(spec.b2());
    let c = spec.c_matrix();
    let kt = spec.k().transpose();

    if grid_size < crate::periodic::MIN_GRID || grid_size % 2 != 0 {
        return Err(Error::Precondition(format!(
            "grid size {grid_size} must be even and at least {}",
            crate::periodic::MIN_GRID
        )));
    }

    let mut a_sum = Matrix::zeros(n, n);
    let mut m1_sum = Matrix::zeros(n, n);
    let mut m2_sum = Matrix::zeros(n, n);
    let mut c_sum = Matrix::zeros(n, n);
    for j in 0..grid_size {
        let tau = TWO_PI * j as f64 / grid_size as f64;
        let phase = convention.phase(tau);
        let psi = mat_exp(&kt.scale(phase))?;
        let psi_inv = mat_exp(&kt.scale(-phase))?;
        let cond = psi.one_norm() * psi_inv.one_norm();
        if !cond.is_finite() || cond > PSI_COND_LIMIT {
            return Err(Error::Transform(format!(
                "phase matrix condition estimate {cond:.3e} exceeds {PSI_COND_LIMIT:.0e} \
                 at tau = {tau:.4}"
            )));
        }
        let psi_t = psi.transpose();
        let psi_inv_t = psi_inv.transpose();
        a_sum = &a_sum + &(&(&psi_t * spec.a()) * &psi_inv_t);
        m1_sum = &m1_sum + &(&(&psi_t * &m1) * &psi).symmetric_part();
        m2_sum = &m2_sum + &(&(&psi_t * &m2) * &psi).symmetric_part();
        c_sum = &c_sum + &(&(&psi_inv * &c) * &psi_inv_t).symmetric_part();
    }
    let w = 1.0 / grid_size as f64;
    Ok(SplitAverages {
        a_bar: a_sum.scale(w),
        control_bar: m1_sum.scale(w).symmetric_part(),
        disturbance_bar: m2_sum.scale(w).symmetric_part(),
        c_bar: c_sum.scale(w).symmetric_part(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    /// The two-state vibration benchmark: x'' + 2.8 x' + 0.27 x driven
    /// through the second state, vibration feeding x into x'.
    pub fn bench_plant(k: f64, gamma: f64, epsilon: f64) -> SystemSpec {
        SystemSpec::new(
            Matrix::from_rows(&[vec![0.0, 1.0], vec![-0.27, -2.8]]).unwrap(),
            Matrix::zeros(2, 0),
            Matrix::from_rows(&[vec![0.0], vec![1.0]]).unwrap(),
            Matrix::identity(2),
            Matrix::from_rows(&[vec![0.0, 0.0], vec![k, 0.0]]).unwrap(),
            gamma,
            epsilon,
        )
        .unwrap()
    }

    #[test]
    fn phase_matrix_of_nilpotent_vibration_is_affine() {
        // K^T is nilpotent, so the exponential truncates:
        // psi(pi) = I + K^T (cos pi - 1).
        let k = Matrix::from_rows(&[vec![0.0, 0.0], vec![1.0, 0.0]]).unwrap();
        let p = psi(&k, std::f64::consts::PI, PhaseConvention::Anchored).unwrap();
        let want = Matrix::from_rows(&[vec![1.0, -2.0], vec![0.0, 1.0]]).unwrap();
        assert!((&p - &want).max_abs() < 1e-14);
        // Anchored convention starts at the identity.
        let p0 = psi(&k, 0.0, PhaseConvention::Anchored).unwrap();
        assert!((&p0 - &Matrix::identity(2)).max_abs() < 1e-15);
    }

    #[test]
    fn zero_vibration_transform_is_the_identity() {
        let spec = bench_plant(0.0, 3.0, 0.1);
        for conv in [PhaseConvention::Anchored, PhaseConvention::ZeroMean] {
            let avg = transform_system(&spec, 32, conv).unwrap();
            assert!((&avg.a_bar - spec.a()).max_abs() < 1e-14);
            assert!((&avg.d_bar - &spec.d_matrix()).max_abs() < 1e-14);
            assert!((&avg.c_bar - &spec.c_matrix()).max_abs() < 1e-14);
            for j in 0..32 {
                assert!((avg.psi_per.sample(j) - &Matrix::identity(2)).max_abs() < 1e-15);
            }
        }
    }

    #[test]
    fn averaged_state_matrix_has_the_shifted_characteristic_polynomial() {
        // Averaging adds k^2/2 to the stiffness: the averaged state matrix
        // must have characteristic polynomial
        // lambda^2 + 2.8 lambda + (0.27 + k^2/2) in both conventions.
        for k in [0.5f64, 1.0, 1.5] {
            for conv in [PhaseConvention::Anchored, PhaseConvention::ZeroMean] {
                let spec = bench_plant(k, 3.0, 0.1);
                let avg = transform_system(&spec, DEFAULT_GRID, conv).unwrap();
                let tr = avg.a_bar[(0, 0)] + avg.a_bar[(1, 1)];
                let det = avg.a_bar[(0, 0)] * avg.a_bar[(1, 1)]
                    - avg.a_bar[(0, 1)] * avg.a_bar[(1, 0)];
                assert!((tr + 2.8).abs() < 1e-11, "trace at k={k} {conv:?}");
                assert!(
                    (det - (0.27 + k * k / 2.0)).abs() < 1e-11,
                    "det at k={k} {conv:?}: {det}"
                );
            }
        }
    }

    #[test]
    fn zero_mean_convention_output_weight_average() {
        // With C = I and the off-diagonal vibration pattern, the zero-mean
        // convention averages the output weight to diag(1 + k^2/2, 1).
        let k = 0.8;
        let spec = bench_plant(k, 3.0, 0.1);
        let avg = transform_system(&spec, DEFAULT_GRID, PhaseConvention::ZeroMean).unwrap();
        let want = Matrix::diag(&[1.0 + k * k / 2.0, 1.0]);
        assert!((&avg.c_bar - &want).max_abs() < 1e-12, "{:?}", avg.c_bar);
    }

    #[test]
    fn conventions_give_similar_averaged_state_matrices() {
        let spec = bench_plant(1.2, 3.0, 0.1);
        let a1 = transform_system(&spec, DEFAULT_GRID, PhaseConvention::Anchored)
            .unwrap()
            .a_bar;
        let a2 = transform_system(&spec, DEFAULT_GRID, PhaseConvention::ZeroMean)
            .unwrap()
            .a_bar;
        let e1 = crate::matkit::eigenvalues(&a1).unwrap();
        let mut re1: Vec<f64> = e1.iter().map(|z| z.re).collect();
        let e2 = crate::matkit::eigenvalues(&a2).unwrap();
        let mut re2: Vec<f64> = e2.iter().map(|z| z.re).collect();
        re1.sort_by(|a, b| a.partial_cmp(b).unwrap());
        re2.sort_by(|a, b| a.partial_cmp(b).unwrap());
        for (x, y) in re1.iter().zip(&re2) {
            assert!((x - y).abs() < 1e-10);
        }
    }

    #[test]
    fn grid_doubling_leaves_averages_unchanged() {
        let spec = bench_plant(1.0, 3.0, 0.1);
        let coarse = transform_system(&spec, 64, PhaseConvention::Anchored).unwrap();
        let fine = transform_system(&spec, 128, PhaseConvention::Anchored).unwrap();
        assert!((&coarse.a_bar - &fine.a_bar).max_abs() < 1e-12);
        assert!((&coarse.d_bar - &fine.d_bar).max_abs() < 1e-12);
        assert!((&coarse.c_bar - &fine.c_bar).max_abs() < 1e-12);
    }

    #[test]
    fn split_weights_recombine_to_the_full_transform() {
        let spec = SystemSpec::new(
            Matrix::from_rows(&[vec![0.0, 1.0], vec![-0.27, -2.8]]).unwrap(),
            Matrix::from_rows(&[vec![1.0], vec![0.5]]).unwrap(),
            Matrix::from_rows(&[vec![0.0], vec![1.0]]).unwrap(),
            Matrix::identity(2),
            Matrix::from_rows(&[vec![0.0, 0.0], vec![0.7, 0.0]]).unwrap(),
            1.7,
            0.1,
        )
        .unwrap();
        for conv in [PhaseConvention::Anchored, PhaseConvention::ZeroMean] {
            let avg = transform_system(&spec, 64, conv).unwrap();
            let split = averaged_split_weights(&spec, 64, conv).unwrap();
            assert!((&split.a_bar - &avg.a_bar).max_abs() < 1e-13);
            assert!((&split.c_bar - &avg.c_bar).max_abs() < 1e-13);
            assert!((&split.d_bar_at(1.7) - &avg.d_bar).max_abs() < 1e-13);
        }
    }

    #[test]
    fn ill_conditioned_phase_matrix_is_rejected() {
        let spec = SystemSpec::new(
            Matrix::diag(&[-1.0, -1.0]),
            Matrix::identity(2),
            Matrix::identity(2),
            Matrix::identity(2),
            Matrix::diag(&[15.0, -15.0]),
            1.0,
            0.1,
        )
        .unwrap();
        assert!(matches!(
            transform_system(&spec, 32, PhaseConvention::Anchored),
            Err(Error::Transform(_))
        ));
    }

    #[test]
    fn uncontrolled_unstable_plant_is_rejected() {
        let err = SystemSpec::new(
            Matrix::diag(&[0.1, -1.0]),
            Matrix::zeros(2, 0),
            Matrix::from_rows(&[vec![0.0], vec![1.0]]).unwrap(),
            Matrix::identity(2),
            Matrix::zeros(2, 2),
            1.0,
            0.1,
        );
        assert!(matches!(err, Err(Error::Precondition(_))));
    }
}
