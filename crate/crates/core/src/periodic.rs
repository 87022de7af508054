//! Matrix-valued periodic functions sampled on a uniform grid, with the
//! handful of operators the averaging theory needs: the mean over one
//! period, the zero-mean (detrend) projector, the zero-mean antiderivative,
//! and spectrally accurate evaluation/differentiation via trigonometric
//! interpolation.

use crate::error::{Error, Result};
use crate::matkit::Matrix;

pub const MIN_GRID: usize = 16;

/// A matrix-valued function of period `period`, represented by its values
/// at the uniform nodes tau_j = j * period / N, j = 0..N-1. N is even so
/// the interpolation has the usual unambiguous Nyquist convention.
#[derive(Clone, Debug)]
pub struct PeriodicMatrix {
    period: f64,
    samples: Vec<Matrix>,
}

impl PeriodicMatrix {
    pub fn from_samples(period: f64, samples: Vec<Matrix>) -> Result<Self> {
        if !(period > 0.0) || !period.is_finite() {
            return Err(Error::Precondition("period must be positive and finite".into()));
        }
        let n = samples.len();
        if n < MIN_GRID || n % 2 != 0 {
            return Err(Error::Precondition(format!(
                "grid size {n} must be even and at least {MIN_GRID}"
            )));
        }
        let (r, c) = (samples[0].rows(), samples[0].cols());
        for s in &samples {
            if s.rows() != r || s.cols() != c {
                return Err(Error::Dimension("inconsistent sample shapes".into()));
            }
            if !s.all_finite() {
                return Err(Error::NumericalFailure("non-finite sample".into()));
            }
        }
        Ok(PeriodicMatrix { period, samples })
    }

    pub fn from_fn(
        period: f64,
        grid_size: usize,
        mut f: impl FnMut(f64) -> Matrix,
    ) -> Result<Self> {
        let samples =
            (0..grid_size).map(|j| f(period * j as f64 / grid_size as f64)).collect();
        PeriodicMatrix::from_samples(period, samples)
    }

    pub fn constant(period: f64, grid_size: usize, m: &Matrix) -> Result<Self> {
        PeriodicMatrix::from_samples(period, vec![m.clone(); grid_size])
    }

    pub fn period(&self) -> f64 {
        self.period
    }

    pub fn grid_size(&self) -> usize {
        self.samples.len()
    }

    pub fn rows(&self) -> usize {
        self.samples[0].rows()
    }

    pub fn cols(&self) -> usize {
        self.samples[0].cols()
    }

    pub fn node(&self, j: usize) -> f64 {
        self.period * j as f64 / self.grid_size() as f64
    }

    pub fn sample(&self, j: usize) -> &Matrix {
        &self.samples[j]
    }

    pub fn samples(&self) -> &[Matrix] {
        &self.samples
    }

    /// Largest Frobenius norm over the grid; the working "size" of the
    /// function for tolerance scaling.
    pub fn sup_norm(&self) -> f64 {
        self.samples.iter().map(|m| m.frobenius_norm()).fold(0.0, f64::max)
    }

    pub fn map(&self, mut f: impl FnMut(&Matrix) -> Matrix) -> Result<Self> {
        PeriodicMatrix::from_samples(self.period, self.samples.iter().map(|m| f(m)).collect())
    }

    pub fn zip_with(
        &self,
        other: &PeriodicMatrix,
        mut f: impl FnMut(&Matrix, &Matrix) -> Matrix,
    ) -> Result<Self> {
        if self.grid_size() != other.grid_size() || self.period != other.period {
            return Err(Error::Dimension("mismatched grids in zip_with".into()));
        }
        PeriodicMatrix::from_samples(
            self.period,
            self.samples.iter().zip(&other.samples).map(|(a, b)| f(a, b)).collect(),
        )
    }

    /// Mean over one period. On a uniform periodic grid the trapezoid rule
    /// collapses to the plain sample mean, with spectral accuracy for
    /// smooth integrands.
    pub fn average(&self) -> Matrix {
        let n = self.grid_size();
        let mut acc = Matrix::zeros(self.rows(), self.cols());
        for s in &self.samples {
            acc = &acc + s;
        }
        acc.scale(1.0 / n as f64)
    }

    /// Zero-mean projector: subtract the average from every sample.
    pub fn detrend(&self) -> PeriodicMatrix {
        let avg = self.average();
        PeriodicMatrix {
            period: self.period,
            samples: self.samples.iter().map(|s| s - &avg).collect(),
        }
    }

    /// The unique antiderivative with zero mean, computed harmonic by
    /// harmonic (each cos/sin mode divides by its angular frequency; the
    /// Nyquist mode is dropped, it sits below tolerance for the smooth
    /// inputs this crate produces). Errors when the input has a nonzero
    /// mean, because no periodic antiderivative exists then.
    pub fn zero_mean_antiderivative(&self) -> Result<PeriodicMatrix> {
        let mean_norm = self.average().frobenius_norm();
        if mean_norm > 1e-10 * self.sup_norm().max(1.0) {
            return Err(Error::NonZeroMean(format!(
                "mean norm {mean_norm:.3e} exceeds tolerance; no periodic antiderivative"
            )));
        }
        let coeffs = Fourier::analyze(self);
        let n = self.grid_size();
        let omega0 = 2.0 * std::f64::consts::PI / self.period;
        let (r, c) = (self.rows(), self.cols());
        let table = TrigTable::new(n);
        let mut out = vec![Matrix::zeros(r, c); n];
        for m in 1..n / 2 {
            let w = 1.0 / (m as f64 * omega0);
            // integral of a cos + b sin = (a sin - b cos) / (m w0)
            for (j, sample) in out.iter_mut().enumerate() {
                let (cosv, sinv) = table.at(j * m % n);
                let coef_sin = w * sinv;
                let coef_cos = -w * cosv;
                *sample = &*sample
                    + &(&coeffs.cos_terms[m - 1].scale(coef_sin)
                        + &coeffs.sin_terms[m - 1].scale(coef_cos));
            }
        }
        PeriodicMatrix::from_samples(self.period, out)
    }

    /// Spectral derivative at the grid nodes.
    pub fn derivative(&self) -> PeriodicMatrix {
        let coeffs = Fourier::analyze(self);
        let n = self.grid_size();
        let omega0 = 2.0 * std::f64::consts::PI / self.period;
        let (r, c) = (self.rows(), self.cols());
        let table = TrigTable::new(n);
        let mut out = vec![Matrix::zeros(r, c); n];
        for m in 1..n / 2 {
            let w = m as f64 * omega0;
            // derivative of a cos + b sin = -a w sin + b w cos
            for (j, sample) in out.iter_mut().enumerate() {
                let (cosv, sinv) = table.at(j * m % n);
                *sample = &*sample
                    + &(&coeffs.cos_terms[m - 1].scale(-w * sinv)
                        + &coeffs.sin_terms[m - 1].scale(w * cosv));
            }
        }
        PeriodicMatrix { period: self.period, samples: out }
    }

    /// Trigonometric interpolation at an arbitrary point. For repeated
    /// evaluation grab `fourier()` once instead.
    pub fn eval(&self, tau: f64) -> Matrix {
        self.fourier().eval(tau)
    }

    pub fn fourier(&self) -> Fourier {
        Fourier::analyze(self)
    }
}

/// Shared cos/sin lookup for arguments 2*pi*t/N, t = 0..N-1. Harmonic
/// arguments at grid nodes reduce to these exactly, which keeps the
/// analysis/synthesis pair free of phase drift.
struct TrigTable {
    cos: Vec<f64>,
    sin: Vec<f64>,
}

impl TrigTable {
    fn new(n: usize) -> Self {
        let mut cos = Vec::with_capacity(n);
        let mut sin = Vec::with_capacity(n);
        for t in 0..n {
            let arg = 2.0 * std::f64::consts::PI * t as f64 / n as f64;
            cos.push(arg.cos());
            sin.push(arg.sin());
        }
        TrigTable { cos, sin }
    }

    #[inline]
    fn at(&self, t: usize) -> (f64, f64) {
        (self.cos[t], self.sin[t])
    }
}

/// Real trigonometric interpolant of a sampled periodic matrix function:
/// mean + sum_m (A_m cos(m w0 tau) + B_m sin(m w0 tau)) + Nyquist term.
pub struct Fourier {
    period: f64,
    pub mean: Matrix,
    /// m = 1 .. N/2-1
    pub cos_terms: Vec<Matrix>,
    pub sin_terms: Vec<Matrix>,
    /// Coefficient of cos((N/2) w0 tau).
    pub nyquist: Matrix,
}

impl Fourier {
    fn analyze(f: &PeriodicMatrix) -> Fourier {
        let n = f.grid_size();
        let (r, c) = (f.rows(), f.cols());
        let table = TrigTable::new(n);
        let inv_n = 1.0 / n as f64;
        let mean = f.average();
        let mut cos_terms = Vec::with_capacity(n / 2 - 1);
        let mut sin_terms = Vec::with_capacity(n / 2 - 1);
        for m in 1..n / 2 {
            let mut am = Matrix::zeros(r, c);
            let mut bm = Matrix::zeros(r, c);
            for j in 0..n {
                let (cosv, sinv) = table.at(j * m % n);
                am = &am + &f.sample(j).scale(cosv);
                bm = &bm + &f.sample(j).scale(sinv);
            }
            cos_terms.push(am.scale(2.0 * inv_n));
            sin_terms.push(bm.scale(2.0 * inv_n));
        }
        let mut nyq = Matrix::zeros(r, c);
        for j in 0..n {
            let sign = if j % 2 == 0 { 1.0 } else { -1.0 };
            nyq = &nyq + &f.sample(j).scale(sign);
        }
        Fourier { period: f.period, mean, cos_terms, sin_terms, nyquist: nyq.scale(inv_n) }
    }

    pub fn eval(&self, tau: f64) -> Matrix {
        let theta = 2.0 * std::f64::consts::PI / self.period * tau;
        let (rows, cols) = (self.mean.rows(), self.mean.cols());
        let mut acc = self.mean.data().to_vec();
        // Harmonic angles by rotation recurrence; the drift over <= N/2
        // harmonics stays near machine precision.
        let (sin1, cos1) = theta.sin_cos();
        let (mut cm, mut sm) = (1.0f64, 0.0f64);
        for (am, bm) in self.cos_terms.iter().zip(&self.sin_terms) {
            let (c, s) = (cm * cos1 - sm * sin1, sm * cos1 + cm * sin1);
            cm = c;
            sm = s;
            let (ad, bd) = (am.data(), bm.data());
            for (i, slot) in acc.iter_mut().enumerate() {
                *slot += ad[i] * c + bd[i] * s;
            }
        }
        let half = (self.cos_terms.len() + 1) as f64;
        let nyq = (half * theta).cos();
        let nd = self.nyquist.data();
        for (i, slot) in acc.iter_mut().enumerate() {
            *slot += nd[i] * nyq;
        }
        Matrix::from_fn(rows, cols, |i, j| acc[i * cols + j])
    }
}
