//! Shared test oracles, independent of the library's bisection machinery.

use hinf_vibration::matkit::{complex_solve, Matrix};
use num_complex::Complex64;

/// ||L (i w I - A)^{-1} B2|| for a single-column B2.
fn gain_at(a: &Matrix, b2: &Matrix, l: &Matrix, omega: f64) -> f64 {
    let n = a.rows();
    assert_eq!(b2.cols(), 1, "sweep oracle handles one disturbance channel");
    let mut m = vec![Complex64::new(0.0, 0.0); n * n];
    for i in 0..n {
        for j in 0..n {
            m[i * n + j] = Complex64::new(-a[(i, j)], if i == j { omega } else { 0.0 });
        }
    }
    let rhs: Vec<Complex64> =
        (0..n).map(|i| Complex64::new(b2[(i, 0)], 0.0)).collect();
    let x = complex_solve(&m, n, &rhs).expect("resolvent is nonsingular off the spectrum");
    let mut norm2 = 0.0;
    for i in 0..l.rows() {
        let mut acc = Complex64::new(0.0, 0.0);
        for j in 0..n {
            acc += Complex64::new(l[(i, j)], 0.0) * x[j];
        }
        norm2 += acc.norm_sqr();
    }
    norm2.sqrt()
}

/// Frequency-sweep H-infinity norm of L (sI - A)^{-1} B2: dense log sweep
/// over omega (plus dc), then golden-section refinement around the peak.
pub fn hinf_norm_sweep(a: &Matrix, b2: &Matrix, l: &Matrix) -> f64 {
    let mut grid = vec![0.0];
    let points = 2000;
    for i in 0..=points {
        let t = i as f64 / points as f64;
        grid.push(10f64.powf(-4.0 + 8.0 * t));
    }
    let gains: Vec<f64> = grid.iter().map(|&w| gain_at(a, b2, l, w)).collect();
    let best = gains
        .iter()
        .enumerate()
        .max_by(|x, y| x.1.partial_cmp(y.1).unwrap())
        .map(|(i, _)| i)
        .unwrap();

    let mut lo = if best == 0 { 0.0 } else { grid[best - 1] };
    let mut hi = if best + 1 < grid.len() { grid[best + 1] } else { grid[best] * 10.0 };
    let phi = (5f64.sqrt() - 1.0) / 2.0;
    let mut x1 = hi - phi * (hi - lo);
    let mut x2 = lo + phi * (hi - lo);
    let mut f1 = gain_at(a, b2, l, x1);
    let mut f2 = gain_at(a, b2, l, x2);
    for _ in 0..120 {
        if f1 >= f2 {
            hi = x2;
            x2 = x1;
            f2 = f1;
            x1 = hi - phi * (hi - lo);
            f1 = gain_at(a, b2, l, x1);
        } else {
            lo = x1;
            x1 = x2;
            f1 = f2;
            x2 = lo + phi * (hi - lo);
            f2 = gain_at(a, b2, l, x2);
        }
    }
    gains[best].max(f1).max(f2)
}
