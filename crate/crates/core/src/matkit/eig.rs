use crate::error::{Error, Result};
use crate::matkit::lu::complex_solve;
use crate::matkit::Matrix;
use num_complex::Complex64;

/// Eigenvalue summary of a real square matrix.
#[derive(Debug, Clone)]
pub struct SpectrumReport {
    pub eigenvalues: Vec<Complex64>,
    pub max_real_part: f64,
    pub spectral_radius: f64,
}

/// Householder reduction to upper Hessenberg form (similarity transform;
/// accumulated Q is not needed because only eigenvalues are extracted).
fn hessenberg(a: &Matrix) -> Matrix {
    let n = a.rows();
    let mut h = a.clone();
    if n < 3 {
        return h;
    }
    let mut v = vec![0.0; n];
    for k in 0..n - 2 {
        let mut xnorm = 0.0;
        for i in k + 1..n {
            xnorm += h[(i, k)] * h[(i, k)];
        }
        xnorm = xnorm.sqrt();
        if xnorm < 1e-300 {
            continue;
        }
        let x0 = h[(k + 1, k)];
        let alpha = if x0 >= 0.0 { -xnorm } else { xnorm };
        let mut vnorm2 = 0.0;
        for i in k + 1..n {
            v[i] = h[(i, k)];
        }
        v[k + 1] -= alpha;
        for i in k + 1..n {
            vnorm2 += v[i] * v[i];
        }
        if vnorm2 < 1e-300 {
            continue;
        }
        let beta = 2.0 / vnorm2;
        // H <- P H with P = I - beta v v^T acting on rows k+1..n
        for j in k..n {
            let mut dot = 0.0;
            for i in k + 1..n {
                dot += v[i] * h[(i, j)];
            }
            let f = beta * dot;
            for i in k + 1..n {
                h[(i, j)] -= f * v[i];
            }
        }
        // H <- H P acting on columns k+1..n
        for i in 0..n {
            let mut dot = 0.0;
            for j in k + 1..n {
                dot += h[(i, j)] * v[j];
            }
            let f = beta * dot;
            for j in k + 1..n {
                h[(i, j)] -= f * v[j];
            }
        }
        for i in k + 2..n {
            h[(i, k)] = 0.0;
        }
    }
    h
}

#[inline]
fn sign_of(a: f64, b: f64) -> f64 {
    if b >= 0.0 {
        a.abs()
    } else {
        -a.abs()
    }
}

/// Francis double-shift QR iteration on an upper Hessenberg matrix.
/// Classic shifted-QR with deflation scans, exceptional shifts every ten
/// sweeps, and a hard iteration cap. Internally 1-based (padded) to match
/// the reference formulation of the algorithm exactly.
fn hqr(h: &Matrix) -> Result<(Vec<f64>, Vec<f64>)> {
    let n = h.rows();
    let stride = n + 1;
    let mut a = vec![0.0f64; stride * stride];
    for i in 0..n {
        for j in 0..n {
            a[(i + 1) * stride + (j + 1)] = h[(i, j)];
        }
    }
    let mut wr = vec![0.0f64; n + 1];
    let mut wi = vec![0.0f64; n + 1];
    let eps = f64::EPSILON;

    let mut anorm = 0.0;
    for i in 1..=n {
        for j in i.saturating_sub(1).max(1)..=n {
            anorm += a[i * stride + j].abs();
        }
    }
    if anorm == 0.0 {
        anorm = 1.0;
    }

    let mut nn = n;
    let mut t = 0.0f64;
    while nn >= 1 {
        let mut its = 0usize;
        loop {
            // Scan for a negligible subdiagonal element.
            let mut l = 1;
            let mut ll = nn;
            while ll >= 2 {
                let mut s = a[(ll - 1) * stride + (ll - 1)].abs() + a[ll * stride + ll].abs();
                if s == 0.0 {
                    s = anorm;
                }
                if a[ll * stride + (ll - 1)].abs() <= eps * s {
                    a[ll * stride + (ll - 1)] = 0.0;
                    l = ll;
                    break;
                }
                ll -= 1;
            }
            let mut x = a[nn * stride + nn];
            if l == nn {
                wr[nn] = x + t;
                wi[nn] = 0.0;
                nn -= 1;
                break;
            }
            let mut y = a[(nn - 1) * stride + (nn - 1)];
            let mut w = a[nn * stride + (nn - 1)] * a[(nn - 1) * stride + nn];
            if l == nn - 1 {
                let p = 0.5 * (y - x);
                let q = p * p + w;
                let mut z = q.abs().sqrt();
                x += t;
                if q >= 0.0 {
                    z = p + sign_of(z, p);
                    wr[nn - 1] = x + z;
                    wr[nn] = wr[nn - 1];
                    if z != 0.0 {
                        wr[nn] = x - w / z;
                    }
                    wi[nn - 1] = 0.0;
                    wi[nn] = 0.0;
                } else {
                    wr[nn - 1] = x + p;
                    wr[nn] = x + p;
                    wi[nn] = z;
                    wi[nn - 1] = -z;
                }
                nn -= 2;
                break;
            }
            if its == 100 {
                return Err(Error::NumericalFailure(
                    "eigenvalue iteration did not converge within 100 sweeps".into(),
                ));
            }
            if its > 0 && its % 10 == 0 {
                // Exceptional shift to break symmetry-induced cycles.
                t += x;
                for i in 1..=nn {
                    a[i * stride + i] -= x;
                }
                let s = a[nn * stride + (nn - 1)].abs()
                    + a[(nn - 1) * stride + (nn - 2)].abs();
                x = 0.75 * s;
                y = x;
                w = -0.4375 * s * s;
            }
            its += 1;
            // Look for two consecutive small subdiagonal elements.
            let mut m = nn - 2;
            let (mut p, mut q, mut r);
            loop {
                let z = a[m * stride + m];
                let rr = x - z;
                let ss = y - z;
                p = (rr * ss - w) / a[(m + 1) * stride + m] + a[m * stride + (m + 1)];
                q = a[(m + 1) * stride + (m + 1)] - z - rr - ss;
                r = a[(m + 2) * stride + (m + 1)];
                let s = p.abs() + q.abs() + r.abs();
                p /= s;
                q /= s;
                r /= s;
                if m == l {
                    break;
                }
                let u = a[m * stride + (m - 1)].abs() * (q.abs() + r.abs());
                let v = p.abs()
                    * (a[(m - 1) * stride + (m - 1)].abs()
                        + z.abs()
                        + a[(m + 1) * stride + (m + 1)].abs());
                if u <= eps * v {
                    break;
                }
                m -= 1;
            }
            for i in m + 2..=nn {
                a[i * stride + (i - 2)] = 0.0;
                if i != m + 2 {
                    a[i * stride + (i - 3)] = 0.0;
                }
            }
            // Double QR sweep over rows l..nn, columns m..nn.
            for k in m..=nn - 1 {
                if k != m {
                    p = a[k * stride + (k - 1)];
                    q = a[(k + 1) * stride + (k - 1)];
                    r = if k != nn - 1 { a[(k + 2) * stride + (k - 1)] } else { 0.0 };
                    x = p.abs() + q.abs() + r.abs();
                    if x != 0.0 {
                        p /= x;
                        q /= x;
                        r /= x;
                    }
                }
                let s = sign_of((p * p + q * q + r * r).sqrt(), p);
                if s == 0.0 {
                    continue;
                }
                if k == m {
                    if l != m {
                        a[k * stride + (k - 1)] = -a[k * stride + (k - 1)];
                    }
                } else {
                    a[k * stride + (k - 1)] = -s * x;
                }
                p += s;
                x = p / s;
                let yy = q / s;
                let zz = r / s;
                q /= p;
                r /= p;
                for j in k..=nn {
                    let mut pp = a[k * stride + j] + q * a[(k + 1) * stride + j];
                    if k != nn - 1 {
                        pp += r * a[(k + 2) * stride + j];
                        a[(k + 2) * stride + j] -= pp * zz;
                    }
                    a[(k + 1) * stride + j] -= pp * yy;
                    a[k * stride + j] -= pp * x;
                }
                let mmin = nn.min(k + 3);
                for i in l..=mmin {
                    let mut pp = x * a[i * stride + k] + yy * a[i * stride + (k + 1)];
                    if k != nn - 1 {
                        pp += zz * a[i * stride + (k + 2)];
                        a[i * stride + (k + 2)] -= pp * r;
                    }
                    a[i * stride + (k + 1)] -= pp * q;
                    a[i * stride + k] -= pp;
                }
            }
        }
    }
    Ok((wr[1..].to_vec(), wi[1..].to_vec()))
}

/// All eigenvalues of a real square matrix (complex conjugate pairs appear
/// as such). Dimension cap 32 as with the other dense solvers; the
/// Hamiltonian path doubles that internally, so 64 is accepted here.
pub fn eigenvalues(a: &Matrix) -> Result<Vec<Complex64>> {
    if !a.is_square() {
        return Err(Error::Dimension("eigenvalues need a square matrix".into()));
    }
    if a.rows() > 64 {
        return Err(Error::Dimension(format!(
            "dimension {} exceeds the dense eigenvalue cap of 64",
            a.rows()
        )));
    }
    if !a.all_finite() {
        return Err(Error::NumericalFailure("eigenvalue input has non-finite entries".into()));
    }
    let n = a.rows();
    if n == 0 {
        return Ok(vec![]);
    }
    if n == 1 {
        return Ok(vec![Complex64::new(a[(0, 0)], 0.0)]);
    }
    let h = hessenberg(a);
    let (wr, wi) = hqr(&h)?;
    Ok(wr.into_iter().zip(wi).map(|(re, im)| Complex64::new(re, im)).collect())
}

pub fn spectrum(a: &Matrix) -> Result<SpectrumReport> {
    let eigenvalues = eigenvalues(a)?;
    let max_real_part = eigenvalues.iter().map(|z| z.re).fold(f64::NEG_INFINITY, f64::max);
    let spectral_radius = eigenvalues.iter().map(|z| z.norm()).fold(0.0, f64::max);
    Ok(SpectrumReport { eigenvalues, max_real_part, spectral_radius })
}

/// All eigenvalues strictly left of -margin.
pub fn is_hurwitz(a: &Matrix, margin: f64) -> Result<bool> {
    Ok(spectrum(a)?.max_real_part < -margin)
}

/// Unit eigenvector for an isolated eigenvalue by shifted inverse
/// iteration. The LU inside tolerates the (near-)singular shift; four
/// iterations are ample for the well-separated spectra this crate feeds in.
pub fn eigenvector(a: &Matrix, lambda: Complex64) -> Result<Vec<Complex64>> {
    let n = a.rows();
    if n == 0 {
        return Err(Error::Dimension("eigenvector of empty matrix".into()));
    }
    let mut shifted = vec![Complex64::new(0.0, 0.0); n * n];
    for i in 0..n {
        for j in 0..n {
            shifted[i * n + j] = Complex64::new(a[(i, j)], 0.0);
        }
        shifted[i * n + i] -= lambda;
    }
    // Deterministic start vector with no accidental structure.
    let mut v: Vec<Complex64> = (0..n)
        .map(|j| {
            let x = j as f64;
            Complex64::new(1.0 + 0.37 * (1.3 * x + 0.2).cos(), 0.23 * (2.1 * x + 0.7).sin())
        })
        .collect();
    normalize(&mut v);
    for _ in 0..4 {
        let mut w = complex_solve(&shifted, n, &v)?;
        normalize(&mut w);
        v = w;
    }
    Ok(v)
}

fn normalize(v: &mut [Complex64]) {
    let norm = v.iter().map(|z| z.norm_sqr()).sum::<f64>().sqrt();
    if norm > 0.0 {
        for z in v.iter_mut() {
            *z /= norm;
        }
    }
}

/// ||(A - lambda I) v|| for a unit vector v; the standard eigenpair residual.
pub fn eigenpair_residual(a: &Matrix, lambda: Complex64, v: &[Complex64]) -> f64 {
    let n = a.rows();
    let mut res = 0.0;
    for i in 0..n {
        let mut acc = -lambda * v[i];
        for j in 0..n {
            acc += a[(i, j)] * v[j];
        }
        res += acc.norm_sqr();
    }
    res.sqrt()
}
