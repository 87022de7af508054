//! Independent verification of everything the averaged solver and the
//! corrector series claim: a shooting reference for the periodic Riccati
//! orbit, defect and convergence-order measurement, Floquet stability of
//! the closed loop, and time-domain simulation with the game functional.

use num_complex::Complex64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::expansion::ExpansionSeries;
use crate::matkit::{self, Lu, Matrix};
use crate::periodic::PeriodicMatrix;
use crate::riccati::riccati_residual;
use crate::vibration::{psi, AveragedSystem, PhaseConvention, SystemSpec};

const TWO_PI: f64 = 2.0 * std::f64::consts::PI;

/// RK4 steps per fast period in the shooting and Floquet integrators.
pub const STEPS_PER_PERIOD: usize = 4096;

/// Newton iteration cap for the shooting solve.
pub const SHOOTING_MAX_ITERS: usize = 50;

/// Monodromy radius must clear the unit circle by this much for an
/// exponential stability certificate.
pub const FLOQUET_MARGIN: f64 = 1e-9;

/// State norms beyond this relative blow-up abort an integration.
const DIVERGENCE_LIMIT: f64 = 1e12;

/// Coefficient samples at the half-step nodes tau_i = i * pi/(steps),
/// i = 0..2*steps, so one RK4 sweep never interpolates.
struct DenseCoeffs {
    a: Vec<Matrix>,
    d: Vec<Matrix>,
    c: Vec<Matrix>,
}

fn densify(avg: &AveragedSystem, steps: usize) -> DenseCoeffs {
    let nodes = 2 * steps;
    let fa = avg.a_per.fourier();
    let fd = avg.d_per.fourier();
    let fc = avg.c_per.fourier();
    let mut a = Vec::with_capacity(nodes + 1);
    let mut d = Vec::with_capacity(nodes + 1);
    let mut c = Vec::with_capacity(nodes + 1);
    for i in 0..=nodes {
        let tau = TWO_PI * i as f64 / nodes as f64;
        a.push(fa.eval(tau));
        d.push(fd.eval(tau).symmetric_part());
        c.push(fc.eval(tau).symmetric_part());
    }
    DenseCoeffs { a, d, c }
}

/// One period of the matrix Riccati flow dP/dtau = eps * B(tau, P) by
/// classical RK4, recording the state every `record_stride` steps into
/// `trace` when given. Returns P(2 pi).
fn integrate_period(
    coeffs: &DenseCoeffs,
    epsilon: f64,
    p0: &Matrix,
    steps: usize,
    mut trace: Option<(&mut Vec<Matrix>, usize)>,
) -> Result<Matrix> {
    let h = TWO_PI / steps as f64;
    let mut p = p0.clone();
    let scale0 = 1.0 + p0.max_abs();
    let rhs = |i: usize, p: &Matrix| -> Matrix {
        riccati_residual(&coeffs.a[i], &coeffs.d[i], &coeffs.c[i], p).scale(epsilon)
    };
    for step in 0..steps {
        if let Some((trace, stride)) = trace.as_mut() {
            if step % *stride == 0 {
                trace.push(p.clone());
            }
        }
        let i0 = 2 * step;
        let k1 = rhs(i0, &p);
        let k2 = rhs(i0 + 1, &(&p + &k1.scale(h / 2.0)));
        let k3 = rhs(i0 + 1, &(&p + &k2.scale(h / 2.0)));
        let k4 = rhs(i0 + 2, &(&p + &k3.scale(h)));
        let incr = &(&k1 + &k4) + &(&k2 + &k3).scale(2.0);
        p = (&p + &incr.scale(h / 6.0)).symmetric_part();
        if !p.all_finite() || p.max_abs() > DIVERGENCE_LIMIT * scale0 {
            return Err(Error::Divergence(format!(
                "Riccati flow blew up at step {step} of {steps}"
            )));
        }
    }
    Ok(p)
}

fn vech(m: &Matrix) -> Vec<f64> {
    let n = m.rows();
    let mut v = Vec::with_capacity(n * (n + 1) / 2);
    for i in 0..n {
        for j in 0..=i {
            v.push(m[(i, j)]);
        }
    }
    v
}

fn unvech(v: &[f64], n: usize) -> Matrix {
    let mut m = Matrix::zeros(n, n);
    let mut idx = 0;
    for i in 0..n {
        for j in 0..=i {
            m[(i, j)] = v[idx];
            m[(j, i)] = v[idx];
            idx += 1;
        }
    }
    m
}

/// The 2 pi-periodic solution of the fast-time Riccati flow by single
/// shooting: Newton on the n(n+1)/2 free entries of P(0), the period map
/// computed with fixed-step RK4, finite-difference Jacobian. The orbit is
/// returned sampled on the grid of `avg` and is certified stabilizing
/// (Floquet radius below one) before being handed back.
pub fn reference_solution(
    avg: &AveragedSystem,
    epsilon: f64,
    init: &Matrix,
) -> Result<PeriodicMatrix> {
    if !(epsilon > 0.0) || !epsilon.is_finite() {
        return Err(Error::Precondition("epsilon must be positive and finite".into()));
    }
    let n = avg.n();
    if init.rows() != n || init.cols() != n {
        return Err(Error::Dimension("warm start must be n x n".into()));
    }
    let init = init.clone().into_symmetric("shooting warm start")?;
    let grid = avg.a_per.grid_size();
    if STEPS_PER_PERIOD % grid != 0 {
        return Err(Error::Precondition(format!(
            "grid size {grid} must divide the integrator step count {STEPS_PER_PERIOD}"
        )));
    }

    let coeffs = densify(avg, STEPS_PER_PERIOD);
    let m = n * (n + 1) / 2;
    let mut x = vech(&init);

    let period_map = |x: &[f64]| -> Result<Vec<f64>> {
        let p0 = unvech(x, n);
        let p1 = integrate_period(&coeffs, epsilon, &p0, STEPS_PER_PERIOD, None)?;
        Ok(vech(&(&p1 - &p0)))
    };

    let mut converged = false;
    for _ in 0..SHOOTING_MAX_ITERS {
        let res = period_map(&x)?;
        let res_norm = res.iter().fold(0.0f64, |acc, r| acc.max(r.abs()));
        let x_norm = x.iter().fold(0.0f64, |acc, v| acc.max(v.abs()));
        if res_norm <= 1e-12 * (1.0 + x_norm) {
            converged = true;
            break;
        }
        // Finite-difference Jacobian of the return-map residual.
        let fd = 1e-7 * (1.0 + x_norm);
        let mut jac = Matrix::zeros(m, m);
        for col in 0..m {
            let mut xp = x.clone();
            xp[col] += fd;
            let rp = period_map(&xp)?;
            for row in 0..m {
                jac[(row, col)] = (rp[row] - res[row]) / fd;
            }
        }
        let lu = Lu::factor(&jac)?;
        let delta = lu.solve_vec(&res.iter().map(|r| -r).collect::<Vec<f64>>())?;
        for i in 0..m {
            x[i] += delta[i];
        }
    }
    if !converged {
        return Err(Error::NumericalFailure(format!(
            "no periodic reference: shooting Newton did not converge \
             within {SHOOTING_MAX_ITERS} iterations at epsilon = {epsilon}"
        )));
    }

    // Final sweep from the converged start, recording the orbit on the
    // requested grid, plus the self-consistency check.
    let p0 = unvech(&x, n);
    let mut trace = Vec::with_capacity(grid);
    let p_end = integrate_period(
        &coeffs,
        epsilon,
        &p0,
        STEPS_PER_PERIOD,
        Some((&mut trace, STEPS_PER_PERIOD / grid)),
    )?;
    if (&p_end - &p0).max_abs() > 1e-9 * (1.0 + p0.max_abs()) {
        return Err(Error::NumericalFailure(
            "periodic reference failed its return-map self-check".into(),
        ));
    }
    let orbit = PeriodicMatrix::from_samples(TWO_PI, trace)?;

    let floq = floquet_transformed(avg, &orbit, epsilon)?;
    if !floq.stable {
        return Err(Error::Inconsistent(format!(
            "shooting converged to a non-stabilizing orbit (Floquet radius {:.6})",
            floq.radius
        )));
    }
    Ok(orbit)
}

/// Sup over the grid of the truncation defect
/// ||dP_N/dtau - eps * B(tau, P_N)||, derivative taken spectrally.
pub fn defect_sup(avg: &AveragedSystem, series: &ExpansionSeries, epsilon: f64) -> f64 {
    let p = series.fast_on_grid(epsilon);
    let dp = p.derivative();
    let grid = p.grid_size();
    let mut sup = 0.0f64;
    for j in 0..grid {
        let bracket = riccati_residual(
            avg.a_per.sample(j),
            avg.d_per.sample(j),
            avg.c_per.sample(j),
            p.sample(j),
        );
        let defect = (dp.sample(j) - &bracket.scale(epsilon)).max_abs();
        sup = sup.max(defect);
    }
    sup
}

#[derive(Debug, Clone)]
pub struct FloquetReport {
    pub monodromy: Matrix,
    pub radius: f64,
    /// radius < 1 - margin: exponential stability certificate.
    pub stable: bool,
    pub multipliers: Vec<Complex64>,
}

fn floquet_from_rhs(
    n: usize,
    rhs_matrix: impl Fn(usize) -> Matrix,
    steps: usize,
) -> Result<FloquetReport> {
    // Columnwise RK4 on the fundamental matrix from the identity; the
    // coefficient is indexed by half-step node like the Riccati sweep.
    let h = TWO_PI / steps as f64;
    let mut phi = Matrix::identity(n);
    for step in 0..steps {
        let i0 = 2 * step;
        let m1 = rhs_matrix(i0);
        let m2 = rhs_matrix(i0 + 1);
        let m4 = rhs_matrix(i0 + 2);
        let k1 = &m1 * &phi;
        let k2 = &m2 * &(&phi + &k1.scale(h / 2.0));
        let k3 = &m2 * &(&phi + &k2.scale(h / 2.0));
        let k4 = &m4 * &(&phi + &k3.scale(h));
        let incr = &(&k1 + &k4) + &(&k2 + &k3).scale(2.0);
        phi = &phi + &incr.scale(h / 6.0);
        if !phi.all_finite() || phi.max_abs() > DIVERGENCE_LIMIT {
            return Err(Error::Divergence(format!(
                "fundamental matrix blew up at step {step} of {steps}"
            )));
        }
    }
    let multipliers = matkit::eigenvalues(&phi)?;
    let radius = multipliers.iter().fold(0.0f64, |acc, z| acc.max(z.norm()));
    Ok(FloquetReport {
        stable: radius < 1.0 - FLOQUET_MARGIN,
        monodromy: phi,
        radius,
        multipliers,
    })
}

/// Monodromy of the transformed closed loop dxi/dtau = eps (Acal - Dcal P) xi.
pub fn floquet_transformed(
    avg: &AveragedSystem,
    p: &PeriodicMatrix,
    epsilon: f64,
) -> Result<FloquetReport> {
    let steps = STEPS_PER_PERIOD;
    let coeffs = densify(avg, steps);
    let fp = p.fourier();
    let nodes = 2 * steps;
    let p_dense: Vec<Matrix> = (0..=nodes)
        .map(|i| fp.eval(TWO_PI * i as f64 / nodes as f64).symmetric_part())
        .collect();
    floquet_from_rhs(
        avg.n(),
        |i| (&coeffs.a[i] - &(&coeffs.d[i] * &p_dense[i])).scale(epsilon),
        steps,
    )
}

/// Monodromy of the original-coordinate closed loop
/// dx/dtau = [eps A + sin(tau) K - eps D R(tau)] x, with R given on the
/// period grid.
pub fn floquet_original(
    spec: &SystemSpec,
    r_of_tau: &PeriodicMatrix,
    epsilon: f64,
) -> Result<FloquetReport> {
    let n = spec.n();
    if r_of_tau.rows() != n || r_of_tau.cols() != n {
        return Err(Error::Dimension("closed-loop solution must be n x n".into()));
    }
    let steps = STEPS_PER_PERIOD;
    let nodes = 2 * steps;
    let d = spec.d_matrix();
    let fr = r_of_tau.fourier();
    let a_eps = spec.a().scale(epsilon);
    let rhs: Vec<Matrix> = (0..=nodes)
        .map(|i| {
            let tau = TWO_PI * i as f64 / nodes as f64;
            let r = fr.eval(tau).symmetric_part();
            &(&a_eps + &spec.k().scale(tau.sin())) - &(&d * &r).scale(epsilon)
        })
        .collect();
    floquet_from_rhs(n, |i| rhs[i].clone(), steps)
}

/// Back-transform a fast-coordinate orbit to original coordinates on its
/// own grid: R(tau_j) = Psi(tau_j) P(tau_j) Psi(tau_j)^T.
pub fn original_orbit(
    p: &PeriodicMatrix,
    k: &Matrix,
    convention: PhaseConvention,
) -> Result<PeriodicMatrix> {
    let grid = p.grid_size();
    let mut samples = Vec::with_capacity(grid);
    for j in 0..grid {
        let phase = psi(k, p.node(j), convention)?;
        samples.push((&(&phase * p.sample(j)) * &phase.transpose()).symmetric_part());
    }
    PeriodicMatrix::from_samples(p.period(), samples)
}

/// How the controller obtains the Riccati solution it feeds back.
#[derive(Debug, Clone)]
pub enum RSource {
    /// Constant R, e.g. the averaged algebraic solution.
    Constant(Matrix),
    /// Periodic fast-time solution in original coordinates; evaluated at
    /// tau = t / epsilon.
    Periodic(PeriodicMatrix),
}

/// Control law for a simulation run.
#[derive(Debug, Clone)]
pub enum Controller {
    /// u = 0.
    Zero,
    /// Constant saddle gains u = -Ku x (with Kw available for w*).
    Gains(crate::hinf::GainPair),
    /// Gains rebuilt from R at every evaluation: u = -B1^T R x.
    FromR(RSource),
}

/// Disturbance library. All signals have finite energy on the horizon
/// and are analytic in t, so the integrator sees smooth data.
#[derive(Debug, Clone)]
pub enum WSignal {
    Zero,
    /// Gaussian pulse amplitude * exp(-((t - center)/width)^2) on every
    /// disturbance channel.
    Bump { center: f64, width: f64, amplitude: f64 },
    /// Band-limited noise: a trigonometric series on the horizon with
    /// coefficients drawn uniformly from [-1, 1] by a seeded generator.
    Noise { seed: u64, harmonics: usize, amplitude: f64 },
    /// Worst-case feedback w = Kw x (the maximizing player).
    WorstCase,
    /// Worst-case feedback plus a Gaussian pulse, for energizing the
    /// saddle point from x(0) = 0.
    WorstCasePlusBump { center: f64, width: f64, amplitude: f64 },
}

impl WSignal {
    fn needs_gains(&self) -> bool {
        matches!(self, WSignal::WorstCase | WSignal::WorstCasePlusBump { .. })
    }
}

#[derive(Debug, Clone)]
pub struct SimulationPlan {
    pub controller: Controller,
    pub disturbance: WSignal,
    pub x0: Vec<f64>,
    pub horizon: f64,
    pub step: f64,
    /// Record every this-many steps (0 = choose automatically so about
    /// two thousand rows come back).
    pub sample_stride: usize,
}

#[derive(Debug, Clone)]
pub struct SimulationResult {
    pub time: Vec<f64>,
    /// Row i holds x(time[i]).
    pub states: Vec<Vec<f64>>,
    pub z: Vec<Vec<f64>>,
    pub u: Vec<Vec<f64>>,
    pub w: Vec<Vec<f64>>,
    /// Game functional: integral of ||z||^2 + ||u||^2 - gamma^2 ||w||^2,
    /// trapezoidal rule on the integration grid.
    pub j_value: f64,
    pub z_energy: f64,
    pub u_energy: f64,
    pub w_energy: f64,
    /// Integral of ||w - Kw x||^2 with Kw from the active controller
    /// (the zero matrix under the zero controller).
    pub mismatch_energy: f64,
    /// ||z||_2 / ||w||_2 over the horizon; zero for a silent disturbance.
    pub gain_estimate: f64,
}

/// Controller gains with the periodic source pre-analyzed, so stepping
/// costs one interpolant synthesis instead of a fresh Fourier analysis.
enum GainEval<'a> {
    Fixed(Matrix, Matrix),
    Periodic { spec: &'a SystemSpec, fourier: crate::periodic::Fourier },
}

impl<'a> GainEval<'a> {
    fn prepare(spec: &'a SystemSpec, controller: &Controller) -> GainEval<'a> {
        let from_r = |r: &Matrix| {
            (
                &spec.b1().transpose() * r,
                (&spec.b2().transpose() * r).scale(spec.gamma.powi(-2)),
            )
        };
        match controller {
            Controller::Zero => GainEval::Fixed(
                Matrix::zeros(spec.b1().cols(), spec.n()),
                Matrix::zeros(spec.b2().cols(), spec.n()),
            ),
            Controller::Gains(g) => GainEval::Fixed(g.ku.clone(), g.kw.clone()),
            Controller::FromR(RSource::Constant(r)) => {
                let (ku, kw) = from_r(r);
                GainEval::Fixed(ku, kw)
            }
            Controller::FromR(RSource::Periodic(r)) => {
                GainEval::Periodic { spec, fourier: r.fourier() }
            }
        }
    }

    /// (Ku, Kw) at slow time t.
    fn gains_at(&self, t: f64) -> (Matrix, Matrix) {
        match self {
            GainEval::Fixed(ku, kw) => (ku.clone(), kw.clone()),
            GainEval::Periodic { spec, fourier } => {
                let tau = (t / spec.epsilon).rem_euclid(TWO_PI);
                let r = fourier.eval(tau).symmetric_part();
                (
                    &spec.b1().transpose() * &r,
                    (&spec.b2().transpose() * &r).scale(spec.gamma.powi(-2)),
                )
            }
        }
    }
}

/// Closed-loop simulation in original coordinates over slow time [0, T]:
/// RK4 on dx/dt = A x + (1/eps) sin(t/eps) K x + B1 u + B2 w with the
/// requested control law and disturbance, the game functional and signal
/// energies accumulated by the trapezoidal rule.
pub fn simulate(spec: &SystemSpec, plan: &SimulationPlan) -> Result<SimulationResult> {
    if !(plan.horizon > 0.0) || !(plan.step > 0.0) {
        return Err(Error::Precondition("horizon and step must be positive".into()));
    }
    if plan.x0.len() != spec.n() {
        return Err(Error::Dimension("initial state dimension mismatch".into()));
    }
    if plan.disturbance.needs_gains() && matches!(plan.controller, Controller::Zero) {
        return Err(Error::Precondition(
            "worst-case disturbance needs a controller with saddle gains".into(),
        ));
    }
    let n = spec.n();
    let q = spec.b2().cols();
    let steps = (plan.horizon / plan.step).ceil() as usize;
    if steps == 0 || steps > 50_000_000 {
        return Err(Error::Precondition(format!(
            "step {} gives {steps} integration steps; refusing",
            plan.step
        )));
    }
    let h = plan.horizon / steps as f64;
    let gamma2 = spec.gamma * spec.gamma;
    let eval = GainEval::prepare(spec, &plan.controller);

    // Open-loop part of the disturbance as an analytic function of t.
    let noise_coeffs: Option<Vec<(f64, f64, f64)>> = match plan.disturbance {
        WSignal::Noise { seed, harmonics, amplitude } => {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let m = harmonics.max(1);
            let base = TWO_PI / plan.horizon;
            let scale = amplitude / (m as f64).sqrt();
            Some(
                (1..=m)
                    .map(|i| {
                        let a: f64 = rng.gen_range(-1.0..1.0);
                        let b: f64 = rng.gen_range(-1.0..1.0);
                        (i as f64 * base, a * scale, b * scale)
                    })
                    .collect(),
            )
        }
        _ => None,
    };
    let open_loop_w = |t: f64| -> Vec<f64> {
        let scalar = match &plan.disturbance {
            WSignal::Zero | WSignal::WorstCase => 0.0,
            WSignal::Bump { center, width, amplitude }
            | WSignal::WorstCasePlusBump { center, width, amplitude } => {
                let s = (t - center) / width;
                amplitude * (-s * s).exp()
            }
            WSignal::Noise { .. } => {
                let coeffs = noise_coeffs.as_ref().unwrap();
                coeffs
                    .iter()
                    .map(|&(w, a, b)| a * (w * t).cos() + b * (w * t).sin())
                    .sum()
            }
        };
        vec![scalar; q]
    };
    let feedback_w = matches!(
        plan.disturbance,
        WSignal::WorstCase | WSignal::WorstCasePlusBump { .. }
    );

    // Signals at (t, x): control, disturbance, state derivative, and the
    // saddle disturbance w* = Kw x for the mismatch accumulator.
    let signals = |t: f64, x: &[f64]| -> (Vec<f64>, Vec<f64>, Vec<f64>, Vec<f64>) {
        let (ku, kw) = eval.gains_at(t);
        let u: Vec<f64> = (0..ku.rows())
            .map(|i| -(0..n).map(|j| ku[(i, j)] * x[j]).sum::<f64>())
            .collect();
        let wstar: Vec<f64> = (0..q)
            .map(|i| (0..n).map(|j| kw[(i, j)] * x[j]).sum())
            .collect();
        let mut w = open_loop_w(t);
        if feedback_w {
            for i in 0..q {
                w[i] += wstar[i];
            }
        }
        let mut dx = vec![0.0; n];
        let fast = (t / spec.epsilon).sin() / spec.epsilon;
        for i in 0..n {
            let mut acc = 0.0;
            for j in 0..n {
                acc += (spec.a()[(i, j)] + fast * spec.k()[(i, j)]) * x[j];
            }
            for (l, ul) in u.iter().enumerate() {
                acc += spec.b1()[(i, l)] * ul;
            }
            for (l, wl) in w.iter().enumerate() {
                acc += spec.b2()[(i, l)] * wl;
            }
            dx[i] = acc;
        }
        (u, w, dx, wstar)
    };
    let derivative = |t: f64, x: &[f64]| signals(t, x).2;

    // Integrand samples for the trapezoidal accumulators.
    let z_of = |x: &[f64]| -> Vec<f64> {
        (0..spec.l().rows())
            .map(|i| (0..n).map(|j| spec.l()[(i, j)] * x[j]).sum())
            .collect()
    };
    let sq = |v: &[f64]| v.iter().map(|e| e * e).sum::<f64>();

    let stride = if plan.sample_stride > 0 {
        plan.sample_stride
    } else {
        (steps / 2000).max(1)
    };

    let mut x = plan.x0.clone();
    let mut result = SimulationResult {
        time: Vec::new(),
        states: Vec::new(),
        z: Vec::new(),
        u: Vec::new(),
        w: Vec::new(),
        j_value: 0.0,
        z_energy: 0.0,
        u_energy: 0.0,
        w_energy: 0.0,
        mismatch_energy: 0.0,
        gain_estimate: 0.0,
    };
    let x0_scale = 1.0 + sq(&x).sqrt();

    // Trapezoid: accumulate half-weights at segment ends.
    let mut prev: Option<(f64, f64, f64, f64, f64)> = None;
    for step in 0..=steps {
        let t = step as f64 * h;
        let (u, w, _, wstar) = signals(t, &x);
        let z = z_of(&x);
        let mismatch = sq(&w
            .iter()
            .zip(&wstar)
            .map(|(a, b)| a - b)
            .collect::<Vec<f64>>());
        let zz = sq(&z);
        let uu = sq(&u);
        let ww = sq(&w);
        let g = zz + uu - gamma2 * ww;
        if let Some((pg, pz, pu, pw, pm)) = prev {
            result.j_value += 0.5 * h * (pg + g);
            result.z_energy += 0.5 * h * (pz + zz);
            result.u_energy += 0.5 * h * (pu + uu);
            result.w_energy += 0.5 * h * (pw + ww);
            result.mismatch_energy += 0.5 * h * (pm + mismatch);
        }
        prev = Some((g, zz, uu, ww, mismatch));

        if step % stride == 0 || step == steps {
            result.time.push(t);
            result.states.push(x.clone());
            result.z.push(z);
            result.u.push(u);
            result.w.push(w);
        }
        if step == steps {
            break;
        }

        // Classical RK4 on the state.
        let k1 = derivative(t, &x);
        let xk = |k: &[f64], f: f64| -> Vec<f64> {
            x.iter().zip(k).map(|(xi, ki)| xi + f * ki).collect()
        };
        let k2 = derivative(t + h / 2.0, &xk(&k1, h / 2.0));
        let k3 = derivative(t + h / 2.0, &xk(&k2, h / 2.0));
        let k4 = derivative(t + h, &xk(&k3, h));
        for i in 0..n {
            x[i] += h / 6.0 * (k1[i] + 2.0 * k2[i] + 2.0 * k3[i] + k4[i]);
        }
        if !x.iter().all(|v| v.is_finite()) || sq(&x).sqrt() > DIVERGENCE_LIMIT * x0_scale {
            return Err(Error::Divergence(format!(
                "state blew up at t = {t:.4} of {:.4}",
                plan.horizon
            )));
        }
    }

    if !result.j_value.is_finite() {
        return Err(Error::Divergence("game functional is not finite".into()));
    }
    result.gain_estimate = if result.w_energy > 0.0 {
        (result.z_energy / result.w_energy).sqrt()
    } else {
        0.0
    };
    Ok(result)
}

/// Default horizon: forty closed-loop time constants.
pub fn default_horizon(closed_loop: &Matrix) -> Result<f64> {
    let spec = matkit::spectrum(closed_loop)?;
    if spec.max_real_part >= 0.0 {
        return Err(Error::Precondition(
            "closed loop is not Hurwitz; no natural horizon".into(),
        ));
    }
    Ok(40.0 / spec.max_real_part.abs())
}

#[derive(Debug, Clone)]
pub struct VerificationReport {
    pub order: usize,
    pub epsilon_grid: Vec<f64>,
    pub defect_sup: Vec<f64>,
    pub series_error_sup: Vec<f64>,
    /// (defect_order, error_order): mean log2 slopes over consecutive
    /// dyadic pairs.
    pub estimated_orders: (f64, f64),
    pub floquet_radius: Vec<f64>,
    pub positive_definite_ok: Vec<bool>,
    /// Largest epsilon on the grid with every certificate passing.
    pub epsilon_star: Option<f64>,
    /// True when every measured quantity sits at the numerical floor
    /// (constant-coefficient plants), making slopes meaningless.
    pub exact_regime: bool,
}

fn mean_log2_slope(values: &[f64]) -> f64 {
    let mut slopes = Vec::new();
    for pair in values.windows(2) {
        slopes.push((pair[0] / pair[1]).log2());
    }
    slopes.iter().sum::<f64>() / slopes.len() as f64
}

/// Measure convergence of the order-N series on a dyadic epsilon grid
/// against shooting references, with stability and definiteness
/// certificates per epsilon.
///
/// `references` may carry precomputed orbits for exactly this grid (the
/// acceptance sweep shares them across orders); pass `None` to shoot here.
pub fn convergence_order(
    avg: &AveragedSystem,
    series: &ExpansionSeries,
    epsilon_grid: &[f64],
    references: Option<&[PeriodicMatrix]>,
) -> Result<VerificationReport> {
    if epsilon_grid.len() < 3 {
        return Err(Error::Precondition(
            "convergence measurement needs at least 3 epsilon values".into(),
        ));
    }
    for pair in epsilon_grid.windows(2) {
        if !(pair[1] > 0.0) || (pair[0] / pair[1] - 2.0).abs() > 1e-12 {
            return Err(Error::Precondition(
                "epsilon grid must be strictly decreasing dyadically".into(),
            ));
        }
    }
    if let Some(refs) = references {
        if refs.len() != epsilon_grid.len() {
            return Err(Error::Dimension(
                "one reference orbit per epsilon is required".into(),
            ));
        }
    }

    let mut defects = Vec::with_capacity(epsilon_grid.len());
    let mut errors = Vec::with_capacity(epsilon_grid.len());
    let mut radii = Vec::with_capacity(epsilon_grid.len());
    let mut pd_ok = Vec::with_capacity(epsilon_grid.len());
    let mut epsilon_star = None;

    for (i, &eps) in epsilon_grid.iter().enumerate() {
        let p_series = series.fast_on_grid(eps);
        let reference = match references {
            Some(refs) => refs[i].clone(),
            None => reference_solution(avg, eps, &series.eval_fast(0.0, eps))?,
        };
        let err = p_series
            .zip_with(&reference, |a, b| a - b)?
            .sup_norm();
        errors.push(err);
        defects.push(defect_sup(avg, series, eps));

        let floq = floquet_transformed(avg, &reference, eps)?;
        radii.push(floq.radius);
        let pd = (0..reference.grid_size())
            .all(|j| matkit::is_positive_definite(reference.sample(j)).unwrap_or(false));
        pd_ok.push(pd);
        if floq.stable && pd && epsilon_star.is_none() {
            epsilon_star = Some(eps);
        }
    }

    // Slopes are meaningless at the numerical floor; flag that regime
    // instead of reporting noise as an order.
    let scale = 1.0 + series.constant(0).max_abs();
    let exact_regime = errors.iter().all(|e| *e < 1e-10 * scale)
        && defects.iter().all(|d| *d < 1e-10 * scale);
    let estimated_orders = if exact_regime {
        (f64::INFINITY, f64::INFINITY)
    } else {
        (mean_log2_slope(&defects), mean_log2_slope(&errors))
    };

    Ok(VerificationReport {
        order: series.order(),
        epsilon_grid: epsilon_grid.to_vec(),
        defect_sup: defects,
        series_error_sup: errors,
        estimated_orders,
        floquet_radius: radii,
        positive_definite_ok: pd_ok,
        epsilon_star,
        exact_regime,
    })
}
