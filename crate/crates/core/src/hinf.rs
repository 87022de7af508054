//! Best achievable disturbance attenuation. A level gamma is feasible
//! when the averaged game Riccati equation with
//! D(gamma) = D1 - gamma^{-2} D2 has a stabilizing positive definite
//! solution; the infimum gamma* of the feasible set is located by
//! doubling until feasible and bisecting the bracket.

use crate::error::{Error, Result};
use crate::matkit::{is_positive_definite, Matrix};
use crate::riccati::{is_feasible, FeasibilityReport, StabilizingSolution};
use crate::vibration::{averaged_split_weights, PhaseConvention, SystemSpec};

pub const DEFAULT_GAMMA_TOL: f64 = 1e-4;
pub const DEFAULT_GAMMA_MAX: f64 = 1e6;

/// Where the averaged Riccati data for a candidate gamma comes from.
#[derive(Debug, Clone)]
pub enum GammaSource {
    /// Full pipeline: transform the plant, average, and assemble
    /// D(gamma) from the separately averaged input weights.
    Plant {
        spec: SystemSpec,
        grid: usize,
        convention: PhaseConvention,
    },
    /// Averaged matrices given directly, with D(gamma) = d1 - gamma^{-2} d2.
    Explicit {
        a_bar: Matrix,
        d1: Matrix,
        d2: Matrix,
        c_bar: Matrix,
    },
}

struct EvalData {
    a: Matrix,
    d1: Matrix,
    d2: Matrix,
    c: Matrix,
}

impl EvalData {
    fn probe(&self, gamma: f64) -> FeasibilityReport {
        let d = &self.d1 - &self.d2.scale(gamma.powi(-2));
        is_feasible(&self.a, &d, &self.c)
    }
}

#[derive(Debug)]
pub struct GammaResult {
    /// Midpoint of the final bracket.
    pub gamma_star: f64,
    /// Infeasible lower bracket endpoint (0 when every probe came back
    /// feasible).
    pub lower: f64,
    /// Feasible upper bracket endpoint.
    pub upper: f64,
    /// Bracket width the search was asked for; upper - lower <= tolerance.
    pub tolerance: f64,
    /// Number of feasibility probes spent, endpoint re-checks included.
    pub evaluations: usize,
    /// Every probe in evaluation order.
    pub verdicts: Vec<(f64, bool)>,
    /// Stabilizing solution at `upper`.
    pub certificate: StabilizingSolution,
}

fn prepare(source: &GammaSource) -> Result<EvalData> {
    match source {
        GammaSource::Plant { spec, grid, convention } => {
            let split = averaged_split_weights(spec, *grid, *convention)?;
            Ok(EvalData {
                a: split.a_bar,
                d1: split.control_bar,
                d2: split.disturbance_bar,
                c: split.c_bar,
            })
        }
        GammaSource::Explicit { a_bar, d1, d2, c_bar } => {
            if !a_bar.is_square()
                || d1.rows() != a_bar.rows()
                || d2.rows() != a_bar.rows()
                || c_bar.rows() != a_bar.rows()
                || !d1.is_square()
                || !d2.is_square()
                || !c_bar.is_square()
            {
                return Err(Error::Dimension(
                    "averaged matrices must all be square of the same size".into(),
                ));
            }
            Ok(EvalData {
                a: a_bar.clone(),
                d1: d1.clone().into_symmetric("control weight")?,
                d2: d2.clone().into_symmetric("disturbance weight")?,
                c: c_bar.clone().into_symmetric("output weight")?,
            })
        }
    }
}

/// Locate the attenuation infimum to within `tol` and certify both sides
/// of the final bracket. Fails with `Unattainable` if no gamma up to
/// `gamma_max` is feasible.
pub fn gamma_star(source: &GammaSource, tol: f64, gamma_max: f64) -> Result<GammaResult> {
    if !(tol > 0.0) || !tol.is_finite() {
        return Err(Error::Precondition("bisection tolerance must be positive".into()));
    }
    if !(gamma_max > 1.0) || !gamma_max.is_finite() {
        return Err(Error::Precondition("gamma ceiling must exceed 1".into()));
    }
    let data = prepare(source)?;
    let mut verdicts = Vec::new();
    let probe = |gamma: f64, log: &mut Vec<(f64, bool)>| {
        let report = data.probe(gamma);
        log.push((gamma, report.feasible));
        report
    };

    // Bracket (lo, hi]: lo starts at 0 (infeasible by convention, the
    // weight blows up there); hi doubles from 1 until feasible.
    let mut lo = 0.0f64;
    let mut hi = 1.0;
    loop {
        let report = probe(hi, &mut verdicts);
        if report.feasible {
            break;
        }
        lo = hi;
        hi *= 2.0;
        if hi > gamma_max {
            return Err(Error::Unattainable(format!(
                "no feasible attenuation level up to {gamma_max:.3e}: {}",
                report.reason.unwrap_or_else(|| "infeasible".into())
            )));
        }
    }

    while hi - lo > tol {
        let mid = 0.5 * (lo + hi);
        if mid <= lo || mid >= hi {
            break; // bracket at floating-point resolution
        }
        if probe(mid, &mut verdicts).feasible {
            hi = mid;
        } else {
            lo = mid;
        }
    }

    // Re-check both endpoints after the search. At lo = 0 the probe sees
    // a non-finite weight and reports infeasible, which is the intended
    // reading of the open bracket end.
    let lo_recheck = probe(lo, &mut verdicts);
    if lo_recheck.feasible {
        return Err(Error::Inconsistent(format!(
            "lower bracket endpoint {lo} re-checked feasible"
        )));
    }
    let hi_recheck = probe(hi, &mut verdicts);
    if !hi_recheck.feasible {
        return Err(Error::Inconsistent(format!(
            "upper bracket endpoint {hi} re-checked infeasible"
        )));
    }
    let upper_cert = hi_recheck.certificate;

    // The feasible set must be an up-set: every infeasible probe below
    // every feasible one. A violation means the solver contradicted
    // itself somewhere in the sweep.
    let max_infeasible = verdicts
        .iter()
        .filter(|(_, f)| !f)
        .map(|(g, _)| *g)
        .fold(f64::NEG_INFINITY, f64::max);
    let min_feasible = verdicts
        .iter()
        .filter(|(_, f)| *f)
        .map(|(g, _)| *g)
        .fold(f64::INFINITY, f64::min);
    if max_infeasible >= min_feasible {
        return Err(Error::Inconsistent(format!(
            "feasibility verdicts are not monotone: infeasible at {max_infeasible} \
             but feasible at {min_feasible}"
        )));
    }

    let certificate = upper_cert.ok_or_else(|| {
        Error::NumericalFailure("feasible verdict arrived without a certificate".into())
    })?;
    Ok(GammaResult {
        gamma_star: 0.5 * (lo + hi),
        lower: lo,
        upper: hi,
        tolerance: tol,
        evaluations: verdicts.len(),
        verdicts,
        certificate,
    })
}

/// State-feedback gains of the saddle point: u = -Ku x, w = Kw x.
#[derive(Debug, Clone)]
pub struct GainPair {
    /// B1^T R, one row per control channel.
    pub ku: Matrix,
    /// gamma^{-2} B2^T R, one row per disturbance channel.
    pub kw: Matrix,
    /// Attenuation level the gains were certified at.
    pub gamma: f64,
}

/// Gains induced by a solution R in original coordinates. R must be
/// symmetric positive definite for the saddle point to be meaningful.
pub fn controller_gains(spec: &SystemSpec, r: &Matrix) -> Result<GainPair> {
    if r.rows() != spec.n() || r.cols() != spec.n() {
        return Err(Error::Dimension("solution must be n x n".into()));
    }
    let r = r.clone().into_symmetric("controller solution")?;
    if !is_positive_definite(&r)? {
        return Err(Error::Precondition(
            "controller solution must be positive definite".into(),
        ));
    }
    Ok(GainPair {
        ku: &spec.b1().transpose() * &r,
        kw: (&spec.b2().transpose() * &r).scale(spec.gamma.powi(-2)),
        gamma: spec.gamma,
    })
}

/// One row of the attenuation table for the benchmark family
/// x'' + 2.8 x' + 0.27 x with vibration gain k feeding position into
/// velocity.
#[derive(Debug, Clone, Copy)]
pub struct TableRow {
    pub k: f64,
    /// gamma* of the averaged benchmark recipe: stiffness shifted by
    /// k^2/2, unit output weight.
    pub gamma_recipe: f64,
    /// gamma* of the full transform-average pipeline at this k.
    pub gamma_pipeline: f64,
}

/// Benchmark state matrix with the vibration-shifted stiffness.
pub fn benchmark_averaged_state(k: f64) -> Matrix {
    Matrix::from_rows(&[vec![0.0, 1.0], vec![-0.27 - k * k / 2.0, -2.8]])
        .expect("static shape")
}

/// Benchmark plant at vibration gain k.
pub fn benchmark_plant(k: f64, gamma: f64, epsilon: f64) -> Result<SystemSpec> {
    SystemSpec::new(
        Matrix::from_rows(&[vec![0.0, 1.0], vec![-0.27, -2.8]]).expect("static shape"),
        Matrix::zeros(2, 0),
        Matrix::from_rows(&[vec![0.0], vec![1.0]]).expect("static shape"),
        Matrix::identity(2),
        Matrix::from_rows(&[vec![0.0, 0.0], vec![k, 0.0]]).expect("static shape"),
        gamma,
        epsilon,
    )
}

/// Attenuation limits across a sweep of vibration gains, computed twice:
/// once from the averaged recipe and once through the full pipeline.
pub fn attenuation_table(
    ks: &[f64],
    grid: usize,
    convention: PhaseConvention,
    tol: f64,
) -> Result<Vec<TableRow>> {
    let mut rows = Vec::with_capacity(ks.len());
    for &k in ks {
        let recipe = GammaSource::Explicit {
            a_bar: benchmark_averaged_state(k),
            d1: Matrix::zeros(2, 2),
            d2: Matrix::diag(&[0.0, 1.0]),
            c_bar: Matrix::identity(2),
        };
        let gamma_recipe = gamma_star(&recipe, tol, DEFAULT_GAMMA_MAX)?.gamma_star;
        let pipeline = GammaSource::Plant {
            spec: benchmark_plant(k, 1.0, 0.1)?,
            grid,
            convention,
        };
        let gamma_pipeline = gamma_star(&pipeline, tol, DEFAULT_GAMMA_MAX)?.gamma_star;
        rows.push(TableRow { k, gamma_recipe, gamma_pipeline });
    }
    Ok(rows)
}

/// The standard sweep of vibration gains for the benchmark table.
pub const TABLE_KS: [f64; 8] = [0.0, 0.25, 0.5, 0.75, 1.0, 1.25, 1.5, 1.75];
