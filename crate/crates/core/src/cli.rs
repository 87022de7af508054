//! Command-line front end: TOML configuration, subcommands, and CSV/metadata
//! output for every pipeline stage.
//!
//! Exit codes: 0 success, 1 infeasible/unattainable attenuation, 2 numerical
//! or i/o failure, 3 configuration error. All diagnostics go to stderr.
//!
//! Output contract: each run writes one or more CSV payload files plus a
//! `.meta` sidecar (key: value lines) naming the convention, grid size,
//! tolerances, seed, the FNV-1a hash of the effective configuration, and the
//! library version. Identical configuration and seed reproduce the files
//! byte for byte; nothing time- or host-dependent is recorded.

use std::fs;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand};
use serde::Deserialize;

use crate::error::{Error, Result};
use crate::expansion::{build_series, ExpansionSeries, ORDER_CAP};
use crate::harness::{
    self, default_horizon, simulate, Controller, RSource, SimulationPlan, WSignal,
    STEPS_PER_PERIOD,
};
use crate::hinf::{
    attenuation_table, gamma_star, GammaSource, DEFAULT_GAMMA_MAX, DEFAULT_GAMMA_TOL,
    TABLE_KS,
};
use crate::matkit::Matrix;
use crate::periodic::MIN_GRID;
use crate::riccati::solve_stabilizing_are;
use crate::vibration::{
    averaged_are_input, transform_system, PhaseConvention, SystemSpec, DEFAULT_GRID,
};

/// Environment variable that overrides the output directory (the only
/// environment knob; everything else comes from the config file and flags).
pub const OUTPUT_ENV: &str = "HINFVIB_OUTPUT";

const DEFAULT_DIGITS: usize = 6;
const DEFAULT_EPSILON_LIST: [f64; 5] = [0.2, 0.1, 0.05, 0.025, 0.0125];

#[derive(Parser, Debug)]
#[command(
    name = "hinfvib",
    version,
    about = "Attenuation limits and periodic Riccati series for vibrating plants"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Locate the attenuation limit gamma* by bisection over feasibility.
    GammaStar(CommonArgs),
    /// Emit the averaged system matrices at the configured gamma.
    Average(CommonArgs),
    /// Build the correction series and emit its coefficients.
    Expand(CommonArgs),
    /// Sweep epsilon: series error, defect, Floquet radius, definiteness.
    Verify(CommonArgs),
    /// Closed-loop simulation against the disturbance library.
    Simulate(CommonArgs),
    /// Benchmark attenuation table across vibration gains.
    PaperTable(CommonArgs),
}

impl Command {
    fn name(&self) -> &'static str {
        match self {
            Command::GammaStar(_) => "gamma-star",
            Command::Average(_) => "average",
            Command::Expand(_) => "expand",
            Command::Verify(_) => "verify",
            Command::Simulate(_) => "simulate",
            Command::PaperTable(_) => "paper-table",
        }
    }

    fn args(&self) -> &CommonArgs {
        match self {
            Command::GammaStar(a)
            | Command::Average(a)
            | Command::Expand(a)
            | Command::Verify(a)
            | Command::Simulate(a)
            | Command::PaperTable(a) => a,
        }
    }
}

#[derive(Args, Debug, Default)]
struct CommonArgs {
    /// Configuration file (TOML).
    #[arg(long)]
    config: Option<PathBuf>,
    /// Output directory (overrides config and HINFVIB_OUTPUT).
    #[arg(long)]
    output: Option<PathBuf>,
    /// Significant digits in CSV and metadata values.
    #[arg(long)]
    digits: Option<usize>,
    /// Write decimal commas (fields quoted) for side-by-side reading.
    #[arg(long)]
    paper_format: bool,
    /// Bisection bracket width.
    #[arg(long)]
    tol: Option<f64>,
    /// Upper limit for the feasibility doubling search.
    #[arg(long)]
    gamma_max: Option<f64>,
    /// Series truncation order N.
    #[arg(long)]
    order: Option<usize>,
    /// Period grid size (even, at least 16, divides 4096).
    #[arg(long)]
    grid_size: Option<usize>,
    /// Vibration phase convention: paper | zero_mean.
    #[arg(long)]
    convention: Option<String>,
    /// Seed for the disturbance generator.
    #[arg(long)]
    seed: Option<u64>,
    /// Attenuation level override for the plant.
    #[arg(long)]
    gamma: Option<f64>,
    /// Vibration rate override for the plant.
    #[arg(long)]
    epsilon: Option<f64>,
}

// --- configuration file -------------------------------------------------

#[derive(Debug, Clone, Deserialize, Default)]
#[serde(deny_unknown_fields)]
struct FileConfig {
    plant: Option<PlantSection>,
    #[serde(default)]
    run: RunSection,
    #[serde(default)]
    bisection: BisectionSection,
    #[serde(default)]
    simulate: SimulateSection,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
struct PlantSection {
    a: Vec<Vec<f64>>,
    #[serde(default)]
    b1: Option<Vec<Vec<f64>>>,
    b2: Vec<Vec<f64>>,
    #[serde(default)]
    l: Option<Vec<Vec<f64>>>,
    #[serde(default)]
    k: Option<Vec<Vec<f64>>>,
    #[serde(default)]
    gamma: Option<f64>,
    #[serde(default)]
    epsilon: Option<f64>,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields, default)]
struct RunSection {
    order: usize,
    grid_size: usize,
    convention: String,
    seed: u64,
    epsilon_list: Vec<f64>,
    output: String,
}

impl Default for RunSection {
    fn default() -> Self {
        RunSection {
            order: 2,
            grid_size: DEFAULT_GRID,
            convention: "paper".into(),
            seed: 0,
            epsilon_list: DEFAULT_EPSILON_LIST.to_vec(),
            output: "out".into(),
        }
    }
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields, default)]
struct BisectionSection {
    tol: f64,
    gamma_max: f64,
}

impl Default for BisectionSection {
    fn default() -> Self {
        BisectionSection { tol: DEFAULT_GAMMA_TOL, gamma_max: DEFAULT_GAMMA_MAX }
    }
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields, default)]
struct SimulateSection {
    /// zero | averaged | series
    controller: String,
    /// zero | bump | noise | worst | worst_bump
    disturbance: String,
    amplitude: f64,
    center: f64,
    width: f64,
    harmonics: usize,
    /// 0 selects 40 / |slowest closed-loop decay rate|.
    horizon: f64,
    step: f64,
    x0: Vec<f64>,
    /// Record every this-many integrator steps (0 = automatic).
    sample_stride: usize,
}

impl Default for SimulateSection {
    fn default() -> Self {
        SimulateSection {
            controller: "series".into(),
            disturbance: "zero".into(),
            amplitude: 1.0,
            center: 1.0,
            width: 0.5,
            harmonics: 8,
            horizon: 0.0,
            step: 1e-3,
            x0: Vec::new(),
            sample_stride: 0,
        }
    }
}

// --- effective settings -------------------------------------------------

/// Everything a run needs after merging config file, flags, and defaults.
struct Effective {
    subcommand: &'static str,
    plant: Option<PlantSection>,
    gamma: Option<f64>,
    epsilon: Option<f64>,
    order: usize,
    grid: usize,
    convention: PhaseConvention,
    seed: u64,
    epsilon_list: Vec<f64>,
    tol: f64,
    gamma_max: f64,
    sim: SimulateSection,
    out_dir: PathBuf,
    digits: usize,
    paper_format: bool,
}

fn load_file_config(path: Option<&Path>) -> Result<FileConfig> {
    let Some(path) = path else {
        return Ok(FileConfig::default());
    };
    let text = fs::read_to_string(path).map_err(|e| {
        Error::Config(format!("cannot read config {}: {e}", path.display()))
    })?;
    toml::from_str(&text)
        .map_err(|e| Error::Config(format!("config {}: {e}", path.display())))
}

fn resolve(command: &Command) -> Result<Effective> {
    let args = command.args();
    let file = load_file_config(args.config.as_deref())?;

    let digits = args.digits.unwrap_or(DEFAULT_DIGITS);
    if !(1..=17).contains(&digits) {
        return Err(Error::Config("digits must lie in 1..=17".into()));
    }
    let tol = args.tol.unwrap_or(file.bisection.tol);
    let gamma_max = args.gamma_max.unwrap_or(file.bisection.gamma_max);
    if !(tol > 0.0) || !tol.is_finite() {
        return Err(Error::Config("bisection tol must be positive".into()));
    }
    if !(gamma_max > 0.0) || !gamma_max.is_finite() {
        return Err(Error::Config("gamma_max must be positive and finite".into()));
    }
    let order = args.order.unwrap_or(file.run.order);
    if order > ORDER_CAP {
        return Err(Error::Config(format!("order must not exceed {ORDER_CAP}")));
    }
    let grid = args.grid_size.unwrap_or(file.run.grid_size);
    if grid < MIN_GRID || grid % 2 != 0 || STEPS_PER_PERIOD % grid != 0 {
        return Err(Error::Config(format!(
            "grid_size must be even, at least {MIN_GRID}, and divide {STEPS_PER_PERIOD}"
        )));
    }
    let convention = PhaseConvention::parse(
        args.convention.as_deref().unwrap_or(&file.run.convention),
    )?;
    let gamma = args.gamma.or(file.plant.as_ref().and_then(|p| p.gamma));
    if let Some(g) = gamma {
        if !(g > 0.0) || !g.is_finite() {
            return Err(Error::Config("gamma must be positive and finite".into()));
        }
    }
    let epsilon = args.epsilon.or(file.plant.as_ref().and_then(|p| p.epsilon));
    if let Some(e) = epsilon {
        if !(e > 0.0) || !e.is_finite() {
            return Err(Error::Config("epsilon must be positive and finite".into()));
        }
    }
    if file.run.epsilon_list.is_empty()
        || file.run.epsilon_list.iter().any(|e| !(*e > 0.0) || !e.is_finite())
    {
        return Err(Error::Config("epsilon_list entries must be positive".into()));
    }

    let out_dir = args
        .output
        .clone()
        .or_else(|| std::env::var_os(OUTPUT_ENV).map(PathBuf::from))
        .unwrap_or_else(|| PathBuf::from(&file.run.output));

    Ok(Effective {
        subcommand: command.name(),
        plant: file.plant,
        gamma,
        epsilon,
        order,
        grid,
        convention,
        seed: args.seed.unwrap_or(file.run.seed),
        epsilon_list: file.run.epsilon_list,
        tol,
        gamma_max,
        sim: file.simulate,
        out_dir,
        digits,
        paper_format: args.paper_format,
    })
}

impl Effective {
    /// Construct the plant, folding resolved gamma/epsilon in. Construction
    /// failures are configuration errors at this layer.
    fn plant_spec(&self, needs_gamma: bool, needs_epsilon: bool) -> Result<SystemSpec> {
        let Some(plant) = &self.plant else {
            return Err(Error::Config(
                "this subcommand needs a [plant] section (pass --config)".into(),
            ));
        };
        let a = matrix_field(&plant.a, "plant.a")?;
        let n = a.rows();
        let b1 = match &plant.b1 {
            Some(rows) => matrix_field(rows, "plant.b1")?,
            None => Matrix::zeros(n, 0),
        };
        let b2 = matrix_field(&plant.b2, "plant.b2")?;
        let l = match &plant.l {
            Some(rows) => matrix_field(rows, "plant.l")?,
            None => Matrix::identity(n),
        };
        let k = match &plant.k {
            Some(rows) => matrix_field(rows, "plant.k")?,
            None => Matrix::zeros(n, n),
        };
        if needs_gamma && self.gamma.is_none() {
            return Err(Error::Config(
                "gamma is required here: set plant.gamma or pass --gamma".into(),
            ));
        }
        if needs_epsilon && self.epsilon.is_none() {
            return Err(Error::Config(
                "epsilon is required here: set plant.epsilon or pass --epsilon".into(),
            ));
        }
        // Placeholders keep gamma-independent paths (bisection) happy.
        let gamma = self.gamma.unwrap_or(1.0);
        let epsilon = self.epsilon.unwrap_or(0.1);
        SystemSpec::new(a, b1, b2, l, k, gamma, epsilon)
            .map_err(|e| Error::Config(format!("plant: {e}")))
    }

    /// Canonical rendering of every output-relevant setting; hashed into
    /// the sidecar so identical runs are recognizable.
    fn canonical(&self) -> String {
        let mut s = String::new();
        let mut push = |k: &str, v: String| {
            s.push_str(k);
            s.push('=');
            s.push_str(&v);
            s.push('\n');
        };
        push("subcommand", self.subcommand.into());
        match &self.plant {
            Some(p) => {
                push("plant.a", format!("{:?}", p.a));
                push("plant.b1", format!("{:?}", p.b1));
                push("plant.b2", format!("{:?}", p.b2));
                push("plant.l", format!("{:?}", p.l));
                push("plant.k", format!("{:?}", p.k));
            }
            None => push("plant", "none".into()),
        }
        push("gamma", format!("{:?}", self.gamma));
        push("epsilon", format!("{:?}", self.epsilon));
        push("order", self.order.to_string());
        push("grid_size", self.grid.to_string());
        push("convention", self.convention.token().into());
        push("seed", self.seed.to_string());
        push("epsilon_list", format!("{:?}", self.epsilon_list));
        push("tol", format!("{:?}", self.tol));
        push("gamma_max", format!("{:?}", self.gamma_max));
        push("digits", self.digits.to_string());
        push("paper_format", self.paper_format.to_string());
        let sim = &self.sim;
        push("sim.controller", sim.controller.clone());
        push("sim.disturbance", sim.disturbance.clone());
        push("sim.amplitude", format!("{:?}", sim.amplitude));
        push("sim.center", format!("{:?}", sim.center));
        push("sim.width", format!("{:?}", sim.width));
        push("sim.harmonics", sim.harmonics.to_string());
        push("sim.horizon", format!("{:?}", sim.horizon));
        push("sim.step", format!("{:?}", sim.step));
        push("sim.x0", format!("{:?}", sim.x0));
        push("sim.sample_stride", sim.sample_stride.to_string());
        s
    }
}

fn matrix_field(rows: &[Vec<f64>], what: &str) -> Result<Matrix> {
    Matrix::from_rows(rows).map_err(|e| Error::Config(format!("{what}: {e}")))
}

// --- serialization ------------------------------------------------------

fn fnv1a64(bytes: &[u8]) -> u64 {
    let mut h: u64 = 0xcbf2_9ce4_8422_2325;
    for &b in bytes {
        h ^= u64::from(b);
        h = h.wrapping_mul(0x0000_0100_0000_01b3);
    }
    h
}

/// `digits` significant figures; plain decimal in a human range, scientific
/// outside it. Deterministic, round-trips through f64 parsing.
fn fmt_sig(v: f64, digits: usize) -> String {
    if v == 0.0 {
        return "0".into();
    }
    if !v.is_finite() {
        return if v.is_nan() {
            "nan".into()
        } else if v > 0.0 {
            "inf".into()
        } else {
            "-inf".into()
        };
    }
    let exp = v.abs().log10().floor() as i32;
    if (-4..7).contains(&exp) {
        let decimals = (digits as i32 - 1 - exp).max(0) as usize;
        format!("{v:.decimals$}")
    } else {
        format!("{v:.prec$e}", prec = digits - 1)
    }
}

fn csv_escape(field: &str) -> String {
    if field.contains(',') || field.contains('"') || field.contains('\n') {
        format!("\"{}\"", field.replace('"', "\"\""))
    } else {
        field.to_string()
    }
}

/// Collects payload and sidecar content for one run and writes it under
/// the output directory.
struct OutputWriter {
    dir: PathBuf,
    digits: usize,
    paper_format: bool,
    files: Vec<String>,
    notices: Vec<String>,
}

impl OutputWriter {
    fn new(eff: &Effective) -> OutputWriter {
        OutputWriter {
            dir: eff.out_dir.clone(),
            digits: eff.digits,
            paper_format: eff.paper_format,
            files: Vec::new(),
            notices: Vec::new(),
        }
    }

    /// Payload number: significant digits, optional decimal comma.
    fn num(&self, v: f64) -> String {
        let s = fmt_sig(v, self.digits);
        if self.paper_format {
            s.replace('.', ",")
        } else {
            s
        }
    }

    /// Fixed three decimals for the attenuation table rows.
    fn num3(&self, v: f64) -> String {
        let s = format!("{v:.3}");
        if self.paper_format {
            s.replace('.', ",")
        } else {
            s
        }
    }

    /// Sidecar number: always '.' decimals so the sidecar stays parseable.
    fn meta_num(&self, v: f64) -> String {
        fmt_sig(v, self.digits)
    }

    fn write_csv(&mut self, name: &str, header: &[&str], rows: &[Vec<String>]) -> Result<()> {
        let mut text = String::new();
        text.push_str(&header.join(","));
        text.push('\n');
        for row in rows {
            debug_assert_eq!(row.len(), header.len());
            let line: Vec<String> = row.iter().map(|f| csv_escape(f)).collect();
            text.push_str(&line.join(","));
            text.push('\n');
        }
        fs::create_dir_all(&self.dir)?;
        let path = self.dir.join(name);
        fs::write(&path, text)?;
        self.files.push(name.to_string());
        self.notices.push(format!("wrote {}", path.display()));
        Ok(())
    }

    /// Sidecar carries run identity (convention, grid, tolerances, seed,
    /// config hash, version) plus report-specific entries, then the list of
    /// payload files it governs.
    fn write_meta(
        &mut self,
        name: &str,
        eff: &Effective,
        extra: &[(String, String)],
    ) -> Result<()> {
        let mut text = String::new();
        let mut push = |k: &str, v: &str| {
            text.push_str(k);
            text.push_str(": ");
            text.push_str(v);
            text.push('\n');
        };
        push("subcommand", eff.subcommand);
        push("version", env!("CARGO_PKG_VERSION"));
        push("config_hash", &format!("{:016x}", fnv1a64(eff.canonical().as_bytes())));
        push("convention", eff.convention.token());
        push("grid_size", &eff.grid.to_string());
        push("bisection_tol", &self.meta_num(eff.tol));
        push("gamma_max", &self.meta_num(eff.gamma_max));
        push("digits", &eff.digits.to_string());
        push("paper_format", &eff.paper_format.to_string());
        for (k, v) in extra {
            push(k, v);
        }
        push("files", &self.files.join(","));
        fs::create_dir_all(&self.dir)?;
        let path = self.dir.join(name);
        fs::write(&path, text)?;
        self.notices.push(format!("wrote {}", path.display()));
        Ok(())
    }

    /// Long-format rows for one matrix: row-major entries with explicit
    /// dimensions in every record.
    fn matrix_rows(&self, name: &str, m: &Matrix) -> Vec<Vec<String>> {
        let mut out = Vec::with_capacity(m.rows() * m.cols());
        for i in 0..m.rows() {
            for j in 0..m.cols() {
                out.push(vec![
                    name.to_string(),
                    m.rows().to_string(),
                    m.cols().to_string(),
                    i.to_string(),
                    j.to_string(),
                    self.num(m[(i, j)]),
                ]);
            }
        }
        out
    }
}

// --- subcommands ----------------------------------------------------------

fn cmd_gamma_star(eff: &Effective, out: &mut OutputWriter) -> Result<()> {
    let spec = eff.plant_spec(false, false)?;
    let source = GammaSource::Plant {
        spec,
        grid: eff.grid,
        convention: eff.convention,
    };
    let result = gamma_star(&source, eff.tol, eff.gamma_max)?;
    let header = ["gamma_star", "lower", "upper", "tolerance", "evaluations"];
    let row = vec![
        out.num(result.gamma_star),
        out.num(result.lower),
        out.num(result.upper),
        out.num(result.tolerance),
        result.evaluations.to_string(),
    ];
    out.write_csv("gamma_star.csv", &header, &[row])?;
    let extra = vec![
        ("gamma_star".into(), out.meta_num(result.gamma_star)),
        ("lower".into(), out.meta_num(result.lower)),
        ("upper".into(), out.meta_num(result.upper)),
        ("evaluations".into(), result.evaluations.to_string()),
        (
            "certificate_residual".into(),
            out.meta_num(result.certificate.residual_norm),
        ),
        (
            "certificate_margin".into(),
            out.meta_num(result.certificate.stability_margin),
        ),
    ];
    out.write_meta("gamma_star.meta", eff, &extra)?;
    println!("{}", fmt_sig(result.gamma_star, eff.digits));
    Ok(())
}

fn cmd_average(eff: &Effective, out: &mut OutputWriter) -> Result<()> {
    let spec = eff.plant_spec(true, false)?;
    let avg = transform_system(&spec, eff.grid, eff.convention)?;
    let header = ["name", "rows", "cols", "row", "col", "value"];
    let mut rows = Vec::new();
    rows.extend(out.matrix_rows("a_bar", &avg.a_bar));
    rows.extend(out.matrix_rows("d_bar", &avg.d_bar));
    rows.extend(out.matrix_rows("c_bar", &avg.c_bar));
    out.write_csv("average.csv", &header, &rows)?;
    let extra = vec![("gamma".into(), out.meta_num(spec.gamma))];
    out.write_meta("average.meta", eff, &extra)?;
    Ok(())
}

fn build_pipeline(
    eff: &Effective,
    spec: &SystemSpec,
) -> Result<(crate::vibration::AveragedSystem, ExpansionSeries)> {
    let avg = transform_system(spec, eff.grid, eff.convention)?;
    let series = build_series(&avg, eff.order)?;
    Ok((avg, series))
}

fn cmd_expand(eff: &Effective, out: &mut OutputWriter) -> Result<()> {
    let spec = eff.plant_spec(true, false)?;
    let (_, series) = build_pipeline(eff, &spec)?;

    let const_header = ["name", "rows", "cols", "row", "col", "value"];
    let mut const_rows = Vec::new();
    for k in 0..=series.order() {
        const_rows.extend(out.matrix_rows(&format!("R{k}"), series.constant(k)));
    }
    out.write_csv("expand_constants.csv", &const_header, &const_rows)?;

    // Identically-zero ripple blocks are omitted, so a vibration-free plant
    // gets an empty table here.
    let per_header = ["name", "sample", "tau", "rows", "cols", "row", "col", "value"];
    let mut per_rows = Vec::new();
    for k in 1..=series.order() + 1 {
        let ripple = series.ripple(k);
        let zero = (0..ripple.grid_size()).all(|j| ripple.sample(j).max_abs() == 0.0);
        if zero {
            continue;
        }
        for j in 0..ripple.grid_size() {
            let m = ripple.sample(j);
            let tau = out.num(ripple.node(j));
            for r in 0..m.rows() {
                for c in 0..m.cols() {
                    per_rows.push(vec![
                        format!("ripple{k}"),
                        j.to_string(),
                        tau.clone(),
                        m.rows().to_string(),
                        m.cols().to_string(),
                        r.to_string(),
                        c.to_string(),
                        out.num(m[(r, c)]),
                    ]);
                }
            }
        }
    }
    out.write_csv("expand_periodics.csv", &per_header, &per_rows)?;

    let mut extra = vec![
        ("gamma".into(), out.meta_num(spec.gamma)),
        ("order".into(), series.order().to_string()),
    ];
    for (k, c) in series.consistency().iter().enumerate() {
        extra.push((format!("consistency_{k}"), out.meta_num(*c)));
    }
    out.write_meta("expand.meta", eff, &extra)?;
    Ok(())
}

fn cmd_verify(eff: &Effective, out: &mut OutputWriter) -> Result<()> {
    let list = &eff.epsilon_list;
    if list.len() < 3 {
        return Err(Error::Config(
            "verify needs at least three epsilon_list entries".into(),
        ));
    }
    for pair in list.windows(2) {
        if (pair[0] / pair[1] - 2.0).abs() > 1e-12 {
            return Err(Error::Config(
                "epsilon_list must halve at every step, largest first".into(),
            ));
        }
    }
    let spec = eff.plant_spec(true, false)?;
    let (avg, series) = build_pipeline(eff, &spec)?;
    let report = harness::convergence_order(&avg, &series, list, None)?;

    let header = [
        "epsilon",
        "series_error_sup",
        "defect_sup",
        "floquet_radius",
        "positive_definite",
    ];
    let rows: Vec<Vec<String>> = (0..report.epsilon_grid.len())
        .map(|i| {
            vec![
                out.num(report.epsilon_grid[i]),
                out.num(report.series_error_sup[i]),
                out.num(report.defect_sup[i]),
                out.num(report.floquet_radius[i]),
                report.positive_definite_ok[i].to_string(),
            ]
        })
        .collect();
    out.write_csv("verify.csv", &header, &rows)?;

    let (defect_order, error_order) = report.estimated_orders;
    let extra = vec![
        ("gamma".into(), out.meta_num(spec.gamma)),
        ("order".into(), report.order.to_string()),
        ("error_order".into(), out.meta_num(error_order)),
        ("defect_order".into(), out.meta_num(defect_order)),
        (
            "epsilon_star".into(),
            report
                .epsilon_star
                .map(|e| out.meta_num(e))
                .unwrap_or_else(|| "none".into()),
        ),
        ("exact_regime".into(), report.exact_regime.to_string()),
    ];
    out.write_meta("verify.meta", eff, &extra)?;
    Ok(())
}

fn cmd_simulate(eff: &Effective, out: &mut OutputWriter) -> Result<()> {
    let spec = eff.plant_spec(true, true)?;
    let sim = &eff.sim;
    let n = spec.n();

    let disturbance = match sim.disturbance.as_str() {
        "zero" => WSignal::Zero,
        "bump" => WSignal::Bump {
            center: sim.center,
            width: sim.width,
            amplitude: sim.amplitude,
        },
        "noise" => WSignal::Noise {
            seed: eff.seed,
            harmonics: sim.harmonics,
            amplitude: sim.amplitude,
        },
        "worst" => WSignal::WorstCase,
        "worst_bump" => WSignal::WorstCasePlusBump {
            center: sim.center,
            width: sim.width,
            amplitude: sim.amplitude,
        },
        other => {
            return Err(Error::Config(format!(
                "unknown disturbance '{other}' (zero|bump|noise|worst|worst_bump)"
            )))
        }
    };
    match &disturbance {
        WSignal::Bump { width, .. } | WSignal::WorstCasePlusBump { width, .. }
            if !(*width > 0.0) =>
        {
            return Err(Error::Config("bump width must be positive".into()));
        }
        WSignal::Noise { harmonics, .. } if *harmonics == 0 => {
            return Err(Error::Config("noise needs at least one harmonic".into()));
        }
        _ => {}
    }

    let (controller, decay_anchor) = match sim.controller.as_str() {
        "zero" => (Controller::Zero, spec.a().clone()),
        "averaged" => {
            let avg = transform_system(&spec, eff.grid, eff.convention)?;
            let (a, d, c) = averaged_are_input(&avg);
            let sol = solve_stabilizing_are(&a, &d, &c)?;
            (
                Controller::FromR(RSource::Constant(sol.r.clone())),
                sol.closed_loop.clone(),
            )
        }
        "series" => {
            let (_, series) = build_pipeline(eff, &spec)?;
            let orbit = harness::original_orbit(
                &series.fast_on_grid(spec.epsilon),
                spec.k(),
                eff.convention,
            )?;
            (
                Controller::FromR(RSource::Periodic(orbit)),
                series.closed_loop().clone(),
            )
        }
        other => {
            return Err(Error::Config(format!(
                "unknown controller '{other}' (zero|averaged|series)"
            )))
        }
    };
    if matches!(disturbance, WSignal::WorstCase | WSignal::WorstCasePlusBump { .. })
        && matches!(controller, Controller::Zero)
    {
        return Err(Error::Config(
            "worst-case disturbances need a non-zero controller".into(),
        ));
    }

    let x0 = if sim.x0.is_empty() {
        vec![0.0; n]
    } else if sim.x0.len() == n {
        sim.x0.clone()
    } else {
        return Err(Error::Config(format!("x0 must have {n} entries")));
    };
    if !(sim.step > 0.0) || !sim.step.is_finite() {
        return Err(Error::Config("simulate.step must be positive".into()));
    }
    let horizon = if sim.horizon > 0.0 {
        sim.horizon
    } else if sim.horizon == 0.0 {
        default_horizon(&decay_anchor).map_err(|_| {
            Error::Config(
                "cannot choose a horizon for a non-decaying loop; set simulate.horizon"
                    .into(),
            )
        })?
    } else {
        return Err(Error::Config("simulate.horizon must not be negative".into()));
    };

    let plan = SimulationPlan {
        controller,
        disturbance,
        x0,
        horizon,
        step: sim.step,
        sample_stride: sim.sample_stride,
    };
    let result = simulate(&spec, &plan)?;

    let m_u = result.u.first().map_or(0, Vec::len);
    let m_w = result.w.first().map_or(0, Vec::len);
    let m_z = result.z.first().map_or(0, Vec::len);
    let mut header: Vec<String> = vec!["t".into()];
    header.extend((1..=n).map(|i| format!("x{i}")));
    header.extend((1..=m_u).map(|i| format!("u{i}")));
    header.extend((1..=m_w).map(|i| format!("w{i}")));
    header.extend((1..=m_z).map(|i| format!("z{i}")));
    let header_refs: Vec<&str> = header.iter().map(String::as_str).collect();
    let rows: Vec<Vec<String>> = (0..result.time.len())
        .map(|i| {
            let mut row = Vec::with_capacity(header.len());
            row.push(out.num(result.time[i]));
            row.extend(result.states[i].iter().map(|v| out.num(*v)));
            row.extend(result.u[i].iter().map(|v| out.num(*v)));
            row.extend(result.w[i].iter().map(|v| out.num(*v)));
            row.extend(result.z[i].iter().map(|v| out.num(*v)));
            row
        })
        .collect();
    out.write_csv("simulate.csv", &header_refs, &rows)?;

    let extra = vec![
        ("gamma".into(), out.meta_num(spec.gamma)),
        ("epsilon".into(), out.meta_num(spec.epsilon)),
        ("seed".into(), eff.seed.to_string()),
        ("controller".into(), sim.controller.clone()),
        ("disturbance".into(), sim.disturbance.clone()),
        ("horizon".into(), out.meta_num(horizon)),
        ("step".into(), out.meta_num(sim.step)),
        ("j_value".into(), out.meta_num(result.j_value)),
        ("z_energy".into(), out.meta_num(result.z_energy)),
        ("u_energy".into(), out.meta_num(result.u_energy)),
        ("w_energy".into(), out.meta_num(result.w_energy)),
        ("mismatch_energy".into(), out.meta_num(result.mismatch_energy)),
        ("gain_estimate".into(), out.meta_num(result.gain_estimate)),
    ];
    out.write_meta("simulate.meta", eff, &extra)?;
    Ok(())
}

fn cmd_paper_table(eff: &Effective, out: &mut OutputWriter) -> Result<()> {
    let rows = attenuation_table(&TABLE_KS, eff.grid, eff.convention, eff.tol)?;
    let header = ["k", "gamma_fixture", "gamma_pipeline"];
    let table: Vec<Vec<String>> = rows
        .iter()
        .map(|r| {
            vec![out.num3(r.k), out.num3(r.gamma_recipe), out.num3(r.gamma_pipeline)]
        })
        .collect();
    out.write_csv("paper_table.csv", &header, &table)?;
    let extra = vec![
        ("table_digits".into(), "3 decimals, fixed".into()),
        (
            "flag_k_1.250".into(),
            "recipe oracle gives 0.951; a circulated table value 0.925 does not match"
                .into(),
        ),
    ];
    out.write_meta("paper_table.meta", eff, &extra)?;
    Ok(())
}

// --- entry point ----------------------------------------------------------

fn execute(cli: Cli) -> Result<Vec<String>> {
    let eff = resolve(&cli.command)?;
    let mut out = OutputWriter::new(&eff);
    match &cli.command {
        Command::GammaStar(_) => cmd_gamma_star(&eff, &mut out)?,
        Command::Average(_) => cmd_average(&eff, &mut out)?,
        Command::Expand(_) => cmd_expand(&eff, &mut out)?,
        Command::Verify(_) => cmd_verify(&eff, &mut out)?,
        Command::Simulate(_) => cmd_simulate(&eff, &mut out)?,
        Command::PaperTable(_) => cmd_paper_table(&eff, &mut out)?,
    }
    Ok(out.notices)
}

/// Binary entry: parse, dispatch, map errors onto the exit-code classes.
pub fn main() {
    std::process::exit(run_cli(std::env::args_os()));
}

fn run_cli<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<std::ffi::OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            use clap::error::ErrorKind;
            let code = match e.kind() {
                ErrorKind::DisplayHelp | ErrorKind::DisplayVersion => 0,
                _ => 3,
            };
            let _ = e.print();
            return code;
        }
    };
    match execute(cli) {
        Ok(notices) => {
            for line in notices {
                println!("{line}");
            }
            0
        }
        Err(err) => {
            eprintln!("error: {err}");
            err.exit_code()
        }
    }
}
