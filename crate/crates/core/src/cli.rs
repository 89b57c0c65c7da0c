//! Batch driver: JSON experiment configs in, CSV/JSON reports, field dumps and meshes out.
//!
//! Exit codes: 0 success, 1 I/O failure, 2 precondition violation (bad config,
//! negative density, p = q, ...), 3 solver non-convergence (a partial ladder
//! report is still written).

use std::fs;
use std::path::{Path, PathBuf};
use std::sync::Arc;

use clap::{Args, Parser, Subcommand};
use evalexpr::{build_operator_tree, ContextWithMutableVariables, DefaultNumericTypes, HashMapContext, Value};
use serde::{Deserialize, Serialize};

use crate::analysis::{condition_i_with_cut, condition_ii_with_cut, ConditionReport, DEFAULT_F_CUT};
use crate::convex::{geometric_identity_report, to_obj, GeometricIdentityReport, IdentityTolerances, SupportFn};
use crate::equation::ProblemParams;
use crate::error::Error;
use crate::grid::{build_grid, Grid, GridSpec, ScalarField, Vec3, MAX_S2_LEVEL};
use crate::oracle::{solve_axisym_s2, solve_s1, OdeProblem, OracleMode};
use crate::report::{csv_report, fmt_f64, read_field, write_field, ReportRow};
use crate::solver::{
    check_ladder_inputs, continuation_ladder, default_init, newton_solve, CauchyStep, LadderConfig, SolverOptions,
};

/// Environment variable fixing the worker thread count.
pub const THREADS_ENV: &str = "DUALMINK_THREADS";

#[derive(Parser, Debug)]
#[command(name = "dualmink", version, about = "L_p dual Minkowski Monge-Ampere experiments on S^1 and S^2")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Args, Debug, Clone)]
pub struct CommonArgs {
    /// JSON experiment config.
    #[arg(long)]
    pub config: PathBuf,
    /// Output directory (overrides `output.dir` in the config).
    #[arg(long)]
    pub out: Option<PathBuf>,
    /// Allow (p, q) outside p > q > 0.
    #[arg(long)]
    pub experimental: bool,
}

#[derive(Subcommand, Debug)]
pub enum Command {
    /// Single Newton solve for a strictly positive density.
    Solve(CommonArgs),
    /// f + eps continuation ladder.
    Ladder(CommonArgs),
    /// Condition I / II constants of the density.
    CheckConditions(CommonArgs),
    /// Recompute the report row of a stored solution.
    Verify {
        solution: PathBuf,
        #[command(flatten)]
        common: CommonArgs,
    },
    /// Write the OBJ mesh of a stored S^2 solution.
    ExportMesh {
        solution: Option<PathBuf>,
        #[command(flatten)]
        common: CommonArgs,
    },
    /// One-dimensional collocation oracle.
    Oracle(CommonArgs),
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Mode {
    Solve,
    Ladder,
    CheckConditions,
    Verify,
    ExportMesh,
    Oracle,
}

/// Density specification.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FSpec {
    /// See [`presets`].
    Preset(String),
    /// Expression in `x`, `y`, `z` (coordinates of the unit vector), e.g. `1 + 0.5 * z^2`.
    Expr(String),
    /// Field file in the `index value` format on the configured grid.
    File(PathBuf),
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct OutputConfig {
    pub dir: PathBuf,
    /// Fill the wall-time column; off by default so reports are byte-reproducible.
    pub record_timing: bool,
}

impl Default for OutputConfig {
    fn default() -> Self {
        Self {
            dir: PathBuf::from("out"),
            record_timing: false,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct OracleConfig {
    /// Defaults to `s1` for n = 2 and `axisym_s2` for n = 3.
    pub mode: Option<OracleMode>,
    /// Node count on S^1, intervals on [0, pi] for the axisymmetric reduction.
    pub size: usize,
}

impl Default for OracleConfig {
    fn default() -> Self {
        Self { mode: None, size: 128 }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ConditionConfig {
    pub f_cut: f64,
}

impl Default for ConditionConfig {
    fn default() -> Self {
        Self { f_cut: DEFAULT_F_CUT }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    #[serde(default)]
    pub mode: Option<Mode>,
    pub grid: GridSpec,
    pub p: f64,
    pub q: f64,
    pub f: FSpec,
    #[serde(default)]
    pub solver: SolverOptions,
    #[serde(default)]
    pub ladder: LadderConfig,
    #[serde(default)]
    pub output: OutputConfig,
    #[serde(default)]
    pub experimental: bool,
    /// Stored solution for `export-mesh` when no path is given on the command line.
    #[serde(default)]
    pub solution: Option<PathBuf>,
    #[serde(default)]
    pub oracle: OracleConfig,
    #[serde(default)]
    pub conditions: ConditionConfig,
}

#[derive(Debug)]
pub enum CliError {
    Core(Error),
    Config(String),
    Io(String),
}

impl From<Error> for CliError {
    fn from(e: Error) -> Self {
        CliError::Core(e)
    }
}

impl std::fmt::Display for CliError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            CliError::Core(e) => write!(f, "{e}"),
            CliError::Config(m) => write!(f, "config: {m}"),
            CliError::Io(m) => write!(f, "i/o: {m}"),
        }
    }
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Core(Error::NonConvergence { .. }) | CliError::Core(Error::LinearSolve(_)) => 3,
            CliError::Core(_) | CliError::Config(_) => 2,
            CliError::Io(_) => 1,
        }
    }
}

type CliResult<T> = std::result::Result<T, CliError>;

/// A named density.
pub struct Preset {
    pub name: &'static str,
    pub description: &'static str,
}

/// Named densities; all are even and nonnegative.
///
/// - `constant:c`: f = c. Condition I/II constants 0.
/// - `equator2`: f = z^2, vanishing on the equator. On S^2, A_grad = 1, A_lap = 4; Condition II with q = 1 has A = 6.
/// - `bump:a`: f = 1 + a z^2, a > -1. On S^2, A_grad = |a|; A_lap = 4a for a >= 0 and 2|a| for a < 0.
/// - `circles`: f = x^2 y^2, vanishing on two great circles.
pub fn presets() -> Vec<Preset> {
    vec![
        Preset {
            name: "constant:c",
            description: "f = c",
        },
        Preset {
            name: "equator2",
            description: "f = z^2",
        },
        Preset {
            name: "bump:a",
            description: "f = 1 + a z^2",
        },
        Preset {
            name: "circles",
            description: "f = x^2 y^2",
        },
    ]
}

type Density = Box<dyn Fn(&Vec3) -> f64 + Send + Sync>;
type FallibleDensity = Box<dyn Fn(&Vec3) -> CliResult<f64>>;

fn parse_param(name: &str, arg: Option<&str>) -> CliResult<f64> {
    let arg = arg.ok_or_else(|| CliError::Config(format!("preset {name} needs a parameter, e.g. {name}:1")))?;
    arg.parse()
        .map_err(|_| CliError::Config(format!("bad parameter {arg:?} for preset {name}")))
}

pub fn preset(spec: &str) -> CliResult<Density> {
    let (name, arg) = match spec.split_once(':') {
        Some((n, a)) => (n, Some(a)),
        None => (spec, None),
    };
    match name {
        "constant" => {
            let c = parse_param(name, arg)?;
            Ok(Box::new(move |_| c))
        }
        "equator2" => Ok(Box::new(|x| x[2] * x[2])),
        "bump" => {
            let a = parse_param(name, arg)?;
            Ok(Box::new(move |x| 1.0 + a * x[2] * x[2]))
        }
        "circles" => Ok(Box::new(|x| x[0] * x[0] * x[1] * x[1])),
        _ => Err(CliError::Config(format!(
            "unknown preset {spec:?}; known: {}",
            presets().iter().map(|p| p.name).collect::<Vec<_>>().join(", ")
        ))),
    }
}

/// Compiles an expression in x, y, z.
pub fn expression(src: &str) -> CliResult<impl Fn(&Vec3) -> CliResult<f64>> {
    let tree = build_operator_tree::<DefaultNumericTypes>(src)
        .map_err(|e| CliError::Config(format!("expression {src:?}: {e}")))?;
    let src = src.to_string();
    Ok(move |x: &Vec3| {
        let mut ctx = HashMapContext::<DefaultNumericTypes>::new();
        for (name, v) in ["x", "y", "z"].iter().zip(x) {
            ctx.set_value((*name).into(), Value::Float(*v))
                .map_err(|e| CliError::Config(format!("expression {src:?}: {e}")))?;
        }
        tree.eval_number_with_context(&ctx)
            .map_err(|e| CliError::Config(format!("expression {src:?}: {e}")))
    })
}

fn io_err(path: &Path, e: std::io::Error) -> CliError {
    CliError::Io(format!("{}: {e}", path.display()))
}

/// Samples f on the grid and checks it is nonnegative.
pub fn evaluate_density(spec: &FSpec, grid: &Arc<Grid>) -> CliResult<ScalarField> {
    let values: Vec<f64> = match spec {
        FSpec::Preset(name) => {
            let f = preset(name)?;
            grid.nodes().iter().map(f).collect()
        }
        FSpec::Expr(src) => {
            let f = expression(src)?;
            grid.nodes().iter().map(&f).collect::<CliResult<_>>()?
        }
        FSpec::File(path) => {
            let text = fs::read_to_string(path).map_err(|e| io_err(path, e))?;
            read_field(&text, Some(grid))?.field.into_values()
        }
    };
    let f = ScalarField::new(grid, values)?;
    if let Some((node, &value)) = f.values().iter().enumerate().find(|(_, &v)| v < 0.0) {
        return Err(Error::NegativeDensity { node, value }.into());
    }
    Ok(f)
}

/// f as a function of the oracle angle.
fn density_fn(spec: &FSpec) -> CliResult<FallibleDensity> {
    match spec {
        FSpec::Preset(name) => {
            let f = preset(name)?;
            Ok(Box::new(move |x| Ok(f(x))))
        }
        FSpec::Expr(src) => Ok(Box::new(expression(src)?)),
        FSpec::File(_) => Err(CliError::Config(
            "the oracle needs a preset or expression density".into(),
        )),
    }
}

pub fn load_config(path: &Path) -> CliResult<ExperimentConfig> {
    let text = fs::read_to_string(path).map_err(|e| io_err(path, e))?;
    serde_json::from_str(&text).map_err(|e| CliError::Config(format!("{}: {e}", path.display())))
}

fn write(path: &Path, contents: &str) -> CliResult<()> {
    fs::write(path, contents).map_err(|e| io_err(path, e))
}

fn to_json<T: Serialize>(v: &T) -> String {
    let mut s = serde_json::to_string_pretty(v).expect("report types serialize");
    s.push('\n');
    s
}

#[derive(Serialize)]
struct FailureSummary {
    eps: f64,
    message: String,
}

#[derive(Serialize)]
struct LevelSummary {
    row: ReportRow,
    roundoff_limited: bool,
    residual_floor: f64,
    c0_lower_bound_printed: f64,
    c0_lower_ok: bool,
    grad_bound_ok: bool,
    geometry: GeometricIdentityReport,
}

#[derive(Serialize)]
struct RunSummary<'a> {
    tool: &'static str,
    version: &'static str,
    mode: Mode,
    config: &'a ExperimentConfig,
    grid_hash: String,
    status: &'static str,
    levels: Vec<LevelSummary>,
    cauchy: Vec<CauchyStep>,
    failure: Option<FailureSummary>,
    csv_columns: Vec<&'static str>,
}

struct Run {
    cfg: ExperimentConfig,
    out: PathBuf,
    mode: Mode,
}

impl Run {
    fn params(&self) -> CliResult<ProblemParams> {
        Ok(ProblemParams::new(self.cfg.grid.n, self.cfg.p, self.cfg.q)?)
    }

    fn grid(&self) -> CliResult<Arc<Grid>> {
        Ok(build_grid(self.cfg.grid.n, self.cfg.grid.resolution)?)
    }

    fn path(&self, name: &str) -> PathBuf {
        self.out.join(name)
    }

    fn level_summary(
        &self,
        eps: f64,
        report: &crate::solver::SolveReport,
        f_eps: &ScalarField,
        params: &ProblemParams,
    ) -> CliResult<LevelSummary> {
        Ok(LevelSummary {
            row: ReportRow::from_solve(eps, report, f_eps, params, self.cfg.output.record_timing)?,
            roundoff_limited: report.roundoff_limited,
            residual_floor: report.residual_floor,
            c0_lower_bound_printed: report.apriori.c0_lower_bound_printed,
            c0_lower_ok: report.apriori.c0_lower_ok,
            grad_bound_ok: report.apriori.grad_bound_ok,
            geometry: geometric_identity_report(&report.h, IdentityTolerances::default())?,
        })
    }

    fn write_reports(
        &self,
        grid: &Grid,
        levels: Vec<LevelSummary>,
        cauchy: Vec<CauchyStep>,
        failure: Option<FailureSummary>,
        last: Option<(&SupportFn, f64)>,
    ) -> CliResult<()> {
        let rows: Vec<ReportRow> = levels.iter().map(|l| l.row).collect();
        write(&self.path("report.csv"), &csv_report(&rows))?;
        if let Some((h, eps)) = last {
            write(&self.path("solution.txt"), &write_field(h.field(), eps))?;
            if grid.dim() == 3 {
                write(&self.path("mesh.obj"), &to_obj(h)?)?;
            }
        }
        let summary = RunSummary {
            tool: "dualmink",
            version: env!("CARGO_PKG_VERSION"),
            mode: self.mode,
            config: &self.cfg,
            grid_hash: grid.hash(),
            status: if failure.is_some() { "non_convergence" } else { "ok" },
            levels,
            cauchy,
            failure,
            csv_columns: crate::report::CSV_COLUMNS.to_vec(),
        };
        write(&self.path("summary.json"), &to_json(&summary))
    }

    fn solve(&self) -> CliResult<()> {
        let params = self.params()?;
        let grid = self.grid()?;
        let f = evaluate_density(&self.cfg.f, &grid)?;
        check_ladder_inputs(&f, &params, self.cfg.experimental)?;
        let init = default_init(&f, &params)?;
        let report = newton_solve(&f, &params, &init, &self.cfg.solver)?;
        let f_used = if self.cfg.solver.enforce_even {
            f.symmetrize_even()
        } else {
            f
        };
        let level = self.level_summary(0.0, &report, &f_used, &params)?;
        self.write_reports(&grid, vec![level], Vec::new(), None, Some((&report.h, 0.0)))
    }

    fn ladder(&self) -> CliResult<()> {
        let params = self.params()?;
        let grid = self.grid()?;
        let f = evaluate_density(&self.cfg.f, &grid)?;
        let report = continuation_ladder(&f, &params, &self.cfg.ladder, &self.cfg.solver, self.cfg.experimental)?;
        let f = if self.cfg.solver.enforce_even {
            f.symmetrize_even()
        } else {
            f
        };
        let mut levels = Vec::with_capacity(report.levels.len());
        for l in &report.levels {
            let fe = f.map(|v| v + l.eps)?;
            levels.push(self.level_summary(l.eps, &l.report, &fe, &params)?);
        }
        let last = report.levels.last().map(|l| (&l.report.h, l.eps));
        let failure = report.failure.as_ref().map(|fl| FailureSummary {
            eps: fl.eps,
            message: fl.error.to_string(),
        });
        self.write_reports(&grid, levels, report.cauchy.clone(), failure, last)?;
        match report.failure {
            Some(fl) => Err(fl.error.into()),
            None => Ok(()),
        }
    }

    fn check_conditions(&self) -> CliResult<()> {
        #[derive(Serialize)]
        struct Level {
            grid: GridSpec,
            condition_i: Option<ConditionReport>,
            condition_ii: Option<ConditionReport>,
        }
        #[derive(Serialize)]
        struct Out<'a> {
            config: &'a ExperimentConfig,
            grid_hash: String,
            note: Option<&'static str>,
            levels: Vec<Level>,
        }
        let n = self.cfg.grid.n;
        let grid = self.grid()?;
        let mut specs = vec![self.cfg.grid];
        let finer = if n == 3 {
            (self.cfg.grid.resolution < MAX_S2_LEVEL).then(|| self.cfg.grid.resolution + 1)
        } else {
            Some(self.cfg.grid.resolution * 2)
        };
        if let Some(r) = finer {
            specs.push(GridSpec { n, resolution: r });
        }
        let mut levels = Vec::new();
        for spec in specs {
            let g = if spec == self.cfg.grid {
                Arc::clone(&grid)
            } else {
                build_grid(spec.n, spec.resolution)?
            };
            let f = match (&self.cfg.f, spec == self.cfg.grid) {
                // sampled densities only exist on their own grid
                (FSpec::File(_), false) => continue,
                _ => evaluate_density(&self.cfg.f, &g)?,
            };
            let (ci, cii) = if n == 3 {
                let ci = condition_i_with_cut(&f, n, self.cfg.conditions.f_cut)?;
                let cii = if self.cfg.q < 2.0 {
                    Some(condition_ii_with_cut(&f, n, self.cfg.q, self.cfg.conditions.f_cut)?)
                } else {
                    None
                };
                (Some(ci), cii)
            } else {
                (None, None)
            };
            levels.push(Level {
                grid: spec,
                condition_i: ci,
                condition_ii: cii,
            });
        }
        let out = Out {
            config: &self.cfg,
            grid_hash: grid.hash(),
            note: (n == 2).then_some("conditions involve f^{1/(n-2)} and are not defined for n = 2"),
            levels,
        };
        write(&self.path("conditions.json"), &to_json(&out))
    }

    fn verify(&self, solution: &Path) -> CliResult<()> {
        #[derive(Serialize)]
        struct Out<'a> {
            config: &'a ExperimentConfig,
            solution: String,
            grid_hash: String,
            eps: f64,
            row: ReportRow,
            convex: bool,
            psd_margin: f64,
            geometry: GeometricIdentityReport,
        }
        let params = self.params()?;
        let grid = self.grid()?;
        let text = fs::read_to_string(solution).map_err(|e| io_err(solution, e))?;
        let stored = read_field(&text, Some(&grid))?;
        if stored.spec != self.cfg.grid {
            return Err(Error::GridMismatch.into());
        }
        let h = SupportFn::new(stored.field)?;
        let f = evaluate_density(&self.cfg.f, &grid)?;
        let f = if self.cfg.solver.enforce_even {
            f.symmetrize_even()
        } else {
            f
        };
        let fe = f.map(|v| v + stored.eps)?;
        let row = ReportRow::recompute(stored.eps, &h, &fe, &params, 0)?;
        let out = Out {
            config: &self.cfg,
            solution: solution.display().to_string(),
            grid_hash: stored.hash,
            eps: stored.eps,
            row,
            convex: h.is_convex_iterate(),
            psd_margin: h.psd_margin(),
            geometry: geometric_identity_report(&h, IdentityTolerances::default())?,
        };
        write(&self.path("verify.json"), &to_json(&out))?;
        println!("{}", crate::report::CSV_COLUMNS.join(","));
        println!("{}", row.csv_line());
        if !out.convex {
            return Err(Error::InvalidParams(format!(
                "stored h is not convex (min eig b = {})",
                fmt_f64(out.psd_margin)
            ))
            .into());
        }
        Ok(())
    }

    fn export_mesh(&self, solution: Option<&Path>) -> CliResult<()> {
        let path = solution
            .map(Path::to_path_buf)
            .or_else(|| self.cfg.solution.clone())
            .ok_or_else(|| CliError::Config("export-mesh needs a solution file".into()))?;
        let text = fs::read_to_string(&path).map_err(|e| io_err(&path, e))?;
        let stored = read_field(&text, None)?;
        let h = SupportFn::new(stored.field)?;
        write(&self.path("mesh.obj"), &to_obj(&h)?)
    }

    fn oracle(&self) -> CliResult<()> {
        #[derive(Serialize)]
        struct Out<'a> {
            config: &'a ExperimentConfig,
            mode: OracleMode,
            size: usize,
            iterations: usize,
            residual: f64,
            min_h: f64,
            max_h: f64,
            c0_lower_bound: f64,
            c0_lower_ok: bool,
            max_grad: f64,
            grad_bound_ok: bool,
        }
        let mode = self.cfg.oracle.mode.unwrap_or(if self.cfg.grid.n == 2 {
            OracleMode::S1
        } else {
            OracleMode::AxisymS2
        });
        let params = ProblemParams::new(
            match mode {
                OracleMode::S1 => 2,
                OracleMode::AxisymS2 => 3,
            },
            self.cfg.p,
            self.cfg.q,
        )?;
        params.constant_exponent()?;
        if !self.cfg.experimental && !params.is_guaranteed() {
            return Err(Error::InvalidParams(format!(
                "p = {}, q = {} is outside p > q > 0; pass the experimental flag to run anyway",
                params.p, params.q
            ))
            .into());
        }
        let density = density_fn(&self.cfg.f)?;
        let point = |t: f64| -> Vec3 {
            match mode {
                OracleMode::S1 => [t.cos(), t.sin(), 0.0],
                OracleMode::AxisymS2 => [t.sin(), 0.0, t.cos()],
            }
        };
        let size = self.cfg.oracle.size;
        let count = match mode {
            OracleMode::S1 => size,
            OracleMode::AxisymS2 => size + 1,
        };
        let step = match mode {
            OracleMode::S1 => 2.0 * std::f64::consts::PI / size.max(1) as f64,
            OracleMode::AxisymS2 => std::f64::consts::PI / size.max(1) as f64,
        };
        let samples: Vec<f64> = (0..count)
            .map(|j| density(&point(j as f64 * step)))
            .collect::<CliResult<_>>()?;
        if let Some((node, &value)) = samples.iter().enumerate().find(|(_, &v)| v < 0.0) {
            return Err(Error::NegativeDensity { node, value }.into());
        }
        let fth = |t: f64| density(&point(t)).unwrap_or(f64::NAN);
        let prob = OdeProblem {
            mode,
            f: &fth,
            p: params.p,
            q: params.q,
            size,
        };
        let sol = match mode {
            OracleMode::S1 => solve_s1(&prob)?,
            OracleMode::AxisymS2 => solve_axisym_s2(&prob)?,
        };
        let mut csv = String::from("theta,h\n");
        for (t, h) in sol.theta.iter().zip(&sol.h) {
            csv.push_str(&format!("{},{}\n", fmt_f64(*t), fmt_f64(*h)));
        }
        write(&self.path("oracle.csv"), &csv)?;
        let max_f = samples.iter().copied().fold(0.0, f64::max);
        let c0 = max_f.powf(params.constant_exponent()?);
        let max_grad = sol
            .theta
            .iter()
            .map(|&t| sol.eval_derivative(t).abs())
            .fold(0.0, f64::max);
        let out = Out {
            config: &self.cfg,
            mode,
            size,
            iterations: sol.iterations,
            residual: sol.residual,
            min_h: sol.min_h(),
            max_h: sol.max_h(),
            c0_lower_bound: c0,
            c0_lower_ok: sol.min_h() >= c0 - 1e-8,
            max_grad,
            grad_bound_ok: max_grad <= sol.max_h() + 1e-6,
        };
        write(&self.path("summary.json"), &to_json(&out))
    }
}

fn configure_threads() -> CliResult<()> {
    if let Ok(v) = std::env::var(THREADS_ENV) {
        let n: usize = v
            .parse()
            .map_err(|_| CliError::Config(format!("{THREADS_ENV} must be a positive integer, got {v:?}")))?;
        // A second initialization (only possible in-process) keeps the first pool.
        let _ = rayon::ThreadPoolBuilder::new().num_threads(n).build_global();
    }
    Ok(())
}

fn execute(cli: Cli) -> CliResult<()> {
    configure_threads()?;
    let (mode, common, solution) = match cli.command {
        Command::Solve(c) => (Mode::Solve, c, None),
        Command::Ladder(c) => (Mode::Ladder, c, None),
        Command::CheckConditions(c) => (Mode::CheckConditions, c, None),
        Command::Verify { solution, common } => (Mode::Verify, common, Some(solution)),
        Command::ExportMesh { solution, common } => (Mode::ExportMesh, common, solution),
        Command::Oracle(c) => (Mode::Oracle, c, None),
    };
    let mut cfg = load_config(&common.config)?;
    if let Some(m) = cfg.mode {
        if m != mode {
            return Err(CliError::Config(format!(
                "config is for mode {m:?} but the {mode:?} subcommand was given"
            )));
        }
    }
    cfg.mode = Some(mode);
    cfg.experimental |= common.experimental;
    if let Some(out) = common.out {
        cfg.output.dir = out;
    }
    fs::create_dir_all(&cfg.output.dir).map_err(|e| io_err(&cfg.output.dir, e))?;
    let run = Run {
        out: cfg.output.dir.clone(),
        cfg,
        mode,
    };
    match mode {
        Mode::Solve => run.solve(),
        Mode::Ladder => run.ladder(),
        Mode::CheckConditions => run.check_conditions(),
        Mode::Verify => run.verify(solution.as_deref().expect("verify takes a solution path")),
        Mode::ExportMesh => run.export_mesh(solution.as_deref()),
        Mode::Oracle => run.oracle(),
    }
}

/// Parses arguments, runs, and returns the process exit code.
pub fn run<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<std::ffi::OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { 2 } else { 0 };
        }
    };
    match execute(cli) {
        Ok(()) => 0,
        Err(e) => {
            eprintln!("dualmink: {e}");
            e.exit_code()
        }
    }
}
