//! Command-line front end: `check`, `solve`, `verify`, `portrait` and
//! `synthesize`.

use std::fmt::Write as _;
use std::fs;
use std::io::{self, Read, Write};
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand};
use nalgebra::{DVector, SymmetricEigen};
use quadlin::closedform::ClosedFormSolution;
use quadlin::detector::{self, LinearReduction};
use quadlin::oracle::{self, IntegrationConfig};
use quadlin::synth;
use quadlin::{QdeSystem, Trajectory};

pub const EXIT_OK: i32 = 0;
pub const EXIT_VERIFY_FAILED: i32 = 1;
pub const EXIT_INPUT: i32 = 2;
pub const EXIT_NOT_SOLVABLE: i32 = 3;
pub const EXIT_DIMENSION: i32 = 4;

/// Largest relative closed-form/integrator deviation `verify` accepts.
pub const VERIFY_TOLERANCE: f64 = 1e-6;
const SURFACE_SAMPLES: usize = 101;

#[derive(Debug, Parser)]
#[command(name = "quadlin", version, about = "Detect and solve linearizable quadratic ODE systems")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Decide whether a system linearizes and report every candidate.
    Check(CheckArgs),
    /// Sample the closed-form trajectory from an initial state.
    Solve(SolveArgs),
    /// Compare the closed form against numerical integration.
    Verify(VerifyArgs),
    /// Write a planar phase portrait as CSV files.
    Portrait(PortraitArgs),
    /// Emit a random linearizable system.
    Synthesize(SynthesizeArgs),
}

#[derive(Debug, Args)]
pub struct CheckArgs {
    /// System JSON (`-` for stdin).
    pub input: PathBuf,
    /// Also print the candidate table to stderr.
    #[arg(long)]
    pub verbose: bool,
    #[arg(long)]
    pub output: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct SolveArgs {
    pub input: PathBuf,
    /// Initial state, comma separated.
    #[arg(long, value_delimiter = ',', allow_hyphen_values = true, required = true)]
    pub x0: Vec<f64>,
    #[arg(long, default_value_t = 1.0)]
    pub t_end: f64,
    #[arg(long, default_value_t = 0.01)]
    pub dt: f64,
    #[arg(long)]
    pub output: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct VerifyArgs {
    pub input: PathBuf,
    #[arg(long, value_delimiter = ',', allow_hyphen_values = true, required = true)]
    pub x0: Vec<f64>,
    #[arg(long, default_value_t = 1.0)]
    pub t_end: f64,
    #[arg(long)]
    pub output: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct PortraitArgs {
    pub input: PathBuf,
    /// Bounds `a,b` applied to both axes.
    #[arg(long = "box", value_delimiter = ',', allow_hyphen_values = true, default_values_t = [-3.0, 3.0])]
    pub bounds: Vec<f64>,
    /// Seeds per axis.
    #[arg(long, default_value_t = 9)]
    pub grid: usize,
    #[arg(long, default_value_t = 1.0)]
    pub t_end: f64,
    #[arg(long, default_value_t = 0.01)]
    pub dt: f64,
    /// Directory receiving the CSV bundle.
    #[arg(long, default_value = "portrait")]
    pub output: PathBuf,
}

#[derive(Debug, Args)]
pub struct SynthesizeArgs {
    #[arg(long, env = "QUADLIN_SEED", default_value_t = 1)]
    pub seed: u64,
    #[arg(long, default_value_t = 2)]
    pub dim: usize,
    #[arg(long)]
    pub output: Option<PathBuf>,
}

/// A failed command: exit code plus message for stderr.
#[derive(Debug)]
pub struct Failure {
    pub code: i32,
    pub message: String,
}

impl Failure {
    fn new(code: i32, message: impl Into<String>) -> Self {
        Self { code, message: message.into() }
    }

    fn input(message: impl Into<String>) -> Self {
        Self::new(EXIT_INPUT, message)
    }
}

impl From<quadlin::Error> for Failure {
    fn from(e: quadlin::Error) -> Self {
        Failure::input(e.to_string())
    }
}

impl From<io::Error> for Failure {
    fn from(e: io::Error) -> Self {
        Failure::input(e.to_string())
    }
}

type CmdResult = Result<i32, Failure>;

/// Runs a parsed command, writing primary output to `out` and diagnostics to
/// `err`. Returns the process exit code.
pub fn run(cli: &Cli, out: &mut dyn Write, err: &mut dyn Write) -> i32 {
    let result = match &cli.command {
        Command::Check(a) => cmd_check(a, out, err),
        Command::Solve(a) => cmd_solve(a, out, err),
        Command::Verify(a) => cmd_verify(a, out),
        Command::Portrait(a) => cmd_portrait(a, err),
        Command::Synthesize(a) => cmd_synthesize(a, out),
    };
    match result {
        Ok(code) => code,
        Err(f) => {
            let _ = writeln!(err, "error: {}", f.message);
            f.code
        }
    }
}

fn read_system(path: &Path) -> Result<QdeSystem, Failure> {
    let text = if path.as_os_str() == "-" {
        let mut s = String::new();
        io::stdin().read_to_string(&mut s)?;
        s
    } else {
        fs::read_to_string(path).map_err(|e| Failure::input(format!("{}: {e}", path.display())))?
    };
    Ok(QdeSystem::from_json(&text)?)
}

fn emit(text: &str, output: Option<&Path>, out: &mut dyn Write) -> Result<(), Failure> {
    match output {
        Some(p) => fs::write(p, text).map_err(|e| Failure::input(format!("{}: {e}", p.display()))),
        None => out.write_all(text.as_bytes()).map_err(Failure::from),
    }
}

fn initial_state(system: &QdeSystem, x0: &[f64]) -> Result<DVector<f64>, Failure> {
    if x0.iter().any(|v| !v.is_finite()) {
        return Err(Failure::input("--x0 entries must be finite"));
    }
    if x0.len() != system.dim() {
        return Err(Failure::input(format!(
            "--x0 has {} entries but the system has dimension {}",
            x0.len(),
            system.dim()
        )));
    }
    Ok(DVector::from_column_slice(x0))
}

fn positive(name: &str, v: f64) -> Result<(), Failure> {
    if v.is_finite() && v > 0.0 {
        Ok(())
    } else {
        Err(Failure::input(format!("{name} must be positive, got {v}")))
    }
}

/// First reduction; several can exist when eigenmatrix subspaces overlap.
fn reduction(system: &QdeSystem) -> Result<Option<LinearReduction>, Failure> {
    Ok(detector::detect(system)?.into_iter().next())
}

fn not_solvable() -> Failure {
    Failure::new(EXIT_NOT_SOLVABLE, "system is not linearizable by a B-transformation")
}

fn cmd_check(a: &CheckArgs, out: &mut dyn Write, err: &mut dyn Write) -> CmdResult {
    let system = read_system(&a.input)?;
    let detection = detector::analyze(&system)?;
    let report = detection.report();
    let mut text = serde_json::to_string_pretty(&report).map_err(|e| Failure::input(e.to_string()))?;
    text.push('\n');
    emit(&text, a.output.as_deref(), out)?;
    if a.verbose {
        err.write_all(detection.table().as_bytes())?;
    }
    Ok(if report.solvable { EXIT_OK } else { EXIT_NOT_SOLVABLE })
}

fn cmd_solve(a: &SolveArgs, out: &mut dyn Write, _err: &mut dyn Write) -> CmdResult {
    positive("--t-end", a.t_end)?;
    positive("--dt", a.dt)?;
    let system = read_system(&a.input)?;
    let x0 = initial_state(&system, &a.x0)?;
    let red = reduction(&system)?.ok_or_else(not_solvable)?;
    let traj = ClosedFormSolution::new(&red, &x0)?.sample_grid(a.t_end, a.dt)?;
    emit(&traj.to_csv(system.dim()), a.output.as_deref(), out)?;
    Ok(EXIT_OK)
}

fn cmd_verify(a: &VerifyArgs, out: &mut dyn Write) -> CmdResult {
    if !(a.t_end.is_finite() && a.t_end >= 0.0) {
        return Err(Failure::input(format!("--t-end must be non-negative, got {}", a.t_end)));
    }
    let system = read_system(&a.input)?;
    let x0 = initial_state(&system, &a.x0)?;
    let red = reduction(&system)?.ok_or_else(not_solvable)?;
    let report = oracle::compare(&system, &red, &x0, a.t_end)?;
    let mut text = serde_json::to_string_pretty(&report).map_err(|e| Failure::input(e.to_string()))?;
    text.push('\n');
    emit(&text, a.output.as_deref(), out)?;
    Ok(if report.max_rel_error <= VERIFY_TOLERANCE { EXIT_OK } else { EXIT_VERIFY_FAILED })
}

fn lattice(lo: f64, hi: f64, grid: usize) -> Vec<f64> {
    if grid == 1 {
        vec![0.5 * (lo + hi)]
    } else {
        (0..grid).map(|k| lo + (hi - lo) * k as f64 / (grid - 1) as f64).collect()
    }
}

/// Backward half (reversed, without its `t = 0` node) followed by the forward
/// half.
fn join(backward: Trajectory, forward: Trajectory) -> (Trajectory, Option<f64>, Option<f64>) {
    let mut tr = Trajectory::new();
    for (t, x) in backward.times.iter().zip(&backward.states).skip(1).rev() {
        tr.push(*t, x.clone());
    }
    for (t, x) in forward.times.iter().zip(&forward.states) {
        tr.push(*t, x.clone());
    }
    (tr, backward.blowup_time, forward.blowup_time)
}

fn seed_trajectory(
    system: &QdeSystem,
    red: Option<&LinearReduction>,
    x0: &DVector<f64>,
    a: &PortraitArgs,
) -> Result<(Trajectory, Option<f64>, Option<f64>), Failure> {
    match red {
        Some(r) => {
            let sol = ClosedFormSolution::new(r, x0)?;
            Ok(join(sol.sample_grid(-a.t_end, a.dt)?, sol.sample_grid(a.t_end, a.dt)?))
        }
        None => {
            let cfg = IntegrationConfig::new(a.t_end).with_max_step(a.dt);
            let single = || {
                let mut t = Trajectory::new();
                t.push(0.0, x0.clone());
                t
            };
            // A failed direction keeps only the seed itself.
            let back = oracle::integrate_backward(system, x0, &cfg).map(|i| i.trajectory).unwrap_or_else(|_| single());
            let fwd = oracle::integrate(system, x0, &cfg).map(|i| i.trajectory).unwrap_or_else(|_| single());
            Ok(join(back, fwd))
        }
    }
}

/// Points on the lines making up `xᵀBx = 0` inside the square `[lo, hi]²`.
/// A definite `B` contributes only the origin.
fn surface_lines(b: &nalgebra::DMatrix<f64>, lo: f64, hi: f64) -> Vec<(usize, f64, f64)> {
    let eig = SymmetricEigen::new(b.clone());
    let (mu, u) = (eig.eigenvalues, eig.eigenvectors);
    let scale = mu.amax();
    let tol = 1e-12 * scale;
    let (u1, u2) = (u.column(0).into_owned(), u.column(1).into_owned());
    let directions: Vec<DVector<f64>> = if mu[0].abs() <= tol && mu[1].abs() <= tol {
        Vec::new()
    } else if mu[0].abs() <= tol {
        vec![u1]
    } else if mu[1].abs() <= tol {
        vec![u2]
    } else if mu[0] * mu[1] < 0.0 {
        // μ1 a² + μ2 c² = 0 with x = a u1 + c u2.
        let k = (-mu[1] / mu[0]).sqrt();
        vec![&u1 * k + &u2, &u1 * (-k) + &u2]
    } else {
        return vec![(0, 0.0, 0.0)];
    };
    let reach = lo.abs().max(hi.abs()) * std::f64::consts::SQRT_2;
    let mut pts = Vec::new();
    for (line, d) in directions.iter().enumerate() {
        let d = d.normalize();
        for k in 0..SURFACE_SAMPLES {
            let s = -reach + 2.0 * reach * k as f64 / (SURFACE_SAMPLES - 1) as f64;
            let (x, y) = (s * d[0], s * d[1]);
            if (lo..=hi).contains(&x) && (lo..=hi).contains(&y) {
                pts.push((line, x, y));
            }
        }
    }
    pts
}

fn cmd_portrait(a: &PortraitArgs, err: &mut dyn Write) -> CmdResult {
    let system = read_system(&a.input)?;
    if system.dim() != 2 {
        return Err(Failure::new(
            EXIT_DIMENSION,
            format!("portrait needs a planar system, got dimension {}", system.dim()),
        ));
    }
    let [lo, hi] = a.bounds[..] else {
        return Err(Failure::input("--box takes exactly two numbers a,b"));
    };
    if !(lo.is_finite() && hi.is_finite() && lo < hi) {
        return Err(Failure::input("--box needs a < b"));
    }
    if a.grid == 0 {
        return Err(Failure::input("--grid must be at least 1"));
    }
    positive("--t-end", a.t_end)?;
    positive("--dt", a.dt)?;
    let red = reduction(&system)?;
    fs::create_dir_all(&a.output).map_err(|e| Failure::input(format!("{}: {e}", a.output.display())))?;

    let axis = lattice(lo, hi, a.grid);
    let mut csv = String::from("trajectory,t,x1,x2\n");
    let mut id = 0usize;
    for &y in &axis {
        for &x in &axis {
            let x0 = DVector::from_vec(vec![x, y]);
            let (tr, back, fwd) = seed_trajectory(&system, red.as_ref(), &x0, a)?;
            for (t, s) in tr.times.iter().zip(&tr.states) {
                let _ = writeln!(csv, "{id},{t},{},{}", s[0], s[1]);
            }
            if let Some(tb) = back {
                let _ = writeln!(csv, "# trajectory={id} backward blowup_time={tb}");
            }
            if let Some(tf) = fwd {
                let _ = writeln!(csv, "# trajectory={id} blowup_time={tf}");
            }
            id += 1;
        }
    }
    let write = |name: &str, text: &str| -> Result<(), Failure> {
        let p = a.output.join(name);
        fs::write(&p, text).map_err(|e| Failure::input(format!("{}: {e}", p.display())))
    };
    write("trajectories.csv", &csv)?;

    let fixed = oracle::find_fixed_points(&system, &[(lo, hi), (lo, hi)], a.grid.max(2))?;
    let mut fp = String::from("x1,x2\n");
    for p in &fixed {
        let _ = writeln!(fp, "{},{}", p[0], p[1]);
    }
    write("fixed_points.csv", &fp)?;

    let mut surf = String::from("line,x1,x2\n");
    if let Some(r) = &red {
        for (line, x, y) in surface_lines(&r.b, lo, hi) {
            let _ = writeln!(surf, "{line},{x},{y}");
        }
    }
    write("surface.csv", &surf)?;
    let _ = writeln!(
        err,
        "wrote {id} trajectories, {} fixed points to {}",
        fixed.len(),
        a.output.display()
    );
    Ok(EXIT_OK)
}

fn cmd_synthesize(a: &SynthesizeArgs, out: &mut dyn Write) -> CmdResult {
    if !(synth::MIN_SYNTH_DIM..=synth::MAX_SYNTH_DIM).contains(&a.dim) {
        return Err(Failure::new(
            EXIT_DIMENSION,
            format!(
                "--dim must be in [{}, {}], got {}",
                synth::MIN_SYNTH_DIM,
                synth::MAX_SYNTH_DIM,
                a.dim
            ),
        ));
    }
    let s = synth::synthesize(a.seed, a.dim)?;
    let mut text = s.system.to_json();
    text.push('\n');
    emit(&text, a.output.as_deref(), out)?;
    Ok(EXIT_OK)
}
