use std::fmt::Write as _;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use ddcool::experiments::records::{fmt_float, write_atomic};
use ddcool::experiments::scenario::Scenario;
use ddcool::experiments::{
    default_apex_grid, default_detuning_grid, default_spacing_grid, default_theta_grid, run_hexagon_suite,
    run_magic_atlas, run_sweep, Geometry, RowFlag, RunOptions, SweepRecord, Variable,
};
use ddcool::geometry::MIN_SPACING;
use ddcool::steady::RESIDUAL_TOL;
use ddcool::{Error, ErrorCategory, Result};

/// Steady-state sideband cooling with photon-mediated dipole-dipole interactions.
///
/// Lengths are in transition wavelengths, energies and rates in units of the trap
/// frequency, angles in radians.
#[derive(Debug, Parser)]
#[command(name = "ddcool", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Print atom positions and the shift and decay matrices.
    Couplings(Common),
    /// Magic spacings (vanishing pair shift) and the two-atom ratio at each.
    Magic(Common),
    /// Single steady-state solve and cooling ratio.
    Steady(Common),
    /// Cooling ratio versus spacing.
    SweepSpacing(Common),
    /// Two-atom cooling ratio over a spacing × detuning grid.
    SweepDetuning(Common),
    /// Cooling ratio versus the apex angle of an isosceles triangle.
    SweepAngle(Common),
    /// Hexagon configurations with the target at the center.
    Hexagon {
        #[command(flatten)]
        common: Common,
        /// Also run all six vertices occupied.
        #[arg(long)]
        include_full: bool,
    },
}

#[derive(Debug, Clone, Args)]
struct Common {
    /// Scenario file (TOML).
    #[arg(long, value_name = "FILE")]
    config: Option<PathBuf>,
    #[arg(long)]
    gamma: Option<f64>,
    #[arg(long, allow_hyphen_values = true)]
    delta: Option<f64>,
    #[arg(long)]
    eta_omega: Option<f64>,
    /// Phonon cutoff.
    #[arg(long)]
    nc: Option<usize>,
    #[arg(long)]
    spacing: Option<f64>,
    #[arg(long, allow_hyphen_values = true)]
    theta: Option<f64>,
    /// Output file; stdout when absent from both flags and scenario.
    #[arg(long, value_name = "FILE")]
    out: Option<PathBuf>,
    /// Worker threads (default: available parallelism).
    #[arg(long)]
    jobs: Option<usize>,
}

impl Common {
    fn scenario(&self) -> Result<Scenario> {
        let mut s = match &self.config {
            Some(path) => Scenario::from_file(path)?,
            None => Scenario::default(),
        };
        s.gamma = self.gamma.or(s.gamma);
        s.delta = self.delta.or(s.delta);
        s.eta_omega = self.eta_omega.or(s.eta_omega);
        s.n_cut = self.nc.or(s.n_cut);
        s.spacing = self.spacing.or(s.spacing);
        s.theta = self.theta.or(s.theta);
        s.output = self.out.clone().or(s.output);
        s.check("command line")?;
        Ok(s)
    }

    fn run_options(&self, scenario: &Scenario) -> Result<RunOptions> {
        let mut options = RunOptions { solver: scenario.solver_options(), ..RunOptions::default() };
        if let Some(jobs) = self.jobs {
            if jobs == 0 {
                return Err(scenario_error("jobs", "worker count must be at least 1"));
            }
            options.jobs = jobs;
        }
        Ok(options)
    }
}

fn scenario_error(key: &str, message: &str) -> Error {
    Error::Scenario { source_name: "command line".into(), key: key.into(), line: None, message: message.into() }
}

fn exit_code(category: ErrorCategory) -> u8 {
    match category {
        ErrorCategory::Input => 2,
        ErrorCategory::Solver => 3,
        ErrorCategory::Invariant => 4,
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli.command) {
        Ok(code) => ExitCode::from(code),
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(exit_code(e.category()))
        }
    }
}

fn run(command: Command) -> Result<u8> {
    match command {
        Command::Couplings(c) => couplings(&c),
        Command::Magic(c) => magic(&c),
        Command::Steady(c) => steady(&c),
        Command::SweepSpacing(c) => sweep_spacing(&c),
        Command::SweepDetuning(c) => sweep_detuning(&c),
        Command::SweepAngle(c) => sweep_angle(&c),
        Command::Hexagon { common, include_full } => hexagon(&common, include_full),
    }
}

fn emit(text: &str, out: Option<&Path>) -> Result<()> {
    match out {
        Some(path) => write_atomic(path, text.as_bytes()),
        None => {
            print!("{text}");
            Ok(())
        }
    }
}

/// Writes the record and maps flagged rows to an exit code.
fn finish(record: &SweepRecord, scenario: &Scenario) -> Result<u8> {
    emit(&record.render(), scenario.output.as_deref())?;
    let mut code = 0;
    let mut flagged = 0;
    for row in record.failures() {
        flagged += 1;
        let c = match &row.flag {
            RowFlag::Residual => 4,
            RowFlag::Failed(category, _) => exit_code(*category),
            RowFlag::Ok => 0,
        };
        code = code.max(c);
    }
    if flagged > 0 {
        eprintln!("{flagged} of {} points flagged", record.rows.len());
    }
    Ok(code)
}

/// Values of the scenario's `sweep` table for `variable`, or `default`.
fn sweep_values(scenario: &Scenario, variable: Variable, default: impl FnOnce() -> Vec<f64>) -> Result<Vec<f64>> {
    match &scenario.sweep {
        Some(s) if s.variable == variable => Ok(s.values()),
        Some(s) => Err(scenario_error("sweep.variable", &format!("expected {variable:?}, got {:?}", s.variable))),
        None => Ok(default()),
    }
}

fn couplings(c: &Common) -> Result<u8> {
    let scenario = c.scenario()?;
    let setting = scenario.setting();
    let config = setting.configuration()?;
    let matrices = setting.couplings()?;
    let n = config.len();
    let mut text = String::new();
    let _ = writeln!(text, "# {}; spacing {} wavelengths", setting.geometry.describe(), setting.spacing);
    let d = config.dipole();
    let _ = writeln!(text, "# dipole ({}, {}, {}); target atom {}", fmt_float(d[0]), fmt_float(d[1]), fmt_float(d[2]), config.target_index());
    let _ = writeln!(text, "# positions (wavelengths): atom,x,y,z");
    for (i, p) in config.positions().iter().enumerate() {
        let _ = writeln!(text, "{i},{},{},{}", fmt_float(p[0]), fmt_float(p[1]), fmt_float(p[2]));
    }
    for (name, get) in [("shifts g (nu)", 0), ("decays gamma (nu)", 1)] {
        let _ = writeln!(text, "# {name}");
        for mu in 0..n {
            let row: Vec<String> = (0..n)
                .map(|nu| fmt_float(if get == 0 { matrices.shift(mu, nu) } else { matrices.decay(mu, nu) }))
                .collect();
            let _ = writeln!(text, "{}", row.join(","));
        }
    }
    emit(&text, scenario.output.as_deref())?;
    Ok(0)
}

fn magic(c: &Common) -> Result<u8> {
    let scenario = c.scenario()?;
    let physics = scenario.physics();
    let thetas = match (&scenario.sweep, scenario.theta) {
        (None, Some(theta)) => vec![theta],
        _ => sweep_values(&scenario, Variable::Theta, default_theta_grid)?,
    };
    let record = run_magic_atlas(&thetas, (MIN_SPACING, 1.0), &physics, &c.run_options(&scenario)?)?;
    finish(&record, &scenario)
}

fn steady(c: &Common) -> Result<u8> {
    let scenario = c.scenario()?;
    let setting = scenario.setting();
    let options = c.run_options(&scenario)?;
    let point = setting.solve(&options.solver)?;
    let n_single = ddcool::experiments::single_reference(&setting.physics, &options.solver)?;
    let mut text = String::new();
    let _ = writeln!(text, "# {}; spacing {} wavelengths", setting.geometry.describe(), setting.spacing);
    for (key, value) in [
        ("n_multi", point.n_target),
        ("n_single", n_single),
        ("ratio", point.n_target / n_single),
        ("g12", point.g12),
        ("gamma12", point.gamma12),
        ("residual", point.residual),
        ("nullity_gap", point.nullity_gap),
        ("min_eigenvalue", point.min_eigenvalue),
    ] {
        let _ = writeln!(text, "{key} = {}", fmt_float(value));
    }
    emit(&text, scenario.output.as_deref())?;
    if point.residual > RESIDUAL_TOL {
        eprintln!("residual {:e} exceeds {RESIDUAL_TOL:e}", point.residual);
        return Ok(4);
    }
    Ok(0)
}

fn sweep_spacing(c: &Common) -> Result<u8> {
    let scenario = c.scenario()?;
    let spacings = sweep_values(&scenario, Variable::Spacing, default_spacing_grid)?;
    let record = run_sweep(&scenario.setting(), (Variable::Spacing, &spacings), None, &c.run_options(&scenario)?)?;
    finish(&record, &scenario)
}

fn sweep_detuning(c: &Common) -> Result<u8> {
    let scenario = c.scenario()?;
    let (default_s, default_d) = default_detuning_grid(scenario.physics().gamma);
    let spacings = sweep_values(&scenario, Variable::Spacing, || default_s)?;
    let deltas = match &scenario.sweep2 {
        Some(s) if s.variable == Variable::Delta => s.values(),
        Some(s) => return Err(scenario_error("sweep2.variable", &format!("expected Delta, got {:?}", s.variable))),
        None => default_d,
    };
    let mut record = run_sweep(
        &scenario.setting(),
        (Variable::Spacing, &spacings),
        Some((Variable::Delta, &deltas)),
        &c.run_options(&scenario)?,
    )?;
    record.title = format!("detuning-spacing diagram, {}", record.title);
    finish(&record, &scenario)
}

fn sweep_angle(c: &Common) -> Result<u8> {
    let scenario = c.scenario()?;
    let mut setting = scenario.setting();
    match (&scenario.geometry, &setting.geometry) {
        (None, _) => setting.geometry = Geometry::Isosceles { apex_angle: std::f64::consts::PI / 3.0 },
        (Some(_), Geometry::Isosceles { .. }) => {}
        (Some(_), other) => {
            return Err(scenario_error("geometry.kind", &format!("angle sweeps need an isosceles geometry, got {}", other.describe())))
        }
    }
    let phis = sweep_values(&scenario, Variable::ApexAngle, default_apex_grid)?;
    let record = run_sweep(&setting, (Variable::ApexAngle, &phis), None, &c.run_options(&scenario)?)?;
    finish(&record, &scenario)
}

fn hexagon(c: &Common, include_full: bool) -> Result<u8> {
    let scenario = c.scenario()?;
    let mut subsets = scenario.hexagon_subsets();
    if include_full {
        subsets.push(vec![0, 1, 2, 3, 4, 5]);
    }
    let record = run_hexagon_suite(&subsets, scenario.spacing(), &scenario.physics(), &c.run_options(&scenario)?)?;
    finish(&record, &scenario)
}
