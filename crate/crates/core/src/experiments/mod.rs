//! Sweep harness: spacing, detuning, apex-angle and polarization scans plus hexagon suites.
//!
//! Every point compares the target's steady-state phonon occupation with that of a lone
//! atom driven on the red sideband (Δ = −ν) with the same Γ, ηΩ and phonon cutoff.

pub mod records;
pub mod scenario;

use std::f64::consts::{FRAC_PI_2, PI};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::{
    build_hexagon_config, build_isosceles, build_line, build_single, coupling_matrices, dipole_in_xz,
    find_magic_spacings, AtomConfiguration, CouplingMatrices, MAGIC_SPACING_PERPENDICULAR,
};
use crate::hilbert::HilbertLayout;
use crate::liouvillian::{build_liouvillian, ModelParams, DEFAULT_DELTA, DEFAULT_ETA_OMEGA, DEFAULT_GAMMA, DEFAULT_N_CUT};
use crate::steady::{steady_state_with, SolverOptions, HERMITICITY_TOL, PSD_TOL};

pub use records::{write_records, RowFlag, SweepRecord, SweepRow};

/// Spacing grid density used when a sweep gives no explicit point count.
pub const SPACING_POINTS_PER_WAVELENGTH: f64 = 200.0;
/// Bisection tolerance for magic spacings in the atlas.
pub const ATLAS_ROOT_TOL: f64 = 1e-12;

/// Model parameters shared by all atoms of a sweep point. Energies in units of ν.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Physics {
    pub gamma: f64,
    pub delta: f64,
    /// Sideband coupling of the target; spectators are undriven.
    pub eta_omega: f64,
    pub n_cut: usize,
    /// Dipole angle from x̂ in the x–z plane, radians.
    pub theta: f64,
}

impl Default for Physics {
    fn default() -> Self {
        Self { gamma: DEFAULT_GAMMA, delta: DEFAULT_DELTA, eta_omega: DEFAULT_ETA_OMEGA, n_cut: DEFAULT_N_CUT, theta: FRAC_PI_2 }
    }
}

impl Physics {
    pub fn model_params(&self, n_atoms: usize, target: usize) -> ModelParams {
        let mut eta_omega = vec![0.0; n_atoms];
        eta_omega[target] = self.eta_omega;
        ModelParams { nu: 1.0, gamma: self.gamma, delta: self.delta, eta_omega, n_cut: self.n_cut }
    }

    /// Lone-atom reference conditions: same physics on the sideband.
    pub fn reference(&self) -> Self {
        Self { delta: -1.0, ..*self }
    }

    fn describe(&self) -> String {
        format!(
            "gamma = {}, delta = {}, eta_omega = {}, n_cut = {}, theta = {}",
            self.gamma, self.delta, self.eta_omega, self.n_cut, self.theta
        )
    }
}

/// Array shape; the length scale is supplied separately as a spacing.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Geometry {
    Single,
    /// Equally spaced line along x̂, target at one end.
    Line { atoms: usize },
    Triangle,
    /// Target at the apex, legs equal to the spacing.
    Isosceles { apex_angle: f64 },
    /// Target at the center, spectators on the listed vertices (0..=5).
    Hexagon { vertices: Vec<usize> },
}

impl Geometry {
    pub fn build(&self, spacing: f64) -> Result<AtomConfiguration> {
        match self {
            Geometry::Single => Ok(build_single()),
            Geometry::Line { atoms } => build_line(*atoms, spacing),
            Geometry::Triangle => build_isosceles(spacing, PI / 3.0),
            Geometry::Isosceles { apex_angle } => build_isosceles(spacing, *apex_angle),
            Geometry::Hexagon { vertices } => build_hexagon_config(vertices, spacing),
        }
    }

    pub fn describe(&self) -> String {
        match self {
            Geometry::Single => "single atom".into(),
            Geometry::Line { atoms } => format!("line of {atoms} atoms"),
            Geometry::Triangle => "equilateral triangle".into(),
            Geometry::Isosceles { apex_angle } => format!("isosceles triangle, apex angle {apex_angle}"),
            Geometry::Hexagon { vertices } => format!("hexagon center plus vertices {vertices:?}"),
        }
    }
}

/// Everything that defines one solve.
#[derive(Debug, Clone, PartialEq)]
pub struct Setting {
    pub geometry: Geometry,
    pub spacing: f64,
    pub physics: Physics,
}

impl Default for Setting {
    fn default() -> Self {
        Self { geometry: Geometry::Line { atoms: 2 }, spacing: MAGIC_SPACING_PERPENDICULAR, physics: Physics::default() }
    }
}

impl Setting {
    pub fn configuration(&self) -> Result<AtomConfiguration> {
        self.geometry.build(self.spacing)?.with_dipole(dipole_in_xz(self.physics.theta))
    }

    pub fn couplings(&self) -> Result<CouplingMatrices> {
        coupling_matrices(&self.configuration()?, self.physics.gamma)
    }

    pub fn solve(&self, solver: &SolverOptions) -> Result<PointSolution> {
        solve_configuration(&self.configuration()?, &self.physics, solver)
    }
}

/// Steady-state summary of one configuration.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PointSolution {
    pub n_target: f64,
    pub residual: f64,
    pub nullity_gap: f64,
    pub min_eigenvalue: f64,
    /// Shift and decay between the target and its first neighbour (zero for one atom).
    pub g12: f64,
    pub gamma12: f64,
}

/// Solves the configuration with phonons on the target only.
///
/// Hermiticity and positivity violations are errors; the residual is returned for the
/// caller to flag.
pub fn solve_configuration(config: &AtomConfiguration, physics: &Physics, solver: &SolverOptions) -> Result<PointSolution> {
    let n = config.len();
    let target = config.target_index();
    let couplings = coupling_matrices(config, physics.gamma)?;
    let (g12, gamma12) = neighbour_couplings(&couplings, target);
    let layout = HilbertLayout::reduced(n, target, physics.n_cut)?;
    let l = build_liouvillian(&layout, &physics.model_params(n, target), &couplings)?;
    let result = steady_state_with(&l, solver)?;
    if result.hermiticity_error > HERMITICITY_TOL {
        return Err(Error::Invariant(format!("steady state not Hermitian (deviation {:e})", result.hermiticity_error)));
    }
    if result.min_eigenvalue < -PSD_TOL {
        return Err(Error::Invariant(format!("steady state has eigenvalue {:e}", result.min_eigenvalue)));
    }
    Ok(PointSolution {
        n_target: result.occupation()?,
        residual: result.residual,
        nullity_gap: result.nullity_gap,
        min_eigenvalue: result.min_eigenvalue,
        g12,
        gamma12,
    })
}

/// Occupation of a lone atom under `physics.reference()`.
pub fn single_reference(physics: &Physics, solver: &SolverOptions) -> Result<f64> {
    let reference = physics.reference();
    let n = solve_configuration(&build_single(), &reference, solver)?.n_target;
    if !(n >= 1e-15) {
        return Err(Error::InvalidParameter(format!("single-atom reference occupation {n:e} too small for a ratio")));
    }
    Ok(n)
}

fn neighbour_couplings(couplings: &CouplingMatrices, target: usize) -> (f64, f64) {
    match (0..couplings.len()).find(|&mu| mu != target) {
        Some(mu) => (couplings.shift(target, mu), couplings.decay(target, mu)),
        None => (0.0, 0.0),
    }
}

/// Solver settings and worker count for a sweep.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RunOptions {
    pub solver: SolverOptions,
    pub jobs: usize,
}

impl Default for RunOptions {
    fn default() -> Self {
        let jobs = std::thread::available_parallelism().map(|n| n.get()).unwrap_or(1);
        Self { solver: SolverOptions::default(), jobs }
    }
}

impl RunOptions {
    pub fn serial() -> Self {
        Self { jobs: 1, ..Self::default() }
    }
}

/// Order-preserving map over a dedicated pool of `jobs` workers.
fn par_map<T: Sync, R: Send>(items: &[T], jobs: usize, f: impl Fn(&T) -> R + Sync + Send) -> Result<Vec<R>> {
    if jobs <= 1 {
        return Ok(items.iter().map(f).collect());
    }
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(jobs)
        .build()
        .map_err(|e| Error::InvalidParameter(format!("cannot start {jobs} workers: {e}")))?;
    Ok(pool.install(|| items.par_iter().map(&f).collect()))
}

/// A parameter that a sweep can vary.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Variable {
    Spacing,
    Delta,
    Theta,
    ApexAngle,
    Gamma,
    EtaOmega,
}

impl Variable {
    pub fn apply(self, base: &Setting, value: f64) -> Result<Setting> {
        let mut s = base.clone();
        match self {
            Variable::Spacing => s.spacing = value,
            Variable::Delta => s.physics.delta = value,
            Variable::Theta => s.physics.theta = value,
            Variable::Gamma => s.physics.gamma = value,
            Variable::EtaOmega => s.physics.eta_omega = value,
            Variable::ApexAngle => match &mut s.geometry {
                Geometry::Isosceles { apex_angle } => *apex_angle = value,
                other => {
                    return Err(Error::InvalidParameter(format!("apex_angle sweep needs an isosceles geometry, got {}", other.describe())))
                }
            },
        }
        Ok(s)
    }

    pub fn describe(self) -> &'static str {
        match self {
            Variable::Spacing => "spacing (wavelengths)",
            Variable::Delta => "laser detuning delta (nu)",
            Variable::Theta => "dipole angle theta from the x axis (radians)",
            Variable::ApexAngle => "isosceles apex angle phi (radians)",
            Variable::Gamma => "single-atom decay rate gamma (nu)",
            Variable::EtaOmega => "sideband coupling eta*Omega (nu)",
        }
    }
}

/// Evenly spaced values including both ends.
pub fn linspace(start: f64, stop: f64, points: usize) -> Vec<f64> {
    match points {
        0 => Vec::new(),
        1 => vec![start],
        _ => (0..points).map(|k| start + (stop - start) * k as f64 / (points - 1) as f64).collect(),
    }
}

/// Spacing grid at the default density over `[start, stop]`.
pub fn spacing_grid(start: f64, stop: f64) -> Vec<f64> {
    let points = ((stop - start) * SPACING_POINTS_PER_WAVELENGTH).round() as usize + 1;
    linspace(start, stop, points.max(2))
}

/// 0.05λ to λ at 200 points per λ.
pub fn default_spacing_grid() -> Vec<f64> {
    spacing_grid(0.05, 1.0)
}

/// Spacing axis and detuning axis (Δ in units of ν, spanning Δ + ν ∈ [−Γ, Γ]), 100 points each.
pub fn default_detuning_grid(gamma: f64) -> (Vec<f64>, Vec<f64>) {
    let deltas = linspace(-1.0, 1.0, 100).into_iter().map(|x| -1.0 + gamma * x).collect();
    (linspace(0.05, 1.0, 100), deltas)
}

/// φ = kπ/90 for k = 1..=90.
pub fn default_apex_grid() -> Vec<f64> {
    (1..=90).map(|k| k as f64 * PI / 90.0).collect()
}

/// θ from 0 to π/2 in steps of π/180.
pub fn default_theta_grid() -> Vec<f64> {
    linspace(0.0, FRAC_PI_2, 91)
}

/// One solve per point; failures become flagged rows.
fn evaluate(setting: &Setting, solver: &SolverOptions) -> SweepRow {
    let nan = f64::NAN;
    let config = match setting.configuration() {
        Ok(c) => c,
        Err(e) => return SweepRow::failed(nan, nan, nan, nan, &e),
    };
    let (g12, gamma12) = coupling_matrices(&config, setting.physics.gamma)
        .map(|c| neighbour_couplings(&c, config.target_index()))
        .unwrap_or((nan, nan));
    let n_single = match single_reference(&setting.physics, solver) {
        Ok(n) => n,
        Err(e) => return SweepRow::failed(nan, nan, g12, gamma12, &e),
    };
    match solve_configuration(&config, &setting.physics, solver) {
        Ok(p) => SweepRow::solved(nan, p.n_target, n_single, p.g12, p.gamma12, p.residual),
        Err(e) => SweepRow::failed(nan, n_single, g12, gamma12, &e),
    }
}

/// Generic one- or two-axis sweep around `base`. The first axis is the outer loop.
pub fn run_sweep(
    base: &Setting,
    first: (Variable, &[f64]),
    second: Option<(Variable, &[f64])>,
    options: &RunOptions,
) -> Result<SweepRecord> {
    let mut points: Vec<(f64, Option<f64>, Setting)> = Vec::new();
    for &a in first.1 {
        let outer = first.0.apply(base, a)?;
        match second {
            None => points.push((a, None, outer)),
            Some((var, values)) => {
                for &b in values {
                    points.push((a, Some(b), var.apply(&outer, b)?));
                }
            }
        }
    }
    let rows = par_map(&points, options.jobs, |(a, b, setting)| {
        let mut row = evaluate(setting, &options.solver);
        row.sweep_value = *a;
        row.sweep_value_2 = *b;
        row
    })?;
    let mut record = SweepRecord::new(format!("{} sweep", base.geometry.describe()), first.0.describe());
    record.second_variable = second.map(|(v, _)| v.describe().to_string());
    record.notes = base_notes(base);
    record.rows = rows;
    Ok(record)
}

fn base_notes(base: &Setting) -> Vec<String> {
    vec![
        format!("geometry: {}", base.geometry.describe()),
        format!("base spacing: {}", base.spacing),
        format!("physics: {}", base.physics.describe()),
        "reference: single atom at delta = -nu with the same gamma, eta_omega and n_cut".into(),
    ]
}

/// Ratio versus spacing for a fixed shape.
pub fn run_spacing_sweep(geometry: Geometry, spacings: &[f64], physics: &Physics, options: &RunOptions) -> Result<SweepRecord> {
    let base = Setting { geometry, spacing: spacings.first().copied().unwrap_or(MAGIC_SPACING_PERPENDICULAR), physics: *physics };
    run_sweep(&base, (Variable::Spacing, spacings), None, options)
}

/// Two-atom ratio over a spacing × detuning grid; detunings in units of ν.
pub fn run_detuning_diagram(spacings: &[f64], deltas: &[f64], physics: &Physics, options: &RunOptions) -> Result<SweepRecord> {
    let base = Setting { geometry: Geometry::Line { atoms: 2 }, spacing: MAGIC_SPACING_PERPENDICULAR, physics: *physics };
    let mut record = run_sweep(&base, (Variable::Spacing, spacings), Some((Variable::Delta, deltas)), options)?;
    record.title = "two-atom detuning-spacing diagram".into();
    Ok(record)
}

/// Ratio versus apex angle of an isosceles triangle with legs `side`.
pub fn run_isosceles_sweep(phis: &[f64], side: f64, physics: &Physics, options: &RunOptions) -> Result<SweepRecord> {
    let base = Setting { geometry: Geometry::Isosceles { apex_angle: PI / 3.0 }, spacing: side, physics: *physics };
    let mut record = run_sweep(&base, (Variable::ApexAngle, phis), None, options)?;
    record.title = "isosceles apex-angle sweep".into();
    Ok(record)
}

/// Two-atom ratio at every magic spacing in `s_range` for each dipole angle.
///
/// Rows carry θ in `sweep_value` and the magic spacing in `sweep_value_2`.
pub fn run_magic_atlas(thetas: &[f64], s_range: (f64, f64), physics: &Physics, options: &RunOptions) -> Result<SweepRecord> {
    let roots = par_map(thetas, options.jobs, |&theta| find_magic_spacings(theta, s_range, ATLAS_ROOT_TOL))?;
    let mut points = Vec::new();
    for (&theta, found) in thetas.iter().zip(roots) {
        for s in found? {
            points.push((theta, s));
        }
    }
    let rows = par_map(&points, options.jobs, |&(theta, s)| {
        let setting = Setting { geometry: Geometry::Line { atoms: 2 }, spacing: s, physics: Physics { theta, ..*physics } };
        let mut row = evaluate(&setting, &options.solver);
        row.sweep_value = theta;
        row.sweep_value_2 = Some(s);
        row
    })?;
    let mut record = SweepRecord::new("two-atom magic-spacing atlas", Variable::Theta.describe());
    record.second_variable = Some("magic spacing where g12 = 0 (wavelengths)".into());
    record.notes = vec![
        format!("spacing window: [{}, {}], bisection tolerance {ATLAS_ROOT_TOL:e}", s_range.0, s_range.1),
        format!("physics: {}", physics.describe()),
    ];
    record.rows = rows;
    Ok(record)
}

/// Inequivalent spectator subsets of the hexagon with three and four vertices.
pub fn hexagon_subsets() -> Vec<Vec<usize>> {
    vec![vec![0, 1, 2], vec![0, 1, 3], vec![0, 2, 4], vec![0, 1, 2, 3], vec![0, 1, 2, 4], vec![0, 1, 3, 4]]
}

/// Ratio for each hexagon subset with sides `side`. Row `k` has `sweep_value = k`.
pub fn run_hexagon_suite(subsets: &[Vec<usize>], side: f64, physics: &Physics, options: &RunOptions) -> Result<SweepRecord> {
    let settings: Vec<Setting> = subsets
        .iter()
        .map(|v| Setting { geometry: Geometry::Hexagon { vertices: v.clone() }, spacing: side, physics: *physics })
        .collect();
    let mut rows = par_map(&settings, options.jobs, |s| evaluate(s, &options.solver))?;
    for (k, row) in rows.iter_mut().enumerate() {
        row.sweep_value = k as f64;
    }
    let mut record = SweepRecord::new("hexagon suite", "configuration index (see notes)");
    record.notes = subsets
        .iter()
        .enumerate()
        .map(|(k, v)| format!("configuration {k}: {} atoms, spectators on vertices {v:?}", v.len() + 1))
        .collect();
    record.notes.push(format!("side: {side}"));
    record.notes.push(format!("physics: {}", physics.describe()));
    record.rows = rows;
    Ok(record)
}

/// Injective assignment of `targets` to `candidates` minimizing the largest deviation
/// (ties broken by the total deviation). Returns candidate indices and that deviation.
pub fn best_assignment(targets: &[f64], candidates: &[f64]) -> Option<(Vec<usize>, f64)> {
    fn search(
        k: usize,
        targets: &[f64],
        candidates: &[f64],
        used: &mut [bool],
        current: &mut Vec<usize>,
        best: &mut Option<(Vec<usize>, f64, f64)>,
    ) {
        if k == targets.len() {
            let devs = current.iter().zip(targets).map(|(&c, t)| (candidates[c] - t).abs());
            let (max, sum) = devs.fold((0.0f64, 0.0), |(m, s), d| (m.max(d), s + d));
            if best.as_ref().is_none_or(|(_, bm, bs)| (max, sum) < (*bm, *bs)) {
                *best = Some((current.clone(), max, sum));
            }
            return;
        }
        for c in 0..candidates.len() {
            if !used[c] {
                used[c] = true;
                current.push(c);
                search(k + 1, targets, candidates, used, current, best);
                current.pop();
                used[c] = false;
            }
        }
    }
    if targets.len() > candidates.len() || candidates.iter().any(|c| !c.is_finite()) {
        return None;
    }
    let mut best = None;
    search(0, targets, candidates, &mut vec![false; candidates.len()], &mut Vec::new(), &mut best);
    best.map(|(a, max, _)| (a, max))
}
