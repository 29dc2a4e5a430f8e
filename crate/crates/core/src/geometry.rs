//! Atom arrays and the free-space dipole-dipole coupling coefficients.
//!
//! Lengths are measured in units of the transition wavelength λ, so the
//! dimensionless separation entering the couplings is ξ = 2π |r_μ − r_ν|.
//! Coupling strengths come out in whatever unit the decay rate Γ is given in.

use std::f64::consts::{FRAC_PI_2, PI, TAU};

use crate::error::{Error, Result};

pub type Vec3 = [f64; 3];

/// Smallest spacing accepted by the magic-spacing search.
pub const MIN_SPACING: f64 = 0.01;

/// Uniform scan density used to bracket roots of the collective shift.
pub const SCAN_POINTS_PER_WAVELENGTH: f64 = 2000.0;

/// Magic spacing for a dipole perpendicular to the pair axis.
pub const MAGIC_SPACING_PERPENDICULAR: f64 = 0.7133;

const UNIT_NORM_TOL: f64 = 1e-12;

/// Below this ξ the cancelling combination in γ_μν is replaced by its series.
const SMALL_XI: f64 = 1e-2;

fn dot(a: &Vec3, b: &Vec3) -> f64 {
    a[0] * b[0] + a[1] * b[1] + a[2] * b[2]
}

fn norm(a: &Vec3) -> f64 {
    dot(a, a).sqrt()
}

fn sub(a: &Vec3, b: &Vec3) -> Vec3 {
    [a[0] - b[0], a[1] - b[1], a[2] - b[2]]
}

pub fn distance(a: &Vec3, b: &Vec3) -> f64 {
    norm(&sub(a, b))
}

/// Dipole unit vector in the x–z plane at angle `theta` from the x axis.
pub fn dipole_in_xz(theta: f64) -> Vec3 {
    [theta.cos(), 0.0, theta.sin()]
}

/// Positions of a set of atoms together with their common dipole orientation
/// and the index of the laser-driven target atom.
#[derive(Debug, Clone, PartialEq)]
pub struct AtomConfiguration {
    positions: Vec<Vec3>,
    dipole: Vec3,
    target_index: usize,
}

impl AtomConfiguration {
    pub fn new(positions: Vec<Vec3>, dipole: Vec3, target_index: usize) -> Result<Self> {
        if positions.is_empty() {
            return Err(Error::InvalidGeometry("configuration has no atoms".into()));
        }
        if positions.iter().flatten().any(|x| !x.is_finite()) || dipole.iter().any(|x| !x.is_finite()) {
            return Err(Error::InvalidGeometry("non-finite coordinate".into()));
        }
        if (norm(&dipole) - 1.0).abs() > UNIT_NORM_TOL {
            return Err(Error::InvalidGeometry(format!(
                "dipole must have unit norm, got {}",
                norm(&dipole)
            )));
        }
        if target_index >= positions.len() {
            return Err(Error::AtomIndex { index: target_index, n_atoms: positions.len() });
        }
        for (i, a) in positions.iter().enumerate() {
            for b in &positions[i + 1..] {
                let d = distance(a, b);
                if d <= 0.0 {
                    return Err(Error::CoincidentAtoms(d));
                }
            }
        }
        Ok(Self { positions, dipole, target_index })
    }

    pub fn positions(&self) -> &[Vec3] {
        &self.positions
    }

    pub fn dipole(&self) -> Vec3 {
        self.dipole
    }

    pub fn target_index(&self) -> usize {
        self.target_index
    }

    pub fn len(&self) -> usize {
        self.positions.len()
    }

    pub fn is_empty(&self) -> bool {
        self.positions.is_empty()
    }

    /// Same positions with a different dipole orientation.
    pub fn with_dipole(self, dipole: Vec3) -> Result<Self> {
        Self::new(self.positions, dipole, self.target_index)
    }

    pub fn pair_distance(&self, mu: usize, nu: usize) -> f64 {
        distance(&self.positions[mu], &self.positions[nu])
    }

    /// Smallest distance between any two atoms, `None` for a single atom.
    pub fn min_pair_distance(&self) -> Option<f64> {
        let n = self.positions.len();
        (0..n)
            .flat_map(|i| (i + 1..n).map(move |j| (i, j)))
            .map(|(i, j)| self.pair_distance(i, j))
            .min_by(f64::total_cmp)
    }
}

/// Collective shifts g_μν and decays γ_μν for every atom pair.
#[derive(Debug, Clone, PartialEq)]
pub struct CouplingMatrices {
    n: usize,
    shifts: Vec<f64>,
    decays: Vec<f64>,
    gamma: f64,
}

impl CouplingMatrices {
    /// Uncoupled atoms: zero shifts, decays diag(Γ).
    pub fn independent(n: usize, gamma: f64) -> Self {
        let mut decays = vec![0.0; n * n];
        for i in 0..n {
            decays[i * n + i] = gamma;
        }
        Self { n, shifts: vec![0.0; n * n], decays, gamma }
    }

    pub fn len(&self) -> usize {
        self.n
    }

    pub fn is_empty(&self) -> bool {
        self.n == 0
    }

    pub fn gamma(&self) -> f64 {
        self.gamma
    }

    pub fn shift(&self, mu: usize, nu: usize) -> f64 {
        self.shifts[mu * self.n + nu]
    }

    pub fn decay(&self, mu: usize, nu: usize) -> f64 {
        self.decays[mu * self.n + nu]
    }

    /// Row-major N×N shift matrix.
    pub fn shifts(&self) -> &[f64] {
        &self.shifts
    }

    /// Row-major N×N decay matrix.
    pub fn decays(&self) -> &[f64] {
        &self.decays
    }

    /// Scales every off-diagonal shift; used to isolate the coherent exchange term.
    pub fn with_scaled_shifts(&self, factor: f64) -> Self {
        let mut out = self.clone();
        out.shifts.iter_mut().for_each(|g| *g *= factor);
        out
    }

    /// Smallest eigenvalue of the decay matrix (real symmetric, Jacobi sweeps).
    pub fn min_decay_eigenvalue(&self) -> f64 {
        symmetric_eigenvalues(&self.decays, self.n)
            .into_iter()
            .fold(f64::INFINITY, f64::min)
    }
}

/// Eigenvalues of a small real symmetric matrix via cyclic Jacobi rotations.
pub(crate) fn symmetric_eigenvalues(a: &[f64], n: usize) -> Vec<f64> {
    let mut m = a.to_vec();
    for _sweep in 0..100 {
        let off: f64 = (0..n)
            .flat_map(|i| (0..n).filter(move |&j| j != i).map(move |j| (i, j)))
            .map(|(i, j)| m[i * n + j].powi(2))
            .sum();
        if off < 1e-30 {
            break;
        }
        for p in 0..n {
            for q in p + 1..n {
                let apq = m[p * n + q];
                if apq.abs() < 1e-300 {
                    continue;
                }
                let theta = (m[q * n + q] - m[p * n + p]) / (2.0 * apq);
                let t = theta.signum() / (theta.abs() + (theta * theta + 1.0).sqrt());
                let t = if theta == 0.0 { 1.0 } else { t };
                let c = 1.0 / (t * t + 1.0).sqrt();
                let s = t * c;
                for k in 0..n {
                    let akp = m[k * n + p];
                    let akq = m[k * n + q];
                    m[k * n + p] = c * akp - s * akq;
                    m[k * n + q] = s * akp + c * akq;
                }
                for k in 0..n {
                    let apk = m[p * n + k];
                    let aqk = m[q * n + k];
                    m[p * n + k] = c * apk - s * aqk;
                    m[q * n + k] = s * apk + c * aqk;
                }
            }
        }
    }
    (0..n).map(|i| m[i * n + i]).collect()
}

/// (ξ cos ξ − sin ξ)/ξ³, evaluated by its Taylor series where the direct form cancels.
fn cos_sin_combination(xi: f64) -> f64 {
    if xi < SMALL_XI {
        let x2 = xi * xi;
        -1.0 / 3.0 + x2 / 30.0 - x2 * x2 / 840.0
    } else {
        xi.cos() / (xi * xi) - xi.sin() / (xi * xi * xi)
    }
}

/// Collective frequency shift and cross decay rate for one atom pair.
///
/// `separation` is r_μ − r_ν in units of λ and `dipole` the unit polarization.
/// Returns `(g_μν, γ_μν)` in the units of `gamma`.
pub fn pair_couplings(separation: Vec3, dipole: Vec3, gamma: f64) -> Result<(f64, f64)> {
    let r = norm(&separation);
    if !(r > 0.0) || !r.is_finite() {
        return Err(Error::CoincidentAtoms(r));
    }
    let xi = TAU * r;
    let cos_theta = dot(&dipole, &separation) / r;
    let c2 = cos_theta * cos_theta;
    let transverse = 1.0 - c2;
    let near_field = 1.0 - 3.0 * c2;

    let (s, c) = xi.sin_cos();
    let g = 0.75 * gamma * (-transverse * c / xi + near_field * (s / (xi * xi) + c / (xi * xi * xi)));
    let sinc = if xi < SMALL_XI { 1.0 - xi * xi / 6.0 + xi.powi(4) / 120.0 } else { s / xi };
    let decay = 1.5 * gamma * (transverse * sinc + near_field * cos_sin_combination(xi));
    Ok((g, decay))
}

/// Collective shift for a pair separated by `spacing` along x with the dipole
/// tilted by `theta` from the pair axis.
pub fn shift_at(spacing: f64, theta: f64, gamma: f64) -> Result<f64> {
    pair_couplings([spacing, 0.0, 0.0], dipole_in_xz(theta), gamma).map(|(g, _)| g)
}

pub fn coupling_matrices(config: &AtomConfiguration, gamma: f64) -> Result<CouplingMatrices> {
    if !(gamma > 0.0) {
        return Err(Error::InvalidParameter(format!("decay rate must be positive, got {gamma}")));
    }
    let n = config.len();
    let mut out = CouplingMatrices::independent(n, gamma);
    let pos = config.positions();
    for mu in 0..n {
        for nu in mu + 1..n {
            let (g, d) = pair_couplings(sub(&pos[mu], &pos[nu]), config.dipole(), gamma)?;
            out.shifts[mu * n + nu] = g;
            out.shifts[nu * n + mu] = g;
            out.decays[mu * n + nu] = d;
            out.decays[nu * n + mu] = d;
        }
    }
    Ok(out)
}

/// All sign-changing zeros of the pair shift g(s, θ) inside `s_range`.
///
/// Roots are bracketed on a uniform grid of [`SCAN_POINTS_PER_WAVELENGTH`]
/// points per λ and refined by bisection until the bracket is narrower than
/// `tolerance` and |g| ≤ 1e-12 Γ (or the bracket stops shrinking). Zeros where
/// g touches the axis without changing sign are not found.
pub fn find_magic_spacings(theta: f64, s_range: (f64, f64), tolerance: f64) -> Result<Vec<f64>> {
    let (lo, hi) = s_range;
    if !(lo >= MIN_SPACING) || !(hi > lo) || !hi.is_finite() {
        return Err(Error::InvalidParameter(format!(
            "spacing range ({lo}, {hi}) must satisfy {MIN_SPACING} ≤ min < max"
        )));
    }
    if !(tolerance > 0.0) {
        return Err(Error::InvalidParameter(format!("tolerance must be positive, got {tolerance}")));
    }
    if !(0.0..=FRAC_PI_2).contains(&theta) {
        return Err(Error::InvalidParameter(format!("polarization angle {theta} outside [0, π/2]")));
    }
    // Γ = 1: roots do not depend on the overall scale.
    let g = |s: f64| shift_at(s, theta, 1.0);

    let steps = ((hi - lo) * SCAN_POINTS_PER_WAVELENGTH).ceil().max(1.0) as usize;
    let grid = |i: usize| if i == steps { hi } else { lo + (hi - lo) * i as f64 / steps as f64 };

    let mut roots: Vec<f64> = Vec::new();
    let push = |r: f64, roots: &mut Vec<f64>| {
        if roots.last().is_none_or(|&last| r - last > tolerance) {
            roots.push(r);
        }
    };
    let mut s_prev = grid(0);
    let mut g_prev = g(s_prev)?;
    if g_prev == 0.0 {
        push(s_prev, &mut roots);
    }
    for i in 1..=steps {
        let s = grid(i);
        let gs = g(s)?;
        if gs == 0.0 {
            push(s, &mut roots);
        } else if g_prev != 0.0 && (g_prev < 0.0) != (gs < 0.0) {
            push(bisect(&g, s_prev, s, g_prev, tolerance)?, &mut roots);
        }
        s_prev = s;
        g_prev = gs;
    }
    Ok(roots)
}

fn bisect(g: &impl Fn(f64) -> Result<f64>, mut a: f64, mut b: f64, mut ga: f64, tolerance: f64) -> Result<f64> {
    const RESIDUAL: f64 = 1e-12;
    loop {
        let m = 0.5 * (a + b);
        if m <= a || m >= b {
            break;
        }
        let gm = g(m)?;
        if gm == 0.0 {
            return Ok(m);
        }
        if (gm < 0.0) == (ga < 0.0) {
            a = m;
            ga = gm;
        } else {
            b = m;
        }
        if b - a <= tolerance && gm.abs() <= RESIDUAL {
            break;
        }
    }
    let (ga, gb) = (g(a)?.abs(), g(b)?.abs());
    Ok(if ga <= gb { a } else { b })
}

fn check_length(name: &str, value: f64) -> Result<()> {
    if value > 0.0 && value.is_finite() {
        Ok(())
    } else {
        Err(Error::InvalidGeometry(format!("{name} must be positive and finite, got {value}")))
    }
}

const Z_HAT: Vec3 = [0.0, 0.0, 1.0];

/// `n` atoms along x with the given spacing; the target is atom 0 at the end.
pub fn build_line(n: usize, spacing: f64) -> Result<AtomConfiguration> {
    if n == 0 {
        return Err(Error::InvalidGeometry("a line needs at least one atom".into()));
    }
    check_length("spacing", spacing)?;
    let positions = (0..n).map(|i| [i as f64 * spacing, 0.0, 0.0]).collect();
    AtomConfiguration::new(positions, Z_HAT, 0)
}

pub fn build_single() -> AtomConfiguration {
    AtomConfiguration::new(vec![[0.0; 3]], Z_HAT, 0).expect("single atom is always valid")
}

pub fn build_equilateral_triangle(side: f64) -> Result<AtomConfiguration> {
    build_isosceles(side, PI / 3.0)
}

/// Target at the apex, both legs of length `side`, opening angle `phi`.
pub fn build_isosceles(side: f64, phi: f64) -> Result<AtomConfiguration> {
    check_length("side", side)?;
    if !(phi > 0.0 && phi <= PI) {
        return Err(Error::InvalidGeometry(format!("apex angle must lie in (0, π], got {phi}")));
    }
    let half = 0.5 * phi;
    let (s, c) = half.sin_cos();
    let positions = vec![[0.0, 0.0, 0.0], [side * s, -side * c, 0.0], [-side * s, -side * c, 0.0]];
    AtomConfiguration::new(positions, Z_HAT, 0)
}

/// Target at the center of a regular hexagon of circumradius `side`, with
/// spectators on the listed vertices (vertex k at angle kπ/3). Spectators
/// appear in ascending vertex order after the target.
pub fn build_hexagon_config(vertex_subset: &[usize], side: f64) -> Result<AtomConfiguration> {
    check_length("side", side)?;
    if vertex_subset.is_empty() {
        return Err(Error::InvalidGeometry("hexagon vertex subset is empty".into()));
    }
    let mut vertices = vertex_subset.to_vec();
    vertices.sort_unstable();
    vertices.dedup();
    if vertices.len() != vertex_subset.len() {
        return Err(Error::InvalidGeometry(format!("repeated hexagon vertex in {vertex_subset:?}")));
    }
    if let Some(&bad) = vertices.iter().find(|&&v| v > 5) {
        return Err(Error::InvalidGeometry(format!("hexagon vertex {bad} outside 0..=5")));
    }
    let positions = std::iter::once([0.0; 3])
        .chain(vertices.iter().map(|&k| {
            let angle = k as f64 * PI / 3.0;
            [side * angle.cos(), side * angle.sin(), 0.0]
        }))
        .collect();
    AtomConfiguration::new(positions, Z_HAT, 0)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn magic_spacing_shift_vanishes() {
        let (g, _) = pair_couplings([0.7133, 0.0, 0.0], Z_HAT, 0.1).unwrap();
        assert!(g.abs() < 1e-3 * 0.1, "g = {g}");
    }

    #[test]
    fn zero_of_angular_factor_collapses_formulas() {
        let c = 1.0 / 3f64.sqrt();
        let dipole = [c, 0.0, (1.0 - c * c).sqrt()];
        let (g, d) = pair_couplings([0.25, 0.0, 0.0], dipole, 1.0).unwrap();
        assert!(g.abs() < 1e-15);
        assert!((d - 2.0 / PI).abs() < 1e-14);
    }

    #[test]
    fn dicke_limit() {
        for dipole in [Z_HAT, [1.0, 0.0, 0.0], dipole_in_xz(0.3)] {
            let (_, d) = pair_couplings([1e-6, 0.0, 0.0], dipole, 0.1).unwrap();
            assert!(((d - 0.1) / 0.1).abs() < 1e-6, "γ = {d}");
        }
    }

    #[test]
    fn coincident_atoms_rejected() {
        assert!(matches!(pair_couplings([0.0; 3], Z_HAT, 0.1), Err(Error::CoincidentAtoms(_))));
        assert!(AtomConfiguration::new(vec![[0.0; 3], [0.0; 3]], Z_HAT, 0).is_err());
    }

    #[test]
    fn configuration_validation() {
        assert!(AtomConfiguration::new(vec![[0.0; 3]], [0.0, 0.0, 2.0], 0).is_err());
        assert!(AtomConfiguration::new(vec![[0.0; 3]], Z_HAT, 1).is_err());
        assert!(AtomConfiguration::new(vec![], Z_HAT, 0).is_err());
    }

    #[test]
    fn single_atom_matrices() {
        let m = coupling_matrices(&build_single(), 0.1).unwrap();
        assert_eq!(m.shifts(), &[0.0]);
        assert_eq!(m.decays(), &[0.1]);
    }

    #[test]
    fn far_apart_pair_is_nearly_independent() {
        let m = coupling_matrices(&build_line(2, 50.0).unwrap(), 0.1).unwrap();
        assert!(m.shift(0, 1).abs() < 0.005 * 0.1);
        assert!(m.decay(0, 1).abs() < 0.005 * 0.1);
    }

    #[test]
    fn equilateral_triangle_at_magic_spacing() {
        let cfg = build_equilateral_triangle(MAGIC_SPACING_PERPENDICULAR).unwrap();
        let m = coupling_matrices(&cfg, 0.1).unwrap();
        let d01 = m.decay(0, 1);
        for (i, j) in [(0, 1), (0, 2), (1, 2)] {
            assert!(m.shift(i, j).abs() < 1e-4 * 0.1);
            assert!((m.decay(i, j) - d01).abs() < 1e-12);
        }
    }

    #[test]
    fn builders() {
        let iso = build_isosceles(0.7133, PI / 3.0).unwrap();
        for (i, j) in [(0, 1), (0, 2), (1, 2)] {
            assert!((iso.pair_distance(i, j) - 0.7133).abs() < 1e-12);
        }
        let hex = build_hexagon_config(&[0, 2, 4], 0.7133).unwrap();
        for k in 1..4 {
            assert!((hex.pair_distance(0, k) - 0.7133).abs() < 1e-12);
        }
        for (i, j) in [(1, 2), (1, 3), (2, 3)] {
            assert!((hex.pair_distance(i, j) - 3f64.sqrt() * 0.7133).abs() < 1e-12);
        }
        let line = build_line(2, 0.7133).unwrap();
        assert_eq!(line.len(), 2);
        assert!((line.pair_distance(0, 1) - 0.7133).abs() < 1e-15);
        assert_eq!(line.target_index(), 0);

        assert!(build_line(0, 1.0).is_err());
        assert!(build_line(2, -1.0).is_err());
        assert!(build_isosceles(1.0, 0.0).is_err());
        assert!(build_isosceles(1.0, 3.5).is_err());
        assert!(build_hexagon_config(&[], 1.0).is_err());
        assert!(build_hexagon_config(&[6], 1.0).is_err());
        assert!(build_hexagon_config(&[1, 1], 1.0).is_err());
    }

    #[test]
    fn collinear_isosceles_is_a_line_with_target_in_middle() {
        let cfg = build_isosceles(0.5, PI).unwrap();
        assert!((cfg.pair_distance(1, 2) - 1.0).abs() < 1e-12);
    }

    #[test]
    fn perpendicular_magic_spacing() {
        let roots = find_magic_spacings(FRAC_PI_2, (MIN_SPACING, 1.0), 1e-12).unwrap();
        assert_eq!(roots.len(), 1);
        assert!((roots[0] - 0.7133).abs() < 5e-4, "{roots:?}");
    }

    #[test]
    fn magic_search_rejects_bad_ranges() {
        assert!(find_magic_spacings(1.0, (0.001, 1.0), 1e-12).is_err());
        assert!(find_magic_spacings(1.0, (0.5, 0.4), 1e-12).is_err());
        assert!(find_magic_spacings(1.0, (0.1, 1.0), 0.0).is_err());
        assert!(find_magic_spacings(2.0, (0.1, 1.0), 1e-9).is_err());
    }

    #[test]
    fn no_roots_is_not_an_error() {
        let roots = find_magic_spacings(FRAC_PI_2, (0.8, 0.9), 1e-12).unwrap();
        assert!(roots.is_empty());
    }

    #[test]
    fn jacobi_eigenvalues_of_known_matrix() {
        let mut ev = symmetric_eigenvalues(&[2.0, 1.0, 0.0, 1.0, 2.0, 0.0, 0.0, 0.0, 5.0], 3);
        ev.sort_by(f64::total_cmp);
        for (got, want) in ev.iter().zip([1.0, 3.0, 5.0]) {
            assert!((got - want).abs() < 1e-12);
        }
    }
}
