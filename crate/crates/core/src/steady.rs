//! Steady states of the Lindblad generator, phonon occupations and cooling
//! ratios, plus a time-evolution routine used to cross-check the steady state.

use faer::linalg::solvers::Solve;
use faer::sparse::{SparseColMat, Triplet};
use faer::{Mat, Side};

use crate::error::{Error, Result};
use crate::hilbert::{parity, phonon_number, HilbertLayout, C64, ZERO};
use crate::liouvillian::{unvectorize, vectorize, Superoperator};

/// Superoperator sizes (D²) up to which the dense singular-value route is used.
pub const DEFAULT_SVD_LIMIT: usize = 1024;

/// Required ratio between the two smallest singular values of L.
pub const NULLITY_GAP_THRESHOLD: f64 = 1e6;

pub const RESIDUAL_TOL: f64 = 1e-10;
pub const HERMITICITY_TOL: f64 = 1e-10;
pub const TRACE_TOL: f64 = 1e-10;
pub const PSD_TOL: f64 = 1e-8;

const INVERSE_ITERATIONS: usize = 60;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum SolverPath {
    /// Dense SVD when D² ≤ the SVD limit, otherwise trace replacement.
    #[default]
    Auto,
    /// Right singular vector of the smallest singular value.
    Svd,
    /// Replace the ρ₀₀ equation by tr ρ = 1 and solve the symmetry-reduced system by LU.
    TraceReplacement,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SolverOptions {
    pub path: SolverPath,
    pub svd_limit: usize,
    pub gap_threshold: f64,
}

impl Default for SolverOptions {
    fn default() -> Self {
        Self { path: SolverPath::Auto, svd_limit: DEFAULT_SVD_LIMIT, gap_threshold: NULLITY_GAP_THRESHOLD }
    }
}

impl SolverOptions {
    pub fn with_path(path: SolverPath) -> Self {
        Self { path, ..Self::default() }
    }

    fn resolve(&self, superop_dim: usize) -> SolverPath {
        match self.path {
            SolverPath::Auto if superop_dim <= self.svd_limit => SolverPath::Svd,
            SolverPath::Auto => SolverPath::TraceReplacement,
            p => p,
        }
    }
}

/// Dense row-major D×D density matrix.
#[derive(Debug, Clone, PartialEq)]
pub struct DensityMatrix {
    dim: usize,
    data: Vec<C64>,
}

impl DensityMatrix {
    pub fn new(dim: usize, data: Vec<C64>) -> Result<Self> {
        if data.len() != dim * dim {
            return Err(Error::DimensionMismatch { expected: dim * dim, found: data.len() });
        }
        Ok(Self { dim, data })
    }

    /// Pure basis state |i⟩⟨i|.
    pub fn basis_state(dim: usize, i: usize) -> Self {
        let mut data = vec![ZERO; dim * dim];
        data[i * dim + i] = C64::new(1.0, 0.0);
        Self { dim, data }
    }

    /// Incoherent mixture Σ p_k |i_k⟩⟨i_k|.
    pub fn mixture(dim: usize, weights: &[(usize, f64)]) -> Self {
        let mut data = vec![ZERO; dim * dim];
        for &(i, p) in weights {
            data[i * dim + i] += C64::new(p, 0.0);
        }
        Self { dim, data }
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn data(&self) -> &[C64] {
        &self.data
    }

    pub fn get(&self, r: usize, c: usize) -> C64 {
        self.data[r * self.dim + c]
    }

    pub fn trace(&self) -> C64 {
        (0..self.dim).map(|i| self.get(i, i)).sum()
    }

    /// Largest entrywise |ρ − ρ†|.
    pub fn hermiticity_error(&self) -> f64 {
        let d = self.dim;
        (0..d)
            .flat_map(|r| (0..d).map(move |c| (r, c)))
            .map(|(r, c)| (self.get(r, c) - self.get(c, r).conj()).norm())
            .fold(0.0, f64::max)
    }

    pub fn hermitian_part(&self) -> Self {
        let d = self.dim;
        let data = (0..d * d)
            .map(|k| {
                let (r, c) = (k / d, k % d);
                0.5 * (self.get(r, c) + self.get(c, r).conj())
            })
            .collect();
        Self { dim: d, data }
    }

    pub fn eigenvalues(&self) -> Result<Vec<f64>> {
        let m = Mat::<C64>::from_fn(self.dim, self.dim, |r, c| self.get(r, c));
        m.self_adjoint_eigenvalues(Side::Lower).map_err(|e| Error::Solver(format!("{e:?}")))
    }

    pub fn min_eigenvalue(&self) -> Result<f64> {
        Ok(self.eigenvalues()?.into_iter().fold(f64::INFINITY, f64::min))
    }

    /// Frobenius distance ‖ρ − σ‖.
    pub fn distance(&self, other: &Self) -> f64 {
        self.data.iter().zip(&other.data).map(|(a, b)| (a - b).norm_sqr()).sum::<f64>().sqrt()
    }

    /// Checks Hermiticity, unit trace and positivity against the crate tolerances.
    pub fn validate(&self) -> Result<()> {
        let herm = self.hermiticity_error();
        if herm > HERMITICITY_TOL {
            return Err(Error::Invariant(format!("density matrix not Hermitian (deviation {herm:e})")));
        }
        let tr = self.trace();
        if (tr - C64::new(1.0, 0.0)).norm() > TRACE_TOL {
            return Err(Error::Invariant(format!("density matrix trace {tr}")));
        }
        let min = self.min_eigenvalue()?;
        if min < -PSD_TOL {
            return Err(Error::Invariant(format!("density matrix has eigenvalue {min:e}")));
        }
        Ok(())
    }
}

#[derive(Debug, Clone)]
pub struct SteadyResult {
    pub rho: DensityMatrix,
    /// ⟨a†a⟩ of the layout's target atom, `None` without phonon modes.
    pub n_target: Option<f64>,
    /// ‖L·vec(ρ)‖₂.
    pub residual: f64,
    /// σ₂/σ₁ of L (lower bound on the trace-replacement route).
    pub nullity_gap: f64,
    /// Anti-Hermitian part removed by symmetrization.
    pub hermiticity_error: f64,
    pub min_eigenvalue: f64,
    pub path: SolverPath,
}

impl SteadyResult {
    /// Residual, trace, Hermiticity and positivity checks.
    pub fn check(&self) -> Result<()> {
        if !(self.residual <= RESIDUAL_TOL) {
            return Err(Error::Invariant(format!("steady-state residual {:e} exceeds {RESIDUAL_TOL:e}", self.residual)));
        }
        if self.hermiticity_error > HERMITICITY_TOL {
            return Err(Error::Invariant(format!("steady state not Hermitian (deviation {:e})", self.hermiticity_error)));
        }
        if self.min_eigenvalue < -PSD_TOL {
            return Err(Error::Invariant(format!("steady state has eigenvalue {:e}", self.min_eigenvalue)));
        }
        Ok(())
    }

    pub fn occupation(&self) -> Result<f64> {
        self.n_target
            .ok_or_else(|| Error::InvalidParameter("steady state has no phonon mode to report".into()))
    }
}

pub fn steady_state(l: &Superoperator) -> Result<SteadyResult> {
    steady_state_with(l, &SolverOptions::default())
}

pub fn steady_state_with(l: &Superoperator, options: &SolverOptions) -> Result<SteadyResult> {
    let d = l.hilbert_dim();
    let path = options.resolve(d * d);
    let (vec_rho, gap) = match path {
        SolverPath::Svd => svd_null_vector(l)?,
        _ => trace_replacement(l)?,
    };
    if !(gap >= options.gap_threshold) {
        return Err(Error::DegenerateSteadyState { gap, threshold: options.gap_threshold });
    }
    let raw = unvectorize(&vec_rho, d);
    let tr: C64 = (0..d).map(|i| raw[i * d + i]).sum();
    if !(tr.norm() > 0.0) || !tr.is_finite() {
        return Err(Error::Solver(format!("null vector has trace {tr}")));
    }
    let normalized = DensityMatrix::new(d, raw.iter().map(|x| x / tr).collect())?;
    let hermiticity_error = normalized.hermiticity_error();
    let rho = normalized.hermitian_part();
    let residual = l.matrix().mul_vec(&vectorize(rho.data(), d))?.iter().map(|x| x.norm_sqr()).sum::<f64>().sqrt();
    let min_eigenvalue = rho.min_eigenvalue()?;
    let n_target = match l.layout().target() {
        Some(atom) => Some(phonon_occupation(&rho, l.layout(), atom)?),
        None => None,
    };
    Ok(SteadyResult { rho, n_target, residual, nullity_gap: gap, hermiticity_error, min_eigenvalue, path })
}

fn dense(l: &Superoperator) -> Mat<C64> {
    let n = l.matrix().dim();
    let mut m = Mat::<C64>::zeros(n, n);
    for (r, c, v) in l.matrix().triplets() {
        m[(r, c)] = v;
    }
    m
}

/// Floor for the smallest singular value so that exact zeros give a finite gap.
fn sigma_floor(sigma_max: f64) -> f64 {
    f64::EPSILON * sigma_max
}

fn svd_null_vector(l: &Superoperator) -> Result<(Vec<C64>, f64)> {
    let m = dense(l);
    let n = m.nrows();
    let svd = m.svd().map_err(|e| Error::Solver(format!("SVD failed: {e:?}")))?;
    let s = svd.S().column_vector();
    // nonincreasing order
    let sigma: Vec<f64> = (0..n).map(|i| s[i].re).collect();
    let smallest = sigma[n - 1];
    let gap = if n >= 2 { sigma[n - 2] / smallest.max(sigma_floor(sigma[0])) } else { f64::INFINITY };
    let v = svd.V();
    Ok(((0..n).map(|i| v[(i, n - 1)]).collect(), gap))
}

/// Invariant subspace of operator space that must contain a unique steady state.
///
/// Entries ρ_ij are kept only where |i⟩ and |j⟩ have equal excitation parity
/// (when the generator conserves relative parity), and entries related by an
/// atom-permutation symmetry of the generator share one unknown.
struct ReducedBasis {
    /// Unknown index of every column-stacked entry, `None` outside the subspace.
    orbit_of: Vec<Option<usize>>,
    /// First column-stacked index of each orbit.
    representative: Vec<usize>,
}

impl ReducedBasis {
    fn new(l: &Superoperator) -> Self {
        let layout = l.layout();
        let d = layout.dim();
        let parity = parity(layout);
        let rel = |k: usize| parity[k % d] != parity[k / d];
        let keep_parity = l.matrix().triplets().all(|(r, c, _)| rel(r) == rel(c));

        let state_maps: Vec<Vec<usize>> = l
            .symmetries()
            .iter()
            .filter(|perm| perm.iter().enumerate().any(|(a, &b)| a != b))
            .map(|perm| {
                (0..d)
                    .map(|i| {
                        let digits = layout.decompose(i);
                        let mut image = digits.clone();
                        for (atom, &to) in perm.iter().enumerate() {
                            image[to] = digits[atom];
                        }
                        layout.compose(&image)
                    })
                    .collect()
            })
            .collect();

        let mut orbit_of = vec![None; d * d];
        let mut representative = Vec::new();
        for k in 0..d * d {
            if orbit_of[k].is_some() || (keep_parity && rel(k)) {
                continue;
            }
            let id = representative.len();
            representative.push(k);
            orbit_of[k] = Some(id);
            let (i, j) = (k % d, k / d);
            for map in &state_maps {
                orbit_of[map[i] + map[j] * d] = Some(id);
            }
        }
        Self { orbit_of, representative }
    }

    fn len(&self) -> usize {
        self.representative.len()
    }

    /// Reduced bordered system: one generator row per orbit, with the row of
    /// the orbit holding ρ₀₀ replaced by the trace functional.
    fn bordered_entries(&self, l: &Superoperator) -> Vec<(usize, usize, C64)> {
        let d = l.hilbert_dim();
        let trace_row = self.orbit_of[0].expect("ρ₀₀ is always kept");
        let mut entries = Vec::new();
        for (o, &rep) in self.representative.iter().enumerate() {
            if o == trace_row {
                continue;
            }
            for (c, v) in l.matrix().row(rep) {
                if let Some(oc) = self.orbit_of[c] {
                    entries.push((o, oc, v));
                }
            }
        }
        for i in 0..d {
            if let Some(o) = self.orbit_of[i + i * d] {
                entries.push((trace_row, o, C64::new(1.0, 0.0)));
            }
        }
        entries
    }

    fn expand(&self, x: &[C64]) -> Vec<C64> {
        self.orbit_of.iter().map(|o| o.map_or(ZERO, |o| x[o])).collect()
    }
}

/// Reduced systems up to this size are factorized densely.
const DENSE_LU_LIMIT: usize = 4096;

enum Factorization {
    Dense(faer::linalg::solvers::PartialPivLu<C64>),
    Sparse(faer::sparse::linalg::solvers::Lu<usize, C64>),
}

impl Factorization {
    fn new(n: usize, entries: &[(usize, usize, C64)]) -> Result<Option<Self>> {
        if n <= DENSE_LU_LIMIT {
            let mut m = Mat::<C64>::zeros(n, n);
            for &(r, c, v) in entries {
                m[(r, c)] += v;
            }
            return Ok(Some(Self::Dense(m.partial_piv_lu())));
        }
        if !structurally_nonsingular(n, entries) {
            return Ok(None);
        }
        let triplets: Vec<Triplet<usize, usize, C64>> = entries.iter().map(|&(r, c, v)| Triplet::new(r, c, v)).collect();
        let m = SparseColMat::<usize, C64>::try_new_from_triplets(n, n, &triplets)
            .map_err(|e| Error::Solver(format!("sparse assembly failed: {e:?}")))?;
        Ok(m.sp_lu().ok().map(Self::Sparse))
    }

    fn solve(&self, rhs: &Mat<C64>) -> Mat<C64> {
        match self {
            Self::Dense(lu) => lu.solve(rhs),
            Self::Sparse(lu) => lu.solve(rhs),
        }
    }

    fn solve_adjoint(&self, rhs: &Mat<C64>) -> Mat<C64> {
        match self {
            Self::Dense(lu) => lu.solve_adjoint(rhs),
            Self::Sparse(lu) => lu.solve_adjoint(rhs),
        }
    }
}

/// Whether the sparsity pattern admits a perfect row-column matching.
fn structurally_nonsingular(n: usize, entries: &[(usize, usize, C64)]) -> bool {
    let mut adj: Vec<Vec<usize>> = vec![Vec::new(); n];
    for &(r, c, v) in entries {
        if v != ZERO {
            adj[r].push(c);
        }
    }
    let mut col_match: Vec<Option<usize>> = vec![None; n];
    let mut row_match: Vec<Option<usize>> = vec![None; n];
    // Greedy pass first, then augmenting paths for the leftovers.
    for r in 0..n {
        if let Some(&c) = adj[r].iter().find(|&&c| col_match[c].is_none()) {
            col_match[c] = Some(r);
            row_match[r] = Some(c);
        }
    }
    let mut stamp = vec![usize::MAX; n];
    for root in 0..n {
        if row_match[root].is_some() {
            continue;
        }
        // Iterative DFS over alternating paths.
        let mut stack: Vec<(usize, usize)> = vec![(root, 0)];
        let mut path: Vec<usize> = Vec::new();
        let mut found = false;
        while let Some(&mut (r, ref mut next)) = stack.last_mut() {
            if *next >= adj[r].len() {
                stack.pop();
                path.pop();
                continue;
            }
            let c = adj[r][*next];
            *next += 1;
            if stamp[c] == root {
                continue;
            }
            stamp[c] = root;
            path.push(c);
            match col_match[c] {
                None => {
                    found = true;
                    break;
                }
                Some(r2) => stack.push((r2, 0)),
            }
        }
        if !found {
            return false;
        }
        // path[k] is the column chosen from stack[k].0
        for (k, &c) in path.iter().enumerate() {
            let r = stack[k].0;
            col_match[c] = Some(r);
            row_match[r] = Some(c);
        }
    }
    true
}

fn trace_replacement(l: &Superoperator) -> Result<(Vec<C64>, f64)> {
    let basis = ReducedBasis::new(l);
    let n = basis.len();
    let entries = basis.bordered_entries(l);
    let Some(lu) = Factorization::new(n, &entries)? else {
        return Ok((basis.expand(&vec![ZERO; n]), 0.0));
    };
    let mut rhs = Mat::<C64>::zeros(n, 1);
    rhs[(basis.orbit_of[0].expect("ρ₀₀ is always kept"), 0)] = C64::new(1.0, 0.0);
    let x = lu.solve(&rhs);
    let reduced: Vec<C64> = (0..n).map(|i| x[(i, 0)]).collect();
    let v = basis.expand(&reduced);
    if v.iter().any(|z| !z.is_finite()) {
        return Ok((v, 0.0));
    }

    // σ_min of the bordered system stands in for σ₂ of L (rank-one interlacing).
    let sigma_min_m = smallest_singular_value(&lu, n);
    let v_norm = v.iter().map(|z| z.norm_sqr()).sum::<f64>().sqrt();
    let lv = l.matrix().mul_vec(&v)?;
    let sigma1 = lv.iter().map(|z| z.norm_sqr()).sum::<f64>().sqrt() / v_norm;
    let gap = sigma_min_m / sigma1.max(sigma_floor(l.matrix().norm()));
    Ok((v, gap))
}

/// Inverse iteration on (MᴴM)⁻¹ using an existing LU factorization of M.
fn smallest_singular_value(lu: &Factorization, n: usize) -> f64 {
    let mut x = Mat::<C64>::from_fn(n, 1, |i, _| C64::new(1.0 + (i % 7) as f64 * 0.1, (i % 3) as f64 * 0.05));
    let mut estimate = f64::NAN;
    for _ in 0..INVERSE_ITERATIONS {
        let norm = (0..n).map(|i| x[(i, 0)].norm_sqr()).sum::<f64>().sqrt();
        if !(norm > 0.0) || !norm.is_finite() {
            return 0.0;
        }
        for i in 0..n {
            x[(i, 0)] /= norm;
        }
        let y = lu.solve_adjoint(&x);
        let z = lu.solve(&y);
        let growth = (0..n).map(|i| z[(i, 0)].norm_sqr()).sum::<f64>().sqrt();
        let next = 1.0 / growth.sqrt();
        let converged = (next - estimate).abs() <= 1e-8 * next;
        estimate = next;
        x = z;
        if converged {
            break;
        }
    }
    if estimate.is_finite() {
        estimate
    } else {
        0.0
    }
}

pub fn phonon_occupation(rho: &DensityMatrix, layout: &HilbertLayout, atom: usize) -> Result<f64> {
    let number = phonon_number(layout, atom)?;
    if number.dim() != rho.dim() {
        return Err(Error::DimensionMismatch { expected: number.dim(), found: rho.dim() });
    }
    let value: C64 = (0..rho.dim()).map(|i| number.row(i).map(|(c, v)| v * rho.get(c, i)).sum::<C64>()).sum();
    if value.im.abs() > 1e-12 {
        return Err(Error::Invariant(format!("phonon occupation has imaginary part {:e}", value.im)));
    }
    Ok(value.re)
}

/// ⟨n⟩_multi / ⟨n⟩_single.
pub fn cooling_ratio(multi: &SteadyResult, single_reference: &SteadyResult) -> Result<f64> {
    let reference = single_reference.occupation()?;
    if !(reference >= 1e-15) {
        return Err(Error::InvalidParameter(format!(
            "single-atom reference occupation {reference:e} too small for a ratio"
        )));
    }
    Ok(multi.occupation()? / reference)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum EvolveMethod {
    /// Dense exponential for D² ≤ the SVD limit, Dormand–Prince otherwise.
    #[default]
    Auto,
    /// Padé-13 scaling and squaring of the dense generator.
    Exponential,
    /// Adaptive Dormand–Prince 5(4) on the sparse generator.
    Integrator,
}

/// Local error tolerance of the adaptive integrator.
pub const INTEGRATOR_TOL: f64 = 1e-10;

pub fn evolve(l: &Superoperator, rho0: &DensityMatrix, t: f64) -> Result<DensityMatrix> {
    evolve_with(l, rho0, t, EvolveMethod::Auto)
}

pub fn evolve_with(l: &Superoperator, rho0: &DensityMatrix, t: f64, method: EvolveMethod) -> Result<DensityMatrix> {
    let d = l.hilbert_dim();
    if rho0.dim() != d {
        return Err(Error::DimensionMismatch { expected: d, found: rho0.dim() });
    }
    if !(t >= 0.0) || !t.is_finite() {
        return Err(Error::InvalidParameter(format!("evolution time must be non-negative, got {t}")));
    }
    if t == 0.0 {
        return Ok(rho0.clone());
    }
    let v0 = vectorize(rho0.data(), d);
    let method = match method {
        EvolveMethod::Auto if d * d <= DEFAULT_SVD_LIMIT => EvolveMethod::Exponential,
        EvolveMethod::Auto => EvolveMethod::Integrator,
        m => m,
    };
    let v = match method {
        EvolveMethod::Exponential => {
            let e = expm(&dense(l), t);
            (0..d * d).map(|r| (0..d * d).map(|c| e[(r, c)] * v0[c]).sum()).collect()
        }
        _ => dormand_prince(l, v0, t)?,
    };
    DensityMatrix::new(d, unvectorize(&v, d))
}

fn one_norm(a: &Mat<C64>) -> f64 {
    (0..a.ncols()).map(|c| (0..a.nrows()).map(|r| a[(r, c)].norm()).sum::<f64>()).fold(0.0, f64::max)
}

/// exp(A t) by Padé-13 scaling and squaring.
fn expm(a: &Mat<C64>, t: f64) -> Mat<C64> {
    const B: [f64; 14] = [
        64764752532480000.0,
        32382376266240000.0,
        7771770303897600.0,
        1187353796428800.0,
        129060195264000.0,
        10559470521600.0,
        670442572800.0,
        33522128640.0,
        1323241920.0,
        40840800.0,
        960960.0,
        16380.0,
        182.0,
        1.0,
    ];
    const THETA_13: f64 = 5.371920351148152;
    let n = a.nrows();
    let norm = one_norm(a) * t;
    let squarings = if norm > THETA_13 { (norm / THETA_13).log2().ceil() as i32 } else { 0 };
    let scale = t / 2f64.powi(squarings);
    let a = Mat::<C64>::from_fn(n, n, |r, c| a[(r, c)] * scale);
    let id = Mat::<C64>::identity(n, n);
    let a2 = &a * &a;
    let a4 = &a2 * &a2;
    let a6 = &a4 * &a2;
    let lin = |coeffs: [f64; 4], mats: [&Mat<C64>; 4]| {
        Mat::<C64>::from_fn(n, n, |r, c| {
            coeffs.iter().zip(mats).map(|(k, m)| m[(r, c)] * *k).sum::<C64>()
        })
    };
    let u_inner = lin([B[13], B[11], B[9], 0.0], [&a6, &a4, &a2, &id]);
    let u_tail = lin([B[7], B[5], B[3], B[1]], [&a6, &a4, &a2, &id]);
    let u_sum = &(&a6 * &u_inner) + &u_tail;
    let u = &a * &u_sum;
    let v_inner = lin([B[12], B[10], B[8], 0.0], [&a6, &a4, &a2, &id]);
    let v_tail = lin([B[6], B[4], B[2], B[0]], [&a6, &a4, &a2, &id]);
    let v = &(&a6 * &v_inner) + &v_tail;
    let p = &v + &u;
    let q = &v - &u;
    let mut r = q.partial_piv_lu().solve(&p);
    for _ in 0..squarings {
        r = &r * &r;
    }
    r
}

fn dormand_prince(l: &Superoperator, mut y: Vec<C64>, t_end: f64) -> Result<Vec<C64>> {
    const A: [[f64; 6]; 7] = [
        [0.0; 6],
        [1.0 / 5.0, 0.0, 0.0, 0.0, 0.0, 0.0],
        [3.0 / 40.0, 9.0 / 40.0, 0.0, 0.0, 0.0, 0.0],
        [44.0 / 45.0, -56.0 / 15.0, 32.0 / 9.0, 0.0, 0.0, 0.0],
        [19372.0 / 6561.0, -25360.0 / 2187.0, 64448.0 / 6561.0, -212.0 / 729.0, 0.0, 0.0],
        [9017.0 / 3168.0, -355.0 / 33.0, 46732.0 / 5247.0, 49.0 / 176.0, -5103.0 / 18656.0, 0.0],
        [35.0 / 384.0, 0.0, 500.0 / 1113.0, 125.0 / 192.0, -2187.0 / 6784.0, 11.0 / 84.0],
    ];
    // 5th-order weights minus embedded 4th-order weights.
    const E: [f64; 7] = [
        71.0 / 57600.0,
        0.0,
        -71.0 / 16695.0,
        71.0 / 1920.0,
        -17253.0 / 339200.0,
        22.0 / 525.0,
        -1.0 / 40.0,
    ];
    let m = l.matrix();
    let n = y.len();
    let mut t = 0.0;
    let mut h = (t_end / 100.0).min(0.1);
    let mut k: Vec<Vec<C64>> = vec![vec![ZERO; n]; 7];
    k[0] = m.mul_vec(&y)?;
    while t < t_end {
        if t + h > t_end {
            h = t_end - t;
        }
        if h < 1e-14 * t_end.max(1.0) {
            return Err(Error::StepSizeUnderflow { t });
        }
        for s in 1..7 {
            let stage: Vec<C64> =
                (0..n).map(|i| y[i] + (0..s).map(|j| k[j][i] * (h * A[s][j])).sum::<C64>()).collect();
            k[s] = m.mul_vec(&stage)?;
        }
        // k[6] is evaluated at the 5th-order solution (FSAL).
        let y_new: Vec<C64> = (0..n).map(|i| y[i] + (0..6).map(|j| k[j][i] * (h * A[6][j])).sum::<C64>()).collect();
        let err = (0..n)
            .map(|i| {
                let e: C64 = (0..7).map(|j| k[j][i] * (h * E[j])).sum();
                let scale = INTEGRATOR_TOL * (1.0 + y[i].norm().max(y_new[i].norm()));
                (e.norm() / scale).powi(2)
            })
            .sum::<f64>();
        let err = (err / n as f64).sqrt();
        if err <= 1.0 {
            t += h;
            y = y_new;
            k[0] = std::mem::take(&mut k[6]);
            k[6] = vec![ZERO; n];
        }
        let factor = if err == 0.0 { 5.0 } else { (0.9 * err.powf(-0.2)).clamp(0.2, 5.0) };
        h *= factor;
    }
    Ok(y)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::CouplingMatrices;
    use crate::liouvillian::{build_liouvillian, ModelParams};

    fn single_atom(n_cut: usize) -> Superoperator {
        let layout = HilbertLayout::reduced(1, 0, n_cut).unwrap();
        let mut params = ModelParams::sideband(1, 0);
        params.n_cut = n_cut;
        build_liouvillian(&layout, &params, &CouplingMatrices::independent(1, 0.1)).unwrap()
    }

    #[test]
    fn pure_decay_relaxes_to_ground_state() {
        let layout = HilbertLayout::spins_only(1).unwrap();
        let mut params = ModelParams::sideband(1, 0);
        params.eta_omega = vec![0.0];
        let l = build_liouvillian(&layout, &params, &CouplingMatrices::independent(1, 0.1)).unwrap();
        let r = steady_state(&l).unwrap();
        assert!(r.rho.distance(&DensityMatrix::basis_state(2, 0)) < 1e-12);
        assert!(r.n_target.is_none());
    }

    #[test]
    fn occupation_of_basis_states() {
        let layout = HilbertLayout::reduced(1, 0, 1).unwrap();
        let g0 = layout.compose(&[0, 0]);
        let g1 = layout.compose(&[0, 1]);
        let e1 = layout.compose(&[1, 1]);
        let occ = |rho: &DensityMatrix| phonon_occupation(rho, &layout, 0).unwrap();
        assert_eq!(occ(&DensityMatrix::basis_state(4, g0)), 0.0);
        assert_eq!(occ(&DensityMatrix::basis_state(4, g1)), 1.0);
        assert!((occ(&DensityMatrix::mixture(4, &[(g0, 0.5), (e1, 0.5)])) - 0.5).abs() < 1e-15);
        let spins = HilbertLayout::spins_only(1).unwrap();
        assert!(phonon_occupation(&DensityMatrix::basis_state(2, 0), &spins, 0).is_err());
    }

    #[test]
    fn both_paths_agree_on_single_atom() {
        let l = single_atom(1);
        let a = steady_state_with(&l, &SolverOptions::with_path(SolverPath::Svd)).unwrap();
        let b = steady_state_with(&l, &SolverOptions::with_path(SolverPath::TraceReplacement)).unwrap();
        assert!((a.n_target.unwrap() - b.n_target.unwrap()).abs() < 1e-12);
        a.check().unwrap();
        b.check().unwrap();
        assert!(a.nullity_gap > NULLITY_GAP_THRESHOLD);
        assert!(b.nullity_gap > NULLITY_GAP_THRESHOLD);
    }

    #[test]
    fn ratio_of_identical_results_is_one() {
        let r = steady_state(&single_atom(1)).unwrap();
        assert_eq!(cooling_ratio(&r, &r).unwrap(), 1.0);
    }

    #[test]
    fn ratio_rejects_vanishing_reference() {
        let mut r = steady_state(&single_atom(1)).unwrap();
        let good = r.clone();
        r.n_target = Some(0.0);
        assert!(cooling_ratio(&good, &r).is_err());
    }

    #[test]
    fn zero_drive_with_phonon_is_degenerate() {
        let layout = HilbertLayout::reduced(1, 0, 1).unwrap();
        let mut params = ModelParams::sideband(1, 0);
        params.eta_omega = vec![0.0];
        let l = build_liouvillian(&layout, &params, &CouplingMatrices::independent(1, 0.1)).unwrap();
        for path in [SolverPath::Svd, SolverPath::TraceReplacement] {
            let err = steady_state_with(&l, &SolverOptions::with_path(path)).unwrap_err();
            assert!(matches!(err, Error::DegenerateSteadyState { .. }), "{path:?}: {err}");
        }
    }

    #[test]
    fn matching_detects_structural_singularity() {
        let e = |r, c| (r, c, C64::new(1.0, 0.0));
        assert!(structurally_nonsingular(3, &[e(0, 1), e(1, 0), e(2, 2), e(0, 2)]));
        assert!(!structurally_nonsingular(3, &[e(0, 1), e(1, 1), e(2, 1), e(2, 2)]));
        // needs an augmenting path: greedy puts row 0 on column 0
        assert!(structurally_nonsingular(2, &[e(0, 0), e(0, 1), e(1, 0)]));
    }

    #[test]
    fn evolve_zero_time_is_identity() {
        let l = single_atom(1);
        let rho0 = DensityMatrix::basis_state(4, 1);
        assert_eq!(evolve(&l, &rho0, 0.0).unwrap(), rho0);
        assert!(evolve(&l, &rho0, -1.0).is_err());
    }

    #[test]
    fn exponential_and_integrator_agree() {
        let l = single_atom(1);
        let rho0 = DensityMatrix::basis_state(4, 1);
        let a = evolve_with(&l, &rho0, 5.0, EvolveMethod::Exponential).unwrap();
        let b = evolve_with(&l, &rho0, 5.0, EvolveMethod::Integrator).unwrap();
        assert!(a.distance(&b) < 1e-8, "{}", a.distance(&b));
        assert!((a.trace().re - 1.0).abs() < 1e-9);
        assert!((b.trace().re - 1.0).abs() < 1e-9);
    }

    #[test]
    fn density_matrix_validation() {
        assert!(DensityMatrix::basis_state(3, 2).validate().is_ok());
        assert!(DensityMatrix::mixture(2, &[(0, 0.5)]).validate().is_err());
        assert!(DensityMatrix::mixture(2, &[(0, 1.5), (1, -0.5)]).validate().is_err());
        assert!(DensityMatrix::new(2, vec![ZERO; 3]).is_err());
    }
}
