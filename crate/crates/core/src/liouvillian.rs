//! Lamb-Dicke Hamiltonian with coherent dipole-dipole exchange and the
//! Lindblad generator with collective decay.
//!
//! Density matrices are vectorized by stacking columns: ρ_ij sits at index
//! i + j·D, so vec(AρB) = (Bᵀ ⊗ A) vec(ρ).

use crate::error::{Error, Result};
use crate::geometry::CouplingMatrices;
use crate::hilbert::{phonon_annihilation, sigma_lower, HilbertLayout, SparseMatrix, C64, I, ONE};

/// Sideband-condition defaults, in units of the trap frequency.
pub const DEFAULT_GAMMA: f64 = 0.1;
pub const DEFAULT_DELTA: f64 = -1.0;
pub const DEFAULT_ETA_OMEGA: f64 = 0.04;
pub const DEFAULT_N_CUT: usize = 1;

/// Physical parameters of the cooling model. Energies are in units of ν.
#[derive(Debug, Clone, PartialEq)]
pub struct ModelParams {
    pub nu: f64,
    pub gamma: f64,
    pub delta: f64,
    /// ηΩ_μ per atom; atoms with a nonzero entry are driven.
    pub eta_omega: Vec<f64>,
    pub n_cut: usize,
}

impl ModelParams {
    /// Resolved-sideband defaults with only `target` driven.
    pub fn sideband(n_atoms: usize, target: usize) -> Self {
        let mut eta_omega = vec![0.0; n_atoms];
        if target < n_atoms {
            eta_omega[target] = DEFAULT_ETA_OMEGA;
        }
        Self { nu: 1.0, gamma: DEFAULT_GAMMA, delta: DEFAULT_DELTA, eta_omega, n_cut: DEFAULT_N_CUT }
    }

    pub fn driven_atoms(&self) -> impl Iterator<Item = usize> + '_ {
        self.eta_omega.iter().enumerate().filter(|(_, &w)| w != 0.0).map(|(i, _)| i)
    }

    pub fn validate(&self) -> Result<()> {
        let finite = [self.nu, self.gamma, self.delta].iter().chain(&self.eta_omega).all(|x| x.is_finite());
        if !finite {
            return Err(Error::InvalidParameter("non-finite model parameter".into()));
        }
        if !(self.gamma > 0.0) {
            return Err(Error::InvalidParameter(format!("Γ must be positive, got {}", self.gamma)));
        }
        if !(self.nu > 0.0) {
            return Err(Error::InvalidParameter(format!("ν must be positive, got {}", self.nu)));
        }
        if let Some(w) = self.eta_omega.iter().find(|&&w| w < 0.0) {
            return Err(Error::InvalidParameter(format!("drive strengths must be non-negative, got {w}")));
        }
        if self.n_cut == 0 {
            return Err(Error::InvalidParameter("phonon cutoff must be at least 1".into()));
        }
        Ok(())
    }
}

/// Lindblad generator acting on column-stacked density matrices.
#[derive(Debug, Clone)]
pub struct Superoperator {
    matrix: SparseMatrix,
    layout: HilbertLayout,
    symmetries: Vec<Vec<usize>>,
}

impl Superoperator {
    /// Wraps a raw generator; no atom-permutation symmetry is assumed.
    pub fn from_matrix(matrix: SparseMatrix, layout: HilbertLayout) -> Result<Self> {
        let d = layout.dim();
        if matrix.dim() != d * d {
            return Err(Error::DimensionMismatch { expected: d * d, found: matrix.dim() });
        }
        let identity = (0..layout.n_atoms()).collect();
        Ok(Self { matrix, layout, symmetries: vec![identity] })
    }

    /// Atom permutations (including the identity) that leave the generator
    /// invariant. Each maps atom μ to `perm[μ]`.
    pub fn symmetries(&self) -> &[Vec<usize>] {
        &self.symmetries
    }

    pub fn matrix(&self) -> &SparseMatrix {
        &self.matrix
    }

    pub fn layout(&self) -> &HilbertLayout {
        &self.layout
    }

    /// Hilbert-space dimension D (the superoperator is D²×D²).
    pub fn hilbert_dim(&self) -> usize {
        self.layout.dim()
    }

    /// L·vec(ρ) for a row-major D×D matrix, returned row-major.
    pub fn apply(&self, rho: &[C64]) -> Result<Vec<C64>> {
        let d = self.hilbert_dim();
        if rho.len() != d * d {
            return Err(Error::DimensionMismatch { expected: d * d, found: rho.len() });
        }
        let out = self.matrix.mul_vec(&vectorize(rho, d))?;
        Ok(unvectorize(&out, d))
    }
}

/// Row-major D×D → column-stacked vector.
pub fn vectorize(rho: &[C64], d: usize) -> Vec<C64> {
    (0..d * d).map(|k| rho[(k % d) * d + k / d]).collect()
}

/// Column-stacked vector → row-major D×D.
pub fn unvectorize(v: &[C64], d: usize) -> Vec<C64> {
    (0..d * d).map(|k| v[(k % d) * d + k / d]).collect()
}

fn check_inputs(layout: &HilbertLayout, params: &ModelParams, couplings: &CouplingMatrices) -> Result<()> {
    params.validate()?;
    let n = layout.n_atoms();
    if couplings.len() != n {
        return Err(Error::DimensionMismatch { expected: n, found: couplings.len() });
    }
    if params.eta_omega.len() != n {
        return Err(Error::DimensionMismatch { expected: n, found: params.eta_omega.len() });
    }
    if params.n_cut != layout.n_cut() && !layout.phonon_atoms().is_empty() {
        return Err(Error::InvalidParameter(format!(
            "phonon cutoff {} differs from layout cutoff {}",
            params.n_cut,
            layout.n_cut()
        )));
    }
    if ((couplings.gamma() - params.gamma) / params.gamma).abs() > 1e-12 {
        return Err(Error::InvalidParameter(format!(
            "couplings evaluated for Γ = {} but model uses Γ = {}",
            couplings.gamma(),
            params.gamma
        )));
    }
    if let Some(atom) = params.driven_atoms().find(|&a| !layout.has_phonon(a)) {
        return Err(Error::NoPhononMode(atom));
    }
    Ok(())
}

fn real(x: f64) -> C64 {
    C64::new(x, 0.0)
}

/// H = −Δ Σ σ†σ + ν Σ a†a + Σ (ηΩ_μ/2)(σ† + σ)(a† + a) + Σ_{μ≠ν} g_μν σ†_μ σ_ν.
pub fn build_hamiltonian(
    layout: &HilbertLayout,
    params: &ModelParams,
    couplings: &CouplingMatrices,
) -> Result<SparseMatrix> {
    check_inputs(layout, params, couplings)?;
    let n = layout.n_atoms();
    let sigmas = (0..n).map(|a| sigma_lower(layout, a)).collect::<Result<Vec<_>>>()?;
    let mut h = SparseMatrix::zeros(layout.dim());

    for (mu, s) in sigmas.iter().enumerate() {
        let excited = s.adjoint().mul(s)?;
        h = h.add(&excited.scale(real(-params.delta)))?;
        for (nu, t) in sigmas.iter().enumerate() {
            let g = couplings.shift(mu, nu);
            if nu != mu && g != 0.0 {
                h = h.add(&s.adjoint().mul(t)?.scale(real(g)))?;
            }
        }
    }
    for &atom in layout.phonon_atoms() {
        let a = phonon_annihilation(layout, atom)?;
        h = h.add(&a.adjoint().mul(&a)?.scale(real(params.nu)))?;
    }
    for atom in params.driven_atoms() {
        let a = phonon_annihilation(layout, atom)?;
        let s = &sigmas[atom];
        let spin = s.add(&s.adjoint())?;
        let motion = a.add(&a.adjoint())?;
        h = h.add(&spin.mul(&motion)?.scale(real(0.5 * params.eta_omega[atom])))?;
    }
    Ok(h)
}

/// Triplets of the superoperator ρ ↦ AρB.
fn sandwich<'a>(a: &'a SparseMatrix, b: &'a SparseMatrix, weight: C64) -> impl Iterator<Item = (usize, usize, C64)> + 'a {
    let d = a.dim();
    // (Bᵀ ⊗ A)[(j'·D + i'), (j·D + i)] = B[j, j'] A[i', i]
    b.triplets().flat_map(move |(j, jp, bv)| {
        a.triplets().map(move |(ip, i, av)| (jp * d + ip, j * d + i, weight * bv * av))
    })
}

/// Triplets of −i[H, ρ].
fn commutator_terms(h: &SparseMatrix) -> Vec<(usize, usize, C64)> {
    let id = SparseMatrix::identity(h.dim());
    sandwich(h, &id, -I).chain(sandwich(&id, h, I)).collect()
}

/// Triplets of weight·(σ_ν ρ σ_μ† − ½{σ_μ†σ_ν, ρ}).
fn lindblad_terms(sigma_mu: &SparseMatrix, sigma_nu: &SparseMatrix, weight: f64) -> Result<Vec<(usize, usize, C64)>> {
    let id = SparseMatrix::identity(sigma_mu.dim());
    let raise_mu = sigma_mu.adjoint();
    let k = raise_mu.mul(sigma_nu)?;
    let w = real(weight);
    Ok(sandwich(sigma_nu, &raise_mu, w)
        .chain(sandwich(&k, &id, -0.5 * w))
        .chain(sandwich(&id, &k, -0.5 * w))
        .collect())
}

/// Coherent exchange part alone: −i Σ_{μ≠ν} g_μν [σ†_μ σ_ν, ρ].
pub fn exchange_superoperator(layout: &HilbertLayout, couplings: &CouplingMatrices) -> Result<Superoperator> {
    let n = layout.n_atoms();
    if couplings.len() != n {
        return Err(Error::DimensionMismatch { expected: n, found: couplings.len() });
    }
    let sigmas = (0..n).map(|a| sigma_lower(layout, a)).collect::<Result<Vec<_>>>()?;
    let mut h = SparseMatrix::zeros(layout.dim());
    for mu in 0..n {
        for nu in (0..n).filter(|&nu| nu != mu) {
            h = h.add(&sigmas[mu].adjoint().mul(&sigmas[nu])?.scale(real(couplings.shift(mu, nu))))?;
        }
    }
    let d = layout.dim();
    Superoperator::from_matrix(SparseMatrix::from_triplets(d * d, commutator_terms(&h)), layout.clone())
}

/// L(ρ) = −i[H, ρ] + Σ_μ Γ 𝓛_μμ[ρ] + Σ_{μ≠ν} γ_μν 𝓛_μν[ρ].
pub fn build_liouvillian(
    layout: &HilbertLayout,
    params: &ModelParams,
    couplings: &CouplingMatrices,
) -> Result<Superoperator> {
    let h = build_hamiltonian(layout, params, couplings)?;
    let n = layout.n_atoms();
    let sigmas = (0..n).map(|a| sigma_lower(layout, a)).collect::<Result<Vec<_>>>()?;

    let mut entries = commutator_terms(&h);
    for mu in 0..n {
        for nu in 0..n {
            let rate = if mu == nu { params.gamma } else { couplings.decay(mu, nu) };
            if rate != 0.0 {
                entries.extend(lindblad_terms(&sigmas[mu], &sigmas[nu], rate)?);
            }
        }
    }
    let d = layout.dim();
    let mut superop = Superoperator::from_matrix(SparseMatrix::from_triplets(d * d, entries), layout.clone())?;
    superop.symmetries = atom_symmetries(layout, params, couplings);
    Ok(superop)
}

/// Permutations of atoms without phonon modes that preserve every coupling
/// and drive strength. Phonon-carrying atoms stay fixed.
fn atom_symmetries(layout: &HilbertLayout, params: &ModelParams, couplings: &CouplingMatrices) -> Vec<Vec<usize>> {
    const MAX_PERMUTED: usize = 8;
    let n = layout.n_atoms();
    let movable: Vec<usize> = (0..n).filter(|&a| !layout.has_phonon(a)).collect();
    let identity: Vec<usize> = (0..n).collect();
    if movable.len() < 2 || movable.len() > MAX_PERMUTED {
        return vec![identity];
    }
    let tol = 1e-12 * params.gamma;
    let preserves = |perm: &[usize]| {
        (0..n).all(|mu| {
            params.eta_omega[mu] == params.eta_omega[perm[mu]]
                && (0..n).all(|nu| {
                    (couplings.shift(mu, nu) - couplings.shift(perm[mu], perm[nu])).abs() <= tol
                        && (couplings.decay(mu, nu) - couplings.decay(perm[mu], perm[nu])).abs() <= tol
                })
        })
    };
    let mut out = Vec::new();
    let mut images = movable.clone();
    permutations(&mut images, 0, &mut |img| {
        let mut perm = identity.clone();
        for (&from, &to) in movable.iter().zip(img) {
            perm[from] = to;
        }
        if preserves(&perm) {
            out.push(perm);
        }
    });
    out
}

fn permutations(items: &mut Vec<usize>, k: usize, visit: &mut impl FnMut(&[usize])) {
    if k == items.len() {
        visit(items);
        return;
    }
    for i in k..items.len() {
        items.swap(k, i);
        permutations(items, k + 1, visit);
        items.swap(k, i);
    }
}

/// Dense row-major density matrix |i⟩⟨i| for basis state `i`.
pub fn basis_projector(d: usize, i: usize) -> Vec<C64> {
    let mut rho = vec![C64::new(0.0, 0.0); d * d];
    rho[i * d + i] = ONE;
    rho
}
