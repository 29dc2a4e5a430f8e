//! Truncated spin ⊗ phonon Hilbert space and sparse operators on it.
//!
//! Basis ordering: one two-level factor per atom in atom order, followed by one
//! Fock factor (|0⟩ … |n_c⟩) per phonon-carrying atom in the order given by
//! the layout. Within a spin factor |g⟩ is index 0 and |e⟩ index 1. The first
//! factor is the most significant digit of the flat basis index.

use std::collections::BTreeMap;

use num_complex::Complex64;

use crate::error::{Error, Result};

pub type C64 = Complex64;

pub const ZERO: C64 = C64::new(0.0, 0.0);
pub const ONE: C64 = C64::new(1.0, 0.0);
pub const I: C64 = C64::new(0.0, 1.0);

/// Square complex matrix in compressed sparse row form.
#[derive(Debug, Clone, PartialEq)]
pub struct SparseMatrix {
    dim: usize,
    row_ptr: Vec<usize>,
    cols: Vec<usize>,
    vals: Vec<C64>,
}

impl SparseMatrix {
    pub fn zeros(dim: usize) -> Self {
        Self { dim, row_ptr: vec![0; dim + 1], cols: Vec::new(), vals: Vec::new() }
    }

    pub fn identity(dim: usize) -> Self {
        Self::diagonal(&vec![ONE; dim])
    }

    pub fn diagonal(diag: &[C64]) -> Self {
        Self::from_triplets(diag.len(), diag.iter().enumerate().map(|(i, &v)| (i, i, v)))
    }

    /// Builds from (row, col, value) entries; duplicates are summed and exact
    /// zeros dropped.
    pub fn from_triplets(dim: usize, entries: impl IntoIterator<Item = (usize, usize, C64)>) -> Self {
        let mut rows: Vec<BTreeMap<usize, C64>> = vec![BTreeMap::new(); dim];
        for (r, c, v) in entries {
            assert!(r < dim && c < dim, "entry ({r}, {c}) outside {dim}×{dim}");
            *rows[r].entry(c).or_insert(ZERO) += v;
        }
        let mut out = Self::zeros(dim);
        for (r, row) in rows.into_iter().enumerate() {
            for (c, v) in row {
                if v != ZERO {
                    out.cols.push(c);
                    out.vals.push(v);
                }
            }
            out.row_ptr[r + 1] = out.cols.len();
        }
        out
    }

    pub fn from_dense(dim: usize, entries: &[C64]) -> Self {
        assert_eq!(entries.len(), dim * dim);
        Self::from_triplets(dim, (0..dim * dim).map(|k| (k / dim, k % dim, entries[k])))
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn nnz(&self) -> usize {
        self.vals.len()
    }

    pub fn row(&self, r: usize) -> impl Iterator<Item = (usize, C64)> + '_ {
        let span = self.row_ptr[r]..self.row_ptr[r + 1];
        self.cols[span.clone()].iter().copied().zip(self.vals[span].iter().copied())
    }

    pub fn triplets(&self) -> impl Iterator<Item = (usize, usize, C64)> + '_ {
        (0..self.dim).flat_map(move |r| self.row(r).map(move |(c, v)| (r, c, v)))
    }

    pub fn get(&self, r: usize, c: usize) -> C64 {
        let span = self.row_ptr[r]..self.row_ptr[r + 1];
        match self.cols[span.clone()].binary_search(&c) {
            Ok(k) => self.vals[span.start + k],
            Err(_) => ZERO,
        }
    }

    /// Row-major dense copy.
    pub fn to_dense(&self) -> Vec<C64> {
        let mut out = vec![ZERO; self.dim * self.dim];
        for (r, c, v) in self.triplets() {
            out[r * self.dim + c] = v;
        }
        out
    }

    pub fn adjoint(&self) -> Self {
        Self::from_triplets(self.dim, self.triplets().map(|(r, c, v)| (c, r, v.conj())))
    }

    pub fn transpose(&self) -> Self {
        Self::from_triplets(self.dim, self.triplets().map(|(r, c, v)| (c, r, v)))
    }

    pub fn conj(&self) -> Self {
        let mut out = self.clone();
        out.vals.iter_mut().for_each(|v| *v = v.conj());
        out
    }

    pub fn scale(&self, factor: C64) -> Self {
        Self::from_triplets(self.dim, self.triplets().map(|(r, c, v)| (r, c, v * factor)))
    }

    fn check_dim(&self, other: &Self) -> Result<()> {
        if self.dim == other.dim {
            Ok(())
        } else {
            Err(Error::DimensionMismatch { expected: self.dim, found: other.dim })
        }
    }

    pub fn add(&self, other: &Self) -> Result<Self> {
        self.check_dim(other)?;
        Ok(Self::from_triplets(self.dim, self.triplets().chain(other.triplets())))
    }

    pub fn sub(&self, other: &Self) -> Result<Self> {
        self.check_dim(other)?;
        Ok(Self::from_triplets(
            self.dim,
            self.triplets().chain(other.triplets().map(|(r, c, v)| (r, c, -v))),
        ))
    }

    pub fn mul(&self, other: &Self) -> Result<Self> {
        self.check_dim(other)?;
        let mut entries = Vec::new();
        for r in 0..self.dim {
            for (k, a) in self.row(r) {
                for (c, b) in other.row(k) {
                    entries.push((r, c, a * b));
                }
            }
        }
        Ok(Self::from_triplets(self.dim, entries))
    }

    pub fn mul_vec(&self, x: &[C64]) -> Result<Vec<C64>> {
        if x.len() != self.dim {
            return Err(Error::DimensionMismatch { expected: self.dim, found: x.len() });
        }
        Ok((0..self.dim).map(|r| self.row(r).map(|(c, v)| v * x[c]).sum()).collect())
    }

    /// Kronecker product A ⊗ B with A the more significant factor.
    pub fn kron(&self, other: &Self) -> Self {
        let d = self.dim * other.dim;
        let entries = self.triplets().flat_map(|(r1, c1, a)| {
            other
                .triplets()
                .map(move |(r2, c2, b)| (r1 * other.dim + r2, c1 * other.dim + c2, a * b))
        });
        Self::from_triplets(d, entries.collect::<Vec<_>>())
    }

    /// Frobenius norm.
    pub fn norm(&self) -> f64 {
        self.vals.iter().map(|v| v.norm_sqr()).sum::<f64>().sqrt()
    }

    /// Largest entrywise modulus of `self − other`.
    pub fn max_abs_diff(&self, other: &Self) -> Result<f64> {
        Ok(self.sub(other)?.vals.iter().map(|v| v.norm()).fold(0.0, f64::max))
    }

    pub fn is_hermitian(&self, tol: f64) -> bool {
        self.max_abs_diff(&self.adjoint()).is_ok_and(|d| d <= tol)
    }
}

/// Tensor layout of N two-level atoms plus phonon modes on a subset of them.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct HilbertLayout {
    n_atoms: usize,
    phonon_atoms: Vec<usize>,
    n_cut: usize,
}

impl HilbertLayout {
    pub fn new(n_atoms: usize, phonon_atoms: Vec<usize>, n_cut: usize) -> Result<Self> {
        if n_atoms == 0 {
            return Err(Error::InvalidParameter("layout needs at least one atom".into()));
        }
        if n_cut == 0 && !phonon_atoms.is_empty() {
            return Err(Error::InvalidParameter("phonon cutoff must be at least 1".into()));
        }
        for (k, &a) in phonon_atoms.iter().enumerate() {
            if a >= n_atoms {
                return Err(Error::AtomIndex { index: a, n_atoms });
            }
            if phonon_atoms[..k].contains(&a) {
                return Err(Error::InvalidParameter(format!("atom {a} listed twice as phonon-carrying")));
            }
        }
        let layout = Self { n_atoms, phonon_atoms, n_cut };
        // 2^N (n_c+1)^|P| must stay addressable; the solvers give up long before.
        if layout.checked_dim().is_none() {
            return Err(Error::InvalidParameter("Hilbert space dimension overflows".into()));
        }
        Ok(layout)
    }

    /// Only the target atom carries a phonon mode.
    pub fn reduced(n_atoms: usize, target: usize, n_cut: usize) -> Result<Self> {
        Self::new(n_atoms, vec![target], n_cut)
    }

    /// Every atom carries a phonon mode.
    pub fn full(n_atoms: usize, n_cut: usize) -> Result<Self> {
        Self::new(n_atoms, (0..n_atoms).collect(), n_cut)
    }

    /// Spins only, no motional factors.
    pub fn spins_only(n_atoms: usize) -> Result<Self> {
        Self::new(n_atoms, Vec::new(), 1)
    }

    fn checked_dim(&self) -> Option<usize> {
        let spins = 1usize.checked_shl(self.n_atoms as u32).filter(|_| self.n_atoms < usize::BITS as usize)?;
        let fock = (self.n_cut + 1).checked_pow(self.phonon_atoms.len() as u32)?;
        spins.checked_mul(fock)
    }

    pub fn n_atoms(&self) -> usize {
        self.n_atoms
    }

    pub fn phonon_atoms(&self) -> &[usize] {
        &self.phonon_atoms
    }

    pub fn n_cut(&self) -> usize {
        self.n_cut
    }

    /// The atom whose motion is reported: the first phonon-carrying atom.
    pub fn target(&self) -> Option<usize> {
        self.phonon_atoms.first().copied()
    }

    pub fn has_phonon(&self, atom: usize) -> bool {
        self.phonon_atoms.contains(&atom)
    }

    pub fn dim(&self) -> usize {
        self.checked_dim().expect("validated at construction")
    }

    /// Dimensions of the tensor factors in basis order.
    pub fn factor_dims(&self) -> Vec<usize> {
        std::iter::repeat_n(2, self.n_atoms)
            .chain(std::iter::repeat_n(self.n_cut + 1, self.phonon_atoms.len()))
            .collect()
    }

    /// Digits of a flat basis index, one per tensor factor.
    pub fn decompose(&self, index: usize) -> Vec<usize> {
        let dims = self.factor_dims();
        let mut digits = vec![0; dims.len()];
        let mut rest = index;
        for (k, d) in dims.iter().enumerate().rev() {
            digits[k] = rest % d;
            rest /= d;
        }
        digits
    }

    pub fn compose(&self, digits: &[usize]) -> usize {
        self.factor_dims().iter().zip(digits).fold(0, |acc, (d, x)| acc * d + x)
    }

    fn phonon_factor(&self, atom: usize) -> Result<usize> {
        self.check_atom(atom)?;
        self.phonon_atoms
            .iter()
            .position(|&a| a == atom)
            .map(|p| self.n_atoms + p)
            .ok_or(Error::NoPhononMode(atom))
    }

    fn check_atom(&self, atom: usize) -> Result<()> {
        if atom < self.n_atoms {
            Ok(())
        } else {
            Err(Error::AtomIndex { index: atom, n_atoms: self.n_atoms })
        }
    }

    /// Places `local` on tensor factor `factor`, identity elsewhere.
    pub fn embed(&self, factor: usize, local: &SparseMatrix) -> Result<SparseMatrix> {
        let dims = self.factor_dims();
        if factor >= dims.len() {
            return Err(Error::DimensionMismatch { expected: dims.len(), found: factor });
        }
        if local.dim() != dims[factor] {
            return Err(Error::DimensionMismatch { expected: dims[factor], found: local.dim() });
        }
        let before: usize = dims[..factor].iter().product();
        let after: usize = dims[factor + 1..].iter().product();
        Ok(SparseMatrix::identity(before).kron(local).kron(&SparseMatrix::identity(after)))
    }

    pub fn identity(&self) -> SparseMatrix {
        SparseMatrix::identity(self.dim())
    }
}

/// |g⟩⟨e| on a single spin factor.
pub fn local_lowering() -> SparseMatrix {
    SparseMatrix::from_triplets(2, [(0, 1, ONE)])
}

/// Truncated ladder operator a|n⟩ = √n |n−1⟩ on |0⟩ … |n_cut⟩.
pub fn local_annihilation(n_cut: usize) -> SparseMatrix {
    SparseMatrix::from_triplets(n_cut + 1, (1..=n_cut).map(|n| (n - 1, n, C64::new((n as f64).sqrt(), 0.0))))
}

pub fn sigma_lower(layout: &HilbertLayout, atom: usize) -> Result<SparseMatrix> {
    layout.check_atom(atom)?;
    layout.embed(atom, &local_lowering())
}

pub fn phonon_annihilation(layout: &HilbertLayout, atom: usize) -> Result<SparseMatrix> {
    let factor = layout.phonon_factor(atom)?;
    layout.embed(factor, &local_annihilation(layout.n_cut()))
}

/// a†a on the given atom's phonon factor.
pub fn phonon_number(layout: &HilbertLayout, atom: usize) -> Result<SparseMatrix> {
    let factor = layout.phonon_factor(atom)?;
    let n = layout.n_cut();
    layout.embed(factor, &SparseMatrix::diagonal(&(0..=n).map(|k| C64::new(k as f64, 0.0)).collect::<Vec<_>>()))
}

/// (−1)^(spin excitations + phonon quanta) for every basis state.
pub fn parity(layout: &HilbertLayout) -> Vec<bool> {
    (0..layout.dim()).map(|i| layout.decompose(i).iter().sum::<usize>() % 2 == 1).collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    fn commutator(a: &SparseMatrix, b: &SparseMatrix) -> SparseMatrix {
        a.mul(b).unwrap().sub(&b.mul(a).unwrap()).unwrap()
    }

    #[test]
    fn single_spin_lowering() {
        let layout = HilbertLayout::spins_only(1).unwrap();
        let s = sigma_lower(&layout, 0).unwrap();
        assert_eq!(s.to_dense(), vec![ZERO, ONE, ZERO, ZERO]);
    }

    #[test]
    fn lowering_algebra() {
        let layout = HilbertLayout::reduced(2, 0, 2).unwrap();
        let id = layout.identity();
        for atom in 0..2 {
            let s = sigma_lower(&layout, atom).unwrap();
            assert_eq!(s.mul(&s).unwrap().nnz(), 0);
            let anti = s.mul(&s.adjoint()).unwrap().add(&s.adjoint().mul(&s).unwrap()).unwrap();
            assert_eq!(anti, id);
        }
        let s0 = sigma_lower(&layout, 0).unwrap();
        let s1 = sigma_lower(&layout, 1).unwrap();
        assert_eq!(commutator(&s0, &s1).nnz(), 0);
        assert_eq!(commutator(&s0, &s1.adjoint()).nnz(), 0);
        assert!(sigma_lower(&layout, 2).is_err());
    }

    #[test]
    fn ladder_operator() {
        assert_eq!(local_annihilation(1).to_dense(), vec![ZERO, ONE, ZERO, ZERO]);
        for n_cut in 1..=4 {
            let layout = HilbertLayout::reduced(1, 0, n_cut).unwrap();
            let a = phonon_annihilation(&layout, 0).unwrap();
            let comm = commutator(&a, &a.adjoint());
            // [a, a†] = 1 − (n_c + 1)|n_c⟩⟨n_c| on the phonon factor.
            let mut diag = vec![ONE; n_cut + 1];
            diag[n_cut] = C64::new(-(n_cut as f64), 0.0);
            let expected = layout.embed(1, &SparseMatrix::diagonal(&diag)).unwrap();
            assert!(comm.max_abs_diff(&expected).unwrap() < 1e-14);

            let number = a.adjoint().mul(&a).unwrap();
            assert!(number.max_abs_diff(&phonon_number(&layout, 0).unwrap()).unwrap() < 1e-14);
            for i in 0..layout.dim() {
                let label = layout.decompose(i)[1] as f64;
                assert!((number.get(i, i).re - label).abs() < 1e-14);
            }
        }
    }

    #[test]
    fn phonon_operator_needs_phonon_mode() {
        let layout = HilbertLayout::reduced(3, 0, 1).unwrap();
        assert!(matches!(phonon_annihilation(&layout, 1), Err(Error::NoPhononMode(1))));
        assert!(matches!(phonon_annihilation(&layout, 5), Err(Error::AtomIndex { .. })));
    }

    #[test]
    fn distinct_atoms_commute_in_full_layout() {
        let layout = HilbertLayout::full(2, 1).unwrap();
        let ops: Vec<SparseMatrix> = (0..2)
            .flat_map(|a| [sigma_lower(&layout, a).unwrap(), phonon_annihilation(&layout, a).unwrap()])
            .collect();
        for (i, a) in ops.iter().enumerate() {
            for (j, b) in ops.iter().enumerate() {
                if i / 2 != j / 2 {
                    assert_eq!(commutator(a, b).nnz(), 0);
                    assert_eq!(commutator(a, &b.adjoint()).nnz(), 0);
                }
            }
        }
    }

    #[test]
    fn dimensions() {
        assert_eq!(HilbertLayout::reduced(5, 0, 1).unwrap().dim(), 64);
        assert_eq!(HilbertLayout::full(2, 2).unwrap().dim(), 36);
        assert_eq!(HilbertLayout::reduced(1, 0, 1).unwrap().factor_dims(), vec![2, 2]);
        assert!(HilbertLayout::new(2, vec![0, 0], 1).is_err());
        assert!(HilbertLayout::new(2, vec![3], 1).is_err());
        assert!(HilbertLayout::new(2, vec![0], 0).is_err());
    }

    #[test]
    fn basis_ordering() {
        let layout = HilbertLayout::reduced(2, 0, 1).unwrap();
        // |e, g, n=1⟩ = 1·4 + 0·2 + 1
        assert_eq!(layout.compose(&[1, 0, 1]), 5);
        assert_eq!(layout.decompose(5), vec![1, 0, 1]);
    }

    #[test]
    fn dimension_mismatch() {
        let a = SparseMatrix::identity(2);
        let b = SparseMatrix::identity(3);
        assert!(matches!(a.mul(&b), Err(Error::DimensionMismatch { .. })));
        assert!(a.add(&b).is_err());
        assert!(a.mul_vec(&[ONE]).is_err());
    }
}
