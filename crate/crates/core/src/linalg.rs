//! Dense complex linear algebra for small qubit registers.
//!
//! Register convention: qubit 0 is the leftmost tensor factor, i.e. the most
//! significant bit of a basis index. For an `n`-qubit register, qubit `q`
//! occupies bit `n - 1 - q` of the index. Every module in the crate relies on
//! this; `embed` and `partial_trace` are the only places that translate
//! between qubit labels and bit positions.

use std::fmt;
use std::ops::{Add, Index, Mul, Sub};

use nalgebra::DMatrix;
use num_complex::Complex64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};

/// Tolerance for unitarity, hermiticity, normalisation and trace checks.
pub const STRUCT_TOL: f64 = 1e-12;
/// Slack allowed on density-operator eigenvalues below zero.
pub const POSITIVITY_TOL: f64 = 1e-10;
/// Largest dimension `kron` will produce.
pub const MAX_DIM: usize = 1 << 20;

pub type C64 = Complex64;

pub const ZERO: C64 = C64 { re: 0.0, im: 0.0 };
pub const ONE: C64 = C64 { re: 1.0, im: 0.0 };
pub const I: C64 = C64 { re: 0.0, im: 1.0 };

/// Row-major dense complex matrix.
#[derive(Clone, PartialEq)]
pub struct ComplexMatrix {
    rows: usize,
    cols: usize,
    data: Vec<C64>,
}

impl ComplexMatrix {
    pub fn new(rows: usize, cols: usize, data: Vec<C64>) -> Result<Self> {
        if rows == 0 || cols == 0 || rows * cols != data.len() {
            return Err(Error::Shape { rows, cols, entries: data.len() });
        }
        if data.iter().any(|z| !z.re.is_finite() || !z.im.is_finite()) {
            return Err(Error::NonFinite);
        }
        Ok(Self { rows, cols, data })
    }

    /// Build from real entries, row-major.
    pub fn from_real(rows: usize, cols: usize, data: &[f64]) -> Result<Self> {
        Self::new(rows, cols, data.iter().map(|&x| C64::new(x, 0.0)).collect())
    }

    pub fn from_fn(rows: usize, cols: usize, mut f: impl FnMut(usize, usize) -> C64) -> Self {
        let mut data = Vec::with_capacity(rows * cols);
        for i in 0..rows {
            for j in 0..cols {
                data.push(f(i, j));
            }
        }
        Self { rows, cols, data }
    }

    pub fn zeros(rows: usize, cols: usize) -> Self {
        Self { rows, cols, data: vec![ZERO; rows * cols] }
    }

    pub fn identity(dim: usize) -> Self {
        Self::from_fn(dim, dim, |i, j| if i == j { ONE } else { ZERO })
    }

    pub fn diagonal(entries: &[C64]) -> Self {
        let n = entries.len();
        Self::from_fn(n, n, |i, j| if i == j { entries[i] } else { ZERO })
    }

    /// `|v><w|`.
    pub fn outer(v: &[C64], w: &[C64]) -> Self {
        Self::from_fn(v.len(), w.len(), |i, j| v[i] * w[j].conj())
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn is_square(&self) -> bool {
        self.rows == self.cols
    }

    pub fn entries(&self) -> &[C64] {
        &self.data
    }

    pub fn adjoint(&self) -> Self {
        Self::from_fn(self.cols, self.rows, |i, j| self[(j, i)].conj())
    }

    pub fn scale(&self, s: C64) -> Self {
        Self { rows: self.rows, cols: self.cols, data: self.data.iter().map(|z| z * s).collect() }
    }

    pub fn trace(&self) -> C64 {
        (0..self.rows.min(self.cols)).map(|i| self[(i, i)]).sum()
    }

    pub fn matmul(&self, rhs: &Self) -> Result<Self> {
        if self.cols != rhs.rows {
            return Err(Error::DimMismatch { expected: self.cols, found: rhs.rows });
        }
        let mut out = Self::zeros(self.rows, rhs.cols);
        for i in 0..self.rows {
            for k in 0..self.cols {
                let a = self[(i, k)];
                if a == ZERO {
                    continue;
                }
                let row = &rhs.data[k * rhs.cols..(k + 1) * rhs.cols];
                let dst = &mut out.data[i * rhs.cols..(i + 1) * rhs.cols];
                for (d, b) in dst.iter_mut().zip(row) {
                    *d += a * b;
                }
            }
        }
        Ok(out)
    }

    pub fn matvec(&self, v: &[C64]) -> Result<Vec<C64>> {
        if self.cols != v.len() {
            return Err(Error::DimMismatch { expected: self.cols, found: v.len() });
        }
        Ok((0..self.rows)
            .map(|i| self.data[i * self.cols..(i + 1) * self.cols].iter().zip(v).map(|(a, b)| a * b).sum())
            .collect())
    }

    /// Largest entrywise modulus of `self - other`; infinite on shape mismatch.
    pub fn max_abs_diff(&self, other: &Self) -> f64 {
        if self.rows != other.rows || self.cols != other.cols {
            return f64::INFINITY;
        }
        self.data.iter().zip(&other.data).map(|(a, b)| (a - b).norm()).fold(0.0, f64::max)
    }

    /// `max |U^dag U - I|`.
    pub fn unitarity_deviation(&self) -> f64 {
        if !self.is_square() {
            return f64::INFINITY;
        }
        let prod = self.adjoint().matmul(self).expect("square");
        prod.max_abs_diff(&Self::identity(self.rows))
    }

    /// `max |A - A^dag|`.
    pub fn hermiticity_deviation(&self) -> f64 {
        if !self.is_square() {
            return f64::INFINITY;
        }
        self.max_abs_diff(&self.adjoint())
    }

    pub fn is_unitary(&self) -> bool {
        self.unitarity_deviation() <= STRUCT_TOL
    }

    pub fn is_hermitian(&self) -> bool {
        self.hermiticity_deviation() <= STRUCT_TOL
    }

    pub fn ensure_unitary(&self) -> Result<()> {
        let deviation = self.unitarity_deviation();
        if deviation > STRUCT_TOL {
            return Err(Error::NonUnitary { deviation });
        }
        Ok(())
    }

    pub fn ensure_hermitian(&self) -> Result<()> {
        let deviation = self.hermiticity_deviation();
        if deviation > STRUCT_TOL {
            return Err(Error::NonHermitian { deviation });
        }
        Ok(())
    }

    /// Eigenvalues of a Hermitian matrix, ascending.
    pub fn eigenvalues_hermitian(&self) -> Result<Vec<f64>> {
        self.ensure_hermitian()?;
        let m = DMatrix::from_fn(self.rows, self.cols, |i, j| self[(i, j)]);
        let mut ev: Vec<f64> = m.symmetric_eigenvalues().iter().copied().collect();
        ev.sort_by(f64::total_cmp);
        Ok(ev)
    }

    /// Permutation matrix check: every row and column has exactly one entry equal to 1.
    pub fn is_permutation(&self) -> bool {
        if !self.is_square() {
            return false;
        }
        let n = self.rows;
        let is_one = |z: C64| (z - ONE).norm() <= STRUCT_TOL;
        let is_zero = |z: C64| z.norm() <= STRUCT_TOL;
        if !self.data.iter().all(|&z| is_one(z) || is_zero(z)) {
            return false;
        }
        (0..n).all(|i| (0..n).filter(|&j| is_one(self[(i, j)])).count() == 1)
            && (0..n).all(|j| (0..n).filter(|&i| is_one(self[(i, j)])).count() == 1)
    }
}

impl Index<(usize, usize)> for ComplexMatrix {
    type Output = C64;

    fn index(&self, (i, j): (usize, usize)) -> &C64 {
        &self.data[i * self.cols + j]
    }
}

impl Add for &ComplexMatrix {
    type Output = ComplexMatrix;

    fn add(self, rhs: &ComplexMatrix) -> ComplexMatrix {
        assert_eq!((self.rows, self.cols), (rhs.rows, rhs.cols), "shape mismatch in add");
        ComplexMatrix {
            rows: self.rows,
            cols: self.cols,
            data: self.data.iter().zip(&rhs.data).map(|(a, b)| a + b).collect(),
        }
    }
}

impl Sub for &ComplexMatrix {
    type Output = ComplexMatrix;

    fn sub(self, rhs: &ComplexMatrix) -> ComplexMatrix {
        assert_eq!((self.rows, self.cols), (rhs.rows, rhs.cols), "shape mismatch in sub");
        ComplexMatrix {
            rows: self.rows,
            cols: self.cols,
            data: self.data.iter().zip(&rhs.data).map(|(a, b)| a - b).collect(),
        }
    }
}

impl Mul for &ComplexMatrix {
    type Output = ComplexMatrix;

    fn mul(self, rhs: &ComplexMatrix) -> ComplexMatrix {
        self.matmul(rhs).expect("shape mismatch in mul")
    }
}

impl fmt::Debug for ComplexMatrix {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        writeln!(f, "ComplexMatrix {}x{} [", self.rows, self.cols)?;
        for i in 0..self.rows {
            write!(f, " ")?;
            for j in 0..self.cols {
                let z = self[(i, j)];
                write!(f, " {:+.4}{:+.4}i", z.re, z.im)?;
            }
            writeln!(f)?;
        }
        write!(f, "]")
    }
}

/// Kronecker product `a ⊗ b`.
pub fn kron(a: &ComplexMatrix, b: &ComplexMatrix) -> Result<ComplexMatrix> {
    let rows = a.rows.checked_mul(b.rows).ok_or(Error::DimTooLarge(usize::MAX))?;
    let cols = a.cols.checked_mul(b.cols).ok_or(Error::DimTooLarge(usize::MAX))?;
    if rows > MAX_DIM || cols > MAX_DIM {
        return Err(Error::DimTooLarge(rows.max(cols)));
    }
    let mut out = ComplexMatrix::zeros(rows, cols);
    for ia in 0..a.rows {
        for ja in 0..a.cols {
            let s = a[(ia, ja)];
            if s == ZERO {
                continue;
            }
            for ib in 0..b.rows {
                let dst = (ia * b.rows + ib) * cols + ja * b.cols;
                for jb in 0..b.cols {
                    out.data[dst + jb] = s * b[(ib, jb)];
                }
            }
        }
    }
    Ok(out)
}

/// Kronecker product of a sequence of matrices, left to right.
pub fn kron_all<'a>(factors: impl IntoIterator<Item = &'a ComplexMatrix>) -> Result<ComplexMatrix> {
    let mut iter = factors.into_iter();
    let first = iter.next().ok_or(Error::Shape { rows: 0, cols: 0, entries: 0 })?.clone();
    iter.try_fold(first, |acc, m| kron(&acc, m))
}

fn qubit_count(dim: usize) -> Result<usize> {
    if dim == 0 || !dim.is_power_of_two() {
        return Err(Error::NotPowerOfTwo(dim));
    }
    Ok(dim.trailing_zeros() as usize)
}

/// Lift `u`, acting on the register qubits `acts_on` (first listed = most
/// significant factor of `u`), to the full `n_qubits` register.
pub fn embed(u: &ComplexMatrix, acts_on: &[usize], n_qubits: usize) -> Result<ComplexMatrix> {
    let k = acts_on.len();
    if !u.is_square() || u.rows != 1 << k {
        return Err(Error::DimMismatch { expected: 1 << k, found: u.rows });
    }
    for (pos, &q) in acts_on.iter().enumerate() {
        if q >= n_qubits || acts_on[..pos].contains(&q) {
            return Err(Error::BadIndex { index: q, qubits: n_qubits });
        }
    }
    let dim = 1usize << n_qubits;
    if dim > MAX_DIM {
        return Err(Error::DimTooLarge(dim));
    }
    let mask: usize = acts_on.iter().map(|&q| 1 << (n_qubits - 1 - q)).sum();
    let local = |full: usize| -> usize {
        acts_on.iter().fold(0, |acc, &q| (acc << 1) | ((full >> (n_qubits - 1 - q)) & 1))
    };
    Ok(ComplexMatrix::from_fn(dim, dim, |i, j| {
        if i & !mask != j & !mask {
            ZERO
        } else {
            u[(local(i), local(j))]
        }
    }))
}

/// Normalised pure state of a qubit register.
#[derive(Clone, Debug, PartialEq)]
pub struct StateVector {
    amps: Vec<C64>,
}

impl StateVector {
    pub fn new(amps: Vec<C64>) -> Result<Self> {
        qubit_count(amps.len())?;
        if amps.iter().any(|z| !z.re.is_finite() || !z.im.is_finite()) {
            return Err(Error::NonFinite);
        }
        let norm2: f64 = amps.iter().map(|z| z.norm_sqr()).sum();
        if (norm2 - 1.0).abs() > STRUCT_TOL {
            return Err(Error::NotNormalised(norm2));
        }
        Ok(Self { amps })
    }

    /// Rescale arbitrary non-zero amplitudes to unit norm.
    pub fn normalized(amps: Vec<C64>) -> Result<Self> {
        let norm = amps.iter().map(|z| z.norm_sqr()).sum::<f64>().sqrt();
        if norm == 0.0 || !norm.is_finite() {
            return Err(Error::NotNormalised(norm * norm));
        }
        Self::new(amps.into_iter().map(|z| z / norm).collect())
    }

    pub fn from_real(amps: &[f64]) -> Result<Self> {
        Self::new(amps.iter().map(|&x| C64::new(x, 0.0)).collect())
    }

    pub fn basis(dim: usize, index: usize) -> Result<Self> {
        if index >= dim {
            return Err(Error::BadIndex { index, qubits: qubit_count(dim)? });
        }
        let mut amps = vec![ZERO; dim];
        amps[index] = ONE;
        Self::new(amps)
    }

    pub fn dim(&self) -> usize {
        self.amps.len()
    }

    pub fn num_qubits(&self) -> usize {
        self.amps.len().trailing_zeros() as usize
    }

    pub fn amplitudes(&self) -> &[C64] {
        &self.amps
    }

    pub fn norm_sqr(&self) -> f64 {
        self.amps.iter().map(|z| z.norm_sqr()).sum()
    }

    /// `<self|other>`.
    pub fn inner(&self, other: &Self) -> C64 {
        self.amps.iter().zip(&other.amps).map(|(a, b)| a.conj() * b).sum()
    }

    pub fn tensor(&self, other: &Self) -> Result<Self> {
        let dim = self.dim() * other.dim();
        if dim > MAX_DIM {
            return Err(Error::DimTooLarge(dim));
        }
        Ok(Self { amps: self.amps.iter().flat_map(|a| other.amps.iter().map(move |b| a * b)).collect() })
    }

    /// Equality up to a global phase, within `tol` on every amplitude.
    pub fn approx_eq_up_to_phase(&self, other: &Self, tol: f64) -> bool {
        if self.dim() != other.dim() {
            return false;
        }
        let overlap = self.inner(other);
        if overlap.norm() < 0.5 {
            return false;
        }
        let phase = overlap / overlap.norm();
        self.amps.iter().zip(&other.amps).all(|(a, b)| (a * phase - b).norm() <= tol)
    }

    pub fn to_density(&self) -> DensityOperator {
        DensityOperator { matrix: ComplexMatrix::outer(&self.amps, &self.amps) }
    }
}

/// Mixed state: Hermitian, unit trace, positive semidefinite.
#[derive(Clone, Debug, PartialEq)]
pub struct DensityOperator {
    matrix: ComplexMatrix,
}

impl DensityOperator {
    pub fn new(matrix: ComplexMatrix) -> Result<Self> {
        if !matrix.is_square() {
            return Err(Error::DimMismatch { expected: matrix.rows, found: matrix.cols });
        }
        qubit_count(matrix.rows)?;
        matrix.ensure_hermitian()?;
        let tr = matrix.trace();
        if (tr.re - 1.0).abs() > STRUCT_TOL || tr.im.abs() > STRUCT_TOL {
            return Err(Error::NotDensity(format!("trace {tr}")));
        }
        let min_ev = matrix.eigenvalues_hermitian()?[0];
        if min_ev < -POSITIVITY_TOL {
            return Err(Error::NotDensity(format!("negative eigenvalue {min_ev:e}")));
        }
        Ok(Self { matrix })
    }

    pub fn maximally_mixed(dim: usize) -> Result<Self> {
        qubit_count(dim)?;
        Ok(Self { matrix: ComplexMatrix::identity(dim).scale(C64::new(1.0 / dim as f64, 0.0)) })
    }

    pub fn matrix(&self) -> &ComplexMatrix {
        &self.matrix
    }

    pub fn dim(&self) -> usize {
        self.matrix.rows
    }

    pub fn num_qubits(&self) -> usize {
        self.matrix.rows.trailing_zeros() as usize
    }

    /// `Tr ρ²`.
    pub fn purity(&self) -> f64 {
        self.matrix.data.iter().map(|z| z.norm_sqr()).sum()
    }

    /// `<ψ|ρ|ψ>`.
    pub fn fidelity_with_pure(&self, psi: &StateVector) -> Result<f64> {
        let v = self.matrix.matvec(psi.amplitudes())?;
        Ok(psi.inner(&StateVector { amps: v }).re)
    }

    /// Convex combination `w·self + (1-w)·other`.
    pub fn mix(&self, other: &Self, w: f64) -> Result<Self> {
        if self.dim() != other.dim() {
            return Err(Error::DimMismatch { expected: self.dim(), found: other.dim() });
        }
        let m = &self.matrix.scale(C64::new(w, 0.0)) + &other.matrix.scale(C64::new(1.0 - w, 0.0));
        Self::new(m)
    }

    /// Diagonal in the computational basis, i.e. Born probabilities.
    pub fn probabilities(&self) -> Vec<f64> {
        (0..self.dim()).map(|i| self.matrix[(i, i)].re.max(0.0)).collect()
    }
}

/// States a unitary can act on.
pub trait Evolve: Sized {
    fn dim(&self) -> usize;
    fn evolve_unchecked(&self, u: &ComplexMatrix) -> Result<Self>;
}

impl Evolve for StateVector {
    fn dim(&self) -> usize {
        self.amps.len()
    }

    fn evolve_unchecked(&self, u: &ComplexMatrix) -> Result<Self> {
        Self::new(u.matvec(&self.amps)?)
    }
}

impl Evolve for DensityOperator {
    fn dim(&self) -> usize {
        self.matrix.rows
    }

    fn evolve_unchecked(&self, u: &ComplexMatrix) -> Result<Self> {
        let m = u.matmul(&self.matrix)?.matmul(&u.adjoint())?;
        Self::new(m)
    }
}

/// `ψ → Uψ` or `ρ → UρU†`.
pub fn apply<S: Evolve>(u: &ComplexMatrix, state: &S) -> Result<S> {
    if !u.is_square() || u.rows != state.dim() {
        return Err(Error::DimMismatch { expected: state.dim(), found: u.rows });
    }
    u.ensure_unitary()?;
    state.evolve_unchecked(u)
}

/// `Tr(obs · ρ)` for Hermitian `obs`.
pub fn expectation(obs: &ComplexMatrix, rho: &DensityOperator) -> Result<f64> {
    obs.ensure_hermitian()?;
    if obs.rows != rho.dim() {
        return Err(Error::DimMismatch { expected: rho.dim(), found: obs.rows });
    }
    let n = rho.dim();
    let mut acc = ZERO;
    for i in 0..n {
        for k in 0..n {
            acc += obs[(i, k)] * rho.matrix[(k, i)];
        }
    }
    debug_assert!(acc.im.abs() < 1e-10, "imaginary residue {}", acc.im);
    Ok(acc.re)
}

/// Reduced state on the qubits in `keep` (returned in ascending register order).
pub fn partial_trace(rho: &DensityOperator, keep: &[usize]) -> Result<DensityOperator> {
    let n = rho.num_qubits();
    let mut kept: Vec<usize> = keep.to_vec();
    kept.sort_unstable();
    for w in kept.windows(2) {
        if w[0] == w[1] {
            return Err(Error::BadIndex { index: w[0], qubits: n });
        }
    }
    if let Some(&bad) = kept.iter().find(|&&q| q >= n) {
        return Err(Error::BadIndex { index: bad, qubits: n });
    }
    let traced: Vec<usize> = (0..n).filter(|q| !kept.contains(q)).collect();
    let compose = |k_idx: usize, t_idx: usize| -> usize {
        let mut full = 0;
        for (pos, &q) in kept.iter().enumerate() {
            full |= ((k_idx >> (kept.len() - 1 - pos)) & 1) << (n - 1 - q);
        }
        for (pos, &q) in traced.iter().enumerate() {
            full |= ((t_idx >> (traced.len() - 1 - pos)) & 1) << (n - 1 - q);
        }
        full
    };
    let dk = 1 << kept.len();
    let dt = 1 << traced.len();
    let m = ComplexMatrix::from_fn(dk, dk, |i, j| {
        (0..dt).map(|t| rho.matrix[(compose(i, t), compose(j, t))]).sum()
    });
    DensityOperator::new(m)
}

/// `count` random density operators of dimension `dim`, reproducible from `seed`.
///
/// Each is `G·G†/Tr` for a `dim × r` matrix `G` with uniform complex entries in
/// the unit square and random rank `r`, so pure and mixed states both appear.
pub fn random_density_operators(seed: u64, count: usize, dim: usize) -> Result<Vec<DensityOperator>> {
    if dim == 0 || !dim.is_power_of_two() {
        return Err(Error::NotPowerOfTwo(dim));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..count)
        .map(|_| {
            let rank = rng.random_range(1..=dim);
            let g = ComplexMatrix::from_fn(dim, rank, |_, _| {
                C64::new(rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0))
            });
            let m = &g * &g.adjoint();
            let tr = m.trace().re;
            DensityOperator::new(m.scale(C64::new(1.0 / tr, 0.0)))
        })
        .collect()
}
