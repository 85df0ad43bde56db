//! Dense complex vectors and operators on multi-site tensor-product spaces.
//!
//! Basis ordering is row-major: site 0 is the most significant digit of a
//! flat index. Every index computation in the crate goes through
//! [`SiteDims`] so that convention lives in one place.

use std::ops::{Add, Mul, Sub};

use nalgebra::{DMatrix, DVector, SymmetricEigen};
use num_complex::Complex64;

use crate::error::{Error, Result};

pub type C64 = Complex64;
pub type Matrix = DMatrix<C64>;

/// Singular values below this are treated as zero by [`polar_unitary`].
pub const DEFAULT_ZERO_TOL: f64 = 1e-8;

pub(crate) const fn c(re: f64, im: f64) -> C64 {
    C64::new(re, im)
}

/// Per-site dimensions of a tensor-product space.
#[derive(Clone, Debug, PartialEq, Eq, Hash)]
pub struct SiteDims(Vec<usize>);

impl SiteDims {
    pub fn new(dims: Vec<usize>) -> Result<Self> {
        if let Some(pos) = dims.iter().position(|&d| d == 0) {
            return Err(Error::InvalidDims(format!("site {pos} has dimension 0")));
        }
        Ok(Self(dims))
    }

    pub fn qubits(n: usize) -> Self {
        Self(vec![2; n])
    }

    pub fn total(&self) -> usize {
        self.0.iter().product()
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn as_slice(&self) -> &[usize] {
        &self.0
    }

    pub fn concat(&self, other: &SiteDims) -> SiteDims {
        let mut dims = self.0.clone();
        dims.extend_from_slice(&other.0);
        SiteDims(dims)
    }

    /// Dimensions of the listed sites, in the listed order.
    pub fn select(&self, sites: &[usize]) -> Result<SiteDims> {
        self.check_sites(sites)?;
        Ok(SiteDims(sites.iter().map(|&s| self.0[s]).collect()))
    }

    pub fn strides(&self) -> Vec<usize> {
        let mut strides = vec![1; self.0.len()];
        for i in (0..self.0.len().saturating_sub(1)).rev() {
            strides[i] = strides[i + 1] * self.0[i + 1];
        }
        strides
    }

    /// Flat offsets of every basis state of the listed sites, enumerated in
    /// row-major order over `sites` (first listed site most significant),
    /// with all other sites at digit zero.
    pub fn offsets(&self, sites: &[usize]) -> Vec<usize> {
        let strides = self.strides();
        let mut offs = vec![0usize];
        for &s in sites {
            let mut next = Vec::with_capacity(offs.len() * self.0[s]);
            for &o in &offs {
                for d in 0..self.0[s] {
                    next.push(o + d * strides[s]);
                }
            }
            offs = next;
        }
        offs
    }

    /// Sites not in `sites`, ascending.
    pub fn complement(&self, sites: &[usize]) -> Vec<usize> {
        (0..self.0.len()).filter(|s| !sites.contains(s)).collect()
    }

    pub(crate) fn check_sites(&self, sites: &[usize]) -> Result<()> {
        for (i, &s) in sites.iter().enumerate() {
            if s >= self.0.len() {
                return Err(Error::SiteOutOfRange {
                    index: s,
                    sites: self.0.len(),
                });
            }
            if sites[..i].contains(&s) {
                return Err(Error::InvalidArgument(format!("site {s} listed twice")));
            }
        }
        Ok(())
    }

    fn check_permutation(&self, perm: &[usize]) -> Result<()> {
        if perm.len() != self.0.len() {
            return Err(Error::InvalidArgument(format!(
                "permutation of length {} for {} sites",
                perm.len(),
                self.0.len()
            )));
        }
        self.check_sites(perm)
    }
}

/// A pure state on a tensor-product space.
#[derive(Clone, Debug, PartialEq)]
pub struct StateVector {
    amps: DVector<C64>,
    dims: SiteDims,
}

impl StateVector {
    pub fn new(amps: Vec<C64>, dims: SiteDims) -> Result<Self> {
        Self::from_dvector(DVector::from_vec(amps), dims)
    }

    pub fn from_dvector(amps: DVector<C64>, dims: SiteDims) -> Result<Self> {
        if amps.len() != dims.total() {
            return Err(Error::DimensionMismatch(format!(
                "{} amplitudes for a space of dimension {}",
                amps.len(),
                dims.total()
            )));
        }
        Ok(Self { amps, dims })
    }

    /// Computational basis vector `|index⟩`.
    pub fn basis(dims: SiteDims, index: usize) -> Result<Self> {
        let total = dims.total();
        if index >= total {
            return Err(Error::InvalidArgument(format!(
                "basis index {index} outside dimension {total}"
            )));
        }
        let mut amps = DVector::zeros(total);
        amps[index] = c(1.0, 0.0);
        Ok(Self { amps, dims })
    }

    pub fn amplitudes(&self) -> &DVector<C64> {
        &self.amps
    }

    pub fn as_slice(&self) -> &[C64] {
        self.amps.as_slice()
    }

    pub fn dims(&self) -> &SiteDims {
        &self.dims
    }

    pub fn dim(&self) -> usize {
        self.amps.len()
    }

    pub fn norm(&self) -> f64 {
        self.amps.norm()
    }

    pub fn normalized(&self) -> Result<Self> {
        let norm = self.norm();
        if norm == 0.0 {
            return Err(Error::InvalidArgument("cannot normalize the zero vector".into()));
        }
        Ok(self.scale(c(1.0 / norm, 0.0)))
    }

    pub fn scale(&self, factor: C64) -> Self {
        Self {
            amps: &self.amps * factor,
            dims: self.dims.clone(),
        }
    }

    /// `⟨self|other⟩`.
    pub fn inner(&self, other: &StateVector) -> Result<C64> {
        if self.dim() != other.dim() {
            return Err(Error::DimensionMismatch(format!(
                "inner product of vectors of dimension {} and {}",
                self.dim(),
                other.dim()
            )));
        }
        Ok(self.amps.dotc(&other.amps))
    }

    pub fn conj(&self) -> Self {
        Self {
            amps: self.amps.map(|z| z.conj()),
            dims: self.dims.clone(),
        }
    }

    /// `|self⟩⟨self|`.
    pub fn projector(&self) -> Operator {
        Operator {
            mat: &self.amps * self.amps.adjoint(),
            dims: self.dims.clone(),
        }
    }

    pub fn expectation(&self, op: &Operator) -> Result<C64> {
        if op.dim() != self.dim() {
            return Err(Error::DimensionMismatch(format!(
                "operator of dimension {} on a vector of dimension {}",
                op.dim(),
                self.dim()
            )));
        }
        Ok(self.amps.dotc(&(&op.mat * &self.amps)))
    }

    pub fn max_abs_diff(&self, other: &StateVector) -> f64 {
        self.amps
            .iter()
            .zip(other.amps.iter())
            .map(|(a, b)| (a - b).norm())
            .fold(0.0, f64::max)
    }

    /// Reorder sites: site `i` of the result is site `perm[i]` of `self`.
    pub fn permute(&self, perm: &[usize]) -> Result<Self> {
        self.dims.check_permutation(perm)?;
        let offs = self.dims.offsets(perm);
        let amps = DVector::from_iterator(offs.len(), offs.iter().map(|&o| self.amps[o]));
        Ok(Self {
            amps,
            dims: self.dims.select(perm)?,
        })
    }

    /// Apply `op` to the listed sites (in the listed order).
    pub fn apply_local(&self, op: &Matrix, sites: &[usize]) -> Result<Self> {
        let mut out = self.clone();
        apply_local_in_place(out.amps.as_mut_slice(), &self.dims, op, sites)?;
        Ok(out)
    }

    /// Reduced density operator on `keep` (ascending site order).
    pub fn reduced_density(&self, keep: &[usize]) -> Result<Operator> {
        let keep = sorted_sites(&self.dims, keep)?;
        let traced = self.dims.complement(&keep);
        let off_k = self.dims.offsets(&keep);
        let off_t = self.dims.offsets(&traced);
        let m = DMatrix::from_fn(off_k.len(), off_t.len(), |i, t| self.amps[off_k[i] + off_t[t]]);
        Ok(Operator {
            mat: &m * m.adjoint(),
            dims: self.dims.select(&keep)?,
        })
    }
}

/// Apply `op` to `sites` of a flat amplitude buffer laid out per `dims`.
pub(crate) fn apply_local_in_place(
    amps: &mut [C64],
    dims: &SiteDims,
    op: &Matrix,
    sites: &[usize],
) -> Result<()> {
    dims.check_sites(sites)?;
    let inner = dims.offsets(sites);
    if op.nrows() != inner.len() || op.ncols() != inner.len() {
        return Err(Error::DimensionMismatch(format!(
            "{}x{} operator on sites of total dimension {}",
            op.nrows(),
            op.ncols(),
            inner.len()
        )));
    }
    let outer = dims.offsets(&dims.complement(sites));
    let k = inner.len();
    let mut gathered = vec![C64::default(); k];
    for &o in &outer {
        for (g, &i) in gathered.iter_mut().zip(&inner) {
            *g = amps[o + i];
        }
        for (row, &i) in inner.iter().enumerate() {
            let mut acc = C64::default();
            for (col, g) in gathered.iter().enumerate() {
                acc += op[(row, col)] * g;
            }
            amps[o + i] = acc;
        }
    }
    Ok(())
}

fn sorted_sites(dims: &SiteDims, sites: &[usize]) -> Result<Vec<usize>> {
    dims.check_sites(sites)?;
    let mut sorted = sites.to_vec();
    sorted.sort_unstable();
    Ok(sorted)
}

/// A linear operator on a tensor-product space (row and column spaces equal).
#[derive(Clone, Debug, PartialEq)]
pub struct Operator {
    mat: Matrix,
    dims: SiteDims,
}

impl Operator {
    pub fn new(mat: Matrix, dims: SiteDims) -> Result<Self> {
        if mat.nrows() != mat.ncols() {
            return Err(Error::DimensionMismatch(format!(
                "operator must be square, got {}x{}",
                mat.nrows(),
                mat.ncols()
            )));
        }
        if mat.nrows() != dims.total() {
            return Err(Error::DimensionMismatch(format!(
                "{}x{} matrix for a space of dimension {}",
                mat.nrows(),
                mat.ncols(),
                dims.total()
            )));
        }
        Ok(Self { mat, dims })
    }

    /// Operator on a single site of dimension `mat.nrows()`.
    pub fn single_site(mat: Matrix) -> Result<Self> {
        let d = mat.nrows();
        Self::new(mat, SiteDims::new(vec![d])?)
    }

    /// 2×2 operator from row-major entries.
    pub fn qubit(entries: [C64; 4]) -> Self {
        Self {
            mat: Matrix::from_row_slice(2, 2, &entries),
            dims: SiteDims::qubits(1),
        }
    }

    pub fn identity(dims: SiteDims) -> Self {
        let d = dims.total();
        Self {
            mat: Matrix::identity(d, d),
            dims,
        }
    }

    pub fn zeros(dims: SiteDims) -> Self {
        let d = dims.total();
        Self {
            mat: Matrix::zeros(d, d),
            dims,
        }
    }

    pub fn matrix(&self) -> &Matrix {
        &self.mat
    }

    pub fn into_matrix(self) -> Matrix {
        self.mat
    }

    pub fn dims(&self) -> &SiteDims {
        &self.dims
    }

    pub fn dim(&self) -> usize {
        self.mat.nrows()
    }

    /// Same matrix, reinterpreted over a different factorization of the
    /// same total dimension.
    pub fn with_dims(self, dims: SiteDims) -> Result<Self> {
        Self::new(self.mat, dims)
    }

    pub fn adjoint(&self) -> Self {
        Self {
            mat: self.mat.adjoint(),
            dims: self.dims.clone(),
        }
    }

    pub fn conj(&self) -> Self {
        Self {
            mat: self.mat.map(|z| z.conj()),
            dims: self.dims.clone(),
        }
    }

    pub fn transpose(&self) -> Self {
        Self {
            mat: self.mat.transpose(),
            dims: self.dims.clone(),
        }
    }

    pub fn scale(&self, factor: C64) -> Self {
        Self {
            mat: &self.mat * factor,
            dims: self.dims.clone(),
        }
    }

    pub fn scale_real(&self, factor: f64) -> Self {
        self.scale(c(factor, 0.0))
    }

    pub fn trace(&self) -> C64 {
        self.mat.trace()
    }

    pub fn apply(&self, v: &StateVector) -> Result<StateVector> {
        if v.dim() != self.dim() {
            return Err(Error::DimensionMismatch(format!(
                "operator of dimension {} on a vector of dimension {}",
                self.dim(),
                v.dim()
            )));
        }
        StateVector::from_dvector(&self.mat * &v.amps, v.dims.clone())
    }

    /// Largest entrywise modulus of `self - other`.
    pub fn max_abs_diff(&self, other: &Operator) -> f64 {
        if self.mat.shape() != other.mat.shape() {
            return f64::INFINITY;
        }
        self.mat
            .iter()
            .zip(other.mat.iter())
            .map(|(a, b)| (a - b).norm())
            .fold(0.0, f64::max)
    }

    pub fn max_abs(&self) -> f64 {
        self.mat.iter().map(|z| z.norm()).fold(0.0, f64::max)
    }

    pub fn hermiticity_deviation(&self) -> f64 {
        self.max_abs_diff(&self.adjoint())
    }

    pub fn is_hermitian(&self, tol: f64) -> bool {
        self.hermiticity_deviation() <= tol
    }

    /// `max |U†U - 1|` entrywise.
    pub fn unitarity_deviation(&self) -> f64 {
        let gram = self.mat.adjoint() * &self.mat;
        let d = self.dim();
        gram.max_abs_diff_identity(d)
    }

    pub fn is_unitary(&self, tol: f64) -> bool {
        self.unitarity_deviation() <= tol
    }

    pub fn hermitian_part(&self) -> Self {
        Self {
            mat: (&self.mat + self.mat.adjoint()) * c(0.5, 0.0),
            dims: self.dims.clone(),
        }
    }

    /// Reorder sites: site `i` of the result is site `perm[i]` of `self`.
    pub fn permute(&self, perm: &[usize]) -> Result<Self> {
        self.dims.check_permutation(perm)?;
        let offs = self.dims.offsets(perm);
        let mat = Matrix::from_fn(offs.len(), offs.len(), |i, j| self.mat[(offs[i], offs[j])]);
        Ok(Self {
            mat,
            dims: self.dims.select(perm)?,
        })
    }

    /// Lift `self` (acting on `sites`, in that order) to the full space `dims`.
    pub fn embed(&self, sites: &[usize], dims: &SiteDims) -> Result<Self> {
        dims.check_sites(sites)?;
        let inner = dims.offsets(sites);
        if inner.len() != self.dim() {
            return Err(Error::DimensionMismatch(format!(
                "operator of dimension {} embedded on sites of dimension {}",
                self.dim(),
                inner.len()
            )));
        }
        let outer = dims.offsets(&dims.complement(sites));
        let total = dims.total();
        let mut mat = Matrix::zeros(total, total);
        for &o in &outer {
            for (r, &ri) in inner.iter().enumerate() {
                for (col, &ci) in inner.iter().enumerate() {
                    mat[(o + ri, o + ci)] = self.mat[(r, col)];
                }
            }
        }
        Ok(Self {
            mat,
            dims: dims.clone(),
        })
    }

    /// `self · other` with a dimension check.
    pub fn compose(&self, other: &Operator) -> Result<Self> {
        if self.dim() != other.dim() {
            return Err(Error::DimensionMismatch(format!(
                "product of operators of dimension {} and {}",
                self.dim(),
                other.dim()
            )));
        }
        Ok(Self {
            mat: &self.mat * &other.mat,
            dims: self.dims.clone(),
        })
    }

    /// `self† · middle · self`.
    pub fn sandwich(&self, middle: &Operator) -> Result<Self> {
        self.adjoint().compose(&middle.compose(self)?)
    }
}

trait IdentityDiff {
    fn max_abs_diff_identity(&self, d: usize) -> f64;
}

impl IdentityDiff for Matrix {
    fn max_abs_diff_identity(&self, d: usize) -> f64 {
        let mut worst = 0.0f64;
        for i in 0..d {
            for j in 0..d {
                let target = if i == j { 1.0 } else { 0.0 };
                worst = worst.max((self[(i, j)] - c(target, 0.0)).norm());
            }
        }
        worst
    }
}

/// Panics on dimension mismatch, like the underlying matrix product.
impl Mul for &Operator {
    type Output = Operator;

    fn mul(self, rhs: &Operator) -> Operator {
        Operator {
            mat: &self.mat * &rhs.mat,
            dims: self.dims.clone(),
        }
    }
}

impl Add for &Operator {
    type Output = Operator;

    fn add(self, rhs: &Operator) -> Operator {
        Operator {
            mat: &self.mat + &rhs.mat,
            dims: self.dims.clone(),
        }
    }
}

impl Sub for &Operator {
    type Output = Operator;

    fn sub(self, rhs: &Operator) -> Operator {
        Operator {
            mat: &self.mat - &rhs.mat,
            dims: self.dims.clone(),
        }
    }
}

/// Types with a tensor product. Operators and vectors never mix: the list
/// passed to [`kron`] is homogeneous by construction.
pub trait Kron: Clone {
    fn kron_pair(&self, other: &Self) -> Self;
}

impl Kron for Operator {
    fn kron_pair(&self, other: &Self) -> Self {
        Operator {
            mat: self.mat.kronecker(&other.mat),
            dims: self.dims.concat(&other.dims),
        }
    }
}

impl Kron for StateVector {
    fn kron_pair(&self, other: &Self) -> Self {
        StateVector {
            amps: self.amps.kronecker(&other.amps),
            dims: self.dims.concat(&other.dims),
        }
    }
}

/// Tensor product of the factors, site order preserved.
pub fn kron<'a, T: Kron + 'a>(factors: impl IntoIterator<Item = &'a T>) -> Result<T> {
    let mut iter = factors.into_iter();
    let first = iter.next().ok_or(Error::EmptyProduct)?.clone();
    Ok(iter.fold(first, |acc, f| acc.kron_pair(f)))
}

/// Reduced operator on the `keep` sites (ascending order).
pub fn partial_trace(op: &Operator, keep: &[usize]) -> Result<Operator> {
    let keep = sorted_sites(&op.dims, keep)?;
    let traced = op.dims.complement(&keep);
    let off_k = op.dims.offsets(&keep);
    let off_t = op.dims.offsets(&traced);
    let mat = Matrix::from_fn(off_k.len(), off_k.len(), |i, j| {
        off_t
            .iter()
            .map(|&t| op.mat[(off_k[i] + t, off_k[j] + t)])
            .sum()
    });
    Ok(Operator {
        mat,
        dims: op.dims.select(&keep)?,
    })
}

/// Unitary factor of the polar decomposition.
///
/// Directions whose singular value is below `zero_tol` carry no information;
/// the left and right null spaces are matched by the closest unitary
/// (orthogonal Procrustes), which is the identity on the kernel whenever the
/// input is normal. So `diag(1, 0)` maps to the identity.
pub fn polar_unitary(op: &Operator, zero_tol: f64) -> Operator {
    Operator {
        mat: polar_matrix(&op.mat, zero_tol),
        dims: op.dims.clone(),
    }
}

pub(crate) fn polar_matrix(m: &Matrix, zero_tol: f64) -> Matrix {
    let n = m.nrows();
    let svd = m.clone().svd(true, true);
    let u = svd.u.expect("svd with u requested");
    let v = svd.v_t.expect("svd with v_t requested").adjoint();
    let (big, small): (Vec<usize>, Vec<usize>) =
        (0..n).partition(|&k| svd.singular_values[k] >= zero_tol);

    let mut w = Matrix::zeros(n, n);
    for &k in &big {
        w += u.column(k) * v.column(k).adjoint();
    }
    if !small.is_empty() {
        let left = u.select_columns(&small);
        let right = v.select_columns(&small);
        let overlap = left.adjoint() * &right;
        let inner = overlap.svd(true, true);
        let q = inner.u.expect("u") * inner.v_t.expect("v_t");
        w += left * q * right.adjoint();
    }
    w
}

/// `|⟨a|b⟩|²`.
pub fn fidelity(a: &StateVector, b: &StateVector) -> Result<f64> {
    Ok(a.inner(b)?.norm_sqr())
}

/// Eigen-decomposition of the Hermitian part of `op`, eigenvalues ascending
/// with matching eigenvector columns.
pub fn eigh(op: &Matrix) -> (Vec<f64>, Matrix) {
    let herm = (op + op.adjoint()) * c(0.5, 0.0);
    let eig = SymmetricEigen::new(herm);
    let mut order: Vec<usize> = (0..eig.eigenvalues.len()).collect();
    order.sort_by(|&a, &b| eig.eigenvalues[a].total_cmp(&eig.eigenvalues[b]));
    let values = order.iter().map(|&k| eig.eigenvalues[k]).collect();
    let vectors = eig.eigenvectors.select_columns(&order);
    (values, vectors)
}

/// `f(H)` for Hermitian `H` through its spectral decomposition.
pub fn spectral_map(op: &Matrix, f: impl Fn(f64) -> C64) -> Matrix {
    let (values, vectors) = eigh(op);
    let diag = DMatrix::from_diagonal(&DVector::from_iterator(
        values.len(),
        values.iter().map(|&x| f(x)),
    ));
    &vectors * diag * vectors.adjoint()
}

/// `exp(i t H)` for Hermitian `H`.
pub fn exp_i_hermitian(h: &Operator, t: f64) -> Operator {
    Operator {
        mat: spectral_map(&h.mat, |x| C64::from_polar(1.0, t * x)),
        dims: h.dims.clone(),
    }
}

/// Orthonormal basis (as columns) of the eigenspace of `op` with eigenvalues
/// above `threshold`.
pub fn support_basis(op: &Matrix, threshold: f64) -> Matrix {
    let (values, vectors) = eigh(op);
    let keep: Vec<usize> = (0..values.len()).filter(|&k| values[k] > threshold).collect();
    vectors.select_columns(&keep)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn x() -> Operator {
        Operator::qubit([c(0., 0.), c(1., 0.), c(1., 0.), c(0., 0.)])
    }

    fn z() -> Operator {
        Operator::qubit([c(1., 0.), c(0., 0.), c(0., 0.), c(-1., 0.)])
    }

    fn bell() -> StateVector {
        let s = std::f64::consts::FRAC_1_SQRT_2;
        StateVector::new(
            vec![c(s, 0.), c(0., 0.), c(0., 0.), c(s, 0.)],
            SiteDims::qubits(2),
        )
        .unwrap()
    }

    #[test]
    fn kron_of_single_factor_is_identity_map() {
        let id = Operator::identity(SiteDims::qubits(1));
        assert_eq!(kron([&id]).unwrap(), id);
    }

    #[test]
    fn kron_rejects_empty_list() {
        let empty: Vec<Operator> = vec![];
        assert!(matches!(kron(&empty), Err(Error::EmptyProduct)));
    }

    #[test]
    fn zz_fixes_00() {
        let zz = kron([&z(), &z()]).unwrap();
        let v = StateVector::basis(SiteDims::qubits(2), 0).unwrap();
        assert!(zz.apply(&v).unwrap().max_abs_diff(&v) < 1e-15);
    }

    #[test]
    fn xx_expectation_on_bell_state() {
        // Oracle: XX as an explicit 4x4 anti-diagonal matrix.
        let mut xx = Matrix::zeros(4, 4);
        for i in 0..4 {
            xx[(i, 3 - i)] = c(1., 0.);
        }
        let v = bell();
        let oracle = v.amplitudes().dotc(&(&xx * v.amplitudes())).re;
        let value = v.expectation(&kron([&x(), &x()]).unwrap()).unwrap().re;
        assert!((value - oracle).abs() < 1e-15);
        assert!((value - 1.0).abs() < 1e-15);
    }

    #[test]
    fn marginal_of_bell_state_is_maximally_mixed() {
        let rho = partial_trace(&bell().projector(), &[0]).unwrap();
        let half = Operator::identity(SiteDims::qubits(1)).scale_real(0.5);
        assert!(rho.max_abs_diff(&half) < 1e-15);
    }

    #[test]
    fn marginal_of_product_state() {
        let v = StateVector::basis(SiteDims::qubits(2), 0).unwrap();
        let rho = partial_trace(&v.projector(), &[1]).unwrap();
        let zero = StateVector::basis(SiteDims::qubits(1), 0).unwrap().projector();
        assert!(rho.max_abs_diff(&zero) < 1e-15);
    }

    #[test]
    fn partial_trace_rejects_bad_site() {
        let err = partial_trace(&bell().projector(), &[2]).unwrap_err();
        assert!(matches!(err, Error::SiteOutOfRange { index: 2, sites: 2 }));
    }

    #[test]
    fn reduced_density_matches_partial_trace() {
        let v = StateVector::new(
            (0..8).map(|k| c(k as f64, 1.0 - k as f64)).collect(),
            SiteDims::new(vec![2, 4]).unwrap(),
        )
        .unwrap();
        for keep in [&[0usize][..], &[1], &[0, 1]] {
            let a = v.reduced_density(keep).unwrap();
            let b = partial_trace(&v.projector(), keep).unwrap();
            assert!(a.max_abs_diff(&b) < 1e-12);
        }
    }

    #[test]
    fn polar_of_unitary_is_itself() {
        let u = x();
        assert!(polar_unitary(&u, DEFAULT_ZERO_TOL).max_abs_diff(&u) < 1e-14);
    }

    #[test]
    fn polar_removes_positive_scaling() {
        let w = polar_unitary(&z().scale_real(2.0), DEFAULT_ZERO_TOL);
        assert!(w.max_abs_diff(&z()) < 1e-14);
    }

    #[test]
    fn polar_maps_kernel_to_plus_one() {
        let p = Operator::qubit([c(1., 0.), c(0., 0.), c(0., 0.), c(0., 0.)]);
        let w = polar_unitary(&p, DEFAULT_ZERO_TOL);
        assert!(w.max_abs_diff(&Operator::identity(SiteDims::qubits(1))) < 1e-14);
    }

    #[test]
    fn polar_kernel_rule_on_rotated_projector() {
        // (X+Z)/2 + (X-Z)/2 rotated kernel: projector onto |+⟩ has kernel |−⟩.
        let plus = Operator::qubit([c(0.5, 0.), c(0.5, 0.), c(0.5, 0.), c(0.5, 0.)]);
        let w = polar_unitary(&plus, DEFAULT_ZERO_TOL);
        assert!(w.max_abs_diff(&Operator::identity(SiteDims::qubits(1))) < 1e-14);
    }

    #[test]
    fn fidelity_examples() {
        let d = SiteDims::qubits(1);
        let zero = StateVector::basis(d.clone(), 0).unwrap();
        let one = StateVector::basis(d.clone(), 1).unwrap();
        let s = std::f64::consts::FRAC_1_SQRT_2;
        let plus = StateVector::new(vec![c(s, 0.), c(s, 0.)], d).unwrap();
        assert!((fidelity(&zero, &zero).unwrap() - 1.0).abs() < 1e-15);
        assert!(fidelity(&zero, &one).unwrap().abs() < 1e-15);
        // Oracle: |⟨0|+⟩|² = (1/√2)².
        assert!((fidelity(&zero, &plus).unwrap() - s * s).abs() < 1e-15);
        assert!(fidelity(&zero, &bell()).is_err());
    }

    #[test]
    fn apply_local_matches_embedded_operator() {
        let dims = SiteDims::new(vec![2, 3, 2]).unwrap();
        let v = StateVector::new(
            (0..12).map(|k| c((k as f64).sin(), (k as f64).cos())).collect(),
            dims.clone(),
        )
        .unwrap();
        let op = kron([&x(), &z()]).unwrap();
        let sites = [2, 0];
        let direct = v.apply_local(op.matrix(), &sites).unwrap();
        let embedded = op.embed(&sites, &dims).unwrap().apply(&v).unwrap();
        assert!(direct.max_abs_diff(&embedded) < 1e-14);
    }

    #[test]
    fn permute_then_inverse_is_identity() {
        let dims = SiteDims::new(vec![2, 3, 4]).unwrap();
        let v = StateVector::new(
            (0..24).map(|k| c(k as f64, 0.)).collect(),
            dims,
        )
        .unwrap();
        let p = v.permute(&[2, 0, 1]).unwrap();
        assert_eq!(p.dims().as_slice(), &[4, 2, 3]);
        let back = p.permute(&[1, 2, 0]).unwrap();
        assert_eq!(back, v);
    }

    #[test]
    fn exp_of_pauli() {
        let t = 0.3;
        let u = exp_i_hermitian(&z(), t);
        let expected = Operator::qubit([
            C64::from_polar(1.0, t),
            c(0., 0.),
            c(0., 0.),
            C64::from_polar(1.0, -t),
        ]);
        assert!(u.max_abs_diff(&expected) < 1e-14);
    }
}
