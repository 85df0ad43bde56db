//! Fixed qubit constants: Paulis, GHZ-like bases, reference observables and
//! a small gate library.

use std::f64::consts::FRAC_1_SQRT_2;
use std::fmt;
use std::str::FromStr;

use nalgebra::DMatrix;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::tensor::{c, kron, Matrix, Operator, SiteDims, StateVector};

/// Unitarity tolerance for gates accepted from outside.
pub const UNITARY_TOL: f64 = 1e-10;

/// Index into the single-qubit operator basis: 0 → Z, 1 → X, 2 → Y, 3 → 𝟙.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(try_from = "u8", into = "u8")]
pub struct PauliIndex(u8);

impl PauliIndex {
    pub const Z: PauliIndex = PauliIndex(0);
    pub const X: PauliIndex = PauliIndex(1);
    pub const Y: PauliIndex = PauliIndex(2);
    pub const I: PauliIndex = PauliIndex(3);

    pub const ALL: [PauliIndex; 4] = [Self::Z, Self::X, Self::Y, Self::I];

    pub fn new(value: u8) -> Result<Self> {
        if value < 4 {
            Ok(Self(value))
        } else {
            Err(Error::InvalidArgument(format!("Pauli index {value} not in 0..=3")))
        }
    }

    pub fn value(self) -> u8 {
        self.0
    }

    pub fn symbol(self) -> char {
        ['Z', 'X', 'Y', 'I'][self.0 as usize]
    }
}

impl TryFrom<u8> for PauliIndex {
    type Error = Error;

    fn try_from(value: u8) -> Result<Self> {
        Self::new(value)
    }
}

impl From<PauliIndex> for u8 {
    fn from(p: PauliIndex) -> u8 {
        p.0
    }
}

impl fmt::Display for PauliIndex {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.symbol())
    }
}

pub fn pauli(idx: PauliIndex) -> Operator {
    let (o, l, i) = (c(0., 0.), c(1., 0.), c(0., 1.));
    let entries = match idx.0 {
        0 => [l, o, o, -l],
        1 => [o, l, l, o],
        2 => [o, -i, i, o],
        _ => [l, o, o, l],
    };
    Operator::qubit(entries)
}

pub(crate) fn pauli_z() -> Operator {
    pauli(PauliIndex::Z)
}

pub(crate) fn pauli_x() -> Operator {
    pauli(PauliIndex::X)
}

pub(crate) fn pauli_y() -> Operator {
    pauli(PauliIndex::Y)
}

/// Label `l₁…l_N` of a GHZ-like basis vector. `bits[0]` is the most
/// significant digit of the integer form.
#[derive(Clone, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct GhzIndex {
    bits: Vec<u8>,
}

impl GhzIndex {
    pub fn new(bits: Vec<u8>) -> Result<Self> {
        if bits.len() < 2 {
            return Err(Error::InvalidArgument(format!(
                "GHZ index needs at least 2 bits, got {}",
                bits.len()
            )));
        }
        if let Some(b) = bits.iter().find(|&&b| b > 1) {
            return Err(Error::InvalidArgument(format!("GHZ index bit {b} is not 0 or 1")));
        }
        Ok(Self { bits })
    }

    pub fn from_int(n: usize, value: usize) -> Result<Self> {
        if n < 2 || value >= 1 << n {
            return Err(Error::InvalidArgument(format!(
                "GHZ index {value} out of range for N = {n}"
            )));
        }
        Ok(Self {
            bits: bits_of(value, n),
        })
    }

    /// All `2^n` labels in increasing integer order.
    pub fn all(n: usize) -> Result<Vec<Self>> {
        (0..1usize << n).map(|v| Self::from_int(n, v)).collect()
    }

    pub fn bits(&self) -> &[u8] {
        &self.bits
    }

    pub fn n(&self) -> usize {
        self.bits.len()
    }

    pub fn bit(&self, i: usize) -> u8 {
        self.bits[i]
    }

    pub fn to_int(&self) -> usize {
        int_of(&self.bits, 2)
    }
}

impl fmt::Display for GhzIndex {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for b in &self.bits {
            write!(f, "{b}")?;
        }
        Ok(())
    }
}

/// Base-`radix` digits of `value`, most significant first.
pub(crate) fn digits_of(mut value: usize, len: usize, radix: usize) -> Vec<u8> {
    let mut out = vec![0u8; len];
    for d in out.iter_mut().rev() {
        *d = (value % radix) as u8;
        value /= radix;
    }
    out
}

pub(crate) fn bits_of(value: usize, len: usize) -> Vec<u8> {
    digits_of(value, len, 2)
}

pub(crate) fn int_of(digits: &[u8], radix: usize) -> usize {
    digits.iter().fold(0, |acc, &d| acc * radix + d as usize)
}

pub(crate) fn parity_sign(bit: u8) -> f64 {
    if bit & 1 == 0 {
        1.0
    } else {
        -1.0
    }
}

/// `(|l⟩ + (−1)^{l₁}|l̄⟩)/√2` on `N` qubits.
pub fn ghz_state(l: &GhzIndex) -> StateVector {
    let n = l.n();
    let dim = 1usize << n;
    let v = l.to_int();
    let mut amps = vec![c(0., 0.); dim];
    amps[v] = c(FRAC_1_SQRT_2, 0.);
    amps[dim - 1 - v] = c(parity_sign(l.bit(0)) * FRAC_1_SQRT_2, 0.);
    StateVector::new(amps, SiteDims::qubits(n)).expect("dimension is 2^n by construction")
}

/// The full GHZ-like basis, ordered by integer label.
pub fn ghz_basis(n: usize) -> Result<Vec<StateVector>> {
    Ok(GhzIndex::all(n)?.iter().map(ghz_state).collect())
}

/// Setting symbols appearing in Bell functionals. `T*` are the rotated
/// combinations of the first two settings, `T2` is the third setting and
/// `ID` the identity.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum SettingSymbol {
    S0,
    S1,
    S2,
    T0,
    T1,
    T2,
    ID,
}

impl SettingSymbol {
    pub fn from_setting(x: u8) -> Result<Self> {
        match x {
            0 => Ok(Self::S0),
            1 => Ok(Self::S1),
            2 => Ok(Self::S2),
            _ => Err(Error::InvalidArgument(format!("setting {x} not in 0..=2"))),
        }
    }

    pub fn is_tilde(self) -> bool {
        matches!(self, Self::T0 | Self::T1 | Self::T2)
    }

    /// Linear expansion into raw settings: `(weight, Some(x))`, or
    /// `(1, None)` for the identity.
    pub fn expand(self) -> Vec<(f64, Option<u8>)> {
        let h = FRAC_1_SQRT_2;
        match self {
            Self::S0 => vec![(1.0, Some(0))],
            Self::S1 => vec![(1.0, Some(1))],
            Self::S2 | Self::T2 => vec![(1.0, Some(2))],
            Self::T0 => vec![(h, Some(0)), (-h, Some(1))],
            Self::T1 => vec![(h, Some(0)), (h, Some(1))],
            Self::ID => vec![(1.0, None)],
        }
    }

    /// Operator for this symbol given the raw observables of one party.
    pub fn realize(self, raw: &[Operator]) -> Result<Operator> {
        let dims = raw
            .first()
            .ok_or_else(|| Error::InvalidArgument("party has no observables".into()))?
            .dims()
            .clone();
        let mut out = Operator::zeros(dims.clone());
        for (w, x) in self.expand() {
            let term = match x {
                Some(x) => raw
                    .get(x as usize)
                    .ok_or_else(|| {
                        Error::InvalidArgument(format!("party has no setting {x}"))
                    })?
                    .scale_real(w),
                None => Operator::identity(dims.clone()).scale_real(w),
            };
            out = &out + &term;
        }
        Ok(out)
    }
}

impl fmt::Display for SettingSymbol {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let s = match self {
            Self::S0 => "S0",
            Self::S1 => "S1",
            Self::S2 => "S2",
            Self::T0 => "T0",
            Self::T1 => "T1",
            Self::T2 => "T2",
            Self::ID => "ID",
        };
        f.write_str(s)
    }
}

/// Sign carried by every party's third observable: `+Y` or `−Y`.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Branch {
    Plus,
    Minus,
}

impl Branch {
    pub fn sign(self) -> f64 {
        match self {
            Self::Plus => 1.0,
            Self::Minus => -1.0,
        }
    }

    pub fn flipped(self) -> Self {
        match self {
            Self::Plus => Self::Minus,
            Self::Minus => Self::Plus,
        }
    }
}

impl FromStr for Branch {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "plus" | "+" | "+1" => Ok(Self::Plus),
            "minus" | "-" | "-1" => Ok(Self::Minus),
            _ => Err(Error::Parse(format!("unknown branch {s:?}"))),
        }
    }
}

impl fmt::Display for Branch {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Self::Plus => "plus",
            Self::Minus => "minus",
        })
    }
}

fn diag_plus() -> Operator {
    (&pauli_x() + &pauli_z()).scale_real(FRAC_1_SQRT_2)
}

fn diag_minus() -> Operator {
    (&pauli_x() - &pauli_z()).scale_real(FRAC_1_SQRT_2)
}

/// Raw reference observables of party `party` (0-based; party 0 carries the
/// rotated pair).
pub fn ref_observables(party: usize, branch: Branch) -> [Operator; 3] {
    let y = pauli_y().scale_real(branch.sign());
    if party == 0 {
        [diag_plus(), diag_minus(), y]
    } else {
        [pauli_z(), pauli_x(), y]
    }
}

/// Reference observable of `party` for `symbol`; tilde symbols are legal for
/// party 0 only.
pub fn ref_observable(party: usize, symbol: SettingSymbol, branch: Branch) -> Result<Operator> {
    if symbol.is_tilde() && party != 0 {
        return Err(Error::InvalidArgument(format!(
            "symbol {symbol} is only defined for party 0, got party {party}"
        )));
    }
    symbol.realize(&ref_observables(party, branch))
}

/// Reference binary observables of L for subnet `subnet` (0-based).
pub fn ref_b_observables(subnet: usize) -> [Operator; 2] {
    if subnet == 0 {
        [pauli_z(), pauli_x()]
    } else {
        [diag_plus(), diag_minus()]
    }
}

pub fn ref_b_observable(subnet: usize, setting: u8) -> Result<Operator> {
    if setting > 1 {
        return Err(Error::InvalidArgument(format!("binary setting {setting} not in 0..=1")));
    }
    let [b0, b1] = ref_b_observables(subnet);
    Ok(if setting == 0 { b0 } else { b1 })
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum NamedGate {
    Identity,
    Cz,
    Cnot,
    Swap,
    Toffoli,
}

impl NamedGate {
    pub fn qubits(self) -> Option<usize> {
        match self {
            Self::Identity => None,
            Self::Cz | Self::Cnot | Self::Swap => Some(2),
            Self::Toffoli => Some(3),
        }
    }
}

impl FromStr for NamedGate {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "identity" | "id" | "i" => Ok(Self::Identity),
            "cz" => Ok(Self::Cz),
            "cnot" | "cx" => Ok(Self::Cnot),
            "swap" => Ok(Self::Swap),
            "toffoli" | "ccx" | "ccnot" => Ok(Self::Toffoli),
            _ => Err(Error::Parse(format!("unknown gate name {s:?}"))),
        }
    }
}

impl fmt::Display for NamedGate {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Self::Identity => "identity",
            Self::Cz => "cz",
            Self::Cnot => "cnot",
            Self::Swap => "swap",
            Self::Toffoli => "toffoli",
        })
    }
}

#[derive(Clone, Debug, PartialEq)]
pub enum GateSpec {
    Named(NamedGate),
    Matrix(Matrix),
    Random { seed: u64 },
}

impl fmt::Display for GateSpec {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Self::Named(g) => write!(f, "{g}"),
            Self::Matrix(m) => write!(f, "matrix{}x{}", m.nrows(), m.ncols()),
            Self::Random { seed } => write!(f, "random:{seed}"),
        }
    }
}

/// Permutation matrix sending basis state `j` to `map(j)`.
fn permutation_gate(n: usize, map: impl Fn(usize) -> usize) -> Matrix {
    let dim = 1 << n;
    let mut m = Matrix::zeros(dim, dim);
    for j in 0..dim {
        m[(map(j), j)] = c(1., 0.);
    }
    m
}

/// Build the gate on `n` qubits.
pub fn gate(spec: &GateSpec, n: usize) -> Result<Operator> {
    let dims = SiteDims::qubits(n);
    let dim = dims.total();
    let mat = match spec {
        GateSpec::Named(g) => {
            if let Some(q) = g.qubits() {
                if q != n {
                    return Err(Error::InvalidArgument(format!(
                        "gate {g} acts on {q} qubits, requested N = {n}"
                    )));
                }
            }
            match g {
                NamedGate::Identity => Matrix::identity(dim, dim),
                NamedGate::Cz => {
                    let mut m = Matrix::identity(4, 4);
                    m[(3, 3)] = c(-1., 0.);
                    m
                }
                NamedGate::Cnot => permutation_gate(2, |j| if j >= 2 { j ^ 1 } else { j }),
                NamedGate::Swap => permutation_gate(2, |j| ((j & 1) << 1) | (j >> 1)),
                NamedGate::Toffoli => permutation_gate(3, |j| if j >= 6 { j ^ 1 } else { j }),
            }
        }
        GateSpec::Matrix(m) => {
            if m.nrows() != dim || m.ncols() != dim {
                return Err(Error::DimensionMismatch(format!(
                    "gate matrix is {}x{}, expected {dim}x{dim}",
                    m.nrows(),
                    m.ncols()
                )));
            }
            m.clone()
        }
        GateSpec::Random { seed } => haar_unitary(dim, *seed),
    };
    let op = Operator::new(mat, dims)?;
    let deviation = op.unitarity_deviation();
    if deviation > UNITARY_TOL {
        return Err(Error::NotUnitary { deviation });
    }
    Ok(op)
}

/// Haar-distributed unitary from a seeded complex Gaussian matrix (QR with
/// the phases of R's diagonal moved into Q).
pub fn haar_unitary(dim: usize, seed: u64) -> Matrix {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let g = DMatrix::from_fn(dim, dim, |_, _| {
        let re: f64 = StandardNormal.sample(&mut rng);
        let im: f64 = StandardNormal.sample(&mut rng);
        c(re, im) * FRAC_1_SQRT_2
    });
    let qr = g.qr();
    let (mut q, r) = qr.unpack();
    for j in 0..dim {
        let d = r[(j, j)];
        let phase = if d.norm() > 0.0 { d / d.norm() } else { c(1., 0.) };
        let mut col = q.column_mut(j);
        col *= phase;
    }
    q
}

/// Tensor product of single-qubit Paulis, first index on site 0.
pub fn pauli_string(indices: &[PauliIndex]) -> Result<Operator> {
    let ops: Vec<Operator> = indices.iter().map(|&i| pauli(i)).collect();
    kron(&ops)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn close(a: &Operator, b: &Operator) -> bool {
        a.max_abs_diff(b) < 1e-14
    }

    #[test]
    fn pauli_identity() {
        assert_eq!(pauli(PauliIndex::I), Operator::identity(SiteDims::qubits(1)));
    }

    #[test]
    fn zx_is_iy() {
        let zx = &pauli_z() * &pauli_x();
        assert!(close(&zx, &pauli_y().scale(c(0., 1.))));
    }

    #[test]
    fn pauli_orthogonality() {
        for j in PauliIndex::ALL {
            for k in PauliIndex::ALL {
                let t = (&pauli(j) * &pauli(k)).trace();
                let expected = if j == k { 2.0 } else { 0.0 };
                assert!((t - c(expected, 0.)).norm() < 1e-15);
            }
        }
    }

    #[test]
    fn ghz_examples() {
        let s = FRAC_1_SQRT_2;
        let v = ghz_state(&GhzIndex::new(vec![0, 0]).unwrap());
        assert_eq!(v.as_slice(), &[c(s, 0.), c(0., 0.), c(0., 0.), c(s, 0.)]);
        // |10⟩ − |01⟩: index 2 positive, index 1 negative.
        let v = ghz_state(&GhzIndex::new(vec![1, 0]).unwrap());
        assert_eq!(v.as_slice(), &[c(0., 0.), c(-s, 0.), c(s, 0.), c(0., 0.)]);
    }

    #[test]
    fn ghz_basis_is_orthonormal() {
        for n in [2, 3] {
            let basis = ghz_basis(n).unwrap();
            for (i, a) in basis.iter().enumerate() {
                for (j, b) in basis.iter().enumerate() {
                    let g = a.inner(b).unwrap();
                    let expected = if i == j { 1.0 } else { 0.0 };
                    assert!((g - c(expected, 0.)).norm() < 1e-12);
                }
                assert!(a.as_slice().iter().all(|z| z.im == 0.0));
            }
        }
    }

    #[test]
    fn ghz_index_round_trip() {
        for v in 0..8 {
            assert_eq!(GhzIndex::from_int(3, v).unwrap().to_int(), v);
        }
        assert_eq!(GhzIndex::from_int(3, 6).unwrap().bits(), &[1, 1, 0]);
        assert!(GhzIndex::new(vec![0]).is_err());
        assert!(GhzIndex::from_int(2, 4).is_err());
    }

    #[test]
    fn tilde_observables_of_reference() {
        let t0 = ref_observable(0, SettingSymbol::T0, Branch::Plus).unwrap();
        let t1 = ref_observable(0, SettingSymbol::T1, Branch::Plus).unwrap();
        assert!(close(&t0, &pauli_z()));
        assert!(close(&t1, &pauli_x()));
        assert!(ref_observable(1, SettingSymbol::T0, Branch::Plus).is_err());
        let id = ref_observable(2, SettingSymbol::ID, Branch::Plus).unwrap();
        assert!(close(&id, &pauli(PauliIndex::I)));
    }

    #[test]
    fn reference_observable_examples() {
        let x = ref_observable(1, SettingSymbol::S1, Branch::Plus).unwrap();
        assert!(close(&x, &pauli_x()));
        let my = ref_observable(0, SettingSymbol::S2, Branch::Minus).unwrap();
        assert!(close(&my, &pauli_y().scale_real(-1.0)));
    }

    #[test]
    fn reference_observables_are_involutions() {
        let one = pauli(PauliIndex::I);
        for party in 0..3 {
            for branch in [Branch::Plus, Branch::Minus] {
                for a in ref_observables(party, branch) {
                    assert!(a.is_hermitian(1e-15));
                    assert!(close(&(&a * &a), &one));
                }
            }
        }
        for subnet in 0..3 {
            for b in ref_b_observables(subnet) {
                assert!(b.is_hermitian(1e-15));
                assert!(close(&(&b * &b), &one));
            }
        }
        assert!(close(&ref_b_observable(0, 0).unwrap(), &pauli_z()));
        assert!(close(&ref_b_observable(1, 1).unwrap(), &diag_minus()));
    }

    #[test]
    fn settings_are_tomographically_complete() {
        for party in 0..2 {
            let mut ops: Vec<Operator> = ref_observables(party, Branch::Plus).to_vec();
            ops.push(pauli(PauliIndex::I));
            let gram = Matrix::from_fn(4, 4, |i, j| (&ops[i].adjoint() * &ops[j]).trace());
            assert_eq!(gram.rank(1e-10), 4);
        }
    }

    #[test]
    fn cnot_on_bell_state() {
        let u = gate(&GateSpec::Named(NamedGate::Cnot), 2).unwrap();
        let phi = ghz_state(&GhzIndex::from_int(2, 0).unwrap());
        let out = u.apply(&phi).unwrap();
        let s = FRAC_1_SQRT_2;
        // (|00⟩ + |10⟩)/√2
        let expected = [c(s, 0.), c(0., 0.), c(s, 0.), c(0., 0.)];
        for (a, b) in out.as_slice().iter().zip(expected) {
            assert!((a - b).norm() < 1e-15);
        }
    }

    #[test]
    fn named_gates_are_unitary() {
        for (g, n) in [
            (NamedGate::Identity, 2),
            (NamedGate::Identity, 3),
            (NamedGate::Cz, 2),
            (NamedGate::Cnot, 2),
            (NamedGate::Swap, 2),
            (NamedGate::Toffoli, 3),
        ] {
            let u = gate(&GateSpec::Named(g), n).unwrap();
            assert!(u.is_unitary(1e-14));
        }
        assert!(gate(&GateSpec::Named(NamedGate::Toffoli), 2).is_err());
    }

    #[test]
    fn random_gate_is_reproducible_and_unitary() {
        let a = gate(&GateSpec::Random { seed: 0 }, 2).unwrap();
        let b = gate(&GateSpec::Random { seed: 0 }, 2).unwrap();
        assert_eq!(a, b);
        assert!(a.is_unitary(1e-12));
        let other = gate(&GateSpec::Random { seed: 1 }, 2).unwrap();
        assert!(a.max_abs_diff(&other) > 1e-3);
    }

    #[test]
    fn non_unitary_matrix_is_rejected() {
        let m = Matrix::from_diagonal_element(4, 4, c(2., 0.));
        match gate(&GateSpec::Matrix(m), 2) {
            Err(Error::NotUnitary { deviation }) => assert!((deviation - 3.0).abs() < 1e-12),
            other => panic!("expected NotUnitary, got {other:?}"),
        }
    }
}
