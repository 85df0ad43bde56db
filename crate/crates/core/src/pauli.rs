//! Target basis `δ_l = U†φ_l` and the real Pauli expansion of its projectors.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::primitives::{digits_of, ghz_basis, pauli, GhzIndex, PauliIndex, UNITARY_TOL};
use crate::tensor::{kron, Operator, StateVector};

/// Largest imaginary part tolerated in a Pauli coefficient.
pub const IMAG_TOL: f64 = 1e-12;

/// Real coefficients of `|δ⟩⟨δ|` in the product Pauli basis. Stored densely,
/// with the first party's index as the most significant base-4 digit.
#[derive(Clone, Debug, PartialEq)]
pub struct FTensor {
    l: GhzIndex,
    coeffs: Vec<f64>,
}

impl FTensor {
    pub fn new(l: GhzIndex, coeffs: Vec<f64>) -> Result<Self> {
        let expected = 1usize << (2 * l.n());
        if coeffs.len() != expected {
            return Err(Error::DimensionMismatch(format!(
                "{} coefficients for N = {}, expected {expected}",
                coeffs.len(),
                l.n()
            )));
        }
        Ok(Self { l, coeffs })
    }

    pub fn zeros(l: GhzIndex) -> Self {
        let len = 1usize << (2 * l.n());
        Self {
            l,
            coeffs: vec![0.0; len],
        }
    }

    pub fn l(&self) -> &GhzIndex {
        &self.l
    }

    pub fn n(&self) -> usize {
        self.l.n()
    }

    pub fn coeffs(&self) -> &[f64] {
        &self.coeffs
    }

    pub fn get(&self, index: &[PauliIndex]) -> f64 {
        let flat = index.iter().fold(0usize, |acc, p| acc * 4 + p.value() as usize);
        self.coeffs[flat]
    }

    /// Nonzero entries as `(index tuple, value)`.
    pub fn iter_nonzero(&self, cutoff: f64) -> impl Iterator<Item = (Vec<PauliIndex>, f64)> + '_ {
        let n = self.n();
        self.coeffs
            .iter()
            .enumerate()
            .filter(move |(_, v)| v.abs() > cutoff)
            .map(move |(k, &v)| (pauli_tuple(k, n), v))
    }

    pub fn sum_of_squares(&self) -> f64 {
        self.coeffs.iter().map(|v| v * v).sum()
    }

    pub fn to_record(&self) -> FTensorRecord {
        let legend = PauliIndex::ALL
            .iter()
            .map(|p| (p.value().to_string(), p.symbol().to_string()))
            .collect();
        let entries = self
            .coeffs
            .iter()
            .enumerate()
            .map(|(k, &value)| FEntry {
                index: pauli_tuple(k, self.n()).iter().map(|p| p.value()).collect(),
                value,
            })
            .collect();
        FTensorRecord {
            l: self.l.bits().to_vec(),
            legend,
            entries,
        }
    }

    pub fn from_record(rec: &FTensorRecord) -> Result<Self> {
        let l = GhzIndex::new(rec.l.clone())?;
        let mut f = Self::zeros(l);
        for e in &rec.entries {
            if e.index.len() != f.n() {
                return Err(Error::Parse(format!(
                    "index {:?} has wrong length for N = {}",
                    e.index,
                    f.n()
                )));
            }
            let idx = e
                .index
                .iter()
                .map(|&v| PauliIndex::new(v))
                .collect::<Result<Vec<_>>>()?;
            let flat = idx.iter().fold(0usize, |acc, p| acc * 4 + p.value() as usize);
            f.coeffs[flat] = e.value;
        }
        Ok(f)
    }
}

/// Serialized form of an [`FTensor`], carrying the index legend.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FTensorRecord {
    pub l: Vec<u8>,
    pub legend: BTreeMap<String, String>,
    pub entries: Vec<FEntry>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FEntry {
    pub index: Vec<u8>,
    pub value: f64,
}

pub(crate) fn pauli_tuple(flat: usize, n: usize) -> Vec<PauliIndex> {
    digits_of(flat, n, 4)
        .into_iter()
        .map(|d| PauliIndex::new(d).expect("base-4 digit"))
        .collect()
}

fn pauli_product(index: &[PauliIndex]) -> Operator {
    let ops: Vec<Operator> = index.iter().map(|&p| pauli(p)).collect();
    kron(&ops).expect("N >= 1")
}

/// `δ_l = U†φ_l` for every label, in integer order.
pub fn delta_set(u: &Operator) -> Result<Vec<StateVector>> {
    let dim = u.dim();
    if dim < 4 || !dim.is_power_of_two() {
        return Err(Error::InvalidDims(format!(
            "gate dimension {dim} is not 2^N with N >= 2"
        )));
    }
    let deviation = u.unitarity_deviation();
    if deviation > UNITARY_TOL {
        return Err(Error::NotUnitary { deviation });
    }
    let n = dim.trailing_zeros() as usize;
    let udag = u.adjoint();
    ghz_basis(n)?.iter().map(|phi| udag.apply(phi)).collect()
}

/// Pauli coefficients of `|δ⟩⟨δ|`, labelled by `l`.
pub fn f_coeffs(delta: &StateVector, l: GhzIndex) -> Result<FTensor> {
    let n = l.n();
    if delta.dim() != 1 << n {
        return Err(Error::DimensionMismatch(format!(
            "vector of dimension {} for N = {n}",
            delta.dim()
        )));
    }
    let scale = 1.0 / (1u64 << n) as f64;
    let mut coeffs = Vec::with_capacity(1 << (2 * n));
    for k in 0..1usize << (2 * n) {
        let s = pauli_product(&pauli_tuple(k, n));
        let v = delta.expectation(&s)? * scale;
        if v.im.abs() > IMAG_TOL {
            return Err(Error::ComplexCoefficient { value: v.im });
        }
        coeffs.push(v.re);
    }
    FTensor::new(l, coeffs)
}

/// Coefficient tensors of the whole `δ` set of a gate.
pub fn f_tensors(u: &Operator) -> Result<Vec<FTensor>> {
    let deltas = delta_set(u)?;
    let n = u.dim().trailing_zeros() as usize;
    deltas
        .iter()
        .zip(GhzIndex::all(n)?)
        .map(|(d, l)| f_coeffs(d, l))
        .collect()
}

/// `Σ f_i ⊗_k S_{i_k}`.
pub fn reconstruct(f: &FTensor) -> Operator {
    let n = f.n();
    let mut out = Operator::zeros(crate::tensor::SiteDims::qubits(n));
    for (k, &v) in f.coeffs.iter().enumerate() {
        if v != 0.0 {
            out = &out + &pauli_product(&pauli_tuple(k, n)).scale_real(v);
        }
    }
    out
}
