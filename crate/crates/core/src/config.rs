//! Run configuration, gate files and atomic output.

use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::adversary::AdversarySpec;
use crate::certify::DEFAULT_TOL;
use crate::error::{Error, Result};
use crate::network::{reference_realization, Realization, Scheme};
use crate::primitives::{gate, Branch, GateSpec, NamedGate};
use crate::tensor::{c, Matrix, Operator};

#[derive(Clone, Debug, PartialEq)]
pub struct RunConfig {
    pub scheme: Scheme,
    pub n: usize,
    pub gate: GateSpec,
    pub branch: Branch,
    pub tol: f64,
    pub seed: u64,
    pub adversary: Option<AdversarySpec>,
    pub out: PathBuf,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            scheme: Scheme::AlmostDi,
            n: 2,
            gate: GateSpec::Named(NamedGate::Cnot),
            branch: Branch::Plus,
            tol: DEFAULT_TOL,
            seed: 0,
            adversary: None,
            out: PathBuf::from("."),
        }
    }
}

impl RunConfig {
    pub fn validate(&self) -> Result<()> {
        if !(2..=3).contains(&self.n) {
            return Err(Error::InvalidArgument(format!("N = {} not in {{2, 3}}", self.n)));
        }
        if !(self.tol > 0.0) {
            return Err(Error::InvalidArgument(format!("tolerance {} must be positive", self.tol)));
        }
        Ok(())
    }

    pub fn unitary(&self) -> Result<Operator> {
        gate(&self.gate, self.n)
    }

    pub fn reference(&self) -> Result<Realization> {
        reference_realization(self.n, &self.unitary()?, self.branch, self.scheme)
    }
}

/// On-disk gate description. Matrix entries are `[re, im]` pairs, row by row.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum GateFile {
    Named { name: NamedGate },
    Random { random_seed: u64 },
    Matrix { matrix: Vec<Vec<[f64; 2]>> },
}

impl GateFile {
    pub fn into_spec(self) -> Result<GateSpec> {
        Ok(match self {
            Self::Named { name } => GateSpec::Named(name),
            Self::Random { random_seed } => GateSpec::Random { seed: random_seed },
            Self::Matrix { matrix } => {
                let rows = matrix.len();
                if matrix.iter().any(|r| r.len() != rows) {
                    return Err(Error::Parse("gate matrix is not square".into()));
                }
                GateSpec::Matrix(Matrix::from_fn(rows, rows, |i, j| {
                    let [re, im] = matrix[i][j];
                    c(re, im)
                }))
            }
        })
    }

    pub fn from_spec(spec: &GateSpec) -> Self {
        match spec {
            GateSpec::Named(g) => Self::Named { name: *g },
            GateSpec::Random { seed } => Self::Random { random_seed: *seed },
            GateSpec::Matrix(m) => Self::Matrix {
                matrix: (0..m.nrows())
                    .map(|i| (0..m.ncols()).map(|j| [m[(i, j)].re, m[(i, j)].im]).collect())
                    .collect(),
            },
        }
    }
}

/// A gate argument: an existing JSON file, a gate name, or `random:<seed>`.
pub fn parse_gate_arg(arg: &str) -> Result<GateSpec> {
    let path = Path::new(arg);
    if path.is_file() {
        let text = fs::read_to_string(path)?;
        let file: GateFile = serde_json::from_str(&text).map_err(|e| Error::Parse(e.to_string()))?;
        return file.into_spec();
    }
    if let Some(seed) = arg.strip_prefix("random:") {
        let seed = seed
            .parse()
            .map_err(|_| Error::Parse(format!("bad random seed in {arg:?}")))?;
        return Ok(GateSpec::Random { seed });
    }
    Ok(GateSpec::Named(arg.parse()?))
}

pub fn read_adversary(path: &Path) -> Result<AdversarySpec> {
    AdversarySpec::from_json(&fs::read_to_string(path)?)
}

/// Write via a sibling temporary file and rename.
pub fn write_atomic(path: &Path, contents: &[u8]) -> Result<()> {
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        fs::create_dir_all(dir)?;
    }
    let mut tmp = path.as_os_str().to_owned();
    tmp.push(".tmp");
    let tmp = PathBuf::from(tmp);
    fs::write(&tmp, contents)?;
    fs::rename(&tmp, path)?;
    Ok(())
}
