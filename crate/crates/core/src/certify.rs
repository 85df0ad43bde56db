//! Statistical certification conditions and the combined report.

use std::fmt;

use serde::{Deserialize, Serialize};

use crate::bell::{evaluate, functional_I, functional_K};
use crate::error::{Error, Result};
use crate::extraction;
use crate::network::{born_table, Condition, Realization, LInput, ProbabilityTable, Scheme, ScenarioSpec, ZERO_PROB};
use crate::pauli::{f_tensors, FTensor};
use crate::primitives::{Branch, GhzIndex, PauliIndex, SettingSymbol};
use crate::tensor::Operator;

/// Default tolerance for exact-simulation inputs.
pub const DEFAULT_TOL: f64 = 1e-9;

/// Coefficients below this are skipped when summing Pauli-weighted terms.
const F_CUTOFF: f64 = 1e-15;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Check {
    pub id: String,
    pub lhs: f64,
    pub rhs: f64,
    pub residual: f64,
    pub tol: f64,
    pub pass: bool,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub note: Option<String>,
}

impl Check {
    pub fn new(id: impl Into<String>, lhs: f64, rhs: f64, tol: f64) -> Self {
        let residual = (lhs - rhs).abs();
        Self {
            id: id.into(),
            lhs,
            rhs,
            residual,
            tol,
            pass: residual <= tol,
            note: None,
        }
    }

    /// A distance-type check: `lhs` is the measured distance, target 0.
    pub fn distance(id: impl Into<String>, distance: f64, tol: f64) -> Self {
        Self::new(id, distance, 0.0, tol)
    }

    /// A check that could not be evaluated.
    pub fn failed(id: impl Into<String>, rhs: f64, tol: f64, note: impl Into<String>) -> Self {
        Self {
            id: id.into(),
            lhs: f64::NAN,
            rhs,
            residual: f64::INFINITY,
            tol,
            pass: false,
            note: Some(note.into()),
        }
    }

    pub fn with_note(mut self, note: impl Into<String>) -> Self {
        self.note = Some(note.into());
        self
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum DetectedBranch {
    Plus,
    Minus,
    Mixed,
    Undetermined,
}

impl fmt::Display for DetectedBranch {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Self::Plus => "plus",
            Self::Minus => "minus",
            Self::Mixed => "mixed",
            Self::Undetermined => "undetermined",
        })
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Verdict {
    Certified,
    NotCertified,
}

impl Verdict {
    /// Process exit status for this verdict.
    pub fn exit_code(self) -> i32 {
        match self {
            Self::Certified => 0,
            Self::NotCertified => 1,
        }
    }
}

impl fmt::Display for Verdict {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Self::Certified => "certified",
            Self::NotCertified => "not-certified",
        })
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CertificationReport {
    pub scheme: Scheme,
    pub n: usize,
    pub checks: Vec<Check>,
    /// Operator-level rows from extraction; `None` in statistics-only mode.
    #[serde(default)]
    pub operator_checks: Option<Vec<Check>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub operator_note: Option<String>,
    pub branch_detected: DetectedBranch,
    pub max_residual: f64,
    pub verdict: Verdict,
}

impl CertificationReport {
    pub fn new(spec: ScenarioSpec, mut checks: Vec<Check>, branch: DetectedBranch) -> Self {
        checks.sort_by(|a, b| a.id.cmp(&b.id));
        let mut r = Self {
            scheme: spec.scheme,
            n: spec.n,
            checks,
            operator_checks: None,
            operator_note: Some("operator-level checks unavailable".into()),
            branch_detected: branch,
            max_residual: 0.0,
            verdict: Verdict::NotCertified,
        };
        r.refresh();
        r
    }

    /// Attach operator-level rows and recompute the verdict.
    pub fn with_operator_checks(mut self, mut rows: Vec<Check>) -> Self {
        rows.sort_by(|a, b| a.id.cmp(&b.id));
        self.operator_checks = Some(rows);
        self.operator_note = None;
        self.refresh();
        self
    }

    pub fn with_operator_note(mut self, note: impl Into<String>) -> Self {
        self.operator_note = Some(note.into());
        self
    }

    pub fn set_branch(&mut self, branch: DetectedBranch) {
        self.branch_detected = branch;
        self.refresh();
    }

    fn refresh(&mut self) {
        let max = self.all_checks().map(|c| c.residual).fold(0.0, f64::max);
        let ok = self.all_checks().all(|c| c.pass) && self.branch_detected != DetectedBranch::Mixed;
        self.max_residual = max;
        self.verdict = if ok {
            Verdict::Certified
        } else {
            Verdict::NotCertified
        };
    }

    pub fn all_checks(&self) -> impl Iterator<Item = &Check> {
        self.checks
            .iter()
            .chain(self.operator_checks.iter().flatten())
    }

    pub fn failing(&self) -> Vec<&Check> {
        self.all_checks().filter(|c| !c.pass).collect()
    }

    pub fn find(&self, id: &str) -> Option<&Check> {
        self.all_checks().find(|c| c.id == id)
    }

    pub fn is_certified(&self) -> bool {
        self.verdict == Verdict::Certified
    }

    pub fn to_json(&self) -> Result<String> {
        serde_json::to_string_pretty(self).map_err(|e| Error::Parse(e.to_string()))
    }

    pub fn from_json(s: &str) -> Result<Self> {
        serde_json::from_str(s).map_err(|e| Error::Parse(e.to_string()))
    }
}

fn bits_label(l: &GhzIndex) -> String {
    l.to_string()
}

fn ghz_labels(n: usize) -> Result<Vec<GhzIndex>> {
    GhzIndex::all(n)
}

fn beta_q(n: usize) -> f64 {
    3.0 * (n - 1) as f64
}

/// Setting rows for a given `(e, y)` over all `x`.
fn rows(spec: &ScenarioSpec, e: usize, y: usize) -> impl Iterator<Item = usize> + '_ {
    (0..spec.n_x()).map(move |x| spec.setting_index_raw(x, e, y))
}

fn require_almost_di(table: &ProbabilityTable) -> Result<()> {
    if table.spec().scheme != Scheme::AlmostDi {
        return Err(Error::InvalidArgument("expected an almost-DI table".into()));
    }
    Ok(())
}

fn require_di(table: &ProbabilityTable) -> Result<()> {
    if table.spec().scheme != Scheme::Di {
        return Err(Error::InvalidArgument("expected a DI table".into()));
    }
    Ok(())
}

/// `⟨I_l ⊗ M_l⟩ = p(l)·3(N−1)` and `p(l) = 2^{−N}` at `e = 0`.
pub fn check_step1_almost_di(table: &ProbabilityTable, tol: f64) -> Result<Vec<Check>> {
    require_almost_di(table)?;
    let spec = *table.spec();
    table.require(rows(&spec, 0, 0))?;
    let n = spec.n;
    let mut out = Vec::new();
    for l in ghz_labels(n)? {
        let cond = Condition::l(l.to_int());
        let joint = evaluate(&functional_I(&l), table, 0, &cond, false)?;
        let p = table.probability(0, None, &cond)?;
        let tag = bits_label(&l);
        out.push(Check::new(format!("step1.joint.l={tag}"), joint, p * beta_q(n), tol));
        out.push(Check::new(
            format!("step1.p_l.l={tag}"),
            p,
            1.0 / (1u64 << n) as f64,
            tol,
        ));
    }
    Ok(out)
}

/// Raw symbols for one Pauli index tuple: the first party reads Z and X
/// through its rotated pair.
fn pauli_symbols(index: &[PauliIndex]) -> Vec<SettingSymbol> {
    index
        .iter()
        .enumerate()
        .map(|(k, p)| match (k, p.value()) {
            (0, 0) => SettingSymbol::T0,
            (0, 1) => SettingSymbol::T1,
            (_, 0) => SettingSymbol::S0,
            (_, 1) => SettingSymbol::S1,
            (_, 2) => SettingSymbol::S2,
            _ => SettingSymbol::ID,
        })
        .collect()
}

/// `Σ_i f_{l,i} ⟨⊗ symbols(i) ⊗ [event]⟩` at `e = 1` (joint, unnormalized).
fn weighted_sum(table: &ProbabilityTable, f: &FTensor, cond: &Condition) -> Result<f64> {
    let mut total = 0.0;
    for (index, coeff) in f.iter_nonzero(F_CUTOFF) {
        let symbols = pauli_symbols(&index);
        total += coeff * table.correlator(1, &symbols, None, cond, false)?;
    }
    Ok(total)
}

fn tensors_for(u: &Operator, n: usize) -> Result<Vec<FTensor>> {
    if u.dim() != 1 << n {
        return Err(Error::DimensionMismatch(format!(
            "gate of dimension {} for N = {n}",
            u.dim()
        )));
    }
    f_tensors(u)
}

/// Pauli-weighted `e = 1` correlations against `2^{−N}` for every `l`.
pub fn check_step2_almost_di(table: &ProbabilityTable, u: &Operator, tol: f64) -> Result<Vec<Check>> {
    require_almost_di(table)?;
    let spec = *table.spec();
    table.require(rows(&spec, 1, 0))?;
    let n = spec.n;
    let mut out = Vec::new();
    for f in tensors_for(u, n)? {
        let lhs = weighted_sum(table, &f, &Condition::l(f.l().to_int()))?;
        out.push(Check::new(
            format!("step2.l={}", bits_label(f.l())),
            lhs,
            1.0 / (1u64 << n) as f64,
            tol,
        ));
    }
    Ok(out)
}

fn r_label(r: u8) -> String {
    format!("{}{}", r >> 1, r & 1)
}

/// `p(r_i = k)` at `e = 0`, `y = ⊥`.
fn repeater_marginal(table: &ProbabilityTable, i: usize, k: u8) -> Result<f64> {
    let n = table.spec().n;
    let mut r = vec![None; n];
    r[i] = Some(k);
    table.probability(0, None, &Condition::none().with_r(r))
}

/// `p̄(0) = Π_i p(r_i = 0)` from `e = 0` data.
fn p_bar_zero(table: &ProbabilityTable) -> Result<f64> {
    (0..table.spec().n).map(|i| repeater_marginal(table, i, 0)).product()
}

/// Conditional `⟨K⟩ = 2` for each subnet and repeater outcome, and
/// `p(r_i = k) = 1/4`.
pub fn check_step1_di(table: &ProbabilityTable, tol: f64) -> Result<Vec<Check>> {
    require_di(table)?;
    let spec = *table.spec();
    let n = spec.n;
    table.require((0..spec.n_y()).flat_map(|y| rows(&spec, 0, y).collect::<Vec<_>>()))?;
    let mut out = Vec::new();
    for i in 0..n {
        for k in 0..4u8 {
            let tag = format!("i={i}.r={}", r_label(k));
            let f = functional_K(n, i, [k >> 1, k & 1])?;
            let mut r = vec![None; n];
            r[i] = Some(k);
            let cond = Condition::none().with_r(r);
            let id = format!("di.step1.K.{tag}");
            match evaluate(&f, table, 0, &cond, true) {
                Ok(v) => out.push(Check::new(id, v, 2.0, tol)),
                Err(Error::ZeroProbability(msg)) => {
                    out.push(Check::failed(id, 2.0, tol, format!("zero probability: {msg}")))
                }
                Err(e) => return Err(e),
            }
            out.push(Check::new(
                format!("di.step1.p_r.{tag}"),
                repeater_marginal(table, i, k)?,
                0.25,
                tol,
            ));
        }
    }
    Ok(out)
}

/// `⟨I_l ⊗ R_0 ⊗ M_l⟩ = p(l|r=0)·p̄(0)·3(N−1)` and `p(l|r=0) = 2^{−N}`.
pub fn check_step2_di(table: &ProbabilityTable, tol: f64) -> Result<Vec<Check>> {
    require_di(table)?;
    let spec = *table.spec();
    let n = spec.n;
    table.require(rows(&spec, 0, 0))?;
    let p_bar = p_bar_zero(table)?;
    let r0 = Condition::none().with_r_zero(n);
    let p_r0 = table.probability(0, None, &r0)?;
    let mut out = Vec::new();
    for l in ghz_labels(n)? {
        let tag = bits_label(&l);
        let cond = Condition::l(l.to_int()).with_r_zero(n);
        let joint = evaluate(&functional_I(&l), table, 0, &cond, false)?;
        if p_r0 < ZERO_PROB {
            out.push(Check::failed(
                format!("di.step2.joint.l={tag}"),
                0.0,
                tol,
                "repeater outcome 0 never occurs",
            ));
            continue;
        }
        let p_l = table.probability(0, None, &cond)? / p_r0;
        out.push(Check::new(
            format!("di.step2.joint.l={tag}"),
            joint,
            p_l * p_bar * beta_q(n),
            tol,
        ));
        out.push(Check::new(
            format!("di.step2.p_l.l={tag}"),
            p_l,
            1.0 / (1u64 << n) as f64,
            tol,
        ));
    }
    Ok(out)
}

/// Pauli-weighted `e = 1` correlations restricted to `r = 0` against
/// `p̄(0)/2^N`.
pub fn check_step3_di(table: &ProbabilityTable, u: &Operator, tol: f64) -> Result<Vec<Check>> {
    require_di(table)?;
    let spec = *table.spec();
    let n = spec.n;
    table.require(rows(&spec, 1, 0).chain(rows(&spec, 0, 0)))?;
    let rhs = p_bar_zero(table)? / (1u64 << n) as f64;
    let mut out = Vec::new();
    for f in tensors_for(u, n)? {
        let cond = Condition::l(f.l().to_int()).with_r_zero(n);
        let lhs = weighted_sum(table, &f, &cond)?;
        out.push(Check::new(
            format!("di.step3.l={}", bits_label(f.l())),
            lhs,
            rhs,
            tol,
        ));
    }
    Ok(out)
}

/// Branch information available from statistics alone. Full conjugation
/// leaves every probability unchanged, so a consistent table is reported as
/// `Undetermined`; a party whose Y-bearing correlators carry the opposite
/// sign to the first party's is reported as `Mixed`.
pub fn detect_branch_from_table(table: &ProbabilityTable) -> Result<DetectedBranch> {
    let spec = *table.spec();
    let n = spec.n;
    table.require(rows(&spec, 0, 0))?;
    let base = if spec.is_di() {
        Condition::none().with_r_zero(n)
    } else {
        Condition::none()
    };
    let labels = ghz_labels(n)?;
    for i in 1..n {
        let mut acc = 0.0;
        let mut count = 0usize;
        for l in &labels {
            let f = functional_I(l);
            let term = &f.terms()[n + i - 1];
            let cond = Condition {
                l: Some(l.to_int()),
                r: base.r.clone(),
            };
            match table.correlator(0, &term.symbols, None, &cond, true) {
                Ok(v) => {
                    acc += term.coeff * v;
                    count += 1;
                }
                Err(Error::ZeroProbability(_)) => {}
                Err(e) => return Err(e),
            }
        }
        if count > 0 && acc / (count as f64) < -0.5 {
            return Ok(DetectedBranch::Mixed);
        }
    }
    Ok(DetectedBranch::Undetermined)
}

/// Run every statistical check that applies to the table's scheme.
pub fn certify(table: &ProbabilityTable, u: &Operator, tol: f64) -> Result<CertificationReport> {
    if !(tol > 0.0) {
        return Err(Error::InvalidArgument(format!("tolerance {tol} must be positive")));
    }
    let spec = *table.spec();
    let needed: Vec<usize> = match spec.scheme {
        Scheme::AlmostDi => rows(&spec, 0, 0).chain(rows(&spec, 1, 0)).collect(),
        Scheme::Di => (0..spec.n_y())
            .flat_map(|y| rows(&spec, 0, y).collect::<Vec<_>>())
            .chain(rows(&spec, 1, 0))
            .collect(),
    };
    table.require(needed)?;
    let checks = match spec.scheme {
        Scheme::AlmostDi => {
            let mut c = check_step1_almost_di(table, tol)?;
            c.extend(check_step2_almost_di(table, u, tol)?);
            c
        }
        Scheme::Di => {
            let mut c = check_step1_di(table, tol)?;
            c.extend(check_step2_di(table, tol)?);
            c.extend(check_step3_di(table, u, tol)?);
            c
        }
    };
    let branch = detect_branch_from_table(table)?;
    Ok(CertificationReport::new(spec, checks, branch))
}

/// Statistical checks on the realization's Born table, plus operator-level
/// extraction rows when the statistics pass. The branch is read from the
/// operators.
pub fn certify_realization(real: &Realization, u: &Operator, tol: f64) -> Result<CertificationReport> {
    real.validate()?;
    let table = born_table(real)?;
    let mut report = certify(&table, u, tol)?;
    let branch = extraction::detect_branch(real)?;
    report.set_branch(branch);
    let stats_ok = report.checks.iter().all(|c| c.pass);
    let known = match branch {
        DetectedBranch::Plus => Some(Branch::Plus),
        DetectedBranch::Minus => Some(Branch::Minus),
        _ => None,
    };
    match (stats_ok, known) {
        (true, Some(b)) => match extraction::extract_frames(real) {
            Ok(frames) => {
                let rows = extraction::extraction_checks(real, &frames, u, b, tol)?;
                Ok(report.with_operator_checks(rows))
            }
            Err(Error::NotCertified(msg)) => Ok(report.with_operator_checks(vec![Check::failed(
                "extract.frames",
                0.0,
                tol,
                msg,
            )])),
            Err(e) => Err(e),
        },
        (false, _) => Ok(report.with_operator_note("extraction skipped: statistical checks failed")),
        (true, None) => Ok(report.with_operator_note(format!("extraction skipped: branch {branch}"))),
    }
}

/// `e = 0` conditions only (no target gate needed).
pub fn certify_e0(table: &ProbabilityTable, tol: f64) -> Result<CertificationReport> {
    let spec = *table.spec();
    let checks = match spec.scheme {
        Scheme::AlmostDi => check_step1_almost_di(table, tol)?,
        Scheme::Di => {
            let mut c = check_step1_di(table, tol)?;
            c.extend(check_step2_di(table, tol)?);
            c
        }
    };
    let branch = detect_branch_from_table(table)?;
    Ok(CertificationReport::new(spec, checks, branch))
}

/// Settings the certifier reads: all `e = 0` rows, and the `y = ⊥` rows at
/// `e = 1`.
pub fn consumed_by_certifier(s: &crate::network::Setting) -> bool {
    s.e == 0 || s.y == LInput::Perp
}
