use std::io::{BufRead, Write};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::primitives::{digits_of, SettingSymbol};

use super::{LInput, Outcome, ScenarioSpec, Scheme, Setting};

/// Probabilities below this are treated as an impossible condition.
pub const ZERO_PROB: f64 = 1e-15;

/// Exact outcome distribution for every setting of one scenario.
///
/// Entries may be absent when a table is read from a partial file; checks
/// that need an absent row fail with [`Error::MissingSettings`].
#[derive(Clone, Debug, PartialEq)]
pub struct ProbabilityTable {
    spec: ScenarioSpec,
    probs: Vec<Option<f64>>,
}

/// Event an expectation is restricted to. `l` is L's joint outcome (only
/// meaningful with `y = ⊥`); `r[i]` fixes subnet `i`'s repeater outcome.
#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct Condition {
    pub l: Option<usize>,
    pub r: Vec<Option<u8>>,
}

impl Condition {
    pub fn none() -> Self {
        Self::default()
    }

    pub fn l(l: usize) -> Self {
        Self {
            l: Some(l),
            r: Vec::new(),
        }
    }

    pub fn with_r(mut self, r: Vec<Option<u8>>) -> Self {
        self.r = r;
        self
    }

    /// All repeaters at outcome 0.
    pub fn with_r_zero(self, n: usize) -> Self {
        self.with_r(vec![Some(0); n])
    }

    fn matches(&self, spec: &ScenarioSpec, r: usize, l: usize) -> bool {
        if self.l.is_some_and(|want| want != l) {
            return false;
        }
        if self.r.iter().all(Option::is_none) {
            return true;
        }
        let digits = digits_of(r, spec.n, 4);
        self.r
            .iter()
            .zip(&digits)
            .all(|(want, &got)| want.is_none_or(|w| w == got))
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TableHeader {
    pub scheme: Scheme,
    pub n: usize,
}

/// One serialized table entry.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TableRecord {
    pub x: Vec<u8>,
    pub e: u8,
    pub y: YField,
    pub a: Vec<u8>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub r: Option<Vec<u8>>,
    pub l: Vec<u8>,
    pub p: f64,
}

/// `"perp"` or a list of bits.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum YField {
    Sentinel(String),
    Bits(Vec<u8>),
}

impl From<&LInput> for YField {
    fn from(y: &LInput) -> Self {
        match y {
            LInput::Perp => Self::Sentinel("perp".into()),
            LInput::Binary(bits) => Self::Bits(bits.clone()),
        }
    }
}

impl TryFrom<&YField> for LInput {
    type Error = Error;

    fn try_from(y: &YField) -> Result<Self> {
        match y {
            YField::Sentinel(s) if s == "perp" => Ok(LInput::Perp),
            YField::Sentinel(s) => Err(Error::Parse(format!("unknown y value {s:?}"))),
            YField::Bits(bits) => Ok(LInput::Binary(bits.clone())),
        }
    }
}

impl ProbabilityTable {
    /// Table with every entry absent.
    pub fn empty(spec: ScenarioSpec) -> Self {
        Self {
            spec,
            probs: vec![None; spec.len()],
        }
    }

    pub fn zeros(spec: ScenarioSpec) -> Self {
        Self {
            spec,
            probs: vec![Some(0.0); spec.len()],
        }
    }

    /// Uniform distribution over outcomes for every setting.
    pub fn uniform(spec: ScenarioSpec) -> Self {
        let p = 1.0 / spec.n_outcomes() as f64;
        Self {
            spec,
            probs: vec![Some(p); spec.len()],
        }
    }

    pub fn spec(&self) -> &ScenarioSpec {
        &self.spec
    }

    pub fn raw(&self) -> &[Option<f64>] {
        &self.probs
    }

    pub(crate) fn flat_index(&self, setting: usize, outcome: usize) -> usize {
        setting * self.spec.n_outcomes() + outcome
    }

    pub fn get_raw(&self, setting: usize, outcome: usize) -> Option<f64> {
        self.probs[self.flat_index(setting, outcome)]
    }

    pub fn set_raw(&mut self, setting: usize, outcome: usize, p: f64) {
        let k = self.flat_index(setting, outcome);
        self.probs[k] = Some(p);
    }

    pub fn get(&self, setting: &Setting, outcome: &Outcome) -> Result<Option<f64>> {
        let s = self.spec.setting_index(setting)?;
        let o = self.spec.outcome_index(outcome)?;
        Ok(self.get_raw(s, o))
    }

    pub fn set(&mut self, setting: &Setting, outcome: &Outcome, p: f64) -> Result<()> {
        let s = self.spec.setting_index(setting)?;
        let o = self.spec.outcome_index(outcome)?;
        self.set_raw(s, o, p);
        Ok(())
    }

    fn row(&self, setting: usize) -> &[Option<f64>] {
        let w = self.spec.n_outcomes();
        &self.probs[setting * w..(setting + 1) * w]
    }

    fn row_complete(&self, setting: usize) -> bool {
        self.row(setting).iter().all(Option::is_some)
    }

    /// Settings with at least one absent entry.
    pub fn missing_settings(&self) -> Vec<Setting> {
        (0..self.spec.n_settings())
            .filter(|&s| !self.row_complete(s))
            .map(|s| self.spec.setting_at(s))
            .collect()
    }

    pub fn is_complete(&self) -> bool {
        self.probs.iter().all(Option::is_some)
    }

    /// Fail unless every listed setting row is complete.
    pub fn require(&self, settings: impl IntoIterator<Item = usize>) -> Result<()> {
        let mut missing: Vec<String> = settings
            .into_iter()
            .filter(|&s| !self.row_complete(s))
            .map(|s| self.spec.setting_at(s).to_string())
            .collect();
        missing.dedup();
        if missing.is_empty() {
            Ok(())
        } else {
            Err(Error::MissingSettings(missing))
        }
    }

    /// Largest `|Σ_o p(o|s) − 1|` over complete rows.
    pub fn normalization_deviation(&self) -> f64 {
        (0..self.spec.n_settings())
            .filter(|&s| self.row_complete(s))
            .map(|s| {
                let sum: f64 = self.row(s).iter().map(|p| p.unwrap_or(0.0)).sum();
                (sum - 1.0).abs()
            })
            .fold(0.0, f64::max)
    }

    pub fn min_entry(&self) -> f64 {
        self.probs.iter().flatten().copied().fold(f64::INFINITY, f64::min)
    }

    /// Largest entrywise difference; infinite when shapes or presence differ.
    pub fn max_abs_diff(&self, other: &ProbabilityTable) -> f64 {
        if self.spec != other.spec {
            return f64::INFINITY;
        }
        self.probs
            .iter()
            .zip(&other.probs)
            .map(|(a, b)| match (a, b) {
                (Some(a), Some(b)) => (a - b).abs(),
                (None, None) => 0.0,
                _ => f64::INFINITY,
            })
            .fold(0.0, f64::max)
    }

    /// `(1 − w)·self + w·other`.
    pub fn mix(&self, other: &ProbabilityTable, w: f64) -> Result<ProbabilityTable> {
        if self.spec != other.spec {
            return Err(Error::DimensionMismatch("mixing tables of different scenarios".into()));
        }
        let probs = self
            .probs
            .iter()
            .zip(&other.probs)
            .map(|(a, b)| Some((1.0 - w) * (*a)? + w * (*b)?))
            .collect();
        Ok(Self {
            spec: self.spec,
            probs,
        })
    }

    /// Restrict to rows accepted by `keep`; other rows become absent.
    pub fn filter_settings(&self, keep: impl Fn(&Setting) -> bool) -> ProbabilityTable {
        let mut out = Self::empty(self.spec);
        let w = self.spec.n_outcomes();
        for s in 0..self.spec.n_settings() {
            if keep(&self.spec.setting_at(s)) {
                out.probs[s * w..(s + 1) * w].copy_from_slice(self.row(s));
            }
        }
        out
    }

    /// `Σ sign · p` over outcomes matching `cond`, for the setting built from
    /// `x` and `y`. Parties with `x[i] = None` are marginalized (their raw
    /// setting is 0) and excluded from the sign; likewise L's binary parties
    /// with `y[i] = None`. `y = None` selects L's joint measurement.
    pub fn signed_sum(
        &self,
        e: u8,
        x: &[Option<u8>],
        y: Option<&[Option<u8>]>,
        cond: &Condition,
    ) -> Result<f64> {
        let spec = &self.spec;
        if x.len() != spec.n {
            return Err(Error::InvalidArgument(format!(
                "{} A settings for N = {}",
                x.len(),
                spec.n
            )));
        }
        if !cond.r.is_empty() && (!spec.is_di() || cond.r.len() != spec.n) {
            return Err(Error::InvalidArgument(
                "repeater condition does not match the scenario".into(),
            ));
        }
        let setting = Setting {
            x: x.iter().map(|v| v.unwrap_or(0)).collect(),
            e,
            y: match y {
                None => LInput::Perp,
                Some(bits) => {
                    if bits.len() != spec.n {
                        return Err(Error::InvalidArgument(format!(
                            "{} B settings for N = {}",
                            bits.len(),
                            spec.n
                        )));
                    }
                    if cond.l.is_some() {
                        return Err(Error::InvalidArgument(
                            "L's joint outcome cannot be fixed under binary inputs".into(),
                        ));
                    }
                    LInput::Binary(bits.iter().map(|v| v.unwrap_or(0)).collect())
                }
            },
        };
        let s = spec.setting_index(&setting)?;
        self.require([s])?;

        let n = spec.n;
        let a_mask = mask(x.iter().map(Option::is_some), n);
        let l_mask = y.map_or(0, |bits| mask(bits.iter().map(Option::is_some), n));
        let mut total = 0.0;
        for (o, p) in self.row(s).iter().enumerate() {
            let (a, r, l) = spec.outcome_parts(o);
            if !cond.matches(spec, r, l) {
                continue;
            }
            let parity = ((a & a_mask).count_ones() + (l & l_mask).count_ones()) & 1;
            let p = p.expect("row checked complete");
            total += if parity == 0 { p } else { -p };
        }
        Ok(total)
    }

    /// Probability of `cond` for the given L input at `e` (A settings 0).
    pub fn probability(&self, e: u8, y: Option<&[Option<u8>]>, cond: &Condition) -> Result<f64> {
        let x = vec![None; self.spec.n];
        // Keep L's raw inputs but drop them from the sign.
        match y {
            None => self.signed_sum(e, &x, None, cond),
            Some(bits) => {
                let setting: Vec<u8> = bits.iter().map(|v| v.unwrap_or(0)).collect();
                self.raw_probability(e, &x, &setting, cond)
            }
        }
    }

    fn raw_probability(&self, e: u8, x: &[Option<u8>], y: &[u8], cond: &Condition) -> Result<f64> {
        let spec = &self.spec;
        let setting = Setting {
            x: x.iter().map(|v| v.unwrap_or(0)).collect(),
            e,
            y: LInput::Binary(y.to_vec()),
        };
        let s = spec.setting_index(&setting)?;
        self.require([s])?;
        Ok(self
            .row(s)
            .iter()
            .enumerate()
            .filter(|(o, _)| {
                let (_, r, l) = spec.outcome_parts(*o);
                cond.matches(spec, r, l)
            })
            .map(|(_, p)| p.expect("row checked complete"))
            .sum())
    }

    /// Correlator of a symbol assignment. `b = None` selects L's joint
    /// measurement; otherwise `b[i]` is subnet `i`'s binary symbol (`ID`
    /// marginalizes). With `normalize` the sum is divided by the probability
    /// of `cond`.
    pub fn correlator(
        &self,
        e: u8,
        a: &[SettingSymbol],
        b: Option<&[SettingSymbol]>,
        cond: &Condition,
        normalize: bool,
    ) -> Result<f64> {
        let mut total = 0.0;
        for (wa, xs) in expand_product(a) {
            match b {
                None => total += wa * self.signed_sum(e, &xs, None, cond)?,
                Some(bs) => {
                    for (wb, ys) in expand_product(bs) {
                        if ys.iter().flatten().any(|&y| y > 1) {
                            return Err(Error::InvalidArgument(
                                "L's binary observables have settings 0 and 1 only".into(),
                            ));
                        }
                        total += wa * wb * self.signed_sum(e, &xs, Some(&ys), cond)?;
                    }
                }
            }
        }
        if normalize {
            let y0: Option<Vec<Option<u8>>> = b.map(|bs| vec![None; bs.len()]);
            let p = self.probability(e, y0.as_deref(), cond)?;
            if p < ZERO_PROB {
                return Err(Error::ZeroProbability(format!("{cond:?} at e = {e}")));
            }
            total /= p;
        }
        Ok(total)
    }

    pub fn write_jsonl<W: Write>(&self, mut w: W) -> Result<()> {
        let header = TableHeader {
            scheme: self.spec.scheme,
            n: self.spec.n,
        };
        writeln!(w, "{}", to_json(&header)?)?;
        for s in 0..self.spec.n_settings() {
            let setting = self.spec.setting_at(s);
            for o in 0..self.spec.n_outcomes() {
                let Some(p) = self.get_raw(s, o) else { continue };
                let outcome = self.spec.outcome_at(o);
                let rec = TableRecord {
                    x: setting.x.clone(),
                    e: setting.e,
                    y: YField::from(&setting.y),
                    a: outcome.a,
                    r: self.spec.is_di().then_some(outcome.r),
                    l: outcome.l,
                    p,
                };
                writeln!(w, "{}", to_json(&rec)?)?;
            }
        }
        Ok(())
    }

    pub fn read_jsonl<R: BufRead>(r: R) -> Result<Self> {
        let mut lines = r.lines().enumerate().filter(|(_, l)| {
            l.as_ref().map_or(true, |s| !s.trim().is_empty())
        });
        let (_, first) = lines
            .next()
            .ok_or_else(|| Error::Parse("empty table file".into()))?;
        let header: TableHeader = serde_json::from_str(&first?)
            .map_err(|e| Error::Parse(format!("line 1: {e}")))?;
        let spec = ScenarioSpec::new(header.scheme, header.n)?;
        let mut table = Self::empty(spec);
        for (k, line) in lines {
            let line = line?;
            let rec: TableRecord = serde_json::from_str(&line)
                .map_err(|e| Error::Parse(format!("line {}: {e}", k + 1)))?;
            let setting = Setting {
                x: rec.x,
                e: rec.e,
                y: LInput::try_from(&rec.y)?,
            };
            let outcome = Outcome {
                a: rec.a,
                r: rec.r.unwrap_or_default(),
                l: rec.l,
            };
            if !rec.p.is_finite() {
                return Err(Error::Parse(format!("line {}: non-finite probability", k + 1)));
            }
            table
                .set(&setting, &outcome, rec.p)
                .map_err(|e| Error::Parse(format!("line {}: {e}", k + 1)))?;
        }
        Ok(table)
    }
}

fn to_json<T: Serialize>(v: &T) -> Result<String> {
    serde_json::to_string(v).map_err(|e| Error::Parse(e.to_string()))
}

fn mask(present: impl Iterator<Item = bool>, n: usize) -> usize {
    present
        .enumerate()
        .filter(|(_, p)| *p)
        .map(|(i, _)| 1usize << (n - 1 - i))
        .sum()
}

/// Product expansion of per-party symbols into weighted raw settings.
pub(crate) fn expand_product(symbols: &[SettingSymbol]) -> Vec<(f64, Vec<Option<u8>>)> {
    let mut out = vec![(1.0, Vec::with_capacity(symbols.len()))];
    for s in symbols {
        let parts = s.expand();
        let mut next = Vec::with_capacity(out.len() * parts.len());
        for (w, prefix) in &out {
            for (pw, x) in &parts {
                let mut v = prefix.clone();
                v.push(*x);
                next.push((w * pw, v));
            }
        }
        out = next;
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    fn spec() -> ScenarioSpec {
        ScenarioSpec::new(Scheme::AlmostDi, 2).unwrap()
    }

    #[test]
    fn uniform_table_is_normalized() {
        let t = ProbabilityTable::uniform(spec());
        assert!(t.normalization_deviation() < 1e-15);
        let d = ProbabilityTable::uniform(ScenarioSpec::new(Scheme::Di, 2).unwrap());
        assert!(d.normalization_deviation() < 1e-12);
    }

    #[test]
    fn identity_correlator_is_one() {
        let t = ProbabilityTable::uniform(spec());
        let v = t
            .correlator(0, &[SettingSymbol::ID; 2], None, &Condition::none(), false)
            .unwrap();
        assert!((v - 1.0).abs() < 1e-15);
    }

    #[test]
    fn uniform_correlators_vanish() {
        let t = ProbabilityTable::uniform(spec());
        let v = t
            .correlator(1, &[SettingSymbol::T0, SettingSymbol::S2], None, &Condition::l(3), true)
            .unwrap();
        assert!(v.abs() < 1e-15);
    }

    #[test]
    fn missing_rows_are_reported() {
        let mut t = ProbabilityTable::uniform(spec());
        t.probs[5] = None;
        let missing = t.missing_settings();
        assert_eq!(missing.len(), 1);
        let err = t
            .signed_sum(0, &[None, None], None, &Condition::none())
            .unwrap_err();
        assert!(matches!(err, Error::MissingSettings(_)));
    }

    #[test]
    fn zero_probability_condition_errors() {
        let t = ProbabilityTable::zeros(spec());
        let err = t
            .correlator(0, &[SettingSymbol::S0; 2], None, &Condition::l(0), true)
            .unwrap_err();
        assert!(matches!(err, Error::ZeroProbability(_)));
    }

    #[test]
    fn jsonl_round_trip_is_bit_exact() {
        let mut t = ProbabilityTable::uniform(ScenarioSpec::new(Scheme::Di, 2).unwrap());
        t.set_raw(3, 17, 0.1 + 0.2);
        t.set_raw(7, 1, 1.0 / 3.0);
        let mut buf = Vec::new();
        t.write_jsonl(&mut buf).unwrap();
        let back = ProbabilityTable::read_jsonl(buf.as_slice()).unwrap();
        assert_eq!(back, t);
        let first_record = String::from_utf8(buf).unwrap().lines().nth(1).unwrap().to_string();
        assert!(first_record.contains("\"y\":\"perp\""));
        assert!(first_record.contains("\"r\":[0,0]"));
    }

    #[test]
    fn malformed_records_are_rejected() {
        let text = "{\"scheme\":\"almost-di\",\"n\":2}\n{\"x\":[0,0],\"e\":0,\"y\":\"perp\",\"a\":[0,2],\"l\":[0,0],\"p\":0.5}\n";
        assert!(matches!(
            ProbabilityTable::read_jsonl(text.as_bytes()),
            Err(Error::Parse(_))
        ));
        assert!(ProbabilityTable::read_jsonl("".as_bytes()).is_err());
    }

    #[test]
    fn mixing_interpolates() {
        let a = ProbabilityTable::uniform(spec());
        let b = ProbabilityTable::zeros(spec());
        let m = a.mix(&b, 0.25).unwrap();
        assert!((m.get_raw(0, 0).unwrap() - 0.75 / 16.0).abs() < 1e-18);
    }
}
