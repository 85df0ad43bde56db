//! Bell functionals of the protocol: the family `I_l` over the external
//! parties and the two-party `K` functionals of each subnet.

mod classical;
mod seesaw;

pub use classical::{classical_bound, ClassicalBound};
pub use seesaw::{seesaw_max, SeesawOptions, SeesawResult};
pub(crate) use seesaw::random_hermitian;

use std::collections::BTreeMap;
use std::fmt;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::network::{event_density, Condition, ProbabilityTable, Realization, ZERO_PROB};
use crate::primitives::{
    parity_sign, ref_b_observables, ref_observables, Branch, GhzIndex, SettingSymbol,
};
use crate::tensor::{kron, Operator};

/// A device a functional refers to: external party `A(i)` or L's binary box
/// for subnet `B(i)`.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Party {
    A(usize),
    B(usize),
}

impl Party {
    /// Number of raw settings of the device.
    pub fn n_settings(self) -> usize {
        match self {
            Self::A(_) => 3,
            Self::B(_) => 2,
        }
    }

    /// Parties allowed to carry tilde symbols.
    pub fn allows_tilde(self) -> bool {
        matches!(self, Self::A(0) | Self::B(1..))
    }
}

impl fmt::Display for Party {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Self::A(i) => write!(f, "A{i}"),
            Self::B(i) => write!(f, "B{i}"),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase")]
pub enum Label {
    I { l: Vec<u8> },
    K { subnet: usize, r: [u8; 2] },
    Custom { name: String },
}

impl fmt::Display for Label {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Self::I { l } => {
                write!(f, "I(")?;
                for b in l {
                    write!(f, "{b}")?;
                }
                write!(f, ")")
            }
            Self::K { subnet, r } => write!(f, "K({subnet},{}{})", r[0], r[1]),
            Self::Custom { name } => f.write_str(name),
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct Term {
    pub coeff: f64,
    /// One symbol per entry of [`BellFunctional::parties`].
    pub symbols: Vec<SettingSymbol>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct BellFunctional {
    n: usize,
    label: Label,
    parties: Vec<Party>,
    terms: Vec<Term>,
}

impl BellFunctional {
    pub fn new(n: usize, label: Label, parties: Vec<Party>, terms: Vec<Term>) -> Result<Self> {
        for p in &parties {
            let idx = match p {
                Party::A(i) | Party::B(i) => *i,
            };
            if idx >= n {
                return Err(Error::InvalidArgument(format!("party {p} out of range for N = {n}")));
            }
        }
        for t in &terms {
            if t.symbols.len() != parties.len() {
                return Err(Error::InvalidArgument(format!(
                    "term has {} symbols for {} parties",
                    t.symbols.len(),
                    parties.len()
                )));
            }
            for (p, s) in parties.iter().zip(&t.symbols) {
                if s.is_tilde() && !p.allows_tilde() {
                    return Err(Error::InvalidArgument(format!("symbol {s} not defined for {p}")));
                }
                if matches!(p, Party::B(_)) && matches!(s, SettingSymbol::S2 | SettingSymbol::T2) {
                    return Err(Error::InvalidArgument(format!("{p} has no third setting")));
                }
            }
        }
        Ok(Self {
            n,
            label,
            parties,
            terms,
        })
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn label(&self) -> &Label {
        &self.label
    }

    pub fn parties(&self) -> &[Party] {
        &self.parties
    }

    pub fn terms(&self) -> &[Term] {
        &self.terms
    }

    pub fn scaled(&self, factor: f64) -> Self {
        let mut out = self.clone();
        for t in &mut out.terms {
            t.coeff *= factor;
        }
        out
    }

    pub fn coefficient_sum(&self) -> f64 {
        self.terms.iter().map(|t| t.coeff).sum()
    }

    pub fn to_record(&self) -> FunctionalRecord {
        FunctionalRecord {
            label: self.label.to_string(),
            terms: self
                .terms
                .iter()
                .map(|t| TermRecord {
                    coeff: t.coeff,
                    parties: self
                        .parties
                        .iter()
                        .zip(&t.symbols)
                        .filter(|(_, s)| **s != SettingSymbol::ID)
                        .map(|(p, s)| (p.to_string(), *s))
                        .collect(),
                })
                .collect(),
        }
    }

    /// Per-term symbol vectors over all A parties and, if any B party is
    /// involved, over all B boxes (`ID` elsewhere).
    fn spread(&self, t: &Term) -> (Vec<SettingSymbol>, Option<Vec<SettingSymbol>>) {
        let mut a = vec![SettingSymbol::ID; self.n];
        let has_b = self.parties.iter().any(|p| matches!(p, Party::B(_)));
        let mut b = has_b.then(|| vec![SettingSymbol::ID; self.n]);
        for (p, s) in self.parties.iter().zip(&t.symbols) {
            match p {
                Party::A(i) => a[*i] = *s,
                Party::B(i) => {
                    if let Some(b) = b.as_mut() {
                        b[*i] = *s;
                    }
                }
            }
        }
        (a, b)
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FunctionalRecord {
    pub label: String,
    pub terms: Vec<TermRecord>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TermRecord {
    pub coeff: f64,
    pub parties: BTreeMap<String, SettingSymbol>,
}

/// `I_l` on N external parties.
///
/// Coefficients are matched to the GHZ-like state `φ_l` so that the
/// reference reaches `3(N−1)` for every `l`: `(−1)^{l₁}(N−1)` on the X-type
/// string, `(−1)^{l₁⊕l_i}` on the Z₁Z_i pairs, `−(−1)^{l_i}` on the
/// Y-bearing strings.
#[allow(non_snake_case)]
pub fn functional_I(l: &GhzIndex) -> BellFunctional {
    use SettingSymbol::*;
    let n = l.n();
    let parties: Vec<Party> = (0..n).map(Party::A).collect();
    let mut terms = Vec::with_capacity(2 * n - 1);

    let mut first = vec![S1; n];
    first[0] = T1;
    terms.push(Term {
        coeff: parity_sign(l.bit(0)) * (n - 1) as f64,
        symbols: first,
    });
    for i in 1..n {
        let mut s = vec![ID; n];
        s[0] = T0;
        s[i] = S0;
        terms.push(Term {
            coeff: parity_sign(l.bit(0) ^ l.bit(i)),
            symbols: s,
        });
    }
    for i in 1..n {
        let mut s = vec![S1; n];
        s[0] = S2;
        s[i] = S2;
        terms.push(Term {
            coeff: -parity_sign(l.bit(i)),
            symbols: s,
        });
    }
    BellFunctional::new(n, Label::I { l: l.bits().to_vec() }, parties, terms)
        .expect("well-formed by construction")
}

/// `K` for `subnet` and repeater outcome `r = (r₁, r₂)`. The rotated pair
/// sits on A for subnet 0 and on L's box for the others.
#[allow(non_snake_case)]
pub fn functional_K(n: usize, subnet: usize, r: [u8; 2]) -> Result<BellFunctional> {
    use SettingSymbol::*;
    if r.iter().any(|&b| b > 1) {
        return Err(Error::InvalidArgument(format!("repeater bits {r:?} not binary")));
    }
    let parties = vec![Party::A(subnet), Party::B(subnet)];
    let (x_pair, z_pair) = if subnet == 0 {
        (vec![T1, S1], vec![T0, S0])
    } else {
        (vec![S1, T1], vec![S0, T0])
    };
    let terms = vec![
        Term {
            coeff: parity_sign(r[0]),
            symbols: x_pair,
        },
        Term {
            coeff: parity_sign(r[0] ^ r[1]),
            symbols: z_pair,
        },
    ];
    BellFunctional::new(n, Label::K { subnet, r }, parties, terms)
}

/// All `I_l` functionals for `n` parties.
#[allow(non_snake_case)]
pub fn all_I(n: usize) -> Result<Vec<BellFunctional>> {
    Ok(GhzIndex::all(n)?.iter().map(functional_I).collect())
}

/// All `K` functionals for `n` subnets.
#[allow(non_snake_case)]
pub fn all_K(n: usize) -> Result<Vec<BellFunctional>> {
    let mut out = Vec::with_capacity(4 * n);
    for i in 0..n {
        for r in 0..4u8 {
            out.push(functional_K(n, i, [r >> 1, r & 1])?);
        }
    }
    Ok(out)
}

/// Value of `f` from table data at input `e`. With `normalize` the result
/// is conditioned on `cond`; otherwise it is the joint value (sum of signed
/// probabilities restricted to `cond`).
pub fn evaluate(
    f: &BellFunctional,
    table: &ProbabilityTable,
    e: u8,
    cond: &Condition,
    normalize: bool,
) -> Result<f64> {
    if table.spec().n != f.n {
        return Err(Error::DimensionMismatch(format!(
            "functional for N = {} on a table for N = {}",
            f.n,
            table.spec().n
        )));
    }
    let mut total = 0.0;
    for t in &f.terms {
        let (a, b) = f.spread(t);
        total += t.coeff * table.correlator(e, &a, b.as_deref(), cond, false)?;
    }
    if normalize {
        let y = f
            .parties
            .iter()
            .any(|p| matches!(p, Party::B(_)))
            .then(|| vec![None; f.n]);
        let p = table.probability(e, y.as_deref(), cond)?;
        if p < ZERO_PROB {
            return Err(Error::ZeroProbability(format!("{cond:?} at e = {e}")));
        }
        total /= p;
    }
    Ok(total)
}

/// Bell operator on the parties' spaces (in the functional's party order),
/// given each party's raw observables.
pub fn bell_operator(f: &BellFunctional, raw: &[Vec<Operator>]) -> Result<Operator> {
    if raw.len() != f.parties.len() {
        return Err(Error::InvalidArgument(format!(
            "{} observable sets for {} parties",
            raw.len(),
            f.parties.len()
        )));
    }
    let mut out: Option<Operator> = None;
    for t in &f.terms {
        let factors: Vec<Operator> = t
            .symbols
            .iter()
            .zip(raw)
            .map(|(s, obs)| s.realize(obs))
            .collect::<Result<_>>()?;
        let term = kron(&factors)?.scale_real(t.coeff);
        out = Some(match out {
            None => term,
            Some(acc) => &acc + &term,
        });
    }
    out.ok_or_else(|| Error::InvalidArgument("functional has no terms".into()))
}

/// Reference raw observables for each party of `f`.
pub fn reference_observables(f: &BellFunctional, branch: Branch) -> Vec<Vec<Operator>> {
    f.parties
        .iter()
        .map(|p| match p {
            Party::A(i) => ref_observables(*i, branch).to_vec(),
            Party::B(i) => ref_b_observables(*i).to_vec(),
        })
        .collect()
}

/// Operator-level value on a realization: the functional's parties are
/// mapped to the realization's devices (`A(i)` to the party's observables,
/// `B(i)` to L's binary observables) and evaluated on the state after input
/// `e`, conditioned on the repeater outcomes and L's joint outcome in
/// `cond`.
pub fn evaluate_on_realization(
    f: &BellFunctional,
    real: &Realization,
    e: u8,
    cond: &Condition,
) -> Result<f64> {
    let mut order: Vec<usize> = (0..f.parties.len()).collect();
    let site = |p: &Party| match p {
        Party::A(i) => real.a_site(*i),
        Party::B(i) => real.abar_site(*i),
    };
    order.sort_by_key(|&k| site(&f.parties[k]));
    let keep: Vec<usize> = order.iter().map(|&k| site(&f.parties[k])).collect();
    let raw: Vec<Vec<Operator>> = order
        .iter()
        .map(|&k| match f.parties[k] {
            Party::A(i) => real.observables[i].clone(),
            Party::B(i) => real.b_observables.get(i).cloned().unwrap_or_default(),
        })
        .collect();
    let permuted = BellFunctional {
        n: f.n,
        label: f.label.clone(),
        parties: order.iter().map(|&k| f.parties[k]).collect(),
        terms: f
            .terms
            .iter()
            .map(|t| Term {
                coeff: t.coeff,
                symbols: order.iter().map(|&k| t.symbols[k]).collect(),
            })
            .collect(),
    };
    let b = bell_operator(&permuted, &raw)?;
    let (rho, p) = event_density(real, e, &cond.r, cond.l, &keep)?;
    if p < ZERO_PROB {
        return Err(Error::ZeroProbability(format!("{cond:?} at e = {e}")));
    }
    Ok((b.matrix() * rho.matrix()).trace().re / p)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::network::{born_table, reference_realization, Scheme};
    use crate::tensor::SiteDims;

    fn id(n: usize) -> Operator {
        Operator::identity(SiteDims::qubits(n))
    }

    #[test]
    fn i_00_shape() {
        use SettingSymbol::*;
        let f = functional_I(&GhzIndex::from_int(2, 0).unwrap());
        let rec = f.to_record();
        assert_eq!(rec.label, "I(00)");
        let expected: Vec<(f64, Vec<SettingSymbol>)> =
            vec![(1.0, vec![T1, S1]), (1.0, vec![T0, S0]), (-1.0, vec![S2, S2])];
        for (t, (c, s)) in f.terms().iter().zip(expected) {
            assert_eq!(t.coeff, c);
            assert_eq!(t.symbols, s);
        }
    }

    #[test]
    fn i_n3_has_five_terms_and_leading_two() {
        let f = functional_I(&GhzIndex::from_int(3, 0).unwrap());
        assert_eq!(f.terms().len(), 5);
        assert_eq!(f.terms()[0].coeff, 2.0);
    }

    #[test]
    fn leading_sign_follows_first_bit() {
        let f0 = functional_I(&GhzIndex::new(vec![0, 0]).unwrap());
        let f1 = functional_I(&GhzIndex::new(vec![1, 0]).unwrap());
        assert_eq!(f1.terms()[0].coeff, -f0.terms()[0].coeff);
        assert_eq!(f1.terms()[1].coeff, -f0.terms()[1].coeff);
        assert_eq!(f1.terms()[2].coeff, f0.terms()[2].coeff);
    }

    #[test]
    fn k_shapes() {
        use SettingSymbol::*;
        let k = functional_K(2, 0, [0, 0]).unwrap();
        assert_eq!(k.terms()[0].symbols, vec![T1, S1]);
        assert_eq!(k.terms()[1].symbols, vec![T0, S0]);
        let k = functional_K(2, 1, [1, 0]).unwrap();
        assert_eq!(k.terms()[0].coeff, -1.0);
        assert_eq!(k.terms()[0].symbols, vec![S1, T1]);
        assert_eq!(k.terms()[1].coeff, -1.0);
        assert_eq!(k.terms()[1].symbols, vec![S0, T0]);
    }

    #[test]
    fn illegal_tilde_rejected() {
        let err = BellFunctional::new(
            2,
            Label::Custom { name: "bad".into() },
            vec![Party::A(1)],
            vec![Term {
                coeff: 1.0,
                symbols: vec![SettingSymbol::T0],
            }],
        );
        assert!(err.is_err());
    }

    #[test]
    fn reference_reaches_quantum_value_from_table() {
        for n in [2, 3] {
            let r = reference_realization(n, &id(n), Branch::Plus, Scheme::AlmostDi).unwrap();
            let t = born_table(&r).unwrap();
            for f in all_I(n).unwrap() {
                let Label::I { l } = f.label() else { unreachable!() };
                let l = GhzIndex::new(l.clone()).unwrap().to_int();
                let v = evaluate(&f, &t, 0, &Condition::l(l), true).unwrap();
                assert!((v - 3.0 * (n - 1) as f64).abs() < 1e-9, "{} -> {v}", f.label());
            }
        }
    }

    #[test]
    fn operator_and_table_values_agree() {
        let u = crate::primitives::gate(&crate::primitives::GateSpec::Random { seed: 1 }, 2).unwrap();
        let r = reference_realization(2, &u, Branch::Plus, Scheme::Di).unwrap();
        let t = born_table(&r).unwrap();
        for f in all_K(2).unwrap() {
            let Label::K { subnet, r: rb } = f.label().clone() else { unreachable!() };
            let mut rc = vec![None; 2];
            rc[subnet] = Some(2 * rb[0] + rb[1]);
            let cond = Condition::none().with_r(rc);
            let a = evaluate(&f, &t, 0, &cond, true).unwrap();
            let b = evaluate_on_realization(&f, &r, 0, &cond).unwrap();
            assert!((a - 2.0).abs() < 1e-9, "{} -> {a}", f.label());
            assert!((a - b).abs() < 1e-10);
        }
        let f = functional_I(&GhzIndex::from_int(2, 2).unwrap());
        let cond = Condition::l(2).with_r_zero(2);
        let a = evaluate(&f, &t, 1, &cond, true).unwrap();
        let b = evaluate_on_realization(&f, &r, 1, &cond).unwrap();
        assert!((a - b).abs() < 1e-10);
    }

    #[test]
    fn evaluation_is_linear_in_coefficients() {
        let r = reference_realization(2, &id(2), Branch::Minus, Scheme::AlmostDi).unwrap();
        let t = born_table(&r).unwrap();
        let f = functional_I(&GhzIndex::from_int(2, 1).unwrap());
        let v = evaluate(&f, &t, 1, &Condition::l(1), false).unwrap();
        let v3 = evaluate(&f.scaled(3.0), &t, 1, &Condition::l(1), false).unwrap();
        assert!((v3 - 3.0 * v).abs() < 1e-12);
    }

    #[test]
    fn identity_functional_gives_coefficient_sum() {
        let f = BellFunctional::new(
            2,
            Label::Custom { name: "ones".into() },
            vec![Party::A(0), Party::A(1)],
            vec![
                Term { coeff: 0.5, symbols: vec![SettingSymbol::ID; 2] },
                Term { coeff: 2.0, symbols: vec![SettingSymbol::ID; 2] },
            ],
        )
        .unwrap();
        let t = crate::network::ProbabilityTable::uniform(
            crate::network::ScenarioSpec::new(Scheme::AlmostDi, 2).unwrap(),
        );
        let v = evaluate(&f, &t, 0, &Condition::none(), true).unwrap();
        assert!((v - f.coefficient_sum()).abs() < 1e-15);
    }
}
