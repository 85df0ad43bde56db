//! Exact Born-rule simulation of the two network scenarios.
//!
//! * `AlmostDi`: N sources emit pairs (A_i, Ā_i); Eve's unitary acts on all
//!   Ā wires when `e = 1`; L performs the joint measurement `{M_l}` on them.
//! * `Di`: each subnet has two sources, (A_i, R_{i,1}) and (R_{i,2}, Ā_i).
//!   Eve acts on the R_{·,1} wires, a repeater measures (R_{i,1}, R_{i,2}),
//!   and L either measures `{M_l}` (`y = ⊥`) or one binary observable per Ā_i.
//!
//! Global site order is A… then R_{·,1}… then R_{·,2}… then Ā… (the R blocks
//! are absent for `AlmostDi`).

mod realization;
mod sim;
mod table;

pub use realization::{reference_realization, Realization};
pub use sim::{born_table, conditional_state, event_density, ConditionalState};
pub(crate) use sim::fix_phase;
pub use table::{Condition, ProbabilityTable, TableHeader, TableRecord, YField, ZERO_PROB};

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::primitives::{digits_of, int_of};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Scheme {
    AlmostDi,
    Di,
}

impl FromStr for Scheme {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "almost-di" | "almostdi" | "almost_di" => Ok(Self::AlmostDi),
            "di" => Ok(Self::Di),
            _ => Err(Error::Parse(format!("unknown scheme {s:?}"))),
        }
    }
}

impl fmt::Display for Scheme {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Self::AlmostDi => "almost-di",
            Self::Di => "di",
        })
    }
}

/// L's input: the joint measurement (`⊥`) or one binary setting per subnet.
#[derive(Clone, Debug, PartialEq, Eq, Hash)]
pub enum LInput {
    Perp,
    Binary(Vec<u8>),
}

impl fmt::Display for LInput {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Self::Perp => f.write_str("perp"),
            Self::Binary(bits) => write!(f, "{bits:?}"),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Hash)]
pub struct Setting {
    pub x: Vec<u8>,
    pub e: u8,
    pub y: LInput,
}

impl fmt::Display for Setting {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "x={:?} e={} y={}", self.x, self.e, self.y)
    }
}

/// `a` are the external parties' bits, `r` the repeater outcomes (0..4, DI
/// only, empty otherwise) and `l` L's bits.
#[derive(Clone, Debug, PartialEq, Eq, Hash)]
pub struct Outcome {
    pub a: Vec<u8>,
    pub r: Vec<u8>,
    pub l: Vec<u8>,
}

/// Shape of a probability table.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct ScenarioSpec {
    pub scheme: Scheme,
    pub n: usize,
}

impl ScenarioSpec {
    pub fn new(scheme: Scheme, n: usize) -> Result<Self> {
        if !(2..=4).contains(&n) {
            return Err(Error::InvalidArgument(format!("N = {n} outside 2..=4")));
        }
        Ok(Self { scheme, n })
    }

    pub fn is_di(&self) -> bool {
        self.scheme == Scheme::Di
    }

    pub fn n_x(&self) -> usize {
        3usize.pow(self.n as u32)
    }

    /// Number of L inputs; index 0 is `⊥`.
    pub fn n_y(&self) -> usize {
        if self.is_di() {
            1 + (1 << self.n)
        } else {
            1
        }
    }

    pub fn n_settings(&self) -> usize {
        2 * self.n_y() * self.n_x()
    }

    pub fn n_a(&self) -> usize {
        1 << self.n
    }

    pub fn n_r(&self) -> usize {
        if self.is_di() {
            1 << (2 * self.n)
        } else {
            1
        }
    }

    pub fn n_l(&self) -> usize {
        1 << self.n
    }

    pub fn n_outcomes(&self) -> usize {
        self.n_a() * self.n_r() * self.n_l()
    }

    pub fn len(&self) -> usize {
        self.n_settings() * self.n_outcomes()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn y_index(&self, y: &LInput) -> Result<usize> {
        match y {
            LInput::Perp => Ok(0),
            LInput::Binary(bits) => {
                if !self.is_di() {
                    return Err(Error::InvalidArgument(
                        "binary L inputs exist only in the DI scheme".into(),
                    ));
                }
                self.check_digits("y", bits, 2)?;
                Ok(1 + int_of(bits, 2))
            }
        }
    }

    pub fn y_at(&self, idx: usize) -> LInput {
        if idx == 0 {
            LInput::Perp
        } else {
            LInput::Binary(digits_of(idx - 1, self.n, 2))
        }
    }

    pub fn setting_index(&self, s: &Setting) -> Result<usize> {
        self.check_digits("x", &s.x, 3)?;
        if s.e > 1 {
            return Err(Error::InvalidArgument(format!("e = {} not in 0..=1", s.e)));
        }
        let y = self.y_index(&s.y)?;
        Ok(self.setting_index_raw(int_of(&s.x, 3), s.e as usize, y))
    }

    pub(crate) fn setting_index_raw(&self, x: usize, e: usize, y: usize) -> usize {
        (e * self.n_y() + y) * self.n_x() + x
    }

    pub fn setting_at(&self, idx: usize) -> Setting {
        let x = idx % self.n_x();
        let rest = idx / self.n_x();
        let y = rest % self.n_y();
        let e = rest / self.n_y();
        Setting {
            x: digits_of(x, self.n, 3),
            e: e as u8,
            y: self.y_at(y),
        }
    }

    pub fn outcome_index(&self, o: &Outcome) -> Result<usize> {
        self.check_digits("a", &o.a, 2)?;
        self.check_digits("l", &o.l, 2)?;
        let r = if self.is_di() {
            self.check_digits("r", &o.r, 4)?;
            int_of(&o.r, 4)
        } else {
            if !o.r.is_empty() {
                return Err(Error::InvalidArgument(
                    "repeater outcomes exist only in the DI scheme".into(),
                ));
            }
            0
        };
        Ok(self.outcome_index_raw(int_of(&o.a, 2), r, int_of(&o.l, 2)))
    }

    pub(crate) fn outcome_index_raw(&self, a: usize, r: usize, l: usize) -> usize {
        (a * self.n_r() + r) * self.n_l() + l
    }

    /// Split a flat outcome index into `(a, r, l)` integer parts.
    pub(crate) fn outcome_parts(&self, idx: usize) -> (usize, usize, usize) {
        let l = idx % self.n_l();
        let rest = idx / self.n_l();
        (rest / self.n_r(), rest % self.n_r(), l)
    }

    pub fn outcome_at(&self, idx: usize) -> Outcome {
        let (a, r, l) = self.outcome_parts(idx);
        Outcome {
            a: digits_of(a, self.n, 2),
            r: if self.is_di() {
                digits_of(r, self.n, 4)
            } else {
                Vec::new()
            },
            l: digits_of(l, self.n, 2),
        }
    }

    fn check_digits(&self, name: &str, digits: &[u8], radix: u8) -> Result<()> {
        if digits.len() != self.n {
            return Err(Error::InvalidArgument(format!(
                "{name} has {} entries, expected {}",
                digits.len(),
                self.n
            )));
        }
        if let Some(d) = digits.iter().find(|&&d| d >= radix) {
            return Err(Error::InvalidArgument(format!("{name} entry {d} not below {radix}")));
        }
        Ok(())
    }
}
