use std::f64::consts::FRAC_1_SQRT_2;

use serde::Serialize;

use crate::error::{Error, Result};
use crate::primitives::SettingSymbol;

use super::BellFunctional;

/// Deterministic maximum of a functional and the first strategy reaching it.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct ClassicalBound {
    pub value: f64,
    /// `strategy[p][s]` is party `p`'s ±1 answer to raw setting `s`.
    pub strategy: Vec<Vec<i8>>,
}

/// Enumeration cap on the number of ±1 variables (2^24 strategies).
const MAX_BITS: usize = 24;

fn symbol_value(s: SettingSymbol, v: &[f64]) -> f64 {
    match s {
        SettingSymbol::S0 => v[0],
        SettingSymbol::S1 => v[1],
        SettingSymbol::S2 | SettingSymbol::T2 => v[2],
        SettingSymbol::T0 => (v[0] - v[1]) * FRAC_1_SQRT_2,
        SettingSymbol::T1 => (v[0] + v[1]) * FRAC_1_SQRT_2,
        SettingSymbol::ID => 1.0,
    }
}

/// Maximum over all deterministic ±1 strategies. Rotated symbols are
/// evaluated from the underlying answers, not treated as free variables.
pub fn classical_bound(f: &BellFunctional) -> Result<ClassicalBound> {
    let widths: Vec<usize> = f.parties().iter().map(|p| p.n_settings()).collect();
    let bits: usize = widths.iter().sum();
    if bits > MAX_BITS {
        return Err(Error::InvalidArgument(format!(
            "{bits} deterministic variables exceed the enumeration cap"
        )));
    }
    let mut best: Option<(f64, u64)> = None;
    let mut vals: Vec<Vec<f64>> = widths.iter().map(|&w| vec![1.0; w]).collect();
    for code in 0..1u64 << bits {
        let mut k = 0;
        for pv in vals.iter_mut() {
            for v in pv.iter_mut() {
                *v = if (code >> k) & 1 == 0 { 1.0 } else { -1.0 };
                k += 1;
            }
        }
        let value: f64 = f
            .terms()
            .iter()
            .map(|t| {
                t.coeff
                    * t.symbols
                        .iter()
                        .zip(&vals)
                        .map(|(s, v)| symbol_value(*s, v))
                        .product::<f64>()
            })
            .sum();
        if best.is_none_or(|(b, _)| value > b) {
            best = Some((value, code));
        }
    }
    let (value, code) = best.expect("at least one strategy");
    let mut k = 0;
    let strategy = widths
        .iter()
        .map(|&w| {
            (0..w)
                .map(|_| {
                    let v = if (code >> k) & 1 == 0 { 1 } else { -1 };
                    k += 1;
                    v
                })
                .collect()
        })
        .collect();
    Ok(ClassicalBound { value, strategy })
}
