use nalgebra::DMatrixView;

use crate::error::{Error, Result};
use crate::primitives::{digits_of, parity_sign};
use crate::tensor::{
    apply_local_in_place, c, eigh, kron, spectral_map, Matrix, Operator, SiteDims, StateVector,
    C64,
};

use super::table::ZERO_PROB;
use super::{ProbabilityTable, Realization};

/// Binary projector `(𝟙 + (−1)^bit·O)/2`.
fn outcome_projector(obs: &Operator, bit: u8) -> Matrix {
    let d = obs.dim();
    (Matrix::identity(d, d) + obs.matrix() * c(parity_sign(bit), 0.)) * c(0.5, 0.)
}

/// Shared per-realization data for the table kernel.
struct Kernel<'a> {
    real: &'a Realization,
    dims: SiteDims,
    d_a: usize,
    rest: usize,
    /// `a_proj[x][a]`: product projector on all A sites.
    a_proj: Vec<Vec<Matrix>>,
    abar: Vec<usize>,
}

impl<'a> Kernel<'a> {
    fn new(real: &'a Realization) -> Result<Self> {
        let dims = real.global_dims()?;
        let n = real.n;
        let d_a: usize = dims.as_slice()[..n].iter().product();
        let rest = dims.total() / d_a;
        let n_x = 3usize.pow(n as u32);
        let mut a_proj = Vec::with_capacity(n_x);
        for x in 0..n_x {
            let xs = digits_of(x, n, 3);
            let mut per_a = Vec::with_capacity(1 << n);
            for a in 0..1usize << n {
                let bits = digits_of(a, n, 2);
                let factors: Vec<Operator> = (0..n)
                    .map(|i| {
                        let obs = &real.observables[i][xs[i] as usize];
                        Operator::single_site(outcome_projector(obs, bits[i]))
                    })
                    .collect::<Result<_>>()?;
                per_a.push(kron(&factors)?.into_matrix());
            }
            a_proj.push(per_a);
        }
        Ok(Self {
            real,
            dims,
            d_a,
            rest,
            a_proj,
            abar: real.abar_sites(),
        })
    }

    /// Flat amplitudes of the state after Eve's action for input `e`.
    fn state_for(&self, e: u8) -> Result<Vec<C64>> {
        let psi = self.real.global_state()?;
        let mut amps = psi.as_slice().to_vec();
        if e == 1 {
            apply_local_in_place(&mut amps, &self.dims, self.real.v.matrix(), &self.real.eve_sites())?;
        }
        Ok(amps)
    }

    /// `σ[a', a] = Σ_b Φ[a', b]·conj(Ψ[a, b])`, transposed for the dot product.
    fn sigma_t(&self, phi: &[C64], psi_conj: &[C64]) -> Matrix {
        let phi_m = DMatrixView::from_slice(phi, self.rest, self.d_a);
        let psi_m = DMatrixView::from_slice(psi_conj, self.rest, self.d_a);
        // (Φᵀ·Ψ*)ᵀ = Ψ*ᵀ·Φ
        psi_m.tr_mul(&phi_m)
    }

    /// Record `p(a | x)` for every `(x, a)` at fixed `(e, y, r, l)`.
    fn fill(
        &self,
        table: &mut ProbabilityTable,
        phi: &[C64],
        psi_conj: &[C64],
        e: usize,
        y: usize,
        r: usize,
        l: usize,
    ) {
        let spec = *table.spec();
        let st = self.sigma_t(phi, psi_conj);
        for (x, per_a) in self.a_proj.iter().enumerate() {
            let s = spec.setting_index_raw(x, e, y);
            for (a, proj) in per_a.iter().enumerate() {
                let p = proj.dot(&st).re;
                table.set_raw(s, spec.outcome_index_raw(a, r, l), p);
            }
        }
    }
}

/// Exact probability table of a realization.
///
/// Eve's unitary is applied to the source state for `e = 1`, which gives the
/// Heisenberg form `V†·(L-side operator)·V` for all statistics.
pub fn born_table(real: &Realization) -> Result<ProbabilityTable> {
    real.validate()?;
    let spec = real.spec()?;
    let k = Kernel::new(real)?;
    let mut table = ProbabilityTable::empty(spec);
    let n = real.n;
    let m_mats: Vec<&Matrix> = real.measurement.iter().map(Operator::matrix).collect();

    for e in 0..2u8 {
        let psi = k.state_for(e)?;
        let psi_conj: Vec<C64> = psi.iter().map(|z| z.conj()).collect();
        // Depth-first over repeater outcomes; each stack level holds the
        // state after the first `i` repeaters have been projected.
        let n_rep = if real.is_di() { n } else { 0 };
        let mut stack: Vec<Vec<C64>> = vec![psi.clone()];
        let mut r_digits = vec![0u8; n_rep];
        let n_r = spec.n_r();
        for r in 0..n_r {
            let digits = digits_of(r, n_rep, 4);
            // first level that differs from the previous r
            let start = if r == 0 {
                0
            } else {
                (0..n_rep).find(|&i| digits[i] != r_digits[i]).unwrap_or(n_rep)
            };
            stack.truncate(start + 1);
            for (i, &d) in digits.iter().enumerate().skip(start) {
                let mut next = stack[i].clone();
                let sites = real.repeater_sites(i);
                apply_local_in_place(
                    &mut next,
                    &k.dims,
                    real.repeaters[i][d as usize].matrix(),
                    &sites,
                )?;
                stack.push(next);
            }
            r_digits = digits;
            let after_r = stack.last().expect("non-empty stack");

            // y = ⊥: joint measurement.
            for (l, m) in m_mats.iter().enumerate() {
                let mut phi = after_r.clone();
                apply_local_in_place(&mut phi, &k.dims, m, &k.abar)?;
                k.fill(&mut table, &phi, &psi_conj, e as usize, 0, r, l);
            }

            if real.is_di() {
                for y in 0..1usize << n {
                    let ys = digits_of(y, n, 2);
                    box_tree(&k, after_r, &ys, 0, 0, &mut |phi, l| {
                        k.fill(&mut table, phi, &psi_conj, e as usize, 1 + y, r, l);
                    })?;
                }
            }
        }
    }
    Ok(table)
}

/// Apply L's binary projectors subnet by subnet, calling `leaf` with the
/// resulting vector and the packed outcome bits.
fn box_tree(
    k: &Kernel<'_>,
    amps: &[C64],
    ys: &[u8],
    i: usize,
    bits: usize,
    leaf: &mut dyn FnMut(&[C64], usize),
) -> Result<()> {
    if i == ys.len() {
        leaf(amps, bits);
        return Ok(());
    }
    let obs = &k.real.b_observables[i][ys[i] as usize];
    for bit in 0..2u8 {
        let mut next = amps.to_vec();
        apply_local_in_place(&mut next, &k.dims, &outcome_projector(obs, bit), &[k.abar[i]])?;
        box_tree(k, &next, ys, i + 1, (bits << 1) | bit as usize, leaf)?;
    }
    Ok(())
}

/// Post-measurement state. Pure unless a non-rank-one repeater element
/// leaves the remaining sites mixed.
#[derive(Clone, Debug, PartialEq)]
pub enum ConditionalState {
    Pure(StateVector),
    Mixed(Operator),
}

impl ConditionalState {
    pub fn density(&self) -> Operator {
        match self {
            Self::Pure(v) => v.projector(),
            Self::Mixed(rho) => rho.clone(),
        }
    }

    pub fn pure(&self) -> Option<&StateVector> {
        match self {
            Self::Pure(v) => Some(v),
            Self::Mixed(_) => None,
        }
    }
}

/// Purity threshold on the top eigenvalue of a conditional density.
const PURE_TOL: f64 = 1e-12;

/// State after Eve's action for input `e`, optionally conditioned on the
/// repeater outcomes `r` (DI only). Without `r` the state lives on all
/// sites; with `r` the repeater wires are traced out, leaving A… then Ā….
pub fn conditional_state(
    real: &Realization,
    e: u8,
    r: Option<&[u8]>,
) -> Result<(ConditionalState, f64)> {
    real.validate()?;
    if e > 1 {
        return Err(Error::InvalidArgument(format!("e = {e} not in 0..=1")));
    }
    let dims = real.global_dims()?;
    let mut psi = real.global_state()?;
    if e == 1 {
        psi = psi.apply_local(real.v.matrix(), &real.eve_sites())?;
    }
    let Some(r) = r else {
        return Ok((ConditionalState::Pure(psi), 1.0));
    };
    if !real.is_di() {
        return Err(Error::InvalidArgument(
            "repeater outcomes exist only in the DI scheme".into(),
        ));
    }
    if r.len() != real.n || r.iter().any(|&v| v > 3) {
        return Err(Error::InvalidArgument(format!("invalid repeater outcome {r:?}")));
    }
    let mut amps = psi.as_slice().to_vec();
    for (i, &ri) in r.iter().enumerate() {
        let root = spectral_map(real.repeaters[i][ri as usize].matrix(), |x| {
            c(x.max(0.0).sqrt(), 0.)
        });
        apply_local_in_place(&mut amps, &dims, &root, &real.repeater_sites(i))?;
    }
    let post = StateVector::new(amps, dims)?;
    let prob = post.norm().powi(2);
    if prob < ZERO_PROB {
        return Err(Error::ZeroProbability(format!("repeater outcome {r:?}")));
    }
    let mut keep = real.a_sites();
    keep.extend(real.abar_sites());
    let rho = post.reduced_density(&keep)?.scale_real(1.0 / prob);
    let (values, vectors) = eigh(rho.matrix());
    let top = *values.last().expect("non-empty spectrum");
    if top >= 1.0 - PURE_TOL {
        let col = vectors.column(values.len() - 1).into_owned();
        let v = StateVector::from_dvector(col, rho.dims().clone())?;
        Ok((ConditionalState::Pure(fix_phase(&v)), prob))
    } else {
        Ok((ConditionalState::Mixed(rho), prob))
    }
}

/// Unnormalized reduced density on `keep` after the L-side event: repeater
/// outcomes fixed where `r[i]` is set, and L's joint outcome `l` if given.
/// Returns the density and the event probability (its trace).
pub fn event_density(
    real: &Realization,
    e: u8,
    r: &[Option<u8>],
    l: Option<usize>,
    keep: &[usize],
) -> Result<(Operator, f64)> {
    let dims = real.global_dims()?;
    let mut psi = real.global_state()?;
    if e == 1 {
        psi = psi.apply_local(real.v.matrix(), &real.eve_sites())?;
    }
    let mut amps = psi.as_slice().to_vec();
    let root = |m: &Operator| spectral_map(m.matrix(), |x| c(x.max(0.0).sqrt(), 0.));
    for (i, ri) in r.iter().enumerate() {
        if let Some(ri) = ri {
            let elem = real
                .repeaters
                .get(i)
                .and_then(|rep| rep.get(*ri as usize))
                .ok_or_else(|| Error::InvalidArgument(format!("no repeater element {i}:{ri}")))?;
            apply_local_in_place(&mut amps, &dims, &root(elem), &real.repeater_sites(i))?;
        }
    }
    if let Some(l) = l {
        let m = real
            .measurement
            .get(l)
            .ok_or_else(|| Error::InvalidArgument(format!("no measurement element {l}")))?;
        apply_local_in_place(&mut amps, &dims, &root(m), &real.abar_sites())?;
    }
    let post = StateVector::new(amps, dims)?;
    let rho = post.reduced_density(keep)?;
    let p = rho.trace().re;
    Ok((rho, p))
}

/// Rotate the global phase so the largest amplitude is real and positive.
pub(crate) fn fix_phase(v: &StateVector) -> StateVector {
    let big = v
        .as_slice()
        .iter()
        .copied()
        .max_by(|a, b| a.norm().total_cmp(&b.norm()))
        .unwrap_or(c(1., 0.));
    if big.norm() == 0.0 {
        return v.clone();
    }
    v.scale(big.conj() / big.norm())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::network::{reference_realization, Condition, Scheme};
    use crate::primitives::{gate, ghz_state, Branch, GateSpec, GhzIndex, NamedGate, SettingSymbol};

    fn id(n: usize) -> Operator {
        Operator::identity(SiteDims::qubits(n))
    }

    #[test]
    fn reference_tables_are_normalized() {
        for scheme in [Scheme::AlmostDi, Scheme::Di] {
            let u = gate(&GateSpec::Named(NamedGate::Cz), 2).unwrap();
            let r = reference_realization(2, &u, Branch::Plus, scheme).unwrap();
            let t = born_table(&r).unwrap();
            assert!(t.is_complete());
            assert!(t.normalization_deviation() < 1e-12);
            assert!(t.min_entry() > -1e-14);
        }
    }

    #[test]
    fn l_marginals_are_uniform() {
        let r = reference_realization(2, &id(2), Branch::Plus, Scheme::AlmostDi).unwrap();
        let t = born_table(&r).unwrap();
        for l in 0..4 {
            let p = t.probability(0, None, &Condition::l(l)).unwrap();
            assert!((p - 0.25).abs() < 1e-12);
        }
    }

    #[test]
    fn swapped_l_distribution_is_uniform() {
        let r = reference_realization(2, &id(2), Branch::Plus, Scheme::Di).unwrap();
        let t = born_table(&r).unwrap();
        let r0 = Condition::none().with_r_zero(2);
        let p_r0 = t.probability(0, None, &r0).unwrap();
        assert!((p_r0 - 1.0 / 16.0).abs() < 1e-12);
        for l in 0..4 {
            let p = t.probability(0, None, &Condition::l(l).with_r_zero(2)).unwrap();
            assert!((p / p_r0 - 0.25).abs() < 1e-12);
        }
    }

    #[test]
    fn xx_and_yy_correlators_on_phi_00() {
        let r = reference_realization(2, &id(2), Branch::Plus, Scheme::AlmostDi).unwrap();
        let t = born_table(&r).unwrap();
        let xx = t
            .correlator(0, &[SettingSymbol::T1, SettingSymbol::S1], None, &Condition::l(0), true)
            .unwrap();
        assert!((xx - 1.0).abs() < 1e-12);
        let yy = t
            .correlator(0, &[SettingSymbol::S2, SettingSymbol::S2], None, &Condition::l(0), true)
            .unwrap();
        assert!((yy + 1.0).abs() < 1e-12);
    }

    #[test]
    fn swapping_produces_product_of_pairs() {
        let r = reference_realization(2, &id(2), Branch::Plus, Scheme::Di).unwrap();
        let (state, p) = conditional_state(&r, 0, Some(&[0, 0])).unwrap();
        assert!((p - 1.0 / 16.0).abs() < 1e-12);
        let v = state.pure().expect("pure").clone();
        // sites A0 A1 Ā0 Ā1 → reorder to (A0 Ā0)(A1 Ā1)
        let v = v.permute(&[0, 2, 1, 3]).unwrap();
        let phi = ghz_state(&GhzIndex::from_int(2, 0).unwrap());
        let target = kron([&phi, &phi]).unwrap();
        assert!((crate::tensor::fidelity(&v, &target).unwrap() - 1.0).abs() < 1e-12);
    }

    #[test]
    fn unconditioned_state_is_source_state() {
        let r = reference_realization(2, &id(2), Branch::Plus, Scheme::AlmostDi).unwrap();
        let (state, p) = conditional_state(&r, 0, None).unwrap();
        assert_eq!(p, 1.0);
        assert_eq!(state.pure().unwrap(), &r.global_state().unwrap());
    }

    #[test]
    fn impossible_repeater_outcome_errors() {
        let mut r = reference_realization(2, &id(2), Branch::Plus, Scheme::Di).unwrap();
        // Computational-basis repeater for subnet 0 on a φ⁺ ⊗ φ⁺ input still
        // gives every outcome; zero out the source overlap instead.
        let zero = StateVector::basis(SiteDims::qubits(2), 0).unwrap();
        r.sources[0] = zero.clone();
        r.sources[2] = zero;
        r.repeaters[0] = (0..4)
            .map(|k| StateVector::basis(SiteDims::qubits(2), k).unwrap().projector())
            .collect();
        assert!(matches!(
            conditional_state(&r, 0, Some(&[3, 0])),
            Err(Error::ZeroProbability(_))
        ));
    }
}
