use crate::error::{Error, Result};
use crate::primitives::{
    ghz_basis, ref_b_observables, ref_observables, Branch, GhzIndex,
};
use crate::tensor::{eigh, kron, Operator, SiteDims, StateVector};

use super::{ScenarioSpec, Scheme};

const NORM_TOL: f64 = 1e-10;
const OP_TOL: f64 = 1e-10;

/// One concrete network instance.
///
/// `sources` holds two-site pure states: for `AlmostDi` source `i` lives on
/// (A_i, Ā_i); for `Di` sources `0..N` live on (A_i, R_{i,1}) and sources
/// `N..2N` on (R_{i,2}, Ā_i). `v` acts on the Ā wires (`AlmostDi`) or the
/// R_{·,1} wires (`Di`), in subnet order. `measurement[l]` acts on all Ā
/// wires; `repeaters[i][r]` on (R_{i,1}, R_{i,2}).
#[derive(Clone, Debug, PartialEq)]
pub struct Realization {
    pub scheme: Scheme,
    pub n: usize,
    pub branch: Branch,
    pub sources: Vec<StateVector>,
    pub observables: Vec<Vec<Operator>>,
    pub b_observables: Vec<Vec<Operator>>,
    pub measurement: Vec<Operator>,
    pub repeaters: Vec<Vec<Operator>>,
    pub v: Operator,
}

impl Realization {
    pub fn spec(&self) -> Result<ScenarioSpec> {
        ScenarioSpec::new(self.scheme, self.n)
    }

    pub fn is_di(&self) -> bool {
        self.scheme == Scheme::Di
    }

    pub fn n_sites(&self) -> usize {
        if self.is_di() {
            4 * self.n
        } else {
            2 * self.n
        }
    }

    pub fn a_site(&self, i: usize) -> usize {
        i
    }

    pub fn abar_site(&self, i: usize) -> usize {
        self.n_sites() - self.n + i
    }

    /// (R_{i,1}, R_{i,2}) global sites.
    pub fn repeater_sites(&self, i: usize) -> [usize; 2] {
        [self.n + i, 2 * self.n + i]
    }

    pub fn a_sites(&self) -> Vec<usize> {
        (0..self.n).collect()
    }

    pub fn abar_sites(&self) -> Vec<usize> {
        (0..self.n).map(|i| self.abar_site(i)).collect()
    }

    pub fn r1_sites(&self) -> Vec<usize> {
        (0..self.n).map(|i| self.n + i).collect()
    }

    pub fn r2_sites(&self) -> Vec<usize> {
        (0..self.n).map(|i| 2 * self.n + i).collect()
    }

    /// Sites Eve's unitary acts on.
    pub fn eve_sites(&self) -> Vec<usize> {
        if self.is_di() {
            self.r1_sites()
        } else {
            self.abar_sites()
        }
    }

    pub fn n_sources(&self) -> usize {
        if self.is_di() {
            2 * self.n
        } else {
            self.n
        }
    }

    /// Global sites of source `k`, in the source's own site order.
    pub fn source_sites(&self, k: usize) -> [usize; 2] {
        let n = self.n;
        match (self.scheme, k < n) {
            (Scheme::AlmostDi, _) => [k, n + k],
            (Scheme::Di, true) => [k, n + k],
            (Scheme::Di, false) => [2 * n + (k - n), 3 * n + (k - n)],
        }
    }

    /// Global site of position `j` in kron(sources) order.
    fn kron_order(&self) -> Vec<usize> {
        (0..self.n_sources())
            .flat_map(|k| self.source_sites(k))
            .collect()
    }

    pub fn global_dims(&self) -> Result<SiteDims> {
        let order = self.kron_order();
        let mut dims = vec![0usize; order.len()];
        for (k, src) in self.sources.iter().enumerate() {
            let d = src.dims().as_slice();
            if d.len() != 2 {
                return Err(Error::InvalidRealization(format!(
                    "source {k} has {} sites, expected 2",
                    d.len()
                )));
            }
            dims[order[2 * k]] = d[0];
            dims[order[2 * k + 1]] = d[1];
        }
        SiteDims::new(dims)
    }

    /// Joint state of all sources in global site order.
    pub fn global_state(&self) -> Result<StateVector> {
        let joint = kron(&self.sources)?;
        let order = self.kron_order();
        // perm[g] = kron position holding global site g
        let mut perm = vec![0usize; order.len()];
        for (pos, &g) in order.iter().enumerate() {
            perm[g] = pos;
        }
        joint.permute(&perm)
    }

    /// Check every structural and physical invariant.
    pub fn validate(&self) -> Result<()> {
        let n = self.n;
        let bad = |msg: String| Err(Error::InvalidRealization(msg));
        if n < 2 {
            return bad(format!("N = {n} below 2"));
        }
        if self.sources.len() != self.n_sources() {
            return bad(format!(
                "{} sources, expected {}",
                self.sources.len(),
                self.n_sources()
            ));
        }
        for (k, s) in self.sources.iter().enumerate() {
            let dev = (s.norm() - 1.0).abs();
            if dev > NORM_TOL {
                return bad(format!("source {k} not normalized (|norm - 1| = {dev:.3e})"));
            }
        }
        let dims = self.global_dims()?;
        let d = dims.as_slice();

        if self.observables.len() != n {
            return bad(format!("{} observable sets, expected {n}", self.observables.len()));
        }
        for (i, obs) in self.observables.iter().enumerate() {
            if obs.len() != 3 {
                return bad(format!("party {i} has {} observables, expected 3", obs.len()));
            }
            for (x, a) in obs.iter().enumerate() {
                check_involution(a, d[self.a_site(i)], &format!("observable A[{i}][{x}]"))?;
            }
        }

        let d_l: usize = self.abar_sites().iter().map(|&s| d[s]).product();
        if self.measurement.len() != 1 << n {
            return bad(format!(
                "{} measurement elements, expected {}",
                self.measurement.len(),
                1 << n
            ));
        }
        check_povm(&self.measurement, d_l, "L measurement")?;

        if self.is_di() {
            if self.b_observables.len() != n {
                return bad(format!("{} B sets, expected {n}", self.b_observables.len()));
            }
            for (i, obs) in self.b_observables.iter().enumerate() {
                if obs.len() != 2 {
                    return bad(format!("subnet {i} has {} B observables, expected 2", obs.len()));
                }
                for (y, b) in obs.iter().enumerate() {
                    check_involution(b, d[self.abar_site(i)], &format!("observable B[{i}][{y}]"))?;
                }
            }
            if self.repeaters.len() != n {
                return bad(format!("{} repeaters, expected {n}", self.repeaters.len()));
            }
            for (i, rep) in self.repeaters.iter().enumerate() {
                if rep.len() != 4 {
                    return bad(format!("repeater {i} has {} elements, expected 4", rep.len()));
                }
                let [s1, s2] = self.repeater_sites(i);
                check_povm(rep, d[s1] * d[s2], &format!("repeater {i}"))?;
            }
        } else if !self.b_observables.is_empty() || !self.repeaters.is_empty() {
            return bad("almost-DI realization carries DI-only devices".into());
        }

        let d_eve: usize = self.eve_sites().iter().map(|&s| d[s]).product();
        if self.v.dim() != d_eve {
            return bad(format!(
                "V has dimension {}, Eve's wires have {d_eve}",
                self.v.dim()
            ));
        }
        let deviation = self.v.unitarity_deviation();
        if deviation > OP_TOL {
            return Err(Error::NotUnitary { deviation });
        }
        Ok(())
    }
}

fn check_involution(a: &Operator, dim: usize, what: &str) -> Result<()> {
    if a.dim() != dim {
        return Err(Error::InvalidRealization(format!(
            "{what} has dimension {}, site has {dim}",
            a.dim()
        )));
    }
    let deviation = a.hermiticity_deviation();
    if deviation > OP_TOL {
        return Err(Error::NotHermitian { deviation });
    }
    let sq = (a * a).max_abs_diff(&Operator::identity(a.dims().clone()));
    if sq > OP_TOL {
        return Err(Error::InvalidRealization(format!(
            "{what} does not square to the identity (deviation {sq:.3e})"
        )));
    }
    Ok(())
}

fn check_povm(elements: &[Operator], dim: usize, what: &str) -> Result<()> {
    let mut sum = Operator::zeros(elements[0].dims().clone());
    for (k, m) in elements.iter().enumerate() {
        if m.dim() != dim {
            return Err(Error::InvalidRealization(format!(
                "{what} element {k} has dimension {}, expected {dim}",
                m.dim()
            )));
        }
        let deviation = m.hermiticity_deviation();
        if deviation > OP_TOL {
            return Err(Error::NotHermitian { deviation });
        }
        let (values, _) = eigh(m.matrix());
        if values[0] < -OP_TOL {
            return Err(Error::InvalidRealization(format!(
                "{what} element {k} has negative eigenvalue {:.3e}",
                values[0]
            )));
        }
        sum = &sum + m;
    }
    let dev = sum.max_abs_diff(&Operator::identity(sum.dims().clone()));
    if dev > OP_TOL {
        return Err(Error::InvalidRealization(format!(
            "{what} elements do not sum to the identity (deviation {dev:.3e})"
        )));
    }
    Ok(())
}

fn phi_plus() -> StateVector {
    crate::primitives::ghz_state(&GhzIndex::from_int(2, 0).expect("valid index"))
}

/// Ideal realization for target gate `u`: maximally entangled sources, the
/// standard observables, GHZ-basis `M_l`, Bell-basis repeaters, and
/// `V = U*` (branch plus) or `V = U` (branch minus).
pub fn reference_realization(
    n: usize,
    u: &Operator,
    branch: Branch,
    scheme: Scheme,
) -> Result<Realization> {
    if u.dim() != 1 << n {
        return Err(Error::DimensionMismatch(format!(
            "gate of dimension {} for N = {n}",
            u.dim()
        )));
    }
    let deviation = u.unitarity_deviation();
    if deviation > OP_TOL {
        return Err(Error::NotUnitary { deviation });
    }
    let v = match branch {
        Branch::Plus => u.conj(),
        Branch::Minus => u.clone(),
    }
    .with_dims(SiteDims::qubits(n))?;
    let di = scheme == Scheme::Di;
    let n_sources = if di { 2 * n } else { n };
    let real = Realization {
        scheme,
        n,
        branch,
        sources: vec![phi_plus(); n_sources],
        observables: (0..n).map(|i| ref_observables(i, branch).to_vec()).collect(),
        b_observables: if di {
            (0..n).map(|i| ref_b_observables(i).to_vec()).collect()
        } else {
            Vec::new()
        },
        measurement: ghz_basis(n)?.iter().map(StateVector::projector).collect(),
        repeaters: if di {
            let bell: Vec<Operator> = ghz_basis(2)?.iter().map(StateVector::projector).collect();
            vec![bell; n]
        } else {
            Vec::new()
        },
        v,
    };
    real.validate()?;
    Ok(real)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::primitives::{gate, GateSpec, NamedGate};

    fn id(n: usize) -> Operator {
        Operator::identity(SiteDims::qubits(n))
    }

    #[test]
    fn identity_reference_has_identity_v() {
        let r = reference_realization(2, &id(2), Branch::Plus, Scheme::AlmostDi).unwrap();
        assert_eq!(r.v, id(2));
    }

    #[test]
    fn branch_selects_conjugation() {
        let u = gate(&GateSpec::Random { seed: 2 }, 2).unwrap();
        let plus = reference_realization(2, &u, Branch::Plus, Scheme::AlmostDi).unwrap();
        let minus = reference_realization(2, &u, Branch::Minus, Scheme::AlmostDi).unwrap();
        assert_eq!(plus.v, u.conj());
        assert_eq!(minus.v, u);
    }

    #[test]
    fn di_layout() {
        let u = gate(&GateSpec::Named(NamedGate::Cnot), 2).unwrap();
        let r = reference_realization(2, &u, Branch::Plus, Scheme::Di).unwrap();
        assert_eq!(r.n_sites(), 8);
        assert_eq!(r.eve_sites(), vec![2, 3]);
        assert_eq!(r.abar_sites(), vec![6, 7]);
        assert_eq!(r.repeater_sites(1), [3, 5]);
        assert_eq!(r.source_sites(3), [5, 7]);
        assert_eq!(r.global_dims().unwrap().total(), 256);
    }

    #[test]
    fn global_state_places_pairs() {
        let r = reference_realization(2, &id(2), Branch::Plus, Scheme::AlmostDi).unwrap();
        let psi = r.global_state().unwrap();
        // φ⁺ on (A0, Ā0) and (A1, Ā1): marginal on (A0, Ā0) is pure.
        let rho = psi.reduced_density(&[0, 2]).unwrap();
        let target = phi_plus().projector();
        assert!(rho.max_abs_diff(&target) < 1e-15);
    }

    #[test]
    fn validate_catches_broken_devices() {
        let mut r = reference_realization(2, &id(2), Branch::Plus, Scheme::Di).unwrap();
        r.repeaters[0][0] = r.repeaters[0][1].clone();
        assert!(r.validate().is_err());

        let mut r = reference_realization(2, &id(2), Branch::Plus, Scheme::AlmostDi).unwrap();
        r.observables[1][0] = r.observables[1][0].scale_real(2.0);
        assert!(r.validate().is_err());

        let mut r = reference_realization(2, &id(2), Branch::Plus, Scheme::AlmostDi).unwrap();
        r.v = r.v.scale_real(0.5);
        assert!(matches!(r.validate(), Err(Error::NotUnitary { .. })));

        assert!(reference_realization(3, &id(2), Branch::Plus, Scheme::AlmostDi).is_err());
    }
}
