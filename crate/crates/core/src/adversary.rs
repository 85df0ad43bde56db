//! Realization transforms: statistics-preserving disguises (dilation,
//! conjugation, GHZ-diagonal phases) and attacks that should be caught.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::bell::random_hermitian;
use crate::certify::certify;
use crate::error::{Error, Result};
use crate::extraction::effective_measurement;
use crate::network::{born_table, fix_phase, ProbabilityTable, Realization};
use crate::primitives::haar_unitary;
use crate::tensor::{c, eigh, exp_i_hermitian, Matrix, Operator, SiteDims, StateVector, C64};

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct DilateOptions {
    pub junk_dim: usize,
    pub seed: u64,
    /// Apply a seeded local unitary on every enlarged site.
    pub rotate: bool,
}

/// `dilate_with` with local rotations enabled.
pub fn dilate(real: &Realization, junk_dim: usize, seed: u64) -> Result<Realization> {
    dilate_with(
        real,
        &DilateOptions {
            junk_dim,
            seed,
            rotate: true,
        },
    )
}

fn random_state(dim: usize, rng: &mut ChaCha8Rng) -> Vec<C64> {
    let v: Vec<C64> = (0..dim)
        .map(|_| {
            let re: f64 = StandardNormal.sample(rng);
            let im: f64 = StandardNormal.sample(rng);
            c(re, im)
        })
        .collect();
    let norm = v.iter().map(|z| z.norm_sqr()).sum::<f64>().sqrt();
    v.into_iter().map(|z| z / norm).collect()
}

/// Every site becomes (original ⊗ junk); each source gains a seeded random
/// pure junk state; every device acts as identity on junk; then each site is
/// rotated by a seeded local unitary applied consistently to all devices.
pub fn dilate_with(real: &Realization, opts: &DilateOptions) -> Result<Realization> {
    real.validate()?;
    let j = opts.junk_dim;
    if j == 0 {
        return Err(Error::InvalidArgument("junk dimension must be positive".into()));
    }
    let dims = real.global_dims()?;
    let d = dims.as_slice();
    let rotations: Vec<Matrix> = d
        .iter()
        .enumerate()
        .map(|(s, &ds)| {
            if opts.rotate {
                haar_unitary(ds * j, opts.seed.wrapping_mul(1000).wrapping_add(s as u64 + 1))
            } else {
                Matrix::identity(ds * j, ds * j)
            }
        })
        .collect();
    let mut rng = ChaCha8Rng::seed_from_u64(opts.seed ^ 0x5eed_0f_7a11);

    let mut out = real.clone();
    for (k, src) in real.sources.iter().enumerate() {
        let [s1, s2] = real.source_sites(k);
        let junk = StateVector::new(random_state(j * j, &mut rng), SiteDims::new(vec![j, j])?)?;
        let junk = fix_phase(&junk);
        let joint = crate::tensor::kron([src, &junk])?.permute(&[0, 2, 1, 3])?;
        let rot = rotations[s1].kronecker(&rotations[s2]);
        let amps = rot * joint.amplitudes();
        out.sources[k] = StateVector::from_dvector(amps, SiteDims::new(vec![d[s1] * j, d[s2] * j])?)?;
    }

    let lift = |op: &Operator, sites: &[usize]| -> Result<Operator> {
        let mut inner = Vec::with_capacity(2 * sites.len());
        for &s in sites {
            inner.push(d[s]);
            inner.push(j);
        }
        let orig: Vec<usize> = (0..sites.len()).map(|k| 2 * k).collect();
        let raw = Operator::new(op.matrix().clone(), SiteDims::new(sites.iter().map(|&s| d[s]).collect())?)?;
        let big = raw.embed(&orig, &SiteDims::new(inner)?)?;
        let rot = sites
            .iter()
            .skip(1)
            .fold(rotations[sites[0]].clone(), |acc, &s| acc.kronecker(&rotations[s]));
        let m = &rot * big.matrix() * rot.adjoint();
        Operator::new(m, SiteDims::new(sites.iter().map(|&s| d[s] * j).collect())?)
    };

    for i in 0..real.n {
        for o in out.observables[i].iter_mut() {
            *o = lift(o, &[real.a_site(i)])?;
        }
        if real.is_di() {
            for o in out.b_observables[i].iter_mut() {
                *o = lift(o, &[real.abar_site(i)])?;
            }
            for o in out.repeaters[i].iter_mut() {
                *o = lift(o, &real.repeater_sites(i))?;
            }
        }
    }
    let abar = real.abar_sites();
    for m in out.measurement.iter_mut() {
        *m = lift(m, &abar)?;
    }
    out.v = lift(&real.v, &real.eve_sites())?;
    Ok(out)
}

/// Entrywise complex conjugate of every state and operator. The Born table
/// is unchanged and the branch flips.
pub fn conjugate(real: &Realization) -> Realization {
    let conj_all = |v: &Vec<Vec<Operator>>| -> Vec<Vec<Operator>> {
        v.iter().map(|ops| ops.iter().map(Operator::conj).collect()).collect()
    };
    Realization {
        scheme: real.scheme,
        n: real.n,
        branch: real.branch.flipped(),
        sources: real.sources.iter().map(StateVector::conj).collect(),
        observables: conj_all(&real.observables),
        b_observables: conj_all(&real.b_observables),
        measurement: real.measurement.iter().map(Operator::conj).collect(),
        repeaters: conj_all(&real.repeaters),
        v: real.v.conj(),
    }
}

/// `V ← P·V` with `P = Σ_l e^{iθ_l} E_l`, where `E_l` is the measurement
/// Eve's output feeds (teleported for DI).
pub fn gauge_phase(real: &Realization, thetas: &[f64]) -> Result<Realization> {
    let eff = effective_measurement(real)?;
    if thetas.len() != eff.len() {
        return Err(Error::InvalidArgument(format!(
            "{} phases for {} outcomes",
            thetas.len(),
            eff.len()
        )));
    }
    let dim = real.v.dim();
    let mut p = Matrix::zeros(dim, dim);
    for (e, &t) in eff.iter().zip(thetas) {
        p += e.matrix() * C64::from_polar(1.0, t);
    }
    let p = Operator::new(p, real.v.dims().clone())?;
    let deviation = p.unitarity_deviation();
    if deviation > 1e-9 {
        return Err(Error::InvalidArgument(format!(
            "phase operator is not unitary ({deviation:.3e}); measurement not projective"
        )));
    }
    let mut out = real.clone();
    out.v = p.compose(&real.v)?;
    Ok(out)
}

/// Seeded Hermitian with unit spectral norm.
pub fn random_unit_hermitian(dims: &SiteDims, seed: u64) -> Result<Operator> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let h = random_hermitian(dims.total(), &mut rng);
    let (values, _) = eigh(&h);
    let norm = values.iter().map(|v| v.abs()).fold(0.0, f64::max);
    Operator::new(h * c(1.0 / norm, 0.), dims.clone())
}

/// `V ← V · exp(iεH)` for a seeded unit-norm Hermitian `H`.
pub fn perturb(real: &Realization, eps: f64, seed: u64) -> Result<Realization> {
    let h = random_unit_hermitian(real.v.dims(), seed)?;
    let mut out = real.clone();
    out.v = real.v.compose(&exp_i_hermitian(&h, eps))?;
    Ok(out)
}

/// Device swaps that leave the network outside the certified class.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "component", rename_all = "kebab-case")]
pub enum Tamper {
    /// Exchange two elements of L's joint measurement.
    SwapOutcomes { a: usize, b: usize },
    /// Subnet's repeater measures in the computational basis.
    ComputationalRepeater { subnet: usize },
    /// Negate one party's third observable.
    FlipY { party: usize },
}

pub fn tamper(real: &Realization, kind: Tamper) -> Result<Realization> {
    let mut out = real.clone();
    match kind {
        Tamper::SwapOutcomes { a, b } => {
            let n = out.measurement.len();
            if a >= n || b >= n {
                return Err(Error::InvalidArgument(format!("outcomes {a}, {b} not below {n}")));
            }
            out.measurement.swap(a, b);
        }
        Tamper::ComputationalRepeater { subnet } => {
            if !real.is_di() || subnet >= real.n {
                return Err(Error::InvalidArgument(format!("no repeater for subnet {subnet}")));
            }
            let dims = real.repeaters[subnet][0].dims().clone();
            let d = dims.total();
            if d != 4 {
                return Err(Error::InvalidArgument(
                    "computational repeater needs qubit wires".into(),
                ));
            }
            out.repeaters[subnet] = (0..4)
                .map(|r| {
                    let mut m = Matrix::zeros(d, d);
                    m[(r, r)] = c(1., 0.);
                    Operator::new(m, dims.clone())
                })
                .collect::<Result<_>>()?;
        }
        Tamper::FlipY { party } => {
            let obs = out
                .observables
                .get_mut(party)
                .ok_or_else(|| Error::InvalidArgument(format!("no party {party}")))?;
            obs[2] = obs[2].scale_real(-1.0);
        }
    }
    Ok(out)
}

/// One step of an adversary script.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum Attack {
    Dilate {
        junk_dim: usize,
        seed: u64,
        #[serde(default = "default_true")]
        rotate: bool,
    },
    Conjugate,
    #[serde(alias = "gauge-phase")]
    Gauge {
        thetas: Vec<f64>,
    },
    Perturb {
        epsilon: f64,
        seed: u64,
    },
    Tamper {
        #[serde(flatten)]
        target: Tamper,
    },
    /// Table-level: mix the Born table with the uniform table.
    WhiteNoise {
        weight: f64,
    },
}

fn default_true() -> bool {
    true
}

/// A sequence of attacks. Realization steps apply in order; white-noise
/// steps act on the resulting table.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct AdversarySpec {
    pub steps: Vec<Attack>,
}

#[derive(Deserialize)]
#[serde(untagged)]
enum SpecFile {
    Steps { steps: Vec<Attack> },
    List(Vec<Attack>),
    Single(Attack),
}

impl AdversarySpec {
    pub fn from_json(s: &str) -> Result<Self> {
        let parsed: SpecFile = serde_json::from_str(s).map_err(|e| Error::Parse(e.to_string()))?;
        Ok(Self {
            steps: match parsed {
                SpecFile::Steps { steps } | SpecFile::List(steps) => steps,
                SpecFile::Single(a) => vec![a],
            },
        })
    }

    pub fn apply(&self, real: &Realization) -> Result<Realization> {
        let mut cur = real.clone();
        for step in &self.steps {
            cur = match step {
                Attack::Dilate {
                    junk_dim,
                    seed,
                    rotate,
                } => dilate_with(
                    &cur,
                    &DilateOptions {
                        junk_dim: *junk_dim,
                        seed: *seed,
                        rotate: *rotate,
                    },
                )?,
                Attack::Conjugate => conjugate(&cur),
                Attack::Gauge { thetas } => gauge_phase(&cur, thetas)?,
                Attack::Perturb { epsilon, seed } => {
                    if *epsilon < 0.0 {
                        return Err(Error::InvalidArgument(format!("epsilon {epsilon} is negative")));
                    }
                    perturb(&cur, *epsilon, *seed)?
                }
                Attack::Tamper { target } => tamper(&cur, *target)?,
                Attack::WhiteNoise { .. } => cur,
            };
        }
        Ok(cur)
    }

    /// Born table of the attacked realization with any white noise mixed in.
    pub fn table(&self, real: &Realization) -> Result<(Realization, ProbabilityTable)> {
        let attacked = self.apply(real)?;
        let mut table = born_table(&attacked)?;
        for step in &self.steps {
            if let Attack::WhiteNoise { weight } = step {
                if !(0.0..=1.0).contains(weight) {
                    return Err(Error::InvalidArgument(format!("noise weight {weight} outside [0, 1]")));
                }
                table = table.mix(&ProbabilityTable::uniform(*table.spec()), *weight)?;
            }
        }
        Ok((attacked, table))
    }
}

/// Largest certification residual of `V·exp(iεH)` for each `ε`.
pub fn perturbation_sweep(
    real: &Realization,
    u: &Operator,
    eps: &[f64],
    seed: u64,
) -> Result<Vec<(f64, f64)>> {
    eps.iter()
        .map(|&e| {
            let t = born_table(&perturb(real, e, seed)?)?;
            let rep = certify(&t, u, 1.0)?;
            Ok((e, rep.max_residual))
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::certify::DEFAULT_TOL;
    use crate::network::{reference_realization, Scheme};
    use crate::primitives::{gate, Branch, GateSpec, NamedGate};

    fn cnot_ref(scheme: Scheme) -> (Operator, Realization) {
        let u = gate(&GateSpec::Named(NamedGate::Cnot), 2).unwrap();
        let r = reference_realization(2, &u, Branch::Plus, scheme).unwrap();
        (u, r)
    }

    #[test]
    fn trivial_dilation_is_identity() {
        let (_, r) = cnot_ref(Scheme::AlmostDi);
        let opts = DilateOptions {
            junk_dim: 1,
            seed: 3,
            rotate: false,
        };
        let d = dilate_with(&r, &opts).unwrap();
        assert!(d.v.max_abs_diff(&r.v) < 1e-15);
        assert!(d.sources[0].max_abs_diff(&r.sources[0]) < 1e-15);
    }

    #[test]
    fn dilation_preserves_statistics() {
        let (_, r) = cnot_ref(Scheme::AlmostDi);
        let d = dilate(&r, 2, 7).unwrap();
        d.validate().unwrap();
        let diff = born_table(&d).unwrap().max_abs_diff(&born_table(&r).unwrap());
        assert!(diff < 1e-12, "{diff}");
    }

    #[test]
    fn conjugation_preserves_statistics_and_flips_branch() {
        let (_, r) = cnot_ref(Scheme::Di);
        let c = conjugate(&r);
        assert_eq!(c.branch, Branch::Minus);
        assert!(born_table(&c).unwrap().max_abs_diff(&born_table(&r).unwrap()) < 1e-13);
    }

    #[test]
    fn gauge_phase_keeps_almost_di_table() {
        let (_, r) = cnot_ref(Scheme::AlmostDi);
        let g = gauge_phase(&r, &[0.3, -1.1, 2.0, 0.7]).unwrap();
        assert!(g.v.max_abs_diff(&r.v) > 0.1);
        assert!(born_table(&g).unwrap().max_abs_diff(&born_table(&r).unwrap()) < 1e-13);
    }

    #[test]
    fn perturbation_is_small_and_unitary() {
        let (_, r) = cnot_ref(Scheme::AlmostDi);
        let p = perturb(&r, 1e-3, 1).unwrap();
        assert!(p.v.is_unitary(1e-12));
        let diff = p.v.max_abs_diff(&r.v);
        assert!(diff > 0.0 && diff <= 1.1e-3, "{diff}");
    }

    #[test]
    fn tampering_is_caught() {
        let (u, r) = cnot_ref(Scheme::Di);
        for kind in [
            Tamper::SwapOutcomes { a: 0, b: 1 },
            Tamper::ComputationalRepeater { subnet: 1 },
            Tamper::FlipY { party: 1 },
        ] {
            let t = born_table(&tamper(&r, kind).unwrap()).unwrap();
            assert!(!certify(&t, &u, DEFAULT_TOL).unwrap().is_certified(), "{kind:?}");
        }
    }

    #[test]
    fn spec_file_forms() {
        let one = AdversarySpec::from_json(r#"{"kind":"conjugate"}"#).unwrap();
        assert_eq!(one.steps, vec![Attack::Conjugate]);
        let many = AdversarySpec::from_json(
            r#"{"steps":[{"kind":"dilate","junk_dim":2,"seed":1},{"kind":"white-noise","weight":0.1}]}"#,
        )
        .unwrap();
        assert_eq!(
            many.steps[0],
            Attack::Dilate {
                junk_dim: 2,
                seed: 1,
                rotate: true
            }
        );
        let t = AdversarySpec::from_json(
            r#"[{"kind":"tamper","component":"flip-y","party":1},{"kind":"gauge","thetas":[0,1,2,3]}]"#,
        )
        .unwrap();
        assert_eq!(
            t.steps[0],
            Attack::Tamper {
                target: Tamper::FlipY { party: 1 }
            }
        );
        let json = serde_json::to_string(&t).unwrap();
        assert_eq!(AdversarySpec::from_json(&json).unwrap(), t);
        assert!(AdversarySpec::from_json(r#"{"kind":"nope"}"#).is_err());
    }
}
