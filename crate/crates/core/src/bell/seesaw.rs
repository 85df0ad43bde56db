use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::Serialize;

use crate::error::{Error, Result};
use crate::tensor::{c, eigh, polar_matrix, Matrix, Operator, DEFAULT_ZERO_TOL};

use super::{bell_operator, BellFunctional};

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct SeesawOptions {
    pub site_dim: usize,
    pub restarts: usize,
    pub max_iter: usize,
    pub stall_tol: f64,
    pub seed: u64,
}

impl Default for SeesawOptions {
    fn default() -> Self {
        Self {
            site_dim: 2,
            restarts: 8,
            max_iter: 500,
            stall_tol: 1e-10,
            seed: 0,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct SeesawResult {
    /// Best value over all restarts (a lower bound on the quantum maximum).
    pub value: f64,
    /// Whether the best restart stalled before the iteration cap.
    pub converged: bool,
    pub iterations: usize,
    /// Value after each iteration of the best restart.
    pub history: Vec<f64>,
    pub restart_values: Vec<f64>,
}

pub(crate) fn random_hermitian(dim: usize, rng: &mut ChaCha8Rng) -> Matrix {
    let g = Matrix::from_fn(dim, dim, |_, _| {
        let re: f64 = StandardNormal.sample(rng);
        let im: f64 = StandardNormal.sample(rng);
        c(re, im)
    });
    (&g + g.adjoint()) * c(0.5, 0.)
}

fn single(m: Matrix) -> Operator {
    Operator::single_site(m).expect("square matrix")
}

/// Alternating maximization of the Bell operator: top eigenvector for the
/// state, then each observable in turn replaced by the sign of its
/// effective operator. Every step is an ascent step, so the value history
/// of a restart is nondecreasing.
pub fn seesaw_max(f: &BellFunctional, opts: &SeesawOptions) -> Result<SeesawResult> {
    if opts.site_dim == 0 || opts.restarts == 0 {
        return Err(Error::InvalidArgument("site_dim and restarts must be positive".into()));
    }
    let d = opts.site_dim;
    let mut rng = ChaCha8Rng::seed_from_u64(opts.seed);
    let mut best: Option<SeesawResult> = None;
    let mut restart_values = Vec::with_capacity(opts.restarts);

    for _ in 0..opts.restarts {
        let mut obs: Vec<Vec<Operator>> = f
            .parties()
            .iter()
            .map(|p| {
                (0..p.n_settings())
                    .map(|_| single(polar_matrix(&random_hermitian(d, &mut rng), DEFAULT_ZERO_TOL)))
                    .collect()
            })
            .collect();
        let mut history = Vec::new();
        let mut converged = false;
        for _ in 0..opts.max_iter {
            let b = bell_operator(f, &obs)?;
            let (values, vectors) = eigh(b.matrix());
            let value = *values.last().expect("non-empty spectrum");
            let psi = vectors.column(values.len() - 1).into_owned();
            if let Some(&prev) = history.last() {
                if value - prev < opts.stall_tol {
                    history.push(value.max(prev));
                    converged = true;
                    break;
                }
            }
            history.push(value);

            for p in 0..obs.len() {
                for s in 0..obs[p].len() {
                    let expval = |o: &Vec<Vec<Operator>>| -> Result<f64> {
                        let b = bell_operator(f, o)?;
                        Ok(psi.dotc(&(b.matrix() * &psi)).re)
                    };
                    let mut trial = obs.clone();
                    trial[p][s] = single(Matrix::zeros(d, d));
                    let base = expval(&trial)?;
                    // ⟨ψ|B(A)|ψ⟩ = base + Σ_ij A_ij g_ij, read off entry by entry.
                    let mut g = Matrix::zeros(d, d);
                    for i in 0..d {
                        for j in 0..d {
                            let mut e = Matrix::zeros(d, d);
                            e[(i, j)] = c(1., 0.);
                            trial[p][s] = single(e.clone());
                            let re = expval(&trial)? - base;
                            e[(i, j)] = c(0., 1.);
                            trial[p][s] = single(e);
                            let im = expval(&trial)? - base;
                            // A_ij g_ij with A_ij = 1 gives re, A_ij = i gives im.
                            g[(j, i)] = c(re, -im);
                        }
                    }
                    let h = (&g + g.adjoint()) * c(0.5, 0.);
                    obs[p][s] = single(polar_matrix(&h, DEFAULT_ZERO_TOL));
                }
            }
        }
        let value = *history.last().unwrap_or(&f64::NEG_INFINITY);
        restart_values.push(value);
        if best.as_ref().is_none_or(|b| value > b.value) {
            best = Some(SeesawResult {
                value,
                converged,
                iterations: history.len(),
                history,
                restart_values: Vec::new(),
            });
        }
    }
    let mut out = best.expect("at least one restart");
    out.restart_values = restart_values;
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::bell::{functional_I, functional_K};
    use crate::primitives::GhzIndex;

    #[test]
    fn reaches_quantum_value_for_i00() {
        let f = functional_I(&GhzIndex::from_int(2, 0).unwrap());
        let r = seesaw_max(&f, &SeesawOptions::default()).unwrap();
        assert!(r.value >= 3.0 - 1e-6, "{}", r.value);
        assert!(r.value <= 3.0 + 1e-6);
    }

    #[test]
    fn reaches_two_for_k() {
        let f = functional_K(2, 0, [0, 0]).unwrap();
        let r = seesaw_max(&f, &SeesawOptions::default()).unwrap();
        assert!(r.value >= 2.0 - 1e-6 && r.value <= 2.0 + 1e-6, "{}", r.value);
    }

    #[test]
    fn history_is_nondecreasing() {
        let f = functional_I(&GhzIndex::from_int(2, 3).unwrap());
        let opts = SeesawOptions {
            restarts: 3,
            seed: 11,
            ..SeesawOptions::default()
        };
        let r = seesaw_max(&f, &opts).unwrap();
        for w in r.history.windows(2) {
            assert!(w[1] >= w[0] - 1e-12, "{w:?}");
        }
        assert_eq!(r.restart_values.len(), 3);
    }

    #[test]
    fn deterministic_given_seed() {
        let f = functional_K(3, 2, [1, 1]).unwrap();
        let opts = SeesawOptions {
            restarts: 2,
            seed: 5,
            ..SeesawOptions::default()
        };
        assert_eq!(seesaw_max(&f, &opts).unwrap(), seesaw_max(&f, &opts).unwrap());
    }
}
