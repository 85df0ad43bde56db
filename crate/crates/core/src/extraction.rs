//! Operator-level extraction: local SWAP isometries built from the
//! regularized observables, the frames they induce, and checks of the
//! extracted state, measurements and unitary against the target gate.

use std::f64::consts::FRAC_1_SQRT_2;

use serde::Serialize;

use crate::certify::{certify_e0, Check, DetectedBranch};
use crate::error::{Error, Result};
use crate::network::{born_table, Realization, Scheme};
use crate::pauli::delta_set;
use crate::primitives::{ghz_basis, haar_unitary, ref_observable, Branch, SettingSymbol};
use crate::tensor::{
    c, polar_matrix, support_basis, Matrix, Operator, SiteDims, StateVector, C64,
    DEFAULT_ZERO_TOL,
};

/// Threshold for the support of Eve's reduced state.
pub const SUPPORT_THRESHOLD: f64 = 1e-10;

const PINV_TOL: f64 = 1e-10;

/// `(Z_r, X_r)` from a pair of ±1 observables. With `rotated` the inputs are
/// `(X ± Z)/√2` and are first combined back into `Z` and `X`.
pub fn regularize(a0: &Operator, a1: &Operator, rotated: bool) -> (Operator, Operator) {
    let (z, x) = if rotated {
        (
            (a0 - a1).scale_real(FRAC_1_SQRT_2),
            (a0 + a1).scale_real(FRAC_1_SQRT_2),
        )
    } else {
        (a0.clone(), a1.clone())
    };
    let fix = |o: Operator| {
        let h = o.hermitian_part();
        Operator::new(polar_matrix(h.matrix(), DEFAULT_ZERO_TOL), h.dims().clone())
            .expect("polar factor keeps the shape")
    };
    (fix(z), fix(x))
}

/// Partial SWAP circuit: ancilla in |0⟩, H, controlled-`Z_r`, H,
/// controlled-`X_r`. Returns the `2d × d` isometry with output index
/// `site·2 + ancilla`.
pub fn swap_isometry(z: &Operator, x: &Operator) -> Result<Matrix> {
    let d = z.dim();
    if x.dim() != d {
        return Err(Error::DimensionMismatch(format!(
            "Z_r of dimension {d}, X_r of dimension {}",
            x.dim()
        )));
    }
    let id = Matrix::identity(d, d);
    let plus = (&id + z.matrix()) * c(0.5, 0.);
    let minus = x.matrix() * (&id - z.matrix()) * c(0.5, 0.);
    let mut w = Matrix::zeros(2 * d, d);
    for s in 0..d {
        for col in 0..d {
            w[(2 * s, col)] = plus[(s, col)];
            w[(2 * s + 1, col)] = minus[(s, col)];
        }
    }
    Ok(w)
}

fn source_matrix(source: &StateVector) -> Result<Matrix> {
    let d = source.dims().as_slice();
    if d.len() != 2 {
        return Err(Error::InvalidDims(format!("source with {} sites", d.len())));
    }
    let amps = source.as_slice();
    Ok(Matrix::from_fn(d[0], d[1], |a, b| amps[a * d[1] + b]))
}

fn pinv(m: &Matrix) -> Result<Matrix> {
    m.clone()
        .pseudo_inverse(PINV_TOL)
        .map_err(|e| Error::InvalidArgument(e.to_string()))
}

/// `O'` on the second site with `(O ⊗ 1)|ψ⟩ = (1 ⊗ O')|ψ⟩` on the support.
pub fn mirror_to_second(source: &StateVector, op: &Operator) -> Result<Operator> {
    let psi = source_matrix(source)?;
    let m = (pinv(&psi)? * op.matrix() * &psi).transpose();
    Operator::single_site(m)
}

/// `O'` on the first site with `(1 ⊗ O)|ψ⟩ = (O' ⊗ 1)|ψ⟩` on the support.
pub fn mirror_to_first(source: &StateVector, op: &Operator) -> Result<Operator> {
    let psi = source_matrix(source)?;
    let m = &psi * op.matrix().transpose() * pinv(&psi)?;
    Operator::single_site(m)
}

/// Unitary `d → (qubit, junk)` for one site, with the observables it was
/// built from.
#[derive(Clone, Debug, PartialEq)]
pub struct SiteFrame {
    /// Row index `q·junk + k`.
    pub matrix: Matrix,
    pub junk: usize,
    pub z: Operator,
    pub x: Operator,
}

impl SiteFrame {
    pub fn dim(&self) -> usize {
        self.matrix.ncols()
    }

    pub fn unitarity_deviation(&self) -> f64 {
        let d = self.dim();
        let g = self.matrix.adjoint() * &self.matrix;
        (g - Matrix::identity(d, d)).iter().map(|z| z.norm()).fold(0.0, f64::max)
    }

    fn with_junk_rotation(&self, j: &Matrix) -> Self {
        let mut out = self.clone();
        out.matrix = Matrix::identity(2, 2).kronecker(j) * &self.matrix;
        out
    }
}

/// Orthonormal basis of the column space of a projector, chosen by pivoted
/// Gram-Schmidt so that coordinate-aligned subspaces get coordinate vectors.
fn pivoted_basis(proj: &Matrix, rank: usize) -> Vec<Vec<C64>> {
    let d = proj.nrows();
    let mut cols: Vec<Vec<C64>> = (0..d).map(|j| proj.column(j).iter().copied().collect()).collect();
    let mut basis: Vec<Vec<C64>> = Vec::with_capacity(rank);
    for _ in 0..rank {
        let norm = |v: &Vec<C64>| v.iter().map(|z| z.norm_sqr()).sum::<f64>().sqrt();
        let mut best = 0;
        let mut best_norm = -1.0;
        for (j, v) in cols.iter().enumerate() {
            let nv = norm(v);
            if nv > best_norm + 1e-12 {
                best = j;
                best_norm = nv;
            }
        }
        let b: Vec<C64> = cols[best].iter().map(|z| z / best_norm).collect();
        for v in cols.iter_mut() {
            let overlap: C64 = b.iter().zip(v.iter()).map(|(x, y)| x.conj() * y).sum();
            for (vi, bi) in v.iter_mut().zip(&b) {
                *vi -= overlap * bi;
            }
        }
        basis.push(b);
    }
    basis
}

/// Frame induced by a regularized pair on one site.
pub fn site_frame(z: &Operator, x: &Operator) -> Result<SiteFrame> {
    let d = z.dim();
    let w = swap_isometry(z, x)?;
    let full = &w * w.adjoint();
    let reduced = Matrix::from_fn(d, d, |s, t| {
        (full[(2 * s, 2 * t)] + full[(2 * s + 1, 2 * t + 1)]) * c(0.5, 0.)
    });
    let support = support_basis(&reduced, 0.5);
    let rank = support.ncols();
    if 2 * rank != d {
        return Err(Error::NotCertified(format!(
            "site of dimension {d} does not split as qubit ⊗ junk (support rank {rank})"
        )));
    }
    let proj = &support * support.adjoint();
    let basis = pivoted_basis(&proj, rank);
    let mut f = Matrix::zeros(d, d);
    for q in 0..2 {
        for (k, b) in basis.iter().enumerate() {
            for col in 0..d {
                let mut acc = c(0., 0.);
                for s in 0..d {
                    acc += b[s].conj() * w[(2 * s + q, col)];
                }
                f[(q * rank + k, col)] = acc;
            }
        }
    }
    Ok(SiteFrame {
        matrix: f,
        junk: rank,
        z: z.clone(),
        x: x.clone(),
    })
}

/// Frames for every site, indexed by subnet.
#[derive(Clone, Debug, PartialEq)]
pub struct LocalFrames {
    pub a: Vec<SiteFrame>,
    pub abar: Vec<SiteFrame>,
    /// Empty for the almost-DI scheme.
    pub r1: Vec<SiteFrame>,
    pub r2: Vec<SiteFrame>,
}

impl LocalFrames {
    /// Frame of a global site of `real`.
    pub fn at(&self, real: &Realization, site: usize) -> &SiteFrame {
        let n = real.n;
        match (real.scheme, site / n) {
            (_, 0) => &self.a[site],
            (Scheme::AlmostDi, _) => &self.abar[site - n],
            (Scheme::Di, 1) => &self.r1[site - n],
            (Scheme::Di, 2) => &self.r2[site - 2 * n],
            (Scheme::Di, _) => &self.abar[site - 3 * n],
        }
    }

    /// Same frames with a seeded unitary applied on each junk factor.
    pub fn rotate_junk(&self, seed: u64) -> Self {
        let mut k = 0u64;
        let mut rot = |v: &Vec<SiteFrame>| -> Vec<SiteFrame> {
            v.iter()
                .map(|f| {
                    k += 1;
                    f.with_junk_rotation(&haar_unitary(f.junk, seed.wrapping_add(k)))
                })
                .collect()
        };
        Self {
            a: rot(&self.a),
            abar: rot(&self.abar),
            r1: rot(&self.r1),
            r2: rot(&self.r2),
        }
    }

    pub fn max_unitarity_deviation(&self) -> f64 {
        self.a
            .iter()
            .chain(&self.abar)
            .chain(&self.r1)
            .chain(&self.r2)
            .map(SiteFrame::unitarity_deviation)
            .fold(0.0, f64::max)
    }
}

fn a_pair(real: &Realization, i: usize) -> Result<(Operator, Operator)> {
    let obs = real
        .observables
        .get(i)
        .filter(|o| o.len() == 3)
        .ok_or_else(|| Error::InvalidRealization(format!("party {i} needs three observables")))?;
    Ok(regularize(&obs[0], &obs[1], i == 0))
}

fn b_pair(real: &Realization, i: usize) -> Result<(Operator, Operator)> {
    let obs = real
        .b_observables
        .get(i)
        .filter(|o| o.len() == 2)
        .ok_or_else(|| Error::InvalidRealization(format!("subnet {i} needs two L observables")))?;
    Ok(regularize(&obs[0], &obs[1], i != 0))
}

fn mirrored_frame(
    source: &StateVector,
    (z, x): (Operator, Operator),
    to_second: bool,
) -> Result<SiteFrame> {
    let m = |o: &Operator| {
        if to_second {
            mirror_to_second(source, o)
        } else {
            mirror_to_first(source, o)
        }
    };
    let (z, x) = regularize(&m(&z)?, &m(&x)?, false);
    site_frame(&z, &x)
}

/// Build all frames without checking certification first.
pub fn extract_frames(real: &Realization) -> Result<LocalFrames> {
    let n = real.n;
    let mut a = Vec::with_capacity(n);
    let mut abar = Vec::with_capacity(n);
    let mut r1 = Vec::new();
    let mut r2 = Vec::new();
    for i in 0..n {
        let pair = a_pair(real, i)?;
        a.push(site_frame(&pair.0, &pair.1)?);
        match real.scheme {
            Scheme::AlmostDi => abar.push(mirrored_frame(&real.sources[i], pair, true)?),
            Scheme::Di => {
                r1.push(mirrored_frame(&real.sources[i], pair, true)?);
                let bp = b_pair(real, i)?;
                abar.push(site_frame(&bp.0, &bp.1)?);
                r2.push(mirrored_frame(&real.sources[n + i], bp, false)?);
            }
        }
    }
    Ok(LocalFrames { a, abar, r1, r2 })
}

/// Branch read off the operators: for each party the sign of
/// `Re Tr(A₂ · i X_r Z_r)/d`.
pub fn detect_branch(real: &Realization) -> Result<DetectedBranch> {
    let mut signs = Vec::with_capacity(real.n);
    for i in 0..real.n {
        let (z, x) = a_pair(real, i)?;
        let y = x.matrix() * z.matrix() * c(0., 1.);
        let a2 = real.observables[i][2].matrix();
        let d = a2.nrows() as f64;
        let s = (a2 * y).trace().re / d;
        signs.push(if s > 0.5 {
            Some(Branch::Plus)
        } else if s < -0.5 {
            Some(Branch::Minus)
        } else {
            None
        });
    }
    if signs.iter().any(Option::is_none) {
        return Ok(DetectedBranch::Undetermined);
    }
    let plus = signs.iter().filter(|s| **s == Some(Branch::Plus)).count();
    Ok(match plus {
        p if p == signs.len() => DetectedBranch::Plus,
        0 => DetectedBranch::Minus,
        _ => DetectedBranch::Mixed,
    })
}

/// Frames for a realization whose `e = 0` statistics pass at `tol`.
pub fn extract_all(real: &Realization, tol: f64) -> Result<LocalFrames> {
    real.validate()?;
    let report = certify_e0(&born_table(real)?, tol)?;
    if !report.checks.iter().all(|c| c.pass) {
        let ids: Vec<&str> = report.failing().iter().map(|c| c.id.as_str()).collect();
        return Err(Error::NotCertified(format!("failing checks: {}", ids.join(", "))));
    }
    match detect_branch(real)? {
        DetectedBranch::Mixed => Err(Error::MixedBranch),
        DetectedBranch::Undetermined => Err(Error::NotCertified(
            "Y observables are not ±i X_r Z_r".into(),
        )),
        _ => extract_frames(real),
    }
}

fn conj_by(f: &Matrix, op: &Matrix) -> Matrix {
    f * op * f.adjoint()
}

fn frame_kron(frames: &[&SiteFrame]) -> Matrix {
    frames
        .iter()
        .skip(1)
        .fold(frames[0].matrix.clone(), |acc, f| acc.kronecker(&f.matrix))
}

/// Realization with every site mapped through its frame.
pub fn apply_frames(real: &Realization, frames: &LocalFrames) -> Result<Realization> {
    let mut out = real.clone();
    let site = |s: usize| frames.at(real, s);
    for (k, src) in real.sources.iter().enumerate() {
        let [s1, s2] = real.source_sites(k);
        let f = site(s1).matrix.kronecker(&site(s2).matrix);
        let amps = &f * src.amplitudes();
        out.sources[k] = StateVector::from_dvector(amps, src.dims().clone())?;
    }
    let local = |op: &Operator, sites: &[usize]| -> Result<Operator> {
        let fs: Vec<&SiteFrame> = sites.iter().map(|&s| site(s)).collect();
        Operator::new(conj_by(&frame_kron(&fs), op.matrix()), op.dims().clone())
    };
    for i in 0..real.n {
        for o in out.observables[i].iter_mut() {
            *o = local(o, &[real.a_site(i)])?;
        }
        if real.is_di() {
            for o in out.b_observables[i].iter_mut() {
                *o = local(o, &[real.abar_site(i)])?;
            }
            for o in out.repeaters[i].iter_mut() {
                *o = local(o, &real.repeater_sites(i))?;
            }
        }
    }
    let abar = real.abar_sites();
    for m in out.measurement.iter_mut() {
        *m = local(m, &abar)?;
    }
    out.v = local(&real.v, &real.eve_sites())?;
    Ok(out)
}

/// Fidelity of each source's extracted qubit pair with `|φ⁺⟩`.
pub fn source_fidelities(real: &Realization, frames: &LocalFrames) -> Result<Vec<f64>> {
    let s = FRAC_1_SQRT_2;
    let phi_plus = [s, 0., 0., s];
    (0..real.n_sources())
        .map(|k| {
            let [s1, s2] = real.source_sites(k);
            let (f1, f2) = (frames.at(real, s1), frames.at(real, s2));
            let amps = f1.matrix.kronecker(&f2.matrix) * real.sources[k].amplitudes();
            let dims = SiteDims::new(vec![2, f1.junk, 2, f2.junk])?;
            let rho = StateVector::from_dvector(amps, dims)?.reduced_density(&[0, 2])?;
            let mut f = c(0., 0.);
            for a in 0..4 {
                for b in 0..4 {
                    f += rho.matrix()[(a, b)] * phi_plus[a] * phi_plus[b];
                }
            }
            Ok(f.re)
        })
        .collect()
}

/// The measurement Eve's output wires feed at `e = 0`: `{M_l}` for
/// almost-DI; for DI the measurement teleported back onto the R_{·,1} wires
/// through the all-zero repeater outcome, normalized by `Π_i p(r_i = 0)`.
pub fn effective_measurement(real: &Realization) -> Result<Vec<Operator>> {
    if !real.is_di() {
        return Ok(real.measurement.clone());
    }
    let n = real.n;
    let r1_dims: Vec<usize> = (0..n).map(|i| real.sources[i].dims().as_slice()[1]).collect();
    let r2_dims: Vec<usize> = (0..n).map(|i| real.sources[n + i].dims().as_slice()[0]).collect();
    let ab_dims: Vec<usize> = (0..n).map(|i| real.sources[n + i].dims().as_slice()[1]).collect();

    // Ψ₂ on (R_{·,2}…, Ā…).
    let mut tail_dims = r2_dims.clone();
    tail_dims.extend(&ab_dims);
    let tail = {
        let joint = crate::tensor::kron(&real.sources[n..])?;
        let mut perm = Vec::with_capacity(2 * n);
        perm.extend((0..n).map(|i| 2 * i));
        perm.extend((0..n).map(|i| 2 * i + 1));
        joint.permute(&perm)?
    };
    let d1: usize = r1_dims.iter().product();
    let d2 = tail.dim();
    let mut all_dims = r1_dims.clone();
    all_dims.extend(&tail_dims);
    let dims = SiteDims::new(all_dims)?;

    let mut p_bar = 1.0;
    for i in 0..n {
        let rho1 = real.sources[i].reduced_density(&[1])?;
        let rho2 = real.sources[n + i].reduced_density(&[0])?;
        let joint = rho1.matrix().kronecker(rho2.matrix());
        p_bar *= (real.repeaters[i][0].matrix() * joint).trace().re;
    }
    if p_bar < crate::network::ZERO_PROB {
        return Err(Error::ZeroProbability("all-zero repeater outcome".into()));
    }

    let mut out = Vec::with_capacity(real.measurement.len());
    for m in &real.measurement {
        let mut e = Matrix::zeros(d1, d1);
        for col in 0..d1 {
            let mut amps = vec![c(0., 0.); d1 * d2];
            amps[col * d2..(col + 1) * d2].copy_from_slice(tail.as_slice());
            let abar: Vec<usize> = (2 * n..3 * n).collect();
            crate::tensor::apply_local_in_place(&mut amps, &dims, m.matrix(), &abar)?;
            for i in 0..n {
                crate::tensor::apply_local_in_place(
                    &mut amps,
                    &dims,
                    real.repeaters[i][0].matrix(),
                    &[i, n + i],
                )?;
            }
            for row in 0..d1 {
                let mut acc = c(0., 0.);
                for (t, psi) in tail.as_slice().iter().enumerate() {
                    acc += psi.conj() * amps[row * d2 + t];
                }
                e[(row, col)] = acc / p_bar;
            }
        }
        out.push(Operator::new(e, SiteDims::new(r1_dims.clone())?)?);
    }
    Ok(out)
}

/// `F · op · F†` on Eve's wires, reordered to (qubits…, junk…).
fn framed_eve(real: &Realization, frames: &LocalFrames, op: &Matrix) -> Result<(Operator, usize)> {
    let fs: Vec<&SiteFrame> = real.eve_sites().iter().map(|&s| frames.at(real, s)).collect();
    let mut dims = Vec::with_capacity(2 * fs.len());
    for f in &fs {
        dims.push(2);
        dims.push(f.junk);
    }
    let n = fs.len();
    let perm: Vec<usize> = (0..n).map(|i| 2 * i).chain((0..n).map(|i| 2 * i + 1)).collect();
    let junk: usize = fs.iter().map(|f| f.junk).product();
    let m = Operator::new(conj_by(&frame_kron(&fs), op), SiteDims::new(dims)?)?;
    Ok((m.permute(&perm)?, junk))
}

fn targets(u: &Operator, branch: Branch) -> Result<Vec<StateVector>> {
    let deltas = delta_set(u)?;
    Ok(match branch {
        Branch::Minus => deltas,
        Branch::Plus => deltas.iter().map(StateVector::conj).collect(),
    })
}

fn with_junk(op: &Matrix, junk: usize) -> Matrix {
    op.kronecker(&Matrix::identity(junk, junk))
}

fn max_abs(m: &Matrix) -> f64 {
    m.iter().map(|z| z.norm()).fold(0.0, f64::max)
}

/// Framed `V† E_l V` against `|δ_l⟩⟨δ_l| ⊗ 1` (branch −) or its complex
/// conjugate (branch +), one row per `l`.
pub fn verify_effective_measurements(
    real: &Realization,
    frames: &LocalFrames,
    u: &Operator,
    branch: Branch,
    tol: f64,
) -> Result<Vec<Check>> {
    let effective = effective_measurement(real)?;
    let want = targets(u, branch)?;
    let v = real.v.matrix();
    let mut out = Vec::with_capacity(effective.len());
    for (l, (e, t)) in effective.iter().zip(&want).enumerate() {
        let pulled = v.adjoint() * e.matrix() * v;
        let (framed, junk) = framed_eve(real, frames, &pulled)?;
        let target = with_junk(t.projector().matrix(), junk);
        let dist = max_abs(&(framed.matrix() - target));
        out.push(Check::distance(format!("extract.meas.l={}", label(real.n, l)), dist, tol));
    }
    Ok(out)
}

fn label(n: usize, l: usize) -> String {
    (0..n).map(|k| if (l >> (n - 1 - k)) & 1 == 1 { '1' } else { '0' }).collect()
}

/// Distances between the framed unitary and the target gate.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct UnitaryCertificate {
    /// `max_l ‖W†(φ_l ⊗ 1)W − T†(φ_l ⊗ 1)T‖_max`; insensitive to phases
    /// diagonal in the GHZ basis.
    pub d: f64,
    /// Block distance `max_il ‖F_il − t_il·1‖_max` before phase alignment.
    pub blocks_raw: f64,
    /// Same after aligning one phase per `l`.
    pub blocks_gauge: f64,
    /// Left side of the rotated-basis fidelity identity,
    /// `Σ_l |⟨φ_l|W|t_l⟩|² / 2^N` averaged over junk.
    pub overlap: f64,
}

/// Eve's unitary restricted to the support of her input state (DI), or as
/// is (almost-DI).
pub fn restricted_unitary(real: &Realization) -> Result<Matrix> {
    if !real.is_di() {
        return Ok(real.v.matrix().clone());
    }
    let mut rho = real.sources[0].reduced_density(&[1])?.into_matrix();
    for i in 1..real.n {
        rho = rho.kronecker(real.sources[i].reduced_density(&[1])?.matrix());
    }
    let b = support_basis(&rho, SUPPORT_THRESHOLD);
    let proj = &b * b.adjoint();
    Ok(&proj * real.v.matrix() * &proj)
}

pub fn unitary_certificate(
    real: &Realization,
    frames: &LocalFrames,
    u: &Operator,
    branch: Branch,
) -> Result<UnitaryCertificate> {
    let n = real.n;
    let vbar = restricted_unitary(real)?;
    let (w, junk) = framed_eve(real, frames, &vbar)?;
    let w = w.into_matrix();
    let t_gate = match branch {
        Branch::Plus => u.conj(),
        Branch::Minus => u.clone(),
    };
    let t = with_junk(t_gate.matrix(), junk);
    let phis = ghz_basis(n)?;

    let mut d = 0.0f64;
    for phi in &phis {
        let p = with_junk(phi.projector().matrix(), junk);
        let lhs = w.adjoint() * &p * &w;
        let rhs = t.adjoint() * &p * &t;
        d = d.max(max_abs(&(lhs - rhs)));
    }

    // F_il = (⟨φ_i| ⊗ 1) W† (|φ_l⟩ ⊗ 1), target ⟨φ_i|t_l⟩.
    let want = targets(u, branch)?;
    let wd = w.adjoint();
    let dq = 1usize << n;
    let block = |i: usize, l: usize| -> Matrix {
        let (pi, pl) = (phis[i].as_slice(), phis[l].as_slice());
        Matrix::from_fn(junk, junk, |a, b| {
            let mut acc = c(0., 0.);
            for q in 0..dq {
                if pi[q].norm() == 0.0 {
                    continue;
                }
                for q2 in 0..dq {
                    if pl[q2].norm() == 0.0 {
                        continue;
                    }
                    acc += pi[q].conj() * wd[(q * junk + a, q2 * junk + b)] * pl[q2];
                }
            }
            acc
        })
    };
    let mut raw = 0.0f64;
    let mut gauge = 0.0f64;
    let mut overlap = 0.0;
    let id = Matrix::identity(junk, junk);
    for l in 0..dq {
        let blocks: Vec<Matrix> = (0..dq).map(|i| block(i, l)).collect();
        let t_col: Vec<C64> = (0..dq)
            .map(|i| phis[i].inner(&want[l]).expect("same dimension"))
            .collect();
        let align: C64 = blocks
            .iter()
            .zip(&t_col)
            .map(|(b, t)| t.conj() * b.trace())
            .sum();
        let phase = if align.norm() > 0.0 {
            align.conj() / align.norm()
        } else {
            c(1., 0.)
        };
        for (b, t) in blocks.iter().zip(&t_col) {
            raw = raw.max(max_abs(&(b - &id * *t)));
            gauge = gauge.max(max_abs(&(b * phase - &id * *t)));
        }
        // ⟨φ_l|W|t_l⟩ with junk traced: Tr_junk of the block conj-transposed.
        let amp: C64 = (0..dq)
            .map(|i| t_col[i] * blocks[i].trace().conj())
            .sum::<C64>()
            / junk as f64;
        overlap += amp.norm_sqr();
    }
    Ok(UnitaryCertificate {
        d,
        blocks_raw: raw,
        blocks_gauge: gauge,
        overlap: overlap / dq as f64,
    })
}

/// Framed observables against the reference ones for `branch`.
pub fn verify_observables(
    real: &Realization,
    frames: &LocalFrames,
    branch: Branch,
    tol: f64,
) -> Result<Vec<Check>> {
    let mut out = Vec::new();
    let symbols = [SettingSymbol::S0, SettingSymbol::S1, SettingSymbol::S2];
    for i in 0..real.n {
        let f = &frames.a[i];
        for (s, sym) in symbols.iter().enumerate() {
            let framed = conj_by(&f.matrix, real.observables[i][s].matrix());
            let target = with_junk(ref_observable(i, *sym, branch)?.matrix(), f.junk);
            out.push(Check::distance(
                format!("extract.obs.i={i}.s={s}"),
                max_abs(&(framed - target)),
                tol,
            ));
        }
    }
    Ok(out)
}

/// Every operator-level row for a realization with known branch.
pub fn extraction_checks(
    real: &Realization,
    frames: &LocalFrames,
    u: &Operator,
    branch: Branch,
    tol: f64,
) -> Result<Vec<Check>> {
    let mut rows = Vec::new();
    for (k, f) in source_fidelities(real, frames)?.into_iter().enumerate() {
        rows.push(Check::new(format!("extract.source.k={k}"), f, 1.0, tol));
    }
    rows.extend(verify_observables(real, frames, branch, tol)?);
    rows.extend(verify_effective_measurements(real, frames, u, branch, tol)?);
    let cert = unitary_certificate(real, frames, u, branch)?;
    rows.push(Check::distance("extract.unitary.d", cert.d, tol));
    rows.push(
        Check::distance("extract.unitary.blocks", cert.blocks_gauge, tol)
            .with_note(format!("before phase alignment: {:.3e}", cert.blocks_raw)),
    );
    rows.push(Check::new("extract.unitary.overlap", cert.overlap, 1.0, tol));
    Ok(rows)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::network::reference_realization;
    use crate::primitives::{gate, pauli, GateSpec, NamedGate, PauliIndex};

    fn named(g: NamedGate, n: usize) -> Operator {
        gate(&GateSpec::Named(g), n).unwrap()
    }

    #[test]
    fn swap_isometry_on_qubit_resets_site() {
        let w = swap_isometry(&pauli(PauliIndex::Z), &pauli(PauliIndex::X)).unwrap();
        // |0⟩ → |0⟩|0⟩, |1⟩ → |0⟩|1⟩ in (site, ancilla) order.
        assert!((w[(0, 0)] - c(1., 0.)).norm() < 1e-15);
        assert!((w[(1, 1)] - c(1., 0.)).norm() < 1e-15);
        assert!(w[(2, 0)].norm() + w[(3, 1)].norm() < 1e-15);
    }

    #[test]
    fn swap_on_both_wings_gives_phi_plus() {
        let z = pauli(PauliIndex::Z);
        let x = pauli(PauliIndex::X);
        let w = swap_isometry(&z, &x).unwrap();
        let s = FRAC_1_SQRT_2;
        let psi = Matrix::from_column_slice(4, 1, &[c(s, 0.), c(0., 0.), c(0., 0.), c(s, 0.)]);
        // Output order (site1, anc1, site2, anc2).
        let out = w.kronecker(&w) * psi;
        let dims = SiteDims::new(vec![2, 2, 2, 2]).unwrap();
        let v = StateVector::from_dvector(out.column(0).into_owned(), dims).unwrap();
        let rho = v.reduced_density(&[1, 3]).unwrap();
        let f = (rho.matrix()[(0, 0)] + rho.matrix()[(0, 3)] + rho.matrix()[(3, 0)] + rho.matrix()[(3, 3)]).re / 2.0;
        assert!((f - 1.0).abs() < 1e-12);
    }

    #[test]
    fn regularize_undoes_rotation() {
        let ref_a = crate::primitives::ref_observables(0, Branch::Plus);
        let (z, x) = regularize(&ref_a[0], &ref_a[1], true);
        assert!(z.max_abs_diff(&pauli(PauliIndex::Z)) < 1e-12);
        assert!(x.max_abs_diff(&pauli(PauliIndex::X)) < 1e-12);
    }

    #[test]
    fn mirror_through_phi_plus_is_transpose() {
        let s = FRAC_1_SQRT_2;
        let src = StateVector::new(
            vec![c(s, 0.), c(0., 0.), c(0., 0.), c(s, 0.)],
            SiteDims::qubits(2),
        )
        .unwrap();
        let y = pauli(PauliIndex::Y);
        let m = mirror_to_second(&src, &y).unwrap();
        assert!(m.max_abs_diff(&y.transpose()) < 1e-12);
        let back = mirror_to_first(&src, &m).unwrap();
        assert!(back.max_abs_diff(&y) < 1e-12);
    }

    #[test]
    fn reference_frames_are_identity() {
        for scheme in [Scheme::AlmostDi, Scheme::Di] {
            let u = named(NamedGate::Cnot, 2);
            let real = reference_realization(2, &u, Branch::Plus, scheme).unwrap();
            let frames = extract_all(&real, 1e-9).unwrap();
            for f in frames.a.iter().chain(&frames.abar).chain(&frames.r1).chain(&frames.r2) {
                assert!(max_abs(&(&f.matrix - Matrix::identity(2, 2))) < 1e-12);
            }
        }
    }

    #[test]
    fn reference_passes_every_row() {
        for scheme in [Scheme::AlmostDi, Scheme::Di] {
            for branch in [Branch::Plus, Branch::Minus] {
                let u = gate(&GateSpec::Random { seed: 4 }, 2).unwrap();
                let real = reference_realization(2, &u, branch, scheme).unwrap();
                assert_eq!(
                    detect_branch(&real).unwrap(),
                    match branch {
                        Branch::Plus => DetectedBranch::Plus,
                        Branch::Minus => DetectedBranch::Minus,
                    }
                );
                let frames = extract_all(&real, 1e-9).unwrap();
                let rows = extraction_checks(&real, &frames, &u, branch, 1e-9).unwrap();
                assert!(rows.iter().all(|r| r.pass), "{scheme} {branch}: {rows:?}");
            }
        }
    }

    #[test]
    fn teleported_measurement_equals_ghz_projectors() {
        let u = named(NamedGate::Cz, 2);
        let real = reference_realization(2, &u, Branch::Plus, Scheme::Di).unwrap();
        let e = effective_measurement(&real).unwrap();
        for (l, phi) in ghz_basis(2).unwrap().iter().enumerate() {
            assert!(e[l].max_abs_diff(&phi.projector()) < 1e-12, "l = {l}");
        }
    }

    #[test]
    fn wrong_branch_fails_measurement_rows() {
        let u = gate(&GateSpec::Random { seed: 9 }, 2).unwrap();
        let real = reference_realization(2, &u, Branch::Plus, Scheme::AlmostDi).unwrap();
        let frames = extract_frames(&real).unwrap();
        let rows = verify_effective_measurements(&real, &frames, &u, Branch::Minus, 1e-9).unwrap();
        assert!(rows.iter().any(|r| !r.pass));
    }

    #[test]
    fn uncertified_realization_is_rejected() {
        let u = named(NamedGate::Identity, 2);
        let mut real = reference_realization(2, &u, Branch::Plus, Scheme::AlmostDi).unwrap();
        real.observables[1][0] = pauli(PauliIndex::X);
        assert!(matches!(extract_all(&real, 1e-9), Err(Error::NotCertified(_))));
    }

    #[test]
    fn dilated_references_pass_every_row() {
        for scheme in [Scheme::AlmostDi, Scheme::Di] {
            let u = named(NamedGate::Cnot, 2);
            let real = reference_realization(2, &u, Branch::Plus, scheme).unwrap();
            let dil = crate::adversary::dilate(&real, 2, 11).unwrap();
            let frames = extract_all(&dil, 1e-9).unwrap();
            assert!(frames.max_unitarity_deviation() < 1e-10);
            let rows = extraction_checks(&dil, &frames, &u, Branch::Plus, 1e-8).unwrap();
            assert!(rows.iter().all(|r| r.pass), "{scheme}: {rows:?}");
        }
    }

    #[test]
    fn junk_rotation_does_not_change_verdict() {
        let u = gate(&GateSpec::Random { seed: 2 }, 2).unwrap();
        let real = reference_realization(2, &u, Branch::Minus, Scheme::AlmostDi).unwrap();
        let dil = crate::adversary::dilate(&real, 2, 5).unwrap();
        let frames = extract_frames(&dil).unwrap();
        let other = frames.rotate_junk(99);
        let a = extraction_checks(&dil, &frames, &u, Branch::Minus, 1e-8).unwrap();
        let b = extraction_checks(&dil, &other, &u, Branch::Minus, 1e-8).unwrap();
        assert!(a.iter().zip(&b).all(|(x, y)| x.pass == y.pass && x.id == y.id));
        assert!(a.iter().all(|r| r.pass));
    }

    #[test]
    fn extraction_is_idempotent() {
        let u = named(NamedGate::Cz, 2);
        let real = reference_realization(2, &u, Branch::Plus, Scheme::AlmostDi).unwrap();
        let dil = crate::adversary::dilate(&real, 2, 8).unwrap();
        let framed = apply_frames(&dil, &extract_frames(&dil).unwrap()).unwrap();
        let again = extract_frames(&framed).unwrap();
        for f in again.a.iter().chain(&again.abar) {
            let d = f.dim();
            assert!(max_abs(&(&f.matrix - Matrix::identity(d, d))) < 1e-9);
        }
    }
}
