//! Two-site variational ground-state search over matrix-product states,
//! with SVD truncation, a growing bond-dimension schedule, and excited
//! states by projection against a converged ground state.
//!
//! Each bond solve minimizes the energy of the merged two-site tensor with
//! a warm-started symmetric Lanczos iteration, then splits it by SVD,
//! discarding relative squared singular weight below the cutoff and capping
//! the kept rank by the sweep's bond budget (16, doubling every 10 sweeps
//! up to the policy maximum). A sweep's energy record is the smallest local
//! eigenvalue seen — a variational upper bound on the true energy.
//!
//! Convergence requires the relative energy change between sweeps to fall
//! under the policy tolerance AND the truncation to be trustworthy: either
//! the sweep's largest truncation error is within the SVD cutoff or the
//! bond budget has reached its maximum. The second condition prevents
//! declaring convergence on an energy plateau created by a still-capped
//! bond dimension.

use nalgebra::DMatrix;
use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::exactdiag::{Dataset, DatasetOptions, DatasetRow};
use crate::hamiltonian::{HamiltonianFamily, Observable};
use crate::tensor::expfit::ExpSumFit;
use crate::tensor::mpo::{build_mpo, Mpo};
use crate::tensor::mps::{mps_expectation, overlap, Mps};
use crate::util::{derive_seed, tag};

/// Truncation and convergence policy for the sweep loop.
#[derive(Debug, Clone)]
pub struct TruncationPolicy {
    /// Discarded relative squared singular weight allowed per split.
    pub svd_cutoff: f64,
    /// Hard cap on bond dimension.
    pub max_bond: usize,
    /// Maximum number of full sweeps.
    pub max_sweeps: usize,
    /// Relative energy change between sweeps that counts as converged.
    pub energy_rel_tol: f64,
}

impl Default for TruncationPolicy {
    fn default() -> Self {
        TruncationPolicy {
            svd_cutoff: 1e-9,
            max_bond: 100,
            max_sweeps: 100,
            energy_rel_tol: 1e-6,
        }
    }
}

impl TruncationPolicy {
    fn validate(&self) -> Result<()> {
        if !(self.svd_cutoff > 0.0)
            || self.max_bond == 0
            || self.max_sweeps == 0
            || !(self.energy_rel_tol > 0.0)
        {
            return Err(Error::invalid("truncation policy fields must be positive"));
        }
        Ok(())
    }

    /// Bond budget of a 1-indexed sweep: 16 doubling every 10 sweeps.
    fn bond_cap(&self, sweep: usize) -> usize {
        let doublings = (sweep - 1) / 10;
        (16usize << doublings.min(24)).min(self.max_bond)
    }
}

/// Per-sweep log entry.
#[derive(Debug, Clone)]
pub struct SweepRecord {
    pub sweep: usize,
    pub energy: f64,
    pub max_bond: usize,
    pub max_trunc_err: f64,
}

/// Result of a sweep run: the optimized state, its variational energy, and
/// the per-sweep log.
#[derive(Debug, Clone)]
pub struct DmrgRun {
    pub mps: Mps,
    pub energy: f64,
    pub converged: bool,
    pub sweeps_run: usize,
    pub log: Vec<SweepRecord>,
}

impl DmrgRun {
    /// CSV log: `sweep,energy,max_bond_dim,truncation_error`.
    pub fn log_csv(&self, config_hash: Option<&str>) -> String {
        let rows: Vec<Vec<String>> = self
            .log
            .iter()
            .map(|r| {
                vec![
                    r.sweep.to_string(),
                    format!("{:.12e}", r.energy),
                    r.max_bond.to_string(),
                    format!("{:.3e}", r.max_trunc_err),
                ]
            })
            .collect();
        crate::util::csv_string(
            config_hash,
            &["sweep", "energy", "max_bond_dim", "truncation_error"],
            &rows,
        )
    }
}

/// Dense per-channel environment: one `D×D` matrix per operator bond value.
type Env = Vec<DMatrix<f64>>;

/// Nonzero 2×2 blocks of one operator tensor, as `(a, b, [f64; 4])`.
fn nonzero_blocks(mpo: &Mpo, site: usize) -> Vec<(usize, usize, [f64; 4])> {
    let t = mpo.tensor(site);
    let mut out = Vec::new();
    for a in 0..t.wl {
        for b in 0..t.wr {
            let block = [
                t.entry(a, b, 0, 0),
                t.entry(a, b, 0, 1),
                t.entry(a, b, 1, 0),
                t.entry(a, b, 1, 1),
            ];
            if block.iter().any(|v| *v != 0.0) {
                out.push((a, b, block));
            }
        }
    }
    out
}

/// The two physical slices of a site tensor as `dl × dr` matrices.
fn site_slices(mps: &Mps, site: usize) -> [DMatrix<f64>; 2] {
    let t = &mps.tensors[site];
    let mut out = [
        DMatrix::<f64>::zeros(t.dl, t.dr),
        DMatrix::<f64>::zeros(t.dl, t.dr),
    ];
    for s in 0..2 {
        for a in 0..t.dl {
            for b in 0..t.dr {
                out[s][(a, b)] = t.at(a, s, b);
            }
        }
    }
    out
}

fn set_site_from_slices(mps: &mut Mps, site: usize, slices: &[DMatrix<f64>; 2]) {
    let dl = slices[0].nrows();
    let dr = slices[0].ncols();
    let mut t = crate::tensor::mps::MpsTensor::zeros(dl, dr);
    for s in 0..2 {
        for a in 0..dl {
            for b in 0..dr {
                *t.at_mut(a, s, b) = slices[s][(a, b)];
            }
        }
    }
    mps.tensors[site] = t;
}

/// Extends a left environment across one site.
fn extend_left(env: &Env, mps: &Mps, mpo: &Mpo, site: usize) -> Env {
    let slices = site_slices(mps, site);
    let t = mpo.tensor(site);
    let dr = mps.tensors[site].dr;
    let mut next: Env = vec![DMatrix::zeros(dr, dr); t.wr];
    for (a, b, block) in nonzero_blocks(mpo, site) {
        for s_out in 0..2 {
            for s_in in 0..2 {
                let w = block[s_out * 2 + s_in];
                if w != 0.0 {
                    next[b] += (slices[s_out].transpose() * &env[a] * &slices[s_in]).scale(w);
                }
            }
        }
    }
    next
}

/// Extends a right environment across one site.
fn extend_right(env: &Env, mps: &Mps, mpo: &Mpo, site: usize) -> Env {
    let slices = site_slices(mps, site);
    let t = mpo.tensor(site);
    let dl = mps.tensors[site].dl;
    let mut next: Env = vec![DMatrix::zeros(dl, dl); t.wl];
    for (a, b, block) in nonzero_blocks(mpo, site) {
        for s_out in 0..2 {
            for s_in in 0..2 {
                let w = block[s_out * 2 + s_in];
                if w != 0.0 {
                    next[a] += (&slices[s_out] * &env[b] * slices[s_in].transpose()).scale(w);
                }
            }
        }
    }
    next
}

/// Two-site effective Hamiltonian at one bond, applied matrix-free to the
/// merged tensor `θ[a, s, t, b]` (flattened as `((a·2+s)·2+t)·dr + b`).
struct EffectiveH<'a> {
    left: &'a Env,
    right: &'a Env,
    w_left: Vec<(usize, usize, [f64; 4])>,
    w_right: Vec<(usize, usize, [f64; 4])>,
    dl: usize,
    dr: usize,
    mid_channels: usize,
    right_channels: usize,
}

impl<'a> EffectiveH<'a> {
    fn dim(&self) -> usize {
        self.dl * 4 * self.dr
    }

    fn theta_slices(&self, v: &[f64]) -> [DMatrix<f64>; 4] {
        let (dl, dr) = (self.dl, self.dr);
        std::array::from_fn(|st| {
            let (s, t) = (st / 2, st % 2);
            let mut m = DMatrix::<f64>::zeros(dl, dr);
            for a in 0..dl {
                for b in 0..dr {
                    m[(a, b)] = v[((a * 2 + s) * 2 + t) * dr + b];
                }
            }
            m
        })
    }

    fn apply(&self, v: &[f64], out: &mut [f64]) {
        let (dl, dr) = (self.dl, self.dr);
        let theta = self.theta_slices(v);
        // Stage 1: pull θ through the left environment and left operator.
        let mut t1: Vec<[Option<DMatrix<f64>>; 4]> =
            (0..self.mid_channels).map(|_| std::array::from_fn(|_| None)).collect();
        // Cache L[a]·θ_st lazily per (a, s, t).
        let mut l_theta: Vec<[Option<DMatrix<f64>>; 4]> =
            (0..self.left.len()).map(|_| std::array::from_fn(|_| None)).collect();
        for (a, c, block) in &self.w_left {
            for s_out in 0..2 {
                for s_in in 0..2 {
                    let w = block[s_out * 2 + s_in];
                    if w == 0.0 {
                        continue;
                    }
                    for t in 0..2 {
                        let lt = l_theta[*a][s_in * 2 + t]
                            .get_or_insert_with(|| &self.left[*a] * &theta[s_in * 2 + t]);
                        let slot = &mut t1[*c][s_out * 2 + t];
                        match slot {
                            Some(m) => *m += lt.scale(w),
                            None => *slot = Some(lt.scale(w)),
                        }
                    }
                }
            }
        }
        // Stage 2: apply the right operator.
        let mut t2: Vec<[Option<DMatrix<f64>>; 4]> =
            (0..self.right_channels).map(|_| std::array::from_fn(|_| None)).collect();
        for (c, b, block) in &self.w_right {
            for t_out in 0..2 {
                for t_in in 0..2 {
                    let w = block[t_out * 2 + t_in];
                    if w == 0.0 {
                        continue;
                    }
                    for s in 0..2 {
                        if let Some(src) = &t1[*c][s * 2 + t_in] {
                            let slot = &mut t2[*b][s * 2 + t_out];
                            match slot {
                                Some(m) => *m += src.scale(w),
                                None => *slot = Some(src.scale(w)),
                            }
                        }
                    }
                }
            }
        }
        // Stage 3: close with the right environment.
        out.fill(0.0);
        for (b, t2_b) in t2.iter().enumerate() {
            for st in 0..4 {
                if let Some(src) = &t2_b[st] {
                    let closed = src * self.right[b].transpose();
                    let (s, t) = (st / 2, st % 2);
                    for a in 0..dl {
                        for bb in 0..dr {
                            out[((a * 2 + s) * 2 + t) * dr + bb] += closed[(a, bb)];
                        }
                    }
                }
            }
        }
    }
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

fn vnorm(a: &[f64]) -> f64 {
    dot(a, a).sqrt()
}

/// Smallest eigenpair of a symmetric operator by restarted Lanczos with
/// full reorthogonalization and warm start; `project` is removed from every
/// vector so the iteration stays in its orthogonal complement.
fn lanczos_local(
    h: &EffectiveH,
    start: &[f64],
    project: Option<&[f64]>,
    tol: f64,
    max_iters: usize,
) -> (f64, Vec<f64>) {
    let dim = h.dim();
    let deproject = |v: &mut Vec<f64>| {
        if let Some(g) = project {
            let c = dot(g, v);
            for (x, gv) in v.iter_mut().zip(g) {
                *x -= c * gv;
            }
        }
    };
    let mut current = start.to_vec();
    deproject(&mut current);
    let mut nrm = vnorm(&current);
    if nrm < 1e-12 {
        // Warm start lies (almost) entirely along the projector: restart
        // from a deterministic perturbation.
        for (i, v) in current.iter_mut().enumerate() {
            *v = ((i % 7) as f64 - 3.0) / 7.0 + if i % 2 == 0 { 0.5 } else { -0.25 };
        }
        deproject(&mut current);
        nrm = vnorm(&current);
    }
    for v in current.iter_mut() {
        *v /= nrm;
    }

    let block = dim.min(25);
    let mut used = 0usize;
    let mut best_theta = 0.0;
    let mut work = vec![0.0; dim];
    loop {
        let mut basis: Vec<Vec<f64>> = vec![current.clone()];
        let mut alphas: Vec<f64> = Vec::new();
        let mut betas: Vec<f64> = Vec::new();
        for j in 0..block {
            if used >= max_iters {
                break;
            }
            h.apply(&basis[j], &mut work);
            used += 1;
            let mut w = work.clone();
            deproject(&mut w);
            alphas.push(dot(&basis[j], &w));
            for _ in 0..2 {
                for b in &basis {
                    let c = dot(b, &w);
                    for (x, bv) in w.iter_mut().zip(b) {
                        *x -= c * bv;
                    }
                }
            }
            let beta = vnorm(&w);
            if j + 1 == block || beta <= 1e-13 {
                break;
            }
            betas.push(beta);
            for x in w.iter_mut() {
                *x /= beta;
            }
            basis.push(w);
        }
        let m = alphas.len();
        if m == 0 {
            return (best_theta, current);
        }
        let mut t = DMatrix::<f64>::zeros(m, m);
        for i in 0..m {
            t[(i, i)] = alphas[i];
            if i + 1 < m {
                t[(i, i + 1)] = betas[i];
                t[(i + 1, i)] = betas[i];
            }
        }
        let eig = t.symmetric_eigen();
        let mut best = 0;
        for i in 1..m {
            if eig.eigenvalues[i] < eig.eigenvalues[best] {
                best = i;
            }
        }
        best_theta = eig.eigenvalues[best];
        let mut ritz = vec![0.0; dim];
        // basis may hold one more vector than the tridiagonal matrix has
        // rows when the iteration budget ran out mid-block.
        for (i, b) in basis.iter().take(m).enumerate() {
            let c = eig.eigenvectors[(i, best)];
            for (r, bv) in ritz.iter_mut().zip(b) {
                *r += c * bv;
            }
        }
        deproject(&mut ritz);
        let rn = vnorm(&ritz);
        for r in ritz.iter_mut() {
            *r /= rn;
        }
        // Explicit residual check.
        h.apply(&ritz, &mut work);
        used += 1;
        let mut res = work.clone();
        deproject(&mut res);
        for (r, v) in res.iter_mut().zip(&ritz) {
            *r -= best_theta * v;
        }
        let resid = vnorm(&res);
        current = ritz;
        if resid <= tol * (1.0 + best_theta.abs()) || used >= max_iters {
            return (best_theta, current);
        }
    }
}

/// Splits a solved two-site tensor by SVD. Returns the kept rank's slices
/// and the relative discarded weight.
#[allow(clippy::type_complexity)]
fn split_theta(
    theta: &[f64],
    dl: usize,
    dr: usize,
    cap: usize,
    cutoff: f64,
    move_right: bool,
) -> ([DMatrix<f64>; 2], [DMatrix<f64>; 2], f64, usize) {
    // Reshape θ[(a,s),(t,b)] into a (dl·2) × (2·dr) matrix.
    let mut m = DMatrix::<f64>::zeros(dl * 2, 2 * dr);
    for a in 0..dl {
        for s in 0..2 {
            for t in 0..2 {
                for b in 0..dr {
                    m[(a * 2 + s, t * dr + b)] = theta[((a * 2 + s) * 2 + t) * dr + b];
                }
            }
        }
    }
    let svd = m.svd(true, true);
    let u = svd.u.as_ref().expect("u requested");
    let vt = svd.v_t.as_ref().expect("v_t requested");
    let sigma = &svd.singular_values;
    let mut order: Vec<usize> = (0..sigma.len()).collect();
    order.sort_by(|&i, &j| sigma[j].partial_cmp(&sigma[i]).unwrap());
    let total: f64 = sigma.iter().map(|s| s * s).sum();
    let mut kept = Vec::new();
    let mut kept_weight = 0.0;
    for &idx in &order {
        if kept.len() >= cap {
            break;
        }
        kept.push(idx);
        kept_weight += sigma[idx] * sigma[idx];
        if total - kept_weight <= cutoff * total {
            break;
        }
    }
    if kept.is_empty() {
        kept.push(order[0]);
        kept_weight = sigma[order[0]] * sigma[order[0]];
    }
    let rank = kept.len();
    let trunc_err = if total > 0.0 {
        ((total - kept_weight) / total).max(0.0)
    } else {
        0.0
    };
    let renorm = kept_weight.sqrt();

    // Left site slices (dl × rank), right site slices (rank × dr).
    let mut left = [DMatrix::<f64>::zeros(dl, rank), DMatrix::<f64>::zeros(dl, rank)];
    let mut right = [DMatrix::<f64>::zeros(rank, dr), DMatrix::<f64>::zeros(rank, dr)];
    for (r, &idx) in kept.iter().enumerate() {
        let s_val = sigma[idx] / renorm.max(f64::MIN_POSITIVE);
        for a in 0..dl {
            for s in 0..2 {
                let u_val = u[(a * 2 + s, idx)];
                left[s][(a, r)] = if move_right { u_val } else { u_val * s_val };
            }
        }
        for t in 0..2 {
            for b in 0..dr {
                let v_val = vt[(idx, t * dr + b)];
                right[t][(r, b)] = if move_right { v_val * s_val } else { v_val };
            }
        }
    }
    (left, right, trunc_err, rank)
}

fn merge_two_site(mps: &Mps, i: usize) -> Vec<f64> {
    let a = &mps.tensors[i];
    let b = &mps.tensors[i + 1];
    let (dl, mid, dr) = (a.dl, a.dr, b.dr);
    let mut theta = vec![0.0; dl * 4 * dr];
    for al in 0..dl {
        for s in 0..2 {
            for c in 0..mid {
                let av = a.at(al, s, c);
                if av == 0.0 {
                    continue;
                }
                for t in 0..2 {
                    for br in 0..dr {
                        theta[((al * 2 + s) * 2 + t) * dr + br] += av * b.at(c, t, br);
                    }
                }
            }
        }
    }
    theta
}

/// Overlap environments between an evolving bra state and a fixed ket
/// state, used to transport the ground state into a local bond space.
struct OverlapEnvs<'a> {
    ground: &'a Mps,
    left: Vec<DMatrix<f64>>,
    right: Vec<DMatrix<f64>>,
}

impl<'a> OverlapEnvs<'a> {
    fn new(current: &Mps, ground: &'a Mps) -> Self {
        let n = current.n_sites();
        let mut left = vec![DMatrix::from_element(1, 1, 1.0)];
        left.reserve(n);
        // right[i] covers sites strictly greater than i.
        let mut right = vec![DMatrix::from_element(1, 1, 1.0); n + 1];
        for i in (1..n - 1).rev() {
            right[i] = Self::extend_right_static(&right[i + 1], current, ground, i + 1);
        }
        OverlapEnvs {
            ground,
            left,
            right,
        }
    }

    fn extend_left_static(
        env: &DMatrix<f64>,
        bra: &Mps,
        ket: &Mps,
        site: usize,
    ) -> DMatrix<f64> {
        let b = site_slices(bra, site);
        let k = site_slices(ket, site);
        let mut next = DMatrix::<f64>::zeros(b[0].ncols(), k[0].ncols());
        for s in 0..2 {
            next += b[s].transpose() * env * &k[s];
        }
        next
    }

    fn extend_right_static(
        env: &DMatrix<f64>,
        bra: &Mps,
        ket: &Mps,
        site: usize,
    ) -> DMatrix<f64> {
        let b = site_slices(bra, site);
        let k = site_slices(ket, site);
        let mut next = DMatrix::<f64>::zeros(b[0].nrows(), k[0].nrows());
        for s in 0..2 {
            next += &b[s] * env * k[s].transpose();
        }
        next
    }

    /// The ground state's two-site tensor transported into the current
    /// state's bond space at sites `(i, i+1)`.
    fn local_ground(&self, i: usize) -> Vec<f64> {
        let theta_g = merge_two_site(self.ground, i);
        let gl = &self.ground.tensors[i];
        let gr = &self.ground.tensors[i + 1];
        let ol = &self.left[i];
        let or = &self.right[i + 1];
        let (dl, dr) = (ol.nrows(), or.nrows());
        let (gdl, gdr) = (gl.dl, gr.dr);
        let mut out = vec![0.0; dl * 4 * dr];
        // out[a,s,t,b] = Σ_{a',b'} OL[a,a'] θg[a',s,t,b'] OR[b,b'].
        for s in 0..2 {
            for t in 0..2 {
                let mut g = DMatrix::<f64>::zeros(gdl, gdr);
                for ap in 0..gdl {
                    for bp in 0..gdr {
                        g[(ap, bp)] = theta_g[((ap * 2 + s) * 2 + t) * gdr + bp];
                    }
                }
                let closed = ol * g * or.transpose();
                for a in 0..dl {
                    for b in 0..dr {
                        out[((a * 2 + s) * 2 + t) * dr + b] = closed[(a, b)];
                    }
                }
            }
        }
        out
    }
}

fn sweep_loop(
    mpo: &Mpo,
    policy: &TruncationPolicy,
    seed: u64,
    ground: Option<&Mps>,
) -> Result<DmrgRun> {
    policy.validate()?;
    let n = mpo.n_sites();
    let mut mps = Mps::random(n, policy.max_bond.min(16), seed)?;

    // Hamiltonian environments; left[i]/right[i] exclude site i.
    let mut left: Vec<Env> = Vec::with_capacity(n + 1);
    left.push(vec![DMatrix::from_element(1, 1, 1.0)]);
    let mut right: Vec<Option<Env>> = vec![None; n + 1];
    right[n - 1] = Some(vec![DMatrix::from_element(1, 1, 1.0)]);
    for i in (1..n - 1).rev() {
        let env = extend_right(right[i + 1].as_ref().unwrap(), &mps, mpo, i + 1);
        right[i] = Some(env);
    }
    let mut overlaps = ground.map(|g| OverlapEnvs::new(&mps, g));

    let mut log: Vec<SweepRecord> = Vec::new();
    let mut converged = false;
    let mut last_energy = f64::INFINITY;
    let mut final_energy = f64::NAN;

    for sweep in 1..=policy.max_sweeps {
        let cap = policy.bond_cap(sweep);
        let mut sweep_trunc = 0.0f64;
        let mut sweep_bond = 1usize;

        // One full sweep: left-to-right bonds, then right-to-left.
        let bonds: Vec<(usize, bool)> = (0..n - 1)
            .map(|i| (i, true))
            .chain((0..n - 1).rev().map(|i| (i, false)))
            .collect();
        for (i, move_right) in bonds {
            let dl = mps.tensors[i].dl;
            let dr = mps.tensors[i + 1].dr;
            let h = EffectiveH {
                left: &left[i],
                right: right[i + 1].as_ref().unwrap(),
                w_left: nonzero_blocks(mpo, i),
                w_right: nonzero_blocks(mpo, i + 1),
                dl,
                dr,
                mid_channels: mpo.tensor(i).wr,
                right_channels: mpo.tensor(i + 1).wr,
            };
            let warm = merge_two_site(&mps, i);
            let g_local: Option<Vec<f64>> = overlaps.as_ref().map(|ov| {
                let mut g = ov.local_ground(i);
                let gn = vnorm(&g);
                if gn > 1e-12 {
                    for v in g.iter_mut() {
                        *v /= gn;
                    }
                } else {
                    g.iter_mut().for_each(|v| *v = 0.0);
                }
                g
            });
            let projector = g_local.as_ref().filter(|g| vnorm(g) > 0.5).map(|g| g.as_slice());
            let (energy, theta) = lanczos_local(&h, &warm, projector, 1e-10, 200);
            final_energy = energy;

            let (l_slices, r_slices, trunc, rank) =
                split_theta(&theta, dl, dr, cap, policy.svd_cutoff, move_right);
            sweep_trunc = sweep_trunc.max(trunc);
            sweep_bond = sweep_bond.max(rank);
            set_site_from_slices(&mut mps, i, &l_slices);
            set_site_from_slices(&mut mps, i + 1, &r_slices);
            mps.center = if move_right { i + 1 } else { i };

            if move_right {
                if left.len() <= i + 1 {
                    left.push(extend_left(&left[i], &mps, mpo, i));
                } else {
                    left[i + 1] = extend_left(&left[i], &mps, mpo, i);
                }
                left.truncate(i + 2);
                right[i] = None;
                if let (Some(ov), Some(g)) = (overlaps.as_mut(), ground) {
                    let env = OverlapEnvs::extend_left_static(&ov.left[i], &mps, g, i);
                    if ov.left.len() <= i + 1 {
                        ov.left.push(env);
                    } else {
                        ov.left[i + 1] = env;
                    }
                    ov.left.truncate(i + 2);
                }
            } else {
                right[i] = Some(extend_right(right[i + 1].as_ref().unwrap(), &mps, mpo, i + 1));
                left.truncate(i + 1);
                if let (Some(ov), Some(g)) = (overlaps.as_mut(), ground) {
                    ov.right[i] =
                        OverlapEnvs::extend_right_static(&ov.right[i + 1], &mps, g, i + 1);
                    ov.left.truncate(i + 1);
                }
            }
        }

        // The sweep's energy record is the final local eigenvalue — the
        // exact energy of the state as the sweep closes (transient minima
        // at a capped bond dimension can overshoot what the cap can
        // represent and are not comparable across sweeps).
        let sweep_energy = final_energy;
        log.push(SweepRecord {
            sweep,
            energy: sweep_energy,
            max_bond: sweep_bond,
            max_trunc_err: sweep_trunc,
        });

        let rel = (sweep_energy - last_energy).abs() / sweep_energy.abs().max(f64::MIN_POSITIVE);
        let truncation_trusted = sweep_trunc <= policy.svd_cutoff || cap >= policy.max_bond;
        if sweep > 1 && rel < policy.energy_rel_tol && truncation_trusted {
            converged = true;
            break;
        }
        last_energy = sweep_energy;
    }

    let sweeps_run = log.len();
    Ok(DmrgRun {
        mps,
        energy: final_energy,
        converged,
        sweeps_run,
        log,
    })
}

/// Variational ground-state search. Deterministic given the seed; the
/// result carries a convergence flag rather than failing on a sweep cap.
pub fn dmrg_ground(mpo: &Mpo, policy: &TruncationPolicy, seed: u64) -> Result<DmrgRun> {
    sweep_loop(mpo, policy, seed, None)
}

/// First excited state: minimizes energy in the orthogonal complement of a
/// converged ground state by projecting every local solve.
pub fn dmrg_excited(
    mpo: &Mpo,
    ground: &Mps,
    policy: &TruncationPolicy,
    seed: u64,
) -> Result<DmrgRun> {
    if ground.n_sites() != mpo.n_sites() {
        return Err(Error::invalid("ground state and operator lengths differ"));
    }
    sweep_loop(mpo, policy, seed, Some(ground))
}

/// Dataset generation through the matrix-product pipeline: same parameter
/// and noise seed streams as the exact-diagonalization generator, so the
/// two solvers produce identical `x` draws for a given seed.
pub fn generate_dataset_dmrg(
    family: &HamiltonianFamily,
    observable: &Observable,
    n_samples: usize,
    options: &DatasetOptions,
    policy: &TruncationPolicy,
    fit: Option<&ExpSumFit>,
    seed: u64,
) -> Result<Dataset> {
    if n_samples == 0 {
        return Err(Error::invalid("dataset needs at least one sample"));
    }
    let params_base = derive_seed(seed, tag::PARAMS);
    let solver_base = derive_seed(seed, tag::LANCZOS_START);
    let noise_base = derive_seed(seed, tag::NOISE);
    let mask_nb = match &options.mask {
        Some(m) => Some(family.hypergraph().neighborhood(&m.center, m.delta)?),
        None => None,
    };

    let rows = (0..n_samples)
        .into_par_iter()
        .map(|k| -> Result<DatasetRow> {
            let sample_seed = derive_seed(params_base, k as u64);
            let mut x = family.sample_params(sample_seed);
            if let Some(nb) = &mask_nb {
                x = family.mask_params(&x, nb)?;
            }
            let mpo = build_mpo(family, &x, fit)?;
            let run = dmrg_ground(&mpo, policy, derive_seed(solver_base, k as u64))?;
            if !run.converged {
                return Err(Error::NoConvergence {
                    what: "two-site sweep optimization",
                    detail: format!("sample {k}: {} sweeps did not converge", run.sweeps_run),
                });
            }
            let mut y = match observable.energy_scale {
                Some(scale) => scale * run.energy,
                None => mps_expectation(&run.mps, observable)?,
            };
            if options.noise_sigma > 0.0 {
                use rand::SeedableRng;
                use rand_distr::Distribution;
                let mut rng = rand_chacha::ChaCha12Rng::seed_from_u64(derive_seed(
                    noise_base, k as u64,
                ));
                let z: f64 = rand_distr::StandardNormal.sample(&mut rng);
                y += options.noise_sigma * z;
            }
            Ok(DatasetRow {
                x,
                y,
                seed: sample_seed,
            })
        })
        .collect::<Result<Vec<_>>>()?;

    Ok(Dataset {
        observable: observable.label.clone(),
        rows,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::exactdiag::{ground_state, SolverOptions};
    use crate::geometry::Boundary;
    use crate::hamiltonian::{build_observable, HamiltonianFamily, ObservableKind};
    use crate::tensor::expfit::fit_exp_sum;
    use approx::assert_abs_diff_eq;

    fn tight_policy() -> TruncationPolicy {
        TruncationPolicy {
            energy_rel_tol: 1e-9,
            ..TruncationPolicy::default()
        }
    }

    fn ed_energy(fam: &HamiltonianFamily, x: &crate::hamiltonian::ParamVector) -> (f64, f64) {
        let op = fam.operator(x).unwrap();
        let res = ground_state(&op, &SolverOptions::default()).unwrap();
        (res.e0, res.e1.unwrap())
    }

    #[test]
    fn heisenberg_n10_matches_exact_energy() {
        let fam = HamiltonianFamily::heisenberg(10, Boundary::Open).unwrap();
        let x = fam.sample_params(33);
        let (e0, _) = ed_energy(&fam, &x);
        let mpo = build_mpo(&fam, &x, None).unwrap();
        let run = dmrg_ground(&mpo, &tight_policy(), 1).unwrap();
        assert!(run.converged);
        let rel = (run.energy - e0).abs() / e0.abs();
        assert!(rel <= 1e-6, "relative energy gap {rel}");
        assert!(run.energy >= e0 - 1e-8 * e0.abs(), "variational bound violated");
    }

    #[test]
    fn product_field_ground_state_has_unit_bond() {
        let h = 1.3;
        let mpo = Mpo::transverse_field(8, h).unwrap();
        let run = dmrg_ground(&mpo, &TruncationPolicy::default(), 2).unwrap();
        assert!(run.converged);
        assert_abs_diff_eq!(run.energy, -8.0 * h, epsilon = 1e-8);
        assert_eq!(run.mps.max_bond(), 1);
    }

    #[test]
    fn ising_n12_matches_exact_within_fit_budget() {
        let fam = HamiltonianFamily::ising(12, Boundary::Open, 3.0).unwrap();
        let x = fam.sample_params(5);
        let (e0, _) = ed_energy(&fam, &x);
        let fit = fit_exp_sum(3.0, 64, 12, Boundary::Open, None).unwrap();
        let mpo = build_mpo(&fam, &x, Some(&fit)).unwrap();
        let run = dmrg_ground(&mpo, &tight_policy(), 3).unwrap();
        assert!(run.converged);
        let rel = (run.energy - e0).abs() / e0.abs();
        assert!(rel <= 1e-5, "relative energy gap {rel}");
    }

    #[test]
    fn sweep_energies_are_non_increasing() {
        let fam = HamiltonianFamily::heisenberg(10, Boundary::Open).unwrap();
        let x = fam.sample_params(8);
        let mpo = build_mpo(&fam, &x, None).unwrap();
        let run = dmrg_ground(&mpo, &tight_policy(), 4).unwrap();
        for pair in run.log.windows(2) {
            let slack = 1e-12 * pair[0].energy.abs().max(1.0);
            assert!(
                pair[1].energy <= pair[0].energy + slack,
                "sweep {} energy rose: {} -> {}",
                pair[1].sweep,
                pair[0].energy,
                pair[1].energy
            );
        }
    }

    #[test]
    fn tighter_cutoff_never_raises_energy() {
        let fam = HamiltonianFamily::heisenberg(16, Boundary::Open).unwrap();
        let x = fam.sample_params(12);
        let mpo = build_mpo(&fam, &x, None).unwrap();
        let loose = TruncationPolicy {
            svd_cutoff: 1e-7,
            ..tight_policy()
        };
        let e_loose = dmrg_ground(&mpo, &loose, 5).unwrap().energy;
        let e_tight = dmrg_ground(&mpo, &tight_policy(), 5).unwrap().energy;
        assert!(
            e_tight <= e_loose + 1e-8 * e_loose.abs(),
            "tightening cutoff raised energy: {e_loose} -> {e_tight}"
        );
    }

    #[test]
    fn excited_state_reproduces_gap() {
        let fam = HamiltonianFamily::heisenberg(8, Boundary::Open).unwrap();
        let x = fam.sample_params(21);
        let (e0, e1) = ed_energy(&fam, &x);
        let mpo = build_mpo(&fam, &x, None).unwrap();
        let ground = dmrg_ground(&mpo, &tight_policy(), 6).unwrap();
        let excited = dmrg_excited(&mpo, &ground.mps, &tight_policy(), 7).unwrap();
        let gap = excited.energy - ground.energy;
        let exact_gap = e1 - e0;
        assert!(gap >= -1e-8);
        let rel = (gap - exact_gap).abs() / exact_gap.abs();
        assert!(rel <= 1e-4, "gap {gap} vs exact {exact_gap} (rel {rel})");
        let ov = overlap(&excited.mps, &ground.mps).abs();
        assert!(ov <= 1e-6, "overlap with ground state {ov}");
    }

    #[test]
    fn two_site_chain_gap_is_exact() {
        let fam = HamiltonianFamily::heisenberg(2, Boundary::Open).unwrap();
        let x = crate::hamiltonian::ParamVector::new(vec![1.0]);
        let mpo = build_mpo(&fam, &x, None).unwrap();
        let ground = dmrg_ground(&mpo, &tight_policy(), 8).unwrap();
        assert_abs_diff_eq!(ground.energy, -3.0, epsilon = 1e-8);
        let excited = dmrg_excited(&mpo, &ground.mps, &tight_policy(), 9).unwrap();
        assert_abs_diff_eq!(excited.energy - ground.energy, 4.0, epsilon = 1e-6);
    }

    #[test]
    fn runs_are_deterministic_and_seed_robust() {
        let fam = HamiltonianFamily::heisenberg(8, Boundary::Open).unwrap();
        let x = fam.sample_params(2);
        let mpo = build_mpo(&fam, &x, None).unwrap();
        let a = dmrg_ground(&mpo, &tight_policy(), 10).unwrap();
        let b = dmrg_ground(&mpo, &tight_policy(), 10).unwrap();
        assert_eq!(a.energy.to_bits(), b.energy.to_bits());
        let c = dmrg_ground(&mpo, &tight_policy(), 11).unwrap();
        assert!((a.energy - c.energy).abs() <= 1e-9 * a.energy.abs());
    }

    #[test]
    fn periodic_ring_matches_exact_energy() {
        let fam = HamiltonianFamily::heisenberg(6, Boundary::Periodic).unwrap();
        let x = fam.sample_params(14);
        let (e0, _) = ed_energy(&fam, &x);
        let mpo = build_mpo(&fam, &x, None).unwrap();
        let run = dmrg_ground(&mpo, &tight_policy(), 12).unwrap();
        let rel = (run.energy - e0).abs() / e0.abs();
        assert!(rel <= 1e-6, "ring energy gap {rel}");
    }

    #[test]
    fn sweep_cap_reports_non_convergence() {
        let fam = HamiltonianFamily::heisenberg(10, Boundary::Open).unwrap();
        let x = fam.sample_params(3);
        let mpo = build_mpo(&fam, &x, None).unwrap();
        let policy = TruncationPolicy {
            max_sweeps: 1,
            energy_rel_tol: 1e-30,
            ..TruncationPolicy::default()
        };
        let run = dmrg_ground(&mpo, &policy, 13).unwrap();
        assert!(!run.converged);
        assert_eq!(run.sweeps_run, 1);
    }

    #[test]
    fn log_csv_has_expected_shape() {
        let mpo = Mpo::transverse_field(4, 1.0).unwrap();
        let run = dmrg_ground(&mpo, &TruncationPolicy::default(), 1).unwrap();
        let csv = run.log_csv(Some("cafe"));
        let mut lines = csv.lines();
        assert_eq!(lines.next().unwrap(), "# config-hash: cafe");
        assert_eq!(
            lines.next().unwrap(),
            "sweep,energy,max_bond_dim,truncation_error"
        );
        assert!(lines.next().unwrap().starts_with("1,"));
    }

    #[test]
    fn dmrg_dataset_matches_exact_dataset() {
        let fam = HamiltonianFamily::heisenberg(8, Boundary::Open).unwrap();
        let obs = build_observable(ObservableKind::LocalCorrelation { i: 3, j: 4 }, &fam).unwrap();
        let opts = crate::exactdiag::DatasetOptions::default();
        let exact = crate::exactdiag::generate_dataset(&fam, &obs, 3, &opts, 77).unwrap();
        let tensor =
            generate_dataset_dmrg(&fam, &obs, 3, &opts, &tight_policy(), None, 77).unwrap();
        for (a, b) in exact.rows.iter().zip(&tensor.rows) {
            assert_eq!(a.x, b.x, "parameter draws must agree across solvers");
            assert!(
                (a.y - b.y).abs() <= 1e-5,
                "targets disagree: {} vs {}",
                a.y,
                b.y
            );
        }
    }
}
