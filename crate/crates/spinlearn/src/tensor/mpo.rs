//! Matrix-product operator grids for the two Hamiltonian families.
//!
//! All tensors are real: the only imaginary ingredient, `Y`, always occurs
//! in pairs (`Y_i Y_j`), so each grid stores the real matrix `Ỹ = iY` on
//! one side and `−Ỹ` on the other, leaving every contraction in `f64`.
//!
//! Long-range `Z Z` couplings ride exponential channels: a term of the
//! fitted kernel `Σ_l a_l λ_l^d` occupies one channel that is emitted with
//! weight `a_l λ_l`, damped by `λ_l` per hop, and absorbed bare. Folding
//! the weight into the emission keeps intermediate channel values bounded
//! even for the reciprocal bases of ring fits.

use nalgebra::DMatrix;

use crate::error::{Error, Result};
use crate::hamiltonian::{FamilyKind, HamiltonianFamily, ParamVector};
use crate::tensor::expfit::ExpSumFit;

/// Largest qubit count for dense reconstruction of an MPO.
const DENSE_GUARD: usize = 8;

/// 2×2 real operators, row-major `[out][in]`.
const OP_I: [f64; 4] = [1.0, 0.0, 0.0, 1.0];
const OP_X: [f64; 4] = [0.0, 1.0, 1.0, 0.0];
const OP_Z: [f64; 4] = [1.0, 0.0, 0.0, -1.0];
/// `Ỹ = iY`.
const OP_YT: [f64; 4] = [0.0, 1.0, -1.0, 0.0];
/// `−Ỹ`, the absorbing side of a `Y_i Y_j` pair (`Y⊗Y = −Ỹ⊗Ỹ`).
const OP_YT_NEG: [f64; 4] = [0.0, -1.0, 1.0, 0.0];

/// One site's operator-valued matrix, stored as
/// `data[((a·wr + b)·2 + s_out)·2 + s_in]`.
#[derive(Debug, Clone)]
pub(crate) struct MpoTensor {
    pub wl: usize,
    pub wr: usize,
    pub data: Vec<f64>,
}

impl MpoTensor {
    fn zeros(wl: usize, wr: usize) -> Self {
        MpoTensor {
            wl,
            wr,
            data: vec![0.0; wl * wr * 4],
        }
    }

    fn add(&mut self, a: usize, b: usize, op: &[f64; 4], scale: f64) {
        let base = (a * self.wr + b) * 4;
        for s in 0..4 {
            self.data[base + s] += scale * op[s];
        }
    }

    pub(crate) fn entry(&self, a: usize, b: usize, s_out: usize, s_in: usize) -> f64 {
        self.data[((a * self.wr + b) * 2 + s_out) * 2 + s_in]
    }
}

/// A Hamiltonian in matrix-product form: boundary selections are folded
/// into the first (1×w) and last (w×1) site tensors.
#[derive(Debug, Clone)]
pub struct Mpo {
    n: usize,
    tensors: Vec<MpoTensor>,
}

impl Mpo {
    pub fn n_sites(&self) -> usize {
        self.n
    }

    /// Internal bond dimensions (length `n+1`, with 1 at both ends).
    pub fn bond_dims(&self) -> Vec<usize> {
        let mut dims = vec![1];
        dims.extend(self.tensors.iter().map(|t| t.wr));
        dims
    }

    pub fn max_bond(&self) -> usize {
        self.bond_dims().into_iter().max().unwrap_or(1)
    }

    pub(crate) fn tensor(&self, i: usize) -> &MpoTensor {
        &self.tensors[i]
    }

    /// Sum of a row of on-site fields: grid `[I, hX; 0, I]`. Useful as the
    /// simplest nontrivial operator (product ground state, unit bond MPS).
    pub fn transverse_field(n: usize, h: f64) -> Result<Mpo> {
        if n < 2 {
            return Err(Error::invalid("field MPO needs at least 2 sites"));
        }
        let mut tensors = Vec::with_capacity(n);
        let mut first = MpoTensor::zeros(1, 2);
        first.add(0, 0, &OP_I, 1.0);
        first.add(0, 1, &OP_X, h);
        tensors.push(first);
        for _ in 1..n - 1 {
            let mut w = MpoTensor::zeros(2, 2);
            w.add(0, 0, &OP_I, 1.0);
            w.add(0, 1, &OP_X, h);
            w.add(1, 1, &OP_I, 1.0);
            tensors.push(w);
        }
        let mut last = MpoTensor::zeros(2, 1);
        last.add(0, 0, &OP_X, h);
        last.add(1, 0, &OP_I, 1.0);
        tensors.push(last);
        Ok(Mpo { n, tensors })
    }

    /// Dense matrix reconstruction for oracle comparisons on small chains.
    pub fn to_dense(&self) -> Result<DMatrix<f64>> {
        if self.n > DENSE_GUARD {
            return Err(Error::TooLarge {
                what: "qubit count for dense MPO contraction",
                size: self.n,
                max: DENSE_GUARD,
            });
        }
        let dim = 1usize << self.n;
        let mut out = DMatrix::<f64>::zeros(dim, dim);
        for row in 0..dim {
            for col in 0..dim {
                let mut v = vec![1.0f64];
                for (i, t) in self.tensors.iter().enumerate() {
                    let s_out = (row >> i) & 1;
                    let s_in = (col >> i) & 1;
                    let mut next = vec![0.0; t.wr];
                    for (a, &va) in v.iter().enumerate() {
                        if va == 0.0 {
                            continue;
                        }
                        for (b, nb) in next.iter_mut().enumerate() {
                            *nb += va * t.entry(a, b, s_out, s_in);
                        }
                    }
                    v = next;
                }
                out[(row, col)] = v[0];
            }
        }
        Ok(out)
    }
}

fn heisenberg_coupling(family: &HamiltonianFamily, x: &ParamVector, e: usize) -> f64 {
    x.values()[family.hypergraph().param_range(e).start]
}

fn heisenberg_open(family: &HamiltonianFamily, x: &ParamVector) -> Mpo {
    let n = family.n_sites();
    // Channels: 0 ready, 1..=3 open X/Ỹ/Z couplings, 4 done.
    let mut tensors = Vec::with_capacity(n);
    let row = |t: &mut MpoTensor, j: f64| {
        t.add(0, 0, &OP_I, 1.0);
        t.add(0, 1, &OP_X, j);
        t.add(0, 2, &OP_YT, j);
        t.add(0, 3, &OP_Z, j);
    };
    let col = |t: &mut MpoTensor, done: usize| {
        t.add(1, done, &OP_X, 1.0);
        t.add(2, done, &OP_YT_NEG, 1.0);
        t.add(3, done, &OP_Z, 1.0);
        t.add(4, done, &OP_I, 1.0);
    };
    let mut first = MpoTensor::zeros(1, 5);
    row(&mut first, heisenberg_coupling(family, x, 0));
    tensors.push(first);
    for i in 1..n - 1 {
        let mut w = MpoTensor::zeros(5, 5);
        row(&mut w, heisenberg_coupling(family, x, i));
        col(&mut w, 4);
        tensors.push(w);
    }
    let mut last = MpoTensor::zeros(5, 1);
    col(&mut last, 0);
    tensors.push(last);
    Mpo { n, tensors }
}

fn heisenberg_periodic(family: &HamiltonianFamily, x: &ParamVector) -> Mpo {
    let n = family.n_sites();
    // Channels: 0 ready; 1..=3 wrap coupling carried the whole chain;
    // 4..=6 nearest-neighbor coupling; 7 done.
    let j_wrap = heisenberg_coupling(family, x, n - 1);
    let mut tensors = Vec::with_capacity(n);

    let mut first = MpoTensor::zeros(1, 8);
    first.add(0, 0, &OP_I, 1.0);
    first.add(0, 1, &OP_X, j_wrap);
    first.add(0, 2, &OP_YT, j_wrap);
    first.add(0, 3, &OP_Z, j_wrap);
    let j0 = heisenberg_coupling(family, x, 0);
    first.add(0, 4, &OP_X, j0);
    first.add(0, 5, &OP_YT, j0);
    first.add(0, 6, &OP_Z, j0);
    tensors.push(first);

    for i in 1..n - 1 {
        let mut w = MpoTensor::zeros(8, 8);
        let j = heisenberg_coupling(family, x, i);
        w.add(0, 0, &OP_I, 1.0);
        w.add(0, 4, &OP_X, j);
        w.add(0, 5, &OP_YT, j);
        w.add(0, 6, &OP_Z, j);
        for c in 1..=3 {
            w.add(c, c, &OP_I, 1.0);
        }
        w.add(4, 7, &OP_X, 1.0);
        w.add(5, 7, &OP_YT_NEG, 1.0);
        w.add(6, 7, &OP_Z, 1.0);
        w.add(7, 7, &OP_I, 1.0);
        tensors.push(w);
    }

    let mut last = MpoTensor::zeros(8, 1);
    last.add(1, 0, &OP_X, 1.0);
    last.add(2, 0, &OP_YT_NEG, 1.0);
    last.add(3, 0, &OP_Z, 1.0);
    last.add(4, 0, &OP_X, 1.0);
    last.add(5, 0, &OP_YT_NEG, 1.0);
    last.add(6, 0, &OP_Z, 1.0);
    last.add(7, 0, &OP_I, 1.0);
    tensors.push(last);
    Mpo { n, tensors }
}

fn ising_mpo(
    family: &HamiltonianFamily,
    x: &ParamVector,
    fit: &ExpSumFit,
    field: f64,
) -> Result<Mpo> {
    let n = family.n_sites();
    let k = fit.k();
    let w = 2 * k + 2;
    // Channels: 0 ready; 1..=k carry the J_i-weighted part of a coupling;
    // k+1..=2k carry the unweighted part; 2k+1 done.
    let js = x.values();
    let emit = |t: &mut MpoTensor, site: usize| {
        t.add(0, 0, &OP_I, 1.0);
        for (l, (&a, &lam)) in fit.weights.iter().zip(&fit.bases).enumerate() {
            t.add(0, 1 + l, &OP_Z, a * lam * js[site]);
            t.add(0, 1 + k + l, &OP_Z, a * lam);
        }
        t.add(0, 2 * k + 1, &OP_X, field);
    };
    let absorb = |t: &mut MpoTensor, site: usize, done: usize| {
        for l in 0..k {
            t.add(1 + l, done, &OP_Z, js[site]);
            t.add(1 + k + l, done, &OP_Z, 1.0);
        }
        t.add(2 * k + 1, done, &OP_I, 1.0);
    };

    let mut tensors = Vec::with_capacity(n);
    let mut first = MpoTensor::zeros(1, w);
    emit(&mut first, 0);
    tensors.push(first);
    for i in 1..n - 1 {
        let mut t = MpoTensor::zeros(w, w);
        emit(&mut t, i);
        absorb(&mut t, i, 2 * k + 1);
        for (l, &lam) in fit.bases.iter().enumerate() {
            t.add(1 + l, 1 + l, &OP_I, lam);
            t.add(1 + k + l, 1 + k + l, &OP_I, lam);
        }
        tensors.push(t);
    }
    let mut last = MpoTensor::zeros(w, 1);
    last.add(0, 0, &OP_X, field);
    absorb(&mut last, n - 1, 0);
    tensors.push(last);
    Ok(Mpo { n, tensors })
}

/// Builds the matrix-product form of `H(x)`. The Heisenberg grids are
/// exact (bond 5 open, 8 periodic); the Ising grid (bond `2K+2`) requires
/// an exponential-sum fit of its decay kernel, whose recorded error bounds
/// the reconstruction error.
pub fn build_mpo(
    family: &HamiltonianFamily,
    x: &ParamVector,
    fit: Option<&ExpSumFit>,
) -> Result<Mpo> {
    let n = family.n_sites();
    if n < 2 {
        return Err(Error::invalid("matrix-product form needs at least 2 sites"));
    }
    if x.len() != family.param_dim() {
        return Err(Error::invalid(format!(
            "parameter vector has length {}, family needs {}",
            x.len(),
            family.param_dim()
        )));
    }
    match family.kind() {
        FamilyKind::Heisenberg => {
            if family.lattice().boundary() == crate::geometry::Boundary::Periodic && n >= 3 {
                Ok(heisenberg_periodic(family, x))
            } else {
                Ok(heisenberg_open(family, x))
            }
        }
        FamilyKind::Ising { alpha, field } => {
            let fit = fit.ok_or_else(|| {
                Error::invalid("Ising matrix-product form needs an exponential-sum fit")
            })?;
            if (fit.alpha - alpha).abs() > 1e-12 {
                return Err(Error::invalid(format!(
                    "fit exponent {} does not match family exponent {alpha}",
                    fit.alpha
                )));
            }
            match family.lattice().boundary() {
                crate::geometry::Boundary::Open => {
                    if fit.ring_n.is_some() {
                        return Err(Error::invalid("open chain given a ring fit"));
                    }
                    if fit.l_max < n - 1 {
                        return Err(Error::invalid(format!(
                            "fit range {} does not cover separation {}",
                            fit.l_max,
                            n - 1
                        )));
                    }
                }
                crate::geometry::Boundary::Periodic => {
                    if fit.ring_n != Some(n) {
                        return Err(Error::invalid(format!(
                            "ring fit for n={:?} used on a ring of {n} sites",
                            fit.ring_n
                        )));
                    }
                }
            }
            ising_mpo(family, x, fit, field)
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::Boundary;
    use crate::tensor::expfit::fit_exp_sum;

    /// Real part of the exact dense Hamiltonian, asserting it is real.
    fn dense_real(family: &HamiltonianFamily, x: &ParamVector) -> DMatrix<f64> {
        let dense = family.operator(x).unwrap().to_dense().unwrap();
        let imag_max = dense.iter().map(|z| z.im.abs()).fold(0.0f64, f64::max);
        assert!(imag_max <= 1e-12, "expected a real Hamiltonian");
        dense.map(|z| z.re)
    }

    fn max_abs_diff(a: &DMatrix<f64>, b: &DMatrix<f64>) -> f64 {
        (a - b).iter().map(|v| v.abs()).fold(0.0f64, f64::max)
    }

    #[test]
    fn heisenberg_open_matches_dense() {
        let fam = HamiltonianFamily::heisenberg(4, Boundary::Open).unwrap();
        let x = fam.sample_params(7);
        let mpo = build_mpo(&fam, &x, None).unwrap();
        assert_eq!(mpo.max_bond(), 5);
        let diff = max_abs_diff(&mpo.to_dense().unwrap(), &dense_real(&fam, &x));
        assert!(diff <= 1e-12, "entrywise gap {diff}");
    }

    #[test]
    fn heisenberg_periodic_matches_dense_with_wrap() {
        let fam = HamiltonianFamily::heisenberg(6, Boundary::Periodic).unwrap();
        let x = fam.sample_params(8);
        let mpo = build_mpo(&fam, &x, None).unwrap();
        assert_eq!(mpo.max_bond(), 8);
        let diff = max_abs_diff(&mpo.to_dense().unwrap(), &dense_real(&fam, &x));
        assert!(diff <= 1e-12, "entrywise gap {diff}");

        // Only the wrap coupling set: the reconstruction must see it.
        let mut only_wrap = vec![0.0; fam.param_dim()];
        *only_wrap.last_mut().unwrap() = 1.5;
        let x = ParamVector::new(only_wrap);
        let mpo = build_mpo(&fam, &x, None).unwrap();
        let dense = mpo.to_dense().unwrap();
        assert!(dense.iter().any(|v| v.abs() > 1.0));
        let diff = max_abs_diff(&dense, &dense_real(&fam, &x));
        assert!(diff <= 1e-12, "wrap-only gap {diff}");
    }

    #[test]
    fn ising_matches_dense_within_fit_error() {
        let fam = HamiltonianFamily::ising(6, Boundary::Open, 3.0).unwrap();
        let x = fam.sample_params(9);
        let fit = fit_exp_sum(3.0, 64, 6, Boundary::Open, None).unwrap();
        let mpo = build_mpo(&fam, &x, Some(&fit)).unwrap();
        assert_eq!(mpo.max_bond(), 2 * fit.k() + 2);
        // Propagate the kernel error through the coupling magnitudes.
        let mut budget = 1e-10;
        for i in 0..6 {
            for j in i + 1..6 {
                let d = (j - i) as f64;
                let kernel_err = (fit.eval(d) - d.powf(-3.0)).abs();
                budget += kernel_err * (1.0 + x.values()[i] * x.values()[j]).abs();
            }
        }
        let diff = max_abs_diff(&mpo.to_dense().unwrap(), &dense_real(&fam, &x));
        assert!(diff <= budget, "gap {diff} exceeds propagated budget {budget}");
    }

    #[test]
    fn ising_ring_matches_dense_within_fit_error() {
        let n = 8;
        let fam = HamiltonianFamily::ising(n, Boundary::Periodic, 3.0).unwrap();
        let x = fam.sample_params(10);
        let fit = fit_exp_sum(3.0, n - 1, 8, Boundary::Periodic, Some(n)).unwrap();
        let mpo = build_mpo(&fam, &x, Some(&fit)).unwrap();
        let mut budget = 1e-10;
        for i in 0..n {
            for j in i + 1..n {
                let sep = (j - i) as f64;
                let d = (j - i).min(n - (j - i)) as f64;
                let kernel_err = (fit.eval(sep) - d.powf(-3.0)).abs();
                budget += kernel_err * (1.0 + x.values()[i] * x.values()[j]).abs();
            }
        }
        let diff = max_abs_diff(&mpo.to_dense().unwrap(), &dense_real(&fam, &x));
        assert!(diff <= budget, "ring gap {diff} exceeds budget {budget}");
    }

    #[test]
    fn field_mpo_matches_sum_of_x() {
        let mpo = Mpo::transverse_field(4, 1.25).unwrap();
        let dense = mpo.to_dense().unwrap();
        let mut expect = DMatrix::<f64>::zeros(16, 16);
        for i in 0..4 {
            for b in 0..16usize {
                expect[(b ^ (1 << i), b)] += 1.25;
            }
        }
        assert!(max_abs_diff(&dense, &expect) <= 1e-14);
    }

    #[test]
    fn ising_requires_matching_fit() {
        let fam = HamiltonianFamily::ising(6, Boundary::Open, 3.0).unwrap();
        let x = fam.sample_params(1);
        assert!(build_mpo(&fam, &x, None).is_err());
        let wrong_alpha = fit_exp_sum(2.0, 64, 6, Boundary::Open, None).unwrap();
        assert!(build_mpo(&fam, &x, Some(&wrong_alpha)).is_err());
        let short = fit_exp_sum(3.0, 3, 2, Boundary::Open, None).unwrap();
        assert!(build_mpo(&fam, &x, Some(&short)).is_err());
    }
}
