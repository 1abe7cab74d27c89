//! Matrix-product states over real tensors.
//!
//! Both Hamiltonian families are real symmetric matrices in the
//! computational basis (the only imaginary letter, `Y`, appears in pairs),
//! so ground and excited states can be represented with real amplitudes;
//! all state tensors are `f64` and every contraction stays real.
//!
//! Site `i` of the chain corresponds to bit `i` of a dense basis index,
//! matching the eigensolver's convention.

use nalgebra::DMatrix;
use rand::SeedableRng;
use rand_chacha::ChaCha12Rng;
use rand_distr::{Distribution, StandardNormal};

use crate::error::{Error, Result};
use crate::hamiltonian::{Observable, PauliLetter, PauliTerm};
use crate::tensor::mpo::Mpo;
use crate::util::{derive_seed, tag};

/// Largest qubit count for dense reconstruction of a state.
const DENSE_GUARD: usize = 12;

/// One site tensor, stored as `data[(a·2 + s)·dr + b]` for left bond `a`,
/// physical index `s`, right bond `b`.
#[derive(Debug, Clone)]
pub(crate) struct MpsTensor {
    pub dl: usize,
    pub dr: usize,
    pub data: Vec<f64>,
}

impl MpsTensor {
    pub(crate) fn zeros(dl: usize, dr: usize) -> Self {
        MpsTensor {
            dl,
            dr,
            data: vec![0.0; dl * 2 * dr],
        }
    }

    #[inline]
    pub(crate) fn at(&self, a: usize, s: usize, b: usize) -> f64 {
        self.data[(a * 2 + s) * self.dr + b]
    }

    #[inline]
    pub(crate) fn at_mut(&mut self, a: usize, s: usize, b: usize) -> &mut f64 {
        &mut self.data[(a * 2 + s) * self.dr + b]
    }

    /// View as a `(dl·2) × dr` matrix (grouping `(a, s)` as rows).
    pub(crate) fn as_matrix(&self) -> DMatrix<f64> {
        DMatrix::from_row_slice(self.dl * 2, self.dr, &self.data)
    }

    pub(crate) fn from_matrix(m: &DMatrix<f64>) -> Self {
        let dl = m.nrows() / 2;
        let dr = m.ncols();
        let mut data = Vec::with_capacity(dl * 2 * dr);
        for r in 0..m.nrows() {
            for c in 0..dr {
                data.push(m[(r, c)]);
            }
        }
        MpsTensor { dl, dr, data }
    }
}

/// A matrix-product state in mixed-canonical form: tensors strictly left of
/// `center` satisfy the left isometry condition, tensors strictly right of
/// it the right one.
#[derive(Debug, Clone)]
pub struct Mps {
    pub(crate) n: usize,
    pub(crate) tensors: Vec<MpsTensor>,
    pub(crate) center: usize,
}

impl Mps {
    pub fn n_sites(&self) -> usize {
        self.n
    }

    pub fn center(&self) -> usize {
        self.center
    }

    /// Internal bond dimensions (length `n+1`, 1 at both ends).
    pub fn bond_dims(&self) -> Vec<usize> {
        let mut dims = vec![1];
        dims.extend(self.tensors.iter().map(|t| t.dr));
        dims
    }

    pub fn max_bond(&self) -> usize {
        self.tensors.iter().map(|t| t.dr.max(t.dl)).max().unwrap_or(1)
    }

    /// Random state with entries from a seeded normal stream, brought to
    /// canonical form with the center at site 0 and normalized.
    pub fn random(n: usize, bond: usize, seed: u64) -> Result<Mps> {
        if n < 2 {
            return Err(Error::invalid("a matrix-product state needs at least 2 sites"));
        }
        if bond < 1 {
            return Err(Error::invalid("bond dimension must be at least 1"));
        }
        let mut rng = ChaCha12Rng::seed_from_u64(derive_seed(seed, tag::MPS_INIT));
        let normal = StandardNormal;
        let dim_at = |i: usize| -> usize {
            let left = 1usize << i.min(30);
            let right = 1usize << (n - i).min(30);
            bond.min(left).min(right)
        };
        let tensors = (0..n)
            .map(|i| {
                let dl = dim_at(i);
                let dr = dim_at(i + 1);
                let mut t = MpsTensor::zeros(dl, dr);
                for v in t.data.iter_mut() {
                    *v = normal.sample(&mut rng);
                }
                t
            })
            .collect();
        let mut mps = Mps {
            n,
            tensors,
            center: n - 1,
        };
        mps.move_center_to(0);
        mps.normalize_center();
        Ok(mps)
    }

    /// Product state `|s_0 s_1 … s_{n−1}⟩` (unit bonds).
    pub fn basis_state(bits: &[usize]) -> Result<Mps> {
        if bits.len() < 2 {
            return Err(Error::invalid("a matrix-product state needs at least 2 sites"));
        }
        let tensors = bits
            .iter()
            .map(|&s| {
                if s > 1 {
                    return Err(Error::invalid("basis bits must be 0 or 1"));
                }
                let mut t = MpsTensor::zeros(1, 1);
                *t.at_mut(0, s, 0) = 1.0;
                Ok(t)
            })
            .collect::<Result<Vec<_>>>()?;
        Ok(Mps {
            n: bits.len(),
            tensors,
            center: 0,
        })
    }

    fn normalize_center(&mut self) {
        let c = self.center;
        let norm: f64 = self.tensors[c].data.iter().map(|v| v * v).sum::<f64>().sqrt();
        if norm > 0.0 {
            for v in self.tensors[c].data.iter_mut() {
                *v /= norm;
            }
        }
    }

    /// QR-pushes the center one site to the right.
    fn shift_center_right(&mut self) {
        let i = self.center;
        let m = self.tensors[i].as_matrix();
        let qr = m.qr();
        let q = qr.q();
        let r = qr.r();
        self.tensors[i] = MpsTensor::from_matrix(&q);
        let next = self.tensors[i + 1].as_matrix();
        // R acts on the left bond of the next tensor: reshape (dl,2·dr).
        let dl = self.tensors[i + 1].dl;
        let dr = self.tensors[i + 1].dr;
        let mut merged = DMatrix::<f64>::zeros(r.nrows(), 2 * dr);
        // next as (dl, 2, dr): row index a, flattened (s·dr + b) columns.
        let next_by_left = {
            let mut m2 = DMatrix::<f64>::zeros(dl, 2 * dr);
            for a in 0..dl {
                for s in 0..2 {
                    for b in 0..dr {
                        m2[(a, s * dr + b)] = next[(a * 2 + s, b)];
                    }
                }
            }
            m2
        };
        merged.gemm(1.0, &r, &next_by_left, 0.0);
        let mut t = MpsTensor::zeros(r.nrows(), dr);
        for a in 0..r.nrows() {
            for s in 0..2 {
                for b in 0..dr {
                    *t.at_mut(a, s, b) = merged[(a, s * dr + b)];
                }
            }
        }
        self.tensors[i + 1] = t;
        self.center = i + 1;
    }

    /// QR-pushes the center one site to the left.
    fn shift_center_left(&mut self) {
        let i = self.center;
        let t = &self.tensors[i];
        // Reshape as (dl) × (2·dr) and QR the transpose.
        let mut m = DMatrix::<f64>::zeros(t.dl, 2 * t.dr);
        for a in 0..t.dl {
            for s in 0..2 {
                for b in 0..t.dr {
                    m[(a, s * t.dr + b)] = t.at(a, s, b);
                }
            }
        }
        let qr = m.transpose().qr();
        let q = qr.q(); // (2·dr) × r
        let r = qr.r(); // r × dl
        let rank = q.ncols();
        let dr = t.dr;
        let mut right = MpsTensor::zeros(rank, dr);
        for a in 0..rank {
            for s in 0..2 {
                for b in 0..dr {
                    *right.at_mut(a, s, b) = q[(s * dr + b, a)];
                }
            }
        }
        self.tensors[i] = right;
        let prev = self.tensors[i - 1].as_matrix(); // (dl_prev·2) × dl
        let mut merged = DMatrix::<f64>::zeros(prev.nrows(), rank);
        merged.gemm(1.0, &prev, &r.transpose(), 0.0);
        self.tensors[i - 1] = MpsTensor::from_matrix(&merged);
        self.center = i - 1;
    }

    /// Moves the canonical center to `site`.
    pub fn move_center_to(&mut self, site: usize) {
        while self.center < site {
            self.shift_center_right();
        }
        while self.center > site {
            self.shift_center_left();
        }
    }

    /// `⟨self|self⟩`.
    pub fn norm_sqr(&self) -> f64 {
        overlap(self, self)
    }

    /// Largest deviation from the isometry conditions away from the center.
    pub fn canonical_residual(&self) -> f64 {
        let mut worst = 0.0f64;
        for (i, t) in self.tensors.iter().enumerate() {
            let m = t.as_matrix();
            if i < self.center {
                let g = m.transpose() * &m;
                let id = DMatrix::<f64>::identity(g.nrows(), g.ncols());
                worst = worst.max((g - id).iter().map(|v| v.abs()).fold(0.0, f64::max));
            } else if i > self.center {
                // Right isometry: Σ_s A_s A_sᵀ = I on the left bond.
                let mut g = DMatrix::<f64>::zeros(t.dl, t.dl);
                for s in 0..2 {
                    let mut a_s = DMatrix::<f64>::zeros(t.dl, t.dr);
                    for a in 0..t.dl {
                        for b in 0..t.dr {
                            a_s[(a, b)] = t.at(a, s, b);
                        }
                    }
                    g.gemm(1.0, &a_s, &a_s.transpose(), 1.0);
                }
                let id = DMatrix::<f64>::identity(t.dl, t.dl);
                worst = worst.max((g - id).iter().map(|v| v.abs()).fold(0.0, f64::max));
            }
        }
        worst
    }

    /// Dense amplitude vector (little-endian site-to-bit order).
    pub fn to_dense(&self) -> Result<Vec<f64>> {
        if self.n > DENSE_GUARD {
            return Err(Error::TooLarge {
                what: "qubit count for dense state reconstruction",
                size: self.n,
                max: DENSE_GUARD,
            });
        }
        let dim = 1usize << self.n;
        let mut out = vec![0.0; dim];
        for (b, slot) in out.iter_mut().enumerate() {
            let mut v = vec![1.0f64];
            for (i, t) in self.tensors.iter().enumerate() {
                let s = (b >> i) & 1;
                let mut next = vec![0.0; t.dr];
                for (a, &va) in v.iter().enumerate() {
                    if va == 0.0 {
                        continue;
                    }
                    for (c, slot2) in next.iter_mut().enumerate() {
                        *slot2 += va * t.at(a, s, c);
                    }
                }
                v = next;
            }
            *slot = v[0];
        }
        Ok(out)
    }
}

/// `⟨bra|ket⟩` for real states.
pub fn overlap(bra: &Mps, ket: &Mps) -> f64 {
    assert_eq!(bra.n, ket.n, "overlap needs equal chain lengths");
    // E[a_bra, a_ket], starting from the trivial left boundary.
    let mut e = DMatrix::<f64>::from_element(1, 1, 1.0);
    for (tb, tk) in bra.tensors.iter().zip(&ket.tensors) {
        let mut next = DMatrix::<f64>::zeros(tb.dr, tk.dr);
        for s in 0..2 {
            // B_s: (dl_bra × dr_bra), K_s: (dl_ket × dr_ket)
            let mut b_s = DMatrix::<f64>::zeros(tb.dl, tb.dr);
            let mut k_s = DMatrix::<f64>::zeros(tk.dl, tk.dr);
            for a in 0..tb.dl {
                for b in 0..tb.dr {
                    b_s[(a, b)] = tb.at(a, s, b);
                }
            }
            for a in 0..tk.dl {
                for b in 0..tk.dr {
                    k_s[(a, b)] = tk.at(a, s, b);
                }
            }
            next += b_s.transpose() * &e * k_s;
        }
        e = next;
    }
    e[(0, 0)]
}

/// 2×2 real matrix of a letter, with `Y` replaced by `Ỹ = iY`; the second
/// return is true when the substitution happened.
fn letter_matrix(letter: PauliLetter) -> ([f64; 4], bool) {
    match letter {
        PauliLetter::X => ([0.0, 1.0, 1.0, 0.0], false),
        PauliLetter::Y => ([0.0, 1.0, -1.0, 0.0], true),
        PauliLetter::Z => ([1.0, 0.0, 0.0, -1.0], false),
    }
}

/// `⟨ψ|term|ψ⟩ / ⟨ψ|ψ⟩` for a single Pauli string on a real state.
pub fn term_expectation(mps: &Mps, term: &PauliTerm) -> Result<f64> {
    let n = mps.n;
    if term.support().sites().iter().any(|&s| s >= n) {
        return Err(Error::invalid("term support outside the chain"));
    }
    let y_count = term
        .letters()
        .iter()
        .filter(|l| matches!(l, PauliLetter::Y))
        .count();
    if y_count % 2 == 1 {
        // P = i·(antisymmetric real matrix); real states give exactly 0.
        return Ok(0.0);
    }
    // Y⊗Y = −Ỹ⊗Ỹ: each Y pair contributes a sign.
    let mut coeff = term.coefficient() * if (y_count / 2) % 2 == 1 { -1.0 } else { 1.0 };

    let mut e = DMatrix::<f64>::from_element(1, 1, 1.0);
    let mut norm = DMatrix::<f64>::from_element(1, 1, 1.0);
    for (i, t) in mps.tensors.iter().enumerate() {
        let op: [f64; 4] = match term.support().sites().iter().position(|&s| s == i) {
            Some(k) => letter_matrix(term.letters()[k]).0,
            None => [1.0, 0.0, 0.0, 1.0],
        };
        let mut slices = [DMatrix::<f64>::zeros(t.dl, t.dr), DMatrix::<f64>::zeros(t.dl, t.dr)];
        for s in 0..2 {
            for a in 0..t.dl {
                for b in 0..t.dr {
                    slices[s][(a, b)] = t.at(a, s, b);
                }
            }
        }
        let mut next = DMatrix::<f64>::zeros(t.dr, t.dr);
        let mut next_norm = DMatrix::<f64>::zeros(t.dr, t.dr);
        for s_out in 0..2 {
            for s_in in 0..2 {
                let w = op[s_out * 2 + s_in];
                if w != 0.0 {
                    next += (slices[s_out].transpose() * &e * &slices[s_in]).scale(w);
                }
            }
            next_norm += slices[s_out].transpose() * &norm * &slices[s_out];
        }
        e = next;
        norm = next_norm;
    }
    let ns = norm[(0, 0)];
    if ns <= 0.0 {
        return Err(Error::invalid("state has zero norm"));
    }
    coeff *= e[(0, 0)] / ns;
    Ok(coeff)
}

/// Expectation value of a term-built observable on a real state. Energy
/// observables are evaluated through the operator's matrix-product form
/// instead.
pub fn mps_expectation(mps: &Mps, obs: &Observable) -> Result<f64> {
    if obs.is_energy() {
        return Err(Error::invalid(
            "energy observables are measured from the optimizer energy, not Pauli terms",
        ));
    }
    let mut total = 0.0;
    for group in &obs.groups {
        for term in &group.terms {
            total += term_expectation(mps, term)?;
        }
    }
    Ok(total)
}

/// `⟨ψ|H|ψ⟩ / ⟨ψ|ψ⟩` through the operator's matrix-product form.
pub fn mpo_expectation(mps: &Mps, mpo: &Mpo) -> Result<f64> {
    if mps.n != mpo.n_sites() {
        return Err(Error::invalid("state and operator lengths differ"));
    }
    // E[w][a_bra, a_ket] indexed by the operator bond.
    let mut e: Vec<DMatrix<f64>> = vec![DMatrix::from_element(1, 1, 1.0)];
    for (i, t) in mps.tensors.iter().enumerate() {
        let w = mpo.tensor(i);
        let mut slices = [DMatrix::<f64>::zeros(t.dl, t.dr), DMatrix::<f64>::zeros(t.dl, t.dr)];
        for s in 0..2 {
            for a in 0..t.dl {
                for b in 0..t.dr {
                    slices[s][(a, b)] = t.at(a, s, b);
                }
            }
        }
        let mut next = vec![DMatrix::<f64>::zeros(t.dr, t.dr); w.wr];
        for (b_op, slot) in next.iter_mut().enumerate() {
            for (a_op, e_a) in e.iter().enumerate() {
                for s_out in 0..2 {
                    for s_in in 0..2 {
                        let val = w.entry(a_op, b_op, s_out, s_in);
                        if val != 0.0 {
                            *slot += (slices[s_out].transpose() * e_a * &slices[s_in]).scale(val);
                        }
                    }
                }
            }
        }
        e = next;
    }
    let num = e[0][(0, 0)];
    let den = mps.norm_sqr();
    if den <= 0.0 {
        return Err(Error::invalid("state has zero norm"));
    }
    Ok(num / den)
}
