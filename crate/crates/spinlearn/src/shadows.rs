//! Classical shadows: randomized single-qubit Pauli measurements simulated
//! from exact state vectors.
//!
//! Each snapshot draws an independent uniform basis (X, Y, or Z) for every
//! qubit and samples the joint outcome from the exact Born distribution by
//! measuring one qubit at a time and collapsing the state — exact sampling
//! at `O(n·2^n)` per snapshot instead of enumerating all `6^n` outcomes.
//! The stored record of bases and outcome bits is classical data from which
//! Pauli expectations and reduced density matrices are reconstructed with
//! the inverse-channel factors `3|s⟩⟨s| − 1`.
//!
//! Estimates are never clipped: individual snapshot factors reach `±3^k`
//! and finite-`T` means may leave `[−1, 1]`; truncating them would bias the
//! estimator.

use nalgebra::DMatrix;
use num_complex::Complex64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha12Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::exactdiag::{ground_state, Dataset, DatasetRow, SolverOptions};
use crate::geometry::SiteSet;
use crate::hamiltonian::{HamiltonianFamily, PauliLetter, PauliTerm};
use crate::util::{derive_seed, mean, sample_sd, tag};

/// Largest qubit count the sequential-collapse sampler accepts.
pub const SHADOW_QUBIT_GUARD: usize = 16;

/// Largest Pauli / subset support the estimators accept: the inverse-channel
/// variance grows as `9^k`, so larger supports are out of the estimator's
/// useful range.
pub const SHADOW_SUPPORT_GUARD: usize = 4;

/// One randomized measurement round: the basis chosen for every qubit and
/// the outcome bit observed there (`false` = the `+1` eigenstate).
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Snapshot {
    pub bases: Vec<PauliLetter>,
    pub bits: Vec<bool>,
}

/// The classical data of `T` randomized Pauli measurement rounds on an
/// `n`-qubit state.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ShadowRecord {
    n: usize,
    snapshots: Vec<Snapshot>,
}

/// A scalar reconstructed from a [`ShadowRecord`] with its statistical
/// uncertainty.
#[derive(Debug, Clone, PartialEq)]
pub struct ShadowEstimate {
    /// Label of the estimated quantity (a Pauli-term label).
    pub target: String,
    /// Mean of the per-snapshot estimator.
    pub value: f64,
    /// Standard error of the mean (sample standard deviation over `√T`);
    /// infinite for a single-snapshot record.
    pub std_error: f64,
}

impl ShadowRecord {
    /// Number of qubits each snapshot covers.
    pub fn n_qubits(&self) -> usize {
        self.n
    }

    /// Number of snapshots `T`.
    pub fn len(&self) -> usize {
        self.snapshots.len()
    }

    pub fn is_empty(&self) -> bool {
        self.snapshots.is_empty()
    }

    pub fn snapshots(&self) -> &[Snapshot] {
        &self.snapshots
    }

    /// One JSON object per snapshot: `{"t": 0, "bases": "XZY", "bits":
    /// "010"}`, with an optional `# config-hash:` comment line first.
    pub fn to_jsonl(&self, config_hash: Option<&str>) -> String {
        let mut out = String::new();
        if let Some(h) = config_hash {
            out.push_str(&format!("# config-hash: {h}\n"));
        }
        for (t, snap) in self.snapshots.iter().enumerate() {
            let bases: String = snap.bases.iter().map(|b| b.as_char()).collect();
            let bits: String = snap
                .bits
                .iter()
                .map(|&b| if b { '1' } else { '0' })
                .collect();
            let json = serde_json::to_string(&SnapshotJson { t, bases, bits })
                .expect("snapshot serialization cannot fail");
            out.push_str(&json);
            out.push('\n');
        }
        out
    }

    pub fn from_jsonl(text: &str) -> Result<ShadowRecord> {
        let mut snapshots = Vec::new();
        let mut n: Option<usize> = None;
        for line in text.lines() {
            let line = line.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let row: SnapshotJson = serde_json::from_str(line)?;
            if row.bases.len() != row.bits.len() {
                return Err(Error::invalid(
                    "snapshot line has mismatched bases/bits lengths",
                ));
            }
            match n {
                None => n = Some(row.bases.len()),
                Some(width) if width != row.bases.len() => {
                    return Err(Error::invalid("snapshot lines have inconsistent widths"))
                }
                _ => {}
            }
            let bases = row
                .bases
                .chars()
                .map(PauliLetter::from_char)
                .collect::<Result<Vec<_>>>()?;
            let bits = row
                .bits
                .chars()
                .map(|c| match c {
                    '0' => Ok(false),
                    '1' => Ok(true),
                    other => Err(Error::invalid(format!("bad outcome bit {other:?}"))),
                })
                .collect::<Result<Vec<_>>>()?;
            snapshots.push(Snapshot { bases, bits });
        }
        let n = n.ok_or_else(|| Error::invalid("record JSONL contains no snapshots"))?;
        Ok(ShadowRecord { n, snapshots })
    }
}

#[derive(Serialize, Deserialize)]
struct SnapshotJson {
    t: usize,
    bases: String,
    bits: String,
}

/// Measures every qubit of `state` in `t_snapshots` independent rounds of
/// uniformly random X/Y/Z bases, sampling outcomes from the exact Born
/// distribution by sequential collapse. Deterministic given `seed`;
/// snapshots are sampled in parallel from per-snapshot derived seeds.
pub fn sample_shadow(state: &[Complex64], t_snapshots: usize, seed: u64) -> Result<ShadowRecord> {
    let n = qubit_count(state)?;
    if t_snapshots == 0 {
        return Err(Error::invalid("shadow record needs at least one snapshot"));
    }
    let norm_sq: f64 = state.iter().map(|z| z.norm_sqr()).sum();
    if (norm_sq - 1.0).abs() > 1e-8 {
        return Err(Error::invalid(format!(
            "state must be normalized (Σ|ψ|² = {norm_sq})"
        )));
    }
    let base = derive_seed(seed, tag::SHADOW_SNAPSHOT);
    let snapshots: Vec<Snapshot> = (0..t_snapshots)
        .into_par_iter()
        .map(|t| sample_snapshot(state, n, derive_seed(base, t as u64)))
        .collect();
    Ok(ShadowRecord { n, snapshots })
}

fn qubit_count(state: &[Complex64]) -> Result<usize> {
    let dim = state.len();
    if dim < 2 || !dim.is_power_of_two() {
        return Err(Error::invalid(format!(
            "state length {dim} is not a power of two ≥ 2"
        )));
    }
    let n = dim.trailing_zeros() as usize;
    if n > SHADOW_QUBIT_GUARD {
        return Err(Error::TooLarge {
            what: "qubit count for shadow sampling",
            size: n,
            max: SHADOW_QUBIT_GUARD,
        });
    }
    Ok(n)
}

/// One measurement round: draw all bases, then measure qubit 0, collapse,
/// measure qubit 1, ... Site `i` is bit `i` of the basis index.
fn sample_snapshot(state: &[Complex64], n: usize, snapshot_seed: u64) -> Snapshot {
    let mut rng = ChaCha12Rng::seed_from_u64(snapshot_seed);
    let bases: Vec<PauliLetter> = (0..n)
        .map(|_| match rng.gen_range(0..3u8) {
            0 => PauliLetter::X,
            1 => PauliLetter::Y,
            _ => PauliLetter::Z,
        })
        .collect();
    let mut psi = state.to_vec();
    let mut bits = Vec::with_capacity(n);
    for (i, &basis) in bases.iter().enumerate() {
        let p_plus = plus_probability(&psi, i, basis);
        let u: f64 = rng.gen();
        let bit = u >= p_plus; // false ⇔ the +1 outcome
        collapse(&mut psi, i, basis, bit);
        bits.push(bit);
    }
    Snapshot { bases, bits }
}

/// Probability of the `+1` outcome when measuring `basis` on qubit `i`.
fn plus_probability(psi: &[Complex64], i: usize, basis: PauliLetter) -> f64 {
    let mask = 1usize << i;
    let mut p = 0.0;
    match basis {
        PauliLetter::Z => {
            for (b, amp) in psi.iter().enumerate() {
                if b & mask == 0 {
                    p += amp.norm_sqr();
                }
            }
        }
        PauliLetter::X => {
            // ⟨+|ψ⟩ per pair: (ψ_b0 + ψ_b1)/√2.
            for b0 in 0..psi.len() {
                if b0 & mask == 0 {
                    p += 0.5 * (psi[b0] + psi[b0 | mask]).norm_sqr();
                }
            }
        }
        PauliLetter::Y => {
            // ⟨+y|ψ⟩ per pair: (ψ_b0 − i ψ_b1)/√2.
            for b0 in 0..psi.len() {
                if b0 & mask == 0 {
                    p += 0.5 * (psi[b0] - Complex64::i() * psi[b0 | mask]).norm_sqr();
                }
            }
        }
    }
    p.clamp(0.0, 1.0)
}

/// Projects `psi` onto the observed eigenstate of `basis` on qubit `i` and
/// renormalizes.
fn collapse(psi: &mut [Complex64], i: usize, basis: PauliLetter, bit: bool) {
    let mask = 1usize << i;
    match basis {
        PauliLetter::Z => {
            let keep_one = bit;
            for (b, amp) in psi.iter_mut().enumerate() {
                if (b & mask != 0) != keep_one {
                    *amp = Complex64::new(0.0, 0.0);
                }
            }
        }
        PauliLetter::X => {
            // Outcome eigenstates (|0⟩ ± |1⟩)/√2.
            let sign = if bit { -1.0 } else { 1.0 };
            for b0 in 0..psi.len() {
                if b0 & mask == 0 {
                    let overlap = 0.5 * (psi[b0] + sign * psi[b0 | mask]);
                    psi[b0] = overlap;
                    psi[b0 | mask] = sign * overlap;
                }
            }
        }
        PauliLetter::Y => {
            // Outcome eigenstates (|0⟩ ± i|1⟩)/√2.
            let sign = if bit { -1.0 } else { 1.0 };
            for b0 in 0..psi.len() {
                if b0 & mask == 0 {
                    let overlap =
                        0.5 * (psi[b0] - sign * Complex64::i() * psi[b0 | mask]);
                    psi[b0] = overlap;
                    psi[b0 | mask] = sign * Complex64::i() * overlap;
                }
            }
        }
    }
    let norm: f64 = psi.iter().map(|z| z.norm_sqr()).sum::<f64>().sqrt();
    if norm > 0.0 {
        for amp in psi.iter_mut() {
            *amp /= norm;
        }
    }
}

/// Reconstructs the expectation of the Pauli term `p` (coefficient
/// included) from a shadow record.
///
/// The per-snapshot estimator is the product, over `p`'s support, of
/// `3·(±1)` when the measured basis matches the term's letter there (sign
/// from the outcome bit) and `0` otherwise; qubits outside the support
/// contribute `1`.
pub fn estimate_pauli(record: &ShadowRecord, p: &PauliTerm) -> Result<ShadowEstimate> {
    let support = p.support().sites();
    if support.len() > SHADOW_SUPPORT_GUARD {
        return Err(Error::TooLarge {
            what: "Pauli support for the shadow estimator",
            size: support.len(),
            max: SHADOW_SUPPORT_GUARD,
        });
    }
    if let Some(&max_site) = support.last() {
        if max_site >= record.n {
            return Err(Error::invalid(format!(
                "Pauli site {max_site} exceeds record width {}",
                record.n
            )));
        }
    }
    let samples: Vec<f64> = record
        .snapshots
        .iter()
        .map(|snap| {
            let mut factor = 1.0;
            for (&site, &letter) in support.iter().zip(p.letters()) {
                if snap.bases[site] == letter {
                    factor *= if snap.bits[site] { -3.0 } else { 3.0 };
                } else {
                    factor = 0.0;
                    break;
                }
            }
            p.coefficient() * factor
        })
        .collect();
    let value = mean(&samples);
    let t = samples.len();
    let std_error = if t >= 2 {
        sample_sd(&samples) / (t as f64).sqrt()
    } else {
        f64::INFINITY
    };
    Ok(ShadowEstimate {
        target: p.label(),
        value,
        std_error,
    })
}

/// Reconstructs the reduced density matrix on `subset` as the snapshot mean
/// of `⊗_{i∈subset} (3|s_i⟩⟨s_i| − 1)`.
///
/// The result is Hermitian with trace exactly one (each snapshot factor has
/// trace one); its trace-norm distance to the exact reduced state shrinks
/// as `T` grows. Qubit order: the smallest site of `subset` is bit 0 of the
/// reduced index, matching the global convention.
pub fn reduced_dm(record: &ShadowRecord, subset: &SiteSet) -> Result<DMatrix<Complex64>> {
    let sites = subset.sites();
    if sites.len() > SHADOW_SUPPORT_GUARD {
        return Err(Error::TooLarge {
            what: "subset size for shadow state reconstruction",
            size: sites.len(),
            max: SHADOW_SUPPORT_GUARD,
        });
    }
    if *sites.last().expect("site sets are nonempty") >= record.n {
        return Err(Error::invalid(format!(
            "subset site {} exceeds record width {}",
            sites.last().unwrap(),
            record.n
        )));
    }
    let dim = 1usize << sites.len();
    let mut acc = DMatrix::<Complex64>::zeros(dim, dim);
    for snap in &record.snapshots {
        // Highest site first so the smallest site lands in the least
        // significant position of the Kronecker index.
        let mut factor = single_qubit_factor(
            snap.bases[*sites.last().unwrap()],
            snap.bits[*sites.last().unwrap()],
        );
        for &site in sites.iter().rev().skip(1) {
            factor = factor.kronecker(&single_qubit_factor(snap.bases[site], snap.bits[site]));
        }
        acc += factor;
    }
    Ok(acc / Complex64::new(record.snapshots.len() as f64, 0.0))
}

/// `3|s⟩⟨s| − 1` for the eigenstate `|s⟩` of `basis` with eigenvalue
/// `+1` (`bit = false`) or `−1` (`bit = true`).
fn single_qubit_factor(basis: PauliLetter, bit: bool) -> DMatrix<Complex64> {
    let sign = if bit { -1.0 } else { 1.0 };
    let (a, b) = match basis {
        // |s⟩ = |0⟩ or |1⟩.
        PauliLetter::Z => {
            if bit {
                (Complex64::new(0.0, 0.0), Complex64::new(1.0, 0.0))
            } else {
                (Complex64::new(1.0, 0.0), Complex64::new(0.0, 0.0))
            }
        }
        // |s⟩ = (|0⟩ ± |1⟩)/√2.
        PauliLetter::X => (
            Complex64::new(std::f64::consts::FRAC_1_SQRT_2, 0.0),
            Complex64::new(sign * std::f64::consts::FRAC_1_SQRT_2, 0.0),
        ),
        // |s⟩ = (|0⟩ ± i|1⟩)/√2.
        PauliLetter::Y => (
            Complex64::new(std::f64::consts::FRAC_1_SQRT_2, 0.0),
            Complex64::new(0.0, sign * std::f64::consts::FRAC_1_SQRT_2),
        ),
    };
    let three = Complex64::new(3.0, 0.0);
    let mut m = DMatrix::<Complex64>::zeros(2, 2);
    m[(0, 0)] = three * a * a.conj() - Complex64::new(1.0, 0.0);
    m[(0, 1)] = three * a * b.conj();
    m[(1, 0)] = three * b * a.conj();
    m[(1, 1)] = three * b * b.conj() - Complex64::new(1.0, 0.0);
    m
}

/// Default snapshot budget `T = ⌈k · 12^k · ln(n/γ) / ε²⌉` for estimating
/// all `k`-local Paulis on `n` qubits to precision `ε` with failure
/// probability `γ`. The leading constant is set to one — the scaling is
/// meaningful, the absolute count is a design choice surfaced here rather
/// than a guarantee.
pub fn default_snapshot_count(k: usize, n: usize, gamma: f64, eps: f64) -> Result<usize> {
    if k == 0 || k > SHADOW_SUPPORT_GUARD {
        return Err(Error::invalid("locality k must be in 1..=4"));
    }
    if n == 0 {
        return Err(Error::invalid("qubit count must be positive"));
    }
    if !(gamma > 0.0 && gamma < 1.0) {
        return Err(Error::invalid("failure probability must lie in (0, 1)"));
    }
    if !(eps > 0.0) {
        return Err(Error::invalid("precision must be positive"));
    }
    let t = (k as f64) * 12f64.powi(k as i32) * (n as f64 / gamma).ln() / (eps * eps);
    Ok(t.ceil() as usize)
}

/// Generates per-Pauli shadow datasets: `n_samples` parameter draws, one
/// ground-state solve and one `t_snapshots`-round shadow record per draw,
/// reused across every requested Pauli — the economy that makes `N` samples
/// serve the whole observable set.
///
/// Parameter draws follow the same seed chain as exact dataset generation,
/// so rows pair one-to-one with `generate_dataset` output at the same seed.
pub fn shadow_dataset(
    family: &HamiltonianFamily,
    paulis: &[PauliTerm],
    n_samples: usize,
    t_snapshots: usize,
    seed: u64,
) -> Result<Vec<Dataset>> {
    if paulis.is_empty() {
        return Err(Error::invalid("shadow dataset needs at least one Pauli"));
    }
    if n_samples == 0 {
        return Err(Error::invalid("dataset needs at least one sample"));
    }
    let params_base = derive_seed(seed, tag::PARAMS);
    let lanczos_base = derive_seed(seed, tag::LANCZOS_START);
    let shadow_base = derive_seed(seed, tag::SHADOW_SNAPSHOT);

    let per_sample: Vec<(DatasetRow, Vec<f64>)> = (0..n_samples)
        .into_par_iter()
        .map(|k| -> Result<(DatasetRow, Vec<f64>)> {
            let sample_seed = derive_seed(params_base, k as u64);
            let x = family.sample_params(sample_seed);
            let op = family.operator(&x)?;
            let solver = SolverOptions {
                compute_gap: false,
                seed: derive_seed(lanczos_base, k as u64),
                ..SolverOptions::default()
            };
            let spectral = ground_state(&op, &solver).map_err(|e| match e {
                Error::NoConvergence { what, detail } => Error::NoConvergence {
                    what,
                    detail: format!("sample {k}: {detail}"),
                },
                other => other,
            })?;
            let record =
                sample_shadow(&spectral.ground, t_snapshots, derive_seed(shadow_base, k as u64))?;
            let ys = paulis
                .iter()
                .map(|p| estimate_pauli(&record, p).map(|e| e.value))
                .collect::<Result<Vec<f64>>>()?;
            Ok((
                DatasetRow {
                    x,
                    y: 0.0,
                    seed: sample_seed,
                },
                ys,
            ))
        })
        .collect::<Result<Vec<_>>>()?;

    Ok(paulis
        .iter()
        .enumerate()
        .map(|(j, p)| Dataset {
            observable: p.label(),
            rows: per_sample
                .iter()
                .map(|(row, ys)| DatasetRow {
                    x: row.x.clone(),
                    y: ys[j],
                    seed: row.seed,
                })
                .collect(),
        })
        .collect())
}

#[derive(Serialize, Deserialize)]
struct PauliRowJson {
    x: Vec<f64>,
    y: f64,
    seed: u64,
    pauli: String,
}

/// Serializes a per-Pauli shadow dataset as JSONL rows
/// `{"x": [...], "y": ..., "seed": ..., "pauli": "X0Z2"}`.
pub fn shadow_rows_to_jsonl(dataset: &Dataset, config_hash: Option<&str>) -> String {
    let mut out = String::new();
    if let Some(h) = config_hash {
        out.push_str(&format!("# config-hash: {h}\n"));
    }
    for row in &dataset.rows {
        let json = serde_json::to_string(&PauliRowJson {
            x: row.x.values().to_vec(),
            y: row.y,
            seed: row.seed,
            pauli: dataset.observable.clone(),
        })
        .expect("row serialization cannot fail");
        out.push_str(&json);
        out.push('\n');
    }
    out
}

/// Parses the per-Pauli JSONL format written by [`shadow_rows_to_jsonl`].
pub fn shadow_rows_from_jsonl(text: &str) -> Result<Dataset> {
    let mut pauli: Option<String> = None;
    let mut rows = Vec::new();
    for line in text.lines() {
        let line = line.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let row: PauliRowJson = serde_json::from_str(line)?;
        match &pauli {
            None => pauli = Some(row.pauli.clone()),
            Some(p) if *p != row.pauli => {
                return Err(Error::invalid("mixed Pauli labels in one dataset file"))
            }
            _ => {}
        }
        rows.push(DatasetRow {
            x: crate::hamiltonian::ParamVector::new(row.x),
            y: row.y,
            seed: row.seed,
        });
    }
    let pauli = pauli.ok_or_else(|| Error::invalid("shadow dataset file contains no rows"))?;
    Ok(Dataset {
        observable: pauli,
        rows,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::exactdiag::{expectation_op, generate_dataset, DatasetOptions};
    use crate::geometry::Boundary;
    use crate::util::rms_diff;
    use approx::assert_abs_diff_eq;

    fn c(re: f64, im: f64) -> Complex64 {
        Complex64::new(re, im)
    }

    fn random_state(n: usize, seed: u64) -> Vec<Complex64> {
        let mut rng = ChaCha12Rng::seed_from_u64(seed);
        let mut v: Vec<Complex64> = (0..1usize << n)
            .map(|_| c(rng.gen::<f64>() - 0.5, rng.gen::<f64>() - 0.5))
            .collect();
        let norm: f64 = v.iter().map(|z| z.norm_sqr()).sum::<f64>().sqrt();
        for z in v.iter_mut() {
            *z /= norm;
        }
        v
    }

    /// Exact reduced density matrix by partial trace, with the same index
    /// convention as `reduced_dm` (smallest subset site = bit 0).
    fn exact_reduced(state: &[Complex64], sites: &[usize], n: usize) -> DMatrix<Complex64> {
        let k = sites.len();
        let dim = 1usize << k;
        let rest: Vec<usize> = (0..n).filter(|s| !sites.contains(s)).collect();
        let mut rho = DMatrix::<Complex64>::zeros(dim, dim);
        for i in 0..dim {
            for j in 0..dim {
                let mut sum = c(0.0, 0.0);
                for r in 0..1usize << rest.len() {
                    let mut bi = 0usize;
                    let mut bj = 0usize;
                    for (pos, &s) in sites.iter().enumerate() {
                        if i >> pos & 1 == 1 {
                            bi |= 1 << s;
                        }
                        if j >> pos & 1 == 1 {
                            bj |= 1 << s;
                        }
                    }
                    for (pos, &s) in rest.iter().enumerate() {
                        if r >> pos & 1 == 1 {
                            bi |= 1 << s;
                            bj |= 1 << s;
                        }
                    }
                    sum += state[bi] * state[bj].conj();
                }
                rho[(i, j)] = sum;
            }
        }
        rho
    }

    /// Trace norm ‖A‖₁ of a Hermitian matrix.
    fn trace_norm(a: &DMatrix<Complex64>) -> f64 {
        a.clone()
            .symmetric_eigen()
            .eigenvalues
            .iter()
            .map(|e| e.abs())
            .sum()
    }

    fn pauli(spec: &str) -> PauliTerm {
        PauliTerm::parse(spec).unwrap()
    }

    #[test]
    fn z_basis_on_zero_state_is_deterministic() {
        let state = vec![c(1.0, 0.0), c(0.0, 0.0)];
        let record = sample_shadow(&state, 200, 7).unwrap();
        assert_eq!(record.n_qubits(), 1);
        assert_eq!(record.len(), 200);
        for snap in record.snapshots() {
            if snap.bases[0] == PauliLetter::Z {
                assert!(!snap.bits[0], "a Z measurement of |0⟩ must give +1");
            }
        }
    }

    #[test]
    fn x_basis_on_zero_state_is_symmetric() {
        let state = vec![c(1.0, 0.0), c(0.0, 0.0)];
        let record = sample_shadow(&state, 10_000, 11).unwrap();
        let (mut x_rounds, mut x_ones) = (0usize, 0usize);
        for snap in record.snapshots() {
            if snap.bases[0] == PauliLetter::X {
                x_rounds += 1;
                x_ones += snap.bits[0] as usize;
            }
        }
        assert!(x_rounds > 2_000, "expected ≈ a third of rounds in X");
        let freq = x_ones as f64 / x_rounds as f64;
        let sigma = 0.5 / (x_rounds as f64).sqrt();
        assert!(
            (freq - 0.5).abs() <= 3.0 * sigma,
            "X outcomes on |0⟩ should be symmetric: freq {freq}, σ {sigma}"
        );
    }

    #[test]
    fn fixed_seed_reproduces_the_record() {
        let state = random_state(3, 42);
        let a = sample_shadow(&state, 500, 123).unwrap();
        let b = sample_shadow(&state, 500, 123).unwrap();
        assert_eq!(a, b);
        let c = sample_shadow(&state, 500, 124).unwrap();
        assert_ne!(a, c);
    }

    #[test]
    fn rejects_unnormalized_and_undersized_states() {
        let bad = vec![c(1.0, 0.0), c(1.0, 0.0)];
        assert!(sample_shadow(&bad, 10, 0).is_err());
        let odd = vec![c(1.0, 0.0); 3];
        assert!(sample_shadow(&odd, 10, 0).is_err());
        let state = random_state(2, 1);
        assert!(sample_shadow(&state, 0, 0).is_err());
    }

    #[test]
    fn z_estimate_on_eigenstate_is_unbiased() {
        let state = vec![c(1.0, 0.0), c(0.0, 0.0)];
        let record = sample_shadow(&state, 100_000, 3).unwrap();
        let est = estimate_pauli(&record, &pauli("Z0")).unwrap();
        assert!(
            (est.value - 1.0).abs() <= 5.0 * est.std_error,
            "⟨Z⟩ on |0⟩: estimate {} ± {}",
            est.value,
            est.std_error
        );
    }

    #[test]
    fn maximally_mixed_qubit_estimates_zero() {
        // Bell state: qubit 0's reduced state is maximally mixed.
        let s = std::f64::consts::FRAC_1_SQRT_2;
        let state = vec![c(s, 0.0), c(0.0, 0.0), c(0.0, 0.0), c(s, 0.0)];
        let record = sample_shadow(&state, 50_000, 5).unwrap();
        for p in ["X0", "Y0", "Z0"] {
            let est = estimate_pauli(&record, &pauli(p)).unwrap();
            assert!(
                est.value.abs() <= 5.0 * est.std_error,
                "⟨{p}⟩ on a maximally mixed qubit: {} ± {}",
                est.value,
                est.std_error
            );
        }
    }

    #[test]
    fn random_state_two_site_estimate_matches_exact() {
        let state = random_state(3, 99);
        let p = pauli("X0Z2");
        let op = crate::hamiltonian::PauliOperator::new(3, &[p.clone()]).unwrap();
        let exact = expectation_op(&state, &op).unwrap();
        let record = sample_shadow(&state, 100_000, 17).unwrap();
        let est = estimate_pauli(&record, &p).unwrap();
        assert!(
            (est.value - exact).abs() <= 5.0 * est.std_error,
            "⟨X0Z2⟩: estimate {} ± {} vs exact {exact}",
            est.value,
            est.std_error
        );
    }

    #[test]
    fn estimator_respects_term_coefficient() {
        let state = vec![c(1.0, 0.0), c(0.0, 0.0)];
        let record = sample_shadow(&state, 20_000, 3).unwrap();
        let plain = estimate_pauli(&record, &pauli("Z0")).unwrap();
        let scaled =
            estimate_pauli(&record, &pauli("Z0").with_coefficient(-2.5)).unwrap();
        assert_abs_diff_eq!(scaled.value, -2.5 * plain.value, epsilon = 1e-12);
    }

    #[test]
    fn unbiased_across_independent_records() {
        // All 15 nontrivial two-qubit Paulis on a fixed random state: the
        // mean over 200 independent records must sit within 5 combined
        // standard errors of the exact value.
        let state = random_state(2, 7);
        let letters = ["I", "X", "Y", "Z"];
        let mut labels = Vec::new();
        for a in letters {
            for b in letters {
                if a == "I" && b == "I" {
                    continue;
                }
                let mut s = String::new();
                if a != "I" {
                    s.push_str(&format!("{a}0"));
                }
                if b != "I" {
                    s.push_str(&format!("{b}1"));
                }
                labels.push(s);
            }
        }
        assert_eq!(labels.len(), 15);
        let records: Vec<ShadowRecord> = (0..200)
            .map(|r| sample_shadow(&state, 500, 1000 + r).unwrap())
            .collect();
        for label in labels {
            let p = pauli(&label);
            let op = crate::hamiltonian::PauliOperator::new(2, &[p.clone()]).unwrap();
            let exact = expectation_op(&state, &op).unwrap();
            let estimates: Vec<f64> = records
                .iter()
                .map(|r| estimate_pauli(r, &p).unwrap().value)
                .collect();
            let m = mean(&estimates);
            let combined_se = sample_sd(&estimates) / (estimates.len() as f64).sqrt();
            assert!(
                (m - exact).abs() <= 5.0 * combined_se,
                "⟨{label}⟩: mean {m} vs exact {exact} (se {combined_se})"
            );
        }
    }

    #[test]
    fn standard_error_shrinks_as_inverse_sqrt_t() {
        let state = random_state(2, 21);
        let p = pauli("X0X1");
        let small = estimate_pauli(&sample_shadow(&state, 1_000, 31).unwrap(), &p).unwrap();
        let large = estimate_pauli(&sample_shadow(&state, 4_000, 33).unwrap(), &p).unwrap();
        let ratio = small.std_error / large.std_error;
        assert!(
            (1.6..=2.5).contains(&ratio),
            "stderr ratio between T=10³ and T=4·10³ is {ratio}, expected ≈ 2"
        );
    }

    #[test]
    fn estimator_rejects_oversized_or_misplaced_support() {
        let state = random_state(2, 2);
        let record = sample_shadow(&state, 10, 0).unwrap();
        assert!(estimate_pauli(&record, &pauli("Z3")).is_err());
        let wide = pauli("X0X1X2X3X4");
        assert!(estimate_pauli(&record, &wide).is_err());
    }

    #[test]
    fn reduced_dm_has_exact_trace_and_hermiticity() {
        let state = random_state(3, 55);
        let record = sample_shadow(&state, 300, 9).unwrap();
        for subset in [vec![0usize], vec![1, 2], vec![0, 2]] {
            let rho = reduced_dm(&record, &SiteSet::new(subset.clone()).unwrap()).unwrap();
            let trace: Complex64 = rho.trace();
            assert_abs_diff_eq!(trace.re, 1.0, epsilon = 1e-13);
            assert_abs_diff_eq!(trace.im, 0.0, epsilon = 1e-14);
            let herm = (&rho - rho.adjoint()).norm();
            assert!(herm <= 1e-14, "Hermiticity residual {herm} for {subset:?}");
        }
    }

    #[test]
    fn reduced_dm_converges_to_pure_qubit() {
        // |00⟩, first qubit: the estimate must approach |0⟩⟨0|.
        let state = vec![c(1.0, 0.0), c(0.0, 0.0), c(0.0, 0.0), c(0.0, 0.0)];
        let record = sample_shadow(&state, 100_000, 13).unwrap();
        let rho = reduced_dm(&record, &SiteSet::singleton(0)).unwrap();
        let mut target = DMatrix::<Complex64>::zeros(2, 2);
        target[(0, 0)] = c(1.0, 0.0);
        let dist = trace_norm(&(rho - target));
        assert!(dist <= 0.05, "‖ρ̂ − |0⟩⟨0|‖₁ = {dist}");
    }

    #[test]
    fn reduced_dm_matches_exact_partial_trace() {
        let state = random_state(3, 77);
        let record = sample_shadow(&state, 200_000, 19).unwrap();
        let sites = vec![0usize, 2];
        let rho = reduced_dm(&record, &SiteSet::new(sites.clone()).unwrap()).unwrap();
        let exact = exact_reduced(&state, &sites, 3);
        let dist = trace_norm(&(rho - exact));
        assert!(dist <= 0.08, "trace distance to exact reduced state: {dist}");
    }

    #[test]
    fn product_state_reduced_dm_factorizes() {
        // (|0⟩ + |1⟩)/√2 ⊗ |0⟩: joint two-site estimate vs the tensor
        // product of the single-site estimates.
        let s = std::f64::consts::FRAC_1_SQRT_2;
        let state = vec![c(s, 0.0), c(s, 0.0), c(0.0, 0.0), c(0.0, 0.0)];
        let record = sample_shadow(&state, 100_000, 23).unwrap();
        let joint = reduced_dm(&record, &SiteSet::pair(0, 1).unwrap()).unwrap();
        let site0 = reduced_dm(&record, &SiteSet::singleton(0)).unwrap();
        let site1 = reduced_dm(&record, &SiteSet::singleton(1)).unwrap();
        // Site 1 is the more significant bit of the joint index.
        let product = site1.kronecker(&site0);
        let dist = trace_norm(&(joint - product));
        assert!(dist <= 0.08, "joint vs product trace distance: {dist}");
    }

    #[test]
    fn snapshot_budget_formula_is_frozen() {
        // k·12^k·ln(n/γ)/ε² at k=2, n=8, γ=0.1, ε=0.2:
        // 288 · ln(80) / 0.04 = 31550.59… → 31551.
        assert_eq!(default_snapshot_count(2, 8, 0.1, 0.2).unwrap(), 31_551);
        assert!(default_snapshot_count(0, 8, 0.1, 0.2).is_err());
        assert!(default_snapshot_count(2, 8, 1.5, 0.2).is_err());
        assert!(default_snapshot_count(2, 8, 0.1, 0.0).is_err());
    }

    #[test]
    fn shadow_datasets_share_draws_and_converge_to_exact() {
        let family = HamiltonianFamily::heisenberg(4, Boundary::Open).unwrap();
        let paulis = vec![pauli("Z0Z1"), pauli("X0X1")];
        let sets = shadow_dataset(&family, &paulis, 6, 20_000, 4242).unwrap();
        assert_eq!(sets.len(), 2);
        // Both Paulis see identical parameter draws.
        for (a, b) in sets[0].rows.iter().zip(&sets[1].rows) {
            assert_eq!(a.x, b.x);
            assert_eq!(a.seed, b.seed);
        }
        // And the draws match the exact generator's chain at the same seed.
        let obs = crate::hamiltonian::build_observable(
            crate::hamiltonian::ObservableKind::LocalCorrelation { i: 0, j: 1 },
            &family,
        )
        .unwrap();
        let exact_set =
            generate_dataset(&family, &obs, 6, &DatasetOptions::default(), 4242).unwrap();
        for (a, b) in sets[0].rows.iter().zip(&exact_set.rows) {
            assert_eq!(a.x, b.x);
        }
        // Shadow targets converge to the exact expectations.
        for (j, p) in paulis.iter().enumerate() {
            let exact_ys: Vec<f64> = sets[j]
                .rows
                .iter()
                .map(|row| {
                    let op = family.operator(&row.x).unwrap();
                    let spectral = ground_state(&op, &SolverOptions::default()).unwrap();
                    let pop =
                        crate::hamiltonian::PauliOperator::new(4, &[p.clone()]).unwrap();
                    expectation_op(&spectral.ground, &pop).unwrap()
                })
                .collect();
            let shadow_ys = sets[j].targets();
            let rms = rms_diff(&shadow_ys, &exact_ys);
            assert!(rms <= 0.05, "RMS gap to exact dataset for {}: {rms}", p.label());
        }
    }

    #[test]
    fn record_jsonl_round_trip() {
        let state = random_state(3, 3);
        let record = sample_shadow(&state, 25, 8).unwrap();
        let text = record.to_jsonl(Some("beef"));
        assert!(text.starts_with("# config-hash: beef\n"));
        let back = ShadowRecord::from_jsonl(&text).unwrap();
        assert_eq!(back, record);
    }

    #[test]
    fn pauli_dataset_jsonl_round_trip() {
        let family = HamiltonianFamily::heisenberg(3, Boundary::Open).unwrap();
        let sets = shadow_dataset(&family, &[pauli("Z0Z1")], 3, 50, 7).unwrap();
        let text = shadow_rows_to_jsonl(&sets[0], Some("cafe"));
        assert!(text.contains("\"pauli\":\"Z0Z1\""));
        let back = shadow_rows_from_jsonl(&text).unwrap();
        assert_eq!(back, sets[0]);
    }
}
