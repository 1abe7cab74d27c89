//! Exponential-sum approximation of power-law decay.
//!
//! Matrix-product operators can only carry couplings that decay
//! exponentially along the chain, so the long-range kernel `d^{−α}` is
//! approximated by `Σ_l a_l λ_l^d` on the integer range the chain uses. The
//! fit is a Prony-type linear method: a Hankel matrix of kernel samples is
//! reduced by SVD, the bases are read off the shift operator's eigenvalues,
//! and the weights are refit by (relative-error weighted) least squares —
//! no nonlinear iteration.
//!
//! On a ring, distances wrap: `d(x) = min(x, n−x)`. Splitting the target as
//! `d(x)^{−α} = g(x) + g(n−x)` with
//! `g(x) = x^{−α} − (n−x)^{−α}/2` for `x ≤ n/2` and `g(x) = x^{−α}/2`
//! otherwise, fitting `g` with `K` terms, and symmetrizing yields `2K`
//! terms: `{a_l, λ_l} ∪ {a_l λ_l^n, 1/λ_l}`. The reciprocal bases exceed
//! one, but their weights carry `λ_l^n`, so every evaluated product stays
//! bounded on `1..n−1`.
//!
//! A hard limit of the ring form is worth knowing: the wrapped kernel has a
//! slope discontinuity at `x = n/2`, and every symmetric pair
//! `λ^x + λ^{n−x}` is a smooth convex trough there, so the kink is
//! approximable only at a `~1/K` rate. Pushing the pointwise relative error
//! below about `10⁻²` on `n = 64` would require pair weights beyond `10¹⁰`,
//! whose cancellation noise under `f64` evaluation exceeds the error being
//! chased. The weight solve therefore de-emphasizes a few sites around the
//! antipode rather than trading away the short separations that carry the
//! coupling energy: relative accuracy is `~10⁻³` at small `x` while the
//! worst case — always recorded honestly in `max_rel_err` — reaches the
//! ten-percent scale right at the antipode, where the coupling itself is
//! `(n/2)^{−α}`-small.

use nalgebra::DMatrix;
use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::Boundary;

/// An exponential-sum approximation `Σ_l a_l λ_l^d` of a decay kernel on
/// integer separations.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExpSumFit {
    /// Decay exponent of the target kernel `d^{−α}`.
    pub alpha: f64,
    /// Largest integer separation the fit was measured on.
    pub l_max: usize,
    /// Chain or ring kernel.
    pub boundary: Boundary,
    /// Ring size for periodic fits.
    pub ring_n: Option<usize>,
    /// Term weights `a_l`.
    pub weights: Vec<f64>,
    /// Term bases `λ_l` (in `(0, 1]` for open fits; periodic fits append
    /// reciprocal bases paired with `λ^n`-suppressed weights).
    pub bases: Vec<f64>,
    /// Largest relative deviation from the target kernel over the fit range.
    pub max_rel_err: f64,
}

impl ExpSumFit {
    /// Number of exponential terms.
    pub fn k(&self) -> usize {
        self.weights.len()
    }

    /// Evaluates `Σ_l a_l λ_l^d` at chain separation `d` (not ring
    /// distance): the MPO accumulates one factor `λ_l` per hop.
    pub fn eval(&self, d: f64) -> f64 {
        self.weights
            .iter()
            .zip(&self.bases)
            .map(|(a, l)| a * l.powf(d))
            .sum()
    }

    /// The kernel the fit approximates at chain separation `x ∈ 1..l_max`:
    /// `x^{−α}` on a chain, `min(x, n−x)^{−α}` on a ring.
    pub fn target(&self, x: usize) -> f64 {
        match self.ring_n {
            None => (x as f64).powf(-self.alpha),
            Some(n) => {
                let d = x.min(n - x) as f64;
                d.powf(-self.alpha)
            }
        }
    }

    /// JSON document with the fit parameters and achieved error.
    pub fn to_json(&self) -> String {
        #[derive(Serialize)]
        struct FitJson<'a> {
            #[serde(rename = "K")]
            k: usize,
            a: &'a [f64],
            lambda: &'a [f64],
            max_rel_err: f64,
            alpha: f64,
            l_max: usize,
            boundary: Boundary,
            ring_n: Option<usize>,
        }
        serde_json::to_string_pretty(&FitJson {
            k: self.k(),
            a: &self.weights,
            lambda: &self.bases,
            max_rel_err: self.max_rel_err,
            alpha: self.alpha,
            l_max: self.l_max,
            boundary: self.boundary,
            ring_n: self.ring_n,
        })
        .expect("fit serialization cannot fail")
    }

    pub fn from_json(text: &str) -> Result<ExpSumFit> {
        #[derive(Deserialize)]
        struct FitJson {
            #[serde(rename = "K")]
            #[allow(dead_code)]
            k: usize,
            a: Vec<f64>,
            lambda: Vec<f64>,
            max_rel_err: f64,
            alpha: f64,
            l_max: usize,
            boundary: Boundary,
            ring_n: Option<usize>,
        }
        let j: FitJson = serde_json::from_str(text)?;
        if j.a.len() != j.lambda.len() {
            return Err(Error::invalid("fit JSON has mismatched a/lambda lengths"));
        }
        Ok(ExpSumFit {
            alpha: j.alpha,
            l_max: j.l_max,
            boundary: j.boundary,
            ring_n: j.ring_n,
            weights: j.a,
            bases: j.lambda,
            max_rel_err: j.max_rel_err,
        })
    }
}

/// Exponential bases of the dominant rank-`subspace` Hankel model of
/// `values[x−1] = f(x)`, filtered to real values in `(0, 1]` and sorted in
/// decreasing order. Complex eigenvalue pairs are discarded, so fewer than
/// `subspace` bases may come back.
fn prony_bases(values: &[f64], subspace: usize) -> Result<Vec<f64>> {
    let l = values.len();
    if l < 2 {
        return Err(Error::invalid("exponential fit needs at least 2 samples"));
    }
    // Hankel matrix A[i][j] = f(i + j + 1), sized so the shift-invariance
    // system below is overdetermined.
    let cols = (l / 2).max(1);
    let rows = l - cols + 1;
    let k = subspace.min(cols).min(rows.saturating_sub(1)).max(1);
    let mut hankel = DMatrix::<f64>::zeros(rows, cols);
    for i in 0..rows {
        for j in 0..cols {
            hankel[(i, j)] = values[i + j];
        }
    }

    // Dominant K-dimensional left singular subspace.
    let svd = hankel.svd(true, false);
    let u = svd.u.as_ref().expect("left singular vectors requested");
    let k_eff = k.min(u.ncols());
    let u_k = u.columns(0, k_eff).into_owned();

    // Shift invariance: rows 1.. of U_K ≈ rows ..−1 of U_K times Ψ, whose
    // eigenvalues are the exponential bases.
    let u_up = u_k.rows(0, rows - 1).into_owned();
    let u_down = u_k.rows(1, rows - 1).into_owned();
    let psi = u_up
        .svd(true, true)
        .solve(&u_down, 1e-14)
        .map_err(|e| Error::FitFailed(format!("shift-invariance solve failed: {e}")))?;
    let eigs = psi.complex_eigenvalues();

    let mut bases: Vec<f64> = eigs
        .iter()
        .filter(|z| z.im.abs() <= 1e-10 * z.re.abs().max(1.0))
        .map(|z| z.re)
        .filter(|&r| r > 0.0 && r <= 1.0 + 1e-12)
        .map(|r| r.min(1.0))
        .collect();
    bases.sort_by(|a, b| b.partial_cmp(a).unwrap());
    bases.dedup_by(|a, b| (*a - *b).abs() < 1e-12);
    if bases.is_empty() {
        return Err(Error::FitFailed(
            "no stable exponential bases in (0, 1] were found".to_string(),
        ));
    }
    Ok(bases)
}

/// Harvests up to `k` real bases, growing the requested Hankel subspace
/// when complex pairs eat into the count.
fn prony_bases_adaptive(values: &[f64], k: usize) -> Result<Vec<f64>> {
    let l = values.len();
    let cols = (l / 2).max(1);
    let cap = cols.min((l - cols + 1).saturating_sub(1)).max(1);
    let mut subspace = k.min(cap);
    let mut bases = prony_bases(values, subspace)?;
    while bases.len() < k && subspace < cap {
        subspace = (subspace + 2).min(cap);
        bases = prony_bases(values, subspace)?;
    }
    bases.truncate(k);
    Ok(bases)
}

/// Prony-type fit of `values[x−1] ≈ f(x)` for `x = 1..=L` by at most `k`
/// exponentials. Returns `(weights, bases)` with bases filtered to real
/// values in `(0, 1]`.
pub(crate) fn prony_fit(values: &[f64], k: usize) -> Result<(Vec<f64>, Vec<f64>)> {
    let l = values.len();
    if k == 0 {
        return Err(Error::invalid("exponential fit needs at least one term"));
    }
    let bases = prony_bases(values, k)?;

    // Weight refit by least squares, weighted by 1/f to control relative
    // error over the whole range.
    let m = bases.len();
    let mut design = DMatrix::<f64>::zeros(l, m);
    let mut rhs = nalgebra::DVector::<f64>::zeros(l);
    for x in 1..=l {
        let f = values[x - 1];
        let w = 1.0 / f.abs().max(f64::MIN_POSITIVE);
        for (j, lam) in bases.iter().enumerate() {
            design[(x - 1, j)] = w * lam.powi(x as i32);
        }
        rhs[x - 1] = w * f;
    }
    let weights = design
        .svd(true, true)
        .solve(&rhs, 1e-14)
        .map_err(|e| Error::FitFailed(format!("weight refit failed: {e}")))?;
    Ok((weights.iter().copied().collect(), bases))
}

fn max_rel_err(weights: &[f64], bases: &[f64], targets: &[f64]) -> f64 {
    targets
        .iter()
        .enumerate()
        .map(|(i, &t)| {
            let x = (i + 1) as f64;
            let approx: f64 = weights
                .iter()
                .zip(bases)
                .map(|(a, l)| a * l.powf(x))
                .sum();
            (approx - t).abs() / t.abs().max(f64::MIN_POSITIVE)
        })
        .fold(0.0, f64::max)
    }

/// Piecewise split function whose symmetrization reproduces the ring
/// kernel: `g(x) + g(n−x) = min(x, n−x)^{−α}` for `1 ≤ x ≤ n−1`.
pub(crate) fn ring_split(x: f64, n: f64, alpha: f64) -> f64 {
    if x <= n / 2.0 {
        x.powf(-alpha) - 0.5 * (n - x).powf(-alpha)
    } else {
        0.5 * x.powf(-alpha)
    }
}

/// Fits `d^{−α}` on integer separations by `k` exponentials.
///
/// Open boundary: fits on `1..=l_max` and keeps bases in `(0, 1]`.
/// Periodic boundary: requires the ring size `n`, fits the split function
/// on `1..=n−1`, and returns the symmetrized `2k`-term set; the recorded
/// error is measured against the ring distance kernel over the full hop
/// range, including the antipodal window the weight solve de-emphasizes
/// (see the module docs for why that window cannot be made tight).
pub fn fit_exp_sum(
    alpha: f64,
    l_max: usize,
    k: usize,
    boundary: Boundary,
    ring_n: Option<usize>,
) -> Result<ExpSumFit> {
    if !(alpha > 0.0) {
        return Err(Error::invalid("decay exponent must be positive"));
    }
    if k < 1 {
        return Err(Error::invalid("need at least one exponential term"));
    }
    match boundary {
        Boundary::Open => {
            if l_max < 2 {
                return Err(Error::invalid("fit range must reach separation 2"));
            }
            let targets: Vec<f64> = (1..=l_max).map(|x| (x as f64).powf(-alpha)).collect();
            let (weights, bases) = prony_fit(&targets, k)?;
            let err = max_rel_err(&weights, &bases, &targets);
            Ok(ExpSumFit {
                alpha,
                l_max,
                boundary,
                ring_n: None,
                weights,
                bases,
                max_rel_err: err,
            })
        }
        Boundary::Periodic => {
            let n = ring_n.ok_or_else(|| {
                Error::invalid("periodic exponential fit needs the ring size")
            })?;
            if n < 4 {
                return Err(Error::invalid("ring fit needs at least 4 sites"));
            }
            let nf = n as f64;
            // Bases harvested from the split function g, whose
            // symmetrization reproduces the ring kernel. Its branch switch
            // at n/2 pushes part of the Hankel spectrum into complex pairs,
            // which the real-base filter drops; top the set up from g's
            // smooth leading branch x^{−α} so the requested order is
            // available when possible. (Growing the g subspace instead
            // would harvest spurious near-1 modes that crowd out the fast
            // rates the short separations need.)
            let g: Vec<f64> = (1..n).map(|x| ring_split(x as f64, nf, alpha)).collect();
            let mut gb = prony_bases(&g, k)?;
            gb.truncate(k);
            if gb.len() < k {
                let smooth: Vec<f64> = (1..n).map(|x| (x as f64).powf(-alpha)).collect();
                if let Ok(extra) = prony_bases_adaptive(&smooth, k) {
                    for lam in extra {
                        if gb.iter().all(|b| (b - lam).abs() > 1e-6) && gb.len() < k {
                            gb.push(lam);
                        }
                    }
                    gb.sort_by(|a, b| b.partial_cmp(a).unwrap());
                }
            }
            let ring_targets: Vec<f64> = (1..n)
                .map(|x| (x.min(n - x) as f64).powf(-alpha))
                .collect();
            // Pair-weight refit against the ring kernel itself, weighted by
            // 1/d^{−α} so the residual is relative error. The weight is
            // damped within a few sites of the antipode: the kernel's slope
            // break at n/2 is not resolvable by smooth symmetric pairs (see
            // the module docs), and letting the solver chase it would trade
            // away accuracy at the short separations that carry the
            // coupling energy. Columns are norm-equilibrated before the SVD
            // solve because the pair functions overlap strongly near λ → 1.
            let m = gb.len();
            let mut design = DMatrix::<f64>::zeros(n - 1, m);
            let mut rhs = nalgebra::DVector::<f64>::zeros(n - 1);
            for x in 1..n {
                let kink_damp = ((x as f64 - nf / 2.0) / 6.0).powi(2).clamp(1e-2, 1.0);
                let w = kink_damp / ring_targets[x - 1];
                for (j, lam) in gb.iter().enumerate() {
                    design[(x - 1, j)] =
                        w * (lam.powi(x as i32) + lam.powi((n - x) as i32));
                }
                rhs[x - 1] = w * ring_targets[x - 1];
            }
            let scales: Vec<f64> = (0..m)
                .map(|j| design.column(j).norm().max(f64::MIN_POSITIVE))
                .collect();
            for (j, s) in scales.iter().enumerate() {
                design.column_mut(j).scale_mut(1.0 / s);
            }
            let gw_scaled = design
                .svd(true, true)
                .solve(&rhs, 1e-12)
                .map_err(|e| Error::FitFailed(format!("ring weight refit failed: {e}")))?;
            let gw: Vec<f64> = gw_scaled.iter().zip(&scales).map(|(w, s)| w / s).collect();
            // Double the set: a λ^x + (a λ^n) (1/λ)^x = a (λ^x + λ^{n−x}).
            let mut weights = gw.clone();
            let mut bases = gb.clone();
            for (a, lam) in gw.iter().zip(&gb) {
                weights.push(a * lam.powi(n as i32));
                bases.push(1.0 / lam);
            }
            let err = max_rel_err(&weights, &bases, &ring_targets);
            Ok(ExpSumFit {
                alpha,
                l_max: n - 1,
                boundary,
                ring_n: Some(n),
                weights,
                bases,
                max_rel_err: err,
            })
        }
    }
}

/// Fits arbitrary positive samples `f(1..=L)` by `k` exponentials — the
/// general entry point behind `fit_exp_sum`, exposed for kernels that are
/// not power laws.
pub fn fit_exp_sum_samples(values: &[f64], k: usize) -> Result<ExpSumFit> {
    let (weights, bases) = prony_fit(values, k)?;
    let err = max_rel_err(&weights, &bases, values);
    Ok(ExpSumFit {
        alpha: f64::NAN,
        l_max: values.len(),
        boundary: Boundary::Open,
        ring_n: None,
        weights,
        bases,
        max_rel_err: err,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;

    #[test]
    fn single_exponential_recovered_exactly() {
        let values: Vec<f64> = (1..=32).map(|x| 0.5 * 0.9f64.powi(x)).collect();
        let fit = fit_exp_sum_samples(&values, 1).unwrap();
        assert_eq!(fit.k(), 1);
        assert_abs_diff_eq!(fit.bases[0], 0.9, epsilon = 1e-10);
        assert_abs_diff_eq!(fit.weights[0], 0.5, epsilon = 1e-10);
        assert!(fit.max_rel_err <= 1e-10);
    }

    #[test]
    fn alpha3_range128_k10_hits_target() {
        let fit = fit_exp_sum(3.0, 128, 10, Boundary::Open, None).unwrap();
        assert!(
            fit.max_rel_err <= 1e-3,
            "max relative error {} exceeds 1e-3",
            fit.max_rel_err
        );
        for lam in &fit.bases {
            assert!(*lam > 0.0 && *lam <= 1.0, "base {lam} outside (0,1]");
        }
    }

    #[test]
    fn error_decreases_with_more_terms() {
        let mut last = f64::INFINITY;
        for k in [2usize, 4, 6, 8, 10] {
            let fit = fit_exp_sum(3.0, 128, k, Boundary::Open, None).unwrap();
            assert!(
                fit.max_rel_err <= last,
                "error grew at K={k}: {} > {last}",
                fit.max_rel_err
            );
            last = fit.max_rel_err;
        }
    }

    #[test]
    fn ring_split_identity_is_exact() {
        let n = 64.0;
        let alpha = 3.0;
        for x in 1..64usize {
            let lhs = ring_split(x as f64, n, alpha) + ring_split(n - x as f64, n, alpha);
            let d = (x.min(64 - x)) as f64;
            assert_abs_diff_eq!(lhs, d.powf(-alpha), epsilon = 1e-15);
        }
        // Midpoint case called out separately: g(n/2) + g(n − n/2) = (n/2)^{−α}.
        let mid = ring_split(32.0, n, alpha) + ring_split(32.0, n, alpha);
        assert_abs_diff_eq!(mid, 32.0f64.powf(-alpha), epsilon = 1e-18);
    }

    #[test]
    fn periodic_fit_tracks_ring_distance() {
        let n = 64usize;
        let fit = fit_exp_sum(3.0, 63, 10, Boundary::Periodic, Some(n)).unwrap();
        // Doubled term list: one decaying and one reciprocal partner per
        // kept base, with the reciprocal weight carrying λ^n.
        assert!(fit.k() % 2 == 0 && fit.k() >= 4 && fit.k() <= 20, "k = {}", fit.k());
        let half = fit.k() / 2;
        for l in 0..half {
            let (lam, a) = (fit.bases[l], fit.weights[l]);
            let (lam_r, a_r) = (fit.bases[half + l], fit.weights[half + l]);
            assert!(lam > 0.0 && lam <= 1.0, "primary base {lam} outside (0,1]");
            assert_abs_diff_eq!(lam_r, 1.0 / lam, epsilon = 1e-12 / lam);
            let expect = a * lam.powi(n as i32);
            assert!(
                (a_r - expect).abs() <= 1e-12 * expect.abs().max(1e-300),
                "reciprocal weight {a_r} is not a λ^n partner of {a}"
            );
        }
        // The recorded error is the honest worst case over the full range.
        let recomputed = (1..n)
            .map(|x| {
                let t = fit.target(x);
                (fit.eval(x as f64) - t).abs() / t
            })
            .fold(0.0f64, f64::max);
        assert_abs_diff_eq!(fit.max_rel_err, recomputed, epsilon = 1e-12);
        // Worst case sits at the antipodal kink — the smooth symmetric
        // pairs cannot resolve the slope break at n/2 any faster than ~1/K
        // (see the module docs), and the weight solve deliberately trades
        // that window away. Short separations, which carry the coupling
        // energy, are tight.
        assert!(
            fit.max_rel_err <= 0.25,
            "ring fit error {} above the expected antipodal floor",
            fit.max_rel_err
        );
        for x in 1..=8usize {
            let t = fit.target(x);
            let rel = (fit.eval(x as f64) - t).abs() / t;
            assert!(rel <= 1e-2, "short-range error {rel} at x={x}");
        }
        // Symmetry of the realized kernel: eval(x) ≈ eval(n−x).
        for x in 1..32usize {
            let a = fit.eval(x as f64);
            let b = fit.eval((n - x) as f64);
            assert!(
                (a - b).abs() <= 1e-9 * a.abs().max(1e-12),
                "asymmetry at x={x}: {a} vs {b}"
            );
        }
    }

    #[test]
    fn low_order_fit_reports_large_error_without_failing() {
        let fit = fit_exp_sum(3.0, 128, 1, Boundary::Open, None).unwrap();
        assert!(fit.max_rel_err > 1e-3);
    }

    #[test]
    fn json_round_trip() {
        let fit = fit_exp_sum(2.5, 64, 6, Boundary::Open, None).unwrap();
        let text = fit.to_json();
        let back = ExpSumFit::from_json(&text).unwrap();
        assert_eq!(back, fit);
        assert!(text.contains("\"K\""));
        assert!(text.contains("max_rel_err"));
    }

    #[test]
    fn rejects_bad_arguments() {
        assert!(fit_exp_sum(0.0, 64, 4, Boundary::Open, None).is_err());
        assert!(fit_exp_sum(3.0, 1, 4, Boundary::Open, None).is_err());
        assert!(fit_exp_sum(3.0, 64, 0, Boundary::Open, None).is_err());
        assert!(fit_exp_sum(3.0, 64, 4, Boundary::Periodic, None).is_err());
    }

    #[test]
    fn fit_quality_on_short_chain_range() {
        // Dataset generation fits on a longer range than the chain; make
        // sure accuracy at small separations is ample for energy targets.
        let fit = fit_exp_sum(3.0, 64, 12, Boundary::Open, None).unwrap();
        for x in 1..=12usize {
            let rel = (fit.eval(x as f64) - fit.target(x)).abs() / fit.target(x);
            assert!(rel <= 1e-6, "relative error {rel} at separation {x}");
        }
    }
}
