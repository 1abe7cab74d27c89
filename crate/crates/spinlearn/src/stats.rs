//! Disorder-ensemble statistics: how ground-state observables concentrate
//! as chains grow, and the `√n` target rescaling that keeps learned
//! quantities O(1).
//!
//! Intensive observables like the average correlation self-average: their
//! standard deviation across disorder realizations shrinks as `1/√n`, so
//! `√n·σ̂` is roughly constant and `Var/Mean²` fits `a + b/n` with `a ≈ 0`.
//! [`disorder_ensemble`] measures this, [`variance_scaling_fit`] fits it,
//! and [`TargetTransform`] applies the `√n` (optionally centered)
//! rescaling consistently to training and test targets — with the center
//! estimated from training data only, so nothing leaks.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::exactdiag::{Dataset, DatasetOptions};
use crate::hamiltonian::{build_observable, HamiltonianFamily, ObservableKind};
use crate::learner::{solve_dataset, SolverChoice};
use crate::util::{csv_string, mean, sample_sd};

/// Summary statistics of one observable over a disorder ensemble at a
/// fixed chain length.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EnsembleReport {
    pub n: usize,
    /// Ensemble size the statistics are computed from.
    pub count: usize,
    /// Observable label, e.g. `"avg-correlation"`.
    pub observable: String,
    pub min: f64,
    pub max: f64,
    pub range: f64,
    pub mean: f64,
    /// Unbiased (n−1) standard deviation.
    pub sd: f64,
    /// `√n·sd` — approximately constant for self-averaging observables.
    pub sqrt_n_sd: f64,
    /// `Var/Mean²`; `NaN` when the ensemble mean vanishes.
    pub var_over_mean_sq: f64,
}

/// Builds a report from raw ensemble values.
pub fn report_from_values(n: usize, observable: &str, values: &[f64]) -> Result<EnsembleReport> {
    if values.len() < 2 {
        return Err(Error::invalid(
            "ensemble statistics need at least two samples (unbiased SD)",
        ));
    }
    if values.iter().any(|v| !v.is_finite()) {
        return Err(Error::invalid("non-finite ensemble value"));
    }
    let min = values.iter().cloned().fold(f64::INFINITY, f64::min);
    let max = values.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let mu = mean(values);
    let sd = sample_sd(values);
    Ok(EnsembleReport {
        n,
        count: values.len(),
        observable: observable.to_string(),
        min,
        max,
        range: max - min,
        mean: mu,
        sd,
        sqrt_n_sd: (n as f64).sqrt() * sd,
        var_over_mean_sq: sd * sd / (mu * mu),
    })
}

/// Draws `num_samples` disorder realizations of the family at `n` sites,
/// solves each ground state, and summarizes the observable's values.
pub fn disorder_ensemble(
    family: &HamiltonianFamily,
    kind: ObservableKind,
    n: usize,
    num_samples: usize,
    solver: SolverChoice,
    seed: u64,
) -> Result<EnsembleReport> {
    let fam = family.with_size(n)?;
    let obs = build_observable(kind, &fam)?;
    let ds = solve_dataset(&fam, &obs, num_samples, &DatasetOptions::default(), solver, seed)?;
    let values: Vec<f64> = ds.rows.iter().map(|r| r.y).collect();
    report_from_values(n, &obs.label, &values)
}

/// Least-squares fit of `Var/Mean² ≈ a + b/n` across chain lengths.
#[derive(Clone, Debug, PartialEq)]
pub struct VarianceScalingFit {
    pub a: f64,
    pub b: f64,
    /// Per-report residual `v_i − (a + b/n_i)`, in input order.
    pub residuals: Vec<f64>,
}

/// Fits the self-averaging model `Var/Mean² ≈ a + b/n`. Needs at least
/// three distinct chain lengths.
pub fn variance_scaling_fit(reports: &[EnsembleReport]) -> Result<VarianceScalingFit> {
    let mut sizes: Vec<usize> = reports.iter().map(|r| r.n).collect();
    sizes.sort_unstable();
    sizes.dedup();
    if sizes.len() < 3 {
        return Err(Error::invalid(format!(
            "variance-scaling fit needs at least 3 distinct chain lengths, got {}",
            sizes.len()
        )));
    }
    if reports.iter().any(|r| !r.var_over_mean_sq.is_finite()) {
        return Err(Error::invalid(
            "Var/Mean² is undefined for some report (zero mean?)",
        ));
    }
    // Normal equations for v = a + b·u with u = 1/n.
    let m = reports.len() as f64;
    let mut su = 0.0;
    let mut suu = 0.0;
    let mut sv = 0.0;
    let mut suv = 0.0;
    for r in reports {
        let u = 1.0 / r.n as f64;
        let v = r.var_over_mean_sq;
        su += u;
        suu += u * u;
        sv += v;
        suv += u * v;
    }
    let det = m * suu - su * su;
    if det.abs() < 1e-300 {
        return Err(Error::invalid("degenerate size design in variance fit"));
    }
    let b = (m * suv - su * sv) / det;
    let a = (sv - b * su) / m;
    let residuals = reports
        .iter()
        .map(|r| r.var_over_mean_sq - (a + b / r.n as f64))
        .collect();
    Ok(VarianceScalingFit { a, b, residuals })
}

/// Ratios of `√n·sd` between consecutive reports (which must come sorted
/// by strictly increasing `n`). Hovers near 1 for self-averaging
/// observables.
pub fn sqrt_n_sd_ratios(reports: &[EnsembleReport]) -> Result<Vec<f64>> {
    if reports.len() < 2 {
        return Err(Error::invalid("ratios need at least two reports"));
    }
    if reports.windows(2).any(|w| w[1].n <= w[0].n) {
        return Err(Error::invalid("reports must be sorted by increasing n"));
    }
    reports
        .windows(2)
        .map(|w| {
            if w[0].sqrt_n_sd == 0.0 {
                return Err(Error::invalid("ratio undefined: zero √n·sd"));
            }
            Ok(w[1].sqrt_n_sd / w[0].sqrt_n_sd)
        })
        .collect()
}

/// CSV mirroring the self-averaging table: one row per report with
/// columns `n, range_lo, range_hi, range, sd, sqrt_n_sd`.
pub fn ensemble_csv(reports: &[EnsembleReport], config_hash: Option<&str>) -> String {
    let rows: Vec<Vec<String>> = reports
        .iter()
        .map(|r| {
            vec![
                r.n.to_string(),
                format!("{:.6}", r.min),
                format!("{:.6}", r.max),
                format!("{:.6}", r.range),
                format!("{:.6}", r.sd),
                format!("{:.6}", r.sqrt_n_sd),
            ]
        })
        .collect();
    csv_string(
        config_hash,
        &["n", "range_lo", "range_hi", "range", "sd", "sqrt_n_sd"],
        &rows,
    )
}

/// Which `√n` rescaling to apply to targets.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum RescaleMode {
    /// `y ↦ √n·y`.
    TimesSqrtN,
    /// `y ↦ √n·(y − μ̂)` with `μ̂` estimated from training targets only.
    CenteredSqrtN,
}

/// A target rescaling fixed at training time and applied identically to
/// train and test targets, with the exact inverse for reporting.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct TargetTransform {
    mode: RescaleMode,
    n: usize,
    mu: Option<f64>,
}

impl TargetTransform {
    /// The centered mode requires the training-mean estimate `μ̂`.
    pub fn new(mode: RescaleMode, n: usize, mu: Option<f64>) -> Result<Self> {
        if n == 0 {
            return Err(Error::invalid("rescaling needs a positive chain length"));
        }
        if mode == RescaleMode::CenteredSqrtN && mu.is_none() {
            return Err(Error::invalid(
                "centered rescaling needs the training-mean estimate μ̂",
            ));
        }
        if let Some(m) = mu {
            if !m.is_finite() {
                return Err(Error::invalid("μ̂ must be finite"));
            }
        }
        Ok(TargetTransform { mode, n, mu })
    }

    pub fn mode(&self) -> RescaleMode {
        self.mode
    }

    pub fn forward(&self, y: f64) -> f64 {
        let s = (self.n as f64).sqrt();
        match self.mode {
            RescaleMode::TimesSqrtN => s * y,
            RescaleMode::CenteredSqrtN => s * (y - self.mu.expect("validated")),
        }
    }

    pub fn inverse(&self, t: f64) -> f64 {
        let s = (self.n as f64).sqrt();
        match self.mode {
            RescaleMode::TimesSqrtN => t / s,
            RescaleMode::CenteredSqrtN => t / s + self.mu.expect("validated"),
        }
    }

    /// Applies the transform to every target of a dataset, leaving
    /// parameters untouched.
    pub fn apply(&self, ds: &Dataset) -> Dataset {
        Dataset {
            observable: format!("{}[{}]", ds.observable, self.label()),
            rows: ds
                .rows
                .iter()
                .map(|r| crate::exactdiag::DatasetRow {
                    x: r.x.clone(),
                    y: self.forward(r.y),
                    seed: r.seed,
                })
                .collect(),
        }
    }

    pub fn label(&self) -> &'static str {
        match self.mode {
            RescaleMode::TimesSqrtN => "times-sqrt-n",
            RescaleMode::CenteredSqrtN => "centered-sqrt-n",
        }
    }
}

/// Mean of a dataset's targets — the only legitimate source of `μ̂` for
/// the centered mode (never computed on test data).
pub fn training_mean(ds: &Dataset) -> Result<f64> {
    if ds.rows.is_empty() {
        return Err(Error::invalid("cannot estimate μ̂ from an empty dataset"));
    }
    let ys: Vec<f64> = ds.rows.iter().map(|r| r.y).collect();
    Ok(mean(&ys))
}

/// Third/fourth-moment sanity check on an ensemble, used as a soft
/// indicator that the standardized disorder average looks Gaussian.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct NormalityReport {
    pub count: usize,
    pub skewness: f64,
    pub excess_kurtosis: f64,
    /// `|skew| ≤ 0.5` and `|excess kurtosis| ≤ 1.0` — loose bounds
    /// appropriate for a couple hundred samples, not a formal test.
    pub soft_pass: bool,
}

/// Computes standardized skewness and excess kurtosis.
pub fn normality_indicator(values: &[f64]) -> Result<NormalityReport> {
    if values.len() < 8 {
        return Err(Error::invalid(
            "moment diagnostics below 8 samples are meaningless",
        ));
    }
    let mu = mean(values);
    let count = values.len() as f64;
    let central = |p: i32| values.iter().map(|v| (v - mu).powi(p)).sum::<f64>() / count;
    let m2 = central(2);
    if m2 <= 0.0 {
        return Err(Error::invalid("zero variance: normality check undefined"));
    }
    let skewness = central(3) / m2.powf(1.5);
    let excess_kurtosis = central(4) / (m2 * m2) - 3.0;
    Ok(NormalityReport {
        count: values.len(),
        skewness,
        excess_kurtosis,
        soft_pass: skewness.abs() <= 0.5 && excess_kurtosis.abs() <= 1.0,
    })
}
