//! ℓ1-regularized linear regression on feature vectors, with 5-fold
//! cross-validation, the sample-complexity sweep protocol, and the
//! train-one-term-predict-all-sites trick for translation-covariant
//! observables.
//!
//! The fitted predictor is `h(x) = y0 + w·Φ(x)` where `Φ` is one of the
//! feature maps and `w` minimizes the penalized empirical risk
//! `(1/2N)·Σ (y − y0 − w·Φ(x))² + α·‖w‖₁` by cyclic coordinate descent
//! with an exactly-updated intercept. The penalized form is equivalent
//! to constraining `‖w‖₁`; the correspondence is checked in tests
//! against a projected-gradient oracle.

use std::time::Instant;

use nalgebra::{DMatrix, DVector};
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha12Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::exactdiag::{expectation, generate_dataset, ground_state, Dataset, DatasetOptions, SolverOptions};
use crate::features::{full_features, FeatureBlock, FeatureMap, FeatureMode, RffSpec};
use crate::geometry::{automorphism_orbits, shift_perm, Boundary, SiteSet};
use crate::hamiltonian::{build_observable, HamiltonianFamily, Observable, ObservableKind, ParamVector};
use crate::tensor::dmrg::{generate_dataset_dmrg, TruncationPolicy};
use crate::util::{csv_string, derive_seed, mean, tag};

/// Regularization grid: {2⁻⁸, 2⁻⁷, 2⁻⁶, 2⁻⁵}.
pub const DEFAULT_ALPHA_GRID: [f64; 4] = [0.00390625, 0.0078125, 0.015625, 0.03125];
/// Bandwidth grid.
pub const DEFAULT_GAMMA_GRID: [f64; 6] = [0.4, 0.5, 0.6, 0.65, 0.7, 0.75];
/// Frequencies-per-block grid.
pub const DEFAULT_R_GRID: [usize; 4] = [5, 10, 20, 40];

/// Largest chain exact diagonalization handles; beyond it the sweep
/// switches to the tensor-network solver.
pub const ED_SITE_LIMIT: usize = 16;

/// Which ground-state solver backs dataset generation.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum SolverChoice {
    Ed,
    Dmrg,
    /// Exact diagonalization up to [`ED_SITE_LIMIT`] sites, tensor
    /// networks above.
    Auto,
}

impl SolverChoice {
    /// Resolves `Auto` at a concrete size.
    pub fn effective(self, n: usize) -> SolverChoice {
        match self {
            SolverChoice::Auto => {
                if n <= ED_SITE_LIMIT {
                    SolverChoice::Ed
                } else {
                    SolverChoice::Dmrg
                }
            }
            other => other,
        }
    }
}

/// Generates a labeled dataset with the requested solver.
pub fn solve_dataset(
    family: &HamiltonianFamily,
    observable: &Observable,
    n_samples: usize,
    options: &DatasetOptions,
    solver: SolverChoice,
    seed: u64,
) -> Result<Dataset> {
    match solver.effective(family.n_sites()) {
        SolverChoice::Ed => generate_dataset(family, observable, n_samples, options, seed),
        SolverChoice::Dmrg => generate_dataset_dmrg(
            family,
            observable,
            n_samples,
            options,
            &TruncationPolicy::default(),
            None,
            seed,
        ),
        SolverChoice::Auto => unreachable!("effective() resolves Auto"),
    }
}

/// One penalized least-squares instance on an explicit feature matrix.
#[derive(Clone, Debug)]
pub struct LassoProblem {
    features: DMatrix<f64>,
    targets: DVector<f64>,
    alpha: f64,
    intercept: bool,
    tol: f64,
    max_iter: usize,
}

impl LassoProblem {
    pub fn new(features: DMatrix<f64>, targets: Vec<f64>, alpha: f64) -> Result<Self> {
        if features.nrows() == 0 {
            return Err(Error::invalid("regression needs at least one sample"));
        }
        if features.nrows() != targets.len() {
            return Err(Error::invalid(format!(
                "{} feature rows but {} targets",
                features.nrows(),
                targets.len()
            )));
        }
        if !(alpha >= 0.0) || !alpha.is_finite() {
            return Err(Error::invalid(format!(
                "penalty must be a finite nonnegative number, got {alpha}"
            )));
        }
        if features.iter().any(|v| !v.is_finite()) || targets.iter().any(|v| !v.is_finite()) {
            return Err(Error::invalid("non-finite entries in the regression inputs"));
        }
        Ok(Self {
            features,
            targets: DVector::from_vec(targets),
            alpha,
            intercept: true,
            tol: 1e-6,
            max_iter: 10_000,
        })
    }

    pub fn with_intercept(mut self, intercept: bool) -> Self {
        self.intercept = intercept;
        self
    }

    pub fn with_tol(mut self, tol: f64) -> Self {
        self.tol = tol;
        self
    }

    pub fn with_max_iter(mut self, max_iter: usize) -> Self {
        self.max_iter = max_iter;
        self
    }

    pub fn alpha(&self) -> f64 {
        self.alpha
    }

    pub fn tol(&self) -> f64 {
        self.tol
    }

    pub fn n_samples(&self) -> usize {
        self.features.nrows()
    }

    pub fn n_features(&self) -> usize {
        self.features.ncols()
    }

    /// Penalized objective `(1/2N)‖y − y0 − Φw‖² + α‖w‖₁`.
    pub fn objective(&self, w: &DVector<f64>, y0: f64) -> f64 {
        let r = &self.targets - &self.features * w - DVector::from_element(self.n_samples(), y0);
        0.5 * r.norm_squared() / self.n_samples() as f64 + self.alpha * w.abs().sum()
    }
}

/// Solution of a [`LassoProblem`] with convergence diagnostics.
#[derive(Clone, Debug)]
pub struct LassoFit {
    pub w: DVector<f64>,
    pub y0: f64,
    /// Final penalized objective value.
    pub objective: f64,
    /// Completed coordinate-descent cycles.
    pub iterations: usize,
    pub converged: bool,
    pub l1_norm: f64,
    /// Objective after every cycle, for monotonicity checks.
    pub objective_trace: Vec<f64>,
}

fn soft_threshold(rho: f64, alpha: f64) -> f64 {
    if rho > alpha {
        rho - alpha
    } else if rho < -alpha {
        rho + alpha
    } else {
        0.0
    }
}

/// Cyclic coordinate descent with soft thresholding; the intercept is
/// re-solved in closed form (mean residual) after every cycle. Stops when
/// no coordinate (or the intercept) moved more than the tolerance.
pub fn lasso_fit(p: &LassoProblem) -> Result<LassoFit> {
    let n = p.n_samples() as f64;
    let m = p.n_features();
    let mut w = DVector::<f64>::zeros(m);
    let mut y0 = 0.0;
    // Residual r = y − y0 − Φw, kept exact under coordinate updates.
    let mut r = p.targets.clone();
    if p.intercept {
        y0 = r.mean();
        r.add_scalar_mut(-y0);
    }
    let col_sq: Vec<f64> = (0..m)
        .map(|j| p.features.column(j).norm_squared() / n)
        .collect();
    let mut trace = Vec::new();
    let mut converged = false;
    let mut cycles = 0usize;
    while cycles < p.max_iter {
        cycles += 1;
        let mut max_delta = 0.0f64;
        for j in 0..m {
            if col_sq[j] == 0.0 {
                continue;
            }
            let col = p.features.column(j);
            let rho = col.dot(&r) / n + col_sq[j] * w[j];
            let next = soft_threshold(rho, p.alpha) / col_sq[j];
            let delta = next - w[j];
            if delta != 0.0 {
                r.axpy(-delta, &col, 1.0);
                w[j] = next;
                max_delta = max_delta.max(delta.abs());
            }
        }
        if p.intercept {
            let shift = r.mean();
            if shift != 0.0 {
                y0 += shift;
                r.add_scalar_mut(-shift);
                max_delta = max_delta.max(shift.abs());
            }
        }
        trace.push(0.5 * r.norm_squared() / n + p.alpha * w.abs().sum());
        if max_delta <= p.tol {
            converged = true;
            break;
        }
    }
    let objective = *trace.last().expect("at least one cycle runs");
    Ok(LassoFit {
        l1_norm: w.abs().sum(),
        objective,
        iterations: cycles,
        converged,
        objective_trace: trace,
        w,
        y0,
    })
}

/// Worst first-order optimality violation of a solution: for active
/// coordinates `|∇_j + α·sign(w_j)|`, for inactive ones the excess of
/// `|∇_j|` over `α`. At an exact optimum this is zero; after coordinate
/// descent it should be a small multiple of the tolerance.
pub fn kkt_worst_violation(p: &LassoProblem, fit: &LassoFit) -> f64 {
    let n = p.n_samples() as f64;
    let r = &p.targets
        - &p.features * &fit.w
        - DVector::from_element(p.n_samples(), fit.y0);
    let mut worst = 0.0f64;
    for j in 0..p.n_features() {
        let grad = -p.features.column(j).dot(&r) / n;
        let v = if fit.w[j] != 0.0 {
            (grad + p.alpha * fit.w[j].signum()).abs()
        } else {
            (grad.abs() - p.alpha).max(0.0)
        };
        worst = worst.max(v);
    }
    worst
}

/// Selected hyperparameters of a trained model.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Hyperparams {
    pub alpha: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub gamma: Option<f64>,
    #[serde(rename = "R", default, skip_serializing_if = "Option::is_none")]
    pub r: Option<usize>,
    /// `"plain"` or `"equivariant"` feature assembly.
    pub mode: String,
}

/// Convergence and fit-quality record stored alongside a model.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Diagnostics {
    pub objective: f64,
    pub iterations: usize,
    pub l1_norm: f64,
    pub converged: bool,
}

/// A fitted predictor `h(x) = y0 + w·Φ(x)` together with everything
/// needed to evaluate it.
#[derive(Clone, Debug, PartialEq)]
pub struct TrainedModel {
    pub feature_map: FeatureMap,
    pub mode: FeatureMode,
    pub w: Vec<f64>,
    pub y0: f64,
    pub hyperparams: Hyperparams,
    pub diagnostics: Diagnostics,
    /// Hash of the generating configuration, when produced by a run.
    pub config_hash: Option<String>,
}

fn mode_name(mode: FeatureMode) -> &'static str {
    match mode {
        FeatureMode::Plain => "plain",
        FeatureMode::Equivariant => "equivariant",
    }
}

fn mode_from_name(name: &str) -> Result<FeatureMode> {
    match name {
        "plain" => Ok(FeatureMode::Plain),
        "equivariant" => Ok(FeatureMode::Equivariant),
        other => Err(Error::invalid(format!("unknown feature mode {other:?}"))),
    }
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct ModelJson {
    feature_spec: serde_json::Value,
    w: Vec<f64>,
    y0: f64,
    hyperparams: Hyperparams,
    diagnostics: Diagnostics,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    config_hash: Option<String>,
}

impl TrainedModel {
    /// Interchange form `{feature_spec, w, y0, hyperparams, diagnostics}`
    /// (plus the optional config hash).
    pub fn to_json(&self) -> serde_json::Value {
        serde_json::to_value(ModelJson {
            feature_spec: self.feature_map.to_json(),
            w: self.w.clone(),
            y0: self.y0,
            hyperparams: self.hyperparams.clone(),
            diagnostics: self.diagnostics.clone(),
            config_hash: self.config_hash.clone(),
        })
        .expect("model schema serializes")
    }

    pub fn from_json(value: &serde_json::Value) -> Result<Self> {
        let json: ModelJson = serde_json::from_value(value.clone())?;
        let mode = mode_from_name(&json.hyperparams.mode)?;
        Ok(TrainedModel {
            feature_map: FeatureMap::from_json(&json.feature_spec)?,
            mode,
            w: json.w,
            y0: json.y0,
            hyperparams: json.hyperparams,
            diagnostics: json.diagnostics,
            config_hash: json.config_hash,
        })
    }
}

/// Evaluates the predictor at one parameter vector.
pub fn predict(
    model: &TrainedModel,
    family: &HamiltonianFamily,
    observable: &Observable,
    x: &ParamVector,
) -> Result<f64> {
    let fv = full_features(family, x, observable, &model.feature_map, model.mode)?;
    if fv.len() != model.w.len() {
        return Err(Error::invalid(format!(
            "feature vector has {} entries but the model stores {} weights",
            fv.len(),
            model.w.len()
        )));
    }
    let dot: f64 = fv.values().iter().zip(&model.w).map(|(f, w)| f * w).sum();
    Ok(model.y0 + dot)
}

/// Root-mean-squared prediction error over a dataset.
pub fn rmse(
    model: &TrainedModel,
    family: &HamiltonianFamily,
    observable: &Observable,
    dataset: &Dataset,
) -> Result<f64> {
    if dataset.rows.is_empty() {
        return Err(Error::invalid("RMSE over an empty dataset"));
    }
    let sq: Result<Vec<f64>> = dataset
        .rows
        .par_iter()
        .map(|row| {
            let p = predict(model, family, observable, &row.x)?;
            Ok((p - row.y) * (p - row.y))
        })
        .collect();
    Ok(mean(&sq?).sqrt())
}

/// Stacks per-sample feature vectors into an `N × m` matrix (parallel
/// over samples).
pub fn features_matrix(
    family: &HamiltonianFamily,
    observable: &Observable,
    map: &FeatureMap,
    mode: FeatureMode,
    xs: &[ParamVector],
) -> Result<DMatrix<f64>> {
    let rows: Result<Vec<Vec<f64>>> = xs
        .par_iter()
        .map(|x| Ok(full_features(family, x, observable, map, mode)?.into_values()))
        .collect();
    let rows = rows?;
    let m = rows.first().map_or(0, |r| r.len());
    if rows.iter().any(|r| r.len() != m) {
        return Err(Error::invalid("inconsistent feature lengths across samples"));
    }
    Ok(DMatrix::from_fn(rows.len(), m, |i, j| rows[i][j]))
}

/// Cross-validation controls: the hyperparameter grids, fold count, and
/// the seeds for feature frequencies and the fold shuffle.
#[derive(Clone, Debug)]
pub struct CvConfig {
    pub delta: usize,
    pub feature_seed: u64,
    pub shuffle_seed: u64,
    pub mode: FeatureMode,
    pub alphas: Vec<f64>,
    pub gammas: Vec<f64>,
    pub rs: Vec<usize>,
    pub folds: usize,
    pub tol: f64,
    pub max_iter: usize,
}

impl CvConfig {
    /// Default grids (4 penalties × 6 bandwidths × 4 widths = 96 combos),
    /// 5 folds, plain assembly.
    pub fn new(delta: usize, feature_seed: u64, shuffle_seed: u64) -> Self {
        CvConfig {
            delta,
            feature_seed,
            shuffle_seed,
            mode: FeatureMode::Plain,
            alphas: DEFAULT_ALPHA_GRID.to_vec(),
            gammas: DEFAULT_GAMMA_GRID.to_vec(),
            rs: DEFAULT_R_GRID.to_vec(),
            folds: 5,
            tol: 1e-6,
            max_iter: 10_000,
        }
    }
}

/// Mean validation error of one grid point.
#[derive(Clone, Debug, PartialEq)]
pub struct CvRow {
    pub alpha: f64,
    pub gamma: f64,
    pub r: usize,
    pub mean_rmse: f64,
}

/// Grid-search outcome: the full table, the winning combination, and the
/// model refit on all samples at that combination.
#[derive(Clone, Debug)]
pub struct CvOutcome {
    pub table: Vec<CvRow>,
    pub best: CvRow,
    pub model: TrainedModel,
}

/// Keeps the leading `2r` columns of every block — valid because smaller
/// frequency matrices are prefixes of larger ones drawn from the same
/// seed, so this reproduces the features of the narrower spec exactly.
fn restrict_r(phi: &DMatrix<f64>, blocks: &[FeatureBlock], r: usize) -> DMatrix<f64> {
    let cols: Vec<usize> = blocks
        .iter()
        .flat_map(|b| b.offset..b.offset + 2 * r)
        .collect();
    phi.select_columns(cols.iter())
}

/// Deterministic fold labels: indices are shuffled by a seeded
/// permutation, then dealt round-robin.
fn fold_labels(n: usize, folds: usize, shuffle_seed: u64) -> Vec<usize> {
    let mut order: Vec<usize> = (0..n).collect();
    let mut rng = ChaCha12Rng::seed_from_u64(derive_seed(shuffle_seed, tag::CV_SHUFFLE));
    order.shuffle(&mut rng);
    let mut labels = vec![0usize; n];
    for (pos, &idx) in order.iter().enumerate() {
        labels[idx] = pos % folds;
    }
    labels
}

fn fit_eval_fold(
    phi: &DMatrix<f64>,
    ys: &[f64],
    labels: &[usize],
    fold: usize,
    alpha: f64,
    tol: f64,
    max_iter: usize,
) -> Result<f64> {
    let train_idx: Vec<usize> = (0..ys.len()).filter(|i| labels[*i] != fold).collect();
    let val_idx: Vec<usize> = (0..ys.len()).filter(|i| labels[*i] == fold).collect();
    let train_phi = phi.select_rows(train_idx.iter());
    let train_y: Vec<f64> = train_idx.iter().map(|&i| ys[i]).collect();
    let fit = lasso_fit(
        &LassoProblem::new(train_phi, train_y, alpha)?
            .with_tol(tol)
            .with_max_iter(max_iter),
    )?;
    let sq: Vec<f64> = val_idx
        .iter()
        .map(|&i| {
            let pred = fit.y0 + phi.row(i).transpose().dot(&fit.w);
            (pred - ys[i]) * (pred - ys[i])
        })
        .collect();
    Ok(mean(&sq).sqrt())
}

/// Exhaustive grid search with deterministic folds. Selection is by mean
/// validation RMSE; exact ties break toward smaller `R`, then larger `α`
/// (the simpler model). The returned model is refit on all samples.
pub fn cross_validate(
    family: &HamiltonianFamily,
    observable: &Observable,
    dataset: &Dataset,
    cfg: &CvConfig,
) -> Result<CvOutcome> {
    let n = dataset.rows.len();
    if n < cfg.folds {
        return Err(Error::invalid(format!(
            "{n} samples cannot fill {} folds",
            cfg.folds
        )));
    }
    if cfg.folds < 2 {
        return Err(Error::invalid("cross-validation needs at least 2 folds"));
    }
    if cfg.alphas.is_empty() || cfg.gammas.is_empty() || cfg.rs.is_empty() {
        return Err(Error::invalid("empty hyperparameter grid"));
    }
    let xs: Vec<ParamVector> = dataset.rows.iter().map(|r| r.x.clone()).collect();
    let ys: Vec<f64> = dataset.rows.iter().map(|r| r.y).collect();
    let labels = fold_labels(n, cfg.folds, cfg.shuffle_seed);
    let r_max = *cfg.rs.iter().max().expect("grid nonempty");

    let mut table = Vec::new();
    for &gamma in &cfg.gammas {
        let wide_spec = RffSpec::new(cfg.delta, r_max, gamma, cfg.feature_seed)?;
        let wide = features_matrix(family, observable, &FeatureMap::Rff(wide_spec), cfg.mode, &xs)?;
        let probe = full_features(
            family,
            &xs[0],
            observable,
            &FeatureMap::Rff(RffSpec::new(cfg.delta, r_max, gamma, cfg.feature_seed)?),
            cfg.mode,
        )?;
        let blocks = probe.blocks().to_vec();
        let combos: Vec<(usize, f64)> = cfg
            .rs
            .iter()
            .flat_map(|&r| cfg.alphas.iter().map(move |&a| (r, a)))
            .collect();
        let rows: Result<Vec<CvRow>> = combos
            .par_iter()
            .map(|&(r, alpha)| {
                let phi = if r == r_max {
                    wide.clone()
                } else {
                    restrict_r(&wide, &blocks, r)
                };
                let fold_rmse: Result<Vec<f64>> = (0..cfg.folds)
                    .map(|f| fit_eval_fold(&phi, &ys, &labels, f, alpha, cfg.tol, cfg.max_iter))
                    .collect();
                Ok(CvRow {
                    alpha,
                    gamma,
                    r,
                    mean_rmse: mean(&fold_rmse?),
                })
            })
            .collect();
        table.extend(rows?);
    }

    let best = table
        .iter()
        .min_by(|a, b| {
            a.mean_rmse
                .total_cmp(&b.mean_rmse)
                .then(a.r.cmp(&b.r))
                .then(b.alpha.total_cmp(&a.alpha))
        })
        .expect("grid nonempty")
        .clone();

    let spec = RffSpec::new(cfg.delta, best.r, best.gamma, cfg.feature_seed)?;
    let map = FeatureMap::Rff(spec);
    let phi = features_matrix(family, observable, &map, cfg.mode, &xs)?;
    let fit = lasso_fit(
        &LassoProblem::new(phi, ys, best.alpha)?
            .with_tol(cfg.tol)
            .with_max_iter(cfg.max_iter),
    )?;
    let model = TrainedModel {
        feature_map: map,
        mode: cfg.mode,
        w: fit.w.as_slice().to_vec(),
        y0: fit.y0,
        hyperparams: Hyperparams {
            alpha: best.alpha,
            gamma: Some(best.gamma),
            r: Some(best.r),
            mode: mode_name(cfg.mode).to_string(),
        },
        diagnostics: Diagnostics {
            objective: fit.objective,
            iterations: fit.iterations,
            l1_norm: fit.l1_norm,
            converged: fit.converged,
        },
        config_hash: None,
    };
    Ok(CvOutcome { table, best, model })
}

/// Sample-complexity sweep controls.
#[derive(Clone, Debug)]
pub struct SweepConfig {
    /// Stop growing the training set once test RMSE falls to this value.
    pub eps_target: f64,
    pub n_list: Vec<usize>,
    /// Training-set sizes tried in order (default 5, 10, …, 200).
    pub schedule: Vec<usize>,
    /// Fixed held-out test set size per chain length.
    pub test_n: usize,
    pub seed: u64,
    pub delta: usize,
    pub mode: FeatureMode,
    pub solver: SolverChoice,
    pub noise_sigma: f64,
    pub alphas: Vec<f64>,
    pub gammas: Vec<f64>,
    pub rs: Vec<usize>,
    pub folds: usize,
    pub tol: f64,
    pub max_iter: usize,
}

/// Training sizes 5, 10, …, 200.
pub fn default_schedule() -> Vec<usize> {
    (1..=40).map(|k| 5 * k).collect()
}

impl SweepConfig {
    pub fn new(eps_target: f64, n_list: Vec<usize>, seed: u64) -> Self {
        SweepConfig {
            eps_target,
            n_list,
            schedule: default_schedule(),
            test_n: 40,
            seed,
            delta: 2,
            mode: FeatureMode::Plain,
            solver: SolverChoice::Auto,
            noise_sigma: 0.0,
            alphas: DEFAULT_ALPHA_GRID.to_vec(),
            gammas: DEFAULT_GAMMA_GRID.to_vec(),
            rs: DEFAULT_R_GRID.to_vec(),
            folds: 5,
            tol: 1e-6,
            max_iter: 10_000,
        }
    }

    fn cv_config(&self, feature_seed: u64, shuffle_seed: u64) -> CvConfig {
        CvConfig {
            delta: self.delta,
            feature_seed,
            shuffle_seed,
            mode: self.mode,
            alphas: self.alphas.clone(),
            gammas: self.gammas.clone(),
            rs: self.rs.clone(),
            folds: self.folds,
            tol: self.tol,
            max_iter: self.max_iter,
        }
    }
}

/// Result for one chain length: the first schedule entry whose test RMSE
/// met the target (`None` when the schedule was exhausted — censored),
/// the RMSE achieved there, and the winning hyperparameters.
#[derive(Clone, Debug, PartialEq)]
pub struct SweepRow {
    pub n: usize,
    pub n_needed: Option<usize>,
    pub rmse: f64,
    pub hyperparams: Hyperparams,
    pub seconds: f64,
}

/// Sweep output across chain lengths.
#[derive(Clone, Debug, PartialEq)]
pub struct SweepResult {
    pub observable: String,
    pub rows: Vec<SweepRow>,
}

impl SweepResult {
    /// CSV with columns `n,N_needed,rmse,alpha,gamma,R,seconds`; censored
    /// rows leave `N_needed` empty.
    pub fn to_csv(&self, config_hash: Option<&str>) -> String {
        let rows: Vec<Vec<String>> = self
            .rows
            .iter()
            .map(|r| {
                vec![
                    r.n.to_string(),
                    r.n_needed.map_or(String::new(), |v| v.to_string()),
                    format!("{:.6e}", r.rmse),
                    format!("{:.6e}", r.hyperparams.alpha),
                    r.hyperparams
                        .gamma
                        .map_or(String::new(), |g| format!("{g}")),
                    r.hyperparams.r.map_or(String::new(), |v| v.to_string()),
                    format!("{:.3}", r.seconds),
                ]
            })
            .collect();
        csv_string(
            config_hash,
            &["n", "N_needed", "rmse", "alpha", "gamma", "R", "seconds"],
            &rows,
        )
    }
}

/// Runs the sample-complexity protocol: per chain length, a fixed test
/// set is drawn, the training pool grows along the schedule, and at each
/// size a full cross-validated fit is tested; the first size reaching
/// the target RMSE is recorded.
pub fn sweep_samples(
    family: &HamiltonianFamily,
    kind: ObservableKind,
    cfg: &SweepConfig,
) -> Result<SweepResult> {
    if cfg.schedule.is_empty() || cfg.schedule.windows(2).any(|w| w[1] <= w[0]) {
        return Err(Error::invalid("schedule must be strictly increasing and nonempty"));
    }
    if cfg.test_n == 0 {
        return Err(Error::invalid("test set must be nonempty"));
    }
    let pool_max = *cfg.schedule.last().expect("nonempty schedule");
    let options = DatasetOptions {
        mask: None,
        noise_sigma: cfg.noise_sigma,
    };
    let mut rows = Vec::new();
    let mut label = String::new();
    for &n in &cfg.n_list {
        let start = Instant::now();
        let fam = family.with_size(n)?;
        let obs = build_observable(kind, &fam)?;
        label = obs.label.clone();
        let base = derive_seed(cfg.seed, n as u64);
        let train_pool = solve_dataset(
            &fam,
            &obs,
            pool_max,
            &options,
            cfg.solver,
            derive_seed(base, tag::TRAIN_POOL),
        )?;
        let test_set = solve_dataset(
            &fam,
            &obs,
            cfg.test_n,
            &options,
            cfg.solver,
            derive_seed(base, tag::TEST_POOL),
        )?;
        let cv_cfg = cfg.cv_config(derive_seed(base, tag::RFF_FREQ), base);
        let mut found: Option<usize> = None;
        let mut last_rmse = f64::INFINITY;
        let mut last_hp = Hyperparams {
            alpha: f64::NAN,
            gamma: None,
            r: None,
            mode: mode_name(cfg.mode).to_string(),
        };
        for &n_train in &cfg.schedule {
            let subset = Dataset {
                observable: train_pool.observable.clone(),
                rows: train_pool.rows[..n_train.min(train_pool.rows.len())].to_vec(),
            };
            let outcome = cross_validate(&fam, &obs, &subset, &cv_cfg)?;
            last_rmse = rmse(&outcome.model, &fam, &obs, &test_set)?;
            last_hp = outcome.model.hyperparams.clone();
            if last_rmse <= cfg.eps_target {
                found = Some(n_train);
                break;
            }
        }
        rows.push(SweepRow {
            n,
            n_needed: found,
            rmse: last_rmse,
            hyperparams: last_hp,
            seconds: start.elapsed().as_secs_f64(),
        });
    }
    Ok(SweepResult {
        observable: label,
        rows,
    })
}

/// Model trained on one correlation term plus its per-site evaluation
/// when cycled around the ring.
#[derive(Clone, Debug)]
pub struct EquivariantReport {
    pub model: TrainedModel,
    /// Test RMSE of the cycled model at each site offset `i`
    /// (predicting the correlation on `{i, i+1}`).
    pub per_site_rmse: Vec<f64>,
    pub avg_rmse: f64,
}

/// Predicts the correlation on `{i, i+1}` with a model trained on
/// `{0, 1}`, by pulling the parameters back along the translation that
/// maps `{0,1}` onto `{i, i+1}`.
pub fn predict_term(
    model: &TrainedModel,
    family: &HamiltonianFamily,
    observable_rep: &Observable,
    site_offset: usize,
    x: &ParamVector,
) -> Result<f64> {
    let n = family.n_sites();
    let g = shift_perm(n, site_offset % n);
    let xg = family.permute_params(&g, x)?;
    predict(model, family, observable_rep, &xg)
}

/// Trains on the `{0,1}` correlation only and evaluates the same model
/// on every translated pair: the ground-state covariance
/// `y_{gI}(x) = y_I(g·x)` makes one model serve all sites.
///
/// Exact diagonalization backs the test targets (one solve per sample
/// scores all sites), so this requires `n ≤ 16`.
pub fn train_equivariant_local(
    family: &HamiltonianFamily,
    cv: &CvConfig,
    n_train: usize,
    n_test: usize,
    seed: u64,
) -> Result<EquivariantReport> {
    let n = family.n_sites();
    if family.hypergraph().lattice().boundary() != Boundary::Periodic {
        return Err(Error::invalid(
            "cycling a single-term model needs a periodic chain".to_string(),
        ));
    }
    if n > ED_SITE_LIMIT {
        return Err(Error::TooLarge {
            what: "per-site evaluation (exact diagonalization)",
            size: n,
            max: ED_SITE_LIMIT,
        });
    }
    // Transitivity check: all nearest-neighbor pairs must form one orbit.
    let pairs: Vec<SiteSet> = (0..n)
        .map(|i| SiteSet::pair(i, (i + 1) % n).expect("ring pair"))
        .collect();
    let orbits = automorphism_orbits(family.hypergraph(), &pairs)?;
    if orbits.len() != 1 {
        return Err(Error::invalid(format!(
            "nearest-neighbor pairs split into {} orbits; cycling needs a transitive set",
            orbits.len()
        )));
    }

    let obs_rep = build_observable(ObservableKind::LocalCorrelation { i: 0, j: 1 }, family)?;
    let options = DatasetOptions::default();
    let train = generate_dataset(
        family,
        &obs_rep,
        n_train,
        &options,
        derive_seed(seed, tag::TRAIN_POOL),
    )?;
    let outcome = cross_validate(family, &obs_rep, &train, cv)?;
    let model = outcome.model;

    // Test targets: one exact solve per sample scores every site.
    let test_seed = derive_seed(seed, tag::TEST_POOL);
    let params_base = derive_seed(test_seed, tag::PARAMS);
    let solver_base = derive_seed(test_seed, tag::LANCZOS_START);
    let all_obs: Vec<Observable> = (0..n)
        .map(|i| {
            build_observable(
                ObservableKind::LocalCorrelation {
                    i,
                    j: (i + 1) % n,
                },
                family,
            )
        })
        .collect::<Result<_>>()?;
    let per_sample: Result<Vec<(ParamVector, Vec<f64>)>> = (0..n_test)
        .into_par_iter()
        .map(|k| {
            let x = family.sample_params(derive_seed(params_base, k as u64));
            let opts = SolverOptions {
                seed: derive_seed(solver_base, k as u64),
                ..SolverOptions::default()
            };
            let spectral = ground_state(&family.operator(&x)?, &opts)?;
            let ys: Result<Vec<f64>> = all_obs
                .iter()
                .map(|o| expectation(&spectral.ground, o))
                .collect();
            Ok((x, ys?))
        })
        .collect();
    let per_sample = per_sample?;

    let mut per_site_rmse = Vec::with_capacity(n);
    for i in 0..n {
        let sq: Result<Vec<f64>> = per_sample
            .par_iter()
            .map(|(x, ys)| {
                let p = predict_term(&model, family, &obs_rep, i, x)?;
                Ok((p - ys[i]) * (p - ys[i]))
            })
            .collect();
        per_site_rmse.push(mean(&sq?).sqrt());
    }
    let avg_rmse = mean(&per_site_rmse);
    Ok(EquivariantReport {
        model,
        per_site_rmse,
        avg_rmse,
    })
}
