//! Command-line orchestration: JSON-configured, seed-deterministic runs
//! of every workflow, writing CSV/JSONL/JSON artifacts stamped with the
//! hash of the resolved configuration.
//!
//! Seven subcommands cover the pipeline end to end: `gen-data` (ground
//! state datasets), `train` (cross-validated models), `sweep` (sample
//! complexity over chain length), `shadows` (randomized-measurement
//! datasets), `exponents` (decay-exponent curves), `clt` (disorder
//! ensemble statistics), and `fit-expsum` (exponential-sum kernel fits).
//! Every command is deterministic given its config document and seed;
//! `--dry-run` validates the config and prints the plan without
//! computing anything.

use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::exactdiag::{DatasetOptions, MaskSpec};
use crate::features::FeatureMode;
use crate::geometry::{Boundary, SiteSet};
use crate::hamiltonian::{
    build_observable, HamiltonianFamily, ObservableKind, PauliLetter, PauliTerm,
};
use crate::learner::{
    cross_validate, solve_dataset, sweep_samples, CvConfig, SolverChoice, SweepConfig,
};
use crate::shadows::{shadow_dataset, shadow_rows_to_jsonl};
use crate::stats::{disorder_ensemble, ensemble_csv, EnsembleReport};
use crate::tensor::expfit::fit_exp_sum;
use crate::theory::emit_exponent_curves;
use crate::util::{derive_seed, fnv1a_hex, tag};

/// Spin-chain learning toolkit: simulate long-range chains, train
/// regression models on their ground-state observables, and tabulate the
/// decay-exponent calculus behind the sample-complexity guarantees.
#[derive(Debug, Parser)]
#[command(name = "spinlearn", version, about)]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

/// Flags shared by every subcommand.
#[derive(Debug, Args)]
pub struct CommonArgs {
    /// Path to the JSON config document for this command.
    #[arg(long)]
    pub config: PathBuf,
    /// Overrides the config document's seed.
    #[arg(long)]
    pub seed: Option<u64>,
    /// Output directory (created if missing).
    #[arg(long, default_value = ".")]
    pub out: PathBuf,
    /// Caps worker parallelism; results are independent of this.
    #[arg(long)]
    pub threads: Option<usize>,
    /// Validate the config and print the execution plan without computing.
    #[arg(long)]
    pub dry_run: bool,
}

/// `exponents` works from a config document, from flags, or both
/// (flags win).
#[derive(Debug, Args)]
pub struct ExponentArgs {
    /// Optional JSON config document.
    #[arg(long)]
    pub config: Option<PathBuf>,
    /// Lattice dimensions, e.g. `1..5` (inclusive) or `1,3,5`.
    #[arg(long = "D")]
    pub d: Option<String>,
    /// Number of grid points on (0, 1].
    #[arg(long)]
    pub grid: Option<usize>,
    #[arg(long, default_value = ".")]
    pub out: PathBuf,
    #[arg(long)]
    pub threads: Option<usize>,
    #[arg(long)]
    pub dry_run: bool,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Generate a ground-state dataset (JSONL).
    GenData(CommonArgs),
    /// Cross-validate hyperparameters and train a model (JSON).
    Train(CommonArgs),
    /// Measure training samples needed per chain length (CSV).
    Sweep(CommonArgs),
    /// Generate randomized-measurement datasets for Pauli strings (JSONL).
    Shadows(CommonArgs),
    /// Tabulate decay-exponent curves over lattice dimensions (CSV).
    Exponents(ExponentArgs),
    /// Summarize disorder-ensemble statistics across chain lengths (CSV).
    Clt(CommonArgs),
    /// Fit a power-law kernel by a sum of exponentials (JSON).
    FitExpsum(CommonArgs),
}

/// What a command did (or would do): the human-readable plan and the
/// files it wrote (empty on dry runs).
#[derive(Debug)]
pub struct CmdReport {
    pub plan: String,
    pub outputs: Vec<PathBuf>,
    pub config_hash: String,
}

// ---------------------------------------------------------------------
// Config documents
// ---------------------------------------------------------------------

/// Which Hamiltonian family to simulate.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum FamilyName {
    Heisenberg,
    Ising,
}

/// Declarative family description used across config documents.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FamilySpec {
    pub family: FamilyName,
    pub n: usize,
    #[serde(default = "default_boundary")]
    pub boundary: Boundary,
    /// Interaction decay exponent; required for the Ising family.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub alpha: Option<f64>,
    /// Optional transverse-field strength for the Ising family.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub field: Option<f64>,
}

fn default_boundary() -> Boundary {
    Boundary::Open
}

impl FamilySpec {
    pub fn build(&self) -> Result<HamiltonianFamily> {
        self.build_at(self.n)
    }

    pub fn build_at(&self, n: usize) -> Result<HamiltonianFamily> {
        match self.family {
            FamilyName::Heisenberg => {
                if self.alpha.is_some() || self.field.is_some() {
                    return Err(Error::invalid(
                        "the Heisenberg family takes no alpha/field settings",
                    ));
                }
                HamiltonianFamily::heisenberg(n, self.boundary)
            }
            FamilyName::Ising => {
                let alpha = self
                    .alpha
                    .ok_or_else(|| Error::invalid("the Ising family needs alpha"))?;
                match self.field {
                    None => HamiltonianFamily::ising(n, self.boundary, alpha),
                    Some(f) => HamiltonianFamily::ising_with_field(n, self.boundary, alpha, f),
                }
            }
        }
    }

    fn describe(&self) -> String {
        let b = match self.boundary {
            Boundary::Open => "open",
            Boundary::Periodic => "periodic",
        };
        match self.family {
            FamilyName::Heisenberg => format!("heisenberg n={} {b}", self.n),
            FamilyName::Ising => format!(
                "ising n={} {b} alpha={}{}",
                self.n,
                self.alpha.unwrap_or(f64::NAN),
                self.field.map_or(String::new(), |f| format!(" field={f}")),
            ),
        }
    }
}

/// Masking directive: freeze couplings outside the δ-window around the
/// listed sites.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MaskConfig {
    pub center: Vec<usize>,
    pub delta: usize,
}

impl MaskConfig {
    fn to_spec(&self) -> Result<MaskSpec> {
        Ok(MaskSpec {
            center: SiteSet::new(self.center.clone())?,
            delta: self.delta,
        })
    }
}

fn default_seed() -> u64 {
    0
}

fn default_solver() -> SolverChoice {
    SolverChoice::Auto
}

fn default_samples_100() -> usize {
    100
}

fn default_grid_200() -> usize {
    200
}

fn default_d_list() -> Vec<usize> {
    vec![1, 2, 3, 4, 5]
}

fn default_mode() -> String {
    "plain".to_string()
}

fn default_observable() -> ObservableKind {
    ObservableKind::AvgCorrelation
}

/// Config for `gen-data`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GenDataConfig {
    #[serde(default = "default_seed")]
    pub seed: u64,
    #[serde(flatten)]
    pub system: FamilySpec,
    pub observable: ObservableKind,
    pub samples: usize,
    #[serde(default = "default_solver")]
    pub solver: SolverChoice,
    #[serde(default)]
    pub noise_sigma: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub mask: Option<MaskConfig>,
}

/// Config for `train`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TrainConfig {
    #[serde(default = "default_seed")]
    pub seed: u64,
    #[serde(flatten)]
    pub system: FamilySpec,
    pub observable: ObservableKind,
    pub train_samples: usize,
    #[serde(default = "default_solver")]
    pub solver: SolverChoice,
    #[serde(default)]
    pub noise_sigma: f64,
    /// Window radius of the feature map.
    pub delta: usize,
    /// Feature assembly: "plain" or "equivariant".
    #[serde(default = "default_mode")]
    pub mode: String,
    /// Optional grid overrides; defaults are the built-in grids.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub alphas: Option<Vec<f64>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub gammas: Option<Vec<f64>>,
    #[serde(default, skip_serializing_if = "Option::is_none", rename = "Rs")]
    pub rs: Option<Vec<usize>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub folds: Option<usize>,
}

/// Config for `sweep`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SweepCliConfig {
    #[serde(default = "default_seed")]
    pub seed: u64,
    #[serde(flatten)]
    pub system: FamilySpec,
    pub observable: ObservableKind,
    /// Test-RMSE target that defines "enough training samples".
    pub eps_target: f64,
    /// Chain lengths to sweep (the family spec's `n` is ignored here).
    pub n_list: Vec<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub delta: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub test_samples: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub schedule: Option<Vec<usize>>,
    #[serde(default = "default_solver")]
    pub solver: SolverChoice,
    #[serde(default = "default_mode")]
    pub mode: String,
}

/// One Pauli string for `shadows`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PauliSpec {
    pub support: Vec<usize>,
    /// One of "X", "Y", "Z" per support site.
    pub letters: Vec<String>,
    #[serde(default = "default_coefficient")]
    pub coefficient: f64,
}

fn default_coefficient() -> f64 {
    1.0
}

impl PauliSpec {
    fn to_term(&self) -> Result<PauliTerm> {
        let letters: Result<Vec<PauliLetter>> = self
            .letters
            .iter()
            .map(|s| match s.as_str() {
                "X" | "x" => Ok(PauliLetter::X),
                "Y" | "y" => Ok(PauliLetter::Y),
                "Z" | "z" => Ok(PauliLetter::Z),
                other => Err(Error::invalid(format!("unknown Pauli letter '{other}'"))),
            })
            .collect();
        PauliTerm::new(SiteSet::new(self.support.clone())?, letters?, self.coefficient)
    }
}

/// Config for `shadows`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ShadowsConfig {
    #[serde(default = "default_seed")]
    pub seed: u64,
    #[serde(flatten)]
    pub system: FamilySpec,
    pub paulis: Vec<PauliSpec>,
    pub samples: usize,
    /// Measurement rounds per sample.
    pub snapshots: usize,
}

/// Config for `exponents`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExponentsConfig {
    #[serde(default = "default_d_list")]
    pub d_list: Vec<usize>,
    #[serde(default = "default_grid_200")]
    pub grid: usize,
}

impl Default for ExponentsConfig {
    fn default() -> Self {
        ExponentsConfig {
            d_list: default_d_list(),
            grid: default_grid_200(),
        }
    }
}

/// Config for `clt`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CltConfig {
    #[serde(default = "default_seed")]
    pub seed: u64,
    #[serde(flatten)]
    pub system: FamilySpec,
    #[serde(default = "default_observable")]
    pub observable: ObservableKind,
    /// Chain lengths to tabulate (the family spec's `n` is ignored here).
    pub n_list: Vec<usize>,
    #[serde(default = "default_samples_100")]
    pub samples: usize,
    #[serde(default = "default_solver")]
    pub solver: SolverChoice,
}

/// Config for `fit-expsum`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FitExpsumConfig {
    /// Decay exponent of the `d^{−α}` kernel.
    pub alpha: f64,
    /// Largest separation the fit must cover.
    pub l_max: usize,
    /// Number of exponential terms.
    pub k: usize,
    #[serde(default = "default_boundary")]
    pub boundary: Boundary,
    /// Ring size; required for periodic fits.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub ring_n: Option<usize>,
}

/// Serialized result of `fit-expsum`.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct ExpsumOutput {
    pub config_hash: String,
    pub alpha: f64,
    pub l_max: usize,
    pub boundary: Boundary,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub ring_n: Option<usize>,
    pub weights: Vec<f64>,
    pub bases: Vec<f64>,
    pub max_rel_err: f64,
}

// ---------------------------------------------------------------------
// Plumbing
// ---------------------------------------------------------------------

/// Parses a config document, rejecting unknown fields so typos fail fast.
pub fn load_config<T: DeserializeOwned>(path: &Path) -> Result<T> {
    let text = fs::read_to_string(path)
        .map_err(|e| Error::invalid(format!("cannot read config {}: {e}", path.display())))?;
    serde_json::from_str(&text)
        .map_err(|e| Error::invalid(format!("config {} is invalid: {e}", path.display())))
}

/// Hash of the resolved (parsed, defaulted, seed-overridden) config — the
/// stamp carried by every output file.
pub fn config_hash<T: Serialize>(cfg: &T) -> String {
    let canon = serde_json::to_string(cfg).expect("config serialization cannot fail");
    fnv1a_hex(canon.as_bytes())
}

fn solver_name(s: SolverChoice) -> &'static str {
    match s {
        SolverChoice::Ed => "ed",
        SolverChoice::Dmrg => "dmrg",
        SolverChoice::Auto => "auto",
    }
}

fn describe_solver(requested: SolverChoice, n: usize) -> String {
    let eff = requested.effective(n);
    if requested == SolverChoice::Auto {
        format!("{} (auto at n={n})", solver_name(eff))
    } else {
        solver_name(eff).to_string()
    }
}

fn parse_mode(s: &str) -> Result<FeatureMode> {
    match s {
        "plain" => Ok(FeatureMode::Plain),
        "equivariant" => Ok(FeatureMode::Equivariant),
        other => Err(Error::invalid(format!(
            "unknown feature mode '{other}' (expected 'plain' or 'equivariant')"
        ))),
    }
}

fn ensure_out_dir(out: &Path) -> Result<()> {
    fs::create_dir_all(out)
        .map_err(|e| Error::invalid(format!("cannot create {}: {e}", out.display())))
}

/// Parses `--D` values: `1..5` (inclusive range) or a comma list `1,3,5`.
pub fn parse_d_spec(s: &str) -> Result<Vec<usize>> {
    let parse_one = |t: &str| -> Result<usize> {
        let v: usize = t
            .trim()
            .parse()
            .map_err(|_| Error::invalid(format!("bad dimension '{t}'")))?;
        if v == 0 {
            return Err(Error::invalid("dimensions start at 1"));
        }
        Ok(v)
    };
    let list: Vec<usize> = if let Some((lo, hi)) = s.split_once("..") {
        let (lo, hi) = (parse_one(lo)?, parse_one(hi)?);
        if hi < lo {
            return Err(Error::invalid(format!("empty dimension range '{s}'")));
        }
        (lo..=hi).collect()
    } else {
        s.split(',').map(parse_one).collect::<Result<Vec<_>>>()?
    };
    if list.is_empty() {
        return Err(Error::invalid("no dimensions given"));
    }
    Ok(list)
}

// ---------------------------------------------------------------------
// Commands
// ---------------------------------------------------------------------

/// `gen-data`: one dataset JSONL file.
pub fn cmd_gen_data(cfg: &GenDataConfig, out: &Path, dry_run: bool) -> Result<CmdReport> {
    let hash = config_hash(cfg);
    let family = cfg.system.build()?;
    let observable = build_observable(cfg.observable, &family)?;
    if cfg.samples == 0 {
        return Err(Error::invalid("samples must be positive"));
    }
    if cfg.noise_sigma < 0.0 || !cfg.noise_sigma.is_finite() {
        return Err(Error::invalid("noise_sigma must be finite and ≥ 0"));
    }
    let options = DatasetOptions {
        mask: cfg.mask.as_ref().map(|m| m.to_spec()).transpose()?,
        noise_sigma: cfg.noise_sigma,
    };
    let path = out.join("dataset.jsonl");
    let plan = format!(
        "gen-data: {} | observable {} | {} samples | solver {} | noise {}{} -> {}",
        cfg.system.describe(),
        observable.label,
        cfg.samples,
        describe_solver(cfg.solver, cfg.system.n),
        cfg.noise_sigma,
        cfg.mask
            .as_ref()
            .map_or(String::new(), |m| format!(" | mask δ={} around {:?}", m.delta, m.center)),
        path.display(),
    );
    if dry_run {
        return Ok(CmdReport { plan, outputs: vec![], config_hash: hash });
    }
    ensure_out_dir(out)?;
    eprintln!("[gen-data] solver: {}", describe_solver(cfg.solver, cfg.system.n));
    let ds = solve_dataset(&family, &observable, cfg.samples, &options, cfg.solver, cfg.seed)?;
    ds.write_jsonl(&path, Some(&hash))?;
    eprintln!("[gen-data] wrote {} rows to {}", ds.rows.len(), path.display());
    Ok(CmdReport { plan, outputs: vec![path], config_hash: hash })
}

/// `train`: cross-validate on a fresh dataset, refit, write the model JSON.
pub fn cmd_train(cfg: &TrainConfig, out: &Path, dry_run: bool) -> Result<CmdReport> {
    let hash = config_hash(cfg);
    let family = cfg.system.build()?;
    let observable = build_observable(cfg.observable, &family)?;
    let mode = parse_mode(&cfg.mode)?;
    let mut cv = CvConfig::new(
        cfg.delta,
        derive_seed(cfg.seed, tag::RFF_FREQ),
        derive_seed(cfg.seed, tag::CV_SHUFFLE),
    );
    cv.mode = mode;
    if let Some(a) = &cfg.alphas {
        cv.alphas = a.clone();
    }
    if let Some(g) = &cfg.gammas {
        cv.gammas = g.clone();
    }
    if let Some(r) = &cfg.rs {
        cv.rs = r.clone();
    }
    if let Some(f) = cfg.folds {
        cv.folds = f;
    }
    let path = out.join("model.json");
    let plan = format!(
        "train: {} | observable {} | {} samples | solver {} | δ={} mode={} | grid {}×{}×{} ({} folds) -> {}",
        cfg.system.describe(),
        observable.label,
        cfg.train_samples,
        describe_solver(cfg.solver, cfg.system.n),
        cfg.delta,
        cfg.mode,
        cv.alphas.len(),
        cv.gammas.len(),
        cv.rs.len(),
        cv.folds,
        path.display(),
    );
    if dry_run {
        return Ok(CmdReport { plan, outputs: vec![], config_hash: hash });
    }
    ensure_out_dir(out)?;
    eprintln!("[train] solver: {}", describe_solver(cfg.solver, cfg.system.n));
    let options = DatasetOptions {
        mask: None,
        noise_sigma: cfg.noise_sigma,
    };
    let dataset = solve_dataset(
        &family,
        &observable,
        cfg.train_samples,
        &options,
        cfg.solver,
        derive_seed(cfg.seed, tag::TRAIN_POOL),
    )?;
    eprintln!("[train] {} samples solved; grid search begins", dataset.rows.len());
    let outcome = cross_validate(&family, &observable, &dataset, &cv)?;
    eprintln!(
        "[train] best: alpha={} gamma={} R={} (cv rmse {:.3e})",
        outcome.best.alpha, outcome.best.gamma, outcome.best.r, outcome.best.mean_rmse
    );
    let mut model = outcome.model;
    model.config_hash = Some(hash.clone());
    let mut text = serde_json::to_string_pretty(&model.to_json())
        .expect("model serialization cannot fail");
    text.push('\n');
    fs::write(&path, text)?;
    Ok(CmdReport { plan, outputs: vec![path], config_hash: hash })
}

/// `sweep`: training-set size needed per chain length, as CSV.
pub fn cmd_sweep(cfg: &SweepCliConfig, out: &Path, dry_run: bool) -> Result<CmdReport> {
    let hash = config_hash(cfg);
    if cfg.n_list.is_empty() {
        return Err(Error::invalid("n_list must not be empty"));
    }
    let family = cfg.system.build_at(*cfg.n_list.iter().max().unwrap())?;
    let mut sweep = SweepConfig::new(cfg.eps_target, cfg.n_list.clone(), cfg.seed);
    sweep.mode = parse_mode(&cfg.mode)?;
    sweep.solver = cfg.solver;
    if let Some(d) = cfg.delta {
        sweep.delta = d;
    }
    if let Some(t) = cfg.test_samples {
        sweep.test_n = t;
    }
    if let Some(s) = &cfg.schedule {
        sweep.schedule = s.clone();
    }
    let path = out.join("sweep.csv");
    let plan = format!(
        "sweep: {} | observable {:?} | target rmse {} | n ∈ {:?} | schedule {} sizes | solver {} -> {}",
        cfg.system.describe(),
        cfg.observable,
        cfg.eps_target,
        cfg.n_list,
        sweep.schedule.len(),
        solver_name(cfg.solver),
        path.display(),
    );
    if dry_run {
        return Ok(CmdReport { plan, outputs: vec![], config_hash: hash });
    }
    ensure_out_dir(out)?;
    for &n in &cfg.n_list {
        eprintln!("[sweep] n={n}: solver {}", describe_solver(cfg.solver, n));
    }
    let result = sweep_samples(&family, cfg.observable, &sweep)?;
    fs::write(&path, result.to_csv(Some(&hash)))?;
    eprintln!("[sweep] wrote {} rows to {}", result.rows.len(), path.display());
    Ok(CmdReport { plan, outputs: vec![path], config_hash: hash })
}

/// `shadows`: one JSONL dataset per Pauli string.
pub fn cmd_shadows(cfg: &ShadowsConfig, out: &Path, dry_run: bool) -> Result<CmdReport> {
    let hash = config_hash(cfg);
    let family = cfg.system.build()?;
    let paulis: Vec<PauliTerm> = cfg
        .paulis
        .iter()
        .map(|p| p.to_term())
        .collect::<Result<Vec<_>>>()?;
    if paulis.is_empty() {
        return Err(Error::invalid("shadows need at least one Pauli string"));
    }
    let paths: Vec<PathBuf> = (0..paulis.len())
        .map(|i| out.join(format!("shadows-{i}.jsonl")))
        .collect();
    let plan = format!(
        "shadows: {} | {} Pauli strings | {} samples × {} snapshots -> {}",
        cfg.system.describe(),
        paulis.len(),
        cfg.samples,
        cfg.snapshots,
        out.join("shadows-*.jsonl").display(),
    );
    if dry_run {
        return Ok(CmdReport { plan, outputs: vec![], config_hash: hash });
    }
    ensure_out_dir(out)?;
    let datasets = shadow_dataset(&family, &paulis, cfg.samples, cfg.snapshots, cfg.seed)?;
    for (ds, path) in datasets.iter().zip(&paths) {
        fs::write(path, shadow_rows_to_jsonl(ds, Some(&hash)))?;
        eprintln!("[shadows] wrote {} rows to {}", ds.rows.len(), path.display());
    }
    Ok(CmdReport { plan, outputs: paths, config_hash: hash })
}

/// `exponents`: decay-exponent curves CSV over a dimension list.
pub fn cmd_exponents(cfg: &ExponentsConfig, out: &Path, dry_run: bool) -> Result<CmdReport> {
    let hash = config_hash(cfg);
    if cfg.grid == 0 {
        return Err(Error::invalid("grid must be positive"));
    }
    if cfg.d_list.is_empty() || cfg.d_list.iter().any(|&d| d == 0) {
        return Err(Error::invalid("d_list must be nonempty with entries ≥ 1"));
    }
    let grid: Vec<f64> = (1..=cfg.grid)
        .map(|i| i as f64 / cfg.grid as f64)
        .collect();
    let path = out.join("exponents.csv");
    let plan = format!(
        "exponents: D ∈ {:?} | {} grid points on (0,1] -> {}",
        cfg.d_list,
        cfg.grid,
        path.display(),
    );
    if dry_run {
        return Ok(CmdReport { plan, outputs: vec![], config_hash: hash });
    }
    ensure_out_dir(out)?;
    let csv = emit_exponent_curves(&cfg.d_list, &grid, Some(&hash))?;
    fs::write(&path, csv)?;
    eprintln!("[exponents] wrote {}", path.display());
    Ok(CmdReport { plan, outputs: vec![path], config_hash: hash })
}

/// `clt`: disorder-ensemble statistics table across chain lengths.
pub fn cmd_clt(cfg: &CltConfig, out: &Path, dry_run: bool) -> Result<CmdReport> {
    let hash = config_hash(cfg);
    if cfg.n_list.is_empty() {
        return Err(Error::invalid("n_list must not be empty"));
    }
    if cfg.samples < 2 {
        return Err(Error::invalid("ensemble statistics need at least 2 samples"));
    }
    let path = out.join("clt.csv");
    let plan = format!(
        "clt: {} | observable {:?} | n ∈ {:?} | {} samples each -> {}",
        cfg.system.describe(),
        cfg.observable,
        cfg.n_list,
        cfg.samples,
        path.display(),
    );
    if dry_run {
        // Validate that every size builds before declaring the plan sound.
        for &n in &cfg.n_list {
            cfg.system.build_at(n)?;
        }
        return Ok(CmdReport { plan, outputs: vec![], config_hash: hash });
    }
    ensure_out_dir(out)?;
    let mut reports: Vec<EnsembleReport> = Vec::with_capacity(cfg.n_list.len());
    for &n in &cfg.n_list {
        eprintln!("[clt] n={n}: solver {}", describe_solver(cfg.solver, n));
        let family = cfg.system.build_at(n)?;
        reports.push(disorder_ensemble(
            &family,
            cfg.observable,
            n,
            cfg.samples,
            cfg.solver,
            derive_seed(cfg.seed, n as u64),
        )?);
    }
    fs::write(&path, ensemble_csv(&reports, Some(&hash)))?;
    eprintln!("[clt] wrote {} rows to {}", reports.len(), path.display());
    Ok(CmdReport { plan, outputs: vec![path], config_hash: hash })
}

/// `fit-expsum`: exponential-sum fit of a power-law kernel, as JSON.
pub fn cmd_fit_expsum(cfg: &FitExpsumConfig, out: &Path, dry_run: bool) -> Result<CmdReport> {
    let hash = config_hash(cfg);
    let path = out.join("expsum.json");
    let plan = format!(
        "fit-expsum: alpha={} l_max={} k={} {:?}{} -> {}",
        cfg.alpha,
        cfg.l_max,
        cfg.k,
        cfg.boundary,
        cfg.ring_n.map_or(String::new(), |n| format!(" ring_n={n}")),
        path.display(),
    );
    if dry_run {
        return Ok(CmdReport { plan, outputs: vec![], config_hash: hash });
    }
    ensure_out_dir(out)?;
    let fit = fit_exp_sum(cfg.alpha, cfg.l_max, cfg.k, cfg.boundary, cfg.ring_n)?;
    let output = ExpsumOutput {
        config_hash: hash.clone(),
        alpha: fit.alpha,
        l_max: fit.l_max,
        boundary: fit.boundary,
        ring_n: fit.ring_n,
        weights: fit.weights.clone(),
        bases: fit.bases.clone(),
        max_rel_err: fit.max_rel_err,
    };
    let mut text =
        serde_json::to_string_pretty(&output).expect("fit serialization cannot fail");
    text.push('\n');
    fs::write(&path, text)?;
    eprintln!(
        "[fit-expsum] k={} max relative error {:.3e} -> {}",
        fit.k(),
        fit.max_rel_err,
        path.display()
    );
    Ok(CmdReport { plan, outputs: vec![path], config_hash: hash })
}

// ---------------------------------------------------------------------
// Dispatch
// ---------------------------------------------------------------------

fn init_threads(threads: Option<usize>) {
    if let Some(t) = threads {
        if let Err(e) = rayon::ThreadPoolBuilder::new()
            .num_threads(t.max(1))
            .build_global()
        {
            eprintln!("warning: thread pool already initialized ({e}); --threads ignored");
        }
    }
}

fn seeded<T>(mut cfg: T, flag: Option<u64>, set: impl FnOnce(&mut T, u64)) -> T {
    if let Some(s) = flag {
        set(&mut cfg, s);
    }
    cfg
}

/// Runs a parsed command line, printing the plan (dry runs) or the output
/// paths (real runs) to standard out. Returns the command's report.
pub fn run(cli: Cli) -> Result<CmdReport> {
    let (report, dry_run) = match &cli.command {
        Command::GenData(a) => {
            init_threads(a.threads);
            let cfg = seeded(load_config::<GenDataConfig>(&a.config)?, a.seed, |c, s| {
                c.seed = s;
            });
            (cmd_gen_data(&cfg, &a.out, a.dry_run)?, a.dry_run)
        }
        Command::Train(a) => {
            init_threads(a.threads);
            let cfg = seeded(load_config::<TrainConfig>(&a.config)?, a.seed, |c, s| {
                c.seed = s;
            });
            (cmd_train(&cfg, &a.out, a.dry_run)?, a.dry_run)
        }
        Command::Sweep(a) => {
            init_threads(a.threads);
            let cfg = seeded(load_config::<SweepCliConfig>(&a.config)?, a.seed, |c, s| {
                c.seed = s;
            });
            (cmd_sweep(&cfg, &a.out, a.dry_run)?, a.dry_run)
        }
        Command::Shadows(a) => {
            init_threads(a.threads);
            let cfg = seeded(load_config::<ShadowsConfig>(&a.config)?, a.seed, |c, s| {
                c.seed = s;
            });
            (cmd_shadows(&cfg, &a.out, a.dry_run)?, a.dry_run)
        }
        Command::Exponents(a) => {
            init_threads(a.threads);
            let mut cfg: ExponentsConfig = match &a.config {
                Some(p) => load_config(p)?,
                None => ExponentsConfig::default(),
            };
            if let Some(d) = &a.d {
                cfg.d_list = parse_d_spec(d)?;
            }
            if let Some(g) = a.grid {
                cfg.grid = g;
            }
            (cmd_exponents(&cfg, &a.out, a.dry_run)?, a.dry_run)
        }
        Command::Clt(a) => {
            init_threads(a.threads);
            let cfg = seeded(load_config::<CltConfig>(&a.config)?, a.seed, |c, s| {
                c.seed = s;
            });
            (cmd_clt(&cfg, &a.out, a.dry_run)?, a.dry_run)
        }
        Command::FitExpsum(a) => {
            init_threads(a.threads);
            let cfg: FitExpsumConfig = load_config(&a.config)?;
            (cmd_fit_expsum(&cfg, &a.out, a.dry_run)?, a.dry_run)
        }
    };
    if dry_run {
        println!("plan: {}", report.plan);
        println!("config-hash: {}", report.config_hash);
    } else {
        for p in &report.outputs {
            println!("{}", p.display());
        }
    }
    Ok(report)
}

/// Binary entry point: parse, run, map errors to a nonzero exit code.
pub fn main_entry() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(_) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::FAILURE
        }
    }
}
