//! Parameterized Hamiltonian families, Pauli operators, observables, and
//! interaction-decay checks.
//!
//! Two families are provided. The disordered Heisenberg chain
//! `H = Σ_{⟨ij⟩} J_ij (X_i X_j + Y_i Y_j + Z_i Z_j)` carries one coupling per
//! nearest-neighbor edge, sampled uniformly from `[0, 2]`. The long-range
//! Ising chain `H = Σ_{i<j} (1 + J_i J_j) / d(i,j)^α · Z_i Z_j + Σ_i h X_i`
//! carries one parameter per site (the `J_i`), with the transverse field
//! fixed at `h = e` by default; every pair coupling then reads off the two
//! site parameters it touches. Parameters therefore live on the interaction
//! hypergraph's edges: pair edges for Heisenberg, singleton edges for Ising.

use nalgebra::DMatrix;
use num_complex::Complex64;
use rand::distributions::{Distribution, Uniform};
use rand::SeedableRng;
use rand_chacha::ChaCha12Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::{
    Boundary, Edge, InteractionHypergraph, LatticeSpec, Neighborhood, SiteSet,
};

/// Default transverse field of the Ising family, stored to full precision.
pub const TRANSVERSE_FIELD_DEFAULT: f64 = std::f64::consts::E;

/// Largest qubit count for which sparse operators may be instantiated.
const OPERATOR_GUARD: usize = 20;
/// Largest qubit count for which a dense matrix may be materialized.
const DENSE_GUARD: usize = 10;
/// Largest qubit count for the decay-constant scan.
const DECAY_GUARD: usize = 64;
/// Largest support size for exact operator-norm computation (dense 8×8).
const NORM_SUPPORT_GUARD: usize = 3;

/// A single-qubit Pauli letter.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum PauliLetter {
    X,
    Y,
    Z,
}

impl PauliLetter {
    pub fn as_char(self) -> char {
        match self {
            PauliLetter::X => 'X',
            PauliLetter::Y => 'Y',
            PauliLetter::Z => 'Z',
        }
    }

    pub fn from_char(c: char) -> Result<Self> {
        match c {
            'X' | 'x' => Ok(PauliLetter::X),
            'Y' | 'y' => Ok(PauliLetter::Y),
            'Z' | 'z' => Ok(PauliLetter::Z),
            _ => Err(Error::invalid(format!("unknown Pauli letter '{c}'"))),
        }
    }
}

/// A weighted Pauli string: letters aligned with a sorted support.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PauliTerm {
    support: SiteSet,
    letters: Vec<PauliLetter>,
    coefficient: f64,
}

impl PauliTerm {
    pub fn new(support: SiteSet, letters: Vec<PauliLetter>, coefficient: f64) -> Result<Self> {
        if letters.len() != support.len() {
            return Err(Error::invalid(format!(
                "{} letters for a support of {} sites",
                letters.len(),
                support.len()
            )));
        }
        Ok(PauliTerm {
            support,
            letters,
            coefficient,
        })
    }

    /// Parses compact labels like `"X0Z2"` or `"Z3 Z5"` (coefficient 1).
    pub fn parse(s: &str) -> Result<Self> {
        let compact: String = s.chars().filter(|c| !c.is_whitespace()).collect();
        let mut pairs: Vec<(usize, PauliLetter)> = Vec::new();
        let mut chars = compact.chars().peekable();
        while let Some(c) = chars.next() {
            let letter = PauliLetter::from_char(c)?;
            let mut digits = String::new();
            while let Some(d) = chars.peek().filter(|d| d.is_ascii_digit()) {
                digits.push(*d);
                chars.next();
            }
            if digits.is_empty() {
                return Err(Error::invalid(format!("missing site index in '{s}'")));
            }
            let site: usize = digits
                .parse()
                .map_err(|_| Error::invalid(format!("bad site index in '{s}'")))?;
            pairs.push((site, letter));
        }
        if pairs.is_empty() {
            return Err(Error::invalid("empty Pauli label"));
        }
        pairs.sort_by_key(|&(site, _)| site);
        let support = SiteSet::new(pairs.iter().map(|&(site, _)| site).collect())?;
        let letters = pairs.into_iter().map(|(_, l)| l).collect();
        PauliTerm::new(support, letters, 1.0)
    }

    /// Compact label, e.g. `"X0Z2"`.
    pub fn label(&self) -> String {
        self.support
            .sites()
            .iter()
            .zip(&self.letters)
            .map(|(site, letter)| format!("{}{site}", letter.as_char()))
            .collect()
    }

    pub fn support(&self) -> &SiteSet {
        &self.support
    }

    pub fn letters(&self) -> &[PauliLetter] {
        &self.letters
    }

    pub fn coefficient(&self) -> f64 {
        self.coefficient
    }

    pub fn with_coefficient(&self, coefficient: f64) -> Self {
        PauliTerm {
            support: self.support.clone(),
            letters: self.letters.clone(),
            coefficient,
        }
    }
}

/// One Pauli term compiled to bit masks: applying it to a basis state `|b⟩`
/// yields `coeff · (−1)^{popcount(b & sign_mask)} · |b ^ flip_mask⟩`, with
/// `i^{#Y}` folded into `coeff`.
#[derive(Debug, Clone)]
struct CompiledTerm {
    coeff: Complex64,
    flip_mask: usize,
    sign_mask: usize,
}

fn compile_term(n: usize, term: &PauliTerm) -> Result<CompiledTerm> {
    let mut flip = 0usize;
    let mut sign = 0usize;
    let mut y_count = 0u32;
    for (&site, &letter) in term.support.sites().iter().zip(term.letters()) {
        if site >= n {
            return Err(Error::invalid(format!("term site {site} out of range for n={n}")));
        }
        match letter {
            PauliLetter::X => flip |= 1 << site,
            PauliLetter::Y => {
                flip |= 1 << site;
                sign |= 1 << site;
                y_count += 1;
            }
            PauliLetter::Z => sign |= 1 << site,
        }
    }
    let phase = match y_count % 4 {
        0 => Complex64::new(1.0, 0.0),
        1 => Complex64::new(0.0, 1.0),
        2 => Complex64::new(-1.0, 0.0),
        _ => Complex64::new(0.0, -1.0),
    };
    Ok(CompiledTerm {
        coeff: phase * term.coefficient,
        flip_mask: flip,
        sign_mask: sign,
    })
}

/// A Hermitian operator stored as a list of weighted Pauli strings with a
/// matrix-free matvec. Site `i` corresponds to bit `i` of the basis index.
#[derive(Debug, Clone)]
pub struct PauliOperator {
    n: usize,
    terms: Vec<CompiledTerm>,
    coeff_norm: f64,
}

impl PauliOperator {
    pub fn new(n: usize, terms: &[PauliTerm]) -> Result<Self> {
        if n == 0 || n > OPERATOR_GUARD {
            return Err(Error::TooLarge {
                what: "qubit count for sparse operator",
                size: n,
                max: OPERATOR_GUARD,
            });
        }
        let compiled = terms
            .iter()
            .map(|t| compile_term(n, t))
            .collect::<Result<Vec<_>>>()?;
        let coeff_norm = terms.iter().map(|t| t.coefficient.abs()).sum();
        Ok(PauliOperator {
            n,
            terms: compiled,
            coeff_norm,
        })
    }

    pub fn n_qubits(&self) -> usize {
        self.n
    }

    pub fn dim(&self) -> usize {
        1 << self.n
    }

    pub fn n_terms(&self) -> usize {
        self.terms.len()
    }

    /// Sum of absolute coefficients; an upper bound on the operator norm
    /// used to scale convergence tolerances.
    pub fn coeff_norm(&self) -> f64 {
        self.coeff_norm
    }

    /// `out += H v`, accumulating terms in a fixed order so results are
    /// independent of thread count.
    pub fn apply_add(&self, v: &[Complex64], out: &mut [Complex64]) {
        debug_assert_eq!(v.len(), self.dim());
        debug_assert_eq!(out.len(), self.dim());
        for term in &self.terms {
            let c = term.coeff;
            for b in 0..v.len() {
                let sign_bits = (b & term.sign_mask).count_ones();
                let amp = if sign_bits % 2 == 0 { c } else { -c };
                out[b ^ term.flip_mask] += amp * v[b];
            }
        }
    }

    /// `out = H v`.
    pub fn apply(&self, v: &[Complex64], out: &mut [Complex64]) {
        out.fill(Complex64::new(0.0, 0.0));
        self.apply_add(v, out);
    }

    /// Dense matrix form for oracle comparisons on small systems.
    pub fn to_dense(&self) -> Result<DMatrix<Complex64>> {
        if self.n > DENSE_GUARD {
            return Err(Error::TooLarge {
                what: "qubit count for dense matrix",
                size: self.n,
                max: DENSE_GUARD,
            });
        }
        let dim = self.dim();
        let mut m = DMatrix::zeros(dim, dim);
        for term in &self.terms {
            for b in 0..dim {
                let sign_bits = (b & term.sign_mask).count_ones();
                let amp = if sign_bits % 2 == 0 {
                    term.coeff
                } else {
                    -term.coeff
                };
                m[(b ^ term.flip_mask, b)] += amp;
            }
        }
        Ok(m)
    }
}

/// A flat parameter vector, indexed through the hypergraph's edge → slice
/// map.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct ParamVector {
    values: Vec<f64>,
}

impl ParamVector {
    pub fn new(values: Vec<f64>) -> Self {
        ParamVector { values }
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }
}

/// Which Hamiltonian family a model instance belongs to.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum FamilyKind {
    /// Nearest-neighbor Heisenberg couplings, one `J` per edge.
    Heisenberg,
    /// Power-law `Z Z` couplings driven by per-site parameters plus a
    /// uniform transverse field.
    Ising { alpha: f64, field: f64 },
}

/// A parameterized Hamiltonian family over a 1D chain.
#[derive(Debug, Clone)]
pub struct HamiltonianFamily {
    kind: FamilyKind,
    hypergraph: InteractionHypergraph,
}

impl HamiltonianFamily {
    /// Disordered Heisenberg chain: nearest-neighbor pair edges, one
    /// coupling each, drawn from `[0, 2]`. Periodic chains carry the cyclic
    /// shift as an automorphism generator.
    pub fn heisenberg(n: usize, boundary: Boundary) -> Result<Self> {
        if n < 2 {
            return Err(Error::invalid("Heisenberg chain needs at least 2 sites"));
        }
        let lattice = LatticeSpec::chain(n, boundary)?;
        let mut edges: Vec<Edge> = (0..n - 1)
            .map(|i| {
                Ok(Edge {
                    sites: SiteSet::pair(i, i + 1)?,
                    arity: 1,
                })
            })
            .collect::<Result<Vec<_>>>()?;
        let mut generators = Vec::new();
        if boundary == Boundary::Periodic {
            if n >= 3 {
                edges.push(Edge {
                    sites: SiteSet::pair(0, n - 1)?,
                    arity: 1,
                });
            }
            generators.push(crate::geometry::shift_perm(n, 1));
        }
        let hypergraph = InteractionHypergraph::new(lattice, edges, generators)?;
        Ok(HamiltonianFamily {
            kind: FamilyKind::Heisenberg,
            hypergraph,
        })
    }

    /// Long-range Ising chain with exponent `alpha` and the default
    /// transverse field `h = e`. Parameters are the per-site `J_i`
    /// (singleton edges); pair couplings `(1 + J_i J_j)/d^α` read off the
    /// two site parameters they touch.
    pub fn ising(n: usize, boundary: Boundary, alpha: f64) -> Result<Self> {
        Self::ising_with_field(n, boundary, alpha, TRANSVERSE_FIELD_DEFAULT)
    }

    /// Ising family with an explicit transverse field value.
    pub fn ising_with_field(n: usize, boundary: Boundary, alpha: f64, field: f64) -> Result<Self> {
        if n < 1 {
            return Err(Error::invalid("Ising chain needs at least 1 site"));
        }
        if !(alpha > 0.0) {
            return Err(Error::invalid("Ising exponent alpha must be positive"));
        }
        let lattice = LatticeSpec::chain(n, boundary)?;
        let edges: Vec<Edge> = (0..n)
            .map(|i| Edge {
                sites: SiteSet::singleton(i),
                arity: 1,
            })
            .collect();
        let mut generators = Vec::new();
        if boundary == Boundary::Periodic {
            generators.push(crate::geometry::shift_perm(n, 1));
        }
        let hypergraph = InteractionHypergraph::new(lattice, edges, generators)?;
        Ok(HamiltonianFamily {
            kind: FamilyKind::Ising { alpha, field },
            hypergraph,
        })
    }

    pub fn kind(&self) -> FamilyKind {
        self.kind
    }

    /// The same family (kind, couplings, boundary) on a chain of `n`
    /// sites — used by size sweeps.
    pub fn with_size(&self, n: usize) -> Result<Self> {
        let boundary = self.hypergraph.lattice().boundary();
        match self.kind {
            FamilyKind::Heisenberg => Self::heisenberg(n, boundary),
            FamilyKind::Ising { alpha, field } => Self::ising_with_field(n, boundary, alpha, field),
        }
    }

    pub fn hypergraph(&self) -> &InteractionHypergraph {
        &self.hypergraph
    }

    pub fn lattice(&self) -> &LatticeSpec {
        self.hypergraph.lattice()
    }

    pub fn n_sites(&self) -> usize {
        self.lattice().n_sites()
    }

    pub fn param_dim(&self) -> usize {
        self.hypergraph.param_dim()
    }

    /// Sampling domain of each parameter component.
    pub fn domain(&self) -> (f64, f64) {
        (0.0, 2.0)
    }

    /// Draws all parameters i.i.d. uniform over the domain, in parameter
    /// order. Deterministic given the seed.
    pub fn sample_params(&self, seed: u64) -> ParamVector {
        let mut rng = ChaCha12Rng::seed_from_u64(seed);
        let (lo, hi) = self.domain();
        let dist = Uniform::new_inclusive(lo, hi);
        let values = (0..self.param_dim()).map(|_| dist.sample(&mut rng)).collect();
        ParamVector::new(values)
    }

    fn check_params(&self, x: &ParamVector) -> Result<()> {
        if x.len() != self.param_dim() {
            return Err(Error::invalid(format!(
                "parameter vector has length {}, family needs {}",
                x.len(),
                self.param_dim()
            )));
        }
        if x.values().iter().any(|v| !v.is_finite()) {
            return Err(Error::invalid("parameter vector contains a non-finite value"));
        }
        Ok(())
    }

    /// The Hamiltonian's Pauli terms at parameters `x`, in a fixed order
    /// (couplings in edge/pair order, then field terms).
    pub fn terms(&self, x: &ParamVector) -> Result<Vec<PauliTerm>> {
        self.check_params(x)?;
        let n = self.n_sites();
        let mut terms = Vec::new();
        match self.kind {
            FamilyKind::Heisenberg => {
                for (e, edge) in self.hypergraph.edges().iter().enumerate() {
                    let j = x.values()[self.hypergraph.param_range(e).start];
                    let sites = edge.sites.clone();
                    for letter in [PauliLetter::X, PauliLetter::Y, PauliLetter::Z] {
                        terms.push(PauliTerm::new(sites.clone(), vec![letter, letter], j)?);
                    }
                }
            }
            FamilyKind::Ising { alpha, field } => {
                let lattice = self.lattice();
                for i in 0..n {
                    for j in i + 1..n {
                        let d = lattice.site_distance(i, j)? as f64;
                        let coeff = (1.0 + x.values()[i] * x.values()[j]) / d.powf(alpha);
                        terms.push(PauliTerm::new(
                            SiteSet::pair(i, j)?,
                            vec![PauliLetter::Z, PauliLetter::Z],
                            coeff,
                        )?);
                    }
                }
                for i in 0..n {
                    terms.push(PauliTerm::new(
                        SiteSet::singleton(i),
                        vec![PauliLetter::X],
                        field,
                    )?);
                }
            }
        }
        Ok(terms)
    }

    /// Materializes the Hamiltonian at `x` as a matrix-free Pauli operator.
    pub fn operator(&self, x: &ParamVector) -> Result<PauliOperator> {
        let n = self.n_sites();
        if n > OPERATOR_GUARD {
            return Err(Error::TooLarge {
                what: "qubit count for sparse operator",
                size: n,
                max: OPERATOR_GUARD,
            });
        }
        PauliOperator::new(n, &self.terms(x)?)
    }

    /// Keeps the components of edges inside the neighborhood and resets all
    /// others to the family's reference value 0.
    pub fn mask_params(&self, x: &ParamVector, nb: &Neighborhood) -> Result<ParamVector> {
        self.check_params(x)?;
        let mut values = vec![0.0; x.len()];
        for &e in &nb.members {
            if e >= self.hypergraph.edges().len() {
                return Err(Error::invalid(format!("neighborhood member {e} out of range")));
            }
            for k in self.hypergraph.param_range(e) {
                values[k] = x.values()[k];
            }
        }
        Ok(ParamVector::new(values))
    }

    /// Pullback of the parameters along a site permutation: the component
    /// at edge `J` of the result reads `x` at edge `perm(J)`. Conjugating
    /// the Hamiltonian by the inverse qubit permutation of `perm` realizes
    /// the same relabeling on operators.
    pub fn permute_params(&self, perm: &[usize], x: &ParamVector) -> Result<ParamVector> {
        self.check_params(x)?;
        let mut values = vec![0.0; x.len()];
        for e in 0..self.hypergraph.edges().len() {
            let image = self.hypergraph.image_edge(e, perm)?;
            let dst = self.hypergraph.param_range(e);
            let src = self.hypergraph.param_range(image);
            values[dst].copy_from_slice(&x.values()[src]);
        }
        Ok(ParamVector::new(values))
    }

    /// Scans all site pairs for the decay constant
    /// `g = max_{i<j} d(i,j)^α · Σ_{terms ∋ i,j} |coefficient| · ‖P‖`,
    /// using the family's exponent (Heisenberg couplings only act at
    /// distance 1, where the power is immaterial).
    pub fn check_decay(&self, x: &ParamVector) -> Result<DecayReport> {
        let n = self.n_sites();
        if n > DECAY_GUARD {
            return Err(Error::TooLarge {
                what: "qubit count for decay scan",
                size: n,
                max: DECAY_GUARD,
            });
        }
        self.check_params(x)?;
        let alpha = match self.kind {
            FamilyKind::Heisenberg => 1.0,
            FamilyKind::Ising { alpha, .. } => alpha,
        };
        let lattice = self.lattice();
        let mut best = 0.0f64;
        let mut worst_pair = (0, 0);
        for i in 0..n {
            for j in i + 1..n {
                let mut strength = 0.0;
                match self.kind {
                    FamilyKind::Heisenberg => {
                        if let Some(e) = self.hypergraph.edge_index(&SiteSet::pair(i, j)?) {
                            // Three Pauli strings of unit norm share the coupling.
                            strength =
                                3.0 * x.values()[self.hypergraph.param_range(e).start].abs();
                        }
                    }
                    FamilyKind::Ising { alpha, .. } => {
                        let d = lattice.site_distance(i, j)? as f64;
                        strength = (1.0 + x.values()[i] * x.values()[j]).abs() / d.powf(alpha);
                    }
                }
                if strength == 0.0 {
                    continue;
                }
                let d = lattice.site_distance(i, j)? as f64;
                let g = d.powf(alpha) * strength;
                if g > best {
                    best = g;
                    worst_pair = (i, j);
                }
            }
        }
        Ok(DecayReport {
            g: best,
            worst_pair,
        })
    }
}

/// Result of the interaction-decay scan.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct DecayReport {
    /// Supremum over site pairs of `d^α` times the summed term norms.
    pub g: f64,
    /// The pair attaining the supremum.
    pub worst_pair: (usize, usize),
}

/// Kinds of observables the toolkit measures and learns.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case", deny_unknown_fields)]
pub enum ObservableKind {
    /// `C_ij = (X_i X_j + Y_i Y_j + Z_i Z_j) / 3`.
    LocalCorrelation { i: usize, j: usize },
    /// Average of `C_{i,i+1}` over the chain's nearest-neighbor pairs.
    AvgCorrelation,
    /// Total energy divided by `n`; targets come from the eigensolver.
    EnergyOverN,
    /// Total energy divided by `√n`; targets come from the eigensolver.
    EnergyOverSqrtN,
}

/// One local summand of an observable: its support and the Pauli terms on
/// it. Energy observables keep the term list empty because their terms
/// depend on `x`; only the supports participate in the feature map.
#[derive(Debug, Clone, PartialEq)]
pub struct ObservableGroup {
    pub support: SiteSet,
    pub terms: Vec<PauliTerm>,
}

/// A weighted sum of local Pauli terms (or an energy density) with its
/// cached term-norm sum `r = Σ_I ‖O_I‖`.
#[derive(Debug, Clone, PartialEq)]
pub struct Observable {
    pub kind: ObservableKind,
    /// Identifier used in dataset rows, e.g. `"local-correlation(0,1)"`.
    pub label: String,
    pub groups: Vec<ObservableGroup>,
    /// Term-norm sum; for energy observables this is the supremum over the
    /// parameter domain (documented bound, not an eigenvalue).
    pub r: f64,
    /// `Some(scale)` when targets are `scale · E0` from the solver.
    pub energy_scale: Option<f64>,
}

impl Observable {
    /// Whether targets require the solver's energy rather than a Pauli
    /// expectation value.
    pub fn is_energy(&self) -> bool {
        self.energy_scale.is_some()
    }

    /// The supports of all groups, in feature order.
    pub fn supports(&self) -> Vec<SiteSet> {
        self.groups.iter().map(|g| g.support.clone()).collect()
    }
}

/// Exact operator norm of a sum of Pauli terms sharing a small support.
fn group_norm(terms: &[PauliTerm]) -> Result<f64> {
    let support = terms
        .first()
        .ok_or_else(|| Error::invalid("group norm of an empty term list"))?
        .support()
        .clone();
    if support.len() > NORM_SUPPORT_GUARD {
        return Err(Error::TooLarge {
            what: "support size for exact norm",
            size: support.len(),
            max: NORM_SUPPORT_GUARD,
        });
    }
    // Relabel the support onto qubits 0..k and diagonalize the dense matrix.
    let local: Vec<PauliTerm> = terms
        .iter()
        .map(|t| {
            if t.support() != &support {
                return Err(Error::invalid("group terms must share one support"));
            }
            PauliTerm::new(
                SiteSet::new((0..support.len()).collect())?,
                t.letters().to_vec(),
                t.coefficient(),
            )
        })
        .collect::<Result<Vec<_>>>()?;
    let op = PauliOperator::new(support.len(), &local)?;
    let dense = op.to_dense()?;
    let eig = dense.symmetric_eigen();
    Ok(eig.eigenvalues.iter().fold(0.0f64, |m, &v| m.max(v.abs())))
}

fn correlation_terms(i: usize, j: usize, coefficient: f64) -> Result<Vec<PauliTerm>> {
    let sites = SiteSet::pair(i, j)?;
    [PauliLetter::X, PauliLetter::Y, PauliLetter::Z]
        .into_iter()
        .map(|l| PauliTerm::new(sites.clone(), vec![l, l], coefficient))
        .collect()
}

fn nn_pairs(lattice: &LatticeSpec) -> Result<Vec<SiteSet>> {
    let n = lattice.n_sites();
    let mut pairs: Vec<SiteSet> = (0..n - 1).map(|i| SiteSet::pair(i, i + 1)).collect::<Result<_>>()?;
    if lattice.boundary() == Boundary::Periodic && n >= 3 {
        pairs.push(SiteSet::pair(0, n - 1)?);
    }
    Ok(pairs)
}

/// Builds one of the standard observables for a family.
pub fn build_observable(kind: ObservableKind, family: &HamiltonianFamily) -> Result<Observable> {
    let n = family.n_sites();
    let lattice = family.lattice();
    match kind {
        ObservableKind::LocalCorrelation { i, j } => {
            if i == j || i >= n || j >= n {
                return Err(Error::invalid(format!(
                    "correlation sites ({i},{j}) invalid for n={n}"
                )));
            }
            let terms = correlation_terms(i, j, 1.0 / 3.0)?;
            let r = group_norm(&terms)?;
            Ok(Observable {
                kind,
                label: format!("local-correlation({},{})", i.min(j), i.max(j)),
                groups: vec![ObservableGroup {
                    support: SiteSet::pair(i, j)?,
                    terms,
                }],
                r,
                energy_scale: None,
            })
        }
        ObservableKind::AvgCorrelation => {
            let pairs = nn_pairs(lattice)?;
            if pairs.is_empty() {
                return Err(Error::invalid("average correlation needs at least one pair"));
            }
            let weight = 1.0 / pairs.len() as f64;
            let mut groups = Vec::new();
            let mut r = 0.0;
            for pair in pairs {
                let sites = pair.sites();
                let terms = correlation_terms(sites[0], sites[1], weight / 3.0)?;
                r += group_norm(&terms)?;
                groups.push(ObservableGroup {
                    support: pair,
                    terms,
                });
            }
            Ok(Observable {
                kind,
                label: "avg-correlation".to_string(),
                groups,
                r,
                energy_scale: None,
            })
        }
        ObservableKind::EnergyOverN | ObservableKind::EnergyOverSqrtN => {
            let scale = match kind {
                ObservableKind::EnergyOverN => 1.0 / n as f64,
                _ => 1.0 / (n as f64).sqrt(),
            };
            let label = match kind {
                ObservableKind::EnergyOverN => "energy-over-n".to_string(),
                _ => "energy-over-sqrt-n".to_string(),
            };
            let (groups, r_unscaled) = match family.kind() {
                FamilyKind::Heisenberg => {
                    let supports: Vec<SiteSet> = family
                        .hypergraph()
                        .edges()
                        .iter()
                        .map(|e| e.sites.clone())
                        .collect();
                    // Each edge carries J (XX + YY + ZZ) with ‖·‖ = 3|J| ≤ 6.
                    let r = 6.0 * supports.len() as f64;
                    (
                        supports
                            .into_iter()
                            .map(|support| ObservableGroup {
                                support,
                                terms: Vec::new(),
                            })
                            .collect::<Vec<_>>(),
                        r,
                    )
                }
                FamilyKind::Ising { alpha, field } => {
                    let mut groups = Vec::new();
                    let mut r = 0.0;
                    // Field terms first (1-body supports), then pair couplings.
                    for i in 0..n {
                        groups.push(ObservableGroup {
                            support: SiteSet::singleton(i),
                            terms: Vec::new(),
                        });
                        r += field.abs();
                    }
                    for i in 0..n {
                        for j in i + 1..n {
                            groups.push(ObservableGroup {
                                support: SiteSet::pair(i, j)?,
                                terms: Vec::new(),
                            });
                            let d = lattice.site_distance(i, j)? as f64;
                            // sup over J_i, J_j ∈ [0,2] of |1 + J_i J_j| = 5.
                            r += 5.0 / d.powf(alpha);
                        }
                    }
                    (groups, r)
                }
            };
            Ok(Observable {
                kind,
                label,
                groups,
                r: scale * r_unscaled,
                energy_scale: Some(scale),
            })
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;
    use nalgebra::DMatrix;

    fn c64(re: f64, im: f64) -> Complex64 {
        Complex64::new(re, im)
    }

    fn sorted_eigenvalues(m: &DMatrix<Complex64>) -> Vec<f64> {
        let mut ev: Vec<f64> = m.clone().symmetric_eigen().eigenvalues.iter().copied().collect();
        ev.sort_by(|a, b| a.partial_cmp(b).unwrap());
        ev
    }

    #[test]
    fn heisenberg_n2_dense_matches_hand_matrix() {
        let fam = HamiltonianFamily::heisenberg(2, Boundary::Open).unwrap();
        let x = ParamVector::new(vec![1.0]);
        let dense = fam.operator(&x).unwrap().to_dense().unwrap();
        // Basis order |00⟩,|10⟩,|01⟩,|11⟩ with site i on bit i:
        // XX + YY + ZZ has the singlet/triplet block structure below.
        let expect = DMatrix::from_row_slice(
            4,
            4,
            &[
                c64(1.0, 0.0), c64(0.0, 0.0), c64(0.0, 0.0), c64(0.0, 0.0),
                c64(0.0, 0.0), c64(-1.0, 0.0), c64(2.0, 0.0), c64(0.0, 0.0),
                c64(0.0, 0.0), c64(2.0, 0.0), c64(-1.0, 0.0), c64(0.0, 0.0),
                c64(0.0, 0.0), c64(0.0, 0.0), c64(0.0, 0.0), c64(1.0, 0.0),
            ],
        );
        assert_eq!(dense, expect);
    }

    #[test]
    fn heisenberg_n2_spectrum() {
        let fam = HamiltonianFamily::heisenberg(2, Boundary::Open).unwrap();
        let dense = fam
            .operator(&ParamVector::new(vec![1.0]))
            .unwrap()
            .to_dense()
            .unwrap();
        let ev = sorted_eigenvalues(&dense);
        let expect = [-3.0, 1.0, 1.0, 1.0];
        for (got, want) in ev.iter().zip(expect) {
            assert_abs_diff_eq!(got, &want, epsilon = 1e-12);
        }
    }

    #[test]
    fn ising_n1_is_pure_field() {
        let fam = HamiltonianFamily::ising(1, Boundary::Open, 3.0).unwrap();
        let dense = fam
            .operator(&ParamVector::new(vec![0.7]))
            .unwrap()
            .to_dense()
            .unwrap();
        let ev = sorted_eigenvalues(&dense);
        let e = TRANSVERSE_FIELD_DEFAULT;
        assert_abs_diff_eq!(ev[0], -e, epsilon = 1e-14);
        assert_abs_diff_eq!(ev[1], e, epsilon = 1e-14);
    }

    #[test]
    fn ising_n2_alpha3_spectrum_analytic() {
        // H = 2 Z⊗Z + e (X⊗I + I⊗X) at J_0 = J_1 = 1, d = 1.
        // Spectrum: ±2√(1+e²) and ±2.
        let fam = HamiltonianFamily::ising(2, Boundary::Open, 3.0).unwrap();
        let dense = fam
            .operator(&ParamVector::new(vec![1.0, 1.0]))
            .unwrap()
            .to_dense()
            .unwrap();
        let ev = sorted_eigenvalues(&dense);
        let e = TRANSVERSE_FIELD_DEFAULT;
        let big = 2.0 * (1.0 + e * e).sqrt();
        let expect = [-big, -2.0, 2.0, big];
        for (got, want) in ev.iter().zip(expect) {
            assert_abs_diff_eq!(got, &want, epsilon = 1e-12);
        }
    }

    #[test]
    fn heisenberg_param_count_and_domain() {
        let fam = HamiltonianFamily::heisenberg(8, Boundary::Open).unwrap();
        assert_eq!(fam.param_dim(), 7);
        let x = fam.sample_params(11);
        assert_eq!(x.len(), 7);
        assert!(x.values().iter().all(|&v| (0.0..=2.0).contains(&v)));
    }

    #[test]
    fn sampling_is_deterministic() {
        let fam = HamiltonianFamily::ising(6, Boundary::Open, 3.0).unwrap();
        assert_eq!(fam.sample_params(5), fam.sample_params(5));
        assert_ne!(fam.sample_params(5), fam.sample_params(6));
    }

    #[test]
    fn uniform_mean_oracle() {
        let fam = HamiltonianFamily::heisenberg(2, Boundary::Open).unwrap();
        let draws = 100_000;
        let mean: f64 = (0..draws)
            .map(|s| fam.sample_params(s).values()[0])
            .sum::<f64>()
            / draws as f64;
        assert!((mean - 1.0).abs() < 0.01, "mean {mean} departs from 1.0");
    }

    #[test]
    fn mask_keeps_neighborhood_components_only() {
        let fam = HamiltonianFamily::heisenberg(8, Boundary::Open).unwrap();
        let x = ParamVector::new((0..7).map(|i| i as f64 + 1.0).collect());
        let nb = fam
            .hypergraph()
            .neighborhood(&SiteSet::pair(0, 1).unwrap(), 2)
            .unwrap();
        let masked = fam.mask_params(&x, &nb).unwrap();
        assert_eq!(masked.values()[..4], x.values()[..4]);
        assert_eq!(&masked.values()[4..], &[0.0, 0.0, 0.0]);
    }

    #[test]
    fn mask_extremes() {
        let fam = HamiltonianFamily::heisenberg(6, Boundary::Open).unwrap();
        let x = fam.sample_params(3);
        let all = fam.hypergraph().neighborhood(&SiteSet::singleton(0), 100).unwrap();
        assert_eq!(fam.mask_params(&x, &all).unwrap(), x);
        let none = fam.hypergraph().neighborhood(&SiteSet::singleton(0), 0).unwrap();
        let masked = fam.mask_params(&x, &none).unwrap();
        assert!(masked.values().iter().all(|&v| v == 0.0));
    }

    #[test]
    fn permute_params_is_pullback() {
        let fam = HamiltonianFamily::heisenberg(4, Boundary::Periodic).unwrap();
        // Edges in order: {0,1},{1,2},{2,3},{0,3}; shift by 1 maps
        // {0,1}→{1,2}, {1,2}→{2,3}, {2,3}→{0,3}, {0,3}→{0,1}.
        let x = ParamVector::new(vec![10.0, 20.0, 30.0, 40.0]);
        let shift = crate::geometry::shift_perm(4, 1);
        let y = fam.permute_params(&shift, &x).unwrap();
        assert_eq!(y.values(), &[20.0, 30.0, 40.0, 10.0]);
        // Pullback by the inverse permutation undoes it.
        let back = fam
            .permute_params(&crate::geometry::invert_perm(&shift), &y)
            .unwrap();
        assert_eq!(back, x);
    }

    /// Dense permutation matrix of the qubit relabeling `s → perm[s]`.
    fn permutation_matrix(perm: &[usize]) -> DMatrix<Complex64> {
        let n = perm.len();
        let dim = 1usize << n;
        let mut m = DMatrix::zeros(dim, dim);
        for b in 0..dim {
            let mut target = 0usize;
            for s in 0..n {
                if b & (1 << s) != 0 {
                    target |= 1 << perm[s];
                }
            }
            m[(target, b)] = Complex64::new(1.0, 0.0);
        }
        m
    }

    #[test]
    fn conjugation_matches_parameter_pullback() {
        let fam = HamiltonianFamily::heisenberg(4, Boundary::Periodic).unwrap();
        let x = ParamVector::new(vec![0.3, 1.7, 0.9, 1.1]);
        let shift = crate::geometry::shift_perm(4, 1);
        let h = fam.operator(&x).unwrap().to_dense().unwrap();
        let p = permutation_matrix(&shift);
        let conj = &p * &h * p.adjoint();
        // ĝ H(x) ĝ† relabels supports forward, which equals the Hamiltonian
        // at the pullback of x along the inverse shift.
        let y = fam
            .permute_params(&crate::geometry::invert_perm(&shift), &x)
            .unwrap();
        let h_perm = fam.operator(&y).unwrap().to_dense().unwrap();
        let diff = (&conj - &h_perm).map(|c| c.norm()).max();
        assert!(diff <= 1e-14, "covariance residual {diff}");
    }

    #[test]
    fn ising_without_field_is_diagonal() {
        let fam = HamiltonianFamily::ising_with_field(3, Boundary::Open, 2.0, 0.0).unwrap();
        let dense = fam
            .operator(&ParamVector::new(vec![1.0, 0.5, 2.0]))
            .unwrap()
            .to_dense()
            .unwrap();
        for r in 0..8 {
            for c in 0..8 {
                if r != c {
                    assert_eq!(dense[(r, c)], Complex64::new(0.0, 0.0));
                }
            }
        }
    }

    #[test]
    fn operators_are_hermitian() {
        for (fam, seed) in [
            (HamiltonianFamily::heisenberg(5, Boundary::Periodic).unwrap(), 1u64),
            (HamiltonianFamily::ising(5, Boundary::Open, 3.0).unwrap(), 2u64),
        ] {
            let x = fam.sample_params(seed);
            let dense = fam.operator(&x).unwrap().to_dense().unwrap();
            let diff = (&dense - dense.adjoint()).map(|c| c.norm()).max();
            assert!(diff <= 1e-15, "hermiticity residual {diff}");
        }
    }

    #[test]
    fn operator_guard_rejects_large_chains() {
        let fam = HamiltonianFamily::heisenberg(21, Boundary::Open).unwrap();
        let x = fam.sample_params(0);
        assert!(matches!(fam.operator(&x), Err(Error::TooLarge { .. })));
    }

    #[test]
    fn correlation_observable_norm_and_spectrum() {
        let fam = HamiltonianFamily::heisenberg(4, Boundary::Open).unwrap();
        let obs = build_observable(ObservableKind::LocalCorrelation { i: 0, j: 1 }, &fam).unwrap();
        assert_abs_diff_eq!(obs.r, 1.0, epsilon = 1e-12);
        assert_eq!(obs.label, "local-correlation(0,1)");
        // C eigenvalues are {1/3, 1/3, 1/3, −1}.
        let op = PauliOperator::new(2, &obs.groups[0].terms).unwrap();
        let ev = sorted_eigenvalues(&op.to_dense().unwrap());
        assert_abs_diff_eq!(ev[0], -1.0, epsilon = 1e-12);
        for v in &ev[1..] {
            assert_abs_diff_eq!(v, &(1.0 / 3.0), epsilon = 1e-12);
        }
    }

    #[test]
    fn avg_correlation_structure() {
        let fam = HamiltonianFamily::heisenberg(5, Boundary::Open).unwrap();
        let obs = build_observable(ObservableKind::AvgCorrelation, &fam).unwrap();
        assert_eq!(obs.groups.len(), 4);
        for group in &obs.groups {
            assert_eq!(group.terms.len(), 3);
            for t in &group.terms {
                assert_abs_diff_eq!(t.coefficient(), 1.0 / 12.0, epsilon = 1e-15);
            }
        }
        assert_abs_diff_eq!(obs.r, 1.0, epsilon = 1e-12);
    }

    #[test]
    fn energy_observable_scale_and_supports() {
        let fam = HamiltonianFamily::heisenberg(4, Boundary::Open).unwrap();
        let obs = build_observable(ObservableKind::EnergyOverSqrtN, &fam).unwrap();
        assert_eq!(obs.energy_scale, Some(0.5));
        assert_eq!(obs.groups.len(), 3);
        assert!(obs.is_energy());
        let ising = HamiltonianFamily::ising(4, Boundary::Open, 3.0).unwrap();
        let obs = build_observable(ObservableKind::EnergyOverN, &ising).unwrap();
        // 4 field singletons + 6 pairs.
        assert_eq!(obs.groups.len(), 10);
        assert_eq!(obs.groups[0].support, SiteSet::singleton(0));
    }

    #[test]
    fn decay_constant_frozen_values() {
        let fam = HamiltonianFamily::ising(8, Boundary::Open, 3.0).unwrap();
        let zeros = ParamVector::new(vec![0.0; 8]);
        assert_abs_diff_eq!(fam.check_decay(&zeros).unwrap().g, 1.0, epsilon = 1e-12);
        let twos = ParamVector::new(vec![2.0; 8]);
        assert_abs_diff_eq!(fam.check_decay(&twos).unwrap().g, 5.0, epsilon = 1e-12);
        for seed in 0..5 {
            let g = fam.check_decay(&fam.sample_params(seed)).unwrap().g;
            assert!((1.0..=5.0).contains(&g), "g = {g} outside [1,5]");
        }
    }

    #[test]
    fn pauli_parse_and_label_round_trip() {
        let t = PauliTerm::parse("X0Z2").unwrap();
        assert_eq!(t.label(), "X0Z2");
        assert_eq!(t.support().sites(), &[0, 2]);
        assert_eq!(t.letters(), &[PauliLetter::X, PauliLetter::Z]);
        let t = PauliTerm::parse("z5 y13").unwrap();
        assert_eq!(t.label(), "Z5Y13");
        assert!(PauliTerm::parse("Q1").is_err());
        assert!(PauliTerm::parse("X").is_err());
        assert!(PauliTerm::parse("X1X1").is_err());
    }

    #[test]
    fn group_norm_scales_with_coefficients() {
        let term = PauliTerm::new(
            SiteSet::pair(0, 1).unwrap(),
            vec![PauliLetter::Z, PauliLetter::Z],
            2.0,
        )
        .unwrap();
        assert_abs_diff_eq!(group_norm(&[term]).unwrap(), 2.0, epsilon = 1e-12);
    }

    #[test]
    fn pauli_y_phase_convention() {
        // Y |0⟩ = i |1⟩ and Y |1⟩ = −i |0⟩.
        let term = PauliTerm::new(SiteSet::singleton(0), vec![PauliLetter::Y], 1.0).unwrap();
        let op = PauliOperator::new(1, &[term]).unwrap();
        let mut out = vec![Complex64::new(0.0, 0.0); 2];
        op.apply(&[Complex64::new(1.0, 0.0), Complex64::new(0.0, 0.0)], &mut out);
        assert_eq!(out, vec![Complex64::new(0.0, 0.0), Complex64::new(0.0, 1.0)]);
    }
}
