//! Feature maps turning coupling vectors into regression inputs.
//!
//! Both maps share the same locality structure: for an observable term
//! supported on a site set `I`, only the couplings inside the
//! δ-neighborhood of `I` enter the features (the window `Z_I(x)`). Two
//! encodings of the window are provided:
//!
//! * **Discretization** — each window component is rescaled onto `[-1, 1]`
//!   and snapped to a uniform grid `{0, ±δ₂, ±2δ₂, …, ±1}`; the block is
//!   the one-hot indicator of the grid cell containing the whole window.
//!   This is the map used by the counting arguments: its block length is
//!   `(2/δ₂ + 1)^l` for a window of `l` components, so the grid is kept
//!   implicit and only the active cell index is ever computed.
//! * **Randomized Fourier features** — the window is paired with `R`
//!   frozen Gaussian frequency rows `ω_k`, producing the `2R` entries
//!   `[cos(γ/√l · ω_k·Z), sin(γ/√l · ω_k·Z)]`. Frequencies are derived
//!   deterministically from the spec seed and shared either across all
//!   supports of the same arity (default) or across each automorphism
//!   orbit.
//!
//! Full feature vectors concatenate per-support blocks in term order
//! (plain mode) or pool them: in equivariant mode the blocks of an
//! automorphism orbit are computed with shared frequencies on the
//! transported windows `Z_{gI}(x) = Z_I(g·x)` and summed, yielding one
//! block per orbit. Pooling is exactly invariant when the group acts
//! freely on the supports (every translation orbit of contiguous sets);
//! a support stabilized by a non-identity automorphism (an antipodal
//! pair on an even ring) would break exact invariance because one coset
//! representative per member is used.

use std::collections::HashMap;

use nalgebra::DMatrix;
use rand::SeedableRng;
use rand_chacha::ChaCha12Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::{automorphism_orbits, SiteSet};
use crate::hamiltonian::{HamiltonianFamily, Observable, ParamVector};
use crate::util::{derive_seed, tag};

/// Hard cap on the total feature-vector length; discretized blocks grow
/// exponentially in the window size, so assembly fails loudly instead of
/// exhausting memory.
pub const FEATURE_LEN_GUARD: usize = 1 << 24;

/// Relative slack when checking that a coupling lies inside the family
/// domain before snapping it to the grid.
const DOMAIN_SLACK: f64 = 1e-9;

/// One-hot grid encoding of a coupling window.
///
/// `delta` is the neighborhood radius, `1/inv_delta2` the grid spacing on
/// the rescaled axis `[-1, 1]`, and `c_prime` the gradient constant used
/// when the spacing is derived from a target accuracy.
#[derive(Clone, Debug, PartialEq)]
pub struct DiscretizationSpec {
    delta: usize,
    inv_delta2: usize,
    c_prime: f64,
}

impl DiscretizationSpec {
    /// Spec with an explicit mesh: grid spacing `δ₂ = 1/inv_delta2`.
    pub fn new(delta: usize, inv_delta2: usize, c_prime: f64) -> Result<Self> {
        if inv_delta2 == 0 {
            return Err(Error::invalid("grid spacing needs inv_delta2 ≥ 1"));
        }
        if !(c_prime > 0.0) || !c_prime.is_finite() {
            return Err(Error::invalid(format!(
                "gradient constant must be positive and finite, got {c_prime}"
            )));
        }
        Ok(Self {
            delta,
            inv_delta2,
            c_prime,
        })
    }

    /// Mesh from a target accuracy: `δ₂ = 1/⌈√(C'·s)/ε⌉` where `s` is the
    /// window edge count. Empty windows fall back to the coarsest mesh.
    pub fn from_epsilon(delta: usize, c_prime: f64, window_size: usize, eps: f64) -> Result<Self> {
        if !(eps > 0.0) || !eps.is_finite() {
            return Err(Error::invalid(format!(
                "target accuracy must be positive and finite, got {eps}"
            )));
        }
        if !(c_prime > 0.0) || !c_prime.is_finite() {
            return Err(Error::invalid(format!(
                "gradient constant must be positive and finite, got {c_prime}"
            )));
        }
        let raw = ((c_prime * window_size as f64).sqrt() / eps).ceil();
        if !raw.is_finite() || raw > usize::MAX as f64 {
            return Err(Error::invalid(format!(
                "grid resolution overflows: √(C'·{window_size})/ε = {raw}"
            )));
        }
        Self::new(delta, (raw as usize).max(1), c_prime)
    }

    pub fn delta(&self) -> usize {
        self.delta
    }

    /// Grid spacing `δ₂ ∈ (0, 1]` as a float (stored exactly as `1/q`).
    pub fn delta2(&self) -> f64 {
        1.0 / self.inv_delta2 as f64
    }

    pub fn inv_delta2(&self) -> usize {
        self.inv_delta2
    }

    pub fn c_prime(&self) -> f64 {
        self.c_prime
    }

    /// Number of grid points per axis, `2/δ₂ + 1`.
    pub fn points_per_axis(&self) -> usize {
        2 * self.inv_delta2 + 1
    }

    /// Length of the one-hot block for a window of `l` components,
    /// `(2/δ₂ + 1)^l`, guarded against overflow.
    pub fn block_len(&self, l: usize) -> Result<usize> {
        let p = self.points_per_axis();
        let mut len = 1usize;
        for _ in 0..l {
            len = len.checked_mul(p).ok_or(Error::TooLarge {
                what: "discretized feature block",
                size: usize::MAX,
                max: FEATURE_LEN_GUARD,
            })?;
            if len > FEATURE_LEN_GUARD {
                return Err(Error::TooLarge {
                    what: "discretized feature block",
                    size: len,
                    max: FEATURE_LEN_GUARD,
                });
            }
        }
        Ok(len)
    }
}

/// How randomized-Fourier frequency matrices are shared across supports.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Default)]
pub enum OmegaSharing {
    /// One matrix per (support arity, window length) — the default.
    #[default]
    PerArity,
    /// One matrix per (automorphism orbit, window length).
    PerOrbit,
}

/// Identifies which frozen frequency matrix a block uses.
#[derive(Clone, Debug, PartialEq, Eq)]
pub enum OmegaClass {
    Arity(usize),
    Orbit(SiteSet),
}

/// Randomized Fourier feature map: `R` frequencies per block, bandwidth
/// `γ`, window radius `delta`, all frequencies derived from `seed`.
#[derive(Clone, Debug, PartialEq)]
pub struct RffSpec {
    delta: usize,
    r: usize,
    gamma: f64,
    seed: u64,
    sharing: OmegaSharing,
}

impl RffSpec {
    pub fn new(delta: usize, r: usize, gamma: f64, seed: u64) -> Result<Self> {
        if r == 0 {
            return Err(Error::invalid("need at least one frequency per block"));
        }
        if !(gamma > 0.0) || !gamma.is_finite() {
            return Err(Error::invalid(format!(
                "bandwidth must be positive and finite, got {gamma}"
            )));
        }
        Ok(Self {
            delta,
            r,
            gamma,
            seed,
            sharing: OmegaSharing::default(),
        })
    }

    pub fn with_sharing(mut self, sharing: OmegaSharing) -> Self {
        self.sharing = sharing;
        self
    }

    pub fn delta(&self) -> usize {
        self.delta
    }

    pub fn r(&self) -> usize {
        self.r
    }

    pub fn gamma(&self) -> f64 {
        self.gamma
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    pub fn sharing(&self) -> OmegaSharing {
        self.sharing
    }

    /// The frozen `R × l` standard-normal frequency matrix for a sharing
    /// class. Pure in `(seed, class, l)`: every call regenerates the same
    /// entries, so matrices never need to be stored.
    pub fn omega(&self, class: &OmegaClass, l: usize) -> DMatrix<f64> {
        let mut s = derive_seed(self.seed, tag::RFF_FREQ);
        match class {
            OmegaClass::Arity(g) => {
                s = derive_seed(s, 0xA717);
                s = derive_seed(s, *g as u64);
            }
            OmegaClass::Orbit(rep) => {
                s = derive_seed(s, 0x0B17);
                for &site in rep.sites() {
                    s = derive_seed(s, site as u64 + 1);
                }
            }
        }
        s = derive_seed(s, l as u64);
        let mut rng = ChaCha12Rng::seed_from_u64(s);
        let entries: Vec<f64> = (0..self.r * l)
            .map(|_| StandardNormal.sample(&mut rng))
            .collect();
        // Row-major fill: frequency k occupies row k.
        DMatrix::from_row_slice(self.r, l, &entries)
    }
}

/// A feature map: either the one-hot grid encoding or randomized Fourier
/// features.
#[derive(Clone, Debug, PartialEq)]
pub enum FeatureMap {
    Discretized(DiscretizationSpec),
    Rff(RffSpec),
}

impl FeatureMap {
    pub fn delta(&self) -> usize {
        match self {
            FeatureMap::Discretized(s) => s.delta,
            FeatureMap::Rff(s) => s.delta,
        }
    }

    /// Interchange form `{kind, delta, R?, gamma?, delta2?, seed}`.
    ///
    /// The gradient constant of a discretized spec is not part of the
    /// schema (it only matters when deriving the mesh from a target
    /// accuracy), so it reloads as 1.
    pub fn to_json(&self) -> serde_json::Value {
        let json = match self {
            FeatureMap::Discretized(s) => FeatureMapJson {
                kind: "discretized".to_string(),
                delta: s.delta,
                r: None,
                gamma: None,
                delta2: Some(s.delta2()),
                seed: 0,
            },
            FeatureMap::Rff(s) => FeatureMapJson {
                kind: "rff".to_string(),
                delta: s.delta,
                r: Some(s.r),
                gamma: Some(s.gamma),
                delta2: None,
                seed: s.seed,
            },
        };
        serde_json::to_value(json).expect("feature-map schema serializes")
    }

    /// Parses the interchange form, rejecting unknown fields, mixed-kind
    /// fields, and grid spacings that are not unit fractions.
    pub fn from_json(value: &serde_json::Value) -> Result<Self> {
        let json: FeatureMapJson = serde_json::from_value(value.clone())?;
        match json.kind.as_str() {
            "discretized" => {
                if json.r.is_some() || json.gamma.is_some() {
                    return Err(Error::invalid(
                        "discretized feature map takes no R or gamma".to_string(),
                    ));
                }
                let delta2 = json.delta2.ok_or_else(|| {
                    Error::invalid("discretized feature map needs delta2".to_string())
                })?;
                if !(delta2 > 0.0 && delta2 <= 1.0) {
                    return Err(Error::invalid(format!(
                        "delta2 must lie in (0, 1], got {delta2}"
                    )));
                }
                let inv = (1.0 / delta2).round();
                if ((1.0 / delta2) - inv).abs() > 1e-9 * inv {
                    return Err(Error::invalid(format!(
                        "delta2 must be a unit fraction 1/q, got {delta2}"
                    )));
                }
                Ok(FeatureMap::Discretized(DiscretizationSpec::new(
                    json.delta, inv as usize, 1.0,
                )?))
            }
            "rff" => {
                if json.delta2.is_some() {
                    return Err(Error::invalid(
                        "rff feature map takes no delta2".to_string(),
                    ));
                }
                let r = json
                    .r
                    .ok_or_else(|| Error::invalid("rff feature map needs R".to_string()))?;
                let gamma = json
                    .gamma
                    .ok_or_else(|| Error::invalid("rff feature map needs gamma".to_string()))?;
                Ok(FeatureMap::Rff(RffSpec::new(json.delta, r, gamma, json.seed)?))
            }
            other => Err(Error::invalid(format!("unknown feature-map kind {other:?}"))),
        }
    }
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct FeatureMapJson {
    kind: String,
    delta: usize,
    #[serde(rename = "R", default, skip_serializing_if = "Option::is_none")]
    r: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    gamma: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    delta2: Option<f64>,
    seed: u64,
}

/// How per-support blocks are assembled into the full feature vector.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum FeatureMode {
    /// Concatenate per-support blocks in term order.
    Plain,
    /// Sum the blocks of each automorphism orbit into a single block.
    Equivariant,
}

/// One named block inside a flat feature vector.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct FeatureBlock {
    /// Observable-term support (plain mode) or orbit representative
    /// (equivariant mode).
    pub key: SiteSet,
    pub offset: usize,
    pub length: usize,
}

/// Flat feature vector with its block layout.
#[derive(Clone, Debug, PartialEq)]
pub struct FeatureVector {
    values: Vec<f64>,
    blocks: Vec<FeatureBlock>,
}

impl FeatureVector {
    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn into_values(self) -> Vec<f64> {
        self.values
    }

    pub fn blocks(&self) -> &[FeatureBlock] {
        &self.blocks
    }

    /// The first block keyed by `key`, as a slice.
    pub fn block_slice(&self, key: &SiteSet) -> Option<&[f64]> {
        self.blocks
            .iter()
            .find(|b| &b.key == key)
            .map(|b| &self.values[b.offset..b.offset + b.length])
    }
}

/// The coupling window `Z_I(x)`: all parameters on edges within distance
/// `delta` of `center` (and diameter at most `delta`), in canonical order
/// — edges sorted by their site sets (minimum site, then lexicographic),
/// each contributing its parameters in declaration order.
pub fn extract_z(
    family: &HamiltonianFamily,
    x: &ParamVector,
    center: &SiteSet,
    delta: usize,
) -> Result<Vec<f64>> {
    if x.len() != family.param_dim() {
        return Err(Error::invalid(format!(
            "parameter vector has length {}, family needs {}",
            x.len(),
            family.param_dim()
        )));
    }
    let mut z = Vec::new();
    for e in window_edges(family, center, delta)? {
        for k in family.hypergraph().param_range(e) {
            z.push(x.values()[k]);
        }
    }
    Ok(z)
}

/// Member edges of the δ-neighborhood in canonical order.
fn window_edges(family: &HamiltonianFamily, center: &SiteSet, delta: usize) -> Result<Vec<usize>> {
    let hg = family.hypergraph();
    let mut members = hg.neighborhood(center, delta)?.members;
    members.sort_by(|&a, &b| hg.edge(a).sites.cmp(&hg.edge(b).sites));
    Ok(members)
}

/// Rescales a coupling from the family domain onto `[-1, 1]`.
fn to_unit_interval(family: &HamiltonianFamily, v: f64) -> Result<f64> {
    let (lo, hi) = family.domain();
    let u = (2.0 * v - lo - hi) / (hi - lo);
    if !u.is_finite() || u.abs() > 1.0 + DOMAIN_SLACK {
        return Err(Error::invalid(format!(
            "coupling {v} lies outside the family domain [{lo}, {hi}]"
        )));
    }
    Ok(u.clamp(-1.0, 1.0))
}

/// Index of the grid cell containing `u` on one axis of the mesh
/// `{0, ±1/q, …, ±1}` (cells `0..=2q`, cell `c` centered at `(c-q)/q`).
/// Cells are half-open with the upper boundary included, so a value
/// exactly halfway between two grid points snaps to the smaller one.
fn axis_cell(u: f64, q: usize) -> usize {
    let t = u * q as f64;
    let c = (t - 0.5).ceil() as i64 + q as i64;
    c.clamp(0, 2 * q as i64) as usize
}

/// One-hot block for the window of `center`: cell index is built with the
/// first window component least significant.
fn discretized_block(
    family: &HamiltonianFamily,
    x: &ParamVector,
    center: &SiteSet,
    spec: &DiscretizationSpec,
) -> Result<Vec<f64>> {
    let z = extract_z(family, x, center, spec.delta)?;
    let len = spec.block_len(z.len())?;
    let p = spec.points_per_axis();
    let q = spec.inv_delta2;
    let mut index = 0usize;
    let mut stride = 1usize;
    for &v in &z {
        let u = to_unit_interval(family, v)?;
        index += axis_cell(u, q) * stride;
        stride *= p;
    }
    let mut block = vec![0.0; len];
    block[index] = 1.0;
    Ok(block)
}

/// Randomized Fourier features of a window: `2R` entries, the pair
/// `[cos(γ/√l · ω_k·Z), sin(γ/√l · ω_k·Z)]` for each frequency row `k`.
pub fn rff_features(z: &[f64], omega: &DMatrix<f64>, gamma: f64) -> Result<Vec<f64>> {
    if omega.ncols() != z.len() {
        return Err(Error::invalid(format!(
            "window has {} components but the frequency matrix expects {}",
            z.len(),
            omega.ncols()
        )));
    }
    let scale = if z.is_empty() {
        0.0
    } else {
        gamma / (z.len() as f64).sqrt()
    };
    let mut out = Vec::with_capacity(2 * omega.nrows());
    for k in 0..omega.nrows() {
        let dot: f64 = (0..z.len()).map(|j| omega[(k, j)] * z[j]).sum();
        let phase = scale * dot;
        out.push(phase.cos());
        out.push(phase.sin());
    }
    Ok(out)
}

/// The sharing class of a support under a spec's sharing rule.
fn omega_class(
    spec: &RffSpec,
    support: &SiteSet,
    orbit_rep: Option<&HashMap<SiteSet, SiteSet>>,
) -> Result<OmegaClass> {
    match spec.sharing {
        OmegaSharing::PerArity => Ok(OmegaClass::Arity(support.len())),
        OmegaSharing::PerOrbit => {
            let reps = orbit_rep.ok_or_else(|| {
                Error::invalid("per-orbit sharing needs an orbit assignment".to_string())
            })?;
            let rep = reps.get(support).ok_or_else(|| {
                Error::invalid(format!("support {support:?} missing from orbit assignment"))
            })?;
            Ok(OmegaClass::Orbit(rep.clone()))
        }
    }
}

/// RFF block of a single support at `x` in plain (unpooled) form.
fn rff_block(
    family: &HamiltonianFamily,
    x: &ParamVector,
    support: &SiteSet,
    spec: &RffSpec,
    orbit_rep: Option<&HashMap<SiteSet, SiteSet>>,
) -> Result<Vec<f64>> {
    let z = extract_z(family, x, support, spec.delta)?;
    let class = omega_class(spec, support, orbit_rep)?;
    rff_features(&z, &spec.omega(&class, z.len()), spec.gamma)
}

/// Orbit-pooled member block: the representative's window is transported
/// by the member's group element (`Z_{gI}(x) = Z_I(g·x)`), so components
/// stay aligned with the shared frequency matrix.
fn orbit_member_block(
    family: &HamiltonianFamily,
    x: &ParamVector,
    representative: &SiteSet,
    element: &[usize],
    omega: &DMatrix<f64>,
    spec: &RffSpec,
) -> Result<Vec<f64>> {
    let xg = family.permute_params(element, x)?;
    let z = extract_z(family, &xg, representative, spec.delta)?;
    rff_features(&z, omega, spec.gamma)
}

/// Deduplicates supports preserving first appearance.
fn unique_supports(observable: &Observable) -> Vec<SiteSet> {
    let mut seen = Vec::new();
    for g in &observable.groups {
        if !seen.contains(&g.support) {
            seen.push(g.support.clone());
        }
    }
    seen
}

/// Assembles the full feature vector of `x` for an observable.
///
/// Plain mode emits one block per observable term, in term order, keyed
/// by the term's support. Equivariant mode (randomized features only)
/// emits one block per automorphism orbit of the distinct supports,
/// keyed by the orbit representative: member blocks are computed with
/// the orbit's shared frequencies on the transported windows and summed.
/// On families without automorphisms every orbit is a singleton, so
/// equivariant assembly coincides with plain assembly.
pub fn full_features(
    family: &HamiltonianFamily,
    x: &ParamVector,
    observable: &Observable,
    map: &FeatureMap,
    mode: FeatureMode,
) -> Result<FeatureVector> {
    let mut values = Vec::new();
    let mut blocks = Vec::new();
    let mut push_block = |key: SiteSet, block: Vec<f64>, values: &mut Vec<f64>| -> Result<()> {
        if values.len() + block.len() > FEATURE_LEN_GUARD {
            return Err(Error::TooLarge {
                what: "feature vector",
                size: values.len() + block.len(),
                max: FEATURE_LEN_GUARD,
            });
        }
        blocks.push(FeatureBlock {
            key,
            offset: values.len(),
            length: block.len(),
        });
        values.extend_from_slice(&block);
        Ok(())
    };

    match mode {
        FeatureMode::Plain => {
            // Per-orbit sharing keys blocks by orbit representative even
            // without pooling, so the orbit assignment is computed once.
            let reps = match map {
                FeatureMap::Rff(spec) if spec.sharing == OmegaSharing::PerOrbit => {
                    Some(orbit_assignment(family, observable)?)
                }
                _ => None,
            };
            for group in &observable.groups {
                let block = match map {
                    FeatureMap::Discretized(spec) => {
                        discretized_block(family, x, &group.support, spec)?
                    }
                    FeatureMap::Rff(spec) => {
                        rff_block(family, x, &group.support, spec, reps.as_ref())?
                    }
                };
                push_block(group.support.clone(), block, &mut values)?;
            }
        }
        FeatureMode::Equivariant => {
            let spec = match map {
                FeatureMap::Rff(spec) => spec,
                FeatureMap::Discretized(_) => {
                    return Err(Error::invalid(
                        "equivariant pooling needs randomized features; \
                         summed one-hot blocks would no longer be one-hot"
                            .to_string(),
                    ));
                }
            };
            let sets = unique_supports(observable);
            let orbits = automorphism_orbits(family.hypergraph(), &sets)?;
            for orbit in &orbits {
                let l = extract_z(family, x, &orbit.representative, spec.delta)?.len();
                let class = match spec.sharing {
                    OmegaSharing::PerArity => OmegaClass::Arity(orbit.representative.len()),
                    OmegaSharing::PerOrbit => OmegaClass::Orbit(orbit.representative.clone()),
                };
                let omega = spec.omega(&class, l);
                let mut pooled = vec![0.0; 2 * spec.r];
                for member in &orbit.members {
                    let block = orbit_member_block(
                        family,
                        x,
                        &orbit.representative,
                        &member.element,
                        &omega,
                        spec,
                    )?;
                    for (acc, b) in pooled.iter_mut().zip(&block) {
                        *acc += b;
                    }
                }
                push_block(orbit.representative.clone(), pooled, &mut values)?;
            }
        }
    }
    Ok(FeatureVector { values, blocks })
}

/// Maps every distinct support of the observable to its orbit
/// representative.
fn orbit_assignment(
    family: &HamiltonianFamily,
    observable: &Observable,
) -> Result<HashMap<SiteSet, SiteSet>> {
    let sets = unique_supports(observable);
    let orbits = automorphism_orbits(family.hypergraph(), &sets)?;
    let mut map = HashMap::new();
    for orbit in orbits {
        for member in orbit.members {
            map.insert(member.set, orbit.representative.clone());
        }
    }
    Ok(map)
}
