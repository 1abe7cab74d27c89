//! Lattice geometry: site distances, set diameters, interaction hypergraphs,
//! δ-neighborhoods, brute-force counting, and automorphism orbits.
//!
//! Distances are graph-metric integers. On a periodic chain of length `n`
//! the distance is `min(|i−j|, n−|i−j|)`; in higher dimensions the per-axis
//! distances combine with the ℓ∞ (Chebyshev) metric so that integer shells
//! match lattice cell counts. A set's diameter is `1 + max` over site pairs,
//! so singletons have diameter 1.

use std::collections::{HashMap, VecDeque};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Enumeration guard for the brute-force counting operations.
const COUNT_GUARD: usize = 10_000_000;
/// Guard on the size of a group closure explored by orbit enumeration.
const ORBIT_GUARD: usize = 1_000_000;

/// Boundary condition of a lattice.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Boundary {
    Open,
    Periodic,
}

/// A D-dimensional rectangular lattice with open or periodic boundary.
///
/// Sites are indexed `0..n` in row-major order (the last axis varies
/// fastest). One-dimensional chains are the only lattices the simulation
/// modules accept; higher dimensions serve geometry and theory.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct LatticeSpec {
    dims: Vec<usize>,
    boundary: Boundary,
}

impl LatticeSpec {
    /// Creates a lattice from per-axis side lengths.
    pub fn new(dims: Vec<usize>, boundary: Boundary) -> Result<Self> {
        if dims.is_empty() {
            return Err(Error::invalid("lattice needs at least one axis"));
        }
        if dims.iter().any(|&d| d == 0) {
            return Err(Error::invalid("lattice side lengths must be positive"));
        }
        Ok(LatticeSpec { dims, boundary })
    }

    /// Convenience constructor for a 1D chain of `n` sites.
    pub fn chain(n: usize, boundary: Boundary) -> Result<Self> {
        if n == 0 {
            return Err(Error::invalid("chain length must be positive"));
        }
        LatticeSpec::new(vec![n], boundary)
    }

    /// Number of axes.
    pub fn dimension(&self) -> usize {
        self.dims.len()
    }

    /// Per-axis side lengths.
    pub fn dims(&self) -> &[usize] {
        &self.dims
    }

    /// Boundary condition.
    pub fn boundary(&self) -> Boundary {
        self.boundary
    }

    /// Total number of sites.
    pub fn n_sites(&self) -> usize {
        self.dims.iter().product()
    }

    fn coords(&self, mut site: usize) -> Vec<usize> {
        let mut c = vec![0; self.dims.len()];
        for axis in (0..self.dims.len()).rev() {
            c[axis] = site % self.dims[axis];
            site /= self.dims[axis];
        }
        c
    }

    fn axis_distance(&self, len: usize, a: usize, b: usize) -> usize {
        let d = a.abs_diff(b);
        match self.boundary {
            Boundary::Open => d,
            Boundary::Periodic => d.min(len - d),
        }
    }

    fn check_site(&self, i: usize) -> Result<()> {
        if i >= self.n_sites() {
            return Err(Error::invalid(format!(
                "site {i} out of range for lattice with {} sites",
                self.n_sites()
            )));
        }
        Ok(())
    }

    /// Graph distance between two sites (ℓ∞ across axes; wrap-around when
    /// periodic).
    pub fn site_distance(&self, i: usize, j: usize) -> Result<usize> {
        self.check_site(i)?;
        self.check_site(j)?;
        Ok(self.site_distance_unchecked(i, j))
    }

    pub(crate) fn site_distance_unchecked(&self, i: usize, j: usize) -> usize {
        if self.dims.len() == 1 {
            return self.axis_distance(self.dims[0], i, j);
        }
        let ci = self.coords(i);
        let cj = self.coords(j);
        ci.iter()
            .zip(&cj)
            .zip(&self.dims)
            .map(|((&a, &b), &len)| self.axis_distance(len, a, b))
            .max()
            .unwrap_or(0)
    }

    /// Minimum site distance between two sets: `min` over pairs.
    pub fn set_distance(&self, a: &SiteSet, b: &SiteSet) -> Result<usize> {
        let mut best = usize::MAX;
        for &i in a.sites() {
            self.check_site(i)?;
            for &j in b.sites() {
                self.check_site(j)?;
                best = best.min(self.site_distance_unchecked(i, j));
            }
        }
        Ok(best)
    }

    /// Set diameter: `1 + max` pairwise distance, so a singleton has
    /// diameter 1.
    pub fn diameter(&self, a: &SiteSet) -> Result<usize> {
        let mut max = 0usize;
        for &i in a.sites() {
            self.check_site(i)?;
        }
        for (k, &i) in a.sites().iter().enumerate() {
            for &j in &a.sites()[k + 1..] {
                max = max.max(self.site_distance_unchecked(i, j));
            }
        }
        Ok(1 + max)
    }
}

/// A nonempty sorted set of distinct site indices.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(transparent)]
pub struct SiteSet(Vec<usize>);

impl SiteSet {
    /// Builds a site set, sorting the input and rejecting empties and
    /// duplicates.
    pub fn new(mut sites: Vec<usize>) -> Result<Self> {
        if sites.is_empty() {
            return Err(Error::invalid("site set must be nonempty"));
        }
        sites.sort_unstable();
        if sites.windows(2).any(|w| w[0] == w[1]) {
            return Err(Error::invalid("site set must not contain duplicates"));
        }
        Ok(SiteSet(sites))
    }

    /// Singleton set.
    pub fn singleton(i: usize) -> Self {
        SiteSet(vec![i])
    }

    /// Unordered pair.
    pub fn pair(i: usize, j: usize) -> Result<Self> {
        SiteSet::new(vec![i, j])
    }

    /// The sorted site indices.
    pub fn sites(&self) -> &[usize] {
        &self.0
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    pub fn contains(&self, site: usize) -> bool {
        self.0.binary_search(&site).is_ok()
    }

    /// Image of the set under a site permutation `perm` (site `s` maps to
    /// `perm[s]`).
    pub fn apply_perm(&self, perm: &[usize]) -> Result<SiteSet> {
        let mapped = self
            .0
            .iter()
            .map(|&s| {
                perm.get(s).copied().ok_or_else(|| {
                    Error::invalid(format!("permutation of length {} lacks site {s}", perm.len()))
                })
            })
            .collect::<Result<Vec<_>>>()?;
        SiteSet::new(mapped)
    }
}

/// One hyperedge: the sites it touches and the number of real parameters
/// (`q_I ≥ 1`) it carries.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Edge {
    pub sites: SiteSet,
    pub arity: usize,
}

/// An interaction hypergraph: the lattice, an ordered edge list (the order
/// fixes parameter layout and feature concatenation), and automorphism
/// generators as site permutations.
#[derive(Debug, Clone)]
pub struct InteractionHypergraph {
    lattice: LatticeSpec,
    edges: Vec<Edge>,
    generators: Vec<Vec<usize>>,
    offsets: Vec<usize>,
    index: HashMap<Vec<usize>, usize>,
}

impl InteractionHypergraph {
    /// Validates and assembles a hypergraph. Every generator must be a
    /// permutation of the sites that maps the edge set onto itself with
    /// matching arities.
    pub fn new(
        lattice: LatticeSpec,
        edges: Vec<Edge>,
        generators: Vec<Vec<usize>>,
    ) -> Result<Self> {
        let n = lattice.n_sites();
        let mut index = HashMap::new();
        let mut offsets = Vec::with_capacity(edges.len());
        let mut m = 0usize;
        for (e, edge) in edges.iter().enumerate() {
            if edge.arity == 0 {
                return Err(Error::invalid(format!("edge {e} has arity 0")));
            }
            for &s in edge.sites.sites() {
                if s >= n {
                    return Err(Error::invalid(format!("edge {e} references site {s} >= n={n}")));
                }
            }
            if index.insert(edge.sites.sites().to_vec(), e).is_some() {
                return Err(Error::invalid(format!("duplicate edge {:?}", edge.sites)));
            }
            offsets.push(m);
            m += edge.arity;
        }
        let hg = InteractionHypergraph {
            lattice,
            edges,
            generators: Vec::new(),
            offsets,
            index,
        };
        let mut hg = hg;
        for g in generators {
            hg.check_generator(&g)?;
            hg.generators.push(g);
        }
        Ok(hg)
    }

    fn check_generator(&self, perm: &[usize]) -> Result<()> {
        let n = self.lattice.n_sites();
        if perm.len() != n {
            return Err(Error::invalid(format!(
                "generator has length {}, lattice has {n} sites",
                perm.len()
            )));
        }
        let mut seen = vec![false; n];
        for &p in perm {
            if p >= n || seen[p] {
                return Err(Error::invalid("generator is not a permutation"));
            }
            seen[p] = true;
        }
        for edge in &self.edges {
            let image = edge.sites.apply_perm(perm)?;
            match self.index.get(image.sites()) {
                Some(&e) if self.edges[e].arity == edge.arity => {}
                _ => {
                    return Err(Error::invalid(format!(
                        "generator does not fix the edge set: {:?} maps outside it",
                        edge.sites
                    )))
                }
            }
        }
        Ok(())
    }

    pub fn lattice(&self) -> &LatticeSpec {
        &self.lattice
    }

    pub fn edges(&self) -> &[Edge] {
        &self.edges
    }

    pub fn edge(&self, e: usize) -> &Edge {
        &self.edges[e]
    }

    pub fn generators(&self) -> &[Vec<usize>] {
        &self.generators
    }

    /// Total parameter dimension `m = Σ q_I`.
    pub fn param_dim(&self) -> usize {
        self.offsets.last().map_or(0, |&o| o + self.edges.last().unwrap().arity)
    }

    /// Contiguous parameter slice of edge `e`.
    pub fn param_range(&self, e: usize) -> std::ops::Range<usize> {
        let start = self.offsets[e];
        start..start + self.edges[e].arity
    }

    /// Index of the edge with exactly these sites, if present.
    pub fn edge_index(&self, sites: &SiteSet) -> Option<usize> {
        self.index.get(sites.sites()).copied()
    }

    /// Image of edge `e` under a site permutation, as an edge index.
    pub fn image_edge(&self, e: usize, perm: &[usize]) -> Result<usize> {
        let image = self.edges[e].sites.apply_perm(perm)?;
        self.edge_index(&image).ok_or_else(|| {
            Error::invalid("permutation maps an edge outside the edge set".to_string())
        })
    }

    /// The δ-neighborhood of `center`: all edges `J` with
    /// `d(center, J) ≤ δ` and `diam(J) ≤ δ`, in stable edge order.
    pub fn neighborhood(&self, center: &SiteSet, delta: usize) -> Result<Neighborhood> {
        let mut members = Vec::new();
        for (e, edge) in self.edges.iter().enumerate() {
            if self.lattice.set_distance(center, &edge.sites)? <= delta
                && self.lattice.diameter(&edge.sites)? <= delta
            {
                members.push(e);
            }
        }
        Ok(Neighborhood {
            center: center.clone(),
            delta,
            members,
        })
    }

    /// Serializes to the interchange schema
    /// `{lattice:{D,dims,boundary}, edges:[{sites,arity}], generators:[[perm]]}`.
    pub fn to_json(&self) -> serde_json::Value {
        serde_json::json!({
            "lattice": {
                "D": self.lattice.dimension(),
                "dims": self.lattice.dims(),
                "boundary": self.lattice.boundary(),
            },
            "edges": self.edges,
            "generators": self.generators,
        })
    }

    /// Parses the interchange schema, re-validating all invariants.
    pub fn from_json(value: &serde_json::Value) -> Result<Self> {
        #[derive(Deserialize)]
        struct LatticeJson {
            #[serde(rename = "D")]
            d: usize,
            dims: Vec<usize>,
            boundary: Boundary,
        }
        #[derive(Deserialize)]
        struct HgJson {
            lattice: LatticeJson,
            edges: Vec<Edge>,
            generators: Vec<Vec<usize>>,
        }
        let parsed: HgJson = serde_json::from_value(value.clone())?;
        if parsed.lattice.d != parsed.lattice.dims.len() {
            return Err(Error::invalid(format!(
                "lattice D={} disagrees with {} axis lengths",
                parsed.lattice.d,
                parsed.lattice.dims.len()
            )));
        }
        let lattice = LatticeSpec::new(parsed.lattice.dims, parsed.lattice.boundary)?;
        InteractionHypergraph::new(lattice, parsed.edges, parsed.generators)
    }
}

/// A δ-neighborhood: the center set, the radius, and the member edges as
/// indices into the hypergraph's edge list (stable order).
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Neighborhood {
    pub center: SiteSet,
    pub delta: usize,
    pub members: Vec<usize>,
}

impl Neighborhood {
    pub fn len(&self) -> usize {
        self.members.len()
    }

    pub fn is_empty(&self) -> bool {
        self.members.is_empty()
    }
}

fn for_each_subset(n: usize, l: usize, mut f: impl FnMut(&[usize])) {
    let mut idx: Vec<usize> = (0..l).collect();
    if l == 0 || l > n {
        return;
    }
    loop {
        f(&idx);
        // Advance the combination (lexicographic).
        let mut k = l;
        loop {
            if k == 0 {
                return;
            }
            k -= 1;
            if idx[k] != k + n - l {
                break;
            }
            if k == 0 {
                return;
            }
        }
        idx[k] += 1;
        for j in k + 1..l {
            idx[j] = idx[j - 1] + 1;
        }
    }
}

/// Brute-force count of site sets `J` with `|J| = l`, `diam(J) = r`, and
/// `d(center, J) = dist`, enumerating all `l`-subsets of the lattice.
pub fn count_sets(
    lattice: &LatticeSpec,
    center: &SiteSet,
    l: usize,
    r: usize,
    dist: usize,
) -> Result<usize> {
    if l == 0 {
        return Err(Error::invalid("subset size l must be at least 1"));
    }
    let n = lattice.n_sites();
    let work = n.checked_pow(l as u32).unwrap_or(usize::MAX);
    if work > COUNT_GUARD {
        return Err(Error::TooLarge {
            what: "subset enumeration n^l",
            size: work,
            max: COUNT_GUARD,
        });
    }
    for &s in center.sites() {
        lattice.check_site(s)?;
    }
    let mut count = 0usize;
    for_each_subset(n, l, |subset| {
        let set = SiteSet(subset.to_vec());
        let diam = lattice.diameter(&set).expect("sites in range");
        if diam != r {
            return;
        }
        let d = lattice.set_distance(center, &set).expect("sites in range");
        if d == dist {
            count += 1;
        }
    });
    Ok(count)
}

/// Brute-force count of site sets `I` with `|I| = l` that contain both `i`
/// and `j` and have `diam(I) = r` (maximum pairwise distance `r − 1`).
pub fn count_enclosing_sets(
    lattice: &LatticeSpec,
    i: usize,
    j: usize,
    l: usize,
    r: usize,
) -> Result<usize> {
    lattice.check_site(i)?;
    lattice.check_site(j)?;
    if i == j {
        return Err(Error::invalid("enclosing-set count needs two distinct sites"));
    }
    if l < 2 {
        return Err(Error::invalid("enclosing-set count needs l >= 2"));
    }
    let n = lattice.n_sites();
    let work = n.checked_pow(l as u32).unwrap_or(usize::MAX);
    if work > COUNT_GUARD {
        return Err(Error::TooLarge {
            what: "subset enumeration n^l",
            size: work,
            max: COUNT_GUARD,
        });
    }
    let mut count = 0usize;
    for_each_subset(n, l, |subset| {
        if !subset.contains(&i) || !subset.contains(&j) {
            return;
        }
        let set = SiteSet(subset.to_vec());
        if lattice.diameter(&set).expect("sites in range") == r {
            count += 1;
        }
    });
    Ok(count)
}

/// One member of an orbit: the set plus a group element (full site
/// permutation) mapping the orbit representative onto it.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct OrbitMember {
    pub set: SiteSet,
    pub element: Vec<usize>,
}

/// An orbit of the hypergraph automorphism group acting on a list of site
/// sets. The representative is the lexicographically smallest member.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Orbit {
    pub representative: SiteSet,
    pub members: Vec<OrbitMember>,
}

/// Composition `p ∘ q` of site permutations: `(p ∘ q)[s] = p[q[s]]`.
pub fn compose_perms(p: &[usize], q: &[usize]) -> Vec<usize> {
    q.iter().map(|&s| p[s]).collect()
}

/// Inverse permutation.
pub fn invert_perm(p: &[usize]) -> Vec<usize> {
    let mut inv = vec![0; p.len()];
    for (s, &t) in p.iter().enumerate() {
        inv[t] = s;
    }
    inv
}

/// Identity permutation on `n` sites.
pub fn identity_perm(n: usize) -> Vec<usize> {
    (0..n).collect()
}

/// The cyclic shift `s → (s + k) mod n`.
pub fn shift_perm(n: usize, k: usize) -> Vec<usize> {
    (0..n).map(|s| (s + k) % n).collect()
}

/// Partitions `sets` into orbits under the group generated by the
/// hypergraph's automorphism generators. Each orbit's representative is its
/// lexicographically smallest listed member, and every member records a
/// group element mapping the representative onto it. BFS may pass through
/// images outside `sets`; only listed sets appear as members.
pub fn automorphism_orbits(
    hg: &InteractionHypergraph,
    sets: &[SiteSet],
) -> Result<Vec<Orbit>> {
    let n = hg.lattice().n_sites();
    let mut sorted: Vec<&SiteSet> = sets.iter().collect();
    sorted.sort();
    sorted.dedup();
    if sorted.len() != sets.len() {
        return Err(Error::invalid("orbit input contains duplicate sets"));
    }
    let listed: HashMap<&SiteSet, ()> = sorted.iter().map(|&s| (s, ())).collect();
    let mut assigned: HashMap<SiteSet, usize> = HashMap::new();
    let mut orbits: Vec<Orbit> = Vec::new();

    for &start in &sorted {
        if assigned.contains_key(start) {
            continue;
        }
        // BFS over the closure of `start` under the generators, tracking a
        // group element from `start` to each visited set.
        let mut element: HashMap<SiteSet, Vec<usize>> = HashMap::new();
        element.insert(start.clone(), identity_perm(n));
        let mut queue = VecDeque::from([start.clone()]);
        while let Some(cur) = queue.pop_front() {
            if element.len() > ORBIT_GUARD {
                return Err(Error::TooLarge {
                    what: "orbit closure",
                    size: element.len(),
                    max: ORBIT_GUARD,
                });
            }
            let g_cur = element[&cur].clone();
            for gen in hg.generators() {
                let image = cur.apply_perm(gen)?;
                if !element.contains_key(&image) {
                    element.insert(image.clone(), compose_perms(gen, &g_cur));
                    queue.push_back(image);
                }
            }
        }
        // Orbit members = closure ∩ listed sets; `start` is lexicographically
        // smallest among unassigned listed members because the outer loop
        // visits sets in sorted order.
        let mut members = Vec::new();
        let mut listed_members: Vec<&SiteSet> =
            element.keys().filter(|s| listed.contains_key(s)).collect();
        listed_members.sort();
        for set in listed_members {
            assigned.insert(set.clone(), orbits.len());
            members.push(OrbitMember {
                set: set.clone(),
                element: element[set].clone(),
            });
        }
        orbits.push(Orbit {
            representative: start.clone(),
            members,
        });
    }
    Ok(orbits)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn open_chain(n: usize) -> LatticeSpec {
        LatticeSpec::chain(n, Boundary::Open).unwrap()
    }

    fn periodic_chain(n: usize) -> LatticeSpec {
        LatticeSpec::chain(n, Boundary::Periodic).unwrap()
    }

    /// Nearest-neighbor pair edges with one parameter each; the periodic
    /// case adds the wrap edge and the unit-shift generator.
    fn nn_hypergraph(n: usize, boundary: Boundary) -> InteractionHypergraph {
        let lattice = LatticeSpec::chain(n, boundary).unwrap();
        let mut edges: Vec<Edge> = (0..n - 1)
            .map(|i| Edge {
                sites: SiteSet::pair(i, i + 1).unwrap(),
                arity: 1,
            })
            .collect();
        let mut generators = Vec::new();
        if boundary == Boundary::Periodic {
            edges.push(Edge {
                sites: SiteSet::pair(0, n - 1).unwrap(),
                arity: 1,
            });
            generators.push(shift_perm(n, 1));
        }
        InteractionHypergraph::new(lattice, edges, generators).unwrap()
    }

    #[test]
    fn site_distance_frozen_examples() {
        assert_eq!(open_chain(8).site_distance(2, 5).unwrap(), 3);
        assert_eq!(periodic_chain(8).site_distance(0, 7).unwrap(), 1);
        assert_eq!(periodic_chain(6).site_distance(1, 4).unwrap(), 3);
    }

    #[test]
    fn site_distance_rejects_out_of_range() {
        assert!(open_chain(4).site_distance(0, 4).is_err());
    }

    #[test]
    fn diameter_and_set_distance_frozen_examples() {
        let lat = open_chain(8);
        assert_eq!(lat.diameter(&SiteSet::singleton(3)).unwrap(), 1);
        assert_eq!(lat.diameter(&SiteSet::pair(0, 3).unwrap()).unwrap(), 4);
        assert_eq!(
            lat.set_distance(&SiteSet::pair(0, 1).unwrap(), &SiteSet::pair(4, 5).unwrap())
                .unwrap(),
            3
        );
    }

    #[test]
    fn site_set_rejects_empty_and_duplicates() {
        assert!(SiteSet::new(vec![]).is_err());
        assert!(SiteSet::new(vec![1, 1]).is_err());
        assert_eq!(SiteSet::new(vec![3, 1]).unwrap().sites(), &[1, 3]);
    }

    #[test]
    fn neighborhood_frozen_example_open_chain() {
        let hg = nn_hypergraph(8, Boundary::Open);
        let nb = hg
            .neighborhood(&SiteSet::pair(0, 1).unwrap(), 2)
            .unwrap();
        let sets: Vec<&SiteSet> = nb.members.iter().map(|&e| &hg.edge(e).sites).collect();
        let expect: Vec<SiteSet> = [(0, 1), (1, 2), (2, 3), (3, 4)]
            .iter()
            .map(|&(a, b)| SiteSet::pair(a, b).unwrap())
            .collect();
        assert_eq!(sets.len(), 4);
        for (got, want) in sets.iter().zip(&expect) {
            assert_eq!(*got, want);
        }
    }

    #[test]
    fn neighborhood_delta_zero_excludes_pairs() {
        let hg = nn_hypergraph(8, Boundary::Open);
        let nb = hg.neighborhood(&SiteSet::pair(0, 1).unwrap(), 0).unwrap();
        assert!(nb.is_empty());
    }

    #[test]
    fn neighborhood_large_delta_includes_everything() {
        let hg = nn_hypergraph(8, Boundary::Open);
        let nb = hg.neighborhood(&SiteSet::singleton(0), 100).unwrap();
        assert_eq!(nb.members.len(), hg.edges().len());
        // Stable edge order.
        assert_eq!(nb.members, (0..hg.edges().len()).collect::<Vec<_>>());
    }

    #[test]
    fn count_sets_frozen_examples() {
        let lat = open_chain(10);
        let origin = SiteSet::singleton(0);
        assert_eq!(count_sets(&lat, &origin, 1, 1, 3).unwrap(), 1);
        assert_eq!(count_sets(&lat, &origin, 2, 1, 3).unwrap(), 0);
        // n=20, center {5}, pairs with diameter 3 at distance 2:
        // {1,3} and {7,9} only.
        let lat = open_chain(20);
        assert_eq!(count_sets(&lat, &SiteSet::singleton(5), 2, 3, 2).unwrap(), 2);
    }

    #[test]
    fn count_sets_guard_triggers() {
        let lat = open_chain(200);
        let err = count_sets(&lat, &SiteSet::singleton(0), 4, 2, 2).unwrap_err();
        assert!(matches!(err, Error::TooLarge { .. }));
    }

    #[test]
    fn count_enclosing_pairs_match_diameter_rule() {
        // For l=2 the only set containing {i,j} is {i,j} itself, so the
        // count is 1 exactly when diam = r.
        let lat = open_chain(12);
        assert_eq!(count_enclosing_sets(&lat, 2, 5, 2, 4).unwrap(), 1);
        assert_eq!(count_enclosing_sets(&lat, 2, 5, 2, 5).unwrap(), 0);
    }

    #[test]
    fn triangle_inequality_exhaustive_small_chains() {
        for n in [2usize, 3, 5, 8, 13] {
            for boundary in [Boundary::Open, Boundary::Periodic] {
                let lat = LatticeSpec::chain(n, boundary).unwrap();
                for i in 0..n {
                    for j in 0..n {
                        for k in 0..n {
                            let dij = lat.site_distance(i, j).unwrap();
                            let djk = lat.site_distance(j, k).unwrap();
                            let dik = lat.site_distance(i, k).unwrap();
                            assert!(dik <= dij + djk, "triangle fails at n={n} {i},{j},{k}");
                        }
                    }
                }
            }
        }
    }

    #[test]
    fn neighborhood_membership_conditions_exhaustive() {
        let hg = nn_hypergraph(10, Boundary::Periodic);
        let lat = hg.lattice().clone();
        for delta in 0..6 {
            for c in 0..10 {
                let center = SiteSet::pair(c, (c + 1) % 10).unwrap();
                let nb = hg.neighborhood(&center, delta).unwrap();
                for (e, edge) in hg.edges().iter().enumerate() {
                    let inside = nb.members.contains(&e);
                    let d_ok = lat.set_distance(&center, &edge.sites).unwrap() <= delta;
                    let diam_ok = lat.diameter(&edge.sites).unwrap() <= delta;
                    assert_eq!(inside, d_ok && diam_ok);
                }
            }
        }
    }

    #[test]
    fn neighborhood_commutes_with_generators() {
        let hg = nn_hypergraph(8, Boundary::Periodic);
        let g = &hg.generators()[0];
        for c in 0..8 {
            let center = SiteSet::pair(c, (c + 1) % 8).unwrap();
            let image_center = center.apply_perm(g).unwrap();
            for delta in 0..5 {
                let lhs: Vec<SiteSet> = hg
                    .neighborhood(&image_center, delta)
                    .unwrap()
                    .members
                    .iter()
                    .map(|&e| hg.edge(e).sites.clone())
                    .collect();
                let mut rhs: Vec<SiteSet> = hg
                    .neighborhood(&center, delta)
                    .unwrap()
                    .members
                    .iter()
                    .map(|&e| hg.edge(e).sites.apply_perm(g).unwrap())
                    .collect();
                rhs.sort();
                let mut lhs = lhs;
                lhs.sort();
                assert_eq!(lhs, rhs);
            }
        }
    }

    #[test]
    fn orbits_periodic_nn_edges_single_transitive_orbit() {
        let hg = nn_hypergraph(4, Boundary::Periodic);
        let sets: Vec<SiteSet> = hg.edges().iter().map(|e| e.sites.clone()).collect();
        let orbits = automorphism_orbits(&hg, &sets).unwrap();
        assert_eq!(orbits.len(), 1);
        assert_eq!(orbits[0].representative, SiteSet::pair(0, 1).unwrap());
        assert_eq!(orbits[0].members.len(), 4);
    }

    #[test]
    fn orbits_trivial_group_are_singletons() {
        let hg = nn_hypergraph(6, Boundary::Open);
        let sets: Vec<SiteSet> = hg.edges().iter().map(|e| e.sites.clone()).collect();
        let orbits = automorphism_orbits(&hg, &sets).unwrap();
        assert_eq!(orbits.len(), sets.len());
        for orbit in &orbits {
            assert_eq!(orbit.members.len(), 1);
            assert_eq!(orbit.members[0].element, identity_perm(6));
        }
    }

    #[test]
    fn orbit_member_carries_mapping_element() {
        let hg = nn_hypergraph(6, Boundary::Periodic);
        let sets: Vec<SiteSet> = hg.edges().iter().map(|e| e.sites.clone()).collect();
        let orbits = automorphism_orbits(&hg, &sets).unwrap();
        assert_eq!(orbits.len(), 1);
        let orbit = &orbits[0];
        assert_eq!(orbit.representative, SiteSet::pair(0, 1).unwrap());
        let member = orbit
            .members
            .iter()
            .find(|m| m.set == SiteSet::pair(2, 3).unwrap())
            .expect("orbit contains {2,3}");
        assert_eq!(member.element, shift_perm(6, 2));
        // Contract: the element maps the representative onto the member.
        assert_eq!(
            orbit.representative.apply_perm(&member.element).unwrap(),
            member.set
        );
    }

    #[test]
    fn generator_validation_rejects_edge_breaking_perm() {
        let lattice = open_chain(4);
        let edges = vec![Edge {
            sites: SiteSet::pair(0, 1).unwrap(),
            arity: 1,
        }];
        // Swapping sites 1 and 2 maps {0,1} to {0,2}, which is not an edge.
        let bad = vec![0, 2, 1, 3];
        assert!(InteractionHypergraph::new(lattice, edges, vec![bad]).is_err());
    }

    #[test]
    fn hypergraph_json_round_trip() {
        let hg = nn_hypergraph(5, Boundary::Periodic);
        let json = hg.to_json();
        assert_eq!(json["lattice"]["D"], 1);
        assert_eq!(json["lattice"]["boundary"], "periodic");
        let back = InteractionHypergraph::from_json(&json).unwrap();
        assert_eq!(back.edges(), hg.edges());
        assert_eq!(back.generators(), hg.generators());
        assert_eq!(back.param_dim(), hg.param_dim());
    }

    #[test]
    fn param_layout_is_cumulative() {
        let lattice = open_chain(5);
        let edges = vec![
            Edge {
                sites: SiteSet::singleton(0),
                arity: 2,
            },
            Edge {
                sites: SiteSet::pair(1, 2).unwrap(),
                arity: 3,
            },
        ];
        let hg = InteractionHypergraph::new(lattice, edges, vec![]).unwrap();
        assert_eq!(hg.param_dim(), 5);
        assert_eq!(hg.param_range(0), 0..2);
        assert_eq!(hg.param_range(1), 2..5);
    }

    #[test]
    fn linf_metric_on_2d_grid() {
        let lat = LatticeSpec::new(vec![4, 4], Boundary::Open).unwrap();
        // Site index = row * 4 + col. Sites (0,0) and (2,3) differ by
        // (2,3) → ℓ∞ distance 3.
        assert_eq!(lat.site_distance(0, 2 * 4 + 3).unwrap(), 3);
        let lat = LatticeSpec::new(vec![4, 4], Boundary::Periodic).unwrap();
        // Wrap: (0,0) to (3,3) is (1,1) around the torus.
        assert_eq!(lat.site_distance(0, 3 * 4 + 3).unwrap(), 1);
    }

    proptest! {
        #[test]
        fn prop_triangle_inequality_random(
            n in 2usize..64,
            periodic in proptest::bool::ANY,
            seeds in proptest::collection::vec(0usize..1000, 3),
        ) {
            let boundary = if periodic { Boundary::Periodic } else { Boundary::Open };
            let lat = LatticeSpec::chain(n, boundary).unwrap();
            let (i, j, k) = (seeds[0] % n, seeds[1] % n, seeds[2] % n);
            let dij = lat.site_distance(i, j).unwrap();
            let djk = lat.site_distance(j, k).unwrap();
            let dik = lat.site_distance(i, k).unwrap();
            prop_assert!(dik <= dij + djk);
            prop_assert_eq!(dij, lat.site_distance(j, i).unwrap());
            prop_assert_eq!(lat.site_distance(i, i).unwrap(), 0);
        }

        #[test]
        fn prop_diameter_bounds_set_distance(
            n in 2usize..40,
            a in proptest::collection::btree_set(0usize..40, 1..4),
            b in proptest::collection::btree_set(0usize..40, 1..4),
        ) {
            let lat = open_chain(n);
            let a: Vec<usize> = a.into_iter().filter(|&s| s < n).collect();
            let b: Vec<usize> = b.into_iter().filter(|&s| s < n).collect();
            prop_assume!(!a.is_empty() && !b.is_empty());
            let sa = SiteSet::new(a).unwrap();
            let sb = SiteSet::new(b).unwrap();
            let d = lat.set_distance(&sa, &sb).unwrap();
            let diam_a = lat.diameter(&sa).unwrap();
            // Any pair distance within a set is bounded by diam − 1.
            prop_assert!(diam_a >= 1);
            // d is a min over pairs, so it is at most any single pair's distance.
            let d_first = lat
                .site_distance(sa.sites()[0], sb.sites()[0])
                .unwrap();
            prop_assert!(d <= d_first);
        }
    }
}
