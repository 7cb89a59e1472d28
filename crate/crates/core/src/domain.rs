//! Finite domains `U`, their three boundaries, the inner metric `d_U`, exact
//! inner-uniformity decisions and the inner-point selector `x ↦ x_r`.
//!
//! A domain stores its members as graph vertex ids and also assigns each one a
//! dense *local* index `0..|U|`, the index used by every vector indexed by `U`
//! in this crate (kernels, Green's columns, eigenfunctions).

use std::collections::VecDeque;
use std::sync::Arc;

use rayon::prelude::*;
use thiserror::Error;

use crate::graph::{VertexId, WeightedGraph};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum DomainError {
    #[error("domain is empty")]
    Empty,
    #[error("vertex {0} is not in the graph")]
    UnknownVertex(VertexId),
    #[error("domain is not connected through its own edges ({reached} of {total} reachable)")]
    DisconnectedU { reached: usize, total: usize },
    #[error("domain has an empty boundary (the killed chain would never exit)")]
    EmptyBoundary,
    #[error("vertex {0} is not in the domain")]
    NotInDomain(VertexId),
    #[error("vertex {0} is not on the outer boundary")]
    NotOnBoundary(VertexId),
    #[error("inner-uniformity check needs about {estimate:.3e} state visits, budget is {budget:.3e}")]
    TooLarge { estimate: f64, budget: f64 },
    #[error("no admissible inner point for x={x} at scale r={r}")]
    NoAdmissiblePoint { x: VertexId, r: f64 },
    #[error("invalid parameter: {0}")]
    InvalidParameter(String),
}

/// An element of the extended boundary: the dangling edge from `inner ∈ U`
/// to `outer ∈ ∂U`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct HalfEdge {
    pub inner: VertexId,
    pub outer: VertexId,
}

#[derive(Debug, Clone)]
pub struct Domain {
    graph: Arc<WeightedGraph>,
    members: Vec<VertexId>,
    local: Vec<Option<usize>>,
    outer: Vec<VertexId>,
    outer_local: Vec<Option<usize>>,
    nu: Vec<Vec<VertexId>>,
    half_edges: Vec<HalfEdge>,
    intrinsic: Vec<VertexId>,
    clearance: Vec<usize>,
}

impl Domain {
    /// Builds `U` from a set of graph vertices (order and duplicates ignored).
    pub fn new(graph: Arc<WeightedGraph>, u_set: &[VertexId]) -> Result<Self, DomainError> {
        if u_set.is_empty() {
            return Err(DomainError::Empty);
        }
        let n = graph.len();
        let mut members: Vec<VertexId> = u_set.to_vec();
        members.sort_unstable();
        members.dedup();
        if let Some(&bad) = members.iter().find(|&&v| v >= n) {
            return Err(DomainError::UnknownVertex(bad));
        }
        let mut local = vec![None; n];
        for (i, &v) in members.iter().enumerate() {
            local[v] = Some(i);
        }

        // connectivity inside U
        let mut seen = vec![false; members.len()];
        let mut queue = VecDeque::from([members[0]]);
        seen[0] = true;
        let mut reached = 1;
        while let Some(v) = queue.pop_front() {
            for &(w, _) in graph.neighbors(v) {
                if let Some(j) = local[w] {
                    if !seen[j] {
                        seen[j] = true;
                        reached += 1;
                        queue.push_back(w);
                    }
                }
            }
        }
        if reached != members.len() {
            return Err(DomainError::DisconnectedU { reached, total: members.len() });
        }

        let mut outer: Vec<VertexId> = members
            .iter()
            .flat_map(|&v| graph.neighbors(v).iter().map(|&(w, _)| w))
            .filter(|&w| local[w].is_none())
            .collect();
        outer.sort_unstable();
        outer.dedup();
        if outer.is_empty() {
            return Err(DomainError::EmptyBoundary);
        }
        let mut outer_local = vec![None; n];
        for (i, &y) in outer.iter().enumerate() {
            outer_local[y] = Some(i);
        }
        let nu: Vec<Vec<VertexId>> = outer
            .iter()
            .map(|&y| {
                graph
                    .neighbors(y)
                    .iter()
                    .map(|&(z, _)| z)
                    .filter(|&z| local[z].is_some())
                    .collect()
            })
            .collect();
        let half_edges = outer
            .iter()
            .zip(&nu)
            .flat_map(|(&y, zs)| zs.iter().map(move |&z| HalfEdge { inner: z, outer: y }))
            .collect();
        let intrinsic = members
            .iter()
            .copied()
            .filter(|&v| graph.neighbors(v).iter().any(|&(w, _)| local[w].is_none()))
            .collect();

        // d(x, X∖U) via multi-source BFS from ∂U; shortest paths to the
        // complement only cross U before their first exit.
        let mut clearance = vec![usize::MAX; members.len()];
        let mut queue = VecDeque::new();
        for &y in &outer {
            for &(z, _) in graph.neighbors(y) {
                if let Some(j) = local[z] {
                    if clearance[j] == usize::MAX {
                        clearance[j] = 1;
                        queue.push_back(z);
                    }
                }
            }
        }
        while let Some(v) = queue.pop_front() {
            let dv = clearance[local[v].unwrap()];
            for &(w, _) in graph.neighbors(v) {
                if let Some(j) = local[w] {
                    if clearance[j] == usize::MAX {
                        clearance[j] = dv + 1;
                        queue.push_back(w);
                    }
                }
            }
        }

        Ok(Self { graph, members, local, outer, outer_local, nu, half_edges, intrinsic, clearance })
    }

    pub fn graph(&self) -> &Arc<WeightedGraph> {
        &self.graph
    }

    /// `U` as graph vertices, sorted; position in this slice is the local index.
    pub fn members(&self) -> &[VertexId] {
        &self.members
    }

    pub fn len(&self) -> usize {
        self.members.len()
    }

    pub fn is_empty(&self) -> bool {
        self.members.is_empty()
    }

    pub fn contains(&self, v: VertexId) -> bool {
        self.local.get(v).is_some_and(|l| l.is_some())
    }

    pub fn local_index(&self, v: VertexId) -> Option<usize> {
        self.local.get(v).copied().flatten()
    }

    pub fn require_local(&self, v: VertexId) -> Result<usize, DomainError> {
        self.local_index(v).ok_or(DomainError::NotInDomain(v))
    }

    pub fn vertex(&self, local: usize) -> VertexId {
        self.members[local]
    }

    /// `∂U`, sorted.
    pub fn outer_boundary(&self) -> &[VertexId] {
        &self.outer
    }

    pub fn outer_index(&self, y: VertexId) -> Option<usize> {
        self.outer_local.get(y).copied().flatten()
    }

    /// `ν(y)`: the neighbours of `y ∈ ∂U` inside `U`.
    pub fn nu(&self, y: VertexId) -> Result<&[VertexId], DomainError> {
        let i = self.outer_index(y).ok_or(DomainError::NotOnBoundary(y))?;
        Ok(&self.nu[i])
    }

    /// `∂*U`, ordered by outer vertex then inner vertex.
    pub fn extended_boundary(&self) -> &[HalfEdge] {
        &self.half_edges
    }

    /// `∂•U`: the members that leak mass (have a neighbour outside `U`).
    pub fn intrinsic_boundary(&self) -> &[VertexId] {
        &self.intrinsic
    }

    /// `d(x, 𝔛∖U)` by local index.
    pub fn clearance(&self, local: usize) -> usize {
        self.clearance[local]
    }

    pub fn clearances(&self) -> &[usize] {
        &self.clearance
    }

    /// `R = max_x d(x, 𝔛∖U)`.
    pub fn depth(&self) -> usize {
        self.clearance.iter().copied().max().unwrap_or(0)
    }

    pub fn volume(&self) -> f64 {
        self.graph.total_mass(&self.members)
    }

    /// Inner distances from `x` (local index) to every member, by local index.
    pub fn inner_distances_from(&self, x: usize) -> Vec<usize> {
        let mut dist = vec![usize::MAX; self.len()];
        let mut queue = VecDeque::new();
        dist[x] = 0;
        queue.push_back(x);
        while let Some(i) = queue.pop_front() {
            let v = self.members[i];
            for &(w, _) in self.graph.neighbors(v) {
                if let Some(j) = self.local[w] {
                    if dist[j] == usize::MAX {
                        dist[j] = dist[i] + 1;
                        queue.push_back(j);
                    }
                }
            }
        }
        dist
    }

    /// `d_U(x, y)` for `y ∈ ∂U`: one more than the inner distance to the
    /// nearest vertex of `ν(y)`.
    pub fn inner_distance_to_boundary(&self, from_x: &[usize], y: VertexId) -> Result<usize, DomainError> {
        let nu = self.nu(y)?;
        Ok(1 + nu.iter().map(|&z| from_x[self.local[z].unwrap()]).min().unwrap())
    }

    /// Local-index adjacency lists of `(U, 𝔈_U)`.
    pub fn local_adjacency(&self) -> Vec<Vec<usize>> {
        self.members
            .iter()
            .map(|&v| {
                self.graph
                    .neighbors(v)
                    .iter()
                    .filter_map(|&(w, _)| self.local[w])
                    .collect()
            })
            .collect()
    }
}

/// All-pairs inner distances on `U`, with the boundary extension computed on
/// demand.
#[derive(Debug, Clone)]
pub struct InnerMetric {
    n: usize,
    dist: Vec<u32>,
}

impl InnerMetric {
    pub fn new(domain: &Domain) -> Self {
        let n = domain.len();
        let rows: Vec<Vec<u32>> = (0..n)
            .into_par_iter()
            .map(|x| domain.inner_distances_from(x).into_iter().map(|d| d as u32).collect())
            .collect();
        Self { n, dist: rows.concat() }
    }

    /// `d_U(x, y)` for local indices.
    pub fn get(&self, x: usize, y: usize) -> usize {
        self.dist[x * self.n + y] as usize
    }

    pub fn row(&self, x: usize) -> &[u32] {
        &self.dist[x * self.n..(x + 1) * self.n]
    }

    /// `d_U(x, y)` for `y ∈ ∂U`.
    pub fn to_boundary(&self, domain: &Domain, x: usize, y: VertexId) -> Result<usize, DomainError> {
        let nu = domain.nu(y)?;
        Ok(1 + nu
            .iter()
            .map(|&z| self.get(x, domain.local_index(z).unwrap()))
            .min()
            .unwrap())
    }

    pub fn diameter(&self) -> usize {
        self.dist.iter().copied().max().unwrap_or(0) as usize
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct InnerUniformReport {
    pub alpha: f64,
    pub a_cap: f64,
    pub holds: bool,
    /// First ordered pair (graph vertices) with no admissible path.
    pub witness_failure: Option<(VertexId, VertexId)>,
}

/// Default number of state visits the inner-uniformity decision may spend.
pub const INNER_UNIFORM_BUDGET: f64 = 1e8;

#[derive(Clone)]
struct Bits(Vec<u64>);

impl Bits {
    fn new(n: usize) -> Self {
        Bits(vec![0; n.div_ceil(64)])
    }
    fn set(&mut self, i: usize) {
        self.0[i / 64] |= 1 << (i % 64);
    }
    fn is_empty(&self) -> bool {
        self.0.iter().all(|&w| w == 0)
    }
    fn intersects(&self, other: &Bits) -> bool {
        self.0.iter().zip(&other.0).any(|(a, b)| a & b != 0)
    }
    fn ones(&self) -> impl Iterator<Item = usize> + '_ {
        self.0.iter().enumerate().flat_map(|(w, &bits)| {
            (0..64).filter(move |b| bits >> b & 1 == 1).map(move |b| w * 64 + b)
        })
    }
}

/// Per-source reachability tables. `reach[j]` holds the endpoints of walks
/// `s = x_0, …, x_j` in `U` with `clearance(x_i) ≥ α(1+i)` for all `i ≤ j`;
/// `spread[j]` is the one-step neighbourhood of `reach[j]`.
struct Tables {
    reach: Vec<Bits>,
    spread: Vec<Bits>,
}

fn admissible(clearance: usize, alpha: f64, j: usize) -> bool {
    // exact comparison with a little slack for α given as a decimal fraction
    clearance as f64 >= alpha * (1 + j) as f64 - 1e-12
}

fn build_tables(adj: &[Vec<usize>], clearance: &[usize], alpha: f64, s: usize, max_j: usize) -> Tables {
    let n = adj.len();
    let mut reach = Vec::new();
    let mut spread = Vec::new();
    let mut cur = Bits::new(n);
    if admissible(clearance[s], alpha, 0) {
        cur.set(s);
    }
    for j in 0..=max_j {
        let mut nb = Bits::new(n);
        for v in cur.ones() {
            for &w in &adj[v] {
                nb.set(w);
            }
        }
        let mut next = Bits::new(n);
        for w in nb.ones() {
            if admissible(clearance[w], alpha, j + 1) {
                next.set(w);
            }
        }
        let empty = cur.is_empty();
        reach.push(cur);
        spread.push(nb);
        if empty {
            break;
        }
        cur = next;
    }
    Tables { reach, spread }
}

/// Decides inner `(α, A)`-uniformity exactly.
///
/// For a candidate length `k` with `a = ⌊k/2⌋`, an admissible path exists iff
/// the forward table of `x` at step `a` meets the backward table of `y` at
/// step `a` (even `k`) or its one-step spread (odd `k`): the middle vertex then
/// carries the requirement `α(1+a)` from both sides. Walks may be used in
/// place of paths because cutting out a loop only relaxes the clearance
/// requirements.
pub fn verify_inner_uniform(
    domain: &Domain,
    alpha: f64,
    a_cap: f64,
    budget: Option<f64>,
) -> Result<InnerUniformReport, DomainError> {
    if !(alpha > 0.0 && alpha <= 1.0) {
        return Err(DomainError::InvalidParameter(format!("alpha must lie in (0,1], got {alpha}")));
    }
    if !(a_cap >= 1.0) {
        return Err(DomainError::InvalidParameter(format!("A must be at least 1, got {a_cap}")));
    }
    let n = domain.len();
    let metric = InnerMetric::new(domain);
    let diam = metric.diameter().max(1);
    let estimate = (n as f64).powi(2) * diam as f64;
    let budget = budget.unwrap_or(INNER_UNIFORM_BUDGET);
    if estimate > budget {
        return Err(DomainError::TooLarge { estimate, budget });
    }
    let adj = domain.local_adjacency();
    let clearance = domain.clearances();
    let max_j = ((a_cap * diam as f64).floor() as usize) / 2 + 1;
    let tables: Vec<Tables> = (0..n)
        .into_par_iter()
        .map(|s| build_tables(&adj, clearance, alpha, s, max_j))
        .collect();

    let pair_ok = |x: usize, y: usize| {
        let d = metric.get(x, y);
        let k_max = (a_cap * d as f64 + 1e-9).floor() as usize;
        (d..=k_max).any(|k| {
            let a = k / 2;
            match (tables[x].reach.get(a), tables[y].reach.get(a)) {
                (Some(fx), Some(by)) if k % 2 == 0 => fx.intersects(by),
                (Some(fx), Some(_)) => fx.intersects(&tables[y].spread[a]),
                _ => false,
            }
        })
    };
    let witness_failure = (0..n)
        .into_par_iter()
        .find_map_first(|x| (0..n).find(|&y| !pair_ok(x, y)).map(|y| (x, y)))
        .map(|(x, y)| (domain.vertex(x), domain.vertex(y)));
    Ok(InnerUniformReport { alpha, a_cap, holds: witness_failure.is_none(), witness_failure })
}

/// The central point `o`, the depth `R` and the rule selecting `x_r`.
#[derive(Debug, Clone)]
pub struct InnerPointIndex {
    pub r_max: usize,
    /// Local index of `o`.
    pub center: usize,
    pub a1: f64,
    pub a_cap_1: f64,
}

/// Picks `o` as the lexicographically smallest deepest vertex.
pub fn inner_points(domain: &Domain, a1: f64, a_cap_1: f64) -> Result<InnerPointIndex, DomainError> {
    if !(a1 > 0.0) || !(a_cap_1 > 0.0) {
        return Err(DomainError::InvalidParameter(format!("a1={a1}, A1={a_cap_1} must be positive")));
    }
    let r_max = domain.depth();
    let g = domain.graph();
    let center = (0..domain.len())
        .filter(|&i| domain.clearance(i) == r_max)
        .min_by_key(|&i| g.order_key(domain.vertex(i)))
        .unwrap();
    Ok(InnerPointIndex { r_max, center, a1, a_cap_1 })
}

/// `x_r` for one base point `x`, all scales. Built from a single BFS.
#[derive(Debug, Clone)]
pub struct InnerPointSelector {
    x: usize,
    /// `best[k]`: deepest vertex (lexicographic ties) within inner distance `k`.
    best: Vec<usize>,
    r_max: usize,
    center: usize,
    a1: f64,
    a_cap_1: f64,
}

impl InnerPointIndex {
    pub fn selector(&self, domain: &Domain, x: usize) -> InnerPointSelector {
        let dist = domain.inner_distances_from(x);
        let g = domain.graph();
        let mut order: Vec<usize> = (0..domain.len()).collect();
        order.sort_by_key(|&i| dist[i]);
        let max_d = dist[*order.last().unwrap()];
        let better = |a: usize, b: usize| {
            // true if a is preferred over b
            let (ca, cb) = (domain.clearance(a), domain.clearance(b));
            ca > cb || (ca == cb && g.order_key(domain.vertex(a)) < g.order_key(domain.vertex(b)))
        };
        let mut best = Vec::with_capacity(max_d + 1);
        let mut cur = x;
        let mut it = order.iter().peekable();
        for k in 0..=max_d {
            while let Some(&&i) = it.peek() {
                if dist[i] > k {
                    break;
                }
                if better(i, cur) {
                    cur = i;
                }
                it.next();
            }
            best.push(cur);
        }
        InnerPointSelector {
            x,
            best,
            r_max: self.r_max,
            center: self.center,
            a1: self.a1,
            a_cap_1: self.a_cap_1,
        }
    }

    /// Convenience wrapper for a single `(x, r)`.
    pub fn x_r(&self, domain: &Domain, x: usize, r: f64) -> Result<usize, DomainError> {
        self.selector(domain, x).select(domain, r)
    }
}

impl InnerPointSelector {
    /// `x_r` as a local index.
    pub fn select(&self, domain: &Domain, r: f64) -> Result<usize, DomainError> {
        if r >= self.r_max as f64 {
            return Ok(self.center);
        }
        let scale = r.max(0.0);
        let k = ((self.a_cap_1 * scale) + 1e-12).floor() as usize;
        let cand = self.best[k.min(self.best.len() - 1)];
        if (domain.clearance(cand) as f64) + 1e-12 < self.a1 * scale {
            return Err(DomainError::NoAdmissiblePoint { x: domain.vertex(self.x), r });
        }
        Ok(cand)
    }

    pub fn base(&self) -> usize {
        self.x
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::graph::{GraphBuilder, VertexSpec};

    fn grid(w: i64, h: i64) -> Arc<WeightedGraph> {
        let mut b = GraphBuilder::new();
        let id = |x: i64, y: i64| x * 1000 + y;
        for x in 0..w {
            for y in 0..h {
                b.vertex(VertexSpec { id: id(x, y), pi: 1.0, coords: Some(vec![x, y]), frontier: false });
            }
        }
        for x in 0..w {
            for y in 0..h {
                if x + 1 < w {
                    b.edge(id(x, y), id(x + 1, y), 0.125);
                }
                if y + 1 < h {
                    b.edge(id(x, y), id(x, y + 1), 0.125);
                }
            }
        }
        Arc::new(b.build().unwrap())
    }

    fn inner_square(g: &Arc<WeightedGraph>, lo: i64, hi: i64) -> Domain {
        let u: Vec<_> = (lo..=hi)
            .flat_map(|x| (lo..=hi).map(move |y| vec![x, y]))
            .map(|c| g.by_coords(&c).unwrap())
            .collect();
        Domain::new(g.clone(), &u).unwrap()
    }

    #[test]
    fn square_boundaries() {
        let g = grid(7, 7);
        let d = inner_square(&g, 1, 5);
        assert_eq!(d.len(), 25);
        assert_eq!(d.outer_boundary().len(), 20);
        assert_eq!(d.extended_boundary().len(), 20);
        assert_eq!(d.intrinsic_boundary().len(), 16);
        assert_eq!(d.depth(), 3);
        for &y in d.outer_boundary() {
            assert_eq!(d.nu(y).unwrap().len(), 1);
        }
    }

    #[test]
    fn disconnected_and_boundaryless_domains_are_rejected() {
        let g = grid(5, 1);
        let a = g.by_coords(&[1, 0]).unwrap();
        let c = g.by_coords(&[3, 0]).unwrap();
        assert!(matches!(Domain::new(g.clone(), &[a, c]), Err(DomainError::DisconnectedU { .. })));
        let all: Vec<_> = (0..g.len()).collect();
        assert_eq!(Domain::new(g, &all).unwrap_err(), DomainError::EmptyBoundary);
    }

    #[test]
    fn boundary_hugging_pairs_break_alpha_one() {
        let g = grid(10, 10);
        let d = inner_square(&g, 1, 8);
        let rep = verify_inner_uniform(&d, 1.0, 1.0, None).unwrap();
        assert!(!rep.holds);
        assert!(verify_inner_uniform(&d, 0.25, 4.0, None).unwrap().holds);
    }

    /// Exhaustive walk enumeration, exponential but independent of the DP.
    fn brute_force(d: &Domain, alpha: f64, a_cap: f64) -> bool {
        let adj = d.local_adjacency();
        let m = InnerMetric::new(d);
        fn search(adj: &[Vec<usize>], cl: &[usize], alpha: f64, path: &mut Vec<usize>, y: usize, k: usize) -> bool {
            let j = path.len() - 1;
            let v = *path.last().unwrap();
            if (cl[v] as f64) < alpha * (1 + j.min(k - j)) as f64 {
                return false;
            }
            if j == k {
                return v == y;
            }
            for &w in &adj[v] {
                path.push(w);
                if search(adj, cl, alpha, path, y, k) {
                    return true;
                }
                path.pop();
            }
            false
        }
        (0..d.len()).all(|x| {
            (0..d.len()).all(|y| {
                let dist = m.get(x, y);
                let kmax = (a_cap * dist as f64).floor() as usize;
                (dist..=kmax).any(|k| search(&adj, d.clearances(), alpha, &mut vec![x], y, k))
            })
        })
    }

    #[test]
    fn dp_matches_brute_force_on_small_domains() {
        let g = grid(7, 6);
        // an L-shaped domain
        let u: Vec<_> = (1..6)
            .flat_map(|x| (1..5).map(move |y| (x, y)))
            .filter(|&(x, y)| !(x >= 3 && y >= 3))
            .map(|(x, y)| g.by_coords(&[x, y]).unwrap())
            .collect();
        let d = Domain::new(g, &u).unwrap();
        for &(alpha, a_cap) in &[(1.0, 1.0), (0.5, 1.0), (0.5, 2.0), (1.0, 3.0), (0.25, 1.5), (0.34, 2.0)] {
            assert_eq!(
                verify_inner_uniform(&d, alpha, a_cap, None).unwrap().holds,
                brute_force(&d, alpha, a_cap),
                "alpha={alpha} A={a_cap}"
            );
        }
    }

    #[test]
    fn budget_is_enforced() {
        let g = grid(10, 10);
        let d = inner_square(&g, 1, 8);
        assert!(matches!(
            verify_inner_uniform(&d, 0.5, 2.0, Some(10.0)),
            Err(DomainError::TooLarge { .. })
        ));
    }

    #[test]
    fn center_and_selector() {
        let g = grid(9, 9);
        let d = inner_square(&g, 1, 7);
        let idx = inner_points(&d, 0.25, 2.0).unwrap();
        assert_eq!(g.coords(d.vertex(idx.center)).unwrap(), &[4, 4]);
        let corner = d.local_index(g.by_coords(&[1, 1]).unwrap()).unwrap();
        let sel = idx.selector(&d, corner);
        assert_eq!(sel.select(&d, 0.0).unwrap(), corner);
        let x2 = sel.select(&d, 2.0).unwrap();
        assert!(d.clearance(x2) >= 2);
        assert!(d.inner_distances_from(corner)[x2] <= 4);
        assert_eq!(sel.select(&d, 10.0).unwrap(), idx.center);
        let strict = inner_points(&d, 3.0, 0.5).unwrap();
        assert!(matches!(strict.x_r(&d, corner, 2.0), Err(DomainError::NoAdmissiblePoint { .. })));
    }
}
