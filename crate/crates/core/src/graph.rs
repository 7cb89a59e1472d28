//! Finite weighted graphs `(X, E, π, μ)`, the Markov kernel they induce, graph
//! balls, and the geometric constants used by the Harnack theory (ellipticity,
//! volume doubling, Poincaré).
//!
//! Vertices are dense indices `0..n`. Each vertex also carries an opaque
//! external id (used by the JSON interchange format), optional lattice
//! coordinates, and a `frontier` flag marking vertices whose neighbourhood was
//! cut off when the finite patch was extracted from an infinite graph.

use std::collections::{BTreeMap, HashMap, VecDeque};
use std::sync::Arc;

use nalgebra::{DMatrix, SymmetricEigen};
use thiserror::Error;

/// Dense vertex index.
pub type VertexId = usize;

/// Dense eigensolves for the Poincaré constant are refused above this size.
pub const POINCARE_DENSE_CAP: usize = 2000;

/// Holding probabilities within this distance of zero are snapped to zero.
const HOLDING_SNAP: f64 = 1e-14;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum GraphError {
    #[error("graph has no vertices")]
    Empty,
    #[error("duplicate vertex id {0}")]
    DuplicateVertex(i64),
    #[error("edge references unknown vertex id {0}")]
    UnknownVertex(i64),
    #[error("self-loop at vertex id {0}")]
    SelfLoop(i64),
    #[error("non-positive weight {value} on {what}")]
    NonPositiveWeight { what: String, value: f64 },
    #[error("edge {{{u}, {v}}} listed with different weights {a} and {b} (mu must be symmetric)")]
    NonSymmetricMu { u: i64, v: i64, a: f64, b: f64 },
    #[error("sum of edge weights at vertex id {vertex} exceeds pi by {excess} (negative holding)")]
    NegativeHolding { vertex: i64, excess: f64 },
    #[error("graph is disconnected ({reached} of {total} vertices reachable)")]
    Disconnected { reached: usize, total: usize },
    #[error("ball B({center}, {radius}) reaches the edge of the stored patch")]
    BallTruncated { center: VertexId, radius: usize },
    #[error("ball has {size} vertices; dense Poincaré solve is capped at {cap}")]
    BallTooLarge { size: usize, cap: usize },
    #[error("radius must be at least 1 for doubling checks")]
    ZeroRadius,
}

/// Input record for one vertex.
#[derive(Debug, Clone, PartialEq)]
pub struct VertexSpec {
    pub id: i64,
    pub pi: f64,
    pub coords: Option<Vec<i64>>,
    pub frontier: bool,
}

/// Collects vertices and edges and validates them into a [`WeightedGraph`].
#[derive(Debug, Default, Clone)]
pub struct GraphBuilder {
    vertices: Vec<VertexSpec>,
    edges: Vec<(i64, i64, f64)>,
}

impl GraphBuilder {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn vertex(&mut self, spec: VertexSpec) -> &mut Self {
        self.vertices.push(spec);
        self
    }

    /// Adds an edge by external ids. Listing the same unordered pair twice is
    /// accepted only if both weights agree.
    pub fn edge(&mut self, u: i64, v: i64, mu: f64) -> &mut Self {
        self.edges.push((u, v, mu));
        self
    }

    pub fn build(self) -> Result<WeightedGraph, GraphError> {
        if self.vertices.is_empty() {
            return Err(GraphError::Empty);
        }
        let n = self.vertices.len();
        let mut id_index = HashMap::with_capacity(n);
        let mut ids = Vec::with_capacity(n);
        let mut pi = Vec::with_capacity(n);
        let mut coords = Vec::with_capacity(n);
        let mut frontier = Vec::with_capacity(n);
        for (i, v) in self.vertices.into_iter().enumerate() {
            if id_index.insert(v.id, i).is_some() {
                return Err(GraphError::DuplicateVertex(v.id));
            }
            if !(v.pi > 0.0 && v.pi.is_finite()) {
                return Err(GraphError::NonPositiveWeight {
                    what: format!("vertex {}", v.id),
                    value: v.pi,
                });
            }
            ids.push(v.id);
            pi.push(v.pi);
            coords.push(v.coords);
            frontier.push(v.frontier);
        }

        let mut edges: BTreeMap<(VertexId, VertexId), f64> = BTreeMap::new();
        for (u, v, mu) in self.edges {
            let a = *id_index.get(&u).ok_or(GraphError::UnknownVertex(u))?;
            let b = *id_index.get(&v).ok_or(GraphError::UnknownVertex(v))?;
            if a == b {
                return Err(GraphError::SelfLoop(u));
            }
            if !(mu > 0.0 && mu.is_finite()) {
                return Err(GraphError::NonPositiveWeight {
                    what: format!("edge {{{u}, {v}}}"),
                    value: mu,
                });
            }
            let key = (a.min(b), a.max(b));
            if let Some(&prev) = edges.get(&key) {
                if prev != mu {
                    return Err(GraphError::NonSymmetricMu { u, v, a: prev, b: mu });
                }
            } else {
                edges.insert(key, mu);
            }
        }

        let mut adj = vec![Vec::new(); n];
        for (&(a, b), &mu) in &edges {
            adj[a].push((b, mu));
            adj[b].push((a, mu));
        }
        for row in &mut adj {
            row.sort_by_key(|&(v, _)| v);
        }

        let coord_index = coords
            .iter()
            .enumerate()
            .filter_map(|(i, c)| c.as_ref().map(|c| (c.clone(), i)))
            .collect();

        let graph = WeightedGraph {
            ids,
            pi,
            coords,
            frontier,
            adj,
            edges,
            id_index,
            coord_index,
        };
        let reached = graph.distances_from(0).iter().filter(|d| d.is_some()).count();
        if reached != n {
            return Err(GraphError::Disconnected { reached, total: n });
        }
        Ok(graph)
    }
}

/// A finite, connected weighted graph. Immutable once built.
#[derive(Debug, Clone)]
pub struct WeightedGraph {
    ids: Vec<i64>,
    pi: Vec<f64>,
    coords: Vec<Option<Vec<i64>>>,
    frontier: Vec<bool>,
    adj: Vec<Vec<(VertexId, f64)>>,
    edges: BTreeMap<(VertexId, VertexId), f64>,
    id_index: HashMap<i64, VertexId>,
    coord_index: HashMap<Vec<i64>, VertexId>,
}

impl WeightedGraph {
    pub fn len(&self) -> usize {
        self.pi.len()
    }

    pub fn is_empty(&self) -> bool {
        self.pi.is_empty()
    }

    pub fn pi(&self, x: VertexId) -> f64 {
        self.pi[x]
    }

    pub fn pi_all(&self) -> &[f64] {
        &self.pi
    }

    /// `μ_xy`, zero when `{x, y}` is not an edge.
    pub fn mu(&self, x: VertexId, y: VertexId) -> f64 {
        self.edges.get(&(x.min(y), x.max(y))).copied().unwrap_or(0.0)
    }

    /// Neighbours of `x` with the edge weights, sorted by vertex index.
    pub fn neighbors(&self, x: VertexId) -> &[(VertexId, f64)] {
        &self.adj[x]
    }

    /// Edges in canonical order `(u, v, μ)` with `u < v`.
    pub fn edges(&self) -> impl Iterator<Item = (VertexId, VertexId, f64)> + '_ {
        self.edges.iter().map(|(&(u, v), &mu)| (u, v, mu))
    }

    pub fn edge_count(&self) -> usize {
        self.edges.len()
    }

    pub fn external_id(&self, x: VertexId) -> i64 {
        self.ids[x]
    }

    pub fn by_external_id(&self, id: i64) -> Option<VertexId> {
        self.id_index.get(&id).copied()
    }

    pub fn coords(&self, x: VertexId) -> Option<&[i64]> {
        self.coords[x].as_deref()
    }

    pub fn by_coords(&self, c: &[i64]) -> Option<VertexId> {
        self.coord_index.get(c).copied()
    }

    pub fn is_frontier(&self, x: VertexId) -> bool {
        self.frontier[x]
    }

    /// Ordering key used wherever a deterministic tie-break is needed:
    /// lattice coordinates when present, then the vertex index.
    pub fn order_key(&self, x: VertexId) -> (Vec<i64>, VertexId) {
        (self.coords[x].clone().unwrap_or_default(), x)
    }

    /// BFS distances from `x`; `None` for unreachable vertices.
    pub fn distances_from(&self, x: VertexId) -> Vec<Option<usize>> {
        self.bfs_limited(x, usize::MAX)
    }

    fn bfs_limited(&self, x: VertexId, limit: usize) -> Vec<Option<usize>> {
        let mut dist = vec![None; self.len()];
        let mut queue = VecDeque::new();
        dist[x] = Some(0);
        queue.push_back(x);
        while let Some(v) = queue.pop_front() {
            let dv = dist[v].unwrap();
            if dv >= limit {
                continue;
            }
            for &(w, _) in &self.adj[v] {
                if dist[w].is_none() {
                    dist[w] = Some(dv + 1);
                    queue.push_back(w);
                }
            }
        }
        dist
    }

    /// Graph distance `d(x, y)`: the least number of edges crossed from `x` to `y`.
    pub fn distance(&self, x: VertexId, y: VertexId) -> usize {
        if x == y {
            return 0;
        }
        self.distances_from(x)[y].expect("graph is connected")
    }

    /// `B(x, r)` sorted by vertex index.
    pub fn ball(&self, x: VertexId, r: usize) -> Vec<VertexId> {
        self.bfs_limited(x, r)
            .iter()
            .enumerate()
            .filter_map(|(v, d)| d.map(|_| v))
            .collect()
    }

    /// Vertices of `B(x, r)` paired with their distance to `x`.
    pub fn ball_with_distances(&self, x: VertexId, r: usize) -> Vec<(VertexId, usize)> {
        self.bfs_limited(x, r)
            .iter()
            .enumerate()
            .filter_map(|(v, d)| d.map(|d| (v, d)))
            .collect()
    }

    /// Whether `B(x, r)` is an honest ball of the underlying infinite graph,
    /// i.e. no frontier vertex lies strictly inside radius `r`.
    pub fn ball_is_complete(&self, x: VertexId, r: usize) -> bool {
        self.ball_with_distances(x, r)
            .iter()
            .all(|&(v, d)| !(self.frontier[v] && d < r))
    }

    /// `π(B(x, r))`, refusing balls cut by the patch edge.
    pub fn volume(&self, x: VertexId, r: usize) -> Result<f64, GraphError> {
        let ball = self.ball_with_distances(x, r);
        if ball.iter().any(|&(v, d)| self.frontier[v] && d < r) {
            return Err(GraphError::BallTruncated { center: x, radius: r });
        }
        Ok(ball.iter().map(|&(v, _)| self.pi[v]).sum())
    }

    pub fn total_mass(&self, set: &[VertexId]) -> f64 {
        set.iter().map(|&v| self.pi[v]).sum()
    }
}

/// The kernel `K(x,y) = μ_xy/π(x)` off the diagonal, with holding
/// probability `1 − Σ_y μ_xy/π(x)` on it.
#[derive(Debug, Clone)]
pub struct MarkovKernel {
    graph: Arc<WeightedGraph>,
    holding: Vec<f64>,
}

impl MarkovKernel {
    pub fn new(graph: Arc<WeightedGraph>) -> Result<Self, GraphError> {
        let mut holding = Vec::with_capacity(graph.len());
        for x in 0..graph.len() {
            let out: f64 = graph.neighbors(x).iter().map(|&(_, mu)| mu / graph.pi(x)).sum();
            let mut h = 1.0 - out;
            if h < -HOLDING_SNAP {
                return Err(GraphError::NegativeHolding {
                    vertex: graph.external_id(x),
                    excess: -h,
                });
            }
            if h.abs() <= HOLDING_SNAP {
                h = 0.0;
            }
            holding.push(h);
        }
        Ok(Self { graph, holding })
    }

    pub fn graph(&self) -> &Arc<WeightedGraph> {
        &self.graph
    }

    pub fn holding(&self, x: VertexId) -> f64 {
        self.holding[x]
    }

    pub fn prob(&self, x: VertexId, y: VertexId) -> f64 {
        if x == y {
            self.holding[x]
        } else {
            self.graph.mu(x, y) / self.graph.pi(x)
        }
    }

    /// Row `x` of the kernel including the diagonal, sorted by column.
    pub fn row(&self, x: VertexId) -> Vec<(VertexId, f64)> {
        let pi = self.graph.pi(x);
        let mut row: Vec<(VertexId, f64)> = self
            .graph
            .neighbors(x)
            .iter()
            .map(|&(y, mu)| (y, mu / pi))
            .collect();
        let pos = row.partition_point(|&(y, _)| y < x);
        row.insert(pos, (x, self.holding[x]));
        row
    }

    /// `π(x)K(x,y)`, which is `μ_xy` by construction and so symmetric exactly.
    pub fn flow(&self, x: VertexId, y: VertexId) -> f64 {
        if x == y {
            self.graph.pi(x) * self.holding[x]
        } else {
            self.graph.mu(x, y)
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EllipticityReport {
    /// Smallest `P_e` with `π(x) ≤ P_e μ_xy` on every edge.
    pub p_e: f64,
}

impl EllipticityReport {
    pub fn satisfied_at(&self, threshold: f64) -> bool {
        self.p_e <= threshold
    }
}

pub fn ellipticity(graph: &WeightedGraph) -> EllipticityReport {
    let p_e = graph
        .edges()
        .map(|(u, v, mu)| (graph.pi(u) / mu).max(graph.pi(v) / mu))
        .fold(1.0_f64, f64::max);
    EllipticityReport { p_e }
}

/// `max π(B(x,2r))/π(B(x,r))` over the supplied centers and radii.
pub fn doubling_constant(
    graph: &WeightedGraph,
    centers: &[VertexId],
    radii: &[usize],
) -> Result<f64, GraphError> {
    let mut worst = 1.0_f64;
    for &x in centers {
        for &r in radii {
            if r == 0 {
                return Err(GraphError::ZeroRadius);
            }
            let big = graph.volume(x, 2 * r)?;
            let small = graph.volume(x, r)?;
            worst = worst.max(big / small);
        }
    }
    Ok(worst)
}

/// Smallest `C` such that
/// `Σ_B |f − f_B|² π ≤ C r^θ Σ_{edges in B} |f(ξ) − f(ζ)|² μ` for every `f`
/// on `B = B(center, r)`.
///
/// The optimal constant is `1/(λ₁ r^θ)` with `λ₁` the smallest nonzero
/// eigenvalue of the Neumann problem `L f = λ Π f` on the ball.
pub fn poincare_constant(
    graph: &WeightedGraph,
    center: VertexId,
    r: usize,
    theta: f64,
) -> Result<f64, GraphError> {
    let ball = graph.ball_with_distances(center, r);
    if ball.iter().any(|&(v, d)| graph.is_frontier(v) && d < r) {
        return Err(GraphError::BallTruncated { center, radius: r });
    }
    let n = ball.len();
    if n == 1 {
        return Ok(0.0);
    }
    if n > POINCARE_DENSE_CAP {
        return Err(GraphError::BallTooLarge { size: n, cap: POINCARE_DENSE_CAP });
    }
    let local: HashMap<VertexId, usize> = ball.iter().enumerate().map(|(i, &(v, _))| (v, i)).collect();
    let inv_sqrt_pi: Vec<f64> = ball.iter().map(|&(v, _)| 1.0 / graph.pi(v).sqrt()).collect();
    // Π^{-1/2} L Π^{-1/2}
    let mut m = DMatrix::<f64>::zeros(n, n);
    for (i, &(v, _)) in ball.iter().enumerate() {
        for &(w, mu) in graph.neighbors(v) {
            if let Some(&j) = local.get(&w) {
                m[(i, i)] += mu * inv_sqrt_pi[i] * inv_sqrt_pi[i];
                m[(i, j)] -= mu * inv_sqrt_pi[i] * inv_sqrt_pi[j];
            }
        }
    }
    let mut eig: Vec<f64> = SymmetricEigen::new(m).eigenvalues.iter().copied().collect();
    eig.sort_by(|a, b| a.partial_cmp(b).unwrap());
    let lambda1 = eig[1];
    Ok(1.0 / (lambda1 * (r as f64).powf(theta)))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn path(n: usize, pi: f64, mu: f64) -> WeightedGraph {
        let mut b = GraphBuilder::new();
        for i in 0..n {
            b.vertex(VertexSpec { id: i as i64, pi, coords: Some(vec![i as i64]), frontier: false });
        }
        for i in 1..n {
            b.edge(i as i64 - 1, i as i64, mu);
        }
        b.build().unwrap()
    }

    #[test]
    fn single_edge_has_no_holding() {
        let g = Arc::new(path(2, 1.0, 1.0));
        let k = MarkovKernel::new(g).unwrap();
        assert_eq!(k.prob(0, 1), 1.0);
        assert_eq!(k.prob(0, 0), 0.0);
    }

    #[test]
    fn overweight_vertex_is_rejected() {
        let g = Arc::new(path(3, 1.0, 0.75));
        assert!(matches!(
            MarkovKernel::new(g),
            Err(GraphError::NegativeHolding { vertex: 1, .. })
        ));
    }

    #[test]
    fn conflicting_duplicate_edge_is_rejected() {
        let mut b = GraphBuilder::new();
        for i in 0..2 {
            b.vertex(VertexSpec { id: i, pi: 1.0, coords: None, frontier: false });
        }
        b.edge(0, 1, 0.5).edge(1, 0, 0.25);
        assert!(matches!(b.build(), Err(GraphError::NonSymmetricMu { .. })));
    }

    #[test]
    fn disconnected_graph_is_rejected() {
        let mut b = GraphBuilder::new();
        for i in 0..3 {
            b.vertex(VertexSpec { id: i, pi: 1.0, coords: None, frontier: false });
        }
        b.edge(0, 1, 0.5);
        assert!(matches!(b.build(), Err(GraphError::Disconnected { reached: 2, total: 3 })));
    }

    #[test]
    fn three_path_poincare_matches_neumann_gap() {
        // Neumann Laplacian of the 3-path has spectrum {0, 1, 3}.
        let g = path(3, 1.0, 1.0);
        let c = poincare_constant(&g, 1, 1, 2.0).unwrap();
        assert!((c - 1.0).abs() < 1e-12, "{c}");
    }

    #[test]
    fn degenerate_ball_has_zero_constant() {
        let g = path(3, 1.0, 0.5);
        assert_eq!(poincare_constant(&g, 1, 0, 2.0).unwrap(), 0.0);
    }

    #[test]
    fn poincare_invariant_under_common_rescaling() {
        let a = path(7, 1.0, 0.25);
        let b = path(7, 3.5, 0.875);
        let ca = poincare_constant(&a, 3, 3, 2.0).unwrap();
        let cb = poincare_constant(&b, 3, 3, 2.0).unwrap();
        assert!((ca - cb).abs() < 1e-10 * ca);
    }

    #[test]
    fn path_doubling_is_small() {
        let mut b = GraphBuilder::new();
        let n = 41;
        for i in 0..n {
            b.vertex(VertexSpec {
                id: i,
                pi: 1.0,
                coords: Some(vec![i]),
                frontier: i == 0 || i == n - 1,
            });
        }
        for i in 1..n {
            b.edge(i - 1, i, 0.25);
        }
        let g = b.build().unwrap();
        let cd = doubling_constant(&g, &[20], &[1, 2, 3, 4]).unwrap();
        // (4r+1)/(2r+1) peaks at r=4: 17/9.
        assert!((cd - 17.0 / 9.0).abs() < 1e-12);
        assert!(cd <= 2.5);
        assert!(matches!(
            doubling_constant(&g, &[3], &[2]),
            Err(GraphError::BallTruncated { .. })
        ));
    }

    #[test]
    fn ellipticity_is_worst_edge_ratio() {
        let mut b = GraphBuilder::new();
        for i in 0..3 {
            b.vertex(VertexSpec { id: i, pi: 1.0, coords: None, frontier: false });
        }
        b.edge(0, 1, 1.0 / 8.0).edge(1, 2, 1.0 / 16.0);
        let g = b.build().unwrap();
        assert_eq!(ellipticity(&g).p_e, 16.0);
        assert!(ellipticity(&g).satisfied_at(16.0));
        assert!(!ellipticity(&g).satisfied_at(15.0));
    }
}
