//! Lattice models: the line, boxes in `Z^n`, the three-player gambler's-ruin
//! triangle and punctured cubes, each as an ambient patch plus a domain, with
//! closed-form Perron-Frobenius pairs where they exist.

use std::collections::BTreeSet;
use std::f64::consts::PI;
use std::sync::Arc;

use thiserror::Error;

use crate::domain::{Domain, DomainError};
use crate::graph::{GraphBuilder, GraphError, MarkovKernel, VertexId, VertexSpec, WeightedGraph};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ModelError {
    #[error("invalid model specification: {0}")]
    SpecInvalid(String),
    #[error("no closed-form eigenpair for {0}")]
    NoClosedForm(String),
    #[error("no eigenfunction surrogate for {0}")]
    NoSurrogate(String),
    #[error(transparent)]
    Graph(#[from] GraphError),
    #[error(transparent)]
    Domain(#[from] DomainError),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ModelKind {
    /// `U = {1, …, N−1} ⊂ Z`; `μ ≡ 1/2` (no holding) or `μ ≡ 1/4` when lazy.
    Line { lazy: bool },
    /// `U = {−N, …, N}^n`, `μ ≡ 1/(4n)`.
    BoxZn,
    /// `U = {x₁ > 0, x₂ > 0, x₁+x₂ < N}` with the six gambler's-ruin moves, `μ ≡ 1/6`.
    TriangleGame,
    /// `{−N, …, N}^n` with the origin removed, `μ ≡ 1/(4n)`.
    PuncturedCube,
    /// A graph and domain loaded from a document rather than generated.
    Custom,
}

impl ModelKind {
    pub fn name(&self) -> &'static str {
        match self {
            ModelKind::Line { lazy: false } => "line",
            ModelKind::Line { lazy: true } => "line-lazy",
            ModelKind::BoxZn => "box",
            ModelKind::TriangleGame => "triangle",
            ModelKind::PuncturedCube => "punctured-cube",
            ModelKind::Custom => "custom",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ModelSpec {
    pub kind: ModelKind,
    /// Lattice dimension `n` (boxes and cubes; ignored otherwise).
    pub dim: usize,
    /// Size parameter `N`.
    pub size: usize,
    /// Layers of ambient vertices kept beyond `∂U`; `None` means `2N`.
    pub margin: Option<usize>,
}

impl ModelSpec {
    pub fn line(n: usize) -> Self {
        Self { kind: ModelKind::Line { lazy: false }, dim: 1, size: n, margin: None }
    }
    pub fn lazy_line(n: usize) -> Self {
        Self { kind: ModelKind::Line { lazy: true }, dim: 1, size: n, margin: None }
    }
    pub fn boxed(dim: usize, n: usize) -> Self {
        Self { kind: ModelKind::BoxZn, dim, size: n, margin: None }
    }
    pub fn triangle(n: usize) -> Self {
        Self { kind: ModelKind::TriangleGame, dim: 2, size: n, margin: None }
    }
    pub fn punctured_cube(dim: usize, n: usize) -> Self {
        Self { kind: ModelKind::PuncturedCube, dim, size: n, margin: None }
    }
    pub fn with_margin(self, margin: usize) -> Self {
        Self { margin: Some(margin), ..self }
    }

    pub fn margin(&self) -> usize {
        self.margin.unwrap_or(2 * self.size)
    }

    fn validate(&self) -> Result<(), ModelError> {
        let bad = |m: String| Err(ModelError::SpecInvalid(m));
        if self.margin() < 1 {
            return bad("margin must be at least 1".into());
        }
        match self.kind {
            ModelKind::Line { .. } if self.size < 2 => bad(format!("line needs N ≥ 2, got {}", self.size)),
            ModelKind::BoxZn if self.size < 1 || self.dim < 1 => {
                bad(format!("box needs n ≥ 1 and N ≥ 1, got n={} N={}", self.dim, self.size))
            }
            ModelKind::TriangleGame if self.size < 3 => {
                bad(format!("triangle needs N ≥ 3 (nonempty interior), got {}", self.size))
            }
            ModelKind::Custom => bad("custom models are loaded, not generated".into()),
            ModelKind::PuncturedCube if self.size < 1 || self.dim < 2 => {
                bad(format!("punctured cube needs n ≥ 2 and N ≥ 1, got n={} N={}", self.dim, self.size))
            }
            _ => Ok(()),
        }
    }
}

/// A generated example: ambient patch, kernel and domain.
#[derive(Debug, Clone)]
pub struct Model {
    pub spec: ModelSpec,
    pub graph: Arc<WeightedGraph>,
    pub kernel: MarkovKernel,
    pub domain: Arc<Domain>,
}

impl Model {
    pub fn vertex_at(&self, coords: &[i64]) -> Option<VertexId> {
        self.graph.by_coords(coords)
    }

    /// Local index in `U` of the vertex at `coords`.
    pub fn local_at(&self, coords: &[i64]) -> Option<usize> {
        self.vertex_at(coords).and_then(|v| self.domain.local_index(v))
    }

    pub fn coords_of_local(&self, local: usize) -> &[i64] {
        self.graph.coords(self.domain.vertex(local)).expect("model vertices carry coordinates")
    }
}

/// Builds a lattice patch from its vertex set and move set. Vertices are
/// inserted in lexicographic coordinate order, so vertex indices follow it.
pub fn lattice_patch(
    points: &BTreeSet<Vec<i64>>,
    moves: &[Vec<i64>],
    pi: f64,
    mu: f64,
) -> Result<WeightedGraph, GraphError> {
    let mut b = GraphBuilder::new();
    let ids: std::collections::HashMap<&Vec<i64>, i64> =
        points.iter().enumerate().map(|(i, c)| (c, i as i64)).collect();
    let shift = |c: &[i64], m: &[i64]| c.iter().zip(m).map(|(a, b)| a + b).collect::<Vec<i64>>();
    for c in points {
        let frontier = moves.iter().any(|m| !points.contains(&shift(c, m)));
        b.vertex(VertexSpec { id: ids[c], pi, coords: Some(c.clone()), frontier });
    }
    for c in points {
        for m in moves {
            let d = shift(c, m);
            if let Some(&j) = ids.get(&d) {
                let i = ids[c];
                if i < j {
                    b.edge(i, j, mu);
                }
            }
        }
    }
    b.build()
}

fn unit_moves(dim: usize) -> Vec<Vec<i64>> {
    let mut out = Vec::new();
    for i in 0..dim {
        for s in [-1, 1] {
            let mut m = vec![0; dim];
            m[i] = s;
            out.push(m);
        }
    }
    out
}

/// The six moves of the three-player game in `(X_A, X_B)` coordinates: a unit
/// passes between A and C, B and C, or A and B.
pub fn triangle_moves() -> Vec<Vec<i64>> {
    vec![vec![1, 0], vec![-1, 0], vec![0, 1], vec![0, -1], vec![1, -1], vec![-1, 1]]
}

fn cube(dim: usize, lo: i64, hi: i64) -> BTreeSet<Vec<i64>> {
    let mut pts = BTreeSet::new();
    let mut cur = vec![lo; dim];
    loop {
        pts.insert(cur.clone());
        let mut i = dim;
        loop {
            if i == 0 {
                return pts;
            }
            i -= 1;
            if cur[i] < hi {
                cur[i] += 1;
                for c in cur.iter_mut().skip(i + 1) {
                    *c = lo;
                }
                break;
            }
        }
    }
}

pub fn generate(spec: ModelSpec) -> Result<Model, ModelError> {
    spec.validate()?;
    let n = spec.size as i64;
    let m = spec.margin() as i64;
    let (graph, u_coords): (WeightedGraph, Vec<Vec<i64>>) = match spec.kind {
        ModelKind::Line { lazy } => {
            let pts = (-m..=n + m).map(|k| vec![k]).collect();
            let mu = if lazy { 0.25 } else { 0.5 };
            let g = lattice_patch(&pts, &unit_moves(1), 1.0, mu)?;
            (g, (1..n).map(|k| vec![k]).collect())
        }
        ModelKind::BoxZn => {
            let pts = cube(spec.dim, -(n + 1 + m), n + 1 + m);
            let g = lattice_patch(&pts, &unit_moves(spec.dim), 1.0, 1.0 / (4.0 * spec.dim as f64))?;
            (g, cube(spec.dim, -n, n).into_iter().collect())
        }
        ModelKind::PuncturedCube => {
            let pts = cube(spec.dim, -(n + 1 + m), n + 1 + m);
            let g = lattice_patch(&pts, &unit_moves(spec.dim), 1.0, 1.0 / (4.0 * spec.dim as f64))?;
            let u = cube(spec.dim, -n, n).into_iter().filter(|c| c.iter().any(|&v| v != 0)).collect();
            (g, u)
        }
        ModelKind::Custom => unreachable!("rejected by validate"),
        ModelKind::TriangleGame => {
            let mut pts = BTreeSet::new();
            for x1 in -m..=n + 2 * m {
                for x2 in -m..=n + 2 * m {
                    if x1 + x2 <= n + m {
                        pts.insert(vec![x1, x2]);
                    }
                }
            }
            let g = lattice_patch(&pts, &triangle_moves(), 1.0, 1.0 / 6.0)?;
            let mut u = Vec::new();
            for x1 in 1..n {
                for x2 in 1..n - x1 {
                    u.push(vec![x1, x2]);
                }
            }
            (g, u)
        }
    };
    let graph = Arc::new(graph);
    let kernel = MarkovKernel::new(graph.clone())?;
    let u: Vec<VertexId> = u_coords.iter().map(|c| graph.by_coords(c).expect("U inside patch")).collect();
    let domain = Arc::new(Domain::new(graph.clone(), &u)?);
    Ok(Model { spec, graph, kernel, domain })
}

/// Closed-form Perron-Frobenius pair, `phi0` indexed by local index and
/// normalized numerically so that `π(φ₀²) = 1`.
#[derive(Debug, Clone, PartialEq)]
pub struct ClosedFormEigen {
    pub beta0: f64,
    pub phi0: Vec<f64>,
    pub valid: bool,
}

pub fn closed_form_eigen(model: &Model) -> Result<ClosedFormEigen, ModelError> {
    let n = model.spec.size as f64;
    let (beta0, f): (f64, Box<dyn Fn(&[i64]) -> f64>) = match model.spec.kind {
        ModelKind::Line { lazy } => {
            let b = (PI / n).cos();
            let beta = if lazy { 0.5 * (1.0 + b) } else { b };
            (beta, Box::new(move |c: &[i64]| (PI * c[0] as f64 / n).sin()))
        }
        ModelKind::BoxZn => {
            let w = PI / (2.0 * (n + 1.0));
            (
                0.5 * (1.0 + w.cos()),
                Box::new(move |c: &[i64]| c.iter().map(|&x| (w * x as f64).cos()).product()),
            )
        }
        ModelKind::TriangleGame => {
            let w = 2.0 * PI / n;
            (
                (1.0 + 2.0 * w.cos()) / 3.0,
                Box::new(move |c: &[i64]| {
                    let (a, b) = (c[0] as f64, c[1] as f64);
                    (w * a).sin() + (w * b).sin() - (w * (a + b)).sin()
                }),
            )
        }
        ModelKind::PuncturedCube | ModelKind::Custom => {
            return Err(ModelError::NoClosedForm(model.spec.kind.name().into()))
        }
    };
    let d = &model.domain;
    let g = &model.graph;
    let mut phi: Vec<f64> = (0..d.len()).map(|i| f(model.coords_of_local(i))).collect();
    let norm = phi
        .iter()
        .enumerate()
        .map(|(i, v)| v * v * g.pi(d.vertex(i)))
        .sum::<f64>()
        .sqrt();
    phi.iter_mut().for_each(|v| *v /= norm);
    let valid = phi.iter().all(|&v| v > 0.0);
    Ok(ClosedFormEigen { beta0, phi0: phi, valid })
}

/// Comparison profile for `φ₀` (not an eigenfunction): the product formula
/// for the triangle and the dimension-dependent profiles for punctured cubes.
pub fn phi0_surrogate(spec: &ModelSpec, x: &[i64]) -> Result<f64, ModelError> {
    let n = spec.size as f64;
    match spec.kind {
        ModelKind::TriangleGame => {
            let (a, b) = (x[0] as f64, x[1] as f64);
            Ok(a * b * (a + b) * (n - a) * (n - b) * (n - a - b) / n.powi(7))
        }
        ModelKind::PuncturedCube => {
            let dim = spec.dim as i32;
            let l1: f64 = x.iter().map(|v| v.abs() as f64).sum();
            let face: f64 = x.iter().map(|&v| 1.0 - v.abs() as f64 / (n + 1.0)).product();
            if dim >= 3 {
                Ok(n.powf(-(dim as f64) / 2.0) * (1.0 - (1.0 + l1).powi(-(dim - 2))) * face)
            } else {
                Ok(face / n * (1.0 + l1).ln() / (1.0 + n).ln())
            }
        }
        _ => Err(ModelError::NoSurrogate(spec.kind.name().into())),
    }
}

/// The box `{−N, …, N}²` cut along the segment `{(k, 0): −N ≤ k ≤ 0}`. The slit
/// tip `(0, 0)` is a boundary vertex reached from three sides.
pub fn slit_box(size: usize) -> Result<Model, ModelError> {
    let spec = ModelSpec::boxed(2, size);
    let mut model = generate(spec)?;
    let n = size as i64;
    let u: Vec<VertexId> = model
        .domain
        .members()
        .iter()
        .copied()
        .filter(|&v| {
            let c = model.graph.coords(v).unwrap();
            !(c[1] == 0 && c[0] <= 0 && c[0] >= -n)
        })
        .collect();
    model.domain = Arc::new(Domain::new(model.graph.clone(), &u)?);
    Ok(model)
}
