//! The killed kernel `K_U`, its Green's function, the Poisson kernel
//! (harmonic measure) and time-bounded exit probabilities.
//!
//! All linear algebra runs on the symmetrized matrix
//! `M = D^{1/2} K_U D^{-1/2}` (`D = diag π`), which is symmetric by detailed
//! balance; `I − M` is positive definite whenever `∂U` is nonempty.

use std::sync::Arc;

use nalgebra::DMatrix;
use rayon::prelude::*;
use thiserror::Error;

use crate::domain::{Domain, DomainError, HalfEdge};
use crate::graph::{MarkovKernel, VertexId};
use crate::linalg::{Csr, SolveError, SolverConfig, SpdSolver};

/// Agreement demanded between the two Poisson-kernel formulas.
pub const ROUTE_CHECK_TOL: f64 = 1e-12;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum AbsorbingError {
    #[error(transparent)]
    Solve(#[from] SolveError),
    #[error(transparent)]
    Domain(#[from] DomainError),
    #[error("Green and normal-derivative forms disagree by {diff:e} at source {x}, boundary {y}")]
    RouteMismatch { x: VertexId, y: VertexId, diff: f64 },
    #[error("time horizon must be at least 1")]
    InvalidHorizon,
}

/// `K_U(x,y) = K(x,y) 1_U(x) 1_U(y)` on local indices.
#[derive(Debug, Clone)]
pub struct SubKernel {
    domain: Arc<Domain>,
    kernel: MarkovKernel,
    matrix: Csr,
    sym: Csr,
    pi: Vec<f64>,
    sqrt_pi: Vec<f64>,
    defect: Vec<f64>,
}

impl SubKernel {
    pub fn new(kernel: &MarkovKernel, domain: Arc<Domain>) -> Self {
        let g = domain.graph().clone();
        let n = domain.len();
        let pi: Vec<f64> = domain.members().iter().map(|&v| g.pi(v)).collect();
        let sqrt_pi: Vec<f64> = pi.iter().map(|p| p.sqrt()).collect();
        let mut rows = Vec::with_capacity(n);
        let mut sym_rows = Vec::with_capacity(n);
        let mut defect = Vec::with_capacity(n);
        for (i, &v) in domain.members().iter().enumerate() {
            let mut row = Vec::new();
            let mut srow = Vec::new();
            let mut sum = 0.0;
            for (w, p) in kernel.row(v) {
                if let Some(j) = domain.local_index(w) {
                    if p != 0.0 {
                        row.push((j, p));
                        // μ_vw/√(π_v π_w) off the diagonal
                        srow.push((j, kernel.flow(v, w) / (sqrt_pi[i] * sqrt_pi[j])));
                        sum += p;
                    }
                }
            }
            defect.push((1.0 - sum).max(0.0));
            rows.push(row);
            sym_rows.push(srow);
        }
        Self {
            domain,
            kernel: kernel.clone(),
            matrix: Csr::from_rows(rows),
            sym: Csr::from_rows(sym_rows),
            pi,
            sqrt_pi,
            defect,
        }
    }

    pub fn domain(&self) -> &Arc<Domain> {
        &self.domain
    }

    pub fn kernel(&self) -> &MarkovKernel {
        &self.kernel
    }

    pub fn len(&self) -> usize {
        self.pi.len()
    }

    pub fn is_empty(&self) -> bool {
        self.pi.is_empty()
    }

    pub fn matrix(&self) -> &Csr {
        &self.matrix
    }

    /// `D^{1/2} K_U D^{-1/2}`.
    pub fn symmetrized(&self) -> &Csr {
        &self.sym
    }

    /// `π` restricted to `U`, by local index.
    pub fn pi(&self) -> &[f64] {
        &self.pi
    }

    pub fn sqrt_pi(&self) -> &[f64] {
        &self.sqrt_pi
    }

    /// `1 − Σ_y K_U(x, y)` by local index.
    pub fn defect(&self) -> &[f64] {
        &self.defect
    }

    pub fn entry(&self, x: usize, y: usize) -> f64 {
        self.matrix.get(x, y)
    }

    /// `K(z, y)` for a half-edge `(z, y)`.
    pub fn exit_step(&self, h: HalfEdge) -> f64 {
        self.kernel.prob(h.inner, h.outer)
    }

    /// Row-vector step `out = v K_U` (evolves a distribution).
    pub fn push_forward(&self, v: &[f64], out: &mut [f64]) {
        self.matrix.vec_mul(v, out);
    }

    /// Column step `out = K_U f` (evolves a function).
    pub fn apply(&self, f: &[f64], out: &mut [f64]) {
        self.matrix.mul_vec(f, out);
    }

    /// `I − M`, the symmetric positive-definite system matrix.
    fn system(&self) -> Csr {
        let rows = (0..self.len())
            .map(|i| {
                let mut row: Vec<(usize, f64)> = self.sym.row(i).map(|(j, v)| (j, -v)).collect();
                match row.iter_mut().find(|(j, _)| *j == i) {
                    Some(e) => e.1 += 1.0,
                    None => row.push((i, 1.0)),
                }
                row
            })
            .collect();
        Csr::from_rows(rows)
    }
}

/// `G_U = Σ_t K_U^t = (I − K_U)^{-1}`, kept as a factored (or iterative)
/// solver; rows and columns are produced on demand.
#[derive(Debug, Clone)]
pub struct GreensFunction {
    solver: SpdSolver,
    sqrt_pi: Vec<f64>,
}

impl GreensFunction {
    pub fn new(sub: &SubKernel, config: SolverConfig) -> Result<Self, AbsorbingError> {
        let solver = SpdSolver::new(sub.system(), config)?;
        Ok(Self { solver, sqrt_pi: sub.sqrt_pi.clone() })
    }

    /// `(I − K_U)^{-1} b`.
    pub fn solve(&self, b: &[f64]) -> Result<Vec<f64>, AbsorbingError> {
        let rhs: Vec<f64> = b.iter().zip(&self.sqrt_pi).map(|(v, s)| v * s).collect();
        let w = self.solver.solve(&rhs)?;
        Ok(w.iter().zip(&self.sqrt_pi).map(|(v, s)| v / s).collect())
    }

    /// `w = (I − M)^{-1} e_x`, from which both row and column of `G` follow.
    fn unit_solve(&self, x: usize) -> Result<Vec<f64>, AbsorbingError> {
        let mut e = vec![0.0; self.sqrt_pi.len()];
        e[x] = 1.0;
        Ok(self.solver.solve(&e)?)
    }

    /// `G_U(x, ·)`.
    pub fn row(&self, x: usize) -> Result<Vec<f64>, AbsorbingError> {
        let w = self.unit_solve(x)?;
        let sx = self.sqrt_pi[x];
        Ok(w.iter().zip(&self.sqrt_pi).map(|(v, s)| v * s / sx).collect())
    }

    /// `G_U(·, z)`.
    pub fn column(&self, z: usize) -> Result<Vec<f64>, AbsorbingError> {
        let w = self.unit_solve(z)?;
        let sz = self.sqrt_pi[z];
        Ok(w.iter().zip(&self.sqrt_pi).map(|(v, s)| v * sz / s).collect())
    }

    /// `g_U(x, ·) = G_U(x, ·)/π`.
    pub fn density_row(&self, x: usize) -> Result<Vec<f64>, AbsorbingError> {
        let w = self.unit_solve(x)?;
        let sx = self.sqrt_pi[x];
        Ok(w.iter().zip(&self.sqrt_pi).map(|(v, s)| v / (s * sx)).collect())
    }

    /// The full matrix `G_U`, for small domains.
    pub fn full(&self) -> Result<DMatrix<f64>, AbsorbingError> {
        let n = self.sqrt_pi.len();
        let rows: Vec<Vec<f64>> = (0..n).into_par_iter().map(|x| self.row(x)).collect::<Result<_, _>>()?;
        Ok(DMatrix::from_fn(n, n, |i, j| rows[i][j]))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum BoundaryKind {
    Outer,
    Extended,
}

/// `P_U(x, ·)` or `P_U(t, x, ·)` over `∂U` or `∂*U`.
#[derive(Debug, Clone, PartialEq)]
pub struct ExitDistribution {
    pub source: VertexId,
    /// `None` for `t = ∞`.
    pub horizon: Option<usize>,
    pub over: BoundaryKind,
    /// For `Outer`, `inner` is the outer vertex repeated.
    pub points: Vec<HalfEdge>,
    pub probs: Vec<f64>,
    /// `p_U = P_U/π(y)`.
    pub densities: Vec<f64>,
}

impl ExitDistribution {
    pub fn total(&self) -> f64 {
        self.probs.iter().sum()
    }

    /// Probability of exiting at outer vertex `y` (summed over half-edges).
    pub fn at(&self, y: VertexId) -> f64 {
        self.points.iter().zip(&self.probs).filter(|(h, _)| h.outer == y).map(|(_, p)| p).sum()
    }

    /// Probability of exiting through half-edge `h`.
    pub fn at_half_edge(&self, h: HalfEdge) -> Option<f64> {
        self.points.iter().position(|p| *p == h).map(|i| self.probs[i])
    }

    /// Sums half-edge masses over `ν(y)`.
    pub fn contract(&self, domain: &Domain) -> ExitDistribution {
        if self.over == BoundaryKind::Outer {
            return self.clone();
        }
        let g = domain.graph();
        let points: Vec<HalfEdge> =
            domain.outer_boundary().iter().map(|&y| HalfEdge { inner: y, outer: y }).collect();
        let probs: Vec<f64> = domain.outer_boundary().iter().map(|&y| self.at(y)).collect();
        let densities = points.iter().zip(&probs).map(|(h, p)| p / g.pi(h.outer)).collect();
        ExitDistribution { source: self.source, horizon: self.horizon, over: BoundaryKind::Outer, points, probs, densities }
    }
}

fn assemble(
    sub: &SubKernel,
    x: usize,
    horizon: Option<usize>,
    over: BoundaryKind,
    mass: &[f64],
) -> ExitDistribution {
    let d = sub.domain();
    let g = d.graph();
    let (points, probs): (Vec<HalfEdge>, Vec<f64>) = match over {
        BoundaryKind::Extended => d
            .extended_boundary()
            .iter()
            .map(|&h| (h, mass[d.local_index(h.inner).unwrap()] * sub.exit_step(h)))
            .unzip(),
        BoundaryKind::Outer => d
            .outer_boundary()
            .iter()
            .map(|&y| {
                let p: f64 = d
                    .nu(y)
                    .unwrap()
                    .iter()
                    .map(|&z| mass[d.local_index(z).unwrap()] * sub.kernel().prob(z, y))
                    .sum();
                (HalfEdge { inner: y, outer: y }, p)
            })
            .unzip(),
    };
    let densities = points.iter().zip(&probs).map(|(h, p)| p / g.pi(h.outer)).collect();
    ExitDistribution { source: d.vertex(x), horizon, over, points, probs, densities }
}

/// `P_U(x, y) = Σ_{z∈ν(y)} G_U(x,z) K(z,y)`, cross-checked against the
/// normal-derivative form `p_U(x,y) = ∂g_U(x,·)/∂ν(y)`.
pub fn poisson_kernel(
    sub: &SubKernel,
    greens: &GreensFunction,
    x: usize,
    over: BoundaryKind,
) -> Result<ExitDistribution, AbsorbingError> {
    let g_row = greens.row(x)?;
    let dist = assemble(sub, x, None, over, &g_row);

    let d = sub.domain();
    let graph = d.graph();
    let dens = greens.density_row(x)?;
    for &y in d.outer_boundary() {
        let via_green = dist.at(y);
        let via_normal = normal_derivative(d, |v| d.local_index(v).map_or(0.0, |i| dens[i]), y)? * graph.pi(y);
        let diff = (via_green - via_normal).abs();
        if diff > ROUTE_CHECK_TOL {
            return Err(AbsorbingError::RouteMismatch { x: d.vertex(x), y, diff });
        }
    }
    Ok(dist)
}

/// Poisson kernel from every source, in local-index order.
pub fn poisson_matrix(
    sub: &SubKernel,
    greens: &GreensFunction,
    over: BoundaryKind,
) -> Result<Vec<ExitDistribution>, AbsorbingError> {
    (0..sub.len()).into_par_iter().map(|x| poisson_kernel(sub, greens, x, over)).collect()
}

/// `P_U(t, x, y) = Σ_{z∈ν(y)} Σ_{ℓ<t} K_U^ℓ(x,z) K(z,y)` by `t−1` sparse steps.
pub fn exit_by_time(sub: &SubKernel, x: usize, t: usize, over: BoundaryKind) -> Result<ExitDistribution, AbsorbingError> {
    Ok(exit_profile(sub, x, &[t], over)?.pop().unwrap())
}

/// `P_U(t, x, ·)` at several horizons from one sweep; horizons must be ≥ 1.
pub fn exit_profile(
    sub: &SubKernel,
    x: usize,
    horizons: &[usize],
    over: BoundaryKind,
) -> Result<Vec<ExitDistribution>, AbsorbingError> {
    if horizons.contains(&0) {
        return Err(AbsorbingError::InvalidHorizon);
    }
    let n = sub.len();
    let t_max = horizons.iter().copied().max().unwrap_or(1);
    let mut v = vec![0.0; n];
    v[x] = 1.0;
    let mut next = vec![0.0; n];
    let mut acc = vec![0.0; n];
    let mut snapshots = std::collections::BTreeMap::new();
    for ell in 0..t_max {
        acc.iter_mut().zip(&v).for_each(|(a, b)| *a += b);
        if horizons.contains(&(ell + 1)) {
            snapshots.insert(ell + 1, assemble(sub, x, Some(ell + 1), over, &acc));
        }
        if ell + 1 < t_max {
            sub.push_forward(&v, &mut next);
            std::mem::swap(&mut v, &mut next);
        }
    }
    Ok(horizons.iter().map(|t| snapshots[t].clone()).collect())
}

/// Interior normal derivative `Σ_{x∈ν(y)} (f(x) − f(y)) μ_xy/π(y)`.
pub fn normal_derivative(domain: &Domain, f: impl Fn(VertexId) -> f64, y: VertexId) -> Result<f64, DomainError> {
    let g = domain.graph();
    let fy = f(y);
    Ok(domain.nu(y)?.iter().map(|&x| (f(x) - fy) * g.mu(x, y) / g.pi(y)).sum())
}

/// `h(x) = P_x(X_{τ_U} ∈ targets)` for every `x ∈ U`.
pub fn harmonic_measure_of_set(
    sub: &SubKernel,
    greens: &GreensFunction,
    targets: &[VertexId],
) -> Result<Vec<f64>, AbsorbingError> {
    let d = sub.domain();
    let mut b = vec![0.0; sub.len()];
    for &y in targets {
        for &z in d.nu(y)? {
            b[d.local_index(z).unwrap()] += sub.kernel().prob(z, y);
        }
    }
    greens.solve(&b)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::models::{generate, ModelSpec};

    fn setup(spec: ModelSpec) -> (crate::models::Model, SubKernel, GreensFunction) {
        let m = generate(spec).unwrap();
        let sub = SubKernel::new(&m.kernel, m.domain.clone());
        let g = GreensFunction::new(&sub, SolverConfig::default()).unwrap();
        (m, sub, g)
    }

    #[test]
    fn line_four_green_and_exit() {
        let (m, sub, g) = setup(ModelSpec::line(4));
        let two = m.local_at(&[2]).unwrap();
        assert!((g.row(two).unwrap()[two] - 2.0).abs() < 1e-14);
        let one = m.local_at(&[1]).unwrap();
        let p = poisson_kernel(&sub, &g, one, BoundaryKind::Outer).unwrap();
        assert!((p.at(m.vertex_at(&[4]).unwrap()) - 0.25).abs() < 1e-14);
        assert!((p.total() - 1.0).abs() < 1e-14);
        let t2 = exit_by_time(&sub, two, 2, BoundaryKind::Outer).unwrap();
        assert!((t2.at(m.vertex_at(&[0]).unwrap()) - 0.25).abs() < 1e-15);
    }

    #[test]
    fn line_two_single_vertex() {
        let (_, _, g) = setup(ModelSpec::line(2));
        assert_eq!(g.row(0).unwrap(), vec![1.0]);
    }

    #[test]
    fn box_corner_defect() {
        let (m, sub, _) = setup(ModelSpec::boxed(2, 1));
        let c = m.local_at(&[1, 1]).unwrap();
        assert!((sub.defect()[c] - 0.25).abs() < 1e-15);
        let center = m.local_at(&[0, 0]).unwrap();
        assert_eq!(sub.defect()[center], 0.0);
    }

    #[test]
    fn neumann_series_matches_solve() {
        let (_, sub, g) = setup(ModelSpec::boxed(2, 3));
        let n = sub.len();
        let full = g.full().unwrap();
        for x in [0, n / 2, n - 1] {
            let mut v = vec![0.0; n];
            v[x] = 1.0;
            let mut acc = vec![0.0; n];
            let mut next = vec![0.0; n];
            for _ in 0..10_000 {
                acc.iter_mut().zip(&v).for_each(|(a, b)| *a += b);
                sub.push_forward(&v, &mut next);
                std::mem::swap(&mut v, &mut next);
            }
            for z in 0..n {
                assert!((acc[z] - full[(x, z)]).abs() < 1e-8);
            }
        }
    }

    #[test]
    fn timed_exit_is_zero_before_reaching_and_monotone() {
        let (m, sub, g) = setup(ModelSpec::boxed(2, 4));
        let o = m.local_at(&[0, 0]).unwrap();
        let prof = exit_profile(&sub, o, &[1, 4, 5, 6, 50, 2000], BoundaryKind::Outer).unwrap();
        // the face is 5 steps from the center
        assert_eq!(prof[1].total(), 0.0);
        assert!(prof[2].total() > 0.0);
        for w in prof.windows(2) {
            for (a, b) in w[0].probs.iter().zip(&w[1].probs) {
                assert!(a <= b);
            }
        }
        let inf = poisson_kernel(&sub, &g, o, BoundaryKind::Outer).unwrap();
        for (a, b) in prof[5].probs.iter().zip(&inf.probs) {
            assert!((a - b).abs() < 1e-9);
        }
    }

    #[test]
    fn extended_contracts_to_outer() {
        let (m, sub, g) = setup(ModelSpec::triangle(7));
        let x = m.local_at(&[2, 3]).unwrap();
        let ext = poisson_kernel(&sub, &g, x, BoundaryKind::Extended).unwrap();
        let out = poisson_kernel(&sub, &g, x, BoundaryKind::Outer).unwrap();
        let c = ext.contract(&m.domain);
        assert_eq!(c.points, out.points);
        for (a, b) in c.probs.iter().zip(&out.probs) {
            assert!((a - b).abs() < 1e-15);
        }
    }

    #[test]
    fn normal_derivative_basics() {
        let (m, _, _) = setup(ModelSpec::boxed(2, 2));
        let y = m.vertex_at(&[3, 0]).unwrap();
        assert_eq!(normal_derivative(&m.domain, |_| 4.2, y).unwrap(), 0.0);
        let z = m.vertex_at(&[2, 0]).unwrap();
        let v = normal_derivative(&m.domain, |w| if w == z { 1.0 } else { 0.0 }, y).unwrap();
        assert_eq!(v, 0.125);
    }
}
