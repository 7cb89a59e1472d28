//! Eigen-analysis of `K_U`: dense decompositions, the Perron-Frobenius pair
//! by power iteration, and the spectral sums for `k^t_U`, `g_U` and the box
//! Poisson kernel.
//!
//! Everything is computed on `M = D^{1/2} K_U D^{-1/2}`; an orthonormal
//! eigenvector `v` of `M` maps back to `φ = v/√π` with `π(φ²) = 1`.
//!
//! The Green's-function sum `Σ (1−β_i)^{-1} φ_i(x)φ_i(y)` is exact, but its
//! terms are of comparable size and alternate in sign, so positivity of `g_U`
//! (or of the Poisson kernel) is not visible from any partial sum.

use nalgebra::{DMatrix, SymmetricEigen};
use thiserror::Error;

use crate::absorbing::{BoundaryKind, ExitDistribution, SubKernel};
use crate::models::{Model, ModelKind};

pub const DENSE_EIGEN_CAP: usize = 4000;
/// Eigen-residual `‖Mv − βv‖` at which power iteration stops.
pub const PERRON_TOL: f64 = 1e-12;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum SpectralError {
    #[error("{size} unknowns exceed the dense eigensolver cap of {cap}")]
    TooLargeForDense { size: usize, cap: usize },
    #[error(
        "power iteration did not converge in {iterations} steps (residual {residual:e}, estimated gap {gap_estimate:e})"
    )]
    NoConvergence { iterations: usize, residual: f64, gap_estimate: f64 },
    #[error("Perron eigenvector is not strictly positive at local index {index}")]
    NonPositive { index: usize },
    #[error("box spectral formula needs a two-dimensional box and a point on the right face")]
    NotRightFace,
}

impl SpectralError {
    pub fn is_numerical(&self) -> bool {
        matches!(self, SpectralError::NoConvergence { .. } | SpectralError::NonPositive { .. })
    }
}

/// All eigenpairs of `K_U`, eigenvalues descending.
#[derive(Debug, Clone)]
pub struct EigenDecomposition {
    pub betas: Vec<f64>,
    /// Column `i` holds `φ_i` on local indices.
    pub phis: DMatrix<f64>,
    pi: Vec<f64>,
}

impl EigenDecomposition {
    pub fn len(&self) -> usize {
        self.betas.len()
    }

    pub fn is_empty(&self) -> bool {
        self.betas.is_empty()
    }

    pub fn phi(&self, i: usize) -> Vec<f64> {
        self.phis.column(i).iter().copied().collect()
    }

    pub fn top_pair(&self) -> PerronPair {
        PerronPair::new(self.betas[0], self.phi(0), 0.0, 0)
    }

    /// `|⟨φ_i, φ_j⟩_π − δ_ij|` maximised over all pairs.
    pub fn orthonormality_error(&self) -> f64 {
        let n = self.len();
        let weighted = DMatrix::from_fn(n, n, |r, c| self.phis[(r, c)] * self.pi[r]);
        let gram = self.phis.transpose() * weighted;
        let mut worst = 0.0f64;
        for i in 0..n {
            for j in 0..n {
                let target = if i == j { 1.0 } else { 0.0 };
                worst = worst.max((gram[(i, j)] - target).abs());
            }
        }
        worst
    }
}

/// `(β₀, φ₀)` with `φ₀ > 0`, `π(φ₀²) = 1`, plus `T_U = 1/(1−β₀)`.
#[derive(Debug, Clone, PartialEq)]
pub struct PerronPair {
    pub beta0: f64,
    /// By local index.
    pub phi0: Vec<f64>,
    pub t_u: f64,
    /// Final eigen-residual `‖K_U φ₀ − β₀φ₀‖` in `L²(π)`.
    pub residual: f64,
    pub iterations: usize,
}

impl PerronPair {
    pub fn new(beta0: f64, phi0: Vec<f64>, residual: f64, iterations: usize) -> Self {
        Self { beta0, phi0, t_u: 1.0 / (1.0 - beta0), residual, iterations }
    }

    /// `π(φ₀)`.
    pub fn phi_mass(&self, sub: &SubKernel) -> f64 {
        self.phi0.iter().zip(sub.pi()).map(|(f, p)| f * p).sum()
    }

    /// `max_x φ₀(x)` and a vertex attaining it.
    pub fn max(&self) -> (usize, f64) {
        self.phi0.iter().copied().enumerate().fold((0, f64::MIN), |a, b| if b.1 > a.1 { b } else { a })
    }
}

fn symmetric_dense(sub: &SubKernel) -> DMatrix<f64> {
    let mut m = sub.symmetrized().to_dense();
    // restore exact symmetry lost to rounding in the two scaled entries
    let n = m.nrows();
    for i in 0..n {
        for j in (i + 1)..n {
            let v = 0.5 * (m[(i, j)] + m[(j, i)]);
            m[(i, j)] = v;
            m[(j, i)] = v;
        }
    }
    m
}

pub fn full_decomposition(sub: &SubKernel) -> Result<EigenDecomposition, SpectralError> {
    let n = sub.len();
    if n > DENSE_EIGEN_CAP {
        return Err(SpectralError::TooLargeForDense { size: n, cap: DENSE_EIGEN_CAP });
    }
    let eig = SymmetricEigen::new(symmetric_dense(sub));
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&a, &b| eig.eigenvalues[b].total_cmp(&eig.eigenvalues[a]));
    let betas: Vec<f64> = order.iter().map(|&i| eig.eigenvalues[i]).collect();
    let sq = sub.sqrt_pi();
    let mut phis = DMatrix::zeros(n, n);
    for (c, &i) in order.iter().enumerate() {
        let col = eig.eigenvectors.column(i);
        let norm = col.norm();
        // sign: make the largest-magnitude entry positive, and φ₀ positive overall
        let sum: f64 = col.iter().sum();
        let sign = if sum < 0.0 { -1.0 } else { 1.0 };
        for r in 0..n {
            phis[(r, c)] = sign * col[r] / (norm * sq[r]);
        }
    }
    Ok(EigenDecomposition { betas, phis, pi: sub.pi().to_vec() })
}

/// Power iteration on `M + cI`, `c = max(0, 1 − 2·min_x K_U(x,x))`, which
/// makes the iteration matrix positive semidefinite so bipartite chains
/// (spectrum symmetric about 0) still converge to the top eigenvector.
pub fn perron_pair(sub: &SubKernel) -> Result<PerronPair, SpectralError> {
    perron_pair_with_cap(sub, default_cap(sub.len()))
}

fn default_cap(n: usize) -> usize {
    (2_000 * n).clamp(200_000, 5_000_000)
}

pub fn perron_pair_with_cap(sub: &SubKernel, cap: usize) -> Result<PerronPair, SpectralError> {
    let m = sub.symmetrized();
    let n = sub.len();
    let min_hold = (0..n).map(|i| m.get(i, i)).fold(f64::INFINITY, f64::min);
    let shift = (1.0 - 2.0 * min_hold).max(0.0);
    let norm = |v: &[f64]| v.iter().map(|a| a * a).sum::<f64>().sqrt();

    let mut v = vec![1.0 / (n as f64).sqrt(); n];
    let mut mv = vec![0.0; n];
    let mut residual = f64::INFINITY;
    let mut prev_residual = f64::INFINITY;
    let mut ratio = 1.0;
    let mut beta = 0.0;
    let mut polish_from: Option<(usize, f64)> = None;
    let mut polish_mark = f64::INFINITY;
    for it in 0..cap {
        m.mul_vec(&v, &mut mv);
        beta = v.iter().zip(&mv).map(|(a, b)| a * b).sum::<f64>();
        residual = v.iter().zip(&mv).map(|(a, b)| (b - beta * a).powi(2)).sum::<f64>().sqrt();
        if residual <= PERRON_TOL && polish_from.is_none() {
            polish_from = Some((it, residual));
        }
        if let Some((start, at_start)) = polish_from {
            // keep going while the residual still drops, so the pair is as
            // accurate as rounding allows (entrywise ratios K_Uφ₀/φ₀ need it)
            let stalled = it >= start + 64 && residual > 0.99 * polish_mark;
            if stalled || it >= start + start / 4 + 256 || residual <= 1e-3 * at_start {
                return finish(sub, beta, v, residual, it);
            }
            if (it - start) % 64 == 0 {
                polish_mark = residual;
            }
        }
        if it > 0 && prev_residual.is_finite() {
            ratio = 0.9 * ratio + 0.1 * (residual / prev_residual);
        }
        prev_residual = residual;
        for (a, b) in v.iter_mut().zip(&mv) {
            *a = b + shift * *a;
        }
        let nv = norm(&v);
        v.iter_mut().for_each(|a| *a /= nv);
    }
    if polish_from.is_some() {
        return finish(sub, beta, v, residual, cap);
    }
    // successive residuals shrink by (β₁+c)/(β₀+c)
    let gap_estimate = ((1.0 - ratio) * (beta + shift)).max(0.0);
    Err(SpectralError::NoConvergence { iterations: cap, residual, gap_estimate })
}

fn finish(sub: &SubKernel, beta: f64, v: Vec<f64>, residual: f64, iterations: usize) -> Result<PerronPair, SpectralError> {
    let phi: Vec<f64> = v.iter().zip(sub.sqrt_pi()).map(|(a, s)| a / s).collect();
    if let Some(index) = phi.iter().position(|&f| f <= 0.0) {
        return Err(SpectralError::NonPositive { index });
    }
    Ok(PerronPair::new(beta, phi, residual, iterations))
}

/// `k^t_U(x,y) = Σ_i β_i^t φ_i(x)φ_i(y)`.
pub fn spectral_heat_kernel(decomp: &EigenDecomposition, t: u32, x: usize, y: usize) -> f64 {
    let t = t as i32;
    (0..decomp.len()).map(|i| decomp.betas[i].powi(t) * decomp.phis[(x, i)] * decomp.phis[(y, i)]).sum()
}

/// `g_U(x,y) = Σ_i (1−β_i)^{-1} φ_i(x)φ_i(y)`.
pub fn spectral_greens(decomp: &EigenDecomposition, x: usize, y: usize) -> f64 {
    (0..decomp.len()).map(|i| decomp.phis[(x, i)] * decomp.phis[(y, i)] / (1.0 - decomp.betas[i])).sum()
}

/// `P_U(x, y*_z) = g_U(x,z) μ_zy` with `g_U` from the eigen-expansion.
pub fn spectral_poisson(
    decomp: &EigenDecomposition,
    sub: &SubKernel,
    x: usize,
    over: BoundaryKind,
) -> ExitDistribution {
    let d = sub.domain();
    let g = d.graph();
    let weights: Vec<f64> = (0..decomp.len()).map(|i| decomp.phis[(x, i)] / (1.0 - decomp.betas[i])).collect();
    let density = |z: usize| -> f64 { (0..decomp.len()).map(|i| weights[i] * decomp.phis[(z, i)]).sum() };
    let points = d.extended_boundary().to_vec();
    let probs: Vec<f64> =
        points.iter().map(|h| density(d.local_index(h.inner).unwrap()) * g.mu(h.inner, h.outer)).collect();
    let densities = points.iter().zip(&probs).map(|(h, p)| p / g.pi(h.outer)).collect();
    let dist = ExitDistribution {
        source: d.vertex(x),
        horizon: None,
        over: BoundaryKind::Extended,
        points,
        probs,
        densities,
    };
    match over {
        BoundaryKind::Extended => dist,
        BoundaryKind::Outer => dist.contract(d),
    }
}

/// Value of the box double sum, with the largest partial-sum magnitude seen
/// along the way (row-major over `(a, b)`).
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BoxPoissonSum {
    pub value: f64,
    pub max_partial_abs: f64,
    pub terms: usize,
}

/// `ψ_a(k)`: cosine for odd `a`, sine for even `a`.
pub fn box_psi(n: usize, a: usize, k: i64) -> f64 {
    let arg = a as f64 * k as f64 * std::f64::consts::PI / (2.0 * (n as f64 + 1.0));
    if a % 2 == 1 {
        arg.cos()
    } else {
        arg.sin()
    }
}

/// `P_U((x₁,x₂), (N+1, y₂))` for the lazy box `{−N…N}²` from its
/// eigenfunction expansion.
pub fn box_poisson_spectral(model: &Model, x: [i64; 2], y: [i64; 2]) -> Result<BoxPoissonSum, SpectralError> {
    let n = model.spec.size;
    let ni = n as i64;
    if model.spec.kind != ModelKind::BoxZn
        || model.spec.dim != 2
        || y[0] != ni + 1
        || y[1].abs() > ni
        || x[0].abs() > ni
        || x[1].abs() > ni
    {
        return Err(SpectralError::NotRightFace);
    }
    let big = 2 * n + 1;
    let h = std::f64::consts::PI / (2.0 * (n as f64 + 1.0));
    let scale = 1.0 / (4.0 * (n as f64 + 1.0).powi(2));
    let psi_a: Vec<(f64, f64)> = (1..=big).map(|a| (box_psi(n, a, x[0]), box_psi(n, a, ni))).collect();
    let psi_b: Vec<(f64, f64)> = (1..=big).map(|b| (box_psi(n, b, x[1]), box_psi(n, b, y[1]))).collect();
    let mut acc = 0.0;
    let mut max_partial = 0.0f64;
    for a in 1..=big {
        let (pa_x, pa_n) = psi_a[a - 1];
        for b in 1..=big {
            let (pb_x, pb_y) = psi_b[b - 1];
            let denom = 1.0 - 0.5 * ((a as f64 * h).cos() + (b as f64 * h).cos());
            acc += scale * pa_x * pb_x * pb_y * pa_n / denom;
            max_partial = max_partial.max(acc.abs());
        }
    }
    Ok(BoxPoissonSum { value: acc, max_partial_abs: max_partial, terms: big * big })
}
