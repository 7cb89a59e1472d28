//! The Doob transform `K_φ₀(x,y) = K_U(x,y)φ₀(y)/(β₀φ₀(x))`, reversible
//! for `π_φ₀ = φ₀²π`, and the Poisson kernel written through it:
//!
//! `P_U(x, y*_z) = φ₀(x)φ₀(z)μ_zy Σ_t β₀^t k^t_φ₀(x, z)`.
//!
//! The series is summed from each boundary-adjacent `z`, using the symmetry
//! `k^t_φ₀(x,z) = k^t_φ₀(z,x)`, and truncated with a certified tail bound.

use rayon::prelude::*;
use thiserror::Error;

use crate::absorbing::{BoundaryKind, ExitDistribution, SubKernel};
use crate::domain::HalfEdge;
use crate::linalg::Csr;
use crate::spectral::PerronPair;

/// Relative size of the certified series tail at which summation stops.
pub const TAIL_TOL: f64 = 1e-14;
pub const DEFAULT_STEP_BUDGET: usize = 10_000_000;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum DoobError {
    #[error("φ₀ is not strictly positive at local index {index} (value {value:e})")]
    NonPositivePhi { index: usize, value: f64 },
    #[error("Perron pair has {got} entries but the domain has {expected}")]
    SizeMismatch { expected: usize, got: usize },
    #[error("series tail bound {tail_bound:e} still above target after {steps} steps")]
    TruncationBudgetExceeded { steps: usize, tail_bound: f64 },
}

impl DoobError {
    pub fn is_numerical(&self) -> bool {
        !matches!(self, DoobError::SizeMismatch { .. })
    }
}

#[derive(Debug, Clone)]
pub struct DoobChain {
    base: SubKernel,
    pair: PerronPair,
    kernel: Csr,
    pi_phi: Vec<f64>,
}

pub fn doob_transform(sub: &SubKernel, pair: &PerronPair) -> Result<DoobChain, DoobError> {
    let n = sub.len();
    if pair.phi0.len() != n {
        return Err(DoobError::SizeMismatch { expected: n, got: pair.phi0.len() });
    }
    if let Some((index, &value)) = pair.phi0.iter().enumerate().find(|(_, &f)| !(f > 0.0 && f.is_finite())) {
        return Err(DoobError::NonPositivePhi { index, value });
    }
    let phi = &pair.phi0;
    let rows = (0..n)
        .map(|x| sub.matrix().row(x).map(|(y, k)| (y, k * phi[y] / (pair.beta0 * phi[x]))).collect())
        .collect();
    let pi_phi = (0..n).map(|x| phi[x] * phi[x] * sub.pi()[x]).collect();
    Ok(DoobChain { base: sub.clone(), pair: pair.clone(), kernel: Csr::from_rows(rows), pi_phi })
}

impl DoobChain {
    pub fn base(&self) -> &SubKernel {
        &self.base
    }

    pub fn pair(&self) -> &PerronPair {
        &self.pair
    }

    pub fn kernel(&self) -> &Csr {
        &self.kernel
    }

    pub fn len(&self) -> usize {
        self.pi_phi.len()
    }

    pub fn is_empty(&self) -> bool {
        self.pi_phi.is_empty()
    }

    /// `π_φ₀ = φ₀²π` by local index.
    pub fn measure(&self) -> &[f64] {
        &self.pi_phi
    }

    /// `μ^φ₀_xy = β₀^{-1}φ₀(x)φ₀(y)μ_xy` (local indices; diagonal included).
    pub fn edge_weight(&self, x: usize, y: usize) -> f64 {
        self.pi_phi[x] * self.kernel.get(x, y)
    }

    /// `max_x |Σ_y K_φ₀(x,y) − 1|`.
    pub fn row_sum_error(&self) -> f64 {
        (0..self.len()).map(|x| (self.kernel.row(x).map(|(_, v)| v).sum::<f64>() - 1.0).abs()).fold(0.0, f64::max)
    }

    /// `max |π_φ₀(x)K_φ₀(x,y) − π_φ₀(y)K_φ₀(y,x)|`.
    pub fn reversibility_error(&self) -> f64 {
        let mut worst = 0.0f64;
        for x in 0..self.len() {
            for (y, v) in self.kernel.row(x) {
                worst = worst.max((self.pi_phi[x] * v - self.pi_phi[y] * self.kernel.get(y, x)).abs());
            }
        }
        worst
    }

    /// One step of a distribution under `K_φ₀`.
    pub fn push_forward(&self, v: &[f64], out: &mut [f64]) {
        self.kernel.vec_mul(v, out);
    }

    /// `k^t_φ₀(x, ·)`.
    pub fn heat_row(&self, t: usize, x: usize) -> Vec<f64> {
        let n = self.len();
        let mut v = vec![0.0; n];
        v[x] = 1.0;
        let mut next = vec![0.0; n];
        for _ in 0..t {
            self.push_forward(&v, &mut next);
            std::mem::swap(&mut v, &mut next);
        }
        v.iter().zip(&self.pi_phi).map(|(a, p)| a / p).collect()
    }
}

/// `k^t_φ₀(x,y) = K^t_φ₀(x,y)/π_φ₀(y)`.
pub fn doob_heat_kernel(chain: &DoobChain, t: usize, x: usize, y: usize) -> f64 {
    chain.heat_row(t, x)[y]
}

/// `k^t_U(x, ·) = K^t_U(x, ·)/π` by direct sparse steps.
pub fn killed_heat_row(sub: &SubKernel, t: usize, x: usize) -> Vec<f64> {
    let n = sub.len();
    let mut v = vec![0.0; n];
    v[x] = 1.0;
    let mut next = vec![0.0; n];
    for _ in 0..t {
        sub.push_forward(&v, &mut next);
        std::mem::swap(&mut v, &mut next);
    }
    v.iter().zip(sub.pi()).map(|(a, p)| a / p).collect()
}

/// Relative discrepancy in `k^t_U(x,y) = β₀^t φ₀(x)φ₀(y) k^t_φ₀(x,y)`, both
/// sides by sparse steps (0 when both sides vanish).
pub fn conjugation_error(chain: &DoobChain, t: usize, x: usize, y: usize) -> f64 {
    let direct = killed_heat_row(chain.base(), t, x)[y];
    let phi = &chain.pair.phi0;
    let via = chain.pair.beta0.powi(t as i32) * phi[x] * phi[y] * doob_heat_kernel(chain, t, x, y);
    if direct == 0.0 && via == 0.0 {
        0.0
    } else {
        (direct - via).abs() / direct.abs().max(via.abs())
    }
}

/// `S_z(x) = Σ_{t<T} β₀^t k^t_φ₀(z, x)` for every `x`, with `T` the horizon
/// or the first `t` whose tail bound `β₀^t sup k^t_φ₀(z,·)/(1−β₀)` falls
/// below `TAIL_TOL · min_x S_z(x)`. The sup is nonincreasing in `t` by
/// reversibility, so the bound covers the whole remaining tail.
fn resolvent_row(chain: &DoobChain, z: usize, horizon: Option<usize>, budget: usize) -> Result<Vec<f64>, DoobError> {
    let n = chain.len();
    let beta = chain.pair.beta0;
    let mut v = vec![0.0; n];
    v[z] = 1.0;
    let mut next = vec![0.0; n];
    let mut acc = vec![0.0; n];
    let mut weight = 1.0;
    let steps = horizon.unwrap_or(budget);
    for t in 0..steps {
        let mut sup = 0.0f64;
        for x in 0..n {
            let k = v[x] / chain.pi_phi[x];
            acc[x] += weight * k;
            sup = sup.max(k);
        }
        weight *= beta;
        if horizon.is_none() {
            let tail = weight * sup / (1.0 - beta);
            let floor = acc.iter().copied().fold(f64::INFINITY, f64::min);
            if tail < TAIL_TOL * floor {
                return Ok(acc);
            }
            if t + 1 == steps {
                return Err(DoobError::TruncationBudgetExceeded { steps, tail_bound: tail });
            }
        }
        chain.push_forward(&v, &mut next);
        std::mem::swap(&mut v, &mut next);
    }
    Ok(acc)
}

/// The Doob-route Poisson kernel from every source (local-index order),
/// over `∂*U` or `∂U`; `horizon = Some(t)` gives `P_U(t, x, ·)`.
pub fn doob_poisson_matrix(
    chain: &DoobChain,
    over: BoundaryKind,
    horizon: Option<usize>,
    budget: usize,
) -> Result<Vec<ExitDistribution>, DoobError> {
    let sub = chain.base();
    let d = sub.domain();
    let g = d.graph();
    let phi = &chain.pair.phi0;
    let n = chain.len();

    let mut adjacent: Vec<usize> = d.extended_boundary().iter().map(|h| d.local_index(h.inner).unwrap()).collect();
    adjacent.sort_unstable();
    adjacent.dedup();
    let rows: Vec<Vec<f64>> =
        adjacent.par_iter().map(|&z| resolvent_row(chain, z, horizon, budget)).collect::<Result<_, _>>()?;
    let row_of = |z: usize| &rows[adjacent.binary_search(&z).unwrap()];

    let half_edges = d.extended_boundary();
    Ok((0..n)
        .map(|x| {
            let ext: Vec<f64> = half_edges
                .iter()
                .map(|h| {
                    let z = d.local_index(h.inner).unwrap();
                    phi[x] * phi[z] * g.mu(h.inner, h.outer) * row_of(z)[x]
                })
                .collect();
            let densities = half_edges.iter().zip(&ext).map(|(h, p)| p / g.pi(h.outer)).collect();
            let dist = ExitDistribution {
                source: d.vertex(x),
                horizon,
                over: BoundaryKind::Extended,
                points: half_edges.to_vec(),
                probs: ext,
                densities,
            };
            match over {
                BoundaryKind::Extended => dist,
                BoundaryKind::Outer => dist.contract(d),
            }
        })
        .collect())
}

/// Single-source convenience over [`doob_poisson_matrix`].
pub fn poisson_via_doob(
    chain: &DoobChain,
    x: usize,
    over: BoundaryKind,
    horizon: Option<usize>,
) -> Result<ExitDistribution, DoobError> {
    Ok(doob_poisson_matrix(chain, over, horizon, DEFAULT_STEP_BUDGET)?.swap_remove(x))
}

/// Both sides of `Σ_{y∈∂U} Σ_{z∈ν(y)} φ₀(z)μ_zy = (1−β₀)π(φ₀)`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FluxReport {
    pub boundary_flux: f64,
    pub interior_mass: f64,
    pub residual: f64,
    /// `residual / π(φ₀)`.
    pub relative: f64,
}

pub fn flux_identity_check(sub: &SubKernel, pair: &PerronPair) -> FluxReport {
    let d = sub.domain();
    let g = d.graph();
    let boundary_flux: f64 = d
        .extended_boundary()
        .iter()
        .map(|&HalfEdge { inner, outer }| pair.phi0[d.local_index(inner).unwrap()] * g.mu(inner, outer))
        .sum();
    let mass = pair.phi_mass(sub);
    let interior_mass = (1.0 - pair.beta0) * mass;
    let residual = (boundary_flux - interior_mass).abs();
    FluxReport { boundary_flux, interior_mass, residual, relative: residual / mass }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::absorbing::{poisson_matrix, GreensFunction};
    use crate::linalg::SolverConfig;
    use crate::models::{generate, Model, ModelSpec};
    use crate::spectral::perron_pair;

    fn chain_of(spec: ModelSpec) -> (Model, SubKernel, DoobChain) {
        let m = generate(spec).unwrap();
        let s = SubKernel::new(&m.kernel, m.domain.clone());
        let p = perron_pair(&s).unwrap();
        let c = doob_transform(&s, &p).unwrap();
        (m, s, c)
    }

    #[test]
    fn triangle_chain_is_stochastic_and_reversible() {
        let (_, _, c) = chain_of(ModelSpec::triangle(12));
        assert!(c.row_sum_error() < 1e-12, "{}", c.row_sum_error());
        assert!(c.reversibility_error() < 1e-12);
        assert!((c.measure().iter().sum::<f64>() - 1.0).abs() < 1e-12);
    }

    #[test]
    fn box_doob_holding_is_half_over_beta() {
        let (_, _, c) = chain_of(ModelSpec::boxed(2, 5));
        let expect = 0.5 / c.pair().beta0;
        for x in 0..c.len() {
            assert!((c.kernel().get(x, x) - expect).abs() < 1e-12);
        }
    }

    #[test]
    fn heat_kernel_at_zero_and_conjugation() {
        let (_, _, c) = chain_of(ModelSpec::triangle(8));
        assert!((doob_heat_kernel(&c, 0, 3, 3) - 1.0 / c.measure()[3]).abs() < 1e-12);
        assert_eq!(doob_heat_kernel(&c, 0, 3, 4), 0.0);
        for (x, y) in [(0, 5), (7, 2), (10, 10)] {
            assert!(conjugation_error(&c, 5, x, y) < 1e-10);
        }
    }

    #[test]
    fn lazy_doob_kernel_mixes() {
        let (_, _, c) = chain_of(ModelSpec::boxed(2, 2));
        assert!((doob_heat_kernel(&c, 3000, 0, 12) - 1.0).abs() < 1e-9);
    }

    #[test]
    fn line_four_via_doob() {
        let (m, _, c) = chain_of(ModelSpec::line(4));
        let p = poisson_via_doob(&c, m.local_at(&[1]).unwrap(), BoundaryKind::Outer, None).unwrap();
        assert!((p.at(m.vertex_at(&[4]).unwrap()) - 0.25).abs() < 1e-12);
    }

    #[test]
    fn doob_route_agrees_with_green_route() {
        for spec in [ModelSpec::boxed(2, 3), ModelSpec::triangle(9)] {
            let (_, s, c) = chain_of(spec);
            let g = GreensFunction::new(&s, SolverConfig::default()).unwrap();
            let direct = poisson_matrix(&s, &g, BoundaryKind::Extended).unwrap();
            let doob = doob_poisson_matrix(&c, BoundaryKind::Extended, None, DEFAULT_STEP_BUDGET).unwrap();
            for (a, b) in direct.iter().zip(&doob) {
                for (p, q) in a.probs.iter().zip(&b.probs) {
                    assert!((p - q).abs() < 1e-12);
                }
            }
        }
    }

    #[test]
    fn finite_horizon_and_budget() {
        let (m, s, c) = chain_of(ModelSpec::boxed(2, 2));
        let x = m.local_at(&[0, 0]).unwrap();
        let via = poisson_via_doob(&c, x, BoundaryKind::Outer, Some(7)).unwrap();
        let direct = crate::absorbing::exit_by_time(&s, x, 7, BoundaryKind::Outer).unwrap();
        for (a, b) in via.probs.iter().zip(&direct.probs) {
            assert!((a - b).abs() < 1e-14);
        }
        assert!(matches!(
            doob_poisson_matrix(&c, BoundaryKind::Outer, None, 5),
            Err(DoobError::TruncationBudgetExceeded { steps: 5, .. })
        ));
    }

    #[test]
    fn flux_identity_triangle_four() {
        let (_, s, c) = chain_of(ModelSpec::triangle(4));
        let f = flux_identity_check(&s, c.pair());
        let expect = 2.0 / 3f64.sqrt();
        assert!((f.boundary_flux - expect).abs() < 1e-12);
        assert!((f.interior_mass - expect).abs() < 1e-12);
        assert!(f.relative < 1e-10);
    }

    #[test]
    fn nonpositive_phi_is_rejected() {
        let (_, s, c) = chain_of(ModelSpec::line(4));
        let mut p = c.pair().clone();
        p.phi0[1] = 0.0;
        assert!(matches!(doob_transform(&s, &p), Err(DoobError::NonPositivePhi { index: 1, .. })));
    }
}
