//! Boundary comparison checks for `φ₀`: the Carleson bound, the weighted
//! volume of inner balls, polynomial control of `φ₀(x)/φ₀(z)`, and the
//! eigenvalue of lattice balls.

use std::sync::Arc;

use rayon::prelude::*;

use super::{EstimateContext, EstimateError};
use crate::absorbing::SubKernel;
use crate::domain::Domain;
use crate::graph::{MarkovKernel, VertexId};
use crate::spectral::perron_pair;

#[derive(Debug, Clone, PartialEq)]
pub struct CarlesonRow {
    pub radius: usize,
    /// `max_x max_{B_U(x,r)} φ₀ / φ₀(x_r)`.
    pub carleson: f64,
    /// Range over `x` of `π_{φ₀}(B_U(x,r)) / (π(B(x,r)) φ₀(x_r)²)`.
    pub volume_min: f64,
    pub volume_max: f64,
}

impl CarlesonRow {
    pub fn volume_spread(&self) -> f64 {
        self.volume_max / self.volume_min
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct CarlesonReport {
    pub rows: Vec<CarlesonRow>,
}

impl CarlesonReport {
    /// Consecutive ratios of the Carleson constant.
    pub fn carleson_growth(&self) -> Vec<f64> {
        self.rows.windows(2).map(|w| w[1].carleson / w[0].carleson).collect()
    }

    /// Consecutive ratios of the volume-ratio spread.
    pub fn volume_growth(&self) -> Vec<f64> {
        self.rows.windows(2).map(|w| w[1].volume_spread() / w[0].volume_spread()).collect()
    }
}

pub fn carleson_check(ctx: &EstimateContext, starts: &[usize], radii: &[usize]) -> Result<CarlesonReport, EstimateError> {
    let pi = ctx.sub.pi();
    let phi = &ctx.pair.phi0;
    // per start: (carleson, volume ratio) at every radius
    let per_start: Vec<Vec<(f64, f64)>> = starts
        .par_iter()
        .map(|&x| {
            let p = ctx.profile(x)?;
            radii
                .iter()
                .map(|&r| {
                    let mut top: f64 = 0.0;
                    let mut mass = 0.0;
                    for z in 0..phi.len() {
                        if p.inner_distance(z) <= r {
                            top = top.max(phi[z]);
                            mass += phi[z] * phi[z] * pi[z];
                        }
                    }
                    let rf = r as f64;
                    let at_scale = p.phi_at_scale(rf)?;
                    Ok((top / at_scale, mass / (p.volume(rf)? * at_scale * at_scale)))
                })
                .collect::<Result<Vec<_>, EstimateError>>()
        })
        .collect::<Result<_, _>>()?;
    let rows = radii
        .iter()
        .enumerate()
        .map(|(k, &radius)| {
            let col = per_start.iter().map(|v| v[k]);
            CarlesonRow {
                radius,
                carleson: col.clone().map(|c| c.0).fold(0.0, f64::max),
                volume_min: col.clone().map(|c| c.1).fold(f64::INFINITY, f64::min),
                volume_max: col.map(|c| c.1).fold(0.0, f64::max),
            }
        })
        .collect();
    Ok(CarlesonReport { rows })
}

/// Smallest `A` with `φ₀(x)/φ₀(z) ≤ A(1 + d_U(x,z))^A` for every start `x`
/// and every `z ∈ U`.
pub fn eigen_ratio_exponent(ctx: &EstimateContext, starts: &[usize]) -> f64 {
    let phi = &ctx.pair.phi0;
    let dom = ctx.domain();
    starts
        .par_iter()
        .map(|&x| {
            let dist = dom.inner_distances_from(x);
            (0..phi.len())
                .map(|z| minimal_exponent((phi[x] / phi[z]).ln(), (1.0 + dist[z] as f64).ln()))
                .fold(0.0, f64::max)
        })
        .reduce(|| 0.0, f64::max)
}

/// Smallest `A > 0` with `ln A + A·log_base ≥ log_q`, by bisection.
fn minimal_exponent(log_q: f64, log_base: f64) -> f64 {
    let holds = |a: f64| a.ln() + a * log_base >= log_q;
    let (mut lo, mut hi) = (1e-12, 1.0);
    while !holds(hi) {
        hi *= 2.0;
    }
    if holds(lo) {
        return lo;
    }
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if holds(mid) {
            hi = mid;
        } else {
            lo = mid;
        }
        if hi - lo <= 1e-12 * hi {
            break;
        }
    }
    hi
}

/// `(1 − β₀(B(x,r))) r²` for the ball as a domain of the ambient kernel.
pub fn ball_gap_constant(kernel: &MarkovKernel, x: VertexId, r: usize) -> Result<f64, EstimateError> {
    let g = kernel.graph();
    if !g.ball_is_complete(x, r + 1) {
        return Err(EstimateError::AmbientTruncated { x, r: r + 1 });
    }
    let ball = g.ball(x, r);
    let dom = Arc::new(Domain::new(g.clone(), &ball)?);
    let pair = perron_pair(&SubKernel::new(kernel, dom))?;
    Ok((1.0 - pair.beta0) * (r * r) as f64)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::models::{generate, ModelSpec};

    #[test]
    fn carleson_on_triangle() {
        let m = generate(ModelSpec::triangle(16)).unwrap();
        let ctx = EstimateContext::from_model(&m).unwrap();
        let starts: Vec<usize> = (0..ctx.domain().len()).collect();
        let rep = carleson_check(&ctx, &starts, &[1, 2, 4]).unwrap();
        for row in &rep.rows {
            assert!(row.carleson >= 1.0 && row.carleson.is_finite());
            assert!(row.volume_min > 0.0 && row.volume_spread().is_finite());
        }
    }

    #[test]
    fn eigen_ratio_exponent_is_moderate() {
        let m = generate(ModelSpec::boxed(2, 6)).unwrap();
        let ctx = EstimateContext::from_model(&m).unwrap();
        let starts: Vec<usize> = (0..ctx.domain().len()).step_by(7).collect();
        let a = eigen_ratio_exponent(&ctx, &starts);
        assert!(a > 0.5 && a < 10.0, "A₁ = {a}");
        assert!((minimal_exponent(0.0, 0.0) - 1.0).abs() < 1e-9);
    }

    #[test]
    fn ball_gap_scales_like_inverse_square() {
        let m = generate(ModelSpec::boxed(2, 8)).unwrap();
        let x = m.vertex_at(&[0, 0]).unwrap();
        let c: Vec<f64> = [4, 8, 16].iter().map(|&r| ball_gap_constant(&m.kernel, x, r).unwrap()).collect();
        assert!(c.windows(2).all(|w| w[1] <= 1.3 * w[0]), "{c:?}");
    }
}
