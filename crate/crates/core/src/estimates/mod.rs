//! Constant-free shapes of the two-sided exit estimates on inner-uniform
//! domains, and harnesses that measure how far the exact quantities stray
//! from them.
//!
//! None of the estimates carries explicit constants; what is checked is
//! that `exact/shape` stays within a band whose width does not grow with the
//! size of the domain ([`RatioReport`], [`RatioSeries`]).

mod carleson;
mod harmonic;
mod harnack;

pub use carleson::*;
pub use harmonic::*;
pub use harnack::*;

use thiserror::Error;

use crate::absorbing::{AbsorbingError, SubKernel};
use crate::domain::{inner_points, Domain, DomainError, InnerPointIndex, InnerPointSelector};
use crate::graph::{GraphError, VertexId};
use crate::models::Model;
use crate::spectral::{perron_pair, PerronPair, SpectralError};

/// Default inner-point constants `(a₁, A₁)`: `x_r` is the deepest point
/// within inner distance `A₁r` and must have clearance at least `a₁r`.
pub const DEFAULT_A1: f64 = 0.25;
pub const DEFAULT_CAP_A1: f64 = 1.0;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum EstimateError {
    #[error("ambient ball B({x}, {r}) reaches past the generated patch")]
    AmbientTruncated { x: VertexId, r: usize },
    #[error("Harnack cylinder around {center} of radius {radius} reaches past the patch")]
    CylinderTruncated { center: VertexId, radius: usize },
    #[error("time {t} is below the first possible exit time {min}")]
    InvalidTime { t: u64, min: u64 },
    #[error("point {0:?} is outside the fundamental sector 0<x₁, 0<x₂, 2x₁+x₂≤N")]
    OutOfSector([i64; 2]),
    #[error("boundary point {0:?} is neither the removed center nor on the top face")]
    UnsupportedFace(Vec<i64>),
    #[error("estimate needs a {expected} model")]
    WrongModel { expected: &'static str },
    #[error("invalid argument: {0}")]
    InvalidArgument(String),
    #[error(transparent)]
    Domain(#[from] DomainError),
    #[error(transparent)]
    Absorbing(#[from] AbsorbingError),
    #[error(transparent)]
    Spectral(#[from] SpectralError),
}

impl EstimateError {
    pub fn is_numerical(&self) -> bool {
        match self {
            EstimateError::Absorbing(AbsorbingError::Solve(e)) => e.is_numerical(),
            EstimateError::Absorbing(AbsorbingError::RouteMismatch { .. }) => true,
            EstimateError::Spectral(e) => e.is_numerical(),
            _ => false,
        }
    }
}

impl From<GraphError> for EstimateError {
    fn from(e: GraphError) -> Self {
        match e {
            GraphError::BallTruncated { center, radius } => EstimateError::AmbientTruncated { x: center, r: radius },
            other => EstimateError::InvalidArgument(other.to_string()),
        }
    }
}

/// Regime thresholds for the short-time estimates: `t ≤ (1+d)^{2−ε}` and
/// `t ≤ A₂(1+d)²`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RegimeConfig {
    pub epsilon: f64,
    pub a2: f64,
}

impl Default for RegimeConfig {
    fn default() -> Self {
        Self { epsilon: 0.5, a2: 4.0 }
    }
}

/// Everything the estimates need about one domain.
#[derive(Debug, Clone)]
pub struct EstimateContext {
    pub sub: SubKernel,
    pub pair: PerronPair,
    pub inner: InnerPointIndex,
    pub regime: RegimeConfig,
}

impl EstimateContext {
    pub fn new(sub: SubKernel, pair: PerronPair, a1: f64, cap_a1: f64) -> Result<Self, EstimateError> {
        let inner = inner_points(sub.domain(), a1, cap_a1)?;
        Ok(Self { sub, pair, inner, regime: RegimeConfig::default() })
    }

    /// Power-iteration Perron pair and default inner-point constants.
    pub fn from_model(model: &Model) -> Result<Self, EstimateError> {
        let sub = SubKernel::new(&model.kernel, model.domain.clone());
        let pair = perron_pair(&sub)?;
        Self::new(sub, pair, DEFAULT_A1, DEFAULT_CAP_A1)
    }

    pub fn domain(&self) -> &Domain {
        self.sub.domain()
    }

    /// Depth `R = max_x d(x, X∖U)`.
    pub fn depth(&self) -> usize {
        self.inner.r_max
    }

    /// Local index of the central point `o`.
    pub fn center(&self) -> usize {
        self.inner.center
    }

    pub fn t_u(&self) -> f64 {
        self.pair.t_u
    }

    pub fn phi(&self, local: usize) -> f64 {
        self.pair.phi0[local]
    }

    pub fn profile(&self, x: usize) -> Result<XProfile<'_>, EstimateError> {
        XProfile::new(self, x)
    }
}

/// Per-start-point data: inner distances, ambient volumes `V(x,r)`, the
/// `x_r` selector and prefix sums of `1/(φ₀(x_√ℓ)² V(x,√ℓ))`, `ℓ ≤ R²`.
#[derive(Debug, Clone)]
pub struct XProfile<'a> {
    ctx: &'a EstimateContext,
    x: usize,
    selector: InnerPointSelector,
    dist: Vec<usize>,
    volumes: Vec<f64>,
    prefix: Vec<f64>,
}

impl<'a> XProfile<'a> {
    fn new(ctx: &'a EstimateContext, x: usize) -> Result<Self, EstimateError> {
        let d = ctx.domain();
        if x >= d.len() {
            return Err(EstimateError::InvalidArgument(format!("local index {x} is outside U")));
        }
        let g = d.graph();
        let v = d.vertex(x);
        let ambient = g.distances_from(v);
        // B(x, r) is complete while no frontier vertex sits strictly inside it
        let complete_to = (0..g.len())
            .filter(|&w| g.is_frontier(w))
            .filter_map(|w| ambient[w])
            .min()
            .unwrap_or(usize::MAX);
        let reach = ambient.iter().flatten().copied().max().unwrap_or(0).min(complete_to);
        let mut volumes = vec![0.0; reach + 1];
        for (w, dw) in ambient.iter().enumerate() {
            if let Some(dw) = *dw {
                if dw <= reach {
                    volumes[dw] += g.pi(w);
                }
            }
        }
        for r in 1..volumes.len() {
            volumes[r] += volumes[r - 1];
        }
        let selector = ctx.inner.selector(d, x);
        let mut p = XProfile { ctx, x, selector, dist: d.inner_distances_from(x), volumes, prefix: Vec::new() };
        let r2 = ctx.depth() * ctx.depth();
        let mut acc = 0.0;
        let mut prefix = Vec::with_capacity(r2 + 1);
        for ell in 0..=r2 {
            let r = (ell as f64).sqrt();
            let phi = p.phi_at_scale(r)?;
            acc += 1.0 / (phi * phi * p.volume(r)?);
            prefix.push(acc);
        }
        p.prefix = prefix;
        Ok(p)
    }

    pub fn context(&self) -> &EstimateContext {
        self.ctx
    }

    pub fn base(&self) -> usize {
        self.x
    }

    /// `d_U(x, z)`.
    pub fn inner_distance(&self, z: usize) -> usize {
        self.dist[z]
    }

    /// `V(x, r) = π(B(x, ⌊r⌋))` in the ambient graph.
    pub fn volume(&self, r: f64) -> Result<f64, EstimateError> {
        let k = r.max(0.0).floor() as usize;
        self.volumes.get(k).copied().ok_or(EstimateError::AmbientTruncated { x: self.ctx.domain().vertex(self.x), r: k })
    }

    pub fn x_r(&self, r: f64) -> Result<usize, EstimateError> {
        Ok(self.selector.select(self.ctx.domain(), r)?)
    }

    /// `φ₀(x_r)`.
    pub fn phi_at_scale(&self, r: f64) -> Result<f64, EstimateError> {
        Ok(self.ctx.phi(self.x_r(r)?))
    }

    /// `Σ_{ℓ=from}^{to} 1/(φ₀(x_√ℓ)² V(x,√ℓ))` for `to ≤ R²` (empty if `from > to`).
    pub fn scale_sum(&self, from: usize, to: usize) -> f64 {
        let to = to.min(self.prefix.len() - 1);
        if from > to {
            return 0.0;
        }
        self.prefix[to] - if from == 0 { 0.0 } else { self.prefix[from - 1] }
    }
}

/// One `(start, boundary point)` comparison.
#[derive(Debug, Clone, PartialEq)]
pub struct RatioPair {
    pub x: Vec<i64>,
    pub y: Vec<i64>,
    pub exact: f64,
    pub estimate: f64,
    pub ratio: f64,
}

/// `exact/estimate` over a family of pairs at one size.
#[derive(Debug, Clone, PartialEq)]
pub struct RatioReport {
    pub label: String,
    pub size: usize,
    pub pairs: Vec<RatioPair>,
    pub min: f64,
    pub max: f64,
    pub spread: f64,
}

impl RatioReport {
    /// Pairs with a zero estimate are dropped; all remaining ratios must be
    /// finite and positive.
    pub fn from_pairs(label: impl Into<String>, size: usize, pairs: Vec<RatioPair>) -> Result<Self, EstimateError> {
        let pairs: Vec<RatioPair> = pairs.into_iter().filter(|p| p.estimate > 0.0).collect();
        if pairs.is_empty() {
            return Err(EstimateError::InvalidArgument("no pairs with a positive estimate".into()));
        }
        if let Some(bad) = pairs.iter().find(|p| !(p.ratio.is_finite() && p.ratio > 0.0)) {
            return Err(EstimateError::InvalidArgument(format!(
                "ratio {} at x={:?}, y={:?} is not finite and positive",
                bad.ratio, bad.x, bad.y
            )));
        }
        let min = pairs.iter().map(|p| p.ratio).fold(f64::INFINITY, f64::min);
        let max = pairs.iter().map(|p| p.ratio).fold(0.0, f64::max);
        Ok(Self { label: label.into(), size, pairs, min, max, spread: max / min })
    }
}

pub fn ratio_pair(x: &[i64], y: &[i64], exact: f64, estimate: f64) -> RatioPair {
    RatioPair { x: x.to_vec(), y: y.to_vec(), exact, estimate, ratio: exact / estimate }
}

/// Reports for increasing sizes of the same family.
#[derive(Debug, Clone, PartialEq)]
pub struct RatioSeries {
    pub reports: Vec<RatioReport>,
}

impl RatioSeries {
    /// `spread(next)/spread(previous)` for consecutive sizes.
    pub fn growth(&self) -> Vec<f64> {
        self.reports.windows(2).map(|w| w[1].spread / w[0].spread).collect()
    }

    pub fn scale_stable(&self, factor: f64) -> bool {
        self.growth().iter().all(|&g| g <= factor)
    }
}
