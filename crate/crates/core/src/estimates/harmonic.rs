//! Shapes of `P_U(x, y)` and `P_U(t, x, y*_z)`.

use super::{ratio_pair, EstimateContext, EstimateError, RatioPair, RatioReport, RegimeConfig, XProfile};
use crate::absorbing::{poisson_kernel, BoundaryKind, GreensFunction, SubKernel};
use crate::domain::HalfEdge;
use crate::graph::VertexId;
use crate::models::{Model, ModelKind, ModelSpec};

/// Minimum log-log growth exponent of `r ↦ φ₀(x_r)² V(x,r)` before the
/// simplified harmonic-measure form is offered.
pub const EASY_FORM_EXPONENT: f64 = 2.1;

/// The central-point estimate in its two normalizations.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CentralEstimate {
    /// `T_U φ₀(o) Σ φ₀(z) μ_zy`.
    pub via_phi_o: f64,
    /// `T_U π(U)^{-1/2} Σ φ₀(z) μ_zy`.
    pub via_volume: f64,
}

fn central_from_flux(ctx: &EstimateContext, flux: f64) -> CentralEstimate {
    let t = ctx.t_u();
    CentralEstimate {
        via_phi_o: t * ctx.phi(ctx.center()) * flux,
        via_volume: t * flux / ctx.domain().volume().sqrt(),
    }
}

fn half_edge_flux(ctx: &EstimateContext, h: HalfEdge) -> Result<f64, EstimateError> {
    let d = ctx.domain();
    let z = d.require_local(h.inner)?;
    Ok(ctx.phi(z) * d.graph().mu(h.inner, h.outer))
}

/// Estimate of `P_U(o, y)` for an outer boundary vertex `y`.
pub fn central_exit_estimate(ctx: &EstimateContext, y: VertexId) -> Result<CentralEstimate, EstimateError> {
    let d = ctx.domain();
    let mut flux = 0.0;
    for &z in d.nu(y)? {
        flux += half_edge_flux(ctx, HalfEdge { inner: z, outer: y })?;
    }
    Ok(central_from_flux(ctx, flux))
}

/// Estimate of `P_U(o, y*_z)` for one half-edge.
pub fn central_half_edge_estimate(ctx: &EstimateContext, h: HalfEdge) -> Result<CentralEstimate, EstimateError> {
    Ok(central_from_flux(ctx, half_edge_flux(ctx, h)?))
}

/// Time-dependent central estimate `min{t,T_U} μ_zy φ₀(z) π(U)^{-1/2} e^{−R²/t}`.
pub fn central_time_estimate(ctx: &EstimateContext, t: u64, h: HalfEdge) -> Result<f64, EstimateError> {
    if t == 0 {
        return Err(EstimateError::InvalidTime { t, min: 1 });
    }
    let r = ctx.depth() as f64;
    let t = t as f64;
    Ok(t.min(ctx.t_u()) * half_edge_flux(ctx, h)? / ctx.domain().volume().sqrt() * (-r * r / t).exp())
}

/// `φ₀(o) π(φ₀)`: the total mass of the central estimate over `∂U`.
pub fn normalization_product(ctx: &EstimateContext) -> f64 {
    ctx.phi(ctx.center()) * ctx.pair.phi_mass(&ctx.sub)
}

/// `φ₀(x_d)² V(x,d) / (1+d²)`.
fn scale_weight(p: &XProfile<'_>, d: usize) -> Result<f64, EstimateError> {
    let r = d as f64;
    let phi = p.phi_at_scale(r)?;
    Ok(phi * phi * p.volume(r)? / (1.0 + r * r))
}

/// `H(t, x, z)`, requires `t ≥ 1 + d_U(x,z)`.
pub fn h_function(p: &XProfile<'_>, t: u64, z: usize) -> Result<f64, EstimateError> {
    let d = p.inner_distance(z);
    let min = 1 + d as u64;
    if t < min {
        return Err(EstimateError::InvalidTime { t, min });
    }
    let ctx = p.context();
    let d2 = (d * d) as u64;
    let r2 = (ctx.depth() * ctx.depth()) as u64;
    let middle = |s: u64| -> Result<f64, EstimateError> {
        if s < d2 {
            return Ok(1.0);
        }
        Ok(1.0 + scale_weight(p, d)? * p.scale_sum(d2 as usize, s as usize))
    };
    if t <= r2 {
        return middle(t);
    }
    let o = ctx.phi(ctx.center());
    let tail = (ctx.t_u().min(t as f64) - r2 as f64).max(0.0) / (o * o * ctx.domain().volume());
    Ok(middle(r2)? + scale_weight(p, d)? * tail)
}

/// Which short- or long-time regime `(t, d)` falls into, first match wins.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Regime {
    /// `1+d ≤ t ≤ (1+d)^{2−ε}`.
    Z1,
    /// `t ≤ A₂(1+d)²`.
    Z2,
    /// `(1+d)² ≤ t ≤ A₂R²`.
    Z3,
    /// `t ≥ A₂R²`.
    Z4,
}

pub fn regime(cfg: &RegimeConfig, t: u64, d: usize, depth: usize) -> Regime {
    let t = t as f64;
    let s = 1.0 + d as f64;
    if t <= s.powf(2.0 - cfg.epsilon) {
        Regime::Z1
    } else if t <= cfg.a2 * s * s {
        Regime::Z2
    } else if t <= cfg.a2 * (depth * depth) as f64 {
        Regime::Z3
    } else {
        Regime::Z4
    }
}

/// `(c₁, c₂)` multiplying the shape and the Gaussian exponent on each side.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GlobalConstants {
    pub lower: (f64, f64),
    pub upper: (f64, f64),
}

impl Default for GlobalConstants {
    fn default() -> Self {
        Self { lower: (1.0, 1.0), upper: (1.0, 1.0) }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GlobalEstimate {
    pub lower: f64,
    pub upper: f64,
    pub regime: Regime,
}

/// Two-sided estimate of `P_U(t, x, y*_z)`.
pub fn global_estimate(
    p: &XProfile<'_>,
    t: u64,
    h: HalfEdge,
    consts: GlobalConstants,
) -> Result<GlobalEstimate, EstimateError> {
    let ctx = p.context();
    let dom = ctx.domain();
    let z = dom.require_local(h.inner)?;
    let d = p.inner_distance(z);
    let hv = h_function(p, t, z)?;
    let mu = dom.graph().mu(h.inner, h.outer);
    let base = ctx.phi(p.base()) * ctx.phi(z) * mu / scale_weight(p, d)? * hv;
    let s = (d * d) as f64 / t as f64;
    Ok(GlobalEstimate {
        lower: consts.lower.0 * base * (-consts.lower.1 * s).exp(),
        upper: consts.upper.0 * base * (-consts.upper.1 * s).exp(),
        regime: regime(&ctx.regime, t, d, ctx.depth()),
    })
}

/// Short-time shape `e^{−d²/t} μ_zy / π(B(x,√t))`.
pub fn z1_shape(p: &XProfile<'_>, t: u64, h: HalfEdge) -> Result<f64, EstimateError> {
    let dom = p.context().domain();
    let d = p.inner_distance(dom.require_local(h.inner)?) as f64;
    let t = t as f64;
    Ok((-d * d / t).exp() * dom.graph().mu(h.inner, h.outer) / p.volume(t.sqrt())?)
}

/// Intermediate-time shape `t φ₀(x)φ₀(z) e^{−d²/t} μ_zy / (φ₀(x_√t)² π(B(x,√t)))`.
pub fn z2_shape(p: &XProfile<'_>, t: u64, h: HalfEdge) -> Result<f64, EstimateError> {
    let ctx = p.context();
    let dom = ctx.domain();
    let z = dom.require_local(h.inner)?;
    let d = p.inner_distance(z) as f64;
    let t = t as f64;
    let phi = p.phi_at_scale(t.sqrt())?;
    Ok(t * ctx.phi(p.base()) * ctx.phi(z) * (-d * d / t).exp() * dom.graph().mu(h.inner, h.outer)
        / (phi * phi * p.volume(t.sqrt())?))
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct HarmonicEstimate {
    /// `φ₀(x)φ₀(z)μ_zy {T_U + Σ_{ℓ=d²}^{R²} 1/(φ₀(x_√ℓ)² V(x,√ℓ))}`.
    pub full: f64,
    /// `φ₀(x)φ₀(z)μ_zy {T_U + (1+d²)/(φ₀(x_d)² V(x,d))}`, offered only when
    /// the growth exponent reaches [`EASY_FORM_EXPONENT`].
    pub simplified: Option<f64>,
    pub growth_exponent: f64,
}

/// Least-squares slope of `log(φ₀(x_r)² V(x,r))` against `log r`, `1 ≤ r ≤ R`.
pub fn volume_growth_exponent(p: &XProfile<'_>) -> Result<f64, EstimateError> {
    let depth = p.context().depth();
    if depth < 2 {
        return Ok(f64::NAN);
    }
    let mut pts = Vec::with_capacity(depth);
    for r in 1..=depth {
        let r = r as f64;
        let phi = p.phi_at_scale(r)?;
        pts.push((r.ln(), (phi * phi * p.volume(r)?).ln()));
    }
    Ok(least_squares(&pts).0)
}

/// `(slope, intercept)` of the least-squares line through `pts`.
pub(crate) fn least_squares(pts: &[(f64, f64)]) -> (f64, f64) {
    let n = pts.len() as f64;
    let mx = pts.iter().map(|p| p.0).sum::<f64>() / n;
    let my = pts.iter().map(|p| p.1).sum::<f64>() / n;
    let sxy: f64 = pts.iter().map(|p| (p.0 - mx) * (p.1 - my)).sum();
    let sxx: f64 = pts.iter().map(|p| (p.0 - mx).powi(2)).sum();
    let slope = if sxx > 0.0 { sxy / sxx } else { 0.0 };
    (slope, my - slope * mx)
}

/// Estimate of `P_U(x, y*_z)` from an arbitrary start.
pub fn harmonic_measure_estimate(p: &XProfile<'_>, h: HalfEdge) -> Result<HarmonicEstimate, EstimateError> {
    let ctx = p.context();
    let dom = ctx.domain();
    let z = dom.require_local(h.inner)?;
    let d = p.inner_distance(z);
    let r2 = ctx.depth() * ctx.depth();
    let prefactor = ctx.phi(p.base()) * ctx.phi(z) * dom.graph().mu(h.inner, h.outer);
    let full = prefactor * (ctx.t_u() + p.scale_sum(d * d, r2));
    let growth_exponent = volume_growth_exponent(p)?;
    let simplified = if growth_exponent >= EASY_FORM_EXPONENT {
        let df = d as f64;
        let phi = p.phi_at_scale(df)?;
        Some(prefactor * (ctx.t_u() + (1.0 + df * df) / (phi * phi * p.volume(df)?)))
    } else {
        None
    };
    Ok(HarmonicEstimate { full, simplified, growth_exponent })
}

/// Interior neighbour `z_y` of the bottom-side point `(y₁, 0)` used to
/// measure `d` in the closed form below.
pub fn grp_anchor(n: i64, y1: i64) -> [i64; 2] {
    if y1 >= n - 1 {
        [n - 2, 1]
    } else {
        [y1, 1]
    }
}

/// The triangle closed form with `d` supplied.
pub fn grp_value(n: i64, x: [i64; 2], y1: i64, d: usize) -> Result<f64, EstimateError> {
    let [a, b] = x;
    if !(a > 0 && b > 0 && 2 * a + b <= n) {
        return Err(EstimateError::OutOfSector(x));
    }
    if !(0 < y1 && y1 < n) {
        return Err(EstimateError::InvalidArgument(format!("bottom-side point y₁={y1} must satisfy 0<y₁<{n}")));
    }
    let (a, b, nf, y, d) = (a as f64, b as f64, n as f64, y1 as f64, d as f64);
    let num = a * b * (a + b) * (nf - a - b) * (nf - b) * y * y * (nf - y) * (nf - y);
    let den = nf.powi(4) * (a + d).powi(2) * (b + d).powi(2) * (a + b + 2.0 * d).powi(2);
    Ok(num / den)
}

fn require_kind(model: &Model, kind: ModelKind, expected: &'static str) -> Result<(), EstimateError> {
    if model.spec.kind == kind {
        Ok(())
    } else {
        Err(EstimateError::WrongModel { expected })
    }
}

/// Closed-form estimate of `P_U(x, (y₁,0))` on the triangle, `x` in the
/// fundamental sector.
pub fn grp_formula(model: &Model, x: [i64; 2], y1: i64) -> Result<f64, EstimateError> {
    require_kind(model, ModelKind::TriangleGame, "triangle")?;
    let n = model.spec.size as i64;
    let dom = &model.domain;
    let xl = model.local_at(&x).ok_or(EstimateError::OutOfSector(x))?;
    let zl = model
        .local_at(&grp_anchor(n, y1))
        .ok_or_else(|| EstimateError::InvalidArgument(format!("no interior anchor for y₁={y1}")))?;
    grp_value(n, x, y1, dom.inner_distances_from(xl)[zl])
}

fn l1(v: &[i64]) -> f64 {
    v.iter().map(|c| c.abs() as f64).sum()
}

/// Estimate of `P_U(x, y)` on the punctured cube for `y` the removed center
/// or a point of the top face `y_n = N+1`.
pub fn punctured_cube_estimate(spec: &ModelSpec, x: &[i64], y: &[i64]) -> Result<f64, EstimateError> {
    if spec.kind != ModelKind::PuncturedCube {
        return Err(EstimateError::WrongModel { expected: "punctured cube" });
    }
    let n = spec.dim;
    let big = spec.size as i64;
    let s = big as f64 + 1.0;
    if x.len() != n || y.len() != n {
        return Err(EstimateError::InvalidArgument(format!("points must have {n} coordinates")));
    }
    if x.iter().all(|&c| c == 0) || x.iter().any(|c| c.abs() > big) {
        return Err(EstimateError::InvalidArgument(format!("{x:?} is not in U")));
    }
    let damp_x: f64 = x.iter().map(|&c| 1.0 - c.abs() as f64 / s).product();
    let nx = l1(x);
    let center = y.iter().all(|&c| c == 0);
    let top = y[n - 1] == big + 1 && y[..n - 1].iter().all(|c| c.abs() <= big);
    if !center && !top {
        return Err(EstimateError::UnsupportedFace(y.to_vec()));
    }
    let diff: Vec<i64> = x.iter().zip(y).map(|(a, b)| a - b).collect();
    let sep = l1(&diff);
    let approach = |c: i64| 1.0 - (c.abs() as f64 - sep) / s;
    if n >= 3 {
        let e = 2.0 - n as f64;
        if center {
            return Ok(damp_x * nx.powf(e));
        }
        let damp_y: f64 = y[..n - 1].iter().map(|&c| 1.0 - c.abs() as f64 / s).product();
        let den: f64 = s * x.iter().map(|&c| approach(c).powi(2)).product::<f64>();
        return Ok(damp_x * damp_y / den * sep.powf(e));
    }
    let nf = big as f64;
    if center {
        return Ok(damp_x * (1.0 + (1.0 + 2.0 * nf / nx).ln()) / ((1.0 + nf.ln()) * (1.0 + (1.0 + nx).ln())));
    }
    let damp_y = (1.0 - (y[0].abs() as f64 - 1.0) / s) * (1.0 - (y[1].abs() as f64 - 1.0) / s);
    Ok(damp_x * damp_y * (1.0 + nx).ln() / (approach(x[0]).powi(2) * approach(x[1]).powi(2) * (1.0 + nf).ln()))
}

/// `S(x, d) = Σ_{ℓ=d²}^{8N²} 1/(φ₀(x_√ℓ)² (1+ℓ))` for the planar punctured square.
pub fn cube_scale_sum(p: &XProfile<'_>, size: usize, d: usize) -> Result<f64, EstimateError> {
    let mut acc = 0.0;
    for ell in d * d..=8 * size * size {
        let phi = p.phi_at_scale((ell as f64).sqrt())?;
        acc += 1.0 / (phi * phi * (1.0 + ell as f64));
    }
    Ok(acc)
}

fn coords_of(model: &Model, v: VertexId) -> Vec<i64> {
    model.graph.coords(v).map(<[i64]>::to_vec).unwrap_or_else(|| vec![model.graph.external_id(v)])
}

/// Exact `P_U(o, y)` against the central estimate for every `y ∈ ∂U`.
pub fn central_ratio_report(
    model: &Model,
    ctx: &EstimateContext,
    greens: &GreensFunction,
) -> Result<RatioReport, EstimateError> {
    let o = ctx.center();
    let exact = poisson_kernel(&ctx.sub, greens, o, BoundaryKind::Outer)?;
    let xo = coords_of(model, ctx.domain().vertex(o));
    let pairs = exact
        .points
        .iter()
        .zip(&exact.probs)
        .map(|(h, &p)| Ok(ratio_pair(&xo, &coords_of(model, h.outer), p, central_exit_estimate(ctx, h.outer)?.via_phi_o)))
        .collect::<Result<Vec<RatioPair>, EstimateError>>()?;
    RatioReport::from_pairs(format!("central/{}", model.spec.kind.name()), model.spec.size, pairs)
}

/// Points of the triangle's fundamental sector in lexicographic order.
pub fn grp_sector(n: i64) -> Vec<[i64; 2]> {
    let mut out = Vec::new();
    for a in 1..n {
        for b in 1..n {
            if 2 * a + b <= n && a + b < n {
                out.push([a, b]);
            }
        }
    }
    out
}

/// Exact `P_U(x, (y₁,0))` against the closed form over the whole sector
/// and every bottom-side point.
pub fn grp_ratio_report(model: &Model, sub: &SubKernel, greens: &GreensFunction) -> Result<RatioReport, EstimateError> {
    require_kind(model, ModelKind::TriangleGame, "triangle")?;
    let n = model.spec.size as i64;
    let mut pairs = Vec::new();
    for x in grp_sector(n) {
        let xl = model.local_at(&x).ok_or(EstimateError::OutOfSector(x))?;
        let exact = poisson_kernel(sub, greens, xl, BoundaryKind::Outer)?;
        let dist = model.domain.inner_distances_from(xl);
        for y1 in 1..n {
            let y = model.vertex_at(&[y1, 0]).expect("bottom side is in the patch");
            let z = model.local_at(&grp_anchor(n, y1)).expect("anchor is interior");
            pairs.push(ratio_pair(&x, &[y1, 0], exact.at(y), grp_value(n, x, y1, dist[z])?));
        }
    }
    RatioReport::from_pairs("grp/triangle", model.spec.size, pairs)
}

/// Exact `P_U(x, y*_z)` against the full harmonic-measure estimate for the
/// given starts and every half-edge whose outer end satisfies `keep`.
pub fn harmonic_ratio_report(
    model: &Model,
    ctx: &EstimateContext,
    greens: &GreensFunction,
    starts: &[usize],
    keep: impl Fn(&[i64]) -> bool,
) -> Result<RatioReport, EstimateError> {
    let mut pairs = Vec::new();
    for &x in starts {
        let p = ctx.profile(x)?;
        let exact = poisson_kernel(&ctx.sub, greens, x, BoundaryKind::Extended)?;
        let xc = coords_of(model, ctx.domain().vertex(x));
        for (h, &prob) in exact.points.iter().zip(&exact.probs) {
            let yc = coords_of(model, h.outer);
            if keep(&yc) {
                pairs.push(ratio_pair(&xc, &yc, prob, harmonic_measure_estimate(&p, *h)?.full));
            }
        }
    }
    RatioReport::from_pairs(format!("harmonic/{}", model.spec.kind.name()), model.spec.size, pairs)
}

/// Exact `P_U(x, y)` against the punctured-cube displays for the given
/// starts, the center, and top-face points satisfying `keep`.
pub fn cube_ratio_report(
    model: &Model,
    sub: &SubKernel,
    greens: &GreensFunction,
    starts: &[usize],
    keep: impl Fn(&[i64]) -> bool,
) -> Result<RatioReport, EstimateError> {
    require_kind(model, ModelKind::PuncturedCube, "punctured cube")?;
    let top = model.spec.size as i64 + 1;
    let n = model.spec.dim;
    let mut pairs = Vec::new();
    for &x in starts {
        let exact = poisson_kernel(sub, greens, x, BoundaryKind::Outer)?;
        let xc = coords_of(model, sub.domain().vertex(x));
        for (h, &prob) in exact.points.iter().zip(&exact.probs) {
            let yc = coords_of(model, h.outer);
            let on_top = yc[n - 1] == top && yc[..n - 1].iter().all(|c| c.abs() < top);
            if yc.iter().all(|&c| c == 0) || (on_top && keep(&yc)) {
                pairs.push(ratio_pair(&xc, &yc, prob, punctured_cube_estimate(&model.spec, &xc, &yc)?));
            }
        }
    }
    RatioReport::from_pairs(format!("cube/{}d", n), model.spec.size, pairs)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::linalg::SolverConfig;
    use crate::models::generate;

    fn ctx_for(spec: ModelSpec) -> (Model, EstimateContext) {
        let m = generate(spec).unwrap();
        let ctx = EstimateContext::from_model(&m).unwrap();
        (m, ctx)
    }

    #[test]
    fn central_estimate_sums_to_normalization_product() {
        for spec in [ModelSpec::boxed(2, 6), ModelSpec::triangle(12)] {
            let (_, ctx) = ctx_for(spec);
            let total: f64 = ctx
                .domain()
                .outer_boundary()
                .iter()
                .map(|&y| central_exit_estimate(&ctx, y).unwrap().via_phi_o)
                .sum();
            let expect = normalization_product(&ctx);
            assert!((total - expect).abs() <= 1e-10 * expect, "{total} vs {expect}");
            assert!((0.05..=20.0).contains(&expect));
        }
    }

    #[test]
    fn box_right_face_band() {
        let (m, ctx) = ctx_for(ModelSpec::boxed(2, 8));
        let greens = GreensFunction::new(&ctx.sub, SolverConfig::default()).unwrap();
        let report = central_ratio_report(&m, &ctx, &greens).unwrap();
        let right: Vec<f64> = report.pairs.iter().filter(|p| p.y[0] == 9).map(|p| p.ratio).collect();
        assert_eq!(right.len(), 17);
        let spread = right.iter().cloned().fold(0.0, f64::max) / right.iter().cloned().fold(f64::INFINITY, f64::min);
        assert!(spread <= 20.0, "spread {spread}");
        // the cosine profile along the face
        let o = ctx.center();
        let exact = poisson_kernel(&ctx.sub, &greens, o, BoundaryKind::Outer).unwrap();
        let ratios: Vec<f64> = (-8..=8)
            .map(|k: i64| {
                let y = m.vertex_at(&[9, k]).unwrap();
                exact.at(y) / ((std::f64::consts::PI * k as f64 / 18.0).cos() / 9.0)
            })
            .collect();
        let s = ratios.iter().cloned().fold(0.0, f64::max) / ratios.iter().cloned().fold(f64::INFINITY, f64::min);
        assert!(s < 3.0, "cosine profile spread {s}");
    }

    #[test]
    fn h_function_branches() {
        let (m, ctx) = ctx_for(ModelSpec::boxed(2, 6));
        let x = m.local_at(&[-5, -5]).unwrap();
        let z = m.local_at(&[0, 2]).unwrap();
        let p = ctx.profile(x).unwrap();
        let d = p.inner_distance(z) as u64;
        assert_eq!(d, 12);
        assert!(matches!(h_function(&p, d, z), Err(EstimateError::InvalidTime { .. })));
        assert_eq!(h_function(&p, d + 1, z).unwrap(), 1.0);
        // R = 7 < d, so the middle branch is empty and only the tail grows
        let r2 = (ctx.depth() * ctx.depth()) as u64;
        assert_eq!(r2, 49);
        let w = scale_weight(&p, d as usize).unwrap();
        let o = ctx.phi(ctx.center());
        let slope = w / (o * o * ctx.domain().volume());
        assert!(ctx.t_u() > 62.0);
        let h1 = h_function(&p, 60, z).unwrap();
        let h2 = h_function(&p, 61, z).unwrap();
        assert!(((h2 - h1) - slope).abs() <= 1e-12 * slope.max(1.0));
        let cap = ctx.t_u().ceil() as u64;
        assert_eq!(h_function(&p, cap + 10, z).unwrap(), h_function(&p, cap + 1000, z).unwrap());
    }

    #[test]
    fn h_function_monotone_with_small_jumps() {
        let (m, ctx) = ctx_for(ModelSpec::boxed(2, 6));
        let x = m.local_at(&[-2, 0]).unwrap();
        let z = m.local_at(&[1, 0]).unwrap();
        let p = ctx.profile(x).unwrap();
        let d = p.inner_distance(z) as u64;
        let mut prev = 1.0;
        for t in d + 1..400 {
            let h = h_function(&p, t, z).unwrap();
            assert!(h >= prev - 1e-15, "t={t}");
            if t == d * d {
                assert!(h / prev <= 3.0);
            }
            prev = h;
        }
        let r2 = (ctx.depth() * ctx.depth()) as u64;
        let at = h_function(&p, r2, z).unwrap();
        let after = h_function(&p, r2 + 1, z).unwrap();
        assert!(after / at <= 3.0);
    }

    #[test]
    fn global_shape_matches_kernel_at_t_one() {
        let (m, ctx) = ctx_for(ModelSpec::boxed(2, 4));
        let y = m.vertex_at(&[5, 0]).unwrap();
        let z = m.vertex_at(&[4, 0]).unwrap();
        let zl = m.domain.local_index(z).unwrap();
        let p = ctx.profile(zl).unwrap();
        let h = HalfEdge { inner: z, outer: y };
        let g = global_estimate(&p, 1, h, GlobalConstants::default()).unwrap();
        assert_eq!(g.regime, Regime::Z1);
        let exact = ctx.sub.exit_step(h);
        assert_eq!(exact, 0.125);
        let ratio = exact / g.upper;
        assert!(ratio.is_finite() && ratio > 0.0);
        let z1 = z1_shape(&p, 1, h).unwrap();
        // B(z, 1) has five vertices of mass 1
        assert!((z1 - 0.125 / 5.0).abs() < 1e-15);
        assert!(z2_shape(&p, 1, h).unwrap() > 0.0);
    }

    #[test]
    fn regimes_partition_time() {
        let cfg = RegimeConfig::default();
        assert_eq!(regime(&cfg, 10, 9, 20), Regime::Z1);
        assert_eq!(regime(&cfg, 100, 9, 20), Regime::Z2);
        assert_eq!(regime(&cfg, 1000, 9, 20), Regime::Z3);
        assert_eq!(regime(&cfg, 2000, 9, 20), Regime::Z4);
    }

    #[test]
    fn grp_special_points() {
        let n = 40i64;
        // x = (1,1): the distance to z_y is y₁ − 1 for y₁ ≥ 1
        for y1 in [2, 5, 20, 35] {
            let d = (y1 - 1) as usize;
            let v = grp_value(n, [1, 1], y1, d).unwrap();
            let target = ((n - y1) as f64).powi(2) / ((n * n) as f64 * (y1 as f64).powi(4));
            let r = v / target;
            assert!((0.05..20.0).contains(&r), "y1={y1} ratio {r}");
        }
        assert!(matches!(grp_value(n, [30, 1], 3, 0), Err(EstimateError::OutOfSector(_))));
        assert_eq!(grp_anchor(n, 1), [1, 1]);
        assert_eq!(grp_anchor(n, n - 1), [n - 2, 1]);
    }

    #[test]
    fn grp_on_model_uses_inner_distance() {
        let m = generate(ModelSpec::triangle(16)).unwrap();
        let v = grp_formula(&m, [4, 4], 8).unwrap();
        let d = m.domain.inner_distances_from(m.local_at(&[4, 4]).unwrap())[m.local_at(&[8, 1]).unwrap()];
        assert_eq!(v, grp_value(16, [4, 4], 8, d).unwrap());
        let other = generate(ModelSpec::boxed(2, 3)).unwrap();
        assert!(matches!(grp_formula(&other, [1, 1], 1), Err(EstimateError::WrongModel { .. })));
    }

    #[test]
    fn harmonic_estimate_on_triangle_median() {
        let (m, ctx) = ctx_for(ModelSpec::triangle(12));
        let greens = GreensFunction::new(&ctx.sub, SolverConfig::default()).unwrap();
        let starts: Vec<usize> = (1..6).map(|k| m.local_at(&[k, k]).unwrap()).collect();
        let rep = harmonic_ratio_report(&m, &ctx, &greens, &starts, |y| y[1] == 0).unwrap();
        assert!(rep.spread.is_finite() && rep.spread > 1.0);
        let p = ctx.profile(starts[2]).unwrap();
        let h = ctx.domain().extended_boundary()[0];
        let e = harmonic_measure_estimate(&p, h).unwrap();
        assert!(e.full > 0.0);
        assert_eq!(e.simplified.is_some(), e.growth_exponent >= EASY_FORM_EXPONENT);
    }

    #[test]
    fn punctured_cube_displays() {
        let spec = ModelSpec::punctured_cube(3, 6);
        let v = punctured_cube_estimate(&spec, &[1, 0, 0], &[0, 0, 0]).unwrap();
        assert!((v - 6.0 / 7.0).abs() < 1e-15);
        let f = punctured_cube_estimate(&spec, &[0, 0, 6], &[0, 0, 7]).unwrap();
        assert!(f > 0.0);
        assert!(matches!(
            punctured_cube_estimate(&spec, &[1, 0, 0], &[7, 0, 0]),
            Err(EstimateError::UnsupportedFace(_))
        ));
        let planar = ModelSpec::punctured_cube(2, 6);
        let c = punctured_cube_estimate(&planar, &[1, 0], &[0, 0]).unwrap();
        let expect = (6.0 / 7.0) * (1.0 + 13f64.ln()) / ((1.0 + 6f64.ln()) * (1.0 + 2f64.ln()));
        assert!((c - expect).abs() < 1e-15);
        assert!(punctured_cube_estimate(&planar, &[3, 3], &[2, 7]).unwrap() > 0.0);
    }

    #[test]
    fn cube_ratio_band_small() {
        let (m, ctx) = ctx_for(ModelSpec::punctured_cube(3, 3));
        let greens = GreensFunction::new(&ctx.sub, SolverConfig::default()).unwrap();
        let starts: Vec<usize> = [[1, 0, 0], [2, 1, 0], [0, 0, 2]].iter().map(|c| m.local_at(c).unwrap()).collect();
        let rep = cube_ratio_report(&m, &ctx.sub, &greens, &starts, |_| true).unwrap();
        assert!(rep.pairs.iter().any(|p| p.y == vec![0, 0, 0]));
        assert!(rep.spread.is_finite());
    }

    #[test]
    fn planar_scale_sum_decreases_with_distance() {
        let (_, ctx) = ctx_for(ModelSpec::punctured_cube(2, 4));
        let p = ctx.profile(0).unwrap();
        assert!(cube_scale_sum(&p, 4, 1).unwrap() > cube_scale_sum(&p, 4, 3).unwrap());
    }
}
