//! Parabolic Harnack constants, Gaussian heat-kernel fits and the θ=2
//! cut-off function, measured on explicit chains.

use std::collections::{HashMap, VecDeque};
use std::ops::RangeInclusive;

use rayon::prelude::*;

use super::harmonic::least_squares;
use super::EstimateError;
use crate::doob::DoobChain;
use crate::graph::{MarkovKernel, VertexId, WeightedGraph};

/// A reversible chain the harnesses can evolve: states `0..size()`,
/// transition rows including the diagonal, and the reversing measure.
pub trait ReversibleChain: Sync {
    fn size(&self) -> usize;
    fn transitions(&self, x: usize) -> Vec<(usize, f64)>;
    fn measure(&self, x: usize) -> f64;
    /// Whether the stored row of `x` may be missing transitions.
    fn truncated(&self, _x: usize) -> bool {
        false
    }
}

impl ReversibleChain for MarkovKernel {
    fn size(&self) -> usize {
        self.graph().len()
    }
    fn transitions(&self, x: usize) -> Vec<(usize, f64)> {
        self.row(x)
    }
    fn measure(&self, x: usize) -> f64 {
        self.graph().pi(x)
    }
    fn truncated(&self, x: usize) -> bool {
        self.graph().is_frontier(x)
    }
}

impl ReversibleChain for DoobChain {
    fn size(&self) -> usize {
        self.len()
    }
    fn transitions(&self, x: usize) -> Vec<(usize, f64)> {
        self.kernel().row(x).collect()
    }
    fn measure(&self, x: usize) -> f64 {
        self.measure()[x]
    }
}

/// Chain distances from `x` up to `radius` (states farther away are absent).
pub fn chain_ball<C: ReversibleChain + ?Sized>(chain: &C, x: usize, radius: usize) -> HashMap<usize, usize> {
    let mut dist = HashMap::from([(x, 0usize)]);
    let mut queue = VecDeque::from([x]);
    while let Some(v) = queue.pop_front() {
        let dv = dist[&v];
        if dv == radius {
            continue;
        }
        for (w, p) in chain.transitions(v) {
            if p > 0.0 && !dist.contains_key(&w) {
                dist.insert(w, dv + 1);
                queue.push_back(w);
            }
        }
    }
    dist
}

/// Which free datum generated the worst ratio.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum HarnackDatum {
    /// Unit mass at `state` on the initial slice.
    Initial { state: usize },
    /// Unit mass at `state` of the lateral annulus, `lag` steps after `t₀`.
    Lateral { state: usize, lag: usize },
}

#[derive(Debug, Clone, PartialEq)]
pub struct HarnackScale {
    pub radius: usize,
    /// `T = ⌈R^θ⌉`.
    pub period: usize,
    pub center: usize,
    pub t0: u64,
    pub constant: f64,
    pub worst: Option<HarnackDatum>,
    pub data: usize,
    /// The same ratio for `u ≡ 1`.
    pub constant_function_ratio: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct HarnackReport {
    pub theta: u32,
    pub scales: Vec<HarnackScale>,
    /// Largest constant over all sampled cylinders.
    pub constant: f64,
    pub constant_function_ratio: f64,
}

impl HarnackReport {
    /// Largest constant at each radius, in increasing radius order.
    pub fn per_radius(&self) -> Vec<(usize, f64)> {
        let mut out: Vec<(usize, f64)> = Vec::new();
        for s in &self.scales {
            match out.iter_mut().find(|(r, _)| *r == s.radius) {
                Some(e) => e.1 = e.1.max(s.constant),
                None => out.push((s.radius, s.constant)),
            }
        }
        out.sort_by_key(|e| e.0);
        out
    }
}

/// Cylinder geometry in local numbering: `inner` = B(2R) where the equation
/// holds, `annulus` = B(2R+1)∖B(2R), `core` = B(R).
struct Cylinder {
    period: usize,
    inner: Vec<usize>,
    annulus: Vec<usize>,
    core: Vec<usize>,
    /// Inner-to-inner transitions by local index.
    inner_rows: Vec<Vec<(usize, f64)>>,
    /// `K(x, w)` for inner `x`, keyed by annulus position.
    to_annulus: Vec<Vec<(usize, f64)>>,
}

impl Cylinder {
    fn new<C: ReversibleChain + ?Sized>(chain: &C, x0: usize, radius: usize) -> Result<Self, EstimateError> {
        let dist = chain_ball(chain, x0, 2 * radius + 1);
        let mut states: Vec<(usize, usize)> = dist.iter().map(|(&v, &d)| (d, v)).collect();
        states.sort_unstable();
        let inner: Vec<usize> = states.iter().filter(|s| s.0 <= 2 * radius).map(|s| s.1).collect();
        let annulus: Vec<usize> = states.iter().filter(|s| s.0 == 2 * radius + 1).map(|s| s.1).collect();
        if inner.iter().any(|&v| chain.truncated(v)) {
            return Err(EstimateError::CylinderTruncated { center: x0, radius: 2 * radius + 1 });
        }
        let core: Vec<usize> = (0..inner.len()).filter(|&i| dist[&inner[i]] <= radius).collect();
        let inner_pos: HashMap<usize, usize> = inner.iter().enumerate().map(|(i, &v)| (v, i)).collect();
        let ann_pos: HashMap<usize, usize> = annulus.iter().enumerate().map(|(i, &v)| (v, i)).collect();
        let mut inner_rows = Vec::with_capacity(inner.len());
        let mut to_annulus = vec![Vec::new(); annulus.len()];
        for (i, &v) in inner.iter().enumerate() {
            let mut row = Vec::new();
            for (w, p) in chain.transitions(v) {
                if let Some(&j) = inner_pos.get(&w) {
                    row.push((j, p));
                } else if let Some(&a) = ann_pos.get(&w) {
                    to_annulus[a].push((i, p));
                }
            }
            inner_rows.push(row);
        }
        Ok(Self { period: radius * radius, inner, annulus, core, inner_rows, to_annulus })
    }

    fn step(&self, u: &[f64], out: &mut [f64]) {
        for (o, row) in out.iter_mut().zip(&self.inner_rows) {
            *o = row.iter().map(|&(j, p)| p * u[j]).sum();
        }
    }

    /// Per-lag `(max over core of u(j), min over core of u(j)+u(j+1))` for
    /// `j = 0..=4T+1`, given `u(0)` and a source injected at lag 1.
    fn profile(&self, start: &[f64], source: &[(usize, f64)]) -> Vec<(f64, f64)> {
        let lags = 4 * self.period + 2;
        let n = self.inner.len();
        let mut u = start.to_vec();
        let mut next = vec![0.0; n];
        let mut maxes = Vec::with_capacity(lags + 1);
        let mut mins = Vec::with_capacity(lags + 1);
        let mut prev: Option<Vec<f64>> = None;
        for j in 0..=lags {
            maxes.push(self.core.iter().map(|&i| u[i]).fold(0.0, f64::max));
            if let Some(p) = &prev {
                mins.push(self.core.iter().map(|&i| p[i] + u[i]).fold(f64::INFINITY, f64::min));
            }
            prev = Some(u.clone());
            self.step(&u, &mut next);
            if j == 0 {
                for &(i, p) in source {
                    next[i] += p;
                }
            }
            std::mem::swap(&mut u, &mut next);
        }
        maxes.into_iter().zip(mins).collect()
    }

    fn ratio(&self, prof: &[(f64, f64)], shift: usize) -> f64 {
        let t = self.period;
        // u(t₀ + s) = profile[s − shift], and zero before the datum appears
        let at = |s: usize| if s < shift { None } else { Some(&prof[s - shift]) };
        let num = (t..=2 * t).filter_map(|s| at(s).map(|p| p.0)).fold(0.0, f64::max);
        if num == 0.0 {
            return 0.0;
        }
        let den = (3 * t..=4 * t)
            // before the datum the pair sum is u(σ) on the annulus side only, so zero in B(R)
            .map(|s| at(s).map_or(0.0, |p| p.1))
            .fold(f64::INFINITY, f64::min);
        if den == 0.0 {
            f64::INFINITY
        } else {
            num / den
        }
    }
}

/// Harnack constant over the extreme rays of nonnegative solutions of
/// `u(t+1, x) = Σ_y K(x,y) u(t, y)` on `[t₀, t₀+4T] × B(x₀, 2R)` with
/// `θ = 2`. The lateral data are unit masses on the annulus
/// `B(x₀,2R+1)∖B(x₀,2R)` at each time, the initial data unit masses on
/// `B(x₀,2R+1)`; by time homogeneity each annulus state needs one sweep.
pub fn harnack_constant<C: ReversibleChain + ?Sized>(
    chain: &C,
    radii: &[usize],
    t0: u64,
    centers: &[usize],
) -> Result<HarnackReport, EstimateError> {
    let mut scales = Vec::new();
    for &x0 in centers {
        for &radius in radii {
            if radius == 0 {
                return Err(EstimateError::InvalidArgument("Harnack radius must be positive".into()));
            }
            scales.push(harnack_scale(chain, x0, radius, t0)?);
        }
    }
    let constant = scales.iter().map(|s| s.constant).fold(0.0, f64::max);
    let constant_function_ratio = scales.iter().map(|s| s.constant_function_ratio).fold(0.0, f64::max);
    Ok(HarnackReport { theta: 2, scales, constant, constant_function_ratio })
}

fn harnack_scale<C: ReversibleChain + ?Sized>(
    chain: &C,
    x0: usize,
    radius: usize,
    t0: u64,
) -> Result<HarnackScale, EstimateError> {
    let cyl = Cylinder::new(chain, x0, radius)?;
    let n = cyl.inner.len();
    let t = cyl.period;
    let zero = vec![0.0; n];

    let lateral = (0..cyl.annulus.len()).into_par_iter().map(|a| {
        let prof = cyl.profile(&zero, &cyl.to_annulus[a]);
        // the annulus mass at time t₀+σ first reaches B(2R) at t₀+σ+1
        (0..=4 * t)
            .map(|sigma| (cyl.ratio(&prof, sigma), HarnackDatum::Lateral { state: cyl.annulus[a], lag: sigma }))
            .fold((0.0, None), pick)
    });
    let initial = (0..n).into_par_iter().map(|i| {
        let mut start = zero.clone();
        start[i] = 1.0;
        let prof = cyl.profile(&start, &[]);
        (cyl.ratio(&prof, 0), Some(HarnackDatum::Initial { state: cyl.inner[i] }))
    });
    let (constant, worst) = lateral
        .chain(initial)
        .collect::<Vec<_>>()
        .into_iter()
        .fold((0.0, None), |acc, (r, d)| if r > acc.0 { (r, d) } else { acc });

    // u ≡ 1: all data at once
    let ones = vec![1.0; n];
    let all: Vec<(usize, f64)> = cyl.to_annulus.iter().flatten().copied().collect();
    let mut u = ones.clone();
    let mut next = vec![0.0; n];
    let mut series = vec![u.clone()];
    for _ in 0..=4 * t {
        cyl.step(&u, &mut next);
        for &(i, p) in &all {
            next[i] += p;
        }
        std::mem::swap(&mut u, &mut next);
        series.push(u.clone());
    }
    let num = (t..=2 * t).flat_map(|s| cyl.core.iter().map(move |&i| (s, i))).map(|(s, i)| series[s][i]).fold(0.0, f64::max);
    let den = (3 * t..=4 * t)
        .flat_map(|s| cyl.core.iter().map(move |&i| (s, i)))
        .map(|(s, i)| series[s][i] + series[s + 1][i])
        .fold(f64::INFINITY, f64::min);

    Ok(HarnackScale {
        radius,
        period: t,
        center: x0,
        t0,
        constant,
        worst,
        data: n + cyl.annulus.len() * (4 * t + 1),
        constant_function_ratio: num / den,
    })
}

fn pick(acc: (f64, Option<HarnackDatum>), cur: (f64, HarnackDatum)) -> (f64, Option<HarnackDatum>) {
    if cur.0 > acc.0 {
        (cur.0, Some(cur.1))
    } else {
        acc
    }
}

/// One heat-kernel sample `k^t(x,y) = K^t(x,y)/m(y)`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct HeatSample {
    pub t: usize,
    pub x: usize,
    pub y: usize,
    pub distance: usize,
    pub kernel: f64,
    /// `k^t + k^{t+1}`.
    pub kernel_pair: f64,
    /// `m(B(x, √t))`.
    pub volume: f64,
}

impl HeatSample {
    /// `d²/t`.
    pub fn scaled_distance(&self) -> f64 {
        (self.distance * self.distance) as f64 / self.t as f64
    }
}

/// Fit of `log(k^t V) ≈ a − c d²/t` with the constants that make the upper
/// bound at rate `c/2` and the lower bound at rate `2c` hold on every sample.
#[derive(Debug, Clone, PartialEq)]
pub struct GaussianFit {
    pub samples: Vec<HeatSample>,
    pub decay: f64,
    pub intercept: f64,
    pub max_residual: f64,
    /// `max k^t V e^{(c/2) d²/t}`.
    pub upper_constant: f64,
    /// `min (k^t + k^{t+1}) V e^{2c d²/t}`.
    pub lower_constant: f64,
}

impl GaussianFit {
    pub fn lower_bound_holds(&self) -> bool {
        self.lower_constant > 0.0
    }
}

/// Samples `k^t(x,y)` for every pair and `t` in range with `t ≥ d(x,y)` and
/// `d²/t ≤ max_scaled`.
pub fn gaussian_bound_fit<C: ReversibleChain + ?Sized>(
    chain: &C,
    pairs: &[(usize, usize)],
    times: RangeInclusive<usize>,
    max_scaled: f64,
) -> Result<GaussianFit, EstimateError> {
    let t_max = *times.end();
    let mut samples = Vec::new();
    let mut sources: Vec<usize> = pairs.iter().map(|p| p.0).collect();
    sources.sort_unstable();
    sources.dedup();
    for x in sources {
        let dist = chain_ball(chain, x, t_max + 1);
        if dist.iter().any(|(&v, &d)| d <= t_max && chain.truncated(v)) {
            return Err(EstimateError::AmbientTruncated { x, r: t_max });
        }
        let mut states: Vec<usize> = dist.keys().copied().collect();
        states.sort_unstable();
        let pos: HashMap<usize, usize> = states.iter().enumerate().map(|(i, &v)| (v, i)).collect();
        let rows: Vec<Vec<(usize, f64)>> = states
            .iter()
            .map(|&v| chain.transitions(v).into_iter().filter_map(|(w, p)| pos.get(&w).map(|&j| (j, p))).collect())
            .collect();
        let mut radial: Vec<f64> = Vec::new();
        for (&v, &d) in &dist {
            if radial.len() <= d {
                radial.resize(d + 1, 0.0);
            }
            radial[d] += chain.measure(v);
        }
        for k in 1..radial.len() {
            radial[k] += radial[k - 1];
        }
        let mut p = vec![0.0; states.len()];
        p[pos[&x]] = 1.0;
        let mut history = vec![p.clone()];
        for _ in 0..=t_max {
            let mut next = vec![0.0; states.len()];
            for (i, row) in rows.iter().enumerate() {
                if p[i] != 0.0 {
                    for &(j, q) in row {
                        next[j] += p[i] * q;
                    }
                }
            }
            p = next;
            history.push(p.clone());
        }
        for &(_, y) in pairs.iter().filter(|p| p.0 == x) {
            let Some(&d) = dist.get(&y) else { continue };
            let j = pos[&y];
            let m = chain.measure(y);
            for t in times.clone().filter(|&t| t >= d.max(1) && (d * d) as f64 <= max_scaled * t as f64) {
                let k = history[t][j] / m;
                samples.push(HeatSample {
                    t,
                    x,
                    y,
                    distance: d,
                    kernel: k,
                    kernel_pair: k + history[t + 1][j] / m,
                    volume: radial[((t as f64).sqrt().floor() as usize).min(radial.len() - 1)],
                });
            }
        }
    }
    if samples.is_empty() {
        return Err(EstimateError::InvalidArgument("no admissible (t, x, y) samples".into()));
    }
    let pts: Vec<(f64, f64)> = samples
        .iter()
        .filter(|s| s.kernel > 0.0)
        .map(|s| (s.scaled_distance(), (s.kernel * s.volume).ln()))
        .collect();
    let (slope, intercept) = least_squares(&pts);
    let decay = -slope;
    let max_residual = pts.iter().map(|(s, l)| (l - (intercept + slope * s)).abs()).fold(0.0, f64::max);
    let upper_constant = samples
        .iter()
        .map(|s| s.kernel * s.volume * (0.5 * decay * s.scaled_distance()).exp())
        .fold(0.0, f64::max);
    let lower_constant = samples
        .iter()
        .map(|s| s.kernel_pair * s.volume * (2.0 * decay.max(0.0) * s.scaled_distance()).exp())
        .fold(f64::INFINITY, f64::min);
    Ok(GaussianFit { samples, decay, intercept, max_residual, upper_constant, lower_constant })
}

/// `φ(z) = min{1, 2(1 − d(x,z)/r)₊}` on `B(x, 2r+1)` and the measured
/// constants of the four cut-off properties.
#[derive(Debug, Clone, PartialEq)]
pub struct CutoffReport {
    pub center: VertexId,
    pub radius: f64,
    pub values: Vec<(VertexId, f64)>,
    /// `φ ≥ 1` on `B(x, r/2)`.
    pub inner_plateau: bool,
    /// `φ = 0` off `B(x, r)`.
    pub vanishes_outside: bool,
    /// `|φ(z) − φ(y)| ≤ 2 d(z,y)/r` on every edge.
    pub lipschitz: bool,
    /// `(s, max over test functions of LHS/RHS)` for the energy inequality
    /// with `ε = 1`, `θ = 2`.
    pub energy_ratios: Vec<(f64, f64)>,
}

impl CutoffReport {
    pub fn energy_constant(&self) -> f64 {
        self.energy_ratios.iter().map(|e| e.1).fold(0.0, f64::max)
    }
}

pub fn cutoff_theta2(graph: &WeightedGraph, x: VertexId, r: f64) -> Result<CutoffReport, EstimateError> {
    if !(r > 0.0) {
        return Err(EstimateError::InvalidArgument(format!("cut-off radius {r} must be positive")));
    }
    let reach = (2.0 * r).floor() as usize + 1;
    if !graph.ball_is_complete(x, reach) {
        return Err(EstimateError::AmbientTruncated { x, r: reach });
    }
    let ball = graph.ball_with_distances(x, reach);
    let dist: HashMap<VertexId, usize> = ball.iter().copied().collect();
    let phi = |v: VertexId| dist.get(&v).map_or(0.0, |&d| (2.0 * (1.0 - d as f64 / r)).clamp(0.0, 1.0));
    let values: Vec<(VertexId, f64)> = ball.iter().map(|&(v, _)| (v, phi(v))).collect();

    let inner_plateau = ball.iter().filter(|b| b.1 as f64 <= r / 2.0).all(|b| phi(b.0) >= 1.0);
    let vanishes_outside = ball.iter().filter(|b| b.1 as f64 > r).all(|b| phi(b.0) == 0.0);
    let lipschitz = ball
        .iter()
        .filter(|b| b.1 < reach)
        .all(|&(v, _)| graph.neighbors(v).iter().all(|&(w, _)| (phi(v) - phi(w)).abs() <= 2.0 / r + 1e-15));

    let tests: [Box<dyn Fn(VertexId, usize) -> f64>; 4] = [
        Box::new(|_, _| 1.0),
        Box::new(|_, d| d as f64),
        Box::new(|_, d| if d % 2 == 0 { 1.0 } else { -1.0 }),
        Box::new(move |_, d| if (d as f64) <= r / 2.0 { 1.0 } else { 0.0 }),
    ];
    let mut energy_ratios = Vec::new();
    for s in [r / 4.0, r / 2.0, r] {
        let mut worst: f64 = 0.0;
        for f in &tests {
            let f = |v: VertexId| f(v, dist[&v]);
            let mut lhs = 0.0;
            let mut grad = 0.0;
            let mut mass = 0.0;
            for &(v, d) in &ball {
                if d as f64 <= s {
                    let cut: f64 = graph.neighbors(v).iter().map(|&(w, mu)| (phi(v) - phi(w)).powi(2) * mu).sum();
                    lhs += f(v).powi(2) * cut;
                }
                if d as f64 <= 2.0 * s {
                    mass += f(v).powi(2) * graph.pi(v);
                    for &(w, mu) in graph.neighbors(v) {
                        if w > v && dist.get(&w).is_some_and(|&dw| dw as f64 <= 2.0 * s) {
                            grad += (f(v) - f(w)).powi(2) * mu;
                        }
                    }
                }
            }
            let rhs = (s / r).powi(2) * (grad + mass / (s * s));
            if lhs > 0.0 {
                worst = worst.max(lhs / rhs);
            }
        }
        energy_ratios.push((s, worst));
    }
    Ok(CutoffReport { center: x, radius: r, values, inner_plateau, vanishes_outside, lipschitz, energy_ratios })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::absorbing::SubKernel;
    use crate::doob::doob_transform;
    use crate::models::{generate, ModelSpec};
    use crate::spectral::perron_pair;

    #[test]
    fn lazy_lattice_harnack_is_finite_and_scale_stable() {
        let m = generate(ModelSpec::boxed(2, 6)).unwrap();
        let x0 = m.vertex_at(&[0, 0]).unwrap();
        let rep = harnack_constant(&m.kernel, &[3, 5], 0, &[x0]).unwrap();
        let per = rep.per_radius();
        assert!(per.iter().all(|p| p.1.is_finite() && p.1 >= 1.0), "{per:?}");
        assert!(per[1].1 <= 2.0 * per[0].1, "{per:?}");
        assert!((rep.constant_function_ratio - 0.5).abs() < 1e-12);
    }

    #[test]
    fn doob_chain_harnack_is_finite() {
        let m = generate(ModelSpec::triangle(16)).unwrap();
        let sub = SubKernel::new(&m.kernel, m.domain.clone());
        let pair = perron_pair(&sub).unwrap();
        let chain = doob_transform(&sub, &pair).unwrap();
        let x0 = m.local_at(&[5, 5]).unwrap();
        let rep = harnack_constant(&chain, &[2, 3], 0, &[x0]).unwrap();
        assert!(rep.constant.is_finite() && rep.constant >= 1.0);
        assert!(rep.constant_function_ratio <= 2.0);
    }

    #[test]
    fn cylinder_past_patch_is_rejected() {
        let m = generate(ModelSpec::boxed(2, 2).with_margin(1)).unwrap();
        let x0 = m.vertex_at(&[0, 0]).unwrap();
        assert!(matches!(
            harnack_constant(&m.kernel, &[3], 0, &[x0]),
            Err(EstimateError::CylinderTruncated { .. })
        ));
    }

    #[test]
    fn gaussian_fit_on_lazy_lattice() {
        let m = generate(ModelSpec::boxed(2, 10)).unwrap();
        let x = m.vertex_at(&[0, 0]).unwrap();
        let pairs: Vec<(usize, usize)> =
            [[0, 0], [1, 0], [2, 1], [3, 3], [5, 0], [4, 4]].iter().map(|c| (x, m.vertex_at(c).unwrap())).collect();
        let fit = gaussian_bound_fit(&m.kernel, &pairs, 4..=25, 4.0).unwrap();
        assert!(fit.decay > 0.0);
        assert!(fit.lower_bound_holds());
        assert!(fit.max_residual < 2.0, "residual {}", fit.max_residual);
        let diag: Vec<f64> =
            fit.samples.iter().filter(|s| s.distance == 0).map(|s| s.kernel * s.volume).collect();
        let band = diag.iter().cloned().fold(0.0, f64::max) / diag.iter().cloned().fold(f64::INFINITY, f64::min);
        assert!(band < 3.0, "on-diagonal band {band}");
    }

    #[test]
    fn bipartite_parity_needs_the_pair_sum() {
        let m = generate(ModelSpec::line(60)).unwrap();
        let x = m.vertex_at(&[30]).unwrap();
        let y = m.vertex_at(&[33]).unwrap();
        let fit = gaussian_bound_fit(&m.kernel, &[(x, y)], 4..=20, f64::INFINITY).unwrap();
        assert!(fit.samples.iter().any(|s| s.kernel == 0.0));
        assert!(fit.lower_bound_holds());
    }

    #[test]
    fn cutoff_properties() {
        let m = generate(ModelSpec::boxed(2, 10)).unwrap();
        let x = m.vertex_at(&[0, 0]).unwrap();
        for r in [2.0, 4.0, 7.0] {
            let rep = cutoff_theta2(&m.graph, x, r).unwrap();
            assert!(rep.inner_plateau && rep.vanishes_outside && rep.lipschitz);
            assert_eq!(rep.energy_ratios.len(), 3);
            assert!(rep.energy_constant().is_finite());
        }
    }
}
