//! Direct simulation of the absorbed chain and of the three-player game.
//!
//! Sample `i` draws from `ChaCha8Rng::seed_from_u64(seed)` on stream `i`, so
//! the randomness of every run is fixed by `(seed, i)` alone. Tallies are
//! integer counts merged by addition, which makes results bit-identical for
//! any thread count (set with `RUINKIT_THREADS`).

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::weighted::WeightedAliasIndex;
use rand_distr::Distribution;
use rayon::prelude::*;
use thiserror::Error;

use crate::absorbing::{ExitDistribution, SubKernel};
use crate::domain::HalfEdge;
use crate::graph::VertexId;

/// Samples handed to one task; fixed so chunking never depends on threads.
const CHUNK: u64 = 4096;
pub const THREADS_ENV: &str = "RUINKIT_THREADS";

#[derive(Debug, Error, Clone, PartialEq)]
pub enum SimError {
    #[error("all {censored} runs hit the step cap before exiting")]
    AllCensored { censored: u64 },
    #[error("invalid simulation config: {0}")]
    InvalidConfig(String),
    #[error("start vertex {0} is not in the domain")]
    NotInDomain(VertexId),
    #[error("invalid game start: {0}")]
    InvalidStart(String),
    #[error("could not build thread pool: {0}")]
    ThreadPool(String),
}

impl SimError {
    pub fn is_numerical(&self) -> bool {
        matches!(self, SimError::AllCensored { .. })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Record {
    ExitPoint,
    ExitHalfEdge,
    FirstElimination,
    ExitTime,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SimConfig {
    pub samples: u64,
    pub seed: u64,
    pub max_steps: u64,
    pub record: Record,
}

impl SimConfig {
    /// Step cap `⌈100·T_U⌉`.
    pub fn with_relaxation_time(samples: u64, seed: u64, t_u: f64, record: Record) -> Self {
        Self { samples, seed, max_steps: (100.0 * t_u).ceil().max(1.0) as u64, record }
    }

    fn validate(&self) -> Result<(), SimError> {
        if self.samples == 0 {
            return Err(SimError::InvalidConfig("samples must be at least 1".into()));
        }
        if self.max_steps == 0 {
            return Err(SimError::InvalidConfig("step cap must be at least 1".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord)]
pub enum Player {
    A,
    B,
    C,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Cell {
    Outer(VertexId),
    HalfEdge(HalfEdge),
    Player(Player),
}

/// Exit tallies over completed runs; censored runs are kept apart.
#[derive(Debug, Clone, PartialEq)]
pub struct EmpiricalExit {
    pub cells: Vec<Cell>,
    pub counts: Vec<u64>,
    pub completed: u64,
    pub censored: u64,
}

impl EmpiricalExit {
    pub fn frequency(&self, i: usize) -> f64 {
        self.counts[i] as f64 / self.completed as f64
    }

    pub fn frequency_of(&self, cell: Cell) -> f64 {
        self.cells.iter().position(|c| *c == cell).map_or(0.0, |i| self.frequency(i))
    }

    /// Binomial standard error of cell `i`'s frequency.
    pub fn std_error(&self, i: usize) -> f64 {
        let p = self.frequency(i);
        (p * (1.0 - p) / self.completed as f64).sqrt()
    }

    pub fn wilson(&self, i: usize, z: f64) -> (f64, f64) {
        wilson_interval(self.counts[i], self.completed, z)
    }

    /// `½ Σ |empirical − exact|`, matching cells to the distribution's
    /// outer points or half-edges.
    pub fn tv_distance(&self, exact: &ExitDistribution) -> f64 {
        let mut sum = 0.0;
        let mut seen = vec![false; self.cells.len()];
        for (h, p) in exact.points.iter().zip(&exact.probs) {
            let cell = match self.cells.first() {
                Some(Cell::HalfEdge(_)) => Cell::HalfEdge(*h),
                _ => Cell::Outer(h.outer),
            };
            let idx = self.cells.iter().position(|c| *c == cell);
            let f = idx.map_or(0.0, |i| {
                seen[i] = true;
                self.frequency(i)
            });
            sum += (f - p).abs();
        }
        sum += seen.iter().enumerate().filter(|(_, s)| !**s).map(|(i, _)| self.frequency(i)).sum::<f64>();
        0.5 * sum
    }
}

pub fn wilson_interval(successes: u64, trials: u64, z: f64) -> (f64, f64) {
    if trials == 0 {
        return (0.0, 1.0);
    }
    let n = trials as f64;
    let p = successes as f64 / n;
    let z2 = z * z;
    let denom = 1.0 + z2 / n;
    let center = (p + z2 / (2.0 * n)) / denom;
    let half = z / denom * (p * (1.0 - p) / n + z2 / (4.0 * n * n)).sqrt();
    ((center - half).max(0.0), (center + half).min(1.0))
}

/// Thread pool honouring `RUINKIT_THREADS` (rayon's default otherwise).
pub fn thread_pool() -> Result<rayon::ThreadPool, SimError> {
    let mut b = rayon::ThreadPoolBuilder::new();
    if let Some(n) = std::env::var(THREADS_ENV).ok().and_then(|v| v.trim().parse::<usize>().ok()) {
        b = b.num_threads(n.max(1));
    }
    b.build().map_err(|e| SimError::ThreadPool(e.to_string()))
}

fn sample_rng(seed: u64, index: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(index);
    rng
}

/// Runs `one` for every sample index and merges integer tallies of width
/// `width`; the last slot counts censored runs.
fn tally<F>(samples: u64, width: usize, one: F) -> Result<Vec<u64>, SimError>
where
    F: Fn(u64, &mut [u64]) + Sync,
{
    let chunks = samples.div_ceil(CHUNK);
    let pool = thread_pool()?;
    Ok(pool.install(|| {
        (0..chunks)
            .into_par_iter()
            .map(|c| {
                let mut local = vec![0u64; width + 1];
                for i in c * CHUNK..((c + 1) * CHUNK).min(samples) {
                    one(i, &mut local);
                }
                local
            })
            .reduce(
                || vec![0u64; width + 1],
                |mut a, b| {
                    a.iter_mut().zip(&b).for_each(|(x, y)| *x += y);
                    a
                },
            )
    }))
}

/// Alias tables for the kernel rows of every vertex of `U`.
struct Walker<'a> {
    sub: &'a SubKernel,
    rows: Vec<(Vec<VertexId>, WeightedAliasIndex<f64>)>,
}

impl<'a> Walker<'a> {
    fn new(sub: &'a SubKernel) -> Self {
        let d = sub.domain();
        let rows = d
            .members()
            .iter()
            .map(|&v| {
                let (targets, weights): (Vec<VertexId>, Vec<f64>) =
                    sub.kernel().row(v).into_iter().filter(|&(_, p)| p > 0.0).unzip();
                let alias = WeightedAliasIndex::new(weights).expect("kernel rows are nonnegative with positive mass");
                (targets, alias)
            })
            .collect();
        Self { sub, rows }
    }

    /// Walks from local index `x`; returns `(steps, last inside, first outside)`
    /// or `None` when the cap is hit.
    fn run(&self, x: usize, cap: u64, rng: &mut ChaCha8Rng) -> Option<(u64, VertexId, VertexId)> {
        let d = self.sub.domain();
        let mut cur = x;
        for step in 1..=cap {
            let (targets, alias) = &self.rows[cur];
            let next = targets[alias.sample(rng)];
            match d.local_index(next) {
                Some(j) => cur = j,
                None => return Some((step, d.vertex(cur), next)),
            }
        }
        None
    }
}

/// Samples `X_{τ_U}` from local index `x` (record `ExitPoint` or `ExitHalfEdge`).
pub fn simulate_exits(sub: &SubKernel, x: usize, config: &SimConfig) -> Result<EmpiricalExit, SimError> {
    config.validate()?;
    let d = sub.domain();
    if x >= sub.len() {
        return Err(SimError::NotInDomain(x as VertexId));
    }
    let cells: Vec<Cell> = match config.record {
        Record::ExitPoint => d.outer_boundary().iter().map(|&y| Cell::Outer(y)).collect(),
        Record::ExitHalfEdge => d.extended_boundary().iter().map(|&h| Cell::HalfEdge(h)).collect(),
        other => return Err(SimError::InvalidConfig(format!("simulate_exits cannot record {other:?}"))),
    };
    let walker = Walker::new(sub);
    let width = cells.len();
    let half_edge_slot: std::collections::HashMap<HalfEdge, usize> =
        d.extended_boundary().iter().enumerate().map(|(i, &h)| (h, i)).collect();
    let counts = tally(config.samples, width, |i, out| {
        let mut rng = sample_rng(config.seed, i);
        match walker.run(x, config.max_steps, &mut rng) {
            Some((_, z, y)) => {
                let idx = match config.record {
                    Record::ExitPoint => d.outer_index(y),
                    _ => half_edge_slot.get(&HalfEdge { inner: z, outer: y }).copied(),
                };
                out[idx.expect("exit lands on the boundary")] += 1;
            }
            None => out[width] += 1,
        }
    })?;
    finish(cells, counts)
}

fn finish(cells: Vec<Cell>, mut counts: Vec<u64>) -> Result<EmpiricalExit, SimError> {
    let censored = counts.pop().unwrap();
    let completed: u64 = counts.iter().sum();
    if completed == 0 {
        return Err(SimError::AllCensored { censored });
    }
    Ok(EmpiricalExit { cells, counts, completed, censored })
}

/// The three-player game with `start = (a, b, c)` units: each round a pair
/// is chosen uniformly and one unit passes between them in a fair coin
/// direction, until someone is broke. Tallies who goes first.
pub fn first_elimination(n: u64, start: [u64; 3], config: &SimConfig) -> Result<EmpiricalExit, SimError> {
    config.validate()?;
    if start.iter().sum::<u64>() != n {
        return Err(SimError::InvalidStart(format!("{start:?} does not sum to {n}")));
    }
    if start.contains(&0) {
        return Err(SimError::InvalidStart("every player needs at least one unit".into()));
    }
    const MOVES: [(usize, usize); 6] = [(0, 2), (2, 0), (1, 2), (2, 1), (0, 1), (1, 0)];
    let counts = tally(config.samples, 3, |i, out| {
        let mut rng = sample_rng(config.seed, i);
        let mut s = start.map(|v| v as i64);
        for _ in 0..config.max_steps {
            let (from, to) = MOVES[rng.random_range(0..6)];
            s[from] -= 1;
            s[to] += 1;
            if s[from] == 0 {
                out[from] += 1;
                return;
            }
        }
        out[3] += 1;
    })?;
    finish(vec![Cell::Player(Player::A), Cell::Player(Player::B), Cell::Player(Player::C)], counts)
}

/// Empirical law of `τ_U` from one start.
#[derive(Debug, Clone, PartialEq)]
pub struct ExitTimeProfile {
    /// `histogram[t]` runs exited at step `t` (`t ≤ cap`).
    pub histogram: Vec<u64>,
    pub completed: u64,
    pub censored: u64,
}

impl ExitTimeProfile {
    pub fn total(&self) -> u64 {
        self.completed + self.censored
    }

    /// `P(τ_U ≤ t)` over all runs (censored ones have `τ_U > cap ≥ t`).
    pub fn cdf(&self, t: u64) -> f64 {
        let upto = (t as usize).min(self.histogram.len().saturating_sub(1));
        self.histogram[..=upto].iter().sum::<u64>() as f64 / self.total() as f64
    }

    pub fn wilson(&self, t: u64, z: f64) -> (f64, f64) {
        let upto = (t as usize).min(self.histogram.len().saturating_sub(1));
        wilson_interval(self.histogram[..=upto].iter().sum(), self.total(), z)
    }
}

pub fn exit_time_profile(sub: &SubKernel, x: usize, config: &SimConfig) -> Result<ExitTimeProfile, SimError> {
    config.validate()?;
    if x >= sub.len() {
        return Err(SimError::NotInDomain(x as VertexId));
    }
    let walker = Walker::new(sub);
    let width = config.max_steps as usize + 1;
    let mut counts = tally(config.samples, width, |i, out| {
        let mut rng = sample_rng(config.seed, i);
        match walker.run(x, config.max_steps, &mut rng) {
            Some((t, _, _)) => out[t as usize] += 1,
            None => out[width] += 1,
        }
    })?;
    let censored = counts.pop().unwrap();
    let completed = counts.iter().sum();
    if completed == 0 {
        return Err(SimError::AllCensored { censored });
    }
    Ok(ExitTimeProfile { histogram: counts, completed, censored })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::models::{generate, ModelSpec};

    fn sub_of(spec: ModelSpec) -> (crate::models::Model, SubKernel) {
        let m = generate(spec).unwrap();
        let s = SubKernel::new(&m.kernel, m.domain.clone());
        (m, s)
    }

    #[test]
    fn line_exit_frequency() {
        let (m, s) = sub_of(ModelSpec::line(4));
        let cfg = SimConfig { samples: 200_000, seed: 11, max_steps: 10_000, record: Record::ExitPoint };
        let e = simulate_exits(&s, m.local_at(&[1]).unwrap(), &cfg).unwrap();
        let i = e.cells.iter().position(|c| *c == Cell::Outer(m.vertex_at(&[4]).unwrap())).unwrap();
        assert!((e.frequency(i) - 0.25).abs() < 3.0 * e.std_error(i) + 1e-12);
        assert_eq!(e.censored, 0);
    }

    #[test]
    fn fixed_seed_reproduces() {
        let (m, s) = sub_of(ModelSpec::triangle(8));
        let cfg = SimConfig { samples: 10_000, seed: 3, max_steps: 10_000, record: Record::ExitHalfEdge };
        let x = m.local_at(&[3, 3]).unwrap();
        assert_eq!(simulate_exits(&s, x, &cfg).unwrap(), simulate_exits(&s, x, &cfg).unwrap());
        let other = SimConfig { seed: 4, ..cfg };
        assert_ne!(simulate_exits(&s, x, &cfg).unwrap(), simulate_exits(&s, x, &other).unwrap());
    }

    #[test]
    fn censoring_is_separate() {
        let (m, s) = sub_of(ModelSpec::boxed(2, 6));
        let cfg = SimConfig { samples: 1000, seed: 1, max_steps: 3, record: Record::ExitPoint };
        let err = simulate_exits(&s, m.local_at(&[0, 0]).unwrap(), &cfg).unwrap_err();
        assert_eq!(err, SimError::AllCensored { censored: 1000 });
        let cfg = SimConfig { max_steps: 30, ..cfg };
        let e = simulate_exits(&s, m.local_at(&[5, 0]).unwrap(), &cfg).unwrap();
        assert_eq!(e.completed + e.censored, 1000);
        assert!(e.censored > 0);
    }

    #[test]
    fn exit_time_cannot_beat_distance() {
        let (m, s) = sub_of(ModelSpec::boxed(2, 4));
        let cfg = SimConfig { samples: 5000, seed: 9, max_steps: 100_000, record: Record::ExitTime };
        let p = exit_time_profile(&s, m.local_at(&[0, 0]).unwrap(), &cfg).unwrap();
        assert_eq!(p.cdf(4), 0.0);
        assert_eq!(p.cdf(100_000), 1.0);
    }

    #[test]
    fn game_validation_and_symmetry() {
        let cfg = SimConfig { samples: 20_000, seed: 5, max_steps: 1_000_000, record: Record::FirstElimination };
        assert!(first_elimination(12, [3, 3, 5], &cfg).is_err());
        let e = first_elimination(12, [3, 3, 6], &cfg).unwrap();
        let (a, b) = (e.frequency(0), e.frequency(1));
        let sd = (e.std_error(0).powi(2) + e.std_error(1).powi(2)).sqrt();
        assert!((a - b).abs() < 4.0 * sd);
    }

    #[test]
    fn wilson_contains_estimate() {
        let (lo, hi) = wilson_interval(30, 100, 1.96);
        assert!(lo < 0.3 && 0.3 < hi);
        assert_eq!(wilson_interval(0, 0, 1.96), (0.0, 1.0));
    }
}
