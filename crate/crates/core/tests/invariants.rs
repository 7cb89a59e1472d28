//! Structural invariants on randomly grown connected domains of a planar
//! lattice patch and on random triangle sizes.

use std::sync::Arc;

use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use ruinkit::absorbing::{exit_profile, poisson_kernel, BoundaryKind, GreensFunction, SubKernel};
use ruinkit::domain::Domain;
use ruinkit::doob::{conjugation_error, doob_transform, flux_identity_check};
use ruinkit::estimates::{h_function, EstimateContext};
use ruinkit::io::{model_to_doc, parse_model, to_json};
use ruinkit::linalg::SolverConfig;
use ruinkit::models::{generate, Model, ModelSpec};
use ruinkit::spectral::perron_pair;

fn patch() -> &'static Model {
    static PATCH: std::sync::OnceLock<Model> = std::sync::OnceLock::new();
    PATCH.get_or_init(|| generate(ModelSpec::boxed(2, 6)).unwrap())
}

/// Connected vertex set of `size` grown from the patch origin.
fn grow(seed: u64, size: usize) -> Vec<usize> {
    let m = patch();
    let g = &m.graph;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut set = vec![m.vertex_at(&[0, 0]).unwrap()];
    let mut frontier: Vec<usize> = g.neighbors(set[0]).iter().map(|e| e.0).collect();
    while set.len() < size && !frontier.is_empty() {
        let v = frontier.swap_remove(rng.random_range(0..frontier.len()));
        if !set.contains(&v) {
            set.push(v);
            frontier.extend(g.neighbors(v).iter().map(|e| e.0).filter(|w| !set.contains(w)));
        }
    }
    set
}

fn sub_on(vertices: &[usize]) -> SubKernel {
    let m = patch();
    let dom = Arc::new(Domain::new(m.graph.clone(), vertices).unwrap());
    SubKernel::new(&m.kernel, dom)
}

fn domains() -> impl Strategy<Value = (u64, usize)> {
    (any::<u64>(), 2usize..60)
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(32))]

    #[test]
    fn green_function_is_pi_symmetric((seed, size) in domains()) {
        let sub = sub_on(&grow(seed, size));
        let greens = GreensFunction::new(&sub, SolverConfig::default()).unwrap();
        let pi = sub.pi();
        let rows: Vec<Vec<f64>> = (0..sub.len()).map(|x| greens.row(x).unwrap()).collect();
        for x in 0..sub.len() {
            for y in 0..sub.len() {
                let (a, b) = (pi[x] * rows[x][y], pi[y] * rows[y][x]);
                prop_assert!((a - b).abs() <= 1e-10 * a.abs().max(b.abs()), "π(x)G(x,y)={a}, π(y)G(y,x)={b}");
            }
        }
    }

    #[test]
    fn flux_identity_holds((seed, size) in domains()) {
        let sub = sub_on(&grow(seed, size));
        let rep = flux_identity_check(&sub, &perron_pair(&sub).unwrap());
        prop_assert!(rep.relative <= 1e-10, "relative residual {}", rep.relative);
    }

    #[test]
    fn exit_distribution_is_a_harmonic_probability((seed, size) in domains()) {
        let sub = sub_on(&grow(seed, size));
        let greens = GreensFunction::new(&sub, SolverConfig::default()).unwrap();
        let dom = sub.domain().clone();
        let dists: Vec<_> = (0..sub.len()).map(|x| poisson_kernel(&sub, &greens, x, BoundaryKind::Outer).unwrap()).collect();
        for d in &dists {
            prop_assert!((d.total() - 1.0).abs() <= 1e-10);
            prop_assert!(d.probs.iter().all(|&p| p >= -1e-15));
        }
        // P(·, y) is harmonic in U, with boundary values δ_y
        let k = sub.kernel();
        let y = dom.outer_boundary()[0];
        for x in 0..sub.len() {
            let mean: f64 = k
                .row(dom.vertex(x))
                .into_iter()
                .map(|(w, p)| p * match dom.local_index(w) {
                    Some(lw) => dists[lw].at(y),
                    None => f64::from(w == y),
                })
                .sum();
            prop_assert!((mean - dists[x].at(y)).abs() <= 1e-12);
        }
    }

    #[test]
    fn exit_by_time_increases_to_the_poisson_kernel((seed, size) in domains(), t in 1usize..40) {
        let sub = sub_on(&grow(seed, size));
        let greens = GreensFunction::new(&sub, SolverConfig::default()).unwrap();
        let limit = poisson_kernel(&sub, &greens, 0, BoundaryKind::Extended).unwrap();
        let prof = exit_profile(&sub, 0, &[t, t + 1], BoundaryKind::Extended).unwrap();
        for i in 0..limit.probs.len() {
            prop_assert!(prof[0].probs[i] <= prof[1].probs[i] + 1e-15);
            prop_assert!(prof[1].probs[i] <= limit.probs[i] + 1e-12);
        }
    }

    #[test]
    fn bottom_eigenvalue_is_monotone_under_inclusion(seed in any::<u64>(), size in 3usize..50) {
        let big = grow(seed, size);
        let small = &big[..big.len() - 1];
        let (b_small, b_big) = (perron_pair(&sub_on(small)).unwrap().beta0, perron_pair(&sub_on(&big)).unwrap().beta0);
        prop_assert!(b_small <= b_big + 1e-12, "β₀ {b_small} > {b_big}");
    }

    #[test]
    fn doob_chain_is_stochastic_reversible_and_conjugate((seed, size) in domains(), t in 0usize..60) {
        let sub = sub_on(&grow(seed, size));
        let chain = doob_transform(&sub, &perron_pair(&sub).unwrap()).unwrap();
        prop_assert!(chain.row_sum_error() <= 1e-12);
        prop_assert!(chain.reversibility_error() <= 1e-12);
        let n = sub.len();
        prop_assert!(conjugation_error(&chain, t, seed as usize % n, (seed >> 32) as usize % n) <= 1e-10);
    }

    #[test]
    fn h_function_is_nondecreasing(n in 6usize..14, pick in any::<u64>()) {
        let m = generate(ModelSpec::triangle(n)).unwrap();
        let ctx = EstimateContext::from_model(&m).unwrap();
        let len = ctx.domain().len();
        let (x, z) = (pick as usize % len, (pick >> 32) as usize % len);
        let p = ctx.profile(x).unwrap();
        let d = p.inner_distance(z) as u64;
        let mut prev = 0.0;
        for t in (d + 1)..(d + 1 + 4 * (n * n) as u64) {
            let h = h_function(&p, t, z).unwrap();
            prop_assert!(h >= prev - 1e-12, "H dropped at t={t}: {prev} -> {h}");
            prev = h;
        }
    }

    #[test]
    fn model_json_round_trip_preserves_results(n in 3usize..10) {
        let m = generate(ModelSpec::triangle(n)).unwrap();
        let back = parse_model(&to_json(&model_to_doc(&m)).unwrap()).unwrap();
        let sub = |m: &Model| SubKernel::new(&m.kernel, m.domain.clone());
        let (a, b) = (perron_pair(&sub(&m)).unwrap(), perron_pair(&sub(&back)).unwrap());
        prop_assert!((a.beta0 - b.beta0).abs() <= 1e-15 * a.beta0.abs());
        for (u, v) in a.phi0.iter().zip(&b.phi0) {
            prop_assert!((u - v).abs() <= 1e-15 * u.abs().max(1.0));
        }
    }
}
