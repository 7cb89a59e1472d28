//! Invariant suites behind `ruinkit verify`. Each suite returns named checks
//! with the measured value and its limit; `all` runs the suites in order and
//! stops at the first one with a violation.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use ruinkit::absorbing::{poisson_kernel, BoundaryKind, GreensFunction, SubKernel};
use ruinkit::doob::{conjugation_error, doob_poisson_matrix, doob_transform, flux_identity_check, DoobChain, DEFAULT_STEP_BUDGET};
use ruinkit::estimates::{
    carleson_check, central_ratio_report, eigen_ratio_exponent, gaussian_bound_fit, grp_ratio_report, harnack_constant,
    normalization_product, EstimateContext, RatioReport,
};
use ruinkit::linalg::SolverConfig;
use ruinkit::models::{Model, ModelKind};
use ruinkit::spectral::{full_decomposition, spectral_poisson, SpectralError};
use serde_json::{json, Value};

use crate::args::{Format, ModelSource, Suite};
use crate::error::{CliError, CliResult};
use crate::output::{float, Report, Table};
use crate::source::load;

const ROW_SUM_TOL: f64 = 1e-12;
const REVERSIBILITY_TOL: f64 = 1e-12;
const CONJUGATION_TOL: f64 = 1e-10;
const FLUX_TOL: f64 = 1e-10;
const ROUTE_TOL: f64 = 1e-8;
const NORMALIZATION_BAND: (f64, f64) = (0.05, 20.0);
/// Sources used for route agreement when `U` is large.
const ROUTE_SOURCES: usize = 16;
const CONJUGATION_SAMPLES: usize = 32;

#[derive(Debug, Clone)]
struct Check {
    invariant: &'static str,
    value: f64,
    limit: String,
    pass: bool,
}

impl Check {
    fn at_most(invariant: &'static str, value: f64, limit: f64) -> Self {
        Check { invariant, value, limit: format!("<= {}", float(limit)), pass: value <= limit }
    }

    fn within(invariant: &'static str, value: f64, (lo, hi): (f64, f64)) -> Self {
        Check { invariant, value, limit: format!("[{}, {}]", float(lo), float(hi)), pass: (lo..=hi).contains(&value) }
    }

    fn finite(invariant: &'static str, value: f64) -> Self {
        Check { invariant, value, limit: "finite, > 0".into(), pass: value.is_finite() && value > 0.0 }
    }

    fn json(&self) -> Value {
        json!({ "invariant": self.invariant, "value": self.value, "limit": self.limit, "pass": self.pass })
    }
}

struct SuiteResult {
    name: &'static str,
    checks: Vec<Check>,
    tables: Value,
    pairs: Vec<RatioReport>,
}

/// Shared state so `all` builds the Perron pair and Doob chain once.
struct Setup {
    model: Model,
    ctx: EstimateContext,
    chain: DoobChain,
    seed: u64,
}

impl Setup {
    fn sub(&self) -> &SubKernel {
        &self.ctx.sub
    }

    /// Every source for small domains, otherwise a seeded sample.
    fn sources(&self, rng: &mut ChaCha8Rng) -> Vec<usize> {
        let n = self.sub().len();
        if n <= 4 * ROUTE_SOURCES {
            return (0..n).collect();
        }
        let mut picked: Vec<usize> = (0..ROUTE_SOURCES).map(|_| rng.random_range(0..n)).collect();
        picked.sort_unstable();
        picked.dedup();
        picked
    }
}

fn doob_suite(s: &Setup) -> CliResult<SuiteResult> {
    let sub = s.sub();
    let mut rng = ChaCha8Rng::seed_from_u64(s.seed);
    let flux = flux_identity_check(sub, &s.ctx.pair);

    let n = sub.len();
    let conjugation = (0..CONJUGATION_SAMPLES)
        .map(|_| conjugation_error(&s.chain, rng.random_range(0..=50), rng.random_range(0..n), rng.random_range(0..n)))
        .fold(0.0, f64::max);

    let greens = GreensFunction::new(sub, SolverConfig::default())?;
    let doob = doob_poisson_matrix(&s.chain, BoundaryKind::Extended, None, DEFAULT_STEP_BUDGET)?;
    let decomp = match full_decomposition(sub) {
        Ok(d) => Some(d),
        Err(SpectralError::TooLargeForDense { .. }) => None,
        Err(e) => return Err(e.into()),
    };
    let mut route: f64 = 0.0;
    for x in s.sources(&mut rng) {
        let direct = poisson_kernel(sub, &greens, x, BoundaryKind::Extended)?;
        route = route.max(max_diff(&direct.probs, &doob[x].probs));
        if let Some(d) = &decomp {
            route = route.max(max_diff(&direct.probs, &spectral_poisson(d, sub, x, BoundaryKind::Extended).probs));
        }
    }
    let checks = vec![
        Check::at_most("row_sum_err", s.chain.row_sum_error(), ROW_SUM_TOL),
        Check::at_most("reversibility_err", s.chain.reversibility_error(), REVERSIBILITY_TOL),
        Check::at_most("conjugation_err", conjugation, CONJUGATION_TOL),
        Check::at_most("flux_residual", flux.relative, FLUX_TOL),
        Check::at_most("route_agreement_err", route, ROUTE_TOL),
    ];
    let tables = json!({
        "flux": { "boundary": flux.boundary_flux, "interior": flux.interior_mass },
        "spectral_route": decomp.is_some(),
    });
    Ok(SuiteResult { name: "doob", checks, tables, pairs: Vec::new() })
}

fn max_diff(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(p, q)| (p - q).abs()).fold(0.0, f64::max)
}

fn ratio_json(r: &RatioReport) -> Value {
    json!({ "label": r.label, "size": r.size, "pairs": r.pairs.len(), "min": r.min, "max": r.max, "spread": r.spread })
}

fn estimate_suite(s: &Setup) -> CliResult<SuiteResult> {
    let greens = GreensFunction::new(s.sub(), SolverConfig::default())?;
    let mut pairs = vec![central_ratio_report(&s.model, &s.ctx, &greens)?];
    if s.model.spec.kind == ModelKind::TriangleGame {
        pairs.push(grp_ratio_report(&s.model, s.sub(), &greens)?);
    }
    let mut checks = vec![Check::within("normalization_product", normalization_product(&s.ctx), NORMALIZATION_BAND)];
    checks.extend(pairs.iter().map(|r| Check::finite("ratio_spread_finite", r.spread)));
    let tables = json!({ "ratio_reports": pairs.iter().map(ratio_json).collect::<Vec<_>>() });
    Ok(SuiteResult { name: "estimate", checks, tables, pairs })
}

fn harnack_suite(s: &Setup, radii: &[usize]) -> CliResult<SuiteResult> {
    let rep = harnack_constant(&s.chain, radii, 0, &[s.ctx.center()])?;
    let per_scale: Vec<Value> = rep
        .scales
        .iter()
        .map(|sc| json!({ "radius": sc.radius, "period": sc.period, "constant": sc.constant, "data": sc.data }))
        .collect();
    let checks = vec![
        Check::finite("harnack_constant_finite", rep.constant),
        Check::at_most("constant_function_ratio", rep.constant_function_ratio, 2.0),
    ];
    Ok(SuiteResult { name: "harnack", checks, tables: json!({ "theta": rep.theta, "scales": per_scale }), pairs: Vec::new() })
}

fn heatkernel_suite(s: &Setup) -> CliResult<SuiteResult> {
    let o = s.ctx.center();
    let r = s.ctx.depth().max(1);
    let pairs: Vec<(usize, usize)> = (0..s.sub().len()).map(|z| (o, z)).collect();
    let fit = gaussian_bound_fit(&s.chain, &pairs, 1..=r * r, 4.0)?;
    let checks = vec![
        Check::finite("gaussian_decay", fit.decay),
        Check::finite("upper_constant", fit.upper_constant),
        Check::finite("lower_constant", fit.lower_constant),
    ];
    let tables = json!({
        "samples": fit.samples.len(),
        "decay": fit.decay,
        "intercept": fit.intercept,
        "max_residual": fit.max_residual,
        "upper_constant": fit.upper_constant,
        "lower_constant": fit.lower_constant,
    });
    Ok(SuiteResult { name: "heatkernel", checks, tables, pairs: Vec::new() })
}

fn carleson_suite(s: &Setup) -> CliResult<SuiteResult> {
    let depth = s.ctx.depth().max(1);
    let radii: Vec<usize> = [1, 2, 4, 8].into_iter().filter(|&r| r <= depth).collect();
    let starts: Vec<usize> = (0..s.sub().len()).collect();
    let rep = carleson_check(&s.ctx, &starts, &radii)?;
    let exponent = eigen_ratio_exponent(&s.ctx, &starts);
    let mut checks: Vec<Check> = rep.rows.iter().map(|row| Check::finite("carleson_constant", row.carleson)).collect();
    checks.extend(rep.rows.iter().map(|row| Check::finite("volume_ratio_spread", row.volume_spread())));
    checks.push(Check::finite("eigen_ratio_exponent", exponent));
    let rows: Vec<Value> = rep
        .rows
        .iter()
        .map(|row| {
            json!({
                "radius": row.radius,
                "carleson": row.carleson,
                "volume_min": row.volume_min,
                "volume_max": row.volume_max,
            })
        })
        .collect();
    Ok(SuiteResult { name: "carleson", checks, tables: json!({ "rows": rows, "eigen_ratio_exponent": exponent }), pairs: Vec::new() })
}

fn run_suite(s: &Setup, suite: Suite, radii: &[usize]) -> CliResult<SuiteResult> {
    match suite {
        Suite::Doob => doob_suite(s),
        Suite::Estimate => estimate_suite(s),
        Suite::Harnack => harnack_suite(s, radii),
        Suite::Heatkernel => heatkernel_suite(s),
        Suite::Carleson => carleson_suite(s),
        Suite::All => unreachable!("expanded by the caller"),
    }
}

/// Runs the suites and returns the report together with the first
/// violation, if any; the caller writes the report before failing.
pub fn verify(source: &ModelSource, suite: Suite, radii: Option<&[usize]>, seed: u64) -> CliResult<(Report, Option<CliError>)> {
    let model = load(source)?;
    let ctx = EstimateContext::from_model(&model)?;
    let chain = doob_transform(&ctx.sub, &ctx.pair)?;
    let setup = Setup { model, ctx, chain, seed };
    let radii = radii.unwrap_or(&[1, 2]);
    let order = match suite {
        Suite::All => vec![Suite::Doob, Suite::Estimate, Suite::Harnack, Suite::Heatkernel, Suite::Carleson],
        one => vec![one],
    };

    let mut suites = serde_json::Map::new();
    let mut table = Table::new(["label", "size", "x", "y", "exact", "estimate", "ratio"]);
    let mut violation = None;
    for s in order {
        let res = run_suite(&setup, s, radii)?;
        for r in &res.pairs {
            for p in &r.pairs {
                table.push(vec![
                    r.label.clone(),
                    r.size.to_string(),
                    format!("\"{}\"", join(&p.x)),
                    format!("\"{}\"", join(&p.y)),
                    float(p.exact),
                    float(p.estimate),
                    float(p.ratio),
                ]);
            }
        }
        let mut flat = json!({ "checks": res.checks.iter().map(Check::json).collect::<Vec<_>>() });
        if let Value::Object(extra) = res.tables {
            flat.as_object_mut().unwrap().extend(extra);
        }
        // route agreement is also surfaced at the top level of `verify doob` output
        if res.name == "doob" {
            for c in &res.checks {
                flat[c.invariant] = json!(c.value);
            }
        }
        suites.insert(res.name.into(), flat);
        if let Some(bad) = res.checks.iter().find(|c| !c.pass) {
            violation = Some(CliError::Violation {
                invariant: format!("{}.{}", res.name, bad.invariant),
                detail: format!("measured {} against limit {}", float(bad.value), bad.limit),
            });
            break;
        }
    }
    let m = &setup.model.spec;
    let json = json!({
        "command": "verify",
        "suite": format!("{suite:?}").to_lowercase(),
        "model": { "kind": m.kind.name(), "dim": m.dim, "N": m.size },
        "pass": violation.is_none(),
        "suites": suites,
    });
    let mut report = Report::json(json);
    if !table.rows.is_empty() {
        report = report.with_table(table, Format::Json);
    }
    Ok((report, violation))
}

fn join(c: &[i64]) -> String {
    c.iter().map(i64::to_string).collect::<Vec<_>>().join(",")
}
