use std::collections::BTreeMap;

use ruinkit::absorbing::{exit_by_time, poisson_kernel, BoundaryKind, ExitDistribution, GreensFunction};
use ruinkit::doob::{doob_transform, flux_identity_check, poisson_via_doob};
use ruinkit::estimates::{normalization_product, EstimateContext};
use ruinkit::io::{model_to_doc, to_json};
use ruinkit::linalg::SolverConfig;
use ruinkit::models::{generate, Model, ModelKind};
use ruinkit::montecarlo::{
    exit_time_profile, first_elimination, simulate_exits, Cell, EmpiricalExit, Player, Record,
    SimConfig,
};
use ruinkit::spectral::{full_decomposition, perron_pair, spectral_poisson};
use serde_json::{json, Value};

use crate::args::{Format, ModelSource, RecordArg, Route, Start};
use crate::error::{CliError, CliResult};
use crate::output::{float, Report, Table};
use crate::source::{coords_label, load, locate, spec_from_name, sub_kernel};

/// Two-sided 95% Wilson intervals.
const WILSON_Z: f64 = 1.959963984540054;

pub fn model(kind: &str, size: usize, dim: Option<usize>, margin: Option<usize>) -> CliResult<Report> {
    let m = generate(spec_from_name(kind, size, dim, margin)?)?;
    let doc: Value = serde_json::from_str(&to_json(&model_to_doc(&m))?).expect("model document re-parses");
    Ok(Report::json(doc))
}

fn vertex_json(m: &Model, v: usize) -> Value {
    json!({ "id": m.graph.external_id(v), "coords": m.graph.coords(v) })
}

pub fn exit(source: &ModelSource, start: &Start, t: Option<usize>, extended: bool, route: Route) -> CliResult<Report> {
    let m = load(source)?;
    let sub = sub_kernel(&m);
    let x = locate(&m, start)?;
    let over = if extended { BoundaryKind::Extended } else { BoundaryKind::Outer };
    if t == Some(0) {
        return Err(CliError::usage("--t must be at least 1"));
    }
    let dist: ExitDistribution = match (route, t) {
        (Route::Green, Some(t)) => exit_by_time(&sub, x, t, over)?,
        (Route::Green, None) => poisson_kernel(&sub, &GreensFunction::new(&sub, SolverConfig::default())?, x, over)?,
        (Route::Spectral, None) => spectral_poisson(&full_decomposition(&sub)?, &sub, x, over),
        (Route::Spectral, Some(_)) => return Err(CliError::usage("finite horizons use --route green or doob")),
        (Route::Doob, t) => poisson_via_doob(&doob_transform(&sub, &perron_pair(&sub)?)?, x, over, t)?,
    };

    let g = &m.graph;
    let dim = g.coords(m.domain.vertex(x)).map_or(0, <[i64]>::len);
    let mut header = vec!["y_id".to_string()];
    header.extend((1..=dim).map(|i| format!("y_{i}")));
    if extended {
        header.push("z_id".into());
    }
    header.extend(["P".to_string(), "p_density".to_string()]);
    let mut table = Table::new(header);
    let mut points = Vec::new();
    for ((h, &p), &dens) in dist.points.iter().zip(&dist.probs).zip(&dist.densities) {
        let mut row = vec![g.external_id(h.outer).to_string()];
        row.extend(g.coords(h.outer).unwrap_or(&[]).iter().map(i64::to_string));
        let mut point = json!({ "y": vertex_json(&m, h.outer), "P": p, "p_density": dens });
        if extended {
            row.push(g.external_id(h.inner).to_string());
            point["z"] = vertex_json(&m, h.inner);
        }
        row.extend([float(p), float(dens)]);
        table.push(row);
        points.push(point);
    }
    let json = json!({
        "command": "exit",
        "route": format!("{route:?}").to_lowercase(),
        "boundary": if extended { "extended" } else { "outer" },
        "horizon": t,
        "source": vertex_json(&m, dist.source),
        "total": dist.total(),
        "points": points,
    });
    Ok(Report::json(json).with_table(table, Format::Csv))
}

fn vertex_map(m: &Model, values: impl Iterator<Item = (usize, f64)>) -> BTreeMap<String, f64> {
    values.map(|(local, v)| (m.graph.external_id(m.domain.vertex(local)).to_string(), v)).collect()
}

pub fn eigen(source: &ModelSource, top: usize, full: bool) -> CliResult<Report> {
    if top == 0 {
        return Err(CliError::usage("--top must be at least 1"));
    }
    let m = load(source)?;
    let sub = sub_kernel(&m);
    let (betas, phis): (Vec<f64>, Vec<Vec<f64>>) = if top == 1 {
        let pair = perron_pair(&sub)?;
        (vec![pair.beta0], vec![pair.phi0])
    } else {
        let dec = full_decomposition(&sub)?;
        let k = top.min(dec.len());
        (dec.betas[..k].to_vec(), (0..k).map(|i| dec.phi(i)).collect())
    };
    let shown = if full { phis.len() } else { 1 };
    let mut header = vec!["vertex_id".to_string(), "coords".to_string()];
    header.extend((0..shown).map(|i| format!("phi{i}")));
    let mut table = Table::new(header);
    for local in 0..sub.len() {
        let v = m.domain.vertex(local);
        let mut row = vec![m.graph.external_id(v).to_string(), format!("\"{}\"", coords_label(&m, v))];
        row.extend(phis[..shown].iter().map(|phi| float(phi[local])));
        table.push(row);
    }
    let mut json = json!({
        "command": "eigen",
        "beta": betas,
        "t_u": 1.0 / (1.0 - betas[0]),
        "phi0": vertex_map(&m, phis[0].iter().copied().enumerate()),
    });
    if full {
        json["phi"] = phis.iter().map(|phi| json!(vertex_map(&m, phi.iter().copied().enumerate()))).collect();
    }
    Ok(Report::json(json).with_table(table, Format::Json))
}

pub fn doob(source: &ModelSource) -> CliResult<Report> {
    let m = load(source)?;
    let sub = sub_kernel(&m);
    let chain = doob_transform(&sub, &perron_pair(&sub)?)?;
    let mut table = Table::new(["from_id", "to_id", "p"]);
    let mut transitions = Vec::new();
    for x in 0..chain.len() {
        for (y, p) in chain.kernel().row(x) {
            let (a, b) = (m.graph.external_id(m.domain.vertex(x)), m.graph.external_id(m.domain.vertex(y)));
            table.push(vec![a.to_string(), b.to_string(), float(p)]);
            transitions.push(json!({ "from": a, "to": b, "p": p }));
        }
    }
    let json = json!({
        "command": "doob",
        "beta0": chain.pair().beta0,
        "t_u": chain.pair().t_u,
        "measure": vertex_map(&m, chain.measure().iter().copied().enumerate()),
        "row_sum_err": chain.row_sum_error(),
        "reversibility_err": chain.reversibility_error(),
        "transitions": transitions,
    });
    Ok(Report::json(json).with_table(table, Format::Json))
}

fn cell_label(m: Option<&Model>, cell: &Cell) -> String {
    let id = |v: usize| m.map_or(v as i64, |m| m.graph.external_id(v));
    match cell {
        Cell::Outer(y) => format!("y={}", id(*y)),
        Cell::HalfEdge(h) => format!("{}->{}", id(h.inner), id(h.outer)),
        Cell::Player(Player::A) => "A".into(),
        Cell::Player(Player::B) => "B".into(),
        Cell::Player(Player::C) => "C".into(),
    }
}

fn counts_report(m: Option<&Model>, emp: &EmpiricalExit, meta: Value) -> Report {
    let mut table = Table::new(["cell", "count", "frequency", "std_error", "ci_low", "ci_high"]);
    let mut cells = Vec::new();
    for (i, cell) in emp.cells.iter().enumerate() {
        let (lo, hi) = emp.wilson(i, WILSON_Z);
        let label = cell_label(m, cell);
        table.push(vec![
            label.clone(),
            emp.counts[i].to_string(),
            float(emp.frequency(i)),
            float(emp.std_error(i)),
            float(lo),
            float(hi),
        ]);
        cells.push(json!({
            "cell": label,
            "count": emp.counts[i],
            "frequency": emp.frequency(i),
            "std_error": emp.std_error(i),
            "ci": [lo, hi],
        }));
    }
    let mut json = meta;
    json["completed"] = json!(emp.completed);
    json["censored"] = json!(emp.censored);
    json["cells"] = Value::Array(cells);
    Report::json(json).with_table(table, Format::Csv)
}

pub fn simulate(
    source: &ModelSource,
    start: &Start,
    samples: u64,
    seed: u64,
    record: RecordArg,
    max_steps: Option<u64>,
) -> CliResult<Report> {
    let meta = json!({ "command": "simulate", "samples": samples, "seed": seed, "record": format!("{record:?}") });
    if record == RecordArg::FirstElimination {
        return first_elimination_report(source, start, samples, seed, max_steps, meta);
    }
    let m = load(source)?;
    let sub = sub_kernel(&m);
    let x = locate(&m, start)?;
    let record = match record {
        RecordArg::ExitPoint => Record::ExitPoint,
        RecordArg::ExitHalfEdge => Record::ExitHalfEdge,
        RecordArg::ExitTime => Record::ExitTime,
        RecordArg::FirstElimination => unreachable!("handled above"),
    };
    let mut cfg = SimConfig::with_relaxation_time(samples, seed, perron_pair(&sub)?.t_u, record);
    if let Some(cap) = max_steps {
        cfg.max_steps = cap;
    }
    let mut meta = meta;
    meta["source"] = vertex_json(&m, m.domain.vertex(x));
    meta["max_steps"] = json!(cfg.max_steps);
    if record == Record::ExitTime {
        let prof = exit_time_profile(&sub, x, &cfg)?;
        let mut table = Table::new(["t", "count", "frequency"]);
        let total = prof.total() as f64;
        for (t, &c) in prof.histogram.iter().enumerate().filter(|(_, &c)| c > 0) {
            table.push(vec![t.to_string(), c.to_string(), float(c as f64 / total)]);
        }
        meta["completed"] = json!(prof.completed);
        meta["censored"] = json!(prof.censored);
        meta["histogram"] = json!(prof.histogram);
        return Ok(Report::json(meta).with_table(table, Format::Csv));
    }
    let emp = simulate_exits(&sub, x, &cfg)?;
    Ok(counts_report(Some(&m), &emp, meta))
}

/// The three-player game needs only `N` and the starting fortunes, so no
/// model is built.
fn first_elimination_report(
    source: &ModelSource,
    start: &Start,
    samples: u64,
    seed: u64,
    max_steps: Option<u64>,
    mut meta: Value,
) -> CliResult<Report> {
    if let Some(name) = &source.model {
        if spec_from_name(name, 3, None, None)?.kind != ModelKind::TriangleGame {
            return Err(CliError::usage("first-elimination runs on the triangle model"));
        }
    }
    let fortunes: [u64; 3] = match (&start.from, source.size) {
        (Some(c), size) if c.len() == 3 => {
            let f = [c[0], c[1], c[2]].map(|v| u64::try_from(v).unwrap_or(0));
            if size.is_some_and(|n| n as u64 != f.iter().sum::<u64>()) {
                return Err(CliError::usage("fortunes in --from must sum to --N"));
            }
            f
        }
        (Some(c), Some(n)) if c.len() == 2 => {
            let (a, b) = (u64::try_from(c[0]).unwrap_or(0), u64::try_from(c[1]).unwrap_or(0));
            [a, b, (n as u64).checked_sub(a + b).ok_or_else(|| CliError::usage("--from exceeds --N"))?]
        }
        (None, Some(n)) => {
            let q = n as u64 / 4;
            [q, q, n as u64 - 2 * q]
        }
        _ => return Err(CliError::usage("first-elimination needs --N, or three fortunes in --from")),
    };
    let n: u64 = fortunes.iter().sum();
    let cfg = SimConfig {
        samples,
        seed,
        max_steps: max_steps.unwrap_or(1000 * n * n),
        record: Record::FirstElimination,
    };
    meta["fortunes"] = json!(fortunes);
    meta["max_steps"] = json!(cfg.max_steps);
    let emp = first_elimination(n, fortunes, &cfg)?;
    Ok(counts_report(None, &emp, meta))
}

pub fn report(source: &ModelSource) -> CliResult<Report> {
    let m = load(source)?;
    let ctx = EstimateContext::from_model(&m)?;
    let dom = ctx.domain();
    let flux = flux_identity_check(&ctx.sub, &ctx.pair);
    let center = dom.vertex(ctx.center());
    let fields: Vec<(&str, Value)> = vec![
        ("model", json!(m.spec.kind.name())),
        ("dim", json!(m.spec.dim)),
        ("N", json!(m.spec.size)),
        ("U_size", json!(dom.len())),
        ("boundary_size", json!(dom.outer_boundary().len())),
        ("extended_boundary_size", json!(dom.extended_boundary().len())),
        ("depth", json!(ctx.depth())),
        ("center", vertex_json(&m, center)),
        ("beta0", json!(ctx.pair.beta0)),
        ("t_u", json!(ctx.t_u())),
        ("phi0_center", json!(ctx.phi(ctx.center()))),
        ("normalization_product", json!(normalization_product(&ctx))),
        ("flux_boundary", json!(flux.boundary_flux)),
        ("flux_interior", json!(flux.interior_mass)),
        ("flux_relative_residual", json!(flux.relative)),
    ];
    let mut table = Table::new(["key", "value"]);
    for (k, v) in &fields {
        let cell = match v {
            Value::Number(x) if x.is_f64() => float(x.as_f64().unwrap()),
            Value::String(s) => s.clone(),
            other => format!("\"{}\"", other.to_string().replace('"', "")),
        };
        table.push(vec![k.to_string(), cell]);
    }
    let mut json = json!({ "command": "report" });
    for (k, v) in fields {
        json[k] = v;
    }
    Ok(Report::json(json).with_table(table, Format::Json))
}
