use std::io::Read;

use ruinkit::absorbing::SubKernel;
use ruinkit::io::{parse_model, parse_model_kind};
use ruinkit::models::{generate, Model, ModelKind, ModelSpec};

use crate::args::{ModelSource, Start};
use crate::error::{CliError, CliResult};

/// Splits `box3` into `("box", Some(3))`.
fn split_dim(name: &str) -> (&str, Option<usize>) {
    let stem = name.trim_end_matches(|c: char| c.is_ascii_digit());
    (stem, name[stem.len()..].parse().ok())
}

pub fn spec_from_name(name: &str, size: usize, dim: Option<usize>, margin: Option<usize>) -> CliResult<ModelSpec> {
    let (stem, suffix) = split_dim(name);
    let kind = parse_model_kind(stem)?;
    let dim = match (suffix, dim) {
        (Some(a), Some(b)) if a != b => return Err(CliError::usage(format!("{name} conflicts with --dim {b}"))),
        (a, b) => a.or(b),
    };
    let spec = match kind {
        ModelKind::Line { lazy: false } => ModelSpec::line(size),
        ModelKind::Line { lazy: true } => ModelSpec::lazy_line(size),
        ModelKind::BoxZn => ModelSpec::boxed(dim.unwrap_or(2), size),
        ModelKind::TriangleGame => ModelSpec::triangle(size),
        ModelKind::PuncturedCube => ModelSpec::punctured_cube(dim.unwrap_or(3), size),
        ModelKind::Custom => return Err(CliError::usage("custom models are read with --input")),
    };
    Ok(match margin {
        Some(m) => spec.with_margin(m),
        None => spec,
    })
}

pub fn read_text(path: Option<&std::path::Path>) -> CliResult<String> {
    let mut text = String::new();
    match path {
        Some(p) if p.as_os_str() != "-" => {
            text = std::fs::read_to_string(p).map_err(CliError::file(p.display().to_string()))?;
        }
        _ => {
            std::io::stdin().read_to_string(&mut text).map_err(CliError::file("<stdin>"))?;
        }
    }
    Ok(text)
}

pub fn load(source: &ModelSource) -> CliResult<Model> {
    if let Some(name) = &source.model {
        if source.input.is_some() {
            return Err(CliError::usage("give either --model or --input, not both"));
        }
        let size = source.size.ok_or_else(|| CliError::usage("--model needs --N"))?;
        return Ok(generate(spec_from_name(name, size, source.dim, source.margin)?)?);
    }
    Ok(parse_model(&read_text(source.input.as_deref())?)?)
}

pub fn sub_kernel(model: &Model) -> SubKernel {
    SubKernel::new(&model.kernel, model.domain.clone())
}

/// Local index of the starting point.
pub fn locate(model: &Model, start: &Start) -> CliResult<usize> {
    let dom = &model.domain;
    if let Some(id) = start.from_id {
        let v = model.graph.by_external_id(id).ok_or_else(|| CliError::usage(format!("no vertex with id {id}")))?;
        return dom.local_index(v).ok_or_else(|| CliError::usage(format!("vertex {id} is not in U")));
    }
    let coords = start.from.as_ref().ok_or_else(|| CliError::usage("give the starting point with --from or --from-id"))?;
    model.local_at(coords).ok_or_else(|| CliError::usage(format!("{coords:?} is not a point of U")))
}

pub fn coords_label(model: &Model, v: usize) -> String {
    match model.graph.coords(v) {
        Some(c) => c.iter().map(i64::to_string).collect::<Vec<_>>().join(","),
        None => String::new(),
    }
}
