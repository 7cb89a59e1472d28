//! JSON documents for graphs, domains and generated models, and a JSON
//! writer that prints every float with 17 significant digits so output is
//! byte-stable and re-loads exactly.

use std::sync::Arc;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::domain::{Domain, DomainError};
use crate::graph::{GraphBuilder, GraphError, MarkovKernel, VertexSpec, WeightedGraph};
use crate::models::{Model, ModelKind, ModelSpec};

pub const SCHEMA: &str = "ruinkit/1";

#[derive(Debug, Error, Clone, PartialEq)]
pub enum IoError {
    #[error("malformed JSON: {0}")]
    Json(String),
    #[error("unsupported schema {found:?} (expected {SCHEMA:?})")]
    Schema { found: String },
    #[error("unknown vertex id {0} in domain")]
    UnknownId(i64),
    #[error("unknown model kind {0:?}")]
    UnknownModel(String),
    #[error(transparent)]
    Graph(#[from] GraphError),
    #[error(transparent)]
    Domain(#[from] DomainError),
}

impl From<serde_json::Error> for IoError {
    fn from(e: serde_json::Error) -> Self {
        IoError::Json(e.to_string())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VertexDoc {
    pub id: i64,
    pub pi: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub coords: Option<Vec<i64>>,
    /// The patch may continue beyond this vertex (balls reaching it are incomplete).
    #[serde(default, skip_serializing_if = "std::ops::Not::not")]
    pub frontier: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EdgeDoc {
    pub u: i64,
    pub v: i64,
    pub mu: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GraphDoc {
    pub vertices: Vec<VertexDoc>,
    pub edges: Vec<EdgeDoc>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DomainDoc {
    #[serde(rename = "U")]
    pub u: Vec<i64>,
    /// Informational on load; recomputed from `U`.
    #[serde(default)]
    pub boundary: Vec<i64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelInfo {
    pub kind: String,
    pub dim: usize,
    #[serde(rename = "N")]
    pub size: usize,
    pub margin: usize,
}

/// A graph plus a domain, optionally tagged with the generator that made it.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelDoc {
    pub schema: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub model: Option<ModelInfo>,
    pub graph: GraphDoc,
    pub domain: DomainDoc,
}

pub fn graph_to_doc(g: &WeightedGraph) -> GraphDoc {
    let vertices = (0..g.len())
        .map(|v| VertexDoc {
            id: g.external_id(v),
            pi: g.pi(v),
            coords: g.coords(v).map(<[i64]>::to_vec),
            frontier: g.is_frontier(v),
        })
        .collect();
    let edges =
        g.edges().map(|(u, v, mu)| EdgeDoc { u: g.external_id(u), v: g.external_id(v), mu }).collect();
    GraphDoc { vertices, edges }
}

pub fn graph_from_doc(doc: &GraphDoc) -> Result<WeightedGraph, IoError> {
    let mut b = GraphBuilder::new();
    for v in &doc.vertices {
        b.vertex(VertexSpec { id: v.id, pi: v.pi, coords: v.coords.clone(), frontier: v.frontier });
    }
    for e in &doc.edges {
        b.edge(e.u, e.v, e.mu);
    }
    Ok(b.build()?)
}

pub fn domain_to_doc(d: &Domain) -> DomainDoc {
    let g = d.graph();
    DomainDoc {
        u: d.members().iter().map(|&v| g.external_id(v)).collect(),
        boundary: d.outer_boundary().iter().map(|&v| g.external_id(v)).collect(),
    }
}

pub fn domain_from_doc(graph: Arc<WeightedGraph>, doc: &DomainDoc) -> Result<Domain, IoError> {
    let ids = doc.u.iter().map(|&id| graph.by_external_id(id).ok_or(IoError::UnknownId(id))).collect::<Result<Vec<_>, _>>()?;
    Ok(Domain::new(graph, &ids)?)
}

pub fn model_to_doc(m: &Model) -> ModelDoc {
    ModelDoc {
        schema: SCHEMA.into(),
        model: Some(ModelInfo {
            kind: m.spec.kind.name().into(),
            dim: m.spec.dim,
            size: m.spec.size,
            margin: m.spec.margin(),
        }),
        graph: graph_to_doc(&m.graph),
        domain: domain_to_doc(&m.domain),
    }
}

pub fn parse_model_kind(name: &str) -> Result<ModelKind, IoError> {
    Ok(match name {
        "line" => ModelKind::Line { lazy: false },
        "line-lazy" => ModelKind::Line { lazy: true },
        "box" => ModelKind::BoxZn,
        "triangle" => ModelKind::TriangleGame,
        "punctured-cube" => ModelKind::PuncturedCube,
        "custom" => ModelKind::Custom,
        other => return Err(IoError::UnknownModel(other.into())),
    })
}

/// Rebuilds graph, kernel and domain from a document. The generator tag,
/// when present, is returned as a spec but the graph is always the one in
/// the document.
pub fn model_from_doc(doc: &ModelDoc) -> Result<Model, IoError> {
    if doc.schema != SCHEMA {
        return Err(IoError::Schema { found: doc.schema.clone() });
    }
    let graph = Arc::new(graph_from_doc(&doc.graph)?);
    let kernel = MarkovKernel::new(graph.clone())?;
    let domain = Arc::new(domain_from_doc(graph.clone(), &doc.domain)?);
    let spec = match &doc.model {
        Some(info) => ModelSpec {
            kind: parse_model_kind(&info.kind)?,
            dim: info.dim,
            size: info.size,
            margin: Some(info.margin),
        },
        None => ModelSpec { kind: ModelKind::Custom, dim: 0, size: 0, margin: Some(0) },
    };
    Ok(Model { spec, graph, kernel, domain })
}

pub fn parse_model(json: &str) -> Result<Model, IoError> {
    model_from_doc(&serde_json::from_str(json)?)
}

/// Compact JSON with floats as `{:.16e}` (17 significant digits).
#[derive(Debug, Clone, Copy, Default)]
pub struct FixedFloatFormatter;

impl serde_json::ser::Formatter for FixedFloatFormatter {
    fn write_f64<W: ?Sized + std::io::Write>(&mut self, writer: &mut W, value: f64) -> std::io::Result<()> {
        write!(writer, "{value:.16e}")
    }

    fn write_f32<W: ?Sized + std::io::Write>(&mut self, writer: &mut W, value: f32) -> std::io::Result<()> {
        self.write_f64(writer, value as f64)
    }
}

pub fn to_json<T: Serialize + ?Sized>(value: &T) -> Result<String, IoError> {
    let mut buf = Vec::new();
    let mut ser = serde_json::Serializer::with_formatter(&mut buf, FixedFloatFormatter);
    value.serialize(&mut ser)?;
    Ok(String::from_utf8(buf).expect("serde_json writes UTF-8"))
}

/// `{:.16e}` for CSV cells.
pub fn fmt_float(x: f64) -> String {
    format!("{x:.16e}")
}
