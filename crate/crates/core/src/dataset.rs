//! Reading and writing navigation instance files.
//!
//! A dataset is one JSON document per split:
//!
//! ```json
//! {
//!   "split": "test_seen",
//!   "graph": { "nodes": [...], "edges": [...], "pois": [...] },
//!   "instances": [
//!     { "id": "...", "instruction": "...", "route": ["a", "b"],
//!       "initial_heading": 208.6,
//!       "nodes": [...], "edges": [...], "pois": [...] }
//!   ]
//! }
//! ```
//!
//! The top-level `graph` is optional and shared by every instance that does
//! not carry its own `nodes`. Edges are directed; streets list both directions.

use std::collections::BTreeMap;
use std::path::Path;
use std::sync::Arc;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::geo::{self, GeoPoint, Heading};
use crate::graph::{GraphBuilder, GraphError, MapGraph, NodeId, Poi};
use crate::instruction::{self, SubGoalPlan};

#[derive(Debug, Error)]
pub enum DatasetError {
    #[error("reading {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error("schema error in {context}: {message}")]
    Schema { context: String, message: String },
    #[error("integrity error in instance {instance}: {field}: {message}")]
    Integrity {
        instance: String,
        field: String,
        message: String,
    },
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct NodeDoc {
    pub id: String,
    pub lat: f64,
    pub lng: f64,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct EdgeDoc {
    pub from: String,
    pub to: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub heading: Option<f64>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct PoiDoc {
    pub id: String,
    pub lat: f64,
    pub lng: f64,
    pub tags: BTreeMap<String, String>,
}

#[derive(Debug, Clone, Default, Serialize, Deserialize)]
pub struct GraphDoc {
    pub nodes: Vec<NodeDoc>,
    #[serde(default)]
    pub edges: Vec<EdgeDoc>,
    #[serde(default)]
    pub pois: Vec<PoiDoc>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct InstanceDoc {
    pub id: String,
    pub instruction: String,
    pub route: Vec<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub initial_heading: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub nodes: Option<Vec<NodeDoc>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub edges: Option<Vec<EdgeDoc>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub pois: Option<Vec<PoiDoc>>,
    /// Pre-extracted plan in the extraction response shape.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub plan: Option<serde_json::Value>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub difficulty: Option<String>,
}

#[derive(Debug, Clone, Default, Serialize, Deserialize)]
pub struct DatasetDoc {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub split: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub graph: Option<GraphDoc>,
    pub instances: Vec<InstanceDoc>,
}

/// One navigation task: an instruction over a graph with its reference route.
#[derive(Debug, Clone)]
pub struct Instance {
    pub id: String,
    pub graph: Arc<MapGraph>,
    pub instruction: String,
    pub route: Vec<NodeId>,
    pub initial_heading: Heading,
    pub plan: Option<SubGoalPlan>,
    pub difficulty: Option<String>,
}

impl Instance {
    pub fn start(&self) -> &NodeId {
        &self.route[0]
    }

    pub fn goal(&self) -> &NodeId {
        self.route.last().expect("route has at least two nodes")
    }
}

pub fn build_graph(doc: &GraphDoc) -> Result<MapGraph, GraphError> {
    let mut b = GraphBuilder::new();
    for n in &doc.nodes {
        let pos = GeoPoint::new(n.lat, n.lng).map_err(|source| GraphError::InvalidPosition {
            id: n.id.clone(),
            source,
        })?;
        b.node(n.id.as_str(), pos);
    }
    for e in &doc.edges {
        b.edge(e.from.as_str(), e.to.as_str(), e.heading);
    }
    for p in &doc.pois {
        let position = GeoPoint::new(p.lat, p.lng).map_err(|source| GraphError::InvalidPosition {
            id: p.id.clone(),
            source,
        })?;
        b.poi(Poi {
            id: p.id.clone(),
            position,
            tags: p.tags.clone(),
        });
    }
    b.build()
}

fn graph_error_field(e: &GraphError) -> &'static str {
    match e {
        GraphError::DanglingEdge { .. } | GraphError::CoincidentEdge { .. } => "edges",
        GraphError::UntaggedPoi(_) | GraphError::DuplicatePoi(_) => "pois",
        _ => "nodes",
    }
}

fn instance_from_doc(doc: InstanceDoc, shared: Option<&Arc<MapGraph>>) -> Result<Instance, DatasetError> {
    let integrity = |field: &str, message: String| DatasetError::Integrity {
        instance: doc.id.clone(),
        field: field.to_owned(),
        message,
    };

    let graph = match &doc.nodes {
        Some(nodes) => {
            let g = build_graph(&GraphDoc {
                nodes: nodes.clone(),
                edges: doc.edges.clone().unwrap_or_default(),
                pois: doc.pois.clone().unwrap_or_default(),
            })
            .map_err(|e| integrity(graph_error_field(&e), e.to_string()))?;
            Arc::new(g)
        }
        None => shared
            .cloned()
            .ok_or_else(|| integrity("nodes", "instance has no nodes and the file has no shared graph".into()))?,
    };

    if doc.route.len() < 2 {
        return Err(integrity(
            "route",
            format!("needs at least 2 nodes, got {}", doc.route.len()),
        ));
    }
    for id in &doc.route {
        if !graph.contains(id) {
            return Err(integrity("route", format!("unknown node {id}")));
        }
    }
    for pair in doc.route.windows(2) {
        if !graph.has_edge(&pair[0], &pair[1]) {
            return Err(integrity("route", format!("no edge {} -> {}", pair[0], pair[1])));
        }
    }

    let initial_heading = match doc.initial_heading {
        Some(h) => Heading::new(h).map_err(|e| integrity("initial_heading", e.to_string()))?,
        None => geo::bearing(
            graph.position(&doc.route[0]).unwrap(),
            graph.position(&doc.route[1]).unwrap(),
        )
        .map_err(|e| integrity("route", e.to_string()))?,
    };

    let plan = match &doc.plan {
        Some(v) => Some(instruction::parse_plan(&v.to_string()).map_err(|e| integrity("plan", e.to_string()))?),
        None => None,
    };

    Ok(Instance {
        id: doc.id,
        graph,
        instruction: doc.instruction,
        route: doc.route.into_iter().map(NodeId::new).collect(),
        initial_heading,
        plan,
        difficulty: doc.difficulty,
    })
}

/// Validates a parsed document into instances, preserving order.
pub fn instances_from_doc(doc: DatasetDoc) -> Result<Vec<Instance>, DatasetError> {
    let shared = match &doc.graph {
        Some(g) => Some(Arc::new(build_graph(g).map_err(|e| DatasetError::Schema {
            context: "graph".into(),
            message: e.to_string(),
        })?)),
        None => None,
    };
    doc.instances
        .into_iter()
        .map(|i| instance_from_doc(i, shared.as_ref()))
        .collect()
}

/// Parses a dataset from JSON text.
pub fn parse_instances(text: &str) -> Result<Vec<Instance>, DatasetError> {
    let value: serde_json::Value = serde_json::from_str(text).map_err(|e| DatasetError::Schema {
        context: "document".into(),
        message: e.to_string(),
    })?;
    let instances = value
        .get("instances")
        .and_then(|v| v.as_array())
        .ok_or_else(|| DatasetError::Schema {
            context: "document".into(),
            message: "missing array field `instances`".into(),
        })?;

    // decode instance by instance so errors can name the offending id
    let mut docs = Vec::with_capacity(instances.len());
    for (i, raw) in instances.iter().enumerate() {
        let label = raw
            .get("id")
            .and_then(|v| v.as_str())
            .map(|s| format!("instance {s}"))
            .unwrap_or_else(|| format!("instance #{i}"));
        let doc: InstanceDoc = serde_json::from_value(raw.clone()).map_err(|e| DatasetError::Schema {
            context: label,
            message: e.to_string(),
        })?;
        docs.push(doc);
    }
    let graph = match value.get("graph") {
        Some(g) if !g.is_null() => Some(serde_json::from_value(g.clone()).map_err(|e| DatasetError::Schema {
            context: "graph".into(),
            message: e.to_string(),
        })?),
        _ => None,
    };
    let split = value.get("split").and_then(|v| v.as_str()).map(str::to_owned);
    instances_from_doc(DatasetDoc {
        split,
        graph,
        instances: docs,
    })
}

pub fn load_instances(path: impl AsRef<Path>) -> Result<Vec<Instance>, DatasetError> {
    let path = path.as_ref();
    let text = std::fs::read_to_string(path).map_err(|source| DatasetError::Io {
        path: path.display().to_string(),
        source,
    })?;
    parse_instances(&text)
}
