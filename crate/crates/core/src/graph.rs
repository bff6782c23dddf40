//! The immutable street environment: navigable nodes, directed headed edges
//! and tagged points of interest.

use std::borrow::Borrow;
use std::collections::{BTreeMap, BTreeSet, HashMap};
use std::fmt;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::geo::{self, GeoError, GeoPoint, Heading};

/// Tolerance for file-provided edge headings against recomputed bearings.
pub const HEADING_TOLERANCE_DEG: f64 = 0.5;

#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(transparent)]
pub struct NodeId(String);

impl NodeId {
    pub fn new(id: impl Into<String>) -> Self {
        NodeId(id.into())
    }

    pub fn as_str(&self) -> &str {
        &self.0
    }
}

impl fmt::Display for NodeId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.0)
    }
}

impl Borrow<str> for NodeId {
    fn borrow(&self) -> &str {
        &self.0
    }
}

impl From<&str> for NodeId {
    fn from(s: &str) -> Self {
        NodeId(s.to_owned())
    }
}

impl From<String> for NodeId {
    fn from(s: String) -> Self {
        NodeId(s)
    }
}

#[derive(Debug, Error, Clone, PartialEq)]
pub enum GraphError {
    #[error("graph has no nodes")]
    Empty,
    #[error("node id must be non-empty")]
    EmptyNodeId,
    #[error("duplicate node id {0}")]
    DuplicateNode(NodeId),
    #[error("unknown node {0}")]
    UnknownNode(NodeId),
    #[error("edge {from} -> {to} references missing node {missing}")]
    DanglingEdge { from: NodeId, to: NodeId, missing: NodeId },
    #[error("edge {from} -> {to} joins coincident positions")]
    CoincidentEdge { from: NodeId, to: NodeId },
    #[error("node {id}: {source}")]
    InvalidPosition { id: String, source: GeoError },
    #[error("poi {0} has no tags")]
    UntaggedPoi(String),
    #[error("duplicate poi id {0}")]
    DuplicatePoi(String),
}

#[derive(Debug, Clone, PartialEq)]
pub struct Edge {
    pub target: NodeId,
    pub heading: Heading,
}

#[derive(Debug, Clone, PartialEq)]
pub struct GraphNode {
    pub id: NodeId,
    pub position: GeoPoint,
    /// Sorted by target id.
    pub out_edges: Vec<Edge>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Poi {
    pub id: String,
    pub position: GeoPoint,
    pub tags: BTreeMap<String, String>,
}

impl Poi {
    /// Human-facing label: the `name` tag when present, else the first tag value.
    pub fn label(&self) -> &str {
        self.tags
            .get("name")
            .or_else(|| self.tags.values().next())
            .map(String::as_str)
            .unwrap_or(&self.id)
    }
}

/// `G = (V, E, P)`. Built once, then shared read-only.
#[derive(Debug, Clone)]
pub struct MapGraph {
    nodes: Vec<GraphNode>,
    index: HashMap<NodeId, usize>,
    degree: Vec<usize>,
    pois: Vec<Poi>,
    poi_index: HashMap<String, usize>,
    heading_mismatches: usize,
}

/// Accumulates raw nodes, edges and POIs and validates them into a [`MapGraph`].
#[derive(Debug, Default)]
pub struct GraphBuilder {
    nodes: Vec<(NodeId, GeoPoint)>,
    edges: Vec<(NodeId, NodeId, Option<f64>)>,
    pois: Vec<Poi>,
}

impl GraphBuilder {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn node(&mut self, id: impl Into<NodeId>, position: GeoPoint) -> &mut Self {
        self.nodes.push((id.into(), position));
        self
    }

    /// Adds a directed edge. `heading` is an optional file-provided value that is
    /// checked against the recomputed bearing.
    pub fn edge(&mut self, from: impl Into<NodeId>, to: impl Into<NodeId>, heading: Option<f64>) -> &mut Self {
        self.edges.push((from.into(), to.into(), heading));
        self
    }

    /// Adds edges in both directions.
    pub fn street(&mut self, a: impl Into<NodeId>, b: impl Into<NodeId>) -> &mut Self {
        let (a, b) = (a.into(), b.into());
        self.edges.push((a.clone(), b.clone(), None));
        self.edges.push((b, a, None));
        self
    }

    pub fn poi(&mut self, poi: Poi) -> &mut Self {
        self.pois.push(poi);
        self
    }

    pub fn build(self) -> Result<MapGraph, GraphError> {
        if self.nodes.is_empty() {
            return Err(GraphError::Empty);
        }
        let mut index = HashMap::with_capacity(self.nodes.len());
        let mut nodes = Vec::with_capacity(self.nodes.len());
        for (id, position) in self.nodes {
            if id.as_str().is_empty() {
                return Err(GraphError::EmptyNodeId);
            }
            if index.insert(id.clone(), nodes.len()).is_some() {
                return Err(GraphError::DuplicateNode(id));
            }
            nodes.push(GraphNode {
                id,
                position,
                out_edges: Vec::new(),
            });
        }

        let mut neighbor_sets: Vec<BTreeSet<usize>> = vec![BTreeSet::new(); nodes.len()];
        let mut heading_mismatches = 0;
        for (from, to, given) in self.edges {
            let fi = *index.get(&from).ok_or_else(|| GraphError::DanglingEdge {
                from: from.clone(),
                to: to.clone(),
                missing: from.clone(),
            })?;
            let ti = *index.get(&to).ok_or_else(|| GraphError::DanglingEdge {
                from: from.clone(),
                to: to.clone(),
                missing: to.clone(),
            })?;
            let heading =
                geo::bearing(nodes[fi].position, nodes[ti].position).map_err(|_| GraphError::CoincidentEdge {
                    from: from.clone(),
                    to: to.clone(),
                })?;
            if let Some(given) = given {
                let given = Heading::new(given).map_err(|source| GraphError::InvalidPosition {
                    id: from.to_string(),
                    source,
                })?;
                if geo::angular_diff(given, heading) > HEADING_TOLERANCE_DEG {
                    heading_mismatches += 1;
                    tracing::warn!(
                        %from, %to,
                        given = given.degrees(),
                        computed = heading.degrees(),
                        "edge heading disagrees with coordinates; using computed bearing"
                    );
                }
            }
            if nodes[fi].out_edges.iter().all(|e| e.target != to) {
                nodes[fi].out_edges.push(Edge { target: to, heading });
            }
            neighbor_sets[fi].insert(ti);
            neighbor_sets[ti].insert(fi);
        }
        for node in &mut nodes {
            node.out_edges.sort_by(|a, b| a.target.cmp(&b.target));
        }
        let degree = neighbor_sets.iter().map(BTreeSet::len).collect();

        let mut poi_index = HashMap::with_capacity(self.pois.len());
        for (i, poi) in self.pois.iter().enumerate() {
            if poi.tags.is_empty() {
                return Err(GraphError::UntaggedPoi(poi.id.clone()));
            }
            if poi_index.insert(poi.id.clone(), i).is_some() {
                return Err(GraphError::DuplicatePoi(poi.id.clone()));
            }
        }

        Ok(MapGraph {
            nodes,
            index,
            degree,
            pois: self.pois,
            poi_index,
            heading_mismatches,
        })
    }
}

impl MapGraph {
    pub fn builder() -> GraphBuilder {
        GraphBuilder::new()
    }

    pub fn node(&self, id: &str) -> Result<&GraphNode, GraphError> {
        self.index
            .get(id)
            .map(|&i| &self.nodes[i])
            .ok_or_else(|| GraphError::UnknownNode(NodeId::new(id)))
    }

    pub fn contains(&self, id: &str) -> bool {
        self.index.contains_key(id)
    }

    pub fn position(&self, id: &str) -> Result<GeoPoint, GraphError> {
        self.node(id).map(|n| n.position)
    }

    pub fn nodes(&self) -> impl Iterator<Item = &GraphNode> {
        self.nodes.iter()
    }

    pub fn node_count(&self) -> usize {
        self.nodes.len()
    }

    pub fn pois(&self) -> &[Poi] {
        &self.pois
    }

    pub fn poi(&self, id: &str) -> Option<&Poi> {
        self.poi_index.get(id).map(|&i| &self.pois[i])
    }

    /// Number of distinct neighbors, counting both edge directions.
    pub fn degree(&self, id: &str) -> Result<usize, GraphError> {
        self.index
            .get(id)
            .map(|&i| self.degree[i])
            .ok_or_else(|| GraphError::UnknownNode(NodeId::new(id)))
    }

    /// A branching point: more than two distinct neighbors.
    pub fn is_intersection(&self, id: &str) -> Result<bool, GraphError> {
        Ok(self.degree(id)? > 2)
    }

    /// Out-neighbors sorted by id, each with the bearing from `id` to it.
    pub fn neighbors_with_headings(&self, id: &str) -> Result<Vec<(NodeId, Heading)>, GraphError> {
        Ok(self
            .node(id)?
            .out_edges
            .iter()
            .map(|e| (e.target.clone(), e.heading))
            .collect())
    }

    pub fn has_edge(&self, from: &str, to: &str) -> bool {
        self.node(from)
            .map(|n| n.out_edges.iter().any(|e| e.target.as_str() == to))
            .unwrap_or(false)
    }

    pub fn edge_heading(&self, from: &str, to: &str) -> Option<Heading> {
        self.node(from)
            .ok()?
            .out_edges
            .iter()
            .find(|e| e.target.as_str() == to)
            .map(|e| e.heading)
    }

    /// Count of file-provided edge headings that were overridden at build time.
    pub fn heading_mismatches(&self) -> usize {
        self.heading_mismatches
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn p(lat: f64, lng: f64) -> GeoPoint {
        GeoPoint::new(lat, lng).unwrap()
    }

    /// Star around `c` with the given arms, plus an isolated node.
    fn star(arms: &[(&str, f64, f64)]) -> MapGraph {
        let mut b = MapGraph::builder();
        b.node("c", p(40.0, -73.0));
        b.node("iso", p(41.0, -73.0));
        for &(id, lat, lng) in arms {
            b.node(id, p(lat, lng));
            b.street("c", id);
        }
        b.build().unwrap()
    }

    #[test]
    fn intersection_degree_rule() {
        let three = star(&[("a", 40.001, -73.0), ("b", 39.999, -73.0), ("d", 40.0, -72.999)]);
        assert!(three.is_intersection("c").unwrap());
        let two = star(&[("a", 40.001, -73.0), ("b", 39.999, -73.0)]);
        assert!(!two.is_intersection("c").unwrap());
        let one = star(&[("a", 40.001, -73.0)]);
        assert!(!one.is_intersection("c").unwrap());
        assert!(matches!(one.is_intersection("zz"), Err(GraphError::UnknownNode(_))));
    }

    #[test]
    fn degree_counts_incoming_only_edges() {
        let mut b = MapGraph::builder();
        b.node("c", p(40.0, -73.0))
            .node("a", p(40.001, -73.0))
            .node("b", p(39.999, -73.0))
            .node("d", p(40.0, -72.999));
        b.edge("a", "c", None).edge("b", "c", None).edge("c", "d", None);
        let g = b.build().unwrap();
        assert_eq!(g.degree("c").unwrap(), 3);
        assert_eq!(g.neighbors_with_headings("c").unwrap().len(), 1);
    }

    #[test]
    fn neighbors_sorted_and_recomputed() {
        let g = star(&[("z", 40.001, -73.0), ("a", 39.999, -73.0)]);
        let n = g.neighbors_with_headings("c").unwrap();
        let ids: Vec<_> = n.iter().map(|(id, _)| id.as_str()).collect();
        assert_eq!(ids, ["a", "z"]);
        for (id, h) in &n {
            let expect = geo::bearing(g.position("c").unwrap(), g.position(id.as_str()).unwrap()).unwrap();
            assert_eq!(*h, expect);
        }
        // corridor: the two headings are about 180 degrees apart
        assert!((geo::angular_diff(n[0].1, n[1].1) - 180.0).abs() < 1e-6);
        assert!(g.neighbors_with_headings("iso").unwrap().is_empty());
    }

    #[test]
    fn rejects_dangling_and_coincident_edges() {
        let mut b = MapGraph::builder();
        b.node("a", p(0.0, 0.0)).edge("a", "ghost", None);
        assert!(matches!(b.build(), Err(GraphError::DanglingEdge { missing, .. }) if missing.as_str() == "ghost"));

        let mut b = MapGraph::builder();
        b.node("a", p(0.0, 0.0)).node("b", p(0.0, 0.0)).edge("a", "b", None);
        assert!(matches!(b.build(), Err(GraphError::CoincidentEdge { .. })));

        assert!(matches!(MapGraph::builder().build(), Err(GraphError::Empty)));
    }

    #[test]
    fn file_headings_are_checked_but_recomputed_wins() {
        let mut b = MapGraph::builder();
        b.node("a", p(0.0, 0.0)).node("b", p(0.0, 0.001));
        b.edge("a", "b", Some(90.2)).edge("b", "a", Some(10.0));
        let g = b.build().unwrap();
        assert_eq!(g.heading_mismatches(), 1);
        assert!((g.edge_heading("b", "a").unwrap().degrees() - 270.0).abs() < 1e-6);
    }

    #[test]
    fn poi_needs_tags() {
        let mut b = MapGraph::builder();
        b.node("a", p(0.0, 0.0)).poi(Poi {
            id: "p".into(),
            position: p(0.0, 0.0),
            tags: BTreeMap::new(),
        });
        assert!(matches!(b.build(), Err(GraphError::UntaggedPoi(_))));
    }
}
