//! Prompt serializations of the local navigation context.
//!
//! Every encoder is a pure function of [`EncodeContext`]; identical inputs
//! produce byte-identical text.

mod graphviz;
mod grid;
mod json;
mod textual;

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::graph::{MapGraph, NodeId};
use crate::instruction::{GroundedLandmark, PlanningState};
use crate::visibility::VisibleArea;

pub use grid::{rasterize_grid, GridCanvas, DEFAULT_MAX_CANVAS, INTERSECTION_POI_RADIUS_M, SHARED_CELL_RADIUS_M};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum EncodeError {
    #[error("grid canvas {rows}x{cols} exceeds the {max}x{max} limit")]
    CanvasOverflow { rows: usize, cols: usize, max: usize },
    #[error("node {0} is not in the graph")]
    UnknownNode(NodeId),
    #[error("trajectory is empty")]
    EmptyTrajectory,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum RepresentationKind {
    Textual,
    StructuredJson,
    OptimizedJson,
    GraphvizStyle,
    Grid,
}

impl RepresentationKind {
    pub const ALL: [RepresentationKind; 5] = [
        RepresentationKind::Textual,
        RepresentationKind::StructuredJson,
        RepresentationKind::OptimizedJson,
        RepresentationKind::GraphvizStyle,
        RepresentationKind::Grid,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            RepresentationKind::Textual => "textual",
            RepresentationKind::StructuredJson => "structured-json",
            RepresentationKind::OptimizedJson => "optimized-json",
            RepresentationKind::GraphvizStyle => "graphviz",
            RepresentationKind::Grid => "grid",
        }
    }
}

impl fmt::Display for RepresentationKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for RepresentationKind {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "textual" | "text" => Ok(RepresentationKind::Textual),
            "structured-json" | "json" => Ok(RepresentationKind::StructuredJson),
            "optimized-json" | "optimized" => Ok(RepresentationKind::OptimizedJson),
            "graphviz" | "graphviz-style" => Ok(RepresentationKind::GraphvizStyle),
            "grid" => Ok(RepresentationKind::Grid),
            other => Err(format!(
                "unknown representation {other:?}; expected one of textual, structured-json, optimized-json, graphviz, grid"
            )),
        }
    }
}

/// Everything an encoder may look at for one step.
#[derive(Debug, Clone, Copy)]
pub struct EncodeContext<'a> {
    pub graph: &'a MapGraph,
    /// Annotated forward view from the current node.
    pub area: &'a VisibleArea,
    /// Lettered landmarks.
    pub landmarks: &'a [GroundedLandmark],
    pub plan: &'a PlanningState,
    /// Nodes visited so far, ending with the current node.
    pub trajectory: &'a [NodeId],
}

pub fn encode(kind: RepresentationKind, ctx: &EncodeContext<'_>) -> Result<String, EncodeError> {
    match kind {
        RepresentationKind::Textual => Ok(textual::encode(ctx)),
        RepresentationKind::StructuredJson => Ok(json::encode(ctx, false)),
        RepresentationKind::OptimizedJson => Ok(json::encode(ctx, true)),
        RepresentationKind::GraphvizStyle => Ok(graphviz::encode(ctx)),
        RepresentationKind::Grid => grid::encode(ctx, DEFAULT_MAX_CANVAS),
    }
}

fn round1(x: f64) -> f64 {
    (x * 10.0).round() / 10.0
}

fn direction_word(d: crate::geo::RelativeDirection) -> &'static str {
    match d {
        crate::geo::RelativeDirection::Forward => "forward",
        crate::geo::RelativeDirection::Left => "left",
        crate::geo::RelativeDirection::Right => "right",
        crate::geo::RelativeDirection::Back => "back",
    }
}

/// Connections listed for a path node: every exit at the origin, otherwise
/// the onward step plus the first node of each branch.
fn connections(area: &VisibleArea, index: usize) -> Vec<(NodeId, crate::geo::Heading, crate::geo::RelativeDirection)> {
    let node = &area.path[index];
    let mut out = Vec::new();
    if index == 0 {
        out.extend(
            area.exits
                .iter()
                .map(|e| (e.id.clone(), e.step.heading, e.step.direction)),
        );
    } else {
        let next_id = area
            .path
            .get(index + 1)
            .or(area.lookahead.first())
            .map(|n| n.id.clone());
        if let (Some(id), Some(step)) = (next_id, node.to_next) {
            out.push((id, step.heading, step.direction));
        }
        for (dir, b) in &node.branches {
            if out.iter().all(|(id, _, _)| *id != b.chain[0]) {
                out.push((b.chain[0].clone(), b.heading, *dir));
            }
        }
    }
    out
}
