use std::collections::BTreeMap;

use serde::Serialize;

use super::{connections, round1, EncodeContext};
use crate::geo::{self, compass_word, Heading, RelativeDirection};
use crate::instruction::GoalStatus;
use crate::visibility::NodeKind;

#[derive(Serialize)]
struct Document<'a> {
    navigation_context: NavigationContext<'a>,
    planning_state: Vec<Goal<'a>>,
}

#[derive(Serialize)]
struct NavigationContext<'a> {
    current_position: Position<'a>,
    previous_path: Vec<PreviousNode<'a>>,
    nodes: Vec<Node<'a>>,
    intersections: Vec<&'a str>,
    lookahead: Vec<Lookahead<'a>>,
    pois: Vec<PoiEntry<'a>>,
}

#[derive(Serialize)]
struct Position<'a> {
    node_id: &'a str,
    heading: f64,
    compass_direction: &'static str,
    #[serde(skip_serializing_if = "Option::is_none")]
    lat: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    lng: Option<f64>,
}

#[derive(Serialize)]
struct StepEntry {
    direction: RelativeDirection,
    heading: f64,
}

#[derive(Serialize)]
struct PreviousNode<'a> {
    node_id: &'a str,
    to_next: StepEntry,
}

#[derive(Serialize)]
struct Connection {
    target_node_id: String,
    heading: f64,
    direction: RelativeDirection,
}

#[derive(Serialize)]
struct BranchEntry {
    heading: f64,
    nodes: Vec<String>,
}

#[derive(Serialize)]
struct Node<'a> {
    node_id: &'a str,
    #[serde(rename = "type")]
    kind: NodeKind,
    heading: f64,
    #[serde(skip_serializing_if = "Option::is_none")]
    lat: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    lng: Option<f64>,
    connections: Vec<Connection>,
    #[serde(skip_serializing_if = "BTreeMap::is_empty")]
    branches: BTreeMap<RelativeDirection, BranchEntry>,
}

#[derive(Serialize)]
struct Lookahead<'a> {
    node_id: &'a str,
    #[serde(rename = "type")]
    kind: NodeKind,
}

#[derive(Serialize)]
struct PoiEntry<'a> {
    letter: Option<char>,
    name: &'a str,
    poi_id: &'a str,
    nearby_node_id: &'a str,
    direction: RelativeDirection,
    distance_m: f64,
}

#[derive(Serialize)]
struct Goal<'a> {
    index: usize,
    description: &'a str,
    status: String,
}

fn coord(x: f64) -> f64 {
    (x * 1e6).round() / 1e6
}

/// Structured JSON view; `optimized` drops coordinates and tags the active
/// goal with its iteration count.
pub(super) fn encode(ctx: &EncodeContext<'_>, optimized: bool) -> String {
    let area = ctx.area;
    let coords = |id: &str| -> (Option<f64>, Option<f64>) {
        match (optimized, ctx.graph.position(id)) {
            (false, Ok(p)) => (Some(coord(p.lat())), Some(coord(p.lng()))),
            _ => (None, None),
        }
    };

    let (lat, lng) = coords(area.origin.as_str());
    let current_position = Position {
        node_id: area.origin.as_str(),
        heading: round1(area.origin_heading.degrees()),
        compass_direction: compass_word(area.origin_heading),
        lat,
        lng,
    };

    let mut previous_path = Vec::new();
    let traj = ctx.trajectory;
    for i in 0..traj.len().saturating_sub(1) {
        let (Ok(a), Ok(b)) = (
            ctx.graph.position(traj[i].as_str()),
            ctx.graph.position(traj[i + 1].as_str()),
        ) else {
            continue;
        };
        let Ok(h) = geo::bearing(a, b) else { continue };
        let arrival: Heading = i
            .checked_sub(1)
            .and_then(|p| geo::bearing(ctx.graph.position(traj[p].as_str()).ok()?, a).ok())
            .unwrap_or(h);
        previous_path.push(PreviousNode {
            node_id: traj[i].as_str(),
            to_next: StepEntry {
                direction: geo::relative_direction(h, arrival).1,
                heading: round1(h.degrees()),
            },
        });
    }

    let nodes = area
        .path
        .iter()
        .enumerate()
        .map(|(i, n)| {
            let (lat, lng) = coords(n.id.as_str());
            Node {
                node_id: n.id.as_str(),
                kind: n.kind,
                heading: round1(n.arrival_heading.degrees()),
                lat,
                lng,
                connections: connections(area, i)
                    .into_iter()
                    .map(|(id, h, dir)| Connection {
                        target_node_id: id.to_string(),
                        heading: round1(h.degrees()),
                        direction: dir,
                    })
                    .collect(),
                branches: n
                    .branches
                    .iter()
                    .map(|(dir, b)| {
                        (
                            *dir,
                            BranchEntry {
                                heading: round1(b.heading.degrees()),
                                nodes: b.chain.iter().map(|x| x.to_string()).collect(),
                            },
                        )
                    })
                    .collect(),
            }
        })
        .collect();

    let intersections = area
        .path
        .iter()
        .filter(|n| n.kind == NodeKind::Intersection)
        .map(|n| n.id.as_str())
        .collect();

    let lookahead = area
        .lookahead
        .iter()
        .map(|n| Lookahead {
            node_id: n.id.as_str(),
            kind: n.kind,
        })
        .collect();

    let pois = area
        .path
        .iter()
        .flat_map(|n| {
            n.nearby_pois.iter().map(move |s| PoiEntry {
                letter: s.landmark_letter,
                name: s.landmark_name.as_str(),
                poi_id: s.poi_id.as_str(),
                nearby_node_id: n.id.as_str(),
                direction: s.direction,
                distance_m: round1(s.distance_m),
            })
        })
        .collect();

    let planning_state = ctx
        .plan
        .sub_goals
        .iter()
        .map(|g| Goal {
            index: g.index,
            description: g.description.as_str(),
            status: if optimized && g.status == GoalStatus::InProgress {
                format!("{}, Iteration {}", g.status, g.iteration)
            } else {
                g.status.to_string()
            },
        })
        .collect();

    let doc = Document {
        navigation_context: NavigationContext {
            current_position,
            previous_path,
            nodes,
            intersections,
            lookahead,
            pois,
        },
        planning_state,
    };
    serde_json::to_string_pretty(&doc).expect("navigation context serializes")
}
