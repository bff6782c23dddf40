//! Local context construction: the forward view from the agent's node along
//! its heading, the branches at each intersection on that view, and the
//! grounded POIs sighted from it.
//!
//! The forward walk is heading-greedy. From the current node it steps to the
//! neighbor whose edge bearing deviates least from the current heading, as
//! long as that deviation stays under [`TURN_LIMIT_DEG`] and the neighbor has
//! not been visited in this construction. The walk ends once `u`
//! intersections have been reached ahead of the origin (the origin itself is
//! not counted), at a dead end, or after [`MAX_ITERATIONS`] steps. Up to
//! [`LOOKAHEAD_NODES`] further nodes are then appended as lookahead under the
//! same stepping rule.

use std::collections::{BTreeMap, HashMap, HashSet, VecDeque};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::geo::{self, Heading, RelativeDirection};
use crate::graph::{GraphError, MapGraph, NodeId};
use crate::instruction::GroundedLandmark;

/// Strict upper bound on the per-step turn of the forward walk, in degrees.
pub const TURN_LIMIT_DEG: f64 = 100.0;
pub const MAX_ITERATIONS: usize = 1000;
pub const LOOKAHEAD_NODES: usize = 3;
/// Nodes per intersection branch chain.
pub const BRANCH_DEPTH: usize = 2;
/// POI sighting radius in meters.
pub const POI_RADIUS_M: f64 = 50.0;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum VisibilityError {
    #[error(transparent)]
    Graph(#[from] GraphError),
    #[error("visibility units must be at least 1")]
    InvalidUnits,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum NodeKind {
    Waypoint,
    Intersection,
}

/// A heading plus where it points relative to the travel direction.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Step {
    pub heading: Heading,
    pub direction: RelativeDirection,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Branch {
    /// Bearing of the first edge of the chain.
    pub heading: Heading,
    pub chain: Vec<NodeId>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PoiSighting {
    pub poi_id: String,
    pub landmark_letter: Option<char>,
    pub landmark_name: String,
    pub direction: RelativeDirection,
    pub distance_m: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PathNode {
    pub id: NodeId,
    pub kind: NodeKind,
    /// Heading on arrival; the agent's heading for the origin.
    pub arrival_heading: Heading,
    pub to_next: Option<Step>,
    pub branches: BTreeMap<RelativeDirection, Branch>,
    pub nearby_pois: Vec<PoiSighting>,
}

impl PathNode {
    /// Heading used to classify sightings: onward if known, else arrival.
    pub fn onward_heading(&self) -> Heading {
        self.to_next.map(|s| s.heading).unwrap_or(self.arrival_heading)
    }
}

/// A neighbor of the origin, whether or not the forward view covers it.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Exit {
    pub id: NodeId,
    pub step: Step,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VisibleArea {
    pub origin: NodeId,
    pub origin_heading: Heading,
    pub path: Vec<PathNode>,
    pub lookahead: Vec<PathNode>,
    pub exits: Vec<Exit>,
}

/// Picks the candidate closest to `heading`; exact ties go to the smaller id.
///
/// Panics on an empty candidate list.
pub fn tie_break_neighbor(candidates: &[(NodeId, Heading)], heading: Heading) -> NodeId {
    candidates
        .iter()
        .map(|(id, h)| (geo::angular_diff(heading, *h), id))
        .min_by(|a, b| a.0.total_cmp(&b.0).then_with(|| a.1.cmp(b.1)))
        .map(|(_, id)| id.clone())
        .expect("tie_break_neighbor needs at least one candidate")
}

/// One heading-greedy step, or `None` at a dead end, a sharp turn or a revisit.
fn greedy_step(
    g: &MapGraph,
    at: &str,
    heading: Heading,
    seen: &HashSet<NodeId>,
) -> Result<Option<(NodeId, Heading)>, GraphError> {
    let nbrs = g.neighbors_with_headings(at)?;
    if nbrs.is_empty() {
        return Ok(None);
    }
    let next = tie_break_neighbor(&nbrs, heading);
    let next_heading = nbrs.iter().find(|(id, _)| *id == next).map(|(_, h)| *h).unwrap();
    if geo::angular_diff(heading, next_heading) >= TURN_LIMIT_DEG || seen.contains(&next) {
        return Ok(None);
    }
    Ok(Some((next, next_heading)))
}

fn kind_of(g: &MapGraph, id: &str) -> Result<NodeKind, GraphError> {
    Ok(if g.is_intersection(id)? {
        NodeKind::Intersection
    } else {
        NodeKind::Waypoint
    })
}

fn branches_at(
    g: &MapGraph,
    at: &NodeId,
    arrival: Heading,
    predecessor: Option<&NodeId>,
) -> Result<BTreeMap<RelativeDirection, Branch>, GraphError> {
    // best neighbor per direction class, closest to the class center
    let mut best: BTreeMap<RelativeDirection, (f64, NodeId, Heading)> = BTreeMap::new();
    for (id, h) in g.neighbors_with_headings(at.as_str())? {
        if Some(&id) == predecessor {
            continue;
        }
        let (delta, dir) = geo::relative_direction(h, arrival);
        let off = geo::angular_diff(Heading::new(delta).unwrap(), Heading::new(dir.center_offset()).unwrap());
        let better = match best.get(&dir) {
            None => true,
            Some((o, bid, _)) => off < *o || (off == *o && id < *bid),
        };
        if better {
            best.insert(dir, (off, id, h));
        }
    }

    let mut out = BTreeMap::new();
    for (dir, (_, first, h)) in best {
        let mut chain = vec![first.clone()];
        let mut seen: HashSet<NodeId> = [at.clone(), first.clone()].into_iter().collect();
        let (mut cur, mut cur_h) = (first, h);
        while chain.len() < BRANCH_DEPTH {
            match greedy_step(g, cur.as_str(), cur_h, &seen)? {
                Some((n, nh)) => {
                    seen.insert(n.clone());
                    chain.push(n.clone());
                    cur = n;
                    cur_h = nh;
                }
                None => break,
            }
        }
        out.insert(dir, Branch { heading: h, chain });
    }
    Ok(out)
}

/// Builds the forward view from `origin` facing `heading` covering `units`
/// intersections.
pub fn construct_visible_area(
    g: &MapGraph,
    origin: &NodeId,
    heading: Heading,
    units: usize,
) -> Result<VisibleArea, VisibilityError> {
    if units == 0 {
        return Err(VisibilityError::InvalidUnits);
    }
    g.node(origin.as_str())?;

    // (id, arrival heading)
    let mut walk: Vec<(NodeId, Heading)> = vec![(origin.clone(), heading)];
    let mut seen: HashSet<NodeId> = [origin.clone()].into_iter().collect();
    let mut intersections = 0;
    let mut iterations = 0;
    let (mut cur, mut cur_h) = (origin.clone(), heading);
    while intersections < units && iterations < MAX_ITERATIONS {
        iterations += 1;
        let Some((next, next_h)) = greedy_step(g, cur.as_str(), cur_h, &seen)? else {
            break;
        };
        seen.insert(next.clone());
        walk.push((next.clone(), next_h));
        if g.is_intersection(next.as_str())? {
            intersections += 1;
        }
        cur = next;
        cur_h = next_h;
    }
    let path_len = walk.len();

    while walk.len() < path_len + LOOKAHEAD_NODES {
        let Some((next, next_h)) = greedy_step(g, cur.as_str(), cur_h, &seen)? else {
            break;
        };
        seen.insert(next.clone());
        walk.push((next.clone(), next_h));
        cur = next;
        cur_h = next_h;
    }

    let mut nodes = Vec::with_capacity(walk.len());
    for (i, (id, arrival)) in walk.iter().enumerate() {
        let to_next = walk.get(i + 1).map(|(_, h)| Step {
            heading: *h,
            direction: geo::relative_direction(*h, *arrival).1,
        });
        let kind = kind_of(g, id.as_str())?;
        let branches = if kind == NodeKind::Intersection && i < path_len {
            let pred = i.checked_sub(1).map(|p| &walk[p].0);
            branches_at(g, id, *arrival, pred)?
        } else {
            BTreeMap::new()
        };
        nodes.push(PathNode {
            id: id.clone(),
            kind,
            arrival_heading: *arrival,
            to_next,
            branches,
            nearby_pois: Vec::new(),
        });
    }
    let lookahead = nodes.split_off(path_len);

    let exits = g
        .neighbors_with_headings(origin.as_str())?
        .into_iter()
        .map(|(id, h)| Exit {
            id,
            step: Step {
                heading: h,
                direction: geo::relative_direction(h, heading).1,
            },
        })
        .collect();

    Ok(VisibleArea {
        origin: origin.clone(),
        origin_heading: heading,
        path: nodes,
        lookahead,
        exits,
    })
}

/// Attaches sightings of grounded POIs within [`POI_RADIUS_M`] of each path node.
pub fn annotate_pois(g: &MapGraph, mut area: VisibleArea, grounded: &[GroundedLandmark]) -> VisibleArea {
    for node in &mut area.path {
        node.nearby_pois.clear();
        let Ok(pos) = g.position(node.id.as_str()) else {
            continue;
        };
        let onward = node.onward_heading();
        for lm in grounded {
            for poi_id in &lm.pois {
                let Some(poi) = g.poi(poi_id) else {
                    continue;
                };
                let d = geo::haversine_distance(pos, poi.position);
                if d > POI_RADIUS_M {
                    continue;
                }
                // a POI exactly on the node has no bearing; call it ahead
                let direction = geo::bearing(pos, poi.position)
                    .map(|b| geo::relative_direction(b, onward).1)
                    .unwrap_or(RelativeDirection::Forward);
                node.nearby_pois.push(PoiSighting {
                    poi_id: poi_id.clone(),
                    landmark_letter: lm.letter(),
                    landmark_name: lm.landmark.name.clone(),
                    direction,
                    distance_m: d,
                });
            }
        }
        node.nearby_pois.sort_by(|a, b| {
            a.landmark_letter
                .cmp(&b.landmark_letter)
                .then_with(|| a.poi_id.cmp(&b.poi_id))
        });
    }
    area
}

impl VisibleArea {
    pub fn path_ids(&self) -> impl Iterator<Item = &NodeId> {
        self.path.iter().map(|n| &n.id)
    }

    /// Intersections on the forward path, not counting the origin.
    pub fn intersections_ahead(&self) -> usize {
        self.path
            .iter()
            .skip(1)
            .filter(|n| n.kind == NodeKind::Intersection)
            .count()
    }

    /// Tree of presented moves rooted at the origin: child -> parent.
    fn parent_map(&self) -> HashMap<&NodeId, &NodeId> {
        let mut adj: Vec<(&NodeId, &NodeId)> = Vec::new();
        let chain: Vec<&NodeId> = self.path.iter().chain(&self.lookahead).map(|n| &n.id).collect();
        for w in chain.windows(2) {
            adj.push((w[0], w[1]));
        }
        for e in &self.exits {
            adj.push((&self.origin, &e.id));
        }
        for node in &self.path {
            for b in node.branches.values() {
                let mut prev = &node.id;
                for n in &b.chain {
                    adj.push((prev, n));
                    prev = n;
                }
            }
        }

        let mut parent: HashMap<&NodeId, &NodeId> = HashMap::new();
        let mut queue = VecDeque::from([&self.origin]);
        let mut visited: HashSet<&NodeId> = [&self.origin].into_iter().collect();
        while let Some(u) = queue.pop_front() {
            for &(a, b) in &adj {
                if a == u && visited.insert(b) {
                    parent.insert(b, a);
                    queue.push_back(b);
                }
            }
        }
        parent
    }

    /// Every node id a decision may target.
    pub fn presented_nodes(&self) -> Vec<NodeId> {
        let mut out: Vec<NodeId> = vec![self.origin.clone()];
        out.extend(self.parent_map().into_keys().cloned());
        out.sort();
        out
    }

    pub fn contains(&self, id: &NodeId) -> bool {
        id == &self.origin || self.parent_map().contains_key(id)
    }

    /// Hops from the origin to `target` through the presented structure,
    /// excluding the origin. Empty when the target is the origin.
    pub fn route_to(&self, target: &NodeId) -> Option<Vec<NodeId>> {
        if target == &self.origin {
            return Some(Vec::new());
        }
        let parent = self.parent_map();
        let mut hops = vec![target.clone()];
        let mut cur = target;
        while let Some(p) = parent.get(cur) {
            if *p == &self.origin {
                hops.reverse();
                return Some(hops);
            }
            hops.push((*p).clone());
            cur = p;
        }
        None
    }

    /// Short stable hash of the serialized area.
    pub fn digest(&self) -> String {
        use sha2::{Digest, Sha256};
        let bytes = serde_json::to_vec(self).expect("area serializes");
        hex::encode(&Sha256::digest(&bytes)[..8])
    }
}
