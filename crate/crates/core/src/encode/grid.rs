//! Character-grid rendering of the trajectory and forward view.
//!
//! Nodes are laid out by walking from the start node and stepping one cell
//! per edge in the cardinal direction of the edge's bearing. Visited nodes
//! are `1`, the forward path `2`, intersections on it `3`, and `S`/`P` mark
//! the start and the current node. Grounded POIs are drawn with their
//! landmark letter next to the node they were sighted from.

use std::collections::{BTreeMap, HashMap};
use std::fmt::Write;

use serde::Serialize;

use super::{EncodeContext, EncodeError};
use crate::geo::{self, heading_to_grid_offset, Heading};
use crate::graph::{MapGraph, NodeId};
use crate::visibility::NodeKind;

pub const DEFAULT_MAX_CANVAS: usize = 64;
/// POIs this close to a path intersection go to a diagonal corner cell.
pub const INTERSECTION_POI_RADIUS_M: f64 = 20.0;
/// POIs this close to a node may share its cell when that cell is free.
pub const SHARED_CELL_RADIUS_M: f64 = 5.0;

type Cell = (i32, i32);

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct GridCanvas {
    pub cells: Vec<Vec<char>>,
    /// Landmark letter -> landmark name, for letters drawn on the canvas.
    pub legend: BTreeMap<char, String>,
    /// Row/column of the start marker.
    pub origin_row_col: (usize, usize),
    pub current_row_col: (usize, usize),
    /// Where each placed node ended up.
    pub node_cells: BTreeMap<NodeId, (usize, usize)>,
}

impl GridCanvas {
    pub fn rows(&self) -> usize {
        self.cells.len()
    }

    pub fn cols(&self) -> usize {
        self.cells.first().map_or(0, Vec::len)
    }

    pub fn at(&self, r: usize, c: usize) -> char {
        self.cells[r][c]
    }

    pub fn count(&self, ch: char) -> usize {
        self.cells.iter().flatten().filter(|&&x| x == ch).count()
    }

    pub fn render(&self) -> String {
        self.cells
            .iter()
            .map(|row| row.iter().map(|c| c.to_string()).collect::<Vec<_>>().join(" "))
            .collect::<Vec<_>>()
            .join("\n")
    }
}

fn rank(ch: char) -> u8 {
    match ch {
        'P' => 5,
        'S' => 4,
        '3' => 3,
        '2' => 2,
        '1' => 1,
        _ => 0,
    }
}

fn diagonal(h: Heading) -> Cell {
    match h.degrees() {
        d if d < 90.0 => (-1, 1),
        d if d < 180.0 => (1, 1),
        d if d < 270.0 => (1, -1),
        _ => (-1, -1),
    }
}

const RING: [Cell; 8] = [(-1, 0), (-1, 1), (0, 1), (1, 1), (1, 0), (1, -1), (0, -1), (-1, -1)];

struct Layout<'g> {
    graph: &'g MapGraph,
    pos: HashMap<NodeId, Cell>,
    occupant: HashMap<Cell, NodeId>,
    marks: HashMap<Cell, char>,
}

impl<'g> Layout<'g> {
    fn place_after(&mut self, prev: &NodeId, node: &NodeId) -> Result<(), EncodeError> {
        if self.pos.contains_key(node) {
            return Ok(());
        }
        let from = self.pos[prev];
        let a = self
            .graph
            .position(prev.as_str())
            .map_err(|_| EncodeError::UnknownNode(prev.clone()))?;
        let b = self
            .graph
            .position(node.as_str())
            .map_err(|_| EncodeError::UnknownNode(node.clone()))?;
        let (dr, dc) = geo::bearing(a, b).map(heading_to_grid_offset).unwrap_or((-1, 0));
        let mut cell = (from.0 + dr, from.1 + dc);
        while let Some(other) = self.occupant.get(&cell) {
            tracing::debug!(%node, %other, ?cell, "grid collision; displacing along the incoming step");
            cell = (cell.0 + dr, cell.1 + dc);
        }
        self.pos.insert(node.clone(), cell);
        self.occupant.insert(cell, node.clone());
        Ok(())
    }

    fn mark(&mut self, cell: Cell, ch: char) {
        let slot = self.marks.entry(cell).or_insert(ch);
        if rank(ch) > rank(*slot) {
            *slot = ch;
        }
    }
}

/// Lays out the trajectory and the forward view and drops grounded POIs next
/// to the path.
pub fn rasterize_grid(ctx: &EncodeContext<'_>, max_size: usize) -> Result<GridCanvas, EncodeError> {
    let traj = ctx.trajectory;
    let start = traj.first().ok_or(EncodeError::EmptyTrajectory)?;
    let mut layout = Layout {
        graph: ctx.graph,
        pos: HashMap::new(),
        occupant: HashMap::new(),
        marks: HashMap::new(),
    };
    layout.pos.insert(start.clone(), (0, 0));
    layout.occupant.insert((0, 0), start.clone());
    for w in traj.windows(2) {
        layout.place_after(&w[0], &w[1])?;
    }

    let area = ctx.area;
    if !layout.pos.contains_key(&area.origin) {
        return Err(EncodeError::UnknownNode(area.origin.clone()));
    }
    let view: Vec<_> = area.path.iter().chain(&area.lookahead).collect();
    for w in view.windows(2) {
        layout.place_after(&w[0].id, &w[1].id)?;
    }

    for id in traj {
        let cell = layout.pos[id];
        layout.mark(cell, '1');
    }
    for n in &view {
        let cell = layout.pos[&n.id];
        layout.mark(cell, if n.kind == NodeKind::Intersection { '3' } else { '2' });
    }
    layout.mark((0, 0), 'S');
    let current = layout.pos[&area.origin];
    layout.mark(current, 'P');

    // POIs: one placement per POI id, never over a node cell or another letter
    let mut letters: HashMap<Cell, char> = HashMap::new();
    let mut legend = BTreeMap::new();
    let mut placed: Vec<&str> = Vec::new();
    let intersections: Vec<&NodeId> = area
        .path
        .iter()
        .filter(|n| n.kind == NodeKind::Intersection)
        .map(|n| &n.id)
        .collect();
    for node in &area.path {
        for s in &node.nearby_pois {
            let Some(letter) = s.landmark_letter else {
                continue;
            };
            if placed.contains(&s.poi_id.as_str()) {
                continue;
            }
            let Some(poi) = ctx.graph.poi(&s.poi_id) else {
                continue;
            };

            let corner = intersections
                .iter()
                .filter_map(|id| {
                    let p = ctx.graph.position(id.as_str()).ok()?;
                    Some((geo::haversine_distance(p, poi.position), *id, p))
                })
                .filter(|(d, _, _)| *d <= INTERSECTION_POI_RADIUS_M)
                .min_by(|a, b| a.0.total_cmp(&b.0).then_with(|| a.1.cmp(b.1)));

            let mut candidates: Vec<Cell> = Vec::new();
            let anchor;
            if let Some((_, id, p)) = corner {
                anchor = layout.pos[id];
                if let Ok(h) = geo::bearing(p, poi.position) {
                    let (dr, dc) = diagonal(h);
                    candidates.push((anchor.0 + dr, anchor.1 + dc));
                }
            } else {
                anchor = layout.pos[&node.id];
                let p = ctx
                    .graph
                    .position(node.id.as_str())
                    .map_err(|_| EncodeError::UnknownNode(node.id.clone()))?;
                if s.distance_m < SHARED_CELL_RADIUS_M {
                    candidates.push(anchor);
                }
                if let Ok(h) = geo::bearing(p, poi.position) {
                    let (dr, dc) = heading_to_grid_offset(h);
                    candidates.push((anchor.0 + dr, anchor.1 + dc));
                }
            }
            candidates.extend(RING.iter().map(|(dr, dc)| (anchor.0 + dr, anchor.1 + dc)));

            let free = |c: &Cell| !layout.marks.contains_key(c) && letters.get(c).is_none_or(|&l| l == letter);
            match candidates.into_iter().find(free) {
                Some(cell) => {
                    letters.insert(cell, letter);
                    legend.insert(letter, s.landmark_name.clone());
                    placed.push(&s.poi_id);
                }
                None => {
                    tracing::warn!(poi = %s.poi_id, "no free grid cell near the path; POI dropped")
                }
            }
        }
    }

    let all = layout.marks.keys().chain(letters.keys());
    let (mut r0, mut r1, mut c0, mut c1) = (0, 0, 0, 0);
    for &(r, c) in all {
        r0 = r0.min(r);
        r1 = r1.max(r);
        c0 = c0.min(c);
        c1 = c1.max(c);
    }
    let rows = (r1 - r0 + 1) as usize;
    let cols = (c1 - c0 + 1) as usize;
    if rows > max_size || cols > max_size {
        return Err(EncodeError::CanvasOverflow {
            rows,
            cols,
            max: max_size,
        });
    }

    let idx = |(r, c): Cell| ((r - r0) as usize, (c - c0) as usize);
    let mut cells = vec![vec!['0'; cols]; rows];
    for (&cell, &ch) in layout.marks.iter().chain(letters.iter()) {
        let (r, c) = idx(cell);
        cells[r][c] = ch;
    }
    let node_cells = layout.pos.iter().map(|(id, &cell)| (id.clone(), idx(cell))).collect();

    Ok(GridCanvas {
        cells,
        legend,
        origin_row_col: idx((0, 0)),
        current_row_col: idx(current),
        node_cells,
    })
}

pub(super) fn encode(ctx: &EncodeContext<'_>, max_size: usize) -> Result<String, EncodeError> {
    let canvas = rasterize_grid(ctx, max_size)?;
    let mut out = String::new();
    let _ = writeln!(
        out,
        "Grid ({} rows x {} cols, north is up, one cell per street segment):",
        canvas.rows(),
        canvas.cols()
    );
    out.push_str(&canvas.render());
    out.push_str(
        "\n\nLegend: S = start, P = current position, 1 = visited, 2 = forward path, 3 = intersection, 0 = empty\n",
    );
    if !canvas.legend.is_empty() {
        out.push_str("Landmarks:\n");
        for (letter, name) in &canvas.legend {
            let _ = writeln!(out, "  {letter} = {name}");
        }
    }
    out.push_str("Node cells (row, col):\n");
    let mut by_cell: Vec<(&(usize, usize), &NodeId)> = canvas.node_cells.iter().map(|(id, rc)| (rc, id)).collect();
    by_cell.sort();
    for ((r, c), id) in by_cell {
        let _ = writeln!(out, "  ({r}, {c}) {id} [{}]", canvas.at(*r, *c));
    }
    let _ = writeln!(
        out,
        "Current heading: {:.1}° ({})",
        ctx.area.origin_heading.degrees(),
        geo::compass_word(ctx.area.origin_heading)
    );
    out.push_str("\nPlanning State:\n");
    out.push_str(&ctx.plan.render(false));
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::super::fixture;
    use super::*;
    use crate::geo::GeoPoint;
    use crate::instruction::{PlanningState, SubGoalPlan};
    use crate::visibility::construct_visible_area;

    fn id(s: &str) -> NodeId {
        NodeId::new(s)
    }

    fn canvas_for(g: &MapGraph, traj: &[NodeId], heading: f64) -> GridCanvas {
        let area = construct_visible_area(g, traj.last().unwrap(), Heading::new(heading).unwrap(), 1).unwrap();
        let plan = PlanningState::new(SubGoalPlan::whole_instruction("go"), vec![]);
        rasterize_grid(
            &EncodeContext {
                graph: g,
                area: &area,
                landmarks: &[],
                plan: &plan,
                trajectory: traj,
            },
            DEFAULT_MAX_CANVAS,
        )
        .unwrap()
    }

    #[test]
    fn single_node_is_a_lone_p() {
        let mut b = MapGraph::builder();
        b.node("a", GeoPoint::new(0.0, 0.0).unwrap());
        let g = b.build().unwrap();
        let c = canvas_for(&g, &[id("a")], 0.0);
        assert_eq!(c.cells, vec![vec!['P']]);
    }

    /// Three nodes north, then three east: an L turning right at `n3`.
    fn l_shape() -> MapGraph {
        let mut b = MapGraph::builder();
        let d = 0.0004;
        let k = 1.0 / 40f64.to_radians().cos();
        let pts = [
            ("n0", 0.0, 0.0),
            ("n1", 1.0, 0.0),
            ("n2", 2.0, 0.0),
            ("e1", 2.0, 1.0),
            ("e2", 2.0, 2.0),
        ];
        for (name, r, c) in pts {
            b.node(name, GeoPoint::new(40.0 + r * d, -73.0 + c * d * k).unwrap());
        }
        b.street("n0", "n1")
            .street("n1", "n2")
            .street("n2", "e1")
            .street("e1", "e2");
        b.build().unwrap()
    }

    #[test]
    fn l_shaped_trajectory() {
        let g = l_shape();
        let traj = [id("n0"), id("n1"), id("n2"), id("e1"), id("e2")];
        let c = canvas_for(&g, &traj, 90.0);
        // expected cells from hand-placed offsets: N, N, E, E
        let want = vec![vec!['1', '1', 'P'], vec!['1', '0', '0'], vec!['S', '0', '0']];
        assert_eq!(c.cells, want);
        assert_eq!(c.origin_row_col, (2, 0));
        assert_eq!(c.current_row_col, (0, 2));
    }

    #[test]
    fn head_of_the_l_with_path_ahead() {
        let g = l_shape();
        // at the corner, facing east: the path ahead is 2s along the top row
        let c = canvas_for(&g, &[id("n0"), id("n1"), id("n2")], 90.0);
        let want = vec![vec!['P', '2', '2'], vec!['1', '0', '0'], vec!['S', '0', '0']];
        assert_eq!(c.cells, want);
    }

    #[test]
    fn fixture_grid_invariants() {
        let s = fixture::scene();
        let c = rasterize_grid(&s.ctx(), DEFAULT_MAX_CANVAS).unwrap();
        assert_eq!(c.count('P'), 1);
        assert_eq!(c.count('S'), 1);
        assert_eq!(c.count('3'), 1);
        // the bank sits on the south-east corner of the crossing
        assert_eq!(c.legend.get(&'A').map(String::as_str), Some("bank"));
        let (r, col) = c.node_cells[&id("4242")];
        assert_eq!(c.at(r + 1, col + 1), 'A', "\n{}", c.render());
    }

    #[test]
    fn overflow_is_an_error() {
        let g = l_shape();
        let area = construct_visible_area(&g, &id("e2"), Heading::new(90.0).unwrap(), 1).unwrap();
        let plan = PlanningState::new(SubGoalPlan::whole_instruction("go"), vec![]);
        let traj = [id("n0"), id("n1"), id("n2"), id("e1"), id("e2")];
        let ctx = EncodeContext {
            graph: &g,
            area: &area,
            landmarks: &[],
            plan: &plan,
            trajectory: &traj,
        };
        assert_eq!(
            rasterize_grid(&ctx, 2),
            Err(EncodeError::CanvasOverflow {
                rows: 3,
                cols: 3,
                max: 2
            })
        );
    }
}
