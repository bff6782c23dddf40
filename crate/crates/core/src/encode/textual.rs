use std::fmt::Write;

use super::{connections, direction_word, EncodeContext};
use crate::geo::{compass_word, Heading};
use crate::visibility::NodeKind;

fn heading_text(h: Heading) -> String {
    format!("heading: {:.1}°, {}", h.degrees(), compass_word(h))
}

pub(super) fn encode(ctx: &EncodeContext<'_>) -> String {
    let area = ctx.area;
    let mut out = String::new();
    let _ = writeln!(
        out,
        "Current position: Node {} ({})",
        area.origin,
        heading_text(area.origin_heading)
    );

    out.push_str("POI legend:\n");
    if ctx.landmarks.is_empty() {
        out.push_str("  (none)\n");
    }
    for lm in ctx.landmarks {
        let letter = lm.letter().map(String::from).unwrap_or_else(|| "-".into());
        let category = if lm.landmark.category.is_empty() {
            String::new()
        } else {
            format!(" ({})", lm.landmark.category)
        };
        let found = if lm.pois.is_empty() { " [not on map]" } else { "" };
        let _ = writeln!(out, "  {letter}: {}{category}{found}", lm.landmark.name);
    }
    out.push('\n');

    for (i, node) in area.path.iter().enumerate() {
        let label = match node.kind {
            NodeKind::Intersection => "Intersection",
            NodeKind::Waypoint => "Node",
        };
        let marker = if i == 0 { " (current position)" } else { "" };
        let _ = writeln!(out, "{label} {}{marker}:", node.id);
        out.push_str("  Connected to nodes:\n");
        let conns = connections(area, i);
        if conns.is_empty() {
            out.push_str("    - (none)\n");
        }
        for (id, h, dir) in conns {
            let _ = writeln!(
                out,
                "    - Node {id} is to the {} ({})",
                direction_word(dir),
                heading_text(h)
            );
        }
        if !node.branches.is_empty() {
            out.push_str("  Branches from this intersection:\n");
            for (dir, b) in &node.branches {
                let _ = writeln!(out, "    - {dir} branch ({}):", heading_text(b.heading));
                let chain: Vec<&str> = b.chain.iter().map(|n| n.as_str()).collect();
                let _ = writeln!(out, "      - Path: {}", chain.join(" → "));
            }
        }
        if !node.nearby_pois.is_empty() {
            out.push_str("  Nearby POIs:\n");
            for s in &node.nearby_pois {
                let letter = s.landmark_letter.map(String::from).unwrap_or_else(|| "-".into());
                let _ = writeln!(
                    out,
                    "    - {letter} ({}) is to the {}, {:.1} m",
                    s.landmark_name,
                    direction_word(s.direction),
                    s.distance_m
                );
            }
        }
        out.push('\n');
    }

    if !area.lookahead.is_empty() {
        let ids: Vec<&str> = area.lookahead.iter().map(|n| n.id.as_str()).collect();
        let _ = writeln!(out, "Lookahead beyond the visible path: {}\n", ids.join(" → "));
    }

    out.push_str("Planning State:\n");
    out.push_str(&ctx.plan.render(false));
    out
}

#[cfg(test)]
mod tests {
    use super::super::fixture;
    use super::*;
    use crate::geo::GeoPoint;
    use crate::graph::{MapGraph, NodeId};
    use crate::instruction::{PlanningState, SubGoalPlan};
    use crate::visibility::construct_visible_area;

    #[test]
    fn corridor_has_one_connection_block_per_node() {
        let mut b = MapGraph::builder();
        b.node("38eb", GeoPoint::new(40.0, -73.0).unwrap());
        b.node("4242", GeoPoint::new(39.9995, -73.0004).unwrap());
        b.street("38eb", "4242");
        let g = b.build().unwrap();
        let h = crate::geo::bearing(g.position("38eb").unwrap(), g.position("4242").unwrap()).unwrap();
        let area = construct_visible_area(&g, &NodeId::new("38eb"), h, 1).unwrap();
        let plan = PlanningState::new(SubGoalPlan::whole_instruction("go"), vec![]);
        let traj = [NodeId::new("38eb")];
        let text = encode(&EncodeContext {
            graph: &g,
            area: &area,
            landmarks: &[],
            plan: &plan,
            trajectory: &traj,
        });
        assert_eq!(text.matches("Connected to nodes").count(), 2);
        let want = format!("Node 4242 is to the forward (heading: {:.1}°, Southwest)", h.degrees());
        assert!(text.contains(&want), "{text}");
    }

    #[test]
    fn fixture_mentions_branches_and_pois() {
        let s = fixture::scene();
        let text = encode(&s.ctx());
        assert!(text.contains("Intersection 4242:"));
        assert!(text.contains("Left branch"));
        assert!(text.contains("Path: 5b89 → bf02"));
        assert!(text.contains("Current position: Node 38eb (heading: 180.0°, South)"));
        assert!(text.contains("A (bank) is to the left, 14.2 m"));
        assert!(text.contains("B: blue bottle (amenity)"));
        assert!(text.contains("Lookahead beyond the visible path: cbc2 → c5d0"));
        assert!(text.contains("1. Walk south to the bank at the crossing (IN_PROGRESS)"));
    }
}
