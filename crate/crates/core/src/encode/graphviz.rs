use std::fmt::Write;

use super::EncodeContext;
use crate::geo::{compass_word, Heading};
use crate::visibility::{NodeKind, PathNode};

/// Whole degrees, truncated.
fn deg(h: Heading) -> i64 {
    h.degrees().floor() as i64
}

fn label(n: &PathNode) -> String {
    match n.kind {
        NodeKind::Intersection => format!("{}[Intersection]", n.id),
        NodeKind::Waypoint => n.id.to_string(),
    }
}

pub(super) fn encode(ctx: &EncodeContext<'_>) -> String {
    let area = ctx.area;
    let mut out = String::new();
    let _ = writeln!(
        out,
        "Current: {}[Current] [heading: {}°, {}]\n",
        area.origin,
        deg(area.origin_heading),
        compass_word(area.origin_heading)
    );

    for e in &area.exits {
        let _ = writeln!(
            out,
            "{}[Current] -> {} [heading: {}°, direction: {}]",
            area.origin,
            e.id,
            deg(e.step.heading),
            e.step.direction
        );
    }
    out.push('\n');

    let chain: Vec<&PathNode> = area.path.iter().chain(&area.lookahead).collect();
    for w in chain.windows(2) {
        if let Some(step) = w[0].to_next {
            let _ = writeln!(
                out,
                "{} -> {} [heading: {}°, direction: {}]",
                label(w[0]),
                w[1].id,
                deg(step.heading),
                step.direction
            );
        }
    }
    if !area.lookahead.is_empty() {
        let ids: Vec<&str> = area.lookahead.iter().map(|n| n.id.as_str()).collect();
        let _ = writeln!(out, "// lookahead: {}", ids.join(" -> "));
    }

    let intersections: Vec<&PathNode> = area.path.iter().filter(|n| !n.branches.is_empty()).collect();
    if !intersections.is_empty() {
        out.push('\n');
        for n in &intersections {
            let onward = chain
                .iter()
                .position(|p| p.id == n.id)
                .and_then(|i| chain.get(i + 1))
                .map(|p| &p.id);
            for (dir, b) in n.branches.iter().filter(|(_, b)| Some(&b.chain[0]) != onward) {
                let _ = writeln!(
                    out,
                    "{}[Intersection] -> {} [heading: {}°, direction: {}]",
                    n.id,
                    b.chain[0],
                    deg(b.heading),
                    dir
                );
            }
        }
        out.push_str("\nIntersection Branches (extended nodes)\n");
        for n in &intersections {
            for (dir, b) in &n.branches {
                let rest: Vec<&str> = b.chain.iter().map(|x| x.as_str()).collect();
                let _ = writeln!(
                    out,
                    "{} -{}-> {} [heading: {}°, {}]",
                    n.id,
                    dir,
                    rest.join(" -> "),
                    deg(b.heading),
                    compass_word(b.heading)
                );
            }
        }
    }

    let sightings: Vec<_> = area
        .path
        .iter()
        .flat_map(|n| n.nearby_pois.iter().map(move |s| (n, s)))
        .collect();
    if !sightings.is_empty() {
        out.push_str("\nPOIs\n");
        for (n, s) in sightings {
            let letter = s.landmark_letter.map(String::from).unwrap_or_else(|| "-".into());
            let _ = writeln!(
                out,
                "{letter}[{}] -- {} [style: dashed, distance: {}m, direction: {}]",
                s.landmark_name,
                n.id,
                s.distance_m.round() as i64,
                s.direction
            );
        }
    }

    out.push_str("\nPlanning State:\n");
    out.push_str(&ctx.plan.render(false));
    out
}

#[cfg(test)]
mod tests {
    use super::super::fixture;
    use super::*;

    #[test]
    fn arrow_notation() {
        let s = fixture::scene();
        let text = encode(&s.ctx());
        assert!(
            text.contains("38eb -> 4242 [heading: 180°, direction: Forward]"),
            "{text}"
        );
        // due east at this latitude is 89.99..., truncated
        assert!(
            text.contains("4242[Intersection] -> 5b89 [heading: 89°, direction: Left]"),
            "{text}"
        );
        assert_eq!(text.matches("-> cbc2 [").count(), 1, "{text}");
        assert!(text.contains("A[bank] -- 4242 [style: dashed, distance: 14m, direction: Left]"));
        assert!(text.contains("Intersection Branches (extended nodes)"));
        assert!(text.contains("4242 -Left-> 5b89 -> bf02 [heading: 89°, East]"));
    }

    #[test]
    fn degrees_truncate() {
        assert_eq!(deg(Heading::new(208.9).unwrap()), 208);
        assert_eq!(deg(Heading::new(0.2).unwrap()), 0);
    }
}
