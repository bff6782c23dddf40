//! Non-learned baselines: a random walker, a keyword heuristic and an action
//! sampler fitted to reference routes.

use std::collections::HashMap;

use rand::distr::weighted::WeightedIndex;
use rand::distr::Distribution;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use regex::Regex;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use super::{best_aligned, onward_edges, DecideContext, Navigator, Policy, PolicyDecision, PolicyError};
use crate::dataset::Instance;
use crate::geo::{self, RelativeDirection};
use crate::graph::MapGraph;
use crate::instruction::{DecisionStatus, SubGoalPlan};

/// Chance that the random walker stops at an intersection it has walked to.
pub const DEFAULT_STOP_PROBABILITY: f64 = 0.2;

fn is_intersection(g: &MapGraph, ctx: &DecideContext<'_>) -> bool {
    g.is_intersection(ctx.current.as_str()).unwrap_or(false)
}

fn stop_here(ctx: &DecideContext<'_>) -> PolicyDecision {
    PolicyDecision::new(DecisionStatus::Completed, ctx.current.clone())
}

fn step_to(ctx: &DecideContext<'_>, offset: f64) -> Result<PolicyDecision, PolicyError> {
    let edges = onward_edges(ctx.graph, ctx.current, ctx.previous);
    match best_aligned(&edges, ctx.heading.rotate(offset)) {
        Some(next) => Ok(PolicyDecision::new(DecisionStatus::InProgress, next)),
        None => Ok(stop_here(ctx)),
    }
}

fn whole(instance: &Instance) -> SubGoalPlan {
    SubGoalPlan::whole_instruction(&instance.instruction)
}

/// Picks uniformly among onward edges at intersections and at the start;
/// follows the street elsewhere.
#[derive(Debug, Clone)]
pub struct RandomWalkPolicy {
    pub stop_probability: f64,
}

impl Default for RandomWalkPolicy {
    fn default() -> Self {
        RandomWalkPolicy {
            stop_probability: DEFAULT_STOP_PROBABILITY,
        }
    }
}

struct RandomWalker {
    rng: ChaCha8Rng,
    stop_probability: f64,
}

impl Policy for RandomWalkPolicy {
    fn name(&self) -> &str {
        "random"
    }

    fn start<'a>(&'a self, _instance: &'a Instance, seed: u64) -> Box<dyn Navigator + 'a> {
        Box::new(RandomWalker {
            rng: ChaCha8Rng::seed_from_u64(seed),
            stop_probability: self.stop_probability,
        })
    }
}

impl Navigator for RandomWalker {
    fn plan(&mut self, instance: &Instance) -> Result<SubGoalPlan, PolicyError> {
        Ok(whole(instance))
    }

    fn decide(&mut self, ctx: &DecideContext<'_>) -> Result<PolicyDecision, PolicyError> {
        let at_start = ctx.previous.is_none();
        if !at_start && !is_intersection(ctx.graph, ctx) {
            return step_to(ctx, 0.0);
        }
        if !at_start && self.rng.random_bool(self.stop_probability) {
            return Ok(stop_here(ctx));
        }
        let edges = onward_edges(ctx.graph, ctx.current, ctx.previous);
        if edges.is_empty() {
            return Ok(stop_here(ctx));
        }
        let pick = self.rng.random_range(0..edges.len());
        Ok(PolicyDecision::new(DecisionStatus::InProgress, edges[pick].0.clone()))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Directive {
    Left,
    Right,
    Straight,
}

impl Directive {
    pub fn offset(self) -> f64 {
        match self {
            Directive::Left => -90.0,
            Directive::Right => 90.0,
            Directive::Straight => 0.0,
        }
    }
}

/// Phrases recognised as turn directives, grouped by meaning. Loadable from
/// JSON as `{"left": [...], "right": [...], "straight": [...]}`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DirectiveTable {
    pub left: Vec<String>,
    pub right: Vec<String>,
    pub straight: Vec<String>,
}

impl Default for DirectiveTable {
    fn default() -> Self {
        let v = |xs: &[&str]| xs.iter().map(|s| s.to_string()).collect();
        DirectiveTable {
            left: v(&[
                "turn left",
                "bear left",
                "make a left",
                "take a left",
                "hang a left",
                "veer left",
                "go left",
            ]),
            right: v(&[
                "turn right",
                "bear right",
                "make a right",
                "take a right",
                "hang a right",
                "veer right",
                "go right",
            ]),
            straight: v(&[
                "go straight",
                "continue straight",
                "straight through",
                "keep straight",
                "head straight",
                "walk straight",
                "continue forward",
            ]),
        }
    }
}

impl DirectiveTable {
    /// Directives in the order they appear in `instruction`.
    pub fn extract(&self, instruction: &str) -> Vec<Directive> {
        let mut phrases: Vec<(String, Directive)> = Vec::new();
        for (list, d) in [
            (&self.left, Directive::Left),
            (&self.right, Directive::Right),
            (&self.straight, Directive::Straight),
        ] {
            phrases.extend(list.iter().map(|p| (p.to_lowercase(), d)));
        }
        phrases.sort_by_key(|(p, _)| std::cmp::Reverse(p.len()));
        if phrases.is_empty() {
            return Vec::new();
        }

        let lookup: HashMap<String, Directive> = phrases
            .iter()
            .map(|(p, d)| (p.split_whitespace().collect::<Vec<_>>().join(" "), *d))
            .collect();
        let alternation = phrases
            .iter()
            .map(|(p, _)| p.split_whitespace().map(regex::escape).collect::<Vec<_>>().join(r"\s+"))
            .collect::<Vec<_>>()
            .join("|");
        let re = Regex::new(&format!(r"(?i)\b(?:{alternation})\b")).expect("escaped phrases form a valid regex");
        re.find_iter(instruction)
            .filter_map(|m| {
                let key = m
                    .as_str()
                    .to_lowercase()
                    .split_whitespace()
                    .collect::<Vec<_>>()
                    .join(" ");
                lookup.get(&key).copied()
            })
            .collect()
    }
}

/// Walks the directives extracted from the instruction, one per
/// intersection, and stops at the first intersection after they run out.
#[derive(Debug, Clone, Default)]
pub struct HeuristicPolicy {
    pub table: DirectiveTable,
}

struct HeuristicNavigator {
    directives: Vec<Directive>,
    cursor: usize,
}

impl Policy for HeuristicPolicy {
    fn name(&self) -> &str {
        "heuristic"
    }

    fn start<'a>(&'a self, instance: &'a Instance, _seed: u64) -> Box<dyn Navigator + 'a> {
        Box::new(HeuristicNavigator {
            directives: self.table.extract(&instance.instruction),
            cursor: 0,
        })
    }
}

impl Navigator for HeuristicNavigator {
    fn plan(&mut self, instance: &Instance) -> Result<SubGoalPlan, PolicyError> {
        Ok(whole(instance))
    }

    fn decide(&mut self, ctx: &DecideContext<'_>) -> Result<PolicyDecision, PolicyError> {
        if !is_intersection(ctx.graph, ctx) {
            let edges = onward_edges(ctx.graph, ctx.current, ctx.previous);
            let dead_end = ctx.previous.is_some() && edges.iter().all(|(id, _)| Some(id) == ctx.previous);
            if dead_end {
                return Ok(stop_here(ctx));
            }
            return step_to(ctx, 0.0);
        }
        match self.directives.get(self.cursor) {
            Some(d) => {
                self.cursor += 1;
                step_to(ctx, d.offset())
            }
            None if ctx.previous.is_none() => step_to(ctx, 0.0),
            None => Ok(stop_here(ctx)),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ActionClass {
    Forward,
    Left,
    Right,
}

impl ActionClass {
    pub const ALL: [ActionClass; 3] = [ActionClass::Forward, ActionClass::Left, ActionClass::Right];

    /// Folds a relative direction onto the three movable classes; a
    /// reversal counts as a turn on the side of its signed angle.
    pub fn from_direction(delta: f64, dir: RelativeDirection) -> ActionClass {
        match dir {
            RelativeDirection::Forward => ActionClass::Forward,
            RelativeDirection::Left => ActionClass::Left,
            RelativeDirection::Right => ActionClass::Right,
            RelativeDirection::Back if delta < 0.0 => ActionClass::Left,
            RelativeDirection::Back => ActionClass::Right,
        }
    }

    pub fn offset(self) -> f64 {
        match self {
            ActionClass::Forward => 0.0,
            ActionClass::Left => -90.0,
            ActionClass::Right => 90.0,
        }
    }

    fn index(self) -> usize {
        self as usize
    }
}

#[derive(Debug, Error, Clone, PartialEq)]
pub enum FitError {
    #[error("cannot fit an action distribution on an empty corpus")]
    EmptyCorpus,
}

/// Movement frequencies from reference routes, split by whether the node is
/// an intersection, plus the per-decision chance of stopping.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ActionDistribution {
    /// P(forward, left, right | intersection).
    pub intersection: [f64; 3],
    /// P(forward, left, right | not an intersection).
    pub waypoint: [f64; 3],
    /// Route ends over all reference decisions (moves plus stops).
    pub stop: f64,
    pub intersection_counts: [u64; 3],
    pub waypoint_counts: [u64; 3],
    pub stops: u64,
}

impl ActionDistribution {
    pub fn always_forward() -> Self {
        ActionDistribution {
            intersection: [1.0, 0.0, 0.0],
            waypoint: [1.0, 0.0, 0.0],
            stop: 0.0,
            intersection_counts: [0; 3],
            waypoint_counts: [0; 3],
            stops: 0,
        }
    }

    pub fn bucket(&self, intersection: bool) -> [f64; 3] {
        if intersection {
            self.intersection
        } else {
            self.waypoint
        }
    }

    pub fn sample<R: Rng>(&self, rng: &mut R, intersection: bool) -> ActionClass {
        let w = WeightedIndex::new(self.bucket(intersection)).expect("bucket weights are normalized");
        ActionClass::ALL[w.sample(rng)]
    }
}

fn normalize(counts: [u64; 3]) -> [f64; 3] {
    let n: u64 = counts.iter().sum();
    if n == 0 {
        return [1.0, 0.0, 0.0];
    }
    counts.map(|c| c as f64 / n as f64)
}

pub fn fit_action_distribution(instances: &[Instance]) -> Result<ActionDistribution, FitError> {
    if instances.is_empty() {
        return Err(FitError::EmptyCorpus);
    }
    let mut at_x = [0u64; 3];
    let mut at_w = [0u64; 3];
    let mut moves = 0u64;
    for inst in instances {
        let g = &inst.graph;
        let mut incoming = inst.initial_heading;
        for pair in inst.route.windows(2) {
            let (Ok(a), Ok(b)) = (g.position(pair[0].as_str()), g.position(pair[1].as_str())) else {
                continue;
            };
            let Ok(out) = geo::bearing(a, b) else {
                continue;
            };
            let (delta, dir) = geo::relative_direction(out, incoming);
            let class = ActionClass::from_direction(delta, dir).index();
            if g.is_intersection(pair[0].as_str()).unwrap_or(false) {
                at_x[class] += 1;
            } else {
                at_w[class] += 1;
            }
            moves += 1;
            incoming = out;
        }
    }
    let stops = instances.len() as u64;
    Ok(ActionDistribution {
        intersection: normalize(at_x),
        waypoint: normalize(at_w),
        stop: stops as f64 / (stops + moves) as f64,
        intersection_counts: at_x,
        waypoint_counts: at_w,
        stops,
    })
}

/// Samples a movement class from a fitted table and takes the edge nearest
/// to it.
#[derive(Debug, Clone)]
pub struct ActionSamplingPolicy {
    pub table: ActionDistribution,
}

struct Sampler<'a> {
    table: &'a ActionDistribution,
    rng: ChaCha8Rng,
}

impl Policy for ActionSamplingPolicy {
    fn name(&self) -> &str {
        "sampling"
    }

    fn start<'a>(&'a self, _instance: &'a Instance, seed: u64) -> Box<dyn Navigator + 'a> {
        Box::new(Sampler {
            table: &self.table,
            rng: ChaCha8Rng::seed_from_u64(seed),
        })
    }
}

impl Navigator for Sampler<'_> {
    fn plan(&mut self, instance: &Instance) -> Result<SubGoalPlan, PolicyError> {
        Ok(whole(instance))
    }

    fn decide(&mut self, ctx: &DecideContext<'_>) -> Result<PolicyDecision, PolicyError> {
        if ctx.previous.is_some() && self.rng.random_bool(self.table.stop) {
            return Ok(stop_here(ctx));
        }
        let class = self.table.sample(&mut self.rng, is_intersection(ctx.graph, ctx));
        step_to(ctx, class.offset())
    }
}

#[cfg(test)]
mod tests {
    use statrs::distribution::{ChiSquared, ContinuousCDF};

    use super::super::testutil::{instance, lattice};
    use super::*;
    use crate::encode::RepresentationKind;
    use crate::geo::{GeoPoint, Heading};
    use crate::graph::NodeId;
    use crate::instruction::PlanningState;
    use crate::visibility::construct_visible_area;

    fn decide_once(
        nav: &mut dyn Navigator,
        inst: &Instance,
        at: &str,
        prev: Option<&str>,
        heading: f64,
    ) -> PolicyDecision {
        let g = &inst.graph;
        let current = NodeId::new(at);
        let previous = prev.map(NodeId::new);
        let heading = Heading::new(heading).unwrap();
        let area = construct_visible_area(g, &current, heading, 1).unwrap();
        let plan = PlanningState::new(SubGoalPlan::whole_instruction(&inst.instruction), vec![]);
        nav.decide(&DecideContext {
            instruction: &inst.instruction,
            graph: g,
            plan: &plan,
            area: &area,
            encoded: "",
            kind: RepresentationKind::Textual,
            current: &current,
            heading,
            previous: previous.as_ref(),
        })
        .unwrap()
    }

    /// T junction at `x`: arrive from the south, exits west, north, east.
    fn tee() -> Instance {
        let mut b = MapGraph::builder();
        let d = 0.0005;
        let p = |lat: f64, lng: f64| GeoPoint::new(40.0 + lat * d, -73.0 + lng * d * 1.3).unwrap();
        b.node("s", p(-1.0, 0.0)).node("x", p(0.0, 0.0));
        b.node("w", p(0.0, -1.0)).node("n", p(1.0, 0.0)).node("e", p(0.0, 1.0));
        b.street("s", "x").street("x", "w").street("x", "n").street("x", "e");
        instance(b.build().unwrap(), "walk", &["s", "x", "n"])
    }

    #[test]
    fn random_walker_is_reproducible() {
        let inst = tee();
        let policy = RandomWalkPolicy { stop_probability: 0.0 };
        let a = decide_once(&mut *policy.start(&inst, 42), &inst, "x", Some("s"), 0.0);
        let b = decide_once(&mut *policy.start(&inst, 42), &inst, "x", Some("s"), 0.0);
        assert_eq!(a, b);
    }

    #[test]
    fn random_walker_is_uniform_at_a_junction() {
        let inst = tee();
        let policy = RandomWalkPolicy { stop_probability: 0.0 };
        let n = 10_000;
        let mut counts: HashMap<String, usize> = HashMap::new();
        for seed in 0..n {
            let d = decide_once(&mut *policy.start(&inst, seed), &inst, "x", Some("s"), 0.0);
            *counts.entry(d.next_node.to_string()).or_default() += 1;
        }
        assert_eq!(counts.len(), 3, "{counts:?}");
        let expected = n as f64 / 3.0;
        let mut chi2 = 0.0;
        for c in counts.values() {
            assert!((*c as f64 / n as f64 - 1.0 / 3.0).abs() < 0.02, "{counts:?}");
            chi2 += (*c as f64 - expected).powi(2) / expected;
        }
        let p = 1.0 - ChiSquared::new(2.0).unwrap().cdf(chi2);
        assert!(p > 0.01, "chi2 {chi2}, p {p}");
    }

    #[test]
    fn random_walker_stops_only_after_moving() {
        let inst = tee();
        let policy = RandomWalkPolicy { stop_probability: 1.0 };
        let first = decide_once(&mut *policy.start(&inst, 1), &inst, "x", None, 0.0);
        assert_eq!(first.status, DecisionStatus::InProgress);
        let later = decide_once(&mut *policy.start(&inst, 1), &inst, "x", Some("s"), 0.0);
        assert_eq!(later, PolicyDecision::new(DecisionStatus::Completed, "x"));
    }

    #[test]
    fn directives_in_text_order() {
        let t = DirectiveTable::default();
        let got = t.extract("Go straight past the bank, then turn  right at the light. Turn left after the park.");
        assert_eq!(got, [Directive::Straight, Directive::Right, Directive::Left]);
        assert!(t.extract("walk to the corner").is_empty());
        // whole words only
        assert!(t.extract("go leftover street").is_empty());
    }

    #[test]
    fn heuristic_turns_left_at_a_crossing() {
        let inst = instance(lattice(3), "turn left at the bank", &["r2c1", "r1c1", "r1c0"]);
        let policy = HeuristicPolicy::default();
        let mut nav = policy.start(&inst, 0);
        let d = decide_once(&mut *nav, &inst, "r1c1", Some("r2c1"), 0.0);
        assert_eq!(d.next_node.as_str(), "r1c0");
        // directives exhausted: the next intersection is a stop
        let d = decide_once(&mut *nav, &inst, "r1c0", Some("r1c1"), 270.0);
        assert_eq!(d.status, DecisionStatus::Completed);
    }

    #[test]
    fn heuristic_without_keywords_goes_forward() {
        let inst = instance(lattice(3), "find the bakery", &["r2c1", "r1c1", "r0c1"]);
        let policy = HeuristicPolicy::default();
        let d = decide_once(&mut *policy.start(&inst, 0), &inst, "r2c1", None, 0.0);
        assert_eq!(d, PolicyDecision::new(DecisionStatus::InProgress, "r1c1"));
    }

    #[test]
    fn degenerate_table_always_goes_forward() {
        let inst = instance(lattice(3), "go", &["r2c1", "r1c1"]);
        let policy = ActionSamplingPolicy {
            table: ActionDistribution::always_forward(),
        };
        for seed in 0..50 {
            let d = decide_once(&mut *policy.start(&inst, seed), &inst, "r1c1", Some("r2c1"), 0.0);
            assert_eq!(d, PolicyDecision::new(DecisionStatus::InProgress, "r0c1"));
        }
    }

    #[test]
    fn sampled_frequency_tracks_the_table() {
        let table = ActionDistribution {
            intersection: [0.7, 0.2, 0.1],
            ..ActionDistribution::always_forward()
        };
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        let n = 10_000;
        let fwd = (0..n)
            .filter(|_| table.sample(&mut rng, true) == ActionClass::Forward)
            .count();
        assert!((fwd as f64 / n as f64 - 0.7).abs() < 0.02, "{fwd}");
    }

    #[test]
    fn sampler_is_deterministic_under_seed() {
        let inst = instance(lattice(3), "go", &["r2c1", "r1c1"]);
        let table = ActionDistribution {
            intersection: [0.4, 0.3, 0.3],
            stop: 0.3,
            ..ActionDistribution::always_forward()
        };
        let policy = ActionSamplingPolicy { table };
        let run = |seed| {
            let mut nav = policy.start(&inst, seed);
            (0..20)
                .map(|_| decide_once(&mut *nav, &inst, "r1c1", Some("r2c1"), 0.0))
                .collect::<Vec<_>>()
        };
        assert_eq!(run(5), run(5));
    }

    #[test]
    fn straight_route_fits_pure_forward() {
        let inst = instance(lattice(4), "go", &["r3c0", "r2c0", "r1c0", "r0c0"]);
        let fit = fit_action_distribution(std::slice::from_ref(&inst)).unwrap();
        // r2c0 and r1c0 sit on the lattice edge with degree 3
        assert_eq!(fit.intersection, [1.0, 0.0, 0.0]);
        assert_eq!(fit.waypoint, [1.0, 0.0, 0.0]);
        assert_eq!(fit.stops, 1);
        assert!(fit_action_distribution(&[]).is_err());
    }

    #[test]
    fn fit_matches_a_recount() {
        // routes with turns on a 5x5 lattice
        let routes: [&[&str]; 10] = [
            &["r4c0", "r3c0", "r2c0", "r2c1", "r2c2"],
            &["r0c0", "r0c1", "r1c1", "r1c2"],
            &["r2c2", "r2c3", "r3c3", "r3c2", "r3c1"],
            &["r4c4", "r3c4", "r2c4", "r1c4", "r0c4"],
            &["r1c1", "r2c1", "r2c2", "r1c2", "r1c3"],
            &["r0c2", "r1c2", "r2c2", "r3c2", "r3c3"],
            &["r3c0", "r3c1", "r2c1", "r2c0"],
            &["r4c2", "r3c2", "r3c3", "r2c3", "r2c4"],
            &["r1c0", "r1c1", "r1c2", "r1c3", "r1c4"],
            &["r2c3", "r2c2", "r1c2", "r0c2", "r0c1"],
        ];
        let insts: Vec<Instance> = routes.iter().map(|r| instance(lattice(5), "x", r)).collect();
        let fit = fit_action_distribution(&insts).unwrap();

        // recount from lattice coordinates: turning from (dr, dc) to
        // (dr', dc') is left iff the cross product dr*dc' - dc*dr' < 0
        let rc = |s: &str| -> (i32, i32) {
            let (r, c) = s[1..].split_once('c').unwrap();
            (r.parse().unwrap(), c.parse().unwrap())
        };
        let degree = |(r, c): (i32, i32)| {
            [(0, 1), (0, -1), (1, 0), (-1, 0)]
                .iter()
                .filter(|(a, b)| (0..5).contains(&(r + a)) && (0..5).contains(&(c + b)))
                .count()
        };
        let mut want_x = [0u64; 3];
        let mut want_w = [0u64; 3];
        for r in routes {
            let pts: Vec<_> = r.iter().map(|s| rc(s)).collect();
            let mut incoming = (pts[1].0 - pts[0].0, pts[1].1 - pts[0].1);
            for i in 0..pts.len() - 1 {
                let out = (pts[i + 1].0 - pts[i].0, pts[i + 1].1 - pts[i].1);
                let cross = incoming.0 * out.1 - incoming.1 * out.0;
                // rows grow southward, so the screen cross product is flipped
                let class = if out == incoming {
                    0
                } else if cross > 0 {
                    1
                } else {
                    2
                };
                if degree(pts[i]) > 2 {
                    want_x[class] += 1;
                } else {
                    want_w[class] += 1;
                }
                incoming = out;
            }
        }
        assert_eq!(fit.intersection_counts, want_x);
        assert_eq!(fit.waypoint_counts, want_w);
        for b in [fit.intersection, fit.waypoint] {
            assert!((b.iter().sum::<f64>() - 1.0).abs() < 1e-9);
        }
    }
}
