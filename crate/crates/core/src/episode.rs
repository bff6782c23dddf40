//! The navigation loop: build the forward view, ask the policy, apply the
//! decision, and stop on plan completion or a cap.

use std::collections::BTreeMap;
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::mpsc;
use std::time::{Duration, Instant};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::dataset::Instance;
use crate::encode::{encode, EncodeContext, RepresentationKind};
use crate::geo::{self, Heading};
use crate::graph::NodeId;
use crate::instruction::{
    assign_landmark_letters, ground_landmarks, order_by_appearance, DecisionStatus, PlanningState, DEFAULT_TAU,
};
use crate::policy::{DecideContext, Policy, PolicyDecision, PolicyError, TokenUsage};
use crate::visibility::{annotate_pois, construct_visible_area};

pub const DEFAULT_MAX_STEPS: usize = 100;
pub const DEFAULT_MAX_RETRIES: usize = 15;
pub const DEFAULT_UNITS: usize = 1;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpisodeConfig {
    /// Intersections ahead included in the forward view.
    pub units: usize,
    pub kind: RepresentationKind,
    pub max_steps: usize,
    /// Invalid decisions tolerated per sub-goal.
    pub max_retries: usize,
    /// Grounding threshold on the 0-100 similarity scale.
    pub tau: f64,
    /// Base seed; each episode derives its own from this and its id.
    pub seed: u64,
}

impl Default for EpisodeConfig {
    fn default() -> Self {
        EpisodeConfig {
            units: DEFAULT_UNITS,
            kind: RepresentationKind::OptimizedJson,
            max_steps: DEFAULT_MAX_STEPS,
            max_retries: DEFAULT_MAX_RETRIES,
            tau: DEFAULT_TAU,
            seed: 0,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Termination {
    PlanFinished,
    StepCapExceeded,
    RetryCapExceeded,
    PolicyFailure,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum StepOutcome {
    /// Walked these nodes, in order.
    Moved { hops: Vec<NodeId> },
    /// Finished the sub-goal without moving.
    CompletedInPlace,
    /// Rejected; counted against the retry budget unless fatal.
    Rejected { error: String },
}

/// One policy invocation and its effect.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StepRecord {
    /// 1-based invocation number.
    pub invocation: usize,
    /// Active sub-goal (1-based) when the decision was made.
    pub sub_goal: usize,
    pub node: NodeId,
    pub heading: Heading,
    pub area_digest: String,
    pub decision: Option<PolicyDecision>,
    pub outcome: StepOutcome,
    /// Counters after applying the decision.
    pub step_count: usize,
    pub retry_count: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpisodeResult {
    pub instance_id: String,
    pub trajectory: Vec<NodeId>,
    pub final_node: NodeId,
    pub termination: Termination,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub failure: Option<String>,
    /// Hops moved plus in-place completions.
    pub step_count: usize,
    /// Decision calls made, including rejected ones.
    pub invocations: usize,
    pub sub_goals_completed: usize,
    pub sub_goals_total: usize,
    pub token_usage: TokenUsage,
    #[serde(default)]
    pub steps: Vec<StepRecord>,
    #[serde(skip)]
    pub duration: Duration,
}

/// Stable per-episode seed, independent of batch order.
pub fn episode_seed(base: u64, instance_id: &str) -> u64 {
    let mut h = Sha256::new();
    h.update(base.to_le_bytes());
    h.update(instance_id.as_bytes());
    let d = h.finalize();
    u64::from_le_bytes(d[..8].try_into().expect("digest has 8 bytes"))
}

struct Run<'a> {
    instance: &'a Instance,
    trajectory: Vec<NodeId>,
    heading: Heading,
    step_count: usize,
    retry_count: usize,
    invocations: usize,
    steps: Vec<StepRecord>,
}

impl Run<'_> {
    fn current(&self) -> &NodeId {
        self.trajectory.last().expect("trajectory starts non-empty")
    }

    fn walk(&mut self, hops: &[NodeId], max_steps: usize) -> Vec<NodeId> {
        let g = &self.instance.graph;
        let mut moved = Vec::new();
        for hop in hops {
            if self.step_count >= max_steps {
                break;
            }
            let from = g.position(self.current().as_str());
            let to = g.position(hop.as_str());
            if let (Ok(a), Ok(b)) = (from, to) {
                if let Ok(h) = geo::bearing(a, b) {
                    self.heading = h;
                }
            }
            self.trajectory.push(hop.clone());
            self.step_count += 1;
            moved.push(hop.clone());
        }
        moved
    }
}

pub fn run_episode(instance: &Instance, policy: &dyn Policy, cfg: &EpisodeConfig) -> EpisodeResult {
    let started = Instant::now();
    let seed = episode_seed(cfg.seed, &instance.id);
    let mut nav = policy.start(instance, seed);
    let mut run = Run {
        instance,
        trajectory: vec![instance.start().clone()],
        heading: instance.initial_heading,
        step_count: 0,
        retry_count: 0,
        invocations: 0,
        steps: Vec::new(),
    };
    let mut state: Option<PlanningState> = None;

    let outcome = drive(&mut run, &mut *nav, &mut state, cfg);
    let (termination, failure) = match outcome {
        Ok(t) => (t, None),
        Err((t, msg)) => (t, Some(msg)),
    };
    let (done, total) = state
        .as_ref()
        .map(|s| {
            (
                s.current_index.saturating_sub(1).min(s.sub_goals.len()),
                s.sub_goals.len(),
            )
        })
        .unwrap_or((0, 0));
    EpisodeResult {
        instance_id: instance.id.clone(),
        final_node: run.current().clone(),
        trajectory: run.trajectory,
        termination,
        failure,
        step_count: run.step_count,
        invocations: run.invocations,
        sub_goals_completed: done,
        sub_goals_total: total,
        token_usage: nav.usage(),
        steps: run.steps,
        duration: started.elapsed(),
    }
}

type Stop = (Termination, String);

fn drive(
    run: &mut Run<'_>,
    nav: &mut dyn crate::policy::Navigator,
    state_slot: &mut Option<PlanningState>,
    cfg: &EpisodeConfig,
) -> Result<Termination, Stop> {
    let instance = run.instance;
    let g = &*instance.graph;
    let fatal = |e: &dyn std::fmt::Display| (Termination::PolicyFailure, e.to_string());

    let mut plan_retries = 0;
    let plan = loop {
        match nav.plan(instance) {
            Ok(p) => break p,
            Err(e) if e.is_retryable() && plan_retries < cfg.max_retries => plan_retries += 1,
            Err(e) if e.is_retryable() => return Err((Termination::RetryCapExceeded, e.to_string())),
            Err(e) => return Err(fatal(&e)),
        }
    };
    let landmarks: Vec<_> = plan
        .landmarks
        .iter()
        .filter(|l| !l.name.trim().is_empty())
        .cloned()
        .collect();
    let landmarks =
        assign_landmark_letters(order_by_appearance(landmarks, &instance.instruction)).map_err(|e| fatal(&e))?;
    let grounded = ground_landmarks(&landmarks, g, cfg.tau).map_err(|e| fatal(&e))?;
    let state = state_slot.insert(PlanningState::new(plan, grounded));

    loop {
        if state.is_finished() {
            return Ok(Termination::PlanFinished);
        }
        if run.step_count >= cfg.max_steps {
            return Ok(Termination::StepCapExceeded);
        }
        let current = run.current().clone();
        let area = construct_visible_area(g, &current, run.heading, cfg.units).map_err(|e| fatal(&e))?;
        let area = annotate_pois(g, area, &state.landmarks);
        let encoded = encode(
            cfg.kind,
            &EncodeContext {
                graph: g,
                area: &area,
                landmarks: &state.landmarks,
                plan: state,
                trajectory: &run.trajectory,
            },
        )
        .map_err(|e| fatal(&e))?;

        run.invocations += 1;
        let previous = run.trajectory.len().checked_sub(2).map(|i| run.trajectory[i].clone());
        let ctx = DecideContext {
            instruction: &instance.instruction,
            graph: g,
            plan: state,
            area: &area,
            encoded: &encoded,
            kind: cfg.kind,
            current: &current,
            heading: run.heading,
            previous: previous.as_ref(),
        };
        let decided = nav.decide(&ctx);
        let checked = decided.clone().and_then(|d| {
            let hops = area.route_to(&d.next_node).ok_or_else(|| PolicyError::InvalidNode {
                node: d.next_node.clone(),
            })?;
            if d.status == DecisionStatus::InProgress && hops.is_empty() {
                return Err(PolicyError::Malformed {
                    reason: "IN_PROGRESS decision does not move".into(),
                    raw: d.next_node.to_string(),
                });
            }
            Ok((d, hops))
        });

        let mut record = StepRecord {
            invocation: run.invocations,
            sub_goal: state.current_index,
            node: current.clone(),
            heading: run.heading,
            area_digest: area.digest(),
            decision: decided.ok(),
            outcome: StepOutcome::CompletedInPlace,
            step_count: 0,
            retry_count: 0,
        };

        let stop = match checked {
            Err(e) => {
                record.outcome = StepOutcome::Rejected { error: e.to_string() };
                if !e.is_retryable() {
                    Some(fatal(&e))
                } else if run.retry_count >= cfg.max_retries {
                    Some((Termination::RetryCapExceeded, e.to_string()))
                } else {
                    run.retry_count += 1;
                    None
                }
            }
            Ok((d, hops)) => {
                let moved = run.walk(&hops, cfg.max_steps);
                let reached = moved.len() == hops.len();
                if hops.is_empty() {
                    run.step_count += 1;
                } else {
                    record.outcome = StepOutcome::Moved { hops: moved };
                }
                if reached {
                    state.advance(d.status);
                    if d.status == DecisionStatus::Completed {
                        run.retry_count = 0;
                    }
                }
                None
            }
        };
        record.step_count = run.step_count;
        record.retry_count = run.retry_count;
        run.steps.push(record);
        if let Some(s) = stop {
            return Err(s);
        }
    }
}

fn panicked(instance: &Instance, payload: Box<dyn std::any::Any + Send>) -> EpisodeResult {
    let msg = payload
        .downcast_ref::<String>()
        .cloned()
        .or_else(|| payload.downcast_ref::<&str>().map(|s| s.to_string()))
        .unwrap_or_else(|| "episode panicked".into());
    EpisodeResult {
        instance_id: instance.id.clone(),
        trajectory: vec![instance.start().clone()],
        final_node: instance.start().clone(),
        termination: Termination::PolicyFailure,
        failure: Some(msg),
        step_count: 0,
        invocations: 0,
        sub_goals_completed: 0,
        sub_goals_total: 0,
        token_usage: TokenUsage::default(),
        steps: Vec::new(),
        duration: Duration::ZERO,
    }
}

/// Runs every instance on `parallelism` worker threads and hands results to
/// `sink` in input order as they become available.
pub fn run_batch_with(
    instances: &[Instance],
    policy: &dyn Policy,
    cfg: &EpisodeConfig,
    parallelism: usize,
    mut sink: impl FnMut(usize, EpisodeResult),
) {
    let workers = parallelism.clamp(1, instances.len().max(1));
    let next = AtomicUsize::new(0);
    let (tx, rx) = mpsc::channel::<(usize, EpisodeResult)>();
    std::thread::scope(|s| {
        for _ in 0..workers {
            let tx = tx.clone();
            let next = &next;
            s.spawn(move || loop {
                let i = next.fetch_add(1, Ordering::SeqCst);
                let Some(inst) = instances.get(i) else { break };
                let result = catch_unwind(AssertUnwindSafe(|| run_episode(inst, policy, cfg)))
                    .unwrap_or_else(|p| panicked(inst, p));
                if tx.send((i, result)).is_err() {
                    break;
                }
            });
        }
        drop(tx);

        let mut pending = BTreeMap::new();
        let mut emit = 0;
        for (i, r) in rx {
            pending.insert(i, r);
            while let Some(r) = pending.remove(&emit) {
                sink(emit, r);
                emit += 1;
            }
        }
    });
}

pub fn run_batch(
    instances: &[Instance],
    policy: &dyn Policy,
    cfg: &EpisodeConfig,
    parallelism: usize,
) -> Vec<EpisodeResult> {
    let mut out = Vec::with_capacity(instances.len());
    run_batch_with(instances, policy, cfg, parallelism, |_, r| out.push(r));
    out
}
