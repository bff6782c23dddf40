//! Decision policies: the oracle, three baselines and a chat-model navigator.
//!
//! A [`Policy`] is shared across concurrent episodes and hands out one
//! [`Navigator`] per episode; all per-episode state (RNG, cursors, call
//! counters) lives in the navigator.

mod baseline;
pub mod client;
mod llm;
mod oracle;
pub mod prompt;

use std::ops::AddAssign;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::dataset::Instance;
use crate::encode::RepresentationKind;
use crate::geo::{angular_diff, Heading};
use crate::graph::{MapGraph, NodeId};
use crate::instruction::{DecisionStatus, PlanningState, SubGoalPlan};
use crate::visibility::VisibleArea;

pub use baseline::{
    fit_action_distribution, ActionClass, ActionDistribution, ActionSamplingPolicy, Directive, DirectiveTable,
    FitError, HeuristicPolicy, RandomWalkPolicy, DEFAULT_STOP_PROBABILITY,
};
pub use llm::{navigation_prompt, parse_decision, LlmConfig, LlmPolicy};
pub use oracle::OraclePolicy;

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct PolicyDecision {
    pub status: DecisionStatus,
    pub next_node: NodeId,
}

impl PolicyDecision {
    pub fn new(status: DecisionStatus, next_node: impl Into<NodeId>) -> Self {
        PolicyDecision {
            status,
            next_node: next_node.into(),
        }
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct TokenUsage {
    pub prompt_tokens: u64,
    pub thoughts_tokens: u64,
    pub total_tokens: u64,
}

impl AddAssign for TokenUsage {
    fn add_assign(&mut self, rhs: Self) {
        self.prompt_tokens += rhs.prompt_tokens;
        self.thoughts_tokens += rhs.thoughts_tokens;
        self.total_tokens += rhs.total_tokens;
    }
}

#[derive(Debug, Error, Clone, PartialEq)]
pub enum PolicyError {
    #[error("decision names node {node}, which is not in the visible area")]
    InvalidNode { node: NodeId },
    #[error("malformed policy output ({reason}): {raw:?}")]
    Malformed { reason: String, raw: String },
    #[error("policy transport failure: {0}")]
    Transport(String),
}

impl PolicyError {
    /// Invalid and malformed decisions count against the retry budget;
    /// transport failures end the episode.
    pub fn is_retryable(&self) -> bool {
        !matches!(self, PolicyError::Transport(_))
    }
}

/// What a navigator sees at one step.
#[derive(Debug, Clone, Copy)]
pub struct DecideContext<'a> {
    pub instruction: &'a str,
    pub graph: &'a MapGraph,
    pub plan: &'a PlanningState,
    pub area: &'a VisibleArea,
    pub encoded: &'a str,
    pub kind: RepresentationKind,
    pub current: &'a NodeId,
    pub heading: Heading,
    /// Node visited before `current`, if any.
    pub previous: Option<&'a NodeId>,
}

pub trait Policy: Send + Sync {
    fn name(&self) -> &str;

    /// Fresh per-episode state; `seed` drives every random choice.
    fn start<'a>(&'a self, instance: &'a Instance, seed: u64) -> Box<dyn Navigator + 'a>;
}

pub trait Navigator {
    fn plan(&mut self, instance: &Instance) -> Result<SubGoalPlan, PolicyError>;

    fn decide(&mut self, ctx: &DecideContext<'_>) -> Result<PolicyDecision, PolicyError>;

    /// Tokens spent so far in this episode, including failed calls.
    fn usage(&self) -> TokenUsage {
        TokenUsage::default()
    }
}

/// Out-edges of `current`, dropping the edge back to `previous` unless it is
/// the only one.
pub(crate) fn onward_edges(g: &MapGraph, current: &NodeId, previous: Option<&NodeId>) -> Vec<(NodeId, Heading)> {
    let all = g.neighbors_with_headings(current.as_str()).unwrap_or_default();
    let onward: Vec<_> = all.iter().filter(|(id, _)| Some(id) != previous).cloned().collect();
    if onward.is_empty() {
        all
    } else {
        onward
    }
}

/// Edge closest in bearing to `target`; ties go to the smaller node id.
pub(crate) fn best_aligned(edges: &[(NodeId, Heading)], target: Heading) -> Option<NodeId> {
    edges
        .iter()
        .min_by(|a, b| {
            angular_diff(a.1, target)
                .total_cmp(&angular_diff(b.1, target))
                .then_with(|| a.0.cmp(&b.0))
        })
        .map(|(id, _)| id.clone())
}
