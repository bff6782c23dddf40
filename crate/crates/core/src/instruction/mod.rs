//! Sub-goal plans, landmark extraction output and landmark grounding.
//!
//! The plan itself is produced by whatever policy performs extraction; this
//! module only parses the extraction response, tracks sub-goal lifecycles
//! during an episode and grounds landmark names onto map POIs.

mod fuzzy;
mod grounding;

use std::fmt;

use serde::{Deserialize, Serialize};
use thiserror::Error;

pub use fuzzy::{normalize, partial_ratio};
pub use grounding::{assign_landmark_letters, ground_landmarks, order_by_appearance, GroundedLandmark, DEFAULT_TAU};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum PlanError {
    #[error("similarity input is empty after normalization")]
    EmptySimilarityInput,
    #[error("at most 26 landmarks can be lettered, got {0}")]
    TooManyLandmarks(usize),
    #[error("malformed extraction response: {reason}")]
    Malformed { reason: String, raw: String },
    #[error("unknown action verb {verb:?}")]
    UnknownAction { verb: String, raw: String },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "SCREAMING_SNAKE_CASE")]
pub enum Action {
    MoveForward,
    TurnLeft,
    TurnRight,
}

impl Action {
    pub fn parse(verb: &str) -> Option<Action> {
        match verb.trim().to_ascii_uppercase().replace([' ', '-'], "_").as_str() {
            "MOVE_FORWARD" => Some(Action::MoveForward),
            "TURN_LEFT" => Some(Action::TurnLeft),
            "TURN_RIGHT" => Some(Action::TurnRight),
            _ => None,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "SCREAMING_SNAKE_CASE")]
pub enum GoalStatus {
    Todo,
    InProgress,
    Completed,
}

impl GoalStatus {
    pub fn as_str(self) -> &'static str {
        match self {
            GoalStatus::Todo => "TODO",
            GoalStatus::InProgress => "IN_PROGRESS",
            GoalStatus::Completed => "COMPLETED",
        }
    }
}

impl fmt::Display for GoalStatus {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SubGoal {
    /// 1-based.
    pub index: usize,
    pub description: String,
    pub action: Action,
    pub status: GoalStatus,
    /// Decisions spent on this goal while in progress; 0 before it starts.
    pub iteration: u32,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Landmark {
    pub name: String,
    #[serde(default)]
    pub category: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub letter: Option<char>,
}

impl Landmark {
    pub fn new(name: impl Into<String>, category: impl Into<String>) -> Self {
        Landmark {
            name: name.into(),
            category: category.into(),
            letter: None,
        }
    }
}

/// Ordered sub-goals plus the landmarks mentioned by the instruction.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SubGoalPlan {
    pub sub_goals: Vec<SubGoal>,
    pub landmarks: Vec<Landmark>,
}

impl SubGoalPlan {
    /// A one-goal plan covering the whole instruction, used by policies that
    /// do not decompose.
    pub fn whole_instruction(instruction: &str) -> Self {
        SubGoalPlan {
            sub_goals: vec![SubGoal {
                index: 1,
                description: instruction.trim().to_owned(),
                action: Action::MoveForward,
                status: GoalStatus::InProgress,
                iteration: 1,
            }],
            landmarks: Vec::new(),
        }
    }
}

#[derive(Deserialize)]
struct RawPlan {
    sub_goals: Option<Vec<RawSubGoal>>,
    #[serde(default)]
    landmarks: Vec<RawLandmark>,
}

#[derive(Deserialize)]
struct RawSubGoal {
    #[serde(alias = "instruction", alias = "sub_goal", alias = "text")]
    description: String,
    action: String,
}

#[derive(Deserialize)]
#[serde(untagged)]
enum RawLandmark {
    Named {
        name: String,
        #[serde(default, alias = "type")]
        category: String,
    },
    Bare(String),
}

/// Pulls the JSON object out of a model response, tolerating code fences and
/// surrounding chatter.
pub(crate) fn extract_json_object(text: &str) -> Option<&str> {
    let start = text.find('{')?;
    let end = text.rfind('}')?;
    (end > start).then(|| &text[start..=end])
}

/// Parses an extraction response into a plan whose first goal is in progress.
pub fn parse_plan(response: &str) -> Result<SubGoalPlan, PlanError> {
    let malformed = |reason: String| PlanError::Malformed {
        reason,
        raw: response.to_owned(),
    };
    let body = extract_json_object(response).ok_or_else(|| malformed("no JSON object found".into()))?;
    let raw: RawPlan = serde_json::from_str(body).map_err(|e| malformed(e.to_string()))?;
    let goals = raw
        .sub_goals
        .ok_or_else(|| malformed("missing field `sub_goals`".into()))?;
    if goals.is_empty() {
        return Err(malformed("`sub_goals` is empty".into()));
    }

    let mut sub_goals = Vec::with_capacity(goals.len());
    for (i, g) in goals.into_iter().enumerate() {
        let action = Action::parse(&g.action).ok_or_else(|| PlanError::UnknownAction {
            verb: g.action.clone(),
            raw: response.to_owned(),
        })?;
        let first = i == 0;
        sub_goals.push(SubGoal {
            index: i + 1,
            description: g.description,
            action,
            status: if first {
                GoalStatus::InProgress
            } else {
                GoalStatus::Todo
            },
            iteration: u32::from(first),
        });
    }

    let mut landmarks = Vec::with_capacity(raw.landmarks.len());
    for l in raw.landmarks {
        let (name, category) = match l {
            RawLandmark::Named { name, category } => (name, category),
            RawLandmark::Bare(name) => (name, String::new()),
        };
        if name.trim().is_empty() {
            return Err(malformed("landmark with empty name".into()));
        }
        landmarks.push(Landmark::new(name, category));
    }
    Ok(SubGoalPlan { sub_goals, landmarks })
}

/// Episode-local view of plan progress.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PlanningState {
    pub sub_goals: Vec<SubGoal>,
    pub landmarks: Vec<GroundedLandmark>,
    /// 1-based; `len + 1` once every goal is complete.
    pub current_index: usize,
}

impl PlanningState {
    pub fn new(plan: SubGoalPlan, landmarks: Vec<GroundedLandmark>) -> Self {
        let mut sub_goals = plan.sub_goals;
        for (i, g) in sub_goals.iter_mut().enumerate() {
            g.index = i + 1;
            g.status = if i == 0 {
                GoalStatus::InProgress
            } else {
                GoalStatus::Todo
            };
            g.iteration = u32::from(i == 0);
        }
        PlanningState {
            sub_goals,
            landmarks,
            current_index: 1,
        }
    }

    pub fn is_finished(&self) -> bool {
        self.current_index > self.sub_goals.len()
    }

    pub fn current(&self) -> Option<&SubGoal> {
        self.sub_goals.get(self.current_index.wrapping_sub(1))
    }

    /// Applies a decision status: completion hands over to the next goal,
    /// otherwise the current goal's iteration count grows.
    pub fn advance(&mut self, status: DecisionStatus) {
        let Some(i) = self.current_index.checked_sub(1).filter(|&i| i < self.sub_goals.len()) else {
            return;
        };
        match status {
            DecisionStatus::Completed => {
                self.sub_goals[i].status = GoalStatus::Completed;
                self.current_index += 1;
                if let Some(next) = self.sub_goals.get_mut(i + 1) {
                    next.status = GoalStatus::InProgress;
                    next.iteration = 1;
                }
            }
            DecisionStatus::InProgress => self.sub_goals[i].iteration += 1,
        }
    }

    pub fn in_progress_count(&self) -> usize {
        self.sub_goals
            .iter()
            .filter(|g| g.status == GoalStatus::InProgress)
            .count()
    }

    /// Numbered goal list; the active goal optionally carries its iteration.
    pub fn render(&self, with_iteration: bool) -> String {
        let mut out = String::new();
        for g in &self.sub_goals {
            let status = if with_iteration && g.status == GoalStatus::InProgress {
                format!("{}, Iteration {}", g.status, g.iteration)
            } else {
                g.status.to_string()
            };
            out.push_str(&format!("{}. {} ({})\n", g.index, g.description, status));
        }
        out
    }
}

/// Status half of a policy decision.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "SCREAMING_SNAKE_CASE")]
pub enum DecisionStatus {
    InProgress,
    Completed,
}

impl DecisionStatus {
    pub fn parse(s: &str) -> Option<DecisionStatus> {
        match s.trim().to_ascii_uppercase().replace([' ', '-'], "_").as_str() {
            "IN_PROGRESS" => Some(DecisionStatus::InProgress),
            "COMPLETED" | "COMPLETE" => Some(DecisionStatus::Completed),
            _ => None,
        }
    }
}
