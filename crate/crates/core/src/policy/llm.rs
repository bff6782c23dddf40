use serde_json::Value;

use super::client::{CallTag, ChatClient, ChatMessage, ChatRequest};
use super::prompt::{Template, TemplateError};
use super::{DecideContext, Navigator, Policy, PolicyDecision, PolicyError, TokenUsage};
use crate::dataset::Instance;
use crate::graph::NodeId;
use crate::instruction::{extract_json_object, parse_plan, DecisionStatus, SubGoalPlan};

#[derive(Debug, Clone)]
pub struct LlmConfig {
    pub model: String,
    pub temperature: f64,
    pub reasoning_effort: Option<String>,
    pub extraction: Template,
    pub navigation: Template,
    /// Use an instance's stored plan instead of asking the model for one.
    pub use_stored_plans: bool,
}

impl LlmConfig {
    pub fn new(model: impl Into<String>) -> Self {
        LlmConfig {
            model: model.into(),
            temperature: 1.0,
            reasoning_effort: None,
            extraction: Template::extraction(),
            navigation: Template::navigation(),
            use_stored_plans: true,
        }
    }
}

/// Plans and decides by prompting a chat model.
pub struct LlmPolicy {
    client: Box<dyn ChatClient>,
    cfg: LlmConfig,
}

impl LlmPolicy {
    pub fn new(client: Box<dyn ChatClient>, cfg: LlmConfig) -> Self {
        LlmPolicy { client, cfg }
    }

    pub fn config(&self) -> &LlmConfig {
        &self.cfg
    }
}

struct LlmNavigator<'a> {
    policy: &'a LlmPolicy,
    instance_id: &'a str,
    seq: u64,
    usage: TokenUsage,
}

impl Policy for LlmPolicy {
    fn name(&self) -> &str {
        "llm"
    }

    fn start<'a>(&'a self, instance: &'a Instance, _seed: u64) -> Box<dyn Navigator + 'a> {
        Box::new(LlmNavigator {
            policy: self,
            instance_id: &instance.id,
            seq: 0,
            usage: TokenUsage::default(),
        })
    }
}

fn malformed(reason: impl Into<String>, raw: &str) -> PolicyError {
    PolicyError::Malformed {
        reason: reason.into(),
        raw: raw.to_string(),
    }
}

impl LlmNavigator<'_> {
    fn call(&mut self, prompt: String) -> Result<String, PolicyError> {
        let cfg = &self.policy.cfg;
        let req = ChatRequest {
            model: cfg.model.clone(),
            messages: vec![ChatMessage::user(prompt)],
            temperature: cfg.temperature,
            reasoning_effort: cfg.reasoning_effort.clone(),
        };
        let tag = CallTag {
            instance_id: self.instance_id.to_string(),
            seq: self.seq,
        };
        self.seq += 1;
        let resp = self
            .policy
            .client
            .complete(&tag, &req)
            .map_err(|e| PolicyError::Transport(e.to_string()))?;
        self.usage += resp.usage;
        Ok(resp.content)
    }
}

impl Navigator for LlmNavigator<'_> {
    fn plan(&mut self, instance: &Instance) -> Result<SubGoalPlan, PolicyError> {
        if self.policy.cfg.use_stored_plans {
            if let Some(plan) = &instance.plan {
                return Ok(plan.clone());
            }
        }
        let prompt = self
            .policy
            .cfg
            .extraction
            .render(&[("instruction", &instance.instruction)])
            .map_err(|e| PolicyError::Transport(e.to_string()))?;
        let raw = self.call(prompt)?;
        parse_plan(&raw).map_err(|e| malformed(e.to_string(), &raw))
    }

    fn decide(&mut self, ctx: &DecideContext<'_>) -> Result<PolicyDecision, PolicyError> {
        let prompt =
            navigation_prompt(&self.policy.cfg.navigation, ctx).map_err(|e| PolicyError::Transport(e.to_string()))?;
        let raw = self.call(prompt)?;
        let decision = parse_decision(&raw)?;
        if !ctx.area.contains(&decision.next_node) {
            return Err(PolicyError::InvalidNode {
                node: decision.next_node,
            });
        }
        Ok(decision)
    }

    fn usage(&self) -> TokenUsage {
        self.usage
    }
}

/// The decision prompt for one step.
pub fn navigation_prompt(navigation: &Template, ctx: &DecideContext<'_>) -> Result<String, TemplateError> {
    let plan = ctx.plan;
    let (goal, state) = match plan.current() {
        Some(g) => (
            g.description.as_str(),
            format!("{}, Iteration {}", g.status, g.iteration),
        ),
        None => ("(all sub-goals completed)", "COMPLETED".to_string()),
    };
    let landmarks = if plan.landmarks.is_empty() {
        "none".to_string()
    } else {
        plan.landmarks
            .iter()
            .map(|l| match l.letter() {
                Some(c) => format!("{c}: {}", l.landmark.name),
                None => l.landmark.name.clone(),
            })
            .collect::<Vec<_>>()
            .join(", ")
    };
    let planning_state = plan.render(true);
    navigation.render(&[
        ("representation", ctx.kind.as_str()),
        ("instruction", ctx.instruction),
        ("current_sub_goal", goal),
        ("sub_goal_state", &state),
        ("landmarks", &landmarks),
        ("navigation_context", ctx.encoded),
        ("planning_state", planning_state.trim_end()),
    ])
}

fn field<'v>(obj: &'v serde_json::Map<String, Value>, names: &[&str]) -> Option<&'v Value> {
    let norm = |s: &str| s.to_ascii_lowercase().replace(['_', ' ', '-'], "");
    obj.iter()
        .find(|(k, _)| names.iter().any(|n| norm(k) == norm(n)))
        .map(|(_, v)| v)
}

fn node_id(v: &Value) -> Option<String> {
    match v {
        Value::String(s) if !s.trim().is_empty() => Some(s.trim().to_string()),
        Value::Number(n) => Some(n.to_string()),
        Value::Object(o) => field(o, &["Target_Node_ID", "node_id", "id"]).and_then(node_id),
        _ => None,
    }
}

/// Reads `SubPlan_Status` and `Next_Place` from a model reply, tolerating
/// code fences and text around the JSON object.
pub fn parse_decision(raw: &str) -> Result<PolicyDecision, PolicyError> {
    let body = extract_json_object(raw).ok_or_else(|| malformed("no JSON object", raw))?;
    let value: Value = serde_json::from_str(body).map_err(|e| malformed(format!("invalid JSON: {e}"), raw))?;
    let obj = value.as_object().ok_or_else(|| malformed("not a JSON object", raw))?;
    let status = field(obj, &["SubPlan_Status", "status"])
        .and_then(Value::as_str)
        .ok_or_else(|| malformed("missing SubPlan_Status", raw))?;
    let status = DecisionStatus::parse(status).ok_or_else(|| malformed(format!("unknown status {status:?}"), raw))?;
    let next = field(obj, &["Next_Place", "Target_Node_ID", "next_node"])
        .and_then(node_id)
        .ok_or_else(|| malformed("missing Next_Place", raw))?;
    Ok(PolicyDecision {
        status,
        next_node: NodeId::new(next),
    })
}

#[cfg(test)]
mod tests {
    use super::super::client::ScriptedClient;
    use super::super::testutil::{instance, lattice};
    use super::*;
    use crate::encode::RepresentationKind;
    use crate::geo::Heading;
    use crate::instruction::PlanningState;
    use crate::visibility::construct_visible_area;

    #[test]
    fn decision_parsing() {
        let d = parse_decision("```json\n{\"SubPlan_Status\": \"COMPLETED\", \"Next_Place\": \"4242\"}\n```").unwrap();
        assert_eq!(d, PolicyDecision::new(DecisionStatus::Completed, "4242"));
        let d =
            parse_decision(r#"Sure. {"subplan_status": "in progress", "next_place": {"Target_Node_ID": 17}}"#).unwrap();
        assert_eq!(d, PolicyDecision::new(DecisionStatus::InProgress, "17"));
        for bad in [
            "no json",
            r#"{"Next_Place": "a"}"#,
            r#"{"SubPlan_Status": "DONE", "Next_Place": "a"}"#,
            r#"{"SubPlan_Status": "COMPLETED"}"#,
        ] {
            assert!(
                matches!(parse_decision(bad), Err(PolicyError::Malformed { .. })),
                "{bad}"
            );
        }
    }

    fn decide_with(reply: &str) -> (Result<PolicyDecision, PolicyError>, TokenUsage, String) {
        let inst = instance(lattice(3), "turn left at the corner", &["r2c1", "r1c1", "r1c0"]);
        let seen = std::sync::Arc::new(std::sync::Mutex::new(String::new()));
        let s = seen.clone();
        let reply = reply.to_string();
        let client = ScriptedClient::from_fn(move |_, req| {
            *s.lock().unwrap() = req.messages[0].content.clone();
            Ok(super::super::client::ChatResponse::estimated(req, reply.clone()))
        });
        let policy = LlmPolicy::new(Box::new(client), LlmConfig::new("test-model"));
        let mut nav = policy.start(&inst, 0);
        let plan = PlanningState::new(SubGoalPlan::whole_instruction(&inst.instruction), vec![]);
        let current = NodeId::new("r2c1");
        let heading = Heading::new(0.0).unwrap();
        let area = construct_visible_area(&inst.graph, &current, heading, 1).unwrap();
        let ctx = DecideContext {
            instruction: &inst.instruction,
            graph: &inst.graph,
            plan: &plan,
            area: &area,
            encoded: "<context>",
            kind: RepresentationKind::Textual,
            current: &current,
            heading,
            previous: None,
        };
        let out = nav.decide(&ctx);
        let prompt = seen.lock().unwrap().clone();
        (out, nav.usage(), prompt)
    }

    #[test]
    fn valid_reply_is_returned_with_usage() {
        let (d, usage, prompt) = decide_with(r#"{"SubPlan_Status": "IN_PROGRESS", "Next_Place": "r1c1"}"#);
        assert_eq!(d.unwrap(), PolicyDecision::new(DecisionStatus::InProgress, "r1c1"));
        assert!(usage.total_tokens > usage.prompt_tokens && usage.prompt_tokens > 0);
        assert!(prompt.contains("Current Sub-Goal: turn left at the corner"));
        assert!(prompt.contains("Sub-Goal State: IN_PROGRESS, Iteration 1"));
        assert!(prompt.contains("<context>"));
        assert!(prompt.contains("1. turn left at the corner (IN_PROGRESS, Iteration 1)"));
    }

    #[test]
    fn unknown_node_is_invalid() {
        let (d, _, _) = decide_with(r#"{"SubPlan_Status": "IN_PROGRESS", "Next_Place": "nowhere"}"#);
        assert_eq!(
            d,
            Err(PolicyError::InvalidNode {
                node: NodeId::new("nowhere")
            })
        );
    }

    #[test]
    fn extraction_call_builds_a_plan() {
        let inst = instance(
            lattice(3),
            "Go straight, then turn left at the bank.",
            &["r2c1", "r1c1"],
        );
        let reply = r#"{"landmarks": ["bank"], "sub_goals": [
            {"description": "Go straight", "action": "MOVE_FORWARD"},
            {"description": "turn left at the bank", "action": "TURN_LEFT"}]}"#;
        let client = ScriptedClient::sequence(vec![Ok(reply.into())]);
        let policy = LlmPolicy::new(Box::new(client), LlmConfig::new("m"));
        let plan = policy.start(&inst, 0).plan(&inst).unwrap();
        assert_eq!(plan.sub_goals.len(), 2);
        assert_eq!(plan.landmarks[0].name, "bank");
    }
}
