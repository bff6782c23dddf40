use super::{DecideContext, Navigator, Policy, PolicyDecision, PolicyError};
use crate::dataset::Instance;
use crate::instruction::{DecisionStatus, SubGoalPlan};

/// Follows the reference route one hop per decision and completes on the
/// goal node.
#[derive(Debug, Default, Clone, Copy)]
pub struct OraclePolicy;

struct OracleNavigator<'a> {
    instance: &'a Instance,
    cursor: usize,
}

impl Policy for OraclePolicy {
    fn name(&self) -> &str {
        "oracle"
    }

    fn start<'a>(&'a self, instance: &'a Instance, _seed: u64) -> Box<dyn Navigator + 'a> {
        Box::new(OracleNavigator { instance, cursor: 0 })
    }
}

impl Navigator for OracleNavigator<'_> {
    fn plan(&mut self, instance: &Instance) -> Result<SubGoalPlan, PolicyError> {
        Ok(SubGoalPlan::whole_instruction(&instance.instruction))
    }

    fn decide(&mut self, ctx: &DecideContext<'_>) -> Result<PolicyDecision, PolicyError> {
        let route = &self.instance.route;
        // routes may revisit a node, so track position rather than search
        if route.get(self.cursor) != Some(ctx.current) {
            self.cursor = route
                .iter()
                .position(|n| n == ctx.current)
                .ok_or_else(|| PolicyError::InvalidNode {
                    node: ctx.current.clone(),
                })?;
        }
        let last = route.len() - 1;
        if self.cursor >= last {
            return Ok(PolicyDecision::new(DecisionStatus::Completed, ctx.current.clone()));
        }
        self.cursor += 1;
        let status = if self.cursor == last {
            DecisionStatus::Completed
        } else {
            DecisionStatus::InProgress
        };
        Ok(PolicyDecision::new(status, route[self.cursor].clone()))
    }
}
