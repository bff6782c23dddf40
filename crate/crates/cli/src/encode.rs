use std::path::PathBuf;
use std::sync::Mutex;

use anyhow::{anyhow, bail, Context, Result};
use clap::Args;
use osmnav::episode::{EpisodeConfig, DEFAULT_UNITS};
use osmnav::instruction::DEFAULT_TAU;
use osmnav::policy::prompt::Template;
use osmnav::policy::{navigation_prompt, DecideContext, OraclePolicy};
use osmnav::RepresentationKind;
use osmnav::{load_instances, run_episode, Instance, Navigator, Policy, PolicyDecision, PolicyError, SubGoalPlan};

#[derive(Debug, Args)]
pub struct EncodeArgs {
    #[arg(long)]
    pub data: PathBuf,
    #[arg(long)]
    pub instance: String,
    /// 1-based decision step along the oracle trajectory.
    #[arg(long, default_value_t = 1)]
    pub step: usize,
    #[arg(long, default_value = "optimized-json")]
    pub kind: RepresentationKind,
    #[arg(long, default_value_t = DEFAULT_UNITS)]
    pub units: usize,
    #[arg(long, default_value_t = DEFAULT_TAU)]
    pub tau: f64,
    /// Print only the map representation, not the whole prompt.
    #[arg(long)]
    pub raw: bool,
    #[arg(long)]
    pub navigation_template: Option<PathBuf>,
}

/// Follows the oracle and keeps what the model would have been shown at
/// one step.
struct Capture {
    oracle: OraclePolicy,
    step: usize,
    raw: bool,
    template: Template,
    seen: Mutex<Option<Result<String, String>>>,
}

struct CaptureNav<'a> {
    inner: Box<dyn Navigator + 'a>,
    capture: &'a Capture,
    calls: usize,
}

impl Policy for Capture {
    fn name(&self) -> &str {
        "capture"
    }

    fn start<'a>(&'a self, instance: &'a Instance, seed: u64) -> Box<dyn Navigator + 'a> {
        Box::new(CaptureNav {
            inner: self.oracle.start(instance, seed),
            capture: self,
            calls: 0,
        })
    }
}

impl Navigator for CaptureNav<'_> {
    fn plan(&mut self, instance: &Instance) -> Result<SubGoalPlan, PolicyError> {
        // one sub-goal keeps the oracle's statuses truthful; stored landmarks
        // still get grounded and lettered
        let mut plan = self.inner.plan(instance)?;
        if let Some(stored) = &instance.plan {
            plan.landmarks = stored.landmarks.clone();
        }
        Ok(plan)
    }

    fn decide(&mut self, ctx: &DecideContext<'_>) -> Result<PolicyDecision, PolicyError> {
        self.calls += 1;
        if self.calls == self.capture.step {
            let text = if self.capture.raw {
                Ok(ctx.encoded.to_string())
            } else {
                navigation_prompt(&self.capture.template, ctx).map_err(|e| e.to_string())
            };
            *self.capture.seen.lock().expect("capture lock") = Some(text);
        }
        self.inner.decide(ctx)
    }
}

/// The text a policy sees at `args.step` when following the reference route.
pub fn render(args: &EncodeArgs) -> Result<String> {
    if args.step == 0 {
        bail!("--step is 1-based");
    }
    let instances = load_instances(&args.data).with_context(|| format!("loading {}", args.data.display()))?;
    let instance = instances
        .iter()
        .find(|i| i.id == args.instance)
        .ok_or_else(|| anyhow!("unknown instance {}", args.instance))?;
    let template = match &args.navigation_template {
        Some(p) => Template::load(p)?,
        None => Template::navigation(),
    };
    let capture = Capture {
        oracle: OraclePolicy,
        step: args.step,
        raw: args.raw,
        template,
        seen: Mutex::new(None),
    };
    let cfg = EpisodeConfig {
        units: args.units,
        kind: args.kind,
        tau: args.tau,
        ..EpisodeConfig::default()
    };
    let result = run_episode(instance, &capture, &cfg);
    match capture.seen.into_inner().expect("capture lock") {
        Some(Ok(text)) => Ok(text),
        Some(Err(e)) => bail!("rendering prompt: {e}"),
        None => match result.failure {
            Some(f) => bail!("episode stopped before step {}: {f}", args.step),
            None => bail!("instance {} has only {} steps", args.instance, result.invocations),
        },
    }
}

pub fn cmd_encode(args: EncodeArgs) -> Result<()> {
    let text = render(&args)?;
    print!("{text}");
    if !text.ends_with('\n') {
        println!();
    }
    Ok(())
}
