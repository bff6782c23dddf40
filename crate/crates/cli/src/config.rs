use std::fs::{File, OpenOptions};
use std::io::BufReader;
use std::path::{Path, PathBuf};
use std::time::Duration;

use anyhow::{bail, Context, Result};
use clap::{Args, ValueEnum};
use osmnav::episode::{EpisodeConfig, DEFAULT_MAX_RETRIES, DEFAULT_MAX_STEPS, DEFAULT_UNITS};
use osmnav::instruction::DEFAULT_TAU;
use osmnav::metrics::{FidelityColumns, DEFAULT_THRESHOLD_M};
use osmnav::policy::client::{HttpClient, RateLimiter, RecordingClient, ReplayClient, RetryConfig, ThrottledClient};
use osmnav::policy::prompt::Template;
use osmnav::policy::{
    fit_action_distribution, ActionSamplingPolicy, HeuristicPolicy, LlmConfig, LlmPolicy, OraclePolicy,
    RandomWalkPolicy, DEFAULT_STOP_PROBABILITY,
};
use osmnav::{load_instances, Instance, Policy, RepresentationKind};
use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum PolicyKind {
    Oracle,
    Random,
    Heuristic,
    Sampling,
    Llm,
    Replay,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum Columns {
    Sdtw,
    Ndtw,
    Both,
}

impl From<Columns> for FidelityColumns {
    fn from(c: Columns) -> Self {
        match c {
            Columns::Sdtw => FidelityColumns::Sdtw,
            Columns::Ndtw => FidelityColumns::Ndtw,
            Columns::Both => FidelityColumns::Both,
        }
    }
}

/// Everything that determines a run's results. Written to `config.json`
/// next to the results.
#[derive(Debug, Clone, PartialEq, Args, Serialize, Deserialize)]
pub struct RunConfig {
    /// Dataset file (JSON document or JSON lines).
    #[arg(long)]
    pub data: PathBuf,
    #[arg(long, value_enum)]
    pub policy: PolicyKind,
    /// textual, structured-json, optimized-json, graphviz or grid.
    #[arg(long, default_value = "optimized-json")]
    pub kind: RepresentationKind,
    /// Intersections ahead in the forward view.
    #[arg(long, default_value_t = DEFAULT_UNITS)]
    pub units: usize,
    #[arg(long, default_value_t = DEFAULT_MAX_STEPS)]
    pub max_steps: usize,
    #[arg(long, default_value_t = DEFAULT_MAX_RETRIES)]
    pub max_retries: usize,
    /// Landmark grounding threshold, 0-100.
    #[arg(long, default_value_t = DEFAULT_TAU)]
    pub tau: f64,
    /// Success radius in meters.
    #[arg(long, default_value_t = DEFAULT_THRESHOLD_M)]
    pub threshold: f64,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// Only the first N instances.
    #[arg(long)]
    pub limit: Option<usize>,
    /// Difficulty tags: JSON object or JSON lines of {instance_id, difficulty}.
    #[arg(long)]
    pub difficulty: Option<PathBuf>,

    /// Random walker stop probability at intersections.
    #[arg(long, default_value_t = DEFAULT_STOP_PROBABILITY)]
    pub stop_probability: f64,
    /// Corpus the sampling baseline is fitted on; defaults to --data.
    #[arg(long)]
    pub fit_data: Option<PathBuf>,

    /// Chat completions URL (llm).
    #[arg(long)]
    pub endpoint: Option<String>,
    /// Model name (llm, replay).
    #[arg(long)]
    pub model: Option<String>,
    /// Environment variable holding the API key.
    #[arg(long, default_value = "OPENAI_API_KEY")]
    pub api_key_env: String,
    #[arg(long, default_value_t = 1.0)]
    pub temperature: f64,
    #[arg(long)]
    pub reasoning_effort: Option<String>,
    /// Requests per second across all workers.
    #[arg(long)]
    pub rate: Option<f64>,
    #[arg(long, default_value_t = 4)]
    pub burst: u32,
    #[arg(long, default_value_t = 8)]
    pub max_inflight: usize,
    #[arg(long, default_value_t = 120)]
    pub timeout_secs: u64,
    #[arg(long)]
    pub extraction_template: Option<PathBuf>,
    #[arg(long)]
    pub navigation_template: Option<PathBuf>,
    /// Ask the model for plans even when the dataset stores them.
    #[arg(long)]
    pub extract_plans: bool,
    /// Recorded transcript to answer from (replay).
    #[arg(long)]
    pub transcript: Option<PathBuf>,
}

impl RunConfig {
    pub fn episode(&self) -> EpisodeConfig {
        EpisodeConfig {
            units: self.units,
            kind: self.kind,
            max_steps: self.max_steps,
            max_retries: self.max_retries,
            tau: self.tau,
            seed: self.seed,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.units == 0 || self.max_steps == 0 || self.max_retries == 0 {
            bail!("--units, --max-steps and --max-retries must be positive");
        }
        if self.threshold.is_nan() || self.threshold <= 0.0 {
            bail!("--threshold must be positive");
        }
        if !(0.0..=100.0).contains(&self.tau) {
            bail!("--tau must be within 0-100");
        }
        if !(0.0..=1.0).contains(&self.stop_probability) {
            bail!("--stop-probability must be within 0-1");
        }
        let llm_only = [
            ("--endpoint", self.endpoint.is_some()),
            ("--reasoning-effort", self.reasoning_effort.is_some()),
            ("--rate", self.rate.is_some()),
            ("--extraction-template", self.extraction_template.is_some()),
            ("--navigation-template", self.navigation_template.is_some()),
            ("--extract-plans", self.extract_plans),
        ];
        match self.policy {
            PolicyKind::Llm => {
                if self.endpoint.is_none() || self.model.is_none() {
                    bail!("--policy llm needs --endpoint and --model");
                }
                if self.transcript.is_some() {
                    bail!("--transcript is only read by --policy replay");
                }
            }
            PolicyKind::Replay => {
                if self.transcript.is_none() || self.model.is_none() {
                    bail!("--policy replay needs --transcript and --model");
                }
                if self.endpoint.is_some() {
                    bail!("--policy replay makes no network calls; drop --endpoint");
                }
            }
            _ => {
                if let Some((flag, _)) = llm_only.iter().find(|(_, set)| *set) {
                    bail!("{flag} only applies to --policy llm");
                }
                if self.model.is_some() || self.transcript.is_some() {
                    bail!("--model and --transcript only apply to --policy llm or replay");
                }
            }
        }
        if self.fit_data.is_some() && self.policy != PolicyKind::Sampling {
            bail!("--fit-data only applies to --policy sampling");
        }
        Ok(())
    }

    /// Paths made absolute so the snapshot works from any directory.
    pub fn absolutized(mut self) -> Result<Self> {
        fn abs(p: &mut PathBuf) -> Result<()> {
            *p = std::path::absolute(&*p).with_context(|| format!("resolving {}", p.display()))?;
            Ok(())
        }
        abs(&mut self.data)?;
        for p in [
            &mut self.difficulty,
            &mut self.fit_data,
            &mut self.extraction_template,
            &mut self.navigation_template,
            &mut self.transcript,
        ]
        .into_iter()
        .flatten()
        {
            abs(p)?;
        }
        Ok(self)
    }

    pub fn load_instances(&self) -> Result<Vec<Instance>> {
        let mut instances =
            load_instances(&self.data).with_context(|| format!("loading dataset {}", self.data.display()))?;
        if let Some(n) = self.limit {
            instances.truncate(n);
        }
        Ok(instances)
    }

    fn llm_config(&self) -> Result<LlmConfig> {
        let mut cfg = LlmConfig::new(self.model.clone().unwrap_or_default());
        cfg.temperature = self.temperature;
        cfg.reasoning_effort = self.reasoning_effort.clone();
        cfg.use_stored_plans = !self.extract_plans;
        if let Some(p) = &self.extraction_template {
            cfg.extraction = Template::load(p)?;
        }
        if let Some(p) = &self.navigation_template {
            cfg.navigation = Template::load(p)?;
        }
        Ok(cfg)
    }

    /// `out_dir` receives the transcript of live model calls.
    pub fn build_policy(&self, instances: &[Instance], out_dir: &Path) -> Result<Box<dyn Policy>> {
        Ok(match self.policy {
            PolicyKind::Oracle => Box::new(OraclePolicy),
            PolicyKind::Random => Box::new(RandomWalkPolicy {
                stop_probability: self.stop_probability,
            }),
            PolicyKind::Heuristic => Box::new(HeuristicPolicy::default()),
            PolicyKind::Sampling => {
                let table = match &self.fit_data {
                    Some(p) => fit_action_distribution(
                        &load_instances(p).with_context(|| format!("loading fit corpus {}", p.display()))?,
                    ),
                    None => fit_action_distribution(instances),
                }?;
                Box::new(ActionSamplingPolicy { table })
            }
            PolicyKind::Llm => {
                let url = self.endpoint.clone().unwrap_or_default();
                let http = HttpClient::from_env(url, &self.api_key_env, Duration::from_secs(self.timeout_secs))?;
                let limiter = self.rate.map(|r| RateLimiter::new(r, self.burst));
                let throttled = ThrottledClient::new(http, RetryConfig::default(), limiter, self.max_inflight);
                let path = out_dir.join("transcript.jsonl");
                let file = OpenOptions::new()
                    .create(true)
                    .append(true)
                    .open(&path)
                    .with_context(|| format!("opening {}", path.display()))?;
                let recording = RecordingClient::new(throttled, Box::new(file));
                Box::new(LlmPolicy::new(Box::new(recording), self.llm_config()?))
            }
            PolicyKind::Replay => {
                let path = self.transcript.as_ref().expect("validated");
                let file = File::open(path).with_context(|| format!("opening transcript {}", path.display()))?;
                let replay = ReplayClient::from_reader(BufReader::new(file))?;
                Box::new(LlmPolicy::new(Box::new(replay), self.llm_config()?))
            }
        })
    }
}
