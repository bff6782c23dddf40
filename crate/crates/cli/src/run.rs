use std::collections::HashSet;
use std::fs::{self, File, OpenOptions};
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use clap::Args;
use osmnav::episode::run_batch_with;
use osmnav::metrics::FidelityColumns;
use osmnav::EpisodeResult;

use crate::config::{Columns, RunConfig};
use crate::records::{self, StepLine, TimingLine};

#[derive(Debug, Args)]
pub struct RunArgs {
    #[command(flatten)]
    pub config: RunConfig,
    /// Output directory.
    #[arg(long)]
    pub out: PathBuf,
    /// Worker threads.
    #[arg(long, default_value_t = default_jobs())]
    pub jobs: usize,
    /// Keep existing results and run only the missing instances.
    #[arg(long)]
    pub resume: bool,
    #[arg(long, value_enum, default_value = "both")]
    pub columns: Columns,
}

fn default_jobs() -> usize {
    std::thread::available_parallelism().map(|n| n.get()).unwrap_or(1)
}

fn append(path: &Path) -> Result<BufWriter<File>> {
    let f = OpenOptions::new()
        .create(true)
        .append(true)
        .open(path)
        .with_context(|| format!("opening {}", path.display()))?;
    Ok(BufWriter::new(f))
}

fn write_line(w: &mut impl Write, value: &impl serde::Serialize) -> Result<()> {
    serde_json::to_writer(&mut *w, value)?;
    w.write_all(b"\n")?;
    Ok(())
}

pub fn cmd_run(args: RunArgs) -> Result<()> {
    let cfg = args.config.absolutized()?;
    cfg.validate()?;
    let out = &args.out;
    fs::create_dir_all(out).with_context(|| format!("creating {}", out.display()))?;

    let config_path = out.join(records::CONFIG);
    let results_path = out.join(records::RESULTS);
    let done: Vec<EpisodeResult> = if args.resume {
        if config_path.exists() {
            let old: RunConfig = serde_json::from_str(&fs::read_to_string(&config_path)?)
                .with_context(|| format!("parsing {}", config_path.display()))?;
            if old != cfg {
                bail!(
                    "{} was written with different settings; refusing to resume",
                    config_path.display()
                );
            }
        }
        records::read_results_lenient(&results_path)?
    } else {
        if results_path.exists() {
            bail!(
                "{} exists; pass --resume or choose another --out",
                results_path.display()
            );
        }
        Vec::new()
    };
    // rewrite so a torn tail line from an interrupted run is gone
    if args.resume {
        let mut w = BufWriter::new(File::create(&results_path)?);
        for r in &done {
            write_line(&mut w, r)?;
        }
        w.flush()?;
    }
    fs::write(&config_path, serde_json::to_string_pretty(&cfg)? + "\n")?;

    let instances = cfg.load_instances()?;
    let finished: HashSet<&str> = done.iter().map(|r| r.instance_id.as_str()).collect();
    let todo: Vec<_> = instances
        .iter()
        .filter(|i| !finished.contains(i.id.as_str()))
        .cloned()
        .collect();
    tracing::info!(
        total = instances.len(),
        skipped = instances.len() - todo.len(),
        "starting run"
    );

    let policy = cfg.build_policy(&instances, out)?;
    let mut results_w = append(&results_path)?;
    let mut steps_w = append(&out.join(records::STEPS))?;
    let mut timings_w = append(&out.join(records::TIMINGS))?;
    let mut write_err: Option<anyhow::Error> = None;
    let mut failures = 0usize;
    run_batch_with(&todo, policy.as_ref(), &cfg.episode(), args.jobs, |_, result| {
        if write_err.is_some() {
            return;
        }
        if let Some(f) = &result.failure {
            failures += 1;
            tracing::warn!(instance = %result.instance_id, termination = ?result.termination, "{f}");
        }
        let res = (|| -> Result<()> {
            for step in &result.steps {
                write_line(
                    &mut steps_w,
                    &StepLine {
                        instance_id: &result.instance_id,
                        step,
                    },
                )?;
            }
            write_line(
                &mut timings_w,
                &TimingLine {
                    instance_id: result.instance_id.clone(),
                    millis: result.duration.as_millis(),
                },
            )?;
            let record = EpisodeResult {
                steps: Vec::new(),
                ..result
            };
            write_line(&mut results_w, &record)?;
            // flush per episode so an interrupted batch can resume
            steps_w.flush()?;
            timings_w.flush()?;
            results_w.flush()?;
            Ok(())
        })();
        if let Err(e) = res {
            write_err = Some(e);
        }
    });
    if let Some(e) = write_err {
        return Err(e.context("writing results"));
    }
    if failures > 0 {
        tracing::warn!("{failures} episodes ended with a failure");
    }

    let results = records::read_jsonl::<EpisodeResult>(&results_path)?;
    let text = write_summary(&cfg, &results, &instances, out, args.columns.into())?;
    print!("{text}");
    Ok(())
}

/// Scores, writes `summary.txt` and `summary.json`, and returns the table.
pub fn write_summary(
    cfg: &RunConfig,
    results: &[EpisodeResult],
    instances: &[osmnav::Instance],
    out: &Path,
    columns: FidelityColumns,
) -> Result<String> {
    let summary = summary_for(cfg, results, instances, columns)?;
    fs::write(out.join(records::SUMMARY_TXT), &summary.text)?;
    fs::write(
        out.join(records::SUMMARY_JSON),
        serde_json::to_string_pretty(&summary.report)? + "\n",
    )?;
    Ok(summary.text)
}

pub fn summary_for(
    cfg: &RunConfig,
    results: &[EpisodeResult],
    instances: &[osmnav::Instance],
    columns: FidelityColumns,
) -> Result<records::Summary> {
    let scored = records::score_results(results, instances, cfg.threshold)?;
    let sidecar = cfg.difficulty.as_deref().map(records::read_difficulty).transpose()?;
    let ids: Vec<&str> = scored.iter().map(|(id, _)| id.as_str()).collect();
    let tags = records::tags_for(&ids, instances, sidecar.as_ref());
    let label = match cfg.model.as_deref() {
        Some(m) => format!("{} ({m})", label_of(cfg)),
        None => label_of(cfg).to_string(),
    };
    records::summarize(&label, &scored, tags.as_deref(), columns)
}

fn label_of(cfg: &RunConfig) -> &'static str {
    use crate::config::PolicyKind::*;
    match cfg.policy {
        Oracle => "oracle",
        Random => "random walker",
        Heuristic => "heuristic",
        Sampling => "action sampling",
        Llm => "llm",
        Replay => "llm (replay)",
    }
}
