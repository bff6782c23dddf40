use std::collections::HashMap;
use std::fmt::Write as _;
use std::fs;
use std::path::PathBuf;

use anyhow::{bail, Context, Result};
use clap::Args;
use osmnav::metrics::{correlate, correlate_permutation, AggregateReport, Correlation};
use osmnav::{EpisodeResult, TrajectoryScore};
use serde::Serialize;

use crate::config::{Columns, RunConfig};
use crate::records;
use crate::run::summary_for;

#[derive(Debug, Args)]
pub struct ScoreArgs {
    /// Run directory holding results.jsonl and config.json.
    #[arg(long)]
    pub run: PathBuf,
    /// Human ratings: JSON lines or CSV of instance_id, rating.
    #[arg(long)]
    pub ratings: Option<PathBuf>,
    /// Difficulty sidecar; overrides the one recorded with the run.
    #[arg(long)]
    pub difficulty: Option<PathBuf>,
    /// Dataset path; overrides the one recorded with the run.
    #[arg(long)]
    pub data: Option<PathBuf>,
    #[arg(long, value_enum, default_value = "both")]
    pub columns: Columns,
    /// p-values from this many label permutations instead of the t test.
    #[arg(long)]
    pub permutations: Option<usize>,
    /// Also write the report as JSON here.
    #[arg(long)]
    pub json: Option<PathBuf>,
}

#[derive(Debug, Serialize)]
pub struct CorrelationRow {
    pub metric: &'static str,
    #[serde(flatten)]
    pub stats: Option<Correlation>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub note: Option<String>,
}

#[derive(Debug, Serialize)]
struct ScoreReport {
    summary: AggregateReport,
    #[serde(skip_serializing_if = "Option::is_none")]
    correlation: Option<Vec<CorrelationRow>>,
}

type MetricFn = fn(&TrajectoryScore) -> f64;

const METRICS: [(&str, MetricFn); 5] = [
    ("NE", |s| s.ne),
    ("SR", |s| f64::from(s.sr)),
    ("OSR", |s| f64::from(s.osr)),
    ("nDTW", |s| s.ndtw),
    ("SDTW", |s| s.sdtw),
];

pub fn correlation_rows(
    scored: &[(String, TrajectoryScore)],
    ratings: &[records::Rating],
    permutations: Option<usize>,
) -> Result<Vec<CorrelationRow>> {
    let by_id: HashMap<&str, &TrajectoryScore> = scored.iter().map(|(id, s)| (id.as_str(), s)).collect();
    let mut seen = HashMap::new();
    for r in ratings {
        if !by_id.contains_key(r.instance_id.as_str()) {
            bail!("rating for instance {} has no matching result", r.instance_id);
        }
        if seen.insert(r.instance_id.as_str(), ()).is_some() {
            bail!("instance {} is rated twice", r.instance_id);
        }
    }
    let y: Vec<f64> = ratings.iter().map(|r| r.rating).collect();
    Ok(METRICS
        .iter()
        .map(|(name, f)| {
            let x: Vec<f64> = ratings.iter().map(|r| f(by_id[r.instance_id.as_str()])).collect();
            let stats = match permutations {
                Some(p) => correlate_permutation(&x, &y, p, 0),
                None => correlate(&x, &y),
            };
            match stats {
                Ok(c) => CorrelationRow {
                    metric: name,
                    stats: Some(c),
                    note: None,
                },
                Err(e) => CorrelationRow {
                    metric: name,
                    stats: None,
                    note: Some(e.to_string()),
                },
            }
        })
        .collect())
}

pub fn render_correlation(rows: &[CorrelationRow]) -> String {
    let mut out = format!(
        "{:<8} {:>5} {:>9} {:>10} {:>9} {:>10}\n",
        "metric", "n", "pearson", "p", "spearman", "p"
    );
    for row in rows {
        match &row.stats {
            Some(c) => {
                let _ = writeln!(
                    out,
                    "{:<8} {:>5} {:>9.3} {:>10.2e} {:>9.3} {:>10.2e}",
                    row.metric, c.n, c.pearson_r, c.pearson_p, c.spearman_rho, c.spearman_p
                );
            }
            None => {
                let _ = writeln!(out, "{:<8} n/a ({})", row.metric, row.note.as_deref().unwrap_or(""));
            }
        }
    }
    out
}

pub fn cmd_score(args: ScoreArgs) -> Result<()> {
    let config_path = args.run.join(records::CONFIG);
    let mut cfg: RunConfig = serde_json::from_str(
        &fs::read_to_string(&config_path).with_context(|| format!("reading {}", config_path.display()))?,
    )
    .with_context(|| format!("parsing {}", config_path.display()))?;
    if let Some(d) = args.data {
        cfg.data = d;
    }
    if let Some(d) = args.difficulty {
        cfg.difficulty = Some(d);
    }
    let results: Vec<EpisodeResult> = records::read_jsonl(&args.run.join(records::RESULTS))?;
    let instances = cfg.load_instances()?;
    let summary = summary_for(&cfg, &results, &instances, args.columns.into())?;
    print!("{}", summary.text);

    let correlation = match &args.ratings {
        Some(path) => {
            let ratings = records::read_ratings(path)?;
            let scored = records::score_results(&results, &instances, cfg.threshold)?;
            let rows = correlation_rows(&scored, &ratings, args.permutations)?;
            println!();
            print!("{}", render_correlation(&rows));
            Some(rows)
        }
        None => None,
    };
    if let Some(path) = args.json {
        let report = ScoreReport {
            summary: summary.report,
            correlation,
        };
        fs::write(&path, serde_json::to_string_pretty(&report)? + "\n")
            .with_context(|| format!("writing {}", path.display()))?;
    }
    Ok(())
}
