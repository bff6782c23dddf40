//! On-disk records shared by `run` and `score`.

use std::collections::{BTreeMap, HashMap};
use std::fs;
use std::io::{BufRead, BufReader};
use std::path::Path;

use anyhow::{anyhow, bail, Context, Result};
use osmnav::episode::StepRecord;
use osmnav::metrics::{AggregateReport, FidelityColumns};
use osmnav::{aggregate, score, EpisodeResult, Instance, TrajectoryScore};
use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};

pub const RESULTS: &str = "results.jsonl";
pub const STEPS: &str = "steps.jsonl";
pub const TIMINGS: &str = "timings.jsonl";
pub const CONFIG: &str = "config.json";
pub const SUMMARY_TXT: &str = "summary.txt";
pub const SUMMARY_JSON: &str = "summary.json";

#[derive(Debug, Serialize)]
pub struct StepLine<'a> {
    pub instance_id: &'a str,
    #[serde(flatten)]
    pub step: &'a StepRecord,
}

#[derive(Debug, Serialize, Deserialize)]
pub struct TimingLine {
    pub instance_id: String,
    pub millis: u128,
}

pub fn read_jsonl<T: DeserializeOwned>(path: &Path) -> Result<Vec<T>> {
    let file = fs::File::open(path).with_context(|| format!("opening {}", path.display()))?;
    let mut out = Vec::new();
    for (i, line) in BufReader::new(file).lines().enumerate() {
        let line = line.with_context(|| format!("reading {}", path.display()))?;
        if line.trim().is_empty() {
            continue;
        }
        out.push(serde_json::from_str(&line).with_context(|| format!("{}:{}", path.display(), i + 1))?);
    }
    Ok(out)
}

/// Results file contents, or nothing if the file does not exist yet. A torn
/// last line from an interrupted run is dropped.
pub fn read_results_lenient(path: &Path) -> Result<Vec<EpisodeResult>> {
    if !path.exists() {
        return Ok(Vec::new());
    }
    let text = fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
    let lines: Vec<&str> = text.lines().filter(|l| !l.trim().is_empty()).collect();
    let mut out = Vec::new();
    for (i, line) in lines.iter().enumerate() {
        match serde_json::from_str(line) {
            Ok(r) => out.push(r),
            Err(_) if i + 1 == lines.len() && !text.ends_with('\n') => {
                tracing::warn!("dropping incomplete last line of {}", path.display());
            }
            Err(e) => return Err(e).with_context(|| format!("{}:{}", path.display(), i + 1)),
        }
    }
    Ok(out)
}

#[derive(Deserialize)]
#[serde(untagged)]
enum TagDoc {
    Map(BTreeMap<String, String>),
    List(Vec<TagLine>),
}

#[derive(Deserialize)]
struct TagLine {
    instance_id: String,
    difficulty: String,
}

/// Difficulty sidecar: a JSON object `{id: tag}`, a JSON array or JSON lines
/// of `{instance_id, difficulty}`.
pub fn read_difficulty(path: &Path) -> Result<HashMap<String, String>> {
    let text = fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
    if let Ok(doc) = serde_json::from_str::<TagDoc>(&text) {
        return Ok(match doc {
            TagDoc::Map(m) => m.into_iter().collect(),
            TagDoc::List(v) => v.into_iter().map(|t| (t.instance_id, t.difficulty)).collect(),
        });
    }
    let lines: Vec<TagLine> = read_jsonl(path)?;
    Ok(lines.into_iter().map(|t| (t.instance_id, t.difficulty)).collect())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Rating {
    pub instance_id: String,
    pub rating: f64,
}

/// Ratings as JSON lines of `{instance_id, rating}` or as CSV with an
/// `instance_id,rating` header.
pub fn read_ratings(path: &Path) -> Result<Vec<Rating>> {
    let is_csv = path.extension().is_some_and(|e| e.eq_ignore_ascii_case("csv"));
    if !is_csv {
        return read_jsonl(path);
    }
    let text = fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
    let mut lines = text.lines().enumerate().filter(|(_, l)| !l.trim().is_empty());
    let header: Vec<String> = lines
        .next()
        .ok_or_else(|| anyhow!("{} is empty", path.display()))?
        .1
        .split(',')
        .map(|s| s.trim().to_ascii_lowercase())
        .collect();
    let col = |name: &str| {
        header
            .iter()
            .position(|h| h == name)
            .ok_or_else(|| anyhow!("{} has no {name} column", path.display()))
    };
    let (id_col, rating_col) = (col("instance_id")?, col("rating")?);
    lines
        .map(|(i, line)| {
            let cells: Vec<&str> = line.split(',').map(str::trim).collect();
            let get = |c: usize| {
                cells
                    .get(c)
                    .ok_or_else(|| anyhow!("{}:{}: missing column", path.display(), i + 1))
            };
            Ok(Rating {
                instance_id: get(id_col)?.to_string(),
                rating: get(rating_col)?
                    .parse()
                    .with_context(|| format!("{}:{}: rating", path.display(), i + 1))?,
            })
        })
        .collect()
}

/// Scores of stored trajectories against the dataset's reference routes.
pub fn score_results(
    results: &[EpisodeResult],
    instances: &[Instance],
    threshold: f64,
) -> Result<Vec<(String, TrajectoryScore)>> {
    let by_id: HashMap<&str, &Instance> = instances.iter().map(|i| (i.id.as_str(), i)).collect();
    results
        .iter()
        .map(|r| {
            let inst = by_id
                .get(r.instance_id.as_str())
                .ok_or_else(|| anyhow!("result for unknown instance {}", r.instance_id))?;
            let s = score(&r.trajectory, &inst.route, &inst.graph, threshold)
                .with_context(|| format!("scoring {}", r.instance_id))?;
            Ok((r.instance_id.clone(), s))
        })
        .collect()
}

/// Tags per scored instance: the sidecar wins over tags in the dataset.
pub fn tags_for(
    ids: &[&str],
    instances: &[Instance],
    sidecar: Option<&HashMap<String, String>>,
) -> Option<Vec<Option<String>>> {
    let from_data: HashMap<&str, &str> = instances
        .iter()
        .filter_map(|i| i.difficulty.as_deref().map(|d| (i.id.as_str(), d)))
        .collect();
    let tags: Vec<Option<String>> = ids
        .iter()
        .map(|id| match sidecar {
            Some(s) => s.get(*id).cloned(),
            None => from_data.get(id).map(|d| d.to_string()),
        })
        .collect();
    tags.iter().any(Option::is_some).then_some(tags)
}

pub struct Summary {
    pub report: AggregateReport,
    pub text: String,
}

pub fn summarize(
    label: &str,
    scored: &[(String, TrajectoryScore)],
    tags: Option<&[Option<String>]>,
    columns: FidelityColumns,
) -> Result<Summary> {
    if scored.is_empty() {
        bail!("no results to summarize");
    }
    let scores: Vec<TrajectoryScore> = scored.iter().map(|(_, s)| *s).collect();
    let report = aggregate(&scores, tags)?;
    let text = report.render(label, columns);
    Ok(Summary { report, text })
}
