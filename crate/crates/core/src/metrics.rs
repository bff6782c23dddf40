//! Trajectory scores, their aggregation, and rank/product-moment correlation
//! against external ratings.
//!
//! nDTW is `exp(-DTW / (|reference| * threshold))` where DTW uses the
//! symmetric step pattern with haversine cost.

use std::collections::BTreeMap;
use std::fmt::Write;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use statrs::distribution::{ContinuousCDF, StudentsT};
use thiserror::Error;

use crate::geo::{haversine_distance, GeoPoint};
use crate::graph::{MapGraph, NodeId};

/// Success radius in meters; a final distance equal to it counts.
pub const DEFAULT_THRESHOLD_M: f64 = 25.0;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum MetricsError {
    #[error("trajectory is empty")]
    EmptyTrajectory,
    #[error("node {0} is not in the graph")]
    UnknownNode(NodeId),
    #[error("nothing to aggregate")]
    NoScores,
    #[error("inputs have different lengths ({0} and {1})")]
    LengthMismatch(usize, usize),
    #[error("need at least 3 pairs, got {0}")]
    TooFew(usize),
    #[error("{0} input is constant; correlation is undefined")]
    ConstantInput(&'static str),
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TrajectoryScore {
    /// Final distance to the goal in meters.
    pub ne: f64,
    pub sr: u8,
    pub osr: u8,
    pub ndtw: f64,
    pub sdtw: f64,
}

fn points(traj: &[NodeId], g: &MapGraph) -> Result<Vec<GeoPoint>, MetricsError> {
    if traj.is_empty() {
        return Err(MetricsError::EmptyTrajectory);
    }
    traj.iter()
        .map(|id| {
            g.position(id.as_str())
                .map_err(|_| MetricsError::UnknownNode(id.clone()))
        })
        .collect()
}

/// Dynamic time warping distance with unit-weight match/insert/delete steps.
pub fn dtw(a: &[GeoPoint], b: &[GeoPoint]) -> f64 {
    if a.is_empty() || b.is_empty() {
        return f64::INFINITY;
    }
    let m = b.len();
    let mut prev = vec![f64::INFINITY; m + 1];
    let mut row = vec![f64::INFINITY; m + 1];
    prev[0] = 0.0;
    for &p in a {
        row[0] = f64::INFINITY;
        for j in 1..=m {
            let best = prev[j - 1].min(prev[j]).min(row[j - 1]);
            row[j] = haversine_distance(p, b[j - 1]) + best;
        }
        std::mem::swap(&mut prev, &mut row);
    }
    prev[m]
}

pub fn ndtw(agent: &[GeoPoint], reference: &[GeoPoint], threshold: f64) -> f64 {
    (-dtw(agent, reference) / (reference.len() as f64 * threshold)).exp()
}

pub fn score(
    agent: &[NodeId],
    reference: &[NodeId],
    g: &MapGraph,
    threshold: f64,
) -> Result<TrajectoryScore, MetricsError> {
    let a = points(agent, g)?;
    let r = points(reference, g)?;
    let goal = *r.last().expect("non-empty");
    let ne = haversine_distance(*a.last().expect("non-empty"), goal);
    let closest = a
        .iter()
        .map(|&p| haversine_distance(p, goal))
        .fold(f64::INFINITY, f64::min);
    let sr = u8::from(ne <= threshold);
    let ndtw = ndtw(&a, &r, threshold);
    Ok(TrajectoryScore {
        ne,
        sr,
        osr: u8::from(closest <= threshold),
        ndtw,
        sdtw: f64::from(sr) * ndtw,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MetricSummary {
    pub count: usize,
    /// Mean navigation error, meters.
    pub ne: f64,
    /// Percentages.
    pub sr: f64,
    pub osr: f64,
    pub ndtw: f64,
    pub sdtw: f64,
}

impl MetricSummary {
    fn of(scores: &[&TrajectoryScore]) -> MetricSummary {
        let n = scores.len() as f64;
        let mean = |f: &dyn Fn(&TrajectoryScore) -> f64| scores.iter().map(|s| f(s)).sum::<f64>() / n;
        MetricSummary {
            count: scores.len(),
            ne: mean(&|s| s.ne),
            sr: 100.0 * mean(&|s| f64::from(s.sr)),
            osr: 100.0 * mean(&|s| f64::from(s.osr)),
            ndtw: mean(&|s| s.ndtw),
            sdtw: mean(&|s| s.sdtw),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AggregateReport {
    pub overall: MetricSummary,
    /// Per difficulty tag; untagged scores only count toward `overall`.
    #[serde(default, skip_serializing_if = "BTreeMap::is_empty")]
    pub by_tag: BTreeMap<String, MetricSummary>,
}

/// Which path-fidelity columns a summary table shows.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum FidelityColumns {
    Sdtw,
    Ndtw,
    #[default]
    Both,
}

pub fn aggregate(scores: &[TrajectoryScore], tags: Option<&[Option<String>]>) -> Result<AggregateReport, MetricsError> {
    if scores.is_empty() {
        return Err(MetricsError::NoScores);
    }
    let mut by_tag = BTreeMap::new();
    if let Some(tags) = tags {
        if tags.len() != scores.len() {
            return Err(MetricsError::LengthMismatch(scores.len(), tags.len()));
        }
        let mut groups: BTreeMap<&str, Vec<&TrajectoryScore>> = BTreeMap::new();
        for (s, t) in scores.iter().zip(tags) {
            if let Some(t) = t {
                groups.entry(t.as_str()).or_default().push(s);
            }
        }
        by_tag = groups
            .into_iter()
            .map(|(t, v)| (t.to_string(), MetricSummary::of(&v)))
            .collect();
    }
    Ok(AggregateReport {
        overall: MetricSummary::of(&scores.iter().collect::<Vec<_>>()),
        by_tag,
    })
}

impl AggregateReport {
    /// Aligned text table, one row per group.
    pub fn render(&self, label: &str, columns: FidelityColumns) -> String {
        let mut header = format!("{:<24} {:>6} {:>9} {:>7} {:>7}", "", "N", "NE (m)", "SR %", "OSR %");
        if columns != FidelityColumns::Sdtw {
            header.push_str(&format!(" {:>6}", "nDTW"));
        }
        if columns != FidelityColumns::Ndtw {
            header.push_str(&format!(" {:>6}", "SDTW"));
        }
        let mut out = format!("{}\n", header.trim_end());
        let mut row = |name: &str, m: &MetricSummary| {
            let mut line = format!("{:<24} {:>6} {:>9.1} {:>7.1} {:>7.1}", name, m.count, m.ne, m.sr, m.osr);
            if columns != FidelityColumns::Sdtw {
                let _ = write!(line, " {:>6.3}", m.ndtw);
            }
            if columns != FidelityColumns::Ndtw {
                let _ = write!(line, " {:>6.3}", m.sdtw);
            }
            out.push_str(&line);
            out.push('\n');
        };
        row(label, &self.overall);
        for (tag, m) in &self.by_tag {
            row(&format!("  {tag}"), m);
        }
        out
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Correlation {
    pub n: usize,
    pub pearson_r: f64,
    pub pearson_p: f64,
    pub spearman_rho: f64,
    pub spearman_p: f64,
}

fn check_pair(x: &[f64], y: &[f64]) -> Result<(), MetricsError> {
    if x.len() != y.len() {
        return Err(MetricsError::LengthMismatch(x.len(), y.len()));
    }
    if x.len() < 3 {
        return Err(MetricsError::TooFew(x.len()));
    }
    Ok(())
}

pub fn pearson(x: &[f64], y: &[f64]) -> Result<f64, MetricsError> {
    check_pair(x, y)?;
    let n = x.len() as f64;
    let mx = x.iter().sum::<f64>() / n;
    let my = y.iter().sum::<f64>() / n;
    let (mut sxy, mut sxx, mut syy) = (0.0, 0.0, 0.0);
    for (a, b) in x.iter().zip(y) {
        sxy += (a - mx) * (b - my);
        sxx += (a - mx).powi(2);
        syy += (b - my).powi(2);
    }
    if sxx == 0.0 {
        return Err(MetricsError::ConstantInput("first"));
    }
    if syy == 0.0 {
        return Err(MetricsError::ConstantInput("second"));
    }
    Ok((sxy / (sxx.sqrt() * syy.sqrt())).clamp(-1.0, 1.0))
}

/// 1-based ranks with tied values sharing the mean of their positions.
pub fn mid_ranks(x: &[f64]) -> Vec<f64> {
    let mut order: Vec<usize> = (0..x.len()).collect();
    order.sort_by(|&a, &b| x[a].total_cmp(&x[b]));
    let mut ranks = vec![0.0; x.len()];
    let mut i = 0;
    while i < order.len() {
        let mut j = i;
        while j + 1 < order.len() && x[order[j + 1]] == x[order[i]] {
            j += 1;
        }
        let mid = (i + j) as f64 / 2.0 + 1.0;
        for &k in &order[i..=j] {
            ranks[k] = mid;
        }
        i = j + 1;
    }
    ranks
}

pub fn spearman(x: &[f64], y: &[f64]) -> Result<f64, MetricsError> {
    check_pair(x, y)?;
    pearson(&mid_ranks(x), &mid_ranks(y))
}

/// Two-sided p-value of a correlation coefficient from the t distribution
/// with `n - 2` degrees of freedom.
pub fn t_test_p(r: f64, n: usize) -> f64 {
    if r.abs() >= 1.0 {
        return 0.0;
    }
    let df = (n - 2) as f64;
    let t = r * (df / (1.0 - r * r)).sqrt();
    let dist = StudentsT::new(0.0, 1.0, df).expect("df is positive");
    (2.0 * (1.0 - dist.cdf(t.abs()))).clamp(0.0, 1.0)
}

pub fn correlate(x: &[f64], y: &[f64]) -> Result<Correlation, MetricsError> {
    let r = pearson(x, y)?;
    let rho = spearman(x, y)?;
    Ok(Correlation {
        n: x.len(),
        pearson_r: r,
        pearson_p: t_test_p(r, x.len()),
        spearman_rho: rho,
        spearman_p: t_test_p(rho, x.len()),
    })
}

/// Same coefficients, with p-values from `permutations` seeded shuffles of
/// `y`: (hits + 1) / (permutations + 1) where a hit is |r'| >= |r|.
pub fn correlate_permutation(
    x: &[f64],
    y: &[f64],
    permutations: usize,
    seed: u64,
) -> Result<Correlation, MetricsError> {
    let mut c = correlate(x, y)?;
    let rx = mid_ranks(x);
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut shuffled = y.to_vec();
    let (mut hits_r, mut hits_rho) = (0usize, 0usize);
    for _ in 0..permutations {
        shuffled.shuffle(&mut rng);
        // constant shuffles cannot occur: y is known not to be constant
        let r = pearson(x, &shuffled)?;
        let rho = pearson(&rx, &mid_ranks(&shuffled))?;
        hits_r += usize::from(r.abs() >= c.pearson_r.abs() - 1e-12);
        hits_rho += usize::from(rho.abs() >= c.spearman_rho.abs() - 1e-12);
    }
    let p = |hits: usize| (hits + 1) as f64 / (permutations + 1) as f64;
    c.pearson_p = p(hits_r);
    c.spearman_p = p(hits_rho);
    Ok(c)
}
