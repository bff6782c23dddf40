use serde::{Deserialize, Serialize};

use super::{fuzzy, Landmark, PlanError};
use crate::graph::{MapGraph, Poi};

/// Default similarity threshold on the 0..100 scale.
pub const DEFAULT_TAU: f64 = 80.0;

/// A landmark together with the POIs it was matched to.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GroundedLandmark {
    pub landmark: Landmark,
    /// Matched POI ids in graph order.
    pub pois: Vec<String>,
    /// Highest similarity seen against any POI.
    pub best_score: f64,
}

impl GroundedLandmark {
    pub fn letter(&self) -> Option<char> {
        self.landmark.letter
    }
}

/// Stable-sorts landmarks by where their name first occurs in `instruction`;
/// names that never occur keep their relative order after the rest.
pub fn order_by_appearance(mut landmarks: Vec<Landmark>, instruction: &str) -> Vec<Landmark> {
    let text = fuzzy::normalize(instruction);
    landmarks.sort_by_key(|l| text.find(&fuzzy::normalize(&l.name)).unwrap_or(usize::MAX));
    landmarks
}

/// Assigns A, B, C, … in list order.
pub fn assign_landmark_letters(mut landmarks: Vec<Landmark>) -> Result<Vec<Landmark>, PlanError> {
    if landmarks.len() > 26 {
        return Err(PlanError::TooManyLandmarks(landmarks.len()));
    }
    for (l, letter) in landmarks.iter_mut().zip('A'..='Z') {
        l.letter = Some(letter);
    }
    Ok(landmarks)
}

/// Texts a POI is matched against: every tag value plus a display name with
/// underscores spelled as spaces.
fn match_texts(poi: &Poi) -> impl Iterator<Item = String> + '_ {
    poi.tags
        .values()
        .cloned()
        .chain(std::iter::once(poi.label().replace('_', " ")))
}

fn poi_score(name: &str, poi: &Poi) -> f64 {
    match_texts(poi)
        .filter_map(|t| fuzzy::partial_ratio(name, &t).ok())
        .fold(0.0, f64::max)
}

/// Matches each landmark to every POI whose best tag similarity exceeds `tau`
/// and letters the landmarks in list order.
pub fn ground_landmarks(
    landmarks: &[Landmark],
    graph: &MapGraph,
    tau: f64,
) -> Result<Vec<GroundedLandmark>, PlanError> {
    let lettered = assign_landmark_letters(landmarks.to_vec())?;
    Ok(lettered
        .into_iter()
        .map(|landmark| {
            let mut pois = Vec::new();
            let mut best = 0.0f64;
            for poi in graph.pois() {
                let score = poi_score(&landmark.name, poi);
                best = best.max(score);
                if score > tau {
                    pois.push(poi.id.clone());
                }
            }
            GroundedLandmark {
                landmark,
                pois,
                best_score: best,
            }
        })
        .collect())
}
