//! Vision-free evaluation of natural-language navigation instructions on
//! OpenStreetMap-derived street graphs.
//!
//! An instruction is executed by a hierarchical agent: it is decomposed into
//! sub-goals, landmarks are grounded onto map POIs, and at each step a policy
//! picks the next node from a serialized forward view of the graph. The
//! resulting trajectory is scored against the reference route.

pub mod dataset;
pub mod encode;
pub mod episode;
pub mod geo;
pub mod graph;
pub mod instruction;
pub mod metrics;
pub mod policy;
pub mod synth;
pub mod visibility;

pub use dataset::{load_instances, Instance};
pub use encode::{encode, EncodeContext, RepresentationKind};
pub use episode::{run_batch, run_episode, EpisodeConfig, EpisodeResult, Termination};
pub use geo::{GeoPoint, Heading, RelativeDirection};
pub use graph::{MapGraph, NodeId, Poi};
pub use instruction::{GroundedLandmark, Landmark, PlanningState, SubGoalPlan};
pub use metrics::{aggregate, correlate, score, AggregateReport, Correlation, TrajectoryScore};
pub use policy::{Navigator, Policy, PolicyDecision, PolicyError, TokenUsage};
pub use visibility::{construct_visible_area, VisibleArea};
