//! Multi-component bird's-eye-view risk fields for driving scenes.
//!
//! A scene field is the sum of a motorized-agent field along predicted
//! paths, an anisotropic field around pedestrians and cyclists, and a static
//! road penalty. The crate also provides a line-of-sight filter, actor-level
//! scoring with risk-identification metrics, and a sampling MPC planner that
//! uses the composed field as its cost density.

pub mod composer;
pub mod config;
pub mod error;
pub mod export;
pub mod field;
pub mod geometry;
pub mod metrics;
pub mod planner;
pub mod predictor;
pub mod raster;
pub mod scenario;
pub mod visibility;

pub use composer::{ComposedFrame, FrameEvaluation, RiskEngine};
pub use config::{AblationFlags, EngineConfig};
pub use error::{Error, Result};
pub use geometry::{Cell, FrenetCoord, GridSpec, PathGeometry, Point2};
pub use metrics::{ActorScoreSeries, MetricsReport};
pub use planner::{Control, EgoState, PlanResult, PlannerConfig};
pub use predictor::{HypothesisSet, Predictor, PredictorRegistry, TrajectoryHypothesis};
pub use raster::RiskGrid;
pub use scenario::{load_scenario, AgentKind, AgentState, LaneGraph, ScenarioFrame, ScenarioSequence};
pub use visibility::VisibilityPolygon;
