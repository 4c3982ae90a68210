//! Scene data model and the JSON scenario file format.
//!
//! Everything here is immutable once loaded. The on-disk layout is
//! described in `docs/scenario.md` and `docs/scenario.schema.json`.

use std::collections::{BTreeSet, HashSet};
use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};
use serde_json::{Map, Value};

use crate::error::{Error, Result};
use crate::geometry::{is_simple_polygon, Point2};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum AgentKind {
    Car,
    Truck,
    Motorcycle,
    Pedestrian,
    Cyclist,
}

impl AgentKind {
    pub fn is_motorized(self) -> bool {
        matches!(self, AgentKind::Car | AgentKind::Truck | AgentKind::Motorcycle)
    }

    pub fn is_vru(self) -> bool {
        !self.is_motorized()
    }

    pub fn as_str(self) -> &'static str {
        match self {
            AgentKind::Car => "car",
            AgentKind::Truck => "truck",
            AgentKind::Motorcycle => "motorcycle",
            AgentKind::Pedestrian => "pedestrian",
            AgentKind::Cyclist => "cyclist",
        }
    }
}

/// Kinematic snapshot of one traffic participant in the world frame.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(from = "AgentRecord", into = "AgentRecord")]
pub struct AgentState {
    pub id: String,
    pub kind: AgentKind,
    pub position: Point2,
    /// Radians, counter-clockwise from world +x.
    pub heading: f64,
    /// m/s along `heading`.
    pub speed: f64,
    pub length: f64,
    pub width: f64,
    /// Zero when unknown (allowed for VRUs only).
    pub mass_kg: f64,
}

impl AgentState {
    pub fn heading_unit(&self) -> Point2 {
        Point2::from_angle(self.heading)
    }

    fn validate(&self) -> Result<()> {
        let ctx = |msg: &str| Error::Validation(format!("agent `{}`: {msg}", self.id));
        if self.id.is_empty() {
            return Err(Error::Validation("agent id must not be empty".into()));
        }
        if !(self.position.is_finite() && self.heading.is_finite() && self.speed.is_finite()) {
            return Err(ctx("pose and speed must be finite"));
        }
        if self.speed < 0.0 {
            return Err(ctx("speed must be nonnegative"));
        }
        if !(self.length > 0.0 && self.width > 0.0) {
            return Err(ctx("bbox dimensions must be positive"));
        }
        if self.kind.is_motorized() && !(self.mass_kg > 0.0 && self.mass_kg.is_finite()) {
            return Err(ctx("motorized agents need a positive mass"));
        }
        if self.mass_kg < 0.0 {
            return Err(ctx("mass must be nonnegative"));
        }
        Ok(())
    }
}

/// Flat file representation of [`AgentState`].
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct AgentRecord {
    id: String,
    kind: AgentKind,
    x: f64,
    y: f64,
    heading: f64,
    speed: f64,
    length: f64,
    width: f64,
    #[serde(default)]
    mass: f64,
}

impl From<AgentRecord> for AgentState {
    fn from(r: AgentRecord) -> Self {
        Self {
            id: r.id,
            kind: r.kind,
            position: Point2::new(r.x, r.y),
            heading: r.heading,
            speed: r.speed,
            length: r.length,
            width: r.width,
            mass_kg: r.mass,
        }
    }
}

impl From<AgentState> for AgentRecord {
    fn from(a: AgentState) -> Self {
        Self {
            id: a.id,
            kind: a.kind,
            x: a.position.x,
            y: a.position.y,
            heading: a.heading,
            speed: a.speed,
            length: a.length,
            width: a.width,
            mass: a.mass_kg,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScenarioFrame {
    #[serde(rename = "t")]
    pub timestamp: f64,
    pub ego: AgentState,
    #[serde(default)]
    pub agents: Vec<AgentState>,
    #[serde(rename = "gt_risky", default)]
    pub gt_risky_ids: BTreeSet<String>,
}

impl ScenarioFrame {
    pub fn agent(&self, id: &str) -> Option<&AgentState> {
        self.agents.iter().find(|a| a.id == id)
    }

    pub fn is_gt_risky(&self, id: &str) -> bool {
        self.gt_risky_ids.contains(id)
    }

    fn validate(&self, index: usize) -> Result<()> {
        let wrap = |e: Error| match e {
            Error::Validation(msg) => Error::Validation(format!("frame {index}: {msg}")),
            other => other,
        };
        if !self.timestamp.is_finite() {
            return Err(wrap(Error::Validation("timestamp must be finite".into())));
        }
        self.ego.validate().map_err(wrap)?;
        let mut seen = HashSet::new();
        seen.insert(self.ego.id.as_str());
        for agent in &self.agents {
            agent.validate().map_err(wrap)?;
            if !seen.insert(agent.id.as_str()) {
                return Err(wrap(Error::Validation(format!(
                    "duplicate agent id `{}`",
                    agent.id
                ))));
            }
        }
        for id in &self.gt_risky_ids {
            if self.agent(id).is_none() {
                return Err(wrap(Error::Validation(format!(
                    "gt_risky id `{id}` is not an agent of this frame"
                ))));
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum LaneDirection {
    Same,
    Opposite,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Lane {
    pub id: String,
    pub direction: LaneDirection,
    #[serde(rename = "points")]
    pub centerline: Vec<Point2>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LaneGraph {
    pub lanes: Vec<Lane>,
    #[serde(rename = "drivable", default)]
    pub drivable_area: Vec<Vec<Point2>>,
    #[serde(rename = "ego_lane")]
    pub ego_lane_id: String,
}

impl LaneGraph {
    pub fn lane(&self, id: &str) -> Option<&Lane> {
        self.lanes.iter().find(|l| l.id == id)
    }

    pub fn validate(&self) -> Result<()> {
        let mut ids = HashSet::new();
        for lane in &self.lanes {
            if !ids.insert(lane.id.as_str()) {
                return Err(Error::Validation(format!("duplicate lane id `{}`", lane.id)));
            }
            if lane.centerline.len() < 2 {
                return Err(Error::Validation(format!(
                    "lane `{}` centerline needs at least 2 points",
                    lane.id
                )));
            }
            if lane.centerline.iter().any(|p| !p.is_finite()) {
                return Err(Error::Validation(format!("lane `{}` has non-finite points", lane.id)));
            }
        }
        for (i, poly) in self.drivable_area.iter().enumerate() {
            if poly.iter().any(|p| !p.is_finite()) || !is_simple_polygon(poly) {
                return Err(Error::Validation(format!(
                    "drivable polygon {i} is not a simple polygon"
                )));
            }
        }
        if self.lane(&self.ego_lane_id).is_none() {
            return Err(Error::Validation(format!(
                "ego_lane `{}` is not in the lane list",
                self.ego_lane_id
            )));
        }
        Ok(())
    }
}

/// Splits every lane other than the ego lane by its direction tag.
pub fn partition_lanes(map: &LaneGraph) -> (Vec<&Lane>, Vec<&Lane>) {
    let others = map.lanes.iter().filter(|l| l.id != map.ego_lane_id);
    others.partition(|l| l.direction == LaneDirection::Same)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScenarioSequence {
    pub map: LaneGraph,
    pub frames: Vec<ScenarioFrame>,
    #[serde(default)]
    pub meta: Map<String, Value>,
}

impl ScenarioSequence {
    pub fn validate(&self) -> Result<()> {
        if self.frames.is_empty() {
            return Err(Error::Validation("scenario has no frames".into()));
        }
        self.map.validate()?;
        for (i, frame) in self.frames.iter().enumerate() {
            frame.validate(i)?;
        }
        for (i, w) in self.frames.windows(2).enumerate() {
            if w[1].timestamp <= w[0].timestamp {
                return Err(Error::Validation(format!(
                    "frame {}: timestamps must be strictly increasing",
                    i + 1
                )));
            }
        }
        if let Some(v) = self.meta.get("collision_frame") {
            match v.as_u64() {
                Some(idx) if (idx as usize) < self.frames.len() => {}
                _ => {
                    return Err(Error::Validation(
                        "meta.collision_frame must be a frame index".into(),
                    ))
                }
            }
        }
        Ok(())
    }

    /// Annotated collision frame index from `meta.collision_frame`.
    pub fn collision_frame(&self) -> Option<usize> {
        self.meta
            .get("collision_frame")
            .and_then(Value::as_u64)
            .map(|i| i as usize)
    }

    pub fn name(&self) -> Option<&str> {
        self.meta.get("name").and_then(Value::as_str)
    }

    pub fn to_json_string(&self) -> String {
        // serialization of plain data with string keys cannot fail
        serde_json::to_string_pretty(self).unwrap_or_default()
    }
}

pub fn parse_scenario(text: &str) -> Result<ScenarioSequence> {
    let seq: ScenarioSequence =
        serde_json::from_str(text).map_err(|e| Error::Parse(e.to_string()))?;
    seq.validate()?;
    Ok(seq)
}

pub fn load_scenario(path: impl AsRef<Path>) -> Result<ScenarioSequence> {
    let path = path.as_ref();
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    parse_scenario(&text).map_err(|e| match e {
        Error::Parse(msg) => Error::Parse(format!("{}: {msg}", path.display())),
        Error::Validation(msg) => Error::Validation(format!("{}: {msg}", path.display())),
        other => other,
    })
}
