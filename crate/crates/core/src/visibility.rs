//! Line-of-sight adapter used at evaluation time.
//!
//! Rays are cast uniformly over the full circle from the ego position and
//! stepped at half-cell resolution until they hit an opaque cell
//! (non-drivable ground or a motorized agent other than the ego) or reach
//! the maximum range. The ray endpoints form a star-shaped polygon about
//! the ego.
//!
//! A motorized agent is itself opaque, so its centre normally lies behind
//! the endpoints of the rays that hit it. Agents whose footprint stops at
//! least one ray are therefore recorded as *seen*: they count as visible,
//! and their footprint cells survive masking.

use std::collections::BTreeSet;
use std::f64::consts::TAU;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::{rasterize_footprint, GridSpec, Point2};
use crate::raster::RiskGrid;
use crate::scenario::{AgentState, ScenarioFrame};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct VisibilitySettings {
    /// When false every agent is visible and grids are left unmasked.
    pub enabled: bool,
    pub ray_count: usize,
    /// Meters.
    pub max_range: f64,
}

impl Default for VisibilitySettings {
    fn default() -> Self {
        Self {
            enabled: true,
            ray_count: 360,
            max_range: 50.0,
        }
    }
}

impl VisibilitySettings {
    pub fn validate(&self) -> Result<()> {
        if self.ray_count < 3 {
            return Err(Error::Config("visibility.ray_count must be at least 3".into()));
        }
        if !(self.max_range > 0.0 && self.max_range.is_finite()) {
            return Err(Error::Config("visibility.max_range must be positive".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Occupant {
    Free,
    Static,
    /// Index into the frame's agent list.
    Agent(usize),
}

/// Per-cell opacity for one frame.
#[derive(Debug, Clone)]
pub struct OcclusionMask {
    pub grid: GridSpec,
    pub cells: Vec<Occupant>,
}

impl OcclusionMask {
    /// `drivable` is the per-cell drivable flag on `grid`. Pedestrians and
    /// cyclists never occlude; the ego is not an occluder for itself.
    pub fn build(frame: &ScenarioFrame, grid: &GridSpec, drivable: &[bool]) -> Self {
        let mut cells: Vec<Occupant> = drivable
            .iter()
            .map(|&d| if d { Occupant::Free } else { Occupant::Static })
            .collect();
        for (i, agent) in frame.agents.iter().enumerate() {
            if !agent.kind.is_motorized() {
                continue;
            }
            for cell in rasterize_footprint(agent, grid, 0.0) {
                let idx = grid.index(cell);
                // first agent wins on overlap
                if !matches!(cells[idx], Occupant::Agent(_)) {
                    cells[idx] = Occupant::Agent(i);
                }
            }
        }
        Self { grid: *grid, cells }
    }

    pub fn at(&self, p: Point2) -> Option<Occupant> {
        self.grid.world_to_cell(p).map(|c| self.cells[self.grid.index(c)])
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum RayHit {
    /// Reached the maximum range (or the grid border).
    Clear,
    Static,
    Agent(usize),
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct VisibilityPolygon {
    pub origin: Point2,
    /// One endpoint per ray, ray `i` at angle `2*pi*i / ray_count`.
    pub vertices: Vec<Point2>,
    pub hits: Vec<RayHit>,
    pub ray_count: usize,
    pub max_range: f64,
    /// Ids of agents that stopped at least one ray.
    pub seen: BTreeSet<String>,
}

impl VisibilityPolygon {
    /// Polygon that contains everything, used when the adapter is off.
    pub fn unbounded(origin: Point2) -> Self {
        Self {
            origin,
            vertices: Vec::new(),
            hits: Vec::new(),
            ray_count: 0,
            max_range: f64::INFINITY,
            seen: BTreeSet::new(),
        }
    }

    pub fn is_unbounded(&self) -> bool {
        self.ray_count == 0
    }

    pub fn ray_lengths(&self) -> Vec<f64> {
        self.vertices.iter().map(|v| v.distance(self.origin)).collect()
    }

    /// Point-in-star-polygon by angular binning: the query angle selects
    /// the bounding ray pair and the point must lie inside the triangle
    /// spanned by the origin and the two endpoints.
    pub fn contains(&self, p: Point2) -> bool {
        if self.is_unbounded() {
            return true;
        }
        let q = p - self.origin;
        if q.x == 0.0 && q.y == 0.0 {
            return true;
        }
        let n = self.ray_count;
        let step = TAU / n as f64;
        let angle = q.y.atan2(q.x).rem_euclid(TAU);
        let i = ((angle / step).floor() as usize) % n;
        let j = (i + 1) % n;
        let u = self.vertices[i] - self.origin;
        let w = self.vertices[j] - self.origin;
        let det = u.cross(w);
        if det.abs() < 1e-18 {
            // one of the rays has zero length; only points on the other ray count
            let (ray, len) = if u.norm() > w.norm() { (u, u.norm()) } else { (w, w.norm()) };
            if len == 0.0 {
                return false;
            }
            let along = q.dot(ray) / len;
            return q.cross(ray).abs() <= 1e-9 * len && along >= 0.0 && along <= len;
        }
        let a = q.cross(w) / det;
        let b = u.cross(q) / det;
        let tol = 1e-12;
        a >= -tol && b >= -tol && a + b <= 1.0 + tol
    }
}

/// Casts `ray_count` rays from the ego over the occlusion mask.
pub fn cast_rays(origin: Point2, mask: &OcclusionMask, frame: &ScenarioFrame, settings: &VisibilitySettings) -> VisibilityPolygon {
    let n = settings.ray_count;
    let step = 0.5 * mask.grid.resolution;
    let mut vertices = Vec::with_capacity(n);
    let mut hits = Vec::with_capacity(n);
    let mut seen = BTreeSet::new();
    for i in 0..n {
        let dir = Point2::from_angle(TAU * i as f64 / n as f64);
        let mut k = 1usize;
        let (end, hit) = loop {
            let r = (k as f64 * step).min(settings.max_range);
            let p = origin + dir * r;
            match mask.at(p) {
                None => break (p, RayHit::Clear),
                Some(Occupant::Static) => break (p, RayHit::Static),
                Some(Occupant::Agent(a)) => break (p, RayHit::Agent(a)),
                Some(Occupant::Free) => {}
            }
            if r >= settings.max_range {
                break (p, RayHit::Clear);
            }
            k += 1;
        };
        if let RayHit::Agent(a) = hit {
            seen.insert(frame.agents[a].id.clone());
        }
        vertices.push(end);
        hits.push(hit);
    }
    VisibilityPolygon {
        origin,
        vertices,
        hits,
        ray_count: n,
        max_range: settings.max_range,
        seen,
    }
}

/// Visibility polygon of the ego for one frame.
pub fn compute_visibility(
    frame: &ScenarioFrame,
    grid: &GridSpec,
    drivable: &[bool],
    settings: &VisibilitySettings,
) -> VisibilityPolygon {
    if !settings.enabled {
        return VisibilityPolygon::unbounded(frame.ego.position);
    }
    let mask = OcclusionMask::build(frame, grid, drivable);
    cast_rays(frame.ego.position, &mask, frame, settings)
}

pub fn is_agent_visible(agent: &AgentState, polygon: &VisibilityPolygon) -> bool {
    polygon.seen.contains(&agent.id) || polygon.contains(agent.position)
}

/// Per-cell flag of the visible region: inside the polygon or on the
/// footprint of a seen agent.
pub fn visible_cells(frame: &ScenarioFrame, grid: &GridSpec, polygon: &VisibilityPolygon) -> Vec<bool> {
    if polygon.is_unbounded() {
        return vec![true; grid.len()];
    }
    let mut keep: Vec<bool> = grid.cell_centers().into_iter().map(|p| polygon.contains(p)).collect();
    for agent in frame.agents.iter().filter(|a| polygon.seen.contains(&a.id)) {
        for cell in rasterize_footprint(agent, grid, 0.0) {
            keep[grid.index(cell)] = true;
        }
    }
    keep
}

pub fn apply_mask(grid: &RiskGrid, keep: &[bool]) -> RiskGrid {
    let values = grid
        .values
        .iter()
        .zip(keep)
        .map(|(&v, &k)| if k { v } else { 0.0 })
        .collect();
    RiskGrid {
        grid: grid.grid,
        values,
    }
}

/// Visible non-ego agents and the risk grid with invisible cells zeroed.
pub fn filter_visible<'a>(
    frame: &'a ScenarioFrame,
    polygon: &VisibilityPolygon,
    risk: &RiskGrid,
) -> (Vec<&'a AgentState>, RiskGrid) {
    let visible = frame
        .agents
        .iter()
        .filter(|a| is_agent_visible(a, polygon))
        .collect();
    let keep = visible_cells(frame, &risk.grid, polygon);
    (visible, apply_mask(risk, &keep))
}
