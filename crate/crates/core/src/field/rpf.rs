//! Road penalty field: a constant off-road penalty plus Gaussian exposure
//! around same-direction and opposite-direction lane centerlines.

use std::sync::{Arc, Mutex};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::{
    bounding_box, distance_to_box, distance_to_polyline, point_in_any_polygon, GridSpec, Point2,
};
use crate::raster::RiskGrid;
use crate::scenario::{partition_lanes, LaneGraph};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RpfParams {
    pub lambda_off: f64,
    pub lambda_opp: f64,
    pub lambda_same: f64,
    pub sigma_same: f64,
    pub sigma_opp: f64,
    /// Also apply the same-direction term to the ego's own lane.
    pub include_ego_lane: bool,
}

impl Default for RpfParams {
    fn default() -> Self {
        Self {
            lambda_off: 5.0,
            lambda_opp: 1.0,
            lambda_same: 0.3,
            sigma_same: 1.2,
            sigma_opp: 1.2,
            include_ego_lane: false,
        }
    }
}

impl RpfParams {
    pub fn validate(&self) -> Result<()> {
        let all = [
            self.lambda_off,
            self.lambda_opp,
            self.lambda_same,
            self.sigma_same,
            self.sigma_opp,
        ];
        if all.iter().any(|v| !v.is_finite()) {
            return Err(Error::Config("rpf parameters must be finite".into()));
        }
        if !(self.lambda_off > self.lambda_opp
            && self.lambda_opp > self.lambda_same
            && self.lambda_same >= 0.0)
        {
            return Err(Error::Config(format!(
                "rpf requires lambda_off > lambda_opp > lambda_same >= 0, got {} / {} / {}",
                self.lambda_off, self.lambda_opp, self.lambda_same
            )));
        }
        if self.sigma_same <= 0.0 || self.sigma_opp <= 0.0 {
            return Err(Error::Config("rpf sigmas must be positive".into()));
        }
        Ok(())
    }
}

/// `exp(-x)` is exactly zero in f64 for `x` beyond this.
const EXP_UNDERFLOW: f64 = 800.0;

#[derive(Debug, Clone)]
struct LaneTerm {
    points: Vec<Point2>,
    lambda: f64,
    two_sigma_sq: f64,
    bbox: (Point2, Point2),
}

impl LaneTerm {
    fn value(&self, p: Point2) -> f64 {
        let d = distance_to_polyline(p, &self.points);
        self.lambda * (-(d * d) / self.two_sigma_sq).exp()
    }

    /// True when the term is exactly zero at `p`.
    fn vanishes_at(&self, p: Point2) -> bool {
        let lb = distance_to_box(p, self.bbox.0, self.bbox.1);
        lb * lb / self.two_sigma_sq > EXP_UNDERFLOW
    }
}

/// Lane terms and drivable polygons prepared for repeated evaluation.
///
/// Summation order is fixed (off-road term, then same-direction lanes, then
/// opposite lanes, each in map order) so that [`RoadField::value_at`] and
/// the scalar [`rpf`] agree bit for bit.
#[derive(Debug, Clone)]
pub struct RoadField {
    params: RpfParams,
    drivable: Vec<Vec<Point2>>,
    terms: Vec<LaneTerm>,
}

impl RoadField {
    pub fn new(map: &LaneGraph, params: &RpfParams) -> Self {
        let (same, opp) = partition_lanes(map);
        let ego = if params.include_ego_lane {
            map.lane(&map.ego_lane_id)
        } else {
            None
        };
        let mut terms = Vec::new();
        let same_lanes = map
            .lanes
            .iter()
            .filter(|l| ego.is_some_and(|e| e.id == l.id) || same.iter().any(|s| s.id == l.id));
        for lane in same_lanes {
            terms.push(LaneTerm {
                points: lane.centerline.clone(),
                lambda: params.lambda_same,
                two_sigma_sq: 2.0 * params.sigma_same * params.sigma_same,
                bbox: bounding_box(&lane.centerline),
            });
        }
        for lane in opp {
            terms.push(LaneTerm {
                points: lane.centerline.clone(),
                lambda: params.lambda_opp,
                two_sigma_sq: 2.0 * params.sigma_opp * params.sigma_opp,
                bbox: bounding_box(&lane.centerline),
            });
        }
        Self {
            params: params.clone(),
            drivable: map.drivable_area.clone(),
            terms,
        }
    }

    /// Maps without drivable polygons are treated as drivable everywhere.
    pub fn is_drivable(&self, p: Point2) -> bool {
        self.drivable.is_empty() || point_in_any_polygon(p, &self.drivable)
    }

    pub fn value_at(&self, p: Point2) -> f64 {
        let mut sum = if self.is_drivable(p) {
            0.0
        } else {
            self.params.lambda_off
        };
        for term in &self.terms {
            sum += term.value(p);
        }
        sum
    }

    /// Same value as [`value_at`](Self::value_at), skipping lane terms that
    /// underflow to exactly zero.
    pub fn value_at_pruned(&self, p: Point2) -> f64 {
        let mut sum = if self.is_drivable(p) {
            0.0
        } else {
            self.params.lambda_off
        };
        for term in &self.terms {
            if !term.vanishes_at(p) {
                sum += term.value(p);
            }
        }
        sum
    }

    pub fn rasterize(&self, grid: &GridSpec) -> RiskGrid {
        RiskGrid::from_fn(*grid, |p| self.value_at_pruned(p))
    }

    pub fn drivable_mask(&self, grid: &GridSpec) -> Vec<bool> {
        let g = RiskGrid::from_fn(*grid, |p| if self.is_drivable(p) { 1.0 } else { 0.0 });
        g.values.into_iter().map(|v| v > 0.0).collect()
    }
}

/// Road penalty at one point.
pub fn rpf(point: Point2, map: &LaneGraph, params: &RpfParams) -> f64 {
    RoadField::new(map, params).value_at(point)
}

pub fn precompute_rpf_grid(map: &LaneGraph, grid: &GridSpec, params: &RpfParams) -> RiskGrid {
    RoadField::new(map, params).rasterize(grid)
}

/// Static layers that depend only on the map and the grid pose.
#[derive(Debug, Clone)]
pub struct StaticLayers {
    pub rpf: Arc<RiskGrid>,
    pub drivable: Arc<Vec<bool>>,
}

/// Single-entry cache of [`StaticLayers`] keyed by grid pose.
#[derive(Debug, Default)]
pub struct RpfCache {
    entry: Mutex<Option<([u64; 5], StaticLayers)>>,
    misses: Mutex<usize>,
}

impl RpfCache {
    pub fn get_or_compute(&self, road: &RoadField, grid: &GridSpec) -> StaticLayers {
        let key = grid.pose_key();
        if let Ok(guard) = self.entry.lock() {
            if let Some((k, layers)) = guard.as_ref() {
                if *k == key {
                    return layers.clone();
                }
            }
        }
        let layers = StaticLayers {
            rpf: Arc::new(road.rasterize(grid)),
            drivable: Arc::new(road.drivable_mask(grid)),
        };
        if let Ok(mut guard) = self.entry.lock() {
            *guard = Some((key, layers.clone()));
        }
        if let Ok(mut m) = self.misses.lock() {
            *m += 1;
        }
        layers
    }

    /// Number of recomputations so far.
    pub fn misses(&self) -> usize {
        self.misses.lock().map(|m| *m).unwrap_or(0)
    }
}
