//! Motorized-agent field.
//!
//! Each predicted centerline carries a Gaussian cross-section in Frenet
//! coordinates, `a(s) * exp(-d^2 / (2 sigma(s)^2))`, whose height
//! `a(s) = q (s - s_pt)^2` falls to zero at the end of the path and whose
//! width grows with arc length, mean curvature and local speed. Hypotheses
//! are mixed by probability times a path-averaged virtual-mass severity.
//! Points whose projection clamps to either path end receive nothing.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::{PathGeometry, PathProjection, Point2};
use crate::predictor::HypothesisSet;
use crate::scenario::{AgentKind, AgentState};

/// Severity multiplier per agent class.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TypeFactors {
    pub car: f64,
    pub truck: f64,
    pub motorcycle: f64,
    pub pedestrian: f64,
    pub cyclist: f64,
}

impl Default for TypeFactors {
    fn default() -> Self {
        Self {
            car: 1.0,
            truck: 2.5,
            motorcycle: 0.7,
            pedestrian: 1.0,
            cyclist: 1.0,
        }
    }
}

impl TypeFactors {
    pub fn get(&self, kind: AgentKind) -> f64 {
        match kind {
            AgentKind::Car => self.car,
            AgentKind::Truck => self.truck,
            AgentKind::Motorcycle => self.motorcycle,
            AgentKind::Pedestrian => self.pedestrian,
            AgentKind::Cyclist => self.cyclist,
        }
    }

    fn all(&self) -> [f64; 5] {
        [self.car, self.truck, self.motorcycle, self.pedestrian, self.cyclist]
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct MafParams {
    /// Height coefficient, 1/m^2.
    pub q: f64,
    /// Width growth per meter of arc length.
    pub b: f64,
    /// Width growth per unit mean curvature, m.
    pub k: f64,
    /// Width at s = 0, m.
    pub c: f64,
    /// Width growth per m/s of speed, s.
    pub k_v: f64,
    pub sigma_min: f64,
    pub sigma_max: f64,
    pub alpha: f64,
    pub beta: f64,
    pub gamma_m: f64,
    pub type_factor: TypeFactors,
    /// Mass assumed for VRUs routed through this field without a mass.
    pub vru_mass_kg: f64,
}

impl Default for MafParams {
    fn default() -> Self {
        Self {
            q: 1.6e-7,
            b: 0.05,
            k: 10.0,
            c: 1.0,
            k_v: 0.15,
            sigma_min: 0.5,
            sigma_max: 8.0,
            alpha: 0.05,
            beta: 1.5,
            gamma_m: 1.0,
            type_factor: TypeFactors::default(),
            vru_mass_kg: 80.0,
        }
    }
}

impl MafParams {
    pub fn validate(&self) -> Result<()> {
        let finite = [
            self.q,
            self.b,
            self.k,
            self.c,
            self.k_v,
            self.sigma_min,
            self.sigma_max,
            self.alpha,
            self.beta,
            self.gamma_m,
            self.vru_mass_kg,
        ];
        if finite.iter().any(|v| !v.is_finite()) {
            return Err(Error::Config("maf parameters must be finite".into()));
        }
        if self.q < 0.0 {
            return Err(Error::Config("maf.q must be nonnegative".into()));
        }
        if self.c <= 0.0 {
            return Err(Error::Config("maf.c must be positive".into()));
        }
        if !(0.0 < self.sigma_min && self.sigma_min <= self.sigma_max) {
            return Err(Error::Config("maf requires 0 < sigma_min <= sigma_max".into()));
        }
        if self.type_factor.all().iter().any(|t| !(*t > 0.0 && t.is_finite())) {
            return Err(Error::Config("maf.type_factor values must be positive".into()));
        }
        if self.vru_mass_kg <= 0.0 {
            return Err(Error::Config("maf.vru_mass_kg must be positive".into()));
        }
        Ok(())
    }

    /// Copy with the speed-dependent widening switched off.
    pub fn without_velocity_width(&self) -> Self {
        Self {
            k_v: 0.0,
            ..self.clone()
        }
    }
}

/// Lateral standard deviation at arc length `s`, clamped to
/// `[sigma_min, sigma_max]`.
pub fn sigma(s: f64, path: &PathGeometry, params: &MafParams) -> f64 {
    sigma_at_speed(s, path.speed_at(s).unwrap_or(0.0), path, params)
}

fn sigma_at_speed(s: f64, v: f64, path: &PathGeometry, params: &MafParams) -> f64 {
    let raw = (params.b + params.k * path.mean_curvature()) * s + params.k_v * v.abs() + params.c;
    raw.clamp(params.sigma_min, params.sigma_max)
}

/// Cross-section height `q (s - s_pt)^2`.
pub fn height(s: f64, path: &PathGeometry, params: &MafParams) -> f64 {
    let r = s - path.total_length();
    params.q * r * r
}

#[inline]
fn value_at_projection(proj: PathProjection, path: &PathGeometry, params: &MafParams) -> f64 {
    let f = proj.frenet;
    if !f.in_domain {
        return 0.0;
    }
    let v = path.speed_on_segment(proj.segment, proj.t).unwrap_or(0.0);
    let sig = sigma_at_speed(f.s, v, path, params);
    height(f.s, path, params) * (-proj.dist_sq / (2.0 * sig * sig)).exp()
}

/// Field of one hypothesis centerline at `point` (unweighted).
pub fn maf_hypothesis(point: Point2, path: &PathGeometry, params: &MafParams) -> f64 {
    if path.is_degenerate() {
        return 0.0;
    }
    value_at_projection(path.project_detailed(point), path, params)
}

/// `m_v * T(kind) * (alpha |v|^beta + gamma_m)`.
pub fn virtual_mass(agent: &AgentState, v: f64, params: &MafParams) -> f64 {
    let mass = if agent.mass_kg > 0.0 {
        agent.mass_kg
    } else {
        params.vru_mass_kg
    };
    mass * params.type_factor.get(agent.kind) * (params.alpha * v.abs().powf(params.beta) + params.gamma_m)
}

/// Virtual mass averaged over arc length along the path (trapezoid rule on
/// the per-vertex speed profile). Zero-length paths, and paths without a
/// profile, use the agent's current speed.
pub fn path_severity(agent: &AgentState, path: &PathGeometry, params: &MafParams) -> f64 {
    let total = path.total_length();
    let speeds = match path.speeds() {
        Some(v) if total > 0.0 => v,
        _ => return virtual_mass(agent, agent.speed, params),
    };
    let cum = path.cum_arclength();
    let mut integral = 0.0;
    for i in 0..cum.len() - 1 {
        let m0 = virtual_mass(agent, speeds[i], params);
        let m1 = virtual_mass(agent, speeds[i + 1], params);
        integral += 0.5 * (m0 + m1) * (cum[i + 1] - cum[i]);
    }
    integral / total
}

/// How the per-hypothesis severity is computed.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SeverityMode {
    /// Average over the predicted path.
    #[default]
    PathAverage,
    /// Virtual mass at the speed of the first path sample only.
    CurrentSpeed,
}

/// Hypothesis centerline with its mixture weight `p * severity`.
#[derive(Debug, Clone)]
pub struct WeightedPath {
    pub path: PathGeometry,
    pub probability: f64,
    pub severity: f64,
    pub weight: f64,
}

/// Precomputed motorized-agent field for one agent.
#[derive(Debug, Clone)]
pub struct AgentMaf {
    pub params: MafParams,
    pub hypotheses: Vec<WeightedPath>,
}

impl AgentMaf {
    pub fn new(agent: &AgentState, set: &HypothesisSet, params: &MafParams, mode: SeverityMode) -> Self {
        let hypotheses = set
            .hypotheses()
            .iter()
            .map(|h| {
                let severity = match mode {
                    SeverityMode::PathAverage => path_severity(agent, &h.path, params),
                    SeverityMode::CurrentSpeed => {
                        let v0 = h.path.speed_at(0.0).unwrap_or(agent.speed);
                        virtual_mass(agent, v0, params)
                    }
                };
                WeightedPath {
                    path: h.path.clone(),
                    probability: h.probability,
                    severity,
                    weight: h.probability * severity,
                }
            })
            .collect();
        Self {
            params: params.clone(),
            hypotheses,
        }
    }

    pub fn value_at(&self, point: Point2) -> f64 {
        let mut sum = 0.0;
        for h in &self.hypotheses {
            sum += h.weight * maf_hypothesis(point, &h.path, &self.params);
        }
        sum
    }

    /// Adds the field at each of `points` into `out`. Equals calling
    /// [`value_at`](Self::value_at) per point, with projection hints carried
    /// along the slice.
    pub fn accumulate(&self, points: &[Point2], out: &mut [f64]) {
        for h in &self.hypotheses {
            if h.path.is_degenerate() {
                for o in out.iter_mut() {
                    *o += h.weight * 0.0;
                }
                continue;
            }
            let mut hint = usize::MAX;
            for (o, p) in out.iter_mut().zip(points) {
                let proj = h.path.project_hinted(*p, &mut hint);
                *o += h.weight * value_at_projection(proj, &h.path, &self.params);
            }
        }
    }

    /// Loose upper bound on the field anywhere.
    pub fn peak_bound(&self) -> f64 {
        self.hypotheses
            .iter()
            .map(|h| h.weight * self.params.q * h.path.total_length().powi(2))
            .sum()
    }
}

/// Probability- and severity-weighted mixture over all hypotheses.
pub fn maf_agent(point: Point2, hypotheses: &HypothesisSet, agent: &AgentState, params: &MafParams) -> f64 {
    AgentMaf::new(agent, hypotheses, params, SeverityMode::PathAverage).value_at(point)
}
