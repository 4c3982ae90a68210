#![allow(dead_code)]

use std::path::PathBuf;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use riskfield::field::{MafParams, RpfParams, VrfParams};
use riskfield::predictor::HypothesisSet;
use riskfield::scenario::LaneDirection;
use riskfield::{AgentState, Cell, EngineConfig, LaneGraph, Point2, RiskEngine, RiskGrid, ScenarioSequence};

pub fn fixture(name: &str) -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("fixtures").join(name)
}

pub fn load(name: &str) -> ScenarioSequence {
    riskfield::load_scenario(fixture(name)).unwrap_or_else(|e| panic!("{name}: {e}"))
}

pub fn engine(seq: &ScenarioSequence, preset: &str) -> RiskEngine {
    let cfg = EngineConfig::default().with_preset(preset).unwrap();
    RiskEngine::new(cfg, seq.map.clone()).unwrap()
}

pub fn rel_err(a: f64, b: f64) -> f64 {
    let scale = a.abs().max(b.abs());
    if scale == 0.0 {
        0.0
    } else {
        (a - b).abs() / scale
    }
}

pub fn random_cells(grid: &RiskGrid, n: usize, seed: u64) -> Vec<Cell> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..n)
        .map(|_| Cell::new(rng.random_range(0..grid.rows()), rng.random_range(0..grid.cols())))
        .collect()
}

// ---- motorized-agent field, evaluated straight from the formulas ----

struct Nearest {
    s: f64,
    dist_sq: f64,
    seg: usize,
    t: f64,
    in_domain: bool,
}

fn nearest_on_polyline(p: Point2, pts: &[Point2]) -> Nearest {
    let mut cum = vec![0.0];
    for w in pts.windows(2) {
        let (dx, dy) = (w[1].x - w[0].x, w[1].y - w[0].y);
        cum.push(cum.last().unwrap() + dx.hypot(dy));
    }
    let last = pts.len() - 2;
    let mut best: Option<Nearest> = None;
    for i in 0..=last {
        let (a, b) = (pts[i], pts[i + 1]);
        let (ex, ey) = (b.x - a.x, b.y - a.y);
        let (px, py) = (p.x - a.x, p.y - a.y);
        let t_raw = (px * ex + py * ey) / (ex * ex + ey * ey);
        let t = t_raw.clamp(0.0, 1.0);
        let (rx, ry) = (px - ex * t, py - ey * t);
        let dist_sq = rx * rx + ry * ry;
        if best.as_ref().is_none_or(|b| dist_sq < b.dist_sq) {
            let clamped = (i == 0 && t_raw < 0.0) || (i == last && t_raw > 1.0);
            best = Some(Nearest {
                s: cum[i] + t * (cum[i + 1] - cum[i]),
                dist_sq,
                seg: i,
                t,
                in_domain: !clamped,
            });
        }
    }
    best.unwrap()
}

fn menger(a: Point2, b: Point2, c: Point2) -> f64 {
    let ab = (b.x - a.x).hypot(b.y - a.y);
    let bc = (c.x - b.x).hypot(c.y - b.y);
    let ca = (a.x - c.x).hypot(a.y - c.y);
    let area2 = ((b.x - a.x) * (c.y - a.y) - (b.y - a.y) * (c.x - a.x)).abs();
    let den = ab * bc * ca;
    if den <= f64::EPSILON * f64::EPSILON {
        0.0
    } else {
        2.0 * area2 / den
    }
}

pub fn mean_menger(pts: &[Point2]) -> f64 {
    if pts.len() < 3 {
        return 0.0;
    }
    let sum: f64 = (0..pts.len() - 2).map(|i| menger(pts[i], pts[i + 1], pts[i + 2])).sum();
    sum / (pts.len() - 2) as f64
}

pub fn oracle_virtual_mass(agent: &AgentState, v: f64, p: &MafParams) -> f64 {
    let m = if agent.mass_kg > 0.0 { agent.mass_kg } else { p.vru_mass_kg };
    m * p.type_factor.get(agent.kind) * (p.alpha * v.abs().powf(p.beta) + p.gamma_m)
}

fn path_length(pts: &[Point2]) -> f64 {
    pts.windows(2).map(|w| (w[1].x - w[0].x).hypot(w[1].y - w[0].y)).sum()
}

pub fn oracle_severity(agent: &AgentState, pts: &[Point2], speeds: Option<&[f64]>, p: &MafParams) -> f64 {
    let total = path_length(pts);
    match speeds {
        Some(v) if total > 0.0 => {
            let mut acc = 0.0;
            for i in 0..pts.len() - 1 {
                let len = (pts[i + 1].x - pts[i].x).hypot(pts[i + 1].y - pts[i].y);
                acc += 0.5 * (oracle_virtual_mass(agent, v[i], p) + oracle_virtual_mass(agent, v[i + 1], p)) * len;
            }
            acc / total
        }
        _ => oracle_virtual_mass(agent, agent.speed, p),
    }
}

/// Single hypothesis, unweighted.
pub fn oracle_maf_path(point: Point2, pts: &[Point2], speeds: Option<&[f64]>, p: &MafParams) -> f64 {
    if pts.len() < 2 {
        return 0.0;
    }
    let n = nearest_on_polyline(point, pts);
    if !n.in_domain {
        return 0.0;
    }
    let v = speeds.map_or(0.0, |v| v[n.seg] + (v[n.seg + 1] - v[n.seg]) * n.t);
    let sigma = ((p.b + p.k * mean_menger(pts)) * n.s + p.k_v * v.abs() + p.c).clamp(p.sigma_min, p.sigma_max);
    let r = n.s - path_length(pts);
    p.q * r * r * (-n.dist_sq / (2.0 * sigma * sigma)).exp()
}

pub fn oracle_maf(point: Point2, agent: &AgentState, set: &HypothesisSet, p: &MafParams) -> f64 {
    set.hypotheses()
        .iter()
        .map(|h| {
            let pts = h.path.points();
            let speeds = h.path.speeds();
            h.probability * oracle_severity(agent, pts, speeds, p) * oracle_maf_path(point, pts, speeds, p)
        })
        .sum()
}

// ---- VRU field ----

pub fn oracle_vrf(point: Point2, vru: &AgentState, p: &VrfParams) -> f64 {
    let (c, s) = (vru.heading.cos(), vru.heading.sin());
    let shift = p.lambda_f * vru.speed;
    let (dx, dy) = (point.x - (vru.position.x + shift * c), point.y - (vru.position.y + shift * s));
    let u = (dx * c + dy * s) / (p.gamma_l + p.k_pl * vru.speed);
    let w = (-dx * s + dy * c) / p.delta_w;
    p.h / (u * u + w * w + 1.0)
}

// ---- road penalty ----

pub fn inside(p: Point2, poly: &[Point2]) -> bool {
    let mut odd = false;
    let n = poly.len();
    for i in 0..n {
        let (a, b) = (poly[i], poly[(i + 1) % n]);
        if (a.y > p.y) != (b.y > p.y) {
            let x = a.x + (p.y - a.y) * (b.x - a.x) / (b.y - a.y);
            if p.x < x {
                odd = !odd;
            }
        }
    }
    odd
}

fn dist_to_polyline(p: Point2, pts: &[Point2]) -> f64 {
    nearest_on_polyline(p, pts).dist_sq.sqrt()
}

pub fn oracle_rpf(point: Point2, map: &LaneGraph, p: &RpfParams) -> f64 {
    let on_road = map.drivable_area.is_empty() || map.drivable_area.iter().any(|poly| inside(point, poly));
    let mut total = if on_road { 0.0 } else { p.lambda_off };
    for lane in &map.lanes {
        let (lambda, sigma) = match lane.direction {
            LaneDirection::Same if lane.id == map.ego_lane_id && !p.include_ego_lane => continue,
            LaneDirection::Same => (p.lambda_same, p.sigma_same),
            LaneDirection::Opposite => (p.lambda_opp, p.sigma_opp),
        };
        let d = dist_to_polyline(point, &lane.centerline);
        total += lambda * (-d * d / (2.0 * sigma * sigma)).exp();
    }
    total
}

/// `(s, |d|, in_domain)` of the closest point by scanning every segment.
pub fn oracle_project(p: Point2, pts: &[Point2]) -> (f64, f64, bool) {
    let n = nearest_on_polyline(p, pts);
    (n.s, n.dist_sq.sqrt(), n.in_domain)
}
