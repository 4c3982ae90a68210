//! Sampling-based MPC over a kinematic bicycle, with the risk grid as a
//! running cost density.
//!
//! The objective is
//! `J = alpha * sum_{t=0..=H} risk(x_t) + beta * sum_t |u_t|_R^2 + gamma * sum_{t>=1} |u_t - u_{t-1}|_S^2`
//! and is minimized by cross-entropy resampling: each iteration draws `K`
//! control sequences from a per-step Gaussian, keeps the lowest-cost
//! elites, and refits the Gaussian to them.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::Point2;
use crate::raster::RiskGrid;

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct EgoState {
    pub x: f64,
    pub y: f64,
    pub heading: f64,
    pub speed: f64,
}

impl EgoState {
    pub fn position(&self) -> Point2 {
        Point2::new(self.x, self.y)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct Control {
    /// m/s^2.
    pub accel: f64,
    /// Front-wheel angle, radians.
    pub steer: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PlannerWeights {
    pub alpha_risk: f64,
    pub beta_effort: f64,
    pub gamma_smooth: f64,
    /// Diagonal of `R` as `[accel, steer]`.
    pub r_diag: [f64; 2],
    /// Diagonal of `S` as `[accel, steer]`.
    pub s_diag: [f64; 2],
    /// Steps.
    pub horizon: usize,
    pub dt: f64,
    pub wheelbase: f64,
}

impl Default for PlannerWeights {
    fn default() -> Self {
        Self {
            alpha_risk: 1.0,
            beta_effort: 1.0,
            gamma_smooth: 1.0,
            r_diag: [1.0, 1.0],
            s_diag: [1.0, 1.0],
            horizon: 30,
            dt: 0.1,
            wheelbase: 2.8,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ControlBounds {
    pub accel_min: f64,
    pub accel_max: f64,
    pub steer_max: f64,
    pub speed_min: f64,
    pub speed_max: f64,
}

impl Default for ControlBounds {
    fn default() -> Self {
        Self {
            accel_min: -4.0,
            accel_max: 2.0,
            steer_max: 0.5,
            speed_min: 0.0,
            speed_max: 20.0,
        }
    }
}

impl ControlBounds {
    pub fn clamp(&self, u: Control) -> Control {
        Control {
            accel: u.accel.clamp(self.accel_min, self.accel_max),
            steer: u.steer.clamp(-self.steer_max, self.steer_max),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FootprintMode {
    #[default]
    Max,
    Mean,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct FootprintConfig {
    pub length: f64,
    pub width: f64,
    /// Sample points per box axis; the footprint uses the square of this.
    pub points_per_axis: usize,
    pub mode: FootprintMode,
    /// Cost of sample points outside the grid. Defaults to the road
    /// field's off-road penalty when composed through the engine.
    pub off_grid_penalty: Option<f64>,
}

impl Default for FootprintConfig {
    fn default() -> Self {
        Self {
            length: 4.5,
            width: 1.9,
            points_per_axis: 3,
            mode: FootprintMode::Max,
            off_grid_penalty: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SolverConfig {
    pub samples: usize,
    pub iterations: usize,
    pub elite_fraction: f64,
    /// Initial sampling standard deviation as `[accel, steer]`.
    pub init_std: [f64; 2],
    pub min_std: [f64; 2],
}

impl Default for SolverConfig {
    fn default() -> Self {
        Self {
            samples: 256,
            iterations: 8,
            elite_fraction: 0.125,
            init_std: [1.0, 0.2],
            min_std: [0.01, 0.002],
        }
    }
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PlannerConfig {
    pub weights: PlannerWeights,
    pub bounds: ControlBounds,
    pub footprint: FootprintConfig,
    pub solver: SolverConfig,
}

impl PlannerConfig {
    pub fn validate(&self) -> Result<()> {
        let w = &self.weights;
        let fin = |v: f64| v.is_finite();
        if ![w.alpha_risk, w.beta_effort, w.gamma_smooth].iter().all(|v| fin(*v) && *v >= 0.0) {
            return Err(Error::Config("planner weights must be nonnegative".into()));
        }
        if !w.r_diag.iter().chain(&w.s_diag).all(|v| fin(*v) && *v > 0.0) {
            return Err(Error::Config("planner R and S diagonals must be positive".into()));
        }
        if w.horizon == 0 {
            return Err(Error::Config("planner horizon must be at least 1".into()));
        }
        if !(w.dt > 0.0 && fin(w.dt)) || !(w.wheelbase > 0.0 && fin(w.wheelbase)) {
            return Err(Error::Config("planner dt and wheelbase must be positive".into()));
        }
        let b = &self.bounds;
        if !(b.accel_min <= b.accel_max && fin(b.accel_min) && fin(b.accel_max)) {
            return Err(Error::Config("planner bounds: accel_min must not exceed accel_max".into()));
        }
        if !(b.steer_max >= 0.0 && b.steer_max < std::f64::consts::FRAC_PI_2) {
            return Err(Error::Config("planner bounds: steer_max must lie in [0, pi/2)".into()));
        }
        if !(b.speed_min >= 0.0 && b.speed_min <= b.speed_max && fin(b.speed_max)) {
            return Err(Error::Config("planner bounds: need 0 <= speed_min <= speed_max".into()));
        }
        let f = &self.footprint;
        if !(f.length > 0.0 && f.width > 0.0) || f.points_per_axis == 0 {
            return Err(Error::Config("planner footprint must have positive size and points".into()));
        }
        if let Some(p) = f.off_grid_penalty {
            if !(p >= 0.0 && fin(p)) {
                return Err(Error::Config("planner off_grid_penalty must be nonnegative".into()));
            }
        }
        let s = &self.solver;
        if s.samples == 0 || s.iterations == 0 {
            return Err(Error::Config("planner solver needs samples and iterations".into()));
        }
        if !(s.elite_fraction > 0.0 && s.elite_fraction <= 1.0) {
            return Err(Error::Config("planner elite_fraction must lie in (0, 1]".into()));
        }
        if !s.init_std.iter().chain(&s.min_std).all(|v| fin(*v) && *v >= 0.0) {
            return Err(Error::Config("planner standard deviations must be nonnegative".into()));
        }
        Ok(())
    }
}

/// Kinematic bicycle step. Position and heading advance with the speed at
/// the start of the step; the speed is updated last and clamped.
pub fn step_dynamics(state: EgoState, u: Control, dt: f64, wheelbase: f64, bounds: &ControlBounds) -> EgoState {
    let v = state.speed;
    EgoState {
        x: state.x + v * state.heading.cos() * dt,
        y: state.y + v * state.heading.sin() * dt,
        heading: state.heading + v / wheelbase * u.steer.tan() * dt,
        speed: (v + u.accel * dt).clamp(bounds.speed_min, bounds.speed_max),
    }
}

pub fn rollout(start: EgoState, controls: &[Control], weights: &PlannerWeights, bounds: &ControlBounds) -> Vec<EgoState> {
    let mut states = Vec::with_capacity(controls.len() + 1);
    states.push(start);
    let mut s = start;
    for u in controls {
        s = step_dynamics(s, *u, weights.dt, weights.wheelbase, bounds);
        states.push(s);
    }
    states
}

/// Points covering the oriented ego box, `n x n` cell midpoints.
pub fn footprint_points(state: &EgoState, length: f64, width: f64, n: usize) -> Vec<Point2> {
    let c = state.position();
    let t = Point2::from_angle(state.heading);
    let nrm = t.perp();
    let mut out = Vec::with_capacity(n * n);
    for i in 0..n {
        let a = ((i as f64 + 0.5) / n as f64 - 0.5) * length;
        for j in 0..n {
            let b = ((j as f64 + 0.5) / n as f64 - 0.5) * width;
            out.push(c + t * a + nrm * b);
        }
    }
    out
}

/// Aggregated field value over the ego footprint.
pub fn sample_field(grid: &RiskGrid, state: &EgoState, footprint: &FootprintConfig, off_grid: f64) -> f64 {
    let pts = footprint_points(state, footprint.length, footprint.width, footprint.points_per_axis);
    let values = pts.iter().map(|p| grid.sample_bilinear(*p).unwrap_or(off_grid));
    match footprint.mode {
        FootprintMode::Max => values.fold(f64::NEG_INFINITY, f64::max),
        FootprintMode::Mean => values.sum::<f64>() / pts.len() as f64,
    }
}

fn quad(u: Control, diag: [f64; 2]) -> f64 {
    diag[0] * u.accel * u.accel + diag[1] * u.steer * u.steer
}

/// Per-step cost terms. Entry `t < H` covers state `x_t`, control `u_t`
/// and the change from `u_{t-1}`; the last entry is the risk at `x_H`.
pub fn stage_costs(
    states: &[EgoState],
    controls: &[Control],
    fields: &[&RiskGrid],
    config: &PlannerConfig,
    off_grid: f64,
) -> Vec<f64> {
    let w = &config.weights;
    states
        .iter()
        .enumerate()
        .map(|(t, x)| {
            let field = fields[t.min(fields.len() - 1)];
            let mut c = w.alpha_risk * sample_field(field, x, &config.footprint, off_grid);
            if let Some(u) = controls.get(t) {
                c += w.beta_effort * quad(*u, w.r_diag);
                if t > 0 {
                    let prev = controls[t - 1];
                    let du = Control {
                        accel: u.accel - prev.accel,
                        steer: u.steer - prev.steer,
                    };
                    c += w.gamma_smooth * quad(du, w.s_diag);
                }
            }
            c
        })
        .collect()
}

pub fn total_cost(
    start: EgoState,
    controls: &[Control],
    fields: &[&RiskGrid],
    config: &PlannerConfig,
    off_grid: f64,
) -> f64 {
    let states = rollout(start, controls, &config.weights, &config.bounds);
    stage_costs(&states, controls, fields, config, off_grid).iter().sum()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PlanResult {
    pub controls: Vec<Control>,
    pub states: Vec<EgoState>,
    pub stage_costs: Vec<f64>,
    pub cost: f64,
    /// Best cost after each solver iteration.
    pub cost_history: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrajectoryStep {
    pub step: usize,
    pub t: f64,
    pub state: EgoState,
    pub control: Option<Control>,
    pub stage_cost: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrajectoryExport {
    pub dt: f64,
    pub cost: f64,
    pub cost_history: Vec<f64>,
    pub steps: Vec<TrajectoryStep>,
}

impl PlanResult {
    pub fn export(&self, dt: f64) -> TrajectoryExport {
        let steps = self
            .states
            .iter()
            .enumerate()
            .map(|(i, s)| TrajectoryStep {
                step: i,
                t: i as f64 * dt,
                state: *s,
                control: self.controls.get(i).copied(),
                stage_cost: self.stage_costs[i],
            })
            .collect();
        TrajectoryExport {
            dt,
            cost: self.cost,
            cost_history: self.cost_history.clone(),
            steps,
        }
    }
}

fn check_start(start: &EgoState, bounds: &ControlBounds) -> Result<()> {
    if !(start.x.is_finite() && start.y.is_finite() && start.heading.is_finite()) {
        return Err(Error::Validation("planner start state must be finite".into()));
    }
    if !(start.speed >= bounds.speed_min && start.speed <= bounds.speed_max) {
        return Err(Error::Validation(format!(
            "start speed {} outside [{}, {}]",
            start.speed, bounds.speed_min, bounds.speed_max
        )));
    }
    Ok(())
}

/// Plans against a single static field.
pub fn plan(start: EgoState, grid: &RiskGrid, config: &PlannerConfig, off_grid: f64, seed: u64) -> Result<PlanResult> {
    plan_with_fields(start, &[grid], config, off_grid, seed)
}

/// Plans against a per-step field sequence; step `t` uses
/// `fields[min(t, len - 1)]`.
pub fn plan_with_fields(
    start: EgoState,
    fields: &[&RiskGrid],
    config: &PlannerConfig,
    off_grid: f64,
    seed: u64,
) -> Result<PlanResult> {
    config.validate()?;
    check_start(&start, &config.bounds)?;
    if fields.is_empty() {
        return Err(Error::Validation("planner needs at least one field".into()));
    }
    let h = config.weights.horizon;
    let solver = &config.solver;
    let bounds = &config.bounds;
    let n_elite = ((solver.elite_fraction * solver.samples as f64).ceil() as usize).clamp(1, solver.samples);

    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut mean = vec![Control::default(); h];
    let mut std = vec![
        Control {
            accel: solver.init_std[0],
            steer: solver.init_std[1],
        };
        h
    ];
    let mut best: Option<(f64, Vec<Control>)> = None;
    let mut history = Vec::with_capacity(solver.iterations);

    for _ in 0..solver.iterations {
        let mut candidates: Vec<Vec<Control>> = Vec::with_capacity(solver.samples + 1);
        candidates.push(mean.iter().map(|u| bounds.clamp(*u)).collect());
        for _ in 0..solver.samples {
            let seq = mean
                .iter()
                .zip(&std)
                .map(|(m, s)| {
                    let za: f64 = StandardNormal.sample(&mut rng);
                    let zs: f64 = StandardNormal.sample(&mut rng);
                    bounds.clamp(Control {
                        accel: m.accel + s.accel * za,
                        steer: m.steer + s.steer * zs,
                    })
                })
                .collect();
            candidates.push(seq);
        }
        let costs: Vec<f64> = candidates
            .par_iter()
            .map(|c| total_cost(start, c, fields, config, off_grid))
            .collect();
        let mut order: Vec<usize> = (0..candidates.len()).collect();
        order.sort_by(|&a, &b| costs[a].total_cmp(&costs[b]).then(a.cmp(&b)));

        let top = order[0];
        if best.as_ref().is_none_or(|(c, _)| costs[top] < *c) {
            best = Some((costs[top], candidates[top].clone()));
        }
        history.push(best.as_ref().map(|b| b.0).unwrap_or(f64::INFINITY));

        let elites = &order[..n_elite.min(order.len())];
        let k = elites.len() as f64;
        for t in 0..h {
            let ma = elites.iter().map(|&i| candidates[i][t].accel).sum::<f64>() / k;
            let ms = elites.iter().map(|&i| candidates[i][t].steer).sum::<f64>() / k;
            let va = elites.iter().map(|&i| (candidates[i][t].accel - ma).powi(2)).sum::<f64>() / k;
            let vs = elites.iter().map(|&i| (candidates[i][t].steer - ms).powi(2)).sum::<f64>() / k;
            mean[t] = Control { accel: ma, steer: ms };
            std[t] = Control {
                accel: va.sqrt().max(solver.min_std[0]),
                steer: vs.sqrt().max(solver.min_std[1]),
            };
        }
    }

    let (_, controls) = best.expect("at least one iteration");
    let states = rollout(start, &controls, &config.weights, bounds);
    let stage = stage_costs(&states, &controls, fields, config, off_grid);
    let cost = stage.iter().sum();
    Ok(PlanResult {
        controls,
        states,
        stage_costs: stage,
        cost,
        cost_history: history,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::GridSpec;

    fn bounds() -> ControlBounds {
        ControlBounds::default()
    }

    #[test]
    fn zero_speed_zero_control_is_fixed_point() {
        let s = EgoState {
            x: 1.0,
            y: 2.0,
            heading: 0.3,
            speed: 0.0,
        };
        assert_eq!(step_dynamics(s, Control::default(), 0.1, 2.8, &bounds()), s);
    }

    #[test]
    fn speed_updates_after_position() {
        let s = EgoState::default();
        let n = step_dynamics(s, Control { accel: 1.0, steer: 0.0 }, 1.0, 2.8, &bounds());
        assert_eq!(n.speed, 1.0);
        assert_eq!(n.x, 0.0);
    }

    #[test]
    fn constant_grid_samples_constant() {
        let g = RiskGrid::constant(GridSpec::new(Point2::new(0.0, 0.0), 10.0, 0.25, 0.0), 0.7);
        let s = EgoState {
            x: 1.0,
            y: -1.0,
            heading: 0.4,
            speed: 3.0,
        };
        for mode in [FootprintMode::Max, FootprintMode::Mean] {
            let fp = FootprintConfig {
                mode,
                ..FootprintConfig::default()
            };
            assert!((sample_field(&g, &s, &fp, 5.0) - 0.7).abs() < 1e-15);
        }
    }

    #[test]
    fn effort_only_optimum_is_zero() {
        let g = RiskGrid::zeros(GridSpec::new(Point2::new(0.0, 0.0), 20.0, 0.5, 0.0));
        let mut cfg = PlannerConfig::default();
        cfg.weights.alpha_risk = 0.0;
        cfg.solver.samples = 32;
        cfg.solver.iterations = 3;
        let start = EgoState {
            speed: 5.0,
            ..EgoState::default()
        };
        let r = plan(start, &g, &cfg, 5.0, 1).unwrap();
        assert_eq!(r.cost, 0.0);
        assert!(r.controls.iter().all(|u| *u == Control::default()));
    }

    #[test]
    fn infeasible_bounds_rejected() {
        let mut cfg = PlannerConfig::default();
        cfg.bounds.accel_min = 3.0;
        assert!(cfg.validate().is_err());
    }
}
