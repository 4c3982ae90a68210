//! Multimodal trajectory hypotheses for motorized agents.
//!
//! A [`Predictor`] turns one agent state into a probability-weighted set of
//! centerlines with speed profiles. Two analytic predictors ship built in
//! (`cv3`: straight plus left/right constant-turn arcs, `cv`: straight only)
//! and more can be added through [`PredictorRegistry`]. Externally computed
//! hypotheses can be injected per frame with [`HypothesisOverrides`].

use std::collections::{BTreeMap, HashMap};
use std::fs;
use std::path::Path;
use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::{PathGeometry, Point2};
use crate::scenario::AgentState;

#[derive(Debug, Clone)]
pub struct TrajectoryHypothesis {
    pub path: PathGeometry,
    pub probability: f64,
}

/// Hypotheses whose probabilities sum to one.
#[derive(Debug, Clone)]
pub struct HypothesisSet {
    hypotheses: Vec<TrajectoryHypothesis>,
}

impl HypothesisSet {
    /// Renormalizes the given weights so they sum to one.
    pub fn new(mut hypotheses: Vec<TrajectoryHypothesis>) -> Result<Self> {
        if hypotheses.is_empty() {
            return Err(Error::Contract("hypothesis set must not be empty".into()));
        }
        if hypotheses
            .iter()
            .any(|h| !(h.probability.is_finite() && h.probability >= 0.0))
        {
            return Err(Error::Contract(
                "hypothesis probabilities must be finite and nonnegative".into(),
            ));
        }
        let total: f64 = hypotheses.iter().map(|h| h.probability).sum();
        if total <= 0.0 {
            return Err(Error::Contract("hypothesis probabilities sum to zero".into()));
        }
        for h in &mut hypotheses {
            h.probability /= total;
        }
        Ok(Self { hypotheses })
    }

    pub fn hypotheses(&self) -> &[TrajectoryHypothesis] {
        &self.hypotheses
    }

    pub fn len(&self) -> usize {
        self.hypotheses.len()
    }

    pub fn is_empty(&self) -> bool {
        self.hypotheses.is_empty()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PredictorConfig {
    /// Registry name of the predictor to use.
    pub name: String,
    /// Seconds.
    pub horizon: f64,
    /// Sampling step of the hypothesis polylines, seconds.
    pub dt: f64,
    /// Yaw rate of the turning modes, rad/s.
    pub turn_rate: f64,
    /// Weights of the straight, left and right modes.
    pub probabilities: [f64; 3],
}

impl Default for PredictorConfig {
    fn default() -> Self {
        Self {
            name: "cv3".into(),
            horizon: 4.0,
            dt: 0.1,
            turn_rate: 0.2,
            probabilities: [0.6, 0.2, 0.2],
        }
    }
}

impl PredictorConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.horizon > 0.0 && self.horizon.is_finite()) {
            return Err(Error::Config("predictor.horizon must be positive".into()));
        }
        if !(self.dt > 0.0 && self.dt.is_finite()) {
            return Err(Error::Config("predictor.dt must be positive".into()));
        }
        if !self.turn_rate.is_finite() {
            return Err(Error::Config("predictor.turn_rate must be finite".into()));
        }
        if self.probabilities.iter().any(|p| !(p.is_finite() && *p >= 0.0))
            || self.probabilities.iter().sum::<f64>() <= 0.0
        {
            return Err(Error::Config(
                "predictor.probabilities must be nonnegative with a positive sum".into(),
            ));
        }
        Ok(())
    }
}

pub trait Predictor: Send + Sync {
    fn name(&self) -> &str;

    fn predict(&self, agent: &AgentState, horizon: f64, dt: f64) -> Result<HypothesisSet>;
}

fn check_inputs(agent: &AgentState, horizon: f64, dt: f64) -> Result<()> {
    if !agent.kind.is_motorized() {
        return Err(Error::Contract(format!(
            "predictor called on non-motorized agent `{}` ({})",
            agent.id,
            agent.kind.as_str()
        )));
    }
    if !(horizon > 0.0 && dt > 0.0) {
        return Err(Error::Contract("horizon and dt must be positive".into()));
    }
    Ok(())
}

fn sample_times(horizon: f64, dt: f64) -> Vec<f64> {
    let steps = (horizon / dt - 1e-9).ceil().max(1.0) as usize;
    (0..=steps).map(|k| (k as f64 * dt).min(horizon)).collect()
}

/// Constant-speed rollout at yaw rate `omega` (straight when zero).
fn constant_turn_path(agent: &AgentState, omega: f64, horizon: f64, dt: f64) -> Result<PathGeometry> {
    let v = agent.speed;
    if v == 0.0 {
        return PathGeometry::new(vec![agent.position], Some(vec![0.0]));
    }
    let times = sample_times(horizon, dt);
    let p0 = agent.position;
    let th0 = agent.heading;
    let points: Vec<Point2> = times
        .iter()
        .map(|&t| {
            if omega == 0.0 {
                p0 + Point2::from_angle(th0) * (v * t)
            } else {
                let th = th0 + omega * t;
                let r = v / omega;
                Point2::new(
                    p0.x + r * (th.sin() - th0.sin()),
                    p0.y - r * (th.cos() - th0.cos()),
                )
            }
        })
        .collect();
    let speeds = vec![v; points.len()];
    PathGeometry::new(points, Some(speeds))
}

/// Single straight constant-velocity hypothesis. Applies to any agent kind.
pub fn constant_velocity_hypotheses(agent: &AgentState, horizon: f64, dt: f64) -> Result<HypothesisSet> {
    HypothesisSet::new(vec![TrajectoryHypothesis {
        path: constant_turn_path(agent, 0.0, horizon, dt)?,
        probability: 1.0,
    }])
}

/// Straight, left-arc and right-arc modes at constant speed.
#[derive(Debug, Clone)]
pub struct ConstantTurnPredictor {
    pub turn_rate: f64,
    pub probabilities: [f64; 3],
}

impl Predictor for ConstantTurnPredictor {
    fn name(&self) -> &str {
        "cv3"
    }

    fn predict(&self, agent: &AgentState, horizon: f64, dt: f64) -> Result<HypothesisSet> {
        check_inputs(agent, horizon, dt)?;
        let modes = [0.0, self.turn_rate, -self.turn_rate];
        let hypotheses = modes
            .iter()
            .zip(self.probabilities)
            .map(|(&omega, probability)| {
                Ok(TrajectoryHypothesis {
                    path: constant_turn_path(agent, omega, horizon, dt)?,
                    probability,
                })
            })
            .collect::<Result<Vec<_>>>()?;
        HypothesisSet::new(hypotheses)
    }
}

#[derive(Debug, Clone, Default)]
pub struct ConstantVelocityPredictor;

impl Predictor for ConstantVelocityPredictor {
    fn name(&self) -> &str {
        "cv"
    }

    fn predict(&self, agent: &AgentState, horizon: f64, dt: f64) -> Result<HypothesisSet> {
        check_inputs(agent, horizon, dt)?;
        constant_velocity_hypotheses(agent, horizon, dt)
    }
}

/// Default three-mode prediction with the given configuration.
pub fn predict(agent: &AgentState, horizon: f64, dt: f64, config: &PredictorConfig) -> Result<HypothesisSet> {
    ConstantTurnPredictor {
        turn_rate: config.turn_rate,
        probabilities: config.probabilities,
    }
    .predict(agent, horizon, dt)
}

pub type PredictorFactory =
    Arc<dyn Fn(&PredictorConfig) -> Result<Box<dyn Predictor>> + Send + Sync>;

/// Name-indexed predictor constructors.
#[derive(Clone, Default)]
pub struct PredictorRegistry {
    factories: BTreeMap<String, PredictorFactory>,
}

impl PredictorRegistry {
    pub fn empty() -> Self {
        Self::default()
    }

    /// Registry holding `cv3` and `cv`.
    pub fn with_builtins() -> Self {
        let mut reg = Self::empty();
        let cv3: PredictorFactory = Arc::new(|cfg: &PredictorConfig| {
            Ok(Box::new(ConstantTurnPredictor {
                turn_rate: cfg.turn_rate,
                probabilities: cfg.probabilities,
            }) as Box<dyn Predictor>)
        });
        let cv: PredictorFactory =
            Arc::new(|_: &PredictorConfig| Ok(Box::new(ConstantVelocityPredictor) as Box<dyn Predictor>));
        reg.factories.insert("cv3".into(), cv3);
        reg.factories.insert("cv".into(), cv);
        reg
    }

    pub fn register(&mut self, name: impl Into<String>, factory: PredictorFactory) -> Result<()> {
        let name = name.into();
        if self.factories.contains_key(&name) {
            return Err(Error::DuplicatePredictor(name));
        }
        self.factories.insert(name, factory);
        Ok(())
    }

    pub fn names(&self) -> Vec<String> {
        self.factories.keys().cloned().collect()
    }

    /// Instantiates the predictor named in `config`.
    pub fn build(&self, config: &PredictorConfig) -> Result<Box<dyn Predictor>> {
        match self.factories.get(&config.name) {
            Some(factory) => factory(config),
            None => Err(Error::UnknownPredictor {
                name: config.name.clone(),
                available: self.names(),
            }),
        }
    }
}

impl std::fmt::Debug for PredictorRegistry {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("PredictorRegistry")
            .field("names", &self.names())
            .finish()
    }
}

// ---------------------------------------------------------------------------
// Override file
// ---------------------------------------------------------------------------

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct HypothesisRecord {
    pub probability: f64,
    pub points: Vec<Point2>,
    /// Per-point speed, m/s. Defaults to the agent's current speed.
    #[serde(default)]
    pub speeds: Option<Vec<f64>>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OverrideRecord {
    pub frame: usize,
    pub agent: String,
    pub hypotheses: Vec<HypothesisRecord>,
}

#[derive(Debug, Clone, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OverrideFile {
    pub overrides: Vec<OverrideRecord>,
}

/// Precomputed hypotheses keyed by `(frame index, agent id)`; these replace
/// the configured predictor for the matching agents.
#[derive(Debug, Clone, Default)]
pub struct HypothesisOverrides {
    entries: HashMap<(usize, String), Vec<HypothesisRecord>>,
}

impl HypothesisOverrides {
    pub fn from_file_data(file: OverrideFile) -> Result<Self> {
        let mut entries = HashMap::new();
        for rec in file.overrides {
            if rec.hypotheses.is_empty() {
                return Err(Error::Validation(format!(
                    "override for frame {} agent `{}` has no hypotheses",
                    rec.frame, rec.agent
                )));
            }
            let key = (rec.frame, rec.agent.clone());
            if entries.insert(key, rec.hypotheses).is_some() {
                return Err(Error::Validation(format!(
                    "duplicate override for frame {} agent `{}`",
                    rec.frame, rec.agent
                )));
            }
        }
        Ok(Self { entries })
    }

    pub fn parse(text: &str) -> Result<Self> {
        let file: OverrideFile = serde_json::from_str(text).map_err(|e| Error::Parse(e.to_string()))?;
        Self::from_file_data(file)
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::parse(&text)
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn get(&self, frame: usize, agent: &AgentState) -> Option<Result<HypothesisSet>> {
        let records = self.entries.get(&(frame, agent.id.clone()))?;
        let build = || {
            let hyps = records
                .iter()
                .map(|r| {
                    let speeds = r
                        .speeds
                        .clone()
                        .unwrap_or_else(|| vec![agent.speed; r.points.len()]);
                    Ok(TrajectoryHypothesis {
                        path: PathGeometry::new(r.points.clone(), Some(speeds))?,
                        probability: r.probability,
                    })
                })
                .collect::<Result<Vec<_>>>()?;
            HypothesisSet::new(hyps)
        };
        Some(build())
    }
}
