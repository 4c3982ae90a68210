//! Per-frame scene composition, visibility filtering and actor scoring.

use std::collections::BTreeMap;
use std::sync::Arc;

use rayon::prelude::*;

use crate::config::{EngineConfig, ScoreMode};
use crate::error::Result;
use crate::field::{AgentMaf, MafParams, RoadField, RpfCache, VruMotion};
use crate::field::rpf::StaticLayers;
use crate::geometry::{rasterize_footprint, GridSpec, Point2};
use crate::metrics::{ActorScoreSeries, FrameScores};
use crate::predictor::{constant_velocity_hypotheses, HypothesisOverrides, Predictor, PredictorRegistry};
use crate::raster::RiskGrid;
use crate::scenario::{AgentState, LaneGraph, ScenarioFrame, ScenarioSequence};
use crate::visibility::{compute_visibility, filter_visible, VisibilityPolygon};

/// Which component an actor's own field lives in.
#[derive(Debug, Clone)]
pub enum ActorField {
    Maf(AgentMaf),
    Vrf(VruMotion),
    /// Agent with no active field under the current switches.
    None,
}

/// Per-agent fields of one frame, in frame order.
#[derive(Debug, Clone)]
pub struct FrameFields {
    pub ids: Vec<String>,
    pub fields: Vec<ActorField>,
}

impl FrameFields {
    pub fn mafs(&self) -> Vec<&AgentMaf> {
        self.fields
            .iter()
            .filter_map(|f| match f {
                ActorField::Maf(m) => Some(m),
                _ => None,
            })
            .collect()
    }

    pub fn vrus(&self) -> Vec<VruMotion> {
        self.fields
            .iter()
            .filter_map(|f| match f {
                ActorField::Vrf(v) => Some(*v),
                _ => None,
            })
            .collect()
    }
}

/// Component grids and their sum for one frame.
#[derive(Debug, Clone)]
pub struct ComposedFrame {
    pub grid: GridSpec,
    pub maf: RiskGrid,
    pub vrf: RiskGrid,
    pub rpf: Arc<RiskGrid>,
    pub total: RiskGrid,
    pub fields: FrameFields,
    pub drivable: Arc<Vec<bool>>,
}

#[derive(Debug, Clone)]
pub struct FrameEvaluation {
    pub composed: ComposedFrame,
    pub polygon: VisibilityPolygon,
    pub visible: Vec<String>,
    pub masked: RiskGrid,
    /// Score of each visible non-ego actor.
    pub scores: BTreeMap<String, f64>,
}

/// Composes scene fields for one map under one configuration.
pub struct RiskEngine {
    config: EngineConfig,
    maf_params: MafParams,
    map: LaneGraph,
    road: RoadField,
    cache: RpfCache,
    predictor: Box<dyn Predictor>,
    overrides: Option<HypothesisOverrides>,
}

impl std::fmt::Debug for RiskEngine {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("RiskEngine")
            .field("predictor", &self.predictor.name())
            .field("config_hash", &self.config.hash())
            .finish_non_exhaustive()
    }
}

impl RiskEngine {
    pub fn new(config: EngineConfig, map: LaneGraph) -> Result<Self> {
        Self::with_registry(config, map, &PredictorRegistry::with_builtins())
    }

    pub fn with_registry(config: EngineConfig, map: LaneGraph, registry: &PredictorRegistry) -> Result<Self> {
        config.validate()?;
        map.validate()?;
        let predictor = registry.build(&config.predictor)?;
        let road = RoadField::new(&map, &config.rpf);
        Ok(Self {
            maf_params: config.effective_maf(),
            config,
            map,
            road,
            cache: RpfCache::default(),
            predictor,
            overrides: None,
        })
    }

    pub fn with_overrides(mut self, overrides: HypothesisOverrides) -> Self {
        self.overrides = Some(overrides);
        self
    }

    pub fn config(&self) -> &EngineConfig {
        &self.config
    }

    pub fn map(&self) -> &LaneGraph {
        &self.map
    }

    pub fn road(&self) -> &RoadField {
        &self.road
    }

    /// Number of static-layer recomputations so far.
    pub fn rpf_cache_misses(&self) -> usize {
        self.cache.misses()
    }

    pub fn grid_for(&self, frame: &ScenarioFrame) -> GridSpec {
        self.config.grid.spec_for(&frame.ego)
    }

    pub fn static_layers(&self, grid: &GridSpec) -> StaticLayers {
        self.cache.get_or_compute(&self.road, grid)
    }

    /// Builds each non-ego agent's field. `frame_index` selects hypothesis
    /// overrides.
    pub fn agent_fields(&self, frame_index: usize, frame: &ScenarioFrame) -> Result<FrameFields> {
        let flags = &self.config.ablation;
        let mode = flags.severity_mode();
        let p = &self.config.predictor;
        let mut ids = Vec::with_capacity(frame.agents.len());
        let mut fields = Vec::with_capacity(frame.agents.len());
        for agent in &frame.agents {
            let field = if agent.kind.is_motorized() {
                if flags.enable_maf {
                    let set = match self.overrides.as_ref().and_then(|o| o.get(frame_index, agent)) {
                        Some(set) => set?,
                        None => self.predictor.predict(agent, p.horizon, p.dt)?,
                    };
                    ActorField::Maf(AgentMaf::new(agent, &set, &self.maf_params, mode))
                } else {
                    ActorField::None
                }
            } else if flags.enable_vrf {
                ActorField::Vrf(VruMotion::of_agent(agent))
            } else if flags.vru_maf_fallback && flags.enable_maf {
                let set = constant_velocity_hypotheses(agent, p.horizon, p.dt)?;
                ActorField::Maf(AgentMaf::new(agent, &set, &self.maf_params, mode))
            } else {
                ActorField::None
            };
            ids.push(agent.id.clone());
            fields.push(field);
        }
        Ok(FrameFields { ids, fields })
    }

    pub fn compose_frame(&self, frame_index: usize, frame: &ScenarioFrame) -> Result<ComposedFrame> {
        let grid = self.grid_for(frame);
        let fields = self.agent_fields(frame_index, frame)?;
        let layers = self.static_layers(&grid);
        let scale = self.config.global_scale;

        let maf = rasterize_maf(&fields.mafs(), &grid, scale);
        let vrf = rasterize_vrf(&fields.vrus(), &grid, &self.config.vrf, scale);
        let rpf = if self.config.ablation.enable_rpf {
            if scale == 1.0 {
                layers.rpf.clone()
            } else {
                Arc::new(RiskGrid {
                    grid,
                    values: layers.rpf.values.iter().map(|v| v * scale).collect(),
                })
            }
        } else {
            Arc::new(RiskGrid::zeros(grid))
        };
        let total = RiskGrid::sum3(&maf, &vrf, &rpf);
        Ok(ComposedFrame {
            grid,
            maf,
            vrf,
            rpf,
            total,
            fields,
            drivable: layers.drivable,
        })
    }

    pub fn visibility(&self, frame: &ScenarioFrame, composed: &ComposedFrame) -> VisibilityPolygon {
        compute_visibility(frame, &composed.grid, &composed.drivable, &self.config.visibility)
    }

    /// Composes, masks by visibility, then scores the visible actors.
    pub fn evaluate_frame(&self, frame_index: usize, frame: &ScenarioFrame) -> Result<FrameEvaluation> {
        let composed = self.compose_frame(frame_index, frame)?;
        let polygon = self.visibility(frame, &composed);
        let (visible_agents, masked) = filter_visible(frame, &polygon, &composed.total);
        let inflation = self.config.scoring.inflation;
        let mut scores = BTreeMap::new();
        let mut visible = Vec::with_capacity(visible_agents.len());
        for agent in visible_agents {
            let cells = rasterize_footprint(agent, &composed.grid, inflation);
            let score = match self.config.scoring.mode {
                ScoreMode::Composed => masked.max_over(&cells),
                ScoreMode::OwnField => {
                    let idx = frame.agents.iter().position(|a| a.id == agent.id).expect("agent from frame");
                    own_field_max(&composed.fields.fields[idx], &cells, &composed.grid, &self.config)
                }
            };
            visible.push(agent.id.clone());
            scores.insert(agent.id.clone(), score);
        }
        Ok(FrameEvaluation {
            composed,
            polygon,
            visible,
            masked,
            scores,
        })
    }

    /// Scores every frame of a sequence. Frames run in parallel and are
    /// collected in order.
    pub fn score_sequence(&self, seq: &ScenarioSequence) -> Result<ActorScoreSeries> {
        let frames: Vec<FrameScores> = seq
            .frames
            .par_iter()
            .enumerate()
            .map(|(i, frame)| {
                let eval = self.evaluate_frame(i, frame)?;
                Ok(FrameScores {
                    timestamp: frame.timestamp,
                    scores: eval.scores,
                    gt_risky: frame.gt_risky_ids.clone(),
                })
            })
            .collect::<Result<_>>()?;
        Ok(ActorScoreSeries {
            name: seq.name().unwrap_or("scenario").to_string(),
            frames,
            event_frame: event_frame(seq),
        })
    }
}

fn own_field_max(field: &ActorField, cells: &[crate::geometry::Cell], grid: &GridSpec, config: &EngineConfig) -> f64 {
    let value = |p: Point2| match field {
        ActorField::Maf(m) => m.value_at(p),
        ActorField::Vrf(v) => v.value_at(p, &config.vrf),
        ActorField::None => 0.0,
    };
    cells
        .iter()
        .map(|c| config.global_scale * value(grid.cell_to_world(*c)))
        .fold(0.0, f64::max)
}

/// Sum of agent fields at every cell centre, in agent order.
pub fn rasterize_maf(agents: &[&AgentMaf], grid: &GridSpec, scale: f64) -> RiskGrid {
    if agents.is_empty() {
        return RiskGrid::zeros(*grid);
    }
    RiskGrid::from_row_fn(*grid, |_, centers, out| {
        let mut agent_row = vec![0.0; out.len()];
        for a in agents {
            agent_row.fill(0.0);
            a.accumulate(centers, &mut agent_row);
            for (o, v) in out.iter_mut().zip(&agent_row) {
                *o += v;
            }
        }
        if scale != 1.0 {
            for o in out.iter_mut() {
                *o *= scale;
            }
        }
    })
}

pub fn rasterize_vrf(vrus: &[VruMotion], grid: &GridSpec, params: &crate::field::VrfParams, scale: f64) -> RiskGrid {
    if vrus.is_empty() {
        return RiskGrid::zeros(*grid);
    }
    let kernels: Vec<_> = vrus.iter().map(|v| v.kernel(params)).collect();
    RiskGrid::from_fn(*grid, |p| {
        let mut sum = 0.0;
        for k in &kernels {
            sum += k.value_at(p);
        }
        if scale == 1.0 {
            sum
        } else {
            sum * scale
        }
    })
}

/// Annotated collision frame, else the frame where the ego is closest to a
/// ground-truth risky actor, else the last frame.
pub fn event_frame(seq: &ScenarioSequence) -> usize {
    if let Some(i) = seq.collision_frame() {
        return i;
    }
    let mut best: Option<(f64, usize)> = None;
    for (i, frame) in seq.frames.iter().enumerate() {
        for id in &frame.gt_risky_ids {
            if let Some(a) = frame.agent(id) {
                let d = a.position.distance(frame.ego.position);
                if best.is_none_or(|(bd, _)| d < bd) {
                    best = Some((d, i));
                }
            }
        }
    }
    best.map_or(seq.frames.len().saturating_sub(1), |b| b.1)
}

/// Scores of a single agent list under a pre-masked grid.
pub fn actor_scores(agents: &[&AgentState], masked: &RiskGrid, inflation: f64) -> BTreeMap<String, f64> {
    agents
        .iter()
        .map(|a| {
            let cells = rasterize_footprint(a, &masked.grid, inflation);
            (a.id.clone(), masked.max_over(&cells))
        })
        .collect()
}
