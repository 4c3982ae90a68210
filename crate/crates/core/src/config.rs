//! Engine configuration file (TOML).

use std::path::Path;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};
use crate::field::{MafParams, RpfParams, SeverityMode, VrfParams};
use crate::geometry::{GridSpec, DEFAULT_MAX_CELLS_PER_AXIS};
use crate::metrics::MetricsSettings;
use crate::planner::PlannerConfig;
use crate::predictor::PredictorConfig;
use crate::scenario::AgentState;
use crate::visibility::VisibilitySettings;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct GridSettings {
    /// Half-width of the square grid, meters.
    pub extent: f64,
    /// Meters per cell.
    pub resolution: f64,
    /// Rotate the grid with the ego heading instead of keeping it world-aligned.
    pub align_to_ego_heading: bool,
    pub max_cells_per_axis: usize,
}

impl Default for GridSettings {
    fn default() -> Self {
        Self {
            extent: 50.0,
            resolution: 0.25,
            align_to_ego_heading: false,
            max_cells_per_axis: DEFAULT_MAX_CELLS_PER_AXIS,
        }
    }
}

impl GridSettings {
    /// Grid centred on `ego`.
    pub fn spec_for(&self, ego: &AgentState) -> GridSpec {
        let orientation = if self.align_to_ego_heading { ego.heading } else { 0.0 };
        GridSpec::new(ego.position, self.extent, self.resolution, orientation)
    }

    pub fn validate(&self) -> Result<()> {
        GridSpec::new(Default::default(), self.extent, self.resolution, 0.0).validate(self.max_cells_per_axis)
    }
}

/// Component switches. The named presets correspond to the full model and
/// the three single-component ablations.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct AblationFlags {
    pub enable_maf: bool,
    /// Speed-dependent widening of the MAF cross-section (`k_v`).
    pub enable_maf_velvar: bool,
    pub enable_vrf: bool,
    pub enable_rpf: bool,
    /// Give VRUs a constant-velocity MAF when their own field is off.
    pub vru_maf_fallback: bool,
    /// Severity from the current speed instead of the path average.
    pub severity_at_current_speed: bool,
}

impl Default for AblationFlags {
    fn default() -> Self {
        Self {
            enable_maf: true,
            enable_maf_velvar: true,
            enable_vrf: true,
            enable_rpf: true,
            vru_maf_fallback: false,
            severity_at_current_speed: false,
        }
    }
}

impl AblationFlags {
    pub const PRESETS: [&'static str; 4] = ["full", "no-velvar", "no-vrf", "no-rpf"];

    pub fn preset(name: &str) -> Result<Self> {
        let full = Self::default();
        match name {
            "full" => Ok(full),
            "no-velvar" => Ok(Self {
                enable_maf_velvar: false,
                ..full
            }),
            "no-vrf" => Ok(Self {
                enable_vrf: false,
                vru_maf_fallback: true,
                ..full
            }),
            "no-rpf" => Ok(Self {
                enable_rpf: false,
                ..full
            }),
            other => Err(Error::Config(format!(
                "unknown ablation preset `{other}`; expected one of {}",
                Self::PRESETS.join(", ")
            ))),
        }
    }

    pub fn severity_mode(&self) -> SeverityMode {
        if self.severity_at_current_speed {
            SeverityMode::CurrentSpeed
        } else {
            SeverityMode::PathAverage
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ScoreMode {
    /// Max of the composed, visibility-masked field over the footprint.
    #[default]
    Composed,
    /// Max of the actor's own component field over its footprint.
    OwnField,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ScoringSettings {
    /// Footprint inflation, meters.
    pub inflation: f64,
    pub mode: ScoreMode,
}

impl Default for ScoringSettings {
    fn default() -> Self {
        Self {
            inflation: 0.5,
            mode: ScoreMode::Composed,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EngineConfig {
    /// Multiplies every component before composition.
    pub global_scale: f64,
    pub grid: GridSettings,
    pub maf: MafParams,
    pub vrf: VrfParams,
    pub rpf: RpfParams,
    pub visibility: VisibilitySettings,
    pub predictor: PredictorConfig,
    pub ablation: AblationFlags,
    pub scoring: ScoringSettings,
    pub metrics: MetricsSettings,
    pub planner: PlannerConfig,
}

impl Default for EngineConfig {
    fn default() -> Self {
        Self {
            global_scale: 1.0,
            grid: GridSettings::default(),
            maf: MafParams::default(),
            vrf: VrfParams::default(),
            rpf: RpfParams::default(),
            visibility: VisibilitySettings::default(),
            predictor: PredictorConfig::default(),
            ablation: AblationFlags::default(),
            scoring: ScoringSettings::default(),
            metrics: MetricsSettings::default(),
            planner: PlannerConfig::default(),
        }
    }
}

impl EngineConfig {
    pub fn parse(text: &str) -> Result<Self> {
        let cfg: Self = toml::from_str(text).map_err(|e| Error::Config(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::parse(&text)
    }

    pub fn to_toml_string(&self) -> String {
        toml::to_string_pretty(self).expect("config serializes")
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.global_scale > 0.0 && self.global_scale.is_finite()) {
            return Err(Error::Config("global_scale must be positive".into()));
        }
        self.grid.validate()?;
        self.maf.validate()?;
        self.vrf.validate()?;
        self.rpf.validate()?;
        self.visibility.validate()?;
        self.predictor.validate()?;
        if !(self.scoring.inflation >= 0.0 && self.scoring.inflation.is_finite()) {
            return Err(Error::Config("scoring.inflation must be nonnegative".into()));
        }
        self.metrics.validate()?;
        self.planner.validate()?;
        Ok(())
    }

    /// MAF parameters after the ablation switches are applied.
    pub fn effective_maf(&self) -> MafParams {
        if self.ablation.enable_maf_velvar {
            self.maf.clone()
        } else {
            self.maf.without_velocity_width()
        }
    }

    pub fn with_preset(mut self, preset: &str) -> Result<Self> {
        self.ablation = AblationFlags::preset(preset)?;
        Ok(self)
    }

    /// Hex SHA-256 of the canonical JSON form.
    pub fn hash(&self) -> String {
        let json = serde_json::to_string(self).expect("config serializes");
        hex::encode(Sha256::digest(json.as_bytes()))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn defaults_validate_and_round_trip() {
        let cfg = EngineConfig::default();
        cfg.validate().unwrap();
        let back = EngineConfig::parse(&cfg.to_toml_string()).unwrap();
        assert_eq!(back, cfg);
        assert_eq!(back.hash(), cfg.hash());
    }

    #[test]
    fn partial_file_fills_defaults() {
        let cfg = EngineConfig::parse("[rpf]\nlambda_off = 9.0\n[grid]\nresolution = 0.5\n").unwrap();
        assert_eq!(cfg.rpf.lambda_off, 9.0);
        assert_eq!(cfg.grid.resolution, 0.5);
        assert_eq!(cfg.maf, MafParams::default());
    }

    #[test]
    fn rejects_unknown_keys_and_bad_ordering() {
        assert!(EngineConfig::parse("[grid]\nextnt = 3.0\n").is_err());
        assert!(EngineConfig::parse("[rpf]\nlambda_same = 2.0\n").is_err());
    }

    #[test]
    fn presets_differ_in_one_component() {
        let full = AblationFlags::preset("full").unwrap();
        assert!(!AblationFlags::preset("no-rpf").unwrap().enable_rpf);
        assert!(!AblationFlags::preset("no-vrf").unwrap().enable_vrf);
        assert!(!AblationFlags::preset("no-velvar").unwrap().enable_maf_velvar);
        assert!(full.enable_maf && full.enable_vrf && full.enable_rpf);
        assert!(AblationFlags::preset("none").is_err());
        let a = EngineConfig::default();
        let b = EngineConfig::default().with_preset("no-vrf").unwrap();
        assert_ne!(a.hash(), b.hash());
    }

    #[test]
    fn grid_size_limit() {
        let mut cfg = EngineConfig::default();
        cfg.grid.resolution = 0.001;
        assert!(cfg.validate().is_err());
    }
}
