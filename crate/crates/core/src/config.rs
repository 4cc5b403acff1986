//! Scenario configuration files (TOML).
//!
//! ```toml
//! scenario = "toa"            # toa | tdoa | mono | coop
//! q_max = 2
//! model = "no-overlap"        # full | no-overlap
//!
//! [floorplan]
//! boundary = [[0.2, 0.0], [10.2, 0.0], [10.2, 7.2], [0.2, 7.2]]
//! # walls = [[[x1, y1], [x2, y2]], ...]   (defaults to the boundary edges)
//!
//! [[anchors]]
//! id = "a1"
//! x = 10.0
//! y = 7.0
//! ```

use std::collections::HashSet;
use std::path::{Path, PathBuf};

use serde::Deserialize;

use crate::channel::{ChannelModel, DmParams, SignalParams};
use crate::evaluate::{GridSpec, Partner, PreparedScenario, Scenario, ScenarioKind};
use crate::fim::{CoopComponent, Model};
use crate::geometry::{polygon_edges, Floorplan, Point, Wall};

/// Problems loading a configuration, split into malformed input and
/// well-formed input that violates a constraint.
#[derive(Debug, thiserror::Error)]
pub enum ConfigError {
    #[error("cannot read {path}: {source}")]
    Read { path: PathBuf, source: std::io::Error },
    #[error("parse error: {0}")]
    Parse(String),
    #[error("invalid configuration:\n  {}", .0.join("\n  "))]
    Constraint(Vec<String>),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ScenarioType {
    Toa,
    Tdoa,
    Mono,
    Coop,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FloorplanConfig {
    pub boundary: Vec<[f64; 2]>,
    pub walls: Option<Vec<[[f64; 2]; 2]>>,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AnchorConfig {
    pub id: String,
    pub x: f64,
    pub y: f64,
    /// TDoA clock group; anchors sharing a group are synchronized. Anchors
    /// without a group get one of their own.
    pub sync_group: Option<String>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum AgentRole {
    Monostatic,
    Cooperative,
}

/// Partner agent of a cooperative scenario; its position is unknown to the
/// estimator.
#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AgentConfig {
    pub id: String,
    pub x: f64,
    pub y: f64,
    #[serde(default = "all_roles")]
    pub roles: Vec<AgentRole>,
}

fn all_roles() -> Vec<AgentRole> {
    vec![AgentRole::Monostatic, AgentRole::Cooperative]
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SignalConfig {
    pub carrier_hz: f64,
    pub pulse_duration_ns: f64,
    pub roll_off: f64,
    pub samples_per_pulse: usize,
    pub noise_psd_half: f64,
    pub reflection_loss_db: f64,
}

impl Default for SignalConfig {
    fn default() -> Self {
        let s = SignalParams::default();
        Self {
            carrier_hz: s.carrier_hz,
            pulse_duration_ns: s.pulse_duration * 1e9,
            roll_off: s.roll_off,
            samples_per_pulse: s.samples_per_pulse,
            noise_psd_half: s.noise_psd_half,
            reflection_loss_db: s.reflection_loss_db,
        }
    }
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct DmConfig {
    pub enabled: bool,
    pub power: f64,
    pub decay_ns: f64,
    pub rise_ns: f64,
    pub chi: f64,
}

impl Default for DmConfig {
    fn default() -> Self {
        let d = DmParams::default();
        Self { enabled: true, power: d.power, decay_ns: d.decay * 1e9, rise_ns: d.rise * 1e9, chi: d.chi }
    }
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct GridConfig {
    pub spacing: f64,
}

impl Default for GridConfig {
    fn default() -> Self {
        Self { spacing: 0.1 }
    }
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct EllipseConfig {
    pub points: Vec<[f64; 2]>,
    pub scale: f64,
}

impl Default for EllipseConfig {
    fn default() -> Self {
        Self { points: Vec::new(), scale: 20.0 }
    }
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct OutputConfig {
    pub dir: PathBuf,
    pub raster: bool,
    /// `log10(PEB / m)` mapped to black and white in the raster.
    pub log10_range: [f64; 2],
}

impl Default for OutputConfig {
    fn default() -> Self {
        Self { dir: PathBuf::from("out"), raster: false, log10_range: [-3.0, 1.0] }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ComponentConfig {
    Monostatic,
    Cooperative,
    Total,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScenarioConfig {
    pub scenario: ScenarioType,
    #[serde(default = "default_q_max")]
    pub q_max: usize,
    #[serde(default = "default_model")]
    pub model: String,
    #[serde(default = "default_component")]
    pub component: ComponentConfig,
    pub floorplan: FloorplanConfig,
    #[serde(default)]
    pub anchors: Vec<AnchorConfig>,
    #[serde(default)]
    pub agents: Vec<AgentConfig>,
    #[serde(default)]
    pub signal: SignalConfig,
    #[serde(default)]
    pub dm: DmConfig,
    #[serde(default)]
    pub grid: GridConfig,
    #[serde(default)]
    pub ellipses: EllipseConfig,
    #[serde(default)]
    pub output: OutputConfig,
}

fn default_q_max() -> usize {
    2
}

fn default_model() -> String {
    "full".into()
}

fn default_component() -> ComponentConfig {
    ComponentConfig::Total
}

impl ScenarioConfig {
    pub fn from_toml(text: &str) -> Result<Self, ConfigError> {
        toml::from_str(text).map_err(|e| ConfigError::Parse(e.to_string()))
    }

    pub fn load(path: &Path) -> Result<Self, ConfigError> {
        let text = std::fs::read_to_string(path)
            .map_err(|source| ConfigError::Read { path: path.to_path_buf(), source })?;
        Self::from_toml(&text)
    }

    pub fn model(&self) -> Result<Model, String> {
        self.model.parse()
    }

    pub fn signal_params(&self) -> SignalParams {
        let s = &self.signal;
        SignalParams {
            carrier_hz: s.carrier_hz,
            pulse_duration: s.pulse_duration_ns * 1e-9,
            roll_off: s.roll_off,
            samples_per_pulse: s.samples_per_pulse,
            noise_psd_half: s.noise_psd_half,
            reflection_loss_db: s.reflection_loss_db,
        }
    }

    pub fn dm_params(&self) -> Option<DmParams> {
        let d = &self.dm;
        d.enabled.then(|| DmParams { power: d.power, decay: d.decay_ns * 1e-9, rise: d.rise_ns * 1e-9, chi: d.chi })
    }

    pub fn floorplan(&self) -> Result<Floorplan, String> {
        let boundary: Vec<Point> = self.floorplan.boundary.iter().map(|p| Point::new(p[0], p[1])).collect();
        let walls = match &self.floorplan.walls {
            Some(ws) => ws
                .iter()
                .enumerate()
                .map(|(i, w)| {
                    Wall::new(Point::new(w[0][0], w[0][1]), Point::new(w[1][0], w[1][1]))
                        .map_err(|e| format!("wall {i}: {e}"))
                })
                .collect::<Result<Vec<_>, _>>()?,
            None => polygon_edges(&boundary).map_err(|e| format!("boundary: {e}"))?,
        };
        Floorplan::new(walls, boundary).map_err(|e| format!("floorplan: {e}"))
    }

    /// Dense clock-group index per anchor, in order of first appearance.
    /// Anchors without a named group get one of their own.
    pub fn sync_groups(&self) -> Vec<usize> {
        let mut named: Vec<(&str, usize)> = Vec::new();
        let mut next = 0;
        let mut fresh = || {
            next += 1;
            next - 1
        };
        self.anchors
            .iter()
            .map(|a| match a.sync_group.as_deref() {
                Some(g) => match named.iter().find(|(n, _)| *n == g) {
                    Some(&(_, id)) => id,
                    None => {
                        let id = fresh();
                        named.push((g, id));
                        id
                    }
                },
                None => fresh(),
            })
            .collect()
    }

    /// Check every constraint and return all violations at once.
    pub fn validate(&self) -> Result<(), ConfigError> {
        let mut problems = Vec::new();
        let plan = match self.floorplan() {
            Ok(p) => Some(p),
            Err(e) => {
                problems.push(e);
                None
            }
        };
        let mut ids = HashSet::new();
        for id in self.anchors.iter().map(|a| &a.id).chain(self.agents.iter().map(|a| &a.id)) {
            if !ids.insert(id.as_str()) {
                problems.push(format!("duplicate node id `{id}`"));
            }
        }
        if let Some(plan) = &plan {
            let nodes = self
                .anchors
                .iter()
                .map(|a| ("anchor", &a.id, a.x, a.y))
                .chain(self.agents.iter().map(|a| ("agent", &a.id, a.x, a.y)));
            for (kind, id, x, y) in nodes {
                let p = Point::new(x, y);
                if !(x.is_finite() && y.is_finite()) || !(plan.contains(&p) || plan.distance_to_boundary(&p) <= 1e-9) {
                    problems.push(format!("{kind} `{id}` at ({x}, {y}) is outside the floorplan"));
                }
            }
        }
        match self.scenario {
            ScenarioType::Toa | ScenarioType::Tdoa if self.anchors.is_empty() => {
                problems.push("toa/tdoa scenarios need at least one anchor".into())
            }
            ScenarioType::Coop if self.agents.is_empty() => {
                problems.push("coop scenarios need at least one partner agent".into())
            }
            ScenarioType::Toa | ScenarioType::Tdoa | ScenarioType::Mono if !self.agents.is_empty() => {
                problems.push("partner agents are only used by coop scenarios".into())
            }
            _ => {}
        }
        if self.scenario != ScenarioType::Tdoa && self.anchors.iter().any(|a| a.sync_group.is_some()) {
            problems.push("sync groups are only used by tdoa scenarios".into());
        }
        for a in &self.agents {
            if a.roles.is_empty() {
                problems.push(format!("agent `{}` has no roles", a.id));
            }
        }
        if let Err(e) = self.model() {
            problems.push(e);
        }
        if let Err(e) = self.signal_params().validate() {
            problems.push(e.to_string());
        }
        if let Some(dm) = self.dm_params() {
            if let Err(e) = dm.validate() {
                problems.push(e.to_string());
            }
        }
        if !(self.grid.spacing.is_finite() && self.grid.spacing > 0.0) {
            problems.push(format!("grid spacing must be positive, got {}", self.grid.spacing));
        }
        if !(self.ellipses.scale.is_finite() && self.ellipses.scale > 0.0) {
            problems.push("ellipse scale must be positive".into());
        }
        let [lo, hi] = self.output.log10_range;
        if !(lo.is_finite() && hi.is_finite() && lo < hi) {
            problems.push("output.log10_range must be an increasing pair".into());
        }
        if let Some(plan) = &plan {
            for p in &self.ellipses.points {
                if !plan.contains(&Point::new(p[0], p[1])) {
                    problems.push(format!("ellipse point ({}, {}) is outside the floorplan", p[0], p[1]));
                }
            }
        }
        if problems.is_empty() {
            Ok(())
        } else {
            Err(ConfigError::Constraint(problems))
        }
    }

    /// Validated scenario with the fixed nodes' VAs prepared.
    pub fn prepare(&self) -> Result<PreparedScenario, ConfigError> {
        self.validate()?;
        let constraint = |e: crate::error::Error| ConfigError::Constraint(vec![e.to_string()]);
        let plan = self.floorplan().map_err(|e| ConfigError::Constraint(vec![e]))?;
        let channel = ChannelModel::new(self.signal_params(), self.dm_params()).map_err(constraint)?;
        let kind = match self.scenario {
            ScenarioType::Toa => ScenarioKind::Toa,
            ScenarioType::Tdoa => ScenarioKind::Tdoa,
            ScenarioType::Mono => ScenarioKind::Monostatic,
            ScenarioType::Coop => ScenarioKind::Cooperative,
        };
        let scenario = Scenario {
            plan,
            anchors: self.anchors.iter().map(|a| Point::new(a.x, a.y)).collect(),
            kind,
            sync_groups: self.sync_groups(),
            partners: self
                .agents
                .iter()
                .map(|a| Partner {
                    position: Point::new(a.x, a.y),
                    monostatic: a.roles.contains(&AgentRole::Monostatic),
                    cooperative: a.roles.contains(&AgentRole::Cooperative),
                })
                .collect(),
            q_max: self.q_max,
            channel,
            model: self.model().map_err(|e| ConfigError::Constraint(vec![e]))?,
            coop_component: match self.component {
                ComponentConfig::Monostatic => CoopComponent::Monostatic,
                ComponentConfig::Cooperative => CoopComponent::Cooperative,
                ComponentConfig::Total => CoopComponent::Total,
            },
        };
        PreparedScenario::new(scenario).map_err(constraint)
    }

    pub fn grid(&self, plan: &Floorplan) -> Result<GridSpec, ConfigError> {
        GridSpec::covering(plan, self.grid.spacing).map_err(|e| ConfigError::Constraint(vec![e.to_string()]))
    }
}
