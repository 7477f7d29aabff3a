//! Scenario files: a TOML description of the workspace, obstacles, measure,
//! robots, and solver settings.

use std::path::{Path, PathBuf};
use std::sync::Arc;

use ergosafe::harness::TrackerConfig;
use ergosafe::multirobot::{full_connectivity, FleetSpec, PairConstraint};
use ergosafe::{
    single_integrator, Barrier, ControlBounds, DcbfConstraint, Dynamics, ErgodicObjective, FourierBasis,
    GridMeasure, InequalityMode, ProblemSpec, SolverConfig, SpatialMeasure, Superellipsoid, Workspace,
};
use serde::{Deserialize, Serialize};

use crate::CliError;

pub const DEFAULT_SCENARIO: &str = include_str!("../scenarios/default.toml");
pub const FLEET_SCENARIO: &str = include_str!("../scenarios/fleet.toml");

fn default_horizon() -> usize {
    200
}

fn default_dt() -> f64 {
    0.1
}

fn default_modes() -> usize {
    10
}

fn default_radius() -> f64 {
    1.0
}

fn default_order() -> f64 {
    2.0
}

fn default_weight() -> f64 {
    ergosafe::optimizer::DEFAULT_CONTROL_WEIGHT
}

fn is_default<T: Default + PartialEq>(v: &T) -> bool {
    *v == T::default()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScenarioFile {
    #[serde(default, skip_serializing_if = "String::is_empty")]
    pub name: String,
    /// Workspace extents `[L_0, ..., L_{v-1}]`.
    pub workspace: Vec<f64>,
    #[serde(default = "default_horizon")]
    pub horizon: usize,
    #[serde(default = "default_dt")]
    pub dt: f64,
    pub gamma: f64,
    #[serde(default = "default_modes")]
    pub modes_per_dim: usize,
    /// Drives the initial guess and Monte-Carlo sampling.
    #[serde(default)]
    pub seed: u64,
    #[serde(default = "default_mode")]
    pub mode: InequalityMode,
    /// Minimum inter-robot distance; required with more than one robot.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub d_min: Option<f64>,
    /// Decay rate of inter-robot barriers; defaults to `gamma`.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub pair_gamma: Option<f64>,
    /// Explicit robot pairs; all pairs when absent.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub pairs: Option<Vec<[usize; 2]>>,
    #[serde(default)]
    pub measure: MeasureConfig,
    #[serde(default)]
    pub control: ControlConfig,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub obstacles: Vec<ObstacleConfig>,
    pub robots: Vec<RobotConfig>,
    #[serde(default, skip_serializing_if = "is_default")]
    pub solver: SolverConfig,
    #[serde(default, skip_serializing_if = "is_default")]
    pub tracker: TrackerConfig,
}

fn default_mode() -> InequalityMode {
    InequalityMode::Dcbf
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum MeasureConfig {
    #[default]
    Uniform,
    /// Plain-text grid file, relative to the scenario file.
    Grid { path: PathBuf },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ControlConfig {
    /// `R = weight * I`.
    #[serde(default = "default_weight")]
    pub weight: f64,
    /// Per-axis speed limit `|u_i| <= max_speed`.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub max_speed: Option<f64>,
}

impl Default for ControlConfig {
    fn default() -> Self {
        Self {
            weight: default_weight(),
            max_speed: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ObstacleConfig {
    #[serde(default, skip_serializing_if = "String::is_empty")]
    pub name: String,
    pub center: Vec<f64>,
    /// Semi-axes `l`.
    pub scale: Vec<f64>,
    /// Safety inflation `b` added to every semi-axis.
    #[serde(default)]
    pub buffer: f64,
    #[serde(default = "default_radius")]
    pub radius: f64,
    /// Norm order `p`.
    #[serde(default = "default_order")]
    pub order: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RobotConfig {
    pub start: Vec<f64>,
    pub goal: Vec<f64>,
}

/// A scenario plus the directory relative paths resolve against.
#[derive(Debug, Clone, PartialEq)]
pub struct Scenario {
    pub file: ScenarioFile,
    pub base_dir: PathBuf,
}

fn field_error(field: impl Into<String>, e: ergosafe::Error) -> CliError {
    let field = field.into();
    match e {
        ergosafe::Error::Invalid { field: inner, reason } => CliError::Invariant(ergosafe::Error::Invalid {
            field: format!("{field}: {inner}"),
            reason,
        }),
        other => CliError::Invariant(ergosafe::Error::Invalid {
            field,
            reason: other.to_string(),
        }),
    }
}

impl ScenarioFile {
    /// Parses TOML; syntax and type errors carry line and column.
    pub fn parse(text: &str) -> Result<Self, CliError> {
        toml::from_str(text).map_err(|e| CliError::Parse(e.to_string()))
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("scenario fields are all representable in TOML")
    }

    pub fn default_scene() -> Self {
        Self::parse(DEFAULT_SCENARIO).expect("shipped scenario parses")
    }

    pub fn fleet_scene() -> Self {
        Self::parse(FLEET_SCENARIO).expect("shipped scenario parses")
    }

    pub fn solver_config(&self) -> SolverConfig {
        SolverConfig {
            seed: self.seed,
            ..self.solver.clone()
        }
    }

    fn workspace(&self) -> Result<Workspace, CliError> {
        Workspace::new(self.workspace.clone()).map_err(|e| field_error("workspace", e))
    }

    fn objective(&self, base_dir: &Path) -> Result<ErgodicObjective, CliError> {
        let ws = self.workspace()?;
        let basis = FourierBasis::new(ws, self.modes_per_dim).map_err(|e| field_error("modes_per_dim", e))?;
        let measure = match &self.measure {
            MeasureConfig::Uniform => SpatialMeasure::Uniform,
            MeasureConfig::Grid { path } => {
                let full = base_dir.join(path);
                let text = std::fs::read_to_string(&full)
                    .map_err(|e| CliError::Io(format!("{}: {e}", full.display())))?;
                let grid = GridMeasure::from_text(&text).map_err(|e| match e {
                    ergosafe::Error::Parse(m) => CliError::Parse(format!("{}: {m}", full.display())),
                    other => field_error("measure", other),
                })?;
                SpatialMeasure::Grid(grid)
            }
        };
        ErgodicObjective::new(basis, &measure).map_err(|e| field_error("measure", e))
    }

    fn dynamics(&self) -> Result<Arc<dyn Dynamics>, CliError> {
        let v = self.workspace.len();
        let mut d = single_integrator(v).map_err(|e| field_error("workspace", e))?;
        if let Some(limit) = self.control.max_speed {
            let bounds = ControlBounds::symmetric(v, limit).map_err(|e| field_error("control.max_speed", e))?;
            d = d.with_bounds(bounds).map_err(|e| field_error("control.max_speed", e))?;
        }
        Ok(Arc::new(d))
    }

    /// Obstacle DCBFs at decay rate `gamma` (single-robot frame).
    pub fn obstacle_constraints(&self, gamma: f64) -> Result<Vec<DcbfConstraint>, CliError> {
        self.obstacles
            .iter()
            .enumerate()
            .map(|(i, o)| {
                let field = format!("obstacles[{i}]");
                let shape = Superellipsoid::new(o.center.clone(), o.scale.clone(), o.buffer, o.radius, o.order)
                    .map_err(|e| field_error(field.clone(), e))?;
                let name = if o.name.is_empty() {
                    format!("obstacle{i}")
                } else {
                    o.name.clone()
                };
                DcbfConstraint::new(name, Barrier::obstacle(shape), gamma).map_err(|e| field_error("gamma", e))
            })
            .collect()
    }

    /// Problem for robot `index` with the scenario's mode (or `mode`).
    pub fn robot_problem(
        &self,
        index: usize,
        mode: Option<InequalityMode>,
        base_dir: &Path,
    ) -> Result<ProblemSpec, CliError> {
        let robot = self
            .robots
            .get(index)
            .ok_or_else(|| CliError::Usage(format!("scenario has no robot {index}")))?;
        if !(self.control.weight >= 0.0) {
            return Err(field_error(
                "control.weight",
                ergosafe::Error::Invalid {
                    field: "weight".into(),
                    reason: "must be non-negative".into(),
                },
            ));
        }
        let dynamics = self.dynamics()?;
        let m = dynamics.control_dim();
        let constraints = self.obstacle_constraints(self.gamma)?;
        let at = |what: &str| format!("robots[{index}].{what}");
        ProblemSpec::new(
            dynamics,
            self.objective(base_dir)?,
            robot.start.clone(),
            robot.goal.clone(),
            self.horizon,
            self.dt,
        )
        .map_err(|e| match e {
            ergosafe::Error::Dimension { .. } | ergosafe::Error::OutsideWorkspace { .. } => field_error(at("start/goal"), e),
            other => CliError::Invariant(other),
        })?
        .with_control_weight(ergosafe::optimizer::scaled_identity(m, self.control.weight))
        .map_err(|e| field_error("control.weight", e))?
        .with_constraints(constraints, mode.unwrap_or(self.mode))
        .map_err(CliError::Invariant)
    }

    pub fn fleet(&self, mode: Option<InequalityMode>, base_dir: &Path) -> Result<FleetSpec, CliError> {
        let robots = (0..self.robots.len())
            .map(|i| self.robot_problem(i, mode, base_dir))
            .collect::<Result<Vec<_>, _>>()?;
        let n = robots.len();
        let gamma = self.pair_gamma.unwrap_or(self.gamma);
        let pairs = if n < 2 {
            Vec::new()
        } else {
            let d_min = self
                .d_min
                .ok_or_else(|| CliError::Parse("missing `d_min` (required with more than one robot)".into()))?;
            match &self.pairs {
                None => full_connectivity(n, d_min, gamma).map_err(|e| field_error("d_min", e))?,
                Some(list) => list
                    .iter()
                    .enumerate()
                    .map(|(k, [i, j])| PairConstraint::new(*i, *j, d_min, gamma).map_err(|e| field_error(format!("pairs[{k}]"), e)))
                    .collect::<Result<Vec<_>, _>>()?,
            }
        };
        FleetSpec::new(robots, pairs).map_err(CliError::Invariant)
    }
}

impl Scenario {
    pub fn load(path: &Path) -> Result<Self, CliError> {
        let text = std::fs::read_to_string(path).map_err(|e| CliError::Io(format!("{}: {e}", path.display())))?;
        let file = ScenarioFile::parse(&text).map_err(|e| match e {
            CliError::Parse(m) => CliError::Parse(format!("{}: {m}", path.display())),
            other => other,
        })?;
        let base_dir = path.parent().map(Path::to_path_buf).unwrap_or_default();
        Ok(Self { file, base_dir })
    }

    /// A built-in scene (`default` or `fleet`) or a file path.
    pub fn resolve(name_or_path: &str) -> Result<Self, CliError> {
        match name_or_path {
            "default" => Ok(Self::builtin(ScenarioFile::default_scene())),
            "fleet" => Ok(Self::builtin(ScenarioFile::fleet_scene())),
            path => Self::load(Path::new(path)),
        }
    }

    pub fn builtin(file: ScenarioFile) -> Self {
        Self {
            file,
            base_dir: PathBuf::from("."),
        }
    }

    pub fn problem(&self, mode: Option<InequalityMode>) -> Result<ProblemSpec, CliError> {
        if self.file.robots.len() != 1 {
            return Err(CliError::Usage(format!(
                "single-robot command needs exactly one robot, scenario has {} (use `fleet`)",
                self.file.robots.len()
            )));
        }
        self.file.robot_problem(0, mode, &self.base_dir)
    }

    pub fn fleet(&self, mode: Option<InequalityMode>) -> Result<FleetSpec, CliError> {
        self.file.fleet(mode, &self.base_dir)
    }
}
