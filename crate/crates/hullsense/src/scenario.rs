//! Declarative scenario configuration: the JSON schema behind every run,
//! its validation rules, and the horizon bookkeeping (configured value
//! versus the closed-form bound computed from the initial conditions).

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::conic::SolverSettings;
use crate::dynamics::{
    double_integrator, horizon_di, horizon_si, single_integrator, DynamicsError, InputSet,
    LinearAgent,
};
use crate::geometry::{diameter, GeometryError, Point};
use crate::graph::{check_joint_connectivity, EdgeSet, GraphError, GraphSchedule};
use crate::linalg::norm;
use crate::ocp::SelectionPolicy;
use crate::protocol::AgentConfigBody;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScenarioConfig {
    pub name: String,
    pub agents: Vec<AgentSpec>,
    pub graph: GraphConfig,
    pub horizon: HorizonConfig,
    #[serde(default)]
    pub weights: WeightsConfig,
    pub kappa: f64,
    pub policy: PolicyConfig,
    #[serde(default)]
    pub run: RunConfig,
    #[serde(default)]
    pub transport: TransportConfig,
    /// Accepted for compatibility with the algorithm statement it mirrors;
    /// no constraint references it, so it is ignored.
    #[serde(default)]
    pub epsilon: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ModelKind {
    SingleIntegrator,
    DoubleIntegrator,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum InputSetKind {
    #[default]
    Ball,
    /// Axis-aligned box `[-u_max, u_max]` per input component.
    Box,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AgentSpec {
    pub model: ModelKind,
    pub dim: usize,
    pub u_max: f64,
    #[serde(default)]
    pub input_set: InputSetKind,
    /// Full initial state: the position for a single integrator, position
    /// then velocity for a double integrator.
    pub x0: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "mode", rename_all = "snake_case")]
pub enum GraphConfig {
    Static {
        edges: Vec<(usize, usize)>,
    },
    Periodic {
        slots: Vec<Vec<(usize, usize)>>,
        period: usize,
    },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "mode", rename_all = "snake_case")]
pub enum HorizonConfig {
    Explicit {
        #[serde(rename = "M")]
        m: usize,
    },
    AutoSi,
    AutoDi,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WeightsConfig {
    #[serde(rename = "Q_diag")]
    pub q_diag: Vec<f64>,
    #[serde(rename = "R_diag")]
    pub r_diag: Vec<f64>,
}

impl Default for WeightsConfig {
    fn default() -> Self {
        WeightsConfig {
            q_diag: vec![1.0, 1.0],
            r_diag: vec![1.0, 1.0],
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PolicyConfig {
    pub kind: PolicyKind,
    #[serde(default)]
    pub delta_lex: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PolicyKind {
    Plain,
    Lex,
    Adversarial,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunConfig {
    #[serde(rename = "J_max", default = "default_j_max")]
    pub j_max: usize,
    #[serde(default = "default_stop_tol")]
    pub stop_tol: f64,
    /// Reproducibility tag recorded in outputs; the run itself is
    /// deterministic.
    #[serde(default)]
    pub seed: u64,
}

fn default_j_max() -> usize {
    60
}

fn default_stop_tol() -> f64 {
    1e-3
}

impl Default for RunConfig {
    fn default() -> Self {
        RunConfig {
            j_max: default_j_max(),
            stop_tol: default_stop_tol(),
            seed: 0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, Default)]
pub struct TransportConfig {
    #[serde(default)]
    pub kind: TransportKind,
    #[serde(default)]
    pub port: Option<u16>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum TransportKind {
    #[default]
    Inprocess,
    Tcp,
}

#[derive(Debug, Error)]
pub enum ScenarioError {
    #[error("config parse error: {0}")]
    Parse(#[from] serde_json::Error),
    #[error("could not read {path}: {source}")]
    Read {
        path: String,
        source: std::io::Error,
    },
    #[error("scenario needs at least 2 agents, got {0}")]
    TooFewAgents(usize),
    #[error("kappa must lie in (0,1), got {0}")]
    BadKappa(f64),
    #[error("delta_lex must be nonnegative and finite, got {0}")]
    BadDeltaLex(f64),
    #[error("agent {index}: consensus dimension must be 2, got {dim}")]
    UnsupportedDim { index: usize, dim: usize },
    #[error("agent {index}: x0 has length {got}, expected {expected}")]
    BadInitialState {
        index: usize,
        got: usize,
        expected: usize,
    },
    #[error("agent {index}: {source}")]
    Dynamics { index: usize, source: DynamicsError },
    #[error("weights must have length {expected}, got {got}")]
    BadWeights { expected: usize, got: usize },
    #[error("graph: {0}")]
    Graph(#[from] GraphError),
    #[error("geometry: {0}")]
    Geometry(#[from] GeometryError),
    #[error("auto horizon modes require a homogeneous network of {0}")]
    MixedModels(&'static str),
    #[error("horizon bound: {0}")]
    Horizon(DynamicsError),
}

/// Everything a run needs, extracted from a validated config.
#[derive(Debug, Clone)]
pub struct BuiltScenario {
    pub name: String,
    pub agents: Vec<LinearAgent>,
    pub agent_configs: Vec<AgentConfigBody>,
    pub initial_states: Vec<Vec<f64>>,
    pub schedule: GraphSchedule,
    pub m: usize,
    /// Closed-form horizon bound when the network is a homogeneous
    /// integrator family.
    pub formula_m: Option<usize>,
    pub kappa: f64,
    pub stop_tol: f64,
    pub j_max: usize,
    pub seed: u64,
    pub transport: TransportConfig,
    /// True when every bounded window's union graph has a spanning tree;
    /// recorded as a warning, not an error.
    pub jointly_connected: bool,
}

/// Printed by the horizon checker: initial disagreement, input floor, the
/// closed-form bound and the configured value.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct HorizonReport {
    pub model: ModelKind,
    pub v0: f64,
    pub u_min: f64,
    pub v_max: Option<f64>,
    pub formula_m: usize,
    pub configured_m: usize,
    pub pass: bool,
}

impl ScenarioConfig {
    pub fn from_json(text: &str) -> Result<Self, ScenarioError> {
        Ok(serde_json::from_str(text)?)
    }

    pub fn from_file(path: &str) -> Result<Self, ScenarioError> {
        let text = std::fs::read_to_string(path).map_err(|source| ScenarioError::Read {
            path: path.to_string(),
            source,
        })?;
        Self::from_json(&text)
    }

    /// Canonical (sorted-key, pretty) form; parsing it back yields an equal
    /// config.
    pub fn to_canonical_json(&self) -> String {
        let value = serde_json::to_value(self).expect("config serialization cannot fail");
        serde_json::to_string_pretty(&value).expect("value serialization cannot fail")
    }

    pub fn agent_count(&self) -> usize {
        self.agents.len()
    }

    fn schedule(&self) -> Result<GraphSchedule, ScenarioError> {
        let count = self.agents.len();
        Ok(match &self.graph {
            GraphConfig::Static { edges } => {
                GraphSchedule::static_graph(count, EdgeSet::from_pairs(edges))?
            }
            GraphConfig::Periodic { slots, period } => {
                let sets: Vec<EdgeSet> = slots.iter().map(|s| EdgeSet::from_pairs(s)).collect();
                let sched = GraphSchedule {
                    mode: crate::graph::ScheduleMode::Periodic {
                        slots: sets,
                        period: *period,
                    },
                    node_count: count,
                };
                sched.validate()?;
                sched
            }
        })
    }

    fn build_agent(&self, index: usize) -> Result<LinearAgent, ScenarioError> {
        let spec = &self.agents[index];
        if spec.dim != 2 {
            return Err(ScenarioError::UnsupportedDim {
                index,
                dim: spec.dim,
            });
        }
        let base = match spec.model {
            ModelKind::SingleIntegrator => single_integrator(spec.dim, spec.u_max),
            ModelKind::DoubleIntegrator => double_integrator(spec.dim, spec.u_max),
        }
        .map_err(|source| ScenarioError::Dynamics { index, source })?;
        Ok(match spec.input_set {
            InputSetKind::Ball => base,
            InputSetKind::Box => {
                let bounds = vec![(-spec.u_max, spec.u_max); base.input_dim()];
                base.with_input_set(InputSet::Box { bounds })
            }
        })
    }

    /// Initial consensus-space samples (positions).
    pub fn initial_positions(&self) -> Vec<Point> {
        self.agents
            .iter()
            .map(|a| Point::new(a.x0[..a.dim].to_vec()))
            .collect()
    }

    fn uniform_model(&self) -> Option<ModelKind> {
        let first = self.agents.first()?.model;
        self.agents
            .iter()
            .all(|a| a.model == first)
            .then_some(first)
    }

    /// Smallest inscribed input-ball radius across the network.
    pub fn u_min(&self) -> f64 {
        self.agents
            .iter()
            .map(|a| a.u_max)
            .fold(f64::INFINITY, f64::min)
    }

    /// Largest initial velocity norm (double-integrator networks).
    pub fn v_max(&self) -> f64 {
        self.agents
            .iter()
            .map(|a| {
                if a.x0.len() >= 2 * a.dim {
                    norm(&a.x0[a.dim..2 * a.dim])
                } else {
                    0.0
                }
            })
            .fold(0.0, f64::max)
    }

    /// The closed-form horizon bound for a homogeneous integrator network.
    pub fn formula_horizon(&self) -> Result<Option<usize>, ScenarioError> {
        let Some(model) = self.uniform_model() else {
            return Ok(None);
        };
        let v0 = diameter(&self.initial_positions())?;
        let bound = match model {
            ModelKind::SingleIntegrator => horizon_si(v0, self.u_min()),
            ModelKind::DoubleIntegrator => horizon_di(v0, self.v_max(), self.u_min()),
        }
        .map_err(ScenarioError::Horizon)?;
        Ok(Some(bound.m))
    }

    /// The horizon a run will use: the explicit value, or the formula value
    /// under an auto mode.
    pub fn effective_horizon(&self) -> Result<usize, ScenarioError> {
        match self.horizon {
            HorizonConfig::Explicit { m } => Ok(m),
            HorizonConfig::AutoSi | HorizonConfig::AutoDi => {
                let expected = match self.horizon {
                    HorizonConfig::AutoSi => ModelKind::SingleIntegrator,
                    _ => ModelKind::DoubleIntegrator,
                };
                match self.uniform_model() {
                    Some(m) if m == expected => {}
                    _ => {
                        return Err(ScenarioError::MixedModels(match expected {
                            ModelKind::SingleIntegrator => "single integrators",
                            ModelKind::DoubleIntegrator => "double integrators",
                        }))
                    }
                }
                Ok(self
                    .formula_horizon()?
                    .expect("uniform model checked above"))
            }
        }
    }

    /// Data for the horizon checker; errors on heterogeneous networks.
    pub fn horizon_report(&self) -> Result<HorizonReport, ScenarioError> {
        let model = self
            .uniform_model()
            .ok_or(ScenarioError::MixedModels("one model kind"))?;
        let v0 = diameter(&self.initial_positions())?;
        let formula_m = self.formula_horizon()?.expect("uniform model");
        let configured_m = self.effective_horizon()?;
        Ok(HorizonReport {
            model,
            v0,
            u_min: self.u_min(),
            v_max: matches!(model, ModelKind::DoubleIntegrator).then(|| self.v_max()),
            formula_m,
            configured_m,
            pass: configured_m >= formula_m,
        })
    }

    pub fn policy(&self) -> SelectionPolicy {
        match self.policy.kind {
            PolicyKind::Plain => SelectionPolicy::Plain,
            PolicyKind::Lex => SelectionPolicy::Lexicographic {
                delta_lex: self.policy.delta_lex,
            },
            PolicyKind::Adversarial => SelectionPolicy::AdversarialBoundary,
        }
    }

    /// Validates and lowers the config into run-ready pieces.
    pub fn build(&self) -> Result<BuiltScenario, ScenarioError> {
        if self.agents.len() < 2 {
            return Err(ScenarioError::TooFewAgents(self.agents.len()));
        }
        if !(self.kappa > 0.0 && self.kappa < 1.0) {
            return Err(ScenarioError::BadKappa(self.kappa));
        }
        if !(self.policy.delta_lex >= 0.0 && self.policy.delta_lex.is_finite()) {
            return Err(ScenarioError::BadDeltaLex(self.policy.delta_lex));
        }

        let mut agents = Vec::with_capacity(self.agents.len());
        let mut initial_states = Vec::with_capacity(self.agents.len());
        for (index, spec) in self.agents.iter().enumerate() {
            let agent = self.build_agent(index)?;
            if spec.x0.len() != agent.state_dim() {
                return Err(ScenarioError::BadInitialState {
                    index,
                    got: spec.x0.len(),
                    expected: agent.state_dim(),
                });
            }
            agents.push(agent);
            initial_states.push(spec.x0.clone());
        }

        for (w, expected) in [
            (&self.weights.q_diag, 2),
            (&self.weights.r_diag, agents[0].input_dim()),
        ] {
            if w.len() != expected {
                return Err(ScenarioError::BadWeights {
                    expected,
                    got: w.len(),
                });
            }
        }

        let schedule = self.schedule()?;
        let m = self.effective_horizon()?;
        let formula_m = self.formula_horizon()?;
        // A hypothesis check, not a gate: a run without joint connectivity
        // is still well defined, so only warn. Periodic schedules may need
        // a window up to one period before the union graph is rooted.
        let max_window = match &schedule.mode {
            crate::graph::ScheduleMode::Static(_) => 1,
            crate::graph::ScheduleMode::Periodic { period, .. } => (*period).max(1),
        };
        let jointly_connected =
            (1..=max_window).any(|b| check_joint_connectivity(&schedule, b, self.run.j_max));
        if !jointly_connected {
            crate::log_warn!(
                "scenario '{}': no bounded window's union graph has a spanning tree; consensus is not guaranteed",
                self.name
            );
        }

        let policy = self.policy();
        let agent_configs = agents
            .iter()
            .map(|agent| AgentConfigBody {
                agent: agent.clone(),
                m,
                q_diag: self.weights.q_diag.clone(),
                r_diag: self.weights.r_diag.clone(),
                kappa: self.kappa,
                policy: policy.clone(),
                target_velocity_zero: agent.state_dim() == 2 * agent.consensus_dim(),
                state_box: None,
                // Tighter than the solver defaults so every plan lands
                // an order of magnitude inside the 1e-6 closed-loop
                // monitors.
                solver: SolverSettings {
                    eps_abs: 1e-8,
                    eps_rel: 1e-9,
                    ..Default::default()
                },
            })
            .collect();

        Ok(BuiltScenario {
            name: self.name.clone(),
            agents,
            agent_configs,
            initial_states,
            schedule,
            m,
            formula_m,
            kappa: self.kappa,
            stop_tol: self.run.stop_tol,
            j_max: self.run.j_max,
            seed: self.run.seed,
            transport: self.transport.clone(),
            jointly_connected,
        })
    }

    /// Applies `key=value` overrides for the documented keys.
    pub fn apply_override(&mut self, key: &str, value: &str) -> Result<(), String> {
        match key {
            "policy" => {
                self.policy.kind = match value {
                    "plain" => PolicyKind::Plain,
                    "lex" => PolicyKind::Lex,
                    "adversarial" => PolicyKind::Adversarial,
                    other => return Err(format!("unknown policy '{other}'")),
                };
            }
            "M" => {
                let m: usize = value.parse().map_err(|_| format!("bad M '{value}'"))?;
                self.horizon = HorizonConfig::Explicit { m };
            }
            "J_max" => {
                self.run.j_max = value.parse().map_err(|_| format!("bad J_max '{value}'"))?;
            }
            "stop_tol" => {
                self.run.stop_tol = value
                    .parse()
                    .map_err(|_| format!("bad stop_tol '{value}'"))?;
            }
            "kappa" => {
                self.kappa = value.parse().map_err(|_| format!("bad kappa '{value}'"))?;
            }
            "delta_lex" => {
                self.policy.delta_lex = value
                    .parse()
                    .map_err(|_| format!("bad delta_lex '{value}'"))?;
            }
            "seed" => {
                self.run.seed = value.parse().map_err(|_| format!("bad seed '{value}'"))?;
            }
            "transport" => {
                self.transport.kind = match value {
                    "inprocess" => TransportKind::Inprocess,
                    "tcp" => TransportKind::Tcp,
                    other => return Err(format!("unknown transport '{other}'")),
                };
            }
            "port" => {
                self.transport.port =
                    Some(value.parse().map_err(|_| format!("bad port '{value}'"))?);
            }
            other => return Err(format!("unknown override key '{other}'")),
        }
        Ok(())
    }
}

/// The built-in boundary-trap scenario: four agents on the unit square's
/// corners, complete graph, one-step horizon, κ = 0.9, box inputs.
pub fn boundary_trap_config(policy: PolicyKind) -> ScenarioConfig {
    let corners = [[0.0, 0.0], [0.0, 1.0], [1.0, 0.0], [1.0, 1.0]];
    let mut edges = Vec::new();
    for a in 1..=4usize {
        for b in 1..=4usize {
            if a != b {
                edges.push((a, b));
            }
        }
    }
    ScenarioConfig {
        name: "boundary_trap".into(),
        agents: corners
            .iter()
            .map(|c| AgentSpec {
                model: ModelKind::SingleIntegrator,
                dim: 2,
                u_max: 1.0,
                input_set: InputSetKind::Box,
                x0: c.to_vec(),
            })
            .collect(),
        graph: GraphConfig::Static { edges },
        horizon: HorizonConfig::Explicit { m: 1 },
        weights: WeightsConfig::default(),
        kappa: 0.9,
        policy: PolicyConfig {
            kind: policy,
            delta_lex: if policy == PolicyKind::Lex { 1e-5 } else { 0.0 },
        },
        run: RunConfig {
            j_max: 1,
            stop_tol: 0.0,
            seed: 0,
        },
        transport: TransportConfig::default(),
        epsilon: 0.0,
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn si_config_json() -> String {
        r#"{
            "name": "test",
            "agents": [
                {"model": "single_integrator", "dim": 2, "u_max": 1.0, "input_set": "ball", "x0": [-4.0, 2.0]},
                {"model": "single_integrator", "dim": 2, "u_max": 1.0, "input_set": "ball", "x0": [3.5, 4.0]},
                {"model": "single_integrator", "dim": 2, "u_max": 1.0, "input_set": "ball", "x0": [4.5, -3.5]},
                {"model": "single_integrator", "dim": 2, "u_max": 1.0, "input_set": "ball", "x0": [-2.5, -4.0]}
            ],
            "graph": {"mode": "static", "edges": [[1,2],[2,3],[3,4],[4,1]]},
            "horizon": {"mode": "explicit", "M": 11},
            "weights": {"Q_diag": [1.0, 1.0], "R_diag": [1.0, 1.0]},
            "kappa": 0.8,
            "policy": {"kind": "lex", "delta_lex": 1e-5},
            "run": {"J_max": 60, "stop_tol": 0.001, "seed": 0},
            "transport": {"kind": "inprocess"}
        }"#
        .to_string()
    }

    #[test]
    fn parses_and_builds_reference_shape() {
        let cfg = ScenarioConfig::from_json(&si_config_json()).unwrap();
        let built = cfg.build().unwrap();
        assert_eq!(built.agents.len(), 4);
        assert_eq!(built.m, 11);
        assert_eq!(built.formula_m, Some(11));
        assert!(built.jointly_connected);
        assert!(built.agent_configs.iter().all(|c| !c.target_velocity_zero));
    }

    #[test]
    fn horizon_report_matches_closed_form() {
        let cfg = ScenarioConfig::from_json(&si_config_json()).unwrap();
        let report = cfg.horizon_report().unwrap();
        assert!((report.v0 - 102.5f64.sqrt()).abs() < 1e-9);
        assert_eq!(report.formula_m, 11);
        assert_eq!(report.configured_m, 11);
        assert!(report.pass);
    }

    #[test]
    fn override_below_bound_warns() {
        let mut cfg = ScenarioConfig::from_json(&si_config_json()).unwrap();
        cfg.apply_override("M", "5").unwrap();
        let report = cfg.horizon_report().unwrap();
        assert_eq!(report.configured_m, 5);
        assert!(!report.pass);
    }

    #[test]
    fn canonical_round_trip_is_semantically_identical() {
        let cfg = ScenarioConfig::from_json(&si_config_json()).unwrap();
        let canon = cfg.to_canonical_json();
        let back = ScenarioConfig::from_json(&canon).unwrap();
        assert_eq!(cfg, back);
        // Canonicalizing twice is a fixed point.
        assert_eq!(canon, back.to_canonical_json());
    }

    #[test]
    fn validation_rejects_bad_configs() {
        let mut cfg = ScenarioConfig::from_json(&si_config_json()).unwrap();
        cfg.kappa = 1.5;
        assert!(matches!(cfg.build(), Err(ScenarioError::BadKappa(_))));

        let mut cfg = ScenarioConfig::from_json(&si_config_json()).unwrap();
        cfg.agents.truncate(1);
        assert!(matches!(cfg.build(), Err(ScenarioError::TooFewAgents(1))));

        let mut cfg = ScenarioConfig::from_json(&si_config_json()).unwrap();
        cfg.agents[0].x0 = vec![0.0];
        assert!(matches!(
            cfg.build(),
            Err(ScenarioError::BadInitialState { .. })
        ));

        let mut cfg = ScenarioConfig::from_json(&si_config_json()).unwrap();
        cfg.horizon = HorizonConfig::AutoDi;
        assert!(matches!(cfg.build(), Err(ScenarioError::MixedModels(_))));
    }

    #[test]
    fn auto_horizon_uses_formula() {
        let mut cfg = ScenarioConfig::from_json(&si_config_json()).unwrap();
        cfg.horizon = HorizonConfig::AutoSi;
        assert_eq!(cfg.effective_horizon().unwrap(), 11);
    }

    #[test]
    fn union_only_connectivity_is_recognized() {
        // Neither slot alone reaches agent 3, but their union does.
        let mut cfg = ScenarioConfig::from_json(&si_config_json()).unwrap();
        cfg.agents.truncate(3);
        cfg.graph = GraphConfig::Periodic {
            slots: vec![vec![(1, 2)], vec![(2, 3)]],
            period: 2,
        };
        cfg.horizon = HorizonConfig::Explicit { m: 11 };
        let built = cfg.build().unwrap();
        assert!(built.jointly_connected);

        // A schedule that never links agent 3 is flagged.
        let mut cut = ScenarioConfig::from_json(&si_config_json()).unwrap();
        cut.agents.truncate(3);
        cut.graph = GraphConfig::Static {
            edges: vec![(1, 2), (2, 1)],
        };
        cut.horizon = HorizonConfig::Explicit { m: 11 };
        assert!(!cut.build().unwrap().jointly_connected);
    }

    #[test]
    fn boundary_trap_builds() {
        let built = boundary_trap_config(PolicyKind::Adversarial)
            .build()
            .unwrap();
        assert_eq!(built.m, 1);
        assert_eq!(built.agents.len(), 4);
        assert!(matches!(built.agents[0].input_set(), InputSet::Box { .. }));
    }
}
