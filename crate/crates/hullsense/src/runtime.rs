//! Orchestration of the outer loop: the coordinator samples consensus
//! states, routes neighbor samples to the agents, collects their plans,
//! propagates the true plants open loop through the horizon, and records
//! metrics. Agents are pure planners; the coordinator owns the plants.
//!
//! Both transports run the identical state machines: in-process mode calls
//! the planner directly, TCP mode speaks the framed protocol of
//! [`crate::protocol`] with one blocking request per agent per outer step
//! and a barrier before the plants advance. Because the solver is
//! deterministic and JSON numbers round-trip exactly, the two modes
//! produce identical records.

use std::collections::BTreeMap;
use std::net::{TcpListener, TcpStream};
use std::sync::Arc;
use std::time::Duration;

use thiserror::Error;

use crate::dynamics::{step, LinearAgent};
use crate::geometry::{barycenter, convex_hull, diameter, GeometryError, Point};
use crate::graph::{neighbors, GraphError, GraphSchedule};
use crate::linalg::{norm, sub, Mat};
use crate::ocp::{select_plan, OcpSpec, PlanResult};
use crate::protocol::{AgentConfigBody, Message, MsgStream, PlanResultBody, WireError};
use crate::scenario::{BuiltScenario, ScenarioConfig, ScenarioError, TransportKind};

/// Slack on the diameter and contraction monitors; solver tolerances make
/// tiny overshoots legitimate.
pub const MONITOR_TOL: f64 = 1e-6;

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum StopReason {
    MaxSteps,
    DiameterBelow(f64),
    Error,
}

/// The coordinator's view of the network.
#[derive(Debug, Clone)]
pub struct NetworkState {
    pub j: usize,
    pub true_states: Vec<Vec<f64>>,
    pub last_inputs: Vec<Vec<f64>>,
    pub v_history: Vec<f64>,
    pub stop_reason: Option<StopReason>,
}

/// Per-agent planning metrics for one outer step.
#[derive(Debug, Clone, PartialEq)]
pub struct AgentRecord {
    pub agent_id: usize,
    pub phi: f64,
    pub hull_dim: usize,
    pub j_star: f64,
    pub cost: f64,
    pub lex_active: bool,
    pub t_primary_ms: f64,
    pub t_lex_ms: f64,
    pub n_var: usize,
    pub n_eq: usize,
    pub n_ineq: usize,
    pub status: String,
}

#[derive(Debug, Clone, PartialEq)]
pub struct StepRecord {
    pub j: usize,
    /// Disagreement diameter of the samples at this outer step.
    pub v: f64,
    pub agents: Vec<AgentRecord>,
}

/// One inner-step state sample; `input` is the input applied at `t`
/// (absent on the final row).
#[derive(Debug, Clone, PartialEq)]
pub struct TrajectoryPoint {
    pub t: usize,
    pub agent_id: usize,
    pub state: Vec<f64>,
    pub input: Option<Vec<f64>>,
}

/// Closed-loop health counters: how far the diameter ever increased and
/// how far any agent overshot its contraction bound.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct MonitorReport {
    pub max_v_increase: f64,
    pub v_violations: usize,
    pub max_contraction_excess: f64,
    pub contraction_violations: usize,
}

#[derive(Debug, Clone)]
pub struct RunArtifacts {
    pub state: NetworkState,
    pub records: Vec<StepRecord>,
    pub trajectory: Vec<TrajectoryPoint>,
    pub monitor: MonitorReport,
    pub m: usize,
    pub formula_m: Option<usize>,
    pub name: String,
    /// True when every agent's state splits into position and velocity
    /// halves (the consensus variable being the position block).
    pub velocity_split: bool,
}

impl RunArtifacts {
    pub fn final_v(&self) -> f64 {
        *self
            .state
            .v_history
            .last()
            .expect("v_history always has the initial value")
    }

    pub fn steps_run(&self) -> usize {
        self.records.len()
    }

    /// Largest terminal velocity norm across agents; `None` unless every
    /// state splits into position and velocity halves.
    pub fn max_terminal_velocity(&self) -> Option<f64> {
        if !self.velocity_split {
            return None;
        }
        Some(
            self.state
                .true_states
                .iter()
                .map(|x| norm(&x[x.len() / 2..]))
                .fold(0.0, f64::max),
        )
    }
}

#[derive(Debug, Error)]
pub enum RuntimeError {
    #[error("agent {agent_id} failed at outer step {j}: {detail}")]
    AgentStep {
        agent_id: usize,
        j: usize,
        detail: String,
    },
    #[error("agent {agent_id}: planning requires a linear model")]
    NonLinearPlant { agent_id: usize },
    #[error("handshake: {0}")]
    Handshake(String),
    #[error(transparent)]
    Scenario(#[from] ScenarioError),
    #[error(transparent)]
    Geometry(#[from] GeometryError),
    #[error(transparent)]
    Graph(#[from] GraphError),
    #[error(transparent)]
    Wire(#[from] WireError),
    #[error("io: {0}")]
    Io(#[from] std::io::Error),
}

/// Opaque discrete-time step map for simulation-only dynamics.
pub type StepFn = Arc<dyn Fn(&[f64], &[f64]) -> Vec<f64> + Send + Sync>;

/// A plant the coordinator can propagate: the linear model agents plan
/// with, or an opaque step map for simulation-only dynamics.
#[derive(Clone)]
pub enum Plant {
    Linear(LinearAgent),
    BlackBox {
        consensus_proj: Mat,
        step_fn: StepFn,
    },
}

impl std::fmt::Debug for Plant {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            Plant::Linear(a) => f.debug_tuple("Linear").field(a).finish(),
            Plant::BlackBox { .. } => f.write_str("BlackBox"),
        }
    }
}

impl Plant {
    pub fn step(&self, x: &[f64], u: &[f64]) -> Vec<f64> {
        match self {
            Plant::Linear(agent) => step(agent, x, u).expect("plant dimensions fixed at build"),
            Plant::BlackBox { step_fn, .. } => step_fn(x, u),
        }
    }

    pub fn project(&self, x: &[f64]) -> Vec<f64> {
        match self {
            Plant::Linear(agent) => agent.project(x),
            Plant::BlackBox { consensus_proj, .. } => consensus_proj.matvec(x),
        }
    }

    /// The prediction model, when one exists; planning rejects opaque
    /// plants.
    pub fn as_linear(&self) -> Option<&LinearAgent> {
        match self {
            Plant::Linear(agent) => Some(agent),
            Plant::BlackBox { .. } => None,
        }
    }
}

/// The agent-side state machine: builds the neighbor hull and barycenter
/// from the received samples, runs the selection policy, and carries the
/// previous step's final input for the rate term.
#[derive(Debug, Clone)]
pub struct AgentPlanner {
    pub agent_id: usize,
    config: AgentConfigBody,
    u_prev: Vec<f64>,
}

impl AgentPlanner {
    pub fn new(agent_id: usize, config: AgentConfigBody) -> Self {
        let u_prev = vec![0.0; config.agent.input_dim()];
        AgentPlanner {
            agent_id,
            config,
            u_prev,
        }
    }

    /// From a plant description; errors on simulation-only models.
    pub fn from_plant(
        agent_id: usize,
        plant: &Plant,
        config: AgentConfigBody,
    ) -> Result<Self, RuntimeError> {
        if plant.as_linear().is_none() {
            return Err(RuntimeError::NonLinearPlant { agent_id });
        }
        Ok(AgentPlanner::new(agent_id, config))
    }

    pub fn plan(
        &mut self,
        j: usize,
        own_state: &[f64],
        samples: &BTreeMap<usize, Vec<f64>>,
    ) -> Result<PlanResult, RuntimeError> {
        let own_sample = self.config.agent.project(own_state);
        let mut points = vec![Point::new(own_sample)];
        points.extend(samples.values().map(|s| Point::new(s.clone())));
        let hull = convex_hull(&points).map_err(|e| self.step_err(j, &e))?;
        let zbar = barycenter(&points).map_err(|e| self.step_err(j, &e))?;

        let spec = OcpSpec {
            agent: self.config.agent.clone(),
            horizon: self.config.m,
            q_diag: self.config.q_diag.clone(),
            r_diag: self.config.r_diag.clone(),
            kappa: self.config.kappa,
            hull,
            zbar,
            x0: own_state.to_vec(),
            u_prev: self.u_prev.clone(),
            target_velocity_zero: self.config.target_velocity_zero,
            state_box: self.config.state_box.clone(),
        };
        let plan = select_plan(&spec, &self.config.policy, &self.config.solver)
            .map_err(|e| self.step_err(j, &e))?;
        self.u_prev = plan.u_seq.last().expect("horizon is at least 1").clone();
        Ok(plan)
    }

    fn step_err(&self, j: usize, e: &dyn std::fmt::Display) -> RuntimeError {
        RuntimeError::AgentStep {
            agent_id: self.agent_id,
            j,
            detail: e.to_string(),
        }
    }

    fn plan_body(
        &mut self,
        j: usize,
        own_state: &[f64],
        samples: &BTreeMap<usize, Vec<f64>>,
    ) -> Result<PlanResultBody, RuntimeError> {
        let plan = self.plan(j, own_state, samples)?;
        Ok(PlanResultBody {
            j,
            terminal: plan.terminal_consensus(&self.config.agent),
            j_star: plan.j_star,
            cost: plan.cost,
            phi: plan.phi,
            hull_dim: plan.hull_dim,
            lex_active: plan.lex_active,
            t_primary_ms: plan.t_primary_ms,
            t_lex_ms: plan.t_lex_ms,
            n_var: plan.n_var,
            n_eq: plan.n_eq,
            n_ineq: plan.n_ineq,
            status: "optimal".to_string(),
            u_seq: plan.u_seq,
        })
    }
}

/// One agent endpoint the coordinator can ask for plans.
pub trait AgentChannel: Send {
    fn agent_id(&self) -> usize;

    fn plan(
        &mut self,
        j: usize,
        own_state: &[f64],
        samples: &BTreeMap<usize, Vec<f64>>,
    ) -> Result<PlanResultBody, RuntimeError>;

    fn shutdown(&mut self) -> Result<(), RuntimeError>;
}

/// Direct in-process channel around an [`AgentPlanner`].
pub struct InProcessChannel {
    planner: AgentPlanner,
}

impl InProcessChannel {
    pub fn new(planner: AgentPlanner) -> Self {
        InProcessChannel { planner }
    }
}

impl AgentChannel for InProcessChannel {
    fn agent_id(&self) -> usize {
        self.planner.agent_id
    }

    fn plan(
        &mut self,
        j: usize,
        own_state: &[f64],
        samples: &BTreeMap<usize, Vec<f64>>,
    ) -> Result<PlanResultBody, RuntimeError> {
        self.planner.plan_body(j, own_state, samples)
    }

    fn shutdown(&mut self) -> Result<(), RuntimeError> {
        Ok(())
    }
}

/// Coordinator end of one TCP agent connection (post-handshake).
pub struct TcpChannel {
    agent_id: usize,
    stream: MsgStream<TcpStream>,
}

impl AgentChannel for TcpChannel {
    fn agent_id(&self) -> usize {
        self.agent_id
    }

    fn plan(
        &mut self,
        j: usize,
        own_state: &[f64],
        samples: &BTreeMap<usize, Vec<f64>>,
    ) -> Result<PlanResultBody, RuntimeError> {
        let request = Message::NeighborStates {
            j,
            samples: samples.clone(),
            own_state: own_state.to_vec(),
        };
        match self.stream.exchange(&request)? {
            Message::PlanResult(body) if body.status == "optimal" => Ok(body),
            Message::PlanResult(body) => Err(RuntimeError::AgentStep {
                agent_id: self.agent_id,
                j,
                detail: body.status,
            }),
            other => Err(RuntimeError::AgentStep {
                agent_id: self.agent_id,
                j,
                detail: format!("unexpected reply {other:?}"),
            }),
        }
    }

    fn shutdown(&mut self) -> Result<(), RuntimeError> {
        match self.stream.exchange(&Message::Shutdown {})? {
            Message::Ack {} => Ok(()),
            other => Err(RuntimeError::Handshake(format!(
                "expected Ack, got {other:?}"
            ))),
        }
    }
}

/// The synchronous outer-loop driver.
pub struct Coordinator {
    plants: Vec<Plant>,
    schedule: GraphSchedule,
    m: usize,
    kappa: f64,
    stop_tol: f64,
    j_max: usize,
    state: NetworkState,
    records: Vec<StepRecord>,
    trajectory: Vec<TrajectoryPoint>,
    monitor: MonitorReport,
}

impl Coordinator {
    pub fn new(built: &BuiltScenario) -> Self {
        let plants = built.agents.iter().cloned().map(Plant::Linear).collect();
        let last_inputs = built
            .agents
            .iter()
            .map(|a| vec![0.0; a.input_dim()])
            .collect();
        Coordinator {
            plants,
            schedule: built.schedule.clone(),
            m: built.m,
            kappa: built.kappa,
            stop_tol: built.stop_tol,
            j_max: built.j_max,
            state: NetworkState {
                j: 0,
                true_states: built.initial_states.clone(),
                last_inputs,
                v_history: Vec::new(),
                stop_reason: None,
            },
            records: Vec::new(),
            trajectory: Vec::new(),
            monitor: MonitorReport::default(),
        }
    }

    fn samples(&self) -> Vec<Vec<f64>> {
        self.plants
            .iter()
            .zip(&self.state.true_states)
            .map(|(p, x)| p.project(x))
            .collect()
    }

    /// Samples the current diameter, feeds the monotonicity monitor, and
    /// appends it to the history. Idempotent per outer step.
    fn observe_diameter(&mut self) -> Result<f64, RuntimeError> {
        if self.state.v_history.len() > self.state.j {
            return Ok(*self.state.v_history.last().unwrap());
        }
        let pts: Vec<Point> = self.samples().into_iter().map(Point::new).collect();
        let v = diameter(&pts)?;
        if let Some(prev) = self.state.v_history.last() {
            let increase = v - prev;
            self.monitor.max_v_increase = self.monitor.max_v_increase.max(increase);
            if increase > MONITOR_TOL {
                self.monitor.v_violations += 1;
                crate::log_warn!(
                    "diameter increased by {increase:.3e} entering step {}",
                    self.state.j
                );
            }
        }
        self.state.v_history.push(v);
        Ok(v)
    }

    /// One synchronous outer step: sample, fan out neighbor states, barrier
    /// on all plans, then roll every plant forward `m` inner steps.
    pub fn run_outer_step(
        &mut self,
        channels: &mut [Box<dyn AgentChannel>],
    ) -> Result<(), RuntimeError> {
        let v = self.observe_diameter()?;
        let j = self.state.j;
        let count = self.plants.len();
        let z = self.samples();

        let mut neighbor_maps = Vec::with_capacity(count);
        for i in 1..=count {
            let mut map = BTreeMap::new();
            for k in neighbors(&self.schedule, i, j)? {
                map.insert(k, z[k - 1].clone());
            }
            neighbor_maps.push(map);
        }

        // Fan out and barrier. Channels answer concurrently (one thread per
        // agent); results are collected by agent index.
        let mut bodies: Vec<Option<Result<PlanResultBody, RuntimeError>>> =
            (0..count).map(|_| None).collect();
        std::thread::scope(|scope| {
            for ((channel, slot), (own, map)) in channels
                .iter_mut()
                .zip(bodies.iter_mut())
                .zip(self.state.true_states.iter().zip(&neighbor_maps))
            {
                scope.spawn(move || {
                    *slot = Some(channel.plan(j, own, map));
                });
            }
        });

        let mut step_agents = Vec::with_capacity(count);
        let mut plans = Vec::with_capacity(count);
        for (idx, slot) in bodies.into_iter().enumerate() {
            let body = slot.expect("scoped thread filled every slot")?;
            if body.u_seq.len() != self.m {
                return Err(RuntimeError::AgentStep {
                    agent_id: idx + 1,
                    j,
                    detail: format!("plan has {} inputs, expected {}", body.u_seq.len(), self.m),
                });
            }
            step_agents.push(AgentRecord {
                agent_id: idx + 1,
                phi: body.phi,
                hull_dim: body.hull_dim,
                j_star: body.j_star,
                cost: body.cost,
                lex_active: body.lex_active,
                t_primary_ms: body.t_primary_ms,
                t_lex_ms: body.t_lex_ms,
                n_var: body.n_var,
                n_eq: body.n_eq,
                n_ineq: body.n_ineq,
                status: body.status.clone(),
            });
            plans.push(body.u_seq);
        }

        // Contraction monitor needs this step's barycenters, recomputed
        // coordinator-side from the same sample sets the agents saw.
        let mut zbars = Vec::with_capacity(count);
        for (i, map) in neighbor_maps.iter().enumerate() {
            let mut pts = vec![Point::new(z[i].clone())];
            pts.extend(map.values().map(|s| Point::new(s.clone())));
            zbars.push(barycenter(&pts)?);
        }

        // Open-loop propagation through the horizon.
        for (i, plan) in plans.iter().enumerate() {
            let mut x = self.state.true_states[i].clone();
            for (k, u) in plan.iter().enumerate() {
                self.trajectory.push(TrajectoryPoint {
                    t: j * self.m + k,
                    agent_id: i + 1,
                    state: x.clone(),
                    input: Some(u.clone()),
                });
                x = self.plants[i].step(&x, u);
            }
            self.state.last_inputs[i] = plan.last().expect("m >= 1").clone();
            self.state.true_states[i] = x;
        }

        for (i, zbar) in zbars.iter().enumerate() {
            let before = norm(&sub(&z[i], zbar.coords()));
            let after = norm(&sub(
                &self.plants[i].project(&self.state.true_states[i]),
                zbar.coords(),
            ));
            let excess = after - self.kappa * before;
            self.monitor.max_contraction_excess = self.monitor.max_contraction_excess.max(excess);
            if excess > MONITOR_TOL {
                self.monitor.contraction_violations += 1;
                crate::log_warn!(
                    "agent {} overshot its contraction bound at step {} by {excess:.3e}",
                    i + 1,
                    j
                );
            }
        }

        self.records.push(StepRecord {
            j,
            v,
            agents: step_agents,
        });
        self.state.j += 1;
        Ok(())
    }

    /// Runs until the diameter drops below the stop tolerance or the step
    /// budget is exhausted.
    pub fn run(
        mut self,
        channels: &mut [Box<dyn AgentChannel>],
    ) -> Result<RunArtifactsCore, RuntimeError> {
        loop {
            let v = self.observe_diameter()?;
            if v < self.stop_tol {
                self.state.stop_reason = Some(StopReason::DiameterBelow(self.stop_tol));
                break;
            }
            if self.state.j >= self.j_max {
                self.state.stop_reason = Some(StopReason::MaxSteps);
                break;
            }
            if let Err(e) = self.run_outer_step(channels) {
                self.state.stop_reason = Some(StopReason::Error);
                return Err(e);
            }
        }

        // Final state rows complete the trajectory.
        let t_end = self.state.j * self.m;
        for (i, x) in self.state.true_states.iter().enumerate() {
            self.trajectory.push(TrajectoryPoint {
                t: t_end,
                agent_id: i + 1,
                state: x.clone(),
                input: None,
            });
        }

        Ok(RunArtifactsCore {
            state: self.state,
            records: self.records,
            trajectory: self.trajectory,
            monitor: self.monitor,
        })
    }
}

/// Coordinator outputs before scenario metadata is attached.
pub struct RunArtifactsCore {
    pub state: NetworkState,
    pub records: Vec<StepRecord>,
    pub trajectory: Vec<TrajectoryPoint>,
    pub monitor: MonitorReport,
}

fn finish(core: RunArtifactsCore, built: &BuiltScenario) -> RunArtifacts {
    RunArtifacts {
        state: core.state,
        records: core.records,
        trajectory: core.trajectory,
        monitor: core.monitor,
        m: built.m,
        formula_m: built.formula_m,
        name: built.name.clone(),
        velocity_split: built
            .agents
            .iter()
            .all(|a| a.state_dim() == 2 * a.consensus_dim()),
    }
}

/// Runs a scenario with in-process agents.
pub fn run_in_process(config: &ScenarioConfig) -> Result<RunArtifacts, RuntimeError> {
    let built = config.build()?;
    let mut channels: Vec<Box<dyn AgentChannel>> = built
        .agent_configs
        .iter()
        .enumerate()
        .map(|(i, cfg)| {
            Box::new(InProcessChannel::new(AgentPlanner::new(i + 1, cfg.clone())))
                as Box<dyn AgentChannel>
        })
        .collect();
    let core = Coordinator::new(&built).run(&mut channels)?;
    for c in &mut channels {
        c.shutdown()?;
    }
    Ok(finish(core, &built))
}

/// Accepts `count` agent connections, answering each `Hello` with that
/// agent's configuration.
fn accept_agents(
    listener: &TcpListener,
    built: &BuiltScenario,
    timeout: Option<Duration>,
) -> Result<Vec<Box<dyn AgentChannel>>, RuntimeError> {
    let count = built.agents.len();
    let mut slots: Vec<Option<TcpChannel>> = (0..count).map(|_| None).collect();
    let mut connected = 0;
    while connected < count {
        let (stream, _addr) = listener.accept()?;
        let mut stream = MsgStream::over_tcp(stream, timeout)?;
        let hello = stream.recv_request()?;
        let agent_id = match hello {
            Message::Hello { agent_id } => agent_id,
            other => {
                return Err(RuntimeError::Handshake(format!(
                    "expected Hello, got {other:?}"
                )))
            }
        };
        if agent_id == 0 || agent_id > count {
            stream.send_reply(&Message::ProtocolError {
                code: "bad_agent_id".into(),
                detail: format!("agent id {agent_id} out of range 1..={count}"),
            })?;
            return Err(RuntimeError::Handshake(format!(
                "agent id {agent_id} out of range"
            )));
        }
        if slots[agent_id - 1].is_some() {
            stream.send_reply(&Message::ProtocolError {
                code: "duplicate_agent".into(),
                detail: format!("agent {agent_id} already connected"),
            })?;
            return Err(RuntimeError::Handshake(format!(
                "duplicate agent id {agent_id}"
            )));
        }
        stream.send_reply(&Message::AgentConfig(
            built.agent_configs[agent_id - 1].clone(),
        ))?;
        slots[agent_id - 1] = Some(TcpChannel { agent_id, stream });
        connected += 1;
    }
    Ok(slots
        .into_iter()
        .map(|s| Box::new(s.expect("all slots filled")) as Box<dyn AgentChannel>)
        .collect())
}

/// TCP coordinator for externally launched agents: listens on `port`,
/// waits for every agent's handshake, runs the scenario, then shuts the
/// agents down.
pub fn coordinate_tcp(config: &ScenarioConfig, port: u16) -> Result<RunArtifacts, RuntimeError> {
    let built = config.build()?;
    let listener = TcpListener::bind(("127.0.0.1", port))?;
    let mut channels = accept_agents(&listener, &built, None)?;
    let core = Coordinator::new(&built).run(&mut channels)?;
    for c in &mut channels {
        c.shutdown()?;
    }
    Ok(finish(core, &built))
}

/// Self-hosted TCP run: binds a loopback listener and spawns one agent
/// thread per agent, exercising the full wire protocol in one process.
pub fn run_tcp_self_hosted(config: &ScenarioConfig) -> Result<RunArtifacts, RuntimeError> {
    let built = config.build()?;
    let port = config.transport.port.unwrap_or(0);
    let listener = TcpListener::bind(("127.0.0.1", port))?;
    let addr = listener.local_addr()?;

    let count = built.agents.len();
    std::thread::scope(|scope| {
        let mut workers = Vec::with_capacity(count);
        for agent_id in 1..=count {
            workers.push(scope.spawn(move || serve_agent_tcp(&addr.to_string(), agent_id, None)));
        }

        let result = (|| {
            let mut channels = accept_agents(&listener, &built, None)?;
            let core = Coordinator::new(&built).run(&mut channels)?;
            for c in &mut channels {
                c.shutdown()?;
            }
            Ok(finish(core, &built))
        })();

        for w in workers {
            match w.join() {
                Ok(Ok(())) => {}
                Ok(Err(e)) => {
                    if result.is_ok() {
                        return Err(e);
                    }
                }
                Err(_) => {
                    return Err(RuntimeError::Handshake("agent thread panicked".into()));
                }
            }
        }
        result
    })
}

/// Dispatches on the config's transport.
pub fn run_scenario(config: &ScenarioConfig) -> Result<RunArtifacts, RuntimeError> {
    match config.transport.kind {
        TransportKind::Inprocess => run_in_process(config),
        TransportKind::Tcp => run_tcp_self_hosted(config),
    }
}

/// Agent process entry: connect, introduce ourselves, receive the
/// configuration, then serve planning requests until `Shutdown`.
pub fn serve_agent_tcp(
    coordinator: &str,
    agent_id: usize,
    timeout: Option<Duration>,
) -> Result<(), RuntimeError> {
    let stream = TcpStream::connect(coordinator)?;
    let mut stream = MsgStream::over_tcp(stream, timeout)?;
    let config = match stream.exchange(&Message::Hello { agent_id })? {
        Message::AgentConfig(body) => body,
        Message::ProtocolError { code, detail } => {
            return Err(RuntimeError::Handshake(format!("{code}: {detail}")))
        }
        other => {
            return Err(RuntimeError::Handshake(format!(
                "expected AgentConfig, got {other:?}"
            )))
        }
    };
    let mut planner = AgentPlanner::new(agent_id, config);

    loop {
        match stream.recv_request()? {
            Message::NeighborStates {
                j,
                samples,
                own_state,
            } => {
                let reply = match planner.plan_body(j, &own_state, &samples) {
                    Ok(body) => Message::PlanResult(body),
                    // Solve failures ride back as a status; the coordinator
                    // decides to abort.
                    Err(e) => Message::PlanResult(PlanResultBody {
                        j,
                        u_seq: vec![],
                        terminal: vec![],
                        j_star: 0.0,
                        cost: 0.0,
                        phi: 0.0,
                        hull_dim: 0,
                        lex_active: false,
                        t_primary_ms: 0.0,
                        t_lex_ms: 0.0,
                        n_var: 0,
                        n_eq: 0,
                        n_ineq: 0,
                        status: format!("error: {e}"),
                    }),
                };
                stream.send_reply(&reply)?;
            }
            Message::Shutdown {} => {
                stream.send_reply(&Message::Ack {})?;
                return Ok(());
            }
            other => {
                stream.send_reply(&Message::ProtocolError {
                    code: "unexpected_request".into(),
                    detail: format!("{other:?}"),
                })?;
                return Err(RuntimeError::Handshake(format!(
                    "unexpected request {other:?}"
                )));
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::scenario::{boundary_trap_config, PolicyKind};

    fn tiny_two_agent_config() -> ScenarioConfig {
        ScenarioConfig::from_json(
            r#"{
                "name": "pair",
                "agents": [
                    {"model": "single_integrator", "dim": 2, "u_max": 1.0, "x0": [0.0, 0.0]},
                    {"model": "single_integrator", "dim": 2, "u_max": 1.0, "x0": [2.0, 0.0]}
                ],
                "graph": {"mode": "static", "edges": [[1,2],[2,1]]},
                "horizon": {"mode": "auto_si"},
                "kappa": 0.8,
                "policy": {"kind": "lex", "delta_lex": 1e-5},
                "run": {"J_max": 30, "stop_tol": 0.001}
            }"#,
        )
        .unwrap()
    }

    #[test]
    fn two_agents_reach_consensus() {
        let artifacts = run_in_process(&tiny_two_agent_config()).unwrap();
        assert!(matches!(
            artifacts.state.stop_reason,
            Some(StopReason::DiameterBelow(_))
        ));
        assert!(artifacts.final_v() < 1e-3);
        assert_eq!(artifacts.monitor.v_violations, 0);
        assert_eq!(artifacts.monitor.contraction_violations, 0);
        // Diameter history never increases beyond tolerance.
        for w in artifacts.state.v_history.windows(2) {
            assert!(w[1] <= w[0] + MONITOR_TOL);
        }
    }

    #[test]
    fn coincident_agents_stop_immediately() {
        let mut cfg = tiny_two_agent_config();
        cfg.agents[1].x0 = vec![0.0, 0.0];
        let artifacts = run_in_process(&cfg).unwrap();
        assert_eq!(artifacts.steps_run(), 0);
        assert_eq!(artifacts.final_v(), 0.0);
    }

    #[test]
    fn coincident_agents_plan_zero_cost_steps() {
        // Forcing a step at consensus: every plan is zero-cost and the
        // diameter stays at zero.
        let mut cfg = tiny_two_agent_config();
        cfg.agents[1].x0 = vec![0.0, 0.0];
        cfg.run.stop_tol = 0.0;
        cfg.run.j_max = 1;
        let artifacts = run_in_process(&cfg).unwrap();
        assert_eq!(artifacts.steps_run(), 1);
        assert_eq!(artifacts.final_v(), 0.0);
        for agent in &artifacts.records[0].agents {
            assert!(agent.j_star < 1e-10);
            assert_eq!(agent.hull_dim, 0);
        }
    }

    #[test]
    fn zero_step_budget_stops_with_initial_diameter_only() {
        let mut cfg = tiny_two_agent_config();
        cfg.run.j_max = 0;
        let artifacts = run_in_process(&cfg).unwrap();
        assert!(matches!(
            artifacts.state.stop_reason,
            Some(StopReason::MaxSteps)
        ));
        assert_eq!(artifacts.state.v_history.len(), 1);
        assert!((artifacts.final_v() - 2.0).abs() < 1e-12);
        assert!(artifacts.records.is_empty());
    }

    #[test]
    fn boundary_trap_step_completes_under_adversary() {
        let cfg = boundary_trap_config(PolicyKind::Adversarial);
        let artifacts = run_in_process(&cfg).unwrap();
        assert_eq!(artifacts.steps_run(), 1);
        let rec = &artifacts.records[0];
        // Agent 1 lands on the hull boundary yet the step completes and
        // the diameter does not grow.
        assert!(rec.agents[0].phi <= 1e-6);
        assert_eq!(artifacts.monitor.v_violations, 0);
    }

    #[test]
    fn ring_neighbor_hull_is_a_segment() {
        // Under the directed ring each agent sees one neighbor, so every
        // hull is a two-point segment and phi is at most half its length.
        let cfg = tiny_two_agent_config();
        let artifacts = run_in_process(&cfg).unwrap();
        let rec = &artifacts.records[0];
        assert!(rec.agents.iter().all(|a| a.phi > 0.0));
    }

    #[test]
    fn switching_graph_still_reaches_consensus() {
        // Neither slot's graph is rooted on its own; only the union over a
        // two-step window carries information across all three agents.
        let cfg = ScenarioConfig::from_json(
            r#"{
                "name": "switching",
                "agents": [
                    {"model": "single_integrator", "dim": 2, "u_max": 1.0, "x0": [0.0, 0.0]},
                    {"model": "single_integrator", "dim": 2, "u_max": 1.0, "x0": [3.0, 0.0]},
                    {"model": "single_integrator", "dim": 2, "u_max": 1.0, "x0": [0.0, 3.0]}
                ],
                "graph": {"mode": "periodic", "slots": [[[1,2],[2,1]], [[2,3],[3,2]]], "period": 2},
                "horizon": {"mode": "explicit", "M": 5},
                "kappa": 0.8,
                "policy": {"kind": "lex", "delta_lex": 1e-5},
                "run": {"J_max": 40, "stop_tol": 0.01}
            }"#,
        )
        .unwrap();
        let artifacts = run_in_process(&cfg).unwrap();
        let v0 = artifacts.state.v_history[0];
        assert!(
            artifacts.final_v() < v0 / 10.0,
            "V {} -> {}",
            v0,
            artifacts.final_v()
        );
        assert_eq!(artifacts.monitor.v_violations, 0);
        for w in artifacts.state.v_history.windows(2) {
            assert!(w[1] <= w[0] + MONITOR_TOL);
        }
    }

    #[test]
    fn black_box_plants_cannot_plan() {
        let plant = Plant::BlackBox {
            consensus_proj: Mat::identity(2),
            step_fn: Arc::new(|x, _u| x.to_vec()),
        };
        let cfg = tiny_two_agent_config().build().unwrap();
        let err = AgentPlanner::from_plant(1, &plant, cfg.agent_configs[0].clone()).unwrap_err();
        assert!(matches!(err, RuntimeError::NonLinearPlant { agent_id: 1 }));
    }

    #[test]
    fn tcp_self_hosted_matches_in_process() {
        let mut cfg = tiny_two_agent_config();
        cfg.run.j_max = 3;
        cfg.run.stop_tol = 0.0;
        let a = run_in_process(&cfg).unwrap();
        cfg.transport.kind = TransportKind::Tcp;
        let b = run_tcp_self_hosted(&cfg).unwrap();
        assert_eq!(a.state.v_history, b.state.v_history);
        assert_eq!(a.records.len(), b.records.len());
        for (ra, rb) in a.records.iter().zip(&b.records) {
            for (x, y) in ra.agents.iter().zip(&rb.agents) {
                assert_eq!(x.phi, y.phi);
                assert_eq!(x.j_star, y.j_star);
                assert_eq!(x.cost, y.cost);
                assert_eq!(x.lex_active, y.lex_active);
                assert_eq!((x.n_var, x.n_eq, x.n_ineq), (y.n_var, y.n_eq, y.n_ineq));
            }
        }
        assert_eq!(a.trajectory, b.trajectory);
    }
}
