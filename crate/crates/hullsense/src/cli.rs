//! Command-line entry points and file emission: scenario runs with CSV and
//! JSON outputs, the horizon checker, the boundary-trap verifier, and the
//! TCP coordinator/agent processes.

use std::fmt::Write as _;
use std::path::Path;

use serde::Serialize;

use crate::geometry::{contains, convex_hull, dist_to_hull, Point};
use crate::linalg::{norm, sub};
use crate::runtime::{self, RunArtifacts, RuntimeError, StopReason};
use crate::scenario::{boundary_trap_config, ModelKind, PolicyKind, ScenarioConfig};

/// One row of `metrics.csv`.
#[derive(Debug, Clone, PartialEq)]
pub struct MetricsRow {
    pub j: usize,
    pub agent_id: usize,
    pub v: f64,
    pub phi: f64,
    pub j_star: f64,
    pub lex_active: u8,
    pub t_primary_ms: f64,
    pub t_lex_ms: f64,
    pub n_var: usize,
    pub n_eq: usize,
    pub n_ineq: usize,
}

pub const METRICS_HEADER: &str =
    "j,agent_id,V,phi,J_star,lex_active,t_primary_ms,t_lex_ms,n_var,n_eq,n_ineq";

impl MetricsRow {
    pub fn to_csv_line(&self) -> String {
        format!(
            "{},{},{},{},{},{},{},{},{},{},{}",
            self.j,
            self.agent_id,
            self.v,
            self.phi,
            self.j_star,
            self.lex_active,
            self.t_primary_ms,
            self.t_lex_ms,
            self.n_var,
            self.n_eq,
            self.n_ineq
        )
    }

    pub fn parse_csv_line(line: &str) -> Result<Self, String> {
        let f: Vec<&str> = line.split(',').collect();
        if f.len() != 11 {
            return Err(format!("expected 11 fields, got {}", f.len()));
        }
        let num = |s: &str| {
            s.parse::<f64>()
                .map_err(|e| format!("bad number '{s}': {e}"))
        };
        let int = |s: &str| {
            s.parse::<usize>()
                .map_err(|e| format!("bad integer '{s}': {e}"))
        };
        Ok(MetricsRow {
            j: int(f[0])?,
            agent_id: int(f[1])?,
            v: num(f[2])?,
            phi: num(f[3])?,
            j_star: num(f[4])?,
            lex_active: f[5]
                .parse::<u8>()
                .map_err(|e| format!("bad flag '{}': {e}", f[5]))?,
            t_primary_ms: num(f[6])?,
            t_lex_ms: num(f[7])?,
            n_var: int(f[8])?,
            n_eq: int(f[9])?,
            n_ineq: int(f[10])?,
        })
    }
}

/// RFC 4180 quoting for text fields (numeric fields never need it).
fn csv_quote(field: &str) -> String {
    if field.contains(',') || field.contains('"') || field.contains('\n') {
        format!("\"{}\"", field.replace('"', "\"\""))
    } else {
        field.to_string()
    }
}

pub fn metrics_rows(artifacts: &RunArtifacts) -> Vec<MetricsRow> {
    let mut rows = Vec::new();
    for record in &artifacts.records {
        for a in &record.agents {
            rows.push(MetricsRow {
                j: record.j,
                agent_id: a.agent_id,
                v: record.v,
                phi: a.phi,
                j_star: a.j_star,
                lex_active: a.lex_active as u8,
                t_primary_ms: a.t_primary_ms,
                t_lex_ms: a.t_lex_ms,
                n_var: a.n_var,
                n_eq: a.n_eq,
                n_ineq: a.n_ineq,
            });
        }
    }
    rows
}

pub fn metrics_csv(artifacts: &RunArtifacts) -> String {
    let mut out = String::from(METRICS_HEADER);
    out.push('\n');
    for row in metrics_rows(artifacts) {
        out.push_str(&row.to_csv_line());
        out.push('\n');
    }
    out
}

pub fn states_csv(artifacts: &RunArtifacts) -> String {
    let max_state = artifacts
        .trajectory
        .iter()
        .map(|p| p.state.len())
        .max()
        .unwrap_or(0);
    let max_input = artifacts
        .trajectory
        .iter()
        .filter_map(|p| p.input.as_ref().map(Vec::len))
        .max()
        .unwrap_or(0);
    let mut out = String::from("t,agent_id");
    for i in 1..=max_state {
        let _ = write!(out, ",x{i}");
    }
    for i in 1..=max_input {
        let _ = write!(out, ",u{i}");
    }
    out.push('\n');
    for p in &artifacts.trajectory {
        let _ = write!(out, "{},{}", p.t, p.agent_id);
        for i in 0..max_state {
            match p.state.get(i) {
                Some(v) => {
                    let _ = write!(out, ",{v}");
                }
                None => out.push(','),
            }
        }
        for i in 0..max_input {
            match p.input.as_ref().and_then(|u| u.get(i)) {
                Some(v) => {
                    let _ = write!(out, ",{v}");
                }
                None => out.push(','),
            }
        }
        out.push('\n');
    }
    out
}

#[derive(Debug, Clone, Serialize)]
pub struct TimingStat {
    pub mean: f64,
    pub max: f64,
}

fn stat(values: impl Iterator<Item = f64> + Clone) -> TimingStat {
    let n = values.clone().count();
    if n == 0 {
        return TimingStat {
            mean: 0.0,
            max: 0.0,
        };
    }
    TimingStat {
        mean: values.clone().sum::<f64>() / n as f64,
        max: values.fold(0.0f64, f64::max),
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct AgentTimingSummary {
    pub agent_id: usize,
    pub t_total_ms: TimingStat,
    pub t_primary_ms: TimingStat,
    pub t_lex_ms: TimingStat,
    pub lex_activations: usize,
    pub problem_size: (usize, usize, usize),
}

#[derive(Debug, Clone, Serialize)]
pub struct HorizonSummary {
    pub configured: usize,
    pub formula: Option<usize>,
}

#[derive(Debug, Clone, Serialize)]
pub struct RunSummary {
    pub name: String,
    pub final_v: f64,
    /// Largest terminal velocity norm, for runs whose states carry a
    /// velocity block.
    pub max_terminal_velocity: Option<f64>,
    pub steps: usize,
    pub horizon: HorizonSummary,
    pub stop_reason: String,
    pub per_agent: Vec<AgentTimingSummary>,
    pub v_monitor_violations: usize,
    pub contraction_monitor_violations: usize,
    pub seed: u64,
    /// Sizes and timings depend on this implementation's conic encoding
    /// and the host machine; they are informational, not comparable
    /// across implementations.
    pub problem_size_note: String,
}

pub fn summarize(artifacts: &RunArtifacts, seed: u64) -> RunSummary {
    let agent_count = artifacts
        .records
        .first()
        .map(|r| r.agents.len())
        .unwrap_or(artifacts.state.true_states.len());
    let per_agent = (1..=agent_count)
        .map(|id| {
            let rows = || artifacts.records.iter().map(move |r| &r.agents[id - 1]);
            let size = rows()
                .next()
                .map(|a| (a.n_var, a.n_eq, a.n_ineq))
                .unwrap_or((0, 0, 0));
            AgentTimingSummary {
                agent_id: id,
                t_total_ms: stat(rows().map(|a| a.t_primary_ms + a.t_lex_ms)),
                t_primary_ms: stat(rows().map(|a| a.t_primary_ms)),
                t_lex_ms: stat(rows().map(|a| a.t_lex_ms)),
                lex_activations: rows().filter(|a| a.lex_active).count(),
                problem_size: size,
            }
        })
        .collect();
    RunSummary {
        name: artifacts.name.clone(),
        final_v: artifacts.final_v(),
        max_terminal_velocity: artifacts.max_terminal_velocity(),
        steps: artifacts.steps_run(),
        horizon: HorizonSummary {
            configured: artifacts.m,
            formula: artifacts.formula_m,
        },
        stop_reason: match artifacts.state.stop_reason {
            Some(StopReason::DiameterBelow(t)) => format!("diameter_below:{t}"),
            Some(StopReason::MaxSteps) => "max_steps".to_string(),
            Some(StopReason::Error) => "error".to_string(),
            None => "running".to_string(),
        },
        per_agent,
        v_monitor_violations: artifacts.monitor.v_violations,
        contraction_monitor_violations: artifacts.monitor.contraction_violations,
        seed,
        problem_size_note: "problem sizes and solve times reflect this conic encoding and host; \
                            they are not comparable across implementations"
            .to_string(),
    }
}

/// Runs a scenario config and writes `metrics.csv`, `states.csv` and
/// `summary.json` under `out_dir`.
pub fn cmd_run(
    config_path: &str,
    out_dir: Option<&str>,
    overrides: &[(String, String)],
) -> Result<RunSummary, CliError> {
    let mut config = ScenarioConfig::from_file(config_path)?;
    for (k, v) in overrides {
        config.apply_override(k, v).map_err(CliError::BadOverride)?;
    }
    let artifacts = runtime::run_scenario(&config)?;
    let summary = summarize(&artifacts, config.run.seed);
    if let Some(dir) = out_dir {
        write_outputs(dir, &artifacts, &summary)?;
    }
    Ok(summary)
}

pub fn write_outputs(
    dir: &str,
    artifacts: &RunArtifacts,
    summary: &RunSummary,
) -> Result<(), CliError> {
    std::fs::create_dir_all(dir)?;
    let dir = Path::new(dir);
    std::fs::write(dir.join("metrics.csv"), metrics_csv(artifacts))?;
    std::fs::write(dir.join("states.csv"), states_csv(artifacts))?;
    let json = serde_json::to_string_pretty(&serde_json::to_value(summary)?)?;
    std::fs::write(dir.join("summary.json"), json)?;
    Ok(())
}

/// The printed horizon report.
pub fn cmd_check_horizon(
    config_path: &str,
    overrides: &[(String, String)],
) -> Result<String, CliError> {
    let mut config = ScenarioConfig::from_file(config_path)?;
    for (k, v) in overrides {
        config.apply_override(k, v).map_err(CliError::BadOverride)?;
    }
    let report = config.horizon_report()?;
    let mut out = String::new();
    let _ = writeln!(out, "scenario: {}", csv_quote(&config.name));
    let _ = writeln!(
        out,
        "model: {}",
        match report.model {
            ModelKind::SingleIntegrator => "single_integrator",
            ModelKind::DoubleIntegrator => "double_integrator",
        }
    );
    let _ = writeln!(out, "V(z(0)) = {:.6}", report.v0);
    let _ = writeln!(out, "u_min = {}", report.u_min);
    if let Some(v_max) = report.v_max {
        let _ = writeln!(out, "v_max = {v_max}");
    }
    let _ = writeln!(out, "formula M = {}", report.formula_m);
    let _ = writeln!(out, "configured M = {}", report.configured_m);
    if report.pass {
        let _ = writeln!(out, "PASS: configured M >= formula M");
    } else {
        let _ = writeln!(out, "WARN: configured M is below the formula bound");
    }
    if report.configured_m != report.formula_m {
        let _ = writeln!(
            out,
            "note: configured M ({}) differs from the formula value ({}); both are reported, neither is asserted correct",
            report.configured_m, report.formula_m
        );
    }
    Ok(out)
}

/// Outcome of the built-in boundary-trap verification.
#[derive(Debug, Clone, Serialize)]
pub struct CounterexampleReport {
    pub adversarial_terminal: Vec<f64>,
    pub adversarial_membership_dist: f64,
    pub adversarial_contraction_value: f64,
    pub contraction_bound: f64,
    pub adversarial_phi: f64,
    pub lexicographic_phi: f64,
    pub pass: bool,
}

/// Runs the built-in four-agent boundary trap under the boundary-seeking
/// policy (the update is pinned to the hull's relative boundary while
/// every constraint holds) and under the lexicographic policy (the update
/// is strictly interior).
pub fn cmd_verify_counterexample() -> Result<(CounterexampleReport, String), CliError> {
    let corners = [[0.0, 0.0], [0.0, 1.0], [1.0, 0.0], [1.0, 1.0]].map(|c| Point::new(c.to_vec()));
    let hull = convex_hull(&corners).expect("square hull");
    let zbar = [0.5, 0.5];
    let bound = 0.9 * 0.5f64.sqrt();

    let adv = runtime::run_in_process(&boundary_trap_config(PolicyKind::Adversarial))?;
    let terminal = adv.state.true_states[0].clone();
    let membership_dist = dist_to_hull(&hull, &Point::new(terminal.clone()));
    let contraction_value = norm(&sub(&terminal, &zbar));
    let adversarial_phi = adv.records[0].agents[0].phi;

    let lex = runtime::run_in_process(&boundary_trap_config(PolicyKind::Lex))?;
    let lexicographic_phi = lex.records[0].agents[0].phi;

    let checks = [
        membership_dist <= 1e-6,
        contraction_value <= bound + 1e-6,
        (bound - 0.636396).abs() <= 1e-6,
        adversarial_phi <= 1e-6,
        lexicographic_phi > 0.0,
    ];
    let pass = checks.iter().all(|c| *c);

    let mut out = String::new();
    let _ = writeln!(out, "boundary-seeking policy (agent 1):");
    let _ = writeln!(out, "  terminal = ({:.6}, {:.6})", terminal[0], terminal[1]);
    let _ = writeln!(
        out,
        "  hull membership: dist = {:.3e} (tol 1e-6): {}",
        membership_dist,
        ok(checks[0])
    );
    let _ = writeln!(
        out,
        "  contraction: {:.6} <= {:.6} (0.9 * sqrt(0.5)): {}",
        contraction_value,
        bound,
        ok(checks[1] && checks[2])
    );
    let _ = writeln!(
        out,
        "  phi = {:.3e} (<= 1e-6): {}",
        adversarial_phi,
        ok(checks[3])
    );
    let _ = writeln!(out, "lexicographic policy (agent 1):");
    let _ = writeln!(
        out,
        "  phi = {:.6} (> 0): {}",
        lexicographic_phi,
        ok(checks[4])
    );
    let _ = writeln!(
        out,
        "{}: hull membership and contraction alone admit a boundary update; the lexicographic stage selects a strictly interior one",
        if pass { "VERIFIED" } else { "FAILED" }
    );

    // The adversarial terminal must also still be inside the hull (it is a
    // boundary point, not an excursion).
    debug_assert!(contains(&hull, &Point::new(terminal.clone()), 1e-6));

    let report = CounterexampleReport {
        adversarial_terminal: terminal,
        adversarial_membership_dist: membership_dist,
        adversarial_contraction_value: contraction_value,
        contraction_bound: bound,
        adversarial_phi,
        lexicographic_phi,
        pass,
    };
    Ok((report, out))
}

fn ok(b: bool) -> &'static str {
    if b {
        "OK"
    } else {
        "FAIL"
    }
}

#[derive(Debug, thiserror::Error)]
pub enum CliError {
    #[error("{0}")]
    Scenario(#[from] crate::scenario::ScenarioError),
    #[error("{0}")]
    Runtime(#[from] RuntimeError),
    #[error("bad override: {0}")]
    BadOverride(String),
    #[error("io: {0}")]
    Io(#[from] std::io::Error),
    #[error("json: {0}")]
    Json(#[from] serde_json::Error),
    #[error("usage: {0}")]
    Usage(String),
}

const USAGE: &str = "usage:
  hullsense run <config.json> [--out DIR] [--override key=value ...]
  hullsense check-horizon <config.json> [--override key=value ...]
  hullsense verify-counterexample
  hullsense serve-agent --coordinator HOST:PORT --agent-id N
  hullsense coordinate --config <config.json> --port PORT [--out DIR] [--override key=value ...]

override keys: policy, M, J_max, stop_tol, kappa, delta_lex, seed, transport, port
environment: HULLSENSE_LOG=error|warn|info|debug";

type ParsedArgs = (Vec<(String, String)>, Vec<String>);

fn parse_overrides(args: &[String]) -> Result<ParsedArgs, CliError> {
    let mut overrides = Vec::new();
    let mut rest = Vec::new();
    let mut i = 0;
    while i < args.len() {
        if args[i] == "--override" {
            let kv = args
                .get(i + 1)
                .ok_or_else(|| CliError::Usage("--override needs key=value".into()))?;
            let (k, v) = kv
                .split_once('=')
                .ok_or_else(|| CliError::Usage(format!("bad override '{kv}'")))?;
            overrides.push((k.to_string(), v.to_string()));
            i += 2;
        } else {
            rest.push(args[i].clone());
            i += 1;
        }
    }
    Ok((overrides, rest))
}

fn flag_value(args: &[String], flag: &str) -> Option<String> {
    args.iter()
        .position(|a| a == flag)
        .and_then(|i| args.get(i + 1).cloned())
}

fn dispatch(args: &[String]) -> Result<i32, CliError> {
    let Some(command) = args.first() else {
        eprintln!("{USAGE}");
        return Ok(2);
    };
    match command.as_str() {
        "run" => {
            let (overrides, rest) = parse_overrides(&args[1..])?;
            let out_dir = flag_value(&rest, "--out");
            let config = rest
                .iter()
                .enumerate()
                .find(|(i, a)| !a.starts_with("--") && (*i == 0 || rest[i - 1] != "--out"))
                .map(|(_, a)| a.clone())
                .ok_or_else(|| CliError::Usage("run needs a config path".into()))?;
            let summary = cmd_run(&config, out_dir.as_deref(), &overrides)?;
            println!(
                "{}",
                serde_json::to_string_pretty(&serde_json::to_value(&summary)?)?
            );
            Ok(0)
        }
        "check-horizon" => {
            let (overrides, rest) = parse_overrides(&args[1..])?;
            let config = rest
                .first()
                .ok_or_else(|| CliError::Usage("check-horizon needs a config path".into()))?;
            print!("{}", cmd_check_horizon(config, &overrides)?);
            Ok(0)
        }
        "verify-counterexample" => {
            let (report, text) = cmd_verify_counterexample()?;
            print!("{text}");
            Ok(if report.pass { 0 } else { 1 })
        }
        "serve-agent" => {
            let coordinator = flag_value(&args[1..], "--coordinator")
                .ok_or_else(|| CliError::Usage("serve-agent needs --coordinator".into()))?;
            let agent_id: usize = flag_value(&args[1..], "--agent-id")
                .ok_or_else(|| CliError::Usage("serve-agent needs --agent-id".into()))?
                .parse()
                .map_err(|_| CliError::Usage("bad --agent-id".into()))?;
            runtime::serve_agent_tcp(&coordinator, agent_id, None)?;
            Ok(0)
        }
        "coordinate" => {
            let (overrides, rest) = parse_overrides(&args[1..])?;
            let config_path = flag_value(&rest, "--config")
                .ok_or_else(|| CliError::Usage("coordinate needs --config".into()))?;
            let port: u16 = flag_value(&rest, "--port")
                .ok_or_else(|| CliError::Usage("coordinate needs --port".into()))?
                .parse()
                .map_err(|_| CliError::Usage("bad --port".into()))?;
            let out_dir = flag_value(&rest, "--out");
            let mut config = ScenarioConfig::from_file(&config_path)?;
            for (k, v) in &overrides {
                config.apply_override(k, v).map_err(CliError::BadOverride)?;
            }
            let artifacts = runtime::coordinate_tcp(&config, port)?;
            let summary = summarize(&artifacts, config.run.seed);
            if let Some(dir) = out_dir {
                write_outputs(&dir, &artifacts, &summary)?;
            }
            println!(
                "{}",
                serde_json::to_string_pretty(&serde_json::to_value(&summary)?)?
            );
            Ok(0)
        }
        "--help" | "-h" | "help" => {
            println!("{USAGE}");
            Ok(0)
        }
        other => {
            eprintln!("unknown command '{other}'\n{USAGE}");
            Ok(2)
        }
    }
}

/// Binary entry point; returns the process exit code.
pub fn main(args: &[String]) -> i32 {
    match dispatch(args) {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e}");
            1
        }
    }
}
