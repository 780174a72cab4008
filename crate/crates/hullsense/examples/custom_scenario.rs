//! Building a scenario in code instead of JSON: six agents, a periodic
//! two-slot communication schedule whose union holds a spanning tree, and
//! an automatically derived horizon.
//!
//! ```bash
//! cargo run -p hullsense --example custom_scenario
//! ```

use hullsense::runtime;
use hullsense::scenario::{
    AgentSpec, GraphConfig, HorizonConfig, InputSetKind, ModelKind, PolicyConfig, PolicyKind,
    RunConfig, ScenarioConfig, TransportConfig, WeightsConfig,
};

fn main() {
    let positions = [
        [-3.0, 0.0],
        [-1.5, 2.5],
        [1.5, 2.5],
        [3.0, 0.0],
        [1.5, -2.5],
        [-1.5, -2.5],
    ];
    let agents = positions
        .iter()
        .map(|p| AgentSpec {
            model: ModelKind::SingleIntegrator,
            dim: 2,
            u_max: 1.0,
            input_set: InputSetKind::Ball,
            x0: p.to_vec(),
        })
        .collect();

    // Odd steps use the forward ring, even steps the reverse ring; each
    // slot alone is already rooted, and the union certainly is.
    let forward: Vec<(usize, usize)> = (1..=6).map(|i| (i, i % 6 + 1)).collect();
    let reverse: Vec<(usize, usize)> = (1..=6).map(|i| (i % 6 + 1, i)).collect();

    let config = ScenarioConfig {
        name: "hexagon_periodic".into(),
        agents,
        graph: GraphConfig::Periodic {
            slots: vec![forward, reverse],
            period: 2,
        },
        horizon: HorizonConfig::AutoSi,
        weights: WeightsConfig::default(),
        kappa: 0.8,
        policy: PolicyConfig {
            kind: PolicyKind::Lex,
            delta_lex: 1e-5,
        },
        run: RunConfig {
            j_max: 80,
            stop_tol: 1e-3,
            seed: 1,
        },
        transport: TransportConfig::default(),
        epsilon: 0.0,
    };

    println!(
        "derived horizon M = {}",
        config.effective_horizon().unwrap()
    );
    println!("canonical form:\n{}", config.to_canonical_json());

    let artifacts = runtime::run_scenario(&config).unwrap();
    println!(
        "stopped at diameter {:.2e} after {} outer steps ({:?})",
        artifacts.final_v(),
        artifacts.steps_run(),
        artifacts.state.stop_reason.unwrap()
    );
}
