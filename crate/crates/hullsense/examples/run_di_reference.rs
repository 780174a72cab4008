//! The reference double-integrator run: position consensus with velocities
//! decaying to zero. The configured horizon (12) is reported alongside the
//! closed-form bound (10).
//!
//! ```bash
//! cargo run -p hullsense --example run_di_reference
//! ```

use hullsense::linalg::norm;
use hullsense::runtime;
use hullsense::scenario::ScenarioConfig;

fn main() {
    let path = format!(
        "{}/../../scenarios/di_paper.json",
        env!("CARGO_MANIFEST_DIR")
    );
    let config = ScenarioConfig::from_file(&path).unwrap();
    println!(
        "configured horizon M = {}, closed-form bound = {:?}",
        config.effective_horizon().unwrap(),
        config.formula_horizon().unwrap()
    );

    let artifacts = runtime::run_scenario(&config).unwrap();
    println!("position diameter trajectory:");
    for (j, v) in artifacts.state.v_history.iter().enumerate() {
        if j % 3 == 0 || j + 1 == artifacts.state.v_history.len() {
            println!("  step {j:>3}: V = {v:.6}");
        }
    }
    println!("final positions and velocity norms:");
    for (i, x) in artifacts.state.true_states.iter().enumerate() {
        println!(
            "  agent {}: r = ({:.5}, {:.5}), |v| = {:.2e}",
            i + 1,
            x[0],
            x[1],
            norm(&x[2..])
        );
    }
}
