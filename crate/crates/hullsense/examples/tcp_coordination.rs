//! The full wire protocol on loopback: the coordinator binds a TCP
//! listener, agents connect with a Hello handshake, receive their
//! configuration, then answer one framed planning request per outer step.
//! In-process and TCP runs produce identical records.
//!
//! ```bash
//! cargo run -p hullsense --example tcp_coordination
//! ```

use hullsense::runtime;
use hullsense::scenario::{ScenarioConfig, TransportKind};

fn main() {
    let path = format!(
        "{}/../../scenarios/si_paper.json",
        env!("CARGO_MANIFEST_DIR")
    );
    let mut config = ScenarioConfig::from_file(&path).unwrap();
    config.run.j_max = 10;
    config.run.stop_tol = 0.0;

    let in_process = runtime::run_in_process(&config).unwrap();

    config.transport.kind = TransportKind::Tcp;
    let over_tcp = runtime::run_tcp_self_hosted(&config).unwrap();

    println!("step | V (in-process)     | V (tcp)            | identical");
    for (j, (a, b)) in in_process
        .state
        .v_history
        .iter()
        .zip(&over_tcp.state.v_history)
        .enumerate()
    {
        println!("{j:>4} | {a:.15} | {b:.15} | {}", a == b);
    }
    let same = in_process.state.v_history == over_tcp.state.v_history;
    println!(
        "transport equivalence: {}",
        if same { "exact" } else { "MISMATCH" }
    );
}
