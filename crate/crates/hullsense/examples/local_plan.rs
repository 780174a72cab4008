//! One agent's local problem in isolation: the primary plan contracts
//! toward the neighbor-hull barycenter, and the lexicographic stage
//! re-selects among near-optimal plans the one with the largest distance
//! to the hull's relative boundary.
//!
//! ```bash
//! cargo run -p hullsense --example local_plan
//! ```

use hullsense::conic::SolverSettings;
use hullsense::dynamics::single_integrator;
use hullsense::geometry::{barycenter, convex_hull, Point};
use hullsense::ocp::{select_plan, solve_primary, OcpSpec, SelectionPolicy};

fn main() {
    // The agent sits at one corner of a triangle of samples.
    let samples = vec![
        Point::xy(0.0, 0.0),
        Point::xy(4.0, 0.5),
        Point::xy(1.0, 3.0),
    ];
    let spec = OcpSpec {
        agent: single_integrator(2, 1.0).unwrap(),
        horizon: 4,
        q_diag: vec![1.0, 1.0],
        r_diag: vec![1.0, 1.0],
        kappa: 0.8,
        hull: convex_hull(&samples).unwrap(),
        zbar: barycenter(&samples).unwrap(),
        x0: vec![0.0, 0.0],
        u_prev: vec![0.0, 0.0],
        target_velocity_zero: false,
        state_box: None,
    };
    let settings = SolverSettings::default();

    let primary = solve_primary(&spec, &settings).unwrap();
    let terminal = primary.terminal_consensus(&spec.agent);
    println!("primary plan:");
    println!("  cost J* = {:.6}", primary.j_star);
    println!("  terminal = ({:.4}, {:.4})", terminal[0], terminal[1]);
    println!("  boundary margin phi = {:.6}", primary.phi);
    println!(
        "  problem size (n_var, n_eq, n_ineq) = ({}, {}, {})",
        primary.n_var, primary.n_eq, primary.n_ineq
    );

    let lex = select_plan(
        &spec,
        &SelectionPolicy::Lexicographic { delta_lex: 1e-5 },
        &settings,
    )
    .unwrap();
    let terminal = lex.terminal_consensus(&spec.agent);
    println!("lexicographic selection (cost slack 1e-5):");
    println!("  adopted: {}", lex.lex_active);
    println!("  cost = {:.6} (cap {:.6})", lex.cost, lex.j_star + 1e-5);
    println!("  terminal = ({:.4}, {:.4})", terminal[0], terminal[1]);
    println!("  boundary margin phi = {:.6}", lex.phi);

    let boundary = select_plan(&spec, &SelectionPolicy::AdversarialBoundary, &settings).unwrap();
    let terminal = boundary.terminal_consensus(&spec.agent);
    println!("boundary-seeking selection (demonstrates hull membership alone");
    println!("does not forbid boundary updates):");
    println!("  terminal = ({:.4}, {:.4})", terminal[0], terminal[1]);
    println!("  boundary margin phi = {:.2e}", boundary.phi);
}
