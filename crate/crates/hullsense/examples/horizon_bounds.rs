//! Closed-form horizon bounds and reachability analysis for integrator
//! networks: how many inner steps guarantee that every agent can reach the
//! neighborhood of its local barycenter.
//!
//! ```bash
//! cargo run -p hullsense --example horizon_bounds
//! ```

use hullsense::dynamics::{
    controllability_matrix, double_integrator, horizon_di, horizon_si, reach_radius,
    single_integrator, warmstart_di,
};
use hullsense::geometry::{diameter, Point};

fn main() {
    let positions = vec![
        Point::xy(-4.0, 2.0),
        Point::xy(3.5, 4.0),
        Point::xy(4.5, -3.5),
        Point::xy(-2.5, -4.0),
    ];
    let v0 = diameter(&positions).unwrap();
    println!("initial disagreement diameter V0 = {v0:.6}");

    let si_bound = horizon_si(v0, 1.0).unwrap();
    println!("single integrator, |u| <= 1: M >= {}", si_bound.m);

    let di_bound = horizon_di(v0, 1.0, 1.0).unwrap();
    println!("double integrator, |v(0)| <= 1: M >= {}", di_bound.m);

    // The reach radius quantifies the ball of displacements every
    // admissible input sequence can cover.
    let si = single_integrator(2, 1.0).unwrap();
    for m in [1usize, 3, 11] {
        let c = controllability_matrix(&si, m);
        println!(
            "single integrator M={m}: controllability {}x{}, reach radius {:.4}",
            c.rows(),
            c.cols(),
            reach_radius(&si, m).unwrap()
        );
    }

    let di = double_integrator(2, 1.0).unwrap();
    println!(
        "double integrator M=2: reach radius {:.4}",
        reach_radius(&di, 2).unwrap()
    );

    // The constructive maneuver behind the double-integrator bound:
    // cancel the velocity, then translate rest-to-rest.
    let x0 = [-4.0, 2.0, 1.0, 0.0];
    let target = [0.375, -0.375];
    let plan = warmstart_di(&di, &x0, &target, di_bound.m).unwrap();
    println!(
        "constructive steering to the barycenter ({} steps):",
        plan.len()
    );
    for (k, u) in plan.iter().enumerate() {
        if u.iter().any(|v| v.abs() > 1e-12) {
            println!("  u({k}) = ({:7.4}, {:7.4})", u[0], u[1]);
        }
    }
}
