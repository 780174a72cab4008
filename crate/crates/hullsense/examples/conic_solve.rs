//! The embedded conic solver on its own: canonical form
//! `min cᵀy s.t. b − Ay ∈ K` over zero, nonnegative and second-order
//! cones, solved by operator splitting.
//!
//! ```bash
//! cargo run -p hullsense --example conic_solve
//! ```

use hullsense::conic::{solve, Cone, ConeSpec, ConicProgram, SolverSettings};
use hullsense::linalg::Mat;

fn main() {
    // A one-variable linear program: minimize y subject to y >= 1.
    let lp = ConicProgram {
        c: vec![1.0],
        a: Mat::from_rows(&[vec![-1.0]]),
        b: vec![-1.0],
        cones: ConeSpec(vec![Cone::NonNeg(1)]),
    };
    let sol = solve(&lp, &SolverSettings::default()).unwrap();
    println!(
        "LP: y* = {:.8} (status {:?}, {} iterations)",
        sol.y[0], sol.status, sol.iterations
    );

    // Projection of the point (2, 0) onto the unit ball, in epigraph form:
    //   minimize t  s.t.  |x - (2,0)| <= t,  |x| <= 1
    // Variables y = (x1, x2, t); each norm bound is one second-order block.
    let socp = ConicProgram {
        c: vec![0.0, 0.0, 1.0],
        a: Mat::from_rows(&[
            vec![0.0, 0.0, -1.0],
            vec![-1.0, 0.0, 0.0],
            vec![0.0, -1.0, 0.0],
            vec![0.0, 0.0, 0.0],
            vec![-1.0, 0.0, 0.0],
            vec![0.0, -1.0, 0.0],
        ]),
        b: vec![0.0, -2.0, 0.0, 1.0, 0.0, 0.0],
        cones: ConeSpec(vec![Cone::SecondOrder(3), Cone::SecondOrder(3)]),
    };
    let sol = solve(&socp, &SolverSettings::default()).unwrap();
    println!(
        "SOCP: x* = ({:.6}, {:.6}), distance {:.6} (status {:?}, {} iterations)",
        sol.y[0], sol.y[1], sol.y[2], sol.status, sol.iterations
    );
    println!(
        "residuals: primal {:.2e}, dual {:.2e}, gap {:.2e}",
        sol.primal_residual, sol.dual_residual, sol.gap
    );
}
