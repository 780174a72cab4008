//! Solver cross-checks against the independent references: vertex
//! enumeration for random linear programs and the exhaustive grid for the
//! corner-trap optimal control instance.

use hullsense::conic::{self, Cone, ConeSpec, ConicProgram, SolveStatus, SolverSettings};
use hullsense::dynamics::single_integrator;
use hullsense::dynamics::InputSet;
use hullsense::geometry::{convex_hull, Point};
use hullsense::linalg::Mat;
use hullsense::ocp::{self, OcpSpec};
use hullsense_oracle::{self as oracle, SplitMix64};

#[test]
fn random_lps_match_vertex_enumeration() {
    let mut rng = SplitMix64::new(1234);
    let mut solved = 0;
    for case in 0..40 {
        let n = 2 + rng.below(3);
        // Random rows through a known interior point keep the problem
        // feasible; box rows keep it bounded.
        let interior: Vec<f64> = (0..n).map(|_| rng.range(-1.0, 1.0)).collect();
        let extra = n + rng.below(3);
        let mut a_rows: Vec<Vec<f64>> = Vec::new();
        let mut b = Vec::new();
        for _ in 0..extra {
            let row: Vec<f64> = (0..n).map(|_| rng.range(-1.0, 1.0)).collect();
            let slack = rng.range(0.1, 1.0);
            let a_dot: f64 = row.iter().zip(&interior).map(|(a, x)| a * x).sum();
            a_rows.push(row);
            b.push(a_dot + slack);
        }
        for i in 0..n {
            let mut hi = vec![0.0; n];
            hi[i] = 1.0;
            a_rows.push(hi.clone());
            b.push(3.0);
            let mut lo = vec![0.0; n];
            lo[i] = -1.0;
            a_rows.push(lo);
            b.push(3.0);
        }
        let c: Vec<f64> = (0..n).map(|_| rng.range(-1.0, 1.0)).collect();

        let Some(reference) = oracle::lp_vertex_enumeration(&c, &a_rows, &b) else {
            continue;
        };
        let rows = a_rows.len();
        let mut a = Mat::zeros(rows, n);
        for (i, row) in a_rows.iter().enumerate() {
            for (j, v) in row.iter().enumerate() {
                a.set(i, j, *v);
            }
        }
        let prog = ConicProgram {
            c: c.clone(),
            a,
            b: b.clone(),
            cones: ConeSpec(vec![Cone::NonNeg(rows)]),
        };
        let sol = conic::solve(&prog, &SolverSettings::default()).unwrap();
        assert_eq!(sol.status, SolveStatus::Optimal, "case {case}");
        let obj = sol.objective(&prog);
        assert!(
            (obj - reference).abs() <= 1e-5,
            "case {case}: solver {obj} vs enumeration {reference}"
        );
        solved += 1;
    }
    assert!(solved >= 30, "only {solved} linear programs exercised");
}

#[test]
fn corner_trap_primary_matches_fine_grid() {
    let spec = OcpSpec {
        agent: single_integrator(2, 1.0)
            .unwrap()
            .with_input_set(InputSet::Box {
                bounds: vec![(-1.0, 1.0), (-1.0, 1.0)],
            }),
        horizon: 1,
        q_diag: vec![1.0, 1.0],
        r_diag: vec![1.0, 1.0],
        kappa: 0.9,
        hull: convex_hull(&[
            Point::xy(0.0, 0.0),
            Point::xy(0.0, 1.0),
            Point::xy(1.0, 0.0),
            Point::xy(1.0, 1.0),
        ])
        .unwrap(),
        zbar: Point::xy(0.5, 0.5),
        x0: vec![0.0, 0.0],
        u_prev: vec![0.0, 0.0],
        target_velocity_zero: false,
        state_box: None,
    };
    let plan = ocp::solve_primary(
        &spec,
        &SolverSettings {
            eps_abs: 1e-8,
            eps_rel: 1e-9,
            ..Default::default()
        },
    )
    .unwrap();
    let grid = oracle::grid_ocp_refined(&spec, 1e-2, 3).unwrap();
    assert!(
        (plan.j_star - grid.best_cost).abs() <= 1e-4,
        "solver {} vs grid {}",
        plan.j_star,
        grid.best_cost
    );
}
