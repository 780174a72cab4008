//! First-order solver for canonical conic programs
//!
//! ```text
//!     minimize    cᵀy
//!     subject to  b − A y ∈ K
//! ```
//!
//! where `K` is an ordered product of zero, nonnegative and second-order
//! cones. The solver is an operator-splitting (ADMM) iteration on the
//! equivalent form `A y + s = b, s ∈ K`: a cached dense Cholesky
//! factorization of the regularized normal equations handles the linear
//! step, a blockwise Euclidean cone projection handles the conic step.
//! Quadratic objectives are not native; callers encode them through
//! second-order-cone epigraphs.
//!
//! The iteration is deterministic: fixed order, no randomized components,
//! so identical inputs and settings reproduce identical iterates.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::linalg::{norm, Cholesky, Mat};

/// One cone block. `SecondOrder(k)` constrains a slice `(t, v)` of length
/// `k` (radius first) to `‖v‖ <= t`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Cone {
    Zero(usize),
    NonNeg(usize),
    SecondOrder(usize),
}

impl Cone {
    pub fn size(&self) -> usize {
        match self {
            Cone::Zero(k) | Cone::NonNeg(k) | Cone::SecondOrder(k) => *k,
        }
    }
}

/// Ordered list of cone blocks; the total size must equal the constraint
/// row count of the program it describes.
#[derive(Debug, Clone, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct ConeSpec(pub Vec<Cone>);

impl ConeSpec {
    pub fn total_size(&self) -> usize {
        self.0.iter().map(Cone::size).sum()
    }

    /// Scalar rows held in zero cones (equality constraints).
    pub fn eq_rows(&self) -> usize {
        self.0
            .iter()
            .filter_map(|c| match c {
                Cone::Zero(k) => Some(*k),
                _ => None,
            })
            .sum()
    }

    /// Scalar rows held in nonnegative or second-order cones.
    pub fn ineq_rows(&self) -> usize {
        self.total_size() - self.eq_rows()
    }
}

/// `minimize cᵀy subject to b − A y ∈ cones`.
#[derive(Debug, Clone)]
pub struct ConicProgram {
    pub c: Vec<f64>,
    pub a: Mat,
    pub b: Vec<f64>,
    pub cones: ConeSpec,
}

#[derive(Debug, Error, PartialEq)]
pub enum ConicError {
    #[error("cone sizes total {cones} but the program has {rows} rows")]
    ConeSizeMismatch { cones: usize, rows: usize },
    #[error("objective length {c} does not match {cols} columns")]
    ObjectiveMismatch { c: usize, cols: usize },
    #[error("right-hand side length {b} does not match {rows} rows")]
    RhsMismatch { b: usize, rows: usize },
    #[error("cone block of size 0")]
    EmptyBlock,
    #[error("program contains a non-finite entry")]
    NonFinite,
    #[error("projection input length {got} does not match cone total {expected}")]
    ProjectionLength { got: usize, expected: usize },
    #[error("normal equations could not be factorized")]
    Factorization,
}

impl ConicProgram {
    pub fn validate(&self) -> Result<(), ConicError> {
        let rows = self.a.rows();
        if self.cones.total_size() != rows {
            return Err(ConicError::ConeSizeMismatch {
                cones: self.cones.total_size(),
                rows,
            });
        }
        if self.c.len() != self.a.cols() {
            return Err(ConicError::ObjectiveMismatch {
                c: self.c.len(),
                cols: self.a.cols(),
            });
        }
        if self.b.len() != rows {
            return Err(ConicError::RhsMismatch {
                b: self.b.len(),
                rows,
            });
        }
        if self.cones.0.iter().any(|c| c.size() == 0) {
            return Err(ConicError::EmptyBlock);
        }
        let finite = self.c.iter().chain(&self.b).all(|v| v.is_finite())
            && (0..rows).all(|i| self.a.row(i).iter().all(|v| v.is_finite()));
        if !finite {
            return Err(ConicError::NonFinite);
        }
        Ok(())
    }

    pub fn n_var(&self) -> usize {
        self.a.cols()
    }
}

/// Blockwise Euclidean projection onto the cone product.
pub fn project_cone(v: &[f64], cones: &ConeSpec) -> Result<Vec<f64>, ConicError> {
    if v.len() != cones.total_size() {
        return Err(ConicError::ProjectionLength {
            got: v.len(),
            expected: cones.total_size(),
        });
    }
    let mut out = Vec::with_capacity(v.len());
    let mut at = 0;
    for cone in &cones.0 {
        let k = cone.size();
        let block = &v[at..at + k];
        match cone {
            Cone::Zero(_) => out.extend(std::iter::repeat_n(0.0, k)),
            Cone::NonNeg(_) => out.extend(block.iter().map(|x| x.max(0.0))),
            Cone::SecondOrder(_) => {
                let t = block[0];
                let rest = &block[1..];
                let r = norm(rest);
                if r <= t {
                    out.extend_from_slice(block);
                } else if t <= -r {
                    out.extend(std::iter::repeat_n(0.0, k));
                } else {
                    let scale = (t + r) / 2.0;
                    out.push(scale);
                    out.extend(rest.iter().map(|x| scale * x / r));
                }
            }
        }
        at += k;
    }
    Ok(out)
}

/// Euclidean distance from `v` to the cone product.
pub fn cone_distance(v: &[f64], cones: &ConeSpec) -> Result<f64, ConicError> {
    let p = project_cone(v, cones)?;
    Ok(v.iter()
        .zip(&p)
        .map(|(a, b)| (a - b) * (a - b))
        .sum::<f64>()
        .sqrt())
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SolverSettings {
    pub max_iter: usize,
    pub eps_abs: f64,
    pub eps_rel: f64,
    pub rho: f64,
    pub over_relaxation: f64,
}

impl Default for SolverSettings {
    fn default() -> Self {
        SolverSettings {
            max_iter: 20_000,
            eps_abs: 1e-7,
            eps_rel: 1e-7,
            rho: 1.0,
            over_relaxation: 1.5,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum SolveStatus {
    Optimal,
    MaxIters,
    InfeasibleSuspect,
}

#[derive(Debug, Clone)]
pub struct ConicSolution {
    pub y: Vec<f64>,
    pub status: SolveStatus,
    pub primal_residual: f64,
    pub dual_residual: f64,
    pub gap: f64,
    pub iterations: usize,
}

impl ConicSolution {
    pub fn objective(&self, prog: &ConicProgram) -> f64 {
        crate::linalg::dot(&prog.c, &self.y)
    }
}

const SIGMA: f64 = 1e-6;
const CHECK_EVERY: usize = 10;
const DIVERGE_WINDOW: usize = 500;
const RUIZ_ITERS: usize = 10;
/// Equality rows carry this penalty multiple of the base rho.
const EQ_RHO_BOOST: f64 = 1e3;
/// Residual-balancing cadence and clamp for the adaptive penalty.
const ADAPT_EVERY: usize = 100;
const RHO_MIN: f64 = 1e-6;
const RHO_MAX: f64 = 1e6;
/// A plateau below this residual exits early instead of riding the
/// sublinear tail; callers see `MaxIters` with the best iterate.
const STALL_GRADE: f64 = 1e-5;

/// Diagonal row/column equilibration of the constraint matrix. Row
/// scalings are uniform within each second-order block so the scaled slack
/// lives in the same cone.
struct Scaling {
    d: Vec<f64>,
    e: Vec<f64>,
    a: Mat,
    b: Vec<f64>,
    c: Vec<f64>,
}

fn equilibrate(prog: &ConicProgram) -> Scaling {
    let rows = prog.a.rows();
    let cols = prog.a.cols();
    let mut a = prog.a.clone();
    let mut d = vec![1.0; rows];
    let mut e = vec![1.0; cols];

    for _ in 0..RUIZ_ITERS {
        let mut dr = vec![0.0f64; rows];
        let mut dc = vec![0.0f64; cols];
        for i in 0..rows {
            for j in 0..cols {
                let v = a.get(i, j).abs();
                dr[i] = dr[i].max(v);
                dc[j] = dc[j].max(v);
            }
        }
        for v in dr.iter_mut().chain(dc.iter_mut()) {
            *v = if *v > 0.0 { 1.0 / v.sqrt() } else { 1.0 };
        }
        // Uniform scaling inside each second-order block (geometric mean of
        // the block's row factors) keeps the cone invariant.
        let mut at = 0;
        for cone in &prog.cones.0 {
            let k = cone.size();
            if matches!(cone, Cone::SecondOrder(_)) {
                let log_mean: f64 = dr[at..at + k].iter().map(|v| v.ln()).sum::<f64>() / k as f64;
                let g = log_mean.exp();
                for v in &mut dr[at..at + k] {
                    *v = g;
                }
            }
            at += k;
        }
        for i in 0..rows {
            for j in 0..cols {
                a.set(i, j, a.get(i, j) * dr[i] * dc[j]);
            }
        }
        for i in 0..rows {
            d[i] *= dr[i];
        }
        for j in 0..cols {
            e[j] *= dc[j];
        }
    }

    let b = prog.b.iter().zip(&d).map(|(v, s)| v * s).collect();
    let c = prog.c.iter().zip(&e).map(|(v, s)| v * s).collect();
    Scaling { d, e, a, b, c }
}

pub fn solve(prog: &ConicProgram, settings: &SolverSettings) -> Result<ConicSolution, ConicError> {
    solve_with_hint(prog, settings, None)
}

/// Solve with an optional initial iterate for `y` (a warm-start hint; the
/// slack and dual variables are reinitialized from it).
pub fn solve_with_hint(
    prog: &ConicProgram,
    settings: &SolverSettings,
    hint: Option<&[f64]>,
) -> Result<ConicSolution, ConicError> {
    prog.validate()?;
    let n = prog.n_var();
    let rows = prog.a.rows();
    let alpha = settings.over_relaxation;

    // Work on the equilibrated problem; residuals and the returned iterate
    // are reported in original units.
    let sc = equilibrate(prog);
    let unscale_y = |yh: &[f64]| -> Vec<f64> { yh.iter().zip(&sc.e).map(|(v, e)| v * e).collect() };

    // Per-row penalty weights: equality rows are stiffer than the rest.
    // Weights are uniform within each cone block, so the weighted slack
    // projection coincides with the Euclidean one.
    let mut weight = vec![1.0; rows];
    {
        let mut at = 0;
        for cone in &prog.cones.0 {
            let k = cone.size();
            if matches!(cone, Cone::Zero(_)) {
                for w in &mut weight[at..at + k] {
                    *w = EQ_RHO_BOOST;
                }
            }
            at += k;
        }
    }

    // The base penalty adapts to the primal/dual residual balance; the
    // factorization is rebuilt only when the penalty actually moves.
    let mut rho = settings.rho;
    let factor_for = |rho: f64| -> Result<Cholesky, ConicError> {
        let mut scaled = sc.a.clone();
        for i in 0..rows {
            let f = (rho * weight[i]).sqrt();
            for j in 0..n {
                scaled.set(i, j, scaled.get(i, j) * f);
            }
        }
        let mut normal = scaled.gram();
        for i in 0..n {
            normal.add_to(i, i, SIGMA);
        }
        Cholesky::factor(&normal).map_err(|_| ConicError::Factorization)
    };
    let mut factor = factor_for(rho)?;

    let mut y = match hint {
        Some(h) if h.len() == n => h.iter().zip(&sc.e).map(|(v, e)| v / e).collect(),
        _ => vec![0.0; n],
    };
    let ay0 = sc.a.matvec(&y);
    let resid0: Vec<f64> = sc.b.iter().zip(&ay0).map(|(b, a)| b - a).collect();
    let mut s = project_cone(&resid0, &prog.cones)?;
    let mut u = vec![0.0; rows];

    let norm_b = norm(&sc.b);
    let norm_c_orig = norm(&prog.c);
    let mut window_best_rp = f64::INFINITY;
    let mut prev_window_best_rp = f64::INFINITY;
    let mut window_last_obj = f64::INFINITY;

    let mut rp = f64::INFINITY;
    let mut rd = f64::INFINITY;
    let mut gap = f64::INFINITY;

    let mut rhs = vec![0.0; n];
    let mut w = vec![0.0; rows];
    let mut v = vec![0.0; rows];
    let mut target = vec![0.0; rows];
    let trace = std::env::var_os("HULLSENSE_SOLVER_TRACE").is_some();

    for iter in 0..settings.max_iter {
        // y-step: minimize cy + 0.5*sum_i rho_i (A_i y + s_i - b_i + u_i)^2
        // plus the sigma proximal term.
        for i in 0..rows {
            w[i] = rho * weight[i] * (s[i] - sc.b[i] + u[i]);
        }
        let atw = sc.a.matvec_transpose(&w);
        for i in 0..n {
            rhs[i] = SIGMA * y[i] - sc.c[i] - atw[i];
        }
        let y_new = factor.solve(&rhs);

        let ay = sc.a.matvec(&y_new);
        // Over-relaxation mixes the new Ay with the previous slack residual.
        for i in 0..rows {
            v[i] = alpha * ay[i] + (1.0 - alpha) * (sc.b[i] - s[i]);
        }
        for i in 0..rows {
            target[i] = sc.b[i] - v[i] - u[i];
        }
        let s_new = project_cone(&target, &prog.cones)?;
        for i in 0..rows {
            u[i] += v[i] + s_new[i] - sc.b[i];
        }

        let diverged = y_new.iter().any(|x| !x.is_finite()) || u.iter().any(|x| !x.is_finite());
        if diverged {
            return Ok(ConicSolution {
                y: unscale_y(&y_new),
                status: SolveStatus::InfeasibleSuspect,
                primal_residual: f64::NAN,
                dual_residual: f64::NAN,
                gap: f64::NAN,
                iterations: iter + 1,
            });
        }

        let check_now = iter % CHECK_EVERY == 0 || iter + 1 == settings.max_iter;
        if check_now {
            // Original-unit primal residual: divide the scaled rows back out.
            let mut pr = vec![0.0; rows];
            for i in 0..rows {
                pr[i] = (ay[i] + s_new[i] - sc.b[i]) / sc.d[i];
            }
            rp = norm(&pr);

            // Scaled dual lambda_i = rho_i u_i; original-unit dual residual
            // and dual scale follow by undoing the column scaling.
            let mut dlam = vec![0.0; rows];
            for i in 0..rows {
                dlam[i] = rho * weight[i] * (s_new[i] - s[i]);
            }
            let at_dlam = sc.a.matvec_transpose(&dlam);
            let rd_vec: Vec<f64> = at_dlam.iter().zip(&sc.e).map(|(v, e)| v / e).collect();
            rd = norm(&rd_vec);

            let lambda_hat: Vec<f64> = u.iter().zip(&weight).map(|(x, wt)| rho * wt * x).collect();
            gap =
                (crate::linalg::dot(&sc.c, &y_new) + crate::linalg::dot(&sc.b, &lambda_hat)).abs();
            let at_lambda = sc.a.matvec_transpose(&lambda_hat);
            let at_lambda_orig: Vec<f64> =
                at_lambda.iter().zip(&sc.e).map(|(v, e)| v / e).collect();
            let scale_d = norm(&at_lambda_orig).max(norm_c_orig);
            // Primal scale in original units.
            let scale_p = {
                let mut ay_o = 0.0f64;
                let mut s_o = 0.0f64;
                let mut b_o = 0.0f64;
                for i in 0..rows {
                    ay_o += (ay[i] / sc.d[i]) * (ay[i] / sc.d[i]);
                    s_o += (s_new[i] / sc.d[i]) * (s_new[i] / sc.d[i]);
                    b_o += (sc.b[i] / sc.d[i]) * (sc.b[i] / sc.d[i]);
                }
                ay_o.max(s_o).max(b_o).sqrt()
            };

            window_best_rp = window_best_rp.min(rp);

            if trace && iter % 1000 == 0 {
                eprintln!(
                    "iter {iter}: rho={rho:.3e} rp={rp:.3e} rd={rd:.3e} gap={gap:.3e} |u|={:.3e}",
                    norm(&u)
                );
            }

            // An optimal status certifies cone membership of b - Ay within
            // the same scaled tolerance.
            if rp <= settings.eps_abs + settings.eps_rel * scale_p
                && rd <= settings.eps_abs + settings.eps_rel * scale_d
            {
                return Ok(ConicSolution {
                    y: unscale_y(&y_new),
                    status: SolveStatus::Optimal,
                    primal_residual: rp,
                    dual_residual: rd,
                    gap,
                    iterations: iter + 1,
                });
            }

            // Residual balancing: scale the penalty toward whichever side
            // lags, rebuilding the cached factorization only on a real
            // change.
            if iter % ADAPT_EVERY == 0 && iter > 0 {
                let rp_rel = rp / scale_p.max(1e-12);
                let rd_rel = rd / scale_d.max(1e-12);
                let ratio = (rp_rel / rd_rel.max(1e-16)).sqrt();
                let rho_new = (rho * ratio).clamp(RHO_MIN, RHO_MAX);
                if rho_new > 5.0 * rho || rho_new < rho / 5.0 {
                    let correction = rho / rho_new;
                    for x in &mut u {
                        *x *= correction;
                    }
                    rho = rho_new;
                    factor = factor_for(rho)?;
                }
            }

            if iter > 0 && iter % DIVERGE_WINDOW == 0 {
                let no_progress = window_best_rp > 0.9 * prev_window_best_rp;
                // Stalled far from feasibility with a growing dual: treat as
                // an infeasibility signal rather than burning the iteration
                // budget.
                let suspect_infeasible = window_best_rp > 0.5 * prev_window_best_rp
                    && window_best_rp > 1e-4 * (1.0 + norm_b)
                    && norm(&u) > 1e3 * (1.0 + norm_b);
                // A near-feasible plateau with a flat objective is the
                // sublinear tail this method hits on degenerate geometry;
                // further iterations buy nothing, so hand the iterate back.
                let obj_now = crate::linalg::dot(&sc.c, &y_new);
                let obj_flat = (obj_now - window_last_obj).abs() <= 1e-9 * (1.0 + obj_now.abs());
                let stalled_near_feasible = no_progress && obj_flat && rp <= STALL_GRADE;
                prev_window_best_rp = window_best_rp;
                window_best_rp = f64::INFINITY;
                window_last_obj = obj_now;
                if suspect_infeasible || stalled_near_feasible {
                    return Ok(ConicSolution {
                        y: unscale_y(&y_new),
                        status: if suspect_infeasible {
                            SolveStatus::InfeasibleSuspect
                        } else {
                            SolveStatus::MaxIters
                        },
                        primal_residual: rp,
                        dual_residual: rd,
                        gap,
                        iterations: iter + 1,
                    });
                }
            }
        }

        y = y_new;
        s = s_new;
    }

    Ok(ConicSolution {
        y: unscale_y(&y),
        status: SolveStatus::MaxIters,
        primal_residual: rp,
        dual_residual: rd,
        gap,
        iterations: settings.max_iter,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn lp_min_y_geq_1() -> ConicProgram {
        // min y s.t. y - 1 >= 0  ⇔  b - A y = y - 1 with A = [-1], b = [-1].
        ConicProgram {
            c: vec![1.0],
            a: Mat::from_rows(&[vec![-1.0]]),
            b: vec![-1.0],
            cones: ConeSpec(vec![Cone::NonNeg(1)]),
        }
    }

    #[test]
    fn projections_match_case_analysis() {
        let spec = ConeSpec(vec![Cone::NonNeg(2)]);
        assert_eq!(project_cone(&[-1.0, 2.0], &spec).unwrap(), vec![0.0, 2.0]);

        let soc3 = ConeSpec(vec![Cone::SecondOrder(3)]);
        assert_eq!(
            project_cone(&[1.0, 0.5, 0.0], &soc3).unwrap(),
            vec![1.0, 0.5, 0.0]
        );

        let soc2 = ConeSpec(vec![Cone::SecondOrder(2)]);
        assert_eq!(project_cone(&[-2.0, 1.0], &soc2).unwrap(), vec![0.0, 0.0]);

        let zero = ConeSpec(vec![Cone::Zero(2)]);
        assert_eq!(project_cone(&[3.0, -4.0], &zero).unwrap(), vec![0.0, 0.0]);

        assert!(project_cone(&[1.0], &soc3).is_err());
    }

    #[test]
    fn solves_lp_corner() {
        let prog = lp_min_y_geq_1();
        let sol = solve(&prog, &SolverSettings::default()).unwrap();
        assert_eq!(sol.status, SolveStatus::Optimal);
        assert!((sol.y[0] - 1.0).abs() < 1e-6);
    }

    #[test]
    fn solves_projection_onto_unit_ball() {
        // min t s.t. ‖x − (2,0)‖ <= t, ‖x‖ <= 1; optimum x = (1,0), t = 1.
        // Variables y = (x1, x2, t).
        let a = Mat::from_rows(&[
            vec![0.0, 0.0, -1.0],
            vec![-1.0, 0.0, 0.0],
            vec![0.0, -1.0, 0.0],
            vec![0.0, 0.0, 0.0],
            vec![-1.0, 0.0, 0.0],
            vec![0.0, -1.0, 0.0],
        ]);
        let prog = ConicProgram {
            c: vec![0.0, 0.0, 1.0],
            a,
            b: vec![0.0, -2.0, 0.0, 1.0, 0.0, 0.0],
            cones: ConeSpec(vec![Cone::SecondOrder(3), Cone::SecondOrder(3)]),
        };
        let sol = solve(&prog, &SolverSettings::default()).unwrap();
        assert_eq!(sol.status, SolveStatus::Optimal);
        assert!(
            (sol.y[0] - 1.0).abs() < 1e-5,
            "x = ({}, {})",
            sol.y[0],
            sol.y[1]
        );
        assert!(sol.y[1].abs() < 1e-5);
        assert!((sol.y[2] - 1.0).abs() < 1e-5);
    }

    #[test]
    fn optimal_status_implies_cone_membership() {
        let prog = lp_min_y_geq_1();
        let settings = SolverSettings::default();
        let sol = solve(&prog, &settings).unwrap();
        assert_eq!(sol.status, SolveStatus::Optimal);
        let resid: Vec<f64> = prog
            .b
            .iter()
            .zip(&prog.a.matvec(&sol.y))
            .map(|(b, a)| b - a)
            .collect();
        assert!(cone_distance(&resid, &prog.cones).unwrap() <= settings.eps_abs);
    }

    #[test]
    fn rejects_malformed_programs() {
        let mut prog = lp_min_y_geq_1();
        prog.b = vec![1.0, 2.0];
        assert!(matches!(
            solve(&prog, &SolverSettings::default()),
            Err(ConicError::RhsMismatch { .. })
        ));
        let mut prog = lp_min_y_geq_1();
        prog.c = vec![f64::NAN];
        assert!(matches!(
            solve(&prog, &SolverSettings::default()),
            Err(ConicError::NonFinite)
        ));
    }

    #[test]
    fn deterministic_iterates() {
        let prog = lp_min_y_geq_1();
        let a = solve(&prog, &SolverSettings::default()).unwrap();
        let b = solve(&prog, &SolverSettings::default()).unwrap();
        assert_eq!(a.y, b.y);
        assert_eq!(a.iterations, b.iterations);
    }

    proptest! {
        #[test]
        fn projection_is_idempotent_and_nonexpansive(
            a in prop::collection::vec(-5.0f64..5.0, 9),
            b in prop::collection::vec(-5.0f64..5.0, 9)
        ) {
            let spec = ConeSpec(vec![Cone::Zero(2), Cone::NonNeg(3), Cone::SecondOrder(4)]);
            let pa = project_cone(&a, &spec).unwrap();
            let paa = project_cone(&pa, &spec).unwrap();
            for (x, y) in pa.iter().zip(&paa) {
                prop_assert!((x - y).abs() < 1e-12);
            }
            let pb = project_cone(&b, &spec).unwrap();
            let d_in = norm(&crate::linalg::sub(&a, &b));
            let d_out = norm(&crate::linalg::sub(&pa, &pb));
            prop_assert!(d_out <= d_in + 1e-12);
        }
    }
}
