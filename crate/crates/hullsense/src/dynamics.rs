//! Linear agent models, controllability and reachability analysis, explicit
//! horizon bounds for integrator networks, and the constructive
//! double-integrator warm start (velocity reset followed by a rest-to-rest
//! translation).

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::linalg::{norm, singular_values, Mat};

/// Admissible input set, always containing the origin in its interior.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum InputSet {
    /// Euclidean ball `‖u‖ <= radius`.
    Ball { radius: f64 },
    /// Per-component bounds `lo_i <= u_i <= hi_i`.
    Box { bounds: Vec<(f64, f64)> },
}

impl InputSet {
    /// Radius of the largest Euclidean ball around the origin inside the set.
    pub fn inscribed_radius(&self) -> f64 {
        match self {
            InputSet::Ball { radius } => *radius,
            InputSet::Box { bounds } => bounds
                .iter()
                .map(|(lo, hi)| (-lo).min(*hi))
                .fold(f64::INFINITY, f64::min),
        }
    }

    pub fn contains(&self, u: &[f64], tol: f64) -> bool {
        match self {
            InputSet::Ball { radius } => norm(u) <= radius + tol,
            InputSet::Box { bounds } => bounds
                .iter()
                .zip(u)
                .all(|((lo, hi), v)| *v >= lo - tol && *v <= hi + tol),
        }
    }
}

/// Discrete-time linear prediction model `x⁺ = A x + B u` together with its
/// input set and the selector `P` mapping the state to the consensus
/// variable (identity for a single integrator, the position block for a
/// double integrator).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LinearAgent {
    a: Mat,
    b: Mat,
    input_set: InputSet,
    consensus_proj: Mat,
}

#[derive(Debug, Error, PartialEq)]
pub enum DynamicsError {
    #[error("input bound must be positive, got {0}")]
    NonPositiveBound(f64),
    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },
    #[error("controllability matrix is rank deficient at horizon {m} (state dim {n})")]
    RankDeficient { m: usize, n: usize },
    #[error("horizon {m} is shorter than the constructive bound {required}")]
    HorizonTooShort { m: usize, required: usize },
    #[error("u_min must be positive, got {0}")]
    NonPositiveUMin(f64),
}

impl LinearAgent {
    pub fn new(a: Mat, b: Mat, input_set: InputSet, consensus_proj: Mat) -> Self {
        assert_eq!(a.rows(), a.cols(), "A must be square");
        assert_eq!(b.rows(), a.rows(), "B row count must match state dim");
        assert_eq!(
            consensus_proj.cols(),
            a.rows(),
            "P column count must match state dim"
        );
        LinearAgent {
            a,
            b,
            input_set,
            consensus_proj,
        }
    }

    pub fn a(&self) -> &Mat {
        &self.a
    }

    pub fn b(&self) -> &Mat {
        &self.b
    }

    pub fn input_set(&self) -> &InputSet {
        &self.input_set
    }

    pub fn consensus_proj(&self) -> &Mat {
        &self.consensus_proj
    }

    pub fn state_dim(&self) -> usize {
        self.a.rows()
    }

    pub fn input_dim(&self) -> usize {
        self.b.cols()
    }

    pub fn consensus_dim(&self) -> usize {
        self.consensus_proj.rows()
    }

    /// Replaces the input set, keeping the dynamics.
    pub fn with_input_set(mut self, input_set: InputSet) -> Self {
        self.input_set = input_set;
        self
    }

    /// Consensus-space sample of a full state.
    pub fn project(&self, x: &[f64]) -> Vec<f64> {
        self.consensus_proj.matvec(x)
    }
}

/// `x⁺ = x + u` with a Euclidean input ball and identity consensus selector.
pub fn single_integrator(d: usize, u_max: f64) -> Result<LinearAgent, DynamicsError> {
    if u_max <= 0.0 {
        return Err(DynamicsError::NonPositiveBound(u_max));
    }
    Ok(LinearAgent::new(
        Mat::identity(d),
        Mat::identity(d),
        InputSet::Ball { radius: u_max },
        Mat::identity(d),
    ))
}

/// Position/velocity double integrator: state `(r, v)` with
/// `r⁺ = r + v`, `v⁺ = v + u`; the consensus variable is the position.
pub fn double_integrator(d: usize, u_max: f64) -> Result<LinearAgent, DynamicsError> {
    if u_max <= 0.0 {
        return Err(DynamicsError::NonPositiveBound(u_max));
    }
    let n = 2 * d;
    let mut a = Mat::identity(n);
    for i in 0..d {
        a.set(i, d + i, 1.0);
    }
    let mut b = Mat::zeros(n, d);
    for i in 0..d {
        b.set(d + i, i, 1.0);
    }
    let mut p = Mat::zeros(d, n);
    for i in 0..d {
        p.set(i, i, 1.0);
    }
    Ok(LinearAgent::new(a, b, InputSet::Ball { radius: u_max }, p))
}

/// One plant step `A x + B u`.
pub fn step(agent: &LinearAgent, x: &[f64], u: &[f64]) -> Result<Vec<f64>, DynamicsError> {
    if x.len() != agent.state_dim() {
        return Err(DynamicsError::DimensionMismatch {
            expected: agent.state_dim(),
            got: x.len(),
        });
    }
    if u.len() != agent.input_dim() {
        return Err(DynamicsError::DimensionMismatch {
            expected: agent.input_dim(),
            got: u.len(),
        });
    }
    let mut out = agent.a.matvec(x);
    let bu = agent.b.matvec(u);
    for (o, v) in out.iter_mut().zip(bu) {
        *o += v;
    }
    Ok(out)
}

/// `[B, AB, …, A^{M-1}B]`. As the map from a stacked input sequence to the
/// M-step displacement, block `k` multiplies input `u(M-1-k)`: the most
/// recent input sits in the first block.
pub fn controllability_matrix(agent: &LinearAgent, m_steps: usize) -> Mat {
    let n = agent.state_dim();
    let m = agent.input_dim();
    let mut out = Mat::zeros(n, m * m_steps);
    let mut block = agent.b.clone();
    for k in 0..m_steps {
        for i in 0..n {
            for j in 0..m {
                out.set(i, k * m + j, block.get(i, j));
            }
        }
        block = agent.a.matmul(&block);
    }
    out
}

const RANK_TOL: f64 = 1e-10;

/// Radius of the Euclidean ball guaranteed reachable around `A^M x0` in `M`
/// steps: the smallest singular value of the controllability matrix times
/// the input set's inscribed ball radius. Errors when the controllability
/// matrix is rank deficient.
pub fn reach_radius(agent: &LinearAgent, m_steps: usize) -> Result<f64, DynamicsError> {
    let n = agent.state_dim();
    let c = controllability_matrix(agent, m_steps);
    if c.cols() < n {
        return Err(DynamicsError::RankDeficient { m: m_steps, n });
    }
    let sigma = singular_values(&c);
    let s_min = sigma[n - 1];
    if s_min <= RANK_TOL * sigma[0].max(1.0) {
        return Err(DynamicsError::RankDeficient { m: m_steps, n });
    }
    Ok(s_min * agent.input_set.inscribed_radius())
}

/// A horizon length together with the inputs it was derived from.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HorizonBound {
    pub m: usize,
    pub derivation: HorizonDerivation,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HorizonDerivation {
    pub v0: f64,
    pub u_min: f64,
    pub v_max: Option<f64>,
}

/// Ceiling that forgives values a hair above an integer.
fn ceil_tol(x: f64) -> f64 {
    (x - 1e-9).ceil().max(0.0)
}

/// Single-integrator horizon: `max(1, ⌈V0 / u_min⌉)` where `V0` is the
/// initial disagreement diameter and `u_min` the smallest inscribed input
/// radius across the network.
pub fn horizon_si(v0: f64, u_min: f64) -> Result<HorizonBound, DynamicsError> {
    if u_min <= 0.0 {
        return Err(DynamicsError::NonPositiveUMin(u_min));
    }
    let m = (ceil_tol(v0 / u_min) as usize).max(1);
    Ok(HorizonBound {
        m,
        derivation: HorizonDerivation {
            v0,
            u_min,
            v_max: None,
        },
    })
}

/// Double-integrator horizon:
/// `max(2, ⌈2·v_max / u_min⌉ + 2·⌈sqrt(Vr0 / u_min)⌉)` where `Vr0` is the
/// initial position diameter and `v_max` the largest initial velocity norm.
pub fn horizon_di(vr0: f64, v_max: f64, u_min: f64) -> Result<HorizonBound, DynamicsError> {
    if u_min <= 0.0 {
        return Err(DynamicsError::NonPositiveUMin(u_min));
    }
    let reset = ceil_tol(2.0 * v_max / u_min) as usize;
    let translate = 2 * (ceil_tol((vr0 / u_min).sqrt()) as usize);
    let m = (reset + translate).max(2);
    Ok(HorizonBound {
        m,
        derivation: HorizonDerivation {
            v0: vr0,
            u_min,
            v_max: Some(v_max),
        },
    })
}

/// Constructive double-integrator input sequence of length `m_steps`
/// reaching `target` in position with zero terminal velocity: a constant
/// deceleration cancels the initial velocity, then a symmetric
/// accelerate/decelerate maneuver translates the rest state, then zeros.
pub fn warmstart_di(
    agent: &LinearAgent,
    x0: &[f64],
    target: &[f64],
    m_steps: usize,
) -> Result<Vec<Vec<f64>>, DynamicsError> {
    let n = agent.state_dim();
    let d = n / 2;
    if x0.len() != n {
        return Err(DynamicsError::DimensionMismatch {
            expected: n,
            got: x0.len(),
        });
    }
    if target.len() != d {
        return Err(DynamicsError::DimensionMismatch {
            expected: d,
            got: target.len(),
        });
    }
    let u_max = agent.input_set.inscribed_radius();
    let r0 = &x0[..d];
    let v0 = &x0[d..];
    let v0_norm = norm(v0);

    let m1 = if v0_norm <= 1e-12 {
        0
    } else {
        (ceil_tol(v0_norm / u_max) as usize).max(1)
    };
    // Position after the reset phase: r0 + v0 * (m1 + 1) / 2.
    let mut r_reset = r0.to_vec();
    for (r, v) in r_reset.iter_mut().zip(v0) {
        *r += v * (m1 as f64 + 1.0) / 2.0;
    }
    let delta: Vec<f64> = target.iter().zip(&r_reset).map(|(t, r)| t - r).collect();
    let delta_norm = norm(&delta);
    let m2 = if delta_norm <= 1e-12 {
        0
    } else {
        (ceil_tol((delta_norm / u_max).sqrt()) as usize).max(1)
    };

    let required = m1 + 2 * m2;
    if required > m_steps {
        return Err(DynamicsError::HorizonTooShort {
            m: m_steps,
            required,
        });
    }

    let mut seq = Vec::with_capacity(m_steps);
    for _ in 0..m1 {
        seq.push(v0.iter().map(|v| -v / m1 as f64).collect::<Vec<f64>>());
    }
    let accel: Vec<f64> = delta.iter().map(|c| c / (m2 as f64 * m2 as f64)).collect();
    for _ in 0..m2 {
        seq.push(accel.clone());
    }
    for _ in 0..m2 {
        seq.push(accel.iter().map(|c| -c).collect());
    }
    while seq.len() < m_steps {
        seq.push(vec![0.0; d]);
    }
    Ok(seq)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::linalg::dot;

    fn simulate(agent: &LinearAgent, x0: &[f64], inputs: &[Vec<f64>]) -> Vec<f64> {
        let mut x = x0.to_vec();
        for u in inputs {
            x = step(agent, &x, u).unwrap();
        }
        x
    }

    #[test]
    fn single_integrator_shape() {
        let si = single_integrator(2, 1.0).unwrap();
        assert_eq!(si.a(), &Mat::identity(2));
        assert_eq!(si.b(), &Mat::identity(2));
        assert_eq!(si.input_set(), &InputSet::Ball { radius: 1.0 });
        let scalar = single_integrator(1, 0.5).unwrap();
        assert_eq!(scalar.state_dim(), 1);
        assert!(single_integrator(2, 0.0).is_err());
        // Box override used by the boundary-trap scenario.
        let boxed = single_integrator(2, 1.0)
            .unwrap()
            .with_input_set(InputSet::Box {
                bounds: vec![(-1.0, 1.0), (-1.0, 1.0)],
            });
        assert!(boxed.input_set().contains(&[1.0, -1.0], 0.0));
        assert_eq!(boxed.input_set().inscribed_radius(), 1.0);
    }

    #[test]
    fn double_integrator_steps() {
        let di = double_integrator(2, 1.0).unwrap();
        assert_eq!(di.state_dim(), 4);
        // Drift only: position advances by the velocity.
        let x = step(&di, &[0.0, 0.0, 1.0, 0.0], &[0.0, 0.0]).unwrap();
        assert_eq!(x, vec![1.0, 0.0, 1.0, 0.0]);
        // Single kick from rest changes velocity only.
        let x = step(&di, &[0.0, 0.0, 0.0, 0.0], &[0.0, 1.0]).unwrap();
        assert_eq!(x, vec![0.0, 0.0, 0.0, 1.0]);
        let x = step(&di, &[1.0, 1.0, -1.0, 0.0], &[1.0, 0.0]).unwrap();
        assert_eq!(x, vec![0.0, 1.0, 0.0, 0.0]);
    }

    #[test]
    fn step_examples_and_errors() {
        let si = single_integrator(2, 1.0).unwrap();
        assert_eq!(step(&si, &[0.0, 0.0], &[0.0, 0.5]).unwrap(), vec![0.0, 0.5]);
        assert!(step(&si, &[0.0], &[0.0, 0.5]).is_err());
    }

    #[test]
    fn controllability_matrices() {
        let si = single_integrator(2, 1.0).unwrap();
        let c = controllability_matrix(&si, 3);
        assert_eq!((c.rows(), c.cols()), (2, 6));
        for k in 0..3 {
            assert_eq!(c.get(0, 2 * k), 1.0);
            assert_eq!(c.get(1, 2 * k + 1), 1.0);
        }
        let di = double_integrator(1, 1.0).unwrap();
        let c = controllability_matrix(&di, 2);
        // Columns B = (0,1), AB = (1,1).
        assert_eq!((c.get(0, 0), c.get(1, 0)), (0.0, 1.0));
        assert_eq!((c.get(0, 1), c.get(1, 1)), (1.0, 1.0));
        assert_eq!(controllability_matrix(&si, 1), *si.b());
    }

    #[test]
    fn controllability_prefix_property() {
        let di = double_integrator(2, 1.0).unwrap();
        let small = controllability_matrix(&di, 3);
        let big = controllability_matrix(&di, 4);
        for i in 0..small.rows() {
            for j in 0..small.cols() {
                assert_eq!(small.get(i, j), big.get(i, j));
            }
        }
    }

    #[test]
    fn reach_radius_examples() {
        let si = single_integrator(2, 1.0).unwrap();
        assert!((reach_radius(&si, 3).unwrap() - 3f64.sqrt()).abs() < 1e-9);
        let si_half = single_integrator(2, 0.5).unwrap();
        assert!((reach_radius(&si_half, 1).unwrap() - 0.5).abs() < 1e-12);
        let di = double_integrator(1, 1.0).unwrap();
        assert!(matches!(
            reach_radius(&di, 1),
            Err(DynamicsError::RankDeficient { .. })
        ));
    }

    #[test]
    fn reach_radius_verified_by_gram_eigenvalues() {
        // Independent route: smallest singular value of C equals the square
        // root of the smallest eigenvalue of C Cᵀ, closed form for 2x2.
        let si = single_integrator(2, 1.0).unwrap();
        let c = controllability_matrix(&si, 3);
        let mut g = [[0.0f64; 2]; 2];
        for i in 0..2 {
            for j in 0..2 {
                let mut acc = 0.0;
                for k in 0..c.cols() {
                    acc += c.get(i, k) * c.get(j, k);
                }
                g[i][j] = acc;
            }
        }
        let tr = g[0][0] + g[1][1];
        let det = g[0][0] * g[1][1] - g[0][1] * g[1][0];
        let lam_min = (tr - (tr * tr - 4.0 * det).sqrt()) / 2.0;
        assert!((reach_radius(&si, 3).unwrap() - lam_min.sqrt()).abs() < 1e-9);
    }

    #[test]
    fn horizon_si_examples() {
        assert_eq!(horizon_si(102.5f64.sqrt(), 1.0).unwrap().m, 11);
        assert_eq!(horizon_si(0.0, 1.0).unwrap().m, 1);
        assert_eq!(horizon_si(2.5, 0.5).unwrap().m, 5);
        assert!(horizon_si(1.0, 0.0).is_err());
    }

    #[test]
    fn horizon_si_monotone() {
        let mut prev = 0;
        for k in 0..40 {
            let v0 = 0.25 * k as f64;
            let m = horizon_si(v0, 1.0).unwrap().m;
            assert!(m >= prev);
            prev = m;
        }
        assert!(horizon_si(5.0, 0.5).unwrap().m >= horizon_si(5.0, 1.0).unwrap().m);
    }

    #[test]
    fn horizon_di_examples() {
        // Formula value for the reference double-integrator data; the shipped
        // scenario configures 12 explicitly (see scenarios/di_paper.json).
        assert_eq!(horizon_di(102.5f64.sqrt(), 1.0, 1.0).unwrap().m, 10);
        assert_eq!(horizon_di(0.0, 0.0, 1.0).unwrap().m, 2);
        assert_eq!(horizon_di(4.0, 1.0, 1.0).unwrap().m, 6);
    }

    #[test]
    fn warmstart_examples() {
        let di = double_integrator(1, 1.0).unwrap();
        // At rest on target: all-zero sequence.
        let seq = warmstart_di(&di, &[1.0, 0.0], &[1.0], 4).unwrap();
        assert!(seq.iter().all(|u| u == &vec![0.0]));
        // Two-step rest-to-rest translation.
        let seq = warmstart_di(&di, &[0.0, 0.0], &[1.0], 2).unwrap();
        assert_eq!(seq, vec![vec![1.0], vec![-1.0]]);
        let x = simulate(&di, &[0.0, 0.0], &seq);
        assert!((x[0] - 1.0).abs() < 1e-12 && x[1].abs() < 1e-12);
        // Horizon below the constructive bound errors.
        assert!(matches!(
            warmstart_di(&di, &[0.0, 1.0], &[5.0], 2),
            Err(DynamicsError::HorizonTooShort { .. })
        ));
    }

    #[test]
    fn warmstart_reference_di_agents_respect_bounds() {
        let di = double_integrator(2, 1.0).unwrap();
        let states = [
            [-4.0, 2.0, 1.0, 0.0],
            [3.5, 4.0, 0.0, -1.0],
            [4.5, -3.5, -1.0, 0.0],
            [-2.5, -4.0, 0.0, 1.0],
        ];
        let target = [0.375, -0.375];
        for x0 in states {
            let seq = warmstart_di(&di, &x0, &target, 12).unwrap();
            for u in &seq {
                assert!(norm(u) <= 1.0 + 1e-12);
            }
            let x = simulate(&di, &x0, &seq);
            assert!((x[0] - target[0]).abs() < 1e-9);
            assert!((x[1] - target[1]).abs() < 1e-9);
            assert!(norm(&x[2..]) <= 1e-9);
        }
    }

    #[test]
    fn min_norm_inputs_fill_reach_ball() {
        // Steering to any displacement within the reach radius keeps every
        // step inside the input ball and hits the endpoint exactly.
        let si = single_integrator(2, 1.0).unwrap();
        let m_steps = 3;
        let rho = reach_radius(&si, m_steps).unwrap();
        let c = controllability_matrix(&si, m_steps);
        let delta = [rho / 2f64.sqrt(), rho / 2f64.sqrt()];
        // Min-norm solve via the Gram system C Cᵀ w = delta, U = Cᵀ w.
        let gram = c.transpose().gram();
        let f = crate::linalg::Cholesky::factor(&gram).unwrap();
        let w = f.solve(&delta);
        let u_stacked = c.matvec_transpose(&w);
        let mut x = vec![0.0, 0.0];
        for k in 0..m_steps {
            let u = &u_stacked[2 * k..2 * k + 2];
            assert!(dot(u, u).sqrt() <= 1.0 + 1e-9);
            x = step(&si, &x, u).unwrap();
        }
        assert!((x[0] - delta[0]).abs() < 1e-9 && (x[1] - delta[1]).abs() < 1e-9);
    }
}
