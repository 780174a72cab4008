//! Brute-force reference implementations used by the test suite to
//! cross-check the main crate: an exhaustive grid search for small optimal
//! control instances, sampled hull-boundary distances, reachability-ball
//! verification by explicit min-norm steering, matrix-power graph
//! reachability, and a vertex-enumeration LP solver.
//!
//! Everything here reimplements the math it checks from scratch (plain
//! loops over raw matrix entries) so the reference stays independent of
//! the production code paths.

#![allow(clippy::needless_range_loop)]

use hullsense::dynamics::LinearAgent;
use hullsense::geometry::Hull2;
use hullsense::graph::EdgeSet;
use hullsense::ocp::OcpSpec;

/// Deterministic 64-bit generator (splitmix64); every oracle that samples
/// derives its stream from an explicit seed.
#[derive(Debug, Clone)]
pub struct SplitMix64 {
    state: u64,
}

impl SplitMix64 {
    pub fn new(seed: u64) -> Self {
        SplitMix64 { state: seed }
    }

    pub fn next_u64(&mut self) -> u64 {
        self.state = self.state.wrapping_add(0x9e3779b97f4a7c15);
        let mut z = self.state;
        z = (z ^ (z >> 30)).wrapping_mul(0xbf58476d1ce4e5b9);
        z = (z ^ (z >> 27)).wrapping_mul(0x94d049bb133111eb);
        z ^ (z >> 31)
    }

    /// Uniform in [0, 1).
    pub fn next_f64(&mut self) -> f64 {
        (self.next_u64() >> 11) as f64 / (1u64 << 53) as f64
    }

    /// Uniform in [lo, hi).
    pub fn range(&mut self, lo: f64, hi: f64) -> f64 {
        lo + (hi - lo) * self.next_f64()
    }

    pub fn below(&mut self, n: usize) -> usize {
        (self.next_u64() % n as u64) as usize
    }
}

fn vec_norm(v: &[f64]) -> f64 {
    v.iter().map(|x| x * x).sum::<f64>().sqrt()
}

fn mat_apply(m: &hullsense::linalg::Mat, v: &[f64]) -> Vec<f64> {
    let mut out = vec![0.0; m.rows()];
    for i in 0..m.rows() {
        let mut acc = 0.0;
        for j in 0..m.cols() {
            acc += m.get(i, j) * v[j];
        }
        out[i] = acc;
    }
    out
}

fn agent_step(agent: &LinearAgent, x: &[f64], u: &[f64]) -> Vec<f64> {
    let ax = mat_apply(agent.a(), x);
    let bu = mat_apply(agent.b(), u);
    ax.iter().zip(&bu).map(|(a, b)| a + b).collect()
}

/// Distance from a planar point to a hull, recomputed from the vertex list
/// alone.
pub fn hull_distance(hull: &Hull2, p: &[f64]) -> f64 {
    let verts: Vec<&[f64]> = hull.vertices().iter().map(|v| v.coords()).collect();
    match verts.len() {
        1 => ((p[0] - verts[0][0]).powi(2) + (p[1] - verts[0][1]).powi(2)).sqrt(),
        2 => segment_distance(p, verts[0], verts[1]),
        n => {
            let mut inside = true;
            for i in 0..n {
                let a = verts[i];
                let b = verts[(i + 1) % n];
                let cross = (b[0] - a[0]) * (p[1] - a[1]) - (b[1] - a[1]) * (p[0] - a[0]);
                if cross < 0.0 {
                    inside = false;
                    break;
                }
            }
            if inside {
                0.0
            } else {
                (0..n)
                    .map(|i| segment_distance(p, verts[i], verts[(i + 1) % n]))
                    .fold(f64::INFINITY, f64::min)
            }
        }
    }
}

fn segment_distance(p: &[f64], a: &[f64], b: &[f64]) -> f64 {
    let abx = b[0] - a[0];
    let aby = b[1] - a[1];
    let len2 = abx * abx + aby * aby;
    let t = if len2 == 0.0 {
        0.0
    } else {
        (((p[0] - a[0]) * abx + (p[1] - a[1]) * aby) / len2).clamp(0.0, 1.0)
    };
    ((p[0] - a[0] - t * abx).powi(2) + (p[1] - a[1] - t * aby).powi(2)).sqrt()
}

/// Result of an exhaustive input-grid search.
#[derive(Debug, Clone)]
pub struct GridOracleResult {
    pub best_cost: f64,
    pub best_inputs: Vec<Vec<f64>>,
    pub grid_step: f64,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum GridError {
    TooLarge { dims: usize },
    Infeasible,
}

impl std::fmt::Display for GridError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            GridError::TooLarge { dims } => write!(
                f,
                "grid search needs horizon <= 2 and input dim <= 2, got {dims} grid dimensions"
            ),
            GridError::Infeasible => write!(f, "no grid point satisfies the constraints"),
        }
    }
}

impl std::error::Error for GridError {}

fn plan_cost_reference(spec: &OcpSpec, u_seq: &[Vec<f64>]) -> f64 {
    let d = spec.agent.consensus_dim();
    let mut x = spec.x0.clone();
    let mut total = 0.0;
    for (k, u) in u_seq.iter().enumerate() {
        if spec.target_velocity_zero {
            for (j, xj) in x.iter().enumerate() {
                let target = if j < d { spec.zbar.coords()[j] } else { 0.0 };
                total += spec.q_diag[j % d] * (xj - target) * (xj - target);
            }
        } else {
            let z = mat_apply(spec.agent.consensus_proj(), &x);
            for (c, zc) in z.iter().enumerate() {
                let e = zc - spec.zbar.coords()[c];
                total += spec.q_diag[c] * e * e;
            }
        }
        let prev: &[f64] = if k == 0 { &spec.u_prev } else { &u_seq[k - 1] };
        for (i, ui) in u.iter().enumerate() {
            let e = ui - prev[i];
            total += spec.r_diag[i] * e * e;
        }
        x = agent_step(&spec.agent, &x, u);
    }
    total
}

fn input_feasible(spec: &OcpSpec, u: &[f64]) -> bool {
    match spec.agent.input_set() {
        hullsense::dynamics::InputSet::Ball { radius } => vec_norm(u) <= *radius + 1e-12,
        hullsense::dynamics::InputSet::Box { bounds } => bounds
            .iter()
            .zip(u)
            .all(|((lo, hi), v)| *v >= lo - 1e-12 && *v <= hi + 1e-12),
    }
}

/// Exhaustive search over per-component input grids within the given
/// bounds; terminal feasibility (hull membership and contraction) is
/// checked at `tol = grid_step`.
fn grid_search(
    spec: &OcpSpec,
    step: f64,
    boxes: &[Vec<(f64, f64)>],
) -> Option<(f64, Vec<Vec<f64>>)> {
    let m = spec.agent.input_dim();
    let horizon = spec.horizon;
    let dims = m * horizon;

    let mut axes: Vec<Vec<f64>> = Vec::with_capacity(dims);
    for k in 0..horizon {
        for i in 0..m {
            let (lo, hi) = boxes[k][i];
            let count = ((hi - lo) / step).round() as usize;
            axes.push((0..=count).map(|q| lo + q as f64 * step).collect());
        }
    }

    let x0_z = mat_apply(spec.agent.consensus_proj(), &spec.x0);
    let contraction_rhs = spec.kappa
        * x0_z
            .iter()
            .zip(spec.zbar.coords())
            .map(|(a, b)| (a - b) * (a - b))
            .sum::<f64>()
            .sqrt();

    let mut best: Option<(f64, Vec<Vec<f64>>)> = None;
    let mut idx = vec![0usize; dims];
    'outer: loop {
        let u_seq: Vec<Vec<f64>> = (0..horizon)
            .map(|k| (0..m).map(|i| axes[k * m + i][idx[k * m + i]]).collect())
            .collect();

        if u_seq.iter().all(|u| input_feasible(spec, u)) {
            let mut x = spec.x0.clone();
            for u in &u_seq {
                x = agent_step(&spec.agent, &x, u);
            }
            let z = mat_apply(spec.agent.consensus_proj(), &x);
            let in_hull = hull_distance(&spec.hull, &z) <= step;
            let contracted = {
                let dist: f64 = z
                    .iter()
                    .zip(spec.zbar.coords())
                    .map(|(a, b)| (a - b) * (a - b))
                    .sum::<f64>()
                    .sqrt();
                dist <= contraction_rhs + step
            };
            if in_hull && contracted {
                let cost = plan_cost_reference(spec, &u_seq);
                if best.as_ref().map(|(c, _)| cost < *c).unwrap_or(true) {
                    best = Some((cost, u_seq));
                }
            }
        }

        // Odometer increment over the grid axes.
        for pos in (0..dims).rev() {
            idx[pos] += 1;
            if idx[pos] < axes[pos].len() {
                continue 'outer;
            }
            idx[pos] = 0;
            if pos == 0 {
                break 'outer;
            }
        }
    }
    best
}

fn full_input_boxes(spec: &OcpSpec) -> Vec<Vec<(f64, f64)>> {
    let m = spec.agent.input_dim();
    let per_step: Vec<(f64, f64)> = match spec.agent.input_set() {
        hullsense::dynamics::InputSet::Ball { radius } => vec![(-radius, *radius); m],
        hullsense::dynamics::InputSet::Box { bounds } => bounds.clone(),
    };
    vec![per_step; spec.horizon]
}

/// Single-resolution exhaustive oracle.
pub fn grid_ocp(spec: &OcpSpec, grid_step: f64) -> Result<GridOracleResult, GridError> {
    let dims = spec.agent.input_dim() * spec.horizon;
    if spec.horizon > 2 || spec.agent.input_dim() > 2 {
        return Err(GridError::TooLarge { dims });
    }
    let boxes = full_input_boxes(spec);
    match grid_search(spec, grid_step, &boxes) {
        Some((best_cost, best_inputs)) => Ok(GridOracleResult {
            best_cost,
            best_inputs,
            grid_step,
        }),
        None => Err(GridError::Infeasible),
    }
}

/// Feasibility of a concrete input sequence at the given tolerance,
/// matching the grid's own acceptance rule.
fn sequence_feasible(spec: &OcpSpec, u_seq: &[Vec<f64>], tol: f64) -> bool {
    if !u_seq.iter().all(|u| input_feasible(spec, u)) {
        return false;
    }
    let mut x = spec.x0.clone();
    for u in u_seq {
        x = agent_step(&spec.agent, &x, u);
    }
    let z = mat_apply(spec.agent.consensus_proj(), &x);
    if hull_distance(&spec.hull, &z) > tol {
        return false;
    }
    let x0_z = mat_apply(spec.agent.consensus_proj(), &spec.x0);
    let rhs = spec.kappa
        * x0_z
            .iter()
            .zip(spec.zbar.coords())
            .map(|(a, b)| (a - b) * (a - b))
            .sum::<f64>()
            .sqrt();
    let dist: f64 = z
        .iter()
        .zip(spec.zbar.coords())
        .map(|(a, b)| (a - b) * (a - b))
        .sum::<f64>()
        .sqrt();
    dist <= rhs + tol
}

/// Coarse grid plus local refinements around the incumbent, dividing the
/// step by 5 per level. Constraint tolerance tracks the level's step, so
/// an incumbent found under a coarser tolerance is dropped once it fails
/// the tighter check.
pub fn grid_ocp_refined(
    spec: &OcpSpec,
    coarse_step: f64,
    levels: usize,
) -> Result<GridOracleResult, GridError> {
    let dims = spec.agent.input_dim() * spec.horizon;
    if spec.horizon > 2 || spec.agent.input_dim() > 2 {
        return Err(GridError::TooLarge { dims });
    }
    let mut step = coarse_step;
    let mut incumbent =
        grid_search(spec, step, &full_input_boxes(spec)).ok_or(GridError::Infeasible)?;
    for _ in 0..levels {
        let next_step = step / 5.0;
        let outer = full_input_boxes(spec);
        let boxes: Vec<Vec<(f64, f64)>> = incumbent
            .1
            .iter()
            .zip(&outer)
            .map(|(u, limits)| {
                u.iter()
                    .zip(limits)
                    .map(|(v, (lo, hi))| ((v - 1.5 * step).max(*lo), (v + 1.5 * step).min(*hi)))
                    .collect()
            })
            .collect();
        let candidate = grid_search(spec, next_step, &boxes);
        let keep_incumbent = sequence_feasible(spec, &incumbent.1, next_step);
        incumbent = match (candidate, keep_incumbent) {
            (Some(c), true) => {
                if c.0 < incumbent.0 {
                    c
                } else {
                    incumbent
                }
            }
            (Some(c), false) => c,
            (None, true) => incumbent,
            (None, false) => return Err(GridError::Infeasible),
        };
        step = next_step;
    }
    Ok(GridOracleResult {
        best_cost: incumbent.0,
        best_inputs: incumbent.1,
        grid_step: step,
    })
}

/// Densely sampled distance from `p` to a polygon hull's boundary.
pub fn sample_boundary_distance(hull: &Hull2, p: &[f64], n_samples: usize) -> f64 {
    assert_eq!(hull.dim(), 2, "boundary sampling is defined for polygons");
    let verts: Vec<&[f64]> = hull.vertices().iter().map(|v| v.coords()).collect();
    let n = verts.len();
    let mut best = f64::INFINITY;
    for i in 0..n {
        let a = verts[i];
        let b = verts[(i + 1) % n];
        for q in 0..=n_samples {
            let t = q as f64 / n_samples as f64;
            let x = a[0] + t * (b[0] - a[0]);
            let y = a[1] + t * (b[1] - a[1]);
            best = best.min(((p[0] - x).powi(2) + (p[1] - y).powi(2)).sqrt());
        }
    }
    best
}

/// Outcome of the reachability-ball check.
#[derive(Debug, Clone)]
pub struct ReachBallReport {
    pub samples: usize,
    pub failures: usize,
    pub radius: f64,
}

/// Gaussian elimination with partial pivoting for small dense systems.
fn solve_dense(mut a: Vec<Vec<f64>>, mut b: Vec<f64>) -> Option<Vec<f64>> {
    let n = b.len();
    for col in 0..n {
        let pivot =
            (col..n).max_by(|&i, &j| a[i][col].abs().partial_cmp(&a[j][col].abs()).unwrap())?;
        if a[pivot][col].abs() < 1e-12 {
            return None;
        }
        a.swap(col, pivot);
        b.swap(col, pivot);
        for row in (col + 1)..n {
            let f = a[row][col] / a[col][col];
            for k in col..n {
                a[row][k] -= f * a[col][k];
            }
            b[row] -= f * b[col];
        }
    }
    let mut x = vec![0.0; n];
    for row in (0..n).rev() {
        let mut acc = b[row];
        for k in (row + 1)..n {
            acc -= a[row][k] * x[k];
        }
        x[row] = acc / a[row][row];
    }
    Some(x)
}

/// Verifies that every sampled displacement within the reach radius is
/// realized by the min-norm input sequence with per-step norms inside the
/// input ball and an exact endpoint. The radius under test comes from the
/// production analysis; everything else is recomputed here.
pub fn verify_reach_ball(
    agent: &LinearAgent,
    m_steps: usize,
    n_samples: usize,
    seed: u64,
) -> Result<ReachBallReport, hullsense::dynamics::DynamicsError> {
    let radius = hullsense::dynamics::reach_radius(agent, m_steps)?;
    let n = agent.state_dim();
    let m = agent.input_dim();
    let r_u = match agent.input_set() {
        hullsense::dynamics::InputSet::Ball { radius } => *radius,
        hullsense::dynamics::InputSet::Box { bounds } => bounds
            .iter()
            .map(|(lo, hi)| (-lo).min(*hi))
            .fold(f64::INFINITY, f64::min),
    };

    // Controllability blocks from scratch: block k holds A^k B and maps
    // input u(M-1-k).
    let mut blocks: Vec<Vec<Vec<f64>>> = Vec::with_capacity(m_steps);
    let mut current: Vec<Vec<f64>> = (0..n)
        .map(|i| (0..m).map(|j| agent.b().get(i, j)).collect())
        .collect();
    for _ in 0..m_steps {
        blocks.push(current.clone());
        let mut next = vec![vec![0.0; m]; n];
        for (i, row) in next.iter_mut().enumerate() {
            for (j, cell) in row.iter_mut().enumerate() {
                let mut acc = 0.0;
                for k in 0..n {
                    acc += agent.a().get(i, k) * current[k][j];
                }
                *cell = acc;
            }
        }
        current = next;
    }

    // Gram matrix C Cᵀ.
    let mut gram = vec![vec![0.0; n]; n];
    for block in &blocks {
        for (i, row) in gram.iter_mut().enumerate() {
            for (j, cell) in row.iter_mut().enumerate() {
                for q in 0..m {
                    *cell += block[i][q] * block[j][q];
                }
            }
        }
    }

    let mut rng = SplitMix64::new(seed);
    let mut failures = 0;
    for _ in 0..n_samples {
        // Uniform in the ball of the tested radius, by rejection.
        let delta: Vec<f64> = loop {
            let cand: Vec<f64> = (0..n).map(|_| rng.range(-1.0, 1.0)).collect();
            let norm = vec_norm(&cand);
            if norm <= 1.0 && norm > 1e-9 {
                break cand.iter().map(|c| c * radius).collect();
            }
        };
        let xi: Vec<f64> = (0..n).map(|_| rng.range(-5.0, 5.0)).collect();

        let Some(w) = solve_dense(gram.clone(), delta.clone()) else {
            failures += 1;
            continue;
        };
        // U = Cᵀ w; inputs in application order are u(k) = block (M-1-k).
        let inputs: Vec<Vec<f64>> = (0..m_steps)
            .map(|k| {
                let block = &blocks[m_steps - 1 - k];
                (0..m)
                    .map(|q| (0..n).map(|i| block[i][q] * w[i]).sum::<f64>())
                    .collect()
            })
            .collect();

        let within_bounds = inputs.iter().all(|u| vec_norm(u) <= r_u + 1e-9);

        let mut x = xi.clone();
        for u in &inputs {
            x = agent_step(agent, &x, u);
        }
        let mut drift = xi.clone();
        for _ in 0..m_steps {
            drift = mat_apply(agent.a(), &drift);
        }
        let endpoint_err: f64 = x
            .iter()
            .zip(drift.iter().zip(&delta))
            .map(|(xv, (dv, de))| (xv - dv - de) * (xv - dv - de))
            .sum::<f64>()
            .sqrt();

        if !within_bounds || endpoint_err > 1e-9 {
            failures += 1;
        }
    }
    Ok(ReachBallReport {
        samples: n_samples,
        failures,
        radius,
    })
}

/// Root existence via boolean powers of (I + Adj).
pub fn reachability_matrix(edges: &EdgeSet, node_count: usize) -> bool {
    if node_count == 0 {
        return false;
    }
    let mut one_step = vec![vec![false; node_count]; node_count];
    for (i, row) in one_step.iter_mut().enumerate() {
        row[i] = true;
    }
    for &(from, to) in &edges.0 {
        one_step[from - 1][to - 1] = true;
    }
    let mut power = one_step.clone();
    for _ in 1..node_count {
        let mut next = vec![vec![false; node_count]; node_count];
        for i in 0..node_count {
            for k in 0..node_count {
                if power[i][k] {
                    for (j, cell) in next[i].iter_mut().enumerate() {
                        *cell = *cell || one_step[k][j];
                    }
                }
            }
        }
        power = next;
    }
    (0..node_count).any(|r| power[r].iter().all(|v| *v))
}

/// Minimum of `cᵀy` over `{y : b − A y >= 0}` by enumerating basic
/// solutions; `None` when no fully determined feasible vertex exists.
/// Intended for small bounded test problems.
pub fn lp_vertex_enumeration(c: &[f64], a_rows: &[Vec<f64>], b: &[f64]) -> Option<f64> {
    let n = c.len();
    let m = a_rows.len();
    if m < n {
        return None;
    }
    let mut best: Option<f64> = None;
    let mut subset: Vec<usize> = (0..n).collect();
    loop {
        // Solve the n selected rows as equalities.
        let a_sub: Vec<Vec<f64>> = subset.iter().map(|&i| a_rows[i].clone()).collect();
        let b_sub: Vec<f64> = subset.iter().map(|&i| b[i]).collect();
        if let Some(y) = solve_dense(a_sub, b_sub) {
            let feasible = (0..m).all(|i| {
                let ay: f64 = a_rows[i].iter().zip(&y).map(|(a, v)| a * v).sum();
                b[i] - ay >= -1e-9
            });
            if feasible {
                let obj: f64 = c.iter().zip(&y).map(|(ci, yi)| ci * yi).sum();
                best = Some(best.map_or(obj, |v: f64| v.min(obj)));
            }
        }

        // Next lexicographic n-subset of 0..m.
        let mut pos = n;
        loop {
            if pos == 0 {
                return best;
            }
            pos -= 1;
            if subset[pos] < m - (n - pos) {
                subset[pos] += 1;
                for q in (pos + 1)..n {
                    subset[q] = subset[q - 1] + 1;
                }
                break;
            }
        }
    }
}
