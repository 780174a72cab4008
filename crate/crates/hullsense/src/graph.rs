//! Time-varying directed communication graphs.
//!
//! An edge `(k, i)` means agent `k`'s sample is visible to agent `i`; the
//! in-neighbors of `i` at outer step `j` are exactly the sources of such
//! edges. Joint connectivity over a bounded window (every window's union
//! graph contains a directed spanning tree) is the hypothesis under which
//! the closed loop reaches consensus, checked once at scenario load.

use std::collections::BTreeSet;

use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Directed edges `(from, to)`; agent ids are 1-based.
#[derive(Debug, Clone, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct EdgeSet(pub BTreeSet<(usize, usize)>);

impl EdgeSet {
    pub fn from_pairs(pairs: &[(usize, usize)]) -> Self {
        EdgeSet(pairs.iter().copied().collect())
    }

    pub fn union_with(&mut self, other: &EdgeSet) {
        self.0.extend(other.0.iter().copied());
    }

    pub fn contains(&self, from: usize, to: usize) -> bool {
        self.0.contains(&(from, to))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum ScheduleMode {
    Static(EdgeSet),
    /// Repeats the listed edge sets with the given period; slot `j % period`
    /// is active at outer step `j`.
    Periodic {
        slots: Vec<EdgeSet>,
        period: usize,
    },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GraphSchedule {
    pub mode: ScheduleMode,
    pub node_count: usize,
}

#[derive(Debug, Error, PartialEq)]
pub enum GraphError {
    #[error("agent id {id} out of range 1..={count}")]
    InvalidAgent { id: usize, count: usize },
    #[error("edge ({from},{to}) is invalid for {count} nodes (self-loops forbidden)")]
    InvalidEdge {
        from: usize,
        to: usize,
        count: usize,
    },
    #[error("periodic schedule must declare at least one slot")]
    EmptySchedule,
    #[error("periodic schedule period {period} does not match {slots} slots")]
    PeriodMismatch { period: usize, slots: usize },
}

impl GraphSchedule {
    pub fn static_graph(node_count: usize, edges: EdgeSet) -> Result<Self, GraphError> {
        let s = GraphSchedule {
            mode: ScheduleMode::Static(edges),
            node_count,
        };
        s.validate()?;
        Ok(s)
    }

    pub fn periodic(node_count: usize, slots: Vec<EdgeSet>) -> Result<Self, GraphError> {
        let period = slots.len();
        let s = GraphSchedule {
            mode: ScheduleMode::Periodic { slots, period },
            node_count,
        };
        s.validate()?;
        Ok(s)
    }

    /// A directed ring `1 -> 2 -> ... -> n -> 1`.
    pub fn ring(node_count: usize) -> Self {
        let mut edges = BTreeSet::new();
        for i in 1..=node_count {
            edges.insert((i, i % node_count + 1));
        }
        GraphSchedule {
            mode: ScheduleMode::Static(EdgeSet(edges)),
            node_count,
        }
    }

    /// The complete digraph on `node_count` nodes.
    pub fn complete(node_count: usize) -> Self {
        let mut edges = BTreeSet::new();
        for a in 1..=node_count {
            for b in 1..=node_count {
                if a != b {
                    edges.insert((a, b));
                }
            }
        }
        GraphSchedule {
            mode: ScheduleMode::Static(EdgeSet(edges)),
            node_count,
        }
    }

    pub fn validate(&self) -> Result<(), GraphError> {
        let check_edges = |edges: &EdgeSet| -> Result<(), GraphError> {
            for &(from, to) in &edges.0 {
                let bad = from == 0
                    || to == 0
                    || from > self.node_count
                    || to > self.node_count
                    || from == to;
                if bad {
                    return Err(GraphError::InvalidEdge {
                        from,
                        to,
                        count: self.node_count,
                    });
                }
            }
            Ok(())
        };
        match &self.mode {
            ScheduleMode::Static(edges) => check_edges(edges),
            ScheduleMode::Periodic { slots, period } => {
                if slots.is_empty() {
                    return Err(GraphError::EmptySchedule);
                }
                if *period != slots.len() {
                    return Err(GraphError::PeriodMismatch {
                        period: *period,
                        slots: slots.len(),
                    });
                }
                slots.iter().try_for_each(check_edges)
            }
        }
    }

    pub fn edges_at(&self, j: usize) -> &EdgeSet {
        match &self.mode {
            ScheduleMode::Static(edges) => edges,
            ScheduleMode::Periodic { slots, period } => &slots[j % period],
        }
    }
}

/// In-neighbors of agent `i` at outer step `j`.
pub fn neighbors(sched: &GraphSchedule, i: usize, j: usize) -> Result<BTreeSet<usize>, GraphError> {
    if i == 0 || i > sched.node_count {
        return Err(GraphError::InvalidAgent {
            id: i,
            count: sched.node_count,
        });
    }
    Ok(sched
        .edges_at(j)
        .0
        .iter()
        .filter(|(_, to)| *to == i)
        .map(|(from, _)| *from)
        .collect())
}

/// Union of the edge sets active over `[j, j + window - 1]`.
pub fn union_graph(sched: &GraphSchedule, j: usize, window: usize) -> EdgeSet {
    let mut out = EdgeSet::default();
    for s in j..j + window {
        out.union_with(sched.edges_at(s));
    }
    out
}

/// True when some root reaches every node along directed edges.
pub fn has_spanning_tree(edges: &EdgeSet, node_count: usize) -> bool {
    if node_count == 0 {
        return false;
    }
    let mut adj = vec![Vec::new(); node_count + 1];
    for &(from, to) in &edges.0 {
        adj[from].push(to);
    }
    'roots: for root in 1..=node_count {
        let mut seen = vec![false; node_count + 1];
        let mut stack = vec![root];
        seen[root] = true;
        let mut count = 1;
        while let Some(v) = stack.pop() {
            for &w in &adj[v] {
                if !seen[w] {
                    seen[w] = true;
                    count += 1;
                    stack.push(w);
                }
            }
        }
        if count == node_count {
            return true;
        }
        continue 'roots;
    }
    false
}

/// Checks every window start in `[0, horizon]`; periodic schedules only
/// need one period of starts since the union repeats.
pub fn check_joint_connectivity(sched: &GraphSchedule, window: usize, horizon: usize) -> bool {
    let max_start = match &sched.mode {
        ScheduleMode::Static(_) => 0,
        ScheduleMode::Periodic { period, .. } => horizon.min(period.saturating_sub(1)),
    };
    (0..=max_start).all(|j| has_spanning_tree(&union_graph(sched, j, window), sched.node_count))
}
