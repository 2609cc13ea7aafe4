//! Task conflict graph and time-slot assignment.
//!
//! Two tasks conflict when some device is interested in both. Conflicting
//! tasks must run in different slots so that every device can serve all of
//! its tasks one at a time. Slots are assigned by the stack heuristic: peel
//! off vertices of degree below `kappa` onto a stack, then pop them back and
//! give each the lowest slot unused by its already-placed neighbours.

use alloc::collections::BTreeSet;
use alloc::vec::Vec;

use thiserror::Error;

use crate::market::{Scenario, TaskId};

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum GraphError {
    #[error(
        "conflict graph cannot be reduced with kappa={kappa}: {remaining} tasks each have at least \
         {kappa} conflicts; suggested kappa={suggested_kappa}"
    )]
    GraphNotReducible {
        kappa: usize,
        remaining: usize,
        suggested_kappa: usize,
    },
    #[error("kappa must be at least 1")]
    InvalidKappa,
    #[error("invalid edge ({0}, {1})")]
    InvalidEdge(usize, usize),
}

/// Undirected simple graph over tasks `0..n`.
#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct ConflictGraph {
    adjacency: Vec<BTreeSet<usize>>,
}

impl ConflictGraph {
    /// Edgeless graph on `n` vertices.
    pub fn new(n: usize) -> Self {
        Self {
            adjacency: alloc::vec![BTreeSet::new(); n],
        }
    }

    pub fn from_edges<I>(n: usize, edges: I) -> Result<Self, GraphError>
    where
        I: IntoIterator<Item = (usize, usize)>,
    {
        let mut g = Self::new(n);
        for (a, b) in edges {
            g.add_edge(a, b)?;
        }
        Ok(g)
    }

    pub fn add_edge(&mut self, a: usize, b: usize) -> Result<(), GraphError> {
        let n = self.adjacency.len();
        if a == b || a >= n || b >= n {
            return Err(GraphError::InvalidEdge(a, b));
        }
        self.adjacency[a].insert(b);
        self.adjacency[b].insert(a);
        Ok(())
    }

    pub fn num_vertices(&self) -> usize {
        self.adjacency.len()
    }

    pub fn num_edges(&self) -> usize {
        self.adjacency.iter().map(BTreeSet::len).sum::<usize>() / 2
    }

    pub fn has_edge(&self, a: TaskId, b: TaskId) -> bool {
        self.adjacency
            .get(a.0)
            .is_some_and(|nbrs| nbrs.contains(&b.0))
    }

    pub fn neighbors(&self, task: TaskId) -> impl Iterator<Item = TaskId> + '_ {
        self.adjacency[task.0].iter().map(|&j| TaskId(j))
    }

    pub fn degree(&self, task: TaskId) -> usize {
        self.adjacency[task.0].len()
    }

    /// Edges `(i, j)` with `i < j`, lexicographically ordered.
    pub fn edges(&self) -> impl Iterator<Item = (TaskId, TaskId)> + '_ {
        self.adjacency.iter().enumerate().flat_map(|(i, nbrs)| {
            nbrs.range(i + 1..).map(move |&j| (TaskId(i), TaskId(j)))
        })
    }

    pub fn max_degree(&self) -> usize {
        self.adjacency.iter().map(BTreeSet::len).max().unwrap_or(0)
    }

    /// `max_degree + 1`, which the heuristic always satisfies.
    pub fn default_kappa(&self) -> usize {
        self.max_degree() + 1
    }

    /// Smallest `d` such that every subgraph has a vertex of degree `<= d`.
    ///
    /// Computed by repeatedly deleting a minimum-degree vertex, independently
    /// of [`allocate_time_slots`].
    pub fn degeneracy(&self) -> usize {
        let n = self.adjacency.len();
        let mut degree: Vec<usize> = self.adjacency.iter().map(BTreeSet::len).collect();
        let mut removed = alloc::vec![false; n];
        let mut best = 0;
        for _ in 0..n {
            let v = (0..n)
                .filter(|&v| !removed[v])
                .min_by_key(|&v| degree[v])
                .expect("vertex left");
            best = best.max(degree[v]);
            removed[v] = true;
            for &u in &self.adjacency[v] {
                if !removed[u] {
                    degree[u] -= 1;
                }
            }
        }
        best
    }
}

/// Edge `(i, j)` iff some device is interested in both tasks.
pub fn build_conflict_graph(scenario: &Scenario) -> ConflictGraph {
    let mut g = ConflictGraph::new(scenario.num_tasks());
    for device in scenario.devices() {
        let interests: Vec<usize> = device.interests().map(|t| t.0).collect();
        for (i, &a) in interests.iter().enumerate() {
            for &b in &interests[i + 1..] {
                g.adjacency[a].insert(b);
                g.adjacency[b].insert(a);
            }
        }
    }
    g
}

/// Slot per task, numbered from 1.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SlotAssignment {
    slots: Vec<usize>,
    kappa: usize,
}

impl SlotAssignment {
    /// Builds an assignment from raw slot numbers without checking it.
    pub fn from_slots(slots: Vec<usize>, kappa: usize) -> Self {
        Self { slots, kappa }
    }

    pub fn slot(&self, task: TaskId) -> Option<usize> {
        self.slots.get(task.0).copied()
    }

    pub fn kappa(&self) -> usize {
        self.kappa
    }

    pub fn len(&self) -> usize {
        self.slots.len()
    }

    pub fn is_empty(&self) -> bool {
        self.slots.is_empty()
    }

    pub fn max_slot(&self) -> usize {
        self.slots.iter().copied().max().unwrap_or(0)
    }

    pub fn tasks_in_slot(&self, slot: usize) -> impl Iterator<Item = TaskId> + '_ {
        self.slots
            .iter()
            .enumerate()
            .filter(move |(_, &s)| s == slot)
            .map(|(i, _)| TaskId(i))
    }

    /// Tasks ordered by slot, then by id.
    pub fn processing_order(&self) -> Vec<TaskId> {
        let mut order: Vec<TaskId> = (0..self.slots.len()).map(TaskId).collect();
        order.sort_by_key(|t| (self.slots[t.0], t.0));
        order
    }
}

/// Assigns slots `1..=kappa` with the two-phase stack heuristic.
///
/// Phase one always removes the lowest-id vertex whose remaining degree is
/// below `kappa`. Fails when no such vertex exists, i.e. the graph is not
/// `(kappa - 1)`-degenerate.
pub fn allocate_time_slots(graph: &ConflictGraph, kappa: usize) -> Result<SlotAssignment, GraphError> {
    if kappa == 0 {
        return Err(GraphError::InvalidKappa);
    }
    let n = graph.num_vertices();
    let mut degree: Vec<usize> = graph.adjacency.iter().map(BTreeSet::len).collect();
    let mut present = alloc::vec![true; n];
    let mut ready: BTreeSet<usize> = (0..n).filter(|&v| degree[v] < kappa).collect();
    let mut stack = Vec::with_capacity(n);

    while stack.len() < n {
        let Some(v) = ready.pop_first() else {
            return Err(GraphError::GraphNotReducible {
                kappa,
                remaining: n - stack.len(),
                suggested_kappa: graph.degeneracy() + 1,
            });
        };
        stack.push(v);
        present[v] = false;
        for &u in &graph.adjacency[v] {
            if present[u] {
                degree[u] -= 1;
                if degree[u] + 1 == kappa {
                    ready.insert(u);
                }
            }
        }
    }

    let mut slots = alloc::vec![0usize; n];
    let mut taken = Vec::new();
    while let Some(v) = stack.pop() {
        taken.clear();
        taken.extend(graph.adjacency[v].iter().map(|&u| slots[u]).filter(|&s| s != 0));
        taken.sort_unstable();
        taken.dedup();
        let mut slot = 1;
        for &s in &taken {
            if s == slot {
                slot += 1;
            } else if s > slot {
                break;
            }
        }
        debug_assert!(slot <= kappa);
        slots[v] = slot;
    }
    Ok(SlotAssignment { slots, kappa })
}

/// True iff every vertex has a slot in `1..=kappa` and no edge is monochromatic.
pub fn verify_assignment(graph: &ConflictGraph, assignment: &SlotAssignment) -> bool {
    if assignment.slots.len() != graph.num_vertices() {
        return false;
    }
    if assignment.slots.iter().any(|&s| s == 0 || s > assignment.kappa) {
        return false;
    }
    graph
        .edges()
        .all(|(a, b)| assignment.slots[a.0] != assignment.slots[b.0])
}
