//! Route selection as an episodic decision problem over graph snapshots.
//!
//! An agent sits on a node, observes the transmissivities of its links and
//! the destination, and picks the next hop. Reaching the destination pays
//! the path's weakest transmissivity; every other hop costs a penalty that
//! grows as the link gets worse.

mod agent;
mod baseline;
mod env;
mod qnet;
mod replay;
#[cfg(test)]
pub(crate) mod testing;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::topology::GraphSnapshot;

pub use agent::{
    converged, find_path, greedy_action, select_action, train, train_step, PairSampling, RoutingModel, TrainConfig, Training,
    CONVERGENCE_DELTA, CONVERGENCE_WINDOW,
};
pub use baseline::{brute_force_optimal_path, enumerate_paths, shortest_path_baseline, ScoredPath};
pub use env::{
    encode_state, hop_allowed, neighbor_slots, reward, routable_pairs, valid_actions, Episode, Outcome, StateVector, Transition,
    DEAD_END_PENALTY,
};
pub use qnet::{Adam, Gradients, NetworkParameters, QNetwork, HIDDEN_LAYERS};
pub use replay::{Experience, ReplayBuffer};

/// Node ids from source to destination.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(transparent)]
pub struct RoutePath(Vec<usize>);

impl RoutePath {
    pub fn new(nodes: Vec<usize>) -> Self {
        RoutePath(nodes)
    }

    pub fn nodes(&self) -> &[usize] {
        &self.0
    }

    pub fn hops(&self) -> usize {
        self.0.len().saturating_sub(1)
    }

    pub fn source(&self) -> Option<usize> {
        self.0.first().copied()
    }

    pub fn destination(&self) -> Option<usize> {
        self.0.last().copied()
    }

    /// Transmissivity of each hop in order.
    pub fn etas(&self, snapshot: &GraphSnapshot) -> Result<Vec<f64>> {
        self.0
            .windows(2)
            .map(|w| {
                snapshot
                    .eta(w[0], w[1])
                    .map(|e| e.value())
                    .ok_or_else(|| Error::PlanMismatch(format!("no link {}-{}", w[0], w[1])))
            })
            .collect()
    }

    /// The weakest hop.
    pub fn min_eta(&self, snapshot: &GraphSnapshot) -> Result<f64> {
        Ok(self.etas(snapshot)?.into_iter().fold(f64::INFINITY, f64::min))
    }

    /// Checks that hops are links, no node repeats and Ground nodes only hand
    /// over to a Ground destination.
    pub fn validate(&self, snapshot: &GraphSnapshot) -> Result<()> {
        let invalid = |msg: String| Err(Error::domain(format!("invalid route {:?}: {msg}", self.0)));
        if self.0.len() < 2 {
            return invalid("fewer than two nodes".into());
        }
        for &id in &self.0 {
            snapshot.node(id)?;
        }
        let mut seen = vec![false; snapshot.node_count()];
        for &id in &self.0 {
            if std::mem::replace(&mut seen[id], true) {
                return invalid(format!("node {id} repeats"));
            }
        }
        let dest = *self.0.last().expect("checked length");
        for w in self.0.windows(2) {
            if snapshot.edge(w[0], w[1]).is_none() {
                return invalid(format!("no link {}-{}", w[0], w[1]));
            }
            if !hop_allowed(snapshot, w[0], w[1], dest) {
                return invalid(format!("ground hop {}-{}", w[0], w[1]));
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RouteFailure {
    /// No enabled action remained before the destination.
    DeadEnd,
    /// The hop budget ran out.
    HopLimit,
    /// No feasible path exists.
    Unreachable,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Route {
    Found(RoutePath),
    Failed(RouteFailure),
}

impl Route {
    pub fn path(&self) -> Option<&RoutePath> {
        match self {
            Route::Found(p) => Some(p),
            Route::Failed(_) => None,
        }
    }
}
