//! The routing environment: state encoding, action masks and rewards.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::topology::{GraphSnapshot, NodeKind};

/// Extra reward charged when an episode reaches a node with no valid action.
pub const DEAD_END_PENALTY: f64 = -1.0;

/// Observation of the agent at one node.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StateVector {
    /// Transmissivities to neighbors in ascending id order, zero-padded.
    pub neighbor_etas: Vec<f64>,
    /// One-hot destination marker over all node ids.
    pub dest_encoding: Vec<f64>,
}

impl StateVector {
    pub fn len(&self) -> usize {
        self.neighbor_etas.len() + self.dest_encoding.len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// Network input: neighbor slots followed by the destination one-hot.
    pub fn features(&self) -> impl Iterator<Item = f64> + '_ {
        self.neighbor_etas.iter().chain(&self.dest_encoding).copied()
    }
}

fn check_node(snapshot: &GraphSnapshot, id: usize) -> Result<()> {
    snapshot.node(id).map(|_| ())
}

/// Neighbor ids of `node` by slot. Errors if the degree exceeds `max_degree`.
pub fn neighbor_slots(snapshot: &GraphSnapshot, node: usize, max_degree: usize) -> Result<Vec<usize>> {
    check_node(snapshot, node)?;
    let slots: Vec<usize> = snapshot.neighbors(node).map(|(n, _)| n).collect();
    if slots.len() > max_degree {
        return Err(Error::Dimension {
            expected: max_degree,
            got: slots.len(),
        });
    }
    Ok(slots)
}

pub fn encode_state(snapshot: &GraphSnapshot, node: usize, dest: usize, max_degree: usize) -> Result<StateVector> {
    check_node(snapshot, dest)?;
    let slots = neighbor_slots(snapshot, node, max_degree)?;
    let mut neighbor_etas = vec![0.0; max_degree];
    for (slot, &n) in slots.iter().enumerate() {
        neighbor_etas[slot] = snapshot.eta(node, n).map_or(0.0, |e| e.value());
    }
    let mut dest_encoding = vec![0.0; snapshot.node_count()];
    dest_encoding[dest] = 1.0;
    Ok(StateVector {
        neighbor_etas,
        dest_encoding,
    })
}

/// Whether stepping from `from` to its neighbor `to` is allowed: a Ground
/// node may only hand over to another Ground node if that node is the
/// destination.
pub fn hop_allowed(snapshot: &GraphSnapshot, from: usize, to: usize, dest: usize) -> bool {
    !(snapshot.kind(from) == NodeKind::Ground && snapshot.kind(to) == NodeKind::Ground && to != dest)
}

/// Ordered Ground pairs `(src, dst)` joined by at least one path that obeys
/// the Ground hand-over rule, in ascending order.
pub fn routable_pairs(snapshot: &GraphSnapshot) -> Vec<(usize, usize)> {
    let grounds = snapshot.ground_nodes();
    let mut pairs = Vec::new();
    let mut seen = vec![false; snapshot.node_count()];
    let mut queue = std::collections::VecDeque::new();
    for &src in &grounds {
        for &dst in &grounds {
            if src == dst {
                continue;
            }
            seen.iter_mut().for_each(|s| *s = false);
            seen[src] = true;
            queue.clear();
            queue.push_back(src);
            while let Some(u) = queue.pop_front() {
                for (v, _) in snapshot.neighbors(u) {
                    if !seen[v] && hop_allowed(snapshot, u, v, dst) {
                        seen[v] = true;
                        if v != dst {
                            queue.push_back(v);
                        }
                    }
                }
            }
            if seen[dst] {
                pairs.push((src, dst));
            }
        }
    }
    pairs
}

/// Mask over neighbor slots. `visited` is only passed at inference time.
pub fn valid_actions(
    snapshot: &GraphSnapshot,
    node: usize,
    dest: usize,
    visited: Option<&[bool]>,
    max_degree: usize,
) -> Result<Vec<bool>> {
    check_node(snapshot, dest)?;
    let slots = neighbor_slots(snapshot, node, max_degree)?;
    let mut mask = vec![false; max_degree];
    for (slot, &n) in slots.iter().enumerate() {
        let seen = visited.is_some_and(|v| v[n]);
        mask[slot] = !seen && hop_allowed(snapshot, node, n, dest);
    }
    Ok(mask)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Outcome<'a> {
    /// The destination was reached; transmissivities of every hop on the path.
    Reached(&'a [f64]),
    /// An intermediate hop over a link with this transmissivity.
    Stepped(f64),
}

pub fn reward(outcome: Outcome<'_>) -> f64 {
    match outcome {
        Outcome::Reached(etas) => etas.iter().copied().fold(f64::INFINITY, f64::min),
        Outcome::Stepped(eta) if eta <= 0.1 => -1.0,
        Outcome::Stepped(eta) => -1.0 / (10.0 * eta),
    }
}

/// Result of one environment step.
#[derive(Debug, Clone, PartialEq)]
pub struct Transition {
    pub next: usize,
    pub reward: f64,
    pub terminal: bool,
    pub reached: bool,
    pub dead_end: bool,
}

/// A single routing episode over a fixed snapshot.
#[derive(Debug, Clone)]
pub struct Episode<'a> {
    snapshot: &'a GraphSnapshot,
    dest: usize,
    max_degree: usize,
    mask_visited: bool,
    path: Vec<usize>,
    etas: Vec<f64>,
    visited: Vec<bool>,
    total: f64,
    done: bool,
}

impl<'a> Episode<'a> {
    /// Starts at `src`. With `mask_visited` the action mask also excludes
    /// nodes already on the path.
    pub fn new(snapshot: &'a GraphSnapshot, src: usize, dest: usize, max_degree: usize, mask_visited: bool) -> Result<Self> {
        check_node(snapshot, src)?;
        check_node(snapshot, dest)?;
        if src == dest {
            return Err(Error::domain("source equals destination"));
        }
        let mut visited = vec![false; snapshot.node_count()];
        visited[src] = true;
        Ok(Episode {
            snapshot,
            dest,
            max_degree,
            mask_visited,
            path: vec![src],
            etas: Vec::new(),
            visited,
            total: 0.0,
            done: false,
        })
    }

    pub fn current(&self) -> usize {
        *self.path.last().expect("path starts non-empty")
    }

    pub fn path(&self) -> &[usize] {
        &self.path
    }

    pub fn hops(&self) -> usize {
        self.path.len() - 1
    }

    /// Sum of rewards so far.
    pub fn total_return(&self) -> f64 {
        self.total
    }

    pub fn is_done(&self) -> bool {
        self.done
    }

    pub fn state(&self) -> Result<StateVector> {
        encode_state(self.snapshot, self.current(), self.dest, self.max_degree)
    }

    pub fn mask(&self) -> Result<Vec<bool>> {
        let visited = self.mask_visited.then_some(self.visited.as_slice());
        valid_actions(self.snapshot, self.current(), self.dest, visited, self.max_degree)
    }

    /// Moves along neighbor slot `action`, which must be enabled.
    pub fn step(&mut self, action: usize) -> Result<Transition> {
        if self.done {
            return Err(Error::domain("episode already finished"));
        }
        let mask = self.mask()?;
        if !mask.get(action).copied().unwrap_or(false) {
            return Err(Error::domain(format!("action slot {action} is not enabled")));
        }
        let here = self.current();
        let next = neighbor_slots(self.snapshot, here, self.max_degree)?[action];
        let eta = self.snapshot.eta(here, next).expect("slot neighbor has an edge").value();
        self.path.push(next);
        self.etas.push(eta);
        self.visited[next] = true;

        let mut t = Transition {
            next,
            reward: 0.0,
            terminal: false,
            reached: false,
            dead_end: false,
        };
        if next == self.dest {
            t.reward = reward(Outcome::Reached(&self.etas));
            t.terminal = true;
            t.reached = true;
        } else {
            t.reward = reward(Outcome::Stepped(eta));
            if !self.mask()?.contains(&true) {
                t.reward += DEAD_END_PENALTY;
                t.terminal = true;
                t.dead_end = true;
            }
        }
        self.total += t.reward;
        self.done = t.terminal;
        Ok(t)
    }

    /// Slot of neighbor `node` from the current position, if adjacent.
    pub fn slot_of(&self, node: usize) -> Result<Option<usize>> {
        Ok(neighbor_slots(self.snapshot, self.current(), self.max_degree)?
            .iter()
            .position(|&n| n == node))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::routing::testing::{graph, G, H, S};

    #[test]
    fn isolated_node_encodes_zeros() {
        let g = graph(&[G, G], &[]);
        let s = encode_state(&g, 0, 1, 3).unwrap();
        assert_eq!(s.neighbor_etas, vec![0.0; 3]);
        assert_eq!(s.dest_encoding, vec![0.0, 1.0]);
    }

    #[test]
    fn slots_follow_neighbor_ids() {
        let kinds = [S; 8];
        let g = graph(&kinds, &[(0, 7, 0.95), (0, 3, 0.8)]);
        let s = encode_state(&g, 0, 5, 4).unwrap();
        assert_eq!(s.neighbor_etas, vec![0.8, 0.95, 0.0, 0.0]);
        let g2 = graph(&kinds, &[(3, 0, 0.8), (7, 0, 0.95)]);
        assert_eq!(encode_state(&g2, 0, 5, 4).unwrap(), s);
        assert_eq!(s.dest_encoding.iter().sum::<f64>(), 1.0);
        assert_eq!(s.dest_encoding[5], 1.0);
    }

    #[test]
    fn unknown_ids_and_overflowing_degree_fail() {
        let g = graph(&[S, S, S], &[(0, 1, 0.9), (0, 2, 0.9)]);
        assert!(matches!(encode_state(&g, 9, 1, 2), Err(Error::UnknownNode(9))));
        assert!(matches!(encode_state(&g, 0, 9, 2), Err(Error::UnknownNode(9))));
        assert!(matches!(encode_state(&g, 0, 1, 1), Err(Error::Dimension { .. })));
    }

    #[test]
    fn ground_dead_end_mask() {
        let g = graph(&[G, G, G, G], &[(0, 1, 0.9), (0, 2, 0.9)]);
        assert_eq!(valid_actions(&g, 0, 3, None, 3).unwrap(), vec![false; 3]);
    }

    #[test]
    fn ground_destination_is_reachable_from_ground() {
        let g = graph(&[G, G, G], &[(0, 1, 0.9), (0, 2, 0.9)]);
        assert_eq!(valid_actions(&g, 0, 2, None, 2).unwrap(), vec![false, true]);
    }

    #[test]
    fn non_ground_node_enables_unvisited_neighbors() {
        let g = graph(&[G, S, G, H], &[(1, 0, 0.9), (1, 2, 0.9), (1, 3, 0.9)]);
        assert_eq!(valid_actions(&g, 1, 2, None, 4).unwrap(), vec![true, true, true, false]);
        let visited = [true, false, false, false];
        assert_eq!(valid_actions(&g, 1, 2, Some(&visited), 4).unwrap(), vec![false, true, true, false]);
    }

    #[test]
    fn routable_pairs_respect_the_ground_rule() {
        // 0(g)-1(g)-2(g) chain plus 2-3(sat)-4(g). 4-3-2-1 is legal because
        // 2 hands over to the destination; 1-2-3-4 is not.
        let g = graph(&[G, G, G, S, G], &[(0, 1, 0.9), (1, 2, 0.9), (2, 3, 0.9), (3, 4, 0.9)]);
        assert_eq!(
            routable_pairs(&g),
            vec![(0, 1), (1, 0), (1, 2), (2, 1), (2, 4), (4, 1), (4, 2)]
        );
    }

    #[test]
    fn reward_cases() {
        assert_eq!(reward(Outcome::Reached(&[0.9, 0.8, 0.95])), 0.8);
        assert_eq!(reward(Outcome::Stepped(1.0)), -0.1);
        assert_eq!(reward(Outcome::Stepped(0.05)), -1.0);
        assert_eq!(reward(Outcome::Stepped(0.1)), -1.0);
        assert!((reward(Outcome::Stepped(0.5)) + 0.2).abs() < 1e-15);
    }

    #[test]
    fn episode_accumulates_rewards_and_flags_dead_ends() {
        // 0(g) - 1(sat) - 2(g) ; 1 - 3(g, dest)
        let g = graph(&[G, S, G, G], &[(0, 1, 0.8), (1, 2, 0.5), (1, 3, 0.9)]);
        let mut ep = Episode::new(&g, 0, 3, 3, false).unwrap();
        let t = ep.step(0).unwrap();
        assert_eq!(t.next, 1);
        assert!(!t.terminal);
        assert_eq!(t.reward, -1.0 / 8.0);
        let t = ep.step(2).unwrap();
        assert!(t.reached && t.terminal);
        assert_eq!(t.reward, 0.8);
        assert_eq!(ep.total_return(), -1.0 / 8.0 + 0.8);
        assert!(ep.step(0).is_err());

        // Without visited masking node 2 can always step back to the satellite.
        let g = graph(&[G, S, G, G], &[(0, 1, 0.8), (1, 2, 0.5)]);
        let mut ep = Episode::new(&g, 0, 3, 2, false).unwrap();
        ep.step(0).unwrap();
        assert!(!ep.step(1).unwrap().dead_end);

        // With it, node 2's remaining neighbor is a Ground non-destination.
        let g = graph(&[G, S, G, G, G], &[(0, 1, 0.8), (1, 2, 0.5), (2, 4, 0.9)]);
        let mut ep = Episode::new(&g, 0, 3, 2, true).unwrap();
        ep.step(0).unwrap();
        let t = ep.step(1).unwrap();
        assert!(t.dead_end && t.terminal);
        assert_eq!(t.reward, -0.2 + DEAD_END_PENALTY);
    }

    #[test]
    fn disabled_actions_are_rejected() {
        let g = graph(&[G, G, G], &[(0, 1, 0.9)]);
        let mut ep = Episode::new(&g, 0, 2, 2, false).unwrap();
        assert!(ep.step(0).is_err());
        assert!(ep.step(1).is_err());
        assert!(Episode::new(&g, 1, 1, 2, false).is_err());
    }
}
