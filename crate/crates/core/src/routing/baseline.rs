//! Non-learning route finders: distance-shortest paths and the exhaustive
//! return-maximizing oracle.

use std::cmp::{Ordering, Reverse};
use std::collections::BinaryHeap;

use super::env::{hop_allowed, reward, Outcome};
use super::{Route, RouteFailure, RoutePath};
use crate::error::{Error, Result};
use crate::topology::GraphSnapshot;

#[derive(Debug, Clone, Copy, PartialEq)]
struct Dist(f64);

impl Eq for Dist {}

impl PartialOrd for Dist {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

impl Ord for Dist {
    fn cmp(&self, other: &Self) -> Ordering {
        self.0.total_cmp(&other.0)
    }
}

fn check_pair(snapshot: &GraphSnapshot, src: usize, dst: usize) -> Result<()> {
    snapshot.node(src)?;
    snapshot.node(dst)?;
    if src == dst {
        return Err(Error::domain("source equals destination"));
    }
    Ok(())
}

/// Dijkstra over link lengths in meters. Ground nodes only hand over to
/// another Ground node when it is the destination, so every result can be
/// executed by the distribution policies.
pub fn shortest_path_baseline(snapshot: &GraphSnapshot, src: usize, dst: usize) -> Result<Route> {
    check_pair(snapshot, src, dst)?;
    let n = snapshot.node_count();
    let mut dist = vec![f64::INFINITY; n];
    let mut prev = vec![usize::MAX; n];
    let mut heap = BinaryHeap::new();
    dist[src] = 0.0;
    heap.push(Reverse((Dist(0.0), src)));
    while let Some(Reverse((Dist(d), u))) = heap.pop() {
        if d > dist[u] {
            continue;
        }
        if u == dst {
            break;
        }
        for (v, edge) in snapshot.neighbors(u) {
            if !hop_allowed(snapshot, u, v, dst) {
                continue;
            }
            let nd = d + edge.length_m;
            if nd < dist[v] {
                dist[v] = nd;
                prev[v] = u;
                heap.push(Reverse((Dist(nd), v)));
            }
        }
    }
    if !dist[dst].is_finite() {
        return Ok(Route::Failed(RouteFailure::Unreachable));
    }
    let mut path = vec![dst];
    while *path.last().expect("non-empty") != src {
        path.push(prev[*path.last().expect("non-empty")]);
    }
    path.reverse();
    Ok(Route::Found(RoutePath::new(path)))
}

/// A feasible path with the episode return the environment would pay for it.
#[derive(Debug, Clone, PartialEq)]
pub struct ScoredPath {
    pub path: RoutePath,
    pub episode_return: f64,
}

/// Every simple path from `src` to `dst` of at most `max_hops` hops (the
/// node count by default) that respects the Ground hand-over rule, in
/// depth-first order over ascending neighbor ids.
pub fn enumerate_paths(snapshot: &GraphSnapshot, src: usize, dst: usize, max_hops: Option<usize>) -> Result<Vec<ScoredPath>> {
    check_pair(snapshot, src, dst)?;
    let max_hops = max_hops.unwrap_or(snapshot.node_count());
    let mut out = Vec::new();
    let mut path = vec![src];
    let mut etas = Vec::new();
    let mut on_path = vec![false; snapshot.node_count()];
    on_path[src] = true;
    walk(snapshot, dst, max_hops, &mut path, &mut etas, &mut on_path, 0.0, &mut out);
    Ok(out)
}

#[allow(clippy::too_many_arguments)]
fn walk(
    snapshot: &GraphSnapshot,
    dst: usize,
    max_hops: usize,
    path: &mut Vec<usize>,
    etas: &mut Vec<f64>,
    on_path: &mut [bool],
    penalties: f64,
    out: &mut Vec<ScoredPath>,
) {
    let u = *path.last().expect("non-empty");
    if path.len() > max_hops {
        return;
    }
    let next: Vec<(usize, f64)> = snapshot
        .neighbors(u)
        .filter(|&(v, _)| !on_path[v] && hop_allowed(snapshot, u, v, dst))
        .map(|(v, e)| (v, e.eta.value()))
        .collect();
    for (v, eta) in next {
        path.push(v);
        etas.push(eta);
        if v == dst {
            out.push(ScoredPath {
                path: RoutePath::new(path.clone()),
                episode_return: penalties + reward(Outcome::Reached(etas)),
            });
        } else {
            on_path[v] = true;
            walk(snapshot, dst, max_hops, path, etas, on_path, penalties + reward(Outcome::Stepped(eta)), out);
            on_path[v] = false;
        }
        path.pop();
        etas.pop();
    }
}

/// The feasible path with the highest episode return; ties go to fewer hops,
/// then to the lexicographically smallest node sequence.
pub fn brute_force_optimal_path(snapshot: &GraphSnapshot, src: usize, dst: usize, max_hops: Option<usize>) -> Result<Option<ScoredPath>> {
    Ok(enumerate_paths(snapshot, src, dst, max_hops)?.into_iter().min_by(|a, b| {
        b.episode_return
            .total_cmp(&a.episode_return)
            .then(a.path.hops().cmp(&b.path.hops()))
            .then(a.path.nodes().cmp(b.path.nodes()))
    }))
}
