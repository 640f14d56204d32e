//! Entanglement distribution along a routed path.
//!
//! The intuitive policy entangles every hop and swaps at every intermediate
//! node. TPED places pair sources off the chain of stored qubits: sources
//! send both halves away, so only repeaters (and at most one hybrid node)
//! hold memory.

use serde::{Deserialize, Serialize};

use crate::channel::Transmissivity;
use crate::error::{Error, Result};
use crate::quantum::{entanglement_fidelity, entanglement_swap, link_pair, DensityMatrix, Fidelity};
use crate::routing::RoutePath;
use crate::topology::{GraphSnapshot, NodeKind};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Policy {
    Tped,
    Intuitive,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Role {
    SourceOfEntanglement,
    Repeater,
    /// Generates a pair toward an adjacent endpoint and also swaps.
    Hybrid,
    EndNode,
}

/// One entangled pair: generated at `generator`, held by `left` and `right`.
/// A half that stays at its generator travels with transmissivity 1.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PairSpec {
    pub generator: usize,
    pub left: usize,
    pub right: usize,
    pub eta_left: f64,
    pub eta_right: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DistributionPlan {
    pub policy: Policy,
    pub path: RoutePath,
    pub roles: Vec<Role>,
    /// Left to right along the path.
    pub pairs: Vec<PairSpec>,
    /// Swapping nodes in execution order.
    pub swaps: Vec<usize>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct DistributionResult {
    pub final_state: DensityMatrix,
    pub fidelity: Fidelity,
    pub pair_count: usize,
    pub swap_count: usize,
    pub memory_units: usize,
}

impl DistributionPlan {
    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("plan serializes")
    }
}

/// Path nodes and hop transmissivities, checked against the snapshot.
fn path_links(path: &RoutePath, snapshot: &GraphSnapshot) -> Result<(Vec<usize>, Vec<f64>)> {
    let nodes = path.nodes().to_vec();
    if nodes.len() < 2 {
        return Err(Error::Planning(format!("path {nodes:?} has fewer than two nodes")));
    }
    for &n in &nodes {
        snapshot.node(n)?;
    }
    let mut sorted = nodes.clone();
    sorted.sort_unstable();
    if sorted.windows(2).any(|w| w[0] == w[1]) {
        return Err(Error::Planning(format!("path {nodes:?} repeats a node")));
    }
    let etas = path.etas(snapshot)?;
    Ok((nodes, etas))
}

/// Pair across one hop, generated at one of its ends.
fn local_pair(generator: usize, left: usize, right: usize, eta: f64) -> PairSpec {
    let (eta_left, eta_right) = if generator == left { (1.0, eta) } else { (eta, 1.0) };
    PairSpec {
        generator,
        left,
        right,
        eta_left,
        eta_right,
    }
}

/// The end of a hop that generates its pair: the non-Ground end, or the left
/// end when both or neither are Ground.
fn hop_generator(snapshot: &GraphSnapshot, left: usize, right: usize) -> usize {
    if snapshot.kind(left) == NodeKind::Ground && snapshot.kind(right) != NodeKind::Ground {
        right
    } else {
        left
    }
}

/// One pair per hop and a swap at every intermediate node.
pub fn plan_intuitive(path: &RoutePath, snapshot: &GraphSnapshot) -> Result<DistributionPlan> {
    let (nodes, etas) = path_links(path, snapshot)?;
    let n = nodes.len();
    let pairs = nodes
        .windows(2)
        .zip(&etas)
        .map(|(w, &eta)| local_pair(hop_generator(snapshot, w[0], w[1]), w[0], w[1], eta))
        .collect();
    let mut roles = vec![Role::Repeater; n];
    roles[0] = Role::EndNode;
    roles[n - 1] = Role::EndNode;
    Ok(DistributionPlan {
        policy: Policy::Intuitive,
        path: path.clone(),
        roles,
        pairs,
        swaps: nodes[1..n - 1].to_vec(),
    })
}

/// Alternating sources and repeaters over path indices `from..=to`, which
/// must span an odd count. Sources sit at `from`, `from + 2`, ...
fn alternate(
    snapshot: &GraphSnapshot,
    nodes: &[usize],
    etas: &[f64],
    from: usize,
    to: usize,
    roles: &mut [Role],
    pairs: &mut Vec<PairSpec>,
) -> Result<()> {
    for i in from..=to {
        if (i - from).is_multiple_of(2) {
            if snapshot.kind(nodes[i]) == NodeKind::Ground {
                return Err(Error::Planning(format!(
                    "alternation puts a source on ground node {} at path position {i} of {nodes:?}",
                    nodes[i]
                )));
            }
            roles[i] = Role::SourceOfEntanglement;
            pairs.push(PairSpec {
                generator: nodes[i],
                left: nodes[i - 1],
                right: nodes[i + 1],
                eta_left: etas[i - 1],
                eta_right: etas[i],
            });
        } else {
            roles[i] = Role::Repeater;
        }
    }
    Ok(())
}

/// Whether the intermediate at path index `h` may act as the hybrid: it can
/// generate pairs, and its path neighbors are one Ground endpoint and one
/// non-Ground node.
fn hybrid_eligible(snapshot: &GraphSnapshot, nodes: &[usize], h: usize) -> bool {
    let last = nodes.len() - 1;
    let (endpoint, inner) = match h {
        1 => (nodes[0], nodes[2]),
        _ if h == last - 1 => (nodes[last], nodes[h - 1]),
        _ => return false,
    };
    snapshot.kind(nodes[h]).can_generate()
        && snapshot.kind(endpoint) == NodeKind::Ground
        && snapshot.kind(inner) != NodeKind::Ground
}

/// Third-party distribution. With an odd number `m` of intermediate nodes,
/// sources and repeaters alternate starting and ending with a source. With an
/// even `m`, one end intermediate becomes the hybrid and the rest alternate.
/// The intermediate next to the destination is preferred as the hybrid,
/// falling back to the one next to the source.
pub fn plan_tped(path: &RoutePath, snapshot: &GraphSnapshot) -> Result<DistributionPlan> {
    let (nodes, etas) = path_links(path, snapshot)?;
    let n = nodes.len();
    for w in nodes.windows(2) {
        if snapshot.kind(w[0]) == NodeKind::Ground && snapshot.kind(w[1]) == NodeKind::Ground && n > 2 {
            return Err(Error::Planning(format!(
                "consecutive ground nodes {} and {} in {nodes:?}",
                w[0], w[1]
            )));
        }
    }
    let m = n - 2;
    let mut roles = vec![Role::EndNode; n];

    if m == 0 {
        let pair = local_pair(hop_generator(snapshot, nodes[0], nodes[1]), nodes[0], nodes[1], etas[0]);
        return Ok(DistributionPlan {
            policy: Policy::Tped,
            path: path.clone(),
            roles,
            pairs: vec![pair],
            swaps: Vec::new(),
        });
    }

    let mut pairs = Vec::new();
    if m % 2 == 1 {
        alternate(snapshot, &nodes, &etas, 1, m, &mut roles, &mut pairs)?;
    } else {
        let mut errors = Vec::new();
        let mut built = None;
        for h in [m, 1] {
            if !hybrid_eligible(snapshot, &nodes, h) {
                errors.push(format!("position {h} is not eligible as hybrid"));
                continue;
            }
            let mut r = roles.clone();
            let mut p = Vec::new();
            let attempt = if h == m {
                alternate(snapshot, &nodes, &etas, 1, m - 1, &mut r, &mut p).map(|_| {
                    p.push(local_pair(nodes[m], nodes[m], nodes[m + 1], etas[m]));
                })
            } else {
                p.push(local_pair(nodes[1], nodes[0], nodes[1], etas[0]));
                alternate(snapshot, &nodes, &etas, 2, m, &mut r, &mut p)
            };
            match attempt {
                Ok(()) => {
                    r[h] = Role::Hybrid;
                    built = Some((r, p));
                    break;
                }
                Err(e) => errors.push(e.to_string()),
            }
        }
        let (r, p) = built.ok_or_else(|| Error::Planning(format!("no valid hybrid for {nodes:?}: {}", errors.join("; "))))?;
        roles = r;
        pairs = p;
        pairs.sort_by_key(|p| nodes.iter().position(|&x| x == p.left));
    }
    let swaps = (1..n - 1)
        .filter(|&i| matches!(roles[i], Role::Repeater | Role::Hybrid))
        .map(|i| nodes[i])
        .collect();
    Ok(DistributionPlan {
        policy: Policy::Tped,
        path: path.clone(),
        roles,
        pairs,
        swaps,
    })
}

/// Qubit halves stored at intermediate nodes at peak: two per Repeater or
/// Hybrid, none per source.
pub fn memory_units(plan: &DistributionPlan) -> usize {
    2 * plan.roles.iter().filter(|r| matches!(r, Role::Repeater | Role::Hybrid)).count()
}

fn check_pair(pair: &PairSpec, snapshot: &GraphSnapshot, policy: Policy) -> Result<()> {
    let mismatch = |msg: String| Err(Error::PlanMismatch(msg));
    let eta = |a: usize, b: usize| {
        snapshot
            .eta(a, b)
            .map(Transmissivity::value)
            .ok_or_else(|| Error::PlanMismatch(format!("no link {a}-{b}")))
    };
    let (expect_left, expect_right) = if pair.generator == pair.left {
        (1.0, eta(pair.left, pair.right)?)
    } else if pair.generator == pair.right {
        (eta(pair.left, pair.right)?, 1.0)
    } else {
        if !snapshot.node(pair.generator)?.kind.can_generate() {
            return mismatch(format!("ground node {} cannot generate pairs", pair.generator));
        }
        (eta(pair.left, pair.generator)?, eta(pair.generator, pair.right)?)
    };
    if pair.generator == pair.left || pair.generator == pair.right {
        let ground = snapshot.node(pair.generator)?.kind == NodeKind::Ground;
        let other = if pair.generator == pair.left { pair.right } else { pair.left };
        if ground && policy == Policy::Tped && snapshot.kind(other) != NodeKind::Ground {
            return mismatch(format!("ground node {} generates a TPED pair", pair.generator));
        }
    }
    if pair.eta_left != expect_left || pair.eta_right != expect_right {
        return mismatch(format!(
            "pair {}-{} via {} expects transmissivities ({expect_left}, {expect_right}), plan has ({}, {})",
            pair.left, pair.generator, pair.right, pair.eta_left, pair.eta_right
        ));
    }
    Ok(())
}

/// Builds every pair, then swaps in plan order.
pub fn execute(plan: &DistributionPlan, snapshot: &GraphSnapshot) -> Result<DistributionResult> {
    let nodes = plan.path.nodes();
    if plan.roles.len() != nodes.len() {
        return Err(Error::PlanMismatch("one role per path node required".into()));
    }
    let mut segments: Vec<(usize, usize, DensityMatrix)> = Vec::with_capacity(plan.pairs.len());
    for pair in &plan.pairs {
        check_pair(pair, snapshot, plan.policy)?;
        let state = link_pair(Transmissivity::new(pair.eta_left)?, Transmissivity::new(pair.eta_right)?);
        segments.push((pair.left, pair.right, state));
    }
    for &x in &plan.swaps {
        let i = segments
            .windows(2)
            .position(|w| w[0].1 == x && w[1].0 == x)
            .ok_or_else(|| Error::PlanMismatch(format!("node {x} does not join two pairs")))?;
        let (right_seg, left_seg) = (segments.remove(i + 1), segments.remove(i));
        let merged = entanglement_swap(&left_seg.2, &right_seg.2)?;
        segments.insert(i, (left_seg.0, right_seg.1, merged));
    }
    let (src, dst) = (nodes[0], nodes[nodes.len() - 1]);
    let [(a, b, final_state)] = <[_; 1]>::try_from(segments)
        .map_err(|left| Error::PlanMismatch(format!("{} pairs remain after swapping", left.len())))?;
    if (a, b) != (src, dst) {
        return Err(Error::PlanMismatch(format!("final pair joins {a}-{b}, not {src}-{dst}")));
    }
    Ok(DistributionResult {
        fidelity: entanglement_fidelity(&final_state)?,
        final_state,
        pair_count: plan.pairs.len(),
        swap_count: plan.swaps.len(),
        memory_units: memory_units(plan),
    })
}
