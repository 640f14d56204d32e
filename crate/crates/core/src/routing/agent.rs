//! DQN training and greedy inference.

use std::path::Path;

use nalgebra::DMatrix;
use rand::seq::IndexedRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::env::{routable_pairs, Episode, StateVector};
use super::qnet::{Adam, NetworkParameters, QNetwork};
use super::replay::{Experience, ReplayBuffer};
use super::{Route, RouteFailure, RoutePath};
use crate::error::{Error, Result};
use crate::topology::{GraphSnapshot, NodeKind};

/// Loss change below which consecutive episodes count as settled.
pub const CONVERGENCE_DELTA: f64 = 5e-4;
/// Number of consecutive settled loss pairs required for convergence.
pub const CONVERGENCE_WINDOW: usize = 50;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct TrainConfig {
    pub learning_rate: f64,
    pub discount: f64,
    pub epsilon_start: f64,
    pub epsilon_end: f64,
    pub epsilon_decay: f64,
    /// Outer episodes; each one advances to the next snapshot.
    pub episodes: usize,
    /// Inner episodes per outer episode.
    pub mini_episodes: usize,
    pub batch_size: usize,
    pub buffer_capacity: usize,
    /// Gradient steps between target network updates.
    pub target_sync: usize,
    /// Hop limit per episode; the node count when absent.
    pub max_hops: Option<usize>,
    /// Neighbor slots in the state; the largest degree in the training
    /// snapshots when absent.
    pub max_degree: Option<usize>,
    pub pair_sampling: PairSampling,
    pub seed: u64,
}

/// How training episodes pick their endpoints.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PairSampling {
    /// Any two distinct Ground nodes.
    AnyGround,
    /// Ground pairs that have a feasible route in the current snapshot,
    /// falling back to any pair when none exists.
    #[default]
    Routable,
}

impl PairSampling {
    /// Candidate `(src, dst)` pairs in `snapshot`.
    pub fn candidates(self, snapshot: &GraphSnapshot) -> Vec<(usize, usize)> {
        let routable = match self {
            PairSampling::Routable => routable_pairs(snapshot),
            PairSampling::AnyGround => Vec::new(),
        };
        if !routable.is_empty() {
            return routable;
        }
        let grounds = snapshot.ground_nodes();
        let mut all = Vec::with_capacity(grounds.len() * grounds.len());
        for &s in &grounds {
            for &d in &grounds {
                if s != d {
                    all.push((s, d));
                }
            }
        }
        all
    }
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            learning_rate: 0.001,
            discount: 0.99,
            epsilon_start: 1.0,
            epsilon_end: 0.01,
            epsilon_decay: 0.9995,
            episodes: 100,
            mini_episodes: 50,
            batch_size: 64,
            buffer_capacity: 10_000,
            target_sync: 100,
            max_hops: None,
            max_degree: None,
            pair_sampling: PairSampling::default(),
            seed: 0,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |msg: &str| Err(Error::Config(msg.to_string()));
        if !(self.learning_rate > 0.0 && self.learning_rate.is_finite()) {
            return bad("learning_rate must be positive");
        }
        if !(self.discount > 0.0 && self.discount < 1.0) {
            return bad("discount must lie in (0, 1)");
        }
        for eps in [self.epsilon_start, self.epsilon_end] {
            if !(0.0..=1.0).contains(&eps) {
                return bad("epsilon must lie in [0, 1]");
            }
        }
        if !(self.epsilon_decay > 0.0 && self.epsilon_decay <= 1.0) {
            return bad("epsilon_decay must lie in (0, 1]");
        }
        if self.batch_size == 0 || self.buffer_capacity < self.batch_size {
            return bad("batch_size must be positive and no larger than buffer_capacity");
        }
        if self.target_sync == 0 {
            return bad("target_sync must be positive");
        }
        if self.max_hops == Some(0) || self.max_degree == Some(0) {
            return bad("max_hops and max_degree must be positive");
        }
        Ok(())
    }

    /// Exploration rate after `k` inner episodes.
    pub fn epsilon_after(&self, k: usize) -> f64 {
        (self.epsilon_start * self.epsilon_decay.powf(k as f64)).max(self.epsilon_end)
    }
}

/// Index of the largest enabled value, lowest index on ties.
pub fn greedy_action(q: &[f64], mask: &[bool]) -> Option<usize> {
    let mut best: Option<usize> = None;
    for (i, (&v, &on)) in q.iter().zip(mask).enumerate() {
        if on && best.is_none_or(|b| v > q[b]) {
            best = Some(i);
        }
    }
    best
}

/// Epsilon-greedy choice among enabled slots; `None` signals a dead end.
pub fn select_action<R: Rng + ?Sized>(
    net: &QNetwork,
    state: &StateVector,
    epsilon: f64,
    mask: &[bool],
    rng: &mut R,
) -> Result<Option<usize>> {
    let enabled: Vec<usize> = (0..mask.len()).filter(|&i| mask[i]).collect();
    if enabled.is_empty() {
        return Ok(None);
    }
    if epsilon > 0.0 && rng.random::<f64>() < epsilon {
        return Ok(enabled.choose(rng).copied());
    }
    let input: Vec<f64> = state.features().collect();
    let q = net.forward(&input)?;
    Ok(greedy_action(&q, mask))
}

fn state_matrix<'a>(states: impl ExactSizeIterator<Item = &'a StateVector>, rows: usize) -> DMatrix<f64> {
    let cols = states.len();
    let mut data = Vec::with_capacity(rows * cols);
    for s in states {
        data.extend(s.features());
    }
    DMatrix::from_vec(rows, cols, data)
}

/// One gradient step on `batch`; returns the pre-update loss.
pub fn train_step(
    net: &mut QNetwork,
    target: &QNetwork,
    adam: &mut Adam,
    batch: &[&Experience],
    discount: f64,
) -> Result<f64> {
    if batch.is_empty() {
        return Err(Error::domain("empty training batch"));
    }
    let rows = net.input_len();
    if let Some(bad) = batch.iter().find(|e| e.state.len() != rows || e.next_state.len() != rows) {
        return Err(Error::Dimension {
            expected: rows,
            got: bad.state.len(),
        });
    }
    let x = state_matrix(batch.iter().map(|e| &e.state), rows);
    let next = target.forward_batch(&state_matrix(batch.iter().map(|e| &e.next_state), rows));
    let targets: Vec<f64> = batch
        .iter()
        .enumerate()
        .map(|(col, e)| {
            if e.terminal {
                return e.reward;
            }
            let best = e
                .next_mask
                .iter()
                .enumerate()
                .filter(|&(_, &on)| on)
                .map(|(a, _)| next[(a, col)])
                .fold(f64::NEG_INFINITY, f64::max);
            if best.is_finite() {
                e.reward + discount * best
            } else {
                e.reward
            }
        })
        .collect();
    let actions: Vec<usize> = batch.iter().map(|e| e.action).collect();
    let (loss, grads) = net.loss_and_gradients(&x, &actions, &targets)?;
    adam.apply(net, &grads);
    Ok(loss)
}

/// A trained agent together with the shape it was trained for.
#[derive(Debug, Clone, PartialEq)]
pub struct RoutingModel {
    pub net: QNetwork,
    pub max_degree: usize,
    pub node_count: usize,
    pub config: TrainConfig,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
struct ModelFile {
    #[serde(flatten)]
    parameters: NetworkParameters,
    max_degree: usize,
    node_count: usize,
    config: TrainConfig,
}

impl RoutingModel {
    pub fn to_json(&self) -> String {
        let file = ModelFile {
            parameters: NetworkParameters::from(&self.net),
            max_degree: self.max_degree,
            node_count: self.node_count,
            config: self.config.clone(),
        };
        serde_json::to_string(&file).expect("model serializes")
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let file: ModelFile = serde_json::from_str(text).map_err(|e| Error::Config(format!("model JSON: {e}")))?;
        let net = QNetwork::try_from(file.parameters)?;
        if net.input_len() != file.max_degree + file.node_count || net.output_len() != file.max_degree {
            return Err(Error::Config(format!(
                "model layers {:?} do not fit max_degree {} and node_count {}",
                net.layer_sizes(),
                file.max_degree,
                file.node_count
            )));
        }
        Ok(RoutingModel {
            net,
            max_degree: file.max_degree,
            node_count: file.node_count,
            config: file.config,
        })
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        std::fs::write(path, self.to_json()).map_err(|e| Error::io(path, e))
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        RoutingModel::from_json(&text)
    }
}

#[derive(Debug, Clone)]
pub struct Training {
    pub model: RoutingModel,
    /// Mean loss of each outer episode that performed a gradient step.
    pub losses: Vec<f64>,
}

fn check_snapshots(snapshots: &[GraphSnapshot]) -> Result<usize> {
    let first = snapshots.first().ok_or_else(|| Error::Config("no training snapshots".into()))?;
    let n = first.node_count();
    if snapshots.iter().any(|s| s.node_count() != n) {
        return Err(Error::Config("training snapshots differ in node count".into()));
    }
    if first.ground_nodes().len() < 2 {
        return Err(Error::Config("training needs at least two ground nodes".into()));
    }
    Ok(n)
}

/// Trains an agent over `snapshots`, cycling to the next one each outer
/// episode.
pub fn train(snapshots: &[GraphSnapshot], config: &TrainConfig) -> Result<Training> {
    config.validate()?;
    let node_count = check_snapshots(snapshots)?;
    let widest = snapshots.iter().map(GraphSnapshot::max_degree).max().unwrap_or(0);
    let max_degree = config.max_degree.unwrap_or(widest.max(1));
    if widest > max_degree {
        return Err(Error::Config(format!(
            "snapshot degree {widest} exceeds max_degree {max_degree}"
        )));
    }
    let max_hops = config.max_hops.unwrap_or(node_count);

    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    let mut net = QNetwork::routing(max_degree + node_count, max_degree, &mut rng)?;
    let mut target = net.clone();
    let mut adam = Adam::new(&net, config.learning_rate);
    let mut buffer = ReplayBuffer::new(config.buffer_capacity);
    let mut gradient_steps = 0usize;
    let mut inner = 0usize;
    let mut losses = Vec::with_capacity(config.episodes);

    for outer in 0..config.episodes {
        let snap = &snapshots[outer % snapshots.len()];
        let pairs = config.pair_sampling.candidates(snap);
        let (mut sum, mut count) = (0.0, 0usize);
        for _ in 0..config.mini_episodes {
            let epsilon = config.epsilon_after(inner);
            inner += 1;
            let &(src, dst) = pairs.choose(&mut rng).expect("at least two ground nodes");
            let mut ep = Episode::new(snap, src, dst, max_degree, false)?;
            let mut state = ep.state()?;
            let mut mask = ep.mask()?;
            while ep.hops() < max_hops {
                let Some(action) = select_action(&net, &state, epsilon, &mask, &mut rng)? else {
                    break;
                };
                let t = ep.step(action)?;
                let next_state = ep.state()?;
                let next_mask = ep.mask()?;
                buffer.push(Experience {
                    state,
                    action,
                    reward: t.reward,
                    next_state: next_state.clone(),
                    next_mask: next_mask.clone(),
                    terminal: t.terminal,
                });
                if buffer.len() >= config.batch_size {
                    let batch = buffer.sample(config.batch_size, &mut rng);
                    sum += train_step(&mut net, &target, &mut adam, &batch, config.discount)?;
                    count += 1;
                    gradient_steps += 1;
                    if gradient_steps.is_multiple_of(config.target_sync) {
                        target.copy_from(&net)?;
                    }
                }
                if t.terminal {
                    break;
                }
                state = next_state;
                mask = next_mask;
            }
        }
        if count > 0 {
            losses.push(sum / count as f64);
        }
    }

    Ok(Training {
        model: RoutingModel {
            net,
            max_degree,
            node_count,
            config: config.clone(),
        },
        losses,
    })
}

/// True once the last `CONVERGENCE_WINDOW` successive loss changes are all
/// below `CONVERGENCE_DELTA`.
pub fn converged(losses: &[f64]) -> bool {
    if losses.len() <= CONVERGENCE_WINDOW {
        return false;
    }
    losses[losses.len() - CONVERGENCE_WINDOW - 1..]
        .windows(2)
        .all(|w| (w[1] - w[0]).abs() < CONVERGENCE_DELTA)
}

/// Greedy rollout from `src` to `dst`, never revisiting a node.
pub fn find_path(model: &RoutingModel, snapshot: &GraphSnapshot, src: usize, dst: usize, max_hops: Option<usize>) -> Result<Route> {
    if snapshot.node_count() != model.node_count {
        return Err(Error::Dimension {
            expected: model.node_count,
            got: snapshot.node_count(),
        });
    }
    for id in [src, dst] {
        if snapshot.node(id)?.kind != NodeKind::Ground {
            return Err(Error::domain(format!("route endpoint {id} is not a ground node")));
        }
    }
    let max_hops = max_hops.unwrap_or(snapshot.node_count());
    let mut ep = Episode::new(snapshot, src, dst, model.max_degree, true)?;
    while ep.hops() < max_hops {
        let state = ep.state()?;
        let mask = ep.mask()?;
        let q = model.net.forward(&state.features().collect::<Vec<_>>())?;
        let Some(action) = greedy_action(&q, &mask) else {
            return Ok(Route::Failed(RouteFailure::DeadEnd));
        };
        let t = ep.step(action)?;
        if t.reached {
            return Ok(Route::Found(RoutePath::new(ep.path().to_vec())));
        }
        if t.terminal {
            return Ok(Route::Failed(RouteFailure::DeadEnd));
        }
    }
    Ok(Route::Failed(RouteFailure::HopLimit))
}
