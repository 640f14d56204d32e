//! Seeded experiment runners and their CSV/JSON output.
//!
//! Every runner is a pure function of its [`ExperimentSpec`]. Wall-clock
//! measurements are the one exception; they are kept apart in
//! [`ExperimentOutput::timing`] so the main table stays reproducible byte for
//! byte.

use std::collections::BTreeMap;
use std::fmt;
use std::path::{Path, PathBuf};
use std::str::FromStr;
use std::time::Instant;

use rand::seq::IndexedRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::channel::Transmissivity;
use crate::distribution::{execute, plan_intuitive, plan_tped};
use crate::error::{Error, Result};
use crate::quantum::{entanglement_fidelity, link_pair};
use crate::routing::{
    converged, find_path, routable_pairs, shortest_path_baseline, train, PairSampling, Route, RoutingModel,
    TrainConfig, Training,
};
use crate::topology::{snapshot_series, GraphSnapshot, NetworkConfig};

pub const CSV_HEADER: &str = "experiment,time_step,trial,metric,value";
/// Threshold used for the network without HAPs.
pub const HAP_FREE_THRESHOLD: f64 = 0.5;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ExperimentName {
    ThresholdSweep,
    PolicyCompare,
    RoutingCompare,
    DynamicVsStatic,
    AirAblation,
    Timing,
}

impl ExperimentName {
    pub const ALL: [ExperimentName; 6] = [
        ExperimentName::ThresholdSweep,
        ExperimentName::PolicyCompare,
        ExperimentName::RoutingCompare,
        ExperimentName::DynamicVsStatic,
        ExperimentName::AirAblation,
        ExperimentName::Timing,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            ExperimentName::ThresholdSweep => "threshold_sweep",
            ExperimentName::PolicyCompare => "policy_compare",
            ExperimentName::RoutingCompare => "routing_compare",
            ExperimentName::DynamicVsStatic => "dynamic_vs_static",
            ExperimentName::AirAblation => "air_ablation",
            ExperimentName::Timing => "timing",
        }
    }
}

impl fmt::Display for ExperimentName {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for ExperimentName {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        ExperimentName::ALL
            .into_iter()
            .find(|n| n.as_str() == s)
            .ok_or_else(|| Error::Config(format!("unknown experiment {s:?}")))
    }
}

#[derive(Debug, Clone)]
pub struct ExperimentSpec {
    pub name: ExperimentName,
    pub trials: usize,
    pub time_steps: usize,
    pub seed: u64,
    /// Outer training episodes per agent.
    pub episodes: usize,
    pub mini_episodes: usize,
    pub network: NetworkConfig,
    /// SHA-256 of the configuration file the network was read from.
    pub config_hash: String,
    /// Pre-trained agent used instead of training, where applicable.
    pub model: Option<RoutingModel>,
}

impl ExperimentSpec {
    /// Desk-scale defaults on the bundled network.
    pub fn new(name: ExperimentName) -> Self {
        ExperimentSpec {
            name,
            trials: 20,
            time_steps: 20,
            seed: 0,
            episodes: 100,
            mini_episodes: 50,
            network: NetworkConfig::bundled(),
            config_hash: config_hash(NetworkConfig::bundled_json().as_bytes()),
            model: None,
        }
    }

    /// Reads the network from `path` and hashes its bytes.
    pub fn with_config_file(mut self, path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let bytes = std::fs::read(path).map_err(|e| Error::io(path, e))?;
        let text = String::from_utf8(bytes.clone()).map_err(|e| Error::Config(format!("{}: {e}", path.display())))?;
        self.network = NetworkConfig::from_json(&text)?;
        self.config_hash = config_hash(&bytes);
        Ok(self)
    }

    pub fn validate(&self) -> Result<()> {
        if self.trials == 0 || self.time_steps == 0 {
            return Err(Error::Config("trials and time_steps must be at least 1".into()));
        }
        self.network.validate()
    }

    fn train_config(&self, max_degree: usize) -> TrainConfig {
        TrainConfig {
            episodes: self.episodes,
            mini_episodes: self.mini_episodes,
            max_degree: Some(max_degree),
            seed: self.seed,
            ..TrainConfig::default()
        }
    }
}

pub fn config_hash(bytes: &[u8]) -> String {
    hex::encode(Sha256::digest(bytes))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ResultRow {
    pub experiment: String,
    pub time_step: usize,
    pub trial: usize,
    pub metric: String,
    pub value: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct SuccessCount {
    pub successes: usize,
    pub attempts: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Metadata {
    pub experiment: String,
    pub config_hash: String,
    pub seed: u64,
    pub trials: usize,
    pub time_steps: usize,
    pub episodes: usize,
    pub mini_episodes: usize,
    pub versions: BTreeMap<String, String>,
    /// Per `*_success` metric: how many trials succeeded.
    pub success_counts: BTreeMap<String, SuccessCount>,
    /// Mean of every metric over the rows that report it.
    pub means: BTreeMap<String, f64>,
    /// Whether each trained agent met the convergence rule.
    pub converged: BTreeMap<String, bool>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ExperimentOutput {
    pub rows: Vec<ResultRow>,
    /// Wall-clock rows, not reproducible.
    pub timing: Vec<ResultRow>,
    pub metadata: Metadata,
}

impl ExperimentOutput {
    /// Rows for `metric`, sorted by time step then trial.
    pub fn metric(&self, metric: &str) -> Vec<&ResultRow> {
        self.rows.iter().filter(|r| r.metric == metric).collect()
    }

    /// Value of `metric` at `(time_step, trial)`.
    pub fn value(&self, time_step: usize, trial: usize, metric: &str) -> Option<f64> {
        self.rows
            .iter()
            .find(|r| r.time_step == time_step && r.trial == trial && r.metric == metric)
            .map(|r| r.value)
    }

    pub fn csv(&self) -> String {
        to_csv(&self.rows)
    }
}

pub fn to_csv(rows: &[ResultRow]) -> String {
    let mut out = String::with_capacity(32 * (rows.len() + 1));
    out.push_str(CSV_HEADER);
    out.push('\n');
    for r in rows {
        out.push_str(&format!("{},{},{},{},{}\n", r.experiment, r.time_step, r.trial, r.metric, r.value));
    }
    out
}

fn sort_rows(rows: &mut [ResultRow]) {
    rows.sort_by(|a, b| {
        (&a.experiment, a.time_step, a.trial, &a.metric).cmp(&(&b.experiment, b.time_step, b.trial, &b.metric))
    });
}

/// Sibling files of the CSV at `path`: `<stem>.meta.json` and
/// `<stem>.timing.csv`.
pub fn sibling_paths(path: &Path) -> (PathBuf, PathBuf) {
    let stem = path.file_stem().map(|s| s.to_string_lossy().into_owned()).unwrap_or_default();
    (
        path.with_file_name(format!("{stem}.meta.json")),
        path.with_file_name(format!("{stem}.timing.csv")),
    )
}

/// Writes the CSV, its metadata and, when present, the timing rows.
pub fn emit(output: &ExperimentOutput, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    let write = |p: &Path, text: String| std::fs::write(p, text).map_err(|e| Error::io(p, e));
    write(path, output.csv())?;
    let (meta, timing) = sibling_paths(path);
    write(&meta, serde_json::to_string_pretty(&output.metadata).expect("metadata serializes") + "\n")?;
    if !output.timing.is_empty() {
        write(&timing, to_csv(&output.timing))?;
    }
    Ok(())
}

/// Collects rows for one experiment.
struct Recorder {
    experiment: &'static str,
    rows: Vec<ResultRow>,
    timing: Vec<ResultRow>,
    converged: BTreeMap<String, bool>,
}

impl Recorder {
    fn new(name: ExperimentName) -> Self {
        Recorder {
            experiment: name.as_str(),
            rows: Vec::new(),
            timing: Vec::new(),
            converged: BTreeMap::new(),
        }
    }

    fn row(&self, time_step: usize, trial: usize, metric: &str, value: f64) -> ResultRow {
        ResultRow {
            experiment: self.experiment.to_string(),
            time_step,
            trial,
            metric: metric.to_string(),
            value,
        }
    }

    fn push(&mut self, time_step: usize, trial: usize, metric: &str, value: f64) -> Result<()> {
        if !value.is_finite() {
            return Err(Error::domain(format!("non-finite value for {metric}")));
        }
        let row = self.row(time_step, trial, metric, value);
        self.rows.push(row);
        Ok(())
    }

    fn flag(&mut self, time_step: usize, trial: usize, metric: &str, ok: bool) -> Result<()> {
        self.push(time_step, trial, metric, if ok { 1.0 } else { 0.0 })
    }

    fn time(&mut self, time_step: usize, trial: usize, metric: &str, nanos: f64) {
        let row = self.row(time_step, trial, metric, nanos);
        self.timing.push(row);
    }

    fn finish(mut self, spec: &ExperimentSpec) -> ExperimentOutput {
        sort_rows(&mut self.rows);
        sort_rows(&mut self.timing);
        let mut sums: BTreeMap<String, (f64, usize)> = BTreeMap::new();
        let mut success_counts: BTreeMap<String, SuccessCount> = BTreeMap::new();
        for r in &self.rows {
            let e = sums.entry(r.metric.clone()).or_default();
            e.0 += r.value;
            e.1 += 1;
            if r.metric.ends_with("success") {
                let c = success_counts.entry(r.metric.clone()).or_default();
                c.attempts += 1;
                c.successes += usize::from(r.value == 1.0);
            }
        }
        let mut versions = BTreeMap::new();
        versions.insert("sparq-core".to_string(), env!("CARGO_PKG_VERSION").to_string());
        versions.insert("format".to_string(), "1".to_string());
        ExperimentOutput {
            metadata: Metadata {
                experiment: self.experiment.to_string(),
                config_hash: spec.config_hash.clone(),
                seed: spec.seed,
                trials: spec.trials,
                time_steps: spec.time_steps,
                episodes: spec.episodes,
                mini_episodes: spec.mini_episodes,
                versions,
                success_counts,
                means: sums.into_iter().map(|(k, (s, n))| (k, s / n as f64)).collect(),
                converged: self.converged,
            },
            rows: self.rows,
            timing: self.timing,
        }
    }
}

pub fn run(spec: &ExperimentSpec) -> Result<ExperimentOutput> {
    spec.validate()?;
    match spec.name {
        ExperimentName::ThresholdSweep => run_threshold_sweep(spec),
        ExperimentName::PolicyCompare => run_policy_compare(spec),
        ExperimentName::RoutingCompare => run_routing_compare(spec),
        ExperimentName::DynamicVsStatic => run_dynamic_vs_static(spec),
        ExperimentName::AirAblation => run_air_ablation(spec),
        ExperimentName::Timing => run_timing(spec),
    }
}

/// Fidelity of a pair with one lossless half and one half over `eta`, for
/// `eta = 0.00, 0.01, ..., 1.00`. Row `trial` holds step `trial`.
pub fn run_threshold_sweep(spec: &ExperimentSpec) -> Result<ExperimentOutput> {
    let mut rec = Recorder::new(ExperimentName::ThresholdSweep);
    for i in 0..=100 {
        let eta = i as f64 / 100.0;
        let f = entanglement_fidelity(&link_pair(Transmissivity::ONE, Transmissivity::new(eta)?))?;
        rec.push(0, i, "eta", eta)?;
        rec.push(0, i, "fidelity", f.value())?;
    }
    Ok(rec.finish(spec))
}

fn series(spec: &ExperimentSpec, network: &NetworkConfig, threshold: f64) -> Result<Vec<GraphSnapshot>> {
    snapshot_series(network, 0.0, network.step_seconds, spec.time_steps, threshold)
}

fn widest(snapshots: &[GraphSnapshot]) -> usize {
    snapshots.iter().map(GraphSnapshot::max_degree).max().unwrap_or(0).max(1)
}

fn trained(spec: &ExperimentSpec, snapshots: &[GraphSnapshot], max_degree: usize, rec: &mut Recorder, label: &str) -> Result<RoutingModel> {
    let Training { model, losses } = train(snapshots, &spec.train_config(max_degree))?;
    rec.converged.insert(label.to_string(), converged(&losses));
    Ok(model)
}

/// The spec's model when it fits the network, otherwise a freshly trained one.
fn agent(spec: &ExperimentSpec, snapshots: &[GraphSnapshot], rec: &mut Recorder) -> Result<RoutingModel> {
    let need = widest(snapshots);
    match &spec.model {
        Some(m) if m.node_count == snapshots[0].node_count() && m.max_degree >= need => Ok(m.clone()),
        Some(m) => Err(Error::Config(format!(
            "model expects {} nodes and degree <= {}, network has {} nodes and degree {need}",
            m.node_count,
            m.max_degree,
            snapshots[0].node_count()
        ))),
        None => trained(spec, snapshots, need, rec, "dqn"),
    }
}

/// Deterministic stream for one `(time_step, trial)` cell.
fn trial_rng(seed: u64, time_step: usize, trial: usize) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed.wrapping_add(trial as u64));
    rng.set_stream(time_step as u64);
    rng
}

/// Request endpoints drawn uniformly from `candidates`.
fn request(candidates: &[(usize, usize)], seed: u64, time_step: usize, trial: usize) -> (usize, usize) {
    *candidates
        .choose(&mut trial_rng(seed, time_step, trial))
        .expect("candidate list is never empty")
}

/// What a route delivers once distributed.
struct Delivery {
    min_eta: f64,
    hops: usize,
    tped: Option<(f64, usize)>,
    intuitive: Option<(f64, usize)>,
}

fn deliver(route: &Route, snapshot: &GraphSnapshot) -> Result<Option<Delivery>> {
    let Some(path) = route.path() else {
        return Ok(None);
    };
    let run = |plan: Result<_>| -> Result<Option<(f64, usize)>> {
        match plan {
            Ok(plan) => {
                let r = execute(&plan, snapshot)?;
                Ok(Some((r.fidelity.value(), r.memory_units)))
            }
            Err(Error::Planning(_)) => Ok(None),
            Err(e) => Err(e),
        }
    };
    Ok(Some(Delivery {
        min_eta: path.min_eta(snapshot)?,
        hops: path.hops(),
        tped: run(plan_tped(path, snapshot))?,
        intuitive: run(plan_intuitive(path, snapshot))?,
    }))
}

/// Records `<prefix>_success`, and when routing worked `<prefix>_min_eta`,
/// `<prefix>_hops`, `<prefix>_tped_success` and `<prefix>_fidelity` (TPED).
fn record_route(rec: &mut Recorder, t: usize, k: usize, prefix: &str, route: &Route, snapshot: &GraphSnapshot) -> Result<()> {
    let delivery = deliver(route, snapshot)?;
    rec.flag(t, k, &format!("{prefix}_success"), delivery.is_some())?;
    if let Some(d) = delivery {
        rec.push(t, k, &format!("{prefix}_min_eta"), d.min_eta)?;
        rec.push(t, k, &format!("{prefix}_hops"), d.hops as f64)?;
        rec.flag(t, k, &format!("{prefix}_tped_success"), d.tped.is_some())?;
        if let Some((f, _)) = d.tped {
            rec.push(t, k, &format!("{prefix}_fidelity"), f)?;
        }
    }
    Ok(())
}

fn candidates(snapshot: &GraphSnapshot) -> Vec<(usize, usize)> {
    PairSampling::Routable.candidates(snapshot)
}

/// Routes each request with the agent and distributes it under both
/// policies.
pub fn run_policy_compare(spec: &ExperimentSpec) -> Result<ExperimentOutput> {
    let mut rec = Recorder::new(ExperimentName::PolicyCompare);
    let snaps = series(spec, &spec.network, spec.network.threshold)?;
    let model = agent(spec, &snaps, &mut rec)?;
    for (t, snap) in snaps.iter().enumerate() {
        let pool = candidates(snap);
        for k in 0..spec.trials {
            let (src, dst) = request(&pool, spec.seed, t, k);
            let route = find_path(&model, snap, src, dst, None)?;
            let delivery = deliver(&route, snap)?;
            rec.flag(t, k, "route_success", delivery.is_some())?;
            let Some(d) = delivery else { continue };
            rec.push(t, k, "hops", d.hops as f64)?;
            for (name, outcome) in [("tped", d.tped), ("intuitive", d.intuitive)] {
                rec.flag(t, k, &format!("{name}_success"), outcome.is_some())?;
                if let Some((f, mem)) = outcome {
                    rec.push(t, k, &format!("{name}_fidelity"), f)?;
                    rec.push(t, k, &format!("{name}_memory"), mem as f64)?;
                }
            }
        }
    }
    Ok(rec.finish(spec))
}

/// Agent against the distance-shortest path on the same requests.
pub fn run_routing_compare(spec: &ExperimentSpec) -> Result<ExperimentOutput> {
    let mut rec = Recorder::new(ExperimentName::RoutingCompare);
    let snaps = series(spec, &spec.network, spec.network.threshold)?;
    let model = agent(spec, &snaps, &mut rec)?;
    for (t, snap) in snaps.iter().enumerate() {
        let pool = candidates(snap);
        for k in 0..spec.trials {
            let (src, dst) = request(&pool, spec.seed, t, k);
            let clock = Instant::now();
            let dqn = find_path(&model, snap, src, dst, None)?;
            rec.time(t, k, "dqn_route_ns", clock.elapsed().as_nanos() as f64);
            let clock = Instant::now();
            let sp = shortest_path_baseline(snap, src, dst)?;
            rec.time(t, k, "sp_route_ns", clock.elapsed().as_nanos() as f64);
            record_route(&mut rec, t, k, "dqn", &dqn, snap)?;
            record_route(&mut rec, t, k, "sp", &sp, snap)?;
        }
    }
    Ok(rec.finish(spec))
}

/// One agent trained across the snapshot series, one on the first snapshot
/// only; both evaluated across the series.
pub fn run_dynamic_vs_static(spec: &ExperimentSpec) -> Result<ExperimentOutput> {
    let mut rec = Recorder::new(ExperimentName::DynamicVsStatic);
    let snaps = series(spec, &spec.network, spec.network.threshold)?;
    let degree = widest(&snaps);
    let dynamic = trained(spec, &snaps, degree, &mut rec, "dynamic")?;
    let fixed = trained(spec, &snaps[..1], degree, &mut rec, "static")?;
    for (t, snap) in snaps.iter().enumerate() {
        let pool = candidates(snap);
        for k in 0..spec.trials {
            let (src, dst) = request(&pool, spec.seed, t, k);
            for (prefix, model) in [("dynamic", &dynamic), ("static", &fixed)] {
                let route = find_path(model, snap, src, dst, None)?;
                record_route(&mut rec, t, k, prefix, &route, snap)?;
            }
        }
    }
    Ok(rec.finish(spec))
}

/// The full network at its threshold against the network without HAPs at
/// [`HAP_FREE_THRESHOLD`]. Requests are drawn from pairs routable in either.
pub fn run_air_ablation(spec: &ExperimentSpec) -> Result<ExperimentOutput> {
    let mut rec = Recorder::new(ExperimentName::AirAblation);
    let full_net = &spec.network;
    let bare_net = spec.network.without_haps();
    let full = series(spec, full_net, full_net.threshold)?;
    let bare = series(spec, &bare_net, HAP_FREE_THRESHOLD)?;
    let full_agent = trained(spec, &full, widest(&full), &mut rec, "full")?;
    let bare_agent = trained(spec, &bare, widest(&bare), &mut rec, "hap_free")?;
    for t in 0..spec.time_steps {
        let mut pool = routable_pairs(&full[t]);
        pool.extend(routable_pairs(&bare[t]));
        pool.sort_unstable();
        pool.dedup();
        if pool.is_empty() {
            pool = candidates(&full[t]);
        }
        for k in 0..spec.trials {
            let (src, dst) = request(&pool, spec.seed, t, k);
            rec.push(t, k, "hap_count", bare[t].nodes.iter().filter(|n| n.kind == crate::topology::NodeKind::Hap).count() as f64)?;
            for (prefix, model, snap) in [("full", &full_agent, &full[t]), ("hap_free", &bare_agent, &bare[t])] {
                let route = find_path(model, snap, src, dst, None)?;
                record_route(&mut rec, t, k, prefix, &route, snap)?;
            }
        }
    }
    Ok(rec.finish(spec))
}

/// Per-request routing cost of the agent against recomputing shortest paths.
pub fn run_timing(spec: &ExperimentSpec) -> Result<ExperimentOutput> {
    let mut rec = Recorder::new(ExperimentName::Timing);
    let snaps = series(spec, &spec.network, spec.network.threshold)?;
    let model = agent(spec, &snaps, &mut rec)?;
    let (mut dqn_total, mut sp_total) = (0.0, 0.0);
    for (t, snap) in snaps.iter().enumerate() {
        let pool = candidates(snap);
        for k in 0..spec.trials {
            let (src, dst) = request(&pool, spec.seed, t, k);
            let clock = Instant::now();
            let dqn = find_path(&model, snap, src, dst, None)?;
            let dqn_ns = clock.elapsed().as_nanos() as f64;
            let clock = Instant::now();
            let sp = shortest_path_baseline(snap, src, dst)?;
            let sp_ns = clock.elapsed().as_nanos() as f64;
            dqn_total += dqn_ns;
            sp_total += sp_ns;
            rec.time(t, k, "dqn_route_ns", dqn_ns);
            rec.time(t, k, "sp_route_ns", sp_ns);
            rec.flag(t, k, "dqn_success", dqn.path().is_some())?;
            rec.flag(t, k, "sp_success", sp.path().is_some())?;
            if let Some(p) = dqn.path() {
                rec.push(t, k, "dqn_hops", p.hops() as f64)?;
            }
            if let Some(p) = sp.path() {
                rec.push(t, k, "sp_hops", p.hops() as f64)?;
            }
        }
    }
    if sp_total > 0.0 {
        rec.time(0, 0, "dqn_over_sp_ratio", dqn_total / sp_total);
    }
    Ok(rec.finish(spec))
}
