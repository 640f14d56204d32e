//! Node geometry, satellite motion and threshold-gated graph snapshots.
//!
//! The Earth is a sphere of radius 6371 km. Satellites follow circular
//! two-body orbits that start at the ascending node at `t = 0`, and the
//! Earth-fixed frame coincides with the inertial frame at `t = 0`.

use std::f64::consts::PI;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::channel::{FiberParams, FsoParams, Transmissivity};
use crate::error::{Error, Result};

pub const EARTH_RADIUS_M: f64 = 6_371_000.0;
/// Standard gravitational parameter of the Earth, m³/s².
pub const EARTH_MU: f64 = 3.986004418e14;
/// Sidereal rotation rate, rad/s.
pub const EARTH_ROTATION_RATE: f64 = 7.2921159e-5;
/// Tolerance for segments that start or end on the Earth's surface.
const LOS_TOLERANCE_M: f64 = 1e-3;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum NodeKind {
    Ground,
    Hap,
    Satellite,
}

impl NodeKind {
    /// Satellites and HAPs can generate entangled pairs; ground nodes cannot.
    pub fn can_generate(self) -> bool {
        !matches!(self, NodeKind::Ground)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Geodetic {
    pub lat: f64,
    pub lon: f64,
    pub alt_m: f64,
}

impl Geodetic {
    pub fn new(lat: f64, lon: f64, alt_m: f64) -> Self {
        Geodetic { lat, lon, alt_m }
    }

    pub fn validate(&self) -> Result<()> {
        if !(-90.0..=90.0).contains(&self.lat) || !(-180.0..=180.0).contains(&self.lon) || !(self.alt_m >= 0.0) {
            return Err(Error::Config(format!(
                "invalid geodetic position ({}, {}, {} m)",
                self.lat, self.lon, self.alt_m
            )));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct OrbitSpec {
    pub inclination_deg: f64,
    pub raan_deg: f64,
    pub altitude_km: f64,
}

impl OrbitSpec {
    pub fn validate(&self) -> Result<()> {
        if !(0.0..=180.0).contains(&self.inclination_deg)
            || !(0.0..360.0).contains(&self.raan_deg)
            || !(self.altitude_km > 0.0)
        {
            return Err(Error::Config(format!("invalid orbit {self:?}")));
        }
        Ok(())
    }

    pub fn radius_m(&self) -> f64 {
        EARTH_RADIUS_M + self.altitude_km * 1000.0
    }

    pub fn mean_motion(&self) -> f64 {
        (EARTH_MU / self.radius_m().powi(3)).sqrt()
    }

    pub fn period_s(&self) -> f64 {
        2.0 * PI / self.mean_motion()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Node {
    pub id: usize,
    pub kind: NodeKind,
    pub position: Geodetic,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub orbit: Option<OrbitSpec>,
}

/// Inertial (ECI) position of a satellite, meters.
pub fn satellite_eci(orbit: &OrbitSpec, t: f64) -> [f64; 3] {
    let r = orbit.radius_m();
    let u = orbit.mean_motion() * t;
    let (inc, raan) = (orbit.inclination_deg.to_radians(), orbit.raan_deg.to_radians());
    let (su, cu) = u.sin_cos();
    let (si, ci) = inc.sin_cos();
    let (so, co) = raan.sin_cos();
    [r * (co * cu - so * su * ci), r * (so * cu + co * su * ci), r * su * si]
}

fn wrap_longitude(deg: f64) -> f64 {
    let w = (deg + 180.0).rem_euclid(360.0) - 180.0;
    if w == -180.0 {
        180.0
    } else {
        w
    }
}

/// Geodetic position of a satellite `t` seconds after epoch.
pub fn propagate_satellite(orbit: &OrbitSpec, t: f64) -> Geodetic {
    let [x, y, z] = satellite_eci(orbit, t);
    let r = (x * x + y * y + z * z).sqrt();
    let lat = (z / r).clamp(-1.0, 1.0).asin().to_degrees();
    let lon = (y.atan2(x) - EARTH_ROTATION_RATE * t).to_degrees();
    Geodetic::new(lat, wrap_longitude(lon), r - EARTH_RADIUS_M)
}

/// Spherical-Earth Earth-fixed cartesian coordinates, meters.
pub fn geodetic_to_ecef(p: &Geodetic) -> [f64; 3] {
    let r = EARTH_RADIUS_M + p.alt_m;
    let (slat, clat) = p.lat.to_radians().sin_cos();
    let (slon, clon) = p.lon.to_radians().sin_cos();
    [r * clat * clon, r * clat * slon, r * slat]
}

fn sub(a: [f64; 3], b: [f64; 3]) -> [f64; 3] {
    [a[0] - b[0], a[1] - b[1], a[2] - b[2]]
}

fn dot(a: [f64; 3], b: [f64; 3]) -> f64 {
    a[0] * b[0] + a[1] * b[1] + a[2] * b[2]
}

pub fn link_distance(a: &Node, b: &Node) -> f64 {
    let d = sub(geodetic_to_ecef(&a.position), geodetic_to_ecef(&b.position));
    dot(d, d).sqrt()
}

/// Whether the straight segment between two nodes stays above the Earth.
pub fn line_of_sight(a: &Node, b: &Node) -> bool {
    let pa = geodetic_to_ecef(&a.position);
    let pb = geodetic_to_ecef(&b.position);
    let d = sub(pb, pa);
    let len2 = dot(d, d);
    let s = if len2 > 0.0 { (-dot(pa, d) / len2).clamp(0.0, 1.0) } else { 0.0 };
    let closest = [pa[0] + s * d[0], pa[1] + s * d[1], pa[2] + s * d[2]];
    dot(closest, closest).sqrt() >= EARTH_RADIUS_M - LOS_TOLERANCE_M
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum ChannelKind {
    Fiber,
    Fso,
}

pub fn edge_channel(a: &Node, b: &Node) -> ChannelKind {
    if a.kind == NodeKind::Ground && b.kind == NodeKind::Ground {
        ChannelKind::Fiber
    } else {
        ChannelKind::Fso
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FiberConfig {
    pub alpha_db_per_km: f64,
}

impl Default for FiberConfig {
    fn default() -> Self {
        FiberConfig { alpha_db_per_km: 0.15 }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SitePosition {
    pub lat: f64,
    pub lon: f64,
    #[serde(default)]
    pub alt_m: f64,
}

fn default_threshold() -> f64 {
    0.7
}

fn default_true() -> bool {
    true
}

fn default_step() -> f64 {
    30.0
}

/// Which endpoint's altitude sets the extinction coefficient of an FSO link.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ExtinctionAltitude {
    /// The densest air on the path.
    #[default]
    Lower,
    Upper,
}

/// Network configuration file contents.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NetworkConfig {
    pub ground_nodes: Vec<SitePosition>,
    #[serde(default)]
    pub haps: Vec<SitePosition>,
    #[serde(default)]
    pub satellites: Vec<OrbitSpec>,
    #[serde(default)]
    pub fiber: FiberConfig,
    #[serde(default)]
    pub fso: FsoParams,
    #[serde(default = "default_threshold")]
    pub threshold: f64,
    #[serde(default = "default_true")]
    pub check_los: bool,
    #[serde(default = "default_step")]
    pub step_seconds: f64,
    #[serde(default)]
    pub extinction_altitude: ExtinctionAltitude,
}

const BUNDLED: &str = include_str!("../data/sparq_network.json");

impl NetworkConfig {
    /// The 54-node reference network: 24 ground nodes, 10 HAPs at 50 km and
    /// 20 satellites at 500 km.
    pub fn bundled() -> Self {
        Self::from_json(BUNDLED).expect("bundled network config is valid")
    }

    pub fn bundled_json() -> &'static str {
        BUNDLED
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let cfg: NetworkConfig =
            serde_json::from_str(text).map_err(|e| Error::Config(format!("network config: {e}")))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_json(&text).map_err(|e| match e {
            Error::Config(msg) => Error::Config(format!("{}: {msg}", path.display())),
            other => other,
        })
    }

    pub fn validate(&self) -> Result<()> {
        for site in self.ground_nodes.iter().chain(&self.haps) {
            Geodetic::new(site.lat, site.lon, site.alt_m).validate()?;
        }
        for orbit in &self.satellites {
            orbit.validate()?;
        }
        FiberParams::from_db_per_km(self.fiber.alpha_db_per_km).map_err(|e| Error::Config(e.to_string()))?;
        self.fso.validate()?;
        if !(0.0..=1.0).contains(&self.threshold) {
            return Err(Error::Config(format!("threshold {} outside [0, 1]", self.threshold)));
        }
        if !(self.step_seconds > 0.0) {
            return Err(Error::Config("step_seconds must be positive".into()));
        }
        if self.ground_nodes.len() < 2 {
            return Err(Error::Config("at least two ground nodes are required".into()));
        }
        Ok(())
    }

    pub fn node_count(&self) -> usize {
        self.ground_nodes.len() + self.haps.len() + self.satellites.len()
    }

    /// Copy with the air layer removed.
    pub fn without_haps(&self) -> Self {
        NetworkConfig {
            haps: Vec::new(),
            ..self.clone()
        }
    }

    /// Nodes at time `t`. Ids are assigned ground first, then HAPs, then
    /// satellites, in file order.
    pub fn nodes_at(&self, t: f64) -> Vec<Node> {
        let mut nodes = Vec::with_capacity(self.node_count());
        for site in &self.ground_nodes {
            nodes.push(Node {
                id: nodes.len(),
                kind: NodeKind::Ground,
                position: Geodetic::new(site.lat, site.lon, site.alt_m),
                orbit: None,
            });
        }
        for site in &self.haps {
            nodes.push(Node {
                id: nodes.len(),
                kind: NodeKind::Hap,
                position: Geodetic::new(site.lat, site.lon, site.alt_m),
                orbit: None,
            });
        }
        for orbit in &self.satellites {
            nodes.push(Node {
                id: nodes.len(),
                kind: NodeKind::Satellite,
                position: propagate_satellite(orbit, t),
                orbit: Some(*orbit),
            });
        }
        nodes
    }

    /// Transmissivity of the direct channel between two nodes, or `None` when
    /// an FSO link is blocked by the Earth.
    pub fn link_transmissivity(&self, a: &Node, b: &Node) -> Result<Option<Transmissivity>> {
        let distance = link_distance(a, b);
        match edge_channel(a, b) {
            ChannelKind::Fiber => {
                let fiber = FiberParams::from_db_per_km(self.fiber.alpha_db_per_km)?;
                Ok(Some(fiber.transmissivity(distance / 1000.0)?))
            }
            ChannelKind::Fso => {
                if self.check_los && !line_of_sight(a, b) {
                    return Ok(None);
                }
                let h0 = match self.extinction_altitude {
                    ExtinctionAltitude::Lower => a.position.alt_m.min(b.position.alt_m),
                    ExtinctionAltitude::Upper => a.position.alt_m.max(b.position.alt_m),
                };
                if distance == 0.0 {
                    return Ok(Some(Transmissivity::saturating(self.fso.receiver_efficiency)));
                }
                Ok(Some(self.fso.fso_transmissivity(distance, h0)?))
            }
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Edge {
    /// Smaller endpoint id.
    pub a: usize,
    pub b: usize,
    pub eta: Transmissivity,
    pub channel: ChannelKind,
    pub length_m: f64,
}

/// The network at one instant; only links at or above the threshold exist.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct GraphSnapshot {
    pub time: f64,
    pub threshold: f64,
    pub nodes: Vec<Node>,
    pub edges: Vec<Edge>,
    #[serde(skip)]
    adjacency: Vec<Vec<(usize, usize)>>,
}

impl GraphSnapshot {
    /// Builds a snapshot from explicit edges, normalizing endpoint order and
    /// checking the snapshot invariants. Node ids must equal their index.
    pub fn from_edges(time: f64, threshold: f64, nodes: Vec<Node>, edges: Vec<Edge>) -> Result<Self> {
        for (i, n) in nodes.iter().enumerate() {
            if n.id != i {
                return Err(Error::Config(format!("node at index {i} has id {}", n.id)));
            }
        }
        let mut normalized = Vec::with_capacity(edges.len());
        for mut e in edges {
            if e.a == e.b {
                return Err(Error::Config(format!("self-edge on node {}", e.a)));
            }
            if e.a.max(e.b) >= nodes.len() {
                return Err(Error::UnknownNode(e.a.max(e.b)));
            }
            if e.eta.value() < threshold {
                return Err(Error::Config(format!(
                    "edge {}-{} below threshold: {} < {threshold}",
                    e.a, e.b, e.eta
                )));
            }
            if e.a > e.b {
                std::mem::swap(&mut e.a, &mut e.b);
            }
            normalized.push(e);
        }
        normalized.sort_by_key(|e| (e.a, e.b));
        if normalized.windows(2).any(|w| (w[0].a, w[0].b) == (w[1].a, w[1].b)) {
            return Err(Error::Config("duplicate edge".into()));
        }
        let mut adjacency = vec![Vec::new(); nodes.len()];
        for (idx, e) in normalized.iter().enumerate() {
            adjacency[e.a].push((e.b, idx));
            adjacency[e.b].push((e.a, idx));
        }
        for list in &mut adjacency {
            list.sort_unstable();
        }
        Ok(GraphSnapshot {
            time,
            threshold,
            nodes,
            edges: normalized,
            adjacency,
        })
    }

    /// A snapshot without geometry: node `i` has `kinds[i]` and each link is
    /// `(a, b, eta, length_m)`. Threshold is zero.
    pub fn abstract_graph(kinds: &[NodeKind], links: &[(usize, usize, f64, f64)]) -> Result<Self> {
        let nodes = kinds
            .iter()
            .enumerate()
            .map(|(id, &kind)| Node {
                id,
                kind,
                position: Geodetic::new(0.0, 0.0, 0.0),
                orbit: None,
            })
            .collect::<Vec<_>>();
        let mut edges = Vec::with_capacity(links.len());
        for &(a, b, eta, length_m) in links {
            let (ka, kb) = (
                nodes.get(a).ok_or(Error::UnknownNode(a))?,
                nodes.get(b).ok_or(Error::UnknownNode(b))?,
            );
            edges.push(Edge {
                a,
                b,
                eta: Transmissivity::new(eta)?,
                channel: edge_channel(ka, kb),
                length_m,
            });
        }
        GraphSnapshot::from_edges(0.0, 0.0, nodes, edges)
    }

    pub fn node_count(&self) -> usize {
        self.nodes.len()
    }

    pub fn node(&self, id: usize) -> Result<&Node> {
        self.nodes.get(id).ok_or(Error::UnknownNode(id))
    }

    pub fn kind(&self, id: usize) -> NodeKind {
        self.nodes[id].kind
    }

    /// Neighbors in ascending id order with the connecting edge.
    pub fn neighbors(&self, id: usize) -> impl Iterator<Item = (usize, &Edge)> + '_ {
        self.adjacency[id].iter().map(move |&(n, e)| (n, &self.edges[e]))
    }

    pub fn degree(&self, id: usize) -> usize {
        self.adjacency[id].len()
    }

    pub fn max_degree(&self) -> usize {
        self.adjacency.iter().map(Vec::len).max().unwrap_or(0)
    }

    pub fn edge(&self, a: usize, b: usize) -> Option<&Edge> {
        let list = self.adjacency.get(a)?;
        list.binary_search_by_key(&b, |&(n, _)| n).ok().map(|i| &self.edges[list[i].1])
    }

    pub fn eta(&self, a: usize, b: usize) -> Option<Transmissivity> {
        self.edge(a, b).map(|e| e.eta)
    }

    pub fn ground_nodes(&self) -> Vec<usize> {
        self.nodes.iter().filter(|n| n.kind == NodeKind::Ground).map(|n| n.id).collect()
    }
}

/// The network at time `t` with links gated at `threshold`.
pub fn snapshot(config: &NetworkConfig, t: f64, threshold: f64) -> Result<GraphSnapshot> {
    if !(0.0..=1.0).contains(&threshold) {
        return Err(Error::domain(format!("threshold {threshold} outside [0, 1]")));
    }
    let nodes = config.nodes_at(t);
    let mut edges = Vec::new();
    for i in 0..nodes.len() {
        for j in i + 1..nodes.len() {
            let (a, b) = (&nodes[i], &nodes[j]);
            if let Some(eta) = config.link_transmissivity(a, b)? {
                if eta.value() >= threshold {
                    edges.push(Edge {
                        a: i,
                        b: j,
                        eta,
                        channel: edge_channel(a, b),
                        length_m: link_distance(a, b),
                    });
                }
            }
        }
    }
    GraphSnapshot::from_edges(t, threshold, nodes, edges)
}

/// Snapshots at `t0 + i * dt` for `i` in `0..count`.
pub fn snapshot_series(config: &NetworkConfig, t0: f64, dt: f64, count: usize, threshold: f64) -> Result<Vec<GraphSnapshot>> {
    if count == 0 {
        return Err(Error::domain("snapshot series needs count >= 1"));
    }
    (0..count).map(|i| snapshot(config, t0 + i as f64 * dt, threshold)).collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    fn ground(id: usize, lat: f64, lon: f64) -> Node {
        Node {
            id,
            kind: NodeKind::Ground,
            position: Geodetic::new(lat, lon, 0.0),
            orbit: None,
        }
    }

    fn at(id: usize, kind: NodeKind, lat: f64, lon: f64, alt: f64) -> Node {
        Node {
            id,
            kind,
            position: Geodetic::new(lat, lon, alt),
            orbit: None,
        }
    }

    #[test]
    fn ecef_conversion() {
        let close = |a: [f64; 3], b: [f64; 3]| (0..3).all(|i| (a[i] - b[i]).abs() < 1e-6);
        assert!(close(geodetic_to_ecef(&Geodetic::new(0.0, 0.0, 0.0)), [6_371_000.0, 0.0, 0.0]));
        assert!(close(geodetic_to_ecef(&Geodetic::new(90.0, 0.0, 0.0)), [0.0, 0.0, 6_371_000.0]));
        assert!(close(geodetic_to_ecef(&Geodetic::new(0.0, 90.0, 500_000.0)), [0.0, 6_871_000.0, 0.0]));
    }

    #[test]
    fn distances() {
        let a = ground(0, 10.0, 20.0);
        assert_eq!(link_distance(&a, &a), 0.0);
        let b = ground(1, 0.0, 0.0);
        let c = ground(2, 0.0, 180.0);
        assert!((link_distance(&b, &c) - 2.0 * EARTH_RADIUS_M).abs() < 1e-6);
        let sat = at(3, NodeKind::Satellite, 0.0, 0.0, 500_000.0);
        assert!((link_distance(&b, &sat) - 500_000.0).abs() < 1e-6);
    }

    #[test]
    fn line_of_sight_cases() {
        let g = ground(0, 0.0, 0.0);
        let sat = at(1, NodeKind::Satellite, 0.0, 0.0, 500_000.0);
        assert!(line_of_sight(&g, &sat));
        assert!(!line_of_sight(&ground(0, 0.0, 0.0), &ground(1, 0.0, 180.0)));

        // Two satellites at 500 km separated by angle θ; the chord's closest
        // approach to the centre is r·cos(θ/2).
        let r = EARTH_RADIUS_M + 500_000.0;
        let grazing = 2.0 * (EARTH_RADIUS_M / r).acos().to_degrees();
        for (theta, visible) in [(grazing - 1.0, true), (grazing + 1.0, false)] {
            let s1 = at(0, NodeKind::Satellite, 0.0, 0.0, 500_000.0);
            let s2 = at(1, NodeKind::Satellite, 0.0, theta, 500_000.0);
            let min_dist = r * (theta.to_radians() / 2.0).cos();
            assert_eq!(min_dist >= EARTH_RADIUS_M, visible);
            assert_eq!(line_of_sight(&s1, &s2), visible, "theta={theta}");
        }
    }

    #[test]
    fn channel_kinds() {
        let g = ground(0, 0.0, 0.0);
        let h = at(1, NodeKind::Hap, 0.0, 0.0, 50_000.0);
        let s = at(2, NodeKind::Satellite, 0.0, 0.0, 500_000.0);
        assert_eq!(edge_channel(&g, &ground(3, 1.0, 1.0)), ChannelKind::Fiber);
        assert_eq!(edge_channel(&s, &h), ChannelKind::Fso);
        assert_eq!(edge_channel(&h, &g), ChannelKind::Fso);
    }

    #[test]
    fn orbit_period_and_start() {
        let orbit = OrbitSpec {
            inclination_deg: 0.0,
            raan_deg: 0.0,
            altitude_km: 500.0,
        };
        let p = propagate_satellite(&orbit, 0.0);
        assert_eq!(p.lat, 0.0);
        assert!((p.alt_m - 500_000.0).abs() < 1e-6);
        let oracle = 2.0 * PI * (6.871e6f64.powi(3) / 3.986004418e14).sqrt();
        assert!((orbit.period_s() - oracle).abs() < 1e-9);
        assert!((orbit.period_s() - 5668.144).abs() < 1e-3);
    }

    #[test]
    fn polar_orbit_sweeps_poles() {
        let orbit = OrbitSpec {
            inclination_deg: 90.0,
            raan_deg: 0.0,
            altitude_km: 500.0,
        };
        let period = orbit.period_s();
        let lats: Vec<f64> = (0..=1000).map(|i| propagate_satellite(&orbit, period * i as f64 / 1000.0).lat).collect();
        let max = lats.iter().cloned().fold(f64::MIN, f64::max);
        let min = lats.iter().cloned().fold(f64::MAX, f64::min);
        assert!(max > 89.9 && min < -89.9);
        assert!((propagate_satellite(&orbit, period / 4.0).lat - 90.0).abs() < 1e-6);
    }

    #[test]
    fn inertial_periodicity() {
        for orbit in NetworkConfig::bundled().satellites {
            let period = orbit.period_s();
            for t in [0.0, 123.0, 4000.0] {
                let a = satellite_eci(&orbit, t);
                let b = satellite_eci(&orbit, t + period);
                let r = orbit.radius_m();
                assert!((0..3).all(|i| ((a[i] - b[i]) / r).abs() < 1e-6));
                let la = propagate_satellite(&orbit, t).lat;
                let lb = propagate_satellite(&orbit, t + period).lat;
                assert!((la - lb).abs() < 1e-6);
            }
        }
    }

    #[test]
    fn bundled_network_shape() {
        let cfg = NetworkConfig::bundled();
        assert_eq!(cfg.ground_nodes.len(), 24);
        assert_eq!(cfg.haps.len(), 10);
        assert_eq!(cfg.satellites.len(), 20);
        assert!(cfg.haps.iter().all(|h| h.alt_m == 50_000.0));
        assert!(cfg.satellites.iter().all(|s| s.altitude_km == 500.0));
        assert_eq!(cfg.threshold, 0.7);
        assert_eq!(cfg.step_seconds, 30.0);
        assert_eq!(cfg.without_haps().node_count(), 44);
    }

    #[test]
    fn threshold_extremes() {
        let mut cfg = NetworkConfig::bundled();
        cfg.check_los = false;
        cfg.ground_nodes.truncate(6);
        cfg.haps.truncate(2);
        cfg.satellites.truncate(3);
        let n = cfg.node_count();
        let full = snapshot(&cfg, 0.0, 0.0).unwrap();
        assert_eq!(full.edges.len(), n * (n - 1) / 2);
        let strict = snapshot(&cfg, 0.0, 1.0).unwrap();
        assert!(strict.edges.iter().all(|e| e.eta.value() == 1.0));
    }

    #[test]
    fn snapshot_invariants_and_recomputation() {
        let cfg = NetworkConfig::bundled();
        let snap = snapshot(&cfg, 0.0, cfg.threshold).unwrap();
        for e in &snap.edges {
            assert!(e.a < e.b);
            assert!(e.eta.value() >= cfg.threshold);
            let again = cfg.link_transmissivity(&snap.nodes[e.a], &snap.nodes[e.b]).unwrap().unwrap();
            assert!((again.value() - e.eta.value()).abs() < 1e-12);
        }
        assert_eq!(snap, snapshot(&cfg, 0.0, cfg.threshold).unwrap());
    }

    #[test]
    fn clusters_connect_by_fiber_only_locally() {
        let cfg = NetworkConfig::bundled();
        let snap = snapshot(&cfg, 0.0, 0.7).unwrap();
        let fiber = FiberParams::from_db_per_km(0.15).unwrap();
        // Fiber reach at 0.7: ln(1/0.7)/rate km.
        let reach_km = -(0.7f64).ln() / fiber.attenuation;
        for e in snap.edges.iter().filter(|e| e.channel == ChannelKind::Fiber) {
            assert!(e.length_m / 1000.0 <= reach_km + 1e-9);
        }
        // First two nodes of the first cluster are ~2.4 km apart.
        assert!(snap.edge(0, 1).is_some());
        // Nodes in different clusters never share a fiber edge.
        assert!(snap.edge(0, 6).is_none());
        assert!(snap.edge(6, 10).is_none());
    }

    #[test]
    fn series_moves_only_satellites() {
        let cfg = NetworkConfig::bundled();
        let series = snapshot_series(&cfg, 0.0, 30.0, 3, cfg.threshold).unwrap();
        assert_eq!(series[0], snapshot(&cfg, 0.0, cfg.threshold).unwrap());
        let static_edges = |s: &GraphSnapshot| -> Vec<(usize, usize)> {
            s.edges
                .iter()
                .filter(|e| s.kind(e.a) != NodeKind::Satellite && s.kind(e.b) != NodeKind::Satellite)
                .map(|e| (e.a, e.b))
                .collect()
        };
        assert_eq!(static_edges(&series[0]), static_edges(&series[1]));
        assert_eq!(static_edges(&series[1]), static_edges(&series[2]));
        assert!(snapshot_series(&cfg, 0.0, 30.0, 0, 0.7).is_err());
    }

    #[test]
    fn from_edges_rejects_bad_input() {
        let nodes = vec![ground(0, 0.0, 0.0), ground(1, 0.0, 0.01)];
        let edge = |a, b, eta| Edge {
            a,
            b,
            eta: Transmissivity::new(eta).unwrap(),
            channel: ChannelKind::Fiber,
            length_m: 1.0,
        };
        assert!(GraphSnapshot::from_edges(0.0, 0.5, nodes.clone(), vec![edge(0, 0, 0.9)]).is_err());
        assert!(GraphSnapshot::from_edges(0.0, 0.5, nodes.clone(), vec![edge(0, 1, 0.4)]).is_err());
        let s = GraphSnapshot::from_edges(0.0, 0.5, nodes, vec![edge(1, 0, 0.9)]).unwrap();
        assert_eq!((s.edges[0].a, s.edges[0].b), (0, 1));
        assert_eq!(s.eta(1, 0).unwrap().value(), 0.9);
    }
}
