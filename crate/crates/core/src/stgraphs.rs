//! Location graphs: spatial distance (SDG), temporal transition (TTG) and
//! spatiotemporal visit-distribution similarity (STG).
//!
//! All graphs are directed. An edge `(src, dst)` makes `dst` a neighbour
//! of `src` during attention. Self-edges are never stored; attention adds
//! a unit self-loop to every node when `self_loops` is set.

use std::collections::BTreeMap;
use std::fmt;
use std::io::{BufRead, Write};
use std::str::FromStr;

use thiserror::Error;

use crate::mobdata::{LatLon, Trajectory};

pub const EARTH_RADIUS_KM: f64 = 6371.0;

#[derive(Debug, Error)]
pub enum GraphError {
    #[error("neighbour budget k={k} must satisfy 1 <= k < N={n}")]
    BadK { k: usize, n: usize },
    #[error("location {0} never appears in the observations")]
    Unvisited(usize),
    #[error("distributions have different slot counts: {0} vs {1}")]
    SlotMismatch(usize, usize),
    #[error("invalid visit distribution: {0}")]
    BadDistribution(String),
    #[error("edge list line {line}: {reason}")]
    Parse { line: usize, reason: String },
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Channel {
    Sdg,
    Ttg,
    Stg,
}

impl Channel {
    pub const ALL: [Channel; 3] = [Channel::Stg, Channel::Sdg, Channel::Ttg];

    pub fn name(self) -> &'static str {
        match self {
            Channel::Sdg => "sdg",
            Channel::Ttg => "ttg",
            Channel::Stg => "stg",
        }
    }
}

impl fmt::Display for Channel {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Channel {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.trim().to_ascii_lowercase().as_str() {
            "sdg" => Ok(Channel::Sdg),
            "ttg" => Ok(Channel::Ttg),
            "stg" => Ok(Channel::Stg),
            other => Err(format!("unknown channel `{other}`")),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum EdgeMode {
    Weighted,
    Vanilla,
}

impl fmt::Display for EdgeMode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            EdgeMode::Weighted => "weighted",
            EdgeMode::Vanilla => "vanilla",
        })
    }
}

impl FromStr for EdgeMode {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.trim().to_ascii_lowercase().as_str() {
            "weighted" => Ok(EdgeMode::Weighted),
            "vanilla" => Ok(EdgeMode::Vanilla),
            other => Err(format!("unknown edge mode `{other}`")),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Edge {
    pub src: usize,
    pub dst: usize,
    pub weight: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct LocationGraph {
    pub channel: Channel,
    pub mode: EdgeMode,
    /// Neighbour budget for top-k channels; 0 for TTG.
    pub k: usize,
    pub edges: Vec<Edge>,
    pub self_loops: bool,
}

impl LocationGraph {
    pub fn out_degree(&self, node: usize) -> usize {
        self.edges.iter().filter(|e| e.src == node).count()
    }

    pub fn edge_set(&self) -> Vec<(usize, usize)> {
        let mut s: Vec<_> = self.edges.iter().map(|e| (e.src, e.dst)).collect();
        s.sort_unstable();
        s
    }

    /// `(src, dst, weight)` triples as consumed by attention.
    pub fn triples(&self) -> Vec<(usize, usize, f64)> {
        self.edges.iter().map(|e| (e.src, e.dst, e.weight)).collect()
    }

    /// Converts to `mode`, collapsing weights to 1 for vanilla.
    pub fn with_mode(self, mode: EdgeMode) -> Self {
        match mode {
            EdgeMode::Vanilla => binarize(&self),
            EdgeMode::Weighted => self,
        }
    }
}

/// Same edges, every weight 1, vanilla mode.
pub fn binarize(graph: &LocationGraph) -> LocationGraph {
    LocationGraph {
        mode: EdgeMode::Vanilla,
        edges: graph
            .edges
            .iter()
            .map(|e| Edge { weight: 1.0, ..*e })
            .collect(),
        ..graph.clone()
    }
}

/// Great-circle distance in kilometres.
pub fn haversine_km(a: LatLon, b: LatLon) -> f64 {
    let (p1, p2) = (a.lat.to_radians(), b.lat.to_radians());
    let dphi = p2 - p1;
    let dlambda = (b.lon - a.lon).to_radians();
    let h = (dphi / 2.0).sin().powi(2) + p1.cos() * p2.cos() * (dlambda / 2.0).sin().powi(2);
    2.0 * EARTH_RADIUS_KM * h.sqrt().min(1.0).asin()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum SpatialMetric {
    /// Great-circle kilometres.
    #[default]
    Haversine,
    /// Euclidean distance in raw degree space.
    Planar,
}

impl SpatialMetric {
    pub fn distance(self, a: LatLon, b: LatLon) -> f64 {
        match self {
            SpatialMetric::Haversine => haversine_km(a, b),
            SpatialMetric::Planar => ((a.lat - b.lat).powi(2) + (a.lon - b.lon).powi(2)).sqrt(),
        }
    }
}

fn check_k(k: usize, n: usize) -> Result<(), GraphError> {
    if k == 0 || k >= n {
        return Err(GraphError::BadK { k, n });
    }
    Ok(())
}

/// Keeps, per source, the `k` candidates with the highest score; ties go
/// to the lower id.
fn top_k_edges(n: usize, k: usize, score: impl Fn(usize, usize) -> f64) -> Vec<Edge> {
    let mut edges = Vec::with_capacity(n * k);
    let mut cand: Vec<(f64, usize)> = Vec::with_capacity(n);
    for i in 0..n {
        cand.clear();
        cand.extend((0..n).filter(|&j| j != i).map(|j| (score(i, j), j)));
        cand.sort_by(|a, b| b.0.total_cmp(&a.0).then(a.1.cmp(&b.1)));
        edges.extend(cand[..k].iter().map(|&(w, j)| Edge {
            src: i,
            dst: j,
            weight: w,
        }));
    }
    edges
}

/// Links every location to its `k` nearest others.
///
/// Weighted scores are `1 / (1 + d)` with `d` in the metric's unit.
pub fn build_sdg(
    locations: &[LatLon],
    k: usize,
    metric: SpatialMetric,
) -> Result<LocationGraph, GraphError> {
    check_k(k, locations.len())?;
    let edges = top_k_edges(locations.len(), k, |i, j| {
        1.0 / (1.0 + metric.distance(locations[i], locations[j]))
    });
    Ok(LocationGraph {
        channel: Channel::Sdg,
        mode: EdgeMode::Weighted,
        k,
        edges,
        self_loops: true,
    })
}

/// Counts consecutive-slot transitions over the training trajectories.
///
/// Self-transitions are skipped unless `include_self` is set.
pub fn build_ttg(trajectories: &[Trajectory], include_self: bool) -> LocationGraph {
    let mut counts: BTreeMap<(usize, usize), u64> = BTreeMap::new();
    for t in trajectories {
        for w in t.slots.windows(2) {
            if include_self || w[0] != w[1] {
                *counts.entry((w[0], w[1])).or_default() += 1;
            }
        }
    }
    LocationGraph {
        channel: Channel::Ttg,
        mode: EdgeMode::Weighted,
        k: 0,
        edges: counts
            .into_iter()
            .map(|((src, dst), c)| Edge {
                src,
                dst,
                weight: c as f64,
            })
            .collect(),
        self_loops: true,
    }
}

/// A location's normalized visit histogram over time-of-day slots.
///
/// Slot `t` sits at `(t + 0.5) / T` on the unit interval.
#[derive(Debug, Clone, PartialEq)]
pub struct VisitDistribution {
    probs: Vec<f64>,
}

impl VisitDistribution {
    pub fn new(probs: Vec<f64>) -> Result<Self, GraphError> {
        if probs.is_empty() {
            return Err(GraphError::BadDistribution("empty".into()));
        }
        if probs.iter().any(|&p| !(p >= 0.0) || !p.is_finite()) {
            return Err(GraphError::BadDistribution("negative or non-finite mass".into()));
        }
        let sum: f64 = probs.iter().sum();
        if (sum - 1.0).abs() > 1e-9 {
            return Err(GraphError::BadDistribution(format!("sums to {sum}")));
        }
        Ok(Self { probs })
    }

    pub fn uniform(slots: usize) -> Self {
        Self {
            probs: vec![1.0 / slots as f64; slots],
        }
    }

    pub fn one_hot(slots: usize, at: usize) -> Self {
        let mut probs = vec![0.0; slots];
        probs[at] = 1.0;
        Self { probs }
    }

    pub fn probs(&self) -> &[f64] {
        &self.probs
    }

    pub fn slots(&self) -> usize {
        self.probs.len()
    }
}

/// Normalized hour-of-day histogram of `location` over `(location, slot)`
/// observations.
pub fn visit_distribution(
    observations: impl IntoIterator<Item = (usize, usize)>,
    location: usize,
    slots: usize,
) -> Result<VisitDistribution, GraphError> {
    let mut counts = vec![0u64; slots];
    for (loc, slot) in observations {
        if loc == location {
            counts[slot] += 1;
        }
    }
    let total: u64 = counts.iter().sum();
    if total == 0 {
        return Err(GraphError::Unvisited(location));
    }
    Ok(VisitDistribution {
        probs: counts.iter().map(|&c| c as f64 / total as f64).collect(),
    })
}

/// Visit distributions for every location in `[0, n)`. Locations without
/// observations get the uniform distribution.
pub fn visit_distributions(
    observations: impl IntoIterator<Item = (usize, usize)>,
    n: usize,
    slots: usize,
) -> Vec<VisitDistribution> {
    let mut counts = vec![vec![0u64; slots]; n];
    for (loc, slot) in observations {
        counts[loc][slot] += 1;
    }
    counts
        .into_iter()
        .map(|c| {
            let total: u64 = c.iter().sum();
            if total == 0 {
                VisitDistribution::uniform(slots)
            } else {
                VisitDistribution {
                    probs: c.iter().map(|&x| x as f64 / total as f64).collect(),
                }
            }
        })
        .collect()
}

/// `(location, slot)` pairs read off the filled hourly grid.
pub fn slot_observations(trajectories: &[Trajectory]) -> impl Iterator<Item = (usize, usize)> + '_ {
    trajectories
        .iter()
        .flat_map(|t| t.slots.iter().enumerate().map(|(s, &l)| (l, s)))
}

/// 1-D earth mover's distance between two slot histograms on `[0, 1]`,
/// computed from the cumulative distributions.
pub fn wasserstein_1d(a: &VisitDistribution, b: &VisitDistribution) -> Result<f64, GraphError> {
    if a.slots() != b.slots() {
        return Err(GraphError::SlotMismatch(a.slots(), b.slots()));
    }
    let (mut ca, mut cb, mut acc) = (0.0, 0.0, 0.0);
    for (pa, pb) in a.probs.iter().zip(&b.probs) {
        ca += pa;
        cb += pb;
        acc += (ca - cb).abs();
    }
    Ok(acc / a.slots() as f64)
}

/// Top-k neighbours by `1 - wasserstein_1d`.
pub fn build_stg(distributions: &[VisitDistribution], k: usize) -> Result<LocationGraph, GraphError> {
    let n = distributions.len();
    check_k(k, n)?;
    let slots = distributions[0].slots();
    if let Some(d) = distributions.iter().find(|d| d.slots() != slots) {
        return Err(GraphError::SlotMismatch(slots, d.slots()));
    }
    let cdfs: Vec<Vec<f64>> = distributions
        .iter()
        .map(|d| {
            d.probs
                .iter()
                .scan(0.0, |acc, p| {
                    *acc += p;
                    Some(*acc)
                })
                .collect()
        })
        .collect();
    let edges = top_k_edges(n, k, |i, j| {
        let d: f64 = cdfs[i].iter().zip(&cdfs[j]).map(|(x, y)| (x - y).abs()).sum();
        1.0 - d / slots as f64
    });
    Ok(LocationGraph {
        channel: Channel::Stg,
        mode: EdgeMode::Weighted,
        k,
        edges,
        self_loops: true,
    })
}

/// Writes the `channel,mode,k` header and one `src,dst,weight` line per edge.
pub fn write_edge_list<W: Write>(mut w: W, graph: &LocationGraph) -> Result<(), GraphError> {
    writeln!(w, "{},{},{}", graph.channel, graph.mode, graph.k)?;
    for e in &graph.edges {
        writeln!(w, "{},{},{:?}", e.src, e.dst, e.weight)?;
    }
    Ok(())
}

pub fn read_edge_list<R: BufRead>(r: R) -> Result<LocationGraph, GraphError> {
    let bad = |line: usize, reason: String| GraphError::Parse { line, reason };
    let mut lines = r.lines().enumerate();
    let header = match lines.next() {
        Some((_, l)) => l?,
        None => return Err(bad(1, "missing header".into())),
    };
    let h: Vec<&str> = header.split(',').collect();
    if h.len() != 3 {
        return Err(bad(1, "header must be channel,mode,k".into()));
    }
    let channel: Channel = h[0].parse().map_err(|e| bad(1, e))?;
    let mode: EdgeMode = h[1].parse().map_err(|e| bad(1, e))?;
    let k: usize = h[2].parse().map_err(|_| bad(1, format!("bad k `{}`", h[2])))?;
    let mut edges = Vec::new();
    for (i, line) in lines {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let f: Vec<&str> = line.split(',').collect();
        let parsed = (f.len() == 3)
            .then(|| Some((f[0].parse().ok()?, f[1].parse().ok()?, f[2].parse().ok()?)))
            .flatten();
        let (src, dst, weight) = parsed.ok_or_else(|| bad(i + 1, format!("bad edge `{line}`")))?;
        edges.push(Edge { src, dst, weight });
    }
    Ok(LocationGraph {
        channel,
        mode,
        k,
        edges,
        self_loops: true,
    })
}

/// All three channels from a training split: SDG over haversine
/// distance, TTG without self-transitions, and STG over visit
/// distributions read from the filled slots. Edge weights are kept.
pub fn build_all(
    train: &[Trajectory],
    locations: &[LatLon],
    k: usize,
    slots: usize,
) -> Result<Vec<LocationGraph>, GraphError> {
    let dists = visit_distributions(slot_observations(train), locations.len(), slots);
    Ok(vec![
        build_stg(&dists, k)?,
        build_sdg(locations, k, SpatialMetric::Haversine)?,
        build_ttg(train, false),
    ])
}

#[cfg(test)]
mod tests {
    use super::*;
    use chrono::NaiveDate;
    use proptest::prelude::*;

    fn traj(slots: Vec<usize>) -> Trajectory {
        Trajectory::new("u", NaiveDate::from_ymd_opt(2012, 4, 3).unwrap(), slots)
    }

    fn neighbours(g: &LocationGraph, i: usize) -> Vec<usize> {
        g.edges.iter().filter(|e| e.src == i).map(|e| e.dst).collect()
    }

    #[test]
    fn great_circle_quarter_turn() {
        let d = haversine_km(LatLon::new(0.0, 0.0), LatLon::new(0.0, 90.0));
        assert!((d - std::f64::consts::FRAC_PI_2 * EARTH_RADIUS_KM).abs() < 1e-9);
        assert!((d - 10007.543).abs() < 1e-3);
    }

    #[test]
    fn sdg_collinear_points_link_nearest() {
        // 0 km, 1 km, 10 km along the equator: one degree is 111.195 km
        let deg_per_km = 1.0 / (EARTH_RADIUS_KM * std::f64::consts::PI / 180.0);
        let locs = vec![
            LatLon::new(0.0, 0.0),
            LatLon::new(0.0, deg_per_km),
            LatLon::new(0.0, 10.0 * deg_per_km),
        ];
        let g = build_sdg(&locs, 1, SpatialMetric::Haversine).unwrap();
        assert_eq!(neighbours(&g, 0), vec![1]);
        assert_eq!(neighbours(&g, 1), vec![0]);
        assert_eq!(neighbours(&g, 2), vec![1]);
        // weight for 1 km
        assert!((g.edges[0].weight - 0.5).abs() < 1e-9);
    }

    #[test]
    fn sdg_ties_break_to_lower_ids() {
        let locs = vec![LatLon::new(1.0, 1.0); 5];
        let g = build_sdg(&locs, 2, SpatialMetric::Haversine).unwrap();
        assert_eq!(neighbours(&g, 0), vec![1, 2]);
        assert_eq!(neighbours(&g, 3), vec![0, 1]);
    }

    #[test]
    fn sdg_full_budget_is_complete() {
        let locs: Vec<_> = (0..6).map(|i| LatLon::new(i as f64 * 0.1, 0.0)).collect();
        let g = build_sdg(&locs, 5, SpatialMetric::Planar).unwrap();
        assert_eq!(g.edges.len(), 30);
        assert!(g.edges.iter().all(|e| e.src != e.dst));
        assert!(matches!(build_sdg(&locs, 6, SpatialMetric::Planar), Err(GraphError::BadK { .. })));
    }

    #[test]
    fn ttg_counts() {
        let g = build_ttg(&[traj(vec![0, 1, 0, 1])], false);
        assert_eq!(
            g.edges,
            vec![
                Edge { src: 0, dst: 1, weight: 2.0 },
                Edge { src: 1, dst: 0, weight: 1.0 }
            ]
        );
        assert!(build_ttg(&[traj(vec![3; 24])], false).edges.is_empty());
        assert_eq!(build_ttg(&[traj(vec![3; 24])], true).edges[0].weight, 23.0);
        let both = build_ttg(&[traj(vec![0, 1, 0, 1]), traj(vec![2, 0, 1])], false);
        assert_eq!(both.edges[0], Edge { src: 0, dst: 1, weight: 3.0 });
        assert_eq!(both.edges.len(), 3);
    }

    #[test]
    fn visit_distribution_normalizes() {
        let obs = vec![(7, 8), (7, 8), (7, 9), (7, 10), (2, 3)];
        let d = visit_distribution(obs.clone(), 7, 24).unwrap();
        assert_eq!(&d.probs()[8..11], &[0.5, 0.25, 0.25]);
        let d = visit_distribution(vec![(1, 9); 4], 1, 24).unwrap();
        assert_eq!(d, VisitDistribution::one_hot(24, 9));
        let d = visit_distribution(vec![(1, 0), (1, 12)], 1, 24).unwrap();
        assert_eq!((d.probs()[0], d.probs()[12]), (0.5, 0.5));
        assert!(matches!(visit_distribution(obs, 5, 24), Err(GraphError::Unvisited(5))));
        let all = visit_distributions(vec![(0, 1)], 2, 24);
        assert_eq!(all[1], VisitDistribution::uniform(24));
    }

    #[test]
    fn wasserstein_closed_cases() {
        let a = VisitDistribution::one_hot(24, 0);
        let b = VisitDistribution::one_hot(24, 23);
        assert_eq!(wasserstein_1d(&a, &a).unwrap(), 0.0);
        assert!((wasserstein_1d(&a, &b).unwrap() - 23.0 / 24.0).abs() < 1e-15);
        let c = VisitDistribution::one_hot(8, 2);
        let d = VisitDistribution::one_hot(8, 7);
        assert!((wasserstein_1d(&c, &d).unwrap() - 5.0 / 8.0).abs() < 1e-15);
        assert!(matches!(wasserstein_1d(&a, &c), Err(GraphError::SlotMismatch(24, 8))));
    }

    #[test]
    fn stg_scores() {
        let same = vec![VisitDistribution::uniform(24), VisitDistribution::uniform(24)];
        let g = build_stg(&same, 1).unwrap();
        assert_eq!(g.edges.len(), 2);
        assert!(g.edges.iter().all(|e| (e.weight - 1.0).abs() < 1e-12));

        let far = vec![VisitDistribution::one_hot(24, 0), VisitDistribution::one_hot(24, 23)];
        let g = build_stg(&far, 1).unwrap();
        assert!((g.edges[0].weight - 1.0 / 24.0).abs() < 1e-12);

        let three = vec![
            VisitDistribution::one_hot(24, 0),
            VisitDistribution::one_hot(24, 20),
            VisitDistribution::one_hot(24, 2),
        ];
        let g = build_stg(&three, 1).unwrap();
        assert_eq!(neighbours(&g, 0), vec![2]);
        assert_eq!(neighbours(&g, 1), vec![2]);
        assert_eq!(neighbours(&g, 2), vec![0]);
    }

    #[test]
    fn binarize_sets_unit_weights() {
        let g = build_ttg(&[traj(vec![0, 1, 0, 1, 2])], false);
        let b = binarize(&g);
        assert_eq!(b.mode, EdgeMode::Vanilla);
        assert_eq!(b.edge_set(), g.edge_set());
        assert!(b.edges.iter().all(|e| e.weight == 1.0));
        assert_eq!(binarize(&b), b);
        let empty = build_ttg(&[], false);
        assert!(binarize(&empty).edges.is_empty());
    }

    #[test]
    fn edge_list_round_trip() {
        let locs: Vec<_> = (0..7).map(|i| LatLon::new(40.0 + i as f64 * 0.013, -74.0)).collect();
        let g = build_sdg(&locs, 3, SpatialMetric::Haversine).unwrap();
        let mut buf = Vec::new();
        write_edge_list(&mut buf, &g).unwrap();
        assert!(String::from_utf8_lossy(&buf).starts_with("sdg,weighted,3\n"));
        assert_eq!(read_edge_list(buf.as_slice()).unwrap(), g);
        assert!(read_edge_list("sdg,weighted\n".as_bytes()).is_err());
        assert!(read_edge_list("sdg,weighted,1\n0,1\n".as_bytes()).is_err());
    }

    fn dist(mut w: Vec<u32>) -> VisitDistribution {
        if w.iter().all(|&x| x == 0) {
            w[0] = 1;
        }
        let total: u32 = w.iter().sum();
        VisitDistribution::new(w.iter().map(|&x| f64::from(x) / f64::from(total)).collect()).unwrap()
    }

    fn dist_strategy(slots: usize) -> impl Strategy<Value = VisitDistribution> {
        proptest::collection::vec(0u32..20, slots).prop_map(dist)
    }

    proptest! {
        #[test]
        fn wasserstein_is_a_metric(
            (a, b, c) in (1usize..=12).prop_flat_map(|t| (dist_strategy(t), dist_strategy(t), dist_strategy(t)))
        ) {
            let ab = wasserstein_1d(&a, &b).unwrap();
            prop_assert!(ab >= 0.0 && ab <= 1.0);
            prop_assert_eq!(wasserstein_1d(&a, &a).unwrap(), 0.0);
            prop_assert!((ab - wasserstein_1d(&b, &a).unwrap()).abs() < 1e-15);
            let via = wasserstein_1d(&a, &c).unwrap() + wasserstein_1d(&c, &b).unwrap();
            prop_assert!(ab <= via + 1e-12);
        }

        #[test]
        fn top_k_degrees_and_scores(
            points in proptest::collection::vec((-60.0f64..60.0, -170.0f64..170.0), 2..30),
            k_frac in 0.0f64..1.0,
            seed in any::<u64>(),
        ) {
            let n = points.len();
            let k = 1 + ((n - 2) as f64 * k_frac) as usize;
            let locs: Vec<LatLon> = points.iter().map(|&(a, b)| LatLon::new(a, b)).collect();
            let sdg = build_sdg(&locs, k, SpatialMetric::Haversine).unwrap();
            let mut r = crate::rng::stream(seed, "stg-prop", 0);
            let dists: Vec<VisitDistribution> = (0..n)
                .map(|_| dist((0..24).map(|_| rand::Rng::gen_range(&mut r, 0..5)).collect()))
                .collect();
            let stg = build_stg(&dists, k).unwrap();
            for g in [&sdg, &stg] {
                for i in 0..n {
                    prop_assert_eq!(g.out_degree(i), k.min(n - 1));
                    prop_assert!(!neighbours(g, i).contains(&i));
                }
            }
            prop_assert!(stg.edges.iter().all(|e| (0.0..=1.0).contains(&e.weight)));
            prop_assert!(sdg.edges.iter().all(|e| e.weight > 0.0 && e.weight <= 1.0));
        }

        #[test]
        fn ttg_matches_a_recount(
            trajs in proptest::collection::vec(proptest::collection::vec(0usize..6, 2..10), 0..8),
            include_self in any::<bool>(),
        ) {
            let ts: Vec<Trajectory> = trajs.into_iter().map(traj).collect();
            let g = build_ttg(&ts, include_self);
            for e in &g.edges {
                let count = ts
                    .iter()
                    .flat_map(|t| t.slots.windows(2))
                    .filter(|w| w[0] == e.src && w[1] == e.dst)
                    .count();
                prop_assert_eq!(e.weight, count as f64);
                prop_assert!(include_self || e.src != e.dst);
            }
            let edges: usize = g.edges.iter().map(|e| e.weight as usize).sum();
            let expected = ts
                .iter()
                .flat_map(|t| t.slots.windows(2))
                .filter(|w| include_self || w[0] != w[1])
                .count();
            prop_assert_eq!(edges, expected);
        }

        #[test]
        fn binarize_is_idempotent_and_keeps_edges(
            trajs in proptest::collection::vec(proptest::collection::vec(0usize..6, 2..10), 0..8),
        ) {
            let g = build_ttg(&trajs.into_iter().map(traj).collect::<Vec<_>>(), true);
            let b = binarize(&g);
            prop_assert_eq!(b.edge_set(), g.edge_set());
            prop_assert_eq!(binarize(&b), b.clone());
            prop_assert!(b.edges.iter().all(|e| e.weight == 1.0));
        }
    }
}
