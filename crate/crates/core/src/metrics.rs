//! Mobility-pattern histograms, Jensen-Shannon divergence and a
//! first-order Markov baseline.
//!
//! Six patterns are compared between real and generated trajectories:
//!
//! | name     | pattern                                               |
//! |----------|-------------------------------------------------------|
//! | Distance | haversine km between consecutive slots (stays give 0) |
//! | Radius   | per-trajectory RMS distance from the lat/lon centroid |
//! | Duration | lengths of maximal runs of one location               |
//! | DailyLoc | distinct locations per trajectory                     |
//! | G-rank   | visit frequency of the 100 most visited locations     |
//! | I-rank   | per-trajectory rank-frequency, averaged               |

use std::collections::{BTreeMap, HashMap};
use std::io::{BufRead, Write};

use rand::Rng;
use thiserror::Error;

use crate::mobdata::{LatLon, Trajectory};
use crate::rng;
use crate::stgraphs::haversine_km;

pub const NUM_BINS: usize = 100;
pub const TOP_LOCATIONS: usize = 100;
pub const METRIC_NAMES: [&str; 6] = ["Distance", "Radius", "Duration", "DailyLoc", "G-rank", "I-rank"];

#[derive(Debug, Error)]
pub enum MetricError {
    #[error("histograms have different supports")]
    SupportMismatch,
    #[error("{0} set is empty")]
    Empty(&'static str),
    #[error("location {id} has no coordinates ({n} known)")]
    MissingCoordinate { id: usize, n: usize },
    #[error("location id {id} out of range for {n} locations")]
    IdOutOfRange { id: usize, n: usize },
    #[error("histogram has no mass")]
    NoMass,
    #[error("report line {line}: {reason}")]
    Parse { line: usize, reason: String },
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

#[derive(Debug, Clone, PartialEq)]
pub enum Support {
    /// `edges.len() == bins + 1`, strictly increasing.
    Bins(Vec<f64>),
    /// One label per bin.
    Categorical(Vec<usize>),
}

impl Support {
    pub fn len(&self) -> usize {
        match self {
            Support::Bins(e) => e.len().saturating_sub(1),
            Support::Categorical(l) => l.len(),
        }
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// `bins` equal-width bins over `[lo, hi]`; a degenerate range becomes
    /// `[lo, lo + 1]`.
    pub fn equal_width(lo: f64, hi: f64, bins: usize) -> Self {
        let hi = if hi > lo { hi } else { lo + 1.0 };
        let w = (hi - lo) / bins as f64;
        let mut edges: Vec<f64> = (0..bins).map(|i| lo + w * i as f64).collect();
        edges.push(hi);
        Support::Bins(edges)
    }

    /// Bin of `v`; values outside the range fall into the edge bins.
    pub fn bin_of(&self, v: f64) -> usize {
        match self {
            Support::Bins(e) => {
                let bins = e.len() - 1;
                let (lo, hi) = (e[0], e[bins]);
                let pos = ((v - lo) / (hi - lo) * bins as f64).floor();
                if pos.is_nan() || pos < 0.0 {
                    0
                } else {
                    (pos as usize).min(bins - 1)
                }
            }
            Support::Categorical(labels) => {
                let v = v as usize;
                labels.iter().position(|&l| l == v).unwrap_or(labels.len() - 1)
            }
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Histogram {
    pub support: Support,
    pub counts: Vec<f64>,
    pub masses: Vec<f64>,
}

impl Histogram {
    pub fn from_counts(support: Support, counts: Vec<f64>) -> Result<Self, MetricError> {
        if counts.len() != support.len() {
            return Err(MetricError::SupportMismatch);
        }
        let total: f64 = counts.iter().sum();
        if !(total > 0.0) {
            return Err(MetricError::NoMass);
        }
        let masses = counts.iter().map(|c| c / total).collect();
        Ok(Self {
            support,
            counts,
            masses,
        })
    }

    pub fn from_values(support: Support, values: &[f64]) -> Result<Self, MetricError> {
        let mut counts = vec![0.0; support.len()];
        for &v in values {
            counts[support.bin_of(v)] += 1.0;
        }
        Self::from_counts(support, counts)
    }
}


/// Jensen-Shannon divergence in nats, `H((p+q)/2) - (H(p) + H(q))/2`.
pub fn jsd(p: &Histogram, q: &Histogram) -> Result<f64, MetricError> {
    if p.support != q.support {
        return Err(MetricError::SupportMismatch);
    }
    Ok(jsd_masses(&p.masses, &q.masses))
}

fn jsd_masses(p: &[f64], q: &[f64]) -> f64 {
    if p == q {
        return 0.0;
    }
    // Sum per-bin terms so that p and q enter symmetrically.
    let mut total = 0.0;
    for (&a, &b) in p.iter().zip(q) {
        let m = 0.5 * (a + b);
        if m > 0.0 {
            let term = |x: f64| if x > 0.0 { x * (x / m).ln() } else { 0.0 };
            total += 0.5 * (term(a) + term(b));
        }
    }
    total.clamp(0.0, std::f64::consts::LN_2)
}

fn coords(locations: &[LatLon], id: usize) -> Result<LatLon, MetricError> {
    locations
        .get(id)
        .copied()
        .ok_or(MetricError::MissingCoordinate { id, n: locations.len() })
}

/// Raw Distance and Radius values of a trajectory set.
pub fn spatial_values(trajectories: &[Trajectory], locations: &[LatLon]) -> Result<(Vec<f64>, Vec<f64>), MetricError> {
    let mut distances = Vec::new();
    let mut radii = Vec::with_capacity(trajectories.len());
    for t in trajectories {
        let pts = t
            .slots
            .iter()
            .map(|&s| coords(locations, s))
            .collect::<Result<Vec<_>, _>>()?;
        distances.extend(pts.windows(2).map(|w| haversine_km(w[0], w[1])));
        if pts.is_empty() {
            continue;
        }
        // mean of offsets from the first point keeps a constant trajectory's
        // centroid exact
        let k = pts.len() as f64;
        let o = pts[0];
        let centroid = LatLon::new(
            o.lat + pts.iter().map(|p| p.lat - o.lat).sum::<f64>() / k,
            o.lon + pts.iter().map(|p| p.lon - o.lon).sum::<f64>() / k,
        );
        let ms = pts.iter().map(|&p| haversine_km(p, centroid).powi(2)).sum::<f64>() / k;
        radii.push(ms.sqrt());
    }
    Ok((distances, radii))
}

fn range_of(values: &[f64]) -> (f64, f64) {
    let lo = values.iter().copied().fold(f64::INFINITY, f64::min);
    let hi = values.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    if lo.is_finite() {
        (lo, hi)
    } else {
        (0.0, 1.0)
    }
}

/// Distance and Radius histograms. Bins span the value range of `real`
/// (or of `trajectories` itself when `real` is `None`).
pub fn metric_spatial(
    trajectories: &[Trajectory],
    locations: &[LatLon],
    real: Option<&[Trajectory]>,
) -> Result<(Histogram, Histogram), MetricError> {
    let (d, r) = spatial_values(trajectories, locations)?;
    let (rd, rr) = match real {
        Some(real) => spatial_values(real, locations)?,
        None => (d.clone(), r.clone()),
    };
    let (dlo, dhi) = range_of(&rd);
    let (rlo, rhi) = range_of(&rr);
    Ok((
        Histogram::from_values(Support::equal_width(dlo, dhi, NUM_BINS), &d)?,
        Histogram::from_values(Support::equal_width(rlo, rhi, NUM_BINS), &r)?,
    ))
}

/// Lengths of maximal runs of identical consecutive locations.
pub fn run_lengths(slots: &[usize]) -> Vec<usize> {
    let mut runs = Vec::new();
    let mut i = 0;
    while i < slots.len() {
        let mut j = i + 1;
        while j < slots.len() && slots[j] == slots[i] {
            j += 1;
        }
        runs.push(j - i);
        i = j;
    }
    runs
}

pub fn distinct_locations(slots: &[usize]) -> usize {
    let mut v = slots.to_vec();
    v.sort_unstable();
    v.dedup();
    v.len()
}

/// Duration and DailyLoc histograms over the categorical support
/// `1..=slots`.
pub fn metric_temporal(trajectories: &[Trajectory], slots: usize) -> Result<(Histogram, Histogram), MetricError> {
    let support = Support::Categorical((1..=slots).collect());
    let runs: Vec<f64> = trajectories
        .iter()
        .flat_map(|t| run_lengths(&t.slots))
        .map(|r| r as f64)
        .collect();
    let daily: Vec<f64> = trajectories
        .iter()
        .map(|t| distinct_locations(&t.slots) as f64)
        .collect();
    Ok((
        Histogram::from_values(support.clone(), &runs)?,
        Histogram::from_values(support, &daily)?,
    ))
}

/// Locations ordered by descending count, ties to the lower id.
fn ranked_counts<'a>(slots: impl Iterator<Item = &'a usize>) -> Vec<(usize, f64)> {
    let mut counts: HashMap<usize, f64> = HashMap::new();
    for &s in slots {
        *counts.entry(s).or_insert(0.0) += 1.0;
    }
    let mut v: Vec<(usize, f64)> = counts.into_iter().collect();
    v.sort_by(|a, b| b.1.total_cmp(&a.1).then(a.0.cmp(&b.0)));
    v
}

/// The `top` most visited locations with their visit counts.
pub fn top_locations(trajectories: &[Trajectory], top: usize) -> Vec<(usize, f64)> {
    let mut v = ranked_counts(trajectories.iter().flat_map(|t| t.slots.iter()));
    v.truncate(top);
    v
}

/// Rank-indexed G-rank histogram of one dataset: normalized counts of its
/// `top` most visited locations.
pub fn g_rank(trajectories: &[Trajectory], top: usize) -> Result<Histogram, MetricError> {
    let ranked = top_locations(trajectories, top);
    let support = Support::Categorical((1..=ranked.len()).collect());
    Histogram::from_counts(support, ranked.into_iter().map(|(_, c)| c).collect())
}

/// Normalized rank-frequency vector of one trajectory.
fn individual_ranks(slots: &[usize]) -> Vec<f64> {
    let ranked = ranked_counts(slots.iter());
    let total = slots.len() as f64;
    ranked.into_iter().map(|(_, c)| c / total).collect()
}

/// I-rank histogram over ranks `1..=width` (`width` at least the largest
/// per-trajectory distinct count).
pub fn i_rank(trajectories: &[Trajectory], width: usize) -> Result<Histogram, MetricError> {
    let mut acc = vec![0.0; width];
    for t in trajectories {
        for (k, f) in individual_ranks(&t.slots).into_iter().enumerate() {
            acc[k] += f;
        }
    }
    let n = trajectories.len() as f64;
    acc.iter_mut().for_each(|v| *v /= n);
    Histogram::from_counts(Support::Categorical((1..=width).collect()), acc)
}

fn max_distinct(trajectories: &[Trajectory]) -> usize {
    trajectories
        .iter()
        .map(|t| distinct_locations(&t.slots))
        .max()
        .unwrap_or(1)
}

/// G-rank and I-rank of one dataset in isolation.
pub fn metric_rank(trajectories: &[Trajectory], top: usize) -> Result<(Histogram, Histogram), MetricError> {
    if trajectories.is_empty() {
        return Err(MetricError::Empty("trajectory"));
    }
    Ok((g_rank(trajectories, top)?, i_rank(trajectories, max_distinct(trajectories))?))
}

/// G-rank pair aligned on the union of both datasets' top locations, real
/// ranks first. Each side keeps only the counts of its own top locations.
pub fn g_rank_pair(real: &[Trajectory], generated: &[Trajectory], top: usize) -> Result<(Histogram, Histogram), MetricError> {
    let r = top_locations(real, top);
    let g = top_locations(generated, top);
    let mut order: Vec<usize> = r.iter().map(|&(l, _)| l).collect();
    for &(l, _) in &g {
        if !order.contains(&l) {
            order.push(l);
        }
    }
    let side = |top: &[(usize, f64)]| -> Vec<f64> {
        let m: HashMap<usize, f64> = top.iter().copied().collect();
        order.iter().map(|l| m.get(l).copied().unwrap_or(0.0)).collect()
    };
    let support = Support::Categorical(order.clone());
    Ok((
        Histogram::from_counts(support.clone(), side(&r))?,
        Histogram::from_counts(support, side(&g))?,
    ))
}

#[derive(Debug, Clone, PartialEq)]
pub struct MetricPair {
    pub real: Histogram,
    pub generated: Histogram,
    pub jsd: f64,
}

impl MetricPair {
    fn new(real: Histogram, generated: Histogram) -> Result<Self, MetricError> {
        let jsd = jsd(&real, &generated)?;
        Ok(Self { real, generated, jsd })
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct MetricReport {
    pub distance: MetricPair,
    pub radius: MetricPair,
    pub duration: MetricPair,
    pub daily_loc: MetricPair,
    pub g_rank: MetricPair,
    pub i_rank: MetricPair,
}

impl MetricReport {
    pub fn pairs(&self) -> [(&'static str, &MetricPair); 6] {
        [
            (METRIC_NAMES[0], &self.distance),
            (METRIC_NAMES[1], &self.radius),
            (METRIC_NAMES[2], &self.duration),
            (METRIC_NAMES[3], &self.daily_loc),
            (METRIC_NAMES[4], &self.g_rank),
            (METRIC_NAMES[5], &self.i_rank),
        ]
    }

    pub fn values(&self) -> [(&'static str, f64); 6] {
        self.pairs().map(|(n, p)| (n, p.jsd))
    }

    /// `name=jsd` lines, then one `hist.<name>.<side>=` line per histogram
    /// listing `label:mass` entries.
    pub fn write_to<W: Write>(&self, mut w: W) -> Result<(), MetricError> {
        for (name, v) in self.values() {
            writeln!(w, "{name}={v:?}")?;
        }
        for (name, pair) in self.pairs() {
            for (side, h) in [("real", &pair.real), ("generated", &pair.generated)] {
                let labels: Vec<String> = match &h.support {
                    Support::Bins(e) => e[..e.len() - 1].iter().map(|v| format!("{v:?}")).collect(),
                    Support::Categorical(l) => l.iter().map(|v| v.to_string()).collect(),
                };
                let entries: Vec<String> = labels
                    .iter()
                    .zip(&h.masses)
                    .map(|(l, m)| format!("{l}:{m:?}"))
                    .collect();
                writeln!(w, "hist.{name}.{side}={}", entries.join(" "))?;
            }
        }
        Ok(())
    }
}

/// Reads the six `name=jsd` values of a report file.
pub fn read_report_values<R: BufRead>(r: R) -> Result<BTreeMap<String, f64>, MetricError> {
    let mut out = BTreeMap::new();
    for (i, line) in r.lines().enumerate() {
        let line = line?;
        let Some((k, v)) = line.split_once('=') else {
            continue;
        };
        if METRIC_NAMES.contains(&k) {
            let v: f64 = v.parse().map_err(|_| MetricError::Parse {
                line: i + 1,
                reason: format!("bad value `{v}` for {k}"),
            })?;
            out.insert(k.to_string(), v);
        }
    }
    if let Some(missing) = METRIC_NAMES.iter().find(|n| !out.contains_key(**n)) {
        return Err(MetricError::Parse {
            line: 0,
            reason: format!("metric {missing} missing"),
        });
    }
    Ok(out)
}

/// Scores `generated` against `real`; all binning is fixed by `real`.
pub fn evaluate(real: &[Trajectory], generated: &[Trajectory], locations: &[LatLon]) -> Result<MetricReport, MetricError> {
    if real.is_empty() {
        return Err(MetricError::Empty("real"));
    }
    if generated.is_empty() {
        return Err(MetricError::Empty("generated"));
    }
    let (rd, rr) = metric_spatial(real, locations, None)?;
    let (gd, gr) = metric_spatial(generated, locations, Some(real))?;
    let slots = real.iter().chain(generated).map(Trajectory::len).max().unwrap_or(1);
    let (rdur, rdl) = metric_temporal(real, slots)?;
    let (gdur, gdl) = metric_temporal(generated, slots)?;
    let (rg, gg) = g_rank_pair(real, generated, TOP_LOCATIONS)?;
    let width = max_distinct(real).max(max_distinct(generated));
    Ok(MetricReport {
        distance: MetricPair::new(rd, gd)?,
        radius: MetricPair::new(rr, gr)?,
        duration: MetricPair::new(rdur, gdur)?,
        daily_loc: MetricPair::new(rdl, gdl)?,
        g_rank: MetricPair::new(rg, gg)?,
        i_rank: MetricPair::new(i_rank(real, width)?, i_rank(generated, width)?)?,
    })
}

/// Visit counts per lat/lon grid cell of side `cell_deg`, keyed by the
/// cell's south-west corner.
pub fn visit_grid(
    trajectories: &[Trajectory],
    locations: &[LatLon],
    cell_deg: f64,
) -> Result<Vec<(f64, f64, u64)>, MetricError> {
    let mut cells: BTreeMap<(i64, i64), u64> = BTreeMap::new();
    for t in trajectories {
        for &s in &t.slots {
            let p = coords(locations, s)?;
            let key = ((p.lat / cell_deg).floor() as i64, (p.lon / cell_deg).floor() as i64);
            *cells.entry(key).or_insert(0) += 1;
        }
    }
    Ok(cells
        .into_iter()
        .map(|((a, b), c)| (a as f64 * cell_deg, b as f64 * cell_deg, c))
        .collect())
}

pub fn write_visit_grid<W: Write>(mut w: W, grid: &[(f64, f64, u64)]) -> Result<(), MetricError> {
    writeln!(w, "lat,lon,count")?;
    for (lat, lon, c) in grid {
        writeln!(w, "{lat:?},{lon:?},{c}")?;
    }
    Ok(())
}

/// First-order Markov chain over locations.
#[derive(Debug, Clone, PartialEq)]
pub struct MarkovBaseline {
    num_locations: usize,
    /// Sparse rows; `None` marks a state never seen as a source.
    rows: Vec<Option<Vec<(usize, f64)>>>,
    start: Vec<(usize, f64)>,
}

impl MarkovBaseline {
    pub fn fit(train: &[Trajectory], num_locations: usize) -> Result<Self, MetricError> {
        if train.is_empty() {
            return Err(MetricError::Empty("training"));
        }
        let mut counts: Vec<BTreeMap<usize, f64>> = vec![BTreeMap::new(); num_locations];
        let mut start: BTreeMap<usize, f64> = BTreeMap::new();
        for t in train {
            for &s in &t.slots {
                if s >= num_locations {
                    return Err(MetricError::IdOutOfRange { id: s, n: num_locations });
                }
            }
            if let Some(&first) = t.slots.first() {
                *start.entry(first).or_insert(0.0) += 1.0;
            }
            for w in t.slots.windows(2) {
                *counts[w[0]].entry(w[1]).or_insert(0.0) += 1.0;
            }
        }
        let normalize = |m: BTreeMap<usize, f64>| -> Vec<(usize, f64)> {
            let total: f64 = m.values().sum();
            m.into_iter().map(|(k, c)| (k, c / total)).collect()
        };
        let rows = counts
            .into_iter()
            .map(|m| if m.is_empty() { None } else { Some(normalize(m)) })
            .collect();
        if start.is_empty() {
            return Err(MetricError::Empty("training"));
        }
        Ok(Self {
            num_locations,
            rows,
            start: normalize(start),
        })
    }

    /// Dense transition row of `from`.
    pub fn transition_row(&self, from: usize) -> Vec<f64> {
        let n = self.num_locations;
        match &self.rows[from] {
            None => vec![1.0 / n as f64; n],
            Some(r) => {
                let mut v = vec![0.0; n];
                for &(k, p) in r {
                    v[k] = p;
                }
                v
            }
        }
    }

    fn draw(entries: &[(usize, f64)], rng: &mut impl Rng) -> usize {
        let u: f64 = rng.gen();
        let mut acc = 0.0;
        for &(k, p) in entries {
            acc += p;
            if u < acc {
                return k;
            }
        }
        entries.last().map(|e| e.0).unwrap_or(0)
    }

    fn step(&self, from: usize, rng: &mut impl Rng) -> usize {
        match &self.rows[from] {
            Some(r) => Self::draw(r, rng),
            None => rng.gen_range(0..self.num_locations),
        }
    }

    /// Generates `count` trajectories of `len` slots; trajectory `i` uses
    /// the stream `("markov", i)` of `seed`.
    pub fn generate(&self, count: usize, len: usize, seed: u64, template: &Trajectory) -> Vec<Trajectory> {
        (0..count)
            .map(|i| {
                let mut r = rng::stream(seed, "markov", i as u64);
                let mut slots = Vec::with_capacity(len);
                let mut cur = Self::draw(&self.start, &mut r);
                slots.push(cur);
                while slots.len() < len {
                    cur = self.step(cur, &mut r);
                    slots.push(cur);
                }
                Trajectory {
                    user: format!("markov{i:06}"),
                    day: template.day,
                    slots,
                }
            })
            .collect()
    }
}
