//! Planted-pattern datasets with a known transition kernel.

use std::str::FromStr;

use chrono::{Days, NaiveDate};
use rand::distributions::{Distribution, WeightedIndex};
use rand::Rng;

use super::{DataError, Dataset, LatLon, Trajectory};
use crate::rng;

/// How the hidden transition kernel is built.
#[derive(Debug, Clone, PartialEq)]
pub enum KernelSpec {
    Uniform,
    Identity,
    /// Uniform over the `m` nearest other locations on the grid.
    Nearest(usize),
    Explicit(Vec<Vec<f64>>),
}

impl FromStr for KernelSpec {
    type Err = DataError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "uniform" => Ok(Self::Uniform),
            "identity" => Ok(Self::Identity),
            _ => s
                .strip_prefix("nearest:")
                .and_then(|m| m.parse().ok())
                .map(Self::Nearest)
                .ok_or_else(|| DataError::BadSynthConfig(format!("unknown kernel `{s}`"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SynthConfig {
    pub locations: usize,
    pub users: usize,
    pub days: usize,
    pub kernel: KernelSpec,
    /// Probability of repeating the previous hour's location.
    pub stay_prob: f64,
    pub seed: u64,
    pub grid_cols: usize,
    pub origin: LatLon,
    /// Grid spacing in degrees.
    pub spacing_deg: f64,
    pub first_day: NaiveDate,
}

impl Default for SynthConfig {
    fn default() -> Self {
        Self {
            locations: 100,
            users: 50,
            days: 10,
            kernel: KernelSpec::Nearest(4),
            stay_prob: 0.7,
            seed: 0,
            grid_cols: 10,
            origin: LatLon::new(40.70, -74.02),
            spacing_deg: 0.01,
            first_day: NaiveDate::from_ymd_opt(2012, 4, 2).expect("valid date"),
        }
    }
}

/// Ground truth recorded alongside a synthetic dataset.
#[derive(Debug, Clone, PartialEq)]
pub struct PlantedTruth {
    pub kernel: Vec<Vec<f64>>,
    pub stay_prob: f64,
}

impl PlantedTruth {
    /// Hour-to-hour transition matrix the trajectories actually follow.
    pub fn effective_transitions(&self) -> Vec<Vec<f64>> {
        self.kernel
            .iter()
            .enumerate()
            .map(|(i, row)| {
                row.iter()
                    .enumerate()
                    .map(|(j, &p)| {
                        (1.0 - self.stay_prob) * p + if i == j { self.stay_prob } else { 0.0 }
                    })
                    .collect()
            })
            .collect()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SynthDataset {
    pub dataset: Dataset,
    pub truth: PlantedTruth,
}

fn grid_positions(cfg: &SynthConfig) -> Vec<LatLon> {
    (0..cfg.locations)
        .map(|i| {
            let (row, col) = (i / cfg.grid_cols, i % cfg.grid_cols);
            LatLon::new(
                cfg.origin.lat + row as f64 * cfg.spacing_deg,
                cfg.origin.lon + col as f64 * cfg.spacing_deg,
            )
        })
        .collect()
}

fn build_kernel(cfg: &SynthConfig, coords: &[LatLon]) -> Result<Vec<Vec<f64>>, DataError> {
    let n = cfg.locations;
    let kernel = match &cfg.kernel {
        KernelSpec::Uniform => vec![vec![1.0 / n as f64; n]; n],
        KernelSpec::Identity => (0..n)
            .map(|i| (0..n).map(|j| if i == j { 1.0 } else { 0.0 }).collect())
            .collect(),
        KernelSpec::Nearest(m) => {
            if *m == 0 || *m >= n {
                return Err(DataError::BadSynthConfig(format!(
                    "nearest:{m} needs 0 < m < {n}"
                )));
            }
            (0..n)
                .map(|i| {
                    let mut others: Vec<(f64, usize)> = (0..n)
                        .filter(|&j| j != i)
                        .map(|j| {
                            let dlat = coords[i].lat - coords[j].lat;
                            let dlon = coords[i].lon - coords[j].lon;
                            (dlat * dlat + dlon * dlon, j)
                        })
                        .collect();
                    others.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)));
                    let mut row = vec![0.0; n];
                    for &(_, j) in &others[..*m] {
                        row[j] = 1.0 / *m as f64;
                    }
                    row
                })
                .collect()
        }
        KernelSpec::Explicit(k) => k.clone(),
    };
    if kernel.len() != n {
        return Err(DataError::BadSynthConfig(format!(
            "kernel has {} rows for {n} locations",
            kernel.len()
        )));
    }
    for (row, r) in kernel.iter().enumerate() {
        let sum: f64 = r.iter().sum();
        if r.len() != n || r.iter().any(|&p| !(p >= 0.0)) || (sum - 1.0).abs() > 1e-9 {
            return Err(DataError::NonStochasticRow { row, sum });
        }
    }
    Ok(kernel)
}

/// Samples `users * days` daily trajectories from a sticky Markov chain.
///
/// Each user has a home location drawn once; every day starts there. Each
/// following hour repeats the previous location with probability
/// `stay_prob` and otherwise draws from the kernel row of the previous one.
pub fn synth_generate(cfg: &SynthConfig) -> Result<SynthDataset, DataError> {
    if cfg.locations == 0 || cfg.users == 0 || cfg.days == 0 || cfg.grid_cols == 0 {
        return Err(DataError::BadSynthConfig(
            "locations, users, days and grid_cols must be positive".into(),
        ));
    }
    if !(0.0..=1.0).contains(&cfg.stay_prob) {
        return Err(DataError::BadSynthConfig(format!(
            "stay_prob {} outside [0, 1]",
            cfg.stay_prob
        )));
    }
    let locations = grid_positions(cfg);
    let kernel = build_kernel(cfg, &locations)?;
    let rows: Vec<WeightedIndex<f64>> = kernel
        .iter()
        .map(|r| WeightedIndex::new(r).expect("validated stochastic row"))
        .collect();

    let mut homes_rng = rng::stream(cfg.seed, "synth-homes", 0);
    let homes: Vec<usize> = (0..cfg.users)
        .map(|_| homes_rng.gen_range(0..cfg.locations))
        .collect();

    let mut trajectories = Vec::with_capacity(cfg.users * cfg.days);
    for (u, &home) in homes.iter().enumerate() {
        let mut r = rng::stream(cfg.seed, "synth-user", u as u64);
        for d in 0..cfg.days {
            let day = cfg
                .first_day
                .checked_add_days(Days::new(d as u64))
                .expect("date in range");
            let mut slots = Vec::with_capacity(crate::SLOTS_PER_DAY);
            let mut cur = home;
            slots.push(cur);
            for _ in 1..crate::SLOTS_PER_DAY {
                if !r.gen_bool(cfg.stay_prob) {
                    cur = rows[cur].sample(&mut r);
                }
                slots.push(cur);
            }
            trajectories.push(Trajectory::new(format!("u{u:04}"), day, slots));
        }
    }

    Ok(SynthDataset {
        dataset: Dataset {
            trajectories,
            locations,
            slots: crate::SLOTS_PER_DAY,
        },
        truth: PlantedTruth {
            kernel,
            stay_prob: cfg.stay_prob,
        },
    })
}
