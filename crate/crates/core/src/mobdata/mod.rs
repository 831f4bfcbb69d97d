//! Check-in ingestion, hourly discretization, filtering and splitting.

mod checkins;
pub mod io;
mod synth;

pub use checkins::{discretize, filter_min_visits, parse_checkins, Discretized, ParsedCheckins};
pub use synth::{synth_generate, KernelSpec, PlantedTruth, SynthConfig, SynthDataset};

use chrono::NaiveDate;
use rand::seq::SliceRandom;
use thiserror::Error;

use crate::rng;

#[derive(Debug, Error)]
pub enum DataError {
    #[error("line {line}: malformed field `{field}`: {reason}")]
    Malformed {
        line: usize,
        field: &'static str,
        reason: String,
    },
    #[error("line {line}: {field} {value} out of range")]
    OutOfRange {
        line: usize,
        field: &'static str,
        value: f64,
    },
    #[error("slot count {0} does not divide 24 hours evenly")]
    BadSlotCount(usize),
    #[error("cannot split {available} trajectories into {parts} parts")]
    TooFewForSplit { available: usize, parts: usize },
    #[error("split ratios must be positive")]
    BadRatios,
    #[error("kernel row {row} is not a probability vector (sum {sum})")]
    NonStochasticRow { row: usize, sum: f64 },
    #[error("invalid synthetic config: {0}")]
    BadSynthConfig(String),
    #[error("trajectory {index}: {reason}")]
    BadTrajectory { index: usize, reason: String },
    #[error("identifier `{0}` cannot be written: it contains a delimiter or newline")]
    UnwritableId(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

/// One check-in: a user seen at a location at a point in time.
#[derive(Debug, Clone, PartialEq)]
pub struct VisitRecord {
    pub user: String,
    /// Dense location id in `[0, N)`.
    pub location: usize,
    pub lat: f64,
    pub lon: f64,
    /// Seconds since the Unix epoch, UTC.
    pub timestamp: i64,
}

/// A user-day on the hourly grid. `slots[h]` is the location at hour `h`.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct Trajectory {
    pub user: String,
    pub day: NaiveDate,
    pub slots: Vec<usize>,
}

impl Trajectory {
    pub fn new(user: impl Into<String>, day: NaiveDate, slots: Vec<usize>) -> Self {
        Self {
            user: user.into(),
            day,
            slots,
        }
    }

    pub fn len(&self) -> usize {
        self.slots.len()
    }

    pub fn is_empty(&self) -> bool {
        self.slots.is_empty()
    }
}

/// Location coordinates in degrees, indexed by dense id.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LatLon {
    pub lat: f64,
    pub lon: f64,
}

impl LatLon {
    pub fn new(lat: f64, lon: f64) -> Self {
        Self { lat, lon }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    pub trajectories: Vec<Trajectory>,
    pub locations: Vec<LatLon>,
    /// Time-of-day slots per trajectory.
    pub slots: usize,
}

impl Dataset {
    pub fn num_locations(&self) -> usize {
        self.locations.len()
    }

    /// Checks trajectory lengths and location references.
    pub fn validate(&self) -> Result<(), DataError> {
        validate_trajectories(&self.trajectories, self.locations.len(), self.slots)
    }
}

pub fn validate_trajectories(
    trajectories: &[Trajectory],
    num_locations: usize,
    slots: usize,
) -> Result<(), DataError> {
    for (index, t) in trajectories.iter().enumerate() {
        if t.slots.len() != slots {
            return Err(DataError::BadTrajectory {
                index,
                reason: format!("length {} != {}", t.slots.len(), slots),
            });
        }
        if let Some(&bad) = t.slots.iter().find(|&&l| l >= num_locations) {
            return Err(DataError::BadTrajectory {
                index,
                reason: format!("location {bad} >= {num_locations}"),
            });
        }
    }
    Ok(())
}

/// Train/validation/test partition of a trajectory list.
#[derive(Debug, Clone, PartialEq)]
pub struct Split {
    pub train: Vec<Trajectory>,
    pub valid: Vec<Trajectory>,
    pub test: Vec<Trajectory>,
}

/// Shuffles with the `split` stream of `seed` and partitions by `ratios`.
///
/// Validation and test sizes are `floor(n * r / sum)` (at least one each);
/// the remainder goes to training.
pub fn split(
    trajectories: &[Trajectory],
    ratios: (u32, u32, u32),
    seed: u64,
) -> Result<Split, DataError> {
    let (a, b, c) = ratios;
    if a == 0 || b == 0 || c == 0 {
        return Err(DataError::BadRatios);
    }
    let n = trajectories.len();
    if n < 3 {
        return Err(DataError::TooFewForSplit {
            available: n,
            parts: 3,
        });
    }
    let total = u64::from(a + b + c);
    let part = |r: u32| ((n as u64 * u64::from(r)) / total).max(1) as usize;
    let n_valid = part(b);
    let n_test = part(c);
    let n_train = n - n_valid - n_test;

    let mut order: Vec<usize> = (0..n).collect();
    order.shuffle(&mut rng::stream(seed, "split", 0));
    let pick = |idx: &[usize]| idx.iter().map(|&i| trajectories[i].clone()).collect();
    Ok(Split {
        train: pick(&order[..n_train]),
        valid: pick(&order[n_train..n_train + n_valid]),
        test: pick(&order[n_train + n_valid..]),
    })
}
