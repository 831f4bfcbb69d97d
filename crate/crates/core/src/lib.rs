//! Graph-augmented adversarial simulation of daily human mobility.
//!
//! The pipeline runs in five stages:
//!
//! 1. [`mobdata`] turns raw check-ins into fixed-length hourly trajectories
//!    (or synthesizes planted-pattern datasets).
//! 2. [`stgraphs`] builds the spatial-distance, temporal-transition and
//!    spatiotemporal location graphs from the training split.
//! 3. [`generator`] embeds locations with multi-channel graph attention and
//!    decodes trajectories with a GRU that has an exploration head and a
//!    dwell head.
//! 4. [`trainer`] pretrains both networks by maximum likelihood and then
//!    trains the generator against the [`discriminator`] with REINFORCE.
//! 5. [`metrics`] scores generated trajectories against real ones with six
//!    Jensen-Shannon divergences and provides a Markov baseline.
//!
//! [`tensor`] holds the small dense-array toolkit with hand-written
//! gradients that the two networks are built from.

pub mod discriminator;
pub mod generator;
pub mod gradient_suite;
pub mod metrics;
pub mod mobdata;
pub mod rng;
pub mod stgraphs;
pub mod tensor;
pub mod trainer;

pub use discriminator::{Discriminator, DiscriminatorConfig};
pub use generator::{Generator, GeneratorConfig};
pub use metrics::{evaluate, MetricReport};
pub use mobdata::{Dataset, Trajectory, VisitRecord};
pub use stgraphs::{Channel, EdgeMode, LocationGraph};
pub use tensor::{Grads, ParamId, ParamSet, Tensor};
pub use trainer::TrainConfig;

/// Number of hourly slots in one daily trajectory.
pub const SLOTS_PER_DAY: usize = 24;
