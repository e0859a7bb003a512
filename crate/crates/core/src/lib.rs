//! Deterministic simulation and protocol library for federated learning
//! across heterogeneous HPC facilities.
//!
//! The crate has three layers:
//!
//! * a small softmax-regression proxy task ([`task`], [`trainer`]) standing
//!   in for the real workload, cheap enough to train inside the simulator;
//! * server-side aggregation strategies ([`algorithms`]) covering the
//!   synchronous barrier, two asynchronous variants, and a speed-aware group
//!   scheduler, all expressed as pure state transitions;
//! * facility cost models and the event engine ([`facility`], [`clock`],
//!   [`orchestrator`]) that replay queue waits, training time, and transfers
//!   on a simulated clock.
//!
//! Everything is `no_std` + `alloc` and deterministic: runs are reproducible
//! bit for bit from a scenario config and a seed.

#![no_std]

extern crate alloc;
#[cfg(test)]
extern crate std;

pub mod algorithms;
pub mod clock;
pub mod error;
pub mod facility;
pub mod orchestrator;
pub mod params;
pub mod seed;
pub mod task;
pub mod trainer;

pub use algorithms::{
    AlgorithmConfig, AlgorithmKind, ClientUpdate, GlobalModel, ServerState,
};
pub use clock::{EventKind, SimClock, SimEvent};
pub use error::Error;
pub use facility::{FacilityProfile, QueueModel};
pub use orchestrator::{
    run_scenario, summarize, MetricsLog, RecordEvent, RoundRecord, ScenarioConfig, Summary,
    TaskSpec,
};
pub use params::ParamVector;
pub use task::{ClientDataset, SyntheticTask};
pub use trainer::TrainerConfig;
