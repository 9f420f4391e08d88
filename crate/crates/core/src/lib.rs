//! Desk-scale federated learning simulator.
//!
//! The crate implements four federated methods over a small dense-MLP engine:
//!
//! - `fedavg`: sample-count-weighted parameter averaging.
//! - `fedprox`: FedAvg plus a proximal pull toward the round-start model.
//! - `feddf`: FedAvg followed by server-side ensemble distillation on a
//!   public dataset.
//! - `fedproj`: client-side gradient projection against the gradient of a
//!   memory loss (KL to server ensemble logits on a small public memory
//!   buffer), combined with server-side distillation and an optional
//!   weight-divergence regularizer.
//!
//! Everything is double precision and deterministic: every random stream is
//! derived from `(master_seed, round, client_id)` so results are independent
//! of worker scheduling.

pub mod client;
pub mod data;
pub mod error;
pub mod nn;
pub mod oracle;
pub mod orchestrator;
pub mod rng;
pub mod server;

pub use client::{ClientUpdate, LocalConfig, LocalMethod, MemoryBuffer};
pub use data::{ClientPartition, Dataset, PcaTransform};
pub use error::{Error, Result};
pub use nn::{Logits, Mlp, MlpShape, OptimizerState, ParamVector};
pub use orchestrator::{
    ExperimentConfig, ExperimentMethod, ExperimentOutcome, RoundMetrics,
};
pub use server::{DistillConfig, ServerState};
