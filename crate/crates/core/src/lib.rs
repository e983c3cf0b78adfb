//! Simulation and stability certificates for linear sampled-data control
//! loops whose communication channel is interrupted by denial-of-service
//! (DoS) attacks.
//!
//! The crate is organised bottom-up:
//!
//! * [`matrix`]: dense kernel (exponential, norms, Lyapunov, envelopes);
//! * [`plant`]: the LTI process with held state feedback;
//! * [`dos`]: DoS signals, their measure and budget checks, generators;
//! * [`trigger`]: the resilient update policies and the Riccati bound;
//! * [`guarantee`]: GES constants, sampling robustness, Gronwall bound;
//! * [`sim`]: the hybrid event loop and trace verifiers;
//! * [`scenario`]: the text configuration shared by the CLI.

#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod dos;
pub mod error;
pub mod guarantee;
pub mod matrix;
pub mod plant;
pub mod scenario;
pub mod sim;
pub mod trigger;

pub use dos::{DosBudget, DosInterval, DosSequence};
pub use error::{Error, Result};
pub use guarantee::{LyapunovConstants, PlantConstants, Report, SamplingRobustness, TrajectoryConstants};
pub use matrix::{DecayEnvelope, GrowthEnvelope, RealMatrix, Vector};
pub use plant::{InputMode, LoopState, LtiPlant};
pub use sim::{SimConfig, Trace};
pub use trigger::{LogicKind, TriggerConfig, Varphi};
