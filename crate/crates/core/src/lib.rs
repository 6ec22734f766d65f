//! Adaptive disturbance suppression for control-affine plants with unknown
//! parameters and unknown input coefficients.
//!
//! The main controller adapts a single scalar gain `ρ` through a deadzone on
//! a control Lyapunov function (`ρ̇ = Γ(V − ε)⁺`). A σ-modification
//! adaptive law for the double integrator is included as a baseline, along
//! with a fixed-step RK4 simulator, pointwise Lyapunov certificate checks
//! and a TOML scenario format.
//!
//! Everything numeric is generic over [`scalar::Scalar`] (`f32` or `f64`);
//! the aliases below fix the precision.

#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod analysis;
pub mod baseline;
pub mod clf;
pub mod dads;
pub mod error;
pub mod report;
pub mod scalar;
pub mod scenario;
pub mod sim;
pub mod systems;

pub use error::{Error, Result};
pub use scalar::Scalar;

pub type PlantModel64 = systems::PlantModel<f64>;
pub type ClfBundle64 = clf::ClfBundle<f64>;
pub type DadsParams64 = dads::DadsParams<f64>;
pub type SigmaModParams64 = baseline::SigmaModParams<f64>;
pub type Scenario64 = sim::Scenario<f64>;
pub type Trajectory64 = sim::Trajectory<f64>;
pub type CertificateReport64 = analysis::CertificateReport<f64>;

pub type PlantModel32 = systems::PlantModel<f32>;
pub type ClfBundle32 = clf::ClfBundle<f32>;
pub type DadsParams32 = dads::DadsParams<f32>;
pub type SigmaModParams32 = baseline::SigmaModParams<f32>;
pub type Scenario32 = sim::Scenario<f32>;
pub type Trajectory32 = sim::Trajectory<f32>;
pub type CertificateReport32 = analysis::CertificateReport<f32>;
