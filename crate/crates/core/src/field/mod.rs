//! The three additive field components.

pub mod maf;
pub mod rpf;
pub mod vrf;

pub use maf::{AgentMaf, MafParams, SeverityMode, TypeFactors};
pub use rpf::{RoadField, RpfCache, RpfParams};
pub use vrf::{VrfParams, VruKernel, VruMotion};
