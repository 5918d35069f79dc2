//! Concrete problems.

mod advdiff;
mod linear;
mod vdp;

pub use advdiff::AdvectionDiffusionModel;
pub use linear::LinearTestModel;
pub use vdp::{ControlledVdpModel, VanDerPolModel};
