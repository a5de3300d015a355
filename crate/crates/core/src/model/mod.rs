//! Shared domain types: boxes, certificate templates, supply rates and
//! subsystem classes.

mod class;
mod interval;
mod supply;
mod template;

pub use class::{SafetySpec, SubsystemClass, TransitionOracle};
pub use interval::IntervalBox;
pub use supply::{eval_supply, Matrix, SupplyRate};
pub use template::{eval_template, CoefficientVector, StcTemplate};
