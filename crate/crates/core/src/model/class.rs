use std::fmt;
use std::sync::Arc;

use serde::{Deserialize, Serialize};

use super::{IntervalBox, StcTemplate};
use crate::error::{invalid, Result};

/// Initial and unsafe sets of one subsystem class.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "RawSafety", into = "RawSafety")]
pub struct SafetySpec {
    initial: IntervalBox,
    unsafe_set: IntervalBox,
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawSafety {
    initial: IntervalBox,
    #[serde(rename = "unsafe")]
    unsafe_set: IntervalBox,
}

impl TryFrom<RawSafety> for SafetySpec {
    type Error = crate::Error;
    fn try_from(r: RawSafety) -> Result<Self> {
        Self::new(r.initial, r.unsafe_set)
    }
}

impl From<SafetySpec> for RawSafety {
    fn from(s: SafetySpec) -> Self {
        Self {
            initial: s.initial,
            unsafe_set: s.unsafe_set,
        }
    }
}

impl SafetySpec {
    pub fn new(initial: IntervalBox, unsafe_set: IntervalBox) -> Result<Self> {
        if initial.dim() != unsafe_set.dim() {
            return invalid("initial and unsafe boxes have different dimensions");
        }
        if initial.intersects(&unsafe_set) {
            return invalid("initial and unsafe boxes overlap");
        }
        Ok(Self {
            initial,
            unsafe_set,
        })
    }

    pub fn initial(&self) -> &IntervalBox {
        &self.initial
    }

    pub fn unsafe_set(&self) -> &IntervalBox {
        &self.unsafe_set
    }
}

/// One-step map `x⁺ = f(x, d)` queried as a black box.
///
/// Implementations must be deterministic and return a vector of the state
/// dimension.
pub trait TransitionOracle: Send + Sync {
    fn step(&self, x: &[f64], d: &[f64]) -> Vec<f64>;

    /// Like [`step`](Self::step) but writes into `out`, which implementations
    /// may use to avoid allocating.
    fn step_into(&self, x: &[f64], d: &[f64], out: &mut Vec<f64>) {
        *out = self.step(x, d);
    }

    fn name(&self) -> &str {
        "oracle"
    }
}

/// A family of identical subsystems sharing sets, template, and dynamics.
#[derive(Clone)]
pub struct SubsystemClass {
    pub id: String,
    state_box: IntervalBox,
    input_box: IntervalBox,
    safety: SafetySpec,
    template: StcTemplate,
    oracle: Option<Arc<dyn TransitionOracle>>,
}

impl fmt::Debug for SubsystemClass {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("SubsystemClass")
            .field("id", &self.id)
            .field("state_box", &self.state_box)
            .field("input_box", &self.input_box)
            .field("safety", &self.safety)
            .field("template", &self.template)
            .field("oracle", &self.oracle.as_ref().map(|o| o.name().to_owned()))
            .finish()
    }
}

impl SubsystemClass {
    pub fn new(
        id: impl Into<String>,
        state_box: IntervalBox,
        input_box: IntervalBox,
        safety: SafetySpec,
        template: StcTemplate,
        oracle: Option<Arc<dyn TransitionOracle>>,
    ) -> Result<Self> {
        let id = id.into();
        let n = state_box.dim();
        if template.state_dim() != n {
            return invalid(format!(
                "class `{id}`: template dimension {} != state dimension {n}",
                template.state_dim()
            ));
        }
        if safety.initial().dim() != n {
            return invalid(format!("class `{id}`: safety boxes do not match the state dimension"));
        }
        if !state_box.contains_box(safety.initial()) {
            return invalid(format!("class `{id}`: initial box is not inside the state box"));
        }
        if !state_box.contains_box(safety.unsafe_set()) {
            return invalid(format!("class `{id}`: unsafe box is not inside the state box"));
        }
        Ok(Self {
            id,
            state_box,
            input_box,
            safety,
            template,
            oracle,
        })
    }

    pub fn state_dim(&self) -> usize {
        self.state_box.dim()
    }

    pub fn input_dim(&self) -> usize {
        self.input_box.dim()
    }

    pub fn state_box(&self) -> &IntervalBox {
        &self.state_box
    }

    pub fn input_box(&self) -> &IntervalBox {
        &self.input_box
    }

    pub fn safety(&self) -> &SafetySpec {
        &self.safety
    }

    pub fn template(&self) -> &StcTemplate {
        &self.template
    }

    pub fn oracle(&self) -> Option<&Arc<dyn TransitionOracle>> {
        self.oracle.as_ref()
    }

    /// Joint box `X × D` over which samples and decrease conditions live.
    pub fn joint_box(&self) -> IntervalBox {
        self.state_box.product(&self.input_box)
    }

    pub fn without_oracle(&self) -> Self {
        Self {
            oracle: None,
            ..self.clone()
        }
    }
}
