//! Pipeline configuration (TOML).

use std::path::{Path, PathBuf};
use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::blackbox::{AffineOracle, Benchmark, Topology, TopologyKind};
use crate::error::{Error, Result};
use crate::lipschitz::LipschitzConfig;
use crate::model::{IntervalBox, SafetySpec, StcTemplate, SubsystemClass, TransitionOracle};
use crate::scp::ScpOptions;

pub const CONFIG_FORMAT_VERSION: u32 = 1;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum TemplateSpec {
    Degree { max_degree: u32 },
    Terms { terms: Vec<Vec<u32>> },
}

/// Affine dynamics `x⁺ = A x + E d + c`, row-major.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AffineSpec {
    pub a: Vec<f64>,
    pub e: Vec<f64>,
    pub c: Vec<f64>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ClassConfig {
    pub id: String,
    /// Built-in benchmark supplying default sets, template and dynamics.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub benchmark: Option<Benchmark>,
    /// CSV of sample pairs used instead of an oracle.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub data: Option<PathBuf>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub dynamics: Option<AffineSpec>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub state_box: Option<IntervalBox>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub input_box: Option<IntervalBox>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub initial: Option<IntervalBox>,
    #[serde(default, rename = "unsafe", skip_serializing_if = "Option::is_none")]
    pub unsafe_set: Option<IntervalBox>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub template: Option<TemplateSpec>,
    /// Grid points per state dimension.
    #[serde(default)]
    pub state_counts: Vec<usize>,
    /// Grid points per input dimension.
    #[serde(default)]
    pub input_counts: Vec<usize>,
    /// Probe grid per joint dimension for the dispersion of external data.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub probe_counts: Option<Vec<usize>>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ScpSection {
    pub coeff_bound: f64,
    pub gap: f64,
    pub feasibility_tol: f64,
    pub beta_floor: f64,
    /// Drop the lower bound on beta.
    pub free_beta: bool,
    /// Also write each class's LP in CPLEX LP format.
    pub export_lp: bool,
}

impl Default for ScpSection {
    fn default() -> Self {
        let o = ScpOptions::default();
        Self {
            coeff_bound: o.coeff_bound,
            gap: o.gap,
            feasibility_tol: o.feasibility_tol,
            beta_floor: o.beta_floor.unwrap_or(0.0),
            free_beta: false,
            export_lp: false,
        }
    }
}

impl ScpSection {
    pub fn options(&self) -> ScpOptions {
        ScpOptions {
            coeff_bound: self.coeff_bound,
            gap: self.gap,
            feasibility_tol: self.feasibility_tol,
            beta_floor: (!self.free_beta).then_some(self.beta_floor),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RefineConfig {
    /// Extra attempts with finer grids after a failed one; 0 disables.
    pub max_retries: usize,
    /// Grid spacing is divided by this factor on each retry.
    pub factor: usize,
}

impl Default for RefineConfig {
    fn default() -> Self {
        Self {
            max_retries: 2,
            factor: 2,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SimulationConfig {
    pub surrogate_size: usize,
    pub steps: usize,
    /// Initial-box grid points per dimension for phase portraits.
    pub per_dim: usize,
    pub topologies: Vec<String>,
    pub dense_weight: f64,
}

impl Default for SimulationConfig {
    fn default() -> Self {
        Self {
            surrogate_size: 10,
            steps: 100,
            per_dim: 5,
            topologies: vec!["cascade".into(), "ring".into(), "dense-decay".into()],
            dense_weight: 0.5,
        }
    }
}

impl SimulationConfig {
    pub fn topologies(&self) -> Result<Vec<Topology>> {
        self.topologies
            .iter()
            .map(|name| {
                let kind = match name.as_str() {
                    "cascade" => TopologyKind::Cascade,
                    "ring" => TopologyKind::Ring,
                    "dense-decay" => TopologyKind::DenseDecay {
                        weight: self.dense_weight,
                    },
                    other => return Err(Error::Config(format!("unknown topology `{other}`"))),
                };
                Topology::new(kind, self.surrogate_size)
            })
            .collect()
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct VerifyConfig {
    /// Verification grids divide the sampling spacing by this factor.
    pub factor: usize,
    /// Tolerance on the per-step increase of the network certificate.
    pub decrease_tol: f64,
}

impl Default for VerifyConfig {
    fn default() -> Self {
        Self {
            factor: 10,
            decrease_tol: 1e-6,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PipelineConfig {
    pub format_version: u32,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub output_dir: Option<PathBuf>,
    #[serde(rename = "class")]
    pub classes: Vec<ClassConfig>,
    #[serde(default)]
    pub scp: ScpSection,
    #[serde(default)]
    pub lipschitz: LipschitzConfig,
    #[serde(default)]
    pub refine: RefineConfig,
    #[serde(default)]
    pub simulation: SimulationConfig,
    #[serde(default)]
    pub verify: VerifyConfig,
}

/// A class resolved from its config entry.
#[derive(Clone, Debug)]
pub struct ResolvedClass {
    pub class: SubsystemClass,
    /// Absolute path of external sample data, if any.
    pub data: Option<PathBuf>,
    pub state_counts: Vec<usize>,
    pub input_counts: Vec<usize>,
    pub probe_counts: Vec<usize>,
}

impl PipelineConfig {
    pub fn from_toml(text: &str) -> Result<Self> {
        let value: toml::Table = text.parse().map_err(|e: toml::de::Error| Error::Config(e.to_string()))?;
        match value.get("format_version").and_then(|v| v.as_integer()) {
            Some(v) if v == CONFIG_FORMAT_VERSION as i64 => {}
            Some(v) => {
                return Err(Error::Version {
                    found: u32::try_from(v).unwrap_or(u32::MAX),
                    expected: CONFIG_FORMAT_VERSION,
                })
            }
            None => return Err(Error::Config("missing format_version".into())),
        }
        toml::from_str(text).map_err(|e| Error::Config(e.to_string()))
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)?;
        let mut cfg = Self::from_toml(&text).map_err(|e| match e {
            Error::Config(message) => Error::Parse {
                path: path.to_path_buf(),
                message,
            },
            other => other,
        })?;
        // Relative data paths are relative to the config file.
        let base = path.parent().unwrap_or(Path::new("."));
        for c in &mut cfg.classes {
            if let Some(d) = &c.data {
                if d.is_relative() {
                    c.data = Some(base.join(d));
                }
            }
        }
        Ok(cfg)
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("config serialises")
    }

    /// Check everything that can be checked without computing and build the
    /// classes.
    pub fn resolve(&self) -> Result<Vec<ResolvedClass>> {
        if self.classes.is_empty() {
            return Err(Error::Config("at least one [[class]] is required".into()));
        }
        self.scp.options().validate()?;
        self.lipschitz.validate()?;
        if self.refine.factor < 2 && self.refine.max_retries > 0 {
            return Err(Error::Config("refine.factor must be at least 2".into()));
        }
        if self.verify.factor == 0 {
            return Err(Error::Config("verify.factor must be positive".into()));
        }
        if self.simulation.per_dim == 0 {
            return Err(Error::Config("simulation.per_dim must be positive".into()));
        }
        self.simulation.topologies()?;
        let mut seen = std::collections::BTreeSet::new();
        self.classes
            .iter()
            .map(|c| {
                if !seen.insert(c.id.clone()) {
                    return Err(Error::Config(format!("duplicate class id `{}`", c.id)));
                }
                resolve_class(c)
            })
            .collect()
    }
}

fn resolve_class(c: &ClassConfig) -> Result<ResolvedClass> {
    let cfg_err = |m: String| Error::Config(format!("class `{}`: {m}", c.id));
    if c.benchmark.is_some() && c.data.is_some() {
        return Err(cfg_err("set either `benchmark` or `data`, not both".into()));
    }
    if c.dynamics.is_some() && c.data.is_some() {
        return Err(cfg_err("`dynamics` cannot be combined with `data`".into()));
    }
    let base = c.benchmark.map(|b| b.class());
    let pick = |own: &Option<IntervalBox>, what: &str, from: Option<IntervalBox>| {
        own.clone()
            .or(from)
            .ok_or_else(|| cfg_err(format!("`{what}` is required without a benchmark")))
    };
    let state_box = pick(&c.state_box, "state_box", base.as_ref().map(|b| b.state_box().clone()))?;
    let input_box = pick(&c.input_box, "input_box", base.as_ref().map(|b| b.input_box().clone()))?;
    let initial = pick(&c.initial, "initial", base.as_ref().map(|b| b.safety().initial().clone()))?;
    let unsafe_set = pick(&c.unsafe_set, "unsafe", base.as_ref().map(|b| b.safety().unsafe_set().clone()))?;
    let n = state_box.dim();
    let template = match &c.template {
        Some(TemplateSpec::Degree { max_degree }) => StcTemplate::full_degree(n, *max_degree)?,
        Some(TemplateSpec::Terms { terms }) => StcTemplate::new(n, terms.clone())?,
        None => base
            .as_ref()
            .map(|b| b.template().clone())
            .ok_or_else(|| cfg_err("`template` is required without a benchmark".into()))?,
    };
    let oracle: Option<Arc<dyn TransitionOracle>> = match (&c.dynamics, c.benchmark) {
        (Some(a), _) => Some(Arc::new(AffineOracle::new(c.id.clone(), a.a.clone(), a.e.clone(), a.c.clone())?)),
        (None, Some(b)) => Some(Arc::new(b.oracle())),
        (None, None) if c.data.is_some() => None,
        (None, None) => return Err(cfg_err("needs `benchmark`, `dynamics` or `data`".into())),
    };
    if let Some(o) = &oracle {
        let probe = o.step(&state_box.midpoint(), &input_box.midpoint());
        if probe.len() != n {
            return Err(cfg_err("dynamics output dimension does not match the state box".into()));
        }
    }
    let safety = SafetySpec::new(initial, unsafe_set).map_err(|e| cfg_err(e.to_string()))?;
    let class = SubsystemClass::new(c.id.clone(), state_box, input_box, safety, template, oracle)
        .map_err(|e| cfg_err(e.to_string()))?;
    let p = class.input_dim();
    if c.data.is_none() {
        if c.state_counts.len() != n || c.input_counts.len() != p {
            return Err(cfg_err(format!("state_counts needs {n} entries and input_counts {p}")));
        }
        if c.state_counts.iter().chain(&c.input_counts).any(|&k| k == 0) {
            return Err(cfg_err("grid counts must be positive".into()));
        }
    }
    let probe_counts = c.probe_counts.clone().unwrap_or_else(|| vec![21; n + p]);
    if probe_counts.len() != n + p || probe_counts.contains(&0) {
        return Err(cfg_err(format!("probe_counts needs {} positive entries", n + p)));
    }
    Ok(ResolvedClass {
        class,
        data: c.data.clone(),
        state_counts: c.state_counts.clone(),
        input_counts: c.input_counts.clone(),
        probe_counts,
    })
}
