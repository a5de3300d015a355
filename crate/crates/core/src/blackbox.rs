//! Built-in benchmark dynamics and interconnection operators for finite
//! surrogate networks.
//!
//! The rest of the crate only ever calls [`TransitionOracle::step`]; the
//! concrete maps here are stand-ins for systems whose equations are unknown.

use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::error::{invalid, Result};
use crate::model::{IntervalBox, SafetySpec, StcTemplate, SubsystemClass, TransitionOracle};

/// `x⁺ = A x + E d + c`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct AffineOracle {
    pub name: String,
    /// Row-major `n × n`.
    pub a: Vec<f64>,
    /// Row-major `n × p`.
    pub e: Vec<f64>,
    pub c: Vec<f64>,
}

impl AffineOracle {
    pub fn new(name: impl Into<String>, a: Vec<f64>, e: Vec<f64>, c: Vec<f64>) -> Result<Self> {
        let n = c.len();
        if n == 0 || a.len() != n * n || e.len() % n != 0 || e.is_empty() {
            return invalid("affine oracle: A must be n×n, E n×p and c of length n");
        }
        Ok(Self {
            name: name.into(),
            a,
            e,
            c,
        })
    }

    pub fn state_dim(&self) -> usize {
        self.c.len()
    }

    pub fn input_dim(&self) -> usize {
        self.e.len() / self.c.len()
    }
}

impl TransitionOracle for AffineOracle {
    fn step(&self, x: &[f64], d: &[f64]) -> Vec<f64> {
        let mut out = Vec::with_capacity(self.state_dim());
        self.step_into(x, d, &mut out);
        out
    }

    fn step_into(&self, x: &[f64], d: &[f64], out: &mut Vec<f64>) {
        let n = self.state_dim();
        let p = self.input_dim();
        out.clear();
        out.extend((0..n).map(|i| {
            let ax: f64 = (0..n).map(|j| self.a[i * n + j] * x[j]).sum();
            let ed: f64 = (0..p).map(|j| self.e[i * p + j] * d[j]).sum();
            ax + ed + self.c[i]
        }));
    }

    fn name(&self) -> &str {
        &self.name
    }
}

/// Room temperature: own inertia, heat exchange with the neighbours' mean
/// temperature `d`, and a cooler pulling towards 6 °C folded into the
/// constant.
pub fn room_step(x: f64, d: f64) -> f64 {
    0.8 * x + 0.05 * d + 0.9
}

/// Platoon vehicle with two coupled states and a braking bias.
pub fn platoon_step(x: [f64; 2], d: [f64; 2]) -> [f64; 2] {
    [
        0.9 * x[0] + 0.08 * x[1] + 0.01 * d[0] - 0.1,
        -0.04 * x[0] + 0.88 * x[1] + 0.01 * d[1] - 0.5,
    ]
}

pub fn room_oracle() -> AffineOracle {
    AffineOracle::new("room", vec![0.8], vec![0.05], vec![0.9]).unwrap()
}

pub fn platoon_oracle() -> AffineOracle {
    AffineOracle::new(
        "platoon",
        vec![0.9, 0.08, -0.04, 0.88],
        vec![0.01, 0.0, 0.0, 0.01],
        vec![-0.1, -0.5],
    )
    .unwrap()
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Benchmark {
    Room,
    Platoon,
}

impl Benchmark {
    pub fn oracle(self) -> AffineOracle {
        match self {
            Benchmark::Room => room_oracle(),
            Benchmark::Platoon => platoon_oracle(),
        }
    }

    /// The benchmark's sets and template with the default dynamics.
    pub fn class(self) -> SubsystemClass {
        self.class_with(Arc::new(self.oracle()))
    }

    pub fn class_with(self, oracle: Arc<dyn TransitionOracle>) -> SubsystemClass {
        let (id, state, init, unsafe_set, template) = match self {
            Benchmark::Room => (
                "room",
                vec![(10.0, 13.0)],
                vec![(10.0, 11.0)],
                vec![(12.0, 13.0)],
                StcTemplate::new(1, vec![vec![4], vec![2], vec![0]]).unwrap(),
            ),
            Benchmark::Platoon => (
                "platoon",
                vec![(0.8, 1.5), (0.8, 2.0)],
                vec![(0.8, 1.0), (0.8, 1.0)],
                vec![(0.8, 1.5), (1.5, 2.0)],
                StcTemplate::full_degree(2, 4).unwrap(),
            ),
        };
        let state_box = IntervalBox::from_bounds(&state).unwrap();
        // Internal inputs are neighbour states, so D = X.
        let input_box = state_box.clone();
        let safety = SafetySpec::new(
            IntervalBox::from_bounds(&init).unwrap(),
            IntervalBox::from_bounds(&unsafe_set).unwrap(),
        )
        .unwrap();
        SubsystemClass::new(id, state_box, input_box, safety, template, Some(oracle)).unwrap()
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum TopologyKind {
    /// `d_i = x_{i-1}`, closed into a directed ring.
    Cascade,
    /// `d_i = (x_{i-1} + x_{i+1}) / 2` with wraparound.
    Ring,
    /// `d_i` is the `w^{|i-j|}`-weighted mean of all other states.
    DenseDecay { weight: f64 },
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Topology {
    #[serde(flatten)]
    pub kind: TopologyKind,
    pub surrogate_size: usize,
}

impl Topology {
    pub fn new(kind: TopologyKind, surrogate_size: usize) -> Result<Self> {
        if surrogate_size < 2 {
            return invalid("surrogate network needs at least two subsystems");
        }
        if let TopologyKind::DenseDecay { weight } = kind {
            if !(weight > 0.0 && weight <= 1.0) {
                return invalid("dense-decay weight must lie in (0, 1]");
            }
        }
        Ok(Self {
            kind,
            surrogate_size,
        })
    }

    pub fn all(surrogate_size: usize) -> Vec<Topology> {
        [
            TopologyKind::Cascade,
            TopologyKind::Ring,
            TopologyKind::DenseDecay { weight: 0.5 },
        ]
        .into_iter()
        .map(|k| Topology::new(k, surrogate_size).unwrap())
        .collect()
    }
}

/// Internal inputs produced by the interconnection, optionally projected onto
/// per-subsystem input boxes. Returns the inputs and the number of subsystems
/// whose input had to be clamped.
pub fn internal_inputs(
    states: &[Vec<f64>],
    topology: &Topology,
    input_boxes: Option<&[&IntervalBox]>,
) -> Result<(Vec<Vec<f64>>, usize)> {
    let m = states.len();
    if m < 2 {
        return invalid("surrogate network needs at least two subsystems");
    }
    if m != topology.surrogate_size {
        return invalid(format!(
            "got {m} states for a surrogate of size {}",
            topology.surrogate_size
        ));
    }
    let dim = states[0].len();
    if states.iter().any(|s| s.len() != dim) {
        return invalid("internal_inputs needs states of a common dimension");
    }
    if let Some(boxes) = input_boxes {
        if boxes.len() != m || boxes.iter().any(|b| b.dim() != dim) {
            return invalid("input boxes do not match the surrogate");
        }
    }
    let mut out = Vec::with_capacity(m);
    for i in 0..m {
        let prev = (i + m - 1) % m;
        let next = (i + 1) % m;
        let d: Vec<f64> = match topology.kind {
            TopologyKind::Cascade => states[prev].clone(),
            TopologyKind::Ring => (0..dim)
                .map(|k| 0.5 * (states[prev][k] + states[next][k]))
                .collect(),
            TopologyKind::DenseDecay { weight } => {
                let mut acc = vec![0.0; dim];
                let mut total = 0.0;
                for (j, s) in states.iter().enumerate() {
                    if j == i {
                        continue;
                    }
                    let w = weight.powi(i.abs_diff(j) as i32);
                    total += w;
                    for (a, v) in acc.iter_mut().zip(s) {
                        *a += w * v;
                    }
                }
                acc.into_iter().map(|a| a / total).collect()
            }
        };
        out.push(d);
    }
    let mut clamped = 0;
    if let Some(boxes) = input_boxes {
        for (d, b) in out.iter_mut().zip(boxes) {
            if b.clamp(d) {
                clamped += 1;
            }
        }
    }
    Ok((out, clamped))
}

/// First occurrence of an event during a simulation.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Event {
    pub step: usize,
    pub subsystem: usize,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Trajectory {
    /// `states[k][i]` is subsystem `i` at step `k`; `k = 0` is the initial state.
    pub states: Vec<Vec<Vec<f64>>>,
    pub first_unsafe: Option<Event>,
    pub first_exit: Option<Event>,
    pub clamp_count: usize,
    /// `in_domain[k]` holds when every state at step `k` lies in its state box
    /// and no internal input was clamped for the transition `k → k+1`.
    pub in_domain: Vec<bool>,
}

impl Trajectory {
    pub fn entered_unsafe(&self) -> bool {
        self.first_unsafe.is_some()
    }
}

/// Iterate the network for `steps` transitions. Subsystem `i` uses
/// `classes[assignment[i]]`. Unsafe entries and state-box exits are flagged,
/// not treated as errors.
pub fn simulate_network(
    classes: &[SubsystemClass],
    assignment: &[usize],
    topology: &Topology,
    initial_states: &[Vec<f64>],
    steps: usize,
) -> Result<Trajectory> {
    let m = assignment.len();
    if initial_states.len() != m {
        return invalid("one initial state per subsystem is required");
    }
    let mut members = Vec::with_capacity(m);
    for (i, &c) in assignment.iter().enumerate() {
        let class = classes
            .get(c)
            .ok_or_else(|| crate::Error::InvalidInput(format!("unknown class index {c}")))?;
        if class.oracle().is_none() {
            return invalid(format!("class `{}` has no oracle to simulate", class.id));
        }
        if class.input_dim() != class.state_dim() {
            return invalid("surrogate simulation needs input dimension = state dimension");
        }
        if initial_states[i].len() != class.state_dim() {
            return invalid(format!("initial state {i} has the wrong dimension"));
        }
        members.push(class);
    }
    let input_boxes: Vec<&IntervalBox> = members.iter().map(|c| c.input_box()).collect();

    let mut traj = Trajectory {
        states: vec![initial_states.to_vec()],
        first_unsafe: None,
        first_exit: None,
        clamp_count: 0,
        in_domain: Vec::with_capacity(steps),
    };
    flag_events(&mut traj, &members, 0);

    for k in 0..steps {
        let current = &traj.states[k];
        let (inputs, clamped) = internal_inputs(current, topology, Some(&input_boxes))?;
        let inside = members
            .iter()
            .zip(current)
            .all(|(c, x)| c.state_box().contains(x));
        traj.in_domain.push(inside && clamped == 0);
        traj.clamp_count += clamped;
        let next: Vec<Vec<f64>> = members
            .iter()
            .zip(current.iter().zip(&inputs))
            .map(|(c, (x, d))| c.oracle().unwrap().step(x, d))
            .collect();
        traj.states.push(next);
        flag_events(&mut traj, &members, k + 1);
    }
    Ok(traj)
}

fn flag_events(traj: &mut Trajectory, members: &[&SubsystemClass], k: usize) {
    for (i, (c, x)) in members.iter().zip(&traj.states[k]).enumerate() {
        if traj.first_unsafe.is_none() && c.safety().unsafe_set().contains(x) {
            traj.first_unsafe = Some(Event { step: k, subsystem: i });
        }
        if traj.first_exit.is_none() && !c.state_box().contains(x) {
            traj.first_exit = Some(Event { step: k, subsystem: i });
        }
    }
}

/// Outcome of the benchmark sanity simulation.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ValidationReport {
    pub trajectories: usize,
    pub unsafe_entries: usize,
    pub state_box_exits: usize,
    pub clamp_count: usize,
}

impl ValidationReport {
    pub fn passed(&self) -> bool {
        self.unsafe_entries == 0
    }
}

/// Initial states for trajectory `t` of a surrogate: node `i` starts at grid
/// point `(t + i) mod G`, so every node sees a different start.
pub fn staggered_initial_states(grid: &[Vec<f64>], trajectory: usize, size: usize) -> Vec<Vec<f64>> {
    (0..size)
        .map(|i| grid[(trajectory + i) % grid.len()].clone())
        .collect()
}

/// Simulate a homogeneous surrogate from every point of a `per_dim` grid of
/// the initial box and count unsafe entries, state-box exits and clamps.
pub fn validate_benchmark(
    class: &SubsystemClass,
    topology: &Topology,
    per_dim: usize,
    steps: usize,
) -> Result<ValidationReport> {
    let counts = vec![per_dim; class.state_dim()];
    let grid = crate::sampling::grid_samples(class.safety().initial(), &counts)?;
    let classes = std::slice::from_ref(class);
    let assignment = vec![0; topology.surrogate_size];
    let mut report = ValidationReport {
        trajectories: grid.len(),
        unsafe_entries: 0,
        state_box_exits: 0,
        clamp_count: 0,
    };
    for t in 0..grid.len() {
        let init = staggered_initial_states(&grid, t, topology.surrogate_size);
        let traj = simulate_network(classes, &assignment, topology, &init, steps)?;
        report.unsafe_entries += usize::from(traj.entered_unsafe());
        report.state_box_exits += usize::from(traj.first_exit.is_some());
        report.clamp_count += traj.clamp_count;
    }
    Ok(report)
}
