//! Dense-grid checks of a solved certificate and figure data.

use std::io::Write;
use std::path::Path;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::blackbox::{simulate_network, staggered_initial_states, Topology, Trajectory};
use crate::compose::{eval_network_certificate, NetworkCertificate};
use crate::error::{invalid, Error, Result};
use crate::model::SubsystemClass;
use crate::sampling::{dispersion_of_grid, grid_samples};
use crate::scp::ScpSolution;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LevelSetReport {
    pub sigma: f64,
    pub phi: f64,
    pub initial_max: f64,
    pub initial_argmax: Vec<f64>,
    pub unsafe_min: f64,
    pub unsafe_argmin: Vec<f64>,
    pub initial_ok: bool,
    pub unsafe_ok: bool,
    pub gap_ok: bool,
}

impl LevelSetReport {
    pub fn passed(&self) -> bool {
        self.initial_ok && self.unsafe_ok && self.gap_ok
    }
}

fn check_solution_dims(class: &SubsystemClass, solution: &ScpSolution) -> Result<()> {
    class.template().check_coeffs(&solution.coeffs)
}

/// Extremum of `f` over `points`; ties keep the first point in grid order.
fn extremum(points: &[Vec<f64>], f: impl Fn(&[f64]) -> f64 + Sync, want_max: bool) -> (f64, Vec<f64>) {
    let values: Vec<f64> = points.par_iter().map(|p| f(p)).collect();
    let mut best = 0;
    for (i, v) in values.iter().enumerate() {
        let better = if want_max { *v > values[best] } else { *v < values[best] };
        if better {
            best = i;
        }
    }
    (values[best], points[best].clone())
}

/// Maximum of `B` over the initial box against `sigma`, minimum over the
/// unsafe box against `phi`. `counts` is per state dimension.
pub fn check_level_sets(class: &SubsystemClass, solution: &ScpSolution, counts: &[usize]) -> Result<LevelSetReport> {
    check_solution_dims(class, solution)?;
    let t = class.template();
    let th = solution.coeffs.as_slice();
    let b = |x: &[f64]| t.eval_unchecked(th, x);
    let init = grid_samples(class.safety().initial(), counts)?;
    let unsafe_pts = grid_samples(class.safety().unsafe_set(), counts)?;
    let (initial_max, initial_argmax) = extremum(&init, b, true);
    let (unsafe_min, unsafe_argmin) = extremum(&unsafe_pts, b, false);
    Ok(LevelSetReport {
        sigma: solution.sigma,
        phi: solution.phi,
        initial_ok: initial_max <= solution.sigma,
        unsafe_ok: unsafe_min >= solution.phi,
        gap_ok: solution.sigma < solution.phi,
        initial_max,
        initial_argmax,
        unsafe_min,
        unsafe_argmin,
    })
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct HeatCell {
    pub x: Vec<f64>,
    pub d: Vec<f64>,
    pub value: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct HeatSummary {
    pub cells: usize,
    pub max: f64,
    pub argmax: (Vec<f64>, Vec<f64>),
    /// Covering radius of the heatmap grid.
    pub grid_theta: f64,
    /// `eta + L2 * grid_theta`, when L2 was supplied.
    pub diagnostic_bound: Option<f64>,
}

impl HeatSummary {
    pub fn passed(&self) -> bool {
        self.max <= 0.0
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Heatmap {
    pub summary: HeatSummary,
    pub cells: Vec<HeatCell>,
}

impl Heatmap {
    pub fn passed(&self) -> bool {
        self.summary.passed()
    }
}

struct HeatGrid<'a> {
    class: &'a SubsystemClass,
    solution: &'a ScpSolution,
    oracle: &'a dyn crate::model::TransitionOracle,
    xs: Vec<Vec<f64>>,
    ds: Vec<Vec<f64>>,
    grid_theta: f64,
}

impl<'a> HeatGrid<'a> {
    fn new(
        class: &'a SubsystemClass,
        solution: &'a ScpSolution,
        state_counts: &[usize],
        input_counts: &[usize],
    ) -> Result<Self> {
        check_solution_dims(class, solution)?;
        let oracle = class.oracle().ok_or_else(|| Error::MissingInput {
            class: class.id.clone(),
            what: "transition oracle",
        })?;
        let mut counts = state_counts.to_vec();
        counts.extend_from_slice(input_counts);
        Ok(Self {
            class,
            solution,
            oracle: oracle.as_ref(),
            xs: grid_samples(class.state_box(), state_counts)?,
            ds: grid_samples(class.input_box(), input_counts)?,
            grid_theta: dispersion_of_grid(&class.joint_box(), &counts)?,
        })
    }

    /// Values for one state grid point, in input grid order.
    fn row<'b>(&'b self, x: &'b [f64]) -> impl Iterator<Item = f64> + 'b {
        let t = self.class.template();
        let th = self.solution.coeffs.as_slice();
        let bx = t.eval_unchecked(th, x);
        let mut next = Vec::with_capacity(x.len());
        self.ds.iter().map(move |d| {
            self.oracle.step_into(x, d, &mut next);
            t.eval_unchecked(th, &next) - bx - self.solution.supply.eval_unchecked(d, x)
        })
    }

    fn summary(&self, best: (f64, usize, usize), l2: Option<f64>) -> HeatSummary {
        HeatSummary {
            cells: self.xs.len() * self.ds.len(),
            max: best.0,
            argmax: (self.xs[best.1].clone(), self.ds[best.2].clone()),
            grid_theta: self.grid_theta,
            diagnostic_bound: l2.map(|l| self.solution.eta + l * self.grid_theta),
        }
    }
}

/// Largest `(value, i, j)`, first in grid order on ties.
fn better(a: (f64, usize, usize), b: (f64, usize, usize)) -> (f64, usize, usize) {
    if b.0 > a.0 || (b.0 == a.0 && (b.1, b.2) < (a.1, a.2)) {
        b
    } else {
        a
    }
}

/// `B(f(x,d)) - B(x) - s(d,x)` over a grid of the joint box, every cell kept.
pub fn decrease_heatmap(
    class: &SubsystemClass,
    solution: &ScpSolution,
    state_counts: &[usize],
    input_counts: &[usize],
    l2: Option<f64>,
) -> Result<Heatmap> {
    let grid = HeatGrid::new(class, solution, state_counts, input_counts)?;
    let cells: Vec<HeatCell> = grid
        .xs
        .par_iter()
        .flat_map_iter(|x| {
            grid.row(x).zip(&grid.ds).map(move |(value, d)| HeatCell {
                x: x.clone(),
                d: d.clone(),
                value,
            })
        })
        .collect();
    let nd = grid.ds.len();
    let best = cells
        .iter()
        .enumerate()
        .fold((f64::NEG_INFINITY, 0, 0), |acc, (k, c)| better(acc, (c.value, k / nd, k % nd)));
    Ok(Heatmap {
        summary: grid.summary(best, l2),
        cells,
    })
}

/// Same values as [`decrease_heatmap`] but only the maximum is kept, for
/// grids too large to hold in memory.
pub fn decrease_summary(
    class: &SubsystemClass,
    solution: &ScpSolution,
    state_counts: &[usize],
    input_counts: &[usize],
    l2: Option<f64>,
) -> Result<HeatSummary> {
    let grid = HeatGrid::new(class, solution, state_counts, input_counts)?;
    let best = grid
        .xs
        .par_iter()
        .enumerate()
        .map(|(i, x)| {
            grid.row(x)
                .enumerate()
                .fold((f64::NEG_INFINITY, i, 0), |acc, (j, v)| better(acc, (v, i, j)))
        })
        .reduce(|| (f64::NEG_INFINITY, usize::MAX, usize::MAX), better);
    Ok(grid.summary(best, l2))
}

impl Heatmap {
    pub fn write_csv<W: Write>(&self, writer: W) -> Result<()> {
        let (n, p) = self
            .cells
            .first()
            .map_or((0, 0), |c| (c.x.len(), c.d.len()));
        let mut w = csv::Writer::from_writer(writer);
        let mut header: Vec<String> = (1..=n).map(|k| format!("x{k}")).collect();
        header.extend((1..=p).map(|k| format!("d{k}")));
        header.push("value".into());
        w.write_record(&header)?;
        for c in &self.cells {
            let rec: Vec<String> = c
                .x
                .iter()
                .chain(&c.d)
                .chain(std::iter::once(&c.value))
                .map(|v| v.to_string())
                .collect();
            w.write_record(&rec)?;
        }
        w.flush()?;
        Ok(())
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Surface {
    pub points: Vec<Vec<f64>>,
    pub values: Vec<f64>,
    pub sigma: f64,
    pub phi: f64,
}

/// `B` over a grid of the state box.
pub fn surface_data(class: &SubsystemClass, solution: &ScpSolution, counts: &[usize]) -> Result<Surface> {
    check_solution_dims(class, solution)?;
    let points = grid_samples(class.state_box(), counts)?;
    let t = class.template();
    let th = solution.coeffs.as_slice();
    let values = points.par_iter().map(|x| t.eval_unchecked(th, x)).collect();
    Ok(Surface {
        points,
        values,
        sigma: solution.sigma,
        phi: solution.phi,
    })
}

impl Surface {
    pub fn write_csv<W: Write>(&self, writer: W) -> Result<()> {
        let n = self.points.first().map_or(0, Vec::len);
        let mut w = csv::Writer::from_writer(writer);
        let mut header: Vec<String> = (1..=n).map(|k| format!("x{k}")).collect();
        header.push("B".into());
        w.write_record(&header)?;
        for (x, v) in self.points.iter().zip(&self.values) {
            let rec: Vec<String> = x.iter().chain(std::iter::once(v)).map(|v| v.to_string()).collect();
            w.write_record(&rec)?;
        }
        w.flush()?;
        Ok(())
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PortraitConfig {
    /// Grid points per dimension of the initial box.
    pub per_dim: usize,
    pub steps: usize,
}

impl Default for PortraitConfig {
    fn default() -> Self {
        Self { per_dim: 5, steps: 100 }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PhasePortrait {
    pub trajectories: Vec<Trajectory>,
    pub entered_unsafe: Vec<bool>,
}

impl PhasePortrait {
    pub fn unsafe_entries(&self) -> usize {
        self.entered_unsafe.iter().filter(|b| **b).count()
    }

    pub fn write_csv<W: Write>(&self, writer: W) -> Result<()> {
        let n = self
            .trajectories
            .first()
            .and_then(|t| t.states.first())
            .and_then(|s| s.first())
            .map_or(0, Vec::len);
        let mut w = csv::Writer::from_writer(writer);
        let mut header: Vec<String> = vec!["trajectory".into(), "step".into(), "subsystem".into()];
        header.extend((1..=n).map(|k| format!("x{k}")));
        w.write_record(&header)?;
        for (t, traj) in self.trajectories.iter().enumerate() {
            for (k, states) in traj.states.iter().enumerate() {
                for (i, x) in states.iter().enumerate() {
                    let mut rec = vec![t.to_string(), k.to_string(), i.to_string()];
                    rec.extend(x.iter().map(|v| v.to_string()));
                    w.write_record(&rec)?;
                }
            }
        }
        w.flush()?;
        Ok(())
    }
}

/// Simulate a homogeneous surrogate of `class` from each point of a grid
/// over the initial box.
pub fn phase_portrait(class: &SubsystemClass, topology: &Topology, config: &PortraitConfig) -> Result<PhasePortrait> {
    if config.per_dim == 0 {
        return invalid("per_dim must be at least 1");
    }
    let counts = vec![config.per_dim; class.state_dim()];
    let grid = grid_samples(class.safety().initial(), &counts)?;
    let classes = std::slice::from_ref(class);
    let assignment = vec![0; topology.surrogate_size];
    let trajectories: Vec<Trajectory> = (0..grid.len())
        .into_par_iter()
        .map(|t| {
            let init = staggered_initial_states(&grid, t, topology.surrogate_size);
            simulate_network(classes, &assignment, topology, &init, config.steps)
        })
        .collect::<Result<_>>()?;
    let entered_unsafe = trajectories.iter().map(Trajectory::entered_unsafe).collect();
    Ok(PhasePortrait {
        trajectories,
        entered_unsafe,
    })
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct NetworkDecreaseReport {
    /// Transitions where every state was in its box and no input was clamped.
    pub checked_steps: usize,
    pub skipped_steps: usize,
    /// Largest one-step increase of the network certificate over checked steps.
    pub max_increase: f64,
    pub tolerance: f64,
}

impl NetworkDecreaseReport {
    pub fn passed(&self) -> bool {
        self.max_increase <= self.tolerance
    }
}

/// Check that `Σ B(x_i)` does not increase along simulated trajectories of a
/// single-class surrogate, on the steps where the certificate applies.
pub fn network_decrease(
    cert: &NetworkCertificate,
    portrait: &PhasePortrait,
    class_index: usize,
    tolerance: f64,
) -> Result<NetworkDecreaseReport> {
    let mut report = NetworkDecreaseReport {
        checked_steps: 0,
        skipped_steps: 0,
        max_increase: f64::NEG_INFINITY,
        tolerance,
    };
    for traj in &portrait.trajectories {
        let Some(first) = traj.states.first() else { continue };
        let assignment = vec![class_index; first.len()];
        let values: Vec<f64> = traj
            .states
            .iter()
            .map(|s| eval_network_certificate(cert, s, &assignment))
            .collect::<Result<_>>()?;
        for (k, ok) in traj.in_domain.iter().enumerate() {
            if *ok {
                report.checked_steps += 1;
                report.max_increase = report.max_increase.max(values[k + 1] - values[k]);
            } else {
                report.skipped_steps += 1;
            }
        }
    }
    Ok(report)
}

pub fn save_csv(path: &Path, write: impl FnOnce(std::fs::File) -> Result<()>) -> Result<()> {
    write(std::fs::File::create(path)?)
}
