//! Small dense LP solver for problems with few variables and many rows.

mod dense;
mod simplex;

use std::fmt::Write as _;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{invalid, Result};
use simplex::{Core, Outcome};

/// `min cᵀx  s.t.  A x ≤ b,  lower ≤ x ≤ upper` (bounds may be infinite).
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LinearProgram {
    pub names: Vec<String>,
    pub objective: Vec<f64>,
    pub lower: Vec<f64>,
    pub upper: Vec<f64>,
    pub rows: Vec<Vec<f64>>,
    pub rhs: Vec<f64>,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum LpStatus {
    Optimal,
    Infeasible,
    Unbounded,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LpSolution {
    pub status: LpStatus,
    /// Optimiser, or for infeasible problems the least-infeasible point found.
    pub x: Vec<f64>,
    pub objective: f64,
    /// Largest scaled row violation at `x`.
    pub max_violation: f64,
    pub rounds: usize,
}

#[derive(Clone, Copy, Debug)]
pub struct SolverOptions {
    /// Scaled violation (`(aᵢx − bᵢ)/‖aᵢ‖∞`) accepted as feasible.
    pub tolerance: f64,
    /// Rows added per row-generation round.
    pub batch: usize,
    /// Row count below which every row is handed to the simplex at once.
    pub direct_limit: usize,
    pub max_iterations: usize,
}

impl Default for SolverOptions {
    fn default() -> Self {
        Self {
            tolerance: 1e-9,
            batch: 400,
            direct_limit: 1500,
            max_iterations: 200_000,
        }
    }
}

impl LinearProgram {
    pub fn new(names: Vec<String>, objective: Vec<f64>, lower: Vec<f64>, upper: Vec<f64>) -> Result<Self> {
        let n = objective.len();
        if n == 0 || names.len() != n || lower.len() != n || upper.len() != n {
            return invalid("LP: names, objective and bounds must have equal non-zero length");
        }
        if lower.iter().zip(&upper).any(|(l, u)| l > u || l.is_nan() || u.is_nan()) {
            return invalid("LP: every lower bound must be <= its upper bound");
        }
        Ok(Self {
            names,
            objective,
            lower,
            upper,
            rows: Vec::new(),
            rhs: Vec::new(),
        })
    }

    pub fn num_vars(&self) -> usize {
        self.objective.len()
    }

    pub fn num_rows(&self) -> usize {
        self.rows.len()
    }

    pub fn push_row(&mut self, coeffs: Vec<f64>, rhs: f64) {
        debug_assert_eq!(coeffs.len(), self.num_vars());
        self.rows.push(coeffs);
        self.rhs.push(rhs);
    }

    pub fn row_value(&self, i: usize, x: &[f64]) -> f64 {
        self.rows[i].iter().zip(x).map(|(a, b)| a * b).sum()
    }

    fn row_scales(&self) -> Vec<f64> {
        self.rows
            .iter()
            .map(|r| r.iter().fold(0.0f64, |m, v| m.max(v.abs())).max(1e-300))
            .collect()
    }

    /// Export in CPLEX LP text format.
    pub fn to_lp_format(&self) -> String {
        let mut s = String::from("\\ exported by stcnet\nMinimize\n obj:");
        write_expr(&mut s, &self.objective, &self.names);
        s.push_str("\nSubject To\n");
        for (i, (row, b)) in self.rows.iter().zip(&self.rhs).enumerate() {
            let _ = write!(s, " r{i}:");
            write_expr(&mut s, row, &self.names);
            let _ = writeln!(s, " <= {b:?}");
        }
        s.push_str("Bounds\n");
        for (j, name) in self.names.iter().enumerate() {
            let (l, u) = (self.lower[j], self.upper[j]);
            match (l.is_finite(), u.is_finite()) {
                (true, true) => {
                    let _ = writeln!(s, " {l:?} <= {name} <= {u:?}");
                }
                (true, false) => {
                    let _ = writeln!(s, " {name} >= {l:?}");
                }
                (false, true) => {
                    let _ = writeln!(s, " -inf <= {name} <= {u:?}");
                }
                (false, false) => {
                    let _ = writeln!(s, " {name} free");
                }
            }
        }
        s.push_str("End\n");
        s
    }

    /// Solve by row generation: the simplex sees a growing subset of rows
    /// until the full row set is satisfied.
    pub fn solve(&self, opts: &SolverOptions) -> Result<LpSolution> {
        let m = self.num_rows();
        let n = self.num_vars();
        let scales = self.row_scales();
        let scaled_violation = |x: &[f64]| -> Vec<f64> {
            (0..m)
                .into_par_iter()
                .map(|i| (self.row_value(i, x) - self.rhs[i]) / scales[i])
                .collect()
        };

        let mut selected: Vec<usize> = if m <= opts.direct_limit {
            (0..m).collect()
        } else {
            let stride = m.div_ceil(opts.direct_limit / 2);
            (0..m).step_by(stride).collect()
        };
        let mut in_set = vec![false; m];
        selected.iter().for_each(|&i| in_set[i] = true);

        let mut rounds = 0;
        loop {
            rounds += 1;
            let rows: Vec<Vec<f64>> = selected
                .iter()
                .map(|&i| self.rows[i].iter().map(|a| a / scales[i]).collect())
                .collect();
            let rhs: Vec<f64> = selected.iter().map(|&i| self.rhs[i] / scales[i]).collect();
            let core = Core::new(&rows, &rhs, &self.lower, &self.upper, opts.max_iterations);
            match core.solve(&self.objective) {
                Outcome::Optimal { x } => {
                    let viol = scaled_violation(&x);
                    let mut bad: Vec<usize> = (0..m)
                        .filter(|&i| !in_set[i] && viol[i] > opts.tolerance)
                        .collect();
                    let max_violation = viol.iter().copied().fold(0.0, f64::max);
                    if bad.is_empty() {
                        let objective = dot(&self.objective, &x);
                        return Ok(LpSolution {
                            status: LpStatus::Optimal,
                            x,
                            objective,
                            max_violation,
                            rounds,
                        });
                    }
                    bad.sort_by(|&a, &b| viol[b].total_cmp(&viol[a]).then(a.cmp(&b)));
                    bad.truncate(opts.batch);
                    add_rows(&mut selected, &mut in_set, bad);
                }
                Outcome::Unbounded { ray } => {
                    let mut blocking: Vec<(usize, f64)> = (0..m)
                        .filter(|&i| !in_set[i])
                        .map(|i| (i, self.row_value(i, &ray) / scales[i]))
                        .filter(|(_, r)| *r > 1e-12)
                        .collect();
                    if blocking.is_empty() {
                        return Ok(LpSolution {
                            status: LpStatus::Unbounded,
                            x: ray,
                            objective: f64::NEG_INFINITY,
                            max_violation: 0.0,
                            rounds,
                        });
                    }
                    blocking.sort_by(|a, b| b.1.total_cmp(&a.1).then(a.0.cmp(&b.0)));
                    blocking.truncate(opts.batch);
                    add_rows(&mut selected, &mut in_set, blocking.into_iter().map(|b| b.0).collect());
                }
                Outcome::Infeasible { x } => {
                    let viol = scaled_violation(&x);
                    let max_violation = viol.iter().copied().fold(0.0, f64::max);
                    return Ok(LpSolution {
                        status: LpStatus::Infeasible,
                        objective: dot(&self.objective, &x),
                        x,
                        max_violation,
                        rounds,
                    });
                }
                Outcome::Failed(msg) => {
                    return Err(crate::Error::InvalidInput(format!(
                        "LP solver failed ({msg}) on {n} variables and {} rows",
                        selected.len()
                    )))
                }
            }
        }
    }
}

fn add_rows(selected: &mut Vec<usize>, in_set: &mut [bool], extra: Vec<usize>) {
    for i in extra {
        if !in_set[i] {
            in_set[i] = true;
            selected.push(i);
        }
    }
    selected.sort_unstable();
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

fn write_expr(s: &mut String, coeffs: &[f64], names: &[String]) {
    let mut any = false;
    for (c, name) in coeffs.iter().zip(names) {
        if *c == 0.0 {
            continue;
        }
        let sign = if *c < 0.0 { '-' } else { '+' };
        let _ = write!(s, " {sign} {:?} {name}", c.abs());
        any = true;
    }
    if !any {
        s.push_str(" 0");
    }
}
