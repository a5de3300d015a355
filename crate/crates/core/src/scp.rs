//! Scenario program: learn a storage certificate from sampled transitions.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{invalid, Error, Result};
use crate::lp::{LinearProgram, LpStatus, SolverOptions};
use crate::model::{CoefficientVector, SubsystemClass, SupplyRate};
use crate::sampling::SampleSet;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ScpOptions {
    /// Box bound on every certificate coefficient, level and supply entry.
    pub coeff_bound: f64,
    /// Enforced `phi - sigma >= gap`.
    pub gap: f64,
    pub feasibility_tol: f64,
    /// Lower bound on `beta`; `None` leaves it free.
    pub beta_floor: Option<f64>,
}

impl Default for ScpOptions {
    fn default() -> Self {
        Self {
            coeff_bound: 200.0,
            gap: 1e-3,
            feasibility_tol: 1e-8,
            beta_floor: Some(0.0),
        }
    }
}

impl ScpOptions {
    pub fn validate(&self) -> Result<()> {
        if !(self.coeff_bound.is_finite() && self.coeff_bound > 0.0) {
            return invalid("coeff_bound must be finite and positive");
        }
        if !(self.gap >= 0.0 && self.gap.is_finite()) {
            return invalid("gap must be finite and non-negative");
        }
        if !(self.feasibility_tol > 0.0) {
            return invalid("feasibility_tol must be positive");
        }
        if self.beta_floor.is_some_and(|b| !b.is_finite()) {
            return invalid("beta_floor must be finite when set");
        }
        Ok(())
    }
}

/// Constraint families of the scenario program.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum RowGroup {
    /// `B(x) - sigma <= eta` on initial-box samples.
    Initial,
    /// `phi - B(x) <= eta` on unsafe-box samples.
    Unsafe,
    /// `B(f(x,d)) - B(x) - s(d,x) <= eta` on every sample.
    Decrease,
    /// `s(d,x) <= beta` on every sample.
    SupplyBound,
    /// `sigma + gap <= phi`.
    LevelGap,
}

impl RowGroup {
    pub const ALL: [RowGroup; 5] = [
        RowGroup::Initial,
        RowGroup::Unsafe,
        RowGroup::Decrease,
        RowGroup::SupplyBound,
        RowGroup::LevelGap,
    ];
}

/// Column layout: `[theta (l), sigma, phi, supply params (q), eta, beta]`.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct Layout {
    pub terms: usize,
    pub supply: usize,
}

impl Layout {
    pub fn sigma(&self) -> usize {
        self.terms
    }
    pub fn phi(&self) -> usize {
        self.terms + 1
    }
    pub fn supply_start(&self) -> usize {
        self.terms + 2
    }
    pub fn eta(&self) -> usize {
        self.terms + 2 + self.supply
    }
    pub fn beta(&self) -> usize {
        self.eta() + 1
    }
    pub fn num_vars(&self) -> usize {
        self.beta() + 1
    }
}

#[derive(Clone, Debug)]
pub struct ScpProblem {
    pub class_id: String,
    pub input_dim: usize,
    pub state_dim: usize,
    pub layout: Layout,
    pub lp: LinearProgram,
    pub groups: Vec<RowGroup>,
    pub options: ScpOptions,
}

impl ScpProblem {
    pub fn row_count(&self, group: RowGroup) -> usize {
        self.groups.iter().filter(|g| **g == group).count()
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ScpStatus {
    Optimal,
    Infeasible,
    Unbounded,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ScpSolution {
    pub coeffs: CoefficientVector,
    pub sigma: f64,
    pub phi: f64,
    pub supply: SupplyRate,
    pub eta: f64,
    pub beta: f64,
    pub objective: f64,
    pub status: ScpStatus,
    /// Group with the largest violation when the program is infeasible.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub worst_group: Option<RowGroup>,
}

impl ScpSolution {
    fn from_vector(problem: &ScpProblem, x: &[f64], status: ScpStatus) -> Result<Self> {
        let lay = problem.layout;
        let supply = SupplyRate::from_parameters(
            problem.input_dim,
            problem.state_dim,
            &x[lay.supply_start()..lay.eta()],
        )?;
        let (eta, beta) = (x[lay.eta()], x[lay.beta()]);
        Ok(Self {
            coeffs: CoefficientVector(x[..lay.terms].to_vec()),
            sigma: x[lay.sigma()],
            phi: x[lay.phi()],
            supply,
            eta,
            beta,
            objective: eta + beta,
            status,
            worst_group: None,
        })
    }

    /// Flatten to the LP column layout.
    pub fn to_vector(&self) -> Vec<f64> {
        let mut v = self.coeffs.0.clone();
        v.push(self.sigma);
        v.push(self.phi);
        v.extend(self.supply.parameters());
        v.push(self.eta);
        v.push(self.beta);
        v
    }
}

fn variable_names(lay: &Layout) -> Vec<String> {
    let mut names: Vec<String> = (0..lay.terms).map(|j| format!("theta{j}")).collect();
    names.push("sigma".into());
    names.push("phi".into());
    names.extend((0..lay.supply).map(|k| format!("s{k}")));
    names.push("eta".into());
    names.push("beta".into());
    names
}

/// Assemble the scenario LP.
pub fn build_scp(class: &SubsystemClass, samples: &SampleSet, options: &ScpOptions) -> Result<ScpProblem> {
    options.validate()?;
    if samples.is_empty() {
        return invalid("sample set is empty");
    }
    let (n, p) = (class.state_dim(), class.input_dim());
    if samples.state_dim() != n || samples.input_dim() != p {
        return invalid(format!(
            "sample dimensions ({}, {}) do not match class `{}` ({n}, {p})",
            samples.state_dim(),
            samples.input_dim(),
            class.id
        ));
    }
    let template = class.template();
    let lay = Layout {
        terms: template.term_count(),
        supply: SupplyRate::parameter_count(p, n),
    };
    let nv = lay.num_vars();
    let safety = class.safety();
    let initial: Vec<usize> = (0..samples.len())
        .filter(|&z| safety.initial().contains(&samples.pairs[z].x))
        .collect();
    let unsafe_rows: Vec<usize> = (0..samples.len())
        .filter(|&z| safety.unsafe_set().contains(&samples.pairs[z].x))
        .collect();
    if initial.is_empty() {
        return Err(Error::Coverage {
            class: class.id.clone(),
            region: "initial",
        });
    }
    if unsafe_rows.is_empty() {
        return Err(Error::Coverage {
            class: class.id.clone(),
            region: "unsafe",
        });
    }

    let b = options.coeff_bound;
    let mut lower = vec![-b; nv];
    let mut upper = vec![b; nv];
    lower[lay.eta()] = f64::NEG_INFINITY;
    upper[lay.eta()] = f64::INFINITY;
    lower[lay.beta()] = options.beta_floor.unwrap_or(f64::NEG_INFINITY);
    upper[lay.beta()] = f64::INFINITY;
    let mut objective = vec![0.0; nv];
    objective[lay.eta()] = 1.0;
    objective[lay.beta()] = 1.0;
    let mut lp = LinearProgram::new(variable_names(&lay), objective, lower, upper)?;
    let mut groups = Vec::new();

    for &z in &initial {
        let mut row = vec![0.0; nv];
        row[..lay.terms].copy_from_slice(&template.basis_unchecked(&samples.pairs[z].x));
        row[lay.sigma()] = -1.0;
        row[lay.eta()] = -1.0;
        lp.push_row(row, 0.0);
        groups.push(RowGroup::Initial);
    }
    for &z in &unsafe_rows {
        let mut row = vec![0.0; nv];
        for (r, v) in row.iter_mut().zip(template.basis_unchecked(&samples.pairs[z].x)) {
            *r = -v;
        }
        row[lay.phi()] = 1.0;
        row[lay.eta()] = -1.0;
        lp.push_row(row, 0.0);
        groups.push(RowGroup::Unsafe);
    }
    let pair_rows: Vec<(Vec<f64>, Vec<f64>)> = samples
        .pairs
        .par_iter()
        .map(|s| {
            let bx = template.basis_unchecked(&s.x);
            let bf = template.basis_unchecked(&s.next);
            let g = SupplyRate::features(&s.d, &s.x);
            let mut dec = vec![0.0; nv];
            for j in 0..lay.terms {
                dec[j] = bf[j] - bx[j];
            }
            let mut sup = vec![0.0; nv];
            for (k, gk) in g.iter().enumerate() {
                dec[lay.supply_start() + k] = -gk;
                sup[lay.supply_start() + k] = *gk;
            }
            dec[lay.eta()] = -1.0;
            sup[lay.beta()] = -1.0;
            (dec, sup)
        })
        .collect();
    let (dec, sup): (Vec<_>, Vec<_>) = pair_rows.into_iter().unzip();
    for row in dec {
        lp.push_row(row, 0.0);
        groups.push(RowGroup::Decrease);
    }
    for row in sup {
        lp.push_row(row, 0.0);
        groups.push(RowGroup::SupplyBound);
    }
    let mut gap = vec![0.0; nv];
    gap[lay.sigma()] = 1.0;
    gap[lay.phi()] = -1.0;
    lp.push_row(gap, -options.gap);
    groups.push(RowGroup::LevelGap);

    Ok(ScpProblem {
        class_id: class.id.clone(),
        input_dim: p,
        state_dim: n,
        layout: lay,
        lp,
        groups,
        options: options.clone(),
    })
}

/// Solve the assembled LP. `eta` and `beta` are then lifted by any residual
/// row violation so the returned point satisfies every row exactly as
/// recomputed in floating point.
pub fn solve_scp(problem: &ScpProblem) -> Result<ScpSolution> {
    let opts = SolverOptions {
        tolerance: problem.options.feasibility_tol * 1e-2,
        ..SolverOptions::default()
    };
    let sol = problem.lp.solve(&opts)?;
    match sol.status {
        LpStatus::Optimal => {
            let lay = problem.layout;
            let mut x = sol.x;
            let mut lift_eta = 0.0f64;
            let mut lift_beta = 0.0f64;
            for (i, g) in problem.groups.iter().enumerate() {
                let v = problem.lp.row_value(i, &x) - problem.lp.rhs[i];
                match g {
                    RowGroup::SupplyBound => lift_beta = lift_beta.max(v),
                    RowGroup::LevelGap => {}
                    _ => lift_eta = lift_eta.max(v),
                }
            }
            x[lay.eta()] += lift_eta;
            x[lay.beta()] += lift_beta;
            ScpSolution::from_vector(problem, &x, ScpStatus::Optimal)
        }
        LpStatus::Infeasible => {
            let scales: Vec<f64> = problem
                .lp
                .rows
                .iter()
                .map(|r| r.iter().fold(0.0f64, |m, v| m.max(v.abs())).max(1e-300))
                .collect();
            let worst = problem
                .groups
                .iter()
                .enumerate()
                .map(|(i, g)| (*g, (problem.lp.row_value(i, &sol.x) - problem.lp.rhs[i]) / scales[i]))
                .max_by(|a, b| a.1.total_cmp(&b.1))
                .map(|(g, _)| g);
            let mut out = ScpSolution::from_vector(problem, &sol.x, ScpStatus::Infeasible)?;
            out.worst_group = worst;
            Ok(out)
        }
        LpStatus::Unbounded => {
            // Every column except eta/beta is boxed and both are bounded
            // below by the rows, so this is a solver fault.
            Err(Error::InvalidInput(format!(
                "scenario program for `{}` reported unbounded",
                problem.class_id
            )))
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GroupResidual {
    pub group: RowGroup,
    pub rows: usize,
    /// Largest raw `lhs - rhs`.
    pub max_violation: f64,
    /// Largest violation relative to `1 + Σ|terms|` of its row.
    pub max_scaled_violation: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ResidualReport {
    pub groups: Vec<GroupResidual>,
    pub tolerance: f64,
    pub passed: bool,
}

impl ResidualReport {
    pub fn group(&self, group: RowGroup) -> Option<&GroupResidual> {
        self.groups.iter().find(|g| g.group == group)
    }
}

/// Recompute every scenario row from the evaluators and report violations.
pub fn check_solution(
    solution: &ScpSolution,
    class: &SubsystemClass,
    samples: &SampleSet,
    options: &ScpOptions,
) -> Result<ResidualReport> {
    let template = class.template();
    template.check_coeffs(&solution.coeffs)?;
    if solution.supply.input_dim() != class.input_dim() || solution.supply.state_dim() != class.state_dim() {
        return invalid("supply rate dimensions do not match class");
    }
    let th = solution.coeffs.as_slice();
    let abs_th: Vec<f64> = th.iter().map(|v| v.abs()).collect();
    let b = |x: &[f64]| template.eval_unchecked(th, x);
    let b_abs = |x: &[f64]| {
        template
            .basis_unchecked(x)
            .iter()
            .zip(&abs_th)
            .map(|(u, v)| (u * v).abs())
            .sum::<f64>()
    };
    let params = solution.supply.parameters();
    let s_abs = |d: &[f64], x: &[f64]| {
        SupplyRate::features(d, x)
            .iter()
            .zip(&params)
            .map(|(u, v)| (u * v).abs())
            .sum::<f64>()
    };
    let (eta, beta) = (solution.eta, solution.beta);

    let mut acc: Vec<GroupResidual> = RowGroup::ALL
        .iter()
        .map(|g| GroupResidual {
            group: *g,
            rows: 0,
            max_violation: f64::NEG_INFINITY,
            max_scaled_violation: f64::NEG_INFINITY,
        })
        .collect();
    let mut record = |g: RowGroup, v: f64, mag: f64| {
        let r = &mut acc[RowGroup::ALL.iter().position(|h| *h == g).unwrap()];
        r.rows += 1;
        r.max_violation = r.max_violation.max(v);
        r.max_scaled_violation = r.max_scaled_violation.max(v / (1.0 + mag));
    };

    let safety = class.safety();
    let per_sample: Vec<[(f64, f64); 4]> = samples
        .pairs
        .par_iter()
        .map(|s| {
            let nan = (f64::NAN, 0.0);
            let bx = b(&s.x);
            let initial = if safety.initial().contains(&s.x) {
                (bx - solution.sigma - eta, b_abs(&s.x) + solution.sigma.abs() + eta.abs())
            } else {
                nan
            };
            let unsafe_ = if safety.unsafe_set().contains(&s.x) {
                (solution.phi - bx - eta, b_abs(&s.x) + solution.phi.abs() + eta.abs())
            } else {
                nan
            };
            let sv = solution.supply.eval_unchecked(&s.d, &s.x);
            let sm = s_abs(&s.d, &s.x);
            let dec = (
                b(&s.next) - bx - sv - eta,
                b_abs(&s.next) + b_abs(&s.x) + sm + eta.abs(),
            );
            let sup = (sv - beta, sm + beta.abs());
            [initial, unsafe_, dec, sup]
        })
        .collect();
    for row in per_sample {
        let groups = [RowGroup::Initial, RowGroup::Unsafe, RowGroup::Decrease, RowGroup::SupplyBound];
        for (g, (v, m)) in groups.into_iter().zip(row) {
            if !v.is_nan() {
                record(g, v, m);
            }
        }
    }
    record(
        RowGroup::LevelGap,
        solution.sigma + options.gap - solution.phi,
        solution.sigma.abs() + solution.phi.abs() + options.gap,
    );

    let tol = options.feasibility_tol;
    let passed = acc
        .iter()
        .all(|g| g.rows == 0 || g.max_scaled_violation <= tol);
    Ok(ResidualReport {
        groups: acc,
        tolerance: tol,
        passed,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::blackbox::Benchmark;
    use crate::model::{IntervalBox, SafetySpec, StcTemplate, TransitionOracle};
    use crate::sampling::{collect_pairs, SamplePair};
    use rand::{Rng, SeedableRng};
    use std::sync::Arc;

    struct Zero;
    impl TransitionOracle for Zero {
        fn step(&self, _x: &[f64], _d: &[f64]) -> Vec<f64> {
            vec![0.0]
        }
        fn name(&self) -> &str {
            "zero"
        }
    }

    fn scalar_class(template: StcTemplate, x: (f64, f64), x0: (f64, f64), xa: (f64, f64)) -> SubsystemClass {
        let bx = IntervalBox::from_bounds(&[x]).unwrap();
        let safety = SafetySpec::new(
            IntervalBox::from_bounds(&[x0]).unwrap(),
            IntervalBox::from_bounds(&[xa]).unwrap(),
        )
        .unwrap();
        SubsystemClass::new("toy", bx.clone(), bx, safety, template, Some(Arc::new(Zero))).unwrap()
    }

    fn pair(x: f64, d: f64, next: f64) -> SamplePair {
        SamplePair {
            x: vec![x],
            d: vec![d],
            next: vec![next],
        }
    }

    fn tiny() -> (SubsystemClass, SampleSet, ScpOptions) {
        let class = scalar_class(
            StcTemplate::new(1, vec![vec![2]]).unwrap(),
            (0.0, 1.0),
            (0.0, 0.25),
            (0.75, 1.0),
        );
        let samples = SampleSet {
            pairs: vec![pair(0.0, 0.0, 0.0), pair(1.0, 0.0, 1.0)],
            dispersion: 0.5,
            grid: None,
        };
        let opts = ScpOptions {
            coeff_bound: 1.0,
            gap: 0.0,
            ..ScpOptions::default()
        };
        (class, samples, opts)
    }

    #[test]
    fn fixed_point_forces_zero_objective() {
        let (class, samples, opts) = tiny();
        let prob = build_scp(&class, &samples, &opts).unwrap();
        let sol = solve_scp(&prob).unwrap();
        assert_eq!(sol.status, ScpStatus::Optimal);
        assert!(sol.eta.abs() < 1e-9 && sol.beta.abs() < 1e-9, "{sol:?}");
        assert!((sol.objective - sol.eta - sol.beta).abs() < 1e-12);
        assert!(check_solution(&sol, &class, &samples, &opts).unwrap().passed);
    }

    #[test]
    fn zero_solution_has_zero_residuals() {
        let (class, samples, opts) = tiny();
        let zero = ScpSolution {
            coeffs: CoefficientVector::zeros(1),
            sigma: 0.0,
            phi: 0.0,
            supply: SupplyRate::zeros(1, 1),
            eta: 0.0,
            beta: 0.0,
            objective: 0.0,
            status: ScpStatus::Optimal,
            worst_group: None,
        };
        let rep = check_solution(&zero, &class, &samples, &opts).unwrap();
        for g in &rep.groups {
            assert_eq!(g.max_violation, 0.0, "{g:?}");
        }
        assert!(rep.passed);
    }

    #[test]
    fn row_and_variable_counts() {
        let class = Benchmark::Room.class();
        let samples = collect_pairs(&class, &[7], &[4]).unwrap();
        let prob = build_scp(&class, &samples, &ScpOptions::default()).unwrap();
        let n = samples.len();
        let n0 = samples.pairs.iter().filter(|s| s.x[0] <= 11.0).count();
        let na = samples.pairs.iter().filter(|s| s.x[0] >= 12.0).count();
        assert_eq!(prob.lp.num_rows(), n0 + na + 2 * n + 1);
        assert_eq!(prob.lp.num_vars(), 3 + 7);
        assert_eq!(prob.row_count(RowGroup::Initial), n0);
        assert_eq!(prob.row_count(RowGroup::Unsafe), na);
    }

    #[test]
    fn fixed_point_decrease_row_reduces_to_supply() {
        let class = scalar_class(
            StcTemplate::new(1, vec![vec![2], vec![0]]).unwrap(),
            (-1.0, 2.0),
            (-1.0, -0.5),
            (1.5, 2.0),
        );
        let samples = SampleSet {
            pairs: vec![pair(-1.0, 0.0, -1.0), pair(2.0, 0.0, 2.0), pair(0.5, 0.0, 0.5)],
            dispersion: 1.0,
            grid: None,
        };
        let prob = build_scp(&class, &samples, &ScpOptions::default()).unwrap();
        let lay = prob.layout;
        let i = prob.groups.iter().position(|g| *g == RowGroup::Decrease).unwrap() + 2;
        let row = &prob.lp.rows[i];
        assert!(row[..lay.terms].iter().all(|v| *v == 0.0));
        // supply params: s11, s12, s22 with d = 0, x = 0.5
        assert_eq!(&row[lay.supply_start()..lay.eta()], &[0.0, 0.0, -0.25]);
        assert_eq!(row[lay.eta()], -1.0);
    }

    #[test]
    fn coverage_errors() {
        let (class, _, opts) = tiny();
        let only_middle = SampleSet {
            pairs: vec![pair(0.5, 0.0, 0.5)],
            dispersion: 0.5,
            grid: None,
        };
        assert!(matches!(
            build_scp(&class, &only_middle, &opts),
            Err(Error::Coverage { region: "initial", .. })
        ));
        let no_unsafe = SampleSet {
            pairs: vec![pair(0.0, 0.0, 0.0)],
            dispersion: 0.5,
            grid: None,
        };
        assert!(matches!(
            build_scp(&class, &no_unsafe, &opts),
            Err(Error::Coverage { region: "unsafe", .. })
        ));
    }

    #[test]
    fn lp_rows_agree_with_evaluators() {
        let class = Benchmark::Platoon.class();
        let samples = collect_pairs(&class, &[3, 4], &[2, 3]).unwrap();
        let opts = ScpOptions::default();
        let prob = build_scp(&class, &samples, &opts).unwrap();
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(3);
        for _ in 0..5 {
            let x: Vec<f64> = (0..prob.lp.num_vars()).map(|_| rng.gen_range(-2.0..2.0)).collect();
            let sol = ScpSolution::from_vector(&prob, &x, ScpStatus::Optimal).unwrap();
            let rep = check_solution(&sol, &class, &samples, &opts).unwrap();
            for g in RowGroup::ALL {
                let lp_max = prob
                    .groups
                    .iter()
                    .enumerate()
                    .filter(|(_, h)| **h == g)
                    .map(|(i, _)| prob.lp.row_value(i, &x) - prob.lp.rhs[i])
                    .fold(f64::NEG_INFINITY, f64::max);
                let ev = rep.group(g).unwrap().max_violation;
                assert!((lp_max - ev).abs() < 1e-10 * (1.0 + ev.abs()), "{g:?}: {lp_max} vs {ev}");
            }
        }
    }

    #[test]
    fn objective_scales_with_box_bound() {
        // The program is positively homogeneous, so with a strictly negative
        // optimum doubling the box doubles the optimum.
        let class = Benchmark::Room.class();
        let samples = collect_pairs(&class, &[7], &[4]).unwrap();
        let solve = |bound: f64| {
            let opts = ScpOptions {
                coeff_bound: bound,
                gap: 0.0,
                beta_floor: None,
                ..ScpOptions::default()
            };
            solve_scp(&build_scp(&class, &samples, &opts).unwrap()).unwrap()
        };
        let a = solve(1.0);
        let b = solve(2.0);
        assert!(a.objective < 0.0);
        assert!((b.objective - 2.0 * a.objective).abs() < 1e-7 * a.objective.abs());
    }

    #[test]
    fn more_samples_never_lower_the_optimum() {
        let class = Benchmark::Room.class();
        let opts = ScpOptions::default();
        let mut last = f64::NEG_INFINITY;
        for k in [3, 5, 9, 17] {
            let s = collect_pairs(&class, &[k], &[k]).unwrap();
            let sol = solve_scp(&build_scp(&class, &s, &opts).unwrap()).unwrap();
            assert!(sol.objective >= last - 1e-9, "{k}: {} < {last}", sol.objective);
            last = sol.objective;
        }
    }

    #[test]
    fn published_room_levels_violate_the_initial_row() {
        let class = Benchmark::Room.class();
        let samples = SampleSet {
            pairs: vec![pair(11.0, 10.0, 10.0), pair(12.0, 10.0, 10.0)],
            dispersion: 0.5,
            grid: None,
        };
        let sol = ScpSolution {
            coeffs: CoefficientVector(vec![0.0151, -0.7, -0.7]),
            sigma: 150.0,
            phi: 200.0,
            supply: SupplyRate::scalar(0.01, 0.0, -0.1),
            eta: -16.928,
            beta: 0.02,
            objective: -16.908,
            status: ScpStatus::Optimal,
            worst_group: None,
        };
        let rep = check_solution(&sol, &class, &samples, &ScpOptions::default()).unwrap();
        let init = rep.group(RowGroup::Initial).unwrap();
        assert!((init.max_violation - 2.6071).abs() < 1e-4, "{}", init.max_violation);
        assert!(!rep.passed);
    }

    #[test]
    fn infeasible_gap_is_reported() {
        let (class, samples, _) = tiny();
        let opts = ScpOptions {
            coeff_bound: 1.0,
            gap: 5.0,
            ..ScpOptions::default()
        };
        let sol = solve_scp(&build_scp(&class, &samples, &opts).unwrap()).unwrap();
        assert_eq!(sol.status, ScpStatus::Infeasible);
        assert_eq!(sol.worst_group, Some(RowGroup::LevelGap));
    }
}
