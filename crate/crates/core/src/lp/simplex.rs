//! Primal simplex for `min cᵀx  s.t.  A x ≤ b,  l ≤ x ≤ u` in inequality
//! form. A vertex is described by `n` active constraints whose normals form
//! a nonsingular matrix; with few variables and many rows this keeps the
//! basis tiny and makes a pivot cost one pass over the rows.

use super::dense::Lu;

const PIVOT_TOL: f64 = 1e-11;
const STALL_LIMIT: usize = 40;

#[derive(Debug)]
pub(crate) enum Outcome {
    Optimal { x: Vec<f64> },
    /// Phase 1 could not drive the largest violation to zero.
    Infeasible { x: Vec<f64> },
    Unbounded { ray: Vec<f64> },
    Failed(&'static str),
}

/// Rows are assumed pre-scaled so their coefficients are O(1).
pub(crate) struct Core<'a> {
    n: usize,
    rows: &'a [Vec<f64>],
    rhs: &'a [f64],
    lower: Vec<f64>,
    upper: Vec<f64>,
    max_iter: usize,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
enum Kind {
    Row(usize),
    Upper(usize),
    Lower(usize),
    /// `x_j = 0` placeholder for a free variable; its multiplier is sign-free
    /// and it never re-enters once released.
    Free(usize),
}

impl<'a> Core<'a> {
    pub fn new(
        rows: &'a [Vec<f64>],
        rhs: &'a [f64],
        lower: &[f64],
        upper: &[f64],
        max_iter: usize,
    ) -> Self {
        let n = lower.len();
        // One extra column `t` measures infeasibility in phase 1.
        let mut lo = lower.to_vec();
        let mut up = upper.to_vec();
        lo.push(0.0);
        up.push(f64::INFINITY);
        Self {
            n: n + 1,
            rows,
            rhs,
            lower: lo,
            upper: up,
            max_iter,
        }
    }

    fn t(&self) -> usize {
        self.n - 1
    }

    fn dot(&self, g: Kind, v: &[f64]) -> f64 {
        match g {
            Kind::Row(i) => {
                let a = &self.rows[i];
                a.iter().zip(v).map(|(x, y)| x * y).sum::<f64>() - v[self.t()]
            }
            Kind::Upper(j) | Kind::Free(j) => v[j],
            Kind::Lower(j) => -v[j],
        }
    }

    fn bound(&self, g: Kind) -> f64 {
        match g {
            Kind::Row(i) => self.rhs[i],
            Kind::Upper(j) => self.upper[j],
            Kind::Lower(j) => -self.lower[j],
            Kind::Free(_) => 0.0,
        }
    }

    fn normal(&self, g: Kind, out: &mut [f64]) {
        out.iter_mut().for_each(|v| *v = 0.0);
        match g {
            Kind::Row(i) => {
                out[..self.n - 1].copy_from_slice(&self.rows[i]);
                out[self.t()] = -1.0;
            }
            Kind::Upper(j) | Kind::Free(j) => out[j] = 1.0,
            Kind::Lower(j) => out[j] = -1.0,
        }
    }

    fn factor(&self, active: &[Kind]) -> Option<Lu> {
        let n = self.n;
        let mut mat = vec![0.0; n * n];
        for (r, g) in active.iter().enumerate() {
            self.normal(*g, &mut mat[r * n..(r + 1) * n]);
        }
        Lu::factor(mat, n, PIVOT_TOL)
    }

    pub fn solve(mut self, objective: &[f64]) -> Outcome {
        let n0 = self.n - 1;
        let mut x = vec![0.0; self.n];
        let mut active = Vec::with_capacity(self.n);
        for j in 0..n0 {
            if self.lower[j].is_finite() {
                x[j] = self.lower[j];
                active.push(Kind::Lower(j));
            } else if self.upper[j].is_finite() {
                x[j] = self.upper[j];
                active.push(Kind::Upper(j));
            } else {
                active.push(Kind::Free(j));
            }
        }
        let mut worst = (0.0, None);
        for i in 0..self.rows.len() {
            let v = self.dot(Kind::Row(i), &x) - self.rhs[i];
            if v > worst.0 {
                worst = (v, Some(i));
            }
        }
        match worst.1 {
            Some(i) => active.push(Kind::Row(i)),
            None => active.push(Kind::Lower(self.t())),
        }

        let mut phase1 = vec![0.0; self.n];
        phase1[self.t()] = 1.0;
        let x = match self.run(&phase1, &mut active) {
            Ok(RunEnd::Optimal(x)) => x,
            Ok(RunEnd::Unbounded(_)) => return Outcome::Failed("phase 1 unbounded"),
            Err(e) => return Outcome::Failed(e),
        };
        let violation = x[self.t()];
        if violation > 1e-9 {
            return Outcome::Infeasible {
                x: x[..n0].to_vec(),
            };
        }

        // Phase 2: pin t to zero and optimise the real objective.
        let t = self.t();
        self.upper[t] = 0.0;
        let mut c = objective.to_vec();
        c.push(0.0);
        match self.run(&c, &mut active) {
            Ok(RunEnd::Optimal(x)) => Outcome::Optimal { x: x[..n0].to_vec() },
            Ok(RunEnd::Unbounded(ray)) => Outcome::Unbounded {
                ray: ray[..n0].to_vec(),
            },
            Err(e) => Outcome::Failed(e),
        }
    }

    fn run(&self, c: &[f64], active: &mut [Kind]) -> Result<RunEnd, &'static str> {
        let n = self.n;
        let c_scale = c.iter().fold(1.0f64, |m, v| m.max(v.abs()));
        let lambda_tol = 1e-10 * c_scale;
        let mut best_obj = f64::INFINITY;
        let mut stall = 0usize;
        let mut in_active = vec![false; self.rows.len()];
        for g in active.iter() {
            if let Kind::Row(i) = g {
                in_active[*i] = true;
            }
        }

        for _ in 0..self.max_iter {
            let lu = self.factor(active).ok_or("singular active set")?;
            let b: Vec<f64> = active.iter().map(|g| self.bound(*g)).collect();
            let x = lu.solve(&b);
            let obj: f64 = c.iter().zip(&x).map(|(a, b)| a * b).sum();
            if obj < best_obj - 1e-12 * (1.0 + obj.abs()) {
                best_obj = obj;
                stall = 0;
            } else {
                stall += 1;
            }
            let bland = stall > STALL_LIMIT;

            let neg_c: Vec<f64> = c.iter().map(|v| -v).collect();
            let lambda = lu.solve_transpose(&neg_c);

            let mut leave: Option<(usize, f64)> = None;
            for (k, g) in active.iter().enumerate() {
                if let Kind::Free(_) = g {
                    if lambda[k].abs() > lambda_tol
                        && leave.map_or(true, |(_, v)| lambda[k].abs() > v)
                    {
                        leave = Some((k, lambda[k].abs()));
                    }
                }
            }
            let mut sign = -1.0;
            if let Some((k, _)) = leave {
                if lambda[k] > 0.0 {
                    sign = 1.0;
                }
            } else {
                for (k, g) in active.iter().enumerate() {
                    if lambda[k] >= -lambda_tol {
                        continue;
                    }
                    let better = match leave {
                        None => true,
                        Some((kb, vb)) => {
                            if bland {
                                order(*g) < order(active[kb])
                            } else {
                                lambda[k] < vb
                            }
                        }
                    };
                    if better {
                        leave = Some((k, lambda[k]));
                    }
                }
            }
            let Some((k, _)) = leave else {
                return Ok(RunEnd::Optimal(x));
            };

            let mut e = vec![0.0; n];
            e[k] = sign;
            let p = lu.solve(&e);
            let p_scale = p.iter().fold(0.0f64, |m, v| m.max(v.abs()));
            let rate_tol = 1e-9 * p_scale.max(1e-300);

            let mut enter: Option<(Kind, f64, f64)> = None;
            let mut consider = |g: Kind, rate: f64, slack: f64| {
                if rate <= rate_tol {
                    return;
                }
                let step = slack.max(0.0) / rate;
                let better = match enter {
                    None => true,
                    Some((gb, sb, rb)) => {
                        if step < sb - 1e-12 * (1.0 + sb) {
                            true
                        } else if step <= sb + 1e-12 * (1.0 + sb) {
                            if bland {
                                order(g) < order(gb)
                            } else {
                                rate > rb
                            }
                        } else {
                            false
                        }
                    }
                };
                if better {
                    enter = Some((g, step, rate));
                }
            };
            for i in 0..self.rows.len() {
                if in_active[i] {
                    continue;
                }
                let g = Kind::Row(i);
                let rate = self.dot(g, &p);
                if rate > rate_tol {
                    consider(g, rate, self.rhs[i] - self.dot(g, &x));
                }
            }
            for j in 0..n {
                for g in [Kind::Upper(j), Kind::Lower(j)] {
                    let bound = self.bound(g);
                    if !bound.is_finite() || active.contains(&g) {
                        continue;
                    }
                    let rate = self.dot(g, &p);
                    consider(g, rate, bound - self.dot(g, &x));
                }
            }
            let Some((g, _, _)) = enter else {
                return Ok(RunEnd::Unbounded(p));
            };
            if let Kind::Row(i) = active[k] {
                in_active[i] = false;
            }
            if let Kind::Row(i) = g {
                in_active[i] = true;
            }
            active[k] = g;
        }
        Err("iteration limit reached")
    }
}

enum RunEnd {
    Optimal(Vec<f64>),
    Unbounded(Vec<f64>),
}

/// Fixed total order on constraints for Bland's rule.
fn order(g: Kind) -> (u8, usize) {
    match g {
        Kind::Free(j) => (0, j),
        Kind::Row(i) => (1, i),
        Kind::Upper(j) => (2, j),
        Kind::Lower(j) => (3, j),
    }
}
