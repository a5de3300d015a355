use serde::{Deserialize, Serialize};

use crate::error::{invalid, Result};

const SYMMETRY_TOL: f64 = 1e-12;

/// Dense row-major matrix, just enough for supply-rate blocks.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Matrix {
    pub rows: usize,
    pub cols: usize,
    pub data: Vec<f64>,
}

impl Matrix {
    pub fn new(rows: usize, cols: usize, data: Vec<f64>) -> Result<Self> {
        if data.len() != rows * cols {
            return invalid(format!(
                "matrix {rows}x{cols} needs {} entries, got {}",
                rows * cols,
                data.len()
            ));
        }
        Ok(Self { rows, cols, data })
    }

    pub fn zeros(rows: usize, cols: usize) -> Self {
        Self {
            rows,
            cols,
            data: vec![0.0; rows * cols],
        }
    }

    pub fn scalar(v: f64) -> Self {
        Self {
            rows: 1,
            cols: 1,
            data: vec![v],
        }
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.data[i * self.cols + j]
    }

    fn set(&mut self, i: usize, j: usize, v: f64) {
        self.data[i * self.cols + j] = v;
    }

    fn is_symmetric(&self) -> bool {
        self.rows == self.cols
            && (0..self.rows).all(|i| {
                (0..i).all(|j| (self.get(i, j) - self.get(j, i)).abs() <= SYMMETRY_TOL)
            })
    }

    /// `aᵀ M b`
    fn bilinear(&self, a: &[f64], b: &[f64]) -> f64 {
        let mut acc = 0.0;
        for (i, ai) in a.iter().enumerate() {
            let row = &self.data[i * self.cols..(i + 1) * self.cols];
            acc += ai * row.iter().zip(b).map(|(m, bj)| m * bj).sum::<f64>();
        }
        acc
    }
}

/// Quadratic supply rate `[d; x]ᵀ [[S11, S12], [S12ᵀ, S22]] [d; x]`.
///
/// `S21` is never stored; it is always the transpose of `S12`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "RawSupply", into = "RawSupply")]
pub struct SupplyRate {
    s11: Matrix,
    s12: Matrix,
    s22: Matrix,
}

#[derive(Serialize, Deserialize)]
struct RawSupply {
    s11: Matrix,
    s12: Matrix,
    s22: Matrix,
}

impl TryFrom<RawSupply> for SupplyRate {
    type Error = crate::Error;

    fn try_from(raw: RawSupply) -> Result<Self> {
        SupplyRate::new(raw.s11, raw.s12, raw.s22)
    }
}

impl From<SupplyRate> for RawSupply {
    fn from(s: SupplyRate) -> Self {
        RawSupply {
            s11: s.s11,
            s12: s.s12,
            s22: s.s22,
        }
    }
}

impl SupplyRate {
    pub fn new(s11: Matrix, s12: Matrix, s22: Matrix) -> Result<Self> {
        let p = s11.rows;
        let n = s22.rows;
        if p == 0 || n == 0 {
            return invalid("supply-rate blocks must be non-empty");
        }
        if s12.rows != p || s12.cols != n {
            return invalid(format!(
                "S12 must be {p}x{n}, got {}x{}",
                s12.rows, s12.cols
            ));
        }
        if !s11.is_symmetric() {
            return invalid("S11 must be square and symmetric");
        }
        if !s22.is_symmetric() {
            return invalid("S22 must be square and symmetric");
        }
        Ok(Self { s11, s12, s22 })
    }

    pub fn zeros(input_dim: usize, state_dim: usize) -> Self {
        Self {
            s11: Matrix::zeros(input_dim, input_dim),
            s12: Matrix::zeros(input_dim, state_dim),
            s22: Matrix::zeros(state_dim, state_dim),
        }
    }

    /// Scalar-block convenience for one-dimensional subsystems.
    pub fn scalar(s11: f64, s12: f64, s22: f64) -> Self {
        Self {
            s11: Matrix::scalar(s11),
            s12: Matrix::scalar(s12),
            s22: Matrix::scalar(s22),
        }
    }

    pub fn input_dim(&self) -> usize {
        self.s11.rows
    }

    pub fn state_dim(&self) -> usize {
        self.s22.rows
    }

    pub fn s11(&self) -> &Matrix {
        &self.s11
    }

    pub fn s12(&self) -> &Matrix {
        &self.s12
    }

    pub fn s22(&self) -> &Matrix {
        &self.s22
    }

    pub fn eval(&self, d: &[f64], x: &[f64]) -> Result<f64> {
        if d.len() != self.input_dim() || x.len() != self.state_dim() {
            return invalid(format!(
                "supply rate expects d in R^{} and x in R^{}, got {} and {}",
                self.input_dim(),
                self.state_dim(),
                d.len(),
                x.len()
            ));
        }
        Ok(self.eval_unchecked(d, x))
    }

    pub(crate) fn eval_unchecked(&self, d: &[f64], x: &[f64]) -> f64 {
        self.s11.bilinear(d, d) + 2.0 * self.s12.bilinear(d, x) + self.s22.bilinear(x, x)
    }

    /// Number of free parameters: upper triangles of S11 and S22 plus all of S12.
    pub fn parameter_count(input_dim: usize, state_dim: usize) -> usize {
        input_dim * (input_dim + 1) / 2 + input_dim * state_dim + state_dim * (state_dim + 1) / 2
    }

    /// Coefficients `g` with `supply(d, x) = Σ g_k · params_k`, in the
    /// parameter order used by [`SupplyRate::from_parameters`].
    pub fn features(d: &[f64], x: &[f64]) -> Vec<f64> {
        let (p, n) = (d.len(), x.len());
        let mut g = Vec::with_capacity(Self::parameter_count(p, n));
        for i in 0..p {
            for j in i..p {
                g.push(if i == j { d[i] * d[i] } else { 2.0 * d[i] * d[j] });
            }
        }
        for di in d {
            for xj in x {
                g.push(2.0 * di * xj);
            }
        }
        for i in 0..n {
            for j in i..n {
                g.push(if i == j { x[i] * x[i] } else { 2.0 * x[i] * x[j] });
            }
        }
        g
    }

    pub fn from_parameters(input_dim: usize, state_dim: usize, params: &[f64]) -> Result<Self> {
        if params.len() != Self::parameter_count(input_dim, state_dim) {
            return invalid("wrong number of supply-rate parameters");
        }
        let mut it = params.iter().copied();
        let mut s11 = Matrix::zeros(input_dim, input_dim);
        for i in 0..input_dim {
            for j in i..input_dim {
                let v = it.next().unwrap();
                s11.set(i, j, v);
                s11.set(j, i, v);
            }
        }
        let mut s12 = Matrix::zeros(input_dim, state_dim);
        for i in 0..input_dim {
            for j in 0..state_dim {
                s12.set(i, j, it.next().unwrap());
            }
        }
        let mut s22 = Matrix::zeros(state_dim, state_dim);
        for i in 0..state_dim {
            for j in i..state_dim {
                let v = it.next().unwrap();
                s22.set(i, j, v);
                s22.set(j, i, v);
            }
        }
        Self::new(s11, s12, s22)
    }

    pub fn parameters(&self) -> Vec<f64> {
        let (p, n) = (self.input_dim(), self.state_dim());
        let mut out = Vec::with_capacity(Self::parameter_count(p, n));
        for i in 0..p {
            for j in i..p {
                out.push(self.s11.get(i, j));
            }
        }
        out.extend_from_slice(&self.s12.data);
        for i in 0..n {
            for j in i..n {
                out.push(self.s22.get(i, j));
            }
        }
        out
    }
}

/// Evaluate `dᵀ S11 d + 2 dᵀ S12 x + xᵀ S22 x`.
pub fn eval_supply(rate: &SupplyRate, d: &[f64], x: &[f64]) -> Result<f64> {
    rate.eval(d, x)
}
