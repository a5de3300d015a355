use serde::{Deserialize, Serialize};

use crate::error::{invalid, Result};

/// Closed axis-aligned box `[lower, upper]` in `R^n`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "RawBox", into = "RawBox")]
pub struct IntervalBox {
    lower: Vec<f64>,
    upper: Vec<f64>,
}

#[derive(Serialize, Deserialize)]
struct RawBox {
    lower: Vec<f64>,
    upper: Vec<f64>,
}

impl TryFrom<RawBox> for IntervalBox {
    type Error = crate::Error;

    fn try_from(raw: RawBox) -> Result<Self> {
        IntervalBox::new(raw.lower, raw.upper)
    }
}

impl From<IntervalBox> for RawBox {
    fn from(b: IntervalBox) -> Self {
        RawBox {
            lower: b.lower,
            upper: b.upper,
        }
    }
}

impl IntervalBox {
    pub fn new(lower: Vec<f64>, upper: Vec<f64>) -> Result<Self> {
        if lower.is_empty() {
            return invalid("box must have dimension >= 1");
        }
        if lower.len() != upper.len() {
            return invalid(format!(
                "box bounds have different lengths ({} vs {})",
                lower.len(),
                upper.len()
            ));
        }
        for (k, (lo, hi)) in lower.iter().zip(&upper).enumerate() {
            if !lo.is_finite() || !hi.is_finite() {
                return invalid(format!("box coordinate {k} is not finite"));
            }
            if lo > hi {
                return invalid(format!("box coordinate {k}: lower {lo} > upper {hi}"));
            }
        }
        Ok(Self { lower, upper })
    }

    /// Convenience constructor from `(lower, upper)` pairs.
    pub fn from_bounds(bounds: &[(f64, f64)]) -> Result<Self> {
        let (lower, upper) = bounds.iter().copied().unzip();
        Self::new(lower, upper)
    }

    pub fn dim(&self) -> usize {
        self.lower.len()
    }

    pub fn lower(&self) -> &[f64] {
        &self.lower
    }

    pub fn upper(&self) -> &[f64] {
        &self.upper
    }

    pub fn widths(&self) -> Vec<f64> {
        self.lower.iter().zip(&self.upper).map(|(l, u)| u - l).collect()
    }

    pub fn midpoint(&self) -> Vec<f64> {
        self.lower
            .iter()
            .zip(&self.upper)
            .map(|(l, u)| 0.5 * (l + u))
            .collect()
    }

    pub fn diagonal(&self) -> f64 {
        self.widths().iter().map(|w| w * w).sum::<f64>().sqrt()
    }

    pub fn contains(&self, x: &[f64]) -> bool {
        self.contains_within(x, 0.0)
    }

    /// Membership test that accepts points up to `tol` outside each face.
    pub fn contains_within(&self, x: &[f64], tol: f64) -> bool {
        x.len() == self.dim()
            && x
                .iter()
                .zip(self.lower.iter().zip(&self.upper))
                .all(|(v, (l, u))| *v >= l - tol && *v <= u + tol)
    }

    pub fn contains_box(&self, other: &IntervalBox) -> bool {
        other.dim() == self.dim()
            && (0..self.dim())
                .all(|k| other.lower[k] >= self.lower[k] && other.upper[k] <= self.upper[k])
    }

    /// Closed boxes intersect, including when they only share a face.
    pub fn intersects(&self, other: &IntervalBox) -> bool {
        other.dim() == self.dim()
            && (0..self.dim())
                .all(|k| self.lower[k] <= other.upper[k] && other.lower[k] <= self.upper[k])
    }

    /// Coordinate-wise projection of `x` onto the box. Returns whether any
    /// coordinate moved.
    pub fn clamp(&self, x: &mut [f64]) -> bool {
        let mut moved = false;
        for (v, (l, u)) in x.iter_mut().zip(self.lower.iter().zip(&self.upper)) {
            let c = v.clamp(*l, *u);
            if c != *v {
                moved = true;
                *v = c;
            }
        }
        moved
    }

    /// Cartesian product `self × other`.
    pub fn product(&self, other: &IntervalBox) -> IntervalBox {
        let mut lower = self.lower.clone();
        lower.extend_from_slice(&other.lower);
        let mut upper = self.upper.clone();
        upper.extend_from_slice(&other.upper);
        IntervalBox { lower, upper }
    }

    pub fn is_degenerate(&self) -> bool {
        self.widths().iter().all(|w| *w == 0.0)
    }
}
