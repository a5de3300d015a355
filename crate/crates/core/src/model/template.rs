use serde::{Deserialize, Serialize};

use crate::error::{invalid, Result};

/// Monomial basis `B(ϑ, x) = Σ_j ϑ_j Π_k x_k^{e_jk}` for a storage certificate.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(try_from = "RawTemplate", into = "RawTemplate")]
pub struct StcTemplate {
    state_dim: usize,
    terms: Vec<Vec<u32>>,
    max_exponent: u32,
}

#[derive(Serialize, Deserialize)]
struct RawTemplate {
    state_dim: usize,
    terms: Vec<Vec<u32>>,
}

impl TryFrom<RawTemplate> for StcTemplate {
    type Error = crate::Error;

    fn try_from(raw: RawTemplate) -> Result<Self> {
        StcTemplate::new(raw.state_dim, raw.terms)
    }
}

impl From<StcTemplate> for RawTemplate {
    fn from(t: StcTemplate) -> Self {
        RawTemplate {
            state_dim: t.state_dim,
            terms: t.terms,
        }
    }
}

impl StcTemplate {
    pub fn new(state_dim: usize, terms: Vec<Vec<u32>>) -> Result<Self> {
        if state_dim == 0 {
            return invalid("template state_dim must be positive");
        }
        if terms.is_empty() {
            return invalid("template needs at least one term");
        }
        if let Some(bad) = terms.iter().position(|t| t.len() != state_dim) {
            return invalid(format!(
                "template term {bad} has {} exponents, expected {state_dim}",
                terms[bad].len()
            ));
        }
        let max_exponent = terms.iter().flatten().copied().max().unwrap_or(0);
        Ok(Self {
            state_dim,
            terms,
            max_exponent,
        })
    }

    /// Every monomial of total degree `<= max_degree`, highest degree first and
    /// lexicographically descending within a degree. For two states and degree
    /// four this is `x1^4, x1^3 x2, …, x2^4, x1^3, …, x2, 1`.
    pub fn full_degree(state_dim: usize, max_degree: u32) -> Result<Self> {
        if state_dim == 0 {
            return invalid("template state_dim must be positive");
        }
        let mut terms = Vec::new();
        for degree in (0..=max_degree).rev() {
            let mut current = vec![0; state_dim];
            compositions(degree, 0, &mut current, &mut terms);
        }
        Self::new(state_dim, terms)
    }

    pub fn state_dim(&self) -> usize {
        self.state_dim
    }

    pub fn term_count(&self) -> usize {
        self.terms.len()
    }

    pub fn terms(&self) -> &[Vec<u32>] {
        &self.terms
    }

    /// Values of each basis monomial at `x`.
    pub fn basis(&self, x: &[f64]) -> Result<Vec<f64>> {
        self.check_point(x)?;
        Ok(self.basis_unchecked(x))
    }

    pub(crate) fn basis_unchecked(&self, x: &[f64]) -> Vec<f64> {
        let table = PowerTable::new(x, self.max_exponent());
        self.terms.iter().map(|e| table.monomial(e)).collect()
    }

    fn max_exponent(&self) -> u32 {
        self.max_exponent
    }

    pub fn eval(&self, coeffs: &CoefficientVector, x: &[f64]) -> Result<f64> {
        self.check_coeffs(coeffs)?;
        self.check_point(x)?;
        Ok(self.eval_unchecked(coeffs.as_slice(), x))
    }

    pub(crate) fn eval_unchecked(&self, coeffs: &[f64], x: &[f64]) -> f64 {
        let table = PowerTable::new(x, self.max_exponent());
        self.terms
            .iter()
            .zip(coeffs)
            .map(|(e, c)| c * table.monomial(e))
            .sum()
    }

    pub fn check_coeffs(&self, coeffs: &CoefficientVector) -> Result<()> {
        if coeffs.len() != self.term_count() {
            return invalid(format!(
                "template has {} terms but {} coefficients were given",
                self.term_count(),
                coeffs.len()
            ));
        }
        Ok(())
    }

    fn check_point(&self, x: &[f64]) -> Result<()> {
        if x.len() != self.state_dim {
            return invalid(format!(
                "point has dimension {}, template expects {}",
                x.len(),
                self.state_dim
            ));
        }
        Ok(())
    }
}

fn compositions(remaining: u32, k: usize, current: &mut Vec<u32>, out: &mut Vec<Vec<u32>>) {
    if k + 1 == current.len() {
        current[k] = remaining;
        out.push(current.clone());
        return;
    }
    for e in (0..=remaining).rev() {
        current[k] = e;
        compositions(remaining - e, k + 1, current, out);
    }
    current[k] = 0;
}

const INLINE_POWERS: usize = 48;

/// `x_k^e` for every coordinate and every `e <= max`, by repeated
/// multiplication; kept on the stack for small templates.
enum PowerTable {
    Inline { width: usize, data: [f64; INLINE_POWERS] },
    Heap { width: usize, data: Vec<f64> },
}

impl PowerTable {
    fn new(x: &[f64], max: u32) -> Self {
        let width = max as usize + 1;
        let fill = |data: &mut [f64]| {
            for (k, v) in x.iter().enumerate() {
                let mut p = 1.0;
                for slot in &mut data[k * width..(k + 1) * width] {
                    *slot = p;
                    p *= v;
                }
            }
        };
        if x.len() * width <= INLINE_POWERS {
            let mut data = [0.0; INLINE_POWERS];
            fill(&mut data);
            PowerTable::Inline { width, data }
        } else {
            let mut data = vec![0.0; x.len() * width];
            fill(&mut data);
            PowerTable::Heap { width, data }
        }
    }

    fn monomial(&self, exponents: &[u32]) -> f64 {
        let (width, data) = match self {
            PowerTable::Inline { width, data } => (*width, &data[..]),
            PowerTable::Heap { width, data } => (*width, &data[..]),
        };
        exponents
            .iter()
            .enumerate()
            .map(|(k, &e)| data[k * width + e as usize])
            .product()
    }
}

/// Coefficients `ϑ` of a storage certificate template.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct CoefficientVector(pub Vec<f64>);

impl CoefficientVector {
    pub fn zeros(len: usize) -> Self {
        Self(vec![0.0; len])
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.0
    }
}

impl From<Vec<f64>> for CoefficientVector {
    fn from(v: Vec<f64>) -> Self {
        Self(v)
    }
}

/// Evaluate `B(ϑ, x)` for a template and coefficient vector.
pub fn eval_template(
    template: &StcTemplate,
    coeffs: &CoefficientVector,
    x: &[f64],
) -> Result<f64> {
    template.eval(coeffs, x)
}
