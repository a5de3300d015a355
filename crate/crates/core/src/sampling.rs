//! Deterministic collection of one-step transition samples and their
//! dispersion (covering radius) over `X × D`.

use std::io::{Read, Write};
use std::path::Path;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{invalid, Error, Result};
use crate::model::{IntervalBox, SubsystemClass};

/// One record `((x, d), f(x, d))`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SamplePair {
    pub x: Vec<f64>,
    pub d: Vec<f64>,
    pub next: Vec<f64>,
}

/// Per-dimension point counts used to build a uniform sample grid.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct GridSpec {
    pub state_counts: Vec<usize>,
    pub input_counts: Vec<usize>,
}

impl GridSpec {
    pub fn joint(&self) -> Vec<usize> {
        self.state_counts
            .iter()
            .chain(&self.input_counts)
            .copied()
            .collect()
    }

    pub fn total(&self) -> usize {
        self.joint().iter().product()
    }

    /// Same grid with `factor` times as many intervals per dimension.
    pub fn refined(&self, factor: usize) -> GridSpec {
        let f = |c: &usize| if *c <= 1 { factor.max(2) } else { (c - 1) * factor + 1 };
        GridSpec {
            state_counts: self.state_counts.iter().map(f).collect(),
            input_counts: self.input_counts.iter().map(f).collect(),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SampleSet {
    pub pairs: Vec<SamplePair>,
    pub dispersion: f64,
    pub grid: Option<GridSpec>,
}

impl SampleSet {
    pub fn len(&self) -> usize {
        self.pairs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.pairs.is_empty()
    }

    pub fn state_dim(&self) -> usize {
        self.pairs.first().map_or(0, |p| p.x.len())
    }

    pub fn input_dim(&self) -> usize {
        self.pairs.first().map_or(0, |p| p.d.len())
    }

    /// Joint points `(x, d)` of every pair.
    pub fn joint_points(&self) -> Vec<Vec<f64>> {
        self.pairs
            .iter()
            .map(|p| p.x.iter().chain(&p.d).copied().collect())
            .collect()
    }

    pub fn write_csv<W: Write>(&self, writer: W) -> Result<()> {
        let (n, p) = (self.state_dim(), self.input_dim());
        let mut w = csv::Writer::from_writer(writer);
        let header: Vec<String> = (1..=n)
            .map(|k| format!("x{k}"))
            .chain((1..=p).map(|k| format!("d{k}")))
            .chain((1..=n).map(|k| format!("fx{k}")))
            .collect();
        w.write_record(&header)?;
        for pair in &self.pairs {
            let row: Vec<String> = pair
                .x
                .iter()
                .chain(&pair.d)
                .chain(&pair.next)
                .map(|v| format!("{v:?}"))
                .collect();
            w.write_record(&row)?;
        }
        w.flush()?;
        Ok(())
    }

    pub fn save_csv(&self, path: &Path) -> Result<()> {
        self.write_csv(std::fs::File::create(path)?)
    }

    /// Read pairs from CSV with `x*`, `d*`, `fx*` columns. Dispersion is left
    /// at zero; compute it with [`dispersion_general`].
    pub fn read_csv<R: Read>(reader: R) -> Result<SampleSet> {
        let mut r = csv::Reader::from_reader(reader);
        let header = r.headers()?.clone();
        let kind = |h: &str| {
            if h.starts_with("fx") {
                2
            } else if h.starts_with('x') {
                0
            } else if h.starts_with('d') {
                1
            } else {
                3
            }
        };
        let kinds: Vec<u8> = header.iter().map(kind).collect();
        if kinds.iter().any(|k| *k == 3) {
            return invalid("sample CSV columns must be named x*, d* or fx*");
        }
        let n = kinds.iter().filter(|k| **k == 0).count();
        let p = kinds.iter().filter(|k| **k == 1).count();
        let nf = kinds.iter().filter(|k| **k == 2).count();
        if n == 0 || p == 0 || nf != n {
            return invalid("sample CSV needs x, d and fx columns with matching state dimension");
        }
        let mut pairs = Vec::new();
        for (line, rec) in r.records().enumerate() {
            let rec = rec?;
            let mut pair = SamplePair {
                x: Vec::with_capacity(n),
                d: Vec::with_capacity(p),
                next: Vec::with_capacity(n),
            };
            for (field, k) in rec.iter().zip(&kinds) {
                let v: f64 = field.trim().parse().map_err(|_| {
                    Error::InvalidInput(format!("row {}: `{field}` is not a number", line + 1))
                })?;
                match k {
                    0 => pair.x.push(v),
                    1 => pair.d.push(v),
                    _ => pair.next.push(v),
                }
            }
            pairs.push(pair);
        }
        if pairs.is_empty() {
            return invalid("sample CSV has no rows");
        }
        Ok(SampleSet {
            pairs,
            dispersion: 0.0,
            grid: None,
        })
    }

    pub fn load_csv(path: &Path) -> Result<SampleSet> {
        Self::read_csv(std::fs::File::open(path)?)
    }
}

fn axis_points(lo: f64, hi: f64, count: usize) -> Vec<f64> {
    if count == 1 {
        return vec![0.5 * (lo + hi)];
    }
    let last = (count - 1) as f64;
    (0..count)
        .map(|i| {
            if i + 1 == count {
                hi
            } else {
                lo + (hi - lo) * (i as f64 / last)
            }
        })
        .collect()
}

/// Uniform Cartesian grid including both endpoints of every axis (a single
/// point sits at the midpoint). Points are in lexicographic order with the
/// first coordinate varying slowest.
pub fn grid_samples(domain: &IntervalBox, counts: &[usize]) -> Result<Vec<Vec<f64>>> {
    let axes = grid_axes(domain, counts)?;
    let total: usize = counts.iter().product();
    let mut out = Vec::with_capacity(total);
    let mut idx = vec![0usize; counts.len()];
    for _ in 0..total {
        out.push(idx.iter().zip(&axes).map(|(i, a)| a[*i]).collect());
        for k in (0..idx.len()).rev() {
            idx[k] += 1;
            if idx[k] < counts[k] {
                break;
            }
            idx[k] = 0;
        }
    }
    Ok(out)
}

fn grid_axes(domain: &IntervalBox, counts: &[usize]) -> Result<Vec<Vec<f64>>> {
    if counts.len() != domain.dim() {
        return invalid(format!(
            "{} grid counts for a {}-dimensional box",
            counts.len(),
            domain.dim()
        ));
    }
    let mut axes = Vec::with_capacity(counts.len());
    for (k, &c) in counts.iter().enumerate() {
        if c == 0 {
            return invalid(format!("grid count for dimension {k} must be >= 1"));
        }
        let (lo, hi) = (domain.lower()[k], domain.upper()[k]);
        if lo == hi && c > 1 {
            return invalid(format!("dimension {k} is empty but {c} grid points were requested"));
        }
        axes.push(axis_points(lo, hi, c));
    }
    Ok(axes)
}

/// Query the class oracle once per point of the `X × D` grid.
pub fn collect_pairs(
    class: &SubsystemClass,
    state_counts: &[usize],
    input_counts: &[usize],
) -> Result<SampleSet> {
    let oracle = class.oracle().ok_or_else(|| {
        Error::InvalidInput(format!("class `{}` has no oracle to sample", class.id))
    })?;
    let spec = GridSpec {
        state_counts: state_counts.to_vec(),
        input_counts: input_counts.to_vec(),
    };
    let joint = class.joint_box();
    let points = grid_samples(&joint, &spec.joint())?;
    let n = class.state_dim();
    let pairs: Vec<SamplePair> = points
        .into_par_iter()
        .map(|mut p| {
            let d = p.split_off(n);
            let next = oracle.step(&p, &d);
            if next.len() != n || next.iter().any(|v| !v.is_finite()) {
                return Err(Error::DataFault {
                    x: p,
                    d,
                    output: next,
                });
            }
            Ok(SamplePair { x: p, d, next })
        })
        .collect::<Result<_>>()?;
    let dispersion = dispersion_of_grid(&joint, &spec.joint())?;
    Ok(SampleSet {
        pairs,
        dispersion,
        grid: Some(spec),
    })
}

/// Exact covering radius of a uniform grid: half the diagonal of one cell,
/// with a single midpoint counting as a cell of the full width.
pub fn dispersion_of_grid(domain: &IntervalBox, counts: &[usize]) -> Result<f64> {
    if counts.len() != domain.dim() || counts.contains(&0) {
        return invalid("grid counts must be positive and match the box dimension");
    }
    let sum: f64 = domain
        .widths()
        .iter()
        .zip(counts)
        .map(|(w, &c)| {
            let delta = if c == 1 { *w } else { w / (c - 1) as f64 };
            delta * delta
        })
        .sum();
    Ok(0.5 * sum.sqrt())
}

/// Covering radius of an arbitrary sample set, bounded from above: the
/// largest nearest-sample distance over a probe grid plus the probe grid's
/// own covering radius.
pub fn dispersion_general(
    domain: &IntervalBox,
    samples: &[Vec<f64>],
    probe_counts: &[usize],
) -> Result<f64> {
    if samples.is_empty() {
        return invalid("dispersion needs at least one sample");
    }
    if samples.iter().any(|s| s.len() != domain.dim()) {
        return invalid("samples do not match the box dimension");
    }
    let probes = grid_samples(domain, probe_counts)?;
    let worst = probes
        .par_iter()
        .map(|p| {
            samples
                .iter()
                .map(|s| sq_dist(p, s))
                .fold(f64::INFINITY, f64::min)
        })
        .reduce(|| 0.0, f64::max)
        .sqrt();
    Ok(worst + dispersion_of_grid(domain, probe_counts)?)
}

pub(crate) fn sq_dist(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum()
}
