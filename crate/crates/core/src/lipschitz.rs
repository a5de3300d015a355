//! Lipschitz constants from sampled slopes and a reverse-Weibull fit of
//! batch maxima.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{invalid, Error, Result};
use crate::model::{IntervalBox, SubsystemClass};
use crate::sampling::{sq_dist, SampleSet};
use crate::scp::{ScpSolution, ScpStatus};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct LipschitzConfig {
    /// Largest distance between a base point and its partner.
    pub gamma: f64,
    /// Slopes per batch.
    pub inner_count: usize,
    /// Number of batches (batch maxima fed to the fit).
    pub outer_count: usize,
    pub seed: u64,
}

impl Default for LipschitzConfig {
    fn default() -> Self {
        Self {
            gamma: 1e-3,
            inner_count: 200,
            outer_count: 50,
            seed: 0,
        }
    }
}

impl LipschitzConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.gamma > 0.0 && self.gamma.is_finite()) {
            return invalid("gamma must be finite and positive");
        }
        if self.inner_count < 1 || self.outer_count < 1 {
            return invalid("inner_count and outer_count must be at least 1");
        }
        Ok(())
    }
}

/// Reverse-Weibull parameters: `F(r) = exp(-((location - r)/scale)^shape)` for `r < location`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct WeibullFit {
    pub location: f64,
    pub scale: f64,
    pub shape: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LipschitzEstimate {
    pub value: f64,
    /// Batch maxima `R_j`, in batch order.
    pub max_slope_samples: Vec<f64>,
    pub fit: Option<WeibullFit>,
    pub fallback_used: bool,
}

impl LipschitzEstimate {
    pub fn observed_max(&self) -> f64 {
        self.max_slope_samples.iter().copied().fold(0.0, f64::max)
    }
}

fn batch_rng(seed: u64, batch: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(batch);
    rng
}

fn uniform_in(rng: &mut ChaCha8Rng, domain: &IntervalBox) -> Vec<f64> {
    domain
        .lower()
        .iter()
        .zip(domain.upper())
        .map(|(&l, &u)| if u > l { rng.gen_range(l..=u) } else { l })
        .collect()
}

fn partner(rng: &mut ChaCha8Rng, domain: &IntervalBox, p: &[f64], gamma: f64) -> Vec<f64> {
    let active: Vec<usize> = (0..p.len()).filter(|&k| domain.upper()[k] > domain.lower()[k]).collect();
    loop {
        let mut dir = vec![0.0; p.len()];
        let mut norm = 0.0;
        while norm < 1e-12 {
            for &k in &active {
                // Box-Muller normal for an isotropic direction.
                let u1: f64 = rng.gen_range(f64::EPSILON..1.0);
                let u2: f64 = rng.gen();
                dir[k] = (-2.0 * u1.ln()).sqrt() * (std::f64::consts::TAU * u2).cos();
            }
            norm = dir.iter().map(|v| v * v).sum::<f64>().sqrt();
        }
        let radius = gamma * (1.0 - rng.gen::<f64>());
        let mut q: Vec<f64> = p.iter().zip(&dir).map(|(a, v)| a + radius * v / norm).collect();
        domain.clamp(&mut q);
        if sq_dist(p, &q) > 0.0 {
            return q;
        }
    }
}

fn one_batch(
    target: &(dyn Fn(&[f64]) -> f64 + Sync),
    domain: &IntervalBox,
    config: &LipschitzConfig,
    batch: u64,
) -> Vec<f64> {
    let mut rng = batch_rng(config.seed, batch);
    (0..config.inner_count)
        .map(|_| {
            let p = uniform_in(&mut rng, domain);
            let q = partner(&mut rng, domain, &p, config.gamma);
            (target(&p) - target(&q)).abs() / sq_dist(&p, &q).sqrt()
        })
        .collect()
}

fn check_domain(domain: &IntervalBox) -> Result<()> {
    if domain.is_degenerate() {
        return invalid("Lipschitz estimation needs a box with non-zero width in some dimension");
    }
    Ok(())
}

/// One batch of slopes (batch index 0 of the configured seed).
pub fn slope_batch(
    target: &(dyn Fn(&[f64]) -> f64 + Sync),
    domain: &IntervalBox,
    config: &LipschitzConfig,
) -> Result<Vec<f64>> {
    config.validate()?;
    check_domain(domain)?;
    Ok(one_batch(target, domain, config, 0))
}

pub fn estimate_lipschitz(
    target: &(dyn Fn(&[f64]) -> f64 + Sync),
    domain: &IntervalBox,
    config: &LipschitzConfig,
) -> Result<LipschitzEstimate> {
    config.validate()?;
    check_domain(domain)?;
    let maxima: Vec<f64> = (0..config.outer_count as u64)
        .into_par_iter()
        .map(|j| one_batch(target, domain, config, j).into_iter().fold(0.0, f64::max))
        .collect();
    Ok(from_maxima(maxima))
}

/// Turn batch maxima into an estimate: the fitted location, or the largest
/// maximum when the sample is degenerate or the fit fails.
pub fn from_maxima(maxima: Vec<f64>) -> LipschitzEstimate {
    let top = maxima.iter().copied().fold(0.0, f64::max);
    let fit = if variance(&maxima) < 1e-12 { None } else { fit_reverse_weibull(&maxima) };
    match fit {
        Some(f) if f.location >= top => LipschitzEstimate {
            value: f.location,
            max_slope_samples: maxima,
            fit: Some(f),
            fallback_used: false,
        },
        _ => LipschitzEstimate {
            value: top,
            max_slope_samples: maxima,
            fit: None,
            fallback_used: true,
        },
    }
}

fn variance(v: &[f64]) -> f64 {
    if v.len() < 2 {
        return 0.0;
    }
    let m = v.iter().sum::<f64>() / v.len() as f64;
    v.iter().map(|x| (x - m) * (x - m)).sum::<f64>() / (v.len() - 1) as f64
}

/// Maximum-likelihood reverse-Weibull fit. The scale is profiled out in
/// closed form; location offset and shape are searched in log space with
/// the shape held at or above 1.
pub fn fit_reverse_weibull(r: &[f64]) -> Option<WeibullFit> {
    if r.len() < 3 || r.iter().any(|v| !v.is_finite()) {
        return None;
    }
    let top = r.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let bottom = r.iter().copied().fold(f64::INFINITY, f64::min);
    let range = top - bottom;
    if range <= 0.0 {
        return None;
    }
    let nf = r.len() as f64;
    let lo_a = (range * 1e-9).ln();
    let hi_a = (range * 20.0).ln();
    let (lo_u, hi_u) = (-12.0, 60f64.ln());

    let unpack = |p: [f64; 2]| {
        let mu = top + p[0].exp();
        let k = 1.0 + p[1].exp();
        let mean_pow = r.iter().map(|v| (mu - v).powf(k)).sum::<f64>() / nf;
        (mu, k, mean_pow.powf(1.0 / k))
    };
    let nll = |p: [f64; 2]| -> f64 {
        if p[0] < lo_a || p[0] > hi_a || p[1] < lo_u || p[1] > hi_u {
            return f64::INFINITY;
        }
        let (mu, k, s) = unpack(p);
        // With the profiled scale the exponential term sums to n.
        let mut ll = nf * (k.ln() - k * s.ln()) - nf;
        for v in r {
            ll += (k - 1.0) * (mu - v).ln();
        }
        if ll.is_finite() {
            -ll
        } else {
            f64::INFINITY
        }
    };

    let spacing = range / (r.len() - 1) as f64;
    let mut best = None::<([f64; 2], f64)>;
    for a0 in [spacing.ln(), (range * 0.1).ln(), range.ln()] {
        for u0 in [0.0, 1.0, 2.0] {
            let start = [a0.clamp(lo_a, hi_a), u0];
            if let Some((p, v)) = bfgs2(&nll, start) {
                if best.is_none_or(|(_, b)| v < b) {
                    best = Some((p, v));
                }
            }
        }
    }
    let (p, _) = best?;
    // Hitting the upper location bound means the likelihood kept rising
    // towards an unbounded tail: no usable endpoint.
    if p[0] > hi_a - 1e-3 {
        return None;
    }
    let (location, shape, scale) = unpack(p);
    (location.is_finite() && scale.is_finite() && scale > 0.0).then_some(WeibullFit { location, scale, shape })
}

fn grad2(f: &dyn Fn([f64; 2]) -> f64, p: [f64; 2]) -> Option<[f64; 2]> {
    let mut g = [0.0; 2];
    for i in 0..2 {
        let h = 1e-6 * (1.0 + p[i].abs());
        let mut a = p;
        let mut b = p;
        a[i] += h;
        b[i] -= h;
        let (fa, fb) = (f(a), f(b));
        g[i] = if fa.is_finite() && fb.is_finite() {
            (fa - fb) / (2.0 * h)
        } else {
            let f0 = f(p);
            if fa.is_finite() {
                (fa - f0) / h
            } else if fb.is_finite() {
                (f0 - fb) / h
            } else {
                return None;
            }
        };
    }
    Some(g)
}

fn bfgs2(f: &dyn Fn([f64; 2]) -> f64, start: [f64; 2]) -> Option<([f64; 2], f64)> {
    let mut x = start;
    let mut fx = f(x);
    if !fx.is_finite() {
        return None;
    }
    let mut g = grad2(f, x)?;
    let mut h = [[1.0, 0.0], [0.0, 1.0]];
    for _ in 0..200 {
        let gn = (g[0] * g[0] + g[1] * g[1]).sqrt();
        if gn < 1e-8 {
            break;
        }
        let mut d = [-(h[0][0] * g[0] + h[0][1] * g[1]), -(h[1][0] * g[0] + h[1][1] * g[1])];
        let mut slope = d[0] * g[0] + d[1] * g[1];
        if slope >= 0.0 {
            h = [[1.0, 0.0], [0.0, 1.0]];
            d = [-g[0], -g[1]];
            slope = -gn * gn;
        }
        let mut t = 1.0;
        let mut accepted = None;
        for _ in 0..60 {
            let xn = [x[0] + t * d[0], x[1] + t * d[1]];
            let fxn = f(xn);
            if fxn.is_finite() && fxn <= fx + 1e-4 * t * slope {
                accepted = Some((xn, fxn));
                break;
            }
            t *= 0.5;
        }
        let Some((xn, fxn)) = accepted else { break };
        let gnew = grad2(f, xn)?;
        let s = [xn[0] - x[0], xn[1] - x[1]];
        let y = [gnew[0] - g[0], gnew[1] - g[1]];
        let sy = s[0] * y[0] + s[1] * y[1];
        let improvement = fx - fxn;
        x = xn;
        fx = fxn;
        g = gnew;
        if sy > 1e-14 {
            let hy = [h[0][0] * y[0] + h[0][1] * y[1], h[1][0] * y[0] + h[1][1] * y[1]];
            let yhy = y[0] * hy[0] + y[1] * hy[1];
            let rho = 1.0 / sy;
            for i in 0..2 {
                for j in 0..2 {
                    h[i][j] += (1.0 + yhy * rho) * rho * s[i] * s[j] - rho * (hy[i] * s[j] + s[i] * hy[j]);
                }
            }
        }
        if improvement.abs() < 1e-13 * (1.0 + fx.abs()) {
            break;
        }
    }
    Some((x, fx))
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ClassLipschitz {
    /// Of `B` over the state box.
    pub l1: LipschitzEstimate,
    /// Of `B(f(x,d)) - B(x)` over the joint box.
    pub l2: LipschitzEstimate,
    /// `l2` came from sample-pair slopes because the class has no oracle.
    pub data_limited: bool,
}

fn require_optimal(class: &SubsystemClass, solution: &ScpSolution) -> Result<()> {
    if solution.status != ScpStatus::Optimal {
        return invalid(format!("class `{}`: Lipschitz estimation needs an optimal solution", class.id));
    }
    class.template().check_coeffs(&solution.coeffs)
}

/// L¹ of the certificate over the state box.
pub fn estimate_certificate(
    class: &SubsystemClass,
    solution: &ScpSolution,
    config: &LipschitzConfig,
) -> Result<LipschitzEstimate> {
    require_optimal(class, solution)?;
    let template = class.template();
    let th = solution.coeffs.as_slice();
    estimate_lipschitz(&|x: &[f64]| template.eval_unchecked(th, x), class.state_box(), config)
}

pub fn estimate_for_class(
    class: &SubsystemClass,
    solution: &ScpSolution,
    config: &LipschitzConfig,
) -> Result<ClassLipschitz> {
    let l1 = estimate_certificate(class, solution, config)?;
    let oracle = class.oracle().ok_or_else(|| Error::MissingInput {
        class: class.id.clone(),
        what: "transition oracle",
    })?;
    let template = class.template();
    let th = solution.coeffs.as_slice();
    let n = class.state_dim();
    let decrease = |z: &[f64]| {
        let (x, d) = z.split_at(n);
        template.eval_unchecked(th, &oracle.step(x, d)) - template.eval_unchecked(th, x)
    };
    let l2 = estimate_lipschitz(&decrease, &class.joint_box(), config)?;
    Ok(ClassLipschitz {
        l1,
        l2,
        data_limited: false,
    })
}

/// For classes known only through samples: L² is the largest slope of the
/// decrease map between sample pairs at most `gamma` apart. No fit is made.
pub fn estimate_from_samples(
    class: &SubsystemClass,
    solution: &ScpSolution,
    samples: &SampleSet,
    config: &LipschitzConfig,
) -> Result<ClassLipschitz> {
    let l1 = estimate_certificate(class, solution, config)?;
    let template = class.template();
    let th = solution.coeffs.as_slice();
    let pts = samples.joint_points();
    let vals: Vec<f64> = samples
        .pairs
        .iter()
        .map(|s| template.eval_unchecked(th, &s.next) - template.eval_unchecked(th, &s.x))
        .collect();
    let mut order: Vec<usize> = (0..pts.len()).collect();
    order.sort_by(|&a, &b| pts[a][0].total_cmp(&pts[b][0]).then(a.cmp(&b)));
    let g2 = config.gamma * config.gamma;
    let best = (0..order.len())
        .into_par_iter()
        .map(|ia| {
            let a = order[ia];
            let mut m = 0.0f64;
            for &b in &order[ia + 1..] {
                if pts[b][0] - pts[a][0] > config.gamma {
                    break;
                }
                let d2 = sq_dist(&pts[a], &pts[b]);
                if d2 > 0.0 && d2 <= g2 {
                    m = m.max((vals[a] - vals[b]).abs() / d2.sqrt());
                }
            }
            m
        })
        .reduce(|| 0.0, f64::max);
    Ok(ClassLipschitz {
        l1,
        l2: LipschitzEstimate {
            value: best,
            max_slope_samples: vec![best],
            fit: None,
            fallback_used: true,
        },
        data_limited: true,
    })
}
