//! Acceptance run: one PASS/FAIL line per criterion, non-zero exit if any fails.

use std::path::{Path, PathBuf};
use std::sync::Arc;
use std::time::{Duration, Instant};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use stcnet::compose::{class_margins, store_certificate};
use stcnet::config::PipelineConfig;
use stcnet::lipschitz::{estimate_lipschitz, LipschitzConfig};
use stcnet::lp::{LinearProgram, LpStatus, SolverOptions};
use stcnet::model::{CoefficientVector, IntervalBox, SafetySpec, StcTemplate, SubsystemClass, SupplyRate, TransitionOracle};
use stcnet::pipeline::{run_pipeline, verify_class, PipelineOutcome};
use stcnet::sampling::{GridSpec, SamplePair, SampleSet};
use stcnet::scp::{build_scp, solve_scp, ScpOptions, ScpSolution, ScpStatus};
use stcnet::verify::check_level_sets;

struct Line {
    id: usize,
    passed: bool,
    detail: String,
    elapsed: Duration,
    budget: Duration,
}

fn run(id: usize, budget_secs: f64, f: impl FnOnce() -> (bool, String)) -> Line {
    let start = Instant::now();
    let (passed, detail) = f();
    let elapsed = start.elapsed();
    let budget = Duration::from_secs_f64(budget_secs);
    let line = Line {
        id,
        passed: passed && elapsed < budget,
        detail,
        elapsed,
        budget,
    };
    println!(
        "criterion {}: {} ({:.3}s of {:.1}s) {}",
        line.id,
        if line.passed { "PASS" } else { "FAIL" },
        line.elapsed.as_secs_f64(),
        line.budget.as_secs_f64(),
        line.detail
    );
    line
}

fn config(name: &str) -> PipelineConfig {
    let path = Path::new(env!("CARGO_MANIFEST_DIR")).join("../../configs").join(name);
    PipelineConfig::load(&path).unwrap_or_else(|e| panic!("{}: {e}", path.display()))
}

fn printed(v: f64) -> f64 {
    format!("{v:.4}").parse().unwrap()
}

fn margin_regression(eta: f64, beta: f64, l1: f64, l2: f64, theta: f64, want: (f64, f64), tol: (f64, f64)) -> (bool, String) {
    let m = class_margins(eta, beta, l1, l2, theta, 0.0, 1.0);
    let (p1, p2) = (printed(m.m1), printed(m.m2));
    let ok = (p1 - want.0).abs() <= tol.0 && (p2 - want.1).abs() <= tol.1;
    (ok, format!("m1 = {:.4} (want {}), m2 = {:.4} (want {})", m.m1, want.0, m.m2, want.1))
}

fn published_room_level_sets() -> (bool, String) {
    let class = stcnet::blackbox::Benchmark::Room.class();
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
    let rep = check_level_sets(&class, &sol, &[1001]).unwrap();
    // endpoint evaluation by hand: 0.0151 x^4 - 0.7 x^2 - 0.7
    let endpoint = |x: f64| 0.0151 * x.powi(4) - 0.7 * x * x - 0.7;
    let (a, b) = (endpoint(11.0), endpoint(12.0));
    let ok = (rep.initial_max - a).abs() <= 1e-6
        && (rep.unsafe_min - b).abs() <= 1e-6
        && (a - 135.6791).abs() <= 1e-6
        && (b - 211.6136).abs() <= 1e-6
        && rep.passed();
    (
        ok,
        format!(
            "max on [10,11] = {:.6} at {:?}, min on [12,13] = {:.6} at {:?}, sigma 150 / phi 200 hold: {}",
            rep.initial_max,
            rep.initial_argmax,
            rep.unsafe_min,
            rep.unsafe_argmin,
            rep.passed()
        ),
    )
}

fn lipschitz_convergence() -> (bool, String) {
    let cfg = |gamma, inner, outer| LipschitzConfig {
        gamma,
        inner_count: inner,
        outer_count: outer,
        seed: 0,
    };
    let sin = |x: &[f64]| x[0].sin();
    let sq = |x: &[f64]| x[0] * x[0];
    let two_pi = IntervalBox::new(vec![0.0], vec![std::f64::consts::TAU]).unwrap();
    let unit = IntervalBox::new(vec![0.0], vec![1.0]).unwrap();
    let l_sin = estimate_lipschitz(&sin, &two_pi, &cfg(1e-3, 200, 50)).unwrap().value;
    let l_sq = estimate_lipschitz(&sq, &unit, &cfg(1e-3, 200, 50)).unwrap().value;
    let mut ladder = Vec::new();
    for (gamma, count) in [(1e-1, 10), (1e-2, 50), (1e-3, 200)] {
        ladder.push(estimate_lipschitz(&sq, &unit, &cfg(gamma, count, count)).unwrap().value);
    }
    let monotone = ladder.windows(2).all(|w| w[1] >= w[0] - 0.1);
    let ok = (l_sin - 1.0).abs() <= 0.05 && (l_sq - 2.0).abs() <= 0.1 && monotone && (ladder[2] - 2.0).abs() <= 0.1;
    (ok, format!("sin {l_sin:.6}, x^2 {l_sq:.6}, ladder {ladder:.4?}"))
}

/// Minimum of a bounded LP over all vertices of its feasible polytope.
fn vertex_enumeration(p: &LinearProgram) -> Option<f64> {
    let n = p.num_vars();
    let mut cons: Vec<(Vec<f64>, f64)> = p.rows.iter().cloned().zip(p.rhs.iter().copied()).collect();
    for j in 0..n {
        let mut e = vec![0.0; n];
        e[j] = 1.0;
        cons.push((e.clone(), p.upper[j]));
        e[j] = -1.0;
        cons.push((e, -p.lower[j]));
    }
    let feasible = |x: &[f64]| cons.iter().all(|(r, b)| r.iter().zip(x).map(|(u, v)| u * v).sum::<f64>() <= b + 1e-9);
    let mut best: Option<f64> = None;
    for_each_subset(cons.len(), n, &mut |idx| {
        let mut a: Vec<Vec<f64>> = idx
            .iter()
            .map(|&k| {
                let mut r = cons[k].0.clone();
                r.push(cons[k].1);
                r
            })
            .collect();
        if let Some(x) = solve_dense(&mut a, n) {
            if feasible(&x) {
                let v: f64 = p.objective.iter().zip(&x).map(|(u, v)| u * v).sum();
                best = Some(best.map_or(v, |b| b.min(v)));
            }
        }
    });
    best
}

fn for_each_subset(m: usize, n: usize, f: &mut dyn FnMut(&[usize])) {
    fn go(start: usize, m: usize, n: usize, cur: &mut Vec<usize>, f: &mut dyn FnMut(&[usize])) {
        if cur.len() == n {
            f(cur);
            return;
        }
        for k in start..m {
            cur.push(k);
            go(k + 1, m, n, cur, f);
            cur.pop();
        }
    }
    go(0, m, n, &mut Vec::new(), f);
}

fn solve_dense(a: &mut [Vec<f64>], n: usize) -> Option<Vec<f64>> {
    for c in 0..n {
        let piv = (c..n).max_by(|&i, &j| a[i][c].abs().total_cmp(&a[j][c].abs()))?;
        if a[piv][c].abs() < 1e-9 {
            return None;
        }
        a.swap(c, piv);
        for r in 0..n {
            if r != c {
                let f = a[r][c] / a[c][c];
                for k in c..=n {
                    a[r][k] -= f * a[c][k];
                }
            }
        }
    }
    Some((0..n).map(|i| a[i][n] / a[i][i]).collect())
}

struct Identity;

impl TransitionOracle for Identity {
    fn step(&self, x: &[f64], _d: &[f64]) -> Vec<f64> {
        x.to_vec()
    }
    fn name(&self) -> &str {
        "identity"
    }
}

fn scp_oracle_equivalence() -> (bool, String) {
    let mut rng = ChaCha8Rng::seed_from_u64(2024);
    let mut worst: f64 = 0.0;
    let (mut optimal, mut infeasible, mut mismatched) = (0, 0, 0);
    for case in 0..32 {
        let n = 1 + case % 4;
        let obj: Vec<f64> = (0..n).map(|_| rng.gen_range(-3.0..3.0)).collect();
        let lo: Vec<f64> = (0..n).map(|_| rng.gen_range(-5.0..0.0)).collect();
        let up: Vec<f64> = (0..n).map(|_| rng.gen_range(0.0..5.0)).collect();
        let names = (0..n).map(|j| format!("v{j}")).collect();
        let mut p = LinearProgram::new(names, obj, lo, up).unwrap();
        for _ in 0..rng.gen_range(2..=8) {
            let r: Vec<f64> = (0..n).map(|_| rng.gen_range(-2.0..2.0)).collect();
            p.push_row(r, rng.gen_range(-1.0..3.0));
        }
        let got = p.solve(&SolverOptions::default()).unwrap();
        match vertex_enumeration(&p) {
            Some(best) if got.status == LpStatus::Optimal => {
                optimal += 1;
                worst = worst.max((got.objective - best).abs());
            }
            None if got.status == LpStatus::Infeasible => infeasible += 1,
            _ => mismatched += 1,
        }
    }

    // B(x) = c x^2 on [0,1]; both samples are fixed points with d = 0, so
    // the decrease rows force eta + beta >= 0 and zero is attained.
    let bx = IntervalBox::new(vec![0.0], vec![1.0]).unwrap();
    let safety = SafetySpec::new(
        IntervalBox::new(vec![0.0], vec![0.25]).unwrap(),
        IntervalBox::new(vec![0.75], vec![1.0]).unwrap(),
    )
    .unwrap();
    let class = SubsystemClass::new(
        "fixed",
        bx.clone(),
        bx,
        safety,
        StcTemplate::new(1, vec![vec![2]]).unwrap(),
        Some(Arc::new(Identity)),
    )
    .unwrap();
    let pair = |x: f64| SamplePair {
        x: vec![x],
        d: vec![0.0],
        next: vec![x],
    };
    let samples = SampleSet {
        pairs: vec![pair(0.0), pair(1.0)],
        dispersion: 0.5,
        grid: None,
    };
    let opts = ScpOptions {
        coeff_bound: 1.0,
        gap: 0.0,
        ..ScpOptions::default()
    };
    let trivial = solve_scp(&build_scp(&class, &samples, &opts).unwrap()).unwrap();

    let ok = mismatched == 0 && optimal >= 20 && worst <= 1e-6 && trivial.objective == 0.0;
    (
        ok,
        format!(
            "{optimal} optimal + {infeasible} infeasible instances agree (max gap {worst:.1e}, {mismatched} mismatched); fixed-point objective {:?}",
            trivial.objective
        ),
    )
}

fn end_to_end(name: &str) -> (bool, String, Option<PipelineOutcome>) {
    let cfg = config(name);
    let out = match run_pipeline(&cfg) {
        Ok(o) => o,
        Err(e) => return (false, format!("pipeline error: {e}"), None),
    };
    let cert = &out.certificate;
    let mut ok = cert.is_certified();
    let mut parts = vec![format!("verdict {:?}", cert.verdict)];
    for (k, rc) in out.classes.iter().enumerate() {
        let c = &cert.classes[k];
        parts.push(format!(
            "{}: N {} theta {:.4} eta {:.4} beta {:.4} L1 {:.3} L2 {:.3} m1 {:.4} m2 {:.4}",
            c.id, c.sample_count, c.theta, c.eta, c.beta, c.l1, c.l2, c.margins.m1, c.margins.m2
        ));
        ok &= c.theta <= 0.1;
        let (v, _) = verify_class(cert, k, &rc.class, &cfg.verify, &cfg.simulation).unwrap();
        let heat = v.heatmap.as_ref().expect("benchmark classes have an oracle");
        ok &= heat.max <= 0.0 && v.level_sets.passed();
        parts.push(format!("heatmap max {:.6} over {} cells", heat.max, heat.cells));
        ok &= v.topologies.len() == 3 && cfg.simulation.surrogate_size == 10 && cfg.simulation.steps == 100;
        for t in &v.topologies {
            ok &= t.trajectories == 25 && t.unsafe_entries == 0;
            parts.push(format!("{} {} traj {} unsafe", t.topology, t.trajectories, t.unsafe_entries));
        }
    }
    (ok, parts.join("; "), Some(out))
}

/// Largest distance from a probe on the 10x finer grid to the nearest sample.
///
/// For product grids the nearest sample is found per coordinate, which is
/// exact; a random subset of probes is also checked by brute force.
fn probe_dispersion(out: &PipelineOutcome, k: usize, rng: &mut ChaCha8Rng) -> (f64, f64) {
    let class = &out.classes[k].class;
    let samples = &out.runs[k].samples;
    let grid: &GridSpec = samples.grid.as_ref().expect("bundled classes use grids");
    let probe = grid.refined(10);
    let joint = class.joint_box();
    let coords = |counts: &[usize]| -> Vec<Vec<f64>> {
        counts
            .iter()
            .enumerate()
            .map(|(i, &c)| {
                let (a, b) = (joint.lower()[i], joint.upper()[i]);
                (0..c).map(|j| if c == 1 { 0.5 * (a + b) } else { a + (b - a) * j as f64 / (c - 1) as f64 }).collect()
            })
            .collect()
    };
    let sample_axes: Vec<Vec<f64>> = (0..joint.dim())
        .map(|i| {
            let mut v: Vec<f64> = samples
                .pairs
                .iter()
                .map(|p| if i < p.x.len() { p.x[i] } else { p.d[i - p.x.len()] })
                .collect();
            v.sort_by(f64::total_cmp);
            v.dedup();
            v
        })
        .collect();
    let probe_axes = coords(&probe.joint());
    let nearest = |axis: &[f64], v: f64| axis.iter().map(|s| (s - v).abs()).fold(f64::INFINITY, f64::min);
    let exact = probe_axes
        .iter()
        .zip(&sample_axes)
        .map(|(pa, sa)| pa.iter().map(|&v| nearest(sa, v).powi(2)).fold(0.0, f64::max))
        .sum::<f64>()
        .sqrt();

    let points: Vec<Vec<f64>> = samples.pairs.iter().map(|p| [p.x.clone(), p.d.clone()].concat()).collect();
    let mut brute: f64 = 0.0;
    for _ in 0..200 {
        let q: Vec<f64> = probe_axes.iter().map(|a| a[rng.gen_range(0..a.len())]).collect();
        let d = points
            .iter()
            .map(|p| p.iter().zip(&q).map(|(a, b)| (a - b).powi(2)).sum::<f64>())
            .fold(f64::INFINITY, f64::min)
            .sqrt();
        brute = brute.max(d);
    }
    (exact, brute)
}

fn dispersion_soundness(outcomes: &[(&str, &PipelineOutcome)]) -> (bool, String) {
    let mut rng = ChaCha8Rng::seed_from_u64(8);
    let mut ok = !outcomes.is_empty();
    let mut parts = Vec::new();
    for (name, out) in outcomes {
        for k in 0..out.classes.len() {
            let theta = out.certificate.classes[k].theta;
            let (exact, brute) = probe_dispersion(out, k, &mut rng);
            ok &= exact <= theta + 1e-12 && brute <= exact + 1e-12;
            parts.push(format!("{name}: probe max {exact:.6} (brute subset {brute:.6}) vs theta {theta:.6}"));
        }
    }
    (ok, parts.join("; "))
}

fn determinism(first: Option<&PipelineOutcome>) -> (bool, String) {
    let dir = std::env::temp_dir().join(format!("stcnet-acceptance-{}", std::process::id()));
    std::fs::create_dir_all(&dir).unwrap();
    let write = |out: &PipelineOutcome, name: &str| -> PathBuf {
        let p = dir.join(name);
        store_certificate(&out.certificate, &p).unwrap();
        p
    };
    let Some(first) = first else {
        return (false, "criterion 6 produced no certificate".into());
    };
    let second = run_pipeline(&config("room.toml")).unwrap();
    let a = std::fs::read(write(first, "a.json")).unwrap();
    let b = std::fs::read(write(&second, "b.json")).unwrap();
    std::fs::remove_dir_all(&dir).ok();
    (a == b, format!("{} bytes, identical: {}", a.len(), a == b))
}

fn main() {
    let mut lines = vec![
        run(1, 0.1, || margin_regression(-16.928, 0.02, 25.51, 14.8845, 0.1, (-14.3770, -15.4195), (1e-3, 1e-3))),
        run(2, 0.1, || margin_regression(-0.4098, 0.0, 7.8288, 7.4875, 0.05, (-0.0184, -0.0355), (1e-3, 1.5e-3))),
        run(3, 1.0, published_room_level_sets),
        run(4, 5.0, lipschitz_convergence),
        run(5, 10.0, scp_oracle_equivalence),
    ];
    let mut room = None;
    lines.push(run(6, 60.0, || {
        let (ok, detail, out) = end_to_end("room.toml");
        room = out;
        (ok, detail)
    }));
    let mut platoon = None;
    lines.push(run(7, 300.0, || {
        let (ok, detail, out) = end_to_end("platoon.toml");
        platoon = out;
        (ok, detail)
    }));
    let outcomes: Vec<(&str, &PipelineOutcome)> = [("room", room.as_ref()), ("platoon", platoon.as_ref())]
        .into_iter()
        .filter_map(|(n, o)| o.map(|o| (n, o)))
        .collect();
    let both = outcomes.len() == 2;
    lines.push(run(8, 10.0, || {
        let (ok, detail) = dispersion_soundness(&outcomes);
        (ok && both, detail)
    }));
    lines.push(run(9, 60.0, || determinism(room.as_ref())));

    let failed: Vec<usize> = lines.iter().filter(|l| !l.passed).map(|l| l.id).collect();
    if failed.is_empty() {
        println!("acceptance: all {} criteria passed", lines.len());
    } else {
        println!("acceptance: failed criteria {failed:?}");
        std::process::exit(1);
    }
}
