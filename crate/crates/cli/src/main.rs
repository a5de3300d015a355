use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::sync::Arc;

use clap::{Args, Parser, Subcommand};

use stcnet::blackbox::Benchmark;
use stcnet::compose::{class_margins, load_certificate, NetworkCertificate};
use stcnet::config::{PipelineConfig, SimulationConfig, VerifyConfig};
use stcnet::lipschitz::{estimate_certificate, estimate_for_class, LipschitzConfig};
use stcnet::model::{SubsystemClass, TransitionOracle};
use stcnet::pipeline::{run_pipeline, topology_name, verify_class, write_outputs};
use stcnet::verify::{phase_portrait, save_csv, PortraitConfig};

/// Data-driven safety certificates for networks of black-box subsystems.
#[derive(Parser)]
#[command(name = "stcnet", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Synthesize storage certificates and check the compositional conditions.
    Synth(SynthArgs),
    /// Re-check a stored certificate on dense grids and by simulation.
    Verify(VerifyArgs),
    /// Estimate Lipschitz constants of a stored certificate.
    Lipschitz(LipschitzArgs),
    /// Simulate surrogate networks and write phase-portrait CSVs.
    Simulate(SimulateArgs),
    /// Evaluate the margin arithmetic on given numbers.
    Margins(MarginArgs),
}

#[derive(Args)]
struct SynthArgs {
    config: PathBuf,
    #[arg(short, long)]
    output: Option<PathBuf>,
    #[arg(long)]
    max_retries: Option<usize>,
    /// Seed for the Lipschitz estimator.
    #[arg(long)]
    seed: Option<u64>,
    /// Also write each scenario program in CPLEX LP format.
    #[arg(long)]
    export_lp: bool,
}

#[derive(Args)]
struct VerifyArgs {
    certificate: PathBuf,
    /// Config that defines the classes' dynamics (built-in benchmarks are
    /// recognised without one).
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    factor: Option<usize>,
    #[arg(long)]
    steps: Option<usize>,
    #[arg(long)]
    per_dim: Option<usize>,
    #[arg(short, long)]
    output: Option<PathBuf>,
}

#[derive(Args)]
struct LipschitzArgs {
    certificate: PathBuf,
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    class: Option<String>,
    #[arg(long, default_value_t = 1e-3)]
    gamma: f64,
    #[arg(long, default_value_t = 200)]
    inner: usize,
    #[arg(long, default_value_t = 50)]
    outer: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
}

#[derive(Args)]
struct SimulateArgs {
    config: PathBuf,
    #[arg(long)]
    steps: Option<usize>,
    #[arg(long)]
    per_dim: Option<usize>,
    /// Restrict to one topology (cascade, ring, dense-decay).
    #[arg(long)]
    topology: Option<String>,
    #[arg(short, long)]
    output: Option<PathBuf>,
}

#[derive(Args)]
struct MarginArgs {
    #[arg(long, allow_hyphen_values = true)]
    eta: f64,
    #[arg(long, allow_hyphen_values = true)]
    beta: f64,
    #[arg(long)]
    l1: f64,
    #[arg(long)]
    l2: f64,
    #[arg(long)]
    theta: f64,
    #[arg(long, allow_hyphen_values = true)]
    sigma: Option<f64>,
    #[arg(long, allow_hyphen_values = true)]
    phi: Option<f64>,
}

type CliResult = Result<bool, Box<dyn std::error::Error>>;

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match cli.command {
        Command::Synth(a) => synth(a),
        Command::Verify(a) => verify(a),
        Command::Lipschitz(a) => lipschitz(a),
        Command::Simulate(a) => simulate(a),
        Command::Margins(a) => margins(a),
    };
    match result {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => ExitCode::from(1),
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(2)
        }
    }
}

fn output_dir(flag: Option<PathBuf>, cfg: &PipelineConfig, config_path: &Path) -> PathBuf {
    flag.or_else(|| cfg.output_dir.clone())
        .unwrap_or_else(|| config_path.with_extension("out"))
}

fn synth(a: SynthArgs) -> CliResult {
    let mut cfg = PipelineConfig::load(&a.config)?;
    if let Some(r) = a.max_retries {
        cfg.refine.max_retries = r;
    }
    if let Some(s) = a.seed {
        cfg.lipschitz.seed = s;
    }
    cfg.scp.export_lp |= a.export_lp;
    cfg.resolve()?;
    let dir = output_dir(a.output, &cfg, &a.config);

    let outcome = run_pipeline(&cfg)?;
    let cert = &outcome.certificate;
    for att in &outcome.attempts {
        let grids: Vec<String> = att
            .grids
            .iter()
            .map(|g| g.as_ref().map_or("data".into(), |g| format!("{:?}x{:?}", g.state_counts, g.input_counts)))
            .collect();
        println!(
            "attempt {}: grids {} -> {} margin failure(s) [{:.2}s]",
            att.refinement,
            grids.join(", "),
            att.failures.len(),
            att.seconds
        );
    }
    print_certificate(cert);
    let report = write_outputs(&outcome, &cfg, &dir)?;
    for v in &report.verification {
        let heat = v
            .heatmap
            .as_ref()
            .map_or("skipped (no oracle)".to_string(), |h| format!("max {:.6e} over {} cells", h.max, h.cells));
        println!(
            "verify {}: level sets {} (max on X0 {:.6}, min on Xa {:.6}); decrease heatmap {}",
            v.class_id,
            pass(v.level_sets.passed()),
            v.level_sets.initial_max,
            v.level_sets.unsafe_min,
            heat
        );
        for t in &v.topologies {
            println!(
                "  {}: {} trajectories, {} unsafe entries, max certificate increase {:.3e}",
                t.topology, t.trajectories, t.unsafe_entries, t.decrease.max_increase
            );
        }
    }
    println!("wrote {}", dir.display());
    Ok(cert.is_certified())
}

fn pass(ok: bool) -> &'static str {
    if ok {
        "pass"
    } else {
        "FAIL"
    }
}

fn print_certificate(cert: &NetworkCertificate) {
    println!(
        "{:<10} {:>8} {:>9} {:>12} {:>10} {:>11} {:>11} {:>11} {:>11} {:>9}",
        "class", "N", "theta", "eta", "beta", "L1", "L2", "m1", "m2", "gap"
    );
    for c in &cert.classes {
        println!(
            "{:<10} {:>8} {:>9.5} {:>12.4} {:>10.4} {:>11.4} {:>11.4} {:>11.4} {:>11.4} {:>9.4}",
            c.id, c.sample_count, c.theta, c.eta, c.beta, c.l1, c.l2, c.margins.m1, c.margins.m2, c.margins.gap
        );
    }
    for f in &cert.failures {
        println!("  {} fails {:?} by {:.6}", f.class_id, f.condition, f.value);
    }
    println!("verdict: {:?}", cert.verdict);
}

fn benchmark_oracle(name: &str) -> Option<Arc<dyn TransitionOracle>> {
    match name {
        "room" => Some(Arc::new(Benchmark::Room.oracle())),
        "platoon" => Some(Arc::new(Benchmark::Platoon.oracle())),
        _ => None,
    }
}

/// Rebuild the classes of a certificate, attaching oracles from the config
/// (by class id) or from the built-in benchmarks (by oracle name).
fn certificate_classes(cert: &NetworkCertificate, config: Option<&PipelineConfig>) -> Result<Vec<SubsystemClass>, Box<dyn std::error::Error>> {
    let resolved = match config {
        Some(cfg) => cfg.resolve()?,
        None => Vec::new(),
    };
    cert.classes
        .iter()
        .map(|c| {
            let oracle = resolved
                .iter()
                .find(|r| r.class.id == c.id)
                .and_then(|r| r.class.oracle().cloned())
                .or_else(|| c.oracle.as_deref().and_then(benchmark_oracle));
            Ok(c.to_class(oracle)?)
        })
        .collect()
}

fn verify(a: VerifyArgs) -> CliResult {
    let cert = load_certificate(&a.certificate)?;
    let cfg = a.config.as_deref().map(PipelineConfig::load).transpose()?;
    let classes = certificate_classes(&cert, cfg.as_ref())?;
    let mut vcfg = cfg.as_ref().map(|c| c.verify.clone()).unwrap_or_else(VerifyConfig::default);
    let mut sim = cfg.as_ref().map(|c| c.simulation.clone()).unwrap_or_else(SimulationConfig::default);
    if let Some(f) = a.factor {
        vcfg.factor = f;
    }
    if let Some(s) = a.steps {
        sim.steps = s;
    }
    if let Some(p) = a.per_dim {
        sim.per_dim = p;
    }
    print_certificate(&cert);
    let mut all = cert.is_certified();
    for (k, class) in classes.iter().enumerate() {
        let (v, portraits) = verify_class(&cert, k, class, &vcfg, &sim)?;
        let ls = &v.level_sets;
        println!(
            "{}: max B on X0 = {:.6} at {:?} (sigma {:.6}) {}; min B on Xa = {:.6} at {:?} (phi {:.6}) {}",
            v.class_id,
            ls.initial_max,
            ls.initial_argmax,
            ls.sigma,
            pass(ls.initial_ok),
            ls.unsafe_min,
            ls.unsafe_argmin,
            ls.phi,
            pass(ls.unsafe_ok)
        );
        match &v.heatmap {
            Some(h) => println!(
                "{}: decrease max {:.6e} at {:?} over {} cells {}",
                v.class_id,
                h.max,
                h.argmax,
                h.cells,
                pass(h.passed())
            ),
            None => println!("{}: decrease heatmap skipped (no oracle)", v.class_id),
        }
        for t in &v.topologies {
            println!(
                "{} {}: {} trajectories, {} unsafe entries, {} box exits, max increase {:.3e} {}",
                v.class_id,
                t.topology,
                t.trajectories,
                t.unsafe_entries,
                t.state_box_exits,
                t.decrease.max_increase,
                pass(t.unsafe_entries == 0 && t.decrease.passed())
            );
        }
        if let Some(dir) = &a.output {
            std::fs::create_dir_all(dir)?;
            for (name, p) in &portraits {
                save_csv(&dir.join(format!("trajectories_{}_{name}.csv", v.class_id)), |f| p.write_csv(f))?;
            }
        }
        all &= v.passed();
    }
    println!("verification: {}", pass(all));
    Ok(all)
}

fn lipschitz(a: LipschitzArgs) -> CliResult {
    let cert = load_certificate(&a.certificate)?;
    let cfg = a.config.as_deref().map(PipelineConfig::load).transpose()?;
    let classes = certificate_classes(&cert, cfg.as_ref())?;
    let lc = LipschitzConfig {
        gamma: a.gamma,
        inner_count: a.inner,
        outer_count: a.outer,
        seed: a.seed,
    };
    for (entry, class) in cert.classes.iter().zip(&classes) {
        if a.class.as_deref().is_some_and(|id| id != entry.id) {
            continue;
        }
        let sol = entry.solution();
        let (l1, l2) = if class.oracle().is_some() {
            let est = estimate_for_class(class, &sol, &lc)?;
            (est.l1, Some(est.l2))
        } else {
            (estimate_certificate(class, &sol, &lc)?, None)
        };
        let describe = |e: &stcnet::lipschitz::LipschitzEstimate| match e.fit {
            Some(f) => format!(
                "{:.6} (fit: location {:.6}, scale {:.3e}, shape {:.3}; max observed {:.6})",
                e.value,
                f.location,
                f.scale,
                f.shape,
                e.observed_max()
            ),
            None => format!("{:.6} (max observed slope)", e.value),
        };
        println!("{} L1 = {}", entry.id, describe(&l1));
        match l2 {
            Some(l2) => println!("{} L2 = {}", entry.id, describe(&l2)),
            None => println!("{} L2 = n/a (no oracle)", entry.id),
        }
    }
    Ok(true)
}

fn simulate(a: SimulateArgs) -> CliResult {
    let cfg = PipelineConfig::load(&a.config)?;
    let classes = cfg.resolve()?;
    let mut sim = cfg.simulation.clone();
    if let Some(s) = a.steps {
        sim.steps = s;
    }
    if let Some(p) = a.per_dim {
        sim.per_dim = p;
    }
    if let Some(t) = &a.topology {
        sim.topologies = vec![t.clone()];
    }
    let dir = output_dir(a.output, &cfg, &a.config);
    std::fs::create_dir_all(&dir)?;
    let pc = PortraitConfig {
        per_dim: sim.per_dim,
        steps: sim.steps,
    };
    let mut safe = true;
    for rc in &classes {
        if rc.class.oracle().is_none() {
            println!("{}: no oracle, skipped", rc.class.id);
            continue;
        }
        for topo in sim.topologies()? {
            let p = phase_portrait(&rc.class, &topo, &pc)?;
            let name = topology_name(&topo);
            let exits = p.trajectories.iter().filter(|t| t.first_exit.is_some()).count();
            println!(
                "{} {name}: {} trajectories, {} unsafe entries, {} state-box exits",
                rc.class.id,
                p.trajectories.len(),
                p.unsafe_entries(),
                exits
            );
            safe &= p.unsafe_entries() == 0;
            save_csv(&dir.join(format!("trajectories_{}_{name}.csv", rc.class.id)), |f| p.write_csv(f))?;
        }
    }
    println!("wrote {}", dir.display());
    Ok(safe)
}

fn margins(a: MarginArgs) -> CliResult {
    if a.theta < 0.0 || a.l1 < 0.0 || a.l2 < 0.0 {
        return Err("theta, l1 and l2 must be non-negative".into());
    }
    let (sigma, phi) = (a.sigma.unwrap_or(0.0), a.phi.unwrap_or(0.0));
    let m = class_margins(a.eta, a.beta, a.l1, a.l2, a.theta, sigma, phi);
    println!("m1 = {:.4}  ({})", m.m1, pass(m.m1 <= 0.0));
    println!("m2 = {:.4}  ({})", m.m2, pass(m.m2 <= 0.0));
    let mut ok = m.m1 <= 0.0 && m.m2 <= 0.0;
    if a.sigma.is_some() || a.phi.is_some() {
        println!("gap = {:.4}  ({})", m.gap, pass(m.gap > 0.0));
        ok &= m.gap > 0.0;
    }
    Ok(ok)
}
