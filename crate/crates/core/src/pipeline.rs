//! End-to-end synthesis: sample, solve, estimate, compose, refine.

use std::path::Path;
use std::time::Instant;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::blackbox::{Topology, TopologyKind};
use crate::compose::{certify, ClassEvidence, MarginFailure, NetworkCertificate, Provenance};
use crate::config::{PipelineConfig, ResolvedClass, SimulationConfig, VerifyConfig};
use crate::error::{Error, Result};
use crate::lipschitz::{estimate_for_class, estimate_from_samples, ClassLipschitz};
use crate::model::SubsystemClass;
use crate::sampling::{collect_pairs, dispersion_general, GridSpec, SampleSet};
use crate::scp::{build_scp, check_solution, solve_scp, ResidualReport, RowGroup, ScpSolution, ScpStatus};
use crate::verify::{
    check_level_sets, decrease_heatmap, decrease_summary, network_decrease, phase_portrait, save_csv, surface_data,
    HeatSummary, LevelSetReport, NetworkDecreaseReport, PhasePortrait, PortraitConfig,
};

#[derive(Clone, Debug)]
pub struct ClassRun {
    pub samples: SampleSet,
    pub solution: ScpSolution,
    pub residuals: ResidualReport,
    pub lipschitz: Option<ClassLipschitz>,
    /// CPLEX LP text of the scenario program, when requested.
    pub lp_text: Option<String>,
    pub seconds: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct AttemptSummary {
    pub refinement: usize,
    pub grids: Vec<Option<GridSpec>>,
    pub infeasible: Vec<(String, Option<RowGroup>)>,
    pub failures: Vec<MarginFailure>,
    pub seconds: f64,
}

#[derive(Clone, Debug)]
pub struct PipelineOutcome {
    pub certificate: NetworkCertificate,
    pub classes: Vec<ResolvedClass>,
    pub runs: Vec<ClassRun>,
    pub attempts: Vec<AttemptSummary>,
}

fn run_class(rc: &ResolvedClass, grid: Option<&GridSpec>, cfg: &PipelineConfig) -> Result<ClassRun> {
    let start = Instant::now();
    let class = &rc.class;
    let samples = match (&rc.data, grid) {
        (Some(path), _) => {
            let mut s = SampleSet::load_csv(path)?;
            if s.state_dim() != class.state_dim() || s.input_dim() != class.input_dim() {
                return Err(Error::Config(format!("class `{}`: sample file dimensions do not match", class.id)));
            }
            s.dispersion = dispersion_general(&class.joint_box(), &s.joint_points(), &rc.probe_counts)?;
            s
        }
        (None, Some(g)) => collect_pairs(class, &g.state_counts, &g.input_counts)?,
        (None, None) => unreachable!("oracle classes always carry a grid"),
    };
    let options = cfg.scp.options();
    let problem = build_scp(class, &samples, &options)?;
    let lp_text = cfg.scp.export_lp.then(|| problem.lp.to_lp_format());
    let solution = solve_scp(&problem)?;
    let residuals = check_solution(&solution, class, &samples, &options)?;
    let lipschitz = if solution.status == ScpStatus::Optimal {
        Some(if class.oracle().is_some() {
            estimate_for_class(class, &solution, &cfg.lipschitz)?
        } else {
            estimate_from_samples(class, &solution, &samples, &cfg.lipschitz)?
        })
    } else {
        None
    };
    Ok(ClassRun {
        samples,
        solution,
        residuals,
        lipschitz,
        lp_text,
        seconds: start.elapsed().as_secs_f64(),
    })
}

/// Run synthesis with automatic grid refinement.
pub fn run_pipeline(cfg: &PipelineConfig) -> Result<PipelineOutcome> {
    let classes = cfg.resolve()?;
    let mut grids: Vec<Option<GridSpec>> = classes
        .iter()
        .map(|rc| {
            rc.data.is_none().then(|| GridSpec {
                state_counts: rc.state_counts.clone(),
                input_counts: rc.input_counts.clone(),
            })
        })
        .collect();
    let mut attempts = Vec::new();
    for refinement in 0..=cfg.refine.max_retries {
        let start = Instant::now();
        let runs: Vec<ClassRun> = classes
            .par_iter()
            .zip(&grids)
            .map(|(rc, g)| run_class(rc, g.as_ref(), cfg))
            .collect::<Result<_>>()?;
        let infeasible: Vec<(String, Option<RowGroup>)> = classes
            .iter()
            .zip(&runs)
            .filter(|(_, r)| r.solution.status != ScpStatus::Optimal)
            .map(|(rc, r)| (rc.class.id.clone(), r.solution.worst_group))
            .collect();
        let certificate = if infeasible.is_empty() {
            let evidence: Vec<ClassEvidence<'_>> = classes
                .iter()
                .zip(&runs)
                .map(|(rc, r)| ClassEvidence {
                    class: &rc.class,
                    solution: Some(&r.solution),
                    lipschitz: r.lipschitz.as_ref(),
                    samples: Some(&r.samples),
                })
                .collect();
            let mut cert = certify(&evidence)?;
            cert.provenance = Some(Provenance {
                scp: cfg.scp.options(),
                lipschitz: cfg.lipschitz.clone(),
                refinements: refinement,
            });
            Some(cert)
        } else {
            None
        };
        attempts.push(AttemptSummary {
            refinement,
            grids: grids.clone(),
            infeasible: infeasible.clone(),
            failures: certificate.as_ref().map(|c| c.failures.clone()).unwrap_or_default(),
            seconds: start.elapsed().as_secs_f64(),
        });

        let failing: Vec<&str> = match &certificate {
            Some(c) => c.failures.iter().map(|f| f.class_id.as_str()).collect(),
            None => infeasible.iter().map(|(id, _)| id.as_str()).collect(),
        };
        let can_refine = failing
            .iter()
            .all(|id| classes.iter().any(|rc| rc.class.id == *id && rc.data.is_none()));
        let last = refinement == cfg.refine.max_retries || failing.is_empty() || !can_refine;
        if last {
            return match certificate {
                Some(certificate) => Ok(PipelineOutcome {
                    certificate,
                    classes,
                    runs,
                    attempts,
                }),
                None => {
                    let (class, group) = infeasible[0].clone();
                    Err(Error::Infeasible {
                        class,
                        group: group.map_or_else(|| "unknown".into(), |g| format!("{g:?}")),
                    })
                }
            };
        }
        for (rc, g) in classes.iter().zip(grids.iter_mut()) {
            if failing.contains(&rc.class.id.as_str()) {
                if let Some(spec) = g {
                    *spec = spec.refined(cfg.refine.factor);
                }
            }
        }
    }
    unreachable!("the final attempt always returns")
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TopologyCheck {
    pub topology: String,
    pub trajectories: usize,
    pub unsafe_entries: usize,
    pub state_box_exits: usize,
    pub clamp_count: usize,
    pub decrease: NetworkDecreaseReport,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ClassVerification {
    pub class_id: String,
    pub level_sets: LevelSetReport,
    /// Absent when the class has no oracle.
    pub heatmap: Option<HeatSummary>,
    pub topologies: Vec<TopologyCheck>,
}

impl ClassVerification {
    pub fn passed(&self) -> bool {
        self.level_sets.passed()
            && self.heatmap.as_ref().is_none_or(HeatSummary::passed)
            && self
                .topologies
                .iter()
                .all(|t| t.unsafe_entries == 0 && t.decrease.passed())
    }
}

pub fn topology_name(t: &Topology) -> &'static str {
    match t.kind {
        TopologyKind::Cascade => "cascade",
        TopologyKind::Ring => "ring",
        TopologyKind::DenseDecay { .. } => "dense-decay",
    }
}

/// Verification grid for a class: the sampling grid with spacing divided by
/// `factor`, or `fallback` points per dimension when there is no grid.
pub fn verification_grid(class: &SubsystemClass, grid: Option<&GridSpec>, factor: usize, fallback: usize) -> GridSpec {
    match grid {
        Some(g) => g.refined(factor),
        None => GridSpec {
            state_counts: vec![fallback; class.state_dim()],
            input_counts: vec![fallback; class.input_dim()],
        },
    }
}

/// Dense-grid and simulation checks of class `index` of a certificate.
pub fn verify_class(
    cert: &NetworkCertificate,
    index: usize,
    class: &SubsystemClass,
    verify: &VerifyConfig,
    sim: &SimulationConfig,
) -> Result<(ClassVerification, Vec<(String, PhasePortrait)>)> {
    let entry = &cert.classes[index];
    let solution = entry.solution();
    let grid = verification_grid(class, entry.grid.as_ref(), verify.factor, 101);
    let level_sets = check_level_sets(class, &solution, &grid.state_counts)?;
    let simulable = class.oracle().is_some() && class.input_dim() == class.state_dim();
    let heatmap = match class.oracle() {
        Some(_) => Some(decrease_summary(
            class,
            &solution,
            &grid.state_counts,
            &grid.input_counts,
            Some(entry.l2),
        )?),
        None => None,
    };
    let mut topologies = Vec::new();
    let mut portraits = Vec::new();
    if simulable {
        let pc = PortraitConfig {
            per_dim: sim.per_dim,
            steps: sim.steps,
        };
        for topo in sim.topologies()? {
            let portrait = phase_portrait(class, &topo, &pc)?;
            let decrease = network_decrease(cert, &portrait, index, verify.decrease_tol)?;
            topologies.push(TopologyCheck {
                topology: topology_name(&topo).to_string(),
                trajectories: portrait.trajectories.len(),
                unsafe_entries: portrait.unsafe_entries(),
                state_box_exits: portrait.trajectories.iter().filter(|t| t.first_exit.is_some()).count(),
                clamp_count: portrait.trajectories.iter().map(|t| t.clamp_count).sum(),
                decrease,
            });
            portraits.push((topology_name(&topo).to_string(), portrait));
        }
    }
    Ok((
        ClassVerification {
            class_id: entry.id.clone(),
            level_sets,
            heatmap,
            topologies,
        },
        portraits,
    ))
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct RunReport {
    pub verdict: crate::compose::Verdict,
    pub attempts: Vec<AttemptSummary>,
    pub residuals: Vec<(String, ResidualReport)>,
    pub class_seconds: Vec<(String, f64)>,
    pub verification: Vec<ClassVerification>,
}

/// Verify every class and write the certificate, samples, figure CSVs and
/// a run report into `dir`.
pub fn write_outputs(outcome: &PipelineOutcome, cfg: &PipelineConfig, dir: &Path) -> Result<RunReport> {
    std::fs::create_dir_all(dir)?;
    let cert = &outcome.certificate;
    crate::compose::store_certificate(cert, &dir.join("certificate.json"))?;
    let mut verification = Vec::new();
    for (k, (rc, run)) in outcome.classes.iter().zip(&outcome.runs).enumerate() {
        let id = &rc.class.id;
        run.samples.save_csv(&dir.join(format!("samples_{id}.csv")))?;
        if let Some(lp) = &run.lp_text {
            std::fs::write(dir.join(format!("scp_{id}.lp")), lp)?;
        }
        let solution = &run.solution;
        let grid = verification_grid(&rc.class, run.samples.grid.as_ref(), cfg.verify.factor, 101);
        let surface = surface_data(&rc.class, solution, &grid.state_counts)?;
        save_csv(&dir.join(format!("surface_{id}.csv")), |f| surface.write_csv(f))?;
        if let Some(g) = &run.samples.grid {
            // The figure heatmap uses the sampling grid; the finer check
            // grid is summarised in the report.
            let heat = decrease_heatmap(&rc.class, solution, &g.state_counts, &g.input_counts, None)?;
            save_csv(&dir.join(format!("heatmap_{id}.csv")), |f| heat.write_csv(f))?;
        }
        let (v, portraits) = verify_class(cert, k, &rc.class, &cfg.verify, &cfg.simulation)?;
        for (name, p) in &portraits {
            save_csv(&dir.join(format!("trajectories_{id}_{name}.csv")), |f| p.write_csv(f))?;
        }
        verification.push(v);
    }
    let report = RunReport {
        verdict: cert.verdict,
        attempts: outcome.attempts.clone(),
        residuals: outcome
            .classes
            .iter()
            .zip(&outcome.runs)
            .map(|(rc, r)| (rc.class.id.clone(), r.residuals.clone()))
            .collect(),
        class_seconds: outcome
            .classes
            .iter()
            .zip(&outcome.runs)
            .map(|(rc, r)| (rc.class.id.clone(), r.seconds))
            .collect(),
        verification,
    };
    let mut text = serde_json::to_string_pretty(&report).expect("report serialises");
    text.push('\n');
    std::fs::write(dir.join("report.json"), text)?;
    Ok(report)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn room(counts: usize, retries: usize) -> PipelineConfig {
        PipelineConfig::from_toml(&format!(
            r#"
format_version = 1
[refine]
max_retries = {retries}
[lipschitz]
inner_count = 100
outer_count = 20
[[class]]
id = "room"
benchmark = "room"
state_counts = [{counts}]
input_counts = [{counts}]
"#
        ))
        .unwrap()
    }

    #[test]
    fn room_certifies_and_verifies() {
        let cfg = room(31, 0);
        let out = run_pipeline(&cfg).unwrap();
        assert!(out.certificate.is_certified(), "{:?}", out.certificate.failures);
        assert!(out.runs[0].residuals.passed);
        let dir = tempfile::tempdir().unwrap();
        let report = write_outputs(&out, &cfg, dir.path()).unwrap();
        assert!(report.verification[0].passed(), "{:?}", report.verification[0]);
        for f in [
            "certificate.json",
            "report.json",
            "samples_room.csv",
            "surface_room.csv",
            "heatmap_room.csv",
            "trajectories_room_ring.csv",
        ] {
            assert!(dir.path().join(f).exists(), "{f}");
        }
    }

    #[test]
    fn coarse_grid_is_refined_until_it_certifies() {
        let out = run_pipeline(&room(3, 4)).unwrap();
        assert!(out.certificate.is_certified());
        assert!(out.attempts.len() > 1);
        assert!(out.attempts[0].failures.iter().any(|f| f.class_id == "room"));
        let first = out.attempts[0].grids[0].as_ref().unwrap().state_counts[0];
        let last = out.attempts.last().unwrap().grids[0].as_ref().unwrap().state_counts[0];
        assert!(last > first);
    }

    #[test]
    fn no_retries_reports_the_failure() {
        let out = run_pipeline(&room(3, 0)).unwrap();
        assert!(!out.certificate.is_certified());
        assert_eq!(out.attempts.len(), 1);
        assert!(!out.certificate.failures.is_empty());
    }
}
