//! Per-class margin conditions and the network-level certificate.

use std::path::Path;
use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::error::{invalid, Error, Result};
use crate::lipschitz::{ClassLipschitz, LipschitzConfig};
use crate::model::{
    CoefficientVector, IntervalBox, SafetySpec, StcTemplate, SubsystemClass, SupplyRate, TransitionOracle,
};
use crate::sampling::{GridSpec, SampleSet};
use crate::scp::{ScpOptions, ScpSolution, ScpStatus};

pub const CERTIFICATE_FORMAT_VERSION: u32 = 1;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Margins {
    /// `eta + L1 * theta`; must be `<= 0`.
    pub m1: f64,
    /// `eta + beta + L2 * theta`; must be `<= 0`.
    pub m2: f64,
    /// `phi - sigma`; must be `> 0`.
    pub gap: f64,
}

impl Margins {
    pub fn holds(&self) -> bool {
        self.m1 <= 0.0 && self.m2 <= 0.0 && self.gap > 0.0
    }

    pub fn failures(&self) -> Vec<(Condition, f64)> {
        let mut out = Vec::new();
        if !(self.gap > 0.0) {
            out.push((Condition::LevelGap, self.gap));
        }
        if !(self.m1 <= 0.0) {
            out.push((Condition::LevelMargin, self.m1));
        }
        if !(self.m2 <= 0.0) {
            out.push((Condition::DecreaseMargin, self.m2));
        }
        out
    }
}

pub fn class_margins(eta: f64, beta: f64, l1: f64, l2: f64, theta: f64, sigma: f64, phi: f64) -> Margins {
    Margins {
        m1: eta + l1 * theta,
        m2: eta + beta + l2 * theta,
        gap: phi - sigma,
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ClassMargins {
    pub class_id: String,
    #[serde(flatten)]
    pub margins: Margins,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Condition {
    /// `sigma < phi`.
    LevelGap,
    /// `eta + L1 theta <= 0`.
    LevelMargin,
    /// `eta + beta + L2 theta <= 0`.
    DecreaseMargin,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MarginFailure {
    pub class_id: String,
    pub condition: Condition,
    /// Offending value (positive for the margins, non-positive for the gap).
    pub value: f64,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Verdict {
    Certified,
    NotCertified,
}

/// Everything certify needs for one class.
pub struct ClassEvidence<'a> {
    pub class: &'a SubsystemClass,
    pub solution: Option<&'a ScpSolution>,
    pub lipschitz: Option<&'a ClassLipschitz>,
    pub samples: Option<&'a SampleSet>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ClassCertificate {
    pub id: String,
    /// Name of the transition oracle the data came from, if any.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub oracle: Option<String>,
    pub state_box: IntervalBox,
    pub input_box: IntervalBox,
    pub safety: SafetySpec,
    pub template: StcTemplate,
    pub coeffs: CoefficientVector,
    pub sigma: f64,
    pub phi: f64,
    pub supply: SupplyRate,
    pub eta: f64,
    pub beta: f64,
    pub l1: f64,
    pub l2: f64,
    pub theta: f64,
    pub sample_count: usize,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub grid: Option<GridSpec>,
    pub lipschitz: ClassLipschitz,
    pub margins: Margins,
}

impl ClassCertificate {
    pub fn eval(&self, x: &[f64]) -> Result<f64> {
        self.template.eval(&self.coeffs, x)
    }

    /// The stored optimum as a solution record.
    pub fn solution(&self) -> ScpSolution {
        ScpSolution {
            coeffs: self.coeffs.clone(),
            sigma: self.sigma,
            phi: self.phi,
            supply: self.supply.clone(),
            eta: self.eta,
            beta: self.beta,
            objective: self.eta + self.beta,
            status: ScpStatus::Optimal,
            worst_group: None,
        }
    }

    pub fn to_class(&self, oracle: Option<Arc<dyn TransitionOracle>>) -> Result<SubsystemClass> {
        SubsystemClass::new(
            self.id.clone(),
            self.state_box.clone(),
            self.input_box.clone(),
            self.safety.clone(),
            self.template.clone(),
            oracle,
        )
    }
}

/// Settings the certificate was produced with.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Provenance {
    pub scp: ScpOptions,
    pub lipschitz: LipschitzConfig,
    /// Grid refinements performed before the final attempt.
    pub refinements: usize,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct NetworkCertificate {
    pub format_version: u32,
    pub verdict: Verdict,
    pub classes: Vec<ClassCertificate>,
    pub failures: Vec<MarginFailure>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub provenance: Option<Provenance>,
}

impl NetworkCertificate {
    pub fn is_certified(&self) -> bool {
        self.verdict == Verdict::Certified
    }

    pub fn class(&self, id: &str) -> Option<&ClassCertificate> {
        self.classes.iter().find(|c| c.id == id)
    }

    pub fn margins(&self) -> Vec<ClassMargins> {
        self.classes
            .iter()
            .map(|c| ClassMargins {
                class_id: c.id.clone(),
                margins: c.margins,
            })
            .collect()
    }

    /// Network levels `(sigma, phi)` for a surrogate with `copies[k]`
    /// subsystems of class `k`.
    pub fn network_levels(&self, copies: &[usize]) -> Result<(f64, f64)> {
        if copies.len() != self.classes.len() {
            return invalid("one copy count per class is required");
        }
        let sigma = self.classes.iter().zip(copies).map(|(c, k)| c.sigma * *k as f64).sum();
        let phi = self.classes.iter().zip(copies).map(|(c, k)| c.phi * *k as f64).sum();
        Ok((sigma, phi))
    }

    pub fn to_json(&self) -> String {
        let mut s = serde_json::to_string_pretty(self).expect("certificate serialises");
        s.push('\n');
        s
    }

    pub fn from_json(text: &str) -> std::result::Result<Self, String> {
        let value: serde_json::Value = serde_json::from_str(text).map_err(|e| e.to_string())?;
        let found = value
            .get("format_version")
            .and_then(|v| v.as_u64())
            .ok_or_else(|| "missing format_version".to_string())?;
        if found != CERTIFICATE_FORMAT_VERSION as u64 {
            return Err(format!("version:{found}"));
        }
        serde_json::from_value(value).map_err(|e| e.to_string())
    }
}

pub fn store_certificate(cert: &NetworkCertificate, path: &Path) -> Result<()> {
    std::fs::write(path, cert.to_json())?;
    Ok(())
}

pub fn load_certificate(path: &Path) -> Result<NetworkCertificate> {
    let text = std::fs::read_to_string(path)?;
    NetworkCertificate::from_json(&text).map_err(|message| match message.strip_prefix("version:") {
        Some(v) => Error::Version {
            found: v.parse().unwrap_or(u32::MAX),
            expected: CERTIFICATE_FORMAT_VERSION,
        },
        None => Error::Parse {
            path: path.to_path_buf(),
            message,
        },
    })
}

/// Combine per-class evidence into a certificate. Every class must pass all
/// three conditions on its own; no class may offset another.
pub fn certify(evidence: &[ClassEvidence<'_>]) -> Result<NetworkCertificate> {
    if evidence.is_empty() {
        return invalid("certify needs at least one class");
    }
    let mut classes = Vec::with_capacity(evidence.len());
    let mut failures = Vec::new();
    for ev in evidence {
        let id = &ev.class.id;
        let missing = |what| Error::MissingInput {
            class: id.clone(),
            what,
        };
        let sol = ev.solution.ok_or_else(|| missing("scenario solution"))?;
        let lip = ev.lipschitz.ok_or_else(|| missing("Lipschitz estimates"))?;
        let samples = ev.samples.ok_or_else(|| missing("sample set"))?;
        if sol.status != ScpStatus::Optimal {
            return invalid(format!("class `{id}`: scenario program status is {:?}", sol.status));
        }
        let (l1, l2, theta) = (lip.l1.value, lip.l2.value, samples.dispersion);
        let margins = class_margins(sol.eta, sol.beta, l1, l2, theta, sol.sigma, sol.phi);
        for (condition, value) in margins.failures() {
            failures.push(MarginFailure {
                class_id: id.clone(),
                condition,
                value,
            });
        }
        classes.push(ClassCertificate {
            id: id.clone(),
            oracle: ev.class.oracle().map(|o| o.name().to_string()),
            state_box: ev.class.state_box().clone(),
            input_box: ev.class.input_box().clone(),
            safety: ev.class.safety().clone(),
            template: ev.class.template().clone(),
            coeffs: sol.coeffs.clone(),
            sigma: sol.sigma,
            phi: sol.phi,
            supply: sol.supply.clone(),
            eta: sol.eta,
            beta: sol.beta,
            l1,
            l2,
            theta,
            sample_count: samples.len(),
            grid: samples.grid.clone(),
            lipschitz: lip.clone(),
            margins,
        });
    }
    Ok(NetworkCertificate {
        format_version: CERTIFICATE_FORMAT_VERSION,
        verdict: if failures.is_empty() {
            Verdict::Certified
        } else {
            Verdict::NotCertified
        },
        classes,
        failures,
        provenance: None,
    })
}

/// `Σ_i B_{c(i)}(x_i)` over a finite surrogate; `assignment[i]` indexes the
/// certificate's classes.
pub fn eval_network_certificate(cert: &NetworkCertificate, states: &[Vec<f64>], assignment: &[usize]) -> Result<f64> {
    if states.len() != assignment.len() {
        return invalid("one class assignment per state is required");
    }
    let mut total = 0.0;
    for (x, &k) in states.iter().zip(assignment) {
        let class = cert
            .classes
            .get(k)
            .ok_or_else(|| Error::InvalidInput(format!("class index {k} out of range")))?;
        total += class.eval(x)?;
    }
    Ok(total)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::blackbox::Benchmark;
    use crate::lipschitz::LipschitzEstimate;

    fn est(v: f64) -> LipschitzEstimate {
        LipschitzEstimate {
            value: v,
            max_slope_samples: vec![v],
            fit: None,
            fallback_used: true,
        }
    }

    fn published_room() -> (ScpSolution, ClassLipschitz, SampleSet) {
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
        let lip = ClassLipschitz {
            l1: est(25.51),
            l2: est(14.8845),
            data_limited: false,
        };
        let samples = SampleSet {
            pairs: vec![],
            dispersion: 0.1,
            grid: None,
        };
        (sol, lip, samples)
    }

    #[test]
    fn published_margins() {
        let room = class_margins(-16.928, 0.02, 25.51, 14.8845, 0.1, 150.0, 200.0);
        assert!((room.m1 - -14.3770).abs() < 1e-3);
        assert!((room.m2 - -15.4195).abs() < 1e-3);
        let vehicle = class_margins(-0.4098, 0.0, 7.8288, 7.4875, 0.05, 0.0, 1.0);
        assert!((vehicle.m1 - -0.0184).abs() < 1e-3);
        assert!((vehicle.m2 - -0.0355).abs() < 1.5e-3);
    }

    #[test]
    fn zero_margins_fail_on_gap() {
        let m = class_margins(0.0, 0.0, 0.0, 0.0, 0.0, 0.0, 0.0);
        assert_eq!((m.m1, m.m2, m.gap), (0.0, 0.0, 0.0));
        assert!(!m.holds());
        assert_eq!(m.failures(), vec![(Condition::LevelGap, 0.0)]);
    }

    #[test]
    fn margin_arithmetic_is_order_independent() {
        let (eta, beta, l1, l2, th) = (-0.4098f64, 0.0f64, 7.8288f64, 7.4875f64, 0.05f64);
        let m = class_margins(eta, beta, l1, l2, th, 0.0, 1.0);
        assert_eq!(m.m1.to_bits(), (th * l1 + eta).to_bits());
        assert_eq!(m.m2.to_bits(), (th * l2 + (beta + eta)).to_bits());
    }

    #[test]
    fn published_room_is_certified() {
        let class = Benchmark::Room.class();
        let (sol, lip, samples) = published_room();
        let cert = certify(&[ClassEvidence {
            class: &class,
            solution: Some(&sol),
            lipschitz: Some(&lip),
            samples: Some(&samples),
        }])
        .unwrap();
        assert!(cert.is_certified());
        assert!(cert.failures.is_empty());
    }

    #[test]
    fn positive_eta_fails_the_level_margin() {
        let class = Benchmark::Room.class();
        let (mut sol, mut lip, samples) = published_room();
        sol.eta = 0.1;
        sol.beta = -1.0;
        lip.l1 = est(0.0);
        lip.l2 = est(0.0);
        let cert = certify(&[ClassEvidence {
            class: &class,
            solution: Some(&sol),
            lipschitz: Some(&lip),
            samples: Some(&samples),
        }])
        .unwrap();
        assert_eq!(cert.verdict, Verdict::NotCertified);
        assert_eq!(cert.failures.len(), 1);
        assert_eq!(cert.failures[0].condition, Condition::LevelMargin);
        assert!((cert.failures[0].value - 0.1).abs() < 1e-15);
    }

    #[test]
    fn no_cross_class_compensation() {
        let a = Benchmark::Room.class();
        let mut b = Benchmark::Room.class();
        b.id = "room-b".into();
        let (mut good, lip, samples) = published_room();
        let mut bad = good.clone();
        // m1 = -1 for the first, +0.5 for the second
        good.eta = -1.0 - 2.551;
        bad.eta = 0.5 - 2.551;
        bad.beta = -5.0;
        let cert = certify(&[
            ClassEvidence {
                class: &a,
                solution: Some(&good),
                lipschitz: Some(&lip),
                samples: Some(&samples),
            },
            ClassEvidence {
                class: &b,
                solution: Some(&bad),
                lipschitz: Some(&lip),
                samples: Some(&samples),
            },
        ])
        .unwrap();
        assert_eq!(cert.verdict, Verdict::NotCertified);
        assert!(cert.failures.iter().all(|f| f.class_id == "room-b"));
    }

    #[test]
    fn missing_inputs_name_the_class() {
        let class = Benchmark::Room.class();
        let (sol, _, samples) = published_room();
        let err = certify(&[ClassEvidence {
            class: &class,
            solution: Some(&sol),
            lipschitz: None,
            samples: Some(&samples),
        }])
        .unwrap_err();
        assert!(matches!(err, Error::MissingInput { ref class, .. } if class == "room"), "{err}");
    }

    fn room_cert() -> NetworkCertificate {
        let class = Benchmark::Room.class();
        let (sol, lip, samples) = published_room();
        certify(&[ClassEvidence {
            class: &class,
            solution: Some(&sol),
            lipschitz: Some(&lip),
            samples: Some(&samples),
        }])
        .unwrap()
    }

    #[test]
    fn network_sum() {
        let cert = room_cert();
        let three = vec![vec![11.0]; 3];
        let v = eval_network_certificate(&cert, &three, &[0, 0, 0]).unwrap();
        assert!((v - 407.0373).abs() < 1e-4, "{v}");
        assert_eq!(eval_network_certificate(&cert, &[], &[]).unwrap(), 0.0);
        let one = eval_network_certificate(&cert, &[vec![12.5]], &[0]).unwrap();
        assert_eq!(one, cert.classes[0].eval(&[12.5]).unwrap());
        assert!(eval_network_certificate(&cert, &[vec![1.0, 2.0]], &[0]).is_err());
        assert_eq!(cert.network_levels(&[10]).unwrap(), (1500.0, 2000.0));
    }

    #[test]
    fn smaller_theta_keeps_the_verdict() {
        let class = Benchmark::Room.class();
        let (sol, lip, mut samples) = published_room();
        for theta in [0.1, 0.05, 0.01, 0.0] {
            samples.dispersion = theta;
            let cert = certify(&[ClassEvidence {
                class: &class,
                solution: Some(&sol),
                lipschitz: Some(&lip),
                samples: Some(&samples),
            }])
            .unwrap();
            assert!(cert.is_certified(), "theta = {theta}");
        }
    }

    #[test]
    fn json_round_trip_is_lossless() {
        let mut cert = room_cert();
        cert.classes[0].eta = 0.1 + 0.2;
        cert.classes[0].l1 = 1.0 / 3.0;
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("cert.json");
        store_certificate(&cert, &path).unwrap();
        let back = load_certificate(&path).unwrap();
        assert_eq!(back, cert);
        assert_eq!(back.classes[0].eta.to_bits(), (0.1f64 + 0.2).to_bits());
        assert_eq!(back.to_json(), cert.to_json());
    }

    #[test]
    fn damaged_files_are_rejected() {
        let cert = room_cert();
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("cert.json");
        let text = cert.to_json();
        std::fs::write(&path, &text[..text.len() / 2]).unwrap();
        assert!(matches!(load_certificate(&path), Err(Error::Parse { .. })));
        std::fs::write(&path, text.replace("\"format_version\": 1", "\"format_version\": 7")).unwrap();
        assert!(matches!(load_certificate(&path), Err(Error::Version { found: 7, expected: 1 })));
    }
}
