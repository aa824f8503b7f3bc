//! Scenario files: one JSON document describing a system and an experiment.

use std::path::Path;

use serde::{Deserialize, Serialize};
use switchstab_core::flow::{ControlMap, PerturbationKind, TimeVarying};
use switchstab_core::lie::{MatrixFamily, ProbabilityVector};
use switchstab_core::matkit::RMatrix;
use switchstab_core::stability::{default_control_maps, DEFAULT_DT};

use crate::CliError;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Scenario {
    #[serde(default)]
    pub name: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub family: Option<MatrixFamily>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub alpha: Option<ProbabilityVector>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub time_varying: Option<TimeVaryingSpec>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub suite: Option<SuiteSpec>,
    pub horizon: f64,
    pub trials: usize,
    #[serde(default)]
    pub seed: u64,
    #[serde(default = "default_ells")]
    pub ells: Vec<u32>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub perturbation: Option<PerturbationGrid>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub control: Option<ControlExperiment>,
}

fn default_ells() -> Vec<u32> {
    (0..=8).collect()
}

/// A built-in non-switched system.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum TimeVaryingSystem {
    MarcusYamabe,
    MarcusYamabePrinted,
    TriangularDecay,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TimeVaryingSpec {
    pub system: TimeVaryingSystem,
    pub dt: f64,
    /// Off-diagonal entry of the triangular decay system.
    #[serde(default = "one")]
    pub a12: f64,
}

fn one() -> f64 {
    1.0
}

impl TimeVaryingSpec {
    pub fn build(&self) -> switchstab_core::Result<TimeVarying> {
        match self.system {
            TimeVaryingSystem::MarcusYamabe => TimeVarying::marcus_yamabe(self.dt),
            TimeVaryingSystem::MarcusYamabePrinted => TimeVarying::marcus_yamabe_printed(self.dt),
            TimeVaryingSystem::TriangularDecay => TimeVarying::triangular_decay(self.a12, self.dt),
        }
    }
}

/// A generated suite of random solvable families.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SuiteSpec {
    pub seed: u64,
    pub count: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PerturbationGrid {
    pub kinds: Vec<PerturbationKind>,
    pub grid: Vec<f64>,
    #[serde(default = "default_dt")]
    pub dt: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub trials: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub horizon: Option<f64>,
}

fn default_dt() -> f64 {
    DEFAULT_DT
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ControlExperiment {
    /// One control map per mode; defaults to plane rotations with `β = 1`.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub maps: Option<Vec<ControlMap>>,
    pub beta: f64,
    pub delta_grid: Vec<f64>,
    #[serde(default = "default_dt")]
    pub dt: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub trials: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub horizon: Option<f64>,
}

impl ControlExperiment {
    pub fn maps_for(&self, fam: &MatrixFamily) -> Vec<ControlMap> {
        self.maps
            .clone()
            .unwrap_or_else(|| default_control_maps(fam.dim(), fam.len()))
    }
}

/// What a scenario drives.
pub enum System<'a> {
    Switched(&'a MatrixFamily, &'a ProbabilityVector),
    TimeVarying(&'a TimeVaryingSpec),
    Suite(&'a SuiteSpec),
}

impl Scenario {
    pub fn from_json(text: &str) -> Result<Self, CliError> {
        let de = &mut serde_json::Deserializer::from_str(text);
        let sc: Scenario = serde_path_to_error::deserialize(de).map_err(|e| {
            let path = e.path().to_string();
            CliError::Input(format!("scenario field `{path}`: {}", e.into_inner()))
        })?;
        sc.validate()?;
        Ok(sc)
    }

    pub fn load(path: &Path) -> Result<Self, CliError> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| CliError::Input(format!("cannot read {}: {e}", path.display())))?;
        Self::from_json(&text)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("scenario serializes") + "\n"
    }

    fn validate(&self) -> Result<(), CliError> {
        let sources = [self.family.is_some(), self.time_varying.is_some(), self.suite.is_some()]
            .iter()
            .filter(|&&b| b)
            .count();
        if sources != 1 {
            return Err(CliError::Input(
                "scenario needs exactly one of `family`, `time_varying`, `suite`".into(),
            ));
        }
        if let Some(fam) = &self.family {
            let alpha = self
                .alpha
                .as_ref()
                .ok_or_else(|| CliError::Input("scenario field `alpha`: required with `family`".into()))?;
            if alpha.len() != fam.len() {
                return Err(CliError::Input(format!(
                    "scenario field `alpha`: has {} entries for {} matrices",
                    alpha.len(),
                    fam.len()
                )));
            }
        } else if self.alpha.is_some() {
            return Err(CliError::Input(
                "scenario field `alpha`: only allowed with `family`".into(),
            ));
        }
        if self.horizon.is_nan() || self.horizon <= 0.0 || !self.horizon.is_finite() {
            return Err(CliError::Input("scenario field `horizon`: must be positive".into()));
        }
        if let Some(tv) = &self.time_varying {
            tv.build()
                .map_err(|e| CliError::Input(format!("scenario field `time_varying`: {e}")))?;
        }
        if let Some(s) = &self.suite {
            if s.count == 0 {
                return Err(CliError::Input("scenario field `suite.count`: must be positive".into()));
            }
        }
        Ok(())
    }

    pub fn system(&self) -> System<'_> {
        match (&self.family, &self.alpha, &self.time_varying, &self.suite) {
            (Some(f), Some(a), _, _) => System::Switched(f, a),
            (_, _, Some(tv), _) => System::TimeVarying(tv),
            (_, _, _, Some(s)) => System::Suite(s),
            _ => unreachable!("validated scenario has a system"),
        }
    }
}

pub const BUILTINS: [&str; 6] = [
    "marcus-yamabe",
    "marcus-yamabe-printed",
    "triangular-decay",
    "diag-unstable-pair",
    "sl2",
    "solvable-suite",
];

fn blank(name: &str, horizon: f64, trials: usize) -> Scenario {
    Scenario {
        name: name.into(),
        family: None,
        alpha: None,
        time_varying: None,
        suite: None,
        horizon,
        trials,
        seed: 0,
        ells: default_ells(),
        perturbation: None,
        control: None,
    }
}

pub fn builtin(name: &str) -> Result<Scenario, CliError> {
    let rows = |r: &[&[f64]]| RMatrix::from_rows(&r.iter().map(|x| x.to_vec()).collect::<Vec<_>>()).expect("finite");
    let sc = match name {
        "marcus-yamabe" | "marcus-yamabe-printed" | "triangular-decay" => {
            let (system, dt, horizon) = match name {
                "marcus-yamabe" => (TimeVaryingSystem::MarcusYamabe, 1e-3, 100.0),
                "marcus-yamabe-printed" => (TimeVaryingSystem::MarcusYamabePrinted, 1e-3, 100.0),
                _ => (TimeVaryingSystem::TriangularDecay, 1e-2, 1e4),
            };
            Scenario {
                time_varying: Some(TimeVaryingSpec { system, dt, a12: 1.0 }),
                ells: vec![0, 1, 2, 3],
                ..blank(name, horizon, 1)
            }
        }
        "diag-unstable-pair" => Scenario {
            family: Some(
                MatrixFamily::new(vec![RMatrix::diag(&[-2.0, 1.0]), RMatrix::diag(&[1.0, -2.0])]).expect("valid"),
            ),
            alpha: Some(ProbabilityVector::uniform(2)),
            perturbation: Some(PerturbationGrid {
                kinds: vec![
                    PerturbationKind::Rotation,
                    PerturbationKind::RandomDirection,
                    PerturbationKind::ControlProduct,
                ],
                grid: vec![0.0, 0.05, 0.1, 0.2, 0.4, 0.8],
                dt: DEFAULT_DT,
                trials: Some(100),
                horizon: Some(500.0),
            }),
            control: Some(ControlExperiment {
                maps: None,
                beta: 1.0,
                delta_grid: vec![0.0, 0.05, 0.1, 0.2, 0.4],
                dt: DEFAULT_DT,
                trials: Some(100),
                horizon: Some(500.0),
            }),
            ..blank(name, 2000.0, 50)
        },
        "sl2" => Scenario {
            family: Some(
                MatrixFamily::new(vec![
                    rows(&[&[0.0, 1.0], &[0.0, 0.0]]),
                    rows(&[&[0.0, 0.0], &[1.0, 0.0]]),
                    rows(&[&[-1.0, 0.0], &[0.0, -2.0]]),
                ])
                .expect("valid"),
            ),
            alpha: Some(ProbabilityVector::new(vec![0.25, 0.25, 0.5]).expect("valid")),
            ..blank(name, 500.0, 20)
        },
        "solvable-suite" => Scenario {
            suite: Some(SuiteSpec { seed: 42, count: 20 }),
            ..blank(name, 2000.0, 50)
        },
        other => {
            return Err(CliError::Input(format!(
                "unknown builtin `{other}` (known: {})",
                BUILTINS.join(", ")
            )))
        }
    };
    Ok(sc)
}
