//! Scenario files and the built-in reproduction scenarios.
//!
//! ```json
//! {
//!   "spec": 1,
//!   "plant":   { "A": [[1.0]], "B": [1.0], "C": [1.0] },
//!   "neurons": { "alpha1": 0.5, "alpha2": 0.5, "mu1": 0.5, "mu2": 0.5,
//!                "delta1": 0.1, "delta2": 0.1 },
//!   "initial": { "x": [20.0], "xi1": 0.0, "xi2": 0.0 },
//!   "solver":  { "h": 0.001, "t_end": 15.0, "j_max": 1000000,
//!                "tolerances": { "state": 1e-9, "time": 1e-12 } },
//!   "disturbance": { "type": "piecewise_linear_uniform", "grid_step": 0.01,
//!                    "amplitude": 0.1, "seed": 1 }
//! }
//! ```
//!
//! Scalar plants may write `A`, `B`, `C` and `x` as plain numbers.

use std::path::Path;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};
use crate::hybrid::{
    HybridState, SolverOptions, DEFAULT_EVENT_TOL_STATE, DEFAULT_EVENT_TOL_TIME,
    DEFAULT_JUMP_LIMIT, DEFAULT_STEP,
};
use crate::lif::{ClosedLoopScenario, NeuronParams, PlantParams};
use crate::signals::SignalSpec;

pub const SCHEMA_VERSION: u32 = 1;

pub const FIG3_NOMINAL: &str = "fig3-nominal";
pub const FIG3_NOISY_ASYM: &str = "fig3-noisy-asym";
pub const CERTIFIED: &str = "certified";
pub const BUILTIN_NAMES: [&str; 3] = [FIG3_NOMINAL, FIG3_NOISY_ASYM, CERTIFIED];

pub const DEFAULT_NOISE_SEED: u64 = 1;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
enum Matrix {
    Scalar(f64),
    Rows(Vec<Vec<f64>>),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
enum Vector {
    Scalar(f64),
    Entries(Vec<f64>),
}

impl Vector {
    fn into_vec(self) -> Vec<f64> {
        match self {
            Vector::Scalar(v) => vec![v],
            Vector::Entries(v) => v,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct PlantBlock {
    #[serde(rename = "A")]
    a: Matrix,
    #[serde(rename = "B")]
    b: Vector,
    #[serde(rename = "C")]
    c: Vector,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct InitialBlock {
    x: Vector,
    #[serde(default)]
    xi1: f64,
    #[serde(default)]
    xi2: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct Tolerances {
    #[serde(default = "default_tol_state")]
    state: f64,
    #[serde(default = "default_tol_time")]
    time: f64,
}

impl Default for Tolerances {
    fn default() -> Self {
        Self {
            state: DEFAULT_EVENT_TOL_STATE,
            time: DEFAULT_EVENT_TOL_TIME,
        }
    }
}

fn default_tol_state() -> f64 {
    DEFAULT_EVENT_TOL_STATE
}
fn default_tol_time() -> f64 {
    DEFAULT_EVENT_TOL_TIME
}
fn default_h() -> f64 {
    DEFAULT_STEP
}
fn default_j_max() -> u64 {
    DEFAULT_JUMP_LIMIT
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct SolverBlock {
    #[serde(default = "default_h")]
    h: f64,
    t_end: f64,
    #[serde(default = "default_j_max")]
    j_max: u64,
    #[serde(default)]
    tolerances: Tolerances,
}

/// On-disk form of a [`ClosedLoopScenario`].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScenarioFile {
    spec: u32,
    plant: PlantBlock,
    neurons: NeuronParams,
    initial: InitialBlock,
    solver: SolverBlock,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    disturbance: Option<SignalSpec>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    noise: Option<SignalSpec>,
}

impl ScenarioFile {
    pub fn into_scenario(self) -> Result<ClosedLoopScenario> {
        if self.spec != SCHEMA_VERSION {
            return Err(Error::Config(format!(
                "unsupported scenario schema version {} (expected {SCHEMA_VERSION})",
                self.spec
            )));
        }
        let a = match self.plant.a {
            Matrix::Scalar(v) => vec![vec![v]],
            Matrix::Rows(rows) => rows,
        };
        let plant = PlantParams::new(a, self.plant.b.into_vec(), self.plant.c.into_vec())?;
        let scenario = ClosedLoopScenario {
            plant,
            neurons: self.neurons,
            q0: HybridState::new(
                self.initial.x.into_vec(),
                self.initial.xi1,
                self.initial.xi2,
            ),
            disturbance: self.disturbance,
            noise: self.noise,
            solver: SolverOptions {
                h: self.solver.h,
                event_tol_state: self.solver.tolerances.state,
                event_tol_time: self.solver.tolerances.time,
                j_max: self.solver.j_max,
                t_end: self.solver.t_end,
            },
        };
        scenario.validate()?;
        Ok(scenario)
    }

    pub fn from_scenario(s: &ClosedLoopScenario) -> Self {
        ScenarioFile {
            spec: SCHEMA_VERSION,
            plant: PlantBlock {
                a: Matrix::Rows(s.plant.a_rows()),
                b: Vector::Entries(s.plant.b().to_vec()),
                c: Vector::Entries(s.plant.c().to_vec()),
            },
            neurons: s.neurons,
            initial: InitialBlock {
                x: Vector::Entries(s.q0.x.clone()),
                xi1: s.q0.xi1,
                xi2: s.q0.xi2,
            },
            solver: SolverBlock {
                h: s.solver.h,
                t_end: s.solver.t_end,
                j_max: s.solver.j_max,
                tolerances: Tolerances {
                    state: s.solver.event_tol_state,
                    time: s.solver.event_tol_time,
                },
            },
            disturbance: s.disturbance,
            noise: s.noise,
        }
    }
}

pub fn parse_scenario(json: &str) -> Result<ClosedLoopScenario> {
    let file: ScenarioFile =
        serde_json::from_str(json).map_err(|e| Error::Config(format!("scenario JSON: {e}")))?;
    file.into_scenario()
}

pub fn load_scenario(path: &Path) -> Result<ClosedLoopScenario> {
    parse_scenario(&std::fs::read_to_string(path)?)
}

pub fn scenario_to_json(s: &ClosedLoopScenario) -> String {
    serde_json::to_string_pretty(&ScenarioFile::from_scenario(s)).expect("scenario serializes")
}

/// SHA-256 of the compact canonical JSON form, hex encoded.
pub fn scenario_hash(s: &ClosedLoopScenario) -> String {
    let canonical =
        serde_json::to_string(&ScenarioFile::from_scenario(s)).expect("scenario serializes");
    hex::encode(Sha256::digest(canonical.as_bytes()))
}

fn unit_scalar_plant(a: f64) -> PlantParams {
    PlantParams::scalar(a, 1.0, 1.0).expect("finite scalar plant")
}

/// `a = 1`, `B = C = 1`, `alpha = mu = 0.5`, `delta = 0.1`, `x0 = 20`, 15 s.
pub fn fig3_nominal() -> ClosedLoopScenario {
    ClosedLoopScenario {
        plant: unit_scalar_plant(1.0),
        neurons: NeuronParams::symmetric(0.5, 0.5, 0.1).expect("valid"),
        q0: HybridState::scalar(20.0, 0.0, 0.0),
        disturbance: None,
        noise: None,
        solver: SolverOptions::with_horizon(15.0),
    }
}

/// Asymmetric neurons with uniform ±0.1 disturbance and measurement noise.
/// Both signals share `seed` and use ChaCha streams 0 (disturbance) and 1 (noise).
pub fn fig3_noisy_asym(seed: u64) -> ClosedLoopScenario {
    ClosedLoopScenario {
        neurons: NeuronParams::new(0.3, 0.5, 0.2, 0.5, 0.1, 0.2).expect("valid"),
        disturbance: Some(SignalSpec::uniform(seed, 0)),
        noise: Some(SignalSpec::uniform(seed, 1)),
        ..fig3_nominal()
    }
}

/// Parameters satisfying the stability theorem with rho = 0.5, sigma = 0.6:
/// `delta = 1/6`, started on the edge of the certified region `x0 = 0.36`.
pub fn certified() -> ClosedLoopScenario {
    ClosedLoopScenario {
        neurons: NeuronParams::symmetric(0.5, 0.5, 1.0 / 6.0).expect("valid"),
        q0: HybridState::scalar(0.36, 0.0, 0.0),
        ..fig3_nominal()
    }
}

pub fn builtin(name: &str, seed: Option<u64>) -> Option<ClosedLoopScenario> {
    match name {
        FIG3_NOMINAL => Some(fig3_nominal()),
        FIG3_NOISY_ASYM => Some(fig3_noisy_asym(seed.unwrap_or(DEFAULT_NOISE_SEED))),
        CERTIFIED => Some(certified()),
        _ => None,
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn builtins_round_trip_through_json() {
        for name in BUILTIN_NAMES {
            let s = builtin(name, Some(7)).unwrap();
            let back = parse_scenario(&scenario_to_json(&s)).unwrap();
            assert_eq!(back, s, "{name}");
            assert_eq!(scenario_hash(&back), scenario_hash(&s));
        }
    }

    #[test]
    fn scalar_shorthand() {
        let s = parse_scenario(
            r#"{"spec":1,"plant":{"A":1,"B":1,"C":1},
                "neurons":{"alpha1":0.5,"alpha2":0.5,"mu1":0.5,"mu2":0.5,"delta1":0.1,"delta2":0.1},
                "initial":{"x":20},"solver":{"t_end":15}}"#,
        )
        .unwrap();
        assert_eq!(s, fig3_nominal());
    }

    #[test]
    fn rejects_bad_files() {
        assert!(matches!(parse_scenario("{not json"), Err(Error::Config(_))));
        let wrong_version = scenario_to_json(&fig3_nominal()).replace("\"spec\": 1", "\"spec\": 2");
        assert!(matches!(
            parse_scenario(&wrong_version),
            Err(Error::Config(_))
        ));
        let bad_b = r#"{"spec":1,"plant":{"A":[[1.0]],"B":[1.0,2.0],"C":[1.0]},
            "neurons":{"alpha1":0.5,"alpha2":0.5,"mu1":0.5,"mu2":0.5,"delta1":0.1,"delta2":0.1},
            "initial":{"x":[20.0]},"solver":{"t_end":15}}"#;
        assert!(matches!(parse_scenario(bad_b), Err(Error::Config(_))));
    }

    #[test]
    fn seed_changes_hash() {
        assert_ne!(
            scenario_hash(&fig3_noisy_asym(1)),
            scenario_hash(&fig3_noisy_asym(2))
        );
    }
}
