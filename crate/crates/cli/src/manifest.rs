use std::collections::BTreeMap;
use std::path::Path;

use serde::Serialize;

use neurospike_core::{
    min_interspike, ultimate_bound_estimate, HybridTrace, SolverOptions, Termination,
};

/// Statistics reported for every simulated scenario.
#[derive(Debug, Clone, Serialize)]
pub struct Summary {
    pub jump_count: usize,
    /// `sup |x|` over `t >= t_cut`; absent when the run ended earlier.
    pub ultimate_bound: Option<f64>,
    pub min_interspike: Option<f64>,
    pub min_interspike_steady: Option<f64>,
    pub t_cut: f64,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub certified: Option<bool>,
}

impl Summary {
    /// Steady-state window starts halfway through the horizon.
    pub fn of(trace: &HybridTrace, t_end: f64) -> Self {
        let t_cut = 0.5 * t_end;
        Self {
            jump_count: trace.jumps.len(),
            ultimate_bound: ultimate_bound_estimate(trace, t_cut).ok(),
            min_interspike: min_interspike(trace, 0.0),
            min_interspike_steady: min_interspike(trace, t_cut),
            t_cut,
            certified: None,
        }
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct ScenarioEntry {
    pub label: String,
    /// File path or built-in name.
    pub source: String,
    pub hash: String,
    pub solver: SolverOptions,
    pub termination: Termination,
    pub summary: Summary,
}

#[derive(Debug, Clone, Serialize)]
pub struct RunManifest {
    pub command: String,
    pub versions: BTreeMap<&'static str, &'static str>,
    pub scenarios: Vec<ScenarioEntry>,
    /// Paths relative to the output directory.
    pub outputs: Vec<String>,
    pub runtime_s: f64,
}

impl RunManifest {
    pub fn new(command: &str) -> Self {
        let versions = BTreeMap::from([
            ("neurospike", env!("CARGO_PKG_VERSION")),
            ("neurospike-core", neurospike_core::VERSION),
        ]);
        Self {
            command: command.to_string(),
            versions,
            scenarios: Vec::new(),
            outputs: Vec::new(),
            runtime_s: 0.0,
        }
    }

    pub fn write(&self, dir: &Path) -> std::io::Result<()> {
        let json = serde_json::to_string_pretty(self).map_err(std::io::Error::other)?;
        std::fs::write(dir.join("manifest.json"), json + "\n")
    }
}
