//! The closed loop: an LTI plant driven by impulses from a pair of leaky
//! integrate-and-fire neurons.
//!
//! Neuron 1 integrates the positive part of the measured output and, on
//! reaching its threshold, kicks the plant by `-B * alpha1`. Neuron 2
//! integrates the negative part and kicks by `+B * alpha2`.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::hybrid::{simulate, Guard, HybridState, HybridSystem, HybridTrace, SolverOptions};
use crate::signals::{PiecewiseLinearSignal, SignalSpec};

/// `x' = A x + B u`, `y = C x`, stored row-major.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct PlantParams {
    a: Vec<f64>,
    b: Vec<f64>,
    c: Vec<f64>,
}

impl PlantParams {
    pub fn new(a: Vec<Vec<f64>>, b: Vec<f64>, c: Vec<f64>) -> Result<Self> {
        let n = a.len();
        if n == 0 {
            return Err(Error::Config("plant must have at least one state".into()));
        }
        if let Some(row) = a.iter().position(|r| r.len() != n) {
            return Err(Error::Config(format!(
                "A must be square: row {row} has {} entries, expected {n}",
                a[row].len()
            )));
        }
        if b.len() != n {
            return Err(Error::Config(format!(
                "B has length {}, expected {n}",
                b.len()
            )));
        }
        if c.len() != n {
            return Err(Error::Config(format!(
                "C has length {}, expected {n}",
                c.len()
            )));
        }
        let a: Vec<f64> = a.into_iter().flatten().collect();
        if !a.iter().chain(&b).chain(&c).all(|v| v.is_finite()) {
            return Err(Error::Config("plant entries must be finite".into()));
        }
        Ok(Self { a, b, c })
    }

    pub fn scalar(a: f64, b: f64, c: f64) -> Result<Self> {
        Self::new(vec![vec![a]], vec![b], vec![c])
    }

    pub fn n_x(&self) -> usize {
        self.b.len()
    }

    pub fn a_rows(&self) -> Vec<Vec<f64>> {
        self.a.chunks(self.n_x()).map(<[f64]>::to_vec).collect()
    }

    pub fn b(&self) -> &[f64] {
        &self.b
    }

    pub fn c(&self) -> &[f64] {
        &self.c
    }

    /// `(a, b, c)` when the plant is one-dimensional.
    pub fn as_scalar(&self) -> Option<(f64, f64, f64)> {
        (self.n_x() == 1).then(|| (self.a[0], self.b[0], self.c[0]))
    }

    pub fn output(&self, x: &[f64]) -> f64 {
        self.c.iter().zip(x).map(|(c, x)| c * x).sum()
    }

    pub fn drift(&self, x: &[f64]) -> Vec<f64> {
        let n = self.n_x();
        self.a
            .chunks(n)
            .map(|row| row.iter().zip(x).map(|(a, x)| a * x).sum())
            .collect()
    }
}

/// Per-neuron amplitude, leak rate and threshold.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "RawNeurons")]
pub struct NeuronParams {
    alpha1: f64,
    alpha2: f64,
    mu1: f64,
    mu2: f64,
    delta1: f64,
    delta2: f64,
}

#[derive(Deserialize)]
struct RawNeurons {
    alpha1: f64,
    alpha2: f64,
    mu1: f64,
    mu2: f64,
    delta1: f64,
    delta2: f64,
}

impl TryFrom<RawNeurons> for NeuronParams {
    type Error = Error;

    fn try_from(r: RawNeurons) -> Result<Self> {
        NeuronParams::new(r.alpha1, r.alpha2, r.mu1, r.mu2, r.delta1, r.delta2)
    }
}

impl NeuronParams {
    pub fn new(
        alpha1: f64,
        alpha2: f64,
        mu1: f64,
        mu2: f64,
        delta1: f64,
        delta2: f64,
    ) -> Result<Self> {
        for (name, v) in [
            ("alpha1", alpha1),
            ("alpha2", alpha2),
            ("delta1", delta1),
            ("delta2", delta2),
        ] {
            if !(v > 0.0 && v.is_finite()) {
                return Err(Error::Config(format!("{name} must be > 0, got {v}")));
            }
        }
        for (name, v) in [("mu1", mu1), ("mu2", mu2)] {
            if !(v >= 0.0 && v.is_finite()) {
                return Err(Error::Config(format!("{name} must be >= 0, got {v}")));
            }
        }
        Ok(Self {
            alpha1,
            alpha2,
            mu1,
            mu2,
            delta1,
            delta2,
        })
    }

    pub fn symmetric(alpha: f64, mu: f64, delta: f64) -> Result<Self> {
        Self::new(alpha, alpha, mu, mu, delta, delta)
    }

    pub fn alpha(&self, guard: Guard) -> f64 {
        match guard {
            Guard::One => self.alpha1,
            Guard::Two => self.alpha2,
        }
    }

    pub fn mu(&self, guard: Guard) -> f64 {
        match guard {
            Guard::One => self.mu1,
            Guard::Two => self.mu2,
        }
    }

    pub fn delta(&self, guard: Guard) -> f64 {
        match guard {
            Guard::One => self.delta1,
            Guard::Two => self.delta2,
        }
    }

    pub fn is_symmetric(&self) -> bool {
        self.alpha1 == self.alpha2 && self.mu1 == self.mu2 && self.delta1 == self.delta2
    }
}

/// Closed-loop vector field. `v` is added to every plant state derivative,
/// `w` to the measured output seen by the neurons.
pub fn flow_map(
    q: &HybridState,
    plant: &PlantParams,
    neurons: &NeuronParams,
    v: f64,
    w: f64,
) -> HybridState {
    let mut dx = plant.drift(&q.x);
    if v != 0.0 {
        dx.iter_mut().for_each(|d| *d += v);
    }
    let y = plant.output(&q.x) + w;
    HybridState {
        x: dx,
        xi1: -neurons.mu1 * q.xi1 + y.max(0.0),
        xi2: -neurons.mu2 * q.xi2 + (-y).max(0.0),
    }
}

/// `[xi1 - delta1, xi2 - delta2]`
pub fn guard_residuals(q: &HybridState, neurons: &NeuronParams) -> [f64; 2] {
    [q.xi1 - neurons.delta1, q.xi2 - neurons.delta2]
}

/// Fire neuron `active`: reset its potential and displace the plant by `∓B·alpha`.
pub fn jump_map(
    q: &HybridState,
    active: Guard,
    plant: &PlantParams,
    neurons: &NeuronParams,
    event_tol_state: f64,
) -> Result<HybridState> {
    let residual = guard_residuals(q, neurons)[active.index()];
    if residual < -event_tol_state {
        return Err(Error::Contract(format!(
            "neuron {active} cannot fire: residual {residual} below -{event_tol_state}"
        )));
    }
    if q.n_x() != plant.n_x() {
        return Err(Error::Contract(format!(
            "state has {} components, plant has {}",
            q.n_x(),
            plant.n_x()
        )));
    }
    let alpha = neurons.alpha(active);
    let next = match active {
        Guard::One => HybridState {
            x: q.x
                .iter()
                .zip(&plant.b)
                .map(|(x, b)| x - b * alpha)
                .collect(),
            xi1: 0.0,
            xi2: q.xi2,
        },
        Guard::Two => HybridState {
            x: q.x
                .iter()
                .zip(&plant.b)
                .map(|(x, b)| x + b * alpha)
                .collect(),
            xi1: q.xi1,
            xi2: 0.0,
        },
    };
    Ok(next)
}

#[derive(Debug, Clone, PartialEq)]
pub struct ClosedLoopScenario {
    pub plant: PlantParams,
    pub neurons: NeuronParams,
    pub q0: HybridState,
    /// State-additive disturbance `v`.
    pub disturbance: Option<SignalSpec>,
    /// Output-additive measurement noise `w`.
    pub noise: Option<SignalSpec>,
    pub solver: SolverOptions,
}

impl ClosedLoopScenario {
    pub fn validate(&self) -> Result<()> {
        self.solver.validate()?;
        if self.q0.n_x() != self.plant.n_x() {
            return Err(Error::Config(format!(
                "initial x has {} components, plant has {}",
                self.q0.n_x(),
                self.plant.n_x()
            )));
        }
        if !self.q0.x.iter().all(|v| v.is_finite()) {
            return Err(Error::Config("initial x must be finite".into()));
        }
        for (name, xi) in [("xi1", self.q0.xi1), ("xi2", self.q0.xi2)] {
            if !(xi >= 0.0 && xi.is_finite()) {
                return Err(Error::Config(format!(
                    "initial {name} must be >= 0, got {xi}"
                )));
            }
        }
        for spec in self.disturbance.iter().chain(&self.noise) {
            spec.validate()?;
        }
        Ok(())
    }

    /// Assemble, simulate and stamp the trace with this scenario's hash.
    pub fn run(&self) -> Result<HybridTrace> {
        let sys = build_hybrid_system(self)?;
        let mut trace = simulate(&sys, &self.q0, &self.solver)?;
        trace.meta.scenario_hash = Some(crate::scenario::scenario_hash(self));
        Ok(trace)
    }
}

/// The closed loop as a [`HybridSystem`].
#[derive(Debug, Clone)]
pub struct ClosedLoop {
    plant: PlantParams,
    neurons: NeuronParams,
    disturbance: Option<PiecewiseLinearSignal>,
    noise: Option<PiecewiseLinearSignal>,
    event_tol_state: f64,
}

impl ClosedLoop {
    pub fn plant(&self) -> &PlantParams {
        &self.plant
    }

    pub fn neurons(&self) -> &NeuronParams {
        &self.neurons
    }
}

pub fn build_hybrid_system(scenario: &ClosedLoopScenario) -> Result<ClosedLoop> {
    scenario.validate()?;
    let make = |spec: &Option<SignalSpec>| -> Result<Option<PiecewiseLinearSignal>> {
        spec.map(|s| {
            let sig = PiecewiseLinearSignal::new(s)?;
            sig.materialize(scenario.solver.t_end + scenario.solver.h);
            Ok(sig)
        })
        .transpose()
    };
    Ok(ClosedLoop {
        plant: scenario.plant.clone(),
        neurons: scenario.neurons,
        disturbance: make(&scenario.disturbance)?,
        noise: make(&scenario.noise)?,
        event_tol_state: scenario.solver.event_tol_state,
    })
}

impl HybridSystem for ClosedLoop {
    fn flow(&self, t: f64, q: &HybridState) -> HybridState {
        let v = self.disturbance.as_ref().map_or(0.0, |s| s.sample(t));
        let w = self.noise.as_ref().map_or(0.0, |s| s.sample(t));
        flow_map(q, &self.plant, &self.neurons, v, w)
    }

    fn guard_residuals(&self, q: &HybridState) -> [f64; 2] {
        guard_residuals(q, &self.neurons)
    }

    fn jump(&self, q: &HybridState, guard: Guard) -> Result<HybridState> {
        jump_map(q, guard, &self.plant, &self.neurons, self.event_tol_state)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn unit_plant() -> PlantParams {
        PlantParams::scalar(1.0, 1.0, 1.0).unwrap()
    }

    #[test]
    fn flow_map_hand_substitution() {
        let n = NeuronParams::symmetric(0.5, 0.5, 0.1).unwrap();
        let d = flow_map(
            &HybridState::scalar(2.0, 0.05, 0.0),
            &unit_plant(),
            &n,
            0.0,
            0.0,
        );
        assert_eq!(d.x, vec![2.0]);
        assert!((d.xi1 - 1.975).abs() < 1e-15);
        assert_eq!(d.xi2, 0.0);

        let d = flow_map(
            &HybridState::scalar(-2.0, 0.0, 0.1),
            &unit_plant(),
            &n,
            0.0,
            0.0,
        );
        assert_eq!(d.x, vec![-2.0]);
        assert_eq!(d.xi1, 0.0);
        assert!((d.xi2 - 1.95).abs() < 1e-15);
    }

    #[test]
    fn origin_is_stationary() {
        let n = NeuronParams::new(0.3, 0.5, 0.2, 0.5, 0.1, 0.2).unwrap();
        let d = flow_map(&HybridState::zeros(1), &unit_plant(), &n, 0.0, 0.0);
        assert_eq!(d, HybridState::zeros(1));
    }

    #[test]
    fn signals_enter_plant_and_output() {
        let n = NeuronParams::symmetric(0.5, 0.0, 0.1).unwrap();
        let d = flow_map(
            &HybridState::scalar(1.0, 0.0, 0.0),
            &unit_plant(),
            &n,
            0.25,
            -1.5,
        );
        assert_eq!(d.x, vec![1.25]);
        // y = 1 - 1.5 < 0, so only neuron 2 integrates
        assert_eq!(d.xi1, 0.0);
        assert_eq!(d.xi2, 0.5);
    }

    #[test]
    fn residuals() {
        let n = NeuronParams::symmetric(0.5, 0.5, 0.1).unwrap();
        let r = guard_residuals(&HybridState::scalar(0.0, 0.1, 0.0), &n);
        assert_eq!(r[0], 0.0);
        let r = guard_residuals(&HybridState::scalar(0.0, 0.05, 0.0), &n);
        assert!((r[0] + 0.05).abs() < 1e-15 && (r[1] + 0.1).abs() < 1e-15);
        let r = guard_residuals(&HybridState::scalar(0.0, 0.0, 0.12), &n);
        assert!((r[1] - 0.02).abs() < 1e-15);
    }

    #[test]
    fn boundary_state_is_in_both_sets() {
        let scenario = crate::scenario::fig3_nominal();
        let sys = build_hybrid_system(&scenario).unwrap();
        let q = HybridState::scalar(0.0, 0.1, 0.0);
        assert!(sys.in_flow_set(&q));
        assert!(sys.in_jump_set(&q));
        let q = HybridState::scalar(0.0, 0.0, 0.12);
        assert!(!sys.in_flow_set(&q));
        assert!(sys.in_jump_set(&q));
    }

    #[test]
    fn jump_map_substitution() {
        let n = NeuronParams::symmetric(0.5, 0.5, 0.1).unwrap();
        let q = jump_map(
            &HybridState::scalar(1.0, 0.1, 0.03),
            Guard::One,
            &unit_plant(),
            &n,
            1e-9,
        )
        .unwrap();
        assert_eq!(q, HybridState::scalar(0.5, 0.0, 0.03));
        let q = jump_map(
            &HybridState::scalar(-1.0, 0.0, 0.1),
            Guard::Two,
            &unit_plant(),
            &n,
            1e-9,
        )
        .unwrap();
        assert_eq!(q, HybridState::scalar(-0.5, 0.0, 0.0));
    }

    #[test]
    fn jump_map_rejects_inactive_guard() {
        let n = NeuronParams::symmetric(0.5, 0.5, 0.1).unwrap();
        let err = jump_map(
            &HybridState::scalar(1.0, 0.05, 0.0),
            Guard::One,
            &unit_plant(),
            &n,
            1e-9,
        );
        assert!(matches!(err, Err(Error::Contract(_))));
    }

    #[test]
    fn zero_amplitude_is_rejected() {
        assert!(NeuronParams::symmetric(0.0, 0.5, 0.1).is_err());
        assert!(NeuronParams::symmetric(0.5, -0.1, 0.1).is_err());
        assert!(NeuronParams::symmetric(0.5, 0.5, 0.0).is_err());
        assert!(serde_json::from_str::<NeuronParams>(
            r#"{"alpha1":0,"alpha2":0.5,"mu1":0.5,"mu2":0.5,"delta1":0.1,"delta2":0.1}"#
        )
        .is_err());
    }

    #[test]
    fn plant_dimension_checks() {
        assert!(PlantParams::new(
            vec![vec![0.0, 1.0], vec![0.0, 0.0]],
            vec![0.0, 1.0],
            vec![1.0, 0.0]
        )
        .is_ok());
        assert!(matches!(
            PlantParams::new(
                vec![vec![0.0, 1.0], vec![0.0, 0.0]],
                vec![1.0],
                vec![1.0, 0.0]
            ),
            Err(Error::Config(_))
        ));
        assert!(PlantParams::new(vec![vec![0.0, 1.0]], vec![1.0], vec![1.0]).is_err());
        assert!(PlantParams::new(vec![], vec![], vec![]).is_err());
    }

    #[test]
    fn double_integrator_runs() {
        let scenario = ClosedLoopScenario {
            plant: PlantParams::new(
                vec![vec![0.0, 1.0], vec![0.0, 0.0]],
                vec![0.0, 1.0],
                vec![1.0, 0.0],
            )
            .unwrap(),
            neurons: NeuronParams::symmetric(0.5, 0.5, 0.1).unwrap(),
            q0: HybridState::new(vec![1.0, 0.0], 0.0, 0.0),
            disturbance: None,
            noise: None,
            solver: SolverOptions::with_horizon(5.0),
        };
        let trace = scenario.run().unwrap();
        assert!(!trace.jumps.is_empty());
        assert_eq!(trace.n_x(), 2);
    }

    #[test]
    fn mismatched_initial_state_is_rejected() {
        let mut scenario = crate::scenario::fig3_nominal();
        scenario.q0 = HybridState::new(vec![1.0, 2.0], 0.0, 0.0);
        assert!(matches!(
            build_hybrid_system(&scenario),
            Err(Error::Config(_))
        ));
    }
}
