//! Simulation and certification of a spiking impulsive controller.
//!
//! A linear plant is stabilized by two leaky integrate-and-fire neurons, one
//! for each sign of the measured output. Each neuron integrates its input and,
//! when its membrane potential reaches a threshold, resets and kicks the plant
//! state by a fixed amplitude. The closed loop is a hybrid system; this crate
//! simulates it ([`hybrid`], [`lif`]), designs parameters with guaranteed
//! region of attraction, ultimate bound and dwell time for scalar plants
//! ([`analysis`]), and checks simulated traces against those guarantees.

pub mod analysis;
pub mod error;
pub mod hybrid;
pub mod lif;
pub mod scenario;
pub mod signals;
pub mod trace_io;

pub use analysis::{
    certify_trace, closed_form_state, closed_form_xi, design_certificate, min_interspike,
    next_spike_time, solve_rho_for_roa, ultimate_bound_estimate, CertificationReport, ScalarPlant,
    StabilityCertificate,
};
pub use error::{Error, Result};
pub use hybrid::{
    integrate_flow, locate_guard_crossing, simulate, Guard, HybridState, HybridSystem, HybridTime,
    HybridTrace, JumpRecord, SolverOptions, Termination,
};
pub use lif::{build_hybrid_system, ClosedLoop, ClosedLoopScenario, NeuronParams, PlantParams};
pub use signals::{PiecewiseLinearSignal, SignalSpec};

pub const VERSION: &str = env!("CARGO_PKG_VERSION");
