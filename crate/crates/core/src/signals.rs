//! Seeded piecewise-linear random signals used as disturbance and measurement noise.
//!
//! Knot values are drawn uniformly from `[-amplitude, amplitude)` on a regular
//! grid and linearly interpolated. The generator is ChaCha8 seeded through
//! `seed_from_u64`; independent signals sharing a seed are separated by the
//! ChaCha stream id. Each knot consumes one `u64`, mapped to `[0, 1)` by its
//! top 53 bits.

use std::io::Write;
use std::sync::Mutex;

use rand_chacha::ChaCha8Rng;
use rand_core::{RngCore, SeedableRng};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub const DEFAULT_GRID_STEP: f64 = 0.01;
pub const DEFAULT_AMPLITUDE: f64 = 0.1;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SignalKind {
    PiecewiseLinearUniform,
}

/// Scenario-file description of a signal.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SignalSpec {
    #[serde(rename = "type")]
    pub kind: SignalKind,
    #[serde(default = "default_grid_step")]
    pub grid_step: f64,
    #[serde(default = "default_amplitude")]
    pub amplitude: f64,
    pub seed: u64,
    #[serde(default)]
    pub stream: u64,
}

fn default_grid_step() -> f64 {
    DEFAULT_GRID_STEP
}

fn default_amplitude() -> f64 {
    DEFAULT_AMPLITUDE
}

impl SignalSpec {
    pub fn uniform(seed: u64, stream: u64) -> Self {
        Self {
            kind: SignalKind::PiecewiseLinearUniform,
            grid_step: DEFAULT_GRID_STEP,
            amplitude: DEFAULT_AMPLITUDE,
            seed,
            stream,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.grid_step > 0.0 && self.grid_step.is_finite()) {
            return Err(Error::Config(format!(
                "signal grid_step must be positive, got {}",
                self.grid_step
            )));
        }
        if !(self.amplitude >= 0.0 && self.amplitude.is_finite()) {
            return Err(Error::Config(format!(
                "signal amplitude must be non-negative, got {}",
                self.amplitude
            )));
        }
        Ok(())
    }
}

struct KnotCache {
    rng: ChaCha8Rng,
    knots: Vec<f64>,
}

pub struct PiecewiseLinearSignal {
    spec: SignalSpec,
    cache: Mutex<KnotCache>,
}

impl std::fmt::Debug for PiecewiseLinearSignal {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("PiecewiseLinearSignal")
            .field("spec", &self.spec)
            .finish_non_exhaustive()
    }
}

impl Clone for PiecewiseLinearSignal {
    fn clone(&self) -> Self {
        Self::from_spec_unchecked(self.spec)
    }
}

impl PiecewiseLinearSignal {
    pub fn new(spec: SignalSpec) -> Result<Self> {
        spec.validate()?;
        Ok(Self::from_spec_unchecked(spec))
    }

    fn from_spec_unchecked(spec: SignalSpec) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
        rng.set_stream(spec.stream);
        Self {
            spec,
            cache: Mutex::new(KnotCache {
                rng,
                knots: Vec::new(),
            }),
        }
    }

    pub fn spec(&self) -> &SignalSpec {
        &self.spec
    }

    /// Knot value `v_k`, generating the sequence up to `k` if needed.
    pub fn knot(&self, k: usize) -> f64 {
        let mut cache = self.cache.lock().unwrap_or_else(|e| e.into_inner());
        let amplitude = self.spec.amplitude;
        while cache.knots.len() <= k {
            let u = (cache.rng.next_u64() >> 11) as f64 * (1.0 / (1u64 << 53) as f64);
            cache.knots.push(amplitude * (2.0 * u - 1.0));
        }
        cache.knots[k]
    }

    /// Generate every knot needed to sample on `[0, t_end]`.
    pub fn materialize(&self, t_end: f64) {
        let k = (t_end.max(0.0) / self.spec.grid_step).ceil() as usize + 1;
        self.knot(k);
    }

    /// Linear interpolation between the surrounding knots; exact at knots.
    pub fn sample(&self, t: f64) -> f64 {
        let u = t.max(0.0) / self.spec.grid_step;
        let nearest = u.round();
        // snap values that are a knot up to rounding of t / grid_step
        if (u - nearest).abs() <= 1e-12 * nearest.max(1.0) {
            return self.knot(nearest as usize);
        }
        let k = u.floor();
        let theta = (u - k).clamp(0.0, 1.0);
        let k = k as usize;
        let (v0, v1) = (self.knot(k), self.knot(k + 1));
        (1.0 - theta) * v0 + theta * v1
    }

    /// Write `t,value` rows at knot resolution on `[0, t_end]`.
    pub fn write_knots_csv<W: Write>(&self, out: W, t_end: f64) -> Result<()> {
        let mut w = csv::Writer::from_writer(out);
        w.write_record(["t", "value"])?;
        let n = (t_end / self.spec.grid_step).floor() as usize;
        for k in 0..=n {
            let t = k as f64 * self.spec.grid_step;
            w.write_record([
                crate::trace_io::fmt_f64(t),
                crate::trace_io::fmt_f64(self.knot(k)),
            ])?;
        }
        w.flush()?;
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn exact_at_knots() {
        let sig = PiecewiseLinearSignal::new(SignalSpec::uniform(3, 0)).unwrap();
        for k in 0..500 {
            let t = k as f64 * sig.spec().grid_step;
            assert_eq!(sig.sample(t), sig.knot(k), "knot {k}");
        }
    }

    #[test]
    fn midpoint_is_average() {
        let sig = PiecewiseLinearSignal::new(SignalSpec::uniform(11, 0)).unwrap();
        for k in 0..200 {
            let t = (k as f64 + 0.5) * 0.01;
            let expected = 0.5 * (sig.knot(k) + sig.knot(k + 1));
            assert!((sig.sample(t) - expected).abs() < 1e-14);
        }
    }

    #[test]
    fn zero_amplitude_is_identically_zero() {
        let spec = SignalSpec {
            amplitude: 0.0,
            ..SignalSpec::uniform(5, 0)
        };
        let sig = PiecewiseLinearSignal::new(spec).unwrap();
        for i in 0..1000 {
            assert_eq!(sig.sample(i as f64 * 0.0037), 0.0);
        }
    }

    #[test]
    fn streams_are_independent() {
        let a = PiecewiseLinearSignal::new(SignalSpec::uniform(1, 0)).unwrap();
        let b = PiecewiseLinearSignal::new(SignalSpec::uniform(1, 1)).unwrap();
        assert_ne!(a.knot(0), b.knot(0));
    }

    #[test]
    fn generation_order_does_not_matter() {
        let a = PiecewiseLinearSignal::new(SignalSpec::uniform(9, 2)).unwrap();
        let b = a.clone();
        let late = a.knot(300);
        for k in 0..=300 {
            b.knot(k);
        }
        assert_eq!(late.to_bits(), b.knot(300).to_bits());
    }

    #[test]
    fn rejects_bad_spec() {
        let spec = SignalSpec {
            grid_step: 0.0,
            ..SignalSpec::uniform(0, 0)
        };
        assert!(PiecewiseLinearSignal::new(spec).is_err());
        let spec = SignalSpec {
            amplitude: -1.0,
            ..SignalSpec::uniform(0, 0)
        };
        assert!(PiecewiseLinearSignal::new(spec).is_err());
    }

    #[test]
    fn parses_scenario_block() {
        let spec: SignalSpec = serde_json::from_str(
            r#"{"type":"piecewise_linear_uniform","grid_step":0.01,"amplitude":0.1,"seed":42}"#,
        )
        .unwrap();
        assert_eq!(spec, SignalSpec::uniform(42, 0));
    }
}
