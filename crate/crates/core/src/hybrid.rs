//! Generic simulation of hybrid systems with a flow set and a jump set.
//!
//! Flow is integrated with fixed-step classical Runge-Kutta. After every
//! step the guard residuals are inspected; an upward sign change of the
//! largest residual is localized by bisection (each probe re-integrates a
//! single sub-step from the start of the step), and the jump is applied at
//! the localized state rather than at the overshoot.
//!
//! Solutions are stored on a hybrid time domain: an ordered list of flow
//! arcs indexed by the jump counter `j`, separated by [`JumpRecord`]s.

use std::cmp::Ordering;
use std::fmt;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// A point `(t, j)` of a hybrid time domain.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct HybridTime {
    pub t: f64,
    pub j: u64,
}

impl HybridTime {
    pub fn new(t: f64, j: u64) -> Self {
        Self { t, j }
    }
}

impl PartialOrd for HybridTime {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        match self.j.cmp(&other.j) {
            Ordering::Equal => self.t.partial_cmp(&other.t),
            ord => {
                // Lexicographic order is only meaningful when time agrees with it.
                let t_ord = self.t.partial_cmp(&other.t)?;
                if t_ord == ord || t_ord == Ordering::Equal {
                    Some(ord)
                } else {
                    None
                }
            }
        }
    }
}

/// Plant state plus the two membrane potentials.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HybridState {
    pub x: Vec<f64>,
    pub xi1: f64,
    pub xi2: f64,
}

impl HybridState {
    pub fn new(x: Vec<f64>, xi1: f64, xi2: f64) -> Self {
        Self { x, xi1, xi2 }
    }

    pub fn scalar(x: f64, xi1: f64, xi2: f64) -> Self {
        Self::new(vec![x], xi1, xi2)
    }

    pub fn zeros(n_x: usize) -> Self {
        Self::new(vec![0.0; n_x], 0.0, 0.0)
    }

    pub fn n_x(&self) -> usize {
        self.x.len()
    }

    pub fn xi(&self, guard: Guard) -> f64 {
        match guard {
            Guard::One => self.xi1,
            Guard::Two => self.xi2,
        }
    }
}

/// Vector-space operations needed by the integrator.
pub trait FlowState: Clone {
    /// `self + scale * delta`
    fn add_scaled(&self, scale: f64, delta: &Self) -> Self;
    fn is_finite(&self) -> bool;
    fn to_vec(&self) -> Vec<f64>;
}

impl FlowState for f64 {
    fn add_scaled(&self, scale: f64, delta: &Self) -> Self {
        self + scale * delta
    }

    fn is_finite(&self) -> bool {
        f64::is_finite(*self)
    }

    fn to_vec(&self) -> Vec<f64> {
        vec![*self]
    }
}

impl FlowState for Vec<f64> {
    fn add_scaled(&self, scale: f64, delta: &Self) -> Self {
        debug_assert_eq!(self.len(), delta.len());
        self.iter().zip(delta).map(|(v, d)| v + scale * d).collect()
    }

    fn is_finite(&self) -> bool {
        self.iter().all(|v| v.is_finite())
    }

    fn to_vec(&self) -> Vec<f64> {
        self.clone()
    }
}

impl FlowState for HybridState {
    fn add_scaled(&self, scale: f64, delta: &Self) -> Self {
        HybridState {
            x: self.x.add_scaled(scale, &delta.x),
            xi1: self.xi1 + scale * delta.xi1,
            xi2: self.xi2 + scale * delta.xi2,
        }
    }

    fn is_finite(&self) -> bool {
        self.x.is_finite() && self.xi1.is_finite() && self.xi2.is_finite()
    }

    fn to_vec(&self) -> Vec<f64> {
        let mut v = self.x.clone();
        v.push(self.xi1);
        v.push(self.xi2);
        v
    }
}

/// One classical fourth-order Runge-Kutta step of `q' = f(t, q)` from `(t, q)` over `h`.
pub fn integrate_flow<S, F>(t: f64, q: &S, h: f64, f: F) -> Result<S>
where
    S: FlowState,
    F: Fn(f64, &S) -> S,
{
    if h.is_nan() || h <= 0.0 {
        return Err(Error::Contract(format!(
            "step size must be positive, got {h}"
        )));
    }
    let eval = |s: f64, p: &S| -> Result<S> {
        let d = f(s, p);
        if d.is_finite() {
            Ok(d)
        } else {
            Err(Error::NumericalFailure {
                t: s,
                state: p.to_vec(),
                partial: None,
            })
        }
    };
    let half = 0.5 * h;
    let k1 = eval(t, q)?;
    let k2 = eval(t + half, &q.add_scaled(half, &k1))?;
    let k3 = eval(t + half, &q.add_scaled(half, &k2))?;
    let k4 = eval(t + h, &q.add_scaled(h, &k3))?;
    let next = q
        .add_scaled(h / 6.0, &k1)
        .add_scaled(h / 3.0, &k2)
        .add_scaled(h / 3.0, &k3)
        .add_scaled(h / 6.0, &k4);
    if next.is_finite() {
        Ok(next)
    } else {
        Err(Error::NumericalFailure {
            t: t + h,
            state: next.to_vec(),
            partial: None,
        })
    }
}

/// Tolerances used when localizing a guard crossing.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EventTolerance {
    pub state: f64,
    pub time: f64,
}

impl Default for EventTolerance {
    fn default() -> Self {
        Self {
            state: DEFAULT_EVENT_TOL_STATE,
            time: DEFAULT_EVENT_TOL_TIME,
        }
    }
}

/// Find where `guard` crosses zero from below inside the step `[t_lo, t_hi]`.
///
/// Requires `guard(q_lo) < 0 <= guard(q_hi)`. Every probe re-integrates one
/// RK4 sub-step from `(t_lo, q_lo)`. The bracket is halved until it is
/// narrower than `tol.time`, and its upper end is returned, so
/// `guard(q_star) >= 0`. Stopping on `|guard| <= tol.state` instead would
/// lose accuracy in time when the residual approaches zero tangentially.
pub fn locate_guard_crossing<S, G, F>(
    t_lo: f64,
    q_lo: &S,
    t_hi: f64,
    q_hi: &S,
    guard: G,
    f: F,
    tol: EventTolerance,
) -> Result<(f64, S)>
where
    S: FlowState,
    G: Fn(&S) -> f64,
    F: Fn(f64, &S) -> S,
{
    let g_lo = guard(q_lo);
    let g_hi = guard(q_hi);
    if !(g_lo < 0.0 && g_hi >= 0.0) {
        return Err(Error::InvalidBracket { lo: g_lo, hi: g_hi });
    }
    if t_lo.is_nan() || t_hi.is_nan() || t_lo >= t_hi {
        return Err(Error::Contract(format!(
            "bracket times must satisfy t_lo < t_hi, got [{t_lo}, {t_hi}]"
        )));
    }

    let (mut a, mut b) = (t_lo, t_hi);
    let mut q_b = q_hi.clone();
    // 200 halvings exhaust any f64 interval.
    for _ in 0..200 {
        if b - a <= tol.time {
            break;
        }
        let mid = a + 0.5 * (b - a);
        if mid <= a || mid >= b {
            break;
        }
        let q_mid = integrate_flow(t_lo, q_lo, mid - t_lo, &f)?;
        let g = guard(&q_mid);
        if g == 0.0 {
            return Ok((mid, q_mid));
        }
        if g < 0.0 {
            a = mid;
        } else {
            b = mid;
            q_b = q_mid;
        }
    }
    Ok((b, q_b))
}

/// Which of the two guards fired.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(into = "u8", try_from = "u8")]
pub enum Guard {
    One,
    Two,
}

impl Guard {
    pub fn index(self) -> usize {
        match self {
            Guard::One => 0,
            Guard::Two => 1,
        }
    }
}

impl From<Guard> for u8 {
    fn from(g: Guard) -> u8 {
        g.index() as u8 + 1
    }
}

impl TryFrom<u8> for Guard {
    type Error = String;

    fn try_from(v: u8) -> std::result::Result<Self, String> {
        match v {
            1 => Ok(Guard::One),
            2 => Ok(Guard::Two),
            other => Err(format!("guard must be 1 or 2, got {other}")),
        }
    }
}

impl fmt::Display for Guard {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", u8::from(*self))
    }
}

/// A hybrid system whose jump set is the union of two guard sets
/// `{r_1(q) >= 0} ∪ {r_2(q) >= 0}`.
pub trait HybridSystem {
    /// Flow map, evaluated at continuous time `t`.
    fn flow(&self, t: f64, q: &HybridState) -> HybridState;

    /// Residuals `r_l`; guard `l` is active when `r_l >= 0`.
    fn guard_residuals(&self, q: &HybridState) -> [f64; 2];

    fn jump(&self, q: &HybridState, guard: Guard) -> Result<HybridState>;

    fn in_flow_set(&self, q: &HybridState) -> bool {
        self.guard_residuals(q).iter().all(|r| *r <= 0.0)
    }

    fn in_jump_set(&self, q: &HybridState) -> bool {
        self.guard_residuals(q).iter().any(|r| *r >= 0.0)
    }
}

pub const DEFAULT_STEP: f64 = 1e-3;
pub const DEFAULT_EVENT_TOL_STATE: f64 = 1e-9;
pub const DEFAULT_EVENT_TOL_TIME: f64 = 1e-12;
pub const DEFAULT_JUMP_LIMIT: u64 = 1_000_000;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SolverOptions {
    pub h: f64,
    pub event_tol_state: f64,
    pub event_tol_time: f64,
    pub j_max: u64,
    pub t_end: f64,
}

impl Default for SolverOptions {
    fn default() -> Self {
        Self {
            h: DEFAULT_STEP,
            event_tol_state: DEFAULT_EVENT_TOL_STATE,
            event_tol_time: DEFAULT_EVENT_TOL_TIME,
            j_max: DEFAULT_JUMP_LIMIT,
            t_end: 15.0,
        }
    }
}

impl SolverOptions {
    pub fn with_horizon(t_end: f64) -> Self {
        Self {
            t_end,
            ..Self::default()
        }
    }

    pub fn tolerance(&self) -> EventTolerance {
        EventTolerance {
            state: self.event_tol_state,
            time: self.event_tol_time,
        }
    }

    pub fn validate(&self) -> Result<()> {
        let positive = [
            ("h", self.h),
            ("t_end", self.t_end),
            ("event_tol_state", self.event_tol_state),
            ("event_tol_time", self.event_tol_time),
        ];
        for (name, v) in positive {
            if !(v > 0.0 && v.is_finite()) {
                return Err(Error::Config(format!(
                    "{name} must be positive and finite, got {v}"
                )));
            }
        }
        if self.j_max < 1 {
            return Err(Error::Config("j_max must be at least 1".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Termination {
    TimeHorizon,
    JumpLimit,
    /// The state left the representable range during flow.
    FlowEscape,
}

impl fmt::Display for Termination {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Termination::TimeHorizon => "time_horizon",
            Termination::JumpLimit => "jump_limit",
            Termination::FlowEscape => "flow_escape",
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Sample {
    pub t: f64,
    pub state: HybridState,
}

/// The samples of one flow interval, all sharing the jump counter `j`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FlowArc {
    pub j: u64,
    pub samples: Vec<Sample>,
}

impl FlowArc {
    pub fn start(&self) -> &Sample {
        &self.samples[0]
    }

    pub fn end(&self) -> &Sample {
        self.samples.last().expect("arcs are never empty")
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct JumpRecord {
    pub t: f64,
    pub j_before: u64,
    pub guard: Guard,
    /// Both residuals were within tolerance of zero; guard one was selected.
    pub simultaneous: bool,
    pub state_before: HybridState,
    pub state_after: HybridState,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TraceMeta {
    pub solver: SolverOptions,
    pub scenario_hash: Option<String>,
    pub termination: Termination,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HybridTrace {
    pub arcs: Vec<FlowArc>,
    pub jumps: Vec<JumpRecord>,
    pub meta: TraceMeta,
}

impl HybridTrace {
    /// All samples in hybrid-time order.
    pub fn samples(&self) -> impl Iterator<Item = (HybridTime, &HybridState)> + '_ {
        self.arcs.iter().flat_map(|arc| {
            arc.samples
                .iter()
                .map(move |s| (HybridTime::new(s.t, arc.j), &s.state))
        })
    }

    pub fn sample_count(&self) -> usize {
        self.arcs.iter().map(|a| a.samples.len()).sum()
    }

    pub fn jump_times(&self) -> Vec<f64> {
        self.jumps.iter().map(|jr| jr.t).collect()
    }

    pub fn n_x(&self) -> usize {
        self.arcs[0].samples[0].state.n_x()
    }

    pub fn t_end(&self) -> f64 {
        self.arcs.last().map(|a| a.end().t).unwrap_or(0.0)
    }

    pub fn final_state(&self) -> &HybridState {
        &self
            .arcs
            .last()
            .expect("trace has at least one arc")
            .end()
            .state
    }
}

fn select_guard(residuals: [f64; 2], tol: f64) -> Option<(Guard, bool)> {
    match (residuals[0] >= -tol, residuals[1] >= -tol) {
        (true, true) => Some((Guard::One, true)),
        (true, false) => Some((Guard::One, false)),
        (false, true) => Some((Guard::Two, false)),
        (false, false) => None,
    }
}

fn max_residual(r: [f64; 2]) -> f64 {
    r[0].max(r[1])
}

/// Run the hybrid system from `q0` until `t_end` or `j_max` jumps.
///
/// If `q0` is already in the jump set the first action is a jump at `t = 0`.
pub fn simulate<H: HybridSystem + ?Sized>(
    sys: &H,
    q0: &HybridState,
    opts: &SolverOptions,
) -> Result<HybridTrace> {
    opts.validate()?;
    if !q0.is_finite() {
        return Err(Error::Config(format!(
            "initial state is not finite: {q0:?}"
        )));
    }

    let tol = opts.tolerance();
    let flow = |t: f64, q: &HybridState| sys.flow(t, q);

    let mut t = 0.0_f64;
    let mut j = 0_u64;
    let mut q = q0.clone();
    let mut arcs = vec![FlowArc {
        j,
        samples: vec![Sample {
            t,
            state: q.clone(),
        }],
    }];
    let mut jumps = Vec::new();

    let termination = loop {
        let residuals = sys.guard_residuals(&q);
        if let Some((guard, simultaneous)) = select_guard(residuals, tol.state) {
            let after = sys.jump(&q, guard)?;
            jumps.push(JumpRecord {
                t,
                j_before: j,
                guard,
                simultaneous,
                state_before: q,
                state_after: after.clone(),
            });
            j += 1;
            q = after;
            arcs.push(FlowArc {
                j,
                samples: vec![Sample {
                    t,
                    state: q.clone(),
                }],
            });
            if j >= opts.j_max {
                break Termination::JumpLimit;
            }
            continue;
        }

        if t >= opts.t_end {
            break Termination::TimeHorizon;
        }

        let remaining = opts.t_end - t;
        let (step, t_next) = if remaining <= opts.h * (1.0 + 1e-9) {
            (remaining, opts.t_end)
        } else {
            (opts.h, t + opts.h)
        };

        let q_next = match integrate_flow(t, &q, step, flow) {
            Ok(next) => next,
            Err(Error::NumericalFailure {
                t: t_fail, state, ..
            }) => {
                let partial = HybridTrace {
                    arcs,
                    jumps,
                    meta: TraceMeta {
                        solver: *opts,
                        scenario_hash: None,
                        termination: Termination::FlowEscape,
                    },
                };
                return Err(Error::NumericalFailure {
                    t: t_fail,
                    state,
                    partial: Some(Box::new(partial)),
                });
            }
            Err(e) => return Err(e),
        };

        let g_prev = max_residual(residuals);
        let g_next = max_residual(sys.guard_residuals(&q_next));
        let (t_new, q_new) = if g_prev < 0.0 && g_next >= 0.0 {
            locate_guard_crossing(
                t,
                &q,
                t_next,
                &q_next,
                |s: &HybridState| max_residual(sys.guard_residuals(s)),
                flow,
                tol,
            )?
        } else {
            (t_next, q_next)
        };

        t = t_new;
        q = q_new;
        arcs.last_mut()
            .expect("at least one arc")
            .samples
            .push(Sample {
                t,
                state: q.clone(),
            });
    };

    Ok(HybridTrace {
        arcs,
        jumps,
        meta: TraceMeta {
            solver: *opts,
            scenario_hash: None,
            termination,
        },
    })
}
