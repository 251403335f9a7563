//! Design and certification for the scalar loop `x' = a x` with `a > 0`.
//!
//! Parameters are expressed for the normalized plant `B = C = 1`. A plant
//! with positive gains `b`, `c` maps onto it through `z = c x`, which turns
//! the spike amplitude into `b c alpha` and leaves the threshold alone; see
//! [`ScalarPlant`].
//!
//! Between spikes, with the active neuron starting from zero,
//!
//! ```text
//! x(t_i + s) = e^{a s} x_i
//! xi(t_i + s) = |x_i| (e^{a s} - e^{-mu s}) / (mu + a)
//! ```
//!
//! and the next spike happens when `xi` reaches `delta`, no later than
//! `ln(delta (mu + a) / |x_i| + 1) / a`.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::hybrid::{HybridTime, HybridTrace};

/// Relative slack for boundary comparisons of design inequalities, so that
/// parameters sitting exactly on a closed boundary are not rejected because
/// of rounding in the boundary expression.
const BOUNDARY_RTOL: f64 = 1e-12;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ScalarPlant {
    pub a: f64,
    pub b: f64,
    pub c: f64,
}

impl ScalarPlant {
    pub fn new(a: f64, b: f64, c: f64) -> Result<Self> {
        if !a.is_finite() {
            return Err(Error::Config(format!("plant pole must be finite, got {a}")));
        }
        if !(b > 0.0 && b.is_finite()) {
            return Err(Error::design("b > 0", format!("b = {b}")));
        }
        if !(c > 0.0 && c.is_finite()) {
            return Err(Error::design("c > 0", format!("c = {c}")));
        }
        Ok(Self { a, b, c })
    }

    /// Spike amplitude in normalized coordinates.
    pub fn normalized_amplitude(&self, alpha: f64) -> f64 {
        self.b * self.c * alpha
    }

    pub fn normalized_state(&self, x: f64) -> f64 {
        self.c * x
    }
}

/// Quantities guaranteed by the stability theorem for one parameter choice.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct StabilityCertificate {
    pub a: f64,
    pub alpha: f64,
    pub mu: f64,
    pub rho: f64,
    pub sigma: f64,
    /// Lower end of the admissible sigma interval `[sigma_min, 1)`.
    pub sigma_min: f64,
    /// Region-of-attraction radius; initial states need `|x0| <= sigma * psi`.
    pub psi: f64,
    pub delta: f64,
    pub delta_max: f64,
    pub gamma: f64,
    pub upsilon: f64,
    pub tau: f64,
}

impl StabilityCertificate {
    pub fn initial_radius(&self) -> f64 {
        self.sigma * self.psi
    }

    /// Guaranteed bound on `|x(t, j)|`.
    pub fn state_bound(&self, j: u64, x0_abs: f64) -> f64 {
        self.gamma.powf(j as f64) * x0_abs + 2.0 * self.alpha
    }
}

/// `(rho + 1) / ((rho + 1)^2 - 1) * alpha`
pub fn psi_from_rho(rho: f64, alpha: f64) -> f64 {
    // (rho+1)^2 - 1 = rho (rho + 2), without the cancellation for small rho
    (rho + 1.0) / (rho * (rho + 2.0)) * alpha
}

/// `((rho + 1)^2 - 1) / (rho + 1)^2`
pub fn sigma_lower_bound(rho: f64) -> f64 {
    let s = rho + 1.0;
    rho * (rho + 2.0) / (s * s)
}

/// `rho * alpha / (mu + a)`
pub fn delta_max(a: f64, alpha: f64, mu: f64, rho: f64) -> f64 {
    rho * alpha / (mu + a)
}

pub fn closed_form_state(x_i: f64, a: f64, dt: f64) -> f64 {
    (a * dt).exp() * x_i
}

/// Potential of the active neuron `dt` after a spike, for the scalar loop
/// without noise. Requires `dt >= 0`.
pub fn closed_form_xi(x_i: f64, a: f64, mu: f64, dt: f64) -> f64 {
    let k = mu + a;
    if k == 0.0 {
        return x_i.abs() * dt * (a * dt).exp();
    }
    // e^{a dt} - e^{-mu dt} without cancellation near dt = 0
    x_i.abs() / k * ((a * dt).exp_m1() - (-mu * dt).exp_m1())
}

/// Time from a spike leaving the plant at `x_i` to the next spike.
pub fn next_spike_time(x_i: f64, a: f64, mu: f64, delta: f64) -> Result<f64> {
    if !x_i.is_finite() {
        return Err(Error::Contract(format!("state must be finite, got {x_i}")));
    }
    if x_i == 0.0 {
        return Err(Error::NoSpike);
    }
    if [a, mu, delta].iter().any(|v| v.is_nan()) || a <= 0.0 || mu < 0.0 || delta <= 0.0 {
        return Err(Error::Contract(format!(
            "need a > 0, mu >= 0, delta > 0; got a = {a}, mu = {mu}, delta = {delta}"
        )));
    }
    let x_abs = x_i.abs();
    let residual = |dt: f64| closed_form_xi(x_abs, a, mu, dt) - delta;

    let (mut lo, mut hi) = (0.0_f64, (delta * (mu + a) / x_abs).ln_1p() / a);
    while hi - lo > 1e-12 {
        let mid = lo + 0.5 * (hi - lo);
        if mid <= lo || mid >= hi {
            break;
        }
        if residual(mid) < 0.0 {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    let mid = lo + 0.5 * (hi - lo);
    // one Newton polish, kept only if it stays inside the bracket
    let slope = x_abs / (mu + a) * (a * (a * mid).exp() + mu * (-mu * mid).exp());
    let polished = mid - residual(mid) / slope;
    Ok(if polished >= lo && polished <= hi {
        polished
    } else {
        mid
    })
}

fn check(ok: bool, inequality: &str, detail: impl FnOnce() -> String) -> Result<()> {
    if ok {
        Ok(())
    } else {
        Err(Error::design(inequality, detail()))
    }
}

/// Certificate for the normalized scalar plant. Every parameter constraint
/// of the stability theorem is checked; the error names the first one that
/// fails.
pub fn design_certificate(
    a: f64,
    alpha: f64,
    mu: f64,
    rho: f64,
    sigma: f64,
    delta: f64,
) -> Result<StabilityCertificate> {
    check(a > 0.0 && a.is_finite(), "a > 0", || format!("a = {a}"))?;
    check(alpha > 0.0 && alpha.is_finite(), "alpha > 0", || {
        format!("alpha = {alpha}")
    })?;
    check(mu >= 0.0 && mu.is_finite(), "mu >= 0", || {
        format!("mu = {mu}")
    })?;
    check(rho > 0.0 && rho < 1.0, "0 < rho < 1", || {
        format!("rho = {rho}")
    })?;

    let sigma_min = sigma_lower_bound(rho);
    check(
        sigma >= sigma_min * (1.0 - BOUNDARY_RTOL),
        "sigma >= ((rho+1)^2-1)/(rho+1)^2",
        || format!("sigma = {sigma}, lower bound = {sigma_min}"),
    )?;
    check(sigma < 1.0, "sigma < 1", || format!("sigma = {sigma}"))?;

    let d_max = delta_max(a, alpha, mu, rho);
    check(delta > 0.0, "delta > 0", || format!("delta = {delta}"))?;
    check(
        delta <= d_max * (1.0 + BOUNDARY_RTOL),
        "delta <= rho*alpha/(mu+a)",
        || format!("delta = {delta}, delta_max = {d_max}"),
    )?;

    let s = rho + 1.0;
    let psi = psi_from_rho(rho, alpha);
    // At sigma = sigma_min the radicand is zero up to rounding.
    let gamma = (1.0 - (1.0 - sigma) * s * s).max(0.0).sqrt();
    let upsilon = psi + 2.0 * alpha;
    Ok(StabilityCertificate {
        a,
        alpha,
        mu,
        rho,
        sigma,
        sigma_min,
        psi,
        delta,
        delta_max: d_max,
        gamma,
        upsilon,
        tau: delta / upsilon,
    })
}

/// Certificate for a plant with general positive gains, in normalized units.
pub fn design_for_plant(
    plant: &ScalarPlant,
    alpha: f64,
    mu: f64,
    rho: f64,
    sigma: f64,
    delta: f64,
) -> Result<StabilityCertificate> {
    design_certificate(
        plant.a,
        plant.normalized_amplitude(alpha),
        mu,
        rho,
        sigma,
        delta,
    )
}

/// Invert the region-of-attraction formula: the `rho` in (0, 1) whose
/// certificate has radius `psi_desired`. Feasible iff `psi_desired > 2 alpha / 3`.
pub fn solve_rho_for_roa(alpha: f64, psi_desired: f64) -> Result<f64> {
    check(alpha > 0.0 && alpha.is_finite(), "alpha > 0", || {
        format!("alpha = {alpha}")
    })?;
    check(
        psi_desired > 0.0 && psi_desired.is_finite(),
        "psi > 0",
        || format!("psi = {psi_desired}"),
    )?;
    // rho + 1 = (alpha + sqrt(alpha^2 + 4 psi^2)) / (2 psi), rearranged to
    // avoid subtracting nearly equal terms when psi >> alpha.
    let root = (alpha * alpha + 4.0 * psi_desired * psi_desired).sqrt();
    let rho = (alpha + alpha * alpha / (root + 2.0 * psi_desired)) / (2.0 * psi_desired);
    check(rho > 0.0 && rho < 1.0, "psi > 2*alpha/3", || {
        format!(
            "psi = {psi_desired} needs rho = {rho}, outside (0, 1); smallest feasible psi is {}",
            2.0 * alpha / 3.0
        )
    })?;
    Ok(rho)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Quantity {
    /// `|x0| <= sigma psi` and zero initial potentials.
    InitialCondition,
    /// `|x(t,j)| <= gamma^j |x0| + 2 alpha`
    StateBound,
    /// Gap between consecutive spikes at least `tau`.
    DwellTime,
    /// Potentials never exceed the threshold.
    MembranePotential,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Violation {
    pub t: f64,
    pub j: u64,
    pub quantity: Quantity,
    pub observed: f64,
    pub allowed: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CertificationReport {
    pub precondition_ok: bool,
    pub bound_ok: bool,
    /// Smallest `allowed - observed` over all samples.
    pub bound_margin: f64,
    pub dwell_ok: bool,
    /// `None` when the trace has fewer than two jumps.
    pub min_interspike: Option<f64>,
    pub tau: f64,
    pub dwell_margin: Option<f64>,
    pub xi_bounded_ok: bool,
    pub xi_margin: f64,
    pub violations: Vec<Violation>,
}

impl CertificationReport {
    pub fn passed(&self) -> bool {
        self.precondition_ok && self.bound_ok && self.dwell_ok && self.xi_bounded_ok
    }

    pub fn first_violation(&self) -> Option<&Violation> {
        self.violations.first()
    }
}

/// Check a scalar trace against a certificate (normalized plant).
///
/// Slack on the state bound is `1e-9 + 1e-7 |x0|`; dwell and potential
/// checks use the trace's event tolerances.
pub fn certify_trace(
    trace: &HybridTrace,
    cert: &StabilityCertificate,
    x0: f64,
) -> Result<CertificationReport> {
    certify_scaled(trace, cert, x0, 1.0)
}

/// As [`certify_trace`], for traces of a plant with gains `b`, `c`; states
/// (and `x0`) are in plant units, the certificate in normalized units.
pub fn certify_trace_for_plant(
    trace: &HybridTrace,
    cert: &StabilityCertificate,
    x0: f64,
    plant: &ScalarPlant,
) -> Result<CertificationReport> {
    certify_scaled(trace, cert, x0, plant.c)
}

fn certify_scaled(
    trace: &HybridTrace,
    cert: &StabilityCertificate,
    x0: f64,
    scale: f64,
) -> Result<CertificationReport> {
    if trace.n_x() != 1 {
        return Err(Error::Contract(format!(
            "certification needs a scalar trace, got n_x = {}",
            trace.n_x()
        )));
    }
    let tol_state = trace.meta.solver.event_tol_state;
    let tol_time = trace.meta.solver.event_tol_time;
    let x0_abs = (scale * x0).abs();
    let slack = 1e-9 + 1e-7 * x0_abs;
    let mut violations = Vec::new();

    let radius = cert.initial_radius();
    let first = &trace.arcs[0].samples[0];
    let initial_xi = first.state.xi1.max(first.state.xi2);
    let mut precondition_ok = true;
    if x0_abs > radius * (1.0 + BOUNDARY_RTOL) {
        precondition_ok = false;
        violations.push(Violation {
            t: first.t,
            j: 0,
            quantity: Quantity::InitialCondition,
            observed: x0_abs,
            allowed: radius,
        });
    }
    if initial_xi != 0.0 {
        precondition_ok = false;
        violations.push(Violation {
            t: first.t,
            j: 0,
            quantity: Quantity::InitialCondition,
            observed: initial_xi,
            allowed: 0.0,
        });
    }

    let mut bound_margin = f64::INFINITY;
    let mut xi_margin = f64::INFINITY;
    let xi_allowed = cert.delta + tol_state;
    let mut bound_ok = true;
    let mut xi_bounded_ok = true;
    for (HybridTime { t, j }, q) in trace.samples() {
        let observed = (scale * q.x[0]).abs();
        let allowed = cert.state_bound(j, x0_abs) + slack;
        bound_margin = bound_margin.min(allowed - observed);
        if observed > allowed {
            bound_ok = false;
            violations.push(Violation {
                t,
                j,
                quantity: Quantity::StateBound,
                observed,
                allowed,
            });
        }
        let xi = q.xi1.max(q.xi2);
        xi_margin = xi_margin.min(xi_allowed - xi);
        if xi > xi_allowed {
            xi_bounded_ok = false;
            violations.push(Violation {
                t,
                j,
                quantity: Quantity::MembranePotential,
                observed: xi,
                allowed: xi_allowed,
            });
        }
    }

    let mut min_gap: Option<f64> = None;
    let mut dwell_ok = true;
    for w in trace.jumps.windows(2) {
        let gap = w[1].t - w[0].t;
        min_gap = Some(min_gap.map_or(gap, |m| m.min(gap)));
        if gap < cert.tau - tol_time {
            dwell_ok = false;
            violations.push(Violation {
                t: w[1].t,
                j: w[1].j_before,
                quantity: Quantity::DwellTime,
                observed: gap,
                allowed: cert.tau,
            });
        }
    }

    violations.sort_by(|a, b| {
        (a.j, a.t)
            .partial_cmp(&(b.j, b.t))
            .unwrap_or(std::cmp::Ordering::Equal)
    });

    Ok(CertificationReport {
        precondition_ok,
        bound_ok,
        bound_margin,
        dwell_ok,
        min_interspike: min_gap,
        tau: cert.tau,
        dwell_margin: min_gap.map(|g| g - cert.tau),
        xi_bounded_ok,
        xi_margin,
        violations,
    })
}

/// Largest `|x|` (Euclidean norm for vector plants) over samples with `t >= t_cut`.
pub fn ultimate_bound_estimate(trace: &HybridTrace, t_cut: f64) -> Result<f64> {
    trace
        .samples()
        .filter(|(ht, _)| ht.t >= t_cut)
        .map(|(_, q)| q.x.iter().map(|v| v * v).sum::<f64>().sqrt())
        .fold(None, |acc: Option<f64>, v| {
            Some(acc.map_or(v, |m| m.max(v)))
        })
        .ok_or_else(|| Error::EmptyWindow(format!("no samples with t >= {t_cut}")))
}

/// Smallest gap between consecutive spikes that both happen at `t >= t_cut`.
/// `None` when fewer than two spikes fall in the window.
pub fn min_interspike(trace: &HybridTrace, t_cut: f64) -> Option<f64> {
    let times: Vec<f64> = trace
        .jumps
        .iter()
        .map(|j| j.t)
        .filter(|t| *t >= t_cut)
        .collect();
    times
        .windows(2)
        .map(|w| w[1] - w[0])
        .fold(None, |acc: Option<f64>, g| {
            Some(acc.map_or(g, |m| m.min(g)))
        })
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    #[test]
    fn closed_form_state_examples() {
        assert_relative_eq!(
            closed_form_state(1.0, 1.0, 2f64.ln()),
            2.0,
            max_relative = 1e-15
        );
        assert_eq!(closed_form_state(-3.0, 0.5, 0.0), -3.0);
        assert_relative_eq!(
            closed_form_state(20.0, 1.0, 0.004_993_8),
            20.0 * 0.004_993_8f64.exp(),
            max_relative = 1e-15
        );
        assert!((closed_form_state(20.0, 1.0, 0.004_993_8) - 20.1001).abs() < 1e-4);
    }

    #[test]
    fn closed_form_xi_examples() {
        let expected = (2.0 - 0.5f64.sqrt()) / 1.5;
        assert_relative_eq!(
            closed_form_xi(1.0, 1.0, 0.5, 2f64.ln()),
            expected,
            max_relative = 1e-14
        );
        assert!((expected - 0.861_928).abs() < 1e-6);
        assert_eq!(closed_form_xi(7.0, 1.0, 0.5, 0.0), 0.0);
        assert_eq!(closed_form_xi(0.0, 1.0, 0.5, 3.0), 0.0);
        assert_eq!(
            closed_form_xi(-1.0, 1.0, 0.5, 0.3),
            closed_form_xi(1.0, 1.0, 0.5, 0.3)
        );
    }

    #[test]
    fn next_spike_examples() {
        let dt = next_spike_time(20.0, 1.0, 0.5, 0.1).unwrap();
        assert!((dt - 4.9938e-3).abs() < 1e-6, "{dt}");
        assert!((closed_form_xi(20.0, 1.0, 0.5, dt) - 0.1).abs() < 1e-12);

        let dt = next_spike_time(20.0, 1.0, 0.0, 0.1).unwrap();
        assert!((dt - 1.005f64.ln()).abs() < 1e-12, "{dt}");
        assert!((dt - 4.98754e-3).abs() < 1e-8);

        assert!(matches!(
            next_spike_time(0.0, 1.0, 0.5, 0.1),
            Err(Error::NoSpike)
        ));
        assert!(next_spike_time(1.0, 0.0, 0.5, 0.1).is_err());
    }

    #[test]
    fn design_example_rho_half() {
        let c = design_certificate(1.0, 0.5, 0.5, 0.5, 0.6, 1.0 / 6.0).unwrap();
        assert_relative_eq!(c.psi, 0.6, max_relative = 1e-15);
        assert_relative_eq!(c.delta_max, 1.0 / 6.0, max_relative = 1e-15);
        assert_relative_eq!(c.gamma, 0.1f64.sqrt(), max_relative = 1e-14);
        assert_relative_eq!(c.upsilon, 1.6, max_relative = 1e-15);
        assert_relative_eq!(c.tau, 0.104_166_666_666_666_67, max_relative = 1e-14);
        assert_relative_eq!(c.initial_radius(), 0.36, max_relative = 1e-15);
    }

    #[test]
    fn design_example_boundary_delta() {
        let c = design_certificate(1.0, 0.5, 0.5, 0.3, 0.99, 0.1).unwrap();
        assert!((c.delta_max - 0.1).abs() < 1e-16);
        assert!((c.psi - 1.3 / 0.69 * 0.5).abs() < 1e-14);
        assert!((c.psi - 0.942_028).abs() < 1e-6);
    }

    #[test]
    fn design_rejections_name_inequality() {
        let name = |r: Result<StabilityCertificate>| match r {
            Err(Error::Design { inequality, .. }) => inequality,
            other => panic!("expected design error, got {other:?}"),
        };
        assert_eq!(
            name(design_certificate(1.0, 0.5, 0.5, 0.5, 0.5, 0.1)),
            "sigma >= ((rho+1)^2-1)/(rho+1)^2"
        );
        assert!((sigma_lower_bound(0.5) - 5.0 / 9.0).abs() < 1e-15);
        assert_eq!(
            name(design_certificate(1.0, 0.5, 0.5, 0.3, 0.99, 0.2)),
            "delta <= rho*alpha/(mu+a)"
        );
        assert_eq!(
            name(design_certificate(1.0, 0.5, 0.5, 1.0, 0.99, 0.1)),
            "0 < rho < 1"
        );
        assert_eq!(
            name(design_certificate(-1.0, 0.5, 0.5, 0.5, 0.6, 0.1)),
            "a > 0"
        );
        assert_eq!(
            name(design_certificate(1.0, 0.5, 0.5, 0.5, 1.0, 0.1)),
            "sigma < 1"
        );
    }

    #[test]
    fn sigma_at_lower_bound_gives_zero_gamma() {
        let c = design_certificate(1.0, 0.5, 0.5, 0.5, sigma_lower_bound(0.5), 0.1).unwrap();
        assert!(c.gamma < 1e-7);
        assert_eq!(c.state_bound(0, 0.3), 0.3 + 1.0);
    }

    #[test]
    fn rho_inversion_examples() {
        assert_relative_eq!(
            solve_rho_for_roa(0.5, 0.6).unwrap(),
            0.5,
            max_relative = 1e-14
        );
        assert!((solve_rho_for_roa(0.5, 0.942_028_985_5).unwrap() - 0.3).abs() < 1e-9);
        match solve_rho_for_roa(0.5, 0.2) {
            Err(Error::Design { inequality, .. }) => assert_eq!(inequality, "psi > 2*alpha/3"),
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn plant_rescaling() {
        let plant = ScalarPlant::new(1.0, 2.0, 0.5).unwrap();
        assert_eq!(plant.normalized_amplitude(0.5), 0.5);
        let c = design_for_plant(&plant, 0.5, 0.5, 0.5, 0.6, 1.0 / 6.0).unwrap();
        assert_eq!(
            c,
            design_certificate(1.0, 0.5, 0.5, 0.5, 0.6, 1.0 / 6.0).unwrap()
        );
        assert!(ScalarPlant::new(1.0, -1.0, 1.0).is_err());
    }
}
