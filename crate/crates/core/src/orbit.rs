//! Period-1 and period-2 orbits of the step-to-step dynamics.

use nalgebra::{Matrix2, Vector2};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::condition2;
use crate::model::{
    flow_partial, reset_map, ContinuousState, Domain, GaitParams, ReducedState, ResetEdge,
};
use crate::s2s::S2sDynamics;

/// Condition number above which a fixed-point system is reported singular.
pub const MAX_CONDITION: f64 = 1e12;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct P1Orbit {
    pub v_d: f64,
    #[serde(rename = "T")]
    pub step_time: f64,
    pub u_star: f64,
    pub x_star: ReducedState,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct P2Orbit {
    pub v_d: f64,
    #[serde(rename = "T")]
    pub step_time: f64,
    pub u_left: f64,
    pub u_right: f64,
    /// Pre-impact state from which the left step `u_left` is taken.
    pub x_left: ReducedState,
    pub x_right: ReducedState,
}

impl P2Orbit {
    /// Nominal step size and state for step `k`; even steps are left steps.
    pub fn target(&self, k: usize) -> (f64, ReducedState) {
        if k.is_multiple_of(2) {
            (self.u_left, self.x_left)
        } else {
            (self.u_right, self.x_right)
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind")]
pub enum OrbitSpec {
    P1(P1Orbit),
    P2(P2Orbit),
}

fn solve_checked(
    m: &Matrix2<f64>,
    rhs: &Vector2<f64>,
    context: &'static str,
) -> Result<Vector2<f64>> {
    let condition = condition2(m);
    if !(condition <= MAX_CONDITION) {
        return Err(Error::Singular { context, condition });
    }
    m.lu()
        .solve(rhs)
        .ok_or(Error::Singular { context, condition })
}

/// Period-1 orbit for desired velocity `v_d`: `u* = v_d T`,
/// `x* = (I - A)⁻¹ (B u* + C)`.
pub fn p1_orbit(dynamics: &S2sDynamics, v_d: f64) -> Result<P1Orbit> {
    if !v_d.is_finite() {
        return Err(Error::NonFinite("desired velocity"));
    }
    let step_time = dynamics.step_duration();
    let u_star = v_d * step_time;
    let lhs = Matrix2::identity() - dynamics.a_m;
    let rhs = dynamics.b_m * u_star + dynamics.c_m;
    let x = solve_checked(&lhs, &rhs, "I - A_M")?;
    Ok(P1Orbit {
        v_d,
        step_time,
        u_star,
        x_star: ReducedState::from_vector(&x),
    })
}

/// Period-2 orbit with the left step size fixed; the right step follows from
/// `u_L + u_R = 2 v_d T`.
pub fn p2_orbit(dynamics: &S2sDynamics, v_d: f64, u_left: f64) -> Result<P2Orbit> {
    if !v_d.is_finite() || !u_left.is_finite() {
        return Err(Error::NonFinite("period-2 orbit input"));
    }
    let step_time = dynamics.step_duration();
    let u_right = 2.0 * v_d * step_time - u_left;
    let a = dynamics.a_m;
    let lhs = Matrix2::identity() - a * a;
    let drift = a * dynamics.c_m + dynamics.c_m;
    let ab = a * dynamics.b_m;
    let x_left = solve_checked(
        &lhs,
        &(ab * u_left + dynamics.b_m * u_right + drift),
        "I - A_M^2",
    )?;
    let x_right = solve_checked(
        &lhs,
        &(ab * u_right + dynamics.b_m * u_left + drift),
        "I - A_M^2",
    )?;
    Ok(P2Orbit {
        v_d,
        step_time,
        u_left,
        u_right,
        x_left: ReducedState::from_vector(&x_left),
        x_right: ReducedState::from_vector(&x_right),
    })
}

/// Period-2 orbit parameterized by a nominal step width `w`:
/// `u_L = w + v_d T`, `u_R = -w + v_d T`.
pub fn p2_orbit_from_width(dynamics: &S2sDynamics, v_d: f64, width: f64) -> Result<P2Orbit> {
    p2_orbit(dynamics, v_d, width + v_d * dynamics.step_duration())
}

/// Map lateral `(p_y, L_x)` into the model's sign convention `(p_y, -L_x)`.
/// The map is an involution.
pub fn lateral_adapter(p_y: f64, l_x: f64) -> ReducedState {
    ReducedState::new(p_y, -l_x)
}

/// One sample of a continuous orbit, in the stance frame of its domain.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PortraitSample {
    pub t: f64,
    pub domain: Domain,
    pub p: f64,
    #[serde(rename = "L")]
    pub momentum: f64,
    pub p_zmp: f64,
}

/// Sample one step starting on the UA-end section from `start` with step
/// size `u`. Domain boundaries appear twice (end of one domain, start of the
/// next) so the leg-switch jump is visible.
pub fn sample_step(
    params: &GaitParams,
    start: ReducedState,
    u: f64,
    dt: f64,
    t0: f64,
) -> Vec<PortraitSample> {
    let mut out = Vec::new();
    let mut xi = start.on_section();
    let mut t = t0;
    let impact = reset_map(params, ResetEdge::OaToFa);
    for domain in [Domain::Oa, Domain::Fa, Domain::Ua] {
        let duration = params.duration(domain);
        if duration > 0.0 {
            let rate = params.domain_input(domain, u) / duration;
            let n = (duration / dt).ceil().max(1.0) as usize;
            for i in 0..=n {
                let elapsed = duration * i as f64 / n as f64;
                let s = flow_partial(params, &xi, rate, elapsed);
                out.push(PortraitSample {
                    t: t + elapsed,
                    domain,
                    p: s.p,
                    momentum: s.momentum,
                    p_zmp: s.p_zmp,
                });
            }
            xi = flow_partial(params, &xi, rate, duration);
            t += duration;
        }
        if domain == Domain::Oa {
            xi = ContinuousState::from_vector(&impact.apply(&xi.to_vector(), u));
        }
    }
    out
}

/// Phase portrait of an orbit over one period (one step for P1, two for P2).
pub fn phase_portrait(params: &GaitParams, orbit: &OrbitSpec, dt: f64) -> Vec<PortraitSample> {
    match orbit {
        OrbitSpec::P1(o) => sample_step(params, o.x_star, o.u_star, dt, 0.0),
        OrbitSpec::P2(o) => {
            let mut samples = sample_step(params, o.x_left, o.u_left, dt, 0.0);
            samples.extend(sample_step(params, o.x_right, o.u_right, dt, o.step_time));
            samples
        }
    }
}
