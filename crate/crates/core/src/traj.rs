//! Continuous references implied by a planned step: a Bézier CoM trajectory
//! for the FA phase, blended foot-pitch targets and the piecewise-linear ZMP.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::{
    flow_partial, reset_map, ContinuousState, Domain, GaitParams, ReducedState, ResetEdge,
    WalkingMode,
};
use crate::orbit::{p1_orbit, P1Orbit};
use crate::s2s::compose_s2s_at_fa_end;

pub const DEFAULT_BEZIER_DEGREE: usize = 5;

fn binomial(n: usize, k: usize) -> f64 {
    (0..k).fold(1.0, |acc, i| acc * (n - i) as f64 / (i + 1) as f64)
}

fn bernstein(n: usize, k: usize, s: f64) -> f64 {
    binomial(n, k) * s.powi(k as i32) * (1.0 - s).powi((n - k) as i32)
}

/// Bézier polynomial in phase `s = t / T`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BezierCurve {
    pub alpha: Vec<f64>,
    pub duration: f64,
}

impl BezierCurve {
    pub fn degree(&self) -> usize {
        self.alpha.len().saturating_sub(1)
    }

    pub fn eval(&self, s: f64) -> f64 {
        let n = self.degree();
        self.alpha
            .iter()
            .enumerate()
            .map(|(k, a)| a * bernstein(n, k, s))
            .sum()
    }

    /// Time derivative: the phase derivative divided by the duration.
    pub fn deriv(&self, s: f64) -> f64 {
        let n = self.degree();
        if n == 0 {
            return 0.0;
        }
        let ds: f64 = self
            .alpha
            .windows(2)
            .enumerate()
            .map(|(k, w)| (w[1] - w[0]) * bernstein(n - 1, k, s))
            .sum();
        n as f64 * ds / self.duration
    }
}

/// CoM reference for the FA phase.
///
/// Matches position `x_a` and velocity `v_a` at the start of FA and the FA-end
/// target `(p*, L*/z0)`. The four endpoint conditions fix the outer two
/// coefficients on each side; remaining interior coefficients are the
/// minimum-norm deviation from the chord between the end coefficients, i.e.
/// they lie on the chord.
pub fn fit_fa_com(
    x_a: f64,
    v_a: f64,
    target: ReducedState,
    z0: f64,
    t_fa: f64,
    degree: usize,
) -> Result<BezierCurve> {
    if degree < 3 {
        return Err(Error::InvalidParams(format!(
            "Bézier degree must be at least 3, got {degree}"
        )));
    }
    if !(t_fa > 0.0) {
        return Err(Error::InvalidParams(format!(
            "FA duration must be positive, got {t_fa}"
        )));
    }
    if !(z0 > 0.0) {
        return Err(Error::InvalidParams(format!(
            "z0 must be positive, got {z0}"
        )));
    }
    if ![x_a, v_a, target.p, target.momentum]
        .iter()
        .all(|v| v.is_finite())
    {
        return Err(Error::NonFinite("Bézier boundary conditions"));
    }
    let n = degree;
    let v_b = target.momentum / z0;

    // Constraint rows A(0), Ȧ(0), A(1), Ȧ(1) acting on α.
    let mut rows = DMatrix::<f64>::zeros(4, n + 1);
    rows[(0, 0)] = 1.0;
    rows[(1, 0)] = -(n as f64) / t_fa;
    rows[(1, 1)] = n as f64 / t_fa;
    rows[(2, n)] = 1.0;
    rows[(3, n - 1)] = -(n as f64) / t_fa;
    rows[(3, n)] = n as f64 / t_fa;
    let rhs = DVector::from_vec(vec![x_a, v_a, target.p, v_b]);

    // Minimum-norm correction of the chord toward the constraint set:
    // α = c + Aᵀ (A Aᵀ)⁻¹ (b - A c).
    let chord = DVector::from_fn(n + 1, |k, _| x_a + (target.p - x_a) * k as f64 / n as f64);
    let gram = &rows * rows.transpose();
    let correction = gram
        .lu()
        .solve(&(&rhs - &rows * &chord))
        .ok_or(Error::Singular {
            context: "Bézier constraint Gram matrix",
            condition: f64::INFINITY,
        })?;
    let alpha = chord + rows.transpose() * correction;
    Ok(BezierCurve {
        alpha: alpha.iter().copied().collect(),
        duration: t_fa,
    })
}

/// Blend `(1 - b(s)) θ_start + b(s) θ_target` with a Bézier `b` rising from
/// 0 to 1 with zero end slopes.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FootPitchProfile {
    pub theta_start: f64,
    pub theta_target: f64,
    pub blend: BezierCurve,
}

impl FootPitchProfile {
    pub fn value(&self, s: f64) -> f64 {
        let b = self.blend.eval(s);
        (1.0 - b) * self.theta_start + b * self.theta_target
    }
}

pub fn foot_pitch_profile(
    theta_start: f64,
    theta_target: f64,
    blend_degree: usize,
) -> Result<FootPitchProfile> {
    if blend_degree < 3 {
        return Err(Error::InvalidParams(format!(
            "blend degree must be at least 3 for flat ends, got {blend_degree}"
        )));
    }
    // (0, 0, ..., 1, 1): flat at both ends, monotone in between
    let half = blend_degree.div_ceil(2);
    let alpha = (0..=blend_degree)
        .map(|k| {
            if k < half {
                0.0
            } else if blend_degree.is_multiple_of(2) && k == half {
                0.5
            } else {
                1.0
            }
        })
        .collect();
    Ok(FootPitchProfile {
        theta_start,
        theta_target,
        blend: BezierCurve {
            alpha,
            duration: 1.0,
        },
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ZmpReference {
    pub domain: Domain,
    pub position: f64,
    pub rate: f64,
}

/// Nominal ZMP position and rate at `t_in_step` for a step of size `u`,
/// in the stance frame of the current domain.
///
/// A step runs OA, FA, UA. Each interval is closed on the right and its end
/// value is taken before the leg switch, so the position is `u` at the end of
/// OA, `-l` right after the switch and 0 at the end of the step.
pub fn zmp_reference(params: &GaitParams, u: f64, t_in_step: f64) -> Result<ZmpReference> {
    params.validate()?;
    let total = params.step_duration();
    if !(0.0..=total + 1e-12).contains(&t_in_step) {
        return Err(Error::InvalidParams(format!(
            "time {t_in_step} outside the step [0, {total}]"
        )));
    }
    let impact = reset_map(params, ResetEdge::OaToFa);
    let mut start = 0.0;
    let mut position = 0.0;
    let domains = [Domain::Oa, Domain::Fa, Domain::Ua];
    for (i, domain) in domains.into_iter().enumerate() {
        let duration = params.duration(domain);
        let last = i == domains.len() - 1;
        if duration > 0.0 || last {
            let rate = if duration > 0.0 {
                params.domain_input(domain, u) / duration
            } else {
                0.0
            };
            if t_in_step <= start + duration || last {
                let elapsed = (t_in_step - start).clamp(0.0, duration);
                return Ok(ZmpReference {
                    domain,
                    position: position + rate * elapsed,
                    rate,
                });
            }
            position += rate * duration;
            start += duration;
        }
        if domain == Domain::Oa {
            position += impact.b_delta[2] * u + impact.c_delta[2];
        }
    }
    unreachable!("the UA branch always returns")
}

/// Foot pitch targets per domain [rad]; positive lifts the heel.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FootPitchTargets {
    /// Stance foot angle reached at the end of UA.
    pub stance_ua: f64,
    /// Swing foot angle at touchdown.
    pub swing_landing: f64,
}

impl FootPitchTargets {
    /// Heel lift of 0.2 rad during heel-to-toe UA, flat otherwise.
    pub fn for_mode(mode: WalkingMode) -> Self {
        Self {
            stance_ua: if mode == WalkingMode::HeelToToe {
                0.2
            } else {
                0.0
            },
            swing_landing: 0.0,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ReferenceSample {
    pub t: f64,
    pub domain: Domain,
    pub x_com_ref: f64,
    pub v_com_ref: f64,
    pub p_zmp_ref: f64,
    pub theta_st_ref: f64,
    pub theta_sw_ref: f64,
}

/// Reference trajectories over one step of a period-1 orbit, starting at the
/// end of UA. OA and UA follow the model flow, FA follows the fitted Bézier
/// that lands on the FA-end fixed point.
pub fn reference_step(
    params: &GaitParams,
    v_d: f64,
    degree: usize,
    targets: &FootPitchTargets,
    dt: f64,
) -> Result<Vec<ReferenceSample>> {
    let at_ua = crate::s2s::compose_s2s(params)?;
    let orbit: P1Orbit = p1_orbit(&at_ua, v_d)?;
    let at_fa = compose_s2s_at_fa_end(params)?;
    let fa_target = p1_orbit(&at_fa, v_d)?.x_star;
    let u = orbit.u_star;
    let z0 = params.z0;
    let impact = reset_map(params, ResetEdge::OaToFa);
    let pitch_stance = foot_pitch_profile(0.0, targets.stance_ua, 3)?;
    let pitch_swing = foot_pitch_profile(targets.stance_ua, targets.swing_landing, 3)?;

    let mut out = Vec::new();
    let mut xi = orbit.x_star.on_section();
    let mut t0 = 0.0;
    for domain in [Domain::Oa, Domain::Fa, Domain::Ua] {
        let duration = params.duration(domain);
        if duration > 0.0 {
            let rate = params.domain_input(domain, u) / duration;
            let curve = if domain == Domain::Fa {
                Some(fit_fa_com(
                    xi.p,
                    xi.momentum / z0,
                    fa_target,
                    z0,
                    duration,
                    degree,
                )?)
            } else {
                None
            };
            let n = (duration / dt).ceil().max(1.0) as usize;
            for i in 0..=n {
                let s = i as f64 / n as f64;
                let flow = flow_partial(params, &xi, rate, s * duration);
                let (x, v) = match &curve {
                    Some(c) => (c.eval(s), c.deriv(s)),
                    None => (flow.p, flow.momentum / z0),
                };
                let (theta_st, theta_sw) = match domain {
                    Domain::Oa => (targets.stance_ua, targets.swing_landing),
                    Domain::Fa => (0.0, targets.stance_ua),
                    Domain::Ua => (pitch_stance.value(s), pitch_swing.value(s)),
                };
                out.push(ReferenceSample {
                    t: t0 + s * duration,
                    domain,
                    x_com_ref: x,
                    v_com_ref: v,
                    p_zmp_ref: flow.p_zmp,
                    theta_st_ref: theta_st,
                    theta_sw_ref: theta_sw,
                });
            }
            xi = match domain {
                Domain::Fa => ContinuousState::new(fa_target.p, fa_target.momentum, 0.0),
                _ => flow_partial(params, &xi, rate, duration),
            };
            t0 += duration;
        }
        if domain == Domain::Oa {
            xi = ContinuousState::from_vector(&impact.apply(&xi.to_vector(), u));
        }
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn constant_curve() {
        let c = BezierCurve {
            alpha: vec![0.4; 6],
            duration: 0.2,
        };
        for s in [0.0, 0.3, 0.77, 1.0] {
            assert!((c.eval(s) - 0.4).abs() < 1e-15);
            assert!(c.deriv(s).abs() < 1e-13);
        }
    }

    #[test]
    fn endpoints_are_end_coefficients() {
        let c = BezierCurve {
            alpha: vec![0.1, -0.3, 0.8, 0.25],
            duration: 0.4,
        };
        assert_eq!(c.eval(0.0), 0.1);
        assert_eq!(c.eval(1.0), 0.25);
    }

    #[test]
    fn derivative_matches_finite_difference() {
        let c = BezierCurve {
            alpha: vec![0.1, -0.3, 0.8, 0.25, 0.6, -0.2],
            duration: 0.2,
        };
        let h = 1e-6;
        for s in [0.1, 0.45, 0.9] {
            let fd = (c.eval(s + h) - c.eval(s - h)) / (2.0 * h) / c.duration;
            assert!(
                (fd - c.deriv(s)).abs() < 1e-6,
                "{s}: {fd} vs {}",
                c.deriv(s)
            );
        }
    }

    #[test]
    fn stationary_fit_is_constant() {
        let c = fit_fa_com(0.05, 0.0, ReducedState::new(0.05, 0.0), 0.8, 0.2, 5).unwrap();
        assert!(c.alpha.iter().all(|a| (a - 0.05).abs() < 1e-15));
    }

    #[test]
    fn cubic_fit_hits_boundary_conditions() {
        let target = ReducedState::new(0.12, 0.9);
        let c = fit_fa_com(-0.2, 0.6, target, 0.8, 0.2, 3).unwrap();
        assert!((c.eval(0.0) + 0.2).abs() < 1e-10);
        assert!((c.deriv(0.0) - 0.6).abs() < 1e-10);
        assert!((c.eval(1.0) - 0.12).abs() < 1e-10);
        assert!((c.deriv(1.0) - 0.9 / 0.8).abs() < 1e-10);
    }

    #[test]
    fn fit_rejects_bad_inputs() {
        let t = ReducedState::default();
        assert!(fit_fa_com(0.0, 0.0, t, 0.8, 0.0, 5).is_err());
        assert!(fit_fa_com(0.0, 0.0, t, 0.8, 0.2, 2).is_err());
    }

    #[test]
    fn pitch_blend() {
        let flat = foot_pitch_profile(0.3, 0.3, 3).unwrap();
        assert!((flat.value(0.4) - 0.3).abs() < 1e-15);
        for degree in [3, 4, 5, 6] {
            let p = foot_pitch_profile(-0.1, 0.2, degree).unwrap();
            assert_eq!(p.value(0.0), -0.1);
            assert_eq!(p.value(1.0), 0.2);
            assert!(p.blend.deriv(0.0).abs() < 1e-15 && p.blend.deriv(1.0).abs() < 1e-15);
            let mut prev = p.value(0.0);
            for i in 1..=100 {
                let v = p.value(i as f64 / 100.0);
                assert!(v >= prev - 1e-15 && v <= 0.2 + 1e-15);
                prev = v;
            }
        }
    }

    #[test]
    fn zmp_reference_flat_footed() {
        let params = GaitParams::sagittal().with_mode(WalkingMode::FlatFooted);
        let u = 0.4;
        let oa = zmp_reference(&params, u, 0.05).unwrap();
        assert_eq!(oa.domain, Domain::Oa);
        assert!((oa.rate - u / 0.1).abs() < 1e-12);
        let fa = zmp_reference(&params, u, 0.2).unwrap();
        assert_eq!((fa.domain, fa.rate), (Domain::Fa, 0.0));
        let ua = zmp_reference(&params, u, 0.45).unwrap();
        assert_eq!((ua.domain, ua.rate), (Domain::Ua, 0.0));
        assert_eq!(zmp_reference(&params, u, 0.5).unwrap().position, 0.0);
    }

    #[test]
    fn zmp_reference_telescopes() {
        let params = GaitParams::sagittal();
        let u = 0.55;
        let l = params.zmp_travel();
        let end_oa = zmp_reference(&params, u, params.t_oa).unwrap();
        assert!((end_oa.position - u).abs() < 1e-15);
        let after = zmp_reference(&params, u, params.t_oa + 1e-12).unwrap();
        assert!((after.position + l).abs() < 1e-9);
        // rate integral u + l, offset by the -(u + l) jump, returns to 0
        let end = zmp_reference(&params, u, params.step_duration()).unwrap();
        assert!(end.position.abs() < 1e-12);
        assert!(zmp_reference(&params, u, 0.7).is_err());
    }

    #[test]
    fn reference_step_is_continuous_in_fa() {
        let params = GaitParams::sagittal();
        let rows = reference_step(
            &params,
            1.0,
            5,
            &FootPitchTargets::for_mode(params.mode),
            0.01,
        )
        .unwrap();
        let fa: Vec<_> = rows.iter().filter(|r| r.domain == Domain::Fa).collect();
        let ua: Vec<_> = rows.iter().filter(|r| r.domain == Domain::Ua).collect();
        let (end_fa, start_ua) = (fa.last().unwrap(), ua.first().unwrap());
        assert!((end_fa.x_com_ref - start_ua.x_com_ref).abs() < 1e-10);
        assert!((end_fa.v_com_ref - start_ua.v_com_ref).abs() < 1e-10);
        assert!((ua.last().unwrap().theta_st_ref - 0.2).abs() < 1e-15);
    }
}
