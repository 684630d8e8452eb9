//! Closed-loop hybrid simulation of MLIP walking.
//!
//! Each step starts on the UA-end section. The controller reads the reduced
//! state, commands a step size `u = u* + K (x - x*)`, and the plant integrates
//! OA, the leg switch, FA and UA with RK4. Domain transitions are purely
//! time-based. The plant may differ from the controller's model (CoM height,
//! ZMP rate limit, ZMP tracking lag) and external pushes act on `L̇`.

use nalgebra::{Matrix2, RowVector2, Vector2};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::gains::{deadbeat_gain, dlqr, invariant_box, DisturbanceBound, GainSpec, InvariantBox};
use crate::model::{
    reset_map, ContinuousState, Domain, GaitParams, ReducedState, ResetEdge, WalkingMode,
};
use crate::orbit::{p1_orbit, p2_orbit_from_width};
use crate::rowmajor;
use crate::s2s::{compose_s2s, S2sDynamics};

/// Divergence thresholds on `|p|` [m] and `|L|` [m²/s].
pub const MAX_POSITION: f64 = 10.0;
pub const MAX_MOMENTUM: f64 = 100.0;
/// Consecutive clipped steps tolerated before the run counts as a fall.
pub const MAX_SATURATED_STEPS: usize = 5;
pub const DEFAULT_DT: f64 = 1e-3;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum PlantKind {
    #[default]
    Exact,
    Mismatched,
}

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PlantSpec {
    pub kind: PlantKind,
    /// CoM height of the plant; defaults to the model's.
    #[serde(default)]
    pub plant_z0: Option<f64>,
    /// Maximum ZMP speed of the plant [m/s].
    #[serde(default)]
    pub zmp_rate_limit: Option<f64>,
    /// Time constant of first-order ZMP tracking [s]; 0 disables the lag.
    #[serde(default)]
    pub zmp_lag: f64,
}

impl PlantSpec {
    pub fn exact() -> Self {
        Self::default()
    }

    pub fn mismatched_height(z0: f64) -> Self {
        Self {
            kind: PlantKind::Mismatched,
            plant_z0: Some(z0),
            ..Self::default()
        }
    }

    fn validate(&self, model: &GaitParams) -> Result<()> {
        if let Some(z) = self.plant_z0 {
            if !(z > 0.0) || !z.is_finite() {
                return Err(Error::InvalidParams(format!(
                    "plant_z0 must be positive, got {z}"
                )));
            }
        }
        if let Some(r) = self.zmp_rate_limit {
            if !(r > 0.0) {
                return Err(Error::InvalidParams(format!(
                    "zmp_rate_limit must be positive, got {r}"
                )));
            }
        }
        if !(self.zmp_lag >= 0.0) || !self.zmp_lag.is_finite() {
            return Err(Error::InvalidParams(format!(
                "zmp_lag must be non-negative, got {}",
                self.zmp_lag
            )));
        }
        if self.kind == PlantKind::Exact {
            let height_differs = self.plant_z0.is_some_and(|z| z != model.z0);
            if height_differs || self.zmp_rate_limit.is_some() || self.zmp_lag != 0.0 {
                return Err(Error::InvalidParams(
                    "an exact plant cannot override z0, ZMP rate or lag; use kind \"mismatched\""
                        .into(),
                ));
            }
        }
        Ok(())
    }

    pub fn dynamics(&self, model: &GaitParams) -> PlantDynamics {
        PlantDynamics {
            z0: self.plant_z0.unwrap_or(model.z0),
            g: model.g,
            zmp_rate_limit: self.zmp_rate_limit,
            zmp_lag: self.zmp_lag,
        }
    }
}

/// Continuous plant `ṗ = L / z0`, `L̇ = g (p - p_zmp) + f_ext(t)` with a ZMP
/// that follows its reference through an optional lag and rate limit.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PlantDynamics {
    pub z0: f64,
    pub g: f64,
    pub zmp_rate_limit: Option<f64>,
    pub zmp_lag: f64,
}

impl PlantDynamics {
    fn zmp_next(&self, actual: f64, reference_next: f64, h: f64) -> f64 {
        let target = if self.zmp_lag > 0.0 {
            actual + (reference_next - actual) * (-(-h / self.zmp_lag).exp_m1())
        } else {
            reference_next
        };
        match self.zmp_rate_limit {
            Some(limit) => actual + (target - actual).clamp(-limit * h, limit * h),
            None => target,
        }
    }
}

/// Nominal ZMP motion over one domain.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DomainInput {
    pub domain: Domain,
    /// Reference ZMP position at the start of the domain.
    pub zmp_ref_start: f64,
    /// Reference ZMP rate `d_i / T_i`.
    pub zmp_rate: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct IntegrationSample {
    pub t: f64,
    pub state: ContinuousState,
    pub zmp_ref: f64,
}

/// RK4 integration of one domain of length `duration`, sampled at every
/// integration step (the initial point is not included).
///
/// The step is `duration / n` with `n = max(ceil(duration / dt), 10)`; within
/// a step the ZMP is interpolated linearly, which is exact for the nominal
/// piecewise-linear reference.
pub fn integrate_domain(
    state: ContinuousState,
    plant: &PlantDynamics,
    input: &DomainInput,
    t0: f64,
    duration: f64,
    dt: f64,
    forcing: &dyn Fn(f64) -> f64,
) -> Vec<IntegrationSample> {
    let n = ((duration / dt - 1e-9).ceil() as usize).max(10);
    let h = duration / n as f64;
    let mut out = Vec::with_capacity(n);
    let mut s = state;
    for i in 0..n {
        let t = t0 + h * i as f64;
        let reference_next = input.zmp_ref_start + input.zmp_rate * h * (i + 1) as f64;
        let zmp0 = s.p_zmp;
        let zmp1 = plant.zmp_next(zmp0, reference_next, h);
        let zmp_at = |tau: f64| zmp0 + (zmp1 - zmp0) * tau / h;
        let f = |tau: f64, p: f64, l: f64| {
            (l / plant.z0, plant.g * (p - zmp_at(tau)) + forcing(t + tau))
        };

        let (p, l) = (s.p, s.momentum);
        let k1 = f(0.0, p, l);
        let k2 = f(0.5 * h, p + 0.5 * h * k1.0, l + 0.5 * h * k1.1);
        let k3 = f(0.5 * h, p + 0.5 * h * k2.0, l + 0.5 * h * k2.1);
        let k4 = f(h, p + h * k3.0, l + h * k3.1);
        s = ContinuousState::new(
            p + h / 6.0 * (k1.0 + 2.0 * k2.0 + 2.0 * k3.0 + k4.0),
            l + h / 6.0 * (k1.1 + 2.0 * k2.1 + 2.0 * k3.1 + k4.1),
            zmp1,
        );
        out.push(IntegrationSample {
            t: t0 + h * (i + 1) as f64,
            state: s,
            zmp_ref: reference_next,
        });
    }
    out
}

/// One breakpoint of the velocity command. From `t` on, the command moves
/// linearly from its previous value to `v` over `ramp` seconds.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CommandSegment {
    pub t: f64,
    pub v: f64,
    #[serde(default)]
    pub ramp: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct CommandProfile(pub Vec<CommandSegment>);

impl Default for CommandProfile {
    fn default() -> Self {
        Self::constant(0.0)
    }
}

impl CommandProfile {
    pub fn constant(v: f64) -> Self {
        Self(vec![CommandSegment {
            t: 0.0,
            v,
            ramp: 0.0,
        }])
    }

    /// Step in place for `preamble` seconds, then ramp linearly to `v`.
    pub fn preamble_then_ramp(preamble: f64, v: f64, ramp: f64) -> Self {
        Self(vec![
            CommandSegment {
                t: 0.0,
                v: 0.0,
                ramp: 0.0,
            },
            CommandSegment {
                t: preamble,
                v,
                ramp,
            },
        ])
    }

    pub fn at(&self, t: f64) -> f64 {
        let mut value = 0.0;
        for seg in &self.0 {
            if t < seg.t {
                break;
            }
            value = if seg.ramp > 0.0 && t < seg.t + seg.ramp {
                value + (seg.v - value) * (t - seg.t) / seg.ramp
            } else {
                seg.v
            };
        }
        value
    }

    /// Value held after the last breakpoint.
    pub fn final_value(&self) -> f64 {
        self.0.last().map_or(0.0, |s| s.v)
    }

    fn validate(&self) -> Result<()> {
        if self.0.is_empty() {
            return Err(Error::InvalidParams("command profile is empty".into()));
        }
        let mut last = f64::NEG_INFINITY;
        for seg in &self.0 {
            if !seg.t.is_finite() || !seg.v.is_finite() || !(seg.ramp >= 0.0) {
                return Err(Error::InvalidParams(
                    "command segments must be finite with ramp >= 0".into(),
                ));
            }
            if seg.t < last {
                return Err(Error::InvalidParams(
                    "command segments must be sorted by time".into(),
                ));
            }
            last = seg.t;
        }
        if self.0[0].t > 0.0 {
            return Err(Error::InvalidParams(
                "command profile must start at t = 0".into(),
            ));
        }
        Ok(())
    }
}

/// Horizontal push as a mass-normalized force [m/s²] held for `duration`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ForceEvent {
    pub t_start: f64,
    pub duration: f64,
    pub magnitude: f64,
}

impl ForceEvent {
    pub fn t_end(&self) -> f64 {
        self.t_start + self.duration
    }

    fn active(&self, t: f64) -> bool {
        t >= self.t_start && t < self.t_end()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "method", rename_all = "lowercase", deny_unknown_fields)]
pub enum GainSetting {
    Lqr {
        #[serde(default = "identity2", with = "rowmajor::mat2")]
        q: Matrix2<f64>,
        #[serde(default = "one")]
        r: f64,
    },
    Deadbeat,
    Explicit {
        #[serde(with = "rowmajor::row2")]
        k: RowVector2<f64>,
    },
}

fn identity2() -> Matrix2<f64> {
    Matrix2::identity()
}

fn one() -> f64 {
    1.0
}

impl Default for GainSetting {
    fn default() -> Self {
        GainSetting::Lqr {
            q: Matrix2::identity(),
            r: 1.0,
        }
    }
}

impl GainSetting {
    pub fn synthesize(&self, dynamics: &S2sDynamics) -> Result<GainSpec> {
        match self {
            GainSetting::Lqr { q, r } => dlqr(&dynamics.a_m, &dynamics.b_m, q, *r),
            GainSetting::Deadbeat => deadbeat_gain(&dynamics.a_m, &dynamics.b_m),
            GainSetting::Explicit { k } => GainSpec::explicit(&dynamics.a_m, &dynamics.b_m, *k),
        }
    }
}

/// Which orbit the controller tracks.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase", deny_unknown_fields)]
pub enum Plane {
    /// Period-1 orbit for the commanded forward speed.
    #[default]
    Sagittal,
    /// Period-2 orbit with alternating steps `±width + v_d T`, in the
    /// sign-adapted lateral coordinates.
    Lateral { width: f64 },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Scenario {
    pub params: GaitParams,
    #[serde(default)]
    pub plant: PlantSpec,
    #[serde(default)]
    pub gains: GainSetting,
    #[serde(default)]
    pub command: CommandProfile,
    #[serde(default)]
    pub disturbances: Vec<ForceEvent>,
    pub n_steps: usize,
    #[serde(default)]
    pub step_size_limit: Option<f64>,
    #[serde(default)]
    pub seed: u64,
    /// Offset of the initial state from the first orbit state.
    #[serde(default)]
    pub initial_error: [f64; 2],
    /// Per-component amplitude of a uniform random initial offset drawn from `seed`.
    #[serde(default)]
    pub random_initial_error: [f64; 2],
    #[serde(default = "default_dt")]
    pub dt: f64,
    #[serde(default)]
    pub plane: Plane,
}

fn default_dt() -> f64 {
    DEFAULT_DT
}

impl Scenario {
    pub fn new(params: GaitParams, n_steps: usize) -> Self {
        Self {
            params,
            plant: PlantSpec::exact(),
            gains: GainSetting::default(),
            command: CommandProfile::default(),
            disturbances: Vec::new(),
            n_steps,
            step_size_limit: None,
            seed: 0,
            initial_error: [0.0; 2],
            random_initial_error: [0.0; 2],
            dt: DEFAULT_DT,
            plane: Plane::Sagittal,
        }
    }

    pub fn validate(&self) -> Result<()> {
        self.params.validate()?;
        self.plant.validate(&self.params)?;
        self.command.validate()?;
        if self.n_steps == 0 {
            return Err(Error::InvalidParams("n_steps must be at least 1".into()));
        }
        if !(self.dt > 0.0) || !self.dt.is_finite() {
            return Err(Error::InvalidParams(format!(
                "dt must be positive, got {}",
                self.dt
            )));
        }
        if let Some(limit) = self.step_size_limit {
            if !(limit > 0.0) {
                return Err(Error::InvalidParams(format!(
                    "step_size_limit must be positive, got {limit}"
                )));
            }
        }
        for d in &self.disturbances {
            if !(d.duration > 0.0) || !d.t_start.is_finite() || !d.magnitude.is_finite() {
                return Err(Error::InvalidParams(
                    "disturbances need finite start/magnitude and positive duration".into(),
                ));
            }
        }
        if self
            .initial_error
            .iter()
            .chain(&self.random_initial_error)
            .any(|v| !v.is_finite())
        {
            return Err(Error::NonFinite("initial error"));
        }
        if let Plane::Lateral { width } = self.plane {
            if !width.is_finite() {
                return Err(Error::NonFinite("lateral width"));
            }
        }
        Ok(())
    }

    pub fn total_time(&self) -> f64 {
        self.n_steps as f64 * self.params.step_duration()
    }
}

/// Continuous sample of a run. `domain` is the domain the sample belongs to;
/// a sample at a domain's end time is taken before any reset.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Sample {
    pub t: f64,
    pub domain: Domain,
    pub p: f64,
    #[serde(rename = "L")]
    pub momentum: f64,
    pub p_zmp: f64,
    pub u_cmd: f64,
}

/// Per-step record on the UA-end section.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct StepRecord {
    pub k: usize,
    pub t: f64,
    pub v_d: f64,
    pub x: ReducedState,
    pub x_star: ReducedState,
    pub u_star: f64,
    /// Commanded step size after clipping.
    pub u: f64,
    pub clipped: bool,
    /// `x_{k+1} - (A x_k + B u_k + C)`.
    #[serde(with = "rowmajor::vec2")]
    pub w: Vector2<f64>,
}

impl StepRecord {
    pub fn error(&self) -> Vector2<f64> {
        self.x.to_vector() - self.x_star.to_vector()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "event", rename_all = "kebab-case")]
pub enum TraceEvent {
    Transition { t: f64, from: Domain, to: Domain },
    PushStart { t: f64, index: usize },
    PushEnd { t: f64, index: usize },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "status", rename_all = "kebab-case")]
pub enum Outcome {
    Completed,
    Diverged { step: usize, t: f64, reason: String },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StepTrace {
    pub samples: Vec<Sample>,
    pub steps: Vec<StepRecord>,
    pub events: Vec<TraceEvent>,
    /// Section state after the last completed step.
    pub final_state: ReducedState,
    pub outcome: Outcome,
    pub gains: GainSpec,
    pub model: S2sDynamics,
}

impl StepTrace {
    pub fn diverged(&self) -> bool {
        matches!(self.outcome, Outcome::Diverged { .. })
    }

    pub fn step_time(&self) -> f64 {
        self.model.step_duration()
    }

    /// Mean of `u_k / T` over the last `n` completed steps.
    pub fn mean_velocity(&self, n: usize) -> f64 {
        let tail = &self.steps[self.steps.len().saturating_sub(n)..];
        if tail.is_empty() {
            return f64::NAN;
        }
        tail.iter().map(|s| s.u).sum::<f64>() / (tail.len() as f64 * self.step_time())
    }

    /// Componentwise bound covering the residuals of steps `from..`.
    pub fn disturbance_bound(&self, from: usize) -> DisturbanceBound {
        DisturbanceBound::covering(self.steps.iter().skip(from).map(|s| &s.w))
    }

    pub fn closed_loop(&self) -> Matrix2<f64> {
        self.gains.closed_loop(&self.model.a_m, &self.model.b_m)
    }

    pub fn any_clipped(&self, last: usize) -> bool {
        self.steps[self.steps.len().saturating_sub(last)..]
            .iter()
            .any(|s| s.clipped)
    }
}

fn diverging(s: &ContinuousState) -> Option<String> {
    if !s.is_finite() {
        Some("non-finite state".into())
    } else if s.p.abs() > MAX_POSITION {
        Some(format!("|p| = {:.3} m exceeds {MAX_POSITION} m", s.p.abs()))
    } else if s.momentum.abs() > MAX_MOMENTUM {
        Some(format!(
            "|L| = {:.3} m^2/s exceeds {MAX_MOMENTUM} m^2/s",
            s.momentum.abs()
        ))
    } else {
        None
    }
}

/// Orbit target `(u*, x*)` for step `k` at commanded velocity `v_d`.
fn orbit_target(
    dynamics: &S2sDynamics,
    plane: &Plane,
    k: usize,
    v_d: f64,
) -> Result<(f64, ReducedState)> {
    match plane {
        Plane::Sagittal => {
            let o = p1_orbit(dynamics, v_d)?;
            Ok((o.u_star, o.x_star))
        }
        Plane::Lateral { width } => Ok(p2_orbit_from_width(dynamics, v_d, *width)?.target(k)),
    }
}

/// Run a closed-loop scenario. Divergence ends the run early and is reported
/// in [`StepTrace::outcome`] rather than as an error.
pub fn simulate(scenario: &Scenario) -> Result<StepTrace> {
    scenario.validate()?;
    let params = &scenario.params;
    let dynamics = compose_s2s(params)?;
    let gains = scenario.gains.synthesize(&dynamics)?;
    let plant = scenario.plant.dynamics(params);
    let step_time = params.step_duration();
    let impact = reset_map(params, ResetEdge::OaToFa);

    let pushes = &scenario.disturbances;
    let push_arm = plant.z0;
    let forcing = |t: f64| -> f64 {
        pushes
            .iter()
            .filter(|d| d.active(t))
            .map(|d| d.magnitude * push_arm)
            .sum()
    };

    let (_, x_init) = orbit_target(&dynamics, &scenario.plane, 0, scenario.command.at(0.0))?;
    let mut rng = ChaCha8Rng::seed_from_u64(scenario.seed);
    let mut offset = Vector2::from(scenario.initial_error);
    for i in 0..2 {
        let a = scenario.random_initial_error[i];
        if a > 0.0 {
            offset[i] += rng.gen_range(-a..=a);
        }
    }
    let x0 = x_init.to_vector() + offset;
    let mut state = ContinuousState::new(x0[0], x0[1], 0.0);

    let mut samples = Vec::new();
    let mut steps = Vec::with_capacity(scenario.n_steps);
    let mut events = Vec::new();
    for (index, d) in pushes.iter().enumerate() {
        events.push(TraceEvent::PushStart {
            t: d.t_start,
            index,
        });
        events.push(TraceEvent::PushEnd {
            t: d.t_end(),
            index,
        });
    }
    let mut outcome = Outcome::Completed;
    let mut saturated = 0;

    'steps: for k in 0..scenario.n_steps {
        let t_step = k as f64 * step_time;
        let v_d = scenario.command.at(t_step);
        let (u_star, x_star) = orbit_target(&dynamics, &scenario.plane, k, v_d)?;
        let x = state.reduced();
        let u_free = u_star + (gains.k * (x.to_vector() - x_star.to_vector()))[0];
        let (u, clipped) = match scenario.step_size_limit {
            Some(limit) if u_free.abs() > limit => (limit.copysign(u_free), true),
            _ => (u_free, false),
        };

        let mut zmp_ref = 0.0;
        let mut t = t_step;
        let mut previous = Domain::Ua;
        for domain in [Domain::Oa, Domain::Fa, Domain::Ua] {
            events.push(TraceEvent::Transition {
                t,
                from: previous,
                to: domain,
            });
            previous = domain;
            let duration = params.duration(domain);
            if duration > 0.0 {
                let input = DomainInput {
                    domain,
                    zmp_ref_start: zmp_ref,
                    zmp_rate: params.domain_input(domain, u) / duration,
                };
                let run =
                    integrate_domain(state, &plant, &input, t, duration, scenario.dt, &forcing);
                for s in &run {
                    samples.push(Sample {
                        t: s.t,
                        domain,
                        p: s.state.p,
                        momentum: s.state.momentum,
                        p_zmp: s.state.p_zmp,
                        u_cmd: u,
                    });
                    if let Some(reason) = diverging(&s.state) {
                        outcome = Outcome::Diverged {
                            step: k,
                            t: s.t,
                            reason,
                        };
                        break 'steps;
                    }
                }
                let last = run.last().expect("at least one integration step");
                state = last.state;
                zmp_ref = last.zmp_ref;
                t += duration;
            }
            if domain == Domain::Oa {
                state = ContinuousState::from_vector(&impact.apply(&state.to_vector(), u));
                zmp_ref += impact.b_delta[2] * u + impact.c_delta[2];
            }
        }

        let x_next = state.reduced();
        let predicted = dynamics.step_vec(&x.to_vector(), u);
        steps.push(StepRecord {
            k,
            t: t_step,
            v_d,
            x,
            x_star,
            u_star,
            u,
            clipped,
            w: x_next.to_vector() - predicted,
        });
        saturated = if clipped { saturated + 1 } else { 0 };
        if saturated > MAX_SATURATED_STEPS {
            outcome = Outcome::Diverged {
                step: k,
                t: t_step + step_time,
                reason: format!("step size saturated for {saturated} consecutive steps"),
            };
            break;
        }
    }
    events.sort_by(|a, b| event_time(a).total_cmp(&event_time(b)));

    Ok(StepTrace {
        samples,
        final_state: state.reduced(),
        steps,
        events,
        outcome,
        gains,
        model: dynamics,
    })
}

fn event_time(e: &TraceEvent) -> f64 {
    match e {
        TraceEvent::Transition { t, .. }
        | TraceEvent::PushStart { t, .. }
        | TraceEvent::PushEnd { t, .. } => *t,
    }
}

/// Number of final steps averaged for steady-state metrics.
pub const STEADY_STATE_STEPS: usize = 10;
pub const SWEEP_PREAMBLE: f64 = 5.0;
pub const SWEEP_RAMP: f64 = 2.0;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepPoint {
    pub speed: f64,
    pub mean_velocity: f64,
    /// `‖x_N - x*‖` on the final section state.
    pub terminal_error: f64,
    #[serde(with = "rowmajor::vec2")]
    pub w_max: Vector2<f64>,
    pub invariant_box: InvariantBox,
    /// `e_max_p / T`: the CoM position share of the box spread over a step.
    pub position_band: f64,
    /// `|K| e_max / T`: bound on `|mean v - v_d|` through `u - u* = K e`.
    pub velocity_band: f64,
    pub diverged: bool,
    #[serde(skip)]
    pub trace: Option<StepTrace>,
}

/// Step in place for 5 s, ramp to each speed over 2 s, and report
/// steady-state tracking.
pub fn velocity_sweep(base: &Scenario, speeds: &[f64]) -> Result<Vec<SweepPoint>> {
    speeds
        .iter()
        .map(|&speed| {
            if !speed.is_finite() {
                return Err(Error::NonFinite("sweep speed"));
            }
            let scenario = Scenario {
                command: CommandProfile::preamble_then_ramp(SWEEP_PREAMBLE, speed, SWEEP_RAMP),
                ..base.clone()
            };
            let trace = simulate(&scenario)?;
            let (_, x_star) =
                orbit_target(&trace.model, &scenario.plane, trace.steps.len(), speed)?;
            let terminal_error = (trace.final_state.to_vector() - x_star.to_vector()).norm();
            let bound = trace.disturbance_bound(0);
            let ibox = invariant_box(&trace.closed_loop(), &bound)?;
            Ok(SweepPoint {
                speed,
                mean_velocity: trace.mean_velocity(STEADY_STATE_STEPS),
                terminal_error,
                w_max: bound.w_max,
                position_band: ibox.e_max[0] / trace.step_time(),
                velocity_band: trace.gains.k.abs().dot(&ibox.e_max.transpose()) / trace.step_time(),
                invariant_box: ibox,
                diverged: trace.diverged(),
                trace: Some(trace),
            })
        })
        .collect()
}

/// Inflation of the invariant box when testing recovery.
pub const RECOVERY_INFLATION: f64 = 0.10;
/// Absolute slack on recovery, covering integration error when the box is a point.
pub const RECOVERY_FLOOR: f64 = 1e-6;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PushRecovery {
    pub push: ForceEvent,
    /// First step starting at or after the end of the push.
    pub first_step_after: usize,
    pub recovered_step: Option<usize>,
    pub steps_to_recovery: Option<usize>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PushReport {
    /// Residual bound observed in the same scenario without pushes.
    pub baseline_bound: DisturbanceBound,
    pub invariant_box: InvariantBox,
    pub recoveries: Vec<PushRecovery>,
    pub diverged: bool,
    #[serde(skip)]
    pub trace: Option<StepTrace>,
}

impl PushReport {
    pub fn all_recovered(&self) -> bool {
        !self.diverged && self.recoveries.iter().all(|r| r.recovered_step.is_some())
    }
}

/// Apply pushes on top of `base` and count the steps until the error is back
/// inside the invariant box of the unpushed run (inflated by 10%).
pub fn push_experiment(base: &Scenario, pushes: &[ForceEvent]) -> Result<PushReport> {
    let total = base.total_time();
    for p in pushes {
        if p.t_start < 0.0 || p.t_end() > total {
            return Err(Error::InvalidParams(format!(
                "push at t = {} lasting {} s falls outside the run (0, {total})",
                p.t_start, p.duration
            )));
        }
    }
    let baseline = simulate(&Scenario {
        disturbances: Vec::new(),
        ..base.clone()
    })?;
    if baseline.diverged() {
        return Err(Error::Diverged {
            step: baseline.steps.len(),
            t: baseline.steps.last().map_or(0.0, |s| s.t),
            reason: "unpushed baseline diverged".into(),
        });
    }
    let baseline_bound = baseline.disturbance_bound(0);
    let ibox = invariant_box(&baseline.closed_loop(), &baseline_bound)?;

    let mut scenario = base.clone();
    scenario.disturbances.extend_from_slice(pushes);
    let trace = simulate(&scenario)?;
    let step_time = trace.step_time();
    let recoveries = pushes
        .iter()
        .map(|&push| {
            let first_step_after = (push.t_end() / step_time - 1e-9).ceil() as usize;
            let recovered_step = trace
                .steps
                .iter()
                .skip(first_step_after)
                .find(|s| ibox.contains(&s.error(), RECOVERY_INFLATION, RECOVERY_FLOOR))
                .map(|s| s.k);
            PushRecovery {
                push,
                first_step_after,
                recovered_step,
                steps_to_recovery: recovered_step.map(|k| k - first_step_after),
            }
        })
        .collect();
    Ok(PushReport {
        baseline_bound,
        invariant_box: ibox,
        recoveries,
        diverged: trace.diverged(),
        trace: Some(trace),
    })
}

pub const SPEED_RESOLUTION: f64 = 0.01;
pub const PROBE_STEPS: usize = 50;
pub const PROBE_RAMP: f64 = 2.0;
/// Search ceiling on the commanded speed [m/s].
pub const SPEED_CEILING: f64 = 20.0;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ModeSpeed {
    pub mode: WalkingMode,
    /// Largest stable commanded speed `u/T` along the search direction.
    pub max_command_speed: f64,
    /// Ground speed `(u + l) / T`: the foot pivot advances by `u + l` per step.
    pub max_ground_speed: f64,
    /// False when the search hit the ceiling without finding an unstable speed.
    pub bounded: bool,
}

/// Whether walking at `speed` is sustainable: 50 steps without divergence and
/// no step-size clipping over the last 10.
pub fn speed_is_stable(
    base: &Scenario,
    mode: WalkingMode,
    u_limit: f64,
    speed: f64,
) -> Result<bool> {
    let scenario = Scenario {
        params: base.params.with_mode(mode),
        command: CommandProfile(vec![
            CommandSegment {
                t: 0.0,
                v: 0.0,
                ramp: 0.0,
            },
            CommandSegment {
                t: 0.0,
                v: speed,
                ramp: PROBE_RAMP,
            },
        ]),
        n_steps: PROBE_STEPS,
        step_size_limit: u_limit.is_finite().then_some(u_limit),
        disturbances: Vec::new(),
        ..base.clone()
    };
    let trace = simulate(&scenario)?;
    Ok(!trace.diverged() && !trace.any_clipped(STEADY_STATE_STEPS))
}

/// Bisection for the largest stable speed of each mode under a common
/// step-size limit. `direction` is +1 for forward and -1 for backward walking.
pub fn max_speed_search(
    base: &Scenario,
    modes: &[WalkingMode],
    u_limit: f64,
    direction: f64,
) -> Result<Vec<ModeSpeed>> {
    if !(u_limit > 0.0) {
        return Err(Error::InvalidParams(format!(
            "u_limit must be positive, got {u_limit}"
        )));
    }
    let sign = if direction < 0.0 { -1.0 } else { 1.0 };
    modes
        .iter()
        .map(|&mode| {
            let params = base.params.with_mode(mode);
            let step_time = params.step_duration();
            let stable = |v: f64| speed_is_stable(base, mode, u_limit, sign * v);
            if !stable(0.0)? {
                return Err(Error::NoStableSpeed(mode.to_string()));
            }
            let (mut lo, mut hi) = (0.0, 0.5);
            let mut bounded = true;
            while stable(hi)? {
                lo = hi;
                if hi >= SPEED_CEILING {
                    bounded = false;
                    break;
                }
                hi = (hi * 2.0).min(SPEED_CEILING);
            }
            if bounded {
                while hi - lo > SPEED_RESOLUTION {
                    let mid = 0.5 * (lo + hi);
                    if stable(mid)? {
                        lo = mid;
                    } else {
                        hi = mid;
                    }
                }
            }
            Ok(ModeSpeed {
                mode,
                max_command_speed: lo,
                max_ground_speed: lo + sign * params.zmp_travel() / step_time,
                bounded,
            })
        })
        .collect()
}
