//! Hybrid MLIP model: parameters, states, per-domain flow maps and reset maps.
//!
//! The continuous state is `ξ = [p, L, p_zmp]` (CoM position, mass-normalized
//! angular momentum about the stance pivot, ZMP position), all measured
//! relative to the stance pivot of the under-actuated phase. Within every
//! domain the ZMP moves at a constant rate `d_i / T_i`, so each domain has an
//! exact affine flow map `ξ⁻ = A_i ξ⁺ + B_i d_i`.

use std::fmt;

use nalgebra::{Matrix3, Vector2, Vector3};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Durations below this threshold are treated as exactly zero.
pub const MIN_DURATION: f64 = 1e-9;

/// Default gravitational acceleration [m/s²].
pub const DEFAULT_GRAVITY: f64 = 9.81;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum WalkingMode {
    HeelToToe,
    ToeToHeel,
    FlatFooted,
}

impl WalkingMode {
    pub const ALL: [WalkingMode; 3] = [
        WalkingMode::HeelToToe,
        WalkingMode::ToeToHeel,
        WalkingMode::FlatFooted,
    ];

    pub fn name(self) -> &'static str {
        match self {
            WalkingMode::HeelToToe => "heel-to-toe",
            WalkingMode::ToeToHeel => "toe-to-heel",
            WalkingMode::FlatFooted => "flat-footed",
        }
    }
}

impl fmt::Display for WalkingMode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl std::str::FromStr for WalkingMode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "heel-to-toe" => Ok(WalkingMode::HeelToToe),
            "toe-to-heel" => Ok(WalkingMode::ToeToHeel),
            "flat-footed" => Ok(WalkingMode::FlatFooted),
            other => Err(Error::InvalidParams(format!(
                "unknown walking mode `{other}`"
            ))),
        }
    }
}

/// Distance the ZMP travels during the fully-actuated phase.
pub fn zmp_travel(mode: WalkingMode, rho: f64) -> f64 {
    match mode {
        WalkingMode::HeelToToe => rho,
        WalkingMode::ToeToHeel => -rho,
        WalkingMode::FlatFooted => 0.0,
    }
}

/// Gait domains. One step runs OA → FA → UA; the leg switch happens at OA → FA.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Domain {
    #[serde(rename = "FA")]
    Fa,
    #[serde(rename = "UA")]
    Ua,
    #[serde(rename = "OA")]
    Oa,
}

impl Domain {
    pub fn label(self) -> &'static str {
        match self {
            Domain::Fa => "FA",
            Domain::Ua => "UA",
            Domain::Oa => "OA",
        }
    }
}

impl fmt::Display for Domain {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.label())
    }
}

/// Physical and timing parameters of the model.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GaitParams {
    /// CoM height above the stance pivot [m].
    pub z0: f64,
    /// Foot arc length [m].
    pub rho: f64,
    #[serde(default = "default_gravity")]
    pub g: f64,
    pub t_fa: f64,
    pub t_ua: f64,
    pub t_oa: f64,
    pub mode: WalkingMode,
}

fn default_gravity() -> f64 {
    DEFAULT_GRAVITY
}

impl Default for GaitParams {
    fn default() -> Self {
        Self::sagittal()
    }
}

impl GaitParams {
    /// Sagittal gait: 0.4 s single support split evenly into FA and UA, 0.1 s double support.
    pub fn sagittal() -> Self {
        Self {
            z0: 0.8,
            rho: 0.16,
            g: DEFAULT_GRAVITY,
            t_fa: 0.2,
            t_ua: 0.2,
            t_oa: 0.1,
            mode: WalkingMode::HeelToToe,
        }
    }

    /// Lateral gait: no FA phase, the whole single support is under-actuated.
    pub fn lateral() -> Self {
        Self {
            z0: 0.8,
            rho: 0.16,
            g: DEFAULT_GRAVITY,
            t_fa: 0.0,
            t_ua: 0.4,
            t_oa: 0.1,
            mode: WalkingMode::FlatFooted,
        }
    }

    pub fn with_mode(mut self, mode: WalkingMode) -> Self {
        self.mode = mode;
        self
    }

    pub fn validate(&self) -> Result<()> {
        let fields = [
            ("z0", self.z0),
            ("rho", self.rho),
            ("g", self.g),
            ("t_fa", self.t_fa),
            ("t_ua", self.t_ua),
            ("t_oa", self.t_oa),
        ];
        for (name, value) in fields {
            if !value.is_finite() {
                return Err(Error::InvalidParams(format!("{name} must be finite")));
            }
        }
        if self.z0 <= 0.0 {
            return Err(Error::InvalidParams(format!(
                "z0 must be positive, got {}",
                self.z0
            )));
        }
        if self.g <= 0.0 {
            return Err(Error::InvalidParams(format!(
                "g must be positive, got {}",
                self.g
            )));
        }
        if self.rho < 0.0 {
            return Err(Error::InvalidParams(format!(
                "rho must be non-negative, got {}",
                self.rho
            )));
        }
        for (name, value) in &fields[3..] {
            if *value < 0.0 {
                return Err(Error::InvalidParams(format!(
                    "{name} must be non-negative, got {value}"
                )));
            }
        }
        if self.step_duration() <= MIN_DURATION {
            return Err(Error::InvalidParams(
                "total step duration must be positive".into(),
            ));
        }
        Ok(())
    }

    /// Natural frequency `sqrt(g / z0)` of the pendulum.
    pub fn omega(&self) -> f64 {
        (self.g / self.z0).sqrt()
    }

    /// Signed ZMP travel `l` during FA.
    pub fn zmp_travel(&self) -> f64 {
        zmp_travel(self.mode, self.rho)
    }

    /// Total step duration `T = T_FA + T_UA + T_OA`.
    pub fn step_duration(&self) -> f64 {
        self.t_fa + self.t_ua + self.t_oa
    }

    /// Duration of a domain, with sub-threshold durations snapped to zero.
    pub fn duration(&self, domain: Domain) -> f64 {
        let t = match domain {
            Domain::Fa => self.t_fa,
            Domain::Ua => self.t_ua,
            Domain::Oa => self.t_oa,
        };
        effective_duration(t)
    }

    /// ZMP displacement `d_i` commanded over a domain for step size `u`.
    pub fn domain_input(&self, domain: Domain, u: f64) -> f64 {
        match domain {
            Domain::Oa => u,
            Domain::Fa => self.zmp_travel(),
            Domain::Ua => 0.0,
        }
    }
}

pub(crate) fn effective_duration(t: f64) -> f64 {
    if t < MIN_DURATION {
        0.0
    } else {
        t
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct ContinuousState {
    pub p: f64,
    /// Mass-normalized angular momentum about the stance pivot [m²/s].
    #[serde(rename = "L")]
    pub momentum: f64,
    pub p_zmp: f64,
}

impl ContinuousState {
    pub fn new(p: f64, momentum: f64, p_zmp: f64) -> Self {
        Self { p, momentum, p_zmp }
    }

    pub fn to_vector(self) -> Vector3<f64> {
        Vector3::new(self.p, self.momentum, self.p_zmp)
    }

    pub fn from_vector(v: &Vector3<f64>) -> Self {
        Self::new(v[0], v[1], v[2])
    }

    pub fn reduced(self) -> ReducedState {
        ReducedState::new(self.p, self.momentum)
    }

    pub fn is_finite(&self) -> bool {
        self.p.is_finite() && self.momentum.is_finite() && self.p_zmp.is_finite()
    }
}

/// CoM state `[p, L]` sampled on a Poincaré section where `p_zmp = 0`.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct ReducedState {
    pub p: f64,
    #[serde(rename = "L")]
    pub momentum: f64,
}

impl ReducedState {
    pub fn new(p: f64, momentum: f64) -> Self {
        Self { p, momentum }
    }

    pub fn to_vector(self) -> Vector2<f64> {
        Vector2::new(self.p, self.momentum)
    }

    pub fn from_vector(v: &Vector2<f64>) -> Self {
        Self::new(v[0], v[1])
    }

    /// Lift onto the section, where the ZMP sits on the stance pivot.
    pub fn on_section(self) -> ContinuousState {
        ContinuousState::new(self.p, self.momentum, 0.0)
    }
}

/// Continuous-time system matrix `A_ct`.
pub fn continuous_matrix(params: &GaitParams) -> Matrix3<f64> {
    Matrix3::new(
        0.0,
        1.0 / params.z0,
        0.0,
        params.g,
        0.0,
        -params.g,
        0.0,
        0.0,
        0.0,
    )
}

/// Exact `exp(A_ct t)` from the hyperbolic closed form.
pub fn mat_exp_closed(params: &GaitParams, t: f64) -> Result<Matrix3<f64>> {
    if !(params.z0 > 0.0) || !(params.g > 0.0) || !params.z0.is_finite() || !params.g.is_finite() {
        return Err(Error::InvalidParams(format!(
            "z0 and g must be positive and finite (z0 = {}, g = {})",
            params.z0, params.g
        )));
    }
    if !(t >= 0.0) || !t.is_finite() {
        return Err(Error::InvalidParams(format!(
            "duration must be non-negative, got {t}"
        )));
    }
    Ok(exp_unchecked(params.z0, params.g, t))
}

fn exp_unchecked(z0: f64, g: f64, t: f64) -> Matrix3<f64> {
    let w = (g / z0).sqrt();
    let (c, s) = ((w * t).cosh(), (w * t).sinh());
    // the third column is the free response to a unit ZMP offset
    Matrix3::new(
        c,
        s / (w * z0),
        1.0 - c,
        z0 * w * s,
        c,
        -z0 * w * s,
        0.0,
        0.0,
        1.0,
    )
}

/// `∫₀ᵗ exp(A_ct τ) dτ · B_ct`: response to a unit ZMP rate held for `t`.
fn rate_response(z0: f64, g: f64, t: f64) -> Vector3<f64> {
    let w = (g / z0).sqrt();
    let wt = w * t;
    // t - sinh(wt)/w loses precision for small wt; use the series there.
    let p = if wt < 1e-3 {
        let wt2 = wt * wt;
        -t * wt2 / 6.0 * (1.0 + wt2 / 20.0 * (1.0 + wt2 / 42.0))
    } else {
        t - wt.sinh() / w
    };
    Vector3::new(p, -z0 * (wt.cosh() - 1.0), t)
}

/// Exact affine flow of one domain, `ξ⁻ = A ξ⁺ + B d`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DomainMap {
    pub a: Matrix3<f64>,
    pub b: Vector3<f64>,
    pub duration: f64,
    pub domain: Domain,
}

impl DomainMap {
    pub fn apply(&self, xi: &Vector3<f64>, d: f64) -> Vector3<f64> {
        self.a * xi + self.b * d
    }
}

pub fn domain_map(params: &GaitParams, domain: Domain) -> Result<DomainMap> {
    params.validate()?;
    let duration = params.duration(domain);
    if duration == 0.0 {
        return Ok(DomainMap {
            a: Matrix3::identity(),
            b: Vector3::zeros(),
            duration,
            domain,
        });
    }
    let a = exp_unchecked(params.z0, params.g, duration);
    let mut b = rate_response(params.z0, params.g, duration) / duration;
    b[2] = 1.0;
    Ok(DomainMap {
        a,
        b,
        duration,
        domain,
    })
}

/// State after `elapsed` seconds of a flow with constant ZMP rate.
///
/// Used to sample the interior of a domain; `elapsed` is not snapped.
pub fn flow_partial(
    params: &GaitParams,
    xi: &ContinuousState,
    zmp_rate: f64,
    elapsed: f64,
) -> ContinuousState {
    let a = exp_unchecked(params.z0, params.g, elapsed);
    let mut forced = rate_response(params.z0, params.g, elapsed) * zmp_rate;
    forced[2] = zmp_rate * elapsed;
    ContinuousState::from_vector(&(a * xi.to_vector() + forced))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum ResetEdge {
    #[serde(rename = "UA->OA")]
    UaToOa,
    #[serde(rename = "OA->FA")]
    OaToFa,
    #[serde(rename = "FA->UA")]
    FaToUa,
}

/// Affine, state-independent reset `ξ⁺ = ξ⁻ + B_Δ u + C_Δ`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ResetMap {
    pub b_delta: Vector3<f64>,
    pub c_delta: Vector3<f64>,
    pub edge: ResetEdge,
}

impl ResetMap {
    pub fn apply(&self, xi: &Vector3<f64>, u: f64) -> Vector3<f64> {
        xi + self.b_delta * u + self.c_delta
    }

    pub fn is_identity(&self) -> bool {
        self.b_delta == Vector3::zeros() && self.c_delta == Vector3::zeros()
    }
}

pub fn reset_map(params: &GaitParams, edge: ResetEdge) -> ResetMap {
    match edge {
        ResetEdge::UaToOa | ResetEdge::FaToUa => ResetMap {
            b_delta: Vector3::zeros(),
            c_delta: Vector3::zeros(),
            edge,
        },
        ResetEdge::OaToFa => {
            let l = params.zmp_travel();
            // Without an OA (resp. FA) phase the ZMP cannot travel u (resp. l)
            // continuously, so the reset moves it onto the new pivot directly.
            let zmp_u = if params.duration(Domain::Oa) == 0.0 {
                0.0
            } else {
                -1.0
            };
            let zmp_l = if params.duration(Domain::Fa) == 0.0 {
                0.0
            } else {
                -l
            };
            ResetMap {
                b_delta: Vector3::new(-1.0, 0.0, zmp_u),
                c_delta: Vector3::new(-l, 0.0, zmp_l),
                edge,
            }
        }
    }
}
