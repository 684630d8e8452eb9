//! Step-size feedback gains for the error dynamics `e⁺ = (A + B K) e + w`
//! and axis-aligned bounds on the set the error settles into.

use nalgebra::{Matrix2, RowVector2, Vector2};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::{condition2, eigenvalues2, spectral_radius2};
use crate::rowmajor;

pub const DARE_MAX_ITERATIONS: usize = 5000;
pub const DARE_TOL: f64 = 1e-10;
/// Controllability matrices above this condition number are rejected.
pub const MAX_CONTROLLABILITY_CONDITION: f64 = 1e12;
/// Number of Minkowski-sum terms used when the componentwise iteration fails.
pub const MINKOWSKI_TERMS: usize = 50;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum GainMethod {
    Lqr,
    Deadbeat,
    Explicit,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LqrWeights {
    #[serde(with = "rowmajor::mat2")]
    pub q: Matrix2<f64>,
    pub r: f64,
}

impl Default for LqrWeights {
    fn default() -> Self {
        Self {
            q: Matrix2::identity(),
            r: 1.0,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DareSolution {
    #[serde(with = "rowmajor::mat2")]
    pub p: Matrix2<f64>,
    pub residual: f64,
    pub iterations: usize,
}

/// Feedback `u = u* + K (x - x*)` together with how it was obtained.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GainSpec {
    #[serde(with = "rowmajor::row2")]
    pub k: RowVector2<f64>,
    pub method: GainMethod,
    #[serde(default)]
    pub weights: Option<LqrWeights>,
    #[serde(default)]
    pub dare: Option<DareSolution>,
    pub rho_cl: f64,
}

impl GainSpec {
    pub fn closed_loop(&self, a: &Matrix2<f64>, b: &Vector2<f64>) -> Matrix2<f64> {
        closed_loop(a, b, &self.k)
    }

    /// Wrap a user-supplied gain, checking that it stabilizes `(a, b)`.
    pub fn explicit(a: &Matrix2<f64>, b: &Vector2<f64>, k: RowVector2<f64>) -> Result<Self> {
        let rho_cl = stable_radius(&closed_loop(a, b, &k))?;
        Ok(Self {
            k,
            method: GainMethod::Explicit,
            weights: None,
            dare: None,
            rho_cl,
        })
    }
}

pub fn closed_loop(a: &Matrix2<f64>, b: &Vector2<f64>, k: &RowVector2<f64>) -> Matrix2<f64> {
    a + b * k
}

fn stable_radius(a_cl: &Matrix2<f64>) -> Result<f64> {
    let rho = spectral_radius2(a_cl);
    if rho < 1.0 {
        Ok(rho)
    } else {
        Err(Error::Unstable(rho))
    }
}

fn check_finite(a: &Matrix2<f64>, b: &Vector2<f64>) -> Result<()> {
    if a.iter().chain(b.iter()).all(|v| v.is_finite()) {
        Ok(())
    } else {
        Err(Error::NonFinite("system matrices"))
    }
}

/// PBH test on every eigenvalue outside the open unit disk.
fn is_stabilizable(a: &Matrix2<f64>, b: &Vector2<f64>) -> bool {
    let scale = a.amax().max(1.0);
    for mu in eigenvalues2(a) {
        if mu.norm() < 1.0 {
            continue;
        }
        if mu.im != 0.0 {
            // a real nonzero B never lies in the range of A - μI for complex μ
            if b.amax() == 0.0 {
                return false;
            }
            continue;
        }
        let m = a - Matrix2::identity() * mu.re;
        if m.amax() <= 1e-12 * scale {
            // A = μI with a single input
            return false;
        }
        // left null vector of m is orthogonal to its column space
        let col = if m.column(0).amax() >= m.column(1).amax() {
            m.column(0).into_owned()
        } else {
            m.column(1).into_owned()
        };
        let w = Vector2::new(-col[1], col[0]).normalize();
        if w.dot(b).abs() <= 1e-12 * b.amax().max(1e-300) || b.amax() == 0.0 {
            return false;
        }
    }
    true
}

fn riccati_update(
    a: &Matrix2<f64>,
    b: &Vector2<f64>,
    q: &Matrix2<f64>,
    r: f64,
    p: &Matrix2<f64>,
) -> Matrix2<f64> {
    let pa = p * a;
    let bp_a = b.transpose() * pa;
    let denom = r + (b.transpose() * p * b)[0];
    let next = a.transpose() * pa - bp_a.transpose() * bp_a / denom + q;
    (next + next.transpose()) * 0.5
}

/// Discrete LQR gain by fixed-point iteration of the Riccati equation.
///
/// Returns `K = -(R + BᵀPB)⁻¹ BᵀPA`, so `u = u* + K e` stabilizes.
pub fn dlqr(a: &Matrix2<f64>, b: &Vector2<f64>, q: &Matrix2<f64>, r: f64) -> Result<GainSpec> {
    check_finite(a, b)?;
    if !(r > 0.0) || !r.is_finite() {
        return Err(Error::InvalidParams(format!("R must be positive, got {r}")));
    }
    if q.iter().any(|v| !v.is_finite()) || (q - q.transpose()).amax() > 1e-12 * q.amax().max(1.0) {
        return Err(Error::InvalidParams(
            "Q must be finite and symmetric".into(),
        ));
    }
    if eigenvalues2(q)
        .iter()
        .any(|e| e.re < -1e-12 * q.amax().max(1.0))
    {
        return Err(Error::InvalidParams(
            "Q must be positive semidefinite".into(),
        ));
    }
    if !is_stabilizable(a, b) {
        return Err(Error::NotStabilizable);
    }

    let mut p = *q;
    let mut iterations = 0;
    let mut converged = false;
    while iterations < DARE_MAX_ITERATIONS {
        iterations += 1;
        let next = riccati_update(a, b, q, r, &p);
        if next.iter().any(|v| !v.is_finite()) {
            break;
        }
        let change = (next - p).amax();
        p = next;
        if change <= 1e-13 * p.amax().max(1.0) {
            converged = true;
            break;
        }
    }
    let residual = (riccati_update(a, b, q, r, &p) - p).amax();
    if !converged && !(residual <= DARE_TOL) {
        return Err(Error::NoConvergence {
            iterations,
            residual,
        });
    }
    let denom = r + (b.transpose() * p * b)[0];
    let k = -(b.transpose() * p * a) / denom;
    let rho_cl = stable_radius(&closed_loop(a, b, &k))?;
    Ok(GainSpec {
        k,
        method: GainMethod::Lqr,
        weights: Some(LqrWeights { q: *q, r }),
        dare: Some(DareSolution {
            p,
            residual,
            iterations,
        }),
        rho_cl,
    })
}

/// Gain placing both closed-loop eigenvalues at zero (Ackermann's formula).
pub fn deadbeat_gain(a: &Matrix2<f64>, b: &Vector2<f64>) -> Result<GainSpec> {
    check_finite(a, b)?;
    let ctrb = Matrix2::from_columns(&[*b, a * b]);
    let condition = condition2(&ctrb);
    if !(condition <= MAX_CONTROLLABILITY_CONDITION) {
        return Err(Error::Uncontrollable { condition });
    }
    let inv = ctrb
        .try_inverse()
        .ok_or(Error::Uncontrollable { condition })?;
    let k = -(inv.row(1) * a * a);
    let a_cl = closed_loop(a, b, &k);
    Ok(GainSpec {
        k,
        method: GainMethod::Deadbeat,
        weights: None,
        dare: None,
        rho_cl: spectral_radius2(&a_cl),
    })
}

/// Componentwise bound `|w| <= w_max` on the step residual.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DisturbanceBound {
    #[serde(with = "rowmajor::vec2")]
    pub w_max: Vector2<f64>,
}

impl DisturbanceBound {
    pub fn new(w_p: f64, w_l: f64) -> Result<Self> {
        if !(w_p >= 0.0 && w_l >= 0.0) || !w_p.is_finite() || !w_l.is_finite() {
            return Err(Error::InvalidParams(
                "disturbance bound must be non-negative and finite".into(),
            ));
        }
        Ok(Self {
            w_max: Vector2::new(w_p, w_l),
        })
    }

    /// Tightest bound covering the given residuals.
    pub fn covering<'a>(residuals: impl IntoIterator<Item = &'a Vector2<f64>>) -> Self {
        let w_max = residuals
            .into_iter()
            .fold(Vector2::zeros(), |acc: Vector2<f64>, w| acc.sup(&w.abs()));
        Self { w_max }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum BoxMethod {
    /// Fixed point of `e = |A_cl| e + w_max`; the box itself is invariant.
    ComponentwiseFixedPoint,
    /// Box hull of a scaled truncated Minkowski sum; contains an invariant set.
    MinkowskiSum,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct InvariantBox {
    #[serde(with = "rowmajor::vec2")]
    pub e_max: Vector2<f64>,
    pub method: BoxMethod,
}

impl InvariantBox {
    pub fn contains(&self, e: &Vector2<f64>, inflation: f64, floor: f64) -> bool {
        e.iter()
            .zip(self.e_max.iter())
            .all(|(v, m)| v.abs() <= m * (1.0 + inflation) + floor)
    }
}

/// Axis-aligned outer bound on the set the error converges to under
/// `e⁺ = A_cl e + w`, `|w| <= w_max`.
pub fn invariant_box(a_cl: &Matrix2<f64>, bound: &DisturbanceBound) -> Result<InvariantBox> {
    if a_cl.iter().any(|v| !v.is_finite()) {
        return Err(Error::NonFinite("closed-loop matrix"));
    }
    stable_radius(a_cl)?;
    let w = bound.w_max;
    let abs_a = a_cl.abs();

    if spectral_radius2(&abs_a) < 1.0 {
        let mut e = w;
        for _ in 0..1_000_000 {
            let next = abs_a * e + w;
            let change = (next - e).amax();
            e = next;
            if change <= f64::EPSILON * e.amax() {
                break;
            }
        }
        return Ok(InvariantBox {
            e_max: e,
            method: BoxMethod::ComponentwiseFixedPoint,
        });
    }

    // Box hull of sum_{k<N} A^k W, scaled by 1/(1 - α) where A^N W ⊆ α W.
    let mut sum = Vector2::zeros();
    let mut power = Matrix2::identity();
    for _ in 0..MINKOWSKI_TERMS {
        sum += power.abs() * w;
        power *= a_cl;
    }
    let tail = power.abs() * w;
    let mut alpha: f64 = 0.0;
    for i in 0..2 {
        if w[i] > 0.0 {
            alpha = alpha.max(tail[i] / w[i]);
        } else if tail[i] > 0.0 {
            return Err(Error::DivergentBound(format!(
                "disturbance component {i} is zero but the tail term is {:.3e}",
                tail[i]
            )));
        }
    }
    if !(alpha < 1.0) {
        return Err(Error::DivergentBound(format!(
            "tail contraction factor {alpha:.3e} >= 1"
        )));
    }
    Ok(InvariantBox {
        e_max: sum / (1.0 - alpha),
        method: BoxMethod::MinkowskiSum,
    })
}
