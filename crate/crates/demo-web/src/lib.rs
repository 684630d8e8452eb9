//! WebAssembly bindings for the static demo page in `www/`.
//!
//! Every export takes plain numbers or a JSON string of gait parameters and
//! returns JSON, so the page needs no generated glue beyond wasm-bindgen's.

// `!(x > 0.0)` is used on purpose: it also rejects NaN.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

use mlip::orbit::{p1_orbit, phase_portrait, OrbitSpec, PortraitSample};
use mlip::s2s::validate_structure;
use mlip::sim::{
    push_experiment, CommandProfile, ForceEvent, GainSetting, PlantSpec, PushRecovery, Scenario,
};
use mlip::{compose_s2s, compose_s2s_at_fa_end, GaitParams, S2sDynamics};
use serde::Serialize;
use wasm_bindgen::prelude::*;

/// Height of the simulated plant; the controller keeps the nominal `z0`.
pub const PLANT_Z0: f64 = 0.78;
pub const PUSH_START: f64 = 5.0;
pub const PUSH_DURATION: f64 = 0.5;
pub const PUSH_STEPS: usize = 30;
/// Keep one trace sample in this many for plotting.
const THIN: usize = 10;

fn params(json: &str) -> Result<GaitParams, String> {
    let p: GaitParams = serde_json::from_str(json).map_err(|e| format!("bad parameters: {e}"))?;
    p.validate().map_err(|e| e.to_string())?;
    Ok(p)
}

fn to_json<T: Serialize>(value: &T) -> Result<String, String> {
    serde_json::to_string(value).map_err(|e| e.to_string())
}

#[derive(Serialize)]
struct Matrices {
    ua_end: S2sDynamics,
    fa_end: S2sDynamics,
    structure_ok: bool,
    max_residual: f64,
}

/// Step-to-step matrices on both sections, with the structure check.
#[wasm_bindgen]
pub fn s2s_matrices(params_json: &str) -> Result<String, String> {
    let p = params(params_json)?;
    let ua_end = compose_s2s(&p).map_err(|e| e.to_string())?;
    let fa_end = compose_s2s_at_fa_end(&p).map_err(|e| e.to_string())?;
    let (a, b) = (validate_structure(&ua_end), validate_structure(&fa_end));
    to_json(&Matrices {
        structure_ok: a.passed() && b.passed(),
        max_residual: a.max_residual().max(b.max_residual()),
        ua_end,
        fa_end,
    })
}

#[derive(Serialize)]
struct Portrait {
    orbit: OrbitSpec,
    samples: Vec<PortraitSample>,
}

/// Period-1 orbit at `v_d` and its sampled phase portrait.
#[wasm_bindgen]
pub fn orbit_portrait(params_json: &str, v_d: f64, dt: f64) -> Result<String, String> {
    let p = params(params_json)?;
    if !(dt > 0.0) {
        return Err(format!("dt must be positive, got {dt}"));
    }
    let orbit = OrbitSpec::P1(
        p1_orbit(&compose_s2s(&p).map_err(|e| e.to_string())?, v_d).map_err(|e| e.to_string())?,
    );
    let samples = phase_portrait(&p, &orbit, dt);
    to_json(&Portrait { orbit, samples })
}

#[derive(Serialize)]
struct Point {
    t: f64,
    p: f64,
    #[serde(rename = "L")]
    momentum: f64,
}

#[derive(Serialize)]
struct StepPoint {
    k: usize,
    t: f64,
    v_d: f64,
    v_step: f64,
    error: f64,
    clipped: bool,
}

#[derive(Serialize)]
struct PushRun {
    diverged: bool,
    e_max: [f64; 2],
    recovery: PushRecovery,
    samples: Vec<Point>,
    steps: Vec<StepPoint>,
}

/// Walk on a shorter plant, shove it at `PUSH_START` and report the recovery.
///
/// `method` is `"lqr"` or `"deadbeat"`; a non-positive `step_limit` means
/// unlimited step sizes.
#[wasm_bindgen]
pub fn push_recovery(
    params_json: &str,
    method: &str,
    v_d: f64,
    magnitude: f64,
    step_limit: f64,
) -> Result<String, String> {
    let p = params(params_json)?;
    let mut scenario = Scenario::new(p, PUSH_STEPS);
    scenario.plant = PlantSpec::mismatched_height(PLANT_Z0);
    scenario.command = CommandProfile::constant(v_d);
    scenario.gains = match method {
        "lqr" => GainSetting::default(),
        "deadbeat" => GainSetting::Deadbeat,
        other => return Err(format!("unknown gain method {other:?}")),
    };
    scenario.step_size_limit = (step_limit > 0.0).then_some(step_limit);
    let push = ForceEvent {
        t_start: PUSH_START,
        duration: PUSH_DURATION,
        magnitude,
    };
    let report = push_experiment(&scenario, &[push]).map_err(|e| e.to_string())?;
    let trace = report.trace.as_ref().ok_or("push run produced no trace")?;
    let period = trace.step_time();
    to_json(&PushRun {
        diverged: report.diverged,
        e_max: [report.invariant_box.e_max[0], report.invariant_box.e_max[1]],
        recovery: report.recoveries[0],
        samples: trace
            .samples
            .iter()
            .step_by(THIN)
            .map(|s| Point {
                t: s.t,
                p: s.p,
                momentum: s.momentum,
            })
            .collect(),
        steps: trace
            .steps
            .iter()
            .map(|r| StepPoint {
                k: r.k,
                t: r.t,
                v_d: r.v_d,
                v_step: r.u / period,
                error: r.error().norm(),
                clipped: r.clipped,
            })
            .collect(),
    })
}
