use std::path::Path;

use mlip::gains::{invariant_box, DisturbanceBound, GainSpec, InvariantBox};
use mlip::orbit::{p1_orbit, p2_orbit_from_width, phase_portrait, OrbitSpec};
use mlip::rowmajor;
use mlip::s2s::{validate_structure, StructureReport};
use mlip::sim::{
    max_speed_search, push_experiment, simulate as run_scenario, velocity_sweep, ModeSpeed,
    Outcome, PushReport, Scenario, StepTrace, SweepPoint, STEADY_STATE_STEPS,
};
use mlip::traj::{reference_step, FootPitchTargets, DEFAULT_BEZIER_DEGREE};
use mlip::{compose_s2s, compose_s2s_at_fa_end, S2sDynamics};
use nalgebra::Matrix2;
use serde::{Deserialize, Serialize};

use crate::config::{
    GainsConfig, MatricesConfig, MaxSpeedConfig, OrbitConfig, PushConfig, SweepConfig,
};
use crate::output::{portrait_table, reference_table, steps_table, trace_table, Artifacts, Table};
use crate::{CliError, OrbitArgs, RunOutput};

fn summary<T: Serialize>(value: &T) -> Result<serde_json::Value, CliError> {
    serde_json::to_value(value).map_err(|e| CliError::internal(e.to_string()))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MatricesReport {
    pub ua_end: S2sDynamics,
    pub fa_end: S2sDynamics,
    pub structure_ua_end: StructureReport,
    pub structure_fa_end: StructureReport,
}

pub fn matrices(c: MatricesConfig, out: &Path) -> Result<RunOutput, CliError> {
    let ua_end = compose_s2s(&c.params)?;
    let fa_end = compose_s2s_at_fa_end(&c.params)?;
    let report = MatricesReport {
        structure_ua_end: validate_structure(&ua_end),
        structure_fa_end: validate_structure(&fa_end),
        ua_end,
        fa_end,
    };
    let mut files = Artifacts::new(out);
    files.write_json("matrices.json", &report)?;
    if !report.structure_ua_end.passed() || !report.structure_fa_end.passed() {
        return Err(CliError::numerical(format!(
            "structure check failed, max residual {:e}",
            report
                .structure_ua_end
                .max_residual()
                .max(report.structure_fa_end.max_residual())
        )));
    }
    Ok(RunOutput {
        summary: summary(&report)?,
        files: files.written().to_vec(),
    })
}

pub fn orbit(mut c: OrbitConfig, args: &OrbitArgs, out: &Path) -> Result<RunOutput, CliError> {
    if let Some(v) = args.v {
        c.v_d = v;
    }
    if let Some(mode) = args.mode {
        c.params.mode = mode;
    }
    if args.width.is_some() {
        c.width = args.width;
    }
    if !(c.dt > 0.0) {
        return Err(CliError::schema(format!(
            "dt must be positive, got {}",
            c.dt
        )));
    }
    let dynamics = compose_s2s(&c.params)?;
    let spec = match c.width {
        Some(w) => OrbitSpec::P2(p2_orbit_from_width(&dynamics, c.v_d, w)?),
        None => OrbitSpec::P1(p1_orbit(&dynamics, c.v_d)?),
    };
    let mut files = Artifacts::new(out);
    files.write_json("orbit.json", &spec)?;
    files.write_csv(
        "portrait.csv",
        &portrait_table(&phase_portrait(&c.params, &spec, c.dt)),
    )?;
    if matches!(spec, OrbitSpec::P1(_)) && c.params.duration(mlip::Domain::Fa) > 0.0 {
        let targets = FootPitchTargets::for_mode(c.params.mode);
        let rows = reference_step(&c.params, c.v_d, DEFAULT_BEZIER_DEGREE, &targets, c.dt)?;
        files.write_csv("reference.csv", &reference_table(&rows))?;
    }
    Ok(RunOutput {
        summary: summary(&spec)?,
        files: files.written().to_vec(),
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GainsReport {
    pub gain: GainSpec,
    #[serde(with = "rowmajor::mat2")]
    pub closed_loop: Matrix2<f64>,
    pub disturbance: DisturbanceBound,
    pub invariant_box: InvariantBox,
}

pub fn gains(c: GainsConfig, out: &Path) -> Result<RunOutput, CliError> {
    let dynamics = compose_s2s(&c.params)?;
    let gain = c.gains.synthesize(&dynamics)?;
    let closed_loop = gain.closed_loop(&dynamics.a_m, &dynamics.b_m);
    let disturbance = DisturbanceBound::new(c.w_max[0], c.w_max[1])?;
    let report = GainsReport {
        invariant_box: invariant_box(&closed_loop, &disturbance)?,
        gain,
        closed_loop,
        disturbance,
    };
    let mut files = Artifacts::new(out);
    files.write_json("gains.json", &report)?;
    Ok(RunOutput {
        summary: summary(&report)?,
        files: files.written().to_vec(),
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SimulationMetrics {
    pub outcome: Outcome,
    pub steps_completed: usize,
    pub step_time: f64,
    /// Mean of `u / T` over the last steps.
    pub mean_velocity: f64,
    pub max_error: f64,
    pub final_error: f64,
    pub any_clipped: bool,
    pub gain: GainSpec,
    pub disturbance: DisturbanceBound,
    /// Box for the observed residuals; absent when the bound cannot be formed.
    pub invariant_box: Option<InvariantBox>,
}

pub fn metrics(trace: &StepTrace) -> SimulationMetrics {
    let errors: Vec<f64> = trace.steps.iter().map(|s| s.error().norm()).collect();
    let disturbance = trace.disturbance_bound(0);
    SimulationMetrics {
        outcome: trace.outcome.clone(),
        steps_completed: trace.steps.len(),
        step_time: trace.step_time(),
        mean_velocity: trace.mean_velocity(STEADY_STATE_STEPS),
        max_error: errors.iter().copied().fold(0.0, f64::max),
        final_error: errors.last().copied().unwrap_or(f64::NAN),
        any_clipped: trace.any_clipped(trace.steps.len()),
        gain: trace.gains,
        invariant_box: invariant_box(&trace.closed_loop(), &disturbance).ok(),
        disturbance,
    }
}

fn divergence(outcome: &Outcome) -> Option<CliError> {
    match outcome {
        Outcome::Completed => None,
        Outcome::Diverged { step, t, reason } => Some(CliError::numerical(format!(
            "diverged at step {step} (t = {t:.3} s): {reason}"
        ))),
    }
}

pub fn simulate(scenario: Scenario, out: &Path) -> Result<RunOutput, CliError> {
    let trace = run_scenario(&scenario)?;
    let m = metrics(&trace);
    let mut files = Artifacts::new(out);
    files.write_csv("trace.csv", &trace_table(&trace))?;
    files.write_csv("steps.csv", &steps_table(&trace))?;
    files.write_json("metrics.json", &m)?;
    // artifacts of a diverged run are kept for inspection
    if let Some(e) = divergence(&trace.outcome) {
        return Err(e);
    }
    Ok(RunOutput {
        summary: summary(&m)?,
        files: files.written().to_vec(),
    })
}

/// Per-step velocity `u / T` for each run, tagged by a key column.
pub fn velocity_table(key: &'static str, runs: &[(f64, &StepTrace)]) -> Table {
    let mut t = Table::new(&[key, "k", "t", "v_d", "v_step", "clipped"]);
    for (value, trace) in runs {
        let period = trace.step_time();
        for r in &trace.steps {
            t.push(vec![
                (*value).into(),
                r.k.into(),
                r.t.into(),
                r.v_d.into(),
                (r.u / period).into(),
                r.clipped.into(),
            ]);
        }
    }
    t
}

pub fn sweep_table(points: &[SweepPoint]) -> Table {
    let mut t = Table::new(&[
        "speed",
        "mean_velocity",
        "terminal_error",
        "w_p",
        "w_L",
        "e_max_p",
        "e_max_L",
        "position_band",
        "velocity_band",
        "diverged",
    ]);
    for p in points {
        t.push(vec![
            p.speed.into(),
            p.mean_velocity.into(),
            p.terminal_error.into(),
            p.w_max[0].into(),
            p.w_max[1].into(),
            p.invariant_box.e_max[0].into(),
            p.invariant_box.e_max[1].into(),
            p.position_band.into(),
            p.velocity_band.into(),
            p.diverged.into(),
        ]);
    }
    t
}

pub fn sweep(c: SweepConfig, out: &Path) -> Result<RunOutput, CliError> {
    let points = velocity_sweep(&c.scenario, &c.speeds)?;
    let runs: Vec<_> = points
        .iter()
        .filter_map(|p| p.trace.as_ref().map(|t| (p.speed, t)))
        .collect();
    let mut files = Artifacts::new(out);
    files.write_json("sweep.json", &points)?;
    files.write_csv("sweep.csv", &sweep_table(&points))?;
    files.write_csv("velocity.csv", &velocity_table("speed", &runs))?;
    if let Some(p) = points.iter().find(|p| p.diverged) {
        return Err(CliError::numerical(format!(
            "run at {} m/s diverged",
            p.speed
        )));
    }
    Ok(RunOutput {
        summary: summary(&points)?,
        files: files.written().to_vec(),
    })
}

pub fn push(c: PushConfig, out: &Path) -> Result<RunOutput, CliError> {
    let report: PushReport = push_experiment(&c.scenario, &c.pushes)?;
    let mut files = Artifacts::new(out);
    files.write_json("push.json", &report)?;
    if let Some(trace) = &report.trace {
        files.write_csv("trace.csv", &trace_table(trace))?;
        files.write_csv("steps.csv", &steps_table(trace))?;
        files.write_csv("velocity.csv", &velocity_table("run", &[(0.0, trace)]))?;
    }
    if report.diverged {
        return Err(CliError::numerical("pushed run diverged"));
    }
    Ok(RunOutput {
        summary: summary(&report)?,
        files: files.written().to_vec(),
    })
}

pub fn maxspeed_table(speeds: &[ModeSpeed]) -> Table {
    let mut t = Table::new(&["mode", "max_command_speed", "max_ground_speed", "bounded"]);
    for s in speeds {
        t.push(vec![
            s.mode.name().into(),
            s.max_command_speed.into(),
            s.max_ground_speed.into(),
            s.bounded.into(),
        ]);
    }
    t
}

pub fn maxspeed(c: MaxSpeedConfig, out: &Path) -> Result<RunOutput, CliError> {
    let speeds = max_speed_search(&c.scenario, &c.modes, c.u_limit, c.direction)?;
    let mut files = Artifacts::new(out);
    files.write_json("maxspeed.json", &speeds)?;
    files.write_csv("maxspeed.csv", &maxspeed_table(&speeds))?;
    Ok(RunOutput {
        summary: summary(&speeds)?,
        files: files.written().to_vec(),
    })
}
