//! Data bundles behind the phase portrait, tracking, push and top-speed
//! figures. Every bundle is a pure function of the figure config.

use std::path::Path;

use mlip::orbit::{p1_orbit, p2_orbit_from_width, phase_portrait, OrbitSpec, PortraitSample};
use mlip::sim::{
    max_speed_search, push_experiment, simulate, velocity_sweep, CommandProfile, ForceEvent, Plane,
    PlantSpec, Scenario, StepTrace,
};
use mlip::traj::{reference_step, FootPitchTargets, DEFAULT_BEZIER_DEGREE};
use mlip::{compose_s2s, GaitParams, WalkingMode};

use crate::commands::{maxspeed_table, sweep_table, velocity_table};
use crate::config::{self, FigureConfig, MaxSpeedConfig, PushConfig, SweepConfig};
use crate::output::{reference_table, Artifacts, Cell, Table};
use crate::{CliError, RunOutput};

const PORTRAIT_HEADER: [&str; 6] = ["key", "t", "domain", "p", "L", "p_zmp"];

fn push_portrait(table: &mut Table, key: f64, samples: &[PortraitSample]) {
    for s in samples {
        table.push(vec![
            key.into(),
            s.t.into(),
            s.domain.label().into(),
            s.p.into(),
            s.momentum.into(),
            s.p_zmp.into(),
        ]);
    }
}

fn p1_portrait(params: &GaitParams, v: f64, dt: f64) -> Result<Vec<PortraitSample>, CliError> {
    let orbit = p1_orbit(&compose_s2s(params)?, v)?;
    Ok(phase_portrait(params, &OrbitSpec::P1(orbit), dt))
}

fn with_step_time(params: &GaitParams, total: f64) -> GaitParams {
    // keep the 40/40/20 split of FA, UA and OA
    let scale = total / params.step_duration();
    GaitParams {
        t_fa: params.t_fa * scale,
        t_ua: params.t_ua * scale,
        t_oa: params.t_oa * scale,
        ..*params
    }
}

fn mode_code(mode: WalkingMode) -> f64 {
    match mode {
        WalkingMode::HeelToToe => 1.0,
        WalkingMode::FlatFooted => 0.0,
        WalkingMode::ToeToHeel => -1.0,
    }
}

/// Samples of the last `steps` steps of a run, with time measured from
/// the start of that window.
fn last_steps(table: &mut Table, key: f64, trace: &StepTrace, steps: usize) {
    let period = trace.step_time();
    let start = (trace.steps.len().saturating_sub(steps)) as f64 * period;
    for s in trace.samples.iter().filter(|s| s.t > start + 1e-9) {
        table.push(vec![
            key.into(),
            (s.t - start).into(),
            s.domain.label().into(),
            s.p.into(),
            s.momentum.into(),
            s.p_zmp.into(),
        ]);
    }
}

fn phase_orbit(files: &mut Artifacts, c: &FigureConfig) -> Result<(), CliError> {
    let dt = c.portrait_dt;
    let mut a = Table::new(&PORTRAIT_HEADER);
    for &v in &c.orbit_speeds {
        push_portrait(&mut a, v, &p1_portrait(&c.sagittal, v, dt)?);
    }
    files.write_csv("fig4/a_heel_to_toe_speeds.csv", &a)?;

    let mut b = Table::new(&PORTRAIT_HEADER);
    for mode in [WalkingMode::HeelToToe, WalkingMode::FlatFooted] {
        push_portrait(
            &mut b,
            mode_code(mode),
            &p1_portrait(&c.sagittal.with_mode(mode), 2.0, dt)?,
        );
    }
    files.write_csv("fig4/b_mode_comparison.csv", &b)?;

    let mut t2h = Table::new(&PORTRAIT_HEADER);
    let base = c.sagittal.with_mode(WalkingMode::ToeToHeel);
    for &total in &c.step_times {
        let params = with_step_time(&base, total);
        push_portrait(
            &mut t2h,
            total,
            &p1_portrait(&params, c.toe_to_heel_speed, dt)?,
        );
    }
    files.write_csv("fig4/c_toe_to_heel_step_times.csv", &t2h)?;

    let mut d = Table::new(&PORTRAIT_HEADER);
    let lateral = compose_s2s(&c.lateral)?;
    for &w in &c.widths {
        let orbit = p2_orbit_from_width(&lateral, 0.0, w)?;
        push_portrait(
            &mut d,
            w,
            &phase_portrait(&c.lateral, &OrbitSpec::P2(orbit), dt),
        );
    }
    files.write_csv("fig4/d_lateral_widths.csv", &d)
}

fn realized_orbits(files: &mut Artifacts, c: &FigureConfig) -> Result<(), CliError> {
    // key 0: model orbit, key 1: mismatched plant at steady state
    let mut sag = Table::new(&PORTRAIT_HEADER);
    push_portrait(
        &mut sag,
        0.0,
        &p1_portrait(&c.sagittal, 2.0, c.portrait_dt)?,
    );
    let mut s = Scenario::new(c.sagittal, 60);
    s.plant = PlantSpec::mismatched_height(c.plant_z0);
    s.command = CommandProfile::constant(2.0);
    s.seed = c.seed;
    let trace = simulate(&s)?;
    last_steps(&mut sag, 1.0, &trace, 1);
    files.write_csv("fig5/c_sagittal_2mps.csv", &sag)?;

    let width = c.widths.first().copied().unwrap_or(0.3);
    let mut lat = Table::new(&PORTRAIT_HEADER);
    let orbit = p2_orbit_from_width(&compose_s2s(&c.lateral)?, 0.0, width)?;
    push_portrait(
        &mut lat,
        0.0,
        &phase_portrait(&c.lateral, &OrbitSpec::P2(orbit), c.portrait_dt),
    );
    let mut s = Scenario::new(c.lateral, 60);
    s.plant = PlantSpec::mismatched_height(c.plant_z0);
    s.plane = Plane::Lateral { width };
    s.seed = c.seed;
    let trace = simulate(&s)?;
    last_steps(&mut lat, 1.0, &trace, 2);
    files.write_csv("fig5/d_lateral.csv", &lat)?;

    let targets = FootPitchTargets::for_mode(c.sagittal.mode);
    let rows = reference_step(
        &c.sagittal,
        2.0,
        DEFAULT_BEZIER_DEGREE,
        &targets,
        c.portrait_dt,
    )?;
    files.write_csv("fig5/reference_2mps.csv", &reference_table(&rows))
}

fn tracking(files: &mut Artifacts, c: &FigureConfig) -> Result<(), CliError> {
    let mut sweep: SweepConfig = config::load(None, config::SWEEP, &[])?;
    sweep.scenario.seed = c.seed;
    sweep.scenario.plant = PlantSpec::mismatched_height(c.plant_z0);
    let points = velocity_sweep(&sweep.scenario, &sweep.speeds)?;
    let runs: Vec<_> = points
        .iter()
        .filter_map(|p| p.trace.as_ref().map(|t| (p.speed, t)))
        .collect();
    files.write_csv("fig6/summary.csv", &sweep_table(&points))?;
    files.write_csv("fig6/velocity.csv", &velocity_table("speed", &runs))?;
    let mut portrait = Table::new(&PORTRAIT_HEADER);
    for (speed, trace) in &runs {
        last_steps(&mut portrait, *speed, trace, 1);
    }
    files.write_csv("fig6/steady_state_portrait.csv", &portrait)
}

fn push_recovery(files: &mut Artifacts, c: &FigureConfig) -> Result<(), CliError> {
    let mut push: PushConfig = config::load(None, config::PUSH, &[])?;
    push.scenario.seed = c.seed;
    push.scenario.plant = PlantSpec::mismatched_height(c.plant_z0);
    let mut summary = Table::new(&[
        "speed",
        "push",
        "t_start",
        "magnitude",
        "first_step_after",
        "steps_to_recovery",
    ]);
    let mut reports = Vec::new();
    for speed in [1.0, 0.5, 0.75] {
        let scenario = Scenario {
            command: CommandProfile::constant(speed),
            ..push.scenario.clone()
        };
        let report = push_experiment(&scenario, &push.pushes)?;
        for (i, r) in report.recoveries.iter().enumerate() {
            summary.push(vec![
                speed.into(),
                i.into(),
                r.push.t_start.into(),
                r.push.magnitude.into(),
                r.first_step_after.into(),
                r.steps_to_recovery.map_or(Cell::Int(-1), |n| n.into()),
            ]);
        }
        reports.push((speed, report));
    }
    let runs: Vec<_> = reports
        .iter()
        .filter_map(|(speed, r)| r.trace.as_ref().map(|t| (*speed, t)))
        .collect();
    files.write_csv("fig7/summary.csv", &summary)?;
    files.write_csv("fig7/velocity.csv", &velocity_table("speed", &runs))?;
    files.write_csv(
        "fig7/force.csv",
        &force_table(&push.pushes, push.scenario.total_time(), 0.01),
    )
}

fn force_table(pushes: &[ForceEvent], total: f64, dt: f64) -> Table {
    let mut t = Table::new(&["t", "force"]);
    let n = (total / dt).round() as usize;
    for i in 0..=n {
        let time = i as f64 * dt;
        let f: f64 = pushes
            .iter()
            .filter(|p| time >= p.t_start && time < p.t_end())
            .map(|p| p.magnitude)
            .sum();
        t.push(vec![time.into(), f.into()]);
    }
    t
}

fn top_speed(files: &mut Artifacts, c: &FigureConfig) -> Result<(), CliError> {
    let mut m: MaxSpeedConfig = config::load(None, config::MAXSPEED, &[])?;
    m.scenario.seed = c.seed;
    m.scenario.params = c.sagittal;
    let speeds = max_speed_search(&m.scenario, &m.modes, m.u_limit, m.direction)?;
    files.write_csv("fig8/summary.csv", &maxspeed_table(&speeds))?;

    // Both modes at the heel-to-toe top ground speed; flat-footed cannot keep up.
    let Some(top) = speeds.iter().find(|s| s.mode == WalkingMode::HeelToToe) else {
        return Ok(());
    };
    let mut velocity = Table::new(&["mode", "k", "t", "v_d", "v_ground", "clipped"]);
    let mut portrait = Table::new(&PORTRAIT_HEADER);
    for mode in [WalkingMode::HeelToToe, WalkingMode::FlatFooted] {
        let params = c.sagittal.with_mode(mode);
        let period = params.step_duration();
        let command = top.max_ground_speed - params.zmp_travel() / period;
        let scenario = Scenario {
            params,
            command: CommandProfile::preamble_then_ramp(0.0, command, 2.0),
            step_size_limit: Some(m.u_limit),
            ..m.scenario.clone()
        };
        let trace = simulate(&scenario)?;
        for r in &trace.steps {
            velocity.push(vec![
                mode_code(mode).into(),
                r.k.into(),
                r.t.into(),
                r.v_d.into(),
                ((r.u + params.zmp_travel()) / period).into(),
                r.clipped.into(),
            ]);
        }
        last_steps(&mut portrait, mode_code(mode), &trace, 3);
    }
    files.write_csv("fig8/velocity.csv", &velocity)?;
    files.write_csv("fig8/portrait.csv", &portrait)
}

pub fn figure(c: FigureConfig, out: &Path) -> Result<RunOutput, CliError> {
    if !(c.portrait_dt > 0.0) {
        return Err(CliError::schema(format!(
            "portrait_dt must be positive, got {}",
            c.portrait_dt
        )));
    }
    let mut files = Artifacts::new(out);
    phase_orbit(&mut files, &c)?;
    realized_orbits(&mut files, &c)?;
    tracking(&mut files, &c)?;
    push_recovery(&mut files, &c)?;
    top_speed(&mut files, &c)?;
    let written: Vec<String> = files
        .written()
        .iter()
        .map(|p| p.strip_prefix(out).unwrap_or(p).display().to_string())
        .collect();
    Ok(RunOutput {
        summary: serde_json::json!({ "files": written }),
        files: files.written().to_vec(),
    })
}
