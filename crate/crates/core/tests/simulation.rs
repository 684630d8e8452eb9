use mlip::gains::invariant_box;
use mlip::orbit::p1_orbit;
use mlip::sim::{
    max_speed_search, push_experiment, simulate, velocity_sweep, CommandProfile, ForceEvent,
    GainSetting, Outcome, Plane, PlantSpec, Scenario, StepTrace, MAX_SATURATED_STEPS,
};
use mlip::traj::{fit_fa_com, zmp_reference, DEFAULT_BEZIER_DEGREE};
use mlip::{compose_s2s_at_fa_end, Domain, GaitParams, ReducedState, WalkingMode};

fn error_norms(trace: &StepTrace) -> Vec<f64> {
    trace.steps.iter().map(|s| s.error().norm()).collect()
}

fn perturbed(gains: GainSetting, seed: u64) -> Scenario {
    let mut s = Scenario::new(GaitParams::sagittal(), 12);
    s.gains = gains;
    s.command = CommandProfile::constant(1.0);
    s.seed = seed;
    s.random_initial_error = [0.05, 0.1];
    s
}

#[test]
fn exact_plant_has_no_residual() {
    let mut s = Scenario::new(GaitParams::sagittal(), 40);
    s.command = CommandProfile::preamble_then_ramp(2.0, 1.5, 2.0);
    s.random_initial_error = [0.03, 0.05];
    let trace = simulate(&s).unwrap();
    assert!(trace.steps.iter().all(|r| r.w.norm() <= 1e-7));
}

#[test]
fn deadbeat_converges_by_step_three() {
    for seed in 0..20 {
        let trace = simulate(&perturbed(GainSetting::Deadbeat, seed)).unwrap();
        let e = error_norms(&trace);
        assert!(e[0] > 1e-3, "seed {seed} drew a negligible error");
        assert!(e[3..].iter().all(|&x| x <= 1e-6), "seed {seed}: {e:?}");
    }
}

#[test]
fn lqr_decays_at_closed_loop_rate() {
    for seed in 0..20 {
        let trace = simulate(&perturbed(GainSetting::default(), seed)).unwrap();
        let e = error_norms(&trace);
        let ratio = (e[10] / e[2]).powf(1.0 / 8.0);
        assert!(
            ratio <= trace.gains.rho_cl + 0.05,
            "seed {seed}: ratio {ratio}, rho {}",
            trace.gains.rho_cl
        );
        // the error shrinks every step
        assert!(
            e.windows(2).take(10).all(|w| w[1] < w[0]),
            "seed {seed}: {e:?}"
        );
    }
}

#[test]
fn identical_seed_is_bit_identical() {
    let mut s = perturbed(GainSetting::default(), 42);
    s.plant = PlantSpec::mismatched_height(0.78);
    s.disturbances.push(ForceEvent {
        t_start: 1.0,
        duration: 0.5,
        magnitude: 1.5,
    });
    let a = simulate(&s).unwrap();
    let b = simulate(&s).unwrap();
    assert_eq!(a, b);
    s.seed = 43;
    assert_ne!(simulate(&s).unwrap().steps[0].x, a.steps[0].x);
}

#[test]
fn each_step_takes_one_period() {
    let s = Scenario::new(GaitParams::sagittal(), 30);
    let trace = simulate(&s).unwrap();
    let period = s.params.step_duration();
    for (k, r) in trace.steps.iter().enumerate() {
        assert!((r.t - k as f64 * period).abs() < 1e-12);
    }
    assert!((trace.samples.last().unwrap().t - s.total_time()).abs() < 1e-9);
    assert!(trace.samples.windows(2).all(|w| w[1].t > w[0].t));
}

#[test]
fn steady_state_loop_closes() {
    let mut s = Scenario::new(GaitParams::sagittal(), 20);
    s.command = CommandProfile::constant(1.0);
    let trace = simulate(&s).unwrap();
    let period = s.params.step_duration();
    let k = 19;
    let in_step: Vec<_> = trace
        .samples
        .iter()
        .filter(|x| x.t > k as f64 * period - 1e-9 && x.t <= (k + 1) as f64 * period + 1e-9)
        .collect();
    let start = trace.steps[k].x;
    let end = trace.final_state;
    assert!((start.p - end.p).abs() <= 1e-6 && (start.momentum - end.momentum).abs() <= 1e-6);
    assert!(in_step.last().unwrap().p_zmp.abs() <= 1e-9);
}

#[test]
fn zmp_channel_matches_reference() {
    let mut s = Scenario::new(GaitParams::sagittal(), 8);
    s.command = CommandProfile::preamble_then_ramp(0.5, 1.0, 1.0);
    s.initial_error = [0.02, -0.05];
    let trace = simulate(&s).unwrap();
    let period = s.params.step_duration();
    let mut compared = 0;
    for x in &trace.samples {
        let k = ((x.t / period) - 1e-9).floor() as usize;
        let t_in_step = (x.t - k as f64 * period).clamp(0.0, period);
        let r = zmp_reference(&s.params, x.u_cmd, t_in_step).unwrap();
        if r.domain == x.domain {
            assert!(
                (r.position - x.p_zmp).abs() <= 1e-8,
                "t = {}: {} vs {}",
                x.t,
                r.position,
                x.p_zmp
            );
            compared += 1;
        }
    }
    // only samples sitting on a rounded domain boundary are skipped
    assert!(compared + 3 * s.n_steps >= trace.samples.len());
}

#[test]
fn bezier_lands_on_simulated_fa_end() {
    let params = GaitParams::sagittal();
    let mut s = Scenario::new(params, 6);
    s.command = CommandProfile::constant(1.0);
    let trace = simulate(&s).unwrap();
    let target = mlip::orbit::p1_orbit(&compose_s2s_at_fa_end(&params).unwrap(), 1.0)
        .unwrap()
        .x_star;

    // FA boundaries of the last step, from the trace
    let t_fa_start = 5.0 * params.step_duration() + params.t_oa;
    let fa: Vec<_> = trace
        .samples
        .iter()
        .filter(|x| {
            x.domain == Domain::Fa
                && x.t > t_fa_start - 1e-9
                && x.t < t_fa_start + params.t_fa + 1e-9
        })
        .collect();
    let end = fa.last().unwrap();
    assert!((end.p - target.p).abs() <= 1e-8 && (end.momentum - target.momentum).abs() <= 1e-8);

    // FA start state is right after the leg switch: OA end minus (u + l)
    let oa_end = trace
        .samples
        .iter()
        .rfind(|x| x.domain == Domain::Oa && x.t < t_fa_start + 1e-9)
        .unwrap();
    let x_a = oa_end.p - oa_end.u_cmd - params.zmp_travel();
    let v_a = oa_end.momentum / params.z0;
    let curve = fit_fa_com(
        x_a,
        v_a,
        target,
        params.z0,
        params.t_fa,
        DEFAULT_BEZIER_DEGREE,
    )
    .unwrap();
    assert!((curve.eval(1.0) - end.p).abs() <= 1e-8);
    assert!((curve.deriv(1.0) - end.momentum / params.z0).abs() <= 1e-8);
}

#[test]
fn mismatched_plant_stays_in_box() {
    let mut s = Scenario::new(GaitParams::sagittal(), 80);
    s.plant = PlantSpec::mismatched_height(0.78);
    s.command = CommandProfile::constant(0.8);
    let trace = simulate(&s).unwrap();
    assert!(!trace.diverged());
    let ibox = invariant_box(&trace.closed_loop(), &trace.disturbance_bound(0)).unwrap();
    assert!(ibox.e_max.amax() > 0.0);
    assert!(trace
        .steps
        .iter()
        .all(|r| ibox.contains(&r.error(), 0.05, 1e-9)));
}

#[test]
fn sweep_tracks_commanded_speeds() {
    let base = Scenario::new(GaitParams::sagittal(), 60);
    for point in velocity_sweep(&base, &[0.0, 1.0, -0.75]).unwrap() {
        assert!(!point.diverged);
        assert!((point.mean_velocity - point.speed).abs() <= 1e-6);
    }
    let trace = velocity_sweep(&base, &[0.0])
        .unwrap()
        .remove(0)
        .trace
        .unwrap();
    assert!(trace.steps.iter().rev().take(10).all(|r| r.u.abs() <= 1e-9));
}

#[test]
fn zero_push_changes_nothing() {
    let mut s = Scenario::new(GaitParams::sagittal(), 20);
    s.command = CommandProfile::constant(0.5);
    let quiet = simulate(&s).unwrap();
    s.disturbances.push(ForceEvent {
        t_start: 2.0,
        duration: 0.5,
        magnitude: 0.0,
    });
    let pushed = simulate(&s).unwrap();
    assert_eq!(quiet.samples, pushed.samples);
    assert_eq!(quiet.steps, pushed.steps);
}

#[test]
fn push_recovery_and_failure() {
    let mut base = Scenario::new(GaitParams::sagittal(), 60);
    base.gains = GainSetting::Deadbeat;
    base.command = CommandProfile::constant(1.0);
    let pushes = [
        ForceEvent {
            t_start: 15.0,
            duration: 0.5,
            magnitude: 1.5,
        },
        ForceEvent {
            t_start: 20.0,
            duration: 0.5,
            magnitude: -1.5,
        },
    ];
    let report = push_experiment(&base, &pushes).unwrap();
    assert!(report.all_recovered());
    assert!(report
        .recoveries
        .iter()
        .all(|r| r.steps_to_recovery.unwrap() <= 3));

    // with a tight step limit a hard shove saturates the placement and the walker falls
    base.step_size_limit = Some(0.6);
    let shove = [ForceEvent {
        t_start: 15.0,
        duration: 0.5,
        magnitude: 8.0,
    }];
    let report = push_experiment(&base, &shove).unwrap();
    let trace = report.trace.unwrap();
    assert!(matches!(trace.outcome, Outcome::Diverged { .. }));
    assert!(report.recoveries[0].recovered_step.is_none());
    assert!(trace.steps.last().unwrap().clipped);
}

#[test]
fn persistent_saturation_is_a_fall() {
    // a slow pendulum drifts for many steps before the position check would fire
    let params = GaitParams {
        g: 1.0,
        ..GaitParams::sagittal()
    };
    let mut s = Scenario::new(params, 40);
    s.command = CommandProfile::constant(1.0);
    s.step_size_limit = Some(0.49);
    let trace = simulate(&s).unwrap();
    match &trace.outcome {
        Outcome::Diverged { step, reason, .. } => {
            assert_eq!(*step, MAX_SATURATED_STEPS);
            assert!(reason.contains("saturated"), "{reason}");
        }
        other => panic!("expected a fall, got {other:?}"),
    }
    assert!(trace.steps.iter().all(|r| r.clipped));
}

#[test]
fn unlimited_steps_never_bind() {
    let base = Scenario::new(GaitParams::sagittal(), 50);
    let r = max_speed_search(&base, &[WalkingMode::HeelToToe], f64::INFINITY, 1.0).unwrap();
    assert!(!r[0].bounded);
}

#[test]
fn toe_to_heel_backward_mirrors_heel_to_toe() {
    let base = Scenario::new(GaitParams::sagittal(), 50);
    let forward = max_speed_search(&base, &[WalkingMode::HeelToToe], 0.6, 1.0).unwrap()[0];
    let backward = max_speed_search(&base, &[WalkingMode::ToeToHeel], 0.6, -1.0).unwrap()[0];
    assert_eq!(forward.max_command_speed, backward.max_command_speed);
    assert!((forward.max_ground_speed - backward.max_ground_speed).abs() < 1e-12);

    let mut a = base.clone();
    a.command = CommandProfile::constant(0.8);
    let mut b = base.clone();
    b.params = b.params.with_mode(WalkingMode::ToeToHeel);
    b.command = CommandProfile::constant(-0.8);
    let (ta, tb) = (simulate(&a).unwrap(), simulate(&b).unwrap());
    for (x, y) in ta.steps.iter().zip(&tb.steps) {
        assert!((x.u + y.u).abs() < 1e-12);
    }
}

#[test]
fn lateral_period_two_alternates() {
    let mut s = Scenario::new(GaitParams::lateral(), 20);
    s.plane = Plane::Lateral { width: 0.3 };
    s.initial_error = [0.02, 0.0];
    let trace = simulate(&s).unwrap();
    let last = &trace.steps[trace.steps.len() - 2..];
    assert!((last[0].u + last[1].u).abs() < 1e-9);
    assert!((last[0].u.abs() - 0.3).abs() < 1e-9);
    assert!(last.iter().all(|r| r.error().norm() < 1e-8));
    // on the orbit the state alternates but does not drift
    let p1 = p1_orbit(&trace.model, 0.0).unwrap();
    assert_eq!(p1.u_star, 0.0);
    assert_ne!(last[0].x_star, ReducedState::default());
}
