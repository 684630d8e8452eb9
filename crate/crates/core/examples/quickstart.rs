//! Orbit, LQR gain and invariant box for the default sagittal gait.

use mlip::gains::{dlqr, invariant_box, DisturbanceBound};
use mlip::orbit::p1_orbit;
use mlip::{compose_s2s, GaitParams, WalkingMode};
use nalgebra::Matrix2;

fn main() -> Result<(), mlip::Error> {
    let params = GaitParams::sagittal().with_mode(WalkingMode::HeelToToe);
    let s2s = compose_s2s(&params)?;
    let orbit = p1_orbit(&s2s, 1.0)?; // u* = v_d T
    let gain = dlqr(&s2s.a_m, &s2s.b_m, &Matrix2::identity(), 1.0)?;
    let a_cl = gain.closed_loop(&s2s.a_m, &s2s.b_m);
    let ibox = invariant_box(&a_cl, &DisturbanceBound::new(0.002, 0.01)?)?;
    println!(
        "u* = {:.4}, x* = ({:.4}, {:.4})",
        orbit.u_star, orbit.x_star.p, orbit.x_star.momentum
    );
    println!(
        "K = ({:.4}, {:.4}), rho = {:.4}",
        gain.k[0], gain.k[1], gain.rho_cl
    );
    println!("e_max = ({:.2e}, {:.2e})", ibox.e_max[0], ibox.e_max[1]);
    Ok(())
}
