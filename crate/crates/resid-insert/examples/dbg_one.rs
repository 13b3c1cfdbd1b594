use nalgebra::{Quaternion, UnitQuaternion, Vector3};
use resid_insert::math::Pose;
use resid_insert::sim::*;

fn main() {
    let geom = SlotGeometry::default();
    let params = ComplianceParams::default();
    let q = UnitQuaternion::new_normalize(Quaternion::new(
        0.9999997723970419,
        -0.0006462462632598262,
        0.00019383403130825212,
        4.733835616920362e-10,
    ));
    let prev = Pose::new(Vector3::new(-0.001077, 0.000139, 0.029980), q);
    let cmd = Pose::new(Vector3::new(-0.000992, -0.000385, 0.029895), q);
    match solve_equilibrium(&geom, &params, &cmd, &prev) {
        Ok(eq) => println!(
            "OK residual={:.3e} passes={} pen={:.2e}",
            eq.residual, eq.sweeps, eq.max_penetration
        ),
        Err(e) => println!("ERR {e}"),
    }
}
