use resid_insert::math::Pose;
use resid_insert::sim::*;

fn main() {
    let geom = SlotGeometry::default();
    let params = ComplianceParams::default();
    let mut rng = resid_insert::rng::substream(17, "solver-residual", 0);
    use rand::Rng;
    let mut prev = Pose::from_translation(0.0, 0.0, geom.ram_height + 0.001);
    for i in 0..200 {
        let cmd = Pose::from_translation(
            (rng.gen::<f64>() - 0.5) * 0.006,
            (rng.gen::<f64>() - 0.5) * 0.006,
            geom.ram_height + (rng.gen::<f64>() - 0.7) * 0.004,
        );
        let eq = match solve_equilibrium(&geom, &params, &cmd, &prev) {
            Ok(eq) => eq,
            Err(e) => { println!("i={i} ERROR {e} cmd=({:+.4},{:+.4},{:+.4}) prev=({:+.4},{:+.4},{:+.4})", cmd.t.x*1e3, cmd.t.y*1e3, (cmd.t.z-geom.ram_height)*1e3, prev.t.x*1e3, prev.t.y*1e3, (prev.t.z-geom.ram_height)*1e3); return; }
        };
        if eq.residual > 1e-8 || eq.sweeps >= 190 {
            println!("i={i} residual={:.3e} passes={} pen={:.2e} cmd=({:+.4},{:+.4},{:+.4}) act=({:+.4},{:+.4},{:+.4})",
                eq.residual, eq.sweeps, eq.max_penetration,
                cmd.t.x*1e3, cmd.t.y*1e3, (cmd.t.z-geom.ram_height)*1e3,
                eq.pose.t.x*1e3, eq.pose.t.y*1e3, (eq.pose.t.z-geom.ram_height)*1e3);
        }
        prev = eq.pose;
    }
    println!("done");
}
