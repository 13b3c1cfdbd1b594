use nalgebra::Vector2;
use resid_insert::agent::VisualSensor;
use resid_insert::harness::{build_trial_env, ExperimentConfig};
use resid_insert::math::Pose;
use resid_insert::rng::substream;

fn main() {
    for (px, dz) in [
        (0.5, 0.00005),
        (0.5, 0.00002),
        (0.5, 0.00001),
        (0.3, 0.00002),
        (1.0, 0.00002),
    ] {
        let mut cfg = ExperimentConfig::default();
        cfg.vision.detail_pixel_sigma = px;
        cfg.vision.depth_sigma = dz;
        let env = build_trial_env(&cfg, Vector2::zeros(), Vector2::zeros());
        let start = Pose::from_translation(0.0015, -0.001, env.hover_nominal.t.z);
        let truth = (
            start.t.x - env.goal.t.x,
            start.t.y - env.goal.t.y,
            start.t.z - env.goal.t.z,
        );
        let mut rng = substream(42, "vis-noise", 0);
        let n = 400;
        let (mut sx, mut sy, mut sz, mut sx2, mut sy2, mut sz2) = (0.0, 0.0, 0.0, 0.0, 0.0, 0.0);
        for _ in 0..n {
            let r = env.detail_rig.measure(&start, &mut rng);
            let ex = r.ee.t_err.x - truth.0;
            let ey = r.ee.t_err.y - truth.1;
            let ez = r.ee.t_err.z - truth.2;
            sx += ex; sy += ey; sz += ez;
            sx2 += ex * ex; sy2 += ey * ey; sz2 += ez * ez;
        }
        let nf = n as f64;
        println!(
            "px={px:4} dz={dz:7}: bias=({:+.3},{:+.3},{:+.3})mm sigma=({:.3},{:.3},{:.3})mm",
            sx / nf * 1e3, sy / nf * 1e3, sz / nf * 1e3,
            ((sx2 / nf) - (sx / nf).powi(2)).sqrt() * 1e3,
            ((sy2 / nf) - (sy / nf).powi(2)).sqrt() * 1e3,
            ((sz2 / nf) - (sz / nf).powi(2)).sqrt() * 1e3,
        );
    }
}
