//! End-to-end propagation against analytic ground truth.

use vtforge_core::geometry::{polygon_area, Polygon};
use vtforge_core::scenegen::{gen_layout, gen_motion, MotionKind, MotionSpec, Scene};
use vtforge_core::textplace::PlacementConfig;
use vtforge_core::textprop::{
    filter_instances, propagate_deformation, propagate_flow, reconstruct_via_deformation, restore_projective,
    PropagatedInstance, PropagationConfig,
};
use vtforge_core::TextInstance;

fn scene(frames: usize) -> Scene {
    let layout = gen_layout(640, 480, &PlacementConfig::default(), 16).unwrap();
    assert!(!layout.is_empty());
    let kind: MotionKind = "projective:0.6,-0.4,0.1,0.002,0.000001,-0.0000008".parse().unwrap();
    gen_motion(layout, &MotionSpec::new(kind, frames, 640, 480)).unwrap()
}

fn max_vertex_error(a: &Polygon, b: &Polygon) -> f64 {
    a.vertices()
        .iter()
        .zip(b.vertices())
        .map(|(p, q)| p.dist(*q))
        .fold(0.0, f64::max)
}

fn worst_error(scene: &Scene, props: &[PropagatedInstance]) -> f64 {
    let gt = scene.ground_truth("v");
    let mut worst = 0.0f64;
    for rec in &gt.frames {
        for g in &rec.instances {
            let p = props.iter().find(|p| p.id == g.id).expect("instance kept");
            let geom = p.frames[rec.frame_index]
                .as_ref()
                .unwrap_or_else(|| panic!("id {} missing at frame {}", g.id, rec.frame_index));
            worst = worst.max(max_vertex_error(&geom.polygon, &g.polygon));
        }
    }
    worst
}

fn collinear_ok(p: &Polygon) -> bool {
    // a simple projective image of a convex quad stays a simple convex quad
    p.len() == 4 && p.is_convex() && polygon_area(p.vertices()).unwrap() > 0.0
}

#[test]
fn flow_closure_fifty_frames() {
    let s = scene(50);
    let cfg = PropagationConfig::default();
    let props = propagate_flow(&s.layout, &s.flows(), &cfg).unwrap();
    let props = filter_instances(props, &cfg, (640, 480), None);
    let worst = worst_error(&s, &props);
    assert!(worst < 1.5, "max vertex error {worst}");
}

#[test]
fn deformation_closure_fifty_frames() {
    let s = scene(50);
    let cfg = PropagationConfig::default();
    let props = propagate_deformation(&s.layout, &s.deformation(), &cfg).unwrap();
    let props = filter_instances(props, &cfg, (640, 480), None);
    let worst = worst_error(&s, &props);
    assert!(worst < 0.5, "max vertex error {worst}");
    for p in &props {
        for g in p.frames.iter().flatten() {
            assert!(collinear_ok(&g.polygon));
        }
    }
}

#[test]
fn restored_quads_are_exact_projective_images() {
    let s = scene(8);
    let seeds: Vec<Polygon> = s.layout.iter().map(|t: &TextInstance| t.polygon.clone()).collect();
    let raw = reconstruct_via_deformation(&seeds, &s.deformation(), 5).unwrap();
    let cfg = PropagationConfig::default();
    for (seed, track) in seeds.iter().zip(&raw) {
        for (k, moved) in track.frames.iter().enumerate() {
            let r = restore_projective(&track.source, moved, seed, &cfg.ransac).unwrap();
            let truth = seed.transform(&s.homographies[k]).unwrap();
            assert!(max_vertex_error(&r.polygon, &truth) < 1e-3);
        }
    }
}

#[test]
fn noisy_flow_stays_close() {
    let layout = gen_layout(320, 240, &PlacementConfig::default(), 16).unwrap();
    let mut spec = MotionSpec::new(MotionKind::Translate { dx: 1.5, dy: 0.5 }, 10, 320, 240);
    spec.flow_noise_sigma = 0.3;
    spec.seed = 4;
    let s = gen_motion(layout, &spec).unwrap();
    let cfg = PropagationConfig::default();
    let props = filter_instances(propagate_flow(&s.layout, &s.flows(), &cfg).unwrap(), &cfg, (320, 240), None);
    assert!(worst_error(&s, &props) < 1.5);
}
