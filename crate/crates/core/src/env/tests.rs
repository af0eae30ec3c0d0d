use super::*;
use crate::rng::stream;
use approx::assert_relative_eq;

fn robot() -> Arc<Robot> {
    Arc::new(Robot::new(ArticulatedModel::default_quadruped(), &EnvConfig::default()).unwrap())
}

fn env(task: &str, dynamics: Dynamics, seed: u64) -> MotionEnv {
    MotionEnv::new(Arc::new(MotionTask::builtin(task)), robot(), EnvConfig::default(), dynamics, stream(seed, "env", 0))
        .unwrap()
}

fn zero() -> Vec<f64> {
    vec![0.0; ACTION_DIM]
}

#[test]
fn srb_matches_full_robot_mass() {
    let r = robot();
    assert_relative_eq!(r.srb.mass, r.full.total_mass(), epsilon = 1e-12);
    // nominal soles touch the ground with the base at its nominal height
    for f in r.nominal_feet {
        let z = r.full.nominal_base_height + r.com_offset.z + f.z;
        assert!(z.abs() < 2e-3, "{z}");
    }
}

#[test]
fn observation_dimensions() {
    let mut e = env("trot", Dynamics::Srb, 0);
    assert_eq!(e.reset().len(), 30);
    let mut e = env("backflip", Dynamics::Srb, 0);
    let o = e.reset();
    assert_eq!(o.len(), OBS_CORE_DIM);
    assert_relative_eq!(o[2], -1.0, epsilon = 1e-12);
    assert_eq!(&o[obs_layout::CONTACT], &[1.0; 4]);
    assert_eq!(o[obs_layout::PHASE.start], 0.0);
    assert_eq!(o[obs_layout::PHASE.start + 1], 1.0);
}

#[test]
fn zero_action_is_weight_split() {
    let e = env("yawspin", Dynamics::Srb, 0);
    let a = e.decode_action(&zero());
    let w = e.robot().weight();
    for f in a.grf {
        assert_relative_eq!(f, Vec3::new(0.0, 0.0, 0.25 * w), epsilon = 1e-12);
    }
    let big = e.decode_action(&[100.0; ACTION_DIM]);
    assert_relative_eq!(big.grf[0].x, 3.0 * w, epsilon = 1e-12);
    assert_eq!(big.residual[3].z, 0.15);
}

#[test]
fn srb_stands_still_before_takeoff() {
    // yawspin keeps every foot down until 0.5 s
    let mut e = env("yawspin", Dynamics::Srb, 0);
    let p0 = e.body_state().p;
    for _ in 0..40 {
        let r = e.step(&zero()).unwrap();
        assert!(!r.done);
    }
    let b = e.body_state();
    assert!((b.p - p0).norm() < 1e-6, "{:?}", b.p - p0);
    assert!(b.w.norm() < 1e-6);
}

#[test]
fn episode_ends_at_plan_duration() {
    let mut e = env("backflip", Dynamics::Srb, 0);
    let mut n = 0;
    loop {
        n += 1;
        let r = e.step(&zero()).unwrap();
        if r.done {
            if r.fault.is_none() {
                assert_eq!(n, 200);
            }
            break;
        }
    }
    assert!(e.step(&zero()).is_err());
    e.reset();
    assert_eq!(e.steps(), 0);
}

#[test]
fn deterministic_under_seed() {
    let run = |seed| {
        let mut e = env("trot", Dynamics::Srb, seed);
        let mut out = e.reset();
        for k in 0..50 {
            let a: Vec<f64> = (0..ACTION_DIM).map(|i| ((i * 7 + k) as f64 * 0.37).sin() * 0.3).collect();
            let r = e.step(&a).unwrap();
            out.extend(r.obs);
            if r.done {
                break;
            }
        }
        out
    };
    assert_eq!(run(4), run(4));
    assert_ne!(run(4), run(5));
}

#[test]
fn full_body_substeps_follow_lambda() {
    let e = env("trot", Dynamics::FullBody { lambda: 1.0 }, 0);
    assert_relative_eq!(e.sim_dt(), 0.002, epsilon = 1e-15);
    let e = env("trot", Dynamics::FullBody { lambda: 0.01 }, 0);
    assert!(e.sim_dt() <= 0.002 * 0.2575 + 1e-15);
    assert_eq!(CONTROL_DT / e.sim_dt(), (CONTROL_DT / e.sim_dt()).round());
}

#[test]
fn full_body_stands_with_zero_action() {
    // open loop: the legs' own dynamics slowly tip the real robot, so only a short window
    for lambda in [0.01, 1.0] {
        let mut e = env("yawspin", Dynamics::FullBody { lambda }, 0);
        let z0 = e.body_state().p.z;
        for _ in 0..15 {
            let r = e.step(&zero()).unwrap();
            assert!(r.fault.is_none(), "λ = {lambda}: {:?}", r.fault);
        }
        let b = e.body_state();
        assert!(b.rot.axis(2).z > 0.98, "λ = {lambda}");
        assert!((b.p.z - z0).abs() < 0.03, "λ = {lambda}: {} vs {z0}", b.p.z);
        assert!(e.history().is_full());
    }
}

#[test]
fn lambda_change_keeps_state() {
    let mut e = env("trot", Dynamics::FullBody { lambda: 0.2 }, 0);
    for _ in 0..5 {
        e.step(&zero()).unwrap();
    }
    let before = e.articulated_state().unwrap().clone();
    e.set_dynamics(Dynamics::FullBody { lambda: 0.3 }).unwrap();
    assert_eq!(e.articulated_state().unwrap(), &before);
    assert!(e.step(&zero()).is_ok());
}

#[test]
fn estimator_substitution() {
    let e = env("trot", Dynamics::FullBody { lambda: 1.0 }, 0);
    let mut o = e.observe();
    let est = Estimate { velocity: Vec3::new(0.1, 0.2, 0.3), contact_prob: [0.9, 0.2, 0.6, 0.4] };
    substitute_estimate(&mut o, &est);
    assert_eq!(&o[obs_layout::LIN_VEL], &[0.1, 0.2, 0.3]);
    assert_eq!(&o[obs_layout::CONTACT], &[1.0, 0.0, 1.0, 0.0]);
    assert_eq!(e.history().flatten().len(), estimator_input_dim(e.task()));
}

#[test]
fn fixed_command_is_used() {
    let mut e = env("trot", Dynamics::Srb, 0);
    let c = Command { vx: 0.5, vy: 0.0, yaw_rate: 0.2 };
    e.set_fixed_command(Some(c));
    let o = e.reset();
    assert_eq!(&o[obs_layout::COMMAND], &[0.5, 0.0, 0.2]);
}

#[test]
fn wall_footholds_land_on_wall() {
    let e = env("wall_turn", Dynamics::Srb, 0);
    // air phase 3 heads for the wall phase, body z pointing away from the wall
    let f = e.keyframe_foot(3, 4, 0);
    assert!((f.x - 1.0).abs() < 1e-9, "{f:?}");
    let g = e.keyframe_foot(1, 2, 0);
    assert!(g.z.abs() < 1e-9, "{g:?}");
}

#[test]
fn trunk_collision_faults_srb() {
    let mut e = env("backflip", Dynamics::Srb, 0);
    // pull down hard with every foot: the body is driven into the ground
    let mut a = zero();
    for leg in 0..4 {
        a[3 * leg + 2] = -20.0;
    }
    let mut fault = None;
    for _ in 0..200 {
        let r = e.step(&a).unwrap();
        if r.done {
            fault = r.fault;
            break;
        }
    }
    assert!(fault.is_some());
    assert!(!e.outcome().success);
}
