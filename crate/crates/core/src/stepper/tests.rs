use approx::assert_abs_diff_eq;

use super::*;
use crate::obstacles::Obstacle;
use crate::reaction::oracle_solve_reaction;

fn sphere(center: Vec3, radius: f64) -> Scene {
    Scene::new(vec![Obstacle::sphere(center, radius).unwrap()], 0.0).unwrap()
}

fn straight_config(dt: f64, t0: f64, horizon: f64, dir: Vec3, law: GrowthLaw, scene: Scene) -> SimConfig {
    let cells = (t0 / dt).round() as usize;
    SimConfig::new(dt, horizon, t0, InitialCurve::straight(dir, cells), law, scene)
}

#[test]
fn vertical_seed_on_empty_scene() {
    let cfg = straight_config(0.1, 1.0, 2.0, Vec3::z(), GrowthLaw::zero(0.0), Scene::empty());
    let s = init_state(&cfg).unwrap();
    assert_eq!(s.grown_positions().len(), 11);
    assert!(s.tangents().iter().all(|k| *k == Vec3::z()));
    assert_abs_diff_eq!(s.tip_position(), Vec3::new(0.0, 0.0, 1.0), epsilon = 1e-12);
    assert_eq!(s.grid().len(), 21);
}

#[test]
fn tip_perpendicular_on_sphere_is_initial_breakdown() {
    let cfg = straight_config(0.1, 1.0, 2.0, Vec3::z(), GrowthLaw::zero(0.0), sphere(Vec3::new(0.0, 0.0, 1.5), 0.5));
    assert_eq!(init_state(&cfg), Err(StepError::InitialBreakdown));
}

#[test]
fn seed_through_obstacle_is_rejected() {
    let cfg = straight_config(0.1, 1.0, 2.0, Vec3::z(), GrowthLaw::zero(0.0), sphere(Vec3::new(0.1, 0.0, 0.5), 0.2));
    assert!(matches!(init_state(&cfg), Err(StepError::InitialPenetration(_))));
    let cfg = straight_config(0.1, 1.0, 2.0, Vec3::z(), GrowthLaw::zero(0.0), sphere(Vec3::new(0.0, 0.0, -0.5), 0.5));
    assert!(matches!(init_state(&cfg), Err(StepError::InitialPenetration(_))));
}

#[test]
fn off_grid_start_is_rejected() {
    let cfg = straight_config(0.1, 1.0, 2.0, Vec3::z(), GrowthLaw::zero(0.0), Scene::empty());
    let mut bad = cfg.clone();
    bad.t0 = 0.95;
    assert!(matches!(init_state(&bad), Err(StepError::InvalidConfig(_))));
    let mut bad = cfg;
    bad.dt = 0.0;
    assert!(matches!(init_state(&bad), Err(StepError::InvalidConfig(_))));
}

#[test]
fn zero_law_is_pure_elongation() {
    let dir = Vec3::new(1.0, 2.0, 2.0) / 3.0;
    let cfg = straight_config(0.05, 0.5, 1.0, dir, GrowthLaw::zero(1.0), Scene::empty());
    let s = init_state(&cfg).unwrap();
    let (next, events) = step(&s, &cfg).unwrap();
    assert!(events.is_empty());
    assert_eq!(next.tip(), s.tip() + 1);
    assert_eq!(next.tangents(), s.tangents());
    assert_eq!(next.positions(), s.positions());
    assert_abs_diff_eq!(next.tip_position() - s.tip_position(), dir * 0.05, epsilon = 1e-15);
}

#[test]
fn gravitropic_step_bends_upward() {
    let cfg = straight_config(0.05, 1.0, 2.0, Vec3::x(), GrowthLaw::gravitropic(1.0, 1.0), Scene::empty());
    let s = init_state(&cfg).unwrap();
    let (next, _) = step(&s, &cfg).unwrap();
    for i in 0..next.grid().len() {
        assert!(next.tangents()[i].z > s.tangents()[i].z, "cell {i}");
    }
    next.check_invariants().unwrap();
}

#[test]
fn free_steps_match_pure_growth_bitwise() {
    let cfg = straight_config(0.02, 0.2, 1.0, Vec3::new(1.0, 0.0, 1.0).normalize(), GrowthLaw::gravitropic(0.7, 1.3), Scene::empty());
    let traj = run(&cfg).unwrap();
    assert_eq!(traj.terminal, Terminal::HorizonReached);
    for w in traj.frames.windows(2) {
        let r = w[0].reaction.as_ref().unwrap();
        assert!(r.contacts.is_empty());
        assert_eq!(r.solution.energy, 0.0);
        assert!(r.solution.omega.iter().all(|v| v.iter().all(|x| x.to_bits() == 0)));
        let pure = free_step(&w[0].state, &cfg.law, cfg.dt).unwrap();
        assert_eq!(pure, w[1].state);
    }
}

#[test]
fn straight_run_to_horizon() {
    let cfg = straight_config(0.01, 0.1, 1.0, Vec3::z(), GrowthLaw::zero(0.0), Scene::empty());
    let traj = run(&cfg).unwrap();
    assert_eq!(traj.terminal, Terminal::HorizonReached);
    assert_eq!(traj.frames.len(), 91);
    let last = &traj.frames.last().unwrap().state;
    assert!(last.at_horizon());
    assert_abs_diff_eq!(last.tip_position(), Vec3::new(0.0, 0.0, 1.0), epsilon = 1e-12);
    assert!(traj.events.iter().all(|e| e.kind != EventKind::ContactOnset));
    assert_eq!(traj.events.last().unwrap().kind, EventKind::HorizonReached);
    for f in &traj.frames {
        let grown: f64 = f.state.grown_positions().windows(2).map(|w| (w[1] - w[0]).norm()).sum();
        assert!((grown - f.state.t()).abs() <= 1e-12);
    }
}

#[test]
fn breakdown_report_examples() {
    let ds = 0.1;
    let cfg = straight_config(ds, 1.0, 2.0, Vec3::z(), GrowthLaw::zero(0.0), sphere(Vec3::new(0.0, 0.0, 2.0), 1.0));
    let tol = cfg.tolerances.contact_tolerances();

    // straight vertical stem with its tip on the south pole
    let grid = cfg.grid().unwrap();
    let s = StemState::from_tangents(grid, 10, vec![Vec3::z(); 21]).unwrap();
    let c = detect_contacts(&s, &cfg.scene, &tol).unwrap();
    let r = detect_breakdown(&s, &c, &cfg);
    assert!(r.flagged && r.tip_in_contact);
    assert!(r.angle_residual.unwrap() <= 1e-15);
    assert_eq!(r.curvature_residual, 0.0);

    // 30 degrees off the normal, tip still on the sphere
    let th = 30f64.to_radians();
    let k = Vec3::new(th.sin(), 0.0, th.cos());
    let s = StemState::from_tangents(grid, 10, vec![k; 21]).unwrap();
    let scene = sphere(s.tip_position() + Vec3::z(), 1.0);
    let c = detect_contacts(&s, &scene, &tol).unwrap();
    let r = detect_breakdown(&s, &c, &cfg);
    assert!(r.tip_in_contact && !r.flagged);
    assert_abs_diff_eq!(r.angle_residual.unwrap(), 1.0 - th.cos(), epsilon = 1e-12);

    // perpendicular tip but an off-contact arc of curvature 1
    let tangents: Vec<Vec3> = (0..21)
        .map(|i| {
            let a = (i.min(10) as f64 - 10.0) * ds;
            Vec3::new(a.sin(), 0.0, a.cos())
        })
        .collect();
    let s = StemState::from_tangents(grid, 10, tangents).unwrap();
    let scene = sphere(s.tip_position() + Vec3::z(), 1.0);
    let c = detect_contacts(&s, &scene, &tol).unwrap();
    let r = detect_breakdown(&s, &c, &cfg);
    assert!(r.tip_in_contact && !r.flagged);
    assert!(r.angle_residual.unwrap() <= 1e-15);
    assert_abs_diff_eq!(r.curvature_residual, 2.0 * (0.05f64).sin() / ds, epsilon = 1e-12);
}

#[test]
fn pressed_stem_stays_out_and_stops_normally() {
    let ds = 0.1;
    let ceiling = Scene::new(
        vec![Obstacle::half_space(Vec3::new(0.0, 0.0, 2e-3), -Vec3::z()).unwrap()],
        0.0,
    )
    .unwrap();
    let cfg = straight_config(ds, 1.0, 2.0, Vec3::x(), GrowthLaw::gravitropic(1.0, 1.0), ceiling);
    let s = init_state(&cfg).unwrap();
    let mut stepper = Stepper::new(&cfg);
    let StepOutcome::Advanced(res) = stepper.advance(&s).unwrap() else {
        panic!("unexpected breakdown");
    };
    let r = &res.reaction;
    assert!(!r.contacts.is_empty());
    assert!(r.contacts.contacts.iter().all(|c| c.kind == ContactKind::Swept));
    for p in res.state.grown_positions() {
        assert!(cfg.scene.signed_distance(p) >= -cfg.tolerances.penetration);
    }
    for (j, row) in r.rows.iter().enumerate() {
        if r.solution.multipliers[j] > 0.0 {
            let end = if row.tip { row.node + 1 } else { row.node };
            let v = (res.state.positions()[end] - s.positions()[row.node]) / cfg.dt;
            assert!(v.dot(&row.normal).abs() <= 1e-6 * (1.0 + v.norm()), "row {j}");
        }
    }
    let system = r.system(&s, cfg.law.beta).unwrap();
    let oracle = oracle_solve_reaction(&system).unwrap();
    for (a, b) in r.solution.omega.iter().zip(&oracle.omega) {
        assert_abs_diff_eq!(*a, *b, epsilon = 1e-8);
    }
}

#[test]
fn perpendicular_approach_breaks_down() {
    let cfg = straight_config(0.02, 0.2, 2.0, Vec3::z(), GrowthLaw::zero(0.0), sphere(Vec3::new(0.0, 0.0, 1.5), 0.5));
    let traj = run(&cfg).unwrap();
    let Terminal::Breakdown(report) = traj.terminal else {
        panic!("expected breakdown, got {:?}", traj.terminal);
    };
    assert!(report.angle_residual.unwrap() <= cfg.tolerances.breakdown_angle);
    let last = traj.events.last().unwrap();
    assert_eq!(last.kind, EventKind::Breakdown);
    assert!(last.time >= 0.96 && last.time <= 1.0 + 1e-12, "{}", last.time);
}

#[test]
fn events_are_ordered_in_time() {
    let cfg = straight_config(0.02, 0.2, 2.0, Vec3::new(0.5, 0.0, 1.0).normalize(), GrowthLaw::zero(0.0), sphere(Vec3::new(0.4, 0.0, 1.5), 0.5));
    let traj = run(&cfg).unwrap();
    assert!(traj.events.windows(2).all(|w| w[0].time <= w[1].time));
    assert!(traj.frames.iter().all(|f| f.state.check_invariants().is_ok()));
}
