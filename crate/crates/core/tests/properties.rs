use ler_core::command::{
    arbitrate, Arbiter, CommandToken, GrammarConfig, InputEvent, InputSource, DEFAULT_DEBOUNCE_MS,
};
use ler_core::controller::{
    Axis, ControllerConfig, ControllerState, Direction, Mode, MotionMode, MotionRequest,
};
use ler_core::kinematics::{
    forward_kinematics, inverse_kinematics, view_frustum, JointLimits, JointVector, Vec3,
};
use ler_core::scene::{
    check_clearance, coverage_of, visible_targets, BaseFootprint, CavityModel, Segment2, TrocarSite,
};
use proptest::prelude::*;

fn limits() -> JointLimits {
    JointLimits::default()
}

fn joints() -> impl Strategy<Value = JointVector> {
    (0i64..360_000, 1i64..=80_000, 1i64..=200_000)
        .prop_map(|(p, t, i)| JointVector::new(p, t, i, &limits()))
}

fn pan_distance(a: i64, b: i64) -> i64 {
    let d = (a - b).rem_euclid(360_000);
    d.min(360_000 - d)
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(10_000))]

    #[test]
    fn ik_inverts_fk(j in joints()) {
        let tip = forward_kinematics(&j).tip;
        let back = inverse_kinematics(&tip, &j, &limits()).unwrap();
        prop_assert!(pan_distance(back.pan_mdeg(), j.pan_mdeg()) <= 1);
        prop_assert!((back.tilt_mdeg() - j.tilt_mdeg()).abs() <= 1);
        prop_assert!((back.insertion_um() - j.insertion_um()).abs() <= 1);
    }

    #[test]
    fn tip_norm_is_insertion(p in 0i64..360_000, t in 0i64..=80_000, i in 0i64..=200_000) {
        let j = JointVector::new(p, t, i, &limits());
        let pose = forward_kinematics(&j);
        let s = i as f64 / 1000.0;
        prop_assert!((pose.tip.norm() - s).abs() <= 1e-9 * s.max(1e-300));
        prop_assert!((pose.axis.norm() - 1.0).abs() <= 1e-12);
    }
}

proptest! {
    #[test]
    fn untilted_tip_ignores_pan(a in 0i64..360_000, b in 0i64..360_000, s in 0i64..=200_000) {
        let fa = forward_kinematics(&JointVector::new(a, 0, s, &limits()));
        let fb = forward_kinematics(&JointVector::new(b, 0, s, &limits()));
        prop_assert_eq!(fa.tip, fb.tip);
    }

    #[test]
    fn vertical_target_keeps_pan(pan in 0i64..360_000, depth in 0.001f64..200.0) {
        let current = JointVector::new(pan, 30_000, 50_000, &limits());
        let j = inverse_kinematics(&Vec3::new(0.0, 0.0, -depth), &current, &limits()).unwrap();
        prop_assert_eq!(j.pan_mdeg(), pan);
        prop_assert_eq!(j.tilt_mdeg(), 0);
    }
}

#[derive(Debug, Clone, Copy)]
enum Op {
    Command(MotionRequest),
    Stop,
    Manual(bool),
    Reset,
    Tick(u8),
}

fn op() -> impl Strategy<Value = Op> {
    let axis = prop_oneof![Just(Axis::Pan), Just(Axis::Tilt), Just(Axis::Insertion)];
    let dir = prop_oneof![Just(Direction::Negative), Just(Direction::Positive)];
    let mode = prop_oneof![Just(MotionMode::Continuous), Just(MotionMode::Step)];
    prop_oneof![
        4 => (axis, dir, mode).prop_map(|(a, d, m)| Op::Command(MotionRequest::new(a, d, m))),
        1 => Just(Op::Stop),
        1 => any::<bool>().prop_map(Op::Manual),
        1 => Just(Op::Reset),
        6 => (1u8..200).prop_map(Op::Tick),
    ]
}

fn apply(
    state: ControllerState,
    op: Op,
    cfg: &ControllerConfig,
    mut each_tick: impl FnMut(&ControllerState, &ControllerState),
) -> ControllerState {
    match op {
        Op::Command(r) => state.command(r, cfg).unwrap_or(state),
        Op::Stop => state.stop(),
        Op::Manual(on) => state.set_manual(on),
        Op::Reset => state.reset_fault(cfg).unwrap_or(state),
        Op::Tick(n) => {
            let mut s = state;
            for _ in 0..n {
                let next = s.tick(cfg);
                each_tick(&s, &next);
                s = next;
            }
            s
        }
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(300))]

    #[test]
    fn ticks_respect_speed_and_range(ops in prop::collection::vec(op(), 1..120)) {
        let cfg = ControllerConfig::default();
        let mut state = ControllerState::default();
        for op in ops {
            state = apply(state, op, &cfg, |before, after| {
                let driven = before.active().map(|r| r.axis);
                for axis in Axis::ALL {
                    let d = after.joints().delta(&before.joints(), axis).abs();
                    if Some(axis) == driven {
                        assert!(d <= cfg.per_tick(axis));
                    } else {
                        assert_eq!(d, 0, "undriven {axis} moved");
                    }
                }
                if matches!(before.mode(), Mode::Manual | Mode::Fault) {
                    assert_eq!(before.joints(), after.joints());
                }
                let j = after.joints();
                assert!((0..=80_000).contains(&j.tilt_mdeg()));
                assert!((0..=200_000).contains(&j.insertion_um()));
                assert!((0..360_000).contains(&j.pan_mdeg()));
                assert_eq!(after.active().is_some(), matches!(after.mode(), Mode::Moving | Mode::Stepping));
            });
        }
    }

    #[test]
    fn command_sequences_are_deterministic(ops in prop::collection::vec(op(), 1..60)) {
        let cfg = ControllerConfig::default();
        let run = || ops.iter().fold(ControllerState::default(), |s, op| apply(s, *op, &cfg, |_, _| {}));
        prop_assert_eq!(run(), run());
    }

    #[test]
    fn single_step_is_exact(axis_ix in 0usize..3, positive: bool, p in 0i64..360_000, t in 0i64..=80_000, i in 0i64..=200_000) {
        let cfg = ControllerConfig::default();
        let axis = Axis::ALL[axis_ix];
        let dir = if positive { Direction::Positive } else { Direction::Negative };
        let start = ControllerState::new(JointVector::new(p, t, i, &cfg.limits));
        let mut s = start.command(MotionRequest::new(axis, dir, MotionMode::Step), &cfg).unwrap();
        while s.mode() == Mode::Stepping {
            s = s.tick(&cfg);
        }
        let moved = s.joints().delta(&start.joints(), axis) * dir.sign();
        let step = cfg.steps.for_axis(axis);
        let room = match (axis, dir) {
            (Axis::Pan, _) => step,
            (Axis::Tilt, Direction::Positive) => cfg.limits.tilt_max_mdeg - t,
            (Axis::Tilt, Direction::Negative) => t,
            (Axis::Insertion, Direction::Positive) => cfg.limits.insertion_max_um - i,
            (Axis::Insertion, Direction::Negative) => i,
        };
        prop_assert_eq!(moved, step.min(room));
    }

    #[test]
    fn parse_is_total(line in any::<String>()) {
        let g = GrammarConfig::default();
        match g.parse(&line) {
            Ok(_) => {}
            Err(e) => prop_assert_eq!(e.0, line),
        }
    }

    #[test]
    fn debounce_bounds_identical_tokens(gaps in prop::collection::vec((0u64..400, 0usize..12), 1..200)) {
        let mut t = 0;
        let events: Vec<_> = gaps
            .iter()
            .map(|&(gap, k)| {
                t += gap;
                InputEvent { at_ms: t, source: InputSource::Voice, token: CommandToken::ALL[k] }
            })
            .collect();
        let mut arbiter = Arbiter::default();
        let mut last_emit: std::collections::HashMap<CommandToken, u64> = Default::default();
        let mut after_stop = false;
        for e in &events {
            let out = arbiter.push(*e);
            if e.token == CommandToken::Stop {
                prop_assert_eq!(out, Some(CommandToken::Stop));
                last_emit.clear();
                after_stop = true;
                continue;
            }
            if let Some(tok) = out {
                prop_assert_eq!(tok, e.token);
                if tok.is_motion() {
                    if let Some(prev) = last_emit.get(&tok) {
                        prop_assert!(e.at_ms - prev >= DEFAULT_DEBOUNCE_MS);
                    }
                    last_emit.insert(tok, e.at_ms);
                }
                after_stop = false;
            }
        }
        let _ = after_stop;
        // output is always a subsequence of the input, in order
        let out = arbitrate(&events);
        let mut it = events.iter().map(|e| e.token);
        prop_assert!(out.iter().all(|t| it.any(|x| x == *t)));
    }

    #[test]
    fn stop_is_never_followed_by_stale_motion(tokens in prop::collection::vec(0usize..12, 1..60)) {
        // Every emitted motion token after a STOP corresponds to an input that
        // arrived after that STOP.
        let events: Vec<_> = tokens
            .iter()
            .enumerate()
            .map(|(i, &k)| InputEvent { at_ms: i as u64 * 10, source: InputSource::Keypad, token: CommandToken::ALL[k] })
            .collect();
        let mut arbiter = Arbiter::default();
        let mut seen_stop_at = None;
        for (i, e) in events.iter().enumerate() {
            if let Some(t) = arbiter.push(*e) {
                if t == CommandToken::Stop {
                    seen_stop_at = Some(i);
                } else if let Some(s) = seen_stop_at {
                    prop_assert!(i > s);
                }
            }
        }
    }
}

proptest! {
    #[test]
    fn clearance_invariant_under_rotation(
        sites in prop::collection::vec((-300.0f64..300.0, -300.0f64..300.0, 1.0f64..20.0), 1..12),
        arm_end in (-300.0f64..300.0, -300.0f64..300.0),
        angle in 0.0f64..std::f64::consts::TAU,
    ) {
        let rot = |[x, y]: [f64; 2]| [x * angle.cos() - y * angle.sin(), x * angle.sin() + y * angle.cos()];
        let base = BaseFootprint {
            clamp_arm: Some(Segment2 { from_mm: [55.0, 0.0], to_mm: [arm_end.0, arm_end.1] }),
            ..BaseFootprint::default()
        };
        let trocars: Vec<_> = sites.iter().map(|&(x, y, d)| TrocarSite::new(x, y, d)).collect();
        let base_r = BaseFootprint {
            center_mm: rot(base.center_mm),
            clamp_arm: base.clamp_arm.map(|s| Segment2 { from_mm: rot(s.from_mm), to_mm: rot(s.to_mm) }),
            ..base
        };
        let trocars_r: Vec<_> = trocars.iter().map(|t| TrocarSite { position_mm: rot(t.position_mm), ..*t }).collect();
        prop_assert_eq!(check_clearance(&trocars, &base), check_clearance(&trocars_r, &base_r));
    }

    #[test]
    fn hemisphere_frustum_sees_everything_in_front(
        p in 0i64..360_000, t in 0i64..=80_000, i in 0i64..=200_000,
        targets in prop::collection::vec((-500.0f64..500.0, -500.0f64..500.0, -500.0f64..500.0), 1..40),
    ) {
        let mut f = view_frustum(&JointVector::new(p, t, i, &limits()), 70.0).unwrap();
        f.half_angle_deg = 90.0;
        let pts: Vec<_> = targets.into_iter().map(|(x, y, z)| Vec3::new(x, y, z)).collect();
        let in_front: Vec<_> = pts.iter().copied().filter(|q| (*q - f.apex).dot(&f.axis) > 0.0).collect();
        prop_assert_eq!(visible_targets(&f, &pts), in_front);
    }
}

#[test]
fn coverage_monotone_in_limits() {
    let points = CavityModel::default().sample_points(20_000, 99);
    let mut previous = 0.0;
    for (tilt, ins) in [
        (20_000, 50_000),
        (40_000, 80_000),
        (60_000, 120_000),
        (80_000, 160_000),
        (80_000, 200_000),
        (90_000, 200_000),
    ] {
        let l = JointLimits {
            tilt_max_mdeg: tilt,
            insertion_max_um: ins,
            ..limits()
        };
        let c = coverage_of(&points, &l);
        assert!(
            c >= previous,
            "coverage dropped from {previous} to {c} at ({tilt}, {ins})"
        );
        previous = c;
    }
    // growing one limit at a time never loses points either
    for ins in (10_000..=200_000).step_by(10_000) {
        let small = JointLimits {
            insertion_max_um: ins - 5_000,
            ..limits()
        };
        let big = JointLimits {
            insertion_max_um: ins,
            ..limits()
        };
        assert!(coverage_of(&points, &big) >= coverage_of(&points, &small));
    }
}
