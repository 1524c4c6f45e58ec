mod common;

use common::*;
use hierq::backups::{hier_return, hiertb_finish, hiertb_update, hierq_1step_update, hierq_lambda_update, EligibilityBank};
use hierq::flat::{BackupParams, RewardMode};
use hierq::hierarchy::{GoalQTensor, GoalSet};
use hierq::mdp::{parse_map, GridWorld, TraceBuffer};
use hierq::StateId;
use proptest::prelude::*;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

fn trace_of(world: &GridWorld, cells: &[(usize, usize)]) -> TraceBuffer {
    let states: Vec<StateId> = cells.iter().map(|&(r, c)| world.state_at(r, c).unwrap()).collect();
    TraceBuffer::from_states(world, &states).expect("cells form a walk")
}

#[test]
fn one_step_on_corridor_matches_oracle() {
    let world = corridor(6);
    let trace = trace_of(&world, &[(0, 0), (0, 1), (0, 2), (0, 1), (0, 2)]);
    for init in [None, Some(3), Some(9)] {
        let (mut q, mut oracle) = tensor_and_oracle(&world, false, 3, false, 0.95, init);
        let p = BackupParams::default();
        for t in 0..trace.len() {
            hierq_1step_update(&mut q, &trace, t, &p);
        }
        oracle.run_tree_backup(&trace, 1);
        assert!(oracle.max_abs_diff(&q) < 1e-12);
    }
}

#[test]
fn two_step_stride_two_matches_oracle() {
    let world = open_room();
    let trace = trace_of(&world, &[(0, 0), (0, 1), (1, 1), (1, 2), (2, 2), (2, 1), (3, 1)]);
    assert_eq!(trace.len(), 6);
    for init in [None, Some(1), Some(2), Some(5)] {
        let (mut q, mut oracle) = tensor_and_oracle(&world, false, 2, false, 0.95, init);
        let p = BackupParams { n: 2, ..BackupParams::default() };
        for t in 0..trace.len() {
            hiertb_update(&mut q, &trace, t, 2, &p);
        }
        hiertb_finish(&mut q, &trace, 2, &p);
        oracle.run_tree_backup(&trace, 2);
        assert!(oracle.max_abs_diff(&q) < 1e-12, "init {init:?}");
    }
}

#[test]
fn lambda_one_on_five_steps_equals_full_span() {
    let world = open_room();
    let trace = trace_of(&world, &[(0, 0), (0, 1), (0, 2), (1, 2), (1, 3), (2, 3)]);
    let mut online = GoalQTensor::new(&world, 1, 2, true, GoalSet::All(world.num_states()));
    let mut offline = online.clone();
    let mut bank = EligibilityBank::new(2);
    let p = BackupParams { lambda: 1.0, n: 6, ..BackupParams::default() };
    for t in 0..trace.len() {
        hierq_lambda_update(&mut online, &mut bank, &trace, t, &p);
    }
    hiertb_finish(&mut offline, &trace, p.n, &p);
    let gap = online
        .values()
        .iter()
        .zip(offline.values())
        .map(|(a, b)| (a - b).abs())
        .fold(0.0, f64::max);
    assert!(gap < 1e-10, "gap {gap}");
    // Credit from the newest state reaches the first window with stride 2.
    let s0 = world.start();
    let target = world.state_at(2, 3).unwrap();
    let slot = online.slot_of(s0, hierq::LevelAction::Goal(world.state_at(0, 1).unwrap())).unwrap();
    let col = online.goal_column(target).unwrap();
    assert!((online.value(s0, slot, col) - 0.95f64.powi(2)).abs() < 1e-12);
}

#[test]
fn return_vector_has_unit_component_at_next_state() {
    let world = open_room();
    let q = GoalQTensor::new(&world, 1, 3, true, GoalSet::All(world.num_states()));
    for s in world.states() {
        let g = hier_return(&q, s, &BackupParams::default());
        for (c, v) in g.iter().enumerate() {
            assert_eq!(*v, if q.goal_state(c) == s { 1.0 } else { 0.0 });
        }
    }
    let pen = BackupParams {
        reward_mode: RewardMode::Penalizing,
        gamma: 1.0,
        ..BackupParams::default()
    };
    let g = hier_return(&q, world.start(), &pen);
    assert!(g.iter().all(|v| *v == 0.0 || *v == -1.0));
}

#[test]
fn penalizing_mode_counts_steps() {
    let world = corridor(5);
    let mut q = GoalQTensor::new(&world, 0, 1, true, GoalSet::Single(world.goal()));
    let trace = trace_of(&world, &[(0, 0), (0, 1), (0, 2), (0, 3), (0, 4)]);
    let p = BackupParams {
        reward_mode: RewardMode::Penalizing,
        gamma: 1.0,
        n: 4,
        ..BackupParams::default()
    };
    for t in 0..trace.len() {
        hiertb_update(&mut q, &trace, t, 4, &p);
    }
    hiertb_finish(&mut q, &trace, 4, &p);
    let right = |c: usize| {
        let s = world.state_at(0, c).unwrap();
        q.value(s, hierq::PrimitiveAction::Right.index(), 0)
    };
    // Values are minus the number of non-goal arrivals before the goal.
    assert_eq!([right(0), right(1), right(2), right(3)], [-3.0, -2.0, -1.0, 0.0]);
}

proptest! {
    #![proptest_config(ProptestConfig { cases: 96, failure_persistence: None, ..ProptestConfig::default() })]

    #[test]
    fn tree_backup_matches_forward_oracle(w in 0..5usize, ha in 1..=3usize, n in 1..=4usize, len in 1..=12usize, seed: u64, init: Option<u64>) {
        let world = &fixture_worlds()[w];
        let trace = random_walk(world, len, &mut ChaCha8Rng::seed_from_u64(seed));
        prop_assume!(!trace.is_empty());
        let (mut q, mut oracle) = tensor_and_oracle(world, ha == 1, ha, false, 0.9, init);
        let p = BackupParams { n, gamma: 0.9, ..BackupParams::default() };
        for t in 0..trace.len() {
            hiertb_update(&mut q, &trace, t, n, &p);
        }
        hiertb_finish(&mut q, &trace, n, &p);
        oracle.run_tree_backup(&trace, n);
        prop_assert!(oracle.max_abs_diff(&q) <= 1e-10);
    }

    #[test]
    fn update_cost_is_linear(w in 0..5usize, ha in 1..=3usize, n in 1..=5usize, len in 1..=12usize, seed: u64) {
        let world = &fixture_worlds()[w];
        let trace = random_walk(world, len, &mut ChaCha8Rng::seed_from_u64(seed));
        prop_assume!(!trace.is_empty());
        let mut q = GoalQTensor::new(world, usize::from(ha > 1), ha, true, GoalSet::All(world.num_states()));
        let p = BackupParams { n, ..BackupParams::default() };
        for t in 0..trace.len() {
            let stats = hiertb_update(&mut q, &trace, t, n, &p);
            prop_assert!(stats.chain_steps <= n);
            prop_assert!(stats.pairs_updated <= ha);
        }
    }

    #[test]
    fn lambda_zero_equals_one_step(w in 0..5usize, ha in 1..=3usize, len in 1..=12usize, seed: u64) {
        let world = &fixture_worlds()[w];
        let trace = random_walk(world, len, &mut ChaCha8Rng::seed_from_u64(seed));
        prop_assume!(!trace.is_empty());
        let mut a = GoalQTensor::new(world, usize::from(ha > 1), ha, true, GoalSet::All(world.num_states()));
        let mut b = a.clone();
        let mut bank = EligibilityBank::new(ha);
        let p = BackupParams::default();
        for t in 0..trace.len() {
            hierq_1step_update(&mut a, &trace, t, &p);
            hierq_lambda_update(&mut b, &mut bank, &trace, t, &p);
        }
        prop_assert_eq!(a.values(), b.values());
    }
}

#[test]
fn restricted_boundary_skips_far_pairs() {
    let world = parse_map("S.......G").unwrap();
    let mut q = GoalQTensor::new(&world, 1, 2, true, GoalSet::All(world.num_states()));
    // A window state two cells away stays admissible; nothing beyond reach is written.
    let trace = trace_of(&world, &[(0, 0), (0, 1), (0, 2), (0, 3)]);
    let p = BackupParams::default();
    for t in 0..trace.len() {
        hierq_1step_update(&mut q, &trace, t, &p);
    }
    q.for_each_entry(|s, a, _, v| {
        if v != 0.0 {
            assert!(world.l1(s, a.goal().unwrap()) <= 2);
        }
    });
}
