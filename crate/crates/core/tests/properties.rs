use cata_core::rewards::{collision_flag, shaped_bid, time_discounted_reward};
use cata_core::stigmergy::AssignmentSet;
use cata_core::{run_cata, run_cbaa, run_greedy_centralized, AuctionConfig, Robot, RobotId, Task, TaskId, Vec2, World};
use proptest::prelude::*;

fn world_strategy(max_robots: usize, max_tasks: usize) -> impl Strategy<Value = World> {
    (1..=max_robots, 1..=max_tasks).prop_flat_map(|(nr, nt)| {
        (
            prop::collection::vec((-12.0..12.0f64, -30.0..-18.0f64), nr),
            prop::collection::vec((-20.0..20.0f64, -20.0..20.0f64, 0.8..1.0f64), nt),
        )
            .prop_map(|(robots, tasks)| {
                World::new(
                    robots
                        .into_iter()
                        .enumerate()
                        .map(|(i, (x, y))| Robot { id: RobotId(i as u32), position: Vec2::new(x, y) })
                        .collect(),
                    tasks
                        .into_iter()
                        .enumerate()
                        .map(|(i, (x, y, l))| Task::new(TaskId(i as u32), Vec2::new(x, y), 100.0, l).unwrap())
                        .collect(),
                )
                .unwrap()
            })
    })
}

/// A random partial matching plus a random subset of it.
fn nested_assignments(world: &World, picks: &[(usize, usize, bool)]) -> (AssignmentSet, AssignmentSet) {
    let mut big = AssignmentSet::new();
    let mut small = AssignmentSet::new();
    for &(r, t, keep) in picks {
        let robot = world.robots()[r % world.num_robots()].id;
        let task = world.tasks()[t % world.num_tasks()].id;
        if big.insert(robot, task).is_ok() && keep {
            small.insert(robot, task).unwrap();
        }
    }
    (small, big)
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn greedy_matches_cata(world in world_strategy(10, 10)) {
        let config = AuctionConfig::default();
        let cata = run_cata(&world, &config).unwrap();
        let greedy = run_greedy_centralized(&world, &config).unwrap();
        prop_assert_eq!(&cata.assignments, &greedy.assignments);
        prop_assert_eq!(&cata.horizon_trace, &greedy.horizon_trace);
    }

    #[test]
    fn assignments_are_injective_and_bounded(world in world_strategy(9, 9)) {
        for result in [run_cata(&world, &AuctionConfig::default()).unwrap(), run_cbaa(&world, &AuctionConfig::default()).unwrap()] {
            prop_assert!(result.assignments.len() <= world.num_robots().min(world.num_tasks()));
            let mut tasks: Vec<_> = result.assignments.iter().map(|(_, t)| t).collect();
            tasks.sort();
            tasks.dedup();
            prop_assert_eq!(tasks.len(), result.assignments.len());
        }
    }

    #[test]
    fn cbaa_always_completes(world in world_strategy(9, 9)) {
        let result = run_cbaa(&world, &AuctionConfig::default()).unwrap();
        prop_assert!(result.complete);
        prop_assert_eq!(result.assignments.len(), world.num_robots().min(world.num_tasks()));
    }

    #[test]
    fn horizon_trace_is_monotone_and_floored(world in world_strategy(9, 9)) {
        let config = AuctionConfig::default();
        let result = run_cata(&world, &config).unwrap();
        for w in result.horizon_trace.windows(2) {
            prop_assert!(w[1] <= w[0]);
        }
        for d in &result.horizon_trace {
            prop_assert!(*d >= config.safety_distance_min);
        }
    }

    #[test]
    fn bids_never_grow_with_more_assignments(
        world in world_strategy(8, 8),
        picks in prop::collection::vec((0usize..8, 0usize..8, any::<bool>()), 0..8),
        candidate in (0usize..8, 0usize..8),
        d in 0.2..6.0f64,
    ) {
        let (small, big) = nested_assignments(&world, &picks);
        prop_assert!(small.is_subset_of(&big));
        let robot = world.robots()[candidate.0 % world.num_robots()].id;
        let task = world.tasks()[candidate.1 % world.num_tasks()];
        let base = time_discounted_reward(world.robot_position(robot).unwrap(), &task, 1.0).unwrap();
        let with_small = shaped_bid(base, collision_flag(&world, robot, &task, &small, d).unwrap()).unwrap();
        let with_big = shaped_bid(base, collision_flag(&world, robot, &task, &big, d).unwrap()).unwrap();
        prop_assert!(with_big <= with_small);
    }

    #[test]
    fn winning_bids_never_increase(world in world_strategy(9, 9)) {
        let result = run_cata(&world, &AuctionConfig::fixed_distance(0.5)).unwrap();
        for w in result.winners.windows(2) {
            prop_assert!(w[1].bid <= w[0].bid);
        }
    }
}
