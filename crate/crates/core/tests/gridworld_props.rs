use std::collections::{HashSet, VecDeque};

use ipo_core::gridworld::{generate_env, Action, Color, GridDump, GridEnv, HORIZON};
use proptest::prelude::*;

/// Everything that matters for the future except the clock.
fn state_key(env: &GridEnv) -> String {
    let GridDump {
        agent,
        carrying,
        cells,
        ..
    } = env.dump();
    serde_json::to_string(&(agent, carrying, cells)).unwrap()
}

/// Shortest number of steps to the goal, by breadth-first search over the
/// full state space.
fn shortest_solution(start: &GridEnv) -> Option<u32> {
    let mut seen = HashSet::new();
    let mut queue = VecDeque::new();
    seen.insert(state_key(start));
    queue.push_back((start.clone(), 0u32));
    while let Some((env, depth)) = queue.pop_front() {
        for action in Action::ALL {
            let mut next = env.clone();
            let out = next.step(action).unwrap();
            if out.reward > 0.0 {
                return Some(depth + 1);
            }
            if !out.done && seen.insert(state_key(&next)) {
                queue.push_back((next, depth + 1));
            }
        }
    }
    None
}

#[test]
fn every_layout_is_solvable() {
    for seed in 0..300u64 {
        for color in [Color::Red, Color::Green, Color::Grey] {
            let env = generate_env(color, seed);
            let steps = shortest_solution(&env);
            assert!(
                matches!(steps, Some(n) if n < HORIZON),
                "seed {seed} color {color}:\n{env}"
            );
        }
    }
}

fn actions() -> impl Strategy<Value = Vec<usize>> {
    prop::collection::vec(0usize..7, 1..300)
}

proptest! {
    #[test]
    fn dynamics_ignore_color(seed in 0u64..10_000, other in 1u8..6, acts in actions()) {
        let other = Color::from_code(other).unwrap();
        let mut a = generate_env(Color::Red, seed);
        let mut b = generate_env(other, seed);
        for code in acts {
            let action = Action::from_code(code).unwrap();
            let oa = a.step(action).unwrap();
            let ob = b.step(action).unwrap();
            prop_assert_eq!(oa.reward, ob.reward);
            prop_assert_eq!(oa.done, ob.done);
            prop_assert_eq!(oa.observation.recolor(Color::Red, other), ob.observation);
            prop_assert_eq!(a.agent_pos(), b.agent_pos());
            if oa.done {
                break;
            }
        }
    }

    #[test]
    fn trajectories_are_deterministic(seed in any::<u64>(), acts in actions()) {
        let mut a = generate_env(Color::Blue, seed);
        let mut b = generate_env(Color::Blue, seed);
        for code in acts {
            let action = Action::from_code(code).unwrap();
            let oa = a.step(action).unwrap();
            prop_assert_eq!(oa, b.step(action).unwrap());
            if oa.done {
                break;
            }
        }
        prop_assert_eq!(a.dump(), b.dump());
    }

    #[test]
    fn episode_return_is_zero_or_in_range(seed in any::<u64>(), acts in prop::collection::vec(0usize..7, 250)) {
        let mut env = generate_env(Color::Yellow, seed);
        let mut total = 0.0;
        for code in acts {
            let out = env.step(Action::from_code(code).unwrap()).unwrap();
            total += out.reward;
            prop_assert!(out.observation.cells().all(|c| c.is_valid()));
            if out.done {
                break;
            }
        }
        prop_assert!(total == 0.0 || (0.1..1.0).contains(&total), "return {}", total);
    }
}
