mod common;

use proptest::prelude::*;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use shaped_horizon::mdp::DEFAULT_TOL;
use shaped_horizon::shaping::{optimal_action_sets, state_criterion, GapVector};
use shaped_horizon::*;

struct Setup {
    mdp: TabularMdp,
    r0: RewardTable,
    v_star: ValueFunction,
    q_rand: QFunction,
    gaps: GapVector,
    phi: Potential,
}

fn setup() -> Setup {
    let (mdp, r0) = build_gridworld(&GridSpec::default()).unwrap();
    let v_star = value_iteration(&mdp, &r0, DEFAULT_TOL).unwrap().values;
    let (_, q_rand) = policy_evaluation(&mdp, &r0, &StochasticPolicy::uniform(25, 4), DEFAULT_TOL).unwrap();
    let gaps = action_gap(&q_rand);
    let phi = potential_from_values(&q_rand, &v_star).unwrap();
    Setup {
        mdp,
        r0,
        v_star,
        q_rand,
        gaps,
        phi,
    }
}

#[test]
fn random_potentials_preserve_gridworld_policy() {
    let s = setup();
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    for _ in 0..100 {
        let phi = common::random_potential(&mut rng, 25, 5.0);
        let shaped = shape_reward(&s.mdp, &s.r0, &phi).unwrap();
        assert!(verify_policy_invariance(&s.mdp, &s.r0, &shaped, 1e-10).unwrap());
    }
    let shaped = shape_reward(&s.mdp, &s.r0, &s.phi).unwrap();
    assert!(verify_policy_invariance(&s.mdp, &s.r0, &shaped, 1e-10).unwrap());
}

#[test]
fn random_potentials_preserve_random_mdp_policies() {
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    for seed in 0..20 {
        let n = 2 + seed as usize % 9;
        let (mdp, r0) = common::random_mdp(500 + seed, n, 3, 0.9, seed % 2 == 0);
        for _ in 0..5 {
            let phi = common::random_potential(&mut rng, n, 3.0);
            let shaped = shape_reward(&mdp, &r0, &phi).unwrap();
            assert!(verify_policy_invariance(&mdp, &r0, &shaped, 1e-10).unwrap(), "mdp {seed}");
        }
    }
}

#[test]
fn invariance_detects_changed_preferences() {
    let s = setup();
    let negated = RewardTable(StateActionTable::from_fn(25, 4, |st, a| -s.r0.get(st, a)));
    assert!(!verify_policy_invariance(&s.mdp, &s.r0, &negated, 1e-10).unwrap());
    let doubled = RewardTable(StateActionTable::from_fn(25, 4, |st, a| 2.0 * s.r0.get(st, a)));
    assert!(verify_policy_invariance(&s.mdp, &s.r0, &doubled, 1e-10).unwrap());
}

#[test]
fn action_gaps_do_not_depend_on_potential() {
    let s = setup();
    let uniform = StochasticPolicy::uniform(25, 4);
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    for _ in 0..50 {
        let phi = common::random_potential(&mut rng, 25, 5.0);
        let shaped = shape_reward(&s.mdp, &s.r0, &phi).unwrap();
        let (_, q_phi) = policy_evaluation(&s.mdp, &shaped, &uniform, 1e-12).unwrap();
        let gaps = action_gap(&q_phi);
        assert_eq!(gaps.degenerate_mask, s.gaps.degenerate_mask);
        for st in 0..25 {
            assert!((gaps.delta[st] - s.gaps.delta[st]).abs() <= 1e-9, "state {st}");
        }
    }
}

#[test]
fn planning_potential_minimises_each_state_term() {
    let s = setup();
    for st in 0..25 {
        let Some(at_opt) = state_criterion(&s.q_rand, &s.v_star, &s.gaps, st, s.phi.phi[st]) else {
            assert!(s.mdp.is_terminal(st));
            continue;
        };
        for eps in [1e-3, 1e-1, 1.0] {
            for sign in [-1.0, 1.0] {
                let moved = state_criterion(&s.q_rand, &s.v_star, &s.gaps, st, s.phi.phi[st] + sign * eps).unwrap();
                assert!(at_opt <= moved, "state {st} eps {}: {at_opt} > {moved}", sign * eps);
            }
        }
    }
}

#[test]
fn planning_potential_minimises_criterion() {
    let s = setup();
    let best = horizon_criterion(&s.q_rand, &s.v_star, &s.gaps, &s.phi).unwrap();
    let zero = horizon_criterion(&s.q_rand, &s.v_star, &s.gaps, &Potential::zeros(25)).unwrap();
    assert!(best <= zero);
    let mut rng = ChaCha8Rng::seed_from_u64(4);
    for _ in 0..100 {
        let phi = common::random_potential(&mut rng, 25, 2.0);
        assert!(best <= horizon_criterion(&s.q_rand, &s.v_star, &s.gaps, &phi).unwrap());
    }
}

#[test]
fn optimal_sets_nonempty_off_terminals() {
    let s = setup();
    let sets = optimal_action_sets(&s.mdp, &s.r0, 1e-10).unwrap();
    for (st, set) in sets.iter().enumerate() {
        assert_eq!(set.is_empty(), s.mdp.is_terminal(st));
    }
    // from the start both Down and Right lie on a shortest path
    assert_eq!(sets[0], vec![1, 3]);
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(32))]

    #[test]
    fn shaping_is_invariant_on_random_mdps(seed in 0u64..10_000, n in 2usize..11, scale in 0.01f64..10.0) {
        let (mdp, r0) = common::random_mdp(seed, n, 3, 0.9, seed % 2 == 0);
        let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0xabc);
        let phi = common::random_potential(&mut rng, n, scale);
        let shaped = shape_reward(&mdp, &r0, &phi).unwrap();
        prop_assert!(verify_policy_invariance(&mdp, &r0, &shaped, 1e-10).unwrap());
    }

    #[test]
    fn criterion_vertex_beats_perturbation(seed in 0u64..10_000, eps in -2.0f64..2.0) {
        let (mdp, r0) = common::random_mdp(seed, 6, 3, 0.9, true);
        let v = value_iteration(&mdp, &r0, 1e-11).unwrap().values;
        let (_, q) = policy_evaluation(&mdp, &r0, &StochasticPolicy::uniform(6, 3), 1e-11).unwrap();
        let gaps = action_gap(&q);
        let phi = potential_from_values(&q, &v).unwrap();
        for s in 0..6 {
            if let Some(at_opt) = state_criterion(&q, &v, &gaps, s, phi.phi[s]) {
                let moved = state_criterion(&q, &v, &gaps, s, phi.phi[s] + eps).unwrap();
                prop_assert!(at_opt <= moved);
            }
        }
    }
}
