mod common;

use mkp_core::optics::{
    build_setup, cyclic_variant, reachable_patterns, shift_state, simulate, Pattern, SetupModel,
};
use mkp_core::qstate::{bell_state, build_mub, TwoPhotonState};
use mkp_core::vaa::build_vaa_basis;
use proptest::prelude::*;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

fn max_oracle_gap(setup: &SetupModel, phases: &[f64], state: &TwoPhotonState) -> f64 {
    let dist = simulate(setup, phases, state).unwrap();
    common::expand(setup, phases, state)
        .into_iter()
        .map(|((u, v), p)| (dist.prob(Pattern::new(u, v)) - p).abs())
        .fold(0.0, f64::max)
}

#[test]
fn matches_expansion_oracle_on_random_inputs() {
    let mut rng = ChaCha8Rng::seed_from_u64(101);
    for dim in [3, 5] {
        let setup = build_setup(dim).unwrap();
        for _ in 0..25 {
            let phases = common::random_phases(&mut rng, setup.phase_count());
            let state = common::random_state(&mut rng, dim);
            assert!(max_oracle_gap(&setup, &phases, &state) < 1e-10);
        }
    }
}

#[test]
fn matches_expansion_oracle_on_bell_and_vaa_states() {
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let setup = build_setup(3).unwrap();
    let mubs = build_mub(3).unwrap();
    let vaa = build_vaa_basis(&mubs).unwrap();
    let phases = common::random_phases(&mut rng, setup.phase_count());
    assert!(max_oracle_gap(&setup, &phases, &bell_state(&mubs, 0).unwrap()) < 1e-10);
    for k in 0..vaa.len() {
        assert!(max_oracle_gap(&setup, &phases, vaa.state(k)) < 1e-10);
    }
}

#[test]
fn product_basis_inputs_click_only_where_both_rows_reach() {
    let setup = build_setup(5).unwrap();
    let phases = vec![0.0; setup.phase_count()];
    for i in 0..5 {
        for j in 0..5 {
            let state = TwoPhotonState::basis(5, i, j).unwrap();
            let reachable = reachable_patterns(&setup, &state, 0.0);
            let a_reach: Vec<usize> = setup.rows()[i].entries.iter().map(|e| e.detector).collect();
            let b_reach: Vec<usize> = setup.rows()[5 + j]
                .entries
                .iter()
                .map(|e| e.detector)
                .collect();
            for p in &reachable {
                let covered = (a_reach.contains(&p.lo) && b_reach.contains(&p.hi))
                    || (a_reach.contains(&p.hi) && b_reach.contains(&p.lo));
                assert!(covered, "pattern {p:?} from a{i} b{j}");
            }
            let dist = simulate(&setup, &phases, &state).unwrap();
            for (p, prob) in dist.iter() {
                if !reachable.contains(&p) {
                    assert_eq!(prob, 0.0);
                }
            }
        }
    }
}

#[test]
fn distribution_includes_doubles_in_normalization() {
    let setup = build_setup(3).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(9);
    let state = common::random_state(&mut rng, 3);
    let phases = common::random_phases(&mut rng, 6);
    let dist = simulate(&setup, &phases, &state).unwrap();
    let coincidences: f64 = dist.coincidences().iter().sum();
    assert!((coincidences + dist.leakage() - 1.0).abs() < 1e-12);
    let post = dist.post_selected().unwrap();
    assert!((post.iter().sum::<f64>() - 1.0).abs() < 1e-12);
}

#[test]
fn setup_json_round_trip_preserves_physics() {
    let setup = build_setup(7).unwrap();
    let reloaded = SetupModel::from_json(&setup.to_json()).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let phases = common::random_phases(&mut rng, setup.phase_count());
    let state = common::random_state(&mut rng, 7);
    let a = simulate(&setup, &phases, &state).unwrap();
    let b = simulate(&reloaded, &phases, &state).unwrap();
    assert_eq!(a, b);
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(48))]

    #[test]
    fn relabeling_is_equivariant(seed in any::<u64>(), shift in 0usize..5, dim_pick in 0usize..2) {
        let dim = [3, 5][dim_pick];
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let setup = build_setup(dim).unwrap();
        let phases = common::random_phases(&mut rng, setup.phase_count());
        let state = common::random_state(&mut rng, dim);
        let original = simulate(&setup, &phases, &state).unwrap();
        let moved = simulate(&cyclic_variant(&setup, shift), &phases, &shift_state(&state, shift)).unwrap();
        for ((p, a), (q, b)) in original.iter().zip(moved.iter()) {
            prop_assert_eq!(p, q);
            prop_assert!((a - b).abs() < 1e-12);
        }
    }

    #[test]
    fn normalized_for_any_input(seed in any::<u64>()) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let setup = build_setup(5).unwrap();
        let phases = common::random_phases(&mut rng, setup.phase_count());
        let state = common::random_state(&mut rng, 5);
        let dist = simulate(&setup, &phases, &state).unwrap();
        prop_assert!((dist.total() - 1.0).abs() < 1e-9);
        prop_assert!(dist.iter().all(|(_, p)| p >= 0.0));
    }

    #[test]
    fn global_phase_is_invisible(seed in any::<u64>(), delta in 0.0..std::f64::consts::TAU) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let setup = build_setup(3).unwrap();
        let phases = common::random_phases(&mut rng, setup.phase_count());
        let state = common::random_state(&mut rng, 3);
        let shifted: Vec<f64> = phases.iter().map(|p| p + delta).collect();
        let a = simulate(&setup, &phases, &state).unwrap();
        let b = simulate(&setup, &shifted, &state).unwrap();
        for ((_, x), (_, y)) in a.iter().zip(b.iter()) {
            prop_assert!((x - y).abs() < 1e-12);
        }
    }
}
