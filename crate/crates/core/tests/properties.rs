mod common;

use approx::assert_abs_diff_eq;
use common::random_tree;
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use stablab::entropic::{generalized_entropy, minimal_entropy_measure};
use stablab::market::{bracket_distance, martingale_residual, Strategy, StrategyMode};
use stablab::positive::solve_power_field;
use stablab::pricing::{davis_price_under, indifference_price};
use stablab::probes::random_interior_measures;
use stablab::utility::{UtilityField, UtilityOnR, UtilityOnRPlus};

fn entropy(y: f64) -> f64 {
    if y == 0.0 {
        0.0
    } else {
        y * y.ln()
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(24))]

    #[test]
    fn minimal_entropy_beats_other_martingale_measures(seed in 0u64..10_000) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let tree = random_tree(&mut rng, 2);
        let q = minimal_entropy_measure(&tree, &UtilityOnR::exponential(1.0).unwrap()).unwrap().measure;
        prop_assert!(q.is_equivalent());
        prop_assert!(martingale_residual(&tree, &q).unwrap() <= 1e-10);
        let best = generalized_entropy(&tree, &q, entropy).unwrap();
        for other in random_interior_measures(&tree, 8, &mut rng) {
            prop_assert!(best <= generalized_entropy(&tree, &other, entropy).unwrap() + 1e-12);
        }
    }

    #[test]
    fn buyer_price_is_below_the_entropic_price(seed in 0u64..10_000, alpha in 0.5f64..2.0) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let tree = random_tree(&mut rng, 2);
        let claim: Vec<f64> = (0..tree.leaf_count()).map(|_| rng.gen_range(0.0..1.0)).collect();
        let u = UtilityOnR::exponential(alpha).unwrap();
        let q = minimal_entropy_measure(&tree, &u).unwrap().measure;
        let davis = davis_price_under(&q, &claim).unwrap().price;
        let buyer = indifference_price(&tree, &u, 0.0, &claim, 1e-11).unwrap();
        let (lo, hi) = buyer.bracket;
        prop_assert!(lo <= buyer.price && buyer.price <= hi);
        prop_assert!(buyer.price <= davis + 1e-9);
        // cash translation
        let shifted: Vec<f64> = claim.iter().map(|b| b + 0.25).collect();
        let moved = indifference_price(&tree, &u, 0.0, &shifted, 1e-11).unwrap().price;
        prop_assert!((moved - buyer.price - 0.25).abs() <= 1e-8);
    }

    #[test]
    fn bracket_distance_is_quadratic(seed in 0u64..10_000, scale in 0.1f64..3.0) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let tree = random_tree(&mut rng, 2);
        let positions = |rng: &mut ChaCha8Rng| -> Vec<Vec<f64>> {
            tree.internal_nodes().map(|_| vec![rng.gen_range(-1.0..1.0)]).collect()
        };
        let a = Strategy::from_positions(&tree, StrategyMode::Amounts, positions(&mut rng)).unwrap();
        let b = Strategy::from_positions(&tree, StrategyMode::Amounts, positions(&mut rng)).unwrap();
        let p = tree.physical_measure();
        let d = bracket_distance(&tree, &p, &a, &b).unwrap();
        let diff = a.difference(&b).unwrap();
        let stretched = Strategy::from_positions(
            &tree,
            StrategyMode::Amounts,
            tree.internal_nodes()
                .map(|n| vec![b.at(n)[0] + scale * diff.at(n)[0]])
                .collect(),
        )
        .unwrap();
        let ds = bracket_distance(&tree, &p, &stretched, &b).unwrap();
        prop_assert!((ds - scale * scale * d).abs() <= 1e-12 * (1.0 + ds));
    }

    #[test]
    fn power_optimum_keeps_wealth_positive(seed in 0u64..10_000, p in -20.0f64..-0.2) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let tree = random_tree(&mut rng, 2);
        let field = UtilityField::unit(UtilityOnRPlus::power(p).unwrap(), tree.leaf_count());
        let sol = solve_power_field(&tree, &field, 1.0).unwrap();
        prop_assert!(sol.wealth.values().iter().all(|x| *x > 0.0));
        // the deflator prices the optimal wealth at x0
        let phys = tree.physical_measure();
        let priced: Vec<f64> = sol.deflator.iter().zip(sol.wealth.terminal(&tree)).map(|(y, x)| y * x).collect();
        assert_abs_diff_eq!(phys.expectation(&priced), 1.0, epsilon = 1e-10);
    }
}
