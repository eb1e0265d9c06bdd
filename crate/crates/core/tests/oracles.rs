use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use rhm_lab::bp::{brute_force_posterior, FactorTree};
use rhm_lab::meanfield::MeanField;
use rhm_lab::noise::{epsilon_beliefs, BeliefField};
use rhm_lab::rhm::{RhmParams, RuleSet};

fn small_params() -> impl Strategy<Value = RhmParams> {
    prop_oneof![
        Just(RhmParams::new(3, 2, 2, 2).unwrap()),
        Just(RhmParams::new(2, 2, 2, 2).unwrap()),
        Just(RhmParams::new(4, 2, 1, 3).unwrap()),
        Just(RhmParams::new(3, 3, 2, 1).unwrap()),
        Just(RhmParams::new(2, 2, 1, 3).unwrap()),
    ]
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn bp_matches_enumeration_with_arbitrary_beliefs(params in small_params(), seed in any::<u64>()) {
        let rs = RuleSet::from_seed(params, seed);
        let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0x5555);
        let v = params.v() as usize;
        let data: Vec<f64> = (0..params.d() as usize * v).map(|_| rng.random_range(0.01..1.0)).collect();
        let beliefs = BeliefField::from_rows(v, data);
        let exact = brute_force_posterior(&rs, &beliefs).unwrap();
        let bp = FactorTree::new(&rs).run(&beliefs).unwrap().marginals().unwrap();
        prop_assert!(bp.max_abs_diff(&exact.marginals) < 1e-10);
    }

    #[test]
    fn bp_matches_enumeration_under_eps_noise(params in small_params(), seed in any::<u64>(), eps in 0.0..=1.0f64) {
        let rs = RuleSet::from_seed(params, seed);
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let class = rng.random_range(0..params.v());
        let sample = rs.generate(class, &mut rng);
        let beliefs = epsilon_beliefs(sample.leaves(), params.v(), eps);
        let exact = brute_force_posterior(&rs, &beliefs).unwrap();
        let bp = FactorTree::new(&rs).run(&beliefs).unwrap().marginals().unwrap();
        prop_assert!(bp.max_abs_diff(&exact.marginals) < 1e-10);
    }

    #[test]
    fn meanfield_maps_stay_in_range(v in 2u32..40, m_frac in 0.0..1.0f64, p in 0.0..=1.0f64, q in 0.0..=1.0f64) {
        let m = 1 + ((v - 1) as f64 * m_frac) as u32;
        let mf = MeanField::new(&RhmParams::new(v, 2, m, 3).unwrap());
        let lo = 1.0 / mf.v;
        let (p, q) = (lo + (1.0 - lo) * p, lo + (1.0 - lo) * q);
        let up = mf.f_up(p);
        let down = mf.f_down(q, p);
        prop_assert!(up >= lo - 1e-12 && up <= 1.0 + 1e-12);
        prop_assert!(down >= lo - 1e-12 && down <= 1.0 + 1e-12);
    }
}
