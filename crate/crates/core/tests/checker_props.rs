mod common;

use std::sync::Arc;

use mechkit::checks::{check, check_gsp_fast, check_gsp_naive, check_nonbossy, check_pe_on_image, check_sp};
use mechkit::search::random_gsd;
use mechkit::{tabulate, Axiom, Constraint, Engine, ProfileSpace, TabulatedMechanism};
use proptest::prelude::*;
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

const SHAPES: &[(usize, usize)] = &[(2, 2), (2, 3), (3, 2)];

/// A random GSD, possibly with a few entries overwritten.
fn near_gsd(c: &Arc<Constraint>, seed: u64) -> TabulatedMechanism {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut table = tabulate(&random_gsd(c, &mut rng).unwrap()).unwrap().into_table();
    for _ in 0..rng.gen_range(0..3) {
        let at = rng.gen_range(0..table.len());
        table[at] = *c.codes().choose(&mut rng).unwrap();
    }
    TabulatedMechanism::from_table(c.clone(), table).unwrap()
}

fn uniform(c: &Arc<Constraint>, seed: u64) -> TabulatedMechanism {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let len = ProfileSpace::new(c.n(), c.m()).unwrap().len();
    let table = (0..len).map(|_| *c.codes().choose(&mut rng).unwrap()).collect();
    TabulatedMechanism::from_table(c.clone(), table).unwrap()
}

/// A nonempty set of unanimous allocations: a social choice constraint
/// with some alternatives removed.
fn diagonal() -> impl Strategy<Value = Arc<Constraint>> {
    proptest::sample::select(SHAPES).prop_flat_map(|(n, m)| {
        proptest::collection::vec(any::<bool>(), m)
            .prop_filter("nonempty", |keep| keep.iter().any(|&k| k))
            .prop_map(move |keep| Arc::new(Constraint::from_predicate(n, m, |a| a.iter().all(|&x| x == a[0]) && keep[a[0]]).unwrap()))
    })
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn checkers_agree_with_the_oracles(c in common::constraint_of_shape(SHAPES), seed in any::<u64>()) {
        for f in [near_gsd(&c, seed), uniform(&c, seed)] {
            let gsp = common::oracle_gsp(&f);
            prop_assert_eq!(check_gsp_naive(&f).unwrap().is_pass(), gsp);
            prop_assert_eq!(check_gsp_fast(&f).unwrap().is_pass(), gsp);
            prop_assert_eq!(check_sp(&f).unwrap().is_pass(), common::oracle_sp(&f));
            prop_assert_eq!(check(&f, Axiom::ParetoEfficient, Engine::Naive).unwrap().is_pass(), common::oracle_pe(&f));
        }
    }

    #[test]
    fn group_proof_implies_efficient_on_image(c in common::constraint_of_shape(SHAPES), seed in any::<u64>()) {
        let f = near_gsd(&c, seed);
        if check_gsp_naive(&f).unwrap().is_pass() {
            prop_assert!(check_pe_on_image(&f).unwrap().is_pass());
        }
    }

    #[test]
    fn social_choice_is_nonbossy(c in diagonal(), seed in any::<u64>()) {
        for f in [near_gsd(&c, seed), uniform(&c, seed)] {
            prop_assert!(check_nonbossy(&f).unwrap().is_pass());
            prop_assert_eq!(check_gsp_naive(&f).unwrap().is_pass(), check_sp(&f).unwrap().is_pass());
        }
    }

    #[test]
    fn failing_witnesses_replay(c in common::constraint_of_shape(SHAPES), seed in any::<u64>()) {
        for f in [near_gsd(&c, seed), uniform(&c, seed)] {
            for axiom in Axiom::ALL {
                if axiom == Axiom::MutuallyBest {
                    continue;
                }
                for engine in [Engine::Naive, Engine::Fast] {
                    if let Some(w) = check(&f, axiom, engine).unwrap().witness() {
                        prop_assert!(w.replay(&f), "{} witness does not replay", axiom.name());
                    }
                }
            }
        }
    }
}
