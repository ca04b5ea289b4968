mod support;

use penetrance::baseline::{Baseline, BernsteinBaseline};
use penetrance::genetics::{founder_prior, AlleleFrequency};
use penetrance::peeling::{compute_messages, family_log_likelihood, member_evidence, PeelPlan};
use proptest::prelude::*;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

fn rel_err(a: f64, b: f64) -> f64 {
    (a - b).abs() / b.abs().max(1e-300)
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn peeling_matches_enumeration(seed in any::<u64>(), n in 3usize..=12, phi in 0.001f64..0.3) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let p = support::random_pedigree(&mut rng, n, 6, 2, "f");
        let m = support::random_model(&mut rng, 2);
        let xi = support::random_frailty(&mut rng, 2);
        let prior = founder_prior(AlleleFrequency::new(phi).unwrap());
        let fast = family_log_likelihood(&p, &m, &xi, &prior).unwrap();
        let slow = support::brute_force_log_likelihood(&p, &m, &xi, &prior);
        prop_assert!(rel_err(fast, slow) < 1e-10, "{fast} vs {slow}");
    }

    #[test]
    fn every_pivot_gives_the_same_likelihood(seed in any::<u64>(), n in 3usize..=12) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let p = support::random_pedigree(&mut rng, n, 6, 2, "f");
        let m = support::random_model(&mut rng, 2);
        let xi = support::random_frailty(&mut rng, 2);
        let prior = founder_prior(AlleleFrequency::new(0.05).unwrap());
        let ev = member_evidence(&p, &m, &xi).unwrap();
        let base = PeelPlan::new(&p);
        let reference = base.log_likelihood(&ev, &prior, base.log_prob_observed(&prior));
        for j in 0..p.len() {
            let plan = PeelPlan::with_pivot(&p, j);
            let ll = plan.log_likelihood(&ev, &prior, plan.log_prob_observed(&prior));
            prop_assert!(rel_err(ll, reference) < 1e-10, "pivot {j}: {ll} vs {reference}");
        }
    }

    #[test]
    fn messages_agree_at_every_member(seed in any::<u64>(), n in 3usize..=10) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let p = support::random_pedigree(&mut rng, n, 4, 2, "f");
        let m = support::random_model(&mut rng, 2);
        let xi = support::random_frailty(&mut rng, 2);
        let prior = founder_prior(AlleleFrequency::new(0.05).unwrap());
        let msgs = compute_messages(&p, &m, &xi, &prior).unwrap();
        let reference = family_log_likelihood(&p, &m, &xi, &prior).unwrap();
        for j in 0..p.len() {
            prop_assert!(rel_err(msgs.log_likelihood_at(j), reference) < 1e-10);
            let s: f64 = msgs.state_probabilities(j).iter().sum();
            prop_assert!((s - 1.0).abs() < 1e-12);
        }
    }
}

#[test]
fn likelihood_is_a_log_probability_under_the_phenotype_free_model() {
    // With zero hazards every phenotype is certain, so the likelihood of a
    // censored family is exactly one.
    let mut rng = ChaCha8Rng::seed_from_u64(7);
    let p = support::random_pedigree(&mut rng, 9, 6, 0, "f");
    let mut m = support::random_model(&mut rng, 2);
    for c in &mut m.causes {
        c.baseline = Baseline::Bernstein(BernsteinBaseline::new(vec![0.0; 3]).unwrap());
    }
    let xi = support::random_frailty(&mut rng, 2);
    let prior = founder_prior(AlleleFrequency::new(0.1).unwrap());
    let ll = family_log_likelihood(&p, &m, &xi, &prior).unwrap();
    assert!(ll.abs() < 1e-12, "{ll}");
}
