//! Property tests over randomly generated inputs.

use hhcontact::data_model::{bin_age, parameter_count};
use hhcontact::estimation::{default_init, fit_mle, quantile, FitOptions};
use hhcontact::ingest::{ingest_diary, DayFilter};
use hhcontact::likelihood::{
    brute_force_loglik, dataset_loglik, nested_sum_loglik, respondent_loglik,
};
use hhcontact::model_selection::{chi2_sf, SharingMask};
use hhcontact::network::{enumerate_distribution, state_count, EnumerateOptions};
use hhcontact::simulation::simulate_record;
use hhcontact::{
    AgeBins, AgeCategory, ContactCounts, DiaryDay, HouseholdComposition, ParameterVector,
    RespondentRecord, Stratum,
};
use proptest::prelude::*;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

const K: usize = 5;

fn theta_strategy() -> impl Strategy<Value = ParameterVector> {
    prop::collection::vec(
        prop_oneof![8 => 0.001f64..0.999, 1 => Just(0.0), 1 => Just(1.0)],
        parameter_count(K),
    )
    .prop_map(|v| ParameterVector::from_values(K, v).unwrap())
}

fn interior_theta() -> impl Strategy<Value = ParameterVector> {
    prop::collection::vec(0.01f64..0.99, parameter_count(K))
        .prop_map(|v| ParameterVector::from_values(K, v).unwrap())
}

/// Respondent category and the categories of the other members.
fn household(max_others: usize) -> impl Strategy<Value = (usize, Vec<usize>)> {
    (0..K, prop::collection::vec(0..K, 1..=max_others))
}

fn counts(members: &[usize]) -> Vec<u32> {
    let mut n = vec![0u32; K];
    members.iter().for_each(|&v| n[v] += 1);
    n
}

fn record(j: usize, n: Vec<u32>, w: Vec<u32>) -> RespondentRecord {
    RespondentRecord::new(
        "p",
        AgeCategory(j),
        HouseholdComposition(n),
        ContactCounts(w),
        DiaryDay::default(),
    )
    .unwrap()
}

fn contact_box(n: &[u32]) -> Vec<Vec<u32>> {
    n.iter().fold(vec![vec![]], |acc, &c| {
        acc.into_iter()
            .flat_map(|prefix: Vec<u32>| {
                (0..=c).map(move |x| {
                    let mut v = prefix.clone();
                    v.push(x);
                    v
                })
            })
            .collect()
    })
}

proptest! {
    #[test]
    fn every_age_falls_in_its_bin(age in 0i64..130) {
        let bins = AgeBins::default();
        let v = bin_age(age, &bins).unwrap();
        let lower = bins.lower_bounds();
        prop_assert!(i64::from(lower[v.0]) <= age);
        if v.0 + 1 < lower.len() {
            prop_assert!(age < i64::from(lower[v.0 + 1]));
        }
    }

    #[test]
    fn contacts_never_exceed_household_after_ingest(
        respondent_age in 0i64..90,
        roster in prop::collection::vec(0i64..90, 1..6),
        contacts in prop::collection::vec((0i64..90, 0usize..3, any::<bool>()), 0..10),
    ) {
        let mut body = String::from(
            "respondent_id,respondent_age,household_ages,contact_age,contact_gender,frequency,locations,diary_date,weekend,holiday\n",
        );
        let roster_text = roster.iter().map(i64::to_string).collect::<Vec<_>>().join(";");
        for (age, freq, at_home) in &contacts {
            let freq = ["daily", "often", "rare"][*freq];
            let place = if *at_home { "home" } else { "work" };
            body.push_str(&format!("r,{respondent_age},{roster_text},{age},F,{freq},{place},d1,0,0\n"));
        }
        if contacts.is_empty() {
            body.push_str(&format!("r,{respondent_age},{roster_text},,,,,d1,0,0\n"));
        }
        let (records, _) = ingest_diary(body.as_bytes(), &AgeBins::default(), DayFilter::All).unwrap();
        prop_assert_eq!(records.len(), 1);
        let rec = &records[0];
        prop_assert_eq!(rec.household.members() as usize, roster.len());
        for (w, n) in rec.contacts.counts().iter().zip(rec.household.counts()) {
            prop_assert!(w <= n);
        }
    }

    #[test]
    fn likelihood_forms_agree((j, others) in household(5), theta in theta_strategy(), seed in any::<u64>()) {
        let n = counts(&others);
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let w: Vec<u32> = n.iter().map(|&c| rand::Rng::random_range(&mut rng, 0..=c)).collect();
        let rec = record(j, n, w);
        let fast = respondent_loglik(&rec, &theta).unwrap();
        for other in [nested_sum_loglik(&rec, &theta).unwrap(), brute_force_loglik(&rec, &theta).unwrap()] {
            if fast.is_finite() {
                prop_assert!((fast - other).abs() <= 1e-12 * fast.abs().max(1.0), "{} vs {}", fast, other);
            } else {
                prop_assert_eq!(fast, other);
            }
        }
    }

    #[test]
    fn outcome_probabilities_sum_to_one((j, others) in household(4), theta in theta_strategy()) {
        let n = counts(&others);
        let total: f64 = contact_box(&n)
            .into_iter()
            .map(|w| respondent_loglik(&record(j, n.clone(), w), &theta).unwrap().exp())
            .sum();
        prop_assert!((total - 1.0).abs() <= 1e-10);
    }

    #[test]
    fn simulated_records_have_positive_probability((j, others) in household(5), theta in theta_strategy(), seed in any::<u64>()) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let rec = simulate_record(AgeCategory(j), &HouseholdComposition(counts(&others)), &theta, &mut rng).unwrap();
        prop_assert!(respondent_loglik(&rec, &theta).unwrap() > f64::NEG_INFINITY);
    }

    #[test]
    fn chi2_tail_decreases(x in 0.0f64..80.0, step in 0.01f64..10.0, df in 1u32..40) {
        let a = chi2_sf(x, df).unwrap();
        let b = chi2_sf(x + step, df).unwrap();
        prop_assert!((0.0..=1.0).contains(&a));
        prop_assert!(b <= a);
        // Strict only where both tails are representable.
        if a > 1e-300 && 1.0 - a > 1e-12 {
            prop_assert!(b < a);
        }
    }

    #[test]
    fn split_masks_free_one_slot_per_untied_parameter(tied in prop::collection::btree_set(0..parameter_count(K), 0..=20)) {
        for stratum in Stratum::ALL {
            let mask = SharingMask::split(K, stratum, &tied).unwrap();
            prop_assert_eq!(mask.free_count(), 2 * parameter_count(K) - tied.len());
        }
    }

    #[test]
    fn quantiles_are_monotone(values in prop::collection::vec(-10.0f64..10.0, 1..50), a in 0.0f64..1.0, b in 0.0f64..1.0) {
        let (lo, hi) = if a <= b { (a, b) } else { (b, a) };
        let (qa, qb) = (quantile(&values, lo), quantile(&values, hi));
        let min = values.iter().copied().fold(f64::INFINITY, f64::min);
        let max = values.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        prop_assert!(qa <= qb);
        prop_assert!(min <= qa && qb <= max);
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(24))]

    #[test]
    fn network_distribution_sums_to_one(members in prop::collection::vec(0..K, 1..=6), theta in theta_strategy()) {
        let members: Vec<AgeCategory> = members.into_iter().map(AgeCategory).collect();
        let labeled = enumerate_distribution(&members, &theta, &EnumerateOptions { min_prob: 0.0, ..Default::default() }).unwrap();
        prop_assert_eq!(labeled.entries.len() as u128, state_count(members.len()));
        prop_assert!((labeled.total() - 1.0).abs() <= 1e-10);
    }

    #[test]
    fn collapsing_conserves_probability(members in prop::collection::vec(0..K, 1..=5), theta in interior_theta(), min_prob in 0.0f64..0.1) {
        let members: Vec<AgeCategory> = members.into_iter().map(AgeCategory).collect();
        let labeled = enumerate_distribution(&members, &theta, &EnumerateOptions { min_prob, ..Default::default() }).unwrap();
        let collapsed = enumerate_distribution(&members, &theta, &EnumerateOptions { collapse: true, min_prob, ..Default::default() }).unwrap();
        prop_assert!((labeled.total() - collapsed.total()).abs() <= 1e-12);
        let merged: usize = collapsed.entries.iter().map(|e| e.class_size).sum::<usize>()
            + collapsed.remainder.as_ref().map_or(0, |r| r.states);
        prop_assert_eq!(merged as u128, state_count(members.len()));
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(12))]

    #[test]
    fn fitting_never_lowers_the_likelihood(truth in interior_theta(), seed in any::<u64>()) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let data: Vec<RespondentRecord> = (0..60)
            .map(|i| {
                let j = AgeCategory(i % K);
                let n = HouseholdComposition(vec![1, 0, 1, 1, 1]);
                simulate_record(j, &n, &truth, &mut rng).unwrap()
            })
            .collect();
        let start = dataset_loglik(&data, &default_init(K)).unwrap();
        let fit = fit_mle(&data, &FitOptions::default()).unwrap();
        prop_assert!(fit.loglik >= start - 1e-9, "{} < {}", fit.loglik, start);
    }
}
