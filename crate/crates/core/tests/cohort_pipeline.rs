use proptest::prelude::*;
use qdose_core::cohort::{
    cap_and_normalize, fit_action_bins, fit_norm_stats, generate_synthetic_cohort, impute_missing, split_cohort,
    ActionSpace, Cohort, RawDosePair, SyntheticCohortConfig,
};
use qdose_core::{DEFAULT_R_MAX, N_ACTIONS, N_FEATURES};

fn cohort(n: usize, seed: u64) -> Cohort {
    generate_synthetic_cohort(&SyntheticCohortConfig {
        n_patients: n,
        seed,
        ..Default::default()
    })
    .unwrap()
}

#[test]
fn generated_mortality_tracks_the_target() {
    for seed in [1, 2] {
        let c = cohort(2000, seed);
        assert_eq!(c.len(), 2000);
        assert!((c.mortality() - 0.137).abs() <= 0.02, "seed {seed}: {}", c.mortality());
    }
}

#[test]
fn split_is_by_patient_and_stratified() {
    let c = cohort(1000, 3);
    let (train, test) = split_cohort(&c, 0.2, 11).unwrap();
    assert_eq!(test.len(), 200);
    assert_eq!(train.len() + test.len(), c.len());
    let ids = |k: &Cohort| k.trajectories.iter().map(|t| t.patient_id.clone()).collect::<std::collections::BTreeSet<_>>();
    assert!(ids(&train).is_disjoint(&ids(&test)));
    assert!((train.mortality() - test.mortality()).abs() <= 0.01);
    for part in [&train, &test] {
        assert!((part.mortality() - c.mortality()).abs() <= 0.01);
    }
    assert_eq!(split_cohort(&c, 0.2, 11).unwrap(), (train, test));
}

#[test]
fn training_split_is_standardized() {
    let c = cohort(300, 4);
    let (train, _) = split_cohort(&c, 0.2, 5).unwrap();
    let train = impute_missing(train, 10).unwrap();
    let stats = fit_norm_stats(&train).unwrap();
    let train = cap_and_normalize(train, &stats).unwrap();
    let x = train.feature_matrix().unwrap();
    let n = x.rows() as f64;
    for j in 0..N_FEATURES {
        let col: Vec<f64> = x.iter_rows().map(|r| r[j]).collect();
        let mean = col.iter().sum::<f64>() / n;
        let var = col.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / n;
        if var == 0.0 {
            continue;
        }
        assert!(mean.abs() < 1e-9, "feature {j} mean {mean}");
        assert!((var.sqrt() - 1.0).abs() < 1e-9, "feature {j} std {}", var.sqrt());
    }
}

#[test]
fn terminal_rewards_count_survivors() {
    let mut c = cohort(500, 6);
    c.assign_rewards(DEFAULT_R_MAX);
    let positive = c
        .trajectories
        .iter()
        .filter(|t| t.steps.last().unwrap().reward == DEFAULT_R_MAX)
        .count();
    let survivors = c.trajectories.iter().filter(|t| !t.outcome.died()).count();
    assert_eq!(positive, survivors);
    for t in &c.trajectories {
        assert!(t.steps[..t.len() - 1].iter().all(|s| s.reward == 0.0));
    }
}

#[test]
fn imputing_a_complete_cohort_is_a_no_op() {
    let c = impute_missing(cohort(150, 7), 10).unwrap();
    assert!(c.timesteps().all(|s| s.features.is_complete()));
    assert_eq!(impute_missing(c.clone(), 10).unwrap(), c);
}

#[test]
fn fitted_bins_cover_the_training_doses() {
    let c = cohort(200, 8);
    let space = fit_action_bins(&c).unwrap();
    let mut seen = [false; N_ACTIONS];
    for s in c.timesteps() {
        seen[space.discretize(s.raw_dose).unwrap().index()] = true;
    }
    assert!(seen.iter().filter(|&&v| v).count() > N_ACTIONS / 2);
}

proptest! {
    #[test]
    fn discretization_is_total_and_indices_are_bijective(
        mut iv in proptest::array::uniform3(0.01f64..2000.0),
        mut vp in proptest::array::uniform3(0.001f64..2.0),
        dose in (0.0f64..5000.0, 0.0f64..5.0),
    ) {
        iv.sort_by(f64::total_cmp);
        vp.sort_by(f64::total_cmp);
        let space = ActionSpace::new(iv, vp).unwrap();
        let pair = RawDosePair::new(dose.0, dose.1).unwrap();
        let a = space.discretize(pair).unwrap();
        prop_assert_eq!(a, space.discretize(pair).unwrap());
        prop_assert!(a.index() < N_ACTIONS);
        prop_assert_eq!(qdose_core::cohort::DiscreteAction::from_index(a.index()).unwrap(), a);
        prop_assert_eq!(a.index(), 5 * a.iv_bin as usize + a.vp_bin as usize);
    }
}
