use adrank::bundle::PolicyBundle;
use adrank::data::{split_train_test, ContextVector, Dataset, SupervisedRecord};
use adrank::eval::{importance_weighted_ctr, true_ctr};
use adrank::pipeline::{convert_supervised_to_bandit, ConversionConfig, Ratio};
use adrank::policy::{Policy, PolicyKind, StochasticPolicy};
use adrank::seed;
use adrank::train::{train_suite, Preprocess, SuiteConfig};
use rand::Rng;

/// Four noisy clusters in 3-D; the third coordinate is pure noise.
fn clusters(n: usize, seed_value: u64) -> Dataset {
    let centres = [[2.0, 0.0], [-2.0, 0.0], [0.0, 2.0], [0.0, -2.0]];
    let mut rng = seed::rng(seed_value);
    let records = (0..n)
        .map(|i| {
            let label = i % 4;
            let [cx, cy] = centres[label];
            let x = vec![cx + rng.random_range(-0.8..0.8), cy + rng.random_range(-0.8..0.8), rng.random_range(-3.0..3.0)];
            SupervisedRecord { context: ContextVector::new(x).unwrap(), label }
        })
        .collect();
    Dataset::full(3, 4, records).unwrap()
}

fn suite_cfg(kind: PolicyKind) -> SuiteConfig {
    SuiteConfig { kind, iterations: 20_000, seed: 5, ..SuiteConfig::default() }
}

#[test]
fn supervised_data_round_trips_through_training_and_evaluation() {
    let data = clusters(2000, 1);
    let (train, test) = split_train_test(&data, 0.7, 2).unwrap();
    let bandit = convert_supervised_to_bandit(&train, &ConversionConfig { seed: 3, num_arms: 4 }).unwrap();
    let pre = Preprocess::fit(&bandit, None, 10, true).unwrap();
    let prepared = pre.apply(&bandit).unwrap();

    for kind in [PolicyKind::Ranker, PolicyKind::Classifier] {
        let cfg = suite_cfg(kind);
        let suite = train_suite(&prepared, &cfg).unwrap();
        assert!(cfg.lambda_grid.contains(&suite.lambda));
        assert!(suite.arms.iter().all(|a| a.trained));

        let bundle = PolicyBundle::new(&suite, &cfg, pre.clone(), bandit.arm_labels(), 0.1);
        let reloaded = PolicyBundle::from_json(&bundle.to_json()).unwrap();
        assert_eq!(reloaded.id(), bundle.id());

        let report = true_ctr(&reloaded.policy().unwrap(), &reloaded.prepare(&test).unwrap()).unwrap();
        assert!(report.point > 0.9, "{kind:?}: {}", report.point);
    }
}

#[test]
fn training_is_reproducible_for_a_fixed_seed() {
    let data = clusters(800, 4);
    let bandit = convert_supervised_to_bandit(&data, &ConversionConfig { seed: 9, num_arms: 4 }).unwrap();
    let cfg = SuiteConfig { undersample: Some(Ratio::new(1, 1)), ..suite_cfg(PolicyKind::Classifier) };
    let a = train_suite(&bandit, &cfg).unwrap();
    let b = train_suite(&bandit, &cfg).unwrap();
    let pre = Preprocess::identity(3);
    let ja = PolicyBundle::new(&a, &cfg, pre.clone(), bandit.arm_labels(), 0.2).to_json();
    let jb = PolicyBundle::new(&b, &cfg, pre, bandit.arm_labels(), 0.2).to_json();
    assert_eq!(ja, jb);
    for arm in &a.arms {
        assert_eq!(arm.negatives, arm.positives);
    }
}

#[test]
fn bandit_estimate_brackets_the_full_information_value() {
    let data = clusters(6000, 7);
    let (train, test) = split_train_test(&data, 0.5, 8).unwrap();
    let train_log = convert_supervised_to_bandit(&train, &ConversionConfig { seed: 1, num_arms: 4 }).unwrap();
    let test_log = convert_supervised_to_bandit(&test, &ConversionConfig { seed: 2, num_arms: 4 }).unwrap();
    let suite = train_suite(&train_log, &suite_cfg(PolicyKind::Ranker)).unwrap();

    let eps = 0.2;
    let sp = StochasticPolicy::new(suite.policy.clone(), eps).unwrap();
    // exact value of the ε-greedy policy on the labelled test split
    let records = test.supervised().unwrap();
    let exact = records.iter().map(|r| sp.probability(r.context.as_slice(), r.label).unwrap()).sum::<f64>() / records.len() as f64;
    let report = importance_weighted_ctr(&sp, &test_log, 0.05).unwrap();
    let se = report.sample_std / (report.n as f64).sqrt();
    assert!((report.point - exact).abs() < 4.0 * se, "estimate {} vs exact {exact}", report.point);
    assert!(report.lcb.unwrap() <= report.point);
}
