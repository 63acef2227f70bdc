use fairscore::data::synthetic::{generate, SyntheticSpec};
use fairscore::data::Dataset;
use fairscore::inproc::{
    hard_ratio, prejudice_index, ratio_penalty, train_adversarial, train_adversary,
    train_meta_fair, train_prejudice_remover, AdversarialSpec, FairnessBound, InprocError,
    MetaFairSpec, PiPenalty, PrejudiceSpec,
};
use fairscore::learners::objective::{numeric_gradient, Decay, Objective, TrainingData};
use fairscore::learners::{
    predict, prepare, train_logistic, train_network, Architecture, LearnerSpec, TrainedModel,
};
use ndarray::Array2;
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn biased(rows: usize, seed: u64) -> Dataset {
    generate(&SyntheticSpec {
        rows,
        sensitive_as_feature: true,
        seed,
        ..Default::default()
    })
    .unwrap()
}

fn group_mean_gap(m: &TrainedModel, ds: &Dataset) -> f64 {
    let s = predict(m, ds.features().view()).unwrap();
    let mut sum = [0.0; 2];
    let mut n = [0.0; 2];
    for (v, &a) in s.iter().zip(ds.sensitive()) {
        sum[a as usize] += v;
        n[a as usize] += 1.0;
    }
    (sum[0] / n[0] - sum[1] / n[1]).abs()
}

fn max_rel_error(g: &[f64], fd: &[f64]) -> f64 {
    let diff: f64 = g
        .iter()
        .zip(fd)
        .map(|(a, b)| (a - b).powi(2))
        .sum::<f64>()
        .sqrt();
    let scale = g
        .iter()
        .map(|a| a * a)
        .sum::<f64>()
        .sqrt()
        .max(fd.iter().map(|b| b * b).sum::<f64>().sqrt());
    diff / scale.max(1e-10)
}

fn random_data(n: usize, k: usize, seed: u64) -> (TrainingData, Vec<u8>) {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let x = Array2::from_shape_fn((n, k), |_| rng.random_range(-2.0..2.0));
    let y: Vec<f64> = (0..n).map(|_| f64::from(rng.random_bool(0.6))).collect();
    let w = (0..n).map(|_| rng.random_range(0.5..2.0)).collect();
    let a = (0..n).map(|i| (i % 3 == 0) as u8).collect();
    (TrainingData { x, y, w }, a)
}

#[test]
fn pi_term_gradients_match_finite_differences() {
    let (data, a) = random_data(40, 3, 2);
    let arch = Architecture::Logistic { inputs: 3 };
    let penalty = PiPenalty {
        eta: 30.0,
        sensitive: a,
    };
    let obj = Objective::new(arch, &data, Decay::Half(0.3)).with_extra(&penalty);
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    for _ in 0..20 {
        let theta: Vec<f64> = (0..4).map(|_| rng.random_range(-1.0..1.0)).collect();
        let (_, g) = obj.value_and_grad(&theta);
        let fd = numeric_gradient(|t| obj.value(t), &theta, 1e-5);
        assert!(max_rel_error(&g, &fd) < 1e-4);
    }
}

#[test]
fn meta_fair_penalty_gradients_match_finite_differences() {
    let (data, a) = random_data(60, 3, 3);
    let labels: Vec<u8> = data.y.iter().map(|&y| y as u8).collect();
    let arch = Architecture::Logistic { inputs: 3 };
    let mut rng = ChaCha8Rng::seed_from_u64(6);
    for bound in [
        FairnessBound::Independence,
        FairnessBound::Separation,
        FairnessBound::Sufficiency,
    ] {
        let mut spec = MetaFairSpec::new(bound, 0.999);
        spec.temperature = 0.5;
        let penalty = ratio_penalty(&spec, 4.0, &labels, &a);
        let obj = Objective::new(arch, &data, Decay::Half(0.0)).with_extra(&penalty);
        let mut checked = 0;
        while checked < 20 {
            let theta: Vec<f64> = (0..4).map(|_| rng.random_range(-1.5..1.5)).collect();
            let (_, g) = obj.value_and_grad(&theta);
            let fd = numeric_gradient(|t| obj.value(t), &theta, 1e-5);
            let err = max_rel_error(&g, &fd);
            assert!(err < 1e-4, "{bound:?} error {err}");
            checked += 1;
        }
    }
}

proptest! {
    #[test]
    fn pi_is_non_negative_and_zero_only_for_equal_means(
        scores in prop::collection::vec(0.0f64..=1.0, 2..60),
        split in 1usize..59,
    ) {
        let split = split.min(scores.len() - 1);
        let sensitive: Vec<u8> = (0..scores.len()).map(|i| u8::from(i >= split)).collect();
        let pi = prejudice_index(&scores, &sensitive).unwrap();
        prop_assert!(pi >= -1e-15);
        let mean = |g: u8| {
            let v: Vec<f64> = scores.iter().zip(&sensitive).filter(|(_, &a)| a == g).map(|(s, _)| *s).collect();
            v.iter().sum::<f64>() / v.len() as f64
        };
        if (mean(0) - mean(1)).abs() > 1e-6 {
            prop_assert!(pi > 0.0);
        }
        // equalizing the group means sends PI to zero
        let shift = mean(0) - mean(1);
        let eq: Vec<f64> = scores.iter().zip(&sensitive).map(|(&s, &a)| if a == 1 { s + shift } else { s }).collect();
        if eq.iter().all(|v| (0.0..=1.0).contains(v)) {
            prop_assert!(prejudice_index(&eq, &sensitive).unwrap().abs() < 1e-10);
        }
    }
}

#[test]
fn prejudice_remover_reduces_to_logistic_at_zero() {
    let ds = biased(400, 1);
    let plain = train_logistic(&ds, &LearnerSpec::logistic()).unwrap();
    let pr = train_prejudice_remover(&ds, &PrejudiceSpec::new(0.0)).unwrap();
    let diff = plain
        .parameters
        .iter()
        .zip(&pr.parameters)
        .map(|(a, b)| (a - b).abs())
        .fold(0.0, f64::max);
    assert!(diff < 1e-8);
    assert_eq!(plain.parameters, pr.parameters);
}

#[test]
fn strong_prejudice_penalty_narrows_the_score_gap() {
    let ds = biased(2000, 7);
    let plain = train_prejudice_remover(&ds, &PrejudiceSpec::new(0.0)).unwrap();
    let fair = train_prejudice_remover(&ds, &PrejudiceSpec::new(150.0)).unwrap();
    let (g0, g1) = (group_mean_gap(&plain, &ds), group_mean_gap(&fair, &ds));
    assert!(g1 < g0, "gap {g1} vs {g0}");
    assert!(g1 < 0.5 * g0, "gap {g1} vs {g0}");
}

#[test]
fn adversarial_reduces_to_network_at_zero() {
    let ds = biased(500, 2);
    let spec = AdversarialSpec {
        seed: 9,
        ..AdversarialSpec::new(0.0)
    };
    let adv = train_adversarial(&ds, &spec).unwrap();
    let net = train_network(&ds, &spec.predictor_spec()).unwrap();
    let bits = |m: &TrainedModel| m.parameters.iter().map(|p| p.to_bits()).collect::<Vec<_>>();
    assert_eq!(bits(&adv), bits(&net));
}

#[test]
fn adversary_alone_learns_from_informative_scores() {
    let ds = biased(2000, 3);
    let m = train_logistic(&ds, &LearnerSpec::logistic()).unwrap();
    let s = predict(&m, ds.features().view()).unwrap();
    let fit = train_adversary(&s, ds.labels(), ds.sensitive(), 50, 0.5, 4);
    let h = &fit.epoch_losses;
    assert_eq!(h.len(), 50);
    assert!(h[49] < h[0]);
    // mini-batch noise allows small bumps; the trend must be downward
    let mean = |v: &[f64]| v.iter().sum::<f64>() / v.len() as f64;
    assert!(mean(&h[40..]) < mean(&h[..10]));
    let t_mean = 24.5;
    let slope: f64 = h
        .iter()
        .enumerate()
        .map(|(t, v)| (t as f64 - t_mean) * (v - mean(h)))
        .sum();
    assert!(slope < 0.0);
    let chance = 1.0 - ds.sensitive_rate();
    assert!(fit.accuracy > chance);
}

#[test]
fn adversarial_training_hides_the_group_from_a_probe() {
    let ds = biased(2000, 11);
    let probe = |m: &TrainedModel| {
        let s = predict(m, ds.features().view()).unwrap();
        let fit = train_adversary(&s, ds.labels(), ds.sensitive(), 50, 0.5, 1);
        (fit.epoch_losses[49], fit.auc)
    };
    let base = train_adversarial(
        &ds,
        &AdversarialSpec {
            seed: 5,
            ..AdversarialSpec::new(0.0)
        },
    )
    .unwrap();
    let fair = train_adversarial(
        &ds,
        &AdversarialSpec {
            seed: 5,
            ..AdversarialSpec::new(0.1)
        },
    )
    .unwrap();
    let ((l0, auc0), (l1, auc1)) = (probe(&base), probe(&fair));
    // higher probe loss means the group is harder to recover
    assert!(l1 > l0, "probe loss {l1} vs {l0}");
    assert!(
        (auc1 - 0.5).abs() < (auc0 - 0.5).abs(),
        "probe AUC {auc1} vs {auc0}"
    );
}

#[test]
fn meta_fair_reduces_to_logistic_at_zero() {
    let ds = biased(400, 4);
    let plain = train_logistic(&ds, &LearnerSpec::logistic()).unwrap();
    for bound in [
        FairnessBound::Independence,
        FairnessBound::Separation,
        FairnessBound::Sufficiency,
    ] {
        let mf = train_meta_fair(&ds, &MetaFairSpec::new(bound, 0.0)).unwrap();
        assert_eq!(mf.model.parameters, plain.parameters);
        assert!(mf.stage_weights.is_empty());
    }
}

#[test]
fn symmetric_groups_have_ratio_one() {
    let base = generate(&SyntheticSpec {
        rows: 300,
        ..Default::default()
    })
    .unwrap();
    // every row appears once in each group
    let n = base.n_rows();
    let idx: Vec<usize> = (0..n).chain(0..n).collect();
    let doubled = base.subset(&idx);
    let sensitive: Vec<u8> = (0..2 * n).map(|i| u8::from(i >= n)).collect();
    let ds = Dataset::from_parts(
        doubled.features().clone(),
        doubled.labels().to_vec(),
        sensitive,
        vec![1.0; 2 * n],
        doubled.feature_names().to_vec(),
        doubled.encoding_report().clone(),
    )
    .unwrap();
    for bound in [
        FairnessBound::Independence,
        FairnessBound::Separation,
        FairnessBound::Sufficiency,
    ] {
        for sigma in [0.0, 0.8, 0.95] {
            let mf = train_meta_fair(&ds, &MetaFairSpec::new(bound, sigma)).unwrap();
            assert_eq!(mf.hard_ratio, 1.0);
        }
    }
}

#[test]
fn sufficiency_bound_raises_the_ppv_ratio() {
    let ds = biased(2000, 13);
    let loose = train_meta_fair(&ds, &MetaFairSpec::new(FairnessBound::Sufficiency, 0.0)).unwrap();
    let tight = train_meta_fair(&ds, &MetaFairSpec::new(FairnessBound::Sufficiency, 0.95)).unwrap();
    assert!(
        tight.hard_ratio > loose.hard_ratio,
        "{} vs {}",
        tight.hard_ratio,
        loose.hard_ratio
    );
    assert_eq!(tight.stage_ratios.len(), 6);
    for w in tight.stage_ratios.windows(2) {
        assert!(w[1] >= w[0]);
    }
    let s = predict(&tight.model, ds.features().view()).unwrap();
    let r = hard_ratio(
        FairnessBound::Sufficiency,
        &s,
        ds.labels(),
        ds.sensitive(),
        MetaFairSpec::new(FairnessBound::Sufficiency, 0.95).cutoff,
    );
    assert_eq!(r, tight.hard_ratio);
}

#[test]
fn meta_fair_stage_ratios_never_decrease() {
    let ds = biased(1000, 17);
    for bound in [FairnessBound::Independence, FairnessBound::Separation] {
        let mf = train_meta_fair(&ds, &MetaFairSpec::new(bound, 0.9)).unwrap();
        for w in mf.stage_ratios.windows(2) {
            assert!(w[1] >= w[0], "{bound:?}: {:?}", mf.stage_ratios);
        }
    }
}

#[test]
fn degenerate_measures_are_reported() {
    let x = Array2::from_shape_fn((6, 1), |(i, _)| i as f64);
    let ds = Dataset::new(x, vec![0, 1, 0, 1, 1, 1], vec![0, 0, 0, 1, 1, 1]).unwrap();
    assert!(matches!(
        train_meta_fair(&ds, &MetaFairSpec::new(FairnessBound::Separation, 0.9)),
        Err(InprocError::DegenerateFM(_))
    ));
    let (_, data) = prepare(&ds, true);
    assert_eq!(data.n_rows(), 6);
}
