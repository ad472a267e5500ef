use std::f64::consts::LN_2;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

use rafm::data::{assign_levels, Dataset};
use rafm::eval::predict;
use rafm::instrument::{expected_embedding_count, parameter_count};
use rafm::snapshot;
use rafm::train::{init_model, score_dataset, train, train_model, TrainConfig};
use rafm::{LevelAssignment, RaFMModel, RankLadder, SparseInstance, Task};

fn gauss(rng: &mut ChaCha8Rng) -> f64 {
    StandardNormal.sample(rng)
}

/// One nonzero per row, `y = w_i x_i`.
fn linear_rows(n: usize, seed: u64) -> Dataset {
    let w = [1.5, -2.0, 0.5, 1.0, -0.7];
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let rows = (0..n)
        .map(|_| {
            let i = rng.random_range(0..w.len());
            let v: f64 = gauss(&mut rng);
            SparseInstance::new(vec![i as u32], vec![v], w[i] * v).unwrap()
        })
        .collect();
    Dataset::new(rows, w.len()).unwrap()
}

fn reg_cfg(epochs: usize) -> TrainConfig {
    TrainConfig { rho_f: 0.05, rho_d: 0.05, l2: 0.0, epochs, seed: 11, ..TrainConfig::new(Task::Regression) }
}

#[test]
fn linear_only_data_loss_does_not_increase() {
    let data = linear_rows(400, 1);
    let ladder = RankLadder::new(vec![2, 4]).unwrap();
    let assignment = assign_levels(data.occurrence(), &ladder);
    let out = train(&data, &ladder, &assignment, &reg_cfg(15), None).unwrap();
    let losses: Vec<f64> = out.history.iter().map(|h| h.train_loss).collect();
    for w in losses.windows(2) {
        assert!(w[1] <= w[0] * 1.01 + 1e-9, "{losses:?}");
    }
    assert!(*losses.last().unwrap() < 1e-3, "{losses:?}");
}

#[test]
fn rank_one_interaction_is_learned_by_small_fm() {
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    let rows = (0..500)
        .map(|_| {
            let (a, b) = (gauss(&mut rng), gauss(&mut rng));
            SparseInstance::dense(&[a, b], a * b).unwrap()
        })
        .collect();
    let data = Dataset::new(rows, 2).unwrap();
    let ladder = RankLadder::single(2).unwrap();
    let assignment = LevelAssignment::uniform(2, 1, 1).unwrap();
    let cfg = TrainConfig { init_sigma: 0.1, ..reg_cfg(50) };
    let out = train(&data, &ladder, &assignment, &cfg, None).unwrap();
    let first_below = out.history.iter().find(|h| h.train_loss < 0.05);
    assert!(first_below.is_some(), "final loss {}", out.history.last().unwrap().train_loss);
}

#[test]
fn same_seed_same_model() {
    let data = linear_rows(200, 3);
    let ladder = RankLadder::new(vec![1, 3]).unwrap();
    let assignment = assign_levels(data.occurrence(), &ladder);
    let cfg = reg_cfg(3);
    let a = train(&data, &ladder, &assignment, &cfg, None).unwrap().model;
    let b = train(&data, &ladder, &assignment, &cfg, None).unwrap().model;
    assert_eq!(snapshot::to_bytes(&a), snapshot::to_bytes(&b));
    let c = train(&data, &ladder, &assignment, &TrainConfig { seed: 12, ..cfg }, None).unwrap().model;
    assert_ne!(snapshot::to_bytes(&a), snapshot::to_bytes(&c));
}

fn pair_rows(n: usize, f: usize, seed: u64) -> Dataset {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let rows = (0..n)
        .map(|_| {
            let i = rng.random_range(0..f);
            let mut j = rng.random_range(0..f);
            while j == i {
                j = rng.random_range(0..f);
            }
            let y = f64::from(u8::from((i + j) % 3 == 0));
            SparseInstance::from_pairs(vec![(i as u32, 1.0), (j as u32, 1.0)], y).unwrap()
        })
        .collect();
    Dataset::new(rows, f).unwrap()
}

#[test]
fn rescoring_training_set_reproduces_recorded_loss() {
    let data = pair_rows(300, 12, 4);
    let ladder = RankLadder::new(vec![2, 8]).unwrap();
    let assignment = assign_levels(data.occurrence(), &ladder);
    let cfg = TrainConfig { epochs: 4, ..TrainConfig::new(Task::Classification) };
    let out = train(&data, &ladder, &assignment, &cfg, Some(&data)).unwrap();
    let recorded = out.history.last().unwrap().train_loss;
    let again = score_dataset(&out.model, &data, Task::Classification).unwrap().loss;
    assert!((recorded - again).abs() <= 1e-12);
    assert_eq!(out.history.last().unwrap().valid_loss, Some(recorded));
}

#[test]
fn zero_model_has_log_loss_ln2() {
    let rows = (0..10)
        .map(|n| SparseInstance::new(vec![n % 5], vec![1.0], f64::from(n % 2)).unwrap())
        .collect();
    let data = Dataset::new(rows, 5).unwrap();
    let model = RaFMModel::zeros(RankLadder::new(vec![2, 4]).unwrap(), LevelAssignment::uniform(5, 2, 2).unwrap())
        .unwrap();
    let r = score_dataset(&model, &data, Task::Classification).unwrap();
    assert!((r.loss - LN_2).abs() < 1e-15);
    assert_eq!(r.auc, Some(0.5));
}

#[test]
fn single_class_has_loss_but_no_auc() {
    let rows = (0..4).map(|n| SparseInstance::new(vec![n], vec![1.0], 1.0).unwrap()).collect();
    let data = Dataset::new(rows, 4).unwrap();
    let model = RaFMModel::plain_fm(4, 2).unwrap();
    let r = score_dataset(&model, &data, Task::Classification).unwrap();
    assert!(r.loss.is_finite());
    assert_eq!(r.auc, None);
}

#[test]
fn no_inactive_factor_ever_exists() {
    let data = pair_rows(400, 30, 5);
    let ladder = RankLadder::new(vec![2, 4, 8]).unwrap();
    let assignment = assign_levels(data.occurrence(), &ladder);
    let expected = expected_embedding_count(&ladder, &assignment);
    let cfg = TrainConfig { epochs: 3, ..TrainConfig::new(Task::Classification) };
    let model = init_model(&ladder, &assignment, &cfg).unwrap();
    let mut checked = 0;
    train_model(model, &data, &cfg, None, |_, m| {
        m.check_invariants().unwrap();
        assert_eq!(parameter_count(m).embeddings_total, expected);
        for i in 0..m.feature_count() {
            for k in m.assignment().level(i) + 1..=m.levels() {
                assert!(m.embedding(k, i).is_none());
            }
        }
        checked += 1;
    })
    .unwrap();
    assert_eq!(checked, 3);
}

#[test]
fn single_level_model_is_a_plain_fm() {
    let data = pair_rows(200, 10, 6);
    let ladder = RankLadder::single(3).unwrap();
    let assignment = assign_levels(data.occurrence(), &ladder);
    let cfg = TrainConfig { epochs: 2, ..TrainConfig::new(Task::Classification) };
    let trained = train(&data, &ladder, &assignment, &cfg, None).unwrap().model;
    let loaded = snapshot::from_bytes(&snapshot::to_bytes(&trained)).unwrap();

    let mut fm = RaFMModel::plain_fm(10, 3).unwrap();
    fm.set_bias(loaded.bias());
    fm.linear_mut().copy_from_slice(loaded.linear());
    for i in 0..10 {
        fm.set_embedding(1, i, loaded.embedding(1, i).unwrap()).unwrap();
    }
    for x in data.instances() {
        assert_eq!(predict(&fm, x, Task::Classification), predict(&loaded, x, Task::Classification));
    }
}

#[test]
fn init_is_seeded_and_centered() {
    let ladder = RankLadder::single(100).unwrap();
    let assignment = LevelAssignment::uniform(1_000, 1, 1).unwrap();
    let cfg = TrainConfig { init_sigma: 0.01, seed: 9, ..TrainConfig::new(Task::Regression) };
    let a = init_model(&ladder, &assignment, &cfg).unwrap();
    assert_eq!(a, init_model(&ladder, &assignment, &cfg).unwrap());
    let v = a.table(1).as_slice();
    assert_eq!(v.len(), 100_000);
    let mean = v.iter().sum::<f64>() / v.len() as f64;
    assert!(mean.abs() < 3.0 * 0.01 / (v.len() as f64).sqrt());

    let empty = init_model(&ladder, &LevelAssignment::uniform(0, 1, 1).unwrap(), &cfg).unwrap();
    assert_eq!(parameter_count(&empty).grand_total, 1);
}

#[test]
fn empty_training_set_is_rejected() {
    let data = Dataset::new(vec![], 3).unwrap();
    let ladder = RankLadder::single(2).unwrap();
    let err = train(&data, &ladder, &LevelAssignment::uniform(3, 1, 1).unwrap(), &reg_cfg(1), None).unwrap_err();
    assert!(matches!(err, rafm::RafmError::Input(_)));
}
