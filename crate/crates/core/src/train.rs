//! Bi-level SGD training.
//!
//! Each feature `i` has exactly one free factor, `v_i^(k_i)`, trained on the
//! task loss of the full score `B(1,m)`. Its lower factors `v_i^(p)`,
//! `p < k_i`, are dependent: they are trained so that `B(1,p)` tracks
//! `B(1,p+1)`, with `B(1,p+1)` held fixed as the target.
//!
//! Gradients of `A(l,k)` reduce to
//! `dA(l,k)/dv_i^(l) = x_i S(l,k) - x_i^2 v_i^(l)` for `i` in `F_k`, where
//! `S(l,k)` is the pooled sum. Since level `p` enters `B(1,p)` and the free
//! part of `B(1,m)` only through `A(p,p)`, every gradient here uses `S(p,p)`.

use std::fmt;
use std::str::FromStr;
use std::time::Instant;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

use crate::data::Dataset;
use crate::error::{RafmError, Result};
use crate::eval::{forward, sigmoid, ForwardPass};
use crate::metrics;
use crate::model::{LevelAssignment, RaFMModel, RankLadder, SparseInstance, Task};

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum ConstraintLoss {
    /// `1/2 (B(1,p) - B(1,p+1))^2`.
    SquaredScore,
    /// Cross-entropy of `sigmoid(B(1,p))` against the soft target
    /// `sigmoid(B(1,p+1))`.
    SoftCrossEntropy,
}

impl ConstraintLoss {
    pub fn default_for(task: Task) -> Self {
        match task {
            Task::Regression => ConstraintLoss::SquaredScore,
            Task::Classification => ConstraintLoss::SoftCrossEntropy,
        }
    }

    /// Loss value with `target` standing for `B(1,p+1)`.
    pub fn value(self, score: f64, target: f64) -> f64 {
        match self {
            ConstraintLoss::SquaredScore => 0.5 * (score - target) * (score - target),
            ConstraintLoss::SoftCrossEntropy => {
                let t = sigmoid(target);
                let q = sigmoid(score);
                -t * q.ln() - (1.0 - t) * (1.0 - q).ln()
            }
        }
    }

    /// Derivative of [`value`](Self::value) with respect to `score`.
    pub fn derivative(self, score: f64, target: f64) -> f64 {
        match self {
            ConstraintLoss::SquaredScore => score - target,
            ConstraintLoss::SoftCrossEntropy => sigmoid(score) - sigmoid(target),
        }
    }
}

impl FromStr for ConstraintLoss {
    type Err = RafmError;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim() {
            "squared_score" => Ok(ConstraintLoss::SquaredScore),
            "soft_cross_entropy" => Ok(ConstraintLoss::SoftCrossEntropy),
            other => Err(RafmError::input(format!("unknown constraint loss '{other}'"))),
        }
    }
}

impl fmt::Display for ConstraintLoss {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            ConstraintLoss::SquaredScore => "squared_score",
            ConstraintLoss::SoftCrossEntropy => "soft_cross_entropy",
        })
    }
}

/// Task loss on the raw score `s`: `1/2 (s - y)^2` for regression, log loss
/// of `sigmoid(s)` for classification.
pub fn task_loss(task: Task, s: f64, y: f64) -> f64 {
    match task {
        Task::Regression => 0.5 * (s - y) * (s - y),
        Task::Classification => {
            // log(1 + e^s) - y s, written to avoid overflow
            let softplus = if s > 0.0 { s + (-s).exp().ln_1p() } else { s.exp().ln_1p() };
            softplus - y * s
        }
    }
}

pub fn task_loss_derivative(task: Task, s: f64, y: f64) -> f64 {
    match task {
        Task::Regression => s - y,
        Task::Classification => sigmoid(s) - y,
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct TrainConfig {
    /// Learning rate for free factors, linear weights and bias.
    pub rho_f: f64,
    /// Learning rate for dependent factors.
    pub rho_d: f64,
    /// L2 coefficient, applied as weight decay on touched parameters.
    pub l2: f64,
    pub epochs: usize,
    pub seed: u64,
    pub task: Task,
    pub constraint_loss: ConstraintLoss,
    pub init_sigma: f64,
}

impl TrainConfig {
    pub fn new(task: Task) -> Self {
        TrainConfig {
            rho_f: 0.02,
            rho_d: 0.02,
            l2: 3e-3,
            epochs: 10,
            seed: 0,
            task,
            constraint_loss: ConstraintLoss::default_for(task),
            init_sigma: 0.05,
        }
    }

    pub fn validate(&self) -> Result<()> {
        let positive = |name: &str, v: f64| {
            if v.is_finite() && v > 0.0 {
                Ok(())
            } else {
                Err(RafmError::input(format!("{name} must be positive, got {v}")))
            }
        };
        positive("rho_f", self.rho_f)?;
        positive("rho_d", self.rho_d)?;
        positive("init_sigma", self.init_sigma)?;
        if !(self.l2.is_finite() && self.l2 >= 0.0) {
            return Err(RafmError::input(format!("l2 must be non-negative, got {}", self.l2)));
        }
        if self.epochs == 0 {
            return Err(RafmError::input("epochs must be at least 1"));
        }
        if self.task == Task::Regression && self.constraint_loss == ConstraintLoss::SoftCrossEntropy {
            return Err(RafmError::input(
                "soft_cross_entropy constraint loss requires the classification task",
            ));
        }
        Ok(())
    }
}

/// Gaussian `N(0, init_sigma^2)` embeddings from a seeded generator, zero
/// linear weights and bias.
pub fn init_model(ladder: &RankLadder, assignment: &LevelAssignment, cfg: &TrainConfig) -> Result<RaFMModel> {
    let mut model = RaFMModel::zeros(ladder.clone(), assignment.clone())?;
    let normal = Normal::new(0.0, cfg.init_sigma)
        .map_err(|e| RafmError::input(format!("init_sigma: {e}")))?;
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    for level in 1..=model.levels() {
        for v in model.table_mut(level).as_mut_slice() {
            *v = normal.sample(&mut rng);
        }
    }
    Ok(model)
}

/// Gradient of one stored factor `v_feature^(level)`.
#[derive(Clone, Debug, PartialEq)]
pub struct SliceGrad {
    pub level: usize,
    pub feature: usize,
    pub grad: Vec<f64>,
}

/// Gradients for one step, split into free and dependent factors. Only
/// features with a nonzero value appear.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct GradientSlices {
    /// Factors at each feature's own level `k_i`.
    pub free: Vec<SliceGrad>,
    /// Factors below each feature's level, from the constraint losses.
    pub dependent: Vec<SliceGrad>,
    pub linear: Vec<(usize, f64)>,
    pub bias: f64,
}

impl GradientSlices {
    pub fn all_finite(&self) -> bool {
        self.bias.is_finite()
            && self.linear.iter().all(|(_, g)| g.is_finite())
            && self
                .free
                .iter()
                .chain(&self.dependent)
                .all(|s| s.grad.iter().all(|g| g.is_finite()))
    }
}

/// `factor * (x_i S(p,p) - x_i^2 v_i^(p))` for one feature.
fn factor_gradient(v: &[f64], pooled: &[f64], xi: f64, factor: f64) -> Vec<f64> {
    let xi2 = xi * xi;
    v.iter().zip(pooled).map(|(vf, sf)| factor * (xi * sf - xi2 * vf)).collect()
}

/// Task-path gradients for a given loss derivative
/// `dL/ds`. Embedding gradients follow only the direct path through
/// `A(k_i, k_i)`; the implicit dependence of lower factors is dropped.
pub fn free_gradient(model: &RaFMModel, x: &SparseInstance, pass: &ForwardPass, dloss: f64) -> GradientSlices {
    let assignment = model.assignment();
    let mut out = GradientSlices { bias: dloss, ..Default::default() };
    for (i, xi) in x.nonzeros() {
        if i >= model.feature_count() {
            continue;
        }
        let level = assignment.level(i);
        let v = model.embedding(level, i).expect("active factor");
        out.free.push(SliceGrad {
            level,
            feature: i,
            grad: factor_gradient(v, &pass.pooled[level - 1], xi, dloss),
        });
        out.linear.push((i, dloss * xi));
    }
    out
}

/// Task-loss gradient for free factors, linear weights and bias.
pub fn task_gradient(
    model: &RaFMModel,
    x: &SparseInstance,
    y: f64,
    pass: &ForwardPass,
    task: Task,
) -> Result<GradientSlices> {
    let s = pass.scores.raw_score();
    let dloss = task_loss_derivative(task, s, y);
    if !dloss.is_finite() {
        return Err(RafmError::numeric(format!("loss derivative is {dloss} at score {s}")));
    }
    let grads = free_gradient(model, x, pass, dloss);
    if !grads.all_finite() {
        return Err(RafmError::numeric("non-finite task gradient"));
    }
    Ok(grads)
}

/// Gradient of the level-`p` constraint loss with respect to
/// `v^(p)` restricted to `F_{p+1}`. `B(1,p+1)` is a constant target.
pub fn constraint_gradient(
    model: &RaFMModel,
    x: &SparseInstance,
    pass: &ForwardPass,
    p: usize,
    kind: ConstraintLoss,
) -> Result<Vec<SliceGrad>> {
    let m = model.levels();
    if p == 0 || p >= m {
        return Err(RafmError::contract(format!("constraint level {p} outside 1..{m}")));
    }
    let factor = kind.derivative(pass.scores.partial(p), pass.scores.partial(p + 1));
    if !factor.is_finite() {
        return Err(RafmError::numeric(format!("constraint derivative at level {p} is {factor}")));
    }
    let assignment = model.assignment();
    let pooled = &pass.pooled[p - 1];
    let mut out = Vec::new();
    for (i, xi) in x.nonzeros() {
        if i < model.feature_count() && assignment.contains(p + 1, i) {
            let v = model.embedding(p, i).expect("active factor");
            out.push(SliceGrad { level: p, feature: i, grad: factor_gradient(v, pooled, xi, factor) });
        }
    }
    Ok(out)
}

/// Every gradient for one sample, all from the same forward pass.
pub fn step_gradients(model: &RaFMModel, x: &SparseInstance, y: f64, cfg: &TrainConfig) -> Result<GradientSlices> {
    let pass = forward(model, x);
    let mut grads = task_gradient(model, x, y, &pass, cfg.task)?;
    for p in 1..model.levels() {
        grads.dependent.extend(constraint_gradient(model, x, &pass, p, cfg.constraint_loss)?);
    }
    if !grads.all_finite() {
        return Err(RafmError::numeric("non-finite constraint gradient"));
    }
    Ok(grads)
}

fn decay_update(row: &mut [f64], grad: &[f64], rate: f64, l2: f64) {
    for (v, g) in row.iter_mut().zip(grad) {
        *v -= rate * (g + l2 * *v);
    }
}

/// One synchronous SGD step on a single sample. Instances without any
/// nonzero in-vocabulary feature leave the model untouched, bias included.
pub fn sgd_step(model: &mut RaFMModel, x: &SparseInstance, y: f64, cfg: &TrainConfig) -> Result<()> {
    if !x.nonzeros().any(|(i, _)| i < model.feature_count()) {
        return Ok(());
    }
    let grads = step_gradients(model, x, y, cfg)?;
    apply_gradients(model, &grads, cfg)
}

/// Applies precomputed gradients: dependent factors at `rho_d`, everything
/// else at `rho_f`, weight decay on all touched parameters except the bias.
pub fn apply_gradients(model: &mut RaFMModel, grads: &GradientSlices, cfg: &TrainConfig) -> Result<()> {
    for s in &grads.dependent {
        let row = model.embedding_mut(s.level, s.feature).expect("active factor");
        decay_update(row, &s.grad, cfg.rho_d, cfg.l2);
    }
    for s in &grads.free {
        let row = model.embedding_mut(s.level, s.feature).expect("active factor");
        decay_update(row, &s.grad, cfg.rho_f, cfg.l2);
    }
    for &(i, g) in &grads.linear {
        let w = &mut model.linear_mut()[i];
        *w -= cfg.rho_f * (g + cfg.l2 * *w);
    }
    *model.bias_mut() -= cfg.rho_f * grads.bias;

    let touched_finite = model.bias().is_finite()
        && grads.linear.iter().all(|&(i, _)| model.linear()[i].is_finite())
        && grads.free.iter().chain(&grads.dependent).all(|s| {
            model.embedding(s.level, s.feature).unwrap().iter().all(|v| v.is_finite())
        });
    if !touched_finite {
        return Err(RafmError::numeric("update produced non-finite parameters"));
    }
    Ok(())
}

/// Dataset-level predictions and metrics.
#[derive(Clone, Debug, PartialEq)]
pub struct EvalReport {
    /// Mean squared error (regression) or mean log loss (classification).
    pub loss: f64,
    /// `None` for regression or single-class data.
    pub auc: Option<f64>,
    pub predictions: Vec<f64>,
}

/// Scores every instance with the sub-model truncated at `level`
/// (`level = m` is the full model).
pub fn score_dataset_at(model: &RaFMModel, data: &Dataset, task: Task, level: usize) -> Result<EvalReport> {
    let predictions: Vec<f64> = data
        .instances()
        .iter()
        .map(|x| {
            let s = forward(model, x).scores.raw_score_at(level);
            match task {
                Task::Regression => s,
                Task::Classification => sigmoid(s),
            }
        })
        .collect();
    let labels = data.labels();
    let (loss, auc) = match task {
        Task::Regression => (metrics::mean_square_loss(&predictions, &labels)?, None),
        Task::Classification => {
            (metrics::mean_log_loss(&predictions, &labels)?, metrics::auc(&predictions, &labels).ok())
        }
    };
    Ok(EvalReport { loss, auc, predictions })
}

pub fn score_dataset(model: &RaFMModel, data: &Dataset, task: Task) -> Result<EvalReport> {
    score_dataset_at(model, data, task, model.levels())
}

#[derive(Clone, Debug, PartialEq)]
pub struct EpochMetrics {
    pub epoch: usize,
    pub train_loss: f64,
    pub valid_loss: Option<f64>,
    pub valid_auc: Option<f64>,
    pub wall_ms: u128,
}

impl EpochMetrics {
    pub const CSV_HEADER: &'static str = "epoch,train_loss,valid_loss,valid_auc,wall_ms";

    pub fn csv_row(&self) -> String {
        let opt = |v: Option<f64>| v.map(|v| v.to_string()).unwrap_or_default();
        format!(
            "{},{},{},{},{}",
            self.epoch,
            self.train_loss,
            opt(self.valid_loss),
            opt(self.valid_auc),
            self.wall_ms
        )
    }
}

pub fn metrics_csv(history: &[EpochMetrics]) -> String {
    let mut out = String::from(EpochMetrics::CSV_HEADER);
    out.push('\n');
    for row in history {
        out.push_str(&row.csv_row());
        out.push('\n');
    }
    out
}

#[derive(Clone, Debug)]
pub struct TrainOutcome {
    pub model: RaFMModel,
    pub history: Vec<EpochMetrics>,
}

/// Initializes a model and trains it with [`train_model`].
pub fn train(
    data: &Dataset,
    ladder: &RankLadder,
    assignment: &LevelAssignment,
    cfg: &TrainConfig,
    validation: Option<&Dataset>,
) -> Result<TrainOutcome> {
    cfg.validate()?;
    let model = init_model(ladder, assignment, cfg)?;
    train_model(model, data, cfg, validation, |_, _| {})
}

/// Runs `cfg.epochs` passes of [`sgd_step`] over per-epoch shuffles of
/// `data`, calling `after_epoch` with the epoch number and the model.
pub fn train_model<F>(
    mut model: RaFMModel,
    data: &Dataset,
    cfg: &TrainConfig,
    validation: Option<&Dataset>,
    mut after_epoch: F,
) -> Result<TrainOutcome>
where
    F: FnMut(usize, &RaFMModel),
{
    cfg.validate()?;
    if data.is_empty() {
        return Err(RafmError::input("training set is empty"));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    rng.set_stream(1);
    let mut order: Vec<usize> = (0..data.len()).collect();
    let mut history = Vec::with_capacity(cfg.epochs);
    for epoch in 1..=cfg.epochs {
        let started = Instant::now();
        order.shuffle(&mut rng);
        for &n in &order {
            let x = &data.instances()[n];
            sgd_step(&mut model, x, x.label(), cfg).map_err(|e| match e {
                RafmError::Numeric(msg) => {
                    RafmError::Numeric(format!("epoch {epoch}, instance {n}: {msg}"))
                }
                other => other,
            })?;
        }
        let train_loss = score_dataset(&model, data, cfg.task)?.loss;
        let (valid_loss, valid_auc) = match validation.filter(|v| !v.is_empty()) {
            Some(v) => {
                let r = score_dataset(&model, v, cfg.task)?;
                (Some(r.loss), r.auc)
            }
            None => (None, None),
        };
        history.push(EpochMetrics {
            epoch,
            train_loss,
            valid_loss,
            valid_auc,
            wall_ms: started.elapsed().as_millis(),
        });
        after_epoch(epoch, &model);
    }
    Ok(TrainOutcome { model, history })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::eval::fixtures::{hand_model, ones};
    use crate::eval::evaluate;

    fn reg_cfg() -> TrainConfig {
        TrainConfig {
            rho_f: 0.1,
            rho_d: 0.1,
            l2: 0.0,
            epochs: 1,
            seed: 3,
            task: Task::Regression,
            constraint_loss: ConstraintLoss::SquaredScore,
            init_sigma: 0.01,
        }
    }

    #[test]
    fn loss_derivatives() {
        assert_eq!(task_loss_derivative(Task::Regression, 3.0, 1.0), 2.0);
        assert_eq!(task_loss_derivative(Task::Classification, 0.0, 1.0), -0.5);
        assert!((task_loss(Task::Classification, 0.0, 1.0) - 2f64.ln()).abs() < 1e-15);
        assert!(task_loss(Task::Classification, 800.0, 1.0).abs() < 1e-12);
        assert!(task_loss(Task::Classification, -800.0, 1.0).is_finite());
    }

    #[test]
    fn config_validation() {
        let mut cfg = reg_cfg();
        cfg.validate().unwrap();
        cfg.rho_f = 0.0;
        assert!(cfg.validate().is_err());
        let mut cfg = reg_cfg();
        cfg.epochs = 0;
        assert!(cfg.validate().is_err());
        let mut cfg = reg_cfg();
        cfg.constraint_loss = ConstraintLoss::SoftCrossEntropy;
        assert!(cfg.validate().is_err());
    }

    #[test]
    fn init_is_deterministic() {
        let ladder = RankLadder::new(vec![2, 4]).unwrap();
        let assignment = LevelAssignment::new(vec![1, 2, 2, 1], 2).unwrap();
        let a = init_model(&ladder, &assignment, &reg_cfg()).unwrap();
        let b = init_model(&ladder, &assignment, &reg_cfg()).unwrap();
        assert_eq!(a, b);
        assert_eq!(a.bias(), 0.0);
        assert!(a.linear().iter().all(|&w| w == 0.0));
        assert!(a.table(2).as_slice().iter().any(|&v| v != 0.0));
    }

    #[test]
    fn init_without_features() {
        let ladder = RankLadder::new(vec![2]).unwrap();
        let assignment = LevelAssignment::new(vec![], 1).unwrap();
        let model = init_model(&ladder, &assignment, &reg_cfg()).unwrap();
        assert_eq!(model.embedding_parameter_count(), 0);
        assert_eq!(model.feature_count(), 0);
    }

    #[test]
    fn init_mean_near_zero() {
        let ladder = RankLadder::new(vec![10]).unwrap();
        let assignment = LevelAssignment::uniform(10_000, 1, 1).unwrap();
        let mut cfg = reg_cfg();
        cfg.init_sigma = 0.01;
        let model = init_model(&ladder, &assignment, &cfg).unwrap();
        let vals = model.table(1).as_slice();
        assert_eq!(vals.len(), 100_000);
        let mean = vals.iter().sum::<f64>() / vals.len() as f64;
        assert!(mean.abs() < 3.0 * 0.01 / (1e5f64).sqrt(), "mean {mean}");
    }

    #[test]
    fn single_feature_has_no_embedding_gradient() {
        let model = hand_model();
        let x = SparseInstance::new(vec![0], vec![2.0], 1.0).unwrap();
        let pass = forward(&model, &x);
        let g = task_gradient(&model, &x, 1.0, &pass, Task::Regression).unwrap();
        assert!(g.free.iter().all(|s| s.grad.iter().all(|&v| v == 0.0)));
        assert_eq!(g.bias, -1.0);
        assert_eq!(g.linear, vec![(0, -2.0)]);
    }

    #[test]
    fn constraint_hand_example() {
        let model = hand_model();
        let pass = forward(&model, &ones());
        let g = constraint_gradient(&model, &ones(), &pass, 1, ConstraintLoss::SquaredScore).unwrap();
        assert_eq!(g.len(), 2);
        assert_eq!(g[0], SliceGrad { level: 1, feature: 0, grad: vec![24.0] });
        // feature 1: 6 * (6 - 3)
        assert_eq!(g[1].grad, vec![18.0]);
        assert!(constraint_gradient(&model, &ones(), &pass, 2, ConstraintLoss::SquaredScore).is_err());
        assert!(constraint_gradient(&model, &ones(), &pass, 0, ConstraintLoss::SquaredScore).is_err());
    }

    #[test]
    fn constraint_zero_at_match() {
        let mut model = hand_model();
        // make level 2 reproduce level 1 on the (0,1) pair: 2*3 = 6
        model.set_embedding(2, 0, &[2.0, 0.0]).unwrap();
        model.set_embedding(2, 1, &[3.0, 0.0]).unwrap();
        let pass = forward(&model, &ones());
        assert_eq!(pass.scores.partial(1), pass.scores.partial(2));
        for kind in [ConstraintLoss::SquaredScore, ConstraintLoss::SoftCrossEntropy] {
            let g = constraint_gradient(&model, &ones(), &pass, 1, kind).unwrap();
            assert!(g.iter().all(|s| s.grad.iter().all(|&v| v == 0.0)));
        }
    }

    #[test]
    fn gradient_scales_with_loss_derivative() {
        let model = hand_model();
        let x = SparseInstance::dense(&[0.5, -1.5, 2.0], 0.0).unwrap();
        let pass = forward(&model, &x);
        let g1 = free_gradient(&model, &x, &pass, 0.7);
        let g3 = free_gradient(&model, &x, &pass, 2.1);
        for (a, b) in g1.free.iter().zip(&g3.free) {
            for (u, v) in a.grad.iter().zip(&b.grad) {
                assert!((3.0 * u - v).abs() < 1e-12);
            }
        }
        assert!((3.0 * g1.bias - g3.bias).abs() < 1e-12);
    }

    #[test]
    fn hand_step() {
        let mut model = hand_model();
        model.set_bias(1.0);
        let before = model.clone();
        sgd_step(&mut model, &ones(), 6.0, &reg_cfg()).unwrap();
        // L' = 0, so only dependent factors move
        assert_eq!(model.embedding(2, 0), before.embedding(2, 0));
        assert_eq!(model.embedding(2, 1), before.embedding(2, 1));
        assert_eq!(model.embedding(1, 2), before.embedding(1, 2));
        assert_eq!(model.linear(), before.linear());
        assert_eq!(model.bias(), 1.0);
        let v0 = model.embedding(1, 0).unwrap()[0];
        assert!((v0 - (2.0 - 2.4)).abs() < 1e-12);
        let v1 = model.embedding(1, 1).unwrap()[0];
        assert!((v1 - (3.0 - 1.8)).abs() < 1e-12);
    }

    #[test]
    fn zero_instance_is_fixed_point() {
        let mut model = hand_model();
        let before = model.clone();
        let x = SparseInstance::dense(&[0.0, 0.0, 0.0], 1.0).unwrap();
        let mut cfg = reg_cfg();
        cfg.l2 = 0.1;
        sgd_step(&mut model, &x, 5.0, &cfg).unwrap();
        assert_eq!(model.tables(), before.tables());
        assert_eq!(model.linear(), before.linear());
        assert_eq!(model.bias(), before.bias());
    }

    #[test]
    fn l2_decay_excludes_bias() {
        let mut model = hand_model();
        model.set_embedding(2, 0, &[2.0, 0.0]).unwrap();
        model.set_embedding(2, 1, &[3.0, 0.0]).unwrap();
        model.set_bias(0.5);
        let x = ones();
        let s = evaluate(&model, &x).raw_score();
        let mut cfg = reg_cfg();
        cfg.l2 = 0.5;
        sgd_step(&mut model, &x, s, &cfg).unwrap();
        assert_eq!(model.bias(), 0.5);
        // zero gradient, pure decay: v <- v - 0.1 * 0.5 * v
        assert!((model.embedding(1, 2).unwrap()[0] - 0.95).abs() < 1e-12);
    }

    #[test]
    fn train_rejects_empty() {
        let ladder = RankLadder::new(vec![2]).unwrap();
        let assignment = LevelAssignment::uniform(2, 1, 1).unwrap();
        let empty = Dataset::new(vec![], 2).unwrap();
        assert!(matches!(
            train(&empty, &ladder, &assignment, &reg_cfg(), None),
            Err(RafmError::Input(_))
        ));
    }

    #[test]
    fn metrics_csv_layout() {
        let rows = vec![EpochMetrics { epoch: 1, train_loss: 0.5, valid_loss: None, valid_auc: None, wall_ms: 3 }];
        assert_eq!(metrics_csv(&rows), "epoch,train_loss,valid_loss,valid_auc,wall_ms\n1,0.5,,,3\n");
    }
}
