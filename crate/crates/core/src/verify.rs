//! Randomized property suites run by `rafm verify`.
//!
//! Each suite compares a fast code path against a brute-force reference on
//! seeded random inputs and reports the worst discrepancy it saw. Case `c`
//! of a suite draws from its own ChaCha8 stream, so a failing case can be
//! replayed from the base seed and the reported index.

use rand::seq::index::sample;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

use crate::error::Result;
use crate::eval::{a_term, evaluate, forward};
use crate::instrument::{expected_embedding_count, parameter_count};
use crate::metrics::{auc, c_theta_delta, check_quasi_triangle, BoundParams};
use crate::model::{LevelAssignment, RaFMModel, RankLadder, SparseInstance, Task};
use crate::train::{constraint_gradient, task_gradient, task_loss, ConstraintLoss};

/// Step for central finite differences.
pub const FD_STEP: f64 = 1e-6;

/// Gradient errors are divided by `max(|analytic|, |numeric|, GRAD_FLOOR)`
/// so that near-zero gradients are judged on absolute error.
pub const GRAD_FLOOR: f64 = 1e-3;

#[derive(Clone, Debug)]
pub struct VerifyOptions {
    pub seed: u64,
    /// Random (model, instance) pairs for the evaluation oracle.
    pub oracle_cases: usize,
    /// Random small models for the gradient check.
    pub gradient_cases: usize,
    pub triangle_samples: usize,
    /// Perturbs the fast evaluation path so the oracle suite must fail.
    pub inject_fault: bool,
}

impl Default for VerifyOptions {
    fn default() -> Self {
        VerifyOptions {
            seed: 0,
            oracle_cases: 1_000,
            gradient_cases: 200,
            triangle_samples: 100_000,
            inject_fault: false,
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct PropertyResult {
    pub name: &'static str,
    pub cases: usize,
    pub worst: f64,
    pub threshold: f64,
    /// First failing case index, if any.
    pub failing_case: Option<usize>,
}

impl PropertyResult {
    pub fn passed(&self) -> bool {
        self.failing_case.is_none()
    }

    pub fn line(&self) -> String {
        let status = if self.passed() { "PASS" } else { "FAIL" };
        let mut s = format!(
            "{status} {:<20} cases={:<7} worst={:.3e} threshold={:.1e}",
            self.name, self.cases, self.worst, self.threshold
        );
        if let Some(c) = self.failing_case {
            s.push_str(&format!(" first_failing_case={c}"));
        }
        s
    }
}

#[derive(Clone, Debug, Default)]
pub struct VerifyReport {
    pub results: Vec<PropertyResult>,
}

impl VerifyReport {
    pub fn all_passed(&self) -> bool {
        self.results.iter().all(PropertyResult::passed)
    }
}

/// Running maximum of a per-case error, remembering the first violation.
struct Tracker {
    result: PropertyResult,
}

impl Tracker {
    fn new(name: &'static str, threshold: f64) -> Self {
        Tracker { result: PropertyResult { name, cases: 0, worst: 0.0, threshold, failing_case: None } }
    }

    /// Records an error value; NaN counts as a failure.
    fn record(&mut self, case: usize, err: f64) {
        let r = &mut self.result;
        if err.is_nan() || err > r.worst {
            r.worst = if err.is_nan() { f64::INFINITY } else { err };
        }
        if (err.is_nan() || err > r.threshold) && r.failing_case.is_none() {
            r.failing_case = Some(case);
        }
    }

    fn finish(mut self, cases: usize) -> PropertyResult {
        self.result.cases = cases;
        self.result
    }
}

fn case_rng(seed: u64, suite: u64, case: usize) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed ^ suite.wrapping_mul(0x9E37_79B9_7F4A_7C15));
    rng.set_stream(case as u64);
    rng
}

fn normal(rng: &mut ChaCha8Rng) -> f64 {
    StandardNormal.sample(rng)
}

/// A random layout filled with standard-normal parameters.
pub fn random_model(rng: &mut ChaCha8Rng, max_levels: usize, max_features: usize, max_rank: usize) -> RaFMModel {
    let m = rng.random_range(1..=max_levels.min(max_rank));
    let mut ranks: Vec<usize> = sample(rng, max_rank, m).into_iter().map(|r| r + 1).collect();
    ranks.sort_unstable();
    let f = rng.random_range(1..=max_features);
    let levels: Vec<u32> = (0..f).map(|_| rng.random_range(1..=m as u32)).collect();
    let ladder = RankLadder::new(ranks).expect("strictly increasing ranks");
    let assignment = LevelAssignment::new(levels, m).expect("levels in range");
    let mut model = RaFMModel::zeros(ladder, assignment).expect("consistent layout");
    for k in 1..=m {
        for v in model.table_mut(k).as_mut_slice() {
            *v = normal(rng);
        }
    }
    for w in model.linear_mut() {
        *w = normal(rng);
    }
    model.set_bias(normal(rng));
    model
}

/// Each feature is nonzero with probability one half. Some stored values
/// are exact zeros, which every path must ignore.
pub fn random_instance(rng: &mut ChaCha8Rng, feature_count: usize) -> SparseInstance {
    let mut indices = Vec::new();
    let mut values = Vec::new();
    for i in 0..feature_count {
        if rng.random_bool(0.5) {
            indices.push(i as u32);
            values.push(if rng.random_bool(0.1) { 0.0 } else { normal(rng) });
        }
    }
    SparseInstance::new(indices, values, 0.0).expect("sorted indices")
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

/// `B(1,p)` by explicit double loop: each pair uses level
/// `min(k_i, k_j, p)`.
pub fn partial_naive(model: &RaFMModel, x: &SparseInstance, p: usize) -> f64 {
    let items: Vec<(usize, f64)> = x.nonzeros().filter(|&(i, _)| i < model.feature_count()).collect();
    let a = model.assignment();
    let mut total = 0.0;
    for (n, &(i, xi)) in items.iter().enumerate() {
        for &(j, xj) in &items[n + 1..] {
            let level = a.level(i).min(a.level(j)).min(p);
            total += dot(model.embedding(level, i).unwrap(), model.embedding(level, j).unwrap()) * xi * xj;
        }
    }
    total
}

/// `A(l,k)` by explicit double loop over pairs in `F_k`.
pub fn a_term_naive(model: &RaFMModel, x: &SparseInstance, l: usize, k: usize) -> f64 {
    let a = model.assignment();
    let items: Vec<(usize, f64)> =
        x.nonzeros().filter(|&(i, _)| i < model.feature_count() && a.contains(k, i)).collect();
    let mut total = 0.0;
    for (n, &(i, xi)) in items.iter().enumerate() {
        for &(j, xj) in &items[n + 1..] {
            total += dot(model.embedding(l, i).unwrap(), model.embedding(l, j).unwrap()) * xi * xj;
        }
    }
    total
}

fn raw_score_naive(model: &RaFMModel, x: &SparseInstance) -> f64 {
    let linear: f64 = x
        .nonzeros()
        .filter(|&(i, _)| i < model.feature_count())
        .map(|(i, xi)| model.linear()[i] * xi)
        .sum();
    partial_naive(model, x, model.levels()) + linear + model.bias()
}

fn relative(fast: f64, slow: f64) -> f64 {
    (fast - slow).abs() / (1.0 + slow.abs())
}

/// Recursion output against the double loop, for every `B(1,p)`.
pub fn oracle_equivalence(opts: &VerifyOptions) -> PropertyResult {
    let mut t = Tracker::new("oracle_equivalence", 1e-9);
    for case in 0..opts.oracle_cases {
        let mut rng = case_rng(opts.seed, 1, case);
        let model = random_model(&mut rng, 4, 50, 16);
        let x = random_instance(&mut rng, model.feature_count());
        let scores = evaluate(&model, &x);
        for p in 1..=model.levels() {
            let mut fast = scores.partial(p);
            if opts.inject_fault {
                fast += 1e-3;
            }
            t.record(case, relative(fast, partial_naive(&model, &x, p)));
        }
    }
    t.finish(opts.oracle_cases)
}

/// Squared-sum `A(l,k)` against the double loop for all `l <= k`.
pub fn a_term_identity(opts: &VerifyOptions) -> PropertyResult {
    let mut t = Tracker::new("a_term_identity", 1e-10);
    for case in 0..opts.oracle_cases {
        let mut rng = case_rng(opts.seed, 2, case);
        let model = random_model(&mut rng, 4, 50, 16);
        let x = random_instance(&mut rng, model.feature_count());
        for k in 1..=model.levels() {
            for l in 1..=k {
                let fast = a_term(&model, &x, l, k).expect("valid level pair");
                t.record(case, relative(fast, a_term_naive(&model, &x, l, k)));
            }
        }
    }
    t.finish(opts.oracle_cases)
}

fn grad_error(analytic: f64, numeric: f64) -> f64 {
    (analytic - numeric).abs() / analytic.abs().max(numeric.abs()).max(GRAD_FLOOR)
}

/// Central difference of `loss` in one embedding coordinate.
fn fd_embedding<F>(model: &mut RaFMModel, level: usize, feature: usize, coord: usize, loss: F) -> f64
where
    F: Fn(&RaFMModel) -> f64,
{
    let orig = model.embedding(level, feature).unwrap()[coord];
    model.embedding_mut(level, feature).unwrap()[coord] = orig + FD_STEP;
    let up = loss(model);
    model.embedding_mut(level, feature).unwrap()[coord] = orig - FD_STEP;
    let down = loss(model);
    model.embedding_mut(level, feature).unwrap()[coord] = orig;
    (up - down) / (2.0 * FD_STEP)
}

/// Task and constraint gradients against central differences of losses
/// computed through the double-loop oracle. Regression cases use the
/// squared-score constraint, classification cases check both constraint
/// kinds.
pub fn gradient_check(opts: &VerifyOptions) -> PropertyResult {
    let mut t = Tracker::new("gradient_check", 1e-4);
    for case in 0..opts.gradient_cases {
        let mut rng = case_rng(opts.seed, 3, case);
        let mut model = random_model(&mut rng, 3, 12, 8);
        // keep scores moderate so log loss is not saturated everywhere
        for k in 1..=model.levels() {
            for v in model.table_mut(k).as_mut_slice() {
                *v *= 0.5;
            }
        }
        let x = random_instance(&mut rng, model.feature_count());
        let task = if case % 2 == 0 { Task::Regression } else { Task::Classification };
        let y = match task {
            Task::Regression => normal(&mut rng),
            Task::Classification => f64::from(u8::from(rng.random_bool(0.5))),
        };
        let pass = forward(&model, &x);
        let grads = match task_gradient(&model, &x, y, &pass, task) {
            Ok(g) => g,
            Err(_) => {
                t.record(case, f64::NAN);
                continue;
            }
        };
        let task_loss_of = |m: &RaFMModel| task_loss(task, raw_score_naive(m, &x), y);
        for s in &grads.free {
            for (c, &g) in s.grad.iter().enumerate() {
                let num = fd_embedding(&mut model, s.level, s.feature, c, task_loss_of);
                t.record(case, grad_error(g, num));
            }
        }
        for &(i, g) in &grads.linear {
            let orig = model.linear()[i];
            model.linear_mut()[i] = orig + FD_STEP;
            let up = task_loss_of(&model);
            model.linear_mut()[i] = orig - FD_STEP;
            let down = task_loss_of(&model);
            model.linear_mut()[i] = orig;
            t.record(case, grad_error(g, (up - down) / (2.0 * FD_STEP)));
        }
        let orig = model.bias();
        model.set_bias(orig + FD_STEP);
        let up = task_loss_of(&model);
        model.set_bias(orig - FD_STEP);
        let down = task_loss_of(&model);
        model.set_bias(orig);
        t.record(case, grad_error(grads.bias, (up - down) / (2.0 * FD_STEP)));

        let kinds: &[ConstraintLoss] = match task {
            Task::Regression => &[ConstraintLoss::SquaredScore],
            Task::Classification => &[ConstraintLoss::SquaredScore, ConstraintLoss::SoftCrossEntropy],
        };
        for &kind in kinds {
            for p in 1..model.levels() {
                let target = partial_naive(&model, &x, p + 1);
                let slices = constraint_gradient(&model, &x, &pass, p, kind).expect("p in range");
                let loss_of = |m: &RaFMModel| kind.value(partial_naive(m, &x, p), target);
                for s in &slices {
                    for (c, &g) in s.grad.iter().enumerate() {
                        let num = fd_embedding(&mut model, s.level, s.feature, c, loss_of);
                        t.record(case, grad_error(g, num));
                    }
                }
            }
        }
    }
    t.finish(opts.gradient_cases)
}

/// Stored embedding count against a per-feature tally `sum_i sum_{k<=k_i} D_k`.
pub fn parameter_accounting(opts: &VerifyOptions) -> PropertyResult {
    let mut t = Tracker::new("parameter_count", 0.0);
    for case in 0..opts.gradient_cases {
        let mut rng = case_rng(opts.seed, 4, case);
        let model = random_model(&mut rng, 6, 200, 64);
        let ladder = model.ladder();
        let a = model.assignment();
        let per_feature: usize =
            (0..model.feature_count()).map(|i| (1..=a.level(i)).map(|k| ladder.rank(k)).sum::<usize>()).sum();
        let stored = parameter_count(&model).embeddings_total;
        let formula = expected_embedding_count(ladder, a);
        let bad = stored != per_feature || formula != per_feature || model.check_invariants().is_err();
        t.record(case, if bad { 1.0 } else { 0.0 });
    }
    t.finish(opts.gradient_cases)
}

/// Draws a probability spread over the whole open interval, with extra
/// mass near both ends.
fn random_prob(rng: &mut ChaCha8Rng) -> f64 {
    let p = if rng.random_bool(0.5) {
        rng.random_range(1e-6..1.0 - 1e-6)
    } else {
        let tail = 10f64.powf(rng.random_range(-6.0..-0.5));
        if rng.random_bool(0.5) { tail } else { 1.0 - tail }
    };
    p.clamp(1e-6, 1.0 - 1e-6)
}

/// Quasi-triangle inequality for log loss on random triples. The reported
/// error is the largest violation, `max(0, lhs - rhs)`.
pub fn quasi_triangle(opts: &VerifyOptions) -> PropertyResult {
    let mut t = Tracker::new("quasi_triangle", crate::metrics::TRIANGLE_SLACK);
    let mut rng = case_rng(opts.seed, 5, 0);
    for case in 0..opts.triangle_samples {
        let y = u8::from(rng.random_bool(0.5));
        let y1 = random_prob(&mut rng);
        let y2 = random_prob(&mut rng);
        let delta = 1.0 + rng.random_range(1e-6..=99.0);
        match check_quasi_triangle(y, y1, y2, delta) {
            Ok(r) => t.record(case, (-r.margin).max(0.0)),
            Err(_) => t.record(case, f64::NAN),
        }
    }
    t.finish(opts.triangle_samples)
}

/// `C(theta, delta)` strictly decreases in `theta` on a grid and reaches 1
/// at `theta = 1`. A step that fails to decrease counts as a violation of
/// size `c - prev` (at least the threshold, so ties fail too).
pub fn c_monotone(opts: &VerifyOptions) -> PropertyResult {
    let mut t = Tracker::new("c_monotone", 1e-12);
    let deltas = [1.01, 1.5, 2.0, std::f64::consts::E, 10.0, 100.0];
    for (case, &delta) in deltas.iter().enumerate() {
        let c_at = |theta: f64| c_theta_delta(BoundParams { theta, delta }).unwrap_or(f64::NAN);
        let mut prev = f64::INFINITY;
        for step in 1..=19 {
            let c = c_at(step as f64 * 0.05);
            t.record(case, if c < prev { 0.0 } else { (c - prev).max(1.0) });
            prev = c;
        }
        t.record(case, (c_at(1.0) - 1.0).abs());
    }
    let _ = opts;
    t.finish(deltas.len())
}

fn auc_brute(scores: &[f64], labels: &[f64]) -> f64 {
    let mut wins = 0.0;
    let mut pairs = 0.0;
    for (s_pos, _) in scores.iter().zip(labels).filter(|(_, &y)| y > 0.5) {
        for (s_neg, _) in scores.iter().zip(labels).filter(|(_, &y)| y <= 0.5) {
            pairs += 1.0;
            wins += if s_pos > s_neg {
                1.0
            } else if s_pos == s_neg {
                0.5
            } else {
                0.0
            };
        }
    }
    wins / pairs
}

/// Rank-based AUC against the all-pairs definition, with frequent ties.
pub fn auc_pairs(opts: &VerifyOptions) -> PropertyResult {
    let mut t = Tracker::new("auc_pairs", 1e-12);
    for case in 0..opts.gradient_cases {
        let mut rng = case_rng(opts.seed, 6, case);
        let n = rng.random_range(2..120);
        let scores: Vec<f64> = (0..n).map(|_| f64::from(rng.random_range(0..20u8)) / 4.0).collect();
        let mut labels: Vec<f64> = (0..n).map(|_| f64::from(u8::from(rng.random_bool(0.4)))).collect();
        labels[0] = 1.0;
        labels[1] = 0.0;
        match auc(&scores, &labels) {
            Ok(a) => t.record(case, (a - auc_brute(&scores, &labels)).abs()),
            Err(_) => t.record(case, f64::NAN),
        }
    }
    t.finish(opts.gradient_cases)
}

/// Runs every suite in a fixed order.
pub fn run_all(opts: &VerifyOptions) -> Result<VerifyReport> {
    Ok(VerifyReport {
        results: vec![
            oracle_equivalence(opts),
            a_term_identity(opts),
            gradient_check(opts),
            parameter_accounting(opts),
            quasi_triangle(opts),
            c_monotone(opts),
            auc_pairs(opts),
        ],
    })
}
