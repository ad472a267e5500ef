//! Scoring a sparse instance.
//!
//! [`interaction_naive`] is the quadratic reference: every nonzero pair
//! interacts through level `min(k_i, k_j)`. [`evaluate`] computes the same
//! value in `O(sum_p D_p * n_p)` by building
//!
//! ```text
//! A(l,k) = 1/2 (|sum_{i in F_k} v_i^(l) x_i|^2 - sum_{i in F_k} |v_i^(l) x_i|^2)
//! B(1,1) = A(1,1)
//! B(1,p+1) = B(1,p) - A(p,p+1) + A(p+1,p+1)
//! ```
//!
//! where `n_p` is the number of nonzero features of the instance in `F_p`.
//!
//! Features whose id is not below the model's feature count are treated as
//! cold: zero embedding and zero weight.

use crate::error::{RafmError, Result};
use crate::model::{RaFMModel, SparseInstance, Task};

/// Sink for arithmetic operation counts. `()` discards them.
pub trait Tally {
    fn mul(&mut self, n: u64);
    fn add(&mut self, n: u64);
}

impl Tally for () {
    #[inline(always)]
    fn mul(&mut self, _n: u64) {}
    #[inline(always)]
    fn add(&mut self, _n: u64) {}
}

/// Partial interaction scores `B(1,p)` for `p = 1..=m`, plus the linear and
/// bias contributions.
#[derive(Clone, Debug, PartialEq)]
pub struct LevelScores {
    pub b_partial: Vec<f64>,
    pub linear_term: f64,
    pub bias_term: f64,
}

impl LevelScores {
    /// `B(1,m)`, the full interaction term.
    pub fn interaction(&self) -> f64 {
        *self.b_partial.last().expect("at least one level")
    }

    /// `B(1,p)` for 1-based `p`.
    pub fn partial(&self, level: usize) -> f64 {
        self.b_partial[level - 1]
    }

    pub fn raw_score(&self) -> f64 {
        self.interaction() + self.linear_term + self.bias_term
    }

    /// Raw score of the sub-model truncated at `level`, i.e. `B(1,level)`
    /// plus the shared linear and bias terms.
    pub fn raw_score_at(&self, level: usize) -> f64 {
        self.partial(level) + self.linear_term + self.bias_term
    }
}

/// Everything a training step needs from one forward pass.
#[derive(Clone, Debug)]
pub struct ForwardPass {
    pub scores: LevelScores,
    /// `pooled[p-1]` is `S(p,p) = sum_{i in F_p} v_i^(p) x_i`.
    pub pooled: Vec<Vec<f64>>,
}

pub fn sigmoid(s: f64) -> f64 {
    let p = if s >= 0.0 {
        1.0 / (1.0 + (-s).exp())
    } else {
        let e = s.exp();
        e / (1.0 + e)
    };
    // keep the value strictly inside (0, 1) even when exp saturates
    p.clamp(f64::MIN_POSITIVE, 1.0 - f64::EPSILON / 2.0)
}

fn check_level_pair(model: &RaFMModel, l: usize, k: usize) -> Result<()> {
    let m = model.levels();
    if l == 0 || k == 0 || l > m || k > m {
        return Err(RafmError::contract(format!("levels ({l}, {k}) outside 1..={m}")));
    }
    if l > k {
        return Err(RafmError::contract(format!(
            "level {l} embeddings are not defined on all of F_{k} when l > k"
        )));
    }
    Ok(())
}

#[inline]
fn in_vocab(model: &RaFMModel, i: usize) -> bool {
    i < model.feature_count()
}

/// Pairwise interaction term by explicit double loop over nonzero features.
pub fn interaction_naive(model: &RaFMModel, x: &SparseInstance) -> f64 {
    let active: Vec<(usize, f64)> = x.nonzeros().filter(|&(i, _)| in_vocab(model, i)).collect();
    let assignment = model.assignment();
    let mut total = 0.0;
    for (a, &(i, xi)) in active.iter().enumerate() {
        for &(j, xj) in &active[a + 1..] {
            let level = assignment.level(i).min(assignment.level(j));
            let vi = model.embedding(level, i).expect("active factor");
            let vj = model.embedding(level, j).expect("active factor");
            let dot: f64 = vi.iter().zip(vj).map(|(a, b)| a * b).sum();
            total += dot * xi * xj;
        }
    }
    total
}

/// `sum_{i in F_k, x_i != 0} v_i^(l) x_i`.
pub fn pooled_sum(model: &RaFMModel, x: &SparseInstance, l: usize, k: usize) -> Result<Vec<f64>> {
    check_level_pair(model, l, k)?;
    let assignment = model.assignment();
    let mut sum = vec![0.0; model.ladder().rank(l)];
    for (i, xi) in x.nonzeros() {
        if in_vocab(model, i) && assignment.contains(k, i) {
            let v = model.embedding(l, i).expect("active factor");
            for (s, vf) in sum.iter_mut().zip(v) {
                *s += vf * xi;
            }
        }
    }
    Ok(sum)
}

/// `A(l,k)` through the squared-sum identity.
pub fn a_term(model: &RaFMModel, x: &SparseInstance, l: usize, k: usize) -> Result<f64> {
    check_level_pair(model, l, k)?;
    let assignment = model.assignment();
    let mut sum = vec![0.0; model.ladder().rank(l)];
    let mut squares = 0.0;
    for (i, xi) in x.nonzeros() {
        if in_vocab(model, i) && assignment.contains(k, i) {
            let v = model.embedding(l, i).expect("active factor");
            for (s, vf) in sum.iter_mut().zip(v) {
                let p = vf * xi;
                *s += p;
                squares += p * p;
            }
        }
    }
    let norm: f64 = sum.iter().map(|s| s * s).sum();
    Ok(0.5 * (norm - squares))
}

/// Linear-time evaluation of all partial scores `B(1,p)`.
pub fn evaluate(model: &RaFMModel, x: &SparseInstance) -> LevelScores {
    forward_with(model, x, &mut ()).scores
}

/// [`evaluate`] that also keeps the pooled sums `S(p,p)` for gradients.
pub fn forward(model: &RaFMModel, x: &SparseInstance) -> ForwardPass {
    forward_with(model, x, &mut ())
}

pub fn forward_with<T: Tally>(model: &RaFMModel, x: &SparseInstance, tally: &mut T) -> ForwardPass {
    let m = model.levels();
    let assignment = model.assignment();
    let active: Vec<(usize, f64, usize)> = x
        .nonzeros()
        .filter(|&(i, _)| in_vocab(model, i))
        .map(|(i, xi)| (i, xi, assignment.level(i)))
        .collect();

    let mut pooled = Vec::with_capacity(m);
    // diag[p] = A(p,p), upper[p] = A(p,p+1)
    let mut diag = vec![0.0; m];
    let mut upper = vec![0.0; m];
    for level in 1..=m {
        let dim = model.ladder().rank(level);
        let table = model.table(level);
        let mut sum_all = vec![0.0; dim];
        let mut sum_upper = vec![0.0; dim];
        let mut sq_all = 0.0;
        let mut sq_upper = 0.0;
        let mut n_all = 0u64;
        let mut n_upper = 0u64;
        for &(i, xi, ki) in &active {
            if ki < level {
                continue;
            }
            let v = table.get(i).expect("active factor");
            let goes_up = ki > level;
            let mut sq = 0.0;
            if goes_up {
                for ((sa, su), vf) in sum_all.iter_mut().zip(sum_upper.iter_mut()).zip(v) {
                    let p = vf * xi;
                    *sa += p;
                    *su += p;
                    sq += p * p;
                }
                tally.add(2 * dim as u64);
            } else {
                for (sa, vf) in sum_all.iter_mut().zip(v) {
                    let p = vf * xi;
                    *sa += p;
                    sq += p * p;
                }
            }
            tally.mul(2 * dim as u64);
            tally.add(2 * dim as u64);
            sq_all += sq;
            n_all += 1;
            if goes_up {
                sq_upper += sq;
                n_upper += 1;
            }
        }
        if n_all >= 2 {
            diag[level - 1] = half_gap(&sum_all, sq_all, tally);
        }
        if level < m && n_upper >= 2 {
            upper[level - 1] = half_gap(&sum_upper, sq_upper, tally);
        }
        pooled.push(sum_all);
    }

    let mut b_partial = Vec::with_capacity(m);
    let mut b = diag[0];
    b_partial.push(b);
    for p in 1..m {
        b = b - upper[p - 1] + diag[p];
        tally.add(2);
        b_partial.push(b);
    }

    let linear_term = active.iter().map(|&(i, xi, _)| model.linear()[i] * xi).sum();
    ForwardPass {
        scores: LevelScores { b_partial, linear_term, bias_term: model.bias() },
        pooled,
    }
}

#[inline]
fn half_gap<T: Tally>(sum: &[f64], squares: f64, tally: &mut T) -> f64 {
    let norm: f64 = sum.iter().map(|s| s * s).sum();
    tally.mul(sum.len() as u64 + 1);
    tally.add(sum.len() as u64 + 1);
    0.5 * (norm - squares)
}

/// Prediction for `task`: the raw score for regression, its sigmoid for
/// classification.
pub fn predict(model: &RaFMModel, x: &SparseInstance, task: Task) -> f64 {
    let s = evaluate(model, x).raw_score();
    match task {
        Task::Regression => s,
        Task::Classification => sigmoid(s),
    }
}
