//! Parameter and operation counting.
//!
//! Multiplies are the cost proxy: each scalar multiply in a pooled sum,
//! squared norm or the final halving is tallied once. Adds are tracked but
//! only informational.

use std::fmt;
use std::str::FromStr;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

use crate::error::{RafmError, Result};
use crate::eval::{forward_with, LevelScores, Tally};
use crate::model::{LevelAssignment, RaFMModel, RankLadder, SparseInstance};

#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct OpCounter {
    pub scope: String,
    pub multiplies: u64,
    pub adds: u64,
}

impl OpCounter {
    pub fn new(scope: impl Into<String>) -> Self {
        OpCounter { scope: scope.into(), multiplies: 0, adds: 0 }
    }
}

impl Tally for OpCounter {
    #[inline]
    fn mul(&mut self, n: u64) {
        self.multiplies += n;
    }

    #[inline]
    fn add(&mut self, n: u64) {
        self.adds += n;
    }
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct ParameterCount {
    /// `D_k * |F_k|` for each level.
    pub per_level: Vec<usize>,
    pub embeddings_total: usize,
    pub linear: usize,
    pub bias: usize,
    pub grand_total: usize,
}

/// Counts read off the stored tables.
pub fn parameter_count(model: &RaFMModel) -> ParameterCount {
    let per_level: Vec<usize> = model.tables().iter().map(|t| t.parameter_count()).collect();
    let embeddings_total = per_level.iter().sum();
    let linear = model.linear().len();
    ParameterCount { per_level, embeddings_total, linear, bias: 1, grand_total: embeddings_total + linear + 1 }
}

/// `sum_k D_k |F_k|` from the ladder and assignment alone.
pub fn expected_embedding_count(ladder: &RankLadder, assignment: &LevelAssignment) -> usize {
    (1..=ladder.levels()).map(|k| ladder.rank(k) * assignment.set_size(k)).sum()
}

/// Same result as [`crate::eval::evaluate`], with operations tallied.
pub fn counted_evaluate(model: &RaFMModel, x: &SparseInstance, counter: &mut OpCounter) -> LevelScores {
    forward_with(model, x, counter).scores
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Growth {
    Linear,
    Exponential,
}

impl FromStr for Growth {
    type Err = RafmError;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim().to_ascii_lowercase().as_str() {
            "linear" | "lin" => Ok(Growth::Linear),
            "exponential" | "exp" => Ok(Growth::Exponential),
            other => Err(RafmError::input(format!("unknown growth '{other}'"))),
        }
    }
}

impl fmt::Display for Growth {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Growth::Linear => "linear",
            Growth::Exponential => "exponential",
        })
    }
}

/// A synthetic rank/feature-set configuration.
///
/// Ranks: `D_k = k/m * D` (linear) or `2^(k-m) * D` (exponential).
/// Feature sets: `|F_k| = (1 - (k-1)/m) |F|` (linear) or `2^(1-k) |F|`
/// (exponential). Values are rounded to the nearest integer; ranks are then
/// bumped to at least `D_{k-1} + 1`.
#[derive(Clone, Debug, PartialEq)]
pub struct ComplexityScenario {
    pub rank_growth: Growth,
    pub feature_decay: Growth,
    pub m: usize,
    pub max_rank: usize,
    pub feature_count: usize,
    /// Probability that a feature is nonzero in a synthetic instance.
    pub density: f64,
    pub seed: u64,
}

impl ComplexityScenario {
    pub fn new(rank_growth: Growth, feature_decay: Growth, m: usize, max_rank: usize, feature_count: usize) -> Self {
        ComplexityScenario { rank_growth, feature_decay, m, max_rank, feature_count, density: 1.0, seed: 0 }
    }

    pub fn regime(&self) -> String {
        format!("{}/{}", self.rank_growth, self.feature_decay)
    }

    pub fn ranks(&self) -> Result<Vec<usize>> {
        if self.m == 0 || self.max_rank == 0 {
            return Err(RafmError::input("scenario needs m >= 1 and D >= 1"));
        }
        let m = self.m as f64;
        let d = self.max_rank as f64;
        let mut ranks = Vec::with_capacity(self.m);
        for k in 1..=self.m {
            let raw = match self.rank_growth {
                Growth::Linear => k as f64 / m * d,
                Growth::Exponential => 2f64.powi(k as i32 - self.m as i32) * d,
            };
            let mut r = (raw.round() as usize).max(1);
            if let Some(&prev) = ranks.last() {
                r = r.max(prev + 1);
            }
            ranks.push(r);
        }
        Ok(ranks)
    }

    pub fn set_sizes(&self) -> Result<Vec<usize>> {
        let m = self.m as f64;
        let f = self.feature_count as f64;
        let sizes: Vec<usize> = (1..=self.m)
            .map(|k| {
                let raw = match self.feature_decay {
                    Growth::Linear => (1.0 - (k as f64 - 1.0) / m) * f,
                    Growth::Exponential => 2f64.powi(1 - k as i32) * f,
                };
                raw.round() as usize
            })
            .collect();
        if let Some(k) = sizes.iter().position(|&s| s == 0) {
            return Err(RafmError::input(format!(
                "regime {} leaves F_{} empty for |F| = {}",
                self.regime(),
                k + 1,
                self.feature_count
            )));
        }
        Ok(sizes)
    }

    /// Ladder and assignment realizing the regime: features `0..|F_k|` are
    /// the members of `F_k`.
    pub fn layout(&self) -> Result<(RankLadder, LevelAssignment)> {
        if !(self.density > 0.0 && self.density <= 1.0) {
            return Err(RafmError::input(format!("density must lie in (0, 1], got {}", self.density)));
        }
        let ladder = RankLadder::new(self.ranks()?)?;
        let sizes = self.set_sizes()?;
        let levels = (0..self.feature_count)
            .map(|i| sizes.iter().take_while(|&&s| i < s).count() as u32)
            .collect();
        let assignment = LevelAssignment::new(levels, self.m)?;
        debug_assert_eq!(assignment.set_sizes(), &sizes[..]);
        Ok((ladder, assignment))
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct ScenarioReport {
    pub regime: String,
    pub m: usize,
    pub max_rank: usize,
    pub feature_count: usize,
    pub ranks: Vec<usize>,
    pub set_sizes: Vec<usize>,
    pub rafm_params: usize,
    pub fm_params: usize,
    pub rafm_mult: f64,
    pub fm_mult: f64,
    pub time_ratio: f64,
    pub param_ratio: f64,
}

impl ScenarioReport {
    pub const CSV_HEADER: &'static str = "regime,m,D,F,rafm_mult,fm_mult,time_ratio,param_ratio";

    pub fn csv_row(&self) -> String {
        format!(
            "{},{},{},{},{},{},{},{}",
            self.regime,
            self.m,
            self.max_rank,
            self.feature_count,
            self.rafm_mult,
            self.fm_mult,
            self.time_ratio,
            self.param_ratio
        )
    }
}

fn random_embeddings(model: &mut RaFMModel, rng: &mut ChaCha8Rng) {
    for level in 1..=model.levels() {
        for v in model.table_mut(level).as_mut_slice() {
            *v = StandardNormal.sample(rng);
        }
    }
}

/// Builds the regime's model and a rank-`D` FM over the same features,
/// evaluates both on `trials` shared synthetic instances and reports mean
/// multiply counts and the RaFM/FM ratios.
pub fn run_scenario(scenario: &ComplexityScenario, trials: usize) -> Result<ScenarioReport> {
    if trials == 0 {
        return Err(RafmError::input("need at least one trial"));
    }
    let (ladder, assignment) = scenario.layout()?;
    let mut rng = ChaCha8Rng::seed_from_u64(scenario.seed);
    let mut rafm = RaFMModel::zeros(ladder.clone(), assignment.clone())?;
    random_embeddings(&mut rafm, &mut rng);
    let mut fm = RaFMModel::plain_fm(scenario.feature_count, scenario.max_rank)?;
    random_embeddings(&mut fm, &mut rng);

    let mut rafm_total = 0u64;
    let mut fm_total = 0u64;
    for _ in 0..trials {
        let mut pairs: Vec<(u32, f64)> = Vec::new();
        for i in 0..scenario.feature_count as u32 {
            if rng.random::<f64>() < scenario.density {
                pairs.push((i, rng.random_range(0.5..1.5)));
            }
        }
        let x = SparseInstance::from_pairs(pairs, 0.0)?;
        let mut c = OpCounter::new("rafm");
        counted_evaluate(&rafm, &x, &mut c);
        rafm_total += c.multiplies;
        let mut c = OpCounter::new("fm");
        counted_evaluate(&fm, &x, &mut c);
        fm_total += c.multiplies;
    }
    let rafm_params = parameter_count(&rafm).embeddings_total;
    let fm_params = parameter_count(&fm).embeddings_total;
    let rafm_mult = rafm_total as f64 / trials as f64;
    let fm_mult = fm_total as f64 / trials as f64;
    Ok(ScenarioReport {
        regime: scenario.regime(),
        m: scenario.m,
        max_rank: scenario.max_rank,
        feature_count: scenario.feature_count,
        ranks: ladder.ranks().to_vec(),
        set_sizes: assignment.set_sizes().to_vec(),
        rafm_params,
        fm_params,
        rafm_mult,
        fm_mult,
        time_ratio: if fm_mult > 0.0 { rafm_mult / fm_mult } else { f64::NAN },
        param_ratio: rafm_params as f64 / fm_params as f64,
    })
}
