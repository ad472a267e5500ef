//! Core data types. A [`RaFMModel`] stores one embedding table per ladder
//! level, holding vectors only for the features that reach that level.
//!
//! Levels are 1-based throughout the public API: a feature with level `k`
//! owns embeddings at levels `1..=k`, and level `p` has dimension
//! `ladder.rank(p)`.

use std::fmt;
use std::str::FromStr;

use crate::error::{RafmError, Result};

/// Strictly increasing embedding dimensions `D_1 < ... < D_m`.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct RankLadder {
    ranks: Vec<usize>,
}

impl RankLadder {
    pub fn new(ranks: Vec<usize>) -> Result<Self> {
        if ranks.is_empty() {
            return Err(RafmError::input("rank ladder must have at least one rank"));
        }
        if ranks[0] == 0 {
            return Err(RafmError::input("ranks must be positive"));
        }
        for w in ranks.windows(2) {
            if w[1] == w[0] {
                return Err(RafmError::input(format!("duplicate rank {} in ladder", w[0])));
            }
            if w[1] < w[0] {
                return Err(RafmError::input(format!(
                    "ranks must be strictly increasing, got {} after {}",
                    w[1], w[0]
                )));
            }
        }
        Ok(RankLadder { ranks })
    }

    /// Single-level ladder, i.e. a plain factorization machine of rank `d`.
    pub fn single(d: usize) -> Result<Self> {
        Self::new(vec![d])
    }

    /// Number of levels `m`.
    pub fn levels(&self) -> usize {
        self.ranks.len()
    }

    /// Dimension of level `level` (1-based).
    pub fn rank(&self, level: usize) -> usize {
        self.ranks[level - 1]
    }

    pub fn max_rank(&self) -> usize {
        *self.ranks.last().unwrap()
    }

    pub fn ranks(&self) -> &[usize] {
        &self.ranks
    }
}

impl fmt::Display for RankLadder {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let parts: Vec<String> = self.ranks.iter().map(|r| r.to_string()).collect();
        write!(f, "{}", parts.join(","))
    }
}

/// Per-feature maximum level `k_i` together with the sizes of the nested
/// feature sets `F_k = { i : k_i >= k }`.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct LevelAssignment {
    levels: Vec<u32>,
    set_sizes: Vec<usize>,
}

impl LevelAssignment {
    pub fn new(levels: Vec<u32>, m: usize) -> Result<Self> {
        if m == 0 {
            return Err(RafmError::input("level count must be at least 1"));
        }
        let mut set_sizes = vec![0usize; m];
        for (i, &k) in levels.iter().enumerate() {
            if k == 0 || k as usize > m {
                return Err(RafmError::input(format!(
                    "feature {i} has level {k}, expected 1..={m}"
                )));
            }
            for size in set_sizes.iter_mut().take(k as usize) {
                *size += 1;
            }
        }
        let assignment = LevelAssignment { levels, set_sizes };
        debug_assert!(assignment.is_nested());
        Ok(assignment)
    }

    /// Every feature at the same level.
    pub fn uniform(feature_count: usize, level: u32, m: usize) -> Result<Self> {
        Self::new(vec![level; feature_count], m)
    }

    pub fn feature_count(&self) -> usize {
        self.levels.len()
    }

    pub fn levels_count(&self) -> usize {
        self.set_sizes.len()
    }

    pub fn level(&self, feature: usize) -> usize {
        self.levels[feature] as usize
    }

    pub fn levels(&self) -> &[u32] {
        &self.levels
    }

    /// `|F_k|`.
    pub fn set_size(&self, level: usize) -> usize {
        self.set_sizes[level - 1]
    }

    pub fn set_sizes(&self) -> &[usize] {
        &self.set_sizes
    }

    /// Whether feature `i` belongs to `F_k`.
    pub fn contains(&self, level: usize, feature: usize) -> bool {
        self.levels[feature] as usize >= level
    }

    /// Members of `F_k` in ascending id order.
    pub fn members(&self, level: usize) -> impl Iterator<Item = usize> + '_ {
        self.levels
            .iter()
            .enumerate()
            .filter(move |(_, &k)| k as usize >= level)
            .map(|(i, _)| i)
    }

    /// Recounts `|F_k|` from the levels and checks `F_1 = F` and
    /// `|F_1| >= |F_2| >= ... >= |F_m|`.
    pub fn is_nested(&self) -> bool {
        let m = self.levels_count();
        let mut recount = vec![0usize; m];
        for &k in &self.levels {
            for c in recount.iter_mut().take(k as usize) {
                *c += 1;
            }
        }
        recount == self.set_sizes
            && self.set_sizes[0] == self.levels.len()
            && self.set_sizes.windows(2).all(|w| w[0] >= w[1])
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Task {
    Regression,
    Classification,
}

impl FromStr for Task {
    type Err = RafmError;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim().to_ascii_lowercase().as_str() {
            "reg" | "regression" => Ok(Task::Regression),
            "clf" | "classification" => Ok(Task::Classification),
            other => Err(RafmError::input(format!("unknown task '{other}'"))),
        }
    }
}

impl fmt::Display for Task {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Task::Regression => "reg",
            Task::Classification => "clf",
        })
    }
}

/// A sparse input row: strictly increasing zero-based feature ids with
/// finite values, plus a label.
#[derive(Clone, Debug, PartialEq)]
pub struct SparseInstance {
    indices: Vec<u32>,
    values: Vec<f64>,
    label: f64,
}

impl SparseInstance {
    pub fn new(indices: Vec<u32>, values: Vec<f64>, label: f64) -> Result<Self> {
        if indices.len() != values.len() {
            return Err(RafmError::input(format!(
                "{} indices but {} values",
                indices.len(),
                values.len()
            )));
        }
        for w in indices.windows(2) {
            if w[0] == w[1] {
                return Err(RafmError::input(format!("duplicate feature index {}", w[0])));
            }
            if w[0] > w[1] {
                return Err(RafmError::input(format!(
                    "feature indices not increasing: {} before {}",
                    w[0], w[1]
                )));
            }
        }
        if let Some(v) = values.iter().find(|v| !v.is_finite()) {
            return Err(RafmError::input(format!("non-finite feature value {v}")));
        }
        if !label.is_finite() {
            return Err(RafmError::input(format!("non-finite label {label}")));
        }
        Ok(SparseInstance { indices, values, label })
    }

    /// Builds an instance from pairs in any order; duplicates are rejected.
    pub fn from_pairs(mut pairs: Vec<(u32, f64)>, label: f64) -> Result<Self> {
        pairs.sort_by_key(|&(i, _)| i);
        let (indices, values) = pairs.into_iter().unzip();
        Self::new(indices, values, label)
    }

    /// Dense row helper, mostly for tests; zeros are kept as explicit entries.
    pub fn dense(values: &[f64], label: f64) -> Result<Self> {
        Self::new((0..values.len() as u32).collect(), values.to_vec(), label)
    }

    pub fn indices(&self) -> &[u32] {
        &self.indices
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn label(&self) -> f64 {
        self.label
    }

    pub fn set_label(&mut self, label: f64) {
        self.label = label;
    }

    pub fn len(&self) -> usize {
        self.indices.len()
    }

    pub fn is_empty(&self) -> bool {
        self.indices.is_empty()
    }

    pub fn iter(&self) -> impl Iterator<Item = (usize, f64)> + '_ {
        self.indices.iter().zip(&self.values).map(|(&i, &v)| (i as usize, v))
    }

    /// Entries with a nonzero value.
    pub fn nonzeros(&self) -> impl Iterator<Item = (usize, f64)> + '_ {
        self.iter().filter(|&(_, v)| v != 0.0)
    }

    /// One past the largest index, or 0 when empty.
    pub fn min_feature_count(&self) -> usize {
        self.indices.last().map_or(0, |&i| i as usize + 1)
    }
}

/// Embeddings of one level, stored only for the members of `F_k`.
#[derive(Clone, Debug, PartialEq)]
pub struct EmbeddingTable {
    dim: usize,
    members: Vec<u32>,
    slots: Vec<u32>,
    data: Vec<f64>,
}

const NO_SLOT: u32 = u32::MAX;

impl EmbeddingTable {
    fn zeros(dim: usize, level: usize, assignment: &LevelAssignment) -> Self {
        let members: Vec<u32> = assignment.members(level).map(|i| i as u32).collect();
        let mut slots = vec![NO_SLOT; assignment.feature_count()];
        for (slot, &i) in members.iter().enumerate() {
            slots[i as usize] = slot as u32;
        }
        let data = vec![0.0; dim * members.len()];
        EmbeddingTable { dim, members, slots, data }
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    /// Number of stored vectors, i.e. `|F_k|`.
    pub fn len(&self) -> usize {
        self.members.len()
    }

    pub fn is_empty(&self) -> bool {
        self.members.is_empty()
    }

    /// Stored feature ids in ascending order.
    pub fn members(&self) -> &[u32] {
        &self.members
    }

    /// Number of stored scalars.
    pub fn parameter_count(&self) -> usize {
        self.data.len()
    }

    pub fn contains(&self, feature: usize) -> bool {
        self.slots.get(feature).is_some_and(|&s| s != NO_SLOT)
    }

    pub fn get(&self, feature: usize) -> Option<&[f64]> {
        let slot = *self.slots.get(feature)?;
        if slot == NO_SLOT {
            return None;
        }
        let start = slot as usize * self.dim;
        Some(&self.data[start..start + self.dim])
    }

    pub fn get_mut(&mut self, feature: usize) -> Option<&mut [f64]> {
        let slot = *self.slots.get(feature)?;
        if slot == NO_SLOT {
            return None;
        }
        let start = slot as usize * self.dim;
        Some(&mut self.data[start..start + self.dim])
    }

    /// All stored scalars, rows in ascending feature order.
    pub fn as_slice(&self) -> &[f64] {
        &self.data
    }

    pub fn as_mut_slice(&mut self) -> &mut [f64] {
        &mut self.data
    }
}

/// A rank-aware factorization machine.
///
/// Level `k` stores one `D_k`-dimensional vector for every feature in
/// `F_k` and nothing else, so the embedding parameter count is exactly
/// `sum_k D_k * |F_k|`. A pair of features `(i, j)` interacts through
/// level `min(k_i, k_j)`.
#[derive(Clone, Debug, PartialEq)]
pub struct RaFMModel {
    bias: f64,
    linear: Vec<f64>,
    tables: Vec<EmbeddingTable>,
    ladder: RankLadder,
    assignment: LevelAssignment,
}

impl RaFMModel {
    /// All-zero model with tables shaped by the ladder and assignment.
    pub fn zeros(ladder: RankLadder, assignment: LevelAssignment) -> Result<Self> {
        if ladder.levels() != assignment.levels_count() {
            return Err(RafmError::input(format!(
                "ladder has {} levels but assignment uses {}",
                ladder.levels(),
                assignment.levels_count()
            )));
        }
        let tables = (1..=ladder.levels())
            .map(|k| EmbeddingTable::zeros(ladder.rank(k), k, &assignment))
            .collect();
        Ok(RaFMModel {
            bias: 0.0,
            linear: vec![0.0; assignment.feature_count()],
            tables,
            ladder,
            assignment,
        })
    }

    /// A fixed-rank factorization machine: one level of rank `rank` for all
    /// `feature_count` features.
    pub fn plain_fm(feature_count: usize, rank: usize) -> Result<Self> {
        let ladder = RankLadder::single(rank)?;
        let assignment = LevelAssignment::uniform(feature_count, 1, 1)?;
        Self::zeros(ladder, assignment)
    }

    pub fn ladder(&self) -> &RankLadder {
        &self.ladder
    }

    pub fn assignment(&self) -> &LevelAssignment {
        &self.assignment
    }

    pub fn levels(&self) -> usize {
        self.ladder.levels()
    }

    pub fn feature_count(&self) -> usize {
        self.linear.len()
    }

    pub fn bias(&self) -> f64 {
        self.bias
    }

    pub fn set_bias(&mut self, bias: f64) {
        self.bias = bias;
    }

    pub fn bias_mut(&mut self) -> &mut f64 {
        &mut self.bias
    }

    pub fn linear(&self) -> &[f64] {
        &self.linear
    }

    pub fn linear_mut(&mut self) -> &mut [f64] {
        &mut self.linear
    }

    /// Table for level `level` (1-based).
    pub fn table(&self, level: usize) -> &EmbeddingTable {
        &self.tables[level - 1]
    }

    pub fn table_mut(&mut self, level: usize) -> &mut EmbeddingTable {
        &mut self.tables[level - 1]
    }

    pub fn tables(&self) -> &[EmbeddingTable] {
        &self.tables
    }

    /// `v_i^{(level)}` if it is an active factor.
    pub fn embedding(&self, level: usize, feature: usize) -> Option<&[f64]> {
        self.tables.get(level.checked_sub(1)?)?.get(feature)
    }

    pub fn embedding_mut(&mut self, level: usize, feature: usize) -> Option<&mut [f64]> {
        self.tables.get_mut(level.checked_sub(1)?)?.get_mut(feature)
    }

    /// Overwrites an active factor.
    pub fn set_embedding(&mut self, level: usize, feature: usize, values: &[f64]) -> Result<()> {
        if level == 0 || level > self.levels() {
            return Err(RafmError::contract(format!("level {level} out of range")));
        }
        let dim = self.ladder.rank(level);
        if values.len() != dim {
            return Err(RafmError::contract(format!(
                "level {level} embeddings have dimension {dim}, got {}",
                values.len()
            )));
        }
        let row = self.embedding_mut(level, feature).ok_or_else(|| {
            RafmError::contract(format!("feature {feature} has no factor at level {level}"))
        })?;
        row.copy_from_slice(values);
        Ok(())
    }

    /// Total stored embedding scalars.
    pub fn embedding_parameter_count(&self) -> usize {
        self.tables.iter().map(EmbeddingTable::parameter_count).sum()
    }

    /// Checks that every table stores exactly `F_k` and that all values are finite.
    pub fn check_invariants(&self) -> Result<()> {
        if !self.assignment.is_nested() {
            return Err(RafmError::contract("feature sets are not nested"));
        }
        for (k, table) in self.tables.iter().enumerate() {
            let level = k + 1;
            let expected: Vec<u32> = self.assignment.members(level).map(|i| i as u32).collect();
            if table.members != expected {
                return Err(RafmError::contract(format!(
                    "level {level} table does not match F_{level}"
                )));
            }
            if table.dim != self.ladder.rank(level)
                || table.data.len() != table.dim * table.members.len()
            {
                return Err(RafmError::contract(format!("level {level} table has wrong shape")));
            }
        }
        let finite = self.bias.is_finite()
            && self.linear.iter().all(|v| v.is_finite())
            && self.tables.iter().all(|t| t.data.iter().all(|v| v.is_finite()));
        if !finite {
            return Err(RafmError::numeric("model holds non-finite parameters"));
        }
        Ok(())
    }
}
