//! Sparse datasets read from libsvm text, plus the occurrence counts that
//! drive level assignment.

use std::fmt::Write as _;
use std::io::BufRead;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::error::{RafmError, Result};
use crate::model::{LevelAssignment, RankLadder, SparseInstance};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Default)]
pub enum IndexBase {
    #[default]
    Zero,
    One,
}

impl IndexBase {
    pub fn from_digit(d: u8) -> Result<Self> {
        match d {
            0 => Ok(IndexBase::Zero),
            1 => Ok(IndexBase::One),
            other => Err(RafmError::input(format!("index base must be 0 or 1, got {other}"))),
        }
    }

    pub fn offset(self) -> u64 {
        match self {
            IndexBase::Zero => 0,
            IndexBase::One => 1,
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct Dataset {
    instances: Vec<SparseInstance>,
    feature_count: usize,
    occurrence: Vec<u64>,
}

impl Dataset {
    /// Validates that every index is below `feature_count` and counts
    /// nonzero occurrences per feature.
    pub fn new(instances: Vec<SparseInstance>, feature_count: usize) -> Result<Self> {
        let mut occurrence = vec![0u64; feature_count];
        for (n, x) in instances.iter().enumerate() {
            if x.min_feature_count() > feature_count {
                return Err(RafmError::input(format!(
                    "instance {n} uses feature {} but the dataset has {feature_count} features",
                    x.min_feature_count() - 1
                )));
            }
            for (i, _) in x.nonzeros() {
                occurrence[i] += 1;
            }
        }
        Ok(Dataset { instances, feature_count, occurrence })
    }

    /// Feature count inferred as one past the largest index.
    pub fn from_instances(instances: Vec<SparseInstance>) -> Self {
        let feature_count = instances.iter().map(SparseInstance::min_feature_count).max().unwrap_or(0);
        Self::new(instances, feature_count).expect("feature count covers all indices")
    }

    pub fn instances(&self) -> &[SparseInstance] {
        &self.instances
    }

    pub fn feature_count(&self) -> usize {
        self.feature_count
    }

    /// `n_i`: number of instances where feature `i` is nonzero.
    pub fn occurrence(&self) -> &[u64] {
        &self.occurrence
    }

    pub fn len(&self) -> usize {
        self.instances.len()
    }

    pub fn is_empty(&self) -> bool {
        self.instances.is_empty()
    }

    pub fn labels(&self) -> Vec<f64> {
        self.instances.iter().map(SparseInstance::label).collect()
    }

    pub fn total_nonzeros(&self) -> u64 {
        self.instances.iter().map(|x| x.nonzeros().count() as u64).sum()
    }

    pub fn mean_nonzeros(&self) -> f64 {
        if self.instances.is_empty() {
            0.0
        } else {
            self.total_nonzeros() as f64 / self.instances.len() as f64
        }
    }

    /// Same instances with a larger feature space.
    pub fn widen(mut self, feature_count: usize) -> Result<Self> {
        if feature_count < self.feature_count {
            return Err(RafmError::input(format!(
                "cannot shrink feature space from {} to {feature_count}",
                self.feature_count
            )));
        }
        self.occurrence.resize(feature_count, 0);
        self.feature_count = feature_count;
        Ok(self)
    }

    /// `n(F_k)`: mean number of nonzero features per instance lying in `F_k`.
    pub fn expected_nonzeros(&self, assignment: &LevelAssignment) -> Vec<f64> {
        let m = assignment.levels_count();
        let mut totals = vec![0u64; m];
        for x in &self.instances {
            for (i, _) in x.nonzeros() {
                if i < assignment.feature_count() {
                    for t in totals.iter_mut().take(assignment.level(i)) {
                        *t += 1;
                    }
                }
            }
        }
        let n = self.instances.len().max(1) as f64;
        totals.into_iter().map(|t| t as f64 / n).collect()
    }
}

/// Parses libsvm text: one `label idx:val idx:val ...` row per line with
/// strictly increasing indices. Blank lines are skipped.
pub fn parse_libsvm<R: BufRead>(reader: R, base: IndexBase) -> Result<Dataset> {
    let mut instances = Vec::new();
    for (n, line) in reader.lines().enumerate() {
        let lineno = n + 1;
        let line = line?;
        if let Some(x) = parse_line(&line, lineno, base)? {
            instances.push(x);
        }
    }
    Ok(Dataset::from_instances(instances))
}

pub fn parse_libsvm_str(text: &str, base: IndexBase) -> Result<Dataset> {
    parse_libsvm(text.as_bytes(), base)
}

fn parse_line(line: &str, lineno: usize, base: IndexBase) -> Result<Option<SparseInstance>> {
    let err = |msg: String| RafmError::Parse { line: lineno, msg };
    let line = line.trim_end_matches('\r');
    let mut tokens = line.split_ascii_whitespace();
    let Some(label_tok) = tokens.next() else {
        return Ok(None);
    };
    let label: f64 = label_tok
        .parse()
        .map_err(|_| err(format!("label '{label_tok}' is not a number")))?;
    if !label.is_finite() {
        return Err(err(format!("label '{label_tok}' is not finite")));
    }
    let mut indices = Vec::new();
    let mut values = Vec::new();
    for tok in tokens {
        let (idx_tok, val_tok) = tok
            .split_once(':')
            .ok_or_else(|| err(format!("expected idx:val, got '{tok}'")))?;
        if idx_tok.starts_with('-') {
            return Err(err(format!("negative index '{idx_tok}'")));
        }
        let raw: u64 = idx_tok
            .parse()
            .map_err(|_| err(format!("index '{idx_tok}' is not a non-negative integer")))?;
        let idx = raw
            .checked_sub(base.offset())
            .ok_or_else(|| err(format!("index {raw} is below the index base {}", base.offset())))?;
        let idx = u32::try_from(idx).map_err(|_| err(format!("index {raw} is too large")))?;
        let val: f64 = val_tok
            .parse()
            .map_err(|_| err(format!("value '{val_tok}' is not a number")))?;
        if !val.is_finite() {
            return Err(err(format!("value '{val_tok}' is not finite")));
        }
        if let Some(&prev) = indices.last() {
            if idx == prev {
                return Err(err(format!("duplicate index {raw}")));
            }
            if idx < prev {
                return Err(err(format!("index {raw} follows a larger index")));
            }
        }
        indices.push(idx);
        values.push(val);
    }
    SparseInstance::new(indices, values, label).map(Some).map_err(|e| err(e.to_string()))
}

/// Serializes to libsvm text; floats use their shortest round-trip form.
pub fn to_libsvm(dataset: &Dataset, base: IndexBase) -> String {
    let mut out = String::new();
    for x in dataset.instances() {
        write!(out, "{}", x.label()).unwrap();
        for (i, v) in x.iter() {
            write!(out, " {}:{}", i as u64 + base.offset(), v).unwrap();
        }
        out.push('\n');
    }
    out
}

/// Whether `n` is strictly closer to `a` than to `b` in log distance.
fn log_closer(n: u64, a: u64, b: u64) -> bool {
    // |ln n - ln a| < |ln n - ln b|  <=>  max(n,a)/min(n,a) < max(n,b)/min(n,b)
    let (n, a, b) = (n as u128, a as u128, b as u128);
    n.max(a) * n.min(b) < n.max(b) * n.min(a)
}

/// Picks `k_i = argmin_k |ln n_i - ln D_k|`, ties to the smaller level,
/// and level 1 for features that never occur.
pub fn assign_levels(occurrence: &[u64], ladder: &RankLadder) -> LevelAssignment {
    let levels = occurrence
        .iter()
        .map(|&n| {
            if n == 0 {
                return 1;
            }
            let mut best = 1;
            for k in 2..=ladder.levels() {
                if log_closer(n, ladder.rank(k) as u64, ladder.rank(best) as u64) {
                    best = k;
                }
            }
            best as u32
        })
        .collect();
    LevelAssignment::new(levels, ladder.levels()).expect("levels within ladder")
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct SplitFractions {
    pub train: f64,
    pub valid: f64,
    pub test: f64,
}

impl SplitFractions {
    pub fn new(train: f64, valid: f64, test: f64) -> Result<Self> {
        let all = [train, valid, test];
        if all.iter().any(|f| !(f.is_finite() && *f > 0.0)) {
            return Err(RafmError::input(format!(
                "split fractions must be positive, got {train},{valid},{test}"
            )));
        }
        if (all.iter().sum::<f64>() - 1.0).abs() > 1e-9 {
            return Err(RafmError::input(format!(
                "split fractions must sum to 1, got {train},{valid},{test}"
            )));
        }
        Ok(SplitFractions { train, valid, test })
    }

    /// Splits `n` by largest remainder; leftover units go to the largest
    /// fractional parts, earlier splits first on ties.
    pub fn sizes(&self, n: usize) -> [usize; 3] {
        let fr = [self.train, self.valid, self.test];
        let exact: Vec<f64> = fr.iter().map(|f| f * n as f64).collect();
        let mut sizes = [0usize; 3];
        for (s, e) in sizes.iter_mut().zip(&exact) {
            *s = (e.floor() as usize).min(n);
        }
        let mut left = n.saturating_sub(sizes.iter().sum());
        let mut order = [0usize, 1, 2];
        order.sort_by(|&a, &b| {
            let ra = exact[a] - exact[a].floor();
            let rb = exact[b] - exact[b].floor();
            rb.total_cmp(&ra).then(a.cmp(&b))
        });
        for &k in order.iter().cycle() {
            if left == 0 {
                break;
            }
            sizes[k] += 1;
            left -= 1;
        }
        sizes
    }
}

impl Default for SplitFractions {
    fn default() -> Self {
        SplitFractions { train: 0.8, valid: 0.1, test: 0.1 }
    }
}

#[derive(Clone, Debug)]
pub struct Splits {
    pub train: Dataset,
    pub valid: Dataset,
    pub test: Dataset,
}

/// Seeded shuffle then contiguous slicing. Every split keeps the parent's
/// feature space and recounts occurrences over its own rows.
pub fn split(dataset: &Dataset, fractions: SplitFractions, seed: u64) -> Result<Splits> {
    let fractions = SplitFractions::new(fractions.train, fractions.valid, fractions.test)?;
    let mut order: Vec<usize> = (0..dataset.len()).collect();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    order.shuffle(&mut rng);
    let [a, b, _] = fractions.sizes(dataset.len());
    let take = |range: &[usize]| {
        let rows = range.iter().map(|&i| dataset.instances[i].clone()).collect();
        Dataset::new(rows, dataset.feature_count())
    };
    Ok(Splits {
        train: take(&order[..a])?,
        valid: take(&order[a..a + b])?,
        test: take(&order[a + b..])?,
    })
}

/// Features bucketed by occurrence count: a zero bucket, then `[1,2)`,
/// `[2,4)`, `[4,8)`, ... up to the largest non-empty bucket.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct OccurrenceHistogram {
    pub zero: usize,
    /// `(bucket_low, feature_count)` for power-of-two lows.
    pub buckets: Vec<(u64, usize)>,
}

impl OccurrenceHistogram {
    pub fn total(&self) -> usize {
        self.zero + self.buckets.iter().map(|&(_, c)| c).sum::<usize>()
    }

    /// Two-column CSV, the zero bucket reported with `bucket_low = 0`.
    pub fn to_csv(&self) -> String {
        let mut out = String::from("bucket_low,feature_count\n");
        writeln!(out, "0,{}", self.zero).unwrap();
        for (low, count) in &self.buckets {
            writeln!(out, "{low},{count}").unwrap();
        }
        out
    }
}

pub fn occurrence_histogram(dataset: &Dataset) -> OccurrenceHistogram {
    let mut zero = 0;
    let mut counts: Vec<usize> = Vec::new();
    for &n in dataset.occurrence() {
        if n == 0 {
            zero += 1;
            continue;
        }
        let bucket = (63 - n.leading_zeros()) as usize;
        if counts.len() <= bucket {
            counts.resize(bucket + 1, 0);
        }
        counts[bucket] += 1;
    }
    let buckets = counts.into_iter().enumerate().map(|(b, c)| (1u64 << b, c)).collect();
    OccurrenceHistogram { zero, buckets }
}
