//! Synthetic sparse data with Zipf-distributed feature occurrences and a
//! planted interaction model.
//!
//! Every feature gets a `high_rank`-dimensional truth vector. Features whose
//! expected occurrence count reaches `rich_min_count` use all coordinates;
//! the rest only use the first `low_rank`, so any pair involving a rare
//! feature has a rank-`low_rank` interaction. The leading `low_rank`
//! coordinates are drawn at `low_scale` and the rest at `high_scale`.

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal, Zipf};

use crate::data::Dataset;
use crate::error::{RafmError, Result};
use crate::eval::sigmoid;
use crate::model::{SparseInstance, Task};

#[derive(Clone, Debug, PartialEq)]
pub struct PlantedConfig {
    pub feature_count: usize,
    pub instances: usize,
    /// Distinct nonzero features per instance.
    pub nonzeros: usize,
    pub zipf_exponent: f64,
    pub low_rank: usize,
    pub high_rank: usize,
    pub low_scale: f64,
    pub high_scale: f64,
    pub linear_scale: f64,
    pub bias: f64,
    /// Expected occurrences at which a feature gets full-rank structure.
    pub rich_min_count: f64,
    /// Label noise for regression; classification samples Bernoulli labels.
    pub noise: f64,
    pub task: Task,
    pub seed: u64,
}

impl Default for PlantedConfig {
    fn default() -> Self {
        PlantedConfig {
            feature_count: 2_000,
            instances: 50_000,
            nonzeros: 4,
            zipf_exponent: 1.2,
            low_rank: 4,
            high_rank: 32,
            low_scale: 0.5,
            high_scale: 0.5,
            linear_scale: 0.5,
            bias: -0.5,
            rich_min_count: 100.0,
            noise: 0.1,
            task: Task::Classification,
            seed: 0,
        }
    }
}

/// Generated data plus the truth it was drawn from.
#[derive(Clone, Debug)]
pub struct Planted {
    pub data: Dataset,
    /// Popularity rank (0 = most frequent) to feature id.
    pub feature_of_rank: Vec<u32>,
    pub truth: Vec<Vec<f64>>,
    pub linear: Vec<f64>,
    pub rich: Vec<bool>,
}

impl Planted {
    /// The planted raw score of `x`.
    pub fn score(&self, x: &SparseInstance, bias: f64) -> f64 {
        let items: Vec<(usize, f64)> = x.nonzeros().collect();
        let mut s = bias;
        for (a, &(i, xi)) in items.iter().enumerate() {
            s += self.linear[i] * xi;
            for &(j, xj) in &items[a + 1..] {
                let dot: f64 = self.truth[i].iter().zip(&self.truth[j]).map(|(u, v)| u * v).sum();
                s += dot * xi * xj;
            }
        }
        s
    }
}

fn zipf_mass(n: usize, s: f64) -> Vec<f64> {
    let raw: Vec<f64> = (1..=n).map(|r| (r as f64).powf(-s)).collect();
    let total: f64 = raw.iter().sum();
    raw.into_iter().map(|w| w / total).collect()
}

pub fn generate(cfg: &PlantedConfig) -> Result<Planted> {
    if cfg.feature_count == 0 || cfg.nonzeros == 0 || cfg.nonzeros > cfg.feature_count {
        return Err(RafmError::input("need 0 < nonzeros <= feature_count"));
    }
    if cfg.low_rank == 0 || cfg.low_rank > cfg.high_rank {
        return Err(RafmError::input("need 0 < low_rank <= high_rank"));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let mut feature_of_rank: Vec<u32> = (0..cfg.feature_count as u32).collect();
    feature_of_rank.shuffle(&mut rng);

    // expected occurrences ~ instances * nonzeros * zipf mass
    let mass = zipf_mass(cfg.feature_count, cfg.zipf_exponent);
    let mut rich = vec![false; cfg.feature_count];
    for (r, &p) in mass.iter().enumerate() {
        let expected = (cfg.instances * cfg.nonzeros) as f64 * p;
        rich[feature_of_rank[r] as usize] = expected >= cfg.rich_min_count;
    }

    let low = Normal::new(0.0, cfg.low_scale).map_err(|e| RafmError::input(e.to_string()))?;
    let high = Normal::new(0.0, cfg.high_scale).map_err(|e| RafmError::input(e.to_string()))?;
    let lin = Normal::new(0.0, cfg.linear_scale).map_err(|e| RafmError::input(e.to_string()))?;
    let truth: Vec<Vec<f64>> = (0..cfg.feature_count)
        .map(|i| {
            (0..cfg.high_rank)
                .map(|f| {
                    if f < cfg.low_rank {
                        low.sample(&mut rng)
                    } else if rich[i] {
                        high.sample(&mut rng)
                    } else {
                        0.0
                    }
                })
                .collect()
        })
        .collect();
    let linear: Vec<f64> = (0..cfg.feature_count).map(|_| lin.sample(&mut rng)).collect();

    let zipf = Zipf::new(cfg.feature_count as f64, cfg.zipf_exponent)
        .map_err(|e| RafmError::input(e.to_string()))?;
    let noise = Normal::new(0.0, cfg.noise.max(f64::MIN_POSITIVE))
        .map_err(|e| RafmError::input(e.to_string()))?;
    let mut planted = Planted { data: Dataset::new(vec![], cfg.feature_count)?, feature_of_rank, truth, linear, rich };
    let mut rows = Vec::with_capacity(cfg.instances);
    for _ in 0..cfg.instances {
        let mut picked: Vec<u32> = Vec::with_capacity(cfg.nonzeros);
        while picked.len() < cfg.nonzeros {
            let r = zipf.sample(&mut rng) as usize - 1;
            let id = planted.feature_of_rank[r];
            if !picked.contains(&id) {
                picked.push(id);
            }
        }
        picked.sort_unstable();
        let mut x = SparseInstance::new(picked, vec![1.0; cfg.nonzeros], 0.0)?;
        let s = planted.score(&x, cfg.bias);
        let y = match cfg.task {
            Task::Classification => f64::from(u8::from(rng.random::<f64>() < sigmoid(s))),
            Task::Regression => s + noise.sample(&mut rng),
        };
        x.set_label(y);
        rows.push(x);
    }
    planted.data = Dataset::new(rows, cfg.feature_count)?;
    Ok(planted)
}
