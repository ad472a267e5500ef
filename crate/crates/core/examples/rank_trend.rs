//! Trains RaFM (4,32) and fixed-rank FMs of rank 4 and 32 on planted Zipf
//! data and prints held-out log loss for each.
//!
//! ```text
//! SEEDS=1,2,3 cargo run --release --example rank_trend
//! ```

use std::env;
use std::time::Instant;

use rafm::data::{assign_levels, split, SplitFractions};
use rafm::eval::sigmoid;
use rafm::metrics::mean_log_loss;
use rafm::synth::{generate, PlantedConfig};
use rafm::train::{score_dataset, score_dataset_at, train, TrainConfig};
use rafm::{LevelAssignment, RankLadder, Task};

fn main() -> rafm::Result<()> {
    let seeds: Vec<u64> = env::var("SEEDS")
        .map(|s| s.split(',').map(|v| v.trim().parse().expect("numeric seed")).collect())
        .unwrap_or_else(|_| vec![1, 2, 3]);
    for seed in seeds {
        let started = Instant::now();
        let cfg_data = PlantedConfig { seed, ..Default::default() };
        let planted = generate(&cfg_data)?;
        let s = split(&planted.data, SplitFractions::default(), seed)?;
        let cfg = TrainConfig { seed, ..TrainConfig::new(Task::Classification) };

        let ladder = RankLadder::new(vec![4, 32])?;
        let assignment = assign_levels(s.train.occurrence(), &ladder);
        let f = s.train.feature_count();
        let everyone = LevelAssignment::uniform(f, 1, 1)?;
        let rafm = train(&s.train, &ladder, &assignment, &cfg, Some(&s.valid))?.model;
        let fm4 = train(&s.train, &RankLadder::single(4)?, &everyone, &cfg, Some(&s.valid))?.model;
        let fm32 = train(&s.train, &RankLadder::single(32)?, &everyone, &cfg, Some(&s.valid))?.model;

        let test_loss = |m| score_dataset(m, &s.test, Task::Classification).map(|r| r.loss);
        let truth: Vec<f64> = s.test.instances().iter().map(|x| sigmoid(planted.score(x, cfg_data.bias))).collect();
        println!(
            "seed {seed}: |F_2|={} rafm {:.5} fm4 {:.5} fm32 {:.5} rafm-low {:.5} bayes {:.5} ({:.1}s)",
            assignment.set_size(2),
            test_loss(&rafm)?,
            test_loss(&fm4)?,
            test_loss(&fm32)?,
            score_dataset_at(&rafm, &s.test, Task::Classification, 1)?.loss,
            mean_log_loss(&truth, &s.test.labels())?,
            started.elapsed().as_secs_f64()
        );
    }
    Ok(())
}
