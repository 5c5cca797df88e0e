use rand::seq::SliceRandom;

use super::SimError;
use crate::seed;

/// How training samples are distributed over workers.
#[derive(Debug, Clone, Copy, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Sharding {
    /// Contiguous equal shards by worker index; the remainder is dropped.
    Disjoint,
    /// Every worker sees the whole training set in the same order.
    Replicated,
}

/// Sample indices owned by each worker.
pub fn shard_ranges(
    n_samples: usize,
    n_workers: usize,
    sharding: Sharding,
) -> Vec<std::ops::Range<usize>> {
    match sharding {
        Sharding::Disjoint => {
            let size = n_samples / n_workers.max(1);
            (0..n_workers).map(|w| w * size..(w + 1) * size).collect()
        }
        Sharding::Replicated => vec![0..n_samples; n_workers],
    }
}

/// Position of one worker in its data shard.
///
/// Each epoch walks a fresh permutation of the shard seeded by
/// `shuffle/{worker}/{epoch}` (`shuffle/all/{epoch}` when replicated) and
/// yields `shard_len / batch_size` full batches; a trailing partial batch is
/// skipped.
#[derive(Debug, Clone)]
pub struct ShardCursor {
    shard: std::ops::Range<usize>,
    batch_size: usize,
    seed: u64,
    tag: String,
    wraparound: bool,
    epoch: u64,
    position: usize,
    order: Vec<usize>,
}

impl ShardCursor {
    pub fn new(
        shard: std::ops::Range<usize>,
        batch_size: usize,
        seed: u64,
        tag: String,
        wraparound: bool,
    ) -> Result<Self, SimError> {
        if batch_size == 0 || shard.len() < batch_size {
            return Err(SimError::Config(format!(
                "shard of {} samples cannot supply batches of {batch_size}",
                shard.len()
            )));
        }
        let mut cursor = Self {
            shard,
            batch_size,
            seed,
            tag,
            wraparound,
            epoch: 0,
            position: 0,
            order: Vec::new(),
        };
        cursor.shuffle();
        Ok(cursor)
    }

    pub fn batches_per_epoch(&self) -> usize {
        self.shard.len() / self.batch_size
    }

    pub fn epoch(&self) -> u64 {
        self.epoch
    }

    /// Global sample indices of the next batch.
    pub fn next_batch(&mut self) -> Result<&[usize], SimError> {
        if self.position + self.batch_size > self.order.len() {
            if !self.wraparound {
                return Err(SimError::ShardExhausted {
                    shard: self.tag.clone(),
                    epoch: self.epoch,
                });
            }
            self.epoch += 1;
            self.position = 0;
            self.shuffle();
        }
        let start = self.position;
        self.position += self.batch_size;
        Ok(&self.order[start..self.position])
    }

    fn shuffle(&mut self) {
        self.order = self.shard.clone().collect();
        let mut rng = seed::rng_for(self.seed, &format!("shuffle/{}/{}", self.tag, self.epoch));
        self.order.shuffle(&mut rng);
    }
}
