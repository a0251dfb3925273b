use rand::seq::SliceRandom;

use crate::error::Result;
use crate::metrics::FairnessReport;
use crate::rng::{self, Rng};

/// Source of mini-batches for [`super::train_sgd`].
///
/// The trainer calls `next_batch` `steps_per_epoch()` times per epoch. When
/// `wants_feedback` is true it evaluates the current model on the training
/// data at the start of each epoch and passes the report to every call of
/// that epoch.
pub trait BatchSampler {
    fn steps_per_epoch(&self) -> usize;

    fn wants_feedback(&self) -> bool {
        false
    }

    fn next_batch(
        &mut self,
        epoch: usize,
        step: usize,
        feedback: Option<&FairnessReport>,
    ) -> Result<Vec<usize>>;
}

/// Plain SGD order: a fresh seeded permutation each epoch, cut into
/// consecutive batches (the last one may be short).
#[derive(Debug, Clone)]
pub struct ShuffleSampler {
    n: usize,
    batch_size: usize,
    rng: Rng,
    order: Vec<usize>,
}

impl ShuffleSampler {
    pub fn new(n: usize, batch_size: usize, seed: u64) -> Self {
        Self {
            n,
            batch_size: batch_size.max(1),
            rng: rng::seeded(seed),
            order: (0..n).collect(),
        }
    }
}

impl BatchSampler for ShuffleSampler {
    fn steps_per_epoch(&self) -> usize {
        self.n.div_ceil(self.batch_size)
    }

    fn next_batch(
        &mut self,
        _epoch: usize,
        step: usize,
        _feedback: Option<&FairnessReport>,
    ) -> Result<Vec<usize>> {
        if step == 0 {
            self.order.shuffle(&mut self.rng);
        }
        let lo = step * self.batch_size;
        let hi = (lo + self.batch_size).min(self.n);
        Ok(self.order[lo.min(hi)..hi].to_vec())
    }
}
