//! Bounded FIFO of encoded transitions with uniform mini-batch sampling.

use std::collections::VecDeque;

use rand::seq::index;
use rand::Rng;

use crate::error::{Error, Result};

#[derive(Clone, Debug, PartialEq)]
pub struct Experience<T> {
    pub state: Vec<T>,
    pub action: usize,
    pub reward: T,
    pub next_state: Vec<T>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct ReplayBuffer<T> {
    capacity: usize,
    storage: VecDeque<Experience<T>>,
}

impl<T: Clone> ReplayBuffer<T> {
    pub fn new(capacity: usize) -> Result<Self> {
        if capacity == 0 {
            return Err(Error::Config("replay capacity must be at least 1".into()));
        }
        Ok(Self {
            capacity,
            storage: VecDeque::with_capacity(capacity),
        })
    }

    pub fn capacity(&self) -> usize {
        self.capacity
    }

    pub fn len(&self) -> usize {
        self.storage.len()
    }

    pub fn is_empty(&self) -> bool {
        self.storage.is_empty()
    }

    /// Appends a record, dropping the oldest one when full.
    pub fn remember(&mut self, record: Experience<T>) {
        if self.storage.len() == self.capacity {
            self.storage.pop_front();
        }
        self.storage.push_back(record);
    }

    /// Oldest first.
    pub fn iter(&self) -> impl Iterator<Item = &Experience<T>> {
        self.storage.iter()
    }

    pub fn get(&self, slot: usize) -> Option<&Experience<T>> {
        self.storage.get(slot)
    }

    /// Distinct slots drawn uniformly without replacement.
    pub fn sample_indices<R: Rng + ?Sized>(&self, batch_size: usize, rng: &mut R) -> Result<Vec<usize>> {
        if batch_size > self.storage.len() {
            return Err(Error::InsufficientSamples {
                available: self.storage.len(),
                requested: batch_size,
            });
        }
        Ok(index::sample(rng, self.storage.len(), batch_size).into_vec())
    }

    pub fn sample_minibatch<R: Rng + ?Sized>(&self, batch_size: usize, rng: &mut R) -> Result<Vec<&Experience<T>>> {
        Ok(self
            .sample_indices(batch_size, rng)?
            .into_iter()
            .map(|i| &self.storage[i])
            .collect())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn rec(tag: usize) -> Experience<f64> {
        Experience {
            state: vec![tag as f64],
            action: tag,
            reward: 0.0,
            next_state: vec![],
        }
    }

    #[test]
    fn eviction_and_order() {
        let mut b = ReplayBuffer::new(2).unwrap();
        assert_eq!(b.len(), 0);
        for i in 0..3 {
            b.remember(rec(i));
        }
        let tags: Vec<usize> = b.iter().map(|e| e.action).collect();
        assert_eq!(tags, vec![1, 2]);
        assert!(ReplayBuffer::<f64>::new(0).is_err());
    }

    #[test]
    fn full_batch_is_permutation() {
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let mut b = ReplayBuffer::new(10).unwrap();
        for i in 0..6 {
            b.remember(rec(i));
        }
        let mut idx = b.sample_indices(6, &mut rng).unwrap();
        idx.sort_unstable();
        assert_eq!(idx, (0..6).collect::<Vec<_>>());
        assert!(matches!(
            b.sample_indices(7, &mut rng),
            Err(Error::InsufficientSamples { available: 6, requested: 7 })
        ));
    }

    #[test]
    fn single_draws_are_uniform() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let mut b = ReplayBuffer::new(10).unwrap();
        for i in 0..10 {
            b.remember(rec(i));
        }
        let n = 100_000;
        let mut counts = [0usize; 10];
        for _ in 0..n {
            counts[b.sample_minibatch(1, &mut rng).unwrap()[0].action] += 1;
        }
        for c in counts {
            assert!((c as f64 / n as f64 - 0.1).abs() < 0.02);
        }
    }

    proptest! {
        #[test]
        fn fifo_holds_latest(cap in 1usize..20, pushes in 0usize..60, batch in 0usize..20, seed in any::<u64>()) {
            let mut b = ReplayBuffer::new(cap).unwrap();
            for i in 0..pushes {
                b.remember(rec(i));
            }
            prop_assert!(b.len() <= cap);
            let expected: Vec<usize> = (pushes.saturating_sub(cap)..pushes).collect();
            let tags: Vec<usize> = b.iter().map(|e| e.action).collect();
            prop_assert_eq!(tags, expected);
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            if let Ok(mut idx) = b.sample_indices(batch, &mut rng) {
                idx.sort_unstable();
                idx.dedup();
                prop_assert_eq!(idx.len(), batch);
            }
        }
    }
}
