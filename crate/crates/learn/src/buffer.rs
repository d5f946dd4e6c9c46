//! FIFO replay storage with uniform sampling.

use rand::seq::index;
use rand::Rng;
use thiserror::Error;

#[derive(Debug, Clone, Copy, Error, PartialEq, Eq)]
#[error("buffer holds {len} items, cannot sample {requested}")]
pub struct Undersized {
    pub len: usize,
    pub requested: usize,
}

/// Ring buffer of fixed capacity. Storage grows lazily up to the capacity,
/// after which the oldest item is overwritten.
#[derive(Debug, Clone)]
pub struct ReplayBuffer<T> {
    items: Vec<T>,
    capacity: usize,
    head: usize,
}

impl<T> ReplayBuffer<T> {
    pub fn new(capacity: usize) -> Self {
        assert!(capacity > 0, "buffer capacity must be positive");
        Self {
            items: Vec::new(),
            capacity,
            head: 0,
        }
    }

    pub fn capacity(&self) -> usize {
        self.capacity
    }

    pub fn len(&self) -> usize {
        self.items.len()
    }

    pub fn is_empty(&self) -> bool {
        self.items.is_empty()
    }

    pub fn push(&mut self, item: T) {
        if self.items.len() < self.capacity {
            self.items.push(item);
        } else {
            self.items[self.head] = item;
            self.head = (self.head + 1) % self.capacity;
        }
    }

    /// Items from oldest to newest.
    pub fn iter(&self) -> impl Iterator<Item = &T> {
        let (newer, older) = self.items.split_at(self.head);
        older.iter().chain(newer)
    }

    pub fn get(&self, i: usize) -> Option<&T> {
        self.items.get(i)
    }

    /// `n` distinct storage indices drawn uniformly.
    pub fn sample_indices<R: Rng + ?Sized>(&self, n: usize, rng: &mut R) -> Result<Vec<usize>, Undersized> {
        if n > self.items.len() {
            return Err(Undersized {
                len: self.items.len(),
                requested: n,
            });
        }
        Ok(index::sample(rng, self.items.len(), n).into_vec())
    }

    pub fn sample<R: Rng + ?Sized>(&self, n: usize, rng: &mut R) -> Result<Vec<&T>, Undersized> {
        Ok(self
            .sample_indices(n, rng)?
            .into_iter()
            .map(|i| &self.items[i])
            .collect())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn capacity_one_keeps_latest() {
        let mut b = ReplayBuffer::new(1);
        b.push('a');
        b.push('b');
        assert_eq!(b.len(), 1);
        assert_eq!(b.iter().copied().collect::<Vec<_>>(), vec!['b']);
    }

    #[test]
    fn evicts_oldest_first() {
        let mut b = ReplayBuffer::new(3);
        for i in 0..5 {
            b.push(i);
        }
        assert_eq!(b.iter().copied().collect::<Vec<_>>(), vec![2, 3, 4]);
    }

    #[test]
    fn samples_are_distinct_and_reproducible() {
        let mut b = ReplayBuffer::new(100);
        for i in 0..50 {
            b.push(i);
        }
        let draw = |seed| {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            b.sample(20, &mut rng).unwrap().into_iter().copied().collect::<Vec<_>>()
        };
        let s = draw(7);
        let mut uniq = s.clone();
        uniq.sort();
        uniq.dedup();
        assert_eq!(uniq.len(), 20);
        assert_eq!(s, draw(7));
    }

    #[test]
    fn refuses_oversized_request() {
        let mut b = ReplayBuffer::new(10);
        b.push(1);
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        assert_eq!(b.sample(2, &mut rng).unwrap_err(), Undersized { len: 1, requested: 2 });
    }
}
