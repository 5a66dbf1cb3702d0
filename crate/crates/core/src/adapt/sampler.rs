use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use super::{AdaptError, Result};

/// Endless batches holding exactly `batch_size / N` items of every domain.
/// Each domain cycles through its own reshuffled order, so a domain smaller
/// than its share repeats items within a batch.
#[derive(Debug, Clone)]
pub struct BalancedSampler {
    per_domain: usize,
    orders: Vec<(Vec<usize>, usize, ChaCha8Rng)>,
}

pub fn balanced_batch_sampler(sizes: &[usize], batch_size: usize, seed: u64) -> Result<BalancedSampler> {
    let n = sizes.len();
    if n == 0 || batch_size == 0 || !batch_size.is_multiple_of(n) {
        return Err(AdaptError::BatchSize { batch_size, domains: n });
    }
    if let Some(d) = sizes.iter().position(|&s| s == 0) {
        return Err(AdaptError::EmptyDomain(d));
    }
    let orders = sizes
        .iter()
        .enumerate()
        .map(|(d, &size)| {
            let mut rng = ChaCha8Rng::seed_from_u64(crate::derive_seed(seed, d as u64));
            let mut order: Vec<usize> = (0..size).collect();
            order.shuffle(&mut rng);
            (order, 0, rng)
        })
        .collect();
    Ok(BalancedSampler { per_domain: batch_size / n, orders })
}

impl BalancedSampler {
    pub fn per_domain(&self) -> usize {
        self.per_domain
    }
}

impl Iterator for BalancedSampler {
    /// `(domain, item index)` pairs, grouped by domain.
    type Item = Vec<(usize, usize)>;

    fn next(&mut self) -> Option<Self::Item> {
        let mut batch = Vec::with_capacity(self.per_domain * self.orders.len());
        for (d, (order, cursor, rng)) in self.orders.iter_mut().enumerate() {
            for _ in 0..self.per_domain {
                if *cursor == order.len() {
                    order.shuffle(rng);
                    *cursor = 0;
                }
                batch.push((d, order[*cursor]));
                *cursor += 1;
            }
        }
        Some(batch)
    }
}
