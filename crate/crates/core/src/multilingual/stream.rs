use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::{MultilingualError, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum MixingStrategy {
    /// Language `l` is drawn with probability proportional to `n_l^τ`.
    Proportional,
    Uniform,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MixingSchedule {
    pub strategy: MixingStrategy,
    pub temperature: f64,
    pub batch_size: usize,
    pub seed: u64,
}

impl Default for MixingSchedule {
    fn default() -> Self {
        Self { strategy: MixingStrategy::Proportional, temperature: 0.5, batch_size: 16, seed: 0 }
    }
}

impl MixingSchedule {
    /// Per-language sampling probabilities for training sets of `sizes`.
    pub fn probabilities(&self, sizes: &[usize]) -> Vec<f64> {
        let w: Vec<f64> = match self.strategy {
            MixingStrategy::Uniform => vec![1.0; sizes.len()],
            MixingStrategy::Proportional => sizes.iter().map(|&n| (n as f64).powf(self.temperature)).collect(),
        };
        let total: f64 = w.iter().sum();
        w.into_iter().map(|v| v / total).collect()
    }
}

#[derive(Debug, Clone)]
struct Shuffled {
    order: Vec<usize>,
    cursor: usize,
    rng: ChaCha8Rng,
}

impl Shuffled {
    fn new(n: usize, seed: u64) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut order: Vec<usize> = (0..n).collect();
        order.shuffle(&mut rng);
        Self { order, cursor: 0, rng }
    }

    fn next_batch(&mut self, size: usize) -> Vec<usize> {
        if self.cursor >= self.order.len() {
            self.order.shuffle(&mut self.rng);
            self.cursor = 0;
        }
        let end = (self.cursor + size).min(self.order.len());
        let batch = self.order[self.cursor..end].to_vec();
        self.cursor = end;
        batch
    }
}

/// Endless sequence of monolingual batches `(language index, item indices)`.
/// Each language walks through its own reshuffled epochs; the language of
/// each batch is drawn from the schedule.
#[derive(Debug, Clone)]
pub struct JointBatchStream {
    probs: Vec<f64>,
    langs: Vec<Shuffled>,
    rng: ChaCha8Rng,
    batch_size: usize,
}

/// `sizes[l]` is the training-set size of language `l`.
pub fn joint_batch_stream(sizes: &[usize], sched: &MixingSchedule) -> Result<JointBatchStream> {
    if sizes.is_empty() {
        return Err(MultilingualError::EmptyTrain("<none>".into()));
    }
    if let Some(l) = sizes.iter().position(|&n| n == 0) {
        return Err(MultilingualError::EmptyTrain(format!("language #{l}")));
    }
    if sched.batch_size == 0 {
        return Err(MultilingualError::Config("batch size must be positive".into()));
    }
    Ok(JointBatchStream {
        probs: sched.probabilities(sizes),
        langs: sizes.iter().enumerate().map(|(l, &n)| Shuffled::new(n, crate::derive_seed(sched.seed, l as u64 + 1))).collect(),
        rng: ChaCha8Rng::seed_from_u64(crate::derive_seed(sched.seed, 0)),
        batch_size: sched.batch_size,
    })
}

impl JointBatchStream {
    pub fn probabilities(&self) -> &[f64] {
        &self.probs
    }
}

impl Iterator for JointBatchStream {
    type Item = (usize, Vec<usize>);

    fn next(&mut self) -> Option<Self::Item> {
        let lang = if self.langs.len() == 1 {
            0
        } else {
            let mut u: f64 = self.rng.gen();
            let mut pick = self.probs.len() - 1;
            for (l, p) in self.probs.iter().enumerate() {
                if u < *p {
                    pick = l;
                    break;
                }
                u -= p;
            }
            pick
        };
        Some((lang, self.langs[lang].next_batch(self.batch_size)))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn sched(strategy: MixingStrategy, temperature: f64) -> MixingSchedule {
        MixingSchedule { strategy, temperature, batch_size: 4, seed: 17 }
    }

    #[test]
    fn single_language_is_plain_shuffled_batching() {
        let s = sched(MixingStrategy::Proportional, 0.5);
        let batches: Vec<_> = joint_batch_stream(&[10], &s).unwrap().take(6).collect();
        let mut rng = ChaCha8Rng::seed_from_u64(crate::derive_seed(17, 1));
        let mut order: Vec<usize> = (0..10).collect();
        order.shuffle(&mut rng);
        let first_epoch: Vec<usize> = batches[..3].iter().flat_map(|b| b.1.clone()).collect();
        assert_eq!(first_epoch, order);
        assert_eq!(batches.iter().map(|b| b.1.len()).collect::<Vec<_>>(), [4, 4, 2, 4, 4, 2]);
        order.shuffle(&mut rng);
        let second: Vec<usize> = batches[3..].iter().flat_map(|b| b.1.clone()).collect();
        assert_eq!(second, order);
        assert!(batches.iter().all(|b| b.0 == 0));
    }

    fn frequency(sizes: &[usize], s: &MixingSchedule) -> f64 {
        let draws = joint_batch_stream(sizes, s).unwrap().take(10_000);
        draws.filter(|b| b.0 == 0).count() as f64 / 10_000.0
    }

    #[test]
    fn uniform_mixing_frequencies() {
        let f = frequency(&[100, 5000], &sched(MixingStrategy::Uniform, 0.5));
        assert!((f - 0.5).abs() < 0.02, "{f}");
    }

    #[test]
    fn proportional_mixing_frequencies() {
        let f = frequency(&[1000, 9000], &sched(MixingStrategy::Proportional, 1.0));
        assert!((f - 0.1).abs() < 0.02, "{f}");
        let p = sched(MixingStrategy::Proportional, 0.5).probabilities(&[1000, 9000]);
        assert!((p.iter().sum::<f64>() - 1.0).abs() < 1e-12);
        assert!((p[0] - 0.25).abs() < 1e-12);
    }

    #[test]
    fn deterministic_and_monolingual() {
        let s = sched(MixingStrategy::Proportional, 0.5);
        let a: Vec<_> = joint_batch_stream(&[7, 13, 5], &s).unwrap().take(50).collect();
        let b: Vec<_> = joint_batch_stream(&[7, 13, 5], &s).unwrap().take(50).collect();
        assert_eq!(a, b);
        let sizes = [7, 13, 5];
        assert!(a.iter().all(|(l, batch)| batch.iter().all(|&i| i < sizes[*l])));
        assert!(joint_batch_stream(&[3, 0], &s).is_err());
    }
}
