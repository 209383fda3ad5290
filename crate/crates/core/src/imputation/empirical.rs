//! Hot-deck draws from observed value distributions.

use std::collections::BTreeMap;

use rand::Rng;

/// Observed values of one variable with their frequencies.
#[derive(Debug, Clone, PartialEq)]
pub struct Empirical<T> {
    values: Vec<T>,
    counts: Vec<u64>,
    total: u64,
}

impl<T: Clone + Ord> Empirical<T> {
    pub fn from_observations<I: IntoIterator<Item = T>>(obs: I) -> Self {
        let mut freq: BTreeMap<T, u64> = BTreeMap::new();
        for v in obs {
            *freq.entry(v).or_default() += 1;
        }
        let (values, counts): (Vec<T>, Vec<u64>) = freq.into_iter().unzip();
        let total = counts.iter().sum();
        Empirical {
            values,
            counts,
            total,
        }
    }

    pub fn is_empty(&self) -> bool {
        self.total == 0
    }

    pub fn len(&self) -> u64 {
        self.total
    }

    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> Option<T> {
        if self.total == 0 {
            return None;
        }
        let mut u = rng.random_range(0..self.total);
        for (v, &c) in self.values.iter().zip(&self.counts) {
            if u < c {
                return Some(v.clone());
            }
            u -= c;
        }
        unreachable!("draw below total")
    }

    /// Resamples the donor pool with replacement (approximate Bayesian
    /// bootstrap), so repeated imputations reflect uncertainty in the
    /// distribution itself.
    pub fn bootstrap<R: Rng + ?Sized>(&self, rng: &mut R) -> Self {
        let mut counts = vec![0u64; self.values.len()];
        for _ in 0..self.total {
            let mut u = rng.random_range(0..self.total);
            for (slot, &c) in counts.iter_mut().zip(&self.counts) {
                if u < c {
                    *slot += 1;
                    break;
                }
                u -= c;
            }
        }
        Empirical {
            values: self.values.clone(),
            counts,
            total: self.total,
        }
    }
}
