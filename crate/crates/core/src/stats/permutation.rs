//! One-sided permutation significance over re-splits of two pooled
//! groups. Splits preserve the observed group sizes; counting uses the
//! strict `>` convention, so exact p can be 0. Monte Carlo estimates use
//! the (b+1)/(m+1) correction and never return 0.

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{BiasError, Result};

#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
pub struct PermutationConfig {
    /// Enumerate exhaustively when the number of splits is at most this.
    pub exact_threshold: u64,
    /// Sample count for the Monte Carlo fallback.
    pub monte_carlo_samples: u64,
    pub seed: u64,
}

impl Default for PermutationConfig {
    fn default() -> Self {
        PermutationConfig {
            exact_threshold: 200_000,
            monte_carlo_samples: 10_000,
            seed: 42,
        }
    }
}

impl PermutationConfig {
    pub fn validate(&self) -> Result<()> {
        if self.exact_threshold == 0 || self.monte_carlo_samples == 0 {
            return Err(BiasError::Validation(
                "permutation config values must be positive".into(),
            ));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
pub struct PermutationOutcome {
    pub p_value: f64,
    pub exact: bool,
    pub n_used: u64,
}

/// Number of ways to choose `k` of `n`, saturating at `cap`.
fn binomial_capped(n: usize, k: usize, cap: u128) -> u128 {
    let k = k.min(n - k);
    let mut acc: u128 = 1;
    for i in 0..k {
        acc = acc.saturating_mul((n - i) as u128) / (i as u128 + 1);
        if acc > cap {
            return cap + 1;
        }
    }
    acc
}

/// One-sided p-value for `statistic(a, b)` against re-splits of the
/// pooled values that keep |a| and |b| fixed.
pub fn permutation_pvalue<F>(
    group_a: &[f64],
    group_b: &[f64],
    statistic: F,
    config: &PermutationConfig,
) -> Result<PermutationOutcome>
where
    F: Fn(&[f64], &[f64]) -> f64,
{
    config.validate()?;
    if group_a.is_empty() || group_b.is_empty() {
        return Err(BiasError::Validation(
            "permutation test requires nonempty groups".into(),
        ));
    }
    let observed = statistic(group_a, group_b);
    let pooled: Vec<f64> = group_a.iter().chain(group_b.iter()).copied().collect();
    let na = group_a.len();
    let n = pooled.len();

    let splits = binomial_capped(n, na, config.exact_threshold as u128);
    if splits <= config.exact_threshold as u128 {
        let mut exceed = 0u64;
        let mut total = 0u64;
        let mut a_buf = vec![0.0; na];
        let mut b_buf = vec![0.0; n - na];
        for combo in Combinations::new(n, na) {
            split_by_indices(&pooled, &combo, &mut a_buf, &mut b_buf);
            if statistic(&a_buf, &b_buf) > observed {
                exceed += 1;
            }
            total += 1;
        }
        Ok(PermutationOutcome {
            p_value: exceed as f64 / total as f64,
            exact: true,
            n_used: total,
        })
    } else {
        let m = config.monte_carlo_samples;
        let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
        let mut shuffled = pooled.clone();
        let mut exceed = 0u64;
        for _ in 0..m {
            shuffled.shuffle(&mut rng);
            if statistic(&shuffled[..na], &shuffled[na..]) > observed {
                exceed += 1;
            }
        }
        Ok(PermutationOutcome {
            p_value: (exceed + 1) as f64 / (m + 1) as f64,
            exact: false,
            n_used: m,
        })
    }
}

fn split_by_indices(pooled: &[f64], combo: &[usize], a: &mut [f64], b: &mut [f64]) {
    let mut ai = 0;
    let mut bi = 0;
    let mut next = 0;
    for (i, &v) in pooled.iter().enumerate() {
        if next < combo.len() && combo[next] == i {
            a[ai] = v;
            ai += 1;
            next += 1;
        } else {
            b[bi] = v;
            bi += 1;
        }
    }
}

/// Lexicographic k-combinations of 0..n, yielding a borrowed index
/// slice per step.
struct Combinations {
    n: usize,
    k: usize,
    indices: Vec<usize>,
    first: bool,
    done: bool,
}

impl Combinations {
    fn new(n: usize, k: usize) -> Self {
        Combinations {
            n,
            k,
            indices: (0..k).collect(),
            first: true,
            done: k > n,
        }
    }
}

impl Iterator for Combinations {
    type Item = Vec<usize>;

    fn next(&mut self) -> Option<Vec<usize>> {
        if self.done {
            return None;
        }
        if self.first {
            self.first = false;
            return Some(self.indices.clone());
        }
        // Advance the rightmost index that can still move.
        let mut i = self.k;
        loop {
            if i == 0 {
                self.done = true;
                return None;
            }
            i -= 1;
            if self.indices[i] != i + self.n - self.k {
                break;
            }
        }
        self.indices[i] += 1;
        for j in i + 1..self.k {
            self.indices[j] = self.indices[j - 1] + 1;
        }
        Some(self.indices.clone())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::stats::mean;

    fn diff(a: &[f64], b: &[f64]) -> f64 {
        mean(a) - mean(b)
    }

    #[test]
    fn constant_equal_groups_give_exact_zero() {
        let out = permutation_pvalue(
            &[2.0, 2.0],
            &[2.0, 2.0],
            diff,
            &PermutationConfig::default(),
        )
        .unwrap();
        assert!(out.exact);
        assert_eq!(out.p_value, 0.0);
    }

    #[test]
    fn two_singletons_enumerate_both_splits() {
        let out = permutation_pvalue(&[1.0], &[0.0], diff, &PermutationConfig::default()).unwrap();
        assert!(out.exact);
        assert_eq!(out.n_used, 2);
        assert_eq!(out.p_value, 0.0);
    }

    #[test]
    fn three_plus_three_matches_enumeration_count() {
        let a = [5.0, 4.0, 3.5];
        let b = [1.0, 2.0, 0.5];
        let out = permutation_pvalue(&a, &b, diff, &PermutationConfig::default()).unwrap();
        assert!(out.exact);
        assert_eq!(out.n_used, 20);
        assert_eq!(out.p_value, 0.0);

        // A weaker separation has exceeding splits.
        let a = [2.0, 0.0, 1.0];
        let b = [1.5, 0.5, 1.2];
        let out = permutation_pvalue(&a, &b, diff, &PermutationConfig::default()).unwrap();
        assert!(out.exact);
        assert!(out.p_value > 0.0 && out.p_value < 1.0);
    }

    #[test]
    fn monte_carlo_is_deterministic_given_seed() {
        let a: Vec<f64> = (0..12).map(|i| i as f64 * 0.7).collect();
        let b: Vec<f64> = (0..12).map(|i| i as f64 * 0.4 + 0.1).collect();
        let config = PermutationConfig {
            exact_threshold: 10,
            monte_carlo_samples: 500,
            seed: 99,
        };
        let o1 = permutation_pvalue(&a, &b, diff, &config).unwrap();
        let o2 = permutation_pvalue(&a, &b, diff, &config).unwrap();
        assert!(!o1.exact);
        assert_eq!(o1.p_value, o2.p_value);
        assert!(o1.p_value > 0.0);
    }

    #[test]
    fn unequal_group_sizes_are_preserved() {
        let a = [3.0, 2.5, 4.0];
        let b = [1.0];
        let out = permutation_pvalue(&a, &b, diff, &PermutationConfig::default()).unwrap();
        assert!(out.exact);
        assert_eq!(out.n_used, 4); // C(4,3)
    }

    #[test]
    fn combination_iterator_counts() {
        assert_eq!(Combinations::new(6, 3).count(), 20);
        assert_eq!(Combinations::new(5, 0).count(), 1);
        assert_eq!(Combinations::new(4, 4).count(), 1);
    }
}
