//! Nonnegative matrix factorization by multiplicative updates for the
//! Frobenius objective, seeded uniform-random initialization. The update
//! rule keeps the reconstruction error non-increasing, which the tests
//! lean on.

use ndarray::{Array2, Axis};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{BiasError, Result};

const DENOM_FLOOR: f64 = 1e-12;

/// Factorization of a docs x terms matrix into document-topic weights W
/// and topic-term weights H.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct TopicModel {
    /// docs x k
    pub w: Vec<Vec<f64>>,
    /// k x terms
    pub h: Vec<Vec<f64>>,
    pub vocabulary: Vec<String>,
    pub k: usize,
}

#[derive(Debug, Clone)]
pub struct NmfOutcome {
    pub model: TopicModel,
    /// Frobenius reconstruction error after each completed iteration.
    pub error_trace: Vec<f64>,
    pub iterations: usize,
    pub converged: bool,
}

fn frobenius_error(v: &Array2<f64>, w: &Array2<f64>, h: &Array2<f64>) -> f64 {
    let diff = v - &w.dot(h);
    diff.iter().map(|d| d * d).sum::<f64>().sqrt()
}

/// Factorizes `matrix` (docs x terms, nonnegative) into k topics.
/// Stops at `max_iterations` or when the relative error improvement
/// drops below `tolerance`. Deterministic given `seed`.
pub fn nmf(
    matrix: &[Vec<f64>],
    vocabulary: &[String],
    k: usize,
    max_iterations: usize,
    tolerance: f64,
    seed: u64,
) -> Result<NmfOutcome> {
    let docs = matrix.len();
    if docs == 0 {
        return Err(BiasError::Validation("nmf input has no rows".into()));
    }
    let terms = matrix[0].len();
    if terms == 0 {
        return Err(BiasError::Validation("nmf input has no columns".into()));
    }
    if vocabulary.len() != terms {
        return Err(BiasError::Validation(format!(
            "vocabulary has {} entries for {} columns",
            vocabulary.len(),
            terms
        )));
    }
    if k == 0 || k > docs.min(terms) {
        return Err(BiasError::Validation(format!(
            "topic count {k} must be in 1..=min(docs, terms) = {}",
            docs.min(terms)
        )));
    }
    let mut v = Array2::<f64>::zeros((docs, terms));
    for (i, row) in matrix.iter().enumerate() {
        if row.len() != terms {
            return Err(BiasError::Validation(format!(
                "row {i} has {} columns, expected {terms}",
                row.len()
            )));
        }
        for (j, &value) in row.iter().enumerate() {
            if !value.is_finite() || value < 0.0 {
                return Err(BiasError::Validation(format!(
                    "entry ({i}, {j}) = {value} is not a finite nonnegative number"
                )));
            }
            v[(i, j)] = value;
        }
    }

    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut w = Array2::from_shape_fn((docs, k), |_| rng.random_range(1e-3..1.0));
    let mut h = Array2::from_shape_fn((k, terms), |_| rng.random_range(1e-3..1.0));

    let mut error_trace = Vec::with_capacity(max_iterations);
    let mut prev = frobenius_error(&v, &w, &h);
    let mut converged = false;
    let mut iterations = 0;
    for _ in 0..max_iterations {
        // H <- H * (W^T V) / (W^T W H)
        let wt = w.t();
        let numer = wt.dot(&v);
        let denom = wt.dot(&w).dot(&h);
        ndarray::Zip::from(&mut h).and(&numer).and(&denom).for_each(|h_ij, &n, &d| {
            *h_ij *= n / d.max(DENOM_FLOOR);
        });
        // W <- W * (V H^T) / (W H H^T)
        let ht = h.t();
        let numer = v.dot(&ht);
        let denom = w.dot(&h).dot(&ht);
        ndarray::Zip::from(&mut w).and(&numer).and(&denom).for_each(|w_ij, &n, &d| {
            *w_ij *= n / d.max(DENOM_FLOOR);
        });

        let err = frobenius_error(&v, &w, &h);
        error_trace.push(err);
        iterations += 1;
        let improvement = (prev - err) / prev.max(DENOM_FLOOR);
        if improvement >= 0.0 && improvement < tolerance {
            converged = true;
            break;
        }
        prev = err;
    }

    let to_rows = |m: &Array2<f64>| -> Vec<Vec<f64>> {
        m.axis_iter(Axis(0)).map(|r| r.to_vec()).collect()
    };
    Ok(NmfOutcome {
        model: TopicModel {
            w: to_rows(&w),
            h: to_rows(&h),
            vocabulary: vocabulary.to_vec(),
            k,
        },
        error_trace,
        iterations,
        converged,
    })
}

/// The `n` terms with largest weight in one topic row, descending; ties
/// break toward earlier vocabulary order. Returns (term, weight) pairs,
/// truncated to the vocabulary size.
pub fn top_terms(model: &TopicModel, topic_index: usize, n: usize) -> Result<Vec<(String, f64)>> {
    if topic_index >= model.k {
        return Err(BiasError::Validation(format!(
            "topic index {topic_index} out of range for k={}",
            model.k
        )));
    }
    let row = &model.h[topic_index];
    let mut order: Vec<usize> = (0..row.len()).collect();
    order.sort_by(|&a, &b| {
        row[b]
            .partial_cmp(&row[a])
            .unwrap_or(std::cmp::Ordering::Equal)
            .then(a.cmp(&b))
    });
    Ok(order
        .into_iter()
        .take(n.min(model.vocabulary.len()))
        .map(|i| (model.vocabulary[i].clone(), row[i]))
        .collect())
}
