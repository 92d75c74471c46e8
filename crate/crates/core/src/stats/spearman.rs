//! Spearman rank correlation: Pearson correlation of average-ranked
//! data, ties sharing the mean of the ranks they span. Significance uses
//! the two-sided large-sample t approximation.

use statrs::distribution::{ContinuousCDF, StudentsT};

use crate::error::{BiasError, Result};

/// Average ranks (1-based). Tied values share the mean rank of their run.
pub fn average_ranks(values: &[f64]) -> Vec<f64> {
    let n = values.len();
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&a, &b| values[a].partial_cmp(&values[b]).expect("finite values"));
    let mut ranks = vec![0.0; n];
    let mut i = 0;
    while i < n {
        let mut j = i;
        while j + 1 < n && values[order[j + 1]] == values[order[i]] {
            j += 1;
        }
        // Positions i..=j hold one tie run; each gets the mean rank.
        let rank = (i + j) as f64 / 2.0 + 1.0;
        for &idx in &order[i..=j] {
            ranks[idx] = rank;
        }
        i = j + 1;
    }
    ranks
}

/// Returns (rho, two-sided p).
pub fn spearman(x: &[f64], y: &[f64]) -> Result<(f64, f64)> {
    if x.len() != y.len() {
        return Err(BiasError::Validation(format!(
            "spearman needs equal lengths, got {} and {}",
            x.len(),
            y.len()
        )));
    }
    if x.len() < 3 {
        return Err(BiasError::Validation(
            "spearman needs at least 3 observations".into(),
        ));
    }
    if !x.iter().chain(y.iter()).all(|v| v.is_finite()) {
        return Err(BiasError::Validation("spearman inputs must be finite".into()));
    }
    let constant = |v: &[f64]| v.iter().all(|&e| e == v[0]);
    if constant(x) || constant(y) {
        return Err(BiasError::UndefinedCorrelation(
            "an input sequence is constant".into(),
        ));
    }

    let rx = average_ranks(x);
    let ry = average_ranks(y);
    let n = x.len() as f64;
    let mx = rx.iter().sum::<f64>() / n;
    let my = ry.iter().sum::<f64>() / n;
    let mut cov = 0.0;
    let mut vx = 0.0;
    let mut vy = 0.0;
    for i in 0..x.len() {
        let dx = rx[i] - mx;
        let dy = ry[i] - my;
        cov += dx * dy;
        vx += dx * dx;
        vy += dy * dy;
    }
    if vx == 0.0 || vy == 0.0 {
        // Possible despite non-constant inputs only through total ties.
        return Err(BiasError::UndefinedCorrelation(
            "rank variance is zero".into(),
        ));
    }
    let rho = (cov / (vx * vy).sqrt()).clamp(-1.0, 1.0);

    let p = if rho.abs() >= 1.0 {
        0.0
    } else {
        let df = n - 2.0;
        let t = rho * (df / (1.0 - rho * rho)).sqrt();
        let dist = StudentsT::new(0.0, 1.0, df)
            .map_err(|e| BiasError::Validation(format!("t distribution: {e}")))?;
        2.0 * (1.0 - dist.cdf(t.abs()))
    };
    Ok((rho, p.clamp(0.0, 1.0)))
}
