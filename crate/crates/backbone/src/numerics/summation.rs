//! Deterministic reductions for Monte Carlo accumulation. Pairwise summation
//! keeps the rounding error O(log n) and, because the reduction tree depends
//! only on the slice layout (replicate order), results are bit-identical for
//! any worker count.

/// Pairwise (cascade) sum over the slice.
pub fn pairwise_sum(xs: &[f64]) -> f64 {
    const BASE: usize = 64;
    if xs.len() <= BASE {
        let mut acc = 0.0;
        for x in xs {
            acc += x;
        }
        return acc;
    }
    let mid = xs.len() / 2;
    pairwise_sum(&xs[..mid]) + pairwise_sum(&xs[mid..])
}

/// Sample mean and standard error (sd / sqrt(n)), pairwise-summed.
pub fn mean_and_stderr(xs: &[f64]) -> (f64, f64) {
    let n = xs.len();
    assert!(n >= 1);
    let mean = pairwise_sum(xs) / n as f64;
    if n == 1 {
        return (mean, 0.0);
    }
    let sq: Vec<f64> = xs.iter().map(|x| (x - mean) * (x - mean)).collect();
    let var = pairwise_sum(&sq) / (n as f64 - 1.0);
    (mean, (var / n as f64).sqrt())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn matches_naive_on_small_input() {
        let xs: Vec<f64> = (1..=10).map(|i| i as f64).collect();
        assert_eq!(pairwise_sum(&xs), 55.0);
    }

    #[test]
    fn mean_and_se_of_constant() {
        let xs = vec![2.5; 1000];
        let (m, se) = mean_and_stderr(&xs);
        assert_eq!(m, 2.5);
        assert_eq!(se, 0.0);
    }

    #[test]
    fn split_independence() {
        // Same slice, same result regardless of how callers chunked the
        // production of the values.
        let xs: Vec<f64> = (0..100_000)
            .map(|i| ((i * 2654435761u64 as usize) as f64).sin())
            .collect();
        let a = pairwise_sum(&xs);
        let b = pairwise_sum(&xs);
        assert_eq!(a.to_bits(), b.to_bits());
    }
}
