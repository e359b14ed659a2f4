//! Deterministic reductions.
//!
//! Work is split by rows and run in parallel; the per-row partial results are
//! collected in row order and combined by fixed-order pairwise summation, so the
//! result does not depend on the thread count.

use rayon::prelude::*;

const LEAF: usize = 32;

/// Pairwise (cascade) sum with a fixed split pattern.
pub fn pairwise_sum(xs: &[f64]) -> f64 {
    if xs.len() <= LEAF {
        let mut s = 0.0;
        for &x in xs {
            s += x;
        }
        return s;
    }
    let mid = xs.len() / 2;
    pairwise_sum(&xs[..mid]) + pairwise_sum(&xs[mid..])
}

/// `sum_{r < rows} f(r)`, evaluated in parallel and reduced deterministically.
pub fn sum_rows<F>(rows: usize, f: F) -> f64
where
    F: Fn(usize) -> f64 + Sync + Send,
{
    let parts: Vec<f64> = (0..rows).into_par_iter().map(f).collect();
    pairwise_sum(&parts)
}

/// Componentwise version of [`sum_rows`] for a fixed number of accumulators.
pub fn sum_rows_n<const K: usize, F>(rows: usize, f: F) -> [f64; K]
where
    F: Fn(usize) -> [f64; K] + Sync + Send,
{
    let parts: Vec<[f64; K]> = (0..rows).into_par_iter().map(f).collect();
    let mut out = [0.0; K];
    let mut col = vec![0.0; parts.len()];
    for (k, o) in out.iter_mut().enumerate() {
        for (c, p) in col.iter_mut().zip(&parts) {
            *c = p[k];
        }
        *o = pairwise_sum(&col);
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn small_sums() {
        assert_eq!(pairwise_sum(&[]), 0.0);
        assert_eq!(pairwise_sum(&[1.0, 2.0, 3.0]), 6.0);
        let v: Vec<f64> = (1..=1000).map(|k| k as f64).collect();
        assert_eq!(pairwise_sum(&v), 500500.0);
    }

    #[test]
    fn rows_match_serial_pairwise() {
        let s = sum_rows(777, |r| (r as f64).sin());
        let v: Vec<f64> = (0..777).map(|r| (r as f64).sin()).collect();
        assert_eq!(s.to_bits(), pairwise_sum(&v).to_bits());
        let [a, b] = sum_rows_n::<2, _>(100, |r| [r as f64, 1.0]);
        assert_eq!((a, b), (4950.0, 100.0));
    }

    proptest! {
        #[test]
        fn pairwise_close_to_naive(v in proptest::collection::vec(-1e3f64..1e3, 0..500)) {
            let naive: f64 = v.iter().sum();
            let scale: f64 = v.iter().map(|x| x.abs()).sum::<f64>() + 1.0;
            prop_assert!((pairwise_sum(&v) - naive).abs() <= 1e-12 * scale);
        }
    }
}
