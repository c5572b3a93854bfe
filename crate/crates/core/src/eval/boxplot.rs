use crate::error::{ensure, Result};
use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BoxplotStats {
    pub median: f64,
    pub q1: f64,
    pub q3: f64,
    pub whisker_lo: f64,
    pub whisker_hi: f64,
    pub outliers: Vec<f64>,
}

/// Type-7 quantile of sorted data: interpolate at position `(n − 1)·p`.
pub fn quantile_sorted(sorted: &[f64], p: f64) -> f64 {
    let pos = (sorted.len() - 1) as f64 * p;
    let lo = pos.floor() as usize;
    let hi = pos.ceil() as usize;
    sorted[lo] + (sorted[hi] - sorted[lo]) * (pos - lo as f64)
}

/// Tukey boxplot summary with 1.5×IQR fences.
pub fn boxplot_stats(values: &[f64]) -> Result<BoxplotStats> {
    ensure!(!values.is_empty(), InvalidArgument, "boxplot of an empty list");
    ensure!(
        values.iter().all(|v| v.is_finite()),
        InvalidArgument,
        "boxplot values must be finite"
    );
    let mut sorted = values.to_vec();
    sorted.sort_by(f64::total_cmp);
    let q1 = quantile_sorted(&sorted, 0.25);
    let median = quantile_sorted(&sorted, 0.5);
    let q3 = quantile_sorted(&sorted, 0.75);
    let iqr = q3 - q1;
    let (lo_fence, hi_fence) = (q1 - 1.5 * iqr, q3 + 1.5 * iqr);
    let inside = || sorted.iter().copied().filter(|v| (lo_fence..=hi_fence).contains(v));
    let whisker_lo = inside().next().unwrap_or(q1).min(q1);
    let whisker_hi = inside().next_back().unwrap_or(q3).max(q3);
    let outliers = sorted
        .iter()
        .copied()
        .filter(|v| *v < lo_fence || *v > hi_fence)
        .collect();
    Ok(BoxplotStats {
        median,
        q1,
        q3,
        whisker_lo,
        whisker_hi,
        outliers,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn three_values() {
        let b = boxplot_stats(&[3.0, 1.0, 2.0]).unwrap();
        assert_eq!((b.median, b.q1, b.q3), (2.0, 1.5, 2.5));
        assert!(b.outliers.is_empty());
    }

    #[test]
    fn fence_rule() {
        let b = boxplot_stats(&[1.0, 2.0, 3.0, 4.0, 100.0]).unwrap();
        assert_eq!((b.q1, b.q3), (2.0, 4.0));
        assert_eq!(b.outliers, vec![100.0]);
        assert_eq!(b.whisker_hi, 4.0);
        assert_eq!(b.whisker_lo, 1.0);
    }

    #[test]
    fn constant_list() {
        let b = boxplot_stats(&[4.2; 6]).unwrap();
        for v in [b.median, b.q1, b.q3, b.whisker_lo, b.whisker_hi] {
            assert_eq!(v, 4.2);
        }
        assert!(b.outliers.is_empty());
    }

    #[test]
    fn empty_is_error() {
        assert!(boxplot_stats(&[]).is_err());
    }

    proptest! {
        #[test]
        fn ordering(values in proptest::collection::vec(-1e6f64..1e6, 1..80)) {
            let b = boxplot_stats(&values).unwrap();
            prop_assert!(b.whisker_lo <= b.q1 && b.q1 <= b.median);
            prop_assert!(b.median <= b.q3 && b.q3 <= b.whisker_hi);
            let iqr = b.q3 - b.q1;
            for o in &b.outliers {
                prop_assert!(*o < b.q1 - 1.5 * iqr || *o > b.q3 + 1.5 * iqr);
            }
        }
    }
}
