use crate::error::{ensure, Result};
use crate::numeric::Rng;

/// Seeded k-fold partition of `0..n`: shuffle once, then cut into `k`
/// contiguous chunks whose sizes differ by at most one (larger chunks first).
pub fn kfold_split(n: usize, k: usize, seed: u64) -> Result<Vec<Vec<usize>>> {
    ensure!(k >= 2, InvalidArgument, "k-fold needs k >= 2, got {k}");
    ensure!(k <= n, InvalidArgument, "cannot split {n} samples into {k} folds");
    let mut order: Vec<usize> = (0..n).collect();
    Rng::new(seed).shuffle(&mut order);
    let (base, extra) = (n / k, n % k);
    let mut folds = Vec::with_capacity(k);
    let mut start = 0;
    for i in 0..k {
        let len = base + usize::from(i < extra);
        folds.push(order[start..start + len].to_vec());
        start += len;
    }
    Ok(folds)
}

/// Training indices for fold `i`: everything outside it, in ascending order.
pub fn train_indices(folds: &[Vec<usize>], i: usize) -> Vec<usize> {
    let mut idx: Vec<usize> = folds
        .iter()
        .enumerate()
        .filter(|(j, _)| *j != i)
        .flat_map(|(_, f)| f.iter().copied())
        .collect();
    idx.sort_unstable();
    idx
}

#[cfg(test)]
mod tests {
    use super::*;

    fn sizes(n: usize, k: usize) -> Vec<usize> {
        kfold_split(n, k, 1).unwrap().iter().map(Vec::len).collect()
    }

    #[test]
    fn fold_sizes() {
        assert_eq!(sizes(10, 5), vec![2; 5]);
        assert_eq!(sizes(7, 5), vec![2, 2, 1, 1, 1]);
    }

    #[test]
    fn rejects_bad_k() {
        assert!(kfold_split(4, 5, 0).is_err());
        assert!(kfold_split(4, 1, 0).is_err());
    }

    #[test]
    fn exhaustive_partition_property() {
        for n in 2..=200 {
            for k in 2..=n {
                let folds = kfold_split(n, k, (n * 1000 + k) as u64).unwrap();
                assert_eq!(folds.len(), k);
                let mut seen = vec![false; n];
                for f in &folds {
                    assert!(f.len() == n / k || f.len() == n.div_ceil(k));
                    for &i in f {
                        assert!(!seen[i], "n={n} k={k} index {i} repeated");
                        seen[i] = true;
                    }
                }
                assert!(seen.iter().all(|&s| s), "n={n} k={k} not covered");
            }
        }
    }

    #[test]
    fn train_indices_complement() {
        let folds = kfold_split(9, 3, 4).unwrap();
        let t = train_indices(&folds, 1);
        assert_eq!(t.len(), 6);
        assert!(t.iter().all(|i| !folds[1].contains(i)));
    }
}
