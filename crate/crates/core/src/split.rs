use rand::seq::SliceRandom;

use crate::error::{HteError, Result};
use crate::seed::Stream;

/// Disjoint train/test row indices, each sorted ascending.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SplitIndices {
    pub train: Vec<usize>,
    pub test: Vec<usize>,
}

/// Uniform random partition with `round(fraction·n)` training rows.
pub fn split_train_test(n: usize, fraction: f64, rng: &mut Stream) -> Result<SplitIndices> {
    if !(fraction > 0.0 && fraction < 1.0) {
        return Err(HteError::invalid(format!("split fraction {fraction} not in (0, 1)")));
    }
    if n < 4 {
        return Err(HteError::invalid(format!("need at least 4 rows to split, got {n}")));
    }
    let n_train = (fraction * n as f64).round() as usize;
    if n_train == 0 || n_train == n {
        return Err(HteError::invalid(format!(
            "fraction {fraction} of {n} rows leaves an empty side"
        )));
    }
    let mut perm: Vec<usize> = (0..n).collect();
    perm.shuffle(rng);
    let mut train = perm[..n_train].to_vec();
    let mut test = perm[n_train..].to_vec();
    train.sort_unstable();
    test.sort_unstable();
    Ok(SplitIndices { train, test })
}

/// Fold label per row: a shuffled round-robin assignment, so fold sizes differ by at most one.
pub fn fold_assignment(n: usize, folds: usize, rng: &mut Stream) -> Vec<usize> {
    let mut perm: Vec<usize> = (0..n).collect();
    perm.shuffle(rng);
    let mut out = vec![0; n];
    for (rank, &i) in perm.iter().enumerate() {
        out[i] = rank % folds;
    }
    out
}
