//! Bottleneck assignment: the permutation minimizing the largest selected cost.

use crate::linalg::Matrix;
use crate::scalar::Real;

/// Result of [`bottleneck_matching`]: `perm[i]` is the column assigned to row `i`.
#[derive(Debug, Clone, PartialEq)]
pub struct Bottleneck<T> {
    pub value: T,
    pub perm: Vec<usize>,
}

/// Minimizes `max_i cost[i][perm[i]]` over all permutations.
///
/// Binary-searches the sorted distinct cost values for the smallest threshold
/// whose admissible edges `{(i, j) : cost[i][j] <= threshold}` contain a
/// perfect matching (checked by augmenting paths). Among optimal permutations
/// the lexicographically smallest is returned.
pub fn bottleneck_matching<T: Real>(cost: &Matrix<T>) -> Bottleneck<T> {
    let k = cost.rows();
    assert!(cost.is_square(), "cost matrix must be square");
    if k == 0 {
        return Bottleneck {
            value: T::zero(),
            perm: Vec::new(),
        };
    }
    debug_assert!(cost.as_slice().iter().all(|c| c.is_finite()));

    let mut values = cost.as_slice().to_vec();
    values.sort_by(|a, b| a.partial_cmp(b).expect("finite costs"));
    values.dedup();

    // the largest value always admits every edge
    let (mut lo, mut hi) = (0, values.len() - 1);
    while lo < hi {
        let mid = lo + (hi - lo) / 2;
        if has_perfect_matching(cost, values[mid], &vec![None; k]) {
            hi = mid;
        } else {
            lo = mid + 1;
        }
    }
    let value = values[lo];
    Bottleneck {
        value,
        perm: lexicographic_min_matching(cost, value),
    }
}

/// Fixes rows in order, each to the smallest column that still leaves a
/// perfect matching under the threshold.
fn lexicographic_min_matching<T: Real>(cost: &Matrix<T>, threshold: T) -> Vec<usize> {
    let k = cost.rows();
    let mut fixed: Vec<Option<usize>> = vec![None; k];
    for i in 0..k {
        let taken: Vec<bool> = (0..k).map(|j| fixed.contains(&Some(j))).collect();
        let chosen = (0..k)
            .filter(|&j| !taken[j] && cost[(i, j)] <= threshold)
            .find(|&j| {
                fixed[i] = Some(j);
                let ok = has_perfect_matching(cost, threshold, &fixed);
                if !ok {
                    fixed[i] = None;
                }
                ok
            })
            .expect("a perfect matching exists at the optimal threshold");
        fixed[i] = Some(chosen);
    }
    fixed.into_iter().map(|j| j.expect("every row fixed")).collect()
}

/// Kuhn's augmenting-path test on the threshold graph, with some rows pinned.
fn has_perfect_matching<T: Real>(cost: &Matrix<T>, threshold: T, fixed: &[Option<usize>]) -> bool {
    let k = cost.rows();
    let mut col_owner: Vec<Option<usize>> = vec![None; k];
    for (i, f) in fixed.iter().enumerate() {
        if let Some(j) = *f {
            col_owner[j] = Some(i);
        }
    }
    let pinned: Vec<bool> = {
        let mut p = vec![false; k];
        for &j in fixed.iter().flatten() {
            p[j] = true;
        }
        p
    };
    for row in 0..k {
        if fixed[row].is_some() {
            continue;
        }
        let mut seen = vec![false; k];
        if !augment(cost, threshold, row, &pinned, &mut seen, &mut col_owner) {
            return false;
        }
    }
    true
}

fn augment<T: Real>(
    cost: &Matrix<T>,
    threshold: T,
    row: usize,
    pinned: &[bool],
    seen: &mut [bool],
    col_owner: &mut [Option<usize>],
) -> bool {
    for j in 0..cost.cols() {
        if pinned[j] || seen[j] || cost[(row, j)] > threshold {
            continue;
        }
        seen[j] = true;
        let free = match col_owner[j] {
            None => true,
            Some(other) => augment(cost, threshold, other, pinned, seen, col_owner),
        };
        if free {
            col_owner[j] = Some(row);
            return true;
        }
    }
    false
}

/// Advances `perm` to the next permutation in lexicographic order; returns
/// `false` after the last one.
pub fn next_permutation(perm: &mut [usize]) -> bool {
    let n = perm.len();
    if n < 2 {
        return false;
    }
    let mut i = n - 1;
    while i > 0 && perm[i - 1] >= perm[i] {
        i -= 1;
    }
    if i == 0 {
        return false;
    }
    let mut j = n - 1;
    while perm[j] <= perm[i - 1] {
        j -= 1;
    }
    perm.swap(i - 1, j);
    perm[i..].reverse();
    true
}
