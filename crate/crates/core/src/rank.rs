//! Exact rank of integer matrices by fraction-free (Bareiss) elimination.
//!
//! Elimination runs in `i128` with checked arithmetic and falls back to
//! arbitrary precision if an intermediate minor overflows.

use num_bigint::BigInt;
use num_traits::{CheckedMul, CheckedSub, Zero};
use std::ops::Div;

/// Rank over the rationals of a row-major integer matrix.
///
/// Rows may have different lengths only if the matrix is empty; an empty
/// matrix (or one with empty rows) has rank zero.
pub fn integer_rank<R: AsRef<[i64]>>(rows: &[R]) -> usize {
    if rows.is_empty() || rows[0].as_ref().is_empty() {
        return 0;
    }
    let small: Vec<Vec<i128>> = rows
        .iter()
        .map(|r| r.as_ref().iter().map(|&v| v as i128).collect())
        .collect();
    if let Some(rank) = bareiss_rank(small) {
        return rank;
    }
    let big: Vec<Vec<BigInt>> = rows
        .iter()
        .map(|r| r.as_ref().iter().map(|&v| BigInt::from(v)).collect())
        .collect();
    bareiss_rank(big).expect("arbitrary precision elimination cannot overflow")
}

/// Returns `None` on overflow.
fn bareiss_rank<T>(mut m: Vec<Vec<T>>) -> Option<usize>
where
    T: Clone + Zero + PartialEq + CheckedMul + CheckedSub + Div<Output = T> + From<i8>,
{
    let rows = m.len();
    let cols = m[0].len();
    let mut prev = T::from(1);
    let mut rank = 0;
    for col in 0..cols {
        if rank == rows {
            break;
        }
        let Some(pivot) = (rank..rows).find(|&r| !m[r][col].is_zero()) else {
            continue;
        };
        m.swap(rank, pivot);
        for i in (rank + 1)..rows {
            for j in (col + 1)..cols {
                let lhs = m[rank][col].checked_mul(&m[i][j])?;
                let rhs = m[i][col].checked_mul(&m[rank][j])?;
                // exact: every entry is a minor of the original matrix
                m[i][j] = lhs.checked_sub(&rhs)? / prev.clone();
            }
            m[i][col] = T::zero();
        }
        prev = m[rank][col].clone();
        rank += 1;
    }
    Some(rank)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn case_study_matrices() {
        assert_eq!(integer_rank(&[[2, 3, 5], [1, 1, 1], [2, 1, 5]]), 3);
        assert_eq!(integer_rank(&[[2, 3, 5], [1, 1, 1], [2, 3, 5]]), 2);
    }

    #[test]
    fn identity_and_degenerate() {
        for n in 1..6 {
            let id: Vec<Vec<i64>> = (0..n)
                .map(|i| (0..n).map(|j| i64::from(i == j)).collect())
                .collect();
            assert_eq!(integer_rank(&id), n);
        }
        assert_eq!(integer_rank(&[[0, 0], [0, 0]]), 0);
        assert_eq!(integer_rank::<[i64; 0]>(&[]), 0);
        // rectangular, with a zero column in front
        assert_eq!(integer_rank(&[[0, 1, 2], [0, 2, 4]]), 1);
        assert_eq!(integer_rank(&[[0, 1], [0, 3], [0, 0]]), 1);
        assert_eq!(integer_rank(&[[1, 2, 3]]), 1);
    }

    #[test]
    fn overflow_falls_back_to_big_integers() {
        let big = i64::MAX / 2;
        let diag: Vec<Vec<i64>> = (0..4)
            .map(|i| (0..4).map(|j| if i == j { big - i } else { 0 }).collect())
            .collect();
        assert_eq!(integer_rank(&diag), 4);
        // last row is the sum of the first two
        let singular = [
            [big, 1, big - 3, 2],
            [-big + 7, big, 5, big - 1],
            [3, -big, big, 9],
            [7, big + 1, big + 2, big + 1],
        ];
        assert_eq!(integer_rank(&singular), 3);
        assert_eq!(integer_rank(&[[big, big], [big, big]]), 1);
    }
}
