//! Optimal way allocation: maximise the sum of per-cache profits under a
//! total way budget.

use super::ReconfigError;
use crate::scalar::ProfitScalar;

/// `h[i][k]`: profit of giving cache `i` exactly `k` ways, `k in 0..=t_max`.
#[derive(Debug, Clone, PartialEq)]
pub struct ProfitMatrix<T> {
    rows: Vec<Vec<T>>,
}

impl<T: ProfitScalar> ProfitMatrix<T> {
    pub fn new(rows: Vec<Vec<T>>) -> Result<Self, ReconfigError> {
        if let Some(first) = rows.first() {
            if first.is_empty() {
                return Err(ReconfigError::DimensionMismatch { expected: 1, found: 0 });
            }
            if let Some(bad) = rows.iter().find(|r| r.len() != first.len()) {
                return Err(ReconfigError::DimensionMismatch { expected: first.len(), found: bad.len() });
            }
        }
        Ok(Self { rows })
    }

    /// Number of caches.
    pub fn n(&self) -> usize {
        self.rows.len()
    }

    /// Largest way count covered by every row.
    pub fn t_max(&self) -> usize {
        self.rows.first().map_or(0, |r| r.len() - 1)
    }

    pub fn get(&self, i: usize, k: usize) -> T {
        self.rows[i][k]
    }

    pub fn rows(&self) -> &[Vec<T>] {
        &self.rows
    }

    /// Profit of an allocation, summed in cache order.
    pub fn value(&self, alloc: &[usize]) -> T {
        alloc.iter().enumerate().fold(T::zero(), |acc, (i, &k)| acc + self.rows[i][k])
    }

    fn check(&self, t_max: usize) -> Result<(), ReconfigError> {
        if self.n() > 0 && self.t_max() != t_max {
            return Err(ReconfigError::DimensionMismatch { expected: t_max + 1, found: self.t_max() + 1 });
        }
        Ok(())
    }
}

/// Dynamic program over caches and budget.
///
/// `dp[i][j]` is the best profit of the first `i` caches using at most `j`
/// ways; `dp[0][j] = 0` and `dp[i][j] = max_k dp[i-1][j-k] + h[i-1][k]`. The
/// backtrace walks caches from last to first and takes the smallest `k`
/// reproducing the optimum. Runs in `O(n * t_max^2)`.
pub fn max_profit<T: ProfitScalar>(h: &ProfitMatrix<T>, t_max: usize) -> Result<(T, Vec<usize>), ReconfigError> {
    h.check(t_max)?;
    let n = h.n();
    let mut dp = vec![vec![T::zero(); t_max + 1]; n + 1];
    for i in 1..=n {
        for j in 0..=t_max {
            let mut best = dp[i - 1][j] + h.get(i - 1, 0);
            for k in 1..=j {
                let v = dp[i - 1][j - k] + h.get(i - 1, k);
                if v > best {
                    best = v;
                }
            }
            dp[i][j] = best;
        }
    }
    let mut alloc = vec![0; n];
    let mut j = t_max;
    for i in (1..=n).rev() {
        let k = (0..=j).find(|&k| dp[i - 1][j - k] + h.get(i - 1, k) == dp[i][j]).expect("optimum is reachable");
        alloc[i - 1] = k;
        j -= k;
    }
    Ok((dp[n][t_max], alloc))
}

/// Exhaustive search over every allocation with `sum <= t_max`. Only for
/// `n <= 6` and `t_max <= 12`. Ties keep the first allocation found in
/// lexicographic order.
pub fn brute_force_alloc<T: ProfitScalar>(h: &ProfitMatrix<T>, t_max: usize) -> Result<(T, Vec<usize>), ReconfigError> {
    h.check(t_max)?;
    let n = h.n();
    if n > 6 || t_max > 12 {
        return Err(ReconfigError::SearchTooLarge { n, t_max });
    }
    let mut alloc = vec![0; n];
    let mut best = (h.value(&alloc), alloc.clone());
    loop {
        // Odometer increment, skipping vectors over budget.
        let mut i = n;
        loop {
            if i == 0 {
                return Ok(best);
            }
            i -= 1;
            alloc[i] += 1;
            if alloc.iter().sum::<usize>() <= t_max {
                break;
            }
            alloc[i] = 0;
        }
        let v = h.value(&alloc);
        if v > best.0 {
            best = (v, alloc.clone());
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn m(rows: &[&[i64]]) -> ProfitMatrix<i64> {
        ProfitMatrix::new(rows.iter().map(|r| r.to_vec()).collect()).unwrap()
    }

    #[test]
    fn single_cache_takes_budget() {
        let h = m(&[&[0, 1, 2, 3]]);
        assert_eq!(max_profit(&h, 3).unwrap(), (3, vec![3]));
    }

    #[test]
    fn two_cache_tie() {
        // [1,1] and [0,2] both score 2; the ascending backtrace gives the
        // later cache the smallest matching share.
        let h = m(&[&[0, 1, 1], &[0, 1, 2]]);
        assert_eq!(max_profit(&h, 2).unwrap(), (2, vec![1, 1]));
        assert_eq!(brute_force_alloc(&h, 2).unwrap().0, 2);
    }

    #[test]
    fn dimension_errors() {
        let h = m(&[&[0, 1, 2]]);
        assert!(matches!(max_profit(&h, 3), Err(ReconfigError::DimensionMismatch { .. })));
        assert!(ProfitMatrix::new(vec![vec![0i64, 1], vec![0]]).is_err());
        let big = ProfitMatrix::new(vec![vec![0i64; 14]; 2]).unwrap();
        assert!(matches!(brute_force_alloc(&big, 13), Err(ReconfigError::SearchTooLarge { .. })));
    }

    #[test]
    fn empty_matrix() {
        let h: ProfitMatrix<f64> = ProfitMatrix::new(vec![]).unwrap();
        assert_eq!(max_profit(&h, 4).unwrap(), (0.0, vec![]));
    }

    fn matrix() -> impl Strategy<Value = (Vec<Vec<f64>>, usize)> {
        (1usize..=4, 0usize..=8).prop_flat_map(|(n, t)| {
            (proptest::collection::vec(proptest::collection::vec(-20.0f64..0.0, t + 1), n), Just(t))
        })
    }

    proptest! {
        #[test]
        fn dp_matches_brute_force((rows, t) in matrix()) {
            let h = ProfitMatrix::new(rows).unwrap();
            let (v, alloc) = max_profit(&h, t).unwrap();
            let (bv, _) = brute_force_alloc(&h, t).unwrap();
            prop_assert_eq!(v, bv);
            prop_assert!(alloc.iter().sum::<usize>() <= t);
            prop_assert_eq!(h.value(&alloc), v);
        }

        #[test]
        fn f32_matrices_agree_too((rows, t) in matrix()) {
            let rows: Vec<Vec<f32>> = rows.iter().map(|r| r.iter().map(|&x| x as f32).collect()).collect();
            let h = ProfitMatrix::new(rows).unwrap();
            prop_assert_eq!(max_profit(&h, t).unwrap().0, brute_force_alloc(&h, t).unwrap().0);
        }
    }
}
