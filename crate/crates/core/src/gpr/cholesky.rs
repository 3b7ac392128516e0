use std::cmp::Ordering;

/// Lower-triangular Cholesky factor stored row-packed so that appending a
/// row (one new training point) costs O(n) memory moves instead of O(n²).
#[derive(Debug, Clone, Default, PartialEq)]
pub(crate) struct PackedCholesky {
    n: usize,
    data: Vec<f64>,
}

/// Reason a factorization step failed: index and the non-positive pivot.
#[derive(Debug, Clone, Copy, PartialEq)]
pub(crate) struct NotPositive {
    pub index: usize,
    pub pivot: f64,
}

impl PackedCholesky {
    #[inline]
    fn offset(i: usize) -> usize {
        i * (i + 1) / 2
    }

    #[inline]
    pub fn get(&self, i: usize, j: usize) -> f64 {
        debug_assert!(j <= i && i < self.n);
        self.data[Self::offset(i) + j]
    }

    fn row(&self, i: usize) -> &[f64] {
        &self.data[Self::offset(i)..Self::offset(i) + i + 1]
    }

    /// Factorizes a symmetric matrix given by its entry function.
    pub fn factorize(n: usize, entry: impl Fn(usize, usize) -> f64) -> Result<Self, NotPositive> {
        let mut out = Self {
            n: 0,
            data: Vec::with_capacity(Self::offset(n)),
        };
        for i in 0..n {
            let col: Vec<f64> = (0..i).map(|j| entry(i, j)).collect();
            out.push_row(&col, entry(i, i))?;
        }
        Ok(out)
    }

    /// Appends one row/column `[col; diag]` to the factored matrix.
    pub fn push_row(&mut self, col: &[f64], diag: f64) -> Result<(), NotPositive> {
        debug_assert_eq!(col.len(), self.n);
        let l = self.solve_lower(col);
        let pivot = diag - l.iter().map(|v| v * v).sum::<f64>();
        if pivot.partial_cmp(&0.0) != Some(Ordering::Greater) {
            return Err(NotPositive {
                index: self.n,
                pivot,
            });
        }
        self.data.extend_from_slice(&l);
        self.data.push(pivot.sqrt());
        self.n += 1;
        Ok(())
    }

    /// Solves `L x = b`.
    pub fn solve_lower(&self, b: &[f64]) -> Vec<f64> {
        let mut x = b.to_vec();
        for i in 0..self.n {
            let row = self.row(i);
            let s: f64 = row[..i].iter().zip(&x[..i]).map(|(a, b)| a * b).sum();
            x[i] = (x[i] - s) / row[i];
        }
        x
    }

    /// Solves `Lᵀ x = b`.
    pub fn solve_upper(&self, b: &[f64]) -> Vec<f64> {
        let mut x = b.to_vec();
        for i in (0..self.n).rev() {
            x[i] /= self.get(i, i);
            let xi = x[i];
            for (j, v) in self.row(i)[..i].iter().enumerate() {
                x[j] -= v * xi;
            }
        }
        x
    }

    /// Solves `(L Lᵀ) x = b`.
    pub fn solve(&self, b: &[f64]) -> Vec<f64> {
        self.solve_upper(&self.solve_lower(b))
    }

    pub fn log_det(&self) -> f64 {
        2.0 * (0..self.n).map(|i| self.get(i, i).ln()).sum::<f64>()
    }

    /// Entry `(i, j)` of `L Lᵀ`.
    pub fn product_entry(&self, i: usize, j: usize) -> f64 {
        let k = i.min(j);
        self.row(i)[..=k]
            .iter()
            .zip(&self.row(j)[..=k])
            .map(|(a, b)| a * b)
            .sum()
    }
}
