//! Symmetric banded matrices and their Cholesky factors.
//!
//! Every differenced covariance in the model becomes banded once the two
//! series are interleaved, so likelihood evaluation, sampling and the LAN
//! statistics all run in `O(dim * bw^2)`.

use nalgebra::DMatrix;

/// Symmetric matrix with `bw` sub-diagonals, lower band stored row-major.
#[derive(Debug, Clone, PartialEq)]
pub struct BandedSym {
    dim: usize,
    bw: usize,
    data: Vec<f64>,
}

impl BandedSym {
    pub fn zeros(dim: usize, bw: usize) -> Self {
        let bw = bw.min(dim.saturating_sub(1));
        Self {
            dim,
            bw,
            data: vec![0.0; dim * (bw + 1)],
        }
    }

    /// Builds the matrix from `entry(i, j)` evaluated for `j <= i` inside the band.
    pub fn from_fn(dim: usize, bw: usize, entry: impl Fn(usize, usize) -> f64) -> Self {
        let mut m = Self::zeros(dim, bw);
        for i in 0..dim {
            for j in i.saturating_sub(m.bw)..=i {
                let v = entry(i, j);
                m.set(i, j, v);
            }
        }
        m
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn bandwidth(&self) -> usize {
        self.bw
    }

    #[inline]
    fn slot(&self, i: usize, j: usize) -> usize {
        i * (self.bw + 1) + (j + self.bw - i)
    }

    /// Entry `(i, j)`; zero outside the band.
    #[inline]
    pub fn get(&self, i: usize, j: usize) -> f64 {
        let (i, j) = if j > i { (j, i) } else { (i, j) };
        if i - j > self.bw {
            0.0
        } else {
            self.data[self.slot(i, j)]
        }
    }

    /// Sets entry `(i, j)` and its mirror. Panics outside the band.
    #[inline]
    pub fn set(&mut self, i: usize, j: usize, v: f64) {
        let (i, j) = if j > i { (j, i) } else { (i, j) };
        assert!(
            i - j <= self.bw,
            "entry ({i}, {j}) outside bandwidth {}",
            self.bw
        );
        let s = self.slot(i, j);
        self.data[s] = v;
    }

    pub fn matvec(&self, x: &[f64]) -> Vec<f64> {
        assert_eq!(x.len(), self.dim);
        let mut y = vec![0.0; self.dim];
        for i in 0..self.dim {
            let d = self.data[self.slot(i, i)];
            y[i] += d * x[i];
            for j in i.saturating_sub(self.bw)..i {
                let a = self.data[self.slot(i, j)];
                y[i] += a * x[j];
                y[j] += a * x[i];
            }
        }
        y
    }

    /// `x^T A x`.
    pub fn quad_form(&self, x: &[f64]) -> f64 {
        self.matvec(x).iter().zip(x).map(|(a, b)| a * b).sum()
    }

    /// `self += a * other` for matrices of the same shape.
    pub fn axpy(&mut self, a: f64, other: &BandedSym) {
        assert_eq!((self.dim, self.bw), (other.dim, other.bw), "shape mismatch");
        self.data
            .iter_mut()
            .zip(&other.data)
            .for_each(|(x, y)| *x += a * y);
    }

    pub fn max_abs_diag(&self) -> f64 {
        (0..self.dim)
            .map(|i| self.data[self.slot(i, i)].abs())
            .fold(0.0, f64::max)
    }

    pub fn to_dense(&self) -> DMatrix<f64> {
        DMatrix::from_fn(self.dim, self.dim, |i, j| self.get(i, j))
    }

    /// Strict Cholesky factorization `A = L L^T`.
    ///
    /// On failure returns the offending row and its (non-positive) pivot.
    pub fn cholesky(&self) -> Result<BandedCholesky, (usize, f64)> {
        self.factor(None)
    }

    /// Cholesky factorization tolerant of rank deficiency.
    ///
    /// Pivots within `rel_tol * max|A_ii|` of zero are treated as exact zeros and
    /// their column is dropped. A pivot below `-rel_tol * max|A_ii|` is reported
    /// as an error.
    pub fn cholesky_semidefinite(&self, rel_tol: f64) -> Result<BandedCholesky, (usize, f64)> {
        self.factor(Some(rel_tol * self.max_abs_diag().max(f64::MIN_POSITIVE)))
    }

    fn factor(&self, zero_tol: Option<f64>) -> Result<BandedCholesky, (usize, f64)> {
        let bw = self.bw;
        let w = bw + 1;
        let mut l = vec![0.0; self.data.len()];
        for i in 0..self.dim {
            let lo = i.saturating_sub(bw);
            for j in lo..=i {
                // entries (i, k) and (j, k) for k in [lo, j) sit at offsets k + bw - i and k + bw - j
                let (head, row_i) = l.split_at_mut(i * w);
                let row_j: &[f64] = if j == i {
                    &row_i[..w]
                } else {
                    &head[j * w..(j + 1) * w]
                };
                let oi = lo + bw - i;
                let oj = lo + bw - j;
                let len = j - lo;
                let dot: f64 = row_i[oi..oi + len]
                    .iter()
                    .zip(&row_j[oj..oj + len])
                    .map(|(a, b)| a * b)
                    .sum();
                let s = self.data[i * w + j + bw - i] - dot;
                let out = if i == j {
                    match zero_tol {
                        None if s > 0.0 && s.is_finite() => s.sqrt(),
                        None => return Err((i, s)),
                        Some(tol) if s > tol => s.sqrt(),
                        Some(tol) if s >= -tol => 0.0,
                        Some(_) => return Err((i, s)),
                    }
                } else {
                    let d = row_j[bw];
                    if d > 0.0 {
                        s / d
                    } else {
                        0.0
                    }
                };
                row_i[j + bw - i] = out;
            }
        }
        Ok(BandedCholesky {
            l: BandedSym {
                dim: self.dim,
                bw,
                data: l,
            },
        })
    }
}

/// Lower-triangular banded Cholesky factor.
#[derive(Debug, Clone)]
pub struct BandedCholesky {
    l: BandedSym,
}

impl BandedCholesky {
    pub fn dim(&self) -> usize {
        self.l.dim
    }

    #[inline]
    fn at(&self, i: usize, j: usize) -> f64 {
        self.l.data[self.l.slot(i, j)]
    }

    /// `log det A = 2 sum log L_ii`.
    pub fn log_det(&self) -> f64 {
        // multiply in runs and take one log per run; ln dominates otherwise
        let mut acc = 0.0;
        let mut prod = 1.0f64;
        for i in 0..self.l.dim {
            prod *= self.at(i, i);
            if !(1e-150..=1e150).contains(&prod) {
                acc += prod.ln();
                prod = 1.0;
            }
        }
        2.0 * (acc + prod.ln())
    }

    /// Solves `L y = b`.
    pub fn solve_lower(&self, b: &[f64]) -> Vec<f64> {
        let n = self.l.dim;
        assert_eq!(b.len(), n);
        let bw = self.l.bw;
        let w = bw + 1;
        let mut y = b.to_vec();
        for i in 0..n {
            let lo = i.saturating_sub(bw);
            let row = &self.l.data[i * w..(i + 1) * w];
            let off = lo + bw - i;
            let dot: f64 = row[off..bw].iter().zip(&y[lo..i]).map(|(a, b)| a * b).sum();
            y[i] = (y[i] - dot) / row[bw];
        }
        y
    }

    /// Solves `A x = b`.
    pub fn solve(&self, b: &[f64]) -> Vec<f64> {
        let n = self.l.dim;
        let bw = self.l.bw;
        let mut x = self.solve_lower(b);
        for i in (0..n).rev() {
            let mut s = x[i];
            for k in (i + 1)..(i + bw + 1).min(n) {
                s -= self.at(k, i) * x[k];
            }
            x[i] = s / self.at(i, i);
        }
        x
    }

    /// `b^T A^{-1} b`.
    pub fn inv_quad_form(&self, b: &[f64]) -> f64 {
        self.solve_lower(b).iter().map(|v| v * v).sum()
    }

    /// `L g`, used to turn standard normals into draws with covariance `A`.
    pub fn mul_lower(&self, g: &[f64]) -> Vec<f64> {
        let n = self.l.dim;
        assert_eq!(g.len(), n);
        (0..n)
            .map(|i| {
                (i.saturating_sub(self.l.bw)..=i)
                    .map(|k| self.at(i, k) * g[k])
                    .sum()
            })
            .collect()
    }

    pub fn to_dense_lower(&self) -> DMatrix<f64> {
        DMatrix::from_fn(self.l.dim, self.l.dim, |i, j| {
            if j <= i && i - j <= self.l.bw {
                self.at(i, j)
            } else {
                0.0
            }
        })
    }
}


#[cfg(test)]
mod props {
    use super::*;
    use proptest::prelude::*;

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(64))]

        #[test]
        fn factor_matches_dense(
            dim in 1usize..30,
            bw in 0usize..5,
            entries in prop::collection::vec(-1.0..1.0f64, 200),
        ) {
            // diagonally dominant, hence positive definite
            let a = BandedSym::from_fn(dim, bw, |i, j| {
                let k = (i.min(j) * 7 + i.abs_diff(j)) % entries.len();
                if i == j { 2.0 * bw as f64 + 1.0 + entries[k].abs() } else { entries[k] }
            });
            let dense = a.to_dense();
            let chol = a.cholesky().unwrap();
            let ref_chol = dense.clone().cholesky().unwrap();
            prop_assert!((chol.to_dense_lower() - ref_chol.l()).abs().max() < 1e-12);
            let b: Vec<f64> = (0..dim).map(|i| entries[i % entries.len()]).collect();
            let x = chol.solve(&b);
            for (u, v) in a.matvec(&x).iter().zip(&b) {
                prop_assert!((u - v).abs() < 1e-12);
            }
        }
    }
}
