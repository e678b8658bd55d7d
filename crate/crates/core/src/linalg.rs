//! Minimal dense linear algebra for small fully-connected layers.

use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

/// Row-major dense matrix.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Matrix {
    rows: usize,
    cols: usize,
    data: Vec<f64>,
}

impl Matrix {
    pub fn zeros(rows: usize, cols: usize) -> Self {
        Matrix {
            rows,
            cols,
            data: vec![0.0; rows * cols],
        }
    }

    /// Builds a matrix from row-major data. Panics if the length is wrong.
    pub fn from_vec(rows: usize, cols: usize, data: Vec<f64>) -> Self {
        assert_eq!(data.len(), rows * cols, "matrix data length mismatch");
        Matrix { rows, cols, data }
    }

    pub fn identity(n: usize) -> Self {
        let mut m = Matrix::zeros(n, n);
        for i in 0..n {
            m.data[i * n + i] = 1.0;
        }
        m
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn data(&self) -> &[f64] {
        &self.data
    }

    pub fn data_mut(&mut self) -> &mut [f64] {
        &mut self.data
    }

    #[inline]
    pub fn get(&self, r: usize, c: usize) -> f64 {
        self.data[r * self.cols + c]
    }

    #[inline]
    pub fn set(&mut self, r: usize, c: usize, v: f64) {
        self.data[r * self.cols + c] = v;
    }

    pub fn row(&self, r: usize) -> &[f64] {
        &self.data[r * self.cols..(r + 1) * self.cols]
    }

    /// `out = self * x`, reusing the output buffer.
    pub fn matvec_into(&self, x: &[f64], out: &mut [f64]) {
        debug_assert_eq!(x.len(), self.cols);
        debug_assert_eq!(out.len(), self.rows);
        for (r, o) in out.iter_mut().enumerate() {
            let row = &self.data[r * self.cols..(r + 1) * self.cols];
            let mut acc = 0.0;
            for (w, xi) in row.iter().zip(x) {
                acc += w * xi;
            }
            *o = acc;
        }
    }

    pub fn matvec(&self, x: &[f64]) -> Vec<f64> {
        let mut out = vec![0.0; self.rows];
        self.matvec_into(x, &mut out);
        out
    }

    /// `out = self^T * x`.
    pub fn matvec_transpose_into(&self, x: &[f64], out: &mut [f64]) {
        debug_assert_eq!(x.len(), self.rows);
        debug_assert_eq!(out.len(), self.cols);
        out.fill(0.0);
        for (r, xi) in x.iter().enumerate() {
            let row = &self.data[r * self.cols..(r + 1) * self.cols];
            for (o, w) in out.iter_mut().zip(row) {
                *o += w * xi;
            }
        }
    }

    pub fn matvec_transpose(&self, x: &[f64]) -> Vec<f64> {
        let mut out = vec![0.0; self.cols];
        self.matvec_transpose_into(x, &mut out);
        out
    }

    /// Sum of squared entries.
    pub fn frobenius_sq(&self) -> f64 {
        self.data.iter().map(|w| w * w).sum()
    }

    pub fn is_finite(&self) -> bool {
        self.data.iter().all(|w| w.is_finite())
    }

    /// Largest singular value by power iteration on `self^T self`.
    ///
    /// Runs at most `max_iters` rounds and stops early once the estimate
    /// changes by less than `tol`. The start vector is drawn from a fixed
    /// seed so the result is deterministic.
    pub fn spectral_norm(&self, max_iters: usize, tol: f64) -> f64 {
        if self.data.iter().all(|w| *w == 0.0) {
            return 0.0;
        }
        let mut rng = ChaCha8Rng::seed_from_u64(0x5bec7);
        let mut v: Vec<f64> = (0..self.cols)
            .map(|_| rng.random::<f64>() - 0.5)
            .collect();
        normalize(&mut v);
        let mut u = vec![0.0; self.rows];
        let mut sigma = 0.0;
        for _ in 0..max_iters {
            self.matvec_into(&v, &mut u);
            let new_sigma = norm2(&u);
            if new_sigma == 0.0 {
                // v fell in the null space; restart from a fresh direction.
                v = (0..self.cols)
                    .map(|_| rng.random::<f64>() - 0.5)
                    .collect();
                normalize(&mut v);
                continue;
            }
            self.matvec_transpose_into(&u, &mut v);
            normalize(&mut v);
            if (new_sigma - sigma).abs() <= tol * new_sigma.max(1.0) {
                return new_sigma;
            }
            sigma = new_sigma;
        }
        sigma
    }
}

#[inline]
pub fn norm2(x: &[f64]) -> f64 {
    x.iter().map(|v| v * v).sum::<f64>().sqrt()
}

#[inline]
pub fn norm1(x: &[f64]) -> f64 {
    x.iter().map(|v| v.abs()).sum()
}

#[inline]
pub fn dot(a: &[f64], b: &[f64]) -> f64 {
    debug_assert_eq!(a.len(), b.len());
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

#[inline]
pub fn euclidean(a: &[f64], b: &[f64]) -> f64 {
    debug_assert_eq!(a.len(), b.len());
    a.iter()
        .zip(b)
        .map(|(x, y)| (x - y) * (x - y))
        .sum::<f64>()
        .sqrt()
}

fn normalize(v: &mut [f64]) {
    let n = norm2(v);
    if n > 0.0 {
        for x in v.iter_mut() {
            *x /= n;
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn matvec_basic() {
        let m = Matrix::from_vec(2, 3, vec![1.0, 2.0, 3.0, 4.0, 5.0, 6.0]);
        assert_eq!(m.matvec(&[1.0, 0.0, -1.0]), vec![-2.0, -2.0]);
        assert_eq!(m.matvec_transpose(&[1.0, 1.0]), vec![5.0, 7.0, 9.0]);
    }

    #[test]
    fn spectral_norm_scaled_identity() {
        let mut m = Matrix::identity(4);
        for v in m.data_mut() {
            *v *= 2.0;
        }
        let s = m.spectral_norm(50, 1e-10);
        assert!((s - 2.0).abs() < 1e-9, "got {s}");
    }

    #[test]
    fn spectral_norm_zero_matrix() {
        assert_eq!(Matrix::zeros(3, 5).spectral_norm(50, 1e-8), 0.0);
    }

    #[test]
    fn spectral_norm_rank_one() {
        // W = u v^T has spectral norm |u||v|.
        let u = [1.0, -2.0];
        let v = [3.0, 0.5, -1.0];
        let mut data = Vec::new();
        for ui in u {
            for vj in v {
                data.push(ui * vj);
            }
        }
        let m = Matrix::from_vec(2, 3, data);
        let expected = norm2(&u) * norm2(&v);
        assert!((m.spectral_norm(50, 1e-12) - expected).abs() < 1e-9);
    }
}
