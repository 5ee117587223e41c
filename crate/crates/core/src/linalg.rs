//! Small dense linear algebra over any [`Scalar`].
//!
//! Sizes here are tiny (a handful of coordinates), so everything is a flat
//! row-major `Vec`. Cholesky is used for metrics, LU with partial pivoting for
//! the constraint saddle system and flow Jacobians.

use alloc::vec;
use alloc::vec::Vec;
use core::ops::{Index, IndexMut};

use crate::dual::Scalar;
use crate::error::{Error, Result};

#[derive(Clone, Debug, PartialEq)]
pub struct Mat<S> {
    rows: usize,
    cols: usize,
    data: Vec<S>,
}

impl<S: Scalar> Mat<S> {
    pub fn zeros(rows: usize, cols: usize) -> Self {
        Mat { rows, cols, data: vec![S::zero(); rows * cols] }
    }

    pub fn identity(n: usize) -> Self {
        let mut m = Self::zeros(n, n);
        for i in 0..n {
            m[(i, i)] = S::one();
        }
        m
    }

    pub fn from_vec(rows: usize, cols: usize, data: Vec<S>) -> Self {
        assert_eq!(data.len(), rows * cols, "matrix data length");
        Mat { rows, cols, data }
    }

    pub fn from_fn(rows: usize, cols: usize, mut f: impl FnMut(usize, usize) -> S) -> Self {
        let mut data = Vec::with_capacity(rows * cols);
        for i in 0..rows {
            for j in 0..cols {
                data.push(f(i, j));
            }
        }
        Mat { rows, cols, data }
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn as_slice(&self) -> &[S] {
        &self.data
    }

    pub fn into_vec(self) -> Vec<S> {
        self.data
    }

    pub fn transpose(&self) -> Self {
        Self::from_fn(self.cols, self.rows, |i, j| self[(j, i)])
    }

    pub fn matmul(&self, o: &Mat<S>) -> Self {
        assert_eq!(self.cols, o.rows, "matmul shape");
        Self::from_fn(self.rows, o.cols, |i, j| {
            let mut acc = S::zero();
            for k in 0..self.cols {
                acc = acc + self[(i, k)] * o[(k, j)];
            }
            acc
        })
    }

    pub fn matvec(&self, v: &[S]) -> Vec<S> {
        assert_eq!(self.cols, v.len(), "matvec shape");
        (0..self.rows)
            .map(|i| {
                let mut acc = S::zero();
                for k in 0..self.cols {
                    acc = acc + self[(i, k)] * v[k];
                }
                acc
            })
            .collect()
    }

    pub fn add(&self, o: &Mat<S>) -> Self {
        Self::from_fn(self.rows, self.cols, |i, j| self[(i, j)] + o[(i, j)])
    }

    pub fn sub(&self, o: &Mat<S>) -> Self {
        Self::from_fn(self.rows, self.cols, |i, j| self[(i, j)] - o[(i, j)])
    }

    /// Bilinear form `uᵀ M v`.
    pub fn form(&self, u: &[S], v: &[S]) -> S {
        let mut acc = S::zero();
        for i in 0..self.rows {
            for j in 0..self.cols {
                acc = acc + u[i] * self[(i, j)] * v[j];
            }
        }
        acc
    }

    pub fn map_re(&self) -> Mat<f64> {
        Mat::from_fn(self.rows, self.cols, |i, j| self[(i, j)].re())
    }

    pub fn max_abs_diff(&self, o: &Mat<S>) -> f64 {
        self.data
            .iter()
            .zip(&o.data)
            .map(|(a, b)| libm::fabs(a.re() - b.re()))
            .fold(0.0, f64::max)
    }
}

impl<S> Index<(usize, usize)> for Mat<S> {
    type Output = S;
    #[inline]
    fn index(&self, (i, j): (usize, usize)) -> &S {
        &self.data[i * self.cols + j]
    }
}

impl<S> IndexMut<(usize, usize)> for Mat<S> {
    #[inline]
    fn index_mut(&mut self, (i, j): (usize, usize)) -> &mut S {
        &mut self.data[i * self.cols + j]
    }
}

/// Lower-triangular Cholesky factor of an SPD matrix.
#[derive(Clone, Debug)]
pub struct Cholesky<S> {
    l: Mat<S>,
}

impl<S: Scalar> Cholesky<S> {
    pub fn new(a: &Mat<S>) -> Result<Self> {
        let n = a.rows();
        if a.cols() != n {
            return Err(Error::Invalid("cholesky of a non-square matrix".into()));
        }
        let mut l = Mat::zeros(n, n);
        for j in 0..n {
            let mut d = a[(j, j)];
            for k in 0..j {
                d = d - l[(j, k)] * l[(j, k)];
            }
            if !(d.re() > 0.0) || !d.is_finite() {
                return Err(Error::SingularMetric { context: "cholesky pivot" });
            }
            let djj = d.sqrt();
            l[(j, j)] = djj;
            for i in (j + 1)..n {
                let mut s = a[(i, j)];
                for k in 0..j {
                    s = s - l[(i, k)] * l[(j, k)];
                }
                l[(i, j)] = s / djj;
            }
        }
        Ok(Cholesky { l })
    }

    pub fn solve(&self, b: &[S]) -> Vec<S> {
        let n = self.l.rows();
        let mut y = b.to_vec();
        for i in 0..n {
            let mut s = y[i];
            for k in 0..i {
                s = s - self.l[(i, k)] * y[k];
            }
            y[i] = s / self.l[(i, i)];
        }
        for i in (0..n).rev() {
            let mut s = y[i];
            for k in (i + 1)..n {
                s = s - self.l[(k, i)] * y[k];
            }
            y[i] = s / self.l[(i, i)];
        }
        y
    }

    pub fn inverse(&self) -> Mat<S> {
        let n = self.l.rows();
        let mut inv = Mat::zeros(n, n);
        let mut e = vec![S::zero(); n];
        for j in 0..n {
            e.iter_mut().for_each(|x| *x = S::zero());
            e[j] = S::one();
            let col = self.solve(&e);
            for i in 0..n {
                inv[(i, j)] = col[i];
            }
        }
        // symmetrize away roundoff
        Mat::from_fn(n, n, |i, j| (inv[(i, j)] + inv[(j, i)]).scale(0.5))
    }

    pub fn det(&self) -> S {
        let mut d = S::one();
        for i in 0..self.l.rows() {
            d = d * self.l[(i, i)];
        }
        d * d
    }

    pub fn factor(&self) -> &Mat<S> {
        &self.l
    }
}

/// LU factorization with partial pivoting.
#[derive(Clone, Debug)]
pub struct Lu<S> {
    lu: Mat<S>,
    perm: Vec<usize>,
    sign: f64,
}

impl<S: Scalar> Lu<S> {
    /// Fails when a pivot is below `tiny` in magnitude (relative to the column scale).
    pub fn new(a: &Mat<S>) -> Result<Self> {
        let n = a.rows();
        if a.cols() != n {
            return Err(Error::Invalid("lu of a non-square matrix".into()));
        }
        let scale = a.as_slice().iter().map(|x| libm::fabs(x.re())).fold(0.0, f64::max);
        let tiny = 1e-14 * scale.max(f64::MIN_POSITIVE);
        let mut lu = a.clone();
        let mut perm: Vec<usize> = (0..n).collect();
        let mut sign = 1.0;
        for k in 0..n {
            let (p, pmax) = (k..n)
                .map(|i| (i, libm::fabs(lu[(i, k)].re())))
                .fold((k, -1.0), |acc, x| if x.1 > acc.1 { x } else { acc });
            if !(pmax > tiny) {
                return Err(Error::SingularSaddle);
            }
            if p != k {
                for j in 0..n {
                    let t = lu[(k, j)];
                    lu[(k, j)] = lu[(p, j)];
                    lu[(p, j)] = t;
                }
                perm.swap(k, p);
                sign = -sign;
            }
            let piv = lu[(k, k)];
            for i in (k + 1)..n {
                let f = lu[(i, k)] / piv;
                lu[(i, k)] = f;
                for j in (k + 1)..n {
                    lu[(i, j)] = lu[(i, j)] - f * lu[(k, j)];
                }
            }
        }
        Ok(Lu { lu, perm, sign })
    }

    pub fn solve(&self, b: &[S]) -> Vec<S> {
        let n = self.lu.rows();
        let mut y: Vec<S> = self.perm.iter().map(|&p| b[p]).collect();
        for i in 0..n {
            let mut s = y[i];
            for k in 0..i {
                s = s - self.lu[(i, k)] * y[k];
            }
            y[i] = s;
        }
        for i in (0..n).rev() {
            let mut s = y[i];
            for k in (i + 1)..n {
                s = s - self.lu[(i, k)] * y[k];
            }
            y[i] = s / self.lu[(i, i)];
        }
        y
    }

    pub fn det(&self) -> S {
        let mut d = S::from_f64(self.sign);
        for i in 0..self.lu.rows() {
            d = d * self.lu[(i, i)];
        }
        d
    }

    /// `ln |det|` computed from the pivots (no overflow for long flows).
    pub fn ln_abs_det(&self) -> f64 {
        (0..self.lu.rows()).map(|i| libm::log(libm::fabs(self.lu[(i, i)].re()))).sum()
    }

    pub fn inverse(&self) -> Mat<S> {
        let n = self.lu.rows();
        let mut inv = Mat::zeros(n, n);
        let mut e = vec![S::zero(); n];
        for j in 0..n {
            e.iter_mut().for_each(|x| *x = S::zero());
            e[j] = S::one();
            let col = self.solve(&e);
            for i in 0..n {
                inv[(i, j)] = col[i];
            }
        }
        inv
    }
}
