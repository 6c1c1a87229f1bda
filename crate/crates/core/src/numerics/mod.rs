//! Minimal deterministic dense-array substrate.
//!
//! Everything here is plain sequential code with a fixed reduction order
//! (row-major, left-to-right), so results are bit-reproducible across runs
//! and thread counts. No BLAS, no sparse formats.

mod cg;
mod rng;

pub use cg::{conjugate_gradient, CgConfig, CgSolution};
pub use rng::RngStream;

use crate::error::{Error, Result};
use crate::scalar::Real;

/// Dense row-major matrix.
#[derive(Debug, Clone, PartialEq)]
pub struct DenseMatrix<T> {
    rows: usize,
    cols: usize,
    data: Vec<T>,
}

impl<T: Real> DenseMatrix<T> {
    /// Builds a matrix from row-major data, validating shape and finiteness.
    pub fn new(rows: usize, cols: usize, data: Vec<T>) -> Result<Self> {
        if data.len() != rows * cols {
            return Err(Error::Shape {
                context: "DenseMatrix::new",
                details: format!("{}x{} needs {} entries, got {}", rows, cols, rows * cols, data.len()),
            });
        }
        if !data.iter().all(|v| v.is_finite()) {
            return Err(Error::NonFinite {
                context: "DenseMatrix::new".into(),
            });
        }
        Ok(Self { rows, cols, data })
    }

    pub fn zeros(rows: usize, cols: usize) -> Self {
        Self {
            rows,
            cols,
            data: vec![T::zero(); rows * cols],
        }
    }

    pub fn identity(n: usize) -> Self {
        let mut m = Self::zeros(n, n);
        for i in 0..n {
            m.data[i * n + i] = T::one();
        }
        m
    }

    pub fn from_fn(rows: usize, cols: usize, mut f: impl FnMut(usize, usize) -> T) -> Self {
        let mut data = Vec::with_capacity(rows * cols);
        for i in 0..rows {
            for j in 0..cols {
                data.push(f(i, j));
            }
        }
        Self { rows, cols, data }
    }

    /// Stacks the given rows (all of equal length) into a matrix.
    pub fn from_rows(rows: &[&[T]]) -> Result<Self> {
        let cols = rows.first().map_or(0, |r| r.len());
        let mut data = Vec::with_capacity(rows.len() * cols);
        for r in rows {
            if r.len() != cols {
                return Err(Error::Shape {
                    context: "DenseMatrix::from_rows",
                    details: format!("expected row length {}, got {}", cols, r.len()),
                });
            }
            data.extend_from_slice(r);
        }
        Ok(Self {
            rows: rows.len(),
            cols,
            data,
        })
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn shape(&self) -> (usize, usize) {
        (self.rows, self.cols)
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    pub fn get(&self, i: usize, j: usize) -> T {
        debug_assert!(i < self.rows && j < self.cols);
        self.data[i * self.cols + j]
    }

    pub fn set(&mut self, i: usize, j: usize, v: T) {
        debug_assert!(i < self.rows && j < self.cols);
        self.data[i * self.cols + j] = v;
    }

    pub fn row(&self, i: usize) -> &[T] {
        &self.data[i * self.cols..(i + 1) * self.cols]
    }

    pub fn row_mut(&mut self, i: usize) -> &mut [T] {
        &mut self.data[i * self.cols..(i + 1) * self.cols]
    }

    pub fn data(&self) -> &[T] {
        &self.data
    }

    pub fn data_mut(&mut self) -> &mut [T] {
        &mut self.data
    }

    /// Matrix product with deterministic summation order: for every output
    /// entry the inner index runs left to right.
    pub fn matmul(&self, other: &Self) -> Result<Self> {
        if self.cols != other.rows {
            return Err(Error::Shape {
                context: "matmul",
                details: format!(
                    "{}x{} cannot be multiplied by {}x{}",
                    self.rows, self.cols, other.rows, other.cols
                ),
            });
        }
        let mut out = Self::zeros(self.rows, other.cols);
        for i in 0..self.rows {
            for k in 0..self.cols {
                let a = self.data[i * self.cols + k];
                let brow = &other.data[k * other.cols..(k + 1) * other.cols];
                let orow = &mut out.data[i * other.cols..(i + 1) * other.cols];
                for (o, &b) in orow.iter_mut().zip(brow) {
                    *o = *o + a * b;
                }
            }
        }
        Ok(out)
    }

    /// `self += alpha * other`, entrywise.
    pub fn add_scaled(&mut self, alpha: T, other: &Self) -> Result<()> {
        if self.shape() != other.shape() {
            return Err(Error::Shape {
                context: "add_scaled",
                details: format!("{:?} vs {:?}", self.shape(), other.shape()),
            });
        }
        for (a, &b) in self.data.iter_mut().zip(&other.data) {
            *a = *a + alpha * b;
        }
        Ok(())
    }

    pub fn scale(&mut self, alpha: T) {
        for a in &mut self.data {
            *a = *a * alpha;
        }
    }

    pub fn frobenius_norm(&self) -> T {
        self.data.iter().map(|v| *v * *v).sum::<T>().sqrt()
    }

    pub fn all_finite(&self) -> bool {
        self.data.iter().all(|v| v.is_finite())
    }
}

/// Vector norm kinds.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum NormKind {
    L1,
    L2,
    L2Squared,
}

/// Σ|vᵢ|, sqrt(Σvᵢ²) or Σvᵢ², summed left to right.
pub fn norm<T: Real>(v: &[T], kind: NormKind) -> T {
    match kind {
        NormKind::L1 => v.iter().map(|x| x.abs()).sum(),
        NormKind::L2 => v.iter().map(|x| *x * *x).sum::<T>().sqrt(),
        NormKind::L2Squared => v.iter().map(|x| *x * *x).sum(),
    }
}

pub fn dot<T: Real>(a: &[T], b: &[T]) -> T {
    debug_assert_eq!(a.len(), b.len());
    a.iter().zip(b).map(|(x, y)| *x * *y).sum()
}

/// `a += alpha * b` over slices.
pub fn axpy<T: Real>(a: &mut [T], alpha: T, b: &[T]) {
    debug_assert_eq!(a.len(), b.len());
    for (x, &y) in a.iter_mut().zip(b) {
        *x = *x + alpha * y;
    }
}

fn expand_bound<'a, T: Real>(
    bound: &'a [T],
    n: usize,
    context: &'static str,
) -> Result<impl Fn(usize) -> T + 'a> {
    if bound.len() != 1 && bound.len() != n {
        return Err(Error::Shape {
            context,
            details: format!("bound length {} incompatible with data length {}", bound.len(), n),
        });
    }
    let scalar = bound.len() == 1;
    Ok(move |i: usize| if scalar { bound[0] } else { bound[i] })
}

/// Element-wise clipping into `[lo, hi]`. `lo`/`hi` may be scalars (length 1)
/// or per-element arrays. Entries already inside the box are returned
/// bit-identically, so the operation is idempotent.
pub fn clip_elementwise<T: Real>(x: &[T], lo: &[T], hi: &[T]) -> Result<Vec<T>> {
    let mut out = x.to_vec();
    clip_in_place(&mut out, lo, hi)?;
    Ok(out)
}

/// In-place variant of [`clip_elementwise`].
pub fn clip_in_place<T: Real>(x: &mut [T], lo: &[T], hi: &[T]) -> Result<()> {
    let lo_at = expand_bound(lo, x.len(), "clip lo")?;
    let hi_at = expand_bound(hi, x.len(), "clip hi")?;
    for i in 0..x.len() {
        if lo_at(i) > hi_at(i) {
            return Err(Error::Bounds {
                context: "clip",
                index: i,
            });
        }
    }
    for (i, v) in x.iter_mut().enumerate() {
        if *v < lo_at(i) {
            *v = lo_at(i);
        } else if *v > hi_at(i) {
            *v = hi_at(i);
        }
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn mat(rows: usize, cols: usize, data: &[f64]) -> DenseMatrix<f64> {
        DenseMatrix::new(rows, cols, data.to_vec()).unwrap()
    }

    /// Reference product with the same per-entry summation order (k ascending).
    fn matmul_naive(a: &DenseMatrix<f64>, b: &DenseMatrix<f64>) -> DenseMatrix<f64> {
        let mut out = DenseMatrix::zeros(a.rows(), b.cols());
        for i in 0..a.rows() {
            for j in 0..b.cols() {
                let mut acc = 0.0;
                for k in 0..a.cols() {
                    acc += a.get(i, k) * b.get(k, j);
                }
                out.set(i, j, acc);
            }
        }
        out
    }

    #[test]
    fn matmul_identity() {
        let a = mat(2, 2, &[1.0, 2.0, 3.0, 4.0]);
        let i2 = DenseMatrix::identity(2);
        assert_eq!(i2.matmul(&a).unwrap(), a);
    }

    #[test]
    fn matmul_projector() {
        let p = mat(2, 2, &[1.0, 0.0, 0.0, 0.0]);
        let v = mat(2, 1, &[5.0, 7.0]);
        assert_eq!(p.matmul(&v).unwrap(), mat(2, 1, &[5.0, 0.0]));
    }

    #[test]
    fn matmul_dimension_mismatch() {
        let a = DenseMatrix::<f64>::zeros(2, 3);
        let b = DenseMatrix::<f64>::zeros(2, 3);
        assert!(matches!(a.matmul(&b), Err(Error::Shape { .. })));
    }

    #[test]
    fn matmul_matches_naive_oracle_exactly() {
        let mut rng = RngStream::new(7);
        let a = DenseMatrix::from_fn(5, 4, |_, _| rng.uniform(-1.0, 1.0));
        let b = DenseMatrix::from_fn(4, 3, |_, _| rng.uniform(-1.0, 1.0));
        let fast = a.matmul(&b).unwrap();
        let slow = matmul_naive(&a, &b);
        assert_eq!(fast.data(), slow.data());
    }

    #[test]
    fn norms() {
        assert_eq!(norm(&[3.0, 4.0], NormKind::L2Squared), 25.0);
        assert_eq!(norm(&[-1.0, 2.0, 0.0], NormKind::L1), 3.0);
        assert_eq!(norm::<f64>(&[0.0, 0.0], NormKind::L2), 0.0);
    }

    #[test]
    fn clip_basic() {
        let out = clip_elementwise(&[-2.0, 0.5, 3.0], &[0.0], &[1.0]).unwrap();
        assert_eq!(out, vec![0.0, 0.5, 1.0]);
    }

    #[test]
    fn clip_one_sided() {
        let x = [-5.0, 0.25, 0.9];
        let out = clip_elementwise(&x, &[f64::NEG_INFINITY], &[1.0]).unwrap();
        assert_eq!(out, x.to_vec());
    }

    #[test]
    fn clip_rejects_crossed_bounds() {
        let err = clip_elementwise(&[0.0, 0.0], &[0.0, 2.0], &[1.0, 1.0]).unwrap_err();
        assert!(matches!(err, Error::Bounds { index: 1, .. }));
    }

    proptest! {
        #[test]
        fn clip_idempotent_and_contained(
            x in proptest::collection::vec(-10.0f64..10.0, 1..32),
            lo in -5.0f64..0.0,
            width in 0.0f64..6.0,
        ) {
            let hi = lo + width;
            let once = clip_elementwise(&x, &[lo], &[hi]).unwrap();
            let twice = clip_elementwise(&once, &[lo], &[hi]).unwrap();
            prop_assert_eq!(&once, &twice);
            for (orig, v) in x.iter().zip(&once) {
                prop_assert!(*v >= lo && *v <= hi);
                if *orig >= lo && *orig <= hi {
                    // interior points pass through bit-identically
                    prop_assert_eq!(v.to_bits(), orig.to_bits());
                }
            }
        }

        #[test]
        fn matmul_always_matches_naive(
            seed in 0u64..1000,
            n in 1usize..6,
            k in 1usize..6,
            m in 1usize..6,
        ) {
            let mut rng = RngStream::new(seed);
            let a = DenseMatrix::from_fn(n, k, |_, _| rng.uniform(-2.0, 2.0));
            let b = DenseMatrix::from_fn(k, m, |_, _| rng.uniform(-2.0, 2.0));
            let fast = a.matmul(&b).unwrap();
            let slow = matmul_naive(&a, &b);
            prop_assert_eq!(fast.data(), slow.data());
        }
    }
}
