//! Dense matrix products with a tall-and-skinny fast path.
//!
//! Inference on a handful of atoms per core produces GEMMs with at most 3
//! rows. For those the product is computed row-broadcast style: every element
//! of an A row scales the matching B row and accumulates into the C row, so
//! the inner loop streams rows of B instead of strided columns. Wider
//! products fall back to a blocked general path. A naive triple loop serves
//! as the oracle both paths are tested against.

use half::f16;

use crate::error::{Error, Result};
use crate::scalar::Real;

/// Row-major dense matrix.
#[derive(Debug, Clone, PartialEq)]
pub struct Matrix<T> {
    rows: usize,
    cols: usize,
    data: Vec<T>,
}

impl<T: Real> Matrix<T> {
    pub fn zeros(rows: usize, cols: usize) -> Self {
        Matrix {
            rows,
            cols,
            data: vec![T::zero(); rows * cols],
        }
    }

    pub fn from_vec(rows: usize, cols: usize, data: Vec<T>) -> Result<Self> {
        if data.len() != rows * cols {
            return Err(Error::Dimension(format!(
                "matrix {rows}x{cols} needs {} values, got {}",
                rows * cols,
                data.len()
            )));
        }
        Ok(Matrix { rows, cols, data })
    }

    pub fn from_rows(rows: &[Vec<T>]) -> Result<Self> {
        let cols = rows.first().map_or(0, Vec::len);
        if rows.iter().any(|r| r.len() != cols) {
            return Err(Error::Dimension("ragged rows".into()));
        }
        Ok(Matrix {
            rows: rows.len(),
            cols,
            data: rows.iter().flatten().copied().collect(),
        })
    }

    #[inline]
    pub fn rows(&self) -> usize {
        self.rows
    }

    #[inline]
    pub fn cols(&self) -> usize {
        self.cols
    }

    #[inline]
    pub fn get(&self, r: usize, c: usize) -> T {
        self.data[r * self.cols + c]
    }

    #[inline]
    pub fn set(&mut self, r: usize, c: usize, v: T) {
        self.data[r * self.cols + c] = v;
    }

    #[inline]
    pub fn row(&self, r: usize) -> &[T] {
        &self.data[r * self.cols..(r + 1) * self.cols]
    }

    #[inline]
    pub fn row_mut(&mut self, r: usize) -> &mut [T] {
        &mut self.data[r * self.cols..(r + 1) * self.cols]
    }

    pub fn as_slice(&self) -> &[T] {
        &self.data
    }

    pub fn as_mut_slice(&mut self) -> &mut [T] {
        &mut self.data
    }

    pub fn fill(&mut self, v: T) {
        self.data.fill(v);
    }

    /// Elementwise map into a (possibly different) scalar type.
    pub fn map<U: Real>(&self, f: impl Fn(T) -> U) -> Matrix<U> {
        Matrix {
            rows: self.rows,
            cols: self.cols,
            data: self.data.iter().map(|&x| f(x)).collect(),
        }
    }
}

/// Materialize the transpose once, converting later NT products into NN
/// products; meant to run at model-load time, not per step.
pub fn prepack_transpose<T: Real>(w: &Matrix<T>) -> Matrix<T> {
    let mut out = Matrix::zeros(w.cols, w.rows);
    for r in 0..w.rows {
        for c in 0..w.cols {
            out.set(c, r, w.get(r, c));
        }
    }
    out
}

fn check_shapes<T: Real>(a: &Matrix<T>, b: &Matrix<T>, c: &Matrix<T>) -> Result<()> {
    if a.cols != b.rows || c.rows != a.rows || c.cols != b.cols {
        return Err(Error::Dimension(format!(
            "gemm {}x{} * {}x{} -> {}x{}",
            a.rows, a.cols, b.rows, b.cols, c.rows, c.cols
        )));
    }
    Ok(())
}

/// Row-broadcast kernel for m <= 3: each A element scales a full B row.
fn gemm_rowbcast<T: Real>(a: &Matrix<T>, b: &Matrix<T>, c: &mut Matrix<T>) {
    let k = a.cols;
    for i in 0..a.rows {
        for p in 0..k {
            let aik = a.get(i, p);
            if aik == T::zero() {
                continue;
            }
            let brow = b.row(p);
            let crow = c.row_mut(i);
            for (cv, &bv) in crow.iter_mut().zip(brow) {
                *cv += aik * bv;
            }
        }
    }
}

/// Blocked general path; accumulation order per element is ascending k, the
/// same as the naive oracle, so the two agree bitwise.
fn gemm_blocked<T: Real>(a: &Matrix<T>, b: &Matrix<T>, c: &mut Matrix<T>) {
    const KB: usize = 64;
    let k = a.cols;
    for i in 0..a.rows {
        let mut k0 = 0;
        while k0 < k {
            let k1 = (k0 + KB).min(k);
            for p in k0..k1 {
                let aik = a.get(i, p);
                if aik == T::zero() {
                    continue;
                }
                let brow = b.row(p);
                let crow = c.row_mut(i);
                for (cv, &bv) in crow.iter_mut().zip(brow) {
                    *cv += aik * bv;
                }
            }
            k0 = k1;
        }
    }
}

/// `C += A * B`, dispatching between the tall-skinny and general paths.
pub fn gemm_nn_acc<T: Real>(a: &Matrix<T>, b: &Matrix<T>, c: &mut Matrix<T>) -> Result<()> {
    check_shapes(a, b, c)?;
    if a.rows <= 3 {
        gemm_rowbcast(a, b, c);
    } else {
        gemm_blocked(a, b, c);
    }
    Ok(())
}

/// `A * B` into a fresh zero matrix.
pub fn gemm_nn<T: Real>(a: &Matrix<T>, b: &Matrix<T>) -> Result<Matrix<T>> {
    let mut c = Matrix::zeros(a.rows, b.cols);
    gemm_nn_acc(a, b, &mut c)?;
    Ok(c)
}

/// Naive triple-loop reference used as the oracle for both fast paths.
pub fn gemm_naive<T: Real>(a: &Matrix<T>, b: &Matrix<T>) -> Result<Matrix<T>> {
    let mut c = Matrix::zeros(a.rows, b.cols);
    check_shapes(a, b, &c)?;
    for i in 0..a.rows {
        for j in 0..b.cols {
            let mut acc = T::zero();
            for p in 0..a.cols {
                acc += a.get(i, p) * b.get(p, j);
            }
            c.set(i, j, acc);
        }
    }
    Ok(c)
}

/// Largest finite binary16 value; overflow saturates here instead of
/// producing infinities.
pub const F16_MAX: f64 = 65504.0;

/// Round to the nearest IEEE-754 binary16 (ties to even) and re-express the
/// result in working precision. NaN passes through.
pub fn quantize_fp16<T: Real>(x: T) -> T {
    if x.is_nan() {
        return x;
    }
    let wide = x.into_f64();
    let narrow = f16::from_f64(wide);
    if narrow.is_infinite() && wide.is_finite() {
        return T::from_f64(F16_MAX.copysign(wide));
    }
    T::from_f64(narrow.to_f64())
}

/// GEMM on binary16-quantized copies of the operands with accumulation kept
/// in working precision (at least single).
pub fn gemm_fp16<T: Real>(a: &Matrix<T>, b: &Matrix<T>) -> Result<Matrix<T>> {
    let aq = a.map(quantize_fp16);
    let bq = b.map(quantize_fp16);
    gemm_nn(&aq, &bq)
}

/// `C += fp16(A) * fp16(B)`.
pub fn gemm_fp16_acc<T: Real>(a: &Matrix<T>, b: &Matrix<T>, c: &mut Matrix<T>) -> Result<()> {
    let aq = a.map(quantize_fp16);
    let bq = b.map(quantize_fp16);
    gemm_nn_acc(&aq, &bq, c)
}

/// Distance in units in the last place between two doubles; infinite-valued
/// inputs or mixed signs count as far apart.
pub fn ulp_distance(a: f64, b: f64) -> u64 {
    if a == b {
        return 0;
    }
    if !a.is_finite() || !b.is_finite() {
        return u64::MAX;
    }
    let to_ordinal = |x: f64| -> i64 {
        let bits = x.to_bits() as i64;
        if bits < 0 {
            i64::MIN ^ bits
        } else {
            bits
        }
    };
    to_ordinal(a).abs_diff(to_ordinal(b))
}

/// Max elementwise ulp distance between two equally-shaped matrices.
pub fn max_ulp_distance(a: &Matrix<f64>, b: &Matrix<f64>) -> u64 {
    assert_eq!((a.rows, a.cols), (b.rows, b.cols));
    a.data
        .iter()
        .zip(&b.data)
        .map(|(&x, &y)| ulp_distance(x, y))
        .max()
        .unwrap_or(0)
}
