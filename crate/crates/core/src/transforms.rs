//! Walsh–Hadamard transform, dyadic convolution and the perfect shuffle.

use crate::error::{check_len, OtsmError, Result};
use crate::C64;

fn check_pow2(n: usize) -> Result<()> {
    if n == 0 || !n.is_power_of_two() {
        return Err(OtsmError::InvalidLength {
            len: n,
            reason: "length must be a power of two",
        });
    }
    Ok(())
}

/// Orthonormal WHT in natural (Sylvester) order, in place.
///
/// The matrix is symmetric and orthonormal, so the transform is its own inverse.
pub fn fwht_in_place(v: &mut [C64]) -> Result<()> {
    let n = v.len();
    check_pow2(n)?;
    let mut h = 1;
    while h < n {
        for start in (0..n).step_by(2 * h) {
            for i in start..start + h {
                let a = v[i];
                let b = v[i + h];
                v[i] = a + b;
                v[i + h] = a - b;
            }
        }
        h *= 2;
    }
    let scale = 1.0 / (n as f64).sqrt();
    for x in v.iter_mut() {
        *x *= scale;
    }
    Ok(())
}

pub fn fwht(v: &[C64]) -> Result<Vec<C64>> {
    let mut out = v.to_vec();
    fwht_in_place(&mut out)?;
    Ok(out)
}

/// Dense orthonormal Hadamard matrix, `W[i][j] = (-1)^popcount(i & j) / sqrt(n)`.
pub fn hadamard_matrix(n: usize) -> Result<nalgebra::DMatrix<f64>> {
    check_pow2(n)?;
    let s = 1.0 / (n as f64).sqrt();
    Ok(nalgebra::DMatrix::from_fn(n, n, |i, j| {
        if (i & j).count_ones() % 2 == 0 {
            s
        } else {
            -s
        }
    }))
}

/// `c[k] = (1/sqrt(N)) * sum_n a[n] * b[k ^ n]`.
///
/// Computed through the transform domain: `W(Wa ⊙ Wb)` is exactly this sum.
pub fn dyadic_convolve(a: &[C64], b: &[C64]) -> Result<Vec<C64>> {
    if a.len() != b.len() {
        return Err(OtsmError::InvalidLength {
            len: b.len(),
            reason: "dyadic convolution needs equal lengths",
        });
    }
    let mut fa = fwht(a)?;
    let fb = fwht(b)?;
    for (x, y) in fa.iter_mut().zip(&fb) {
        *x *= y;
    }
    fwht_in_place(&mut fa)?;
    Ok(fa)
}

/// Perfect shuffle `P` for an M×N matrix: maps `vec(Cᵀ)` (row-major readout)
/// onto `vec(C)` (column-major readout).
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ShufflePermutation {
    n_rows: usize,
    n_cols: usize,
    // out[k] = in[index_map[k]]
    index_map: Vec<usize>,
}

impl ShufflePermutation {
    pub fn new(n_rows: usize, n_cols: usize) -> Result<Self> {
        if n_rows == 0 || n_cols == 0 {
            return Err(OtsmError::Geometry("shuffle needs positive dimensions".into()));
        }
        let mut index_map = vec![0; n_rows * n_cols];
        for m in 0..n_rows {
            for n in 0..n_cols {
                index_map[n * n_rows + m] = m * n_cols + n;
            }
        }
        Ok(Self {
            n_rows,
            n_cols,
            index_map,
        })
    }

    pub fn n_rows(&self) -> usize {
        self.n_rows
    }

    pub fn n_cols(&self) -> usize {
        self.n_cols
    }

    pub fn index_map(&self) -> &[usize] {
        &self.index_map
    }

    pub fn len(&self) -> usize {
        self.index_map.len()
    }

    pub fn is_empty(&self) -> bool {
        self.index_map.is_empty()
    }

    pub fn apply<T: Copy>(&self, v: &[T]) -> Result<Vec<T>> {
        check_len(self.len(), v.len())?;
        Ok(self.index_map.iter().map(|&i| v[i]).collect())
    }

    pub fn apply_inverse<T: Copy + Default>(&self, v: &[T]) -> Result<Vec<T>> {
        check_len(self.len(), v.len())?;
        let mut out = vec![T::default(); v.len()];
        for (k, &i) in self.index_map.iter().enumerate() {
            out[i] = v[k];
        }
        Ok(out)
    }

    /// Dense permutation matrix with `P * x == apply(x)`.
    pub fn matrix(&self) -> nalgebra::DMatrix<f64> {
        let n = self.len();
        let mut p = nalgebra::DMatrix::zeros(n, n);
        for (k, &i) in self.index_map.iter().enumerate() {
            p[(k, i)] = 1.0;
        }
        p
    }
}

/// Row-major flatten of an M×N matrix stored as rows.
pub fn vec_rows<T: Copy>(rows: &[Vec<T>]) -> Vec<T> {
    rows.iter().flat_map(|r| r.iter().copied()).collect()
}

/// Inverse of [`vec_rows`].
pub fn fold_rows<T: Copy>(v: &[T], n_cols: usize) -> Result<Vec<Vec<T>>> {
    if n_cols == 0 || v.len() % n_cols != 0 {
        return Err(OtsmError::InvalidLength {
            len: v.len(),
            reason: "length not a multiple of the column count",
        });
    }
    Ok(v.chunks(n_cols).map(|c| c.to_vec()).collect())
}
