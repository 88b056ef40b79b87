//! Small dense helpers shared by the oracle paths and the bound calculator.

use nalgebra::{DMatrix, DVector};

use crate::C64;

pub type CMat = DMatrix<C64>;
pub type CVec = DVector<C64>;

pub fn kron_real(a: &DMatrix<f64>, b: &DMatrix<f64>) -> DMatrix<f64> {
    a.kronecker(b)
}

pub fn to_complex(a: &DMatrix<f64>) -> CMat {
    a.map(|x| C64::new(x, 0.0))
}

pub fn diag(d: &[C64]) -> CMat {
    CMat::from_diagonal(&CVec::from_column_slice(d))
}

/// CP insertion `A_cp`: (L × NM), copies the last `cp` samples to the front.
pub fn cp_add_matrix(body: usize, cp: usize) -> DMatrix<f64> {
    let mut a = DMatrix::zeros(body + cp, body);
    for i in 0..cp {
        a[(i, body - cp + i)] = 1.0;
    }
    for i in 0..body {
        a[(cp + i, i)] = 1.0;
    }
    a
}

/// CP removal `R_cp`: (NM × L), drops the first `cp` samples.
pub fn cp_remove_matrix(body: usize, cp: usize) -> DMatrix<f64> {
    let mut r = DMatrix::zeros(body, body + cp);
    for i in 0..body {
        r[(i, cp + i)] = 1.0;
    }
    r
}

pub fn max_abs_diff(a: &[C64], b: &[C64]) -> f64 {
    assert_eq!(a.len(), b.len());
    a.iter().zip(b).map(|(x, y)| (x - y).norm()).fold(0.0, f64::max)
}

pub fn norm_sqr(v: &[C64]) -> f64 {
    v.iter().map(|x| x.norm_sqr()).sum()
}

/// Determinant of a small square matrix held row-major in `a` (destroyed).
/// Gaussian elimination with partial pivoting, no allocation.
pub fn det_in_place(a: &mut [C64], p: usize) -> C64 {
    debug_assert_eq!(a.len(), p * p);
    let mut det = C64::new(1.0, 0.0);
    for col in 0..p {
        let mut piv = col;
        let mut best = a[col * p + col].norm_sqr();
        for r in col + 1..p {
            let v = a[r * p + col].norm_sqr();
            if v > best {
                best = v;
                piv = r;
            }
        }
        if best == 0.0 {
            return C64::new(0.0, 0.0);
        }
        if piv != col {
            for c in 0..p {
                a.swap(col * p + c, piv * p + c);
            }
            det = -det;
        }
        let d = a[col * p + col];
        det *= d;
        for r in col + 1..p {
            let f = a[r * p + col] / d;
            if f == C64::new(0.0, 0.0) {
                continue;
            }
            for c in col..p {
                let t = a[col * p + c];
                a[r * p + c] -= f * t;
            }
        }
    }
    det
}
