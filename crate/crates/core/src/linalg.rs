//! Small dense helpers on top of nalgebra.

use nalgebra::{DMatrix, DVector};
use num_complex::Complex64;

/// Rank tolerance `max(rows, cols) · eps · σ_max`.
pub fn rank_tolerance(rows: usize, cols: usize, sigma_max: f64) -> f64 {
    rows.max(cols) as f64 * f64::EPSILON * sigma_max
}

pub fn singular_values(a: &DMatrix<f64>) -> DVector<f64> {
    if a.is_empty() {
        return DVector::zeros(0);
    }
    a.clone().svd(false, false).singular_values
}

pub fn complex_singular_values(a: &DMatrix<Complex64>) -> DVector<f64> {
    if a.is_empty() {
        return DVector::zeros(0);
    }
    a.clone().svd(false, false).singular_values
}

pub fn spectral_norm(a: &DMatrix<f64>) -> f64 {
    singular_values(a).iter().copied().fold(0.0, f64::max)
}

/// Numerical rank with the default tolerance.
pub fn rank(a: &DMatrix<f64>) -> usize {
    let sv = singular_values(a);
    let smax = sv.iter().copied().fold(0.0, f64::max);
    if smax == 0.0 {
        return 0;
    }
    let tol = rank_tolerance(a.nrows(), a.ncols(), smax);
    sv.iter().filter(|&&s| s > tol).count()
}

pub fn complex_rank(a: &DMatrix<Complex64>) -> usize {
    let sv = complex_singular_values(a);
    let smax = sv.iter().copied().fold(0.0, f64::max);
    if smax == 0.0 {
        return 0;
    }
    let tol = rank_tolerance(a.nrows(), a.ncols(), smax);
    sv.iter().filter(|&&s| s > tol).count()
}

/// Count of singular values above an absolute threshold.
pub fn complex_rank_above(a: &DMatrix<Complex64>, tol: f64) -> usize {
    complex_singular_values(a)
        .iter()
        .filter(|&&s| s > tol)
        .count()
}

/// `[a, b]` side by side.
pub fn hstack(a: &DMatrix<f64>, b: &DMatrix<f64>) -> DMatrix<f64> {
    assert_eq!(a.nrows(), b.nrows());
    let mut out = DMatrix::zeros(a.nrows(), a.ncols() + b.ncols());
    out.columns_mut(0, a.ncols()).copy_from(a);
    out.columns_mut(a.ncols(), b.ncols()).copy_from(b);
    out
}

/// Determinant of a small complex matrix by Gaussian elimination with partial
/// pivoting. `a` is row-major `n × n` and is overwritten.
pub fn complex_det_in_place(a: &mut [Complex64], n: usize) -> Complex64 {
    let mut det = Complex64::new(1.0, 0.0);
    for c in 0..n {
        let mut piv = c;
        let mut best = a[c * n + c].norm_sqr();
        for r in c + 1..n {
            let v = a[r * n + c].norm_sqr();
            if v > best {
                best = v;
                piv = r;
            }
        }
        if best == 0.0 {
            return Complex64::new(0.0, 0.0);
        }
        if piv != c {
            for k in 0..n {
                a.swap(c * n + k, piv * n + k);
            }
            det = -det;
        }
        let d = a[c * n + c];
        det *= d;
        for r in c + 1..n {
            let f = a[r * n + c] / d;
            if f != Complex64::new(0.0, 0.0) {
                for k in c + 1..n {
                    let v = a[c * n + k];
                    a[r * n + k] -= f * v;
                }
            }
        }
    }
    det
}

pub fn complex_det(a: &DMatrix<Complex64>) -> Complex64 {
    let n = a.nrows();
    let mut buf: Vec<Complex64> = (0..n * n).map(|k| a[(k / n, k % n)]).collect();
    complex_det_in_place(&mut buf, n)
}

pub fn to_complex(a: &DMatrix<f64>) -> DMatrix<Complex64> {
    a.map(|v| Complex64::new(v, 0.0))
}
