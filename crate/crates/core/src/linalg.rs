//! Small dense helpers on top of faer: minors, inverses with singularity
//! checks, max-norms and an exact (division-free) determinant for integer
//! rings.

use std::ops::{Add, Mul, Neg, Sub};

use faer::linalg::solvers::DenseSolveCore;
use faer::{Mat, MatRef, Side};
use num_traits::{One, Zero};

use crate::{Error, Result, C64};

/// Copies `a` with the listed rows and columns removed (0-based).
pub fn delete_rows_cols<T: Copy>(a: MatRef<'_, T>, rows: &[usize], cols: &[usize]) -> Mat<T> {
    let keep_r: Vec<usize> = (0..a.nrows()).filter(|i| !rows.contains(i)).collect();
    let keep_c: Vec<usize> = (0..a.ncols()).filter(|j| !cols.contains(j)).collect();
    Mat::from_fn(keep_r.len(), keep_c.len(), |i, j| a[(keep_r[i], keep_c[j])])
}

/// `max_{i,j} |a_ij|` for a real matrix.
pub fn max_abs(a: MatRef<'_, f64>) -> f64 {
    let mut m = 0.0f64;
    for j in 0..a.ncols() {
        for i in 0..a.nrows() {
            m = m.max(a[(i, j)].abs());
        }
    }
    m
}

/// `max_{i,j} |a_ij|` for a complex matrix.
pub fn max_abs_c(a: MatRef<'_, C64>) -> f64 {
    let mut m = 0.0f64;
    for j in 0..a.ncols() {
        for i in 0..a.nrows() {
            m = m.max(a[(i, j)].norm());
        }
    }
    m
}

/// Induced `∞ → ∞` norm (maximum absolute row sum).
pub fn inf_norm_c(a: MatRef<'_, C64>) -> f64 {
    (0..a.nrows())
        .map(|i| (0..a.ncols()).map(|j| a[(i, j)].norm()).sum::<f64>())
        .fold(0.0, f64::max)
}

fn condition_from_singular_values(sv: &[f64]) -> f64 {
    let smax = sv.first().copied().unwrap_or(0.0);
    let smin = sv.last().copied().unwrap_or(0.0);
    if smin == 0.0 {
        f64::INFINITY
    } else {
        smax / smin
    }
}

/// 2-norm condition number of a real square matrix.
pub fn condition_number(a: MatRef<'_, f64>) -> Result<f64> {
    let sv = a
        .singular_values()
        .map_err(|e| Error::Singular(format!("svd failed: {e:?}")))?;
    Ok(condition_from_singular_values(&sv))
}

/// 2-norm condition number of a complex square matrix.
pub fn condition_number_c(a: MatRef<'_, C64>) -> Result<f64> {
    let sv = a
        .singular_values()
        .map_err(|e| Error::Singular(format!("svd failed: {e:?}")))?;
    Ok(condition_from_singular_values(&sv))
}

/// Inverse of a real square matrix; fails when the matrix is numerically
/// singular (condition number above `1/ε`).
pub fn inverse(a: MatRef<'_, f64>) -> Result<Mat<f64>> {
    square(a.nrows(), a.ncols())?;
    if a.nrows() == 0 {
        return Ok(Mat::zeros(0, 0));
    }
    let cond = condition_number(a)?;
    if !(cond < 1.0 / f64::EPSILON) {
        return Err(Error::Singular(format!("condition number {cond:e}")));
    }
    Ok(a.partial_piv_lu().inverse())
}

/// Inverse of a complex square matrix with the same singularity check.
pub fn inverse_c(a: MatRef<'_, C64>) -> Result<Mat<C64>> {
    square(a.nrows(), a.ncols())?;
    if a.nrows() == 0 {
        return Ok(Mat::zeros(0, 0));
    }
    let cond = condition_number_c(a)?;
    if !(cond < 1.0 / f64::EPSILON) {
        return Err(Error::Singular(format!("condition number {cond:e}")));
    }
    Ok(a.partial_piv_lu().inverse())
}

/// Determinant of a real square matrix; the empty matrix has determinant 1.
pub fn det(a: MatRef<'_, f64>) -> f64 {
    if a.nrows() == 0 {
        1.0
    } else {
        a.determinant()
    }
}

/// Determinant of a complex square matrix; the empty matrix has determinant 1.
pub fn det_c(a: MatRef<'_, C64>) -> C64 {
    if a.nrows() == 0 {
        C64::new(1.0, 0.0)
    } else {
        a.determinant()
    }
}

/// Ascending eigenvalues of a real symmetric matrix.
pub fn sym_eigenvalues(a: MatRef<'_, f64>) -> Result<Vec<f64>> {
    a.self_adjoint_eigenvalues(Side::Lower).map_err(|_| Error::Eigensolver {
        residual: f64::NAN,
        tolerance: 0.0,
    })
}

fn square(r: usize, c: usize) -> Result<()> {
    if r != c {
        return Err(Error::Dimension(format!("expected a square matrix, got {r}x{c}")));
    }
    Ok(())
}

/// Exact determinant by cofactor expansion along the first row.
///
/// Only multiplication, addition and subtraction are used, so the result is
/// exact for integer (or Gaussian-integer) entries. Cost is `O(n · 2^n)` via
/// memoisation on the set of remaining columns, which is fine for the
/// `n ≤ 12` matrices it is used on.
pub fn det_exact<T>(a: &[Vec<T>]) -> T
where
    T: Copy + Zero + One + Add<Output = T> + Sub<Output = T> + Mul<Output = T> + Neg<Output = T>,
{
    let n = a.len();
    if n == 0 {
        return T::one();
    }
    assert!(n < 26, "exact determinant limited to n < 26");
    assert!(a.iter().all(|r| r.len() == n), "matrix must be square");
    // memo[mask] = determinant of the minor formed by rows n-|mask|..n and
    // the columns in mask.
    let full = (1usize << n) - 1;
    let mut memo: Vec<Option<T>> = vec![None; full + 1];
    memo[0] = Some(T::one());
    // Process masks in order of increasing popcount so dependencies exist.
    let mut masks: Vec<usize> = (1..=full).collect();
    masks.sort_by_key(|m| m.count_ones());
    for mask in masks {
        let k = mask.count_ones() as usize;
        let row = n - k;
        let mut acc = T::zero();
        let mut sign_pos = true;
        for col in 0..n {
            if mask & (1 << col) == 0 {
                continue;
            }
            let sub = memo[mask & !(1 << col)].expect("minor computed");
            let term = a[row][col] * sub;
            acc = if sign_pos { acc + term } else { acc - term };
            sign_pos = !sign_pos;
        }
        memo[mask] = Some(acc);
    }
    memo[full].expect("full determinant")
}

#[cfg(test)]
mod tests {
    use super::*;
    use num_complex::Complex;

    #[test]
    fn delete_rows_cols_picks_complement() {
        let a = Mat::from_fn(3, 3, |i, j| (3 * i + j) as f64);
        let b = delete_rows_cols(a.as_ref(), &[1], &[0, 2]);
        assert_eq!(b.nrows(), 2);
        assert_eq!(b.ncols(), 1);
        assert_eq!(b[(0, 0)], 1.0);
        assert_eq!(b[(1, 0)], 7.0);
    }

    #[test]
    fn exact_determinant_matches_float() {
        let rows = vec![vec![2i64, -1, 0, 3], vec![1, 4, 2, 0], vec![0, 5, -2, 1], vec![3, 0, 1, 1]];
        let exact = det_exact(&rows);
        let a = Mat::from_fn(4, 4, |i, j| rows[i][j] as f64);
        assert!((det(a.as_ref()) - exact as f64).abs() < 1e-9);
    }

    #[test]
    fn exact_determinant_gaussian_integers() {
        let i = Complex::new(0i64, 1);
        let one = Complex::new(1i64, 0);
        let rows = vec![vec![one, i], vec![-i, one + one]];
        // det = 2 - (i)(-i) = 2 - 1 = 1
        assert_eq!(det_exact(&rows), one);
    }

    #[test]
    fn inverse_rejects_singular() {
        let a = Mat::from_fn(2, 2, |_, _| 1.0);
        assert!(matches!(inverse(a.as_ref()), Err(Error::Singular(_))));
        let b = Mat::from_fn(2, 2, |i, j| if i == j { 2.0 } else { 1.0 });
        let inv = inverse(b.as_ref()).unwrap();
        assert!((inv[(0, 0)] - 2.0 / 3.0).abs() < 1e-14);
        assert!((inv[(0, 1)] + 1.0 / 3.0).abs() < 1e-14);
    }

    #[test]
    fn empty_matrix_conventions() {
        let e = Mat::<f64>::zeros(0, 0);
        assert_eq!(det(e.as_ref()), 1.0);
        assert_eq!(inverse(e.as_ref()).unwrap().nrows(), 0);
    }
}
