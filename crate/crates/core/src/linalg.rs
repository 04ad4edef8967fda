//! Small dense solves for the coefficient systems (at most 9x9).

use crate::error::{Error, Result};
use crate::scalar::Scalar;

/// Row-major square matrix.
pub(crate) type Matrix<T> = Vec<Vec<T>>;

/// Solves `a * x = b` by Gaussian elimination with partial pivoting.
pub(crate) fn solve<T: Scalar>(a: &Matrix<T>, b: &[T]) -> Result<Vec<T>> {
    let n = b.len();
    debug_assert_eq!(a.len(), n);
    let mut m: Vec<Vec<T>> = a
        .iter()
        .zip(b)
        .map(|(row, &rhs)| {
            let mut r = row.clone();
            r.push(rhs);
            r
        })
        .collect();
    eliminate(&mut m, n)?;
    let mut x = vec![T::zero(); n];
    for i in (0..n).rev() {
        let mut acc = m[i][n];
        for j in i + 1..n {
            acc = acc - m[i][j] * x[j];
        }
        x[i] = acc / m[i][i];
    }
    Ok(x)
}

/// Inverse via Gauss-Jordan with partial pivoting.
pub(crate) fn invert<T: Scalar>(a: &Matrix<T>) -> Result<Matrix<T>> {
    let n = a.len();
    let mut m: Vec<Vec<T>> = a
        .iter()
        .enumerate()
        .map(|(i, row)| {
            let mut r = row.clone();
            r.extend((0..n).map(|j| if i == j { T::one() } else { T::zero() }));
            r
        })
        .collect();
    eliminate(&mut m, n)?;
    for i in (0..n).rev() {
        let piv = m[i][i];
        for v in m[i].iter_mut() {
            *v = *v / piv;
        }
        for k in 0..i {
            let f = m[k][i];
            if f != T::zero() {
                let pivot_row = m[i].clone();
                for (v, &p) in m[k].iter_mut().zip(&pivot_row) {
                    *v = *v - f * p;
                }
            }
        }
    }
    let x: Matrix<T> = m.into_iter().map(|r| r[n..].to_vec()).collect();
    // one refinement step: X + X (I - A X)
    let mut resid = matmul(a, &x);
    for (i, row) in resid.iter_mut().enumerate() {
        for (j, v) in row.iter_mut().enumerate() {
            *v = if i == j { T::one() } else { T::zero() } - *v;
        }
    }
    let corr = matmul(&x, &resid);
    Ok(x.into_iter()
        .zip(corr)
        .map(|(r, c)| r.into_iter().zip(c).map(|(u, v)| u + v).collect())
        .collect())
}

// Forward elimination to upper-triangular form on the first `n` columns.
fn eliminate<T: Scalar>(m: &mut [Vec<T>], n: usize) -> Result<()> {
    let scale = m
        .iter()
        .flat_map(|r| r[..n].iter())
        .fold(T::zero(), |acc, v| acc.max(v.abs()));
    let tiny = scale * T::epsilon() * T::lit(n as f64);
    for col in 0..n {
        let piv = (col..n)
            .max_by(|&i, &j| {
                m[i][col]
                    .abs()
                    .partial_cmp(&m[j][col].abs())
                    .unwrap_or(std::cmp::Ordering::Equal)
            })
            .unwrap_or(col);
        if !(m[piv][col].abs() > tiny) {
            return Err(Error::Singular(format!("zero pivot in column {col}")));
        }
        m.swap(col, piv);
        for row in col + 1..n {
            let f = m[row][col] / m[col][col];
            if f != T::zero() {
                for j in col..m[row].len() {
                    m[row][j] = m[row][j] - f * m[col][j];
                }
            }
        }
    }
    Ok(())
}

pub(crate) fn matmul<T: Scalar>(a: &Matrix<T>, b: &Matrix<T>) -> Matrix<T> {
    let n = a.len();
    let k = b.len();
    let m = b.first().map_or(0, Vec::len);
    (0..n)
        .map(|i| {
            (0..m)
                .map(|j| (0..k).fold(T::zero(), |acc, l| acc + a[i][l] * b[l][j]))
                .collect()
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn solves_pivoted_system() {
        let a = vec![vec![0.0, 2.0], vec![3.0, 1.0]];
        let x = solve(&a, &[4.0, 5.0]).unwrap();
        assert!((x[0] - 1.0f64).abs() < 1e-15);
        assert!((x[1] - 2.0f64).abs() < 1e-15);
    }

    #[test]
    fn singular_matrix_rejected() {
        let a = vec![vec![1.0, 1.0], vec![1.0, 1.0]];
        assert!(matches!(solve(&a, &[1.0f64, 2.0]), Err(Error::Singular(_))));
        assert!(matches!(invert(&a), Err(Error::Singular(_))));
    }

    #[test]
    fn inverse_of_3x3() {
        let a: Vec<Vec<f64>> = vec![
            vec![4.0, 7.0, 2.0],
            vec![3.0, 6.0, 1.0],
            vec![2.0, 5.0, 3.0],
        ];
        let inv = invert(&a).unwrap();
        let id = matmul(&a, &inv);
        for (i, row) in id.iter().enumerate() {
            for (j, v) in row.iter().enumerate() {
                let want: f64 = if i == j { 1.0 } else { 0.0 };
                assert!((v - want).abs() < 1e-14f64);
            }
        }
    }
}
