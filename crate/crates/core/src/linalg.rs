//! Dense vector and matrix arithmetic plus the few spectral and factorization
//! routines the solvers need. Everything is `f64` and column-major: a
//! gradient matrix stores one task gradient per column.

use std::fmt;
use std::ops::{Index, IndexMut};

use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum LinalgError {
    #[error("shape mismatch: expected {expected}, got {got}")]
    Shape { expected: String, got: String },
    #[error("matrix is not symmetric (max |M_ij - M_ji| = {max_asym:e})")]
    NotSymmetric { max_asym: f64 },
    #[error("matrix is not positive definite: pivot {pivot} = {value:e}")]
    NotPositiveDefinite { pivot: usize, value: f64 },
    #[error("matrix is singular at pivot {pivot}")]
    Singular { pivot: usize },
    #[error("non-finite entry")]
    NonFinite,
}

fn shape_err(expected: impl Into<String>, got: impl Into<String>) -> LinalgError {
    LinalgError::Shape {
        expected: expected.into(),
        got: got.into(),
    }
}

/// A dense real vector.
#[derive(Clone, PartialEq, Default)]
pub struct Vector(Vec<f64>);

impl Vector {
    pub fn zeros(n: usize) -> Self {
        Vector(vec![0.0; n])
    }

    pub fn from_elem(n: usize, v: f64) -> Self {
        Vector(vec![v; n])
    }

    pub fn from_vec(v: Vec<f64>) -> Self {
        Vector(v)
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.0
    }

    pub fn as_mut_slice(&mut self) -> &mut [f64] {
        &mut self.0
    }

    pub fn into_vec(self) -> Vec<f64> {
        self.0
    }

    pub fn iter(&self) -> std::slice::Iter<'_, f64> {
        self.0.iter()
    }

    pub fn dot(&self, other: &Vector) -> f64 {
        dot(&self.0, &other.0)
    }

    pub fn norm(&self) -> f64 {
        self.dot(self).sqrt()
    }

    pub fn norm_inf(&self) -> f64 {
        self.0.iter().fold(0.0, |m, x| m.max(x.abs()))
    }

    pub fn sum(&self) -> f64 {
        self.0.iter().sum()
    }

    pub fn is_finite(&self) -> bool {
        self.0.iter().all(|x| x.is_finite())
    }

    pub fn scale(&self, s: f64) -> Vector {
        Vector(self.0.iter().map(|x| x * s).collect())
    }

    /// `self += s * other`
    pub fn axpy(&mut self, s: f64, other: &Vector) {
        axpy(&mut self.0, s, &other.0);
    }

    pub fn sub(&self, other: &Vector) -> Vector {
        Vector(self.0.iter().zip(&other.0).map(|(a, b)| a - b).collect())
    }

    pub fn add(&self, other: &Vector) -> Vector {
        Vector(self.0.iter().zip(&other.0).map(|(a, b)| a + b).collect())
    }

    pub fn hadamard(&self, other: &Vector) -> Vector {
        Vector(self.0.iter().zip(&other.0).map(|(a, b)| a * b).collect())
    }

    pub fn recip(&self) -> Vector {
        Vector(self.0.iter().map(|x| 1.0 / x).collect())
    }

    pub fn min(&self) -> f64 {
        self.0.iter().copied().fold(f64::INFINITY, f64::min)
    }

    pub fn max(&self) -> f64 {
        self.0.iter().copied().fold(f64::NEG_INFINITY, f64::max)
    }
}

impl fmt::Debug for Vector {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_list().entries(self.0.iter()).finish()
    }
}

impl From<Vec<f64>> for Vector {
    fn from(v: Vec<f64>) -> Self {
        Vector(v)
    }
}

impl From<&[f64]> for Vector {
    fn from(v: &[f64]) -> Self {
        Vector(v.to_vec())
    }
}

impl<const N: usize> From<[f64; N]> for Vector {
    fn from(v: [f64; N]) -> Self {
        Vector(v.to_vec())
    }
}

impl Index<usize> for Vector {
    type Output = f64;
    fn index(&self, i: usize) -> &f64 {
        &self.0[i]
    }
}

impl IndexMut<usize> for Vector {
    fn index_mut(&mut self, i: usize) -> &mut f64 {
        &mut self.0[i]
    }
}

impl<'a> IntoIterator for &'a Vector {
    type Item = &'a f64;
    type IntoIter = std::slice::Iter<'a, f64>;
    fn into_iter(self) -> Self::IntoIter {
        self.0.iter()
    }
}

/// A dense column-major matrix.
#[derive(Clone, PartialEq)]
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

    pub fn identity(n: usize) -> Self {
        let mut m = Matrix::zeros(n, n);
        for i in 0..n {
            m[(i, i)] = 1.0;
        }
        m
    }

    pub fn diag(d: &[f64]) -> Self {
        let mut m = Matrix::zeros(d.len(), d.len());
        for (i, v) in d.iter().enumerate() {
            m[(i, i)] = *v;
        }
        m
    }

    /// Builds a matrix from column-major storage.
    pub fn from_col_major(rows: usize, cols: usize, data: Vec<f64>) -> Result<Self, LinalgError> {
        if data.len() != rows * cols {
            return Err(shape_err(
                format!("{} entries for {rows}x{cols}", rows * cols),
                format!("{} entries", data.len()),
            ));
        }
        Ok(Matrix { rows, cols, data })
    }

    /// Builds a matrix whose columns are the given vectors.
    pub fn from_columns(columns: &[Vector]) -> Result<Self, LinalgError> {
        let cols = columns.len();
        let rows = columns.first().map_or(0, Vector::len);
        let mut data = Vec::with_capacity(rows * cols);
        for (j, c) in columns.iter().enumerate() {
            if c.len() != rows {
                return Err(shape_err(
                    format!("column of length {rows}"),
                    format!("column {j} of length {}", c.len()),
                ));
            }
            data.extend_from_slice(c.as_slice());
        }
        Ok(Matrix { rows, cols, data })
    }

    /// Builds a matrix from row slices; convenient for small literals.
    pub fn from_rows(rows: &[&[f64]]) -> Result<Self, LinalgError> {
        let r = rows.len();
        let c = rows.first().map_or(0, |x| x.len());
        let mut m = Matrix::zeros(r, c);
        for (i, row) in rows.iter().enumerate() {
            if row.len() != c {
                return Err(shape_err(format!("row of length {c}"), format!("row {i} of length {}", row.len())));
            }
            for (j, v) in row.iter().enumerate() {
                m[(i, j)] = *v;
            }
        }
        Ok(m)
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn as_col_major(&self) -> &[f64] {
        &self.data
    }

    pub fn col(&self, j: usize) -> &[f64] {
        &self.data[j * self.rows..(j + 1) * self.rows]
    }

    pub fn col_mut(&mut self, j: usize) -> &mut [f64] {
        &mut self.data[j * self.rows..(j + 1) * self.rows]
    }

    pub fn column(&self, j: usize) -> Vector {
        Vector::from(self.col(j))
    }

    pub fn columns(&self) -> Vec<Vector> {
        (0..self.cols).map(|j| self.column(j)).collect()
    }

    pub fn is_finite(&self) -> bool {
        self.data.iter().all(|x| x.is_finite())
    }

    pub fn trace(&self) -> f64 {
        (0..self.rows.min(self.cols)).map(|i| self[(i, i)]).sum()
    }

    /// `self * x`
    pub fn mul_vec(&self, x: &Vector) -> Result<Vector, LinalgError> {
        if x.len() != self.cols {
            return Err(shape_err(
                format!("vector of length {}", self.cols),
                format!("length {}", x.len()),
            ));
        }
        let mut out = vec![0.0; self.rows];
        for (j, xj) in x.iter().enumerate() {
            axpy(&mut out, *xj, self.col(j));
        }
        Ok(Vector(out))
    }

    /// `self^T * y`
    pub fn tr_mul_vec(&self, y: &Vector) -> Result<Vector, LinalgError> {
        if y.len() != self.rows {
            return Err(shape_err(
                format!("vector of length {}", self.rows),
                format!("length {}", y.len()),
            ));
        }
        Ok(Vector((0..self.cols).map(|j| dot(self.col(j), y.as_slice())).collect()))
    }

    pub fn transpose(&self) -> Matrix {
        let mut t = Matrix::zeros(self.cols, self.rows);
        for j in 0..self.cols {
            for i in 0..self.rows {
                t[(j, i)] = self[(i, j)];
            }
        }
        t
    }

    pub fn matmul(&self, other: &Matrix) -> Result<Matrix, LinalgError> {
        if self.cols != other.rows {
            return Err(shape_err(
                format!("{} rows on the right operand", self.cols),
                format!("{} rows", other.rows),
            ));
        }
        let mut out = Matrix::zeros(self.rows, other.cols);
        for j in 0..other.cols {
            for k in 0..self.cols {
                let s = other[(k, j)];
                if s != 0.0 {
                    let (src, dst) = (self.col(k).to_vec(), out.col_mut(j));
                    axpy(dst, s, &src);
                }
            }
        }
        Ok(out)
    }

    /// Returns a copy with columns reordered so that column `j` of the result
    /// is column `perm[j]` of `self`.
    pub fn permute_columns(&self, perm: &[usize]) -> Matrix {
        let mut out = Matrix::zeros(self.rows, perm.len());
        for (j, &p) in perm.iter().enumerate() {
            out.col_mut(j).copy_from_slice(self.col(p));
        }
        out
    }

    pub fn max_asymmetry(&self) -> f64 {
        let mut m: f64 = 0.0;
        for i in 0..self.rows {
            for j in (i + 1)..self.cols {
                m = m.max((self[(i, j)] - self[(j, i)]).abs());
            }
        }
        m
    }

    pub fn max_abs(&self) -> f64 {
        self.data.iter().fold(0.0, |m, x| m.max(x.abs()))
    }
}

impl fmt::Debug for Matrix {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        writeln!(f, "Matrix {}x{} [", self.rows, self.cols)?;
        for i in 0..self.rows {
            let row: Vec<f64> = (0..self.cols).map(|j| self[(i, j)]).collect();
            writeln!(f, "  {row:?}")?;
        }
        write!(f, "]")
    }
}

impl Index<(usize, usize)> for Matrix {
    type Output = f64;
    fn index(&self, (i, j): (usize, usize)) -> &f64 {
        &self.data[j * self.rows + i]
    }
}

impl IndexMut<(usize, usize)> for Matrix {
    fn index_mut(&mut self, (i, j): (usize, usize)) -> &mut f64 {
        &mut self.data[j * self.rows + i]
    }
}

pub fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

pub fn axpy(y: &mut [f64], s: f64, x: &[f64]) {
    for (yi, xi) in y.iter_mut().zip(x) {
        *yi += s * xi;
    }
}

/// Gram matrix `G^T G` of the columns of `g`. Each unordered pair is computed
/// once and mirrored, so the result is exactly symmetric.
pub fn gram(g: &Matrix) -> Result<Matrix, LinalgError> {
    if g.rows() == 0 || g.cols() == 0 {
        return Err(shape_err("non-empty matrix", format!("{}x{}", g.rows(), g.cols())));
    }
    if !g.is_finite() {
        return Err(LinalgError::NonFinite);
    }
    let k = g.cols();
    let mut out = Matrix::zeros(k, k);
    for i in 0..k {
        for j in i..k {
            let v = dot(g.col(i), g.col(j));
            out[(i, j)] = v;
            out[(j, i)] = v;
        }
    }
    Ok(out)
}

fn check_symmetric(m: &Matrix) -> Result<(), LinalgError> {
    if m.rows() != m.cols() {
        return Err(shape_err("square matrix", format!("{}x{}", m.rows(), m.cols())));
    }
    let asym = m.max_asymmetry();
    if asym > 1e-10 * m.max_abs().max(f64::MIN_POSITIVE) {
        return Err(LinalgError::NotSymmetric { max_asym: asym });
    }
    Ok(())
}

/// Eigenvalues of a symmetric matrix by cyclic Jacobi rotations, ascending.
pub fn symmetric_eigenvalues(m: &Matrix) -> Result<Vec<f64>, LinalgError> {
    check_symmetric(m)?;
    if !m.is_finite() {
        return Err(LinalgError::NonFinite);
    }
    let n = m.rows();
    let mut a = m.clone();
    // symmetrize exactly so rotations act on a truly symmetric matrix
    for i in 0..n {
        for j in (i + 1)..n {
            let v = 0.5 * (a[(i, j)] + a[(j, i)]);
            a[(i, j)] = v;
            a[(j, i)] = v;
        }
    }
    let frob = a.as_col_major().iter().map(|x| x * x).sum::<f64>().sqrt();
    for _sweep in 0..100 {
        let off: f64 = (0..n)
            .flat_map(|i| (0..n).filter(move |&j| j != i).map(move |j| (i, j)))
            .map(|(i, j)| a[(i, j)] * a[(i, j)])
            .sum::<f64>()
            .sqrt();
        if off <= 1e-15 * frob || off == 0.0 {
            break;
        }
        for p in 0..n {
            for q in (p + 1)..n {
                let apq = a[(p, q)];
                if apq.abs() <= f64::MIN_POSITIVE {
                    continue;
                }
                let app = a[(p, p)];
                let aqq = a[(q, q)];
                let theta = (aqq - app) / (2.0 * apq);
                let t = theta.signum() / (theta.abs() + (theta * theta + 1.0).sqrt());
                let t = if theta == 0.0 { 1.0 } else { t };
                let c = 1.0 / (t * t + 1.0).sqrt();
                let s = t * c;
                for k in 0..n {
                    let akp = a[(k, p)];
                    let akq = a[(k, q)];
                    a[(k, p)] = c * akp - s * akq;
                    a[(k, q)] = s * akp + c * akq;
                }
                for k in 0..n {
                    let apk = a[(p, k)];
                    let aqk = a[(q, k)];
                    a[(p, k)] = c * apk - s * aqk;
                    a[(q, k)] = s * apk + c * aqk;
                }
                a[(p, q)] = 0.0;
                a[(q, p)] = 0.0;
            }
        }
    }
    let mut ev: Vec<f64> = (0..n).map(|i| a[(i, i)]).collect();
    ev.sort_by(|x, y| x.total_cmp(y));
    Ok(ev)
}

/// Smallest singular value of a symmetric positive-semidefinite matrix, which
/// coincides with its smallest eigenvalue. Round-off negatives clamp to zero.
pub fn smallest_singular_value(m: &Matrix) -> Result<f64, LinalgError> {
    let ev = symmetric_eigenvalues(m)?;
    Ok(ev.first().copied().unwrap_or(0.0).max(0.0))
}

/// Lower-triangular Cholesky factor `L` with `M = L L^T`.
pub fn cholesky(m: &Matrix) -> Result<Matrix, LinalgError> {
    if m.rows() != m.cols() {
        return Err(shape_err("square matrix", format!("{}x{}", m.rows(), m.cols())));
    }
    let n = m.rows();
    let mut l = Matrix::zeros(n, n);
    for j in 0..n {
        let mut d = m[(j, j)];
        for k in 0..j {
            d -= l[(j, k)] * l[(j, k)];
        }
        if !(d > 0.0) || !d.is_finite() {
            return Err(LinalgError::NotPositiveDefinite { pivot: j, value: d });
        }
        let d = d.sqrt();
        l[(j, j)] = d;
        for i in (j + 1)..n {
            let mut s = m[(i, j)];
            for k in 0..j {
                s -= l[(i, k)] * l[(j, k)];
            }
            l[(i, j)] = s / d;
        }
    }
    Ok(l)
}

/// Solves `M x = b` for symmetric positive-definite `M` via Cholesky.
pub fn solve_spd(m: &Matrix, b: &Vector) -> Result<Vector, LinalgError> {
    if b.len() != m.rows() {
        return Err(shape_err(format!("rhs of length {}", m.rows()), format!("length {}", b.len())));
    }
    let l = cholesky(m)?;
    let n = b.len();
    let mut y = b.clone().into_vec();
    for i in 0..n {
        let mut s = y[i];
        for k in 0..i {
            s -= l[(i, k)] * y[k];
        }
        y[i] = s / l[(i, i)];
    }
    for i in (0..n).rev() {
        let mut s = y[i];
        for k in (i + 1)..n {
            s -= l[(k, i)] * y[k];
        }
        y[i] = s / l[(i, i)];
    }
    Ok(Vector(y))
}

/// Solves a general square system by Gaussian elimination with partial pivoting.
pub fn solve_general(m: &Matrix, b: &Vector) -> Result<Vector, LinalgError> {
    let n = m.rows();
    if m.cols() != n || b.len() != n {
        return Err(shape_err(
            format!("{n}x{n} system"),
            format!("{}x{} with rhs {}", m.rows(), m.cols(), b.len()),
        ));
    }
    let mut a = m.clone();
    let mut x = b.clone().into_vec();
    let scale = m.max_abs().max(f64::MIN_POSITIVE);
    for col in 0..n {
        let piv = (col..n)
            .max_by(|&i, &j| a[(i, col)].abs().total_cmp(&a[(j, col)].abs()))
            .unwrap_or(col);
        if a[(piv, col)].abs() <= 1e-13 * scale {
            return Err(LinalgError::Singular { pivot: col });
        }
        if piv != col {
            for j in 0..n {
                let tmp = a[(col, j)];
                a[(col, j)] = a[(piv, j)];
                a[(piv, j)] = tmp;
            }
            x.swap(col, piv);
        }
        for i in (col + 1)..n {
            let f = a[(i, col)] / a[(col, col)];
            if f != 0.0 {
                for j in col..n {
                    a[(i, j)] -= f * a[(col, j)];
                }
                x[i] -= f * x[col];
            }
        }
    }
    for i in (0..n).rev() {
        let mut s = x[i];
        for j in (i + 1)..n {
            s -= a[(i, j)] * x[j];
        }
        x[i] = s / a[(i, i)];
    }
    Ok(Vector(x))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn gram_examples() {
        let g = Matrix::identity(2);
        assert_eq!(gram(&g).unwrap(), Matrix::identity(2));

        let g = Matrix::from_columns(&[Vector::from([1.0, 0.0]), Vector::from([1.0, 1.0])]).unwrap();
        assert_eq!(gram(&g).unwrap(), Matrix::from_rows(&[&[1.0, 1.0], &[1.0, 2.0]]).unwrap());

        let g = Matrix::from_columns(&[Vector::from([3.0, 4.0])]).unwrap();
        assert_eq!(gram(&g).unwrap()[(0, 0)], 25.0);
    }

    #[test]
    fn gram_rejects_empty_and_nonfinite() {
        assert!(matches!(gram(&Matrix::zeros(0, 2)), Err(LinalgError::Shape { .. })));
        let g = Matrix::from_col_major(1, 1, vec![f64::NAN]).unwrap();
        assert_eq!(gram(&g), Err(LinalgError::NonFinite));
    }

    #[test]
    fn smallest_singular_value_examples() {
        assert!((smallest_singular_value(&Matrix::identity(3)).unwrap() - 1.0).abs() < 1e-14);
        let m = Matrix::from_rows(&[&[1.0, 1.0], &[1.0, 1.0]]).unwrap();
        assert!(smallest_singular_value(&m).unwrap().abs() < 1e-10);
        let m = Matrix::diag(&[2.0, 0.5]);
        assert!((smallest_singular_value(&m).unwrap() - 0.5).abs() < 1e-14);
    }

    #[test]
    fn asymmetric_input_is_rejected() {
        let m = Matrix::from_rows(&[&[1.0, 0.5], &[0.0, 1.0]]).unwrap();
        assert!(matches!(smallest_singular_value(&m), Err(LinalgError::NotSymmetric { .. })));
    }

    #[test]
    fn solve_spd_examples() {
        let x = solve_spd(&Matrix::identity(2), &Vector::from([1.0, 2.0])).unwrap();
        assert_eq!(x.as_slice(), &[1.0, 2.0]);
        let x = solve_spd(&Matrix::diag(&[4.0, 9.0]), &Vector::from([8.0, 27.0])).unwrap();
        assert!((x[0] - 2.0).abs() < 1e-15 && (x[1] - 3.0).abs() < 1e-15);
        let m = Matrix::from_rows(&[&[2.0, 1.0], &[1.0, 2.0]]).unwrap();
        let x = solve_spd(&m, &Vector::from([3.0, 3.0])).unwrap();
        let back = m.mul_vec(&x).unwrap();
        assert!((back[0] - 3.0).abs() < 1e-14 && (back[1] - 3.0).abs() < 1e-14);
        assert!((x[0] - 1.0).abs() < 1e-14 && (x[1] - 1.0).abs() < 1e-14);
    }

    #[test]
    fn solve_spd_reports_failing_pivot() {
        let m = Matrix::from_rows(&[&[1.0, 2.0], &[2.0, 1.0]]).unwrap();
        match solve_spd(&m, &Vector::from([1.0, 1.0])) {
            Err(LinalgError::NotPositiveDefinite { pivot, .. }) => assert_eq!(pivot, 1),
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn solve_general_and_singular() {
        let m = Matrix::from_rows(&[&[0.0, 2.0], &[3.0, 1.0]]).unwrap();
        let x = solve_general(&m, &Vector::from([4.0, 5.0])).unwrap();
        assert!((x[0] - 1.0).abs() < 1e-14 && (x[1] - 2.0).abs() < 1e-14);
        let s = Matrix::from_rows(&[&[1.0, 2.0], &[2.0, 4.0]]).unwrap();
        assert!(matches!(solve_general(&s, &Vector::from([1.0, 1.0])), Err(LinalgError::Singular { .. })));
    }

    #[test]
    fn mul_vec_shape_error() {
        let m = Matrix::zeros(2, 3);
        assert!(m.mul_vec(&Vector::zeros(2)).is_err());
        assert!(m.tr_mul_vec(&Vector::zeros(3)).is_err());
    }
}
