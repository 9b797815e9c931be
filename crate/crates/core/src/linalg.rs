//! Small dense linear algebra: Cholesky with a jitter ladder, triangular
//! solves and a cyclic Jacobi symmetric eigensolver.

use crate::error::{Error, Result};

/// Row-major square or rectangular matrix.
#[derive(Clone, Debug, PartialEq)]
pub struct Matrix {
    pub rows: usize,
    pub cols: usize,
    pub data: Vec<f64>,
}

impl Matrix {
    pub fn zeros(rows: usize, cols: usize) -> Self {
        Self {
            rows,
            cols,
            data: vec![0.0; rows * cols],
        }
    }

    pub fn identity(n: usize) -> Self {
        let mut m = Self::zeros(n, n);
        for i in 0..n {
            m.data[i * n + i] = 1.0;
        }
        m
    }

    pub fn from_rows(rows: &[Vec<f64>]) -> Self {
        let r = rows.len();
        let c = rows.first().map_or(0, Vec::len);
        assert!(rows.iter().all(|row| row.len() == c), "ragged matrix");
        Self {
            rows: r,
            cols: c,
            data: rows.concat(),
        }
    }

    pub fn from_fn(rows: usize, cols: usize, mut f: impl FnMut(usize, usize) -> f64) -> Self {
        let mut data = Vec::with_capacity(rows * cols);
        for i in 0..rows {
            for j in 0..cols {
                data.push(f(i, j));
            }
        }
        Self { rows, cols, data }
    }

    #[inline]
    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.data[i * self.cols + j]
    }

    #[inline]
    pub fn set(&mut self, i: usize, j: usize, v: f64) {
        self.data[i * self.cols + j] = v;
    }

    pub fn row(&self, i: usize) -> &[f64] {
        &self.data[i * self.cols..(i + 1) * self.cols]
    }

    pub fn diag(&self) -> Vec<f64> {
        (0..self.rows.min(self.cols)).map(|i| self.get(i, i)).collect()
    }

    pub fn transpose(&self) -> Self {
        Self::from_fn(self.cols, self.rows, |i, j| self.get(j, i))
    }

    pub fn matmul(&self, other: &Matrix) -> Matrix {
        assert_eq!(self.cols, other.rows, "matmul shape");
        let mut out = Matrix::zeros(self.rows, other.cols);
        // SAFETY: buffers match the declared row-major extents.
        unsafe {
            matrixmultiply::dgemm(
                self.rows,
                self.cols,
                other.cols,
                1.0,
                self.data.as_ptr(),
                self.cols as isize,
                1,
                other.data.as_ptr(),
                other.cols as isize,
                1,
                0.0,
                out.data.as_mut_ptr(),
                other.cols as isize,
                1,
            );
        }
        out
    }

    pub fn matvec(&self, v: &[f64]) -> Vec<f64> {
        assert_eq!(self.cols, v.len());
        (0..self.rows)
            .map(|i| self.row(i).iter().zip(v).map(|(a, b)| a * b).sum())
            .collect()
    }

    /// Entrywise max-abs norm.
    pub fn max_abs(&self) -> f64 {
        self.data.iter().fold(0.0, |m, v| m.max(v.abs()))
    }

    pub fn sub(&self, other: &Matrix) -> Matrix {
        assert_eq!((self.rows, self.cols), (other.rows, other.cols));
        Matrix {
            rows: self.rows,
            cols: self.cols,
            data: self.data.iter().zip(&other.data).map(|(a, b)| a - b).collect(),
        }
    }

    pub fn add_diagonal(&mut self, value: f64) {
        for i in 0..self.rows.min(self.cols) {
            self.data[i * self.cols + i] += value;
        }
    }

    pub fn is_square(&self) -> bool {
        self.rows == self.cols
    }

    fn symmetrized(&self) -> Matrix {
        Matrix::from_fn(self.rows, self.cols, |i, j| 0.5 * (self.get(i, j) + self.get(j, i)))
    }
}

/// Plain Cholesky factor `L` with `L Lᵀ = a`; fails on a non-positive pivot.
pub fn cholesky(a: &Matrix) -> Result<Matrix> {
    if !a.is_square() {
        return Err(Error::Shape(format!("cholesky of {}x{} matrix", a.rows, a.cols)));
    }
    let n = a.rows;
    let mut l = Matrix::zeros(n, n);
    for j in 0..n {
        let lj = &l.data[j * n..j * n + j];
        let d = a.get(j, j) - lj.iter().map(|v| v * v).sum::<f64>();
        if !(d > 0.0) || !d.is_finite() {
            return Err(Error::Numerical(format!(
                "matrix of size {n} is not positive definite (pivot {j} = {d:e})"
            )));
        }
        let djj = d.sqrt();
        l.data[j * n + j] = djj;
        for i in j + 1..n {
            let (head, tail) = l.data.split_at_mut(i * n);
            let lj = &head[j * n..j * n + j];
            let li = &tail[..j];
            let dot: f64 = li.iter().zip(lj).map(|(a, b)| a * b).sum();
            tail[j] = (a.get(i, j) - dot) / djj;
        }
    }
    Ok(l)
}

/// Jitter values tried in order by [`cholesky_jitter`].
pub const JITTER_LADDER: [f64; 8] = [0.0, 1e-12, 1e-11, 1e-10, 1e-9, 1e-8, 1e-7, 1e-6];

/// Cholesky of `k + jitter I`, escalating the jitter by decades from 1e-12 to
/// 1e-6 until the factorization succeeds. An exact factorization (jitter 0) is
/// tried first, and the all-zero matrix factors as zero.
pub fn cholesky_jitter(k: &Matrix) -> Result<(Matrix, f64)> {
    if !k.is_square() {
        return Err(Error::Shape(format!("cholesky of {}x{} matrix", k.rows, k.cols)));
    }
    if k.data.iter().all(|&v| v == 0.0) {
        return Ok((Matrix::zeros(k.rows, k.cols), 0.0));
    }
    for &jitter in &JITTER_LADDER {
        let mut kj = k.clone();
        kj.add_diagonal(jitter);
        if let Ok(l) = cholesky(&kj) {
            return Ok((l, jitter));
        }
    }
    Err(Error::Numerical(format!(
        "matrix of size {} is not positive semi-definite even with jitter {:e}",
        k.rows,
        JITTER_LADDER[JITTER_LADDER.len() - 1]
    )))
}

/// Solves `L x = b` in place for lower-triangular `L`.
pub fn solve_lower_in_place(l: &Matrix, b: &mut [f64]) {
    let n = l.rows;
    for i in 0..n {
        let s: f64 = l.row(i)[..i].iter().zip(&b[..i]).map(|(a, x)| a * x).sum();
        b[i] = (b[i] - s) / l.get(i, i);
    }
}

/// Solves `Lᵀ x = b` in place for lower-triangular `L`.
pub fn solve_lower_transpose_in_place(l: &Matrix, b: &mut [f64]) {
    let n = l.rows;
    for i in (0..n).rev() {
        let mut s = 0.0;
        for k in i + 1..n {
            s += l.get(k, i) * b[k];
        }
        b[i] = (b[i] - s) / l.get(i, i);
    }
}

/// `(L Lᵀ)⁻¹ b`.
pub fn cholesky_solve(l: &Matrix, b: &[f64]) -> Vec<f64> {
    let mut x = b.to_vec();
    solve_lower_in_place(l, &mut x);
    solve_lower_transpose_in_place(l, &mut x);
    x
}

/// Symmetric eigendecomposition by cyclic Jacobi rotations.
///
/// Returns eigenvalues and the matrix whose columns are the eigenvectors.
/// Sweeps stop once the off-diagonal Frobenius norm falls below `1e-12`
/// relative to the full norm.
pub fn symmetric_eigen(a: &Matrix) -> Result<(Vec<f64>, Matrix)> {
    if !a.is_square() {
        return Err(Error::Shape(format!("eigen of {}x{} matrix", a.rows, a.cols)));
    }
    let n = a.rows;
    let mut m = a.symmetrized();
    let mut v = Matrix::identity(n);
    let total: f64 = m.data.iter().map(|x| x * x).sum::<f64>().sqrt();
    if total == 0.0 {
        return Ok((vec![0.0; n], v));
    }
    const MAX_SWEEPS: usize = 100;
    for _ in 0..MAX_SWEEPS {
        let mut off = 0.0;
        for i in 0..n {
            for j in 0..n {
                if i != j {
                    off += m.get(i, j).powi(2);
                }
            }
        }
        if off.sqrt() <= 1e-12 * total {
            return Ok((m.diag(), v));
        }
        for p in 0..n {
            for q in p + 1..n {
                let apq = m.get(p, q);
                if apq.abs() <= 1e-300 {
                    continue;
                }
                let app = m.get(p, p);
                let aqq = m.get(q, q);
                let theta = (aqq - app) / (2.0 * apq);
                let t = theta.signum() / (theta.abs() + (theta * theta + 1.0).sqrt());
                let t = if theta == 0.0 { 1.0 } else { t };
                let c = 1.0 / (t * t + 1.0).sqrt();
                let s = t * c;
                // Rotate rows/columns p and q.
                for k in 0..n {
                    let mkp = m.get(k, p);
                    let mkq = m.get(k, q);
                    m.set(k, p, c * mkp - s * mkq);
                    m.set(k, q, s * mkp + c * mkq);
                }
                for k in 0..n {
                    let mpk = m.get(p, k);
                    let mqk = m.get(q, k);
                    m.set(p, k, c * mpk - s * mqk);
                    m.set(q, k, s * mpk + c * mqk);
                }
                for k in 0..n {
                    let vkp = v.get(k, p);
                    let vkq = v.get(k, q);
                    v.set(k, p, c * vkp - s * vkq);
                    v.set(k, q, s * vkp + c * vkq);
                }
            }
        }
    }
    Err(Error::Numerical(format!(
        "Jacobi eigensolver did not converge on a {n}x{n} matrix in {MAX_SWEEPS} sweeps"
    )))
}

/// Principal square root of a symmetric PSD matrix. Negative eigenvalues from
/// round-off are clipped to zero; the largest clipped magnitude is returned.
pub fn sqrtm_psd(a: &Matrix) -> Result<(Matrix, f64)> {
    let (vals, vecs) = symmetric_eigen(a)?;
    let n = a.rows;
    let mut clipped: f64 = 0.0;
    let roots: Vec<f64> = vals
        .iter()
        .map(|&l| {
            if l < 0.0 {
                clipped = clipped.max(-l);
                0.0
            } else {
                l.sqrt()
            }
        })
        .collect();
    let out = Matrix::from_fn(n, n, |i, j| {
        (0..n).map(|k| vecs.get(i, k) * roots[k] * vecs.get(j, k)).sum()
    });
    Ok((out, clipped))
}
