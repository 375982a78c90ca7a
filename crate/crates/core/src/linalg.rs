//! Dense real linear algebra: the matrix carrier, one-sided Jacobi SVD,
//! spectral norms and the mean-removal projector onto the detail subspace.

use std::fmt;

use crate::error::{Error, Result};

/// Real matrix stored row-major. All entries are finite.
#[derive(Clone, PartialEq)]
pub struct DenseMatrix {
    rows: usize,
    cols: usize,
    data: Vec<f64>,
}

impl fmt::Debug for DenseMatrix {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        writeln!(f, "DenseMatrix {}x{} [", self.rows, self.cols)?;
        for r in 0..self.rows {
            writeln!(f, "  {:?}", self.row(r))?;
        }
        write!(f, "]")
    }
}

impl DenseMatrix {
    pub fn from_row_major(rows: usize, cols: usize, data: Vec<f64>) -> Result<Self> {
        if rows == 0 || cols == 0 {
            return Err(Error::InvalidDimension {
                n: rows.min(cols),
                reason: "matrix dimensions must be positive",
            });
        }
        if data.len() != rows * cols {
            return Err(Error::DimensionMismatch {
                expected: rows * cols,
                found: data.len(),
            });
        }
        if data.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite);
        }
        Ok(DenseMatrix { rows, cols, data })
    }

    pub fn from_rows(rows: &[Vec<f64>]) -> Result<Self> {
        let n_rows = rows.len();
        let n_cols = rows.first().map_or(0, Vec::len);
        if rows.iter().any(|r| r.len() != n_cols) {
            return Err(Error::DimensionMismatch {
                expected: n_cols,
                found: rows.iter().map(Vec::len).find(|&l| l != n_cols).unwrap_or(0),
            });
        }
        Self::from_row_major(n_rows, n_cols, rows.concat())
    }

    pub fn zeros(rows: usize, cols: usize) -> Self {
        assert!(rows > 0 && cols > 0);
        DenseMatrix { rows, cols, data: vec![0.0; rows * cols] }
    }

    pub fn identity(n: usize) -> Self {
        let mut m = Self::zeros(n, n);
        for i in 0..n {
            m.data[i * n + i] = 1.0;
        }
        m
    }

    pub fn diagonal(values: &[f64]) -> Self {
        let n = values.len();
        let mut m = Self::zeros(n, n);
        for (i, &v) in values.iter().enumerate() {
            m.data[i * n + i] = v;
        }
        m
    }

    /// The rank-one averaging matrix `(1/n) 1 1ᵀ`.
    pub fn uniform(n: usize) -> Self {
        DenseMatrix { rows: n, cols: n, data: vec![1.0 / n as f64; n * n] }
    }

    /// Permutation matrix with `P[i][perm[i]] = 1`.
    pub fn permutation(perm: &[usize]) -> Self {
        let n = perm.len();
        let mut m = Self::zeros(n, n);
        for (i, &j) in perm.iter().enumerate() {
            assert!(j < n, "permutation index out of range");
            m.data[i * n + j] = 1.0;
        }
        m
    }

    /// Detail-subspace projector `I - (1/n) 1 1ᵀ`.
    pub fn detail_projector(n: usize) -> Self {
        let mut m = Self::identity(n);
        let c = 1.0 / n as f64;
        m.data.iter_mut().for_each(|v| *v -= c);
        m
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn is_square(&self) -> bool {
        self.rows == self.cols
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.data
    }

    pub fn into_vec(self) -> Vec<f64> {
        self.data
    }

    pub fn get(&self, r: usize, c: usize) -> f64 {
        self.data[r * self.cols + c]
    }

    pub fn set(&mut self, r: usize, c: usize, v: f64) {
        self.data[r * self.cols + c] = v;
    }

    pub fn row(&self, r: usize) -> &[f64] {
        &self.data[r * self.cols..(r + 1) * self.cols]
    }

    pub fn row_mut(&mut self, r: usize) -> &mut [f64] {
        &mut self.data[r * self.cols..(r + 1) * self.cols]
    }

    pub fn row_sums(&self) -> Vec<f64> {
        (0..self.rows).map(|r| self.row(r).iter().sum()).collect()
    }

    pub fn col_sums(&self) -> Vec<f64> {
        let mut sums = vec![0.0; self.cols];
        for r in 0..self.rows {
            for (s, v) in sums.iter_mut().zip(self.row(r)) {
                *s += v;
            }
        }
        sums
    }

    pub fn transpose(&self) -> Self {
        let mut t = Self::zeros(self.cols, self.rows);
        for r in 0..self.rows {
            for c in 0..self.cols {
                t.data[c * self.rows + r] = self.data[r * self.cols + c];
            }
        }
        t
    }

    pub fn scale(&self, factor: f64) -> Self {
        DenseMatrix {
            rows: self.rows,
            cols: self.cols,
            data: self.data.iter().map(|v| v * factor).collect(),
        }
    }

    pub fn add(&self, other: &DenseMatrix) -> Result<Self> {
        self.check_same_shape(other)?;
        Ok(DenseMatrix {
            rows: self.rows,
            cols: self.cols,
            data: self.data.iter().zip(&other.data).map(|(a, b)| a + b).collect(),
        })
    }

    pub fn sub(&self, other: &DenseMatrix) -> Result<Self> {
        self.check_same_shape(other)?;
        Ok(DenseMatrix {
            rows: self.rows,
            cols: self.cols,
            data: self.data.iter().zip(&other.data).map(|(a, b)| a - b).collect(),
        })
    }

    fn check_same_shape(&self, other: &DenseMatrix) -> Result<()> {
        if self.rows != other.rows || self.cols != other.cols {
            return Err(Error::DimensionMismatch {
                expected: self.rows * self.cols,
                found: other.rows * other.cols,
            });
        }
        Ok(())
    }

    pub fn matmul(&self, other: &DenseMatrix) -> Result<Self> {
        if self.cols != other.rows {
            return Err(Error::DimensionMismatch { expected: self.cols, found: other.rows });
        }
        let mut out = Self::zeros(self.rows, other.cols);
        for i in 0..self.rows {
            let out_row = &mut out.data[i * other.cols..(i + 1) * other.cols];
            for (k, &a) in self.row(i).iter().enumerate() {
                if a == 0.0 {
                    continue;
                }
                for (o, b) in out_row.iter_mut().zip(other.row(k)) {
                    *o += a * b;
                }
            }
        }
        Ok(out)
    }

    pub fn matvec(&self, x: &[f64]) -> Result<Vec<f64>> {
        if x.len() != self.cols {
            return Err(Error::DimensionMismatch { expected: self.cols, found: x.len() });
        }
        Ok((0..self.rows).map(|r| dot(self.row(r), x)).collect())
    }

    /// `P⊥ A P⊥` for a square matrix: removes row and column means.
    pub fn restrict_to_detail(&self) -> Result<Self> {
        if !self.is_square() {
            return Err(Error::NotSquare { rows: self.rows, cols: self.cols });
        }
        let n = self.rows;
        let row_means: Vec<f64> = self.row_sums().iter().map(|s| s / n as f64).collect();
        let col_means: Vec<f64> = self.col_sums().iter().map(|s| s / n as f64).collect();
        let grand = row_means.iter().sum::<f64>() / n as f64;
        let mut out = self.clone();
        for r in 0..n {
            for c in 0..n {
                out.data[r * n + c] += grand - row_means[r] - col_means[c];
            }
        }
        Ok(out)
    }

    pub fn max_abs(&self) -> f64 {
        self.data.iter().fold(0.0, |m, v| m.max(v.abs()))
    }
}

pub fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

pub fn norm2(x: &[f64]) -> f64 {
    dot(x, x).sqrt()
}

pub fn mean(x: &[f64]) -> f64 {
    x.iter().sum::<f64>() / x.len() as f64
}

/// `P⊥ x`: subtracts the coordinate mean.
pub fn project_detail(x: &[f64]) -> Vec<f64> {
    assert!(!x.is_empty(), "project_detail needs a non-empty vector");
    let m = mean(x);
    x.iter().map(|v| v - m).collect()
}

/// Applies `m` to `x` `k` times without forming the power.
pub fn matrix_power_apply(m: &DenseMatrix, x: &[f64], k: usize) -> Result<Vec<f64>> {
    if !m.is_square() {
        return Err(Error::NotSquare { rows: m.rows, cols: m.cols });
    }
    if x.len() != m.cols {
        return Err(Error::DimensionMismatch { expected: m.cols, found: x.len() });
    }
    let mut v = x.to_vec();
    for _ in 0..k {
        v = m.matvec(&v)?;
    }
    Ok(v)
}

#[derive(Clone, Debug)]
pub struct SvdResult {
    pub singular_values: Vec<f64>,
    /// Left singular vectors as columns of an `rows x rank` matrix.
    pub left_vectors: Option<DenseMatrix>,
    /// Right singular vectors as columns of a `cols x rank` matrix.
    pub right_vectors: Option<DenseMatrix>,
}

impl SvdResult {
    pub fn sigma(&self, i: usize) -> f64 {
        self.singular_values.get(i).copied().unwrap_or(0.0)
    }
}

const JACOBI_TOL: f64 = 1e-12;
const JACOBI_MAX_SWEEPS: usize = 80;

/// Singular value decomposition by cyclic one-sided Jacobi rotations.
///
/// Wide matrices are handled through their transpose. With `want_vectors`
/// the returned `U` and `V` have `min(rows, cols)` orthonormal columns;
/// columns for zero singular values are completed to an orthonormal set.
pub fn svd(m: &DenseMatrix, want_vectors: bool) -> Result<SvdResult> {
    if m.data.iter().any(|v| !v.is_finite()) {
        return Err(Error::NonFinite);
    }
    if m.rows < m.cols {
        let t = svd(&m.transpose(), want_vectors)?;
        return Ok(SvdResult {
            singular_values: t.singular_values,
            left_vectors: t.right_vectors,
            right_vectors: t.left_vectors,
        });
    }
    let rows = m.rows;
    let cols = m.cols;

    // Column-major working copy: column j lives in a[j*rows..(j+1)*rows].
    let mut a = vec![0.0; rows * cols];
    for r in 0..rows {
        for c in 0..cols {
            a[c * rows + r] = m.data[r * cols + c];
        }
    }
    let mut v = if want_vectors {
        let mut v = vec![0.0; cols * cols];
        for j in 0..cols {
            v[j * cols + j] = 1.0;
        }
        Some(v)
    } else {
        None
    };

    let mut sq_norms = vec![0.0; cols];
    for _sweep in 0..JACOBI_MAX_SWEEPS {
        // Squared column norms are refreshed every sweep and updated in
        // closed form after each rotation.
        for (j, s) in sq_norms.iter_mut().enumerate() {
            let c = &a[j * rows..(j + 1) * rows];
            *s = dot(c, c);
        }
        let mut rotated = false;
        for p in 0..cols.saturating_sub(1) {
            for q in (p + 1)..cols {
                let alpha = sq_norms[p];
                let beta = sq_norms[q];
                let gamma = dot(&a[p * rows..(p + 1) * rows], &a[q * rows..(q + 1) * rows]);
                if gamma == 0.0 || gamma.abs() <= JACOBI_TOL * (alpha * beta).sqrt() {
                    continue;
                }
                rotated = true;
                let zeta = (beta - alpha) / (2.0 * gamma);
                let t = zeta.signum() / (zeta.abs() + (1.0 + zeta * zeta).sqrt());
                let c = 1.0 / (1.0 + t * t).sqrt();
                let s = c * t;
                rotate_columns(&mut a, rows, p, q, c, s);
                if let Some(v) = v.as_mut() {
                    rotate_columns(v, cols, p, q, c, s);
                }
                sq_norms[p] = (alpha - t * gamma).max(0.0);
                sq_norms[q] = beta + t * gamma;
            }
        }
        if !rotated {
            break;
        }
    }

    let norms: Vec<f64> = (0..cols).map(|j| norm2(&a[j * rows..(j + 1) * rows])).collect();
    let mut order: Vec<usize> = (0..cols).collect();
    // Stable: ties keep computation order.
    order.sort_by(|&i, &j| norms[j].total_cmp(&norms[i]));
    let singular_values: Vec<f64> = order.iter().map(|&j| norms[j]).collect();

    let (left_vectors, right_vectors) = match v {
        None => (None, None),
        Some(v) => {
            let mut u_cols: Vec<Option<Vec<f64>>> = Vec::with_capacity(cols);
            let sigma_max = singular_values.first().copied().unwrap_or(0.0);
            let floor = sigma_max * f64::EPSILON * rows as f64;
            for &j in &order {
                let col = &a[j * rows..(j + 1) * rows];
                if norms[j] > floor && norms[j] > 0.0 {
                    u_cols.push(Some(col.iter().map(|x| x / norms[j]).collect()));
                } else {
                    u_cols.push(None);
                }
            }
            let u_cols = complete_orthonormal(u_cols, rows);
            let mut u = DenseMatrix::zeros(rows, cols);
            for (k, col) in u_cols.iter().enumerate() {
                for r in 0..rows {
                    u.data[r * cols + k] = col[r];
                }
            }
            let mut vm = DenseMatrix::zeros(cols, cols);
            for (k, &j) in order.iter().enumerate() {
                for r in 0..cols {
                    vm.data[r * cols + k] = v[j * cols + r];
                }
            }
            (Some(u), Some(vm))
        }
    };

    Ok(SvdResult { singular_values, left_vectors, right_vectors })
}

fn rotate_columns(buf: &mut [f64], len: usize, p: usize, q: usize, c: f64, s: f64) {
    let (head, tail) = buf.split_at_mut(q * len);
    let cp = &mut head[p * len..(p + 1) * len];
    let cq = &mut tail[..len];
    for (x, y) in cp.iter_mut().zip(cq.iter_mut()) {
        let xp = *x;
        let yq = *y;
        *x = c * xp - s * yq;
        *y = s * xp + c * yq;
    }
}

/// Fills the `None` slots with unit vectors orthogonal to every other
/// column, drawn from the standard basis by Gram–Schmidt.
fn complete_orthonormal(mut cols: Vec<Option<Vec<f64>>>, dim: usize) -> Vec<Vec<f64>> {
    let mut basis_idx = 0;
    for k in 0..cols.len() {
        if cols[k].is_some() {
            continue;
        }
        loop {
            assert!(basis_idx < dim, "ran out of basis vectors while completing U");
            let mut e = vec![0.0; dim];
            e[basis_idx] = 1.0;
            basis_idx += 1;
            // Two passes of Gram–Schmidt for numerical orthogonality.
            for _ in 0..2 {
                for other in cols.iter().flatten() {
                    let d = dot(&e, other);
                    for (x, o) in e.iter_mut().zip(other) {
                        *x -= d * o;
                    }
                }
            }
            let nrm = norm2(&e);
            if nrm > 1e-8 {
                e.iter_mut().for_each(|x| *x /= nrm);
                cols[k] = Some(e);
                break;
            }
        }
    }
    cols.into_iter().map(|c| c.expect("completed")).collect()
}

/// Largest singular value `σ₁(m)`.
pub fn spectral_norm(m: &DenseMatrix) -> Result<f64> {
    Ok(svd(m, false)?.sigma(0))
}
