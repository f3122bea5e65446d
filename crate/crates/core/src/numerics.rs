//! Dense linear algebra, least squares, Adam and finite differences.
//!
//! Everything is `f64` and single-threaded so results are bit-reproducible.

use nalgebra::{DMatrix, DVector};

use crate::error::{invalid, Error, Result};

/// Gram matrices with an estimated condition number above this are solved
/// through the SVD instead of the Cholesky factor.
pub const GRAM_CONDITION_LIMIT: f64 = 1e12;

/// Dense row-major matrix with finite entries.
#[derive(Debug, Clone, PartialEq)]
pub struct RealMatrix {
    rows: usize,
    cols: usize,
    data: Vec<f64>,
}

impl RealMatrix {
    pub fn new(rows: usize, cols: usize, data: Vec<f64>) -> Result<Self> {
        if rows * cols != data.len() {
            return Err(invalid(format!(
                "matrix {rows}x{cols} needs {} values, got {}",
                rows * cols,
                data.len()
            )));
        }
        if let Some(pos) = data.iter().position(|v| !v.is_finite()) {
            return Err(Error::Numeric(format!(
                "non-finite matrix entry at row {}, col {}",
                pos / cols.max(1),
                pos % cols.max(1)
            )));
        }
        Ok(Self { rows, cols, data })
    }

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

    /// Builds a matrix from equally long rows.
    pub fn from_rows<R: AsRef<[f64]>>(rows: &[R]) -> Result<Self> {
        let cols = rows.first().map_or(0, |r| r.as_ref().len());
        let mut data = Vec::with_capacity(rows.len() * cols);
        for (i, r) in rows.iter().enumerate() {
            let r = r.as_ref();
            if r.len() != cols {
                return Err(invalid(format!("row {i} has {} columns, expected {cols}", r.len())));
            }
            data.extend_from_slice(r);
        }
        Self::new(rows.len(), cols, data)
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
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

    pub fn row(&self, r: usize) -> &[f64] {
        &self.data[r * self.cols..(r + 1) * self.cols]
    }

    pub fn row_iter(&self) -> impl Iterator<Item = &[f64]> + '_ {
        (0..self.rows).map(move |r| self.row(r))
    }

    pub fn transpose(&self) -> Self {
        let mut data = vec![0.0; self.data.len()];
        for r in 0..self.rows {
            for c in 0..self.cols {
                data[c * self.rows + r] = self.data[r * self.cols + c];
            }
        }
        Self {
            rows: self.cols,
            cols: self.rows,
            data,
        }
    }

    /// `self · x`.
    pub fn mul_vec(&self, x: &[f64]) -> Result<Vec<f64>> {
        if x.len() != self.cols {
            return Err(invalid(format!(
                "vector of length {} does not match {} columns",
                x.len(),
                self.cols
            )));
        }
        Ok(self.row_iter().map(|row| dot(row, x)).collect())
    }

    /// `self · other`.
    pub fn matmul(&self, other: &RealMatrix) -> Result<RealMatrix> {
        if self.cols != other.rows {
            return Err(invalid(format!(
                "cannot multiply {}x{} by {}x{}",
                self.rows, self.cols, other.rows, other.cols
            )));
        }
        let mut out = vec![0.0; self.rows * other.cols];
        for i in 0..self.rows {
            let out_row = &mut out[i * other.cols..(i + 1) * other.cols];
            for k in 0..self.cols {
                let aik = self.data[i * self.cols + k];
                for (o, b) in out_row.iter_mut().zip(other.row(k)) {
                    *o += aik * b;
                }
            }
        }
        RealMatrix::new(self.rows, other.cols, out)
    }

    /// Selects rows by index, in the given order.
    pub fn select_rows(&self, indices: &[usize]) -> RealMatrix {
        let mut data = Vec::with_capacity(indices.len() * self.cols);
        for &i in indices {
            data.extend_from_slice(self.row(i));
        }
        RealMatrix {
            rows: indices.len(),
            cols: self.cols,
            data,
        }
    }

    /// Largest absolute entry of `self - other`.
    pub fn max_abs_diff(&self, other: &RealMatrix) -> f64 {
        self.data
            .iter()
            .zip(&other.data)
            .map(|(a, b)| (a - b).abs())
            .fold(0.0, f64::max)
    }

    pub(crate) fn to_nalgebra(&self) -> DMatrix<f64> {
        DMatrix::from_row_slice(self.rows, self.cols, &self.data)
    }

    pub(crate) fn from_nalgebra(m: &DMatrix<f64>) -> Result<Self> {
        let mut data = Vec::with_capacity(m.nrows() * m.ncols());
        for r in 0..m.nrows() {
            for c in 0..m.ncols() {
                data.push(m[(r, c)]);
            }
        }
        Self::new(m.nrows(), m.ncols(), data)
    }
}

pub fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

pub fn norm(a: &[f64]) -> f64 {
    dot(a, a).sqrt()
}

pub fn squared_distance(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum()
}

/// Outcome of a least-squares solve.
#[derive(Debug, Clone, PartialEq)]
pub struct LeastSquares {
    pub solution: Vec<f64>,
    /// Numerical rank of the design matrix.
    pub rank: usize,
    /// True when the SVD path was taken.
    pub used_svd: bool,
}

/// Minimum-norm least-squares solution of `a · x ≈ b`.
pub fn least_squares_solve(a: &RealMatrix, b: &[f64]) -> Result<Vec<f64>> {
    least_squares(a, b).map(|ls| ls.solution)
}

/// Normal equations through a Cholesky factor, with an SVD fallback when the
/// Gram matrix is not numerically positive definite or its estimated condition
/// number exceeds [`GRAM_CONDITION_LIMIT`].
pub fn least_squares(a: &RealMatrix, b: &[f64]) -> Result<LeastSquares> {
    let (m, n) = (a.rows(), a.cols());
    if m == 0 || n == 0 {
        return Err(invalid("least squares needs a non-empty matrix"));
    }
    if b.len() != m {
        return Err(invalid(format!(
            "right-hand side has length {}, matrix has {m} rows",
            b.len()
        )));
    }
    if b.iter().any(|v| !v.is_finite()) {
        return Err(Error::Numeric("non-finite right-hand side".into()));
    }

    let mut gram = vec![0.0; n * n];
    let mut rhs = vec![0.0; n];
    for (row, &bk) in a.row_iter().zip(b) {
        for i in 0..n {
            let ri = row[i];
            rhs[i] += ri * bk;
            for j in 0..=i {
                gram[i * n + j] += ri * row[j];
            }
        }
    }
    for i in 0..n {
        for j in 0..i {
            gram[j * n + i] = gram[i * n + j];
        }
    }

    if let Some(chol) = cholesky(&gram, n) {
        let diag: Vec<f64> = (0..n).map(|i| chol[i * n + i]).collect();
        let max = diag.iter().cloned().fold(0.0, f64::max);
        let min = diag.iter().cloned().fold(f64::INFINITY, f64::min);
        let cond = (max / min).powi(2);
        if cond.is_finite() && cond <= GRAM_CONDITION_LIMIT {
            let solution = cholesky_solve(&chol, n, &rhs);
            return Ok(LeastSquares {
                solution,
                rank: n,
                used_svd: false,
            });
        }
    }
    svd_least_squares(a, b)
}

fn svd_least_squares(a: &RealMatrix, b: &[f64]) -> Result<LeastSquares> {
    let (m, n) = (a.rows(), a.cols());
    let svd = a.to_nalgebra().svd(true, true);
    let sigma_max = svd.singular_values.iter().cloned().fold(0.0, f64::max);
    let tol = (m.max(n) as f64) * f64::EPSILON * sigma_max;
    let rank = svd.singular_values.iter().filter(|&&s| s > tol).count();
    let solution = svd
        .solve(&DVector::from_column_slice(b), tol)
        .map_err(|e| Error::Numeric(format!("svd solve failed: {e}")))?;
    let solution: Vec<f64> = solution.iter().copied().collect();
    if solution.iter().any(|v| !v.is_finite()) {
        return Err(Error::Numeric("least-squares solution is not finite".into()));
    }
    Ok(LeastSquares {
        solution,
        rank,
        used_svd: true,
    })
}

/// Lower-triangular Cholesky factor of a symmetric `n x n` matrix, or `None`
/// when a pivot is not strictly positive.
fn cholesky(a: &[f64], n: usize) -> Option<Vec<f64>> {
    let mut l = vec![0.0; n * n];
    for j in 0..n {
        let mut d = a[j * n + j];
        for k in 0..j {
            d -= l[j * n + k] * l[j * n + k];
        }
        if d <= 0.0 || !d.is_finite() {
            return None;
        }
        let d = d.sqrt();
        l[j * n + j] = d;
        for i in j + 1..n {
            let mut s = a[i * n + j];
            for k in 0..j {
                s -= l[i * n + k] * l[j * n + k];
            }
            l[i * n + j] = s / d;
        }
    }
    Some(l)
}

fn cholesky_solve(l: &[f64], n: usize, b: &[f64]) -> Vec<f64> {
    let mut y = vec![0.0; n];
    for i in 0..n {
        let mut s = b[i];
        for k in 0..i {
            s -= l[i * n + k] * y[k];
        }
        y[i] = s / l[i * n + i];
    }
    let mut x = vec![0.0; n];
    for i in (0..n).rev() {
        let mut s = y[i];
        for k in i + 1..n {
            s -= l[k * n + i] * x[k];
        }
        x[i] = s / l[i * n + i];
    }
    x
}

/// Adam hyperparameters.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AdamParams {
    pub learning_rate: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub epsilon: f64,
}

impl Default for AdamParams {
    fn default() -> Self {
        Self {
            learning_rate: 0.01,
            beta1: 0.9,
            beta2: 0.999,
            epsilon: 1e-8,
        }
    }
}

impl AdamParams {
    pub fn with_learning_rate(mut self, learning_rate: f64) -> Self {
        self.learning_rate = learning_rate;
        self
    }

    pub fn validate(&self) -> Result<()> {
        let unit = |v: f64| v > 0.0 && v < 1.0;
        if !(self.learning_rate > 0.0 && self.learning_rate.is_finite()) {
            return Err(invalid("adam learning rate must be positive"));
        }
        if !unit(self.beta1) || !unit(self.beta2) {
            return Err(invalid("adam betas must lie in (0, 1)"));
        }
        if self.epsilon.is_nan() || self.epsilon <= 0.0 {
            return Err(invalid("adam epsilon must be positive"));
        }
        Ok(())
    }
}

/// Moment estimates of a bias-corrected Adam optimizer.
#[derive(Debug, Clone, PartialEq)]
pub struct AdamState {
    pub first_moment: Vec<f64>,
    pub second_moment: Vec<f64>,
    pub step_count: u64,
    pub params: AdamParams,
}

impl AdamState {
    pub fn new(len: usize, params: AdamParams) -> Self {
        Self {
            first_moment: vec![0.0; len],
            second_moment: vec![0.0; len],
            step_count: 0,
            params,
        }
    }

    /// Pure form of [`AdamState::step_in_place`].
    pub fn step(&self, gradient: &[f64], variable: &[f64]) -> Result<(AdamState, Vec<f64>)> {
        let mut state = self.clone();
        let mut x = variable.to_vec();
        state.step_in_place(gradient, &mut x)?;
        Ok((state, x))
    }

    /// One Adam update of `variable`. Leaves both untouched on error.
    pub fn step_in_place(&mut self, gradient: &[f64], variable: &mut [f64]) -> Result<()> {
        let n = self.first_moment.len();
        if gradient.len() != n || variable.len() != n {
            return Err(invalid(format!(
                "adam state has length {n}, gradient {} and variable {}",
                gradient.len(),
                variable.len()
            )));
        }
        if gradient.iter().any(|g| !g.is_finite()) {
            return Err(Error::Numeric("non-finite gradient".into()));
        }
        let AdamParams {
            learning_rate,
            beta1,
            beta2,
            epsilon,
        } = self.params;
        self.step_count += 1;
        let t = self.step_count as i32;
        let bias1 = 1.0 - beta1.powi(t);
        let bias2 = 1.0 - beta2.powi(t);
        for i in 0..n {
            let g = gradient[i];
            let m = beta1 * self.first_moment[i] + (1.0 - beta1) * g;
            let v = beta2 * self.second_moment[i] + (1.0 - beta2) * g * g;
            self.first_moment[i] = m;
            self.second_moment[i] = v;
            let m_hat = m / bias1;
            let v_hat = v / bias2;
            variable[i] -= learning_rate * m_hat / (v_hat.sqrt() + epsilon);
        }
        Ok(())
    }
}

/// Central-difference gradient of `f` at `x`.
pub fn finite_diff_gradient<F>(f: F, x: &[f64], h: f64) -> Vec<f64>
where
    F: Fn(&[f64]) -> f64,
{
    let mut probe = x.to_vec();
    (0..x.len())
        .map(|i| {
            probe[i] = x[i] + h;
            let up = f(&probe);
            probe[i] = x[i] - h;
            let down = f(&probe);
            probe[i] = x[i];
            (up - down) / (2.0 * h)
        })
        .collect()
}
