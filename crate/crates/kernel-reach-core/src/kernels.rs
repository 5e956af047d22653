//! Positive-definite kernels, Gram matrices, and regularized SPD solves.

use ndarray::parallel::prelude::*;
use ndarray::prelude::*;
use ndarray_linalg::{CholeskyFactorized, FactorizeCInto, SolveC, UPLO};

use crate::error::{CoreError, Result};

/// Default bandwidth for Gaussian kernels.
pub const DEFAULT_SIGMA: f64 = 0.1;
/// Default regularization weight for embedding fits.
pub const DEFAULT_LAMBDA: f64 = 1.0;

/// A positive-definite kernel on fixed-dimension vectors.
pub trait Kernel: Send + Sync {
    /// Kernel value for a pair of points (lengths already validated).
    fn eval_unchecked(&self, a: &[f64], b: &[f64]) -> f64;
    /// Dimension the kernel expects, when it constrains one.
    fn dim(&self) -> Option<usize>;
}

/// Gaussian (squared-exponential) kernel `exp(-|a-b|^2 / (2 sigma^2))`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct GaussianKernel {
    sigma: f64,
}

impl GaussianKernel {
    pub fn new(sigma: f64) -> Result<Self> {
        if !(sigma.is_finite() && sigma > 0.0) {
            return Err(CoreError::Config(format!(
                "kernel bandwidth must be positive and finite, got {sigma}"
            )));
        }
        Ok(Self { sigma })
    }

    pub fn sigma(&self) -> f64 {
        self.sigma
    }
}

impl Kernel for GaussianKernel {
    fn eval_unchecked(&self, a: &[f64], b: &[f64]) -> f64 {
        let mut d2 = 0.0;
        for i in 0..a.len() {
            let d = a[i] - b[i];
            d2 += d * d;
        }
        (-0.5 * d2 / (self.sigma * self.sigma)).exp()
    }

    fn dim(&self) -> Option<usize> {
        None
    }
}

/// Product of Gaussian kernels acting on contiguous coordinate blocks, e.g.
/// a state block times an input block with distinct bandwidths.
#[derive(Clone, Debug, PartialEq)]
pub struct ProductKernel {
    blocks: Vec<(usize, GaussianKernel)>,
    dim: usize,
}

impl ProductKernel {
    /// Build from `(block_len, kernel)` factors applied in order.
    pub fn new(blocks: Vec<(usize, GaussianKernel)>) -> Result<Self> {
        if blocks.is_empty() {
            return Err(CoreError::Config("product kernel needs at least one block".into()));
        }
        if blocks.iter().any(|(len, _)| *len == 0) {
            return Err(CoreError::Config("product kernel blocks must be non-empty".into()));
        }
        let dim = blocks.iter().map(|(len, _)| len).sum();
        Ok(Self { blocks, dim })
    }

    /// Per-block `(length, bandwidth)` description.
    pub fn block_sigmas(&self) -> Vec<(usize, f64)> {
        self.blocks.iter().map(|(l, k)| (*l, k.sigma())).collect()
    }
}

impl Kernel for ProductKernel {
    fn eval_unchecked(&self, a: &[f64], b: &[f64]) -> f64 {
        let mut acc = 1.0;
        let mut off = 0;
        for (len, k) in &self.blocks {
            acc *= k.eval_unchecked(&a[off..off + len], &b[off..off + len]);
            off += len;
        }
        acc
    }

    fn dim(&self) -> Option<usize> {
        Some(self.dim)
    }
}

/// Gaussian kernel value `exp(-|x-y|^2 / (2 sigma^2))`.
pub fn eval(kernel: &GaussianKernel, x: &[f64], y: &[f64]) -> Result<f64> {
    if x.len() != y.len() {
        return Err(CoreError::Dimension(format!(
            "kernel arguments have lengths {} and {}",
            x.len(),
            y.len()
        )));
    }
    if x.is_empty() {
        return Err(CoreError::Config("kernel arguments must be non-empty".into()));
    }
    Ok(kernel.eval_unchecked(x, y))
}

/// Product kernel on state-input pairs: `k_X(x, x') * k_U(u, u')`.
pub fn joint_eval(
    kernel_x: &GaussianKernel,
    kernel_u: &GaussianKernel,
    x: &[f64],
    u: &[f64],
    x2: &[f64],
    u2: &[f64],
) -> Result<f64> {
    Ok(eval(kernel_x, x, x2)? * eval(kernel_u, u, u2)?)
}

/// Gram matrix `G[i, j] = k(rows_i, cols_j)`.
///
/// When `rows` and `cols` are the same view the matrix is symmetric; only
/// the lower triangle is evaluated and then mirrored. Row blocks are
/// computed in parallel with deterministic placement.
pub fn gram(kernel: &dyn Kernel, rows: ArrayView2<'_, f64>, cols: ArrayView2<'_, f64>) -> Result<Array2<f64>> {
    if rows.nrows() == 0 || cols.nrows() == 0 {
        return Err(CoreError::Config("gram matrix of an empty point set".into()));
    }
    if rows.ncols() != cols.ncols() {
        return Err(CoreError::Dimension(format!(
            "gram points have dimensions {} and {}",
            rows.ncols(),
            cols.ncols()
        )));
    }
    if let Some(d) = kernel.dim() {
        if d != rows.ncols() {
            return Err(CoreError::Dimension(format!(
                "kernel expects dimension {d} but points have {}",
                rows.ncols()
            )));
        }
    }
    let symmetric = rows.as_ptr() == cols.as_ptr() && rows.shape() == cols.shape();
    // Contiguous copies so row slices are available even for exotic input layouts.
    let r = to_contiguous(rows);
    let mut g = Array2::zeros((rows.nrows(), cols.nrows()));
    if symmetric {
        g.axis_iter_mut(Axis(0))
            .into_par_iter()
            .enumerate()
            .for_each(|(i, mut row)| {
                let a = r.row(i);
                let a = a.as_slice().expect("contiguous row");
                for j in 0..=i {
                    let b = r.row(j);
                    row[j] = kernel.eval_unchecked(a, b.as_slice().expect("contiguous row"));
                }
            });
        for i in 0..g.nrows() {
            for j in (i + 1)..g.ncols() {
                g[[i, j]] = g[[j, i]];
            }
        }
    } else {
        let c = to_contiguous(cols);
        g.axis_iter_mut(Axis(0))
            .into_par_iter()
            .enumerate()
            .for_each(|(i, mut row)| {
                let a = r.row(i);
                let a = a.as_slice().expect("contiguous row");
                for j in 0..c.nrows() {
                    let b = c.row(j);
                    row[j] = kernel.eval_unchecked(a, b.as_slice().expect("contiguous row"));
                }
            });
    }
    Ok(g)
}

fn to_contiguous(a: ArrayView2<'_, f64>) -> Array2<f64> {
    if a.is_standard_layout() {
        a.to_owned()
    } else {
        a.as_standard_layout().to_owned()
    }
}

/// Symmetric Gram matrix of one point set.
pub fn gram_symmetric(kernel: &dyn Kernel, points: ArrayView2<'_, f64>) -> Result<Array2<f64>> {
    gram(kernel, points, points)
}

/// Median pairwise distance over a deterministic subsample of at most 1024
/// points; a common bandwidth heuristic. Requires at least two points and a
/// nonzero median.
pub fn median_heuristic(points: ArrayView2<'_, f64>) -> Result<f64> {
    let m = points.nrows();
    if m < 2 {
        return Err(CoreError::Config(
            "median heuristic needs at least two points".into(),
        ));
    }
    let stride = m.div_ceil(1024);
    let idx: Vec<usize> = (0..m).step_by(stride).collect();
    let mut dists = Vec::with_capacity(idx.len() * (idx.len() - 1) / 2);
    for (a, &i) in idx.iter().enumerate() {
        for &j in idx.iter().skip(a + 1) {
            let mut d2 = 0.0;
            for c in 0..points.ncols() {
                let d = points[[i, c]] - points[[j, c]];
                d2 += d * d;
            }
            dists.push(d2.sqrt());
        }
    }
    let mid = dists.len() / 2;
    let (_, med, _) = dists.select_nth_unstable_by(mid, |a, b| a.total_cmp(b));
    let med = *med;
    if med <= 0.0 {
        return Err(CoreError::Numerical(
            "median pairwise distance is zero; points are degenerate".into(),
        ));
    }
    Ok(med)
}

pub(crate) type CholFactor = CholeskyFactorized<ndarray::OwnedRepr<f64>>;

/// Factor `build() + ridge * I` by Cholesky, retrying once with a small
/// diagonal jitter (`1e-10 * trace / m`) if the first attempt fails. The
/// builder is called again for the retry so only one matrix is resident.
pub(crate) fn factor_spd_with_retry(
    build: &dyn Fn() -> Result<Array2<f64>>,
    ridge: f64,
    m: usize,
) -> Result<(CholFactor, f64)> {
    let mut a = build()?;
    let trace: f64 = a.diag().sum();
    a.diag_mut().mapv_inplace(|v| v + ridge);
    match a.factorizec_into(UPLO::Lower) {
        Ok(f) => Ok((f, 0.0)),
        Err(_) => {
            let jitter = 1e-10 * trace / m as f64;
            let mut a = build()?;
            a.diag_mut().mapv_inplace(|v| v + ridge + jitter);
            match a.factorizec_into(UPLO::Lower) {
                Ok(f) => Ok((f, jitter)),
                Err(e) => Err(CoreError::Numerical(format!(
                    "SPD factorization failed even after diagonal jitter {jitter:.3e}: {e}"
                ))),
            }
        }
    }
}

pub(crate) fn chol_solve_vec(factor: &CholFactor, b: ArrayView1<'_, f64>) -> Result<Array1<f64>> {
    factor
        .solvec(&b)
        .map_err(|e| CoreError::Numerical(format!("triangular solve failed: {e}")))
}

/// Solve for every column of `b`; returns a matrix of the same shape.
pub(crate) fn chol_solve_mat(factor: &CholFactor, b: ArrayView2<'_, f64>) -> Result<Array2<f64>> {
    let mut out = Array2::zeros(b.raw_dim());
    for (j, col) in b.axis_iter(Axis(1)).enumerate() {
        let sol = chol_solve_vec(factor, col)?;
        out.column_mut(j).assign(&sol);
    }
    Ok(out)
}

/// Solve `(G + lambda * m * I) X = rhs` for a symmetric positive
/// semi-definite `G`, returning one solution column per right-hand side.
///
/// `m` is the sample count the regularization is scaled by; it need not
/// equal the matrix size. Cholesky is attempted first and retried once with
/// a diagonal jitter of `1e-10 * trace(G) / m` if the factorization fails.
pub fn regularized_spd_solve(
    g: &Array2<f64>,
    lambda: f64,
    m: usize,
    rhs: &Array2<f64>,
) -> Result<Array2<f64>> {
    let d = g.nrows();
    if g.ncols() != d {
        return Err(CoreError::Dimension(format!(
            "matrix is {}x{}, expected square",
            g.nrows(),
            g.ncols()
        )));
    }
    if rhs.nrows() != d {
        return Err(CoreError::Dimension(format!(
            "right-hand side has {} rows but matrix has {}",
            rhs.nrows(),
            d
        )));
    }
    if !(lambda.is_finite() && lambda > 0.0) {
        return Err(CoreError::Config(format!(
            "regularization weight must be positive and finite, got {lambda}"
        )));
    }
    if m == 0 {
        return Err(CoreError::Config("sample count must be positive".into()));
    }
    // Symmetry sanity check (cheap relative to the factorization).
    let scale = g.iter().fold(0.0f64, |acc, v| acc.max(v.abs()));
    for i in 0..d {
        for j in (i + 1)..d {
            if (g[[i, j]] - g[[j, i]]).abs() > 1e-10 * (1.0 + scale) {
                return Err(CoreError::Config(format!(
                    "matrix is not symmetric at ({i}, {j})"
                )));
            }
        }
    }
    let ridge = lambda * m as f64;
    let (factor, _) = factor_spd_with_retry(&|| Ok(g.clone()), ridge, m)?;
    chol_solve_mat(&factor, rhs.view())
}
