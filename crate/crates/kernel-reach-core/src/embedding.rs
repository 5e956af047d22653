//! Conditional-distribution-embedding estimators.
//!
//! Given transitions `(x_i, u_i, y_i)`, the fitted embedding turns any
//! function values `f = [f(y_1) .. f(y_M)]` into an estimate of the
//! conditional expectation `E[f(y) | x, u] ~= f' c(x, u)`, where the
//! coefficient vector `c` is `beta` on the exact Gram path and `gamma` on
//! the random-feature path.
//!
//! Regularization convention: both paths solve a ridge system whose
//! effective weight on the (normalized) Gram matrix is `lambda`, so the two
//! paths estimate the same object and the feature path converges to the
//! exact path as the feature count grows. Concretely the exact path factors
//! `G + lambda * I` (`G` the M x M kernel matrix) and the feature path
//! factors `H + lambda * D_j * I` (`H = Z' Z` the unscaled D_j x D_j feature
//! Gram, whose inner products carry an implicit factor `D_j`).

use std::sync::OnceLock;

use ndarray::prelude::*;

use crate::error::{CoreError, Result};
use crate::kernels::{
    chol_solve_mat, chol_solve_vec, factor_spd_with_retry, gram, CholFactor, GaussianKernel,
    ProductKernel,
};
use crate::rff::JointFeatures;
use crate::sample::TransitionSample;

/// Regularization schedule `lambda(M) = M^(-1/2)` matching the decay rate
/// under which the estimator's consistency guarantees are stated.
pub fn theoretical_lambda_schedule(m: usize) -> f64 {
    (m as f64).powf(-0.5)
}

/// Exact-kernel embedding: coefficients come from an M x M regularized
/// Gram solve.
pub struct ExactEmbedding {
    sample: TransitionSample,
    kernel: ProductKernel,
    lambda: f64,
    pairs: Array2<f64>,
    factor: CholFactor,
    jitter: f64,
}

/// Fit the exact embedding with separate state and input bandwidths.
pub fn fit_exact(
    sample: &TransitionSample,
    kernel_x: &GaussianKernel,
    kernel_u: &GaussianKernel,
    lambda: f64,
) -> Result<ExactEmbedding> {
    fit_exact_blocks(
        sample,
        &[
            (sample.state_dim(), kernel_x.sigma()),
            (sample.input_dim(), kernel_u.sigma()),
        ],
        lambda,
    )
}

/// Fit the exact embedding with a product kernel over arbitrary contiguous
/// `(block length, bandwidth)` factors spanning the `(x, u)` pair.
pub fn fit_exact_blocks(
    sample: &TransitionSample,
    blocks: &[(usize, f64)],
    lambda: f64,
) -> Result<ExactEmbedding> {
    if !(lambda.is_finite() && lambda > 0.0) {
        return Err(CoreError::Config(format!(
            "regularization weight must be positive and finite, got {lambda}"
        )));
    }
    let pair_dim = sample.state_dim() + sample.input_dim();
    let total: usize = blocks.iter().map(|(l, _)| l).sum();
    if total != pair_dim {
        return Err(CoreError::Dimension(format!(
            "kernel blocks cover {total} coordinates but pairs have {pair_dim}"
        )));
    }
    let mut ks = Vec::with_capacity(blocks.len());
    for (len, sigma) in blocks {
        ks.push((*len, GaussianKernel::new(*sigma)?));
    }
    let kernel = ProductKernel::new(ks)?;
    let pairs = sample.pairs();
    let m = sample.len();
    let (factor, jitter) = factor_spd_with_retry(
        &|| gram(&kernel, pairs.view(), pairs.view()),
        lambda,
        m,
    )?;
    Ok(ExactEmbedding {
        sample: sample.clone(),
        kernel,
        lambda,
        pairs,
        factor,
        jitter,
    })
}

impl ExactEmbedding {
    pub fn len(&self) -> usize {
        self.sample.len()
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    pub fn lambda(&self) -> f64 {
        self.lambda
    }

    pub fn sample(&self) -> &TransitionSample {
        &self.sample
    }

    /// Per-block `(length, bandwidth)` of the pair kernel.
    pub fn block_sigmas(&self) -> Vec<(usize, f64)> {
        self.kernel.block_sigmas()
    }

    /// Diagonal jitter added on factorization retry (0 when unused).
    pub fn jitter(&self) -> f64 {
        self.jitter
    }

    fn query_pairs(&self, xs: ArrayView2<'_, f64>, us: ArrayView2<'_, f64>) -> Result<Array2<f64>> {
        if xs.nrows() != us.nrows() {
            return Err(CoreError::Dimension(format!(
                "query state rows {} and input rows {} disagree",
                xs.nrows(),
                us.nrows()
            )));
        }
        if xs.ncols() != self.sample.state_dim() || us.ncols() != self.sample.input_dim() {
            return Err(CoreError::Dimension(format!(
                "query dimensions ({}, {}) do not match sample ({}, {})",
                xs.ncols(),
                us.ncols(),
                self.sample.state_dim(),
                self.sample.input_dim()
            )));
        }
        let n = xs.ncols();
        let mut q = Array2::zeros((xs.nrows(), n + us.ncols()));
        q.slice_mut(s![.., ..n]).assign(&xs);
        q.slice_mut(s![.., n..]).assign(&us);
        Ok(q)
    }

    /// Coefficient vector at one query: solves the regularized Gram system
    /// against the kernel column of `(x, u)`.
    pub fn beta(&self, x: &[f64], u: &[f64]) -> Result<Array1<f64>> {
        let xs = ArrayView2::from_shape((1, x.len()), x)
            .map_err(|e| CoreError::Dimension(e.to_string()))?;
        let us = ArrayView2::from_shape((1, u.len()), u)
            .map_err(|e| CoreError::Dimension(e.to_string()))?;
        let q = self.query_pairs(xs, us)?;
        let kappa = gram(&self.kernel, self.pairs.view(), q.view())?;
        chol_solve_vec(&self.factor, kappa.column(0))
    }

    /// Coefficient matrix (M x Q) for a batch of queries; column `j` equals
    /// `beta` of query `j`.
    pub fn batched_coefficients(
        &self,
        xs: ArrayView2<'_, f64>,
        us: ArrayView2<'_, f64>,
    ) -> Result<Array2<f64>> {
        if xs.nrows() == 0 {
            return Err(CoreError::Config("empty query batch".into()));
        }
        let q = self.query_pairs(xs, us)?;
        let kq = gram(&self.kernel, self.pairs.view(), q.view())?;
        chol_solve_mat(&self.factor, kq.view())
    }

    /// Estimate `E[f(y) | x, u]` from per-successor values `f`.
    pub fn expectation(&self, f: ArrayView1<'_, f64>, x: &[f64], u: &[f64]) -> Result<f64> {
        if f.len() != self.len() {
            return Err(CoreError::Dimension(format!(
                "value vector has {} entries but sample has {}",
                f.len(),
                self.len()
            )));
        }
        Ok(f.dot(&self.beta(x, u)?))
    }

    /// Solve the regularized Gram system against an arbitrary vector; with
    /// `v` holding per-sample values, `g = solve` satisfies
    /// `v' beta(q) = g' kappa(q)` for every query, which lets value
    /// recursions reuse one solve across many queries.
    pub(crate) fn solve_dual(&self, v: ArrayView1<'_, f64>) -> Result<Array1<f64>> {
        chol_solve_vec(&self.factor, v)
    }

    pub(crate) fn kernel(&self) -> &ProductKernel {
        &self.kernel
    }

    pub(crate) fn pairs_view(&self) -> ArrayView2<'_, f64> {
        self.pairs.view()
    }
}

/// Random-feature embedding: coefficients come from a D_j x D_j regularized
/// feature-space solve pushed back to sample space.
pub struct RffEmbedding {
    sample: TransitionSample,
    features: JointFeatures,
    lambda: f64,
    z: Array2<f64>,
    factor: CholFactor,
    jitter: f64,
    w: OnceLock<Array2<f64>>,
}

/// Fit the random-feature embedding: assemble the feature matrix
/// `Z` (M x D_j), form `H = Z' Z`, and factor `H + lambda * D_j * I`.
pub fn fit_rff(
    sample: &TransitionSample,
    features: JointFeatures,
    lambda: f64,
) -> Result<RffEmbedding> {
    if !(lambda.is_finite() && lambda > 0.0) {
        return Err(CoreError::Config(format!(
            "regularization weight must be positive and finite, got {lambda}"
        )));
    }
    if features.pair_dim() != sample.state_dim() + sample.input_dim() {
        return Err(CoreError::Dimension(format!(
            "features expect pair dimension {} but sample has {}",
            features.pair_dim(),
            sample.state_dim() + sample.input_dim()
        )));
    }
    let z = features.feature_matrix(sample.states(), sample.inputs())?;
    let dj = features.dj();
    let ridge = lambda * dj as f64;
    let (factor, jitter) = factor_spd_with_retry(&|| Ok(z.t().dot(&z)), ridge, sample.len())?;
    Ok(RffEmbedding {
        sample: sample.clone(),
        features,
        lambda,
        z,
        factor,
        jitter,
        w: OnceLock::new(),
    })
}

impl RffEmbedding {
    pub fn len(&self) -> usize {
        self.sample.len()
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    pub fn dj(&self) -> usize {
        self.features.dj()
    }

    pub fn lambda(&self) -> f64 {
        self.lambda
    }

    pub fn sample(&self) -> &TransitionSample {
        &self.sample
    }

    pub fn features(&self) -> &JointFeatures {
        &self.features
    }

    pub fn jitter(&self) -> f64 {
        self.jitter
    }

    /// The fitted (unscaled) feature matrix `Z`.
    pub fn feature_matrix_view(&self) -> ArrayView2<'_, f64> {
        self.z.view()
    }

    /// Coefficient vector at one query, pushed through to sample space:
    /// `gamma = Z (Z'Z + lambda D_j I)^-1 zeta(x, u)`.
    pub fn gamma(&self, x: &[f64], u: &[f64]) -> Result<Array1<f64>> {
        let zeta = self.features.joint_feature(x, u)?;
        let s = chol_solve_vec(&self.factor, zeta.view())?;
        Ok(self.z.dot(&s))
    }

    /// The precomputed query map `W = Z (H + lambda D_j I)^-1`, built on
    /// first use and reused by every batched query.
    fn ensure_w(&self) -> Result<&Array2<f64>> {
        if self.w.get().is_none() {
            let st = chol_solve_mat(&self.factor, self.z.t())?;
            let _ = self.w.set(st.t().to_owned());
        }
        Ok(self.w.get().expect("W initialized above"))
    }

    /// Coefficient matrix (M x Q) for a batch of queries.
    pub fn batched_coefficients(
        &self,
        xs: ArrayView2<'_, f64>,
        us: ArrayView2<'_, f64>,
    ) -> Result<Array2<f64>> {
        if xs.nrows() == 0 {
            return Err(CoreError::Config("empty query batch".into()));
        }
        let w = self.ensure_w()?;
        let zq = self.features.feature_matrix(xs, us)?;
        Ok(w.dot(&zq.t()))
    }

    /// Estimate `E[f(y) | x, u]` from per-successor values `f`.
    pub fn expectation(&self, f: ArrayView1<'_, f64>, x: &[f64], u: &[f64]) -> Result<f64> {
        if f.len() != self.len() {
            return Err(CoreError::Dimension(format!(
                "value vector has {} entries but sample has {}",
                f.len(),
                self.len()
            )));
        }
        Ok(f.dot(&self.gamma(x, u)?))
    }

    /// Feature-space dual of a per-sample value vector: `q` satisfying
    /// `v' gamma(query) = q' zeta(query)`, reusable across queries.
    pub(crate) fn solve_feature_dual(&self, v: ArrayView1<'_, f64>) -> Result<Array1<f64>> {
        let ztv = self.z.t().dot(&v);
        chol_solve_vec(&self.factor, ztv.view())
    }
}

/// Either embedding, sharing the query interface.
pub enum Embedding {
    Exact(ExactEmbedding),
    Rff(RffEmbedding),
}

impl Embedding {
    pub fn len(&self) -> usize {
        match self {
            Embedding::Exact(e) => e.len(),
            Embedding::Rff(e) => e.len(),
        }
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    pub fn lambda(&self) -> f64 {
        match self {
            Embedding::Exact(e) => e.lambda(),
            Embedding::Rff(e) => e.lambda(),
        }
    }

    pub fn sample(&self) -> &TransitionSample {
        match self {
            Embedding::Exact(e) => e.sample(),
            Embedding::Rff(e) => e.sample(),
        }
    }

    /// Feature count for the feature path, `None` on the exact path.
    pub fn feature_count(&self) -> Option<usize> {
        match self {
            Embedding::Exact(_) => None,
            Embedding::Rff(e) => Some(e.dj()),
        }
    }

    pub fn method_name(&self) -> &'static str {
        match self {
            Embedding::Exact(_) => "exact",
            Embedding::Rff(_) => "rff",
        }
    }

    pub fn batched_coefficients(
        &self,
        xs: ArrayView2<'_, f64>,
        us: ArrayView2<'_, f64>,
    ) -> Result<Array2<f64>> {
        match self {
            Embedding::Exact(e) => e.batched_coefficients(xs, us),
            Embedding::Rff(e) => e.batched_coefficients(xs, us),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::kernels::Kernel;
    use crate::rff::{sample_basis, JointFeatures};
    use approx::assert_abs_diff_eq;
    use ndarray_linalg::Inverse;

    fn sample_from(
        x: Array2<f64>,
        u: Array2<f64>,
        y: Array2<f64>,
    ) -> TransitionSample {
        TransitionSample::new(x, u, y, 0, "test").unwrap()
    }

    fn small_sample() -> TransitionSample {
        let x = array![
            [0.0, 0.0],
            [0.1, -0.2],
            [0.3, 0.4],
            [-0.5, 0.2],
            [0.2, 0.2]
        ];
        let u = array![[0.0], [0.5], [-0.5], [1.0], [0.25]];
        let y = array![
            [0.05, 0.01],
            [0.2, -0.1],
            [0.2, 0.5],
            [-0.3, 0.4],
            [0.25, 0.3]
        ];
        sample_from(x, u, y)
    }

    #[test]
    fn single_sample_fit_solves_the_scalar_system() {
        let s = sample_from(array![[0.5]], array![[0.0]], array![[0.7]]);
        let kx = GaussianKernel::new(1.0).unwrap();
        let ku = GaussianKernel::new(1.0).unwrap();
        let e = fit_exact(&s, &kx, &ku, 1.0).unwrap();
        // Querying at the sample point: kappa = 1, solve (1 + 1) b = 1.
        let b = e.beta(&[0.5], &[0.0]).unwrap();
        assert_abs_diff_eq!(b[0], 0.5, epsilon = 1e-12);
    }

    #[test]
    fn duplicate_rows_stay_factorizable() {
        let x = array![[0.1, 0.1], [0.1, 0.1], [0.1, 0.1]];
        let u = array![[0.2], [0.2], [0.2]];
        let y = array![[0.0, 0.0], [0.1, 0.1], [-0.1, 0.2]];
        let s = sample_from(x, u, y);
        let kx = GaussianKernel::new(0.5).unwrap();
        let ku = GaussianKernel::new(0.5).unwrap();
        let e = fit_exact(&s, &kx, &ku, 0.1).unwrap();
        let b = e.beta(&[0.1, 0.1], &[0.2]).unwrap();
        assert!(b.iter().all(|v| v.is_finite()));
        // Symmetry: identical rows get identical coefficients.
        assert_abs_diff_eq!(b[0], b[1], epsilon = 1e-12);
        assert_abs_diff_eq!(b[1], b[2], epsilon = 1e-12);
    }

    #[test]
    fn beta_matches_dense_inverse_on_a_small_fit() {
        let s = small_sample();
        let kx = GaussianKernel::new(0.4).unwrap();
        let ku = GaussianKernel::new(0.8).unwrap();
        let lambda = 0.3;
        let e = fit_exact(&s, &kx, &ku, lambda).unwrap();
        let g = gram(e.kernel(), e.pairs_view(), e.pairs_view()).unwrap();
        let mut a = g.clone();
        a.diag_mut().mapv_inplace(|v| v + lambda);
        let a_inv = a.inv().unwrap();
        let q = [0.05, 0.05];
        let qu = [0.1];
        let kq = e
            .batched_coefficients(
                ArrayView2::from_shape((1, 2), &q).unwrap(),
                ArrayView2::from_shape((1, 1), &qu).unwrap(),
            )
            .unwrap();
        // Rebuild the kernel column independently.
        let mut kappa = Array1::zeros(5);
        for i in 0..5 {
            let p = e.pairs_view();
            let row = p.row(i);
            kappa[i] = e.kernel().eval_unchecked(
                row.as_slice().unwrap(),
                &[q[0], q[1], qu[0]],
            );
        }
        let want = a_inv.dot(&kappa);
        for i in 0..5 {
            assert_abs_diff_eq!(kq[[i, 0]], want[i], epsilon = 1e-10);
        }
    }

    #[test]
    fn batched_columns_equal_scalar_queries_in_any_order() {
        let s = small_sample();
        let kx = GaussianKernel::new(0.4).unwrap();
        let ku = GaussianKernel::new(0.8).unwrap();
        let e = fit_exact(&s, &kx, &ku, 0.5).unwrap();
        let xs = array![[0.0, 0.1], [0.2, 0.2], [-0.4, 0.0]];
        let us = array![[0.3], [-0.2], [0.6]];
        let batch = e.batched_coefficients(xs.view(), us.view()).unwrap();
        assert_eq!(batch.shape(), &[5, 3]);
        for j in 0..3 {
            let single = e
                .beta(xs.row(j).as_slice().unwrap(), us.row(j).as_slice().unwrap())
                .unwrap();
            for i in 0..5 {
                assert_abs_diff_eq!(batch[[i, j]], single[i], epsilon = 1e-12);
            }
        }
        // Reversed batch order returns the same columns.
        let xs_rev = array![[-0.4, 0.0], [0.2, 0.2], [0.0, 0.1]];
        let us_rev = array![[0.6], [-0.2], [0.3]];
        let rev = e.batched_coefficients(xs_rev.view(), us_rev.view()).unwrap();
        for i in 0..5 {
            for j in 0..3 {
                assert_abs_diff_eq!(batch[[i, j]], rev[[i, 2 - j]], epsilon = 1e-14);
            }
        }
        // Q = 1 equals the scalar op.
        let one = e
            .batched_coefficients(xs.slice(s![0..1, ..]), us.slice(s![0..1, ..]))
            .unwrap();
        let single = e.beta(&[0.0, 0.1], &[0.3]).unwrap();
        for i in 0..5 {
            assert_abs_diff_eq!(one[[i, 0]], single[i], epsilon = 1e-14);
        }
    }

    #[test]
    fn expectation_is_linear_in_the_function_values() {
        let s = small_sample();
        let kx = GaussianKernel::new(0.4).unwrap();
        let ku = GaussianKernel::new(0.8).unwrap();
        let e = fit_exact(&s, &kx, &ku, 0.5).unwrap();
        let f = array![0.3, -0.1, 0.8, 0.2, -0.6];
        let g = array![1.0, 0.0, -1.0, 0.5, 0.25];
        let (a, b) = (2.5, -1.25);
        let combo = &f * a + &g * b;
        let lhs = e.expectation(combo.view(), &[0.1, 0.0], &[0.2]).unwrap();
        let rhs = a * e.expectation(f.view(), &[0.1, 0.0], &[0.2]).unwrap()
            + b * e.expectation(g.view(), &[0.1, 0.0], &[0.2]).unwrap();
        assert_abs_diff_eq!(lhs, rhs, epsilon = 1e-13);
    }

    #[test]
    fn refitting_identical_inputs_reproduces_coefficients_bitwise() {
        let s = small_sample();
        let kx = GaussianKernel::new(0.4).unwrap();
        let ku = GaussianKernel::new(0.8).unwrap();
        let e1 = fit_exact(&s, &kx, &ku, 0.5).unwrap();
        let e2 = fit_exact(&s, &kx, &ku, 0.5).unwrap();
        let b1 = e1.beta(&[0.1, 0.2], &[0.0]).unwrap();
        let b2 = e2.beta(&[0.1, 0.2], &[0.0]).unwrap();
        for (a, b) in b1.iter().zip(b2.iter()) {
            assert_eq!(a.to_bits(), b.to_bits());
        }
        let basis = sample_basis(37, 3, 0.4, 77).unwrap();
        let r1 = fit_rff(&s, JointFeatures::Concatenated { basis: basis.clone() }, 0.5).unwrap();
        let r2 = fit_rff(&s, JointFeatures::Concatenated { basis }, 0.5).unwrap();
        let g1 = r1.gamma(&[0.1, 0.2], &[0.0]).unwrap();
        let g2 = r2.gamma(&[0.1, 0.2], &[0.0]).unwrap();
        for (a, b) in g1.iter().zip(g2.iter()) {
            assert_eq!(a.to_bits(), b.to_bits());
        }
    }

    #[test]
    fn feature_gram_matches_brute_force_triple_loop() {
        let s = sample_from(
            array![
                [0.0, 0.0],
                [0.1, -0.2],
                [0.3, 0.4],
                [-0.5, 0.2],
                [0.2, 0.2],
                [0.6, -0.6]
            ],
            array![[0.0], [0.5], [-0.5], [1.0], [0.25], [-0.75]],
            array![
                [0.05, 0.01],
                [0.2, -0.1],
                [0.2, 0.5],
                [-0.3, 0.4],
                [0.25, 0.3],
                [0.5, -0.5]
            ],
        );
        let basis = sample_basis(3, 3, 0.6, 5).unwrap();
        let jf = JointFeatures::Concatenated { basis };
        let e = fit_rff(&s, jf.clone(), 0.2).unwrap();
        let z = e.feature_matrix_view();
        let h = z.t().dot(&z);
        for a in 0..3 {
            for b in 0..3 {
                let mut acc = 0.0;
                for i in 0..6 {
                    let zi = jf
                        .joint_feature(
                            s.states().row(i).as_slice().unwrap(),
                            s.inputs().row(i).as_slice().unwrap(),
                        )
                        .unwrap();
                    acc += zi[a] * zi[b];
                }
                assert_abs_diff_eq!(h[[a, b]], acc, epsilon = 1e-12);
            }
        }
        // Scalar feature case: H is a single positive number.
        let b1 = sample_basis(1, 3, 0.6, 6).unwrap();
        let e1 = fit_rff(&s, JointFeatures::Concatenated { basis: b1 }, 0.2).unwrap();
        let z1 = e1.feature_matrix_view();
        let h1 = z1.t().dot(&z1);
        assert_eq!(h1.shape(), &[1, 1]);
        assert!(h1[[0, 0]] >= 0.0);
    }

    #[test]
    fn push_through_identity_holds_at_small_scale() {
        // gamma via the feature-space solve must equal the sample-space
        // solve (Z Z' + r I)^-1 Z zeta for the same ridge r.
        for (m_rows, dj, seed) in [(5usize, 3usize, 1u64), (20, 10, 2), (7, 7, 3)] {
            let mut xs = Array2::zeros((m_rows, 2));
            let mut us = Array2::zeros((m_rows, 1));
            let mut ys = Array2::zeros((m_rows, 2));
            for i in 0..m_rows {
                let t = i as f64 / m_rows as f64;
                xs[[i, 0]] = (7.0 * t).sin();
                xs[[i, 1]] = (3.0 * t).cos() * 0.5;
                us[[i, 0]] = t - 0.5;
                ys[[i, 0]] = xs[[i, 0]] * 0.9;
                ys[[i, 1]] = xs[[i, 1] ] * 0.8 + 0.1;
            }
            let s = sample_from(xs, us, ys);
            let basis = sample_basis(dj, 3, 0.7, seed).unwrap();
            let lambda = 0.4;
            let e = fit_rff(&s, JointFeatures::Concatenated { basis }, lambda).unwrap();
            let query = ([0.2, -0.1], [0.3]);
            let primal = e.gamma(&query.0, &query.1).unwrap();
            // Dual form with the matching ridge lambda * D_j.
            let z = e.feature_matrix_view().to_owned();
            let zeta = e.features().joint_feature(&query.0, &query.1).unwrap();
            let mut a = z.dot(&z.t());
            a.diag_mut().mapv_inplace(|v| v + lambda * dj as f64);
            let dual = a.inv().unwrap().dot(&z.dot(&zeta));
            for i in 0..m_rows {
                assert!(
                    (primal[i] - dual[i]).abs() <= 1e-8,
                    "M={m_rows}, Dj={dj}: entry {i} differs: {} vs {}",
                    primal[i],
                    dual[i]
                );
            }
        }
    }

    #[test]
    fn zero_function_values_give_zero_expectation() {
        let s = small_sample();
        let basis = sample_basis(24, 3, 0.5, 9).unwrap();
        let e = fit_rff(&s, JointFeatures::Concatenated { basis }, 0.3).unwrap();
        let f = Array1::zeros(5);
        let v = e.expectation(f.view(), &[0.0, 0.0], &[0.0]).unwrap();
        assert_eq!(v, 0.0);
    }

    #[test]
    fn precomputed_query_map_satisfies_its_defining_equation() {
        let s = small_sample();
        let basis = sample_basis(11, 3, 0.5, 13).unwrap();
        let lambda = 0.25;
        let e = fit_rff(&s, JointFeatures::Concatenated { basis }, lambda).unwrap();
        // Trigger W precomputation through a batched query.
        let xs = array![[0.0, 0.0], [0.1, 0.1]];
        let us = array![[0.0], [0.1]];
        let batch = e.batched_coefficients(xs.view(), us.view()).unwrap();
        // Batched columns equal scalar gammas.
        for j in 0..2 {
            let g = e
                .gamma(xs.row(j).as_slice().unwrap(), us.row(j).as_slice().unwrap())
                .unwrap();
            for i in 0..5 {
                assert_abs_diff_eq!(batch[[i, j]], g[i], epsilon = 1e-12);
            }
        }
        // W (H + ridge I) = Z to small relative residual.
        let w = e.ensure_w().unwrap();
        let z = e.feature_matrix_view();
        let mut h = z.t().dot(&z);
        h.diag_mut().mapv_inplace(|v| v + lambda * 11.0);
        let resid = &w.dot(&h) - &z;
        let zn = z.iter().fold(0.0f64, |a, v| a.max(v.abs()));
        let rn = resid.iter().fold(0.0f64, |a, v| a.max(v.abs()));
        assert!(rn <= 1e-6 * zn.max(1.0), "residual {rn} vs scale {zn}");
    }

    #[test]
    fn dual_solves_reproduce_expectations_across_queries() {
        let s = small_sample();
        let kx = GaussianKernel::new(0.4).unwrap();
        let ku = GaussianKernel::new(0.8).unwrap();
        let e = fit_exact(&s, &kx, &ku, 0.5).unwrap();
        let f = array![0.2, 0.4, -0.3, 0.9, 0.0];
        let g = e.solve_dual(f.view()).unwrap();
        let queries = [([0.0, 0.0], [0.1]), ([0.3, -0.3], [0.5])];
        for (x, u) in &queries {
            let direct = e.expectation(f.view(), x, u).unwrap();
            let mut kappa = Array1::zeros(5);
            for i in 0..5 {
                let p = e.pairs_view();
                kappa[i] = e.kernel().eval_unchecked(
                    p.row(i).as_slice().unwrap(),
                    &[x[0], x[1], u[0]],
                );
            }
            assert_abs_diff_eq!(direct, g.dot(&kappa), epsilon = 1e-12);
        }

        let basis = sample_basis(9, 3, 0.5, 31).unwrap();
        let er = fit_rff(&s, JointFeatures::Concatenated { basis }, 0.5).unwrap();
        let q = er.solve_feature_dual(f.view()).unwrap();
        for (x, u) in &queries {
            let direct = er.expectation(f.view(), x, u).unwrap();
            let zeta = er.features().joint_feature(x, u).unwrap();
            assert_abs_diff_eq!(direct, q.dot(&zeta), epsilon = 1e-12);
        }
    }

    #[test]
    fn lambda_schedule_decays_with_sample_count() {
        assert_abs_diff_eq!(theoretical_lambda_schedule(4), 0.5, epsilon = 1e-15);
        assert_abs_diff_eq!(theoretical_lambda_schedule(10_000), 0.01, epsilon = 1e-15);
        assert!(theoretical_lambda_schedule(100) > theoretical_lambda_schedule(400));
    }

    #[test]
    fn invalid_fits_are_rejected() {
        let s = small_sample();
        let kx = GaussianKernel::new(0.4).unwrap();
        let ku = GaussianKernel::new(0.8).unwrap();
        assert!(fit_exact(&s, &kx, &ku, 0.0).is_err());
        assert!(fit_exact(&s, &kx, &ku, -2.0).is_err());
        let basis = sample_basis(8, 2, 0.4, 0).unwrap(); // wrong pair dimension
        assert!(fit_rff(&s, JointFeatures::Concatenated { basis }, 1.0).is_err());
        let e = fit_exact(&s, &kx, &ku, 1.0).unwrap();
        assert!(e.beta(&[0.0], &[0.0]).is_err());
        let f_short = array![1.0, 2.0];
        assert!(e.expectation(f_short.view(), &[0.0, 0.0], &[0.0]).is_err());
    }
}
