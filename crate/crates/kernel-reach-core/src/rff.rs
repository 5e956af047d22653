//! Random Fourier features approximating Gaussian kernels.
//!
//! A basis of `D` frequency/phase pairs defines the feature map
//! `zeta(x) = sqrt(2) * cos(omega x + b)` whose inner products, scaled by
//! `1/D`, estimate the kernel. Feature rows are kept unscaled; the `1/D`
//! normalization is applied where inner products are formed.

use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::Path;

use ndarray::prelude::*;
use rand::Rng;
use rand_distr::StandardNormal;

use crate::error::{CoreError, Result};
use crate::rng::derive_stream;
use crate::sample::fmt_float;

/// A sampled Fourier basis: frequencies `omega` (D x dim), phases `b` (D),
/// the per-coordinate bandwidths used to scale the frequencies, and the seed
/// the draw was derived from.
#[derive(Clone, Debug)]
pub struct RffBasis {
    omega: Array2<f64>,
    phases: Array1<f64>,
    sigmas: Vec<f64>,
    seed: u64,
}

impl RffBasis {
    /// Number of features `D`.
    pub fn d(&self) -> usize {
        self.omega.nrows()
    }

    /// Input dimension.
    pub fn dim(&self) -> usize {
        self.omega.ncols()
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    /// Per-coordinate bandwidths (all equal for an isotropic basis).
    pub fn sigmas(&self) -> &[f64] {
        &self.sigmas
    }

    pub fn omega(&self) -> ArrayView2<'_, f64> {
        self.omega.view()
    }

    pub fn phases(&self) -> ArrayView1<'_, f64> {
        self.phases.view()
    }

    fn is_isotropic(&self) -> bool {
        self.sigmas.windows(2).all(|w| w[0] == w[1])
    }

    /// Write the basis as CSV: one row `omega_1..omega_dim, b` per feature.
    /// Only isotropic bases have a scalar bandwidth to record in the header.
    pub fn write_csv<W: Write>(&self, mut w: W) -> Result<()> {
        if !self.is_isotropic() {
            return Err(CoreError::Unsupported(
                "basis CSV records a single bandwidth; this basis is anisotropic".into(),
            ));
        }
        writeln!(
            w,
            "# kernel-reach rff-basis v1; D={}; dim={}; sigma={}; seed={}",
            self.d(),
            self.dim(),
            fmt_float(self.sigmas[0]),
            self.seed
        )?;
        let mut fields: Vec<String> = Vec::with_capacity(self.dim() + 1);
        for i in 0..self.d() {
            fields.clear();
            fields.extend(self.omega.row(i).iter().map(|v| fmt_float(*v)));
            fields.push(fmt_float(self.phases[i]));
            writeln!(w, "{}", fields.join(","))?;
        }
        Ok(())
    }

    pub fn write_csv_path<P: AsRef<Path>>(&self, path: P) -> Result<()> {
        let f = File::create(path)?;
        let mut w = BufWriter::new(f);
        self.write_csv(&mut w)?;
        w.flush()?;
        Ok(())
    }

    /// Read a basis written by [`write_csv`](Self::write_csv).
    pub fn read_csv<R: BufRead>(r: R) -> Result<Self> {
        let mut lines = r.lines();
        let header = lines
            .next()
            .ok_or_else(|| CoreError::Format("empty basis file".into()))??;
        const PREFIX: &str = "# kernel-reach rff-basis v1;";
        let rest = header
            .strip_prefix(PREFIX)
            .ok_or_else(|| CoreError::Format(format!("unrecognized basis header: '{header}'")))?;
        let (mut d, mut dim, mut sigma, mut seed) = (None, None, None, None);
        for part in rest.split(';') {
            let part = part.trim();
            if part.is_empty() {
                continue;
            }
            let (key, value) = part
                .split_once('=')
                .ok_or_else(|| CoreError::Format(format!("malformed header field '{part}'")))?;
            let value = value.trim();
            match key.trim() {
                "D" => {
                    d = Some(value.parse::<usize>().map_err(|_| {
                        CoreError::Format(format!("header D='{value}' is not a count"))
                    })?)
                }
                "dim" => {
                    dim = Some(value.parse::<usize>().map_err(|_| {
                        CoreError::Format(format!("header dim='{value}' is not a count"))
                    })?)
                }
                "sigma" => {
                    sigma = Some(value.parse::<f64>().map_err(|_| {
                        CoreError::Format(format!("header sigma='{value}' is not a number"))
                    })?)
                }
                "seed" => {
                    seed = Some(value.parse::<u64>().map_err(|_| {
                        CoreError::Format(format!("header seed='{value}' is not a u64"))
                    })?)
                }
                other => {
                    return Err(CoreError::Format(format!("unknown header field '{other}'")))
                }
            }
        }
        let (d, dim, sigma, seed) = match (d, dim, sigma, seed) {
            (Some(d), Some(dim), Some(s), Some(seed)) if d > 0 && dim > 0 && s > 0.0 => {
                (d, dim, s, seed)
            }
            _ => {
                return Err(CoreError::Format(
                    "basis header must declare positive D, dim, sigma, and a seed".into(),
                ))
            }
        };
        let mut omega = Array2::zeros((d, dim));
        let mut phases = Array1::zeros(d);
        let mut rows = 0usize;
        for (lineno, line) in lines.enumerate() {
            let line = line?;
            if line.trim().is_empty() {
                continue;
            }
            if rows >= d {
                return Err(CoreError::Format(format!(
                    "header declares D={d} rows but file has more"
                )));
            }
            let fields: Vec<&str> = line.split(',').collect();
            if fields.len() != dim + 1 {
                return Err(CoreError::Format(format!(
                    "row {}: expected {} fields but found {}",
                    lineno + 2,
                    dim + 1,
                    fields.len()
                )));
            }
            for (c, field) in fields.iter().enumerate() {
                let v: f64 = field.trim().parse().map_err(|_| {
                    CoreError::Format(format!(
                        "row {}: cannot parse '{}' as a number",
                        lineno + 2,
                        field.trim()
                    ))
                })?;
                if c < dim {
                    omega[[rows, c]] = v;
                } else {
                    phases[rows] = v;
                }
            }
            rows += 1;
        }
        if rows != d {
            return Err(CoreError::Format(format!(
                "header declares D={d} rows but file has {rows}"
            )));
        }
        Ok(Self {
            omega,
            phases,
            sigmas: vec![sigma; dim],
            seed,
        })
    }

    pub fn read_csv_path<P: AsRef<Path>>(path: P) -> Result<Self> {
        let f = File::open(path)?;
        Self::read_csv(BufReader::new(f))
    }
}

fn sample_basis_impl(d: usize, sigmas: Vec<f64>, seed: u64) -> Result<RffBasis> {
    let dim = sigmas.len();
    if d == 0 {
        return Err(CoreError::Config("basis size D must be positive".into()));
    }
    if dim == 0 {
        return Err(CoreError::Config("basis dimension must be positive".into()));
    }
    if sigmas.iter().any(|s| !(s.is_finite() && *s > 0.0)) {
        return Err(CoreError::Config(
            "basis bandwidths must be positive and finite".into(),
        ));
    }
    let mut rng = derive_stream(seed, "rff/basis", 0);
    let mut omega = Array2::zeros((d, dim));
    for i in 0..d {
        for c in 0..dim {
            let z: f64 = rng.sample(StandardNormal);
            omega[[i, c]] = z / sigmas[c];
        }
    }
    let mut phases = Array1::zeros(d);
    for i in 0..d {
        phases[i] = rng.gen::<f64>() * std::f64::consts::TAU;
    }
    Ok(RffBasis {
        omega,
        phases,
        sigmas,
        seed,
    })
}

/// Draw `d` frequency/phase pairs for a Gaussian kernel of bandwidth
/// `sigma` on `dim`-dimensional inputs: `omega ~ N(0, sigma^-2 I)`,
/// `b ~ U[0, 2 pi)`. The draw is fully determined by `seed`.
pub fn sample_basis(d: usize, dim: usize, sigma: f64, seed: u64) -> Result<RffBasis> {
    if dim == 0 {
        return Err(CoreError::Config("basis dimension must be positive".into()));
    }
    sample_basis_impl(d, vec![sigma; dim], seed)
}

/// Draw a basis whose coordinates use per-block bandwidths, matching a
/// product of Gaussian kernels over contiguous coordinate blocks.
pub fn sample_basis_per_block(d: usize, blocks: &[(usize, f64)], seed: u64) -> Result<RffBasis> {
    let mut sigmas = Vec::new();
    for (len, s) in blocks {
        if *len == 0 {
            return Err(CoreError::Config("basis blocks must be non-empty".into()));
        }
        sigmas.extend(std::iter::repeat(*s).take(*len));
    }
    sample_basis_impl(d, sigmas, seed)
}

/// Unscaled feature vector `zeta(x) = sqrt(2) * cos(omega x + b)`;
/// every entry lies in `[-sqrt(2), sqrt(2)]`.
pub fn feature_map(basis: &RffBasis, x: &[f64]) -> Result<Array1<f64>> {
    if x.len() != basis.dim() {
        return Err(CoreError::Dimension(format!(
            "point has {} coordinates but basis expects {}",
            x.len(),
            basis.dim()
        )));
    }
    let xv = ArrayView1::from(x);
    let mut z = basis.omega.dot(&xv);
    z += &basis.phases;
    z.mapv_inplace(|t| std::f64::consts::SQRT_2 * t.cos());
    Ok(z)
}

/// Monte Carlo kernel estimate `(1/D) <zeta(x), zeta(y)>`; always within
/// `[-2, 2]`, and unbiased for the Gaussian kernel value.
pub fn kernel_estimate(basis: &RffBasis, x: &[f64], y: &[f64]) -> Result<f64> {
    let zx = feature_map(basis, x)?;
    let zy = feature_map(basis, y)?;
    Ok(zx.dot(&zy) / basis.d() as f64)
}

/// Feature construction for state-input pairs.
#[derive(Clone, Debug)]
pub enum JointFeatures {
    /// One basis on the concatenated `(x, u)` vector; `D_j = D`. This is the
    /// default construction.
    Concatenated { basis: RffBasis },
    /// Separate bases for state and input; the joint feature is the outer
    /// product flattened row-major, so `D_j = D_x * D_u` and entries are
    /// bounded by 2.
    Tensor { basis_x: RffBasis, basis_u: RffBasis },
}

impl JointFeatures {
    /// Joint feature dimension `D_j`.
    pub fn dj(&self) -> usize {
        match self {
            JointFeatures::Concatenated { basis } => basis.d(),
            JointFeatures::Tensor { basis_x, basis_u } => basis_x.d() * basis_u.d(),
        }
    }

    /// Combined `(state, input)` dimension the features expect.
    pub fn pair_dim(&self) -> usize {
        match self {
            JointFeatures::Concatenated { basis } => basis.dim(),
            JointFeatures::Tensor { basis_x, basis_u } => basis_x.dim() + basis_u.dim(),
        }
    }

    /// Seed of the (first) underlying basis, for provenance.
    pub fn seed(&self) -> u64 {
        match self {
            JointFeatures::Concatenated { basis } => basis.seed(),
            JointFeatures::Tensor { basis_x, .. } => basis_x.seed(),
        }
    }

    fn check_split(&self, n: usize, m: usize) -> Result<()> {
        match self {
            JointFeatures::Concatenated { basis } => {
                if basis.dim() != n + m {
                    return Err(CoreError::Dimension(format!(
                        "concatenated basis expects dimension {} but pair has {}",
                        basis.dim(),
                        n + m
                    )));
                }
            }
            JointFeatures::Tensor { basis_x, basis_u } => {
                if basis_x.dim() != n || basis_u.dim() != m {
                    return Err(CoreError::Dimension(format!(
                        "tensor bases expect dimensions ({}, {}) but pair has ({n}, {m})",
                        basis_x.dim(),
                        basis_u.dim()
                    )));
                }
            }
        }
        Ok(())
    }

    /// Unscaled joint feature vector of length `D_j`.
    pub fn joint_feature(&self, x: &[f64], u: &[f64]) -> Result<Array1<f64>> {
        self.check_split(x.len(), u.len())?;
        match self {
            JointFeatures::Concatenated { basis } => {
                let mut xu = Vec::with_capacity(x.len() + u.len());
                xu.extend_from_slice(x);
                xu.extend_from_slice(u);
                feature_map(basis, &xu)
            }
            JointFeatures::Tensor { basis_x, basis_u } => {
                let zx = feature_map(basis_x, x)?;
                let zu = feature_map(basis_u, u)?;
                let (dx, du) = (zx.len(), zu.len());
                let mut out = Array1::zeros(dx * du);
                for i in 0..dx {
                    let zi = zx[i];
                    for j in 0..du {
                        out[i * du + j] = zi * zu[j];
                    }
                }
                Ok(out)
            }
        }
    }

    /// Kernel estimate on pairs: `<zeta(x,u), zeta(x',u')> / D_j`. For the
    /// tensor construction this factorizes into the product of the per-block
    /// estimates.
    pub fn joint_kernel_estimate(
        &self,
        x: &[f64],
        u: &[f64],
        x2: &[f64],
        u2: &[f64],
    ) -> Result<f64> {
        let a = self.joint_feature(x, u)?;
        let b = self.joint_feature(x2, u2)?;
        Ok(a.dot(&b) / self.dj() as f64)
    }

    /// Unscaled feature matrix with one row `zeta(x_i, u_i)` per pair
    /// (shape `M x D_j`). The concatenated construction uses a single
    /// matrix product for all rows.
    pub fn feature_matrix(
        &self,
        xs: ArrayView2<'_, f64>,
        us: ArrayView2<'_, f64>,
    ) -> Result<Array2<f64>> {
        if xs.nrows() != us.nrows() {
            return Err(CoreError::Dimension(format!(
                "state rows {} and input rows {} disagree",
                xs.nrows(),
                us.nrows()
            )));
        }
        self.check_split(xs.ncols(), us.ncols())?;
        match self {
            JointFeatures::Concatenated { basis } => {
                let m = xs.nrows();
                let n = xs.ncols();
                let mut pairs = Array2::zeros((m, n + us.ncols()));
                pairs.slice_mut(s![.., ..n]).assign(&xs);
                pairs.slice_mut(s![.., n..]).assign(&us);
                let mut z = pairs.dot(&basis.omega.t());
                z += &basis.phases;
                z.mapv_inplace(|t| std::f64::consts::SQRT_2 * t.cos());
                Ok(z)
            }
            JointFeatures::Tensor { basis_x, basis_u } => {
                let mut zx = xs.dot(&basis_x.omega.t());
                zx += &basis_x.phases;
                zx.mapv_inplace(|t| std::f64::consts::SQRT_2 * t.cos());
                let mut zu = us.dot(&basis_u.omega.t());
                zu += &basis_u.phases;
                zu.mapv_inplace(|t| std::f64::consts::SQRT_2 * t.cos());
                let (m, dx, du) = (xs.nrows(), basis_x.d(), basis_u.d());
                let mut out = Array2::zeros((m, dx * du));
                for r in 0..m {
                    let (zxr, zur) = (zx.row(r), zu.row(r));
                    let mut orow = out.row_mut(r);
                    for i in 0..dx {
                        let zi = zxr[i];
                        for j in 0..du {
                            orow[i * du + j] = zi * zur[j];
                        }
                    }
                }
                Ok(out)
            }
        }
    }
}
