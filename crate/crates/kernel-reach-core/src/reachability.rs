//! First-hitting-time value recursion and safety-probability fields.
//!
//! The recursion runs backward from the horizon: the terminal layer is the
//! target indicator, and each earlier layer is
//! `V_k(p) = 1_T(p) + 1_{K minus T}(p) * E[V_{k+1}(successor) | p, policy(p)]`,
//! with the conditional expectation supplied by a fitted embedding. One
//! regularized solve per step against the values at the sample successors
//! serves every query point of that step, which is what makes the recursion
//! a constant number of linear solves rather than one per point.

use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::Path;

use ndarray::prelude::*;
use serde::{Deserialize, Serialize};

use crate::embedding::Embedding;
use crate::error::{CoreError, Result};
use crate::geometry::{HitLabel, HyperRectangle};
use crate::kernels::gram;
use crate::problem::SafetyProblem;
use crate::sample::fmt_float;

/// Options for the value recursion.
#[derive(Clone, Debug)]
pub struct RecursionOptions {
    /// Clamp each expectation estimate into `[0, 1]` before composing the next
    /// layer (on by default; turning it off applies the literal formulas).
    pub clamp: bool,
    /// Evaluation points are processed in chunks of this many rows.
    pub eval_chunk: usize,
}

impl Default for RecursionOptions {
    fn default() -> Self {
        Self {
            clamp: true,
            eval_chunk: 2048,
        }
    }
}

/// Provenance and configuration echo attached to every field artifact.
#[derive(Clone, Debug, Default, Serialize, Deserialize, PartialEq)]
pub struct FieldMeta {
    /// Producing method: "exact", "rff", "dp", or "mc".
    pub method: String,
    /// System the underlying data came from.
    pub system: String,
    /// Horizon `N` (the field has `N + 1` layers).
    pub horizon: usize,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub m: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub d: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub lambda: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub sigma: Option<Vec<f64>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub sample_seed: Option<u64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub basis_seed: Option<u64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub clamp: Option<bool>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub time_step: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub disturbance: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub policy: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub plan: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub grid: Option<Vec<usize>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub trials: Option<u64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub radius99: Option<f64>,
}

/// A computed safety-probability field: the evaluation points and one value
/// layer per time step, `layers[k][p] = V_k(points[p])` for `k = 0 ..= N`.
#[derive(Clone, Debug)]
pub struct SafetyField {
    pub meta: FieldMeta,
    pub points: Array2<f64>,
    pub layers: Vec<Array1<f64>>,
}

#[derive(Serialize, Deserialize)]
struct FieldJson {
    meta: FieldMeta,
    points: Vec<Vec<f64>>,
    layers: Vec<Vec<f64>>,
}

impl SafetyField {
    /// Number of evaluation points.
    pub fn len(&self) -> usize {
        self.points.nrows()
    }

    pub fn is_empty(&self) -> bool {
        self.points.nrows() == 0
    }

    /// Value layer at step `k` (0 = the safety probability).
    pub fn layer(&self, k: usize) -> Result<ArrayView1<'_, f64>> {
        self.layers
            .get(k)
            .map(|l| l.view())
            .ok_or_else(|| {
                CoreError::Config(format!(
                    "layer {k} out of range; field has {}",
                    self.layers.len()
                ))
            })
    }

    /// Safety probability at evaluation point `index`.
    pub fn safety_probability(&self, index: usize) -> Result<f64> {
        if index >= self.len() {
            return Err(CoreError::Config(format!(
                "point index {index} out of range; field has {} points",
                self.len()
            )));
        }
        let layer0 = self.layer(0)?;
        Ok(layer0[index])
    }

    pub fn to_json_string(&self) -> Result<String> {
        let doc = FieldJson {
            meta: self.meta.clone(),
            points: self.points.rows().into_iter().map(|r| r.to_vec()).collect(),
            layers: self.layers.iter().map(|l| l.to_vec()).collect(),
        };
        serde_json::to_string_pretty(&doc)
            .map_err(|e| CoreError::Format(format!("field serialization failed: {e}")))
    }

    pub fn from_json_str(text: &str) -> Result<Self> {
        let doc: FieldJson = serde_json::from_str(text)
            .map_err(|e| CoreError::Format(format!("field deserialization failed: {e}")))?;
        if doc.points.is_empty() {
            return Err(CoreError::Format("field has no points".into()));
        }
        let n = doc.points[0].len();
        if n == 0 || doc.points.iter().any(|p| p.len() != n) {
            return Err(CoreError::Format("field points have inconsistent dimensions".into()));
        }
        if doc.layers.len() != doc.meta.horizon + 1 {
            return Err(CoreError::Format(format!(
                "field declares horizon {} but has {} layers",
                doc.meta.horizon,
                doc.layers.len()
            )));
        }
        if doc.layers.iter().any(|l| l.len() != doc.points.len()) {
            return Err(CoreError::Format("field layers do not match point count".into()));
        }
        let rows = doc.points.len();
        let mut points = Array2::zeros((rows, n));
        for (i, p) in doc.points.iter().enumerate() {
            points.row_mut(i).assign(&ArrayView1::from(&p[..]));
        }
        Ok(Self {
            meta: doc.meta,
            points,
            layers: doc.layers.into_iter().map(Array1::from_vec).collect(),
        })
    }

    pub fn write_json_path<P: AsRef<Path>>(&self, path: P) -> Result<()> {
        let mut f = BufWriter::new(File::create(path)?);
        f.write_all(self.to_json_string()?.as_bytes())?;
        f.write_all(b"\n")?;
        f.flush()?;
        Ok(())
    }

    pub fn read_json_path<P: AsRef<Path>>(path: P) -> Result<Self> {
        let mut text = String::new();
        BufReader::new(File::open(path)?).read_to_string(&mut text)?;
        Self::from_json_str(&text)
    }

    /// Flat CSV of the safety-probability layer: header
    /// `x_1,...,x_n,V0`, one row per evaluation point.
    pub fn write_csv<W: Write>(&self, mut w: W) -> Result<()> {
        let n = self.points.ncols();
        let mut header: Vec<String> = (1..=n).map(|i| format!("x_{i}")).collect();
        header.push("V0".into());
        writeln!(w, "{}", header.join(","))?;
        let layer0 = self.layer(0)?;
        let mut fields: Vec<String> = Vec::with_capacity(n + 1);
        for (i, row) in self.points.rows().into_iter().enumerate() {
            fields.clear();
            fields.extend(row.iter().map(|v| fmt_float(*v)));
            fields.push(fmt_float(layer0[i]));
            writeln!(w, "{}", fields.join(","))?;
        }
        Ok(())
    }

    pub fn write_csv_path<P: AsRef<Path>>(&self, path: P) -> Result<()> {
        let mut f = BufWriter::new(File::create(path)?);
        self.write_csv(&mut f)?;
        f.flush()?;
        Ok(())
    }
}

/// Safety probability of `field` at evaluation point `index`.
pub fn safety_probability(field: &SafetyField, index: usize) -> Result<f64> {
    field.safety_probability(index)
}

/// Row-major lattice of points over a bounded rectangle, endpoints
/// included: axis 0 varies slowest, the last axis fastest; `resolution[a]`
/// points per axis (at least 2 each).
pub fn grid_points(rect: &HyperRectangle, resolution: &[usize]) -> Result<Array2<f64>> {
    if resolution.len() != rect.dim() {
        return Err(CoreError::Dimension(format!(
            "resolution has {} axes but rectangle has {}",
            resolution.len(),
            rect.dim()
        )));
    }
    if !rect.is_bounded() {
        return Err(CoreError::Config(
            "grid generation needs a bounded rectangle; fix unbounded axes with a slice".into(),
        ));
    }
    if resolution.iter().any(|r| *r < 2) {
        return Err(CoreError::Config(
            "grid resolution must be at least 2 per axis".into(),
        ));
    }
    let total: usize = resolution.iter().product();
    if total > 50_000_000 {
        return Err(CoreError::Config(format!(
            "grid of {total} points exceeds the supported size"
        )));
    }
    let dim = rect.dim();
    let mut pts = Array2::zeros((total, dim));
    for (flat, mut row) in pts.rows_mut().into_iter().enumerate() {
        let mut rem = flat;
        for a in (0..dim).rev() {
            let r = resolution[a];
            let idx = rem % r;
            rem /= r;
            let lo = rect.lower()[a];
            let hi = rect.upper()[a];
            row[a] = lo + (hi - lo) * idx as f64 / (r - 1) as f64;
        }
    }
    Ok(pts)
}

/// Two-axis slice through a higher-dimensional box: axes `free.0` and
/// `free.1` sweep a row-major lattice (slow axis first) while every other
/// coordinate stays at its entry in `fixed`.
pub fn grid_points_slice(
    bounds_a: (f64, f64),
    bounds_b: (f64, f64),
    free: (usize, usize),
    resolution: (usize, usize),
    fixed: &[f64],
) -> Result<Array2<f64>> {
    let dim = fixed.len();
    let (fa, fb) = free;
    if fa >= dim || fb >= dim || fa == fb {
        return Err(CoreError::Config(format!(
            "slice axes ({fa}, {fb}) invalid for dimension {dim}"
        )));
    }
    if resolution.0 < 2 || resolution.1 < 2 {
        return Err(CoreError::Config(
            "grid resolution must be at least 2 per axis".into(),
        ));
    }
    if !(bounds_a.0.is_finite() && bounds_a.1.is_finite() && bounds_a.0 <= bounds_a.1)
        || !(bounds_b.0.is_finite() && bounds_b.1.is_finite() && bounds_b.0 <= bounds_b.1)
    {
        return Err(CoreError::Config("slice bounds must be finite and ordered".into()));
    }
    let total = resolution.0 * resolution.1;
    let mut pts = Array2::zeros((total, dim));
    for ia in 0..resolution.0 {
        let va = bounds_a.0 + (bounds_a.1 - bounds_a.0) * ia as f64 / (resolution.0 - 1) as f64;
        for ib in 0..resolution.1 {
            let vb =
                bounds_b.0 + (bounds_b.1 - bounds_b.0) * ib as f64 / (resolution.1 - 1) as f64;
            let mut row = pts.row_mut(ia * resolution.1 + ib);
            for (c, v) in fixed.iter().enumerate() {
                row[c] = *v;
            }
            row[fa] = va;
            row[fb] = vb;
        }
    }
    Ok(pts)
}

fn clamp_unit(v: f64, clamp: bool) -> f64 {
    if clamp {
        v.clamp(0.0, 1.0)
    } else {
        v
    }
}

/// Run the backward value recursion for `problem` with the fitted
/// `embedding`, returning all `N + 1` layers at `eval_points`.
///
/// The per-step work happens once at the sample successors: the values of
/// step `k + 1` at the successors are turned into one dual solve, which then
/// prices every successor and every evaluation point of step `k`. Evaluation
/// points are processed in chunks, each chunk's kernel (or feature) block
/// serving all layers at once.
pub fn backward_recursion(
    problem: &SafetyProblem,
    embedding: &Embedding,
    eval_points: ArrayView2<'_, f64>,
    options: &RecursionOptions,
) -> Result<SafetyField> {
    let sample = embedding.sample();
    let n = problem.state_dim();
    if sample.state_dim() != n {
        return Err(CoreError::Dimension(format!(
            "problem states are {n}-dimensional but sample has {}",
            sample.state_dim()
        )));
    }
    if eval_points.ncols() != n {
        return Err(CoreError::Dimension(format!(
            "evaluation points are {}-dimensional but problem expects {n}",
            eval_points.ncols()
        )));
    }
    if eval_points.nrows() == 0 {
        return Err(CoreError::Config("no evaluation points supplied".into()));
    }
    let policy = problem.policy();
    if policy.input_dim() != sample.input_dim() {
        return Err(CoreError::Dimension(format!(
            "policy produces {}-dimensional inputs but sample has {}",
            policy.input_dim(),
            sample.input_dim()
        )));
    }
    let horizon = problem.horizon();
    let m = sample.len();
    let q = eval_points.nrows();

    // Indicator masks at the evaluation points; a point classified inside
    // the target but outside the safe set would make the recursion
    // ill-posed, so it is rejected outright.
    let mut t_e = Array1::zeros(q);
    let mut s_e = Array1::zeros(q);
    let mut buf = vec![0.0; n];
    for (i, row) in eval_points.rows().into_iter().enumerate() {
        for (b, v) in buf.iter_mut().zip(row.iter()) {
            *b = *v;
        }
        match problem.label(&buf)? {
            HitLabel::Target => {
                if !problem.safe().contains(&buf)? {
                    return Err(CoreError::Config(format!(
                        "evaluation point {i} lies in the target set but outside the safe set"
                    )));
                }
                t_e[i] = 1.0;
            }
            HitLabel::SafeNotTarget => s_e[i] = 1.0,
            HitLabel::Unsafe => {}
        }
    }

    // Masks and policy inputs at the sample successors. All built-in
    // policies are stationary, so the successor inputs are computed once and
    // reused at every step.
    let successors = sample.successors();
    let mut t_s = Array1::zeros(m);
    let mut s_s = Array1::zeros(m);
    for (i, row) in successors.rows().into_iter().enumerate() {
        for (b, v) in buf.iter_mut().zip(row.iter()) {
            *b = *v;
        }
        match problem.label(&buf)? {
            HitLabel::Target => t_s[i] = 1.0,
            HitLabel::SafeNotTarget => s_s[i] = 1.0,
            HitLabel::Unsafe => {}
        }
    }
    let mut u_succ = Array2::zeros((m, sample.input_dim()));
    for (i, row) in successors.rows().into_iter().enumerate() {
        for (b, v) in buf.iter_mut().zip(row.iter()) {
            *b = *v;
        }
        let u = policy.eval(0, &buf)?;
        u_succ.row_mut(i).assign(&ArrayView1::from(&u[..]));
    }

    // Per-step dual coefficient vectors, index k = 0 .. horizon-1.
    let mut duals: Vec<Array1<f64>> = Vec::with_capacity(horizon);

    enum Path {
        Exact { cross: Array2<f64> },
        Rff { z_succ: Array2<f64> },
    }
    let path = match embedding {
        Embedding::Exact(e) => {
            let nsd = sample.state_dim();
            let mut succ_pairs = Array2::zeros((m, nsd + sample.input_dim()));
            succ_pairs.slice_mut(s![.., ..nsd]).assign(&successors);
            succ_pairs.slice_mut(s![.., nsd..]).assign(&u_succ);
            // cross[i, j] = k(sample pair i, successor pair j)
            let cross = gram(e.kernel(), e.pairs_view(), succ_pairs.view())?;
            Path::Exact { cross }
        }
        Embedding::Rff(e) => {
            let z_succ = e.features().feature_matrix(successors, u_succ.view())?;
            Path::Rff { z_succ }
        }
    };

    // Backward pass over the successor values.
    let mut v = t_s.clone();
    for _step in 0..horizon {
        let (dual, est) = match (&path, embedding) {
            (Path::Exact { cross }, Embedding::Exact(e)) => {
                let g = e.solve_dual(v.view())?;
                let est = cross.t().dot(&g);
                (g, est)
            }
            (Path::Rff { z_succ }, Embedding::Rff(e)) => {
                let qv = e.solve_feature_dual(v.view())?;
                let est = z_succ.dot(&qv);
                (qv, est)
            }
            _ => unreachable!("path matches embedding variant"),
        };
        duals.push(dual);
        for i in 0..m {
            v[i] = t_s[i] + s_s[i] * clamp_unit(est[i], options.clamp);
        }
    }
    // duals[j] was produced at recursion step k = horizon - 1 - j.

    // Evaluation pass: one kernel/feature block per chunk serves every layer.
    let mut layers: Vec<Array1<f64>> = (0..=horizon).map(|_| Array1::zeros(q)).collect();
    layers[horizon].assign(&t_e);
    let chunk = options.eval_chunk.max(1);
    let mut start = 0usize;
    while start < q {
        let stop = (start + chunk).min(q);
        let pts = eval_points.slice(s![start..stop, ..]);
        let rows = stop - start;
        let mut u_eval = Array2::zeros((rows, sample.input_dim()));
        for (i, row) in pts.rows().into_iter().enumerate() {
            for (b, v) in buf.iter_mut().zip(row.iter()) {
                *b = *v;
            }
            let u = policy.eval(0, &buf)?;
            u_eval.row_mut(i).assign(&ArrayView1::from(&u[..]));
        }
        // estimates[j][i] = expectation estimate for dual j at chunk row i
        let estimates: Vec<Array1<f64>> = match (&path, embedding) {
            (Path::Exact { .. }, Embedding::Exact(e)) => {
                let nsd = sample.state_dim();
                let mut qp = Array2::zeros((rows, nsd + sample.input_dim()));
                qp.slice_mut(s![.., ..nsd]).assign(&pts);
                qp.slice_mut(s![.., nsd..]).assign(&u_eval);
                let kq = gram(e.kernel(), e.pairs_view(), qp.view())?;
                duals.iter().map(|g| kq.t().dot(g)).collect()
            }
            (Path::Rff { .. }, Embedding::Rff(e)) => {
                let zq = e.features().feature_matrix(pts, u_eval.view())?;
                duals.iter().map(|g| zq.dot(g)).collect()
            }
            _ => unreachable!(),
        };
        for (j, est) in estimates.iter().enumerate() {
            let k = horizon - 1 - j;
            for i in 0..rows {
                layers[k][start + i] =
                    t_e[start + i] + s_e[start + i] * clamp_unit(est[i], options.clamp);
            }
        }
        start = stop;
    }

    for layer in &layers {
        if layer.iter().any(|v| !v.is_finite()) {
            return Err(CoreError::Numerical(
                "value recursion produced non-finite values".into(),
            ));
        }
    }

    let sigma = match embedding {
        Embedding::Exact(e) => e.block_sigmas().into_iter().map(|(_, s)| s).collect(),
        Embedding::Rff(e) => {
            let mut out: Vec<f64> = Vec::new();
            match e.features() {
                crate::rff::JointFeatures::Concatenated { basis } => {
                    for s in basis.sigmas() {
                        if out.last() != Some(s) {
                            out.push(*s);
                        }
                    }
                }
                crate::rff::JointFeatures::Tensor { basis_x, basis_u } => {
                    for b in [basis_x, basis_u] {
                        for s in b.sigmas() {
                            if out.last() != Some(s) {
                                out.push(*s);
                            }
                        }
                    }
                }
            }
            out
        }
    };
    let meta = FieldMeta {
        method: embedding.method_name().into(),
        system: sample.system.clone(),
        horizon,
        m: Some(m),
        d: embedding.feature_count(),
        lambda: Some(embedding.lambda()),
        sigma: Some(sigma),
        sample_seed: Some(sample.seed),
        basis_seed: match embedding {
            Embedding::Exact(_) => None,
            Embedding::Rff(e) => Some(e.features().seed()),
        },
        clamp: Some(options.clamp),
        disturbance: if sample.disturbance.is_empty() {
            None
        } else {
            Some(sample.disturbance.clone())
        },
        policy: if sample.policy.is_empty() {
            None
        } else {
            Some(sample.policy.clone())
        },
        ..FieldMeta::default()
    };
    Ok(SafetyField {
        meta,
        points: eval_points.to_owned(),
        layers,
    })
}
