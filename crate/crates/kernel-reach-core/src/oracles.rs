//! Reference solvers used to validate the learned estimators: a
//! grid-based dynamic-programming recursion for the double integrator with
//! Gaussian noise, and a Monte Carlo first-hitting estimator for any system.

use ndarray::prelude::*;
use rayon::prelude::*;

use crate::error::{CoreError, Result};
use crate::geometry::{HitLabel, SetPredicate};
use crate::policy::MarkovPolicy;
use crate::problem::SafetyProblem;
use crate::reachability::{FieldMeta, SafetyField};
use crate::rng::derive_stream;
use crate::systems::{Disturbance, SystemModel};

/// Standard normal CDF via the complementary error function.
fn normal_cdf(t: f64, mean: f64, std: f64) -> f64 {
    0.5 * libm::erfc((mean - t) / (std * std::f64::consts::SQRT_2))
}

/// Uniform cell grid over the bounding box of a rectangular safe set.
#[derive(Clone, Debug)]
pub struct DpGrid {
    lower: Vec<f64>,
    upper: Vec<f64>,
    resolution: Vec<usize>,
    centers: Vec<Vec<f64>>,
    edges: Vec<Vec<f64>>,
}

impl DpGrid {
    /// Build the grid from a problem whose safe set is a single bounded
    /// rectangle, with `resolution[a]` cells along axis `a`.
    pub fn from_problem(problem: &SafetyProblem, resolution: &[usize]) -> Result<Self> {
        let rect = match problem.safe() {
            SetPredicate::Rectangle(r) => r,
            SetPredicate::Product { .. } => {
                return Err(CoreError::Unsupported(
                    "grid solver needs a rectangular safe set".into(),
                ))
            }
        };
        if !rect.is_bounded() {
            return Err(CoreError::Unsupported(
                "grid solver needs a bounded safe set".into(),
            ));
        }
        if resolution.len() != rect.dim() {
            return Err(CoreError::Dimension(format!(
                "resolution has {} axes but the safe set has {}",
                resolution.len(),
                rect.dim()
            )));
        }
        if resolution.iter().any(|r| *r < 2) {
            return Err(CoreError::Config("grid needs at least 2 cells per axis".into()));
        }
        let total: usize = resolution.iter().product();
        if total > 10_000_000 {
            return Err(CoreError::Config(format!(
                "grid of {total} cells exceeds the supported size"
            )));
        }
        let dim = rect.dim();
        let (lower, upper) = (rect.lower().to_vec(), rect.upper().to_vec());
        let mut centers = Vec::with_capacity(dim);
        let mut edges = Vec::with_capacity(dim);
        for a in 0..dim {
            let r = resolution[a];
            let h = (upper[a] - lower[a]) / r as f64;
            if !(h > 0.0) {
                return Err(CoreError::Config(format!(
                    "safe set is degenerate along axis {a}"
                )));
            }
            centers.push((0..r).map(|j| lower[a] + (j as f64 + 0.5) * h).collect());
            edges.push((0..=r).map(|j| lower[a] + j as f64 * h).collect());
        }
        Ok(Self {
            lower,
            upper,
            resolution: resolution.to_vec(),
            centers,
            edges,
        })
    }

    pub fn dim(&self) -> usize {
        self.resolution.len()
    }

    pub fn resolution(&self) -> &[usize] {
        &self.resolution
    }

    pub fn lower(&self) -> &[f64] {
        &self.lower
    }

    pub fn upper(&self) -> &[f64] {
        &self.upper
    }

    /// Cell-center coordinates along one axis.
    pub fn axis_centers(&self, axis: usize) -> &[f64] {
        &self.centers[axis]
    }

    /// Number of cells.
    pub fn len(&self) -> usize {
        self.resolution.iter().product()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// All cell centers as rows, axis 0 varying slowest.
    pub fn cell_centers(&self) -> Array2<f64> {
        let total = self.len();
        let dim = self.dim();
        let mut pts = Array2::zeros((total, dim));
        for (flat, mut row) in pts.rows_mut().into_iter().enumerate() {
            let mut rem = flat;
            for a in (0..dim).rev() {
                let r = self.resolution[a];
                row[a] = self.centers[a][rem % r];
                rem /= r;
            }
        }
        pts
    }
}

/// Dynamic-programming solution: all value layers at the grid cell centers.
#[derive(Clone, Debug)]
pub struct DpSolution {
    grid: DpGrid,
    layers: Vec<Array1<f64>>,
    meta: FieldMeta,
}

impl DpSolution {
    pub fn grid(&self) -> &DpGrid {
        &self.grid
    }

    pub fn horizon(&self) -> usize {
        self.layers.len() - 1
    }

    pub fn layer(&self, k: usize) -> Result<ArrayView1<'_, f64>> {
        self.layers.get(k).map(|l| l.view()).ok_or_else(|| {
            CoreError::Config(format!(
                "layer {k} out of range; solution has {}",
                self.layers.len()
            ))
        })
    }

    /// Multilinear interpolation of layer `k` at `x`, with coordinates
    /// clamped to the center lattice so queries on or just outside the box
    /// boundary reuse the nearest cells.
    pub fn value_at(&self, k: usize, x: &[f64]) -> Result<f64> {
        if x.len() != self.grid.dim() {
            return Err(CoreError::Dimension(format!(
                "query point is {}-dimensional but the grid is {}-dimensional",
                x.len(),
                self.grid.dim()
            )));
        }
        let layer = self.layer(k)?;
        // Per-axis lower node index and interpolation fraction.
        let dim = self.grid.dim();
        let mut idx = vec![0usize; dim];
        let mut frac = vec![0.0f64; dim];
        for a in 0..dim {
            let c = &self.grid.centers[a];
            let r = c.len();
            let v = x[a].clamp(c[0], c[r - 1]);
            let h = c[1] - c[0];
            let t = (v - c[0]) / h;
            let i = (t.floor() as usize).min(r - 2);
            idx[a] = i;
            frac[a] = (t - i as f64).clamp(0.0, 1.0);
        }
        // Accumulate over the 2^dim surrounding nodes.
        let corners = 1usize << dim;
        let mut acc = 0.0;
        for corner in 0..corners {
            let mut w = 1.0;
            let mut flat = 0usize;
            for a in 0..dim {
                let hi = (corner >> a) & 1 == 1;
                w *= if hi { frac[a] } else { 1.0 - frac[a] };
                let j = idx[a] + usize::from(hi);
                flat = flat * self.grid.resolution[a] + j;
            }
            acc += w * layer[flat];
        }
        Ok(acc)
    }

    /// Export all layers at the native cell centers.
    pub fn to_field(&self) -> SafetyField {
        SafetyField {
            meta: self.meta.clone(),
            points: self.grid.cell_centers(),
            layers: self.layers.clone(),
        }
    }
}

/// Solve the first-hitting recursion on a cell grid for the supported
/// configuration: the 2-D integrator with diagonal Gaussian noise under a
/// zero or constant policy. Anything else returns `Unsupported`.
///
/// Per step, the value update at every cell is exact for the
/// piecewise-constant approximation: the transition factorizes per axis, so
/// each axis contributes a vector of Gaussian cell masses and the
/// expectation reduces to two dense matrix products per layer. Mass leaving
/// the grid leaves the safe set and contributes zero.
pub fn dp_solve(
    problem: &SafetyProblem,
    system: &SystemModel,
    resolution: &[usize],
) -> Result<DpSolution> {
    let (time_step, std) = match system {
        SystemModel::Integrator {
            time_step,
            disturbance: Disturbance::Gaussian { std },
        } => (*time_step, std.clone()),
        SystemModel::Integrator { .. } => {
            return Err(CoreError::Unsupported(
                "grid solver supports only Gaussian disturbances".into(),
            ))
        }
        _ => {
            return Err(CoreError::Unsupported(format!(
                "grid solver supports only the integrator, not {}",
                system.name()
            )))
        }
    };
    if std.iter().any(|s| *s <= 0.0) {
        return Err(CoreError::Unsupported(
            "grid solver needs a non-degenerate disturbance on every axis".into(),
        ));
    }
    if problem.state_dim() != 2 {
        return Err(CoreError::Dimension(format!(
            "integrator problems are 2-dimensional, got {}",
            problem.state_dim()
        )));
    }
    let u = match problem.policy() {
        MarkovPolicy::Zero { .. } => 0.0,
        MarkovPolicy::Constant { value } => {
            if value.len() != 1 {
                return Err(CoreError::Dimension(format!(
                    "integrator inputs are 1-dimensional, got {}",
                    value.len()
                )));
            }
            value[0]
        }
        _ => {
            return Err(CoreError::Unsupported(format!(
                "grid solver supports only the zero or constant policy, not {}",
                problem.policy().name()
            )))
        }
    };

    let grid = DpGrid::from_problem(problem, resolution)?;
    let (r0, r1) = (grid.resolution[0], grid.resolution[1]);
    let cells = r0 * r1;

    // Indicator masks at the cell centers.
    let mut tmask = Array1::zeros(cells);
    let mut smask = Array1::zeros(cells);
    {
        let centers = grid.cell_centers();
        for (r, row) in centers.rows().into_iter().enumerate() {
            match problem.label(row.as_slice().expect("contiguous row"))? {
                HitLabel::Target => tmask[r] = 1.0,
                HitLabel::SafeNotTarget => smask[r] = 1.0,
                HitLabel::Unsafe => {}
            }
        }
    }

    // Per-cell axis transition masses. For the cell with centers
    // (c0[i], c1[j]) the successor mean is
    //   axis 0: c0[i] + T c1[j] + T^2/2 u      axis 1: c1[j] + T u
    // and the noise is independent per axis, so the mass of destination
    // cell (a, b) is p1r[cell, a] * p2r[cell, b].
    let mut p1r = Array2::zeros((cells, r0));
    let mut p2r = Array2::zeros((cells, r1));
    let half_t2 = 0.5 * time_step * time_step;
    p1r.axis_iter_mut(Axis(0))
        .into_par_iter()
        .zip(p2r.axis_iter_mut(Axis(0)).into_par_iter())
        .enumerate()
        .for_each(|(r, (mut row1, mut row2))| {
            let i = r / r1;
            let j = r % r1;
            let mean0 = grid.centers[0][i] + time_step * grid.centers[1][j] + half_t2 * u;
            let mean1 = grid.centers[1][j] + time_step * u;
            let e0 = &grid.edges[0];
            let e1 = &grid.edges[1];
            let mut prev = normal_cdf(e0[0], mean0, std[0]);
            for a in 0..r0 {
                let next = normal_cdf(e0[a + 1], mean0, std[0]);
                row1[a] = (next - prev).max(0.0);
                prev = next;
            }
            let mut prev = normal_cdf(e1[0], mean1, std[1]);
            for b in 0..r1 {
                let next = normal_cdf(e1[b + 1], mean1, std[1]);
                row2[b] = (next - prev).max(0.0);
                prev = next;
            }
        });

    // Backward pass.
    let horizon = problem.horizon();
    let mut layers: Vec<Array1<f64>> = Vec::with_capacity(horizon + 1);
    let mut v = tmask.clone();
    layers.push(v.clone());
    for _ in 0..horizon {
        let v_mat = Array2::from_shape_vec((r0, r1), v.to_vec())
            .expect("cell count matches grid shape");
        // w[cell, a] = sum_b p2r[cell, b] * v[a, b]
        let w = p2r.dot(&v_mat.t());
        let ev = (&p1r * &w).sum_axis(Axis(1));
        let mut next = Array1::zeros(cells);
        for r in 0..cells {
            next[r] = tmask[r] + smask[r] * ev[r].clamp(0.0, 1.0);
        }
        v = next;
        layers.push(v.clone());
    }
    layers.reverse(); // layers[k] = V_k

    let meta = FieldMeta {
        method: "dp".into(),
        system: system.name(),
        horizon,
        time_step: Some(time_step),
        disturbance: Some(system.disturbance_name().into()),
        policy: Some(problem.policy().name()),
        grid: Some(resolution.to_vec()),
        ..FieldMeta::default()
    };
    Ok(DpSolution { grid, layers, meta })
}

/// A Monte Carlo estimate of the first-hitting safety probability.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct McEstimate {
    /// Fraction of trials that reached the target before leaving the safe set.
    pub p_hat: f64,
    pub successes: u64,
    pub trials: u64,
    /// Two-sided 99% Hoeffding radius `sqrt(ln(200) / (2 trials))`.
    pub radius99: f64,
}

/// Estimate the safety probability at `x0` by simulating `trials`
/// independent closed-loop trajectories. Each trial draws its noise from its
/// own derived stream, so the estimate is reproducible and independent of
/// thread scheduling.
pub fn mc_estimate(
    problem: &SafetyProblem,
    system: &SystemModel,
    x0: &[f64],
    trials: u64,
    seed: u64,
) -> Result<McEstimate> {
    if trials == 0 {
        return Err(CoreError::Config("Monte Carlo needs at least one trial".into()));
    }
    if x0.len() != problem.state_dim() || x0.len() != system.state_dim() {
        return Err(CoreError::Dimension(format!(
            "initial state has {} coordinates; problem expects {}, system {}",
            x0.len(),
            problem.state_dim(),
            system.state_dim()
        )));
    }
    let policy = problem.policy();
    if policy.input_dim() != system.input_dim() {
        return Err(CoreError::Dimension(format!(
            "policy produces {}-dimensional inputs but the system takes {}",
            policy.input_dim(),
            system.input_dim()
        )));
    }
    // The start state's label is trial-independent; settle it once.
    match problem.label(x0)? {
        HitLabel::Target => {
            return Ok(McEstimate {
                p_hat: 1.0,
                successes: trials,
                trials,
                radius99: hoeffding_radius99(trials),
            })
        }
        HitLabel::Unsafe => {
            return Ok(McEstimate {
                p_hat: 0.0,
                successes: 0,
                trials,
                radius99: hoeffding_radius99(trials),
            })
        }
        HitLabel::SafeNotTarget => {}
    }
    let horizon = problem.horizon();
    let successes: u64 = (0..trials)
        .into_par_iter()
        .map(|t| -> Result<u64> {
            let mut rng = derive_stream(seed, "mc/trial", t);
            let mut x = x0.to_vec();
            for k in 1..=horizon {
                let u = policy.eval(k - 1, &x)?;
                let w = system.draw_disturbance(&mut rng);
                x = system.step(&x, &u, &w)?;
                match problem.label(&x)? {
                    HitLabel::Target => return Ok(1),
                    HitLabel::Unsafe => return Ok(0),
                    HitLabel::SafeNotTarget => {}
                }
            }
            Ok(0)
        })
        .try_reduce(|| 0, |a, b| Ok(a + b))?;
    Ok(McEstimate {
        p_hat: successes as f64 / trials as f64,
        successes,
        trials,
        radius99: hoeffding_radius99(trials),
    })
}

/// Two-sided 99% Hoeffding confidence radius for a mean of `trials`
/// indicators.
pub fn hoeffding_radius99(trials: u64) -> f64 {
    (200.0f64.ln() / (2.0 * trials as f64)).sqrt()
}
