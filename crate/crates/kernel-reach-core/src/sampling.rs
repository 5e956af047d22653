//! Generation of transition datasets from a system under a policy.
//!
//! Each dataset row is produced independently: draw an initial state from
//! the plan, evaluate the policy, take one noisy step. Rows use per-index
//! derived random streams, so output is identical for any thread count and
//! there is no trajectory reuse between rows.

use ndarray::prelude::*;
use rand::Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;

use crate::error::{CoreError, Result};
use crate::geometry::HyperRectangle;
use crate::policy::MarkovPolicy;
use crate::rng::derive_stream;
use crate::sample::TransitionSample;
use crate::systems::SystemModel;

/// Initial-state distribution for dataset generation.
#[derive(Clone, Debug)]
pub enum SamplingPlan {
    /// Uniform over a bounded rectangle.
    UniformOverBox(HyperRectangle),
    /// Exactly these points, one row each (sample size must match).
    FixedList(Array2<f64>),
    /// Gaussian around a center with diagonal covariance.
    GaussianAround { center: Vec<f64>, cov_diag: Vec<f64> },
}

impl SamplingPlan {
    pub fn uniform_over_box(rect: HyperRectangle) -> Self {
        SamplingPlan::UniformOverBox(rect)
    }

    pub fn fixed_list(points: Array2<f64>) -> Self {
        SamplingPlan::FixedList(points)
    }

    /// Isotropic Gaussian around `center` with per-axis variance `variance`.
    pub fn gaussian_around(center: Vec<f64>, variance: f64) -> Result<Self> {
        if !(variance.is_finite() && variance >= 0.0) {
            return Err(CoreError::Config(format!(
                "initial-state variance must be non-negative, got {variance}"
            )));
        }
        let cov_diag = vec![variance; center.len()];
        Ok(SamplingPlan::GaussianAround { center, cov_diag })
    }

    /// Name recorded in run metadata.
    pub fn name(&self) -> &'static str {
        match self {
            SamplingPlan::UniformOverBox(_) => "uniform-box",
            SamplingPlan::FixedList(_) => "fixed-list",
            SamplingPlan::GaussianAround { .. } => "gaussian-around",
        }
    }

    fn state_dim(&self) -> usize {
        match self {
            SamplingPlan::UniformOverBox(r) => r.dim(),
            SamplingPlan::FixedList(pts) => pts.ncols(),
            SamplingPlan::GaussianAround { center, .. } => center.len(),
        }
    }

    fn validate(&self, system: &SystemModel, m: usize) -> Result<()> {
        if self.state_dim() != system.state_dim() {
            return Err(CoreError::Dimension(format!(
                "sampling plan is {}-dimensional but system state is {}-dimensional",
                self.state_dim(),
                system.state_dim()
            )));
        }
        match self {
            SamplingPlan::UniformOverBox(r) => {
                if !r.is_bounded() {
                    return Err(CoreError::Config(
                        "uniform sampling needs a bounded box".into(),
                    ));
                }
            }
            SamplingPlan::FixedList(pts) => {
                if pts.nrows() != m {
                    return Err(CoreError::Config(format!(
                        "fixed list has {} points but sample size is {m}",
                        pts.nrows()
                    )));
                }
                if pts.iter().any(|v| !v.is_finite()) {
                    return Err(CoreError::Config("fixed list contains non-finite points".into()));
                }
            }
            SamplingPlan::GaussianAround { center, cov_diag } => {
                if center.len() != cov_diag.len() {
                    return Err(CoreError::Dimension(format!(
                        "center has {} coordinates but covariance diagonal has {}",
                        center.len(),
                        cov_diag.len()
                    )));
                }
                if cov_diag.iter().any(|v| !(v.is_finite() && *v >= 0.0)) {
                    return Err(CoreError::Config(
                        "initial-state covariance entries must be non-negative".into(),
                    ));
                }
            }
        }
        Ok(())
    }

    fn draw_initial<R: Rng + ?Sized>(&self, row: usize, rng: &mut R) -> Vec<f64> {
        match self {
            SamplingPlan::UniformOverBox(r) => r
                .lower()
                .iter()
                .zip(r.upper())
                .map(|(lo, hi)| lo + (hi - lo) * rng.gen::<f64>())
                .collect(),
            SamplingPlan::FixedList(pts) => pts.row(row).to_vec(),
            SamplingPlan::GaussianAround { center, cov_diag } => center
                .iter()
                .zip(cov_diag)
                .map(|(c, v)| {
                    let z: f64 = rng.sample(StandardNormal);
                    c + v.sqrt() * z
                })
                .collect(),
        }
    }
}

/// Draw `m` independent transitions: initial states from `plan`, inputs
/// from `policy`, successors from one noisy system step each. Fully
/// determined by `seed`; rows are generated in parallel with per-row
/// derived streams and placed by row index.
pub fn generate_sample(
    system: &SystemModel,
    policy: &MarkovPolicy,
    plan: &SamplingPlan,
    m: usize,
    seed: u64,
) -> Result<TransitionSample> {
    if m == 0 {
        return Err(CoreError::Config("sample size must be at least 1".into()));
    }
    plan.validate(system, m)?;
    if policy.input_dim() != system.input_dim() {
        return Err(CoreError::Dimension(format!(
            "policy produces {}-dimensional inputs but system expects {}",
            policy.input_dim(),
            system.input_dim()
        )));
    }
    if let Some(d) = policy.state_dim() {
        if d != system.state_dim() {
            return Err(CoreError::Dimension(format!(
                "policy expects {}-dimensional states but system has {}",
                d,
                system.state_dim()
            )));
        }
    }
    let n = system.state_dim();
    let mu = system.input_dim();
    let rows: Result<Vec<(Vec<f64>, Vec<f64>, Vec<f64>)>> = (0..m)
        .into_par_iter()
        .map(|i| {
            let mut init_rng = derive_stream(seed, "sample/init", i as u64);
            let x = plan.draw_initial(i, &mut init_rng);
            let u = policy.eval(0, &x)?;
            let mut dist_rng = derive_stream(seed, "sample/disturbance", i as u64);
            let w = system.draw_disturbance(&mut dist_rng);
            let y = system.step(&x, &u, &w)?;
            Ok((x, u, y))
        })
        .collect();
    let rows = rows?;
    let mut xs = Array2::zeros((m, n));
    let mut us = Array2::zeros((m, mu));
    let mut ys = Array2::zeros((m, n));
    for (i, (x, u, y)) in rows.into_iter().enumerate() {
        xs.row_mut(i).assign(&ArrayView1::from(&x[..]));
        us.row_mut(i).assign(&ArrayView1::from(&u[..]));
        ys.row_mut(i).assign(&ArrayView1::from(&y[..]));
    }
    Ok(TransitionSample::new(xs, us, ys, seed, system.name())?
        .with_metadata(system.disturbance_name(), policy.name()))
}

/// Default integrator plan: uniform over the benchmark safe box.
pub fn default_integrator_plan() -> SamplingPlan {
    SamplingPlan::UniformOverBox(
        HyperRectangle::closed(vec![-1.0, -1.0], vec![1.0, 1.0]).expect("static bounds"),
    )
}

/// Default quadrotor plan: Gaussian around the hover reference with
/// covariance `0.25 I` (the envelope's velocity axes are unbounded, so a
/// uniform plan is not well-defined).
pub fn default_quadrotor_plan() -> SamplingPlan {
    SamplingPlan::GaussianAround {
        center: vec![0.0, 0.0, 1.0, 0.0, 0.0, 0.0],
        cov_diag: vec![0.25; 6],
    }
}
