//! Deterministic Markov control policies.
//!
//! A policy maps `(step, state) -> input`. All built-in policies are
//! stationary (the map does not depend on the step), but every evaluation
//! site threads the step index through so time-varying policies can be added
//! without touching call sites.

use ndarray::prelude::*;

use crate::error::{CoreError, Result};

/// Deterministic state-feedback policy.
#[derive(Clone, Debug)]
pub enum MarkovPolicy {
    /// `u = 0` with the given input dimension.
    Zero { input_dim: usize },
    /// `u = value` regardless of state.
    Constant { value: Vec<f64> },
    /// `u = u_eq + gain * (x_ref - x)`.
    LinearFeedback {
        gain: Array2<f64>,
        u_eq: Array1<f64>,
        x_ref: Array1<f64>,
    },
    /// Applies `base` independently to each of `copies` contiguous state
    /// blocks of width `block_dim`, after subtracting that block's row of
    /// `shifts`; the per-block inputs are concatenated.
    PerBlock {
        base: Box<MarkovPolicy>,
        copies: usize,
        block_dim: usize,
        shifts: Array2<f64>,
    },
}

impl MarkovPolicy {
    /// `u = 0` in `input_dim` coordinates.
    pub fn zero(input_dim: usize) -> Self {
        MarkovPolicy::Zero { input_dim }
    }

    /// Constant input.
    pub fn constant(value: Vec<f64>) -> Self {
        MarkovPolicy::Constant { value }
    }

    /// Linear feedback `u = u_eq + gain * (x_ref - x)`.
    pub fn linear_feedback(gain: Array2<f64>, u_eq: Array1<f64>, x_ref: Array1<f64>) -> Result<Self> {
        if gain.nrows() != u_eq.len() {
            return Err(CoreError::Dimension(format!(
                "gain has {} rows but u_eq has {} entries",
                gain.nrows(),
                u_eq.len()
            )));
        }
        if gain.ncols() != x_ref.len() {
            return Err(CoreError::Dimension(format!(
                "gain has {} columns but x_ref has {} entries",
                gain.ncols(),
                x_ref.len()
            )));
        }
        Ok(MarkovPolicy::LinearFeedback { gain, u_eq, x_ref })
    }

    /// Replicate `base` over `copies` state blocks of width `block_dim`,
    /// recentering each block by its row of `shifts` (copies x block_dim).
    pub fn per_block(
        base: MarkovPolicy,
        copies: usize,
        block_dim: usize,
        shifts: Array2<f64>,
    ) -> Result<Self> {
        if copies == 0 || block_dim == 0 {
            return Err(CoreError::Config(
                "per-block policy needs positive copies and block width".into(),
            ));
        }
        if shifts.nrows() != copies || shifts.ncols() != block_dim {
            return Err(CoreError::Dimension(format!(
                "shift table is {}x{} but expected {}x{}",
                shifts.nrows(),
                shifts.ncols(),
                copies,
                block_dim
            )));
        }
        Ok(MarkovPolicy::PerBlock {
            base: Box::new(base),
            copies,
            block_dim,
            shifts,
        })
    }

    /// Dimension of the produced input vector.
    pub fn input_dim(&self) -> usize {
        match self {
            MarkovPolicy::Zero { input_dim } => *input_dim,
            MarkovPolicy::Constant { value } => value.len(),
            MarkovPolicy::LinearFeedback { gain, .. } => gain.nrows(),
            MarkovPolicy::PerBlock { base, copies, .. } => base.input_dim() * copies,
        }
    }

    /// State dimension the policy requires, when it constrains one.
    pub fn state_dim(&self) -> Option<usize> {
        match self {
            MarkovPolicy::Zero { .. } | MarkovPolicy::Constant { .. } => None,
            MarkovPolicy::LinearFeedback { gain, .. } => Some(gain.ncols()),
            MarkovPolicy::PerBlock {
                copies, block_dim, ..
            } => Some(copies * block_dim),
        }
    }

    /// All built-in policies are stationary; the recursion and samplers use
    /// this to hoist per-step recomputation.
    pub fn is_stationary(&self) -> bool {
        true
    }

    /// Evaluate the policy at step `k` and state `x`.
    pub fn eval(&self, k: usize, x: &[f64]) -> Result<Vec<f64>> {
        if let Some(d) = self.state_dim() {
            if x.len() != d {
                return Err(CoreError::Dimension(format!(
                    "policy expects state dimension {d} but got {}",
                    x.len()
                )));
            }
        }
        let mut out = vec![0.0; self.input_dim()];
        self.eval_unchecked(k, x, &mut out);
        Ok(out)
    }

    pub(crate) fn eval_unchecked(&self, k: usize, x: &[f64], out: &mut [f64]) {
        match self {
            MarkovPolicy::Zero { .. } => out.fill(0.0),
            MarkovPolicy::Constant { value } => out.copy_from_slice(value),
            MarkovPolicy::LinearFeedback { gain, u_eq, x_ref } => {
                for (r, o) in out.iter_mut().enumerate() {
                    let mut acc = u_eq[r];
                    let row = gain.row(r);
                    for c in 0..row.len() {
                        acc += row[c] * (x_ref[c] - x[c]);
                    }
                    *o = acc;
                }
            }
            MarkovPolicy::PerBlock {
                base,
                copies,
                block_dim,
                shifts,
            } => {
                let um = base.input_dim();
                let mut local = vec![0.0; *block_dim];
                for c in 0..*copies {
                    let xs = &x[c * block_dim..(c + 1) * block_dim];
                    for (j, l) in local.iter_mut().enumerate() {
                        *l = xs[j] - shifts[[c, j]];
                    }
                    base.eval_unchecked(k, &local, &mut out[c * um..(c + 1) * um]);
                }
            }
        }
    }

    /// Short human-readable name recorded in sample metadata.
    pub fn name(&self) -> String {
        match self {
            MarkovPolicy::Zero { .. } => "zero".into(),
            MarkovPolicy::Constant { .. } => "constant".into(),
            MarkovPolicy::LinearFeedback { .. } => "linear-feedback".into(),
            MarkovPolicy::PerBlock { base, copies, .. } => {
                format!("per-block({}x{})", base.name(), copies)
            }
        }
    }
}
