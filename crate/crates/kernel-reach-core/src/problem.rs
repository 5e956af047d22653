//! Safety problem definition: safe set, target set, horizon, and policy.

use rand::Rng;
use rand_distr::StandardNormal;

use crate::error::{CoreError, Result};
use crate::geometry::{HitLabel, HyperRectangle, SetPredicate};
use crate::policy::MarkovPolicy;
use crate::rng::derive_stream;

/// Number of random interior points used when set inclusion cannot be
/// decided exactly from the rectangle structure.
const SUBSET_SPOT_CHECK_POINTS: usize = 4096;

/// First-hitting-time safety problem: reach the target within the horizon
/// while remaining in the safe set, under the given policy.
#[derive(Clone, Debug)]
pub struct SafetyProblem {
    safe: SetPredicate,
    target: SetPredicate,
    horizon: usize,
    policy: MarkovPolicy,
}

impl SafetyProblem {
    /// Build a problem, verifying that the target set is contained in the
    /// safe set. For rectangle-vs-rectangle (and structurally aligned
    /// product) sets containment is checked exactly from the bounds;
    /// otherwise a deterministic spot check over random interior points of
    /// the target is used.
    pub fn new(
        safe: SetPredicate,
        target: SetPredicate,
        horizon: usize,
        policy: MarkovPolicy,
    ) -> Result<Self> {
        if safe.dim() != target.dim() {
            return Err(CoreError::Dimension(format!(
                "safe set has dimension {} but target set has {}",
                safe.dim(),
                target.dim()
            )));
        }
        if let Some(d) = policy.state_dim() {
            if d != safe.dim() {
                return Err(CoreError::Dimension(format!(
                    "policy expects state dimension {d} but sets have {}",
                    safe.dim()
                )));
            }
        }
        check_target_inside_safe(&safe, &target)?;
        Ok(Self {
            safe,
            target,
            horizon,
            policy,
        })
    }

    pub fn safe(&self) -> &SetPredicate {
        &self.safe
    }

    pub fn target(&self) -> &SetPredicate {
        &self.target
    }

    pub fn horizon(&self) -> usize {
        self.horizon
    }

    pub fn policy(&self) -> &MarkovPolicy {
        &self.policy
    }

    pub fn state_dim(&self) -> usize {
        self.safe.dim()
    }

    /// Classify a state: target first, then safe-not-target, else unsafe.
    pub fn label(&self, x: &[f64]) -> Result<HitLabel> {
        if x.len() != self.state_dim() {
            return Err(CoreError::Dimension(format!(
                "state has {} coordinates but problem expects {}",
                x.len(),
                self.state_dim()
            )));
        }
        Ok(self.label_unchecked(x))
    }

    pub(crate) fn label_unchecked(&self, x: &[f64]) -> HitLabel {
        if self.target.contains_unchecked(x) {
            HitLabel::Target
        } else if self.safe.contains_unchecked(x) {
            HitLabel::SafeNotTarget
        } else {
            HitLabel::Unsafe
        }
    }
}

/// Classify a single state against the problem's sets: `Target` if it lies
/// in the target set, `SafeNotTarget` if it lies in the safe set only, and
/// `Unsafe` otherwise.
pub fn first_hit_label(problem: &SafetyProblem, x: &[f64]) -> Result<HitLabel> {
    problem.label(x)
}

fn check_target_inside_safe(safe: &SetPredicate, target: &SetPredicate) -> Result<()> {
    match (target, safe) {
        (SetPredicate::Rectangle(t), SetPredicate::Rectangle(k)) => {
            if k.contains_rect(t) {
                Ok(())
            } else {
                Err(CoreError::Config(
                    "target set is not contained in the safe set".into(),
                ))
            }
        }
        (
            SetPredicate::Product { blocks: tb, .. },
            SetPredicate::Product { blocks: kb, .. },
        ) if aligned_blocks(tb, kb) => {
            for ((_, t), (_, k)) in tb.iter().zip(kb.iter()) {
                if !k.contains_rect(t) {
                    return Err(CoreError::Config(
                        "target set is not contained in the safe set".into(),
                    ));
                }
            }
            Ok(())
        }
        _ => spot_check_subset(safe, target),
    }
}

fn aligned_blocks(a: &[(usize, HyperRectangle)], b: &[(usize, HyperRectangle)]) -> bool {
    a.len() == b.len()
        && a.iter()
            .zip(b.iter())
            .all(|((oa, ra), (ob, rb))| oa == ob && ra.dim() == rb.dim())
}

/// Deterministic randomized containment check: draw points inside the
/// target and require each of them to lie in the safe set.
fn spot_check_subset(safe: &SetPredicate, target: &SetPredicate) -> Result<()> {
    let mut rng = derive_stream(0x7375_6273_6574, "problem/subset-spot-check", 0);
    let dim = target.dim();
    for _ in 0..SUBSET_SPOT_CHECK_POINTS {
        let mut x = vec![0.0; dim];
        // Default for coordinates no block constrains.
        for v in x.iter_mut() {
            *v = 10.0 * rng.sample::<f64, _>(StandardNormal);
        }
        match target {
            SetPredicate::Rectangle(r) => fill_in_rect(&mut rng, r, &mut x, 0),
            SetPredicate::Product { blocks, .. } => {
                for (off, r) in blocks {
                    fill_in_rect(&mut rng, r, &mut x, *off);
                }
            }
        }
        // Draws on open bounds are measure-zero but re-check anyway.
        if target.contains_unchecked(&x) && !safe.contains_unchecked(&x) {
            return Err(CoreError::Config(
                "target set is not contained in the safe set".into(),
            ));
        }
    }
    Ok(())
}

fn fill_in_rect(rng: &mut impl Rng, rect: &HyperRectangle, x: &mut [f64], offset: usize) {
    for i in 0..rect.dim() {
        let lo = rect.lower()[i];
        let hi = rect.upper()[i];
        x[offset + i] = match (lo.is_finite(), hi.is_finite()) {
            (true, true) => lo + (hi - lo) * rng.gen::<f64>(),
            (true, false) => lo + rng.sample::<f64, _>(StandardNormal).abs() * (1.0 + lo.abs()),
            (false, true) => hi - rng.sample::<f64, _>(StandardNormal).abs() * (1.0 + hi.abs()),
            (false, false) => 10.0 * rng.sample::<f64, _>(StandardNormal),
        };
    }
}
