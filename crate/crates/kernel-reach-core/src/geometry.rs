//! Axis-aligned sets, membership tests, and state classification labels.
//!
//! Safe and target sets are described by [`SetPredicate`]: either a single
//! [`HyperRectangle`] or a product of rectangles acting on disjoint
//! coordinate blocks (coordinates not covered by any block are
//! unconstrained). Bounds may be open or closed per side, and axes may be
//! unbounded by using `±inf`.

use crate::error::{CoreError, Result};

/// Axis-aligned box `{x : l_i (<|<=) x_i (<|<=) u_i}` with per-side
/// open/closed flags. An infinite bound leaves that side unconstrained.
#[derive(Clone, Debug, PartialEq)]
pub struct HyperRectangle {
    lower: Vec<f64>,
    upper: Vec<f64>,
    lower_open: Vec<bool>,
    upper_open: Vec<bool>,
}

impl HyperRectangle {
    /// Build a rectangle with explicit open/closed flags per side.
    pub fn new(
        lower: Vec<f64>,
        upper: Vec<f64>,
        lower_open: Vec<bool>,
        upper_open: Vec<bool>,
    ) -> Result<Self> {
        let d = lower.len();
        if d == 0 {
            return Err(CoreError::Config(
                "rectangle must have at least one axis".into(),
            ));
        }
        if upper.len() != d || lower_open.len() != d || upper_open.len() != d {
            return Err(CoreError::Dimension(format!(
                "rectangle bound lengths disagree: lower={}, upper={}, lower_open={}, upper_open={}",
                d,
                upper.len(),
                lower_open.len(),
                upper_open.len()
            )));
        }
        for i in 0..d {
            if lower[i].is_nan() || upper[i].is_nan() {
                return Err(CoreError::Config(format!("axis {i}: bound is NaN")));
            }
            if lower[i] > upper[i] {
                return Err(CoreError::Config(format!(
                    "axis {i}: lower bound {} exceeds upper bound {}",
                    lower[i], upper[i]
                )));
            }
            if lower[i] == f64::INFINITY || upper[i] == f64::NEG_INFINITY {
                return Err(CoreError::Config(format!("axis {i}: empty interval")));
            }
        }
        Ok(Self {
            lower,
            upper,
            lower_open,
            upper_open,
        })
    }

    /// Build a rectangle with all bounds closed.
    pub fn closed(lower: Vec<f64>, upper: Vec<f64>) -> Result<Self> {
        let d = lower.len();
        Self::new(lower, upper, vec![false; d], vec![false; d])
    }

    /// Number of axes.
    pub fn dim(&self) -> usize {
        self.lower.len()
    }

    pub fn lower(&self) -> &[f64] {
        &self.lower
    }

    pub fn upper(&self) -> &[f64] {
        &self.upper
    }

    pub fn lower_open(&self) -> &[bool] {
        &self.lower_open
    }

    pub fn upper_open(&self) -> &[bool] {
        &self.upper_open
    }

    /// True when every axis has finite bounds on both sides.
    pub fn is_bounded(&self) -> bool {
        self.lower.iter().all(|v| v.is_finite()) && self.upper.iter().all(|v| v.is_finite())
    }

    pub(crate) fn contains_unchecked(&self, x: &[f64]) -> bool {
        for i in 0..self.lower.len() {
            let v = x[i];
            let lo = self.lower[i];
            if lo.is_finite() {
                let ok = if self.lower_open[i] { v > lo } else { v >= lo };
                if !ok {
                    return false;
                }
            }
            let hi = self.upper[i];
            if hi.is_finite() {
                let ok = if self.upper_open[i] { v < hi } else { v <= hi };
                if !ok {
                    return false;
                }
            }
            if v.is_nan() {
                return false;
            }
        }
        true
    }

    /// Membership test; errors on dimension mismatch.
    pub fn contains(&self, x: &[f64]) -> Result<bool> {
        if x.len() != self.dim() {
            return Err(CoreError::Dimension(format!(
                "point has {} coordinates but rectangle has {} axes",
                x.len(),
                self.dim()
            )));
        }
        Ok(self.contains_unchecked(x))
    }

    /// True when every point of `inner` also lies in `self`, respecting
    /// open/closed flags exactly. Dimension mismatch yields `false`.
    pub fn contains_rect(&self, inner: &Self) -> bool {
        if inner.dim() != self.dim() {
            return false;
        }
        for i in 0..self.dim() {
            let (sl, so) = (self.lower[i], self.lower_open[i]);
            let (il, io) = (inner.lower[i], inner.lower_open[i]);
            if sl.is_finite() {
                if il < sl {
                    return false;
                }
                // Same finite endpoint: an open outer bound excludes the
                // endpoint, so a closed inner bound would leak out.
                if il == sl && so && !io {
                    return false;
                }
            }
            let (su, so) = (self.upper[i], self.upper_open[i]);
            let (iu, io) = (inner.upper[i], inner.upper_open[i]);
            if su.is_finite() {
                if iu > su {
                    return false;
                }
                if iu == su && so && !io {
                    return false;
                }
            }
        }
        true
    }
}

/// Membership predicate for safe/target sets.
#[derive(Clone, Debug, PartialEq)]
pub enum SetPredicate {
    /// A single axis-aligned rectangle over the full state vector.
    Rectangle(HyperRectangle),
    /// A product of rectangles over disjoint coordinate blocks of a
    /// `dim`-dimensional state; coordinates outside every block are
    /// unconstrained. Blocks are kept sorted by offset.
    Product {
        dim: usize,
        blocks: Vec<(usize, HyperRectangle)>,
    },
}

impl SetPredicate {
    pub fn rectangle(rect: HyperRectangle) -> Self {
        SetPredicate::Rectangle(rect)
    }

    /// Build a product predicate from `(offset, rectangle)` blocks. Blocks
    /// must fit inside `dim` coordinates and must not overlap.
    pub fn product(dim: usize, mut blocks: Vec<(usize, HyperRectangle)>) -> Result<Self> {
        if dim == 0 {
            return Err(CoreError::Config("state dimension must be positive".into()));
        }
        if blocks.is_empty() {
            return Err(CoreError::Config(
                "product predicate needs at least one block".into(),
            ));
        }
        blocks.sort_by_key(|(off, _)| *off);
        let mut prev_end = 0usize;
        for (idx, (off, rect)) in blocks.iter().enumerate() {
            if idx > 0 && *off < prev_end {
                return Err(CoreError::Config(format!(
                    "product blocks overlap at offset {off}"
                )));
            }
            let end = off + rect.dim();
            if end > dim {
                return Err(CoreError::Dimension(format!(
                    "block at offset {off} with {} axes exceeds state dimension {dim}",
                    rect.dim()
                )));
            }
            prev_end = end;
        }
        Ok(SetPredicate::Product { dim, blocks })
    }

    /// State dimension the predicate applies to.
    pub fn dim(&self) -> usize {
        match self {
            SetPredicate::Rectangle(r) => r.dim(),
            SetPredicate::Product { dim, .. } => *dim,
        }
    }

    pub(crate) fn contains_unchecked(&self, x: &[f64]) -> bool {
        match self {
            SetPredicate::Rectangle(r) => r.contains_unchecked(x),
            SetPredicate::Product { blocks, .. } => blocks
                .iter()
                .all(|(off, rect)| rect.contains_unchecked(&x[*off..*off + rect.dim()])),
        }
    }

    /// Membership test; errors on dimension mismatch.
    pub fn contains(&self, x: &[f64]) -> Result<bool> {
        if x.len() != self.dim() {
            return Err(CoreError::Dimension(format!(
                "point has {} coordinates but predicate expects {}",
                x.len(),
                self.dim()
            )));
        }
        Ok(self.contains_unchecked(x))
    }

    /// Indicator function: 1.0 inside, 0.0 outside.
    pub fn indicator(&self, x: &[f64]) -> Result<f64> {
        Ok(if self.contains(x)? { 1.0 } else { 0.0 })
    }
}

/// Indicator of `set` evaluated at `x` (1.0 inside, 0.0 outside).
pub fn indicator(set: &SetPredicate, x: &[f64]) -> Result<f64> {
    set.indicator(x)
}

/// Classification of a single state against a safety problem's sets.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum HitLabel {
    /// The state lies in the target set.
    Target,
    /// The state lies in the safe set but not the target set.
    SafeNotTarget,
    /// The state lies outside the safe set.
    Unsafe,
}
