//! Benchmark dynamical systems, disturbance models, and trajectory
//! simulation: the data generators for everything else.
//!
//! Three systems are provided: a 2-D double integrator, a 6-D planar
//! quadrotor (forward-Euler discretized), and a block-diagonal repetition of
//! a base system into many dynamically decoupled copies.

use ndarray::prelude::*;
use ndarray_linalg::Eig;
use rand::Rng;
use rand_distr::{Beta, Distribution, Exp, StandardNormal};

use crate::error::{CoreError, Result};
use crate::geometry::{HyperRectangle, SetPredicate};
use crate::policy::MarkovPolicy;

/// Additive disturbance models. Gaussian noise uses a diagonal covariance
/// (the benchmark suites use isotropic noise); beta and exponential noise
/// are drawn independently per coordinate and multiplied by `scale`.
#[derive(Clone, Debug)]
pub enum Disturbance {
    Gaussian { std: Vec<f64> },
    ScaledBeta { alpha: f64, beta: f64, scale: f64, dim: usize },
    ScaledExponential { alpha: f64, scale: f64, dim: usize },
}

impl Disturbance {
    /// Zero-mean Gaussian with diagonal covariance given by `variances`.
    pub fn gaussian(variances: &[f64]) -> Result<Self> {
        if variances.is_empty() {
            return Err(CoreError::Config("disturbance dimension must be positive".into()));
        }
        let mut std = Vec::with_capacity(variances.len());
        for &v in variances {
            if !(v.is_finite() && v >= 0.0) {
                return Err(CoreError::Config(format!(
                    "Gaussian variance must be non-negative and finite, got {v}"
                )));
            }
            std.push(v.sqrt());
        }
        Ok(Disturbance::Gaussian { std })
    }

    /// Isotropic zero-mean Gaussian with the given per-axis variance.
    pub fn isotropic_gaussian(dim: usize, variance: f64) -> Result<Self> {
        if dim == 0 {
            return Err(CoreError::Config("disturbance dimension must be positive".into()));
        }
        Self::gaussian(&vec![variance; dim])
    }

    /// Per-coordinate `scale * Beta(alpha, beta)` draws (support `[0, scale]`).
    pub fn scaled_beta(alpha: f64, beta: f64, scale: f64, dim: usize) -> Result<Self> {
        if !(alpha > 0.0 && beta > 0.0 && alpha.is_finite() && beta.is_finite()) {
            return Err(CoreError::Config(format!(
                "beta shape parameters must be positive, got ({alpha}, {beta})"
            )));
        }
        if !(scale.is_finite() && scale > 0.0) || dim == 0 {
            return Err(CoreError::Config(
                "beta disturbance needs positive scale and dimension".into(),
            ));
        }
        Ok(Disturbance::ScaledBeta { alpha, beta, scale, dim })
    }

    /// Per-coordinate `scale * Exp(alpha)` draws (rate `alpha`, support `[0, inf)`).
    pub fn scaled_exponential(alpha: f64, scale: f64, dim: usize) -> Result<Self> {
        if !(alpha > 0.0 && alpha.is_finite()) {
            return Err(CoreError::Config(format!(
                "exponential rate must be positive, got {alpha}"
            )));
        }
        if !(scale.is_finite() && scale > 0.0) || dim == 0 {
            return Err(CoreError::Config(
                "exponential disturbance needs positive scale and dimension".into(),
            ));
        }
        Ok(Disturbance::ScaledExponential { alpha, scale, dim })
    }

    pub fn dim(&self) -> usize {
        match self {
            Disturbance::Gaussian { std } => std.len(),
            Disturbance::ScaledBeta { dim, .. } => *dim,
            Disturbance::ScaledExponential { dim, .. } => *dim,
        }
    }

    /// Name recorded in sample metadata.
    pub fn name(&self) -> &'static str {
        match self {
            Disturbance::Gaussian { .. } => "gaussian",
            Disturbance::ScaledBeta { .. } => "beta",
            Disturbance::ScaledExponential { .. } => "exponential",
        }
    }

    /// Draw one disturbance vector.
    pub fn draw<R: Rng + ?Sized>(&self, rng: &mut R) -> Vec<f64> {
        match self {
            Disturbance::Gaussian { std } => std
                .iter()
                .map(|&s| {
                    let z: f64 = rng.sample(StandardNormal);
                    s * z
                })
                .collect(),
            Disturbance::ScaledBeta { alpha, beta, scale, dim } => {
                let dist = Beta::new(*alpha, *beta).expect("validated at construction");
                (0..*dim).map(|_| scale * dist.sample(rng)).collect()
            }
            Disturbance::ScaledExponential { alpha, scale, dim } => {
                let dist = Exp::new(*alpha).expect("validated at construction");
                (0..*dim).map(|_| scale * dist.sample(rng)).collect()
            }
        }
    }
}

/// Draw one disturbance vector from `d` using `rng`.
pub fn draw_disturbance<R: Rng + ?Sized>(d: &Disturbance, rng: &mut R) -> Vec<f64> {
    d.draw(rng)
}

/// Planar quadrotor physical constants.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct QuadrotorParams {
    pub inertia: f64,
    pub arm: f64,
    pub mass: f64,
    pub gravity: f64,
    pub time_step: f64,
}

impl Default for QuadrotorParams {
    fn default() -> Self {
        Self {
            inertia: 2.0,
            arm: 2.0,
            mass: 5.0,
            gravity: 9.8,
            time_step: 0.25,
        }
    }
}

impl QuadrotorParams {
    /// Per-rotor hover thrust `m g / 2`.
    pub fn hover_thrust(&self) -> f64 {
        self.mass * self.gravity / 2.0
    }
}

/// A benchmark system: deterministic step map plus a disturbance model.
#[derive(Clone, Debug)]
pub enum SystemModel {
    /// 2-D double integrator `x+ = [1 T; 0 1] x + [T^2/2; T] u + w`.
    Integrator {
        time_step: f64,
        disturbance: Disturbance,
    },
    /// 6-D planar quadrotor, forward-Euler discretized, state
    /// `z = (x, xdot, y, ydot, theta, thetadot)`, inputs the two rotor
    /// thrusts; the disturbance is added to all six coordinates after the
    /// Euler update.
    Quadrotor {
        params: QuadrotorParams,
        disturbance: Disturbance,
    },
    /// Block-diagonal repetition of `copies` independent instances of the
    /// base system; per-copy disturbances are drawn independently.
    Repeated {
        base: Box<SystemModel>,
        copies: usize,
    },
}

impl SystemModel {
    pub fn integrator(time_step: f64, disturbance: Disturbance) -> Result<Self> {
        if !(time_step.is_finite() && time_step > 0.0) {
            return Err(CoreError::Config(format!(
                "sampling time must be positive, got {time_step}"
            )));
        }
        if disturbance.dim() != 2 {
            return Err(CoreError::Dimension(format!(
                "integrator disturbance must be 2-dimensional, got {}",
                disturbance.dim()
            )));
        }
        Ok(SystemModel::Integrator { time_step, disturbance })
    }

    pub fn quadrotor(params: QuadrotorParams, disturbance: Disturbance) -> Result<Self> {
        if disturbance.dim() != 6 {
            return Err(CoreError::Dimension(format!(
                "quadrotor disturbance must be 6-dimensional, got {}",
                disturbance.dim()
            )));
        }
        Ok(SystemModel::Quadrotor { params, disturbance })
    }

    pub fn state_dim(&self) -> usize {
        match self {
            SystemModel::Integrator { .. } => 2,
            SystemModel::Quadrotor { .. } => 6,
            SystemModel::Repeated { base, copies } => base.state_dim() * copies,
        }
    }

    pub fn input_dim(&self) -> usize {
        match self {
            SystemModel::Integrator { .. } => 1,
            SystemModel::Quadrotor { .. } => 2,
            SystemModel::Repeated { base, copies } => base.input_dim() * copies,
        }
    }

    pub fn time_step(&self) -> f64 {
        match self {
            SystemModel::Integrator { time_step, .. } => *time_step,
            SystemModel::Quadrotor { params, .. } => params.time_step,
            SystemModel::Repeated { base, .. } => base.time_step(),
        }
    }

    pub fn name(&self) -> String {
        match self {
            SystemModel::Integrator { .. } => "integrator".into(),
            SystemModel::Quadrotor { .. } => "quadrotor".into(),
            SystemModel::Repeated { base, copies } => format!("{}-x{}", base.name(), copies),
        }
    }

    pub fn disturbance_name(&self) -> &'static str {
        match self {
            SystemModel::Integrator { disturbance, .. } => disturbance.name(),
            SystemModel::Quadrotor { disturbance, .. } => disturbance.name(),
            SystemModel::Repeated { base, .. } => base.disturbance_name(),
        }
    }

    /// Deterministic step map `(x, u, w) -> x+`.
    pub fn step(&self, x: &[f64], u: &[f64], w: &[f64]) -> Result<Vec<f64>> {
        let (n, m) = (self.state_dim(), self.input_dim());
        if x.len() != n || u.len() != m || w.len() != n {
            return Err(CoreError::Dimension(format!(
                "step arguments have lengths ({}, {}, {}) but system needs ({n}, {m}, {n})",
                x.len(),
                u.len(),
                w.len()
            )));
        }
        match self {
            SystemModel::Integrator { time_step, .. } => {
                integrator_step(x, u, w, *time_step)
            }
            SystemModel::Quadrotor { params, .. } => quadrotor_step(x, u, w, params),
            SystemModel::Repeated { base, copies } => {
                let (bn, bm) = (base.state_dim(), base.input_dim());
                let mut out = Vec::with_capacity(n);
                for c in 0..*copies {
                    let xs = &x[c * bn..(c + 1) * bn];
                    let us = &u[c * bm..(c + 1) * bm];
                    let ws = &w[c * bn..(c + 1) * bn];
                    out.extend(base.step(xs, us, ws)?);
                }
                Ok(out)
            }
        }
    }

    /// Draw a full-state disturbance vector (independent per-copy draws for
    /// repeated systems).
    pub fn draw_disturbance<R: Rng + ?Sized>(&self, rng: &mut R) -> Vec<f64> {
        match self {
            SystemModel::Integrator { disturbance, .. } => disturbance.draw(rng),
            SystemModel::Quadrotor { disturbance, .. } => disturbance.draw(rng),
            SystemModel::Repeated { base, copies } => {
                let mut out = Vec::with_capacity(self.state_dim());
                for _ in 0..*copies {
                    out.extend(base.draw_disturbance(rng));
                }
                out
            }
        }
    }
}

/// One integrator step `x+ = [1 T; 0 1] x + [T^2/2; T] u + w`.
pub fn integrator_step(x: &[f64], u: &[f64], w: &[f64], time_step: f64) -> Result<Vec<f64>> {
    if x.len() != 2 || u.len() != 1 || w.len() != 2 {
        return Err(CoreError::Dimension(format!(
            "integrator step needs lengths (2, 1, 2), got ({}, {}, {})",
            x.len(),
            u.len(),
            w.len()
        )));
    }
    let t = time_step;
    Ok(vec![
        x[0] + t * x[1] + 0.5 * t * t * u[0] + w[0],
        x[1] + t * u[0] + w[1],
    ])
}

/// One forward-Euler quadrotor step: integrate
/// `zdot = (xdot, -(u1+u2) sin(theta)/m, ydot, ((u1+u2) cos(theta) - m g)/m,
/// thetadot, r (u1-u2)/I)` for one sampling interval, then add `w` to all
/// six coordinates.
pub fn quadrotor_step(z: &[f64], u: &[f64], w: &[f64], params: &QuadrotorParams) -> Result<Vec<f64>> {
    if z.len() != 6 || u.len() != 2 || w.len() != 6 {
        return Err(CoreError::Dimension(format!(
            "quadrotor step needs lengths (6, 2, 6), got ({}, {}, {})",
            z.len(),
            u.len(),
            w.len()
        )));
    }
    let (t, m, g) = (params.time_step, params.mass, params.gravity);
    let thrust = u[0] + u[1];
    let torque = params.arm * (u[0] - u[1]) / params.inertia;
    let theta = z[4];
    let deriv = [
        z[1],
        -thrust * theta.sin() / m,
        z[3],
        (thrust * theta.cos() - m * g) / m,
        z[5],
        torque,
    ];
    Ok((0..6).map(|i| z[i] + t * deriv[i] + w[i]).collect())
}

/// Compose `copies` independent instances of `base` into one block-diagonal
/// system.
pub fn repeated_system(base: SystemModel, copies: usize) -> Result<SystemModel> {
    if copies == 0 {
        return Err(CoreError::Config("repeated system needs at least one copy".into()));
    }
    Ok(SystemModel::Repeated {
        base: Box::new(base),
        copies,
    })
}

/// Simulate `steps` transitions from `x0` under `policy`, drawing a fresh
/// disturbance per step; returns the trajectory `x_0 .. x_steps`.
pub fn simulate<R: Rng + ?Sized>(
    system: &SystemModel,
    policy: &MarkovPolicy,
    x0: &[f64],
    steps: usize,
    rng: &mut R,
) -> Result<Vec<Vec<f64>>> {
    if x0.len() != system.state_dim() {
        return Err(CoreError::Dimension(format!(
            "initial state has {} coordinates but system has {}",
            x0.len(),
            system.state_dim()
        )));
    }
    let mut traj = Vec::with_capacity(steps + 1);
    traj.push(x0.to_vec());
    for k in 0..steps {
        let x = traj.last().expect("non-empty trajectory");
        let u = policy.eval(k, x)?;
        let w = system.draw_disturbance(rng);
        let next = system.step(x, &u, &w)?;
        traj.push(next);
    }
    Ok(traj)
}

/// LQR weight matrices for the hover-tracking controller.
#[derive(Clone, Debug)]
pub struct LqrWeights {
    pub state: Array2<f64>,
    pub input: Array2<f64>,
}

impl Default for LqrWeights {
    fn default() -> Self {
        Self {
            state: Array2::eye(6),
            input: Array2::eye(2) * 0.1,
        }
    }
}

/// Default hover reference: unit altitude, level attitude, at rest.
pub fn default_hover_reference() -> Array1<f64> {
    array![0.0, 0.0, 1.0, 0.0, 0.0, 0.0]
}

/// Continuous-time linearization of the quadrotor about hover
/// (`z = 0`, `u = (m g / 2, m g / 2)`), returned as `(A, B)`.
pub fn hover_linearization(params: &QuadrotorParams) -> (Array2<f64>, Array2<f64>) {
    let mut a = Array2::zeros((6, 6));
    a[[0, 1]] = 1.0;
    a[[1, 4]] = -params.gravity;
    a[[2, 3]] = 1.0;
    a[[4, 5]] = 1.0;
    let mut b = Array2::zeros((6, 2));
    b[[3, 0]] = 1.0 / params.mass;
    b[[3, 1]] = 1.0 / params.mass;
    b[[5, 0]] = params.arm / params.inertia;
    b[[5, 1]] = -params.arm / params.inertia;
    (a, b)
}

/// Euler-discretized hover linearization `(I + T A, T B)`.
pub fn hover_discrete_linearization(params: &QuadrotorParams) -> (Array2<f64>, Array2<f64>) {
    let (ac, bc) = hover_linearization(params);
    let ad = Array2::eye(6) + &ac * params.time_step;
    let bd = bc * params.time_step;
    (ad, bd)
}

/// Reference-tracking controller `u(z) = u_hover + K (z_ref - z)` where `K`
/// is the infinite-horizon discrete LQR gain for the Euler-discretized
/// hover linearization. Fails if the weights are degenerate or the
/// resulting closed loop is not strictly stable.
pub fn hover_lqr_policy(
    params: &QuadrotorParams,
    weights: &LqrWeights,
    reference: Array1<f64>,
) -> Result<MarkovPolicy> {
    if weights.state.shape() != [6, 6] || weights.input.shape() != [2, 2] {
        return Err(CoreError::Dimension(
            "LQR weights must be 6x6 (state) and 2x2 (input)".into(),
        ));
    }
    if reference.len() != 6 {
        return Err(CoreError::Dimension(format!(
            "hover reference must have 6 coordinates, got {}",
            reference.len()
        )));
    }
    let (a, b) = hover_discrete_linearization(params);
    let q = &weights.state;
    let r = &weights.input;

    // Fixed-point iteration on the discrete Riccati equation.
    let mut p = q.to_owned();
    let mut gain = Array2::zeros((2, 6));
    let max_iter = 200_000;
    let mut converged = false;
    for _ in 0..max_iter {
        let btp = b.t().dot(&p); // 2x6
        let s = r + &btp.dot(&b); // 2x2
        let det = s[[0, 0]] * s[[1, 1]] - s[[0, 1]] * s[[1, 0]];
        if !(det.is_finite() && det > 1e-300) {
            return Err(CoreError::Config(
                "LQR input-weight system is degenerate (non-invertible R + B'PB)".into(),
            ));
        }
        let s_inv = array![
            [s[[1, 1]] / det, -s[[0, 1]] / det],
            [-s[[1, 0]] / det, s[[0, 0]] / det]
        ];
        gain = s_inv.dot(&btp.dot(&a)); // 2x6
        let p_next = q + &a.t().dot(&p).dot(&(&a - &b.dot(&gain)));
        let diff = (&p_next - &p)
            .iter()
            .fold(0.0f64, |acc, v| acc.max(v.abs()));
        let scale = p.iter().fold(1.0f64, |acc, v| acc.max(v.abs()));
        p = p_next;
        if diff <= 1e-13 * scale {
            converged = true;
            break;
        }
    }
    if !converged {
        return Err(CoreError::Numerical(
            "Riccati iteration did not converge".into(),
        ));
    }
    // Verify the closed loop is strictly stable.
    let closed = &a - &b.dot(&gain);
    let (eigs, _) = closed
        .eig()
        .map_err(|e| CoreError::Numerical(format!("closed-loop eigenvalue computation failed: {e}")))?;
    let rho = eigs
        .iter()
        .fold(0.0f64, |acc, z| acc.max(z.norm()));
    if !(rho < 1.0) {
        return Err(CoreError::Config(format!(
            "hover controller does not stabilize the linearized dynamics (spectral radius {rho:.6})"
        )));
    }
    let hover = params.hover_thrust();
    MarkovPolicy::linear_feedback(gain, array![hover, hover], reference)
}

/// Finite-difference Jacobian of `f` at `x0` with step `eps` per coordinate
/// (central differences); rows index outputs, columns index inputs.
pub fn finite_difference_jacobian<F>(f: F, x0: &[f64], eps: f64) -> Result<Array2<f64>>
where
    F: Fn(&[f64]) -> Result<Vec<f64>>,
{
    if !(eps.is_finite() && eps > 0.0) {
        return Err(CoreError::Config(format!(
            "finite-difference step must be positive, got {eps}"
        )));
    }
    let base = f(x0)?;
    let (rows, cols) = (base.len(), x0.len());
    let mut jac = Array2::zeros((rows, cols));
    let mut xp = x0.to_vec();
    let mut xm = x0.to_vec();
    for c in 0..cols {
        xp[c] = x0[c] + eps;
        xm[c] = x0[c] - eps;
        let fp = f(&xp)?;
        let fm = f(&xm)?;
        for r in 0..rows {
            jac[[r, c]] = (fp[r] - fm[r]) / (2.0 * eps);
        }
        xp[c] = x0[c];
        xm[c] = x0[c];
    }
    Ok(jac)
}

/// Integrator benchmark safe set `[-1, 1]^2` (closed).
pub fn integrator_safe_set() -> SetPredicate {
    SetPredicate::rectangle(
        HyperRectangle::closed(vec![-1.0, -1.0], vec![1.0, 1.0]).expect("static bounds"),
    )
}

/// Integrator benchmark target set `[-0.5, 0.5]^2` (closed).
pub fn integrator_target_set() -> SetPredicate {
    SetPredicate::rectangle(
        HyperRectangle::closed(vec![-0.5, -0.5], vec![0.5, 0.5]).expect("static bounds"),
    )
}

pub fn tube_rect(center: f64, half_width: f64) -> HyperRectangle {
    HyperRectangle::new(
        vec![center - half_width],
        vec![center + half_width],
        vec![true],
        vec![true],
    )
    .expect("static bounds")
}

pub fn altitude_rect(min_altitude: f64) -> HyperRectangle {
    HyperRectangle::new(
        vec![min_altitude],
        vec![f64::INFINITY],
        vec![false],
        vec![false],
    )
    .expect("static bounds")
}

/// Quadrotor flight envelope: lateral position inside the open tube
/// `|z_1| < 1` at non-negative altitude. States at altitude 0.8 or above
/// (still inside the tube) form the target, so the sub-target portion of
/// this set is exactly the altitude band `0 <= z_3 < 0.8`.
pub fn quadrotor_safe_set() -> SetPredicate {
    SetPredicate::product(6, vec![(0, tube_rect(0.0, 1.0)), (2, altitude_rect(0.0))])
        .expect("static blocks")
}

/// Quadrotor target: inside the tube at altitude `z_3 >= 0.8`.
pub fn quadrotor_target_set() -> SetPredicate {
    SetPredicate::product(6, vec![(0, tube_rect(0.0, 1.0)), (2, altitude_rect(0.8))])
        .expect("static blocks")
}

/// Repeated-quadrotor safe set: copy `c` must stay inside its own lateral
/// tube `(2c - 1, 2c + 1)` at non-negative altitude, so adjacent copies'
/// tubes are disjoint open intervals.
pub fn repeated_quadrotor_safe_set(copies: usize) -> Result<SetPredicate> {
    let mut blocks = Vec::with_capacity(2 * copies);
    for c in 0..copies {
        blocks.push((6 * c, tube_rect(2.0 * c as f64, 1.0)));
        blocks.push((6 * c + 2, altitude_rect(0.0)));
    }
    SetPredicate::product(6 * copies, blocks)
}

/// Repeated-quadrotor target: every copy inside its tube at altitude 0.8 or
/// above.
pub fn repeated_quadrotor_target_set(copies: usize) -> Result<SetPredicate> {
    let mut blocks = Vec::with_capacity(2 * copies);
    for c in 0..copies {
        blocks.push((6 * c, tube_rect(2.0 * c as f64, 1.0)));
        blocks.push((6 * c + 2, altitude_rect(0.8)));
    }
    SetPredicate::product(6 * copies, blocks)
}

/// Per-copy reference shifts for the repeated quadrotor: copy `c` tracks the
/// hover reference translated to lateral position `2c`.
pub fn repeated_quadrotor_shifts(copies: usize) -> Array2<f64> {
    let mut shifts = Array2::zeros((copies, 6));
    for c in 0..copies {
        shifts[[c, 0]] = 2.0 * c as f64;
    }
    shifts
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::derive_stream;
    use approx::assert_abs_diff_eq;

    #[test]
    fn integrator_step_matches_hand_evaluations() {
        let z = integrator_step(&[0.0, 0.0], &[0.0], &[0.0, 0.0], 0.25).unwrap();
        assert_eq!(z, vec![0.0, 0.0]);
        let z = integrator_step(&[0.0, 1.0], &[0.0], &[0.0, 0.0], 0.25).unwrap();
        assert_abs_diff_eq!(z[0], 0.25, epsilon = 1e-15);
        assert_abs_diff_eq!(z[1], 1.0, epsilon = 1e-15);
        let z = integrator_step(&[1.0, 1.0], &[1.0], &[0.0, 0.0], 0.25).unwrap();
        assert_abs_diff_eq!(z[0], 1.28125, epsilon = 1e-15);
        assert_abs_diff_eq!(z[1], 1.25, epsilon = 1e-15);
        assert!(integrator_step(&[0.0], &[0.0], &[0.0, 0.0], 0.25).is_err());
    }

    #[test]
    fn quadrotor_hover_is_a_fixed_point_and_free_fall_accelerates_down() {
        let p = QuadrotorParams::default();
        let hover = p.hover_thrust();
        assert_abs_diff_eq!(hover, 24.5, epsilon = 1e-12);
        let z0 = [0.0; 6];
        let z = quadrotor_step(&z0, &[hover, hover], &[0.0; 6], &p).unwrap();
        for v in &z {
            assert_abs_diff_eq!(*v, 0.0, epsilon = 1e-12);
        }
        let z = quadrotor_step(&z0, &[0.0, 0.0], &[0.0; 6], &p).unwrap();
        assert_eq!(&z[..3], &[0.0, 0.0, 0.0]);
        assert_abs_diff_eq!(z[3], -p.gravity * p.time_step, epsilon = 1e-12);
        assert_eq!(&z[4..], &[0.0, 0.0]);
    }

    #[test]
    fn quadrotor_lateral_channel_has_odd_symmetry() {
        let p = QuadrotorParams::default();
        let z = [0.3, -0.2, 0.5, 0.1, 0.4, -0.6];
        let u = [26.0, 23.0];
        let plus = quadrotor_step(&z, &u, &[0.0; 6], &p).unwrap();
        // Negate (x, xdot, theta, thetadot) and swap the rotors.
        let z_neg = [-z[0], -z[1], z[2], z[3], -z[4], -z[5]];
        let u_swap = [u[1], u[0]];
        let minus = quadrotor_step(&z_neg, &u_swap, &[0.0; 6], &p).unwrap();
        for i in [0usize, 1, 4, 5] {
            assert_abs_diff_eq!(minus[i], -plus[i], epsilon = 1e-12);
        }
        for i in [2usize, 3] {
            assert_abs_diff_eq!(minus[i], plus[i], epsilon = 1e-12);
        }
    }

    #[test]
    fn hover_controller_stabilizes_and_tracks_the_reference() {
        let p = QuadrotorParams::default();
        let policy =
            hover_lqr_policy(&p, &LqrWeights::default(), default_hover_reference()).unwrap();
        // At the reference the controller commands exact hover thrust.
        let u = policy.eval(0, &[0.0, 0.0, 1.0, 0.0, 0.0, 0.0]).unwrap();
        assert_abs_diff_eq!(u[0], 24.5, epsilon = 1e-9);
        assert_abs_diff_eq!(u[1], 24.5, epsilon = 1e-9);
        // Gain anchor from the converged Riccati solution.
        if let MarkovPolicy::LinearFeedback { gain, .. } = &policy {
            assert_abs_diff_eq!(gain[[0, 4]], 11.0285, epsilon = 2e-3);
            // The two rotors see mirrored lateral/attitude gains.
            for c in [0usize, 1, 4, 5] {
                assert_abs_diff_eq!(gain[[0, c]], -gain[[1, c]], epsilon = 1e-9);
            }
            for c in [2usize, 3] {
                assert_abs_diff_eq!(gain[[0, c]], gain[[1, c]], epsilon = 1e-9);
            }
        } else {
            panic!("hover controller should be linear feedback");
        }
        // Closed-loop spectral radius strictly below one.
        let (a, b) = hover_discrete_linearization(&p);
        if let MarkovPolicy::LinearFeedback { gain, .. } = &policy {
            let closed = &a - &b.dot(gain);
            let (eigs, _) = closed.eig().unwrap();
            let rho = eigs.iter().fold(0.0f64, |acc, z| acc.max(z.norm()));
            assert!(rho < 1.0, "spectral radius {rho}");
            assert_abs_diff_eq!(rho, 0.8178, epsilon = 5e-3);
        }
        // Opposite lateral errors produce opposite differential thrust.
        let left = policy.eval(0, &[-0.4, 0.0, 1.0, 0.0, 0.0, 0.0]).unwrap();
        let right = policy.eval(0, &[0.4, 0.0, 1.0, 0.0, 0.0, 0.0]).unwrap();
        assert_abs_diff_eq!(left[0] - left[1], -(right[0] - right[1]), epsilon = 1e-9);
        assert!((left[0] - left[1]).abs() > 1e-6);
    }

    #[test]
    fn degenerate_lqr_weights_are_rejected() {
        let p = QuadrotorParams::default();
        let weights = LqrWeights {
            state: Array2::zeros((6, 6)),
            input: Array2::zeros((2, 2)),
        };
        assert!(hover_lqr_policy(&p, &weights, default_hover_reference()).is_err());
    }

    #[test]
    fn euler_step_linearizes_to_the_discrete_hover_model() {
        let p = QuadrotorParams::default();
        let hover = p.hover_thrust();
        let (ad, bd) = hover_discrete_linearization(&p);
        let eps = 1e-6;
        // State Jacobian at the hover point.
        let ja = finite_difference_jacobian(
            |z| quadrotor_step(z, &[hover, hover], &[0.0; 6], &p),
            &[0.0; 6],
            eps,
        )
        .unwrap();
        for i in 0..6 {
            for j in 0..6 {
                let denom = ad[[i, j]].abs().max(1.0);
                assert!(
                    (ja[[i, j]] - ad[[i, j]]).abs() / denom <= 1e-6,
                    "A[{i},{j}]: {} vs {}",
                    ja[[i, j]],
                    ad[[i, j]]
                );
            }
        }
        // Input Jacobian at the hover point.
        let jb = finite_difference_jacobian(
            |u| quadrotor_step(&[0.0; 6], u, &[0.0; 6], &p),
            &[hover, hover],
            eps,
        )
        .unwrap();
        for i in 0..6 {
            for j in 0..2 {
                let denom = bd[[i, j]].abs().max(1.0);
                assert!(
                    (jb[[i, j]] - bd[[i, j]]).abs() / denom <= 1e-6,
                    "B[{i},{j}]: {} vs {}",
                    jb[[i, j]],
                    bd[[i, j]]
                );
            }
        }
    }

    #[test]
    fn repeated_system_is_block_diagonal_and_decoupled() {
        let p = QuadrotorParams::default();
        let base = SystemModel::quadrotor(p, Disturbance::gaussian(&[0.01; 6]).unwrap()).unwrap();
        let single = repeated_system(base.clone(), 1).unwrap();
        let z = [0.1, 0.0, 0.5, -0.1, 0.05, 0.0];
        let u = [25.0, 24.0];
        let w = [0.001; 6];
        let a = base.step(&z, &u, &w).unwrap();
        let b = single.step(&z, &u, &w).unwrap();
        assert_eq!(a, b);

        let double = repeated_system(base.clone(), 2).unwrap();
        assert_eq!(double.state_dim(), 12);
        assert_eq!(double.input_dim(), 4);
        let mut z2 = [0.0; 12];
        z2[..6].copy_from_slice(&z);
        z2[6..].copy_from_slice(&z);
        let mut u2 = [0.0; 4];
        u2[..2].copy_from_slice(&u);
        u2[2..].copy_from_slice(&u);
        let w2 = [0.001; 12];
        let before = double.step(&z2, &u2, &w2).unwrap();
        // Perturb only copy 2's state: copy 1's successor must not change.
        let mut z2b = z2;
        z2b[7] = 9.9;
        z2b[10] = -3.0;
        let after = double.step(&z2b, &u2, &w2).unwrap();
        assert_eq!(&before[..6], &after[..6]);
        assert_ne!(&before[6..], &after[6..]);

        let huge = repeated_system(base, 170_000).unwrap();
        assert_eq!(huge.state_dim(), 1_020_000);
        assert!(repeated_system(
            SystemModel::integrator(0.25, Disturbance::gaussian(&[0.01, 0.01]).unwrap()).unwrap(),
            0
        )
        .is_err());
    }

    #[test]
    fn disturbance_sample_moments_match_closed_forms() {
        let n_draws = 1_000_000usize;
        let mut rng = derive_stream(7, "test/moments", 0);
        let beta = Disturbance::scaled_beta(2.0, 0.5, 0.1, 2).unwrap();
        let mut mean = [0.0f64; 2];
        for _ in 0..n_draws {
            let w = beta.draw(&mut rng);
            mean[0] += w[0];
            mean[1] += w[1];
            assert!(w[0] >= 0.0 && w[0] <= 0.1);
        }
        for m in &mut mean {
            *m /= n_draws as f64;
        }
        // Mean of 0.1 Beta(2, 0.5) is 0.1 * 2 / 2.5 = 0.08.
        assert!((mean[0] - 0.08).abs() <= 0.0008, "beta mean {}", mean[0]);
        assert!((mean[1] - 0.08).abs() <= 0.0008, "beta mean {}", mean[1]);

        let exp = Disturbance::scaled_exponential(3.0, 0.01, 1).unwrap();
        let mut acc = 0.0;
        for _ in 0..n_draws {
            let w = exp.draw(&mut rng);
            assert!(w[0] >= 0.0);
            acc += w[0];
        }
        let mean = acc / n_draws as f64;
        let want = 0.01 / 3.0;
        assert!((mean - want).abs() <= 0.01 * want, "exp mean {mean} vs {want}");

        let gauss = Disturbance::gaussian(&[0.01, 0.01]).unwrap();
        let (mut s0, mut s1, mut s00, mut s11, mut s01) = (0.0, 0.0, 0.0, 0.0, 0.0);
        for _ in 0..n_draws {
            let w = gauss.draw(&mut rng);
            s0 += w[0];
            s1 += w[1];
            s00 += w[0] * w[0];
            s11 += w[1] * w[1];
            s01 += w[0] * w[1];
        }
        let nf = n_draws as f64;
        let (m0, m1) = (s0 / nf, s1 / nf);
        let c00 = s00 / nf - m0 * m0;
        let c11 = s11 / nf - m1 * m1;
        let c01 = s01 / nf - m0 * m1;
        assert!((c00 - 0.01).abs() <= 0.0002, "var {c00}");
        assert!((c11 - 0.01).abs() <= 0.0002, "var {c11}");
        assert!(c01.abs() <= 0.0002, "cross-cov {c01}");
    }

    #[test]
    fn simulation_follows_the_deterministic_orbit_without_noise() {
        let sys =
            SystemModel::integrator(0.25, Disturbance::gaussian(&[0.0, 0.0]).unwrap()).unwrap();
        let pol = MarkovPolicy::zero(1);
        let mut rng = derive_stream(0, "test/sim", 0);
        let traj = simulate(&sys, &pol, &[0.4, -0.8], 0, &mut rng).unwrap();
        assert_eq!(traj, vec![vec![0.4, -0.8]]);
        let traj = simulate(&sys, &pol, &[0.4, -0.8], 4, &mut rng).unwrap();
        // Closed form: position advances by T * velocity each step.
        let mut x = [0.4, -0.8];
        for state in &traj {
            assert_abs_diff_eq!(state[0], x[0], epsilon = 1e-12);
            assert_abs_diff_eq!(state[1], x[1], epsilon = 1e-12);
            x[0] += 0.25 * x[1];
        }
        // Fixed seed reproducibility with noise.
        let noisy =
            SystemModel::integrator(0.25, Disturbance::gaussian(&[0.01, 0.01]).unwrap()).unwrap();
        let mut r1 = derive_stream(5, "test/sim", 1);
        let mut r2 = derive_stream(5, "test/sim", 1);
        let t1 = simulate(&noisy, &pol, &[0.0, 0.0], 8, &mut r1).unwrap();
        let t2 = simulate(&noisy, &pol, &[0.0, 0.0], 8, &mut r2).unwrap();
        assert_eq!(t1, t2);
    }

    #[test]
    fn benchmark_sets_nest_correctly() {
        // Integrator: target strictly inside the safe box.
        let k = integrator_safe_set();
        let t = integrator_target_set();
        assert!(k.contains(&[1.0, 1.0]).unwrap());
        assert!(t.contains(&[0.5, 0.5]).unwrap());
        assert!(!t.contains(&[0.51, 0.0]).unwrap());
        // Quadrotor: target is the high-altitude part of the envelope.
        let qk = quadrotor_safe_set();
        let qt = quadrotor_target_set();
        let mid = [0.0, 0.0, 0.5, 0.0, 0.0, 0.0];
        let high = [0.0, 0.0, 0.9, 0.0, 0.0, 0.0];
        assert!(qk.contains(&mid).unwrap() && !qt.contains(&mid).unwrap());
        assert!(qk.contains(&high).unwrap() && qt.contains(&high).unwrap());
        assert!(!qk.contains(&[1.0, 0.0, 0.5, 0.0, 0.0, 0.0]).unwrap());
        assert!(!qk.contains(&[0.0, 0.0, -0.1, 0.0, 0.0, 0.0]).unwrap());
        // Repeated: copy 1's tube is centered at lateral position 2.
        let rk = repeated_quadrotor_safe_set(2).unwrap();
        let mut z = [0.0; 12];
        z[2] = 0.5;
        z[6] = 2.0;
        z[8] = 0.5;
        assert!(rk.contains(&z).unwrap());
        z[6] = 0.5; // copy 1 drifts into copy 0's tube
        assert!(!rk.contains(&z).unwrap());
        let shifts = repeated_quadrotor_shifts(3);
        assert_eq!(shifts[[2, 0]], 4.0);
        assert_eq!(shifts[[2, 2]], 0.0);
    }
}
