//! Run configuration: TOML file sections plus command-line overrides, and
//! the builders that turn the resolved settings into core objects.

use std::path::{Path, PathBuf};

use serde::Deserialize;

use kernel_reach_core::{
    default_hover_reference, default_integrator_plan, hover_lqr_policy, integrator_safe_set,
    integrator_target_set, quadrotor_safe_set, quadrotor_target_set, repeated_quadrotor_safe_set,
    repeated_quadrotor_shifts, repeated_quadrotor_target_set, repeated_system, CoreError,
    Disturbance, HyperRectangle, LqrWeights, MarkovPolicy, QuadrotorParams, Result, SafetyProblem,
    SamplingPlan, SetPredicate, SystemModel, DEFAULT_LAMBDA, DEFAULT_SIGMA,
};

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub seed: Option<u64>,
    #[serde(default)]
    pub system: SystemSection,
    #[serde(default)]
    pub disturbance: DisturbanceSection,
    #[serde(default)]
    pub policy: PolicySection,
    #[serde(default)]
    pub problem: ProblemSection,
    #[serde(default)]
    pub sample: SampleSection,
    #[serde(default)]
    pub kernel: KernelSection,
    #[serde(default)]
    pub rff: RffSection,
    #[serde(default)]
    pub reach: ReachSection,
    #[serde(default)]
    pub validate: ValidateSection,
    #[serde(default)]
    pub mc: McSection,
    #[serde(default)]
    pub dp: DpSection,
    #[serde(default)]
    pub bench: BenchSection,
}

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SystemSection {
    /// "integrator", "quadrotor", or "repeated-quadrotor".
    pub name: Option<String>,
    pub time_step: Option<f64>,
    /// Copies for the repeated quadrotor.
    pub copies: Option<usize>,
}

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DisturbanceSection {
    /// "gaussian", "beta", or "exponential".
    pub kind: Option<String>,
    /// Isotropic Gaussian variance (per axis).
    pub variance: Option<f64>,
    /// Per-axis Gaussian variances (overrides `variance`).
    pub variances: Option<Vec<f64>>,
    pub alpha: Option<f64>,
    pub beta: Option<f64>,
    /// Multiplier applied to beta/exponential draws.
    pub scale: Option<f64>,
    /// Exponential rate parameter.
    pub rate: Option<f64>,
}

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PolicySection {
    /// "auto" (default), "zero", "constant", or "lqr".
    pub kind: Option<String>,
    pub value: Option<Vec<f64>>,
}

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ProblemSection {
    pub horizon: Option<usize>,
    /// Optional rectangular safe/target sets overriding the system presets.
    pub safe_lower: Option<Vec<f64>>,
    pub safe_upper: Option<Vec<f64>>,
    pub target_lower: Option<Vec<f64>>,
    pub target_upper: Option<Vec<f64>>,
}

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SampleSection {
    pub m: Option<usize>,
    /// File to write (sample command) or reuse (other commands).
    pub file: Option<String>,
    /// "auto" (default), "uniform-box", or "gaussian-around".
    pub plan: Option<String>,
    pub lower: Option<Vec<f64>>,
    pub upper: Option<Vec<f64>>,
    pub center: Option<Vec<f64>>,
    /// Per-axis variance of the gaussian-around plan.
    pub spread: Option<f64>,
}

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct KernelSection {
    pub sigma_x: Option<f64>,
    pub sigma_u: Option<f64>,
    pub lambda: Option<f64>,
}

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RffSection {
    pub d: Option<usize>,
    /// "concatenated" (default) or "tensor".
    pub mode: Option<String>,
    pub basis_seed: Option<u64>,
}

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ReachSection {
    /// "exact" (default) or "rff".
    pub method: Option<String>,
    pub grid: Option<Vec<usize>>,
    pub clamp: Option<bool>,
    pub chunk: Option<usize>,
    /// Explicit evaluation points (each row a full state).
    pub points: Option<Vec<Vec<f64>>>,
    /// Two-axis slice through a higher-dimensional state space.
    pub slice_axes: Option<Vec<usize>>,
    pub slice_lower: Option<Vec<f64>>,
    pub slice_upper: Option<Vec<f64>>,
    pub slice_resolution: Option<Vec<usize>>,
    pub slice_fixed: Option<Vec<f64>>,
}

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ValidateSection {
    pub baseline: Option<String>,
    pub candidate: Option<String>,
    pub grid: Option<Vec<usize>>,
    pub points: Option<Vec<Vec<f64>>>,
}

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct McSection {
    pub trials: Option<u64>,
    pub points: Option<Vec<Vec<f64>>>,
}

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DpSection {
    pub grid: Option<Vec<usize>>,
}

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BenchSection {
    pub warmup: Option<usize>,
    pub iters: Option<usize>,
    pub copies: Option<Vec<usize>>,
    pub methods: Option<Vec<String>>,
}

impl RunConfig {
    pub fn load(path: Option<&Path>) -> Result<Self> {
        let Some(path) = path else {
            return Ok(RunConfig::default());
        };
        let text = std::fs::read_to_string(path).map_err(|e| {
            CoreError::Config(format!("cannot read config {}: {e}", path.display()))
        })?;
        toml::from_str(&text)
            .map_err(|e| CoreError::Config(format!("config {}: {e}", path.display())))
    }

    pub fn master_seed(&self) -> u64 {
        self.seed.unwrap_or(0)
    }
}

/// Everything a command needs, resolved from config plus global flags.
pub struct Context {
    pub config: RunConfig,
    pub seed: u64,
    pub out_dir: PathBuf,
    pub huge: bool,
}

impl Context {
    pub fn new(
        config: RunConfig,
        seed_flag: Option<u64>,
        out_flag: Option<PathBuf>,
        huge: bool,
    ) -> Self {
        let seed = seed_flag.unwrap_or_else(|| config.master_seed());
        let out_dir = out_flag.unwrap_or_else(|| PathBuf::from("."));
        Self {
            config,
            seed,
            out_dir,
            huge,
        }
    }

    pub fn out_path(&self, name: &str) -> PathBuf {
        self.out_dir.join(name)
    }

    pub fn system_name(&self) -> &str {
        self.config
            .system
            .name
            .as_deref()
            .unwrap_or("integrator")
    }

    pub fn copies(&self) -> usize {
        self.config.system.copies.unwrap_or(1)
    }

    pub fn build_disturbance(&self, dim: usize) -> Result<Disturbance> {
        let d = &self.config.disturbance;
        match d.kind.as_deref().unwrap_or("gaussian") {
            "gaussian" => {
                if let Some(vars) = &d.variances {
                    if vars.len() != dim {
                        return Err(CoreError::Dimension(format!(
                            "disturbance lists {} variances but the system needs {dim}",
                            vars.len()
                        )));
                    }
                    Disturbance::gaussian(vars)
                } else if let Some(v) = d.variance {
                    Disturbance::isotropic_gaussian(dim, v)
                } else if self.system_name().contains("quadrotor") {
                    // Benchmark default: positions/pitch get variance 1e-3,
                    // their rates 1e-5, tiled per copy.
                    let per_block = [1e-3, 1e-5, 1e-3, 1e-5, 1e-3, 1e-5];
                    let vars: Vec<f64> = (0..dim).map(|i| per_block[i % 6]).collect();
                    Disturbance::gaussian(&vars)
                } else {
                    Disturbance::isotropic_gaussian(dim, 0.01)
                }
            }
            "beta" => Disturbance::scaled_beta(
                d.alpha.unwrap_or(2.0),
                d.beta.unwrap_or(0.5),
                d.scale.unwrap_or(if self.system_name().contains("quadrotor") {
                    1.0
                } else {
                    0.1
                }),
                dim,
            ),
            "exponential" => Disturbance::scaled_exponential(
                d.rate.unwrap_or(3.0),
                d.scale.unwrap_or(0.01),
                dim,
            ),
            other => Err(CoreError::Config(format!(
                "unknown disturbance kind \"{other}\"; use gaussian, beta, or exponential"
            ))),
        }
    }

    pub fn build_system(&self) -> Result<SystemModel> {
        match self.system_name() {
            "integrator" => {
                let time_step = self.config.system.time_step.unwrap_or(0.25);
                SystemModel::integrator(time_step, self.build_disturbance(2)?)
            }
            "quadrotor" => {
                let params = self.quadrotor_params();
                SystemModel::quadrotor(params, self.build_disturbance(6)?)
            }
            "repeated-quadrotor" => {
                let params = self.quadrotor_params();
                let base = SystemModel::quadrotor(params, self.build_disturbance(6)?)?;
                repeated_system(base, self.copies())
            }
            other => Err(CoreError::Config(format!(
                "unknown system \"{other}\"; use integrator, quadrotor, or repeated-quadrotor"
            ))),
        }
    }

    fn quadrotor_params(&self) -> QuadrotorParams {
        let mut params = QuadrotorParams::default();
        if let Some(t) = self.config.system.time_step {
            params.time_step = t;
        }
        params
    }

    pub fn build_policy(&self, system: &SystemModel) -> Result<MarkovPolicy> {
        let kind = self.config.policy.kind.as_deref().unwrap_or("auto");
        let auto = |name: &str| -> Result<MarkovPolicy> {
            match name {
                "integrator" => Ok(MarkovPolicy::zero(1)),
                "quadrotor" => hover_lqr_policy(
                    &self.quadrotor_params(),
                    &LqrWeights::default(),
                    default_hover_reference(),
                ),
                "repeated-quadrotor" => {
                    let base = hover_lqr_policy(
                        &self.quadrotor_params(),
                        &LqrWeights::default(),
                        default_hover_reference(),
                    )?;
                    MarkovPolicy::per_block(
                        base,
                        self.copies(),
                        6,
                        repeated_quadrotor_shifts(self.copies()),
                    )
                }
                other => Err(CoreError::Config(format!("unknown system \"{other}\""))),
            }
        };
        match kind {
            "auto" => auto(self.system_name()),
            "zero" => Ok(MarkovPolicy::zero(system.input_dim())),
            "constant" => {
                let value = self.config.policy.value.clone().ok_or_else(|| {
                    CoreError::Config("constant policy needs policy.value".into())
                })?;
                if value.len() != system.input_dim() {
                    return Err(CoreError::Dimension(format!(
                        "policy.value has {} entries but the system takes {}-dimensional inputs",
                        value.len(),
                        system.input_dim()
                    )));
                }
                Ok(MarkovPolicy::constant(value))
            }
            "lqr" => {
                if self.system_name() == "integrator" {
                    return Err(CoreError::Config(
                        "the LQR hover policy applies to the quadrotor systems only".into(),
                    ));
                }
                auto(self.system_name())
            }
            other => Err(CoreError::Config(format!(
                "unknown policy kind \"{other}\"; use auto, zero, constant, or lqr"
            ))),
        }
    }

    fn custom_rect(
        lower: &Option<Vec<f64>>,
        upper: &Option<Vec<f64>>,
        which: &str,
    ) -> Result<Option<SetPredicate>> {
        match (lower, upper) {
            (Some(lo), Some(hi)) => Ok(Some(SetPredicate::rectangle(HyperRectangle::closed(
                lo.clone(),
                hi.clone(),
            )?))),
            (None, None) => Ok(None),
            _ => Err(CoreError::Config(format!(
                "problem.{which}_lower and problem.{which}_upper must be given together"
            ))),
        }
    }

    pub fn build_problem(&self, system: &SystemModel) -> Result<SafetyProblem> {
        let policy = self.build_policy(system)?;
        let horizon = self.config.problem.horizon.unwrap_or(5);
        let p = &self.config.problem;
        let custom_safe = Self::custom_rect(&p.safe_lower, &p.safe_upper, "safe")?;
        let custom_target = Self::custom_rect(&p.target_lower, &p.target_upper, "target")?;
        let (safe, target) = match (custom_safe, custom_target) {
            (Some(s), Some(t)) => (s, t),
            (None, None) => match self.system_name() {
                "integrator" => (integrator_safe_set(), integrator_target_set()),
                "quadrotor" => (quadrotor_safe_set(), quadrotor_target_set()),
                "repeated-quadrotor" => (
                    repeated_quadrotor_safe_set(self.copies())?,
                    repeated_quadrotor_target_set(self.copies())?,
                ),
                other => return Err(CoreError::Config(format!("unknown system \"{other}\""))),
            },
            _ => {
                return Err(CoreError::Config(
                    "custom safe and target sets must be given together".into(),
                ))
            }
        };
        SafetyProblem::new(safe, target, horizon, policy)
    }

    pub fn build_plan(&self, system: &SystemModel) -> Result<SamplingPlan> {
        let s = &self.config.sample;
        let plan = s.plan.as_deref().unwrap_or("auto");
        let auto = |name: &str| -> Result<SamplingPlan> {
            match name {
                "integrator" => Ok(default_integrator_plan()),
                "quadrotor" | "repeated-quadrotor" => {
                    // Per copy, draw around that copy's shifted hover
                    // reference so every tube is covered.
                    let copies = if name == "quadrotor" { 1 } else { self.copies() };
                    let mut center = Vec::with_capacity(6 * copies);
                    let shifts = repeated_quadrotor_shifts(copies);
                    let reference = default_hover_reference();
                    for c in 0..copies {
                        for a in 0..6 {
                            center.push(reference[a] + shifts[[c, a]]);
                        }
                    }
                    SamplingPlan::gaussian_around(center, 0.25)
                }
                other => Err(CoreError::Config(format!("unknown system \"{other}\""))),
            }
        };
        match plan {
            "auto" => auto(self.system_name()),
            "uniform-box" => {
                let (lo, hi) = match (&s.lower, &s.upper) {
                    (Some(lo), Some(hi)) => (lo.clone(), hi.clone()),
                    _ => {
                        return Err(CoreError::Config(
                            "uniform-box plan needs sample.lower and sample.upper".into(),
                        ))
                    }
                };
                Ok(SamplingPlan::uniform_over_box(HyperRectangle::closed(
                    lo, hi,
                )?))
            }
            "gaussian-around" => {
                let center = s.center.clone().ok_or_else(|| {
                    CoreError::Config("gaussian-around plan needs sample.center".into())
                })?;
                if center.len() != system.state_dim() {
                    return Err(CoreError::Dimension(format!(
                        "sample.center has {} coordinates but the system state is {}-dimensional",
                        center.len(),
                        system.state_dim()
                    )));
                }
                SamplingPlan::gaussian_around(center, s.spread.unwrap_or(0.25))
            }
            other => Err(CoreError::Config(format!(
                "unknown sampling plan \"{other}\"; use auto, uniform-box, or gaussian-around"
            ))),
        }
    }

    pub fn sample_size(&self) -> usize {
        self.config.sample.m.unwrap_or(2500)
    }

    pub fn sigma_x(&self) -> f64 {
        self.config.kernel.sigma_x.unwrap_or(DEFAULT_SIGMA)
    }

    pub fn sigma_u(&self) -> f64 {
        self.config.kernel.sigma_u.unwrap_or(DEFAULT_SIGMA)
    }

    pub fn lambda(&self) -> f64 {
        self.config.kernel.lambda.unwrap_or(DEFAULT_LAMBDA)
    }

    pub fn rff_d(&self) -> usize {
        self.config.rff.d.unwrap_or(15_000)
    }

    pub fn basis_seed(&self) -> u64 {
        self.config.rff.basis_seed.unwrap_or(self.seed)
    }

    pub fn mc_trials(&self) -> u64 {
        self.config.mc.trials.unwrap_or(10_000)
    }

    pub fn dp_grid(&self) -> Vec<usize> {
        self.config.dp.grid.clone().unwrap_or_else(|| vec![100, 100])
    }

    /// Refuse to start work whose rough memory footprint exceeds 4 GiB
    /// unless `--huge` was passed; either way report the estimate. The
    /// threshold admits the reference setups (the feature Gram at
    /// D = 15,000 peaks near 2.4 GiB) while gating full-scale sweeps.
    pub fn check_memory(&self, label: &str, bytes: usize) -> Result<()> {
        const GIB: usize = 1 << 30;
        const GATE: usize = 4 * GIB;
        if bytes > GATE {
            let gib = bytes as f64 / GIB as f64;
            if self.huge {
                eprintln!("{label}: estimated peak memory {gib:.1} GiB (--huge)");
                Ok(())
            } else {
                Err(CoreError::Config(format!(
                    "{label}: estimated peak memory {gib:.1} GiB exceeds 4 GiB; \
                     pass --huge to proceed"
                )))
            }
        } else {
            Ok(())
        }
    }
}

/// Estimated bytes held live while fitting and evaluating.
pub fn fit_memory_estimate(method: &str, m: usize, n: usize, input_dim: usize, d: usize) -> usize {
    let sample = 8 * m * (2 * n + input_dim);
    let fit = match method {
        "rff" => 16 * m * d + 8 * d * d,
        // Gram, its factorization workspace, and the successor cross block.
        _ => 24 * m * m,
    };
    sample + fit
}
