//! Subcommand implementations.

use std::time::Instant;

use ndarray::prelude::*;
use serde_json::json;

use kernel_reach_core::{
    backward_recursion, default_hover_reference, dp_solve, fit_exact_blocks, fit_rff,
    grid_points, grid_points_slice, hover_lqr_policy, mc_estimate, repeated_quadrotor_safe_set,
    repeated_quadrotor_shifts, repeated_quadrotor_target_set, repeated_system, sample_basis,
    sample_basis_per_block, CoreError, Embedding, JointFeatures, LqrWeights, MarkovPolicy,
    RecursionOptions, Result, SafetyField, SafetyProblem, SamplingPlan, SetPredicate,
    SystemModel, TransitionSample,
};

use crate::config::{fit_memory_estimate, Context};

/// Default off-boundary integrator probe points used when a command that
/// needs explicit states (Monte Carlo comparisons) is run without any.
const INTEGRATOR_PROBES: [[f64; 2]; 10] = [
    [0.6, 0.0],
    [0.7, 0.0],
    [0.8, 0.0],
    [0.6, -0.2],
    [-0.6, 0.2],
    [0.0, 0.7],
    [0.0, -0.7],
    [0.3, 0.6],
    [-0.3, -0.6],
    [0.75, -0.3],
];

fn points_matrix(points: &[Vec<f64>], dim: usize) -> Result<Array2<f64>> {
    if points.is_empty() {
        return Err(CoreError::Config("empty point list".into()));
    }
    if points.iter().any(|p| p.len() != dim) {
        return Err(CoreError::Dimension(format!(
            "every point must have {dim} coordinates"
        )));
    }
    let mut out = Array2::zeros((points.len(), dim));
    for (i, p) in points.iter().enumerate() {
        out.row_mut(i).assign(&ArrayView1::from(&p[..]));
    }
    Ok(out)
}

/// Load the configured sample file if it exists, otherwise generate a fresh
/// dataset from the plan. The returned flag says whether the data was
/// generated here (and therefore reflects the configured plan).
fn obtain_sample(
    ctx: &Context,
    system: &SystemModel,
    policy: &MarkovPolicy,
) -> Result<(TransitionSample, bool)> {
    if let Some(file) = &ctx.config.sample.file {
        let path = if std::path::Path::new(file).is_absolute() {
            std::path::PathBuf::from(file)
        } else {
            ctx.out_path(file)
        };
        if path.exists() {
            let sample = TransitionSample::read_csv_path(&path)?;
            if sample.state_dim() != system.state_dim()
                || sample.input_dim() != system.input_dim()
            {
                return Err(CoreError::Dimension(format!(
                    "sample file {} holds ({}, {})-dimensional transitions but the \
                     configured system needs ({}, {})",
                    path.display(),
                    sample.state_dim(),
                    sample.input_dim(),
                    system.state_dim(),
                    system.input_dim()
                )));
            }
            if sample.system != system.name() {
                return Err(CoreError::Config(format!(
                    "sample file {} was generated from system \"{}\" but the configured \
                     system is \"{}\"; regenerate it or fix the config",
                    path.display(),
                    sample.system,
                    system.name()
                )));
            }
            return Ok((sample, false));
        }
    }
    let plan = ctx.build_plan(system)?;
    let sample =
        kernel_reach_core::generate_sample(system, policy, &plan, ctx.sample_size(), ctx.seed)?;
    Ok((sample, true))
}

fn fit_embedding(ctx: &Context, sample: &TransitionSample, method: &str) -> Result<Embedding> {
    let n = sample.state_dim();
    let mu = sample.input_dim();
    match method {
        "exact" => {
            let emb = fit_exact_blocks(
                sample,
                &[(n, ctx.sigma_x()), (mu, ctx.sigma_u())],
                ctx.lambda(),
            )?;
            Ok(Embedding::Exact(emb))
        }
        "rff" => {
            let d = ctx.rff_d();
            let mode = ctx.config.rff.mode.as_deref().unwrap_or("concatenated");
            let features = match mode {
                "concatenated" => {
                    let basis = sample_basis_per_block(
                        d,
                        &[(n, ctx.sigma_x()), (mu, ctx.sigma_u())],
                        ctx.basis_seed(),
                    )?;
                    JointFeatures::Concatenated { basis }
                }
                "tensor" => {
                    // Two independent bases; the input basis reuses the
                    // stream family under a shifted seed.
                    let basis_x = sample_basis(d, n, ctx.sigma_x(), ctx.basis_seed())?;
                    let basis_u = sample_basis(
                        d,
                        mu,
                        ctx.sigma_u(),
                        ctx.basis_seed().wrapping_add(0x9E37_79B9_7F4A_7C15),
                    )?;
                    JointFeatures::Tensor { basis_x, basis_u }
                }
                other => {
                    return Err(CoreError::Config(format!(
                        "unknown feature mode \"{other}\"; use concatenated or tensor"
                    )))
                }
            };
            Ok(Embedding::Rff(fit_rff(sample, features, ctx.lambda())?))
        }
        other => Err(CoreError::Config(format!(
            "unknown method \"{other}\"; use exact or rff"
        ))),
    }
}

/// Resolve the evaluation points for reach-style commands.
fn eval_points(ctx: &Context, system: &SystemModel, problem: &SafetyProblem) -> Result<Array2<f64>> {
    let r = &ctx.config.reach;
    if let Some(points) = &r.points {
        return points_matrix(points, system.state_dim());
    }
    if r.slice_axes.is_some()
        || r.slice_lower.is_some()
        || r.slice_upper.is_some()
        || r.slice_resolution.is_some()
        || r.slice_fixed.is_some()
    {
        return slice_points(ctx, system.state_dim());
    }
    if let Some(grid) = &r.grid {
        return grid_over_safe_box(problem, grid);
    }
    match ctx.system_name() {
        "integrator" => grid_over_safe_box(problem, &[100, 100]),
        "quadrotor" => grid_points_slice((-1.0, 1.0), (0.0, 1.0), (0, 2), (41, 41), &[0.0; 6]),
        "repeated-quadrotor" => Ok(default_repeated_point(ctx.copies())),
        other => Err(CoreError::Config(format!("unknown system \"{other}\""))),
    }
}

fn slice_points(ctx: &Context, dim: usize) -> Result<Array2<f64>> {
    let r = &ctx.config.reach;
    let axes = r
        .slice_axes
        .clone()
        .ok_or_else(|| CoreError::Config("slice needs reach.slice_axes".into()))?;
    let lower = r.slice_lower.clone().unwrap_or_else(|| vec![-1.0, -1.0]);
    let upper = r.slice_upper.clone().unwrap_or_else(|| vec![1.0, 1.0]);
    let resolution = r.slice_resolution.clone().unwrap_or_else(|| vec![41, 41]);
    let fixed = r.slice_fixed.clone().unwrap_or_else(|| vec![0.0; dim]);
    if axes.len() != 2 || lower.len() != 2 || upper.len() != 2 || resolution.len() != 2 {
        return Err(CoreError::Config(
            "slice axes, bounds, and resolution each need exactly 2 entries".into(),
        ));
    }
    if fixed.len() != dim {
        return Err(CoreError::Dimension(format!(
            "reach.slice_fixed has {} coordinates but the state is {dim}-dimensional",
            fixed.len()
        )));
    }
    grid_points_slice(
        (lower[0], upper[0]),
        (lower[1], upper[1]),
        (axes[0], axes[1]),
        (resolution[0], resolution[1]),
        &fixed,
    )
}

fn grid_over_safe_box(problem: &SafetyProblem, grid: &[usize]) -> Result<Array2<f64>> {
    match problem.safe() {
        SetPredicate::Rectangle(rect) => grid_points(rect, grid),
        SetPredicate::Product { .. } => Err(CoreError::Config(
            "the safe set is unbounded in some axes; give reach.points or a reach.slice_* block"
                .into(),
        )),
    }
}

/// One probe per copy: lateral tube center, half the target altitude.
fn default_repeated_point(copies: usize) -> Array2<f64> {
    let mut row = Vec::with_capacity(6 * copies);
    for c in 0..copies {
        row.extend_from_slice(&[2.0 * c as f64, 0.0, 0.5, 0.0, 0.0, 0.0]);
    }
    Array2::from_shape_vec((1, 6 * copies), row).expect("row shape")
}

pub fn cmd_sample(ctx: &Context) -> Result<()> {
    let system = ctx.build_system()?;
    let policy = ctx.build_policy(&system)?;
    let plan = ctx.build_plan(&system)?;
    let m = ctx.sample_size();
    ctx.check_memory(
        "sample",
        16 * m * (2 * system.state_dim() + system.input_dim()),
    )?;
    let sample = kernel_reach_core::generate_sample(&system, &policy, &plan, m, ctx.seed)?;
    let name = ctx
        .config
        .sample
        .file
        .clone()
        .unwrap_or_else(|| "sample.csv".into());
    let path = if std::path::Path::new(&name).is_absolute() {
        std::path::PathBuf::from(&name)
    } else {
        ctx.out_path(&name)
    };
    sample.write_csv_path(&path)?;
    println!(
        "wrote {} transitions ({}, seed {}) to {}",
        sample.len(),
        system.name(),
        ctx.seed,
        path.display()
    );
    Ok(())
}

fn run_reach_once(
    ctx: &Context,
    system: &SystemModel,
    problem: &SafetyProblem,
    method: &str,
    points: ArrayView2<'_, f64>,
) -> Result<(SafetyField, bool)> {
    let policy = problem.policy().clone();
    let (sample, generated) = obtain_sample(ctx, system, &policy)?;
    let embedding = fit_embedding(ctx, &sample, method)?;
    let options = RecursionOptions {
        clamp: ctx.config.reach.clamp.unwrap_or(true),
        eval_chunk: ctx.config.reach.chunk.unwrap_or(2048),
    };
    let mut field = backward_recursion(problem, &embedding, points, &options)?;
    field.meta.time_step = Some(system.time_step());
    field.meta.plan = Some(if generated {
        ctx.build_plan(system)?.name().to_string()
    } else {
        "file".to_string()
    });
    Ok((field, generated))
}

pub fn cmd_reach(ctx: &Context) -> Result<()> {
    let system = ctx.build_system()?;
    let problem = ctx.build_problem(&system)?;
    let method = ctx
        .config
        .reach
        .method
        .clone()
        .unwrap_or_else(|| "exact".into());
    ctx.check_memory(
        &format!("reach ({method})"),
        fit_memory_estimate(
            &method,
            ctx.sample_size(),
            system.state_dim(),
            system.input_dim(),
            ctx.rff_d(),
        ),
    )?;
    let points = eval_points(ctx, &system, &problem)?;
    let (mut field, _) = run_reach_once(ctx, &system, &problem, &method, points.view())?;
    if let Some(grid) = &ctx.config.reach.grid {
        field.meta.grid = Some(grid.clone());
    }
    let json_path = ctx.out_path(&format!("field-{method}.json"));
    let csv_path = ctx.out_path(&format!("field-{method}.csv"));
    field.write_json_path(&json_path)?;
    field.write_csv_path(&csv_path)?;
    let layer0 = field.layer(0)?;
    let (mut lo, mut hi) = (f64::INFINITY, f64::NEG_INFINITY);
    for v in layer0.iter() {
        lo = lo.min(*v);
        hi = hi.max(*v);
    }
    println!(
        "{}: {} points, horizon {}, V0 in [{lo:.4}, {hi:.4}]; wrote {} and {}",
        method,
        field.len(),
        field.meta.horizon,
        json_path.display(),
        csv_path.display()
    );
    Ok(())
}

pub fn cmd_dp(ctx: &Context) -> Result<()> {
    let system = ctx.build_system()?;
    let problem = ctx.build_problem(&system)?;
    let solution = dp_solve(&problem, &system, &ctx.dp_grid())?;
    let field = solution.to_field();
    let json_path = ctx.out_path("field-dp.json");
    let csv_path = ctx.out_path("field-dp.csv");
    field.write_json_path(&json_path)?;
    field.write_csv_path(&csv_path)?;
    println!(
        "dp: {} cells, horizon {}; wrote {} and {}",
        field.len(),
        field.meta.horizon,
        json_path.display(),
        csv_path.display()
    );
    Ok(())
}

fn mc_points(ctx: &Context, dim: usize) -> Result<Array2<f64>> {
    let configured = ctx
        .config
        .mc
        .points
        .as_ref()
        .or(ctx.config.validate.points.as_ref());
    match configured {
        Some(points) => points_matrix(points, dim),
        None if ctx.system_name() == "integrator" => {
            let rows: Vec<Vec<f64>> = INTEGRATOR_PROBES.iter().map(|p| p.to_vec()).collect();
            points_matrix(&rows, dim)
        }
        None => Err(CoreError::Config(
            "Monte Carlo needs mc.points (no default probes for this system)".into(),
        )),
    }
}

pub fn cmd_mc(ctx: &Context) -> Result<()> {
    let system = ctx.build_system()?;
    let problem = ctx.build_problem(&system)?;
    let points = mc_points(ctx, system.state_dim())?;
    let trials = ctx.mc_trials();
    let mut estimates = Vec::with_capacity(points.nrows());
    for row in points.rows() {
        let est = mc_estimate(&problem, &system, row.as_slice().expect("row"), trials, ctx.seed)?;
        estimates.push(est);
    }
    let radius99 = estimates[0].radius99;
    let doc = json!({
        "meta": {
            "method": "mc",
            "system": system.name(),
            "horizon": problem.horizon(),
            "trials": trials,
            "radius99": radius99,
            "seed": ctx.seed,
            "policy": problem.policy().name(),
            "disturbance": system.disturbance_name(),
        },
        "points": points.rows().into_iter().map(|r| r.to_vec()).collect::<Vec<_>>(),
        "estimates": estimates.iter().map(|e| e.p_hat).collect::<Vec<_>>(),
    });
    let path = ctx.out_path("mc.json");
    std::fs::write(&path, serde_json::to_string_pretty(&doc).expect("serializable") + "\n")?;
    for (row, est) in points.rows().into_iter().zip(&estimates) {
        println!("p_hat({:?}) = {:.4} +/- {:.4}", row.to_vec(), est.p_hat, est.radius99);
    }
    println!("wrote {}", path.display());
    Ok(())
}

fn validate_method_values(
    ctx: &Context,
    system: &SystemModel,
    problem: &SafetyProblem,
    method: &str,
    points: &Array2<f64>,
    cache: &mut Option<TransitionSample>,
) -> Result<Array1<f64>> {
    match method {
        "exact" | "rff" => {
            if cache.is_none() {
                let policy = problem.policy().clone();
                *cache = Some(obtain_sample(ctx, system, &policy)?.0);
            }
            let sample = cache.as_ref().expect("cached sample");
            ctx.check_memory(
                &format!("validate ({method})"),
                fit_memory_estimate(
                    method,
                    sample.len(),
                    system.state_dim(),
                    system.input_dim(),
                    ctx.rff_d(),
                ),
            )?;
            let embedding = fit_embedding(ctx, sample, method)?;
            let field = backward_recursion(
                problem,
                &embedding,
                points.view(),
                &RecursionOptions::default(),
            )?;
            Ok(field.layer(0)?.to_owned())
        }
        "dp" => {
            let solution = dp_solve(problem, system, &ctx.dp_grid())?;
            let mut out = Array1::zeros(points.nrows());
            for (i, row) in points.rows().into_iter().enumerate() {
                out[i] = solution.value_at(0, row.as_slice().expect("row"))?;
            }
            Ok(out)
        }
        "mc" => {
            let trials = ctx.mc_trials();
            let mut out = Array1::zeros(points.nrows());
            for (i, row) in points.rows().into_iter().enumerate() {
                out[i] =
                    mc_estimate(problem, system, row.as_slice().expect("row"), trials, ctx.seed)?
                        .p_hat;
            }
            Ok(out)
        }
        other => Err(CoreError::Config(format!(
            "unknown validate method \"{other}\"; use exact, rff, dp, or mc"
        ))),
    }
}

pub fn cmd_validate(ctx: &Context) -> Result<()> {
    let system = ctx.build_system()?;
    let problem = ctx.build_problem(&system)?;
    let candidate = ctx
        .config
        .validate
        .candidate
        .clone()
        .unwrap_or_else(|| "exact".into());
    let baseline = ctx
        .config
        .validate
        .baseline
        .clone()
        .unwrap_or_else(|| "dp".into());
    // Comparison points: explicit list first; Monte Carlo forces probes;
    // a DP participant pins the grid to its native cell centers so no
    // interpolation error enters; otherwise a lattice over the safe box.
    let points = if let Some(points) = &ctx.config.validate.points {
        points_matrix(points, system.state_dim())?
    } else if candidate == "mc" || baseline == "mc" {
        mc_points(ctx, system.state_dim())?
    } else if candidate == "dp" || baseline == "dp" {
        let solution = dp_solve(&problem, &system, &ctx.dp_grid())?;
        solution.grid().cell_centers()
    } else {
        let grid = ctx
            .config
            .validate
            .grid
            .clone()
            .unwrap_or_else(|| vec![100, 100]);
        grid_over_safe_box(&problem, &grid)?
    };
    let mut cache = None;
    let cand_vals =
        validate_method_values(ctx, &system, &problem, &candidate, &points, &mut cache)?;
    let base_vals =
        validate_method_values(ctx, &system, &problem, &baseline, &points, &mut cache)?;
    let mut max_abs: f64 = 0.0;
    let mut sum_abs = 0.0;
    for i in 0..points.nrows() {
        let d = (cand_vals[i] - base_vals[i]).abs();
        max_abs = max_abs.max(d);
        sum_abs += d;
    }
    let mean_abs = sum_abs / points.nrows() as f64;
    let csv_path = ctx.out_path(&format!("errors-{candidate}-vs-{baseline}.csv"));
    {
        use std::io::Write;
        let mut f = std::io::BufWriter::new(std::fs::File::create(&csv_path)?);
        let n = points.ncols();
        let mut header: Vec<String> = (1..=n).map(|i| format!("x_{i}")).collect();
        header.push(candidate.clone());
        header.push(baseline.clone());
        header.push("abs_error".into());
        writeln!(f, "{}", header.join(","))?;
        for (i, row) in points.rows().into_iter().enumerate() {
            let mut fields: Vec<String> = row.iter().map(|v| format!("{v:.16e}")).collect();
            fields.push(format!("{:.16e}", cand_vals[i]));
            fields.push(format!("{:.16e}", base_vals[i]));
            fields.push(format!("{:.16e}", (cand_vals[i] - base_vals[i]).abs()));
            writeln!(f, "{}", fields.join(","))?;
        }
    }
    let summary = json!({
        "candidate": candidate,
        "baseline": baseline,
        "points": points.nrows(),
        "max_abs_error": max_abs,
        "mean_abs_error": mean_abs,
        "system": system.name(),
        "horizon": problem.horizon(),
        "seed": ctx.seed,
    });
    let json_path = ctx.out_path("validate.json");
    std::fs::write(
        &json_path,
        serde_json::to_string_pretty(&summary).expect("serializable") + "\n",
    )?;
    println!(
        "{candidate} vs {baseline}: max-abs {max_abs:.6}, mean-abs {mean_abs:.6} over {} points; wrote {} and {}",
        points.nrows(),
        csv_path.display(),
        json_path.display()
    );
    Ok(())
}

struct BenchTimes {
    sample: f64,
    fit: f64,
    recursion: f64,
    value: f64,
}

fn bench_once(
    ctx: &Context,
    system: &SystemModel,
    problem: &SafetyProblem,
    plan: &SamplingPlan,
    method: &str,
    points: ArrayView2<'_, f64>,
) -> Result<BenchTimes> {
    if method == "dp" {
        let t0 = Instant::now();
        let solution = dp_solve(problem, system, &ctx.dp_grid())?;
        let recursion = t0.elapsed().as_secs_f64();
        let value = solution.value_at(0, points.row(0).as_slice().expect("row"))?;
        return Ok(BenchTimes {
            sample: 0.0,
            fit: 0.0,
            recursion,
            value,
        });
    }
    let policy = problem.policy().clone();
    let t0 = Instant::now();
    let sample =
        kernel_reach_core::generate_sample(system, &policy, plan, ctx.sample_size(), ctx.seed)?;
    let t_sample = t0.elapsed().as_secs_f64();
    let t1 = Instant::now();
    let embedding = fit_embedding(ctx, &sample, method)?;
    let t_fit = t1.elapsed().as_secs_f64();
    let t2 = Instant::now();
    let field = backward_recursion(
        problem,
        &embedding,
        points,
        &RecursionOptions::default(),
    )?;
    let t_recursion = t2.elapsed().as_secs_f64();
    Ok(BenchTimes {
        sample: t_sample,
        fit: t_fit,
        recursion: t_recursion,
        value: field.layer(0)?[0],
    })
}

fn median(mut v: Vec<f64>) -> f64 {
    v.sort_by(|a, b| a.partial_cmp(b).expect("finite times"));
    v[v.len() / 2]
}

/// Build system/problem/plan/points for a repeated-quadrotor sweep entry.
fn repeated_setup(
    ctx: &Context,
    copies: usize,
) -> Result<(SystemModel, SafetyProblem, SamplingPlan, Array2<f64>)> {
    let base = SystemModel::quadrotor(
        kernel_reach_core::QuadrotorParams::default(),
        ctx.build_disturbance(6)?,
    )?;
    let system = repeated_system(base, copies)?;
    let hover = hover_lqr_policy(
        &kernel_reach_core::QuadrotorParams::default(),
        &LqrWeights::default(),
        default_hover_reference(),
    )?;
    let policy = MarkovPolicy::per_block(hover, copies, 6, repeated_quadrotor_shifts(copies))?;
    let problem = SafetyProblem::new(
        repeated_quadrotor_safe_set(copies)?,
        repeated_quadrotor_target_set(copies)?,
        ctx.config.problem.horizon.unwrap_or(1),
        policy,
    )?;
    let shifts = repeated_quadrotor_shifts(copies);
    let reference = default_hover_reference();
    let mut center = Vec::with_capacity(6 * copies);
    for c in 0..copies {
        for a in 0..6 {
            center.push(reference[a] + shifts[[c, a]]);
        }
    }
    let plan = SamplingPlan::gaussian_around(center, 0.25)?;
    Ok((system, problem, plan, default_repeated_point(copies)))
}

pub fn cmd_bench(ctx: &Context) -> Result<()> {
    let warmup = ctx.config.bench.warmup.unwrap_or(1).max(1);
    let iters = ctx.config.bench.iters.unwrap_or(3).max(3);
    let sweep: Vec<Option<usize>> = if ctx.system_name() == "repeated-quadrotor" {
        ctx.config
            .bench
            .copies
            .clone()
            .unwrap_or_else(|| vec![ctx.copies()])
            .into_iter()
            .map(Some)
            .collect()
    } else {
        vec![None]
    };
    let methods = ctx.config.bench.methods.clone().unwrap_or_else(|| {
        if ctx.system_name() == "integrator" {
            vec!["dp".into(), "exact".into(), "rff".into()]
        } else {
            vec!["exact".into(), "rff".into()]
        }
    });
    let mut runs = Vec::new();
    for copies in &sweep {
        let (system, problem, plan, points) = match copies {
            Some(c) => repeated_setup(ctx, *c)?,
            None => {
                let system = ctx.build_system()?;
                let problem = ctx.build_problem(&system)?;
                let plan = ctx.build_plan(&system)?;
                let points = if let Some(pts) = &ctx.config.reach.points {
                    points_matrix(pts, system.state_dim())?
                } else if ctx.system_name() == "integrator" {
                    points_matrix(&[vec![0.6, 0.0]], 2)?
                } else {
                    eval_points(ctx, &system, &problem)?
                };
                (system, problem, plan, points)
            }
        };
        for method in &methods {
            if method == "dp" && copies.is_some() {
                continue;
            }
            ctx.check_memory(
                &format!("bench ({method}, n={})", system.state_dim()),
                fit_memory_estimate(
                    method,
                    ctx.sample_size(),
                    system.state_dim(),
                    system.input_dim(),
                    ctx.rff_d(),
                ),
            )?;
            for _ in 0..warmup {
                bench_once(ctx, &system, &problem, &plan, method, points.view())?;
            }
            let mut samples = Vec::with_capacity(iters);
            for _ in 0..iters {
                samples.push(bench_once(ctx, &system, &problem, &plan, method, points.view())?);
            }
            let value = samples[0].value;
            if samples.iter().any(|s| s.value.to_bits() != value.to_bits()) {
                return Err(CoreError::Numerical(
                    "benchmark repetitions produced different values under a fixed seed".into(),
                ));
            }
            let sample_t = median(samples.iter().map(|s| s.sample).collect());
            let fit_t = median(samples.iter().map(|s| s.fit).collect());
            let rec_t = median(samples.iter().map(|s| s.recursion).collect());
            let total = sample_t + fit_t + rec_t;
            println!(
                "{:>20} {:>5}: sample {:8.3}s  fit {:8.3}s  recursion {:8.3}s  total {:8.3}s  V0 {:.6}",
                format!("{} n={}", method, system.state_dim()),
                copies.map(|c| c.to_string()).unwrap_or_else(|| "-".into()),
                sample_t,
                fit_t,
                rec_t,
                total,
                value
            );
            runs.push(json!({
                "method": method,
                "copies": copies,
                "state_dim": system.state_dim(),
                "m": ctx.sample_size(),
                "d": if method == "rff" { Some(ctx.rff_d()) } else { None },
                "horizon": problem.horizon(),
                "phases": {"sample": sample_t, "fit": fit_t, "recursion": rec_t},
                "total": total,
                "value": value,
            }));
        }
    }
    let report = json!({
        "env": {
            "os": std::env::consts::OS,
            "arch": std::env::consts::ARCH,
            "cpus": std::thread::available_parallelism().map(|c| c.get()).unwrap_or(1),
            "version": env!("CARGO_PKG_VERSION"),
        },
        "warmup": warmup,
        "iters": iters,
        "seed": ctx.seed,
        "runs": runs,
    });
    let path = ctx.out_path("bench.json");
    std::fs::write(
        &path,
        serde_json::to_string_pretty(&report).expect("serializable") + "\n",
    )?;
    println!("wrote {}", path.display());
    Ok(())
}
