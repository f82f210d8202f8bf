use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand};
use ndarray::{Array1, Array2};
use serde_json::{json, Value};

use modelrepair::conditions::{estimate_conditions, recovery_score};
use modelrepair::harness::{
    parse_index_grid, parse_real_grid, run_experiment, write_outputs, ExperimentKind, ExperimentSpec, PGrid,
};
use modelrepair::io::{read_matrix, read_vector, write_matrix, write_vector};
use modelrepair::l1solve::{L1Regressor, RecoveryVerdict, SolverOptions, SolverReport, SolverStatus, certify_recovery};
use modelrepair::linmod::{min_norm_fit, Activation};
use modelrepair::neural::{
    mlp_init, read_bundle, repair_mlp, train, write_bundle, BundleManifest, InitSnapshot, MlpRepairOptions, ModelBundle,
    OutputBase, TrainConfig, TrainMode,
};
use modelrepair::randgen::{corrupt, corrupt_matrix, gaussian_matrix, gaussian_vector, ContaminationLaw, CorruptionModel, RngSeed};
use modelrepair::RepairError;

const EXIT_ITERATION_LIMIT: u8 = 2;
const EXIT_DEGENERATE: u8 = 3;
const EXIT_CELL_FAILURES: u8 = 4;

#[derive(Parser)]
#[command(name = "modelrepair", version, about = "Repair corrupted over-parameterized models by median regression")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Solve min ||eta - A u||_1 and report the repaired estimate.
    Repair(RepairArgs),
    /// Generate a linear regression bundle (X, y, theta, eta) with its seeds.
    Simulate(SimulateArgs),
    /// Estimate the design conditions and the recovery score.
    CheckConditions(ConditionArgs),
    /// Run a Monte-Carlo repair experiment.
    Experiment(ExperimentArgs),
    /// Train a two-layer network and save it as a bundle.
    NnTrain(NnTrainArgs),
    /// Corrupt every parameter of a network bundle.
    NnCorrupt(NnCorruptArgs),
    /// Repair a corrupted network bundle layer by layer.
    NnRepair(NnRepairArgs),
}

#[derive(Args)]
struct CorruptionArgs {
    /// Corruption fraction.
    #[arg(long, default_value_t = 0.1)]
    eps: f64,
    /// Contamination law: normal:MEAN,SD, constant:VALUE or cauchy:LOC,SCALE.
    #[arg(long = "Q", default_value = "normal:1,1")]
    q: ContaminationLaw,
}

impl CorruptionArgs {
    fn model(&self) -> Result<CorruptionModel> {
        let model = CorruptionModel::new(self.eps, self.q);
        model.validate()?;
        Ok(model)
    }
}

#[derive(Args)]
struct RepairArgs {
    /// Design CSV; `m x k` matrix A unless --design-is-x.
    #[arg(long)]
    design: PathBuf,
    /// The design file holds X (`n x p`); the regression uses A = X^T.
    #[arg(long)]
    design_is_x: bool,
    /// Corrupted estimate eta, one value per row of A.
    #[arg(long)]
    eta: PathBuf,
    /// Uncorrupted estimate, to certify exact recovery.
    #[arg(long)]
    reference: Option<PathBuf>,
    /// Relative tolerance for the exactness verdict.
    #[arg(long, default_value_t = 1e-6)]
    rel_tol: f64,
    #[arg(long, default_value_t = 200)]
    max_iter: usize,
    /// Directory for u_hat.csv, repaired.csv and report.json; prints the report when absent.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct SimulateArgs {
    #[arg(long)]
    n: usize,
    #[arg(long)]
    p: usize,
    #[command(flatten)]
    corruption: CorruptionArgs,
    /// Standard deviation of the response noise.
    #[arg(long, default_value_t = 0.1)]
    noise_sd: f64,
    #[arg(long, default_value = "1")]
    seed: RngSeed,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct ConditionArgs {
    /// Design CSV, `m x k`.
    #[arg(long)]
    design: PathBuf,
    /// The design file holds X (`n x p`); conditions are checked on X^T.
    #[arg(long)]
    design_is_x: bool,
    #[arg(long, default_value_t = 0.1)]
    eps: f64,
    /// Sign probes for the first condition.
    #[arg(long, default_value_t = 64)]
    probes: usize,
    /// Sphere starts for the second condition.
    #[arg(long, default_value_t = 8)]
    starts: usize,
    #[arg(long, default_value = "1")]
    seed: RngSeed,
}

#[derive(Args)]
struct ExperimentArgs {
    /// linear_curve, mean_shift, random_features, nn_repair or sgd_curve.
    #[arg(long)]
    kind: ExperimentKind,
    /// Start from the full-scale grids instead of the desk-scale ones.
    #[arg(long)]
    full: bool,
    /// Spec JSON, or a manifest.json from an earlier run; other flags override it.
    #[arg(long)]
    spec: Option<PathBuf>,
    #[arg(long)]
    n: Option<usize>,
    /// With --k: p = ratio * n / k (rounded).
    #[arg(long)]
    ratio: Option<f64>,
    /// Index grid such as 1..6 or 1,2,4.
    #[arg(long)]
    k: Option<String>,
    /// Explicit list of p values, e.g. 500,1000.
    #[arg(long, conflicts_with_all = ["ratio", "k"])]
    p: Option<String>,
    /// Epsilon grid such as 0:0.05:1 or 0.1,0.2.
    #[arg(long)]
    eps: Option<String>,
    /// Mean-shift levels c (design mean c / sqrt(n)).
    #[arg(long)]
    mu: Option<String>,
    /// Network training modes, comma separated (joint, retrain_output).
    #[arg(long)]
    modes: Option<String>,
    #[arg(long)]
    t_max: Option<usize>,
    #[arg(long)]
    activation: Option<Activation>,
    #[arg(long)]
    trials: Option<usize>,
    #[arg(long)]
    seed: Option<RngSeed>,
    #[arg(long, default_value = "1")]
    threads: usize,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct NnTrainArgs {
    /// Inputs, `n x d`.
    #[arg(long)]
    x: PathBuf,
    /// Targets, length n.
    #[arg(long)]
    y: PathBuf,
    /// Hidden width.
    #[arg(long)]
    p: usize,
    #[arg(long, default_value = "tanh")]
    activation: Activation,
    #[arg(long, default_value = "joint")]
    mode: TrainMode,
    #[arg(long, default_value_t = 200)]
    t_max: usize,
    /// Step size; defaults to 0.1 / lambda_max of the tangent kernel.
    #[arg(long)]
    gamma: Option<f64>,
    /// Seed of the initialization.
    #[arg(long, default_value = "1")]
    seed: RngSeed,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct NnCorruptArgs {
    #[arg(long)]
    bundle: PathBuf,
    #[command(flatten)]
    corruption: CorruptionArgs,
    #[arg(long, default_value = "1")]
    seed: RngSeed,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct NnRepairArgs {
    /// Corrupted bundle.
    #[arg(long)]
    bundle: PathBuf,
    /// Training inputs, `n x d`.
    #[arg(long)]
    x: PathBuf,
    /// Uncorrupted bundle, to certify recovery.
    #[arg(long)]
    reference: Option<PathBuf>,
    #[arg(long, default_value_t = 1e-6)]
    rel_tol: f64,
    #[arg(long)]
    out: PathBuf,
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let res = match cli.command {
        Command::Repair(a) => cmd_repair(a),
        Command::Simulate(a) => cmd_simulate(a),
        Command::CheckConditions(a) => cmd_check_conditions(a),
        Command::Experiment(a) => cmd_experiment(a),
        Command::NnTrain(a) => cmd_nn_train(a),
        Command::NnCorrupt(a) => cmd_nn_corrupt(a),
        Command::NnRepair(a) => cmd_nn_repair(a),
    };
    match res {
        Ok(code) => ExitCode::from(code),
        Err(e) => {
            eprintln!("error: {e:#}");
            let degenerate = e
                .downcast_ref::<RepairError>()
                .is_some_and(|r| matches!(r, RepairError::Degenerate(_) | RepairError::Rank(_)));
            ExitCode::from(if degenerate { EXIT_DEGENERATE } else { 1 })
        }
    }
}

fn status_code(status: SolverStatus) -> u8 {
    match status {
        SolverStatus::Optimal => 0,
        SolverStatus::IterationLimit => EXIT_ITERATION_LIMIT,
        SolverStatus::NumericalFailure => 1,
    }
}

fn report_json(r: &SolverReport<f64>) -> Value {
    json!({
        "status": format!("{:?}", r.status),
        "objective": r.objective,
        "iterations": r.iterations,
        "duality_gap": r.duality_gap,
        "degenerate": r.degenerate,
        "crossover": r.crossover,
    })
}

fn verdict_json(v: &RecoveryVerdict<f64>) -> Value {
    json!({
        "exact": v.exact,
        "max_abs_dev": v.max_abs_dev,
        "match_rate": v.match_rate(),
        "tol_used": v.tol_used,
    })
}

fn write_json(path: &Path, v: &Value) -> Result<()> {
    fs::write(path, serde_json::to_string_pretty(v)? + "\n").with_context(|| format!("writing {}", path.display()))
}

fn cmd_repair(a: RepairArgs) -> Result<u8> {
    let raw = read_matrix::<f64>(&a.design).with_context(|| format!("reading {}", a.design.display()))?;
    let design = if a.design_is_x { raw.t().to_owned() } else { raw };
    let eta = read_vector::<f64>(&a.eta).with_context(|| format!("reading {}", a.eta.display()))?;
    if eta.len() != design.nrows() {
        bail!("eta has {} entries but the design has {} rows", eta.len(), design.nrows());
    }
    let opts = SolverOptions {
        max_iter: a.max_iter,
        ..SolverOptions::default()
    };
    let report = L1Regressor::new(design.clone(), opts)?.solve(eta.view())?;
    let repaired = design.dot(&report.u_hat);
    let verdict = match &a.reference {
        Some(path) => {
            let reference = read_vector::<f64>(path)?;
            Some(certify_recovery(repaired.view(), reference.view(), a.rel_tol)?)
        }
        None => None,
    };
    let mut out = report_json(&report);
    out["verdict"] = verdict.as_ref().map(verdict_json).unwrap_or(Value::Null);
    match &a.out {
        Some(dir) => {
            fs::create_dir_all(dir)?;
            write_vector(dir.join("u_hat.csv"), report.u_hat.view(), None)?;
            write_vector(dir.join("repaired.csv"), repaired.view(), None)?;
            write_json(&dir.join("report.json"), &out)?;
        }
        None => println!("{}", serde_json::to_string_pretty(&out)?),
    }
    Ok(status_code(report.status))
}

fn cmd_simulate(a: SimulateArgs) -> Result<u8> {
    if a.p <= a.n {
        bail!("simulate needs p > n, got n={}, p={}", a.n, a.p);
    }
    let model = a.corruption.model()?;
    let seeds: BTreeMap<String, RngSeed> = [
        ("base", a.seed),
        ("x", a.seed.derive(&[0])),
        ("theta_star", a.seed.derive(&[1])),
        ("noise", a.seed.derive(&[2])),
        ("corruption", a.seed.derive(&[3])),
    ]
    .into_iter()
    .map(|(k, v)| (k.to_string(), v))
    .collect();
    let x = gaussian_matrix::<f64>(a.n, a.p, 0.0, 1.0, seeds["x"])?.entries;
    let theta_star = gaussian_vector::<f64>(a.p, 0.0, 1.0 / (a.p as f64).sqrt(), seeds["theta_star"])?;
    let noise = gaussian_vector::<f64>(a.n, 0.0, a.noise_sd, seeds["noise"])?;
    let y = x.dot(&theta_star) + &noise;
    let fit = min_norm_fit(x.view(), y.view())?;
    let corrupted = corrupt(fit.theta_hat.view(), &model, seeds["corruption"])?;
    let mask: Array1<f64> = corrupted.mask.iter().map(|&m| if m { 1.0 } else { 0.0 }).collect();

    fs::create_dir_all(&a.out)?;
    write_matrix(a.out.join("X.csv"), x.view(), None)?;
    write_vector(a.out.join("y.csv"), y.view(), None)?;
    write_vector(a.out.join("theta_star.csv"), theta_star.view(), None)?;
    write_vector(a.out.join("theta_hat.csv"), fit.theta_hat.view(), None)?;
    write_vector(a.out.join("eta.csv"), corrupted.eta.view(), None)?;
    write_vector(a.out.join("mask.csv"), mask.view(), None)?;
    let manifest = json!({
        "n": a.n,
        "p": a.p,
        "noise_sd": a.noise_sd,
        "fit": "min_norm",
        "corruption": model,
        "corrupted": corrupted.corrupted_count(),
        "seeds": seeds,
        "files": ["X.csv", "y.csv", "theta_star.csv", "theta_hat.csv", "eta.csv", "mask.csv"],
    });
    write_json(&a.out.join("manifest.json"), &manifest)?;
    Ok(0)
}

fn cmd_check_conditions(a: ConditionArgs) -> Result<u8> {
    let raw = read_matrix::<f64>(&a.design).with_context(|| format!("reading {}", a.design.display()))?;
    let design = if a.design_is_x { raw.t().to_owned() } else { raw };
    let (m, k) = design.dim();
    let est = estimate_conditions(design.view(), a.probes, a.starts, a.seed)?;
    let pred = recovery_score(&est, m, k, a.eps)?;
    let out = json!({ "estimates": est, "prediction": pred, "predicts_recovery": pred.score < 1.0 });
    println!("{}", serde_json::to_string_pretty(&out)?);
    Ok(0)
}

fn split_list<T: std::str::FromStr>(s: &str) -> Result<Vec<T>>
where
    T::Err: std::fmt::Display,
{
    s.split(',')
        .map(|t| t.trim().parse::<T>().map_err(|e| anyhow::anyhow!("{t:?}: {e}")))
        .collect()
}

fn cmd_experiment(a: ExperimentArgs) -> Result<u8> {
    let mut spec = match &a.spec {
        Some(path) => {
            // either a bare spec or a manifest carrying one
            let mut v: Value = serde_json::from_str(&fs::read_to_string(path)?)?;
            let spec = v.get_mut("spec").map(Value::take).unwrap_or(v);
            serde_json::from_value::<ExperimentSpec>(spec)?
        }
        None if a.full => ExperimentSpec::full(a.kind),
        None => ExperimentSpec::desk(a.kind),
    };
    if spec.kind != a.kind {
        bail!("spec file is for {:?}, not {:?}", spec.kind, a.kind);
    }
    if let Some(n) = a.n {
        spec.n = n;
    }
    if let Some(p) = &a.p {
        spec.p_grid = PGrid::Explicit { values: split_list(p)? };
    } else if a.ratio.is_some() || a.k.is_some() {
        let (ratio, k) = match &spec.p_grid {
            PGrid::Ratio { ratio, k } => (*ratio, k.clone()),
            PGrid::Explicit { .. } => (200.0, vec![1]),
        };
        spec.p_grid = PGrid::Ratio {
            ratio: a.ratio.unwrap_or(ratio),
            k: match &a.k {
                Some(s) => parse_index_grid(s)?,
                None => k,
            },
        };
    }
    if let Some(e) = &a.eps {
        spec.eps_grid = parse_real_grid(e)?;
    }
    if let Some(m) = &a.mu {
        spec.mu_grid = parse_real_grid(m)?;
    }
    if let Some(m) = &a.modes {
        spec.nn.modes = split_list(m)?;
    }
    if let Some(t) = a.t_max {
        spec.nn.t_max = t;
    }
    if let Some(act) = a.activation {
        spec.activation = act;
        spec.nn.activation = act;
    }
    if let Some(t) = a.trials {
        spec.trials = t;
    }
    if let Some(s) = a.seed {
        spec.seed = s;
    }
    spec.validate()?;
    rayon::ThreadPoolBuilder::new().num_threads(a.threads.max(1)).build_global().ok();
    let out = run_experiment(&spec)?;
    let files = write_outputs(&out, &a.out)?;
    let failures = out.table.total_failures();
    for row in &out.table.rows {
        println!("{:<24} eps={:<5} repair_prob={:.3} (+/- {:.3})", row.curve, row.eps, row.repair_prob, row.mc_stderr);
    }
    eprintln!("wrote {} files to {}", files.len(), a.out.display());
    if failures > 0 {
        eprintln!("{failures} trials had solver failures");
        return Ok(EXIT_CELL_FAILURES);
    }
    Ok(0)
}

fn cmd_nn_train(a: NnTrainArgs) -> Result<u8> {
    let x = read_matrix::<f64>(&a.x).with_context(|| format!("reading {}", a.x.display()))?;
    let y = read_vector::<f64>(&a.y).with_context(|| format!("reading {}", a.y.display()))?;
    let (n, d) = x.dim();
    let params = mlp_init::<f64>(a.p, d, a.activation, a.seed)?;
    let cfg = TrainConfig {
        gamma: a.gamma,
        t_max: a.t_max,
        mode: a.mode,
        ..TrainConfig::default()
    };
    let (trained, trace) = train(x.view(), y.view(), &params, &cfg)?;
    let bundle = ModelBundle {
        hidden: trained.hidden,
        output: trained.output,
        manifest: BundleManifest {
            n,
            d,
            p: a.p,
            activation: a.activation,
            mode: a.mode,
            t_max: a.t_max,
            gamma: trace.gamma,
            normalized: trained.normalized,
            init_seed: a.seed,
            seeds: BTreeMap::new(),
            corruption: None,
        },
    };
    write_bundle(&a.out, &bundle)?;
    let loss = Array1::from(trace.loss_per_iter.clone());
    write_vector(a.out.join("trace.csv"), loss.view(), Some("loss"))?;
    eprintln!(
        "gamma={:.4e}, loss {:.4e} -> {:.4e} over {} steps",
        trace.gamma,
        trace.loss_per_iter[0],
        trace.loss_per_iter[trace.loss_per_iter.len() - 1],
        a.t_max
    );
    Ok(0)
}

fn cmd_nn_corrupt(a: NnCorruptArgs) -> Result<u8> {
    let model = a.corruption.model()?;
    let mut bundle = read_bundle::<f64>(&a.bundle)?;
    let (w_seed, b_seed) = (a.seed.derive(&[0]), a.seed.derive(&[1]));
    let (hidden, _) = corrupt_matrix(&bundle.hidden, &model, w_seed)?;
    let output = corrupt(bundle.output.view(), &model, b_seed)?.eta;
    bundle.hidden = hidden;
    bundle.output = output;
    bundle.manifest.seeds.insert("corruption_w".into(), w_seed);
    bundle.manifest.seeds.insert("corruption_beta".into(), b_seed);
    bundle.manifest.corruption = Some(model);
    write_bundle(&a.out, &bundle)?;
    Ok(0)
}

fn cmd_nn_repair(a: NnRepairArgs) -> Result<u8> {
    let corrupted = read_bundle::<f64>(&a.bundle)?;
    let x: Array2<f64> = read_matrix(&a.x).with_context(|| format!("reading {}", a.x.display()))?;
    let m = &corrupted.manifest;
    if x.ncols() != m.d {
        bail!("X has {} columns but the bundle has d={}", x.ncols(), m.d);
    }
    let init = InitSnapshot::<f64>::generate(m.p, m.d, m.init_seed)?;
    let reference = a.reference.as_ref().map(read_bundle::<f64>).transpose()?;
    let opts = MlpRepairOptions {
        rel_tol: a.rel_tol,
        output_base: OutputBase::for_mode(m.mode),
        ..MlpRepairOptions::default()
    };
    let res = repair_mlp(
        corrupted.output.view(),
        corrupted.hidden.view(),
        x.view(),
        &init,
        m.activation,
        &opts,
        reference.as_ref().map(|r| (r.hidden.view(), r.output.view())),
    )?;
    let failed = res.failed_columns();
    let report = json!({
        "all_optimal": res.all_optimal(),
        "failed_hidden_columns": failed,
        "output": report_json(&res.output_report),
        "hidden_verdict": res.hidden_verdict.as_ref().map(verdict_json),
        "output_verdict": res.output_verdict.as_ref().map(verdict_json),
        "hidden_mse": res.hidden_mse,
        "output_mse": res.output_mse,
        "exact": res.exact(),
    });
    let mut manifest = corrupted.manifest.clone();
    manifest.corruption = None;
    let repaired = ModelBundle {
        hidden: res.hidden,
        output: res.output,
        manifest,
    };
    write_bundle(&a.out, &repaired)?;
    write_json(&a.out.join("report.json"), &report)?;
    let worst = res
        .column_reports
        .iter()
        .chain(std::iter::once(&res.output_report))
        .map(|r| status_code(r.status))
        .max()
        .unwrap_or(0);
    Ok(worst)
}
