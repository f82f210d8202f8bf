//! Monte-Carlo experiments over corruption grids, emitting CSV tables, SVG
//! plots and a manifest of the resolved configuration.

mod grid;
mod svg;
mod table;

use std::path::{Path, PathBuf};
use std::time::Instant;

use ndarray::{Array1, Array2};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

pub use grid::{parse_index_grid, parse_real_grid};
pub use svg::{emit_svg, render_svg, Metric};
pub use table::{emit_csv, parse_csv, read_csv, write_rows, CurveRow, CurveTable, TrialRecord};

use crate::error::{param_err, RepairError, Result};
use crate::l1solve::{SolverOptions, SolverStatus};
use crate::linmod::{apply_features, gd_fit, min_norm_fit, repair_linear, repair_sgd_model, sgd_fit, Activation, FeatureMap, GdConfig, LinearRepair, Loss, RepairOptions};
use crate::neural::{mlp_init, repair_mlp, train, MlpRepairOptions, OutputBase, TrainConfig, TrainMode};
use crate::randgen::{corrupt, corrupt_matrix, gaussian_matrix, gaussian_vector, ContaminationLaw, CorruptionModel, RngSeed};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ExperimentKind {
    LinearCurve,
    MeanShift,
    RandomFeatures,
    NnRepair,
    SgdCurve,
}

impl std::str::FromStr for ExperimentKind {
    type Err = RepairError;
    fn from_str(s: &str) -> Result<Self> {
        match s.trim().to_ascii_lowercase().replace('-', "_").as_str() {
            "linear_curve" => Ok(ExperimentKind::LinearCurve),
            "mean_shift" => Ok(ExperimentKind::MeanShift),
            "random_features" => Ok(ExperimentKind::RandomFeatures),
            "nn_repair" => Ok(ExperimentKind::NnRepair),
            "sgd_curve" => Ok(ExperimentKind::SgdCurve),
            other => Err(RepairError::Parse(format!("unknown experiment kind {other:?}"))),
        }
    }
}

/// How the parameter dimension `p` is chosen.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "rule", rename_all = "snake_case")]
pub enum PGrid {
    Explicit { values: Vec<usize> },
    /// `p_k = round(ratio * n / k^2)`.
    Ratio { ratio: f64, k: Vec<usize> },
}

/// Input dimension of random-feature designs relative to `p`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DRule {
    /// `d = p`.
    Full,
    /// `d = ceil(2p/3)`.
    TwoThirds,
    /// `d = ceil(p/2)`.
    Half,
}

impl DRule {
    pub fn apply(self, p: usize) -> usize {
        match self {
            DRule::Full => p,
            DRule::TwoThirds => (2 * p).div_ceil(3),
            DRule::Half => p.div_ceil(2),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NnSettings {
    pub modes: Vec<TrainMode>,
    pub t_max: usize,
    /// `None` selects the kernel-based default step.
    pub gamma: Option<f64>,
    /// `d = ceil(d_ratio * p)`.
    pub d_ratio: f64,
    pub activation: Activation,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SgdSettings {
    /// Share of the `n` rows an SGD pass visits.
    pub visited_fraction: f64,
    pub batch_size: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExperimentSpec {
    pub kind: ExperimentKind,
    pub n: usize,
    pub p_grid: PGrid,
    /// Random-features input dimensions.
    pub d_rules: Vec<DRule>,
    pub eps_grid: Vec<f64>,
    /// Mean-shift levels `c`; the design mean is `c / sqrt(n)`.
    pub mu_grid: Vec<f64>,
    pub trials: usize,
    pub seed: RngSeed,
    pub contamination: ContaminationLaw,
    /// Standard deviation of the response noise `w`.
    pub noise_sd: f64,
    /// Slope of the threshold adjustment `eps + c' k - 1/2`.
    pub c_prime: f64,
    /// Random-features activation.
    pub activation: Activation,
    /// Subtract the analytic feature mean (ReLU).
    pub centering: bool,
    pub gd_iters: usize,
    pub gd_residual_tol: f64,
    pub nn: NnSettings,
    pub sgd: SgdSettings,
    pub solver: SolverOptions,
    pub rel_tol: f64,
}

impl ExperimentSpec {
    /// Desk-scale defaults: same `p/n` ratios as the full protocol, fewer
    /// trials and smaller `n`.
    pub fn desk(kind: ExperimentKind) -> Self {
        let base = ExperimentSpec {
            kind,
            n: 50,
            p_grid: PGrid::Ratio {
                ratio: 200.0,
                k: (1..=6).collect(),
            },
            d_rules: vec![DRule::Full, DRule::TwoThirds, DRule::Half],
            eps_grid: parse_real_grid("0:0.05:1").expect("static grid"),
            mu_grid: vec![0.0],
            trials: 50,
            seed: RngSeed(1),
            contamination: ContaminationLaw::default(),
            noise_sd: 0.1,
            c_prime: 0.085,
            activation: Activation::Tanh,
            centering: false,
            gd_iters: 1000,
            gd_residual_tol: 1e-10,
            nn: NnSettings {
                modes: vec![TrainMode::RetrainOutput, TrainMode::Joint],
                t_max: 100,
                gamma: None,
                d_ratio: 0.5,
                activation: Activation::Tanh,
            },
            sgd: SgdSettings {
                visited_fraction: 0.5,
                batch_size: 5,
            },
            solver: SolverOptions::default(),
            rel_tol: 1e-6,
        };
        match kind {
            ExperimentKind::LinearCurve => base,
            ExperimentKind::MeanShift => ExperimentSpec {
                p_grid: PGrid::Explicit { values: vec![500] },
                mu_grid: vec![0.0, 0.5, 1.0, 1.5, 2.0],
                eps_grid: parse_real_grid("0:0.05:0.8").expect("static grid"),
                ..base
            },
            ExperimentKind::RandomFeatures => ExperimentSpec {
                p_grid: PGrid::Explicit { values: vec![1000] },
                eps_grid: parse_real_grid("0:0.1:0.9").expect("static grid"),
                ..base
            },
            ExperimentKind::NnRepair => ExperimentSpec {
                p_grid: PGrid::Explicit { values: vec![400] },
                eps_grid: parse_real_grid("0:0.1:0.6").expect("static grid"),
                trials: 20,
                ..base
            },
            ExperimentKind::SgdCurve => ExperimentSpec {
                p_grid: PGrid::Explicit { values: vec![10_000] },
                eps_grid: parse_real_grid("0:0.1:0.9").expect("static grid"),
                trials: 20,
                ..base
            },
        }
    }

    /// Full-scale grids: the published sample sizes and trial counts.
    pub fn full(kind: ExperimentKind) -> Self {
        let desk = Self::desk(kind);
        match kind {
            ExperimentKind::LinearCurve => ExperimentSpec { n: 100, trials: 500, ..desk },
            ExperimentKind::MeanShift => ExperimentSpec { trials: 500, ..desk },
            ExperimentKind::RandomFeatures => ExperimentSpec {
                p_grid: PGrid::Explicit {
                    values: vec![500, 1000, 2500],
                },
                trials: 100,
                ..desk
            },
            ExperimentKind::NnRepair => ExperimentSpec {
                p_grid: PGrid::Explicit {
                    values: vec![400, 800, 1600],
                },
                eps_grid: parse_real_grid("0:0.05:0.6").expect("static grid"),
                trials: 100,
                ..desk
            },
            ExperimentKind::SgdCurve => ExperimentSpec { trials: 100, ..desk },
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.n == 0 || self.trials == 0 {
            return param_err("n and trials must be >= 1");
        }
        if self.eps_grid.is_empty() || self.eps_grid.iter().any(|e| !(0.0..=1.0).contains(e)) {
            return param_err("epsilon grid must be non-empty and inside [0, 1]");
        }
        let p_ok = match &self.p_grid {
            PGrid::Explicit { values } => !values.is_empty() && values.iter().all(|&p| p > 0),
            PGrid::Ratio { ratio, k } => *ratio > 0.0 && !k.is_empty() && k.iter().all(|&k| k > 0),
        };
        if !p_ok {
            return param_err("p grid must be non-empty with positive entries");
        }
        if self.kind == ExperimentKind::MeanShift && self.mu_grid.is_empty() {
            return param_err("mean-shift grid is empty");
        }
        if self.kind == ExperimentKind::RandomFeatures && self.d_rules.is_empty() {
            return param_err("d rule list is empty");
        }
        if self.kind == ExperimentKind::NnRepair && (self.nn.modes.is_empty() || !(self.nn.d_ratio > 0.0)) {
            return param_err("nn settings need at least one mode and a positive d ratio");
        }
        if self.kind == ExperimentKind::SgdCurve && (self.sgd.batch_size == 0 || !(self.sgd.visited_fraction > 0.0 && self.sgd.visited_fraction <= 1.0)) {
            return param_err("sgd settings need batch_size >= 1 and visited_fraction in (0, 1]");
        }
        if !(self.noise_sd >= 0.0) {
            return param_err("noise_sd must be >= 0");
        }
        CorruptionModel::new(0.0, self.contamination).validate()
    }

    /// `(p, k index)` pairs.
    fn dimensions(&self) -> Vec<(usize, Option<usize>)> {
        match &self.p_grid {
            PGrid::Explicit { values } => values.iter().map(|&p| (p, None)).collect(),
            PGrid::Ratio { ratio, k } => k
                .iter()
                .map(|&k| (((ratio * self.n as f64) / (k * k) as f64).round() as usize, Some(k)))
                .collect(),
        }
    }

    /// Cells in output order.
    pub fn cells(&self) -> Vec<Cell> {
        let mut cells = Vec::new();
        let n = self.n;
        for (p, k_index) in self.dimensions() {
            let mut push_curve = |curve: String, d: usize, mu_c: f64, mode: Option<TrainMode>| {
                for &eps in &self.eps_grid {
                    cells.push(Cell {
                        curve: curve.clone(),
                        n,
                        p,
                        d,
                        eps,
                        k_index,
                        mu: mu_c / (n as f64).sqrt(),
                        mode,
                    });
                }
            };
            let label = match k_index {
                Some(k) => format!("k={k}"),
                None => format!("p={p}"),
            };
            match self.kind {
                ExperimentKind::LinearCurve | ExperimentKind::SgdCurve => push_curve(label, p, 0.0, None),
                ExperimentKind::MeanShift => {
                    for &c in &self.mu_grid {
                        push_curve(format!("{label},c={c}"), p, c, None);
                    }
                }
                ExperimentKind::RandomFeatures => {
                    for rule in &self.d_rules {
                        let d = rule.apply(p);
                        push_curve(format!("{label},d={d}"), d, 0.0, None);
                    }
                }
                ExperimentKind::NnRepair => {
                    let d = (self.nn.d_ratio * p as f64).ceil() as usize;
                    for &mode in &self.nn.modes {
                        let tag = match mode {
                            TrainMode::Joint => "joint",
                            TrainMode::RetrainOutput => "retrain_output",
                        };
                        push_curve(format!("{tag},{label}"), d, 0.0, Some(mode));
                    }
                }
            }
        }
        cells
    }
}

/// One point of the experiment grid.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Cell {
    pub curve: String,
    pub n: usize,
    pub p: usize,
    pub d: usize,
    pub eps: f64,
    pub k_index: Option<usize>,
    /// Design mean.
    pub mu: f64,
    pub mode: Option<TrainMode>,
}

impl Cell {
    /// Per-trial seed from the base seed and the cell coordinates. The
    /// experiment kind is deliberately not hashed, so identical protocols
    /// (e.g. zero mean shift vs. the plain linear curve) share draws.
    pub fn trial_seed(&self, base: RngSeed, trial: usize) -> RngSeed {
        base.derive(&[
            self.n as u64,
            self.p as u64,
            self.d as u64,
            self.eps.to_bits(),
            self.mu.to_bits(),
            trial as u64,
        ])
    }
}

/// `eps + c' k - 1/2`.
pub fn adjusted_epsilon(eps: f64, k: usize, c_prime: f64) -> f64 {
    eps + c_prime * k as f64 - 0.5
}

fn status_failure(statuses: impl IntoIterator<Item = SolverStatus>) -> Option<String> {
    statuses
        .into_iter()
        .find(|s| *s != SolverStatus::Optimal)
        .map(|s| format!("solver status {s:?}"))
}

struct Outcome {
    exact: bool,
    match_rate: f64,
    mse_w: Option<f64>,
    mse_beta: Option<f64>,
    exact_w: Option<bool>,
    exact_beta: Option<bool>,
    failure: Option<String>,
}

impl Outcome {
    fn linear(rep: LinearRepair<f64>) -> Self {
        let v = rep.verdict.expect("reference supplied");
        Outcome {
            exact: v.exact,
            match_rate: v.match_rate(),
            mse_w: None,
            mse_beta: None,
            exact_w: None,
            exact_beta: None,
            failure: status_failure([rep.report.status]),
        }
    }
}

fn response(design: &Array2<f64>, coef: &Array1<f64>, noise_sd: f64, seed: RngSeed) -> Result<Array1<f64>> {
    let w = gaussian_vector::<f64>(design.nrows(), 0.0, noise_sd, seed)?;
    Ok(design.dot(coef) + w)
}

fn run_trial(spec: &ExperimentSpec, cell: &Cell, seed: RngSeed) -> Result<Outcome> {
    let model = CorruptionModel::new(cell.eps, spec.contamination);
    let opts = RepairOptions {
        solver: spec.solver,
        rel_tol: spec.rel_tol,
    };
    let sub = |i: u64| seed.derive(&[i]);
    let (n, p, d) = (cell.n, cell.p, cell.d);
    match spec.kind {
        ExperimentKind::LinearCurve | ExperimentKind::MeanShift => {
            let x = gaussian_matrix::<f64>(n, p, cell.mu, 1.0, sub(0))?.entries;
            let theta = gaussian_vector::<f64>(p, 0.0, 1.0, sub(1))?;
            let y = response(&x, &theta, spec.noise_sd, sub(2))?;
            let fit = min_norm_fit(x.view(), y.view())?;
            let eta = corrupt(fit.theta_hat.view(), &model, sub(3))?.eta;
            let rep = repair_linear(x.view(), eta.view(), Some(fit.theta_hat.view()), &opts)?;
            Ok(Outcome::linear(rep))
        }
        ExperimentKind::RandomFeatures => {
            let x = gaussian_matrix::<f64>(n, d, 0.0, 1.0, sub(0))?.entries;
            let mut fm = FeatureMap::gaussian(d, p, spec.activation, sub(4))?;
            if spec.centering {
                fm = fm.with_analytic_centering();
            }
            let phi = apply_features(x.view(), &fm)?.entries;
            let theta = gaussian_vector::<f64>(p, 0.0, 1.0, sub(1))?;
            let y = response(&phi, &theta, spec.noise_sd, sub(2))?;
            let cfg = GdConfig {
                loss: Loss::Squared,
                step: None,
                iters: spec.gd_iters,
                residual_tol: Some(spec.gd_residual_tol),
            };
            let fit = gd_fit(phi.view(), y.view(), &cfg)?;
            let eta = corrupt(fit.theta_hat.view(), &model, sub(3))?.eta;
            let rep = repair_linear(phi.view(), eta.view(), Some(fit.theta_hat.view()), &opts)?;
            Ok(Outcome::linear(rep))
        }
        ExperimentKind::SgdCurve => {
            let x = gaussian_matrix::<f64>(n, p, 0.0, 1.0, sub(0))?.entries;
            let theta = gaussian_vector::<f64>(p, 0.0, 1.0, sub(1))?;
            let y = response(&x, &theta, spec.noise_sd, sub(2))?;
            let visited = ((spec.sgd.visited_fraction * n as f64).ceil() as usize).clamp(1, n);
            let rows: Vec<usize> = (0..visited).collect();
            let batches: Vec<Vec<usize>> = rows.chunks(spec.sgd.batch_size).map(<[usize]>::to_vec).collect();
            let max_sq = rows.iter().map(|&i| x.row(i).dot(&x.row(i))).fold(0.0, f64::max);
            let fit = sgd_fit(x.view(), y.view(), Loss::Squared, 1.0 / max_sq, &batches)?;
            let eta = corrupt(fit.theta_hat.view(), &model, sub(3))?.eta;
            let rep = repair_sgd_model(x.view(), &fit.visited_rows, eta.view(), Some(fit.theta_hat.view()), &opts)?;
            Ok(Outcome::linear(rep))
        }
        ExperimentKind::NnRepair => {
            let mode = cell.mode.unwrap_or(TrainMode::RetrainOutput);
            let x = gaussian_matrix::<f64>(n, d, 0.0, 1.0, sub(0))?.entries;
            // bounded targets from a random single-index teacher
            let teacher = gaussian_vector::<f64>(d, 0.0, 1.0, sub(1))?;
            let noise = gaussian_vector::<f64>(n, 0.0, spec.noise_sd, sub(2))?;
            let y = (x.dot(&teacher) / (d as f64).sqrt()).mapv(f64::tanh) + noise;
            let params = mlp_init::<f64>(p, d, spec.nn.activation, sub(4))?;
            let cfg = TrainConfig {
                gamma: spec.nn.gamma,
                t_max: spec.nn.t_max,
                mode,
                ..TrainConfig::default()
            };
            let (trained, _) = train(x.view(), y.view(), &params, &cfg)?;
            let eta = corrupt(trained.output.view(), &model, sub(3))?.eta;
            let (theta, _) = corrupt_matrix(&trained.hidden, &model, sub(5))?;
            let ropts = MlpRepairOptions {
                solver: spec.solver,
                rel_tol: spec.rel_tol,
                output_base: OutputBase::for_mode(mode),
            };
            let rep = repair_mlp(
                eta.view(),
                theta.view(),
                x.view(),
                &trained.init,
                trained.activation,
                &ropts,
                Some((trained.hidden.view(), trained.output.view())),
            )?;
            let hv = rep.hidden_verdict.as_ref().expect("reference supplied");
            let ov = rep.output_verdict.as_ref().expect("reference supplied");
            let matched = hv.per_coord_match.iter().chain(&ov.per_coord_match).filter(|&&b| b).count();
            let total = hv.per_coord_match.len() + ov.per_coord_match.len();
            Ok(Outcome {
                exact: hv.exact && ov.exact,
                match_rate: matched as f64 / total as f64,
                mse_w: rep.hidden_mse,
                mse_beta: rep.output_mse,
                exact_w: Some(hv.exact),
                exact_beta: Some(ov.exact),
                failure: status_failure(rep.column_reports.iter().map(|r| r.status).chain([rep.output_report.status])),
            })
        }
    }
}

fn record(spec: &ExperimentSpec, cell: &Cell, trial: usize) -> TrialRecord {
    let seed = cell.trial_seed(spec.seed, trial);
    let start = Instant::now();
    let outcome = run_trial(spec, cell, seed).unwrap_or_else(|e| Outcome {
        exact: false,
        match_rate: 0.0,
        mse_w: None,
        mse_beta: None,
        exact_w: None,
        exact_beta: None,
        failure: Some(e.to_string()),
    });
    TrialRecord {
        curve: cell.curve.clone(),
        n: cell.n,
        p: cell.p,
        d: cell.d,
        eps: cell.eps,
        k_index: cell.k_index,
        mu: cell.mu,
        trial,
        seed: seed.0,
        exact: outcome.exact,
        per_coord_match_rate: outcome.match_rate,
        mse_w: outcome.mse_w,
        mse_beta: outcome.mse_beta,
        exact_w: outcome.exact_w,
        exact_beta: outcome.exact_beta,
        failure: outcome.failure,
        wall_ms: start.elapsed().as_secs_f64() * 1e3,
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ExperimentOutput {
    pub spec: ExperimentSpec,
    pub table: CurveTable,
    pub trials: Vec<TrialRecord>,
}

impl ExperimentOutput {
    pub fn failures(&self) -> usize {
        self.table.total_failures()
    }
}

/// Runs every `(cell, trial)` on the rayon pool; results are collected in
/// grid order, so the output does not depend on scheduling.
pub fn run_experiment(spec: &ExperimentSpec) -> Result<ExperimentOutput> {
    spec.validate()?;
    let cells = spec.cells();
    let jobs: Vec<(usize, usize)> = (0..cells.len()).flat_map(|c| (0..spec.trials).map(move |t| (c, t))).collect();
    let trials: Vec<TrialRecord> = jobs.par_iter().map(|&(c, t)| record(spec, &cells[c], t)).collect();
    let rows = cells
        .iter()
        .zip(trials.chunks(spec.trials))
        .map(|(cell, recs)| {
            let adj = cell.k_index.map(|k| adjusted_epsilon(cell.eps, k, spec.c_prime));
            CurveRow::aggregate(recs, adj)
        })
        .collect();
    Ok(ExperimentOutput {
        spec: spec.clone(),
        table: CurveTable { rows },
        trials,
    })
}

fn run_kind(spec: &ExperimentSpec, kind: ExperimentKind) -> Result<ExperimentOutput> {
    if spec.kind != kind {
        return param_err(format!("spec kind is {:?}, expected {kind:?}", spec.kind));
    }
    run_experiment(spec)
}

pub fn run_linear_curve(spec: &ExperimentSpec) -> Result<ExperimentOutput> {
    run_kind(spec, ExperimentKind::LinearCurve)
}

pub fn run_mean_shift(spec: &ExperimentSpec) -> Result<ExperimentOutput> {
    run_kind(spec, ExperimentKind::MeanShift)
}

pub fn run_random_features(spec: &ExperimentSpec) -> Result<ExperimentOutput> {
    run_kind(spec, ExperimentKind::RandomFeatures)
}

pub fn run_nn_repair(spec: &ExperimentSpec) -> Result<ExperimentOutput> {
    run_kind(spec, ExperimentKind::NnRepair)
}

pub fn run_sgd_curve(spec: &ExperimentSpec) -> Result<ExperimentOutput> {
    run_kind(spec, ExperimentKind::SgdCurve)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExperimentManifest {
    pub version: String,
    pub spec: ExperimentSpec,
    pub cells: usize,
    pub trials_total: usize,
    pub failures: usize,
    pub epsilon_monotonicity_flags: Vec<String>,
    pub dimension_monotonicity_flags: Vec<String>,
    pub files: Vec<String>,
}

impl ExperimentManifest {
    pub fn read(path: impl AsRef<Path>) -> Result<Self> {
        Ok(serde_json::from_str(&std::fs::read_to_string(path)?)?)
    }
}

/// Writes `curves.csv`, `trials.csv`, the SVG plots and `manifest.json`
/// into `dir`; returns the written paths.
pub fn write_outputs(out: &ExperimentOutput, dir: impl AsRef<Path>) -> Result<Vec<PathBuf>> {
    let dir = dir.as_ref();
    std::fs::create_dir_all(dir)?;
    let mut files = vec!["curves.csv".to_string(), "trials.csv".to_string()];
    emit_csv(&out.table, dir.join("curves.csv"))?;
    write_rows(std::io::BufWriter::new(std::fs::File::create(dir.join("trials.csv"))?), &out.trials)?;
    emit_svg(&out.table, Metric::RepairProb, dir.join("curves.svg"))?;
    files.push("curves.svg".into());
    if out.table.rows.iter().any(|r| r.mse_w.is_some()) {
        emit_svg(&out.table, Metric::MseW, dir.join("mse_w.svg"))?;
        emit_svg(&out.table, Metric::MseBeta, dir.join("mse_beta.svg"))?;
        files.push("mse_w.svg".into());
        files.push("mse_beta.svg".into());
    }
    files.push("manifest.json".into());
    let manifest = ExperimentManifest {
        version: env!("CARGO_PKG_VERSION").to_string(),
        spec: out.spec.clone(),
        cells: out.table.rows.len(),
        trials_total: out.trials.len(),
        failures: out.failures(),
        epsilon_monotonicity_flags: out.table.epsilon_monotonicity_flags(),
        dimension_monotonicity_flags: out.table.dimension_monotonicity_flags(),
        files: files.clone(),
    };
    std::fs::write(dir.join("manifest.json"), serde_json::to_string_pretty(&manifest)? + "\n")?;
    Ok(files.into_iter().map(|f| dir.join(f)).collect())
}
