//! One-hidden-layer networks `f(x) = (1/sqrt p) sum_j beta_j psi(W_j^T x)`:
//! training, output-layer retraining, layerwise repair and kernel
//! diagnostics.

mod bundle;
mod kernel;
mod moments;

use ndarray::{Array1, Array2, ArrayView1, ArrayView2, Axis, Zip};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

pub use crate::linmod::Activation;
pub use bundle::{read_bundle, write_bundle, BundleManifest, ModelBundle};
pub use kernel::{feature_gram, kernel_diagnostics, limit_g, limit_h, tangent_gram, KernelDiagnostics, Spectrum};
pub use moments::{gaussian_moments, GaussianMoments};

use crate::error::{dim_err, param_err, RepairError, Result};
use crate::l1solve::{certify_recovery, L1Regressor, RecoveryVerdict, SolverOptions, SolverReport, SolverStatus};
use crate::linalg::symmetric_eigenvalues;
use crate::linmod::{gd_fit, GdConfig, Loss};
use crate::randgen::{gaussian_matrix, gaussian_vector, RngSeed};
use crate::scalar::Real;

/// Parameters at initialization, regenerable from `seed`.
#[derive(Debug, Clone, PartialEq)]
pub struct InitSnapshot<F> {
    pub hidden: Array2<F>,
    pub output: Array1<F>,
    pub seed: RngSeed,
}

impl<F: Real> InitSnapshot<F> {
    /// `W_j(0) ~ N(0, I_d / d)` from sub-stream 0, `beta(0) ~ N(0, I_p)` from
    /// sub-stream 1.
    pub fn generate(p: usize, d: usize, seed: RngSeed) -> Result<Self> {
        if p == 0 || d == 0 {
            return param_err(format!("need p, d >= 1, got p={p}, d={d}"));
        }
        let hidden = gaussian_matrix(d, p, 0.0, 1.0 / (d as f64).sqrt(), seed.derive(&[0]))?.entries;
        let output = gaussian_vector(p, 0.0, 1.0, seed.derive(&[1]))?;
        Ok(InitSnapshot { hidden, output, seed })
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct MlpParams<F> {
    /// `d x p`; column `j` is `W_j`.
    pub hidden: Array2<F>,
    pub output: Array1<F>,
    pub activation: Activation,
    pub init: InitSnapshot<F>,
    /// Scale the output by `1/sqrt(p)`. Cleared after output retraining,
    /// whose objective is `||y - psi(X W) beta||^2`.
    pub normalized: bool,
}

impl<F: Real> MlpParams<F> {
    pub fn input_dim(&self) -> usize {
        self.hidden.nrows()
    }

    pub fn width(&self) -> usize {
        self.hidden.ncols()
    }

    fn output_scale(&self) -> F {
        if self.normalized {
            F::one() / F::lit(self.width() as f64).sqrt()
        } else {
            F::one()
        }
    }

    /// Hidden features `psi(X W)`, `n x p`.
    pub fn features(&self, x: ArrayView2<'_, F>) -> Result<Array2<F>> {
        check_input(x, self.input_dim())?;
        let act = self.activation;
        Ok(x.dot(&self.hidden).mapv_into(|t| act.apply(t)))
    }
}

pub fn mlp_init<F: Real>(p: usize, d: usize, activation: Activation, seed: RngSeed) -> Result<MlpParams<F>> {
    let init = InitSnapshot::generate(p, d, seed)?;
    Ok(MlpParams {
        hidden: init.hidden.clone(),
        output: init.output.clone(),
        activation,
        init,
        normalized: true,
    })
}

fn check_input<F>(x: ArrayView2<'_, F>, d: usize) -> Result<()> {
    if x.ncols() != d {
        return dim_err(format!("X has {} columns, network input dimension is {d}", x.ncols()));
    }
    Ok(())
}

pub fn mlp_forward<F: Real>(params: &MlpParams<F>, x: ArrayView2<'_, F>) -> Result<Array1<F>> {
    let phi = params.features(x)?;
    Ok(phi.dot(&params.output) * params.output_scale())
}

#[derive(Debug, Clone, PartialEq)]
pub struct Gradients<F> {
    pub hidden: Array2<F>,
    pub output: Array1<F>,
    /// `L = (1/2) sum_i (y_i - f(x_i))^2`.
    pub loss: F,
}

/// Gradient of `L` in `beta` at (`beta`, `W`), given `pre = X W`.
fn output_gradient<F: Real>(phi: &Array2<F>, resid: &Array1<F>, scale: F) -> Array1<F> {
    phi.t().dot(resid) * scale
}

/// Gradient of `L` in `W` at (`beta`, `W`).
fn hidden_gradient<F: Real>(
    x: ArrayView2<'_, F>,
    pre: &Array2<F>,
    beta: &Array1<F>,
    resid: &Array1<F>,
    act: Activation,
    scale: F,
) -> Array2<F> {
    let mut m = pre.mapv(|t| act.derivative(t));
    Zip::from(m.rows_mut()).and(resid).for_each(|mut row, &r| row *= r);
    let mut g = x.t().dot(&m);
    Zip::from(g.columns_mut()).and(beta).for_each(|mut col, &b| col *= b * scale);
    g
}

pub fn loss_gradients<F: Real>(params: &MlpParams<F>, x: ArrayView2<'_, F>, y: ArrayView1<'_, F>) -> Result<Gradients<F>> {
    check_input(x, params.input_dim())?;
    if y.len() != x.nrows() {
        return dim_err("y length does not match X rows");
    }
    let act = params.activation;
    let scale = params.output_scale();
    let pre = x.dot(&params.hidden);
    let phi = pre.mapv(|t| act.apply(t));
    let resid = phi.dot(&params.output) * scale - y;
    Ok(Gradients {
        hidden: hidden_gradient(x, &pre, &params.output, &resid, act, scale),
        output: output_gradient(&phi, &resid, scale),
        loss: resid.dot(&resid) / F::lit(2.0),
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TrainMode {
    /// Joint gradient descent on both layers.
    Joint,
    /// Joint training, then `beta` refit from zero on the frozen features.
    RetrainOutput,
}

impl std::str::FromStr for TrainMode {
    type Err = RepairError;
    fn from_str(s: &str) -> Result<Self> {
        match s.trim().to_ascii_lowercase().replace('-', "_").as_str() {
            "joint" => Ok(TrainMode::Joint),
            "retrain_output" | "retrain" | "two_stage" => Ok(TrainMode::RetrainOutput),
            other => Err(RepairError::Parse(format!("unknown training mode {other:?}"))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TrainConfig {
    /// Step size; `None` selects [`default_step`].
    pub gamma: Option<f64>,
    pub t_max: usize,
    pub mode: TrainMode,
    /// Gradient steps for output retraining.
    pub retrain_iters: usize,
    /// Early stop for output retraining, relative residual.
    pub retrain_tol: f64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            gamma: None,
            t_max: 200,
            mode: TrainMode::Joint,
            retrain_iters: 20_000,
            retrain_tol: 1e-10,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrainTrace<F> {
    pub gamma: F,
    /// `||y - u(t)||^2` for `t = 0..=t_max`.
    pub loss_per_iter: Vec<F>,
    /// `max_j ||W_j(t) - W_j(0)||`.
    pub max_w_drift: Vec<F>,
    /// `max_j |beta_j(t) - beta_j(0)|`.
    pub max_beta_drift: Vec<F>,
}

/// Hidden-layer drift radius `100 n ln p / sqrt(p d)`.
pub fn radius_hidden(n: usize, p: usize, d: usize) -> f64 {
    100.0 * n as f64 * (p as f64).ln() / ((p * d) as f64).sqrt()
}

/// Output-layer drift radius `32 sqrt(n^2 ln p / p)`.
pub fn radius_output(n: usize, p: usize) -> f64 {
    32.0 * ((n * n) as f64 * (p as f64).ln() / p as f64).sqrt()
}

/// `0.1 / lambda_max(H + G)` at the given parameters.
pub fn default_step<F: Real>(params: &MlpParams<F>, x: ArrayView2<'_, F>) -> Result<F> {
    let g = feature_gram(params.hidden.view(), x, params.activation)?;
    let h = tangent_gram(params.hidden.view(), params.output.view(), x, params.activation)?;
    let top = symmetric_eigenvalues(&(g + h)).into_iter().fold(F::zero(), F::max);
    if !(top > F::zero()) {
        return Err(RepairError::Numerical("kernel matrix has no positive eigenvalue".into()));
    }
    Ok(F::lit(0.1) / top)
}

fn drifts<F: Real>(params: &MlpParams<F>) -> (F, F) {
    let dw = (&params.hidden - &params.init.hidden)
        .axis_iter(Axis(1))
        .map(|c| c.dot(&c).sqrt())
        .fold(F::zero(), F::max);
    let db = Zip::from(&params.output)
        .and(&params.init.output)
        .fold(F::zero(), |acc, &b, &b0| acc.max((b - b0).abs()));
    (dw, db)
}

/// Gradient descent on `L = (1/2) ||y - u||^2`. Each step first moves
/// `beta` along its gradient at the old `(beta, W)`, then moves `W` by
/// `gamma / d` times its gradient at the new `beta` and old `W`.
pub fn train_joint<F: Real>(
    x: ArrayView2<'_, F>,
    y: ArrayView1<'_, F>,
    params: &MlpParams<F>,
    cfg: &TrainConfig,
) -> Result<(MlpParams<F>, TrainTrace<F>)> {
    check_input(x, params.input_dim())?;
    if y.len() != x.nrows() {
        return dim_err("y length does not match X rows");
    }
    let gamma = match cfg.gamma {
        Some(g) if g >= 0.0 && g.is_finite() => F::lit(g),
        Some(g) => return param_err(format!("gamma must be >= 0, got {g}")),
        None => default_step(params, x)?,
    };
    let act = params.activation;
    let scale = params.output_scale();
    let w_step = gamma / F::lit(params.input_dim() as f64);
    let mut cur = params.clone();
    let mut trace = TrainTrace {
        gamma,
        loss_per_iter: Vec::with_capacity(cfg.t_max + 1),
        max_w_drift: Vec::with_capacity(cfg.t_max + 1),
        max_beta_drift: Vec::with_capacity(cfg.t_max + 1),
    };
    let mut pre = x.dot(&cur.hidden);
    let mut phi = pre.mapv(|t| act.apply(t));
    let mut resid = phi.dot(&cur.output) * scale - y;
    for t in 0..=cfg.t_max {
        let loss = resid.dot(&resid);
        if !loss.is_finite() {
            return Err(RepairError::Divergence {
                step: gamma.as_f64(),
                detail: format!("loss is not finite at iteration {t}"),
            });
        }
        trace.loss_per_iter.push(loss);
        let (dw, db) = drifts(&cur);
        trace.max_w_drift.push(dw);
        trace.max_beta_drift.push(db);
        if t == cfg.t_max {
            break;
        }
        let gb = output_gradient(&phi, &resid, scale);
        cur.output.scaled_add(-gamma, &gb);
        let resid_new = phi.dot(&cur.output) * scale - y;
        let gw = hidden_gradient(x, &pre, &cur.output, &resid_new, act, scale);
        cur.hidden.scaled_add(-w_step, &gw);
        pre = x.dot(&cur.hidden);
        phi = pre.mapv(|t| act.apply(t));
        resid = phi.dot(&cur.output) * scale - y;
    }
    Ok((cur, trace))
}

/// Refits `beta` by gradient descent from zero on `||y - psi(X W) beta||^2`,
/// so the result lies in the row space of `psi(X W)`.
pub fn retrain_output<F: Real>(
    x: ArrayView2<'_, F>,
    hidden: ArrayView2<'_, F>,
    activation: Activation,
    y: ArrayView1<'_, F>,
    step: Option<f64>,
    iters: usize,
    residual_tol: Option<f64>,
) -> Result<Array1<F>> {
    check_input(x, hidden.nrows())?;
    let phi = x.dot(&hidden).mapv_into(|t| activation.apply(t));
    let n = x.nrows() as f64;
    // gd_fit averages over rows; rescale so `step` applies to the summed loss
    let cfg = GdConfig {
        loss: Loss::Squared,
        step: step.map(|s| s * n),
        iters,
        residual_tol,
    };
    Ok(gd_fit(phi.view(), y, &cfg)?.theta_hat)
}

/// Trains per `cfg.mode`. Output retraining clears the `normalized` flag.
pub fn train<F: Real>(
    x: ArrayView2<'_, F>,
    y: ArrayView1<'_, F>,
    params: &MlpParams<F>,
    cfg: &TrainConfig,
) -> Result<(MlpParams<F>, TrainTrace<F>)> {
    let (mut out, trace) = train_joint(x, y, params, cfg)?;
    if cfg.mode == TrainMode::RetrainOutput {
        out.output = retrain_output(
            x,
            out.hidden.view(),
            out.activation,
            y,
            None,
            cfg.retrain_iters,
            Some(cfg.retrain_tol),
        )?;
        out.normalized = false;
    }
    Ok((out, trace))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum OutputBase {
    /// Offset the output repair by `beta(0)`.
    Init,
    /// Offset by zero, for retrained output layers.
    Zero,
}

impl OutputBase {
    pub fn for_mode(mode: TrainMode) -> Self {
        match mode {
            TrainMode::Joint => OutputBase::Init,
            TrainMode::RetrainOutput => OutputBase::Zero,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MlpRepairOptions {
    pub solver: SolverOptions,
    pub rel_tol: f64,
    pub output_base: OutputBase,
}

impl Default for MlpRepairOptions {
    fn default() -> Self {
        MlpRepairOptions {
            solver: SolverOptions::default(),
            rel_tol: 1e-6,
            output_base: OutputBase::Init,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct MlpRepair<F> {
    pub hidden: Array2<F>,
    pub output: Array1<F>,
    /// One report per hidden column.
    pub column_reports: Vec<SolverReport<F>>,
    pub output_report: SolverReport<F>,
    pub hidden_verdict: Option<RecoveryVerdict<F>>,
    pub output_verdict: Option<RecoveryVerdict<F>>,
    /// Mean of `(W~ - W^)^2` over entries, when a reference was given.
    pub hidden_mse: Option<F>,
    /// Mean of `(beta~ - beta^)^2`, when a reference was given.
    pub output_mse: Option<F>,
}

impl<F: Real> MlpRepair<F> {
    /// Hidden columns whose solve did not reach optimality.
    pub fn failed_columns(&self) -> Vec<usize> {
        self.column_reports
            .iter()
            .enumerate()
            .filter(|(_, r)| r.status != SolverStatus::Optimal)
            .map(|(j, _)| j)
            .collect()
    }

    pub fn all_optimal(&self) -> bool {
        self.failed_columns().is_empty() && self.output_report.status == SolverStatus::Optimal
    }

    pub fn exact(&self) -> Option<bool> {
        Some(self.hidden_verdict.as_ref()?.exact && self.output_verdict.as_ref()?.exact)
    }
}

fn flat<F: Real>(m: ArrayView2<'_, F>) -> Array1<F> {
    m.iter().copied().collect()
}

fn mse<F: Real>(a: impl Iterator<Item = F>, b: impl Iterator<Item = F>) -> F {
    let (sum, count) = a.zip(b).fold((F::zero(), 0usize), |(s, c), (u, v)| (s + (u - v).powi(2), c + 1));
    sum / F::lit(count.max(1) as f64)
}

/// Layerwise repair. Each hidden column solves
/// `min_v ||Theta_j - W_j(0) - X^T v||_1` and sets `W~_j = W_j(0) + X^T v`;
/// then `min_u ||eta - b - psi(W~^T X^T) u||_1` gives `beta~ = b + psi(W~^T X^T) u`
/// with `b` per `opts.output_base`. `reference` is `(W^, beta^)`.
pub fn repair_mlp<F: Real>(
    eta: ArrayView1<'_, F>,
    theta: ArrayView2<'_, F>,
    x: ArrayView2<'_, F>,
    init: &InitSnapshot<F>,
    activation: Activation,
    opts: &MlpRepairOptions,
    reference: Option<(ArrayView2<'_, F>, ArrayView1<'_, F>)>,
) -> Result<MlpRepair<F>> {
    let (n, d) = x.dim();
    let p = theta.ncols();
    if theta.nrows() != d || init.hidden.dim() != (d, p) {
        return dim_err(format!(
            "Theta is {}x{}, W(0) is {}x{}, X has {d} columns",
            theta.nrows(),
            p,
            init.hidden.nrows(),
            init.hidden.ncols()
        ));
    }
    if eta.len() != p || init.output.len() != p {
        return dim_err(format!("eta has length {}, expected p={p}", eta.len()));
    }
    if d <= n || p <= n {
        return dim_err(format!("repair needs d > n and p > n, got n={n}, d={d}, p={p}"));
    }

    let xt = x.t().as_standard_layout().into_owned();
    let hidden_solver = L1Regressor::new(xt.clone(), opts.solver)?;
    let columns: Vec<Result<(Array1<F>, SolverReport<F>)>> = (0..p)
        .into_par_iter()
        .map(|j| {
            let resp = &theta.column(j) - &init.hidden.column(j);
            let report = hidden_solver
                .solve(resp.view())
                .map_err(|e| RepairError::Numerical(format!("hidden column {j}: {e}")))?;
            let col = &init.hidden.column(j) + &xt.dot(&report.u_hat);
            Ok((col, report))
        })
        .collect();
    let mut hidden = Array2::<F>::zeros((d, p));
    let mut column_reports = Vec::with_capacity(p);
    for (j, res) in columns.into_iter().enumerate() {
        let (col, report) = res?;
        hidden.column_mut(j).assign(&col);
        column_reports.push(report);
    }

    // psi(W~^T X^T), p x n
    let design = x.dot(&hidden).mapv_into(|t| activation.apply(t)).reversed_axes();
    let design = design.as_standard_layout().into_owned();
    let base = match opts.output_base {
        OutputBase::Init => init.output.clone(),
        OutputBase::Zero => Array1::zeros(p),
    };
    let resp = &eta - &base;
    let output_report = L1Regressor::new(design.clone(), opts.solver)?.solve(resp.view())?;
    let output = &base + &design.dot(&output_report.u_hat);

    let rel_tol = F::lit(opts.rel_tol);
    let (hidden_verdict, output_verdict, hidden_mse, output_mse) = match reference {
        Some((w_ref, b_ref)) => {
            if w_ref.dim() != (d, p) || b_ref.len() != p {
                return dim_err("reference parameters have the wrong shape");
            }
            let hv = certify_recovery(flat(hidden.view()).view(), flat(w_ref).view(), rel_tol)?;
            let ov = certify_recovery(output.view(), b_ref, rel_tol)?;
            let hm = mse(hidden.iter().copied(), w_ref.iter().copied());
            let om = mse(output.iter().copied(), b_ref.iter().copied());
            (Some(hv), Some(ov), Some(hm), Some(om))
        }
        None => (None, None, None, None),
    };
    Ok(MlpRepair {
        hidden,
        output,
        column_reports,
        output_report,
        hidden_verdict,
        output_verdict,
        hidden_mse,
        output_mse,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::linmod::min_norm_fit;
    use ndarray::array;

    fn tiny(normalized: bool) -> MlpParams<f64> {
        let init = InitSnapshot {
            hidden: array![[0.5, -0.3]],
            output: array![1.0, 2.0],
            seed: RngSeed(0),
        };
        MlpParams {
            hidden: init.hidden.clone(),
            output: init.output.clone(),
            activation: Activation::Tanh,
            init,
            normalized,
        }
    }

    #[test]
    fn init_is_reproducible() {
        let a = mlp_init::<f64>(7, 3, Activation::Tanh, RngSeed(9)).unwrap();
        let b = mlp_init::<f64>(7, 3, Activation::Tanh, RngSeed(9)).unwrap();
        assert_eq!(a, b);
        assert_eq!(a.hidden.dim(), (3, 7));
        assert!(mlp_init::<f64>(0, 3, Activation::Tanh, RngSeed(9)).is_err());
    }

    #[test]
    fn init_column_norms_concentrate() {
        let (p, d) = (400, 50);
        let params = mlp_init::<f64>(p, d, Activation::Tanh, RngSeed(3)).unwrap();
        let mean_sq = params.hidden.axis_iter(Axis(1)).map(|c| c.dot(&c)).sum::<f64>() / p as f64;
        // ||W_j||^2 ~ chi2_d / d has variance 2/d
        let bound = 4.0 * (2.0 / d as f64).sqrt() / (p as f64).sqrt();
        assert!((mean_sq - 1.0).abs() <= bound, "{mean_sq}");
    }

    #[test]
    fn unit_input_dim_has_unit_sd() {
        let params = mlp_init::<f64>(20_000, 1, Activation::Tanh, RngSeed(4)).unwrap();
        let var = params.hidden.iter().map(|v| v * v).sum::<f64>() / 20_000.0;
        assert!((var - 1.0).abs() < 0.05, "{var}");
    }

    #[test]
    fn forward_cases() {
        let mut params = tiny(true);
        params.hidden = array![[0.5]];
        params.output = array![2.0];
        let u = mlp_forward(&params, array![[1.0]].view()).unwrap();
        assert!((u[0] - 0.9242343145200195).abs() < 1e-15);
        params.output = array![0.0];
        assert_eq!(mlp_forward(&params, array![[1.0]].view()).unwrap()[0], 0.0);
        params.activation = Activation::Relu;
        params.output = array![3.0];
        assert_eq!(mlp_forward(&params, array![[-1.0]].view()).unwrap()[0], 0.0);
        assert!(mlp_forward(&params, array![[1.0, 2.0]].view()).is_err());
    }

    #[test]
    fn one_step_matches_hand_update() {
        let params = tiny(true);
        let (x, y, gamma) = (1.0f64, 0.5f64, 0.1f64);
        let s = 1.0 / 2f64.sqrt();
        let (a1, a2) = ((0.5f64).tanh(), (-0.3f64).tanh());
        let r = s * (a1 + 2.0 * a2) - y;
        let b1 = 1.0 - gamma * s * a1 * r;
        let b2 = 2.0 - gamma * s * a2 * r;
        let r2 = s * (b1 * a1 + b2 * a2) - y;
        let w1 = 0.5 - gamma * s * b1 * (1.0 - a1 * a1) * r2 * x;
        let w2 = -0.3 - gamma * s * b2 * (1.0 - a2 * a2) * r2 * x;
        let cfg = TrainConfig {
            gamma: Some(gamma),
            t_max: 1,
            ..TrainConfig::default()
        };
        let (out, trace) = train_joint(array![[x]].view(), array![y].view(), &params, &cfg).unwrap();
        assert!((out.output[0] - b1).abs() < 1e-15 && (out.output[1] - b2).abs() < 1e-15);
        assert!((out.hidden[(0, 0)] - w1).abs() < 1e-15 && (out.hidden[(0, 1)] - w2).abs() < 1e-15);
        assert_eq!(trace.loss_per_iter.len(), 2);
        assert!((trace.loss_per_iter[0] - r * r).abs() < 1e-15);
    }

    #[test]
    fn reversed_update_order_differs() {
        let x = gaussian_matrix::<f64>(4, 6, 0.0, 1.0, RngSeed(20)).unwrap().entries;
        let y = array![0.5, -0.2, 0.8, -0.9];
        let params = mlp_init::<f64>(12, 6, Activation::Tanh, RngSeed(21)).unwrap();
        let gamma = 0.5;
        let cfg = TrainConfig {
            gamma: Some(gamma),
            t_max: 1,
            ..TrainConfig::default()
        };
        let (ours, _) = train_joint(x.view(), y.view(), &params, &cfg).unwrap();

        // W first at old beta, then beta at new W
        let mut wrong = params.clone();
        let g = loss_gradients(&wrong, x.view(), y.view()).unwrap();
        wrong.hidden.scaled_add(-gamma / 6.0, &g.hidden);
        let g2 = loss_gradients(&wrong, x.view(), y.view()).unwrap();
        wrong.output.scaled_add(-gamma, &g2.output);

        let diff = (&ours.hidden - &wrong.hidden).iter().fold(0.0f64, |m, v| m.max(v.abs()))
            + (&ours.output - &wrong.output).iter().fold(0.0f64, |m, v| m.max(v.abs()));
        assert!(diff > 1e-6, "{diff}");
    }

    #[test]
    fn zero_step_is_flat() {
        let x = gaussian_matrix::<f64>(3, 4, 0.0, 1.0, RngSeed(22)).unwrap().entries;
        let params = mlp_init::<f64>(5, 4, Activation::Relu, RngSeed(23)).unwrap();
        let cfg = TrainConfig {
            gamma: Some(0.0),
            t_max: 3,
            ..TrainConfig::default()
        };
        let (out, trace) = train_joint(x.view(), array![0.1, 0.2, 0.3].view(), &params, &cfg).unwrap();
        assert_eq!(out, params);
        assert!(trace.loss_per_iter.windows(2).all(|w| w[0] == w[1]));
        assert!(trace.max_w_drift.iter().all(|v| *v == 0.0));
    }

    #[test]
    fn retrain_cases() {
        let x = gaussian_matrix::<f64>(4, 10, 0.0, 1.0, RngSeed(24)).unwrap().entries;
        let w = gaussian_matrix::<f64>(10, 30, 0.0, 0.3, RngSeed(25)).unwrap().entries;
        let y = array![0.3, -0.4, 0.1, 0.6];
        let zero = retrain_output(x.view(), w.view(), Activation::Tanh, y.view(), None, 0, None).unwrap();
        assert!(zero.iter().all(|v| *v == 0.0));
        let none = retrain_output(x.view(), w.view(), Activation::Tanh, Array1::zeros(4).view(), None, 50, None).unwrap();
        assert!(none.iter().all(|v| *v == 0.0));
        let beta = retrain_output(x.view(), w.view(), Activation::Tanh, y.view(), None, 100_000, Some(1e-13)).unwrap();
        let phi = x.dot(&w).mapv(f64::tanh);
        let oracle = min_norm_fit(phi.view(), y.view()).unwrap().theta_hat;
        let dev = (&beta - &oracle).iter().fold(0.0f64, |m, v| m.max(v.abs()));
        assert!(dev <= 1e-4, "{dev}");
    }

    #[test]
    fn radii_values() {
        let r1 = radius_hidden(10, 2000, 1000);
        assert!((r1 - 100.0 * 10.0 * 2000f64.ln() / 2e6f64.sqrt()).abs() < 1e-12);
        let r2 = radius_output(10, 2000);
        assert!((r2 - 32.0 * (100.0 * 2000f64.ln() / 2000.0).sqrt()).abs() < 1e-12);
    }

    #[test]
    fn uncorrupted_repair_is_exact() {
        let (n, d, p) = (3, 12, 24);
        let x = gaussian_matrix::<f64>(n, d, 0.0, 1.0, RngSeed(26)).unwrap().entries;
        let y = array![0.2, -0.5, 0.4];
        let params = mlp_init::<f64>(p, d, Activation::Tanh, RngSeed(27)).unwrap();
        let cfg = TrainConfig {
            t_max: 20,
            mode: TrainMode::RetrainOutput,
            ..TrainConfig::default()
        };
        let (trained, _) = train(x.view(), y.view(), &params, &cfg).unwrap();
        let opts = MlpRepairOptions {
            output_base: OutputBase::Zero,
            ..MlpRepairOptions::default()
        };
        let rep = repair_mlp(
            trained.output.view(),
            trained.hidden.view(),
            x.view(),
            &trained.init,
            trained.activation,
            &opts,
            Some((trained.hidden.view(), trained.output.view())),
        )
        .unwrap();
        assert_eq!(rep.exact(), Some(true));
        assert!(rep.all_optimal());
        assert_eq!(rep.column_reports.len(), p);
    }
}
