//! Over-parameterized linear and random-feature estimators that live in the
//! row space of their design, and their repair.

use std::collections::BTreeSet;

use ndarray::{Array1, Array2, ArrayView1, ArrayView2, Axis, Zip};
use serde::{Deserialize, Serialize};

use crate::error::{dim_err, param_err, RepairError, Result};
use crate::l1solve::{certify_recovery, L1Regressor, RecoveryVerdict, SolverOptions, SolverReport};
use crate::linalg::{gram_top_eigenvalue, PivotedQr};
use crate::randgen::{gaussian_matrix, DesignMatrix, RngSeed};
use crate::scalar::Real;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FitMethod {
    MinNorm,
    Gd,
    Sgd,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Loss {
    /// `(y - f)^2 / 2`.
    Squared,
    /// `log(1 + exp(-y f))` with labels in `{-1, +1}`.
    Logistic,
}

impl Loss {
    /// Derivative of the loss in the fitted value.
    pub fn dloss<F: Real>(self, y: F, f: F) -> F {
        match self {
            Loss::Squared => f - y,
            Loss::Logistic => -y / (F::one() + (y * f).exp()),
        }
    }

    pub fn value<F: Real>(self, y: F, f: F) -> F {
        match self {
            Loss::Squared => (y - f).powi(2) / F::lit(2.0),
            Loss::Logistic => {
                let t = -y * f;
                // log(1 + e^t) without overflow
                if t > F::zero() {
                    t + (-t).exp().ln_1p()
                } else {
                    t.exp().ln_1p()
                }
            }
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct LinearFit<F> {
    pub theta_hat: Array1<F>,
    /// `u` with `theta_hat = X^T u`.
    pub coeffs: Array1<F>,
    pub method: FitMethod,
    /// Rows touched by the fit, sorted.
    pub visited_rows: Vec<usize>,
}

/// Minimum Euclidean norm interpolator `X^T (X X^T)^{-1} y`, computed from a
/// pivoted QR of `X^T` rather than the Gram matrix.
pub fn min_norm_fit<F: Real>(x: ArrayView2<'_, F>, y: ArrayView1<'_, F>) -> Result<LinearFit<F>> {
    let (n, p) = x.dim();
    if y.len() != n {
        return dim_err(format!("y has length {}, X has {n} rows", y.len()));
    }
    if p < n {
        return dim_err(format!("min-norm fit needs p >= n, got {n}x{p}"));
    }
    let xt = x.t().as_standard_layout().into_owned();
    let qr = PivotedQr::new(xt.view())?;
    let xmax = x.iter().fold(F::zero(), |acc, v| acc.max(v.abs()));
    let threshold = F::tol(1e-10) * xmax;
    let rank = qr.rank(threshold);
    if xmax == F::zero() || rank < n {
        return Err(RepairError::Rank(format!("X is {n}x{p} with numerical rank {rank}")));
    }
    let c = qr.solve_rt_permuted(y);
    let theta_hat = qr.apply_thin_q(c.view());
    let coeffs = qr.solve_r_unpermute(c.view());
    Ok(LinearFit {
        theta_hat,
        coeffs,
        method: FitMethod::MinNorm,
        visited_rows: (0..n).collect(),
    })
}

/// Distance of `theta` from the row space of `x`, `||(I - P) theta||`.
pub fn row_space_residual<F: Real>(x: ArrayView2<'_, F>, theta: ArrayView1<'_, F>) -> Result<F> {
    if x.ncols() != theta.len() {
        return dim_err("theta length does not match the design");
    }
    let xt = x.t().as_standard_layout().into_owned();
    let qr = PivotedQr::new(xt.view())?;
    let proj = qr.project(theta);
    Ok((&theta - &proj).mapv(|v| v * v).sum().sqrt())
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GdConfig {
    pub loss: Loss,
    /// Step size; `None` selects `1 / L` with `L` the top eigenvalue of
    /// `X^T X / n` estimated by power iteration.
    pub step: Option<f64>,
    pub iters: usize,
    /// Stop early once `||X theta - y|| <= residual_tol * (1 + ||y||)`.
    pub residual_tol: Option<f64>,
}

impl Default for GdConfig {
    fn default() -> Self {
        GdConfig {
            loss: Loss::Squared,
            step: None,
            iters: 1000,
            residual_tol: None,
        }
    }
}

/// `1 / lambda_max(X^T X / n)`.
pub fn default_gd_step<F: Real>(x: ArrayView2<'_, F>) -> F {
    let n = F::lit(x.nrows() as f64);
    let top = gram_top_eigenvalue(x) / n;
    F::one() / top
}

fn mean_loss<F: Real>(loss: Loss, y: ArrayView1<'_, F>, fitted: &Array1<F>) -> F {
    let n = F::lit(y.len() as f64);
    Zip::from(&y).and(fitted).fold(F::zero(), |acc, &yi, &fi| acc + loss.value(yi, fi)) / n
}

/// Full-batch gradient descent from `theta = 0`. The iterate is carried as
/// `theta = X^T u`, so it stays in the row space by construction.
pub fn gd_fit<F: Real>(x: ArrayView2<'_, F>, y: ArrayView1<'_, F>, cfg: &GdConfig) -> Result<LinearFit<F>> {
    let (n, p) = x.dim();
    if y.len() != n {
        return dim_err(format!("y has length {}, X has {n} rows", y.len()));
    }
    let step = match cfg.step {
        Some(s) if s > 0.0 && s.is_finite() => F::lit(s),
        Some(s) => return param_err(format!("step must be positive, got {s}")),
        None => default_gd_step(x),
    };
    let nf = F::lit(n as f64);
    let y_norm = y.dot(&y).sqrt();
    let mut u = Array1::<F>::zeros(n);
    let mut theta = Array1::<F>::zeros(p);
    let mut fitted = Array1::<F>::zeros(n);
    let mut prev = mean_loss(cfg.loss, y, &fitted);
    let mut rising = 0;
    for _ in 0..cfg.iters {
        if let Some(tol) = cfg.residual_tol {
            let r = (&fitted - &y).mapv(|v| v * v).sum().sqrt();
            if r <= F::lit(tol) * (F::one() + y_norm) {
                break;
            }
        }
        let w = Zip::from(&y)
            .and(&fitted)
            .map_collect(|&yi, &fi| step * cfg.loss.dloss(yi, fi) / nf);
        u -= &w;
        theta = x.t().dot(&u);
        fitted = x.dot(&theta);
        let obj = mean_loss(cfg.loss, y, &fitted);
        if !obj.is_finite() {
            return Err(divergence(step, "objective is not finite"));
        }
        if obj > prev {
            rising += 1;
            if rising >= 10 {
                return Err(divergence(step, "objective increased for 10 consecutive iterations"));
            }
        } else {
            rising = 0;
        }
        prev = obj;
    }
    Ok(LinearFit {
        theta_hat: theta,
        coeffs: u,
        method: FitMethod::Gd,
        visited_rows: (0..n).collect(),
    })
}

fn divergence<F: Real>(step: F, detail: &str) -> RepairError {
    RepairError::Divergence {
        step: step.as_f64(),
        detail: detail.to_string(),
    }
}

/// Gradient of `(1/n) sum_i L(y_i, x_i^T theta)`.
pub fn loss_gradient<F: Real>(x: ArrayView2<'_, F>, y: ArrayView1<'_, F>, theta: ArrayView1<'_, F>, loss: Loss) -> Array1<F> {
    let nf = F::lit(x.nrows() as f64);
    let fitted = x.dot(&theta);
    let w = Zip::from(&y).and(&fitted).map_collect(|&yi, &fi| loss.dloss(yi, fi) / nf);
    x.t().dot(&w)
}

pub fn mean_loss_at<F: Real>(x: ArrayView2<'_, F>, y: ArrayView1<'_, F>, theta: ArrayView1<'_, F>, loss: Loss) -> F {
    mean_loss(loss, y, &x.dot(&theta))
}

/// Mini-batch SGD from zero; batch `B_t` contributes the averaged gradient
/// of its rows. Indices are 0-based.
pub fn sgd_fit<F: Real>(
    x: ArrayView2<'_, F>,
    y: ArrayView1<'_, F>,
    loss: Loss,
    step: F,
    batches: &[Vec<usize>],
) -> Result<LinearFit<F>> {
    let (n, p) = x.dim();
    if y.len() != n {
        return dim_err(format!("y has length {}, X has {n} rows", y.len()));
    }
    if batches.is_empty() || batches.iter().any(Vec::is_empty) {
        return param_err("batch list must be non-empty with non-empty batches");
    }
    if !(step > F::zero()) {
        return param_err("step must be positive");
    }
    if let Some(&bad) = batches.iter().flatten().find(|&&i| i >= n) {
        return param_err(format!("batch index {bad} out of range for n={n}"));
    }
    let mut u = Array1::<F>::zeros(n);
    let mut theta = Array1::<F>::zeros(p);
    let mut visited = BTreeSet::new();
    for batch in batches {
        let bf = F::lit(batch.len() as f64);
        let grads: Vec<(usize, F)> = batch
            .iter()
            .map(|&i| (i, step * loss.dloss(y[i], x.row(i).dot(&theta)) / bf))
            .collect();
        for (i, g) in grads {
            u[i] -= g;
            theta.scaled_add(-g, &x.row(i));
            visited.insert(i);
        }
        if theta.iter().any(|v| !v.is_finite()) {
            return Err(divergence(step, "iterate is not finite"));
        }
    }
    Ok(LinearFit {
        theta_hat: theta,
        coeffs: u,
        method: FitMethod::Sgd,
        visited_rows: visited.into_iter().collect(),
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Activation {
    Tanh,
    Relu,
}

impl Activation {
    #[inline]
    pub fn apply<F: Real>(self, t: F) -> F {
        match self {
            Activation::Tanh => t.tanh(),
            Activation::Relu => t.max(F::zero()),
        }
    }

    /// Derivative; the ReLU derivative at 0 is taken as 0.
    #[inline]
    pub fn derivative<F: Real>(self, t: F) -> F {
        match self {
            Activation::Tanh => {
                let th = t.tanh();
                F::one() - th * th
            }
            Activation::Relu => {
                if t > F::zero() {
                    F::one()
                } else {
                    F::zero()
                }
            }
        }
    }
}

impl std::str::FromStr for Activation {
    type Err = RepairError;
    fn from_str(s: &str) -> Result<Self> {
        match s.trim().to_ascii_lowercase().as_str() {
            "tanh" => Ok(Activation::Tanh),
            "relu" => Ok(Activation::Relu),
            other => Err(RepairError::Parse(format!("unknown activation {other:?}"))),
        }
    }
}

/// Frozen random features `psi(X W)`.
#[derive(Debug, Clone, PartialEq)]
pub struct FeatureMap<F> {
    /// `d x p`.
    pub weights: Array2<F>,
    pub activation: Activation,
    /// Per-feature mean subtracted after the activation.
    pub centering: Option<Array1<F>>,
}

impl<F: Real> FeatureMap<F> {
    pub fn new(weights: Array2<F>, activation: Activation) -> Self {
        FeatureMap {
            weights,
            activation,
            centering: None,
        }
    }

    /// `W_ij ~ N(0, 1/d)`.
    pub fn gaussian(d: usize, p: usize, activation: Activation, seed: RngSeed) -> Result<Self> {
        let w = gaussian_matrix(d, p, 0.0, 1.0 / (d as f64).sqrt(), seed)?.entries;
        Ok(FeatureMap::new(w, activation))
    }

    /// Subtracts the population mean `E psi(W_j^T x)` for `x ~ N(0, I_d)`:
    /// `||W_j|| / sqrt(2 pi)` for ReLU, zero for tanh (odd activation).
    pub fn with_analytic_centering(mut self) -> Self {
        let means = match self.activation {
            Activation::Tanh => Array1::zeros(self.weights.ncols()),
            Activation::Relu => {
                let c = F::one() / F::lit(2.0 * std::f64::consts::PI).sqrt();
                self.weights
                    .axis_iter(Axis(1))
                    .map(|col| col.dot(&col).sqrt() * c)
                    .collect()
            }
        };
        self.centering = Some(means);
        self
    }

    pub fn input_dim(&self) -> usize {
        self.weights.nrows()
    }

    pub fn output_dim(&self) -> usize {
        self.weights.ncols()
    }
}

/// `psi(X W)` minus the configured centering.
pub fn apply_features<F: Real>(x: ArrayView2<'_, F>, fm: &FeatureMap<F>) -> Result<DesignMatrix<F>> {
    if x.ncols() != fm.input_dim() {
        return dim_err(format!("X has {} columns, feature map expects {}", x.ncols(), fm.input_dim()));
    }
    let act = fm.activation;
    let mut out = x.dot(&fm.weights);
    out.mapv_inplace(|t| act.apply(t));
    if let Some(c) = &fm.centering {
        out -= c;
    }
    DesignMatrix::from_entries(out)
}

#[derive(Debug, Clone, PartialEq)]
pub struct LinearRepair<F> {
    pub theta_tilde: Array1<F>,
    pub coeffs: Array1<F>,
    pub report: SolverReport<F>,
    /// Present when a reference estimate was supplied.
    pub verdict: Option<RecoveryVerdict<F>>,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RepairOptions {
    pub solver: SolverOptions,
    pub rel_tol: f64,
}

impl Default for RepairOptions {
    fn default() -> Self {
        RepairOptions {
            solver: SolverOptions::default(),
            rel_tol: 1e-6,
        }
    }
}

/// Repairs `eta` against an `n x p` design (raw or feature) with `p > n`:
/// `u = argmin ||eta - X^T u||_1`, `theta_tilde = X^T u`.
pub fn repair_linear<F: Real>(
    design: ArrayView2<'_, F>,
    eta: ArrayView1<'_, F>,
    reference: Option<ArrayView1<'_, F>>,
    opts: &RepairOptions,
) -> Result<LinearRepair<F>> {
    let (n, p) = design.dim();
    if p <= n {
        return dim_err(format!("repair needs p > n, got {n}x{p}"));
    }
    if eta.len() != p {
        return dim_err(format!("eta has length {}, design has {p} columns", eta.len()));
    }
    let a = design.t().as_standard_layout().into_owned();
    let report = L1Regressor::new(a, opts.solver)?.solve(eta)?;
    let theta_tilde = design.t().dot(&report.u_hat);
    let verdict = reference
        .map(|r| certify_recovery(theta_tilde.view(), r, F::lit(opts.rel_tol)))
        .transpose()?;
    Ok(LinearRepair {
        coeffs: report.u_hat.clone(),
        theta_tilde,
        report,
        verdict,
    })
}

/// Repair restricted to the rows an SGD run touched.
pub fn repair_sgd_model<F: Real>(
    x: ArrayView2<'_, F>,
    visited_rows: &[usize],
    eta: ArrayView1<'_, F>,
    reference: Option<ArrayView1<'_, F>>,
    opts: &RepairOptions,
) -> Result<LinearRepair<F>> {
    let (n, p) = x.dim();
    if visited_rows.is_empty() || visited_rows.len() >= p {
        return param_err(format!("need 1 <= |visited rows| < p, got {}", visited_rows.len()));
    }
    if let Some(&bad) = visited_rows.iter().find(|&&i| i >= n) {
        return param_err(format!("visited row {bad} out of range for n={n}"));
    }
    let sub = x.select(Axis(0), visited_rows);
    repair_linear(sub.view(), eta, reference, opts)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::randgen::{corrupt, gaussian_vector, ContaminationLaw, CorruptionModel};
    use ndarray::array;

    #[test]
    fn identity_design_returns_y() {
        let x = Array2::<f64>::eye(4);
        let y = array![1.0, -2.0, 3.0, 0.5];
        let fit = min_norm_fit(x.view(), y.view()).unwrap();
        assert!((&fit.theta_hat - &y).iter().all(|v| v.abs() < 1e-14));
    }

    #[test]
    fn zero_response_gives_zero() {
        let x = gaussian_matrix::<f64>(3, 8, 0.0, 1.0, RngSeed(1)).unwrap().entries;
        let fit = min_norm_fit(x.view(), Array1::zeros(3).view()).unwrap();
        assert!(fit.theta_hat.iter().all(|v| *v == 0.0));
    }

    #[test]
    fn hand_gram_inverse() {
        // X X^T = [[2,1],[1,2]], inverse [[2,-1],[-1,2]]/3, u = (1/3, 1/3)
        let x: Array2<f64> = array![[1.0, 0.0, 1.0], [0.0, 1.0, 1.0]];
        let fit = min_norm_fit(x.view(), array![1.0, 1.0].view()).unwrap();
        let expected: Array1<f64> = array![1.0 / 3.0, 1.0 / 3.0, 2.0 / 3.0];
        assert!((&fit.theta_hat - &expected).iter().all(|v| v.abs() < 1e-14));
        assert!((&fit.coeffs - &array![1.0 / 3.0, 1.0 / 3.0]).iter().all(|v: &f64| v.abs() < 1e-14));
    }

    #[test]
    fn rank_deficient_min_norm_rejected() {
        let x = array![[1.0, 2.0, 3.0], [2.0, 4.0, 6.0]];
        assert!(matches!(
            min_norm_fit(x.view(), array![1.0, 2.0].view()),
            Err(RepairError::Rank(_))
        ));
    }

    #[test]
    fn gd_zero_iterations_is_zero() {
        let x = gaussian_matrix::<f64>(3, 6, 0.0, 1.0, RngSeed(2)).unwrap().entries;
        let cfg = GdConfig {
            iters: 0,
            ..GdConfig::default()
        };
        let fit = gd_fit(x.view(), array![1.0, 2.0, 3.0].view(), &cfg).unwrap();
        assert!(fit.theta_hat.iter().all(|v| *v == 0.0));
    }

    #[test]
    fn gd_divergence_names_step() {
        let x = gaussian_matrix::<f64>(5, 20, 0.0, 1.0, RngSeed(2)).unwrap().entries;
        let y = gaussian_vector::<f64>(5, 0.0, 1.0, RngSeed(3)).unwrap();
        let cfg = GdConfig {
            step: Some(50.0),
            iters: 200,
            ..GdConfig::default()
        };
        match gd_fit(x.view(), y.view(), &cfg) {
            Err(RepairError::Divergence { step, .. }) => assert_eq!(step, 50.0),
            other => panic!("expected divergence, got {other:?}"),
        }
        let bad = GdConfig {
            step: Some(-1.0),
            ..GdConfig::default()
        };
        assert!(gd_fit(x.view(), y.view(), &bad).is_err());
    }

    #[test]
    fn sgd_single_full_batch_is_one_gd_step() {
        let x = gaussian_matrix::<f64>(4, 9, 0.0, 1.0, RngSeed(4)).unwrap().entries;
        let y = gaussian_vector::<f64>(4, 0.0, 1.0, RngSeed(5)).unwrap();
        let sgd = sgd_fit(x.view(), y.view(), Loss::Squared, 0.1, &[vec![0, 1, 2, 3]]).unwrap();
        let gd = gd_fit(
            x.view(),
            y.view(),
            &GdConfig {
                step: Some(0.1),
                iters: 1,
                ..GdConfig::default()
            },
        )
        .unwrap();
        assert_eq!(sgd.visited_rows, vec![0, 1, 2, 3]);
        assert!((&sgd.theta_hat - &gd.theta_hat).iter().all(|v| v.abs() < 1e-14));
    }

    #[test]
    fn sgd_stays_in_span_of_visited_rows() {
        let x = gaussian_matrix::<f64>(6, 15, 0.0, 1.0, RngSeed(6)).unwrap().entries;
        let y = gaussian_vector::<f64>(6, 0.0, 1.0, RngSeed(7)).unwrap();
        let fit = sgd_fit(x.view(), y.view(), Loss::Squared, 0.05, &[vec![0], vec![1], vec![0, 1]]).unwrap();
        assert_eq!(fit.visited_rows, vec![0, 1]);
        let sub = x.select(Axis(0), &[0, 1]);
        let resid = row_space_residual(sub.view(), fit.theta_hat.view()).unwrap();
        assert!(resid <= 1e-8 * fit.theta_hat.dot(&fit.theta_hat).sqrt());
    }

    #[test]
    fn sgd_rejects_bad_batches() {
        let x = Array2::<f64>::ones((2, 3));
        let y = array![1.0, 1.0];
        assert!(sgd_fit(x.view(), y.view(), Loss::Squared, 0.1, &[]).is_err());
        assert!(sgd_fit(x.view(), y.view(), Loss::Squared, 0.1, &[vec![2]]).is_err());
    }

    #[test]
    fn sgd_epochs_reduce_loss() {
        let x = gaussian_matrix::<f64>(10, 40, 0.0, 1.0, RngSeed(8)).unwrap().entries;
        let y = gaussian_vector::<f64>(10, 0.0, 1.0, RngSeed(9)).unwrap();
        let batches: Vec<Vec<usize>> = (0..3).flat_map(|_| (0..5).map(|b| vec![2 * b, 2 * b + 1])).collect();
        let fit = sgd_fit(x.view(), y.view(), Loss::Squared, 0.02, &batches).unwrap();
        let before = mean_loss_at(x.view(), y.view(), Array1::zeros(40).view(), Loss::Squared);
        let after = mean_loss_at(x.view(), y.view(), fit.theta_hat.view(), Loss::Squared);
        assert!(after <= before, "{after} > {before}");
    }

    #[test]
    fn logistic_loss_is_stable() {
        let big: f64 = Loss::Logistic.value(1.0, -800.0);
        assert!((big - 800.0).abs() < 1e-9);
        assert!(Loss::Logistic.value(1.0, 800.0) < 1e-300);
    }

    #[test]
    fn feature_cases() {
        let fm = FeatureMap::new(array![[0.5]], Activation::Tanh);
        let out = apply_features(array![[1.0]].view(), &fm).unwrap();
        assert!((out.entries[(0, 0)] - 0.46211715726000974f64).abs() < 1e-15);
        let zero = apply_features(Array2::<f64>::zeros((2, 1)).view(), &fm).unwrap();
        assert!(zero.entries.iter().all(|v| *v == 0.0));
        let relu = FeatureMap::new(array![[1.0, 2.0]], Activation::Relu);
        let neg = apply_features(array![[-1.0], [-3.0]].view(), &relu).unwrap();
        assert!(neg.entries.iter().all(|v| *v == 0.0));
        assert!(apply_features(Array2::<f64>::zeros((2, 3)).view(), &fm).is_err());
    }

    #[test]
    fn relu_derivative_at_zero() {
        assert_eq!(Activation::Relu.derivative(0.0f64), 0.0);
        assert_eq!(Activation::Relu.derivative(1e-300f64), 1.0);
    }

    #[test]
    fn zero_corruption_repairs_exactly() {
        let x = gaussian_matrix::<f64>(5, 60, 0.0, 1.0, RngSeed(10)).unwrap().entries;
        let y = gaussian_vector::<f64>(5, 0.0, 1.0, RngSeed(11)).unwrap();
        let fit = min_norm_fit(x.view(), y.view()).unwrap();
        let rep = repair_linear(x.view(), fit.theta_hat.view(), Some(fit.theta_hat.view()), &RepairOptions::default()).unwrap();
        assert!(rep.verdict.unwrap().exact);
    }

    #[test]
    fn sgd_repair_with_all_rows_matches_linear() {
        let x = gaussian_matrix::<f64>(4, 80, 0.0, 1.0, RngSeed(12)).unwrap().entries;
        let y = gaussian_vector::<f64>(4, 0.0, 1.0, RngSeed(13)).unwrap();
        let fit = min_norm_fit(x.view(), y.view()).unwrap();
        let model = CorruptionModel::new(0.2, ContaminationLaw::default());
        let eta = corrupt(fit.theta_hat.view(), &model, RngSeed(14)).unwrap().eta;
        let opts = RepairOptions::default();
        let a = repair_linear(x.view(), eta.view(), None, &opts).unwrap();
        let b = repair_sgd_model(x.view(), &[0, 1, 2, 3], eta.view(), None, &opts).unwrap();
        assert_eq!(a.theta_tilde, b.theta_tilde);
        assert!(repair_sgd_model(x.view(), &[], eta.view(), None, &opts).is_err());
    }
}
