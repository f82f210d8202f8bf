//! Median (least absolute deviation) regression, `argmin_u ||eta - A u||_1`.
//!
//! The problem is solved through its bounded dual
//!
//! ```text
//!     min  -eta^T x   s.t.  A^T x = A^T 1 / 2,   0 <= x <= 1
//! ```
//!
//! with a Mehrotra predictor-corrector primal-dual interior point method
//! (the Frisch-Newton scheme). The regression coefficients are the negated
//! multipliers of the equality constraints. After convergence the interior
//! iterate is snapped to a basic solution: the `k` rows with the smallest
//! residuals that are linearly independent are interpolated exactly, and the
//! snap is kept when it does not worsen the objective.

use ndarray::{Array1, Array2, ArrayView1, ArrayView2, Axis, Zip};
use serde::{Deserialize, Serialize};

use crate::error::{dim_err, param_err, RepairError, Result};
use crate::linalg::{lu_solve, Cholesky, PivotedQr};
use crate::scalar::Real;

#[derive(Debug, Clone, PartialEq)]
pub struct RegressionInstance<F> {
    /// `m x k` design with rows `a_i^T`.
    pub design: Array2<F>,
    pub response: Array1<F>,
    /// Ground truth coefficients, when known.
    pub truth: Option<Array1<F>>,
}

impl<F: Real> RegressionInstance<F> {
    pub fn new(design: Array2<F>, response: Array1<F>) -> Result<Self> {
        let (m, k) = design.dim();
        if k == 0 || m < k {
            return dim_err(format!("need m >= k >= 1, got m={m}, k={k}"));
        }
        if response.len() != m {
            return dim_err(format!("response has length {}, design has {m} rows", response.len()));
        }
        if design.iter().chain(response.iter()).any(|v| !v.is_finite()) {
            return param_err("instance has non-finite entries");
        }
        Ok(RegressionInstance {
            design,
            response,
            truth: None,
        })
    }

    pub fn with_truth(mut self, truth: Array1<F>) -> Result<Self> {
        if truth.len() != self.design.ncols() {
            return dim_err("truth length does not match the design");
        }
        self.truth = Some(truth);
        Ok(self)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SolverStatus {
    Optimal,
    IterationLimit,
    NumericalFailure,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SolverOptions {
    /// Relative duality gap; the absolute target is `gap_tol * (1 + ||eta||_1)`.
    pub gap_tol: f64,
    pub max_iter: usize,
    /// Rank threshold relative to the largest design entry.
    pub rank_tol: f64,
    pub crossover: bool,
    /// Fraction of the distance to the boundary taken per step.
    pub step_fraction: f64,
}

impl Default for SolverOptions {
    fn default() -> Self {
        SolverOptions {
            gap_tol: 1e-9,
            max_iter: 200,
            rank_tol: 1e-10,
            crossover: true,
            step_fraction: 0.99995,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SolverReport<F> {
    pub u_hat: Array1<F>,
    /// `||eta - A u_hat||_1`.
    pub objective: F,
    pub iterations: usize,
    pub duality_gap: F,
    pub status: SolverStatus,
    /// The optimum is not unique (a dual multiplier sits on its bound, or
    /// several vertices attain the minimum).
    pub degenerate: bool,
    /// Whether `u_hat` is the snapped basic solution.
    pub crossover: bool,
}

#[derive(Debug, Clone, PartialEq)]
pub struct RecoveryVerdict<F> {
    pub exact: bool,
    pub max_abs_dev: F,
    pub per_coord_match: Vec<bool>,
    pub tol_used: F,
}

impl<F: Real> RecoveryVerdict<F> {
    pub fn match_rate(&self) -> f64 {
        if self.per_coord_match.is_empty() {
            return 1.0;
        }
        self.per_coord_match.iter().filter(|&&b| b).count() as f64 / self.per_coord_match.len() as f64
    }
}

/// `||eta - A u||_1`.
pub fn l1_objective<F: Real>(a: ArrayView2<'_, F>, eta: ArrayView1<'_, F>, u: ArrayView1<'_, F>) -> Result<F> {
    if a.nrows() != eta.len() || a.ncols() != u.len() {
        return dim_err(format!(
            "design {}x{}, eta {}, u {}",
            a.nrows(),
            a.ncols(),
            eta.len(),
            u.len()
        ));
    }
    Ok(residual_l1(a, eta, u))
}

fn residual_l1<F: Real>(a: ArrayView2<'_, F>, eta: ArrayView1<'_, F>, u: ArrayView1<'_, F>) -> F {
    let fitted = a.dot(&u);
    Zip::from(&eta)
        .and(&fitted)
        .fold(F::zero(), |acc, &e, &f| acc + (e - f).abs())
}

/// Compares a repaired vector with the reference:
/// exact iff `max_j |tilde_j - hat_j| <= rel_tol * max(1, ||hat||_inf)`.
pub fn certify_recovery<F: Real>(
    theta_tilde: ArrayView1<'_, F>,
    theta_hat: ArrayView1<'_, F>,
    rel_tol: F,
) -> Result<RecoveryVerdict<F>> {
    if theta_tilde.len() != theta_hat.len() {
        return dim_err(format!("lengths differ: {} vs {}", theta_tilde.len(), theta_hat.len()));
    }
    let scale = theta_hat.iter().fold(F::one(), |acc, v| acc.max(v.abs()));
    let tol_used = rel_tol * scale;
    let mut max_abs_dev = F::zero();
    let per_coord_match = theta_tilde
        .iter()
        .zip(theta_hat.iter())
        .map(|(&t, &h)| {
            let dev = (t - h).abs();
            max_abs_dev = max_abs_dev.max(dev);
            dev <= tol_used
        })
        .collect();
    Ok(RecoveryVerdict {
        exact: max_abs_dev <= tol_used,
        max_abs_dev,
        per_coord_match,
        tol_used,
    })
}

/// A design prepared for repeated median regressions.
///
/// Construction checks the rank once (pivoted QR) and keeps the
/// factorization for the least squares starting point, so many responses
/// can share one design.
#[derive(Debug, Clone)]
pub struct L1Regressor<F> {
    design: Array2<F>,
    qr: PivotedQr<F>,
    opts: SolverOptions,
}

impl<F: Real> L1Regressor<F> {
    pub fn new(design: Array2<F>, opts: SolverOptions) -> Result<Self> {
        let (m, k) = design.dim();
        if k == 0 || m < k {
            return dim_err(format!("need m >= k >= 1, got m={m}, k={k}"));
        }
        if design.iter().any(|v| !v.is_finite()) {
            return param_err("design has non-finite entries");
        }
        let design = design.as_standard_layout().into_owned();
        let qr = PivotedQr::new(design.view())?;
        let amax = design.iter().fold(F::zero(), |acc, v| acc.max(v.abs()));
        let threshold = F::tol(opts.rank_tol) * amax;
        let rank = qr.rank(threshold);
        if amax == F::zero() || rank < k {
            return Err(RepairError::Degenerate(format!(
                "design {m}x{k} has numerical rank {rank} (threshold {})",
                threshold.as_f64()
            )));
        }
        Ok(L1Regressor { design, qr, opts })
    }

    pub fn design(&self) -> &Array2<F> {
        &self.design
    }

    pub fn options(&self) -> &SolverOptions {
        &self.opts
    }

    pub fn solve(&self, eta: ArrayView1<'_, F>) -> Result<SolverReport<F>> {
        let a = self.design.view();
        let (m, k) = a.dim();
        if eta.len() != m {
            return dim_err(format!("eta has length {}, design has {m} rows", eta.len()));
        }
        if eta.iter().any(|v| !v.is_finite()) {
            return param_err("eta has non-finite entries");
        }
        let two = F::lit(2.0);
        let half = F::lit(0.5);
        let eta_l1 = eta.iter().fold(F::zero(), |acc, v| acc + v.abs());
        let gap_target = F::tol(self.opts.gap_tol) * (F::one() + eta_l1);
        let feas_tol = F::tol(1e-8);
        let frac = F::lit(self.opts.step_fraction);

        let c = eta.mapv(|v| -v);
        let b = a.t().dot(&Array1::from_elem(m, half));
        let b_scale = F::one() + b.iter().fold(F::zero(), |acc, v| acc.max(v.abs()));
        let c_scale = F::one() + c.iter().fold(F::zero(), |acc, v| acc.max(v.abs()));

        let mut x = Array1::from_elem(m, half);
        let mut s = Array1::from_elem(m, half);
        let mut u = self.qr.solve_least_squares(c.view());
        let r0 = &c - &a.dot(&u);
        let mean_abs = r0.iter().fold(F::zero(), |acc, v| acc + v.abs()) / F::lit(m as f64);
        let floor = F::lit(1e-3) * (F::one() + c.iter().fold(F::zero(), |acc, v| acc + v.abs()) / F::lit(m as f64));
        let delta = mean_abs.max(floor);
        let mut z = r0.mapv(|v| v.max(F::zero()) + delta);
        let mut w = r0.mapv(|v| (-v).max(F::zero()) + delta);

        let mut status = SolverStatus::IterationLimit;
        let mut iterations = 0;
        let mut scaled = Array2::<F>::zeros((m, k));

        for it in 0..self.opts.max_iter {
            iterations = it;
            let rp = &b - &a.t().dot(&x);
            let rd = &c - &a.dot(&u) - &z + &w;
            let gap = x.dot(&z) + s.dot(&w);
            if !gap.is_finite() {
                status = SolverStatus::NumericalFailure;
                break;
            }
            let rp_inf = rp.iter().fold(F::zero(), |acc, v| acc.max(v.abs()));
            let rd_inf = rd.iter().fold(F::zero(), |acc, v| acc.max(v.abs()));
            if two * gap <= gap_target && rp_inf <= feas_tol * b_scale && rd_inf <= feas_tol * c_scale {
                status = SolverStatus::Optimal;
                break;
            }

            let d = Zip::from(&x)
                .and(&s)
                .and(&z)
                .and(&w)
                .map_collect(|&xi, &si, &zi, &wi| F::one() / (zi / xi + wi / si));
            Zip::from(scaled.rows_mut())
                .and(a.rows())
                .and(&d)
                .for_each(|mut dst, src, &di| {
                    let sq = di.sqrt();
                    Zip::from(&mut dst).and(&src).for_each(|o, &v| *o = v * sq);
                });
            let mut normal = scaled.t().dot(&scaled);
            let chol = match factor_with_regularization(&mut normal) {
                Some(ch) => ch,
                None => {
                    status = SolverStatus::NumericalFailure;
                    break;
                }
            };

            let newton = |rxz: &Array1<F>, rsw: &Array1<F>| {
                let rho = Zip::from(&rd)
                    .and(rxz)
                    .and(rsw)
                    .and(&x)
                    .and(&s)
                    .map_collect(|&rdi, &a1, &a2, &xi, &si| rdi - a1 / xi + a2 / si);
                let rhs = &rp + &a.t().dot(&(&d * &rho));
                let du = chol.solve(rhs.view());
                let dx = &d * &(&a.dot(&du) - &rho);
                let dz = Zip::from(rxz)
                    .and(&z)
                    .and(&dx)
                    .and(&x)
                    .map_collect(|&r, &zi, &dxi, &xi| (r - zi * dxi) / xi);
                let dw = Zip::from(rsw)
                    .and(&w)
                    .and(&dx)
                    .and(&s)
                    .map_collect(|&r, &wi, &dxi, &si| (r + wi * dxi) / si);
                (du, dx, dz, dw)
            };

            // Predictor.
            let rxz = (&x * &z).mapv(|v| -v);
            let rsw = (&s * &w).mapv(|v| -v);
            let (_, dx_a, dz_a, dw_a) = newton(&rxz, &rsw);
            let ds_a = dx_a.mapv(|v| -v);
            let ap = max_step(&x, &dx_a).min(max_step(&s, &ds_a)).min(F::one());
            let ad = max_step(&z, &dz_a).min(max_step(&w, &dw_a)).min(F::one());
            let mu = gap / F::lit(2.0 * m as f64);
            let mu_aff = (Zip::from(&x)
                .and(&dx_a)
                .and(&z)
                .and(&dz_a)
                .fold(F::zero(), |acc, &xi, &dxi, &zi, &dzi| acc + (xi + ap * dxi) * (zi + ad * dzi))
                + Zip::from(&s)
                    .and(&ds_a)
                    .and(&w)
                    .and(&dw_a)
                    .fold(F::zero(), |acc, &si, &dsi, &wi, &dwi| acc + (si + ap * dsi) * (wi + ad * dwi)))
                / F::lit(2.0 * m as f64);
            let sigma = (mu_aff / mu).powi(3).min(F::one());

            // Corrector.
            let sm = sigma * mu;
            let rxz = Zip::from(&x)
                .and(&z)
                .and(&dx_a)
                .and(&dz_a)
                .map_collect(|&xi, &zi, &dxi, &dzi| sm - xi * zi - dxi * dzi);
            let rsw = Zip::from(&s)
                .and(&w)
                .and(&ds_a)
                .and(&dw_a)
                .map_collect(|&si, &wi, &dsi, &dwi| sm - si * wi - dsi * dwi);
            let (du, dx, dz, dw) = newton(&rxz, &rsw);
            let ds = dx.mapv(|v| -v);
            let ap = (frac * max_step(&x, &dx).min(max_step(&s, &ds))).min(F::one());
            let ad = (frac * max_step(&z, &dz).min(max_step(&w, &dw))).min(F::one());
            if !(ap.is_finite() && ad.is_finite()) || du.iter().any(|v| !v.is_finite()) {
                status = SolverStatus::NumericalFailure;
                break;
            }
            x.scaled_add(ap, &dx);
            s.scaled_add(ap, &ds);
            u.scaled_add(ad, &du);
            z.scaled_add(ad, &dz);
            w.scaled_add(ad, &dw);
            iterations = it + 1;
        }

        let mut u_hat = u.mapv(|v| -v);
        if u_hat.iter().any(|v| !v.is_finite()) {
            u_hat = self.qr.solve_least_squares(eta);
            status = SolverStatus::NumericalFailure;
        }
        let mut objective = residual_l1(a, eta, u_hat.view());
        let dual_bound = Zip::from(&eta)
            .and(&x)
            .fold(F::zero(), |acc, &e, &xi| acc + e * (two * xi - F::one()));

        let mut snapped = false;
        let mut degenerate = false;
        if self.opts.crossover {
            if let Some(vertex) = snap_to_vertex(a, eta, u_hat.view()) {
                let snap_obj = residual_l1(a, eta, vertex.u.view());
                if snap_obj <= objective + gap_target {
                    u_hat = vertex.u.clone();
                    objective = snap_obj;
                    snapped = true;
                    degenerate = vertex.multipliers_on_bound(a, eta, F::tol(1e-9));
                }
            }
        }
        let duality_gap = if status == SolverStatus::NumericalFailure {
            F::infinity()
        } else {
            (objective - dual_bound).max(F::zero())
        };
        Ok(SolverReport {
            u_hat,
            objective,
            iterations,
            duality_gap,
            status,
            degenerate,
            crossover: snapped,
        })
    }
}

/// Median regression of one instance.
pub fn median_regress<F: Real>(inst: &RegressionInstance<F>, opts: &SolverOptions) -> Result<SolverReport<F>> {
    L1Regressor::new(inst.design.clone(), *opts)?.solve(inst.response.view())
}

fn factor_with_regularization<F: Real>(normal: &mut Array2<F>) -> Option<Cholesky<F>> {
    if let Ok(ch) = Cholesky::new(normal) {
        return Some(ch);
    }
    let k = normal.nrows();
    let trace = normal.diag().iter().fold(F::zero(), |acc, &v| acc + v.abs());
    let mut bump = F::epsilon() * trace / F::lit(k as f64);
    for _ in 0..8 {
        for i in 0..k {
            normal[(i, i)] += bump;
        }
        if let Ok(ch) = Cholesky::new(normal) {
            return Some(ch);
        }
        bump = bump * F::lit(100.0);
    }
    None
}

/// Largest `alpha` with `v + alpha dv >= 0`, or infinity.
fn max_step<F: Real>(v: &Array1<F>, dv: &Array1<F>) -> F {
    Zip::from(v).and(dv).fold(F::infinity(), |acc, &vi, &dvi| {
        if dvi < F::zero() {
            acc.min(-vi / dvi)
        } else {
            acc
        }
    })
}

/// A basic solution: `k` rows interpolated exactly, with the row
/// factorization `A_B = T Q` (`T` lower triangular, `Q` orthonormal rows).
struct Vertex<F> {
    u: Array1<F>,
    basis: Vec<usize>,
    t: Array2<F>,
    q: Array2<F>,
}

fn snap_to_vertex<F: Real>(a: ArrayView2<'_, F>, eta: ArrayView1<'_, F>, u: ArrayView1<'_, F>) -> Option<Vertex<F>> {
    let (m, k) = a.dim();
    let fitted = a.dot(&u);
    let mut order: Vec<usize> = (0..m).collect();
    order.sort_by(|&i, &j| {
        let ri = (eta[i] - fitted[i]).abs();
        let rj = (eta[j] - fitted[j]).abs();
        ri.partial_cmp(&rj).unwrap_or(std::cmp::Ordering::Equal)
    });

    let mut q = Array2::<F>::zeros((k, k));
    let mut t = Array2::<F>::zeros((k, k));
    let mut basis = Vec::with_capacity(k);
    let indep_tol = F::tol(1e-8);
    for &i in &order {
        if basis.len() == k {
            break;
        }
        let row = a.row(i);
        let row_norm = row.dot(&row).sqrt();
        if row_norm == F::zero() {
            continue;
        }
        let nb = basis.len();
        let mut v = row.to_owned();
        let mut coeffs = vec![F::zero(); nb];
        // Gram-Schmidt, twice.
        for _pass in 0..2 {
            for (j, cj) in coeffs.iter_mut().enumerate() {
                let qj = q.row(j);
                let proj = qj.dot(&v);
                *cj += proj;
                v.scaled_add(-proj, &qj);
            }
        }
        let vn = v.dot(&v).sqrt();
        if vn <= indep_tol * row_norm {
            continue;
        }
        for (j, cj) in coeffs.into_iter().enumerate() {
            t[(nb, j)] = cj;
        }
        t[(nb, nb)] = vn;
        q.row_mut(nb).assign(&v.mapv(|x| x / vn));
        basis.push(i);
    }
    if basis.len() < k {
        return None;
    }

    // A_B u = eta_B  <=>  T (Q u) = eta_B.
    let eta_b = Array1::from_iter(basis.iter().map(|&i| eta[i]));
    let solve = |rhs: &Array1<F>| {
        let mut y = Array1::<F>::zeros(k);
        for i in 0..k {
            let mut acc = rhs[i];
            for j in 0..i {
                acc -= t[(i, j)] * y[j];
            }
            y[i] = acc / t[(i, i)];
        }
        q.t().dot(&y)
    };
    let mut u_vertex = solve(&eta_b);
    // One round of refinement on the basis rows.
    let resid = Array1::from_iter(basis.iter().map(|&i| eta[i] - a.row(i).dot(&u_vertex)));
    u_vertex += &solve(&resid);
    Some(Vertex {
        u: u_vertex,
        basis,
        t,
        q,
    })
}

impl<F: Real> Vertex<F> {
    /// Dual multipliers `v` of the basis rows solve
    /// `A_B^T v = sum_{i not in B} sign(r_i) a_i`; the vertex is the unique
    /// optimum when every `|v_j| < 1`. Only decided when no non-basic
    /// residual vanishes.
    fn multipliers_on_bound(&self, a: ArrayView2<'_, F>, eta: ArrayView1<'_, F>, tol: F) -> bool {
        let k = self.basis.len();
        let fitted = a.dot(&self.u);
        let scale = F::one() + eta.iter().fold(F::zero(), |acc, v| acc.max(v.abs()));
        let mut in_basis = vec![false; a.nrows()];
        for &i in &self.basis {
            in_basis[i] = true;
        }
        let mut g = Array1::<F>::zeros(k);
        for (i, row) in a.axis_iter(Axis(0)).enumerate() {
            if in_basis[i] {
                continue;
            }
            let r = eta[i] - fitted[i];
            if r.abs() <= tol * scale {
                return false;
            }
            g.scaled_add(r.signum(), &row);
        }
        // A_B^T = Q^T T^T, so T^T v = Q g.
        let qg = self.q.dot(&g);
        let mut v = Array1::<F>::zeros(k);
        for i in (0..k).rev() {
            let mut acc = qg[i];
            for j in (i + 1)..k {
                acc -= self.t[(j, i)] * v[j];
            }
            v[i] = acc / self.t[(i, i)];
        }
        v.iter().any(|x| x.abs() >= F::one() - tol)
    }
}

/// Exhaustive optimum over all basic solutions (every `k`-subset of rows).
///
/// Limited to `m <= 25` and `k <= 4`. `degenerate` is set when two distinct
/// vertices attain the minimum.
pub fn vertex_oracle<F: Real>(inst: &RegressionInstance<F>) -> Result<SolverReport<F>> {
    let a = inst.design.view();
    let eta = inst.response.view();
    let (m, k) = a.dim();
    if m > 25 || k > 4 {
        return Err(RepairError::TooLarge(format!("m={m}, k={k} exceeds m<=25, k<=4")));
    }
    let mut best: Option<(F, Array1<F>)> = None;
    let mut candidates: Vec<(F, Array1<F>)> = Vec::new();
    let mut subset: Vec<usize> = (0..k).collect();
    let mut examined = 0;
    let pivot_tol = F::tol(1e-12);
    loop {
        examined += 1;
        let sub_a = a.select(Axis(0), &subset);
        let sub_eta = Array1::from_iter(subset.iter().map(|&i| eta[i]));
        if let Some(u) = lu_solve(sub_a.view(), sub_eta.view(), pivot_tol) {
            let obj = residual_l1(a, eta, u.view());
            if best.as_ref().is_none_or(|(b, _)| obj < *b) {
                best = Some((obj, u.clone()));
            }
            candidates.push((obj, u));
        }
        if !next_combination(&mut subset, m) {
            break;
        }
    }
    let (objective, u_hat) = best.ok_or_else(|| RepairError::Degenerate("no nonsingular k-subset of rows".into()))?;
    let obj_tol = F::tol(1e-10) * (F::one() + objective);
    let u_scale = F::one() + u_hat.iter().fold(F::zero(), |acc, v| acc.max(v.abs()));
    let degenerate = candidates.iter().any(|(obj, u)| {
        *obj <= objective + obj_tol
            && u.iter()
                .zip(u_hat.iter())
                .any(|(x, y)| (*x - *y).abs() > F::tol(1e-8) * u_scale)
    });
    Ok(SolverReport {
        u_hat,
        objective,
        iterations: examined,
        duality_gap: F::zero(),
        status: SolverStatus::Optimal,
        degenerate,
        crossover: true,
    })
}

fn next_combination(subset: &mut [usize], m: usize) -> bool {
    let k = subset.len();
    let mut i = k;
    while i > 0 {
        i -= 1;
        if subset[i] < m - k + i {
            subset[i] += 1;
            for j in (i + 1)..k {
                subset[j] = subset[j - 1] + 1;
            }
            return true;
        }
    }
    false
}
