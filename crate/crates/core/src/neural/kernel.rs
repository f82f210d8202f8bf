use ndarray::{Array1, Array2, ArrayView1, ArrayView2, Zip};

use super::moments::gaussian_moments;
use crate::error::{dim_err, Result};
use crate::linalg::symmetric_eigenvalues;
use crate::linmod::Activation;
use crate::scalar::Real;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Spectrum<F> {
    pub min: F,
    pub max: F,
}

impl<F: Real> Spectrum<F> {
    fn of(m: &Array2<F>) -> Self {
        let ev = symmetric_eigenvalues(m);
        Spectrum {
            min: ev.first().copied().unwrap_or_else(F::zero),
            max: ev.last().copied().unwrap_or_else(F::zero),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct KernelDiagnostics<F> {
    pub g: Array2<F>,
    pub h: Array2<F>,
    pub g_bar: Array2<F>,
    pub h_bar: Array2<F>,
    pub g_spectrum: Spectrum<F>,
    pub h_spectrum: Spectrum<F>,
    /// `||G - G_bar||_op`.
    pub g_deviation: F,
    /// `||H - H_bar||_op`.
    pub h_deviation: F,
}

fn check(w: ArrayView2<'_, impl Real>, x: ArrayView2<'_, impl Real>) -> Result<()> {
    if w.nrows() != x.ncols() {
        return dim_err(format!("W has {} rows, X has {} columns", w.nrows(), x.ncols()));
    }
    Ok(())
}

/// `G_il = (1/p) sum_j psi(W_j^T x_i) psi(W_j^T x_l)`.
pub fn feature_gram<F: Real>(w: ArrayView2<'_, F>, x: ArrayView2<'_, F>, act: Activation) -> Result<Array2<F>> {
    check(w, x)?;
    let phi = x.dot(&w).mapv_into(|t| act.apply(t));
    let p = F::lit(w.ncols() as f64);
    Ok(phi.dot(&phi.t()) / p)
}

/// `H_il = (x_i^T x_l / d) (1/p) sum_j beta_j^2 psi'(W_j^T x_i) psi'(W_j^T x_l)`.
pub fn tangent_gram<F: Real>(w: ArrayView2<'_, F>, beta: ArrayView1<'_, F>, x: ArrayView2<'_, F>, act: Activation) -> Result<Array2<F>> {
    check(w, x)?;
    if beta.len() != w.ncols() {
        return dim_err("beta length does not match W columns");
    }
    let dphi = x.dot(&w).mapv_into(|t| act.derivative(t));
    let mut weighted = dphi.clone();
    Zip::from(weighted.columns_mut()).and(&beta).for_each(|mut c, &b| c *= b * b);
    let (p, d) = (F::lit(w.ncols() as f64), F::lit(x.ncols() as f64));
    let inner = weighted.dot(&dphi.t()) / p;
    Ok(inner * (x.dot(&x.t()) / d))
}

fn cosines<F: Real>(x: ArrayView2<'_, F>) -> (Array2<F>, Array1<F>) {
    let norms: Array1<F> = x.rows().into_iter().map(|r| r.dot(&r).sqrt()).collect();
    let mut rho = x.dot(&x.t());
    for ((i, l), v) in rho.indexed_iter_mut() {
        *v /= norms[i] * norms[l];
    }
    (rho, norms)
}

/// Infinite-width limit of `G`.
pub fn limit_g<F: Real>(x: ArrayView2<'_, F>, act: Activation) -> Array2<F> {
    let (mut rho, norms) = cosines(x);
    let n = rho.nrows();
    match act {
        Activation::Relu => {
            let sqrt_d = F::lit(x.ncols() as f64).sqrt();
            let c = F::lit(1.0 / (2.0 * std::f64::consts::PI));
            let quarter = F::lit(0.25);
            for i in 0..n {
                for l in 0..n {
                    rho[(i, l)] = if i == l {
                        F::lit(0.5)
                    } else {
                        c + quarter * rho[(i, l)] + c * (norms[i] / sqrt_d - F::one() + norms[l] / sqrt_d - F::one())
                    };
                }
            }
            rho
        }
        Activation::Tanh => {
            let m = gaussian_moments(act);
            let a = F::lit(m.mean_derivative.powi(2));
            let diag = F::lit(m.second - m.mean_derivative.powi(2));
            rho.mapv_inplace(|v| a * v);
            for i in 0..n {
                rho[(i, i)] += diag;
            }
            rho
        }
    }
}

/// Infinite-width limit of `H`:
/// `(E psi')^2 rho_il + (E psi'^2 - (E psi')^2) 1{i=l}`.
pub fn limit_h<F: Real>(x: ArrayView2<'_, F>, act: Activation) -> Array2<F> {
    let m = gaussian_moments(act);
    let a = F::lit(m.mean_derivative.powi(2));
    let diag = F::lit(m.derivative_second - m.mean_derivative.powi(2));
    let (mut rho, _) = cosines(x);
    rho.mapv_inplace(|v| a * v);
    for i in 0..rho.nrows() {
        rho[(i, i)] += diag;
    }
    rho
}

fn op_norm_diff<F: Real>(a: &Array2<F>, b: &Array2<F>) -> F {
    symmetric_eigenvalues(&(a - b)).into_iter().fold(F::zero(), |m, v| m.max(v.abs()))
}

pub fn kernel_diagnostics<F: Real>(
    w: ArrayView2<'_, F>,
    beta: ArrayView1<'_, F>,
    x: ArrayView2<'_, F>,
    act: Activation,
) -> Result<KernelDiagnostics<F>> {
    let g = feature_gram(w, x, act)?;
    let h = tangent_gram(w, beta, x, act)?;
    let g_bar = limit_g(x, act);
    let h_bar = limit_h(x, act);
    Ok(KernelDiagnostics {
        g_spectrum: Spectrum::of(&g),
        h_spectrum: Spectrum::of(&h),
        g_deviation: op_norm_diff(&g, &g_bar),
        h_deviation: op_norm_diff(&h, &h_bar),
        g,
        h,
        g_bar,
        h_bar,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::neural::mlp_init;
    use crate::randgen::{gaussian_matrix, RngSeed};

    #[test]
    fn relu_h_limit_diagonal() {
        let x = gaussian_matrix::<f64>(3, 5, 0.0, 1.0, RngSeed(1)).unwrap().entries;
        let hb = limit_h(x.view(), Activation::Relu);
        for i in 0..3 {
            assert!((hb[(i, i)] - 0.5).abs() < 1e-15);
        }
        let gb = limit_g(x.view(), Activation::Relu);
        assert!((gb[(1, 1)] - 0.5).abs() < 1e-15);
    }

    #[test]
    fn single_sample_gram() {
        let x = gaussian_matrix::<f64>(1, 6, 0.0, 1.0, RngSeed(2)).unwrap().entries;
        let params = mlp_init::<f64>(40, 6, Activation::Tanh, RngSeed(3)).unwrap();
        let g = feature_gram(params.hidden.view(), x.view(), Activation::Tanh).unwrap();
        let direct = x.dot(&params.hidden).iter().map(|t| t.tanh().powi(2)).sum::<f64>() / 40.0;
        assert!(g[(0, 0)] > 0.0);
        assert!((g[(0, 0)] - direct).abs() < 1e-14);
    }

    #[test]
    fn grams_are_psd_and_close_to_limits() {
        let x = gaussian_matrix::<f64>(5, 400, 0.0, 1.0, RngSeed(4)).unwrap().entries;
        for act in [Activation::Tanh, Activation::Relu] {
            let params = mlp_init::<f64>(4000, 400, act, RngSeed(5)).unwrap();
            let k = kernel_diagnostics(params.hidden.view(), params.output.view(), x.view(), act).unwrap();
            assert!(k.g_spectrum.min >= -1e-10 && k.h_spectrum.min >= -1e-10);
            assert!(k.g_deviation < 0.15, "{act:?} G deviation {}", k.g_deviation);
            assert!(k.h_deviation < 0.25, "{act:?} H deviation {}", k.h_deviation);
        }
    }
}
