use crate::linmod::Activation;

/// Moments of an activation under `Z ~ N(0, 1)`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GaussianMoments {
    /// `E psi'(Z)`.
    pub mean_derivative: f64,
    /// `E psi(Z)^2`.
    pub second: f64,
    /// `E psi'(Z)^2`.
    pub derivative_second: f64,
}

pub fn gaussian_moments(act: Activation) -> GaussianMoments {
    match act {
        Activation::Relu => GaussianMoments {
            mean_derivative: 0.5,
            second: 0.5,
            derivative_second: 0.5,
        },
        Activation::Tanh => GaussianMoments {
            mean_derivative: gaussian_expectation(|z| 1.0 - z.tanh().powi(2)),
            second: gaussian_expectation(|z| z.tanh().powi(2)),
            derivative_second: gaussian_expectation(|z| (1.0 - z.tanh().powi(2)).powi(2)),
        },
    }
}

/// `E g(Z)` for bounded `g`, truncated to `|z| <= 12` where the density is
/// below `1e-31`.
fn gaussian_expectation(g: impl Fn(f64) -> f64) -> f64 {
    let norm = 1.0 / (2.0 * std::f64::consts::PI).sqrt();
    let f = |z: f64| g(z) * (-0.5 * z * z).exp() * norm;
    // split at 0 so both halves start smooth
    adaptive_simpson(&f, -12.0, 0.0, 1e-14) + adaptive_simpson(&f, 0.0, 12.0, 1e-14)
}

fn adaptive_simpson(f: &impl Fn(f64) -> f64, a: f64, b: f64, tol: f64) -> f64 {
    let (fa, fb) = (f(a), f(b));
    let m = 0.5 * (a + b);
    let fm = f(m);
    let whole = (b - a) / 6.0 * (fa + 4.0 * fm + fb);
    simpson_step(f, a, b, fa, fm, fb, whole, tol, 50)
}

#[allow(clippy::too_many_arguments)]
fn simpson_step(f: &impl Fn(f64) -> f64, a: f64, b: f64, fa: f64, fm: f64, fb: f64, whole: f64, tol: f64, depth: u32) -> f64 {
    let m = 0.5 * (a + b);
    let (lm, rm) = (0.5 * (a + m), 0.5 * (m + b));
    let (flm, frm) = (f(lm), f(rm));
    let left = (m - a) / 6.0 * (fa + 4.0 * flm + fm);
    let right = (b - m) / 6.0 * (fm + 4.0 * frm + fb);
    let delta = left + right - whole;
    if depth == 0 || delta.abs() <= 15.0 * tol {
        return left + right + delta / 15.0;
    }
    simpson_step(f, a, m, fa, flm, fm, left, tol / 2.0, depth - 1) + simpson_step(f, m, b, fm, frm, fb, right, tol / 2.0, depth - 1)
}
