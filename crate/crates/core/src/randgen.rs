//! Seeded random generation of designs, vectors and the contamination channel.
//!
//! Every generator is a pure function of its arguments and an [`RngSeed`].
//! The underlying stream is ChaCha8 keyed by the seed; uniforms are taken
//! from the top 53 bits of each 64-bit word and normals come from a
//! Box-Muller transform on that stream, so the output does not depend on the
//! platform's libm beyond `ln`, `sqrt`, `sin` and `cos`.

use std::collections::BTreeMap;
use std::fmt;
use std::str::FromStr;

use ndarray::{Array1, Array2, ArrayView1};
use rand_chacha::ChaCha8Rng;
use rand_core::{RngCore, SeedableRng};
use serde::{Deserialize, Serialize};

use crate::error::{dim_err, param_err, RepairError, Result};
use crate::scalar::Real;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(transparent)]
pub struct RngSeed(pub u64);

impl RngSeed {
    /// Derives an independent child seed from this seed and a path of
    /// integers (cell coordinates, trial index, stream tag...).
    pub fn derive(self, path: &[u64]) -> RngSeed {
        let mut h = splitmix64(self.0 ^ 0x6a09_e667_f3bc_c908);
        for &p in path {
            h = splitmix64(h ^ splitmix64(p.wrapping_add(0x9e37_79b9_7f4a_7c15)));
        }
        RngSeed(h)
    }

    pub fn stream(self) -> SeededStream {
        SeededStream::new(self)
    }
}

impl fmt::Display for RngSeed {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.0)
    }
}

impl FromStr for RngSeed {
    type Err = RepairError;

    /// Accepts decimal (`42`) or hexadecimal (`0x2a`).
    fn from_str(s: &str) -> Result<Self> {
        let t = s.trim();
        let parsed = if let Some(hex) = t.strip_prefix("0x").or_else(|| t.strip_prefix("0X")) {
            u64::from_str_radix(hex, 16)
        } else {
            t.parse::<u64>()
        };
        parsed
            .map(RngSeed)
            .map_err(|e| RepairError::Parse(format!("seed {s:?}: {e}")))
    }
}

fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9e37_79b9_7f4a_7c15);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

/// Deterministic stream of uniforms and normals.
pub struct SeededStream {
    rng: ChaCha8Rng,
    spare: Option<f64>,
}

impl SeededStream {
    pub fn new(seed: RngSeed) -> Self {
        SeededStream {
            rng: ChaCha8Rng::seed_from_u64(seed.0),
            spare: None,
        }
    }

    /// Uniform on `[0, 1)` with 53 bits of resolution.
    pub fn uniform(&mut self) -> f64 {
        (self.rng.next_u64() >> 11) as f64 * (1.0 / (1u64 << 53) as f64)
    }

    pub fn standard_normal(&mut self) -> f64 {
        if let Some(z) = self.spare.take() {
            return z;
        }
        // 1 - U lies in (0, 1], so the log is finite.
        let u1 = 1.0 - self.uniform();
        let u2 = self.uniform();
        let radius = (-2.0 * u1.ln()).sqrt();
        let angle = 2.0 * std::f64::consts::PI * u2;
        self.spare = Some(radius * angle.sin());
        radius * angle.cos()
    }

    pub fn normal(&mut self, mean: f64, sd: f64) -> f64 {
        mean + sd * self.standard_normal()
    }

    pub fn bernoulli(&mut self, p: f64) -> bool {
        self.uniform() < p
    }

    /// Uniform on `[lo, hi)`.
    pub fn uniform_range(&mut self, lo: f64, hi: f64) -> f64 {
        lo + (hi - lo) * self.uniform()
    }
}

/// Contamination law `Q_j` of a single coordinate.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "law", rename_all = "snake_case")]
pub enum ContaminationLaw {
    Normal { mean: f64, sd: f64 },
    /// Point mass: a constant shift.
    Constant { value: f64 },
    /// Heavy tailed alternative.
    Cauchy { location: f64, scale: f64 },
}

impl Default for ContaminationLaw {
    fn default() -> Self {
        ContaminationLaw::Normal { mean: 1.0, sd: 1.0 }
    }
}

impl ContaminationLaw {
    pub fn sample(&self, stream: &mut SeededStream) -> f64 {
        match *self {
            ContaminationLaw::Normal { mean, sd } => stream.normal(mean, sd),
            ContaminationLaw::Constant { value } => value,
            ContaminationLaw::Cauchy { location, scale } => {
                let u = stream.uniform();
                location + scale * (std::f64::consts::PI * (u - 0.5)).tan()
            }
        }
    }

    fn validate(&self) -> Result<()> {
        match *self {
            ContaminationLaw::Normal { mean, sd } if mean.is_finite() && sd.is_finite() && sd >= 0.0 => Ok(()),
            ContaminationLaw::Constant { value } if value.is_finite() => Ok(()),
            ContaminationLaw::Cauchy { location, scale } if location.is_finite() && scale.is_finite() && scale > 0.0 => Ok(()),
            other => param_err(format!("contamination law {other} is not samplable")),
        }
    }
}

impl fmt::Display for ContaminationLaw {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match *self {
            ContaminationLaw::Normal { mean, sd } => write!(f, "normal:{mean},{sd}"),
            ContaminationLaw::Constant { value } => write!(f, "const:{value}"),
            ContaminationLaw::Cauchy { location, scale } => write!(f, "cauchy:{location},{scale}"),
        }
    }
}

impl FromStr for ContaminationLaw {
    type Err = RepairError;

    /// Parses `normal:MEAN,SD`, `const:VALUE` or `cauchy:LOC,SCALE`.
    fn from_str(s: &str) -> Result<Self> {
        let (tag, args) = s
            .split_once(':')
            .ok_or_else(|| RepairError::Parse(format!("contamination law {s:?}: expected TAG:ARGS")))?;
        let nums = args
            .split(',')
            .map(|a| a.trim().parse::<f64>())
            .collect::<std::result::Result<Vec<_>, _>>()
            .map_err(|e| RepairError::Parse(format!("contamination law {s:?}: {e}")))?;
        let law = match (tag.trim().to_ascii_lowercase().as_str(), nums.as_slice()) {
            ("normal" | "gaussian", [mean, sd]) => ContaminationLaw::Normal { mean: *mean, sd: *sd },
            ("const" | "constant", [value]) => ContaminationLaw::Constant { value: *value },
            ("cauchy", [location, scale]) => ContaminationLaw::Cauchy {
                location: *location,
                scale: *scale,
            },
            _ => return Err(RepairError::Parse(format!("unrecognised contamination law {s:?}"))),
        };
        law.validate()?;
        Ok(law)
    }
}

/// The epsilon-contamination channel: every coordinate is independently
/// shifted with probability `epsilon` by a draw from its law.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CorruptionModel {
    pub epsilon: f64,
    pub contamination: ContaminationLaw,
    /// Per-index laws that replace the shared one.
    #[serde(default, skip_serializing_if = "BTreeMap::is_empty")]
    pub overrides: BTreeMap<usize, ContaminationLaw>,
}

impl CorruptionModel {
    pub fn new(epsilon: f64, contamination: ContaminationLaw) -> Self {
        CorruptionModel {
            epsilon,
            contamination,
            overrides: BTreeMap::new(),
        }
    }

    pub fn with_override(mut self, index: usize, law: ContaminationLaw) -> Self {
        self.overrides.insert(index, law);
        self
    }

    pub fn law(&self, index: usize) -> &ContaminationLaw {
        self.overrides.get(&index).unwrap_or(&self.contamination)
    }

    pub fn validate(&self) -> Result<()> {
        if !(0.0..=1.0).contains(&self.epsilon) {
            return param_err(format!("epsilon {} outside [0, 1]", self.epsilon));
        }
        self.contamination.validate()?;
        self.overrides.values().try_for_each(ContaminationLaw::validate)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct CorruptionOutcome<F> {
    pub eta: Array1<F>,
    pub mask: Vec<bool>,
    pub noise: Array1<F>,
}

impl<F: Real> CorruptionOutcome<F> {
    pub fn corrupted_count(&self) -> usize {
        self.mask.iter().filter(|&&m| m).count()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GenMeta {
    pub seed: RngSeed,
    pub distribution: String,
    pub mean: f64,
    pub sd: f64,
}

/// Dense `n x p` design together with how it was generated.
#[derive(Debug, Clone, PartialEq)]
pub struct DesignMatrix<F> {
    pub entries: Array2<F>,
    pub meta: Option<GenMeta>,
}

impl<F: Real> DesignMatrix<F> {
    pub fn from_entries(entries: Array2<F>) -> Result<Self> {
        let (n, p) = entries.dim();
        if n == 0 || p == 0 {
            return dim_err(format!("design must be non-empty, got {n}x{p}"));
        }
        if entries.iter().any(|v| !v.is_finite()) {
            return param_err("design has non-finite entries");
        }
        Ok(DesignMatrix { entries, meta: None })
    }

    pub fn rows(&self) -> usize {
        self.entries.nrows()
    }

    pub fn cols(&self) -> usize {
        self.entries.ncols()
    }

    /// Rebuilds the matrix from its generation metadata.
    pub fn regenerate(&self) -> Option<Result<Self>> {
        let meta = self.meta.as_ref()?;
        Some(gaussian_matrix(self.rows(), self.cols(), meta.mean, meta.sd, meta.seed))
    }
}

/// `n x p` matrix with i.i.d. `N(mean, sd^2)` entries, filled row by row.
pub fn gaussian_matrix<F: Real>(n: usize, p: usize, mean: f64, sd: f64, seed: RngSeed) -> Result<DesignMatrix<F>> {
    if n == 0 || p == 0 {
        return dim_err(format!("design must be non-empty, got {n}x{p}"));
    }
    if !(sd > 0.0 && sd.is_finite() && mean.is_finite()) {
        return param_err(format!("need finite mean and sd > 0, got mean={mean} sd={sd}"));
    }
    let mut stream = seed.stream();
    let entries = Array2::from_shape_simple_fn((n, p), || F::lit(stream.normal(mean, sd)));
    Ok(DesignMatrix {
        entries,
        meta: Some(GenMeta {
            seed,
            distribution: "normal".into(),
            mean,
            sd,
        }),
    })
}

pub fn gaussian_vector<F: Real>(k: usize, mean: f64, sd: f64, seed: RngSeed) -> Result<Array1<F>> {
    if k == 0 {
        return dim_err("vector length must be at least 1");
    }
    if !(sd >= 0.0 && sd.is_finite() && mean.is_finite()) {
        return param_err(format!("need finite mean and sd >= 0, got mean={mean} sd={sd}"));
    }
    let mut stream = seed.stream();
    Ok(Array1::from_shape_simple_fn(k, || F::lit(stream.normal(mean, sd))))
}

/// Applies the contamination channel to `theta`.
///
/// Coordinates are visited in order; each consumes one uniform for the
/// corruption decision and, when corrupted, the draws of its law.
pub fn corrupt<F: Real>(theta: ArrayView1<'_, F>, model: &CorruptionModel, seed: RngSeed) -> Result<CorruptionOutcome<F>> {
    model.validate()?;
    if theta.iter().any(|v| !v.is_finite()) {
        return param_err("theta has non-finite entries");
    }
    let mut stream = seed.stream();
    let mut mask = Vec::with_capacity(theta.len());
    let mut noise = Array1::zeros(theta.len());
    for (j, z) in noise.iter_mut().enumerate() {
        let hit = stream.bernoulli(model.epsilon);
        if hit {
            *z = F::lit(model.law(j).sample(&mut stream));
        }
        mask.push(hit);
    }
    let eta = &theta + &noise;
    Ok(CorruptionOutcome { eta, mask, noise })
}

/// Corrupts every entry of a matrix, as one flattened row-major vector.
pub fn corrupt_matrix<F: Real>(
    theta: &Array2<F>,
    model: &CorruptionModel,
    seed: RngSeed,
) -> Result<(Array2<F>, Vec<bool>)> {
    let flat = Array1::from_iter(theta.iter().copied());
    let out = corrupt(flat.view(), model, seed)?;
    let eta = Array2::from_shape_vec(theta.raw_dim(), out.eta.to_vec())
        .map_err(|e| RepairError::Dimension(e.to_string()))?;
    Ok((eta, out.mask))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn seeds_parse_decimal_and_hex() {
        assert_eq!("42".parse::<RngSeed>().unwrap(), RngSeed(42));
        assert_eq!("0x2A".parse::<RngSeed>().unwrap(), RngSeed(42));
        assert!("zz".parse::<RngSeed>().is_err());
    }

    #[test]
    fn derive_separates_paths() {
        let s = RngSeed(1);
        assert_ne!(s.derive(&[0, 1]), s.derive(&[1, 0]));
        assert_eq!(s.derive(&[3]), s.derive(&[3]));
    }

    #[test]
    fn gaussian_matrix_is_deterministic() {
        let a = gaussian_matrix::<f64>(2, 3, 0.0, 1.0, RngSeed(7)).unwrap();
        let b = gaussian_matrix::<f64>(2, 3, 0.0, 1.0, RngSeed(7)).unwrap();
        assert_eq!(a.entries, b.entries);
        assert_eq!(a.regenerate().unwrap().unwrap().entries, a.entries);
    }

    #[test]
    fn gaussian_matrix_moments() {
        let m = gaussian_matrix::<f64>(1000, 1, 0.0, 1.0, RngSeed(11)).unwrap();
        let n = 1000.0;
        let mean = m.entries.sum() / n;
        let var = m.entries.mapv(|v| (v - mean).powi(2)).sum() / (n - 1.0);
        assert!(mean.abs() < 4.0 / n.sqrt(), "mean {mean}");
        assert!((var - 1.0).abs() < 0.2, "var {var}");
    }

    #[test]
    fn mean_shift_columns_concentrate() {
        let c = 1.5;
        let mu = c / 50f64.sqrt();
        let m = gaussian_matrix::<f64>(50, 500, mu, 1.0, RngSeed(5)).unwrap();
        let col_means = m.entries.mean_axis(ndarray::Axis(0)).unwrap();
        let grand = col_means.mean().unwrap();
        // grand mean has sd 1/sqrt(25000)
        assert!((grand - mu).abs() < 4.0 / 25000f64.sqrt(), "{grand} vs {mu}");
    }

    #[test]
    fn zero_dimension_rejected() {
        assert!(matches!(
            gaussian_matrix::<f64>(0, 3, 0.0, 1.0, RngSeed(1)),
            Err(RepairError::Dimension(_))
        ));
        assert!(gaussian_vector::<f64>(0, 0.0, 1.0, RngSeed(1)).is_err());
        assert!(gaussian_matrix::<f64>(2, 3, 0.0, 0.0, RngSeed(1)).is_err());
    }

    #[test]
    fn gaussian_vector_cases() {
        let z = gaussian_vector::<f64>(3, 0.0, 0.0, RngSeed(3)).unwrap();
        assert_eq!(z.to_vec(), vec![0.0, 0.0, 0.0]);
        let a = gaussian_vector::<f64>(5, 0.0, 1.0, RngSeed(3)).unwrap();
        assert_eq!(a, gaussian_vector::<f64>(5, 0.0, 1.0, RngSeed(3)).unwrap());
        let big = gaussian_vector::<f64>(10_000, 1.0, 1.0, RngSeed(9)).unwrap();
        assert!((big.mean().unwrap() - 1.0).abs() < 0.04);
    }

    #[test]
    fn epsilon_zero_is_identity() {
        let theta = Array1::from(vec![1.0, -2.0, 3.5]);
        let out = corrupt(theta.view(), &CorruptionModel::new(0.0, ContaminationLaw::default()), RngSeed(1)).unwrap();
        assert_eq!(out.eta, theta);
        assert!(out.mask.iter().all(|m| !m));
    }

    #[test]
    fn epsilon_one_point_mass() {
        let theta = Array1::from(vec![1.0, -2.0, 3.5]);
        let model = CorruptionModel::new(1.0, ContaminationLaw::Constant { value: 1.0 });
        let out = corrupt(theta.view(), &model, RngSeed(1)).unwrap();
        assert_eq!(out.eta, theta.mapv(|v| v + 1.0));
        assert!(out.mask.iter().all(|&m| m));
    }

    #[test]
    fn epsilon_out_of_range() {
        let theta = Array1::from(vec![1.0]);
        for eps in [-0.1, 1.5, f64::NAN] {
            let model = CorruptionModel::new(eps, ContaminationLaw::default());
            assert!(matches!(corrupt(theta.view(), &model, RngSeed(1)), Err(RepairError::Parameter(_))));
        }
    }

    /// Binomial(10000, 0.3) central 99.99% interval via the exact cdf.
    fn binomial_interval(n: u64, p: f64, mass: f64) -> (u64, u64) {
        let tail = (1.0 - mass) / 2.0;
        let ln_pmf = |k: u64| {
            let lg = |x: f64| ln_gamma(x);
            lg(n as f64 + 1.0) - lg(k as f64 + 1.0) - lg((n - k) as f64 + 1.0)
                + k as f64 * p.ln()
                + (n - k) as f64 * (1.0 - p).ln()
        };
        let mut cdf = 0.0;
        let mut lo = 0;
        let mut hi = n;
        let mut found_lo = false;
        for k in 0..=n {
            cdf += ln_pmf(k).exp();
            if !found_lo && cdf >= tail {
                lo = k;
                found_lo = true;
            }
            if cdf >= 1.0 - tail {
                hi = k;
                break;
            }
        }
        (lo, hi)
    }

    fn ln_gamma(x: f64) -> f64 {
        // Stirling series, accurate for x >= 1 to far below what the test needs.
        if x < 7.0 {
            return ln_gamma(x + 1.0) - x.ln();
        }
        let inv = 1.0 / x;
        (x - 0.5) * x.ln() - x + 0.5 * (2.0 * std::f64::consts::PI).ln() + inv / 12.0 - inv.powi(3) / 360.0
            + inv.powi(5) / 1260.0
    }

    #[test]
    fn corruption_count_in_binomial_interval() {
        let (lo, hi) = binomial_interval(10_000, 0.3, 0.9999);
        assert!(lo > 2700 && hi < 3300, "{lo} {hi}");
        let theta = Array1::<f64>::zeros(10_000);
        let model = CorruptionModel::new(0.3, ContaminationLaw::default());
        for s in 0..5 {
            let count = corrupt(theta.view(), &model, RngSeed(s)).unwrap().corrupted_count() as u64;
            assert!((lo..=hi).contains(&count), "{count} not in [{lo}, {hi}]");
        }
    }

    #[test]
    fn channel_frequency_per_coordinate() {
        let trials = 400;
        let eps = 0.3;
        let theta = Array1::<f64>::zeros(20);
        let model = CorruptionModel::new(eps, ContaminationLaw::default());
        let mut hits = [0usize; 20];
        for t in 0..trials {
            let out = corrupt(theta.view(), &model, RngSeed(100).derive(&[t])).unwrap();
            for (h, m) in hits.iter_mut().zip(&out.mask) {
                *h += *m as usize;
            }
        }
        let band = 3.0 * (eps * (1.0 - eps) / trials as f64).sqrt();
        let mean_freq = hits.iter().sum::<usize>() as f64 / (20 * trials) as f64;
        assert!((mean_freq - eps).abs() < band, "{mean_freq}");
    }

    #[test]
    fn noise_zero_off_mask_and_overrides_apply() {
        let theta = Array1::from(vec![0.5; 200]);
        let model = CorruptionModel::new(0.5, ContaminationLaw::default())
            .with_override(3, ContaminationLaw::Constant { value: 9.0 });
        let out = corrupt(theta.view(), &model, RngSeed(8)).unwrap();
        for j in 0..200 {
            assert_eq!(out.eta[j], theta[j] + out.noise[j]);
            if !out.mask[j] {
                assert_eq!(out.noise[j], 0.0);
            }
        }
        if out.mask[3] {
            assert_eq!(out.noise[3], 9.0);
        }
    }

    #[test]
    fn law_parsing() {
        assert_eq!(
            "normal:1,1".parse::<ContaminationLaw>().unwrap(),
            ContaminationLaw::Normal { mean: 1.0, sd: 1.0 }
        );
        assert_eq!(
            "const:-2".parse::<ContaminationLaw>().unwrap(),
            ContaminationLaw::Constant { value: -2.0 }
        );
        assert!("cauchy:0,0".parse::<ContaminationLaw>().is_err());
        assert!("normal:1".parse::<ContaminationLaw>().is_err());
        let law = ContaminationLaw::Cauchy { location: 0.5, scale: 2.0 };
        assert_eq!(law.to_string().parse::<ContaminationLaw>().unwrap(), law);
    }
}
