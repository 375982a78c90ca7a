//! Detail-subspace geometry: noise sampling, Layer Normalization as a
//! projection onto the sphere of radius `√n` in `{1ᵀx = 0}`, spectral SNR,
//! and the normalized-perturbation inequality.

use crate::error::{Error, Result};
use crate::linalg::{self, dot, norm2, project_detail};
use crate::rng::TrialRng;

/// Relative threshold below which `‖P⊥ y‖` counts as zero.
pub const DEGENERACY_REL: f64 = 1e-12;
/// Low-SNR threshold of the orthogonal-collapse bound.
pub const LOW_SNR_GAMMA: f64 = 0.125;
const SPHERE_RESAMPLES: usize = 8;

/// Isotropic Gaussian noise `N(0, (ν²/n) I_n)`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct NoiseModel {
    n: usize,
    nu: f64,
}

impl NoiseModel {
    pub fn new(n: usize, nu: f64) -> Result<Self> {
        if n < 2 {
            return Err(Error::InvalidDimension { n, reason: "noise model needs n >= 2" });
        }
        if !(nu >= 0.0) || !nu.is_finite() {
            return Err(Error::InvalidParameter(format!("noise scale must be finite and >= 0, got {nu}")));
        }
        Ok(NoiseModel { n, nu })
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn nu(&self) -> f64 {
        self.nu
    }

    /// Per-coordinate standard deviation `ν/√n`.
    pub fn coordinate_std(&self) -> f64 {
        self.nu / (self.n as f64).sqrt()
    }

    /// Exact `E‖P⊥ ξ‖₂ = ν √((n-1)/n)`.
    pub fn expected_detail_norm(&self) -> f64 {
        self.nu * ((self.n as f64 - 1.0) / self.n as f64).sqrt()
    }
}

/// A feature vector with its detail-subspace norm cached.
#[derive(Clone, Debug, PartialEq)]
pub struct FeatureVector {
    values: Vec<f64>,
    detail_norm: f64,
}

impl FeatureVector {
    pub fn new(values: Vec<f64>) -> Self {
        assert!(!values.is_empty(), "feature vector must be non-empty");
        let detail_norm = norm2(&project_detail(&values));
        FeatureVector { values, detail_norm }
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn into_values(self) -> Vec<f64> {
        self.values
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn detail_norm(&self) -> f64 {
        self.detail_norm
    }

    pub fn detail(&self) -> Vec<f64> {
        project_detail(&self.values)
    }

    pub fn norm(&self) -> f64 {
        norm2(&self.values)
    }
}

pub fn sample_noise(model: &NoiseModel, rng: &mut TrialRng) -> FeatureVector {
    FeatureVector::new(rng.gaussian_vec(model.n, model.coordinate_std()))
}

/// `LN(y) = √n P⊥y / ‖P⊥y‖₂`.
pub fn layer_norm(y: &FeatureVector) -> Result<FeatureVector> {
    let n = y.len();
    let max_abs = y.values.iter().fold(0.0f64, |m, v| m.max(v.abs()));
    if y.detail_norm <= DEGENERACY_REL * (n as f64).sqrt() * max_abs || y.detail_norm == 0.0 {
        return Err(Error::DegenerateInput);
    }
    let scale = (n as f64).sqrt() / y.detail_norm;
    Ok(FeatureVector::new(y.detail().into_iter().map(|v| v * scale).collect()))
}

/// Elementwise gain of an affine Layer Norm.
#[derive(Clone, Debug, PartialEq)]
pub enum Gain {
    Scalar(f64),
    Vector(Vec<f64>),
}

/// `γ ⊙ LN(y) + β`.
pub fn layer_norm_affine(y: &FeatureVector, gain: &Gain, beta: &[f64]) -> Result<FeatureVector> {
    let n = y.len();
    if beta.len() != n {
        return Err(Error::DimensionMismatch { expected: n, found: beta.len() });
    }
    let ln = layer_norm(y)?;
    let values = match gain {
        Gain::Scalar(g) => ln.values.iter().zip(beta).map(|(v, b)| g * v + b).collect(),
        Gain::Vector(g) => {
            if g.len() != n {
                return Err(Error::DimensionMismatch { expected: n, found: g.len() });
            }
            ln.values.iter().zip(g).zip(beta).map(|((v, g), b)| g * v + b).collect()
        }
    };
    Ok(FeatureVector::new(values))
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct NormalizedGap {
    /// `‖a/‖a‖ - b/‖b‖‖₂`
    pub gap: f64,
    /// `4 ‖a - b‖ / ‖b‖`
    pub bound: f64,
    /// `‖a - b‖ <= ‖b‖ / 2`
    pub precondition_met: bool,
}

impl NormalizedGap {
    pub fn holds(&self) -> bool {
        !self.precondition_met || self.gap <= self.bound
    }
}

pub fn normalized_gap(a: &[f64], b: &[f64]) -> Result<NormalizedGap> {
    if a.len() != b.len() {
        return Err(Error::DimensionMismatch { expected: b.len(), found: a.len() });
    }
    let na = norm2(a);
    let nb = norm2(b);
    if na == 0.0 || nb == 0.0 {
        return Err(Error::ZeroVector);
    }
    let gap = a.iter().zip(b).map(|(x, y)| (x / na - y / nb).powi(2)).sum::<f64>().sqrt();
    let delta = a.iter().zip(b).map(|(x, y)| (x - y).powi(2)).sum::<f64>().sqrt();
    Ok(NormalizedGap { gap, bound: 4.0 * delta / nb, precondition_met: delta <= 0.5 * nb })
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Snr {
    pub gamma: f64,
    pub low_snr: bool,
}

/// `γ = σ₂ ‖x⊥‖ / ν`.
pub fn snr(sigma2: f64, x: &FeatureVector, model: &NoiseModel) -> Result<Snr> {
    if model.nu == 0.0 {
        return Err(Error::ZeroNoise);
    }
    let gamma = sigma2 * x.detail_norm / model.nu;
    Ok(Snr { gamma, low_snr: gamma <= LOW_SNR_GAMMA })
}

/// `⟨u, v⟩ / (‖u‖ ‖v‖)`, clamped to `[-1, 1]`.
pub fn cosine(u: &[f64], v: &[f64]) -> Result<f64> {
    if u.len() != v.len() {
        return Err(Error::DimensionMismatch { expected: u.len(), found: v.len() });
    }
    let nu = norm2(u);
    let nv = norm2(v);
    if nu == 0.0 || nv == 0.0 {
        return Err(Error::ZeroVector);
    }
    Ok((dot(u, v) / (nu * nv)).clamp(-1.0, 1.0))
}

/// Uniform unit vector on the sphere of the detail subspace of `R^n`.
pub fn uniform_sphere_sample(n: usize, rng: &mut TrialRng) -> Result<Vec<f64>> {
    if n < 2 {
        return Err(Error::InvalidDimension { n, reason: "detail subspace is empty for n < 2" });
    }
    for _ in 0..SPHERE_RESAMPLES {
        let g = project_detail(&rng.gaussian_vec(n, 1.0));
        let nrm = norm2(&g);
        if nrm > 0.0 {
            return Ok(g.into_iter().map(|v| v / nrm).collect());
        }
    }
    Err(Error::ResampleExhausted { attempts: SPHERE_RESAMPLES })
}

/// Unit vector in the detail subspace orthogonal to the unit vector `x`.
pub fn orthogonal_detail_direction(x: &[f64], rng: &mut TrialRng) -> Result<Vec<f64>> {
    for _ in 0..SPHERE_RESAMPLES {
        let mut w = uniform_sphere_sample(x.len(), rng)?;
        let c = dot(&w, x) / dot(x, x);
        w.iter_mut().zip(x).for_each(|(wi, xi)| *wi -= c * xi);
        let w = project_detail(&w);
        let nrm = norm2(&w);
        if nrm > 1e-8 {
            return Ok(w.into_iter().map(|v| v / nrm).collect());
        }
    }
    Err(Error::ResampleExhausted { attempts: SPHERE_RESAMPLES })
}

/// `c x + √(1-c²) w` with `w ⊥ x` in the detail subspace; for unit `x` the
/// result is a unit vector at cosine `c` from `x`.
pub fn correlated_partner(x: &[f64], cosine: f64, rng: &mut TrialRng) -> Result<Vec<f64>> {
    if !(-1.0..=1.0).contains(&cosine) {
        return Err(Error::InvalidParameter(format!("cosine must lie in [-1, 1], got {cosine}")));
    }
    let w = orthogonal_detail_direction(x, rng)?;
    let s = (1.0 - cosine * cosine).sqrt();
    let xn = linalg::norm2(x);
    Ok(x.iter().zip(&w).map(|(xi, wi)| cosine * xi + s * xn * wi).collect())
}
