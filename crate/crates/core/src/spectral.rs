//! Spectral diagnostics for mixing operators.
//!
//! `σ₂` is the operator norm of `M` restricted to the detail subspace
//! `{x : 1ᵀx = 0}`, computed as the top singular value of `P⊥ M P⊥`. For a
//! doubly-stochastic `M` it coincides with the second singular value of `M`
//! itself; [`sigma2`] computes both and reports a mismatch.

use crate::dsm::{self, StochasticMatrix};
use crate::error::{Error, Result};
use crate::geometry;
use crate::linalg::{self, svd, DenseMatrix};
use crate::rng::TrialRng;

/// Disagreement above this between the two `σ₂` routes is an error.
pub const SIGMA2_MISMATCH_TOL: f64 = 1e-6;
/// Perron check tolerance on `|σ₁ - 1|`.
pub const PERRON_TOL: f64 = 1e-7;
pub const DEFAULT_TRANSIENT_DEPTH: usize = 50;
const ARGMAX_REL_TOL: f64 = 1e-12;

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Sigma2 {
    /// Top singular value of `P⊥ M P⊥`.
    pub restricted: f64,
    /// Second singular value of `M`.
    pub second: f64,
}

impl Sigma2 {
    pub fn gap(&self) -> f64 {
        (self.restricted - self.second).abs()
    }
}

pub fn sigma2(m: &StochasticMatrix) -> Result<f64> {
    Ok(sigma2_detailed(m)?.restricted)
}

pub fn sigma2_detailed(m: &StochasticMatrix) -> Result<Sigma2> {
    let restricted = restricted_norm(m.matrix())?;
    let second = svd(m.matrix(), false)?.sigma(1);
    let s = Sigma2 { restricted, second };
    if s.gap() > SIGMA2_MISMATCH_TOL {
        return Err(Error::SpectralMismatch { restricted, second });
    }
    Ok(s)
}

/// `‖P⊥ M P⊥‖₂` for any square matrix.
pub fn restricted_norm(m: &DenseMatrix) -> Result<f64> {
    linalg::spectral_norm(&m.restrict_to_detail()?)
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct PerronCheck {
    pub passed: bool,
    pub sigma1: f64,
}

pub fn perron_check(m: &DenseMatrix) -> Result<PerronCheck> {
    let sigma1 = linalg::spectral_norm(m)?;
    Ok(PerronCheck { passed: (sigma1 - 1.0).abs() <= PERRON_TOL, sigma1 })
}

/// `ln(1/ε) / (-ln σ₂)`: layers until detail content falls below `ε`.
/// Zero when `σ₂ = 0`, infinite when `σ₂ >= 1`.
pub fn effective_depth(sigma2: f64, eps: f64) -> Result<f64> {
    if !(eps > 0.0 && eps < 1.0) {
        return Err(Error::InvalidEpsilon(eps));
    }
    if !(sigma2 >= 0.0) {
        return Err(Error::InvalidParameter(format!("sigma2 must be nonnegative, got {sigma2}")));
    }
    if sigma2 == 0.0 {
        Ok(0.0)
    } else if sigma2 >= 1.0 {
        Ok(f64::INFINITY)
    } else {
        Ok((1.0 / eps).ln() / -sigma2.ln())
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct TransientProfile {
    /// `(k, ‖(P⊥ M P⊥)^k‖₂)` for `k = 1..=max_depth`.
    pub profile: Vec<(usize, f64)>,
    pub max: f64,
    /// First `k` attaining the maximum up to round-off.
    pub argmax: usize,
}

/// Norms of the restricted powers `(P⊥ M P⊥)^k`. For doubly-stochastic
/// input these equal `‖P⊥ M^k P⊥‖₂`; for general input the profile is of the
/// restricted operator's powers.
pub fn transient_growth(m: &DenseMatrix, max_depth: usize) -> Result<TransientProfile> {
    if max_depth == 0 {
        return Err(Error::InvalidParameter("max_depth must be at least 1".into()));
    }
    let b = m.restrict_to_detail()?;
    let mut power = b.clone();
    let mut profile = Vec::with_capacity(max_depth);
    for k in 1..=max_depth {
        if k > 1 {
            power = power.matmul(&b)?;
        }
        profile.push((k, linalg::spectral_norm(&power)?));
    }
    let max = profile.iter().map(|p| p.1).fold(f64::NEG_INFINITY, f64::max);
    let argmax = profile.iter().find(|p| p.1 >= max * (1.0 - ARGMAX_REL_TOL)).map_or(0, |p| p.0);
    Ok(TransientProfile { profile, max, argmax })
}

/// Max of `‖M x‖ / ‖x‖` over `trials` random unit directions in the detail
/// subspace.
pub fn contraction_check(m: &StochasticMatrix, trials: usize, rng: &mut TrialRng) -> Result<f64> {
    if trials == 0 {
        return Err(Error::InvalidParameter("trials must be at least 1".into()));
    }
    let n = m.n();
    if n < 2 {
        return Err(Error::InvalidDimension { n, reason: "detail subspace is empty for n < 2" });
    }
    let mut best: f64 = 0.0;
    for _ in 0..trials {
        let x = geometry::uniform_sphere_sample(n, rng)?;
        let mx = m.matrix().matvec(&x)?;
        best = best.max(linalg::norm2(&mx) / linalg::norm2(&x));
    }
    Ok(best)
}

#[derive(Clone, Debug, PartialEq)]
pub struct SpectralReport {
    pub seed: u64,
    pub temperature: f64,
    pub sigma1: f64,
    pub sigma2: f64,
    pub entropy: f64,
    /// Effective depth at `eps`; may be infinite.
    pub effective_depth: f64,
    pub eps: f64,
    pub transient_profile: Vec<(usize, f64)>,
    pub transient_max: f64,
    pub transient_argmax: usize,
}

impl SpectralReport {
    pub const CSV_HEADER: [&'static str; 8] =
        ["seed", "temperature", "sigma1", "sigma2", "entropy", "d_eff", "transient_max", "transient_argmax"];

    pub fn csv_fields(&self) -> Vec<String> {
        vec![
            self.seed.to_string(),
            dsm::fmt_f64(self.temperature),
            dsm::fmt_f64(self.sigma1),
            dsm::fmt_f64(self.sigma2),
            dsm::fmt_f64(self.entropy),
            dsm::fmt_f64(self.effective_depth),
            dsm::fmt_f64(self.transient_max),
            self.transient_argmax.to_string(),
        ]
    }
}

/// Full diagnostics for one operator. `transient_depth = 0` skips the
/// transient profile (reported as empty, max 0, argmax 0).
pub fn spectral_report(
    m: &StochasticMatrix,
    seed: u64,
    temperature: f64,
    eps: f64,
    transient_depth: usize,
) -> Result<SpectralReport> {
    let full = svd(m.matrix(), false)?;
    let sigma1 = full.sigma(0);
    let restricted = restricted_norm(m.matrix())?;
    let second = full.sigma(1);
    if (restricted - second).abs() > SIGMA2_MISMATCH_TOL {
        return Err(Error::SpectralMismatch { restricted, second });
    }
    let (transient_profile, transient_max, transient_argmax) = if transient_depth > 0 {
        let t = transient_growth(m.matrix(), transient_depth)?;
        (t.profile, t.max, t.argmax)
    } else {
        (Vec::new(), 0.0, 0)
    };
    Ok(SpectralReport {
        seed,
        temperature,
        sigma1,
        sigma2: restricted,
        entropy: dsm::entropy(m),
        effective_depth: effective_depth(restricted, eps)?,
        eps,
        transient_profile,
        transient_max,
        transient_argmax,
    })
}
