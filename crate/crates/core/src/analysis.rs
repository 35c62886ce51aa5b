//! Distortion and rate-gap bounds, plus Monte Carlo estimators behind them.
//!
//! The closed forms treat the exponential model with a real correlation
//! magnitude. The quantization-cell bound gives `delta`, the AGB distortion
//! bound is `N_t delta + xi sqrt(2 N_t delta)`, and the per-user rate gap of
//! zero-forcing follows from it. `xi` is the correlation coefficient between
//! `||h||^2` and the normalized quantization error and is only ever
//! estimated by simulation.

use std::f64::consts::PI;
use std::sync::Arc;

use rayon::prelude::*;

use crate::agb::{agb_encode_detailed, base_codebook, AgbContext, AgbError};
use crate::channel::{ChannelError, ChannelModel, UserSampler};
use crate::codebook::{CodebookError, Quantizer, RotatedCodebook};
use crate::mathkit::{dot, norm_sqr, ComplexMatrix, C64};
use crate::rng::stream;

#[derive(Debug, thiserror::Error)]
pub enum AnalysisError {
    #[error("invalid parameter: {0}")]
    InvalidParameter(String),
    #[error("rate-gap target cannot be met: {0}")]
    InvalidTarget(String),
    #[error("need at least {need} trials, got {got}")]
    TooFewTrials { need: usize, got: usize },
    #[error(transparent)]
    Channel(#[from] ChannelError),
    #[error(transparent)]
    Agb(#[from] AgbError),
    #[error(transparent)]
    Codebook(#[from] CodebookError),
}

/// Inputs shared by the closed-form bounds.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BoundParams {
    pub n_t: usize,
    pub n_g: usize,
    /// Total feedback bits (real so the bit formula can be inverted exactly).
    pub b: f64,
    pub b_p: f64,
    pub rho: f64,
    pub xi: f64,
    pub k_users: usize,
    /// Linear transmit power.
    pub p: f64,
    /// Allowed rate-gap factor; the gap target is `log2(beta)`.
    pub beta: f64,
}

/// Quantization-cell bound `(sigma2^2 / sigma1^2) 2^{-bits/(dim-1)}`.
pub fn qub_delta(sigma1: f64, sigma2: f64, bits: f64, dim: usize) -> Result<f64, AnalysisError> {
    if dim < 2 {
        return Err(AnalysisError::InvalidParameter(format!("dimension {dim} < 2")));
    }
    if !(sigma2 > 0.0 && sigma1 >= sigma2) {
        return Err(AnalysisError::InvalidParameter(format!("need sigma1 >= sigma2 > 0, got {sigma1}, {sigma2}")));
    }
    Ok((sigma2 / sigma1).powi(2) * (-bits / (dim - 1) as f64).exp2())
}

/// `N_t delta + xi sqrt(2 N_t delta)`.
pub fn distortion_bound(n_t: usize, delta: f64, xi: f64) -> f64 {
    let nd = n_t as f64 * delta;
    nd + xi * (2.0 * nd).sqrt()
}

/// Periodic approximation `(1 - rho^2) / (1 + rho^2 - 2 rho cos(2 pi i / N_t))`, `i = 1..=N_t`.
pub fn exp_model_singulars(rho: f64, n_t: usize) -> Vec<f64> {
    (1..=n_t)
        .map(|i| (1.0 - rho * rho) / (1.0 + rho * rho - 2.0 * rho * (2.0 * PI * i as f64 / n_t as f64).cos()))
        .collect()
}

/// `mu_{N_t - 1} / mu_{N_t}` of the approximation.
pub fn exp_singular_ratio(rho: f64, n_t: usize) -> f64 {
    let num = 1.0 + rho * rho - 2.0 * rho;
    let den = 1.0 + rho * rho - 2.0 * rho * (2.0 * PI * (n_t as f64 - 1.0) / n_t as f64).cos();
    num / den
}

fn exp_delta(params: &BoundParams) -> f64 {
    let ratio = exp_singular_ratio(params.rho, params.n_t);
    ratio * ratio * (-(params.b - params.b_p) / (params.n_g as f64 - 1.0)).exp2()
}

/// Distortion bound with `delta` from the exponential-model singular ratio.
pub fn distortion_bound_exp(params: &BoundParams) -> f64 {
    distortion_bound(params.n_t, exp_delta(params), params.xi)
}

/// `log2(1 + P (K-1)/K (N_t delta + xi sqrt(2 N_t delta)))`.
pub fn rate_gap_bound(params: &BoundParams, delta: f64) -> f64 {
    let k = params.k_users as f64;
    (1.0 + params.p * (k - 1.0) / k * distortion_bound(params.n_t, delta, params.xi)).log2()
}

/// Total bits for which the rate-gap bound equals `log2(beta)`.
///
/// With `y = sqrt(N_t delta)` the target reads `y^2 + sqrt(2) xi y = T`,
/// `T = (beta - 1) K / (P (K - 1))`; its positive root fixes `delta` and the
/// cell bound gives the bits.
pub fn required_bits(params: &BoundParams) -> Result<f64, AnalysisError> {
    if !(params.beta > 1.0) {
        return Err(AnalysisError::InvalidTarget(format!("beta = {} must exceed 1", params.beta)));
    }
    if params.k_users < 2 {
        return Err(AnalysisError::InvalidTarget("a single user has no interference gap".into()));
    }
    if !(params.p > 0.0) || params.n_g < 2 || params.xi < 0.0 {
        return Err(AnalysisError::InvalidParameter(format!("p = {}, n_g = {}, xi = {}", params.p, params.n_g, params.xi)));
    }
    let k = params.k_users as f64;
    let t = (params.beta - 1.0) * k / (params.p * (k - 1.0));
    let s2x = std::f64::consts::SQRT_2 * params.xi;
    let y = (-s2x + (s2x * s2x + 4.0 * t).sqrt()) / 2.0;
    let ratio = exp_singular_ratio(params.rho, params.n_t);
    if !(y > 0.0) || !(ratio > 0.0) {
        return Err(AnalysisError::InvalidTarget(format!("log argument ratio = {ratio}, y = {y}")));
    }
    let n_t = params.n_t as f64;
    Ok(params.b_p + (params.n_g as f64 - 1.0) * ((ratio * ratio).log2() - 2.0 * (y / n_t.sqrt()).log2()))
}

/// Sample mean with its standard error.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Estimate {
    pub mean: f64,
    pub stderr: f64,
    pub n: usize,
}

/// Sum in a fixed pairwise order, independent of how samples were produced.
pub fn pairwise_sum(x: &[f64]) -> f64 {
    if x.len() <= 32 {
        return x.iter().sum();
    }
    let (a, b) = x.split_at(x.len() / 2);
    pairwise_sum(a) + pairwise_sum(b)
}

pub fn mean_stderr(x: &[f64]) -> Estimate {
    let n = x.len();
    if n == 0 {
        return Estimate { mean: f64::NAN, stderr: f64::NAN, n };
    }
    let mean = pairwise_sum(x) / n as f64;
    if n < 2 {
        return Estimate { mean, stderr: 0.0, n };
    }
    let dev: Vec<f64> = x.iter().map(|v| (v - mean) * (v - mean)).collect();
    let var = pairwise_sum(&dev) / (n - 1) as f64;
    Estimate { mean, stderr: (var / n as f64).sqrt(), n }
}

/// Sample Pearson correlation; zero when either sample has no spread.
pub fn pearson(x: &[f64], y: &[f64]) -> f64 {
    assert_eq!(x.len(), y.len());
    let n = x.len() as f64;
    if x.len() < 2 {
        return 0.0;
    }
    let mx = pairwise_sum(x) / n;
    let my = pairwise_sum(y) / n;
    let cxy: Vec<f64> = x.iter().zip(y).map(|(a, b)| (a - mx) * (b - my)).collect();
    let cxx: Vec<f64> = x.iter().map(|a| (a - mx) * (a - mx)).collect();
    let cyy: Vec<f64> = y.iter().map(|b| (b - my) * (b - my)).collect();
    let (sxy, sxx, syy) = (pairwise_sum(&cxy), pairwise_sum(&cxx), pairwise_sum(&cyy));
    let scale = sxx.max(syy).max(f64::MIN_POSITIVE);
    if sxx <= 1e-24 * scale.max(1.0) || syy <= 1e-24 * scale.max(1.0) {
        return 0.0;
    }
    (sxy / (sxx.sqrt() * syy.sqrt())).clamp(-1.0, 1.0)
}

/// Monte Carlo summary of one quantizer's distortion.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DistortionStats {
    /// `E[||h||^2 (1 - |h̄^H ĥ|^2)] / N_t`.
    pub normalized: Estimate,
    pub xi: f64,
    pub mean_norm_sqr: f64,
}

const TAG_DISTORTION: u64 = 0x4449_5354;

/// Distortion statistics for any encoder mapping `h` to the alignment `|h̄^H ĥ|^2`.
pub fn distortion_stats<F>(
    sampler: &UserSampler,
    trials: usize,
    seed: u64,
    encode: F,
) -> Result<DistortionStats, AnalysisError>
where
    F: Fn(&[C64]) -> Result<f64, AnalysisError> + Sync,
{
    let n_t = sampler.n_t() as f64;
    let pairs: Vec<(f64, f64)> = (0..trials)
        .into_par_iter()
        .map(|t| {
            let mut rng = stream(seed, &[TAG_DISTORTION, t as u64]);
            let h = sampler.draw(&mut rng)?;
            let align = encode(&h)?;
            Ok((h.norm_sqr(), 1.0 - align))
        })
        .collect::<Result<_, AnalysisError>>()?;
    let norms: Vec<f64> = pairs.iter().map(|p| p.0).collect();
    let errs: Vec<f64> = pairs.iter().map(|p| p.1).collect();
    let dist: Vec<f64> = pairs.iter().map(|p| p.0 * p.1 / n_t).collect();
    Ok(DistortionStats {
        normalized: mean_stderr(&dist),
        xi: pearson(&norms, &errs),
        mean_norm_sqr: pairwise_sum(&norms) / trials.max(1) as f64,
    })
}

/// AGB distortion statistics for a context.
pub fn agb_distortion_stats(
    sampler: &UserSampler,
    ctx: &AgbContext,
    trials: usize,
    seed: u64,
) -> Result<DistortionStats, AnalysisError> {
    distortion_stats(sampler, trials, seed, |h| Ok(agb_encode_detailed(h, ctx)?.alignment))
}

/// Conventional full-dimension distortion statistics.
pub fn conventional_distortion_stats(
    sampler: &UserSampler,
    q: &dyn Quantizer,
    trials: usize,
    seed: u64,
) -> Result<DistortionStats, AnalysisError> {
    distortion_stats(sampler, trials, seed, |h| {
        let (i, _) = q.search(h);
        let c = q.codeword(i)?;
        Ok(dot(h, &c).norm_sqr() / (norm_sqr(h) * norm_sqr(&c)))
    })
}

pub const MIN_XI_TRIALS: usize = 1000;

/// Correlation between `||h||^2` and `1 - |h̄^H h̃|^2` through the AGB pipeline.
pub fn estimate_xi(sampler: &UserSampler, ctx: &AgbContext, trials: usize, seed: u64) -> Result<f64, AnalysisError> {
    if trials < MIN_XI_TRIALS {
        return Err(AnalysisError::TooFewTrials { need: MIN_XI_TRIALS, got: trials });
    }
    Ok(agb_distortion_stats(sampler, ctx, trials, seed)?.xi)
}

const TAG_APPENDIX: u64 = 0x4150_5841;

/// Mean of `Re((h̄_A^H ĥ_r)^* (h̄_B^H ĥ_r))` with `h̄_A` the odd-position
/// entries (taken as the reduced vector), `h̄_B` the even-position ones and
/// `ĥ_r` the statistic-codebook quantization of `h̄_A` under the user's `R_A`.
pub fn appendix_a_residual(
    model: &ChannelModel,
    n_t: usize,
    bits: u32,
    trials: usize,
    seed: u64,
) -> Result<Estimate, AnalysisError> {
    if n_t < 4 || n_t % 2 != 0 {
        return Err(AnalysisError::InvalidParameter(format!("n_t = {n_t} must be even and at least 4")));
    }
    if trials < 2 {
        return Err(AnalysisError::TooFewTrials { need: 2, got: trials });
    }
    let sampler = UserSampler::new(model, n_t)?;
    let half = n_t / 2;
    let a_idx: Vec<usize> = (0..n_t).step_by(2).collect();
    let base = base_codebook(half, bits, seed, TAG_APPENDIX)?;
    let common_cb = match model.phase() {
        crate::channel::PhaseMode::Fixed(_) => {
            Some(RotatedCodebook::new(&model.common_correlation(n_t)?.submatrix(&a_idx), base.clone())?)
        }
        crate::channel::PhaseMode::Uniform => None,
    };
    let samples: Vec<f64> = (0..trials)
        .into_par_iter()
        .map(|t| {
            let mut rng = stream(seed, &[TAG_APPENDIX, t as u64]);
            let (h, cb) = match &common_cb {
                Some(_) => (sampler.draw(&mut rng)?, None),
                None => {
                    let r = model.draw_correlation(n_t, &mut rng)?;
                    let s = crate::mathkit::hermitian_sqrt(&r).map_err(ChannelError::from)?;
                    let h = crate::channel::correlated_draw(&s, &mut rng);
                    let cb = RotatedCodebook::new(&r.submatrix(&a_idx), Arc::clone(&base))?;
                    (h, Some(cb))
                }
            };
            let cb = cb.as_ref().or(common_cb.as_ref()).expect("one codebook");
            let n = h.norm();
            let ha: Vec<C64> = (0..half).map(|i| h[2 * i] / n).collect();
            let hb: Vec<C64> = (0..half).map(|i| h[2 * i + 1] / n).collect();
            let c = cb.codeword(cb.search(&ha).0)?;
            Ok((dot(&ha, &c).conj() * dot(&hb, &c)).re)
        })
        .collect::<Result<_, AnalysisError>>()?;
    Ok(mean_stderr(&samples))
}

/// Singular values of a Hermitian PSD matrix, descending.
pub fn singular_values(r: &ComplexMatrix) -> Result<Vec<f64>, AnalysisError> {
    crate::mathkit::hermitian_eigen(r)
        .map(|e| e.values)
        .map_err(|e| AnalysisError::Channel(ChannelError::Math(e)))
}
