//! Transmit correlation models and correlated channel generation.
//!
//! Two spatial models are provided: the exponential (Toeplitz) model of a
//! uniform linear array, and the uniform planar array model built as the
//! Kronecker product of a vertical and a horizontal one-ring correlation.
//! Channel draws are `h = R^{1/2} g` with `g ~ CN(0, I)`; temporal evolution
//! follows a first-order Gauss-Markov recursion.

use std::f64::consts::PI;

use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::mathkit::{
    hermitian_sqrt, integrate_1d, bessel_j0, ComplexMatrix, ComplexVector, MathError, C64,
};

pub const SPEED_OF_LIGHT: f64 = 3.0e8;
/// Gauss-Legendre nodes used for the one-ring integrals.
pub const UPA_QUAD_NODES: usize = 64;
/// Static channel uses per fading block.
pub const DEFAULT_BLOCK_LEN: usize = 10;

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum ChannelError {
    #[error("correlation magnitude must lie in [0, 1), got {0}")]
    InvalidAlpha(f64),
    #[error("temporal coefficient must lie in [0, 1], got {0}")]
    InvalidEta(f64),
    #[error("estimation error variance must be non-negative, got {0}")]
    InvalidVariance(f64),
    #[error("invalid UPA geometry: {0}")]
    InvalidGeometry(String),
    #[error(transparent)]
    Math(#[from] MathError),
}

/// Parameters of the exponential correlation model, `rho = alpha e^{j theta}`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ExponentialSpec {
    pub n_t: usize,
    pub alpha: f64,
    pub theta: f64,
}

impl ExponentialSpec {
    pub fn new(n_t: usize, alpha: f64, theta: f64) -> Result<Self, ChannelError> {
        let s = Self { n_t, alpha, theta };
        s.validate()?;
        Ok(s)
    }

    pub fn validate(&self) -> Result<(), ChannelError> {
        if !(0.0..1.0).contains(&self.alpha) {
            return Err(ChannelError::InvalidAlpha(self.alpha));
        }
        Ok(())
    }

    pub fn rho(&self) -> C64 {
        C64::from_polar(self.alpha, self.theta)
    }
}

/// `r_ij = rho^{j-i}` on and above the diagonal, conjugate below.
pub fn exponential_correlation(spec: &ExponentialSpec) -> ComplexMatrix {
    let rho = spec.rho();
    let n = spec.n_t;
    let mut powers = Vec::with_capacity(n);
    let mut p = C64::new(1.0, 0.0);
    for _ in 0..n {
        powers.push(p);
        p *= rho;
    }
    // exact ones on the diagonal
    ComplexMatrix::from_fn(n, n, |i, j| {
        if i <= j {
            powers[j - i]
        } else {
            powers[i - j].conj()
        }
    })
}

/// Uniform planar array geometry (one-ring scattering around the user).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct UpaSpec {
    pub n_v: usize,
    pub n_h: usize,
    /// Element spacing in wavelengths.
    pub spacing: f64,
    pub pathloss_exp: f64,
    /// Elevation of the transmit array, meters.
    pub elevation: f64,
    /// Radius of the scattering ring, meters.
    pub scatter_radius: f64,
    /// Distance to the user, meters.
    pub distance: f64,
}

impl Default for UpaSpec {
    fn default() -> Self {
        Self {
            n_v: 4,
            n_h: 4,
            spacing: 0.5,
            pathloss_exp: 3.0,
            elevation: 60.0,
            scatter_radius: 30.0,
            distance: 50.0,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Axis {
    Horizontal,
    Vertical,
}

impl UpaSpec {
    pub fn n_t(&self) -> usize {
        self.n_v * self.n_h
    }

    pub fn validate(&self) -> Result<(), ChannelError> {
        let geo = [self.spacing, self.pathloss_exp, self.elevation, self.scatter_radius, self.distance];
        if self.n_v == 0 || self.n_h == 0 {
            return Err(ChannelError::InvalidGeometry("axis sizes must be positive".into()));
        }
        if geo.iter().any(|&g| !(g > 0.0) || !g.is_finite()) {
            return Err(ChannelError::InvalidGeometry("all geometry values must be positive".into()));
        }
        Ok(())
    }

    /// Path-loss factor `(1 + (s/r)^a)^{-1}`.
    pub fn gamma(&self) -> f64 {
        1.0 / (1.0 + (self.distance / self.scatter_radius).powf(self.pathloss_exp))
    }

    pub fn vertical_spread(&self) -> f64 {
        let (s, r, u) = (self.distance, self.scatter_radius, self.elevation);
        0.5 * (((s + r) / u).atan() - ((s - r) / u).atan())
    }

    pub fn vertical_aoa(&self) -> f64 {
        let (s, r, u) = (self.distance, self.scatter_radius, self.elevation);
        0.5 * (((s + r) / u).atan() + ((s - r) / u).atan())
    }

    pub fn horizontal_spread(&self) -> f64 {
        (self.scatter_radius / self.distance).atan()
    }

    /// `(phi, delta, n)` of one axis; the horizontal angle of arrival is per user.
    pub fn axis_geometry(&self, axis: Axis, phi_h: f64) -> (f64, f64, usize) {
        match axis {
            Axis::Vertical => (self.vertical_aoa(), self.vertical_spread(), self.n_v),
            Axis::Horizontal => (phi_h, self.horizontal_spread(), self.n_h),
        }
    }
}

/// One-ring correlation of an `n`-element axis:
/// `gamma/(2 delta) ∫_{phi-delta}^{phi+delta} exp(-j 2 pi D (m-p) sin a) da`.
pub fn upa_axis_correlation(
    spec: &UpaSpec,
    phi: f64,
    delta: f64,
    n: usize,
) -> Result<ComplexMatrix, ChannelError> {
    if !(delta > 0.0) {
        return Err(ChannelError::InvalidGeometry(format!("angular spread must be positive, got {delta}")));
    }
    let gamma = spec.gamma();
    let d = spec.spacing;
    // entries depend on m - p only; integrate each lag once
    let mut lags = Vec::with_capacity(n);
    for lag in 0..n {
        let k = lag as f64;
        let v = integrate_1d(
            |a| C64::from_polar(1.0, -2.0 * PI * d * k * a.sin()),
            phi - delta,
            phi + delta,
            UPA_QUAD_NODES,
        )?;
        lags.push(v * (gamma / (2.0 * delta)));
    }
    lags[0] = C64::new(lags[0].re, 0.0);
    Ok(ComplexMatrix::from_fn(n, n, |m, p| {
        if m >= p {
            lags[m - p]
        } else {
            lags[p - m].conj()
        }
    }))
}

/// `R_V ⊗ R_H` for a user at horizontal angle of arrival `phi_h_k`.
pub fn upa_correlation(spec: &UpaSpec, phi_h_k: f64) -> Result<ComplexMatrix, ChannelError> {
    spec.validate()?;
    let (pv, dv, nv) = spec.axis_geometry(Axis::Vertical, phi_h_k);
    let (ph, dh, nh) = spec.axis_geometry(Axis::Horizontal, phi_h_k);
    let rv = upa_axis_correlation(spec, pv, dv, nv)?;
    let rh = upa_axis_correlation(spec, ph, dh, nh)?;
    Ok(rv.kron(&rh))
}

/// Jakes' temporal correlation `J0(2 pi f_D tau)` with `f_D = v f_c / c`.
pub fn jakes_eta(speed: f64, carrier_hz: f64, tau: f64) -> f64 {
    let doppler = speed * carrier_hz / SPEED_OF_LIGHT;
    bessel_j0(2.0 * PI * doppler * tau)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TemporalSpec {
    pub eta: f64,
    pub blocks: usize,
}

impl TemporalSpec {
    pub fn validate(&self) -> Result<(), ChannelError> {
        if !(0.0..=1.0).contains(&self.eta) {
            return Err(ChannelError::InvalidEta(self.eta));
        }
        Ok(())
    }
}

/// Circular complex Gaussian with unit variance (1/2 per real dimension).
#[inline]
pub fn complex_gaussian<R: Rng + ?Sized>(rng: &mut R) -> C64 {
    let re: f64 = rng.sample(StandardNormal);
    let im: f64 = rng.sample(StandardNormal);
    C64::new(re, im) * std::f64::consts::FRAC_1_SQRT_2
}

pub fn complex_gaussian_vector<R: Rng + ?Sized>(rng: &mut R, n: usize) -> ComplexVector {
    ComplexVector((0..n).map(|_| complex_gaussian(rng)).collect())
}

/// One draw `R^{1/2} g` given a precomputed square root.
pub fn correlated_draw<R: Rng + ?Sized>(sqrt_r: &ComplexMatrix, rng: &mut R) -> ComplexVector {
    let g = complex_gaussian_vector(rng, sqrt_r.cols());
    sqrt_r.mul_vec(&g).expect("square root is square")
}

/// `L` blocks of `h_0 = R^{1/2} g_0`, `h_l = eta h_{l-1} + sqrt(1-eta^2) R^{1/2} g_l`.
pub fn gauss_markov_sequence<R: Rng + ?Sized>(
    r: &ComplexMatrix,
    eta: f64,
    blocks: usize,
    rng: &mut R,
) -> Result<Vec<ComplexVector>, ChannelError> {
    if !(0.0..=1.0).contains(&eta) {
        return Err(ChannelError::InvalidEta(eta));
    }
    let s = hermitian_sqrt(r)?;
    Ok(gauss_markov_from_sqrt(&s, eta, blocks, rng))
}

pub fn gauss_markov_from_sqrt<R: Rng + ?Sized>(
    sqrt_r: &ComplexMatrix,
    eta: f64,
    blocks: usize,
    rng: &mut R,
) -> Vec<ComplexVector> {
    let mut out: Vec<ComplexVector> = Vec::with_capacity(blocks);
    let innov = (1.0 - eta * eta).max(0.0).sqrt();
    for l in 0..blocks {
        let h = if l == 0 {
            correlated_draw(sqrt_r, rng)
        } else {
            let fresh = correlated_draw(sqrt_r, rng);
            let prev = &out[l - 1];
            ComplexVector(prev.iter().zip(fresh.iter()).map(|(&p, &f)| p * eta + f * innov).collect())
        };
        out.push(h);
    }
    out
}

/// `h + e` with `e` i.i.d. `CN(0, sigma2)`.
pub fn add_estimation_error<R: Rng + ?Sized>(
    h: &ComplexVector,
    sigma2: f64,
    rng: &mut R,
) -> Result<ComplexVector, ChannelError> {
    if !(sigma2 >= 0.0) {
        return Err(ChannelError::InvalidVariance(sigma2));
    }
    if sigma2 == 0.0 {
        return Ok(h.clone());
    }
    let sd = sigma2.sqrt();
    Ok(ComplexVector(h.iter().map(|&x| x + complex_gaussian(rng) * sd).collect()))
}

/// Per-user, per-block channel vectors.
#[derive(Debug, Clone, PartialEq)]
pub struct ChannelRealization {
    pub users: Vec<Vec<ComplexVector>>,
}

impl ChannelRealization {
    pub fn n_users(&self) -> usize {
        self.users.len()
    }

    pub fn blocks(&self) -> usize {
        self.users.first().map_or(0, |u| u.len())
    }

    pub fn block(&self, user: usize, block: usize) -> &ComplexVector {
        &self.users[user][block]
    }
}

/// How a user's correlation phase (exponential) or horizontal angle (UPA) is drawn.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize, Default)]
#[serde(rename_all = "lowercase", tag = "kind", content = "value")]
pub enum PhaseMode {
    /// Uniform in (-pi, pi], independently per user and trial.
    #[default]
    Uniform,
    Fixed(f64),
}

impl PhaseMode {
    pub fn draw<R: Rng + ?Sized>(&self, rng: &mut R) -> f64 {
        match *self {
            PhaseMode::Uniform => PI - 2.0 * PI * rng.gen::<f64>(),
            PhaseMode::Fixed(v) => v,
        }
    }
}

/// A spatial model from which per-user correlation matrices are drawn.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase", tag = "type")]
pub enum ChannelModel {
    Exponential {
        alpha: f64,
        #[serde(default)]
        phase: PhaseMode,
    },
    Upa {
        #[serde(flatten)]
        spec: UpaSpec,
        #[serde(default)]
        phase: PhaseMode,
    },
}

impl ChannelModel {
    pub fn exponential(alpha: f64, phase: PhaseMode) -> Self {
        Self::Exponential { alpha, phase }
    }

    pub fn validate(&self, n_t: usize) -> Result<(), ChannelError> {
        match self {
            Self::Exponential { alpha, .. } => ExponentialSpec { n_t, alpha: *alpha, theta: 0.0 }.validate(),
            Self::Upa { spec, .. } => {
                spec.validate()?;
                if spec.n_t() != n_t {
                    return Err(ChannelError::InvalidGeometry(format!(
                        "n_v * n_h = {} but n_t = {n_t}",
                        spec.n_t()
                    )));
                }
                Ok(())
            }
        }
    }

    /// Array shape `(rows, cols)` used for sub-array partitioning.
    pub fn array_shape(&self, n_t: usize) -> (usize, usize) {
        match self {
            Self::Exponential { .. } => (n_t, 1),
            Self::Upa { spec, .. } => (spec.n_v, spec.n_h),
        }
    }

    /// Whether every user shares one correlation matrix.
    pub fn is_common(&self) -> bool {
        matches!(self.phase(), PhaseMode::Fixed(_))
    }

    pub fn phase(&self) -> PhaseMode {
        match self {
            Self::Exponential { phase, .. } | Self::Upa { phase, .. } => *phase,
        }
    }

    /// Correlation for a given phase / horizontal angle of arrival.
    pub fn correlation_at(&self, n_t: usize, phase: f64) -> Result<ComplexMatrix, ChannelError> {
        match self {
            Self::Exponential { alpha, .. } => {
                Ok(exponential_correlation(&ExponentialSpec::new(n_t, *alpha, phase)?))
            }
            Self::Upa { spec, .. } => upa_correlation(spec, phase),
        }
    }

    /// Phase-free correlation shared by the base station and all users for pattern design.
    pub fn common_correlation(&self, n_t: usize) -> Result<ComplexMatrix, ChannelError> {
        let phase = match self.phase() {
            PhaseMode::Fixed(v) => v,
            PhaseMode::Uniform => 0.0,
        };
        self.correlation_at(n_t, phase)
    }

    pub fn draw_correlation<R: Rng + ?Sized>(
        &self,
        n_t: usize,
        rng: &mut R,
    ) -> Result<ComplexMatrix, ChannelError> {
        let phase = self.phase().draw(rng);
        self.correlation_at(n_t, phase)
    }

    /// Short stable description used in cache keys.
    pub fn key(&self) -> String {
        serde_json::to_string(self).unwrap_or_default()
    }
}

/// Draws user channels from a model, reusing the square root when it is shared.
#[derive(Debug, Clone)]
pub struct UserSampler {
    model: ChannelModel,
    n_t: usize,
    common_sqrt: Option<ComplexMatrix>,
}

impl UserSampler {
    pub fn new(model: &ChannelModel, n_t: usize) -> Result<Self, ChannelError> {
        model.validate(n_t)?;
        let common_sqrt = match model.phase() {
            PhaseMode::Fixed(_) => Some(hermitian_sqrt(&model.common_correlation(n_t)?)?),
            PhaseMode::Uniform => None,
        };
        Ok(Self { model: model.clone(), n_t, common_sqrt })
    }

    pub fn n_t(&self) -> usize {
        self.n_t
    }

    pub fn model(&self) -> &ChannelModel {
        &self.model
    }

    /// Square root of one user's correlation (fresh phase when not shared).
    pub fn draw_sqrt<R: Rng + ?Sized>(&self, rng: &mut R) -> Result<ComplexMatrix, ChannelError> {
        match &self.common_sqrt {
            Some(s) => Ok(s.clone()),
            None => Ok(hermitian_sqrt(&self.model.draw_correlation(self.n_t, rng)?)?),
        }
    }

    pub fn draw<R: Rng + ?Sized>(&self, rng: &mut R) -> Result<ComplexVector, ChannelError> {
        match &self.common_sqrt {
            Some(s) => Ok(correlated_draw(s, rng)),
            None => {
                let s = self.draw_sqrt(rng)?;
                Ok(correlated_draw(&s, rng))
            }
        }
    }
}
