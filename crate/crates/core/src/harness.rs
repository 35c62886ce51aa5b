//! Scenario configuration, the registry of desk-scale experiments, the Monte
//! Carlo runner and CSV output.
//!
//! Trial `t` at grid index `i` draws its users from the stream
//! `(seed, scenario, i, t, attempt)`. Every method at a grid point therefore
//! sees the same channels, except when a method has to redraw because
//! zero-forcing hit a rank-deficient quantized channel; those redraws bump
//! `attempt` and are counted as discards.

use std::collections::HashSet;
use std::fmt;
use std::path::Path;
use std::str::FromStr;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::agb::{
    adjacent_pattern_set, agb_decode, agb_encode, build_context, build_context_with, conventional_decode,
    conventional_encode, conventional_quantizer, subarray_blocks, AgbContext, AgbError, ContextSpec, PatternSelection,
};
use crate::analysis::{mean_stderr, required_bits, AnalysisError, BoundParams};
use crate::channel::{add_estimation_error, correlated_draw, ChannelError, ChannelModel, PhaseMode, UpaSpec};
use crate::codebook::{Quantizer, FLAT_BITS_CAP};
use crate::mathkit::{dot, hermitian_sqrt, norm_sqr, ComplexMatrix, ComplexVector};
use crate::patterns::{pattern_count, ENUMERATION_CAP};
use crate::precoder::{channel_matrix, perfect_csit_rate, sum_rate, zfbf, PrecoderError};
use crate::rng::{fnv1a, stream};

pub const CSV_HEADER: &str = "scenario,x,method,mean_rate,stderr,trials,seed";
pub const DEFAULT_TRIALS: usize = 2000;
/// Redraws allowed for one trial before the run is abandoned.
pub const MAX_ATTEMPTS: u64 = 64;

const TAG_TRIAL: u64 = 0x5452_4941;
const TAG_REDUCED: u64 = 0x5245_4455;

#[derive(Debug, thiserror::Error)]
pub enum HarnessError {
    #[error("invalid config: {field}: {message}")]
    ConfigInvalid { field: String, message: String },
    #[error("unknown scenario {0:?}")]
    UnknownScenario(String),
    #[error("trial {trial} stayed rank deficient after {attempts} draws")]
    TooManyDiscards { trial: usize, attempts: u64 },
    #[error("malformed csv: {0}")]
    Csv(String),
    #[error(transparent)]
    Agb(#[from] AgbError),
    #[error(transparent)]
    Channel(#[from] ChannelError),
    #[error(transparent)]
    Analysis(#[from] AnalysisError),
    #[error(transparent)]
    Precoder(#[from] PrecoderError),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

fn invalid(field: &str, message: impl Into<String>) -> HarnessError {
    HarnessError::ConfigInvalid { field: field.into(), message: message.into() }
}

/// The swept quantity of a scenario.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum XAxis {
    SnrDb,
    /// Correlation magnitude of the exponential model.
    Alpha,
    /// Header bits; the payload `b_total - b_p` of the base config is kept.
    PatternBits,
    /// Total bits with the header fixed.
    TotalBits,
    /// Estimation-error variance.
    ErrorVar,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Method {
    /// Packed pattern set.
    Agb,
    AgbRandom,
    /// Only the neighbour-grouping pattern; every bit goes to the payload.
    AgbAdjacent,
    Conventional,
    /// A separate array with `N_g` antennas and the full budget.
    ReducedAntenna,
    /// One antenna per adjacent group, quantized at dimension `N_g`.
    AntennaSelection,
    PerfectCsit,
}

impl Method {
    pub const ALL: [Method; 7] = [
        Method::Agb,
        Method::AgbRandom,
        Method::AgbAdjacent,
        Method::Conventional,
        Method::ReducedAntenna,
        Method::AntennaSelection,
        Method::PerfectCsit,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Method::Agb => "agb",
            Method::AgbRandom => "agb_random",
            Method::AgbAdjacent => "agb_adjacent",
            Method::Conventional => "conventional",
            Method::ReducedAntenna => "reduced_antenna",
            Method::AntennaSelection => "antenna_selection",
            Method::PerfectCsit => "perfect_csit",
        }
    }
}

impl fmt::Display for Method {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Method {
    type Err = HarnessError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        Method::ALL.into_iter().find(|m| m.name() == s).ok_or_else(|| invalid("methods", format!("unknown method {s:?}")))
    }
}

/// What a trial measures.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum Metric {
    /// ZFBF sum rate in bps/Hz.
    #[default]
    SumRate,
    /// `||h||^2 (1 - |h̄^H ĥ|^2) / N_t` for a single user.
    Distortion,
}

/// Total bits chosen per grid point from the closed-form bit requirement.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BitRule {
    pub beta: f64,
    pub xi: f64,
    /// Payload ceiling set by the codebook mechanics.
    pub max_payload: u32,
}

fn one() -> usize {
    1
}

fn default_snr() -> f64 {
    10.0
}

fn default_trials() -> usize {
    DEFAULT_TRIALS
}

/// A complete experiment description; loaded from JSON.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScenarioConfig {
    pub id: String,
    pub model: ChannelModel,
    pub n_t: usize,
    pub n_g: usize,
    #[serde(default = "one")]
    pub k_users: usize,
    pub b_total: u32,
    pub b_p: u32,
    /// Number of sub-arrays.
    #[serde(default = "one")]
    pub m: usize,
    /// Candidate pool for pattern packing; defaults per sub-array header size.
    #[serde(default)]
    pub pool: Option<usize>,
    #[serde(default = "default_snr")]
    pub snr_db: f64,
    #[serde(default)]
    pub error_var: f64,
    pub axis: XAxis,
    pub grid: Vec<f64>,
    pub methods: Vec<Method>,
    #[serde(default)]
    pub metric: Metric,
    #[serde(default)]
    pub bit_rule: Option<BitRule>,
    #[serde(default = "default_trials")]
    pub trials: usize,
    #[serde(default)]
    pub seed: u64,
}

/// Parameters in force at one grid value.
#[derive(Debug, Clone, PartialEq)]
pub struct Point {
    pub x: f64,
    pub model: ChannelModel,
    pub b_total: u32,
    pub b_p: u32,
    pub snr_db: f64,
    pub error_var: f64,
}

fn whole_bits(field: &str, x: f64) -> Result<u32, HarnessError> {
    if x.fract() != 0.0 || !(0.0..=64.0).contains(&x) {
        return Err(invalid(field, format!("{x} is not a bit count")));
    }
    Ok(x as u32)
}

/// Whether `bits` can be searched in one flat codebook or a product over `m` blocks.
fn searchable(bits: u32, m: usize) -> bool {
    bits <= FLAT_BITS_CAP || (m >= 2 && bits % m as u32 == 0 && bits / m as u32 <= FLAT_BITS_CAP)
}

impl ScenarioConfig {
    pub fn from_json(text: &str) -> Result<Self, HarnessError> {
        serde_json::from_str(text).map_err(|e| invalid("config", e.to_string()))
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("config serializes")
    }

    fn shape(&self) -> (usize, usize) {
        self.model.array_shape(self.n_t)
    }

    /// Field-level validation of the config and every grid point.
    pub fn validate(&self) -> Result<(), HarnessError> {
        if self.id.is_empty() || !self.id.chars().all(|c| c.is_ascii_alphanumeric() || "-_.".contains(c)) {
            return Err(invalid("id", "use letters, digits, '-', '_' or '.'"));
        }
        if self.n_t == 0 || self.n_g == 0 || self.n_t % self.n_g != 0 {
            return Err(invalid("n_g", format!("{} must divide n_t = {}", self.n_g, self.n_t)));
        }
        self.model.validate(self.n_t).map_err(|e| invalid("model", e.to_string()))?;
        if self.m == 0 || !self.m.is_power_of_two() || self.n_g % self.m != 0 {
            return Err(invalid("m", format!("{} must be a power of two dividing n_g = {}", self.m, self.n_g)));
        }
        subarray_blocks(self.shape(), self.m).map_err(|e| invalid("m", e.to_string()))?;
        if self.k_users == 0 {
            return Err(invalid("k_users", "need at least one user"));
        }
        if self.trials == 0 {
            return Err(invalid("trials", "need at least one trial"));
        }
        if !(self.error_var >= 0.0 && self.error_var.is_finite()) {
            return Err(invalid("error_var", format!("{} is not a variance", self.error_var)));
        }
        if !self.snr_db.is_finite() {
            return Err(invalid("snr_db", "must be finite"));
        }
        if self.grid.is_empty() || self.grid.iter().any(|x| !x.is_finite()) {
            return Err(invalid("grid", "need at least one finite value"));
        }
        if self.methods.is_empty() {
            return Err(invalid("methods", "need at least one method"));
        }
        let mut seen = HashSet::new();
        if let Some(m) = self.methods.iter().find(|m| !seen.insert(**m)) {
            return Err(invalid("methods", format!("{m} listed twice")));
        }
        let upa = matches!(self.model, ChannelModel::Upa { .. });
        if upa && self.methods.contains(&Method::ReducedAntenna) {
            return Err(invalid("methods", "reduced_antenna needs the exponential model"));
        }
        if upa && self.axis == XAxis::Alpha {
            return Err(invalid("axis", "alpha sweeps need the exponential model"));
        }
        match self.metric {
            Metric::Distortion => {
                if self.k_users != 1 {
                    return Err(invalid("k_users", "distortion is measured for a single user"));
                }
                if let Some(m) =
                    self.methods.iter().find(|m| matches!(m, Method::ReducedAntenna | Method::AntennaSelection))
                {
                    return Err(invalid("methods", format!("{m} has no full-array distortion")));
                }
            }
            Metric::SumRate => {
                let reduced = self.methods.iter().any(|m| matches!(m, Method::ReducedAntenna | Method::AntennaSelection));
                let limit = if reduced { self.n_g } else { self.n_t };
                if self.k_users > limit {
                    return Err(invalid("k_users", format!("{} users exceed {limit} transmit dimensions", self.k_users)));
                }
            }
        }
        if let Some(rule) = &self.bit_rule {
            if !(rule.beta > 1.0) || !(rule.xi >= 0.0) || self.k_users < 2 {
                return Err(invalid("bit_rule", "needs beta > 1, xi >= 0 and at least two users"));
            }
            if upa {
                return Err(invalid("bit_rule", "the bit rule is defined for the exponential model"));
            }
        }
        for &x in &self.grid {
            let pt = self.point(x)?;
            self.check_bits(&pt)?;
        }
        Ok(())
    }

    fn check_bits(&self, pt: &Point) -> Result<(), HarnessError> {
        if pt.b_p > pt.b_total {
            return Err(invalid("b_p", format!("{} header bits exceed b_total = {} at x = {}", pt.b_p, pt.b_total, pt.x)));
        }
        let m = self.m;
        for method in &self.methods {
            let (bits, what) = match method {
                Method::Agb | Method::AgbRandom => (pt.b_total - pt.b_p, "payload"),
                Method::PerfectCsit => continue,
                _ => (pt.b_total, "b_total"),
            };
            if !searchable(bits, m) {
                return Err(invalid(
                    "b_total",
                    format!("{method}: {bits} {what} bits at x = {} need a flat codebook or a product over m = {m}", pt.x),
                ));
            }
        }
        if self.methods.iter().any(|m| matches!(m, Method::Agb | Method::AgbRandom)) {
            if pt.b_p as usize % m != 0 {
                return Err(invalid("b_p", format!("{} header bits at x = {} not divisible by m = {m}", pt.b_p, pt.x)));
            }
            let count = pattern_count(self.n_t / m, self.n_g / m).map_err(|e| invalid("n_g", e.to_string()))?;
            if count > ENUMERATION_CAP {
                return Err(invalid("m", format!("{count} patterns per sub-array; increase m")));
            }
            let need = 1u128 << (pt.b_p as usize / m);
            if need > count {
                return Err(invalid("b_p", format!("{need} patterns per sub-array requested, only {count} exist")));
            }
        }
        Ok(())
    }

    /// Parameters at grid value `x`.
    pub fn point(&self, x: f64) -> Result<Point, HarnessError> {
        let mut pt = Point {
            x,
            model: self.model.clone(),
            b_total: self.b_total,
            b_p: self.b_p,
            snr_db: self.snr_db,
            error_var: self.error_var,
        };
        match self.axis {
            XAxis::SnrDb => pt.snr_db = x,
            XAxis::Alpha => match &mut pt.model {
                ChannelModel::Exponential { alpha, .. } => *alpha = x,
                ChannelModel::Upa { .. } => return Err(invalid("axis", "alpha sweeps need the exponential model")),
            },
            XAxis::PatternBits => {
                let payload = self.b_total.checked_sub(self.b_p).ok_or_else(|| invalid("b_p", "exceeds b_total"))?;
                pt.b_p = whole_bits("grid", x)?;
                pt.b_total = payload + pt.b_p;
            }
            XAxis::TotalBits => pt.b_total = whole_bits("grid", x)?,
            XAxis::ErrorVar => {
                if !(x >= 0.0) {
                    return Err(invalid("grid", format!("{x} is not a variance")));
                }
                pt.error_var = x;
            }
        }
        pt.model.validate(self.n_t).map_err(|e| invalid("grid", e.to_string()))?;
        if let Some(rule) = &self.bit_rule {
            pt.b_total = pt.b_p + self.rule_payload(rule, &pt)?;
        }
        Ok(pt)
    }

    /// `ceil(B - B_p)` from the bit requirement, clamped to `[0, max_payload]`
    /// and rounded up to a multiple of `m` so products stay balanced.
    fn rule_payload(&self, rule: &BitRule, pt: &Point) -> Result<u32, HarnessError> {
        let ChannelModel::Exponential { alpha, .. } = pt.model else {
            return Err(invalid("bit_rule", "the bit rule is defined for the exponential model"));
        };
        let params = BoundParams {
            n_t: self.n_t,
            n_g: self.n_g,
            b: 0.0,
            b_p: pt.b_p as f64,
            rho: alpha,
            xi: rule.xi,
            k_users: self.k_users,
            p: 10f64.powf(pt.snr_db / 10.0),
            beta: rule.beta,
        };
        let b = required_bits(&params)?;
        let payload = (b - pt.b_p as f64).ceil().clamp(0.0, rule.max_payload as f64) as u32;
        let m = self.m as u32;
        Ok(payload.div_ceil(m) * m)
    }
}

/// One CSV row; `discards` is reported out of band.
#[derive(Debug, Clone, PartialEq)]
pub struct ResultRow {
    pub scenario: String,
    pub x: f64,
    pub method: String,
    pub mean_rate: f64,
    pub stderr: f64,
    pub trials: usize,
    pub seed: u64,
    pub discards: u64,
}

/// Per-trial values of one method, indexed by trial.
#[derive(Debug, Clone, PartialEq)]
pub struct MethodSamples {
    pub method: Method,
    pub values: Vec<f64>,
    pub discards: u64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct PointSamples {
    pub point: Point,
    pub methods: Vec<MethodSamples>,
}

impl PointSamples {
    pub fn get(&self, m: Method) -> Option<&MethodSamples> {
        self.methods.iter().find(|s| s.method == m)
    }
}

enum Prepared {
    Agb(Box<AgbContext>),
    Quantized(std::sync::Arc<dyn Quantizer>),
    Selection { reps: Vec<usize>, q: std::sync::Arc<dyn Quantizer> },
    Perfect,
}

struct UserDraw {
    h: ComplexVector,
    est: ComplexVector,
    r: Option<ComplexMatrix>,
}

struct PointRunner<'a> {
    cfg: &'a ScenarioConfig,
    pt: Point,
    scenario: u64,
    index: u64,
    power: f64,
}

impl PointRunner<'_> {
    fn antennas(&self, method: Method) -> usize {
        if method == Method::ReducedAntenna {
            self.cfg.n_g
        } else {
            self.cfg.n_t
        }
    }

    fn prepare(&self, method: Method, r: &ComplexMatrix) -> Result<Prepared, HarnessError> {
        let cfg = self.cfg;
        let shape = self.pt.model.array_shape(cfg.n_t);
        let spec = ContextSpec {
            shape,
            n_g: cfg.n_g,
            b_total: self.pt.b_total,
            b_p: self.pt.b_p,
            m: cfg.m,
            selection: PatternSelection::Packing,
            pool: cfg.pool,
            seed: cfg.seed,
        };
        Ok(match method {
            Method::Agb => Prepared::Agb(Box::new(build_context(r, &spec)?)),
            Method::AgbRandom => {
                Prepared::Agb(Box::new(build_context(r, &ContextSpec { selection: PatternSelection::Random, ..spec })?))
            }
            Method::AgbAdjacent => {
                let set = adjacent_pattern_set(shape, cfg.n_g, cfg.m)?;
                Prepared::Agb(Box::new(build_context_with(r, &ContextSpec { b_p: 0, ..spec }, set)?))
            }
            Method::Conventional => Prepared::Quantized(conventional_quantizer(r, shape, cfg.m, self.pt.b_total, cfg.seed)?),
            Method::ReducedAntenna => {
                Prepared::Quantized(conventional_quantizer(r, (cfg.n_g, 1), cfg.m, self.pt.b_total, cfg.seed)?)
            }
            Method::AntennaSelection => {
                let reps = adjacent_pattern_set(shape, cfg.n_g, cfg.m)?.patterns()[0].representatives();
                let q = conventional_quantizer(&r.submatrix(&reps), (cfg.n_g, 1), cfg.m, self.pt.b_total, cfg.seed)?;
                Prepared::Selection { reps, q }
            }
            Method::PerfectCsit => Prepared::Perfect,
        })
    }

    fn draw_users(
        &self,
        method: Method,
        common: Option<&ComplexMatrix>,
        trial: usize,
        attempt: u64,
    ) -> Result<Vec<UserDraw>, HarnessError> {
        let tag = if method == Method::ReducedAntenna { TAG_REDUCED } else { TAG_TRIAL };
        let mut rng = stream(self.cfg.seed, &[tag, self.scenario, self.index, trial as u64, attempt]);
        let n = self.antennas(method);
        (0..self.cfg.k_users)
            .map(|_| {
                let (h, r) = match common {
                    Some(s) => (correlated_draw(s, &mut rng), None),
                    None => {
                        let r = self.pt.model.draw_correlation(n, &mut rng)?;
                        let s = hermitian_sqrt(&r).map_err(ChannelError::from)?;
                        (correlated_draw(&s, &mut rng), Some(r))
                    }
                };
                let est = add_estimation_error(&h, self.pt.error_var, &mut rng)?;
                Ok(UserDraw { h, est, r })
            })
            .collect()
    }

    fn attempt(
        &self,
        method: Method,
        shared: Option<(&ComplexMatrix, &Prepared)>,
        trial: usize,
        attempt: u64,
    ) -> Result<f64, HarnessError> {
        let users = self.draw_users(method, shared.map(|s| s.0), trial, attempt)?;
        let mut rows = Vec::with_capacity(users.len());
        let mut dirs = Vec::with_capacity(users.len());
        for u in users {
            let owned;
            let prep = match shared {
                Some((_, p)) => p,
                None => {
                    owned = self.prepare(method, u.r.as_ref().expect("per-user correlation"))?;
                    &owned
                }
            };
            match prep {
                Prepared::Perfect => rows.push(u.h),
                Prepared::Agb(ctx) => {
                    dirs.push(agb_decode(&agb_encode(&u.est, ctx)?, ctx)?);
                    rows.push(u.h);
                }
                Prepared::Quantized(q) => {
                    dirs.push(conventional_decode(conventional_encode(&u.est, q.as_ref())?, q.as_ref())?);
                    rows.push(u.h);
                }
                Prepared::Selection { reps, q } => {
                    let est = ComplexVector(reps.iter().map(|&i| u.est[i]).collect());
                    dirs.push(conventional_decode(conventional_encode(&est, q.as_ref())?, q.as_ref())?);
                    rows.push(ComplexVector(reps.iter().map(|&i| u.h[i]).collect()));
                }
            }
        }
        match self.cfg.metric {
            Metric::SumRate => {
                let h = channel_matrix(&rows)?;
                if method == Method::PerfectCsit {
                    return Ok(perfect_csit_rate(&h, self.power)?);
                }
                let w = zfbf(&channel_matrix(&dirs)?)?;
                Ok(sum_rate(&h, &w, self.power)?)
            }
            Metric::Distortion => {
                let h = &rows[0];
                let n2 = h.norm_sqr();
                let loss = match dirs.first() {
                    None => 0.0,
                    Some(d) => (1.0 - dot(h, d).norm_sqr() / (n2 * norm_sqr(d))).max(0.0),
                };
                Ok(n2 * loss / h.dim() as f64)
            }
        }
    }

    fn run_method(&self, method: Method) -> Result<MethodSamples, HarnessError> {
        let n = self.antennas(method);
        let shared = if self.pt.model.is_common() {
            let r = self.pt.model.common_correlation(n)?;
            let s = hermitian_sqrt(&r).map_err(ChannelError::from)?;
            let p = self.prepare(method, &r)?;
            Some((s, p))
        } else {
            None
        };
        let shared = shared.as_ref().map(|(s, p)| (s, p));
        let out: Vec<(f64, u64)> = (0..self.cfg.trials)
            .into_par_iter()
            .map(|t| {
                for a in 0..MAX_ATTEMPTS {
                    match self.attempt(method, shared, t, a) {
                        Ok(v) => return Ok((v, a)),
                        Err(HarnessError::Precoder(PrecoderError::RankDeficient)) => continue,
                        Err(e) => return Err(e),
                    }
                }
                Err(HarnessError::TooManyDiscards { trial: t, attempts: MAX_ATTEMPTS })
            })
            .collect::<Result<_, _>>()?;
        Ok(MethodSamples {
            method,
            values: out.iter().map(|o| o.0).collect(),
            discards: out.iter().map(|o| o.1).sum(),
        })
    }
}

/// Per-trial values for every grid point and method.
pub fn run_scenario_samples(cfg: &ScenarioConfig) -> Result<Vec<PointSamples>, HarnessError> {
    cfg.validate()?;
    let scenario = fnv1a(cfg.id.as_bytes());
    cfg.grid
        .iter()
        .enumerate()
        .map(|(i, &x)| {
            let pt = cfg.point(x)?;
            let runner = PointRunner { cfg, power: 10f64.powf(pt.snr_db / 10.0), pt, scenario, index: i as u64 };
            let methods = cfg.methods.iter().map(|&m| runner.run_method(m)).collect::<Result<_, _>>()?;
            Ok(PointSamples { point: runner.pt, methods })
        })
        .collect()
}

/// Mean and standard error for every grid point and method.
pub fn run_scenario(cfg: &ScenarioConfig) -> Result<Vec<ResultRow>, HarnessError> {
    Ok(summarize(cfg, &run_scenario_samples(cfg)?))
}

pub fn summarize(cfg: &ScenarioConfig, points: &[PointSamples]) -> Vec<ResultRow> {
    points
        .iter()
        .flat_map(|p| {
            p.methods.iter().map(move |s| {
                let e = mean_stderr(&s.values);
                ResultRow {
                    scenario: cfg.id.clone(),
                    x: p.point.x,
                    method: s.method.name().to_string(),
                    mean_rate: e.mean,
                    stderr: e.stderr,
                    trials: s.values.len(),
                    seed: cfg.seed,
                    discards: s.discards,
                }
            })
        })
        .collect()
}

/// CSV text; floats use the shortest representation that parses back exactly.
pub fn format_csv(rows: &[ResultRow]) -> String {
    let mut out = String::from(CSV_HEADER);
    out.push('\n');
    for r in rows {
        out.push_str(&format!(
            "{},{},{},{},{},{},{}\n",
            r.scenario, r.x, r.method, r.mean_rate, r.stderr, r.trials, r.seed
        ));
    }
    out
}

pub fn emit_csv(rows: &[ResultRow], path: impl AsRef<Path>) -> Result<(), HarnessError> {
    Ok(std::fs::write(path, format_csv(rows))?)
}

pub fn parse_csv(text: &str) -> Result<Vec<ResultRow>, HarnessError> {
    let mut lines = text.lines();
    if lines.next() != Some(CSV_HEADER) {
        return Err(HarnessError::Csv("missing header".into()));
    }
    lines
        .enumerate()
        .map(|(i, line)| {
            let bad = |what: &str| HarnessError::Csv(format!("line {}: {what}", i + 2));
            let f: Vec<&str> = line.split(',').collect();
            if f.len() != 7 {
                return Err(bad("expected 7 fields"));
            }
            Ok(ResultRow {
                scenario: f[0].to_string(),
                x: f[1].parse().map_err(|_| bad("x"))?,
                method: f[2].to_string(),
                mean_rate: f[3].parse().map_err(|_| bad("mean_rate"))?,
                stderr: f[4].parse().map_err(|_| bad("stderr"))?,
                trials: f[5].parse().map_err(|_| bad("trials"))?,
                seed: f[6].parse().map_err(|_| bad("seed"))?,
                discards: 0,
            })
        })
        .collect()
}

fn exp_fixed(alpha: f64) -> ChannelModel {
    ChannelModel::exponential(alpha, PhaseMode::Fixed(0.0))
}

fn snr_grid() -> Vec<f64> {
    vec![0.0, 5.0, 10.0, 15.0, 20.0]
}

/// The built-in scenarios, all at desk scale.
pub fn registry() -> Vec<ScenarioConfig> {
    use Method::*;
    let base = ScenarioConfig {
        id: String::new(),
        model: exp_fixed(0.8),
        n_t: 16,
        n_g: 8,
        k_users: 2,
        b_total: 16,
        b_p: 4,
        m: 2,
        pool: None,
        snr_db: 10.0,
        error_var: 0.0,
        axis: XAxis::SnrDb,
        grid: snr_grid(),
        methods: vec![Agb, Conventional, PerfectCsit],
        metric: Metric::SumRate,
        bit_rule: None,
        trials: DEFAULT_TRIALS,
        seed: 1,
    };
    let large = ScenarioConfig { n_t: 32, n_g: 16, k_users: 4, b_total: 32, b_p: 8, m: 4, ..base.clone() };
    vec![
        ScenarioConfig {
            id: "fig6".into(),
            k_users: 1,
            b_p: 8,
            axis: XAxis::Alpha,
            grid: (1..=9).map(|i| i as f64 / 10.0).collect(),
            methods: vec![Agb, Conventional],
            metric: Metric::Distortion,
            ..base.clone()
        },
        ScenarioConfig {
            id: "fig7".into(),
            model: exp_fixed(0.9),
            b_p: 8,
            b_total: 24,
            bit_rule: Some(BitRule { beta: 2.0, xi: 0.05, max_payload: 16 }),
            ..base.clone()
        },
        ScenarioConfig {
            id: "fig8".into(),
            k_users: 1,
            b_total: 18,
            b_p: 2,
            axis: XAxis::PatternBits,
            grid: vec![2.0, 4.0, 6.0, 8.0],
            methods: vec![Agb, AgbRandom, AgbAdjacent, Conventional],
            ..base.clone()
        },
        ScenarioConfig { id: "fig9a".into(), ..large.clone() },
        ScenarioConfig { id: "fig9a-small".into(), ..base.clone() },
        ScenarioConfig {
            id: "fig9b".into(),
            axis: XAxis::TotalBits,
            grid: vec![16.0, 24.0, 32.0, 40.0, 48.0],
            methods: vec![Agb, Conventional, ReducedAntenna, AntennaSelection],
            ..large.clone()
        },
        ScenarioConfig {
            id: "fig10".into(),
            model: ChannelModel::Upa {
                spec: UpaSpec { n_v: 4, n_h: 8, ..UpaSpec::default() },
                phase: PhaseMode::Fixed(0.0),
            },
            k_users: 2,
            ..large
        },
        ScenarioConfig {
            id: "fig11".into(),
            axis: XAxis::ErrorVar,
            grid: vec![0.0, 0.01, 0.05],
            methods: vec![Agb, Conventional],
            ..base.clone()
        },
        ScenarioConfig {
            id: "fig12".into(),
            axis: XAxis::Alpha,
            grid: vec![0.5, 0.6, 0.7, 0.8, 0.9],
            methods: vec![Agb, Conventional],
            ..base.clone()
        },
        ScenarioConfig {
            id: "fig12-uniform-phase".into(),
            model: ChannelModel::exponential(0.8, PhaseMode::Uniform),
            axis: XAxis::Alpha,
            grid: vec![0.5, 0.7, 0.9],
            methods: vec![Agb, Conventional],
            trials: 200,
            ..base
        },
    ]
}

pub fn scenario(name: &str) -> Result<ScenarioConfig, HarnessError> {
    registry().into_iter().find(|s| s.id == name).ok_or_else(|| HarnessError::UnknownScenario(name.into()))
}

fn merge(base: &mut serde_json::Value, overlay: serde_json::Value) {
    match (base, overlay) {
        (serde_json::Value::Object(b), serde_json::Value::Object(o)) => {
            for (k, v) in o {
                match b.get_mut(&k) {
                    Some(slot) => merge(slot, v),
                    None => {
                        b.insert(k, v);
                    }
                }
            }
        }
        (slot, v) => *slot = v,
    }
}

/// A registry scenario and/or a JSON file; file values override the
/// scenario's, nested objects merging key by key.
pub fn load_config(name: Option<&str>, file: Option<&Path>) -> Result<ScenarioConfig, HarnessError> {
    let mut value = match name {
        Some(n) => serde_json::to_value(scenario(n)?).expect("config serializes"),
        None => serde_json::Value::Object(Default::default()),
    };
    if let Some(path) = file {
        let text = std::fs::read_to_string(path)
            .map_err(|e| invalid("config", format!("{}: {e}", path.display())))?;
        let overlay: serde_json::Value =
            serde_json::from_str(&text).map_err(|e| invalid("config", format!("{}: {e}", path.display())))?;
        if !overlay.is_object() {
            return Err(invalid("config", "top level must be a JSON object"));
        }
        merge(&mut value, overlay);
    } else if name.is_none() {
        return Err(invalid("config", "give a scenario name or a config file"));
    }
    serde_json::from_value(value).map_err(|e| invalid("config", e.to_string()))
}
