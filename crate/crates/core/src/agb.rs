//! Antenna-group-based feedback: reduce, quantize, expand, pick a pattern.
//!
//! The encoder averages the channel over the groups of every candidate
//! pattern, quantizes each reduced vector with that pattern's codebook, and
//! keeps the pattern whose expanded codeword is best aligned with the channel
//! direction. Because the expanded direction of a unit codeword `c` is
//! `E c / sqrt(kappa)`, its alignment with `h̄` is `kappa |(G h̄)^H c|^2`,
//! bounded by `kappa ||G h̄||^2`; patterns are visited in decreasing order of
//! that bound and the scan stops once no remaining pattern can win.

use std::collections::HashMap;
use std::fmt;
use std::sync::{Arc, Mutex, OnceLock};

use crate::codebook::{
    line_packing_codebook, Codebook, CodebookError, ProductCodebook, Quantizer, RotatedCodebook, FLAT_BITS_CAP,
    PACKING_ITERS,
};
use crate::mathkit::{dot, hermitian_sqrt, norm_sqr, ComplexMatrix, ComplexVector, MathError, C64};
use crate::patterns::{
    compose_subarray_patterns, partition_array, random_pattern_set, select_partitioned, GroupPattern, PatternError,
    PatternSet,
};
use crate::rng::stream;

/// Reduced vectors at or below this norm (channel direction units) are skipped.
pub const DEGENERATE_TOL: f64 = 1e-12;

#[derive(Debug, thiserror::Error)]
pub enum AgbError {
    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimMismatch { expected: usize, got: usize },
    #[error("channel vector is zero")]
    ZeroVector,
    #[error("every pattern reduces the channel to zero")]
    AllPatternsDegenerate,
    #[error("index {index} out of range ({bits} bits)")]
    IndexOutOfRange { index: u64, bits: u32 },
    #[error("invalid packet: {0}")]
    InvalidPacket(String),
    #[error("inconsistent context: {0}")]
    Context(String),
    #[error(transparent)]
    Codebook(#[from] CodebookError),
    #[error(transparent)]
    Pattern(#[from] PatternError),
    #[error(transparent)]
    Math(#[from] MathError),
}

/// Header (pattern index) followed by payload (codeword index).
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct FeedbackPacket {
    pattern_index: u64,
    codeword_index: u64,
    b_p: u32,
    b_total: u32,
}

fn fits(v: u64, bits: u32) -> bool {
    bits >= 64 || v < (1u64 << bits)
}

impl FeedbackPacket {
    pub fn new(pattern_index: u64, codeword_index: u64, b_p: u32, b_total: u32) -> Result<Self, AgbError> {
        if b_p > b_total || b_p > 63 || b_total - b_p > 63 {
            return Err(AgbError::InvalidPacket(format!("bit split {b_p}/{b_total}")));
        }
        if !fits(pattern_index, b_p) {
            return Err(AgbError::IndexOutOfRange { index: pattern_index, bits: b_p });
        }
        if !fits(codeword_index, b_total - b_p) {
            return Err(AgbError::IndexOutOfRange { index: codeword_index, bits: b_total - b_p });
        }
        Ok(Self { pattern_index, codeword_index, b_p, b_total })
    }

    pub fn pattern_index(&self) -> u64 {
        self.pattern_index
    }

    pub fn codeword_index(&self) -> u64 {
        self.codeword_index
    }

    pub fn b_p(&self) -> u32 {
        self.b_p
    }

    pub fn b_total(&self) -> u32 {
        self.b_total
    }

    /// Most significant bit first, header then payload.
    pub fn to_bits(&self) -> Vec<bool> {
        let b_q = self.b_total - self.b_p;
        let header = (0..self.b_p).rev().map(|i| (self.pattern_index >> i) & 1 == 1);
        let payload = (0..b_q).rev().map(|i| (self.codeword_index >> i) & 1 == 1);
        header.chain(payload).collect()
    }

    pub fn from_bits(bits: &[bool], b_p: u32) -> Result<Self, AgbError> {
        let b_total = bits.len() as u32;
        if b_p > b_total {
            return Err(AgbError::InvalidPacket(format!("{b_total} bits cannot hold a {b_p}-bit header")));
        }
        let fold = |s: &[bool]| s.iter().fold(0u64, |acc, &b| (acc << 1) | b as u64);
        let (h, p) = bits.split_at(b_p as usize);
        Self::new(fold(h), fold(p), b_p, b_total)
    }

    pub fn to_bit_string(&self) -> String {
        self.to_bits().into_iter().map(|b| if b { '1' } else { '0' }).collect()
    }

    pub fn from_bit_string(s: &str, b_p: u32) -> Result<Self, AgbError> {
        let bits = s
            .chars()
            .map(|c| match c {
                '0' => Ok(false),
                '1' => Ok(true),
                other => Err(AgbError::InvalidPacket(format!("unexpected character {other:?}"))),
            })
            .collect::<Result<Vec<_>, _>>()?;
        Self::from_bits(&bits, b_p)
    }
}

impl fmt::Display for FeedbackPacket {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.to_bit_string())
    }
}

/// `G h`: the mean of each group.
pub fn reduce(h: &[C64], p: &GroupPattern) -> Result<ComplexVector, AgbError> {
    if h.len() != p.n_t() {
        return Err(AgbError::DimMismatch { expected: p.n_t(), got: h.len() });
    }
    let w = 1.0 / p.kappa() as f64;
    Ok(ComplexVector(p.groups().iter().map(|g| g.iter().map(|&a| h[a]).sum::<C64>() * w).collect()))
}

/// `E v`: every reduced entry copied to its group.
pub fn expand(v: &[C64], p: &GroupPattern) -> Result<ComplexVector, AgbError> {
    if v.len() != p.n_g() {
        return Err(AgbError::DimMismatch { expected: p.n_g(), got: v.len() });
    }
    let mut out = ComplexVector::zeros(p.n_t());
    for (g, members) in p.groups().iter().enumerate() {
        for &a in members {
            out[a] = v[g];
        }
    }
    Ok(out)
}

/// `||h||^2 (1 - |h̄^H h̃ / ||h̃|| |^2)`.
pub fn agb_distortion(h: &[C64], h_tilde: &[C64]) -> Result<f64, AgbError> {
    if h.len() != h_tilde.len() {
        return Err(AgbError::DimMismatch { expected: h.len(), got: h_tilde.len() });
    }
    let nh = norm_sqr(h);
    let nt = norm_sqr(h_tilde);
    if nh <= 0.0 || nt <= 0.0 {
        return Err(AgbError::ZeroVector);
    }
    let align = (dot(h, h_tilde).norm_sqr() / (nh * nt)).min(1.0);
    Ok(nh * (1.0 - align))
}

/// Shared state of base station and users.
#[derive(Clone)]
pub struct AgbContext {
    patterns: PatternSet,
    quantizers: Vec<Arc<dyn Quantizer>>,
    conventional: Arc<dyn Quantizer>,
    b_total: u32,
}

impl fmt::Debug for AgbContext {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("AgbContext")
            .field("n_t", &self.n_t())
            .field("n_g", &self.n_g())
            .field("b_p", &self.b_p())
            .field("b_total", &self.b_total)
            .finish()
    }
}

impl AgbContext {
    pub fn new(
        patterns: PatternSet,
        quantizers: Vec<Arc<dyn Quantizer>>,
        conventional: Arc<dyn Quantizer>,
        b_total: u32,
    ) -> Result<Self, AgbError> {
        let b_q = b_total
            .checked_sub(patterns.b_p())
            .ok_or_else(|| AgbError::Context(format!("{} header bits exceed {b_total}", patterns.b_p())))?;
        if quantizers.len() != patterns.len() {
            return Err(AgbError::Context(format!("{} codebooks for {} patterns", quantizers.len(), patterns.len())));
        }
        for q in &quantizers {
            if q.dim() != patterns.n_g() || q.bits() != b_q {
                return Err(AgbError::Context(format!(
                    "pattern codebook is {}-dim/{} bits, need {}-dim/{b_q} bits",
                    q.dim(),
                    q.bits(),
                    patterns.n_g()
                )));
            }
        }
        if conventional.dim() != patterns.n_t() {
            return Err(AgbError::Context("conventional codebook dimension".into()));
        }
        Ok(Self { patterns, quantizers, conventional, b_total })
    }

    pub fn patterns(&self) -> &PatternSet {
        &self.patterns
    }

    pub fn quantizer(&self, i: usize) -> &Arc<dyn Quantizer> {
        &self.quantizers[i]
    }

    pub fn conventional(&self) -> &Arc<dyn Quantizer> {
        &self.conventional
    }

    pub fn n_t(&self) -> usize {
        self.patterns.n_t()
    }

    pub fn n_g(&self) -> usize {
        self.patterns.n_g()
    }

    pub fn b_p(&self) -> u32 {
        self.patterns.b_p()
    }

    pub fn b_total(&self) -> u32 {
        self.b_total
    }

    pub fn payload_bits(&self) -> u32 {
        self.b_total - self.b_p()
    }
}

/// Encoder output with the diagnostics the experiments need.
#[derive(Debug, Clone, PartialEq)]
pub struct Encoded {
    pub packet: FeedbackPacket,
    /// `|h̄^H d|^2` for the decoded unit direction `d`.
    pub alignment: f64,
    /// Patterns whose codebook was actually searched.
    pub searched: usize,
}

pub fn agb_encode(h: &[C64], ctx: &AgbContext) -> Result<FeedbackPacket, AgbError> {
    Ok(agb_encode_detailed(h, ctx)?.packet)
}

pub fn agb_encode_detailed(h: &[C64], ctx: &AgbContext) -> Result<Encoded, AgbError> {
    if h.len() != ctx.n_t() {
        return Err(AgbError::DimMismatch { expected: ctx.n_t(), got: h.len() });
    }
    let n = norm_sqr(h).sqrt();
    if !(n > 0.0) {
        return Err(AgbError::ZeroVector);
    }
    let hbar: Vec<C64> = h.iter().map(|x| x / n).collect();
    let kappa = ctx.patterns.patterns()[0].kappa() as f64;
    let mut cands: Vec<(f64, usize, ComplexVector)> = Vec::with_capacity(ctx.patterns.len());
    for (i, p) in ctx.patterns.patterns().iter().enumerate() {
        let r = reduce(&hbar, p)?;
        let nr = r.norm_sqr();
        if nr.sqrt() > DEGENERATE_TOL {
            cands.push((kappa * nr, i, r));
        }
    }
    if cands.is_empty() {
        return Err(AgbError::AllPatternsDegenerate);
    }
    cands.sort_by(|a, b| b.0.total_cmp(&a.0).then(a.1.cmp(&b.1)));
    let mut best: Option<(f64, usize, u64)> = None;
    let mut searched = 0;
    for (ub, i, r) in &cands {
        if let Some((align, _, _)) = best {
            if *ub < align {
                break;
            }
        }
        searched += 1;
        let q = &ctx.quantizers[*i];
        let (idx, _) = q.search(r);
        let c = q.codeword(idx)?;
        let align = (kappa * dot(r, &c).norm_sqr() / norm_sqr(&c)).min(1.0);
        let better = match best {
            None => true,
            Some((a, j, _)) => align > a || (align == a && *i < j),
        };
        if better {
            best = Some((align, *i, idx));
        }
    }
    let (alignment, i, idx) = best.expect("at least one candidate");
    Ok(Encoded { packet: FeedbackPacket::new(i as u64, idx, ctx.b_p(), ctx.b_total)?, alignment, searched })
}

/// Unit-norm expanded direction named by a packet.
pub fn agb_decode(pkt: &FeedbackPacket, ctx: &AgbContext) -> Result<ComplexVector, AgbError> {
    if pkt.b_p() != ctx.b_p() || pkt.b_total() != ctx.b_total {
        return Err(AgbError::InvalidPacket(format!("{}/{} bits for a {}/{} context", pkt.b_p(), pkt.b_total(), ctx.b_p(), ctx.b_total)));
    }
    let i = pkt.pattern_index() as usize;
    let p = ctx
        .patterns
        .get(i)
        .ok_or(AgbError::IndexOutOfRange { index: pkt.pattern_index(), bits: ctx.b_p() })?;
    let c = ctx.quantizers[i].codeword(pkt.codeword_index())?;
    expand(&c, p)?.normalized().ok_or(AgbError::ZeroVector)
}

/// Full-dimension quantization of `h̄`.
pub fn conventional_encode<Q: Quantizer + ?Sized>(h: &[C64], c: &Q) -> Result<u64, AgbError> {
    if h.len() != c.dim() {
        return Err(AgbError::DimMismatch { expected: c.dim(), got: h.len() });
    }
    if !(norm_sqr(h) > 0.0) {
        return Err(AgbError::ZeroVector);
    }
    Ok(c.search(h).0)
}

/// Unit direction for a conventional index.
pub fn conventional_decode<Q: Quantizer + ?Sized>(index: u64, c: &Q) -> Result<ComplexVector, AgbError> {
    c.codeword(index)?.normalized().ok_or(AgbError::ZeroVector)
}

/// Bits per user keeping the sum-rate gap constant, `(N_t - 1) P_dB / 3`.
pub fn required_bits_conventional(n_t: usize, p_db: f64) -> f64 {
    (n_t.saturating_sub(1)) as f64 / 3.0 * p_db
}

/// How the `2^{B_p}` header patterns are chosen.
#[derive(Debug, Clone, Copy, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PatternSelection {
    /// Norm screening plus correlation-distance packing.
    Packing,
    /// Uniformly drawn distinct patterns per sub-array.
    Random,
}

/// Everything needed to build an [`AgbContext`] from a correlation matrix.
#[derive(Debug, Clone, PartialEq)]
pub struct ContextSpec {
    /// Array shape `(rows, cols)`; `(N_t, 1)` for a linear array.
    pub shape: (usize, usize),
    pub n_g: usize,
    pub b_total: u32,
    pub b_p: u32,
    /// Number of sub-arrays.
    pub m: usize,
    pub selection: PatternSelection,
    pub pool: Option<usize>,
    pub seed: u64,
}

impl ContextSpec {
    pub fn n_t(&self) -> usize {
        self.shape.0 * self.shape.1
    }
}

/// Codebook stream tags; fixed so contexts are reproducible across runs.
const TAG_PATTERN_BASE: u64 = 0x5041_5454;
const TAG_CONVENTIONAL_BASE: u64 = 0x434f_4e56;
const TAG_RANDOM_PATTERNS: u64 = 0x5241_4e44;

type BaseKey = (u64, u64, usize, u32);

fn base_cache() -> &'static Mutex<HashMap<BaseKey, Arc<Codebook>>> {
    static CACHE: OnceLock<Mutex<HashMap<BaseKey, Arc<Codebook>>>> = OnceLock::new();
    CACHE.get_or_init(Default::default)
}

/// Shared base packing for `bits` in `dim`, drawn from `(seed, tag, dim, bits)`.
///
/// Bases are memoized for the life of the process; the result is a pure
/// function of the key, so the cache never changes what callers observe.
pub fn base_codebook(dim: usize, bits: u32, seed: u64, tag: u64) -> Result<Arc<Codebook>, CodebookError> {
    let key = (seed, tag, dim, bits);
    if let Some(c) = base_cache().lock().unwrap_or_else(|e| e.into_inner()).get(&key) {
        return Ok(c.clone());
    }
    let mut rng = stream(seed, &[tag, dim as u64, bits as u64]);
    let c = Arc::new(line_packing_codebook(dim, bits, &mut rng, PACKING_ITERS)?);
    base_cache().lock().unwrap_or_else(|e| e.into_inner()).entry(key).or_insert_with(|| c.clone());
    Ok(c)
}

/// Index sets of the `m` sub-arrays of a `(rows, cols)` array.
pub fn subarray_blocks(shape: (usize, usize), m: usize) -> Result<Vec<Vec<usize>>, AgbError> {
    Ok(partition_array(shape.0, shape.1, m)?.iter().map(|b| b.indices(shape.1)).collect())
}

/// Full-dimension statistic quantizer, a product over the `m` sub-arrays past the flat cap.
pub fn conventional_quantizer(
    r: &ComplexMatrix,
    shape: (usize, usize),
    m: usize,
    bits: u32,
    seed: u64,
) -> Result<Arc<dyn Quantizer>, AgbError> {
    let blocks = subarray_blocks(shape, m.max(1))?;
    statistic_quantizer(r, bits, &blocks, seed, TAG_CONVENTIONAL_BASE, &mut HashMap::new())
}

/// The single pattern grouping neighbouring antennas inside each sub-array.
pub fn adjacent_pattern_set(shape: (usize, usize), n_g: usize, m: usize) -> Result<PatternSet, AgbError> {
    let m = m.max(1);
    if n_g % m != 0 {
        return Err(AgbError::Pattern(PatternError::NonDivisible { n_t: shape.0 * shape.1, n_g: m }));
    }
    let maps = subarray_blocks(shape, m)?;
    let sets = maps
        .iter()
        .map(|map| PatternSet::new(0, vec![GroupPattern::adjacent(map.len(), n_g / m)?]))
        .collect::<Result<Vec<_>, _>>()?;
    Ok(compose_subarray_patterns(&sets, &maps)?)
}

/// Statistic codebook for correlation `r`, flat up to the cap and a product
/// over `blocks` (index sets into `r`) beyond it.
pub fn statistic_quantizer(
    r: &ComplexMatrix,
    bits: u32,
    blocks: &[Vec<usize>],
    seed: u64,
    tag: u64,
    bases: &mut HashMap<(usize, u32), Arc<Codebook>>,
) -> Result<Arc<dyn Quantizer>, AgbError> {
    let dim = r.rows();
    let mut base_for = |d: usize, b: u32| -> Result<Arc<Codebook>, CodebookError> {
        if let Some(c) = bases.get(&(d, b)) {
            return Ok(c.clone());
        }
        let c = base_codebook(d, b, seed, tag)?;
        bases.insert((d, b), c.clone());
        Ok(c)
    };
    if bits <= FLAT_BITS_CAP {
        let base = base_for(dim, bits)?;
        return Ok(Arc::new(RotatedCodebook::from_sqrt(hermitian_sqrt(r)?, base)?));
    }
    let m = blocks.len() as u32;
    if m < 2 || bits % m != 0 || bits / m > FLAT_BITS_CAP {
        return Err(AgbError::Codebook(CodebookError::CapExceeded { bits, cap: FLAT_BITS_CAP }));
    }
    let mut parts: Vec<Arc<dyn Quantizer>> = Vec::with_capacity(blocks.len());
    for b in blocks {
        let base = base_for(b.len(), bits / m)?;
        parts.push(Arc::new(RotatedCodebook::from_sqrt(hermitian_sqrt(&r.submatrix(b))?, base)?));
    }
    Ok(Arc::new(ProductCodebook::new(parts, blocks.to_vec())?))
}

/// Builds the pattern set and all codebooks for a common correlation `r`.
pub fn build_context(r: &ComplexMatrix, spec: &ContextSpec) -> Result<AgbContext, AgbError> {
    let n_t = spec.n_t();
    if r.rows() != n_t || r.cols() != n_t {
        return Err(AgbError::DimMismatch { expected: n_t, got: r.rows() });
    }
    if spec.b_p > spec.b_total {
        return Err(AgbError::Context(format!("b_p = {} exceeds b_total = {}", spec.b_p, spec.b_total)));
    }
    let patterns = match spec.selection {
        PatternSelection::Packing => select_partitioned(r, spec.shape, spec.n_g, spec.b_p, spec.m, spec.pool)?,
        PatternSelection::Random => random_partitioned(spec)?,
    };
    build_context_with(r, spec, patterns)
}

fn random_partitioned(spec: &ContextSpec) -> Result<PatternSet, AgbError> {
    let m = spec.m;
    if m == 0 || spec.n_g % m != 0 || spec.b_p as usize % m != 0 {
        return Err(AgbError::Pattern(PatternError::NonDivisible { n_t: spec.n_t(), n_g: m }));
    }
    let blocks = partition_array(spec.shape.0, spec.shape.1, m)?;
    let maps: Vec<Vec<usize>> = blocks.iter().map(|b| b.indices(spec.shape.1)).collect();
    let mut rng = stream(spec.seed, &[TAG_RANDOM_PATTERNS]);
    let sets = maps
        .iter()
        .map(|map| random_pattern_set(map.len(), spec.n_g / m, spec.b_p / m as u32, &mut rng))
        .collect::<Result<Vec<_>, _>>()?;
    Ok(compose_subarray_patterns(&sets, &maps)?)
}

/// Codebooks for a given pattern set. Per-pattern codebooks rotate one
/// shared base by the correlation of the group representatives.
pub fn build_context_with(r: &ComplexMatrix, spec: &ContextSpec, patterns: PatternSet) -> Result<AgbContext, AgbError> {
    let n_t = spec.n_t();
    let b_q = spec.b_total - patterns.b_p();
    let m = spec.m.max(1);
    let n_g = patterns.n_g();
    let sub_g = n_g / m;
    let reduced_blocks: Vec<Vec<usize>> = (0..m).map(|s| (s * sub_g..(s + 1) * sub_g).collect()).collect();
    let mut bases = HashMap::new();
    let mut by_reps: HashMap<Vec<usize>, Arc<dyn Quantizer>> = HashMap::new();
    let mut quantizers = Vec::with_capacity(patterns.len());
    for p in patterns.patterns() {
        let reps = p.representatives();
        let q = match by_reps.get(&reps) {
            Some(q) => q.clone(),
            None => {
                let q = statistic_quantizer(&r.submatrix(&reps), b_q, &reduced_blocks, spec.seed, TAG_PATTERN_BASE, &mut bases)?;
                by_reps.insert(reps, q.clone());
                q
            }
        };
        quantizers.push(q);
    }
    if r.rows() != n_t {
        return Err(AgbError::DimMismatch { expected: n_t, got: r.rows() });
    }
    let conventional = conventional_quantizer(r, spec.shape, m, spec.b_total, spec.seed)?;
    AgbContext::new(patterns, quantizers, conventional, spec.b_total)
}
