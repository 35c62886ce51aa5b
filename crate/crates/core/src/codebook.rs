//! Quantization codebooks and maximum-inner-product search.
//!
//! A [`Codebook`] stores unit-norm codewords contiguously. Statistic codebooks
//! `c_i = S f_i / ||S f_i||` (with `S = R^{1/2}`) are searched without being
//! materialized: `|h^H c_i|^2 = |(S^H h)^H f_i|^2 / ||S f_i||^2`, so many
//! rotations can share one base codebook. Product codebooks quantize disjoint
//! sub-vectors independently and concatenate the indices.

use std::fs::File;
use std::io::{self, BufReader, BufWriter, Read, Write};
use std::path::Path;
use std::sync::Arc;

use rand::Rng;

use crate::channel::complex_gaussian;
use crate::mathkit::{hermitian_sqrt, norm_sqr, ComplexMatrix, ComplexVector, MathError, C64};

/// Largest flat codebook, in bits.
pub const FLAT_BITS_CAP: u32 = 20;
/// Line packings above this size skip the O(n^2) repulsion stage.
pub const REPULSION_MAX_SIZE: usize = 1 << 8;
pub const PACKING_RESTARTS: usize = 8;
pub const PACKING_ITERS: usize = 200;
const PACKING_STEP: f64 = 0.1;
const PACKING_DECAY: f64 = 0.95;
const PACKING_POWER: i32 = 8;

pub const UNIT_NORM_TOL: f64 = 1e-9;
pub const NULL_SPACE_TOL: f64 = 1e-12;

const MAGIC: &[u8; 4] = b"AGBC";
const FORMAT_VERSION: u32 = 1;

#[derive(Debug, thiserror::Error)]
pub enum CodebookError {
    #[error("{bits} bits exceeds the flat codebook cap of {cap}")]
    CapExceeded { bits: u32, cap: u32 },
    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimMismatch { expected: usize, got: usize },
    #[error("codebook size {0} is not a power of two")]
    NotPowerOfTwo(usize),
    #[error("vector is not unit norm (norm {0})")]
    NotUnitNorm(f64),
    #[error("codeword {0} lies in the null space of the correlation matrix")]
    NullSpaceHit(usize),
    #[error("index {index} out of range for codebook of size {size}")]
    IndexOutOfRange { index: u64, size: u64 },
    #[error("malformed codebook file: {0}")]
    Format(String),
    #[error(transparent)]
    Math(#[from] MathError),
    #[error(transparent)]
    Io(#[from] io::Error),
}

/// Anything that maps a vector to its best codeword.
pub trait Quantizer: Send + Sync {
    fn dim(&self) -> usize;
    fn bits(&self) -> u32;

    /// Index maximizing `|v^H c|^2` (lowest index on ties) and the maximized value.
    /// `v` need not be normalized.
    fn search(&self, v: &[C64]) -> (u64, f64);

    fn codeword(&self, index: u64) -> Result<ComplexVector, CodebookError>;

    fn size(&self) -> u64 {
        1u64 << self.bits()
    }
}

/// Unit-norm codewords stored contiguously.
#[derive(Debug, Clone, PartialEq)]
pub struct Codebook {
    dim: usize,
    bits: u32,
    data: Vec<C64>,
}

impl Codebook {
    pub fn new(dim: usize, entries: &[ComplexVector]) -> Result<Self, CodebookError> {
        let mut data = Vec::with_capacity(dim * entries.len());
        for e in entries {
            if e.dim() != dim {
                return Err(CodebookError::DimMismatch { expected: dim, got: e.dim() });
            }
            data.extend_from_slice(e);
        }
        Self::from_flat(dim, data)
    }

    pub fn from_flat(dim: usize, data: Vec<C64>) -> Result<Self, CodebookError> {
        if dim == 0 {
            return Err(CodebookError::DimMismatch { expected: 1, got: 0 });
        }
        if data.len() % dim != 0 {
            return Err(CodebookError::Format(format!("{} values do not split into rows of {dim}", data.len())));
        }
        let size = data.len() / dim;
        if size == 0 || !size.is_power_of_two() {
            return Err(CodebookError::NotPowerOfTwo(size));
        }
        for row in data.chunks_exact(dim) {
            let n = norm_sqr(row).sqrt();
            if !((n - 1.0).abs() <= UNIT_NORM_TOL) {
                return Err(CodebookError::NotUnitNorm(n));
            }
        }
        Ok(Self { dim, bits: size.trailing_zeros(), data })
    }

    pub fn len(&self) -> usize {
        self.data.len() / self.dim
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    pub fn entry(&self, i: usize) -> &[C64] {
        &self.data[i * self.dim..(i + 1) * self.dim]
    }

    pub fn entries(&self) -> impl ExactSizeIterator<Item = &[C64]> + '_ {
        self.data.chunks_exact(self.dim)
    }

    pub fn as_flat(&self) -> &[C64] {
        &self.data
    }

    /// The first `2^bits` entries.
    pub fn prefix(&self, bits: u32) -> Result<Self, CodebookError> {
        if bits > self.bits {
            return Err(CodebookError::CapExceeded { bits, cap: self.bits });
        }
        Ok(Self { dim: self.dim, bits, data: self.data[..(self.dim << bits)].to_vec() })
    }

    /// Minimum pairwise chordal distance `sqrt(1 - |c_i^H c_j|^2)`.
    pub fn min_chordal_distance(&self) -> f64 {
        min_chordal_distance(&self.data, self.dim)
    }

    pub fn write_to<W: Write>(&self, mut w: W) -> Result<(), CodebookError> {
        w.write_all(MAGIC)?;
        w.write_all(&FORMAT_VERSION.to_le_bytes())?;
        w.write_all(&(self.dim as u32).to_le_bytes())?;
        w.write_all(&(self.len() as u32).to_le_bytes())?;
        for c in &self.data {
            w.write_all(&c.re.to_le_bytes())?;
            w.write_all(&c.im.to_le_bytes())?;
        }
        w.flush()?;
        Ok(())
    }

    pub fn read_from<R: Read>(mut r: R) -> Result<Self, CodebookError> {
        let mut magic = [0u8; 4];
        r.read_exact(&mut magic).map_err(truncated)?;
        if &magic != MAGIC {
            return Err(CodebookError::Format("bad magic".into()));
        }
        let version = read_u32(&mut r)?;
        if version != FORMAT_VERSION {
            return Err(CodebookError::Format(format!("unsupported version {version}")));
        }
        let dim = read_u32(&mut r)? as usize;
        let size = read_u32(&mut r)? as usize;
        if dim == 0 || size == 0 || !size.is_power_of_two() || size > 1 << FLAT_BITS_CAP {
            return Err(CodebookError::Format(format!("invalid header dim={dim} size={size}")));
        }
        let mut buf = vec![0u8; dim * size * 16];
        r.read_exact(&mut buf).map_err(truncated)?;
        let data = buf
            .chunks_exact(16)
            .map(|b| {
                let re = f64::from_le_bytes(b[..8].try_into().unwrap());
                let im = f64::from_le_bytes(b[8..].try_into().unwrap());
                C64::new(re, im)
            })
            .collect();
        let mut extra = [0u8; 1];
        if r.read(&mut extra)? != 0 {
            return Err(CodebookError::Format("trailing bytes".into()));
        }
        Self::from_flat(dim, data)
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<(), CodebookError> {
        self.write_to(BufWriter::new(File::create(path)?))
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self, CodebookError> {
        Self::read_from(BufReader::new(File::open(path)?))
    }
}

fn read_u32<R: Read>(r: &mut R) -> Result<u32, CodebookError> {
    let mut b = [0u8; 4];
    r.read_exact(&mut b).map_err(truncated)?;
    Ok(u32::from_le_bytes(b))
}

fn truncated(e: io::Error) -> CodebookError {
    if e.kind() == io::ErrorKind::UnexpectedEof {
        CodebookError::Format("truncated file".into())
    } else {
        CodebookError::Io(e)
    }
}

/// `|y^H f|^2` for one stored row.
#[inline(always)]
fn gain(y: &[C64], f: &[C64]) -> f64 {
    let (mut re, mut im) = (0.0, 0.0);
    for (a, b) in y.iter().zip(f) {
        re += a.re * b.re + a.im * b.im;
        im += a.re * b.im - a.im * b.re;
    }
    re * re + im * im
}

/// Weighted argmax over rows, lowest index on ties.
fn argmax_rows(y: &[C64], data: &[C64], weights: Option<&[f64]>) -> (usize, f64) {
    let dim = y.len();
    let mut best = (0usize, f64::NEG_INFINITY);
    for (i, row) in data.chunks_exact(dim).enumerate() {
        let mut g = gain(y, row);
        if let Some(w) = weights {
            g *= w[i];
        }
        if g > best.1 {
            best = (i, g);
        }
    }
    best
}

fn min_chordal_distance(data: &[C64], dim: usize) -> f64 {
    let n = data.len() / dim;
    let mut max_overlap: f64 = 0.0;
    for i in 0..n {
        let ci = &data[i * dim..(i + 1) * dim];
        for j in (i + 1)..n {
            max_overlap = max_overlap.max(gain(ci, &data[j * dim..(j + 1) * dim]));
        }
    }
    if n < 2 {
        return 1.0;
    }
    (1.0 - max_overlap.min(1.0)).max(0.0).sqrt()
}

impl Quantizer for Codebook {
    fn dim(&self) -> usize {
        self.dim
    }

    fn bits(&self) -> u32 {
        self.bits
    }

    fn search(&self, v: &[C64]) -> (u64, f64) {
        let (i, g) = argmax_rows(v, &self.data, None);
        (i as u64, g)
    }

    fn codeword(&self, index: u64) -> Result<ComplexVector, CodebookError> {
        if index >= self.len() as u64 {
            return Err(CodebookError::IndexOutOfRange { index, size: self.len() as u64 });
        }
        Ok(ComplexVector(self.entry(index as usize).to_vec()))
    }
}

fn check_bits(bits: u32) -> Result<(), CodebookError> {
    if bits > FLAT_BITS_CAP {
        return Err(CodebookError::CapExceeded { bits, cap: FLAT_BITS_CAP });
    }
    Ok(())
}

fn random_unit_rows<R: Rng + ?Sized>(dim: usize, size: usize, rng: &mut R) -> Vec<C64> {
    let mut data = Vec::with_capacity(dim * size);
    for _ in 0..size {
        let start = data.len();
        loop {
            data.extend((0..dim).map(|_| complex_gaussian(rng)));
            let n = norm_sqr(&data[start..]).sqrt();
            if n > 1e-150 {
                data[start..].iter_mut().for_each(|x| *x /= n);
                break;
            }
            data.truncate(start);
        }
    }
    data
}

/// `2^bits` i.i.d. isotropic unit vectors.
pub fn rvq_codebook<R: Rng + ?Sized>(dim: usize, bits: u32, rng: &mut R) -> Result<Codebook, CodebookError> {
    check_bits(bits)?;
    if dim == 0 {
        return Err(CodebookError::DimMismatch { expected: 1, got: 0 });
    }
    Ok(Codebook { dim, bits, data: random_unit_rows(dim, 1usize << bits, rng) })
}

/// Best-of-restarts random initialization refined by projected repulsion.
///
/// Restarts draw exactly as [`rvq_codebook`] does, so the first candidate is
/// the random codebook of the same stream; repulsion steps are kept only when
/// they do not shrink the minimum distance.
pub fn line_packing_codebook<R: Rng + ?Sized>(
    dim: usize,
    bits: u32,
    rng: &mut R,
    iters: usize,
) -> Result<Codebook, CodebookError> {
    check_bits(bits)?;
    let size = 1usize << bits;
    if size > REPULSION_MAX_SIZE {
        return rvq_codebook(dim, bits, rng);
    }
    let mut best = rvq_codebook(dim, bits, rng)?;
    let mut best_d = best.min_chordal_distance();
    for _ in 1..PACKING_RESTARTS {
        let cand = rvq_codebook(dim, bits, rng)?;
        let d = cand.min_chordal_distance();
        if d > best_d {
            best = cand;
            best_d = d;
        }
    }
    if dim > 1 && size > 1 {
        repel(&mut best.data, dim, iters, None);
    }
    Ok(best)
}

/// Repulsion on `sum_{i<j} |c_i^H c_j|^{2p}`; returns the per-iteration min distance.
fn repel(data: &mut [C64], dim: usize, iters: usize, mut trace: Option<&mut Vec<f64>>) {
    let n = data.len() / dim;
    let mut dmin = min_chordal_distance(data, dim);
    let mut step = PACKING_STEP;
    let mut force = vec![C64::new(0.0, 0.0); data.len()];
    let mut trial = data.to_vec();
    for _ in 0..iters {
        force.iter_mut().for_each(|f| *f = C64::new(0.0, 0.0));
        for i in 0..n {
            let ci = &data[i * dim..(i + 1) * dim];
            for j in 0..n {
                if i == j {
                    continue;
                }
                let cj = &data[j * dim..(j + 1) * dim];
                // g = c_j^H c_i
                let g: C64 = cj.iter().zip(ci).map(|(a, b)| a.conj() * b).sum();
                let w = g * (g.norm_sqr().powi(PACKING_POWER - 1) * PACKING_POWER as f64);
                for k in 0..dim {
                    force[i * dim + k] += cj[k] * w;
                }
            }
        }
        // tangent projection, then scale so the largest move is `step`
        let mut fmax: f64 = 0.0;
        for i in 0..n {
            let ci = &data[i * dim..(i + 1) * dim];
            let fi = &mut force[i * dim..(i + 1) * dim];
            let proj: C64 = ci.iter().zip(fi.iter()).map(|(a, b)| a.conj() * b).sum();
            for k in 0..dim {
                fi[k] -= ci[k] * proj;
            }
            fmax = fmax.max(norm_sqr(fi).sqrt());
        }
        if fmax > 0.0 {
            let scale = step / fmax;
            for i in 0..n {
                let row = &mut trial[i * dim..(i + 1) * dim];
                for k in 0..dim {
                    row[k] = data[i * dim + k] - force[i * dim + k] * scale;
                }
                let nr = norm_sqr(row).sqrt();
                row.iter_mut().for_each(|x| *x /= nr);
            }
            let d = min_chordal_distance(&trial, dim);
            if d >= dmin {
                data.copy_from_slice(&trial);
                dmin = d;
            }
        }
        if let Some(t) = trace.as_deref_mut() {
            t.push(dmin);
        }
        step *= PACKING_DECAY;
    }
}

/// `R^{1/2}`-rotated view of a shared base codebook.
#[derive(Debug, Clone)]
pub struct RotatedCodebook {
    base: Arc<Codebook>,
    s_adj: ComplexMatrix,
    s: ComplexMatrix,
    inv_norm_sqr: Vec<f64>,
}

impl RotatedCodebook {
    pub fn new(r: &ComplexMatrix, base: Arc<Codebook>) -> Result<Self, CodebookError> {
        let s = hermitian_sqrt(r)?;
        Self::from_sqrt(s, base)
    }

    pub fn from_sqrt(s: ComplexMatrix, base: Arc<Codebook>) -> Result<Self, CodebookError> {
        if s.rows() != base.dim() {
            return Err(CodebookError::DimMismatch { expected: base.dim(), got: s.rows() });
        }
        let dim = base.dim();
        let mut inv_norm_sqr = Vec::with_capacity(base.len());
        let mut tmp = vec![C64::new(0.0, 0.0); dim];
        for (i, f) in base.entries().enumerate() {
            for (r, t) in tmp.iter_mut().enumerate() {
                *t = s.row(r).iter().zip(f).map(|(a, b)| a * b).sum();
            }
            let n2 = norm_sqr(&tmp);
            if n2.sqrt() <= NULL_SPACE_TOL {
                return Err(CodebookError::NullSpaceHit(i));
            }
            inv_norm_sqr.push(1.0 / n2);
        }
        Ok(Self { base, s_adj: s.adjoint(), s, inv_norm_sqr })
    }

    pub fn base(&self) -> &Arc<Codebook> {
        &self.base
    }

    pub fn materialize(&self) -> Codebook {
        let mut data = Vec::with_capacity(self.base.as_flat().len());
        for (i, f) in self.base.entries().enumerate() {
            let c = self.s.mul_vec(f).expect("dims checked");
            let inv = self.inv_norm_sqr[i].sqrt();
            data.extend(c.iter().map(|x| x * inv));
        }
        Codebook { dim: self.base.dim(), bits: self.base.bits(), data }
    }
}

impl Quantizer for RotatedCodebook {
    fn dim(&self) -> usize {
        self.base.dim()
    }

    fn bits(&self) -> u32 {
        self.base.bits()
    }

    fn search(&self, v: &[C64]) -> (u64, f64) {
        let y = self.s_adj.mul_vec(v).expect("dims checked");
        let (i, g) = argmax_rows(&y, self.base.as_flat(), Some(&self.inv_norm_sqr));
        (i as u64, g)
    }

    fn codeword(&self, index: u64) -> Result<ComplexVector, CodebookError> {
        let f = self.base.codeword(index)?;
        let c = self.s.mul_vec(&f)?;
        Ok(c.scaled(C64::new(self.inv_norm_sqr[index as usize].sqrt(), 0.0)))
    }
}

/// `c_i = R^{1/2} f_i / ||R^{1/2} f_i||`, materialized.
pub fn statistic_codebook(r: &ComplexMatrix, base: &Codebook) -> Result<Codebook, CodebookError> {
    Ok(RotatedCodebook::new(r, Arc::new(base.clone()))?.materialize())
}

/// Independent quantization of disjoint sub-vectors.
///
/// The index is mixed radix with part 0 most significant; the reconstruction
/// scatters each part's codeword into its positions and scales by `1/sqrt(M)`.
#[derive(Clone)]
pub struct ProductCodebook {
    parts: Vec<Arc<dyn Quantizer>>,
    positions: Vec<Vec<usize>>,
    dim: usize,
}

impl std::fmt::Debug for ProductCodebook {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("ProductCodebook")
            .field("dim", &self.dim)
            .field("bits", &self.bits())
            .field("positions", &self.positions)
            .finish()
    }
}

impl ProductCodebook {
    pub fn new(parts: Vec<Arc<dyn Quantizer>>, positions: Vec<Vec<usize>>) -> Result<Self, CodebookError> {
        if parts.is_empty() || parts.len() != positions.len() {
            return Err(CodebookError::DimMismatch { expected: parts.len(), got: positions.len() });
        }
        let dim: usize = positions.iter().map(Vec::len).sum();
        let mut seen = vec![false; dim];
        for (p, pos) in parts.iter().zip(&positions) {
            if p.dim() != pos.len() {
                return Err(CodebookError::DimMismatch { expected: pos.len(), got: p.dim() });
            }
            for &i in pos {
                if i >= dim || std::mem::replace(&mut seen[i], true) {
                    return Err(CodebookError::Format(format!("positions do not tile 0..{dim}")));
                }
            }
        }
        let bits: u32 = parts.iter().map(|p| p.bits()).sum();
        if bits >= 64 {
            return Err(CodebookError::CapExceeded { bits, cap: 63 });
        }
        Ok(Self { parts, positions, dim })
    }

    /// Contiguous equal blocks.
    pub fn contiguous(parts: Vec<Arc<dyn Quantizer>>) -> Result<Self, CodebookError> {
        let mut off = 0;
        let positions = parts
            .iter()
            .map(|p| {
                let v: Vec<usize> = (off..off + p.dim()).collect();
                off += p.dim();
                v
            })
            .collect();
        Self::new(parts, positions)
    }

    pub fn parts(&self) -> &[Arc<dyn Quantizer>] {
        &self.parts
    }
}

impl Quantizer for ProductCodebook {
    fn dim(&self) -> usize {
        self.dim
    }

    fn bits(&self) -> u32 {
        self.parts.iter().map(|p| p.bits()).sum()
    }

    /// Maximizes `sum_m |v_m^H c_m|^2`; the returned value is that sum over `M`,
    /// i.e. `|v^H c|^2`'s counterpart for the coherent-phase reconstruction.
    fn search(&self, v: &[C64]) -> (u64, f64) {
        let mut index = 0u64;
        let mut total = 0.0;
        let mut sub = Vec::new();
        for (p, pos) in self.parts.iter().zip(&self.positions) {
            sub.clear();
            sub.extend(pos.iter().map(|&i| v[i]));
            let (i, g) = p.search(&sub);
            index = (index << p.bits()) | i;
            total += g;
        }
        (index, total / self.parts.len() as f64)
    }

    fn codeword(&self, index: u64) -> Result<ComplexVector, CodebookError> {
        if index >= self.size() {
            return Err(CodebookError::IndexOutOfRange { index, size: self.size() });
        }
        let scale = 1.0 / (self.parts.len() as f64).sqrt();
        let mut out = ComplexVector::zeros(self.dim);
        let mut shift = self.bits();
        for (p, pos) in self.parts.iter().zip(&self.positions) {
            shift -= p.bits();
            let sub = (index >> shift) & ((1u64 << p.bits()) - 1);
            let c = p.codeword(sub)?;
            for (&i, &x) in pos.iter().zip(c.iter()) {
                out[i] = x * scale;
            }
        }
        Ok(out)
    }
}

/// Best codeword for a unit-norm `v`.
pub fn quantize<Q: Quantizer + ?Sized>(v: &[C64], c: &Q) -> Result<(u64, ComplexVector), CodebookError> {
    if v.len() != c.dim() {
        return Err(CodebookError::DimMismatch { expected: c.dim(), got: v.len() });
    }
    let n = norm_sqr(v).sqrt();
    if !((n - 1.0).abs() <= UNIT_NORM_TOL) {
        return Err(CodebookError::NotUnitNorm(n));
    }
    let (i, _) = c.search(v);
    Ok((i, c.codeword(i)?))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::channel::{complex_gaussian_vector, exponential_correlation, ExponentialSpec};
    use crate::mathkit::{dot, hermitian_eigen};
    use crate::rng::stream;
    use proptest::prelude::{any, prop_assert, proptest, ProptestConfig};

    fn unit(rng: &mut impl Rng, n: usize) -> ComplexVector {
        complex_gaussian_vector(rng, n).normalized().unwrap()
    }

    fn scan(v: &[C64], cb: &Codebook) -> usize {
        let mut best = 0;
        let mut bg = -1.0;
        for i in 0..cb.len() {
            let g = dot(v, cb.entry(i)).norm_sqr();
            if g > bg {
                bg = g;
                best = i;
            }
        }
        best
    }

    #[test]
    fn rvq_basics() {
        let cb = rvq_codebook(5, 0, &mut stream(1, &[])).unwrap();
        assert_eq!(cb.len(), 1);
        let a = rvq_codebook(8, 10, &mut stream(7, &[])).unwrap();
        let b = rvq_codebook(8, 10, &mut stream(7, &[])).unwrap();
        assert_eq!(a, b);
        assert!(matches!(rvq_codebook(4, 21, &mut stream(1, &[])), Err(CodebookError::CapExceeded { .. })));
    }

    #[test]
    fn rvq_distortion_law() {
        // in C^2 each |v^H c|^2 is uniform, so the best of N misses by 1/(N+1) on average
        let cb = rvq_codebook(2, 12, &mut stream(11, &[])).unwrap();
        let mut rng = stream(12, &[]);
        let n = 4000;
        let mean: f64 = (0..n).map(|_| cb.search(&unit(&mut rng, 2)).1).sum::<f64>() / n as f64;
        let nominal = 1.0 / 4096.0;
        assert!(((1.0 - mean) - nominal).abs() < 0.05 * nominal, "{}", 1.0 - mean);
    }

    #[test]
    fn packing_one_dimension() {
        let cb = line_packing_codebook(1, 3, &mut stream(2, &[]), 50).unwrap();
        assert!(cb.entries().all(|e| (e[0].norm() - 1.0).abs() < 1e-12));
        assert!(cb.min_chordal_distance() < 1e-6);
    }

    #[test]
    fn packing_two_lines_orthogonal() {
        let cb = line_packing_codebook(2, 1, &mut stream(3, &[]), PACKING_ITERS).unwrap();
        assert!((cb.min_chordal_distance() - 1.0).abs() < 1e-3, "{}", cb.min_chordal_distance());
    }

    #[test]
    fn packing_four_lines_near_simplex() {
        let cb = line_packing_codebook(2, 2, &mut stream(4, &[]), PACKING_ITERS).unwrap();
        let d = cb.min_chordal_distance();
        assert!(d >= (2.0f64 / 3.0).sqrt() - 0.02, "{d}");
        // a long random search does not do better than the simplex bound either
        let mut rng = stream(5, &[]);
        let best_random = (0..20_000)
            .map(|_| rvq_codebook(2, 2, &mut rng).unwrap().min_chordal_distance())
            .fold(0.0, f64::max);
        assert!(best_random <= (2.0f64 / 3.0).sqrt() + 1e-9);
        assert!(d >= best_random - 0.02);
    }

    #[test]
    fn packing_beats_random_with_same_seed() {
        for &(dim, bits) in &[(4, 4), (8, 6), (3, 5)] {
            let p = line_packing_codebook(dim, bits, &mut stream(9, &[dim as u64]), 60).unwrap();
            let r = rvq_codebook(dim, bits, &mut stream(9, &[dim as u64])).unwrap();
            assert!(p.min_chordal_distance() >= r.min_chordal_distance());
        }
    }

    #[test]
    fn repulsion_is_monotone() {
        let mut cb = rvq_codebook(4, 5, &mut stream(13, &[])).unwrap();
        let mut trace = Vec::new();
        repel(&mut cb.data, 4, 80, Some(&mut trace));
        assert!(trace.windows(2).all(|w| w[1] >= w[0]));
        assert!(trace.last().unwrap() > &0.0);
    }

    #[test]
    fn statistic_identity_is_base() {
        let base = rvq_codebook(4, 4, &mut stream(6, &[])).unwrap();
        let out = statistic_codebook(&ComplexMatrix::identity(4), &base).unwrap();
        for (a, b) in out.as_flat().iter().zip(base.as_flat()) {
            assert!((a - b).norm() < 1e-12);
        }
    }

    #[test]
    fn statistic_hand_example() {
        let s = std::f64::consts::FRAC_1_SQRT_2;
        let base = Codebook::new(2, &[ComplexVector::from_real(&[s, s])]).unwrap();
        let out = statistic_codebook(&ComplexMatrix::diag(&[4.0, 1.0]), &base).unwrap();
        let want = [2.0 / 5f64.sqrt(), 1.0 / 5f64.sqrt()];
        assert!((out.entry(0)[0].re - want[0]).abs() < 1e-12);
        assert!((out.entry(0)[1].re - want[1]).abs() < 1e-12);
    }

    #[test]
    fn statistic_rotation_aligns_with_dominant_direction() {
        let r = exponential_correlation(&ExponentialSpec::new(4, 0.9, 0.0).unwrap());
        let u = hermitian_eigen(&r).unwrap().vectors.column(0);
        let base = rvq_codebook(4, 4, &mut stream(8, &[])).unwrap();
        let out = statistic_codebook(&r, &base).unwrap();
        let avg = |cb: &Codebook| cb.entries().map(|c| dot(&u, c).norm_sqr()).sum::<f64>() / 16.0;
        assert!(out.entries().all(|c| (norm_sqr(c) - 1.0).abs() < 1e-9));
        assert!(avg(&out) > avg(&base));
    }

    #[test]
    fn null_space_is_reported() {
        let base = Codebook::new(2, &[ComplexVector::from_real(&[0.0, 1.0]), ComplexVector::from_real(&[1.0, 0.0])]).unwrap();
        assert!(matches!(
            statistic_codebook(&ComplexMatrix::diag(&[1.0, 0.0]), &base),
            Err(CodebookError::NullSpaceHit(0))
        ));
    }

    #[test]
    fn rotated_search_matches_materialized_scan() {
        let r = exponential_correlation(&ExponentialSpec::new(6, 0.7, 0.4).unwrap());
        let base = Arc::new(rvq_codebook(6, 8, &mut stream(14, &[])).unwrap());
        let rot = RotatedCodebook::new(&r, base).unwrap();
        let mat = rot.materialize();
        let mut rng = stream(15, &[]);
        for _ in 0..200 {
            let v = unit(&mut rng, 6);
            let (i, g) = rot.search(&v);
            assert_eq!(i as usize, scan(&v, &mat));
            assert!((g - dot(&v, mat.entry(i as usize)).norm_sqr()).abs() < 1e-10);
            let c = rot.codeword(i).unwrap();
            assert!(c.iter().zip(mat.entry(i as usize)).all(|(a, b)| (a - b).norm() < 1e-12));
        }
    }

    #[test]
    fn quantize_examples() {
        let e = Codebook::new(2, &[ComplexVector::from_real(&[1.0, 0.0]), ComplexVector::from_real(&[0.0, 1.0])]).unwrap();
        let (i, c) = quantize(&ComplexVector::from_real(&[0.9f64.sqrt(), 0.1f64.sqrt()]), &e).unwrap();
        assert_eq!(i, 0);
        assert_eq!(c, ComplexVector::from_real(&[1.0, 0.0]));
        let cb = rvq_codebook(4, 8, &mut stream(16, &[])).unwrap();
        let v = ComplexVector(cb.entry(77).to_vec());
        let (i, c) = quantize(&v, &cb).unwrap();
        assert_eq!(i, 77);
        assert!((1.0 - dot(&v, &c).norm_sqr()).abs() < 1e-12);
        assert!(matches!(quantize(&v[..3], &cb), Err(CodebookError::DimMismatch { .. })));
        assert!(matches!(quantize(&v.scaled(C64::new(2.0, 0.0)), &cb), Err(CodebookError::NotUnitNorm(_))));
    }

    #[test]
    fn quantize_matches_linear_scan() {
        let cb = rvq_codebook(8, 8, &mut stream(17, &[])).unwrap();
        let mut rng = stream(18, &[]);
        for _ in 0..500 {
            let v = unit(&mut rng, 8);
            assert_eq!(quantize(&v, &cb).unwrap().0 as usize, scan(&v, &cb));
        }
    }

    #[test]
    fn ties_go_to_lowest_index() {
        let s = std::f64::consts::FRAC_1_SQRT_2;
        let cb = Codebook::new(2, &[ComplexVector::from_real(&[1.0, 0.0]), ComplexVector::from_real(&[0.0, 1.0])]).unwrap();
        assert_eq!(cb.search(&[C64::new(s, 0.0), C64::new(s, 0.0)]).0, 0);
    }

    #[test]
    fn product_equals_flat_product_set() {
        let a: Arc<dyn Quantizer> = Arc::new(rvq_codebook(3, 4, &mut stream(19, &[])).unwrap());
        let b: Arc<dyn Quantizer> = Arc::new(rvq_codebook(3, 4, &mut stream(20, &[])).unwrap());
        let prod = ProductCodebook::new(vec![a, b], vec![vec![0, 2, 4], vec![1, 3, 5]]).unwrap();
        assert_eq!(prod.bits(), 8);
        let mut rng = stream(21, &[]);
        for _ in 0..300 {
            let v = unit(&mut rng, 6);
            // exhaustive search over the product set under the per-part objective
            let (pi, pg) = prod.search(&v);
            let best = (0..256u64)
                .map(|i| {
                    let c = prod.codeword(i).unwrap();
                    let g0 = 2.0 * dot(&[v[0], v[2], v[4]], &[c[0], c[2], c[4]]).norm_sqr();
                    let g1 = 2.0 * dot(&[v[1], v[3], v[5]], &[c[1], c[3], c[5]]).norm_sqr();
                    (i, g0 + g1)
                })
                .fold((0, -1.0), |acc, x| if x.1 > acc.1 { x } else { acc });
            assert_eq!(pi, best.0);
            assert!((2.0 * pg - best.1).abs() < 2e-9);
        }
    }

    #[test]
    fn file_round_trip_and_errors() {
        let cb = rvq_codebook(3, 5, &mut stream(22, &[])).unwrap();
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("cb.bin");
        cb.save(&path).unwrap();
        let bytes = std::fs::read(&path).unwrap();
        assert_eq!(&bytes[..4], b"AGBC");
        assert_eq!(u32::from_le_bytes(bytes[4..8].try_into().unwrap()), 1);
        assert_eq!(u32::from_le_bytes(bytes[8..12].try_into().unwrap()), 3);
        assert_eq!(u32::from_le_bytes(bytes[12..16].try_into().unwrap()), 32);
        assert_eq!(bytes.len(), 16 + 32 * 3 * 16);
        assert_eq!(f64::from_le_bytes(bytes[16..24].try_into().unwrap()), cb.entry(0)[0].re);
        assert_eq!(Codebook::load(&path).unwrap(), cb);
        assert!(matches!(Codebook::read_from(&bytes[..40]), Err(CodebookError::Format(_))));
        let mut bad = bytes.clone();
        bad[0] = b'X';
        assert!(matches!(Codebook::read_from(&bad[..]), Err(CodebookError::Format(_))));
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(64))]

        #[test]
        fn quantize_phase_invariant(seed in any::<u64>(), phase in -3.2f64..3.2) {
            let cb = rvq_codebook(4, 6, &mut stream(seed, &[1])).unwrap();
            let v = unit(&mut stream(seed, &[2]), 4);
            let rotated = v.scaled(C64::from_polar(1.0, phase));
            let (i, g) = cb.search(&v);
            let (j, h) = cb.search(&rotated);
            // a rotation can only swap near-exact ties
            prop_assert!(i == j || (g - h).abs() < 1e-12);
        }

        #[test]
        fn superset_never_hurts(seed in any::<u64>()) {
            let big = rvq_codebook(5, 7, &mut stream(seed, &[3])).unwrap();
            let small = big.prefix(6).unwrap();
            let mut rng = stream(seed, &[4]);
            for _ in 0..20 {
                let v = unit(&mut rng, 5);
                prop_assert!(1.0 - big.search(&v).1 <= 1.0 - small.search(&v).1 + 1e-15);
            }
        }
    }
}
