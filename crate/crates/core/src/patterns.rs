//! Antenna group patterns and pattern-set selection.
//!
//! A pattern partitions the `N_t` antennas into `N_g` groups of `kappa`
//! antennas. The header of a feedback packet names one pattern out of a set
//! of `2^{B_p}`; the set is chosen offline by screening all patterns on the
//! quasi-correlation norm `||R^{1/2} E||_F` and then packing the survivors
//! for maximum pairwise correlation-matrix distance. Large arrays are first
//! split into congruent sub-arrays whose pattern sets are combined.

use std::collections::HashSet;
use std::fmt;
use std::fs;
use std::io::{BufRead, BufReader, Write};
use std::path::Path;

use rand::seq::SliceRandom;
use rand::Rng;

use crate::mathkit::{hermitian_sqrt, ComplexMatrix, MathError, C64};

pub const ENUMERATION_CAP: u128 = 1_000_000;
pub const SUBSET_CAP: u128 = 100_000;

#[derive(Debug, thiserror::Error)]
pub enum PatternError {
    #[error("{n_t} antennas do not split into {n_g} equal groups")]
    NonDivisible { n_t: usize, n_g: usize },
    #[error("{0} patterns exceed the enumeration cap; partition the array first")]
    CapExceeded(u128),
    #[error("pattern count overflows")]
    Overflow,
    #[error("invalid pattern: {0}")]
    Invalid(String),
    #[error("header needs {need} patterns but only {have} are available")]
    InfeasibleHeader { need: usize, have: usize },
    #[error("pool size {j} is smaller than the set size {need}")]
    PoolTooSmall { j: usize, need: usize },
    #[error("matrix has zero Frobenius norm")]
    ZeroMatrix,
    #[error("shape mismatch: {0}")]
    SizeMismatch(String),
    #[error("malformed pattern cache: {0}")]
    Cache(String),
    #[error(transparent)]
    Math(#[from] MathError),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

/// A partition of `0..n_t` into equal groups. Group order is significant (it
/// fixes the order of the reduced vector); member lists are kept sorted.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct GroupPattern {
    n_t: usize,
    groups: Vec<Vec<usize>>,
}

impl GroupPattern {
    pub fn new(n_t: usize, mut groups: Vec<Vec<usize>>) -> Result<Self, PatternError> {
        let n_g = groups.len();
        if n_g == 0 || n_t % n_g != 0 {
            return Err(PatternError::NonDivisible { n_t, n_g });
        }
        let kappa = n_t / n_g;
        let mut seen = vec![false; n_t];
        for g in &mut groups {
            if g.len() != kappa {
                return Err(PatternError::Invalid(format!("group of size {} (expected {kappa})", g.len())));
            }
            g.sort_unstable();
            for &a in g.iter() {
                if a >= n_t || std::mem::replace(&mut seen[a], true) {
                    return Err(PatternError::Invalid(format!("antenna {a} out of range or repeated")));
                }
            }
        }
        Ok(Self { n_t, groups })
    }

    /// Consecutive antennas grouped together.
    pub fn adjacent(n_t: usize, n_g: usize) -> Result<Self, PatternError> {
        if n_g == 0 || n_t % n_g != 0 {
            return Err(PatternError::NonDivisible { n_t, n_g });
        }
        let k = n_t / n_g;
        Self::new(n_t, (0..n_g).map(|g| (g * k..(g + 1) * k).collect()).collect())
    }

    pub fn n_t(&self) -> usize {
        self.n_t
    }

    pub fn n_g(&self) -> usize {
        self.groups.len()
    }

    pub fn kappa(&self) -> usize {
        self.n_t / self.groups.len()
    }

    pub fn groups(&self) -> &[Vec<usize>] {
        &self.groups
    }

    /// Lowest antenna of every group.
    pub fn representatives(&self) -> Vec<usize> {
        self.groups.iter().map(|g| g[0]).collect()
    }

    /// Groups sorted by smallest member; equal partitions compare equal.
    pub fn canonical(&self) -> Self {
        let mut groups = self.groups.clone();
        groups.sort_unstable_by_key(|g| g[0]);
        Self { n_t: self.n_t, groups }
    }

    pub fn same_partition(&self, other: &Self) -> bool {
        self.canonical() == other.canonical()
    }

    /// Relabel antennas through `map` (local index -> global index).
    pub fn lift(&self, map: &[usize], n_t: usize) -> Result<Self, PatternError> {
        if map.len() != self.n_t {
            return Err(PatternError::SizeMismatch(format!("map of {} for {} antennas", map.len(), self.n_t)));
        }
        let groups = self.groups.iter().map(|g| g.iter().map(|&a| map[a]).collect()).collect();
        Ok(Self { n_t, groups })
    }

    /// `E = kappa G^T`, accumulated column sums of `s` per group (`s E`).
    pub fn right_expand(&self, s: &ComplexMatrix) -> ComplexMatrix {
        let mut out = ComplexMatrix::zeros(s.rows(), self.n_g());
        for r in 0..s.rows() {
            let row = s.row(r);
            for (g, members) in self.groups.iter().enumerate() {
                out[(r, g)] = members.iter().map(|&a| row[a]).sum();
            }
        }
        out
    }
}

impl fmt::Display for GroupPattern {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for (i, g) in self.groups.iter().enumerate() {
            if i > 0 {
                f.write_str("|")?;
            }
            for (j, a) in g.iter().enumerate() {
                if j > 0 {
                    f.write_str(" ")?;
                }
                write!(f, "{a}")?;
            }
        }
        Ok(())
    }
}

impl std::str::FromStr for GroupPattern {
    type Err = PatternError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let groups = s
            .trim()
            .split('|')
            .map(|g| {
                g.split_whitespace()
                    .map(|t| t.parse::<usize>().map_err(|e| PatternError::Invalid(format!("{t:?}: {e}"))))
                    .collect::<Result<Vec<_>, _>>()
            })
            .collect::<Result<Vec<_>, _>>()?;
        let n_t = groups.iter().map(Vec::len).sum();
        Self::new(n_t, groups)
    }
}

/// `N_g x N_t` averaging map: `1/kappa` on each group's antennas.
pub fn grouping_matrix(p: &GroupPattern) -> ComplexMatrix {
    let w = C64::new(1.0 / p.kappa() as f64, 0.0);
    let mut g = ComplexMatrix::zeros(p.n_g(), p.n_t());
    for (row, members) in p.groups.iter().enumerate() {
        for &a in members {
            g[(row, a)] = w;
        }
    }
    g
}

/// `N_t x N_g` copy map, `kappa G^T`.
pub fn expansion_matrix(p: &GroupPattern) -> ComplexMatrix {
    let mut e = ComplexMatrix::zeros(p.n_t(), p.n_g());
    for (col, members) in p.groups.iter().enumerate() {
        for &a in members {
            e[(a, col)] = C64::new(1.0, 0.0);
        }
    }
    e
}

fn binomial(n: u128, k: u128) -> Option<u128> {
    if k > n {
        return Some(0);
    }
    let k = k.min(n - k);
    let mut acc: u128 = 1;
    for i in 0..k {
        // exact at every step: acc * (n - i) is divisible by (i + 1)
        acc = acc.checked_mul(n - i)? / (i + 1);
    }
    Some(acc)
}

/// Number of unordered partitions of `n_t` antennas into `n_g` equal groups.
pub fn pattern_count(n_t: usize, n_g: usize) -> Result<u128, PatternError> {
    if n_g == 0 || n_t % n_g != 0 {
        return Err(PatternError::NonDivisible { n_t, n_g });
    }
    let k = (n_t / n_g) as u128;
    // fixing the smallest remaining antenna in each group removes the N_g! ordering
    let mut total: u128 = 1;
    let mut rem = n_t as u128;
    while rem > 0 {
        let c = binomial(rem - 1, k - 1).ok_or(PatternError::Overflow)?;
        total = total.checked_mul(c).ok_or(PatternError::Overflow)?;
        rem -= k;
    }
    Ok(total)
}

/// Every partition exactly once, in canonical lexicographic order.
pub fn enumerate_patterns(n_t: usize, n_g: usize) -> Result<Vec<GroupPattern>, PatternError> {
    let count = pattern_count(n_t, n_g)?;
    if count > ENUMERATION_CAP {
        return Err(PatternError::CapExceeded(count));
    }
    let kappa = n_t / n_g;
    let mut out = Vec::with_capacity(count as usize);
    let mut used = vec![false; n_t];
    let mut groups: Vec<Vec<usize>> = Vec::with_capacity(n_g);
    fill(n_t, kappa, &mut used, &mut groups, &mut out);
    Ok(out)
}

fn fill(
    n_t: usize,
    kappa: usize,
    used: &mut [bool],
    groups: &mut Vec<Vec<usize>>,
    out: &mut Vec<GroupPattern>,
) {
    let Some(first) = used.iter().position(|u| !u) else {
        out.push(GroupPattern { n_t, groups: groups.clone() });
        return;
    };
    used[first] = true;
    let free: Vec<usize> = (first + 1..n_t).filter(|&a| !used[a]).collect();
    let mut pick = Vec::with_capacity(kappa - 1);
    choose(&free, kappa - 1, 0, &mut pick, &mut |chosen| {
        let mut g = Vec::with_capacity(kappa);
        g.push(first);
        g.extend_from_slice(chosen);
        for &a in chosen {
            used[a] = true;
        }
        groups.push(g);
        fill(n_t, kappa, used, groups, out);
        groups.pop();
        for &a in chosen {
            used[a] = false;
        }
    });
    used[first] = false;
}

fn choose(pool: &[usize], k: usize, start: usize, pick: &mut Vec<usize>, visit: &mut dyn FnMut(&[usize])) {
    if pick.len() == k {
        visit(pick);
        return;
    }
    let need = k - pick.len();
    for i in start..=pool.len().saturating_sub(need) {
        if pool.len() < need {
            break;
        }
        pick.push(pool[i]);
        choose(pool, k, i + 1, pick, visit);
        pick.pop();
    }
}

/// `R^{1/2} E` for a precomputed square root.
pub fn quasi_correlation_matrix(sqrt_r: &ComplexMatrix, p: &GroupPattern) -> ComplexMatrix {
    p.right_expand(sqrt_r)
}

pub fn quasi_correlation_norm(r: &ComplexMatrix, p: &GroupPattern) -> Result<f64, PatternError> {
    let s = hermitian_sqrt(r)?;
    Ok(quasi_correlation_matrix(&s, p).frobenius_norm())
}

/// `1 - |tr(A^H B)| / (||A||_F ||B||_F)`.
pub fn correlation_matrix_distance(a: &ComplexMatrix, b: &ComplexMatrix) -> Result<f64, PatternError> {
    if a.rows() != b.rows() || a.cols() != b.cols() {
        return Err(PatternError::SizeMismatch(format!(
            "{}x{} vs {}x{}",
            a.rows(),
            a.cols(),
            b.rows(),
            b.cols()
        )));
    }
    let (na, nb) = (a.frobenius_norm(), b.frobenius_norm());
    if na == 0.0 || nb == 0.0 {
        return Err(PatternError::ZeroMatrix);
    }
    let tr: C64 = a.as_slice().iter().zip(b.as_slice()).map(|(x, y)| x.conj() * y).sum();
    Ok((1.0 - tr.norm() / (na * nb)).clamp(0.0, 1.0))
}

/// An ordered set of `2^{b_p}` distinct patterns.
#[derive(Debug, Clone, PartialEq)]
pub struct PatternSet {
    b_p: u32,
    patterns: Vec<GroupPattern>,
}

impl PatternSet {
    pub fn new(b_p: u32, patterns: Vec<GroupPattern>) -> Result<Self, PatternError> {
        if patterns.len() != 1usize << b_p {
            return Err(PatternError::SizeMismatch(format!("{} patterns for {b_p} header bits", patterns.len())));
        }
        let (n_t, n_g) = (patterns[0].n_t(), patterns[0].n_g());
        let mut seen = HashSet::new();
        for p in &patterns {
            if p.n_t() != n_t || p.n_g() != n_g {
                return Err(PatternError::SizeMismatch("patterns of different shapes".into()));
            }
            if !seen.insert(p.canonical()) {
                return Err(PatternError::Invalid(format!("duplicate pattern {p}")));
            }
        }
        Ok(Self { b_p, patterns })
    }

    pub fn b_p(&self) -> u32 {
        self.b_p
    }

    pub fn len(&self) -> usize {
        self.patterns.len()
    }

    pub fn is_empty(&self) -> bool {
        self.patterns.is_empty()
    }

    pub fn patterns(&self) -> &[GroupPattern] {
        &self.patterns
    }

    pub fn get(&self, i: usize) -> Option<&GroupPattern> {
        self.patterns.get(i)
    }

    pub fn n_t(&self) -> usize {
        self.patterns[0].n_t()
    }

    pub fn n_g(&self) -> usize {
        self.patterns[0].n_g()
    }

    /// Minimum pairwise correlation-matrix distance of the quasi-correlation matrices.
    pub fn min_distance(&self, sqrt_r: &ComplexMatrix) -> Result<f64, PatternError> {
        let q: Vec<_> = self.patterns.iter().map(|p| quasi_correlation_matrix(sqrt_r, p)).collect();
        let mut best: f64 = 1.0;
        for i in 0..q.len() {
            for j in i + 1..q.len() {
                best = best.min(correlation_matrix_distance(&q[i], &q[j])?);
            }
        }
        Ok(best)
    }

    pub fn write_cache(&self, path: impl AsRef<Path>, model_hash: u64) -> Result<(), PatternError> {
        let mut w = std::io::BufWriter::new(fs::File::create(path)?);
        writeln!(w, "n_t={} n_g={} b_p={} model={model_hash:016x}", self.n_t(), self.n_g(), self.b_p)?;
        for p in &self.patterns {
            writeln!(w, "{p}")?;
        }
        w.flush()?;
        Ok(())
    }

    /// Reads a cache file; `Ok(None)` when it was written for different parameters.
    pub fn read_cache(
        path: impl AsRef<Path>,
        n_t: usize,
        n_g: usize,
        b_p: u32,
        model_hash: u64,
    ) -> Result<Option<Self>, PatternError> {
        let mut lines = BufReader::new(fs::File::open(path)?).lines();
        let header = lines.next().ok_or_else(|| PatternError::Cache("empty file".into()))??;
        let want = format!("n_t={n_t} n_g={n_g} b_p={b_p} model={model_hash:016x}");
        let fields: Vec<&str> = header.split_whitespace().collect();
        if fields.len() != 4 || !fields.iter().all(|f| f.contains('=')) {
            return Err(PatternError::Cache(format!("bad header {header:?}")));
        }
        if header.trim() != want {
            return Ok(None);
        }
        let mut patterns = Vec::new();
        for line in lines {
            let line = line?;
            if line.trim().is_empty() {
                continue;
            }
            let p: GroupPattern = line.parse()?;
            if p.n_t() != n_t || p.n_g() != n_g {
                return Err(PatternError::Cache(format!("pattern {line:?} has the wrong shape")));
            }
            patterns.push(p);
        }
        Self::new(b_p, patterns).map(Some).map_err(|e| PatternError::Cache(e.to_string()))
    }
}

pub fn default_pool_size(b_p: u32) -> usize {
    4usize << b_p
}

/// Screening plus max-min packing over a candidate list (canonical order).
pub fn select_from_candidates(
    sqrt_r: &ComplexMatrix,
    candidates: &[GroupPattern],
    b_p: u32,
    j: usize,
) -> Result<PatternSet, PatternError> {
    let need = 1usize << b_p;
    if need > candidates.len() {
        return Err(PatternError::InfeasibleHeader { need, have: candidates.len() });
    }
    if j < need {
        return Err(PatternError::PoolTooSmall { j, need });
    }
    let q: Vec<ComplexMatrix> = candidates.iter().map(|p| quasi_correlation_matrix(sqrt_r, p)).collect();
    let norms: Vec<f64> = q.iter().map(ComplexMatrix::frobenius_norm).collect();
    let mut order: Vec<usize> = (0..candidates.len()).collect();
    order.sort_by(|&a, &b| norms[b].total_cmp(&norms[a]));
    order.truncate(j.min(candidates.len()));
    let pool = order;
    let pick = if need == 1 {
        vec![0]
    } else {
        let n = pool.len();
        let mut dist = vec![0.0; n * n];
        for a in 0..n {
            for b in a + 1..n {
                let d = correlation_matrix_distance(&q[pool[a]], &q[pool[b]])?;
                dist[a * n + b] = d;
                dist[b * n + a] = d;
            }
        }
        let subsets = binomial(n as u128, need as u128).unwrap_or(u128::MAX);
        if subsets <= SUBSET_CAP {
            exhaustive_max_min(&dist, n, need)
        } else {
            greedy_max_min(&dist, n, need)
        }
    };
    PatternSet::new(b_p, pick.into_iter().map(|i| candidates[pool[i]].clone()).collect())
}

/// Table-driven max-min subset search; ties keep the lexicographically first subset.
fn exhaustive_max_min(dist: &[f64], n: usize, k: usize) -> Vec<usize> {
    struct Search<'a> {
        dist: &'a [f64],
        n: usize,
        k: usize,
        cur: Vec<usize>,
        best: Vec<usize>,
        best_val: f64,
    }
    impl Search<'_> {
        fn go(&mut self, start: usize, cur_min: f64) {
            if self.cur.len() == self.k {
                if cur_min > self.best_val {
                    self.best_val = cur_min;
                    self.best = self.cur.clone();
                }
                return;
            }
            let need = self.k - self.cur.len();
            for i in start..=(self.n - need) {
                let m = self.cur.iter().map(|&c| self.dist[c * self.n + i]).fold(cur_min, f64::min);
                if m <= self.best_val {
                    continue;
                }
                self.cur.push(i);
                self.go(i + 1, m);
                self.cur.pop();
            }
        }
    }
    let mut s = Search { dist, n, k, cur: Vec::with_capacity(k), best: (0..k).collect(), best_val: f64::NEG_INFINITY };
    s.go(0, f64::INFINITY);
    s.best
}

/// Farthest-point insertion seeded with the top-norm pattern.
fn greedy_max_min(dist: &[f64], n: usize, k: usize) -> Vec<usize> {
    let mut chosen = vec![0usize];
    let mut nearest: Vec<f64> = (0..n).map(|i| dist[i]).collect();
    let mut taken = vec![false; n];
    taken[0] = true;
    while chosen.len() < k {
        let mut best = None;
        for i in 0..n {
            if !taken[i] && best.map_or(true, |b: usize| nearest[i] > nearest[b]) {
                best = Some(i);
            }
        }
        let b = best.expect("pool larger than k");
        taken[b] = true;
        chosen.push(b);
        for i in 0..n {
            nearest[i] = nearest[i].min(dist[b * n + i]);
        }
    }
    chosen
}

/// Full Table I selection for an array small enough to enumerate.
pub fn select_pattern_set(
    r: &ComplexMatrix,
    n_t: usize,
    n_g: usize,
    b_p: u32,
    j: usize,
) -> Result<PatternSet, PatternError> {
    if r.rows() != n_t {
        return Err(PatternError::SizeMismatch(format!("{} x {} correlation for {n_t} antennas", r.rows(), r.cols())));
    }
    let candidates = enumerate_patterns(n_t, n_g)?;
    let s = hermitian_sqrt(r)?;
    select_from_candidates(&s, &candidates, b_p, j)
}

/// The `2^{b_p}` highest-norm patterns, without distance packing.
pub fn top_norm_set(r: &ComplexMatrix, n_t: usize, n_g: usize, b_p: u32) -> Result<PatternSet, PatternError> {
    let candidates = enumerate_patterns(n_t, n_g)?;
    let s = hermitian_sqrt(r)?;
    let need = 1usize << b_p;
    if need > candidates.len() {
        return Err(PatternError::InfeasibleHeader { need, have: candidates.len() });
    }
    let norms: Vec<f64> = candidates.iter().map(|p| quasi_correlation_matrix(&s, p).frobenius_norm()).collect();
    let mut order: Vec<usize> = (0..candidates.len()).collect();
    order.sort_by(|&a, &b| norms[b].total_cmp(&norms[a]));
    PatternSet::new(b_p, order[..need].iter().map(|&i| candidates[i].clone()).collect())
}

/// `2^{b_p}` distinct uniformly drawn partitions.
pub fn random_pattern_set<R: Rng + ?Sized>(
    n_t: usize,
    n_g: usize,
    b_p: u32,
    rng: &mut R,
) -> Result<PatternSet, PatternError> {
    let total = pattern_count(n_t, n_g)?;
    let need = 1usize << b_p;
    if (need as u128) > total {
        return Err(PatternError::InfeasibleHeader { need, have: total.min(usize::MAX as u128) as usize });
    }
    let kappa = n_t / n_g;
    let mut seen = HashSet::new();
    let mut out = Vec::with_capacity(need);
    let mut perm: Vec<usize> = (0..n_t).collect();
    while out.len() < need {
        perm.shuffle(rng);
        let p = GroupPattern::new(n_t, perm.chunks(kappa).map(<[usize]>::to_vec).collect())?.canonical();
        if seen.insert(p.clone()) {
            out.push(p);
        }
    }
    PatternSet::new(b_p, out)
}

/// A congruent block of a `(rows, cols)` array, antennas indexed row-major.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct SubArray {
    pub rows: usize,
    pub cols: usize,
    pub row_off: usize,
    pub col_off: usize,
}

impl SubArray {
    pub fn n_t(&self) -> usize {
        self.rows * self.cols
    }

    /// Global antenna index of each local antenna.
    pub fn indices(&self, total_cols: usize) -> Vec<usize> {
        let mut v = Vec::with_capacity(self.n_t());
        for r in 0..self.rows {
            for c in 0..self.cols {
                v.push((self.row_off + r) * total_cols + self.col_off + c);
            }
        }
        v
    }
}

/// Halve the larger axis (first axis on ties) until there are `m` blocks.
pub fn partition_array(n_t1: usize, n_t2: usize, m: usize) -> Result<Vec<SubArray>, PatternError> {
    if m == 0 || !m.is_power_of_two() {
        return Err(PatternError::NonDivisible { n_t: n_t1 * n_t2, n_g: m });
    }
    let mut blocks = vec![SubArray { rows: n_t1, cols: n_t2, row_off: 0, col_off: 0 }];
    while blocks.len() < m {
        let (rows, cols) = (blocks[0].rows, blocks[0].cols);
        let split_rows = rows >= cols;
        let axis = if split_rows { rows } else { cols };
        if axis % 2 != 0 {
            return Err(PatternError::NonDivisible { n_t: n_t1 * n_t2, n_g: m });
        }
        blocks = blocks
            .into_iter()
            .flat_map(|b| {
                if split_rows {
                    let h = b.rows / 2;
                    [SubArray { rows: h, ..b }, SubArray { rows: h, row_off: b.row_off + h, ..b }]
                } else {
                    let h = b.cols / 2;
                    [SubArray { cols: h, ..b }, SubArray { cols: h, col_off: b.col_off + h, ..b }]
                }
            })
            .collect();
    }
    Ok(blocks)
}

/// Cartesian product of per-sub-array sets lifted to full-array indices.
///
/// Composed index `i` uses digit `i_m` of sub-array `m` in mixed radix with
/// sub-array 0 most significant; groups are ordered sub-array-major.
pub fn compose_subarray_patterns(sub_sets: &[PatternSet], maps: &[Vec<usize>]) -> Result<PatternSet, PatternError> {
    if sub_sets.is_empty() || sub_sets.len() != maps.len() {
        return Err(PatternError::SizeMismatch(format!("{} sets for {} maps", sub_sets.len(), maps.len())));
    }
    let b = sub_sets[0].b_p();
    if sub_sets.iter().any(|s| s.b_p() != b) {
        return Err(PatternError::SizeMismatch("sub-array sets differ in size".into()));
    }
    let n_t: usize = maps.iter().map(Vec::len).sum();
    let lifted: Vec<Vec<GroupPattern>> = sub_sets
        .iter()
        .zip(maps)
        .map(|(s, m)| s.patterns().iter().map(|p| p.lift(m, n_t)).collect())
        .collect::<Result<_, _>>()?;
    let per = 1usize << b;
    let m = sub_sets.len();
    let total_bits = b * m as u32;
    let mut out = Vec::with_capacity(1usize << total_bits);
    for idx in 0..(1usize << total_bits) {
        let mut groups = Vec::new();
        for (s, pats) in lifted.iter().enumerate() {
            let digit = (idx >> (b as usize * (m - 1 - s))) % per;
            groups.extend(pats[digit].groups().iter().cloned());
        }
        out.push(GroupPattern::new(n_t, groups)?);
    }
    PatternSet::new(total_bits, out)
}

/// Pattern sets for an array partitioned into `m` sub-arrays, each with
/// `b_p / m` header bits selected on the sub-array's correlation.
pub fn select_partitioned(
    r: &ComplexMatrix,
    shape: (usize, usize),
    n_g: usize,
    b_p: u32,
    m: usize,
    j: Option<usize>,
) -> Result<PatternSet, PatternError> {
    let n_t = shape.0 * shape.1;
    if m == 0 || n_g % m != 0 || b_p as usize % m != 0 {
        return Err(PatternError::NonDivisible { n_t, n_g: m });
    }
    let blocks = partition_array(shape.0, shape.1, m)?;
    let b_sub = b_p / m as u32;
    let j = j.unwrap_or_else(|| default_pool_size(b_sub));
    let maps: Vec<Vec<usize>> = blocks.iter().map(|b| b.indices(shape.1)).collect();
    let sets = maps
        .iter()
        .map(|map| select_pattern_set(&r.submatrix(map), map.len(), n_g / m, b_sub, j))
        .collect::<Result<Vec<_>, _>>()?;
    compose_subarray_patterns(&sets, &maps)
}
