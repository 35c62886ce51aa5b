//! Zero-forcing beamforming and equal-power sum rate.
//!
//! Channel matrices are `K x N_t` with row `k` equal to `h_k^H`, so entry
//! `(k, j)` of `H W` is the effective gain `h_k^H w_j`.

use crate::mathkit::{right_pseudo_inverse, ComplexMatrix, ComplexVector, MathError, C64};

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum PrecoderError {
    #[error("quantized channel matrix is rank deficient")]
    RankDeficient,
    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimMismatch { expected: usize, got: usize },
    #[error("power must be positive, got {0}")]
    InvalidPower(f64),
    #[error(transparent)]
    Math(MathError),
}

impl From<MathError> for PrecoderError {
    fn from(e: MathError) -> Self {
        match e {
            MathError::RankDeficient(_) => Self::RankDeficient,
            MathError::DimMismatch { expected, got } => Self::DimMismatch { expected, got },
            other => Self::Math(other),
        }
    }
}

/// Unit-norm beamformers, one column per user.
#[derive(Debug, Clone, PartialEq)]
pub struct BeamformerSet {
    w: ComplexMatrix,
}

impl BeamformerSet {
    pub fn matrix(&self) -> &ComplexMatrix {
        &self.w
    }

    pub fn users(&self) -> usize {
        self.w.cols()
    }

    pub fn column(&self, k: usize) -> ComplexVector {
        self.w.column(k)
    }
}

/// Stacks `h_k^H` as rows.
pub fn channel_matrix(users: &[ComplexVector]) -> Result<ComplexMatrix, PrecoderError> {
    let n = users.first().map_or(0, |u| u.dim());
    if let Some(bad) = users.iter().find(|u| u.dim() != n) {
        return Err(PrecoderError::DimMismatch { expected: n, got: bad.dim() });
    }
    Ok(ComplexMatrix::from_fn(users.len(), n, |k, i| users[k][i].conj()))
}

/// `W = H^H (H H^H)^{-1}` with unit-norm columns.
pub fn zfbf(h_hat: &ComplexMatrix) -> Result<BeamformerSet, PrecoderError> {
    let mut w = right_pseudo_inverse(h_hat)?;
    for j in 0..w.cols() {
        let n = (0..w.rows()).map(|i| w[(i, j)].norm_sqr()).sum::<f64>().sqrt();
        if !(n > 0.0) || !n.is_finite() {
            return Err(PrecoderError::RankDeficient);
        }
        for i in 0..w.rows() {
            w[(i, j)] /= n;
        }
    }
    Ok(BeamformerSet { w })
}

/// `sum_k log2(1 + (P/K)|h_k^H w_k|^2 / (1 + (P/K) sum_{j != k} |h_k^H w_j|^2))`.
pub fn sum_rate(h_true: &ComplexMatrix, w: &BeamformerSet, p: f64) -> Result<f64, PrecoderError> {
    per_user_rates(h_true, w, p).map(|r| r.iter().sum())
}

pub fn per_user_rates(h_true: &ComplexMatrix, w: &BeamformerSet, p: f64) -> Result<Vec<f64>, PrecoderError> {
    if !(p > 0.0) {
        return Err(PrecoderError::InvalidPower(p));
    }
    let k = h_true.rows();
    if w.users() != k {
        return Err(PrecoderError::DimMismatch { expected: k, got: w.users() });
    }
    let gains = h_true.matmul(&w.w)?;
    let pk = p / k as f64;
    Ok((0..k)
        .map(|u| {
            let signal = gains[(u, u)].norm_sqr() * pk;
            let interference: f64 = (0..k).filter(|&j| j != u).map(|j| gains[(u, j)].norm_sqr()).sum::<f64>() * pk;
            (1.0 + signal / (1.0 + interference)).log2()
        })
        .collect())
}

/// Zero-forcing on the true channel directions.
pub fn perfect_csit_rate(h_true: &ComplexMatrix, p: f64) -> Result<f64, PrecoderError> {
    let dirs = ComplexMatrix::from_fn(h_true.rows(), h_true.cols(), |k, i| {
        let n = h_true.row(k).iter().map(C64::norm_sqr).sum::<f64>().sqrt();
        h_true[(k, i)] / n
    });
    sum_rate(h_true, &zfbf(&dirs)?, p)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::channel::complex_gaussian_vector;
    use crate::rng::stream;
    use proptest::prelude::{any, prop_assert, proptest, ProptestConfig};

    fn unit_rows(seed: u64, k: usize, n: usize) -> (Vec<ComplexVector>, ComplexMatrix) {
        let mut rng = stream(seed, &[]);
        let v: Vec<_> = (0..k).map(|_| complex_gaussian_vector(&mut rng, n).normalized().unwrap()).collect();
        let m = channel_matrix(&v).unwrap();
        (v, m)
    }

    #[test]
    fn identity_channel() {
        let w = zfbf(&ComplexMatrix::identity(3)).unwrap();
        assert!(w.matrix().sub(&ComplexMatrix::identity(3)).frobenius_norm() < 1e-12);
    }

    #[test]
    fn single_user_is_matched_filter() {
        let (v, m) = unit_rows(1, 1, 4);
        let w = zfbf(&m).unwrap().column(0);
        assert!(w.iter().zip(v[0].iter()).all(|(a, b)| (a - b).norm() < 1e-12));
        let h = v[0].scaled(C64::new(1.7, 0.0));
        let hm = channel_matrix(&[h.clone()]).unwrap();
        let r = sum_rate(&hm, &zfbf(&m).unwrap(), 10.0).unwrap();
        assert!((r - (1.0 + 10.0 * h.norm_sqr()).log2()).abs() < 1e-12);
        assert!((perfect_csit_rate(&hm, 10.0).unwrap() - r).abs() < 1e-12);
    }

    #[test]
    fn orthogonal_beams_give_zero_rate() {
        let h = channel_matrix(&[ComplexVector::from_real(&[1.0, 0.0])]).unwrap();
        let w = zfbf(&channel_matrix(&[ComplexVector::from_real(&[0.0, 1.0])]).unwrap()).unwrap();
        assert_eq!(sum_rate(&h, &w, 100.0).unwrap(), 0.0);
    }

    #[test]
    fn two_user_term_decomposition() {
        let mut rng = stream(2, &[]);
        let hs: Vec<_> = (0..2).map(|_| complex_gaussian_vector(&mut rng, 4)).collect();
        let h = channel_matrix(&hs).unwrap();
        let w = zfbf(&ComplexMatrix::from_fn(2, 4, |k, i| h[(k, i)] / hs[k].norm())).unwrap();
        let want: f64 = (0..2)
            .map(|k| {
                let g: C64 = (0..4).map(|i| hs[k][i].conj() * w.matrix()[(i, k)]).sum();
                (1.0 + 5.0 * g.norm_sqr()).log2()
            })
            .sum();
        assert!((perfect_csit_rate(&h, 10.0).unwrap() - want).abs() < 1e-10);
    }

    #[test]
    fn collisions_are_rank_deficient() {
        let (v, _) = unit_rows(3, 1, 4);
        let m = channel_matrix(&[v[0].clone(), v[0].clone()]).unwrap();
        assert_eq!(zfbf(&m), Err(PrecoderError::RankDeficient));
        let (_, wide) = unit_rows(4, 5, 4);
        assert!(matches!(zfbf(&wide), Err(PrecoderError::DimMismatch { .. })));
    }

    #[test]
    fn perfect_csi_dominates_quantized_in_expectation() {
        use crate::codebook::{rvq_codebook, Quantizer};
        let cb = rvq_codebook(4, 4, &mut stream(5, &[])).unwrap();
        let mut rng = stream(6, &[]);
        let trials = 1000;
        let mut diffs = Vec::with_capacity(trials);
        while diffs.len() < trials {
            let hs: Vec<_> = (0..2).map(|_| complex_gaussian_vector(&mut rng, 4)).collect();
            let q: Vec<_> = hs.iter().map(|h| cb.codeword(cb.search(h).0).unwrap()).collect();
            let Ok(w) = zfbf(&channel_matrix(&q).unwrap()) else { continue };
            let h = channel_matrix(&hs).unwrap();
            diffs.push(perfect_csit_rate(&h, 10.0).unwrap() - sum_rate(&h, &w, 10.0).unwrap());
        }
        let m = diffs.iter().sum::<f64>() / trials as f64;
        let sd = (diffs.iter().map(|d| (d - m).powi(2)).sum::<f64>() / (trials - 1) as f64).sqrt();
        assert!(m > -5.0 * sd / (trials as f64).sqrt());
        assert!(m > 0.0);
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(200))]

        #[test]
        fn zero_forcing_orthogonality(seed in any::<u64>(), k in 1usize..5, extra in 0usize..5) {
            let n = k + extra;
            let (_, m) = unit_rows(seed, k, n);
            let w = zfbf(&m).unwrap();
            let g = m.matmul(w.matrix()).unwrap();
            for a in 0..k {
                let col: f64 = (0..n).map(|i| w.matrix()[(i, a)].norm_sqr()).sum();
                prop_assert!((col - 1.0).abs() < 1e-9);
                for b in 0..k {
                    if a != b {
                        prop_assert!(g[(a, b)].norm() < 1e-8);
                    }
                }
            }
        }

        #[test]
        fn rate_monotone_in_power(seed in any::<u64>(), p in 0.01f64..100.0, dp in 0.0f64..100.0) {
            let (_, q) = unit_rows(seed, 3, 6);
            let (v, _) = unit_rows(seed ^ 1, 3, 6);
            let h = channel_matrix(&v).unwrap();
            let w = zfbf(&q).unwrap();
            prop_assert!(sum_rate(&h, &w, p + dp).unwrap() >= sum_rate(&h, &w, p).unwrap() - 1e-12);
        }
    }
}
