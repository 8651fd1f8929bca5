//! Significance testing, confidence intervals, the shuffled-attention null
//! model and correlation.

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use statrs::distribution::{ContinuousCDF, Normal};
use thiserror::Error;

use crate::scalar::{CompensatedSum, Scalar};
use crate::tensors::{AttentionTensor, TokenFlag};

/// Family-wise significance level.
pub const FAMILY_ALPHA: f64 = 0.05;
/// p-values below this are reported as 0.
pub const P_VALUE_FLOOR: f64 = 1e-300;

#[derive(Debug, Error, PartialEq)]
pub enum StatsError {
    #[error("invalid counts: {0}")]
    InvalidCounts(String),
    #[error("series have different lengths ({0} vs {1})")]
    LengthMismatch(usize, usize),
    #[error("need at least two paired samples, got {0}")]
    TooFewSamples(usize),
    #[error("a series has zero variance")]
    ZeroVariance,
    #[error("number of hypotheses must be at least 1")]
    NoHypotheses,
}

/// Outcome of a pooled two-proportion z-test.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub enum ZTest {
    Defined { z: f64, p: f64 },
    /// Pooled proportion is 0 or 1, so the statistic is undefined.
    DegeneratePooled,
}

impl ZTest {
    pub fn z(&self) -> Option<f64> {
        match self {
            ZTest::Defined { z, .. } => Some(*z),
            ZTest::DegeneratePooled => None,
        }
    }

    pub fn p(&self) -> Option<f64> {
        match self {
            ZTest::Defined { p, .. } => Some(*p),
            ZTest::DegeneratePooled => None,
        }
    }
}

/// Upper tail of the standard normal, `P(Z > z)`.
pub fn normal_sf(z: f64) -> f64 {
    0.5 * libm::erfc(z / std::f64::consts::SQRT_2)
}

/// Pooled two-proportion z-test of `k1/n1` against `k2/n2` with a
/// two-sided p-value.
pub fn two_proportion_ztest(k1: u64, n1: u64, k2: u64, n2: u64) -> Result<ZTest, StatsError> {
    if n1 == 0 || n2 == 0 || k1 > n1 || k2 > n2 {
        return Err(StatsError::InvalidCounts(format!("k1={k1} n1={n1} k2={k2} n2={n2}")));
    }
    let (k1f, n1f, k2f, n2f) = (k1 as f64, n1 as f64, k2 as f64, n2 as f64);
    let pooled = (k1f + k2f) / (n1f + n2f);
    if k1 + k2 == 0 || k1 + k2 == n1 + n2 {
        return Ok(ZTest::DegeneratePooled);
    }
    let se = (pooled * (1.0 - pooled) * (1.0 / n1f + 1.0 / n2f)).sqrt();
    let z = (k1f / n1f - k2f / n2f) / se;
    let mut p = (2.0 * normal_sf(z.abs())).min(1.0);
    if p < P_VALUE_FLOOR {
        p = 0.0;
    }
    Ok(ZTest::Defined { z, p })
}

/// Per-test threshold `alpha / m`.
pub fn bonferroni_threshold(m: usize) -> f64 {
    FAMILY_ALPHA / m as f64
}

/// Whether `raw_p` is significant at family level 0.05 over `m` tests.
pub fn bonferroni_adjust(raw_p: f64, m: usize) -> Result<bool, StatsError> {
    if m == 0 {
        return Err(StatsError::NoHypotheses);
    }
    Ok(raw_p < bonferroni_threshold(m))
}

/// Wilson score interval for `k/n` at the given two-sided confidence level.
pub fn wilson_interval(k: u64, n: u64, confidence: f64) -> Result<(f64, f64), StatsError> {
    if n == 0 || k > n {
        return Err(StatsError::InvalidCounts(format!("k={k} n={n}")));
    }
    let normal = Normal::new(0.0, 1.0).expect("standard normal");
    let z = normal.inverse_cdf(1.0 - (1.0 - confidence) / 2.0);
    let n = n as f64;
    let phat = k as f64 / n;
    let z2 = z * z;
    let denom = 1.0 + z2 / n;
    let center = (phat + z2 / (2.0 * n)) / denom;
    let half = z * (phat * (1.0 - phat) / n + z2 / (4.0 * n * n)).sqrt() / denom;
    let lo = if k == 0 { 0.0 } else { (center - half).max(0.0) };
    let hi = if phat == 1.0 { 1.0 } else { (center + half).min(1.0) };
    Ok((lo, hi))
}

/// z-test of a head's proportion against the background plus a
/// Bonferroni-widened Wilson interval.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SignificanceResult {
    pub z: Option<f64>,
    pub p: Option<f64>,
    pub significant_bonferroni: bool,
    pub ci_lo: f64,
    pub ci_hi: f64,
    pub degenerate: bool,
}

/// Tests `hits/arcs` against `bg_hits/bg_total` as one of `m` hypotheses.
pub fn significance(hits: u64, arcs: u64, bg_hits: u64, bg_total: u64, m: usize) -> Result<SignificanceResult, StatsError> {
    if m == 0 {
        return Err(StatsError::NoHypotheses);
    }
    let test = two_proportion_ztest(hits, arcs, bg_hits, bg_total)?;
    let (ci_lo, ci_hi) = wilson_interval(hits, arcs, 1.0 - bonferroni_threshold(m))?;
    let significant = match test.p() {
        Some(p) => bonferroni_adjust(p, m)?,
        None => false,
    };
    Ok(SignificanceResult {
        z: test.z(),
        p: test.p(),
        significant_bonferroni: significant,
        ci_lo,
        ci_hi,
        degenerate: test == ZTest::DegeneratePooled,
    })
}

/// 64-bit FNV-1a, used to fold protein ids into RNG stream keys.
fn fnv1a(bytes: &[u8]) -> u64 {
    bytes.iter().fold(0xcbf2_9ce4_8422_2325u64, |h, &b| (h ^ b as u64).wrapping_mul(0x0000_0100_0000_01b3))
}

fn splitmix64(mut x: u64) -> u64 {
    x = x.wrapping_add(0x9e37_79b9_7f4a_7c15);
    x = (x ^ (x >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    x = (x ^ (x >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    x ^ (x >> 31)
}

/// Seed of the permutation stream for one attention row.
pub fn row_stream_seed(seed: u64, protein_id: &str, layer: usize, head: usize, row: usize) -> u64 {
    [fnv1a(protein_id.as_bytes()), layer as u64, head as u64, row as u64]
        .into_iter()
        .fold(splitmix64(seed), |acc, part| splitmix64(acc ^ part))
}

/// Null model: every non-padding row's weights are permuted uniformly at
/// random among the row's non-padding positions. Each row draws from its
/// own ChaCha8 stream keyed by `(seed, protein, layer, head, row)`.
pub fn shuffle_null(tensor: &AttentionTensor, seed: u64) -> AttentionTensor {
    let n = tensor.n_tokens();
    let flags = tensor.flags();
    let live: Vec<usize> = (0..n).filter(|&t| flags[t] != TokenFlag::Pad).collect();
    let mut weights = tensor.weights().to_vec();
    let mut scratch = Vec::with_capacity(live.len());
    for layer in 0..tensor.n_layers() {
        for head in 0..tensor.n_heads() {
            for &row in &live {
                let start = ((layer * tensor.n_heads() + head) * n + row) * n;
                let slice = &mut weights[start..start + n];
                scratch.clear();
                scratch.extend(live.iter().map(|&t| slice[t]));
                let mut rng = ChaCha8Rng::seed_from_u64(row_stream_seed(seed, tensor.protein_id(), layer, head, row));
                scratch.shuffle(&mut rng);
                for (&t, &w) in live.iter().zip(&scratch) {
                    slice[t] = w;
                }
            }
        }
    }
    tensor
        .with_weights(weights)
        .expect("a permutation preserves every row invariant")
}

/// Sample Pearson correlation coefficient.
pub fn pearson<T: Scalar>(xs: &[T], ys: &[T]) -> Result<T, StatsError> {
    if xs.len() != ys.len() {
        return Err(StatsError::LengthMismatch(xs.len(), ys.len()));
    }
    if xs.len() < 2 {
        return Err(StatsError::TooFewSamples(xs.len()));
    }
    let n = T::from_usize(xs.len()).expect("length fits in scalar");
    let mean = |v: &[T]| v.iter().copied().collect::<CompensatedSum<T>>().value() / n;
    let (mx, my) = (mean(xs), mean(ys));
    let mut sxy = CompensatedSum::new();
    let mut sxx = CompensatedSum::new();
    let mut syy = CompensatedSum::new();
    for (&x, &y) in xs.iter().zip(ys) {
        let (dx, dy) = (x - mx, y - my);
        sxy.add(dx * dy);
        sxx.add(dx * dx);
        syy.add(dy * dy);
    }
    let (sxx, syy) = (sxx.value(), syy.value());
    if sxx <= T::zero() || syy <= T::zero() {
        return Err(StatsError::ZeroVariance);
    }
    let r = sxy.value() / (sxx.sqrt() * syy.sqrt());
    Ok(r.max(-T::one()).min(T::one()))
}
