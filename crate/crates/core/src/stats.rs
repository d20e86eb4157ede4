//! Hypothesis tests for paired intra-writer distance sets.
//!
//! Two procedures: the Wilcoxon signed-rank test for paired samples (exact
//! by full enumeration of sign assignments up to 25 effective pairs, normal
//! approximation with tie and continuity corrections beyond) and the
//! Lilliefors normality test (Kolmogorov–Smirnov against a normal with
//! estimated mean and standard deviation, p-value by seeded Monte Carlo).
//!
//! The Lilliefors null distribution depends only on the sample size,
//! replicate count and seed — never on the observed data — so it is computed
//! once per (n, replicates, seed) and memoized process-wide. Replicates draw
//! from per-replicate seeded streams, making the distribution independent of
//! how the work is scheduled.

use std::collections::HashMap;
use std::sync::{Arc, Mutex, OnceLock};

use rand::Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;
use serde::Serialize;
use statrs::distribution::{ContinuousCDF, Normal};
use thiserror::Error;

use crate::rng::stream;

/// Replicates used by [`lilliefors_test`].
pub const DEFAULT_REPLICATES: usize = 10_000;
/// Seed used by [`lilliefors_test`].
pub const DEFAULT_LILLIEFORS_SEED: u64 = 0x11e5;

const NULL_REPLICATE_TAG: u64 = 0x4c49_4c4c;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum Method {
    WilcoxonSignedRank,
    Lilliefors,
}

/// How the p-value was obtained.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum Mode {
    Exact,
    Approximate,
    MonteCarlo,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct TestResult {
    pub method: Method,
    pub mode: Mode,
    pub statistic: f64,
    pub p_value: f64,
    /// Observations actually used (zero differences are dropped).
    pub n_effective: usize,
}

impl TestResult {
    /// Wording of the null hypothesis the p-value refers to.
    pub fn null_hypothesis(&self) -> &'static str {
        match self.method {
            Method::WilcoxonSignedRank => {
                "the paired samples come from populations with no location difference"
            }
            Method::Lilliefors => {
                "the sample is drawn from a normal distribution (mean and variance unspecified)"
            }
        }
    }
}

#[derive(Debug, Error, PartialEq)]
pub enum StatsError {
    #[error("paired samples differ in length ({a} vs {b})")]
    LengthMismatch { a: usize, b: usize },
    #[error("all pairwise differences are zero")]
    AllZeroDifferences,
    #[error("need at least 4 observations, got {n}")]
    TooFewSamples { n: usize },
    #[error("sample variance is zero")]
    ZeroVariance,
}

/// Ranks of `values` (1-based), tied values receiving the average of the
/// ranks they span.
fn average_ranks(values: &[f64]) -> Vec<f64> {
    let mut order: Vec<usize> = (0..values.len()).collect();
    order.sort_by(|&i, &j| values[i].partial_cmp(&values[j]).unwrap());
    let mut ranks = vec![0.0; values.len()];
    let mut i = 0;
    while i < order.len() {
        let mut j = i;
        while j + 1 < order.len() && values[order[j + 1]] == values[order[i]] {
            j += 1;
        }
        // positions i..=j (0-based) share ranks i+1..=j+1
        let avg = (i + j) as f64 / 2.0 + 1.0;
        for &k in &order[i..=j] {
            ranks[k] = avg;
        }
        i = j + 1;
    }
    ranks
}

/// Two-sided Wilcoxon signed-rank test on paired samples.
///
/// The statistic is W⁺, the rank sum of the positive differences `a - b`.
/// Zero differences are dropped; tied absolute differences share averaged
/// ranks. Up to 25 effective pairs the p-value enumerates all sign
/// assignments exactly; beyond that a normal approximation with tie and
/// continuity corrections is used.
pub fn wilcoxon_signed_rank(a: &[f64], b: &[f64]) -> Result<TestResult, StatsError> {
    if a.len() != b.len() {
        return Err(StatsError::LengthMismatch { a: a.len(), b: b.len() });
    }
    let diffs: Vec<f64> = a.iter().zip(b).map(|(x, y)| x - y).filter(|d| *d != 0.0).collect();
    let n = diffs.len();
    if n == 0 {
        return Err(StatsError::AllZeroDifferences);
    }

    let abs: Vec<f64> = diffs.iter().map(|d| d.abs()).collect();
    let ranks = average_ranks(&abs);
    let w_plus: f64 =
        diffs.iter().zip(&ranks).filter(|(d, _)| **d > 0.0).map(|(_, r)| r).sum();

    let (p_value, mode) = if n <= 25 {
        (exact_signed_rank_p(&ranks, w_plus), Mode::Exact)
    } else {
        (approximate_signed_rank_p(&abs, &ranks, w_plus, n), Mode::Approximate)
    };

    Ok(TestResult {
        method: Method::WilcoxonSignedRank,
        mode,
        statistic: w_plus,
        p_value,
        n_effective: n,
    })
}

/// Exact two-sided p for W⁺ = `w_plus` under random signs, by counting sign
/// assignments over doubled ranks (which are integers even with ties).
fn exact_signed_rank_p(ranks: &[f64], w_plus: f64) -> f64 {
    let scaled: Vec<usize> = ranks.iter().map(|r| (2.0 * r).round() as usize).collect();
    let total: usize = scaled.iter().sum();
    let mut counts = vec![0u64; total + 1];
    counts[0] = 1;
    for &r in &scaled {
        for s in (0..=total - r).rev() {
            if counts[s] > 0 {
                counts[s + r] += counts[s];
            }
        }
    }
    let w2 = (2.0 * w_plus).round() as usize;
    let assignments = (1u64 << ranks.len()) as f64;
    let p_le: u64 = counts[..=w2].iter().sum();
    let p_ge: u64 = counts[w2..].iter().sum();
    let tail = (p_le.min(p_ge)) as f64 / assignments;
    (2.0 * tail).min(1.0)
}

fn approximate_signed_rank_p(abs: &[f64], ranks: &[f64], w_plus: f64, n: usize) -> f64 {
    let nf = n as f64;
    let mean = nf * (nf + 1.0) / 4.0;
    // tie correction: subtract Σ(t³ − t)/48 over groups of equal |d|
    let mut tie_term = 0.0;
    let mut sorted = abs.to_vec();
    sorted.sort_by(|x, y| x.partial_cmp(y).unwrap());
    let mut i = 0;
    while i < sorted.len() {
        let mut j = i;
        while j + 1 < sorted.len() && sorted[j + 1] == sorted[i] {
            j += 1;
        }
        let t = (j - i + 1) as f64;
        tie_term += t * t * t - t;
        i = j + 1;
    }
    let _ = ranks;
    let variance = nf * (nf + 1.0) * (2.0 * nf + 1.0) / 24.0 - tie_term / 48.0;
    let sd = variance.sqrt();
    let centered = w_plus - mean;
    // continuity correction pulls the statistic half a step toward the mean
    let z = if centered > 0.0 {
        (centered - 0.5) / sd
    } else if centered < 0.0 {
        (centered + 0.5) / sd
    } else {
        0.0
    };
    let normal = Normal::new(0.0, 1.0).unwrap();
    (2.0 * (1.0 - normal.cdf(z.abs()))).min(1.0)
}

/// KS statistic of standardized, sorted data against the standard normal.
fn ks_statistic_sorted(sorted_z: &[f64], normal: &Normal) -> f64 {
    let n = sorted_z.len() as f64;
    let mut d = 0.0f64;
    for (i, &z) in sorted_z.iter().enumerate() {
        let cdf = normal.cdf(z);
        d = d.max((i as f64 + 1.0) / n - cdf).max(cdf - i as f64 / n);
    }
    d
}

/// Standardize by the sample mean and (n − 1) standard deviation, sort, and
/// return the Lilliefors statistic. `None` when the variance vanishes.
fn lilliefors_statistic(sample: &[f64], normal: &Normal) -> Option<f64> {
    let n = sample.len() as f64;
    let mean = sample.iter().sum::<f64>() / n;
    let var = sample.iter().map(|x| (x - mean) * (x - mean)).sum::<f64>() / (n - 1.0);
    if !(var > 0.0) {
        return None;
    }
    let sd = var.sqrt();
    let mut z: Vec<f64> = sample.iter().map(|x| (x - mean) / sd).collect();
    z.sort_by(|a, b| a.partial_cmp(b).unwrap());
    Some(ks_statistic_sorted(&z, normal))
}

type NullKey = (usize, usize, u64);

fn null_cache() -> &'static Mutex<HashMap<NullKey, Arc<Vec<f64>>>> {
    static CACHE: OnceLock<Mutex<HashMap<NullKey, Arc<Vec<f64>>>>> = OnceLock::new();
    CACHE.get_or_init(|| Mutex::new(HashMap::new()))
}

/// Sorted Monte-Carlo null distribution of the Lilliefors statistic for
/// samples of size `n`, memoized per (n, replicates, seed).
fn null_distribution(n: usize, replicates: usize, seed: u64) -> Arc<Vec<f64>> {
    let key = (n, replicates, seed);
    if let Some(hit) = null_cache().lock().unwrap().get(&key) {
        return Arc::clone(hit);
    }
    let normal = Normal::new(0.0, 1.0).unwrap();
    let mut stats: Vec<f64> = (0..replicates)
        .into_par_iter()
        .map(|i| {
            let mut rng = stream(seed, &[NULL_REPLICATE_TAG, i as u64]);
            let draw: Vec<f64> = (0..n).map(|_| rng.sample(StandardNormal)).collect();
            // a replicate with vanishing variance has probability zero;
            // treat it as maximally non-normal if it ever occurs
            lilliefors_statistic(&draw, &normal).unwrap_or(1.0)
        })
        .collect();
    stats.sort_by(|a, b| a.partial_cmp(b).unwrap());
    let arc = Arc::new(stats);
    null_cache().lock().unwrap().insert(key, Arc::clone(&arc));
    arc
}

/// Lilliefors normality test with the default replicate count and seed.
pub fn lilliefors_test(sample: &[f64]) -> Result<TestResult, StatsError> {
    lilliefors_test_with(sample, DEFAULT_REPLICATES, DEFAULT_LILLIEFORS_SEED)
}

/// Lilliefors normality test: KS distance between the standardized sample
/// and the standard normal, with the p-value read off a seeded Monte-Carlo
/// null distribution (fraction of replicate statistics ≥ the observed one).
pub fn lilliefors_test_with(
    sample: &[f64],
    replicates: usize,
    seed: u64,
) -> Result<TestResult, StatsError> {
    assert!(replicates > 0, "at least one replicate required");
    let n = sample.len();
    if n < 4 {
        return Err(StatsError::TooFewSamples { n });
    }
    let normal = Normal::new(0.0, 1.0).unwrap();
    let d = lilliefors_statistic(sample, &normal).ok_or(StatsError::ZeroVariance)?;
    let null = null_distribution(n, replicates, seed);
    let below = null.partition_point(|&s| s < d);
    let p_value = (null.len() - below) as f64 / null.len() as f64;
    Ok(TestResult {
        method: Method::Lilliefors,
        mode: Mode::MonteCarlo,
        statistic: d,
        p_value,
        n_effective: n,
    })
}
