//! Dynamic time warping between multivariate feature sequences.
//!
//! The full cost grid is evaluated — no warping-window constraint — with the
//! classic three-neighbour recurrence: a cell's cost is its local distance
//! plus the cheapest of the cells directly left, below, and diagonally
//! below-left. Boundary cells outside the grid count as infinite, so every
//! warping path runs from the first sample pair to the last.

use thiserror::Error;

use crate::features::FeatureSequence;

/// Distance between two aligned feature vectors.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum LocalMetric {
    #[default]
    Euclidean,
    Manhattan,
}

impl LocalMetric {
    fn eval(self, a: &[f64], b: &[f64]) -> f64 {
        match self {
            LocalMetric::Euclidean => a
                .iter()
                .zip(b)
                .map(|(x, y)| (x - y) * (x - y))
                .sum::<f64>()
                .sqrt(),
            LocalMetric::Manhattan => a.iter().zip(b).map(|(x, y)| (x - y).abs()).sum(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DtwConfig {
    pub local_metric: LocalMetric,
    /// Divide the accumulated path cost by the sum of the two sequence
    /// lengths, making scores comparable across texts of different length.
    pub normalize_by_path: bool,
}

impl Default for DtwConfig {
    fn default() -> Self {
        DtwConfig { local_metric: LocalMetric::Euclidean, normalize_by_path: true }
    }
}

#[derive(Debug, Error, PartialEq)]
pub enum DtwError {
    #[error("sequences have different dimensions ({a} vs {b})")]
    DimensionMismatch { a: usize, b: usize },
    #[error("cannot warp an empty sequence")]
    EmptySequence,
    #[error("reference set is empty")]
    EmptyReferenceSet,
}

/// Alignment cost between two sequences.
pub fn dtw_distance(
    a: &FeatureSequence,
    b: &FeatureSequence,
    config: &DtwConfig,
) -> Result<f64, DtwError> {
    if a.is_empty() || b.is_empty() {
        return Err(DtwError::EmptySequence);
    }
    if a.dim != b.dim {
        return Err(DtwError::DimensionMismatch { a: a.dim, b: b.dim });
    }
    let (n, m) = (a.len(), b.len());

    // two rolling rows of the (n+1) x (m+1) accumulated-cost grid
    let mut prev = vec![f64::INFINITY; m + 1];
    let mut cur = vec![f64::INFINITY; m + 1];
    prev[0] = 0.0;
    for i in 1..=n {
        cur[0] = f64::INFINITY;
        let ra = a.row(i - 1);
        for j in 1..=m {
            let local = config.local_metric.eval(ra, b.row(j - 1));
            cur[j] = local + prev[j].min(cur[j - 1]).min(prev[j - 1]);
        }
        std::mem::swap(&mut prev, &mut cur);
    }

    let cost = prev[m];
    Ok(if config.normalize_by_path { cost / (n + m) as f64 } else { cost })
}

/// How per-reference distances collapse into one enrolment score.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum Aggregation {
    #[default]
    Min,
    Mean,
}

impl Aggregation {
    pub fn as_str(self) -> &'static str {
        match self {
            Aggregation::Min => "min",
            Aggregation::Mean => "mean",
        }
    }

    /// Collapse a non-empty distance list.
    pub fn apply(self, distances: &[f64]) -> f64 {
        assert!(!distances.is_empty());
        match self {
            Aggregation::Min => distances.iter().copied().fold(f64::INFINITY, f64::min),
            Aggregation::Mean => distances.iter().sum::<f64>() / distances.len() as f64,
        }
    }
}

/// Dissimilarity between a probe and a multi-sample enrolment set: the minimum
/// or the mean of the probe's DTW distance to each reference.
pub fn aggregate_reference(
    probe: &FeatureSequence,
    refs: &[FeatureSequence],
    mode: Aggregation,
    config: &DtwConfig,
) -> Result<f64, DtwError> {
    if refs.is_empty() {
        return Err(DtwError::EmptyReferenceSet);
    }
    let distances = refs
        .iter()
        .map(|r| dtw_distance(probe, r, config))
        .collect::<Result<Vec<f64>, _>>()?;
    Ok(mode.apply(&distances))
}
