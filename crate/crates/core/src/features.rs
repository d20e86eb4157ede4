//! Feature extraction: turn an ink record into the multivariate sequence the
//! matchers consume.
//!
//! Positions are normalized per record (translate to the centroid, divide
//! both coordinates by the larger positional standard deviation) so matching
//! is invariant to where on the tablet — and at what size — a text was
//! written. Derivative channels are index-wise central differences of the
//! (normalized) base channels.

use thiserror::Error;

use crate::ink::InkRecord;

/// Which base channels a feature vector carries.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct ChannelSet {
    pub x: bool,
    pub y: bool,
    pub pressure: bool,
}

impl Default for ChannelSet {
    fn default() -> Self {
        ChannelSet { x: true, y: true, pressure: false }
    }
}

impl ChannelSet {
    pub fn count(self) -> usize {
        usize::from(self.x) + usize::from(self.y) + usize::from(self.pressure)
    }
}

/// Spatial normalization applied before derivatives are taken.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum Normalization {
    /// Subtract the positional centroid, then divide x and y by the larger
    /// of the two positional standard deviations.
    #[default]
    CentroidScale,
    /// Use raw tablet coordinates.
    None,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FeatureConfig {
    pub channels: ChannelSet,
    pub include_derivatives: bool,
    pub normalization: Normalization,
}

impl Default for FeatureConfig {
    /// Normalized x, y plus their first derivatives: dimension 4.
    fn default() -> Self {
        FeatureConfig {
            channels: ChannelSet::default(),
            include_derivatives: true,
            normalization: Normalization::CentroidScale,
        }
    }
}

impl FeatureConfig {
    pub fn dim(&self) -> usize {
        self.channels.count() * if self.include_derivatives { 2 } else { 1 }
    }
}

/// A sequence of feature vectors stored as one flat row-major buffer.
#[derive(Debug, Clone, PartialEq)]
pub struct FeatureSequence {
    pub dim: usize,
    data: Vec<f64>,
}

#[derive(Debug, Error, PartialEq)]
pub enum FeatureError {
    #[error("all samples lie at one point; cannot scale-normalize")]
    DegenerateGeometry,
    #[error("channel set selects no channels")]
    EmptyChannelSet,
}

impl FeatureSequence {
    pub fn from_rows(dim: usize, rows: Vec<f64>) -> Self {
        assert!(dim > 0 && rows.len() % dim == 0, "flat buffer must hold whole rows");
        FeatureSequence { dim, data: rows }
    }

    pub fn len(&self) -> usize {
        self.data.len() / self.dim
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    pub fn row(&self, i: usize) -> &[f64] {
        &self.data[i * self.dim..(i + 1) * self.dim]
    }

    pub fn rows(&self) -> impl Iterator<Item = &[f64]> + '_ {
        self.data.chunks_exact(self.dim)
    }

    pub fn data(&self) -> &[f64] {
        &self.data
    }

    /// Concatenate several sequences of equal dimension into one.
    pub fn concat(parts: &[&FeatureSequence]) -> FeatureSequence {
        assert!(!parts.is_empty());
        let dim = parts[0].dim;
        assert!(parts.iter().all(|p| p.dim == dim), "all parts must share one dimension");
        let data = parts.iter().flat_map(|p| p.data.iter().copied()).collect();
        FeatureSequence { dim, data }
    }
}

fn mean(values: &[f64]) -> f64 {
    values.iter().sum::<f64>() / values.len() as f64
}

/// Population standard deviation (records are whole populations here, not
/// samples of something larger).
fn std_dev(values: &[f64]) -> f64 {
    let m = mean(values);
    (values.iter().map(|v| (v - m).powi(2)).sum::<f64>() / values.len() as f64).sqrt()
}

/// Extract the configured channels from a record.
///
/// The output has exactly one row per input sample, laid out as the selected
/// base channels (x, y, pressure order) followed by their derivatives when
/// enabled. Derivatives are central differences over the sample index,
/// one-sided at the endpoints.
pub fn extract_features(
    record: &InkRecord,
    config: &FeatureConfig,
) -> Result<FeatureSequence, FeatureError> {
    if config.channels.count() == 0 {
        return Err(FeatureError::EmptyChannelSet);
    }
    let samples = record.samples();
    let n = samples.len();

    let mut xs: Vec<f64> = samples.iter().map(|s| s.x).collect();
    let mut ys: Vec<f64> = samples.iter().map(|s| s.y).collect();
    let uses_position = config.channels.x || config.channels.y;
    if uses_position && config.normalization == Normalization::CentroidScale {
        let (cx, cy) = (mean(&xs), mean(&ys));
        let scale = std_dev(&xs).max(std_dev(&ys));
        if scale == 0.0 {
            return Err(FeatureError::DegenerateGeometry);
        }
        for v in &mut xs {
            *v = (*v - cx) / scale;
        }
        for v in &mut ys {
            *v = (*v - cy) / scale;
        }
    }

    let mut base: Vec<&[f64]> = Vec::new();
    let pressures: Vec<f64>;
    if config.channels.x {
        base.push(&xs);
    }
    if config.channels.y {
        base.push(&ys);
    }
    if config.channels.pressure {
        pressures = samples.iter().map(|s| s.pressure).collect();
        base.push(&pressures);
    }

    // central differences over index, one-sided at the endpoints
    let diff = |series: &[f64], i: usize| -> f64 {
        if i == 0 {
            series[1] - series[0]
        } else if i == n - 1 {
            series[n - 1] - series[n - 2]
        } else {
            (series[i + 1] - series[i - 1]) / 2.0
        }
    };

    let dim = config.dim();
    let mut data = Vec::with_capacity(n * dim);
    for i in 0..n {
        for series in &base {
            data.push(series[i]);
        }
        if config.include_derivatives {
            for series in &base {
                data.push(diff(series, i));
            }
        }
    }
    Ok(FeatureSequence::from_rows(dim, data))
}
