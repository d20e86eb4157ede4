//! Multi-Section Vector Quantization.
//!
//! A signature's feature sequence is split into S contiguous sections
//! (initial / middle / final for S = 3). For each section, a per-user
//! codebook of 2^b centroids is trained with binary-splitting LBG on the
//! pooled enrolment vectors of that section. A probe's dissimilarity to the
//! user is its mean quantization distortion: per section, the mean squared
//! Euclidean distance of each vector to its nearest centroid, averaged over
//! sections.
//!
//! LBG here doubles the codebook by splitting every centroid `c` into
//! `{c, c + δ}` with `δ` a small seeded random direction scaled to the data
//! spread. Keeping `c` itself in the split means each level starts no worse
//! than the previous level ended, which makes training distortion
//! non-increasing in the bit count — and a purely multiplicative `c(1 ± ε)`
//! split cannot separate point clouds that are symmetric about the origin,
//! so the random direction also fixes convergence on such data.

use std::path::Path;

use rand::Rng;
use rand_distr::StandardNormal;
use thiserror::Error;

use crate::features::FeatureSequence;
use crate::rng;

/// A trained vector quantizer: 2^bits centroids of one dimension.
#[derive(Debug, Clone, PartialEq)]
pub struct Codebook {
    bits: u8,
    dim: usize,
    centroids: Vec<f64>, // 2^bits rows, flat
}

impl Codebook {
    pub fn new(bits: u8, dim: usize, centroids: Vec<f64>) -> Self {
        assert!((1..=8).contains(&bits), "bits must be in [1, 8]");
        assert!(dim > 0 && centroids.len() == (1 << bits) * dim);
        Codebook { bits, dim, centroids }
    }

    pub fn bits(&self) -> u8 {
        self.bits
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn len(&self) -> usize {
        1 << self.bits
    }

    pub fn is_empty(&self) -> bool {
        false // a codebook always holds 2^bits >= 2 centroids
    }

    pub fn centroid(&self, i: usize) -> &[f64] {
        &self.centroids[i * self.dim..(i + 1) * self.dim]
    }

    /// Index of the nearest centroid (ties -> lowest index) and the squared
    /// Euclidean distance to it.
    pub fn nearest(&self, v: &[f64]) -> (usize, f64) {
        debug_assert_eq!(v.len(), self.dim);
        let mut best = (0, f64::INFINITY);
        for i in 0..self.len() {
            let d = sq_dist(self.centroid(i), v);
            if d < best.1 {
                best = (i, d);
            }
        }
        best
    }
}

fn sq_dist(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum()
}

/// Per-user model: one codebook per signature section, initial → final.
#[derive(Debug, Clone, PartialEq)]
pub struct MsvqModel {
    pub user_id: String,
    codebooks: Vec<Codebook>,
}

impl MsvqModel {
    pub fn new(user_id: impl Into<String>, codebooks: Vec<Codebook>) -> Self {
        assert!(!codebooks.is_empty());
        let (bits, dim) = (codebooks[0].bits(), codebooks[0].dim());
        assert!(
            codebooks.iter().all(|c| c.bits() == bits && c.dim() == dim),
            "section codebooks must share bits and dimension"
        );
        MsvqModel { user_id: user_id.into(), codebooks }
    }

    pub fn n_sections(&self) -> usize {
        self.codebooks.len()
    }

    pub fn bits(&self) -> u8 {
        self.codebooks[0].bits()
    }

    pub fn dim(&self) -> usize {
        self.codebooks[0].dim()
    }

    pub fn codebooks(&self) -> &[Codebook] {
        &self.codebooks
    }
}

/// LBG training knobs. `split_epsilon` scales the centroid-splitting offset
/// relative to the data spread; Lloyd iterations stop when the relative
/// distortion improvement drops below `rel_improvement_threshold` or after
/// `max_iters` update steps per level.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LbgParams {
    pub split_epsilon: f64,
    pub max_iters: usize,
    pub rel_improvement_threshold: f64,
    pub seed: u64,
}

impl Default for LbgParams {
    fn default() -> Self {
        LbgParams { split_epsilon: 0.05, max_iters: 50, rel_improvement_threshold: 1e-6, seed: 0x1b9 }
    }
}

/// Mean squared training distortion after each Lloyd pass, per split level.
/// `levels[0]` holds the single-centroid (0-bit) distortion; `levels[b]` the
/// iterations of the 2^b-centroid level. Within a level and across level
/// boundaries the concatenated values never increase.
#[derive(Debug, Clone, PartialEq)]
pub struct LbgTrace {
    pub levels: Vec<Vec<f64>>,
}

impl LbgTrace {
    /// Final training distortion of the completed codebook.
    pub fn final_distortion(&self) -> f64 {
        *self.levels.last().unwrap().last().unwrap()
    }
}

#[derive(Debug, Error, PartialEq)]
pub enum MsvqError {
    #[error("sequence of length {len} cannot be split into {sections} sections")]
    TooShort { len: usize, sections: usize },
    #[error("no training vectors")]
    EmptyTrainingSet,
    #[error("dimension mismatch ({a} vs {b})")]
    DimensionMismatch { a: usize, b: usize },
    #[error("model file line {line}: {reason}")]
    MalformedModel { line: usize, reason: String },
    #[error("I/O error on {path}: {message}")]
    Io { path: std::path::PathBuf, message: String },
}

/// Split a sequence into `sections` contiguous parts whose lengths differ by
/// at most one; with `len = q·sections + r`, the first `r` parts get q + 1
/// vectors.
pub fn split_sections(
    seq: &FeatureSequence,
    sections: usize,
) -> Result<Vec<FeatureSequence>, MsvqError> {
    assert!(sections >= 1);
    let len = seq.len();
    if len < sections {
        return Err(MsvqError::TooShort { len, sections });
    }
    let q = len / sections;
    let r = len % sections;
    let mut parts = Vec::with_capacity(sections);
    let mut start = 0;
    for i in 0..sections {
        let part_len = q + usize::from(i < r);
        let rows = seq.data()[start * seq.dim..(start + part_len) * seq.dim].to_vec();
        parts.push(FeatureSequence::from_rows(seq.dim, rows));
        start += part_len;
    }
    Ok(parts)
}

/// Train a 2^bits codebook with binary-splitting LBG. Deterministic given
/// `params.seed`.
pub fn lbg_train(
    data: &FeatureSequence,
    bits: u8,
    params: &LbgParams,
) -> Result<Codebook, MsvqError> {
    lbg_train_traced(data, bits, params).map(|(cb, _)| cb)
}

/// As [`lbg_train`], also returning the per-level distortion trace.
pub fn lbg_train_traced(
    data: &FeatureSequence,
    bits: u8,
    params: &LbgParams,
) -> Result<(Codebook, LbgTrace), MsvqError> {
    assert!((1..=8).contains(&bits), "bits must be in [1, 8]");
    assert!(params.split_epsilon > 0.0 && params.rel_improvement_threshold >= 0.0);
    if data.is_empty() {
        return Err(MsvqError::EmptyTrainingSet);
    }
    let dim = data.dim;
    let n = data.len();

    // global centroid and RMS spread around it
    let mut global = vec![0.0; dim];
    for row in data.rows() {
        for (g, v) in global.iter_mut().zip(row) {
            *g += v;
        }
    }
    for g in &mut global {
        *g /= n as f64;
    }
    let spread =
        (data.rows().map(|row| sq_dist(row, &global)).sum::<f64>() / n as f64).sqrt();

    if spread == 0.0 {
        // every vector is the global centroid; all levels are exact already
        let copies = (1usize << bits) * dim;
        let centroids: Vec<f64> =
            std::iter::repeat(global.iter().copied()).take(1 << bits).flatten().collect();
        debug_assert_eq!(centroids.len(), copies);
        let trace = LbgTrace { levels: (0..=bits).map(|_| vec![0.0]).collect() };
        return Ok((Codebook::new(bits, dim, centroids), trace));
    }

    let mut rng = rng::stream(params.seed, &[]);
    let delta_norm = params.split_epsilon * spread;
    let mut delta = |rng: &mut rand_chacha::ChaCha12Rng| -> Vec<f64> {
        let mut d: Vec<f64> = (0..dim).map(|_| rng.sample::<f64, _>(StandardNormal)).collect();
        let norm = d.iter().map(|v| v * v).sum::<f64>().sqrt();
        if norm == 0.0 {
            d[0] = delta_norm;
        } else {
            for v in &mut d {
                *v *= delta_norm / norm;
            }
        }
        d
    };

    let mut centroids = global.clone();
    let mut levels = vec![vec![assign(data, &centroids, dim).1]];

    for _level in 1..=bits {
        // split every centroid c into {c, c + delta}
        let mut split = Vec::with_capacity(centroids.len() * 2);
        for c in centroids.chunks_exact(dim) {
            split.extend_from_slice(c);
            let d = delta(&mut rng);
            split.extend(c.iter().zip(&d).map(|(v, dv)| v + dv));
        }
        centroids = split;
        let k = centroids.len() / dim;

        let mut trace = Vec::new();
        let mut prev: Option<f64> = None;
        let mut saved = centroids.clone();
        let mut updates = 0;
        loop {
            let (mut cells, mut distortion) = assign(data, &centroids, dim);
            // repair empty cells by re-splitting the most populous cell's
            // centroid; bounded, since data with fewer distinct vectors than
            // centroids can never fill every cell
            let mut rounds = 0;
            while rounds < 4 && count_cells(&cells, k).iter().any(|&c| c == 0) {
                repair_empty_cells(&mut centroids, &cells, k, dim, &mut delta, &mut rng);
                let (c2, d2) = assign(data, &centroids, dim);
                cells = c2;
                distortion = d2;
                rounds += 1;
            }
            if let Some(p) = prev {
                // a mean update can only lower the distortion; if rounding
                // noise says otherwise, keep the recorded state and stop
                if distortion > p {
                    centroids = saved;
                    break;
                }
            }
            trace.push(distortion);
            if distortion == 0.0 {
                break;
            }
            if let Some(p) = prev {
                if p - distortion <= params.rel_improvement_threshold * p {
                    break;
                }
            }
            if updates >= params.max_iters {
                break;
            }
            saved = centroids.clone();
            update_means(&mut centroids, data, &cells, k, dim);
            prev = Some(distortion);
            updates += 1;
        }
        levels.push(trace);
    }

    Ok((Codebook::new(bits, dim, centroids), LbgTrace { levels }))
}

/// Nearest-centroid assignment; returns per-vector cell indices and the mean
/// squared distortion.
fn assign(data: &FeatureSequence, centroids: &[f64], dim: usize) -> (Vec<usize>, f64) {
    let k = centroids.len() / dim;
    let mut cells = Vec::with_capacity(data.len());
    let mut total = 0.0;
    for row in data.rows() {
        let mut best = (0usize, f64::INFINITY);
        for i in 0..k {
            let d = sq_dist(&centroids[i * dim..(i + 1) * dim], row);
            if d < best.1 {
                best = (i, d);
            }
        }
        cells.push(best.0);
        total += best.1;
    }
    (cells, total / data.len() as f64)
}

fn count_cells(cells: &[usize], k: usize) -> Vec<usize> {
    let mut counts = vec![0usize; k];
    for &c in cells {
        counts[c] += 1;
    }
    counts
}

fn repair_empty_cells(
    centroids: &mut [f64],
    cells: &[usize],
    k: usize,
    dim: usize,
    delta: &mut impl FnMut(&mut rand_chacha::ChaCha12Rng) -> Vec<f64>,
    rng: &mut rand_chacha::ChaCha12Rng,
) {
    let counts = count_cells(cells, k);
    let populous = counts
        .iter()
        .enumerate()
        .max_by(|a, b| a.1.cmp(b.1).then(b.0.cmp(&a.0)))
        .map(|(i, _)| i)
        .unwrap();
    let donor: Vec<f64> = centroids[populous * dim..(populous + 1) * dim].to_vec();
    for e in 0..k {
        if counts[e] == 0 {
            let d = delta(rng);
            for (j, (v, dv)) in donor.iter().zip(&d).enumerate() {
                centroids[e * dim + j] = v + dv;
            }
        }
    }
}

/// Replace each non-empty cell's centroid by the mean of its vectors.
fn update_means(centroids: &mut [f64], data: &FeatureSequence, cells: &[usize], k: usize, dim: usize) {
    let mut sums = vec![0.0; k * dim];
    let mut counts = vec![0usize; k];
    for (row, &c) in data.rows().zip(cells) {
        counts[c] += 1;
        for (j, v) in row.iter().enumerate() {
            sums[c * dim + j] += v;
        }
    }
    for c in 0..k {
        if counts[c] > 0 {
            for j in 0..dim {
                centroids[c * dim + j] = sums[c * dim + j] / counts[c] as f64;
            }
        }
    }
}

/// Train the per-section codebooks of one user from enrolment sequences.
/// Section i pools the i-th section of every training sequence; its codebook
/// seed is derived from `params.seed` and i.
pub fn build_msvq_model(
    user_id: impl Into<String>,
    training: &[FeatureSequence],
    sections: usize,
    bits: u8,
    params: &LbgParams,
) -> Result<MsvqModel, MsvqError> {
    if training.is_empty() {
        return Err(MsvqError::EmptyTrainingSet);
    }
    let dim = training[0].dim;
    if let Some(other) = training.iter().find(|t| t.dim != dim) {
        return Err(MsvqError::DimensionMismatch { a: dim, b: other.dim });
    }
    let split: Vec<Vec<FeatureSequence>> = training
        .iter()
        .map(|seq| split_sections(seq, sections))
        .collect::<Result<_, _>>()?;

    let mut codebooks = Vec::with_capacity(sections);
    for i in 0..sections {
        let parts: Vec<&FeatureSequence> = split.iter().map(|s| &s[i]).collect();
        let pooled = FeatureSequence::concat(&parts);
        let section_params =
            LbgParams { seed: rng::mix_seed(params.seed, &[i as u64]), ..*params };
        codebooks.push(lbg_train(&pooled, bits, &section_params)?);
    }
    Ok(MsvqModel::new(user_id, codebooks))
}

/// Quantization distortion of a probe against a user model: per section, the
/// mean squared distance of each vector to the section codebook's nearest
/// centroid; averaged over sections.
pub fn msvq_distortion(probe: &FeatureSequence, model: &MsvqModel) -> Result<f64, MsvqError> {
    if probe.dim != model.dim() {
        return Err(MsvqError::DimensionMismatch { a: probe.dim, b: model.dim() });
    }
    let parts = split_sections(probe, model.n_sections())?;
    let mut total = 0.0;
    for (part, codebook) in parts.iter().zip(model.codebooks()) {
        let section: f64 =
            part.rows().map(|row| codebook.nearest(row).1).sum::<f64>() / part.len() as f64;
        total += section;
    }
    Ok(total / parts.len() as f64)
}

/// Serialize a model to its text form: a header line
/// `#msvq v1 user=<id> sections=<S> bits=<b> dim=<d>` followed by one
/// centroid per line, section-major. Floats use shortest round-trip
/// formatting, so parse_model inverts this bit-exactly.
pub fn write_model(model: &MsvqModel) -> String {
    let mut out = format!(
        "#msvq v1 user={} sections={} bits={} dim={}\n",
        model.user_id,
        model.n_sections(),
        model.bits(),
        model.dim()
    );
    for codebook in model.codebooks() {
        for i in 0..codebook.len() {
            let row: Vec<String> = codebook.centroid(i).iter().map(f64::to_string).collect();
            out.push_str(&row.join(" "));
            out.push('\n');
        }
    }
    out
}

pub fn parse_model(text: &str) -> Result<MsvqModel, MsvqError> {
    let malformed = |line: usize, reason: &str| MsvqError::MalformedModel {
        line,
        reason: reason.to_string(),
    };
    let mut lines = text.lines();
    let header = lines.next().ok_or_else(|| malformed(1, "empty file"))?;
    let mut fields = header.split_whitespace();
    if fields.next() != Some("#msvq") || fields.next() != Some("v1") {
        return Err(malformed(1, "expected `#msvq v1` header"));
    }
    let (mut user, mut sections, mut bits, mut dim) = (None, None, None, None);
    for field in fields {
        match field.split_once('=') {
            Some(("user", v)) => user = Some(v.to_string()),
            Some(("sections", v)) => sections = v.parse::<usize>().ok(),
            Some(("bits", v)) => bits = v.parse::<u8>().ok(),
            Some(("dim", v)) => dim = v.parse::<usize>().ok(),
            _ => return Err(malformed(1, "unknown header field")),
        }
    }
    let (user, sections, bits, dim) = match (user, sections, bits, dim) {
        (Some(u), Some(s), Some(b), Some(d))
            if s >= 1 && (1..=8).contains(&b) && d >= 1 =>
        {
            (u, s, b, d)
        }
        _ => return Err(malformed(1, "header needs user=, sections=, bits=, dim=")),
    };

    let rows_per_book = 1usize << bits;
    let mut codebooks = Vec::with_capacity(sections);
    let mut current: Vec<f64> = Vec::with_capacity(rows_per_book * dim);
    for (idx, raw) in lines.enumerate() {
        let line = idx + 2;
        let text = raw.trim();
        if text.is_empty() {
            continue;
        }
        let values: Vec<f64> = text
            .split_whitespace()
            .map(str::parse)
            .collect::<Result<_, _>>()
            .map_err(|_| malformed(line, "non-numeric centroid value"))?;
        if values.len() != dim {
            return Err(malformed(line, "wrong centroid dimension"));
        }
        current.extend(values);
        if current.len() == rows_per_book * dim {
            codebooks.push(Codebook::new(bits, dim, std::mem::take(&mut current)));
        }
    }
    if !current.is_empty() || codebooks.len() != sections {
        return Err(MsvqError::MalformedModel {
            line: text.lines().count(),
            reason: format!(
                "expected {} centroid rows, found fewer or extra",
                sections * rows_per_book
            ),
        });
    }
    Ok(MsvqModel::new(user, codebooks))
}

pub fn save_model(model: &MsvqModel, path: &Path) -> Result<(), MsvqError> {
    std::fs::write(path, write_model(model)).map_err(|e| MsvqError::Io {
        path: path.to_path_buf(),
        message: e.to_string(),
    })
}

pub fn load_model(path: &Path) -> Result<MsvqModel, MsvqError> {
    let text = std::fs::read_to_string(path).map_err(|e| MsvqError::Io {
        path: path.to_path_buf(),
        message: e.to_string(),
    })?;
    parse_model(&text)
}
