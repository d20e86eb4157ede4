//! Allographic text-dependent recognition.
//!
//! A word record is segmented into in-air and on-surface strokes. Each
//! stroke is resampled to R arc-length-equidistant points and normalized,
//! then mapped to its nearest prototype in a self-organizing map trained per
//! (word, channel). The word becomes two short sequences of grid
//! coordinates; words are compared by DTW whose local cost is the Euclidean
//! distance between grid coordinates, exploiting the map's property that
//! nearby cells hold similar stroke shapes. Channel scores combine by
//! weighted mean, multi-word scores by plain mean.

use std::path::Path;

use rand::seq::SliceRandom;
use rand::Rng;
use thiserror::Error;

use crate::dtw::{dtw_distance, DtwConfig, LocalMetric};
use crate::features::FeatureSequence;
use crate::ink::{segment_strokes, InkRecord, PenState, Stroke, TaskId};
use crate::rng;

/// A trained stroke-prototype map for one word and one channel.
#[derive(Debug, Clone, PartialEq)]
pub struct SomCatalogue {
    pub word_id: TaskId,
    pub channel: PenState,
    grid: usize,
    resample: usize,
    prototypes: Vec<f64>, // grid² rows of dimension 2·resample
}

impl SomCatalogue {
    pub fn new(
        word_id: TaskId,
        channel: PenState,
        grid: usize,
        resample: usize,
        prototypes: Vec<f64>,
    ) -> Self {
        assert!(grid >= 2 && resample >= 2);
        assert_eq!(prototypes.len(), grid * grid * 2 * resample);
        SomCatalogue { word_id, channel, grid, resample, prototypes }
    }

    pub fn grid(&self) -> usize {
        self.grid
    }

    pub fn resample(&self) -> usize {
        self.resample
    }

    pub fn prototype(&self, row: usize, col: usize) -> &[f64] {
        let dim = 2 * self.resample;
        let i = row * self.grid + col;
        &self.prototypes[i * dim..(i + 1) * dim]
    }

    /// Grid coordinate of the nearest prototype; ties resolve to the
    /// lexicographically smallest (row, col).
    pub fn nearest_coord(&self, v: &[f64]) -> (u16, u16) {
        debug_assert_eq!(v.len(), 2 * self.resample);
        let mut best = ((0u16, 0u16), f64::INFINITY);
        for row in 0..self.grid {
            for col in 0..self.grid {
                let d = sq_dist(self.prototype(row, col), v);
                // row-major scan order makes strict `<` lexicographic
                if d < best.1 {
                    best = ((row as u16, col as u16), d);
                }
            }
        }
        best.0
    }
}

fn sq_dist(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum()
}

/// SOM training schedule. Learning rate and neighbourhood radius decay
/// linearly from their initial to their final value across epochs.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SomParams {
    pub grid: usize,
    pub resample: usize,
    pub epochs: usize,
    pub initial_rate: f64,
    pub final_rate: f64,
    pub initial_radius: f64,
    pub final_radius: f64,
    pub seed: u64,
}

impl Default for SomParams {
    fn default() -> Self {
        SomParams {
            grid: 8,
            resample: 16,
            epochs: 30,
            initial_rate: 0.5,
            final_rate: 0.02,
            initial_radius: 4.0,
            final_radius: 0.5,
            seed: 0x50f,
        }
    }
}

impl SomParams {
    fn validate(&self) {
        assert!(self.grid >= 2 && self.resample >= 4 && self.epochs >= 1);
        assert!(self.initial_rate > 0.0 && self.final_rate > 0.0);
        assert!(self.initial_radius > 0.0 && self.final_radius > 0.0);
        assert!(self.initial_rate >= self.final_rate && self.initial_radius >= self.final_radius);
    }
}

/// A word re-encoded as per-channel sequences of prototype grid coordinates.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct EncodedWord {
    pub word_id: TaskId,
    pub air: Vec<(u16, u16)>,
    pub surface: Vec<(u16, u16)>,
}

impl EncodedWord {
    pub fn channel(&self, channel: PenState) -> &[(u16, u16)] {
        match channel {
            PenState::InAir => &self.air,
            PenState::OnSurface => &self.surface,
        }
    }
}

#[derive(Debug, Error, PartialEq)]
pub enum AtdrError {
    #[error("stroke has fewer than 2 samples or zero path length")]
    DegenerateStroke,
    #[error("no training strokes")]
    EmptyTrainingSet,
    #[error("stroke vector dimension {found} does not match catalogue dimension {expected}")]
    DimensionMismatch { expected: usize, found: usize },
    #[error("catalogue mismatch: {0}")]
    CatalogueMismatch(String),
    #[error("record has no usable strokes")]
    NoUsableStrokes,
    #[error("encoded words belong to different tasks")]
    WordMismatch,
    #[error("requested channel is empty in one of the words")]
    EmptyChannel,
    #[error("cannot fuse an empty list of word scores")]
    EmptyList,
    #[error("catalogue file line {line}: {reason}")]
    MalformedCatalogue { line: usize, reason: String },
    #[error("I/O error on {path}: {message}")]
    Io { path: std::path::PathBuf, message: String },
}

/// Resample a stroke to `resample` points equally spaced along its polyline
/// (endpoints included), translate to zero centroid, scale by the larger
/// positional standard deviation, and interleave as (x1, y1, …, xR, yR).
pub fn preprocess_stroke(stroke: &Stroke<'_>, resample: usize) -> Result<Vec<f64>, AtdrError> {
    assert!(resample >= 2);
    let pts: Vec<(f64, f64)> = stroke.samples.iter().map(|s| (s.x, s.y)).collect();
    if pts.len() < 2 {
        return Err(AtdrError::DegenerateStroke);
    }

    let mut cumulative = Vec::with_capacity(pts.len());
    cumulative.push(0.0);
    for w in pts.windows(2) {
        let (dx, dy) = (w[1].0 - w[0].0, w[1].1 - w[0].1);
        cumulative.push(cumulative.last().unwrap() + (dx * dx + dy * dy).sqrt());
    }
    let total = *cumulative.last().unwrap();
    if total == 0.0 {
        return Err(AtdrError::DegenerateStroke);
    }

    let mut resampled = Vec::with_capacity(resample);
    let mut seg = 0;
    for i in 0..resample {
        let target = total * i as f64 / (resample - 1) as f64;
        while seg + 1 < cumulative.len() - 1 && cumulative[seg + 1] < target {
            seg += 1;
        }
        let span = cumulative[seg + 1] - cumulative[seg];
        let frac = if span == 0.0 { 0.0 } else { (target - cumulative[seg]) / span };
        let (x0, y0) = pts[seg];
        let (x1, y1) = pts[seg + 1];
        resampled.push((x0 + frac * (x1 - x0), y0 + frac * (y1 - y0)));
    }

    let n = resampled.len() as f64;
    let cx = resampled.iter().map(|p| p.0).sum::<f64>() / n;
    let cy = resampled.iter().map(|p| p.1).sum::<f64>() / n;
    let var_x = resampled.iter().map(|p| (p.0 - cx).powi(2)).sum::<f64>() / n;
    let var_y = resampled.iter().map(|p| (p.1 - cy).powi(2)).sum::<f64>() / n;
    let scale = var_x.max(var_y).sqrt();
    if scale == 0.0 {
        // nonzero path length but all resampled points coincide cannot
        // happen; guard anyway for pathological float inputs
        return Err(AtdrError::DegenerateStroke);
    }

    let mut out = Vec::with_capacity(2 * resample);
    for (x, y) in resampled {
        out.push((x - cx) / scale);
        out.push((y - cy) / scale);
    }
    Ok(out)
}

/// Train a self-organizing map on preprocessed stroke vectors. Prototypes
/// initialize uniformly at random inside the training data's bounding box;
/// each epoch presents all strokes in a seeded shuffled order.
pub fn train_catalogue(
    word_id: TaskId,
    channel: PenState,
    strokes: &[Vec<f64>],
    params: &SomParams,
) -> Result<SomCatalogue, AtdrError> {
    train_catalogue_traced(word_id, channel, strokes, params).map(|(c, _)| c)
}

/// Mean quantization errors before and after SOM training.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SomTrainStats {
    pub initial_error: f64,
    pub final_error: f64,
}

/// As [`train_catalogue`], also reporting the mean quantization error of the
/// freshly initialized map and of the trained one.
pub fn train_catalogue_traced(
    word_id: TaskId,
    channel: PenState,
    strokes: &[Vec<f64>],
    params: &SomParams,
) -> Result<(SomCatalogue, SomTrainStats), AtdrError> {
    params.validate();
    if strokes.is_empty() {
        return Err(AtdrError::EmptyTrainingSet);
    }
    let dim = 2 * params.resample;
    if let Some(bad) = strokes.iter().find(|s| s.len() != dim) {
        return Err(AtdrError::DimensionMismatch { expected: dim, found: bad.len() });
    }

    let g = params.grid;
    let mut rng = rng::stream(params.seed, &[]);
    // random init inside the per-dimension bounding box of the data: random
    // box points start far off the stroke manifold, so training reliably
    // ends with a lower quantization error than it starts with
    let mut lo = vec![f64::INFINITY; dim];
    let mut hi = vec![f64::NEG_INFINITY; dim];
    for s in strokes {
        for (d, &v) in s.iter().enumerate() {
            lo[d] = lo[d].min(v);
            hi[d] = hi[d].max(v);
        }
    }
    let mut prototypes = Vec::with_capacity(g * g * dim);
    for _ in 0..g * g {
        for d in 0..dim {
            prototypes.push(if lo[d] < hi[d] { rng.gen_range(lo[d]..hi[d]) } else { lo[d] });
        }
    }

    let catalogue_of = |prototypes: &Vec<f64>| {
        SomCatalogue::new(word_id, channel, g, params.resample, prototypes.clone())
    };
    let initial_error = mean_quantization_error(strokes, &catalogue_of(&prototypes));

    let mut order: Vec<usize> = (0..strokes.len()).collect();
    for epoch in 0..params.epochs {
        let progress = if params.epochs == 1 {
            0.0
        } else {
            epoch as f64 / (params.epochs - 1) as f64
        };
        let rate = params.initial_rate + progress * (params.final_rate - params.initial_rate);
        let radius =
            params.initial_radius + progress * (params.final_radius - params.initial_radius);
        let two_sigma_sq = 2.0 * radius * radius;

        order.shuffle(&mut rng);
        for &si in &order {
            let v = &strokes[si];
            // winner: nearest prototype, ties to the smallest (row, col)
            let mut winner = (0usize, f64::INFINITY);
            for p in 0..g * g {
                let d = sq_dist(&prototypes[p * dim..(p + 1) * dim], v);
                if d < winner.1 {
                    winner = (p, d);
                }
            }
            let (wr, wc) = (winner.0 / g, winner.0 % g);
            for p in 0..g * g {
                let (r, c) = (p / g, p % g);
                let grid_sq =
                    (r as f64 - wr as f64).powi(2) + (c as f64 - wc as f64).powi(2);
                let h = (-grid_sq / two_sigma_sq).exp();
                let step = rate * h;
                let proto = &mut prototypes[p * dim..(p + 1) * dim];
                for (pv, vv) in proto.iter_mut().zip(v) {
                    *pv += step * (vv - *pv);
                }
            }
        }
    }

    let catalogue = catalogue_of(&prototypes);
    let final_error = mean_quantization_error(strokes, &catalogue);
    Ok((catalogue, SomTrainStats { initial_error, final_error }))
}

/// Mean Euclidean distance from each stroke to its nearest prototype.
pub fn mean_quantization_error(strokes: &[Vec<f64>], catalogue: &SomCatalogue) -> f64 {
    assert!(!strokes.is_empty());
    let g = catalogue.grid();
    let sum: f64 = strokes
        .iter()
        .map(|v| {
            let mut best = f64::INFINITY;
            for row in 0..g {
                for col in 0..g {
                    best = best.min(sq_dist(catalogue.prototype(row, col), v));
                }
            }
            best.sqrt()
        })
        .sum();
    sum / strokes.len() as f64
}

/// Re-encode a word record into per-channel grid-coordinate sequences.
/// Degenerate strokes (too short or zero path length) are skipped.
pub fn encode_word(
    record: &InkRecord,
    air_cat: &SomCatalogue,
    surf_cat: &SomCatalogue,
) -> Result<EncodedWord, AtdrError> {
    if !record.task_id.is_word() {
        return Err(AtdrError::CatalogueMismatch(format!(
            "record task {} is not a word",
            record.task_id
        )));
    }
    if air_cat.word_id != record.task_id || surf_cat.word_id != record.task_id {
        return Err(AtdrError::CatalogueMismatch(format!(
            "catalogues for {}/{} cannot encode a {} record",
            air_cat.word_id, surf_cat.word_id, record.task_id
        )));
    }
    if air_cat.channel != PenState::InAir || surf_cat.channel != PenState::OnSurface {
        return Err(AtdrError::CatalogueMismatch(
            "catalogue channels are swapped or duplicated".to_string(),
        ));
    }
    if air_cat.resample() != surf_cat.resample() {
        return Err(AtdrError::CatalogueMismatch(
            "catalogues disagree on the resampling count".to_string(),
        ));
    }

    let mut encoded = EncodedWord { word_id: record.task_id, air: vec![], surface: vec![] };
    for stroke in segment_strokes(record) {
        let catalogue = match stroke.kind {
            PenState::InAir => air_cat,
            PenState::OnSurface => surf_cat,
        };
        match preprocess_stroke(&stroke, catalogue.resample()) {
            Ok(v) => {
                let coord = catalogue.nearest_coord(&v);
                match stroke.kind {
                    PenState::InAir => encoded.air.push(coord),
                    PenState::OnSurface => encoded.surface.push(coord),
                }
            }
            Err(AtdrError::DegenerateStroke) => continue,
            Err(e) => return Err(e),
        }
    }
    if encoded.air.is_empty() && encoded.surface.is_empty() {
        return Err(AtdrError::NoUsableStrokes);
    }
    Ok(encoded)
}

/// DTW between two encoded words on one channel; local cost is the Euclidean
/// distance between grid coordinates, and the path cost is normalized by the
/// summed sequence lengths.
pub fn encoded_dtw(a: &EncodedWord, b: &EncodedWord, channel: PenState) -> Result<f64, AtdrError> {
    if a.word_id != b.word_id {
        return Err(AtdrError::WordMismatch);
    }
    let (sa, sb) = (a.channel(channel), b.channel(channel));
    if sa.is_empty() || sb.is_empty() {
        return Err(AtdrError::EmptyChannel);
    }
    let as_seq = |coords: &[(u16, u16)]| {
        let rows = coords.iter().flat_map(|&(r, c)| [r as f64, c as f64]).collect();
        FeatureSequence::from_rows(2, rows)
    };
    let config = DtwConfig { local_metric: LocalMetric::Euclidean, normalize_by_path: true };
    Ok(dtw_distance(&as_seq(sa), &as_seq(sb), &config)
        .expect("encoded sequences are non-empty and 2-D"))
}

/// Weighted mean of the two channel dissimilarities.
pub fn fuse_channels(d_air: f64, d_surface: f64, w_air: f64) -> f64 {
    assert!((0.0..=1.0).contains(&w_air), "w_air must lie in [0, 1]");
    debug_assert!(d_air >= 0.0 && d_surface >= 0.0);
    w_air * d_air + (1.0 - w_air) * d_surface
}

/// Arithmetic mean of per-word dissimilarities, keeping the combined score
/// on the single-word scale.
pub fn fuse_words(per_word: &[f64]) -> Result<f64, AtdrError> {
    if per_word.is_empty() {
        return Err(AtdrError::EmptyList);
    }
    debug_assert!(per_word.iter().all(|&d| d >= 0.0));
    Ok(per_word.iter().sum::<f64>() / per_word.len() as f64)
}

/// Short channel tag used in catalogue headers and file names.
pub fn channel_name(channel: PenState) -> &'static str {
    match channel {
        PenState::InAir => "air",
        PenState::OnSurface => "surface",
    }
}

/// Inverse of [`channel_name`].
pub fn channel_from_name(name: &str) -> Option<PenState> {
    match name {
        "air" => Some(PenState::InAir),
        "surface" => Some(PenState::OnSurface),
        _ => None,
    }
}

/// Serialize a catalogue: header `#som v1 word=<task> channel=<air|surface>
/// grid=<G> resample=<R>`, then one prototype per line in row-major grid
/// order. Bit-exact round-trip with [`parse_catalogue`].
pub fn write_catalogue(catalogue: &SomCatalogue) -> String {
    let mut out = format!(
        "#som v1 word={} channel={} grid={} resample={}\n",
        catalogue.word_id,
        channel_name(catalogue.channel),
        catalogue.grid(),
        catalogue.resample()
    );
    for row in 0..catalogue.grid() {
        for col in 0..catalogue.grid() {
            let fields: Vec<String> =
                catalogue.prototype(row, col).iter().map(f64::to_string).collect();
            out.push_str(&fields.join(" "));
            out.push('\n');
        }
    }
    out
}

pub fn parse_catalogue(text: &str) -> Result<SomCatalogue, AtdrError> {
    let malformed = |line: usize, reason: &str| AtdrError::MalformedCatalogue {
        line,
        reason: reason.to_string(),
    };
    let mut lines = text.lines();
    let header = lines.next().ok_or_else(|| malformed(1, "empty file"))?;
    let mut fields = header.split_whitespace();
    if fields.next() != Some("#som") || fields.next() != Some("v1") {
        return Err(malformed(1, "expected `#som v1` header"));
    }
    let (mut word, mut channel, mut grid, mut resample) = (None, None, None, None);
    for field in fields {
        match field.split_once('=') {
            Some(("word", v)) => word = TaskId::parse(v),
            Some(("channel", v)) => channel = channel_from_name(v),
            Some(("grid", v)) => grid = v.parse::<usize>().ok(),
            Some(("resample", v)) => resample = v.parse::<usize>().ok(),
            _ => return Err(malformed(1, "unknown header field")),
        }
    }
    let (word, channel, grid, resample) = match (word, channel, grid, resample) {
        (Some(w), Some(c), Some(g), Some(r)) if g >= 2 && r >= 2 => (w, c, g, r),
        _ => return Err(malformed(1, "header needs word=, channel=, grid=, resample=")),
    };

    let dim = 2 * resample;
    let mut prototypes = Vec::with_capacity(grid * grid * dim);
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
            .map_err(|_| malformed(line, "non-numeric prototype value"))?;
        if values.len() != dim {
            return Err(malformed(line, "wrong prototype dimension"));
        }
        prototypes.extend(values);
    }
    if prototypes.len() != grid * grid * dim {
        return Err(malformed(text.lines().count(), "wrong number of prototype rows"));
    }
    Ok(SomCatalogue::new(word, channel, grid, resample, prototypes))
}

pub fn save_catalogue(catalogue: &SomCatalogue, path: &Path) -> Result<(), AtdrError> {
    std::fs::write(path, write_catalogue(catalogue)).map_err(|e| AtdrError::Io {
        path: path.to_path_buf(),
        message: e.to_string(),
    })
}

pub fn load_catalogue(path: &Path) -> Result<SomCatalogue, AtdrError> {
    let text = std::fs::read_to_string(path).map_err(|e| AtdrError::Io {
        path: path.to_path_buf(),
        message: e.to_string(),
    })?;
    parse_catalogue(&text)
}
