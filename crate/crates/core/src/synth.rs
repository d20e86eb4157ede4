//! Deterministic synthetic ink corpus with a tunable fatigue distortion.
//!
//! Every writer renders the same six tasks (two signature executions and
//! four fixed words) across the four acquisition phases. Task geometry is a
//! sum of low-order harmonics: each *glyph* (a signature stroke or a letter)
//! has a family shape shared by all writers, deformed per writer so that
//! writers are distinct yet confusable. Consecutive surface glyphs are
//! joined by in-air transition strokes, giving every record the alternating
//! surface/air structure the matchers expect.
//!
//! Fatigue with level `f` perturbs each record by a vertical amplitude
//! multiplier `1 + vertical_gain·f·u`, a horizontal multiplier
//! `1 + horizontal_gain·f·u`, a timing dilation `1 + timing_gain·f·u` that
//! stretches the sample count, and per-sample coordinate jitter with
//! standard deviation `position_noise + jitter_gain·f`, with `u` uniform in
//! [0.5, 1.5] per record. At `f = 0` and zero position noise a record is an
//! exact copy of its writer's base geometry.
//!
//! All randomness fans out of one seed through tagged streams, so corpora
//! are reproducible and writers can be generated in parallel.

use std::collections::BTreeMap;
use std::f64::consts::PI;

use rand::Rng;
use rand_chacha::ChaCha12Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;
use thiserror::Error;

use crate::ink::{Corpus, InkRecord, PenSample, PenState, Phase, PhaseLabel, TaskId};
use crate::rng::stream;

/// Seed for the glyph family shapes. Independent of the corpus seed so the
/// "alphabet" is stable while writers change from seed to seed.
const FAMILY_SEED: u64 = 0x5752_4954;

const TAG_SIG_FAMILY: u64 = 1;
const TAG_LETTER_FAMILY: u64 = 2;
const TAG_WRITER_SIG: u64 = 3;
const TAG_WRITER_LETTER: u64 = 4;
const TAG_RECORD: u64 = 5;
const TAG_INDICATORS: u64 = 6;

/// Fatigue level per acquisition phase, each in [0, 1].
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PhaseLevels {
    pub base: f64,
    pub meif: f64,
    pub seif: f64,
    pub post_seif: f64,
}

impl PhaseLevels {
    pub fn level(&self, phase: Phase) -> f64 {
        match phase {
            Phase::Base => self.base,
            Phase::Meif => self.meif,
            Phase::Seif => self.seif,
            Phase::PostSeif => self.post_seif,
        }
    }

    pub fn uniform(level: f64) -> Self {
        PhaseLevels { base: level, meif: level, seif: level, post_seif: level }
    }
}

impl Default for PhaseLevels {
    /// Rest, light effort, heavy effort, partial recovery.
    fn default() -> Self {
        PhaseLevels { base: 0.0, meif: 0.2, seif: 0.8, post_seif: 0.5 }
    }
}

impl From<[f64; 4]> for PhaseLevels {
    fn from(v: [f64; 4]) -> Self {
        PhaseLevels { base: v[0], meif: v[1], seif: v[2], post_seif: v[3] }
    }
}

/// Per-writer style parameters.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct StyleParams {
    /// Inclusive range of surface strokes per signature (pen lifts = count − 1).
    pub stroke_count_range: (usize, usize),
    /// Base glyph amplitude, device units.
    pub base_amplitude: f64,
    /// Milliseconds between consecutive samples.
    pub base_tempo: f64,
    /// Base sample count of one signature stroke.
    pub samples_per_stroke: usize,
    /// Baseline intra-writer coordinate jitter (std, device units). Zero
    /// yields a noiseless corpus.
    pub position_noise: f64,
    /// Inter-writer deformation scale: 0 makes all writers identical.
    pub style_spread: f64,
}

impl Default for StyleParams {
    fn default() -> Self {
        StyleParams {
            stroke_count_range: (2, 4),
            base_amplitude: 80.0,
            base_tempo: 8.0,
            samples_per_stroke: 28,
            position_noise: 0.6,
            style_spread: 0.8,
        }
    }
}

/// Gains of the four fatigue distortions (see module docs).
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FatigueModel {
    pub vertical_gain: f64,
    pub horizontal_gain: f64,
    pub timing_gain: f64,
    /// Device units of jitter std added per unit of fatigue.
    pub jitter_gain: f64,
}

impl Default for FatigueModel {
    fn default() -> Self {
        FatigueModel { vertical_gain: 0.3, horizontal_gain: 0.15, timing_gain: 0.2, jitter_gain: 6.0 }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SynthParams {
    pub n_writers: usize,
    pub seed: u64,
    pub fatigue: PhaseLevels,
    pub style: StyleParams,
    pub fatigue_model: FatigueModel,
}

impl SynthParams {
    pub fn new(n_writers: usize, seed: u64) -> Self {
        SynthParams { n_writers, seed, ..SynthParams::default() }
    }
}

impl Default for SynthParams {
    fn default() -> Self {
        SynthParams {
            n_writers: 20,
            seed: 0x1a2b,
            fatigue: PhaseLevels::default(),
            style: StyleParams::default(),
            fatigue_model: FatigueModel::default(),
        }
    }
}

#[derive(Debug, Error, PartialEq)]
pub enum SynthError {
    #[error("invalid parameters: {0}")]
    InvalidParams(String),
}

fn validate(params: &SynthParams) -> Result<(), SynthError> {
    let err = |msg: String| Err(SynthError::InvalidParams(msg));
    if params.n_writers < 2 {
        return err(format!("n_writers must be at least 2, got {}", params.n_writers));
    }
    for phase in Phase::ALL {
        let f = params.fatigue.level(phase);
        if !(0.0..=1.0).contains(&f) {
            return err(format!("fatigue level for {phase} must lie in [0, 1], got {f}"));
        }
    }
    let s = &params.style;
    if s.stroke_count_range.0 < 1 || s.stroke_count_range.0 > s.stroke_count_range.1 {
        return err(format!("stroke count range {:?} is not a non-empty range", s.stroke_count_range));
    }
    if !(s.base_amplitude > 0.0) {
        return err("base_amplitude must be positive".into());
    }
    if !(s.base_tempo > 0.0) {
        return err("base_tempo must be positive".into());
    }
    if s.samples_per_stroke < 4 {
        return err("samples_per_stroke must be at least 4".into());
    }
    if !(s.position_noise >= 0.0) || !(s.style_spread >= 0.0) {
        return err("position_noise and style_spread must be non-negative".into());
    }
    let m = &params.fatigue_model;
    for (name, g) in [
        ("vertical_gain", m.vertical_gain),
        ("horizontal_gain", m.horizontal_gain),
        ("timing_gain", m.timing_gain),
        ("jitter_gain", m.jitter_gain),
    ] {
        if !(g >= 0.0) || !g.is_finite() {
            return err(format!("{name} must be a non-negative finite number"));
        }
    }
    Ok(())
}

/// One glyph: `x(s) = width·s + Σ ax_k·sin(2πks + px_k)`,
/// `y(s) = Σ ay_k·sin(2πks + py_k)` over `s ∈ [0, 1]`.
#[derive(Debug, Clone, Copy)]
struct Glyph {
    width: f64,
    ax: [f64; 3],
    px: [f64; 3],
    ay: [f64; 3],
    py: [f64; 3],
}

impl Glyph {
    fn point(&self, s: f64) -> (f64, f64) {
        let mut x = self.width * s;
        let mut y = 0.0;
        for k in 0..3 {
            let w = 2.0 * PI * (k + 1) as f64;
            x += self.ax[k] * (w * s + self.px[k]).sin();
            y += self.ay[k] * (w * s + self.py[k]).sin();
        }
        (x, y)
    }
}

fn family_glyph(rng: &mut ChaCha12Rng, amp_x: f64, amp_y: f64) -> Glyph {
    let mut g = Glyph {
        width: amp_x * rng.gen_range(0.8..1.2),
        ax: [0.0; 3],
        px: [0.0; 3],
        ay: [0.0; 3],
        py: [0.0; 3],
    };
    for k in 0..3 {
        let damp = (k + 1) as f64;
        g.ax[k] = amp_x * rng.gen_range(0.08..0.20) / damp;
        g.px[k] = rng.gen_range(0.0..2.0 * PI);
        g.ay[k] = amp_y * rng.gen_range(0.30..0.55) / damp;
        g.py[k] = rng.gen_range(0.0..2.0 * PI);
    }
    g
}

/// Multiplicative deformation clamped away from zero so glyphs never
/// degenerate under extreme draws.
fn deform(base: f64, rel: f64, z: f64) -> f64 {
    base * (1.0 + rel * z).max(0.25)
}

fn writer_variant(family: &Glyph, rng: &mut ChaCha12Rng, spread: f64) -> Glyph {
    let mut z = || -> f64 { rng.sample(StandardNormal) };
    let mut g = *family;
    g.width = deform(g.width, 0.15 * spread, z());
    for k in 0..3 {
        g.ax[k] = deform(g.ax[k], 0.30 * spread, z());
        g.px[k] += 0.45 * spread * z();
        g.ay[k] = deform(g.ay[k], 0.30 * spread, z());
        g.py[k] += 0.45 * spread * z();
    }
    g
}

/// A writer's rendering material: signature strokes plus one deformed glyph
/// per letter occurring in the word set.
struct WriterStyle {
    sig_glyphs: Vec<Glyph>,
    letters: BTreeMap<char, Glyph>,
}

fn distinct_letters() -> Vec<char> {
    let mut letters: Vec<char> = TaskId::WORDS
        .iter()
        .flat_map(|t| t.word_text().expect("word tasks have text").chars())
        .collect();
    letters.sort_unstable();
    letters.dedup();
    letters
}

fn build_writer_style(params: &SynthParams, writer: u64) -> WriterStyle {
    let amp = params.style.base_amplitude;
    let spread = params.style.style_spread;

    let mut sig_rng = stream(params.seed, &[TAG_WRITER_SIG, writer]);
    let (lo, hi) = params.style.stroke_count_range;
    let n_strokes = sig_rng.gen_range(lo..=hi);
    let sig_glyphs = (0..n_strokes as u64)
        .map(|j| {
            let family = family_glyph(&mut stream(FAMILY_SEED, &[TAG_SIG_FAMILY, j]), amp, amp);
            writer_variant(&family, &mut sig_rng, spread)
        })
        .collect();

    let letters = distinct_letters()
        .into_iter()
        .map(|c| {
            let family = family_glyph(
                &mut stream(FAMILY_SEED, &[TAG_LETTER_FAMILY, c as u64]),
                amp * 0.45,
                amp * 0.65,
            );
            let mut rng = stream(params.seed, &[TAG_WRITER_LETTER, writer, c as u64]);
            (c, writer_variant(&family, &mut rng, spread))
        })
        .collect();

    WriterStyle { sig_glyphs, letters }
}

/// Base polyline of one record: per segment its pen state and points.
fn base_segments(
    style: &WriterStyle,
    params: &SynthParams,
    task: TaskId,
    t_scale: f64,
) -> Vec<(PenState, Vec<(f64, f64)>)> {
    let spp = params.style.samples_per_stroke;
    let amp = params.style.base_amplitude;
    let glyphs: Vec<&Glyph> = if task.is_signature() {
        style.sig_glyphs.iter().collect()
    } else {
        task.word_text()
            .expect("word tasks have text")
            .chars()
            .map(|c| &style.letters[&c])
            .collect()
    };
    let base_n = if task.is_signature() { spp } else { (spp * 3 / 5).max(6) };
    let conn_n = (spp / 4).max(3);
    let scaled = |n: usize| -> usize { ((n as f64 * t_scale).round() as usize).max(2) };
    let gap = 0.25 * amp;

    let mut segments = Vec::new();
    let mut offset = 0.0;
    for (j, glyph) in glyphs.iter().enumerate() {
        let n = scaled(base_n);
        let points = (0..n)
            .map(|i| {
                let s = i as f64 / (n - 1) as f64;
                let (x, y) = glyph.point(s);
                (offset + x, y)
            })
            .collect();
        segments.push((PenState::OnSurface, points));

        if j + 1 < glyphs.len() {
            let next_offset = offset + glyph.width + gap;
            let (ex, ey) = glyph.point(1.0);
            let (sx, sy) = glyphs[j + 1].point(0.0);
            let (from, to) = ((offset + ex, ey), (next_offset + sx, sy));
            let n = scaled(conn_n);
            let points = (0..n)
                .map(|i| {
                    let s = i as f64 / (n - 1) as f64;
                    let x = from.0 + s * (to.0 - from.0);
                    let y = from.1 + s * (to.1 - from.1) + 0.18 * amp * (PI * s).sin();
                    (x, y)
                })
                .collect();
            segments.push((PenState::InAir, points));
            offset = next_offset;
        }
    }
    segments
}

fn build_record(
    params: &SynthParams,
    style: &WriterStyle,
    subject_id: &str,
    writer: u64,
    phase: Phase,
    phase_label: &PhaseLabel,
    task: TaskId,
) -> InkRecord {
    let f = params.fatigue.level(phase);
    let m = &params.fatigue_model;
    let phase_idx = Phase::ALL.iter().position(|p| *p == phase).unwrap() as u64;
    let task_idx = TaskId::ALL.iter().position(|t| *t == task).unwrap() as u64;
    let mut rng = stream(params.seed, &[TAG_RECORD, writer, phase_idx, task_idx]);

    let v_scale = 1.0 + m.vertical_gain * f * rng.gen_range(0.5..1.5);
    let h_scale = 1.0 + m.horizontal_gain * f * rng.gen_range(0.5..1.5);
    let t_scale = 1.0 + m.timing_gain * f * rng.gen_range(0.5..1.5);
    let jitter = params.style.position_noise + m.jitter_gain * f;
    let pressure_noise = 4.0 * params.style.position_noise;

    let mut samples = Vec::new();
    let mut index = 0usize;
    for (state, points) in base_segments(style, params, task, t_scale) {
        let n = points.len();
        for (i, (x, y)) in points.into_iter().enumerate() {
            let s = i as f64 / (n - 1) as f64;
            let zx: f64 = rng.sample(StandardNormal);
            let zy: f64 = rng.sample(StandardNormal);
            let zp: f64 = rng.sample(StandardNormal);
            let pressure = match state {
                PenState::InAir => 0.0,
                PenState::OnSurface => {
                    (300.0 + 150.0 * (PI * s).sin() + pressure_noise * zp).max(1.0)
                }
            };
            samples.push(PenSample {
                t: index as f64 * params.style.base_tempo,
                x: h_scale * x + jitter * zx,
                y: v_scale * y + jitter * zy,
                pressure,
                pen_state: state,
            });
            index += 1;
        }
    }

    InkRecord::new(subject_id, phase_label.clone(), task, samples)
        .expect("generated records satisfy the record invariants")
}

/// Fatigue indicators for one writer and phase: lactate climbs steeply once
/// effort passes a threshold, flight height drops mildly, perceived exertion
/// climbs roughly linearly. Each gets a small writer-specific wobble.
fn indicators(params: &SynthParams, writer: u64, phase: Phase) -> PhaseLabel {
    let f = params.fatigue.level(phase);
    let phase_idx = Phase::ALL.iter().position(|p| *p == phase).unwrap() as u64;
    let mut rng = stream(params.seed, &[TAG_INDICATORS, writer, phase_idx]);
    let mut z = || -> f64 { rng.sample(StandardNormal) };
    let lactate = ((1.1 + 23.8 * (f - 0.25).max(0.0)) * (1.0 + 0.08 * z())).max(0.3);
    let flight_height = (36.0 - 5.0 * f) * (1.0 + 0.02 * z());
    let rpe = ((1.0 + 9.0 * f) * (1.0 + 0.06 * z())).clamp(1.0, 10.0);
    PhaseLabel { phase, lactate: Some(lactate), flight_height: Some(flight_height), rpe: Some(rpe) }
}

/// Generate the full corpus: `n_writers × 4 phases × 6 tasks` records,
/// deterministic in `params`.
pub fn synth_dataset(params: &SynthParams) -> Result<Corpus, SynthError> {
    validate(params)?;
    let records: Vec<InkRecord> = (0..params.n_writers as u64)
        .into_par_iter()
        .flat_map_iter(|writer| {
            let subject_id = format!("w{writer:02}");
            let style = build_writer_style(params, writer);
            let mut records = Vec::with_capacity(Phase::ALL.len() * TaskId::ALL.len());
            for phase in Phase::ALL {
                let label = indicators(params, writer, phase);
                for task in TaskId::ALL {
                    records.push(build_record(
                        params, &style, &subject_id, writer, phase, &label, task,
                    ));
                }
            }
            records
        })
        .collect();
    Ok(Corpus::new(records))
}
