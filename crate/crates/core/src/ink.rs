//! Ink data model and the plain-text ink file format.
//!
//! A record is a timed pen trajectory (position, pressure, pen state) plus
//! subject / acquisition-phase / task metadata. Records live on disk as
//! UTF-8 text, one sample per line, under `<root>/<subject>/<phase>/<task>.ink`.

use std::fmt;
use std::path::{Path, PathBuf};

use thiserror::Error;

/// Whether the pen touches the tablet surface.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum PenState {
    InAir,
    OnSurface,
}

impl PenState {
    fn from_flag(flag: u8) -> Option<Self> {
        match flag {
            0 => Some(PenState::InAir),
            1 => Some(PenState::OnSurface),
            _ => None,
        }
    }

    fn flag(self) -> u8 {
        match self {
            PenState::InAir => 0,
            PenState::OnSurface => 1,
        }
    }
}

/// One tablet sample.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PenSample {
    /// Time in milliseconds, non-negative.
    pub t: f64,
    pub x: f64,
    pub y: f64,
    /// Pen pressure in device units; zero exactly when the pen is in the air.
    pub pressure: f64,
    pub pen_state: PenState,
}

/// Acquisition phase of a record.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, serde::Serialize)]
pub enum Phase {
    #[serde(rename = "BASE")]
    Base,
    #[serde(rename = "MEIF")]
    Meif,
    #[serde(rename = "SEIF")]
    Seif,
    #[serde(rename = "POST_SEIF")]
    PostSeif,
}

impl Phase {
    pub const ALL: [Phase; 4] = [Phase::Base, Phase::Meif, Phase::Seif, Phase::PostSeif];

    pub fn as_str(self) -> &'static str {
        match self {
            Phase::Base => "BASE",
            Phase::Meif => "MEIF",
            Phase::Seif => "SEIF",
            Phase::PostSeif => "POST_SEIF",
        }
    }

    pub fn parse(s: &str) -> Option<Phase> {
        Phase::ALL.into_iter().find(|p| p.as_str() == s)
    }
}

impl fmt::Display for Phase {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

/// Phase tag plus the fatigue indicators measured alongside the handwriting:
/// metabolic (blood lactate), mechanical (mean vertical flight height) and
/// subjective (Borg rating of perceived exertion).
#[derive(Debug, Clone, PartialEq)]
pub struct PhaseLabel {
    pub phase: Phase,
    /// Lactate concentration, mmol/L.
    pub lactate: Option<f64>,
    /// Mean vertical flight height.
    pub flight_height: Option<f64>,
    /// Borg rating of perceived exertion, in [1, 10].
    pub rpe: Option<f64>,
}

impl PhaseLabel {
    pub fn bare(phase: Phase) -> Self {
        PhaseLabel { phase, lactate: None, flight_height: None, rpe: None }
    }

    fn has_indicators(&self) -> bool {
        self.lactate.is_some() || self.flight_height.is_some() || self.rpe.is_some()
    }
}

/// Task performed in a record: one of the two signature executions or one of
/// the four capital-letter words.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, serde::Serialize)]
pub enum TaskId {
    #[serde(rename = "SIG1")]
    Sig1,
    #[serde(rename = "SIG2")]
    Sig2,
    #[serde(rename = "W1")]
    W1,
    #[serde(rename = "W2")]
    W2,
    #[serde(rename = "W3")]
    W3,
    #[serde(rename = "W4")]
    W4,
}

impl TaskId {
    pub const ALL: [TaskId; 6] =
        [TaskId::Sig1, TaskId::Sig2, TaskId::W1, TaskId::W2, TaskId::W3, TaskId::W4];
    pub const WORDS: [TaskId; 4] = [TaskId::W1, TaskId::W2, TaskId::W3, TaskId::W4];

    pub fn as_str(self) -> &'static str {
        match self {
            TaskId::Sig1 => "SIG1",
            TaskId::Sig2 => "SIG2",
            TaskId::W1 => "W1",
            TaskId::W2 => "W2",
            TaskId::W3 => "W3",
            TaskId::W4 => "W4",
        }
    }

    pub fn parse(s: &str) -> Option<TaskId> {
        TaskId::ALL.into_iter().find(|t| t.as_str() == s)
    }

    pub fn is_signature(self) -> bool {
        matches!(self, TaskId::Sig1 | TaskId::Sig2)
    }

    pub fn is_word(self) -> bool {
        !self.is_signature()
    }

    /// Vocabulary text behind a word task.
    pub fn word_text(self) -> Option<&'static str> {
        match self {
            TaskId::W1 => Some("BIODEGRADABLE"),
            TaskId::W2 => Some("DELEZNABLE"),
            TaskId::W3 => Some("DESAPROVECHAMIENTO"),
            TaskId::W4 => Some("DESBRIZNAR"),
            _ => None,
        }
    }
}

impl fmt::Display for TaskId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

/// A full ink record: ordered samples plus metadata.
///
/// Invariants, enforced by [`InkRecord::new`] and [`parse_ink`]:
/// timestamps strictly increase, there are at least 2 samples, and pressure
/// is zero exactly on in-air samples.
#[derive(Debug, Clone, PartialEq)]
pub struct InkRecord {
    pub subject_id: String,
    pub phase: PhaseLabel,
    pub task_id: TaskId,
    samples: Vec<PenSample>,
}

#[derive(Debug, Error, PartialEq)]
pub enum InkError {
    #[error("line {line}: malformed line: {reason}")]
    MalformedLine { line: usize, reason: String },
    #[error("line {line}: timestamp does not increase")]
    NonMonotoneTime { line: usize },
    #[error("record holds fewer than 2 samples")]
    EmptyRecord,
    #[error("line {line}: pressure inconsistent with pen state")]
    InconsistentPressureState { line: usize },
    #[error("I/O error on {path}: {message}")]
    Io { path: PathBuf, message: String },
}

impl InkRecord {
    pub fn new(
        subject_id: impl Into<String>,
        phase: PhaseLabel,
        task_id: TaskId,
        samples: Vec<PenSample>,
    ) -> Result<Self, InkError> {
        validate_samples(&samples)?;
        Ok(InkRecord { subject_id: subject_id.into(), phase, task_id, samples })
    }

    pub fn samples(&self) -> &[PenSample] {
        &self.samples
    }

    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }
}

fn validate_samples(samples: &[PenSample]) -> Result<(), InkError> {
    if samples.len() < 2 {
        return Err(InkError::EmptyRecord);
    }
    for (i, s) in samples.iter().enumerate() {
        // data lines are 1-based and follow the header line
        let line = i + 2;
        if i > 0 && s.t <= samples[i - 1].t {
            return Err(InkError::NonMonotoneTime { line });
        }
        let consistent = match s.pen_state {
            PenState::InAir => s.pressure == 0.0,
            PenState::OnSurface => s.pressure > 0.0,
        };
        if !consistent {
            return Err(InkError::InconsistentPressureState { line });
        }
    }
    Ok(())
}

/// A maximal run of consecutive samples sharing one pen state.
#[derive(Debug, Clone, Copy)]
pub struct Stroke<'a> {
    pub kind: PenState,
    pub samples: &'a [PenSample],
}

/// Partition a record into alternating in-air / on-surface strokes.
///
/// Concatenating the returned slices restores the record's sample order.
pub fn segment_strokes(record: &InkRecord) -> Vec<Stroke<'_>> {
    let samples = record.samples();
    let mut strokes = Vec::new();
    let mut start = 0;
    for i in 1..=samples.len() {
        if i == samples.len() || samples[i].pen_state != samples[start].pen_state {
            strokes.push(Stroke { kind: samples[start].pen_state, samples: &samples[start..i] });
            start = i;
        }
    }
    strokes
}

/// Parse the text ink format into a record.
pub fn parse_ink(input: &str) -> Result<InkRecord, InkError> {
    let mut lines = input.lines().enumerate();

    let (_, header) = lines
        .next()
        .ok_or_else(|| malformed(1, "missing header line"))?;
    let (subject_id, phase_enum, task_id) = parse_header(header)?;

    let mut phase = PhaseLabel::bare(phase_enum);
    let mut samples = Vec::new();
    for (idx, raw) in lines {
        let line = idx + 1;
        let text = raw.trim();
        if text.is_empty() {
            continue;
        }
        if let Some(rest) = text.strip_prefix("#fatigue") {
            parse_fatigue(rest, line, &mut phase)?;
            continue;
        }
        if text.starts_with('#') {
            return Err(malformed(line, "unknown directive"));
        }
        samples.push(parse_sample(text, line)?);
    }

    if samples.len() < 2 {
        return Err(InkError::EmptyRecord);
    }
    InkRecord::new(subject_id, phase, task_id, samples)
}

fn malformed(line: usize, reason: impl Into<String>) -> InkError {
    InkError::MalformedLine { line, reason: reason.into() }
}

fn parse_header(header: &str) -> Result<(String, Phase, TaskId), InkError> {
    let mut fields = header.split_whitespace();
    if fields.next() != Some("#ink") || fields.next() != Some("v1") {
        return Err(malformed(1, "expected `#ink v1` header"));
    }
    let mut subject = None;
    let mut phase = None;
    let mut task = None;
    for field in fields {
        let (key, value) = field
            .split_once('=')
            .ok_or_else(|| malformed(1, format!("bad header field `{field}`")))?;
        match key {
            "subject" => subject = Some(value.to_string()),
            "phase" => {
                phase =
                    Some(Phase::parse(value).ok_or_else(|| malformed(1, "unknown phase"))?);
            }
            "task" => {
                task = Some(TaskId::parse(value).ok_or_else(|| malformed(1, "unknown task"))?);
            }
            _ => return Err(malformed(1, format!("unknown header key `{key}`"))),
        }
    }
    match (subject, phase, task) {
        (Some(s), Some(p), Some(t)) if !s.is_empty() => Ok((s, p, t)),
        _ => Err(malformed(1, "header needs subject=, phase= and task=")),
    }
}

fn parse_fatigue(rest: &str, line: usize, phase: &mut PhaseLabel) -> Result<(), InkError> {
    for field in rest.split_whitespace() {
        let (key, value) = field
            .split_once('=')
            .ok_or_else(|| malformed(line, format!("bad fatigue field `{field}`")))?;
        let value: f64 = value
            .parse()
            .map_err(|_| malformed(line, format!("non-numeric value for `{key}`")))?;
        match key {
            "lactate" => phase.lactate = Some(value),
            "mffh" => phase.flight_height = Some(value),
            "rpe" => {
                if !(1.0..=10.0).contains(&value) {
                    return Err(malformed(line, "rpe outside [1, 10]"));
                }
                phase.rpe = Some(value);
            }
            _ => return Err(malformed(line, format!("unknown fatigue key `{key}`"))),
        }
    }
    Ok(())
}

fn parse_sample(text: &str, line: usize) -> Result<PenSample, InkError> {
    let fields: Vec<&str> = text.split_whitespace().collect();
    if fields.len() != 5 {
        return Err(malformed(line, format!("expected 5 fields, found {}", fields.len())));
    }
    let num = |i: usize| -> Result<f64, InkError> {
        fields[i]
            .parse::<f64>()
            .map_err(|_| malformed(line, format!("non-numeric field `{}`", fields[i])))
    };
    let t = num(0)?;
    if !(t >= 0.0) {
        return Err(malformed(line, "negative timestamp"));
    }
    let x = num(1)?;
    let y = num(2)?;
    let pressure = num(3)?;
    let pen_state = fields[4]
        .parse::<u8>()
        .ok()
        .and_then(PenState::from_flag)
        .ok_or_else(|| malformed(line, "pen flag must be 0 or 1"))?;
    Ok(PenSample { t, x, y, pressure, pen_state })
}

/// Serialize a record to the text ink format.
///
/// Numeric fields use Rust's shortest round-trip float formatting, so
/// `parse_ink(write_ink(r))` reproduces `r` bit-exactly.
pub fn write_ink(record: &InkRecord) -> String {
    let mut out = String::new();
    out.push_str(&format!(
        "#ink v1 subject={} phase={} task={}\n",
        record.subject_id, record.phase.phase, record.task_id
    ));
    if record.phase.has_indicators() {
        out.push_str("#fatigue");
        if let Some(v) = record.phase.lactate {
            out.push_str(&format!(" lactate={v}"));
        }
        if let Some(v) = record.phase.flight_height {
            out.push_str(&format!(" mffh={v}"));
        }
        if let Some(v) = record.phase.rpe {
            out.push_str(&format!(" rpe={v}"));
        }
        out.push('\n');
    }
    for s in record.samples() {
        out.push_str(&format!(
            "{} {} {} {} {}\n",
            s.t,
            s.x,
            s.y,
            s.pressure,
            s.pen_state.flag()
        ));
    }
    out
}

/// A set of ink records, kept in canonical (subject, phase, task) order.
#[derive(Debug, Clone, Default)]
pub struct Corpus {
    records: Vec<InkRecord>,
}

impl Corpus {
    pub fn new(mut records: Vec<InkRecord>) -> Self {
        records.sort_by(|a, b| {
            (&a.subject_id, a.phase.phase, a.task_id)
                .cmp(&(&b.subject_id, b.phase.phase, b.task_id))
        });
        Corpus { records }
    }

    pub fn records(&self) -> &[InkRecord] {
        &self.records
    }

    pub fn record(&self, subject: &str, phase: Phase, task: TaskId) -> Option<&InkRecord> {
        self.records
            .iter()
            .find(|r| r.subject_id == subject && r.phase.phase == phase && r.task_id == task)
    }

    /// Distinct subject ids, sorted.
    pub fn subject_ids(&self) -> Vec<String> {
        let mut ids: Vec<String> = self.records.iter().map(|r| r.subject_id.clone()).collect();
        ids.sort();
        ids.dedup();
        ids
    }

    /// On-disk path of one record under a dataset root.
    pub fn record_path(root: &Path, subject: &str, phase: Phase, task: TaskId) -> PathBuf {
        root.join(subject).join(phase.as_str()).join(format!("{task}.ink"))
    }

    /// Write every record under `root` using the dataset layout.
    pub fn save(&self, root: &Path) -> Result<(), InkError> {
        for record in &self.records {
            let path =
                Self::record_path(root, &record.subject_id, record.phase.phase, record.task_id);
            let dir = path.parent().expect("record path has a parent");
            std::fs::create_dir_all(dir).map_err(|e| io_err(dir, e))?;
            std::fs::write(&path, write_ink(record)).map_err(|e| io_err(&path, e))?;
        }
        Ok(())
    }

    /// Load the records of `subjects × phases × tasks` from a dataset root.
    ///
    /// A subject is any direct subdirectory holding at least one of the
    /// requested phase directories; other subdirectories (trained
    /// catalogues, report dumps, …) are not part of the dataset and are
    /// ignored. A recognized subject must then supply every requested
    /// record — a missing phase or task is an error, not a skip.
    pub fn load(
        root: &Path,
        phases: &[Phase],
        tasks: &[TaskId],
    ) -> Result<Corpus, InkError> {
        let mut subjects = Vec::new();
        let entries = std::fs::read_dir(root).map_err(|e| io_err(root, e))?;
        for entry in entries {
            let entry = entry.map_err(|e| io_err(root, e))?;
            let path = entry.path();
            if path.is_dir() && phases.iter().any(|p| path.join(p.as_str()).is_dir()) {
                subjects.push(entry.file_name().to_string_lossy().into_owned());
            }
        }
        subjects.sort();

        let mut records = Vec::new();
        for subject in &subjects {
            for &phase in phases {
                for &task in tasks {
                    let path = Self::record_path(root, subject, phase, task);
                    let text = std::fs::read_to_string(&path).map_err(|e| io_err(&path, e))?;
                    records.push(parse_ink(&text)?);
                }
            }
        }
        Ok(Corpus::new(records))
    }
}

fn io_err(path: &Path, e: std::io::Error) -> InkError {
    InkError::Io { path: path.to_path_buf(), message: e.to_string() }
}
