//! Identification and verification evaluation.
//!
//! A score matrix holds the dissimilarity of every probe against every
//! enrolled model. Identification takes the argmin per probe and reports the
//! identification rate (IDR); verification sweeps an acceptance threshold
//! (accept when dissimilarity ≤ threshold) to produce a FAR/FRR curve and
//! the equal error rate.
//!
//! The swept thresholds form a discrete staircase that rarely contains an
//! exact FAR = FRR point, and stepping between two adjacent thresholds can
//! jump right over it. Any rate *between* two sweep points is still
//! operationally achievable by randomizing between their thresholds, so the
//! EER is read off the convex hull of the swept operating points — the
//! standard ROC-convex-hull construction — at its crossing with the
//! FAR = FRR diagonal, interpolating between the two adjacent sweep points.

use rayon::prelude::*;
use serde::{Serialize, Serializer};
use thiserror::Error;

use crate::ink::{Phase, TaskId};

/// Phase and task a probe was taken from. `task` is `None` for probes that
/// combine several tasks into a single trial (fused multi-word scoring).
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub struct ProbeMeta {
    pub phase: Phase,
    pub task: Option<TaskId>,
}

fn task_label(task: Option<TaskId>) -> &'static str {
    task.map_or("combined", TaskId::as_str)
}

/// A probe sample: the true subject, where it came from, and the matcher
/// payload (features, encoded word, …).
#[derive(Debug, Clone)]
pub struct Probe<P> {
    pub subject_id: String,
    pub meta: ProbeMeta,
    pub value: P,
}

/// An enrolled model column.
#[derive(Debug, Clone)]
pub struct Model<M> {
    pub subject_id: String,
    pub value: M,
}

/// One scored probe row.
#[derive(Debug, Clone, PartialEq)]
pub struct ProbeRow {
    pub subject_id: String,
    pub meta: ProbeMeta,
    pub scores: Vec<f64>,
}

/// Complete probe × model dissimilarity grid.
#[derive(Debug, Clone, PartialEq)]
pub struct ScoreMatrix {
    model_ids: Vec<String>,
    rows: Vec<ProbeRow>,
}

#[derive(Debug, Error, PartialEq)]
pub enum EvalError {
    #[error("scoring probe {probe} against model {model} failed: {message}")]
    Scorer { probe: String, model: String, message: String },
    #[error("probe {probe} has no model of its own subject")]
    MissingTrueModel { probe: String },
    #[error("duplicate model id {id}")]
    DuplicateModelId { id: String },
    #[error("matrix has no {0}")]
    Empty(&'static str),
    #[error("no genuine scores")]
    NoGenuine,
    #[error("no impostor scores")]
    NoImpostor,
}

impl ScoreMatrix {
    /// Assemble a matrix from pre-computed rows. Every row must score every
    /// model, and every probe's subject must own a column.
    pub fn new(model_ids: Vec<String>, rows: Vec<ProbeRow>) -> Result<Self, EvalError> {
        if model_ids.is_empty() {
            return Err(EvalError::Empty("models"));
        }
        if rows.is_empty() {
            return Err(EvalError::Empty("probes"));
        }
        for (i, id) in model_ids.iter().enumerate() {
            if model_ids[..i].contains(id) {
                return Err(EvalError::DuplicateModelId { id: id.clone() });
            }
        }
        for row in &rows {
            assert_eq!(row.scores.len(), model_ids.len(), "row must score every model");
            if !model_ids.contains(&row.subject_id) {
                return Err(EvalError::MissingTrueModel { probe: probe_label(row) });
            }
        }
        Ok(ScoreMatrix { model_ids, rows })
    }

    pub fn model_ids(&self) -> &[String] {
        &self.model_ids
    }

    pub fn rows(&self) -> &[ProbeRow] {
        &self.rows
    }

    fn true_column(&self, row: &ProbeRow) -> usize {
        self.model_ids.iter().position(|id| *id == row.subject_id).unwrap()
    }

    /// All (score, is_genuine) trials in row-major order.
    fn trials(&self) -> impl Iterator<Item = (f64, bool)> + '_ {
        self.rows.iter().flat_map(move |row| {
            let true_col = self.true_column(row);
            row.scores.iter().enumerate().map(move |(j, &s)| (s, j == true_col))
        })
    }
}

fn probe_label(row: &ProbeRow) -> String {
    format!("{}/{}/{}", row.subject_id, row.meta.phase, task_label(row.meta.task))
}

/// Score every probe against every model. Rows are assembled in probe order
/// regardless of how the scoring work is scheduled, so the result is
/// deterministic.
pub fn build_score_matrix<P, M, E, F>(
    probes: &[Probe<P>],
    models: &[Model<M>],
    scorer: F,
) -> Result<ScoreMatrix, EvalError>
where
    P: Sync,
    M: Sync,
    E: std::fmt::Display,
    F: Fn(&P, &M) -> Result<f64, E> + Sync,
{
    let model_ids: Vec<String> = models.iter().map(|m| m.subject_id.clone()).collect();
    let rows = probes
        .par_iter()
        .map(|probe| {
            let scores = models
                .iter()
                .map(|model| {
                    scorer(&probe.value, &model.value).map_err(|e| EvalError::Scorer {
                        probe: format!(
                            "{}/{}/{}",
                            probe.subject_id,
                            probe.meta.phase,
                            task_label(probe.meta.task)
                        ),
                        model: model.subject_id.clone(),
                        message: e.to_string(),
                    })
                })
                .collect::<Result<Vec<f64>, EvalError>>()?;
            Ok(ProbeRow { subject_id: probe.subject_id.clone(), meta: probe.meta, scores })
        })
        .collect::<Result<Vec<ProbeRow>, EvalError>>()?;
    ScoreMatrix::new(model_ids, rows)
}

/// Identification outcome for one probe.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ProbeOutcome {
    pub subject_id: String,
    pub phase: Phase,
    pub task: Option<TaskId>,
    pub predicted: String,
    /// Rank of the true model; ties push the rank down, so an exact tie for
    /// first place yields rank 2 and counts as a misidentification.
    pub rank: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct IdentificationReport {
    /// Percentage of probes whose true model ranks first.
    pub idr: f64,
    pub per_probe: Vec<ProbeOutcome>,
}

/// Closed-set identification: authorship goes to the model with the lowest
/// dissimilarity.
pub fn identify(matrix: &ScoreMatrix) -> IdentificationReport {
    let mut per_probe = Vec::with_capacity(matrix.rows().len());
    let mut correct = 0usize;
    for row in matrix.rows() {
        let true_col = matrix.true_column(row);
        let true_score = row.scores[true_col];
        let mut rank = 1;
        let mut best = (0usize, f64::INFINITY);
        for (j, &s) in row.scores.iter().enumerate() {
            if s < best.1 {
                best = (j, s);
            }
            if j != true_col && s <= true_score {
                rank += 1;
            }
        }
        if rank == 1 {
            correct += 1;
        }
        per_probe.push(ProbeOutcome {
            subject_id: row.subject_id.clone(),
            phase: row.meta.phase,
            task: row.meta.task,
            predicted: matrix.model_ids()[best.0].clone(),
            rank,
        });
    }
    IdentificationReport {
        idr: 100.0 * correct as f64 / matrix.rows().len() as f64,
        per_probe,
    }
}

fn serialize_threshold<S: Serializer>(t: &f64, s: S) -> Result<S::Ok, S::Error> {
    if t.is_finite() {
        s.serialize_f64(*t)
    } else if *t > 0.0 {
        s.serialize_str("inf")
    } else {
        s.serialize_str("-inf")
    }
}

/// One sweep point. `far` and `frr` are percentages.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct CurvePoint {
    #[serde(serialize_with = "serialize_threshold")]
    pub threshold: f64,
    pub far: f64,
    pub frr: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct VerificationReport {
    /// Equal error rate, percent.
    pub eer: f64,
    pub eer_threshold: f64,
    pub curve: Vec<CurvePoint>,
}

fn split_trials(matrix: &ScoreMatrix) -> Result<(Vec<f64>, Vec<f64>), EvalError> {
    let mut genuine = Vec::new();
    let mut impostor = Vec::new();
    for (score, is_genuine) in matrix.trials() {
        if is_genuine {
            genuine.push(score);
        } else {
            impostor.push(score);
        }
    }
    if genuine.is_empty() {
        return Err(EvalError::NoGenuine);
    }
    if impostor.is_empty() {
        return Err(EvalError::NoImpostor);
    }
    Ok((genuine, impostor))
}

/// FAR/FRR staircase over every distinct score, with reject-everything and
/// accept-everything sentinel rows at ∓∞.
pub fn far_frr_curve(matrix: &ScoreMatrix) -> Result<Vec<CurvePoint>, EvalError> {
    let (mut genuine, mut impostor) = split_trials(matrix)?;
    genuine.sort_by(|a, b| a.partial_cmp(b).unwrap());
    impostor.sort_by(|a, b| a.partial_cmp(b).unwrap());

    let mut thresholds: Vec<f64> = genuine.iter().chain(&impostor).copied().collect();
    thresholds.sort_by(|a, b| a.partial_cmp(b).unwrap());
    thresholds.dedup();

    let (ng, ni) = (genuine.len() as f64, impostor.len() as f64);
    let mut curve = vec![CurvePoint { threshold: f64::NEG_INFINITY, far: 0.0, frr: 100.0 }];
    for &t in &thresholds {
        let accepted_impostors = impostor.partition_point(|&s| s <= t);
        let accepted_genuines = genuine.partition_point(|&s| s <= t);
        curve.push(CurvePoint {
            threshold: t,
            far: 100.0 * accepted_impostors as f64 / ni,
            frr: 100.0 * (genuine.len() - accepted_genuines) as f64 / ng,
        });
    }
    curve.push(CurvePoint { threshold: f64::INFINITY, far: 100.0, frr: 0.0 });
    Ok(curve)
}

/// Verification report: the FAR/FRR staircase plus the equal error rate at
/// the convex hull's crossing with FAR = FRR (see module docs).
pub fn verify_eer(matrix: &ScoreMatrix) -> Result<VerificationReport, EvalError> {
    let curve = far_frr_curve(matrix)?;

    // operating points as fractions: (fpr, tpr, threshold); keep, per fpr,
    // the highest tpr (preferring finite thresholds, which sort first)
    let mut points: Vec<(f64, f64, f64)> = curve
        .iter()
        .map(|p| (p.far / 100.0, 1.0 - p.frr / 100.0, p.threshold))
        .collect();
    points.sort_by(|a, b| {
        a.0.partial_cmp(&b.0)
            .unwrap()
            .then(a.1.partial_cmp(&b.1).unwrap())
            .then(a.2.partial_cmp(&b.2).unwrap())
    });
    let mut envelope: Vec<(f64, f64, f64)> = Vec::new();
    for p in points {
        match envelope.last_mut() {
            Some(last) if last.0 == p.0 => {
                if p.1 > last.1 {
                    *last = p;
                }
            }
            _ => envelope.push(p),
        }
    }

    // upper convex hull, left to right
    let cross = |o: &(f64, f64, f64), a: &(f64, f64, f64), b: &(f64, f64, f64)| -> f64 {
        (a.0 - o.0) * (b.1 - o.1) - (a.1 - o.1) * (b.0 - o.0)
    };
    let mut hull: Vec<(f64, f64, f64)> = Vec::new();
    for p in envelope {
        while hull.len() >= 2 && cross(&hull[hull.len() - 2], &hull[hull.len() - 1], &p) >= 0.0 {
            hull.pop();
        }
        hull.push(p);
    }

    // walk the hull for the FAR = FRR crossing: g = tpr + fpr - 1 rises from
    // g ≤ 0 at fpr = 0 to +1 at (1, 1)
    let g = |p: &(f64, f64, f64)| p.1 + p.0 - 1.0;
    let mut eer = f64::NAN;
    let mut eer_threshold = f64::NAN;
    for i in 0..hull.len() {
        if g(&hull[i]) == 0.0 {
            eer = hull[i].0;
            eer_threshold = hull[i].2;
            break;
        }
        if g(&hull[i]) > 0.0 {
            debug_assert!(i > 0, "hull starts at fpr = 0 where g <= 0");
            let (p1, p2) = (hull[i - 1], hull[i]);
            let lambda = -g(&p1) / (g(&p2) - g(&p1));
            eer = p1.0 + lambda * (p2.0 - p1.0);
            eer_threshold = match (p1.2.is_finite(), p2.2.is_finite()) {
                (true, true) => p1.2 + lambda * (p2.2 - p1.2),
                (true, false) => p1.2,
                (false, true) => p2.2,
                (false, false) => unreachable!("adjacent hull vertices share no sentinel"),
            };
            break;
        }
    }
    debug_assert!(eer.is_finite(), "the hull always crosses the diagonal");

    // a sentinel threshold can only be reported when the crossing sits on a
    // sentinel vertex; fall back to the nearest finite staircase threshold
    if !eer_threshold.is_finite() {
        let nearest = curve
            .iter()
            .filter(|p| p.threshold.is_finite())
            .min_by(|a, b| {
                let da = (a.far - a.frr).abs();
                let db = (b.far - b.frr).abs();
                da.partial_cmp(&db).unwrap().then(a.threshold.partial_cmp(&b.threshold).unwrap())
            })
            .expect("at least one finite threshold exists");
        eer_threshold = nearest.threshold;
    }

    Ok(VerificationReport { eer: 100.0 * eer, eer_threshold, curve })
}
