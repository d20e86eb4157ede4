//! End-to-end commands: corpus synthesis, catalogue training, the
//! enrol/score/report protocol, and statistics over distance files.
//!
//! Enrolment follows the recognition protocol: models come from the
//! enrolment phase — both signature realizations for the signature matchers,
//! one realization of each word for the text matcher — and every record of
//! each requested test phase is scored against every model. Everything here
//! composes the public library API, so CLI-level numbers equal
//! library-level numbers.

use std::path::{Path, PathBuf};

use serde::Serialize;

use inkrec_core::atdr::{
    channel_name, encode_word, encoded_dtw, fuse_channels, fuse_words, load_catalogue,
    preprocess_stroke, save_catalogue, train_catalogue, AtdrError, EncodedWord, SomCatalogue,
    SomParams,
};
use inkrec_core::dtw::aggregate_reference;
use inkrec_core::eval::{
    build_score_matrix, identify, verify_eer, EvalError, IdentificationReport, Model, Probe,
    ProbeMeta, ScoreMatrix, VerificationReport,
};
use inkrec_core::features::{extract_features, FeatureConfig, FeatureSequence};
use inkrec_core::ink::{segment_strokes, Corpus, PenState, Phase, TaskId};
use inkrec_core::msvq::{build_msvq_model, msvq_distortion, LbgParams, MsvqModel};
use inkrec_core::rng::mix_seed;
use inkrec_core::stats::{lilliefors_test_with, wilcoxon_signed_rank, StatsError, TestResult};
use inkrec_core::synth::{synth_dataset, SynthError, SynthParams};

use crate::config::{MethodKind, RunConfig};
use crate::error::{CliError, CliResult};

const SIGNATURES: [TaskId; 2] = [TaskId::Sig1, TaskId::Sig2];
const CHANNELS: [PenState; 2] = [PenState::InAir, PenState::OnSurface];

fn data(e: impl std::fmt::Display) -> CliError {
    CliError::Data(e.to_string())
}

fn eval_err(e: EvalError) -> CliError {
    match e {
        // we build model columns from distinct subject directories, so a
        // duplicate id means the protocol itself is broken
        EvalError::DuplicateModelId { .. } => CliError::Internal(e.to_string()),
        _ => CliError::Data(e.to_string()),
    }
}

/// Generate a synthetic corpus and write it under `root`. Returns the number
/// of records written.
pub fn run_synth(root: &Path, params: &SynthParams) -> CliResult<usize> {
    let corpus = synth_dataset(params).map_err(|e| match e {
        SynthError::InvalidParams(_) => CliError::Usage(e.to_string()),
    })?;
    corpus.save(root).map_err(data)?;
    Ok(corpus.records().len())
}

/// File name of one catalogue inside the catalogue directory.
pub fn catalogue_file_name(word: TaskId, channel: PenState) -> String {
    format!("{word}_{}.cat", channel_name(channel))
}

/// Train one catalogue per (word, channel) on the enrolment-phase words of
/// every subject under `root` and save them into `out_dir`. Returns the
/// written paths.
pub fn run_train_catalogue(
    root: &Path,
    out_dir: &Path,
    som: &SomParams,
) -> CliResult<Vec<PathBuf>> {
    let corpus = Corpus::load(root, &[Phase::Base], &TaskId::WORDS).map_err(data)?;
    std::fs::create_dir_all(out_dir)
        .map_err(|e| CliError::Data(format!("cannot create {}: {e}", out_dir.display())))?;

    let mut paths = Vec::new();
    for (wi, &word) in TaskId::WORDS.iter().enumerate() {
        for (ci, &channel) in CHANNELS.iter().enumerate() {
            let mut pool: Vec<Vec<f64>> = Vec::new();
            for record in corpus.records().iter().filter(|r| r.task_id == word) {
                for stroke in segment_strokes(record).iter().filter(|s| s.kind == channel) {
                    match preprocess_stroke(stroke, som.resample) {
                        Ok(v) => pool.push(v),
                        // dot-like strokes carry no shape; skip them
                        Err(AtdrError::DegenerateStroke) => {}
                        Err(e) => return Err(CliError::Internal(e.to_string())),
                    }
                }
            }
            let params = SomParams { seed: mix_seed(som.seed, &[wi as u64, ci as u64]), ..*som };
            let catalogue = train_catalogue(word, channel, &pool, &params).map_err(|e| match e {
                AtdrError::EmptyTrainingSet => CliError::Data(format!(
                    "no usable {} strokes of {word} under {}",
                    channel_name(channel),
                    root.display()
                )),
                other => CliError::Internal(other.to_string()),
            })?;
            let path = out_dir.join(catalogue_file_name(word, channel));
            save_catalogue(&catalogue, &path).map_err(data)?;
            paths.push(path);
        }
    }
    Ok(paths)
}

/// Parameters echoed into the report; only the fields relevant to the
/// evaluated method are present.
#[derive(Serialize)]
struct ParamsEcho {
    #[serde(skip_serializing_if = "Option::is_none")]
    agg: Option<&'static str>,
    #[serde(skip_serializing_if = "Option::is_none")]
    local_metric: Option<&'static str>,
    #[serde(skip_serializing_if = "Option::is_none")]
    normalize_by_path: Option<bool>,
    #[serde(skip_serializing_if = "Option::is_none")]
    sections: Option<usize>,
    #[serde(skip_serializing_if = "Option::is_none")]
    bits: Option<u8>,
    #[serde(skip_serializing_if = "Option::is_none")]
    grid: Option<usize>,
    #[serde(skip_serializing_if = "Option::is_none")]
    resample: Option<usize>,
    #[serde(skip_serializing_if = "Option::is_none")]
    w_air: Option<f64>,
}

impl ParamsEcho {
    fn new(config: &RunConfig) -> Self {
        let mut echo = ParamsEcho {
            agg: None,
            local_metric: None,
            normalize_by_path: None,
            sections: None,
            bits: None,
            grid: None,
            resample: None,
            w_air: None,
        };
        match config.method {
            MethodKind::Dtw => {
                echo.agg = Some(config.agg.as_str());
                echo.local_metric = Some(match config.dtw.local_metric {
                    inkrec_core::dtw::LocalMetric::Euclidean => "euclidean",
                    inkrec_core::dtw::LocalMetric::Manhattan => "manhattan",
                });
                echo.normalize_by_path = Some(config.dtw.normalize_by_path);
            }
            MethodKind::Msvq => {
                echo.sections = Some(config.sections);
                echo.bits = Some(config.bits);
            }
            MethodKind::Atdr => {
                echo.grid = Some(config.som.grid);
                echo.resample = Some(config.som.resample);
                echo.w_air = Some(config.w_air);
            }
        }
        echo
    }
}

#[derive(Serialize)]
struct WordReport {
    task: TaskId,
    identification: IdentificationReport,
    verification: VerificationReport,
}

#[derive(Serialize)]
struct PhaseReport {
    phase: Phase,
    identification: IdentificationReport,
    verification: VerificationReport,
    #[serde(skip_serializing_if = "Option::is_none")]
    per_word: Option<Vec<WordReport>>,
}

#[derive(Serialize)]
struct EvalReport {
    method: &'static str,
    enrol_phase: Phase,
    seed: u64,
    params: ParamsEcho,
    phases: Vec<PhaseReport>,
}

/// Scored matrices of one test phase: the headline matrix plus, for the
/// text matcher, the single-word matrices behind the fused one.
struct PhaseMatrices {
    phase: Phase,
    combined: ScoreMatrix,
    per_word: Option<Vec<(TaskId, ScoreMatrix)>>,
}

/// Run the full evaluation protocol and render the JSON report. The report
/// is returned, not written; the caller decides where it goes.
pub fn run_eval(config: &RunConfig) -> CliResult<String> {
    let tasks: &[TaskId] = match config.method {
        MethodKind::Dtw | MethodKind::Msvq => &SIGNATURES,
        MethodKind::Atdr => &TaskId::WORDS,
    };
    let mut phases = vec![config.enrol_phase];
    for &p in &config.test_phases {
        if !phases.contains(&p) {
            phases.push(p);
        }
    }
    let corpus = Corpus::load(&config.root, &phases, tasks).map_err(data)?;
    let subjects = corpus.subject_ids();
    if subjects.len() < 2 {
        return Err(CliError::Data(format!(
            "need at least 2 subjects for impostor trials, found {} under {}",
            subjects.len(),
            config.root.display()
        )));
    }

    let matrices = match config.method {
        MethodKind::Dtw => eval_dtw(&corpus, &subjects, config)?,
        MethodKind::Msvq => eval_msvq(&corpus, &subjects, config)?,
        MethodKind::Atdr => eval_atdr(&corpus, &subjects, config)?,
    };

    if let Some(dir) = &config.dump_distances {
        dump_genuine_distances(dir, config, &matrices)?;
    }

    let mut phase_reports = Vec::with_capacity(matrices.len());
    for m in &matrices {
        let per_word = match &m.per_word {
            Some(list) => Some(
                list.iter()
                    .map(|(task, matrix)| {
                        Ok(WordReport {
                            task: *task,
                            identification: identify(matrix),
                            verification: verify_eer(matrix).map_err(eval_err)?,
                        })
                    })
                    .collect::<CliResult<Vec<WordReport>>>()?,
            ),
            None => None,
        };
        phase_reports.push(PhaseReport {
            phase: m.phase,
            identification: identify(&m.combined),
            verification: verify_eer(&m.combined).map_err(eval_err)?,
            per_word,
        });
    }

    let report = EvalReport {
        method: config.method.as_str(),
        enrol_phase: config.enrol_phase,
        seed: config.seed,
        params: ParamsEcho::new(config),
        phases: phase_reports,
    };
    let mut json = serde_json::to_string_pretty(&report)
        .map_err(|e| CliError::Internal(e.to_string()))?;
    json.push('\n');
    Ok(json)
}

fn sig_features(
    corpus: &Corpus,
    subject: &str,
    phase: Phase,
    task: TaskId,
) -> CliResult<FeatureSequence> {
    let record = corpus
        .record(subject, phase, task)
        .ok_or_else(|| CliError::Data(format!("missing record {subject}/{phase}/{task}")))?;
    extract_features(record, &FeatureConfig::default())
        .map_err(|e| CliError::Data(format!("{subject}/{phase}/{task}: {e}")))
}

fn signature_probes(
    corpus: &Corpus,
    subjects: &[String],
    phase: Phase,
) -> CliResult<Vec<Probe<FeatureSequence>>> {
    let mut probes = Vec::with_capacity(subjects.len() * SIGNATURES.len());
    for subject in subjects {
        for &task in &SIGNATURES {
            probes.push(Probe {
                subject_id: subject.clone(),
                meta: ProbeMeta { phase, task: Some(task) },
                value: sig_features(corpus, subject, phase, task)?,
            });
        }
    }
    Ok(probes)
}

fn eval_dtw(
    corpus: &Corpus,
    subjects: &[String],
    config: &RunConfig,
) -> CliResult<Vec<PhaseMatrices>> {
    let mut models = Vec::with_capacity(subjects.len());
    for subject in subjects {
        let refs = SIGNATURES
            .iter()
            .map(|&task| sig_features(corpus, subject, config.enrol_phase, task))
            .collect::<CliResult<Vec<FeatureSequence>>>()?;
        models.push(Model { subject_id: subject.clone(), value: refs });
    }

    let mut out = Vec::new();
    for &phase in &config.test_phases {
        let probes = signature_probes(corpus, subjects, phase)?;
        let combined = build_score_matrix(&probes, &models, |probe, refs: &Vec<FeatureSequence>| {
            aggregate_reference(probe, refs, config.agg, &config.dtw)
        })
        .map_err(eval_err)?;
        out.push(PhaseMatrices { phase, combined, per_word: None });
    }
    Ok(out)
}

fn eval_msvq(
    corpus: &Corpus,
    subjects: &[String],
    config: &RunConfig,
) -> CliResult<Vec<PhaseMatrices>> {
    let mut models = Vec::with_capacity(subjects.len());
    for (si, subject) in subjects.iter().enumerate() {
        let training = SIGNATURES
            .iter()
            .map(|&task| sig_features(corpus, subject, config.enrol_phase, task))
            .collect::<CliResult<Vec<FeatureSequence>>>()?;
        let params = LbgParams { seed: mix_seed(config.lbg.seed, &[si as u64]), ..config.lbg };
        let model =
            build_msvq_model(subject.as_str(), &training, config.sections, config.bits, &params)
                .map_err(|e| CliError::Data(format!("building codebooks for {subject}: {e}")))?;
        models.push(Model { subject_id: subject.clone(), value: model });
    }

    let mut out = Vec::new();
    for &phase in &config.test_phases {
        let probes = signature_probes(corpus, subjects, phase)?;
        let combined = build_score_matrix(&probes, &models, |probe, model: &MsvqModel| {
            msvq_distortion(probe, model)
        })
        .map_err(eval_err)?;
        out.push(PhaseMatrices { phase, combined, per_word: None });
    }
    Ok(out)
}

fn load_one_catalogue(config: &RunConfig, word: TaskId, channel: PenState) -> CliResult<SomCatalogue> {
    let path = config.catalogues.join(catalogue_file_name(word, channel));
    let catalogue = load_catalogue(&path)
        .map_err(|e| CliError::Data(format!("{e}; run `inkrec train-catalogue` first")))?;
    if catalogue.word_id != word || catalogue.channel != channel {
        return Err(CliError::Data(format!(
            "{}: header says {}/{}, file name says {}/{}",
            path.display(),
            catalogue.word_id,
            channel_name(catalogue.channel),
            word,
            channel_name(channel),
        )));
    }
    if catalogue.grid() != config.som.grid || catalogue.resample() != config.som.resample {
        return Err(CliError::Data(format!(
            "{}: catalogue was trained with grid={} resample={}, but the run is configured \
             with grid={} resample={}",
            path.display(),
            catalogue.grid(),
            catalogue.resample(),
            config.som.grid,
            config.som.resample,
        )));
    }
    Ok(catalogue)
}

/// Channel-fused dissimilarity between two encodings of the same word. A
/// channel empty on either side (a word written without pen lifts has no
/// in-air strokes) drops out of the fusion; the score falls back to the
/// other channel alone.
fn word_dissimilarity(a: &EncodedWord, b: &EncodedWord, w_air: f64) -> Result<f64, AtdrError> {
    let air = encoded_dtw(a, b, PenState::InAir);
    let surface = encoded_dtw(a, b, PenState::OnSurface);
    match (air, surface) {
        (Ok(d_air), Ok(d_surface)) => Ok(fuse_channels(d_air, d_surface, w_air)),
        (Ok(d), Err(AtdrError::EmptyChannel)) | (Err(AtdrError::EmptyChannel), Ok(d)) => Ok(d),
        (Err(e), _) | (_, Err(e)) => Err(e),
    }
}

fn encode_subject_words(
    corpus: &Corpus,
    subject: &str,
    phase: Phase,
    catalogues: &[(TaskId, SomCatalogue, SomCatalogue)],
) -> CliResult<Vec<EncodedWord>> {
    catalogues
        .iter()
        .map(|(word, air, surface)| {
            let record = corpus.record(subject, phase, *word).ok_or_else(|| {
                CliError::Data(format!("missing record {subject}/{phase}/{word}"))
            })?;
            encode_word(record, air, surface)
                .map_err(|e| CliError::Data(format!("{subject}/{phase}/{word}: {e}")))
        })
        .collect()
}

fn eval_atdr(
    corpus: &Corpus,
    subjects: &[String],
    config: &RunConfig,
) -> CliResult<Vec<PhaseMatrices>> {
    let catalogues = TaskId::WORDS
        .iter()
        .map(|&word| {
            Ok((
                word,
                load_one_catalogue(config, word, PenState::InAir)?,
                load_one_catalogue(config, word, PenState::OnSurface)?,
            ))
        })
        .collect::<CliResult<Vec<(TaskId, SomCatalogue, SomCatalogue)>>>()?;

    let mut models = Vec::with_capacity(subjects.len());
    for subject in subjects {
        let encoded = encode_subject_words(corpus, subject, config.enrol_phase, &catalogues)?;
        models.push(Model { subject_id: subject.clone(), value: encoded });
    }

    let w_air = config.w_air;
    let mut out = Vec::new();
    for &phase in &config.test_phases {
        let mut encoded_probes = Vec::with_capacity(subjects.len());
        for subject in subjects {
            encoded_probes
                .push((subject.clone(), encode_subject_words(corpus, subject, phase, &catalogues)?));
        }

        // headline matrix: all words fused, one trial per subject
        let combined_probes: Vec<Probe<Vec<EncodedWord>>> = encoded_probes
            .iter()
            .map(|(subject, encoded)| Probe {
                subject_id: subject.clone(),
                meta: ProbeMeta { phase, task: None },
                value: encoded.clone(),
            })
            .collect();
        let combined =
            build_score_matrix(&combined_probes, &models, |probe, model: &Vec<EncodedWord>| {
                let per_word = probe
                    .iter()
                    .zip(model)
                    .map(|(p, m)| word_dissimilarity(p, m, w_air))
                    .collect::<Result<Vec<f64>, AtdrError>>()?;
                fuse_words(&per_word)
            })
            .map_err(eval_err)?;

        // single-word matrices behind the fused result
        let mut per_word = Vec::with_capacity(TaskId::WORDS.len());
        for (wi, &word) in TaskId::WORDS.iter().enumerate() {
            let word_probes: Vec<Probe<EncodedWord>> = encoded_probes
                .iter()
                .map(|(subject, encoded)| Probe {
                    subject_id: subject.clone(),
                    meta: ProbeMeta { phase, task: Some(word) },
                    value: encoded[wi].clone(),
                })
                .collect();
            let word_models: Vec<Model<EncodedWord>> = models
                .iter()
                .map(|m| Model { subject_id: m.subject_id.clone(), value: m.value[wi].clone() })
                .collect();
            let matrix =
                build_score_matrix(&word_probes, &word_models, |probe, model: &EncodedWord| {
                    word_dissimilarity(probe, model, w_air)
                })
                .map_err(eval_err)?;
            per_word.push((word, matrix));
        }

        out.push(PhaseMatrices { phase, combined, per_word: Some(per_word) });
    }
    Ok(out)
}

/// Write one `<PHASE>.txt` per test phase into `dir`: the genuine (true
/// model) dissimilarity of every probe, one value per line, in canonical
/// probe order. Lines pair across phases, ready for `inkrec stats`.
fn dump_genuine_distances(
    dir: &Path,
    config: &RunConfig,
    matrices: &[PhaseMatrices],
) -> CliResult<()> {
    std::fs::create_dir_all(dir)
        .map_err(|e| CliError::Data(format!("cannot create {}: {e}", dir.display())))?;
    for m in matrices {
        let mut text = format!(
            "# genuine dissimilarities, method={} phase={}\n# probe order: {}\n",
            config.method.as_str(),
            m.phase,
            m.combined
                .rows()
                .iter()
                .map(|row| row.subject_id.as_str())
                .collect::<Vec<&str>>()
                .join(","),
        );
        for row in m.combined.rows() {
            let true_col = m
                .combined
                .model_ids()
                .iter()
                .position(|id| *id == row.subject_id)
                .expect("matrix invariant: every probe has its true model");
            text.push_str(&row.scores[true_col].to_string());
            text.push('\n');
        }
        let path = dir.join(format!("{}.txt", m.phase));
        std::fs::write(&path, text)
            .map_err(|e| CliError::Data(format!("cannot write {}: {e}", path.display())))?;
    }
    Ok(())
}

/// One test outcome inside the stats report: either the result or the
/// reason the test refused the input (degenerate data stays in-report; only
/// structural problems abort the run).
#[derive(Serialize)]
#[serde(untagged)]
enum TestOutcome {
    Ok(TestResult),
    Err { error: String },
}

impl From<Result<TestResult, StatsError>> for TestOutcome {
    fn from(r: Result<TestResult, StatsError>) -> Self {
        match r {
            Ok(result) => TestOutcome::Ok(result),
            Err(e) => TestOutcome::Err { error: e.to_string() },
        }
    }
}

#[derive(Serialize)]
struct FileStats {
    name: String,
    n: usize,
    lilliefors: TestOutcome,
}

#[derive(Serialize)]
struct PairStats {
    a: String,
    b: String,
    wilcoxon: TestOutcome,
    lilliefors_diff: TestOutcome,
}

#[derive(Serialize)]
struct StatsReport {
    replicates: usize,
    seed: u64,
    files: Vec<FileStats>,
    pairs: Vec<PairStats>,
}

fn read_distance_file(path: &Path) -> CliResult<Vec<f64>> {
    let text = std::fs::read_to_string(path)
        .map_err(|e| CliError::Data(format!("{}: {e}", path.display())))?;
    let mut values = Vec::new();
    for (idx, raw) in text.lines().enumerate() {
        let line = raw.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let value: f64 = line.parse().map_err(|e| {
            CliError::Data(format!("{}:{}: bad value {line:?}: {e}", path.display(), idx + 1))
        })?;
        values.push(value);
    }
    if values.is_empty() {
        return Err(CliError::Data(format!("{}: no values", path.display())));
    }
    Ok(values)
}

/// Short display names: file stems while they are unique, full paths
/// otherwise.
fn series_names(files: &[PathBuf]) -> Vec<String> {
    let stems: Vec<String> = files
        .iter()
        .map(|p| {
            p.file_stem()
                .map(|s| s.to_string_lossy().into_owned())
                .unwrap_or_else(|| p.display().to_string())
        })
        .collect();
    let mut unique = stems.clone();
    unique.sort();
    unique.dedup();
    if unique.len() == stems.len() {
        stems
    } else {
        files.iter().map(|p| p.display().to_string()).collect()
    }
}

/// Per-file normality tests plus, for every file pair, the paired Wilcoxon
/// signed-rank test and a normality test of the differences. Renders the
/// JSON report.
pub fn run_stats(files: &[PathBuf], replicates: usize, seed: u64) -> CliResult<String> {
    let names = series_names(files);
    let mut series = Vec::with_capacity(files.len());
    for (path, name) in files.iter().zip(&names) {
        series.push((name.clone(), read_distance_file(path)?));
    }

    let files_out = series
        .iter()
        .map(|(name, values)| FileStats {
            name: name.clone(),
            n: values.len(),
            lilliefors: lilliefors_test_with(values, replicates, seed).into(),
        })
        .collect();

    let mut pairs = Vec::new();
    for i in 0..series.len() {
        for j in (i + 1)..series.len() {
            let (name_a, a) = &series[i];
            let (name_b, b) = &series[j];
            if a.len() != b.len() {
                return Err(CliError::Data(format!(
                    "{name_a} and {name_b} have different lengths ({} vs {}); \
                     paired tests need matched samples",
                    a.len(),
                    b.len()
                )));
            }
            let diffs: Vec<f64> = a.iter().zip(b).map(|(x, y)| x - y).collect();
            pairs.push(PairStats {
                a: name_a.clone(),
                b: name_b.clone(),
                wilcoxon: wilcoxon_signed_rank(a, b).into(),
                lilliefors_diff: lilliefors_test_with(&diffs, replicates, seed).into(),
            });
        }
    }

    let report = StatsReport { replicates, seed, files: files_out, pairs };
    let mut json = serde_json::to_string_pretty(&report)
        .map_err(|e| CliError::Internal(e.to_string()))?;
    json.push('\n');
    Ok(json)
}
