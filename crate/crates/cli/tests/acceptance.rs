//! The release gate: ten numbered criteria covering oracle equivalence of
//! every matcher and statistic, qualitative fatigue trends on the synthetic
//! corpus, identity behaviour, and report determinism. Each test prints one
//! `criterion NN PASS/FAIL` line directly to stdout (bypassing test
//! capture) and then asserts.

use std::io::Write as _;
use std::path::Path;
use std::process::Command;
use std::time::{Duration, Instant};

use rand::Rng;
use rand_distr::StandardNormal;
use serde_json::Value;

use inkrec_core::atdr::{
    encode_word, encoded_dtw, fuse_channels, fuse_words, preprocess_stroke, train_catalogue,
    AtdrError, EncodedWord, SomParams,
};
use inkrec_core::dtw::{dtw_distance, DtwConfig, LocalMetric};
use inkrec_core::eval::{verify_eer, ProbeMeta, ProbeRow, ScoreMatrix};
use inkrec_core::features::{extract_features, FeatureConfig, FeatureSequence};
use inkrec_core::ink::{segment_strokes, PenState, Phase, TaskId};
use inkrec_core::msvq::{build_msvq_model, lbg_train_traced, msvq_distortion, LbgParams};
use inkrec_core::rng::{stream, ChaCha12Rng};
use inkrec_core::stats::{lilliefors_test, wilcoxon_signed_rank, Mode};
use inkrec_core::synth::{synth_dataset, PhaseLevels, StyleParams, SynthParams};

use inkrec_cli::config::{resolve_eval, EvalArgs, MethodKind, RunConfig};
use inkrec_cli::protocol::{run_eval, run_synth, run_train_catalogue};

/// Print a verdict line that survives libtest's output capture.
fn report(line: &str) {
    let mut out = std::io::stdout().lock();
    writeln!(out, "{line}").unwrap();
}

fn verdict(pass: bool) -> &'static str {
    if pass {
        "PASS"
    } else {
        "FAIL"
    }
}

fn seq(dim: usize, rows: &[Vec<f64>]) -> FeatureSequence {
    FeatureSequence::from_rows(dim, rows.concat())
}

/// The exact configuration `inkrec eval --root … --method … --phases …`
/// resolves to, defaults and seed fan-out included.
fn run_config(root: &Path, method: MethodKind, phases: &str) -> RunConfig {
    resolve_eval(&EvalArgs {
        config: None,
        root: Some(root.to_path_buf()),
        method: Some(method),
        agg: None,
        sections: None,
        bits: None,
        grid: None,
        resample: None,
        w_air: None,
        phases: Some(phases.to_string()),
        seed: None,
        out: None,
        catalogues: None,
        dump_distances: None,
    })
    .unwrap()
}

fn phase_block<'a>(report: &'a Value, phase: &str) -> &'a Value {
    report["phases"]
        .as_array()
        .unwrap()
        .iter()
        .find(|p| p["phase"] == phase)
        .unwrap_or_else(|| panic!("report has no phase {phase}"))
}

#[test]
fn criterion_01_dtw_matches_exhaustive_path_enumeration() {
    let start = Instant::now();
    let metrics: [(LocalMetric, fn(&[f64], &[f64]) -> f64); 2] = [
        (LocalMetric::Euclidean, inkrec_testkit::euclidean),
        (LocalMetric::Manhattan, inkrec_testkit::manhattan),
    ];
    let mut max_delta = 0.0f64;
    for i in 0..200u64 {
        let mut rng = stream(0xACC1, &[i]);
        let dim = rng.gen_range(1..=3);
        let rows = |rng: &mut ChaCha12Rng, len: usize| -> Vec<Vec<f64>> {
            (0..len)
                .map(|_| (0..dim).map(|_| rng.gen_range(-5.0..5.0)).collect())
                .collect()
        };
        let la = rng.gen_range(1..=6);
        let lb = rng.gen_range(1..=6);
        let a_rows = rows(&mut rng, la);
        let b_rows = rows(&mut rng, lb);
        let (a, b) = (seq(dim, &a_rows), seq(dim, &b_rows));
        for (metric, local) in metrics {
            let config = DtwConfig { local_metric: metric, normalize_by_path: false };
            let got = dtw_distance(&a, &b, &config).unwrap();
            let want = inkrec_testkit::dtw_brute_force(&a_rows, &b_rows, local);
            max_delta = max_delta.max((got - want).abs());
        }
    }
    let elapsed = start.elapsed();
    let pass = max_delta <= 1e-9 && elapsed < Duration::from_secs(10);
    report(&format!(
        "criterion 01 {}: unnormalized DTW vs exhaustive path enumeration on 200 random pairs \
         (both metrics), max |Δ| = {max_delta:.2e}, {elapsed:.2?}",
        verdict(pass)
    ));
    assert!(pass, "max |Δ| = {max_delta:.2e}, elapsed {elapsed:.2?}");
}

#[test]
fn criterion_02_encoded_dtw_matches_exhaustive_path_enumeration() {
    let mut max_delta = 0.0f64;
    for i in 0..100u64 {
        let mut rng = stream(0xACC2, &[i]);
        let coords = |rng: &mut ChaCha12Rng, len: usize| -> Vec<(u16, u16)> {
            (0..len)
                .map(|_| (rng.gen_range(0..8u16), rng.gen_range(0..8u16)))
                .collect()
        };
        let la = rng.gen_range(1..=5);
        let lb = rng.gen_range(1..=5);
        let ca = coords(&mut rng, la);
        let cb = coords(&mut rng, lb);
        let word = |c: &[(u16, u16)]| EncodedWord {
            word_id: TaskId::W1,
            air: vec![],
            surface: c.to_vec(),
        };
        let got = encoded_dtw(&word(&ca), &word(&cb), PenState::OnSurface).unwrap();

        let rows = |c: &[(u16, u16)]| -> Vec<Vec<f64>> {
            c.iter().map(|&(r, q)| vec![r as f64, q as f64]).collect()
        };
        let unnormalized =
            inkrec_testkit::dtw_brute_force(&rows(&ca), &rows(&cb), inkrec_testkit::euclidean);
        let want = unnormalized / (la + lb) as f64;
        max_delta = max_delta.max((got - want).abs());
    }
    let pass = max_delta <= 1e-9;
    report(&format!(
        "criterion 02 {}: encoded DTW vs exhaustive path enumeration on 100 random \
         grid-coordinate pairs, max |Δ| = {max_delta:.2e}",
        verdict(pass)
    ));
    assert!(pass, "max |Δ| = {max_delta:.2e}");
}

#[test]
fn criterion_03_codebook_distortion_never_increases_with_training_or_size() {
    let mut pass = true;
    for s in 0..20u64 {
        let mut rng = stream(0xACC3, &[s]);
        let dim = rng.gen_range(1..=4);
        let len = rng.gen_range(64..=160);
        // a few loose clusters rather than a uniform cloud
        let centers: Vec<Vec<f64>> = (0..rng.gen_range(2..=5))
            .map(|_| (0..dim).map(|_| rng.gen_range(-10.0..10.0)).collect())
            .collect();
        let mut flat = Vec::with_capacity(len * dim);
        for _ in 0..len {
            let c = &centers[rng.gen_range(0..centers.len())];
            for d in 0..dim {
                flat.push(c[d] + rng.gen_range(-1.0..1.0));
            }
        }
        let data = FeatureSequence::from_rows(dim, flat);

        let mut prev_final: Option<f64> = None;
        for bits in 1..=7u8 {
            let (_, trace) = lbg_train_traced(&data, bits, &LbgParams::default()).unwrap();
            let flat_trace: Vec<f64> = trace.levels.iter().flatten().copied().collect();
            for w in flat_trace.windows(2) {
                pass &= w[1] <= w[0];
            }
            let final_distortion = trace.final_distortion();
            if let Some(prev) = prev_final {
                pass &= final_distortion <= prev;
            }
            prev_final = Some(final_distortion);
        }
    }
    report(&format!(
        "criterion 03 {}: 20 seeded training sets, per-iteration distortion non-increasing and \
         b-bit final distortion ≤ (b−1)-bit for b = 1…7",
        verdict(pass)
    ));
    assert!(pass);
}

#[test]
fn criterion_04_eer_matches_exhaustive_threshold_sweep() {
    let meta = ProbeMeta { phase: Phase::Meif, task: Some(TaskId::Sig1) };

    // random matrices vs the sweep oracle
    let mut max_delta = 0.0f64;
    for i in 0..50u64 {
        let mut rng = stream(0xACC4, &[i]);
        let n_models = rng.gen_range(2..=5usize);
        let n_probes = rng.gen_range(2..=(50 / n_models));
        let model_ids: Vec<String> = (0..n_models).map(|m| format!("m{m}")).collect();
        let mut rows = Vec::with_capacity(n_probes);
        for _ in 0..n_probes {
            let subject = model_ids[rng.gen_range(0..n_models)].clone();
            let scores: Vec<f64> = (0..n_models)
                .map(|_| {
                    if rng.gen_bool(0.3) {
                        // quantized scores force threshold ties
                        rng.gen_range(0..8) as f64 / 2.0
                    } else {
                        rng.gen_range(0.0..4.0)
                    }
                })
                .collect();
            rows.push(ProbeRow { subject_id: subject, meta, scores });
        }
        let matrix = ScoreMatrix::new(model_ids.clone(), rows.clone()).unwrap();
        let got = verify_eer(&matrix).unwrap().eer;

        let mut genuine = Vec::new();
        let mut impostor = Vec::new();
        for row in &rows {
            for (j, &score) in row.scores.iter().enumerate() {
                if model_ids[j] == row.subject_id {
                    genuine.push(score);
                } else {
                    impostor.push(score);
                }
            }
        }
        let want = 100.0 * inkrec_testkit::eer_sweep(&genuine, &impostor);
        max_delta = max_delta.max((got - want).abs());
    }

    // crafted operating points reproduce exactly
    let two_column = |genuine: &[f64], impostor: &[f64]| {
        let rows = genuine
            .iter()
            .zip(impostor)
            .map(|(&g, &i)| ProbeRow { subject_id: "a".into(), meta, scores: vec![g, i] })
            .collect();
        ScoreMatrix::new(vec!["a".into(), "b".into()], rows).unwrap()
    };
    let perfect = verify_eer(&two_column(&[1.0, 2.0], &[3.0, 4.0])).unwrap().eer;
    let coin = verify_eer(&two_column(&[1.0, 2.0], &[1.0, 2.0])).unwrap().eer;
    let quarter = verify_eer(&two_column(&[1.0, 3.0], &[2.0, 4.0])).unwrap().eer;

    let pass =
        max_delta <= 1e-9 && perfect == 0.0 && coin == 50.0 && quarter == 25.0;
    report(&format!(
        "criterion 04 {}: EER vs exhaustive threshold sweep on 50 random matrices \
         (max |Δ| = {max_delta:.2e}); crafted cases gave {perfect}%, {coin}%, {quarter}%",
        verdict(pass)
    ));
    assert!(pass, "max |Δ| = {max_delta:.2e}, crafted = ({perfect}, {coin}, {quarter})");
}

#[test]
fn criterion_05_exact_wilcoxon_matches_sign_enumeration() {
    let mut max_delta = 0.0f64;
    let mut pass = true;
    for i in 0..200u64 {
        let mut rng = stream(0xACC5, &[i]);
        let n = rng.gen_range(4..=10usize);
        let steps = [-2.0, -1.0, -0.5, 0.0, 0.5, 1.0, 2.0];
        let diffs: Vec<f64> = loop {
            let candidate: Vec<f64> =
                (0..n).map(|_| steps[rng.gen_range(0..steps.len())]).collect();
            if candidate.iter().any(|&d| d != 0.0) {
                break candidate;
            }
        };
        let zeros = vec![0.0; n];
        let result = wilcoxon_signed_rank(&diffs, &zeros).unwrap();
        pass &= result.mode == Mode::Exact;

        let nonzero: Vec<f64> = diffs.iter().copied().filter(|&d| d != 0.0).collect();
        let (w_want, p_want) = inkrec_testkit::wilcoxon_enumerate(&nonzero);
        pass &= result.statistic == w_want;
        max_delta = max_delta.max((result.p_value - p_want).abs());
    }
    pass &= max_delta <= 1e-12;

    let positives = [1.0, 2.0, 3.0, 4.0, 5.0];
    let pinned = wilcoxon_signed_rank(&positives, &[0.0; 5]).unwrap();
    pass &= pinned.statistic == 15.0 && pinned.p_value == 0.0625;

    report(&format!(
        "criterion 05 {}: exact signed-rank p vs full sign enumeration on 200 samples \
         (max |Δ| = {max_delta:.2e}); n = 5 all-positive gave W = {}, p = {}",
        verdict(pass),
        pinned.statistic,
        pinned.p_value
    ));
    assert!(pass, "max |Δ| = {max_delta:.2e}, pinned p = {}", pinned.p_value);
}

#[test]
fn criterion_06_lilliefors_rejects_five_percent_of_normal_samples() {
    let start = Instant::now();
    let mut rejections = 0usize;
    let total = 2_000usize;
    for i in 0..total as u64 {
        let mut rng = stream(0xACC6, &[i]);
        let sample: Vec<f64> = (0..40).map(|_| rng.sample::<f64, _>(StandardNormal)).collect();
        if lilliefors_test(&sample).unwrap().p_value < 0.05 {
            rejections += 1;
        }
    }
    let rate = rejections as f64 / total as f64;
    let elapsed = start.elapsed();
    let pass = (0.03..=0.07).contains(&rate) && elapsed < Duration::from_secs(60);
    report(&format!(
        "criterion 06 {}: null rejection rate at α = 0.05 over {total} normal samples of \
         size 40 is {rate:.4} (target [0.03, 0.07]), {elapsed:.2?}",
        verdict(pass)
    ));
    assert!(pass, "rate = {rate}, elapsed {elapsed:.2?}");
}

#[test]
fn criterion_07_signature_eer_rises_from_light_to_heavy_fatigue() {
    let start = Instant::now();
    let dir = tempfile::tempdir().unwrap();
    let seeds: Vec<u64> = (1000..1010).collect();

    let mut eer_sums = [[0.0f64; 2]; 2]; // [method][phase: MEIF, SEIF]
    for (k, &seed) in seeds.iter().enumerate() {
        let root = dir.path().join(format!("corpus{k}"));
        run_synth(&root, &SynthParams { n_writers: 20, seed, ..SynthParams::default() }).unwrap();
        for (mi, method) in [MethodKind::Dtw, MethodKind::Msvq].into_iter().enumerate() {
            let json = run_eval(&run_config(&root, method, "MEIF,SEIF")).unwrap();
            let parsed: Value = serde_json::from_str(&json).unwrap();
            for (pi, phase) in ["MEIF", "SEIF"].into_iter().enumerate() {
                eer_sums[mi][pi] +=
                    phase_block(&parsed, phase)["verification"]["eer"].as_f64().unwrap();
            }
        }
        std::fs::remove_dir_all(&root).unwrap();
    }
    let n = seeds.len() as f64;
    let dtw = (eer_sums[0][0] / n, eer_sums[0][1] / n);
    let msvq = (eer_sums[1][0] / n, eer_sums[1][1] / n);
    let elapsed = start.elapsed();

    let pass = dtw.1 >= dtw.0 + 1.0 && msvq.1 >= msvq.0 + 1.0
        && elapsed < Duration::from_secs(300);
    report(&format!(
        "criterion 07 {}: mean signature EER over 10 seeds rises ≥ 1 pp from light to heavy \
         fatigue — dtw {:.2}% → {:.2}%, msvq {:.2}% → {:.2}%, {elapsed:.2?}",
        verdict(pass),
        dtw.0,
        dtw.1,
        msvq.0,
        msvq.1
    ));
    assert!(pass, "dtw {dtw:?}, msvq {msvq:?}, elapsed {elapsed:.2?}");
}

#[test]
fn criterion_08_fused_words_identify_at_least_as_well_as_single_words() {
    let start = Instant::now();
    let dir = tempfile::tempdir().unwrap();
    let seeds: Vec<u64> = (2000..2010).collect();

    let mut combined_sum = 0.0f64;
    let mut single_sum = 0.0f64;
    for (k, &seed) in seeds.iter().enumerate() {
        let root = dir.path().join(format!("corpus{k}"));
        run_synth(&root, &SynthParams { n_writers: 20, seed, ..SynthParams::default() }).unwrap();
        let config = run_config(&root, MethodKind::Atdr, "SEIF");
        run_train_catalogue(&root, &config.catalogues, &config.som).unwrap();
        let parsed: Value = serde_json::from_str(&run_eval(&config).unwrap()).unwrap();
        let phase = phase_block(&parsed, "SEIF");
        combined_sum += phase["identification"]["idr"].as_f64().unwrap();
        let words = phase["per_word"].as_array().unwrap();
        single_sum += words
            .iter()
            .map(|w| w["identification"]["idr"].as_f64().unwrap())
            .sum::<f64>()
            / words.len() as f64;
        std::fs::remove_dir_all(&root).unwrap();
    }
    let n = seeds.len() as f64;
    let (combined, single) = (combined_sum / n, single_sum / n);

    // noiseless, fatigue-free corpus: probes equal enrolment records exactly
    let root = dir.path().join("noiseless");
    run_synth(
        &root,
        &SynthParams {
            n_writers: 20,
            seed: 2042,
            fatigue: PhaseLevels::uniform(0.0),
            style: StyleParams { position_noise: 0.0, ..StyleParams::default() },
            ..SynthParams::default()
        },
    )
    .unwrap();
    let config = run_config(&root, MethodKind::Atdr, "SEIF");
    run_train_catalogue(&root, &config.catalogues, &config.som).unwrap();
    let parsed: Value = serde_json::from_str(&run_eval(&config).unwrap()).unwrap();
    let noiseless_idr =
        phase_block(&parsed, "SEIF")["identification"]["idr"].as_f64().unwrap();
    let elapsed = start.elapsed();

    let pass = combined >= single && noiseless_idr == 100.0;
    report(&format!(
        "criterion 08 {}: fused four-word IDR at heavy fatigue averages {combined:.2}% vs \
         {single:.2}% for single words over 10 seeds; noiseless corpus IDR = \
         {noiseless_idr}%, {elapsed:.2?}",
        verdict(pass)
    ));
    assert!(pass, "combined {combined}, single {single}, noiseless {noiseless_idr}");
}

#[test]
fn criterion_09_every_matcher_scores_a_record_as_zero_against_itself() {
    let corpus = synth_dataset(&SynthParams::new(2, 0x99)).unwrap();
    let record = corpus.record("w00", Phase::Base, TaskId::Sig1).unwrap();
    let features = extract_features(record, &FeatureConfig::default()).unwrap();

    let d_dtw = dtw_distance(&features, &features, &DtwConfig::default()).unwrap();

    // one signature as the whole training set, capacity high enough that
    // every training vector becomes (or shares) its own centroid
    let model = build_msvq_model(
        "w00",
        std::slice::from_ref(&features),
        3,
        8,
        &LbgParams::default(),
    )
    .unwrap();
    let d_msvq = msvq_distortion(&features, &model).unwrap();

    let som = SomParams::default();
    let mut per_word = Vec::new();
    for &word in &TaskId::WORDS {
        let mut pools = [Vec::new(), Vec::new()]; // air, surface
        for rec in corpus.records().iter().filter(|r| r.task_id == word) {
            for stroke in segment_strokes(rec) {
                let pool = match stroke.kind {
                    PenState::InAir => &mut pools[0],
                    PenState::OnSurface => &mut pools[1],
                };
                match preprocess_stroke(&stroke, som.resample) {
                    Ok(v) => pool.push(v),
                    Err(AtdrError::DegenerateStroke) => {}
                    Err(e) => panic!("{e}"),
                }
            }
        }
        let air = train_catalogue(word, PenState::InAir, &pools[0], &som).unwrap();
        let surface = train_catalogue(word, PenState::OnSurface, &pools[1], &som).unwrap();
        let encoded =
            encode_word(corpus.record("w00", Phase::Base, word).unwrap(), &air, &surface)
                .unwrap();
        let d_air = encoded_dtw(&encoded, &encoded, PenState::InAir).unwrap();
        let d_surface = encoded_dtw(&encoded, &encoded, PenState::OnSurface).unwrap();
        per_word.push(fuse_channels(d_air, d_surface, 0.5));
    }
    let d_atdr = fuse_words(&per_word).unwrap();

    let pass = d_dtw.abs() <= 1e-9 && d_msvq.abs() <= 1e-9 && d_atdr.abs() <= 1e-9;
    report(&format!(
        "criterion 09 {}: self-dissimilarity is zero for every matcher — dtw {d_dtw:.2e}, \
         msvq {d_msvq:.2e}, fused words {d_atdr:.2e}",
        verdict(pass)
    ));
    assert!(pass, "dtw {d_dtw}, msvq {d_msvq}, atdr {d_atdr}");
}

#[test]
fn criterion_10_eval_reports_are_byte_identical_across_runs() {
    let dir = tempfile::tempdir().unwrap();
    let root = dir.path().join("data");
    let root_s = root.to_string_lossy().into_owned();
    let bin = env!("CARGO_BIN_EXE_inkrec");

    let run = |args: &[&str]| {
        let out = Command::new(bin).args(args).output().expect("binary spawns");
        assert!(
            out.status.success(),
            "{args:?}: {}",
            String::from_utf8_lossy(&out.stderr)
        );
    };
    run(&["synth", "--root", &root_s, "--writers", "6", "--seed", "31"]);
    run(&["train-catalogue", "--root", &root_s, "--epochs", "10"]);

    let mut pass = true;
    for method in ["dtw", "msvq", "atdr"] {
        let report_a = dir.path().join(format!("{method}_a.json"));
        let report_b = dir.path().join(format!("{method}_b.json"));
        for report in [&report_a, &report_b] {
            run(&[
                "eval",
                "--root",
                &root_s,
                "--method",
                method,
                "--phases",
                "SEIF",
                "--out",
                &report.to_string_lossy(),
            ]);
        }
        pass &= std::fs::read(&report_a).unwrap() == std::fs::read(&report_b).unwrap();
    }
    report(&format!(
        "criterion 10 {}: two eval runs with identical flags wrote byte-identical JSON \
         reports for dtw, msvq and atdr",
        verdict(pass)
    ));
    assert!(pass);
}
