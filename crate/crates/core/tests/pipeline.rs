//! End-to-end properties of the synthetic corpus driven through the
//! matchers, the evaluation protocol and the statistics.

use inkrec_core::{
    aggregate_reference, build_score_matrix, extract_features, identify, synth_dataset,
    verify_eer, wilcoxon_signed_rank, Aggregation, Corpus, DtwConfig, FeatureConfig,
    FeatureSequence, Model, Phase, PhaseLevels, Probe, ProbeMeta, ProbeRow, ScoreMatrix,
    SynthParams, TaskId,
};

const SIGS: [TaskId; 2] = [TaskId::Sig1, TaskId::Sig2];
const PROBE_PHASES: [Phase; 3] = [Phase::Meif, Phase::Seif, Phase::PostSeif];

fn features(corpus: &Corpus, subject: &str, phase: Phase, task: TaskId) -> FeatureSequence {
    let record = corpus.record(subject, phase, task).expect("record exists");
    extract_features(record, &FeatureConfig::default()).expect("synthetic ink is non-degenerate")
}

/// BASE signature enrolment of every subject.
fn enrolments(corpus: &Corpus) -> Vec<(String, Vec<FeatureSequence>)> {
    corpus
        .subject_ids()
        .into_iter()
        .map(|s| {
            let refs = SIGS.map(|t| features(corpus, &s, Phase::Base, t)).to_vec();
            (s, refs)
        })
        .collect()
}

fn min_distance(probe: &FeatureSequence, refs: &[FeatureSequence]) -> f64 {
    aggregate_reference(probe, refs, Aggregation::Min, &DtwConfig::default()).unwrap()
}

#[test]
fn zero_fatigue_probes_sit_closest_to_their_own_enrolment() {
    let mut total = 0u32;
    let mut separated = 0u32;
    for seed in 0..10 {
        let mut params = SynthParams::new(10, seed);
        params.fatigue = PhaseLevels::uniform(0.0);
        let corpus = synth_dataset(&params).unwrap();
        let enrolled = enrolments(&corpus);
        for (i, (subject, own_refs)) in enrolled.iter().enumerate() {
            for phase in PROBE_PHASES {
                for task in SIGS {
                    let probe = features(&corpus, subject, phase, task);
                    let own = min_distance(&probe, own_refs);
                    let closest_other = enrolled
                        .iter()
                        .enumerate()
                        .filter(|(j, _)| *j != i)
                        .map(|(_, (_, refs))| min_distance(&probe, refs))
                        .fold(f64::INFINITY, f64::min);
                    total += 1;
                    if own < closest_other {
                        separated += 1;
                    }
                }
            }
        }
    }
    let fraction = f64::from(separated) / f64::from(total);
    assert!(fraction >= 0.95, "only {separated}/{total} probes separated ({fraction:.3})");
}

#[test]
fn fatigue_strictly_grows_intra_writer_distances() {
    let mean_genuine_distance = |fatigue: f64| -> f64 {
        let mut sum = 0.0;
        let mut count = 0u32;
        for seed in 0..10 {
            let mut params = SynthParams::new(6, 300 + seed);
            params.fatigue =
                PhaseLevels { base: 0.0, meif: fatigue, seif: fatigue, post_seif: fatigue };
            let corpus = synth_dataset(&params).unwrap();
            for (subject, refs) in enrolments(&corpus) {
                for phase in PROBE_PHASES {
                    for task in SIGS {
                        sum += min_distance(&features(&corpus, &subject, phase, task), &refs);
                        count += 1;
                    }
                }
            }
        }
        sum / f64::from(count)
    };
    let calm = mean_genuine_distance(0.0);
    let tired = mean_genuine_distance(0.8);
    assert!(
        tired > calm,
        "mean intra-writer distance must grow with fatigue: {calm} vs {tired}"
    );
}

/// Probe × model signature matrix for one phase, scored with default DTW.
fn signature_matrix(corpus: &Corpus, phase: Phase) -> ScoreMatrix {
    let enrolled = enrolments(corpus);
    let models: Vec<Model<Vec<FeatureSequence>>> = enrolled
        .iter()
        .map(|(s, refs)| Model { subject_id: s.clone(), value: refs.clone() })
        .collect();
    let probes: Vec<Probe<FeatureSequence>> = enrolled
        .iter()
        .flat_map(|(s, _)| {
            SIGS.map(|task| Probe {
                subject_id: s.clone(),
                meta: ProbeMeta { phase, task: Some(task) },
                value: features(corpus, s, phase, task),
            })
        })
        .collect();
    build_score_matrix(&probes, &models, |probe, refs: &Vec<FeatureSequence>| {
        aggregate_reference(probe, refs, Aggregation::Min, &DtwConfig::default())
    })
    .unwrap()
}

#[test]
fn reports_survive_strictly_increasing_score_transforms() {
    let corpus = synth_dataset(&SynthParams::new(8, 77)).unwrap();
    let matrix = signature_matrix(&corpus, Phase::Seif);
    // x ↦ x² + 3x is strictly increasing on the non-negative scores
    let transformed = ScoreMatrix::new(
        matrix.model_ids().to_vec(),
        matrix
            .rows()
            .iter()
            .map(|r| ProbeRow {
                subject_id: r.subject_id.clone(),
                meta: r.meta,
                scores: r.scores.iter().map(|&s| s * s + 3.0 * s).collect(),
            })
            .collect(),
    )
    .unwrap();

    assert_eq!(identify(&matrix).idr, identify(&transformed).idr);
    let eer = verify_eer(&matrix).unwrap().eer;
    let eer_t = verify_eer(&transformed).unwrap().eer;
    assert!((eer - eer_t).abs() < 1e-9, "EER moved under transform: {eer} vs {eer_t}");
}

#[test]
fn identification_gets_no_easier_with_more_writers() {
    let mean_idr = |n_writers: usize| -> f64 {
        let mut sum = 0.0;
        for seed in 0..10 {
            let corpus = synth_dataset(&SynthParams::new(n_writers, 500 + seed)).unwrap();
            sum += identify(&signature_matrix(&corpus, Phase::Seif)).idr;
        }
        sum / 10.0
    };
    let small = mean_idr(10);
    let large = mean_idr(40);
    assert!(
        large <= small,
        "IDR should not grow with population size: 10 writers {small}, 40 writers {large}"
    );
}

#[test]
fn clearly_different_fatigue_levels_yield_lower_p_values() {
    let mut p_far = Vec::new(); // MEIF (0.2) vs SEIF (0.8)
    let mut p_near = Vec::new(); // SEIF (0.8) vs POST_SEIF (0.5)
    for seed in 0..10 {
        let corpus = synth_dataset(&SynthParams::new(12, 900 + seed)).unwrap();
        let mut by_phase: Vec<Vec<f64>> = Vec::new();
        for phase in PROBE_PHASES {
            let distances: Vec<f64> = enrolments(&corpus)
                .iter()
                .flat_map(|(s, refs)| {
                    SIGS.map(|task| min_distance(&features(&corpus, s, phase, task), refs))
                })
                .collect();
            by_phase.push(distances);
        }
        p_far.push(wilcoxon_signed_rank(&by_phase[0], &by_phase[1]).unwrap().p_value);
        p_near.push(wilcoxon_signed_rank(&by_phase[1], &by_phase[2]).unwrap().p_value);
    }
    let median = |values: &mut Vec<f64>| -> f64 {
        values.sort_by(|a, b| a.partial_cmp(b).unwrap());
        values[values.len() / 2]
    };
    let far = median(&mut p_far);
    let near = median(&mut p_near);
    assert!(
        far <= near,
        "contrasting fatigue levels should be more significant: {far} vs {near}"
    );
}
