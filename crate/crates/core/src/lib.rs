//! Online handwriting writer recognition under physical fatigue.
//!
//! The crate covers the full experimental pipeline:
//!
//! - [`ink`]: pen-sample data model, plain-text ink file format, stroke
//!   segmentation, and the on-disk dataset layout.
//! - [`features`]: per-sample feature extraction (normalized positions plus
//!   derivatives) feeding the sequence matchers.
//! - [`dtw`]: dynamic time warping dissimilarity over feature sequences.
//! - [`msvq`]: multi-section vector quantization — per-user, per-section
//!   codebooks trained with binary-splitting LBG.
//! - [`atdr`]: allographic text-dependent recognition — stroke-level
//!   self-organizing maps, encoded words, encoded DTW, channel/word fusion.
//! - [`eval`]: identification (IDR) and verification (FAR/FRR, EER) over
//!   probe × model score matrices.
//! - [`stats`]: Wilcoxon signed-rank and Lilliefors tests for comparing
//!   paired intra-writer distance sets across phases.
//! - [`synth`]: deterministic synthetic corpus generator with a tunable
//!   fatigue perturbation, standing in for a private acquisition campaign.
//! - [`rng`]: tagged deterministic random streams fanning out of one seed.

pub mod atdr;
pub mod dtw;
pub mod eval;
pub mod features;
pub mod ink;
pub mod msvq;
pub mod rng;
pub mod stats;
pub mod synth;

pub use atdr::{
    encode_word, encoded_dtw, fuse_channels, fuse_words, train_catalogue, AtdrError, EncodedWord,
    SomCatalogue, SomParams,
};
pub use dtw::{aggregate_reference, dtw_distance, Aggregation, DtwConfig, DtwError, LocalMetric};
pub use eval::{
    build_score_matrix, far_frr_curve, identify, verify_eer, CurvePoint, EvalError,
    IdentificationReport, Model, Probe, ProbeMeta, ProbeRow, ScoreMatrix, VerificationReport,
};
pub use features::{extract_features, FeatureConfig, FeatureError, FeatureSequence};
pub use ink::{
    parse_ink, segment_strokes, write_ink, Corpus, InkError, InkRecord, PenSample, PenState,
    Phase, PhaseLabel, Stroke, TaskId,
};
pub use msvq::{
    build_msvq_model, lbg_train, msvq_distortion, split_sections, Codebook, LbgParams, LbgTrace,
    MsvqError, MsvqModel,
};
pub use stats::{lilliefors_test, lilliefors_test_with, wilcoxon_signed_rank, StatsError, TestResult};
pub use synth::{synth_dataset, FatigueModel, PhaseLevels, StyleParams, SynthError, SynthParams};
