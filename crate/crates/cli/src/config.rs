//! Command-line definitions, key=value config files, and flag/file merging.
//!
//! Precedence per `eval` setting: explicit flag → config-file entry →
//! built-in default. The merged result is validated once, up front, so a bad
//! run dies with a usage error before any data is touched.

use std::collections::HashMap;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand, ValueEnum};
use inkrec_core::atdr::SomParams;
use inkrec_core::dtw::{Aggregation, DtwConfig};
use inkrec_core::ink::Phase;
use inkrec_core::msvq::LbgParams;
use inkrec_core::rng::mix_seed;
use inkrec_core::stats::{DEFAULT_LILLIEFORS_SEED, DEFAULT_REPLICATES};
use inkrec_core::synth::PhaseLevels;

use crate::error::{CliError, CliResult};

/// Default master seed for `eval` runs.
pub const DEFAULT_EVAL_SEED: u64 = 0x5eed;

#[derive(Parser, Debug)]
#[command(
    name = "inkrec",
    version,
    about = "Online writer recognition under fatigue: corpus synthesis, matcher evaluation, statistics"
)]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Subcommand, Debug)]
pub enum Command {
    /// Generate a deterministic synthetic ink corpus on disk
    Synth(SynthArgs),
    /// Train the per-word, per-channel allograph catalogues used by atdr
    TrainCatalogue(TrainCatalogueArgs),
    /// Enrol models, score probes, and write a JSON evaluation report
    Eval(EvalArgs),
    /// Normality and paired significance tests over distance files
    Stats(StatsArgs),
}

#[derive(Args, Debug)]
pub struct SynthArgs {
    /// Dataset root directory to create
    #[arg(long)]
    pub root: PathBuf,

    /// Number of writers
    #[arg(long, default_value_t = 20)]
    pub writers: usize,

    /// Master corpus seed
    #[arg(long, default_value_t = 0x1a2b)]
    pub seed: u64,

    /// Fatigue levels for BASE,MEIF,SEIF,POST_SEIF, each in [0, 1]
    #[arg(long, default_value = "0,0.2,0.8,0.5", value_parser = parse_fatigue)]
    pub fatigue: PhaseLevels,

    /// Intra-writer positional jitter (std, device units); 0 = noiseless
    #[arg(long, default_value_t = 0.6)]
    pub noise: f64,

    /// Inter-writer style spread; 0 makes every writer identical
    #[arg(long, default_value_t = 0.8)]
    pub spread: f64,
}

fn parse_fatigue(s: &str) -> Result<PhaseLevels, String> {
    let parts: Vec<&str> = s.split(',').collect();
    if parts.len() != 4 {
        return Err("expected four comma-separated levels: BASE,MEIF,SEIF,POST_SEIF".into());
    }
    let mut levels = [0.0f64; 4];
    for (slot, part) in levels.iter_mut().zip(&parts) {
        *slot = part.trim().parse().map_err(|e| format!("bad level {part:?}: {e}"))?;
    }
    Ok(PhaseLevels::from(levels))
}

#[derive(Args, Debug)]
pub struct TrainCatalogueArgs {
    /// Dataset root directory
    #[arg(long)]
    pub root: PathBuf,

    /// Output directory for catalogue files [default: <root>/catalogues]
    #[arg(long)]
    pub out: Option<PathBuf>,

    /// Map side length (the map has grid × grid prototypes)
    #[arg(long, default_value_t = 8)]
    pub grid: usize,

    /// Points per resampled stroke
    #[arg(long, default_value_t = 16)]
    pub resample: usize,

    /// Training epochs
    #[arg(long, default_value_t = 30)]
    pub epochs: usize,

    /// Master training seed
    #[arg(long, default_value_t = 0x50f)]
    pub seed: u64,
}

#[derive(Args, Debug)]
pub struct EvalArgs {
    /// Optional key=value config file; flags override file entries
    #[arg(long)]
    pub config: Option<PathBuf>,

    /// Dataset root directory
    #[arg(long)]
    pub root: Option<PathBuf>,

    /// Matcher to evaluate
    #[arg(long, value_enum)]
    pub method: Option<MethodKind>,

    /// How per-reference distances collapse into one enrolment score
    #[arg(long, value_enum)]
    pub agg: Option<AggKind>,

    /// Codebook sections along the signature (msvq)
    #[arg(long)]
    pub sections: Option<usize>,

    /// Codebook size exponent: 2^bits centroids per section (msvq)
    #[arg(long)]
    pub bits: Option<u8>,

    /// Catalogue map side length (atdr)
    #[arg(long)]
    pub grid: Option<usize>,

    /// Points per resampled stroke (atdr)
    #[arg(long)]
    pub resample: Option<usize>,

    /// Weight of the in-air channel in [0, 1] (atdr)
    #[arg(long)]
    pub w_air: Option<f64>,

    /// Comma-separated test phases [default: MEIF,SEIF,POST_SEIF]
    #[arg(long)]
    pub phases: Option<String>,

    /// Master seed fanned out to every stochastic component
    #[arg(long)]
    pub seed: Option<u64>,

    /// Report output path (stdout if omitted)
    #[arg(long)]
    pub out: Option<PathBuf>,

    /// Catalogue directory (atdr) [default: <root>/catalogues]
    #[arg(long)]
    pub catalogues: Option<PathBuf>,

    /// Directory receiving per-phase genuine-distance files for `stats`
    #[arg(long)]
    pub dump_distances: Option<PathBuf>,
}

#[derive(Args, Debug)]
pub struct StatsArgs {
    /// Two or more distance files (one value per line, '#' comments)
    #[arg(required = true, num_args = 2..)]
    pub files: Vec<PathBuf>,

    /// Report output path (stdout if omitted)
    #[arg(long)]
    pub out: Option<PathBuf>,

    /// Monte-Carlo replicates behind each Lilliefors p-value
    #[arg(long, default_value_t = DEFAULT_REPLICATES)]
    pub replicates: usize,

    /// Seed of the Lilliefors null distribution
    #[arg(long, default_value_t = DEFAULT_LILLIEFORS_SEED)]
    pub seed: u64,
}

/// Matcher selected by `--method`.
#[derive(ValueEnum, Clone, Copy, Debug, PartialEq, Eq)]
pub enum MethodKind {
    /// Dynamic-time-warping signature matcher
    Dtw,
    /// Multi-section vector-quantization signature matcher
    Msvq,
    /// Allographic text-dependent word matcher
    Atdr,
}

impl MethodKind {
    pub fn as_str(self) -> &'static str {
        match self {
            MethodKind::Dtw => "dtw",
            MethodKind::Msvq => "msvq",
            MethodKind::Atdr => "atdr",
        }
    }

    fn parse(s: &str) -> Option<Self> {
        match s {
            "dtw" => Some(MethodKind::Dtw),
            "msvq" => Some(MethodKind::Msvq),
            "atdr" => Some(MethodKind::Atdr),
            _ => None,
        }
    }
}

/// Clap-facing mirror of [`Aggregation`].
#[derive(ValueEnum, Clone, Copy, Debug, PartialEq, Eq)]
pub enum AggKind {
    Min,
    Mean,
}

impl AggKind {
    fn to_core(self) -> Aggregation {
        match self {
            AggKind::Min => Aggregation::Min,
            AggKind::Mean => Aggregation::Mean,
        }
    }

    fn parse(s: &str) -> Option<Self> {
        match s {
            "min" => Some(AggKind::Min),
            "mean" => Some(AggKind::Mean),
            _ => None,
        }
    }
}

/// Fully-resolved evaluation run: every parameter pinned and every component
/// seed fanned out of the master seed. Built by [`resolve_eval`]; consumed by
/// [`crate::protocol::run_eval`].
#[derive(Debug, Clone)]
pub struct RunConfig {
    pub root: PathBuf,
    pub method: MethodKind,
    pub dtw: DtwConfig,
    pub agg: Aggregation,
    pub sections: usize,
    pub bits: u8,
    pub lbg: LbgParams,
    pub som: SomParams,
    pub w_air: f64,
    pub enrol_phase: Phase,
    pub test_phases: Vec<Phase>,
    pub catalogues: PathBuf,
    pub out: Option<PathBuf>,
    pub dump_distances: Option<PathBuf>,
    pub seed: u64,
}

/// Keys accepted in an `eval` config file; identical to the long flag names.
const EVAL_KEYS: [&str; 13] = [
    "root",
    "method",
    "agg",
    "sections",
    "bits",
    "grid",
    "resample",
    "w-air",
    "phases",
    "seed",
    "out",
    "catalogues",
    "dump-distances",
];

fn parse_config_file(path: &Path) -> CliResult<HashMap<String, String>> {
    let text = std::fs::read_to_string(path).map_err(|e| {
        CliError::Usage(format!("cannot read config file {}: {e}", path.display()))
    })?;
    let mut entries = HashMap::new();
    for (idx, raw) in text.lines().enumerate() {
        let line = raw.split('#').next().unwrap_or("").trim();
        if line.is_empty() {
            continue;
        }
        let Some((key, value)) = line.split_once('=') else {
            return Err(CliError::Usage(format!(
                "{}:{}: expected key=value, got {raw:?}",
                path.display(),
                idx + 1
            )));
        };
        let key = key.trim().to_string();
        if !EVAL_KEYS.contains(&key.as_str()) {
            return Err(CliError::Usage(format!(
                "{}:{}: unknown configuration key {key:?}",
                path.display(),
                idx + 1
            )));
        }
        if entries.insert(key.clone(), value.trim().to_string()).is_some() {
            return Err(CliError::Usage(format!(
                "{}:{}: duplicate key {key:?}",
                path.display(),
                idx + 1
            )));
        }
    }
    Ok(entries)
}

/// Flag wins; otherwise the config-file entry is parsed; otherwise `None`.
fn merged<T>(
    flag: Option<T>,
    file: Option<&String>,
    key: &str,
    parse: impl FnOnce(&str) -> Result<T, String>,
) -> CliResult<Option<T>> {
    if flag.is_some() {
        return Ok(flag);
    }
    match file {
        Some(raw) => parse(raw)
            .map(Some)
            .map_err(|e| CliError::Usage(format!("config key {key}: {e}"))),
        None => Ok(None),
    }
}

fn parse_num<T: std::str::FromStr>(s: &str) -> Result<T, String>
where
    T::Err: std::fmt::Display,
{
    s.trim().parse().map_err(|e| format!("bad value {s:?}: {e}"))
}

fn parse_phases(s: &str) -> CliResult<Vec<Phase>> {
    let mut phases = Vec::new();
    for part in s.split(',') {
        let name = part.trim();
        if name.is_empty() {
            continue;
        }
        let phase = Phase::parse(name).ok_or_else(|| {
            CliError::Usage(format!(
                "unknown phase {name:?}; expected BASE, MEIF, SEIF or POST_SEIF"
            ))
        })?;
        if !phases.contains(&phase) {
            phases.push(phase);
        }
    }
    if phases.is_empty() {
        return Err(CliError::Usage("no test phases given".into()));
    }
    Ok(phases)
}

/// Merge flags over the optional config file, fill defaults, validate ranges,
/// and fan the master seed out to the per-component seeds.
pub fn resolve_eval(args: &EvalArgs) -> CliResult<RunConfig> {
    let file = match &args.config {
        Some(path) => parse_config_file(path)?,
        None => HashMap::new(),
    };
    let get = |key: &str| file.get(key);

    let root = merged(args.root.clone(), get("root"), "root", |s| Ok(PathBuf::from(s)))?
        .ok_or_else(|| CliError::Usage("missing required setting: --root".into()))?;
    let method = merged(args.method, get("method"), "method", |s| {
        MethodKind::parse(s).ok_or_else(|| format!("expected dtw, msvq or atdr, got {s:?}"))
    })?
    .ok_or_else(|| CliError::Usage("missing required setting: --method".into()))?;
    let agg = merged(args.agg, get("agg"), "agg", |s| {
        AggKind::parse(s).ok_or_else(|| format!("expected min or mean, got {s:?}"))
    })?
    .unwrap_or(AggKind::Min)
    .to_core();
    let sections = merged(args.sections, get("sections"), "sections", parse_num)?.unwrap_or(3);
    let bits = merged(args.bits, get("bits"), "bits", parse_num)?.unwrap_or(3);
    let grid = merged(args.grid, get("grid"), "grid", parse_num)?.unwrap_or(8);
    let resample = merged(args.resample, get("resample"), "resample", parse_num)?.unwrap_or(16);
    let w_air = merged(args.w_air, get("w-air"), "w-air", parse_num)?.unwrap_or(0.5);
    let phases_raw = merged(args.phases.clone(), get("phases"), "phases", |s| Ok(s.to_string()))?;
    let test_phases = parse_phases(phases_raw.as_deref().unwrap_or("MEIF,SEIF,POST_SEIF"))?;
    let seed = merged(args.seed, get("seed"), "seed", parse_num)?.unwrap_or(DEFAULT_EVAL_SEED);
    let out = merged(args.out.clone(), get("out"), "out", |s| Ok(PathBuf::from(s)))?;
    let catalogues =
        merged(args.catalogues.clone(), get("catalogues"), "catalogues", |s| {
            Ok(PathBuf::from(s))
        })?
        .unwrap_or_else(|| root.join("catalogues"));
    let dump_distances =
        merged(args.dump_distances.clone(), get("dump-distances"), "dump-distances", |s| {
            Ok(PathBuf::from(s))
        })?;

    if !(0.0..=1.0).contains(&w_air) {
        return Err(CliError::Usage(format!("--w-air must lie in [0, 1], got {w_air}")));
    }
    if !(1..=8).contains(&bits) {
        return Err(CliError::Usage(format!("--bits must lie in 1..=8, got {bits}")));
    }
    if sections < 1 {
        return Err(CliError::Usage("--sections must be at least 1".into()));
    }
    if grid < 2 {
        return Err(CliError::Usage(format!("--grid must be at least 2, got {grid}")));
    }
    if resample < 4 {
        return Err(CliError::Usage(format!("--resample must be at least 4, got {resample}")));
    }

    Ok(RunConfig {
        root,
        method,
        dtw: DtwConfig::default(),
        agg,
        sections,
        bits,
        lbg: LbgParams { seed: mix_seed(seed, &[1]), ..LbgParams::default() },
        som: SomParams { grid, resample, seed: mix_seed(seed, &[2]), ..SomParams::default() },
        w_air,
        enrol_phase: Phase::Base,
        test_phases,
        catalogues,
        out,
        dump_distances,
        seed,
    })
}
