//! `revfront` command-line front end.

use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand};
use log::info;

use revfront::features::{
    extract, splice, write_csv, write_features, FeatureKind, FeatureParams, CONTEXT_FRAMES,
};
use revfront::harness::{
    emit_report, evaluate_grid_on, read_manifest, reverberate, synth_corpus, CorpusSource,
    EnhancerKind, EnhancerSettings, GridConfig, ReportFormat, DEFAULT_GRID_DISTANCES_M,
    DEFAULT_GRID_RTS_S,
};
use revfront::nmf::SparsityWeight;
use revfront::rir::{fixed_grid, generate_rir_set, render_rir, write_rir, RoomSamplerConfig};
use revfront::signal::wav::{read_wav, write_wav, WavEncoding};

#[derive(Debug, Parser)]
#[command(
    name = "revfront",
    version,
    about = "Reverberation-robust speech front-end toolkit"
)]
struct Cli {
    /// Seed for every random draw
    #[arg(long, global = true, default_value_t = 0)]
    seed: u64,
    /// Worker threads (0 = one per core); results do not depend on it
    #[arg(long, global = true, default_value_t = 0)]
    threads: usize,
    /// Log verbosity on stderr (error, warn, info, debug, trace)
    #[arg(long, global = true, default_value = "warn")]
    log_level: log::LevelFilter,
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Simulate room impulse responses (WAV plus JSON metadata per room)
    RirGen(RirGenArgs),
    /// Convolve every utterance of a manifest with one impulse response
    Reverberate(ReverberateArgs),
    /// Dereverberate one WAV file
    Enhance(EnhanceArgs),
    /// Extract log filterbank features from one WAV file
    Features(FeaturesArgs),
    /// Score every enhancer and feature type over the RT x distance grid
    Evaluate(EvaluateArgs),
    /// Write a synthetic speech-like corpus and its manifest
    SynthCorpus(SynthCorpusArgs),
}

#[derive(Debug, Args)]
struct RirGenArgs {
    /// Render the fixed 4 RT x 5 distance evaluation grid
    #[arg(long, conflicts_with = "count")]
    grid_default: bool,
    /// Number of randomly sampled rooms
    #[arg(long, required_unless_present = "grid_default")]
    count: Option<usize>,
    /// Output directory (created if missing)
    #[arg(long)]
    out: PathBuf,
    #[arg(long, default_value_t = 16000)]
    sample_rate: u32,
}

#[derive(Debug, Args)]
struct ReverberateArgs {
    /// Newline-delimited list of WAV paths
    #[arg(long)]
    manifest: PathBuf,
    /// Impulse response WAV
    #[arg(long)]
    rir: PathBuf,
    /// Output directory; files keep their input names
    #[arg(long)]
    out: PathBuf,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, clap::ValueEnum)]
enum Method {
    Ssf,
    Nmf,
    Wpe,
}

#[derive(Debug, Args)]
struct EnhanceArgs {
    #[arg(long, value_enum)]
    method: Method,
    input: PathBuf,
    output: PathBuf,
    /// SSF forgetting factor of the envelope lowpass
    #[arg(long, default_value_t = 0.4)]
    ssf_lambda: f64,
    /// SSF floor as a fraction of the lowpassed envelope
    #[arg(long, default_value_t = 0.01)]
    ssf_c0: f64,
    /// NMF reverberation filter length in frames
    #[arg(long, default_value_t = 25)]
    nmf_k: usize,
    /// NMF sparsity weight relative to the band's mean envelope
    #[arg(long, default_value_t = 0.05)]
    nmf_sparsity: f64,
    /// NMF multiplicative-update iterations
    #[arg(long, default_value_t = 100)]
    nmf_iters: usize,
    /// WPE prediction delay in frames
    #[arg(long, default_value_t = 3)]
    wpe_delay: usize,
    /// WPE prediction filter taps
    #[arg(long, default_value_t = 10)]
    wpe_taps: usize,
    /// WPE reweighting iterations
    #[arg(long, default_value_t = 3)]
    wpe_iters: usize,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, clap::ValueEnum)]
enum FeatureFormat {
    Feat,
    Csv,
}

#[derive(Debug, Args)]
struct FeaturesArgs {
    #[arg(long, value_parser = parse_feature_kind)]
    kind: FeatureKind,
    /// Append +-5 frames of context to every frame
    #[arg(long)]
    splice: bool,
    #[arg(long, value_enum, default_value = "feat")]
    format: FeatureFormat,
    input: PathBuf,
    output: PathBuf,
}

#[derive(Debug, Args)]
struct EvaluateArgs {
    /// Manifest of clean utterances
    #[arg(long, conflicts_with = "synth")]
    manifest: Option<PathBuf>,
    /// Use this many synthetic utterances instead of a manifest
    #[arg(long, required_unless_present = "manifest")]
    synth: Option<usize>,
    /// Report path
    #[arg(long)]
    out: PathBuf,
    #[arg(long, default_value = "csv", value_parser = parse_report_format)]
    format: ReportFormat,
    #[arg(long, value_delimiter = ',', default_value = "none,ssf,nmf,wpe", value_parser = parse_enhancer)]
    enhancers: Vec<EnhancerKind>,
    #[arg(long, value_delimiter = ',', default_value = "melfb,lnfb", value_parser = parse_feature_kind)]
    features: Vec<FeatureKind>,
    /// Reverberation times in seconds
    #[arg(long, value_delimiter = ',', default_value = "0.47,0.84,1.27,1.77")]
    rts: Vec<f64>,
    /// Source-microphone distances in metres
    #[arg(
        long,
        value_delimiter = ',',
        default_value = "0.16,0.32,0.64,1.28,2.56"
    )]
    distances: Vec<f64>,
    /// Sample rate of synthetic utterances
    #[arg(long, default_value_t = 16000)]
    sample_rate: u32,
}

#[derive(Debug, Args)]
struct SynthCorpusArgs {
    #[arg(long, default_value_t = 20)]
    count: usize,
    /// Output directory; a manifest.txt listing the files is written too
    #[arg(long)]
    out: PathBuf,
    #[arg(long, default_value_t = 16000)]
    sample_rate: u32,
}

fn parse_feature_kind(s: &str) -> Result<FeatureKind, String> {
    s.parse().map_err(|e: revfront::error::Error| e.to_string())
}

fn parse_enhancer(s: &str) -> Result<EnhancerKind, String> {
    s.parse().map_err(|e: revfront::error::Error| e.to_string())
}

fn parse_report_format(s: &str) -> Result<ReportFormat, String> {
    s.parse().map_err(|e: revfront::error::Error| e.to_string())
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            // help and version go to stdout with status 0, usage errors to stderr with 2
            let _ = e.print();
            return ExitCode::from(e.exit_code() as u8);
        }
    };
    env_logger::Builder::new()
        .filter_level(cli.log_level)
        .target(env_logger::Target::Stderr)
        .init();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(1)
        }
    }
}

fn run(cli: Cli) -> Result<()> {
    rayon::ThreadPoolBuilder::new()
        .num_threads(cli.threads)
        .build_global()
        .context("configuring worker threads")?;
    match cli.command {
        Command::RirGen(a) => rir_gen(a, cli.seed),
        Command::Reverberate(a) => reverberate_manifest(a),
        Command::Enhance(a) => enhance(a),
        Command::Features(a) => features(a),
        Command::Evaluate(a) => evaluate(a, cli.seed),
        Command::SynthCorpus(a) => synth(a, cli.seed),
    }
}

fn create_dir(dir: &Path) -> Result<()> {
    std::fs::create_dir_all(dir).with_context(|| format!("creating {}", dir.display()))
}

fn rir_gen(a: RirGenArgs, seed: u64) -> Result<()> {
    let cfg = RoomSamplerConfig {
        seed,
        ..RoomSamplerConfig::default()
    };
    create_dir(&a.out)?;
    if a.grid_default {
        let specs = fixed_grid(&DEFAULT_GRID_RTS_S, &DEFAULT_GRID_DISTANCES_M, &cfg)?;
        for spec in &specs {
            let (rir, meta) = render_rir(spec, a.sample_rate, seed)?;
            let stem = format!("grid_rt{:.2}_d{:.2}", spec.nominal_rt_s, spec.distance_m);
            write_rir(&a.out, &stem, &rir, &meta)?;
            info!("{stem}: estimated RT60 {:.3} s", meta.estimated_rt60_s);
        }
    } else {
        let count = a.count.unwrap_or(0);
        for (i, (rir, meta)) in generate_rir_set(&cfg, count, a.sample_rate)?
            .iter()
            .enumerate()
        {
            write_rir(&a.out, &format!("rir_{i:04}"), rir, meta)?;
        }
    }
    Ok(())
}

fn output_name(input: &Path) -> Result<&std::ffi::OsStr> {
    input
        .file_name()
        .with_context(|| format!("{} has no file name", input.display()))
}

fn reverberate_manifest(a: ReverberateArgs) -> Result<()> {
    let rir = read_wav(&a.rir).with_context(|| format!("reading {}", a.rir.display()))?;
    let inputs = read_manifest(&a.manifest)?;
    create_dir(&a.out)?;
    for path in &inputs {
        let clean = read_wav(path).with_context(|| format!("reading {}", path.display()))?;
        let wet = reverberate(&clean, &rir)
            .with_context(|| format!("reverberating {}", path.display()))?;
        write_wav(a.out.join(output_name(path)?), &wet, WavEncoding::Float32)?;
    }
    Ok(())
}

fn enhancer_settings(a: &EnhanceArgs, sample_rate_hz: u32) -> Result<EnhancerSettings> {
    let mut s = EnhancerSettings::new(sample_rate_hz)?;
    s.ssf.lambda = a.ssf_lambda;
    s.ssf.c0 = a.ssf_c0;
    s.ssf.validate()?;
    s.nmf.filter_len = a.nmf_k;
    s.nmf.sparsity = SparsityWeight::RelativeToMean(a.nmf_sparsity);
    s.nmf.iterations = a.nmf_iters;
    s.nmf.validate()?;
    s.wpe.delay = a.wpe_delay;
    s.wpe.taps = a.wpe_taps;
    s.wpe.iterations = a.wpe_iters;
    s.wpe.validate()?;
    Ok(s)
}

fn enhance(a: EnhanceArgs) -> Result<()> {
    let input = read_wav(&a.input).with_context(|| format!("reading {}", a.input.display()))?;
    let settings = enhancer_settings(&a, input.sample_rate_hz())?;
    let kind = match a.method {
        Method::Ssf => EnhancerKind::Ssf,
        Method::Nmf => EnhancerKind::Nmf,
        Method::Wpe => EnhancerKind::Wpe,
    };
    let out = settings.apply(kind, &input)?;
    write_wav(&a.output, &out, WavEncoding::Float32)?;
    Ok(())
}

fn features(a: FeaturesArgs) -> Result<()> {
    let wave = read_wav(&a.input).with_context(|| format!("reading {}", a.input.display()))?;
    let mut f = extract(a.kind, &wave, &FeatureParams::default())?;
    if a.splice {
        f = splice(&f, CONTEXT_FRAMES, CONTEXT_FRAMES)?;
    }
    match a.format {
        FeatureFormat::Feat => write_features(&a.output, &f)?,
        FeatureFormat::Csv => write_csv(&a.output, &f)?,
    }
    Ok(())
}

fn evaluate(a: EvaluateArgs, seed: u64) -> Result<()> {
    let corpus = match (a.manifest, a.synth) {
        (Some(m), _) => CorpusSource::Manifest(m),
        (None, Some(count)) => CorpusSource::Synthetic {
            count,
            sample_rate_hz: a.sample_rate,
        },
        (None, None) => bail!("either --manifest or --synth is required"),
    };
    let cfg = GridConfig {
        rts_s: a.rts,
        distances_m: a.distances,
        enhancers: a.enhancers,
        features: a.features,
        corpus,
        room: RoomSamplerConfig::default(),
        seed,
    };
    cfg.validate()?;
    let utterances = cfg.corpus.load(cfg.seed)?;
    let settings = EnhancerSettings::new(utterances[0].sample_rate_hz())?;
    let results = evaluate_grid_on(&cfg, &utterances, &settings, &FeatureParams::default())?;
    emit_report(&results, a.format, &a.out)
        .with_context(|| format!("writing {}", a.out.display()))?;
    info!("{} cells written to {}", results.len(), a.out.display());
    Ok(())
}

fn synth(a: SynthCorpusArgs, seed: u64) -> Result<()> {
    create_dir(&a.out)?;
    let mut manifest = String::new();
    for (i, utt) in synth_corpus(a.count, seed, a.sample_rate)?
        .iter()
        .enumerate()
    {
        let name = format!("utt_{i:04}.wav");
        write_wav(a.out.join(&name), utt, WavEncoding::Float32)?;
        manifest.push_str(&name);
        manifest.push('\n');
    }
    std::fs::write(a.out.join("manifest.txt"), manifest)?;
    Ok(())
}
