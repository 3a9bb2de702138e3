//! `rirtool`: command line front end for RIR post-processing.
//!
//! Exit codes: 0 success, 1 usage error, 2 data error, 3 non-finite loss.

mod config;

use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use rir_core::audio::{load_waveform, normalize_rir, write_waveform, Domain, ImpulseResponse, SAMPLE_RATE};
use rir_core::augmentation::{generate_corpus, AugmentError, CorpusConfig, DEFAULT_SNR_RANGE_DB};
use rir_core::equalization::{
    equalize, fit_gmm, relative_gains, sample_gains, EqError, GmmModel, RelativeGainVector, DEFAULT_COMPONENTS,
    DEFAULT_TAPS, N_BANDS,
};
use rir_core::pipeline::{
    build_manifest, export_spectrograms, load_entry, report_params, run_pipeline, write_params_csv,
    Combination, CorpusMeans, DatasetManifest, ManifestEntry, MeanDifference, PipelineError, PipelinePlan, Split,
    DEFAULT_HOP, DEFAULT_WINDOW,
};
use rir_core::tsrirgan::{load_checkpoint, save_checkpoint, translate, GanError, LossMetrics, Trainer};

use config::FileConfig;

#[derive(Debug)]
pub enum CliError {
    Usage(String),
    Data(String),
    Numerical(String),
}

impl CliError {
    fn code(&self) -> u8 {
        match self {
            CliError::Usage(_) => 1,
            CliError::Data(_) => 2,
            CliError::Numerical(_) => 3,
        }
    }
}

impl std::fmt::Display for CliError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            CliError::Usage(m) | CliError::Data(m) | CliError::Numerical(m) => f.write_str(m),
        }
    }
}

impl From<GanError> for CliError {
    fn from(e: GanError) -> Self {
        match e {
            GanError::NaNLoss { .. } => CliError::Numerical(e.to_string()),
            GanError::Config(_) => CliError::Usage(e.to_string()),
            _ => CliError::Data(e.to_string()),
        }
    }
}

impl From<PipelineError> for CliError {
    fn from(e: PipelineError) -> Self {
        match e {
            PipelineError::Gan(g) => g.into(),
            PipelineError::MissingArtifact(_) => CliError::Usage(e.to_string()),
            _ => CliError::Data(e.to_string()),
        }
    }
}

impl From<EqError> for CliError {
    fn from(e: EqError) -> Self {
        match e {
            EqError::InvalidTapCount(_) => CliError::Usage(e.to_string()),
            _ => CliError::Data(e.to_string()),
        }
    }
}

impl From<AugmentError> for CliError {
    fn from(e: AugmentError) -> Self {
        match e {
            AugmentError::InvalidSpec(_) => CliError::Usage(e.to_string()),
            _ => CliError::Data(e.to_string()),
        }
    }
}

impl From<rir_core::audio::AudioError> for CliError {
    fn from(e: rir_core::audio::AudioError) -> Self {
        CliError::Data(e.to_string())
    }
}

type Result<T> = std::result::Result<T, CliError>;

fn io_err(path: &Path, e: std::io::Error) -> CliError {
    CliError::Data(format!("{}: {e}", path.display()))
}

#[derive(Debug, Parser)]
#[command(name = "rirtool", version, about = "Room impulse response post-processing")]
struct Cli {
    /// Master seed for every random choice.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Worker threads (default: all cores).
    #[arg(long, global = true)]
    threads: Option<usize>,
    /// TOML or JSON file with defaults for any command.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Index WAV directories and assign train/dev/test splits.
    Manifest(ManifestArgs),
    /// Acoustic parameters per RIR and corpus means.
    Params(ParamsArgs),
    /// Fit the relative-gain mixture on a set of RIRs.
    EqFit(EqFitArgs),
    /// Equalize one RIR toward a sampled or given gain vector.
    EqApply(EqApplyArgs),
    /// Train the synthetic-to-real translation model.
    Train(TrainArgs),
    /// Translate one synthetic RIR with a trained checkpoint.
    Translate(TranslateArgs),
    /// Build a far-field corpus from clean speech, RIRs and noise.
    Augment(AugmentArgs),
    /// Run one post-processing combination over a manifest.
    Pipeline(PipelineArgs),
    /// Export spectrogram matrices and images.
    Spectrogram(SpectrogramArgs),
}

#[derive(Debug, Args)]
struct ManifestArgs {
    /// Directory of synthetic RIR WAVs.
    #[arg(long)]
    synthetic: Option<PathBuf>,
    /// Directory of real RIR WAVs (JSON sidecars are picked up).
    #[arg(long)]
    real: Option<PathBuf>,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Debug, Args)]
struct ParamsArgs {
    #[arg(long)]
    manifest: PathBuf,
    /// Domain to analyse.
    #[arg(long, default_value = "synthetic")]
    domain: Domain,
    /// Domain whose means are the reference for the difference row.
    #[arg(long, default_value = "real")]
    reference: Domain,
    /// Per-RIR CSV output; the means table goes to stdout.
    #[arg(long)]
    out: PathBuf,
}

#[derive(Debug, Args)]
struct EqFitArgs {
    #[arg(long)]
    manifest: PathBuf,
    #[arg(long, default_value = "real")]
    domain: Domain,
    #[arg(long, default_value_t = DEFAULT_COMPONENTS)]
    components: usize,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Debug, Args)]
struct EqApplyArgs {
    #[arg(long)]
    input: PathBuf,
    #[arg(long)]
    output: PathBuf,
    /// Mixture to sample the target from.
    #[arg(long, conflicts_with = "target")]
    gmm: Option<PathBuf>,
    /// Explicit target, seven comma-separated dB values.
    #[arg(long, value_delimiter = ',', allow_hyphen_values = true)]
    target: Option<Vec<f64>>,
    #[arg(long)]
    taps: Option<usize>,
}

#[derive(Debug, Args)]
struct TrainArgs {
    #[arg(long)]
    manifest: PathBuf,
    /// Checkpoint written at the end of the run.
    #[arg(long)]
    out: PathBuf,
    /// Overrides `training.total_steps`.
    #[arg(long)]
    steps: Option<u64>,
    /// Continue from this checkpoint.
    #[arg(long)]
    resume: Option<PathBuf>,
    /// Per-step loss CSV.
    #[arg(long)]
    log: Option<PathBuf>,
}

#[derive(Debug, Args)]
struct TranslateArgs {
    #[arg(long)]
    checkpoint: PathBuf,
    #[arg(long)]
    input: PathBuf,
    #[arg(long)]
    output: PathBuf,
}

#[derive(Debug, Args)]
struct AugmentArgs {
    #[arg(long)]
    clean: PathBuf,
    #[arg(long)]
    rirs: PathBuf,
    #[arg(long)]
    noise: PathBuf,
    #[arg(long)]
    out: PathBuf,
    #[arg(long)]
    snr_min: Option<f64>,
    #[arg(long)]
    snr_max: Option<f64>,
}

#[derive(Debug, Args)]
struct PipelineArgs {
    #[arg(long)]
    manifest: PathBuf,
    #[arg(long)]
    combination: Option<Combination>,
    #[arg(long)]
    checkpoint: Option<PathBuf>,
    #[arg(long)]
    gmm: Option<PathBuf>,
    #[arg(long)]
    taps: Option<usize>,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Debug, Args)]
struct SpectrogramArgs {
    #[arg(long)]
    manifest: PathBuf,
    /// Only entries of this domain (default: all).
    #[arg(long)]
    domain: Option<Domain>,
    #[arg(long, default_value_t = DEFAULT_WINDOW)]
    window: usize,
    #[arg(long, default_value_t = DEFAULT_HOP)]
    hop: usize,
    #[arg(long)]
    out: PathBuf,
}

struct Ctx {
    seed: u64,
    file: FileConfig,
}

fn load_manifest(path: &Path) -> Result<DatasetManifest> {
    Ok(DatasetManifest::load(path)?)
}

fn load_rir(path: &Path, domain: Domain) -> Result<ImpulseResponse> {
    let (x, sr) = load_waveform(path)?;
    let id = path.file_stem().map(|s| s.to_string_lossy().into_owned()).unwrap_or_default();
    Ok(normalize_rir(&x, sr, domain, id)?)
}

fn cmd_manifest(ctx: &Ctx, a: &ManifestArgs) -> Result<()> {
    let mut manifest: Option<DatasetManifest> = None;
    for (dir, domain) in [(&a.synthetic, Domain::Synthetic), (&a.real, Domain::Real)] {
        let Some(dir) = dir else { continue };
        let m = build_manifest(dir, domain, ctx.seed)?;
        manifest = Some(match manifest {
            Some(prev) => prev.merge(m)?,
            None => m,
        });
    }
    let manifest = manifest.ok_or_else(|| CliError::Usage("give --synthetic and/or --real".into()))?;
    manifest.save(&a.out)?;
    for domain in [Domain::Synthetic, Domain::Real] {
        let entries = manifest.of_domain(domain);
        if entries.is_empty() {
            continue;
        }
        let count = |s: Split| entries.iter().filter(|e| e.split == s).count();
        println!(
            "{domain}: {} entries, train {} dev {} test {}",
            entries.len(),
            count(Split::Train),
            count(Split::Dev),
            count(Split::Test)
        );
    }
    Ok(())
}

fn means_row(label: &str, m: &CorpusMeans) -> String {
    let o = |v: Option<f64>| v.map(|v| v.to_string()).unwrap_or_default();
    format!("{label},{},{},{},{},{}", m.count, o(m.t60_s), m.drr_db, o(m.edt_s), m.cte_db)
}

fn diff_row(d: &MeanDifference) -> String {
    let o = |v: Option<f64>| v.map(|v| v.to_string()).unwrap_or_default();
    format!("difference,,{},{},{},{}", o(d.t60_s), d.drr_db, o(d.edt_s), d.cte_db)
}

fn cmd_params(a: &ParamsArgs) -> Result<()> {
    let manifest = load_manifest(&a.manifest)?;
    let entries = manifest.of_domain(a.domain);
    let reference = manifest.of_domain(a.reference);
    let reference = (a.reference != a.domain || !reference.is_empty()).then_some(reference.as_slice());
    let report = report_params(&entries, reference)?;
    write_params_csv(&report.rows, &a.out)?;
    println!("set,count,t60_s,drr_db,edt_s,cte_db");
    if let Some(m) = &report.mean {
        println!("{}", means_row("mean", m));
    }
    if let Some(r) = &report.reference {
        println!("{}", means_row("reference", r));
    }
    if let Some(d) = &report.difference {
        println!("{}", diff_row(d));
    }
    for f in &report.failures {
        eprintln!("failed: {} ({})", f.id, f.error);
    }
    Ok(())
}

fn cmd_eq_fit(ctx: &Ctx, a: &EqFitArgs) -> Result<()> {
    let manifest = load_manifest(&a.manifest)?;
    let entries: Vec<ManifestEntry> = manifest.of_domain(a.domain);
    let mut vectors = Vec::with_capacity(entries.len());
    for e in &entries {
        match load_entry(e).map_err(CliError::from).and_then(|ir| Ok(relative_gains(&ir)?)) {
            Ok(v) => vectors.push(v),
            Err(err) => log::warn!("skipping {}: {err}", e.id),
        }
    }
    let model = fit_gmm(&vectors, a.components, ctx.seed)?;
    model.save(&a.out)?;
    println!("fitted {} components on {} vectors", model.components.len(), vectors.len());
    Ok(())
}

fn cmd_eq_apply(ctx: &Ctx, a: &EqApplyArgs) -> Result<()> {
    let target = match (&a.target, &a.gmm) {
        (Some(t), _) => {
            let arr: [f64; N_BANDS] = t
                .as_slice()
                .try_into()
                .map_err(|_| CliError::Usage(format!("--target needs {N_BANDS} values")))?;
            RelativeGainVector::new(arr).map_err(|e| CliError::Usage(e.to_string()))?
        }
        (None, Some(g)) => sample_gains(&GmmModel::load(g)?, 1, ctx.seed)?[0],
        (None, None) => return Err(CliError::Usage("give --gmm or --target".into())),
    };
    let taps = a.taps.or(ctx.file.pipeline.num_taps).unwrap_or(DEFAULT_TAPS);
    let ir = load_rir(&a.input, Domain::Synthetic)?;
    let out = equalize(&ir, &target, taps)?;
    write_waveform(&a.output, out.samples(), SAMPLE_RATE)?;
    Ok(())
}

fn cmd_train(ctx: &Ctx, a: &TrainArgs) -> Result<()> {
    let manifest = load_manifest(&a.manifest)?;
    let pool = |domain: Domain| -> Result<Vec<ImpulseResponse>> {
        manifest
            .entries
            .iter()
            .filter(|e| e.domain == domain && e.split == Split::Train)
            .map(|e| load_entry(e).map_err(CliError::from))
            .collect()
    };
    let synthetic = pool(Domain::Synthetic)?;
    let real = pool(Domain::Real)?;
    let mut trainer = match &a.resume {
        Some(p) => Trainer::<f32>::from_checkpoint(&load_checkpoint(p)?, &synthetic, &real)?,
        None => {
            let mut training = ctx.file.training;
            training.seed = ctx.seed;
            Trainer::<f32>::new(ctx.file.generator, ctx.file.discriminator, training, &synthetic, &real)?
        }
    };
    let steps = a.steps.unwrap_or(trainer.config.total_steps);
    let mut log_file = match &a.log {
        Some(p) => {
            let mut w = BufWriter::new(File::create(p).map_err(|e| io_err(p, e))?);
            writeln!(w, "{}", LossMetrics::csv_header()).map_err(|e| io_err(p, e))?;
            Some(w)
        }
        None => None,
    };
    let result = trainer.run(steps, log_file.as_mut().map(|w| w as &mut dyn Write));
    if let (Some(w), Some(p)) = (log_file.as_mut(), &a.log) {
        w.flush().map_err(|e| io_err(p, e))?;
    }
    let metrics = result?;
    save_checkpoint(&trainer.checkpoint(), &a.out)?;
    if let Some(last) = metrics.last() {
        println!("step {}: {last}", trainer.state.step);
    }
    Ok(())
}

fn cmd_translate(a: &TranslateArgs) -> Result<()> {
    let ckpt = load_checkpoint(&a.checkpoint)?;
    let ir = load_rir(&a.input, Domain::Synthetic)?;
    let out = translate(&ir, &ckpt)?;
    write_waveform(&a.output, out.samples(), SAMPLE_RATE)?;
    Ok(())
}

fn cmd_augment(ctx: &Ctx, a: &AugmentArgs) -> Result<()> {
    let cfg = CorpusConfig {
        snr_min_db: a.snr_min.or(ctx.file.augment.snr_min_db).unwrap_or(DEFAULT_SNR_RANGE_DB.0),
        snr_max_db: a.snr_max.or(ctx.file.augment.snr_max_db).unwrap_or(DEFAULT_SNR_RANGE_DB.1),
        seed: ctx.seed,
    };
    let records = generate_corpus(&a.clean, &a.rirs, &a.noise, &a.out, &cfg)?;
    println!("wrote {} utterances", records.len());
    Ok(())
}

fn cmd_pipeline(ctx: &Ctx, a: &PipelineArgs) -> Result<()> {
    let p = &ctx.file.pipeline;
    let combination = a
        .combination
        .or(p.combination)
        .ok_or_else(|| CliError::Usage("give --combination".into()))?;
    let mut plan = PipelinePlan::new(
        combination,
        a.checkpoint.clone().or_else(|| p.checkpoint.clone()),
        a.gmm.clone().or_else(|| p.gmm.clone()),
        ctx.seed,
    );
    plan.num_taps = a.taps.or(p.num_taps).unwrap_or(DEFAULT_TAPS);
    let manifest = load_manifest(&a.manifest)?;
    let report = run_pipeline(&plan, &manifest, &a.out)?;
    println!(
        "{}: {} outputs, {} failures",
        combination,
        report.entries.len(),
        report.failures.len()
    );
    Ok(())
}

fn cmd_spectrogram(a: &SpectrogramArgs) -> Result<()> {
    let manifest = load_manifest(&a.manifest)?;
    let entries = match a.domain {
        Some(d) => manifest.of_domain(d),
        None => manifest.entries.clone(),
    };
    let files = export_spectrograms(&entries, &a.out, a.window, a.hop)?;
    println!("wrote {} spectrograms", files.len());
    Ok(())
}

fn run(cli: Cli) -> Result<()> {
    let file = match &cli.config {
        Some(p) => FileConfig::load(p)?,
        None => FileConfig::default(),
    };
    if let Some(n) = cli.threads.or(file.threads) {
        rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build_global()
            .map_err(|e| CliError::Usage(e.to_string()))?;
    }
    let ctx = Ctx {
        seed: cli.seed.or(file.seed).unwrap_or(0),
        file,
    };
    match &cli.command {
        Command::Manifest(a) => cmd_manifest(&ctx, a),
        Command::Params(a) => cmd_params(a),
        Command::EqFit(a) => cmd_eq_fit(&ctx, a),
        Command::EqApply(a) => cmd_eq_apply(&ctx, a),
        Command::Train(a) => cmd_train(&ctx, a),
        Command::Translate(a) => cmd_translate(a),
        Command::Augment(a) => cmd_augment(&ctx, a),
        Command::Pipeline(a) => cmd_pipeline(&ctx, a),
        Command::Spectrogram(a) => cmd_spectrogram(a),
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return ExitCode::from(if e.use_stderr() { 1 } else { 0 });
        }
    };
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.code())
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn nan_loss_maps_to_numerical_exit() {
        let e: CliError = GanError::NaNLoss {
            step: 3,
            components: "L_cyc=NaN".into(),
        }
        .into();
        assert_eq!(e.code(), 3);
        let e: CliError = PipelineError::Gan(GanError::NaNLoss {
            step: 0,
            components: String::new(),
        })
        .into();
        assert_eq!(e.code(), 3);
        let e: CliError = PipelineError::EmptyCorpus.into();
        assert_eq!(e.code(), 2);
        let e: CliError = PipelineError::MissingArtifact("gmm".into()).into();
        assert_eq!(e.code(), 1);
    }

    #[test]
    fn cli_definition_is_consistent() {
        use clap::CommandFactory;
        Cli::command().debug_assert();
    }
}
