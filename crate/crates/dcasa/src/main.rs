use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};

use dcasa::config::{Preset, RunConfig};
use dcasa::error::{Error, Result};
use dcasa::evaluate::{evaluate_model, render_summary, write_report};
use dcasa::pipeline::{separate_model, separate_oracle_cirm, Assignment};
use dcasa::train::{
    joint_finetune, load_split, prepare_seq_items, train_sequential, train_simultaneous,
    Artifacts, PitMode, SimulObjective,
};
use dcasa::{checkpoint, dataset, gradcheck, manifest, plot, wav};
use dcasa_core::dense_unet::{DenseUNet, MaskDomain};
use dcasa_core::optim::AdamConfig;
use dcasa_core::rng::rng_for;
use dcasa_core::tcn::Tcn;

#[derive(Parser)]
#[command(
    name = "dcasa",
    about = "Two-stage deep CASA talker-independent speaker separation",
    version
)]
struct Cli {
    /// Configuration file (TOML); unknown keys are rejected.
    #[arg(long, global = true)]
    config: Option<PathBuf>,

    /// Root random seed.
    #[arg(long, global = true)]
    seed: Option<u64>,

    /// Built-in configuration preset.
    #[arg(long, global = true, value_enum)]
    preset: Option<Preset>,

    #[command(subcommand)]
    command: Command,
}

#[derive(Clone, Copy, ValueEnum)]
enum ObjectiveArg {
    Psa,
    Ca,
    Snr,
}

impl From<ObjectiveArg> for SimulObjective {
    fn from(o: ObjectiveArg) -> Self {
        match o {
            ObjectiveArg::Psa => SimulObjective::Psa,
            ObjectiveArg::Ca => SimulObjective::Ca,
            ObjectiveArg::Snr => SimulObjective::Snr,
        }
    }
}

#[derive(Clone, Copy, ValueEnum)]
enum ModeArg {
    Tpit,
    Upit,
}

#[derive(Clone, Copy, ValueEnum)]
enum AssignmentArg {
    Default,
    Kmeans,
    Optimal,
}

impl From<AssignmentArg> for Assignment {
    fn from(a: AssignmentArg) -> Self {
        match a {
            AssignmentArg::Default => Assignment::Default,
            AssignmentArg::Kmeans => Assignment::Kmeans,
            AssignmentArg::Optimal => Assignment::Optimal,
        }
    }
}

#[derive(Clone, Copy, ValueEnum)]
enum DomainArg {
    Magnitude,
    Complex,
}

#[derive(Subcommand)]
enum Command {
    /// Generate the synthetic two-talker corpus and its manifest.
    SynthData(SynthArgs),
    /// Train the simultaneous-grouping Dense-UNet.
    TrainSimul(TrainSimulArgs),
    /// Train the sequential-grouping TCN on top of a stage-1 checkpoint.
    TrainSeq(TrainSeqArgs),
    /// Fine-tune both stages together at 1/8 learning rates.
    FinetuneJoint(JointArgs),
    /// Separate one mixture WAV into two stream WAVs.
    Separate(SeparateArgs),
    /// Score a model over a manifest split.
    Evaluate(EvaluateArgs),
    /// Verify analytic gradients against central differences.
    GradCheck,
    /// Print the resolved configuration.
    Config(ConfigArgs),
}

#[derive(Args)]
struct SynthArgs {
    /// Output directory for WAV files and manifest.tsv.
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct TrainSimulArgs {
    /// Dataset manifest.
    #[arg(long)]
    data: PathBuf,
    #[arg(long, value_enum)]
    objective: ObjectiveArg,
    #[arg(long, value_enum, default_value = "tpit")]
    mode: ModeArg,
    #[arg(long)]
    out: PathBuf,
    /// Override the configured epoch budget.
    #[arg(long)]
    epochs: Option<usize>,
}

#[derive(Args)]
struct TrainSeqArgs {
    #[arg(long)]
    data: PathBuf,
    /// Stage-1 checkpoint to freeze.
    #[arg(long)]
    stage1: PathBuf,
    /// Mask domain of the stage-1 model.
    #[arg(long, value_enum, default_value = "complex")]
    stage1_domain: DomainArg,
    #[arg(long)]
    out: PathBuf,
    #[arg(long)]
    epochs: Option<usize>,
}

#[derive(Args)]
struct JointArgs {
    #[arg(long)]
    data: PathBuf,
    #[arg(long)]
    stage1: PathBuf,
    #[arg(long)]
    stage2: PathBuf,
    #[arg(long)]
    out: PathBuf,
    /// Joint epochs (the recipe caps at 40).
    #[arg(long, default_value_t = 1)]
    epochs: usize,
}

#[derive(Args)]
struct SeparateArgs {
    /// Mixture WAV (PCM16 mono 8 kHz).
    #[arg(long)]
    mixture: PathBuf,
    #[arg(long)]
    out: PathBuf,
    #[arg(long)]
    stage1: Option<PathBuf>,
    #[arg(long, value_enum, default_value = "complex")]
    stage1_domain: DomainArg,
    #[arg(long)]
    stage2: Option<PathBuf>,
    #[arg(long, value_enum, default_value = "kmeans")]
    assignment: AssignmentArg,
    /// Use ideal complex ratio masks computed from the references.
    #[arg(long)]
    oracle_cirm: bool,
    /// Reference sources (oracle mode or optimal assignment).
    #[arg(long)]
    ref1: Option<PathBuf>,
    #[arg(long)]
    ref2: Option<PathBuf>,
    /// Also write a log-magnitude spectrogram plot.
    #[arg(long)]
    plot: bool,
}

#[derive(Args)]
struct EvaluateArgs {
    #[arg(long)]
    data: PathBuf,
    #[arg(long)]
    stage1: PathBuf,
    #[arg(long, value_enum, default_value = "complex")]
    stage1_domain: DomainArg,
    #[arg(long)]
    stage2: Option<PathBuf>,
    #[arg(long, value_enum, default_value = "kmeans")]
    assignment: AssignmentArg,
    /// Report output directory (defaults to the manifest's directory).
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct ConfigArgs {
    /// Print the resolved configuration as TOML.
    #[arg(long)]
    dump: bool,
}

fn resolve_config(cli: &Cli) -> Result<RunConfig> {
    let mut cfg = match &cli.config {
        Some(path) => RunConfig::load(path)?,
        None => RunConfig::preset(cli.preset.unwrap_or(Preset::Desk)),
    };
    if let Some(preset) = cli.preset {
        if cli.config.is_some() {
            // explicit preset beats the file's preset field but keeps file values
            cfg.preset = preset;
        }
    }
    if let Some(seed) = cli.seed {
        cfg.seed = seed;
    }
    Ok(cfg)
}

fn domain(arg: DomainArg) -> MaskDomain {
    match arg {
        DomainArg::Magnitude => MaskDomain::Magnitude,
        DomainArg::Complex => MaskDomain::Complex,
    }
}

fn load_stage1(cfg: &RunConfig, path: &Path, dom: MaskDomain) -> Result<DenseUNet<f32>> {
    let mut rng = rng_for(cfg.seed, 0x0001);
    let mut net = DenseUNet::new(
        cfg.dense_unet_config(dom),
        cfg.stft_config().bins(),
        &mut rng,
    )?;
    checkpoint::load(path, &mut net.params, AdamConfig::default())?;
    Ok(net)
}

fn load_stage2(cfg: &RunConfig, path: &Path) -> Result<Tcn<f32>> {
    let mut rng = rng_for(cfg.seed, 0x0002);
    let mut net = Tcn::new(cfg.tcn_config(), cfg.stft_config().bins(), &mut rng)?;
    checkpoint::load(path, &mut net.params, AdamConfig::default())?;
    Ok(net)
}

fn run(cli: Cli) -> Result<()> {
    let cfg = resolve_config(&cli)?;
    let stft_cfg = cfg.stft_config();
    match cli.command {
        Command::SynthData(args) => {
            let records = dataset::make_dataset(&cfg.data, cfg.seed, &args.out)?;
            println!(
                "wrote {} mixtures under {} (manifest.tsv)",
                records.len(),
                args.out.display()
            );
        }
        Command::TrainSimul(args) => {
            let objective: SimulObjective = args.objective.into();
            let mode = match args.mode {
                ModeArg::Tpit => PitMode::Tpit,
                ModeArg::Upit => PitMode::Upit,
            };
            let records = manifest::read(&args.data)?;
            let train = load_split(&args.data, &records, manifest::Split::Train)?;
            let valid = load_split(&args.data, &records, manifest::Split::Valid)?;
            let mut rng = rng_for(cfg.seed, 0x0001);
            let mut net = DenseUNet::new(
                cfg.dense_unet_config(objective.mask_domain()),
                stft_cfg.bins(),
                &mut rng,
            )?;
            let mut tcfg = cfg.train_simul.clone();
            if let Some(e) = args.epochs {
                tcfg.max_epochs = e;
            }
            let stem = format!("simul_{}_{}", objective.as_str(), mode.as_str());
            let artifacts = Artifacts::in_dir(&args.out, &stem)?;
            let outcome = train_simultaneous(
                &mut net, &stft_cfg, &train, &valid, objective, mode, &tcfg, cfg.seed,
                &artifacts,
            )?;
            println!(
                "trained {stem}: {} epochs, best validation loss {:.4} -> {}",
                outcome.epochs_run,
                outcome.best_val,
                artifacts.ckpt_path.display()
            );
            if outcome.aborted {
                return Err(Error::Numeric(
                    "training diverged; best checkpoint kept".into(),
                ));
            }
        }
        Command::TrainSeq(args) => {
            let records = manifest::read(&args.data)?;
            let train = load_split(&args.data, &records, manifest::Split::Train)?;
            let valid = load_split(&args.data, &records, manifest::Split::Valid)?;
            let stage1 = load_stage1(&cfg, &args.stage1, domain(args.stage1_domain))?;
            let train_items = prepare_seq_items(&stage1, &stft_cfg, &train)?;
            let valid_items = prepare_seq_items(&stage1, &stft_cfg, &valid)?;
            let mut rng = rng_for(cfg.seed, 0x0002);
            let mut tcn = Tcn::new(cfg.tcn_config(), stft_cfg.bins(), &mut rng)?;
            let mut tcfg = cfg.train_seq.clone();
            if let Some(e) = args.epochs {
                tcfg.max_epochs = e;
            }
            let artifacts = Artifacts::in_dir(&args.out, "seq_tcn")?;
            let outcome = train_sequential(
                &mut tcn,
                &train_items,
                &valid_items,
                &tcfg,
                cfg.seed,
                &artifacts,
            )?;
            println!(
                "trained seq_tcn: {} epochs, best validation loss {:.4} -> {}",
                outcome.epochs_run,
                outcome.best_val,
                artifacts.ckpt_path.display()
            );
            if outcome.aborted {
                return Err(Error::Numeric(
                    "training diverged; best checkpoint kept".into(),
                ));
            }
        }
        Command::FinetuneJoint(args) => {
            let records = manifest::read(&args.data)?;
            let train = load_split(&args.data, &records, manifest::Split::Train)?;
            let valid = load_split(&args.data, &records, manifest::Split::Valid)?;
            let mut stage1 = load_stage1(&cfg, &args.stage1, MaskDomain::Complex)?;
            let mut tcn = load_stage2(&cfg, &args.stage2)?;
            let epochs = args.epochs.min(40);
            let (ck1, ck2) = joint_finetune(
                &mut stage1,
                &mut tcn,
                &stft_cfg,
                &train,
                &valid,
                cfg.train_simul.lr,
                cfg.train_seq.lr,
                epochs,
                cfg.train_simul.batch_size,
                cfg.seed,
                &args.out,
            )?;
            println!("joint fine-tune done: {} / {}", ck1.display(), ck2.display());
        }
        Command::Separate(args) => {
            std::fs::create_dir_all(&args.out).map_err(|e| Error::io(&args.out, e))?;
            let mixture = wav::read_wav(&args.mixture)?;
            let stem = args
                .mixture
                .file_stem()
                .and_then(|s| s.to_str())
                .unwrap_or("mixture")
                .to_string();
            let result = if args.oracle_cirm {
                let (r1, r2) = match (&args.ref1, &args.ref2) {
                    (Some(a), Some(b)) => (wav::read_wav(a)?, wav::read_wav(b)?),
                    _ => {
                        return Err(Error::Usage(
                            "--oracle-cirm requires --ref1 and --ref2".into(),
                        ))
                    }
                };
                separate_oracle_cirm(&stft_cfg, &mixture, [&r1, &r2])?
            } else {
                let stage1_path = args.stage1.as_ref().ok_or_else(|| {
                    Error::Usage("model separation requires --stage1".into())
                })?;
                let stage1 = load_stage1(&cfg, stage1_path, domain(args.stage1_domain))?;
                let tcn = match &args.stage2 {
                    Some(p) => Some(load_stage2(&cfg, p)?),
                    None => None,
                };
                let refs = match (&args.ref1, &args.ref2) {
                    (Some(a), Some(b)) => Some((wav::read_wav(a)?, wav::read_wav(b)?)),
                    _ => None,
                };
                separate_model(
                    &stage1,
                    tcn.as_ref(),
                    &stft_cfg,
                    &mixture,
                    refs.as_ref().map(|(a, b)| [a.as_slice(), b.as_slice()]),
                    args.assignment.into(),
                    cfg.seed,
                )?
            };
            let s1_path = args.out.join(format!("{stem}.s1.wav"));
            let s2_path = args.out.join(format!("{stem}.s2.wav"));
            wav::write_wav(&s1_path, &result.stream1)?;
            wav::write_wav(&s2_path, &result.stream2)?;
            if args.plot {
                let png = args.out.join(format!("{stem}.png"));
                plot::spectrogram_png(
                    &png,
                    &result.mixture_spec,
                    &result.organized.0,
                    &result.organized.1,
                )?;
            }
            println!("wrote {} and {}", s1_path.display(), s2_path.display());
        }
        Command::Evaluate(args) => {
            let records = manifest::read(&args.data)?;
            let stage1 = load_stage1(&cfg, &args.stage1, domain(args.stage1_domain))?;
            let tcn = match &args.stage2 {
                Some(p) => Some(load_stage2(&cfg, p)?),
                None => None,
            };
            let assignment: Assignment = args.assignment.into();
            let (rows, summary) = evaluate_model(
                &stage1,
                tcn.as_ref(),
                &stft_cfg,
                &args.data,
                &records,
                manifest::Split::Test,
                assignment,
                cfg.seed,
            )?;
            let out_dir = args.out.unwrap_or_else(|| {
                args.data
                    .parent()
                    .map(|p| p.to_path_buf())
                    .unwrap_or_else(|| PathBuf::from("."))
            });
            std::fs::create_dir_all(&out_dir).map_err(|e| Error::io(&out_dir, e))?;
            let report = out_dir.join(format!("report_{}.jsonl", assignment.as_str()));
            write_report(&report, &rows, &summary)?;
            print!("{}", render_summary(&summary));
            println!("report: {}", report.display());
        }
        Command::GradCheck => {
            let rows = gradcheck::run_suite()?;
            let mut ok = true;
            for row in &rows {
                let pass = row.max_rel_error < row.tolerance;
                ok &= pass;
                println!(
                    "{:32} max-rel-err {:>12.3e}  tol {:>8.0e}  {}",
                    row.name,
                    row.max_rel_error,
                    row.tolerance,
                    if pass { "ok" } else { "FAIL" }
                );
            }
            if !ok {
                return Err(Error::Numeric("gradient check failed".into()));
            }
        }
        Command::Config(args) => {
            if args.dump {
                print!("{}", cfg.dump());
            } else {
                println!("preset: {:?} (use --dump for the full TOML)", cfg.preset);
            }
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    if let Ok(threads) = std::env::var("DCASA_THREADS") {
        if let Ok(n) = threads.parse::<usize>() {
            let _ = rayon::ThreadPoolBuilder::new()
                .num_threads(n.max(1))
                .build_global();
        }
    }
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
