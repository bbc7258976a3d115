use std::io::Write;
use std::path::PathBuf;
use std::process::ExitCode;

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand};
use sca_cli::commands;
use sca_cli::config::ExperimentConfig;
use sca_core::io::{export_raw, import_raw, read_sctr_file, write_sctr_file};
use sca_core::{Block, Trigger};

/// Simulate, attack and analyse last-round AES power traces.
#[derive(Parser)]
#[command(name = "sca", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Generate a synthetic campaign and write it as an SCTR file.
    Simulate(SimulateArgs),
    /// CPA on one state byte.
    Attack(AttackArgs),
    /// CPA on all sixteen bytes and inversion of the key schedule.
    Recover(RecoverArgs),
    /// Class means per HD value and line fits for every guess.
    FitHd(FitHdArgs),
    /// Disclosure and wrong-horse counts over augmentation offsets and bits.
    Sweep(SweepArgs),
    /// Convert a raw f32 dump plus metadata CSV into an SCTR file.
    Convert(ConvertArgs),
    /// Export an SCTR file as a raw f32 dump plus metadata CSV.
    Export(ExportArgs),
}

/// Campaign parameters; each flag overrides the matching config key.
#[derive(Args, Clone, Default)]
struct CampaignArgs {
    /// TOML experiment config.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Cipher key as 32 hex digits.
    #[arg(long)]
    key: Option<Block>,
    /// Number of traces.
    #[arg(long = "n")]
    n_traces: Option<usize>,
    #[arg(long)]
    sigma: Option<f64>,
    /// Leakage weight of every register bit.
    #[arg(long)]
    weight: Option<f64>,
    #[arg(long)]
    baseline: Option<f64>,
    #[arg(long)]
    samples_per_trace: Option<usize>,
    #[arg(long)]
    poi: Option<usize>,
    #[arg(long)]
    seed: Option<u64>,
    /// State byte to attack.
    #[arg(long)]
    byte: Option<usize>,
    #[arg(long)]
    stride: Option<usize>,
    /// Byte holding the augmented bit (enables augmentation).
    #[arg(long)]
    augment_byte: Option<usize>,
    /// Bit within the byte, 0 = least significant (enables augmentation).
    #[arg(long)]
    augment_bit: Option<usize>,
    /// Offset subtracted when the augmentation fires.
    #[arg(long, conflicts_with_all = ["n_ro", "alpha"])]
    offset: Option<f64>,
    /// Ring oscillators in the bank (with --alpha).
    #[arg(long, requires = "alpha")]
    n_ro: Option<u32>,
    /// Leakage per fully active ring oscillator.
    #[arg(long, requires = "n_ro")]
    alpha: Option<f64>,
    /// Fraction of the cycle the bank runs.
    #[arg(long)]
    pulse: Option<f64>,
    /// on-static or on-toggle.
    #[arg(long)]
    trigger: Option<Trigger>,
    /// Ignore any augmentation from the config.
    #[arg(long, conflicts_with_all = ["augment_byte", "augment_bit", "offset", "n_ro"])]
    no_augment: bool,
}

impl CampaignArgs {
    fn resolve(&self) -> Result<ExperimentConfig> {
        let mut cfg = ExperimentConfig::load_or_default(self.config.as_deref())?;
        macro_rules! set {
            ($($flag:ident => $field:ident),*) => {
                $(if let Some(v) = self.$flag { cfg.$field = v; })*
            };
        }
        set!(key => key, n_traces => n_traces, sigma => noise_sigma, weight => bit_weight,
             baseline => baseline, samples_per_trace => samples_per_trace, poi => poi_index,
             seed => seed, byte => byte_index, stride => checkpoint_stride);

        if self.no_augment {
            cfg.augmentation = None;
        }
        let touches_aug = self.augment_byte.is_some()
            || self.augment_bit.is_some()
            || self.offset.is_some()
            || self.n_ro.is_some()
            || self.pulse.is_some()
            || self.trigger.is_some();
        if touches_aug {
            let mut aug = cfg.augmentation.take().unwrap_or_default();
            if let Some(b) = self.augment_byte {
                aug.byte = b;
            }
            if let Some(b) = self.augment_bit {
                aug.bit = b;
            }
            if let Some(o) = self.offset {
                aug.offset = Some(o);
                aug.n_ro = None;
                aug.alpha = None;
            }
            if let (Some(n), Some(a)) = (self.n_ro, self.alpha) {
                aug.offset = None;
                aug.n_ro = Some(n);
                aug.alpha = Some(a);
            }
            if let Some(p) = self.pulse {
                aug.pulse_fraction = p;
            }
            if let Some(t) = self.trigger {
                aug.trigger = t;
            }
            cfg.augmentation = Some(aug);
        }
        cfg.validate()?;
        Ok(cfg)
    }
}

#[derive(Args)]
struct SimulateArgs {
    #[command(flatten)]
    campaign: CampaignArgs,
    /// Output SCTR path (default: output.traces from the config).
    #[arg(short, long)]
    output: Option<PathBuf>,
    /// Omit the true key from the file.
    #[arg(long)]
    no_key: bool,
}

#[derive(Args)]
struct AttackArgs {
    /// SCTR trace file.
    input: PathBuf,
    #[arg(long, default_value_t = 0)]
    byte: usize,
    #[arg(long, default_value_t = sca_core::cpa::DEFAULT_CHECKPOINT_STRIDE)]
    stride: usize,
    /// JSON report path.
    #[arg(long)]
    report: Option<PathBuf>,
    /// Correlation evolution CSV path.
    #[arg(long)]
    evolution: Option<PathBuf>,
}

#[derive(Args)]
struct RecoverArgs {
    input: PathBuf,
    #[arg(long, default_value_t = sca_core::cpa::DEFAULT_CHECKPOINT_STRIDE)]
    stride: usize,
    #[arg(long)]
    report: Option<PathBuf>,
}

#[derive(Args)]
struct FitHdArgs {
    input: PathBuf,
    #[arg(long, default_value_t = 0)]
    byte: usize,
    /// Sample index to group (the point of interest).
    #[arg(long, default_value_t = 0)]
    sample: usize,
    #[arg(long)]
    classes: Option<PathBuf>,
    #[arg(long)]
    fits: Option<PathBuf>,
}

#[derive(Args)]
struct SweepArgs {
    #[command(flatten)]
    campaign: CampaignArgs,
    /// Comma-separated offsets.
    #[arg(long, value_delimiter = ',', default_values_t = [0.0, 1.0, 2.0, 4.0, 8.0])]
    offsets: Vec<f64>,
    /// Comma-separated bit indices within the augmented byte.
    #[arg(long, value_delimiter = ',', default_values_t = [2usize])]
    bits: Vec<usize>,
    /// CSV output (default: stdout).
    #[arg(short, long)]
    output: Option<PathBuf>,
}

#[derive(Args)]
struct ConvertArgs {
    /// Header-less little-endian f32 samples.
    #[arg(long)]
    raw: PathBuf,
    /// CSV with plaintext_hex and ciphertext_hex columns.
    #[arg(long)]
    meta: PathBuf,
    #[arg(long)]
    samples_per_trace: usize,
    /// Attach this key after checking every ciphertext against it.
    #[arg(long)]
    key: Option<Block>,
    #[arg(short, long)]
    output: PathBuf,
}

#[derive(Args)]
struct ExportArgs {
    input: PathBuf,
    #[arg(long)]
    raw: PathBuf,
    #[arg(long)]
    meta: PathBuf,
}

fn print_json<T: serde::Serialize>(value: &T) -> Result<()> {
    print_stdout(&(serde_json::to_string_pretty(value)? + "\n"))
}

/// Writes to stdout, treating a closed pipe (`sca ... | head`) as success.
fn print_stdout(text: &str) -> Result<()> {
    match std::io::stdout().lock().write_all(text.as_bytes()) {
        Err(e) if e.kind() == std::io::ErrorKind::BrokenPipe => Ok(()),
        other => Ok(other?),
    }
}

fn run(cli: Cli) -> Result<()> {
    match cli.command {
        Command::Simulate(args) => {
            let cfg = args.campaign.resolve()?;
            let Some(output) = args.output.clone().or_else(|| cfg.output.traces.clone()) else {
                bail!("no output path: pass -o or set output.traces in the config");
            };
            let mut traces = commands::simulate(&cfg)?;
            if args.no_key {
                traces = traces.without_true_key();
            }
            write_sctr_file(&traces, &output)?;
            print_stdout(&cfg.resolved()?.to_toml()?)?;
        }
        Command::Attack(args) => {
            let traces = read_sctr_file(&args.input)?;
            let (report, evolution) =
                commands::attack(&traces, &args.input, args.byte, args.stride)?;
            if let Some(path) = &args.evolution {
                commands::write_evolution(&evolution, path)?;
            }
            match &args.report {
                Some(path) => commands::write_json(&report, path)?,
                None => print_json(&report)?,
            }
            eprintln!(
                "byte {}: best guess {:02x}, disclosure {}",
                report.byte_index,
                report.best_guess,
                report
                    .disclosure
                    .map_or_else(|| "none".to_string(), |d| d.to_string())
            );
        }
        Command::Recover(args) => {
            let traces = read_sctr_file(&args.input)?;
            let report = commands::recover(&traces, &args.input, args.stride)?;
            match &args.report {
                Some(path) => commands::write_json(&report, path)?,
                None => print_json(&report)?,
            }
        }
        Command::FitHd(args) => {
            let traces = read_sctr_file(&args.input)?;
            let summary = commands::fit_hd(
                &traces,
                args.byte,
                args.sample,
                args.classes.as_deref(),
                args.fits.as_deref(),
            )?;
            print_json(&summary)?;
        }
        Command::Sweep(args) => {
            let cfg = args.campaign.resolve()?;
            let rows = commands::sweep(&cfg, &args.offsets, &args.bits)?;
            match &args.output {
                Some(path) => {
                    let file = std::fs::File::create(path)
                        .with_context(|| format!("creating {}", path.display()))?;
                    commands::write_sweep_csv(&rows, file)?;
                }
                None => commands::write_sweep_csv(&rows, std::io::stdout().lock())?,
            }
        }
        Command::Convert(args) => {
            let mut traces = import_raw(&args.raw, &args.meta, args.samples_per_trace)?;
            if let Some(key) = args.key {
                traces = traces.with_true_key(key)?;
            }
            write_sctr_file(&traces, &args.output)?;
            eprintln!("{} traces -> {}", traces.n_traces(), args.output.display());
        }
        Command::Export(args) => {
            let traces = read_sctr_file(&args.input)?;
            export_raw(&traces, &args.raw, &args.meta)?;
        }
    }
    Ok(())
}

fn error_kind(err: &anyhow::Error) -> &'static str {
    use sca_core::Error as E;
    for cause in err.chain() {
        if let Some(e) = cause.downcast_ref::<E>() {
            return match e {
                E::InvalidArgument(_) => "invalid_argument",
                E::InsufficientData(_) => "insufficient_data",
                E::Format(_) => "format",
                E::Import { .. } => "import",
                E::Io { .. } | E::Stream(_) => "io",
                E::Csv(_) => "csv",
            };
        }
        if cause.downcast_ref::<toml::de::Error>().is_some() {
            return "config";
        }
        if cause.downcast_ref::<std::io::Error>().is_some() {
            return "io";
        }
    }
    "error"
}

/// The error chain joined with ": ", skipping causes whose text the previous
/// link already printed.
fn error_message(err: &anyhow::Error) -> String {
    let mut parts: Vec<String> = Vec::new();
    for cause in err.chain() {
        let text = cause.to_string();
        if parts.last().is_some_and(|prev| prev.contains(&text)) {
            continue;
        }
        parts.push(text);
    }
    parts.join(": ")
}

fn report_error(kind: &str, message: &str) {
    let body = serde_json::json!({ "error": { "kind": kind, "message": message } });
    eprintln!("{body}");
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) if !e.use_stderr() => {
            // --help and --version
            let _ = e.print();
            return ExitCode::SUCCESS;
        }
        Err(e) => {
            report_error("usage", e.render().to_string().trim_end());
            return ExitCode::FAILURE;
        }
    };
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(err) => {
            report_error(error_kind(&err), &error_message(&err));
            ExitCode::FAILURE
        }
    }
}
