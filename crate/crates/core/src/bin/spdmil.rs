use std::io::Write;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use serde::de::DeserializeOwned;

use spdmil::harness::manifest::{read_truth, write_truth};
use spdmil::harness::report::{read_report, render};
use spdmil::harness::{emit_report, load_dataset, run_experiment, ExperimentConfig, Format, Manifest, ManifestEntry};
use spdmil::kernel::KernelKind;
use spdmil::segmentation::ThresholdMode;
use spdmil::signal::BandSpec;
use spdmil::svm::cv::TuningProtocol;
use spdmil::svm::methods::Method;
use spdmil::synth::{CohortConfig, TruthFile};
use spdmil::{Error, Result};

#[derive(Parser)]
#[command(name = "spdmil", version, about = "Multi-instance classification of multichannel recordings on the SPD manifold")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Generate a synthetic cohort: one CSV per subject, manifest.json, truth.json and cohort.json.
    Synth(SynthArgs),
    /// Evaluate an experiment configuration on a manifest and write the report.
    Run(RunArgs),
    /// Re-render a saved JSON report.
    Report(ReportArgs),
}

#[derive(Args)]
struct SynthArgs {
    /// Output directory (created if missing).
    #[arg(long)]
    out: PathBuf,
    /// Cohort configuration JSON; flags below override its fields.
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    positives: Option<usize>,
    #[arg(long)]
    negatives: Option<usize>,
    #[arg(long)]
    channels: Option<usize>,
    #[arg(long)]
    sample_rate: Option<f64>,
}

#[derive(Args)]
struct RunArgs {
    #[arg(long)]
    manifest: PathBuf,
    /// Ground-truth sidecar; enables the segmentation summary.
    #[arg(long)]
    truth: Option<PathBuf>,
    /// Experiment configuration JSON; flags below override its fields.
    #[arg(long)]
    config: Option<PathBuf>,
    /// JSON report path.
    #[arg(long, default_value = "report.json")]
    out: PathBuf,
    /// Also write the accuracy grid as CSV.
    #[arg(long)]
    csv: Option<PathBuf>,
    /// Bands as standard names (theta, alpha, beta, gamma, 3-50Hz) or NAME:LOW:HIGH.
    #[arg(long, value_delimiter = ',', value_parser = parse_band)]
    bands: Option<Vec<BandSpec>>,
    /// mi-adaptive, mi-fixed, mean-cov, batch-cov.
    #[arg(long, value_delimiter = ',', value_parser = parse_kebab::<Method>)]
    methods: Option<Vec<Method>>,
    /// le-gaussian, ai-gaussian, isometric.
    #[arg(long, value_parser = parse_kebab::<KernelKind>)]
    kernel: Option<KernelKind>,
    /// Exponent p of the set kernel.
    #[arg(long)]
    power: Option<u32>,
    #[arg(long, value_delimiter = ',')]
    c_values: Option<Vec<f64>>,
    #[arg(long, value_delimiter = ',')]
    sigma_values: Option<Vec<f64>>,
    /// nested or global.
    #[arg(long, value_parser = parse_kebab::<TuningProtocol>)]
    protocol: Option<TuningProtocol>,
    /// Fixed window length in seconds.
    #[arg(long)]
    window: Option<f64>,
    #[arg(long)]
    overlap: Option<f64>,
    /// Elementary window of the adaptive segmentation, seconds.
    #[arg(long)]
    elementary_window: Option<f64>,
    /// Robust threshold multiplier k.
    #[arg(long, conflicts_with = "threshold")]
    threshold_k: Option<f64>,
    /// Absolute distance threshold.
    #[arg(long)]
    threshold: Option<f64>,
    #[arg(long)]
    filter_order: Option<usize>,
    /// SNR levels in dB for the noise grid.
    #[arg(long, value_delimiter = ',', allow_negative_numbers = true)]
    noise_levels: Option<Vec<f64>>,
    #[arg(long, value_delimiter = ',', value_parser = parse_kebab::<KernelKind>)]
    kernel_comparison: Option<Vec<KernelKind>>,
    #[arg(long)]
    seed: Option<u64>,
}

#[derive(Args)]
struct ReportArgs {
    /// JSON report written by `run`.
    input: PathBuf,
    /// json or csv.
    #[arg(long, default_value = "csv", value_parser = parse_kebab::<Format>)]
    format: Format,
    /// Output path; standard output when omitted.
    #[arg(long)]
    out: Option<PathBuf>,
}

fn parse_kebab<T: DeserializeOwned>(s: &str) -> std::result::Result<T, String> {
    serde_json::from_value(serde_json::Value::String(s.to_string())).map_err(|e| e.to_string())
}

fn parse_band(s: &str) -> std::result::Result<BandSpec, String> {
    if let Some(b) = BandSpec::standard_bands().into_iter().find(|b| b.name.eq_ignore_ascii_case(s)) {
        return Ok(b);
    }
    let parts: Vec<&str> = s.split(':').collect();
    match parts.as_slice() {
        [name, low, high] => {
            let low: f64 = low.parse().map_err(|_| format!("bad low edge in {s:?}"))?;
            let high: f64 = high.parse().map_err(|_| format!("bad high edge in {s:?}"))?;
            Ok(BandSpec::new(*name, low, high))
        }
        _ => Err(format!("unknown band {s:?}: use a standard name or NAME:LOW:HIGH")),
    }
}

fn read_json<T: DeserializeOwned>(path: &Path, what: &str) -> Result<T> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    serde_json::from_str(&text).map_err(|e| Error::Config(format!("{}:{}: invalid {what}: {e}", path.display(), e.line())))
}

fn write_json<T: serde::Serialize>(path: &Path, value: &T) -> Result<()> {
    let mut text = serde_json::to_string_pretty(value).map_err(|e| Error::Data(e.to_string()))?;
    text.push('\n');
    std::fs::write(path, text).map_err(|e| Error::io(path, e))
}

fn synth(args: SynthArgs) -> Result<()> {
    let mut cfg: CohortConfig = match &args.config {
        Some(p) => read_json(p, "cohort config")?,
        None => CohortConfig::default(),
    };
    if let Some(v) = args.seed {
        cfg.seed = v;
    }
    if let Some(v) = args.positives {
        cfg.n_positive = v;
    }
    if let Some(v) = args.negatives {
        cfg.n_negative = v;
    }
    if let Some(v) = args.channels {
        cfg.channels = v;
    }
    if let Some(v) = args.sample_rate {
        cfg.sample_rate = v;
    }
    let subjects = cfg.generate()?;
    std::fs::create_dir_all(&args.out).map_err(|e| Error::io(&args.out, e))?;
    let mut entries = Vec::with_capacity(subjects.len());
    for s in &subjects {
        let file = format!("{}.csv", s.recording.subject_id);
        s.recording.write_csv_file(&args.out.join(&file))?;
        entries.push(ManifestEntry {
            subject_id: s.recording.subject_id.clone(),
            label: s.recording.label,
            recording_path: PathBuf::from(file),
            sample_rate: s.recording.sample_rate,
        });
    }
    let manifest = Manifest {
        dataset_name: format!("synthetic-seed-{}", cfg.seed),
        channel_exclusions: Vec::new(),
        subjects: entries,
    };
    manifest.write(&args.out.join("manifest.json"))?;
    write_truth(
        &args.out.join("truth.json"),
        &TruthFile {
            subjects: subjects.iter().map(|s| s.truth.clone()).collect(),
        },
    )?;
    write_json(&args.out.join("cohort.json"), &cfg)?;
    eprintln!("wrote {} subjects to {}", subjects.len(), args.out.display());
    Ok(())
}

fn experiment_config(args: &RunArgs) -> Result<ExperimentConfig> {
    let mut cfg = match &args.config {
        Some(p) => ExperimentConfig::from_path(p)?,
        None => ExperimentConfig::default(),
    };
    if let Some(v) = &args.bands {
        cfg.bands = v.clone();
    }
    if let Some(v) = &args.methods {
        cfg.methods = v.clone();
    }
    if let Some(v) = args.kernel {
        cfg.kernel.kind = v;
    }
    if let Some(v) = args.power {
        cfg.kernel.power = v;
    }
    if let Some(v) = &args.c_values {
        cfg.grid.c_values = v.clone();
    }
    if let Some(v) = &args.sigma_values {
        cfg.grid.sigma_values = v.clone();
    }
    if let Some(v) = args.protocol {
        cfg.protocol = v;
    }
    if let Some(v) = args.window {
        cfg.representation.window = v;
    }
    if let Some(v) = args.overlap {
        cfg.representation.overlap = v;
    }
    if let Some(v) = args.elementary_window {
        cfg.representation.segmentation.elementary_window = v;
    }
    if let Some(k) = args.threshold_k {
        cfg.representation.segmentation.threshold = ThresholdMode::Robust { k };
    }
    if let Some(th) = args.threshold {
        cfg.representation.segmentation.threshold = ThresholdMode::Absolute { th };
    }
    if let Some(v) = args.filter_order {
        cfg.filter_order = v;
    }
    if let Some(v) = &args.noise_levels {
        cfg.noise_levels = v.clone();
    }
    if let Some(v) = &args.kernel_comparison {
        cfg.kernel_comparison = v.clone();
    }
    if let Some(v) = args.seed {
        cfg.seed = v;
    }
    cfg.validate()?;
    Ok(cfg)
}

fn run(args: RunArgs) -> Result<()> {
    let cfg = experiment_config(&args)?;
    let data = load_dataset(&args.manifest)?;
    let truth = args.truth.as_deref().map(read_truth).transpose()?;
    let mut report = run_experiment(&data.recordings, truth.as_ref(), &cfg)?;
    report.provenance.dataset = Some(data.manifest.dataset_name.clone());
    emit_report(&report, &args.out, Format::Json)?;
    if let Some(csv) = &args.csv {
        emit_report(&report, csv, Format::Csv)?;
    }
    eprint!("{}", render(&report, Format::Csv)?);
    Ok(())
}

fn report(args: ReportArgs) -> Result<()> {
    let report = read_report(&args.input)?;
    match &args.out {
        Some(path) => emit_report(&report, path, args.format),
        None => {
            let text = render(&report, args.format)?;
            std::io::stdout()
                .write_all(text.as_bytes())
                .map_err(|e| Error::io(Path::new("<stdout>"), e))
        }
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let outcome = match cli.command {
        Command::Synth(a) => synth(a),
        Command::Run(a) => run(a),
        Command::Report(a) => report(a),
    };
    match outcome {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
