//! `msep`: synthetic cohorts, cross-validated experiments, model training
//! and local explanations.

use std::collections::BTreeSet;
use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{anyhow, bail, Context, Result};
use clap::{Args, Parser, Subcommand};
use rand::Rng;
use serde_json::json;

use msep_core::experiment::{design_matrix, json_digest, prepare_cohort, sha256_hex, train_model};
use msep_core::explain::format_table;
use msep_core::{
    generate_cohort, local_surrogate, rank_features, run_experiment, seed, CascadeModel,
    Cohort, ErrorKind, FeatureGroup, FeatureSchema, FeatureSet, LeakageControl, RunConfig, SignalMode,
    SubsetMode, SynthConfig, TrainParams,
};

const SEED_ENV: &str = "MULTISUBSET_SEED";
const RUN_CONFIG_FILE: &str = "run_config.json";

#[derive(Parser)]
#[command(name = "msep", version, about = "Multi-subset early onset prediction")]
struct Cli {
    /// Worker threads; results are identical for any value.
    #[arg(long, global = true)]
    threads: Option<usize>,

    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Generate a seeded synthetic cohort (cohort.csv + schema.json).
    Synth(SynthArgs),
    /// Cross-validate a configuration and write report.json + roc.csv.
    Run(RunArgs),
    /// Fit a cascade on the whole cohort and save it to a directory.
    Train(TrainArgs),
    /// Explain one prediction of a saved cascade, or rank its features.
    Explain(ExplainArgs),
}

#[derive(Args)]
struct SynthArgs {
    #[arg(long)]
    out: PathBuf,
    #[arg(long)]
    patients: Option<usize>,
    #[arg(long)]
    event_rate: Option<f64>,
    /// progressive or sudden
    #[arg(long)]
    mode: Option<SignalMode>,
    #[arg(long)]
    ramp_hours: Option<usize>,
    #[arg(long)]
    signal_strength: Option<f64>,
    /// Inclusive stay length range in hours, e.g. 36-84.
    #[arg(long, value_parser = parse_range::<usize>)]
    stay_hours: Option<(usize, usize)>,
    /// Inclusive onset day range, e.g. 2-4.
    #[arg(long, value_parser = parse_range::<u32>)]
    onset_days: Option<(u32, u32)>,
    #[arg(long, env = SEED_ENV, default_value_t = 0)]
    seed: u64,
}

#[derive(Args)]
struct DataArgs {
    /// Hourly cohort CSV: patient_id,hour,label,<features...>
    #[arg(long)]
    input: PathBuf,
    /// JSON list of {name, group, trendable}.
    #[arg(long)]
    schema: PathBuf,
}

#[derive(Args)]
struct ExperimentArgs {
    #[arg(long, default_value_t = 6, value_parser = parse_subsets)]
    subsets: u32,
    /// baseline, delta, stats or delta+stats
    #[arg(long, default_value = "delta+stats")]
    features: FeatureSet,
    #[arg(long, default_value = "g1,g2,g3,g4", value_delimiter = ',')]
    groups: Vec<FeatureGroup>,
    /// Trailing window length for the statistics (window + 1 samples).
    #[arg(long, default_value_t = 6)]
    window: usize,
    #[arg(long, default_value_t = 6)]
    horizon: usize,
    #[arg(long, default_value_t = 2)]
    start_day: u32,
    #[arg(long, default_value_t = 14)]
    end_day: u32,
    #[arg(long, default_value_t = 5)]
    folds: usize,
    #[arg(long, default_value_t = 5)]
    inner_folds: usize,
    #[arg(long, default_value_t = 0.5)]
    threshold: f64,
    #[arg(long, default_value_t = TrainParams::default().n_rounds)]
    rounds: usize,
    #[arg(long, default_value_t = TrainParams::default().max_depth)]
    depth: usize,
    #[arg(long, default_value_t = TrainParams::default().learning_rate)]
    eta: f64,
    #[arg(long, default_value_t = TrainParams::default().reg_lambda)]
    lambda: f64,
    #[arg(long, default_value_t = TrainParams::default().gamma)]
    gamma: f64,
    #[arg(long, default_value_t = TrainParams::default().min_child_weight)]
    min_child_weight: f64,
    #[arg(long, default_value_t = 0.8)]
    oversample_ratio: f64,
    /// Keep all majority rows instead of undersampling to parity.
    #[arg(long)]
    no_undersample: bool,
    /// oof or insample
    #[arg(long, default_value = "oof")]
    leakage: LeakageControl,
    #[arg(long, env = SEED_ENV, default_value_t = 0)]
    seed: u64,
}

impl ExperimentArgs {
    fn config(&self) -> Result<RunConfig> {
        let cfg = RunConfig {
            subsets: SubsetMode::from_count(self.subsets)?,
            features: self.features,
            groups: self.groups.iter().copied().collect::<BTreeSet<_>>(),
            window: self.window,
            target_horizon: self.horizon,
            start_day: self.start_day,
            end_day: self.end_day,
            folds: self.folds,
            inner_folds: self.inner_folds,
            threshold: self.threshold,
            params: TrainParams {
                n_rounds: self.rounds,
                max_depth: self.depth,
                learning_rate: self.eta,
                reg_lambda: self.lambda,
                gamma: self.gamma,
                min_child_weight: self.min_child_weight,
                seed: self.seed,
                ..TrainParams::default()
            },
            oversample_ratio: self.oversample_ratio,
            undersample_to_parity: !self.no_undersample,
            leakage_control: self.leakage,
            seed: self.seed,
        };
        cfg.validate()?;
        Ok(cfg)
    }
}

#[derive(Args)]
struct RunArgs {
    #[command(flatten)]
    data: DataArgs,
    #[command(flatten)]
    experiment: ExperimentArgs,
    /// Output directory for report.json and roc.csv.
    #[arg(long)]
    out: PathBuf,
    /// Also write the target-horizon design matrix (base features) here.
    #[arg(long)]
    dump_features: Option<PathBuf>,
}

#[derive(Args)]
struct TrainArgs {
    #[command(flatten)]
    data: DataArgs,
    #[command(flatten)]
    experiment: ExperimentArgs,
    #[arg(long)]
    model_dir: PathBuf,
}

#[derive(Args)]
struct ExplainArgs {
    #[arg(long)]
    model_dir: PathBuf,
    #[command(flatten)]
    data: DataArgs,
    /// Patient to explain; a seeded random row is used when omitted.
    #[arg(long)]
    patient: Option<String>,
    /// Hour of the row to explain; defaults to the patient's last hour.
    #[arg(long, requires = "patient")]
    hour: Option<i64>,
    #[arg(long, default_value_t = 5)]
    top_k: usize,
    #[arg(long, default_value_t = 1000)]
    perturbations: usize,
    /// Rank target-model features by total split gain instead.
    #[arg(long)]
    global: bool,
    /// Write the result as JSON to this file.
    #[arg(long)]
    out: Option<PathBuf>,
    #[arg(long, env = SEED_ENV, default_value_t = 0)]
    seed: u64,
}

fn parse_range<T: std::str::FromStr>(s: &str) -> std::result::Result<(T, T), String> {
    let (a, b) = s.split_once('-').ok_or_else(|| format!("expected LO-HI, got `{s}`"))?;
    let parse = |x: &str| x.trim().parse::<T>().map_err(|_| format!("bad bound `{x}`"));
    Ok((parse(a)?, parse(b)?))
}

fn parse_subsets(s: &str) -> std::result::Result<u32, String> {
    match s {
        "1" => Ok(1),
        "2" => Ok(2),
        "6" => Ok(6),
        _ => Err(format!("subsets must be 1, 2 or 6, got `{s}`")),
    }
}

fn write(path: &Path, contents: impl AsRef<[u8]>) -> Result<()> {
    fs::write(path, contents).with_context(|| format!("writing {}", path.display()))
}

fn create_dir(dir: &Path) -> Result<()> {
    fs::create_dir_all(dir).with_context(|| format!("creating {}", dir.display()))
}

/// Reads the cohort and returns it with the SHA-256 of the CSV bytes.
fn load_cohort(data: &DataArgs) -> Result<(Cohort, String)> {
    let schema = FeatureSchema::load_json(&data.schema)?;
    let bytes = fs::read(&data.input).map_err(|e| msep_core::Error::io(&data.input, e))?;
    let digest = sha256_hex(&bytes);
    let cohort = msep_core::cohort::read_csv(bytes.as_slice(), &schema)?;
    Ok((cohort, digest))
}

fn cmd_synth(args: SynthArgs) -> Result<()> {
    let d = SynthConfig::default();
    let cfg = SynthConfig {
        n_patients: args.patients.unwrap_or(d.n_patients),
        event_rate: args.event_rate.unwrap_or(d.event_rate),
        stay_hours: args.stay_hours.unwrap_or(d.stay_hours),
        onset_day_range: args.onset_days.unwrap_or(d.onset_day_range),
        signal_mode: args.mode.unwrap_or(d.signal_mode),
        pre_onset_ramp_hours: args.ramp_hours.unwrap_or(d.pre_onset_ramp_hours),
        signal_strength: args.signal_strength.unwrap_or(d.signal_strength),
        seed: args.seed,
        ..d
    };
    let cohort = generate_cohort(&cfg)?;
    create_dir(&args.out)?;
    cohort.save_csv(args.out.join("cohort.csv"))?;
    cohort.schema.save_json(args.out.join("schema.json"))?;
    let echo = serde_json::to_value(&cfg)?;
    let meta = json!({ "config": echo, "config_hash": json_digest(&echo)?, "seed": cfg.seed });
    write(&args.out.join("synth_config.json"), serde_json::to_string_pretty(&meta)? + "\n")?;
    let events = cohort.patients.iter().filter(|p| p.labels.first_onset().is_some()).count();
    println!(
        "{} patients ({} with onset), {} rows -> {}",
        cohort.patients.len(),
        events,
        cohort.total_rows(),
        args.out.display()
    );
    Ok(())
}

fn cmd_run(args: RunArgs) -> Result<()> {
    let cfg = args.experiment.config()?;
    let (raw, input_sha256) = load_cohort(&args.data)?;
    if let Some(path) = &args.dump_features {
        let (cohort, _) = prepare_cohort(&raw, &cfg)?;
        design_matrix(&cohort, &cfg.features.window(cfg.window), cfg.target_horizon)?.save_csv(path)?;
    }
    let mut report = run_experiment(&raw, &cfg)?;
    report.config["input_sha256"] = json!(input_sha256);
    report.config_hash = json_digest(&report.config)?;

    create_dir(&args.out)?;
    write(&args.out.join("report.json"), report.to_json()?)?;
    let mut roc = Vec::new();
    report.write_roc_csv(&mut roc)?;
    write(&args.out.join("roc.csv"), roc)?;
    println!(
        "subsets={} features={} mean AUROC {:.4} (sensitivity {:.4}, specificity {:.4}) over {} folds",
        cfg.subsets.count(),
        cfg.features,
        report.mean_auroc,
        report.mean_sensitivity,
        report.mean_specificity,
        report.folds
    );
    Ok(())
}

fn cmd_train(args: TrainArgs) -> Result<()> {
    let cfg = args.experiment.config()?;
    let (raw, input_sha256) = load_cohort(&args.data)?;
    let (model, summary) = train_model(&raw, &cfg)?;
    model.save_dir(&args.model_dir)?;
    let mut echo = serde_json::to_value(&cfg)?;
    echo["input_sha256"] = json!(input_sha256);
    let meta = json!({ "config": echo, "config_hash": json_digest(&echo)?, "seed": cfg.seed });
    write(&args.model_dir.join(RUN_CONFIG_FILE), serde_json::to_string_pretty(&meta)? + "\n")?;
    println!(
        "trained {} intermediate model(s) and the {}h target on {} patients, {} rows -> {}",
        model.intermediates.len(),
        cfg.target_horizon,
        summary.patients_out,
        summary.rows_out,
        args.model_dir.display()
    );
    Ok(())
}

fn cmd_explain(args: ExplainArgs) -> Result<()> {
    let model = CascadeModel::load_dir(&args.model_dir)?;
    if args.global {
        let ranking = rank_features(&model, args.top_k);
        print!("{}", format_table(("feature", "gain"), &ranking));
        if let Some(out) = &args.out {
            let body = json!({ "model_dir": args.model_dir, "ranking": ranking });
            write(out, serde_json::to_string_pretty(&body)? + "\n")?;
        }
        return Ok(());
    }

    let path = args.model_dir.join(RUN_CONFIG_FILE);
    let text = fs::read_to_string(&path).map_err(|e| msep_core::Error::io(&path, e))?;
    let meta: serde_json::Value = serde_json::from_str(&text).map_err(msep_core::Error::from)?;
    let cfg: RunConfig = serde_json::from_value(meta["config"].clone()).map_err(msep_core::Error::from)?;

    let (raw, _) = load_cohort(&args.data)?;
    let (cohort, _) = prepare_cohort(&raw, &cfg)?;
    let frame = model.augment(&design_matrix(&cohort, &model.spec.window, 0)?)?;
    if frame.n_rows() == 0 {
        bail!("no rows to explain");
    }
    let row = match &args.patient {
        Some(id) => {
            let mut rows = frame.rows.iter().enumerate().filter(|(_, k)| &*k.patient_id == id.as_str());
            match args.hour {
                Some(h) => rows.find(|(_, k)| k.hour == h).map(|(i, _)| i),
                None => rows.last().map(|(i, _)| i),
            }
            .ok_or_else(|| anyhow!("no row for patient `{id}`{}", args.hour.map_or(String::new(), |h| format!(" at hour {h}"))))?
        }
        None => seed::rng(args.seed).random_range(0..frame.n_rows()),
    };
    let key = &frame.rows[row];
    let instance_id = format!("{}@{}", key.patient_id, key.hour);
    let e = local_surrogate(&model, &instance_id, &frame.row(row), args.perturbations, args.top_k, args.seed)?;
    println!("{instance_id}: predicted probability {:.4}", e.prediction);
    if e.ridge_fallback {
        println!("(singular design, ridge fallback used)");
    }
    print!("{}", e.to_table());
    if let Some(out) = &args.out {
        write(out, e.to_json()? + "\n")?;
    }
    Ok(())
}

fn dispatch(command: Command) -> Result<()> {
    match command {
        Command::Synth(a) => cmd_synth(a),
        Command::Run(a) => cmd_run(a),
        Command::Train(a) => cmd_train(a),
        Command::Explain(a) => cmd_explain(a),
    }
}

/// 2 for configuration problems, 3 for bad data, 4 when a split or fold has
/// a single class.
fn exit_code(err: &anyhow::Error) -> u8 {
    err.chain()
        .find_map(|c| c.downcast_ref::<msep_core::Error>())
        .map_or(2, |e| match e.kind() {
            ErrorKind::Config => 2,
            ErrorKind::Data => 3,
            ErrorKind::DegenerateClass => 4,
        })
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match cli.threads {
        Some(n) => rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build()
            .map_err(|e| anyhow!("thread pool: {e}"))
            .and_then(|pool| pool.install(|| dispatch(cli.command))),
        None => dispatch(cli.command),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(exit_code(&e))
        }
    }
}
