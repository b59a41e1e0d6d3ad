use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use resfault::config::{load_config, RunConfig};
use resfault::data::{GroundTruth, UnitSeries};
use resfault::experiment::{
    evaluate_fleet, mean_silhouette_curve, realisation_data, run_experiment, train_model, ComboResult,
    Fleet, Realisation, MODEL_KINDS,
};
use resfault::hi::HiKind;
use resfault::io::{
    load_checkpoint, load_csv, load_ground_truth, save_checkpoint, save_csv, save_ground_truth,
    TrainingMeta,
};
use resfault::models::ModelKind;
use resfault::report::{
    read_reports, report_rows, summarize, write_cycle_hi, write_pca, write_reports, write_signatures,
    write_silhouette, write_stats, write_summary, write_timelines, write_training_log, write_unit_table,
};
use resfault::synth::gen_fleet;
use resfault::{Error, ErrorCategory, Result};

const FLEET_FILE: &str = "fleet.csv";
const TRUTH_FILE: &str = "ground_truth.csv";

#[derive(Parser)]
#[command(name = "resfault", version, about = "Residual-based fault detection experiments")]
struct Cli {
    #[command(flatten)]
    common: Common,
    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct Common {
    /// TOML run configuration; defaults apply to every missing key.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Master seed, overriding the configuration.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Output directory.
    #[arg(long, global = true, default_value = "out")]
    out: PathBuf,
}

#[derive(Subcommand)]
enum Command {
    /// Generate a synthetic fleet with ground truth.
    Synth {
        /// Number of additional units that never develop a fault.
        #[arg(long)]
        healthy_units: Option<usize>,
    },
    /// Train one residual model on the healthy cycles of a fleet.
    Train {
        #[arg(long)]
        data: PathBuf,
        #[arg(long)]
        model: ModelKind,
        /// Realisation index selecting the validation split and seeds.
        #[arg(long, default_value_t = 0)]
        realisation: usize,
    },
    /// Run threshold detection with a trained model.
    Detect {
        #[arg(long)]
        data: PathBuf,
        #[arg(long)]
        checkpoint: PathBuf,
        #[arg(long)]
        hi: HiKind,
        /// Must match the realisation the checkpoint was trained on.
        #[arg(long, default_value_t = 0)]
        realisation: usize,
    },
    /// Average detection reports into delay and false-positive tables.
    Evaluate {
        #[arg(long, required = true, num_args = 1..)]
        reports: Vec<PathBuf>,
    },
    /// Signatures, 2-D projection, silhouette curve and trigger timelines.
    Segment {
        #[arg(long)]
        data: PathBuf,
        #[arg(long)]
        checkpoint: PathBuf,
        #[arg(long, default_value = "sensorwise")]
        hi: HiKind,
        #[arg(long, default_value_t = 0)]
        realisation: usize,
    },
    /// The whole protocol: every model and indicator over all realisations.
    Run {
        /// Existing fleet directory; a synthetic fleet is generated if absent.
        #[arg(long)]
        data: Option<PathBuf>,
    },
}

fn exit_code(e: &Error) -> u8 {
    match e.category() {
        ErrorCategory::Config => 3,
        ErrorCategory::Data => 4,
        ErrorCategory::Computation => 5,
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(exit_code(&e))
        }
    }
}

fn run(cli: Cli) -> Result<()> {
    let mut cfg = match &cli.common.config {
        Some(p) => load_config(p)?,
        None => RunConfig::default(),
    };
    if let Some(seed) = cli.common.seed {
        cfg.seed = seed;
    }
    let out = cli.common.out.as_path();
    match cli.command {
        Command::Synth { healthy_units } => {
            if let Some(n) = healthy_units {
                cfg.synth.healthy_units = n;
            }
            cfg.validate()?;
            make_dir(out)?;
            synthesize(&cfg, out)?;
            write_manifest(out, "synth", &cfg, &[])
        }
        Command::Train { data, model, realisation } => {
            cfg.validate()?;
            let fleet = load_fleet(&data, &cfg)?;
            make_dir(out)?;
            let td = realisation_data(&fleet, &cfg, realisation)?;
            let train_cfg = cfg.train_config(realisation);
            let (m, history) = train_model(model, &td, &train_cfg)?;
            let stem = format!("{model}_r{realisation}");
            save_checkpoint(
                &out.join(format!("{stem}.ckpt")),
                &m,
                &TrainingMeta::from_history(train_cfg.seed, &history),
            )?;
            write_training_log(&out.join(format!("{stem}_log.csv")), &history)?;
            let best = history.best();
            println!(
                "{model}: {} epochs, best epoch {} (train loss {:.6}, validation loss {:.6})",
                history.epochs.len(),
                history.best_epoch,
                best.train_loss,
                best.val_loss
            );
            write_manifest(out, "train", &cfg, &[realisation])
        }
        Command::Detect { data, checkpoint, hi, realisation } => {
            cfg.validate()?;
            let combo = detect_with(&cfg, &data, &checkpoint, hi, realisation)?;
            make_dir(out)?;
            let stem = format!("{}_{hi}_r{realisation}", combo.model);
            write_reports(&out.join(format!("reports_{stem}.csv")), &report_rows(realisation, &combo))?;
            write_stats(&out.join(format!("stats_{stem}.csv")), &combo.channel_names, &combo.stats)?;
            write_cycle_hi(&out.join(format!("cycle_hi_{stem}.csv")), &combo)?;
            let alarms = combo.units.iter().filter(|u| u.report.alarm_cycle.is_some()).count();
            println!("{stem}: {alarms} of {} units raised an alarm", combo.units.len());
            write_manifest(out, "detect", &cfg, &[realisation])
        }
        Command::Evaluate { reports } => {
            let mut rows = Vec::new();
            for p in &reports {
                rows.extend(read_reports(p)?);
            }
            make_dir(out)?;
            let (summaries, units) = summarize(&rows);
            write_summary(&out.join("summary.csv"), &summaries)?;
            write_unit_table(&out.join("unit_delays.csv"), &units)?;
            for s in &summaries {
                println!(
                    "{} {}: mean delay {}, FPR {}",
                    s.model,
                    s.hi,
                    resfault::report::dash(s.mean_delay),
                    resfault::report::dash(s.fpr)
                );
            }
            write_manifest(out, "evaluate", &cfg, &[])
        }
        Command::Segment { data, checkpoint, hi, realisation } => {
            cfg.validate()?;
            let combo = detect_with(&cfg, &data, &checkpoint, hi, realisation)?;
            make_dir(out)?;
            let stem = format!("{}_{hi}", combo.model);
            let curve: Vec<(usize, Option<f64>)> = (0..=cfg.segment.k_max)
                .map(|k| combo.silhouette_at(k, cfg.segment.normalization).map(|s| (k, s)))
                .collect::<Result<_>>()?;
            write_segmentation(&cfg, out, &stem, &combo)?;
            write_silhouette(&out.join(format!("silhouette_{stem}.csv")), &[(stem.clone(), curve)])?;
            write_manifest(out, "segment", &cfg, &[realisation])
        }
        Command::Run { data } => {
            cfg.validate()?;
            make_dir(out)?;
            let fleet = match data {
                Some(dir) => load_fleet(&dir, &cfg)?,
                None => {
                    synthesize(&cfg, out)?;
                    load_fleet(out, &cfg)?
                }
            };
            let runs = run_experiment(&fleet, &cfg, &MODEL_KINDS)?;
            write_experiment(&cfg, out, &runs)?;
            let realisations: Vec<usize> = (0..cfg.experiment.realisations).collect();
            write_manifest(out, "run", &cfg, &realisations)
        }
    }
}

fn make_dir(dir: &Path) -> Result<()> {
    fs::create_dir_all(dir).map_err(|e| Error::Io {
        path: dir.to_path_buf(),
        source: e,
    })
}

fn synthesize(cfg: &RunConfig, out: &Path) -> Result<()> {
    let units = gen_fleet(&cfg.synth_config())?;
    let series: Vec<UnitSeries> = units.iter().map(|u| u.series.clone()).collect();
    let truths: Vec<GroundTruth> = units.iter().map(|u| u.truth.clone()).collect();
    save_csv(&out.join(FLEET_FILE), &series, &cfg.schema)?;
    save_ground_truth(&out.join(TRUTH_FILE), &truths)?;
    println!("wrote {} units to {}", units.len(), out.display());
    Ok(())
}

/// Loads `fleet.csv` and, if present, `ground_truth.csv` from `dir`.
fn load_fleet(dir: &Path, cfg: &RunConfig) -> Result<Fleet> {
    let raw = load_csv(&dir.join(FLEET_FILE), &cfg.schema)?;
    let truth_path = dir.join(TRUTH_FILE);
    let truths = if truth_path.exists() {
        load_ground_truth(&truth_path)?
    } else {
        Vec::new()
    };
    Fleet::prepare(&raw, &truths, &cfg.preprocess)
}

fn detect_with(cfg: &RunConfig, data: &Path, checkpoint: &Path, hi: HiKind, realisation: usize) -> Result<ComboResult> {
    let fleet = load_fleet(data, cfg)?;
    let ckpt = load_checkpoint(checkpoint)?;
    let td = realisation_data(&fleet, cfg, realisation)?;
    evaluate_fleet(&ckpt.model, &td, &fleet, hi, cfg)
}

/// Writes signatures and timelines, then the projection, which needs two
/// distinct fault labels among the signatures.
fn write_segmentation(cfg: &RunConfig, out: &Path, stem: &str, combo: &ComboResult) -> Result<()> {
    let seg = &cfg.segment;
    write_signatures(
        &out.join(format!("signatures_{stem}.csv")),
        &combo.channel_names,
        &combo.signatures(seg.snapshot_k, seg.normalization),
    )?;
    write_timelines(
        &out.join(format!("timelines_{stem}.csv")),
        &combo.channel_names,
        &combo.timelines(&seg.checkpoints)?,
    )?;
    let (sigs, pca) = combo.pca(seg.snapshot_k, seg.normalization)?;
    write_pca(
        &out.join(format!("pca_{stem}.csv")),
        &out.join(format!("pca_axes_{stem}.csv")),
        &combo.channel_names,
        &sigs,
        &pca,
    )
}

fn write_experiment(cfg: &RunConfig, out: &Path, runs: &[Realisation]) -> Result<()> {
    let mut rows = Vec::new();
    for r in runs {
        for m in &r.models {
            let stem = format!("{}_r{}", m.model.kind(), r.index);
            save_checkpoint(
                &out.join(format!("{stem}.ckpt")),
                &m.model,
                &TrainingMeta::from_history(m.train_seed, &m.history),
            )?;
            write_training_log(&out.join(format!("{stem}_log.csv")), &m.history)?;
        }
        for c in &r.combos {
            rows.extend(report_rows(r.index, c));
        }
    }
    write_reports(&out.join("reports.csv"), &rows)?;
    let (summaries, units) = summarize(&rows);
    write_summary(&out.join("summary.csv"), &summaries)?;
    write_unit_table(&out.join("unit_delays.csv"), &units)?;

    let first = &runs[0];
    for c in &first.combos {
        let stem = format!("{}_{}_r0", c.model, c.hi);
        write_stats(&out.join(format!("stats_{stem}.csv")), &c.channel_names, &c.stats)?;
        write_cycle_hi(&out.join(format!("cycle_hi_{stem}.csv")), c)?;
    }
    let seg = &cfg.segment;
    let mut curves = Vec::new();
    for model in MODEL_KINDS {
        let hi = HiKind::Sensorwise;
        curves.push((
            format!("{model}_{hi}"),
            mean_silhouette_curve(runs, model, hi, 0..=seg.k_max, seg.normalization)?,
        ));
        if let Some(c) = first.combo(model, hi) {
            match write_segmentation(cfg, out, &format!("{model}_{hi}_r0"), c) {
                Err(Error::SingleCluster) => eprintln!("{model} {hi}: one fault label only, projection skipped"),
                other => other?,
            }
        }
    }
    write_silhouette(&out.join("silhouette.csv"), &curves)?;

    for s in &summaries {
        println!(
            "{} {}: mean delay {}, FPR {}",
            s.model,
            s.hi,
            resfault::report::dash(s.mean_delay),
            resfault::report::dash(s.fpr)
        );
    }
    Ok(())
}

/// Plain-text record of the command, configuration and derived seeds.
fn write_manifest(out: &Path, command: &str, cfg: &RunConfig, realisations: &[usize]) -> Result<()> {
    let mut text = String::new();
    writeln!(text, "tool = resfault {}", env!("CARGO_PKG_VERSION")).unwrap();
    writeln!(text, "command = {command}").unwrap();
    writeln!(text, "master_seed = {}", cfg.seed).unwrap();
    writeln!(text, "synth_seed = {}", cfg.synth_config().seed).unwrap();
    for &r in realisations {
        writeln!(text, "realisation_{r} = split {} train {}", cfg.split_seed(r), cfg.train_seed(r)).unwrap();
    }
    text.push_str("\n# effective configuration\n");
    match cfg.to_toml() {
        Ok(t) => text.push_str(&t),
        Err(_) => writeln!(text, "{cfg:?}").unwrap(),
    }
    let path = out.join("manifest.txt");
    fs::write(&path, text).map_err(|e| Error::Io { path, source: e })
}
