use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use noma_harness::config::{AllocatorKind, ScenarioFile};
use noma_harness::gap::{run_gap_study, GapOptions};
use noma_harness::output::{ensure_dir, write_gap_csv, Manifest};
use noma_harness::schedule_study::{run_oups_study, write_study, StudyOptions};
use noma_harness::Result;

const DEFAULT_GAP_TRIALS: u32 = 1000;

#[derive(Parser)]
#[command(name = "noma-sched", version, about = "Downlink NOMA user selection and scheduling experiments")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Single-slot optimality gap of USPA against the grid oracle.
    Gap(Common),
    /// Long-run dual scheduling with minimum average rate constraints.
    Oups(OupsArgs),
}

#[derive(Args)]
struct Common {
    /// Scenario file (TOML). The built-in reference scenario is used if omitted.
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    trials: Option<u32>,
    /// Output directory, created if missing.
    #[arg(long)]
    out: PathBuf,
    /// Write zeros in timing columns so outputs are byte-reproducible.
    #[arg(long)]
    no_timing: bool,
}

#[derive(Args)]
struct OupsArgs {
    #[command(flatten)]
    common: Common,
    #[arg(long)]
    slots: Option<u64>,
    /// uspa, oracle, oma or all.
    #[arg(long)]
    allocator: Option<String>,
    /// Also write every slot to slots_<allocator>_trial_<n>.csv.
    #[arg(long)]
    slot_log: bool,
}

fn load(common: &Common) -> Result<ScenarioFile> {
    let mut file = match &common.config {
        Some(path) => ScenarioFile::load(path)?,
        None => ScenarioFile::default(),
    };
    if let Some(seed) = common.seed {
        file.seed = seed;
    }
    if let Some(trials) = common.trials {
        file.trials = Some(trials);
    }
    Ok(file)
}

fn parse_variants(arg: Option<&str>, file: &ScenarioFile) -> std::result::Result<Vec<AllocatorKind>, String> {
    match arg {
        Some("all") => Ok(AllocatorKind::ALL.to_vec()),
        Some(name) => Ok(vec![name.parse()?]),
        None => Ok(file.allocator.map_or_else(|| AllocatorKind::ALL.to_vec(), |k| vec![k])),
    }
}

fn finish(command: Vec<String>, file: &ScenarioFile, out: &std::path::Path, outputs: Vec<String>) -> Result<()> {
    Manifest::build(command, file, out, &outputs)?.write(&out.join("manifest.json"))
}

fn gap(args: Common, command: Vec<String>) -> Result<()> {
    let file = load(&args)?;
    let cfg = file.resolve()?;
    let trials = cfg.trials.unwrap_or(DEFAULT_GAP_TRIALS);
    ensure_dir(&args.out)?;
    let report = run_gap_study(
        &cfg,
        trials,
        GapOptions {
            record_timing: !args.no_timing,
        },
    )?;
    write_gap_csv(&args.out.join("gap.csv"), &report.trials)?;
    finish(command, &file, &args.out, vec!["gap.csv".into()])?;

    println!("trials            {trials}");
    println!("mean abs gap      {:.6e} bit/s/Hz", report.mean_abs_gap);
    println!("mean rel gap      {:.4}%", 100.0 * report.mean_rel_gap);
    println!("max rel gap       {:.4}%", 100.0 * report.max_rel_gap);
    println!("rel shortfall     {:.4}% (against the better of the two)", 100.0 * report.mean_rel_shortfall);
    println!("oracle better in  {:.1}% of trials", 100.0 * report.oracle_better_fraction);
    println!("selected (uspa)   {:?}", report.hist_uspa);
    println!("selected (oracle) {:?}", report.hist_oracle);
    if !args.no_timing {
        println!(
            "median time       uspa {} ns, grid oracle {} ns (ratio {:.0}; brute-force grid, not comparable to an interior-point solver)",
            report.median_t_uspa_ns, report.median_t_oracle_ns, report.timing_ratio_oracle_over_uspa
        );
    }
    Ok(())
}

fn oups(args: OupsArgs, command: Vec<String>) -> Result<()> {
    let mut file = load(&args.common)?;
    if let Some(slots) = args.slots {
        file.slots = slots;
    }
    let variants = parse_variants(args.allocator.as_deref(), &file)
        .map_err(|message| noma_harness::ConfigError {
            path: "--allocator".into(),
            message,
        })?;
    let cfg = file.resolve()?;
    let out = &args.common.out;
    ensure_dir(out)?;
    let opts = StudyOptions {
        variants,
        trials: cfg.trials.unwrap_or(1),
        record_timing: !args.common.no_timing,
        slot_log_dir: args.slot_log.then(|| out.clone()),
    };
    let report = run_oups_study(&cfg, &opts)?;
    for v in &report.skipped {
        eprintln!("note: {v} skipped, instance has more users than the oracle supports");
    }
    let mut outputs = write_study(&report, out)?;
    if args.slot_log {
        for j in &report.jobs {
            outputs.push(format!("slots_{}_trial_{}.csv", j.variant, j.trial));
        }
    }
    finish(command, &file, out, outputs)?;

    for j in &report.jobs {
        let worst = j.summary.qos_slack.iter().copied().fold(f64::INFINITY, f64::min);
        println!(
            "{:<6} trial {:<3} avg wsr {:.4}  min qos slack {:+.4}",
            j.variant.as_str(),
            j.trial,
            j.summary.avg_wsr,
            worst
        );
    }
    Ok(())
}

fn main() -> ExitCode {
    let command: Vec<String> = std::env::args().collect();
    let cli = Cli::parse();
    let result = match cli.command {
        Command::Gap(args) => gap(args, command),
        Command::Oups(args) => oups(args, command),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::FAILURE
        }
    }
}
