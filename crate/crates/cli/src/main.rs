//! `helidock`: run single approaches, paired batches, and bound analysis.
//!
//! Exit codes: 0 success, 1 configuration or usage error, 2 simulation abort,
//! 3 analysis error.

mod config;

use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use helidock_core::export::{
    read_json, read_run_dir, run_file_stem, write_error_norms_csv, write_json, write_run_csv_file,
};
use helidock_core::{bound_report, run_batch, run_once, BatchSummary, ControllerKind, Pairing, RunRecord};

use crate::config::CliConfig;

#[derive(Parser)]
#[command(name = "helidock", version, about = "Helicopter probe-and-drogue docking simulator")]
struct Cli {
    /// TOML config file; built-in defaults when omitted.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Root directory for run artifacts.
    #[arg(long, global = true, env = "HELIDOCK_OUT_DIR", default_value = "out")]
    out_dir: PathBuf,
    /// Override a config key, e.g. `--set gains.Kp.x=0.5`. Repeatable.
    #[arg(long = "set", value_name = "KEY=VALUE", global = true)]
    overrides: Vec<String>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Simulate one approach.
    Run {
        #[arg(long)]
        seed: Option<u64>,
        #[arg(long)]
        controller: Option<ControllerKind>,
    },
    /// Simulate seeds `seed..seed+n-1` with both controllers.
    Batch {
        #[arg(long)]
        seed: Option<u64>,
        #[arg(long)]
        n_runs: Option<u64>,
        #[arg(long)]
        pairing: Option<Pairing>,
    },
    /// Check recorded runs against the invariant-set bound.
    Analyze {
        /// Directory written by `run` or `batch`.
        dir: PathBuf,
    },
}

enum Failure {
    Config(String),
    Abort(String),
    Analysis(String),
}

impl Failure {
    fn code(&self) -> u8 {
        match self {
            Failure::Config(_) => 1,
            Failure::Abort(_) => 2,
            Failure::Analysis(_) => 3,
        }
    }

    fn message(&self) -> &str {
        match self {
            Failure::Config(m) | Failure::Abort(m) | Failure::Analysis(m) => m,
        }
    }
}

type CmdResult = Result<(), Failure>;

fn config_err(e: impl std::fmt::Display) -> Failure {
    Failure::Config(format!("config error: {e}"))
}

fn output_err(e: impl std::fmt::Display) -> Failure {
    Failure::Config(format!("cannot write output: {e}"))
}

fn load_config(cli: &Cli, extra: Vec<String>) -> Result<CliConfig, Failure> {
    let overrides: Vec<String> = cli.overrides.iter().cloned().chain(extra).collect();
    config::load(cli.config.as_deref(), &overrides).map_err(config_err)
}

fn prepare_dir(root: &Path, cfg: &CliConfig) -> Result<PathBuf, Failure> {
    let (first, last) = cfg.seed_range();
    let dir = root.join(format!("{}_s{first}-{last}", cfg.hash()));
    fs::create_dir_all(&dir).map_err(output_err)?;
    write_json(&dir.join("config.json"), cfg).map_err(output_err)?;
    Ok(dir)
}

fn write_record(dir: &Path, record: &RunRecord) -> CmdResult {
    let stem = run_file_stem(record.outcome.controller, record.outcome.seed);
    write_run_csv_file(&dir.join(format!("{stem}.csv")), &record.series).map_err(output_err)?;
    write_json(&dir.join(format!("{stem}.json")), &record.outcome).map_err(output_err)
}

fn cmd_run(cli: &Cli, seed: Option<u64>, controller: Option<ControllerKind>) -> CmdResult {
    let mut extra = vec!["run.n_runs=1".to_owned()];
    extra.extend(seed.map(|s| format!("run.seed={s}")));
    extra.extend(controller.map(|c| format!("run.controller=\"{c}\"")));
    let cfg = load_config(cli, extra)?;
    let record = run_once(&cfg.run_config(cfg.run.seed, cfg.run.controller)).map_err(config_err)?;
    let dir = prepare_dir(&cli.out_dir, &cfg)?;
    write_record(&dir, &record)?;

    let o = &record.outcome;
    println!("output: {}", dir.display());
    match (&o.abort_reason, o.docking_error) {
        (Some(reason), _) => {
            Err(Failure::Abort(format!("{} run with seed {} aborted: {reason}", o.controller, o.seed)))
        }
        (None, Some(err)) => {
            println!(
                "{} seed {}: docking error {err:.4} m ({}), measured delta_R {:.4} m/s^2",
                o.controller,
                o.seed,
                if o.success { "success" } else { "miss" },
                o.measured_delta_r
            );
            Ok(())
        }
        (None, None) => Err(Failure::Abort("run produced no samples".into())),
    }
}

fn fmt_opt(v: Option<f64>) -> String {
    v.map_or_else(|| "-".into(), |x| format!("{x:.4}"))
}

fn print_summary(s: &BatchSummary) {
    println!("{:<26}{:>12}{:>12}", "", "standard", "proposed");
    let row = |name: &str, f: &dyn Fn(ControllerKind) -> String| {
        println!("{name:<26}{:>12}{:>12}", f(ControllerKind::Standard), f(ControllerKind::Proposed));
    };
    row("mean docking error (m)", &|k| fmt_opt(s.stats(k).mean_docking_error));
    row("std docking error (m)", &|k| fmt_opt(s.stats(k).std_docking_error));
    row("success rate", &|k| format!("{:.0}%", 100.0 * s.stats(k).success_rate));
    row("completed / runs", &|k| format!("{}/{}", s.stats(k).completed, s.stats(k).runs));
    row("bound compliant", &|k| s.stats(k).bound_compliant.to_string());
    row("max measured delta_R", &|k| format!("{:.4}", s.stats(k).max_measured_delta_r));
    if let Some(d) = s.paired_dominance {
        println!("proposed <= standard in {}/{} pairs ({:.0}%)", s.proposed_not_worse, s.pairs_compared, 100.0 * d);
    }
}

fn cmd_batch(cli: &Cli, seed: Option<u64>, n_runs: Option<u64>, pairing: Option<Pairing>) -> CmdResult {
    let mut extra = Vec::new();
    extra.extend(seed.map(|s| format!("run.seed={s}")));
    extra.extend(n_runs.map(|n| format!("run.n_runs={n}")));
    extra.extend(
        pairing.map(|p| format!("run.pairing=\"{}\"", if p == Pairing::Paired { "paired" } else { "independent" })),
    );
    let cfg = load_config(cli, extra)?;
    let (first, last) = cfg.seed_range();
    let seeds: Vec<u64> = (first..=last).collect();
    let batch = run_batch(&cfg.run_config(first, cfg.run.controller), &seeds, cfg.run.pairing).map_err(config_err)?;

    let dir = prepare_dir(&cli.out_dir, &cfg)?;
    for record in &batch.records {
        write_record(&dir, record)?;
    }
    write_json(&dir.join("summary.json"), &batch.summary).map_err(output_err)?;
    println!("output: {}", dir.display());
    print_summary(&batch.summary);
    Ok(())
}

fn cmd_analyze(dir: &Path) -> CmdResult {
    let fail = |e: &dyn std::fmt::Display| Failure::Analysis(format!("analysis error: {e}"));
    let runs = read_run_dir(dir).map_err(|e| fail(&e))?;
    if runs.is_empty() {
        return Err(fail(&format!("no run CSVs in {}", dir.display())));
    }
    let cfg: CliConfig = read_json(&dir.join("config.json")).map_err(|e| fail(&e))?;
    let report = bound_report(&runs, &cfg.gains, &cfg.geometry, cfg.uncertainty.delta_d).map_err(|e| fail(&e))?;
    write_json(&dir.join("bound_report.json"), &report).map_err(|e| fail(&e))?;
    let norms = dir.join("error_norms.csv");
    let file = fs::File::create(&norms).map_err(|e| fail(&e))?;
    write_error_norms_csv(std::io::BufWriter::new(file), &runs, report.aggregate_ceiling).map_err(|e| fail(&e))?;

    println!(
        "{}/{} runs bound compliant ({:.0}%), proposed {}/{}",
        report.compliant,
        report.runs,
        100.0 * report.compliance_rate,
        report.proposed_compliant,
        report.proposed_runs
    );
    println!(
        "ceiling (delta_D + max delta_R) / min Kp = ({} + {:.4}) / {} = {:.4} m; max |e| after entry {}",
        report.delta_d,
        report.max_measured_delta_r,
        report.kp_min,
        report.aggregate_ceiling,
        fmt_opt(report.max_error_after_entry)
    );
    Ok(())
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() { 1 } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    let result = match &cli.command {
        Command::Run { seed, controller } => cmd_run(&cli, *seed, *controller),
        Command::Batch { seed, n_runs, pairing } => cmd_batch(&cli, *seed, *n_runs, *pairing),
        Command::Analyze { dir } => cmd_analyze(dir),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(f) => {
            eprintln!("helidock: {}", f.message());
            ExitCode::from(f.code())
        }
    }
}
