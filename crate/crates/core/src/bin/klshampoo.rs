use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};

use klshampoo::harness::{
    compare_config, run_claims_on, run_task, write_csv, records_to_csv, RunSettings, SeedGrid,
    TolProfile,
};
use klshampoo::Error;

#[derive(Parser)]
#[command(name = "klshampoo", version, about = "Kronecker-factored preconditioner experiments")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Train one optimizer on one synthetic task and write its loss curve as CSV.
    Run(RunArgs),
    /// Run the verification suite.
    Claims(ClaimsArgs),
    /// Run every `[run]` block of a config file and summarize.
    Compare(CompareArgs),
}

#[derive(Args)]
struct RunArgs {
    #[arg(long)]
    task: String,
    #[arg(long)]
    optimizer: String,
    #[arg(long)]
    gamma: Option<f64>,
    #[arg(long)]
    beta1: Option<f64>,
    #[arg(long)]
    beta2: Option<f64>,
    #[arg(long)]
    kappa: Option<f64>,
    /// Root used by shampoo: 0.25 or 0.5.
    #[arg(long)]
    power: Option<f64>,
    #[arg(long)]
    refresh_interval: Option<usize>,
    #[arg(long)]
    weight_decay: Option<f64>,
    #[arg(long, action = clap::ArgAction::Set)]
    grafting: Option<bool>,
    #[arg(long)]
    steps: Option<usize>,
    #[arg(long)]
    seed: Option<u64>,
    /// Samples per stochastic gradient; 0 uses the exact gradient.
    #[arg(long)]
    batch: Option<usize>,
    /// Task dimensions, e.g. 8x6.
    #[arg(long)]
    dims: Option<String>,
    /// Linear warmup length in steps.
    #[arg(long)]
    warmup: Option<usize>,
    #[arg(long)]
    epsilon: Option<f64>,
    /// eigen or qr.
    #[arg(long)]
    basis_refresh: Option<String>,
    /// Write measured wall-clock times instead of zeros.
    #[arg(long)]
    timing: bool,
    /// CSV destination; stdout when omitted.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Clone, Copy, ValueEnum)]
enum Profile {
    Default,
    Strict,
}

#[derive(Args)]
struct ClaimsArgs {
    #[arg(long, value_enum, default_value = "default")]
    tol_profile: Profile,
    /// Number of base seeds (0..n).
    #[arg(long, default_value_t = 100)]
    seeds: u64,
    /// JSON report destination.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct CompareArgs {
    #[arg(long)]
    config: PathBuf,
    #[arg(long)]
    out: PathBuf,
}

fn exit_for(e: &Error) -> ExitCode {
    eprintln!("error: {e}");
    match e {
        Error::Io(_) => ExitCode::from(3),
        _ => ExitCode::from(2),
    }
}

fn run(a: RunArgs) -> Result<ExitCode, Error> {
    let mut s = RunSettings::default();
    s.set("task", &a.task);
    s.set("optimizer", &a.optimizer);
    let optional: [(&str, Option<String>); 15] = [
        ("gamma", a.gamma.map(|v| v.to_string())),
        ("beta1", a.beta1.map(|v| v.to_string())),
        ("beta2", a.beta2.map(|v| v.to_string())),
        ("kappa", a.kappa.map(|v| v.to_string())),
        ("power", a.power.map(|v| v.to_string())),
        ("refresh-interval", a.refresh_interval.map(|v| v.to_string())),
        ("weight-decay", a.weight_decay.map(|v| v.to_string())),
        ("grafting", a.grafting.map(|v| v.to_string())),
        ("steps", a.steps.map(|v| v.to_string())),
        ("seed", a.seed.map(|v| v.to_string())),
        ("batch", a.batch.map(|v| v.to_string())),
        ("dims", a.dims),
        ("warmup", a.warmup.map(|v| v.to_string())),
        ("epsilon", a.epsilon.map(|v| v.to_string())),
        ("basis-refresh", a.basis_refresh),
    ];
    for (k, v) in optional {
        if let Some(v) = v {
            s.set(k, &v);
        }
    }
    let spec = s.to_spec()?;
    let records = run_task(&spec.task, &spec.cfg)?;
    if let Some(last) = records.last().filter(|r| r.diverged) {
        eprintln!("warning: run diverged at step {}", last.step);
    }
    match a.out {
        Some(path) => write_csv(&path, &records, a.timing)?,
        None => print!("{}", records_to_csv(&records, a.timing)),
    }
    Ok(ExitCode::SUCCESS)
}

fn claims(a: ClaimsArgs) -> Result<ExitCode, Error> {
    let profile = match a.tol_profile {
        Profile::Default => TolProfile::Default,
        Profile::Strict => TolProfile::Strict,
    };
    let report = run_claims_on(profile, &SeedGrid::new((0..a.seeds).collect()))?;
    print!("{}", report.to_text());
    if let Some(path) = a.out {
        write_file(&path, &(report.to_json() + "\n"))?;
    }
    Ok(if report.all_passed() {
        ExitCode::SUCCESS
    } else {
        ExitCode::from(1)
    })
}

fn write_file(path: &Path, text: &str) -> Result<(), Error> {
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        std::fs::create_dir_all(dir)?;
    }
    std::fs::write(path, text)?;
    Ok(())
}

fn compare(a: CompareArgs) -> Result<ExitCode, Error> {
    let summary = compare_config(&a.config, &a.out)?;
    println!(
        "{:<34} {:>12} {:>12} {:>10}",
        "file", "final_loss", "best_loss", "to_thresh"
    );
    let show = |v: Option<f64>| v.map_or("nan".to_string(), |x| format!("{x:.4e}"));
    for r in &summary.runs {
        println!(
            "{:<34} {:>12} {:>12} {:>10}",
            r.file,
            show(r.final_loss),
            show(r.best_loss),
            r.steps_to_threshold.map_or("-".to_string(), |s| s.to_string())
        );
    }
    Ok(ExitCode::SUCCESS)
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let outcome = match cli.command {
        Command::Run(a) => run(a),
        Command::Claims(a) => claims(a),
        Command::Compare(a) => compare(a),
    };
    outcome.unwrap_or_else(|e| exit_for(&e))
}
