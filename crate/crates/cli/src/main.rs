//! `dcac`: run DCOPF → ACPF restoration studies from the command line.

use std::path::PathBuf;
use std::process::ExitCode;

use anyhow::{Context, Result};
use clap::{Parser, ValueEnum};
use dcac_core::ac::VoltageTarget;
use dcac_core::pipeline::{emit_results, summarize};
use dcac_core::{
    fixtures, read_matpower_case, run_batch, AcVariant, LossTag, NetworkCase, OutputFormat,
    PipelineOptions, ReferenceDispatch, RunMetadata, ScenarioConfig, SolverOptions, Stage,
};

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
enum DcChoice {
    Base,
    Lllf,
    Lqcp,
    Lloa,
    All,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
enum AcChoice {
    Base,
    Bts,
    Ds,
    Spf,
    All,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
enum WarmChoice {
    Flat,
    Acbase,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
enum FormatChoice {
    Csv,
    Json,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
enum TargetChoice {
    Nominal,
    Setpoint,
}

/// Loss-aware DC dispatch followed by AC power flow restoration and a
/// feasibility audit, over the nominal load or a batch of perturbed loads.
#[derive(Debug, Parser)]
#[command(name = "dcac", version)]
struct Cli {
    /// MATPOWER case file, or one of the bundled names case30, case39, case118.
    #[arg(long)]
    case: String,
    /// DC loss models, comma separated.
    #[arg(long, value_enum, value_delimiter = ',', default_value = "all")]
    dc: Vec<DcChoice>,
    /// AC variants, comma separated.
    #[arg(long, value_enum, value_delimiter = ',', default_value = "all")]
    ac: Vec<AcChoice>,
    /// Standard deviation of the multiplicative load noise.
    #[arg(long, default_value_t = 0.05)]
    sigma: f64,
    /// Number of perturbed scenarios; 0 runs the nominal load once.
    #[arg(long, default_value_t = 0)]
    samples: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long, default_value_t = 0.95)]
    pf_min: f64,
    #[arg(long, default_value_t = 1.0)]
    pf_max: f64,
    /// Power flow mismatch tolerance (p.u.).
    #[arg(long, default_value_t = 1e-6)]
    tol: f64,
    /// Reactive switching deadband (p.u.).
    #[arg(long, default_value_t = 1e-4)]
    eps_q: f64,
    /// Voltage switching deadband (p.u.).
    #[arg(long, default_value_t = 1e-5)]
    eps_v: f64,
    #[arg(long, default_value_t = 30)]
    max_inner: usize,
    #[arg(long, default_value_t = 50)]
    max_outer: usize,
    #[arg(long, value_enum, default_value = "flat")]
    warm_start: WarmChoice,
    /// Voltage magnitude held at regulated buses.
    #[arg(long, value_enum, default_value = "nominal")]
    voltage_target: TargetChoice,
    /// ACOPF reference dispatch (JSON) for MAE and cost difference.
    #[arg(long = "ref")]
    reference: Option<PathBuf>,
    #[arg(long, default_value = "results")]
    out: PathBuf,
    #[arg(long, value_enum, default_value = "csv")]
    format: FormatChoice,
    /// Worker threads; defaults to the number of cores.
    #[arg(long)]
    workers: Option<usize>,
    /// Leave wall times empty so repeated runs produce identical files.
    #[arg(long)]
    no_timing: bool,
}

fn expand<T: Copy + PartialEq, U: Copy + PartialEq>(choices: &[T], all: T, every: &[U], map: impl Fn(T) -> U) -> Vec<U> {
    let mut out = Vec::new();
    for &c in choices {
        let items: Vec<U> = if c == all { every.to_vec() } else { vec![map(c)] };
        for u in items {
            if !out.contains(&u) {
                out.push(u);
            }
        }
    }
    out
}

fn load_case(name: &str) -> Result<NetworkCase> {
    let path = PathBuf::from(name);
    if !path.exists() {
        if let Some(case) = fixtures::builtin(name) {
            return Ok(case);
        }
    }
    read_matpower_case(&path).with_context(|| format!("{} stage: {name}", Stage::Parse.label()))
}

fn run(cli: Cli) -> Result<ExitCode> {
    let case = load_case(&cli.case)?;
    let dcs = expand(&cli.dc, DcChoice::All, &LossTag::ALL, |c| match c {
        DcChoice::Base => LossTag::Base,
        DcChoice::Lllf => LossTag::Lllf,
        DcChoice::Lqcp => LossTag::Lqcp,
        DcChoice::Lloa | DcChoice::All => LossTag::Lloa,
    });
    let acs = expand(&cli.ac, AcChoice::All, &AcVariant::ALL, |c| match c {
        AcChoice::Base => AcVariant::Base,
        AcChoice::Bts => AcVariant::Bts,
        AcChoice::Ds => AcVariant::Ds,
        AcChoice::Spf | AcChoice::All => AcVariant::Spf,
    });
    let config = ScenarioConfig {
        sigma: cli.sigma,
        pf_min: cli.pf_min,
        pf_max: cli.pf_max,
        n_samples: cli.samples,
        seed: cli.seed,
    };
    config.validate()?;
    anyhow::ensure!(cli.workers != Some(0), "--workers must be at least 1");
    let options = PipelineOptions {
        ac: SolverOptions {
            tol: cli.tol,
            eps_q: cli.eps_q,
            eps_v: cli.eps_v,
            max_inner: cli.max_inner,
            max_outer: cli.max_outer,
            voltage_target: match cli.voltage_target {
                TargetChoice::Nominal => VoltageTarget::Nominal,
                TargetChoice::Setpoint => VoltageTarget::Setpoint,
            },
            ..Default::default()
        },
        warm_from_base: cli.warm_start == WarmChoice::Acbase,
        record_timing: !cli.no_timing,
        ..Default::default()
    };
    let reference = cli
        .reference
        .as_ref()
        .map(|p| ReferenceDispatch::read(p, &case))
        .transpose()?;

    let out = run_batch(&case, &dcs, &acs, &config, &options, reference.as_ref(), cli.workers)?;
    let format = match cli.format {
        FormatChoice::Csv => OutputFormat::Csv,
        FormatChoice::Json => OutputFormat::Json,
    };
    let metadata = RunMetadata::new(&case, &config, &options);
    let files = emit_results(&out.records, &out.summary, &metadata, format, &cli.out)?;

    println!("{:<9} {:<7} {:>9} {:>10} {:>10} {:>10} {:>10}", "dc", "ac", "converged", "sum_p", "sum_q", "sum_v", "sum_th");
    for s in summarize(&out.records, &dcs, &acs) {
        let col = |i: usize| s.violation_sums[i].map_or("-".to_string(), |x| format!("{:.3e}", x.mean));
        println!(
            "{:<9} {:<7} {:>4}/{:<4} {:>10} {:>10} {:>10} {:>10}",
            s.dc_variant.label(),
            s.ac_variant.label(),
            s.converged,
            s.runs,
            col(0),
            col(1),
            col(2),
            col(3)
        );
    }
    for f in &files {
        println!("wrote {}", f.display());
    }
    let failed: Vec<_> = out.records.iter().filter(|r| !r.converged).collect();
    for r in &failed {
        eprintln!(
            "sample {} {}->{} failed at {} stage: {}",
            r.scenario,
            r.dc_variant,
            r.ac_variant,
            r.failed_stage.map_or("ac", Stage::label),
            r.error.as_deref().unwrap_or("")
        );
    }
    Ok(if failed.is_empty() { ExitCode::SUCCESS } else { ExitCode::from(2) })
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
    match run(cli) {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(1)
        }
    }
}
