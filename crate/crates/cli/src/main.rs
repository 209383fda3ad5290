use std::collections::BTreeMap;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use spillover::contacts::{read_contacts_csv, read_covariates_csv, write_contacts_csv};
use spillover::dates::DateParser;
use spillover::exposure::{BothHandling, ExposureTable, Stratum, WindowFilter};
use spillover::imputation::{run_imputation, ImputationSpec};
use spillover::pipeline::{
    exposure_from_reports, fit_estimators, pool_exposures, read_exposure_tables, run_pipeline,
    write_cohort_summary, write_pooled_exposure_csv, Estimator, ExposureOptions, FitRequest, RunConfig,
};
use spillover::residence::{clean_residence, read_residence_csv, write_residence_csv};
use spillover::sim::{load_sim_config, oracle_study, simulate, Scenario};
use spillover::tte::{derive_cohort, read_infections_csv, read_observations_csv, summarize_cohort, write_observations_csv, FollowUpWindow};
use spillover::{ArmAssignment, Error, Result};

#[derive(Parser)]
#[command(name = "spillover", version, about = "Contamination-adjusted additive hazards analysis for cluster-randomized trials")]
struct Cli {
    /// Worker threads for imputation, fitting and oracle replicates.
    #[arg(long, global = true)]
    jobs: Option<usize>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Clean residence records and derive time-to-event observations.
    Tte(TteArgs),
    /// Multiply impute missing contact-survey fields.
    Impute(ImputeArgs),
    /// Estimate per-cluster treatment exposure from contact reports.
    Exposure(ExposureArgs),
    /// Fit the naive and/or contamination-adjusted additive hazards models.
    Fit(FitArgs),
    /// Simulate one multi-cluster SIR trial.
    Simulate(SimulateArgs),
    /// Replicated simulation study of both estimators.
    Oracle(OracleArgs),
    /// Run every stage from a TOML configuration.
    Pipeline(PipelineArgs),
}

#[derive(Args)]
struct TteArgs {
    #[arg(long)]
    residence: PathBuf,
    #[arg(long)]
    infections: PathBuf,
    /// START:END[:CENSOR] as dates (YYYY-MM-DD or DD/MM/YYYY) or day numbers.
    #[arg(long)]
    window: String,
    #[arg(long)]
    arms: PathBuf,
    #[arg(long, default_value = ".")]
    out: PathBuf,
}

#[derive(Args)]
struct ImputeArgs {
    #[arg(long)]
    contacts: PathBuf,
    #[arg(long)]
    covariates: Option<PathBuf>,
    #[arg(long, default_value_t = 20)]
    m: usize,
    #[arg(long)]
    seed: u64,
    #[arg(long, default_value = ".")]
    out: PathBuf,
}

#[derive(Args)]
struct ExposureArgs {
    /// One file, or one per imputed dataset (pooled by Rubin's rules).
    #[arg(long, required = true, num_args = 1..)]
    contacts: Vec<PathBuf>,
    #[arg(long)]
    arms: PathBuf,
    /// all, symp or asymp
    #[arg(long, default_value = "all")]
    stratum: String,
    #[arg(long, default_value_t = -2, allow_negative_numbers = true)]
    day_offset: i8,
    /// Count entries reported for both morning and afternoon at half weight.
    #[arg(long)]
    half_split: bool,
    #[arg(long, default_value = ".")]
    out: PathBuf,
}

#[derive(Args)]
struct FitArgs {
    #[arg(long)]
    observations: PathBuf,
    /// One table, or one per imputed dataset (adjusted fits are pooled).
    #[arg(long, required = true, num_args = 1..)]
    exposure: Vec<PathBuf>,
    /// adjusted, naive or both
    #[arg(long, default_value = "both")]
    estimator: String,
    #[arg(long)]
    max_time: Option<f64>,
    #[arg(long)]
    horizon: Option<f64>,
    /// Seed for jittering tied event times.
    #[arg(long)]
    seed: u64,
    #[arg(long, default_value = "main")]
    analysis: String,
    #[arg(long)]
    no_svg: bool,
    #[arg(long, default_value = ".")]
    out: PathBuf,
}

#[derive(Args)]
struct SimulateArgs {
    /// Scenario or explicit-parameter TOML; built-in defaults if omitted.
    #[arg(long)]
    scenario: Option<PathBuf>,
    #[arg(long)]
    seed: u64,
    #[arg(long, default_value = ".")]
    out: PathBuf,
}

#[derive(Args)]
struct OracleArgs {
    #[arg(long)]
    scenario: Option<PathBuf>,
    #[arg(long)]
    replicates: Option<usize>,
    #[arg(long)]
    seed: u64,
    #[arg(long, default_value = ".")]
    out: PathBuf,
}

#[derive(Args)]
struct PipelineArgs {
    #[arg(long)]
    config: PathBuf,
    /// Overrides the config's output directory.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Overrides the config's seed.
    #[arg(long)]
    seed: Option<u64>,
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = Cli::parse();
    if let Some(n) = cli.jobs {
        if let Err(e) = rayon::ThreadPoolBuilder::new().num_threads(n).build_global() {
            eprintln!("error: cannot start {n} workers: {e}");
            return ExitCode::from(2);
        }
    }
    match run(cli.command) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(if e.is_io_or_config() { 2 } else { 1 })
        }
    }
}

fn run(command: Command) -> Result<()> {
    match command {
        Command::Tte(a) => tte(a),
        Command::Impute(a) => impute(a),
        Command::Exposure(a) => exposure(a),
        Command::Fit(a) => fit(a),
        Command::Simulate(a) => simulate_cmd(a),
        Command::Oracle(a) => oracle(a),
        Command::Pipeline(a) => pipeline(a),
    }
}

fn out_dir(dir: &Path) -> Result<()> {
    std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))
}

fn tte(a: TteArgs) -> Result<()> {
    let dates = DateParser::default();
    let window = FollowUpWindow::parse(&a.window, &dates)?;
    let arms = ArmAssignment::read_csv(&a.arms)?;
    let (records, mut exclusions) = read_residence_csv(&a.residence, &dates)?;
    let infections = read_infections_csv(&a.infections, &dates)?;
    out_dir(&a.out)?;
    let cleaned = clean_residence(&records);
    exclusions.extend(cleaned.exclusions.iter().cloned());
    let obs = derive_cohort(&cleaned.cleaned, &exclusions, &infections, &window, &arms);
    write_residence_csv(a.out.join("residence_clean.csv"), &cleaned.cleaned, &dates)?;
    write_observations_csv(a.out.join("observations.csv"), &obs)?;
    write_cohort_summary(&a.out.join("cohort_summary.csv"), &obs, &arms)?;
    let s = summarize_cohort(&obs, &arms);
    for (rule, n) in &cleaned.rule_counts {
        println!("rule {rule}: {n} records");
    }
    println!("excluded: {}", obs.iter().filter(|o| !o.is_included()).count());
    println!("treated: {}", s.treated);
    println!("control: {}", s.control);
    println!("total: {}", s.total());
    Ok(())
}

fn impute(a: ImputeArgs) -> Result<()> {
    let spec = ImputationSpec::new(a.m, a.seed)?;
    let reports = read_contacts_csv(&a.contacts)?;
    let covariates = match &a.covariates {
        Some(p) => read_covariates_csv(p)?,
        None => BTreeMap::new(),
    };
    out_dir(&a.out)?;
    let result = run_imputation(&reports, &covariates, &spec)?;
    let width = a.m.to_string().len().max(2);
    for (k, d) in result.datasets.iter().enumerate() {
        write_contacts_csv(a.out.join(format!("contacts_imp{:0width$}.csv", k + 1)), d)?;
    }
    result.write_metadata_jsonl(a.out.join("imputation_fits.jsonl"))?;
    println!("wrote {} imputed datasets to {}", a.m, a.out.display());
    Ok(())
}

fn exposure(a: ExposureArgs) -> Result<()> {
    let arms = ArmAssignment::read_csv(&a.arms)?;
    let opts = ExposureOptions {
        filter: WindowFilter {
            day_offset: a.day_offset,
            stratum: a.stratum.parse::<Stratum>()?,
        },
        both: if a.half_split { BothHandling::HalfSplit } else { BothHandling::WholeCount },
    };
    let datasets = a.contacts.iter().map(read_contacts_csv).collect::<Result<Vec<_>>>()?;
    out_dir(&a.out)?;
    let tables = datasets
        .iter()
        .map(|d| exposure_from_reports(d, &arms, &opts))
        .collect::<Result<Vec<ExposureTable>>>()?;
    if tables.len() == 1 {
        tables[0].write_csv(a.out.join("exposure.csv"))?;
    } else {
        let width = tables.len().to_string().len().max(2);
        for (k, t) in tables.iter().enumerate() {
            t.write_csv(a.out.join(format!("exposure_imp{:0width$}.csv", k + 1)))?;
        }
    }
    let pooled = pool_exposures(&tables)?;
    write_pooled_exposure_csv(a.out.join("exposure_pooled.csv"), &pooled)?;
    println!("cluster,arm,exposure,se");
    for r in &pooled {
        println!("{},{},{:.4},{:.4}", r.cluster, r.arm, r.exposure, r.total_var.sqrt());
    }
    Ok(())
}

fn fit(a: FitArgs) -> Result<()> {
    let estimator: Estimator = a.estimator.parse()?;
    let obs = read_observations_csv(&a.observations)?;
    let tables = read_exposure_tables(&a.exposure)?;
    out_dir(&a.out)?;
    let req = FitRequest {
        estimator,
        max_time: a.max_time,
        horizon: a.horizon,
        jitter_seed: a.seed,
        analysis: a.analysis,
    };
    let result = fit_estimators(&obs, &tables, &req)?;
    result.write(&a.out, !a.no_svg)?;
    println!("horizon: {} days", result.horizon);
    for row in &result.summary {
        println!(
            "{}: {:.2} [{:.2}, {:.2}]",
            row.estimator, row.estimate_pct_points, row.ci_low, row.ci_high
        );
    }
    Ok(())
}

fn simulate_cmd(a: SimulateArgs) -> Result<()> {
    let mut params = match &a.scenario {
        Some(p) => load_sim_config(p)?,
        None => Scenario::default().params(a.seed)?,
    };
    params.seed = a.seed;
    out_dir(&a.out)?;
    let sim = simulate(&params)?;
    sim.write_trajectories_csv(a.out.join("trajectories.csv"))?;
    sim.write_truth_csv(a.out.join("truth.csv"))?;
    params.arms().write_csv(a.out.join("arms.csv"))?;
    params.true_exposures().write_csv(a.out.join("exposure.csv"))?;
    if sim.infection_times.is_some() {
        let obs = sim.observations()?;
        write_observations_csv(a.out.join("observations.csv"), &obs)?;
        println!("infections: {}", obs.iter().filter(|o| o.event).count());
    }
    println!(
        "true effect over {} days: {:.4} pct points",
        params.horizon,
        100.0 * sim.true_estimand(params.horizon)?
    );
    Ok(())
}

fn oracle(a: OracleArgs) -> Result<()> {
    let mut scenario = match &a.scenario {
        Some(p) => {
            let text = std::fs::read_to_string(p).map_err(|e| Error::io(p, e))?;
            Scenario::from_toml_str(&text)?
        }
        None => Scenario::default(),
    };
    scenario.seed = a.seed;
    if let Some(r) = a.replicates {
        scenario.replicates = r;
    }
    out_dir(&a.out)?;
    let report = oracle_study(&scenario)?;
    report.write_csv(a.out.join("oracle_report.csv"))?;
    report.write_summary(a.out.join("oracle_summary.txt"))?;
    print!("{report}");
    Ok(())
}

fn pipeline(a: PipelineArgs) -> Result<()> {
    let mut cfg = RunConfig::load(&a.config)?;
    if let Some(out) = a.out {
        cfg.out = out;
    }
    if let Some(seed) = a.seed {
        cfg.seed = seed;
    }
    let manifest = run_pipeline(&cfg)?;
    for row in &manifest.summary {
        println!(
            "{} {}: {:.2} [{:.2}, {:.2}]",
            row.analysis, row.estimator, row.estimate_pct_points, row.ci_low, row.ci_high
        );
    }
    println!("artifacts in {}", cfg.out.display());
    Ok(())
}
