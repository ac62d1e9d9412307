//! Command-line front end: synthetic cohort generation, online runs,
//! windowed error tables and permutation p-values, all emitted as
//! plot-ready CSV. Every command is deterministic given its flags and
//! seed, independent of `--threads`.

use std::path::PathBuf;

use anyhow::{anyhow, bail, Context};
use clap::{Args, Parser, Subcommand};

use brier_aa::aggregation::run_online;
use brier_aa::cohort::{load_cohort, write_cohort, Cohort};
use brier_aa::experts::{build_pool, power_law_prior};
use brier_aa::game::OutcomeSpace;
use brier_aa::stats::{
    pool_events, window_sweep, write_error_fraction_csv, write_pvalue_csv, write_table_csv,
    GridSpec, SweepConfig,
};
use brier_aa::synth::{generate, SynthConfig};

#[derive(Parser)]
#[command(
    name = "brier-aa",
    version,
    about = "Aggregating-algorithm forecasting over case/control triplets"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Generate a synthetic cohort and write it as CSV.
    Synth(SynthArgs),
    /// Online run over a cohort: per-step cumulative loss of every expert
    /// relative to the aggregator.
    Run(RunArgs),
    /// Windowed error table (with p-values) and error fractions.
    Windows(SweepArgs),
    /// Log p-values per window and method.
    Pvalues(SweepArgs),
}

#[derive(Args)]
struct SynthParams {
    /// Number of triplets to generate.
    #[arg(long, default_value_t = 179)]
    triplets: usize,
    /// Number of peak intensity columns.
    #[arg(long, default_value_t = 67)]
    peaks: u16,
    /// Planted log-scale case shift at time to diagnosis 0.
    #[arg(long, default_value_t = 1.8)]
    signal_strength: f64,
    /// Months at which the planted signal has decayed to zero.
    #[arg(long, default_value_t = 15.0)]
    signal_horizon: f64,
    /// Comma-separated 1-based peak indices carrying the signal.
    #[arg(long, default_value = "2,3,7")]
    informative_peaks: String,
}

impl SynthParams {
    fn config(&self, seed: u64) -> anyhow::Result<SynthConfig> {
        Ok(SynthConfig {
            n_triplets: self.triplets,
            n_peaks: self.peaks,
            signal_strength: self.signal_strength,
            signal_horizon: self.signal_horizon,
            informative_peaks: parse_list::<u16>(&self.informative_peaks)
                .context("bad --informative-peaks")?,
            seed,
        })
    }
}

#[derive(Args)]
struct SynthArgs {
    /// Output CSV path.
    #[arg(long, default_value = "cohort.csv")]
    out: PathBuf,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[command(flatten)]
    params: SynthParams,
}

#[derive(Args)]
#[group(required = true, multiple = false)]
struct Source {
    /// Cohort CSV to analyze.
    #[arg(long)]
    input: Option<PathBuf>,
    /// Generate a synthetic cohort in memory instead of reading a file.
    #[arg(long)]
    synth: bool,
}

#[derive(Args)]
struct RunArgs {
    #[command(flatten)]
    source: Source,
    #[command(flatten)]
    params: SynthParams,
    /// Seed for synthetic generation.
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Learning rate of the aggregator.
    #[arg(long, default_value_t = 1.0)]
    eta: f64,
    /// Initial weights: `uniform` or `power:<d>`.
    #[arg(long, default_value = "uniform")]
    prior: String,
    /// Emit strict (maximum-rule) predictions.
    #[arg(long)]
    categorical: bool,
    /// Worker threads (0 = all cores); results do not depend on it.
    #[arg(long, default_value_t = 0)]
    threads: usize,
    #[arg(long, default_value = ".")]
    out_dir: PathBuf,
}

#[derive(Args)]
struct SweepArgs {
    #[command(flatten)]
    source: Source,
    #[command(flatten)]
    params: SynthParams,
    /// Seed for synthetic generation and the Monte-Carlo trials.
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Learning rate of the fixed-parameter aggregator column.
    #[arg(long, default_value_t = 0.65)]
    eta: f64,
    /// Initial weights: `uniform` or `power:<d>`.
    #[arg(long, default_value = "power:1.2")]
    prior: String,
    /// First window start (months before diagnosis).
    #[arg(long, default_value_t = 0)]
    t_start: u32,
    /// Last window start, inclusive.
    #[arg(long, default_value_t = 16)]
    t_end: u32,
    /// Window width in months.
    #[arg(long, default_value_t = 6.0)]
    theta: f64,
    /// Grid of d values: comma list (`1.1,1.4`) or range (`1.1:2.0:0.1`).
    #[arg(long, default_value = "1.1:2.0:0.1")]
    grid_d: String,
    /// Grid of eta values, same syntax.
    #[arg(long, default_value = "0.1:1.0:0.05")]
    grid_eta: String,
    /// Monte-Carlo trials per window.
    #[arg(long, default_value_t = 10_000)]
    trials: usize,
    /// Include each window's right boundary (`[t, t+theta]`).
    #[arg(long)]
    closed_right: bool,
    /// Worker threads (0 = all cores); results do not depend on it.
    #[arg(long, default_value_t = 0)]
    threads: usize,
    #[arg(long, default_value = ".")]
    out_dir: PathBuf,
}

fn parse_list<T: std::str::FromStr>(text: &str) -> anyhow::Result<Vec<T>> {
    text.split(',')
        .map(|part| part.trim())
        .filter(|part| !part.is_empty())
        .map(|part| {
            part.parse::<T>()
                .map_err(|_| anyhow!("cannot parse {part:?}"))
        })
        .collect()
}

/// Grid values from either a comma list or an inclusive `start:stop:step`
/// range.
fn parse_grid_values(text: &str) -> anyhow::Result<Vec<f64>> {
    let parts: Vec<&str> = text.split(':').collect();
    match parts.len() {
        1 => parse_list::<f64>(text),
        3 => {
            let start: f64 = parts[0].parse().map_err(|_| anyhow!("bad range start"))?;
            let stop: f64 = parts[1].parse().map_err(|_| anyhow!("bad range stop"))?;
            let step: f64 = parts[2].parse().map_err(|_| anyhow!("bad range step"))?;
            if !step.is_finite() || step <= 0.0 || stop < start {
                bail!("range must satisfy start <= stop and step > 0");
            }
            let count = ((stop - start) / step + 1e-9).floor() as usize;
            Ok((0..=count).map(|i| start + i as f64 * step).collect())
        }
        _ => bail!("expected a comma list or start:stop:step, got {text:?}"),
    }
}

enum Prior {
    Uniform,
    Power(f64),
}

fn parse_prior(text: &str) -> anyhow::Result<Prior> {
    if text == "uniform" {
        return Ok(Prior::Uniform);
    }
    if let Some(d) = text.strip_prefix("power:") {
        let d: f64 = d
            .parse()
            .map_err(|_| anyhow!("bad power-law coefficient {d:?}"))?;
        return Ok(Prior::Power(d));
    }
    bail!("prior must be `uniform` or `power:<d>`, got {text:?}")
}

fn load_source(source: &Source, params: &SynthParams, seed: u64) -> anyhow::Result<Cohort> {
    if let Some(path) = &source.input {
        let cohort = load_cohort(path).with_context(|| format!("loading {}", path.display()))?;
        Ok(cohort.floor_zero_peaks()?)
    } else {
        Ok(generate(&params.config(seed)?)?)
    }
}

fn in_thread_pool<T: Send>(
    threads: usize,
    body: impl FnOnce() -> anyhow::Result<T> + Send,
) -> anyhow::Result<T> {
    if threads == 0 {
        return body();
    }
    rayon::ThreadPoolBuilder::new()
        .num_threads(threads)
        .build()
        .context("building thread pool")?
        .install(body)
}

fn cmd_synth(args: &SynthArgs) -> anyhow::Result<()> {
    let cohort = generate(&args.params.config(args.seed)?)?;
    if let Some(dir) = args.out.parent().filter(|d| !d.as_os_str().is_empty()) {
        std::fs::create_dir_all(dir)?;
    }
    write_cohort(&cohort, &args.out)?;
    println!(
        "wrote {} ({} triplets, {} peaks)",
        args.out.display(),
        cohort.len(),
        cohort.n_peaks()
    );
    Ok(())
}

fn cmd_run(args: &RunArgs) -> anyhow::Result<()> {
    let cohort = load_source(&args.source, &args.params, args.seed)?;
    let pool = build_pool(cohort.n_peaks() as u16)?;
    let prior = match parse_prior(&args.prior)? {
        Prior::Uniform => vec![1.0; pool.len()],
        Prior::Power(d) => power_law_prior(&pool, d)?,
    };
    let ordered = cohort.order_chronological();
    let events = pool_events(&ordered, &pool)?;
    let records = run_online(
        OutcomeSpace::triplet(),
        &prior,
        args.eta,
        &events,
        args.categorical,
    )?;

    std::fs::create_dir_all(&args.out_dir)?;
    let path = args.out_dir.join("losses.csv");
    let mut writer = csv::Writer::from_path(&path)?;
    let mut header = vec![
        "step".to_string(),
        "triplet_id".to_string(),
        "aa".to_string(),
    ];
    header.extend(pool.iter().map(|e| e.to_string()));
    writer.write_record(&header)?;

    let mut learner_cum = 0.0;
    let mut expert_cum = vec![0.0f64; pool.len()];
    for (step, (record, triplet)) in records.iter().zip(&ordered).enumerate() {
        learner_cum += record.learner_loss;
        let mut row = vec![
            format!("{}", step + 1),
            triplet.id().to_string(),
            "0".to_string(),
        ];
        for (cum, loss) in expert_cum.iter_mut().zip(&record.expert_losses) {
            *cum += loss;
            row.push(format!("{}", *cum - learner_cum));
        }
        writer.write_record(&row)?;
    }
    writer.flush()?;
    println!(
        "wrote {} ({} steps, {} experts)",
        path.display(),
        records.len(),
        pool.len()
    );
    Ok(())
}

fn sweep_rows(args: &SweepArgs) -> anyhow::Result<Vec<brier_aa::stats::WindowRow>> {
    if args.t_end < args.t_start {
        bail!("--t-end must be >= --t-start");
    }
    let cohort = load_source(&args.source, &args.params, args.seed)?;
    let pool = build_pool(cohort.n_peaks() as u16)?;
    let d = match parse_prior(&args.prior)? {
        Prior::Uniform => 1.0,
        Prior::Power(d) => d,
    };
    let grid = GridSpec::new(
        parse_grid_values(&args.grid_d).context("bad --grid-d")?,
        parse_grid_values(&args.grid_eta).context("bad --grid-eta")?,
    )?;
    let config = SweepConfig {
        d,
        eta: args.eta,
        grid,
        n_trials: args.trials,
        seed: args.seed,
        closed_right: args.closed_right,
    };
    let t_values: Vec<f64> = (args.t_start..=args.t_end).map(f64::from).collect();
    in_thread_pool(args.threads, || {
        Ok(window_sweep(
            &cohort, &t_values, args.theta, &pool, &config,
        )?)
    })
}

fn cmd_windows(args: &SweepArgs) -> anyhow::Result<()> {
    let rows = sweep_rows(args)?;
    std::fs::create_dir_all(&args.out_dir)?;
    let table = args.out_dir.join("table.csv");
    write_table_csv(&rows, &table)?;
    let fractions = args.out_dir.join("error_fractions.csv");
    write_error_fraction_csv(&rows, &fractions)?;
    println!("wrote {} and {}", table.display(), fractions.display());
    Ok(())
}

fn cmd_pvalues(args: &SweepArgs) -> anyhow::Result<()> {
    let rows = sweep_rows(args)?;
    std::fs::create_dir_all(&args.out_dir)?;
    let path = args.out_dir.join("pvalues.csv");
    write_pvalue_csv(&rows, &path)?;
    println!("wrote {}", path.display());
    Ok(())
}

fn main() {
    let cli = Cli::parse();
    let result = match &cli.command {
        Command::Synth(args) => cmd_synth(args),
        Command::Run(args) => cmd_run(args),
        Command::Windows(args) => cmd_windows(args),
        Command::Pvalues(args) => cmd_pvalues(args),
    };
    if let Err(err) = result {
        eprintln!("error: {err:#}");
        std::process::exit(1);
    }
}
