//! Command-line front end. Each subcommand wraps one library entry point.

use std::fs::File;
use std::io::{self, BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use chrono::{DateTime, FixedOffset};
use clap::{Args, Parser, Subcommand};
use serde::{Deserialize, Serialize};

use nolr::eval::{nolr_model, tune_lengths, week_ranges, weekly_report, Candidates};
use nolr::ingest::{discretize, grid_stats, parse_events, write_events, SECONDS_PER_HOUR};
use nolr::matrixize::build_dataset;
use nolr::synth::generate;
use nolr::{
    BenchmarkConfig, DerivativeMode, ExecMode, Model, OccupancyGrid, SynthConfig, TrainConfig,
    WindowPolicy,
};

#[derive(Parser)]
#[command(
    name = "nolr",
    version,
    about = "EV charging-station occupancy prediction from neighboring stations"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Generate a calibrated synthetic event log.
    Synth(SynthArgs),
    /// Discretize an event log into an hourly occupancy grid.
    Grid(GridArgs),
    /// Score NOLR against the baseline models week by week.
    Benchmark(BenchmarkArgs),
    /// Search the per-segment training window lengths.
    Tune(TuneArgs),
    /// Train one model and dump its per-neighbor weights.
    Weights(WeightsArgs),
}

#[derive(Args)]
struct SynthArgs {
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long, default_value_t = 57)]
    stations: usize,
    #[arg(long, default_value_t = 10)]
    weeks: usize,
    /// Target fraction of occupied station-hours.
    #[arg(long, default_value_t = 0.1073)]
    occupancy: f64,
    /// Mean session length in minutes.
    #[arg(long, default_value_t = 216.0)]
    mean_minutes: f64,
    /// Arrival-rate multiplier for 08:00–17:00.
    #[arg(long, default_value_t = 6.0)]
    multiplier: f64,
    /// Cross-station coupling in [0, 1].
    #[arg(long, default_value_t = 0.5)]
    coupling: f64,
    #[arg(long, default_value_t = 4)]
    group_size: usize,
    #[arg(long, default_value_t = 7)]
    regroup_days: usize,
    /// Probability that a session recurs on the next day.
    #[arg(long, default_value_t = 0.9)]
    habit: f64,
    /// First hour of the timeline (RFC 3339).
    #[arg(long, value_parser = parse_time, default_value = "2020-01-06T00:00:00Z")]
    origin: DateTime<FixedOffset>,
    /// Event CSV output; `-` for stdout.
    #[arg(long)]
    out: PathBuf,
    /// Also write the discretized grid here.
    #[arg(long)]
    grid_out: Option<PathBuf>,
}

#[derive(Args)]
struct GridArgs {
    /// Event CSV with header `station_id,plug_time,unplug_time`.
    #[arg(long)]
    events: PathBuf,
    /// First hour of the grid (RFC 3339, on an hour boundary).
    #[arg(long, value_parser = parse_time, default_value = "2020-01-06T00:00:00Z")]
    origin: DateTime<FixedOffset>,
    /// Grid length in hours; defaults to the span up to the last unplug.
    #[arg(long)]
    hours: Option<usize>,
    /// Column order; defaults to the sorted station ids found in the events.
    #[arg(long, value_delimiter = ',')]
    stations: Option<Vec<String>>,
    /// Grid CSV output; `-` for stdout.
    #[arg(long)]
    out: PathBuf,
    /// Write occupancy statistics as JSON here.
    #[arg(long)]
    stats: Option<PathBuf>,
}

#[derive(Args)]
struct GridInput {
    /// Grid CSV with header `hour_index,<station ids>`.
    #[arg(long)]
    grid: PathBuf,
    /// Timestamp of hour index 0 (RFC 3339).
    #[arg(long, value_parser = parse_time, default_value = "2020-01-06T00:00:00Z")]
    origin: DateTime<FixedOffset>,
    /// Station to predict.
    #[arg(long)]
    target: String,
}

#[derive(Args)]
struct PolicyArgs {
    /// TOML file holding the window policy; flags override its keys.
    #[arg(long)]
    policy: Option<PathBuf>,
    #[arg(long, value_delimiter = ',')]
    boundaries: Option<Vec<usize>>,
    #[arg(long, value_delimiter = ',')]
    offsets: Option<Vec<usize>>,
    #[arg(long, value_delimiter = ',')]
    lengths: Option<Vec<usize>>,
}

#[derive(Debug, Default, Deserialize, Serialize)]
#[serde(deny_unknown_fields)]
struct PolicyFile {
    boundaries: Option<Vec<usize>>,
    offsets: Option<Vec<usize>>,
    lengths: Option<Vec<usize>>,
}

#[derive(Args)]
struct TrainArgs {
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long, default_value_t = 1000)]
    max_iterations: usize,
    /// Stop once the residual norm changes by less than this between passes.
    #[arg(long, default_value_t = 1e-6)]
    tolerance: f64,
    /// `literal` applies the sigmoid derivative to the predicted probability, `textbook` uses ŷ(1−ŷ).
    #[arg(long, default_value = "literal")]
    derivative: DerivativeMode,
}

#[derive(Args)]
struct BenchmarkArgs {
    #[command(flatten)]
    input: GridInput,
    /// 1-based inclusive week range, e.g. `5..10`.
    #[arg(long, default_value = "5..10")]
    test_weeks: String,
    #[arg(long, value_delimiter = ',', default_value = "nolr,persistence,logreg")]
    models: Vec<Model>,
    /// Fixed training hours `lo..hi` of the traditional model; defaults to
    /// the four weeks before the first test week.
    #[arg(long)]
    logreg_train: Option<String>,
    #[command(flatten)]
    policy: PolicyArgs,
    #[command(flatten)]
    train: TrainArgs,
    /// Evaluate test points sequentially.
    #[arg(long)]
    serial: bool,
    /// JSON report output; `-` for stdout.
    #[arg(long)]
    out: PathBuf,
    /// Per-model summary CSV.
    #[arg(long)]
    csv: Option<PathBuf>,
    /// Long-format `week_index,model,accuracy` CSV for plotting.
    #[arg(long)]
    plot: Option<PathBuf>,
}

#[derive(Args)]
struct TuneArgs {
    #[command(flatten)]
    input: GridInput,
    /// Validation hours `lo..hi`, half-open.
    #[arg(long)]
    range: String,
    /// Step between candidate lengths in 1..=24.
    #[arg(long, default_value_t = 1)]
    stride: usize,
    /// Explicit candidates instead of the full sweep, e.g. `10,12,1;8,8,2`.
    #[arg(long)]
    candidates: Option<String>,
    #[command(flatten)]
    policy: PolicyArgs,
    #[command(flatten)]
    train: TrainArgs,
    #[arg(long)]
    serial: bool,
    /// JSON output; `-` for stdout.
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct WeightsArgs {
    #[command(flatten)]
    input: GridInput,
    /// Train the NOLR model of this test hour.
    #[arg(long, conflicts_with = "range", required_unless_present = "range")]
    at: Option<usize>,
    /// Train on the hours `lo..hi` instead.
    #[arg(long)]
    range: Option<String>,
    #[command(flatten)]
    policy: PolicyArgs,
    #[command(flatten)]
    train: TrainArgs,
    /// Weight CSV output; `-` for stdout.
    #[arg(long)]
    out: PathBuf,
}

fn main() -> Result<()> {
    match Cli::parse().command {
        Command::Synth(args) => synth(args),
        Command::Grid(args) => grid(args),
        Command::Benchmark(args) => benchmark(args),
        Command::Tune(args) => tune(args),
        Command::Weights(args) => weights(args),
    }
}

fn parse_time(s: &str) -> std::result::Result<DateTime<FixedOffset>, String> {
    DateTime::parse_from_rfc3339(s).map_err(|e| format!("invalid RFC 3339 timestamp {s:?}: {e}"))
}

/// Parses `a..b` into a pair of integers.
fn parse_range(s: &str) -> Result<(usize, usize)> {
    let (lo, hi) = s
        .split_once("..")
        .with_context(|| format!("expected a range like 5..10, got {s:?}"))?;
    Ok((
        lo.trim()
            .parse()
            .with_context(|| format!("bad range start in {s:?}"))?,
        hi.trim()
            .parse()
            .with_context(|| format!("bad range end in {s:?}"))?,
    ))
}

fn parse_candidates(s: &str) -> Result<Vec<Vec<usize>>> {
    s.split(';')
        .filter(|c| !c.trim().is_empty())
        .map(|c| {
            c.split(',')
                .map(|n| {
                    n.trim()
                        .parse()
                        .with_context(|| format!("bad candidate {c:?}"))
                })
                .collect()
        })
        .collect()
}

fn create(path: &Path) -> Result<Box<dyn Write>> {
    if path.as_os_str() == "-" {
        return Ok(Box::new(io::stdout().lock()));
    }
    let file = File::create(path).with_context(|| format!("cannot create {}", path.display()))?;
    Ok(Box::new(BufWriter::new(file)))
}

fn open(path: &Path) -> Result<BufReader<File>> {
    let file = File::open(path).with_context(|| format!("cannot open {}", path.display()))?;
    Ok(BufReader::new(file))
}

fn write_text(path: &Path, text: &str) -> Result<()> {
    let mut out = create(path)?;
    out.write_all(text.as_bytes())?;
    out.flush()?;
    Ok(())
}

impl GridInput {
    fn load(&self) -> Result<OccupancyGrid> {
        let grid = OccupancyGrid::read_csv(open(&self.grid)?, self.origin)
            .with_context(|| format!("cannot read grid {}", self.grid.display()))?;
        if grid.station_index(&self.target).is_none() {
            bail!(
                "target {:?} is not a column of {}",
                self.target,
                self.grid.display()
            );
        }
        Ok(grid)
    }
}

impl PolicyArgs {
    fn resolve(&self) -> Result<WindowPolicy> {
        let file = match &self.policy {
            Some(path) => {
                let text = std::fs::read_to_string(path)
                    .with_context(|| format!("cannot read {}", path.display()))?;
                toml::from_str::<PolicyFile>(&text)
                    .with_context(|| format!("invalid policy file {}", path.display()))?
            }
            None => PolicyFile::default(),
        };
        let default = WindowPolicy::default();
        let pick = |flag: &Option<Vec<usize>>, key: Option<Vec<usize>>, fallback: Vec<usize>| {
            flag.clone().or(key).unwrap_or(fallback)
        };
        Ok(WindowPolicy::new(
            pick(&self.boundaries, file.boundaries, default.boundaries),
            pick(&self.offsets, file.offsets, default.offsets),
            pick(&self.lengths, file.lengths, default.lengths),
        )?)
    }
}

impl TrainArgs {
    fn config(&self) -> Result<TrainConfig> {
        let config = TrainConfig {
            max_iterations: self.max_iterations,
            error_tolerance: self.tolerance,
            rng_seed: self.seed,
            derivative_mode: self.derivative,
        };
        config.validate()?;
        Ok(config)
    }
}

fn exec_mode(serial: bool) -> ExecMode {
    if serial {
        ExecMode::Serial
    } else {
        ExecMode::Parallel
    }
}

fn synth(args: SynthArgs) -> Result<()> {
    let config = SynthConfig {
        n_stations: args.stations,
        weeks: args.weeks,
        rng_seed: args.seed,
        target_occupancy: args.occupancy,
        mean_session_minutes: args.mean_minutes,
        workhour_arrival_multiplier: args.multiplier,
        neighbor_coupling: args.coupling,
        group_size: args.group_size,
        regroup_days: args.regroup_days,
        habit: args.habit,
        origin: args.origin,
    };
    let events = generate(&config)?;
    let mut out = create(&args.out)?;
    write_events(&events, &mut out)?;
    out.flush()?;

    let grid = discretize(
        &events,
        config.origin,
        config.hours(),
        &config.station_ids(),
    )?;
    if let Some(path) = &args.grid_out {
        let mut out = create(path)?;
        grid.write_csv(&mut out)?;
        out.flush()?;
    }
    let stats = grid_stats(&grid);
    let mean_minutes = events
        .iter()
        .map(|e| e.duration_seconds() as f64)
        .sum::<f64>()
        / events.len().max(1) as f64
        / 60.0;
    eprintln!(
        "{} events, occupancy {:.4}, mean session {:.1} min",
        events.len(),
        stats.occupancy_rate,
        mean_minutes
    );
    Ok(())
}

fn grid(args: GridArgs) -> Result<()> {
    let events = parse_events(open(&args.events)?)
        .with_context(|| format!("cannot parse {}", args.events.display()))?;
    let stations = match args.stations {
        Some(ids) => ids,
        None => {
            let mut ids: Vec<String> = events.iter().map(|e| e.station_id.clone()).collect();
            ids.sort();
            ids.dedup();
            ids
        }
    };
    let hours = match args.hours {
        Some(h) => h,
        None => {
            let last = events
                .iter()
                .map(|e| e.unplug_time.timestamp())
                .max()
                .context("no events and no --hours given")?;
            let span = last - args.origin.timestamp();
            if span <= 0 {
                bail!("every event ends before the origin {}", args.origin);
            }
            span.div_euclid(SECONDS_PER_HOUR) as usize + usize::from(span % SECONDS_PER_HOUR != 0)
        }
    };
    let grid = discretize(&events, args.origin, hours, &stations)?;
    let mut out = create(&args.out)?;
    grid.write_csv(&mut out)?;
    out.flush()?;

    let stats = serde_json::to_string_pretty(&grid_stats(&grid))? + "\n";
    match &args.stats {
        Some(path) => write_text(path, &stats)?,
        None => eprint!("{stats}"),
    }
    Ok(())
}

fn benchmark(args: BenchmarkArgs) -> Result<()> {
    let grid = args.input.load()?;
    let (first, last) = parse_range(&args.test_weeks)?;
    let weeks = week_ranges(first, last)?;
    let config = BenchmarkConfig {
        models: args.models,
        policy: args.policy.resolve()?,
        train: args.train.config()?,
        logreg_train_range: args.logreg_train.as_deref().map(parse_range).transpose()?,
        mode: exec_mode(args.serial),
    };
    let report = weekly_report(&grid, &args.input.target, &weeks, &config)?;
    write_text(&args.out, &report.to_json()?)?;
    if let Some(path) = &args.csv {
        let mut out = create(path)?;
        report.write_csv(&mut out)?;
        out.flush()?;
    }
    if let Some(path) = &args.plot {
        let mut out = create(path)?;
        report.write_plot_data(&mut out)?;
        out.flush()?;
    }
    for (name, model) in &report.models {
        eprintln!(
            "{name:>12}: {:.4} ({} skipped)",
            model.average, model.skipped
        );
    }
    Ok(())
}

#[derive(Serialize)]
struct TuneOutput<'a> {
    target: &'a str,
    range: (usize, usize),
    boundaries: &'a [usize],
    offsets: &'a [usize],
    lengths: &'a [usize],
    accuracy: f64,
    scored: usize,
    evaluated: usize,
}

fn tune(args: TuneArgs) -> Result<()> {
    let grid = args.input.load()?;
    let (lo, hi) = parse_range(&args.range)?;
    let policy = args.policy.resolve()?;
    let candidates = match &args.candidates {
        Some(list) => Candidates::List(parse_candidates(list)?),
        None => Candidates::full(policy.segments(), args.stride),
    };
    let result = tune_lengths(
        &grid,
        &args.input.target,
        lo,
        hi,
        &policy,
        &args.train.config()?,
        &candidates,
        exec_mode(args.serial),
    )?;
    let output = TuneOutput {
        target: &args.input.target,
        range: (lo, hi),
        boundaries: &policy.boundaries,
        offsets: &policy.offsets,
        lengths: &result.lengths,
        accuracy: result.accuracy,
        scored: result.scored,
        evaluated: result.evaluated,
    };
    write_text(&args.out, &(serde_json::to_string_pretty(&output)? + "\n"))?;
    eprintln!("best lengths {:?}: {:.4}", result.lengths, result.accuracy);
    Ok(())
}

fn weights(args: WeightsArgs) -> Result<()> {
    let grid = args.input.load()?;
    let config = args.train.config()?;
    let target = &args.input.target;
    let (dataset, weights) = match (args.at, &args.range) {
        (Some(hour), _) => {
            if hour >= grid.hours() {
                bail!("hour {hour} is outside the {}-hour grid", grid.hours());
            }
            nolr_model(&grid, target, hour, &args.policy.resolve()?, &config)?.with_context(
                || format!("the training window of hour {hour} starts before the grid"),
            )?
        }
        (None, Some(range)) => {
            let (lo, hi) = parse_range(range)?;
            let dataset = build_dataset(&grid, target, lo, hi)?;
            let weights = nolr::logreg::train(dataset.x.view(), dataset.y.view(), &config)?;
            (dataset, weights)
        }
        (None, None) => bail!("give --at or --range"),
    };
    let mut out = create(&args.out)?;
    weights.write_csv(&dataset.columns, &mut out)?;
    out.flush()?;
    eprintln!(
        "trained on hours {:?}: {} passes, final error norm {:.6}",
        dataset.hours.first().zip(dataset.hours.last()),
        weights.iterations_run,
        weights.final_error_norm
    );
    Ok(())
}
