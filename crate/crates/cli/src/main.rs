use clap::{Args, Parser, Subcommand, ValueEnum};
use std::fs::File;
use std::io::{self, BufRead, BufReader, BufWriter, Read, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;
use tailfit_core::binning::{self, sparse_counts, write_histogram_rows, BinGrid, MAX_DENSE_BINS};
use tailfit_core::estimation::{
    bootstrap_pvalue, bootstrap_pvalue_binned, compare_families_with, fit_binned_data, fit_lognormal_with, fit_powerlaw_tail,
    render_csv, render_markdown, BinnedData, BinnedFitOptions, LognormalFitOptions, PowerLawFitOptions, Table3Row,
    DEFAULT_VERDICT_THRESHOLD,
};
use tailfit_core::ingestion::{self, Direction};
use tailfit_core::synthesis::{self, run_gibrat};
use tailfit_core::{DurationSample, Error, Family, GibratProcess, LognormalModel, PowerLawModel, Result, SeededGenerator};

#[derive(Parser)]
#[command(name = "tailfit", version, about = "Fit, compare and simulate power-law and lognormal inter-event times")]
struct Cli {
    /// Worker threads for the data-parallel kernels.
    #[arg(long, global = true, env = "TAILFIT_THREADS")]
    threads: Option<usize>,

    /// Output format: durations as text (csv), JSON lines or TFD1 binary; tables as CSV.
    #[arg(long, global = true, value_enum)]
    format: Option<Format>,

    #[command(subcommand)]
    command: Command,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
enum Format {
    Csv,
    Jsonl,
    Bin,
}

#[derive(Subcommand)]
enum Command {
    /// Draw a synthetic sample.
    Simulate {
        #[command(subcommand)]
        process: Process,
    },
    /// Histogram a duration list.
    Bin(BinArgs),
    /// Fit one or both families and write a table row as JSON.
    Fit(FitArgs),
    /// Likelihood-ratio comparison of the two families on a common tail.
    Compare(CompareArgs),
    /// Turn an `actor,timestamp[,direction]` event log into inter-event durations.
    Ingest(IngestArgs),
    /// Render fit rows as a table.
    Report(ReportArgs),
}

#[derive(Args)]
struct SimOut {
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(short, long)]
    output: Option<PathBuf>,
}

#[derive(Subcommand)]
enum Process {
    Lognormal {
        #[arg(long)]
        mu: f64,
        #[arg(long)]
        sigma: f64,
        #[arg(short = 'n', long)]
        n: usize,
        #[command(flatten)]
        out: SimOut,
    },
    Powerlaw {
        #[arg(long)]
        gamma: f64,
        #[arg(long)]
        tau: f64,
        #[arg(short = 'n', long)]
        n: usize,
        #[command(flatten)]
        out: SimOut,
    },
    /// τ·e^Y with Y exponential of rate γ−1.
    ExpExp {
        #[arg(long)]
        gamma: f64,
        #[arg(long)]
        tau: f64,
        #[arg(short = 'n', long)]
        n: usize,
        #[command(flatten)]
        out: SimOut,
    },
    /// Multiplicative growth with normal log-factors; writes `agent,step,size`.
    Gibrat {
        #[arg(long, default_value_t = 1.0)]
        s0: f64,
        #[arg(long)]
        steps: usize,
        #[arg(long)]
        agents: usize,
        #[arg(long, default_value_t = 0.0)]
        xi_mean: f64,
        #[arg(long)]
        xi_std: f64,
        /// Emit only the final sizes, as a duration list.
        #[arg(long)]
        final_only: bool,
        #[command(flatten)]
        out: SimOut,
    },
}

#[derive(Args)]
struct BinArgs {
    #[arg(short, long)]
    input: Option<PathBuf>,
    #[arg(short, long)]
    output: Option<PathBuf>,
    /// Fixed bin width, bins anchored at zero.
    #[arg(long, conflicts_with_all = ["bins", "log_bins"])]
    width: Option<f64>,
    /// Number of equal-width bins spanning [x_min, x_max].
    #[arg(long, conflicts_with = "log_bins")]
    bins: Option<usize>,
    /// Logarithmic bins per decade.
    #[arg(long)]
    log_bins: Option<u32>,
    /// Multiply every value by this factor first.
    #[arg(long)]
    rescale: Option<f64>,
    /// Truncate values to multiples of this step (after rescaling).
    #[arg(long)]
    quantize: Option<f64>,
}

#[derive(Args)]
struct FitArgs {
    #[arg(short, long)]
    input: Option<PathBuf>,
    #[arg(short, long)]
    output: Option<PathBuf>,
    #[arg(long, value_enum, default_value_t = Dist::Powerlaw)]
    dist: Dist,
    /// Bootstrap replicates for the goodness-of-fit p-value (0 to skip).
    #[arg(long, default_value_t = 0)]
    bootstrap: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Fixed tail cutoff instead of the KS scan.
    #[arg(long)]
    xmin: Option<f64>,
    /// Truncate values to multiples of this step before fitting.
    #[arg(long)]
    quantize: Option<f64>,
    /// Fit bin counts on the quantization grid instead of the quantized values.
    #[arg(long, requires = "quantize")]
    binned: bool,
    #[arg(long, default_value_t = DEFAULT_VERDICT_THRESHOLD)]
    threshold: f64,
    /// Largest standardized truncation point of a tail lognormal.
    #[arg(long, default_value_t = 6.0)]
    max_truncation_z: f64,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
enum Dist {
    Powerlaw,
    Lognormal,
    Both,
}

#[derive(Args)]
struct CompareArgs {
    #[arg(short, long)]
    input: Option<PathBuf>,
    #[arg(short, long)]
    output: Option<PathBuf>,
    /// Common tail cutoff; the power-law KS scan picks one when absent.
    #[arg(long)]
    xmin: Option<f64>,
    #[arg(long, default_value_t = DEFAULT_VERDICT_THRESHOLD)]
    threshold: f64,
}

#[derive(Args)]
struct IngestArgs {
    /// Event CSV; standard input when absent.
    #[arg(long)]
    events: Option<PathBuf>,
    #[arg(long)]
    direction: Option<Direction>,
    #[arg(short, long)]
    output: Option<PathBuf>,
    /// Where to write the summary JSON; standard error when absent.
    #[arg(long)]
    summary: Option<PathBuf>,
    /// Write `actor,duration` rows instead of the pooled sample.
    #[arg(long)]
    per_actor: bool,
}

#[derive(Args)]
struct ReportArgs {
    /// Fit JSON files, one row per object or per line.
    #[arg(required = true)]
    inputs: Vec<PathBuf>,
    #[arg(short, long)]
    output: Option<PathBuf>,
    #[arg(long, default_value_t = DEFAULT_VERDICT_THRESHOLD)]
    threshold: f64,
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(Error::Io(e)) if e.kind() == io::ErrorKind::BrokenPipe => ExitCode::SUCCESS,
        Err(e) => {
            let msg = e.to_string().replace('\n', " ");
            eprintln!("error kind={}: {msg}", e.kind());
            ExitCode::from(if e.is_data_error() { 2 } else { 1 })
        }
    }
}

fn run(cli: Cli) -> Result<()> {
    if let Some(t) = cli.threads {
        configure_threads(t)?;
    }
    let format = cli.format;
    match cli.command {
        Command::Simulate { process } => simulate(process, format),
        Command::Bin(a) => bin(a, format),
        Command::Fit(a) => fit(a, format),
        Command::Compare(a) => compare(a, format),
        Command::Ingest(a) => ingest(a, format),
        Command::Report(a) => report(a, format),
    }
}

#[cfg(feature = "parallel")]
fn configure_threads(n: usize) -> Result<()> {
    if n == 0 {
        return Err(Error::InvalidParameter("--threads must be >= 1".into()));
    }
    rayon::ThreadPoolBuilder::new()
        .num_threads(n)
        .build_global()
        .map_err(|e| Error::InvalidParameter(e.to_string()))
}

#[cfg(not(feature = "parallel"))]
fn configure_threads(n: usize) -> Result<()> {
    if n == 0 {
        return Err(Error::InvalidParameter("--threads must be >= 1".into()));
    }
    Ok(())
}

fn open_input(path: Option<&Path>) -> Result<Box<dyn BufRead>> {
    Ok(match path {
        Some(p) => Box::new(BufReader::with_capacity(1 << 16, File::open(p)?)),
        None => Box::new(BufReader::with_capacity(1 << 16, io::stdin())),
    })
}

fn open_output(path: Option<&Path>) -> Result<Box<dyn Write>> {
    Ok(match path {
        Some(p) => Box::new(BufWriter::with_capacity(1 << 16, File::create(p)?)),
        None => Box::new(BufWriter::with_capacity(1 << 16, io::stdout())),
    })
}

fn read_sample(path: Option<&Path>) -> Result<DurationSample> {
    ingestion::read_durations(open_input(path)?)
}

fn write_durations(path: Option<&Path>, values: &[f64], format: Option<Format>) -> Result<()> {
    let mut out = open_output(path)?;
    match format {
        Some(Format::Bin) => ingestion::write_durations_binary(&mut out, values)?,
        Some(Format::Jsonl) => {
            for v in values {
                writeln!(out, "{}", serde_json::to_string(v).map_err(json_error)?)?;
            }
        }
        Some(Format::Csv) | None => ingestion::write_durations_text(&mut out, values)?,
    }
    out.flush()?;
    Ok(())
}

fn json_error(e: serde_json::Error) -> Error {
    Error::Format(e.to_string())
}

fn reject_binary(format: Option<Format>, what: &str) -> Result<()> {
    if format == Some(Format::Bin) {
        return Err(Error::InvalidParameter(format!("{what} output has no binary form")));
    }
    Ok(())
}

fn simulate(p: Process, format: Option<Format>) -> Result<()> {
    match p {
        Process::Lognormal { mu, sigma, n, out } => {
            let s = synthesis::sample_lognormal(&LognormalModel::new(mu, sigma)?, n, &SeededGenerator::new(out.seed))?;
            write_durations(out.output.as_deref(), s.values(), format)
        }
        Process::Powerlaw { gamma, tau, n, out } => {
            let s = synthesis::sample_powerlaw(&PowerLawModel::new(gamma, tau)?, n, &SeededGenerator::new(out.seed))?;
            write_durations(out.output.as_deref(), s.values(), format)
        }
        Process::ExpExp { gamma, tau, n, out } => {
            let s = synthesis::sample_exp_of_exponential(gamma, tau, n, &SeededGenerator::new(out.seed))?;
            write_durations(out.output.as_deref(), s.values(), format)
        }
        Process::Gibrat {
            s0,
            steps,
            agents,
            xi_mean,
            xi_std,
            final_only,
            out,
        } => {
            let process = GibratProcess::normal(s0, steps, agents, xi_mean, xi_std)?;
            let traj = run_gibrat(&process, &SeededGenerator::new(out.seed))?;
            if final_only {
                return write_durations(out.output.as_deref(), traj.final_sizes()?.values(), format);
            }
            reject_binary(format, "trajectory")?;
            let mut w = open_output(out.output.as_deref())?;
            writeln!(w, "agent,step,size")?;
            for a in 0..traj.agents() {
                for t in 0..=traj.steps() {
                    writeln!(w, "{a},{t},{}", traj.size(a, t))?;
                }
            }
            w.flush()?;
            Ok(())
        }
    }
}

fn bin(a: BinArgs, format: Option<Format>) -> Result<()> {
    reject_binary(format, "histogram")?;
    let mut s = read_sample(a.input.as_deref())?;
    if let Some(b) = a.rescale {
        s = binning::rescale(&s, b)?;
    }
    let mut quantized = None;
    if let Some(step) = a.quantize {
        let q = binning::quantize(&s, step)?;
        if q.dropped > 0 {
            eprintln!("quantize: dropped {} values below {step}", q.dropped);
        }
        s = q.sample.clone();
        quantized = Some(q);
    }
    let mut out = open_output(a.output.as_deref())?;
    let hist = if let Some(m) = a.bins {
        binning::bin_linear(&s, m)?
    } else if let Some(k) = a.log_bins {
        binning::bin_log(&s, k)?
    } else {
        let width = match (a.width, &quantized) {
            (Some(w), _) => w,
            (None, Some(q)) => q.step,
            (None, None) => {
                return Err(Error::InvalidParameter(
                    "choose one of --width, --bins, --log-bins or --quantize".into(),
                ))
            }
        };
        if !(width.is_finite() && width > 0.0) {
            return Err(Error::InvalidParameter(format!("bin width must be > 0, got {width}")));
        }
        let span = (s.max() / width).floor() - (s.min() / width).floor() + 1.0;
        if span > MAX_DENSE_BINS as f64 {
            // too many bins to materialize: emit the non-empty ones only
            let n = s.len() as f64;
            let grid = BinGrid::Linear { origin: 0.0, width };
            let rows = sparse_counts(s.values(), grid).into_iter().map(|(k, c)| {
                let (l, r) = (grid.edge(k), grid.edge(k + 1));
                (l, r, c, c as f64 / (n * (r - l)))
            });
            write_histogram_rows(&mut out, rows)?;
            out.flush()?;
            return Ok(());
        }
        binning::bin_width(&s, 0.0, width)?
    };
    hist.write_csv(&mut out)?;
    out.flush()?;
    Ok(())
}

fn lognormal_options(z: f64) -> Result<LognormalFitOptions> {
    if !(z.is_finite() && z > 0.0) {
        return Err(Error::InvalidParameter(format!("--max-truncation-z must be > 0, got {z}")));
    }
    Ok(LognormalFitOptions {
        max_truncation_z: z,
        ..LognormalFitOptions::default()
    })
}

fn check_threshold(t: f64) -> Result<()> {
    if !(t > 0.0 && t < 1.0) {
        return Err(Error::InvalidParameter(format!("verdict threshold must lie in (0, 1), got {t}")));
    }
    Ok(())
}

fn check_reps(reps: usize) -> Result<()> {
    if reps != 0 && reps < tailfit_core::estimation::MIN_BOOTSTRAP_REPS {
        return Err(Error::InvalidParameter(format!(
            "--bootstrap needs at least {} reps, got {reps}",
            tailfit_core::estimation::MIN_BOOTSTRAP_REPS
        )));
    }
    Ok(())
}

fn fit(a: FitArgs, format: Option<Format>) -> Result<()> {
    reject_binary(format, "fit")?;
    check_threshold(a.threshold)?;
    check_reps(a.bootstrap)?;
    if let Some(x) = a.xmin {
        if !(x.is_finite() && x > 0.0) {
            return Err(Error::InvalidParameter(format!("--xmin must be > 0, got {x}")));
        }
    }
    let lopts = lognormal_options(a.max_truncation_z)?;
    if a.binned && a.dist == Dist::Both {
        return Err(Error::InvalidParameter("--binned fits one family at a time".into()));
    }
    let mut s = read_sample(a.input.as_deref())?;
    let mut quantized = None;
    if let Some(step) = a.quantize {
        let q = binning::quantize(&s, step)?;
        s = q.sample.clone();
        quantized = Some(q);
    }
    let g = SeededGenerator::new(a.seed);

    let row = if let (true, Some(q)) = (a.binned, &quantized) {
        let d = BinnedData::from_quantized(q)?;
        let opts = BinnedFitOptions {
            xmin: a.xmin,
            lognormal: lopts,
            ..BinnedFitOptions::default()
        };
        let family = if a.dist == Dist::Lognormal {
            Family::Lognormal
        } else {
            Family::PowerLaw
        };
        let mut f = fit_binned_data(&d, family, &opts)?;
        if a.bootstrap > 0 {
            f.p_value = Some(bootstrap_pvalue_binned(&d, &f, a.bootstrap, &g, &opts)?.p_value);
        }
        Table3Row::from_fit(&f)
    } else {
        match a.dist {
            Dist::Powerlaw => {
                let opts = PowerLawFitOptions {
                    xmin: a.xmin,
                    ..PowerLawFitOptions::default()
                };
                let mut f = fit_powerlaw_tail(&s, &opts)?;
                if a.bootstrap > 0 {
                    f.p_value = Some(bootstrap_pvalue(&s, &f, a.bootstrap, &g)?.p_value);
                }
                Table3Row::from_fit(&f)
            }
            Dist::Lognormal => {
                let mut f = fit_lognormal_with(&s, a.xmin, &lopts)?;
                if a.bootstrap > 0 {
                    f.p_value = Some(bootstrap_pvalue(&s, &f, a.bootstrap, &g)?.p_value);
                }
                Table3Row::from_fit(&f)
            }
            Dist::Both => {
                let mut pl = fit_powerlaw_tail(
                    &s,
                    &PowerLawFitOptions {
                        xmin: a.xmin,
                        ..PowerLawFitOptions::default()
                    },
                )?;
                let xmin = pl.xmin.expect("power-law fits carry a cutoff");
                if a.bootstrap > 0 {
                    pl.p_value = Some(bootstrap_pvalue(&s, &pl, a.bootstrap, &g)?.p_value);
                }
                let mut c = compare_families_with(&s, xmin, a.threshold, &lopts)?;
                c.powerlaw = Some(pl);
                Table3Row::from_comparison(&c)
            }
        }
    };
    let mut out = open_output(a.output.as_deref())?;
    write_row(&mut out, &row, format, a.threshold)?;
    out.flush()?;
    Ok(())
}

fn write_row(out: &mut dyn Write, row: &Table3Row, format: Option<Format>, threshold: f64) -> Result<()> {
    if format == Some(Format::Csv) {
        out.write_all(render_csv(std::slice::from_ref(row), threshold)?.as_bytes())?;
    } else {
        writeln!(out, "{}", serde_json::to_string(row).map_err(json_error)?)?;
    }
    Ok(())
}

fn compare(a: CompareArgs, format: Option<Format>) -> Result<()> {
    reject_binary(format, "comparison")?;
    check_threshold(a.threshold)?;
    let s = read_sample(a.input.as_deref())?;
    let xmin = match a.xmin {
        Some(x) => x,
        None => fit_powerlaw_tail(&s, &PowerLawFitOptions::default())?
            .xmin
            .expect("power-law fits carry a cutoff"),
    };
    let c = compare_families_with(&s, xmin, a.threshold, &LognormalFitOptions::default())?;
    eprintln!(
        "compare: n_tail {} normalized {:.4} p {:.4} verdict {}",
        c.n_tail, c.normalized, c.p_value, c.verdict
    );
    let mut out = open_output(a.output.as_deref())?;
    write_row(&mut out, &Table3Row::from_comparison(&c), format, a.threshold)?;
    out.flush()?;
    Ok(())
}

fn ingest(a: IngestArgs, format: Option<Format>) -> Result<()> {
    let input: Box<dyn Read> = match &a.events {
        Some(p) => Box::new(File::open(p)?),
        None => Box::new(io::stdin()),
    };
    let summary = if a.per_actor {
        reject_binary(format, "per-actor")?;
        let (samples, summary) = ingestion::ingest_csv_per_actor(input, a.direction)?;
        let mut w = csv::Writer::from_writer(open_output(a.output.as_deref())?);
        w.write_record(["actor", "duration"]).map_err(csv_error)?;
        for (actor, s) in &samples {
            for v in s.values() {
                w.write_record([actor.as_str(), &v.to_string()]).map_err(csv_error)?;
            }
        }
        w.flush()?;
        summary
    } else {
        let (s, summary) = ingestion::ingest_csv(input, a.direction)?;
        write_durations(a.output.as_deref(), s.values(), format)?;
        summary
    };
    let text = serde_json::to_string(&summary).map_err(json_error)?;
    match &a.summary {
        Some(p) => std::fs::write(p, format!("{text}\n"))?,
        None => eprintln!("{text}"),
    }
    Ok(())
}

fn csv_error(e: csv::Error) -> Error {
    if !e.is_io_error() {
        return Error::Io(io::Error::other(e));
    }
    match e.into_kind() {
        csv::ErrorKind::Io(e) => Error::Io(e),
        _ => unreachable!("checked is_io_error"),
    }
}

fn report(a: ReportArgs, format: Option<Format>) -> Result<()> {
    reject_binary(format, "report")?;
    check_threshold(a.threshold)?;
    let mut rows = Vec::new();
    let mut skipped = 0usize;
    for path in &a.inputs {
        let text = std::fs::read_to_string(path)?;
        let values: Vec<serde_json::Value> = match serde_json::from_str::<serde_json::Value>(&text) {
            Ok(serde_json::Value::Array(items)) => items,
            Ok(v) => vec![v],
            Err(_) => {
                let mut items = Vec::new();
                for (i, line) in text.lines().enumerate().filter(|(_, l)| !l.trim().is_empty()) {
                    match serde_json::from_str(line) {
                        Ok(v) => items.push(v),
                        Err(e) => {
                            skipped += 1;
                            eprintln!("skipped {}:{}: {e}", path.display(), i + 1);
                        }
                    }
                }
                items
            }
        };
        for v in values {
            match Table3Row::from_json_value(v) {
                Ok(r) => rows.push(r),
                Err(e) => {
                    skipped += 1;
                    eprintln!("skipped {}: {e}", path.display());
                }
            }
        }
    }
    if rows.is_empty() {
        return Err(Error::Format(format!("no valid rows ({skipped} skipped)")));
    }
    let mut out = open_output(a.output.as_deref())?;
    match format {
        Some(Format::Csv) => out.write_all(render_csv(&rows, a.threshold)?.as_bytes())?,
        Some(Format::Jsonl) => {
            for r in &rows {
                writeln!(out, "{}", serde_json::to_string(r).map_err(json_error)?)?;
            }
        }
        _ => out.write_all(render_markdown(&rows, a.threshold).as_bytes())?,
    }
    out.flush()?;
    Ok(())
}
