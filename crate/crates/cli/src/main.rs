//! `bsi`: build topology libraries, run posterior scans over symbol
//! series, sample the posterior hierarchy, and drive the subsample
//! convergence protocol. All commands are deterministic given their flags;
//! seeds are always explicit.

mod report;

use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand};

use bsi_core::bayes::{topology_posterior, DirichletPrior, ModelPriorSpec};
use bsi_core::enumeration::{build_library, load_library, save_library, MachineLibrary};
use bsi_core::machine::DataSeries;
use bsi_core::processes::{builtin, generate_series, load_generator, BuiltinProcess};
use bsi_core::sampler::{
    gaussian_kde, sample_posterior, summarize, write_samples_csv, KdeOutcome, PosteriorSample,
    SampleMode, SamplerConfig, SummaryStats,
};
use bsi_core::Error as CoreError;

use report::{build_report, ConfigEcho};

#[derive(Parser)]
#[command(
    name = "bsi",
    version,
    about = "Bayesian structural inference over libraries of unifilar hidden Markov topologies"
)]
struct Cli {
    /// Worker threads for parallel scans; never changes the outputs.
    #[arg(long, global = true)]
    threads: Option<usize>,

    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Enumerate candidate topologies into a library file.
    Enumerate {
        /// State counts, e.g. `1..5`.
        #[arg(long)]
        states: String,
        #[arg(long, default_value_t = 2)]
        alphabet: usize,
        #[arg(long)]
        out: PathBuf,
    },
    /// Generate a symbol series from a built-in process or a machine file.
    Generate {
        /// `golden-mean`, `even`, `sns`, or `file:PATH`.
        #[arg(long)]
        process: String,
        #[arg(long)]
        length: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        /// Pin the start state instead of drawing it from the stationary
        /// distribution.
        #[arg(long)]
        start: Option<usize>,
        #[arg(long)]
        out: PathBuf,
    },
    /// Scan a library against a series and write the posterior report.
    Infer {
        #[arg(long)]
        library: PathBuf,
        #[arg(long)]
        data: PathBuf,
        #[arg(long, default_value_t = 1.0)]
        alpha: f64,
        #[arg(long, default_value_t = 4.0)]
        beta: f64,
        /// How many top-posterior rows the report carries.
        #[arg(long, default_value_t = 10)]
        top: usize,
        #[arg(long)]
        out: PathBuf,
    },
    /// Sample the posterior hierarchy into a CSV.
    Sample {
        #[arg(long)]
        library: PathBuf,
        #[arg(long)]
        data: PathBuf,
        #[arg(long, default_value_t = 50_000)]
        samples: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        /// `full` samples a topology per draw; `map` fixes the MAP one.
        #[arg(long, default_value = "full")]
        mode: String,
        #[arg(long, default_value_t = 1.0)]
        alpha: f64,
        #[arg(long, default_value_t = 4.0)]
        beta: f64,
        #[arg(long)]
        out: PathBuf,
        /// Optional JSON with mean and 95% credible interval per quantity.
        #[arg(long)]
        summary: Option<PathBuf>,
    },
    /// Run the subsample-convergence protocol over prefixes of one series.
    Converge {
        #[arg(long)]
        library: PathBuf,
        #[arg(long)]
        data: PathBuf,
        /// Prefix lengths: `2^0..2^17` or a comma list; defaults to all
        /// powers of two up to the series length.
        #[arg(long)]
        lengths: Option<String>,
        #[arg(long, default_value_t = 1.0)]
        alpha: f64,
        #[arg(long, default_value_t = 4.0)]
        beta: f64,
        #[arg(long, default_value_t = 50_000)]
        samples: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long, default_value = "full")]
        mode: String,
        /// Output directory for per-length reports and `summary.csv`.
        #[arg(long)]
        out: PathBuf,
    },
    /// Kernel density estimate over one column of a samples CSV.
    Density {
        #[arg(long)]
        input: PathBuf,
        /// `h_mu` or `c_mu` (underscores optional).
        #[arg(long)]
        column: String,
        #[arg(long, default_value_t = 512)]
        grid: usize,
        /// `silverman` or an explicit positive width.
        #[arg(long, default_value = "silverman")]
        bandwidth: String,
        #[arg(long)]
        out: PathBuf,
    },
}

#[derive(Debug)]
enum CliError {
    /// Bad flags or arguments; exit 2 like a parse failure.
    Usage(String),
    /// The scan found no topology with a valid path; exit 3.
    NoAccepting,
    /// Malformed input file; exit 4.
    Input(String),
    /// Everything else (output I/O, mostly); exit 1.
    Other(String),
}

impl CliError {
    fn code(&self) -> u8 {
        match self {
            CliError::Usage(_) => 2,
            CliError::NoAccepting => 3,
            CliError::Input(_) => 4,
            CliError::Other(_) => 1,
        }
    }

    fn message(&self) -> String {
        match self {
            CliError::Usage(m) => format!("usage error: {m}"),
            CliError::NoAccepting => "no topology in the library accepts the data".into(),
            CliError::Input(m) => format!("input error: {m}"),
            CliError::Other(m) => m.clone(),
        }
    }
}

/// Core errors raised while reading and validating inputs.
fn input_err(err: CoreError) -> CliError {
    match err {
        CoreError::InvalidArgument(m) | CoreError::Capacity(m) => CliError::Usage(m),
        CoreError::NoAcceptingTopology => CliError::NoAccepting,
        other => CliError::Input(other.to_string()),
    }
}

fn write_err(err: std::io::Error) -> CliError {
    CliError::Other(format!("write failed: {err}"))
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    if let Some(threads) = cli.threads {
        if threads == 0 {
            eprintln!("usage error: --threads must be positive");
            return ExitCode::from(2);
        }
        // Ignore failure: the global pool can already be initialized when
        // tests drive main() twice in-process.
        let _ = rayon::ThreadPoolBuilder::new()
            .num_threads(threads)
            .build_global();
    }
    match run(cli.command) {
        Ok(()) => ExitCode::SUCCESS,
        Err(err) => {
            eprintln!("{}", err.message());
            ExitCode::from(err.code())
        }
    }
}

fn run(command: Command) -> Result<(), CliError> {
    match command {
        Command::Enumerate {
            states,
            alphabet,
            out,
        } => cmd_enumerate(&states, alphabet, &out),
        Command::Generate {
            process,
            length,
            seed,
            start,
            out,
        } => cmd_generate(&process, length, seed, start, &out),
        Command::Infer {
            library,
            data,
            alpha,
            beta,
            top,
            out,
        } => cmd_infer(&library, &data, alpha, beta, top, &out),
        Command::Sample {
            library,
            data,
            samples,
            seed,
            mode,
            alpha,
            beta,
            out,
            summary,
        } => cmd_sample(
            &library,
            &data,
            samples,
            seed,
            &mode,
            alpha,
            beta,
            &out,
            summary.as_deref(),
        ),
        Command::Converge {
            library,
            data,
            lengths,
            alpha,
            beta,
            samples,
            seed,
            mode,
            out,
        } => cmd_converge(
            &library,
            &data,
            lengths.as_deref(),
            alpha,
            beta,
            samples,
            seed,
            &mode,
            &out,
        ),
        Command::Density {
            input,
            column,
            grid,
            bandwidth,
            out,
        } => cmd_density(&input, &column, grid, &bandwidth, &out),
    }
}

/// Parse `A..B` (inclusive) with `A >= 1`.
fn parse_state_range(text: &str) -> Result<(usize, usize), CliError> {
    let (lo, hi) = text
        .split_once("..")
        .ok_or_else(|| CliError::Usage(format!("state range {text:?} is not of the form A..B")))?;
    let lo: usize = lo
        .trim()
        .parse()
        .map_err(|_| CliError::Usage(format!("bad state count {lo:?}")))?;
    let hi: usize = hi
        .trim()
        .parse()
        .map_err(|_| CliError::Usage(format!("bad state count {hi:?}")))?;
    if lo == 0 || lo > hi {
        return Err(CliError::Usage(format!(
            "state range must satisfy 1 <= A <= B, got {lo}..{hi}"
        )));
    }
    Ok((lo, hi))
}

fn cmd_enumerate(states: &str, alphabet: usize, out: &Path) -> Result<(), CliError> {
    let (lo, hi) = parse_state_range(states)?;
    let library = build_library(lo..=hi, alphabet).map_err(input_err)?;
    save_library(&library, out).map_err(input_err)?;
    for n in lo..=hi {
        println!("n={n}: {}", library.census()[n - 1]);
    }
    println!("total: {}", library.len());
    Ok(())
}

fn cmd_generate(
    process: &str,
    length: usize,
    seed: u64,
    start: Option<usize>,
    out: &Path,
) -> Result<(), CliError> {
    let hmm = if let Some(path) = process.strip_prefix("file:") {
        load_generator(path).map_err(input_err)?
    } else {
        let name: BuiltinProcess = process.parse().map_err(input_err)?;
        builtin(name)
    };
    if hmm.alphabet_size() > 10 {
        return Err(CliError::Usage(
            "the digit data format supports alphabets up to size 10".into(),
        ));
    }
    if let Some(s) = start {
        if s >= hmm.n_states() {
            return Err(CliError::Usage(format!(
                "start state {s} out of range for a {}-state machine",
                hmm.n_states()
            )));
        }
    }
    let series = generate_series(&hmm, length, seed, start);
    let mut body = series.to_digits();
    if !body.is_empty() {
        body.push('\n');
    }
    std::fs::write(out, body).map_err(write_err)?;
    Ok(())
}

struct ScanInputs {
    library: MachineLibrary,
    data: DataSeries,
    prior: DirichletPrior,
    spec: ModelPriorSpec,
}

fn load_scan_inputs(
    library: &Path,
    data: &Path,
    alpha: f64,
    beta: f64,
) -> Result<ScanInputs, CliError> {
    let library = load_library(library).map_err(input_err)?;
    let text = std::fs::read_to_string(data)
        .map_err(|e| CliError::Input(format!("cannot read data file: {e}")))?;
    let data =
        DataSeries::from_digits(&text, library.alphabet_size()).map_err(input_err)?;
    let prior = DirichletPrior::new(alpha).map_err(input_err)?;
    let spec = ModelPriorSpec::new(beta).map_err(input_err)?;
    Ok(ScanInputs {
        library,
        data,
        prior,
        spec,
    })
}

fn write_json<T: serde::Serialize>(value: &T, path: &Path) -> Result<(), CliError> {
    let mut w = BufWriter::new(File::create(path).map_err(write_err)?);
    serde_json::to_writer_pretty(&mut w, value)
        .map_err(|e| CliError::Other(format!("serialize failed: {e}")))?;
    w.write_all(b"\n").map_err(write_err)?;
    w.flush().map_err(write_err)
}

fn cmd_infer(
    library: &Path,
    data: &Path,
    alpha: f64,
    beta: f64,
    top: usize,
    out: &Path,
) -> Result<(), CliError> {
    let inputs = load_scan_inputs(library, data, alpha, beta)?;
    let table = topology_posterior(&inputs.library, &inputs.data, &inputs.prior, &inputs.spec);
    let report = build_report(
        &table,
        &inputs.data,
        ConfigEcho {
            alpha,
            beta,
            seed: None,
            mode: None,
            top_k: top,
        },
        inputs.library.len(),
    );
    write_json(&report, out)?;
    match table.map_row() {
        Some(map) => {
            println!(
                "MAP {} ({} states) posterior {:.6}; accepting {}/{}",
                map.id,
                map.n_states,
                map.posterior,
                table.accepting_count(),
                inputs.library.len()
            );
            Ok(())
        }
        None => Err(CliError::NoAccepting),
    }
}

fn sample_stats(samples: &[PosteriorSample]) -> (SummaryStats, SummaryStats) {
    let h: Vec<f64> = samples.iter().map(|s| s.h_mu).collect();
    let c: Vec<f64> = samples.iter().map(|s| s.c_mu).collect();
    (summarize(&h, 0.95), summarize(&c, 0.95))
}

#[derive(serde::Serialize)]
struct SampleSummary {
    seed: u64,
    mode: String,
    h_mu: SummaryStats,
    c_mu: SummaryStats,
}

#[allow(clippy::too_many_arguments)]
fn cmd_sample(
    library: &Path,
    data: &Path,
    samples: usize,
    seed: u64,
    mode: &str,
    alpha: f64,
    beta: f64,
    out: &Path,
    summary: Option<&Path>,
) -> Result<(), CliError> {
    let mode: SampleMode = mode.parse().map_err(input_err)?;
    let inputs = load_scan_inputs(library, data, alpha, beta)?;
    let table = topology_posterior(&inputs.library, &inputs.data, &inputs.prior, &inputs.spec);
    let config = SamplerConfig {
        n_samples: samples,
        seed,
        mode,
    };
    let drawn =
        sample_posterior(&inputs.library, &table, &inputs.prior, &config).map_err(input_err)?;
    let mut w = BufWriter::new(File::create(out).map_err(write_err)?);
    write_samples_csv(&mut w, &drawn).map_err(write_err)?;
    w.flush().map_err(write_err)?;
    if let Some(path) = summary {
        if drawn.is_empty() {
            return Err(CliError::Usage(
                "cannot summarize zero samples; increase --samples".into(),
            ));
        }
        let (h_mu, c_mu) = sample_stats(&drawn);
        write_json(
            &SampleSummary {
                seed,
                mode: mode.as_str().into(),
                h_mu,
                c_mu,
            },
            path,
        )?;
    }
    Ok(())
}

/// Accepts `2^a..2^b` (powers of two), a comma list of values (each a
/// plain integer or `2^i`), or a single value.
fn parse_lengths(text: &str) -> Result<Vec<usize>, CliError> {
    let parse_one = |part: &str| -> Result<usize, CliError> {
        let part = part.trim();
        if let Some(exp) = part.strip_prefix("2^") {
            let exp: u32 = exp
                .parse()
                .map_err(|_| CliError::Usage(format!("bad exponent in {part:?}")))?;
            if exp >= usize::BITS {
                return Err(CliError::Usage(format!("length {part} overflows")));
            }
            Ok(1usize << exp)
        } else {
            part.parse()
                .map_err(|_| CliError::Usage(format!("bad length {part:?}")))
        }
    };
    if let Some((lo, hi)) = text.split_once("..") {
        let (lo, hi) = (lo.trim(), hi.trim());
        if !(lo.starts_with("2^") && hi.starts_with("2^")) {
            return Err(CliError::Usage(
                "length ranges use power-of-two bounds, e.g. 2^0..2^17".into(),
            ));
        }
        let (lo, hi) = (parse_one(lo)?, parse_one(hi)?);
        if lo > hi {
            return Err(CliError::Usage("empty length range".into()));
        }
        let mut lengths = Vec::new();
        let mut l = lo;
        while l <= hi {
            lengths.push(l);
            if l > hi / 2 {
                break;
            }
            l *= 2;
        }
        Ok(lengths)
    } else {
        let lengths: Vec<usize> = text
            .split(',')
            .map(parse_one)
            .collect::<Result<_, _>>()?;
        if lengths.is_empty() {
            return Err(CliError::Usage("no lengths given".into()));
        }
        Ok(lengths)
    }
}

fn default_lengths(series_len: usize) -> Vec<usize> {
    let mut lengths = Vec::new();
    let mut l = 1usize;
    while l <= series_len {
        lengths.push(l);
        l *= 2;
    }
    lengths
}

#[allow(clippy::too_many_arguments)]
fn cmd_converge(
    library: &Path,
    data: &Path,
    lengths: Option<&str>,
    alpha: f64,
    beta: f64,
    samples: usize,
    seed: u64,
    mode: &str,
    out: &Path,
) -> Result<(), CliError> {
    let mode: SampleMode = mode.parse().map_err(input_err)?;
    let inputs = load_scan_inputs(library, data, alpha, beta)?;
    let lengths = match lengths {
        Some(text) => parse_lengths(text)?,
        None => default_lengths(inputs.data.len()),
    };
    if let Some(&too_long) = lengths.iter().find(|&&l| l > inputs.data.len()) {
        return Err(CliError::Usage(format!(
            "length {too_long} exceeds the series length {}",
            inputs.data.len()
        )));
    }
    std::fs::create_dir_all(out).map_err(write_err)?;

    let mut summary = BufWriter::new(File::create(out.join("summary.csv")).map_err(write_err)?);
    writeln!(
        summary,
        "L,h_mu_mean,h_mu_ci_low,h_mu_ci_high,c_mu_mean,c_mu_ci_low,c_mu_ci_high,map_id,map_posterior,accepting_count"
    )
    .map_err(write_err)?;

    for &len in &lengths {
        let prefix = inputs.data.prefix(len);
        let table = topology_posterior(&inputs.library, &prefix, &inputs.prior, &inputs.spec);
        let report = build_report(
            &table,
            &prefix,
            ConfigEcho {
                alpha,
                beta,
                seed: Some(seed),
                mode: Some(mode.as_str().into()),
                top_k: 10,
            },
            inputs.library.len(),
        );
        write_json(&report, &out.join(format!("report_L{len}.json")))?;

        let map = table.map_row().ok_or(CliError::NoAccepting)?;
        let (map_id, map_posterior) = (map.id.clone(), map.posterior);
        let config = SamplerConfig {
            n_samples: samples,
            seed,
            mode,
        };
        let drawn = sample_posterior(&inputs.library, &table, &inputs.prior, &config)
            .map_err(input_err)?;
        if drawn.is_empty() {
            return Err(CliError::Usage(
                "cannot summarize zero samples; increase --samples".into(),
            ));
        }
        let (h, c) = sample_stats(&drawn);
        writeln!(
            summary,
            "{len},{},{},{},{},{},{},{map_id},{map_posterior},{}",
            h.mean,
            h.ci_low,
            h.ci_high,
            c.mean,
            c.ci_low,
            c.ci_high,
            table.accepting_count()
        )
        .map_err(write_err)?;
    }
    summary.flush().map_err(write_err)
}

fn cmd_density(
    input: &Path,
    column: &str,
    grid: usize,
    bandwidth: &str,
    out: &Path,
) -> Result<(), CliError> {
    if grid < 2 {
        return Err(CliError::Usage("--grid must be at least 2".into()));
    }
    let bandwidth = match bandwidth {
        "silverman" => None,
        other => {
            let width: f64 = other
                .parse()
                .map_err(|_| CliError::Usage(format!("bad bandwidth {other:?}")))?;
            if !(width > 0.0 && width.is_finite()) {
                return Err(CliError::Usage("bandwidth must be positive".into()));
            }
            Some(width)
        }
    };

    let normalize = |name: &str| name.replace('_', "").to_ascii_lowercase();
    let text = std::fs::read_to_string(input)
        .map_err(|e| CliError::Input(format!("cannot read samples file: {e}")))?;
    let mut lines = text.lines();
    let header = lines
        .next()
        .ok_or_else(|| CliError::Input("empty samples file".into()))?;
    let wanted = normalize(column);
    let col = header
        .split(',')
        .position(|name| normalize(name) == wanted)
        .ok_or_else(|| CliError::Input(format!("column {column:?} not in header {header:?}")))?;
    let mut values = Vec::new();
    for (lineno, line) in lines.enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        let field = line
            .split(',')
            .nth(col)
            .ok_or_else(|| CliError::Input(format!("line {}: missing column", lineno + 2)))?;
        let value: f64 = field
            .parse()
            .map_err(|_| CliError::Input(format!("line {}: bad number {field:?}", lineno + 2)))?;
        values.push(value);
    }
    if values.is_empty() {
        return Err(CliError::Input("no sample rows to estimate from".into()));
    }

    let mut w = BufWriter::new(File::create(out).map_err(write_err)?);
    match gaussian_kde(&values, grid, bandwidth) {
        KdeOutcome::Degenerate { value } => {
            writeln!(w, "# degenerate distribution: all samples equal {value}")
                .map_err(write_err)?;
            writeln!(w, "x,density").map_err(write_err)?;
            println!("degenerate distribution; no density drawn");
        }
        KdeOutcome::Curve(curve) => {
            writeln!(w, "x,density").map_err(write_err)?;
            for (x, d) in curve.xs.iter().zip(&curve.density) {
                writeln!(w, "{x},{d}").map_err(write_err)?;
            }
        }
    }
    w.flush().map_err(write_err)
}
