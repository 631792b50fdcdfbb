//! Command-line front end.
//!
//! Exit codes: 0 success, 1 usage error, 2 data error, 3 fit failure.

use std::ffi::OsString;
use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand};

use crate::bench::{self, BenchmarkConfig, DEFAULT_NSAMP};
use crate::error::EbnmError;
use crate::fit::ebnm;
use crate::model::{validate_observations, FittedPrior, Mode, ObservationSet, PriorFamily, PriorFamilySpec, ScaleSpec};
use crate::sim::{simulate_scenario, Scenario};

pub const EXIT_OK: i32 = 0;
pub const EXIT_USAGE: i32 = 1;
pub const EXIT_DATA: i32 = 2;
pub const EXIT_FIT: i32 = 3;

#[derive(Debug, Parser)]
#[command(name = "ebnm", version, about = "Empirical Bayes normal means")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Fit a prior to a CSV/TSV file and write posterior summaries.
    Fit(FitArgs),
    /// Run the simulation benchmark and write metrics.csv.
    Benchmark(BenchArgs),
    /// Write one simulated dataset (columns theta,x,s).
    Simulate(SimArgs),
    /// Reproduce the eight-schools point-normal comparison.
    Eightschools,
}

#[derive(Debug, Args)]
struct FitArgs {
    /// Input file with a header row and columns x and (optionally) s.
    input: PathBuf,
    #[arg(long, default_value = "point-normal")]
    prior: String,
    /// `estimate` or a number.
    #[arg(long, default_value = "0")]
    mode: String,
    /// A single value or a comma-separated grid.
    #[arg(long)]
    scale: Option<String>,
    /// Standard error for every row when the file has no s column.
    #[arg(long = "s")]
    se: Option<f64>,
    #[arg(long = "g-init")]
    g_init: Option<PathBuf>,
    #[arg(long = "fix-g")]
    fix_g: bool,
    #[arg(long, default_value_t = 1)]
    seed: u64,
    /// Posterior draws to write to samples.csv.
    #[arg(long)]
    nsamp: Option<usize>,
    #[arg(long, default_value = ".")]
    output: PathBuf,
}

#[derive(Debug, Args)]
struct BenchArgs {
    #[arg(long)]
    scenario: String,
    #[arg(long, default_value_t = 1000)]
    n: usize,
    #[arg(long, default_value_t = 10)]
    reps: usize,
    #[arg(long, default_value_t = 1)]
    seed: u64,
    /// Comma-separated family names.
    #[arg(long)]
    families: Option<String>,
    #[arg(long, default_value_t = DEFAULT_NSAMP)]
    nsamp: usize,
    #[arg(long, default_value = ".")]
    out: PathBuf,
}

#[derive(Debug, Args)]
struct SimArgs {
    #[arg(long)]
    scenario: String,
    #[arg(long, default_value_t = 1000)]
    n: usize,
    #[arg(long, default_value_t = 1)]
    seed: u64,
    #[arg(long)]
    output: PathBuf,
}

struct Failure {
    code: i32,
    message: String,
}

impl Failure {
    fn usage(message: impl Into<String>) -> Self {
        Self {
            code: EXIT_USAGE,
            message: message.into(),
        }
    }

    fn data(message: impl Into<String>) -> Self {
        Self {
            code: EXIT_DATA,
            message: message.into(),
        }
    }

    fn io(path: &Path, e: std::io::Error) -> Self {
        Self::data(format!("{}: {e}", path.display()))
    }
}

fn classify(e: EbnmError) -> Failure {
    let code = match e {
        EbnmError::InvalidSpec(_) | EbnmError::UnknownScenario(_) | EbnmError::InvalidArgument(_) => EXIT_USAGE,
        EbnmError::OptimizerFailed { .. }
        | EbnmError::WeightSolverFailed { .. }
        | EbnmError::UnsupportedByGrid { .. } => EXIT_FIT,
        _ => EXIT_DATA,
    };
    Failure {
        code,
        message: e.to_string(),
    }
}

/// Parses arguments and runs one command, returning the exit code.
pub fn run<I, T>(args: I, out: &mut dyn Write, err: &mut dyn Write) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { EXIT_USAGE } else { EXIT_OK };
            let text = e.render().to_string();
            let _ = if code == EXIT_OK {
                write!(out, "{text}")
            } else {
                write!(err, "{text}")
            };
            return code;
        }
    };
    let result = match cli.command {
        Command::Fit(a) => cmd_fit(&a, out),
        Command::Benchmark(a) => cmd_benchmark(&a, out),
        Command::Simulate(a) => cmd_simulate(&a),
        Command::Eightschools => cmd_eightschools(out),
    };
    match result {
        Ok(()) => EXIT_OK,
        Err(f) => {
            let _ = writeln!(err, "error: {}", f.message);
            f.code
        }
    }
}

fn parse_mode(s: &str) -> Result<Mode, Failure> {
    if s == "estimate" {
        return Ok(Mode::Estimate);
    }
    s.parse::<f64>()
        .ok()
        .filter(|v| v.is_finite())
        .map(Mode::Fixed)
        .ok_or_else(|| Failure::usage(format!("--mode must be `estimate` or a number, got `{s}`")))
}

fn parse_scale(s: &str) -> Result<ScaleSpec, Failure> {
    let values: Result<Vec<f64>, _> = s.split(',').map(|v| v.trim().parse::<f64>()).collect();
    let values = values.map_err(|_| Failure::usage(format!("--scale must be a number or a comma list, got `{s}`")))?;
    Ok(if s.contains(',') {
        ScaleSpec::Grid(values)
    } else {
        ScaleSpec::Fixed(values[0])
    })
}

fn delimiter_for(path: &Path, text: &str) -> u8 {
    let tsv_ext = path.extension().is_some_and(|e| e.eq_ignore_ascii_case("tsv"));
    let header = text.lines().next().unwrap_or("");
    if tsv_ext || (header.contains('\t') && !header.contains(',')) {
        b'\t'
    } else {
        b','
    }
}

/// Reads columns `x` and `s` (or broadcasts `se`) from a delimited file.
fn read_observations(path: &Path, se: Option<f64>) -> Result<ObservationSet, Failure> {
    let text = fs::read_to_string(path).map_err(|e| Failure::io(path, e))?;
    let mut reader = csv::ReaderBuilder::new()
        .delimiter(delimiter_for(path, &text))
        .trim(csv::Trim::All)
        .from_reader(text.as_bytes());
    let headers = reader
        .headers()
        .map_err(|e| Failure::data(format!("{}: {e}", path.display())))?
        .clone();
    let col = |name: &str| headers.iter().position(|h| h == name);
    let x_col = col("x").ok_or_else(|| Failure::data(format!("{}: no `x` column in header", path.display())))?;
    let s_col = col("s");
    if s_col.is_none() && se.is_none() {
        return Err(Failure::usage("the input has no `s` column; pass --s"));
    }
    let mut x = Vec::new();
    let mut s = Vec::new();
    for (row, record) in reader.records().enumerate() {
        let record = record.map_err(|e| Failure::data(format!("{}: {e}", path.display())))?;
        let field = |c: usize, name: &str| -> Result<f64, Failure> {
            let raw = record.get(c).unwrap_or("");
            raw.parse::<f64>().map_err(|_| {
                Failure::data(format!("{}: row {}: bad {name} value `{raw}`", path.display(), row + 1))
            })
        };
        x.push(field(x_col, "x")?);
        if let Some(c) = s_col {
            s.push(field(c, "s")?);
        }
    }
    let obs = match (s_col, se) {
        (Some(_), _) => validate_observations(&x, s),
        (None, Some(v)) => validate_observations(&x, v),
        (None, None) => unreachable!("checked above"),
    };
    obs.map_err(|e| Failure::data(format!("{}: {e}", path.display())))
}

fn write_file(path: &Path, contents: &str) -> Result<(), Failure> {
    fs::write(path, contents).map_err(|e| Failure::io(path, e))
}

fn cmd_fit(a: &FitArgs, out: &mut dyn Write) -> Result<(), Failure> {
    let family: PriorFamily = a.prior.parse().map_err(classify)?;
    let mut spec = PriorFamilySpec::new(family).with_mode(parse_mode(&a.mode)?);
    if let Some(s) = &a.scale {
        spec = spec.with_scale(parse_scale(s)?);
    }
    if let Some(path) = &a.g_init {
        let text = fs::read_to_string(path).map_err(|e| Failure::io(path, e))?;
        let g = FittedPrior::from_json(&text).map_err(|e| Failure::data(format!("{}: {e}", path.display())))?;
        spec = spec.with_g_init(g, a.fix_g);
    } else if a.fix_g {
        return Err(Failure::usage("--fix-g requires --g-init"));
    }
    spec.validate().map_err(classify)?;
    let obs = read_observations(&a.input, a.se)?;
    let result = ebnm(&obs, &spec).map_err(classify)?;

    fs::create_dir_all(&a.output).map_err(|e| Failure::io(&a.output, e))?;
    write_file(&a.output.join("fitted_prior.json"), &(result.fitted_prior.to_json() + "\n"))?;
    let mut csv = String::from("index,x,s,mean,sd,lfsr\n");
    let post = &result.posterior;
    for (i, (x, s)) in obs.iter().enumerate() {
        csv.push_str(&format!(
            "{},{},{},{},{},{}\n",
            i + 1,
            x,
            s,
            post.mean[i],
            post.sd[i],
            post.lfsr[i]
        ));
    }
    write_file(&a.output.join("posterior.csv"), &csv)?;
    write_file(&a.output.join("loglik.txt"), &format!("{:.16e}\n", result.log_likelihood))?;
    if let Some(nsamp) = a.nsamp {
        let draws = result.sampler(a.seed).draw(nsamp);
        let mut csv = (1..=obs.len())
            .map(|i| format!("theta_{i}"))
            .collect::<Vec<_>>()
            .join(",");
        csv.push('\n');
        for j in 0..draws.nsamp() {
            let row: Vec<String> = draws.row(j).iter().map(|v| v.to_string()).collect();
            csv.push_str(&row.join(","));
            csv.push('\n');
        }
        write_file(&a.output.join("samples.csv"), &csv)?;
    }
    let _ = writeln!(out, "log-likelihood: {:.16e}", result.log_likelihood);
    Ok(())
}

fn cmd_benchmark(a: &BenchArgs, out: &mut dyn Write) -> Result<(), Failure> {
    let scenario: Scenario = a.scenario.parse().map_err(classify)?;
    let mut config = BenchmarkConfig::new(scenario);
    config.n = a.n;
    config.reps = a.reps;
    config.seed = a.seed;
    config.nsamp = a.nsamp;
    if let Some(list) = &a.families {
        config.families = list
            .split(',')
            .map(|f| f.trim().parse::<PriorFamily>())
            .collect::<Result<_, _>>()
            .map_err(classify)?;
    }
    if config.n == 0 || config.reps == 0 {
        return Err(Failure::usage("--n and --reps must be positive"));
    }
    if config.nsamp < 100 {
        return Err(Failure::usage("--nsamp must be at least 100"));
    }
    let rows = bench::run_benchmark(&config).map_err(classify)?;
    let summary = bench::summarize(&rows);
    fs::create_dir_all(&a.out).map_err(|e| Failure::io(&a.out, e))?;
    let mut buf = Vec::new();
    bench::write_metrics_csv(&mut buf, &rows).expect("write to memory");
    write_file(&a.out.join("metrics.csv"), &String::from_utf8(buf).expect("utf8"))?;
    let mut buf = Vec::new();
    bench::write_summary_csv(&mut buf, &summary).expect("write to memory");
    let text = String::from_utf8(buf).expect("utf8");
    write_file(&a.out.join("metrics_summary.csv"), &text)?;
    let _ = write!(out, "{text}");
    Ok(())
}

fn cmd_simulate(a: &SimArgs) -> Result<(), Failure> {
    let scenario: Scenario = a.scenario.parse().map_err(classify)?;
    let truth = simulate_scenario(scenario, a.n, a.seed).map_err(classify)?;
    let mut csv = String::from("theta,x,s\n");
    for i in 0..truth.x.len() {
        csv.push_str(&format!("{},{},{}\n", truth.theta[i], truth.x[i], truth.s[i]));
    }
    write_file(&a.output, &csv)
}

fn cmd_eightschools(out: &mut dyn Write) -> Result<(), Failure> {
    let report = bench::eight_schools().map_err(classify)?;
    let _ = write!(out, "{report}");
    Ok(())
}
