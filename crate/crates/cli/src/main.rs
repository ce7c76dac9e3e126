//! `lqgsim`: sample fields, extract metric balls, run ensembles and print
//! closed-form predictions.

use std::fs;
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{bail, Context};
use clap::{Parser, Subcommand, ValueEnum};
use lqg_core::formulas::{formula_table, gamma_grid, FormulaError, FormulaRow};
use lqg_core::harness::{self, ExperimentConfig, HarnessError, OutputFormat, RunOptions};
use lqg_core::io::{self as lio, RleMask};
use lqg_core::metric::{build_weights, metric_ball, shortest_distances};
use lqg_core::oracle::run_cross_checks;
use lqg_core::{gff, DGammaModel, GammaParams, Normalization, Sampler};

const EXIT_VALIDATION: u8 = 2;

#[derive(Parser)]
#[command(name = "lqgsim", version, about = "LQG metric ball simulation and dimension estimation")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run an ensemble experiment from a JSON configuration.
    Run {
        #[arg(long)]
        config: PathBuf,
        /// Output formats written to the configured output directory.
        #[arg(long, value_delimiter = ',', default_values = ["json", "csv"])]
        format: Vec<Format>,
        /// Ignore and do not update the result cache.
        #[arg(long)]
        no_cache: bool,
        /// Debug: replace every field by zero (never cached).
        #[arg(long)]
        zero_field: bool,
        /// Also compute the diameter-sum diagnostic.
        #[arg(long)]
        diameter_sum: bool,
    },
    /// Print the closed-form dimension formulas.
    Formulas {
        /// A single coupling or a grid `lo:hi:count`.
        #[arg(long, default_value = "1.632993161855452")]
        gamma: String,
        /// exact | watabiki | quad | user:<value>
        #[arg(long, default_value = "exact")]
        d_model: String,
        /// Points sampled across the thick-point window per coupling.
        #[arg(long, default_value_t = 0)]
        alpha_grid: usize,
        #[arg(long, value_enum, default_value_t = TableFormat::Csv)]
        format: TableFormat,
    },
    /// Sample a calibrated field and save it (binary, or JSON for `.json`).
    Sample {
        #[arg(long)]
        n: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long)]
        out: PathBuf,
        /// Pin the circle average around the origin at this radius to zero.
        #[arg(long)]
        pin_radius: Option<f64>,
    },
    /// Extract the metric ball of radius `s` around the origin of a field.
    Ball {
        #[arg(long)]
        field: PathBuf,
        #[arg(long, default_value = "1.632993161855452")]
        gamma: f64,
        #[arg(long, default_value = "exact")]
        d_model: String,
        #[arg(long)]
        s: f64,
        #[arg(long)]
        out_prefix: PathBuf,
        /// Also write boundary points as a two-column plot file.
        #[arg(long)]
        emit_plot_data: bool,
    },
    /// Cross-check fast algorithms against brute-force oracles.
    OracleCheck {
        #[arg(long, default_value_t = 2024)]
        seed: u64,
    },
    /// Measure the sampler's variance normalization.
    Calibrate {
        #[arg(long, default_value_t = 512)]
        n: usize,
        #[arg(long, default_value_t = 400)]
        replicates: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        /// Use the exact expected variances instead of Monte Carlo.
        #[arg(long)]
        exact: bool,
    },
}

#[derive(Clone, Copy, ValueEnum)]
enum Format {
    Json,
    Csv,
    Plot,
}

impl From<Format> for OutputFormat {
    fn from(f: Format) -> Self {
        match f {
            Format::Json => OutputFormat::Json,
            Format::Csv => OutputFormat::Csv,
            Format::Plot => OutputFormat::Plot,
        }
    }
}

#[derive(Clone, Copy, ValueEnum)]
enum TableFormat {
    Csv,
    Json,
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = Cli::parse();
    match dispatch(cli.command) {
        Ok(code) => code,
        Err(err) => {
            eprintln!("error: {err:#}");
            ExitCode::from(exit_code(&err))
        }
    }
}

fn exit_code(err: &anyhow::Error) -> u8 {
    if let Some(h) = err.downcast_ref::<HarnessError>() {
        return h.exit_code() as u8;
    }
    if err.downcast_ref::<FormulaError>().is_some() || err.downcast_ref::<serde_json::Error>().is_some() {
        return EXIT_VALIDATION;
    }
    1
}

fn dispatch(command: Command) -> anyhow::Result<ExitCode> {
    match command {
        Command::Run { config, format, no_cache, zero_field, diameter_sum } => {
            run(&config, &format, no_cache, RunOptions { zero_field, diameter_sum })
        }
        Command::Formulas { gamma, d_model, alpha_grid, format } => formulas(&gamma, &d_model, alpha_grid, format),
        Command::Sample { n, seed, out, pin_radius } => sample(n, seed, &out, pin_radius),
        Command::Ball { field, gamma, d_model, s, out_prefix, emit_plot_data } => {
            ball(&field, gamma, &d_model, s, &out_prefix, emit_plot_data)
        }
        Command::OracleCheck { seed } => oracle_check(seed),
        Command::Calibrate { n, replicates, seed, exact } => calibrate(n, replicates, seed, exact),
    }
}

fn run(path: &Path, formats: &[Format], no_cache: bool, opts: RunOptions) -> anyhow::Result<ExitCode> {
    let text = fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
    let cfg: ExperimentConfig = serde_json::from_str(&text)
        .map_err(|e| HarnessError::Validation(format!("{}: {e}", path.display())))?;
    cfg.validate()?;
    let cacheable = !no_cache && !opts.zero_field;
    let cached = if cacheable { harness::cache_lookup(&cfg) } else { None };
    let result = match cached {
        Some(r) => {
            log::info!("cache hit for {:016x}", cfg.hash());
            r
        }
        None => {
            let r = harness::run_experiment_with(&cfg, opts)?;
            if cacheable {
                harness::cache_store(&r)?;
            }
            r
        }
    };
    let formats: Vec<OutputFormat> = formats.iter().map(|&f| f.into()).collect();
    for path in harness::emit(&result, &formats)? {
        println!("wrote {}", path.display());
    }
    let pred = &result.predictions;
    println!("quantity,count,mean,stderr,prediction");
    for a in &result.aggregates {
        let target = match a.quantity.as_str() {
            "euclid_dim" => pred.euclid_boundary_dim.to_string(),
            "quantum_dim" => pred.quantum_boundary_dim.to_string(),
            "spectrum_peak" => pred.spectrum_peak.to_string(),
            _ => String::new(),
        };
        println!("{},{},{},{},{}", a.quantity, a.count, a.mean, a.stderr, target);
    }
    let truncated = result.records.iter().filter(|r| r.truncated).count();
    if truncated > 0 {
        println!("truncated replicates: {truncated} of {}", result.records.len());
    }
    println!("note: {}", result.metadata.caveat);
    Ok(ExitCode::SUCCESS)
}

fn parse_gammas(arg: &str) -> anyhow::Result<Vec<f64>> {
    let parts: Vec<&str> = arg.split(':').collect();
    match parts.as_slice() {
        [g] => Ok(vec![g.trim().parse().context("bad --gamma")?]),
        [lo, hi, count] => Ok(gamma_grid(
            lo.trim().parse().context("bad grid start")?,
            hi.trim().parse().context("bad grid end")?,
            count.trim().parse().context("bad grid count")?,
        )),
        _ => bail!(HarnessError::Validation(format!("--gamma expects a value or lo:hi:count, got {arg}"))),
    }
}

fn formulas(gamma: &str, d_model: &str, alpha_grid: usize, format: TableFormat) -> anyhow::Result<ExitCode> {
    let gammas = parse_gammas(gamma).map_err(|e| HarnessError::Validation(format!("{e:#}")))?;
    let model: DGammaModel = d_model.parse()?;
    let rows = formula_table(&gammas, model, alpha_grid)?;
    let stdout = std::io::stdout();
    let mut out = BufWriter::new(stdout.lock());
    match format {
        TableFormat::Csv => {
            writeln!(out, "{}", FormulaRow::CSV_HEADER)?;
            for row in &rows {
                writeln!(out, "{}", row.to_csv())?;
            }
        }
        TableFormat::Json => writeln!(out, "{}", serde_json::to_string_pretty(&rows)?)?,
    }
    out.flush()?;
    Ok(ExitCode::SUCCESS)
}

fn sample(n: usize, seed: u64, out: &Path, pin_radius: Option<f64>) -> anyhow::Result<ExitCode> {
    let normalization = match pin_radius {
        Some(radius) => Normalization::PinnedCircleAverage { radius },
        None => Normalization::RawZeroBoundary,
    };
    let field = Sampler::calibrated(n)
        .and_then(|s| s.sample(seed, normalization))
        .map_err(|e| HarnessError::Validation(e.to_string()))?;
    if out.extension().is_some_and(|e| e == "json") {
        fs::write(out, lio::field_to_json(&field)?)?;
    } else {
        lio::save_field(&field, out)?;
    }
    let (lo, hi) = field.min_max();
    println!("wrote {} (n = {n}, seed = {seed}, range [{lo:.4}, {hi:.4}])", out.display());
    Ok(ExitCode::SUCCESS)
}

fn with_suffix(prefix: &Path, suffix: &str) -> PathBuf {
    let mut s = prefix.as_os_str().to_owned();
    s.push(suffix);
    PathBuf::from(s)
}

fn ball(
    field_path: &Path,
    gamma: f64,
    d_model: &str,
    s: f64,
    prefix: &Path,
    plot: bool,
) -> anyhow::Result<ExitCode> {
    if !(s.is_finite() && s > 0.0) {
        bail!(HarnessError::Validation(format!("radius must be positive, got {s}")));
    }
    let p = GammaParams::new(gamma, d_model.parse()?)?;
    let field = if field_path.extension().is_some_and(|e| e == "json") {
        lio::field_from_json(&fs::read_to_string(field_path)?)?
    } else {
        lio::load_field(field_path)?
    };
    let w = build_weights(&field, &p)?;
    let geom = w.geometry();
    let d = shortest_distances(&w, &[geom.center_cell()], None)?;
    let ball = metric_ball(&d, s);
    if let Some(parent) = prefix.parent().filter(|p| !p.as_os_str().is_empty()) {
        fs::create_dir_all(parent)?;
    }
    let mut written = Vec::new();
    let path = with_suffix(prefix, ".pbm");
    lio::write_mask_pbm(&ball, BufWriter::new(fs::File::create(&path)?))?;
    written.push(path);
    let path = with_suffix(prefix, ".rle.json");
    fs::write(&path, serde_json::to_string(&RleMask::encode(ball.n, &ball.mask))?)?;
    written.push(path);
    let path = with_suffix(prefix, ".boundary.csv");
    lio::write_boundary_csv(&ball, &d, BufWriter::new(fs::File::create(&path)?))?;
    written.push(path);
    if plot {
        let path = with_suffix(prefix, ".boundary.dat");
        lio::write_plot_data(&ball.boundary_points(), BufWriter::new(fs::File::create(&path)?))?;
        written.push(path);
    }
    for path in &written {
        println!("wrote {}", path.display());
    }
    println!(
        "ball: s = {s}, cells = {}, boundary = {}, touches frame = {}",
        ball.cell_count(),
        ball.boundary.len(),
        ball.touches_frame
    );
    Ok(ExitCode::SUCCESS)
}

fn oracle_check(seed: u64) -> anyhow::Result<ExitCode> {
    let checks = run_cross_checks(seed);
    for c in &checks {
        println!("{} {}: {}", if c.passed { "PASS" } else { "FAIL" }, c.name, c.detail);
    }
    Ok(if checks.iter().all(|c| c.passed) { ExitCode::SUCCESS } else { ExitCode::FAILURE })
}

fn calibrate(n: usize, replicates: usize, seed: u64, exact: bool) -> anyhow::Result<ExitCode> {
    let sampler = Sampler::raw(n).map_err(|e| HarnessError::Validation(e.to_string()))?;
    let factor = if exact { sampler.expected_calibration() } else { sampler.calibrate(replicates, seed) }
        .map_err(|e| HarnessError::Validation(format!("n = {n}: {e}")))?;
    println!("n = {n}, factor = {factor:.6}, default = {:.6}", gff::DEFAULT_CALIBRATION);
    Ok(ExitCode::SUCCESS)
}
