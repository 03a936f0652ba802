use std::fs::File;
use std::io::{BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use serde_json::{json, Value};
use sessionrv::format::fmt_f64;
use sessionrv::io::read_moments;
use sessionrv::market_data::{
    parse_ticks, MarketDataError, SessionCalendar, SessionLabel, TickSeries, Tz, DEFAULT_TIMEZONE,
};
use sessionrv::moments::{finite_sample_density, finite_sample_density_angle, finite_sample_moment};
use sessionrv::pipeline::{
    analyze, fit_profiles, parse_delta_list, remove_all, write_fit_files, write_json, write_reports, AnalysisConfig,
    PipelineError,
};
use sessionrv::synth::{generate_dataset, SimConfig, SimError};

#[derive(Parser)]
#[command(name = "sessionrv", version, about = "Session realized volatility and standardized-return moments")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Tick CSV → RV tables, signature curves, zone returns, moment profiles and decay fits.
    Analyze(AnalyzeArgs),
    /// Synthetic ticks and the truth they were drawn from.
    Simulate(SimulateArgs),
    /// Finite-sample density of the standardized return on a grid.
    Density(DensityArgs),
    /// Decay-curve fits from an existing moments.csv.
    Fit(FitArgs),
}

#[derive(Args)]
struct AnalyzeArgs {
    /// JSON analysis config; flags override its values.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Tick CSV (repeatable; files are concatenated in order).
    #[arg(long)]
    input: Vec<PathBuf>,
    /// Calendar JSON. Without it the TSE sessions are used on every date present in the data.
    #[arg(long)]
    calendar: Option<PathBuf>,
    /// Sampling intervals in minutes, e.g. `1..40` or `1,5,10,30`.
    #[arg(long)]
    deltas: Option<String>,
    #[arg(long, value_delimiter = ',')]
    sessions: Option<Vec<SessionLabel>>,
    #[arg(long)]
    out: Option<PathBuf>,
    /// telescoped | openclose
    #[arg(long)]
    std_mode: Option<String>,
    /// Smallest Δ included in the decay fits.
    #[arg(long)]
    delta_min: Option<u32>,
    /// Weight fit points by inverse squared standard error.
    #[arg(long)]
    weighted: bool,
    /// Print the resolved config and exit.
    #[arg(long)]
    emit_config: bool,
}

#[derive(Args)]
struct SimulateArgs {
    /// JSON simulation config.
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    out: Option<PathBuf>,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    days: Option<usize>,
    #[arg(long)]
    emit_config: bool,
}

#[derive(Clone, Copy, ValueEnum)]
enum Grid {
    /// x = sqrt(n) sin θ with θ uniform on [-π/2, π/2]; the density in θ stays bounded for every n.
    Angle,
    /// x uniform on [lo, hi].
    Linear,
}

#[derive(Args)]
struct DensityArgs {
    #[arg(long)]
    n: u64,
    #[arg(long, value_enum, default_value = "angle")]
    grid: Grid,
    #[arg(long, default_value_t = 100_001)]
    points: usize,
    /// Linear grid bounds; default ±sqrt(n).
    #[arg(long, allow_hyphen_values = true)]
    lo: Option<f64>,
    #[arg(long, allow_hyphen_values = true)]
    hi: Option<f64>,
    /// Output CSV; stdout when absent.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct FitArgs {
    /// moments.csv written by `analyze`.
    #[arg(long)]
    input: PathBuf,
    #[arg(long)]
    out: PathBuf,
    #[arg(long, value_delimiter = ',')]
    sessions: Option<Vec<SessionLabel>>,
    #[arg(long)]
    delta_min: Option<u32>,
    #[arg(long)]
    weighted: bool,
}

#[derive(Debug)]
struct CliError {
    kind: &'static str,
    code: u8,
    message: String,
}

impl CliError {
    fn config(message: impl Into<String>) -> Self {
        Self { kind: "config", code: 2, message: message.into() }
    }

    fn data(message: impl Into<String>) -> Self {
        Self { kind: "data", code: 3, message: message.into() }
    }

    fn numerical(message: impl Into<String>) -> Self {
        Self { kind: "numerical", code: 4, message: message.into() }
    }
}

impl From<PipelineError> for CliError {
    fn from(e: PipelineError) -> Self {
        match e {
            PipelineError::Config(m) => CliError::config(m),
            PipelineError::Data(m) => CliError::data(m),
            PipelineError::Numerical(m) => CliError::numerical(m),
            PipelineError::Io(e) => CliError::config(format!("cannot write output: {e}")),
        }
    }
}

impl From<SimError> for CliError {
    fn from(e: SimError) -> Self {
        match e {
            SimError::Io(e) => CliError::config(format!("cannot write output: {e}")),
            other => CliError::config(other.to_string()),
        }
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match cli.command {
        Command::Analyze(a) => cmd_analyze(a),
        Command::Simulate(a) => cmd_simulate(a),
        Command::Density(a) => cmd_density(a),
        Command::Fit(a) => cmd_fit(a),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            let report = json!({"error": {"kind": e.kind, "exit_code": e.code, "message": e.message}});
            eprintln!("{report}");
            ExitCode::from(e.code)
        }
    }
}

fn read_json<T: serde::de::DeserializeOwned>(path: &Path) -> Result<T, CliError> {
    let f = File::open(path).map_err(|e| CliError::config(format!("{}: {e}", path.display())))?;
    serde_json::from_reader(BufReader::new(f)).map_err(|e| CliError::config(format!("{}: {e}", path.display())))
}

fn print_json(v: &Value) -> Result<(), CliError> {
    let stdout = std::io::stdout();
    write_json(&mut stdout.lock(), v).map_err(|e| CliError::config(e.to_string()))
}

fn resolve_analysis(a: &AnalyzeArgs) -> Result<AnalysisConfig, CliError> {
    let mut cfg: AnalysisConfig = match &a.config {
        Some(p) => read_json(p)?,
        None => AnalysisConfig::default(),
    };
    if !a.input.is_empty() {
        cfg.inputs = a.input.clone();
    }
    if a.calendar.is_some() {
        cfg.calendar = a.calendar.clone();
    }
    if let Some(d) = &a.deltas {
        cfg.deltas = parse_delta_list(d).map_err(CliError::config)?;
    }
    if let Some(s) = &a.sessions {
        cfg.sessions = s.clone();
    }
    if a.out.is_some() {
        cfg.out = a.out.clone();
    }
    if let Some(m) = &a.std_mode {
        cfg.std_mode = m.clone();
    }
    if let Some(d) = a.delta_min {
        cfg.delta_min = d;
    }
    cfg.weighted |= a.weighted;
    Ok(cfg)
}

fn load_calendar(cfg: &AnalysisConfig) -> Result<Option<SessionCalendar>, CliError> {
    let Some(path) = &cfg.calendar else { return Ok(None) };
    let text = std::fs::read_to_string(path).map_err(|e| CliError::config(format!("{}: {e}", path.display())))?;
    SessionCalendar::from_json(&text).map(Some).map_err(|e| CliError::config(format!("{}: {e}", path.display())))
}

fn load_ticks(paths: &[PathBuf], tz: Tz) -> Result<TickSeries, CliError> {
    let mut parts = Vec::with_capacity(paths.len());
    for p in paths {
        let f = File::open(p).map_err(|e| CliError::data(format!("{}: {e}", p.display())))?;
        let series = parse_ticks(BufReader::new(f), tz).map_err(|e| CliError::data(format!("{}: {e}", p.display())))?;
        parts.push(series);
    }
    TickSeries::concat(parts).map_err(|e| match e {
        MarketDataError::NonMonotoneTimestamp { timestamp, .. } => {
            CliError::data(format!("input files overlap or are out of order at {timestamp}"))
        }
        other => CliError::data(other.to_string()),
    })
}

fn cmd_analyze(a: AnalyzeArgs) -> Result<(), CliError> {
    let cfg = resolve_analysis(&a)?;
    if a.emit_config {
        return print_json(&json!(cfg));
    }
    cfg.validate()?;
    if cfg.inputs.is_empty() {
        return Err(CliError::config("no input files"));
    }
    let out = cfg.out.clone().ok_or_else(|| CliError::config("no output directory (--out)"))?;
    let calendar = load_calendar(&cfg)?;
    let tz = calendar.as_ref().map_or(DEFAULT_TIMEZONE, SessionCalendar::timezone);
    let ticks = load_ticks(&cfg.inputs, tz)?;
    let calendar = calendar.unwrap_or_else(|| SessionCalendar::tse(ticks.ticks().iter().map(|t| t.timestamp.date())));

    let report = analyze(&ticks, &calendar, &cfg)?;
    let written = write_reports(&report, &out)?;
    for w in &report.warnings {
        eprintln!("warning: {w}");
    }
    print_json(&json!({
        "out": out,
        "files": written.len(),
        "counts": report.summary["counts"],
        "fits": report.fits.iter().map(|f| json!({
            "session": f.session,
            "K": f.kurtosis.params[0], "B4": f.kurtosis.params[1],
            "M6": f.m6.params[0], "B6": f.m6.params[1],
        })).collect::<Vec<_>>(),
    }))
}

fn cmd_simulate(a: SimulateArgs) -> Result<(), CliError> {
    let mut cfg: SimConfig = match &a.config {
        Some(p) => read_json(p)?,
        None => return Err(CliError::config("simulate needs --config")),
    };
    if let Some(s) = a.seed {
        cfg.seed = s;
    }
    if let Some(d) = a.days {
        cfg.days = d;
    }
    if a.emit_config {
        return print_json(&json!(cfg));
    }
    let out = a.out.ok_or_else(|| CliError::config("no output directory (--out)"))?;
    let data = generate_dataset(&cfg)?;

    std::fs::create_dir_all(&out).map_err(|e| CliError::config(format!("{}: {e}", out.display())))?;
    let ticks_path = out.join("ticks.csv");
    let truth_path = out.join("truth.json");
    let written = [ticks_path.clone(), truth_path.clone()];
    let res = (|| -> std::io::Result<()> {
        let mut w = BufWriter::new(File::create(&ticks_path)?);
        data.write_csv(&mut w)?;
        w.flush()?;
        let mut w = BufWriter::new(File::create(&truth_path)?);
        write_json(&mut w, &json!(data.truth()))?;
        w.flush()
    })();
    if let Err(e) = res {
        remove_all(&written);
        return Err(CliError::config(format!("cannot write output: {e}")));
    }

    let n = data.days.len() as f64;
    let mean = |k: usize| data.days.iter().map(|d| d.sigma2[k]).sum::<f64>() / n;
    print_json(&json!({
        "days": data.days.len(),
        "ticks": data.tick_count(),
        "mean_sigma2": {"MS": mean(0), "AS": mean(1)},
        "ticks_csv": ticks_path,
        "truth_json": truth_path,
    }))
}

fn cmd_density(a: DensityArgs) -> Result<(), CliError> {
    if a.n < 2 {
        return Err(CliError::config(format!("density needs n >= 2, got {}", a.n)));
    }
    if a.points < 2 {
        return Err(CliError::config("need at least 2 grid points"));
    }
    let root = (a.n as f64).sqrt();
    let step = |lo: f64, hi: f64, i: usize| lo + (hi - lo) * i as f64 / (a.points - 1) as f64;
    let half_pi = std::f64::consts::FRAC_PI_2;

    let mut buf: Vec<u8> = Vec::new();
    writeln!(buf, "x,theta,density,density_dtheta").expect("write to memory");
    for i in 0..a.points {
        let (x, theta) = match a.grid {
            Grid::Angle => {
                let theta = step(-half_pi, half_pi, i);
                (root * theta.sin(), theta)
            }
            Grid::Linear => {
                let x = step(a.lo.unwrap_or(-root), a.hi.unwrap_or(root), i);
                (x, if x.abs() <= root { (x / root).asin() } else { f64::NAN })
            }
        };
        let density = finite_sample_density(x, a.n).map_err(|e| CliError::config(e.to_string()))?;
        let dtheta = if theta.is_nan() {
            0.0
        } else {
            finite_sample_density_angle(theta, a.n).map_err(|e| CliError::config(e.to_string()))?
        };
        // θ is undefined off the support
        let theta = if theta.is_nan() { String::new() } else { fmt_f64(theta) };
        writeln!(buf, "{},{theta},{},{}", fmt_f64(x), fmt_f64(density), fmt_f64(dtheta)).expect("write to memory");
    }
    let m = |k| fmt_f64(finite_sample_moment(a.n, k));
    writeln!(buf, "moments,{},{},{}", m(1), m(2), m(3)).expect("write to memory");

    match &a.out {
        Some(p) => std::fs::write(p, &buf).map_err(|e| CliError::config(format!("{}: {e}", p.display()))),
        None => std::io::stdout().write_all(&buf).map_err(|e| CliError::config(e.to_string())),
    }
}

fn cmd_fit(a: FitArgs) -> Result<(), CliError> {
    let f = File::open(&a.input).map_err(|e| CliError::data(format!("{}: {e}", a.input.display())))?;
    let profiles =
        read_moments(BufReader::new(f)).map_err(|e| CliError::data(format!("{}: {e}", a.input.display())))?;
    let mut cfg = AnalysisConfig::default();
    if let Some(s) = a.sessions {
        cfg.sessions = s;
    }
    if let Some(d) = a.delta_min {
        cfg.delta_min = d;
    }
    cfg.weighted = a.weighted;
    let (fits, warnings) = fit_profiles(&profiles, &cfg)?;
    if fits.is_empty() {
        return Err(CliError::data("no selected session in the moments file"));
    }
    for w in &warnings {
        eprintln!("warning: {w}");
    }
    for f in &fits {
        for r in [&f.kurtosis, &f.m6] {
            if !r.converged {
                eprintln!("warning: {} {:?} fit did not converge", f.session, r.model);
            }
        }
    }
    write_fit_files(&fits, &a.out)?;
    print_json(&json!(fits
        .iter()
        .map(|f| json!({
            "session": f.session,
            "kurtosis": f.kurtosis.to_json(),
            "m6": f.m6.to_json(),
        }))
        .collect::<Vec<_>>()))
}
