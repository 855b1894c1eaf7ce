use std::ffi::OsString;
use std::fmt::Write as _;
use std::io::Write as _;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{anyhow, Context};
use clap::{ArgAction, Args, CommandFactory, Parser, Subcommand, ValueEnum};
use photostat::analytics::{fano_curve, log_grid, saturation, sweep_kind};
use photostat::inversion::{counting_distribution, moment_residuals, suggested_n_max};
use photostat::report::deadtime_comparison;
use photostat::simulator::{fano_curve_mc, simulate, window_stats, write_trace, McPlan};
use photostat::validation::{run_suite, Fault, ValidationOptions};
use photostat::{
    DetectorParams, InversionConfig, InversionMethod, PumpParams, RateParams, SimConfig, SimMode, WindowPartition,
    WindowSpec,
};

const EXIT_INVALID: u8 = 2;
const EXIT_NUMERICAL: u8 = 3;
const EXIT_VALIDATION: u8 = 4;

/// Counting statistics of a continuously excited two-level single-photon source.
#[derive(Debug, Parser)]
#[command(name = "photostat", version, args_override_self = true)]
struct Cli {
    /// TOML file whose keys mirror the flag names; flags on the command line win.
    #[arg(long, global = true, value_name = "FILE")]
    config: Option<PathBuf>,

    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Asymptotic Fano factor against μ1/μ2, optionally with Monte Carlo estimates.
    FanoCurve(FanoCurveArgs),
    /// P_T(n) for one window length by numerical Laplace inversion.
    CountingDist(CountingDistArgs),
    /// Emission rate against pump power.
    Saturation(SaturationArgs),
    /// Cross-checks analytic, inversion and Monte Carlo routes.
    Validate(ValidateArgs),
    /// Simulates one detection stream and reports window statistics.
    Simulate(SimulateArgs),
    /// Analytic dead-time Fano factor next to both simulator modes.
    DeadtimeReport(DeadtimeReportArgs),
}

#[derive(Debug, Clone, Copy, ValueEnum)]
enum Mode {
    Physical,
    PaperRenewal,
}

impl From<Mode> for SimMode {
    fn from(m: Mode) -> Self {
        match m {
            Mode::Physical => SimMode::Physical,
            Mode::PaperRenewal => SimMode::PaperRenewal,
        }
    }
}

#[derive(Debug, Clone, Copy, ValueEnum)]
enum Partition {
    Contiguous,
    Restart,
}

#[derive(Debug, Clone, Copy, ValueEnum)]
enum Method {
    Euler,
    Talbot,
}

#[derive(Debug, Clone, Copy, ValueEnum)]
enum InjectedFault {
    EtaMiswired,
}

#[derive(Debug, Args)]
struct OutputArg {
    /// Output file; standard output when absent.
    #[arg(short, long, value_name = "FILE")]
    output: Option<PathBuf>,
}

#[derive(Debug, Args)]
struct SeedArg {
    #[arg(long, env = "PHOTOSTAT_SEED", default_value_t = 1)]
    seed: u64,
}

#[derive(Debug, Args)]
struct FanoCurveArgs {
    /// Detection efficiency η.
    #[arg(long, default_value_t = 1.0)]
    eta: f64,
    /// Dead time in units of τ = 1/μ2.
    #[arg(long, default_value_t = 0.0)]
    deadtime: f64,
    #[arg(long, default_value_t = 1e-3)]
    ratio_min: f64,
    #[arg(long, default_value_t = 1e3)]
    ratio_max: f64,
    #[arg(long, default_value_t = 121)]
    points: usize,
    /// Emission rate μ2 = 1/τ.
    #[arg(long, default_value_t = 1.0)]
    mu2: f64,
    /// Add Monte Carlo estimates at every grid point.
    #[arg(long)]
    mc: bool,
    #[arg(long, default_value_t = 10_000)]
    windows: usize,
    /// Window length in mean inter-detection intervals.
    #[arg(long, default_value_t = 50.0)]
    intervals_per_window: f64,
    #[arg(long, value_enum, default_value_t = Mode::PaperRenewal)]
    mode: Mode,
    #[command(flatten)]
    seed: SeedArg,
    #[command(flatten)]
    out: OutputArg,
}

#[derive(Debug, Args)]
struct InversionArgs {
    #[arg(long, value_enum, default_value_t = Method::Euler)]
    method: Method,
    /// Transform evaluations per inversion (default 64 for Euler, 24 for Talbot).
    #[arg(long)]
    nodes: Option<usize>,
    #[arg(long, default_value_t = 1e-9)]
    precision: f64,
}

impl InversionArgs {
    fn config(&self) -> photostat::Result<InversionConfig> {
        match self.method {
            Method::Euler => {
                InversionConfig::new(InversionMethod::FourierEuler, self.nodes.unwrap_or(64), self.precision)
            }
            Method::Talbot => {
                InversionConfig::new(InversionMethod::FixedTalbot, self.nodes.unwrap_or(24), self.precision)
            }
        }
    }
}

#[derive(Debug, Args)]
struct EmitterArgs {
    /// Absorption rate μ1.
    #[arg(long, default_value_t = 1.0)]
    mu1: f64,
    /// Emission rate μ2 = 1/τ.
    #[arg(long, default_value_t = 1.0)]
    mu2: f64,
    #[arg(long, default_value_t = 1.0)]
    eta: f64,
    /// Dead time in units of τ = 1/μ2.
    #[arg(long, default_value_t = 0.0)]
    deadtime: f64,
}

impl EmitterArgs {
    fn params(&self) -> photostat::Result<(RateParams, DetectorParams)> {
        let rates = RateParams::new(self.mu1, self.mu2)?;
        let detector = DetectorParams::new(self.eta, self.deadtime / self.mu2)?;
        Ok((rates, detector))
    }
}

#[derive(Debug, Args)]
struct CountingDistArgs {
    #[command(flatten)]
    emitter: EmitterArgs,
    /// Window length T.
    #[arg(long)]
    window: f64,
    /// Largest n; defaults to a value leaving negligible tail mass.
    #[arg(long)]
    n_max: Option<usize>,
    #[command(flatten)]
    inversion: InversionArgs,
    #[command(flatten)]
    out: OutputArg,
}

#[derive(Debug, Args)]
struct SaturationArgs {
    /// Absorption cross-section: μ1 = α·P.
    #[arg(long)]
    alpha: f64,
    /// Radiative lifetime τ.
    #[arg(long)]
    tau: f64,
    /// Explicit pump powers; overrides the logarithmic grid.
    #[arg(long, value_delimiter = ',', action = ArgAction::Set)]
    powers: Vec<f64>,
    #[arg(long, default_value_t = 1e-2)]
    power_min: f64,
    #[arg(long, default_value_t = 1e2)]
    power_max: f64,
    #[arg(long, default_value_t = 41)]
    points: usize,
    #[command(flatten)]
    out: OutputArg,
}

#[derive(Debug, Args)]
struct ValidateArgs {
    /// Smaller Monte Carlo samples and coarser oracle grids.
    #[arg(long)]
    quick: bool,
    #[command(flatten)]
    seed: SeedArg,
    #[arg(long, value_enum, hide = true)]
    inject_fault: Option<InjectedFault>,
}

#[derive(Debug, Args)]
struct SimulateArgs {
    #[command(flatten)]
    emitter: EmitterArgs,
    /// Window length T.
    #[arg(long)]
    window: f64,
    #[arg(long, default_value_t = 10_000)]
    windows: usize,
    #[arg(long, value_enum, default_value_t = Mode::Physical)]
    mode: Mode,
    #[arg(long, value_enum, default_value_t = Partition::Contiguous)]
    partition: Partition,
    /// Time simulated and discarded before the first window.
    #[arg(long, default_value_t = 0.0)]
    burn_in: f64,
    /// Write detection timestamps to this file.
    #[arg(long, value_name = "FILE")]
    trace_out: Option<PathBuf>,
    #[command(flatten)]
    seed: SeedArg,
    #[command(flatten)]
    out: OutputArg,
}

#[derive(Debug, Args)]
struct DeadtimeReportArgs {
    #[arg(long, default_value_t = 0.5)]
    eta: f64,
    /// Dead times in units of τ.
    #[arg(long, value_delimiter = ',', action = ArgAction::Set, default_values_t = [0.1, 0.5, 1.0])]
    deadtimes: Vec<f64>,
    #[arg(long, value_delimiter = ',', action = ArgAction::Set, default_values_t = [0.01, 0.1, 1.0, 10.0, 100.0])]
    ratios: Vec<f64>,
    #[arg(long, default_value_t = 1.0)]
    mu2: f64,
    #[arg(long, default_value_t = 10_000)]
    windows: usize,
    #[arg(long, default_value_t = 50.0)]
    intervals_per_window: f64,
    #[command(flatten)]
    seed: SeedArg,
    #[command(flatten)]
    out: OutputArg,
}

/// Marks errors in the invocation itself rather than in the computation.
#[derive(Debug, thiserror::Error)]
#[error("{0}")]
struct UsageError(String);

#[derive(Debug, thiserror::Error)]
#[error("{failed} validation check(s) failed")]
struct ValidationFailed {
    failed: usize,
}

fn exit_code(err: &anyhow::Error) -> u8 {
    for cause in err.chain() {
        if cause.is::<UsageError>() {
            return EXIT_INVALID;
        }
        if cause.is::<ValidationFailed>() {
            return EXIT_VALIDATION;
        }
        if let Some(e) = cause.downcast_ref::<photostat::Error>() {
            return match e {
                e if e.is_numerical() => EXIT_NUMERICAL,
                photostat::Error::Pole { .. } | photostat::Error::Simulation(_) => EXIT_NUMERICAL,
                _ => EXIT_INVALID,
            };
        }
    }
    1
}

fn toml_flag_values(key: &str, value: &toml::Value) -> anyhow::Result<Vec<OsString>> {
    let flag = format!("--{key}");
    let scalar = |v: &toml::Value| -> anyhow::Result<String> {
        match v {
            toml::Value::String(s) => Ok(s.clone()),
            toml::Value::Integer(i) => Ok(i.to_string()),
            toml::Value::Float(f) => Ok(f.to_string()),
            other => Err(anyhow!(UsageError(format!(
                "config key `{key}`: unsupported value {other}"
            )))),
        }
    };
    Ok(match value {
        toml::Value::Boolean(true) => vec![flag.into()],
        toml::Value::Boolean(false) => vec![],
        toml::Value::Array(items) => {
            let joined = items.iter().map(scalar).collect::<anyhow::Result<Vec<_>>>()?.join(",");
            vec![flag.into(), joined.into()]
        }
        other => vec![flag.into(), scalar(other)?.into()],
    })
}

/// Flags from the config file: top-level keys, then those of the `[<command>]` table.
fn config_args(path: &Path, command: &str) -> anyhow::Result<Vec<OsString>> {
    let text =
        std::fs::read_to_string(path).map_err(|e| UsageError(format!("cannot read config {}: {e}", path.display())))?;
    let table: toml::Table = text
        .parse()
        .map_err(|e| UsageError(format!("cannot parse config {}: {e}", path.display())))?;
    let mut args = Vec::new();
    for (key, value) in &table {
        if !value.is_table() {
            args.extend(toml_flag_values(key, value)?);
        }
    }
    if let Some(section) = table.get(command).and_then(|v| v.as_table()) {
        for (key, value) in section {
            args.extend(toml_flag_values(key, value)?);
        }
    }
    Ok(args)
}

/// Splices config-file flags in right after the subcommand, so that later
/// command-line flags override them.
fn expand_config(argv: Vec<OsString>) -> anyhow::Result<Vec<OsString>> {
    let mut config = None;
    let mut command_at = None;
    let mut i = 1;
    while i < argv.len() {
        let arg = argv[i].to_string_lossy();
        if arg == "--config" {
            config = argv.get(i + 1).map(PathBuf::from);
            i += 2;
            continue;
        }
        if let Some(path) = arg.strip_prefix("--config=") {
            config = Some(PathBuf::from(path));
        } else if command_at.is_none() && Cli::command().find_subcommand(arg.as_ref()).is_some() {
            command_at = Some(i);
        }
        i += 1;
    }
    let (Some(path), Some(at)) = (config, command_at) else {
        return Ok(argv);
    };
    let name = Cli::command()
        .find_subcommand(argv[at].to_string_lossy().as_ref())
        .map(|c| c.get_name().to_owned())
        .unwrap_or_default();
    let extra = config_args(&path, &name)?;
    let mut out = argv;
    out.splice(at + 1..at + 1, extra);
    Ok(out)
}

/// Writes `contents` to `path` through a temporary file in the same directory,
/// or to standard output.
fn emit(out: &OutputArg, contents: &str) -> anyhow::Result<()> {
    match &out.output {
        None => {
            std::io::stdout().lock().write_all(contents.as_bytes())?;
            Ok(())
        }
        Some(path) => write_atomic(path, |f| f.write_all(contents.as_bytes())),
    }
}

fn write_atomic(path: &Path, fill: impl FnOnce(&mut std::fs::File) -> std::io::Result<()>) -> anyhow::Result<()> {
    let dir = path
        .parent()
        .filter(|p| !p.as_os_str().is_empty())
        .unwrap_or(Path::new("."));
    let mut tmp = tempfile::NamedTempFile::new_in(dir).with_context(|| format!("cannot write in {}", dir.display()))?;
    fill(tmp.as_file_mut())?;
    tmp.as_file_mut().sync_all()?;
    tmp.persist(path)
        .with_context(|| format!("cannot write {}", path.display()))?;
    Ok(())
}

fn cmd_fano_curve(a: &FanoCurveArgs) -> anyhow::Result<()> {
    let grid = log_grid(a.ratio_min, a.ratio_max, a.points)?;
    // validates η, D and μ2 before any sweep starts
    sweep_kind(grid[0], a.mu2, a.eta, a.deadtime)?;
    let analytic = fano_curve(&grid, a.mu2, a.eta, a.deadtime)?;
    let mc = if a.mc {
        let plan = McPlan {
            window_count: a.windows,
            intervals_per_window: a.intervals_per_window,
            seed: a.seed.seed,
            mode: a.mode.into(),
        };
        Some(fano_curve_mc(&grid, a.mu2, a.eta, a.deadtime, &plan)?)
    } else {
        None
    };
    let mut csv = String::new();
    writeln!(csv, "# photostat fano-curve")?;
    writeln!(csv, "# mu2={:?}", a.mu2)?;
    if a.mc {
        writeln!(
            csv,
            "# mc: mode={:?} windows={} intervals_per_window={:?} seed={}",
            a.mode, a.windows, a.intervals_per_window, a.seed.seed
        )?;
        writeln!(csv, "ratio,eta,deadtime_over_tau,fano_analytic,fano_mc,fano_mc_stderr")?;
    } else {
        writeln!(csv, "ratio,eta,deadtime_over_tau,fano_analytic")?;
    }
    for (i, p) in analytic.points.iter().enumerate() {
        write!(csv, "{:?},{:?},{:?},{:?}", p.ratio, a.eta, a.deadtime, p.fano)?;
        if let Some(mc) = &mc {
            let q = mc.points[i];
            write!(csv, ",{:?},{:?}", q.fano, q.stderr.unwrap_or(f64::NAN))?;
        }
        writeln!(csv)?;
    }
    emit(&a.out, &csv)
}

fn cmd_counting_dist(a: &CountingDistArgs) -> anyhow::Result<()> {
    let (rates, detector) = a.emitter.params()?;
    let kind = photostat::DistributionKind::new(rates, detector);
    let window = WindowSpec::new(a.window)?;
    let cfg = a.inversion.config()?;
    let n_max = a.n_max.unwrap_or_else(|| suggested_n_max(&kind, &window));
    let dist = counting_distribution(&kind, &window, n_max, &cfg)?;
    let mut csv = String::new();
    writeln!(csv, "# photostat counting-dist")?;
    writeln!(
        csv,
        "# mu1={:?} mu2={:?} eta={:?} deadtime_over_tau={:?} window={:?} method={:?} nodes={} precision={:?}",
        a.emitter.mu1,
        a.emitter.mu2,
        a.emitter.eta,
        a.emitter.deadtime,
        a.window,
        a.inversion.method,
        cfg.node_count(),
        cfg.precision_target()
    )?;
    writeln!(csv, "n,probability")?;
    for (n, p) in dist.probs.iter().enumerate() {
        writeln!(csv, "{n},{p:?}")?;
    }
    writeln!(csv, "# tail_mass={:?}", dist.tail_mass)?;
    writeln!(csv, "# mean={:?} variance={:?}", dist.mean(), dist.variance())?;
    match moment_residuals(&kind, &dist) {
        Some(r) => writeln!(
            csv,
            "# mean_residual={:?} variance_residual={:?}",
            r.mean_relative, r.variance_relative
        )?,
        None => writeln!(csv, "# moment residuals: no closed form with dead time")?,
    }
    emit(&a.out, &csv)
}

fn cmd_saturation(a: &SaturationArgs) -> anyhow::Result<()> {
    let powers = if a.powers.is_empty() {
        log_grid(a.power_min, a.power_max, a.points)?
    } else {
        a.powers.clone()
    };
    let results = powers
        .iter()
        .map(|&p| PumpParams::new(a.alpha, p, a.tau).map(|pp| (p, saturation(&pp))))
        .collect::<photostat::Result<Vec<_>>>()?;
    let mut csv = String::new();
    writeln!(csv, "# photostat saturation")?;
    writeln!(csv, "# alpha={:?} tau={:?}", a.alpha, a.tau)?;
    if let Some((_, s)) = results.first() {
        writeln!(
            csv,
            "# rate_saturation={:?} power_saturation={:?}",
            s.rate_saturation, s.power_saturation
        )?;
    }
    writeln!(csv, "power,rate")?;
    for (p, s) in &results {
        writeln!(csv, "{p:?},{:?}", s.rate_asymptotic)?;
    }
    emit(&a.out, &csv)
}

fn cmd_validate(a: &ValidateArgs) -> anyhow::Result<()> {
    let report = run_suite(&ValidationOptions {
        quick: a.quick,
        seed: a.seed.seed,
        fault: a.inject_fault.map(|InjectedFault::EtaMiswired| Fault::EtaMiswired),
    });
    let mut stdout = std::io::stdout().lock();
    for c in &report.checks {
        writeln!(
            stdout,
            "{} {:<36} {}",
            if c.passed { "PASS" } else { "FAIL" },
            c.name,
            c.detail
        )?;
    }
    let failed = report.failures().count();
    if failed > 0 {
        return Err(ValidationFailed { failed }.into());
    }
    writeln!(stdout, "all {} checks passed", report.checks.len())?;
    Ok(())
}

fn cmd_simulate(a: &SimulateArgs) -> anyhow::Result<()> {
    let (rates, detector) = a.emitter.params()?;
    let partition = match a.partition {
        Partition::Contiguous => WindowPartition::Contiguous,
        Partition::Restart => WindowPartition::Restart,
    };
    let cfg = SimConfig::new(
        rates,
        detector,
        WindowSpec::new(a.window)?,
        a.windows,
        a.seed.seed,
        a.mode.into(),
    )?
    .with_partition(partition)
    .with_burn_in(a.burn_in)?;
    let trace = simulate(&cfg);
    let stats = window_stats(&trace, &cfg)?;
    if let Some(path) = &a.trace_out {
        write_atomic(path, |f| write_trace(&trace, &cfg, std::io::BufWriter::new(f)))?;
    }
    let opt = |v: Option<f64>| v.map_or_else(String::new, |x| format!("{x:?}"));
    let mut csv = String::new();
    writeln!(csv, "# photostat simulate")?;
    writeln!(
        csv,
        "# mu1={:?} mu2={:?} eta={:?} deadtime_over_tau={:?} window={:?} windows={} mode={:?} partition={:?} burn_in={:?} seed={}",
        a.emitter.mu1,
        a.emitter.mu2,
        a.emitter.eta,
        a.emitter.deadtime,
        a.window,
        a.windows,
        a.mode,
        a.partition,
        a.burn_in,
        a.seed.seed
    )?;
    if let Some(reason) = &stats.fano_missing_reason {
        writeln!(csv, "# fano undefined: {reason}")?;
    }
    writeln!(
        csv,
        "mean,mean_stderr,variance,variance_stderr,fano,fano_stderr,mandel_q,total_detections"
    )?;
    writeln!(
        csv,
        "{:?},{:?},{:?},{:?},{},{},{},{}",
        stats.mean,
        stats.mean_stderr,
        stats.variance,
        stats.variance_stderr,
        opt(stats.fano),
        opt(stats.fano_stderr),
        opt(stats.mandel_q()),
        stats.total_detections
    )?;
    emit(&a.out, &csv)
}

fn cmd_deadtime_report(a: &DeadtimeReportArgs) -> anyhow::Result<()> {
    let plan = McPlan {
        window_count: a.windows,
        intervals_per_window: a.intervals_per_window,
        seed: a.seed.seed,
        mode: SimMode::PaperRenewal,
    };
    let rows = deadtime_comparison(a.eta, &a.deadtimes, &a.ratios, a.mu2, &plan)?;
    let mut csv = String::new();
    writeln!(csv, "# photostat deadtime-report")?;
    writeln!(
        csv,
        "# eta={:?} mu2={:?} windows={} intervals_per_window={:?} seed={}",
        a.eta, a.mu2, a.windows, a.intervals_per_window, a.seed.seed
    )?;
    writeln!(
        csv,
        "# paper_z: renewal estimate minus analytic, in standard errors; mode_gap_z: physical minus renewal"
    )?;
    writeln!(
        csv,
        "deadtime_over_tau,ratio,fano_analytic,fano_paper,fano_paper_stderr,fano_physical,fano_physical_stderr,paper_z,mode_gap_z"
    )?;
    for r in &rows {
        writeln!(
            csv,
            "{:?},{:?},{:?},{:?},{:?},{:?},{:?},{:?},{:?}",
            r.deadtime_over_tau,
            r.ratio,
            r.analytic,
            r.paper_fano,
            r.paper_stderr,
            r.physical_fano,
            r.physical_stderr,
            r.paper_z(),
            r.mode_gap_z()
        )?;
    }
    emit(&a.out, &csv)
}

fn run(cli: &Cli) -> anyhow::Result<()> {
    match &cli.command {
        Command::FanoCurve(a) => cmd_fano_curve(a),
        Command::CountingDist(a) => cmd_counting_dist(a),
        Command::Saturation(a) => cmd_saturation(a),
        Command::Validate(a) => cmd_validate(a),
        Command::Simulate(a) => cmd_simulate(a),
        Command::DeadtimeReport(a) => cmd_deadtime_report(a),
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let argv = match expand_config(std::env::args_os().collect()) {
        Ok(argv) => argv,
        Err(e) => {
            eprintln!("error: {e:#}");
            return ExitCode::from(exit_code(&e));
        }
    };
    let cli = match Cli::try_parse_from(argv) {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() {
                ExitCode::from(EXIT_INVALID)
            } else {
                ExitCode::SUCCESS
            };
        }
    };
    match run(&cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(exit_code(&e))
        }
    }
}
