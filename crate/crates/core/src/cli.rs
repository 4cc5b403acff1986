//! Command-line front end: `validate`, `vas`, `map`, `cdf` and `ellipses`.
//!
//! Exit codes: 0 success, 1 evaluation failure, 2 unreadable or malformed
//! input, 3 constraint violation, 4 output write failure.

use std::fs::File;
use std::io::{self, BufWriter, Write};
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand};

use crate::config::{ConfigError, ScenarioConfig};
use crate::evaluate::{ellipse_samples, peb_cdf, peb_map, GridSpec, PebMap, PreparedScenario};
use crate::fim::Model;
use crate::geometry::{build_vas, Point};

/// Environment variable with the default worker thread count.
pub const THREADS_ENV: &str = "MPC_PEB_THREADS";

const PROGRESS_EVERY: usize = 1000;

#[derive(Debug, Parser)]
#[command(name = "mpc-peb", version, about = "Position error bounds for multipath-assisted indoor positioning")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Check a scenario file and report every constraint violation.
    Validate { config: PathBuf },
    /// Dump the virtual anchors of all fixed nodes as CSV.
    Vas {
        config: PathBuf,
        #[arg(long)]
        q_max: Option<usize>,
        /// Output file (stdout if omitted).
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// PEB at every grid point (`map.csv`, optional `map.pgm`).
    Map(RunArgs),
    /// Empirical CDF of the PEB map (`cdf.csv`).
    Cdf(RunArgs),
    /// Error ellipses at the configured sample points (`ellipses.csv`).
    Ellipses(RunArgs),
}

#[derive(Debug, Clone, Args)]
pub struct RunArgs {
    pub config: PathBuf,
    /// Pulse duration, e.g. `0.5ns`, `500ps` or `5e-10` (seconds).
    #[arg(long, value_parser = parse_duration)]
    pub pulse: Option<f64>,
    /// Grid spacing in meters.
    #[arg(long)]
    pub spacing: Option<f64>,
    #[arg(long)]
    pub q_max: Option<usize>,
    /// `full` or `no-overlap`.
    #[arg(long)]
    pub model: Option<Model>,
    #[arg(long, env = THREADS_ENV)]
    pub threads: Option<usize>,
    /// Suppress progress lines.
    #[arg(long)]
    pub quiet: bool,
    /// Output directory (overrides `output.dir`).
    #[arg(long)]
    pub out: Option<PathBuf>,
    /// Also write a graymap of log10 PEB.
    #[arg(long)]
    pub raster: bool,
}

#[derive(Debug, thiserror::Error)]
pub enum CliError {
    #[error("{0}")]
    Input(String),
    #[error("{0}")]
    Constraint(String),
    #[error("cannot write {path}: {source}")]
    Write { path: PathBuf, source: io::Error },
    #[error("evaluation failed: {0}")]
    Eval(String),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            Self::Eval(_) => 1,
            Self::Input(_) => 2,
            Self::Constraint(_) => 3,
            Self::Write { .. } => 4,
        }
    }
}

impl From<ConfigError> for CliError {
    fn from(e: ConfigError) -> Self {
        match e {
            ConfigError::Read { .. } | ConfigError::Parse(_) => Self::Input(e.to_string()),
            ConfigError::Constraint(_) => Self::Constraint(e.to_string()),
        }
    }
}

/// Parse a duration with an optional `s`, `ms`, `us`, `ns` or `ps` suffix.
pub fn parse_duration(text: &str) -> Result<f64, String> {
    let t = text.trim();
    let units = [("ps", 1e-12), ("ns", 1e-9), ("us", 1e-6), ("ms", 1e-3), ("s", 1.0)];
    let (num, scale) = units
        .iter()
        .find_map(|(u, f)| t.strip_suffix(u).map(|n| (n.trim(), *f)))
        .unwrap_or((t, 1.0));
    let v: f64 = num.parse().map_err(|_| format!("invalid duration `{text}`"))?;
    if !(v.is_finite() && v > 0.0) {
        return Err(format!("duration must be positive, got `{text}`"));
    }
    Ok(v * scale)
}

/// Number formatting used in every CSV: 17 significant digits, `inf` for
/// unresolved values.
pub fn format_number(v: f64) -> String {
    if v.is_infinite() && v > 0.0 {
        "inf".into()
    } else {
        format!("{v:.16e}")
    }
}

/// Parse arguments, run, and map the outcome to an exit code.
pub fn main_with_args<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<std::ffi::OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { 2 } else { 0 };
        }
    };
    match run(&cli) {
        Ok(()) => 0,
        Err(e) => {
            eprintln!("error: {e}");
            e.exit_code()
        }
    }
}

pub fn run(cli: &Cli) -> Result<(), CliError> {
    match &cli.command {
        Command::Validate { config } => {
            let report = cmd_validate(config)?;
            println!("{report}");
            Ok(())
        }
        Command::Vas { config, q_max, out } => {
            let mut cfg = ScenarioConfig::load(config)?;
            if let Some(q) = q_max {
                cfg.q_max = *q;
            }
            match out {
                Some(path) => write_file(path, |w| cmd_vas(&cfg, w)),
                None => cmd_vas(&cfg, &mut io::stdout().lock())
                    .map_err(|source| CliError::Write { path: "<stdout>".into(), source }),
            }
        }
        Command::Map(args) => with_pool(args, || {
            let (cfg, dir) = load_with_overrides(args)?;
            cmd_map(&cfg, &dir, args.raster || cfg.output.raster, progress(args.quiet))?;
            Ok(())
        }),
        Command::Cdf(args) => with_pool(args, || {
            let (cfg, dir) = load_with_overrides(args)?;
            cmd_cdf(&cfg, &dir, progress(args.quiet))
        }),
        Command::Ellipses(args) => with_pool(args, || {
            let (cfg, dir) = load_with_overrides(args)?;
            cmd_ellipses(&cfg, &dir)
        }),
    }
}

fn progress(quiet: bool) -> Option<&'static (dyn Fn(usize) + Sync)> {
    fn report(done: usize) {
        if done % PROGRESS_EVERY == 0 {
            println!("progress: {done} points");
        }
    }
    (!quiet).then_some(&report as &(dyn Fn(usize) + Sync))
}

fn with_pool<F>(args: &RunArgs, f: F) -> Result<(), CliError>
where
    F: FnOnce() -> Result<(), CliError> + Send,
{
    let mut builder = rayon::ThreadPoolBuilder::new();
    if let Some(n) = args.threads {
        if n == 0 {
            return Err(CliError::Input("--threads must be at least 1".into()));
        }
        builder = builder.num_threads(n);
    }
    let pool = builder.build().map_err(|e| CliError::Eval(e.to_string()))?;
    pool.install(f)
}

/// Load a config and apply command-line overrides; returns the config and
/// the output directory.
pub fn load_with_overrides(args: &RunArgs) -> Result<(ScenarioConfig, PathBuf), CliError> {
    let mut cfg = ScenarioConfig::load(&args.config)?;
    if let Some(p) = args.pulse {
        cfg.signal.pulse_duration_ns = p * 1e9;
    }
    if let Some(s) = args.spacing {
        cfg.grid.spacing = s;
    }
    if let Some(q) = args.q_max {
        cfg.q_max = q;
    }
    if let Some(m) = args.model {
        cfg.model = m.to_string();
    }
    let dir = args.out.clone().unwrap_or_else(|| cfg.output.dir.clone());
    Ok((cfg, dir))
}

/// Validate a config file and return a short summary.
pub fn cmd_validate(path: &Path) -> Result<String, CliError> {
    let cfg = ScenarioConfig::load(path)?;
    cfg.validate()?;
    let plan = cfg.floorplan().map_err(CliError::Constraint)?;
    let grid = cfg.grid(&plan)?;
    Ok(format!(
        "ok: {:?} scenario, {} walls, {} anchors, {} partner agents, q_max {}, {} grid points",
        cfg.scenario,
        plan.walls().len(),
        cfg.anchors.len(),
        cfg.agents.len(),
        cfg.q_max,
        grid.masked_cells(&plan).len()
    ))
}

/// Rows `anchor_id,va_index,x,y,Q,nu_rad,wall_sequence` for every anchor and
/// partner agent; wall indices are separated by `;`.
pub fn cmd_vas(cfg: &ScenarioConfig, w: &mut dyn Write) -> io::Result<()> {
    cfg.validate().map_err(|e| io::Error::new(io::ErrorKind::InvalidInput, e.to_string()))?;
    let plan = cfg.floorplan().map_err(|e| io::Error::new(io::ErrorKind::InvalidInput, e))?;
    writeln!(w, "anchor_id,va_index,x,y,Q,nu_rad,wall_sequence")?;
    let nodes = cfg
        .anchors
        .iter()
        .map(|a| (&a.id, a.x, a.y))
        .chain(cfg.agents.iter().map(|a| (&a.id, a.x, a.y)));
    for (node, (id, x, y)) in nodes.enumerate() {
        for (i, va) in build_vas(Point::new(x, y), node, &plan, cfg.q_max).iter().enumerate() {
            let walls: Vec<String> = va.walls.iter().map(|w| w.to_string()).collect();
            writeln!(
                w,
                "{id},{i},{},{},{},{},{}",
                format_number(va.position.x),
                format_number(va.position.y),
                va.order(),
                format_number(va.effective_angle),
                walls.join(";")
            )?;
        }
    }
    Ok(())
}

fn prepared(cfg: &ScenarioConfig) -> Result<(PreparedScenario, GridSpec), CliError> {
    let prepared = cfg.prepare()?;
    let grid = cfg.grid(&prepared.scenario.plan)?;
    Ok((prepared, grid))
}

fn compute_map(
    cfg: &ScenarioConfig,
    progress: Option<&(dyn Fn(usize) + Sync)>,
) -> Result<PebMap, CliError> {
    let (prepared, grid) = prepared(cfg)?;
    peb_map(&prepared, &grid, progress).map_err(|e| CliError::Eval(e.to_string()))
}

fn write_file<F>(path: &Path, f: F) -> Result<(), CliError>
where
    F: FnOnce(&mut dyn Write) -> io::Result<()>,
{
    let wrap = |source| CliError::Write { path: path.to_path_buf(), source };
    if let Some(parent) = path.parent().filter(|p| !p.as_os_str().is_empty()) {
        std::fs::create_dir_all(parent).map_err(wrap)?;
    }
    let mut w = BufWriter::new(File::create(path).map_err(wrap)?);
    f(&mut w).map_err(wrap)?;
    w.flush().map_err(wrap)
}

/// Write `map.csv` (and `map.pgm` if `raster`) into `dir`.
pub fn cmd_map(
    cfg: &ScenarioConfig,
    dir: &Path,
    raster: bool,
    progress: Option<&(dyn Fn(usize) + Sync)>,
) -> Result<PebMap, CliError> {
    let map = compute_map(cfg, progress)?;
    write_file(&dir.join("map.csv"), |w| write_map_csv(&map, w))?;
    if raster {
        let [lo, hi] = cfg.output.log10_range;
        write_file(&dir.join("map.pgm"), |w| write_raster(&map, lo, hi, w))?;
    }
    Ok(map)
}

pub fn write_map_csv(map: &PebMap, w: &mut dyn Write) -> io::Result<()> {
    writeln!(w, "x,y,peb,degenerate")?;
    for ((p, v), d) in map.points().zip(&map.peb).zip(&map.degenerate) {
        writeln!(w, "{},{},{},{}", format_number(p.x), format_number(p.y), format_number(*v), u8::from(*d))?;
    }
    Ok(())
}

/// Binary graymap (P5) of `log10(PEB)`: `lo` maps to 1, `hi` and above
/// (including `inf`) to 255; cells outside the map are 0. The top row is the
/// largest `y`.
pub fn write_raster(map: &PebMap, lo: f64, hi: f64, w: &mut dyn Write) -> io::Result<()> {
    let (nx, ny) = (map.grid.nx, map.grid.ny);
    let mut pixels = vec![0u8; nx * ny];
    for (&(ix, iy), &v) in map.cells.iter().zip(&map.peb) {
        let t = ((v.log10() - lo) / (hi - lo)).clamp(0.0, 1.0);
        let t = if t.is_nan() { 1.0 } else { t };
        pixels[(ny - 1 - iy) * nx + ix] = 1 + (t * 254.0).round() as u8;
    }
    write!(w, "P5\n{nx} {ny}\n255\n")?;
    w.write_all(&pixels)
}

/// Write `cdf.csv`. If some points are unresolved, a final `inf,1` row
/// closes the distribution.
pub fn cmd_cdf(cfg: &ScenarioConfig, dir: &Path, progress: Option<&(dyn Fn(usize) + Sync)>) -> Result<(), CliError> {
    let map = compute_map(cfg, progress)?;
    let cdf = peb_cdf(&map.peb);
    write_file(&dir.join("cdf.csv"), |w| {
        writeln!(w, "peb,fraction")?;
        for (v, f) in &cdf.steps {
            writeln!(w, "{},{}", format_number(*v), format_number(*f))?;
        }
        if cdf.unresolved > 0.0 {
            writeln!(w, "inf,{}", format_number(1.0))?;
        }
        Ok(())
    })?;
    println!("points: {}, median PEB: {} m, unresolved fraction: {}", map.peb.len(), map.median(), cdf.unresolved);
    Ok(())
}

/// Write `ellipses.csv` with rows `x,y,a,b,theta` (semi-major, semi-minor,
/// orientation of the major axis). Without configured points, the cell
/// centers of a 1 m grid are used. Singular points are skipped with a
/// warning.
pub fn cmd_ellipses(cfg: &ScenarioConfig, dir: &Path) -> Result<(), CliError> {
    let prepared = cfg.prepare()?;
    let points: Vec<Point> = if cfg.ellipses.points.is_empty() {
        let grid = GridSpec::covering(&prepared.scenario.plan, 1.0).map_err(|e| CliError::Eval(e.to_string()))?;
        grid.masked_cells(&prepared.scenario.plan).into_iter().map(|(i, j)| grid.point(i, j)).collect()
    } else {
        cfg.ellipses.points.iter().map(|p| Point::new(p[0], p[1])).collect()
    };
    let samples =
        ellipse_samples(&prepared, &points, cfg.ellipses.scale).map_err(|e| CliError::Eval(e.to_string()))?;
    write_file(&dir.join("ellipses.csv"), |w| {
        writeln!(w, "x,y,a,b,theta")?;
        for s in &samples {
            match &s.ellipse {
                Some(e) => writeln!(
                    w,
                    "{},{},{},{},{}",
                    format_number(s.point.x),
                    format_number(s.point.y),
                    format_number(e.major),
                    format_number(e.minor),
                    format_number(e.theta)
                )?,
                None => eprintln!("warning: singular information at ({}, {}), ellipse omitted", s.point.x, s.point.y),
            }
        }
        Ok(())
    })
}
