//! Command-line front end: `simulate`, `verify`, `sweep`, `export-plotdata`.
//!
//! Exit codes: 0 ok, 2 configuration, 3 numerical failure, 4 blowup detected,
//! 5 verification failures.

use std::path::{Path, PathBuf};

use clap::{Parser, Subcommand};
use rayon::prelude::*;

use crate::config::ExperimentConfig;
use crate::diagnostics::{fmt_f64, ShockStatus};
use crate::dynamics::read_checkpoint;
use crate::error::{Error, Result};
use crate::run::{files, run, run_from, write_artifacts, RunConfig, RunHooks, RunOutput};
use crate::spectral::Grid;

pub const EXIT_OK: i32 = 0;
pub const EXIT_CONFIG: i32 = 2;
pub const EXIT_NUMERIC: i32 = 3;
pub const EXIT_BLOWUP: i32 = 4;
pub const EXIT_VERIFY: i32 = 5;

/// Environment variable that overrides the default output root.
pub const OUT_ENV: &str = "PLASMAWAVE_OUT";
pub const DEFAULT_OUT: &str = "output";
pub const CONFIG_COPY: &str = "config.cfg";
pub const SWEEP_FILE: &str = "sweep.csv";
pub const SWEEP_HEADER: &str = "cell,eps0,k0,sigma,status,event_time,oracle_time,horizon,decay_slope";
/// Sweep cost guard: cells and total `steps * num_points` over all cells.
pub const SWEEP_MAX_CELLS: usize = 64;
pub const SWEEP_MAX_WORK: f64 = 2e10;

#[derive(Parser, Debug)]
#[command(name = "plasmawave", version, about = "Euler-Poisson pseudospectral solver and normal-form diagnostics")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Subcommand, Debug)]
pub enum Command {
    /// Run one configuration and write its artifacts under <out>/<label>/.
    Simulate {
        #[arg(long)]
        config: PathBuf,
        /// Output root (default: $PLASMAWAVE_OUT, else ./output).
        #[arg(long)]
        out: Option<PathBuf>,
        #[arg(long)]
        seed: Option<u64>,
    },
    /// Run invariant suites and print one PASS/FAIL line per check.
    Verify {
        /// symbols, identities, scattering, appendix or all.
        #[arg(long)]
        suite: Option<String>,
        #[arg(long)]
        seed: Option<u64>,
        /// Optional config supplying `suite` and `seed`.
        #[arg(long)]
        config: Option<PathBuf>,
    },
    /// Run the (eps0, k0, sigma) grid of a config concurrently.
    Sweep {
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        out: Option<PathBuf>,
        #[arg(long)]
        seed: Option<u64>,
        /// Worker threads (default: all cores).
        #[arg(long)]
        jobs: Option<usize>,
    },
    /// Convert a run directory into the plot-data CSV bundle.
    ExportPlotdata {
        /// Run directory written by `simulate`.
        run_dir: PathBuf,
        /// Bundle directory (default: <run_dir>/plotdata).
        #[arg(long)]
        out: Option<PathBuf>,
    },
}

pub fn exit_code(e: &Error) -> i32 {
    match e {
        Error::Config(_) | Error::Cfl { .. } | Error::CostGuard(_) | Error::Checkpoint(_) => EXIT_CONFIG,
        _ => EXIT_NUMERIC,
    }
}

fn out_root(flag: Option<PathBuf>) -> PathBuf {
    flag.or_else(|| std::env::var_os(OUT_ENV).map(PathBuf::from))
        .unwrap_or_else(|| PathBuf::from(DEFAULT_OUT))
}

fn load(path: &Path, seed: Option<u64>) -> Result<ExperimentConfig> {
    let mut cfg = ExperimentConfig::load(path)?;
    if let Some(s) = seed {
        cfg.seed = s;
    }
    Ok(cfg)
}

/// Parses `args` (including the program name) and runs the command.
pub fn main_with<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<std::ffi::OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { EXIT_CONFIG } else { EXIT_OK };
        }
    };
    match dispatch(cli.command) {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e}");
            exit_code(&e)
        }
    }
}

fn dispatch(cmd: Command) -> Result<i32> {
    match cmd {
        Command::Simulate { config, out, seed } => {
            let cfg = load(&config, seed)?;
            simulate(&cfg, &out_root(out))
        }
        Command::Verify { suite, seed, config } => {
            let base = match &config {
                Some(p) => load(p, None)?,
                None => ExperimentConfig::default(),
            };
            let suite = suite.unwrap_or(base.suite);
            verify(&suite, seed.unwrap_or(base.seed))
        }
        Command::Sweep { config, out, seed, jobs } => {
            let cfg = load(&config, seed)?;
            sweep(&cfg, &out_root(out), jobs)
        }
        Command::ExportPlotdata { run_dir, out } => {
            let out = out.unwrap_or_else(|| run_dir.join("plotdata"));
            for p in crate::export::export_plotdata(&run_dir, &out)? {
                println!("wrote {}", p.display());
            }
            Ok(EXIT_OK)
        }
    }
}

/// Runs one cell into `dir`, honouring `resume_from`.
fn run_into(cfg: &ExperimentConfig, run_cfg: &RunConfig, dir: &Path) -> Result<RunOutput> {
    std::fs::create_dir_all(dir)?;
    std::fs::write(dir.join(CONFIG_COPY), cfg.to_text())?;
    let hooks = RunHooks { checkpoint_dir: Some(dir.join(files::CHECKPOINTS)) };
    let out = match &cfg.resume_from {
        None => run(run_cfg, &hooks)?,
        Some(path) => {
            let (spec, state) = read_checkpoint(path)?;
            let want = run_cfg.grid_spec()?;
            if spec != want {
                return Err(Error::Config(format!(
                    "key `resume_from`: checkpoint grid ({} points, L = {}) differs from the config grid ({} points, L = {})",
                    spec.num_points, spec.box_length, want.num_points, want.box_length
                )));
            }
            run_from(run_cfg, Grid::new(spec), &state, &hooks)?
        }
    };
    let grid = Grid::new(run_cfg.grid_spec()?);
    write_artifacts(dir, &grid, run_cfg, &out)?;
    Ok(out)
}

pub fn simulate(cfg: &ExperimentConfig, root: &Path) -> Result<i32> {
    cfg.run.validate()?;
    let dir = root.join(&cfg.label);
    let out = run_into(cfg, &cfg.run, &dir)?;
    print!("{}", std::fs::read_to_string(dir.join(files::SUMMARY))?);
    println!("run_dir={}", dir.display());
    Ok(match out.status {
        ShockStatus::Clean => EXIT_OK,
        _ => EXIT_BLOWUP,
    })
}

pub fn verify(suite: &str, seed: u64) -> Result<i32> {
    let checks = crate::verify::run_suite(suite, seed)?;
    for c in &checks {
        println!("{c}");
    }
    let failed = checks.iter().filter(|c| !c.passed).count();
    println!("SUMMARY suite={suite} seed={seed} passed={} failed={failed}", checks.len() - failed);
    Ok(if failed == 0 { EXIT_OK } else { EXIT_VERIFY })
}

/// One row of `sweep.csv`.
#[derive(Clone, Debug)]
pub struct SweepRow {
    pub cell: usize,
    pub eps0: f64,
    pub k0: f64,
    pub sigma: f64,
    /// Shock status name, or `error` when the cell failed.
    pub status: String,
    pub event_time: f64,
    pub oracle_time: f64,
    /// Time reached: the event time for a detected shock, else `t_final`.
    pub horizon: f64,
    pub decay_slope: f64,
}

impl SweepRow {
    pub fn csv_row(&self) -> String {
        format!(
            "{},{},{},{},{},{},{},{},{}",
            self.cell,
            fmt_f64(self.eps0),
            fmt_f64(self.k0),
            fmt_f64(self.sigma),
            self.status,
            fmt_f64(self.event_time),
            fmt_f64(self.oracle_time),
            fmt_f64(self.horizon),
            fmt_f64(self.decay_slope)
        )
    }
}

pub fn sweep_rows(cfg: &ExperimentConfig, root: &Path, jobs: Option<usize>) -> Result<Vec<SweepRow>> {
    let cells = cfg.sweep_cells();
    if cells.len() > SWEEP_MAX_CELLS {
        return Err(Error::CostGuard(format!("{} sweep cells exceed the limit {SWEEP_MAX_CELLS}", cells.len())));
    }
    let work = cells.len() as f64 * cfg.run.steps()? as f64 * cfg.run.num_points as f64;
    if work > SWEEP_MAX_WORK {
        return Err(Error::CostGuard(format!("sweep work {work:e} (cells x steps x points) exceeds {SWEEP_MAX_WORK:e}")));
    }
    let cell_cfgs: Vec<RunConfig> = cells.iter().map(|&profile| RunConfig { profile, ..cfg.run.clone() }).collect();
    for c in &cell_cfgs {
        c.validate()?;
    }
    let base = root.join(&cfg.label);
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(jobs.unwrap_or(0))
        .build()
        .map_err(|e| Error::Config(format!("--jobs: {e}")))?;
    let rows = pool.install(|| {
        cell_cfgs
            .par_iter()
            .enumerate()
            .map(|(i, rc)| {
                let sub = ExperimentConfig { label: format!("cell_{i:03}"), run: rc.clone(), ..cfg.clone() };
                let p = rc.profile;
                let mut row = SweepRow {
                    cell: i,
                    eps0: p.eps0,
                    k0: p.k0,
                    sigma: p.sigma,
                    status: "error".into(),
                    event_time: f64::NAN,
                    oracle_time: f64::NAN,
                    horizon: f64::NAN,
                    decay_slope: f64::NAN,
                };
                match run_into(&sub, rc, &base.join(&sub.label)) {
                    Ok(out) => {
                        row.status = out.status.name().into();
                        row.event_time = out.status.time().unwrap_or(f64::NAN);
                        row.oracle_time = out.oracle.unwrap_or(f64::NAN);
                        row.horizon = out.t_end;
                        row.decay_slope = out.decay_fit(rc).map_or(f64::NAN, |f| f.slope);
                    }
                    Err(e) => eprintln!("cell {i}: {e}"),
                }
                row
            })
            .collect::<Vec<_>>()
    });
    let mut text = format!("{SWEEP_HEADER}\n");
    for r in &rows {
        text.push_str(&r.csv_row());
        text.push('\n');
    }
    std::fs::create_dir_all(&base)?;
    std::fs::write(base.join(SWEEP_FILE), text)?;
    Ok(rows)
}

pub fn sweep(cfg: &ExperimentConfig, root: &Path, jobs: Option<usize>) -> Result<i32> {
    let rows = sweep_rows(cfg, root, jobs)?;
    println!("{SWEEP_HEADER}");
    for r in &rows {
        println!("{}", r.csv_row());
    }
    Ok(if rows.iter().any(|r| r.status == "error") {
        EXIT_NUMERIC
    } else if rows.iter().any(|r| r.status != ShockStatus::Clean.name()) {
        EXIT_BLOWUP
    } else {
        EXIT_OK
    })
}
