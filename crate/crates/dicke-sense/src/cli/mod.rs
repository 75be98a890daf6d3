//! Command-line front end. `run` returns the process exit code: 0 on
//! success, 2 when some grid points failed, 1 on a fatal error.

mod commands;
mod localdecay;
mod settings;
mod sweeps;

use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand};
use rayon::prelude::*;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::harness::output::{csv_string, write_json, write_text};
use crate::harness::sweep::Formats;
use crate::harness::svg::LinePlot;

pub use settings::{key, parse_overrides, Key, Settings};

#[derive(Parser, Debug)]
#[command(name = "dicke-sense", version, about = "Frequency estimation from the emission of a driven collective spin ensemble")]
pub struct Cli {
    /// INI file; each subcommand reads the section named after it.
    #[arg(long, global = true, value_name = "FILE")]
    pub config: Option<PathBuf>,
    /// Output directory.
    #[arg(long, global = true, value_name = "DIR")]
    pub out: Option<PathBuf>,
    /// Worker threads for grid evaluations.
    #[arg(long, global = true)]
    pub workers: Option<usize>,
    /// Comma-separated output formats out of csv, json, svg.
    #[arg(long, global = true, value_name = "LIST")]
    pub format: Option<String>,
    #[command(subcommand)]
    pub command: Command,
}

/// Shorthands for the most common settings; anything else goes through
/// `--set key=value`.
#[derive(Args, Debug, Default, Clone)]
pub struct PointArgs {
    #[arg(long)]
    pub n: Option<String>,
    #[arg(long)]
    pub omega_ratio: Option<String>,
    #[arg(long)]
    pub gamma_loc_ratio: Option<String>,
    #[arg(long)]
    pub t1: Option<String>,
    #[arg(long)]
    pub dt: Option<String>,
    #[arg(long)]
    pub source: Option<String>,
    /// Any setting of the subcommand, repeatable.
    #[arg(long = "set", value_name = "KEY=VALUE")]
    pub set: Vec<String>,
    /// List the settings of this subcommand and exit.
    #[arg(long)]
    pub list_settings: bool,
}

#[derive(Subcommand, Debug)]
pub enum Command {
    /// Collective spin operators and the Liouvillian as sparse CSV.
    Ops(PointArgs),
    /// Stationary states and their moments.
    Steady(PointArgs),
    /// Liouvillian spectrum, slow rates and the correlation ansatz.
    Spectrum(PointArgs),
    /// One- or two-bin reduced states.
    Bins(PointArgs),
    /// One-bin QFI per unit time.
    Qfi1(PointArgs),
    /// Two-bin QFI per unit time over the lag.
    Qfi2(PointArgs),
    /// Interferometer counting statistics and estimation errors.
    Mz(PointArgs),
    /// Transients with local decay, and the full-register oracle check.
    Localdecay(PointArgs),
    /// Parameter sweep from an INI spec (see README for the grammar).
    Sweep(SweepArgs),
    /// Power-law fits of a sweep CSV.
    Fit(FitArgs),
}

#[derive(Args, Debug)]
pub struct SweepArgs {
    /// Re-run with each of these worker counts and require identical CSV.
    #[arg(long, value_name = "LIST")]
    pub check_workers: Option<String>,
}

#[derive(Args, Debug)]
pub struct FitArgs {
    /// Sweep CSV to fit.
    pub input: PathBuf,
    /// Keep only this many largest-N points per group (0 = all).
    #[arg(long)]
    pub restrict: Option<usize>,
}

/// Global options resolved against the config file.
pub struct Context {
    pub config: Option<ini::Ini>,
    pub out: PathBuf,
    pub workers: usize,
    pub formats: Formats,
}

impl Context {
    fn new(cli: &Cli) -> Result<Self> {
        let config = match &cli.config {
            Some(p) => {
                let text = std::fs::read_to_string(p).map_err(|e| Error::io(p, e))?;
                Some(ini::Ini::load_from_str(&text).map_err(|e| Error::Parse(format!("{}: {e}", p.display())))?)
            }
            None => None,
        };
        let out_sec = config.as_ref().and_then(|c| c.section(Some("output")));
        let mut formats = Formats::default();
        let mut workers = None;
        if let Some(sec) = out_sec {
            if let Some(f) = sec.get("formats") {
                formats = f.parse()?;
            }
            if let Some(w) = sec.get("workers") {
                workers = Some(w.trim().parse().map_err(|e| Error::Parse(format!("[output] workers: {e}")))?);
            }
        }
        if let Some(f) = &cli.format {
            formats = f.parse()?;
        }
        let workers = cli
            .workers
            .or(workers)
            .unwrap_or_else(|| std::thread::available_parallelism().map(|n| n.get()).unwrap_or(1))
            .max(1);
        Ok(Context { config, out: cli.out.clone().unwrap_or_else(|| PathBuf::from("out")), workers, formats })
    }

    pub fn settings(&self, section: &str, keys: &[Key], args: &PointArgs) -> Result<Settings> {
        let mut o = Vec::new();
        for (k, v) in [
            ("n", &args.n),
            ("omega_ratio", &args.omega_ratio),
            ("gamma_loc_ratio", &args.gamma_loc_ratio),
            ("t1", &args.t1),
            ("dt", &args.dt),
            ("source", &args.source),
        ] {
            if let Some(v) = v {
                o.push((k.to_string(), v.clone()));
            }
        }
        o.extend(parse_overrides(&args.set)?);
        Settings::new(section, keys, self.config.as_ref(), &o)
    }

    pub fn path(&self, file: &str) -> PathBuf {
        self.out.join(file)
    }

    /// Evaluates `f` over `items` on the worker pool, in order. Linear algebra
    /// inside each item stays sequential so results do not depend on the pool.
    pub fn par_map<T: Sync, R: Send>(&self, items: &[T], f: impl Fn(&T) -> R + Sync + Send) -> Result<Vec<R>> {
        faer::set_global_parallelism(faer::Par::Seq);
        let pool = rayon::ThreadPoolBuilder::new()
            .num_threads(self.workers)
            .build()
            .map_err(|e| Error::Numerical(format!("worker pool: {e}")))?;
        Ok(pool.install(|| items.par_iter().map(f).collect()))
    }
}

/// Files written and the number of failed points.
#[derive(Default, Debug)]
pub struct Report {
    pub files: Vec<PathBuf>,
    pub failures: usize,
}

impl Report {
    pub fn csv<T: Serialize>(&mut self, path: PathBuf, schema: &str, rows: &[T]) -> Result<()> {
        write_text(&path, &csv_string(schema, rows)?)?;
        self.files.push(path);
        Ok(())
    }

    pub fn json<T: Serialize>(&mut self, ctx: &Context, path: PathBuf, v: &T) -> Result<()> {
        if ctx.formats.json {
            write_json(&path, v)?;
            self.files.push(path);
        }
        Ok(())
    }

    pub fn svg(&mut self, ctx: &Context, path: PathBuf, plot: &LinePlot) -> Result<()> {
        if ctx.formats.svg {
            write_text(&path, &plot.render())?;
            self.files.push(path);
        }
        Ok(())
    }
}

/// Schema comment line of a subcommand's CSV output.
pub fn schema(what: &str) -> String {
    format!("dicke-sense {what} schema=1 version={}", env!("CARGO_PKG_VERSION"))
}

fn print_settings(section: &str, keys: &[Key]) {
    println!("[{section}]");
    for k in keys {
        let d = if k.default.is_empty() { "(unset)" } else { k.default };
        println!("{:<20} {:<14} {}", k.name, d, k.help);
    }
}

fn dispatch(cli: &Cli) -> Result<Report> {
    let ctx = Context::new(cli)?;
    type Runner = fn(&Context, &PointArgs) -> Result<Report>;
    let point: Option<(&str, &[Key], Runner, &PointArgs)> = match &cli.command {
        Command::Ops(a) => Some(("ops", commands::OPS_KEYS, commands::ops, a)),
        Command::Steady(a) => Some(("steady", commands::STEADY_KEYS, commands::steady, a)),
        Command::Spectrum(a) => Some(("spectrum", commands::SPECTRUM_KEYS, commands::spectrum, a)),
        Command::Bins(a) => Some(("bins", commands::BINS_KEYS, commands::bins, a)),
        Command::Qfi1(a) => Some(("qfi1", commands::QFI1_KEYS, commands::qfi1, a)),
        Command::Qfi2(a) => Some(("qfi2", commands::QFI2_KEYS, commands::qfi2, a)),
        Command::Mz(a) => Some(("mz", commands::MZ_KEYS, commands::mz, a)),
        Command::Localdecay(a) => Some(("localdecay", localdecay::KEYS, localdecay::run, a)),
        Command::Sweep(_) | Command::Fit(_) => None,
    };
    if let Some((section, keys, f, args)) = point {
        if args.list_settings {
            print_settings(section, keys);
            return Ok(Report::default());
        }
        return f(&ctx, args);
    }
    match &cli.command {
        Command::Sweep(a) => sweeps::sweep(&ctx, cli.config.as_deref(), a),
        Command::Fit(a) => sweeps::fit(&ctx, a),
        _ => unreachable!(),
    }
}

/// Parses `args` (including the program name) and runs the command.
pub fn run<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<std::ffi::OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { 1 } else { 0 };
        }
    };
    match dispatch(&cli) {
        Ok(r) => {
            for f in &r.files {
                println!("wrote {}", f.display());
            }
            if r.failures > 0 {
                eprintln!("{} point(s) failed; see the status column", r.failures);
                2
            } else {
                0
            }
        }
        Err(e) => {
            eprintln!("error: {e}");
            1
        }
    }
}

pub(crate) fn file_stem(p: &Path) -> String {
    p.file_stem().map(|s| s.to_string_lossy().into_owned()).unwrap_or_else(|| "out".into())
}
