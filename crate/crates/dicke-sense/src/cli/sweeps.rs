use std::path::Path;

use serde::Serialize;

use super::{file_stem, Context, FitArgs, Report, SweepArgs};
use crate::error::{Error, Result};
use crate::harness::output::{emit_sweep, read_sweep_csv, scaling_plot, sweep_csv};
use crate::harness::sweep::{fit_groups, run_sweep, GroupFit, SweepOutcome, SweepSpec};

fn check_workers(ctx: &Context, args: &SweepArgs) -> Result<Vec<usize>> {
    let text = match (&args.check_workers, &ctx.config) {
        (Some(s), _) => Some(s.clone()),
        (None, Some(ini)) => ini.section(Some("check")).and_then(|s| s.get("workers")).map(String::from),
        _ => None,
    };
    match text {
        None => Ok(Vec::new()),
        Some(t) => t
            .split(',')
            .map(str::trim)
            .filter(|s| !s.is_empty())
            .map(|s| s.parse::<usize>().map_err(|e| Error::Parse(format!("[check] workers: {e}"))))
            .collect(),
    }
}

/// Runs the `[sweep]` of the config file. With check workers, the sweep is
/// repeated on each pool size and the CSV bytes must agree.
pub fn sweep(ctx: &Context, config: Option<&Path>, args: &SweepArgs) -> Result<Report> {
    let path = config.ok_or_else(|| Error::Parse("sweep needs --config <INI>".into()))?;
    let mut spec = SweepSpec::from_ini_file(path)?;
    spec.workers = ctx.workers;
    spec.formats = ctx.formats;
    let out = run_sweep(&spec)?;
    let reference = sweep_csv(&out.rows)?;

    let mut checks = Vec::new();
    for w in check_workers(ctx, args)? {
        let mut s = spec.clone();
        s.workers = w;
        let same = sweep_csv(&run_sweep(&s)?.rows)? == reference;
        checks.push((w, same));
        if !same {
            return Err(Error::Numerical(format!(
                "sweep CSV with {w} workers differs from the run with {} workers",
                spec.workers
            )));
        }
    }
    let mut rep = Report { failures: out.failures, ..Default::default() };
    rep.files = emit_sweep(&out, &ctx.out, spec.formats)?;
    if !checks.is_empty() {
        let line = checks.iter().map(|(w, _)| w.to_string()).collect::<Vec<_>>().join(", ");
        println!("CSV identical with {} workers and with {line} workers", spec.workers);
    }
    Ok(rep)
}

#[derive(Serialize)]
struct FitRow {
    group: String,
    points_used: Option<usize>,
    exponent: Option<f64>,
    prefactor: Option<f64>,
    stderr: Option<f64>,
    message: String,
}

/// Power-law fits of an existing sweep CSV.
pub fn fit(ctx: &Context, args: &FitArgs) -> Result<Report> {
    let rows = read_sweep_csv(&args.input)?;
    let from_config = match &ctx.config {
        Some(ini) => match ini.section(Some("fit")).and_then(|s| s.get("restrict_largest")) {
            Some(v) => v.trim().parse().map_err(|e| Error::Parse(format!("[fit] restrict_largest: {e}")))?,
            None => 0,
        },
        None => 0,
    };
    let restrict = args.restrict.unwrap_or(from_config);
    let fits: Vec<GroupFit> = fit_groups(&rows, restrict);
    if fits.is_empty() {
        return Err(Error::InvalidParam(format!("{}: no group has two or more sizes to fit", args.input.display())));
    }
    let name = format!("{}_fit", file_stem(&args.input));
    let table: Vec<FitRow> = fits
        .iter()
        .map(|g| FitRow {
            group: g.key.clone(),
            points_used: g.fit.as_ref().map(|f| f.points_used),
            exponent: g.fit.as_ref().map(|f| f.exponent),
            prefactor: g.fit.as_ref().map(|f| f.intercept.exp()),
            stderr: g.fit.as_ref().map(|f| f.stderr),
            message: g.message.clone(),
        })
        .collect();
    let failures = fits.iter().filter(|g| g.fit.is_none()).count();
    let mut rep = Report { failures, ..Default::default() };
    rep.csv(ctx.path(&format!("{name}.csv")), &super::schema("fit"), &table)?;
    rep.json(ctx, ctx.path(&format!("{name}.json")), &fits)?;
    let outcome = SweepOutcome { name: name.clone(), code_version: String::new(), rows: Vec::new(), fits, failures };
    rep.svg(ctx, ctx.path(&format!("{name}.svg")), &scaling_plot(&outcome))?;
    Ok(rep)
}
