use std::path::{Path, PathBuf};

use serde::de::DeserializeOwned;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::harness::svg::LinePlot;
use crate::harness::sweep::{Formats, SweepOutcome, SweepRow};

/// Version of the sweep CSV column layout.
pub const SWEEP_SCHEMA: u32 = 1;

/// CSV text for any row type: a `#` comment line naming the schema, then a
/// header row and one line per record.
pub fn csv_string<T: Serialize>(schema: &str, rows: &[T]) -> Result<String> {
    let mut w = csv::WriterBuilder::new().has_headers(true).from_writer(Vec::new());
    for r in rows {
        w.serialize(r).map_err(|e| Error::Parse(format!("csv: {e}")))?;
    }
    let body = w.into_inner().map_err(|e| Error::Parse(format!("csv: {e}")))?;
    let body = String::from_utf8(body).map_err(|e| Error::Parse(format!("csv: {e}")))?;
    Ok(format!("# {schema}\n{body}"))
}

/// Parses CSV written by [`csv_string`], skipping `#` comment lines.
pub fn parse_csv<T: DeserializeOwned>(text: &str) -> Result<Vec<T>> {
    let mut r = csv::ReaderBuilder::new().comment(Some(b'#')).from_reader(text.as_bytes());
    r.deserialize().map(|x| x.map_err(|e| Error::Parse(format!("csv: {e}")))).collect()
}

pub fn sweep_schema_line() -> String {
    format!("dicke-sense sweep schema={SWEEP_SCHEMA}")
}

pub fn sweep_csv(rows: &[SweepRow]) -> Result<String> {
    csv_string(&sweep_schema_line(), rows)
}

pub fn read_sweep_csv(path: &Path) -> Result<Vec<SweepRow>> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    parse_csv(&text)
}

pub fn write_text(path: &Path, text: &str) -> Result<()> {
    if let Some(dir) = path.parent() {
        if !dir.as_os_str().is_empty() {
            std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
        }
    }
    std::fs::write(path, text).map_err(|e| Error::io(path, e))
}

pub fn write_json<T: Serialize>(path: &Path, v: &T) -> Result<()> {
    let s = serde_json::to_string_pretty(v).map_err(|e| Error::Parse(format!("json: {e}")))?;
    write_text(path, &(s + "\n"))
}

#[derive(Serialize)]
struct SweepSummary<'a> {
    name: &'a str,
    code_version: &'a str,
    schema: u32,
    rows: usize,
    failures: usize,
    fits: &'a [crate::harness::sweep::GroupFit],
    tau_star: Vec<(usize, Option<f64>)>,
}

/// Log-log plot of every fitted group with its fit line.
pub fn scaling_plot(outcome: &SweepOutcome) -> LinePlot {
    let mut p = LinePlot::new(&outcome.name, "N", "value");
    p.log_x = true;
    p.log_y = true;
    for g in &outcome.fits {
        let xs: Vec<f64> = g.ns.iter().map(|&n| n as f64).collect();
        p.add_points(&g.key, &xs, &g.values);
        if let Some(f) = &g.fit {
            let ys: Vec<f64> = xs.iter().map(|&x| f.predict(x)).collect();
            p.add_line(&format!("slope {:.3}", f.exponent), &xs, &ys, true);
        }
    }
    p
}

/// Writes the sweep outputs into `dir`, returning the files written.
pub fn emit_sweep(outcome: &SweepOutcome, dir: &Path, formats: Formats) -> Result<Vec<PathBuf>> {
    let mut files = Vec::new();
    let csv_path = dir.join(format!("{}.csv", outcome.name));
    write_text(&csv_path, &sweep_csv(&outcome.rows)?)?;
    files.push(csv_path);
    if formats.json {
        let path = dir.join(format!("{}.json", outcome.name));
        let summary = SweepSummary {
            name: &outcome.name,
            code_version: &outcome.code_version,
            schema: SWEEP_SCHEMA,
            rows: outcome.rows.len(),
            failures: outcome.failures,
            fits: &outcome.fits,
            tau_star: outcome.rows.iter().map(|r| (r.index, r.tau_star)).collect(),
        };
        write_json(&path, &summary)?;
        files.push(path);
    }
    if formats.svg && !outcome.fits.is_empty() {
        let path = dir.join(format!("{}.svg", outcome.name));
        write_text(&path, &scaling_plot(outcome).render())?;
        files.push(path);
    }
    Ok(files)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn row(index: usize, value: Option<f64>) -> SweepRow {
        SweepRow {
            index,
            task: "qfi1".into(),
            n: 10 + index,
            omega_ratio: 0.1 + 0.2,
            gamma_loc_ratio: 0.0,
            t1_policy: "ss".into(),
            t1: None,
            dt_policy: "auto".into(),
            dt: 2.5e-5,
            dg: Some(1e-4 / 3.0),
            observable: String::new(),
            quantity: "qfi_per_time".into(),
            value,
            tau_star: None,
            convergence: Some(1.23456789e-7),
            status: if value.is_some() { "ok".into() } else { "error".into() },
            message: if value.is_some() { String::new() } else { "failed, with \"quotes\"".into() },
            code_version: "0.1.0".into(),
        }
    }

    #[test]
    fn sweep_csv_round_trips() {
        let rows = vec![row(0, Some(std::f64::consts::PI)), row(1, None), row(2, Some(1e-300))];
        let text = sweep_csv(&rows).unwrap();
        assert!(text.starts_with("# dicke-sense sweep schema=1\n"));
        let back: Vec<SweepRow> = parse_csv(&text).unwrap();
        assert_eq!(back, rows);
    }
}
