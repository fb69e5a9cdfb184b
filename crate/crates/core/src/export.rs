//! On-disk formats: per-run CSV, error-norm CSV and JSON reports.
//!
//! Floats are written with Rust's shortest round-trip formatting so a CSV
//! read back reproduces the simulated values exactly.

use std::fs;
use std::io::{Read, Write};
use std::path::{Path, PathBuf};

use nalgebra::Vector3;
use serde::de::DeserializeOwned;
use serde::Serialize;

use crate::analysis::ErrorState;
use crate::controllers::ControllerKind;
use crate::drogue::DrogueState;
use crate::harness::{LabeledSeries, RunSeries};
use crate::plant::HelicopterState;

#[derive(Debug, thiserror::Error)]
pub enum ExportError {
    #[error("{path}: {source}")]
    Io { path: PathBuf, source: std::io::Error },
    #[error("csv: {0}")]
    Csv(#[from] csv::Error),
    #[error("json: {0}")]
    Json(#[from] serde_json::Error),
    #[error("{what}: {reason}")]
    Format { what: String, reason: String },
}

pub type ExportResult<T> = std::result::Result<T, ExportError>;

pub const RUN_CSV_COLUMNS: [&str; 29] = [
    "t",
    "X",
    "Y",
    "Z",
    "Xd",
    "Yd",
    "Zd",
    "phi",
    "theta",
    "psi",
    "phid",
    "thetad",
    "psid",
    "probe_X",
    "probe_Y",
    "probe_Z",
    "drogue_X",
    "drogue_Y",
    "drogue_Z",
    "drogue_Xd",
    "drogue_Yd",
    "drogue_Zd",
    "e_x",
    "e_y",
    "e_z",
    "ed_x",
    "ed_y",
    "ed_z",
    "e_norm",
];

pub const ERROR_NORM_COLUMNS: [&str; 6] = ["run_id", "controller", "seed", "t", "e_norm", "ceiling"];

fn format_err(what: impl Into<String>, reason: impl Into<String>) -> ExportError {
    ExportError::Format { what: what.into(), reason: reason.into() }
}

pub fn write_run_csv<W: Write>(writer: W, series: &RunSeries) -> ExportResult<()> {
    if !series.is_consistent() {
        return Err(format_err("run series", "columns have different lengths"));
    }
    let mut w = csv::Writer::from_writer(writer);
    w.write_record(RUN_CSV_COLUMNS)?;
    let mut row: Vec<String> = Vec::with_capacity(RUN_CSV_COLUMNS.len());
    for i in 0..series.len() {
        let err = &series.errors[i];
        row.clear();
        row.push(series.times[i].to_string());
        row.extend(series.states[i].to_row().iter().map(f64::to_string));
        row.extend(series.probe[i].iter().map(f64::to_string));
        row.extend(series.drogue[i].to_row().iter().map(f64::to_string));
        row.extend(err.e.iter().chain(err.e_dot.iter()).map(f64::to_string));
        row.push(err.e.norm().to_string());
        w.write_record(&row)?;
    }
    w.flush().map_err(|source| ExportError::Io { path: PathBuf::from("<run csv>"), source })?;
    Ok(())
}

/// Reads a per-run CSV. Drogue accelerations are not stored and read back as zero.
pub fn read_run_csv<R: Read>(reader: R, what: &str) -> ExportResult<RunSeries> {
    let mut r = csv::Reader::from_reader(reader);
    let header = r.headers()?.clone();
    if header.iter().ne(RUN_CSV_COLUMNS) {
        return Err(format_err(what, "unexpected header"));
    }
    let mut series = RunSeries::default();
    for (line, record) in r.records().enumerate() {
        let record = record?;
        let values = record
            .iter()
            .map(|f| f.parse::<f64>())
            .collect::<Result<Vec<_>, _>>()
            .map_err(|e| format_err(what, format!("data row {}: {e}", line + 1)))?;
        if values.len() != RUN_CSV_COLUMNS.len() {
            return Err(format_err(what, format!("data row {} has {} fields", line + 1, values.len())));
        }
        let v3 = |i: usize| Vector3::new(values[i], values[i + 1], values[i + 2]);
        let mut state_row = [0.0; 12];
        state_row.copy_from_slice(&values[1..13]);
        series.times.push(values[0]);
        series.states.push(HelicopterState::from_row(&state_row));
        series.probe.push(v3(13));
        series.drogue.push(DrogueState { position: v3(16), velocity: v3(19), acceleration: Vector3::zeros() });
        series.errors.push(ErrorState::new(v3(22), v3(25)));
    }
    if series.is_empty() {
        return Err(format_err(what, "no data rows"));
    }
    Ok(series)
}

/// Long-format `|e(t)|` table with the ceiling repeated on every row.
pub fn write_error_norms_csv<W: Write>(writer: W, runs: &[LabeledSeries], ceiling: f64) -> ExportResult<()> {
    let mut w = csv::Writer::from_writer(writer);
    w.write_record(ERROR_NORM_COLUMNS)?;
    let ceiling = ceiling.to_string();
    for run in runs {
        let seed = run.seed.to_string();
        for (t, err) in run.series.times.iter().zip(&run.series.errors) {
            w.write_record([
                run.run_id.as_str(),
                run.controller.as_str(),
                seed.as_str(),
                &t.to_string(),
                &err.e.norm().to_string(),
                ceiling.as_str(),
            ])?;
        }
    }
    w.flush().map_err(|source| ExportError::Io { path: PathBuf::from("<error norms csv>"), source })?;
    Ok(())
}

/// `run_<controller>_s<seed>`
pub fn run_file_stem(controller: ControllerKind, seed: u64) -> String {
    format!("run_{controller}_s{seed}")
}

pub fn parse_run_file_stem(stem: &str) -> Option<(ControllerKind, u64)> {
    let rest = stem.strip_prefix("run_")?;
    let (kind, seed) = rest.rsplit_once("_s")?;
    Some((kind.parse().ok()?, seed.parse().ok()?))
}

fn io_err(path: &Path) -> impl FnOnce(std::io::Error) -> ExportError + '_ {
    move |source| ExportError::Io { path: path.to_path_buf(), source }
}

/// Pretty JSON with a trailing newline.
pub fn write_json<T: Serialize>(path: &Path, value: &T) -> ExportResult<()> {
    let mut text = serde_json::to_string_pretty(value)?;
    text.push('\n');
    fs::write(path, text).map_err(io_err(path))
}

pub fn read_json<T: DeserializeOwned>(path: &Path) -> ExportResult<T> {
    let text = fs::read_to_string(path).map_err(io_err(path))?;
    Ok(serde_json::from_str(&text)?)
}

pub fn write_run_csv_file(path: &Path, series: &RunSeries) -> ExportResult<()> {
    let file = fs::File::create(path).map_err(io_err(path))?;
    write_run_csv(std::io::BufWriter::new(file), series)
}

/// Every `run_<controller>_s<seed>.csv` in `dir`, ordered by seed then controller.
pub fn read_run_dir(dir: &Path) -> ExportResult<Vec<LabeledSeries>> {
    let mut found = Vec::new();
    for entry in fs::read_dir(dir).map_err(io_err(dir))? {
        let path = entry.map_err(io_err(dir))?.path();
        if path.extension().and_then(|e| e.to_str()) != Some("csv") {
            continue;
        }
        let Some(stem) = path.file_stem().and_then(|s| s.to_str()) else {
            continue;
        };
        if let Some((controller, seed)) = parse_run_file_stem(stem) {
            found.push((seed, controller, stem.to_owned(), path));
        }
    }
    found.sort_by_key(|f| (f.0, f.1 as u8));
    found
        .into_iter()
        .map(|(seed, controller, run_id, path)| {
            let file = fs::File::open(&path).map_err(io_err(&path))?;
            let series = read_run_csv(std::io::BufReader::new(file), &path.display().to_string())?;
            Ok(LabeledSeries { run_id, controller, seed, series })
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::harness::{run_once, RunConfig};

    #[test]
    fn run_csv_round_trips_exactly() {
        let mut cfg = RunConfig::default();
        cfg.reference.approach_duration = 2.0;
        let series = run_once(&cfg).unwrap().series;
        let mut buf = Vec::new();
        write_run_csv(&mut buf, &series).unwrap();
        let text = String::from_utf8(buf.clone()).unwrap();
        assert_eq!(text.lines().next().unwrap(), RUN_CSV_COLUMNS.join(","));
        assert_eq!(text.lines().count(), series.len() + 1);

        let back = read_run_csv(buf.as_slice(), "test").unwrap();
        assert_eq!(back.times, series.times);
        assert_eq!(back.states, series.states);
        assert_eq!(back.probe, series.probe);
        assert_eq!(back.errors, series.errors);
        for (a, b) in back.drogue.iter().zip(&series.drogue) {
            assert_eq!((a.position, a.velocity), (b.position, b.velocity));
        }
    }

    #[test]
    fn rejects_bad_header_and_bad_numbers() {
        assert!(read_run_csv("a,b\n1,2\n".as_bytes(), "x").is_err());
        let mut text = RUN_CSV_COLUMNS.join(",");
        text.push('\n');
        assert!(read_run_csv(text.as_bytes(), "x").is_err());
        text.push_str(&vec!["nope"; 29].join(","));
        assert!(read_run_csv(text.as_bytes(), "x").is_err());
    }

    #[test]
    fn file_stems_round_trip() {
        for kind in ControllerKind::ALL {
            let stem = run_file_stem(kind, 42);
            assert_eq!(parse_run_file_stem(&stem), Some((kind, 42)));
        }
        assert_eq!(run_file_stem(ControllerKind::Standard, 3), "run_standard_s3");
        assert_eq!(parse_run_file_stem("run_other_s3"), None);
        assert_eq!(parse_run_file_stem("summary"), None);
    }

    #[test]
    fn error_norm_rows_carry_the_ceiling() {
        let mut cfg = RunConfig::default();
        cfg.reference.approach_duration = 0.05;
        cfg.horizon = 1.0;
        let series = run_once(&cfg).unwrap().series;
        let runs =
            [LabeledSeries { run_id: "run_proposed_s1".into(), controller: ControllerKind::Proposed, seed: 1, series }];
        let mut buf = Vec::new();
        write_error_norms_csv(&mut buf, &runs, 1.5).unwrap();
        let text = String::from_utf8(buf).unwrap();
        let lines: Vec<_> = text.lines().collect();
        assert_eq!(lines[0], "run_id,controller,seed,t,e_norm,ceiling");
        assert_eq!(lines.len(), 7);
        assert!(lines[1..].iter().all(|l| l.starts_with("run_proposed_s1,proposed,1,") && l.ends_with(",1.5")));
    }

    #[test]
    fn reads_a_directory_in_seed_order() {
        let dir = tempfile::tempdir().unwrap();
        let mut cfg = RunConfig::default();
        cfg.reference.approach_duration = 0.1;
        cfg.horizon = 1.0;
        for seed in [3, 1] {
            for kind in ControllerKind::ALL {
                cfg.seed = seed;
                cfg.controller = kind;
                let s = run_once(&cfg).unwrap().series;
                write_run_csv_file(&dir.path().join(format!("{}.csv", run_file_stem(kind, seed))), &s).unwrap();
            }
        }
        fs::write(dir.path().join("summary.json"), "{}").unwrap();
        let runs = read_run_dir(dir.path()).unwrap();
        let ids: Vec<_> = runs.iter().map(|r| r.run_id.as_str()).collect();
        assert_eq!(ids, ["run_standard_s1", "run_proposed_s1", "run_standard_s3", "run_proposed_s3"]);
    }
}
