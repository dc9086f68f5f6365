//! Tiny CSV emitters/readers for the toolkit's tabular artifacts. All
//! numbers are written with Rust's shortest round-trip float formatting,
//! so identical values always produce identical bytes.

use std::path::Path;

use vitals_core::sigproc::{RateSeries, Waveform};

use crate::{read_file, write_file, CliError};

/// `t_sec,value` rows, one per sample.
pub fn write_waveform_csv(wave: &Waveform, path: &Path) -> Result<(), CliError> {
    let mut out = String::from("t_sec,value\n");
    for (i, v) in wave.samples.iter().enumerate() {
        out.push_str(&format!("{},{}\n", i as f64 / wave.fs, v));
    }
    write_file(path, out.as_bytes())
}

/// `frame,rate_bpm` rows, one per frame.
pub fn write_rates_csv(rates: &RateSeries, path: &Path) -> Result<(), CliError> {
    let mut out = String::from("frame,rate_bpm\n");
    for (i, r) in rates.rates_bpm.iter().enumerate() {
        out.push_str(&format!("{},{}\n", i, r));
    }
    write_file(path, out.as_bytes())
}

/// Parse a two-column CSV with the given header, returning the second
/// column. Used to read back the waveform/rate artifacts this module writes;
/// shortest round-trip float formatting makes the read exact.
fn read_second_column(path: &Path, header: &str) -> Result<Vec<f64>, CliError> {
    let bytes = read_file(path)?;
    let text = String::from_utf8(bytes)
        .map_err(|e| CliError::format(path, e.utf8_error().valid_up_to() as u64, "not UTF-8"))?;
    let mut values = Vec::new();
    let mut offset = 0u64;
    for (i, line) in text.lines().enumerate() {
        let this_offset = offset;
        offset += line.len() as u64 + 1;
        if i == 0 {
            if line != header {
                return Err(CliError::format(
                    path,
                    0,
                    format!("bad header {:?}, expected {:?}", line, header),
                ));
            }
            continue;
        }
        if line.is_empty() {
            continue;
        }
        let (_, second) = line.split_once(',').ok_or_else(|| {
            CliError::format(path, this_offset, format!("row {} has no comma", i))
        })?;
        values.push(second.parse().map_err(|_| {
            CliError::format(path, this_offset, format!("row {}: unparsable value", i))
        })?);
    }
    if values.is_empty() {
        return Err(CliError::format(path, offset, "no data rows"));
    }
    Ok(values)
}

/// Read back a waveform CSV; the sample rate comes from the caller (the
/// file's time column is derived, not authoritative).
pub fn read_waveform_csv(path: &Path, fs: f64) -> Result<Waveform, CliError> {
    Ok(Waveform::new(read_second_column(path, "t_sec,value")?, fs))
}

/// Read back a rate CSV; the frame rate comes from the caller.
pub fn read_rates_csv(path: &Path, fs: f64) -> Result<RateSeries, CliError> {
    Ok(RateSeries {
        rates_bpm: read_second_column(path, "frame,rate_bpm")?,
        fs,
    })
}

/// One training-log row.
#[derive(Debug, Clone, PartialEq)]
pub struct TrainLogRow {
    pub step: usize,
    pub loss: f64,
    pub wall_ms: f64,
}

/// `step,loss,wall_ms` rows.
pub fn write_train_log(rows: &[TrainLogRow], path: &Path) -> Result<(), CliError> {
    let mut out = String::from("step,loss,wall_ms\n");
    for r in rows {
        out.push_str(&format!("{},{},{}\n", r.step, r.loss, r.wall_ms));
    }
    write_file(path, out.as_bytes())
}

pub fn read_train_log(path: &Path) -> Result<Vec<TrainLogRow>, CliError> {
    let bytes = read_file(path)?;
    let text = String::from_utf8(bytes)
        .map_err(|e| CliError::format(path, e.utf8_error().valid_up_to() as u64, "not UTF-8"))?;
    let mut rows = Vec::new();
    let mut offset = 0u64;
    for (i, line) in text.lines().enumerate() {
        let this_offset = offset;
        offset += line.len() as u64 + 1;
        if i == 0 {
            if line != "step,loss,wall_ms" {
                return Err(CliError::format(
                    path,
                    0,
                    format!("bad header {:?}, expected \"step,loss,wall_ms\"", line),
                ));
            }
            continue;
        }
        if line.is_empty() {
            continue;
        }
        let fields: Vec<&str> = line.split(',').collect();
        if fields.len() != 3 {
            return Err(CliError::format(
                path,
                this_offset,
                format!("row {} has {} fields, expected 3", i, fields.len()),
            ));
        }
        let parse_err = |what: &str| {
            CliError::format(path, this_offset, format!("row {}: unparsable {}", i, what))
        };
        rows.push(TrainLogRow {
            step: fields[0].parse().map_err(|_| parse_err("step"))?,
            loss: fields[1].parse().map_err(|_| parse_err("loss"))?,
            wall_ms: fields[2].parse().map_err(|_| parse_err("wall_ms"))?,
        });
    }
    Ok(rows)
}

/// The log with wall-clock timing removed: the deterministic portion that
/// must be byte-identical across same-seed runs.
pub fn strip_wall_ms(rows: &[TrainLogRow]) -> String {
    let mut out = String::from("step,loss\n");
    for r in rows {
        out.push_str(&format!("{},{}\n", r.step, r.loss));
    }
    out
}
