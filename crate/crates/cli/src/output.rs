//! Report files. JSON is pretty-printed with a trailing newline; CSV files
//! start with a versioned `#` comment line.

use std::fs;
use std::path::Path;

use serde::Serialize;

use spde_lab::harnack::CheckpointRow;

use crate::error::CliError;

pub const CSV_SCHEMA: &str = "spde-lab-csv/1";

pub fn write_json<T: Serialize>(dir: &Path, name: &str, value: &T) -> Result<(), CliError> {
    fs::create_dir_all(dir)?;
    let mut bytes = serde_json::to_vec_pretty(value)?;
    bytes.push(b'\n');
    fs::write(dir.join(name), bytes)?;
    Ok(())
}

pub fn write_table(
    dir: &Path,
    name: &str,
    kind: &str,
    headers: &[&str],
    rows: &[Vec<String>],
) -> Result<(), CliError> {
    fs::create_dir_all(dir)?;
    let mut out = format!("# {CSV_SCHEMA} {kind}\n").into_bytes();
    {
        let mut w = csv::Writer::from_writer(&mut out);
        w.write_record(headers)?;
        for r in rows {
            w.write_record(r)?;
        }
        w.flush()?;
    }
    fs::write(dir.join(name), out)?;
    Ok(())
}

/// Suite time series: `checkpoint,estimate,std_error,bound,pass`.
pub fn write_checkpoints(dir: &Path, name: &str, kind: &str, rows: &[CheckpointRow]) -> Result<(), CliError> {
    let rows: Vec<Vec<String>> = rows
        .iter()
        .map(|r| {
            vec![
                num(r.t),
                num(r.estimate),
                num(r.std_error),
                num(r.bound),
                r.pass.to_string(),
            ]
        })
        .collect();
    write_table(dir, name, kind, &["checkpoint", "estimate", "std_error", "bound", "pass"], &rows)
}

/// Shortest round-trip decimal form.
pub fn num(v: f64) -> String {
    format!("{v}")
}

/// `name_t<t_end>.csv`.
pub fn csv_name(name: &str, t_end: f64) -> String {
    format!("{name}_t{}.csv", num(t_end))
}
