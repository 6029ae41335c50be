//! Line-delimited log files: one JSON record per exploration triplet.
//!
//! Field order is fixed by the record struct and floats use round-trip-exact
//! formatting, so identical collections produce byte-identical files.

use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::Path;

use crate::error::{Error, Result};
use crate::features::FeatureSchema;
use crate::simenv::{LoggedTriplet, LOG_FORMAT_VERSION};

pub fn write_log(path: &Path, triplets: &[LoggedTriplet]) -> Result<()> {
    let file = File::create(path).map_err(|e| Error::Io(format!("log write {}: {e}", path.display())))?;
    let mut out = BufWriter::new(file);
    for t in triplets {
        serde_json::to_writer(&mut out, t).map_err(|e| Error::Io(e.to_string()))?;
        out.write_all(b"\n")?;
    }
    out.flush()?;
    Ok(())
}

pub fn read_log(path: &Path) -> Result<Vec<LoggedTriplet>> {
    let file = File::open(path).map_err(|e| Error::Io(format!("log read {}: {e}", path.display())))?;
    let reader = BufReader::new(file);
    let mut out = Vec::new();
    let mut last_rid: Option<u64> = None;
    for (lineno, line) in reader.lines().enumerate() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let t: LoggedTriplet = serde_json::from_str(&line)
            .map_err(|e| Error::Schema(format!("log line {}: {e}", lineno + 1)))?;
        if t.version != LOG_FORMAT_VERSION {
            return Err(Error::Schema(format!(
                "log line {}: format version {} unsupported (expected {LOG_FORMAT_VERSION})",
                lineno + 1,
                t.version
            )));
        }
        if t.bp <= 0.0 {
            return Err(Error::Schema(format!("log line {}: behavior_prob must be > 0", lineno + 1)));
        }
        if let Some(prev) = last_rid {
            if t.rid <= prev {
                return Err(Error::Schema(format!("log line {}: request ids must strictly increase", lineno + 1)));
            }
        }
        last_rid = Some(t.rid);
        out.push(t);
    }
    Ok(out)
}

/// Checks every record's state against a schema; used before training or
/// evaluating on a log.
pub fn check_schema(triplets: &[LoggedTriplet], schema: &FeatureSchema) -> Result<()> {
    for t in triplets {
        t.state()
            .check_against(schema)
            .map_err(|e| Error::Schema(format!("log rid {}: {e}", t.rid)))?;
    }
    Ok(())
}
