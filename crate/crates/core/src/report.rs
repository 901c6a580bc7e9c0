//! Workload reports: one CSV row and one JSON object per job.

use std::io::Write;
use std::path::Path;

use crate::engine::JobReport;
use crate::error::Result;

/// CSV columns, in order. Matches the field order of `JobReport`.
pub const CSV_COLUMNS: [&str; 25] = [
    "job_id",
    "attribute",
    "mode",
    "rho",
    "index_splits",
    "full_splits",
    "index_waves",
    "full_waves",
    "blocks_total",
    "blocks_indexed_before",
    "blocks_indexed",
    "indexed_fraction",
    "blocks_offered",
    "blocks_enqueued",
    "blocks_rejected",
    "completions",
    "completions_skipped",
    "t_is",
    "predicted_t_job",
    "simulated_t_job",
    "records_read",
    "records_out",
    "bytes_read",
    "remote_bytes_read",
    "warnings",
];

/// Header is written even for an empty report.
pub fn write_csv<W: Write>(reports: &[JobReport], out: W) -> Result<()> {
    let mut w = csv::WriterBuilder::new().has_headers(false).from_writer(out);
    w.write_record(CSV_COLUMNS)?;
    for r in reports {
        w.serialize(r)?;
    }
    w.flush()?;
    Ok(())
}

pub fn write_json<W: Write>(reports: &[JobReport], mut out: W) -> Result<()> {
    serde_json::to_writer_pretty(&mut out, reports)?;
    writeln!(out)?;
    Ok(())
}

pub fn save(reports: &[JobReport], csv_path: Option<&Path>, json_path: Option<&Path>) -> Result<()> {
    if let Some(p) = csv_path {
        write_csv(reports, std::fs::File::create(p)?)?;
    }
    if let Some(p) = json_path {
        write_json(reports, std::fs::File::create(p)?)?;
    }
    Ok(())
}

pub fn load_json(path: &Path) -> Result<Vec<JobReport>> {
    Ok(serde_json::from_slice(&std::fs::read(path)?)?)
}

pub fn read_csv(path: &Path) -> Result<Vec<JobReport>> {
    let mut r = csv::Reader::from_path(path)?;
    Ok(r.deserialize().collect::<Result<_, _>>()?)
}
