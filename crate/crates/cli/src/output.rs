use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::Path;

use anyhow::Context;
use passcheck::mnmso::{SubbandResult, TraceRecord};
use passcheck::verifier::{MergedSample, PassivityReport};
use serde::Serialize;

pub const CSV_HEADER: [&str; 5] = ["omega", "zeta", "phi", "subband", "is_violation"];

pub fn summary_line(report: &PassivityReport) -> String {
    format!(
        "{}: {} band(s), L = {}, K = {}, {:.3} s",
        if report.passive { "passive" } else { "non-passive" },
        report.bands.len(),
        report.subband_count,
        report.total_evaluations,
        report.wall_time_s
    )
}

/// Merged samples in frequency order, one row per sample.
pub fn write_samples_csv(path: &Path, samples: &[MergedSample]) -> anyhow::Result<()> {
    let mut w = csv::Writer::from_path(path).with_context(|| format!("writing {}", path.display()))?;
    w.write_record(CSV_HEADER)?;
    for s in samples {
        w.write_record([
            s.omega.to_string(),
            s.zeta.to_string(),
            s.phi.to_string(),
            s.subband.to_string(),
            s.is_violation().to_string(),
        ])?;
    }
    w.flush()?;
    Ok(())
}

#[derive(Serialize)]
struct TraceLine<'a> {
    subband: usize,
    #[serde(flatten)]
    record: &'a TraceRecord,
}

pub fn write_trace(path: &Path, results: &[SubbandResult]) -> anyhow::Result<()> {
    let file = File::create(path).with_context(|| format!("writing {}", path.display()))?;
    let mut out = BufWriter::new(file);
    for (subband, result) in results.iter().enumerate() {
        for record in &result.trace {
            serde_json::to_writer(&mut out, &TraceLine { subband, record })?;
            out.write_all(b"\n")?;
        }
    }
    out.flush()?;
    Ok(())
}
