//! CSV tables: header row, comma separated, shortest round-trip scientific
//! notation for floats.

use std::io::Write;

use crate::error::Result;
use crate::fom::IterationTrace;
use crate::rbm::{GreedyRecord, RomTrace};

pub fn format_float(v: f64) -> String {
    format!("{v:e}")
}

pub fn write_greedy_log<W: Write>(w: W, log: &[GreedyRecord]) -> Result<()> {
    let mut out = csv::Writer::from_writer(w);
    out.write_record(["iteration", "basis_size", "mu_star", "max_estimator", "true_error", "max_true_error"])?;
    for r in log {
        out.write_record([
            r.iteration.to_string(),
            r.basis_size.to_string(),
            format_float(r.mu_star),
            format_float(r.max_estimator),
            format_float(r.true_error),
            r.max_true_error.map(format_float).unwrap_or_default(),
        ])?;
    }
    out.flush()?;
    Ok(())
}

pub fn write_singular_values<W: Write>(w: W, sigma: &[f64], retained: usize) -> Result<()> {
    let mut out = csv::Writer::from_writer(w);
    out.write_record(["index", "singular_value", "relative", "retained"])?;
    let first = sigma.first().copied().unwrap_or(0.0);
    for (j, s) in sigma.iter().enumerate() {
        let rel = if first > 0.0 { s / first } else { 0.0 };
        out.write_record([
            (j + 1).to_string(),
            format_float(*s),
            format_float(rel),
            (j < retained).to_string(),
        ])?;
    }
    out.flush()?;
    Ok(())
}

pub fn write_trace<W: Write>(w: W, trace: &IterationTrace) -> Result<()> {
    let mut out = csv::Writer::from_writer(w);
    out.write_record(["step", "delta", "linear_residual", "linear_iterations"])?;
    for k in 0..trace.steps() {
        out.write_record([
            (k + 1).to_string(),
            format_float(trace.deltas[k]),
            format_float(trace.linear_residuals[k]),
            trace.linear_iterations[k].to_string(),
        ])?;
    }
    out.flush()?;
    Ok(())
}

pub fn write_rom_trace<W: Write>(w: W, trace: &RomTrace) -> Result<()> {
    let mut out = csv::Writer::from_writer(w);
    out.write_record(["step", "delta"])?;
    for (k, d) in trace.deltas.iter().enumerate() {
        out.write_record([(k + 1).to_string(), format_float(*d)])?;
    }
    out.flush()?;
    Ok(())
}
