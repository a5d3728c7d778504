use std::path::Path;
use std::time::Instant;

use anyhow::{bail, ensure, Context, Result};
use log::info;
use pbrom::io::format_float;
use pbrom::{reconstruct, residual_estimator, system_hash, DiscreteSystem, RomArchive, RomOptions};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::Serialize;
use serde_json::{json, Value};

use super::rom::BUILD_REPORT;
use super::{create, file_name, sha256_file, write_json, Inputs, Status, REPORT_SCHEMA_VERSION};

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum SweepMode {
    /// ROM queries; FOM solves only when asked for.
    Sweep { with_fom: bool },
    /// ROM against FOM at random parameters, checked against a tolerance.
    Validate,
}

#[derive(Clone, Debug, Serialize)]
struct Row {
    ionic_strength: f64,
    estimator: f64,
    true_error: Option<f64>,
    relative_error: Option<f64>,
    fom_seconds: Option<f64>,
    rom_seconds: f64,
    rom_steps: usize,
}

const CSV_HEADER: [&str; 7] = [
    "ionic_strength",
    "estimator",
    "true_error",
    "relative_error",
    "fom_seconds",
    "rom_seconds",
    "rom_steps",
];

fn l2(v: &[f64]) -> f64 {
    v.iter().map(|x| x * x).sum::<f64>().sqrt()
}

/// Uniform draws over `[lo, hi]` from the config seed.
pub fn random_parameters(lo: f64, hi: f64, count: usize, seed: u64) -> Vec<f64> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..count)
        .map(|_| if hi > lo { rng.random_range(lo..=hi) } else { lo })
        .collect()
}

/// Loads a ROM and refuses it unless it was built for this molecule, grid
/// configuration and model.
pub fn load_checked(path: &Path, inputs: &Inputs) -> Result<RomArchive> {
    let archive = RomArchive::load(path).with_context(|| format!("cannot load ROM {}", path.display()))?;
    let expected = system_hash(&inputs.molecule, &inputs.config.system)?;
    archive
        .verify_provenance("system", &expected)
        .and_then(|_| archive.verify_provenance("model", inputs.config.model.name()))
        .with_context(|| format!("{} does not match the current inputs; rebuild it with build-rom", path.display()))?;
    Ok(archive)
}

fn query(
    sys: &DiscreteSystem,
    archive: &RomArchive,
    inputs: &Inputs,
    mu: f64,
    with_fom: bool,
) -> Result<Row> {
    let model = archive.rom.model;
    let start = Instant::now();
    let sol = archive
        .rom
        .solve(mu, &RomOptions::default())
        .with_context(|| format!("ROM solve at ionic strength {mu} failed"))?;
    let rom_seconds = start.elapsed().as_secs_f64();
    let problem = sys.problem(model, mu)?;
    let estimator = residual_estimator(&problem, &archive.basis.columns, &sol);
    let (true_error, relative_error, fom_seconds) = if with_fom {
        let start = Instant::now();
        let fom = sys
            .solve(model, mu, &inputs.config.fom_options())
            .with_context(|| format!("FOM solve at ionic strength {mu} failed"))?;
        let seconds = start.elapsed().as_secs_f64();
        let lifted = reconstruct(&archive.basis.columns, &sol.coefficients);
        let diff: Vec<f64> = fom.interior.iter().zip(&lifted).map(|(a, b)| a - b).collect();
        let err = l2(&diff);
        let norm = l2(&fom.interior);
        let rel = if norm > 0.0 { err / norm } else { err };
        (Some(err), Some(rel), Some(seconds))
    } else {
        (None, None, None)
    };
    Ok(Row {
        ionic_strength: mu,
        estimator,
        true_error,
        relative_error,
        fom_seconds,
        rom_seconds,
        rom_steps: sol.trace.deltas.len(),
    })
}

fn write_rows(path: &Path, rows: &[Row]) -> Result<()> {
    let opt = |v: Option<f64>| format_float(v.unwrap_or(f64::NAN));
    let mut w = csv::Writer::from_writer(create(path)?);
    w.write_record(CSV_HEADER)?;
    for r in rows {
        w.write_record([
            format_float(r.ionic_strength),
            format_float(r.estimator),
            opt(r.true_error),
            opt(r.relative_error),
            opt(r.fom_seconds),
            format_float(r.rom_seconds),
            r.rom_steps.to_string(),
        ])?;
    }
    w.flush()?;
    Ok(())
}

/// Offline time recorded next to the ROM by build-rom, if present.
fn offline_seconds(rom_path: &Path) -> Option<f64> {
    let report = rom_path.parent()?.join(BUILD_REPORT);
    let value: Value = serde_json::from_str(&std::fs::read_to_string(report).ok()?).ok()?;
    value.get("offline_seconds")?.as_f64()
}

/// FOM cost grows linearly with the query count; the ROM pays its offline
/// phase once.
fn speedup_table(fom_per_query: f64, rom_per_query: f64, offline: f64) -> Vec<Value> {
    [1u32, 10, 100, 1000]
        .iter()
        .map(|&q| {
            let q = q as f64;
            let fom = fom_per_query * q;
            let rom = offline + rom_per_query * q;
            json!({
                "queries": q as u32,
                "fom_seconds": fom,
                "rom_seconds": rom,
                "speedup": fom / rom,
            })
        })
        .collect()
}

fn mean(values: impl Iterator<Item = f64>) -> f64 {
    let (sum, n) = values.fold((0.0, 0usize), |(s, n), v| (s + v, n + 1));
    if n == 0 {
        f64::NAN
    } else {
        sum / n as f64
    }
}

fn max(values: impl Iterator<Item = f64>) -> Option<f64> {
    values.fold(None, |m, v| Some(m.map_or(v, |m: f64| if v.is_nan() || v > m { v } else { m })))
}

pub fn sweep(inputs: &Inputs, rom_path: &Path, mode: SweepMode, mus: &[f64], count: Option<usize>) -> Result<Status> {
    let cfg = &inputs.config;
    let archive = load_checked(rom_path, inputs)?;
    let dir = inputs.output_dir()?;
    let sys = inputs.build_system()?;

    let parameters = if !mus.is_empty() && mode != SweepMode::Validate {
        mus.to_vec()
    } else {
        let training = &archive.header.training;
        let lo = training.iter().copied().fold(f64::INFINITY, f64::min);
        let hi = training.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        let n = match mode {
            SweepMode::Validate => cfg.validation_count,
            SweepMode::Sweep { .. } => count.unwrap_or(cfg.validation_count),
        };
        random_parameters(lo, hi, n, cfg.seed)
    };
    ensure!(!parameters.is_empty(), "no parameters to query");
    if let Some(bad) = parameters.iter().find(|m| m.is_nan() || **m < 0.0 || m.is_infinite()) {
        bail!("ionic strength must be in [0, inf), got {bad}");
    }
    let with_fom = matches!(mode, SweepMode::Validate | SweepMode::Sweep { with_fom: true });
    info!("{} queries on {} worker(s)", parameters.len(), cfg.workers);

    let pool = rayon::ThreadPoolBuilder::new().num_threads(cfg.workers).build()?;
    let rows: Vec<Row> = pool.install(|| {
        parameters
            .par_iter()
            .map(|&mu| query(&sys, &archive, inputs, mu, with_fom))
            .collect::<Result<Vec<_>>>()
    })?;

    // Without FOM rows the FOM cost is measured once at the first parameter.
    let fom_per_query = if with_fom {
        mean(rows.iter().filter_map(|r| r.fom_seconds))
    } else {
        let start = Instant::now();
        sys.solve(archive.rom.model, parameters[0], &cfg.fom_options())
            .context("timing FOM solve failed")?;
        start.elapsed().as_secs_f64()
    };
    let rom_per_query = mean(rows.iter().map(|r| r.rom_seconds));
    let offline = offline_seconds(rom_path);

    let name = match mode {
        SweepMode::Validate => "validate",
        SweepMode::Sweep { .. } => "sweep",
    };
    let csv_path = dir.join(format!("{name}.csv"));
    write_rows(&csv_path, &rows)?;

    let max_relative = max(rows.iter().filter_map(|r| r.relative_error));
    let status = match (mode, max_relative) {
        (SweepMode::Validate, Some(e)) if e.is_nan() || e > cfg.validation_tol => Status::OutOfTolerance,
        _ => Status::Ok,
    };
    let report = json!({
        "schema_version": REPORT_SCHEMA_VERSION,
        "command": name,
        "config_hash": inputs.config_hash,
        "rom_file": file_name(rom_path),
        "rom_sha256": sha256_file(rom_path)?,
        "rom_provenance": archive.header.provenance,
        "model": archive.rom.model.name(),
        "basis_size": archive.rom.size(),
        "deim_rank": archive.deim.rank(),
        "seed": cfg.seed,
        "queries": rows.len(),
        "rows": rows,
        "summary": {
            "max_estimator": max(rows.iter().map(|r| r.estimator)),
            "max_true_error": max(rows.iter().filter_map(|r| r.true_error)),
            "max_relative_error": max_relative,
            "fom_seconds_per_query": fom_per_query,
            "rom_seconds_per_query": rom_per_query,
            "online_speedup": fom_per_query / rom_per_query,
            "offline_seconds": offline,
        },
        "validation_tol": if mode == SweepMode::Validate { Some(cfg.validation_tol) } else { None },
        "passed": status == Status::Ok,
        "speedup": speedup_table(fom_per_query, rom_per_query, offline.unwrap_or(0.0)),
        "files": [file_name(&csv_path)],
    });
    write_json(&dir.join(format!("{name}_report.json")), &report)?;

    println!(
        "{} queries: ROM {:.3e} s/query, FOM {:.3e} s/query, online speedup {:.1}",
        rows.len(),
        rom_per_query,
        fom_per_query,
        fom_per_query / rom_per_query
    );
    if let Some(e) = max_relative {
        println!("max relative error {e:e}");
    }
    if status == Status::OutOfTolerance {
        eprintln!(
            "validation failed: max relative error {:e} exceeds {:e}",
            max_relative.unwrap_or(f64::NAN),
            cfg.validation_tol
        );
    }
    Ok(status)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn draws_are_seeded_and_in_range() {
        let a = random_parameters(0.05, 0.15, 50, 3);
        assert_eq!(a, random_parameters(0.05, 0.15, 50, 3));
        assert_ne!(a, random_parameters(0.05, 0.15, 50, 4));
        assert!(a.iter().all(|m| (0.05..=0.15).contains(m)));
        assert_eq!(random_parameters(0.1, 0.1, 3, 0), vec![0.1; 3]);
    }

    #[test]
    fn speedup_grows_with_queries_when_offline_is_paid_once() {
        let table = speedup_table(2.0, 0.01, 30.0);
        let s: Vec<f64> = table.iter().map(|r| r["speedup"].as_f64().unwrap()).collect();
        assert!(s.windows(2).all(|w| w[1] > w[0]));
        assert!((s[0] - 2.0 / 30.01).abs() < 1e-12);
        assert!((s[3] - 2000.0 / 40.0).abs() < 1e-9);
    }

    #[test]
    fn max_propagates_nan() {
        assert_eq!(max([1.0, 3.0, 2.0].into_iter()), Some(3.0));
        assert!(max([1.0, f64::NAN, 2.0].into_iter()).unwrap().is_nan());
        assert_eq!(max(std::iter::empty()), None);
    }
}
