use std::collections::BTreeMap;
use std::time::Instant;

use anyhow::{Context, Result};
use log::info;
use pbrom::io::{write_greedy_log, write_singular_values};
use pbrom::{greedy_build, RomArchive};
use serde_json::json;

use super::{create, sha256_file, write_json, Inputs, Status, REPORT_SCHEMA_VERSION};

pub const ROM_FILE: &str = "rom.pbrom";
pub const BUILD_REPORT: &str = "build_report.json";

pub fn build_rom(inputs: &Inputs, track_training_error: bool) -> Result<Status> {
    let cfg = &inputs.config;
    let dir = inputs.output_dir()?;
    let start = Instant::now();
    let sys = inputs.build_system()?;
    let training = cfg.training.points();
    let options = pbrom::GreedyOptions {
        track_training_error,
        ..cfg.greedy_options()
    };
    info!("greedy over {} training parameters, tol {:e}", training.len(), cfg.greedy_tol);
    let outcome = greedy_build(&sys, cfg.model, &training, &options).context("reduced basis construction failed")?;
    let offline_seconds = start.elapsed().as_secs_f64();

    let provenance = BTreeMap::from([
        ("config".to_string(), inputs.config_hash.clone()),
        ("model".to_string(), cfg.model.name().to_string()),
        ("system".to_string(), sys.hash().to_string()),
    ]);
    let archive = RomArchive::from_outcome(&outcome, &training, cfg.greedy_tol, provenance);
    let rom_path = dir.join(ROM_FILE);
    archive.save(&rom_path).with_context(|| format!("cannot write {}", rom_path.display()))?;
    write_greedy_log(create(&dir.join("greedy_log.csv"))?, &outcome.log)?;
    write_singular_values(
        create(&dir.join("singular_values.csv"))?,
        &outcome.deim.singular_values,
        outcome.deim.rank(),
    )?;

    let stall = outcome.stall.as_ref().map(|e| e.to_string());
    let report = json!({
        "schema_version": REPORT_SCHEMA_VERSION,
        "command": "build-rom",
        "config_hash": inputs.config_hash,
        "system_hash": sys.hash(),
        "model": cfg.model.name(),
        "training": training,
        "tol": cfg.greedy_tol,
        "converged": outcome.converged,
        "stall": stall,
        "basis_size": outcome.basis.size(),
        "selected": outcome.basis.selected,
        "deim_rank": outcome.deim.rank(),
        "offline_seconds": offline_seconds,
        "rom_sha256": sha256_file(&rom_path)?,
        "files": [ROM_FILE, "greedy_log.csv", "singular_values.csv"],
    });
    write_json(&dir.join(BUILD_REPORT), &report)?;

    let last = outcome.log.last().map(|r| r.max_estimator).unwrap_or(f64::NAN);
    println!(
        "N = {}, DEIM rank {}, max estimator {:e}, {:.2} s offline",
        outcome.basis.size(),
        outcome.deim.rank(),
        last,
        offline_seconds
    );
    if outcome.converged {
        return Ok(Status::Ok);
    }
    eprintln!(
        "greedy did not reach tol {:e}: {}",
        cfg.greedy_tol,
        stall.as_deref().unwrap_or("no reason recorded")
    );
    Ok(Status::Stalled)
}
