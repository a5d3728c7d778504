use std::path::Path;

use anyhow::{Context, Result};
use pbrom::io::{write_greedy_log, write_singular_values};
use pbrom::{reconstruct, RomArchive, RomOptions};
use serde_json::json;

use super::sweep::load_checked;
use super::{create, file_name, sha256_file, write_field, write_json, Inputs, Status, REPORT_SCHEMA_VERSION};

/// Dumps the tables held in a ROM file and, with `potential`, the
/// reconstructed total potential at the configured ionic strength.
pub fn export(rom_path: &Path, inputs: Option<&Inputs>, output: &Path) -> Result<Status> {
    std::fs::create_dir_all(output).with_context(|| format!("cannot create {}", output.display()))?;
    let archive = match inputs {
        Some(inputs) => load_checked(rom_path, inputs)?,
        None => RomArchive::load(rom_path).with_context(|| format!("cannot load ROM {}", rom_path.display()))?,
    };
    let header = &archive.header;
    let mut files = vec!["header.json".to_string(), "greedy_log.csv".to_string(), "singular_values.csv".to_string()];

    let mut value = serde_json::to_value(header)?;
    if let Some(map) = value.as_object_mut() {
        // The boundary generator is bulk data, not metadata.
        map.remove("evaluator");
    }
    write_json(&output.join("header.json"), &value)?;
    write_greedy_log(create(&output.join("greedy_log.csv"))?, &header.greedy_log)?;
    write_singular_values(
        create(&output.join("singular_values.csv"))?,
        &header.singular_values,
        header.deim_rank,
    )?;

    if let Some(inputs) = inputs {
        let mu = inputs.config.ionic;
        let sys = inputs.build_system()?;
        let sol = archive
            .rom
            .solve(mu, &RomOptions::default())
            .with_context(|| format!("ROM solve at ionic strength {mu} failed"))?;
        let interior = reconstruct(&archive.basis.columns, &sol.coefficients);
        let total = sys.total_potential(archive.rom.model, &interior, mu);
        let path = output.join("potential_rom.dx");
        write_field(&path, &sys, &inputs.molecule, total, "reduced-order total potential", &inputs.config_hash)?;
        files.push(file_name(&path));
    }

    let report = json!({
        "schema_version": REPORT_SCHEMA_VERSION,
        "command": "export",
        "rom_file": file_name(rom_path),
        "rom_sha256": sha256_file(rom_path)?,
        "config_hash": inputs.map(|i| i.config_hash.clone()),
        "ionic_strength": inputs.map(|i| i.config.ionic),
        "files": files,
    });
    write_json(&output.join("export_report.json"), &report)?;
    println!("exported {} file(s) to {}", files.len(), output.display());
    Ok(Status::Ok)
}
