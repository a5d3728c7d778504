mod export;
mod rom;
mod solve;
mod sweep;

use std::fs::File;
use std::io::BufWriter;
use std::path::{Path, PathBuf};

use anyhow::{Context, Result};
use pbrom::io::{write_dx, DxGrid};
use pbrom::{DiscreteSystem, Molecule};
use serde_json::Value;
use sha2::{Digest, Sha256};

use crate::config::RunConfig;

pub use export::export;
pub use rom::build_rom;
pub use solve::solve;
pub use sweep::{sweep, SweepMode};

/// Version of every JSON report layout written by this tool.
pub const REPORT_SCHEMA_VERSION: u32 = 1;

/// Non-success outcomes that still produced artifacts.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Status {
    Ok,
    Stalled,
    OutOfTolerance,
}

pub struct Inputs {
    pub config: RunConfig,
    pub molecule: Molecule,
    pub config_hash: String,
}

impl Inputs {
    pub fn load(config: RunConfig) -> Result<Self> {
        let text = std::fs::read_to_string(&config.pqr)
            .with_context(|| format!("cannot read molecule {}", config.pqr.display()))?;
        let molecule =
            pbrom::parse_pqr(&text).with_context(|| format!("cannot parse {}", config.pqr.display()))?;
        let config_hash = config.hash(&text)?;
        Ok(Self {
            config,
            molecule,
            config_hash,
        })
    }

    pub fn build_system(&self) -> Result<DiscreteSystem> {
        DiscreteSystem::build(&self.molecule, &self.config.system).context("cannot set up the discrete system")
    }

    pub fn output_dir(&self) -> Result<&Path> {
        let dir = &self.config.output;
        std::fs::create_dir_all(dir).with_context(|| format!("cannot create output directory {}", dir.display()))?;
        Ok(dir)
    }
}

pub fn create(path: &Path) -> Result<BufWriter<File>> {
    let file = File::create(path).with_context(|| format!("cannot create {}", path.display()))?;
    Ok(BufWriter::new(file))
}

pub fn write_json(path: &Path, value: &Value) -> Result<()> {
    let mut text = serde_json::to_string_pretty(value)?;
    text.push('\n');
    std::fs::write(path, text).with_context(|| format!("cannot write {}", path.display()))
}

pub fn sha256_file(path: &Path) -> Result<String> {
    let bytes = std::fs::read(path).with_context(|| format!("cannot read {}", path.display()))?;
    Ok(hex::encode(Sha256::digest(&bytes)))
}

/// Writes a node field in the molecule's original coordinates.
pub fn write_field(
    path: &Path,
    sys: &DiscreteSystem,
    original: &Molecule,
    values: Vec<f64>,
    title: &str,
    config_hash: &str,
) -> Result<PathBuf> {
    let mut grid = DxGrid::from_grid(&sys.grid, values)?;
    let shift = original.centroid();
    for (o, s) in grid.origin.iter_mut().zip(shift) {
        *o += s;
    }
    let comments = vec![title.to_string(), format!("config_hash {config_hash}")];
    write_dx(create(path)?, &grid, &comments).with_context(|| format!("cannot write {}", path.display()))?;
    Ok(path.to_path_buf())
}

pub fn file_name(path: &Path) -> String {
    path.file_name().map(|s| s.to_string_lossy().into_owned()).unwrap_or_default()
}
