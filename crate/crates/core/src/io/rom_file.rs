//! ROM container.
//!
//! Layout: 8-byte magic `PBROM001`, little-endian `u64` header length, a
//! JSON header, then a little-endian payload of the arrays listed in the
//! header. The header carries the provenance hashes and a SHA-256 of the
//! payload.

use std::collections::BTreeMap;
use std::io::{Read, Write};
use std::path::Path;

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::deim::DeimBasis;
use crate::error::{Error, Result};
use crate::fom::Model;
use crate::operators::BoundaryGenerator;
use crate::rbm::{GreedyOutcome, GreedyRecord, ReducedBasis, ReducedModel};
use crate::tensor::canonical::ByteCursor;

pub const ROM_MAGIC: &[u8; 8] = b"PBROM001";
pub const ROM_SCHEMA_VERSION: u32 = 1;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ArrayEntry {
    pub name: String,
    /// `f64` or `u64`.
    pub dtype: String,
    pub rows: usize,
    pub cols: usize,
    /// Byte offset into the payload.
    pub offset: usize,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RomHeader {
    pub schema_version: u32,
    pub model: Model,
    /// Named hashes of the inputs the ROM was built from.
    pub provenance: BTreeMap<String, String>,
    pub training: Vec<f64>,
    pub selected: Vec<f64>,
    pub tol: f64,
    pub converged: bool,
    pub greedy_log: Vec<GreedyRecord>,
    pub dim: usize,
    pub basis_size: usize,
    pub deim_rank: usize,
    pub deim_indices: Vec<usize>,
    pub singular_values: Vec<f64>,
    pub evaluator: BoundaryGenerator,
    pub arrays: Vec<ArrayEntry>,
    pub payload_sha256: String,
}

/// Everything needed to run online queries and to reconstruct full fields.
#[derive(Clone, Debug, PartialEq)]
pub struct RomArchive {
    pub header: RomHeader,
    pub basis: ReducedBasis,
    pub rom: ReducedModel,
    pub deim: DeimBasis,
}

struct Payload {
    bytes: Vec<u8>,
    arrays: Vec<ArrayEntry>,
}

impl Payload {
    fn push_f64(&mut self, name: &str, rows: usize, cols: usize, data: impl IntoIterator<Item = f64>) {
        let offset = self.bytes.len();
        let mut count = 0;
        for v in data {
            self.bytes.extend_from_slice(&v.to_le_bytes());
            count += 1;
        }
        debug_assert_eq!(count, rows * cols);
        self.arrays.push(ArrayEntry {
            name: name.into(),
            dtype: "f64".into(),
            rows,
            cols,
            offset,
        });
    }

    fn push_u64(&mut self, name: &str, data: &[usize]) {
        let offset = self.bytes.len();
        for v in data {
            self.bytes.extend_from_slice(&(*v as u64).to_le_bytes());
        }
        self.arrays.push(ArrayEntry {
            name: name.into(),
            dtype: "u64".into(),
            rows: data.len(),
            cols: 1,
            offset,
        });
    }
}

/// Column-major matrix as row-major values.
fn row_major(m: &DMatrix<f64>) -> Vec<f64> {
    let mut out = Vec::with_capacity(m.len());
    for i in 0..m.nrows() {
        out.extend(m.row(i).iter().copied());
    }
    out
}

impl RomArchive {
    pub fn from_outcome(
        outcome: &GreedyOutcome,
        training: &[f64],
        tol: f64,
        provenance: BTreeMap<String, String>,
    ) -> Self {
        Self::assemble(
            outcome.rom.clone(),
            outcome.basis.clone(),
            outcome.deim.clone(),
            training,
            tol,
            outcome.converged,
            outcome.log.clone(),
            provenance,
        )
    }

    #[allow(clippy::too_many_arguments)]
    fn assemble(
        rom: ReducedModel,
        basis: ReducedBasis,
        deim: DeimBasis,
        training: &[f64],
        tol: f64,
        converged: bool,
        greedy_log: Vec<GreedyRecord>,
        provenance: BTreeMap<String, String>,
    ) -> Self {
        let header = RomHeader {
            schema_version: ROM_SCHEMA_VERSION,
            model: rom.model,
            provenance,
            training: training.to_vec(),
            selected: basis.selected.clone(),
            tol,
            converged,
            greedy_log,
            dim: rom.dim,
            basis_size: rom.size(),
            deim_rank: deim.rank(),
            deim_indices: deim.indices.clone(),
            singular_values: deim.singular_values.clone(),
            evaluator: rom.evaluator.clone(),
            arrays: Vec::new(),
            payload_sha256: String::new(),
        };
        Self {
            header,
            basis,
            rom,
            deim,
        }
    }

    fn payload(&self) -> Payload {
        let mut p = Payload {
            bytes: Vec::new(),
            arrays: Vec::new(),
        };
        let (n, dim, r) = (self.rom.size(), self.rom.dim, self.deim.rank());
        p.push_f64("a1", n, n, row_major(&self.rom.a1));
        p.push_f64("a2_projected", n, n, row_major(&self.rom.a2_projected));
        p.push_f64("source", n, 1, self.rom.source.iter().copied());
        p.push_f64("deim_operator", n, r, row_major(&self.rom.deim_operator));
        p.push_f64("pu_inverse", r, r, row_major(&self.deim.pu_inverse));
        p.push_u64("ionic_rows", &self.rom.ionic_rows);
        p.push_f64("a2_ionic", self.rom.a2.len(), 1, self.rom.a2.iter().copied());
        p.push_f64("basis", n, dim, self.basis.columns.iter().flatten().copied());
        p.push_f64("deim_modes", r, dim, self.deim.modes.iter().flatten().copied());
        p
    }

    pub fn write<W: Write>(&self, mut w: W) -> Result<()> {
        let payload = self.payload();
        let mut header = self.header.clone();
        header.arrays = payload.arrays;
        header.payload_sha256 = hex::encode(Sha256::digest(&payload.bytes));
        let json = serde_json::to_vec(&header)?;
        w.write_all(ROM_MAGIC)?;
        w.write_all(&(json.len() as u64).to_le_bytes())?;
        w.write_all(&json)?;
        w.write_all(&payload.bytes)?;
        Ok(())
    }

    pub fn to_bytes(&self) -> Result<Vec<u8>> {
        let mut out = Vec::new();
        self.write(&mut out)?;
        Ok(out)
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        std::fs::write(path, self.to_bytes()?)?;
        Ok(())
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let mut bytes = Vec::new();
        std::fs::File::open(path)?.read_to_end(&mut bytes)?;
        Self::from_bytes(&bytes)
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self> {
        let mut cur = ByteCursor { bytes, pos: 0 };
        if cur.take(8)? != ROM_MAGIC {
            return Err(Error::Format("not a ROM container (bad magic)".into()));
        }
        let len = cur.u64()? as usize;
        let header: RomHeader = serde_json::from_slice(cur.take(len)?)?;
        if header.schema_version != ROM_SCHEMA_VERSION {
            return Err(Error::Format(format!(
                "unsupported ROM schema version {} (expected {ROM_SCHEMA_VERSION})",
                header.schema_version
            )));
        }
        let payload = &bytes[cur.pos..];
        if hex::encode(Sha256::digest(payload)) != header.payload_sha256 {
            return Err(Error::Format("payload checksum mismatch".into()));
        }
        let array = |name: &str| -> Result<(&ArrayEntry, ByteCursor)> {
            let e = header
                .arrays
                .iter()
                .find(|a| a.name == name)
                .ok_or_else(|| Error::Format(format!("missing array '{name}'")))?;
            let mut c = ByteCursor { bytes: payload, pos: 0 };
            c.take(e.offset)?;
            Ok((e, c))
        };
        let floats = |name: &str, rows: usize, cols: usize| -> Result<Vec<f64>> {
            let (e, mut c) = array(name)?;
            if e.dtype != "f64" || e.rows != rows || e.cols != cols {
                return Err(Error::Format(format!(
                    "array '{name}' is {}×{} {}, expected {rows}×{cols} f64",
                    e.rows, e.cols, e.dtype
                )));
            }
            (0..rows * cols).map(|_| c.f64()).collect()
        };
        let (n, dim, r) = (header.basis_size, header.dim, header.deim_rank);
        if header.deim_indices.len() != r || header.selected.len() > n.max(1) {
            return Err(Error::Format("inconsistent header sizes".into()));
        }
        let (rows_entry, mut rows_cur) = array("ionic_rows")?;
        if rows_entry.dtype != "u64" {
            return Err(Error::Format("ionic_rows must be u64".into()));
        }
        let ionic_rows: Vec<usize> = (0..rows_entry.rows)
            .map(|_| rows_cur.u64().map(|v| v as usize))
            .collect::<Result<_>>()?;
        if ionic_rows.iter().any(|&p| p >= dim) {
            return Err(Error::Format("ionic row out of range".into()));
        }
        let s = ionic_rows.len();
        let a1 = DMatrix::from_row_slice(n, n, &floats("a1", n, n)?);
        let a2_projected = DMatrix::from_row_slice(n, n, &floats("a2_projected", n, n)?);
        let source = DVector::from_vec(floats("source", n, 1)?);
        let deim_operator = DMatrix::from_row_slice(n, r, &floats("deim_operator", n, r)?);
        let pu_inverse = DMatrix::from_row_slice(r, r, &floats("pu_inverse", r, r)?);
        let a2 = floats("a2_ionic", s, 1)?;
        let flat = floats("basis", n, dim)?;
        let columns: Vec<Vec<f64>> = flat.chunks_exact(dim.max(1)).map(|c| c.to_vec()).collect();
        let flat = floats("deim_modes", r, dim)?;
        let modes: Vec<Vec<f64>> = flat.chunks_exact(dim.max(1)).map(|c| c.to_vec()).collect();
        let mut v_ionic = Vec::with_capacity(s * n);
        for &p in &ionic_rows {
            v_ionic.extend(columns.iter().map(|v| v[p]));
        }
        let rom = ReducedModel {
            model: header.model,
            dim,
            a1,
            source,
            ionic_rows,
            a2,
            v_ionic,
            a2_projected,
            deim_operator,
            evaluator: header.evaluator.clone(),
            deim_indices: header.deim_indices.clone(),
        };
        let deim = DeimBasis {
            modes,
            singular_values: header.singular_values.clone(),
            indices: header.deim_indices.clone(),
            pu_inverse,
        };
        let basis = ReducedBasis {
            columns,
            selected: header.selected.clone(),
        };
        Ok(Self {
            header,
            basis,
            rom,
            deim,
        })
    }

    /// Fails with [`Error::StaleRom`] unless the stored hash under `key`
    /// equals `expected`.
    pub fn verify_provenance(&self, key: &str, expected: &str) -> Result<()> {
        match self.header.provenance.get(key) {
            Some(h) if h == expected => Ok(()),
            Some(h) => Err(Error::StaleRom(format!(
                "'{key}' hash is {h}, current inputs hash to {expected}"
            ))),
            None => Err(Error::StaleRom(format!("container has no '{key}' hash"))),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::molecule::{Atom, Molecule};
    use crate::rbm::{greedy_build, GreedyOptions, RomOptions};
    use crate::system::{DiscreteSystem, SystemConfig};

    fn archive() -> RomArchive {
        let mol = Molecule::from_atoms(vec![
            Atom {
                position: [0.0; 3],
                charge: 0.5,
                radius: 1.6,
            },
            Atom {
                position: [1.0, 0.5, 0.0],
                charge: -0.2,
                radius: 1.4,
            },
        ])
        .unwrap();
        let sys = DiscreteSystem::build(
            &mol,
            &SystemConfig {
                n: 11,
                half_length: Some(6.0),
                ..Default::default()
            },
        )
        .unwrap();
        let training = [0.05, 0.1, 0.15];
        let opts = GreedyOptions::default();
        let out = greedy_build(&sys, Model::Nrpbe, &training, &opts).unwrap();
        let mut prov = BTreeMap::new();
        prov.insert("system".to_string(), sys.hash().to_string());
        RomArchive::from_outcome(&out, &training, opts.tol, prov)
    }

    #[test]
    fn round_trip_preserves_queries() {
        let a = archive();
        let bytes = a.to_bytes().unwrap();
        assert_eq!(&bytes[..8], ROM_MAGIC);
        let b = RomArchive::from_bytes(&bytes).unwrap();
        assert_eq!(b.rom, a.rom);
        assert_eq!(b.deim, a.deim);
        assert_eq!(b.basis, a.basis);
        let opts = RomOptions::default();
        assert_eq!(a.rom.solve(0.08, &opts).unwrap(), b.rom.solve(0.08, &opts).unwrap());
        assert_eq!(b.to_bytes().unwrap(), bytes);
    }

    #[test]
    fn corruption_and_versions_are_detected() {
        let bytes = archive().to_bytes().unwrap();
        let mut bad = bytes.clone();
        *bad.last_mut().unwrap() ^= 1;
        assert!(matches!(RomArchive::from_bytes(&bad), Err(Error::Format(_))));
        let mut bad = bytes.clone();
        bad[0] = b'X';
        assert!(matches!(RomArchive::from_bytes(&bad), Err(Error::Format(_))));
        let text = String::from_utf8_lossy(&bytes).replace("\"schema_version\":1", "\"schema_version\":9");
        assert!(matches!(RomArchive::from_bytes(text.as_bytes()), Err(Error::Format(_))));
        assert!(RomArchive::from_bytes(&bytes[..bytes.len() / 2]).is_err());
    }

    #[test]
    fn provenance_mismatch_is_stale() {
        let a = archive();
        let h = a.header.provenance["system"].clone();
        a.verify_provenance("system", &h).unwrap();
        assert!(matches!(a.verify_provenance("system", "00"), Err(Error::StaleRom(_))));
        assert!(matches!(a.verify_provenance("config", &h), Err(Error::StaleRom(_))));
    }
}
