use std::path::{Path, PathBuf};

use anyhow::{bail, ensure, Context, Result};
use clap::Args;
use pbrom::{FomOptions, GreedyOptions, LinearSolverOptions, Model, RomOptions, SystemConfig};
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

/// Settings that may come from the config file or from flags. Flags win.
#[derive(Args, Clone, Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Overrides {
    /// Molecule in PQR format.
    #[arg(long)]
    pub pqr: Option<PathBuf>,
    /// Nodes per axis (odd).
    #[arg(long)]
    pub n: Option<usize>,
    /// Cube half-length in Å. Derived from the molecule when absent.
    #[arg(long = "length")]
    #[serde(alias = "length")]
    pub half_length: Option<f64>,
    /// Margin added around the molecule when no half-length is given.
    #[arg(long)]
    pub expansion: Option<f64>,
    #[arg(long)]
    pub eps_molecular: Option<f64>,
    #[arg(long)]
    pub eps_solvent: Option<f64>,
    /// Temperature in K.
    #[arg(long)]
    pub temperature: Option<f64>,
    #[arg(long)]
    pub quadrature_m: Option<usize>,
    #[arg(long)]
    pub quadrature_c0: Option<f64>,
    #[arg(long)]
    pub long_rank: Option<usize>,
    /// nrpbe, npbe, lrpbe or lpbe.
    #[arg(long)]
    pub model: Option<String>,
    /// Ionic strength in mol/L.
    #[arg(long)]
    pub ionic: Option<f64>,
    /// Training set as lo:hi:count.
    #[arg(long)]
    pub training: Option<String>,
    #[arg(long)]
    pub greedy_tol: Option<f64>,
    #[arg(long)]
    pub fp_tol: Option<f64>,
    #[arg(long)]
    pub linear_tol: Option<f64>,
    #[arg(long)]
    pub deim_cutoff: Option<f64>,
    /// Output directory.
    #[arg(long, short)]
    pub output: Option<PathBuf>,
    #[arg(long)]
    pub seed: Option<u64>,
    /// Number of random parameters for sweep and validate.
    #[arg(long)]
    pub validation_count: Option<usize>,
    /// Largest relative ROM error accepted by validate.
    #[arg(long)]
    pub validation_tol: Option<f64>,
    /// Worker threads for sweeps.
    #[arg(long)]
    pub workers: Option<usize>,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct Training {
    pub lo: f64,
    pub hi: f64,
    pub count: usize,
}

impl Training {
    pub fn parse(s: &str) -> Result<Self> {
        let parts: Vec<&str> = s.split(':').collect();
        ensure!(parts.len() == 3, "training must be lo:hi:count, got {s:?}");
        let lo: f64 = parts[0].trim().parse().with_context(|| format!("training lower bound {:?}", parts[0]))?;
        let hi: f64 = parts[1].trim().parse().with_context(|| format!("training upper bound {:?}", parts[1]))?;
        let count: usize = parts[2].trim().parse().with_context(|| format!("training count {:?}", parts[2]))?;
        ensure!(count >= 1, "training count must be at least 1");
        ensure!(lo >= 0.0 && hi.is_finite(), "training range must lie in [0, inf), got {lo}:{hi}");
        ensure!(hi >= lo, "training range is reversed: {lo}:{hi}");
        ensure!(count == 1 || hi > lo, "a training range with several points needs hi > lo");
        Ok(Self { lo, hi, count })
    }

    /// Equispaced points; a single point sits at `lo`.
    pub fn points(&self) -> Vec<f64> {
        if self.count == 1 {
            return vec![self.lo];
        }
        let step = (self.hi - self.lo) / (self.count - 1) as f64;
        (0..self.count)
            .map(|i| if i + 1 == self.count { self.hi } else { self.lo + step * i as f64 })
            .collect()
    }
}

/// Fully resolved run configuration.
#[derive(Clone, Debug, Serialize)]
pub struct RunConfig {
    pub pqr: PathBuf,
    pub system: SystemConfig,
    pub model: Model,
    pub ionic: f64,
    pub training: Training,
    pub greedy_tol: f64,
    pub fp_tol: f64,
    pub linear_tol: f64,
    pub deim_cutoff: f64,
    pub seed: u64,
    pub validation_count: usize,
    pub validation_tol: f64,
    #[serde(skip)]
    pub output: PathBuf,
    #[serde(skip)]
    pub workers: usize,
}

impl RunConfig {
    /// Reads the optional flat TOML file and applies flag overrides on top.
    pub fn resolve(file: Option<&Path>, flags: &Overrides) -> Result<Self> {
        let from_file = match file {
            Some(path) => {
                let text = std::fs::read_to_string(path)
                    .with_context(|| format!("cannot read config {}", path.display()))?;
                let parsed: Overrides =
                    toml::from_str(&text).with_context(|| format!("invalid config {}", path.display()))?;
                // Relative paths in the file are relative to the file.
                let base = path.parent().unwrap_or(Path::new("."));
                Overrides {
                    pqr: parsed.pqr.map(|p| base.join(p)),
                    output: parsed.output.map(|p| base.join(p)),
                    ..parsed
                }
            }
            None => Overrides::default(),
        };
        Self::merge(flags, &from_file)
    }

    fn merge(flags: &Overrides, file: &Overrides) -> Result<Self> {
        macro_rules! pick {
            ($field:ident) => {
                flags.$field.clone().or_else(|| file.$field.clone())
            };
        }
        let defaults = SystemConfig::default();
        let Some(pqr) = pick!(pqr) else {
            bail!("no molecule given: pass --pqr or set `pqr` in the config file");
        };
        let mut system = SystemConfig {
            n: pick!(n).unwrap_or(defaults.n),
            half_length: pick!(half_length),
            expansion: pick!(expansion).unwrap_or(defaults.expansion),
            eps_molecular: pick!(eps_molecular).unwrap_or(defaults.eps_molecular),
            eps_solvent: pick!(eps_solvent).unwrap_or(defaults.eps_solvent),
            quadrature_m: pick!(quadrature_m).unwrap_or(defaults.quadrature_m),
            quadrature_c0: pick!(quadrature_c0).unwrap_or(defaults.quadrature_c0),
            long_rank: pick!(long_rank).or(defaults.long_rank),
            ..defaults
        };
        if let Some(t) = pick!(temperature) {
            system.constants.temperature = t;
        }
        let model_name = pick!(model).unwrap_or_else(|| "nrpbe".into());
        let model: Model = model_name
            .parse()
            .with_context(|| format!("unknown model {model_name:?}"))?;
        let greedy = GreedyOptions::default();
        let config = Self {
            pqr,
            system,
            model,
            ionic: pick!(ionic).unwrap_or(0.1),
            training: Training::parse(&pick!(training).unwrap_or_else(|| "0.05:0.15:11".into()))?,
            greedy_tol: pick!(greedy_tol).unwrap_or(greedy.tol),
            fp_tol: pick!(fp_tol).unwrap_or(greedy.fom.fp_tol),
            linear_tol: pick!(linear_tol).unwrap_or(greedy.fom.linear.rel_tol),
            deim_cutoff: pick!(deim_cutoff).unwrap_or(greedy.deim_cutoff),
            seed: pick!(seed).unwrap_or(0),
            validation_count: pick!(validation_count).unwrap_or(100),
            validation_tol: pick!(validation_tol).unwrap_or(1e-6),
            output: pick!(output).unwrap_or_else(|| PathBuf::from("pbrom-out")),
            workers: pick!(workers).unwrap_or(1),
        };
        config.validate()?;
        Ok(config)
    }

    fn validate(&self) -> Result<()> {
        for (name, v) in [
            ("greedy_tol", self.greedy_tol),
            ("fp_tol", self.fp_tol),
            ("linear_tol", self.linear_tol),
            ("deim_cutoff", self.deim_cutoff),
            ("validation_tol", self.validation_tol),
        ] {
            ensure!(v > 0.0 && v.is_finite(), "{name} must be positive, got {v}");
        }
        ensure!(self.ionic >= 0.0 && self.ionic.is_finite(), "ionic strength must be in [0, inf), got {}", self.ionic);
        ensure!(self.workers >= 1, "workers must be at least 1");
        Ok(())
    }

    pub fn fom_options(&self) -> FomOptions {
        FomOptions {
            fp_tol: self.fp_tol,
            linear: LinearSolverOptions {
                rel_tol: self.linear_tol,
                ..Default::default()
            },
            ..Default::default()
        }
    }

    pub fn greedy_options(&self) -> GreedyOptions {
        GreedyOptions {
            tol: self.greedy_tol,
            fom: self.fom_options(),
            rom: RomOptions::default(),
            deim_cutoff: self.deim_cutoff,
            ..Default::default()
        }
    }

    /// SHA-256 over the resolved settings and the molecule file contents.
    /// Output location, worker count and the molecule's path do not enter.
    pub fn hash(&self, pqr_text: &str) -> Result<String> {
        let mut value = serde_json::to_value(self)?;
        if let Some(map) = value.as_object_mut() {
            map.remove("pqr");
            map.insert("pqr_sha256".into(), hex::encode(Sha256::digest(pqr_text.as_bytes())).into());
        }
        Ok(hex::encode(Sha256::digest(serde_json::to_vec(&value)?)))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn base() -> Overrides {
        Overrides {
            pqr: Some("m.pqr".into()),
            ..Default::default()
        }
    }

    #[test]
    fn training_points() {
        let t = Training::parse("0.05:0.15:11").unwrap();
        let p = t.points();
        assert_eq!(p.len(), 11);
        assert_eq!(p[0], 0.05);
        assert_eq!(p[10], 0.15);
        assert!((p[5] - 0.1).abs() < 1e-15);
        assert_eq!(Training::parse("0.1:0.1:1").unwrap().points(), vec![0.1]);
        assert!(Training::parse("0.1:0.2").is_err());
        assert!(Training::parse("-0.1:0.2:3").is_err());
        assert!(Training::parse("0.1:0.2:0").is_err());
        assert!(Training::parse("0.2:0.1:3").is_err());
    }

    #[test]
    fn flags_override_file() {
        let file: Overrides = toml::from_str("pqr = \"a.pqr\"\nn = 17\nionic = 0.05\nmodel = \"lpbe\"").unwrap();
        let flags = Overrides {
            n: Some(9),
            ..Default::default()
        };
        let c = RunConfig::merge(&flags, &file).unwrap();
        assert_eq!(c.system.n, 9);
        assert_eq!(c.ionic, 0.05);
        assert_eq!(c.model, Model::Lpbe);
        assert_eq!(c.pqr, PathBuf::from("a.pqr"));
    }

    #[test]
    fn unknown_keys_and_bad_values_are_rejected() {
        assert!(toml::from_str::<Overrides>("grid = 3").is_err());
        let bad = Overrides {
            greedy_tol: Some(0.0),
            ..base()
        };
        assert!(RunConfig::merge(&bad, &Overrides::default()).is_err());
        let bad = Overrides {
            model: Some("pb".into()),
            ..base()
        };
        assert!(RunConfig::merge(&bad, &Overrides::default()).is_err());
        assert!(RunConfig::merge(&Overrides::default(), &Overrides::default()).is_err());
    }

    #[test]
    fn hash_ignores_output_and_tracks_inputs() {
        let a = RunConfig::merge(&base(), &Overrides::default()).unwrap();
        let b = RunConfig::merge(
            &Overrides {
                output: Some("elsewhere".into()),
                workers: Some(4),
                pqr: Some("other/m.pqr".into()),
                ..Default::default()
            },
            &Overrides::default(),
        )
        .unwrap();
        assert_eq!(a.hash("ATOM").unwrap(), b.hash("ATOM").unwrap());
        assert_ne!(a.hash("ATOM").unwrap(), a.hash("HETATM").unwrap());
        let c = RunConfig::merge(
            &Overrides {
                seed: Some(7),
                ..base()
            },
            &Overrides::default(),
        )
        .unwrap();
        assert_ne!(a.hash("ATOM").unwrap(), c.hash("ATOM").unwrap());
    }
}
