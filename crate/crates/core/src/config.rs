//! TOML run configuration with flag overrides.
//!
//! ```toml
//! [params]
//! beta = 1.0
//! mass = 2.0
//!
//! [run]
//! seed = 7
//! samples = 20000
//! format = "csv"
//! ```

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::params::{RunConfig, ThermalParams};

/// Environment variable holding the default output directory.
pub const OUTPUT_DIR_ENV: &str = "SGT_OUTPUT_DIR";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "lowercase")]
pub enum Format {
    #[default]
    Json,
    Csv,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ParamsSection {
    pub beta: Option<f64>,
    pub mass: Option<f64>,
    pub coupling_a: Option<f64>,
    pub hbar: Option<f64>,
    pub mu_scale: Option<f64>,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunSection {
    pub seed: Option<u64>,
    pub samples: Option<usize>,
    pub tolerance: Option<f64>,
    pub n_max: Option<usize>,
    pub quad_points: Option<usize>,
    pub n_images: Option<usize>,
    pub output_dir: Option<PathBuf>,
    pub format: Option<Format>,
    pub workers: Option<usize>,
    pub lambda: Option<f64>,
}

/// A configuration layer: the file contents, or the command-line flags.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ConfigLayer {
    #[serde(default)]
    pub params: ParamsSection,
    #[serde(default)]
    pub run: RunSection,
}

impl ConfigLayer {
    pub fn from_toml(text: &str) -> Result<Self> {
        toml::from_str(text).map_err(|e| Error::Config(e.to_string()))
    }

    pub fn from_file(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| Error::Config(format!("cannot read {}: {e}", path.display())))?;
        Self::from_toml(&text)
    }

    /// `self` with every value set in `top` replaced.
    pub fn overlay(&self, top: &ConfigLayer) -> ConfigLayer {
        let (p, q) = (&self.params, &top.params);
        let (r, s) = (&self.run, &top.run);
        ConfigLayer {
            params: ParamsSection {
                beta: q.beta.or(p.beta),
                mass: q.mass.or(p.mass),
                coupling_a: q.coupling_a.or(p.coupling_a),
                hbar: q.hbar.or(p.hbar),
                mu_scale: q.mu_scale.or(p.mu_scale),
            },
            run: RunSection {
                seed: s.seed.or(r.seed),
                samples: s.samples.or(r.samples),
                tolerance: s.tolerance.or(r.tolerance),
                n_max: s.n_max.or(r.n_max),
                quad_points: s.quad_points.or(r.quad_points),
                n_images: s.n_images.or(r.n_images),
                output_dir: s.output_dir.clone().or_else(|| r.output_dir.clone()),
                format: s.format.or(r.format),
                workers: s.workers.or(r.workers),
                lambda: s.lambda.or(r.lambda),
            },
        }
    }
}

/// Fully resolved settings of one invocation.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Settings {
    pub params: ThermalParams,
    pub run: RunConfig,
    pub lambda: f64,
    pub output_dir: PathBuf,
    pub format: Format,
    pub workers: usize,
}

impl Settings {
    /// Defaults, then the file, then the flags. The output directory falls
    /// back to `$SGT_OUTPUT_DIR`, then to `./sgt-out`.
    pub fn resolve(layer: &ConfigLayer) -> Result<Self> {
        let d = ThermalParams::default();
        let pl = &layer.params;
        let params = ThermalParams {
            beta: pl.beta.unwrap_or(d.beta),
            mass: pl.mass.unwrap_or(d.mass),
            coupling_a: pl.coupling_a.unwrap_or(d.coupling_a),
            hbar: pl.hbar.unwrap_or(d.hbar),
            mu_scale: pl.mu_scale.unwrap_or(d.mu_scale),
        };
        params.validate()?;
        let rd = RunConfig::default();
        let rl = &layer.run;
        let run = RunConfig {
            seed: rl.seed.unwrap_or(rd.seed),
            samples: rl.samples.unwrap_or(rd.samples),
            tolerance: rl.tolerance.unwrap_or(rd.tolerance),
            n_max: rl.n_max.unwrap_or(rd.n_max),
            quad_points: rl.quad_points.unwrap_or(rd.quad_points),
            n_images: rl.n_images.unwrap_or(rd.n_images),
        };
        run.validate()?;
        let lambda = rl.lambda.unwrap_or(1.0);
        if !lambda.is_finite() {
            return Err(Error::Config(format!("lambda must be finite, got {lambda}")));
        }
        let output_dir = rl
            .output_dir
            .clone()
            .or_else(|| std::env::var_os(OUTPUT_DIR_ENV).map(PathBuf::from))
            .unwrap_or_else(|| PathBuf::from("sgt-out"));
        let workers = match rl.workers {
            Some(0) => return Err(Error::Config("workers must be at least 1".into())),
            Some(w) => w,
            None => std::thread::available_parallelism().map(|n| n.get()).unwrap_or(1),
        };
        Ok(Self { params, run, lambda, output_dir, format: rl.format.unwrap_or_default(), workers })
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn flags_override_file() {
        let file = ConfigLayer::from_toml("[params]\nbeta = 2.0\nmass = 3.0\n[run]\nseed = 5\nformat = \"csv\"\n").unwrap();
        let flags = ConfigLayer { params: ParamsSection { mass: Some(1.5), ..Default::default() }, ..Default::default() };
        let s = Settings::resolve(&file.overlay(&flags)).unwrap();
        assert_eq!(s.params.beta, 2.0);
        assert_eq!(s.params.mass, 1.5);
        assert_eq!(s.run.seed, 5);
        assert_eq!(s.format, Format::Csv);
    }

    #[test]
    fn bad_files_are_config_errors() {
        assert!(matches!(ConfigLayer::from_toml("[run]\nsed = 1\n"), Err(Error::Config(_))));
        let zero = ConfigLayer { run: RunSection { samples: Some(0), ..Default::default() }, ..Default::default() };
        assert!(matches!(Settings::resolve(&zero), Err(Error::Config(_))));
    }
}
