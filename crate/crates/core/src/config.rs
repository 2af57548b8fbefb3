//! Run configuration and materials-file parsing.
//!
//! A single TOML file drives a run; command-line flags override file values
//! and the fully resolved configuration is echoed into every report. Relative
//! paths in a config file resolve against the file's own directory.

use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::detector::{EfficiencyCurve, ElementCount, Material, SignalModel};
use crate::error::{Error, Result};
use crate::inference::{GridSpec, McmcSettings, PriorKind, PriorSpec};

/// The five-component configuration shipped with the repository.
pub const DEFAULT_MATERIALS_TOML: &str = include_str!("../../../data/materials_default.toml");

#[derive(Debug, Clone, Deserialize)]
struct MaterialsFile {
    component: Vec<ComponentSpec>,
}

#[derive(Debug, Clone, Deserialize)]
struct ComponentSpec {
    name: String,
    mass_kg: f64,
    #[serde(default)]
    #[allow(dead_code)]
    mass_provenance: Option<String>,
    elements: Vec<ElementSpec>,
    efficiency: EfficiencySpec,
}

#[derive(Debug, Clone, Deserialize)]
struct ElementSpec {
    symbol: String,
    z: u32,
    electrons_per_atom: u32,
    stoichiometry: f64,
    molar_mass_g_mol: f64,
}

#[derive(Debug, Clone, Deserialize)]
struct EfficiencySpec {
    coefficients: Vec<f64>,
    #[serde(default)]
    coefficient_errors: Option<Vec<f64>>,
    valid_range_kev: [f64; 2],
}

/// Parses a materials TOML document into validated domain objects.
pub fn parse_materials(toml_text: &str, origin: &str) -> Result<Vec<Material>> {
    let file: MaterialsFile = toml::from_str(toml_text)
        .map_err(|e| Error::config(format!("materials config {origin}: {e}")))?;
    if file.component.is_empty() {
        return Err(Error::config(format!(
            "materials config {origin} declares no components"
        )));
    }
    file.component
        .into_iter()
        .map(|c| {
            let elements = c
                .elements
                .into_iter()
                .map(|e| {
                    ElementCount::new(
                        e.symbol,
                        e.z,
                        e.electrons_per_atom,
                        e.stoichiometry,
                        e.molar_mass_g_mol,
                    )
                })
                .collect::<Result<Vec<_>>>()?;
            let curve = EfficiencyCurve::new(
                c.efficiency.coefficients,
                c.efficiency.coefficient_errors,
                (c.efficiency.valid_range_kev[0], c.efficiency.valid_range_kev[1]),
            )?;
            Material::new(c.name, c.mass_kg, elements, curve)
        })
        .collect()
}

pub fn load_materials(path: impl AsRef<Path>) -> Result<Vec<Material>> {
    let path = path.as_ref();
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    parse_materials(&text, &path.display().to_string())
}

/// The shipped five-component set.
pub fn default_materials() -> Result<Vec<Material>> {
    parse_materials(DEFAULT_MATERIALS_TOML, "builtin")
}

fn default_window() -> [f64; 2] {
    [1300.0, 1600.0]
}
fn default_bin_width() -> f64 {
    5.0
}
fn default_exposure() -> f64 {
    62.0 * 86400.0
}
fn default_level() -> f64 {
    0.95
}
fn default_rk_theory() -> f64 {
    1.98
}
fn default_output_dir() -> PathBuf {
    PathBuf::from("out")
}

#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
#[serde(deny_unknown_fields)]
pub struct PriorConfig {
    pub kind: String,
    pub rk_min_m: f64,
    pub rk_max_m: f64,
}

impl Default for PriorConfig {
    fn default() -> Self {
        PriorConfig {
            kind: PriorKind::UniformInRk.as_str().to_string(),
            rk_min_m: 1e-10,
            rk_max_m: 1e9,
        }
    }
}

impl PriorConfig {
    pub fn to_spec(&self) -> Result<PriorSpec> {
        PriorSpec::new(PriorKind::parse(&self.kind)?, self.rk_min_m, self.rk_max_m)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum AnalysisMethod {
    Grid,
    Mcmc,
    Both,
}

impl AnalysisMethod {
    pub fn parse(s: &str) -> Result<Self> {
        match s {
            "grid" => Ok(AnalysisMethod::Grid),
            "mcmc" => Ok(AnalysisMethod::Mcmc),
            "both" => Ok(AnalysisMethod::Both),
            other => Err(Error::config(format!(
                "unknown method `{other}` (expected grid, mcmc or both)"
            ))),
        }
    }

    pub fn wants_grid(&self) -> bool {
        matches!(self, AnalysisMethod::Grid | AnalysisMethod::Both)
    }

    pub fn wants_mcmc(&self) -> bool {
        matches!(self, AnalysisMethod::Mcmc | AnalysisMethod::Both)
    }
}

fn default_method() -> AnalysisMethod {
    AnalysisMethod::Grid
}
fn default_chains() -> usize {
    4
}
fn default_samples() -> usize {
    1_000_000
}
fn default_burn_in() -> f64 {
    0.1
}

#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
#[serde(deny_unknown_fields)]
pub struct SamplerConfig {
    #[serde(default = "default_method")]
    pub method: AnalysisMethod,
    #[serde(default = "default_chains")]
    pub chains: usize,
    #[serde(default = "default_samples")]
    pub samples: usize,
    #[serde(default = "default_burn_in")]
    pub burn_in: f64,
}

impl Default for SamplerConfig {
    fn default() -> Self {
        SamplerConfig {
            method: default_method(),
            chains: default_chains(),
            samples: default_samples(),
            burn_in: default_burn_in(),
        }
    }
}

impl SamplerConfig {
    pub fn to_settings(&self, seed: u64) -> McmcSettings {
        McmcSettings {
            n_chains: self.chains,
            n_samples: self.samples,
            burn_in_fraction: self.burn_in,
            seed,
        }
    }
}

fn default_n_log() -> usize {
    1000
}
fn default_n_linear() -> usize {
    3000
}

#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
#[serde(deny_unknown_fields)]
pub struct GridConfig {
    #[serde(default = "default_n_log")]
    pub n_log: usize,
    #[serde(default = "default_n_linear")]
    pub n_linear: usize,
}

impl Default for GridConfig {
    fn default() -> Self {
        GridConfig {
            n_log: default_n_log(),
            n_linear: default_n_linear(),
        }
    }
}

impl GridConfig {
    pub fn to_spec(&self) -> GridSpec {
        GridSpec::with_resolution(self.n_log, self.n_linear)
    }
}

/// Full run configuration; every knob of the analysis is explicit here and
/// echoed into reports.
#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    /// Materials TOML path; the builtin five-component set when absent.
    #[serde(default)]
    pub materials: Option<PathBuf>,
    /// Measured spectrum CSV; optional because toy studies have none.
    #[serde(default)]
    pub spectrum: Option<PathBuf>,
    /// MC background CSV.
    #[serde(default)]
    pub background: Option<PathBuf>,
    #[serde(default = "default_window")]
    pub analysis_window_kev: [f64; 2],
    /// Uniform bin width used when a command has to build its own binning.
    #[serde(default = "default_bin_width")]
    pub bin_width_kev: f64,
    #[serde(default = "default_exposure")]
    pub exposure_seconds: f64,
    #[serde(default)]
    pub include_electron_term: bool,
    #[serde(default)]
    pub efficiency_systematic_fraction: f64,
    #[serde(default = "default_level")]
    pub level: f64,
    #[serde(default = "default_rk_theory")]
    pub rk_theory_upper_m: f64,
    #[serde(default)]
    pub seed: u64,
    #[serde(default = "default_output_dir")]
    pub output_dir: PathBuf,
    #[serde(default)]
    pub prior: PriorConfig,
    #[serde(default)]
    pub sampler: SamplerConfig,
    #[serde(default)]
    pub grid: GridConfig,
}

impl Default for RunConfig {
    fn default() -> Self {
        toml::from_str("").expect("empty config must deserialize from defaults")
    }
}

impl RunConfig {
    /// Loads a config file, rebasing its relative paths onto the file's
    /// directory.
    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let mut cfg: RunConfig = toml::from_str(&text)
            .map_err(|e| Error::config(format!("run config {}: {e}", path.display())))?;
        if let Some(dir) = path.parent() {
            cfg.rebase(dir);
        }
        Ok(cfg)
    }

    fn rebase(&mut self, dir: &Path) {
        for p in [&mut self.materials, &mut self.spectrum, &mut self.background]
            .into_iter()
            .flatten()
        {
            if p.is_relative() {
                *p = dir.join(&p);
            }
        }
        if self.output_dir.is_relative() {
            self.output_dir = dir.join(&self.output_dir);
        }
    }

    /// Basic consistency checks that do not require loading data files.
    pub fn validate(&self) -> Result<()> {
        let [lo, hi] = self.analysis_window_kev;
        if !(lo < hi) || !lo.is_finite() || !hi.is_finite() {
            return Err(Error::config(format!(
                "analysis_window_kev must be a non-empty finite interval, got [{lo}, {hi}]"
            )));
        }
        if !(self.bin_width_kev > 0.0) {
            return Err(Error::config(format!(
                "bin_width_kev must be > 0, got {}",
                self.bin_width_kev
            )));
        }
        if !(self.level > 0.0 && self.level < 1.0) {
            return Err(Error::config(format!(
                "level must be in (0, 1), got {}",
                self.level
            )));
        }
        if !(self.rk_theory_upper_m > 0.0) {
            return Err(Error::config(format!(
                "rk_theory_upper_m must be > 0, got {}",
                self.rk_theory_upper_m
            )));
        }
        for (path, what) in [
            (&self.materials, "materials"),
            (&self.spectrum, "spectrum"),
            (&self.background, "background"),
        ] {
            if let Some(p) = path {
                if !p.exists() {
                    return Err(Error::config(format!(
                        "{what} path {} does not exist",
                        p.display()
                    )));
                }
            }
        }
        self.prior.to_spec().map(|_| ())
    }

    /// Loads the configured materials, or the builtin set.
    pub fn resolve_materials(&self) -> Result<Vec<Material>> {
        match &self.materials {
            Some(p) => load_materials(p),
            None => default_materials(),
        }
    }

    /// Builds the signal model from materials plus the config knobs and
    /// verifies the analysis window sits inside every efficiency range.
    pub fn build_signal_model(&self, materials: Vec<Material>) -> Result<SignalModel> {
        let model = SignalModel::new(
            materials,
            self.exposure_seconds,
            self.include_electron_term,
        )?
        .with_systematic_fraction(self.efficiency_systematic_fraction)?;
        model.check_window(self.analysis_window_kev[0], self.analysis_window_kev[1])?;
        Ok(model)
    }
}

/// SHA-256 hex digest, used to fingerprint every input in reports.
pub fn sha256_hex(bytes: &[u8]) -> String {
    let mut hasher = Sha256::new();
    hasher.update(bytes);
    let digest = hasher.finalize();
    let mut out = String::with_capacity(64);
    for b in digest {
        out.push_str(&format!("{b:02x}"));
    }
    out
}

pub fn sha256_file(path: impl AsRef<Path>) -> Result<String> {
    let path = path.as_ref();
    let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
    Ok(sha256_hex(&bytes))
}
