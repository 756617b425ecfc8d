//! TOML run configuration and the model registry behind the command line.
//!
//! ```toml
//! seed = 7
//!
//! [model]
//! name = "mixture"
//! dim = 2
//! simulate = { truth = [-3.0, 0.0], observations = 100 }
//!
//! [adapt]
//! particles = 2000
//!
//! [run]
//! particles = 25
//! rho = 0.5
//! l = 100
//! replicates = 64
//!
//! [estimate]
//! k = "auto"
//! ```
//!
//! Relative data paths are resolved against the directory holding the
//! config file.

use std::fs;
use std::path::{Path, PathBuf};
use std::time::Duration;

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::adaptation::AdaptationConfig;
use crate::error::{Error, Result};
use crate::estimator::{RunSettings, Statistic};
use crate::ggm::{read_matrix_csv, GWishartParams, GgmModel};
use crate::models::{ConjugateGaussian, ConjugateKernel, ConstantLikelihood, Horseshoe, Mixture};
use crate::rng::RngStream;

pub const DATA_LABEL: u64 = u64::MAX - 20;
pub const ADAPT_LABEL: u64 = u64::MAX - 21;
pub const SYNTH_LABEL: u64 = u64::MAX - 22;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    #[serde(default)]
    pub seed: u64,
    pub model: ModelConfig,
    #[serde(default)]
    pub adapt: AdaptationConfig,
    #[serde(default)]
    pub run: RunSection,
    #[serde(default)]
    pub estimate: EstimateSection,
    #[serde(default)]
    pub output: OutputSection,
    #[serde(default)]
    pub synth_ggm: SynthSection,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "name", rename_all = "snake_case", deny_unknown_fields)]
pub enum ModelConfig {
    Mixture {
        dim: usize,
        /// One-column CSV of observations.
        data: Option<PathBuf>,
        simulate: Option<MixtureSimulation>,
        #[serde(default)]
        step: Option<f64>,
    },
    Horseshoe {
        /// CSV with the response in the first column and the design after it.
        data: Option<PathBuf>,
        /// Use the built-in simulation design instead of a data file.
        #[serde(default)]
        simulate: bool,
        target: Option<usize>,
    },
    Ggm {
        /// `n x p` CSV of observations.
        data: PathBuf,
        #[serde(default = "default_delta")]
        delta: f64,
        /// Prior rate matrix `D`; identity when absent.
        rate: Option<Vec<Vec<f64>>>,
    },
    Conjugate {
        /// Rows are observations.
        data: Vec<Vec<f64>>,
        #[serde(default)]
        prior_mean: f64,
        #[serde(default = "one")]
        prior_var: f64,
        #[serde(default = "one")]
        noise_var: f64,
        #[serde(default)]
        kernel: ConjugateKernel,
        #[serde(default = "one")]
        step: f64,
    },
    Constant {
        log_value: f64,
        #[serde(default = "one_usize")]
        dim: usize,
    },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MixtureSimulation {
    pub truth: Vec<f64>,
    pub observations: usize,
}

fn default_delta() -> f64 {
    3.0
}

fn one() -> f64 {
    1.0
}

fn one_usize() -> usize {
    1
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunSection {
    pub particles: usize,
    pub rho: f64,
    /// Minimum number of outer steps.
    pub l: usize,
    pub gamma: f64,
    pub replicates: usize,
    /// Wall-clock limit for each replicate.
    pub time_budget_seconds: Option<f64>,
}

impl Default for RunSection {
    fn default() -> Self {
        let s = RunSettings::default();
        Self {
            particles: s.particles,
            rho: s.rho,
            l: s.min_steps,
            gamma: s.gamma,
            replicates: 16,
            time_budget_seconds: None,
        }
    }
}

impl RunSection {
    pub fn settings(&self) -> Result<RunSettings> {
        let time_budget = match self.time_budget_seconds {
            None => None,
            Some(t) if t > 0.0 && t.is_finite() => Some(Duration::from_secs_f64(t)),
            Some(t) => return Err(Error::Config(format!("time_budget_seconds = {t} must be positive"))),
        };
        let s = RunSettings {
            particles: self.particles,
            rho: self.rho,
            min_steps: self.l,
            gamma: self.gamma,
            time_budget,
        };
        s.validate().map_err(|e| Error::Config(e.to_string()))?;
        if self.replicates == 0 {
            return Err(Error::Config("replicates must be at least 1".into()));
        }
        Ok(s)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum KChoice {
    Fixed(usize),
    Named(AutoK),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum AutoK {
    Auto,
}

impl Default for KChoice {
    fn default() -> Self {
        KChoice::Named(AutoK::Auto)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EstimateSection {
    pub k: KChoice,
    /// Defaults to `run.l`.
    pub l: Option<usize>,
    pub statistic: Statistic,
    pub confidence: f64,
    /// Values of `l` for the variance-time table; a doubling grid from `k`
    /// when empty.
    pub l_grid: Vec<usize>,
}

impl Default for EstimateSection {
    fn default() -> Self {
        Self {
            k: KChoice::default(),
            l: None,
            statistic: Statistic::RaoBlackwell,
            confidence: 0.95,
            l_grid: Vec::new(),
        }
    }
}

/// File names inside the output directory.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct OutputSection {
    pub dir: PathBuf,
    pub schedule: String,
    pub runs: String,
    pub report: String,
    pub variance_time: String,
    pub edges: String,
    pub diagnostics: String,
}

impl Default for OutputSection {
    fn default() -> Self {
        Self {
            dir: PathBuf::from("."),
            schedule: "schedule.json".into(),
            runs: "runs.jsonl".into(),
            report: "report.json".into(),
            variance_time: "variance_time.csv".into(),
            edges: "edges.csv".into(),
            diagnostics: "diagnostics.json".into(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SynthSection {
    pub p: usize,
    pub n: usize,
    pub density: f64,
    pub data: String,
    pub truth: String,
}

impl Default for SynthSection {
    fn default() -> Self {
        Self {
            p: 5,
            n: 50,
            density: 0.3,
            data: "ggm_data.csv".into(),
            truth: "ggm_truth.json".into(),
        }
    }
}

/// A parsed config plus the directory its relative paths refer to.
#[derive(Debug, Clone)]
pub struct LoadedConfig {
    pub config: RunConfig,
    pub base: PathBuf,
}

impl RunConfig {
    pub fn parse(text: &str) -> Result<Self> {
        let cfg: RunConfig = toml::from_str(text).map_err(|e| Error::Config(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<LoadedConfig> {
        let text =
            fs::read_to_string(path).map_err(|e| Error::Config(format!("cannot read {}: {e}", path.display())))?;
        let config = Self::parse(&text).map_err(|e| match e {
            Error::Config(msg) => Error::Config(format!("{}: {msg}", path.display())),
            other => other,
        })?;
        let base = path.parent().map(Path::to_path_buf).unwrap_or_default();
        Ok(LoadedConfig { config, base })
    }

    pub fn validate(&self) -> Result<()> {
        self.adapt.validate().map_err(|e| Error::Config(e.to_string()))?;
        self.run.settings()?;
        if !(self.estimate.confidence > 0.0 && self.estimate.confidence < 1.0) {
            return Err(Error::Config("estimate.confidence must lie in (0, 1)".into()));
        }
        if self.estimate.k == KChoice::Fixed(0) {
            return Err(Error::Config("estimate.k must be at least 1".into()));
        }
        Ok(())
    }

    pub fn model_name(&self) -> &'static str {
        match self.model {
            ModelConfig::Mixture { .. } => "mixture",
            ModelConfig::Horseshoe { .. } => "horseshoe",
            ModelConfig::Ggm { .. } => "ggm",
            ModelConfig::Conjugate { .. } => "conjugate",
            ModelConfig::Constant { .. } => "constant",
        }
    }
}

/// Every registered model, ready to run.
#[derive(Debug, Clone)]
pub enum LoadedModel {
    Mixture(Mixture),
    Horseshoe(Horseshoe),
    Ggm(GgmModel),
    Conjugate(ConjugateGaussian),
    Constant(ConstantLikelihood),
}

/// Runs `$body` with `$m` bound to the concrete model inside a `LoadedModel`.
#[macro_export]
macro_rules! with_model {
    ($loaded:expr, $m:ident => $body:expr) => {
        match $loaded {
            $crate::config::LoadedModel::Mixture($m) => $body,
            $crate::config::LoadedModel::Horseshoe($m) => $body,
            $crate::config::LoadedModel::Ggm($m) => $body,
            $crate::config::LoadedModel::Conjugate($m) => $body,
            $crate::config::LoadedModel::Constant($m) => $body,
        }
    };
}

fn resolve(base: &Path, path: &Path) -> PathBuf {
    if path.is_absolute() {
        path.to_path_buf()
    } else {
        base.join(path)
    }
}

fn read_csv(base: &Path, path: &Path) -> Result<DMatrix<f64>> {
    let full = resolve(base, path);
    let file = fs::File::open(&full).map_err(|e| Error::Config(format!("cannot open {}: {e}", full.display())))?;
    read_matrix_csv(file).map_err(|e| Error::Config(format!("{}: {e}", full.display())))
}

impl LoadedConfig {
    /// Builds the model, simulating data from the config seed where asked.
    pub fn model(&self) -> Result<LoadedModel> {
        let data_stream = RngStream::new(self.config.seed).child(DATA_LABEL);
        let config_err = |e: Error| match e {
            Error::Config(m) => Error::Config(m),
            other => Error::Config(other.to_string()),
        };
        Ok(match &self.config.model {
            ModelConfig::Mixture {
                dim,
                data,
                simulate,
                step,
            } => {
                let ys = match (data, simulate) {
                    (Some(path), None) => {
                        let m = read_csv(&self.base, path)?;
                        if m.ncols() != 1 {
                            return Err(Error::Config("mixture data must have one column".into()));
                        }
                        m.column(0).iter().copied().collect()
                    }
                    (None, Some(sim)) => {
                        if sim.truth.len() != *dim {
                            return Err(Error::Config("simulate.truth must have `dim` entries".into()));
                        }
                        Mixture::simulate(&sim.truth, sim.observations, &mut data_stream.rng())
                    }
                    _ => {
                        return Err(Error::Config(
                            "mixture needs exactly one of `data` or `simulate`".into(),
                        ))
                    }
                };
                let mut m = Mixture::new(*dim, ys).map_err(config_err)?;
                if let Some(step) = step {
                    m.step = *step;
                    m.validate()?;
                }
                LoadedModel::Mixture(m)
            }
            ModelConfig::Horseshoe { data, simulate, target } => {
                let (y, w) = match (data, simulate) {
                    (Some(path), false) => {
                        let m = read_csv(&self.base, path)?;
                        if m.ncols() < 2 {
                            return Err(Error::Config("horseshoe data needs a response and a design".into()));
                        }
                        (m.column(0).into_owned(), m.columns(1, m.ncols() - 1).into_owned())
                    }
                    (None, true) => Horseshoe::simulate(&mut data_stream.rng()),
                    _ => {
                        return Err(Error::Config(
                            "horseshoe needs either `data` or `simulate = true`".into(),
                        ))
                    }
                };
                let mut h = Horseshoe::new(DVector::from(y), w).map_err(config_err)?;
                if let Some(t) = target {
                    if *t >= h.p() {
                        return Err(Error::Config(format!("target {t} outside 0..{}", h.p())));
                    }
                    h.target = *t;
                }
                LoadedModel::Horseshoe(h)
            }
            ModelConfig::Ggm { data, delta, rate } => {
                let y = read_csv(&self.base, data)?;
                let p = y.ncols();
                let params = match rate {
                    None => GWishartParams::identity(p, *delta),
                    Some(rows) => {
                        if rows.len() != p || rows.iter().any(|r| r.len() != p) {
                            return Err(Error::Config(format!("rate must be {p} x {p}")));
                        }
                        GWishartParams::new(*delta, DMatrix::from_fn(p, p, |i, j| rows[i][j]))
                    }
                }
                .map_err(config_err)?;
                LoadedModel::Ggm(GgmModel::new(&y, params).map_err(config_err)?)
            }
            ModelConfig::Conjugate {
                data,
                prior_mean,
                prior_var,
                noise_var,
                kernel,
                step,
            } => LoadedModel::Conjugate(
                ConjugateGaussian::new(data.clone(), *prior_mean, *prior_var, *noise_var)
                    .map_err(config_err)?
                    .with_kernel(*kernel, *step),
            ),
            ModelConfig::Constant { log_value, dim } => {
                if !log_value.is_finite() || *dim == 0 {
                    return Err(Error::Config(
                        "constant model needs a finite log_value and dim >= 1".into(),
                    ));
                }
                LoadedModel::Constant(ConstantLikelihood {
                    log_value: *log_value,
                    dim: *dim,
                })
            }
        })
    }

    pub fn output_dir(&self) -> PathBuf {
        resolve(&self.base, &self.config.output.dir)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn minimal_config_uses_defaults() {
        let cfg = RunConfig::parse("[model]\nname = \"constant\"\nlog_value = -1.5\n").unwrap();
        assert_eq!(cfg.seed, 0);
        assert_eq!(cfg.run, RunSection::default());
        assert_eq!(cfg.estimate.k, KChoice::Named(AutoK::Auto));
        assert_eq!(cfg.model_name(), "constant");
    }

    #[test]
    fn k_accepts_number_or_auto() {
        let fixed = "[model]\nname = \"constant\"\nlog_value = 0.0\n[estimate]\nk = 5\n";
        assert_eq!(RunConfig::parse(fixed).unwrap().estimate.k, KChoice::Fixed(5));
        let zero = fixed.replace("k = 5", "k = 0");
        assert!(RunConfig::parse(&zero).is_err());
        let bad = fixed.replace("k = 5", "k = \"sometimes\"");
        assert!(RunConfig::parse(&bad).is_err());
    }

    #[test]
    fn parse_errors_carry_line_numbers() {
        let text = "seed = 1\n[model]\nname = \"constant\"\nlog_value = -1\n[run]\nrho = \"high\"\n";
        let msg = RunConfig::parse(text).unwrap_err().to_string();
        assert!(msg.contains("line 6"), "{msg}");
        let unknown = "[model]\nname = \"constant\"\nlog_value = 0.0\n[run]\nparticle = 3\n";
        assert!(RunConfig::parse(unknown).is_err());
        let bad_rho = "[model]\nname = \"constant\"\nlog_value = 0.0\n[run]\nrho = 1.5\n";
        assert!(matches!(RunConfig::parse(bad_rho), Err(Error::Config(_))));
    }

    #[test]
    fn simulated_mixture_is_reproducible() {
        let text =
            "seed = 3\n[model]\nname = \"mixture\"\ndim = 2\nsimulate = { truth = [-3.0, 0.0], observations = 100 }\n";
        let loaded = LoadedConfig {
            config: RunConfig::parse(text).unwrap(),
            base: PathBuf::new(),
        };
        let (LoadedModel::Mixture(a), LoadedModel::Mixture(b)) = (loaded.model().unwrap(), loaded.model().unwrap())
        else {
            panic!("wrong model");
        };
        assert_eq!(a.data.len(), 100);
        assert_eq!(a, b);
    }

    #[test]
    fn data_paths_resolve_against_the_config_directory() {
        let dir = tempfile::tempdir().unwrap();
        fs::write(dir.path().join("y.csv"), "0.5\n-1.0\n2.0\n").unwrap();
        let cfg_path = dir.path().join("run.toml");
        fs::write(&cfg_path, "[model]\nname = \"mixture\"\ndim = 1\ndata = \"y.csv\"\n").unwrap();
        let loaded = RunConfig::load(&cfg_path).unwrap();
        let LoadedModel::Mixture(m) = loaded.model().unwrap() else {
            panic!("wrong model");
        };
        assert_eq!(m.data, vec![0.5, -1.0, 2.0]);
        fs::write(
            &cfg_path,
            "[model]\nname = \"mixture\"\ndim = 1\ndata = \"missing.csv\"\n",
        )
        .unwrap();
        assert!(matches!(
            RunConfig::load(&cfg_path).unwrap().model(),
            Err(Error::Config(_))
        ));
    }
}
