//! JSON experiment configuration. Unknown keys are rejected and every
//! random choice (mask selection, noise) takes an explicit seed so runs are
//! reproducible byte for byte.

use std::path::{Path, PathBuf};

use anyhow::{bail, Context};
use serde::Deserialize;

use recover_core::solver::HyperParams;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Space {
    /// 1D signals on the periodic grid.
    Signal,
    /// 2D images on the periodic pixel grid.
    Image,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RecoveryMode {
    /// One independent solve per measurement.
    Separate,
    /// All measurements share one hyperparameter vector.
    Joint,
}

impl RecoveryMode {
    pub fn as_str(self) -> &'static str {
        match self {
            RecoveryMode::Separate => "separate",
            RecoveryMode::Joint => "joint",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ModelKindSpec {
    Identity,
    Blur,
    Subsample,
    PartialFourier,
}

/// Forward-model description of one measurement. Which parameters are
/// required depends on `kind`: `blur` takes `gamma`, the subsampled kinds
/// take `ratio` and `mask_seed`.
#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ModelSpec {
    pub kind: ModelKindSpec,
    #[serde(default)]
    pub gamma: Option<f64>,
    #[serde(default)]
    pub ratio: Option<f64>,
    #[serde(default)]
    pub mask_seed: Option<u64>,
}

impl ModelSpec {
    fn validate(&self, context: &str) -> anyhow::Result<()> {
        let forbid = |name: &str, present: bool| {
            if present {
                bail!("{context}: `{name}` does not apply to this model kind");
            }
            Ok(())
        };
        match self.kind {
            ModelKindSpec::Identity => {
                forbid("gamma", self.gamma.is_some())?;
                forbid("ratio", self.ratio.is_some())?;
                forbid("mask_seed", self.mask_seed.is_some())?;
            }
            ModelKindSpec::Blur => {
                if self.gamma.is_none() {
                    bail!("{context}: blur models need `gamma`");
                }
                forbid("ratio", self.ratio.is_some())?;
                forbid("mask_seed", self.mask_seed.is_some())?;
            }
            ModelKindSpec::Subsample | ModelKindSpec::PartialFourier => {
                forbid("gamma", self.gamma.is_some())?;
                if self.ratio.is_none() {
                    bail!("{context}: subsampled models need `ratio`");
                }
                if self.mask_seed.is_none() {
                    bail!("{context}: subsampled models need an explicit `mask_seed`");
                }
            }
        }
        Ok(())
    }
}

/// A user-supplied grayscale image (binary PGM), optionally center-cropped
/// to square before the block-average rescale to the configured `n`.
#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ImageSource {
    pub path: PathBuf,
    #[serde(default)]
    pub crop: bool,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MeasurementSpec {
    /// Bundled signal or image id (`f1`..`f6`, `mixed1`..`mixed3`,
    /// `h1`..`h3`).
    #[serde(default)]
    pub signal: Option<String>,
    /// Alternative to `signal` for image experiments.
    #[serde(default)]
    pub image: Option<ImageSource>,
    pub model: ModelSpec,
    pub snr_db: f64,
    pub noise_seed: u64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PriorKind {
    Local,
    Residual,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PriorSpec {
    pub kind: PriorKind,
    #[serde(default)]
    pub p: usize,
    /// In-cell shift of the global detector; defaults to 1/4.
    #[serde(default = "default_zeta")]
    pub zeta: f64,
    /// Per-prior override of the hyperprior rate.
    #[serde(default)]
    pub vartheta: Option<f64>,
}

fn default_zeta() -> f64 {
    0.25
}

impl PriorSpec {
    pub fn name(&self) -> String {
        let base = match self.kind {
            PriorKind::Local => "local",
            PriorKind::Residual => "residual",
        };
        if self.p == 0 {
            base.to_string()
        } else {
            format!("{base}_p{}", self.p)
        }
    }
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct HyperSpec {
    #[serde(default = "default_beta")]
    pub beta: f64,
    #[serde(default = "default_vartheta")]
    pub vartheta: f64,
    #[serde(default = "default_max_outer_iters")]
    pub max_outer_iters: usize,
    #[serde(default = "default_x_tol")]
    pub x_tol: f64,
    #[serde(default = "default_cg_tol")]
    pub cg_tol: f64,
    #[serde(default = "default_cg_max_iters")]
    pub cg_max_iters: usize,
}

fn default_beta() -> f64 {
    1.0
}
fn default_vartheta() -> f64 {
    1e-4
}
fn default_max_outer_iters() -> usize {
    100
}
fn default_x_tol() -> f64 {
    1e-6
}
fn default_cg_tol() -> f64 {
    1e-8
}
fn default_cg_max_iters() -> usize {
    2000
}

impl Default for HyperSpec {
    fn default() -> Self {
        Self {
            beta: default_beta(),
            vartheta: default_vartheta(),
            max_outer_iters: default_max_outer_iters(),
            x_tol: default_x_tol(),
            cg_tol: default_cg_tol(),
            cg_max_iters: default_cg_max_iters(),
        }
    }
}

impl HyperSpec {
    pub fn to_hyper_params(&self) -> HyperParams {
        HyperParams {
            beta: self.beta,
            vartheta: self.vartheta,
            max_outer_iters: self.max_outer_iters,
            x_tol: self.x_tol,
            cg_tol: self.cg_tol,
            cg_max_iters: self.cg_max_iters,
        }
    }
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct UqSpec {
    #[serde(default)]
    pub enabled: bool,
    #[serde(default = "default_level")]
    pub level: f64,
    /// Number of posterior samples to write alongside the analytic band.
    #[serde(default)]
    pub samples: usize,
    #[serde(default = "default_uq_seed")]
    pub sample_seed: u64,
}

fn default_level() -> f64 {
    0.99
}
fn default_uq_seed() -> u64 {
    0
}

impl Default for UqSpec {
    fn default() -> Self {
        Self { enabled: false, level: default_level(), samples: 0, sample_seed: 0 }
    }
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub space: Space,
    /// Grid size (per axis for images).
    pub n: usize,
    pub mode: RecoveryMode,
    pub measurements: Vec<MeasurementSpec>,
    pub priors: Vec<PriorSpec>,
    #[serde(default)]
    pub hyper: HyperSpec,
    #[serde(default)]
    pub uq: UqSpec,
    /// Write the dense 1D matrix of each configured prior transform.
    #[serde(default)]
    pub dump_transforms: bool,
}

impl ExperimentConfig {
    pub fn from_path(path: &Path) -> anyhow::Result<Self> {
        let text = std::fs::read_to_string(path)
            .with_context(|| format!("reading config {}", path.display()))?;
        let cfg: Self = serde_json::from_str(&text)
            .with_context(|| format!("parsing config {}", path.display()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> anyhow::Result<()> {
        if self.measurements.is_empty() {
            bail!("config needs at least one measurement");
        }
        if self.priors.is_empty() {
            bail!("config needs at least one prior");
        }
        for (i, m) in self.measurements.iter().enumerate() {
            match (&m.signal, &m.image) {
                (Some(_), Some(_)) => bail!("measurement {i}: give either `signal` or `image`, not both"),
                (None, None) => bail!("measurement {i}: one of `signal` or `image` is required"),
                (None, Some(_)) if self.space == Space::Signal => {
                    bail!("measurement {i}: image sources need \"space\": \"image\"")
                }
                _ => {}
            }
            m.model.validate(&format!("measurement {i}"))?;
        }
        for p in &self.priors {
            if !(0.0..1.0).contains(&p.zeta) {
                bail!("prior {}: zeta must lie in [0, 1)", p.name());
            }
        }
        Ok(())
    }
}
