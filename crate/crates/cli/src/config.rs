//! Run configuration: a sectioned TOML document, `--section.key=value`
//! overrides, and a canonical hash.
//!
//! Unknown keys are rejected by name. The hash is computed from the resolved
//! configuration (serialized with fixed field order), so it is stable under
//! reordering of keys in the source file.

use crate::{CliError, CliResult};
use dcreg_core::icnn::Activation;
use dcreg_core::train::{Optim, PenaltyAt, TrainConfig};
use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, Serialize, Deserialize, Default)]
#[serde(deny_unknown_fields, default)]
pub struct RunConfig {
    pub problem: ProblemCfg,
    pub regularizer: RegCfg,
    pub train: TrainSection,
    pub solver: SolverSection,
    pub stargeom: StargeomSection,
    pub ablate: AblateSection,
    pub output: OutputSection,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ProblemCfg {
    /// "spiral" or "ct"
    pub kind: String,
    pub image_size: usize,
    pub num_angles: usize,
    /// 0 selects rays covering the image diagonal at unit spacing.
    pub rays_per_angle: usize,
    pub missing_wedge_deg: f64,
    /// Noise std as a fraction of the mean |sinogram| value (ct).
    pub noise_rel: f64,
    pub spiral_count: usize,
    pub spiral_sigma: f64,
    pub data_seed: u64,
    pub num_train: usize,
    pub num_val: usize,
    pub num_test: usize,
    pub ridge: f64,
    /// Training/init seeds for the spiral study (one run per seed and class).
    pub study_seeds: Vec<u64>,
}

impl Default for ProblemCfg {
    fn default() -> Self {
        ProblemCfg {
            kind: "ct".into(),
            image_size: 32,
            num_angles: 30,
            rays_per_angle: 0,
            missing_wedge_deg: 0.0,
            noise_rel: 0.01,
            spiral_count: 1000,
            spiral_sigma: 1.0,
            data_seed: 1000,
            num_train: 60,
            num_val: 4,
            num_test: 10,
            ridge: 1e-4,
            study_seeds: vec![1, 2, 3],
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct RegCfg {
    /// "dc", "convex" or "weakly-convex"
    pub mode: String,
    pub width: usize,
    pub depth: usize,
    /// "relu", "leaky-relu" or "softplus"
    pub activation: String,
    pub leaky_slope: f64,
    pub softplus_beta: f64,
    /// Curvature of the fixed quadratic in weakly-convex mode.
    pub rho: f64,
    pub init_seed: u64,
}

impl Default for RegCfg {
    fn default() -> Self {
        RegCfg {
            mode: "dc".into(),
            width: 32,
            depth: 4,
            activation: "leaky-relu".into(),
            leaky_slope: 0.2,
            softplus_beta: 1.0,
            rho: 0.3,
            init_seed: 3,
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct TrainSection {
    pub lambda_gp: f64,
    pub lr: f64,
    pub batch_size: usize,
    pub epochs: usize,
    pub seed: u64,
    /// "adam" or "sgd"
    pub optimizer: String,
    pub adam_beta1: f64,
    pub adam_beta2: f64,
    pub adam_eps: f64,
    /// "interpolate", "clean" or "noisy"
    pub penalty_at: String,
    pub holdout_frac: f64,
    pub val_every: usize,
    /// Select the checkpoint by validation PSNR (ct only).
    pub use_val: bool,
}

impl Default for TrainSection {
    fn default() -> Self {
        TrainSection {
            lambda_gp: 10.0,
            lr: 5e-5,
            batch_size: 16,
            epochs: 30,
            seed: 5,
            optimizer: "adam".into(),
            adam_beta1: 0.9,
            adam_beta2: 0.999,
            adam_eps: 1e-8,
            penalty_at: "interpolate".into(),
            holdout_frac: 0.1,
            val_every: 1,
            use_val: true,
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SolverSection {
    /// "gd", "dca" or "psm"
    pub algorithm: String,
    pub outer_iters: usize,
    /// Inner steps of the DCA surrogate.
    pub inner_iters: usize,
    /// Inner steps of the network prox (psm).
    pub psm_inner: usize,
    /// "auto" or a number.
    pub alpha: String,
    /// "auto" or a number.
    pub mu: String,
    pub exact_inner: bool,
    /// Smoothness stand-in for kinked activations.
    pub l_const: f64,
    /// 0 disables early stopping.
    pub early_stop_rel: f64,
    /// "pinv" or "zeros"
    pub x0: String,
    /// Which held-out case cmd-solve reconstructs.
    pub test_index: usize,
    /// Path to a trained checkpoint (required by solve, optional for bench).
    pub checkpoint: String,
}

impl Default for SolverSection {
    fn default() -> Self {
        SolverSection {
            algorithm: "psm".into(),
            outer_iters: 120,
            inner_iters: 6,
            psm_inner: 1,
            alpha: "auto".into(),
            mu: "auto".into(),
            exact_inner: false,
            l_const: 1.0,
            early_stop_rel: 0.0,
            x0: "pinv".into(),
            test_index: 0,
            checkpoint: String::new(),
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct StargeomSection {
    /// "demo" runs the box-vs-scaled-lp construction, the optimal-body
    /// build and a mixed-volume sweep.
    pub op: String,
    pub grid_m: usize,
    pub alpha: f64,
    pub clean_std: f64,
    pub noisy_std: f64,
    pub contour_res: usize,
    pub lutwak_pairs: usize,
    pub seed: u64,
}

impl Default for StargeomSection {
    fn default() -> Self {
        StargeomSection {
            op: "demo".into(),
            grid_m: 4096,
            alpha: 1.0,
            clean_std: 1.0,
            noisy_std: 0.5,
            contour_res: 121,
            lutwak_pairs: 100,
            seed: 29,
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct AblateSection {
    /// "dca-inner" or "psm-gamma-factor"
    pub axis: String,
    pub values: Vec<f64>,
}

impl Default for AblateSection {
    fn default() -> Self {
        AblateSection {
            axis: "dca-inner".into(),
            values: Vec::new(),
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct OutputSection {
    pub dir: String,
    /// "zero" keeps traces bit-reproducible; "real" records wall time.
    pub timing: String,
    pub write_images: bool,
    pub grid_export: bool,
    pub grid_res: usize,
}

impl Default for OutputSection {
    fn default() -> Self {
        OutputSection {
            dir: "run".into(),
            timing: "zero".into(),
            write_images: true,
            grid_export: false,
            grid_res: 101,
        }
    }
}

impl RunConfig {
    pub fn from_toml(text: &str) -> CliResult<Self> {
        toml::from_str(text).map_err(|e| CliError::config(format!("config error: {e}")))
    }

    /// Parses, then applies `--section.key=value` overrides.
    pub fn load(text: &str, overrides: &[(String, String)]) -> CliResult<Self> {
        let mut table: toml::Table =
            toml::from_str(text).map_err(|e| CliError::config(format!("config error: {e}")))?;
        for (path, value) in overrides {
            apply_override(&mut table, path, value)?;
        }
        let text = toml::to_string(&table)
            .map_err(|e| CliError::config(format!("config re-serialization failed: {e}")))?;
        RunConfig::from_toml(&text)
    }

    /// FNV-1a hash of the canonical serialization.
    pub fn hash(&self) -> String {
        let text = toml::to_string(self).expect("config always serializes");
        format!("{:016x}", fnv1a(text.as_bytes()))
    }

    pub fn to_toml(&self) -> String {
        toml::to_string_pretty(self).expect("config always serializes")
    }

    pub fn activation(&self) -> CliResult<Activation> {
        match self.regularizer.activation.as_str() {
            "relu" => Ok(Activation::Relu),
            "leaky-relu" => Ok(Activation::LeakyRelu {
                slope: self.regularizer.leaky_slope,
            }),
            "softplus" => Ok(Activation::Softplus {
                beta: self.regularizer.softplus_beta,
            }),
            other => Err(CliError::config(format!(
                "unknown activation `{other}` (expected relu, leaky-relu or softplus)"
            ))),
        }
    }

    pub fn train_config(&self) -> CliResult<TrainConfig> {
        let t = &self.train;
        let optim = match t.optimizer.as_str() {
            "adam" => Optim::Adam {
                beta1: t.adam_beta1,
                beta2: t.adam_beta2,
                eps: t.adam_eps,
            },
            "sgd" => Optim::Sgd,
            other => {
                return Err(CliError::config(format!(
                    "unknown optimizer `{other}` (expected adam or sgd)"
                )))
            }
        };
        let penalty_at = match t.penalty_at.as_str() {
            "interpolate" => PenaltyAt::Interpolate,
            "clean" => PenaltyAt::Clean,
            "noisy" => PenaltyAt::Noisy,
            other => {
                return Err(CliError::config(format!(
                    "unknown penalty sampling `{other}` (expected interpolate, clean or noisy)"
                )))
            }
        };
        let mut cfg = TrainConfig::new(t.lambda_gp, t.lr, t.batch_size, t.epochs, t.seed);
        cfg.optim = optim;
        cfg.penalty_at = penalty_at;
        cfg.holdout_frac = t.holdout_frac;
        cfg.val_every = t.val_every.max(1);
        Ok(cfg)
    }

    /// "auto" -> None, otherwise the parsed number.
    pub fn parse_auto(field: &str, what: &str) -> CliResult<Option<f64>> {
        if field == "auto" {
            return Ok(None);
        }
        field
            .parse::<f64>()
            .map(Some)
            .map_err(|_| CliError::config(format!("{what} must be `auto` or a number, got `{field}`")))
    }
}

fn apply_override(table: &mut toml::Table, path: &str, value: &str) -> CliResult<()> {
    let Some((section, key)) = path.split_once('.') else {
        return Err(CliError::config(format!(
            "override `{path}` must look like section.key"
        )));
    };
    let parsed: toml::Value = if let Ok(b) = value.parse::<bool>() {
        toml::Value::Boolean(b)
    } else if let Ok(i) = value.parse::<i64>() {
        toml::Value::Integer(i)
    } else if let Ok(f) = value.parse::<f64>() {
        toml::Value::Float(f)
    } else if value.starts_with('[') {
        // array literal, e.g. --ablate.values=[1,2,3]
        let doc = format!("v = {value}");
        let t: toml::Table = toml::from_str(&doc)
            .map_err(|e| CliError::config(format!("override `{path}`: bad array: {e}")))?;
        t["v"].clone()
    } else {
        toml::Value::String(value.to_string())
    };
    let entry = table
        .entry(section.to_string())
        .or_insert_with(|| toml::Value::Table(toml::Table::new()));
    let Some(sec) = entry.as_table_mut() else {
        return Err(CliError::config(format!("`{section}` is not a section")));
    };
    sec.insert(key.to_string(), parsed);
    Ok(())
}

pub fn fnv1a(bytes: &[u8]) -> u64 {
    let mut h: u64 = 0xcbf2_9ce4_8422_2325;
    for b in bytes {
        h ^= *b as u64;
        h = h.wrapping_mul(0x0000_0100_0000_01b3);
    }
    h
}
