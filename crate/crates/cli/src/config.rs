use std::path::{Path, PathBuf};

use neural_retarget::autodiff::Activation;
use neural_retarget::dataio::{DatasetOptions, HumanSkeleton};
use neural_retarget::gradsuite::SuiteOptions;
use neural_retarget::graphnet::{Architecture, NetConfig};
use neural_retarget::objective::ObjectiveWeights;
use neural_retarget::retarget::{Init, LatentOptions, Mode, TrainOptions};
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::CliError;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    pub seed: u64,
    /// Worker threads for per-motion work; never changes results.
    pub jobs: usize,
    /// Bundled model name or path to a `.robot` file.
    pub robot: String,
    pub out: PathBuf,
    pub checkpoint: Option<PathBuf>,
    pub data: DataConfig,
    pub weights: ObjectiveWeights,
    pub net: NetConfig,
    pub train: TrainOptions,
    pub latent: LatentOptions,
    pub infer: InferConfig,
    pub ablate: AblateConfig,
    pub gradcheck: SuiteOptions,
}

impl Default for RunConfig {
    fn default() -> Self {
        RunConfig {
            seed: 0,
            jobs: 1,
            robot: "arm7x2_hand".into(),
            out: PathBuf::from("nretarget-out"),
            checkpoint: None,
            data: DataConfig::default(),
            weights: ObjectiveWeights::default(),
            net: NetConfig::default(),
            train: TrainOptions::default(),
            latent: LatentOptions::default(),
            infer: InferConfig::default(),
            ablate: AblateConfig::default(),
            gradcheck: SuiteOptions::default(),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DataConfig {
    /// Directory with `train/` and `test/` subdirectories of `.demo` files;
    /// synthesized from `synth` when absent.
    pub dir: Option<PathBuf>,
    pub synth: DatasetOptions,
    pub skeleton: HumanSkeleton,
    /// Keep every `k`-th frame of training sequences.
    pub train_stride: usize,
    /// Keep every `k`-th frame of test sequences (the sequence step grows
    /// accordingly).
    pub test_stride: usize,
    /// Use only the first `n` test sequences.
    pub max_test: Option<usize>,
}

impl Default for DataConfig {
    fn default() -> Self {
        DataConfig {
            dir: None,
            synth: DatasetOptions::default(),
            skeleton: HumanSkeleton::default(),
            train_stride: 1,
            test_stride: 1,
            max_test: None,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum InitKind {
    Neural,
    Gaussian,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct InferConfig {
    pub mode: Mode,
    pub init: InitKind,
    pub init_mean: f64,
    pub init_std: f64,
    pub warm_start: bool,
}

impl Default for InferConfig {
    fn default() -> Self {
        InferConfig {
            mode: Mode::LatentOpt,
            init: InitKind::Neural,
            init_mean: 0.0,
            init_std: 1.0,
            warm_start: false,
        }
    }
}

impl InferConfig {
    pub fn init(&self) -> Init {
        match self.init {
            InitKind::Neural => Init::Neural,
            InitKind::Gaussian => Init::Gaussian {
                mean: self.init_mean,
                std: self.init_std,
            },
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct AblateConfig {
    pub archs: Vec<Architecture>,
    pub activations: Vec<Activation>,
    pub modes: Vec<Mode>,
}

impl Default for AblateConfig {
    fn default() -> Self {
        AblateConfig {
            archs: vec![Architecture::Graph],
            activations: Activation::ALL.to_vec(),
            modes: vec![Mode::Feedforward, Mode::LatentOpt],
        }
    }
}

impl RunConfig {
    /// Defaults, then the file, then each `key.path=value` override. Values
    /// parse as TOML and fall back to plain strings.
    pub fn resolve(file: Option<&Path>, overrides: &[(String, toml::Value)]) -> Result<RunConfig, CliError> {
        let mut table = match file {
            Some(p) => {
                let src = std::fs::read_to_string(p).map_err(|e| CliError::io(format!("{}: {e}", p.display())))?;
                src.parse::<toml::Table>()
                    .map_err(|e| CliError::config(format!("{}: {e}", p.display())))?
            }
            None => toml::Table::new(),
        };
        for (key, value) in overrides {
            set_path(&mut table, key, value.clone())?;
        }
        let cfg: RunConfig = toml::Value::Table(table)
            .try_into()
            .map_err(|e: toml::de::Error| CliError::config(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<(), CliError> {
        let field = |f: &str, e: neural_retarget::Error| CliError::config(format!("{f}: {e}"));
        self.weights.validate().map_err(|e| field("weights", e))?;
        self.net.validate().map_err(|e| field("net", e))?;
        self.train.validate().map_err(|e| field("train", e))?;
        self.latent.validate().map_err(|e| field("latent", e))?;
        if self.jobs == 0 {
            return Err(CliError::config("jobs: must be at least 1"));
        }
        if self.data.train_stride == 0 || self.data.test_stride == 0 {
            return Err(CliError::config("data.train_stride, data.test_stride: must be at least 1"));
        }
        if !(self.infer.init_std >= 0.0 && self.infer.init_std.is_finite()) {
            return Err(CliError::config("infer.init_std: must be finite and non-negative"));
        }
        if self.gradcheck.configs == 0 || self.gradcheck.coords == 0 {
            return Err(CliError::config("gradcheck.configs, gradcheck.coords: must be positive"));
        }
        Ok(())
    }

    /// Hash of every setting that can change outputs.
    pub fn hash(&self) -> String {
        let mut c = self.clone();
        c.out = PathBuf::new();
        c.jobs = 1;
        let text = toml::to_string(&c).expect("config serializes");
        hex::encode(Sha256::digest(text.as_bytes()))
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("config serializes")
    }
}

pub fn parse_value(raw: &str) -> toml::Value {
    format!("v = {raw}")
        .parse::<toml::Table>()
        .ok()
        .and_then(|mut t| t.remove("v"))
        .unwrap_or_else(|| toml::Value::String(raw.to_string()))
}

fn set_path(table: &mut toml::Table, key: &str, value: toml::Value) -> Result<(), CliError> {
    let parts: Vec<&str> = key.split('.').collect();
    if parts.iter().any(|p| p.is_empty()) {
        return Err(CliError::config(format!("bad override key `{key}`")));
    }
    let mut cur = table;
    for p in &parts[..parts.len() - 1] {
        let entry = cur
            .entry(p.to_string())
            .or_insert_with(|| toml::Value::Table(toml::Table::new()));
        cur = entry
            .as_table_mut()
            .ok_or_else(|| CliError::config(format!("override `{key}`: `{p}` is not a table")))?;
    }
    cur.insert(parts[parts.len() - 1].to_string(), value);
    Ok(())
}

/// Split `key=value`, parsing the value as in [`parse_value`].
pub fn parse_override(s: &str) -> Result<(String, toml::Value), String> {
    s.split_once('=')
        .map(|(k, v)| (k.trim().to_string(), parse_value(v.trim())))
        .ok_or_else(|| format!("expected key=value, got `{s}`"))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn overrides_apply_over_defaults() {
        let o: Vec<_> = ["train.epochs=3", "infer.mode=feedforward", "robot=arm5x2"]
            .iter()
            .map(|s| parse_override(s).unwrap())
            .collect();
        let c = RunConfig::resolve(None, &o).unwrap();
        assert_eq!(c.train.epochs, 3);
        assert_eq!(c.infer.mode, Mode::Feedforward);
        assert_eq!(c.robot, "arm5x2");
        assert_eq!(c.train.batch, 16);
    }

    #[test]
    fn unknown_fields_and_bad_values_are_rejected() {
        let e = RunConfig::resolve(None, &[parse_override("train.epoch=3").unwrap()]).unwrap_err();
        assert_eq!(e.code, 2);
        assert!(e.message.contains("epoch"), "{}", e.message);
        let e = RunConfig::resolve(None, &[parse_override("weights.ee=-1").unwrap()]).unwrap_err();
        assert!(e.message.starts_with("weights"), "{}", e.message);
    }

    #[test]
    fn hash_ignores_output_location_and_jobs() {
        let a = RunConfig::default();
        let mut b = a.clone();
        b.out = "elsewhere".into();
        b.jobs = 4;
        assert_eq!(a.hash(), b.hash());
        b.seed = 1;
        assert_ne!(a.hash(), b.hash());
    }
}
