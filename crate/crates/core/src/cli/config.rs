use std::collections::BTreeMap;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use sha2::{Digest, Sha256};

use crate::data::{Augmentation, AugmentationSpec, ImageShape};
use crate::error::{Error, Result};
use crate::rate::DistanceMode;
use crate::trainer::{fmt_f64, ObjectiveVariant, TrainConfig, VariantTag};
use crate::{AdamParams, RateParams};

#[derive(Clone, Debug, PartialEq)]
pub enum DatasetSpec {
    Synthetic {
        ambient_dim: usize,
        classes: usize,
        per_class_dim: usize,
        train_per_class: usize,
        test_per_class: usize,
        noise_sigma: f64,
    },
    Ucds {
        train: PathBuf,
        test: Option<PathBuf>,
    },
    Cifar10 {
        train: Vec<PathBuf>,
        test: Option<PathBuf>,
    },
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub enum AugmentationChoice {
    /// Sign-flipping jitter plus noise for vectors, crop/flip for images.
    Default { jitter: f64, noise: f64 },
    None,
}

#[derive(Clone, Debug, PartialEq)]
pub struct TrainSpec {
    pub variant: ObjectiveVariant,
    pub rate: RateParams,
    pub adam: AdamParams,
    pub batch_size: usize,
    pub iterations: u64,
    pub stop_grad_through_decoder: bool,
    /// Write an extra checkpoint every this many rounds; 0 disables.
    pub checkpoint_every: u64,
    pub augmentation: AugmentationChoice,
    pub augmentation_count: usize,
    pub resume: Option<PathBuf>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct ClusterSpec {
    pub k: usize,
    pub steps: usize,
    pub lr: f64,
    pub restarts: usize,
    pub batch_size: usize,
    pub checkpoint: Option<PathBuf>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct GenerateSpec {
    pub rank: usize,
    pub components: usize,
    pub samples: usize,
    pub noise_scale: f64,
    pub clusters: Option<PathBuf>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct ExperimentConfig {
    pub dataset: DatasetSpec,
    pub feature_dim: usize,
    pub hidden: usize,
    pub train: TrainSpec,
    pub cluster: ClusterSpec,
    pub generate: GenerateSpec,
    pub probe_steps: usize,
    pub probe_lr: f64,
    pub ablate_variants: Vec<VariantTag>,
    pub seed: u64,
    pub output_dir: PathBuf,
}

struct Entries {
    map: BTreeMap<String, (String, usize)>,
    used: Vec<String>,
    base: PathBuf,
}

impl Entries {
    fn parse(text: &str, base: &Path) -> Result<Self> {
        let mut map = BTreeMap::new();
        for (i, raw) in text.lines().enumerate() {
            let line = i + 1;
            let content = raw.split('#').next().unwrap_or("").trim();
            if content.is_empty() {
                continue;
            }
            let (key, value) = content.split_once('=').ok_or_else(|| Error::Config {
                key: content.to_string(),
                line,
                message: "expected `key = value`".into(),
            })?;
            let key = key.trim().to_string();
            if key.is_empty() || key.contains(char::is_whitespace) {
                return Err(Error::Config {
                    key,
                    line,
                    message: "malformed key".into(),
                });
            }
            if let Some((_, first)) = map.get(&key) {
                return Err(Error::Config {
                    message: format!("duplicate key (first set on line {first})"),
                    key,
                    line,
                });
            }
            map.insert(key, (value.trim().to_string(), line));
        }
        Ok(Self {
            map,
            used: Vec::new(),
            base: base.to_path_buf(),
        })
    }

    fn raw(&mut self, key: &str) -> Option<(String, usize)> {
        self.used.push(key.to_string());
        self.map.get(key).cloned()
    }

    fn get<T: FromStr>(&mut self, key: &str, default: T) -> Result<T> {
        match self.raw(key) {
            None => Ok(default),
            Some((v, line)) => v.parse().map_err(|_| Error::Config {
                key: key.into(),
                line,
                message: format!("cannot parse `{v}`"),
            }),
        }
    }

    fn check<T>(&self, key: &str, value: T, ok: impl Fn(&T) -> bool, what: &str) -> Result<T> {
        if ok(&value) {
            return Ok(value);
        }
        let line = self.map.get(key).map_or(0, |(_, l)| *l);
        Err(Error::Config {
            key: key.into(),
            line,
            message: format!("must be {what}"),
        })
    }

    fn positive(&mut self, key: &str, default: usize) -> Result<usize> {
        let v = self.get(key, default)?;
        self.check(key, v, |&v| v >= 1, "≥ 1")
    }

    fn nonneg(&mut self, key: &str, default: f64) -> Result<f64> {
        let v = self.get(key, default)?;
        self.check(key, v, |&v: &f64| v >= 0.0 && v.is_finite(), "finite and ≥ 0")
    }

    fn probability(&mut self, key: &str, default: f64) -> Result<f64> {
        let v = self.get(key, default)?;
        self.check(key, v, |&v: &f64| (0.0..1.0).contains(&v), "in [0, 1)")
    }

    fn rate(&mut self, key: &str, default: f64) -> Result<f64> {
        let v = self.get(key, default)?;
        self.check(key, v, |&v: &f64| v > 0.0 && v.is_finite(), "finite and > 0")
    }

    fn path(&mut self, key: &str) -> Option<PathBuf> {
        self.raw(key).filter(|(v, _)| !v.is_empty()).map(|(v, _)| self.base.join(v))
    }

    fn paths(&mut self, key: &str) -> Vec<PathBuf> {
        self.raw(key)
            .map(|(v, _)| {
                v.split(',')
                    .map(str::trim)
                    .filter(|s| !s.is_empty())
                    .map(|s| self.base.join(s))
                    .collect()
            })
            .unwrap_or_default()
    }

    fn parsed<T>(&mut self, key: &str, default: T, parse: impl Fn(&str) -> Option<T>, expected: &str) -> Result<T> {
        match self.raw(key) {
            None => Ok(default),
            Some((v, line)) => parse(&v).ok_or_else(|| Error::Config {
                key: key.into(),
                line,
                message: format!("`{v}` is not one of {expected}"),
            }),
        }
    }

    fn missing(&self, key: &str) -> Error {
        Error::Config {
            key: key.into(),
            line: 0,
            message: "required for this dataset kind".into(),
        }
    }

    fn finish(self) -> Result<()> {
        for (key, (_, line)) in &self.map {
            if !self.used.contains(key) {
                return Err(Error::Config {
                    key: key.clone(),
                    line: *line,
                    message: "unknown key".into(),
                });
            }
        }
        Ok(())
    }
}

fn parse_bool(s: &str) -> Option<bool> {
    match s {
        "true" => Some(true),
        "false" => Some(false),
        _ => None,
    }
}

fn parse_variants(s: &str) -> Option<Vec<VariantTag>> {
    s.split(',')
        .map(str::trim)
        .filter(|t| !t.is_empty())
        .map(VariantTag::parse)
        .collect()
}

impl ExperimentConfig {
    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::parse(&text, path.parent().unwrap_or(Path::new(".")))
    }

    /// Parses config text; relative paths are resolved against `base`.
    pub fn parse(text: &str, base: &Path) -> Result<Self> {
        let mut e = Entries::parse(text, base)?;
        let kind = e.get("dataset.kind", "synthetic".to_string())?;
        let dataset = match kind.as_str() {
            "synthetic" => DatasetSpec::Synthetic {
                ambient_dim: e.positive("dataset.ambient_dim", 16)?,
                classes: e.positive("dataset.classes", 3)?,
                per_class_dim: e.positive("dataset.per_class_dim", 1)?,
                train_per_class: e.positive("dataset.train_per_class", 200)?,
                test_per_class: e.get("dataset.test_per_class", 100)?,
                noise_sigma: e.nonneg("dataset.noise_sigma", 0.01)?,
            },
            "ucds" => DatasetSpec::Ucds {
                train: e.path("dataset.train_path").ok_or_else(|| e.missing("dataset.train_path"))?,
                test: e.path("dataset.test_path"),
            },
            "cifar10" => {
                let train = e.paths("dataset.train_path");
                if train.is_empty() {
                    return Err(e.missing("dataset.train_path"));
                }
                DatasetSpec::Cifar10 {
                    train,
                    test: e.path("dataset.test_path"),
                }
            }
            other => {
                let line = e.map.get("dataset.kind").map_or(0, |(_, l)| *l);
                return Err(Error::Config {
                    key: "dataset.kind".into(),
                    line,
                    message: format!("`{other}` is not one of synthetic, ucds, cifar10"),
                });
            }
        };
        let default_k = match &dataset {
            DatasetSpec::Synthetic { classes, .. } => *classes,
            DatasetSpec::Cifar10 { .. } => 10,
            DatasetSpec::Ucds { .. } => 2,
        };
        let feature_dim = e.positive("model.feature_dim", 8)?;
        let hidden = e.positive("model.hidden", 64)?;

        let tag = e.parsed("train.variant", VariantTag::I, VariantTag::parse, "I, II, III, IV, V, VI, no_mcr2")?;
        let lambda1 = e.nonneg("train.lambda1", 30.0)?;
        let lambda2 = e.nonneg("train.lambda2", 30.0)?;
        let mode = e.parsed("train.distance_mode", DistanceMode::Cosine, DistanceMode::parse, "exact_dr, cosine, l2")?;
        let epsilon_sq = e.rate("rate.epsilon_sq", 0.2)?;
        let adam = AdamParams {
            lr: e.rate("train.lr", 1e-4)?,
            beta1: e.probability("train.beta1", 0.5)?,
            beta2: e.probability("train.beta2", 0.999)?,
            eps: e.rate("train.adam_eps", 1e-8)?,
        };
        let augmentation = match e.get("train.augmentation", "default".to_string())?.as_str() {
            "default" => AugmentationChoice::Default {
                jitter: e.nonneg("train.augment_jitter", 0.3)?,
                noise: e.nonneg("train.augment_noise", 0.02)?,
            },
            "none" => AugmentationChoice::None,
            other => {
                let line = e.map.get("train.augmentation").map_or(0, |(_, l)| *l);
                return Err(Error::Config {
                    key: "train.augmentation".into(),
                    line,
                    message: format!("`{other}` is not one of default, none"),
                });
            }
        };
        let train = TrainSpec {
            variant: ObjectiveVariant::new(tag, lambda1, lambda2, mode)?,
            rate: RateParams::new(epsilon_sq)?,
            adam,
            batch_size: e.positive("train.batch_size", 128)?,
            iterations: e.get("train.iterations", 2000)?,
            stop_grad_through_decoder: e.parsed("train.stop_grad_through_decoder", false, parse_bool, "true, false")?,
            checkpoint_every: e.get("train.checkpoint_every", 0)?,
            augmentation,
            augmentation_count: e.positive("train.augmentation_count", 1)?,
            resume: e.path("train.resume"),
        };
        let cluster = ClusterSpec {
            k: e.positive("cluster.k", default_k)?,
            steps: e.get("cluster.steps", 1000)?,
            lr: e.rate("cluster.lr", 1e-4)?,
            restarts: e.positive("cluster.restarts", 1)?,
            batch_size: e.get("cluster.batch_size", 0)?,
            checkpoint: e.path("cluster.checkpoint"),
        };
        let generate = GenerateSpec {
            rank: e.positive("generate.rank", 3)?,
            components: e.positive("generate.components", 2)?,
            samples: e.positive("generate.samples", 5)?,
            noise_scale: e.nonneg("generate.noise_scale", 0.0)?,
            clusters: e.path("generate.clusters"),
        };
        let probe_steps = e.get("eval.probe_steps", 1000)?;
        let probe_lr = e.rate("eval.probe_lr", 1e-4)?;
        let ablate_variants = e.parsed(
            "ablate.variants",
            vec![VariantTag::I, VariantTag::V, VariantTag::VI, VariantTag::NoMcr2],
            parse_variants,
            "comma-separated variant tags",
        )?;
        let seed = e.get("seed", 1)?;
        let output_dir = e.path("output.dir").unwrap_or_else(|| base.join("out"));
        e.finish()?;
        Ok(Self {
            dataset,
            feature_dim,
            hidden,
            train,
            cluster,
            generate,
            probe_steps,
            probe_lr,
            ablate_variants,
            seed,
            output_dir,
        })
    }

    pub fn augmentation_spec(&self, image: Option<ImageShape>) -> AugmentationSpec {
        let mut spec = match (self.train.augmentation, image) {
            (AugmentationChoice::None, _) => AugmentationSpec {
                ops: Vec::new(),
                count: 1,
                renormalize: false,
            },
            (AugmentationChoice::Default { .. }, Some(shape)) => AugmentationSpec::image_default(shape),
            (AugmentationChoice::Default { jitter, noise }, None) => AugmentationSpec {
                ops: vec![
                    Augmentation::SubspaceJitter {
                        strength: jitter,
                        sign_flip: true,
                    },
                    Augmentation::AdditiveNoise { sigma: noise },
                ],
                count: 1,
                renormalize: true,
            },
        };
        spec.count = self.train.augmentation_count;
        spec
    }

    pub fn train_config(&self, image: Option<ImageShape>) -> TrainConfig {
        TrainConfig {
            variant: self.train.variant,
            rate: self.train.rate,
            adam: self.train.adam,
            batch_size: self.train.batch_size,
            iterations: self.train.iterations,
            seed: self.seed,
            stop_grad_through_decoder: self.train.stop_grad_through_decoder,
            augmentation: self.augmentation_spec(image),
            hidden: self.hidden,
            feature_dim: self.feature_dim,
        }
    }

    /// Everything that determines the trained networks except the length of
    /// the run, one `key=value` per line.
    pub fn canonical_training_text(&self) -> String {
        let mut lines = Vec::new();
        let paths = |p: &[PathBuf]| p.iter().map(|p| p.display().to_string()).collect::<Vec<_>>().join(",");
        match &self.dataset {
            DatasetSpec::Synthetic {
                ambient_dim,
                classes,
                per_class_dim,
                train_per_class,
                test_per_class,
                noise_sigma,
            } => {
                lines.push("dataset.kind=synthetic".to_string());
                lines.push(format!("dataset.ambient_dim={ambient_dim}"));
                lines.push(format!("dataset.classes={classes}"));
                lines.push(format!("dataset.per_class_dim={per_class_dim}"));
                lines.push(format!("dataset.train_per_class={train_per_class}"));
                lines.push(format!("dataset.test_per_class={test_per_class}"));
                lines.push(format!("dataset.noise_sigma={}", fmt_f64(*noise_sigma)));
            }
            DatasetSpec::Ucds { train, test } => {
                lines.push("dataset.kind=ucds".to_string());
                lines.push(format!("dataset.train_path={}", train.display()));
                lines.push(format!("dataset.test_path={}", paths(test.as_slice())));
            }
            DatasetSpec::Cifar10 { train, test } => {
                lines.push("dataset.kind=cifar10".to_string());
                lines.push(format!("dataset.train_path={}", paths(train)));
                lines.push(format!("dataset.test_path={}", paths(test.as_slice())));
            }
        }
        let t = &self.train;
        lines.push(format!("model.feature_dim={}", self.feature_dim));
        lines.push(format!("model.hidden={}", self.hidden));
        lines.push(format!("rate.epsilon_sq={}", fmt_f64(t.rate.epsilon_sq)));
        lines.push(format!("train.variant={}", t.variant.tag));
        lines.push(format!("train.lambda1={}", fmt_f64(t.variant.lambda1)));
        lines.push(format!("train.lambda2={}", fmt_f64(t.variant.lambda2)));
        lines.push(format!("train.distance_mode={}", t.variant.distance_mode.name()));
        lines.push(format!("train.lr={}", fmt_f64(t.adam.lr)));
        lines.push(format!("train.beta1={}", fmt_f64(t.adam.beta1)));
        lines.push(format!("train.beta2={}", fmt_f64(t.adam.beta2)));
        lines.push(format!("train.adam_eps={}", fmt_f64(t.adam.eps)));
        lines.push(format!("train.batch_size={}", t.batch_size));
        lines.push(format!("train.stop_grad_through_decoder={}", t.stop_grad_through_decoder));
        match t.augmentation {
            AugmentationChoice::Default { jitter, noise } => {
                lines.push("train.augmentation=default".to_string());
                lines.push(format!("train.augment_jitter={}", fmt_f64(jitter)));
                lines.push(format!("train.augment_noise={}", fmt_f64(noise)));
            }
            AugmentationChoice::None => lines.push("train.augmentation=none".to_string()),
        }
        lines.push(format!("train.augmentation_count={}", t.augmentation_count));
        lines.push(format!("seed={}", self.seed));
        let mut text = lines.join("\n");
        text.push('\n');
        text
    }

    /// SHA-256 of [`canonical_training_text`](Self::canonical_training_text).
    pub fn hash(&self) -> [u8; 32] {
        Sha256::digest(self.canonical_training_text().as_bytes()).into()
    }
}
