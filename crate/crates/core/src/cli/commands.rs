use std::fs;
use std::path::{Path, PathBuf};
use std::time::Instant;

use crate::cli::{Checkpoint, DatasetSpec, ExperimentConfig};
use crate::cluster::{cluster_csv, fit_best_cluster_head, parse_cluster_csv, ClusterConfig, ClusterResult};
use crate::data::{encode_ucds, read_cifar10_batch, read_ucds, Dataset, SubspaceMixture};
use crate::error::{Error, Result};
use crate::eval::{
    cosine_heatmap, cosine_margin, heatmap_csv, heatmap_pgm, hungarian_accuracy, linear_probe, nmi, transcription_stats,
    EvalReport, ProbeConfig,
};
use crate::generation::{decode_grid, fit_cluster_models, manifest_csv, tile_sheet};
use crate::model::encode_features;
use crate::numerics::{Rng, Stream};
use crate::trainer::{fmt_f64, format_telemetry, resume_training, TrainState, VariantTag};
use crate::{AdamParams, Features, Network};

pub const ABLATION_HEADER: &str = "variant,probe_acc,nmi,final_R,final_dR,final_c1,final_c2";

/// Command-line overrides applied on top of a config file.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct RunOptions {
    pub out: Option<PathBuf>,
    pub seed: Option<u64>,
    pub force: bool,
}

/// What a command wants the user to see besides its files.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct Outcome {
    pub notices: Vec<String>,
    pub files: Vec<PathBuf>,
}

impl Outcome {
    fn write(&mut self, path: PathBuf, bytes: impl AsRef<[u8]>) -> Result<()> {
        fs::write(&path, bytes).map_err(|e| Error::io(&path, e))?;
        self.files.push(path);
        Ok(())
    }
}

pub fn load_config(path: impl AsRef<Path>, opts: &RunOptions) -> Result<ExperimentConfig> {
    let mut cfg = ExperimentConfig::load(path)?;
    if let Some(out) = &opts.out {
        cfg.output_dir = out.clone();
    }
    if let Some(seed) = opts.seed {
        cfg.seed = seed;
    }
    Ok(cfg)
}

/// Worker threads allowed by `UCTRL_THREADS`; unset or `0` means all cores.
pub fn thread_budget() -> Result<usize> {
    let auto = || std::thread::available_parallelism().map_or(1, |n| n.get());
    match std::env::var("UCTRL_THREADS") {
        Err(_) => Ok(auto()),
        Ok(v) => match v.trim().parse::<usize>() {
            Ok(0) => Ok(auto()),
            Ok(n) => Ok(n),
            Err(_) => Err(Error::InvalidConfig(format!("UCTRL_THREADS must be a non-negative integer, got `{v}`"))),
        },
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct Splits {
    pub train: Dataset,
    pub test: Option<Dataset>,
}

fn concat(parts: Vec<Dataset>, description: String) -> Result<Dataset> {
    let mut iter = parts.into_iter();
    let first = iter.next().ok_or_else(|| Error::InvalidConfig("no dataset files".into()))?;
    let image = first.image_shape();
    let k = first.num_classes();
    let mut x = first.samples().matrix().clone();
    let mut labels = first.labels().map(<[usize]>::to_vec);
    for d in iter {
        x = x.hcat(d.samples().matrix())?;
        labels = match (labels, d.labels()) {
            (Some(mut a), Some(b)) => {
                a.extend_from_slice(b);
                Some(a)
            }
            _ => None,
        };
    }
    Ok(Dataset::new(x, labels, k, description)?.with_image_shape(image))
}

/// Train and (optional) test splits described by the config. Synthetic
/// splits share one mixture drawn from the data-generation substream.
pub fn load_datasets(cfg: &ExperimentConfig) -> Result<Splits> {
    match &cfg.dataset {
        DatasetSpec::Synthetic {
            ambient_dim,
            classes,
            per_class_dim,
            train_per_class,
            test_per_class,
            noise_sigma,
        } => {
            let mut rng = Rng::stream(cfg.seed, Stream::DataGen, 0);
            let mix = SubspaceMixture::new(&mut rng, *ambient_dim, *classes, *per_class_dim)?;
            let train = mix.sample(&mut rng, *train_per_class, *noise_sigma)?;
            let test = if *test_per_class > 0 {
                Some(mix.sample(&mut rng, *test_per_class, *noise_sigma)?)
            } else {
                None
            };
            Ok(Splits { train, test })
        }
        DatasetSpec::Ucds { train, test } => Ok(Splits {
            train: read_ucds(train)?,
            test: test.as_ref().map(read_ucds).transpose()?,
        }),
        DatasetSpec::Cifar10 { train, test } => {
            let parts = train.iter().map(read_cifar10_batch).collect::<Result<Vec<_>>>()?;
            Ok(Splits {
                train: concat(parts, format!("CIFAR-10 batches {train:?}"))?,
                test: test.as_ref().map(read_cifar10_batch).transpose()?,
            })
        }
    }
}

fn create_out(cfg: &ExperimentConfig) -> Result<PathBuf> {
    let out = cfg.output_dir.clone();
    fs::create_dir_all(&out).map_err(|e| Error::io(&out, e))?;
    Ok(out)
}

fn checkpoint_path(cfg: &ExperimentConfig, explicit: &Option<PathBuf>) -> PathBuf {
    explicit.clone().unwrap_or_else(|| cfg.output_dir.join("checkpoint.uctl"))
}

fn load_trained(cfg: &ExperimentConfig, explicit: &Option<PathBuf>, force: bool) -> Result<TrainState> {
    Checkpoint::load_checked(checkpoint_path(cfg, explicit), &cfg.hash(), force)?.to_state()
}

fn encode_dataset(state: &TrainState, data: &Dataset) -> Result<Features> {
    if state.encoder.input_dim() != data.dim() {
        return Err(Error::dims("checkpoint input dimension", state.encoder.input_dim(), data.dim()));
    }
    encode_features(&state.encoder, data.samples().matrix())
}

/// Trains from scratch, or from `train.resume`, until `train.iterations`.
///
/// Writes `checkpoint.uctl`; when `train.iterations > 0` also
/// `telemetry.tsv` (deterministic) and `wallclock.tsv` (elapsed seconds per
/// round); and, with `train.checkpoint_every = n`,
/// `checkpoint_{iteration}.uctl` every `n` rounds.
pub fn cmd_train(cfg: &ExperimentConfig, force: bool) -> Result<Outcome> {
    let out = create_out(cfg)?;
    let splits = load_datasets(cfg)?;
    let data = &splits.train;
    let tcfg = cfg.train_config(data.image_shape());
    let hash = cfg.hash();
    let state = match &cfg.train.resume {
        Some(path) => Checkpoint::load_checked(path, &hash, force)?.to_state()?,
        None => TrainState::init(data.dim(), &tcfg)?,
    };
    let mut outcome = Outcome::default();
    let start = Instant::now();
    let mut wall = String::from("iteration\twall_clock_s\n");
    let every = cfg.train.checkpoint_every;
    let mut periodic = Vec::new();
    let mut hook = |s: &TrainState| -> Result<()> {
        wall.push_str(&format!("{}\t{:.6}\n", s.iteration - 1, start.elapsed().as_secs_f64()));
        if every > 0 && s.iteration % every == 0 {
            let path = out.join(format!("checkpoint_{:08}.uctl", s.iteration));
            Checkpoint::from_state(s, hash).save(&path)?;
            periodic.push(path);
        }
        Ok(())
    };
    let state = resume_training(&tcfg, data.samples(), state, &mut hook)?;
    outcome.files.extend(periodic);
    if cfg.train.iterations > 0 {
        outcome.write(out.join("telemetry.tsv"), format_telemetry(&state.telemetry))?;
        outcome.write(out.join("wallclock.tsv"), wall)?;
    }
    outcome.write(out.join("checkpoint.uctl"), Checkpoint::from_state(&state, hash).encode()?)?;
    Ok(outcome)
}

fn cluster_heads(cfg: &ExperimentConfig, seed: u64) -> Result<Vec<Network>> {
    (0..cfg.cluster.restarts as u64)
        .map(|r| Network::cluster_head(cfg.feature_dim, cfg.cluster.k, &mut Rng::stream(seed, Stream::Init, 10 + r)))
        .collect()
}

fn cluster_features(cfg: &ExperimentConfig, z: &Features, seed: u64) -> Result<ClusterResult> {
    let ccfg = ClusterConfig {
        steps: cfg.cluster.steps,
        batch_size: cfg.cluster.batch_size,
        adam: AdamParams {
            lr: cfg.cluster.lr,
            ..cfg.train.adam
        },
        rate: cfg.train.rate,
        seed,
    };
    fit_best_cluster_head(z, cfg.cluster.k, cluster_heads(cfg, seed)?, &ccfg)
}

/// Encodes the training split, fits the membership head and writes
/// `clusters.csv`, `cluster_trace.csv` and `cluster_report.{txt,csv}`.
pub fn cmd_cluster(cfg: &ExperimentConfig, force: bool) -> Result<Outcome> {
    let out = create_out(cfg)?;
    let state = load_trained(cfg, &cfg.cluster.checkpoint, force)?;
    let data = load_datasets(cfg)?.train;
    let z = encode_dataset(&state, &data)?;
    let result = cluster_features(cfg, &z, cfg.seed)?;
    let mut outcome = Outcome::default();
    outcome.notices.extend(result.warnings.iter().map(|w| w.to_string()));
    let mut report = EvalReport::default();
    if let Some(truth) = data.labels() {
        report.nmi = Some(nmi(&result.hard_labels, truth)?);
        report.cluster_accuracy = Some(hungarian_accuracy(&result.hard_labels, truth)?);
    } else {
        outcome.notices.push("dataset has no labels; nmi and cluster_accuracy omitted".into());
    }
    let trace: String = std::iter::once("step,objective\n".to_string())
        .chain(result.trace.iter().enumerate().map(|(i, v)| format!("{i},{}\n", fmt_f64(*v))))
        .collect();
    outcome.write(out.join("clusters.csv"), cluster_csv(&result))?;
    outcome.write(out.join("cluster_trace.csv"), trace)?;
    outcome.write(out.join("cluster_report.txt"), report.to_key_value())?;
    outcome.write(out.join("cluster_report.csv"), report.to_csv())?;
    Ok(outcome)
}

/// Per-cluster PCA of the encoded training split and decoding of points
/// along each cluster's leading directions. Writes `generated.ucds`,
/// `manifest.csv` and, for image-shaped data, `grid.ppm` or `grid.pgm`.
pub fn cmd_generate(cfg: &ExperimentConfig, force: bool) -> Result<Outcome> {
    let out = create_out(cfg)?;
    let state = load_trained(cfg, &cfg.cluster.checkpoint, force)?;
    let data = load_datasets(cfg)?.train;
    let z = encode_dataset(&state, &data)?;
    let clusters_path = cfg.generate.clusters.clone().unwrap_or_else(|| out.join("clusters.csv"));
    let text = fs::read_to_string(&clusters_path).map_err(|e| Error::io(&clusters_path, e))?;
    let (labels, membership) = parse_cluster_csv(&text)?;
    let k = membership.clusters();
    let mut outcome = Outcome::default();
    let mut models = Vec::new();
    for m in fit_cluster_models(&z, &labels, k, cfg.generate.rank)? {
        match m {
            Ok(m) => models.push(m),
            Err(Error::EmptyCluster(j)) => outcome.notices.push(format!("cluster {j} is empty; skipped")),
            Err(e) => return Err(e),
        }
    }
    let mut rng = Rng::stream(cfg.seed, Stream::Sample, 0);
    let grid = decode_grid(
        &mut rng,
        &state.decoder,
        &models,
        cfg.generate.components,
        cfg.generate.samples,
        cfg.generate.noise_scale,
    )?;
    let generated = Dataset::new(grid.samples.clone(), Some(grid.sample_clusters()), k, "generated grid")?;
    outcome.write(out.join("generated.ucds"), encode_ucds(&generated)?)?;
    outcome.write(out.join("manifest.csv"), manifest_csv(&grid))?;
    match data.image_shape() {
        Some(shape) => {
            let name = if shape.channels == 1 { "grid.pgm" } else { "grid.ppm" };
            outcome.write(out.join(name), tile_sheet(&grid, shape)?)?;
        }
        None => outcome.notices.push(format!("dimension {} is not an image layout; tile sheet skipped", data.dim())),
    }
    Ok(outcome)
}

fn probe_config(cfg: &ExperimentConfig) -> ProbeConfig {
    ProbeConfig {
        steps: cfg.probe_steps,
        adam: AdamParams {
            lr: cfg.probe_lr,
            ..cfg.train.adam
        },
    }
}

fn labeled<'a>(d: Option<&'a Dataset>, what: &str) -> Result<(&'a Dataset, &'a [usize])> {
    let d = d.ok_or_else(|| Error::InvalidConfig(format!("{what} split is required")))?;
    let l = d.labels().ok_or_else(|| Error::InvalidConfig(format!("{what} split must be labeled")))?;
    Ok((d, l))
}

/// Linear probe (train → test), cosine diagnostics and transcription
/// statistics on the test split. Writes `eval_report.{txt,csv}`,
/// `per_class.csv` and `heatmap.{csv,pgm}` (test set sorted by label).
pub fn cmd_eval(cfg: &ExperimentConfig, force: bool) -> Result<Outcome> {
    let out = create_out(cfg)?;
    let state = load_trained(cfg, &cfg.cluster.checkpoint, force)?;
    let splits = load_datasets(cfg)?;
    let (train, train_labels) = labeled(Some(&splits.train), "train")?;
    let (test, test_labels) = labeled(splits.test.as_ref(), "test")?;
    let z_train = encode_dataset(&state, train)?;
    let z_test = encode_dataset(&state, test)?;
    let probe = linear_probe(z_train.matrix(), train_labels, z_test.matrix(), test_labels, &probe_config(cfg))?;
    let (margin, per_class) = cosine_margin(z_test.matrix(), test_labels)?;
    let (self_consistency, expansion) =
        transcription_stats(&state.encoder, &state.decoder, test.samples().matrix(), &cfg.train.rate)?;
    let report = EvalReport {
        probe_accuracy: Some(probe),
        cosine_margin: Some(margin),
        self_consistency: Some(self_consistency),
        expansion: Some(expansion),
        per_class,
        ..EvalReport::default()
    };
    let heat = cosine_heatmap(z_test.matrix(), test_labels)?;
    let mut outcome = Outcome::default();
    outcome.write(out.join("eval_report.txt"), report.to_key_value())?;
    outcome.write(out.join("eval_report.csv"), report.to_csv())?;
    outcome.write(out.join("per_class.csv"), report.per_class_csv())?;
    outcome.write(out.join("heatmap.csv"), heatmap_csv(&heat))?;
    outcome.write(out.join("heatmap.pgm"), heatmap_pgm(&heat)?)?;
    Ok(outcome)
}

/// One line of the ablation table.
#[derive(Clone, Debug, PartialEq)]
pub struct AblationRow {
    pub variant: VariantTag,
    pub probe_acc: f64,
    pub nmi: f64,
    pub final_r: f64,
    pub final_dr: f64,
    pub final_c1: f64,
    pub final_c2: f64,
}

impl AblationRow {
    pub fn to_csv_line(&self) -> String {
        format!(
            "{},{},{},{},{},{},{}",
            self.variant,
            fmt_f64(self.probe_acc),
            fmt_f64(self.nmi),
            fmt_f64(self.final_r),
            fmt_f64(self.final_dr),
            fmt_f64(self.final_c1),
            fmt_f64(self.final_c2)
        )
    }
}

/// Trains one variant on the shared data and scores it.
pub fn ablation_row(cfg: &ExperimentConfig, splits: &Splits, variant: VariantTag) -> Result<AblationRow> {
    let (train, train_labels) = labeled(Some(&splits.train), "train")?;
    let (test, test_labels) = labeled(splits.test.as_ref(), "test")?;
    let mut tcfg = cfg.train_config(train.image_shape());
    tcfg.variant.tag = variant;
    let state = resume_training(&tcfg, train.samples(), TrainState::init(train.dim(), &tcfg)?, &mut |_| Ok(()))?;
    let last = *state
        .telemetry
        .last()
        .ok_or_else(|| Error::InvalidConfig("ablation needs train.iterations ≥ 1".into()))?;
    let z_train = encode_dataset(&state, train)?;
    let z_test = encode_dataset(&state, test)?;
    let probe_acc = linear_probe(z_train.matrix(), train_labels, z_test.matrix(), test_labels, &probe_config(cfg))?;
    let clusters = cluster_features(cfg, &z_train, cfg.seed)?;
    Ok(AblationRow {
        variant,
        probe_acc,
        nmi: nmi(&clusters.hard_labels, train_labels)?,
        final_r: last.terms.expansion,
        final_dr: last.terms.pair,
        final_c1: last.terms.augmentation,
        final_c2: last.terms.self_consistency,
    })
}

/// Runs [`ablation_row`] for every variant in `ablate.variants`, up to
/// `UCTRL_THREADS` at a time, and writes `ablation.csv` in list order.
pub fn cmd_ablate(cfg: &ExperimentConfig) -> Result<Outcome> {
    if cfg.ablate_variants.is_empty() {
        return Err(Error::Config {
            key: "ablate.variants".into(),
            line: 0,
            message: "at least one variant is required".into(),
        });
    }
    let out = create_out(cfg)?;
    let splits = load_datasets(cfg)?;
    let threads = thread_budget()?.max(1);
    let splits_ref = &splits;
    let mut rows = Vec::new();
    for chunk in cfg.ablate_variants.chunks(threads) {
        let results: Vec<Result<AblationRow>> = std::thread::scope(|s| {
            let handles: Vec<_> = chunk.iter().map(|&v| s.spawn(move || ablation_row(cfg, splits_ref, v))).collect();
            handles.into_iter().map(|h| h.join().expect("ablation worker panicked")).collect()
        });
        for r in results {
            rows.push(r?);
        }
    }
    let mut text = format!("{ABLATION_HEADER}\n");
    for r in &rows {
        text.push_str(&r.to_csv_line());
        text.push('\n');
    }
    let mut outcome = Outcome::default();
    outcome.write(out.join("ablation.csv"), text)?;
    Ok(outcome)
}
