//! Acceptance run: one PASS/FAIL line per criterion, nonzero exit if any
//! criterion fails. Tolerances are pinned below.

mod common;

use std::collections::BTreeMap;
use std::fs;
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::time::{Duration, Instant};

use common::*;
use tempfile::TempDir;
use uctrl::cli::{cmd_cluster, cmd_eval, cmd_train, load_datasets, Checkpoint, ExperimentConfig};
use uctrl::cluster::{exhaustive_hard_maximum, fit_cluster_head, ClusterConfig};
use uctrl::data::{decode_ucds, encode_ucds, read_cifar10_batch, write_cifar10_batch, Dataset};
use uctrl::eval::transcription_stats;
use uctrl::numerics::Rng;
use uctrl::rate::{coding_rate, pair_rate_reduction, rate_reduction};
use uctrl::trainer::{TrainState, VariantTag};
use uctrl::{AdamParams, Features, Matrix, Membership, Network, RateParams};

const IDENTITY_TOL: f64 = 1e-8;
const SINGLE_CLUSTER_TOL: f64 = 1e-10;
const CLOSED_FORM_TOL: f64 = 1e-9;
const GRAD_TOL: f64 = 1e-6;
const CHAIN_GRAD_TOL: f64 = 1e-5;
const GRAD_INSTANCES: usize = 20;
const ORACLE_TOL: f64 = 1e-9;
const MIN_PROBE: f64 = 0.90;
const MIN_NMI: f64 = 0.85;
const MIN_CLUSTER_ACC: f64 = 0.90;
const MAX_SELF_CONSISTENCY: f64 = 0.1;
const MIN_MARGIN: f64 = 0.3;
const ABLATION_SEEDS: [u64; 3] = [1, 2, 3];

struct Verdict {
    pass: bool,
    detail: String,
}

fn verdict(pass: bool, detail: impl Into<String>) -> Verdict {
    Verdict {
        pass,
        detail: detail.into(),
    }
}

fn within(elapsed: Duration, limit_s: u64) -> (bool, String) {
    let s = elapsed.as_secs_f64();
    (s < limit_s as f64, format!("{s:.1}s (limit {limit_s}s)"))
}

fn read_report(path: &Path) -> BTreeMap<String, f64> {
    fs::read_to_string(path)
        .unwrap()
        .lines()
        .filter_map(|l| l.split_once(" = "))
        .map(|(k, v)| (k.to_string(), v.parse().unwrap()))
        .collect()
}

fn median(mut v: Vec<f64>) -> f64 {
    v.sort_by(f64::total_cmp);
    v[v.len() / 2]
}

/// A trained fixture-A run with its evaluation report.
struct Run {
    dir: TempDir,
    cfg: ExperimentConfig,
    eval: BTreeMap<String, f64>,
    elapsed: Duration,
}

fn train_and_eval(extra: &str) -> Run {
    let start = Instant::now();
    let dir = tempfile::tempdir().unwrap();
    let cfg = fixture_config(extra, dir.path());
    cmd_train(&cfg, false).unwrap();
    cmd_eval(&cfg, false).unwrap();
    let eval = read_report(&dir.path().join("eval_report.txt"));
    Run {
        dir,
        cfg,
        eval,
        elapsed: start.elapsed(),
    }
}

fn rate_identities() -> Verdict {
    let start = Instant::now();
    let p = RateParams::default();
    let mut rng = Rng::new(101);
    let (mut self_pair, mut rotated, mut single): (f64, f64, f64) = (0.0, 0.0, 0.0);
    for t in 0..100 {
        let (d, n) = (2 + t % 5, 2 + t % 11);
        let z = unit_columns(&mut rng, d, n);
        let zq = z.matmul(&orthogonal(&mut rng, n)).unwrap();
        let f = |m: &Matrix| Features::new(m.clone()).unwrap();
        self_pair = self_pair.max(pair_rate_reduction(&f(&z), &f(&z), &p).unwrap().abs());
        rotated = rotated.max(pair_rate_reduction(&f(&z), &f(&zq), &p).unwrap().abs());
        single = single.max(rate_reduction(&f(&z), &Membership::uniform(n, 1), &p).unwrap().total.abs());
    }
    let (fast, time) = within(start.elapsed(), 5);
    verdict(
        self_pair < IDENTITY_TOL && rotated < IDENTITY_TOL && single < SINGLE_CLUSTER_TOL && fast,
        format!("max |dR(Z,Z)| {self_pair:.1e}, max |dR(Z,ZQ)| {rotated:.1e}, max |dR k=1| {single:.1e}, {time}"),
    )
}

fn closed_form_rate() -> Verdict {
    // Two copies of the standard basis: ZZᵀ = 2I = (N/d)I with d = 4, N = 8.
    let z = Matrix::identity(4).hcat(&Matrix::identity(4)).unwrap();
    let r = coding_rate(&Features::unit(z).unwrap(), &RateParams::new(0.2).unwrap()).unwrap();
    let expected = 2.0 * 6f64.ln();
    verdict((r - expected).abs() < CLOSED_FORM_TOL, format!("R = {r:.15}, 2 ln 6 = {expected:.15}"))
}

fn gradient_suite() -> Verdict {
    let start = Instant::now();
    let rate = coding_rate_suite(301, GRAD_INSTANCES);
    let pair = pair_suite(302, GRAD_INSTANCES);
    let membership = membership_suite(303, GRAD_INSTANCES);
    let chain = chain_suite(304, GRAD_INSTANCES + 1);
    let (fast, time) = within(start.elapsed(), 60);
    verdict(
        rate.max(pair).max(membership) < GRAD_TOL && chain < CHAIN_GRAD_TOL && fast,
        format!("R {rate:.1e}, pair {pair:.1e}, membership {membership:.1e}, end-to-end {chain:.1e}, {time}"),
    )
}

/// Noise-free samples `±q_c` on `k` orthonormal directions of `R^d`.
fn orthogonal_instance(rng: &mut Rng, d: usize, k: usize, n: usize) -> (Matrix, Vec<usize>) {
    let q = orthogonal(rng, d);
    let labels: Vec<usize> = (0..n).map(|i| if i < k { i } else { rng.below(k) }).collect();
    let cols: Vec<Vec<f64>> = labels
        .iter()
        .map(|&c| {
            let s = if rng.bernoulli(0.5) { 1.0 } else { -1.0 };
            q.col(c).iter().map(|v| s * v).collect()
        })
        .collect();
    (Matrix::from_columns(&cols).unwrap(), labels)
}

fn clustering_oracle() -> Verdict {
    let start = Instant::now();
    let p = RateParams::default();
    let mut rng = Rng::new(401);
    let (mut truth_gap, mut soft_excess): (f64, f64) = (0.0, f64::NEG_INFINITY);
    let mut count = 0;
    for d in 2..=3 {
        for k in 2..=d {
            for n in [k + 2, 7, 9] {
                for noisy in [false, true] {
                    let (mut z, labels) = orthogonal_instance(&mut rng, d, k, n);
                    if noisy {
                        z = Features::normalized(z.add(&gaussian(&mut rng, d, n).scale(0.3)).unwrap())
                            .unwrap()
                            .into_matrix();
                    }
                    let f = Features::new(z).unwrap();
                    let (best, _) = exhaustive_hard_maximum(&f, k, &p).unwrap();
                    if !noisy {
                        let truth = rate_reduction(&f, &Membership::one_hot(&labels, k).unwrap(), &p).unwrap().total;
                        truth_gap = truth_gap.max(best - truth);
                    }
                    let cfg = ClusterConfig {
                        steps: 400,
                        adam: AdamParams {
                            lr: 1e-2,
                            ..AdamParams::default()
                        },
                        seed: count,
                        ..ClusterConfig::default()
                    };
                    let head = Network::cluster_head(d, k, &mut rng).unwrap();
                    let fit = fit_cluster_head(&f, k, head, &cfg).unwrap();
                    soft_excess = soft_excess.max(fit.objective - best);
                    count += 1;
                }
            }
        }
    }
    let (fast, time) = within(start.elapsed(), 120);
    verdict(
        truth_gap <= ORACLE_TOL && soft_excess <= ORACLE_TOL && fast,
        format!(
            "{count} instances, max(hard max - truth) {truth_gap:.1e}, max(soft - hard max) {soft_excess:.1e}, {time}"
        ),
    )
}

fn fixture_end_to_end(run: &Run) -> Verdict {
    let start = Instant::now();
    cmd_cluster(&run.cfg, false).unwrap();
    let cluster = read_report(&run.dir.path().join("cluster_report.txt"));
    let untrained = train_and_eval("train.iterations = 0");
    let (probe, nmi, acc) = (run.eval["probe_accuracy"], cluster["nmi"], cluster["cluster_accuracy"]);
    let (sc, margin) = (run.eval["self_consistency"], run.eval["cosine_margin"]);
    let probe0 = untrained.eval["probe_accuracy"];
    let (fast, time) = within(run.elapsed + start.elapsed(), 600);
    verdict(
        probe >= MIN_PROBE
            && nmi >= MIN_NMI
            && acc >= MIN_CLUSTER_ACC
            && sc < MAX_SELF_CONSISTENCY
            && margin >= MIN_MARGIN
            && probe0 < probe
            && fast,
        format!(
            "probe {probe:.3} (untrained {probe0:.3}), NMI {nmi:.3}, accuracy {acc:.3}, \
             1-cos(z,zhat) {sc:.4}, margin {margin:.3}, {time}"
        ),
    )
}

/// Feature-space self-consistency `1 − cos(z, ẑ)` on the test split stands in
/// for reconstruction quality; lower is better.
fn ablation_ordering(seed1: &Run) -> Verdict {
    let mut probe: BTreeMap<&str, Vec<f64>> = BTreeMap::new();
    let mut selfc: BTreeMap<&str, Vec<f64>> = BTreeMap::new();
    let mut lines = Vec::new();
    for tag in [VariantTag::I, VariantTag::V, VariantTag::VI, VariantTag::NoMcr2] {
        for seed in ABLATION_SEEDS {
            let owned;
            let run = if tag == VariantTag::I && seed == 1 {
                seed1
            } else {
                owned = train_and_eval(&format!("seed = {seed}\ntrain.variant = {tag}"));
                &owned
            };
            probe.entry(tag.name()).or_default().push(run.eval["probe_accuracy"]);
            selfc.entry(tag.name()).or_default().push(run.eval["self_consistency"]);
        }
        lines.push(format!(
            "{tag}: probe {:?} self-consistency {:?}",
            probe[tag.name()].iter().map(|v| format!("{v:.3}")).collect::<Vec<_>>(),
            selfc[tag.name()].iter().map(|v| format!("{v:.5}")).collect::<Vec<_>>()
        ));
    }
    let m = |map: &BTreeMap<&str, Vec<f64>>, t: VariantTag| median(map[t.name()].clone());
    let (pi, pv, pvi) = (m(&probe, VariantTag::I), m(&probe, VariantTag::V), m(&probe, VariantTag::VI));
    let (si, sn) = (m(&selfc, VariantTag::I), m(&selfc, VariantTag::NoMcr2));
    verdict(
        pi > pv && pi > pvi && sn > si,
        format!(
            "median probe I {pi:.3} vs V {pv:.3} vs VI {pvi:.3}; median 1-cos(z,zhat) no_mcr2 {sn:.5} vs I {si:.5}; {}",
            lines.join("; ")
        ),
    )
}

fn expansion(run: &Run) -> Verdict {
    let data = load_datasets(&run.cfg).unwrap().train;
    let trained = Checkpoint::load(run.dir.path().join("checkpoint.uctl")).unwrap();
    let state = trained.to_state().unwrap();
    let initial = TrainState::init(data.dim(), &run.cfg.train_config(None)).unwrap();
    let x = data.samples().matrix();
    let p = run.cfg.train.rate;
    let r0 = transcription_stats(&initial.encoder, &initial.decoder, x, &p).unwrap().1;
    let r1 = transcription_stats(&state.encoder, &state.decoder, x, &p).unwrap().1;
    verdict(
        trained.iteration == 2000 && r1 > r0,
        format!("R(Z) iteration 0 {r0:.4}, iteration {} {r1:.4}", trained.iteration),
    )
}

fn telemetry(dir: &Path) -> Vec<u8> {
    fs::read(dir.join("telemetry.tsv")).unwrap()
}

fn determinism() -> Verdict {
    let start = Instant::now();
    let dirs: Vec<TempDir> = (0..3).map(|_| tempfile::tempdir().unwrap()).collect();
    let full = |d: &Path| fixture_config("train.iterations = 200", d);
    cmd_train(&full(dirs[0].path()), false).unwrap();
    cmd_train(&full(dirs[1].path()), false).unwrap();
    let same = telemetry(dirs[0].path()) == telemetry(dirs[1].path());

    cmd_train(&fixture_config("train.iterations = 100", dirs[2].path()), false).unwrap();
    let first = String::from_utf8(telemetry(dirs[2].path())).unwrap();
    let ck: PathBuf = dirs[2].path().join("checkpoint.uctl");
    let resume = format!("train.iterations = 200\ntrain.resume = {}", ck.display());
    cmd_train(&fixture_config(&resume, dirs[2].path()), false).unwrap();
    let second = String::from_utf8(telemetry(dirs[2].path())).unwrap();
    let joined: Vec<&str> = first.lines().chain(second.lines().skip(1)).collect();
    let straight = String::from_utf8(telemetry(dirs[0].path())).unwrap();
    let resumed = joined == straight.lines().collect::<Vec<_>>();
    let params = fs::read(dirs[0].path().join("checkpoint.uctl")).unwrap() == fs::read(&ck).unwrap();
    let (fast, time) = within(start.elapsed(), 120);
    verdict(
        same && resumed && params && fast,
        format!("repeat identical {same}, resumed telemetry identical {resumed}, final checkpoint identical {params}, {time}"),
    )
}

fn format_fixtures() -> Verdict {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("fixture.bin");
    fs::write(&path, cifar_fixture_bytes()).unwrap();
    let d = read_cifar10_batch(&path).unwrap();
    let x = d.samples().matrix();
    let bits = (0..3072).all(|i| {
        x[(i, 0)].to_bits() == ((i % 256) as f64 / 127.5 - 1.0).to_bits()
            && x[(i, 1)].to_bits() == ((255 - (7 * i) % 256) as f64 / 127.5 - 1.0).to_bits()
    });
    let labels = d.labels() == Some(&[3, 9][..]);
    let again = dir.path().join("again.bin");
    write_cifar10_batch(&d, &again).unwrap();
    let cifar = bits && labels && fs::read(&again).unwrap() == cifar_fixture_bytes();

    let mut rng = Rng::new(901);
    let data = Dataset::new(gaussian(&mut rng, 7, 11), Some((0..11).map(|i| i % 3).collect()), 3, "f").unwrap();
    let bytes = encode_ucds(&data).unwrap();
    let ucds = encode_ucds(&decode_ucds(&bytes).unwrap()).unwrap() == bytes;

    let enc = Network::encoder(7, 5, 3, &mut rng).unwrap();
    let dec = Network::decoder(3, 5, 7, &mut rng).unwrap();
    let ck = Checkpoint::from_state(&TrainState::from_networks(enc, dec), [7; 32]);
    let p = dir.path().join("a.uctl");
    ck.save(&p).unwrap();
    let q = dir.path().join("b.uctl");
    Checkpoint::load(&p).unwrap().save(&q).unwrap();
    let uctl = fs::read(&p).unwrap() == fs::read(&q).unwrap();
    verdict(cifar && ucds && uctl, format!("CIFAR-10 {cifar}, UCDS {ucds}, UCTL {uctl}"))
}

fn guarded(f: impl FnOnce() -> Verdict) -> Verdict {
    catch_unwind(AssertUnwindSafe(f)).unwrap_or_else(|e| {
        let msg = e
            .downcast_ref::<String>()
            .cloned()
            .or_else(|| e.downcast_ref::<&str>().map(|s| s.to_string()))
            .unwrap_or_default();
        verdict(false, format!("panicked: {msg}"))
    })
}

fn main() -> ExitCode {
    let mut failed = 0;
    let mut report = |n: usize, name: &str, v: Verdict| {
        println!("criterion {n} {} {name}: {}", if v.pass { "PASS" } else { "FAIL" }, v.detail);
        failed += usize::from(!v.pass);
    };
    report(1, "rate identities", guarded(rate_identities));
    report(2, "closed-form rate", guarded(closed_form_rate));
    report(3, "gradient suite", guarded(gradient_suite));
    report(4, "clustering oracle", guarded(clustering_oracle));
    let run = catch_unwind(|| train_and_eval(""));
    match &run {
        Ok(run) => {
            report(5, "fixture A end to end", guarded(|| fixture_end_to_end(run)));
            report(6, "ablation ordering", guarded(|| ablation_ordering(run)));
            report(7, "expansion", guarded(|| expansion(run)));
        }
        Err(_) => {
            for (n, name) in [(5, "fixture A end to end"), (6, "ablation ordering"), (7, "expansion")] {
                report(n, name, verdict(false, "fixture A training panicked"));
            }
        }
    }
    report(8, "determinism and resume", guarded(determinism));
    report(9, "format fixtures", guarded(format_fixtures));
    if failed == 0 {
        ExitCode::SUCCESS
    } else {
        println!("{failed} criterion(s) failed");
        ExitCode::FAILURE
    }
}
