//! Post-hoc clustering of frozen features by ascending the rate reduction
//! over the parameters of a softmax membership head.

use std::fmt;

use crate::error::{Error, Result};
use crate::model::Activation;
use crate::numerics::{Rng, Stream};
use crate::rate::{rate_reduction, rate_reduction_grad_membership};
use crate::trainer::fmt_f64;
use crate::{AdamParams, AdamState, Features, Matrix, Membership, Network, RateParams};

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct ClusterConfig {
    pub steps: usize,
    /// Samples per step; `0` or anything ≥ N means full batch.
    pub batch_size: usize,
    pub adam: AdamParams,
    pub rate: RateParams,
    pub seed: u64,
}

impl Default for ClusterConfig {
    fn default() -> Self {
        Self {
            steps: 1000,
            batch_size: 0,
            adam: AdamParams::default(),
            rate: RateParams::default(),
            seed: 0,
        }
    }
}

/// Non-fatal problems with a fitted clustering.
#[derive(Clone, Debug, PartialEq)]
pub enum ClusterWarning {
    /// A cluster ended with soft mass below `N / (10 k)`.
    Degenerate { cluster: usize, mass: f64, threshold: f64 },
    /// `k = 1`: every sample shares the only cluster and the objective is 0.
    SingleCluster,
}

impl fmt::Display for ClusterWarning {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            ClusterWarning::Degenerate { cluster, mass, threshold } => write!(
                f,
                "DegenerateClustering: cluster {cluster} has mass {mass:.4} < {threshold:.4}"
            ),
            ClusterWarning::SingleCluster => write!(f, "DegenerateClustering: k = 1, clustering is trivial"),
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct ClusterResult {
    pub membership: Membership,
    pub hard_labels: Vec<usize>,
    pub k: usize,
    /// Objective before each update, on that step's batch.
    pub trace: Vec<f64>,
    /// Full-data objective of the returned head.
    pub objective: f64,
    pub head: Network,
    pub warnings: Vec<ClusterWarning>,
}

/// Soft membership `softmax(head(zᵢ))` for every sample.
pub fn assign(head: &Network, z: &Features) -> Result<Membership> {
    if head.input_dim() != z.dim() {
        return Err(Error::dims("cluster head input", head.input_dim(), z.dim()));
    }
    if head.final_activation() != Activation::Softmax {
        return Err(Error::InvalidConfig("cluster head must end in softmax".into()));
    }
    Membership::new(head.predict(z.matrix())?.transpose())
}

fn objective_and_grads(head: &Network, z: &Features, p: &RateParams) -> Result<(f64, crate::NetworkGrads)> {
    let (out, tape) = head.forward(z.matrix())?;
    let pi = Membership::new(out.transpose())?;
    let value = rate_reduction(z, &pi, p)?.total;
    let grad_p = rate_reduction_grad_membership(z, &pi, p)?;
    let (grads, _) = head.backward(tape, &grad_p.transpose())?;
    Ok((value, grads))
}

fn full_objective(head: &Network, z: &Features, p: &RateParams) -> Result<f64> {
    Ok(rate_reduction(z, &assign(head, z)?, p)?.total)
}

/// Adam ascent of `ΔR(Z | softmax(head(Z)))` over the head parameters;
/// returns the best iterate seen.
pub fn fit_cluster_head(z: &Features, k: usize, mut head: Network, cfg: &ClusterConfig) -> Result<ClusterResult> {
    if !z.matrix().is_finite() {
        return Err(Error::NonFinite("cluster features"));
    }
    if head.output_dim() != k {
        return Err(Error::dims("cluster head output", k, head.output_dim()));
    }
    let n = z.len();
    if k < 2 {
        let membership = assign(&head, z)?;
        return Ok(ClusterResult {
            hard_labels: membership.hard_labels(),
            objective: rate_reduction(z, &membership, &cfg.rate)?.total,
            membership,
            k,
            trace: vec![0.0; cfg.steps],
            head,
            warnings: vec![ClusterWarning::SingleCluster],
        });
    }
    let full = cfg.batch_size == 0 || cfg.batch_size >= n;
    let b = if full { n } else { cfg.batch_size };
    let per_epoch = n / b;
    let mut order: Vec<usize> = Vec::new();
    let mut opt = AdamState::new(&head);
    let mut trace = Vec::with_capacity(cfg.steps);
    let mut best: Option<(f64, Network)> = None;
    for step in 0..cfg.steps {
        let (value, grads) = if full {
            objective_and_grads(&head, z, &cfg.rate)?
        } else {
            let (epoch, pos) = (step / per_epoch, step % per_epoch);
            if pos == 0 {
                order = Rng::stream(cfg.seed, Stream::Cluster, epoch as u64).permutation(n);
            }
            let zb = Features::new(z.matrix().select_cols(&order[pos * b..(pos + 1) * b]))?;
            objective_and_grads(&head, &zb, &cfg.rate)?
        };
        if !value.is_finite() || !grads.is_finite() {
            return Err(Error::NonFiniteLoss {
                iteration: step as u64,
                detail: format!("cluster objective {value}"),
            });
        }
        trace.push(value);
        if full && best.as_ref().is_none_or(|(v, _)| value > *v) {
            best = Some((value, head.clone()));
        }
        opt.apply(&mut head, &grads, &cfg.adam, true)?;
    }
    let last = full_objective(&head, z, &cfg.rate)?;
    let (objective, head) = match best {
        Some((v, h)) if v >= last => (v, h),
        _ => (last, head),
    };
    let membership = assign(&head, z)?;
    let threshold = n as f64 / (10.0 * k as f64);
    let warnings = membership
        .masses()
        .into_iter()
        .enumerate()
        .filter(|&(_, m)| m < threshold)
        .map(|(cluster, mass)| ClusterWarning::Degenerate { cluster, mass, threshold })
        .collect();
    Ok(ClusterResult {
        hard_labels: membership.hard_labels(),
        membership,
        k,
        trace,
        objective,
        head,
        warnings,
    })
}

/// Fits every head in `heads` and keeps the result with the largest
/// objective (the first on ties).
pub fn fit_best_cluster_head(
    z: &Features,
    k: usize,
    heads: impl IntoIterator<Item = Network>,
    cfg: &ClusterConfig,
) -> Result<ClusterResult> {
    let mut best: Option<ClusterResult> = None;
    for head in heads {
        let r = fit_cluster_head(z, k, head, cfg)?;
        if best.as_ref().is_none_or(|b| r.objective > b.objective) {
            best = Some(r);
        }
    }
    best.ok_or_else(|| Error::InvalidConfig("at least one cluster head is required".into()))
}

/// Largest `ΔR(Z | Π)` over all `kᴺ` hard memberships and its labels.
/// Exponential; for small oracle instances only.
pub fn exhaustive_hard_maximum(z: &Features, k: usize, p: &RateParams) -> Result<(f64, Vec<usize>)> {
    let n = z.len();
    let total = (k as u64).checked_pow(n as u32).filter(|&t| t <= 1 << 22).ok_or_else(|| {
        Error::InvalidConfig(format!("{k}^{n} memberships is too many to enumerate"))
    })?;
    let mut best = (f64::NEG_INFINITY, vec![0; n]);
    let mut labels = vec![0usize; n];
    for code in 0..total {
        let mut c = code;
        for l in labels.iter_mut() {
            *l = (c % k as u64) as usize;
            c /= k as u64;
        }
        let v = rate_reduction(z, &Membership::one_hot(&labels, k)?, p)?.total;
        if v > best.0 {
            best = (v, labels.clone());
        }
    }
    Ok(best)
}

/// `sample,label,p0,…,p{k-1}` with one row per sample.
pub fn cluster_csv(result: &ClusterResult) -> String {
    let k = result.k;
    let mut out = String::from("sample,label");
    for j in 0..k {
        out.push_str(&format!(",p{j}"));
    }
    out.push('\n');
    let p = result.membership.matrix();
    for (i, &l) in result.hard_labels.iter().enumerate() {
        out.push_str(&format!("{i},{l}"));
        for j in 0..k {
            out.push(',');
            out.push_str(&fmt_f64(p[(i, j)]));
        }
        out.push('\n');
    }
    out
}

/// Hard labels and soft memberships from [`cluster_csv`] text.
pub fn parse_cluster_csv(text: &str) -> Result<(Vec<usize>, Membership)> {
    let bad = |line: usize, msg: &str| Error::format("cluster CSV", format!("line {line}: {msg}"));
    let mut lines = text.lines();
    let header = lines.next().ok_or_else(|| bad(1, "empty file"))?;
    let k = header.split(',').count().checked_sub(2).filter(|&k| k >= 1).ok_or_else(|| bad(1, "no probability columns"))?;
    let mut labels = Vec::new();
    let mut probs = Vec::new();
    for (i, line) in lines.enumerate() {
        let fields: Vec<&str> = line.split(',').collect();
        if fields.len() != k + 2 {
            return Err(bad(i + 2, "wrong field count"));
        }
        if fields[0].parse::<usize>().ok() != Some(i) {
            return Err(bad(i + 2, "sample index out of order"));
        }
        labels.push(fields[1].parse::<usize>().map_err(|_| bad(i + 2, "bad label"))?);
        for f in &fields[2..] {
            probs.push(f.parse::<f64>().map_err(|_| bad(i + 2, "bad probability"))?);
        }
    }
    let membership = Membership::new(Matrix::from_vec(labels.len(), k, probs)?)?;
    Ok((labels, membership))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn zero_head_is_uniform() {
        let z = Features::normalized(Matrix::from_fn(3, 5, |i, j| (i + 2 * j) as f64 + 1.0)).unwrap();
        let mut head = Network::cluster_head(3, 4, &mut Rng::new(0)).unwrap();
        for l in head.layers_mut() {
            l.weight = Matrix::zeros(l.weight.rows(), l.weight.cols());
        }
        let m = assign(&head, &z).unwrap();
        assert!(m.matrix().as_slice().iter().all(|&v| (v - 0.25).abs() < 1e-15));
    }

    #[test]
    fn single_cluster_is_trivial() {
        let z = Features::normalized(Matrix::from_fn(3, 6, |i, j| ((i * 7 + j * 3) % 5) as f64 + 0.5)).unwrap();
        let head = Network::cluster_head(3, 1, &mut Rng::new(1)).unwrap();
        let r = fit_cluster_head(&z, 1, head, &ClusterConfig::default()).unwrap();
        assert_eq!(r.objective, 0.0);
        assert!(r.hard_labels.iter().all(|&l| l == 0));
        assert_eq!(r.warnings, vec![ClusterWarning::SingleCluster]);
    }

    #[test]
    fn csv_round_trip() {
        let z = Features::normalized(Matrix::from_fn(2, 4, |i, j| if (i + j) % 2 == 0 { 1.0 } else { 0.2 })).unwrap();
        let head = Network::cluster_head(2, 2, &mut Rng::new(2)).unwrap();
        let cfg = ClusterConfig {
            steps: 5,
            ..ClusterConfig::default()
        };
        let r = fit_cluster_head(&z, 2, head, &cfg).unwrap();
        let (labels, m) = parse_cluster_csv(&cluster_csv(&r)).unwrap();
        assert_eq!(labels, r.hard_labels);
        assert_eq!(&m, &r.membership);
    }
}
