//! Per-cluster principal components of features and decoding of points
//! sampled along them.

use std::fmt::Write as _;

use crate::data::{encode_pgm, encode_ppm, signed_unit_to_byte, ImageShape};
use crate::error::{Error, Result};
use crate::numerics::{sym_eig, Rng};
use crate::trainer::fmt_f64;
use crate::{Features, Matrix, Network};

/// Mean, leading principal directions and their standard deviations for one
/// cluster of features.
#[derive(Clone, Debug, PartialEq)]
pub struct ClusterModel {
    pub cluster: usize,
    pub mean: Vec<f64>,
    /// `d × r`, orthonormal columns.
    pub directions: Matrix,
    /// Square roots of the leading covariance eigenvalues, descending.
    pub singular_values: Vec<f64>,
    /// Sum of the covariance eigenvalues that were not kept.
    pub residual: f64,
    pub count: usize,
}

impl ClusterModel {
    pub fn rank(&self) -> usize {
        self.directions.cols()
    }

    /// Per-coordinate standard deviation of the isotropic noise: the
    /// discarded variance spread evenly over the discarded dimensions.
    pub fn residual_std(&self) -> f64 {
        let rest = self.mean.len() - self.rank();
        if rest == 0 { 0.0 } else { (self.residual / rest as f64).sqrt() }
    }
}

/// PCA of the columns of `members` (covariance normalised by the member
/// count), keeping `min(r, d, count)` components.
pub fn fit_cluster_model(cluster: usize, members: &Matrix, r: usize) -> Result<ClusterModel> {
    if r == 0 {
        return Err(Error::InvalidConfig("principal component count must be ≥ 1".into()));
    }
    let (d, m) = members.shape();
    if m == 0 {
        return Err(Error::EmptyCluster(cluster));
    }
    // Shifted by the first member so identical members give it back exactly.
    let mean: Vec<f64> = (0..d)
        .map(|i| {
            let row = members.row(i);
            row[0] + row.iter().map(|&v| v - row[0]).sum::<f64>() / m as f64
        })
        .collect();
    let centered = Matrix::from_fn(d, m, |i, j| members[(i, j)] - mean[i]);
    let cov = centered.gram_rows().scale(1.0 / m as f64);
    let eig = sym_eig(&cov)?;
    let keep = r.min(d).min(m);
    let order: Vec<usize> = (0..d).rev().collect();
    let lambda: Vec<f64> = order.iter().map(|&i| eig.values[i].max(0.0)).collect();
    let directions = eig.vectors.select_cols(&order[..keep]);
    Ok(ClusterModel {
        cluster,
        mean,
        directions,
        singular_values: lambda[..keep].iter().map(|l| l.sqrt()).collect(),
        residual: lambda[keep..].iter().sum(),
        count: m,
    })
}

/// One model per cluster id in `0..k`; clusters without members give
/// `Err(EmptyCluster)`.
pub fn fit_cluster_models(z: &Features, labels: &[usize], k: usize, r: usize) -> Result<Vec<Result<ClusterModel>>> {
    if labels.len() != z.len() {
        return Err(Error::LengthMismatch(labels.len(), z.len()));
    }
    if let Some(&bad) = labels.iter().find(|&&l| l >= k) {
        return Err(Error::IndexOutOfRange { index: bad, limit: k });
    }
    Ok((0..k)
        .map(|j| {
            let idx: Vec<usize> = (0..labels.len()).filter(|&i| labels[i] == j).collect();
            fit_cluster_model(j, &z.matrix().select_cols(&idx), r)
        })
        .collect())
}

/// `m` evenly spaced values on `[−2, 2]`; `{0}` when `m = 1`.
pub fn t_grid(m: usize) -> Vec<f64> {
    match m {
        0 => Vec::new(),
        1 => vec![0.0],
        _ => (0..m).map(|i| -2.0 + 4.0 * i as f64 / (m - 1) as f64).collect(),
    }
}

/// `normalize(μ + t·s_c·u_c + noise_scale·ν)` for `t` on [`t_grid`], with
/// `ν ~ N(0, σ² I)` and `σ` the model's residual standard deviation.
pub fn sample_features(rng: &mut Rng, model: &ClusterModel, c: usize, m: usize, noise_scale: f64) -> Result<Features> {
    if c >= model.rank() {
        return Err(Error::IndexOutOfRange {
            index: c,
            limit: model.rank(),
        });
    }
    if m == 0 {
        return Err(Error::InvalidConfig("sample count must be ≥ 1".into()));
    }
    let d = model.mean.len();
    let s = model.singular_values[c];
    let sigma = noise_scale * model.residual_std();
    let mut z = Matrix::zeros(d, m);
    for (j, t) in t_grid(m).into_iter().enumerate() {
        for i in 0..d {
            let noise = if sigma > 0.0 { sigma * rng.normal() } else { 0.0 };
            z[(i, j)] = model.mean[i] + t * s * model.directions[(i, c)] + noise;
        }
    }
    Features::normalized(z)
}

/// One row of a decoded grid: a principal component of one cluster.
#[derive(Clone, Debug, PartialEq)]
pub struct GridRow {
    pub cluster: usize,
    pub component: usize,
    pub t: Vec<f64>,
}

/// Decoded samples laid out row-major: row `r`, column `c` is sample
/// `r·columns + c`.
#[derive(Clone, Debug, PartialEq)]
pub struct Grid {
    pub rows: Vec<GridRow>,
    pub columns: usize,
    pub features: Matrix,
    pub samples: Matrix,
}

impl Grid {
    /// Cluster id of every sample, in sample order.
    pub fn sample_clusters(&self) -> Vec<usize> {
        self.rows.iter().flat_map(|r| std::iter::repeat_n(r.cluster, self.columns)).collect()
    }
}

/// Samples `samples_per_component` features along each of the first
/// `components` directions of every model and decodes them. Clusters are
/// laid out in model order, components as rows, `t` as columns.
pub fn decode_grid(
    rng: &mut Rng,
    decoder: &Network,
    models: &[ClusterModel],
    components: usize,
    samples_per_component: usize,
    noise_scale: f64,
) -> Result<Grid> {
    if components == 0 || samples_per_component == 0 {
        return Err(Error::InvalidConfig("components and samples must be ≥ 1".into()));
    }
    let mut rows = Vec::new();
    let mut cols = Vec::new();
    for model in models {
        for c in 0..components.min(model.rank()) {
            let z = sample_features(rng, model, c, samples_per_component, noise_scale)?;
            cols.extend((0..z.len()).map(|j| z.column(j)));
            rows.push(GridRow {
                cluster: model.cluster,
                component: c,
                t: t_grid(samples_per_component),
            });
        }
    }
    if rows.is_empty() {
        return Err(Error::InvalidConfig("no cluster models to decode".into()));
    }
    let features = Matrix::from_columns(&cols)?;
    let samples = decoder.predict(&features)?;
    Ok(Grid {
        rows,
        columns: samples_per_component,
        features,
        samples,
    })
}

/// `row,cluster,component,t0,…` with one line per grid row.
pub fn manifest_csv(grid: &Grid) -> String {
    let mut out = String::from("row,cluster,component");
    for c in 0..grid.columns {
        let _ = write!(out, ",t{c}");
    }
    out.push('\n');
    for (i, r) in grid.rows.iter().enumerate() {
        let _ = write!(out, "{i},{},{}", r.cluster, r.component);
        for t in &r.t {
            let _ = write!(out, ",{}", fmt_f64(*t));
        }
        out.push('\n');
    }
    out
}

/// Tiles every decoded sample as an image; PGM for one channel, PPM for three.
pub fn tile_sheet(grid: &Grid, shape: ImageShape) -> Result<Vec<u8>> {
    if grid.samples.rows() != shape.len() {
        return Err(Error::dims("tile image size", shape.len(), grid.samples.rows()));
    }
    let (h, w, ch) = (shape.height, shape.width, shape.channels);
    let (width, height) = (grid.columns * w, grid.rows.len() * h);
    let out_ch = if ch == 1 { 1 } else { 3 };
    if ch != 1 && ch != 3 {
        return Err(Error::InvalidConfig(format!("cannot tile {ch}-channel images")));
    }
    let mut pixels = vec![0u8; width * height * out_ch];
    for s in 0..grid.samples.cols() {
        let (gr, gc) = (s / grid.columns, s % grid.columns);
        for c in 0..ch {
            for y in 0..h {
                for x in 0..w {
                    let v = grid.samples[(c * h * w + y * w + x, s)];
                    let (py, px) = (gr * h + y, gc * w + x);
                    pixels[(py * width + px) * out_ch + c] = signed_unit_to_byte(v);
                }
            }
        }
    }
    if ch == 1 { encode_pgm(width, height, &pixels) } else { encode_ppm(width, height, &pixels) }
}
