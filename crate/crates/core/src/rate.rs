//! Coding rate and rate-reduction measures with analytic feature gradients.
//!
//! All quantities are in nats. With `α = d / (N ε²)` the coding rate of a
//! `d × N` batch is `R(Z) = ½ log det(I + α Z Zᵀ)`; the membership-weighted
//! rate reduction subtracts the compression term
//! `Σ_j tr(Π_j)/(2N) · log det(I + d/(tr(Π_j) ε²) · Z Π_j Zᵀ)`.

use crate::error::{Error, Result};
use crate::numerics::{dot, norm, Cholesky, Mat};
use crate::scalar::Scalar;

/// Unit-norm tolerance for columns of a unit batch.
pub const UNIT_TOL: f64 = 1e-8;
/// Clusters lighter than this contribute nothing to the compression sum.
pub const ZERO_MASS: f64 = 1e-12;
pub const ZERO_NORM: f64 = 1e-12;

/// `d × N` feature matrix, samples as columns.
#[derive(Clone, Debug, PartialEq)]
pub struct FeatureBatch<T> {
    z: Mat<T>,
    unit: bool,
}

impl<T: Scalar> FeatureBatch<T> {
    pub fn new(z: Mat<T>) -> Result<Self> {
        if z.rows() == 0 || z.cols() == 0 {
            return Err(Error::dims("FeatureBatch", "d ≥ 1, N ≥ 1", format!("{:?}", z.shape())));
        }
        if !z.is_finite() {
            return Err(Error::NonFinite("FeatureBatch"));
        }
        Ok(Self { z, unit: false })
    }

    /// Batch whose columns must already lie on the unit sphere.
    pub fn unit(z: Mat<T>) -> Result<Self> {
        let mut b = Self::new(z)?;
        for j in 0..b.z.cols() {
            let n = b.z.col_norm(j);
            if (n - T::one()).abs() > T::lit(UNIT_TOL) {
                return Err(Error::NotUnitNorm {
                    column: j,
                    norm: n.as_f64(),
                });
            }
        }
        b.unit = true;
        Ok(b)
    }

    /// Projects every column onto the unit sphere.
    pub fn normalized(z: Mat<T>) -> Result<Self> {
        let mut z = z;
        for j in 0..z.cols() {
            let n = z.col_norm(j);
            if n < T::lit(ZERO_NORM) {
                return Err(Error::ZeroVector("FeatureBatch::normalized"));
            }
            for i in 0..z.rows() {
                z[(i, j)] /= n;
            }
        }
        let mut b = Self::new(z)?;
        b.unit = true;
        Ok(b)
    }

    pub fn matrix(&self) -> &Mat<T> {
        &self.z
    }

    pub fn into_matrix(self) -> Mat<T> {
        self.z
    }

    pub fn dim(&self) -> usize {
        self.z.rows()
    }

    pub fn len(&self) -> usize {
        self.z.cols()
    }

    pub fn is_empty(&self) -> bool {
        self.z.cols() == 0
    }

    pub fn is_unit(&self) -> bool {
        self.unit
    }

    pub fn column(&self, j: usize) -> Vec<T> {
        self.z.col(j)
    }
}

/// Soft assignment of `N` samples to `k` clusters; rows lie on the simplex.
#[derive(Clone, Debug, PartialEq)]
pub struct Membership<T> {
    p: Mat<T>,
}

impl<T: Scalar> Membership<T> {
    pub fn new(p: Mat<T>) -> Result<Self> {
        if p.rows() == 0 || p.cols() == 0 {
            return Err(Error::dims("Membership", "N ≥ 1, k ≥ 1", format!("{:?}", p.shape())));
        }
        if !p.is_finite() {
            return Err(Error::NonFinite("Membership"));
        }
        for i in 0..p.rows() {
            let row = p.row(i);
            let s: T = row.iter().copied().sum();
            if row.iter().any(|&v| v < T::zero()) || (s - T::one()).abs() > T::lit(1e-8) {
                return Err(Error::InvalidConfig(format!(
                    "membership row {i} is not a probability vector"
                )));
            }
        }
        Ok(Self { p })
    }

    /// One-hot membership from hard labels in `[0, k)`.
    pub fn one_hot(labels: &[usize], k: usize) -> Result<Self> {
        let mut p = Mat::zeros(labels.len(), k);
        for (i, &l) in labels.iter().enumerate() {
            if l >= k {
                return Err(Error::IndexOutOfRange { index: l, limit: k });
            }
            p[(i, l)] = T::one();
        }
        Self::new(p)
    }

    pub fn uniform(n: usize, k: usize) -> Self {
        let v = T::one() / T::from_usize_lossy(k);
        Self {
            p: Mat::from_fn(n, k, |_, _| v),
        }
    }

    pub fn matrix(&self) -> &Mat<T> {
        &self.p
    }

    pub fn samples(&self) -> usize {
        self.p.rows()
    }

    pub fn clusters(&self) -> usize {
        self.p.cols()
    }

    /// `tr(Π_j)` for each cluster.
    pub fn masses(&self) -> Vec<T> {
        (0..self.p.cols())
            .map(|j| (0..self.p.rows()).map(|i| self.p[(i, j)]).sum())
            .collect()
    }

    /// Row-wise argmax, ties to the lowest index.
    pub fn hard_labels(&self) -> Vec<usize> {
        (0..self.p.rows())
            .map(|i| {
                let row = self.p.row(i);
                let mut best = 0;
                for (j, &v) in row.iter().enumerate() {
                    if v > row[best] {
                        best = j;
                    }
                }
                best
            })
            .collect()
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct RateParams<T> {
    pub epsilon_sq: T,
}

impl<T: Scalar> RateParams<T> {
    pub fn new(epsilon_sq: T) -> Result<Self> {
        if !(epsilon_sq > T::zero()) || !epsilon_sq.is_finite() {
            return Err(Error::InvalidConfig(format!(
                "epsilon_sq must be positive, got {epsilon_sq}"
            )));
        }
        Ok(Self { epsilon_sq })
    }
}

impl<T: Scalar> Default for RateParams<T> {
    fn default() -> Self {
        Self {
            epsilon_sq: T::lit(0.2),
        }
    }
}

/// Terms of one rate-reduction evaluation, in nats.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct RateBreakdown<T> {
    pub expansion: T,
    pub compression: T,
    pub total: T,
}

/// Per-sample discrepancy used by the sample-wise constraints.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum DistanceMode {
    /// Rate reduction between the two single-column batches.
    ExactDr,
    /// `1 - cos(z, ẑ)`.
    Cosine,
    /// `‖z - ẑ‖²`.
    L2,
}

impl DistanceMode {
    pub fn name(self) -> &'static str {
        match self {
            DistanceMode::ExactDr => "exact_dr",
            DistanceMode::Cosine => "cosine",
            DistanceMode::L2 => "l2",
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        match s {
            "exact_dr" => Some(DistanceMode::ExactDr),
            "cosine" => Some(DistanceMode::Cosine),
            "l2" => Some(DistanceMode::L2),
            _ => None,
        }
    }
}

fn alpha<T: Scalar>(d: usize, n: T, p: &RateParams<T>) -> T {
    T::from_usize_lossy(d) / (n * p.epsilon_sq)
}

/// `½ log det(I + α Z Zᵀ)`, factored on whichever Gram side is smaller.
fn half_logdet_gram<T: Scalar>(z: &Mat<T>, a: T) -> Result<T> {
    let mut g = if z.rows() <= z.cols() {
        z.gram_rows()
    } else {
        z.gram_cols()
    };
    g = g.scale(a);
    g.add_diag(T::one());
    Ok(Cholesky::factor(&g, T::zero())?.logdet() * T::lit(0.5))
}

/// `∂/∂Z ½ log det(I + α Z Zᵀ) = α (I + α Z Zᵀ)⁻¹ Z`.
///
/// For `d > N` uses the push-through identity
/// `(I + α Z Zᵀ)⁻¹ Z = Z (I + α Zᵀ Z)⁻¹`.
fn half_logdet_gram_grad<T: Scalar>(z: &Mat<T>, a: T) -> Result<Mat<T>> {
    if z.rows() <= z.cols() {
        let mut g = z.gram_rows().scale(a);
        g.add_diag(T::one());
        Ok(Cholesky::factor(&g, T::zero())?.solve(z)?.scale(a))
    } else {
        let mut g = z.gram_cols().scale(a);
        g.add_diag(T::one());
        let x = Cholesky::factor(&g, T::zero())?.solve(&z.transpose())?;
        Ok(x.transpose().scale(a))
    }
}

/// `R(Z) = ½ log det(I + d/(N ε²) Z Zᵀ)`.
pub fn coding_rate<T: Scalar>(z: &FeatureBatch<T>, p: &RateParams<T>) -> Result<T> {
    let a = alpha(z.dim(), T::from_usize_lossy(z.len()), p);
    half_logdet_gram(z.matrix(), a)
}

/// `∂R/∂Z`.
pub fn coding_rate_grad<T: Scalar>(z: &FeatureBatch<T>, p: &RateParams<T>) -> Result<Mat<T>> {
    let a = alpha(z.dim(), T::from_usize_lossy(z.len()), p);
    half_logdet_gram_grad(z.matrix(), a)
}

/// `Z · diag(sqrt(w))`.
fn weighted_columns<T: Scalar>(z: &Mat<T>, w: &[T]) -> Mat<T> {
    let roots: Vec<T> = w.iter().map(|&v| v.max(T::zero()).sqrt()).collect();
    Mat::from_fn(z.rows(), z.cols(), |i, j| z[(i, j)] * roots[j])
}

fn check_membership<T: Scalar>(z: &FeatureBatch<T>, pi: &Membership<T>) -> Result<()> {
    if pi.samples() != z.len() {
        return Err(Error::dims("rate_reduction membership rows", z.len(), pi.samples()));
    }
    Ok(())
}

/// `ΔR(Z | Π) = R(Z) − Rᶜ(Z | Π)`.
pub fn rate_reduction<T: Scalar>(
    z: &FeatureBatch<T>,
    pi: &Membership<T>,
    p: &RateParams<T>,
) -> Result<RateBreakdown<T>> {
    check_membership(z, pi)?;
    let n = T::from_usize_lossy(z.len());
    let d = z.dim();
    let expansion = coding_rate(z, p)?;
    let mut compression = T::zero();
    for (j, mass) in pi.masses().into_iter().enumerate() {
        if mass < T::lit(ZERO_MASS) {
            continue;
        }
        let w = pi.matrix().col(j);
        let zw = weighted_columns(z.matrix(), &w);
        let half = half_logdet_gram(&zw, alpha(d, mass, p))?;
        compression += mass / n * half;
    }
    Ok(RateBreakdown {
        expansion,
        compression,
        total: expansion - compression,
    })
}

/// Gradient of `ΔR(Z | Π)` with respect to the entries of `P`, projected onto
/// the tangent space of the simplex (each row sums to zero).
///
/// For a cluster with mass `t`, `β = d/(t ε²)` and `M = I + β Z Π Zᵀ`, the
/// compression term's partial derivative in `P[i,j]` is
/// `log det M / (2N) + β (t zᵢᵀ M⁻¹ zᵢ − tr(M⁻¹ Z Π Zᵀ)) / (2N)`.
/// Empty clusters use the one-sided derivative `log(1 + d‖zᵢ‖²/ε²) / (2N)`.
pub fn rate_reduction_grad_membership<T: Scalar>(
    z: &FeatureBatch<T>,
    pi: &Membership<T>,
    p: &RateParams<T>,
) -> Result<Mat<T>> {
    check_membership(z, pi)?;
    let zm = z.matrix();
    let n_samples = z.len();
    let two_n = T::lit(2.0) * T::from_usize_lossy(n_samples);
    let d = z.dim();
    let k = pi.clusters();
    let mut grad = Mat::zeros(n_samples, k);
    for (j, mass) in pi.masses().into_iter().enumerate() {
        if mass < T::lit(ZERO_MASS) {
            let c = T::from_usize_lossy(d) / p.epsilon_sq;
            for i in 0..n_samples {
                let sq: T = (0..d).map(|r| zm[(r, i)] * zm[(r, i)]).sum();
                grad[(i, j)] = -(T::one() + c * sq).ln() / two_n;
            }
            continue;
        }
        let beta = alpha(d, mass, p);
        let w = pi.matrix().col(j);
        let zw = weighted_columns(zm, &w);
        let mut m = zw.gram_rows().scale(beta);
        m.add_diag(T::one());
        let chol = Cholesky::factor(&m, T::zero())?;
        let logdet = chol.logdet();
        let minv_z = chol.solve(zm)?;
        let q: Vec<T> = (0..n_samples)
            .map(|i| (0..d).map(|r| zm[(r, i)] * minv_z[(r, i)]).sum())
            .collect();
        let tr_minv_s: T = q.iter().zip(&w).map(|(&qi, &wi)| qi * wi).sum();
        for i in 0..n_samples {
            let dt = (logdet + beta * (mass * q[i] - tr_minv_s)) / two_n;
            grad[(i, j)] = -dt;
        }
    }
    let kk = T::from_usize_lossy(k);
    for i in 0..n_samples {
        let row = grad.row_mut(i);
        let mean = row.iter().copied().sum::<T>() / kk;
        for v in row.iter_mut() {
            *v -= mean;
        }
    }
    Ok(grad)
}

fn check_pair<T: Scalar>(z: &FeatureBatch<T>, zhat: &FeatureBatch<T>) -> Result<()> {
    if z.dim() != zhat.dim() {
        return Err(Error::dims("pair_rate_reduction feature dim", z.dim(), zhat.dim()));
    }
    Ok(())
}

/// `ΔR(Z, Ẑ) = R(Z ∪ Ẑ) − ½ (R(Z) + R(Ẑ))`.
pub fn pair_rate_reduction<T: Scalar>(
    z: &FeatureBatch<T>,
    zhat: &FeatureBatch<T>,
    p: &RateParams<T>,
) -> Result<T> {
    check_pair(z, zhat)?;
    let union = z.matrix().hcat(zhat.matrix())?;
    let au = alpha(z.dim(), T::from_usize_lossy(union.cols()), p);
    let ru = half_logdet_gram(&union, au)?;
    let half = T::lit(0.5);
    Ok(ru - half * (coding_rate(z, p)? + coding_rate(zhat, p)?))
}

/// Gradients of [`pair_rate_reduction`] with respect to `Z` and `Ẑ`.
pub fn pair_rate_reduction_grads<T: Scalar>(
    z: &FeatureBatch<T>,
    zhat: &FeatureBatch<T>,
    p: &RateParams<T>,
) -> Result<(Mat<T>, Mat<T>)> {
    check_pair(z, zhat)?;
    let n = z.len();
    let union = z.matrix().hcat(zhat.matrix())?;
    let au = alpha(z.dim(), T::from_usize_lossy(union.cols()), p);
    let gu = half_logdet_gram_grad(&union, au)?;
    let half = T::lit(0.5);
    let mut gz = gu.cols_range(0, n);
    gz.axpy(-half, &coding_rate_grad(z, p)?);
    let mut gzhat = gu.cols_range(n, union.cols());
    gzhat.axpy(-half, &coding_rate_grad(zhat, p)?);
    Ok((gz, gzhat))
}

fn check_vectors<T>(z: &[T], zhat: &[T]) -> Result<()> {
    if z.len() != zhat.len() || z.is_empty() {
        return Err(Error::dims("sample_distance", z.len(), zhat.len()));
    }
    Ok(())
}

fn single_column<T: Scalar>(v: &[T]) -> Result<FeatureBatch<T>> {
    FeatureBatch::new(Mat::from_vec(v.len(), 1, v.to_vec())?)
}

/// Distance between one feature and its counterpart.
pub fn sample_distance<T: Scalar>(
    z: &[T],
    zhat: &[T],
    mode: DistanceMode,
    p: &RateParams<T>,
) -> Result<T> {
    check_vectors(z, zhat)?;
    match mode {
        DistanceMode::ExactDr => {
            pair_rate_reduction(&single_column(z)?, &single_column(zhat)?, p)
        }
        DistanceMode::Cosine => {
            let (na, nb) = (norm(z), norm(zhat));
            if na < T::lit(ZERO_NORM) || nb < T::lit(ZERO_NORM) {
                return Err(Error::ZeroVector("cosine sample_distance"));
            }
            Ok(T::one() - dot(z, zhat) / (na * nb))
        }
        DistanceMode::L2 => Ok(z.iter().zip(zhat).map(|(&a, &b)| (a - b) * (a - b)).sum()),
    }
}

/// [`sample_distance`] together with its gradients in both arguments.
pub fn sample_distance_grad<T: Scalar>(
    z: &[T],
    zhat: &[T],
    mode: DistanceMode,
    p: &RateParams<T>,
) -> Result<(T, Vec<T>, Vec<T>)> {
    check_vectors(z, zhat)?;
    match mode {
        DistanceMode::ExactDr => {
            let (a, b) = (single_column(z)?, single_column(zhat)?);
            let v = pair_rate_reduction(&a, &b, p)?;
            let (ga, gb) = pair_rate_reduction_grads(&a, &b, p)?;
            Ok((v, ga.into_vec(), gb.into_vec()))
        }
        DistanceMode::Cosine => {
            let (na, nb) = (norm(z), norm(zhat));
            if na < T::lit(ZERO_NORM) || nb < T::lit(ZERO_NORM) {
                return Err(Error::ZeroVector("cosine sample_distance"));
            }
            let ab = dot(z, zhat);
            let cos = ab / (na * nb);
            let ga = z
                .iter()
                .zip(zhat)
                .map(|(&a, &b)| -(b / (na * nb) - cos * a / (na * na)))
                .collect();
            let gb = z
                .iter()
                .zip(zhat)
                .map(|(&a, &b)| -(a / (na * nb) - cos * b / (nb * nb)))
                .collect();
            Ok((T::one() - cos, ga, gb))
        }
        DistanceMode::L2 => {
            let diff: Vec<T> = z.iter().zip(zhat).map(|(&a, &b)| a - b).collect();
            let v = diff.iter().map(|&x| x * x).sum();
            let two = T::lit(2.0);
            let ga = diff.iter().map(|&x| two * x).collect();
            let gb = diff.iter().map(|&x| -two * x).collect();
            Ok((v, ga, gb))
        }
    }
}

/// Mean column-wise distance between `a[:, pairs[i].0]` and `b[:, pairs[i].1]`
/// and its gradients in `a` and `b`.
pub fn mean_paired_distance<T: Scalar>(
    a: &Mat<T>,
    b: &Mat<T>,
    pairs: &[(usize, usize)],
    mode: DistanceMode,
    p: &RateParams<T>,
) -> Result<(T, Mat<T>, Mat<T>)> {
    if a.rows() != b.rows() {
        return Err(Error::dims("mean_paired_distance", a.rows(), b.rows()));
    }
    if pairs.is_empty() {
        return Err(Error::dims("mean_paired_distance pairs", "≥ 1", 0));
    }
    let scale = T::one() / T::from_usize_lossy(pairs.len());
    let mut ga = Mat::zeros(a.rows(), a.cols());
    let mut gb = Mat::zeros(b.rows(), b.cols());
    let mut total = T::zero();
    for &(i, j) in pairs {
        let (v, da, db) = sample_distance_grad(&a.col(i), &b.col(j), mode, p)?;
        total += v;
        for r in 0..a.rows() {
            ga[(r, i)] += scale * da[r];
            gb[(r, j)] += scale * db[r];
        }
    }
    Ok((total * scale, ga, gb))
}
