use crate::data::Dataset;
use crate::error::{Error, Result};
use crate::numerics::{dot, Rng};
use crate::Matrix;

/// Union of `k` mutually orthogonal linear subspaces of `R^D`.
#[derive(Clone, Debug, PartialEq)]
pub struct SubspaceMixture {
    /// `D × per_class_dim` orthonormal basis per class.
    pub bases: Vec<Matrix>,
}

/// Orthonormal columns spanning the same space as `cols` (Gram-Schmidt with
/// one re-orthogonalisation pass).
fn orthonormalize(mut cols: Vec<Vec<f64>>) -> Result<Vec<Vec<f64>>> {
    for j in 0..cols.len() {
        for _ in 0..2 {
            for i in 0..j {
                let proj = dot(&cols[j], &cols[i]);
                let (head, tail) = cols.split_at_mut(j);
                for (a, b) in tail[0].iter_mut().zip(&head[i]) {
                    *a -= proj * b;
                }
            }
        }
        let n = dot(&cols[j], &cols[j]).sqrt();
        if n < 1e-10 {
            return Err(Error::InvalidConfig("degenerate Gaussian draw".into()));
        }
        cols[j].iter_mut().for_each(|v| *v /= n);
    }
    Ok(cols)
}

impl SubspaceMixture {
    pub fn new(rng: &mut Rng, ambient: usize, classes: usize, per_class_dim: usize) -> Result<Self> {
        if classes == 0 || per_class_dim == 0 || per_class_dim * classes > ambient {
            return Err(Error::InvalidConfig(format!(
                "need 1 ≤ k·per_class_dim ≤ D, got k={classes}, per_class_dim={per_class_dim}, D={ambient}"
            )));
        }
        let gaussian: Vec<Vec<f64>> = (0..classes * per_class_dim)
            .map(|_| (0..ambient).map(|_| rng.normal()).collect())
            .collect();
        let q = orthonormalize(gaussian)?;
        let bases = q
            .chunks(per_class_dim)
            .map(|c| Matrix::from_columns(c))
            .collect::<Result<_>>()?;
        Ok(Self { bases })
    }

    pub fn ambient_dim(&self) -> usize {
        self.bases[0].rows()
    }

    pub fn classes(&self) -> usize {
        self.bases.len()
    }

    /// Draws `per_class` unit-norm samples per class: Gaussian coefficients in
    /// the class basis plus isotropic noise, class-major order.
    pub fn sample(&self, rng: &mut Rng, per_class: usize, noise_sigma: f64) -> Result<Dataset> {
        if per_class == 0 {
            return Err(Error::InvalidConfig("N_per_class must be at least 1".into()));
        }
        if !(noise_sigma >= 0.0) || !noise_sigma.is_finite() {
            return Err(Error::InvalidConfig(format!("noise_sigma must be ≥ 0, got {noise_sigma}")));
        }
        let d = self.ambient_dim();
        let mut columns = Vec::with_capacity(per_class * self.classes());
        let mut labels = Vec::with_capacity(per_class * self.classes());
        for (class, basis) in self.bases.iter().enumerate() {
            let mut drawn = 0;
            while drawn < per_class {
                let coeffs: Vec<f64> = (0..basis.cols()).map(|_| rng.normal()).collect();
                let mut x: Vec<f64> = (0..d)
                    .map(|i| (0..basis.cols()).map(|c| basis[(i, c)] * coeffs[c]).sum())
                    .collect();
                for v in x.iter_mut() {
                    *v += noise_sigma * rng.normal();
                }
                let n = dot(&x, &x).sqrt();
                if n < 1e-12 {
                    continue;
                }
                x.iter_mut().for_each(|v| *v /= n);
                columns.push(x);
                labels.push(class);
                drawn += 1;
            }
        }
        let description = format!(
            "subspace mixture: D={d}, k={}, per_class_dim={}, per_class={per_class}, noise_sigma={noise_sigma}",
            self.classes(),
            self.bases[0].cols()
        );
        Dataset::new(Matrix::from_columns(&columns)?, Some(labels), self.classes(), description)
    }
}

/// Draws class bases and samples in one go.
pub fn gen_subspace_mixture(
    rng: &mut Rng,
    ambient: usize,
    classes: usize,
    per_class_dim: usize,
    per_class: usize,
    noise_sigma: f64,
) -> Result<(Dataset, SubspaceMixture)> {
    let mix = SubspaceMixture::new(rng, ambient, classes, per_class_dim)?;
    let data = mix.sample(rng, per_class, noise_sigma)?;
    Ok((data, mix))
}
