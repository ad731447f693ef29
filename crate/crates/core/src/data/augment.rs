use crate::data::ImageShape;
use crate::error::{Error, Result};
use crate::numerics::{dot, Rng};
use crate::Matrix;

/// One transformation in the augmentation pipeline.
#[derive(Clone, Debug, PartialEq)]
pub enum Augmentation {
    /// Perturbs the sample inside its local span. With a class basis, the
    /// in-subspace coefficients `c` become `c + strength·‖c‖/√p·g`; without
    /// one, the sample is rescaled by `1 + strength·g` and receives ambient
    /// noise of relative size `0.1·strength`. With `sign_flip` the in-span
    /// component is negated with probability ½. The out-of-span residual is
    /// left untouched.
    SubspaceJitter { strength: f64, sign_flip: bool },
    /// Rotates a random coordinate plane of the class basis by an angle drawn
    /// uniformly from `[-max_angle, max_angle]`. Requires a basis of rank ≥ 2.
    RotationInClassPlane { max_angle: f64 },
    /// `x + sigma·ν`, `ν ~ N(0, I)`.
    AdditiveNoise { sigma: f64 },
    /// Reflect-pad by `pad` pixels and crop back at a random offset, flip
    /// horizontally with probability `flip_prob`, then add a per-channel
    /// brightness offset drawn from `[-brightness, brightness]` and clamp to
    /// `[-1, 1]`.
    PixelCropFlip {
        shape: ImageShape,
        pad: usize,
        flip_prob: f64,
        brightness: f64,
    },
}

impl Augmentation {
    fn validate(&self, dim: usize) -> Result<()> {
        let bad = |m: String| Err(Error::InvalidConfig(m));
        match *self {
            Augmentation::SubspaceJitter { strength, .. } if !(0.0..=2.0).contains(&strength) => {
                bad(format!("subspace_jitter strength {strength} outside [0, 2]"))
            }
            Augmentation::RotationInClassPlane { max_angle }
                if !(0.0..=std::f64::consts::PI).contains(&max_angle) =>
            {
                bad(format!("rotation max_angle {max_angle} outside [0, π]"))
            }
            Augmentation::AdditiveNoise { sigma } if !(0.0..=1.0).contains(&sigma) => {
                bad(format!("additive_noise sigma {sigma} outside [0, 1]"))
            }
            Augmentation::PixelCropFlip {
                shape,
                pad,
                flip_prob,
                brightness,
            } => {
                if shape.len() != dim {
                    bad(format!("image shape {shape:?} does not match dimension {dim}"))
                } else if pad > 0 && (pad >= shape.height || pad >= shape.width) {
                    bad(format!("pad {pad} too large for {shape:?}"))
                } else if !(0.0..=1.0).contains(&flip_prob) || !(0.0..=1.0).contains(&brightness) {
                    bad("flip_prob and brightness must lie in [0, 1]".into())
                } else {
                    Ok(())
                }
            }
            _ => Ok(()),
        }
    }
}

/// The operator τ: a sequence of transformations applied in order.
#[derive(Clone, Debug, PartialEq)]
pub struct AugmentationSpec {
    pub ops: Vec<Augmentation>,
    /// Augmented copies per sample per batch.
    pub count: usize,
    /// Project the result back to the unit sphere.
    pub renormalize: bool,
}

impl AugmentationSpec {
    /// Synthetic-vector default: sign-flipping subspace jitter followed by
    /// small additive noise.
    pub fn synthetic_default() -> Self {
        Self {
            ops: vec![
                Augmentation::SubspaceJitter {
                    strength: 0.3,
                    sign_flip: true,
                },
                Augmentation::AdditiveNoise { sigma: 0.02 },
            ],
            count: 1,
            renormalize: true,
        }
    }

    /// Image default: 4-pixel reflect-pad crop, horizontal flip, brightness.
    pub fn image_default(shape: ImageShape) -> Self {
        Self {
            ops: vec![Augmentation::PixelCropFlip {
                shape,
                pad: 4,
                flip_prob: 0.5,
                brightness: 0.1,
            }],
            count: 1,
            renormalize: false,
        }
    }

    pub fn validate(&self, dim: usize) -> Result<()> {
        if self.count == 0 {
            return Err(Error::InvalidConfig("augmentation count must be ≥ 1".into()));
        }
        self.ops.iter().try_for_each(|op| op.validate(dim))
    }
}

fn project(basis: &Matrix, x: &[f64]) -> Vec<f64> {
    (0..basis.cols())
        .map(|c| (0..basis.rows()).map(|i| basis[(i, c)] * x[i]).sum())
        .collect()
}

fn lift(basis: &Matrix, coeffs: &[f64]) -> Vec<f64> {
    (0..basis.rows())
        .map(|i| coeffs.iter().enumerate().map(|(c, &v)| basis[(i, c)] * v).sum())
        .collect()
}

fn reflect(i: isize, n: usize) -> usize {
    let n = n as isize;
    if n == 1 {
        return 0;
    }
    let period = 2 * (n - 1);
    let mut m = i.rem_euclid(period);
    if m >= n {
        m = period - m;
    }
    m as usize
}

fn apply(rng: &mut Rng, x: &mut Vec<f64>, op: &Augmentation, basis: Option<&Matrix>) -> Result<()> {
    match *op {
        Augmentation::SubspaceJitter { strength, sign_flip } => {
            let flip = sign_flip && rng.bernoulli(0.5);
            let sign = if flip { -1.0 } else { 1.0 };
            match basis {
                Some(b) => {
                    if b.rows() != x.len() {
                        return Err(Error::dims("subspace_jitter basis", x.len(), b.rows()));
                    }
                    let c = project(b, x);
                    let inside = lift(b, &c);
                    let cn = dot(&c, &c).sqrt();
                    let step = strength * cn / (c.len() as f64).sqrt();
                    let jittered: Vec<f64> = c.iter().map(|&v| sign * (v + step * rng.normal())).collect();
                    let moved = lift(b, &jittered);
                    for ((xi, &old), &new) in x.iter_mut().zip(&inside).zip(&moved) {
                        *xi += new - old;
                    }
                }
                None => {
                    let n = dot(x, x).sqrt();
                    let scale = (1.0 + strength * rng.normal()).abs().max(0.1) * sign;
                    let ambient = 0.1 * strength * n / (x.len() as f64).sqrt();
                    for v in x.iter_mut() {
                        *v = scale * *v + ambient * rng.normal();
                    }
                }
            }
        }
        Augmentation::RotationInClassPlane { max_angle } => {
            let b = basis.ok_or_else(|| {
                Error::InvalidConfig("rotation_in_class_plane needs a class basis".into())
            })?;
            if b.cols() < 2 {
                return Err(Error::InvalidConfig(
                    "rotation_in_class_plane needs a class basis of rank ≥ 2".into(),
                ));
            }
            if b.rows() != x.len() {
                return Err(Error::dims("rotation basis", x.len(), b.rows()));
            }
            let p = rng.below(b.cols());
            let mut q = rng.below(b.cols() - 1);
            if q >= p {
                q += 1;
            }
            let theta = rng.uniform_range(-max_angle, max_angle);
            let c = project(b, x);
            let mut r = c.clone();
            r[p] = theta.cos() * c[p] - theta.sin() * c[q];
            r[q] = theta.sin() * c[p] + theta.cos() * c[q];
            let (old, new) = (lift(b, &c), lift(b, &r));
            for ((xi, &o), &n) in x.iter_mut().zip(&old).zip(&new) {
                *xi += n - o;
            }
        }
        Augmentation::AdditiveNoise { sigma } => {
            if sigma > 0.0 {
                for v in x.iter_mut() {
                    *v += sigma * rng.normal();
                }
            }
        }
        Augmentation::PixelCropFlip {
            shape,
            pad,
            flip_prob,
            brightness,
        } => {
            let (ch, h, w) = (shape.channels, shape.height, shape.width);
            let dy = if pad > 0 { rng.below(2 * pad + 1) as isize - pad as isize } else { 0 };
            let dx = if pad > 0 { rng.below(2 * pad + 1) as isize - pad as isize } else { 0 };
            let flip = flip_prob >= 1.0 || (flip_prob > 0.0 && rng.bernoulli(flip_prob));
            let offsets: Vec<f64> = (0..ch)
                .map(|_| if brightness > 0.0 { rng.uniform_range(-brightness, brightness) } else { 0.0 })
                .collect();
            let src = x.clone();
            for c in 0..ch {
                for r in 0..h {
                    for col in 0..w {
                        let sc = if flip { w - 1 - col } else { col };
                        let sr = reflect(r as isize + dy, h);
                        let scc = reflect(sc as isize + dx, w);
                        let v = src[c * h * w + sr * w + scc] + offsets[c];
                        x[c * h * w + r * w + col] = if brightness > 0.0 { v.clamp(-1.0, 1.0) } else { v };
                    }
                }
            }
        }
    }
    Ok(())
}

/// τ(x): applies every op of `spec` in order, then renormalises if asked.
pub fn augment(rng: &mut Rng, x: &[f64], spec: &AugmentationSpec, class_basis: Option<&Matrix>) -> Result<Vec<f64>> {
    spec.validate(x.len())?;
    let mut out = x.to_vec();
    for op in &spec.ops {
        apply(rng, &mut out, op, class_basis)?;
    }
    if spec.renormalize {
        let n = dot(&out, &out).sqrt();
        if n < 1e-12 || !n.is_finite() {
            return Err(Error::ZeroVector("augment"));
        }
        out.iter_mut().for_each(|v| *v /= n);
    }
    if out.iter().any(|v| !v.is_finite()) {
        return Err(Error::NonFinite("augment"));
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::gen_subspace_mixture;

    fn spec(ops: Vec<Augmentation>, renormalize: bool) -> AugmentationSpec {
        AugmentationSpec {
            ops,
            count: 1,
            renormalize,
        }
    }

    #[test]
    fn zero_noise_is_identity() {
        let mut rng = Rng::new(1);
        let x = vec![0.3, -0.4, 1.2];
        let s = spec(vec![Augmentation::AdditiveNoise { sigma: 0.0 }], false);
        assert_eq!(augment(&mut rng, &x, &s, None).unwrap(), x);
    }

    #[test]
    fn forced_flip_reverses_row() {
        let mut rng = Rng::new(1);
        let shape = ImageShape {
            channels: 1,
            height: 1,
            width: 4,
        };
        let s = spec(
            vec![Augmentation::PixelCropFlip {
                shape,
                pad: 0,
                flip_prob: 1.0,
                brightness: 0.0,
            }],
            false,
        );
        let out = augment(&mut rng, &[1.0, 2.0, 3.0, 4.0], &s, None).unwrap();
        assert_eq!(out, vec![4.0, 3.0, 2.0, 1.0]);
    }

    #[test]
    fn reflect_padding_indices() {
        assert_eq!(reflect(-1, 4), 1);
        assert_eq!(reflect(-2, 4), 2);
        assert_eq!(reflect(4, 4), 2);
        assert_eq!(reflect(5, 4), 1);
        assert_eq!(reflect(2, 4), 2);
    }

    #[test]
    fn jitter_preserves_distance_to_class_subspace() {
        let mut rng = Rng::new(2);
        let (data, mix) = gen_subspace_mixture(&mut rng, 12, 2, 3, 20, 0.05).unwrap();
        let labels = data.labels().unwrap();
        let s = spec(
            vec![Augmentation::SubspaceJitter {
                strength: 0.5,
                sign_flip: true,
            }],
            false,
        );
        let residual = |b: &Matrix, v: &[f64]| {
            let inside = lift(b, &project(b, v));
            v.iter().zip(&inside).map(|(a, c)| (a - c) * (a - c)).sum::<f64>().sqrt()
        };
        for i in 0..data.len() {
            let x = data.samples().sample(i);
            let basis = &mix.bases[labels[i]];
            let y = augment(&mut rng, &x, &s, Some(basis)).unwrap();
            assert!((residual(basis, &x) - residual(basis, &y)).abs() < 1e-12);
        }

        // Renormalisation divides the preserved residual by the norm of the
        // jittered sample.
        let raw = s.clone();
        let unit = spec(s.ops.clone(), true);
        for i in 0..data.len() {
            let x = data.samples().sample(i);
            let basis = &mix.bases[labels[i]];
            let y_raw = augment(&mut Rng::new(i as u64), &x, &raw, Some(basis)).unwrap();
            let y = augment(&mut Rng::new(i as u64), &x, &unit, Some(basis)).unwrap();
            assert!((dot(&y, &y) - 1.0).abs() < 1e-8);
            let expected = residual(basis, &x) / dot(&y_raw, &y_raw).sqrt();
            assert!((residual(basis, &y) - expected).abs() < 1e-12);
        }
    }

    #[test]
    fn rotation_keeps_sample_in_subspace() {
        let mut rng = Rng::new(3);
        let (data, mix) = gen_subspace_mixture(&mut rng, 8, 2, 2, 5, 0.0).unwrap();
        let s = spec(
            vec![Augmentation::RotationInClassPlane { max_angle: 1.0 }],
            true,
        );
        let x = data.samples().sample(0);
        let b = &mix.bases[data.labels().unwrap()[0]];
        let y = augment(&mut rng, &x, &s, Some(b)).unwrap();
        let back = lift(b, &project(b, &y));
        assert!(y.iter().zip(&back).all(|(a, c)| (a - c).abs() < 1e-12));
        assert!(augment(&mut rng, &x, &s, None).is_err());
    }

    #[test]
    fn synthetic_default_preserves_unit_norm_and_finiteness() {
        let mut rng = Rng::new(4);
        let (data, _) = gen_subspace_mixture(&mut rng, 16, 3, 1, 50, 0.05).unwrap();
        let s = AugmentationSpec::synthetic_default();
        for i in 0..data.len() {
            let y = augment(&mut rng, &data.samples().sample(i), &s, None).unwrap();
            assert!(y.iter().all(|v| v.is_finite()));
            assert!((dot(&y, &y).sqrt() - 1.0).abs() < 1e-8);
        }
    }

    #[test]
    fn invalid_specs() {
        let mut rng = Rng::new(5);
        let x = [1.0, 0.0];
        let zero = AugmentationSpec {
            ops: vec![],
            count: 0,
            renormalize: false,
        };
        assert!(augment(&mut rng, &x, &zero, None).is_err());
        let loud = spec(vec![Augmentation::AdditiveNoise { sigma: 5.0 }], false);
        assert!(augment(&mut rng, &x, &loud, None).is_err());
    }
}
